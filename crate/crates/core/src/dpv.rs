//! Affine parameter-varying embeddings of the variational dynamics.
//!
//! An embedding supplies matrices `A(p) = A0 + sum_i p_i A_i` (likewise
//! `B`, `C`, `D`) over a parameter box, together with a scheduling map
//! `p = psi(x, u)` such that `A(psi(x, u))` reproduces the Jacobian of the
//! system at every sampled point of a bounded working box.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::system::{check_shape, AxisBox, Interval, NonlinearSystem, StateSpace};

pub type SchedulingFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// Tolerance on `A(psi(x, u)) - df/dx` and friends.
pub const AFFINE_TOL: f64 = 1e-9;
/// Tolerance on `psi(x, u)` lying in the parameter box.
pub const CONTAINMENT_TOL: f64 = 1e-12;
/// Number of quasi-random validation samples taken at construction.
pub const DEFAULT_SAMPLES: usize = 1000;
/// Largest parameter count accepted by [`DpvEmbedding::vertices`].
pub const MAX_PARAMS: usize = 20;

/// Named scheduling map.
#[derive(Clone)]
pub struct Scheduling {
    pub id: String,
    pub map: SchedulingFn,
}

impl fmt::Debug for Scheduling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scheduling({})", self.id)
    }
}

impl Scheduling {
    pub fn new(id: impl Into<String>, map: SchedulingFn) -> Self {
        Self { id: id.into(), map }
    }

    /// Scheduling with no parameters.
    pub fn none() -> Self {
        Self::new("none", Arc::new(|_: &[f64], _: &[f64]| Vec::new()))
    }

    /// `p = x1^2`.
    pub fn x1_squared() -> Self {
        Self::new("x1_squared", Arc::new(|x: &[f64], _: &[f64]| vec![x[0] * x[0]]))
    }

    pub fn eval(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        (self.map)(x, u)
    }
}

/// Coefficients of the affine maps; index 0 is the constant term.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineFamily {
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub c: Vec<DMatrix<f64>>,
    pub d: Vec<DMatrix<f64>>,
}

impl AffineFamily {
    pub fn constant(ss: &StateSpace) -> Self {
        Self {
            a: vec![ss.a.clone()],
            b: vec![ss.b.clone()],
            c: vec![ss.c.clone()],
            d: vec![ss.d.clone()],
        }
    }

    pub fn n_p(&self) -> usize {
        self.a.len().saturating_sub(1)
    }

    fn check(&self, sys: &NonlinearSystem) -> Result<()> {
        let n_terms = self.a.len();
        if n_terms == 0 {
            return Err(Error::Embedding("affine family needs a constant term".into()));
        }
        for (name, list) in [("B", &self.b), ("C", &self.c), ("D", &self.d)] {
            if list.len() != n_terms {
                return Err(Error::Embedding(format!(
                    "{name} has {} coefficient matrices, A has {n_terms}",
                    list.len()
                )));
            }
        }
        let (n_x, n_u, n_y) = (sys.n_x, sys.n_u, sys.n_y);
        for i in 0..n_terms {
            check_shape(&format!("A{i}"), &self.a[i], n_x, n_x)?;
            check_shape(&format!("B{i}"), &self.b[i], n_x, n_u)?;
            check_shape(&format!("C{i}"), &self.c[i], n_y, n_x)?;
            check_shape(&format!("D{i}"), &self.d[i], n_y, n_u)?;
        }
        Ok(())
    }

    pub fn eval(&self, p: &[f64]) -> StateSpace {
        let combine = |list: &[DMatrix<f64>]| {
            let mut m = list[0].clone();
            for (k, pk) in p.iter().enumerate() {
                m += &list[k + 1] * *pk;
            }
            m
        };
        StateSpace {
            a: combine(&self.a),
            b: combine(&self.b),
            c: combine(&self.c),
            d: combine(&self.d),
        }
    }
}

/// Bounded box on which the embedding is validated.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkingBox {
    pub state: AxisBox,
    pub input: AxisBox,
}

impl WorkingBox {
    /// The system's own boxes; fails if any coordinate is unbounded.
    pub fn from_system(sys: &NonlinearSystem) -> Result<Self> {
        let wb = Self {
            state: sys.state_box.clone(),
            input: sys.input_box.clone(),
        };
        wb.check_bounded()?;
        Ok(wb)
    }

    fn check_bounded(&self) -> Result<()> {
        if !self.state.is_bounded() || !self.input.is_bounded() {
            return Err(Error::Embedding(
                "working box must be bounded; shrink unbounded state/input coordinates".into(),
            ));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.state.dim() + self.input.dim()
    }

    /// Maps a unit-cube point to `(x, u)`.
    pub fn point(&self, s: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n_x = self.state.dim();
        (self.state.from_unit(&s[..n_x]), self.input.from_unit(&s[n_x..]))
    }

    /// Deterministic quasi-random samples of `(x, u)`.
    pub fn samples(&self, n: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
        halton(n, self.dim()).iter().map(|s| self.point(s)).collect()
    }
}

/// Result of checking an embedding against the system Jacobians.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub samples: usize,
    /// Max absolute mismatch for A, B, C, D.
    pub max_mismatch: [f64; 4],
    pub worst_point: Option<(Vec<f64>, Vec<f64>)>,
    pub containment_violations: usize,
    pub worst_containment: f64,
    pub worst_containment_point: Option<(Vec<f64>, Vec<f64>)>,
    /// Coordinate-wise range of the sampled scheduling values.
    pub sampled_range: Vec<(f64, f64)>,
}

impl ValidationReport {
    pub fn max_affine_mismatch(&self) -> f64 {
        self.max_mismatch.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_valid(&self) -> bool {
        self.max_affine_mismatch() <= AFFINE_TOL && self.containment_violations == 0
    }
}

/// Affine parameter-varying embedding of a system's differential form.
#[derive(Debug, Clone)]
pub struct DpvEmbedding {
    pub system: NonlinearSystem,
    pub scheduling: Scheduling,
    pub param_box: AxisBox,
    pub coeffs: AffineFamily,
    pub working: WorkingBox,
    pub validation: ValidationReport,
}

/// Corners of the parameter box with their state-space matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexSet {
    pub points: Vec<Vec<f64>>,
    pub matrices: Vec<StateSpace>,
}

impl VertexSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<f64>, &StateSpace)> {
        self.points.iter().zip(&self.matrices)
    }
}

/// Builds an embedding and validates it on [`DEFAULT_SAMPLES`] points.
pub fn embed(
    sys: &NonlinearSystem,
    scheduling: Scheduling,
    param_box: AxisBox,
    coeffs: AffineFamily,
    working: WorkingBox,
) -> Result<DpvEmbedding> {
    coeffs.check(sys)?;
    if param_box.dim() != coeffs.n_p() {
        return Err(Error::Dimension {
            context: "parameter box".into(),
            expected: coeffs.n_p(),
            got: param_box.dim(),
        });
    }
    if !param_box.is_bounded() {
        return Err(Error::Embedding("parameter box must be bounded".into()));
    }
    working.check_bounded()?;
    if working.state.dim() != sys.n_x || working.input.dim() != sys.n_u {
        return Err(Error::Embedding("working box dimensions do not match the system".into()));
    }
    if !working.state.is_subset_of(&sys.state_box) || !working.input.is_subset_of(&sys.input_box) {
        return Err(Error::Embedding("working box must lie inside the system boxes".into()));
    }
    let mut emb = DpvEmbedding {
        system: sys.clone(),
        scheduling,
        param_box,
        coeffs,
        working,
        validation: ValidationReport {
            samples: 0,
            max_mismatch: [0.0; 4],
            worst_point: None,
            containment_violations: 0,
            worst_containment: 0.0,
            worst_containment_point: None,
            sampled_range: Vec::new(),
        },
    };
    let samples = emb.working.samples(DEFAULT_SAMPLES);
    let report = emb.validate(&samples)?;
    if report.containment_violations > 0 {
        let (x, u) = report.worst_containment_point.clone().unwrap_or_default();
        return Err(Error::Embedding(format!(
            "scheduling map leaves the parameter box by {:.3e} at x = {x:?}, u = {u:?}",
            report.worst_containment
        )));
    }
    if report.max_affine_mismatch() > AFFINE_TOL {
        let (x, u) = report.worst_point.clone().unwrap_or_default();
        return Err(Error::Embedding(format!(
            "affine matrices differ from the Jacobians by {:.3e} at x = {x:?}, u = {u:?}",
            report.max_affine_mismatch()
        )));
    }
    emb.validation = report;
    Ok(emb)
}

impl DpvEmbedding {
    pub fn n_p(&self) -> usize {
        self.coeffs.n_p()
    }

    pub fn matrices_at(&self, p: &[f64]) -> StateSpace {
        self.coeffs.eval(p)
    }

    /// All `2^n_p` corners, first coordinate most significant, low end first.
    pub fn vertices(&self) -> Result<VertexSet> {
        let n_p = self.n_p();
        if n_p > MAX_PARAMS {
            return Err(Error::TooManyParameters(n_p));
        }
        let count = 1usize << n_p;
        let points: Vec<Vec<f64>> = (0..count)
            .map(|k| {
                self.param_box
                    .intervals()
                    .iter()
                    .enumerate()
                    .map(|(i, iv)| {
                        if (k >> (n_p - 1 - i)) & 1 == 1 {
                            iv.hi
                        } else {
                            iv.lo
                        }
                    })
                    .collect()
            })
            .collect();
        let matrices = points.iter().map(|p| self.coeffs.eval(p)).collect();
        Ok(VertexSet { points, matrices })
    }

    /// Compares `A(psi(x, u))` etc. with the system Jacobians at `samples`.
    pub fn validate(&self, samples: &[(Vec<f64>, Vec<f64>)]) -> Result<ValidationReport> {
        let n_p = self.n_p();
        let mut report = ValidationReport {
            samples: samples.len(),
            max_mismatch: [0.0; 4],
            worst_point: None,
            containment_violations: 0,
            worst_containment: 0.0,
            worst_containment_point: None,
            sampled_range: vec![(f64::INFINITY, f64::NEG_INFINITY); n_p],
        };
        let mut worst = -1.0;
        for (x, u) in samples {
            let p = self.scheduling.eval(x, u);
            if p.len() != n_p {
                return Err(Error::Dimension {
                    context: "scheduling map output".into(),
                    expected: n_p,
                    got: p.len(),
                });
            }
            for (k, (&pk, iv)) in p.iter().zip(self.param_box.intervals()).enumerate() {
                let r = &mut report.sampled_range[k];
                r.0 = r.0.min(pk);
                r.1 = r.1.max(pk);
                let excess = (iv.lo - pk).max(pk - iv.hi);
                if excess > CONTAINMENT_TOL {
                    report.containment_violations += 1;
                    if excess > report.worst_containment {
                        report.worst_containment = excess;
                        report.worst_containment_point = Some((x.clone(), u.clone()));
                    }
                }
            }
            let jac = self.system.eval_jacobians(x, u)?;
            let aff = self.coeffs.eval(&p);
            let mut local = 0.0_f64;
            for (k, ((_, m1), (_, m2))) in jac.matrices().iter().zip(aff.matrices().iter()).enumerate() {
                let diff = (*m1 - *m2).amax();
                report.max_mismatch[k] = report.max_mismatch[k].max(diff);
                local = local.max(diff);
            }
            if local > worst {
                worst = local;
                report.worst_point = Some((x.clone(), u.clone()));
            }
        }
        Ok(report)
    }

    /// Deterministic quasi-random points of the parameter box.
    pub fn param_samples(&self, n: usize) -> Vec<Vec<f64>> {
        halton(n, self.n_p())
            .iter()
            .map(|s| self.param_box.from_unit(s))
            .collect()
    }
}

/// Duffing embedding `p = x1^2` with `A(p) = [[0, 1], [-b - 3 c p, -a]]`.
///
/// `c_row` is the output row of `C` (position or velocity).
pub fn duffing_family(a: f64, b: f64, c: f64, c_row: [f64; 2]) -> AffineFamily {
    AffineFamily {
        a: vec![
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -b, -a]),
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, -3.0 * c, 0.0]),
        ],
        b: vec![DMatrix::from_row_slice(2, 1, &[0.0, 1.0]), DMatrix::zeros(2, 1)],
        c: vec![DMatrix::from_row_slice(1, 2, &c_row), DMatrix::zeros(1, 2)],
        d: vec![DMatrix::zeros(1, 1), DMatrix::zeros(1, 1)],
    }
}

/// Embedding of a system with constant Jacobians (no parameters).
pub fn constant_embedding(sys: &NonlinearSystem, working: WorkingBox) -> Result<DpvEmbedding> {
    let n_x = sys.n_x;
    let x0 = vec![0.0; n_x];
    let u0 = vec![0.0; sys.n_u];
    let ss = sys.eval_jacobians(&x0, &u0)?;
    embed(
        sys,
        Scheduling::none(),
        AxisBox(Vec::new()),
        AffineFamily::constant(&ss),
        working,
    )
}

/// Unit box `[-r, r]^n`.
pub fn symmetric_box(dim: usize, r: f64) -> AxisBox {
    AxisBox(vec![Interval { lo: -r, hi: r }; dim])
}

const PRIMES: [u32; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

/// First `n` points of the Halton sequence in `[0, 1]^dim`, with the
/// corner `0` and the point `1` on each axis included via the endpoints
/// of the first two samples.
pub fn halton(n: usize, dim: usize) -> Vec<Vec<f64>> {
    let radical = |mut i: u64, base: u64| {
        let mut f = 1.0;
        let mut r = 0.0;
        while i > 0 {
            f /= base as f64;
            r += f * (i % base) as f64;
            i /= base;
        }
        r
    };
    (0..n)
        .map(|k| {
            (0..dim)
                .map(|j| match k {
                    0 => 0.0,
                    1 => 1.0,
                    _ => radical(k as u64 - 1, u64::from(PRIMES[j % PRIMES.len()])),
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{duffing, scalar_lti, DuffingOutput};

    fn duffing_embedding(p_hi: f64) -> Result<DpvEmbedding> {
        let sys = duffing(3.3, 7.9, 1.0, DuffingOutput::Position);
        let s2 = std::f64::consts::SQRT_2;
        let working = WorkingBox {
            state: AxisBox::from_bounds(&[(-s2, s2), (-10.0, 10.0)]).unwrap(),
            input: AxisBox::from_bounds(&[(-5.0, 5.0)]).unwrap(),
        };
        embed(
            &sys,
            Scheduling::x1_squared(),
            AxisBox::from_bounds(&[(0.0, p_hi)]).unwrap(),
            duffing_family(3.3, 7.9, 1.0, [1.0, 0.0]),
            working,
        )
    }

    #[test]
    fn duffing_embedding_is_valid() {
        let emb = duffing_embedding(2.0).unwrap();
        assert!(emb.validation.is_valid());
        assert!(emb.validation.max_affine_mismatch() < 1e-12);
        assert_eq!(emb.validation.samples, DEFAULT_SAMPLES);
        let (lo, hi) = emb.validation.sampled_range[0];
        assert_eq!(lo, 0.0);
        assert!((hi - 2.0).abs() < 1e-12);
    }

    #[test]
    fn duffing_vertices() {
        let emb = duffing_embedding(2.0).unwrap();
        let v = emb.vertices().unwrap();
        assert_eq!(v.points, vec![vec![0.0], vec![2.0]]);
        assert!((v.matrices[0].a[(1, 0)] + 7.9).abs() < 1e-12);
        assert!((v.matrices[1].a[(1, 0)] + 13.9).abs() < 1e-12);
    }

    #[test]
    fn wrong_box_reports_containment() {
        match duffing_embedding(1.0) {
            Err(Error::Embedding(msg)) => {
                assert!(msg.contains("leaves the parameter box"), "{msg}");
                // the worst point sits at the edge |x1| = sqrt(2)
                assert!(msg.contains("1.41"), "{msg}");
            }
            other => panic!("expected containment error, got {other:?}"),
        }
    }

    #[test]
    fn unbounded_working_box_rejected() {
        let sys = duffing(3.3, 7.9, 1.0, DuffingOutput::Position);
        assert!(WorkingBox::from_system(&sys).is_err());
    }

    #[test]
    fn lti_single_vertex() {
        let sys = scalar_lti(-1.0, 1.0, 1.0, 0.0);
        let emb = constant_embedding(
            &sys,
            WorkingBox {
                state: symmetric_box(1, 1.0),
                input: symmetric_box(1, 1.0),
            },
        )
        .unwrap();
        assert_eq!(emb.validation.max_affine_mismatch(), 0.0);
        let v = emb.vertices().unwrap();
        assert_eq!(v.len(), 1);
        assert!(v.points[0].is_empty());
        assert_eq!(v.matrices[0].a[(0, 0)], -1.0);
    }

    #[test]
    fn two_parameter_corner_order() {
        let sys = scalar_lti(-1.0, 1.0, 1.0, 0.0);
        let ss = sys.eval_jacobians(&[0.0], &[0.0]).unwrap();
        let z = DMatrix::zeros(1, 1);
        let mut fam = AffineFamily::constant(&ss);
        for _ in 0..2 {
            fam.a.push(z.clone());
            fam.b.push(z.clone());
            fam.c.push(z.clone());
            fam.d.push(z.clone());
        }
        let emb = embed(
            &sys,
            Scheduling::new("half", Arc::new(|_: &[f64], _: &[f64]| vec![0.5, 0.5])),
            AxisBox::from_bounds(&[(0.0, 1.0), (0.0, 1.0)]).unwrap(),
            fam,
            WorkingBox {
                state: symmetric_box(1, 1.0),
                input: symmetric_box(1, 1.0),
            },
        )
        .unwrap();
        let v = emb.vertices().unwrap();
        assert_eq!(
            v.points,
            vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]
        );
    }

    #[test]
    fn perturbed_coefficients_detected() {
        let emb = duffing_embedding(2.0).unwrap();
        let mut bad = emb.clone();
        bad.coeffs.a[0][(1, 1)] += 1e-3;
        let report = bad.validate(&bad.working.samples(DEFAULT_SAMPLES)).unwrap();
        assert!((report.max_mismatch[0] - 1e-3).abs() < 1e-9);
        assert!(!report.is_valid());
        let sys = emb.system.clone();
        let err = embed(
            &sys,
            Scheduling::x1_squared(),
            emb.param_box.clone(),
            bad.coeffs.clone(),
            emb.working.clone(),
        );
        assert!(matches!(err, Err(Error::Embedding(_))));
    }

    #[test]
    fn coefficient_shape_errors() {
        let sys = duffing(3.3, 7.9, 1.0, DuffingOutput::Position);
        let mut fam = duffing_family(3.3, 7.9, 1.0, [1.0, 0.0]);
        fam.b[1] = DMatrix::zeros(3, 1);
        let err = embed(
            &sys,
            Scheduling::x1_squared(),
            AxisBox::from_bounds(&[(0.0, 2.0)]).unwrap(),
            fam,
            WorkingBox {
                state: symmetric_box(2, 1.0),
                input: symmetric_box(1, 1.0),
            },
        );
        assert!(matches!(err, Err(Error::Dimension { .. })));
    }

    #[test]
    fn too_many_parameters() {
        let sys = scalar_lti(-1.0, 1.0, 1.0, 0.0);
        let ss = sys.eval_jacobians(&[0.0], &[0.0]).unwrap();
        let z = DMatrix::zeros(1, 1);
        let mut fam = AffineFamily::constant(&ss);
        for _ in 0..21 {
            fam.a.push(z.clone());
            fam.b.push(z.clone());
            fam.c.push(z.clone());
            fam.d.push(z.clone());
        }
        let emb = DpvEmbedding {
            system: sys,
            scheduling: Scheduling::none(),
            param_box: AxisBox::from_bounds(&[(0.0, 1.0); 21]).unwrap(),
            coeffs: fam,
            working: WorkingBox {
                state: symmetric_box(1, 1.0),
                input: symmetric_box(1, 1.0),
            },
            validation: duffing_embedding(2.0).unwrap().validation,
        };
        assert!(matches!(emb.vertices(), Err(Error::TooManyParameters(21))));
    }

    #[test]
    fn halton_is_in_unit_cube_and_deterministic() {
        let a = halton(50, 3);
        assert_eq!(a, halton(50, 3));
        assert!(a.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    }
}
