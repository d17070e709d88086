//! Gain and dissipativity certificates over a DPV embedding.
//!
//! Each analysis assembles the notion's matrix inequalities at every vertex
//! of the parameter box, solves the resulting SDP and re-checks the answer
//! at the vertices and at interior parameter points.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::dpv::{halton, DpvEmbedding};
use crate::error::{Error, Result};
use crate::lmi::{
    h2_lmis, l2_lmi, linf_lmis, min_eigenvalue, passivity_lmi, qsr_lmi, Assignment, MatVar,
    QsrSupply, ScalarVar, Sense, SymExpr, VarId,
};
use crate::sdp::{self, SdpProblem, SdpSolution, Status};
use crate::system::{AxisBox, EquilibriumPoint, StateSpace};

/// Lower eigenvalue bound imposed on every storage matrix.
pub const M_FLOOR: f64 = 1e-6;
/// Smallest eigenvalue a certified `M` may have.
pub const M_MIN_EIG: f64 = 1e-8;
/// Residual tolerance for certificate checks.
pub const RESIDUAL_TOL: f64 = 1e-7;
/// Interior parameter points used by [`verify_certificate`].
pub const INTERIOR_SAMPLES: usize = 200;
/// Samples for the factorization consistency checks.
pub const STORAGE_SAMPLES: usize = 200;

const M_ID: VarId = VarId(0);
const GAMMA_ID: VarId = VarId(1);
const MU_ID: VarId = VarId(2);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Notion {
    Li2,
    Linf,
    Passivity,
    Hg2,
    Qsr,
}

impl Notion {
    pub fn as_str(self) -> &'static str {
        match self {
            Notion::Li2 => "li2",
            Notion::Linf => "linf",
            Notion::Passivity => "passivity",
            Notion::Hg2 => "hg2",
            Notion::Qsr => "qsr",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "li2" => Notion::Li2,
            "linf" => Notion::Linf,
            "passivity" => Notion::Passivity,
            "hg2" => Notion::Hg2,
            "qsr" => Notion::Qsr,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown notion '{other}' (expected li2, linf, passivity, hg2 or qsr)"
                )))
            }
        })
    }
}

impl fmt::Display for Notion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VertexResidual {
    pub vertex: usize,
    pub point: Vec<f64>,
    pub constraint: String,
    pub sense: Sense,
    /// Smallest eigenvalue of the constraint written as `>= 0`.
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainCertificate {
    pub notion: Notion,
    pub gain: Option<f64>,
    pub m: DMatrix<f64>,
    pub supply: QsrSupply,
    pub kappa: Option<f64>,
    pub mu: Option<f64>,
    pub vertex_residuals: Vec<VertexResidual>,
    pub implies_incremental: bool,
    pub implies_stability: bool,
}

impl GainCertificate {
    pub fn worst_residual(&self) -> f64 {
        self.vertex_residuals
            .iter()
            .map(|r| r.min_eigenvalue)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Outcome of one `kappa` in the peak-gain line search.
#[derive(Debug, Clone, PartialEq)]
pub struct KappaResult {
    pub kappa: f64,
    pub status: Status,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
enum Target {
    Li2,
    Linf(f64),
    Passivity,
    Hg2,
    Qsr(QsrSupply),
}

impl Target {
    fn notion(&self) -> Notion {
        match self {
            Target::Li2 => Notion::Li2,
            Target::Linf(_) => Notion::Linf,
            Target::Passivity => Notion::Passivity,
            Target::Hg2 => Notion::Hg2,
            Target::Qsr(_) => Notion::Qsr,
        }
    }
}

struct Handles {
    m: MatVar,
    gamma: Option<ScalarVar>,
    mu: Option<ScalarVar>,
}

/// Vertex problem for `target` over the given parameter points.
fn build(target: &Target, points: &[StateSpace], n_x: usize) -> Result<(SdpProblem, Handles)> {
    let mut p = SdpProblem::new();
    let m = p.add_symmetric("M", n_x);
    debug_assert_eq!(m.id, M_ID);
    p.bound_matrix(m, Some(M_FLOOR), None);
    let mut h = Handles {
        m,
        gamma: None,
        mu: None,
    };
    match target {
        Target::Li2 | Target::Hg2 => {
            let name = if *target == Target::Li2 { "gamma_sq" } else { "gamma" };
            let g = p.add_scalar(name);
            p.bound_scalar(g, Some(0.0), None);
            p.minimize(g, 1.0);
            h.gamma = Some(g);
        }
        Target::Linf(_) => {
            let g = p.add_scalar("gamma");
            let mu = p.add_scalar("mu");
            p.bound_scalar(g, Some(0.0), None);
            p.bound_scalar(mu, Some(0.0), None);
            p.minimize(g, 1.0);
            h.gamma = Some(g);
            h.mu = Some(mu);
        }
        Target::Passivity | Target::Qsr(_) => {}
    }
    for (k, ss) in points.iter().enumerate() {
        for mut c in lmis_at(target, ss, &h)? {
            c.name = format!("vertex {k} {}", c.name);
            p.add_constraint(c);
        }
    }
    Ok((p, h))
}

fn lmis_at(target: &Target, ss: &StateSpace, h: &Handles) -> Result<Vec<SymExpr>> {
    Ok(match target {
        Target::Li2 => vec![l2_lmi(ss, h.m, h.gamma.expect("gamma"))?],
        Target::Linf(kappa) => {
            let (a, b) = linf_lmis(ss, h.m, h.mu.expect("mu"), h.gamma.expect("gamma"), *kappa)?;
            vec![a, b]
        }
        Target::Passivity => vec![passivity_lmi(ss, h.m)?],
        Target::Hg2 => {
            let (a, b) = h2_lmis(ss, h.m, h.gamma.expect("gamma"))?;
            vec![a, b]
        }
        Target::Qsr(supply) => vec![qsr_lmi(ss, supply, h.m)?],
    })
}

fn parse_vertex(name: &str) -> (usize, String) {
    let rest = name.strip_prefix("vertex ").unwrap_or(name);
    match rest.split_once(' ') {
        Some((k, c)) => (k.parse().unwrap_or(0), c.to_string()),
        None => (0, rest.to_string()),
    }
}

fn residuals_at(
    problem: &SdpProblem,
    values: &Assignment,
    points: &[Vec<f64>],
) -> Vec<VertexResidual> {
    problem
        .constraints
        .iter()
        .map(|c| {
            let (vertex, constraint) = parse_vertex(&c.name);
            VertexResidual {
                vertex,
                point: points.get(vertex).cloned().unwrap_or_default(),
                constraint,
                sense: c.sense,
                min_eigenvalue: c.residual(values),
            }
        })
        .collect()
}

fn failure(sol: &SdpSolution, what: &str) -> Error {
    match sol.status {
        Status::Infeasible => Error::Infeasible(what.to_string()),
        _ => Error::Numerical(format!("{what}: {}", sol.message)),
    }
}

fn certify(emb: &DpvEmbedding, target: Target, what: &str) -> Result<GainCertificate> {
    let verts = emb.vertices()?;
    let (problem, h) = build(&target, &verts.matrices, emb.system.n_x)?;
    let sol = sdp::solve(&problem)?;
    if !sol.status.is_success() {
        return Err(failure(&sol, what));
    }
    let m = sol.matrix(h.m).expect("M assigned");
    let (n_u, n_y) = (emb.system.n_u, emb.system.n_y);
    let gamma = h.gamma.and_then(|g| sol.scalar(g));
    let mu = h.mu.and_then(|v| sol.scalar(v));
    let (gain, supply, kappa) = match &target {
        Target::Li2 => {
            let g = gamma.expect("gamma").max(0.0).sqrt();
            (Some(g), QsrSupply::l2(g, n_u, n_y), None)
        }
        Target::Linf(k) => {
            let w = mu.expect("mu");
            (gamma, QsrSupply::input_weight(w, n_u, n_y), Some(*k))
        }
        Target::Hg2 => {
            let g = gamma.expect("gamma");
            (Some(g), QsrSupply::input_weight(g, n_u, n_y), None)
        }
        Target::Passivity => (None, QsrSupply::passivity(n_u), None),
        Target::Qsr(s) => (None, s.clone(), None),
    };
    let nsd = supply.r_is_nsd();
    let cert = GainCertificate {
        notion: target.notion(),
        gain,
        m,
        supply,
        kappa,
        mu: if target.notion() == Notion::Linf { mu } else { None },
        vertex_residuals: residuals_at(&problem, &sol.assignment, &verts.points),
        implies_incremental: nsd,
        implies_stability: nsd,
    };
    if min_eigenvalue(&cert.m) < M_MIN_EIG {
        return Err(Error::Numerical("storage matrix is not positive definite".into()));
    }
    Ok(cert)
}

/// Minimizes `gamma^2` over the vertex L2 inequalities.
pub fn li2_gain(emb: &DpvEmbedding) -> Result<GainCertificate> {
    certify(emb, Target::Li2, "no quadratic constant-M certificate at any gamma")
}

/// Default line-search grid: 24 log-spaced points in `[1e-3, 1e3]`.
pub fn default_kappa_grid() -> Vec<f64> {
    log_grid(1e-3, 1e3, 24)
}

/// `n` log-spaced points in `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Peak-gain certificate at a fixed `kappa`.
pub fn linf_gain_at(emb: &DpvEmbedding, kappa: f64) -> Result<GainCertificate> {
    certify(emb, Target::Linf(kappa), "no peak-gain certificate at this kappa")
}

/// Peak-to-peak gain bound: minimizes `gamma` for each `kappa` of the grid,
/// then refines with 8 log-spaced points between the neighbours of the best.
pub fn linf_gain(emb: &DpvEmbedding, kappa_grid: &[f64]) -> Result<(GainCertificate, Vec<KappaResult>)> {
    if kappa_grid.is_empty() || kappa_grid.iter().any(|k| !(*k > 0.0) || !k.is_finite()) {
        return Err(Error::InvalidArgument("kappa grid must be non-empty and positive".into()));
    }
    let mut grid = kappa_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut log = Vec::new();
    let mut best: Option<GainCertificate> = None;
    let mut best_idx = 0;
    let run = |k: f64, log: &mut Vec<KappaResult>| -> Result<Option<GainCertificate>> {
        match linf_gain_at(emb, k) {
            Ok(c) => {
                log.push(KappaResult {
                    kappa: k,
                    status: Status::Optimal,
                    gamma: c.gain,
                });
                Ok(Some(c))
            }
            Err(Error::Infeasible(_)) => {
                log.push(KappaResult {
                    kappa: k,
                    status: Status::Infeasible,
                    gamma: None,
                });
                Ok(None)
            }
            Err(Error::Numerical(_)) => {
                log.push(KappaResult {
                    kappa: k,
                    status: Status::NumericalFailure,
                    gamma: None,
                });
                Ok(None)
            }
            Err(e) => Err(e),
        }
    };
    for (i, &k) in grid.iter().enumerate() {
        if let Some(c) = run(k, &mut log)? {
            if best.as_ref().is_none_or(|b| c.gain < b.gain) {
                best = Some(c);
                best_idx = i;
            }
        }
    }
    let Some(mut best) = best else {
        let listing = log
            .iter()
            .map(|r| format!("kappa={:.4e}: {:?}", r.kappa, r.status))
            .collect::<Vec<_>>()
            .join(", ");
        return Err(Error::Infeasible(format!(
            "no peak-gain certificate at any kappa ({listing})"
        )));
    };
    if grid.len() > 1 {
        let lo = grid[best_idx.saturating_sub(1)];
        let hi = grid[(best_idx + 1).min(grid.len() - 1)];
        let fine = log_grid(lo, hi, 10);
        for &k in &fine[1..9] {
            if grid.contains(&k) {
                continue;
            }
            if let Some(c) = run(k, &mut log)? {
                if c.gain < best.gain {
                    best = c;
                }
            }
        }
    }
    best.vertex_residuals.sort_by_key(|r| r.vertex);
    Ok((best, log))
}

/// Feasibility of the incremental passivity inequality at all vertices.
pub fn passivity(emb: &DpvEmbedding) -> Result<GainCertificate> {
    if emb.system.n_u != emb.system.n_y {
        return Err(Error::Dimension {
            context: "passivity needs n_u = n_y".into(),
            expected: emb.system.n_u,
            got: emb.system.n_y,
        });
    }
    certify(emb, Target::Passivity, "no constant-M incremental passivity certificate")
}

/// Minimizes `gamma` over the generalized H2 inequalities.
pub fn hg2_gain(emb: &DpvEmbedding) -> Result<GainCertificate> {
    let verts = emb.vertices()?;
    if verts.matrices.iter().any(|ss| ss.d.amax() != 0.0) {
        return Err(Error::DirectFeedthrough);
    }
    certify(emb, Target::Hg2, "no generalized H2 certificate")
}

/// Feasibility of the general `(Q, S, R)` inequality at all vertices.
pub fn qsr_feasibility(emb: &DpvEmbedding, supply: &QsrSupply) -> Result<GainCertificate> {
    if supply.n_u() != emb.system.n_u || supply.n_y() != emb.system.n_y {
        return Err(Error::Dimension {
            context: "supply (n_u + n_y)".into(),
            expected: emb.system.n_u + emb.system.n_y,
            got: supply.n_u() + supply.n_y(),
        });
    }
    certify(emb, Target::Qsr(supply.clone()), "no constant-M certificate for this supply")
}

/// Independent re-check of a certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub vertex_residuals: Vec<VertexResidual>,
    pub worst_vertex: f64,
    pub worst_interior: f64,
    pub interior_samples: usize,
    pub m_min_eigenvalue: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn spec_of(cert: &GainCertificate) -> Result<(Target, Assignment)> {
    let mut a = Assignment::new();
    let n = cert.m.nrows();
    a.set_matrix(MatVar { id: M_ID, n }, &cert.m);
    let gain = || {
        cert.gain
            .ok_or_else(|| Error::InvalidArgument(format!("{} certificate needs a gain", cert.notion)))
    };
    let target = match cert.notion {
        Notion::Li2 => {
            a.set_scalar(ScalarVar { id: GAMMA_ID }, gain()?.powi(2));
            Target::Li2
        }
        Notion::Hg2 => {
            a.set_scalar(ScalarVar { id: GAMMA_ID }, gain()?);
            Target::Hg2
        }
        Notion::Linf => {
            let (k, mu) = match (cert.kappa, cert.mu) {
                (Some(k), Some(mu)) => (k, mu),
                _ => return Err(Error::InvalidArgument("linf certificate needs kappa and mu".into())),
            };
            a.set_scalar(ScalarVar { id: GAMMA_ID }, gain()?);
            a.set_scalar(ScalarVar { id: MU_ID }, mu);
            Target::Linf(k)
        }
        Notion::Passivity => Target::Passivity,
        Notion::Qsr => Target::Qsr(cert.supply.clone()),
    };
    Ok((target, a))
}

/// Substitutes the certificate into its inequalities at every vertex and at
/// [`INTERIOR_SAMPLES`] interior parameter points. A constraint passes when
/// its smallest eigenvalue (in `>= 0` form) is at least `-tol`.
pub fn verify_certificate(emb: &DpvEmbedding, cert: &GainCertificate, tol: f64) -> Result<VerifyReport> {
    let n_x = emb.system.n_x;
    if cert.m.nrows() != n_x || cert.m.ncols() != n_x {
        return Err(Error::Dimension {
            context: "certificate M".into(),
            expected: n_x,
            got: cert.m.nrows(),
        });
    }
    if cert.m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "certificate M".into(),
            index: cert.m.iter().position(|v| !v.is_finite()).unwrap_or(0),
        });
    }
    if cert.supply.n_u() != emb.system.n_u || cert.supply.n_y() != emb.system.n_y {
        return Err(Error::Dimension {
            context: "certificate supply (n_u + n_y)".into(),
            expected: emb.system.n_u + emb.system.n_y,
            got: cert.supply.n_u() + cert.supply.n_y(),
        });
    }
    let (target, values) = spec_of(cert)?;
    let verts = emb.vertices()?;
    let (vp, _) = build(&target, &verts.matrices, n_x)?;
    let vertex_residuals = residuals_at(&vp, &values, &verts.points);
    let worst_vertex = vertex_residuals
        .iter()
        .map(|r| r.min_eigenvalue)
        .fold(f64::INFINITY, f64::min);
    let pts = if emb.n_p() == 0 {
        Vec::new()
    } else {
        emb.param_samples(INTERIOR_SAMPLES)
    };
    let mats: Vec<StateSpace> = pts.iter().map(|p| emb.matrices_at(p)).collect();
    let (ip, _) = build(&target, &mats, n_x)?;
    let worst_interior = residuals_at(&ip, &values, &pts)
        .iter()
        .map(|r| r.min_eigenvalue)
        .fold(f64::INFINITY, f64::min);
    let m_min = min_eigenvalue(&cert.m);
    let passed = worst_vertex >= -tol && worst_interior >= -tol && m_min > 0.0;
    Ok(VerifyReport {
        vertex_residuals,
        worst_vertex,
        worst_interior,
        interior_samples: pts.len(),
        m_min_eigenvalue: m_min,
        tolerance: tol,
        passed,
    })
}

pub type StateMap = Arc<dyn Fn(&[f64]) -> DVector<f64> + Send + Sync>;
pub type StateJacobian = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
pub type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// `(P, nu, N)` with `M(x) = N(x)^T P N(x)` and `N = d nu / dx` on `domain`.
#[derive(Clone)]
pub struct Factorization {
    pub p: DMatrix<f64>,
    pub nu: StateMap,
    pub n: StateJacobian,
    pub domain: AxisBox,
}

/// Storage on pairs of states.
#[derive(Clone)]
pub enum IncrementalStorage {
    /// `(x - x~)^T M (x - x~)`.
    Constant(DMatrix<f64>),
    /// `(nu(x) - nu(x~))^T P (nu(x) - nu(x~))`.
    Factored { p: DMatrix<f64>, nu: StateMap },
    /// `W(x - x~)` for a given function `W`.
    OfDifference { name: String, w: ScalarField },
}

impl fmt::Debug for IncrementalStorage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(m) => write!(f, "Constant({m:?})"),
            Self::Factored { p, .. } => write!(f, "Factored(P = {p:?})"),
            Self::OfDifference { name, .. } => write!(f, "OfDifference({name})"),
        }
    }
}

impl IncrementalStorage {
    pub fn eval(&self, x: &[f64], xt: &[f64]) -> f64 {
        match self {
            Self::Constant(m) => {
                let d = DVector::from_iterator(x.len(), x.iter().zip(xt).map(|(a, b)| a - b));
                (d.transpose() * m * &d)[0]
            }
            Self::Factored { p, nu } => {
                let d = nu(x) - nu(xt);
                (d.transpose() * p * &d)[0]
            }
            Self::OfDifference { w, .. } => {
                let d: Vec<f64> = x.iter().zip(xt).map(|(a, b)| a - b).collect();
                w(&d)
            }
        }
    }
}

/// Storage function from a certificate. Without a factorization this is
/// the constant-`M` quadratic form; with one, `nu` and `N` are checked
/// against each other and `N^T P N` against the certified `M`.
pub fn build_incremental_storage(
    cert: &GainCertificate,
    factorization: Option<Factorization>,
) -> Result<IncrementalStorage> {
    let Some(fac) = factorization else {
        return Ok(IncrementalStorage::Constant(cert.m.clone()));
    };
    if !fac.domain.is_bounded() {
        return Err(Error::InvalidArgument("factorization domain must be bounded".into()));
    }
    if min_eigenvalue(&fac.p) <= 0.0 {
        return Err(Error::InvalidArgument("P must be positive definite".into()));
    }
    let n_x = cert.m.nrows();
    let scale = cert.m.amax().max(1.0);
    let mut worst = (0.0_f64, Vec::new(), "");
    for s in halton(STORAGE_SAMPLES, fac.domain.dim()) {
        let x = fac.domain.from_unit(&s);
        let nmat = (fac.n)(&x);
        let m = nmat.transpose() * &fac.p * &nmat;
        let err = (&m - &cert.m).amax() / scale;
        if err > worst.0 {
            worst = (err, x.clone(), "N^T P N differs from M");
        }
        let fd = fd_jacobian(&fac.nu, &x, n_x);
        let jerr = (&fd - &nmat).amax() / nmat.amax().max(1.0);
        if jerr > worst.0 {
            worst = (jerr, x.clone(), "finite-difference Jacobian of nu differs from N");
        }
    }
    if worst.0 > 1e-5 {
        return Err(Error::InvalidArgument(format!(
            "{} by {:.3e} (relative) at x = {:?}",
            worst.2, worst.0, worst.1
        )));
    }
    Ok(IncrementalStorage::Factored { p: fac.p, nu: fac.nu })
}

fn fd_jacobian(nu: &StateMap, x: &[f64], n_x: usize) -> DMatrix<f64> {
    let y0 = nu(x);
    let mut j = DMatrix::zeros(y0.len(), n_x);
    for k in 0..n_x {
        let h = 1e-6 * (1.0 + x[k].abs());
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[k] += h;
        xm[k] -= h;
        let col = (nu(&xp) - nu(&xm)) / (2.0 * h);
        j.set_column(k, &col);
    }
    j
}

/// `q -> V_delta(q + x_e, x_e)`.
pub fn general_storage_at_equilibrium(storage: &IncrementalStorage, eq: &EquilibriumPoint) -> ScalarField {
    let s = storage.clone();
    let xe: Vec<f64> = eq.x_e.iter().copied().collect();
    Arc::new(move |q: &[f64]| {
        let x: Vec<f64> = q.iter().zip(&xe).map(|(a, b)| a + b).collect();
        s.eval(&x, &xe)
    })
}
