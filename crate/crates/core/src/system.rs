//! Primal nonlinear systems `x' = f(x, u)`, `y = h(x, u)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dual::Dual;
use crate::error::{Error, Result};

/// Vector field or output map evaluated on dual numbers.
pub type DualMap = Arc<dyn Fn(&[Dual], &[Dual]) -> Vec<Dual> + Send + Sync>;

/// Closed-form Jacobians `(x, u) -> (A, B, C, D)`.
pub type JacobianMap = Arc<dyn Fn(&[f64], &[f64]) -> StateSpace + Send + Sync>;

/// A quadruple of state-space matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl StateSpace {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let n_x = a.nrows();
        check_shape("A", &a, n_x, n_x)?;
        let n_u = b.ncols();
        check_shape("B", &b, n_x, n_u)?;
        let n_y = c.nrows();
        check_shape("C", &c, n_y, n_x)?;
        check_shape("D", &d, n_y, n_u)?;
        Ok(Self { a, b, c, d })
    }

    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_y(&self) -> usize {
        self.c.nrows()
    }

    pub fn matrices(&self) -> [(&'static str, &DMatrix<f64>); 4] {
        [("A", &self.a), ("B", &self.b), ("C", &self.c), ("D", &self.d)]
    }

    /// Largest absolute entry-wise difference over all four matrices.
    pub fn max_abs_diff(&self, other: &StateSpace) -> f64 {
        self.matrices()
            .iter()
            .zip(other.matrices().iter())
            .map(|((_, x), (_, y))| (*x - *y).amax())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn check_shape(name: &str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows {
        return Err(Error::Dimension {
            context: format!("{name} rows"),
            expected: rows,
            got: m.nrows(),
        });
    }
    if m.ncols() != cols {
        return Err(Error::Dimension {
            context: format!("{name} cols"),
            expected: cols,
            got: m.ncols(),
        });
    }
    Ok(())
}

/// Closed interval, possibly with infinite endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const REAL_LINE: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::InvalidArgument(format!("bad interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn lerp(&self, s: f64) -> f64 {
        self.lo + s * (self.hi - self.lo)
    }
}

/// Axis-aligned box, one interval per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisBox(pub Vec<Interval>);

impl AxisBox {
    pub fn unbounded(dim: usize) -> Self {
        Self(vec![Interval::REAL_LINE; dim])
    }

    pub fn from_bounds(bounds: &[(f64, f64)]) -> Result<Self> {
        bounds
            .iter()
            .map(|&(lo, hi)| Interval::new(lo, hi))
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_bounded(&self) -> bool {
        self.0.iter().all(Interval::is_bounded)
    }

    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        v.len() == self.0.len() && self.0.iter().zip(v).all(|(iv, &x)| iv.contains(x, tol))
    }

    /// `self` lies inside `outer` coordinate-wise.
    pub fn is_subset_of(&self, outer: &AxisBox) -> bool {
        self.dim() == outer.dim()
            && self
                .0
                .iter()
                .zip(&outer.0)
                .all(|(i, o)| i.lo >= o.lo && i.hi <= o.hi)
    }

    /// Maps a point of the unit cube into the box. Requires a bounded box.
    pub fn from_unit(&self, s: &[f64]) -> Vec<f64> {
        self.0.iter().zip(s).map(|(iv, &t)| iv.lerp(t)).collect()
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.0
    }
}

/// Primal system with dual-number evaluable dynamics and output.
#[derive(Clone)]
pub struct NonlinearSystem {
    pub name: String,
    pub n_x: usize,
    pub n_u: usize,
    pub n_y: usize,
    f: DualMap,
    h: DualMap,
    jacobians: Option<JacobianMap>,
    pub state_box: AxisBox,
    pub input_box: AxisBox,
}

impl fmt::Debug for NonlinearSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearSystem")
            .field("name", &self.name)
            .field("n_x", &self.n_x)
            .field("n_u", &self.n_u)
            .field("n_y", &self.n_y)
            .field("closed_form_jacobians", &self.jacobians.is_some())
            .field("state_box", &self.state_box)
            .field("input_box", &self.input_box)
            .finish()
    }
}

impl NonlinearSystem {
    pub fn new(
        name: impl Into<String>,
        (n_x, n_u, n_y): (usize, usize, usize),
        f: DualMap,
        h: DualMap,
    ) -> Result<Self> {
        if n_x == 0 || n_u == 0 || n_y == 0 {
            return Err(Error::InvalidArgument("system dimensions must be positive".into()));
        }
        Ok(Self {
            name: name.into(),
            n_x,
            n_u,
            n_y,
            f,
            h,
            jacobians: None,
            state_box: AxisBox::unbounded(n_x),
            input_box: AxisBox::unbounded(n_u),
        })
    }

    pub fn with_jacobians(mut self, jac: JacobianMap) -> Self {
        self.jacobians = Some(jac);
        self
    }

    pub fn with_boxes(mut self, state_box: AxisBox, input_box: AxisBox) -> Result<Self> {
        if state_box.dim() != self.n_x {
            return Err(Error::Dimension {
                context: "state box".into(),
                expected: self.n_x,
                got: state_box.dim(),
            });
        }
        if input_box.dim() != self.n_u {
            return Err(Error::Dimension {
                context: "input box".into(),
                expected: self.n_u,
                got: input_box.dim(),
            });
        }
        self.state_box = state_box;
        self.input_box = input_box;
        Ok(self)
    }

    pub fn has_closed_form_jacobians(&self) -> bool {
        self.jacobians.is_some()
    }

    /// Whether `(x, u)` lies in the declared state and input boxes.
    pub fn in_domain(&self, x: &[f64], u: &[f64]) -> bool {
        self.state_box.contains(x, 0.0) && self.input_box.contains(u, 0.0)
    }

    fn check_dims(&self, x: &[f64], u: &[f64]) -> Result<()> {
        if x.len() != self.n_x {
            return Err(Error::Dimension {
                context: format!("state of {}", self.name),
                expected: self.n_x,
                got: x.len(),
            });
        }
        if u.len() != self.n_u {
            return Err(Error::Dimension {
                context: format!("input of {}", self.name),
                expected: self.n_u,
                got: u.len(),
            });
        }
        Ok(())
    }

    fn eval_map(map: &DualMap, x: &[f64], u: &[f64]) -> DVector<f64> {
        let xd: Vec<Dual> = x.iter().copied().map(Dual::constant).collect();
        let ud: Vec<Dual> = u.iter().copied().map(Dual::constant).collect();
        let out = map(&xd, &ud);
        DVector::from_iterator(out.len(), out.into_iter().map(|d| d.re))
    }

    /// `f(x, u)`.
    pub fn eval_dynamics(&self, x: &[f64], u: &[f64]) -> Result<DVector<f64>> {
        self.check_dims(x, u)?;
        Ok(self.eval_dynamics_unchecked(x, u))
    }

    pub(crate) fn eval_dynamics_unchecked(&self, x: &[f64], u: &[f64]) -> DVector<f64> {
        Self::eval_map(&self.f, x, u)
    }

    pub(crate) fn eval_output_unchecked(&self, x: &[f64], u: &[f64]) -> DVector<f64> {
        Self::eval_map(&self.h, x, u)
    }

    /// `h(x, u)`.
    pub fn eval_output(&self, x: &[f64], u: &[f64]) -> Result<DVector<f64>> {
        self.check_dims(x, u)?;
        Ok(self.eval_output_unchecked(x, u))
    }

    /// Jacobians of `f` and `h`: the closed form when supplied, forward-mode
    /// dual numbers otherwise.
    pub fn eval_jacobians(&self, x: &[f64], u: &[f64]) -> Result<StateSpace> {
        self.check_dims(x, u)?;
        let ss = match &self.jacobians {
            Some(jac) => jac(x, u),
            None => self.autodiff_jacobians_unchecked(x, u),
        };
        check_finite(&ss)?;
        Ok(ss)
    }

    /// Jacobians by dual numbers, ignoring any closed form.
    pub fn autodiff_jacobians(&self, x: &[f64], u: &[f64]) -> Result<StateSpace> {
        self.check_dims(x, u)?;
        let ss = self.autodiff_jacobians_unchecked(x, u);
        check_finite(&ss)?;
        Ok(ss)
    }

    fn autodiff_jacobians_unchecked(&self, x: &[f64], u: &[f64]) -> StateSpace {
        let (n_x, n_u, n_y) = (self.n_x, self.n_u, self.n_y);
        let mut a = DMatrix::zeros(n_x, n_x);
        let mut b = DMatrix::zeros(n_x, n_u);
        let mut c = DMatrix::zeros(n_y, n_x);
        let mut d = DMatrix::zeros(n_y, n_u);
        let mut xd: Vec<Dual> = x.iter().copied().map(Dual::constant).collect();
        let mut ud: Vec<Dual> = u.iter().copied().map(Dual::constant).collect();
        for j in 0..n_x {
            xd[j].eps = 1.0;
            for (i, v) in (self.f)(&xd, &ud).iter().enumerate() {
                a[(i, j)] = v.eps;
            }
            for (i, v) in (self.h)(&xd, &ud).iter().enumerate() {
                c[(i, j)] = v.eps;
            }
            xd[j].eps = 0.0;
        }
        for j in 0..n_u {
            ud[j].eps = 1.0;
            for (i, v) in (self.f)(&xd, &ud).iter().enumerate() {
                b[(i, j)] = v.eps;
            }
            for (i, v) in (self.h)(&xd, &ud).iter().enumerate() {
                d[(i, j)] = v.eps;
            }
            ud[j].eps = 0.0;
        }
        StateSpace { a, b, c, d }
    }

    /// Damped Newton iteration on `f(., u_e) = 0`.
    pub fn find_equilibrium(&self, u_e: &[f64], x_guess: &[f64]) -> Result<EquilibriumPoint> {
        const MAX_ITER: usize = 100;
        const TOL: f64 = 1e-9;
        self.check_dims(x_guess, u_e)?;
        let mut x = DVector::from_column_slice(x_guess);
        let mut fx = self.eval_dynamics_unchecked(x.as_slice(), u_e);
        let mut res = fx.norm();
        for _ in 0..MAX_ITER {
            if res <= TOL {
                break;
            }
            let jac = self.eval_jacobians(x.as_slice(), u_e)?;
            let step = match jac.a.clone().lu().solve(&(-&fx)) {
                Some(s) => s,
                None => {
                    return Err(Error::NoEquilibrium {
                        iterations: MAX_ITER,
                        residual: res,
                    })
                }
            };
            let mut alpha = 1.0;
            loop {
                let trial = &x + &step * alpha;
                let ft = self.eval_dynamics_unchecked(trial.as_slice(), u_e);
                let rt = ft.norm();
                if rt < res || alpha < 1e-10 {
                    x = trial;
                    fx = ft;
                    res = rt;
                    break;
                }
                alpha *= 0.5;
            }
        }
        if res > TOL || !res.is_finite() {
            return Err(Error::NoEquilibrium {
                iterations: MAX_ITER,
                residual: res,
            });
        }
        let y_e = self.eval_output(x.as_slice(), u_e)?;
        Ok(EquilibriumPoint {
            x_e: x,
            u_e: DVector::from_column_slice(u_e),
            y_e,
            residual: res,
        })
    }
}

fn check_finite(ss: &StateSpace) -> Result<()> {
    for (name, m) in ss.matrices() {
        if let Some(idx) = m.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("Jacobian {name} (column-major index)"),
                index: idx,
            });
        }
    }
    Ok(())
}

/// A forced equilibrium `f(x_e, u_e) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumPoint {
    pub x_e: DVector<f64>,
    pub u_e: DVector<f64>,
    pub y_e: DVector<f64>,
    pub residual: f64,
}

impl EquilibriumPoint {
    /// The origin for systems with `f(0, 0) = 0`.
    pub fn at(sys: &NonlinearSystem, x_e: &[f64], u_e: &[f64]) -> Result<Self> {
        let residual = sys.eval_dynamics(x_e, u_e)?.norm();
        if residual > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "not an equilibrium: |f(x_e, u_e)| = {residual:.3e}"
            )));
        }
        Ok(Self {
            x_e: DVector::from_column_slice(x_e),
            u_e: DVector::from_column_slice(u_e),
            y_e: sys.eval_output(x_e, u_e)?,
            residual,
        })
    }
}

/// Output selection for the built-in Duffing oscillator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DuffingOutput {
    /// `y = x1`
    Position,
    /// `y = x2`, the port-Hamiltonian output.
    Velocity,
}

/// Duffing oscillator `x1' = x2`, `x2' = -a x2 - (b + c x1^2) x1 + u`.
///
/// The state box is `[-sqrt(2), sqrt(2)] x R`.
pub fn duffing(a: f64, b: f64, c: f64, output: DuffingOutput) -> NonlinearSystem {
    let f: DualMap = Arc::new(move |x: &[Dual], u: &[Dual]| {
        vec![x[1], -(x[1] * a) - (x[0] * x[0] * c + b) * x[0] + u[0]]
    });
    let (h, name): (DualMap, &str) = match output {
        DuffingOutput::Position => (Arc::new(|x: &[Dual], _: &[Dual]| vec![x[0]]), "duffing"),
        DuffingOutput::Velocity => (Arc::new(|x: &[Dual], _: &[Dual]| vec![x[1]]), "duffing_ph"),
    };
    let c_row = match output {
        DuffingOutput::Position => [1.0, 0.0],
        DuffingOutput::Velocity => [0.0, 1.0],
    };
    let jac: JacobianMap = Arc::new(move |x: &[f64], _u: &[f64]| StateSpace {
        a: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -b - 3.0 * c * x[0] * x[0], -a]),
        b: DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        c: DMatrix::from_row_slice(1, 2, &c_row),
        d: DMatrix::zeros(1, 1),
    });
    let sqrt2 = std::f64::consts::SQRT_2;
    NonlinearSystem::new(name, (2, 1, 1), f, h)
        .expect("fixed dimensions")
        .with_jacobians(jac)
        .with_boxes(
            AxisBox(vec![Interval { lo: -sqrt2, hi: sqrt2 }, Interval::REAL_LINE]),
            AxisBox::unbounded(1),
        )
        .expect("fixed dimensions")
}

/// Hamiltonian `H(x) = x2^2/2 + b x1^2/2 + c x1^4/4` of the Duffing oscillator.
pub fn duffing_hamiltonian(b: f64, c: f64, x: &[f64]) -> f64 {
    0.5 * x[1] * x[1] + 0.5 * b * x[0] * x[0] + 0.25 * c * x[0].powi(4)
}

/// Linear time-invariant system `x' = A x + B u`, `y = C x + D u`.
pub fn lti(ss: StateSpace) -> NonlinearSystem {
    let (n_x, n_u, n_y) = (ss.n_x(), ss.n_u(), ss.n_y());
    let lin = |m: DMatrix<f64>, n: DMatrix<f64>| -> DualMap {
        Arc::new(move |x: &[Dual], u: &[Dual]| {
            (0..m.nrows())
                .map(|i| {
                    let mut acc = Dual::constant(0.0);
                    for (j, xj) in x.iter().enumerate() {
                        acc += *xj * m[(i, j)];
                    }
                    for (j, uj) in u.iter().enumerate() {
                        acc += *uj * n[(i, j)];
                    }
                    acc
                })
                .collect()
        })
    };
    let f = lin(ss.a.clone(), ss.b.clone());
    let h = lin(ss.c.clone(), ss.d.clone());
    let jac: JacobianMap = Arc::new(move |_x: &[f64], _u: &[f64]| ss.clone());
    NonlinearSystem::new("lti", (n_x, n_u, n_y), f, h)
        .expect("state-space dimensions are positive")
        .with_jacobians(jac)
}

/// Scalar LTI system `x' = a x + b u`, `y = c x + d u`.
pub fn scalar_lti(a: f64, b: f64, c: f64, d: f64) -> NonlinearSystem {
    let m = |v: f64| DMatrix::from_element(1, 1, v);
    lti(StateSpace {
        a: m(a),
        b: m(b),
        c: m(c),
        d: m(d),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn duffing_dynamics_and_outputs() {
        let sys = duffing(3.3, 7.9, 1.0, DuffingOutput::Position);
        let f = sys.eval_dynamics(&[1.0, 1.0], &[0.0]).unwrap();
        assert_relative_eq!(f[0], 1.0);
        assert_relative_eq!(f[1], -3.3 - (7.9 + 1.0), epsilon = 1e-12);
        assert_relative_eq!(f[1], -12.2, epsilon = 1e-12);
        assert_eq!(sys.eval_output(&[1.0, 1.0], &[0.0]).unwrap()[0], 1.0);
        let ph = duffing(1.3, 7.9, 3.0, DuffingOutput::Velocity);
        assert_eq!(ph.eval_output(&[1.0, 1.0], &[0.0]).unwrap()[0], 1.0);
        assert_eq!(ph.eval_output(&[0.3, -2.0], &[0.0]).unwrap()[0], -2.0);
        assert_eq!(sys.eval_output(&[0.0, 0.0], &[0.0]).unwrap()[0], 0.0);
    }

    #[test]
    fn duffing_coefficients_match_equation() {
        // a, b, c each probed separately
        let sys = duffing(2.0, 5.0, 0.5, DuffingOutput::Position);
        let f = |x: [f64; 2], u: f64| sys.eval_dynamics(&x, &[u]).unwrap();
        assert_eq!(f([0.0, 1.0], 0.0)[1], -2.0);
        assert_eq!(f([1.0, 0.0], 0.0)[1], -5.5);
        assert_eq!(f([2.0, 0.0], 0.0)[1], -(5.0 + 0.5 * 4.0) * 2.0);
        assert_eq!(f([0.0, 0.0], 1.5)[1], 1.5);
        assert_eq!(f([0.0, 3.0], 0.0)[0], 3.0);
    }

    #[test]
    fn lti_evaluation() {
        let sys = scalar_lti(-1.0, 1.0, 1.0, 0.0);
        assert_eq!(sys.eval_dynamics(&[2.0], &[1.0]).unwrap()[0], -1.0);
        assert_eq!(sys.eval_dynamics(&[0.0], &[0.0]).unwrap()[0], 0.0);
        let j1 = sys.eval_jacobians(&[0.0], &[0.0]).unwrap();
        let j2 = sys.eval_jacobians(&[5.0], &[-3.0]).unwrap();
        assert_eq!(j1, j2);
    }

    #[test]
    fn duffing_jacobian_closed_form_and_autodiff() {
        let sys = duffing(3.3, 7.9, 1.0, DuffingOutput::Position);
        let j = sys.eval_jacobians(&[1.0, 0.4], &[0.2]).unwrap();
        assert_relative_eq!(j.a[(1, 0)], -10.9, epsilon = 1e-12);
        assert_eq!(j.a[(0, 1)], 1.0);
        assert_eq!(j.a[(1, 1)], -3.3);
        assert_eq!(j.b[(1, 0)], 1.0);
        assert_eq!(j.c[(0, 0)], 1.0);
        assert_eq!(j.d[(0, 0)], 0.0);
        let ad = sys.autodiff_jacobians(&[1.0, 0.4], &[0.2]).unwrap();
        assert!(j.max_abs_diff(&ad) < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let sys = duffing(3.3, 7.9, 1.0, DuffingOutput::Position);
        assert!(matches!(
            sys.eval_dynamics(&[1.0], &[0.0]),
            Err(Error::Dimension { .. })
        ));
        assert!(sys.eval_output(&[1.0, 0.0], &[]).is_err());
    }

    #[test]
    fn non_finite_jacobian_reports_coordinate() {
        let f: DualMap = Arc::new(|x: &[Dual], _u: &[Dual]| vec![x[0].sqrt()]);
        let h: DualMap = Arc::new(|x: &[Dual], _u: &[Dual]| vec![x[0]]);
        let sys = NonlinearSystem::new("sqrt", (1, 1, 1), f, h).unwrap();
        match sys.eval_jacobians(&[0.0], &[0.0]) {
            Err(Error::NonFinite { index, .. }) => assert_eq!(index, 0),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn equilibria() {
        let sys = duffing(3.3, 7.9, 1.0, DuffingOutput::Position);
        let eq = sys.find_equilibrium(&[0.0], &[0.1, 0.1]).unwrap();
        assert!(eq.x_e.norm() < 1e-9);
        assert!(eq.residual <= 1e-9);
        assert_eq!(eq.y_e[0], eq.x_e[0]);

        let lin = scalar_lti(-1.0, 1.0, 1.0, 0.0);
        let eq = lin.find_equilibrium(&[1.0], &[0.0]).unwrap();
        assert_relative_eq!(eq.x_e[0], 1.0, epsilon = 1e-12);

        // root of b x + c x^3 = 1 by bisection
        let (b, c) = (7.9, 1.0);
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if b * mid + c * mid.powi(3) < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let eq = sys.find_equilibrium(&[1.0], &[0.5, 0.5]).unwrap();
        assert_relative_eq!(eq.x_e[0], lo, epsilon = 1e-9);
        assert!(eq.x_e[1].abs() < 1e-12);
    }

    #[test]
    fn equilibrium_failure_reports_residual() {
        // x' = x^2 + 1 has no real root
        let f: DualMap = Arc::new(|x: &[Dual], _u: &[Dual]| vec![x[0] * x[0] + 1.0]);
        let h: DualMap = Arc::new(|x: &[Dual], _u: &[Dual]| vec![x[0]]);
        let sys = NonlinearSystem::new("noroot", (1, 1, 1), f, h).unwrap();
        match sys.find_equilibrium(&[0.0], &[0.5]) {
            Err(Error::NoEquilibrium { residual, .. }) => assert!(residual >= 1.0),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn evaluation_is_bit_identical() {
        let sys = duffing(3.3, 7.9, 1.0, DuffingOutput::Position);
        let x = [0.123456789, -1.987654321];
        let a = sys.eval_dynamics(&x, &[0.77]).unwrap();
        let b = sys.eval_dynamics(&x, &[0.77]).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn boxes() {
        let sys = duffing(3.3, 7.9, 1.0, DuffingOutput::Position);
        assert!(sys.in_domain(&[1.4, 100.0], &[5.0]));
        assert!(!sys.in_domain(&[1.5, 0.0], &[0.0]));
        assert!(!sys.state_box.is_bounded());
        assert!(Interval::new(1.0, 0.0).is_err());
    }
}
