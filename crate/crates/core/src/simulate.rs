//! Trajectory simulation and dissipation-inequality ledgers.
//!
//! Trajectories use fixed-step classical RK4. Ledgers compare the stored
//! value `V(t)` with `V(0) + int_0^t S` (trapezoid rule on the same grid)
//! and flag excess that persists for [`PERSISTENCE`] consecutive samples.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::analysis::{IncrementalStorage, ScalarField};
use crate::error::{Error, Result};
use crate::lmi::{min_eigenvalue, QsrSupply};
use crate::system::{EquilibriumPoint, NonlinearSystem};

pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_HORIZON: f64 = 30.0;
pub const DEFAULT_LAMBDA_POINTS: usize = 33;
/// Consecutive samples an excess must last to count as a violation.
pub const PERSISTENCE: usize = 3;
/// Relative tolerance factor: `tol = factor * (1 + max |accumulated supply|)`.
pub const DEFAULT_TOL_FACTOR: f64 = 1e-6;
/// Step-halving self-check threshold on the final state.
pub const HALVING_TOL: f64 = 1e-6;

pub type SignalFn = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

/// Input signal `u(t)`, evaluable at any `t`.
#[derive(Clone)]
pub enum InputSignal {
    Zero(usize),
    Constant(Vec<f64>),
    /// `3 e^{-0.2 t} cos(pi t) 1(t)`.
    U1,
    /// `-2 e^{-0.1 t} sin(0.6 pi t + pi / 4) 1(t)`.
    U2,
    Scaled(f64, Box<InputSignal>),
    /// Piecewise-linear through `(t_k, v_k)`, held constant outside.
    Table { times: Vec<f64>, values: Vec<Vec<f64>> },
    Custom { name: String, dim: usize, f: SignalFn },
}

impl fmt::Debug for InputSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero(n) => write!(f, "Zero({n})"),
            Self::Constant(v) => write!(f, "Constant({v:?})"),
            Self::U1 => f.write_str("U1"),
            Self::U2 => f.write_str("U2"),
            Self::Scaled(k, s) => write!(f, "Scaled({k}, {s:?})"),
            Self::Table { times, .. } => write!(f, "Table({} points)", times.len()),
            Self::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

fn unit_step(t: f64) -> f64 {
    if t >= 0.0 {
        1.0
    } else {
        0.0
    }
}

impl InputSignal {
    /// Built-in signal by id: `zero`, `u1`, `u2`.
    pub fn from_id(id: &str, dim: usize) -> Result<Self> {
        match id {
            "zero" => Ok(Self::Zero(dim)),
            "u1" | "u2" if dim != 1 => Err(Error::InvalidArgument(format!(
                "input '{id}' is scalar but the system has {dim} inputs"
            ))),
            "u1" => Ok(Self::U1),
            "u2" => Ok(Self::U2),
            other => Err(Error::InvalidArgument(format!(
                "unknown input id '{other}' (expected zero, u1 or u2)"
            ))),
        }
    }

    pub fn table(times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::InvalidArgument(
                "input table needs matching, non-empty times and values".into(),
            ));
        }
        let dim = values[0].len();
        if values.iter().any(|v| v.len() != dim) {
            return Err(Error::InvalidArgument("input table rows differ in length".into()));
        }
        if times.iter().chain(values.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("input table has non-finite entries".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("input table times must increase strictly".into()));
        }
        Ok(Self::Table { times, values })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Zero(n) => *n,
            Self::Constant(v) => v.len(),
            Self::U1 | Self::U2 => 1,
            Self::Scaled(_, s) => s.dim(),
            Self::Table { values, .. } => values[0].len(),
            Self::Custom { dim, .. } => *dim,
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        use std::f64::consts::PI;
        match self {
            Self::Zero(n) => vec![0.0; *n],
            Self::Constant(v) => v.clone(),
            Self::U1 => vec![3.0 * (-0.2 * t).exp() * (PI * t).cos() * unit_step(t)],
            Self::U2 => vec![-2.0 * (-0.1 * t).exp() * (0.6 * PI * t + PI / 4.0).sin() * unit_step(t)],
            Self::Scaled(k, s) => s.eval(t).into_iter().map(|v| k * v).collect(),
            Self::Table { times, values } => {
                let last = times.len() - 1;
                if t <= times[0] {
                    return values[0].clone();
                }
                if t >= times[last] {
                    return values[last].clone();
                }
                let i = times.partition_point(|&s| s <= t) - 1;
                let w = (t - times[i]) / (times[i + 1] - times[i]);
                values[i]
                    .iter()
                    .zip(&values[i + 1])
                    .map(|(a, b)| a + w * (b - a))
                    .collect()
            }
            Self::Custom { f, .. } => f(t),
        }
    }
}

/// Uniformly sampled trajectory.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub h: f64,
    pub t: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    /// Sample indices with the state outside the system's state box.
    pub out_of_box: Vec<usize>,
    /// Relative change of the final state when the step is halved.
    pub halving_change: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// CSV with columns `t, x.., u.., y..`.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend(names("x", self.x[0].len()));
        header.extend(names("u", self.u[0].len()));
        header.extend(names("y", self.y[0].len()));
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            let mut row = vec![self.t[i]];
            row.extend(self.x[i].iter());
            row.extend(self.u[i].iter());
            row.extend(self.y[i].iter());
            writeln!(w, "{}", csv_row(&row))?;
        }
        Ok(())
    }
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|k| format!("{prefix}{k}")).collect()
}

fn csv_row(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(",")
}

fn step_count(h: f64, horizon: f64) -> Result<usize> {
    if !(h > 0.0) || !h.is_finite() || !(horizon >= h) || !horizon.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "need h > 0 and T >= h (got h = {h}, T = {horizon})"
        )));
    }
    Ok((horizon / h).round() as usize)
}

fn rk4_step(
    f: &impl Fn(f64, &DVector<f64>) -> DVector<f64>,
    t: f64,
    x: &DVector<f64>,
    h: f64,
) -> DVector<f64> {
    let k1 = f(t, x);
    let k2 = f(t + 0.5 * h, &(x + &k1 * (0.5 * h)));
    let k3 = f(t + 0.5 * h, &(x + &k2 * (0.5 * h)));
    let k4 = f(t + h, &(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Fixed-step RK4 of `x' = rhs(t, x)`; returns all samples.
fn rk4(
    rhs: impl Fn(f64, &DVector<f64>) -> DVector<f64>,
    x0: DVector<f64>,
    h: f64,
    steps: usize,
) -> Result<Vec<DVector<f64>>> {
    let mut xs = Vec::with_capacity(steps + 1);
    xs.push(x0);
    for k in 0..steps {
        let t = k as f64 * h;
        let next = rk4_step(&rhs, t, &xs[k], h);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integration { step: k + 1, time: t + h });
        }
        xs.push(next);
    }
    Ok(xs)
}

fn relative_change(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / (1.0 + a.norm())
}

fn check_dims(sys: &NonlinearSystem, x0: &[f64], input: &InputSignal) -> Result<()> {
    if x0.len() != sys.n_x {
        return Err(Error::Dimension {
            context: "initial state".into(),
            expected: sys.n_x,
            got: x0.len(),
        });
    }
    if input.dim() != sys.n_u {
        return Err(Error::Dimension {
            context: "input signal".into(),
            expected: sys.n_u,
            got: input.dim(),
        });
    }
    Ok(())
}

/// Simulates `sys` from `x0` under `input` on `[0, horizon]` with step `h`.
pub fn integrate(
    sys: &NonlinearSystem,
    x0: &[f64],
    input: &InputSignal,
    h: f64,
    horizon: f64,
) -> Result<Trajectory> {
    check_dims(sys, x0, input)?;
    let steps = step_count(h, horizon)?;
    let rhs = |t: f64, x: &DVector<f64>| sys.eval_dynamics_unchecked(x.as_slice(), &input.eval(t));
    let x0v = DVector::from_column_slice(x0);
    let x = rk4(rhs, x0v.clone(), h, steps)?;
    let fine = rk4(rhs, x0v, 0.5 * h, 2 * steps)?;
    let halving_change = relative_change(&x[steps], &fine[2 * steps]);
    if halving_change > HALVING_TOL {
        log::warn!(
            "{}: halving the step changes the final state by {halving_change:.3e} (relative)",
            sys.name
        );
    }
    let t: Vec<f64> = (0..=steps).map(|k| k as f64 * h).collect();
    let u: Vec<DVector<f64>> = t.iter().map(|&s| DVector::from_vec(input.eval(s))).collect();
    let y = x
        .iter()
        .zip(&u)
        .map(|(xi, ui)| sys.eval_output(xi.as_slice(), ui.as_slice()))
        .collect::<Result<Vec<_>>>()?;
    let out_of_box = x
        .iter()
        .enumerate()
        .filter(|(_, xi)| !sys.state_box.contains(xi.as_slice(), 0.0))
        .map(|(i, _)| i)
        .collect::<Vec<_>>();
    if !out_of_box.is_empty() {
        log::warn!("{}: {} samples leave the state box", sys.name, out_of_box.len());
    }
    Ok(Trajectory {
        h,
        t,
        x,
        u,
        y,
        out_of_box,
        halving_change,
    })
}

/// Trajectories `x_bar(., lambda)` along the straight input/initial-state
/// path from `(x~0, u~)` (lambda = 0) to `(x0, u)` (lambda = 1), with their
/// variations `dx`, `dy`.
#[derive(Debug, Clone)]
pub struct VariationalFamily {
    pub lambdas: Vec<f64>,
    pub t: Vec<f64>,
    pub xbar: Vec<Vec<DVector<f64>>>,
    pub ubar: Vec<Vec<DVector<f64>>>,
    pub dx: Vec<Vec<DVector<f64>>>,
    pub du: Vec<DVector<f64>>,
    pub dy: Vec<Vec<DVector<f64>>>,
}

impl VariationalFamily {
    pub fn lambda_index(&self, lambda: f64) -> Option<usize> {
        self.lambdas.iter().position(|l| (l - lambda).abs() < 1e-12)
    }

    /// `int_0^1 dx(t_i, lambda) d lambda` by the trapezoid rule on the grid.
    pub fn lambda_integral(&self, i: usize) -> DVector<f64> {
        let mut acc = DVector::zeros(self.dx[0][i].len());
        for k in 1..self.lambdas.len() {
            let w = 0.5 * (self.lambdas[k] - self.lambdas[k - 1]);
            acc += (&self.dx[k - 1][i] + &self.dx[k][i]) * w;
        }
        acc
    }
}

/// `n` uniform points in `[0, 1]`.
pub fn lambda_grid(n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![0.0, 1.0];
    }
    (0..n).map(|k| k as f64 / (n - 1) as f64).collect()
}

/// Integrates `(x_bar, dx)` jointly with RK4 for every lambda of the grid.
#[allow(clippy::too_many_arguments)]
pub fn integrate_variational(
    sys: &NonlinearSystem,
    x0: &[f64],
    xt0: &[f64],
    input: &InputSignal,
    input_t: &InputSignal,
    lambdas: &[f64],
    h: f64,
    horizon: f64,
) -> Result<VariationalFamily> {
    check_dims(sys, x0, input)?;
    check_dims(sys, xt0, input_t)?;
    let steps = step_count(h, horizon)?;
    if lambdas.iter().any(|l| !(0.0..=1.0).contains(l)) || lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("lambda grid must increase within [0, 1]".into()));
    }
    if lambdas.first() != Some(&0.0) || lambdas.last() != Some(&1.0) {
        return Err(Error::InvalidArgument("lambda grid must include 0 and 1".into()));
    }
    let n_x = sys.n_x;
    let t: Vec<f64> = (0..=steps).map(|k| k as f64 * h).collect();
    let du_at = |s: f64| -> DVector<f64> {
        DVector::from_iterator(sys.n_u, input.eval(s).iter().zip(input_t.eval(s)).map(|(a, b)| a - b))
    };
    let du: Vec<DVector<f64>> = t.iter().map(|&s| du_at(s)).collect();
    let dx0 = DVector::from_iterator(n_x, x0.iter().zip(xt0).map(|(a, b)| a - b));
    let mut fam = VariationalFamily {
        lambdas: lambdas.to_vec(),
        t: t.clone(),
        xbar: Vec::new(),
        ubar: Vec::new(),
        dx: Vec::new(),
        du: du.clone(),
        dy: Vec::new(),
    };
    for &lam in lambdas {
        let ubar_at = |s: f64| -> Vec<f64> {
            input_t
                .eval(s)
                .iter()
                .zip(input.eval(s))
                .map(|(b, a)| b + lam * (a - b))
                .collect()
        };
        let rhs = |s: f64, z: &DVector<f64>| -> DVector<f64> {
            let xb = z.rows(0, n_x);
            let dx = z.rows(n_x, n_x);
            let ub = ubar_at(s);
            let fx = sys.eval_dynamics_unchecked(xb.as_slice(), &ub);
            let mut out = DVector::zeros(2 * n_x);
            out.rows_mut(0, n_x).copy_from(&fx);
            match sys.eval_jacobians(xb.as_slice(), &ub) {
                Ok(j) => {
                    let d = &j.a * dx + &j.b * du_at(s);
                    out.rows_mut(n_x, n_x).copy_from(&d);
                }
                Err(_) => out.fill(f64::NAN),
            }
            out
        };
        let mut z0 = DVector::zeros(2 * n_x);
        for k in 0..n_x {
            z0[k] = xt0[k] + lam * (x0[k] - xt0[k]);
            z0[n_x + k] = dx0[k];
        }
        let zs = rk4(rhs, z0, h, steps)?;
        let xb: Vec<DVector<f64>> = zs.iter().map(|z| z.rows(0, n_x).into_owned()).collect();
        let dxs: Vec<DVector<f64>> = zs.iter().map(|z| z.rows(n_x, n_x).into_owned()).collect();
        let ub: Vec<DVector<f64>> = t.iter().map(|&s| DVector::from_vec(ubar_at(s))).collect();
        let dys = (0..=steps)
            .map(|i| {
                let j = sys.eval_jacobians(xb[i].as_slice(), ub[i].as_slice())?;
                Ok(&j.c * &dxs[i] + &j.d * &du[i])
            })
            .collect::<Result<Vec<_>>>()?;
        fam.xbar.push(xb);
        fam.ubar.push(ub);
        fam.dx.push(dxs);
        fam.dy.push(dys);
    }
    Ok(fam)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LedgerKind {
    Differential,
    Incremental,
    General,
}

impl LedgerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Differential => "differential",
            Self::Incremental => "incremental",
            Self::General => "general",
        }
    }
}

/// Stored value against supplied energy along one (pair of) trajectories.
#[derive(Debug, Clone)]
pub struct DissipationReport {
    pub kind: LedgerKind,
    pub t: Vec<f64>,
    /// `V(t_i)`.
    pub storage: Vec<f64>,
    /// `V(0) + int_0^{t_i} S`.
    pub supplied: Vec<f64>,
    /// Largest level exceeded by `V - supplied` on [`PERSISTENCE`]
    /// consecutive samples.
    pub max_violation: f64,
    /// Largest single-sample excess.
    pub peak_excess: f64,
    /// Times of samples inside persistent violation runs.
    pub violation_times: Vec<f64>,
    /// Persistent runs as inclusive index ranges.
    pub violation_intervals: Vec<(usize, usize)>,
    pub tolerance: f64,
    pub holds: bool,
    /// Signals the ledger was evaluated on (state, input, output columns).
    pub x: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
}

impl DissipationReport {
    /// CSV with columns `t, x.., u.., y.., V, supply_accumulated`.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend(names("x", self.x.first().map_or(0, |v| v.len())));
        header.extend(names("u", self.u.first().map_or(0, |v| v.len())));
        header.extend(names("y", self.y.first().map_or(0, |v| v.len())));
        header.push("V".into());
        header.push("supply_accumulated".into());
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.t.len() {
            let mut row = vec![self.t[i]];
            row.extend(self.x[i].iter());
            row.extend(self.u[i].iter());
            row.extend(self.y[i].iter());
            row.push(self.storage[i]);
            row.push(self.supplied[i]);
            writeln!(w, "{}", csv_row(&row))?;
        }
        Ok(())
    }
}

/// Builds a ledger from storage values and supply-rate samples.
pub fn ledger(
    kind: LedgerKind,
    t: &[f64],
    storage: Vec<f64>,
    rate: &[f64],
    tol_factor: f64,
    signals: (Vec<DVector<f64>>, Vec<DVector<f64>>, Vec<DVector<f64>>),
) -> DissipationReport {
    let n = t.len();
    let mut acc = vec![0.0; n];
    for i in 1..n {
        acc[i] = acc[i - 1] + 0.5 * (t[i] - t[i - 1]) * (rate[i] + rate[i - 1]);
    }
    let tolerance = tol_factor * (1.0 + acc.iter().fold(0.0_f64, |a, v| a.max(v.abs())));
    let v0 = storage.first().copied().unwrap_or(0.0);
    let supplied: Vec<f64> = acc.iter().map(|a| v0 + a).collect();
    let excess: Vec<f64> = storage.iter().zip(&supplied).map(|(v, s)| v - s).collect();
    let peak_excess = excess.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let max_violation = excess
        .windows(PERSISTENCE.min(n.max(1)))
        .map(|w| w.iter().copied().fold(f64::INFINITY, f64::min))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut intervals = Vec::new();
    let mut start = None;
    for i in 0..=n {
        let over = i < n && excess[i] > tolerance;
        match (over, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if i - s >= PERSISTENCE {
                    intervals.push((s, i - 1));
                }
                start = None;
            }
            _ => {}
        }
    }
    let violation_times = intervals
        .iter()
        .flat_map(|&(a, b)| (a..=b).map(|i| t[i]))
        .collect::<Vec<_>>();
    let (x, u, y) = signals;
    DissipationReport {
        kind,
        t: t.to_vec(),
        storage,
        supplied,
        max_violation,
        peak_excess,
        holds: intervals.is_empty(),
        violation_times,
        violation_intervals: intervals,
        tolerance,
        x,
        u,
        y,
    }
}

fn quad_form(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    (v.transpose() * m * v)[0]
}

fn check_supply(supply: &QsrSupply, n_u: usize, n_y: usize) -> Result<()> {
    if supply.n_u() != n_u || supply.n_y() != n_y {
        return Err(Error::Dimension {
            context: "supply (n_u + n_y)".into(),
            expected: n_u + n_y,
            got: supply.n_u() + supply.n_y(),
        });
    }
    Ok(())
}

/// Differential ledger at `lambda`: `V = dx^T M dx`, supply in `(du, dy)`.
pub fn check_differential(
    family: &VariationalFamily,
    m: &DMatrix<f64>,
    supply: &QsrSupply,
    lambda: f64,
    tol_factor: f64,
) -> Result<DissipationReport> {
    let k = family
        .lambda_index(lambda)
        .ok_or_else(|| Error::InvalidArgument(format!("lambda {lambda} is not on the grid")))?;
    let (dx, dy) = (&family.dx[k], &family.dy[k]);
    check_supply(supply, family.du[0].len(), dy[0].len())?;
    if m.nrows() != dx[0].len() {
        return Err(Error::Dimension {
            context: "storage matrix".into(),
            expected: dx[0].len(),
            got: m.nrows(),
        });
    }
    let storage = dx.iter().map(|v| quad_form(m, v)).collect();
    let rate: Vec<f64> = family.du.iter().zip(dy).map(|(u, y)| supply.eval(u, y)).collect();
    Ok(ledger(
        LedgerKind::Differential,
        &family.t,
        storage,
        &rate,
        tol_factor,
        (dx.clone(), family.du.clone(), dy.clone()),
    ))
}

/// Incremental ledger between two trajectories on the same grid.
pub fn check_incremental(
    traj: &Trajectory,
    traj_t: &Trajectory,
    storage: &IncrementalStorage,
    supply: &QsrSupply,
    tol_factor: f64,
) -> Result<DissipationReport> {
    if traj.len() != traj_t.len() || traj.h != traj_t.h {
        return Err(Error::InvalidArgument(format!(
            "trajectory grids differ ({} samples, h = {} vs {} samples, h = {})",
            traj.len(),
            traj.h,
            traj_t.len(),
            traj_t.h
        )));
    }
    check_supply(supply, traj.u[0].len(), traj.y[0].len())?;
    let diff = |a: &[DVector<f64>], b: &[DVector<f64>]| -> Vec<DVector<f64>> {
        a.iter().zip(b).map(|(p, q)| p - q).collect()
    };
    let (dx, du, dy) = (diff(&traj.x, &traj_t.x), diff(&traj.u, &traj_t.u), diff(&traj.y, &traj_t.y));
    let values = traj
        .x
        .iter()
        .zip(&traj_t.x)
        .map(|(a, b)| storage.eval(a.as_slice(), b.as_slice()))
        .collect();
    let rate: Vec<f64> = du.iter().zip(&dy).map(|(u, y)| supply.eval(u, y)).collect();
    Ok(ledger(LedgerKind::Incremental, &traj.t, values, &rate, tol_factor, (dx, du, dy)))
}

/// General ledger about an equilibrium: `V(q)` with `q = x - x_e`, supply in
/// `(u - u_e, y - y_e)`.
pub fn check_general(
    traj: &Trajectory,
    eq: &EquilibriumPoint,
    storage: &ScalarField,
    supply: &QsrSupply,
    tol_factor: f64,
) -> Result<DissipationReport> {
    check_supply(supply, traj.u[0].len(), traj.y[0].len())?;
    let q: Vec<DVector<f64>> = traj.x.iter().map(|x| x - &eq.x_e).collect();
    let w: Vec<DVector<f64>> = traj.u.iter().map(|u| u - &eq.u_e).collect();
    let z: Vec<DVector<f64>> = traj.y.iter().map(|y| y - &eq.y_e).collect();
    let values = q.iter().map(|v| storage(v.as_slice())).collect();
    let rate: Vec<f64> = w.iter().zip(&z).map(|(u, y)| supply.eval(u, y)).collect();
    Ok(ledger(LedgerKind::General, &traj.t, values, &rate, tol_factor, (q, w, z)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JensenResult {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `(int phi)^T M (int phi) <= int phi^T M phi` over `[0, 1]`, both sides by
/// the trapezoid rule on the uniform grid of `phi`.
pub fn jensen_check(phi: &[DVector<f64>], m: &DMatrix<f64>) -> Result<JensenResult> {
    if phi.len() < 2 {
        return Err(Error::InvalidArgument("need at least two samples of phi".into()));
    }
    if m.iter().chain(phi.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "jensen_check input".into(),
            index: 0,
        });
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    if min_eigenvalue(m) < -1e-12 * scale {
        return Err(Error::InvalidArgument("M must be positive semidefinite".into()));
    }
    let n = phi.len() - 1;
    let h = 1.0 / n as f64;
    let weight = |i: usize| if i == 0 || i == n { 0.5 * h } else { h };
    let mut mean = DVector::zeros(phi[0].len());
    let mut rhs = 0.0;
    for (i, p) in phi.iter().enumerate() {
        mean += p * weight(i);
        rhs += weight(i) * quad_form(m, p);
    }
    let lhs = quad_form(m, &mean);
    Ok(JensenResult {
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-10 * (1.0 + rhs.abs()),
    })
}
