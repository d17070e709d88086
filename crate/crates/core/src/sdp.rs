//! Small dense semidefinite programs in LMI form.
//!
//! Problems are `min c^T y` subject to `G_k(y) = G_k0 + sum_i y_i G_ki >= 0`
//! for every block `k`, where `y` collects the scalarized decision
//! variables. The solver is a two-phase logarithmic-barrier path-following
//! method:
//!
//! * phase I minimizes `s` subject to `G_k(y) + s I >= 0` and either finds a
//!   strictly feasible point (`s < 0`), accepts a point within the feasibility
//!   tolerance, or bounds `s` away from zero (infeasible);
//! * phase II follows the central path of the objective until the duality
//!   gap `m / t` drops below `1e-9 (1 + |objective|)`.
//!
//! Variable bounds are kept strictly satisfied in both phases, and every
//! iterate stays inside the ball `|y| < BALL_RADIUS`. The returned point is
//! re-checked constraint by constraint with a dense eigendecomposition.

use std::fmt::Write as _;
use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::lmi::{
    min_eigenvalue, svec, svec_len, sym_part, AffineMat, Assignment, Coord, MatVar, ScalarVar,
    Sense, SymExpr, VarId,
};

/// Largest scalarized problem accepted.
pub const MAX_SCALAR_VARS: usize = 2000;
/// Phase I accepts `s <= FEAS_TOL` as feasible.
pub const FEAS_TOL: f64 = 1e-8;
/// Phase I lower bound above this certifies infeasibility.
pub const INFEAS_TOL: f64 = 1e-7;
/// Every scalar coordinate stays in this ball.
pub const BALL_RADIUS: f64 = 1e6;
/// Relative duality gap for phase II.
pub const GAP_TOL: f64 = 1e-9;
/// Barrier parameter decrease factor (`t <- t / 0.2`).
pub const BARRIER_DECREASE: f64 = 0.2;
/// Newton decrement below which an iterate counts as centered.
const CENTERED_DECREMENT: f64 = 1e-6;

const PHASE1_GAP: f64 = 1e-11;
const MAX_NEWTON: usize = 200;
const MAX_OUTER: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Symmetric(usize),
    Scalar,
}

impl VarKind {
    pub fn len(self) -> usize {
        match self {
            VarKind::Symmetric(n) => svec_len(n),
            VarKind::Scalar => 1,
        }
    }
}

/// Decision variable with optional bounds. For matrices the bounds are on
/// eigenvalues: `lower I <= M <= upper I`.
#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct SdpProblem {
    pub vars: Vec<Variable>,
    pub constraints: Vec<SymExpr>,
    pub objective: Vec<(VarId, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Feasible,
    Infeasible,
    NumericalFailure,
}

impl Status {
    pub fn is_success(self) -> bool {
        matches!(self, Status::Optimal | Status::Feasible)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintResidual {
    pub name: String,
    pub sense: Sense,
    /// Smallest eigenvalue of the constraint written as `>= 0`, margin excluded.
    pub min_eigenvalue: f64,
    pub margin: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: Status,
    pub assignment: Assignment,
    pub residuals: Vec<ConstraintResidual>,
    pub iterations: usize,
    pub objective: Option<f64>,
    /// Optimal phase I relaxation `s` (negative when strictly feasible).
    pub phase1_value: f64,
    pub message: String,
}

impl SdpSolution {
    pub fn matrix(&self, var: MatVar) -> Option<DMatrix<f64>> {
        self.assignment.matrix(var)
    }

    pub fn scalar(&self, var: ScalarVar) -> Option<f64> {
        self.assignment.scalar(var)
    }
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_symmetric(&mut self, name: impl Into<String>, n: usize) -> MatVar {
        let id = VarId(self.vars.len());
        self.vars.push(Variable {
            name: name.into(),
            kind: VarKind::Symmetric(n),
            lower: None,
            upper: None,
        });
        MatVar { id, n }
    }

    pub fn add_scalar(&mut self, name: impl Into<String>) -> ScalarVar {
        let id = VarId(self.vars.len());
        self.vars.push(Variable {
            name: name.into(),
            kind: VarKind::Scalar,
            lower: None,
            upper: None,
        });
        ScalarVar { id }
    }

    pub fn bound_matrix(&mut self, var: MatVar, lower: Option<f64>, upper: Option<f64>) {
        let v = &mut self.vars[var.id.0];
        v.lower = lower;
        v.upper = upper;
    }

    pub fn bound_scalar(&mut self, var: ScalarVar, lower: Option<f64>, upper: Option<f64>) {
        let v = &mut self.vars[var.id.0];
        v.lower = lower;
        v.upper = upper;
    }

    pub fn add_constraint(&mut self, c: SymExpr) {
        self.constraints.push(c);
    }

    pub fn minimize(&mut self, var: ScalarVar, coef: f64) {
        self.objective.push((var.id, coef));
    }

    pub fn n_scalar(&self) -> usize {
        self.vars.iter().map(|v| v.kind.len()).sum()
    }

    fn offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.vars.len());
        let mut acc = 0;
        for v in &self.vars {
            off.push(acc);
            acc += v.kind.len();
        }
        off
    }

    fn bound_blocks(&self) -> Result<Vec<(String, AffineMat)>> {
        let mut out = Vec::new();
        for (i, v) in self.vars.iter().enumerate() {
            let id = VarId(i);
            let (var_mat, n) = match v.kind {
                VarKind::Symmetric(n) => (AffineMat::matrix_var(MatVar { id, n }), n),
                VarKind::Scalar => (AffineMat::scalar_identity(ScalarVar { id }, 1, 1.0), 1),
            };
            let eye = DMatrix::<f64>::identity(n, n);
            if let Some(lo) = v.lower {
                check_bound(lo, &v.name)?;
                out.push((format!("{} lower bound", v.name), var_mat.add_constant(&(&eye * -lo))));
            }
            if let Some(hi) = v.upper {
                check_bound(hi, &v.name)?;
                out.push((
                    format!("{} upper bound", v.name),
                    var_mat.scale(-1.0).add_constant(&(&eye * hi)),
                ));
            }
            if let (Some(lo), Some(hi)) = (v.lower, v.upper) {
                if lo >= hi {
                    return Err(Error::InvalidArgument(format!(
                        "empty bounds [{lo}, {hi}] on {}",
                        v.name
                    )));
                }
            }
        }
        Ok(out)
    }

    fn initial_point(&self) -> DVector<f64> {
        let mut y = Vec::with_capacity(self.n_scalar());
        for v in &self.vars {
            match v.kind {
                VarKind::Symmetric(n) => {
                    let s = start_value(v.lower, v.upper);
                    y.extend(svec(&(DMatrix::identity(n, n) * s)).iter());
                }
                VarKind::Scalar => y.push(start_value(v.lower, v.upper)),
            }
        }
        DVector::from_vec(y)
    }

    fn to_blocks(&self) -> Result<(Vec<Block>, Vec<Block>)> {
        let off = self.offsets();
        let flatten = |m: &AffineMat| -> Block {
            Block {
                g0: m.constant.clone(),
                gi: m
                    .terms
                    .iter()
                    .filter(|(_, v)| v.amax() > 0.0)
                    .map(|(Coord { var, comp }, v)| (off[var.0] + comp, sym_part(v)))
                    .collect(),
            }
        };
        let main = self
            .constraints
            .iter()
            .map(|c| flatten(&c.standard_form()))
            .collect();
        let hard = self.bound_blocks()?.iter().map(|(_, m)| flatten(m)).collect();
        Ok((main, hard))
    }

    fn cost(&self) -> DVector<f64> {
        let off = self.offsets();
        let mut c = DVector::zeros(self.n_scalar());
        for (id, coef) in &self.objective {
            c[off[id.0]] += coef;
        }
        c
    }

    fn assignment(&self, y: &DVector<f64>) -> Assignment {
        let mut a = Assignment::new();
        let off = self.offsets();
        for (i, v) in self.vars.iter().enumerate() {
            a.set_raw(VarId(i), y.rows(off[i], v.kind.len()).iter().copied().collect());
        }
        a
    }

    /// Writes the scalarized problem in the plain-text dump format:
    ///
    /// ```text
    /// sdp-dump 1
    /// variables <N>
    /// var <name> symmetric <n> offset <k>   (or: var <name> scalar offset <k>)
    /// objective <c_1> ... <c_N>
    /// blocks <K>
    /// block <index> size <s> name <name>
    /// F0
    /// <s rows, row-major, space separated>
    /// F <i>                                 (one per nonzero coefficient)
    /// <s rows>
    /// end
    /// ```
    ///
    /// Each block reads `F0 + sum_i y_i F_i >= 0`; strict margins and
    /// variable bounds are already folded in.
    pub fn write_dump(&self, w: &mut impl Write) -> Result<()> {
        let (main, hard) = self.to_blocks()?;
        let mut names: Vec<String> = self.constraints.iter().map(|c| c.name.clone()).collect();
        names.extend(self.bound_blocks()?.into_iter().map(|(n, _)| n));
        let mut s = String::new();
        let off = self.offsets();
        writeln!(s, "sdp-dump 1").ok();
        writeln!(s, "variables {}", self.n_scalar()).ok();
        for (v, o) in self.vars.iter().zip(&off) {
            match v.kind {
                VarKind::Symmetric(n) => writeln!(s, "var {} symmetric {n} offset {o}", v.name),
                VarKind::Scalar => writeln!(s, "var {} scalar offset {o}", v.name),
            }
            .ok();
        }
        let c = self.cost();
        writeln!(s, "objective {}", join(c.iter())).ok();
        writeln!(s, "blocks {}", main.len() + hard.len()).ok();
        let write_mat = |s: &mut String, m: &DMatrix<f64>| {
            for r in 0..m.nrows() {
                writeln!(s, "{}", join(m.row(r).iter())).ok();
            }
        };
        for (k, (b, name)) in main.iter().chain(&hard).zip(&names).enumerate() {
            writeln!(s, "block {k} size {} name {}", b.g0.nrows(), name.replace(' ', "_")).ok();
            writeln!(s, "F0").ok();
            write_mat(&mut s, &b.g0);
            for (i, g) in &b.gi {
                writeln!(s, "F {i}").ok();
                write_mat(&mut s, g);
            }
        }
        writeln!(s, "end").ok();
        w.write_all(s.as_bytes())?;
        Ok(())
    }
}

fn join<'a>(it: impl Iterator<Item = &'a f64>) -> String {
    it.map(|v| format!("{v:.17e}")).collect::<Vec<_>>().join(" ")
}

fn check_bound(v: f64, name: &str) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite bound on {name}")));
    }
    Ok(())
}

fn start_value(lower: Option<f64>, upper: Option<f64>) -> f64 {
    match (lower, upper) {
        (Some(lo), Some(hi)) => {
            if lo < 1.0 && 1.0 < hi {
                1.0
            } else {
                0.5 * (lo + hi)
            }
        }
        (Some(lo), None) => (lo + 1.0).max(1.0),
        (None, Some(hi)) => (hi - 1.0).min(1.0),
        (None, None) => 1.0,
    }
}

/// `G0 + sum_i y_i G_i`, with sparse coefficient list.
#[derive(Debug, Clone)]
struct Block {
    g0: DMatrix<f64>,
    gi: Vec<(usize, DMatrix<f64>)>,
}

impl Block {
    fn size(&self) -> usize {
        self.g0.nrows()
    }

    fn eval(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let mut m = self.g0.clone();
        for (i, g) in &self.gi {
            if y[*i] != 0.0 {
                m += g * y[*i];
            }
        }
        m
    }

    /// Adds `s I` with `s` at coordinate `idx`.
    fn relaxed(&self, idx: usize) -> Block {
        let n = self.size();
        let mut b = self.clone();
        b.gi.push((idx, DMatrix::identity(n, n)));
        b
    }
}

struct Barrier<'a> {
    blocks: &'a [Block],
    cost: &'a DVector<f64>,
    ball_dims: usize,
}

struct Center {
    y: DVector<f64>,
    newton_steps: usize,
    decrement: f64,
}

impl Barrier<'_> {
    fn degree(&self) -> f64 {
        (self.blocks.iter().map(Block::size).sum::<usize>() + 1) as f64
    }

    fn ball_slack(&self, y: &DVector<f64>) -> f64 {
        let r2: f64 = y.rows(0, self.ball_dims).norm_squared();
        BALL_RADIUS * BALL_RADIUS - r2
    }

    fn factor(&self, y: &DVector<f64>) -> Option<Vec<Cholesky<f64, Dyn>>> {
        if self.ball_slack(y) <= 0.0 {
            return None;
        }
        self.blocks
            .iter()
            .map(|b| {
                let m = b.eval(y);
                if m.iter().any(|v| !v.is_finite()) {
                    return None;
                }
                Cholesky::new(sym_part(&m))
            })
            .collect()
    }

    fn value(&self, t: f64, y: &DVector<f64>) -> Option<f64> {
        let chols = self.factor(y)?;
        let mut v = t * self.cost.dot(y) - self.ball_slack(y).ln();
        for ch in &chols {
            v -= 2.0 * ch.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        }
        Some(v)
    }

    fn grad_hess(&self, t: f64, y: &DVector<f64>, chols: &[Cholesky<f64, Dyn>]) -> (DVector<f64>, DMatrix<f64>) {
        let n = y.len();
        let mut g = self.cost * t;
        let mut h = DMatrix::zeros(n, n);
        let slack = self.ball_slack(y);
        for i in 0..self.ball_dims {
            g[i] += 2.0 * y[i] / slack;
            h[(i, i)] += 2.0 / slack;
            for j in 0..self.ball_dims {
                h[(i, j)] += 4.0 * y[i] * y[j] / (slack * slack);
            }
        }
        for (b, ch) in self.blocks.iter().zip(chols) {
            let l = ch.l();
            let w: Vec<(usize, DMatrix<f64>)> = b
                .gi
                .iter()
                .map(|(i, gm)| {
                    // W = L^{-1} G L^{-T}
                    let x = l.solve_lower_triangular(gm).expect("nonsingular factor");
                    let w = l
                        .solve_lower_triangular(&x.transpose())
                        .expect("nonsingular factor");
                    (*i, w)
                })
                .collect();
            for (a, (i, wi)) in w.iter().enumerate() {
                g[*i] -= wi.trace();
                for (j, wj) in w.iter().skip(a) {
                    let v = wi.dot(wj);
                    h[(*i, *j)] += v;
                    if *i != *j {
                        h[(*j, *i)] += v;
                    }
                }
            }
        }
        (g, h)
    }

    fn solve_newton(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
        let n = h.nrows();
        let scale = h.diagonal().iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1e-300);
        let mut ridge = 0.0;
        for _ in 0..8 {
            let mut hr = h.clone();
            for i in 0..n {
                hr[(i, i)] += ridge;
            }
            if let Some(ch) = Cholesky::new(hr) {
                let dx = ch.solve(&(-g));
                if dx.iter().all(|v| v.is_finite()) {
                    return Some(dx);
                }
            }
            ridge = if ridge == 0.0 { 1e-14 * scale } else { ridge * 100.0 };
        }
        None
    }

    /// Initial weight that makes `y` closest to centered in the local norm.
    fn initial_weight(&self, y: &DVector<f64>) -> f64 {
        let Some(chols) = self.factor(y) else { return 1.0 };
        let (gb, h) = self.grad_hess(0.0, y, &chols);
        let (Some(hc), Some(hg)) = (Self::solve_newton(&h, self.cost), Self::solve_newton(&h, &gb)) else {
            return 1.0;
        };
        // solve_newton returns -H^{-1} v
        let cc = -self.cost.dot(&hc);
        let cg = -self.cost.dot(&hg);
        if !(cc > 0.0) || !cg.is_finite() {
            return 1.0;
        }
        (-cg / cc).clamp(1.0, 1e8)
    }

    /// Damped Newton on the barrier at weight `t`; stops early once
    /// coordinate `stop_below_zero` turns negative.
    fn center(&self, t: f64, mut y: DVector<f64>, stop_below_zero: Option<usize>) -> Result<Center> {
        let mut steps = 0;
        let mut decrement = f64::INFINITY;
        for _ in 0..MAX_NEWTON {
            if stop_below_zero.is_some_and(|i| y[i] < 0.0) {
                break;
            }
            let chols = self
                .factor(&y)
                .ok_or_else(|| Error::Numerical("iterate left the feasible cone".into()))?;
            let (g, h) = self.grad_hess(t, &y, &chols);
            let dx = Self::solve_newton(&h, &g)
                .ok_or_else(|| Error::Numerical("singular Newton system".into()))?;
            let dec = -g.dot(&dx);
            decrement = dec;
            steps += 1;
            if !(dec > 1e-12) {
                break;
            }
            let f0 = self.value(t, &y).expect("current iterate is interior");
            let mut alpha = 1.0;
            let mut moved = false;
            while alpha > 1e-16 {
                let trial = &y + &dx * alpha;
                if let Some(f1) = self.value(t, &trial) {
                    if f1 <= f0 - 0.25 * alpha * dec {
                        y = trial;
                        moved = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !moved {
                break;
            }
        }
        Ok(Center {
            y,
            newton_steps: steps,
            decrement,
        })
    }
}

/// Dense symmetric PSD test: `(min_eig >= -tol, min_eig)`.
pub fn check_psd(m: &DMatrix<f64>, tol: f64) -> Result<(bool, f64)> {
    if let Some(idx) = m.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "check_psd input".into(),
            index: idx,
        });
    }
    if !m.is_square() {
        return Err(Error::InvalidArgument("check_psd needs a square matrix".into()));
    }
    let asym = (m - m.transpose()).amax();
    if asym > 1e-10 {
        log::warn!("check_psd: symmetrizing input with asymmetry {asym:.3e}");
    }
    let lam = min_eigenvalue(m);
    Ok((lam >= -tol, lam))
}

/// Solves `problem`; see the module documentation for the method.
pub fn solve(problem: &SdpProblem) -> Result<SdpSolution> {
    let n = problem.n_scalar();
    if n == 0 {
        return Err(Error::InvalidArgument("problem has no decision variables".into()));
    }
    if n > MAX_SCALAR_VARS {
        return Err(Error::InvalidArgument(format!(
            "{n} scalar variables exceed the limit of {MAX_SCALAR_VARS}"
        )));
    }
    let (main, hard) = problem.to_blocks()?;
    let y0 = problem.initial_point();

    // phase I on (y, s)
    let s_idx = n;
    let mut p1_blocks: Vec<Block> = main.iter().map(|b| b.relaxed(s_idx)).collect();
    p1_blocks.extend(hard.iter().cloned());
    p1_blocks.push(Block {
        g0: DMatrix::from_element(1, 1, 1.0),
        gi: vec![(s_idx, DMatrix::from_element(1, 1, 1.0))],
    });
    let hard_ok = hard.iter().all(|b| Cholesky::new(sym_part(&b.eval(&y0))).is_some());
    if !hard_ok {
        return Err(Error::Numerical("initial point violates variable bounds".into()));
    }
    let worst = main
        .iter()
        .map(|b| min_eigenvalue(&b.eval(&y0)))
        .fold(f64::INFINITY, f64::min);
    let s0 = if worst.is_finite() { (-worst).max(0.0) + 1.0 } else { 0.0 };
    let mut z = DVector::zeros(n + 1);
    z.rows_mut(0, n).copy_from(&y0);
    z[s_idx] = s0;
    let mut p1_cost = DVector::zeros(n + 1);
    p1_cost[s_idx] = 1.0;
    let p1 = Barrier {
        blocks: &p1_blocks,
        cost: &p1_cost,
        ball_dims: n,
    };
    let mut iterations = 0;
    // a large first weight keeps phase I from drifting along recession directions
    let mut t = p1.initial_weight(&z).max(p1.degree());
    let mut phase1_done = false;
    let mut gap = f64::INFINITY;
    if main.is_empty() {
        z[s_idx] = -1.0;
        phase1_done = true;
    }
    for _ in 0..MAX_OUTER {
        if phase1_done {
            break;
        }
        let c = p1.center(t, z.clone(), Some(s_idx))?;
        iterations += c.newton_steps;
        z = c.y;
        gap = p1.degree() / t;
        if z[s_idx] < 0.0 || gap <= PHASE1_GAP {
            break;
        }
        t /= BARRIER_DECREASE;
    }
    let s = z[s_idx];
    let y = z.rows(0, n).into_owned();
    let lower = s - gap;
    log::debug!("phase I: s = {s:.3e}, lower bound {lower:.3e}, {iterations} Newton steps");

    if s >= 0.0 {
        if lower > INFEAS_TOL {
            return Ok(finish(problem, y, Status::Infeasible, iterations, s, format!(
                "phase I certifies infeasibility: relaxation >= {lower:.3e}"
            )));
        }
        if s > FEAS_TOL {
            return Ok(finish(problem, y, Status::NumericalFailure, iterations, s, format!(
                "borderline feasibility: relaxation in [{lower:.3e}, {s:.3e}]"
            )));
        }
    }

    if problem.objective.is_empty() {
        let sol = finish(problem, y, Status::Feasible, iterations, s, String::new());
        return Ok(verified(sol));
    }

    // phase II; a borderline-feasible start is handled on the relaxed cone
    let relax = if s >= 0.0 { s + FEAS_TOL } else { 0.0 };
    let mut p2_blocks: Vec<Block> = main
        .iter()
        .map(|b| {
            let mut b = b.clone();
            let k = b.size();
            b.g0 += DMatrix::<f64>::identity(k, k) * relax;
            b
        })
        .collect();
    p2_blocks.extend(hard.iter().cloned());
    let cost = problem.cost();
    let p2 = Barrier {
        blocks: &p2_blocks,
        cost: &cost,
        ball_dims: n,
    };
    let mut y = y;
    let mut t = p2.initial_weight(&y);
    let mut converged = false;
    for _ in 0..MAX_OUTER {
        let c = p2.center(t, y.clone(), None)?;
        iterations += c.newton_steps;
        y = c.y;
        let obj = cost.dot(&y);
        if c.decrement <= CENTERED_DECREMENT && p2.degree() / t <= GAP_TOL * (1.0 + obj.abs()) {
            converged = true;
            break;
        }
        t /= BARRIER_DECREASE;
    }
    let status = if converged { Status::Optimal } else { Status::NumericalFailure };
    let msg = if converged {
        String::new()
    } else {
        "phase II did not reach the duality-gap tolerance".into()
    };
    Ok(verified(finish(problem, y, status, iterations, s, msg)))
}

fn finish(
    problem: &SdpProblem,
    y: DVector<f64>,
    status: Status,
    iterations: usize,
    phase1_value: f64,
    message: String,
) -> SdpSolution {
    let assignment = problem.assignment(&y);
    let residuals = problem
        .constraints
        .iter()
        .map(|c| {
            let r = c.residual(&assignment);
            ConstraintResidual {
                name: c.name.clone(),
                sense: c.sense,
                min_eigenvalue: r,
                margin: c.margin,
                satisfied: c.satisfied(&assignment, FEAS_TOL),
            }
        })
        .collect();
    let objective = if problem.objective.is_empty() {
        None
    } else {
        Some(problem.cost().dot(&y))
    };
    SdpSolution {
        status,
        assignment,
        residuals,
        iterations,
        objective,
        phase1_value,
        message,
    }
}

/// Downgrades a success whose point fails the independent eigenvalue check.
fn verified(mut sol: SdpSolution) -> SdpSolution {
    if sol.status.is_success() {
        if let Some(bad) = sol.residuals.iter().find(|r| !r.satisfied) {
            sol.message = format!(
                "re-verification failed on {} (min eigenvalue {:.3e})",
                bad.name, bad.min_eigenvalue
            );
            sol.status = Status::NumericalFailure;
        }
    }
    sol
}

/// Result of [`bisect_feasibility`].
#[derive(Debug, Clone)]
pub struct Bisection {
    pub value: f64,
    pub solution: SdpSolution,
    pub evaluations: usize,
}

/// Smallest `t` in `[lo, hi]` (to within `tol`) at which `template(t)` is
/// feasible. Feasibility must be monotone nondecreasing in `t`.
pub fn bisect_feasibility<F>(template: F, lo: f64, hi: f64, tol: f64) -> Result<Bisection>
where
    F: Fn(f64) -> Result<SdpProblem>,
{
    if !(lo < hi) || !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bisection needs lo < hi and tol > 0 (got [{lo}, {hi}], tol {tol})"
        )));
    }
    let try_at = |t: f64| -> Result<SdpSolution> { solve(&template(t)?) };
    let mut evaluations = 1;
    let mut best = try_at(hi)?;
    if !best.status.is_success() {
        return Err(Error::BracketFailed(hi));
    }
    let at_lo = try_at(lo)?;
    evaluations += 1;
    if at_lo.status.is_success() {
        return Ok(Bisection {
            value: lo,
            solution: at_lo,
            evaluations,
        });
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > tol {
        let mid = 0.5 * (a + b);
        let sol = try_at(mid)?;
        evaluations += 1;
        if sol.status.is_success() {
            b = mid;
            best = sol;
        } else {
            a = mid;
        }
    }
    Ok(Bisection {
        value: b,
        solution: best,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmi::{l2_lmi, AffineMat};
    use crate::system::StateSpace;
    use approx::assert_relative_eq;

    fn m1(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn lyapunov_feasibility_accepts_identity() {
        let mut p = SdpProblem::new();
        let m = p.add_symmetric("M", 2);
        p.bound_matrix(m, Some(1e-6), None);
        let e = AffineMat::matrix_var(m).scale(-2.0);
        p.add_constraint(SymExpr::new("lyap", e, Sense::NegSemidef).unwrap());
        let sol = solve(&p).unwrap();
        assert_eq!(sol.status, Status::Feasible);
        let mm = sol.matrix(m).unwrap();
        assert!(min_eigenvalue(&mm) >= 1e-6 - 1e-8);
        assert!(sol.residuals.iter().all(|r| r.satisfied));
    }

    #[test]
    fn scalar_schur_minimum() {
        // [[-2M, M], [M, -g]] <= 0, M >= 1  =>  g >= M / 2, optimum 1/2 at M = 1
        let mut p = SdpProblem::new();
        let m = p.add_symmetric("M", 1);
        let g = p.add_scalar("g");
        p.bound_matrix(m, Some(1.0), None);
        let mv = AffineMat::matrix_var(m);
        let e = AffineMat::block(&[
            vec![mv.scale(-2.0), mv.clone()],
            vec![mv.clone(), AffineMat::scalar_identity(g, 1, -1.0)],
        ])
        .unwrap();
        p.add_constraint(SymExpr::new("schur", e, Sense::NegSemidef).unwrap());
        p.minimize(g, 1.0);
        let sol = solve(&p).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        // oracle: grid over M of the closed-form g(M) = M / 2
        let grid_min = (0..=1000)
            .map(|k| 1.0 + k as f64 * 0.01)
            .map(|mm| mm * mm / (2.0 * mm))
            .fold(f64::INFINITY, f64::min);
        assert_relative_eq!(sol.scalar(g).unwrap(), grid_min, epsilon = 1e-7);
        assert_relative_eq!(sol.matrix(m).unwrap()[(0, 0)], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn first_order_l2_gain() {
        let ss = StateSpace::new(m1(-1.0), m1(1.0), m1(1.0), m1(0.0)).unwrap();
        let mut p = SdpProblem::new();
        let m = p.add_symmetric("M", 1);
        let g2 = p.add_scalar("gamma2");
        p.bound_matrix(m, Some(1e-6), None);
        p.bound_scalar(g2, Some(0.0), None);
        p.add_constraint(l2_lmi(&ss, m, g2).unwrap());
        p.minimize(g2, 1.0);
        let sol = solve(&p).unwrap();
        assert_eq!(sol.status, Status::Optimal, "{}", sol.message);
        assert!((sol.scalar(g2).unwrap().sqrt() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn infeasible_detected() {
        // M >= 1 and M <= -1 through a constraint
        let mut p = SdpProblem::new();
        let m = p.add_symmetric("M", 1);
        p.bound_matrix(m, Some(1.0), None);
        let e = AffineMat::matrix_var(m).add_constant(&m1(1.0));
        p.add_constraint(SymExpr::new("neg", e, Sense::NegSemidef).unwrap());
        let sol = solve(&p).unwrap();
        assert_eq!(sol.status, Status::Infeasible);
        assert!(sol.phase1_value > INFEAS_TOL);
    }

    #[test]
    fn tighter_bound_never_lowers_objective() {
        let build = |lo: f64| {
            let mut p = SdpProblem::new();
            let m = p.add_symmetric("M", 1);
            let g = p.add_scalar("g");
            p.bound_matrix(m, Some(lo), None);
            let mv = AffineMat::matrix_var(m);
            let e = AffineMat::block(&[
                vec![mv.scale(-2.0), mv.clone()],
                vec![mv.clone(), AffineMat::scalar_identity(g, 1, -1.0)],
            ])
            .unwrap();
            p.add_constraint(SymExpr::new("schur", e, Sense::NegSemidef).unwrap());
            p.minimize(g, 1.0);
            solve(&p).unwrap().objective.unwrap()
        };
        let a = build(1.0);
        let b = build(2.0);
        assert!(b >= a - 1e-9);
        assert_relative_eq!(b, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn deterministic() {
        let ss = StateSpace::new(m1(-1.0), m1(1.0), m1(1.0), m1(0.0)).unwrap();
        let run = || {
            let mut p = SdpProblem::new();
            let m = p.add_symmetric("M", 1);
            let g2 = p.add_scalar("gamma2");
            p.bound_matrix(m, Some(1e-6), None);
            p.add_constraint(l2_lmi(&ss, m, g2).unwrap());
            p.minimize(g2, 1.0);
            let s = solve(&p).unwrap();
            (s.scalar(g2).unwrap().to_bits(), s.matrix(m).unwrap()[(0, 0)].to_bits())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn bisection_on_first_order_gain() {
        let ss = StateSpace::new(m1(-1.0), m1(1.0), m1(1.0), m1(0.0)).unwrap();
        let template = |gamma: f64| -> Result<SdpProblem> {
            let mut p = SdpProblem::new();
            let m = p.add_symmetric("M", 1);
            p.bound_matrix(m, Some(1e-6), None);
            p.add_constraint(crate::lmi::qsr_lmi(
                &ss,
                &crate::lmi::QsrSupply::l2(gamma, 1, 1),
                m,
            )?);
            Ok(p)
        };
        let b = bisect_feasibility(template, 0.1, 3.0, 1e-4).unwrap();
        assert!((b.value - 1.0).abs() < 1e-3, "{}", b.value);
        assert!(matches!(
            bisect_feasibility(template, 0.1, 0.5, 1e-4),
            Err(Error::BracketFailed(_))
        ));
        let always = |_t: f64| -> Result<SdpProblem> {
            let mut p = SdpProblem::new();
            let m = p.add_symmetric("M", 1);
            p.add_constraint(SymExpr::new(
                "triv",
                AffineMat::matrix_var(m).scale(-1.0),
                Sense::NegSemidef,
            )?);
            Ok(p)
        };
        assert_eq!(bisect_feasibility(always, 0.25, 1.0, 1e-3).unwrap().value, 0.25);
    }

    #[test]
    fn psd_checks() {
        assert_eq!(check_psd(&DMatrix::identity(3, 3), 0.0).unwrap(), (true, 1.0));
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1e-9]));
        let (ok, lam) = check_psd(&d, 1e-8).unwrap();
        assert!(ok);
        assert_relative_eq!(lam, -1e-9, epsilon = 1e-20);
        let reference_m = DMatrix::from_row_slice(2, 2, &[0.592, 0.0896, 0.0896, 0.0543]);
        let (ok, lam) = check_psd(&reference_m, 0.0).unwrap();
        // characteristic polynomial of a 2x2: lambda = (tr - sqrt(tr^2 - 4 det)) / 2
        let (tr, det): (f64, f64) = (0.592 + 0.0543, 0.592 * 0.0543 - 0.0896 * 0.0896);
        assert!(ok);
        assert_relative_eq!(lam, 0.5 * (tr - (tr * tr - 4.0 * det).sqrt()), epsilon = 1e-12);
        assert!((lam - 0.0398).abs() < 5e-4);
        let mut bad = DMatrix::identity(2, 2);
        bad[(0, 1)] = f64::NAN;
        assert!(check_psd(&bad, 0.0).is_err());
    }

    #[test]
    fn dump_format() {
        let mut p = SdpProblem::new();
        let m = p.add_symmetric("M", 2);
        let g = p.add_scalar("g");
        p.bound_matrix(m, Some(1e-6), None);
        let e = AffineMat::matrix_var(m).add(&AffineMat::scalar_identity(g, 2, -1.0));
        p.add_constraint(SymExpr::new("c", e, Sense::NegSemidef).unwrap());
        p.minimize(g, 1.0);
        let mut buf = Vec::new();
        p.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("sdp-dump 1\nvariables 4\n"));
        assert!(text.contains("var M symmetric 2 offset 0"));
        assert!(text.contains("var g scalar offset 3"));
        assert!(text.contains("blocks 2"));
        assert!(text.trim_end().ends_with("end"));
    }

    #[test]
    fn size_guard() {
        let mut p = SdpProblem::new();
        p.add_symmetric("big", 70);
        assert!(solve(&p).is_err());
        assert!(solve(&SdpProblem::new()).is_err());
    }
}
