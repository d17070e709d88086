//! Symmetric matrix expressions affine in decision variables, and the
//! vertex matrix inequalities for the dissipativity notions.
//!
//! Symmetric matrix variables are scalarized over the upper triangle with
//! `sqrt(2)` scaling on off-diagonal entries, so the trace inner product
//! of matrices equals the dot product of their coordinate vectors.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::StateSpace;

const SYM_TOL: f64 = 1e-12;

/// Threshold on `lambda_max(R)` for the incremental implication.
pub const R_NSD_TOL: f64 = 1e-10;

/// Index of a decision variable inside a problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

/// One scalar coordinate of a decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Coord {
    pub var: VarId,
    pub comp: usize,
}

/// Handle to an `n x n` symmetric matrix variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatVar {
    pub id: VarId,
    pub n: usize,
}

/// Handle to a scalar variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScalarVar {
    pub id: VarId,
}

/// Number of scalar coordinates of an `n x n` symmetric matrix.
pub fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Position of entry `(r, c)` (any order) in the upper-triangular packing.
pub fn svec_index(n: usize, r: usize, c: usize) -> usize {
    let (r, c) = if r <= c { (r, c) } else { (c, r) };
    r * n - r * r.saturating_sub(1) / 2 + (c - r)
}

/// Basis matrix of coordinate `k`.
pub fn svec_basis(n: usize, k: usize) -> DMatrix<f64> {
    let (r, c) = svec_pair(n, k);
    let mut e = DMatrix::zeros(n, n);
    if r == c {
        e[(r, r)] = 1.0;
    } else {
        let v = std::f64::consts::FRAC_1_SQRT_2;
        e[(r, c)] = v;
        e[(c, r)] = v;
    }
    e
}

/// Inverse of [`svec_index`].
pub fn svec_pair(n: usize, k: usize) -> (usize, usize) {
    let mut idx = 0;
    for r in 0..n {
        for c in r..n {
            if idx == k {
                return (r, c);
            }
            idx += 1;
        }
    }
    panic!("svec coordinate {k} out of range for n = {n}");
}

/// Packs a symmetric matrix.
pub fn svec(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(svec_len(n));
    for r in 0..n {
        for c in r..n {
            if r == c {
                out.push(m[(r, r)]);
            } else {
                out.push(std::f64::consts::SQRT_2 * 0.5 * (m[(r, c)] + m[(c, r)]));
            }
        }
    }
    DVector::from_vec(out)
}

/// Unpacks coordinates into a symmetric matrix.
pub fn smat(n: usize, v: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for r in 0..n {
        for c in r..n {
            if r == c {
                m[(r, r)] = v[k];
            } else {
                let x = v[k] * std::f64::consts::FRAC_1_SQRT_2;
                m[(r, c)] = x;
                m[(c, r)] = x;
            }
            k += 1;
        }
    }
    m
}

/// Values of decision variables, keyed by variable, in scalarized form.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assignment {
    values: BTreeMap<VarId, Vec<f64>>,
}

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_matrix(&mut self, var: MatVar, m: &DMatrix<f64>) -> &mut Self {
        self.values.insert(var.id, svec(m).as_slice().to_vec());
        self
    }

    pub fn set_scalar(&mut self, var: ScalarVar, v: f64) -> &mut Self {
        self.values.insert(var.id, vec![v]);
        self
    }

    pub fn set_raw(&mut self, id: VarId, coords: Vec<f64>) -> &mut Self {
        self.values.insert(id, coords);
        self
    }

    pub fn matrix(&self, var: MatVar) -> Option<DMatrix<f64>> {
        self.values.get(&var.id).map(|v| smat(var.n, v))
    }

    pub fn scalar(&self, var: ScalarVar) -> Option<f64> {
        self.values.get(&var.id).map(|v| v[0])
    }

    pub fn coord(&self, c: Coord) -> f64 {
        self.values
            .get(&c.var)
            .and_then(|v| v.get(c.comp))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn raw(&self, id: VarId) -> Option<&[f64]> {
        self.values.get(&id).map(Vec::as_slice)
    }
}

/// Matrix-valued affine function of the decision variables.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMat {
    pub constant: DMatrix<f64>,
    pub terms: BTreeMap<Coord, DMatrix<f64>>,
}

impl AffineMat {
    pub fn constant(m: DMatrix<f64>) -> Self {
        Self {
            constant: m,
            terms: BTreeMap::new(),
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(DMatrix::identity(n, n))
    }

    pub fn matrix_var(var: MatVar) -> Self {
        let n = var.n;
        let terms = (0..svec_len(n))
            .map(|k| (Coord { var: var.id, comp: k }, svec_basis(n, k)))
            .collect();
        Self {
            constant: DMatrix::zeros(n, n),
            terms,
        }
    }

    /// `coef * s * I_n` for a scalar variable `s`.
    pub fn scalar_identity(var: ScalarVar, n: usize, coef: f64) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(Coord { var: var.id, comp: 0 }, DMatrix::identity(n, n) * coef);
        Self {
            constant: DMatrix::zeros(n, n),
            terms,
        }
    }

    pub fn nrows(&self) -> usize {
        self.constant.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.constant.ncols()
    }

    fn map(&self, f: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> Self {
        Self {
            constant: f(&self.constant),
            terms: self.terms.iter().map(|(k, v)| (*k, f(v))).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        self.map(|m| m.transpose())
    }

    pub fn scale(&self, k: f64) -> Self {
        self.map(|m| m * k)
    }

    /// `L * self`.
    pub fn lmul(&self, l: &DMatrix<f64>) -> Self {
        self.map(|m| l * m)
    }

    /// `self * R`.
    pub fn rmul(&self, r: &DMatrix<f64>) -> Self {
        self.map(|m| m * r)
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.constant += &other.constant;
        for (k, v) in &other.terms {
            out.terms
                .entry(*k)
                .and_modify(|m| *m += v)
                .or_insert_with(|| v.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn add_constant(&self, m: &DMatrix<f64>) -> Self {
        let mut out = self.clone();
        out.constant += m;
        out
    }

    /// Assembles a block matrix. Every row of blocks must share heights and
    /// every column widths.
    pub fn block(rows: &[Vec<AffineMat>]) -> Result<Self> {
        let heights: Vec<usize> = rows.iter().map(|r| r[0].nrows()).collect();
        let widths: Vec<usize> = rows[0].iter().map(AffineMat::ncols).collect();
        let (h, w) = (heights.iter().sum(), widths.iter().sum());
        let mut out = Self::zeros(h, w);
        let mut r0 = 0;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != widths.len() {
                return Err(Error::Dimension {
                    context: format!("block row {i}"),
                    expected: widths.len(),
                    got: row.len(),
                });
            }
            let mut c0 = 0;
            for (j, blk) in row.iter().enumerate() {
                if blk.nrows() != heights[i] || blk.ncols() != widths[j] {
                    return Err(Error::Dimension {
                        context: format!("block ({i}, {j}) shape"),
                        expected: heights[i] * widths[j],
                        got: blk.nrows() * blk.ncols(),
                    });
                }
                out.constant
                    .view_mut((r0, c0), (heights[i], widths[j]))
                    .copy_from(&blk.constant);
                for (k, v) in &blk.terms {
                    let t = out.terms.entry(*k).or_insert_with(|| DMatrix::zeros(h, w));
                    t.view_mut((r0, c0), (heights[i], widths[j])).copy_from(v);
                }
                c0 += widths[j];
            }
            r0 += heights[i];
        }
        Ok(out)
    }

    pub fn eval(&self, values: &Assignment) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (k, v) in &self.terms {
            let x = values.coord(*k);
            if x != 0.0 {
                m += v * x;
            }
        }
        m
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let sym = |m: &DMatrix<f64>| m.is_square() && (m - m.transpose()).amax() <= tol;
        sym(&self.constant) && self.terms.values().all(sym)
    }
}

/// Direction of a matrix inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    /// `F <= 0`
    NegSemidef,
    /// `F < 0`
    NegDef,
    /// `F >= 0`
    PosSemidef,
    /// `F > 0`
    PosDef,
}

impl Sense {
    pub fn is_strict(self) -> bool {
        matches!(self, Sense::NegDef | Sense::PosDef)
    }

    fn sign(self) -> f64 {
        match self {
            Sense::NegSemidef | Sense::NegDef => -1.0,
            Sense::PosSemidef | Sense::PosDef => 1.0,
        }
    }
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::NegSemidef => "<= 0",
            Sense::NegDef => "< 0",
            Sense::PosSemidef => ">= 0",
            Sense::PosDef => "> 0",
        })
    }
}

/// Symmetric affine matrix inequality `F(v) (sense) 0`.
///
/// Strict senses are enforced with the margin
/// `eps = 1e-7 * (1 + ||F_const||_2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymExpr {
    pub name: String,
    pub expr: AffineMat,
    pub sense: Sense,
    pub margin: f64,
}

impl SymExpr {
    pub fn new(name: impl Into<String>, expr: AffineMat, sense: Sense) -> Result<Self> {
        if !expr.is_symmetric(SYM_TOL) {
            return Err(Error::InvalidArgument("matrix inequality is not symmetric".into()));
        }
        let margin = if sense.is_strict() {
            1e-7 * (1.0 + spectral_norm_sym(&expr.constant))
        } else {
            0.0
        };
        Ok(Self {
            name: name.into(),
            expr,
            sense,
            margin,
        })
    }

    pub fn size(&self) -> usize {
        self.expr.nrows()
    }

    pub fn eval(&self, values: &Assignment) -> DMatrix<f64> {
        self.expr.eval(values)
    }

    /// `G(v) >= 0` equivalent of this constraint, margin included.
    pub fn standard_form(&self) -> AffineMat {
        let g = self.expr.scale(self.sense.sign());
        if self.margin > 0.0 {
            let n = self.size();
            g.add_constant(&(DMatrix::identity(n, n) * -self.margin))
        } else {
            g
        }
    }

    /// Smallest eigenvalue of `+F` (for `>=`, `>`) or `-F` (for `<=`, `<`).
    pub fn residual(&self, values: &Assignment) -> f64 {
        min_eigenvalue(&(self.eval(values) * self.sense.sign()))
    }

    /// Whether `values` satisfy the constraint up to `tol`; strict senses
    /// additionally need their margin.
    pub fn satisfied(&self, values: &Assignment, tol: f64) -> bool {
        let r = self.residual(values);
        if self.sense.is_strict() {
            r > 0.0 && r >= self.margin - tol
        } else {
            r >= -tol
        }
    }
}

pub(crate) fn sym_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    sym_part(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    sym_part(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

pub(crate) fn spectral_norm_sym(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    sym_part(m)
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0_f64, |a, v| a.max(v.abs()))
}

/// Quadratic supply `(u, y)^T [[Q, S], [S^T, R]] (u, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QsrSupply {
    pub q: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl QsrSupply {
    pub fn new(q: DMatrix<f64>, s: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        let (n_u, n_y) = (q.nrows(), r.nrows());
        if !q.is_square() || !r.is_square() || s.nrows() != n_u || s.ncols() != n_y {
            return Err(Error::InvalidArgument(format!(
                "supply shapes Q {}x{}, S {}x{}, R {}x{} are inconsistent",
                q.nrows(),
                q.ncols(),
                s.nrows(),
                s.ncols(),
                r.nrows(),
                r.ncols()
            )));
        }
        if (&q - q.transpose()).amax() > SYM_TOL || (&r - r.transpose()).amax() > SYM_TOL {
            return Err(Error::InvalidArgument("Q and R must be symmetric".into()));
        }
        Ok(Self { q, s, r })
    }

    /// `(gamma^2 I, 0, -I)`.
    pub fn l2(gamma: f64, n_u: usize, n_y: usize) -> Self {
        Self {
            q: DMatrix::identity(n_u, n_u) * (gamma * gamma),
            s: DMatrix::zeros(n_u, n_y),
            r: -DMatrix::identity(n_y, n_y),
        }
    }

    /// `(0, I, 0)`.
    pub fn passivity(n: usize) -> Self {
        Self {
            q: DMatrix::zeros(n, n),
            s: DMatrix::identity(n, n),
            r: DMatrix::zeros(n, n),
        }
    }

    /// `(w I, 0, 0)`; used for the peak and generalized H2 notions.
    pub fn input_weight(w: f64, n_u: usize, n_y: usize) -> Self {
        Self {
            q: DMatrix::identity(n_u, n_u) * w,
            s: DMatrix::zeros(n_u, n_y),
            r: DMatrix::zeros(n_y, n_y),
        }
    }

    pub fn n_u(&self) -> usize {
        self.q.nrows()
    }

    pub fn n_y(&self) -> usize {
        self.r.nrows()
    }

    pub fn eval(&self, u: &DVector<f64>, y: &DVector<f64>) -> f64 {
        (u.transpose() * &self.q * u)[0]
            + 2.0 * (u.transpose() * &self.s * y)[0]
            + (y.transpose() * &self.r * y)[0]
    }

    /// `R <= 0`: the incremental and stability implications apply.
    pub fn r_is_nsd(&self) -> bool {
        max_eigenvalue(&self.r) <= R_NSD_TOL
    }

    fn matrix(&self) -> DMatrix<f64> {
        let (n_u, n_y) = (self.n_u(), self.n_y());
        let mut m = DMatrix::zeros(n_u + n_y, n_u + n_y);
        m.view_mut((0, 0), (n_u, n_u)).copy_from(&self.q);
        m.view_mut((0, n_u), (n_u, n_y)).copy_from(&self.s);
        m.view_mut((n_u, 0), (n_y, n_u)).copy_from(&self.s.transpose());
        m.view_mut((n_u, n_u), (n_y, n_y)).copy_from(&self.r);
        m
    }
}

fn check_var(ss: &StateSpace, m: MatVar) -> Result<()> {
    if m.n != ss.n_x() {
        return Err(Error::Dimension {
            context: "storage matrix variable".into(),
            expected: ss.n_x(),
            got: m.n,
        });
    }
    Ok(())
}

/// `[[A^T M + M A, M B], [B^T M, 0]]`.
fn storage_block(ss: &StateSpace, m: MatVar) -> Result<AffineMat> {
    let mv = AffineMat::matrix_var(m);
    let ma = mv.rmul(&ss.a);
    let top_left = ma.add(&ma.transpose());
    let mb = mv.rmul(&ss.b);
    AffineMat::block(&[
        vec![top_left, mb.clone()],
        vec![mb.transpose(), AffineMat::zeros(ss.n_u(), ss.n_u())],
    ])
}

/// Differential dissipativity inequality with constant storage matrix `M`:
/// `(*)^T [[0, M], [M, 0]] [[I, 0], [A, B]] - (*)^T [[Q, S], [S^T, R]] [[0, I], [C, D]] <= 0`.
pub fn qsr_lmi(ss: &StateSpace, supply: &QsrSupply, m: MatVar) -> Result<SymExpr> {
    check_var(ss, m)?;
    if supply.n_u() != ss.n_u() || supply.n_y() != ss.n_y() {
        return Err(Error::Dimension {
            context: "supply vs vertex matrices (n_u + n_y)".into(),
            expected: ss.n_u() + ss.n_y(),
            got: supply.n_u() + supply.n_y(),
        });
    }
    let (n_x, n_u, n_y) = (ss.n_x(), ss.n_u(), ss.n_y());
    let mut z = DMatrix::zeros(n_u + n_y, n_x + n_u);
    z.view_mut((0, n_x), (n_u, n_u)).copy_from(&DMatrix::identity(n_u, n_u));
    z.view_mut((n_u, 0), (n_y, n_x)).copy_from(&ss.c);
    z.view_mut((n_u, n_x), (n_y, n_u)).copy_from(&ss.d);
    let supply_term = z.transpose() * supply.matrix() * &z;
    let expr = storage_block(ss, m)?.add_constant(&(-sym_part(&supply_term)));
    SymExpr::new("qsr", expr, Sense::NegSemidef)
}

/// Incremental L2-gain inequality
/// `[[A^T M + M A, M B, C^T], [B^T M, -g2 I, D^T], [C, D, -I]] <= 0`.
pub fn l2_lmi(ss: &StateSpace, m: MatVar, gamma_sq: ScalarVar) -> Result<SymExpr> {
    check_var(ss, m)?;
    let (n_u, n_y) = (ss.n_u(), ss.n_y());
    let mv = AffineMat::matrix_var(m);
    let ma = mv.rmul(&ss.a);
    let mb = mv.rmul(&ss.b);
    let c = AffineMat::constant(ss.c.clone());
    let d = AffineMat::constant(ss.d.clone());
    let expr = AffineMat::block(&[
        vec![ma.add(&ma.transpose()), mb.clone(), c.transpose()],
        vec![
            mb.transpose(),
            AffineMat::scalar_identity(gamma_sq, n_u, -1.0),
            d.transpose(),
        ],
        vec![c, d, AffineMat::identity(n_y).scale(-1.0)],
    ])?;
    SymExpr::new("l2", expr, Sense::NegSemidef)
}

/// Incremental peak-to-peak inequalities for a fixed `kappa > 0`:
/// `[[A^T M + M A + k M, M B], [B^T M, -mu I]] < 0` and
/// `[[k M, 0, C^T], [0, (g - mu) I, D^T], [C, D, g I]] > 0`.
pub fn linf_lmis(
    ss: &StateSpace,
    m: MatVar,
    mu: ScalarVar,
    gamma: ScalarVar,
    kappa: f64,
) -> Result<(SymExpr, SymExpr)> {
    check_var(ss, m)?;
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidArgument(format!("kappa must be positive, got {kappa}")));
    }
    let (n_x, n_u, n_y) = (ss.n_x(), ss.n_u(), ss.n_y());
    let mv = AffineMat::matrix_var(m);
    let ma = mv.rmul(&ss.a);
    let mb = mv.rmul(&ss.b);
    let first = AffineMat::block(&[
        vec![ma.add(&ma.transpose()).add(&mv.scale(kappa)), mb.clone()],
        vec![mb.transpose(), AffineMat::scalar_identity(mu, n_u, -1.0)],
    ])?;
    let c = AffineMat::constant(ss.c.clone());
    let d = AffineMat::constant(ss.d.clone());
    let g_minus_mu = AffineMat::scalar_identity(gamma, n_u, 1.0)
        .add(&AffineMat::scalar_identity(mu, n_u, -1.0));
    let second = AffineMat::block(&[
        vec![mv.scale(kappa), AffineMat::zeros(n_x, n_u), c.transpose()],
        vec![AffineMat::zeros(n_u, n_x), g_minus_mu, d.transpose()],
        vec![c, d, AffineMat::scalar_identity(gamma, n_y, 1.0)],
    ])?;
    Ok((
        SymExpr::new("linf_decay", first, Sense::NegDef)?,
        SymExpr::new("linf_output", second, Sense::PosDef)?,
    ))
}

/// Incremental passivity inequality: [`qsr_lmi`] with `(Q, S, R) = (0, I, 0)`.
pub fn passivity_lmi(ss: &StateSpace, m: MatVar) -> Result<SymExpr> {
    if ss.n_u() != ss.n_y() {
        return Err(Error::Dimension {
            context: "passivity needs n_u = n_y".into(),
            expected: ss.n_u(),
            got: ss.n_y(),
        });
    }
    let mut e = qsr_lmi(ss, &QsrSupply::passivity(ss.n_u()), m)?;
    e.name = "passivity".into();
    Ok(e)
}

/// Generalized incremental H2 inequalities:
/// `[[A^T M + M A, M B], [B^T M, -g I]] < 0` and `[[M, C^T], [C, g I]] > 0`.
pub fn h2_lmis(ss: &StateSpace, m: MatVar, gamma: ScalarVar) -> Result<(SymExpr, SymExpr)> {
    check_var(ss, m)?;
    if ss.d.amax() != 0.0 {
        return Err(Error::DirectFeedthrough);
    }
    let (n_u, n_y) = (ss.n_u(), ss.n_y());
    let mv = AffineMat::matrix_var(m);
    let first = storage_block(ss, m)?.add(&AffineMat::block(&[
        vec![AffineMat::zeros(ss.n_x(), ss.n_x()), AffineMat::zeros(ss.n_x(), n_u)],
        vec![
            AffineMat::zeros(n_u, ss.n_x()),
            AffineMat::scalar_identity(gamma, n_u, -1.0),
        ],
    ])?);
    let c = AffineMat::constant(ss.c.clone());
    let second = AffineMat::block(&[
        vec![mv, c.transpose()],
        vec![c, AffineMat::scalar_identity(gamma, n_y, 1.0)],
    ])?;
    Ok((
        SymExpr::new("h2_energy", first, Sense::NegDef)?,
        SymExpr::new("h2_output", second, Sense::PosDef)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m1(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn first_order() -> StateSpace {
        StateSpace::new(m1(-1.0), m1(1.0), m1(1.0), m1(0.0)).unwrap()
    }

    const M: MatVar = MatVar { id: VarId(0), n: 1 };
    const G: ScalarVar = ScalarVar { id: VarId(1) };
    const MU: ScalarVar = ScalarVar { id: VarId(2) };

    fn assign(m: f64, g: f64, mu: f64) -> Assignment {
        let mut a = Assignment::new();
        a.set_matrix(M, &m1(m)).set_scalar(G, g).set_scalar(MU, mu);
        a
    }

    #[test]
    fn svec_round_trip_and_inner_product() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        let b = DMatrix::from_row_slice(3, 3, &[0.5, -1.0, 0.0, -1.0, 2.0, 1.5, 0.0, 1.5, -3.0]);
        assert!((smat(3, svec(&a).as_slice()) - &a).amax() < 1e-14);
        let tr = (&a * &b).trace();
        assert_relative_eq!(svec(&a).dot(&svec(&b)), tr, epsilon = 1e-12);
        for k in 0..svec_len(3) {
            let (r, c) = svec_pair(3, k);
            assert_eq!(svec_index(3, r, c), k);
            assert_eq!(svec_index(3, c, r), k);
        }
    }

    #[test]
    fn passivity_scalar_expansion() {
        let e = qsr_lmi(&first_order(), &QsrSupply::passivity(1), M).unwrap();
        let v = e.eval(&assign(1.0, 0.0, 0.0));
        assert_eq!(v, DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, 0.0]));
        assert!(e.satisfied(&assign(1.0, 0.0, 0.0), 1e-12));
        let v = e.eval(&assign(0.5, 0.0, 0.0));
        assert_eq!(v, DMatrix::from_row_slice(2, 2, &[-1.0, -0.5, -0.5, 0.0]));
        assert!(!e.satisfied(&assign(0.5, 0.0, 0.0), 1e-12));
        let p = passivity_lmi(&first_order(), M).unwrap();
        assert_eq!(p.expr, e.expr);
    }

    #[test]
    fn lyapunov_case() {
        let n = 2;
        let ss = StateSpace::new(
            -DMatrix::identity(n, n),
            DMatrix::zeros(n, 1),
            DMatrix::zeros(1, n),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        let zero = QsrSupply::new(DMatrix::zeros(1, 1), DMatrix::zeros(1, 1), DMatrix::zeros(1, 1)).unwrap();
        let mv = MatVar { id: VarId(0), n };
        let e = qsr_lmi(&ss, &zero, mv).unwrap();
        let mut a = Assignment::new();
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        a.set_matrix(mv, &m);
        let v = e.eval(&a);
        assert!((v.view((0, 0), (2, 2)) + &m * 2.0).amax() < 1e-12);
    }

    #[test]
    fn l2_first_order_entries() {
        let e = l2_lmi(&first_order(), M, G).unwrap();
        let v = e.eval(&assign(0.5, 1.0, 0.0));
        let expect = DMatrix::from_row_slice(3, 3, &[-1.0, 0.5, 1.0, 0.5, -1.0, 0.0, 1.0, 0.0, -1.0]);
        assert!((v - expect).amax() < 1e-12);
        // gamma = 1 is the analytic gain: the matrix is on the boundary or just outside
        let r = e.residual(&assign(0.5, 1.0, 0.0));
        assert!(r < 1e-9);
    }

    #[test]
    fn l2_trivial_block_diagonal() {
        let n = 2;
        let ss = StateSpace::new(
            -DMatrix::identity(n, n),
            DMatrix::zeros(n, 1),
            DMatrix::zeros(1, n),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        let mv = MatVar { id: VarId(0), n };
        let e = l2_lmi(&ss, mv, G).unwrap();
        let mut a = Assignment::new();
        a.set_matrix(mv, &DMatrix::identity(2, 2)).set_scalar(G, 0.3);
        let v = e.eval(&a);
        let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![-2.0, -2.0, -0.3, -1.0]));
        assert!((v - expect).amax() < 1e-12);
        assert!(e.satisfied(&a, 0.0));
    }

    #[test]
    fn linf_strictness_boundary() {
        let ss = StateSpace::new(m1(-1.0), m1(0.0), m1(0.0), m1(0.0)).unwrap();
        let (first, second) = linf_lmis(&ss, M, MU, G, 1.0).unwrap();
        let a = assign(1.0, 1.0, 1.0);
        assert_eq!(first.eval(&a), DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]));
        assert!(first.satisfied(&a, 1e-12));
        // (gamma - mu) = 0 sits on the boundary of the strict cone
        assert!(!second.satisfied(&a, 1e-12));
        assert!(linf_lmis(&ss, M, MU, G, 0.0).is_err());
        assert!(linf_lmis(&ss, M, MU, G, -1.0).is_err());
    }

    #[test]
    fn linf_feedthrough_needs_gamma_above_one() {
        // y = u: the [[g - mu, 1], [1, g]] block needs g (g - mu) > 1
        let ss = StateSpace::new(m1(-1.0), m1(0.0), m1(0.0), m1(1.0)).unwrap();
        let (_, second) = linf_lmis(&ss, M, MU, G, 1.0).unwrap();
        assert!(!second.satisfied(&assign(1.0, 1.0, 1e-3), 0.0));
        assert!(second.satisfied(&assign(1.0, 1.2, 1e-3), 0.0));
    }

    #[test]
    fn h2_guard_and_shape() {
        let ss = StateSpace::new(m1(-1.0), m1(1.0), m1(1.0), m1(0.5)).unwrap();
        assert!(matches!(h2_lmis(&ss, M, G), Err(Error::DirectFeedthrough)));
        let (first, second) = h2_lmis(&first_order(), M, G).unwrap();
        let a = assign(2.0_f64.sqrt(), 0.75, 0.0);
        assert!(first.satisfied(&a, 0.0));
        assert!(second.satisfied(&a, 0.0));
        let a = assign(2.0_f64.sqrt(), 0.70, 0.0);
        assert!(!first.satisfied(&a, 0.0) || !second.satisfied(&a, 0.0));
    }

    #[test]
    fn h2_first_matches_input_weighted_qsr() {
        let (first, _) = h2_lmis(&first_order(), M, G).unwrap();
        let g = 0.8;
        let qsr = qsr_lmi(&first_order(), &QsrSupply::input_weight(g, 1, 1), M).unwrap();
        let a = assign(1.3, g, 0.0);
        assert!((first.eval(&a) - qsr.eval(&a)).amax() < 1e-12);
    }

    #[test]
    fn passivity_needs_square_io() {
        let ss = StateSpace::new(
            m1(-1.0),
            DMatrix::zeros(1, 2),
            m1(1.0),
            DMatrix::zeros(1, 2),
        )
        .unwrap();
        assert!(passivity_lmi(&ss, M).is_err());
    }

    #[test]
    fn memoryless_passive_gain() {
        let ss = StateSpace::new(m1(-1.0), m1(0.0), m1(0.0), m1(1.0)).unwrap();
        let e = passivity_lmi(&ss, M).unwrap();
        let v = e.eval(&assign(1.0, 0.0, 0.0));
        assert_eq!(v[(1, 1)], -2.0);
        assert!(e.satisfied(&assign(1.0, 0.0, 0.0), 0.0));
    }

    #[test]
    fn supply_evaluation_and_r_check() {
        let s = QsrSupply::l2(2.0, 1, 1);
        let u = DVector::from_vec(vec![1.0]);
        let y = DVector::from_vec(vec![3.0]);
        assert_eq!(s.eval(&u, &y), 4.0 - 9.0);
        assert!(s.r_is_nsd());
        assert_eq!(QsrSupply::passivity(1).eval(&u, &y), 6.0);
        let bad = QsrSupply::new(m1(0.0), m1(0.0), m1(1e-9)).unwrap();
        assert!(!bad.r_is_nsd());
        assert!(QsrSupply::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]),
            DMatrix::zeros(2, 1),
            m1(0.0)
        )
        .is_err());
    }

    #[test]
    fn strict_margin_scales_with_constant() {
        let e = SymExpr::new("x", AffineMat::constant(m1(-4.0)), Sense::NegDef).unwrap();
        assert_relative_eq!(e.margin, 5e-7, epsilon = 1e-18);
        let n = SymExpr::new("y", AffineMat::constant(m1(-4.0)), Sense::NegSemidef).unwrap();
        assert_eq!(n.margin, 0.0);
        assert!(SymExpr::new(
            "z",
            AffineMat::constant(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])),
            Sense::PosSemidef
        )
        .is_err());
    }
}
