//! JSON run configuration.
//!
//! ```json
//! {
//!   "system": { "name": "duffing", "a": 3.3, "b": 7.9, "c": 1.0, "output": "position" },
//!   "embedding": {
//!     "scheduling": "x1_squared",
//!     "param_box": [[0.0, 2.0]],
//!     "working_box": { "state": [[-1.4142135623730951, 1.4142135623730951], [-10, 10]],
//!                      "input": [[-10, 10]] }
//!   },
//!   "analysis": { "notion": "li2" },
//!   "simulate": { "x0": [1, 1], "x0_tilde": [1, 1], "input": "u1", "input_tilde": "u2" },
//!   "output": { "dir": "out" }
//! }
//! ```
//!
//! Systems are `duffing` (parameters `a`, `b`, `c`, `output` = `position`
//! or `velocity`), `duffing_ph` (the same oscillator with output `x2`) or
//! `lti` (row-major `A`, `B`, `C`, `D`). Both accept
//! optional `state_box` / `input_box` overrides as lists of `[lo, hi]`.
//! Matrices are row-major nested arrays throughout.

use std::path::Path;

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::analysis::{default_kappa_grid, Notion};
use crate::dpv::{self, AffineFamily, DpvEmbedding, Scheduling, WorkingBox};
use crate::error::{Error, Result};
use crate::lmi::QsrSupply;
use crate::simulate::{self, InputSignal};
use crate::system::{self, AxisBox, DuffingOutput, NonlinearSystem, StateSpace};

pub type Matrix = Vec<Vec<f64>>;
pub type Bounds = Vec<[f64; 2]>;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    #[serde(default)]
    pub embedding: Option<EmbeddingConfig>,
    #[serde(default)]
    pub analysis: Option<AnalysisConfig>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutputChoice {
    #[default]
    Position,
    Velocity,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    Duffing {
        a: f64,
        b: f64,
        c: f64,
        #[serde(default)]
        output: OutputChoice,
        #[serde(default)]
        state_box: Option<Bounds>,
        #[serde(default)]
        input_box: Option<Bounds>,
    },
    /// Duffing oscillator with the port-Hamiltonian output `y = x2`.
    DuffingPh {
        a: f64,
        b: f64,
        c: f64,
        #[serde(default)]
        state_box: Option<Bounds>,
        #[serde(default)]
        input_box: Option<Bounds>,
    },
    Lti {
        #[serde(rename = "A")]
        a: Matrix,
        #[serde(rename = "B")]
        b: Matrix,
        #[serde(rename = "C")]
        c: Matrix,
        #[serde(rename = "D")]
        d: Matrix,
        #[serde(default)]
        state_box: Option<Bounds>,
        #[serde(default)]
        input_box: Option<Bounds>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkingBoxConfig {
    pub state: Bounds,
    pub input: Bounds,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientConfig {
    #[serde(rename = "A")]
    pub a: Vec<Matrix>,
    #[serde(rename = "B")]
    pub b: Vec<Matrix>,
    #[serde(rename = "C")]
    pub c: Vec<Matrix>,
    #[serde(rename = "D")]
    pub d: Vec<Matrix>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    /// `none` or `x1_squared`.
    #[serde(default = "default_scheduling")]
    pub scheduling: String,
    #[serde(default)]
    pub param_box: Bounds,
    #[serde(default)]
    pub working_box: Option<WorkingBoxConfig>,
    /// Affine coefficients; index 0 is the constant term. Defaults to the
    /// built-in family of the system.
    #[serde(default)]
    pub coefficients: Option<CoefficientConfig>,
}

fn default_scheduling() -> String {
    "none".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QsrConfig {
    #[serde(rename = "Q")]
    pub q: Matrix,
    #[serde(rename = "S")]
    pub s: Matrix,
    #[serde(rename = "R")]
    pub r: Matrix,
}

impl QsrConfig {
    pub fn to_supply(&self, field: &str) -> Result<QsrSupply> {
        QsrSupply::new(
            matrix(&self.q, &format!("{field}.Q"))?,
            matrix(&self.s, &format!("{field}.S"))?,
            matrix(&self.r, &format!("{field}.R"))?,
        )
        .map_err(|e| Error::Config(format!("{field}: {e}")))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// `li2`, `linf`, `passivity`, `hg2` or `qsr`.
    pub notion: String,
    #[serde(default)]
    pub qsr: Option<QsrConfig>,
    #[serde(default)]
    pub kappa_grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableConfig {
    pub t: Vec<f64>,
    pub values: Matrix,
}

/// `"u1"`, `{"id": "u1", "scale": 10}` or `{"table": {"t": [..], "values": [[..], ..]}}`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum InputConfig {
    Id(String),
    Scaled { id: String, scale: f64 },
    Table { table: TableConfig },
}

/// `"certificate"`, `"hamiltonian"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StorageChoice {
    #[default]
    Certificate,
    Hamiltonian,
}

/// `"certificate"`, `"passivity"` or explicit `{"Q", "S", "R"}`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SupplyConfig {
    Named(String),
    Explicit(QsrConfig),
}

impl Default for SupplyConfig {
    fn default() -> Self {
        SupplyConfig::Named("certificate".into())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumConfig {
    pub u_e: Vec<f64>,
    #[serde(default)]
    pub x_guess: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LedgerChoice {
    Differential,
    Incremental,
    General,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub x0: Vec<f64>,
    pub x0_tilde: Vec<f64>,
    pub input: InputConfig,
    pub input_tilde: InputConfig,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(rename = "T", default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_lambda_points")]
    pub lambda_points: usize,
    #[serde(default = "default_differential_lambdas")]
    pub differential_lambdas: Vec<f64>,
    #[serde(default = "default_ledgers")]
    pub ledgers: Vec<LedgerChoice>,
    #[serde(default)]
    pub storage: StorageChoice,
    #[serde(default)]
    pub supply: SupplyConfig,
    #[serde(default)]
    pub equilibrium: Option<EquilibriumConfig>,
}

fn default_h() -> f64 {
    simulate::DEFAULT_STEP
}

fn default_horizon() -> f64 {
    simulate::DEFAULT_HORIZON
}

fn default_lambda_points() -> usize {
    simulate::DEFAULT_LAMBDA_POINTS
}

fn default_differential_lambdas() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.75, 1.0]
}

fn default_ledgers() -> Vec<LedgerChoice> {
    vec![LedgerChoice::Differential, LedgerChoice::Incremental, LedgerChoice::General]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_dir() }
    }
}

fn default_dir() -> String {
    "out".into()
}

impl SystemConfig {
    /// `(a, b, c, output)` for the Duffing variants.
    pub fn duffing_params(&self) -> Option<(f64, f64, f64, OutputChoice)> {
        match self {
            SystemConfig::Duffing { a, b, c, output, .. } => Some((*a, *b, *c, *output)),
            SystemConfig::DuffingPh { a, b, c, .. } => Some((*a, *b, *c, OutputChoice::Velocity)),
            SystemConfig::Lti { .. } => None,
        }
    }

    fn boxes(&self) -> (&Option<Bounds>, &Option<Bounds>) {
        match self {
            SystemConfig::Duffing { state_box, input_box, .. }
            | SystemConfig::DuffingPh { state_box, input_box, .. }
            | SystemConfig::Lti { state_box, input_box, .. } => (state_box, input_box),
        }
    }
}

impl RunConfig {
    /// Parses JSON; errors name the offending field path and line.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::Config(format!("field '{path}' (line {}, column {}): {inner}", inner.line(), inner.column()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn validate(&self) -> Result<()> {
        let mut nums: Vec<(&str, f64)> = Vec::new();
        if let Some((a, b, c, _)) = self.system.duffing_params() {
            nums.extend([("system.a", a), ("system.b", b), ("system.c", c)]);
        }
        if let SystemConfig::Lti { a, b, c, d, .. } = &self.system {
            for (name, m) in [("system.A", a), ("system.B", b), ("system.C", c), ("system.D", d)] {
                nums.extend(m.iter().flatten().map(|v| (name, *v)));
            }
        }
        if let Some(s) = &self.simulate {
            nums.extend(s.x0.iter().map(|v| ("simulate.x0", *v)));
            nums.extend(s.x0_tilde.iter().map(|v| ("simulate.x0_tilde", *v)));
            nums.extend([("simulate.h", s.h), ("simulate.T", s.horizon)]);
        }
        if let Some((name, _)) = nums.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Config(format!("field '{name}' must be finite")));
        }
        if let Some(a) = &self.analysis {
            let notion = Notion::parse(&a.notion).map_err(|e| Error::Config(format!("field 'analysis.notion': {e}")))?;
            if notion == Notion::Qsr && a.qsr.is_none() {
                return Err(Error::Config("field 'analysis.qsr' is required when notion = qsr".into()));
            }
        }
        if let Some(s) = &self.simulate {
            if s.lambda_points < 2 {
                return Err(Error::Config("field 'simulate.lambda_points' must be at least 2".into()));
            }
        }
        Ok(())
    }

    pub fn notion(&self) -> Result<Notion> {
        let a = self
            .analysis
            .as_ref()
            .ok_or_else(|| Error::Config("missing 'analysis' block".into()))?;
        Notion::parse(&a.notion)
    }

    pub fn kappa_grid(&self) -> Vec<f64> {
        self.analysis
            .as_ref()
            .and_then(|a| a.kappa_grid.clone())
            .unwrap_or_else(default_kappa_grid)
    }

    pub fn qsr_supply(&self) -> Result<Option<QsrSupply>> {
        match self.analysis.as_ref().and_then(|a| a.qsr.as_ref()) {
            Some(q) => q.to_supply("analysis.qsr").map(Some),
            None => Ok(None),
        }
    }

    pub fn build_system(&self) -> Result<NonlinearSystem> {
        let sys = match (&self.system, self.system.duffing_params()) {
            (_, Some((a, b, c, output))) => {
                let out = match output {
                    OutputChoice::Position => DuffingOutput::Position,
                    OutputChoice::Velocity => DuffingOutput::Velocity,
                };
                system::duffing(a, b, c, out)
            }
            (SystemConfig::Lti { a, b, c, d, .. }, None) => {
                let ss = StateSpace::new(
                    matrix(a, "system.A")?,
                    matrix(b, "system.B")?,
                    matrix(c, "system.C")?,
                    matrix(d, "system.D")?,
                )
                .map_err(|e| Error::Config(format!("system: {e}")))?;
                system::lti(ss)
            }
            _ => unreachable!("duffing variants carry parameters"),
        };
        let (state_box, input_box) = self.system.boxes();
        let sb = match state_box {
            Some(b) => bounds(b, "system.state_box")?,
            None => sys.state_box.clone(),
        };
        let ib = match input_box {
            Some(b) => bounds(b, "system.input_box")?,
            None => sys.input_box.clone(),
        };
        sys.with_boxes(sb, ib).map_err(|e| Error::Config(format!("system boxes: {e}")))
    }

    /// Builds and validates the embedding. Without a working box, bounded
    /// system coordinates are kept and unbounded ones become `[-10, 10]`.
    pub fn build_embedding(&self, sys: &NonlinearSystem) -> Result<DpvEmbedding> {
        let default_emb = EmbeddingConfig {
            scheduling: if self.system.duffing_params().is_some() { "x1_squared" } else { "none" }.into(),
            param_box: if self.system.duffing_params().is_some() { vec![[0.0, 2.0]] } else { Vec::new() },
            working_box: None,
            coefficients: None,
        };
        let e = self.embedding.as_ref().unwrap_or(&default_emb);
        let working = match &e.working_box {
            Some(w) => WorkingBox {
                state: bounds(&w.state, "embedding.working_box.state")?,
                input: bounds(&w.input, "embedding.working_box.input")?,
            },
            None => WorkingBox {
                state: clamp_box(&sys.state_box),
                input: clamp_box(&sys.input_box),
            },
        };
        let scheduling = match e.scheduling.as_str() {
            "none" => Scheduling::none(),
            "x1_squared" => Scheduling::x1_squared(),
            other => {
                return Err(Error::Config(format!(
                    "field 'embedding.scheduling': unknown scheduling '{other}' (expected none or x1_squared)"
                )))
            }
        };
        let param_box = bounds(&e.param_box, "embedding.param_box")?;
        let coeffs = match (&e.coefficients, self.system.duffing_params()) {
            (Some(c), _) => AffineFamily {
                a: matrices(&c.a, "embedding.coefficients.A")?,
                b: matrices(&c.b, "embedding.coefficients.B")?,
                c: matrices(&c.c, "embedding.coefficients.C")?,
                d: matrices(&c.d, "embedding.coefficients.D")?,
            },
            (None, Some((a, b, c, output))) if scheduling.id == "x1_squared" => {
                let row = match output {
                    OutputChoice::Position => [1.0, 0.0],
                    OutputChoice::Velocity => [0.0, 1.0],
                };
                dpv::duffing_family(a, b, c, row)
            }
            (None, _) if scheduling.id == "none" => {
                let ss = sys.eval_jacobians(&vec![0.0; sys.n_x], &vec![0.0; sys.n_u])?;
                AffineFamily::constant(&ss)
            }
            _ => {
                return Err(Error::Config(
                    "field 'embedding.coefficients' is required for this system and scheduling".into(),
                ))
            }
        };
        dpv::embed(sys, scheduling, param_box, coeffs, working)
    }
}

fn clamp_box(b: &AxisBox) -> AxisBox {
    AxisBox(
        b.intervals()
            .iter()
            .map(|iv| {
                let mut iv = *iv;
                if !iv.lo.is_finite() {
                    iv.lo = -10.0;
                }
                if !iv.hi.is_finite() {
                    iv.hi = 10.0;
                }
                iv
            })
            .collect(),
    )
}

/// Row-major nested array to matrix; `[]` is a 0x0 matrix.
pub fn matrix(rows: &Matrix, field: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::Config(format!("field '{field}': rows have different lengths")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Config(format!("field '{field}': entries must be finite")));
    }
    Ok(DMatrix::from_row_iterator(n, m, rows.iter().flatten().copied()))
}

fn matrices(list: &[Matrix], field: &str) -> Result<Vec<DMatrix<f64>>> {
    list.iter()
        .enumerate()
        .map(|(k, m)| matrix(m, &format!("{field}[{k}]")))
        .collect()
}

fn bounds(b: &Bounds, field: &str) -> Result<AxisBox> {
    let pairs: Vec<(f64, f64)> = b.iter().map(|p| (p[0], p[1])).collect();
    AxisBox::from_bounds(&pairs).map_err(|e| Error::Config(format!("field '{field}': {e}")))
}

/// Input signal from its configuration.
pub fn input_signal(cfg: &InputConfig, dim: usize, field: &str) -> Result<InputSignal> {
    let wrap = |e: Error| Error::Config(format!("field '{field}': {e}"));
    match cfg {
        InputConfig::Id(id) => InputSignal::from_id(id, dim).map_err(wrap),
        InputConfig::Scaled { id, scale } => {
            if !scale.is_finite() {
                return Err(Error::Config(format!("field '{field}.scale' must be finite")));
            }
            Ok(InputSignal::Scaled(*scale, Box::new(InputSignal::from_id(id, dim).map_err(wrap)?)))
        }
        InputConfig::Table { table } => {
            let s = InputSignal::table(table.t.clone(), table.values.clone()).map_err(wrap)?;
            if s.dim() != dim {
                return Err(Error::Config(format!(
                    "field '{field}': table rows have {} entries, system has {dim} inputs",
                    s.dim()
                )));
            }
            Ok(s)
        }
    }
}
