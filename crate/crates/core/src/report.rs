//! Certificate JSON and text summaries.
//!
//! Floats are written with 17 significant digits so a certificate read back
//! reproduces the solver's matrix bit for bit.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::analysis::{GainCertificate, KappaResult, Notion, VerifyReport, VertexResidual};
use crate::config::{matrix, Matrix};
use crate::error::{Error, Result};
use crate::lmi::{QsrSupply, Sense};
use crate::simulate::DissipationReport;

pub const FORMAT: &str = "incdiss-certificate";
pub const VERSION: u32 = 1;

/// Float serialized as `{:.16e}`; non-finite values become `null`.
#[derive(Debug, Clone, Copy)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            let raw = RawValue::from_string(format!("{:.16e}", self.0)).map_err(serde::ser::Error::custom)?;
            raw.serialize(s)
        } else {
            s.serialize_none()
        }
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<Num>> {
    m.row_iter().map(|r| r.iter().map(|v| Num(*v)).collect()).collect()
}

#[derive(Serialize)]
struct SupplyOut {
    #[serde(rename = "Q")]
    q: Vec<Vec<Num>>,
    #[serde(rename = "S")]
    s: Vec<Vec<Num>>,
    #[serde(rename = "R")]
    r: Vec<Vec<Num>>,
}

#[derive(Serialize)]
struct ResidualOut<'a> {
    vertex: usize,
    point: Vec<Num>,
    constraint: &'a str,
    sense: Sense,
    min_eigenvalue: Num,
}

#[derive(Serialize, Deserialize, Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n_x: usize,
    pub n_u: usize,
    pub n_y: usize,
}

#[derive(Serialize)]
struct CertificateOut<'a> {
    format: &'static str,
    version: u32,
    notion: &'static str,
    gain: Option<Num>,
    #[serde(rename = "M")]
    m: Vec<Vec<Num>>,
    supply: SupplyOut,
    kappa: Option<Num>,
    mu: Option<Num>,
    implies_incremental: bool,
    implies_stability: bool,
    system: Dims,
    vertex_residuals: Vec<ResidualOut<'a>>,
}

pub fn certificate_json(cert: &GainCertificate) -> Result<String> {
    let out = CertificateOut {
        format: FORMAT,
        version: VERSION,
        notion: cert.notion.as_str(),
        gain: cert.gain.map(Num),
        m: rows(&cert.m),
        supply: SupplyOut {
            q: rows(&cert.supply.q),
            s: rows(&cert.supply.s),
            r: rows(&cert.supply.r),
        },
        kappa: cert.kappa.map(Num),
        mu: cert.mu.map(Num),
        implies_incremental: cert.implies_incremental,
        implies_stability: cert.implies_stability,
        system: Dims {
            n_x: cert.m.nrows(),
            n_u: cert.supply.n_u(),
            n_y: cert.supply.n_y(),
        },
        vertex_residuals: cert
            .vertex_residuals
            .iter()
            .map(|r| ResidualOut {
                vertex: r.vertex,
                point: r.point.iter().map(|v| Num(*v)).collect(),
                constraint: &r.constraint,
                sense: r.sense,
                min_eigenvalue: Num(r.min_eigenvalue),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&out)? + "\n")
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SupplyIn {
    #[serde(rename = "Q")]
    q: Matrix,
    #[serde(rename = "S")]
    s: Matrix,
    #[serde(rename = "R")]
    r: Matrix,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ResidualIn {
    vertex: usize,
    point: Vec<f64>,
    constraint: String,
    sense: Sense,
    min_eigenvalue: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CertificateIn {
    format: String,
    version: u32,
    notion: String,
    gain: Option<f64>,
    #[serde(rename = "M")]
    m: Matrix,
    supply: SupplyIn,
    #[serde(default)]
    kappa: Option<f64>,
    #[serde(default)]
    mu: Option<f64>,
    #[serde(default)]
    implies_incremental: Option<bool>,
    #[serde(default)]
    implies_stability: Option<bool>,
    #[serde(default)]
    system: Option<Dims>,
    #[serde(default)]
    vertex_residuals: Vec<ResidualIn>,
}

/// Reads a certificate; the stability flags are recomputed from the supply.
pub fn parse_certificate(text: &str) -> Result<GainCertificate> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let c: CertificateIn = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        Error::Config(format!(
            "certificate field '{path}' (line {}, column {}): {inner}",
            inner.line(),
            inner.column()
        ))
    })?;
    if c.format != FORMAT || c.version != VERSION {
        return Err(Error::Config(format!(
            "certificate format '{}' version {} is not supported (expected '{FORMAT}' version {VERSION})",
            c.format, c.version
        )));
    }
    let notion = Notion::parse(&c.notion).map_err(|e| Error::Config(format!("certificate field 'notion': {e}")))?;
    let m = matrix(&c.m, "M")?;
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::Config(format!(
            "certificate field 'M': expected a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let supply = QsrSupply::new(
        matrix(&c.supply.q, "supply.Q")?,
        matrix(&c.supply.s, "supply.S")?,
        matrix(&c.supply.r, "supply.R")?,
    )
    .map_err(|e| Error::Config(format!("certificate field 'supply': {e}")))?;
    if let Some(d) = c.system {
        if d.n_x != m.nrows() || d.n_u != supply.n_u() || d.n_y != supply.n_y() {
            return Err(Error::Config("certificate field 'system' disagrees with M and supply sizes".into()));
        }
    }
    for (name, v) in [("gain", c.gain), ("kappa", c.kappa), ("mu", c.mu)] {
        if v.is_some_and(|v| !v.is_finite()) {
            return Err(Error::Config(format!("certificate field '{name}' must be finite")));
        }
    }
    let _ = (c.implies_incremental, c.implies_stability);
    let nsd = supply.r_is_nsd();
    Ok(GainCertificate {
        notion,
        gain: c.gain,
        m,
        kappa: c.kappa,
        mu: c.mu,
        vertex_residuals: c
            .vertex_residuals
            .into_iter()
            .map(|r| VertexResidual {
                vertex: r.vertex,
                point: r.point,
                constraint: r.constraint,
                sense: r.sense,
                min_eigenvalue: r.min_eigenvalue.unwrap_or(f64::NAN),
            })
            .collect(),
        supply,
        implies_incremental: nsd,
        implies_stability: nsd,
    })
}

#[derive(Serialize)]
struct VerifyOut {
    passed: bool,
    tolerance: Num,
    worst_vertex: Num,
    worst_interior: Num,
    interior_samples: usize,
    m_min_eigenvalue: Num,
}

pub fn verify_json(r: &VerifyReport) -> Result<String> {
    let out = VerifyOut {
        passed: r.passed,
        tolerance: Num(r.tolerance),
        worst_vertex: Num(r.worst_vertex),
        worst_interior: Num(r.worst_interior),
        interior_samples: r.interior_samples,
        m_min_eigenvalue: Num(r.m_min_eigenvalue),
    };
    Ok(serde_json::to_string_pretty(&out)? + "\n")
}

#[derive(Serialize)]
struct LedgerOut {
    kind: &'static str,
    label: String,
    holds: bool,
    tolerance: Num,
    max_violation: Num,
    peak_excess: Num,
    violation_samples: usize,
    first_violation: Option<Num>,
    violation_intervals: Vec<[Num; 2]>,
}

/// Summary JSON for a set of labelled ledgers.
pub fn ledgers_json(reports: &[(String, &DissipationReport)]) -> Result<String> {
    let out: Vec<LedgerOut> = reports
        .iter()
        .map(|(label, r)| LedgerOut {
            kind: r.kind.as_str(),
            label: label.clone(),
            holds: r.holds,
            tolerance: Num(r.tolerance),
            max_violation: Num(r.max_violation),
            peak_excess: Num(r.peak_excess),
            violation_samples: r.violation_times.len(),
            first_violation: r.violation_times.first().map(|t| Num(*t)),
            violation_intervals: r
                .violation_intervals
                .iter()
                .map(|&(a, b)| [Num(r.t[a]), Num(r.t[b])])
                .collect(),
        })
        .collect();
    Ok(serde_json::to_string_pretty(&out)? + "\n")
}

pub fn certificate_summary(cert: &GainCertificate) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "notion: {}", cert.notion);
    match cert.gain {
        Some(g) => {
            let _ = writeln!(s, "gain: {g:.6}");
        }
        None => {
            let _ = writeln!(s, "feasible: yes");
        }
    }
    if let (Some(k), Some(mu)) = (cert.kappa, cert.mu) {
        let _ = writeln!(s, "kappa: {k:.6}  mu: {mu:.6}");
    }
    let _ = writeln!(s, "M:");
    for r in cert.m.row_iter() {
        let cells: Vec<String> = r.iter().map(|v| format!("{v:>12.6}")).collect();
        let _ = writeln!(s, "  [{}]", cells.join(" "));
    }
    let _ = writeln!(
        s,
        "worst vertex residual: {:.3e} over {} constraints",
        cert.worst_residual(),
        cert.vertex_residuals.len()
    );
    let _ = writeln!(
        s,
        "implies incremental stability: {}",
        if cert.implies_incremental { "yes" } else { "no" }
    );
    s
}

pub fn kappa_table(results: &[KappaResult]) -> String {
    let mut s = String::from("kappa          status            gamma\n");
    let mut sorted: Vec<&KappaResult> = results.iter().collect();
    sorted.sort_by(|a, b| a.kappa.total_cmp(&b.kappa));
    for r in sorted {
        let g = r.gamma.map_or("-".to_string(), |g| format!("{g:.6}"));
        let _ = writeln!(s, "{:<14.6e} {:<17} {g}", r.kappa, format!("{:?}", r.status));
    }
    s
}

pub fn verify_summary(r: &VerifyReport) -> String {
    let interior = if r.interior_samples == 0 {
        "no interior samples".to_string()
    } else {
        format!("worst interior {:.3e} over {} samples", r.worst_interior, r.interior_samples)
    };
    format!(
        "verify: {} (tolerance {:.1e}, worst vertex {:.3e}, {interior}, min eig M {:.3e})\n",
        if r.passed { "passed" } else { "FAILED" },
        r.tolerance,
        r.worst_vertex,
        r.m_min_eigenvalue
    )
}

pub fn ledger_summary(label: &str, r: &DissipationReport) -> String {
    let mut s = format!(
        "{label}: {} (max violation {:.3e}, tolerance {:.3e}",
        if r.holds { "holds" } else { "VIOLATED" },
        r.max_violation,
        r.tolerance
    );
    if let Some(t) = r.violation_times.first() {
        let _ = write!(s, ", first at t = {t:.3}, {} samples", r.violation_times.len());
    }
    s.push_str(")\n");
    s
}
