//! Batch commands behind the `incdiss` binary.
//!
//! Each `cmd_*` returns the process exit code: 0 on success, 2 when no
//! certificate exists or a check is violated, 1 on any other error.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::warn;

use crate::analysis::{
    self, build_incremental_storage, general_storage_at_equilibrium, GainCertificate, IncrementalStorage,
    KappaResult, Notion, VerifyReport, RESIDUAL_TOL,
};
use crate::config::{input_signal, LedgerChoice, RunConfig, SimulateConfig, StorageChoice, SupplyConfig};
use crate::dpv::DpvEmbedding;
use crate::error::{Error, Result};
use crate::lmi::QsrSupply;
use crate::report;
use crate::simulate::{
    check_differential, check_general, check_incremental, integrate, integrate_variational, lambda_grid,
    DissipationReport, Trajectory, DEFAULT_TOL_FACTOR,
};
use crate::system::duffing_hamiltonian;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_FAILED: i32 = 2;

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub out_dir: Option<PathBuf>,
    /// LMI residual tolerance for `analyze`/`verify`, ledger tolerance
    /// factor for `simulate`.
    pub tolerance: Option<f64>,
    pub kappa_grid: Option<Vec<f64>>,
}

/// Parses `lo,hi,n` into a log-spaced grid.
pub fn parse_kappa_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || Error::InvalidArgument(format!("--kappa-grid expects lo,hi,n with 0 < lo < hi and n >= 2, got '{s}'"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    if !(lo > 0.0 && hi > lo && hi.is_finite() && n >= 2) {
        return Err(bad());
    }
    Ok(analysis::log_grid(lo, hi, n))
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Infeasible(_) | Error::DirectFeedthrough | Error::BracketFailed(_) => EXIT_FAILED,
        _ => EXIT_ERROR,
    }
}

pub struct AnalysisOutcome {
    pub certificate: GainCertificate,
    pub kappa_results: Option<Vec<KappaResult>>,
    pub verify: VerifyReport,
}

pub fn build_embedding(cfg: &RunConfig) -> Result<DpvEmbedding> {
    let sys = cfg.build_system()?;
    cfg.build_embedding(&sys)
}

/// Solves for the configured notion and re-checks the result at `tol`.
pub fn run_analysis(cfg: &RunConfig, emb: &DpvEmbedding, kappa_grid: Option<&[f64]>, tol: f64) -> Result<AnalysisOutcome> {
    let notion = cfg.notion()?;
    let mut kappa_results = None;
    let certificate = match notion {
        Notion::Li2 => analysis::li2_gain(emb)?,
        Notion::Hg2 => analysis::hg2_gain(emb)?,
        Notion::Passivity => analysis::passivity(emb)?,
        Notion::Qsr => {
            let supply = cfg
                .qsr_supply()?
                .ok_or_else(|| Error::Config("field 'analysis.qsr' is required when notion = qsr".into()))?;
            analysis::qsr_feasibility(emb, &supply)?
        }
        Notion::Linf => {
            let grid = kappa_grid.map_or_else(|| cfg.kappa_grid(), <[f64]>::to_vec);
            let (c, table) = analysis::linf_gain(emb, &grid)?;
            kappa_results = Some(table);
            c
        }
    };
    let verify = analysis::verify_certificate(emb, &certificate, tol)?;
    Ok(AnalysisOutcome {
        certificate,
        kappa_results,
        verify,
    })
}

pub struct SimulationOutcome {
    pub trajectory: Trajectory,
    pub trajectory_tilde: Trajectory,
    pub reports: Vec<(String, DissipationReport)>,
    pub certificate: Option<GainCertificate>,
}

impl SimulationOutcome {
    pub fn holds(&self) -> bool {
        self.reports.iter().all(|(_, r)| r.holds)
    }

    pub fn report(&self, label: &str) -> Option<&DissipationReport> {
        self.reports.iter().find(|(l, _)| l == label).map(|(_, r)| r)
    }
}

fn needs_certificate(s: &SimulateConfig) -> bool {
    s.storage == StorageChoice::Certificate
        || matches!(&s.supply, SupplyConfig::Named(n) if n == "certificate")
        || s.ledgers.contains(&LedgerChoice::Differential)
}

fn supply_for(s: &SimulateConfig, cert: Option<&GainCertificate>, n_u: usize, n_y: usize) -> Result<QsrSupply> {
    match &s.supply {
        SupplyConfig::Explicit(q) => q.to_supply("simulate.supply"),
        SupplyConfig::Named(n) => match n.as_str() {
            "certificate" => Ok(cert.expect("certificate resolved").supply.clone()),
            "passivity" if n_u == n_y => Ok(QsrSupply::passivity(n_u)),
            "passivity" => Err(Error::Config(format!(
                "field 'simulate.supply': passivity needs as many inputs as outputs ({n_u} vs {n_y})"
            ))),
            other => Err(Error::Config(format!(
                "field 'simulate.supply': unknown supply '{other}' (expected certificate, passivity or {{Q, S, R}})"
            ))),
        },
    }
}

fn storage_for(cfg: &RunConfig, s: &SimulateConfig, cert: Option<&GainCertificate>) -> Result<IncrementalStorage> {
    match s.storage {
        StorageChoice::Certificate => build_incremental_storage(cert.expect("certificate resolved"), None),
        StorageChoice::Hamiltonian => match cfg.system.duffing_params() {
            Some((_, b, c, _)) => Ok(IncrementalStorage::OfDifference {
                name: "hamiltonian".into(),
                w: Arc::new(move |d: &[f64]| duffing_hamiltonian(b, c, d)),
            }),
            None => Err(Error::Config(
                "field 'simulate.storage': hamiltonian storage is only defined for the duffing systems".into(),
            )),
        },
    }
}

fn lambda_label(l: f64) -> String {
    format!("differential_{l}")
}

/// Runs the configured simulation and dissipation ledgers. A certificate
/// is computed from the analysis block when the scenario needs one and
/// none is supplied.
pub fn run_simulation(cfg: &RunConfig, cert: Option<&GainCertificate>, tol_factor: f64) -> Result<SimulationOutcome> {
    let s = cfg
        .simulate
        .as_ref()
        .ok_or_else(|| Error::Config("missing 'simulate' block".into()))?;
    if !(tol_factor.is_finite() && tol_factor >= 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be finite and non-negative, got {tol_factor}")));
    }
    let sys = cfg.build_system()?;
    if s.ledgers.contains(&LedgerChoice::Differential) && s.storage != StorageChoice::Certificate {
        return Err(Error::Config(
            "field 'simulate.ledgers': the differential ledger needs certificate storage".into(),
        ));
    }
    let input = input_signal(&s.input, sys.n_u, "simulate.input")?;
    let input_t = input_signal(&s.input_tilde, sys.n_u, "simulate.input_tilde")?;
    for (field, x0) in [("simulate.x0", &s.x0), ("simulate.x0_tilde", &s.x0_tilde)] {
        if x0.len() != sys.n_x {
            return Err(Error::Config(format!(
                "field '{field}': expected {} entries, got {}",
                sys.n_x,
                x0.len()
            )));
        }
    }
    let owned;
    let cert = match cert {
        Some(c) => Some(c),
        None if needs_certificate(s) => {
            let emb = cfg.build_embedding(&sys)?;
            owned = run_analysis(cfg, &emb, None, RESIDUAL_TOL)?.certificate;
            Some(&owned)
        }
        None => None,
    };
    let supply = supply_for(s, cert, sys.n_u, sys.n_y)?;
    let storage = storage_for(cfg, s, cert)?;

    let trajectory = integrate(&sys, &s.x0, &input, s.h, s.horizon)?;
    let trajectory_tilde = integrate(&sys, &s.x0_tilde, &input_t, s.h, s.horizon)?;
    for (label, tr) in [("x", &trajectory), ("x_tilde", &trajectory_tilde)] {
        if let Some(&i) = tr.out_of_box.first() {
            warn!(
                "trajectory {label} leaves the state box at t = {:.3} ({} samples outside)",
                tr.t[i],
                tr.out_of_box.len()
            );
        }
    }

    let mut reports = Vec::new();
    for choice in &s.ledgers {
        match choice {
            LedgerChoice::Differential => {
                let mut lambdas = lambda_grid(s.lambda_points);
                for l in &s.differential_lambdas {
                    if !(0.0..=1.0).contains(l) {
                        return Err(Error::Config(format!(
                            "field 'simulate.differential_lambdas': {l} is outside [0, 1]"
                        )));
                    }
                    if !lambdas.iter().any(|g| (g - l).abs() < 1e-12) {
                        lambdas.push(*l);
                    }
                }
                lambdas.sort_by(f64::total_cmp);
                let family = integrate_variational(&sys, &s.x0, &s.x0_tilde, &input, &input_t, &lambdas, s.h, s.horizon)?;
                let m = &cert.expect("certificate resolved").m;
                for &l in &s.differential_lambdas {
                    let r = check_differential(&family, m, &supply, l, tol_factor)?;
                    reports.push((lambda_label(l), r));
                }
            }
            LedgerChoice::Incremental => {
                let r = check_incremental(&trajectory, &trajectory_tilde, &storage, &supply, tol_factor)?;
                reports.push(("incremental".to_string(), r));
            }
            LedgerChoice::General => {
                let eq = match &s.equilibrium {
                    Some(e) => {
                        let guess = e.x_guess.clone().unwrap_or_else(|| vec![0.0; sys.n_x]);
                        sys.find_equilibrium(&e.u_e, &guess)?
                    }
                    None => sys.find_equilibrium(&vec![0.0; sys.n_u], &vec![0.0; sys.n_x])?,
                };
                let field = general_storage_at_equilibrium(&storage, &eq);
                for (label, tr) in [("general", &trajectory), ("general_tilde", &trajectory_tilde)] {
                    reports.push((label.to_string(), check_general(tr, &eq, &field, &supply, tol_factor)?));
                }
            }
        }
    }
    Ok(SimulationOutcome {
        trajectory,
        trajectory_tilde,
        reports,
        certificate: cert.cloned(),
    })
}

fn out_dir(cfg: &RunConfig, opts: &Options) -> Result<PathBuf> {
    let dir = opts.out_dir.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn write_csv(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn finish(result: Result<i32>) -> i32 {
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn write_simulation(dir: &Path, out: &SimulationOutcome) -> Result<()> {
    write_csv(&dir.join("trajectory.csv"), |w| out.trajectory.write_csv(w))?;
    write_csv(&dir.join("trajectory_tilde.csv"), |w| out.trajectory_tilde.write_csv(w))?;
    for (label, r) in &out.reports {
        write_csv(&dir.join(format!("ledger_{label}.csv")), |w| r.write_csv(w))?;
    }
    let refs: Vec<(String, &DissipationReport)> = out.reports.iter().map(|(l, r)| (l.clone(), r)).collect();
    write_file(&dir.join("ledgers.json"), &report::ledgers_json(&refs)?)?;
    for (label, r) in &out.reports {
        print!("{}", report::ledger_summary(label, r));
    }
    Ok(())
}

/// `analyze <config>`: writes `certificate.json` and `summary.txt`.
pub fn cmd_analyze(config: &Path, opts: &Options) -> i32 {
    finish((|| {
        let cfg = RunConfig::load(config)?;
        let emb = build_embedding(&cfg)?;
        let tol = opts.tolerance.unwrap_or(RESIDUAL_TOL);
        let out = run_analysis(&cfg, &emb, opts.kappa_grid.as_deref(), tol)?;
        let dir = out_dir(&cfg, opts)?;
        let mut summary = report::certificate_summary(&out.certificate);
        if let Some(table) = &out.kappa_results {
            summary.push_str(&report::kappa_table(table));
        }
        summary.push_str(&report::verify_summary(&out.verify));
        write_file(&dir.join("certificate.json"), &report::certificate_json(&out.certificate)?)?;
        write_file(&dir.join("summary.txt"), &summary)?;
        print!("{summary}");
        Ok(if out.verify.passed { EXIT_OK } else { EXIT_FAILED })
    })())
}

/// `simulate <config>`: writes trajectory and ledger CSVs plus `ledgers.json`.
pub fn cmd_simulate(config: &Path, opts: &Options) -> i32 {
    finish((|| {
        let cfg = RunConfig::load(config)?;
        let out = run_simulation(&cfg, None, opts.tolerance.unwrap_or(DEFAULT_TOL_FACTOR))?;
        let dir = out_dir(&cfg, opts)?;
        if let Some(c) = &out.certificate {
            write_file(&dir.join("certificate.json"), &report::certificate_json(c)?)?;
        }
        write_simulation(&dir, &out)?;
        Ok(if out.holds() { EXIT_OK } else { EXIT_FAILED })
    })())
}

/// `verify <cert> <config>`: re-checks the inequalities and, when the config
/// has a simulate block, the ledgers driven by the saved certificate.
pub fn cmd_verify(certificate: &Path, config: &Path, opts: &Options) -> i32 {
    finish((|| {
        let cfg = RunConfig::load(config)?;
        let text = fs::read_to_string(certificate)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", certificate.display())))?;
        let cert = report::parse_certificate(&text)?;
        let emb = build_embedding(&cfg)?;
        let tol = opts.tolerance.unwrap_or(RESIDUAL_TOL);
        let v = analysis::verify_certificate(&emb, &cert, tol)?;
        let dir = out_dir(&cfg, opts)?;
        write_file(&dir.join("verify.json"), &report::verify_json(&v)?)?;
        print!("{}", report::verify_summary(&v));
        if !v.passed {
            for r in v.vertex_residuals.iter().filter(|r| r.min_eigenvalue < -tol) {
                println!(
                    "  {} at p = {:?}: min eigenvalue {:.3e}",
                    r.constraint, r.point, r.min_eigenvalue
                );
            }
            return Ok(EXIT_FAILED);
        }
        if cfg.simulate.is_some() {
            let out = run_simulation(&cfg, Some(&cert), DEFAULT_TOL_FACTOR)?;
            write_simulation(&dir, &out)?;
            if !out.holds() {
                return Ok(EXIT_FAILED);
            }
        }
        Ok(EXIT_OK)
    })())
}
