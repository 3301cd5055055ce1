//! Batch runs over a list of angles.
//!
//! Each angle is an independent job: acquire counts (or exact probabilities),
//! reconstruct the state by tomography, regularize and self-test the
//! behavior, and optionally trace a robustness curve. Jobs run on the rayon
//! pool; results are collected in the configured angle order, so output files
//! do not depend on scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::bell::{behavior_from_counts, Behavior};
use crate::certify::{certify_behavior, robust_curve_with, CurvePoint, PipelineOutput};
use crate::error::{Error, Result};
use crate::pipeline::config::{RunConfig, RunMode};
use crate::pipeline::files::{artifacts_path, counts_path, write_json, write_text, CountsFile};
use crate::pipeline::report::{
    aggregate, curve_rows, curves_csv, fidelities_csv, make_row, report_csv, violation_csv, CertificationReport,
    ReportRow, RowInputs,
};
use crate::quantum::{sample_counts, simulated_source, DensityMatrix, TrialPlan};
use crate::tomography::{
    expectations_from_probabilities, pauli_probabilities, reconstruct, sample_tomography, tomography_fidelity,
    tomography_frequencies, PauliExpectations,
};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const VIOLATION_CSV: &str = "violation.csv";
pub const FIDELITIES_CSV: &str = "fidelities.csv";
pub const ROBUST_CURVES_CSV: &str = "robust_curves.csv";
pub const TOMOGRAPHY_CSV: &str = "tomography.csv";
/// Subdirectory of the output directory holding per-angle intermediates.
pub const ARTIFACTS_DIR: &str = "artifacts";
/// Subdirectory of the output directory holding simulated counts files.
pub const COUNTS_DIR: &str = "counts";

/// Data measured at one angle, before any analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Acquisition {
    pub theta_deg: f64,
    /// Sampled or ingested counts; `None` for exact Born probabilities.
    pub counts: Option<CountsFile>,
    pub raw: Behavior,
    /// `P(a, b)` for the nine Pauli bases, indexed `[i][j][cell]` over `{X, Y, Z}`.
    pub tomography_frequencies: [[[f64; 4]; 3]; 3],
}

impl Acquisition {
    /// Events recorded in each self-testing setting.
    pub fn totals(&self) -> Option<[[u64; 2]; 2]> {
        self.counts.as_ref().map(|f| {
            let mut t = [[0; 2]; 2];
            for e in &f.selftest_settings {
                t[e.x][e.y] = <[u64; 4]>::from(e.counts).iter().sum();
            }
            t
        })
    }
}

/// Real and imaginary parts of a 4x4 complex matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix4 {
    pub re: [[f64; 4]; 4],
    pub im: [[f64; 4]; 4],
}

impl From<&DensityMatrix> for ComplexMatrix4 {
    fn from(rho: &DensityMatrix) -> Self {
        let m = rho.matrix();
        let mut out = Self {
            re: [[0.0; 4]; 4],
            im: [[0.0; 4]; 4],
        };
        for i in 0..4 {
            for j in 0..4 {
                out.re[i][j] = m[(i, j)].re;
                out.im[i][j] = m[(i, j)].im;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyResult {
    pub expectations: PauliExpectations,
    pub rho: ComplexMatrix4,
    pub f_t: f64,
}

/// Everything computed at one angle; enough to rebuild its report row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaArtifacts {
    pub acquisition: Acquisition,
    pub tomography: TomographyResult,
    pub selftest: PipelineOutput,
    pub curve: Vec<CurvePoint>,
}

/// In-memory result of [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub report: CertificationReport,
    pub artifacts: Vec<ThetaArtifacts>,
}

fn theta_context(theta_deg: f64) -> impl Fn(Error) -> Error {
    move |e| e.context(&format!("theta {theta_deg} deg"))
}

fn simulate_counts(cfg: &RunConfig, theta_deg: f64) -> Result<(CountsFile, DensityMatrix)> {
    let (rho, behavior) = simulated_source(theta_deg.to_radians(), &cfg.noise.model())?;
    let seed = cfg.seed_for(theta_deg);
    let plan = TrialPlan {
        trials_per_setting: cfg.trials_per_setting,
        mode: cfg.counting_mode,
        seed,
    };
    let st = sample_counts(&behavior, &plan, theta_deg)?;
    let tomo = sample_tomography(&rho, cfg.trials_per_setting, cfg.counting_mode, seed, theta_deg)?;
    Ok((CountsFile::new(&st, &tomo), rho))
}

/// Counts or probabilities for one angle according to the run mode.
pub fn acquire(cfg: &RunConfig, theta_deg: f64) -> Result<Acquisition> {
    let counts = match cfg.mode {
        RunMode::Simulate if cfg.infinite_sample => {
            let (rho, raw) = simulated_source(theta_deg.to_radians(), &cfg.noise.model())?;
            return Ok(Acquisition {
                theta_deg,
                counts: None,
                raw,
                tomography_frequencies: pauli_probabilities(&rho),
            });
        }
        RunMode::Simulate => simulate_counts(cfg, theta_deg)?.0,
        RunMode::Ingest => {
            let file = CountsFile::read(&counts_path(cfg.input_dir(), theta_deg))?;
            if file.metadata.theta_deg != theta_deg {
                return Err(Error::validation(format!(
                    "counts file declares theta {} deg",
                    file.metadata.theta_deg
                )));
            }
            file
        }
    };
    acquisition_from_counts(counts)
}

/// Frequencies of a counts file.
pub fn acquisition_from_counts(counts: CountsFile) -> Result<Acquisition> {
    let (st, tomo) = counts.records()?;
    Ok(Acquisition {
        theta_deg: counts.metadata.theta_deg,
        raw: behavior_from_counts(&st)?,
        tomography_frequencies: tomography_frequencies(&tomo)?,
        counts: Some(counts),
    })
}

/// Pauli expectations, reconstructed state and its fidelity with the target.
pub fn analyze_tomography(freq: &[[[f64; 4]; 3]; 3], theta_deg: f64) -> Result<TomographyResult> {
    let expectations = expectations_from_probabilities(freq)?;
    let rho = reconstruct(&expectations);
    Ok(TomographyResult {
        expectations,
        f_t: tomography_fidelity(&rho, theta_deg.to_radians())?,
        rho: (&rho).into(),
    })
}

/// Both pipelines and the optional robustness curve for acquired data.
pub fn analyze(cfg: &RunConfig, acquisition: Acquisition) -> Result<(ThetaArtifacts, ReportRow)> {
    let theta_deg = acquisition.theta_deg;
    let theta = theta_deg.to_radians();
    let opts = cfg.certify_options();
    let tomography = analyze_tomography(&acquisition.tomography_frequencies, theta_deg)?;
    let selftest = certify_behavior(&acquisition.raw, theta, &opts)?;
    let curve = if cfg.eps_grid.is_empty() {
        Vec::new()
    } else {
        robust_curve_with(theta, &cfg.eps_grid, &opts)?
    };
    let row = row_for(&acquisition, &tomography, &selftest)?;
    Ok((
        ThetaArtifacts {
            acquisition,
            tomography,
            selftest,
            curve,
        },
        row,
    ))
}

pub(crate) fn row_for(acq: &Acquisition, tomo: &TomographyResult, st: &PipelineOutput) -> Result<ReportRow> {
    make_row(RowInputs {
        theta_deg: acq.theta_deg,
        f_t: tomo.f_t,
        f_s: st.certificate.f_s,
        raw: &acq.raw,
        regularized: &st.nqa2.behavior,
        nqa2_distance: st.nqa2.distance,
        nqa2_solver: st.nqa2.diagnostics,
        swap_solver: st.certificate.diagnostics,
        totals: acq.totals(),
    })
}

fn par_over_theta<T: Send>(cfg: &RunConfig, job: impl Fn(f64) -> Result<T> + Sync) -> Result<Vec<T>> {
    cfg.validate()?;
    cfg.theta_deg
        .par_iter()
        .map(|&deg| job(deg).map_err(theta_context(deg)))
        .collect()
}

/// Full analysis of every configured angle.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    let results = par_over_theta(cfg, |deg| analyze(cfg, acquire(cfg, deg)?))?;
    let (artifacts, rows): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let robust_curves = artifacts
        .iter()
        .flat_map(|a| curve_rows(a.acquisition.theta_deg, &a.curve))
        .collect();
    Ok(RunOutput {
        report: CertificationReport {
            config: cfg.clone(),
            aggregate: aggregate(&rows, cfg.aggregate_min_theta),
            rows,
            robust_curves,
        },
        artifacts,
    })
}

/// Writes the report, plot-data tables and per-angle intermediates.
pub fn write_outputs(out_dir: &Path, output: &RunOutput) -> Result<Vec<PathBuf>> {
    let report = &output.report;
    let mut written = Vec::new();
    let mut put = |name: &str, text: String| -> Result<()> {
        let path = out_dir.join(name);
        write_text(&path, &text)?;
        written.push(path);
        Ok(())
    };
    put(REPORT_CSV, report_csv(&report.rows))?;
    put(VIOLATION_CSV, violation_csv(&report.rows))?;
    put(FIDELITIES_CSV, fidelities_csv(&report.rows))?;
    put(ROBUST_CURVES_CSV, curves_csv(&report.robust_curves))?;
    let path = out_dir.join(REPORT_JSON);
    write_json(&path, report)?;
    written.push(path);
    for a in &output.artifacts {
        let path = artifacts_path(&out_dir.join(ARTIFACTS_DIR), a.acquisition.theta_deg);
        write_json(&path, a)?;
        written.push(path);
    }
    Ok(written)
}

/// Runs and writes everything into `cfg.out_dir`.
pub fn run_to_dir(cfg: &RunConfig) -> Result<RunOutput> {
    let output = run(cfg)?;
    write_outputs(&cfg.out_dir, &output)?;
    Ok(output)
}

/// Samples counts files for every configured angle and writes them to
/// `<out>/counts/`, ready for ingest mode.
pub fn simulate_to_dir(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    if cfg.mode != RunMode::Simulate || cfg.infinite_sample {
        return Err(Error::validation("counts files come from sampled simulate mode"));
    }
    let files = par_over_theta(cfg, |deg| simulate_counts(cfg, deg).map(|(f, _)| f))?;
    let dir = cfg.out_dir.join(COUNTS_DIR);
    files
        .iter()
        .map(|f| {
            let path = counts_path(&dir, f.metadata.theta_deg);
            write_json(&path, f).map(|_| path)
        })
        .collect()
}

/// `theta_deg, f_t` rows from tomography alone.
pub fn tomography_only(cfg: &RunConfig) -> Result<Vec<(f64, TomographyResult)>> {
    par_over_theta(cfg, |deg| {
        let acq = acquire(cfg, deg)?;
        Ok((deg, analyze_tomography(&acq.tomography_frequencies, deg)?))
    })
}

pub fn tomography_csv(rows: &[(f64, TomographyResult)]) -> String {
    let mut csv = crate::pipeline::files::Csv::new(&["theta_deg", "f_t"]);
    for (deg, t) in rows {
        csv.row(&[format!("{deg}"), format!("{}", t.f_t)]);
    }
    csv.into_string()
}

/// Robustness curves alone; needs no counts.
pub fn curves_only(cfg: &RunConfig) -> Result<Vec<crate::pipeline::report::CurveRow>> {
    if cfg.eps_grid.is_empty() {
        return Err(Error::validation("eps_grid is empty"));
    }
    let opts = cfg.certify_options();
    let curves = par_over_theta(cfg, |deg| {
        Ok(curve_rows(
            deg,
            &robust_curve_with(deg.to_radians(), &cfg.eps_grid, &opts)?,
        ))
    })?;
    Ok(curves.into_iter().flatten().collect())
}
