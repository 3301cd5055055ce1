//! Re-derives a written report from its intermediates.

use rayon::prelude::*;
use serde::Serialize;
use std::path::Path;

use crate::error::Result;
use crate::pipeline::config::RunMode;
use crate::pipeline::files::{artifacts_path, read_json, read_text};
use crate::pipeline::report::{
    aggregate, curve_rows, curves_csv, fidelities_csv, report_csv, violation_csv, CertificationReport,
};
use crate::pipeline::run::{
    acquire, acquisition_from_counts, analyze, ThetaArtifacts, ARTIFACTS_DIR, FIDELITIES_CSV, REPORT_CSV, REPORT_JSON,
    ROBUST_CURVES_CSV, VIOLATION_CSV,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub rows_checked: usize,
    pub mismatches: Vec<String>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

fn load_artifacts(out_dir: &Path, theta_deg: f64) -> Result<ThetaArtifacts> {
    read_json(&artifacts_path(&out_dir.join(ARTIFACTS_DIR), theta_deg))
}

fn check_theta(report: &CertificationReport, out_dir: &Path, index: usize) -> Result<Vec<String>> {
    let cfg = &report.config;
    let row = &report.rows[index];
    let deg = row.theta_deg;
    let stored = load_artifacts(out_dir, deg)?;
    let mut bad = Vec::new();
    let acquisition = match &stored.acquisition.counts {
        Some(counts) => acquisition_from_counts(counts.clone())?,
        None if cfg.mode == RunMode::Simulate && cfg.infinite_sample => acquire(cfg, deg)?,
        None => {
            bad.push(format!("theta {deg}: artifacts carry no counts"));
            return Ok(bad);
        }
    };
    if acquisition != stored.acquisition {
        bad.push(format!("theta {deg}: frequencies differ from the stored counts"));
    }
    let (artifacts, fresh) = analyze(cfg, acquisition)?;
    if artifacts.tomography != stored.tomography {
        bad.push(format!("theta {deg}: tomography result differs"));
    }
    if artifacts.selftest != stored.selftest {
        bad.push(format!("theta {deg}: self-testing result differs"));
    }
    if artifacts.curve != stored.curve {
        bad.push(format!("theta {deg}: robustness curve differs"));
    }
    if &fresh != row {
        bad.push(format!(
            "theta {deg}: report row differs (stored {row:?}, derived {fresh:?})"
        ));
    }
    Ok(bad)
}

/// Recomputes every row, the aggregate and the emitted tables of the report
/// in `out_dir`, collecting every discrepancy.
pub fn verify_dir(out_dir: &Path) -> Result<VerifyReport> {
    let report: CertificationReport = read_json(&out_dir.join(REPORT_JSON))?;
    let per_row: Vec<Vec<String>> = (0..report.rows.len())
        .into_par_iter()
        .map(|i| check_theta(&report, out_dir, i))
        .collect::<Result<_>>()?;
    let mut mismatches: Vec<String> = per_row.into_iter().flatten().collect();

    if aggregate(&report.rows, report.config.aggregate_min_theta) != report.aggregate {
        mismatches.push("aggregate differs from the mean over the stored rows".into());
    }
    for row in &report.rows {
        if row.ratio != row.f_s / row.f_t {
            mismatches.push(format!("theta {}: ratio is not f_s / f_t", row.theta_deg));
        }
    }
    let mut curves = Vec::new();
    for row in &report.rows {
        curves.extend(curve_rows(
            row.theta_deg,
            &load_artifacts(out_dir, row.theta_deg)?.curve,
        ));
    }
    if curves != report.robust_curves {
        mismatches.push("robust curve rows differ from the per-angle curves".into());
    }
    for (name, expected) in [
        (REPORT_CSV, report_csv(&report.rows)),
        (VIOLATION_CSV, violation_csv(&report.rows)),
        (FIDELITIES_CSV, fidelities_csv(&report.rows)),
        (ROBUST_CURVES_CSV, curves_csv(&report.robust_curves)),
    ] {
        if read_text(&out_dir.join(name))? != expected {
            mismatches.push(format!("{name} does not match the report rows"));
        }
    }
    Ok(VerifyReport {
        rows_checked: report.rows.len(),
        mismatches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::config::RunConfig;
    use crate::pipeline::files::write_json;
    use crate::pipeline::run::run_to_dir;

    #[test]
    fn detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            theta_deg: vec![42.5],
            trials_per_setting: 300,
            seed: 5,
            out_dir: dir.path().to_path_buf(),
            ..Default::default()
        };
        run_to_dir(&cfg).unwrap();
        let clean = verify_dir(dir.path()).unwrap();
        assert!(clean.ok(), "{:?}", clean.mismatches);
        assert_eq!(clean.rows_checked, 1);

        let path = dir.path().join(REPORT_JSON);
        let mut report: CertificationReport = read_json(&path).unwrap();
        report.rows[0].f_s += 1e-6;
        write_json(&path, &report).unwrap();
        let tampered = verify_dir(dir.path()).unwrap();
        assert!(tampered.mismatches.iter().any(|m| m.contains("report row differs")));
        assert!(tampered.mismatches.iter().any(|m| m.contains("ratio")));
        assert!(tampered.mismatches.iter().any(|m| m.contains(REPORT_CSV)));
    }
}
