//! Report rows, aggregates and the plot-data tables.

use serde::{Deserialize, Serialize};

use crate::bell::{
    alpha_for_theta, cell_signs, epsilon_deviation, local_bound, quantum_max, signaling_deficit, tilted_chsh,
    to_correlators, Behavior,
};
use crate::certify::{CurvePoint, SolverDiagnostics};
use crate::error::Result;
use crate::pipeline::config::RunConfig;
use crate::pipeline::files::Csv;

/// One analysed angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub theta_deg: f64,
    pub f_t: f64,
    pub f_s: f64,
    pub ratio: f64,
    /// Tilted-CHSH value of the raw frequencies.
    pub tilted_chsh: f64,
    /// `quantum_max - tilted_chsh`.
    pub epsilon: f64,
    pub local_bound: f64,
    pub quantum_max: f64,
    /// Standard error of `tilted_chsh` from the per-setting trial counts (0 without sampling).
    pub stderr: f64,
    /// `<A0>` measured alongside `y = 0` and `y = 1`.
    pub a0_given_y: [f64; 2],
    pub signaling_before: f64,
    pub signaling_after: f64,
    pub nqa2_distance: f64,
    pub nqa2_solver: SolverDiagnostics,
    pub swap_solver: SolverDiagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub min_theta_deg: f64,
    pub rows: usize,
    /// Mean of `f_s / f_t` over the selected rows (None when no row qualifies).
    pub mean_ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub theta_deg: f64,
    pub epsilon: f64,
    pub f_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub config: RunConfig,
    pub rows: Vec<ReportRow>,
    pub aggregate: Aggregate,
    pub robust_curves: Vec<CurveRow>,
}

/// Standard error of the tilted-CHSH estimate given the number of events
/// recorded in each setting; `<A0>` is averaged over Bob's two settings.
/// Without sampling (`None`) the value is exact and the error is zero.
pub fn tilted_chsh_stderr(raw: &Behavior, alpha: f64, totals: Option<[[u64; 2]; 2]>) -> f64 {
    let Some(n) = totals else {
        return 0.0;
    };
    let mut var = 0.0;
    for x in 0..2 {
        for y in 0..2 {
            let sign = if x == 1 && y == 1 { -1.0 } else { 1.0 };
            let (mut m1, mut m2) = (0.0, 0.0);
            for k in 0..4 {
                let (a, b) = cell_signs(k);
                let marginal = if x == 0 { 0.5 * alpha * a } else { 0.0 };
                let g = sign * a * b + marginal;
                let p = raw.table()[x][y][k];
                m1 += p * g;
                m2 += p * g * g;
            }
            var += (m2 - m1 * m1).max(0.0) / n[x][y].max(1) as f64;
        }
    }
    var.sqrt()
}

pub struct RowInputs<'a> {
    pub theta_deg: f64,
    pub f_t: f64,
    pub f_s: f64,
    pub raw: &'a Behavior,
    pub regularized: &'a Behavior,
    pub nqa2_distance: f64,
    pub nqa2_solver: SolverDiagnostics,
    pub swap_solver: SolverDiagnostics,
    /// Events per self-testing setting, `None` for exact probabilities.
    pub totals: Option<[[u64; 2]; 2]>,
}

pub fn make_row(inp: RowInputs<'_>) -> Result<ReportRow> {
    let alpha = alpha_for_theta(inp.theta_deg.to_radians())?;
    let value = tilted_chsh(&to_correlators(inp.raw), alpha);
    Ok(ReportRow {
        theta_deg: inp.theta_deg,
        f_t: inp.f_t,
        f_s: inp.f_s,
        ratio: inp.f_s / inp.f_t,
        tilted_chsh: value,
        epsilon: epsilon_deviation(value, alpha),
        local_bound: local_bound(alpha),
        quantum_max: quantum_max(alpha),
        stderr: tilted_chsh_stderr(inp.raw, alpha, inp.totals),
        a0_given_y: [inp.raw.marginal_a(0, 0), inp.raw.marginal_a(0, 1)],
        signaling_before: signaling_deficit(inp.raw).max_deficit,
        signaling_after: signaling_deficit(inp.regularized).max_deficit,
        nqa2_distance: inp.nqa2_distance,
        nqa2_solver: inp.nqa2_solver,
        swap_solver: inp.swap_solver,
    })
}

pub fn aggregate(rows: &[ReportRow], min_theta_deg: f64) -> Aggregate {
    let ratios: Vec<f64> = rows
        .iter()
        .filter(|r| r.theta_deg >= min_theta_deg)
        .map(|r| r.ratio)
        .collect();
    Aggregate {
        min_theta_deg,
        rows: ratios.len(),
        mean_ratio: (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64),
    }
}

pub fn curve_rows(theta_deg: f64, curve: &[CurvePoint]) -> Vec<CurveRow> {
    curve
        .iter()
        .map(|p| CurveRow {
            theta_deg,
            epsilon: p.epsilon,
            f_s: p.certificate.f_s,
        })
        .collect()
}

fn num(v: f64) -> String {
    format!("{v}")
}

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut csv = Csv::new(&[
        "theta_deg",
        "f_t",
        "f_s",
        "ratio",
        "tilted_chsh",
        "epsilon",
        "local_bound",
        "quantum_max",
        "stderr",
        "signaling_before",
        "signaling_after",
        "nqa2_distance",
        "nqa2_iterations",
        "swap_iterations",
        "swap_relative_gap",
    ]);
    for r in rows {
        csv.row(&[
            num(r.theta_deg),
            num(r.f_t),
            num(r.f_s),
            num(r.ratio),
            num(r.tilted_chsh),
            num(r.epsilon),
            num(r.local_bound),
            num(r.quantum_max),
            num(r.stderr),
            num(r.signaling_before),
            num(r.signaling_after),
            num(r.nqa2_distance),
            r.nqa2_solver.iterations.to_string(),
            r.swap_solver.iterations.to_string(),
            num(r.swap_solver.relative_gap),
        ]);
    }
    csv.into_string()
}

pub const VIOLATION_COLUMNS: [&str; 7] = [
    "theta_deg",
    "I_value",
    "local_bound",
    "quantum_max",
    "stderr",
    "a0_y0",
    "a0_y1",
];

pub fn violation_csv(rows: &[ReportRow]) -> String {
    let mut csv = Csv::new(&VIOLATION_COLUMNS);
    for r in rows {
        csv.row(&[
            num(r.theta_deg),
            num(r.tilted_chsh),
            num(r.local_bound),
            num(r.quantum_max),
            num(r.stderr),
            num(r.a0_given_y[0]),
            num(r.a0_given_y[1]),
        ]);
    }
    csv.into_string()
}

pub fn fidelities_csv(rows: &[ReportRow]) -> String {
    let mut csv = Csv::new(&["theta_deg", "f_t", "f_s", "ratio"]);
    for r in rows {
        csv.row(&[num(r.theta_deg), num(r.f_t), num(r.f_s), num(r.ratio)]);
    }
    csv.into_string()
}

pub fn curves_csv(rows: &[CurveRow]) -> String {
    let mut csv = Csv::new(&["theta_deg", "epsilon", "f_s"]);
    for r in rows {
        csv.row(&[num(r.theta_deg), num(r.epsilon), num(r.f_s)]);
    }
    csv.into_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bell::{behavior_from_counts, CountingMode};
    use crate::pipeline::files::parse_numeric_csv;
    use crate::quantum::{sample_counts, simulated_source, TrialPlan};

    /// Monte Carlo spread of the sampled tilted-CHSH value against the formula.
    #[test]
    fn stderr_matches_sampling_spread() {
        let t = 35f64.to_radians();
        let alpha = alpha_for_theta(t).unwrap();
        let (_, b) = simulated_source(t, &Default::default()).unwrap();
        let n = 400;
        let values: Vec<f64> = (0..400)
            .map(|seed| {
                let plan = TrialPlan {
                    trials_per_setting: n,
                    mode: CountingMode::Multinomial,
                    seed,
                };
                let raw = behavior_from_counts(&sample_counts(&b, &plan, 35.0).unwrap()).unwrap();
                tilted_chsh(&to_correlators(&raw), alpha)
            })
            .collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt();
        let predicted = tilted_chsh_stderr(&b, alpha, Some([[n; 2]; 2]));
        assert!((sd / predicted - 1.0).abs() < 0.15, "sd {sd} predicted {predicted}");
        assert_eq!(tilted_chsh_stderr(&b, alpha, None), 0.0);
    }

    #[test]
    fn aggregate_over_subset() {
        let diag = SolverDiagnostics {
            status: crate::sdp::SolveStatus::Optimal,
            iterations: 1,
            primal_objective: 0.0,
            dual_objective: 0.0,
            relative_gap: 0.0,
            primal_infeasibility: 0.0,
            dual_infeasibility: 0.0,
        };
        let b = Behavior::uniform();
        let row = |deg: f64, f_s: f64| {
            make_row(RowInputs {
                theta_deg: deg,
                f_t: 1.0,
                f_s,
                raw: &b,
                regularized: &b,
                nqa2_distance: 0.0,
                nqa2_solver: diag,
                swap_solver: diag,
                totals: None,
            })
            .unwrap()
        };
        let rows = vec![row(30.0, 0.5), row(35.0, 0.9), row(45.0, 0.95)];
        let agg = aggregate(&rows, 35.0);
        assert_eq!(agg.rows, 2);
        assert_eq!(agg.mean_ratio, Some((0.9 + 0.95) / 2.0));
        assert_eq!(aggregate(&rows, 50.0).mean_ratio, None);
        let (header, parsed) = parse_numeric_csv(&violation_csv(&rows)).unwrap();
        assert_eq!(header, VIOLATION_COLUMNS);
        assert_eq!(parsed.len(), 3);
        assert_eq!(parsed[0][2], 2.0 + alpha_for_theta(30f64.to_radians()).unwrap());
    }
}
