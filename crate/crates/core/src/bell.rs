//! Two-input/two-output bipartite boxes.
//!
//! A [`Behavior`] stores the sixteen conditional probabilities `P(a,b|x,y)`,
//! indexed as `p[x][y][cell]` where `cell` enumerates the outcome pairs in
//! the order `++`, `+-`, `-+`, `--`. Outcomes are encoded as `+1`/`-1`.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_4;

use crate::error::{Error, Result};

/// Tolerance on the normalization of each setting's distribution.
pub const NORMALIZATION_TOL: f64 = 1e-12;
/// Entries may undershoot zero by this much (solver round-off).
pub const ENTRY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub const ALL: [Outcome; 2] = [Outcome::Plus, Outcome::Minus];

    pub fn sign(self) -> f64 {
        match self {
            Outcome::Plus => 1.0,
            Outcome::Minus => -1.0,
        }
    }

    fn index(self) -> usize {
        match self {
            Outcome::Plus => 0,
            Outcome::Minus => 1,
        }
    }
}

/// Cell labels in storage order.
pub const CELL_LABELS: [&str; 4] = ["++", "+-", "-+", "--"];

/// Index of the outcome pair `(a, b)` inside a setting's 4-cell distribution.
pub fn cell(a: Outcome, b: Outcome) -> usize {
    2 * a.index() + b.index()
}

/// Signs `(a, b)` of a cell index.
pub fn cell_signs(k: usize) -> (f64, f64) {
    let a = if k < 2 { 1.0 } else { -1.0 };
    let b = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    (a, b)
}

/// Conditional probabilities `P(a,b|x,y)` of a 2-input/2-output box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Behavior {
    p: [[[f64; 4]; 2]; 2],
}

impl Behavior {
    /// Validates entries and per-setting normalization.
    pub fn new(p: [[[f64; 4]; 2]; 2]) -> Result<Self> {
        for (x, row) in p.iter().enumerate() {
            for (y, dist) in row.iter().enumerate() {
                for (k, &v) in dist.iter().enumerate() {
                    if !v.is_finite() || !(-ENTRY_TOL..=1.0 + ENTRY_TOL).contains(&v) {
                        return Err(Error::validation(format!(
                            "P({}|{x},{y}) = {v} is not a probability",
                            CELL_LABELS[k]
                        )));
                    }
                }
                let total: f64 = dist.iter().sum();
                if (total - 1.0).abs() > NORMALIZATION_TOL {
                    return Err(Error::validation(format!("setting ({x},{y}) sums to {total}, not 1")));
                }
            }
        }
        Ok(Self { p })
    }

    pub fn uniform() -> Self {
        Self { p: [[[0.25; 4]; 2]; 2] }
    }

    pub fn prob(&self, a: Outcome, b: Outcome, x: usize, y: usize) -> f64 {
        self.p[x][y][cell(a, b)]
    }

    /// The 4-cell distribution of setting `(x, y)`.
    pub fn setting(&self, x: usize, y: usize) -> [f64; 4] {
        self.p[x][y]
    }

    pub fn table(&self) -> &[[[f64; 4]; 2]; 2] {
        &self.p
    }

    /// Flattened 16-vector in `(x, y, cell)` order.
    pub fn to_vec(&self) -> Vec<f64> {
        self.p.iter().flatten().flatten().copied().collect()
    }

    /// `<A_x>` computed from setting `(x, y)` alone.
    pub fn marginal_a(&self, x: usize, y: usize) -> f64 {
        (0..4).map(|k| cell_signs(k).0 * self.p[x][y][k]).sum()
    }

    /// `<B_y>` computed from setting `(x, y)` alone.
    pub fn marginal_b(&self, x: usize, y: usize) -> f64 {
        (0..4).map(|k| cell_signs(k).1 * self.p[x][y][k]).sum()
    }

    pub fn correlator(&self, x: usize, y: usize) -> f64 {
        (0..4)
            .map(|k| {
                let (a, b) = cell_signs(k);
                a * b * self.p[x][y][k]
            })
            .sum()
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &Behavior) -> f64 {
        self.to_vec()
            .iter()
            .zip(other.to_vec())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Euclidean distance between the two 16-vectors.
    pub fn l2_distance(&self, other: &Behavior) -> f64 {
        self.to_vec()
            .iter()
            .zip(other.to_vec())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Per-setting outcome counts `n[x][y][cell]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountsRecord {
    pub theta_deg: f64,
    pub trials_per_setting: u64,
    pub mode: CountingMode,
    pub seed: Option<u64>,
    pub counts: [[[u64; 4]; 2]; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CountingMode {
    #[default]
    Multinomial,
    Poisson,
}

impl CountingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CountingMode::Multinomial => "multinomial",
            CountingMode::Poisson => "poisson",
        }
    }
}

impl std::str::FromStr for CountingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multinomial" => Ok(CountingMode::Multinomial),
            "poisson" => Ok(CountingMode::Poisson),
            other => Err(Error::validation(format!("unknown counting mode {other:?}"))),
        }
    }
}

impl CountsRecord {
    /// In multinomial mode every setting must hold exactly `trials_per_setting` events.
    pub fn validate(&self) -> Result<()> {
        if self.mode == CountingMode::Multinomial {
            for x in 0..2 {
                for y in 0..2 {
                    let total: u64 = self.counts[x][y].iter().sum();
                    if total != self.trials_per_setting {
                        return Err(Error::validation(format!(
                            "setting ({x},{y}) has {total} events, expected {}",
                            self.trials_per_setting
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Relative frequencies of each setting.
pub fn behavior_from_counts(counts: &CountsRecord) -> Result<Behavior> {
    let mut p = [[[0.0; 4]; 2]; 2];
    for x in 0..2 {
        for y in 0..2 {
            let n = &counts.counts[x][y];
            let total: u64 = n.iter().sum();
            if total == 0 {
                return Err(Error::EmptySetting { x, y });
            }
            for k in 0..4 {
                p[x][y][k] = n[k] as f64 / total as f64;
            }
        }
    }
    Behavior::new(p)
}

/// Eight-parameter no-signaling description of a box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorForm {
    pub ma: [f64; 2],
    pub mb: [f64; 2],
    pub corr: [[f64; 2]; 2],
}

impl CorrelatorForm {
    pub fn zeros() -> Self {
        Self {
            ma: [0.0; 2],
            mb: [0.0; 2],
            corr: [[0.0; 2]; 2],
        }
    }

    /// Deterministic local strategy `A_x = a[x]`, `B_y = b[y]`.
    pub fn deterministic(a: [f64; 2], b: [f64; 2]) -> Self {
        Self {
            ma: a,
            mb: b,
            corr: [[a[0] * b[0], a[0] * b[1]], [a[1] * b[0], a[1] * b[1]]],
        }
    }

    pub fn max_abs_diff(&self, other: &CorrelatorForm) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..2 {
            d = d.max((self.ma[i] - other.ma[i]).abs());
            d = d.max((self.mb[i] - other.mb[i]).abs());
            for j in 0..2 {
                d = d.max((self.corr[i][j] - other.corr[i][j]).abs());
            }
        }
        d
    }
}

/// Correlators and marginals; marginals are averaged uniformly over the
/// partner's setting, which only matters for signaling input.
pub fn to_correlators(b: &Behavior) -> CorrelatorForm {
    let mut c = CorrelatorForm::zeros();
    for x in 0..2 {
        c.ma[x] = 0.5 * (b.marginal_a(x, 0) + b.marginal_a(x, 1));
    }
    for y in 0..2 {
        c.mb[y] = 0.5 * (b.marginal_b(0, y) + b.marginal_b(1, y));
    }
    for x in 0..2 {
        for y in 0..2 {
            c.corr[x][y] = b.correlator(x, y);
        }
    }
    c
}

/// Inverse of [`to_correlators`] on the no-signaling set.
pub fn from_correlators(c: &CorrelatorForm) -> Result<Behavior> {
    let mut p = [[[0.0; 4]; 2]; 2];
    for x in 0..2 {
        for y in 0..2 {
            for (k, slot) in p[x][y].iter_mut().enumerate() {
                let (a, b) = cell_signs(k);
                let v = (1.0 + a * c.ma[x] + b * c.mb[y] + a * b * c.corr[x][y]) / 4.0;
                if v < -ENTRY_TOL || !v.is_finite() {
                    return Err(Error::validation(format!(
                        "correlators imply P({}|{x},{y}) = {v} < 0",
                        CELL_LABELS[k]
                    )));
                }
                *slot = v;
            }
        }
    }
    Behavior::new(p)
}

/// How far each party's marginal moves with the partner's setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalingReport {
    pub deficit_a: [f64; 2],
    pub deficit_b: [f64; 2],
    pub max_deficit: f64,
}

pub fn signaling_deficit(b: &Behavior) -> SignalingReport {
    let deficit_a = [0, 1].map(|x| (b.marginal_a(x, 0) - b.marginal_a(x, 1)).abs());
    let deficit_b = [0, 1].map(|y| (b.marginal_b(0, y) - b.marginal_b(1, y)).abs());
    let max_deficit = deficit_a.iter().chain(deficit_b.iter()).copied().fold(0.0, f64::max);
    SignalingReport {
        deficit_a,
        deficit_b,
        max_deficit,
    }
}

/// `alpha <A0> + <A0B0> + <A0B1> + <A1B0> - <A1B1>`.
pub fn tilted_chsh(c: &CorrelatorForm, alpha: f64) -> f64 {
    alpha * c.ma[0] + c.corr[0][0] + c.corr[0][1] + c.corr[1][0] - c.corr[1][1]
}

pub(crate) fn check_theta(theta: f64) -> Result<()> {
    if theta.is_finite() && theta > 0.0 && theta <= FRAC_PI_4 + 1e-12 {
        Ok(())
    } else {
        Err(Error::Domain(theta, "(0, pi/4]"))
    }
}

fn at_maximal_entanglement(theta: f64) -> bool {
    (theta - FRAC_PI_4).abs() <= 1e-12
}

/// Tilt parameter whose maximal violation self-tests `cos t|00> + sin t|11>`.
pub fn alpha_for_theta(theta: f64) -> Result<f64> {
    check_theta(theta)?;
    if at_maximal_entanglement(theta) {
        return Ok(0.0);
    }
    let t = (2.0 * theta).tan();
    Ok(2.0 / (1.0 + 2.0 * t * t).sqrt())
}

/// Bob's measurement angle `mu = arctan(sin 2 theta)`.
pub fn mu_for_theta(theta: f64) -> Result<f64> {
    check_theta(theta)?;
    if at_maximal_entanglement(theta) {
        return Ok(FRAC_PI_4);
    }
    Ok((2.0 * theta).sin().atan())
}

pub fn quantum_max(alpha: f64) -> f64 {
    (8.0 + 2.0 * alpha * alpha).sqrt()
}

pub fn local_bound(alpha: f64) -> f64 {
    2.0 + alpha
}

/// Deviation of an observed tilted-CHSH value from the quantum maximum.
pub fn epsilon_deviation(value: f64, alpha: f64) -> f64 {
    quantum_max(alpha) - value
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn deterministic_box() -> Behavior {
        from_correlators(&CorrelatorForm::deterministic([1.0; 2], [1.0; 2])).unwrap()
    }

    #[test]
    fn uniform_counts_give_uniform_behavior() {
        let rec = CountsRecord {
            theta_deg: 45.0,
            trials_per_setting: 100,
            mode: CountingMode::Multinomial,
            seed: None,
            counts: [[[25; 4]; 2]; 2],
        };
        let b = behavior_from_counts(&rec).unwrap();
        assert_eq!(b, Behavior::uniform());
        let c = to_correlators(&b);
        assert_eq!(c, CorrelatorForm::zeros());
    }

    #[test]
    fn deterministic_column() {
        let mut counts = [[[25; 4]; 2]; 2];
        counts[0][0] = [500, 0, 0, 0];
        let rec = CountsRecord {
            theta_deg: 45.0,
            trials_per_setting: 100,
            mode: CountingMode::Poisson,
            seed: None,
            counts,
        };
        let b = behavior_from_counts(&rec).unwrap();
        assert_eq!(b.prob(Outcome::Plus, Outcome::Plus, 0, 0), 1.0);
    }

    #[test]
    fn empty_setting_is_named() {
        let mut counts = [[[25; 4]; 2]; 2];
        counts[1][0] = [0; 4];
        let rec = CountsRecord {
            theta_deg: 45.0,
            trials_per_setting: 100,
            mode: CountingMode::Multinomial,
            seed: None,
            counts,
        };
        match behavior_from_counts(&rec) {
            Err(Error::EmptySetting { x: 1, y: 0 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn multinomial_totals_checked() {
        let rec = CountsRecord {
            theta_deg: 45.0,
            trials_per_setting: 101,
            mode: CountingMode::Multinomial,
            seed: None,
            counts: [[[25; 4]; 2]; 2],
        };
        assert!(rec.validate().is_err());
    }

    #[test]
    fn deterministic_box_values() {
        let b = deterministic_box();
        assert_eq!(b.prob(Outcome::Plus, Outcome::Plus, 1, 1), 1.0);
        let c = to_correlators(&b);
        assert_eq!(c.corr, [[1.0; 2]; 2]);
        assert_eq!(c.ma, [1.0; 2]);
        assert_eq!(c.mb, [1.0; 2]);
        for alpha in [0.0, 0.5, 1.3] {
            assert_abs_diff_eq!(tilted_chsh(&c, alpha), 2.0 + alpha, epsilon = 1e-15);
        }
    }

    #[test]
    fn inconsistent_correlators_rejected() {
        let mut c = CorrelatorForm::zeros();
        c.corr[1][0] = 1.0;
        c.ma[1] = -1.0;
        let err = from_correlators(&c).unwrap_err();
        assert!(err.to_string().contains("|1,0"), "{err}");
    }

    #[test]
    fn perturbation_deficit() {
        let parent = from_correlators(&CorrelatorForm {
            ma: [0.1, -0.2],
            mb: [0.3, 0.05],
            corr: [[0.5, 0.4], [0.3, -0.2]],
        })
        .unwrap();
        let mut p = *parent.table();
        p[0][0][cell(Outcome::Plus, Outcome::Plus)] += 0.01;
        p[0][0][cell(Outcome::Minus, Outcome::Plus)] -= 0.01;
        let b = Behavior::new(p).unwrap();
        let rep = signaling_deficit(&b);
        assert_abs_diff_eq!(rep.deficit_a[0], 0.02, epsilon = 1e-15);
        assert_abs_diff_eq!(rep.deficit_b[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rep.max_deficit, 0.02, epsilon = 1e-15);
        assert!(signaling_deficit(&parent).max_deficit <= 1e-12);
    }

    #[test]
    fn alpha_mu_values() {
        let t45 = FRAC_PI_4;
        assert_eq!(alpha_for_theta(t45).unwrap(), 0.0);
        assert_abs_diff_eq!(mu_for_theta(t45).unwrap(), FRAC_PI_4, epsilon = 1e-15);
        assert_abs_diff_eq!(quantum_max(0.0), 2.0 * 2f64.sqrt(), epsilon = 1e-15);
        let t30 = 30f64.to_radians();
        let a = alpha_for_theta(t30).unwrap();
        assert_abs_diff_eq!(a, 2.0 / 7f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(quantum_max(a), 8.0 / 7f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(epsilon_deviation(quantum_max(a), a), 0.0);
        // continuity at the maximally entangled end
        let near = alpha_for_theta(FRAC_PI_4 - 1e-9).unwrap();
        assert!(near < 1e-7);
    }

    #[test]
    fn theta_out_of_range() {
        for t in [0.0, -0.1, 0.8, f64::NAN] {
            assert!(matches!(alpha_for_theta(t), Err(Error::Domain(..))));
            assert!(mu_for_theta(t).is_err());
        }
    }

    #[test]
    fn alpha_strictly_decreasing() {
        let grid: Vec<f64> = (1..=200).map(|k| FRAC_PI_4 * k as f64 / 200.0).collect();
        for w in grid.windows(2) {
            assert!(alpha_for_theta(w[0]).unwrap() > alpha_for_theta(w[1]).unwrap());
        }
    }

    #[test]
    fn local_bound_over_all_deterministic_strategies() {
        let signs = [1.0, -1.0];
        for alpha in [0.0, 0.25, 0.5, 1.0, 1.5, 1.99] {
            let mut best = f64::NEG_INFINITY;
            for &a0 in &signs {
                for &a1 in &signs {
                    for &b0 in &signs {
                        for &b1 in &signs {
                            let c = CorrelatorForm::deterministic([a0, a1], [b0, b1]);
                            let v = tilted_chsh(&c, alpha);
                            assert!(v <= local_bound(alpha) + 1e-12);
                            best = best.max(v);
                        }
                    }
                }
            }
            assert_abs_diff_eq!(best, local_bound(alpha), epsilon = 1e-12);
        }
    }

    fn correlator_form() -> impl Strategy<Value = CorrelatorForm> {
        // Mixtures of deterministic boxes are always consistent.
        proptest::collection::vec(0.0f64..1.0, 16).prop_map(|w| {
            let total: f64 = w.iter().sum::<f64>() + 1e-9;
            let mut c = CorrelatorForm::zeros();
            for (k, wk) in w.iter().enumerate() {
                let s = |bit: usize| if (k >> bit) & 1 == 0 { 1.0 } else { -1.0 };
                let d = CorrelatorForm::deterministic([s(0), s(1)], [s(2), s(3)]);
                let f = wk / total;
                for i in 0..2 {
                    c.ma[i] += f * d.ma[i];
                    c.mb[i] += f * d.mb[i];
                    for j in 0..2 {
                        c.corr[i][j] += f * d.corr[i][j];
                    }
                }
            }
            c
        })
    }

    proptest! {
        #[test]
        fn correlator_round_trip(c in correlator_form()) {
            let b = from_correlators(&c).unwrap();
            prop_assert!(signaling_deficit(&b).max_deficit <= 1e-12);
            let back = to_correlators(&b);
            prop_assert!(back.max_abs_diff(&c) <= 1e-12);
            let again = from_correlators(&back).unwrap();
            prop_assert!(again.max_abs_diff(&b) <= 1e-12);
        }
    }
}
