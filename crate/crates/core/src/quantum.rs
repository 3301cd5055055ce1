//! Exact two-qubit model: target states, projective measurements in the
//! x-z plane, Born-rule behaviors and seeded finite-sample counts.

use nalgebra::{Matrix2, Matrix4, Vector4};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::bell::{cell_signs, check_theta, mu_for_theta, Behavior, CountingMode, CountsRecord};
use crate::error::{Error, Result};

pub type C2 = Matrix2<Complex64>;
pub type C4 = Matrix4<Complex64>;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity2() -> C2 {
    C2::identity()
}

pub fn sigma_x() -> C2 {
    C2::new(c(0.0), c(1.0), c(1.0), c(0.0))
}

pub fn sigma_y() -> C2 {
    C2::new(c(0.0), Complex64::new(0.0, -1.0), Complex64::new(0.0, 1.0), c(0.0))
}

pub fn sigma_z() -> C2 {
    C2::new(c(1.0), c(0.0), c(0.0), c(-1.0))
}

/// `cos(angle) sigma_z + sin(angle) sigma_x`.
pub fn xz_observable(angle: f64) -> C2 {
    sigma_z() * c(angle.cos()) + sigma_x() * c(angle.sin())
}

/// Pure two-qubit state in the basis `|00>, |01>, |10>, |11>`.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: Vector4<Complex64>,
}

impl PureState {
    pub fn new(amplitudes: [Complex64; 4]) -> Result<Self> {
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::validation(format!("state norm^2 is {norm}, not 1")));
        }
        Ok(Self {
            amplitudes: Vector4::from(amplitudes),
        })
    }

    pub fn amplitudes(&self) -> &Vector4<Complex64> {
        &self.amplitudes
    }

    pub fn density(&self) -> DensityMatrix {
        DensityMatrix(self.amplitudes * self.amplitudes.adjoint())
    }
}

/// `cos(theta)|00> + sin(theta)|11>`.
pub fn target_state(theta: f64) -> Result<PureState> {
    check_theta(theta)?;
    PureState::new([c(theta.cos()), c(0.0), c(0.0), c(theta.sin())])
}

/// Two-qubit density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(pub(crate) C4);

impl DensityMatrix {
    /// Checks hermiticity, unit trace and positivity.
    pub fn new(m: C4) -> Result<Self> {
        let herm = (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm > 1e-12 {
            return Err(Error::validation(format!("matrix is not Hermitian (defect {herm})")));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > 1e-12 {
            return Err(Error::validation(format!("trace is {}, not 1", tr.re)));
        }
        let min_eig = hermitian_eigenvalues(&m).iter().copied().fold(f64::INFINITY, f64::min);
        if min_eig < -1e-10 {
            return Err(Error::validation(format!("negative eigenvalue {min_eig}")));
        }
        Ok(Self(m))
    }

    pub fn maximally_mixed() -> Self {
        Self(C4::identity() * c(0.25))
    }

    pub fn matrix(&self) -> &C4 {
        &self.0
    }

    pub fn expectation(&self, op: &C4) -> f64 {
        (self.0 * op).trace().re
    }

    pub fn frobenius_distance(&self, other: &DensityMatrix) -> f64 {
        (self.0 - other.0).norm()
    }
}

pub(crate) fn hermitian_eigenvalues(m: &C4) -> Vec<f64> {
    let sym = (m + m.adjoint()) * c(0.5);
    sym.symmetric_eigen().eigenvalues.iter().copied().collect()
}

/// `p rho + (1 - p) I/4`.
pub fn apply_depolarizing(rho: &DensityMatrix, p: f64) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::validation(format!("depolarizing weight {p} outside [0,1]")));
    }
    Ok(DensityMatrix(rho.0 * c(p) + C4::identity() * c((1.0 - p) / 4.0)))
}

/// `<psi|rho|psi>`.
pub fn fidelity_pure(rho: &DensityMatrix, psi: &PureState) -> f64 {
    let v = psi.amplitudes();
    (v.adjoint() * rho.0 * v)[(0, 0)].re
}

/// Projective +/-1 measurement along a unit Bloch vector in the x-z plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSetting {
    /// Angle from `sigma_z` towards `sigma_x`, radians.
    pub angle: f64,
}

impl MeasurementSetting {
    pub fn new(angle: f64) -> Self {
        Self { angle }
    }

    pub fn bloch(&self) -> [f64; 3] {
        [self.angle.sin(), 0.0, self.angle.cos()]
    }

    pub fn observable(&self) -> C2 {
        xz_observable(self.angle)
    }

    /// Eigenprojector `(I + sign * n.sigma) / 2`.
    pub fn projector(&self, sign: f64) -> C2 {
        (identity2() + self.observable() * c(sign)) * c(0.5)
    }
}

/// The four settings `A0, A1` (Alice) and `B0, B1` (Bob).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSettings {
    pub alice: [MeasurementSetting; 2],
    pub bob: [MeasurementSetting; 2],
}

/// `A0 = Z`, `A1 = X`, `B0/B1` at `+/- mu(theta)`.
pub fn ideal_measurements(theta: f64) -> Result<MeasurementSettings> {
    let mu = mu_for_theta(theta)?;
    Ok(MeasurementSettings {
        alice: [
            MeasurementSetting::new(0.0),
            MeasurementSetting::new(std::f64::consts::FRAC_PI_2),
        ],
        bob: [MeasurementSetting::new(mu), MeasurementSetting::new(-mu)],
    })
}

/// Imperfections applied to a simulated source and its measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub depolarizing_p: f64,
    pub offsets_a: [f64; 2],
    pub offsets_b: [f64; 2],
    /// Common rotation of every measurement axis, radians.
    pub xi: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            depolarizing_p: 1.0,
            offsets_a: [0.0; 2],
            offsets_b: [0.0; 2],
            xi: 0.0,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.depolarizing_p) {
            return Err(Error::validation(format!(
                "depolarizing_p {} outside [0,1]",
                self.depolarizing_p
            )));
        }
        Ok(())
    }

    pub fn apply_to_settings(&self, s: &MeasurementSettings) -> MeasurementSettings {
        let shift = |m: MeasurementSetting, off: f64| MeasurementSetting::new(m.angle + off + self.xi);
        MeasurementSettings {
            alice: [
                shift(s.alice[0], self.offsets_a[0]),
                shift(s.alice[1], self.offsets_a[1]),
            ],
            bob: [shift(s.bob[0], self.offsets_b[0]), shift(s.bob[1], self.offsets_b[1])],
        }
    }

    pub fn apply_to_state(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        apply_depolarizing(rho, self.depolarizing_p)
    }
}

/// Born-rule probabilities `Tr[rho (P_a^x (x) P_b^y)]`.
pub fn born_behavior(rho: &DensityMatrix, settings: &MeasurementSettings) -> Behavior {
    let mut p = [[[0.0; 4]; 2]; 2];
    for x in 0..2 {
        for y in 0..2 {
            for (k, slot) in p[x][y].iter_mut().enumerate() {
                let (a, b) = cell_signs(k);
                let proj = settings.alice[x].projector(a).kronecker(&settings.bob[y].projector(b));
                *slot = rho.expectation(&proj);
            }
        }
    }
    Behavior::new(p).expect("Born-rule probabilities form a valid behavior")
}

/// Source state and behavior for an ideal setup at `theta`, degraded by `noise`.
pub fn simulated_source(theta: f64, noise: &NoiseModel) -> Result<(DensityMatrix, Behavior)> {
    noise.validate()?;
    let rho = noise.apply_to_state(&target_state(theta)?.density())?;
    let settings = noise.apply_to_settings(&ideal_measurements(theta)?);
    let behavior = born_behavior(&rho, &settings);
    Ok((rho, behavior))
}

/// How many events to draw per setting and how.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialPlan {
    pub trials_per_setting: u64,
    pub mode: CountingMode,
    pub seed: u64,
}

/// Independent random stream for one measurement setting.
///
/// Every setting draws from `ChaCha8Rng::seed_from_u64(seed)` with its own
/// stream number, so results do not depend on evaluation order. Self-testing
/// setting `(x, y)` uses stream `2x + y`; tomography basis `k` uses `16 + k`.
pub fn setting_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draw counts for one 4-outcome distribution.
pub fn sample_cells(probs: &[f64; 4], trials: u64, mode: CountingMode, rng: &mut ChaCha8Rng) -> [u64; 4] {
    let mut out = [0u64; 4];
    match mode {
        CountingMode::Multinomial => {
            // conditional binomial decomposition
            let mut remaining = trials;
            let mut mass_left = 1.0;
            for k in 0..3 {
                let q = (probs[k].max(0.0) / mass_left).clamp(0.0, 1.0);
                let draw = if remaining == 0 || q == 0.0 {
                    0
                } else if q >= 1.0 {
                    remaining
                } else {
                    Binomial::new(remaining, q).expect("valid binomial").sample(rng)
                };
                out[k] = draw;
                remaining -= draw;
                mass_left -= probs[k].max(0.0);
                if mass_left <= 0.0 {
                    break;
                }
            }
            out[3] += remaining;
        }
        CountingMode::Poisson => {
            for k in 0..4 {
                let mean = trials as f64 * probs[k].max(0.0);
                out[k] = if mean > 0.0 {
                    Poisson::new(mean).expect("valid poisson").sample(rng) as u64
                } else {
                    0
                };
            }
        }
    }
    out
}

pub fn sample_counts(b: &Behavior, plan: &TrialPlan, theta_deg: f64) -> Result<CountsRecord> {
    if plan.trials_per_setting == 0 {
        return Err(Error::validation("trials_per_setting must be at least 1"));
    }
    let mut counts = [[[0u64; 4]; 2]; 2];
    for x in 0..2 {
        for y in 0..2 {
            let mut rng = setting_rng(plan.seed, (2 * x + y) as u64);
            counts[x][y] = sample_cells(&b.setting(x, y), plan.trials_per_setting, plan.mode, &mut rng);
        }
    }
    Ok(CountsRecord {
        theta_deg,
        trials_per_setting: plan.trials_per_setting,
        mode: plan.mode,
        seed: Some(plan.seed),
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bell::{
        alpha_for_theta, behavior_from_counts, quantum_max, signaling_deficit, tilted_chsh, to_correlators,
    };
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn target_state_amplitudes() {
        let s = target_state(FRAC_PI_4).unwrap();
        let h = 0.5f64.sqrt();
        assert_abs_diff_eq!(s.amplitudes()[0].re, h, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amplitudes()[3].re, h, epsilon = 1e-15);
        let s = target_state(30f64.to_radians()).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[0].re, 3f64.sqrt() / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amplitudes()[3].re, 0.5, epsilon = 1e-15);
        let s = target_state(1e-6).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[0].re, 1.0, epsilon = 1e-11);
        assert_abs_diff_eq!(s.amplitudes()[3].re, 1e-6, epsilon = 1e-15);
        assert!(target_state(1.0).is_err());
    }

    #[test]
    fn ideal_measurement_angles() {
        let m = ideal_measurements(FRAC_PI_4).unwrap();
        assert_abs_diff_eq!(m.bob[0].angle, FRAC_PI_4, epsilon = 1e-15);
        assert_abs_diff_eq!(m.bob[1].angle, -FRAC_PI_4, epsilon = 1e-15);
        let small = ideal_measurements(1e-8).unwrap();
        assert!(small.bob[0].angle.abs() < 1e-7);
        assert_eq!(small.alice, m.alice);
        let zero = NoiseModel::default().apply_to_settings(&m);
        assert_eq!(zero, m);
    }

    #[test]
    fn maximally_mixed_is_uniform() {
        let b = born_behavior(&DensityMatrix::maximally_mixed(), &ideal_measurements(0.5).unwrap());
        assert!(b.max_abs_diff(&Behavior::uniform()) < 1e-15);
    }

    #[test]
    fn ideal_violation_is_maximal() {
        for deg in [30.0, 32.5, 35.0, 37.5, 40.0, 42.5, 45.0f64] {
            let t = deg.to_radians();
            let (_, b) = simulated_source(t, &NoiseModel::default()).unwrap();
            let alpha = alpha_for_theta(t).unwrap();
            let v = tilted_chsh(&to_correlators(&b), alpha);
            assert_abs_diff_eq!(v, quantum_max(alpha), epsilon = 1e-12);
        }
        let (_, b) = simulated_source(FRAC_PI_4, &NoiseModel::default()).unwrap();
        let c = to_correlators(&b);
        assert_abs_diff_eq!(c.corr[0][0], 0.5f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn depolarizing_fidelity() {
        let psi = target_state(FRAC_PI_4).unwrap();
        let rho = psi.density();
        assert_abs_diff_eq!(fidelity_pure(&rho, &psi), 1.0, epsilon = 1e-15);
        assert_eq!(apply_depolarizing(&rho, 1.0).unwrap(), rho);
        let mixed = apply_depolarizing(&rho, 0.0).unwrap();
        assert!(mixed.frobenius_distance(&DensityMatrix::maximally_mixed()) < 1e-15);
        assert_abs_diff_eq!(fidelity_pure(&mixed, &psi), 0.25, epsilon = 1e-15);
        let noisy = apply_depolarizing(&rho, 0.99).unwrap();
        assert_abs_diff_eq!(fidelity_pure(&noisy, &psi), 0.9925, epsilon = 1e-14);
        assert!(apply_depolarizing(&rho, 1.5).is_err());
    }

    #[test]
    fn deterministic_sampling() {
        let (_, b) = simulated_source(FRAC_PI_4, &NoiseModel::default()).unwrap();
        let plan = TrialPlan {
            trials_per_setting: 500,
            mode: CountingMode::Multinomial,
            seed: 7,
        };
        let r1 = sample_counts(&b, &plan, 45.0).unwrap();
        let r2 = sample_counts(&b, &plan, 45.0).unwrap();
        assert_eq!(r1, r2);
        r1.validate().unwrap();
        let pois = sample_counts(
            &b,
            &TrialPlan {
                mode: CountingMode::Poisson,
                ..plan
            },
            45.0,
        )
        .unwrap();
        assert_ne!(pois.counts, r1.counts);
    }

    #[test]
    fn deterministic_behavior_fills_one_cell() {
        let p = [[[1.0, 0.0, 0.0, 0.0]; 2]; 2];
        let b = Behavior::new(p).unwrap();
        let plan = TrialPlan {
            trials_per_setting: 321,
            mode: CountingMode::Multinomial,
            seed: 1,
        };
        let r = sample_counts(&b, &plan, 45.0).unwrap();
        assert_eq!(r.counts, [[[321, 0, 0, 0]; 2]; 2]);
    }

    #[test]
    fn frequencies_converge() {
        let t = 35f64.to_radians();
        let (_, b) = simulated_source(
            t,
            &NoiseModel {
                depolarizing_p: 0.9,
                ..Default::default()
            },
        )
        .unwrap();
        let n = 1_000_000u64;
        let plan = TrialPlan {
            trials_per_setting: n,
            mode: CountingMode::Multinomial,
            seed: 11,
        };
        let est = behavior_from_counts(&sample_counts(&b, &plan, 35.0).unwrap()).unwrap();
        for x in 0..2 {
            for y in 0..2 {
                for k in 0..4 {
                    let p = b.setting(x, y)[k];
                    let se = (p * (1.0 - p) / n as f64).sqrt();
                    assert!((est.setting(x, y)[k] - p).abs() <= 5.0 * se + 1e-12);
                }
            }
        }
    }

    #[test]
    fn finite_samples_can_exceed_quantum_max() {
        let (_, b) = simulated_source(FRAC_PI_4, &NoiseModel::default()).unwrap();
        let above = (0..20u64)
            .filter(|&seed| {
                let plan = TrialPlan {
                    trials_per_setting: 500,
                    mode: CountingMode::Multinomial,
                    seed,
                };
                let est = behavior_from_counts(&sample_counts(&b, &plan, 45.0).unwrap()).unwrap();
                tilted_chsh(&to_correlators(&est), 0.0) > quantum_max(0.0)
            })
            .count();
        assert!(above > 0);
    }

    fn random_state() -> impl Strategy<Value = DensityMatrix> {
        (
            proptest::collection::vec(-1.0f64..1.0, 32),
            proptest::collection::vec(0.0f64..1.0, 4),
        )
            .prop_map(|(v, w)| {
                // mixture of four random pure states
                let total: f64 = w.iter().sum::<f64>() + 1e-9;
                let mut m = C4::zeros();
                for k in 0..4 {
                    let mut amp = Vector4::from_fn(|i, _| Complex64::new(v[8 * k + 2 * i], v[8 * k + 2 * i + 1]));
                    let norm = amp.norm();
                    if norm < 1e-6 {
                        amp = Vector4::new(c(1.0), c(0.0), c(0.0), c(0.0));
                    } else {
                        amp /= c(norm);
                    }
                    m += amp * amp.adjoint() * c(w[k] / total);
                }
                let tr = m.trace();
                DensityMatrix(m / tr)
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn born_behaviors_are_quantum(rho in random_state(), angles in proptest::collection::vec(-3.2f64..3.2, 4), alpha in 0.0f64..1.99) {
            let s = MeasurementSettings {
                alice: [MeasurementSetting::new(angles[0]), MeasurementSetting::new(angles[1])],
                bob: [MeasurementSetting::new(angles[2]), MeasurementSetting::new(angles[3])],
            };
            let b = born_behavior(&rho, &s);
            prop_assert!(signaling_deficit(&b).max_deficit <= 1e-12);
            prop_assert!(tilted_chsh(&to_correlators(&b), alpha) <= quantum_max(alpha) + 1e-9);
        }
    }
}
