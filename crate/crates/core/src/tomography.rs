//! Two-qubit state tomography from Pauli data, plus the single-qubit
//! miscalibration demonstration.

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bell::{cell_signs, CountingMode};
use crate::error::{Error, Result};
use crate::quantum::{
    fidelity_pure, identity2, sample_cells, setting_rng, sigma_x, sigma_y, sigma_z, target_state, DensityMatrix, C2, C4,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];
    /// Measurable bases, in the order used for the nine joint settings.
    pub const BASES: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];

    pub fn matrix(self) -> C2 {
        match self {
            Pauli::I => identity2(),
            Pauli::X => sigma_x(),
            Pauli::Y => sigma_y(),
            Pauli::Z => sigma_z(),
        }
    }

    pub fn label(self) -> char {
        match self {
            Pauli::I => 'i',
            Pauli::X => 'x',
            Pauli::Y => 'y',
            Pauli::Z => 'z',
        }
    }

    fn from_label(c: char) -> Option<Pauli> {
        match c {
            'x' => Some(Pauli::X),
            'y' => Some(Pauli::Y),
            'z' => Some(Pauli::Z),
            _ => None,
        }
    }
}

/// Label such as `"xz"` for a joint basis `(i, j)` with `i, j` indexing [`Pauli::BASES`].
pub fn basis_label(i: usize, j: usize) -> String {
    format!("{}{}", Pauli::BASES[i].label(), Pauli::BASES[j].label())
}

/// Inverse of [`basis_label`].
pub fn parse_basis_label(s: &str) -> Result<(usize, usize)> {
    let mut it = s.chars();
    let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
        return Err(Error::Parse(format!("bad tomography basis label {s:?}")));
    };
    let idx = |c| {
        Pauli::from_label(c)
            .map(|p| Pauli::BASES.iter().position(|q| *q == p).unwrap())
            .ok_or_else(|| Error::Parse(format!("bad tomography basis label {s:?}")))
    };
    Ok((idx(a)?, idx(b)?))
}

/// `<sigma_i (x) sigma_j>` for `i, j` in `{I, X, Y, Z}`; the `(I, I)` slot is fixed to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PauliExpectations {
    values: [[f64; 4]; 4],
}

impl PauliExpectations {
    pub fn new(mut values: [[f64; 4]; 4]) -> Result<Self> {
        values[0][0] = 1.0;
        for (i, row) in values.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if !v.is_finite() || v.abs() > 1.0 + 1e-9 {
                    return Err(Error::validation(format!(
                        "<{}{}> = {v} outside [-1, 1]",
                        Pauli::ALL[i].label(),
                        Pauli::ALL[j].label()
                    )));
                }
            }
        }
        Ok(Self { values })
    }

    pub fn zeros() -> Self {
        let mut values = [[0.0; 4]; 4];
        values[0][0] = 1.0;
        Self { values }
    }

    pub fn get(&self, a: Pauli, b: Pauli) -> f64 {
        self.values[a as usize][b as usize]
    }

    pub fn values(&self) -> &[[f64; 4]; 4] {
        &self.values
    }
}

fn pauli_pair(a: Pauli, b: Pauli) -> C4 {
    a.matrix().kronecker(&b.matrix())
}

pub fn expectations_from_state(rho: &DensityMatrix) -> PauliExpectations {
    let mut values = [[0.0; 4]; 4];
    for (i, a) in Pauli::ALL.iter().enumerate() {
        for (j, b) in Pauli::ALL.iter().enumerate() {
            values[i][j] = rho.expectation(&pauli_pair(*a, *b));
        }
    }
    values[0][0] = 1.0;
    PauliExpectations { values }
}

/// Outcome counts for the nine joint Pauli bases, `counts[i][j][cell]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyCounts {
    pub theta_deg: f64,
    pub trials_per_setting: u64,
    pub mode: CountingMode,
    pub seed: Option<u64>,
    pub counts: [[[u64; 4]; 3]; 3],
}

impl TomographyCounts {
    pub fn validate(&self) -> Result<()> {
        if self.mode == CountingMode::Multinomial {
            for i in 0..3 {
                for j in 0..3 {
                    let total: u64 = self.counts[i][j].iter().sum();
                    if total != self.trials_per_setting {
                        return Err(Error::validation(format!(
                            "basis {} has {total} events, expected {}",
                            basis_label(i, j),
                            self.trials_per_setting
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

fn eigenprojector(p: Pauli, sign: f64) -> C2 {
    (identity2() + p.matrix() * Complex64::new(sign, 0.0)) * Complex64::new(0.5, 0.0)
}

/// Outcome probabilities of the nine joint Pauli measurements.
pub fn pauli_probabilities(rho: &DensityMatrix) -> [[[f64; 4]; 3]; 3] {
    let mut out = [[[0.0; 4]; 3]; 3];
    for (i, a) in Pauli::BASES.iter().enumerate() {
        for (j, b) in Pauli::BASES.iter().enumerate() {
            for (k, slot) in out[i][j].iter_mut().enumerate() {
                let (sa, sb) = cell_signs(k);
                let proj = eigenprojector(*a, sa).kronecker(&eigenprojector(*b, sb));
                *slot = rho.expectation(&proj).max(0.0);
            }
        }
    }
    out
}

/// Seeded counts for the nine bases; basis `3i + j` uses stream `16 + 3i + j`.
pub fn sample_tomography(
    rho: &DensityMatrix,
    trials: u64,
    mode: CountingMode,
    seed: u64,
    theta_deg: f64,
) -> Result<TomographyCounts> {
    if trials == 0 {
        return Err(Error::validation("trials_per_setting must be at least 1"));
    }
    let probs = pauli_probabilities(rho);
    let mut counts = [[[0u64; 4]; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut rng = setting_rng(seed, 16 + (3 * i + j) as u64);
            counts[i][j] = sample_cells(&probs[i][j], trials, mode, &mut rng);
        }
    }
    Ok(TomographyCounts {
        theta_deg,
        trials_per_setting: trials,
        mode,
        seed: Some(seed),
        counts,
    })
}

/// Joint terms come from each basis' correlator; single-party terms are
/// averaged over the partner's three bases.
pub fn expectations_from_counts(tc: &TomographyCounts) -> Result<PauliExpectations> {
    expectations_from_probabilities(&tomography_frequencies(tc)?)
}

/// Relative frequencies of each basis, `freq[i][j][cell]`.
pub fn tomography_frequencies(tc: &TomographyCounts) -> Result<[[[f64; 4]; 3]; 3]> {
    let mut freq = [[[0.0; 4]; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let n = &tc.counts[i][j];
            let total: u64 = n.iter().sum();
            if total == 0 {
                return Err(Error::EmptyBasis(basis_label(i, j)));
            }
            for k in 0..4 {
                freq[i][j][k] = n[k] as f64 / total as f64;
            }
        }
    }
    Ok(freq)
}

/// Pauli expectations from per-basis outcome probabilities or frequencies.
pub fn expectations_from_probabilities(freq: &[[[f64; 4]; 3]; 3]) -> Result<PauliExpectations> {
    let moment = |f: &[f64; 4], which: fn(f64, f64) -> f64| -> f64 {
        (0..4)
            .map(|k| {
                let (a, b) = cell_signs(k);
                which(a, b) * f[k]
            })
            .sum()
    };
    let mut values = [[0.0; 4]; 4];
    for i in 0..3 {
        for j in 0..3 {
            values[i + 1][j + 1] = moment(&freq[i][j], |a, b| a * b);
        }
    }
    for i in 0..3 {
        values[i + 1][0] = (0..3).map(|j| moment(&freq[i][j], |a, _| a)).sum::<f64>() / 3.0;
        values[0][i + 1] = (0..3).map(|j| moment(&freq[j][i], |_, b| b)).sum::<f64>() / 3.0;
    }
    PauliExpectations::new(values)
}

/// `(1/4) sum e_ij sigma_i (x) sigma_j`; Hermitian with unit trace, not necessarily PSD.
pub fn linear_inversion(e: &PauliExpectations) -> C4 {
    let mut m = C4::zeros();
    for (i, a) in Pauli::ALL.iter().enumerate() {
        for (j, b) in Pauli::ALL.iter().enumerate() {
            m += pauli_pair(*a, *b) * Complex64::new(e.values[i][j] / 4.0, 0.0);
        }
    }
    m
}

/// Euclidean projection of `v` onto the probability simplex.
pub(crate) fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut shift = 0.0;
    for (k, uk) in u.iter().enumerate() {
        cumsum += uk;
        let t = (cumsum - 1.0) / (k as f64 + 1.0);
        if uk - t > 0.0 {
            shift = t;
        }
    }
    v.iter().map(|x| (x - shift).max(0.0)).collect()
}

/// Nearest (Frobenius) unit-trace positive semidefinite matrix.
pub fn project_to_physical(h: &C4) -> DensityMatrix {
    let sym = (h + h.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = sym.symmetric_eigen();
    let vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    if vals.iter().all(|&v| v >= 0.0) && (vals.iter().sum::<f64>() - 1.0).abs() < 1e-14 {
        return DensityMatrix(sym);
    }
    let proj = project_to_simplex(&vals);
    let mut m = C4::zeros();
    for (k, lam) in proj.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        m += v * v.adjoint() * Complex64::new(*lam, 0.0);
    }
    DensityMatrix(m)
}

/// Linear inversion followed by projection onto physical states.
pub fn reconstruct(e: &PauliExpectations) -> DensityMatrix {
    project_to_physical(&linear_inversion(e))
}

/// Fidelity of a reconstructed state with `cos t|00> + sin t|11>`.
pub fn tomography_fidelity(rho: &DensityMatrix, theta: f64) -> Result<f64> {
    Ok(fidelity_pure(rho, &target_state(theta)?))
}

/// Outcome of the single-qubit miscalibrated-tomography scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiscalibrationDemo {
    pub p: f64,
    pub xi: f64,
    pub f_true: f64,
    pub f_reported: f64,
}

impl MiscalibrationDemo {
    pub fn is_absurd(&self) -> bool {
        self.f_reported > 1.0
    }
}

/// Simulates tomography of `p|phi><phi| + (1-p) I/2`, `phi = cos(pi/8)|0> + sin(pi/8)|1>`,
/// when the X and Z analyzers are rotated by `xi` but read as ideal.
pub fn miscalibration_demo(p: f64, xi: f64) -> Result<MiscalibrationDemo> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::validation(format!("mixing weight {p} outside [0,1]")));
    }
    if !(0.0..std::f64::consts::FRAC_PI_2).contains(&xi) {
        return Err(Error::Domain(xi, "[0, pi/2)"));
    }
    let cx = |re: f64| Complex64::new(re, 0.0);
    let phi = Vector2::new(
        cx((std::f64::consts::PI / 8.0).cos()),
        cx((std::f64::consts::PI / 8.0).sin()),
    );
    let target: Matrix2<Complex64> = phi * phi.adjoint();
    let prepared = target * cx(p) + identity2() * cx((1.0 - p) / 2.0);

    let z_meas = sigma_z() * cx(xi.cos()) + sigma_x() * cx(xi.sin());
    let x_meas = sigma_x() * cx(xi.cos()) + sigma_z() * cx(xi.sin());
    let observed = |op: &C2| (prepared * op).trace().re;
    let bloch = [observed(&x_meas), observed(&sigma_y()), observed(&z_meas)];

    let reconstructed =
        (identity2() + sigma_x() * cx(bloch[0]) + sigma_y() * cx(bloch[1]) + sigma_z() * cx(bloch[2])) * cx(0.5);
    let overlap = |rho: &C2| (phi.adjoint() * rho * phi)[(0, 0)].re;
    Ok(MiscalibrationDemo {
        p,
        xi,
        f_true: overlap(&prepared),
        f_reported: overlap(&reconstructed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::apply_depolarizing;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn closed_form(p: f64, xi: f64) -> f64 {
        (1.0 + p * (xi.sin() + xi.cos())) / 2.0
    }

    #[test]
    fn mixed_state_expectations_vanish() {
        let e = expectations_from_state(&DensityMatrix::maximally_mixed());
        for i in 0..4 {
            for j in 0..4 {
                if i + j > 0 {
                    assert_abs_diff_eq!(e.values()[i][j], 0.0, epsilon = 1e-15);
                }
            }
        }
        let h = linear_inversion(&PauliExpectations::zeros());
        assert!((h - DensityMatrix::maximally_mixed().0).norm() < 1e-15);
    }

    #[test]
    fn bell_state_expectations() {
        let e = expectations_from_state(&target_state(FRAC_PI_4).unwrap().density());
        assert_abs_diff_eq!(e.get(Pauli::X, Pauli::X), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.get(Pauli::Y, Pauli::Y), -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.get(Pauli::Z, Pauli::Z), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.get(Pauli::Z, Pauli::I), 0.0, epsilon = 1e-12);
        let t = 0.4;
        let e = expectations_from_state(&target_state(t).unwrap().density());
        assert_abs_diff_eq!(e.get(Pauli::Z, Pauli::I), (2.0 * t).cos(), epsilon = 1e-12);
        assert_abs_diff_eq!(e.get(Pauli::I, Pauli::Z), (2.0 * t).cos(), epsilon = 1e-12);
        assert_abs_diff_eq!(e.get(Pauli::X, Pauli::X), (2.0 * t).sin(), epsilon = 1e-12);
    }

    #[test]
    fn perturbed_bell_state_is_unphysical() {
        let mut v = *expectations_from_state(&target_state(FRAC_PI_4).unwrap().density()).values();
        // pure Bell state has eigenvalues (1,0,0,0); raising <yy> by 0.05 moves
        // the singlet eigenvalue to -0.0125
        v[2][2] += 0.05;
        let h = linear_inversion(&PauliExpectations::new(v).unwrap());
        let eig = crate::quantum::hermitian_eigenvalues(&h);
        let negative: Vec<_> = eig.iter().filter(|&&l| l < -1e-12).collect();
        assert_eq!(negative.len(), 1, "{eig:?}");
        assert_abs_diff_eq!(*negative[0], -0.0125, epsilon = 1e-12);
        let rho = project_to_physical(&h);
        let eig = crate::quantum::hermitian_eigenvalues(rho.matrix());
        assert!(eig.iter().all(|&l| l >= -1e-14));
        assert_abs_diff_eq!(eig.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn simplex_projection_example() {
        let out = project_to_simplex(&[1.1, -0.1, 0.0, 0.0]);
        assert_eq!(out, vec![1.0, 0.0, 0.0, 0.0]);
        let h = C4::from_diagonal(&nalgebra::Vector4::new(
            Complex64::new(1.1, 0.0),
            Complex64::new(-0.1, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        ));
        let rho = project_to_physical(&h);
        assert_abs_diff_eq!(rho.matrix()[(0, 0)].re, 1.0, epsilon = 1e-14);
        assert!(rho.matrix().iter().skip(1).all(|z| z.norm() < 1e-14));
    }

    /// Brute-force check over 2x2 real density matrices: no physical point is closer.
    #[test]
    fn simplex_projection_is_optimal_on_grid() {
        let cases = [[1.3, -0.3], [0.7, 0.3], [2.0, -1.0], [0.5, 0.5], [-0.2, 1.2]];
        for lam in cases {
            let proj = project_to_simplex(&lam);
            let d_proj = ((proj[0] - lam[0]).powi(2) + (proj[1] - lam[1]).powi(2)).sqrt();
            // rho = [[a, b], [b, 1-a]] over a fine grid
            let n = 200;
            for ia in 0..=n {
                let a = ia as f64 / n as f64;
                let bmax = (a * (1.0 - a)).sqrt();
                for ib in -10..=10 {
                    let b = bmax * ib as f64 / 10.0;
                    let d = ((a - lam[0]).powi(2) + (1.0 - a - lam[1]).powi(2) + 2.0 * b * b).sqrt();
                    assert!(d_proj <= d + 1e-12);
                }
            }
        }
    }

    #[test]
    fn physical_input_unchanged() {
        let rho = apply_depolarizing(&target_state(0.6).unwrap().density(), 0.8).unwrap();
        let back = project_to_physical(rho.matrix());
        assert!(back.frobenius_distance(&rho) < 1e-14);
    }

    #[test]
    fn counts_from_uniform_give_zero() {
        let tc = TomographyCounts {
            theta_deg: 45.0,
            trials_per_setting: 40,
            mode: CountingMode::Multinomial,
            seed: None,
            counts: [[[10; 4]; 3]; 3],
        };
        let e = expectations_from_counts(&tc).unwrap();
        assert_eq!(e, PauliExpectations::zeros());
    }

    #[test]
    fn empty_basis_named() {
        let mut counts = [[[10; 4]; 3]; 3];
        counts[2][1] = [0; 4];
        let tc = TomographyCounts {
            theta_deg: 45.0,
            trials_per_setting: 40,
            mode: CountingMode::Multinomial,
            seed: None,
            counts,
        };
        match expectations_from_counts(&tc) {
            Err(Error::EmptyBasis(l)) => assert_eq!(l, "zy"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn basis_labels_round_trip() {
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(parse_basis_label(&basis_label(i, j)).unwrap(), (i, j));
            }
        }
        assert!(parse_basis_label("xq").is_err());
        assert!(parse_basis_label("xyz").is_err());
    }

    #[test]
    fn exact_probabilities_reproduce_state_expectations() {
        let rho = apply_depolarizing(&target_state(0.55).unwrap().density(), 0.9).unwrap();
        let e = expectations_from_probabilities(&pauli_probabilities(&rho)).unwrap();
        let truth = expectations_from_state(&rho);
        for i in 0..4 {
            for j in 0..4 {
                assert_abs_diff_eq!(e.values()[i][j], truth.values()[i][j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn finite_sample_within_binomial_error() {
        let rho = apply_depolarizing(&target_state(0.6).unwrap().density(), 0.95).unwrap();
        let n = 20_000;
        let tc = sample_tomography(&rho, n, CountingMode::Multinomial, 3, 34.4).unwrap();
        tc.validate().unwrap();
        let est = expectations_from_counts(&tc).unwrap();
        let truth = expectations_from_state(&rho);
        for i in 0..4 {
            for j in 0..4 {
                let t = truth.values()[i][j];
                // single-party rows average three bases, which only shrinks the error
                let se = ((1.0 - t * t) / n as f64).sqrt();
                assert!((est.values()[i][j] - t).abs() <= 5.0 * se + 1e-12, "({i},{j})");
            }
        }
    }

    #[test]
    fn depolarized_fidelity() {
        let t = FRAC_PI_4;
        let rho = apply_depolarizing(&target_state(t).unwrap().density(), 0.99).unwrap();
        let rec = reconstruct(&expectations_from_state(&rho));
        assert_abs_diff_eq!(tomography_fidelity(&rec, t).unwrap(), 0.9925, epsilon = 1e-12);
        assert_abs_diff_eq!(
            tomography_fidelity(&target_state(t).unwrap().density(), t).unwrap(),
            1.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn miscalibration_matches_closed_form() {
        let d = miscalibration_demo(1.0, FRAC_PI_4).unwrap();
        assert_abs_diff_eq!(d.f_reported, (1.0 + 2f64.sqrt()) / 2.0, epsilon = 1e-12);
        assert!(d.is_absurd());
        for p in [0.0, 0.3, 0.5, 0.8, 1.0] {
            let d0 = miscalibration_demo(p, 0.0).unwrap();
            assert_abs_diff_eq!(d0.f_reported, (1.0 + p) / 2.0, epsilon = 1e-12);
            assert_abs_diff_eq!(d0.f_true, (1.0 + p) / 2.0, epsilon = 1e-12);
            for k in 1..30 {
                let xi = FRAC_PI_2 * k as f64 / 30.0;
                let d = miscalibration_demo(p, xi).unwrap();
                assert_abs_diff_eq!(d.f_reported, closed_form(p, xi), epsilon = 1e-12);
                assert_abs_diff_eq!(d.f_true, (1.0 + p) / 2.0, epsilon = 1e-12);
                if p > 0.0 {
                    assert!(d.f_reported >= d.f_true);
                    assert_eq!(d.is_absurd(), xi.sin() + xi.cos() > 1.0 / p);
                }
            }
        }
        let d = miscalibration_demo(0.8, 30f64.to_radians()).unwrap();
        assert_abs_diff_eq!(d.f_reported, 1.0464101615137754, epsilon = 1e-12);
        assert!(miscalibration_demo(0.5, FRAC_PI_2).is_err());
        assert!(miscalibration_demo(1.2, 0.1).is_err());
    }
}
