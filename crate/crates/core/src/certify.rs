//! NQA2 regularization of raw frequencies and the SWAP fidelity bound.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use crate::bell::{
    alpha_for_theta, behavior_from_counts, cell_signs, check_theta, quantum_max, to_correlators, Behavior,
    CorrelatorForm, CountsRecord,
};
use crate::error::{Error, Result};
use crate::moments::{
    assemble, bind_known, Affine, BoundMoments, KnownMoment, LinearExpr, MatrixSchema, MomentSystem, MomentTable,
    OperatorModel, OperatorWord, SdpAssembly,
};
use crate::quantum::{C2, C4};
use crate::sdp::{certified_lower_bound, solve, SdpBlock, SdpProblem, SdpSolution, SolveStatus};

/// Every moment of a product of involutions lies in [-1, 1].
const MOMENT_BOUND: f64 = 1.0;

/// Default relative tolerance for the certification solves.
pub const DEFAULT_TOL: f64 = 1e-7;

/// The standard moment system, built once and shared between jobs.
pub fn standard_system() -> &'static MomentSystem {
    static SYSTEM: OnceLock<MomentSystem> = OnceLock::new();
    SYSTEM.get_or_init(MomentSystem::standard)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub relative_gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
}

impl SolverDiagnostics {
    fn from_solution(sol: &SdpSolution, offset: f64) -> Self {
        Self {
            status: sol.status,
            iterations: sol.iterations,
            primal_objective: sol.primal_objective + offset,
            dual_objective: sol.dual_objective + offset,
            relative_gap: sol.relative_gap,
            primal_infeasibility: sol.primal_infeasibility,
            dual_infeasibility: sol.dual_infeasibility,
        }
    }
}

fn require_usable(sol: &SdpSolution, what: &str) -> Result<()> {
    match sol.status {
        SolveStatus::Optimal | SolveStatus::MaxIterations | SolveStatus::Stalled => Ok(()),
        other => Err(Error::Solver(format!(
            "{what}: solver reported {other:?} after {} iterations (gap {:.2e})",
            sol.iterations, sol.relative_gap
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nqa2Result {
    /// Regularized, no-signaling behavior.
    pub behavior: Behavior,
    /// Euclidean distance between the 16-vectors of input and output.
    pub distance: f64,
    pub diagnostics: SolverDiagnostics,
}

/// Behavior cells `(1 + a<A_x> + b<B_y> + ab<A_x B_y>) / 4`, with tiny negative
/// entries left by the solver clipped before renormalizing each setting.
fn behavior_from_moments(c: &CorrelatorForm) -> Result<Behavior> {
    let mut p = [[[0.0; 4]; 2]; 2];
    for x in 0..2 {
        for y in 0..2 {
            for k in 0..4 {
                let (a, b) = cell_signs(k);
                p[x][y][k] = ((1.0 + a * c.ma[x] + b * c.mb[y] + a * b * c.corr[x][y]) / 4.0).max(0.0);
            }
            let total: f64 = p[x][y].iter().sum();
            for v in p[x][y].iter_mut() {
                *v /= total;
            }
        }
    }
    Behavior::new(p)
}

fn correlators_from_moments(system: &MomentSystem, moments: &[f64]) -> Result<CorrelatorForm> {
    let mut c = CorrelatorForm::zeros();
    for k in KnownMoment::ALL {
        let v = moments[system.variable(&k.word())?];
        match k {
            KnownMoment::MarginalA(x) => c.ma[x] = v,
            KnownMoment::MarginalB(y) => c.mb[y] = v,
            KnownMoment::Correlator(x, y) => c.corr[x][y] = v,
        }
    }
    Ok(c)
}

fn moment_expr(system: &MomentSystem, word: OperatorWord) -> Result<LinearExpr> {
    Ok(LinearExpr {
        constant: 0.0,
        terms: vec![(system.variable(&word)?, 1.0)],
    })
}

/// Nearest point (Euclidean norm on the 16 probabilities) of the
/// moment-matrix relaxation to `raw`, using only the 37x37 moment matrix.
pub fn nqa2_regularize(raw: &Behavior) -> Result<Nqa2Result> {
    nqa2_regularize_with(raw, false, DEFAULT_TOL)
}

/// As [`nqa2_regularize`], optionally adding the localizing constraints.
pub fn nqa2_regularize_with(raw: &Behavior, with_localizing: bool, tol: f64) -> Result<Nqa2Result> {
    let system = standard_system();
    let free = BoundMoments::all_free(system.table.len());
    let mut schemas: Vec<&dyn MatrixSchema> = vec![&system.gamma];
    if with_localizing {
        schemas.extend(system.localizing.iter().map(|l| l as &dyn MatrixSchema));
    }
    let constraints = if with_localizing {
        system.localizing_constraints()
    } else {
        Vec::new()
    };
    let asm = assemble(&schemas, &free, &constraints)?;
    let s_var = asm.num_vars();
    let mut objective = vec![0.0; s_var + 1];
    objective[s_var] = 1.0;
    let mut problem = SdpProblem::new(objective);
    for block in asm.blocks.iter().cloned() {
        problem.add_block(block)?;
    }

    let known: Vec<Affine> = KnownMoment::ALL
        .iter()
        .map(|k| asm.lower(&moment_expr(system, k.word())?))
        .collect::<Result<_>>()?;
    let (ma, mb, corr) = (&known[0..2], &known[2..4], &known[4..8]);

    let mut schur = SdpBlock::new(17);
    for i in 0..16 {
        schur.add_term(s_var, i, i, 1.0);
    }
    schur.add_term(s_var, 16, 16, 1.0);
    for x in 0..2 {
        for y in 0..2 {
            for k in 0..4 {
                let row = 8 * x + 4 * y + k;
                let (a, b) = cell_signs(k);
                let mut constant = 0.25 - raw.table()[x][y][k];
                for (coeff, (k0, terms)) in [(a, &ma[x]), (b, &mb[y]), (a * b, &corr[2 * x + y])] {
                    constant += 0.25 * coeff * k0;
                    for &(s, v) in terms {
                        schur.add_term(s, row, 16, 0.25 * coeff * v);
                    }
                }
                schur.add_constant(row, 16, constant);
            }
        }
    }
    problem.add_block(schur)?;
    for v in 0..s_var {
        problem.set_bound(v, MOMENT_BOUND);
    }
    // two behaviors are at most 2 sqrt 2 apart
    problem.set_bound(s_var, 4.0);

    let sol = solve(&problem, tol)?;
    require_usable(&sol, "NQA2 regularization")?;
    let moments = asm.moments(&sol.x[..s_var]);
    let behavior = behavior_from_moments(&correlators_from_moments(system, &moments)?)?;
    let distance = behavior.l2_distance(raw);
    Ok(Nqa2Result {
        behavior,
        distance,
        diagnostics: SolverDiagnostics::from_solution(&sol, 0.0),
    })
}

/// Cross-term coefficient of the SWAP fidelity, `cos(theta) sin(theta)`.
pub fn swap_cross_coefficient(theta: f64) -> f64 {
    theta.cos() * theta.sin()
}

/// `F = sum coeff * <word>` for the SWAP isometry built from `A0, A1, B2, B3`.
pub fn fidelity_terms(theta: f64) -> Vec<(f64, OperatorWord)> {
    let w = |s: &str| OperatorWord::parse(s).expect("static word");
    let k = swap_cross_coefficient(theta) / 8.0;
    let c2 = (2.0 * theta).cos() / 4.0;
    let mut terms = vec![
        (0.25, OperatorWord::identity()),
        (0.25, w("A0 B2")),
        (c2, w("A0")),
        (c2, w("B2")),
    ];
    for s in ["A1 B3", "A1 A0 B3 B2", "A0 A1 B2 B3", "A0 A1 A0 B2 B3 B2"] {
        terms.push((k, w(s)));
    }
    for s in ["A0 A1 A0 B3", "A0 A1 B3 B2", "A1 A0 B2 B3", "A1 B2 B3 B2"] {
        terms.push((-k, w(s)));
    }
    terms
}

/// Evaluates the fidelity objective on a full moment assignment.
pub fn objective_on_moments(table: &MomentTable, moments: &[f64], theta: f64) -> Result<f64> {
    check_theta(theta)?;
    if moments.len() != table.len() {
        return Err(Error::Dimension(format!(
            "assignment has {} moments, table has {}",
            moments.len(),
            table.len()
        )));
    }
    let mut f = 0.0;
    for (coeff, word) in fidelity_terms(theta) {
        if word.is_identity() {
            f += coeff;
        } else {
            let v = table
                .lookup(&word)
                .ok_or_else(|| Error::Schema(format!("assignment lacks moment <{word}>")))?;
            f += coeff * moments[v];
        }
    }
    Ok(f)
}

/// Fidelity of the target with the state extracted by the SWAP isometry,
/// computed by applying the isometry to explicit operators.
pub fn swap_isometry_fidelity(model: &OperatorModel, theta: f64) -> f64 {
    let id = C2::identity();
    let kraus = |z: C2, x: C2| -> [C2; 2] {
        let p0 = (id + z).scale(0.5);
        let p1 = x * (id - z).scale(0.5);
        [p0, p1]
    };
    let ka = kraus(model.alice[0], model.alice[1]);
    let kb = kraus(model.bob[2], model.bob[3]);
    let psi = [(0usize, 0usize, theta.cos()), (1, 1, theta.sin())];
    let rho = model.rho.matrix();
    let mut f = Complex64::new(0.0, 0.0);
    for &(k, l, ck) in &psi {
        let left: C4 = ka[k].kronecker(&kb[l]);
        for &(k2, l2, ck2) in &psi {
            let right: C4 = ka[k2].kronecker(&kb[l2]);
            f += (left * rho * right.adjoint()).trace() * (ck * ck2);
        }
    }
    f.re
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundSource {
    /// Observed marginals and correlators pinned.
    BehaviorConstrained,
    /// Only a lower limit on the tilted-CHSH value imposed.
    EpsilonConstrained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityCertificate {
    pub theta: f64,
    /// Certified lower bound on the fidelity, floored at zero.
    pub f_s: f64,
    /// Certified bound before flooring.
    pub dual_bound: f64,
    pub primal_objective: f64,
    pub valid: bool,
    pub source: BoundSource,
    pub diagnostics: SolverDiagnostics,
}

/// Shared SWAP relaxation: the moment matrix and both localizing matrices.
struct SwapProblem {
    problem: SdpProblem,
    offset: f64,
    assembly: SdpAssembly,
}

fn swap_problem(bound: &BoundMoments, theta: f64) -> Result<SwapProblem> {
    let system = standard_system();
    let mut schemas: Vec<&dyn MatrixSchema> = vec![&system.gamma];
    schemas.extend(system.localizing.iter().map(|l| l as &dyn MatrixSchema));
    let asm = assemble(&schemas, bound, &system.localizing_constraints())?;
    let mut f = LinearExpr::default();
    for (coeff, word) in fidelity_terms(theta) {
        if word.is_identity() {
            f.constant += coeff;
        } else {
            f.terms.push((system.variable(&word)?, coeff));
        }
    }
    let (offset, terms) = asm.lower(&f)?;
    let mut objective = vec![0.0; asm.num_vars()];
    for (s, c) in terms {
        objective[s] += c;
    }
    let mut problem = SdpProblem::new(objective);
    for block in asm.blocks.iter().cloned() {
        problem.add_block(block)?;
    }
    for v in 0..asm.num_vars() {
        problem.set_bound(v, MOMENT_BOUND);
    }
    Ok(SwapProblem {
        problem,
        offset,
        assembly: asm,
    })
}

fn certify_swap(sp: &SwapProblem, theta: f64, tol: f64, source: BoundSource) -> Result<FidelityCertificate> {
    let sol = solve(&sp.problem, tol)?;
    require_usable(&sol, "SWAP fidelity bound")?;
    let bound = certified_lower_bound(&sp.problem, &sol)? + sp.offset;
    Ok(FidelityCertificate {
        theta,
        f_s: bound.max(0.0),
        dual_bound: bound,
        primal_objective: sol.primal_objective + sp.offset,
        valid: true,
        source,
        diagnostics: SolverDiagnostics::from_solution(&sol, sp.offset),
    })
}

/// Certified lower bound on the fidelity with the target state given the
/// observed marginals and correlators.
pub fn swap_fidelity(c: &CorrelatorForm, theta: f64) -> Result<FidelityCertificate> {
    swap_fidelity_with(c, theta, DEFAULT_TOL)
}

pub fn swap_fidelity_with(c: &CorrelatorForm, theta: f64, tol: f64) -> Result<FidelityCertificate> {
    check_theta(theta)?;
    let bound = bind_known(standard_system(), c)?;
    let sp = swap_problem(&bound, theta)?;
    certify_swap(&sp, theta, tol, BoundSource::BehaviorConstrained)
}

/// How the violation constraint of a robustness point is imposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpsilonConstraint {
    /// `I >= max - eps`; curves are nonincreasing by construction.
    #[default]
    AtLeast,
    /// `I = max - eps`.
    Exactly,
}

/// Knobs shared by the certification entry points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    pub tol: f64,
    /// Add the localizing matrices to the NQA2 relaxation.
    pub nqa2_localizing: bool,
    pub epsilon_constraint: EpsilonConstraint,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            nqa2_localizing: false,
            epsilon_constraint: EpsilonConstraint::AtLeast,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epsilon: f64,
    pub certificate: FidelityCertificate,
}

fn robust_point(theta: f64, eps: f64, constraint: EpsilonConstraint, tol: f64) -> Result<FidelityCertificate> {
    let system = standard_system();
    let alpha = alpha_for_theta(theta)?;
    let free = BoundMoments::all_free(system.table.len());
    let mut sp = swap_problem(&free, theta)?;
    let mut functional = LinearExpr::default();
    for (k, c) in [
        (KnownMoment::MarginalA(0), alpha),
        (KnownMoment::Correlator(0, 0), 1.0),
        (KnownMoment::Correlator(0, 1), 1.0),
        (KnownMoment::Correlator(1, 0), 1.0),
        (KnownMoment::Correlator(1, 1), -1.0),
    ] {
        functional.terms.push((system.variable(&k.word())?, c));
    }
    let (constant, coeffs) = sp.assembly.lower(&functional)?;
    let target = quantum_max(alpha) - eps;
    match constraint {
        EpsilonConstraint::AtLeast => {
            let mut block = SdpBlock::new(1);
            block.add_constant(0, 0, constant - target);
            for &(s, c) in &coeffs {
                block.add_term(s, 0, 0, c);
            }
            sp.problem.add_block(block)?;
        }
        EpsilonConstraint::Exactly => sp.problem.add_equality(coeffs, target - constant)?,
    }
    certify_swap(&sp, theta, tol, BoundSource::EpsilonConstrained)
}

/// Certified fidelity bounds against the deviation from maximal violation.
/// Grid points are solved concurrently; the output follows `eps_grid` order.
pub fn robust_curve(theta: f64, eps_grid: &[f64]) -> Result<Vec<CurvePoint>> {
    robust_curve_with(theta, eps_grid, &CertifyOptions::default())
}

pub fn robust_curve_with(theta: f64, eps_grid: &[f64], opts: &CertifyOptions) -> Result<Vec<CurvePoint>> {
    check_theta(theta)?;
    if let Some(e) = eps_grid.iter().find(|e| !(**e >= 0.0)) {
        return Err(Error::validation(format!("epsilon {e} must be nonnegative")));
    }
    eps_grid
        .par_iter()
        .map(|&epsilon| {
            robust_point(theta, epsilon, opts.epsilon_constraint, opts.tol)
                .map(|certificate| CurvePoint { epsilon, certificate })
        })
        .collect()
}

/// All artifacts of one self-testing run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub raw: Behavior,
    pub nqa2: Nqa2Result,
    pub correlators: CorrelatorForm,
    pub certificate: FidelityCertificate,
}

/// Counts -> frequencies -> NQA2 -> correlators -> SWAP bound.
pub fn certify_pipeline(counts: &CountsRecord, theta: f64) -> Result<PipelineOutput> {
    certify_pipeline_with(counts, theta, &CertifyOptions::default())
}

pub fn certify_pipeline_with(counts: &CountsRecord, theta: f64, opts: &CertifyOptions) -> Result<PipelineOutput> {
    let raw = behavior_from_counts(counts)?;
    certify_behavior(&raw, theta, opts)
}

/// The pipeline starting from a behavior instead of counts.
pub fn certify_behavior(raw: &Behavior, theta: f64, opts: &CertifyOptions) -> Result<PipelineOutput> {
    check_theta(theta)?;
    let nqa2 = nqa2_regularize_with(raw, opts.nqa2_localizing, opts.tol)?;
    let correlators = to_correlators(&nqa2.behavior);
    let certificate = swap_fidelity_with(&correlators, theta, opts.tol)?;
    Ok(PipelineOutput {
        raw: *raw,
        nqa2,
        correlators,
        certificate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bell::{signaling_deficit, tilted_chsh};
    use crate::quantum::{apply_depolarizing, simulated_source, target_state, NoiseModel};
    use approx::assert_abs_diff_eq;

    const GRID_DEG: [f64; 7] = [30.0, 32.5, 35.0, 37.5, 40.0, 42.5, 45.0];

    fn ideal(deg: f64) -> Behavior {
        simulated_source(deg.to_radians(), &NoiseModel::default()).unwrap().1
    }

    fn depolarized(deg: f64, p: f64) -> Behavior {
        let noise = NoiseModel {
            depolarizing_p: p,
            ..Default::default()
        };
        simulated_source(deg.to_radians(), &noise).unwrap().1
    }

    #[test]
    fn objective_is_one_on_ideal_moments() {
        let sys = standard_system();
        for deg in GRID_DEG {
            let t = deg.to_radians();
            let q = crate::moments::quantum_moment_vector(&sys.table, t).unwrap();
            assert_abs_diff_eq!(objective_on_moments(&sys.table, &q, t).unwrap(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn objective_with_free_moments_zeroed() {
        let sys = standard_system();
        let t = std::f64::consts::FRAC_PI_4;
        let c = to_correlators(&ideal(45.0));
        let assignment = bind_known(sys, &c).unwrap().with_free(0.0);
        assert_abs_diff_eq!(
            objective_on_moments(&sys.table, &assignment, t).unwrap(),
            0.25,
            epsilon = 1e-12
        );
    }

    #[test]
    fn objective_matches_isometry_on_noisy_states() {
        let sys = standard_system();
        for deg in GRID_DEG {
            let t = deg.to_radians();
            for p in [0.9, 0.99] {
                let rho = apply_depolarizing(&target_state(t).unwrap().density(), p).unwrap();
                let model = OperatorModel::ideal(t, rho).unwrap();
                let q = model.moment_vector(&sys.table);
                let direct = swap_isometry_fidelity(&model, t);
                assert_abs_diff_eq!(objective_on_moments(&sys.table, &q, t).unwrap(), direct, epsilon = 1e-9);
                // ideal operators act as the identity isometry on the target
                assert_abs_diff_eq!(direct, p + (1.0 - p) / 4.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn objective_rejects_short_assignment() {
        let sys = standard_system();
        assert!(objective_on_moments(&sys.table, &[0.0; 3], 0.5).is_err());
        let mut small = MomentTable::default();
        small.intern(&OperatorWord::parse("A0").unwrap());
        assert!(matches!(
            objective_on_moments(&small, &[0.0], 0.5),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn nqa2_keeps_quantum_behaviors() {
        for deg in [32.5, 40.0f64] {
            let b = ideal(deg);
            let r = nqa2_regularize(&b).unwrap();
            assert!(r.distance <= 1e-6, "{deg}: {}", r.distance);
            assert!(r.behavior.max_abs_diff(&b) <= 1e-6);
        }
    }

    #[test]
    fn nqa2_removes_signaling() {
        let b = ideal(40.0);
        let mut p = *b.table();
        // <A0> at y = 0 shifted by +0.02
        p[0][0][0] += 0.005;
        p[0][0][1] += 0.005;
        p[0][0][2] -= 0.005;
        p[0][0][3] -= 0.005;
        let raw = Behavior::new(p).unwrap();
        assert!(signaling_deficit(&raw).max_deficit > 0.019);
        let r = nqa2_regularize(&raw).unwrap();
        assert!(signaling_deficit(&r.behavior).max_deficit <= 1e-7);
        assert!(r.distance > 0.0 && r.distance <= 0.02, "{}", r.distance);
        let again = nqa2_regularize(&r.behavior).unwrap();
        assert!(again.distance <= 1e-6);
    }

    #[test]
    fn swap_bound_at_ideal_data() {
        for deg in [45.0, 37.5f64] {
            let t = deg.to_radians();
            let cert = swap_fidelity(&to_correlators(&ideal(deg)), t).unwrap();
            assert!(cert.valid);
            assert_eq!(cert.source, BoundSource::BehaviorConstrained);
            assert!(cert.f_s >= 0.99, "{deg}: {}", cert.f_s);
            assert!(cert.f_s <= 1.0 + 1e-6);
            assert!(cert.f_s <= cert.primal_objective + 10.0 * DEFAULT_TOL);
        }
    }

    #[test]
    fn swap_bound_below_tomographic_fidelity() {
        let t = 40f64.to_radians();
        for p in [0.95, 0.99] {
            let out = certify_behavior(&depolarized(40.0, p), t, &CertifyOptions::default()).unwrap();
            let q = crate::moments::quantum_moment_vector(&standard_system().table, t).unwrap();
            assert!(out.certificate.f_s <= p + (1.0 - p) / 4.0);
            assert!(out.certificate.f_s <= objective_on_moments(&standard_system().table, &q, t).unwrap() + 1e-6);
        }
    }

    #[test]
    fn robust_curve_is_monotone() {
        let t = 35f64.to_radians();
        let curve = robust_curve(t, &[0.0, 0.05, 0.1]).unwrap();
        assert_eq!(curve.len(), 3);
        assert!(curve[0].certificate.f_s >= 0.99);
        for w in curve.windows(2) {
            assert!(w[1].certificate.f_s <= w[0].certificate.f_s);
        }
        assert!(curve
            .iter()
            .all(|p| p.certificate.source == BoundSource::EpsilonConstrained));
        assert!(robust_curve(t, &[-0.1]).is_err());
    }

    #[test]
    fn equality_variant_matches_at_zero() {
        let t = 45f64.to_radians();
        let opts = CertifyOptions {
            epsilon_constraint: EpsilonConstraint::Exactly,
            ..Default::default()
        };
        let eq = robust_curve_with(t, &[0.0], &opts).unwrap();
        assert!(eq[0].certificate.f_s >= 0.99);
    }

    #[test]
    fn pipeline_reports_empty_setting() {
        let counts = CountsRecord {
            theta_deg: 45.0,
            trials_per_setting: 10,
            mode: crate::bell::CountingMode::Poisson,
            seed: None,
            counts: [[[3, 2, 2, 3], [0, 0, 0, 0]], [[3, 2, 2, 3], [3, 2, 2, 3]]],
        };
        let err = certify_pipeline(&counts, std::f64::consts::FRAC_PI_4).unwrap_err();
        assert!(matches!(err, Error::EmptySetting { x: 0, y: 1 }), "{err}");
    }

    #[test]
    fn tilted_value_of_regularized_ideal() {
        let r = nqa2_regularize(&ideal(45.0)).unwrap();
        let c = to_correlators(&r.behavior);
        assert_abs_diff_eq!(tilted_chsh(&c, 0.0), quantum_max(0.0), epsilon = 1e-6);
    }
}
