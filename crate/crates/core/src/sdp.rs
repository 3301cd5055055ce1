//! Small dense semidefinite programming engine.
//!
//! Problems are stated in linear-matrix-inequality form:
//!
//! ```text
//!   minimize    c^T x
//!   subject to  S_k = C_k + sum_i x_i A_{k,i}  is PSD   for every block k
//!               E x = g
//! ```
//!
//! with dual
//!
//! ```text
//!   maximize    -sum_k <C_k, Y_k> + g^T lambda
//!   subject to  sum_k <A_{k,i}, Y_k> + (E^T lambda)_i = c_i,   Y_k PSD.
//! ```
//!
//! The solver is an infeasible primal-dual path-following method using the
//! HKM search direction with Mehrotra's predictor-corrector. Parameters are
//! fixed (see [`SolverOptions`]) and every loop runs in a fixed order, so a
//! given problem always produces bit-identical output.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// One symmetric PSD block. Entries are kept for the upper triangle only.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpBlock {
    dim: usize,
    constant: Vec<(usize, usize, f64)>,
    terms: Vec<(usize, usize, usize, f64)>,
}

impl SdpBlock {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            constant: Vec::new(),
            terms: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn upper(r: usize, c: usize) -> (usize, usize) {
        if r <= c {
            (r, c)
        } else {
            (c, r)
        }
    }

    /// Adds `v` to the constant at `(r, c)` and, implicitly, `(c, r)`.
    pub fn add_constant(&mut self, r: usize, c: usize, v: f64) {
        if v != 0.0 {
            let (r, c) = Self::upper(r, c);
            self.constant.push((r, c, v));
        }
    }

    /// Adds `v * x_var` at `(r, c)` and, implicitly, `(c, r)`.
    pub fn add_term(&mut self, var: usize, r: usize, c: usize, v: f64) {
        if v != 0.0 {
            let (r, c) = Self::upper(r, c);
            self.terms.push((var, r, c, v));
        }
    }

    /// Builds a block from dense symmetric matrices.
    pub fn from_dense(constant: &DMatrix<f64>, coeffs: &[(usize, DMatrix<f64>)]) -> Result<Self> {
        let dim = constant.nrows();
        let mut block = SdpBlock::new(dim);
        let check = |m: &DMatrix<f64>| -> Result<()> {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::Dimension(format!(
                    "block matrix is {}x{}, expected {dim}x{dim}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            let asym = (m - m.transpose()).amax();
            if asym > 1e-12 {
                return Err(Error::validation(format!("block matrix not symmetric (defect {asym})")));
            }
            Ok(())
        };
        check(constant)?;
        for r in 0..dim {
            for c in r..dim {
                block.add_constant(r, c, constant[(r, c)]);
            }
        }
        for (var, m) in coeffs {
            check(m)?;
            for r in 0..dim {
                for c in r..dim {
                    block.add_term(*var, r, c, m[(r, c)]);
                }
            }
        }
        Ok(block)
    }

    pub fn constant_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for &(r, c, v) in &self.constant {
            m[(r, c)] += v;
            if r != c {
                m[(c, r)] += v;
            }
        }
        m
    }

    /// `C + sum_i x_i A_i`.
    pub fn evaluate(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant_matrix();
        for &(var, r, c, v) in &self.terms {
            m[(r, c)] += v * x[var];
            if r != c {
                m[(c, r)] += v * x[var];
            }
        }
        m
    }
}

/// A linear equality `sum coeffs * x = rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEquality {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    num_vars: usize,
    objective: Vec<f64>,
    blocks: Vec<SdpBlock>,
    equalities: Vec<LinearEquality>,
    /// `|x_i| <= bound` valid on every point the caller cares about; used only
    /// to absorb residual dual infeasibility when certifying bounds.
    bounds: Vec<Option<f64>>,
}

impl SdpProblem {
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            num_vars: n,
            objective,
            blocks: Vec::new(),
            equalities: Vec::new(),
            bounds: vec![None; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn blocks(&self) -> &[SdpBlock] {
        &self.blocks
    }

    pub fn equalities(&self) -> &[LinearEquality] {
        &self.equalities
    }

    pub fn add_block(&mut self, block: SdpBlock) -> Result<()> {
        for &(r, c, _) in &block.constant {
            if c >= block.dim {
                return Err(Error::Dimension(format!(
                    "constant entry ({r},{c}) outside {}",
                    block.dim
                )));
            }
        }
        for &(var, r, c, _) in &block.terms {
            if var >= self.num_vars || c >= block.dim {
                return Err(Error::Dimension(format!(
                    "term (var {var}, {r}, {c}) outside {} vars / dim {}",
                    self.num_vars, block.dim
                )));
            }
        }
        self.blocks.push(block);
        Ok(())
    }

    pub fn add_equality(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) -> Result<()> {
        if let Some(&(v, _)) = coeffs.iter().find(|(v, _)| *v >= self.num_vars) {
            return Err(Error::Dimension(format!("equality references variable {v}")));
        }
        self.equalities.push(LinearEquality { coeffs, rhs });
        Ok(())
    }

    pub fn set_bound(&mut self, var: usize, bound: f64) {
        self.bounds[var] = Some(bound);
    }

    pub fn bounds(&self) -> &[Option<f64>] {
        &self.bounds
    }

    /// Plain-text dump. Entry lines read `block row col var coef`, where
    /// `var = 0` is the constant matrix and `var = i + 1` multiplies `x_i`;
    /// rows and columns are 0-based and only the upper triangle is listed.
    pub fn to_dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# sdp-dump v1");
        let _ = writeln!(out, "vars {}", self.num_vars);
        for (i, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                let _ = writeln!(out, "obj {i} {c:e}");
            }
        }
        for (i, b) in self.bounds.iter().enumerate() {
            if let Some(b) = b {
                let _ = writeln!(out, "bound {i} {b:e}");
            }
        }
        for (k, block) in self.blocks.iter().enumerate() {
            let _ = writeln!(out, "block {k} {}", block.dim);
            for &(r, c, v) in &block.constant {
                let _ = writeln!(out, "{k} {r} {c} 0 {v:e}");
            }
            for &(var, r, c, v) in &block.terms {
                let _ = writeln!(out, "{k} {r} {c} {} {v:e}", var + 1);
            }
        }
        for (e, eq) in self.equalities.iter().enumerate() {
            let _ = writeln!(out, "eq {e} rhs {:e}", eq.rhs);
            for &(var, v) in &eq.coeffs {
                let _ = writeln!(out, "eq {e} {var} {v:e}");
            }
        }
        out
    }

    pub fn from_dump(text: &str) -> Result<Self> {
        let bad = |line: &str| Error::Parse(format!("bad sdp dump line {line:?}"));
        let num = |s: &str, line: &str| s.parse::<f64>().map_err(|_| bad(line));
        let idx = |s: &str, line: &str| s.parse::<usize>().map_err(|_| bad(line));
        let mut problem: Option<SdpProblem> = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f[0] == "vars" {
                problem = Some(SdpProblem::new(vec![
                    0.0;
                    idx(f.get(1).ok_or_else(|| bad(line))?, line)?
                ]));
                continue;
            }
            let p = problem.as_mut().ok_or_else(|| bad(line))?;
            match (f[0], f.len()) {
                ("obj", 3) => {
                    let i = idx(f[1], line)?;
                    *p.objective.get_mut(i).ok_or_else(|| bad(line))? = num(f[2], line)?;
                }
                ("bound", 3) => {
                    let i = idx(f[1], line)?;
                    *p.bounds.get_mut(i).ok_or_else(|| bad(line))? = Some(num(f[2], line)?);
                }
                ("block", 3) => {
                    if idx(f[1], line)? != p.blocks.len() {
                        return Err(bad(line));
                    }
                    p.blocks.push(SdpBlock::new(idx(f[2], line)?));
                }
                ("eq", 4) => {
                    let e = idx(f[1], line)?;
                    if e == p.equalities.len() && f[2] == "rhs" {
                        p.equalities.push(LinearEquality {
                            coeffs: Vec::new(),
                            rhs: num(f[3], line)?,
                        });
                    } else if e + 1 == p.equalities.len() {
                        let var = idx(f[2], line)?;
                        p.equalities[e].coeffs.push((var, num(f[3], line)?));
                    } else {
                        return Err(bad(line));
                    }
                }
                (_, 5) => {
                    let k = idx(f[0], line)?;
                    let (r, c, var, v) = (idx(f[1], line)?, idx(f[2], line)?, idx(f[3], line)?, num(f[4], line)?);
                    let n = p.num_vars;
                    let block = p.blocks.get_mut(k).ok_or_else(|| bad(line))?;
                    if r > c || c >= block.dim || var > n {
                        return Err(bad(line));
                    }
                    if var == 0 {
                        block.constant.push((r, c, v));
                    } else {
                        block.terms.push((var - 1, r, c, v));
                    }
                }
                _ => return Err(bad(line)),
            }
        }
        problem.ok_or_else(|| Error::Parse("sdp dump has no vars line".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    MaxIterations,
    /// Numerical progress stopped short of the tolerance; the best iterate is returned.
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Target relative duality gap and relative feasibility residuals.
    pub tol: f64,
    pub max_iterations: usize,
    /// Fraction of the distance to the PSD boundary taken per step.
    pub step_fraction: f64,
    /// Scale of the initial `S = xi I`, `Y = xi I` iterate.
    pub initial_scale: f64,
    /// Iterates whose norm exceeds this are declared infeasible.
    pub divergence_threshold: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iterations: 200,
            step_fraction: 0.95,
            initial_scale: 10.0,
            divergence_threshold: 1e9,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    #[serde(skip)]
    pub dual_blocks: Vec<DMatrix<f64>>,
    pub eq_multipliers: Vec<f64>,
    pub relative_gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub iterations: usize,
}

/// `(row, col, value)` triplets of one coefficient matrix.
type Triplets = Vec<(usize, usize, f64)>;

/// Per-block sparse coefficient lists in full (both triangles) form.
struct BlockData {
    dim: usize,
    constant: DMatrix<f64>,
    /// `(var, entries)` with entries `(row, col, value)`.
    vars: Vec<(usize, Triplets)>,
}

impl BlockData {
    fn new(block: &SdpBlock) -> Self {
        let mut map: std::collections::BTreeMap<usize, Vec<(usize, usize, f64)>> = Default::default();
        for &(var, r, c, v) in &block.terms {
            let e = map.entry(var).or_default();
            e.push((r, c, v));
            if r != c {
                e.push((c, r, v));
            }
        }
        Self {
            dim: block.dim,
            constant: block.constant_matrix(),
            vars: map.into_iter().collect(),
        }
    }

    fn apply(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (var, entries) in &self.vars {
            for &(r, c, v) in entries {
                m[(r, c)] += v * x[*var];
            }
        }
        m
    }

    /// Accumulates `<A_i, Z>` into `out[i]`.
    fn adjoint_into(&self, z: &DMatrix<f64>, out: &mut [f64]) {
        for (var, entries) in &self.vars {
            out[*var] += entries.iter().map(|&(r, c, v)| v * z[(r, c)]).sum::<f64>();
        }
    }
}

fn frob_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(b).sum()
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest `alpha` with `X + alpha dX` PSD (infinite if unbounded).
fn max_step(chol_l: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    let l = chol_l;
    let t = l.solve_lower_triangular(dx).expect("triangular factor is nonsingular");
    let w = l
        .solve_lower_triangular(&t.transpose())
        .expect("triangular factor is nonsingular");
    let w = symmetrize(&w);
    let min_eig = w.symmetric_eigenvalues().min();
    if min_eig >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / min_eig
    }
}

/// Iterates whose merit exceeds the best seen by this factor end the run.
const STALL_FACTOR: f64 = 1e3;

struct Snapshot {
    merit: f64,
    iteration: usize,
    report: (f64, f64, f64, f64, f64),
    x: DVector<f64>,
    y: Vec<DMatrix<f64>>,
    lambda: DVector<f64>,
}

struct Newton {
    dx: DVector<f64>,
    dlambda: DVector<f64>,
    ds: Vec<DMatrix<f64>>,
    dy: Vec<DMatrix<f64>>,
}

/// Schur complement factorization shared by predictor and corrector.
enum SchurFactor {
    Cholesky(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl SchurFactor {
    fn new(m: DMatrix<f64>) -> Option<Self> {
        if let Some(ch) = m.clone().cholesky() {
            return Some(SchurFactor::Cholesky(ch));
        }
        let scale = m.diagonal().amax().max(1.0);
        let mut ridged = m.clone();
        for i in 0..ridged.nrows() {
            ridged[(i, i)] += 1e-12 * scale;
        }
        if let Some(ch) = ridged.cholesky() {
            return Some(SchurFactor::Cholesky(ch));
        }
        let lu = m.lu();
        if lu.is_invertible() {
            Some(SchurFactor::Lu(lu))
        } else {
            None
        }
    }

    fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        match self {
            SchurFactor::Cholesky(ch) => ch.solve(b),
            SchurFactor::Lu(lu) => lu.solve(b).unwrap_or_else(|| DVector::zeros(b.len())),
        }
    }
}

struct Solver<'a> {
    problem: &'a SdpProblem,
    blocks: Vec<BlockData>,
    e: DMatrix<f64>,
    g: DVector<f64>,
    c: DVector<f64>,
    opts: SolverOptions,
}

impl<'a> Solver<'a> {
    fn new(problem: &'a SdpProblem, opts: SolverOptions) -> Result<Self> {
        let n = problem.num_vars;
        if problem.objective.len() != n {
            return Err(Error::Dimension("objective length differs from variable count".into()));
        }
        let blocks: Vec<BlockData> = problem.blocks.iter().map(BlockData::new).collect();
        let mut used = vec![false; n];
        for b in &blocks {
            for (var, _) in &b.vars {
                used[*var] = true;
            }
        }
        if let Some(i) = used.iter().position(|u| !u) {
            return Err(Error::validation(format!("variable {i} appears in no PSD block")));
        }
        let m = problem.equalities.len();
        let mut e = DMatrix::zeros(m, n);
        let mut g = DVector::zeros(m);
        for (row, eq) in problem.equalities.iter().enumerate() {
            for &(var, v) in &eq.coeffs {
                e[(row, var)] += v;
            }
            g[row] = eq.rhs;
        }
        Ok(Self {
            problem,
            blocks,
            e,
            g,
            c: DVector::from_vec(problem.objective.clone()),
            opts,
        })
    }

    fn adjoint(&self, y: &[DMatrix<f64>]) -> DVector<f64> {
        let mut out = vec![0.0; self.problem.num_vars];
        for (b, yk) in self.blocks.iter().zip(y) {
            b.adjoint_into(yk, &mut out);
        }
        DVector::from_vec(out)
    }

    /// `M_ij = sum_k tr(A_i S^-1 A_j Y)`.
    fn schur(&self, s_inv: &[DMatrix<f64>], y: &[DMatrix<f64>]) -> DMatrix<f64> {
        let n = self.problem.num_vars;
        let mut m = DMatrix::zeros(n, n);
        for (k, b) in self.blocks.iter().enumerate() {
            let si = &s_inv[k];
            let yk = &y[k];
            for (a, (vi, ei)) in b.vars.iter().enumerate() {
                // G = A_i^T-contracted rows: g[q][s] = sum_p A_i[p,q] Y[s,p]
                let mut gmat = DMatrix::<f64>::zeros(b.dim, b.dim);
                for &(p, q, v) in ei {
                    for s in 0..b.dim {
                        gmat[(q, s)] += v * yk[(s, p)];
                    }
                }
                for (vj, ej) in b.vars[a..].iter() {
                    let mut acc = 0.0;
                    for &(r, s, w) in ej {
                        // sum_q Sinv[q, r] * g[q, s]
                        let mut t = 0.0;
                        for q in 0..b.dim {
                            t += si[(q, r)] * gmat[(q, s)];
                        }
                        acc += w * t;
                    }
                    m[(*vi, *vj)] += acc;
                    if vi != vj {
                        m[(*vj, *vi)] += acc;
                    }
                }
            }
        }
        m
    }

    fn solve(&self) -> Result<SdpSolution> {
        let n = self.problem.num_vars;
        let meq = self.e.nrows();
        let nb = self.blocks.len();
        let total_dim: usize = self.blocks.iter().map(|b| b.dim).sum();
        let xi = self.opts.initial_scale;

        let mut x = DVector::<f64>::zeros(n);
        let mut lambda = DVector::<f64>::zeros(meq);
        let mut s: Vec<DMatrix<f64>> = self
            .blocks
            .iter()
            .map(|b| DMatrix::identity(b.dim, b.dim) * xi)
            .collect();
        let mut y: Vec<DMatrix<f64>> = s.clone();

        let c_norm = 1.0 + self.c.norm();
        let cmat_norm = 1.0
            + self
                .blocks
                .iter()
                .map(|b| b.constant.norm_squared())
                .sum::<f64>()
                .sqrt();
        let g_norm = 1.0 + self.g.norm();

        let mut status = SolveStatus::MaxIterations;
        let mut iterations = 0;
        let mut report = (0.0, 0.0, f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut best: Option<Snapshot> = None;

        for iter in 0..=self.opts.max_iterations {
            iterations = iter;
            let xs = x.as_slice();
            let rp: Vec<DMatrix<f64>> = self.blocks.iter().zip(&s).map(|(b, sk)| b.apply(xs) - sk).collect();
            let rd = &self.c - self.adjoint(&y) - self.e.transpose() * &lambda;
            let re = &self.g - &self.e * &x;

            let pobj = self.c.dot(&x);
            let dobj = -self
                .blocks
                .iter()
                .zip(&y)
                .map(|(b, yk)| frob_inner(&b.constant, yk))
                .sum::<f64>()
                + self.g.dot(&lambda);
            let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
            let pinf = (rp.iter().map(|r| r.norm_squared()).sum::<f64>().sqrt() / cmat_norm).max(re.norm() / g_norm);
            let dinf = rd.norm() / c_norm;
            let comp: f64 = s.iter().zip(&y).map(|(a, b)| frob_inner(a, b)).sum();
            let comp_rel = comp / (1.0 + pobj.abs() + dobj.abs());
            report = (pobj, dobj, gap.max(comp_rel), pinf, dinf);
            let merit = gap.max(comp_rel).max(pinf).max(dinf);
            let best_merit = best.as_ref().map_or(f64::INFINITY, |b| b.merit);
            if merit < best_merit {
                best = Some(Snapshot {
                    merit,
                    iteration: iter,
                    report,
                    x: x.clone(),
                    y: y.clone(),
                    lambda: lambda.clone(),
                });
            } else if !merit.is_finite() || merit > STALL_FACTOR * best_merit {
                status = SolveStatus::Stalled;
                break;
            }

            if gap <= self.opts.tol && comp_rel <= self.opts.tol && pinf <= self.opts.tol && dinf <= self.opts.tol {
                status = SolveStatus::Optimal;
                break;
            }
            let ymax = y.iter().map(|m| m.amax()).fold(0.0, f64::max);
            if ymax > self.opts.divergence_threshold {
                status = SolveStatus::PrimalInfeasible;
                break;
            }
            if x.amax() > self.opts.divergence_threshold {
                status = SolveStatus::DualInfeasible;
                break;
            }
            if iter == self.opts.max_iterations {
                break;
            }

            let mu = comp / total_dim as f64;
            let Some(s_chol) = s.iter().map(|m| m.clone().cholesky()).collect::<Option<Vec<_>>>() else {
                status = SolveStatus::Stalled;
                break;
            };
            let Some(y_chol) = y.iter().map(|m| m.clone().cholesky()).collect::<Option<Vec<_>>>() else {
                status = SolveStatus::Stalled;
                break;
            };
            let s_inv: Vec<DMatrix<f64>> = s_chol.iter().map(|ch| symmetrize(&ch.inverse())).collect();
            let s_l: Vec<DMatrix<f64>> = s_chol.iter().map(|ch| ch.l()).collect();
            let y_l: Vec<DMatrix<f64>> = y_chol.iter().map(|ch| ch.l()).collect();

            let Some(schur) = SchurFactor::new(self.schur(&s_inv, &y)) else {
                status = SolveStatus::Stalled;
                break;
            };
            // E M^-1 E^T for the equality multipliers
            let m_inv_et: Vec<DVector<f64>> = (0..meq).map(|r| schur.solve(&self.e.row(r).transpose())).collect();
            let eq_factor = if meq > 0 {
                let mut k = DMatrix::zeros(meq, meq);
                for (j, col) in m_inv_et.iter().enumerate() {
                    let v = &self.e * col;
                    k.set_column(j, &v);
                }
                match k.lu() {
                    lu if lu.is_invertible() => Some(lu),
                    _ => {
                        status = SolveStatus::Stalled;
                        break;
                    }
                }
            } else {
                None
            };

            let direction = |sigma_mu: f64, corr: Option<&[DMatrix<f64>]>| -> Newton {
                // rhs matrices R_k = sigma mu S^-1 - Y - S^-1 Rp Y - corr
                let rmat: Vec<DMatrix<f64>> = (0..nb)
                    .map(|k| {
                        let mut r = &s_inv[k] * sigma_mu - &y[k] - &s_inv[k] * &rp[k] * &y[k];
                        if let Some(cr) = corr {
                            r -= &cr[k];
                        }
                        r
                    })
                    .collect();
                let h = self.adjoint(&rmat) - &rd;
                let m_inv_h = schur.solve(&h);
                let dlambda = match &eq_factor {
                    Some(lu) => {
                        let rhs = &re - &self.e * &m_inv_h;
                        lu.solve(&rhs).unwrap_or_else(|| DVector::zeros(meq))
                    }
                    None => DVector::zeros(0),
                };
                let mut dx = m_inv_h;
                for (j, col) in m_inv_et.iter().enumerate() {
                    dx += col * dlambda[j];
                }
                let dxs = dx.as_slice();
                let ds: Vec<DMatrix<f64>> = (0..nb)
                    .map(|k| self.blocks[k].apply(dxs) - &self.blocks[k].constant + &rp[k])
                    .collect();
                // dY = R - S^-1 A(dx) Y, where A(dx) = dS - Rp
                let dy: Vec<DMatrix<f64>> = (0..nb)
                    .map(|k| symmetrize(&(&rmat[k] - &s_inv[k] * (&ds[k] - &rp[k]) * &y[k])))
                    .collect();
                Newton { dx, dlambda, ds, dy }
            };

            let steps = |d: &Newton| -> (f64, f64) {
                let ap = s_l
                    .iter()
                    .zip(&d.ds)
                    .map(|(l, dm)| max_step(l, dm))
                    .fold(f64::INFINITY, f64::min);
                let ad = y_l
                    .iter()
                    .zip(&d.dy)
                    .map(|(l, dm)| max_step(l, dm))
                    .fold(f64::INFINITY, f64::min);
                (ap, ad)
            };

            // predictor
            let pred = direction(0.0, None);
            let (ap, ad) = steps(&pred);
            let (ap, ad) = (ap.min(1.0), ad.min(1.0));
            let comp_aff: f64 = (0..nb)
                .map(|k| frob_inner(&(&s[k] + &pred.ds[k] * ap), &(&y[k] + &pred.dy[k] * ad)))
                .sum();
            let mu_aff = comp_aff / total_dim as f64;
            let sigma = if mu > 0.0 {
                (mu_aff / mu).clamp(0.0, 1.0).powi(3)
            } else {
                0.0
            };

            // corrector
            let corr: Vec<DMatrix<f64>> = (0..nb).map(|k| &s_inv[k] * &pred.ds[k] * &pred.dy[k]).collect();
            let dir = direction(sigma * mu, Some(&corr));
            let (ap, ad) = steps(&dir);
            let tau = self.opts.step_fraction;
            let ap = (tau * ap).min(1.0);
            let ad = (tau * ad).min(1.0);

            x += &dir.dx * ap;
            for k in 0..nb {
                s[k] = symmetrize(&(&s[k] + &dir.ds[k] * ap));
                y[k] = symmetrize(&(&y[k] + &dir.dy[k] * ad));
            }
            lambda += &dir.dlambda * ad;
        }

        // an unfinished run reports its best iterate rather than the last one
        if matches!(status, SolveStatus::Stalled | SolveStatus::MaxIterations) {
            if let Some(b) = best {
                report = b.report;
                iterations = b.iteration;
                x = b.x;
                y = b.y;
                lambda = b.lambda;
            }
        }
        let (pobj, dobj, gap, pinf, dinf) = report;
        Ok(SdpSolution {
            status,
            x: x.iter().copied().collect(),
            primal_objective: pobj,
            dual_objective: dobj,
            dual_blocks: y,
            eq_multipliers: lambda.iter().copied().collect(),
            relative_gap: gap,
            primal_infeasibility: pinf,
            dual_infeasibility: dinf,
            iterations,
        })
    }
}

/// Solves `problem` to relative tolerance `tol`.
pub fn solve(problem: &SdpProblem, tol: f64) -> Result<SdpSolution> {
    solve_with(problem, SolverOptions::with_tol(tol))
}

pub fn solve_with(problem: &SdpProblem, opts: SolverOptions) -> Result<SdpSolution> {
    if !(opts.tol > 0.0) {
        return Err(Error::validation(format!(
            "solver tolerance {} must be positive",
            opts.tol
        )));
    }
    Solver::new(problem, opts)?.solve()
}

/// Residual dual infeasibility above this cannot be repaired.
pub const REPAIR_TOLERANCE: f64 = 1e-3;

/// A lower bound on the optimal value that holds regardless of how
/// accurately the primal was solved.
///
/// The dual iterate is first shifted by a least-squares correction so that it
/// satisfies the dual equality constraints, then clipped to the PSD cone. Any
/// residual left after clipping is charged against the declared variable
/// bounds (`|r_i| * bound_i`); a residual on an unbounded variable makes the
/// certificate invalid.
pub fn certified_lower_bound(problem: &SdpProblem, sol: &SdpSolution) -> Result<f64> {
    let n = problem.num_vars;
    if sol.dual_blocks.len() != problem.blocks.len() || sol.eq_multipliers.len() != problem.equalities.len() {
        return Err(Error::CertificateInvalid(
            "solution carries no matching dual iterate".into(),
        ));
    }
    let blocks: Vec<BlockData> = problem.blocks.iter().map(BlockData::new).collect();
    let lambda = DVector::from_vec(sol.eq_multipliers.clone());
    let mut e = DMatrix::zeros(problem.equalities.len(), n);
    for (row, eq) in problem.equalities.iter().enumerate() {
        for &(var, v) in &eq.coeffs {
            e[(row, var)] += v;
        }
    }
    let c = DVector::from_vec(problem.objective.clone());
    let residual = |y: &[DMatrix<f64>]| -> DVector<f64> {
        let mut out = vec![0.0; n];
        for (b, yk) in blocks.iter().zip(y) {
            b.adjoint_into(yk, &mut out);
        }
        &c - DVector::from_vec(out) - e.transpose() * &lambda
    };

    let mut y: Vec<DMatrix<f64>> = sol.dual_blocks.iter().map(symmetrize).collect();
    let r0 = residual(&y);
    if !r0.iter().all(|v| v.is_finite()) || r0.amax() > REPAIR_TOLERANCE * (1.0 + c.amax()) {
        return Err(Error::CertificateInvalid(format!(
            "dual residual {:.3e} exceeds repair tolerance",
            r0.amax()
        )));
    }

    // least-squares repair: Y += sum z_i A_i with Gram(A) z = r0
    let mut gram = DMatrix::<f64>::zeros(n, n);
    for b in &blocks {
        let mut by_pos: std::collections::BTreeMap<(usize, usize), Vec<(usize, f64)>> = Default::default();
        for (var, entries) in &b.vars {
            for &(r, col, v) in entries {
                by_pos.entry((r, col)).or_default().push((*var, v));
            }
        }
        for list in by_pos.values() {
            for &(i, a) in list {
                for &(j, bval) in list {
                    gram[(i, j)] += a * bval;
                }
            }
        }
    }
    let scale = gram.diagonal().amax().max(1.0);
    for i in 0..n {
        gram[(i, i)] += 1e-14 * scale;
    }
    if let Some(ch) = gram.cholesky() {
        let z = ch.solve(&r0);
        for (b, yk) in blocks.iter().zip(y.iter_mut()) {
            for (var, entries) in &b.vars {
                for &(r, col, v) in entries {
                    yk[(r, col)] += z[*var] * v;
                }
            }
        }
    }

    // clip to the PSD cone
    for yk in y.iter_mut() {
        let eig = symmetrize(yk).symmetric_eigen();
        let clipped = eig.eigenvalues.map(|l| l.max(0.0));
        *yk = symmetrize(&(&eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose()));
    }

    let r = residual(&y);
    let mut penalty = 0.0;
    for (i, ri) in r.iter().enumerate() {
        match problem.bounds[i] {
            Some(bound) => penalty += ri.abs() * bound,
            None if ri.abs() > 1e-9 * (1.0 + c[i].abs()) => {
                return Err(Error::CertificateInvalid(format!(
                    "residual {ri:.3e} on unbounded variable {i}"
                )))
            }
            None => {}
        }
    }
    let g: f64 = problem
        .equalities
        .iter()
        .zip(lambda.iter())
        .map(|(eq, l)| eq.rhs * l)
        .sum();
    let dual = -blocks
        .iter()
        .zip(&y)
        .map(|(b, yk)| frob_inner(&b.constant, yk))
        .sum::<f64>()
        + g;
    Ok(dual - penalty)
}
