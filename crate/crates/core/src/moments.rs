//! Noncommutative operator words and moment/localizing matrix schemas.
//!
//! Generators are Alice's `A0, A1` and Bob's `B0..B3`. All generators are
//! Hermitian involutions (`O^2 = 1`) and Alice's letters commute with Bob's,
//! so every word reduces to an (Alice word, Bob word) pair without repeated
//! adjacent letters. Moment matrices are kept real symmetric: a word and its
//! adjoint (both sides reversed) share one moment variable.

use nalgebra::DMatrix;
use std::collections::HashMap;
use std::fmt;

use crate::bell::{check_theta, CorrelatorForm};
use crate::error::{Error, Result};
use crate::quantum::{ideal_measurements, target_state, xz_observable, DensityMatrix, C2, C4};
use crate::sdp::SdpBlock;

/// Default operator lists: the 37-operator moment matrix and the two
/// 16-operator localizing matrices.
pub const DEFAULT_MANIFEST: &str = include_str!("../data/operators.manifest");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Letter {
    A(u8),
    B(u8),
}

impl Letter {
    pub fn parse(s: &str) -> Result<Letter> {
        let bad = || Error::Parse(format!("unknown operator letter {s:?}"));
        let (party, idx) = s.split_at_checked(1).ok_or_else(bad)?;
        let idx: u8 = idx.parse().map_err(|_| bad())?;
        match party {
            "A" if idx < 2 => Ok(Letter::A(idx)),
            "B" if idx < 4 => Ok(Letter::B(idx)),
            _ => Err(bad()),
        }
    }
}

/// A reduced word: Alice's letters followed by Bob's, no equal neighbours.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct OperatorWord {
    alice: Vec<u8>,
    bob: Vec<u8>,
}

fn push_reduced(side: &mut Vec<u8>, letter: u8) {
    if side.last() == Some(&letter) {
        side.pop();
    } else {
        side.push(letter);
    }
}

impl OperatorWord {
    pub fn identity() -> Self {
        Self::default()
    }

    /// Reduces a raw generator sequence (no canonical choice between a word and its adjoint).
    pub fn reduce(letters: &[Letter]) -> Self {
        let mut w = Self::default();
        for l in letters {
            match *l {
                Letter::A(i) => push_reduced(&mut w.alice, i),
                Letter::B(i) => push_reduced(&mut w.bob, i),
            }
        }
        w
    }

    /// Parses a space-separated word such as `"A0 A1 B2"`; `"1"` is the identity.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "1" {
            return Ok(Self::identity());
        }
        let letters = s.split_whitespace().map(Letter::parse).collect::<Result<Vec<_>>>()?;
        if letters.is_empty() {
            return Err(Error::Parse("empty operator word".into()));
        }
        Ok(Self::reduce(&letters))
    }

    pub fn is_identity(&self) -> bool {
        self.alice.is_empty() && self.bob.is_empty()
    }

    pub fn alice(&self) -> &[u8] {
        &self.alice
    }

    pub fn bob(&self) -> &[u8] {
        &self.bob
    }

    pub fn letters(&self) -> impl Iterator<Item = Letter> + '_ {
        self.alice
            .iter()
            .map(|&i| Letter::A(i))
            .chain(self.bob.iter().map(|&i| Letter::B(i)))
    }

    pub fn adjoint(&self) -> Self {
        Self {
            alice: self.alice.iter().rev().copied().collect(),
            bob: self.bob.iter().rev().copied().collect(),
        }
    }

    pub fn mul(&self, rhs: &OperatorWord) -> Self {
        let mut w = self.clone();
        for &l in &rhs.alice {
            push_reduced(&mut w.alice, l);
        }
        for &l in &rhs.bob {
            push_reduced(&mut w.bob, l);
        }
        w
    }

    /// Representative shared by the word and its adjoint.
    pub fn canonical(&self) -> Self {
        let adj = self.adjoint();
        if adj < *self {
            adj
        } else {
            self.clone()
        }
    }
}

impl fmt::Display for OperatorWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_identity() {
            return f.write_str("1");
        }
        let parts: Vec<String> = self
            .letters()
            .map(|l| match l {
                Letter::A(i) => format!("A{i}"),
                Letter::B(i) => format!("B{i}"),
            })
            .collect();
        f.write_str(&parts.join(" "))
    }
}

/// Reduce a raw sequence and pick the canonical representative.
pub fn canonicalize(letters: &[Letter]) -> OperatorWord {
    OperatorWord::reduce(letters).canonical()
}

/// Polynomial weight of a localizing matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LocalizingTag {
    /// `B2 (B0 + B1)`
    PolarZ,
    /// `B3 (B0 - B1)`
    PolarX,
}

impl LocalizingTag {
    pub const ALL: [LocalizingTag; 2] = [LocalizingTag::PolarZ, LocalizingTag::PolarX];

    pub fn label(self) -> &'static str {
        match self {
            LocalizingTag::PolarZ => "B2(B0+B1)",
            LocalizingTag::PolarX => "B3(B0-B1)",
        }
    }

    fn from_label(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.label() == s)
            .ok_or_else(|| Error::Parse(format!("unknown localizing polynomial {s:?}")))
    }

    /// Terms `(coefficient, word)` of the (non-Hermitian) polynomial.
    pub fn polynomial(self) -> Vec<(f64, OperatorWord)> {
        let w = |b: u8, c: u8| OperatorWord::reduce(&[Letter::B(b), Letter::B(c)]);
        match self {
            LocalizingTag::PolarZ => vec![(1.0, w(2, 0)), (1.0, w(2, 1))],
            LocalizingTag::PolarX => vec![(1.0, w(3, 0)), (-1.0, w(3, 1))],
        }
    }
}

/// Operator lists defining one moment matrix and any number of localizing matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorManifest {
    pub version: u32,
    pub moment: Vec<OperatorWord>,
    pub localizing: Vec<(LocalizingTag, Vec<OperatorWord>)>,
}

impl OperatorManifest {
    pub fn default_lists() -> Self {
        Self::parse(DEFAULT_MANIFEST).expect("shipped manifest parses")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut version = None;
        let mut moment: Option<Vec<OperatorWord>> = None;
        let mut localizing: Vec<(LocalizingTag, Vec<OperatorWord>)> = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(v) = line.strip_prefix("schema-version ") {
                version = Some(
                    v.trim()
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad version {v:?}")))?,
                );
            } else if line == "[moment]" {
                if moment.is_some() {
                    return Err(Error::Parse("duplicate [moment] section".into()));
                }
                moment = Some(Vec::new());
            } else if let Some(tag) = line.strip_prefix("[localizing ").and_then(|r| r.strip_suffix(']')) {
                localizing.push((LocalizingTag::from_label(tag)?, Vec::new()));
            } else {
                let word = OperatorWord::parse(line)?;
                // the most recently opened section receives the word
                let target = match localizing.last_mut() {
                    Some((_, list)) => list,
                    None => moment
                        .as_mut()
                        .ok_or_else(|| Error::Parse(format!("operator {line:?} outside a section")))?,
                };
                target.push(word);
            }
        }
        let version = version.ok_or_else(|| Error::Parse("manifest lacks schema-version".into()))?;
        let moment = moment.ok_or_else(|| Error::Parse("manifest lacks [moment] section".into()))?;
        if moment.first().map(|w| w.is_identity()) != Some(true) {
            return Err(Error::Parse("moment operator list must start with 1".into()));
        }
        Ok(Self {
            version,
            moment,
            localizing,
        })
    }

    pub fn render(&self) -> String {
        let mut out = format!("# operator manifest\nschema-version {}\n\n[moment]\n", self.version);
        for w in &self.moment {
            out.push_str(&format!("{w}\n"));
        }
        for (tag, list) in &self.localizing {
            out.push_str(&format!("\n[localizing {}]\n", tag.label()));
            for w in list {
                out.push_str(&format!("{w}\n"));
            }
        }
        out
    }
}

/// Affine expression `constant + sum coeff * moment[var]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearExpr {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl LinearExpr {
    fn add(&mut self, var: Option<usize>, coeff: f64) {
        match var {
            None => self.constant += coeff,
            Some(v) => match self.terms.iter_mut().find(|(u, _)| *u == v) {
                Some(t) => t.1 += coeff,
                None => self.terms.push((v, coeff)),
            },
        }
    }

    fn normalize(mut self) -> Self {
        self.terms.retain(|(_, c)| *c != 0.0);
        self.terms.sort_by_key(|(v, _)| *v);
        self
    }

    pub fn evaluate(&self, moments: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|(v, c)| c * moments[*v]).sum::<f64>()
    }

    pub fn variables(&self) -> impl Iterator<Item = usize> + '_ {
        self.terms.iter().map(|(v, _)| *v)
    }
}

/// Canonical word -> moment variable id, shared by all schemas of a system.
#[derive(Debug, Clone, Default)]
pub struct MomentTable {
    words: Vec<OperatorWord>,
    index: HashMap<OperatorWord, usize>,
}

impl MomentTable {
    /// Variable for a (not necessarily canonical) word; `None` for the identity.
    pub fn intern(&mut self, word: &OperatorWord) -> Option<usize> {
        if word.is_identity() {
            return None;
        }
        let key = word.canonical();
        if let Some(&id) = self.index.get(&key) {
            return Some(id);
        }
        let id = self.words.len();
        self.words.push(key.clone());
        self.index.insert(key, id);
        Some(id)
    }

    pub fn lookup(&self, word: &OperatorWord) -> Option<usize> {
        self.index.get(&word.canonical()).copied()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[OperatorWord] {
        &self.words
    }
}

/// Symbolic square matrix whose entries are affine in the moment variables.
pub trait MatrixSchema {
    fn operators(&self) -> &[OperatorWord];
    fn entry(&self, i: usize, j: usize) -> &LinearExpr;

    fn dim(&self) -> usize {
        self.operators().len()
    }

    fn evaluate(&self, moments: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.entry(i, j).evaluate(moments))
    }
}

/// `Gamma_ij = <O_i^dagger O_j>`.
#[derive(Debug, Clone)]
pub struct MomentSchema {
    operators: Vec<OperatorWord>,
    entries: Vec<LinearExpr>,
}

impl MatrixSchema for MomentSchema {
    fn operators(&self) -> &[OperatorWord] {
        &self.operators
    }

    fn entry(&self, i: usize, j: usize) -> &LinearExpr {
        &self.entries[i * self.operators.len() + j]
    }
}

pub fn build_moment_schema(operators: &[OperatorWord], table: &mut MomentTable) -> MomentSchema {
    let d = operators.len();
    let mut entries = Vec::with_capacity(d * d);
    for oi in operators {
        let oi_adj = oi.adjoint();
        for oj in operators {
            let mut e = LinearExpr::default();
            e.add(table.intern(&oi_adj.mul(oj)), 1.0);
            entries.push(e.normalize());
        }
    }
    MomentSchema {
        operators: operators.to_vec(),
        entries,
    }
}

/// `L_ij = <O_i^dagger (B + B^dagger)/2 O_j>` for the tagged polynomial `B`.
///
/// `B` is a product of a polar unitary with its positive part and is
/// therefore Hermitian, so `<O_i^dagger B O_j> = <O_j^dagger B O_i>` as well;
/// those identities are kept as linear constraints on the moments.
#[derive(Debug, Clone)]
pub struct LocalizingSchema {
    tag: LocalizingTag,
    operators: Vec<OperatorWord>,
    entries: Vec<LinearExpr>,
    constraints: Vec<LinearExpr>,
}

impl LocalizingSchema {
    pub fn tag(&self) -> LocalizingTag {
        self.tag
    }

    /// Expressions that vanish when `B` is Hermitian.
    pub fn constraints(&self) -> &[LinearExpr] {
        &self.constraints
    }
}

impl MatrixSchema for LocalizingSchema {
    fn operators(&self) -> &[OperatorWord] {
        &self.operators
    }

    fn entry(&self, i: usize, j: usize) -> &LinearExpr {
        &self.entries[i * self.operators.len() + j]
    }
}

pub fn build_localizing_schema(
    tag: LocalizingTag,
    operators: &[OperatorWord],
    table: &mut MomentTable,
) -> LocalizingSchema {
    let poly = tag.polynomial();
    let d = operators.len();
    let mut entries = Vec::with_capacity(d * d);
    let mut raw = Vec::with_capacity(d * d);
    for oi in operators {
        let oi_adj = oi.adjoint();
        for oj in operators {
            let mut e = LinearExpr::default();
            let mut r = LinearExpr::default();
            for (coeff, w) in &poly {
                r.add(table.intern(&oi_adj.mul(w).mul(oj)), *coeff);
                for half in [w.clone(), w.adjoint()] {
                    e.add(table.intern(&oi_adj.mul(&half).mul(oj)), 0.5 * coeff);
                }
            }
            entries.push(e.normalize());
            raw.push(r);
        }
    }
    let mut constraints: Vec<LinearExpr> = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            let mut c = raw[i * d + j].clone();
            for &(v, coeff) in &raw[j * d + i].terms {
                c.add(Some(v), -coeff);
            }
            c.constant -= raw[j * d + i].constant;
            let c = c.normalize();
            if !c.terms.is_empty() && !constraints.contains(&c) {
                constraints.push(c);
            }
        }
    }
    LocalizingSchema {
        tag,
        operators: operators.to_vec(),
        entries,
        constraints,
    }
}

/// Moment matrix plus localizing matrices over one shared variable table.
#[derive(Debug, Clone)]
pub struct MomentSystem {
    pub table: MomentTable,
    pub gamma: MomentSchema,
    pub localizing: Vec<LocalizingSchema>,
}

impl MomentSystem {
    pub fn from_manifest(manifest: &OperatorManifest) -> Self {
        let mut table = MomentTable::default();
        let gamma = build_moment_schema(&manifest.moment, &mut table);
        let localizing = manifest
            .localizing
            .iter()
            .map(|(tag, ops)| build_localizing_schema(*tag, ops, &mut table))
            .collect();
        Self {
            table,
            gamma,
            localizing,
        }
    }

    pub fn standard() -> Self {
        Self::from_manifest(&OperatorManifest::default_lists())
    }

    /// Variable id of a word, failing if the system never references it.
    pub fn variable(&self, word: &OperatorWord) -> Result<usize> {
        self.table
            .lookup(word)
            .ok_or_else(|| Error::Schema(format!("moment <{word}> is not part of the schema")))
    }

    /// Hermiticity constraints of all localizing matrices.
    pub fn localizing_constraints(&self) -> Vec<LinearExpr> {
        let mut out: Vec<LinearExpr> = Vec::new();
        for c in self.localizing.iter().flat_map(|l| l.constraints()) {
            if !out.contains(c) {
                out.push(c.clone());
            }
        }
        out
    }

    /// Variables referenced by the moment matrix alone.
    pub fn gamma_variables(&self) -> Vec<bool> {
        let mut used = vec![false; self.table.len()];
        for e in &self.gamma.entries {
            for v in e.variables() {
                used[v] = true;
            }
        }
        used
    }
}

/// The eight observable moments; the unit moment is the ninth known slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KnownMoment {
    MarginalA(usize),
    MarginalB(usize),
    Correlator(usize, usize),
}

impl KnownMoment {
    pub const ALL: [KnownMoment; 8] = [
        KnownMoment::MarginalA(0),
        KnownMoment::MarginalA(1),
        KnownMoment::MarginalB(0),
        KnownMoment::MarginalB(1),
        KnownMoment::Correlator(0, 0),
        KnownMoment::Correlator(0, 1),
        KnownMoment::Correlator(1, 0),
        KnownMoment::Correlator(1, 1),
    ];

    pub fn word(self) -> OperatorWord {
        match self {
            KnownMoment::MarginalA(x) => OperatorWord::reduce(&[Letter::A(x as u8)]),
            KnownMoment::MarginalB(y) => OperatorWord::reduce(&[Letter::B(y as u8)]),
            KnownMoment::Correlator(x, y) => OperatorWord::reduce(&[Letter::A(x as u8), Letter::B(y as u8)]),
        }
    }

    pub fn value(self, c: &CorrelatorForm) -> f64 {
        match self {
            KnownMoment::MarginalA(x) => c.ma[x],
            KnownMoment::MarginalB(y) => c.mb[y],
            KnownMoment::Correlator(x, y) => c.corr[x][y],
        }
    }
}

/// Moment variables pinned to observed values; `None` entries stay free.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundMoments {
    pub values: Vec<Option<f64>>,
}

impl BoundMoments {
    pub fn all_free(n: usize) -> Self {
        Self { values: vec![None; n] }
    }

    /// Number of pinned slots, counting the unit moment.
    pub fn num_bound(&self) -> usize {
        1 + self.values.iter().filter(|v| v.is_some()).count()
    }

    /// Full assignment with free moments replaced by `fill`.
    pub fn with_free(&self, fill: f64) -> Vec<f64> {
        self.values.iter().map(|v| v.unwrap_or(fill)).collect()
    }
}

/// Pins `<A_x>`, `<B_y>` (y = 0, 1) and `<A_x B_y>` to the given correlators.
pub fn bind_known(system: &MomentSystem, c: &CorrelatorForm) -> Result<BoundMoments> {
    let mut bound = BoundMoments::all_free(system.table.len());
    for k in KnownMoment::ALL {
        let var = system.variable(&k.word())?;
        bound.values[var] = Some(k.value(c));
    }
    Ok(bound)
}

/// Affine image `constant + sum coeff * x[var]` of SDP variables.
pub type Affine = (f64, Vec<(usize, f64)>);

/// SDP blocks built from schemas, with bound moments substituted by
/// constants and linear constraints eliminated.
#[derive(Debug, Clone)]
pub struct SdpAssembly {
    /// Table variable -> affine function of the SDP variables (None when unused).
    pub image: Vec<Option<Affine>>,
    /// SDP variable -> table variable it stands for. Indices from
    /// `num_vars()` on are moments that no block constrains.
    pub table_var: Vec<usize>,
    pub blocks: Vec<SdpBlock>,
    num_vars: usize,
}

impl SdpAssembly {
    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    /// Rewrites a moment expression in terms of the SDP variables.
    pub fn lower(&self, expr: &LinearExpr) -> Result<Affine> {
        let mut constant = expr.constant;
        let mut terms: Vec<(usize, f64)> = Vec::new();
        for &(v, c) in &expr.terms {
            let (k, t) = self.image[v]
                .as_ref()
                .ok_or_else(|| Error::Schema(format!("moment variable {v} is not constrained by any block")))?;
            constant += c * k;
            for &(s, a) in t {
                match terms.iter_mut().find(|(u, _)| *u == s) {
                    Some(e) => e.1 += c * a,
                    None => terms.push((s, c * a)),
                }
            }
        }
        terms.retain(|(_, c)| c.abs() > PIVOT_TOL);
        terms.sort_by_key(|(s, _)| *s);
        if let Some((s, _)) = terms.iter().find(|(s, _)| *s >= self.num_vars) {
            return Err(Error::Schema(format!(
                "expression depends on moment <{}> that no block constrains",
                self.table_var[*s]
            )));
        }
        Ok((constant, terms))
    }

    /// Full moment vector from an SDP solution (moments outside the relaxation are 0).
    pub fn moments(&self, x: &[f64]) -> Vec<f64> {
        self.image
            .iter()
            .map(|img| match img {
                Some((k, t)) => {
                    k + t
                        .iter()
                        .map(|(s, a)| a * x.get(*s).copied().unwrap_or(0.0))
                        .sum::<f64>()
                }
                None => 0.0,
            })
            .collect()
    }
}

const PIVOT_TOL: f64 = 1e-12;

/// Reduced row echelon form of `rows` (each `coeffs | rhs`) over `ncols` columns.
/// Returns `(pivot column, row)` pairs, or an error if the system is inconsistent.
fn row_reduce(mut rows: Vec<Vec<f64>>, ncols: usize) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut pivots = Vec::new();
    let mut r = 0;
    for col in 0..ncols {
        if r == rows.len() {
            break;
        }
        let best = (r..rows.len())
            .max_by(|&a, &b| rows[a][col].abs().total_cmp(&rows[b][col].abs()).then(b.cmp(&a)))
            .expect("nonempty range");
        if rows[best][col].abs() <= PIVOT_TOL {
            continue;
        }
        rows.swap(r, best);
        let p = rows[r][col];
        for v in rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = rows[r].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i != r && row[col] != 0.0 {
                let f = row[col];
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[col] = 0.0;
            }
        }
        pivots.push(col);
        r += 1;
    }
    for row in &rows[r..] {
        if row[ncols].abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "moment constraints are inconsistent with the bound values (residual {:.3e})",
                row[ncols]
            )));
        }
    }
    Ok(pivots.into_iter().zip(rows).collect())
}

/// Builds the PSD blocks for `schemas`. Bound moments become constants; each
/// expression in `constraints` is forced to zero by eliminating variables.
pub fn assemble(
    schemas: &[&dyn MatrixSchema],
    bound: &BoundMoments,
    constraints: &[LinearExpr],
) -> Result<SdpAssembly> {
    let n_table = bound.values.len();
    // free moments in order of first appearance
    let mut column = vec![None; n_table];
    let mut free = Vec::new();
    let mut used = vec![false; n_table];
    let mut note = |v: usize, column: &mut Vec<Option<usize>>, free: &mut Vec<usize>| {
        used[v] = true;
        if bound.values[v].is_none() && column[v].is_none() {
            column[v] = Some(free.len());
            free.push(v);
        }
    };
    for schema in schemas {
        let d = schema.dim();
        for i in 0..d {
            for j in i..d {
                for v in schema.entry(i, j).variables() {
                    note(v, &mut column, &mut free);
                }
            }
        }
    }
    for c in constraints {
        for v in c.variables() {
            if !used[v] {
                return Err(Error::Schema(format!(
                    "constraint references moment {v} outside the blocks"
                )));
            }
        }
    }

    let ncols = free.len();
    let rows: Vec<Vec<f64>> = constraints
        .iter()
        .map(|c| {
            let mut row = vec![0.0; ncols + 1];
            row[ncols] = -c.constant;
            for &(v, a) in &c.terms {
                match (bound.values[v], column[v]) {
                    (Some(val), _) => row[ncols] -= a * val,
                    (None, Some(col)) => row[col] += a,
                    (None, None) => unreachable!("free moments were registered"),
                }
            }
            row
        })
        .collect();
    let reduced = row_reduce(rows, ncols)?;
    let mut is_pivot = vec![false; ncols];
    for (col, _) in &reduced {
        is_pivot[*col] = true;
    }
    let mut sdp_of_col = vec![None; ncols];
    let mut table_var = Vec::new();
    for col in 0..ncols {
        if !is_pivot[col] {
            sdp_of_col[col] = Some(table_var.len());
            table_var.push(free[col]);
        }
    }

    let mut image: Vec<Option<Affine>> = vec![None; n_table];
    for v in 0..n_table {
        if let Some(val) = bound.values[v] {
            if used[v] {
                image[v] = Some((val, Vec::new()));
            }
        }
    }
    for col in 0..ncols {
        if let Some(s) = sdp_of_col[col] {
            image[free[col]] = Some((0.0, vec![(s, 1.0)]));
        }
    }
    for (col, row) in &reduced {
        let terms = (0..ncols)
            .filter(|&k| k != *col && row[k].abs() > PIVOT_TOL)
            .map(|k| (sdp_of_col[k].expect("non-pivot column"), -row[k]))
            .collect();
        image[free[*col]] = Some((row[ncols], terms));
    }

    let n_all = table_var.len();
    let mut asm = SdpAssembly {
        image,
        table_var,
        blocks: Vec::new(),
        num_vars: n_all,
    };
    let mut lowered = Vec::with_capacity(schemas.len());
    let mut in_block = vec![false; n_all];
    for schema in schemas {
        let d = schema.dim();
        let mut entries = Vec::with_capacity(d * (d + 1) / 2);
        for i in 0..d {
            for j in i..d {
                let (constant, terms) = asm.lower(schema.entry(i, j))?;
                for &(s, _) in &terms {
                    in_block[s] = true;
                }
                entries.push((i, j, constant, terms));
            }
        }
        lowered.push((d, entries));
    }

    // constrained variables first, then the ones whose coefficients cancelled
    let order: Vec<usize> = (0..n_all)
        .filter(|&s| in_block[s])
        .chain((0..n_all).filter(|&s| !in_block[s]))
        .collect();
    let mut new_index = vec![0; n_all];
    for (new, &old) in order.iter().enumerate() {
        new_index[old] = new;
    }
    asm.table_var = order.iter().map(|&s| asm.table_var[s]).collect();
    asm.num_vars = in_block.iter().filter(|u| **u).count();
    for (_, terms) in asm.image.iter_mut().flatten() {
        for t in terms.iter_mut() {
            t.0 = new_index[t.0];
        }
        terms.sort_by_key(|(s, _)| *s);
    }
    for (d, entries) in lowered {
        let mut block = SdpBlock::new(d);
        for (i, j, constant, terms) in entries {
            block.add_constant(i, j, constant);
            for (s, a) in terms {
                block.add_term(new_index[s], i, j, a);
            }
        }
        asm.blocks.push(block);
    }
    Ok(asm)
}

/// Concrete qubit operators for the six generators acting on a state.
#[derive(Debug, Clone)]
pub struct OperatorModel {
    pub rho: DensityMatrix,
    pub alice: [C2; 2],
    pub bob: [C2; 4],
}

impl OperatorModel {
    /// Ideal tilted-CHSH measurements with `B2 = Z`, `B3 = X` (the exact polar
    /// unitaries of `B0 + B1` and `B0 - B1`) acting on `rho`.
    pub fn ideal(theta: f64, rho: DensityMatrix) -> Result<Self> {
        let m = ideal_measurements(theta)?;
        Ok(Self {
            rho,
            alice: [m.alice[0].observable(), m.alice[1].observable()],
            bob: [
                m.bob[0].observable(),
                m.bob[1].observable(),
                xz_observable(0.0),
                xz_observable(std::f64::consts::FRAC_PI_2),
            ],
        })
    }

    pub fn word_matrix(&self, w: &OperatorWord) -> C4 {
        let mut a = C2::identity();
        for &l in w.alice() {
            a *= self.alice[l as usize];
        }
        let mut b = C2::identity();
        for &l in w.bob() {
            b *= self.bob[l as usize];
        }
        a.kronecker(&b)
    }

    /// `Re <w>`.
    pub fn expectation(&self, w: &OperatorWord) -> f64 {
        self.rho.expectation(&self.word_matrix(w))
    }

    pub fn moment_vector(&self, table: &MomentTable) -> Vec<f64> {
        table.words().iter().map(|w| self.expectation(w)).collect()
    }
}

/// Every moment variable evaluated on the ideal state and measurements at `theta`.
pub fn quantum_moment_vector(table: &MomentTable, theta: f64) -> Result<Vec<f64>> {
    check_theta(theta)?;
    let model = OperatorModel::ideal(theta, target_state(theta)?.density())?;
    Ok(model.moment_vector(table))
}
