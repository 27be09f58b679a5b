//! CGLMP Bell parameter `S_d`, its operator and the local-realist oracle.
//!
//! `S_d` is a fixed linear functional of the joint outcome table
//! `p[a][b][v][w]`. The functional is built once as a list of
//! [`Term`]s; both [`s_from_table`] and [`bell_operator`] are driven by it.

use std::io::Write;
use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::modes::{analyser_state, mode_map, AnalyserSetting, DimensionSpec};
use crate::numerics::{eig_hermitian, kron_vec, ComplexMatrix, EigenDecomposition, C64};
use crate::output::sig12;
use crate::state::DensityMatrix;

/// Largest `d` for which the operator is built.
pub const MAX_OPERATOR_DIM: usize = 14;
/// Local-realist bound on `S_d`.
pub const LHV_BOUND: f64 = 2.0;
/// Per-setting normalization slack before a table is flagged as renormalized.
pub const TABLE_NORM_TOL: f64 = 1e-9;
/// Smallest projected weight for which a subspace Bell value is defined.
pub const MIN_SUBSPACE_WEIGHT: f64 = 1e-12;

/// Joint outcome probabilities `P(A_a = v, B_b = w)`, normalized per `(a, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityTable {
    d: usize,
    p: Vec<f64>,
    renormalized: bool,
}

#[inline]
fn cell(d: usize, a: usize, b: usize, v: usize, w: usize) -> usize {
    ((a * 2 + b) * d + v) * d + w
}

impl ProbabilityTable {
    /// Builds a table from raw nonnegative weights in `(a, b, v, w)`
    /// row-major order. Each `(a, b)` block is divided by its sum, the
    /// same way coincidence counts are divided by `C_T(a, b)`.
    pub fn new(d: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != 4 * d * d {
            return Err(Error::DimensionMismatch {
                expected: 4 * d * d,
                actual: values.len(),
            });
        }
        if values.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidTable(
                "entries must be finite and nonnegative".into(),
            ));
        }
        let mut p = values;
        let mut renormalized = false;
        for block in p.chunks_mut(d * d) {
            let total: f64 = block.iter().sum();
            if total <= 0.0 {
                return Err(Error::InvalidTable(
                    "a setting pair has zero total weight".into(),
                ));
            }
            if (total - 1.0).abs() > TABLE_NORM_TOL {
                renormalized = true;
            }
            block.iter_mut().for_each(|x| *x /= total);
        }
        Ok(Self { d, p, renormalized })
    }

    pub fn uniform(d: usize) -> Self {
        Self {
            d,
            p: vec![1.0 / (d * d) as f64; 4 * d * d],
            renormalized: false,
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, v: usize, w: usize) -> f64 {
        self.p[cell(self.d, a, b, v, w)]
    }

    /// The `d x d` block for one setting pair, indexed `[v * d + w]`.
    pub fn block(&self, a: usize, b: usize) -> &[f64] {
        let n = self.d * self.d;
        let start = (a * 2 + b) * n;
        &self.p[start..start + n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    /// Whether the input blocks did not already sum to one.
    pub fn was_renormalized(&self) -> bool {
        self.renormalized
    }

    /// `P(A_a = B_b + k)`: Alice's outcome exceeds Bob's by `k` mod `d`.
    pub fn alice_ahead(&self, a: usize, b: usize, k: i64) -> f64 {
        let d = self.d;
        (0..d).map(|j| self.get(a, b, shift(j, k, d), j)).sum()
    }

    /// `P(B_b = A_a + k)`: Bob's outcome exceeds Alice's by `k` mod `d`.
    pub fn bob_ahead(&self, a: usize, b: usize, k: i64) -> f64 {
        let d = self.d;
        (0..d).map(|j| self.get(a, b, j, shift(j, k, d))).sum()
    }
}

#[inline]
fn shift(j: usize, k: i64, d: usize) -> usize {
    (j as i64 + k).rem_euclid(d as i64) as usize
}

/// Which party's outcome is offset in a relation term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    /// `A_a = B_b + k`
    AliceAhead,
    /// `B_b = A_a + k`
    BobAhead,
}

/// One signed probability term of `S_d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub coefficient: f64,
    pub a: usize,
    pub b: usize,
    pub relation: Relation,
    pub k: i64,
}

/// All terms of the CGLMP functional for dimension `d`.
pub fn cglmp_terms(d: usize) -> Vec<Term> {
    use Relation::*;
    let mut terms = Vec::with_capacity(8 * (d / 2));
    for k in 0..(d / 2) as i64 {
        let c = 1.0 - 2.0 * k as f64 / (d as f64 - 1.0);
        let t = |sign: f64, a, b, relation, k| Term {
            coefficient: sign * c,
            a,
            b,
            relation,
            k,
        };
        terms.extend([
            t(1.0, 0, 0, AliceAhead, k),
            t(1.0, 1, 0, BobAhead, k + 1),
            t(1.0, 1, 1, AliceAhead, k),
            t(1.0, 0, 1, BobAhead, k),
            t(-1.0, 0, 0, AliceAhead, -k - 1),
            t(-1.0, 1, 0, BobAhead, -k),
            t(-1.0, 1, 1, AliceAhead, -k - 1),
            t(-1.0, 0, 1, BobAhead, -k - 1),
        ]);
    }
    terms
}

/// Weight of every table cell in `S_d`, so `S_d = sum W[c] p[c]`.
pub fn s_weights(d: usize) -> Vec<f64> {
    let mut w = vec![0.0; 4 * d * d];
    for t in cglmp_terms(d) {
        for j in 0..d {
            let (v, bw) = match t.relation {
                Relation::AliceAhead => (shift(j, t.k, d), j),
                Relation::BobAhead => (j, shift(j, t.k, d)),
            };
            w[cell(d, t.a, t.b, v, bw)] += t.coefficient;
        }
    }
    w
}

/// A Bell parameter value with an optional standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BellValue {
    pub d: usize,
    pub s: f64,
    pub sigma: Option<f64>,
}

impl BellValue {
    pub fn violates_lhv(&self) -> bool {
        self.s > LHV_BOUND
    }
}

/// Born-rule joint probabilities for all analyser settings.
pub fn probability_table(rho: &DensityMatrix) -> Result<ProbabilityTable> {
    let d = rho.d();
    let spec = DimensionSpec::new(d)?;
    let alice = analyser_vectors(&spec, true)?;
    let bob = analyser_vectors(&spec, false)?;
    let m = rho.matrix();
    let mut p = vec![0.0; 4 * d * d];
    for a in 0..2 {
        for b in 0..2 {
            for v in 0..d {
                for w in 0..d {
                    let x = kron_vec(&alice[a][v], &bob[b][w]);
                    p[cell(d, a, b, v, w)] = m.expectation(&x)?.re.max(0.0);
                }
            }
        }
    }
    ProbabilityTable::new(d, p)
}

fn analyser_vectors(spec: &DimensionSpec, alice: bool) -> Result<Vec<Vec<Vec<C64>>>> {
    let d = spec.d();
    (0..2)
        .map(|s| {
            (0..d)
                .map(|o| {
                    let setting = if alice {
                        AnalyserSetting::alice(s, o)
                    } else {
                        AnalyserSetting::bob(s, o)
                    };
                    analyser_state(spec, &setting)
                })
                .collect()
        })
        .collect()
}

/// `S_d` from a joint probability table.
pub fn s_from_table(t: &ProbabilityTable) -> BellValue {
    let w = s_weights(t.d);
    let s = w.iter().zip(&t.p).map(|(a, b)| a * b).sum();
    BellValue {
        d: t.d,
        s,
        sigma: None,
    }
}

/// `S_d` evaluated term by term from the relation probabilities. Slower
/// than [`s_from_table`]; kept as a readable cross-check.
pub fn s_from_relations(t: &ProbabilityTable) -> f64 {
    cglmp_terms(t.d)
        .iter()
        .map(|term| {
            let p = match term.relation {
                Relation::AliceAhead => t.alice_ahead(term.a, term.b, term.k),
                Relation::BobAhead => t.bob_ahead(term.a, term.b, term.k),
            };
            term.coefficient * p
        })
        .sum()
}

/// The Hermitian operator whose expectation value is `S_d`.
#[derive(Debug, Clone)]
pub struct BellOperator {
    d: usize,
    matrix: ComplexMatrix,
}

/// Entries smaller than this are rounding residue of exact zeros.
const CHOP: f64 = 1e-12;

pub fn bell_operator(d: usize) -> Result<BellOperator> {
    if !(2..=MAX_OPERATOR_DIM).contains(&d) {
        return Err(Error::Size(format!(
            "Bell operator supported for 2 <= d <= {MAX_OPERATOR_DIM}, got {d}"
        )));
    }
    let spec = DimensionSpec::new(d)?;
    let alice = analyser_vectors(&spec, true)?;
    let bob = analyser_vectors(&spec, false)?;
    let weights = s_weights(d);
    let n = d * d;
    let mut m = ComplexMatrix::zeros(n, n);
    for a in 0..2 {
        for b in 0..2 {
            for v in 0..d {
                for w in 0..d {
                    let c = weights[cell(d, a, b, v, w)];
                    if c == 0.0 {
                        continue;
                    }
                    let x = kron_vec(&alice[a][v], &bob[b][w]);
                    for i in 0..n {
                        let xi = x[i] * c;
                        for j in 0..n {
                            m.add_at(i, j, xi * x[j].conj());
                        }
                    }
                }
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            let z = m.get(i, j);
            debug_assert!(z.im.abs() < 1e-9, "imaginary residue {z}");
            let re = if z.re.abs() < CHOP { 0.0 } else { z.re };
            m.set(i, j, C64::new(re, 0.0));
        }
    }
    Ok(BellOperator {
        d,
        matrix: m.hermitian_part(),
    })
}

/// Process-wide memoized [`bell_operator`].
pub fn cached_bell_operator(d: usize) -> Result<&'static BellOperator> {
    static CACHE: [OnceLock<BellOperator>; MAX_OPERATOR_DIM + 1] =
        [const { OnceLock::new() }; MAX_OPERATOR_DIM + 1];
    if !(2..=MAX_OPERATOR_DIM).contains(&d) {
        return Err(Error::Size(format!(
            "Bell operator supported for 2 <= d <= {MAX_OPERATOR_DIM}, got {d}"
        )));
    }
    if let Some(op) = CACHE[d].get() {
        return Ok(op);
    }
    let op = bell_operator(d)?;
    Ok(CACHE[d].get_or_init(|| op))
}

impl BellOperator {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    /// `Tr(rho S_d)`
    pub fn expectation(&self, rho: &DensityMatrix) -> Result<f64> {
        if rho.d() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                actual: rho.d(),
            });
        }
        Ok(rho.matrix().trace_product(&self.matrix)?.re)
    }

    /// `<psi| S_d |psi>` for a normalized vector.
    pub fn expectation_pure(&self, psi: &[C64]) -> Result<f64> {
        Ok(self.matrix.expectation(psi)?.re)
    }

    pub fn spectrum(&self) -> Result<EigenDecomposition> {
        eig_hermitian(&self.matrix)
    }

    /// The real `d x d` block on the correlated states `|j, j>`.
    pub fn correlated_block(&self) -> Vec<Vec<f64>> {
        let d = self.d;
        (0..d)
            .map(|j| {
                (0..d)
                    .map(|k| self.matrix.get(j * d + j, k * d + k).re)
                    .collect()
            })
            .collect()
    }

    /// Dense CSV `(row_index, col_index, re, im)` with 12 significant digits.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "row_index,col_index,re,im")?;
        let n = self.matrix.rows();
        for i in 0..n {
            for j in 0..n {
                let z = self.matrix.get(i, j);
                writeln!(out, "{i},{j},{},{}", sig12(z.re), sig12(z.im))?;
            }
        }
        Ok(())
    }
}

/// Largest eigenvalue of `S_d` and a normalized eigenvector for it.
pub fn max_violation(d: usize) -> Result<(f64, Vec<C64>)> {
    let spec = cached_bell_operator(d)?.spectrum()?;
    Ok((spec.eigenvalues[0], spec.eigenvectors[0].clone()))
}

/// `(1/sqrt d) sum_j |j, j>`
pub fn max_entangled_vector(d: usize) -> Vec<C64> {
    let mut psi = vec![C64::new(0.0, 0.0); d * d];
    let a = 1.0 / (d as f64).sqrt();
    for j in 0..d {
        psi[j * d + j] = C64::new(a, 0.0);
    }
    psi
}

/// `<psi| S_d |psi>` on the maximally entangled state.
pub fn expectation_max_entangled(d: usize) -> Result<f64> {
    cached_bell_operator(d)?.expectation_pure(&max_entangled_vector(d))
}

/// Largest `d` accepted by the deterministic-strategy enumeration.
pub const MAX_LHV_BRUTEFORCE_DIM: usize = 4;

/// `S_d` for every deterministic local strategy, ordered by
/// `(A_0, A_1, B_0, B_1)` in base `d`.
pub fn lhv_strategy_values(d: usize) -> Result<Vec<f64>> {
    if !(2..=MAX_LHV_BRUTEFORCE_DIM).contains(&d) {
        return Err(Error::Size(format!(
            "brute-force enumeration limited to d <= {MAX_LHV_BRUTEFORCE_DIM}; \
             the local-realist bound is {LHV_BOUND} for every d"
        )));
    }
    let weights = s_weights(d);
    let mut out = Vec::with_capacity(d.pow(4));
    for code in 0..d.pow(4) {
        let alice = [code / d.pow(3) % d, code / d.pow(2) % d];
        let bob = [code / d % d, code % d];
        let mut s = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                s += weights[cell(d, a, b, alice[a], bob[b])];
            }
        }
        out.push(s);
    }
    Ok(out)
}

/// Maximum of `S_d` over all deterministic local strategies.
pub fn lhv_bound_bruteforce(d: usize) -> Result<f64> {
    Ok(lhv_strategy_values(d)?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max))
}

/// OAM indices of the `k` central modes inside dimension `d`.
///
/// Uses the dimension-`k` mode set when it is contained in the
/// dimension-`d` set. Otherwise (even `d`, odd `k`) takes the `k` modes of
/// smallest `|l|`, breaking ties toward negative `l`.
pub fn central_modes(d: usize, k: usize) -> Result<Vec<i32>> {
    if k < 2 || k > d {
        return Err(Error::Size(format!(
            "subspace dimension {k} not in 2..={d}"
        )));
    }
    let outer = DimensionSpec::new(d)?;
    let inner = DimensionSpec::new(k)?;
    if inner.ells().iter().all(|&l| outer.contains(l)) {
        return Ok(inner.ells().to_vec());
    }
    let mut ells = outer.ells().to_vec();
    ells.sort_by_key(|&l| (l.abs(), l));
    ells.truncate(k);
    ells.sort_unstable();
    Ok(ells)
}

/// Product-space indices (in dimension `d`) of the `k x k` central block,
/// ordered as the dimension-`k` product basis.
pub fn central_block_indices(d: usize, k: usize) -> Result<Vec<usize>> {
    let map = mode_map(d)?;
    let js: Vec<usize> = central_modes(d, k)?
        .iter()
        .map(|&l| map.signal_j_of_ell(l).expect("central mode in set"))
        .collect();
    let mut idx = Vec::with_capacity(k * k);
    for &ja in &js {
        for &jb in &js {
            // the idler carries -l, whose idler index equals the signal index of l
            idx.push(ja * d + jb);
        }
    }
    Ok(idx)
}

/// `S_k` measured with analysers restricted to the `k` central modes:
/// the state is projected onto that local subspace and renormalized by the
/// surviving weight. Returns `(S_k, weight)`.
pub fn subspace_bell_value(rho: &DensityMatrix, k: usize) -> Result<(f64, f64)> {
    let d = rho.d();
    if k == d {
        return Ok((cached_bell_operator(d)?.expectation(rho)?, 1.0));
    }
    let idx = central_block_indices(d, k)?;
    let block = rho.matrix().select(&idx, &idx);
    let weight = block.trace().re;
    if weight < MIN_SUBSPACE_WEIGHT {
        return Err(Error::UndefinedConstraint { k, weight });
    }
    let op = cached_bell_operator(k)?;
    let s = block.trace_product(op.matrix())?.re / weight;
    Ok((s, weight))
}
