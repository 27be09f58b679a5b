//! Procrustean concentration: local diagonal filters that equalize the
//! mode amplitudes of a non-maximally entangled state, at the cost of
//! discarding some pairs.
//!
//! Filter entries are listed per pair label `l` in ascending order. On the
//! signal arm entry `l` multiplies mode `l`; on the idler arm it multiplies
//! the conjugate mode `-l`. In the analyser `j` basis both arms therefore
//! use the same diagonal ordering.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bell::subspace_bell_value;
use crate::error::{Error, Result};
use crate::modes::DimensionSpec;
use crate::numerics::{eig_hermitian, ComplexMatrix, C64};
use crate::reference::{MEASURED_FILTER_D11, SOURCE_GAMMA};
use crate::spdc::{ReferenceState, StateKind};
use crate::state::{random_separable, DensityMatrix};

/// Success probabilities below this are treated as total loss.
pub const MIN_SUCCESS_PROBABILITY: f64 = 1e-14;
/// Largest dimension accepted by the separability sweep.
pub const MAX_SEPARABILITY_DIM: usize = 6;

/// Per-arm diagonal filters.
///
/// Construction only checks shape and sign so that out-of-range inputs can
/// still be inspected; [`FilterSpec::validate`] and
/// [`completeness_certificate`] enforce `0 <= o <= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    d: usize,
    diag_a: Vec<f64>,
    diag_b: Vec<f64>,
}

impl FilterSpec {
    pub fn new(d: usize, diag_a: Vec<f64>, diag_b: Vec<f64>) -> Result<Self> {
        DimensionSpec::new(d)?;
        for diag in [&diag_a, &diag_b] {
            if diag.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: diag.len(),
                });
            }
            if diag.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::InvalidArgument(
                    "filter entries must be finite and nonnegative".into(),
                ));
            }
        }
        Ok(Self { d, diag_a, diag_b })
    }

    /// The same filter on both arms.
    pub fn symmetric(diag: Vec<f64>) -> Result<Self> {
        Self::new(diag.len(), diag.clone(), diag)
    }

    /// Filter on the signal arm only; the idler passes untouched.
    pub fn single_arm(diag: Vec<f64>) -> Result<Self> {
        let d = diag.len();
        Self::new(d, diag, vec![1.0; d])
    }

    pub fn identity(d: usize) -> Result<Self> {
        Self::symmetric(vec![1.0; d])
    }

    /// The diagonal used in the `d = 11` experiments.
    pub fn measured_preset() -> Self {
        Self::symmetric(MEASURED_FILTER_D11.to_vec()).expect("valid preset")
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn diag_a(&self) -> &[f64] {
        &self.diag_a
    }

    pub fn diag_b(&self) -> &[f64] {
        &self.diag_b
    }

    /// Each arm rescaled so its largest entry is 1.
    pub fn normalized(&self) -> Result<Self> {
        let scale = |v: &[f64]| -> Result<Vec<f64>> {
            let m = v.iter().copied().fold(0.0, f64::max);
            if m <= 0.0 {
                return Err(Error::InvalidArgument("filter is identically zero".into()));
            }
            Ok(v.iter().map(|x| x / m).collect())
        };
        Self::new(self.d, scale(&self.diag_a)?, scale(&self.diag_b)?)
    }

    /// Errors with the first entry exceeding 1.
    pub fn validate(&self) -> Result<()> {
        let spec = DimensionSpec::new(self.d)?;
        for diag in [&self.diag_a, &self.diag_b] {
            for (&ell, &o) in spec.ells().iter().zip(diag) {
                if o > 1.0 {
                    return Err(Error::Completeness { ell, value: o });
                }
            }
        }
        Ok(())
    }

    /// Diagonal of `O_A (x) O_B` in the product basis.
    pub fn product_diagonal(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.d * self.d);
        for &a in &self.diag_a {
            for &b in &self.diag_b {
                out.push(a * b);
            }
        }
        out
    }

    pub fn arm_matrix_a(&self) -> ComplexMatrix {
        ComplexMatrix::from_real_diagonal(&self.diag_a)
    }

    pub fn arm_matrix_b(&self) -> ComplexMatrix {
        ComplexMatrix::from_real_diagonal(&self.diag_b)
    }

    /// `O_1 = O_A (x) O_B`.
    pub fn success_operator(&self) -> ComplexMatrix {
        ComplexMatrix::from_real_diagonal(&self.product_diagonal())
    }
}

/// On-disk filter description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterFile {
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub diag: Vec<f64>,
}

impl FilterFile {
    pub fn to_spec(&self) -> Result<FilterSpec> {
        if self.diag.len() != self.d {
            return Err(Error::InvalidArgument(format!(
                "filter file declares d={} but lists {} entries",
                self.d,
                self.diag.len()
            )));
        }
        FilterSpec::symmetric(self.diag.clone())
    }

    pub fn read(path: &Path) -> Result<FilterSpec> {
        crate::output::read_json::<FilterFile>(path)?.to_spec()
    }
}

/// Filter equalizing the amplitudes of a correlated spectrum:
/// `o(l) = sqrt(c_min / c(l))` on each arm.
pub fn design_filter(spectrum: &ReferenceState) -> Result<FilterSpec> {
    let spec = DimensionSpec::new(spectrum.d())?;
    let mags: Vec<f64> = spectrum.coefficients().iter().map(|c| c.norm()).collect();
    for (&ell, &m) in spec.ells().iter().zip(&mags) {
        if !(m > 0.0) {
            return Err(Error::ZeroAmplitude { ell });
        }
    }
    let c_min = mags.iter().copied().fold(f64::INFINITY, f64::min);
    FilterSpec::symmetric(mags.iter().map(|m| (c_min / m).sqrt()).collect())
}

/// The file form of a designed filter.
pub fn filter_file(f: &FilterSpec, spectrum: &ReferenceState) -> FilterFile {
    FilterFile {
        d: f.d(),
        gamma: match spectrum.kind() {
            StateKind::Lorentzian { gamma } => Some(gamma),
            _ => None,
        },
        diag: f.diag_a().to_vec(),
    }
}

/// The derived filter for the source spectrum in dimension `d`.
pub fn designed_source_filter(d: usize) -> Result<FilterSpec> {
    design_filter(&crate::spdc::lorentzian_state(SOURCE_GAMMA, d)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub state: DensityMatrix,
    pub success_probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PureFilterOutcome {
    pub state: ReferenceState,
    pub success_probability: f64,
}

fn check_dims(f: &FilterSpec, d: usize) -> Result<()> {
    if f.d() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: f.d(),
        });
    }
    f.validate()
}

/// `rho_f = O_1 rho O_1 / Tr(O_1 rho O_1)`, conditioned on the pair passing.
pub fn apply_filter(rho: &DensityMatrix, f: &FilterSpec) -> Result<FilterOutcome> {
    check_dims(f, rho.d())?;
    let o = f.product_diagonal();
    let n = o.len();
    let src = rho.matrix();
    let m = ComplexMatrix::from_fn(n, n, |i, j| src.get(i, j) * (o[i] * o[j]));
    let p = m.trace().re;
    if !(p > MIN_SUCCESS_PROBABILITY) {
        return Err(Error::ZeroSuccess(p));
    }
    Ok(FilterOutcome {
        state: DensityMatrix::from_parts_unchecked(rho.d(), m.scale_real(1.0 / p)),
        success_probability: p.min(1.0),
    })
}

/// Filter applied to an arbitrary pure vector; returns the unnormalized
/// output.
pub fn apply_filter_vector(psi: &[C64], f: &FilterSpec) -> Result<Vec<C64>> {
    let o = f.product_diagonal();
    if psi.len() != o.len() {
        return Err(Error::DimensionMismatch {
            expected: o.len(),
            actual: psi.len(),
        });
    }
    Ok(psi.iter().zip(&o).map(|(z, w)| z * *w).collect())
}

/// Filtering of a correlated pure state; stays on the `|j, j>` diagonal.
pub fn apply_filter_pure(state: &ReferenceState, f: &FilterSpec) -> Result<PureFilterOutcome> {
    check_dims(f, state.d())?;
    let out: Vec<C64> = state
        .coefficients()
        .iter()
        .enumerate()
        .map(|(j, c)| c * (f.diag_a()[j] * f.diag_b()[j]))
        .collect();
    let p: f64 = out.iter().map(|c| c.norm_sqr()).sum();
    if !(p > MIN_SUCCESS_PROBABILITY) {
        return Err(Error::ZeroSuccess(p));
    }
    Ok(PureFilterOutcome {
        state: ReferenceState::new(state.d(), out, StateKind::Custom)?,
        success_probability: p.min(1.0),
    })
}

/// `O_2^dagger O_2 = 1 - O_1^dagger O_1`, after checking it is a valid
/// effect (eigenvalues in `[0, 1]`).
pub fn completeness_certificate(f: &FilterSpec) -> Result<ComplexMatrix> {
    f.validate()?;
    let diag: Vec<f64> = f.product_diagonal().iter().map(|o| 1.0 - o * o).collect();
    let m = ComplexMatrix::from_real_diagonal(&diag);
    let eig = eig_hermitian(&m)?;
    let (hi, lo) = (
        eig.eigenvalues[0],
        *eig.eigenvalues.last().expect("non-empty"),
    );
    if lo < -1e-12 || hi > 1.0 + 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "failure effect has eigenvalues outside [0,1]: [{lo}, {hi}]"
        )));
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparabilityReport {
    pub d: usize,
    pub trials: usize,
    /// Largest `S_k` seen for each `k = 2..=d`.
    pub max_s_by_k: Vec<(usize, f64)>,
    pub max_s: f64,
    /// Trials where some `S_k` exceeded `2 + 1e-9`.
    pub violations: usize,
    /// Subspace evaluations skipped because the projected weight vanished.
    pub skipped: usize,
}

/// Random separable states through random valid filters: no `S_k` may
/// exceed the local bound. Trial `t` draws from its own stream of `seed`.
pub fn separability_preservation_test(
    n_trials: usize,
    d: usize,
    seed: u64,
) -> Result<SeparabilityReport> {
    if d > MAX_SEPARABILITY_DIM {
        return Err(Error::Size(format!(
            "separability sweep limited to d <= {MAX_SEPARABILITY_DIM}"
        )));
    }
    DimensionSpec::new(d)?;
    let per_trial: Vec<(Vec<f64>, usize)> = (0..n_trials)
        .into_par_iter()
        .map(|t| -> Result<(Vec<f64>, usize)> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let terms = rng.gen_range(1..=2 * d);
            let rho = random_separable(d, terms, &mut rng);
            let mut draw = || {
                (0..d)
                    .map(|_| rng.gen_range(0.05..=1.0))
                    .collect::<Vec<f64>>()
            };
            let (a, b) = (draw(), draw());
            let f = FilterSpec::new(d, a, b)?.normalized()?;
            let out = apply_filter(&rho, &f)?;
            let mut skipped = 0;
            let s = (2..=d)
                .map(|k| match subspace_bell_value(&out.state, k) {
                    Ok((s, _)) => Ok(s),
                    Err(Error::UndefinedConstraint { .. }) => {
                        skipped += 1;
                        Ok(f64::NEG_INFINITY)
                    }
                    Err(e) => Err(e),
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((s, skipped))
        })
        .collect::<Result<_>>()?;

    let mut max_s_by_k: Vec<(usize, f64)> = (2..=d).map(|k| (k, f64::NEG_INFINITY)).collect();
    let mut violations = 0;
    let mut skipped = 0;
    for (s, sk) in &per_trial {
        skipped += sk;
        if s.iter().any(|&x| x > crate::bell::LHV_BOUND + 1e-9) {
            violations += 1;
        }
        for (slot, &x) in max_s_by_k.iter_mut().zip(s) {
            slot.1 = slot.1.max(x);
        }
    }
    let max_s = max_s_by_k
        .iter()
        .map(|x| x.1)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(SeparabilityReport {
        d,
        trials: n_trials,
        max_s_by_k,
        max_s,
        violations,
        skipped,
    })
}
