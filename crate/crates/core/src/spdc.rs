//! Down-conversion source model: the Lorentzian spiral spectrum, correlated
//! reference states and the coincidence fringe of the maximally entangled
//! state.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modes::{angle_state_oam, max_entangled_overlap, mode_map, DimensionSpec, ModeMap};
use crate::numerics::{inner, norm, C64};
use crate::output::sig12;
use crate::state::DensityMatrix;

/// Below this `|delta|` the fringe uses its Taylor expansion.
pub const FRINGE_SERIES_THRESHOLD: f64 = 1e-6;
/// Fitted `gamma` above this is reported as a flat spectrum.
pub const FLAT_GAMMA: f64 = 1e3;

/// `f(l, gamma) = gamma / (gamma^2 + l^2)` with unit amplitude.
pub fn lorentzian_amplitude(ell: i32, gamma: f64) -> f64 {
    let l = ell as f64;
    gamma / (gamma * gamma + l * l)
}

/// Lorentzian amplitudes over one dimension's mode set, normalized so the
/// pair probabilities sum to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpiralSpectrum {
    pub gamma: f64,
    /// The constant `A` that normalizes `A f(l, gamma)` over the mode set.
    pub amplitude_norm: f64,
    pub ells: Vec<i32>,
    pub amplitudes: Vec<f64>,
}

pub fn spiral_spectrum(gamma: f64, d: usize) -> Result<SpiralSpectrum> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    let spec = DimensionSpec::new(d)?;
    let ells = spec.ells().to_vec();
    let raw: Vec<f64> = ells
        .iter()
        .map(|&l| lorentzian_amplitude(l, gamma))
        .collect();
    let n = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(SpiralSpectrum {
        gamma,
        amplitude_norm: 1.0 / n,
        ells,
        amplitudes: raw.iter().map(|x| x / n).collect(),
    })
}

impl SpiralSpectrum {
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|c| c * c).collect()
    }

    /// CSV `(ell, amplitude, probability)`.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "ell,amplitude,probability")?;
        for (l, c) in self.ells.iter().zip(&self.amplitudes) {
            writeln!(out, "{l},{},{}", sig12(*c), sig12(c * c))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateKind {
    MaxEntangled,
    Lorentzian { gamma: f64 },
    Custom,
}

/// A pure state on the correlated diagonal `sum_j c_j |j, j>`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceState {
    d: usize,
    coefficients: Vec<C64>,
    kind: StateKind,
}

impl ReferenceState {
    /// Normalizes `coefficients` (indexed by `j`).
    pub fn new(d: usize, coefficients: Vec<C64>, kind: StateKind) -> Result<Self> {
        DimensionSpec::new(d)?;
        if coefficients.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: coefficients.len(),
            });
        }
        let n = norm(&coefficients);
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidArgument(
                "reference state has zero norm".into(),
            ));
        }
        Ok(Self {
            d,
            coefficients: coefficients.into_iter().map(|c| c / n).collect(),
            kind,
        })
    }

    /// Real amplitudes indexed by OAM `l` (ascending mode set).
    pub fn from_ell_amplitudes(d: usize, amps: &[f64], kind: StateKind) -> Result<Self> {
        Self::new(d, amps.iter().map(|&a| C64::new(a, 0.0)).collect(), kind)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn kind(&self) -> StateKind {
        self.kind
    }

    /// Coefficients of `|j, j>`.
    pub fn coefficients(&self) -> &[C64] {
        &self.coefficients
    }

    pub fn coefficient_of_ell(&self, ell: i32) -> Option<C64> {
        let map = mode_map(self.d).ok()?;
        map.signal_j_of_ell(ell).map(|j| self.coefficients[j])
    }

    /// Full product-space vector.
    pub fn to_vector(&self) -> Vec<C64> {
        let d = self.d;
        let mut v = vec![C64::new(0.0, 0.0); d * d];
        for (j, c) in self.coefficients.iter().enumerate() {
            v[j * d + j] = *c;
        }
        v
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix::from_pure(self.d, &self.to_vector()).expect("unit norm")
    }

    pub fn norm(&self) -> f64 {
        norm(&self.coefficients)
    }

    /// `|<self|other>|^2`
    pub fn fidelity(&self, other: &ReferenceState) -> Result<f64> {
        if self.d != other.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                actual: other.d,
            });
        }
        Ok(inner(&self.coefficients, &other.coefficients).norm_sqr())
    }
}

/// The source state projected onto `d` modes: amplitudes `gamma/(gamma^2+l^2)`
/// on `|l>|-l>`, renormalized.
pub fn lorentzian_state(gamma: f64, d: usize) -> Result<ReferenceState> {
    let s = spiral_spectrum(gamma, d)?;
    ReferenceState::from_ell_amplitudes(d, &s.amplitudes, StateKind::Lorentzian { gamma })
}

/// Equal amplitudes on every correlated mode pair; for even `d` the
/// `l = 0` pair is not part of the mode set.
pub fn max_entangled_state(d: usize) -> Result<ReferenceState> {
    ReferenceState::from_ell_amplitudes(d, &vec![1.0; d], StateKind::MaxEntangled)
}

/// Probability of a joint detection at relative analyser angle
/// `delta = theta_a - theta_b` on the maximally entangled state:
/// `(cos(d delta) - 1) / (d^3 (cos delta - 1))`, equal to `1/d` at
/// `delta = 0 (mod 2 pi)`.
pub fn coincidence_closed_form(theta_a: f64, theta_b: f64, d: usize) -> f64 {
    let mut x = (theta_a - theta_b).rem_euclid(2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    }
    let n = d as f64;
    if x.abs() < FRINGE_SERIES_THRESHOLD {
        // sin^2(n x/2) / sin^2(x/2) to fourth order
        let n2 = n * n;
        let x2 = x * x;
        let ratio =
            n2 * (1.0 - (n2 - 1.0) * x2 / 12.0 + (n2 - 1.0) * (2.0 * n2 - 3.0) * x2 * x2 / 720.0);
        return ratio / (n2 * n);
    }
    // 1 - cos a = 2 sin^2(a/2) avoids cancellation at small angles
    let ratio = (n * x / 2.0).sin() / (x / 2.0).sin();
    ratio * ratio / (n * n * n)
}

/// The same probability evaluated from the analyser states themselves.
pub fn coincidence_numeric(map: &ModeMap, theta_a: f64, theta_b: f64) -> f64 {
    max_entangled_overlap(
        &angle_state_oam(map, theta_a),
        &angle_state_oam(map, theta_b),
    )
    .norm_sqr()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FringePoint {
    pub delta: f64,
    pub closed_form: f64,
    pub numeric: f64,
}

fn fringe_on(d: usize, lo: f64, hi: f64, points: usize) -> Result<Vec<FringePoint>> {
    if points < 2 {
        return Err(Error::InvalidArgument(
            "a fringe needs at least 2 points".into(),
        ));
    }
    let map = mode_map(d)?;
    Ok((0..points)
        .map(|i| {
            let delta = lo + (hi - lo) * i as f64 / (points - 1) as f64;
            FringePoint {
                delta,
                closed_form: coincidence_closed_form(delta, 0.0, d),
                numeric: coincidence_numeric(&map, delta / 2.0, -delta / 2.0),
            }
        })
        .collect())
}

/// Two fringe periods either side of zero, `delta in [-4 pi/d, 4 pi/d]`.
pub fn fringe_curve(d: usize, points: usize) -> Result<Vec<FringePoint>> {
    let span = 4.0 * PI / d as f64;
    fringe_on(d, -span, span, points)
}

/// Largest disagreement between the closed form and the analyser-state
/// computation on a uniform grid over one full turn `[0, 2 pi]`.
pub fn fringe_equivalence_check(d: usize, grid_points: usize) -> Result<f64> {
    Ok(fringe_on(d, 0.0, 2.0 * PI, grid_points)?
        .iter()
        .map(|p| (p.closed_form - p.numeric).abs())
        .fold(0.0, f64::max))
}

pub fn write_fringe_csv(points: &[FringePoint], mut out: impl Write) -> std::io::Result<()> {
    writeln!(
        out,
        "delta_radians,probability_closed_form,probability_numeric"
    )?;
    for p in points {
        writeln!(
            out,
            "{},{},{}",
            sig12(p.delta),
            sig12(p.closed_form),
            sig12(p.numeric)
        )?;
    }
    Ok(())
}

/// One measured pair rate at OAM `ell`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub ell: i32,
    pub rate: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaFit {
    pub gamma: f64,
    /// `A` in `rate = (A gamma / (gamma^2 + l^2))^2`.
    pub amplitude: f64,
    /// Weighted sum of squared residuals in the fitted domain.
    pub residual: f64,
    pub log_domain: bool,
    /// Set when `gamma` runs off to the flat-spectrum limit.
    pub flat: bool,
}

const LN_GAMMA_MIN: f64 = -4.605170185988091; // ln 0.01
const LN_GAMMA_MAX: f64 = 13.815510557964274; // ln 1e6
const GRID: usize = 400;

/// Least-squares fit of `rate(l) = [A gamma / (gamma^2 + l^2)]^2`.
///
/// The amplitude is profiled out in closed form, leaving a one-dimensional
/// search over `ln gamma`: a coarse grid followed by golden-section
/// refinement. Residuals are taken on `ln rate` when every rate is
/// positive, on the rates themselves otherwise.
pub fn fit_gamma(rates: &[RatePoint]) -> Result<GammaFit> {
    let mut distinct: Vec<i32> = rates.iter().map(|r| r.ell).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Fit(format!(
            "need at least 3 distinct l values, got {}",
            distinct.len()
        )));
    }
    if rates
        .iter()
        .any(|r| !(r.rate >= 0.0 && r.rate.is_finite()) || !(r.sigma >= 0.0))
    {
        return Err(Error::Fit(
            "rates and sigmas must be finite and nonnegative".into(),
        ));
    }
    if rates.iter().all(|r| r.rate == 0.0) {
        return Err(Error::Fit("all rates are zero".into()));
    }
    let log_domain = rates.iter().all(|r| r.rate > 0.0);
    let objective = |u: f64| profile(rates, u.exp(), log_domain);

    let step = (LN_GAMMA_MAX - LN_GAMMA_MIN) / (GRID - 1) as f64;
    let grid: Vec<f64> = (0..GRID).map(|i| LN_GAMMA_MIN + step * i as f64).collect();
    let best = grid
        .iter()
        .enumerate()
        .map(|(i, &u)| (i, objective(u).0))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
        .expect("non-empty grid");
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(GRID - 1)];
    let u = golden_section(|u| objective(u).0, lo, hi, 1e-13);
    let gamma = u.exp();
    let (residual, amplitude) = objective(u);
    Ok(GammaFit {
        gamma,
        amplitude,
        residual,
        log_domain,
        flat: gamma > FLAT_GAMMA,
    })
}

/// Returns `(weighted SSR, best A)` at fixed `gamma`.
fn profile(rates: &[RatePoint], gamma: f64, log_domain: bool) -> (f64, f64) {
    if log_domain {
        // ln rate = c + h(l),  c = 2 ln A
        let (mut sw, mut swr) = (0.0, 0.0);
        let terms: Vec<(f64, f64)> = rates
            .iter()
            .map(|r| {
                let w = if r.sigma > 0.0 { r.rate / r.sigma } else { 1.0 };
                let h = 2.0 * lorentzian_amplitude(r.ell, gamma).ln();
                (w * w, r.rate.ln() - h)
            })
            .collect();
        for &(w2, y) in &terms {
            sw += w2;
            swr += w2 * y;
        }
        let c = swr / sw;
        let ssr = terms.iter().map(|&(w2, y)| w2 * (y - c) * (y - c)).sum();
        (ssr, (c / 2.0).exp())
    } else {
        let (mut num, mut den) = (0.0, 0.0);
        for r in rates {
            let s2 = if r.sigma > 0.0 {
                r.sigma * r.sigma
            } else {
                1.0
            };
            let g = lorentzian_amplitude(r.ell, gamma).powi(2);
            num += r.rate * g / s2;
            den += g * g / s2;
        }
        let a2 = (num / den).max(0.0);
        let ssr = rates
            .iter()
            .map(|r| {
                let s2 = if r.sigma > 0.0 {
                    r.sigma * r.sigma
                } else {
                    1.0
                };
                let e = r.rate - a2 * lorentzian_amplitude(r.ell, gamma).powi(2);
                e * e / s2
            })
            .sum();
        (ssr, a2.sqrt())
    }
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

/// Noise-free rates `(A f(l, gamma))^2` for `l` in `ells`.
pub fn synthetic_rates(
    gamma: f64,
    amplitude: f64,
    ells: impl IntoIterator<Item = i32>,
) -> Vec<RatePoint> {
    ells.into_iter()
        .map(|ell| {
            let r = (amplitude * lorentzian_amplitude(ell, gamma)).powi(2);
            RatePoint {
                ell,
                rate: r,
                sigma: 0.0,
            }
        })
        .collect()
}
