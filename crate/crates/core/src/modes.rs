//! OAM mode sets, the signal/idler `l <-> j` labelling and the two-setting
//! Fourier analyser bases used by both parties.
//!
//! Odd `d` uses `l = -(d-1)/2 ..= (d-1)/2`; even `d` uses
//! `l = -d/2 ..= d/2` with `l = 0` removed. The signal photon labels modes
//! with `j` ascending in `l`, the idler with `j` ascending in `-l`, so the
//! correlated pair `|l>|-l>` is `|j, j>`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::C64;

pub const MIN_DIM: usize = 2;
/// Largest supported qudit dimension; the product space is then 256-dimensional.
pub const MAX_DIM: usize = 16;

/// Alice's phase offsets for settings `a = 0, 1`.
pub const ALPHA: [f64; 2] = [0.0, 0.5];
/// Bob's phase offsets for settings `b = 0, 1`.
pub const BETA: [f64; 2] = [0.25, -0.25];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Odd,
    Even,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimensionSpec {
    d: usize,
    ells: Vec<i32>,
}

impl DimensionSpec {
    pub fn new(d: usize) -> Result<Self> {
        if !(MIN_DIM..=MAX_DIM).contains(&d) {
            return Err(Error::Size(format!(
                "dimension d={d} outside {MIN_DIM}..={MAX_DIM}"
            )));
        }
        let half = (d / 2) as i32;
        let ells = if d % 2 == 1 {
            (-half..=half).collect()
        } else {
            (-half..=half).filter(|&l| l != 0).collect()
        };
        Ok(Self { d, ells })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn parity(&self) -> Parity {
        if self.d % 2 == 1 {
            Parity::Odd
        } else {
            Parity::Even
        }
    }

    /// OAM indices in ascending order.
    pub fn ells(&self) -> &[i32] {
        &self.ells
    }

    pub fn contains(&self, ell: i32) -> bool {
        self.ells.binary_search(&ell).is_ok()
    }
}

/// Signal and idler `l <-> j` bijections for one dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeMap {
    spec: DimensionSpec,
}

pub fn mode_map(d: usize) -> Result<ModeMap> {
    Ok(ModeMap {
        spec: DimensionSpec::new(d)?,
    })
}

impl ModeMap {
    pub fn spec(&self) -> &DimensionSpec {
        &self.spec
    }

    pub fn d(&self) -> usize {
        self.spec.d
    }

    pub fn signal_j_of_ell(&self, ell: i32) -> Option<usize> {
        self.spec.ells.binary_search(&ell).ok()
    }

    pub fn idler_j_of_ell(&self, ell: i32) -> Option<usize> {
        self.signal_j_of_ell(-ell)
    }

    pub fn signal_ell_of_j(&self, j: usize) -> Option<i32> {
        self.spec.ells.get(j).copied()
    }

    pub fn idler_ell_of_j(&self, j: usize) -> Option<i32> {
        self.signal_ell_of_j(j).map(|l| -l)
    }

    pub fn j_of_ell(&self, party: Party, ell: i32) -> Option<usize> {
        match party {
            Party::Alice => self.signal_j_of_ell(ell),
            Party::Bob => self.idler_j_of_ell(ell),
        }
    }

    pub fn ell_of_j(&self, party: Party, j: usize) -> Option<i32> {
        match party {
            Party::Alice => self.signal_ell_of_j(j),
            Party::Bob => self.idler_ell_of_j(j),
        }
    }
}

/// Alice measures the signal photon, Bob the idler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Party {
    Alice,
    Bob,
}

/// One analyser configuration: a party, its setting (0 or 1) and the
/// outcome the analyser is tuned to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnalyserSetting {
    pub party: Party,
    pub setting: usize,
    pub outcome: usize,
}

impl AnalyserSetting {
    pub fn alice(a: usize, v: usize) -> Self {
        Self {
            party: Party::Alice,
            setting: a,
            outcome: v,
        }
    }

    pub fn bob(b: usize, w: usize) -> Self {
        Self {
            party: Party::Bob,
            setting: b,
            outcome: w,
        }
    }

    pub fn offset(&self) -> f64 {
        match self.party {
            Party::Alice => ALPHA[self.setting],
            Party::Bob => BETA[self.setting],
        }
    }

    /// Per-mode phase step: `2 pi / d * (v + alpha_a)` for Alice,
    /// `2 pi / d * (-w + beta_b)` for Bob.
    fn phase_step(&self, d: usize) -> f64 {
        let n = match self.party {
            Party::Alice => self.outcome as f64 + self.offset(),
            Party::Bob => -(self.outcome as f64) + self.offset(),
        };
        2.0 * PI / d as f64 * n
    }

    /// Mode-analyser angle: `(v + a/2) 2pi/d` for Alice,
    /// `(-w + (-1)^b / 4) 2pi/d` for Bob.
    pub fn theta(&self, d: usize) -> f64 {
        self.phase_step(d)
    }

    fn validate(&self, d: usize) -> Result<()> {
        if self.setting > 1 {
            return Err(Error::InvalidArgument(format!(
                "setting {} is not 0 or 1",
                self.setting
            )));
        }
        if self.outcome >= d {
            return Err(Error::InvalidArgument(format!(
                "outcome {} out of range for d={d}",
                self.outcome
            )));
        }
        Ok(())
    }
}

/// Analyser state in the `j` basis of the party's photon.
pub fn analyser_state(spec: &DimensionSpec, s: &AnalyserSetting) -> Result<Vec<C64>> {
    s.validate(spec.d)?;
    Ok(fourier_vector(spec.d, s.phase_step(spec.d)))
}

fn fourier_vector(d: usize, step: f64) -> Vec<C64> {
    let amp = 1.0 / (d as f64).sqrt();
    (0..d)
        .map(|j| C64::from_polar(amp, step * j as f64))
        .collect()
}

/// Amplitudes of a single-photon state indexed by OAM `l`, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct OamAmplitudes {
    pub ells: Vec<i32>,
    pub amps: Vec<C64>,
}

impl OamAmplitudes {
    pub fn amplitude(&self, ell: i32) -> Option<C64> {
        self.ells.binary_search(&ell).ok().map(|i| self.amps[i])
    }
}

/// The analyser state of [`analyser_state`], relabelled by `l` through the
/// party's side of the mode map.
pub fn analyser_state_oam(map: &ModeMap, s: &AnalyserSetting) -> Result<OamAmplitudes> {
    let v = analyser_state(map.spec(), s)?;
    let ells = map.spec().ells().to_vec();
    let amps = ells
        .iter()
        .map(|&l| v[map.j_of_ell(s.party, l).expect("l in mode set")])
        .collect();
    Ok(OamAmplitudes { ells, amps })
}

/// Continuous-angle analyser `|theta> = d^{-1/2} sum_l exp(i theta g(l)) |l>`
/// with `g(l)` the signal-side index of `l`, applied to either photon.
///
/// For Alice this is [`analyser_state_oam`] at `theta = theta_A`. For Bob
/// the hologram phase runs over the idler's own `l` labels, so Bob's
/// `j`-basis state at `theta_B` equals this state at `-theta_B` up to a
/// global phase.
pub fn angle_state_oam(map: &ModeMap, theta: f64) -> OamAmplitudes {
    let d = map.d();
    let amp = 1.0 / (d as f64).sqrt();
    let ells = map.spec().ells().to_vec();
    let amps = ells
        .iter()
        .map(|&l| {
            let g = map.signal_j_of_ell(l).expect("l in mode set") as f64;
            C64::from_polar(amp, theta * g)
        })
        .collect();
    OamAmplitudes { ells, amps }
}

/// Overlap `<A|<B| Phi>` with `|Phi> = d^{-1/2} sum_l |l>_A |-l>_B`,
/// computed purely on `l` labels.
pub fn max_entangled_overlap(alice: &OamAmplitudes, bob: &OamAmplitudes) -> C64 {
    let d = alice.ells.len();
    let norm = 1.0 / (d as f64).sqrt();
    alice
        .ells
        .iter()
        .zip(&alice.amps)
        .map(|(&l, a)| {
            let b = bob.amplitude(-l).expect("mode sets are symmetric");
            a.conj() * b.conj() * norm
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::inner;

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn odd_and_even_mode_sets() {
        assert_eq!(DimensionSpec::new(3).unwrap().ells(), &[-1, 0, 1]);
        assert_eq!(DimensionSpec::new(4).unwrap().ells(), &[-2, -1, 1, 2]);
        assert_eq!(DimensionSpec::new(11).unwrap().ells().len(), 11);
        assert_eq!(DimensionSpec::new(2).unwrap().parity(), Parity::Even);
        assert!(matches!(DimensionSpec::new(1), Err(Error::Size(_))));
        assert!(matches!(DimensionSpec::new(17), Err(Error::Size(_))));
    }

    #[test]
    fn d3_signal_and_idler_maps() {
        let m = mode_map(3).unwrap();
        assert_eq!(m.signal_j_of_ell(-1), Some(0));
        assert_eq!(m.signal_j_of_ell(0), Some(1));
        assert_eq!(m.signal_j_of_ell(1), Some(2));
        assert_eq!(m.idler_j_of_ell(1), Some(0));
        assert_eq!(m.idler_j_of_ell(0), Some(1));
        assert_eq!(m.idler_j_of_ell(-1), Some(2));
    }

    #[test]
    fn d4_signal_map_skips_zero() {
        let m = mode_map(4).unwrap();
        let got: Vec<_> = [-2, -1, 1, 2]
            .iter()
            .map(|&l| m.signal_j_of_ell(l).unwrap())
            .collect();
        assert_eq!(got, vec![0, 1, 2, 3]);
        assert_eq!(m.signal_j_of_ell(0), None);
    }

    #[test]
    fn correlated_pair_shares_j_and_maps_are_bijective() {
        for d in MIN_DIM..=MAX_DIM {
            let m = mode_map(d).unwrap();
            let mut seen_s = vec![false; d];
            let mut seen_i = vec![false; d];
            for &l in m.spec().ells() {
                let js = m.signal_j_of_ell(l).unwrap();
                assert_eq!(Some(js), m.idler_j_of_ell(-l));
                assert_eq!(m.signal_ell_of_j(js), Some(l));
                seen_s[js] = true;
                seen_i[m.idler_j_of_ell(l).unwrap()] = true;
            }
            assert!(seen_s.iter().all(|&b| b) && seen_i.iter().all(|&b| b));
            if d % 2 == 1 {
                for &l in m.spec().ells() {
                    let j = m.signal_j_of_ell(l).unwrap() as i32;
                    assert_eq!(j, l + (d as i32 - 1) / 2);
                }
            }
        }
    }

    #[test]
    fn analyser_examples() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let s2 = DimensionSpec::new(2).unwrap();
        let v = analyser_state(&s2, &AnalyserSetting::alice(0, 0)).unwrap();
        assert!(close(v[0], C64::new(r, 0.0), 1e-15) && close(v[1], C64::new(r, 0.0), 1e-15));
        let v = analyser_state(&s2, &AnalyserSetting::alice(1, 0)).unwrap();
        assert!(close(v[0], C64::new(r, 0.0), 1e-15) && close(v[1], C64::new(0.0, r), 1e-15));

        let s3 = DimensionSpec::new(3).unwrap();
        let v = analyser_state(&s3, &AnalyserSetting::bob(0, 0)).unwrap();
        let a = 1.0 / 3f64.sqrt();
        assert!(close(v[0], C64::new(a, 0.0), 1e-15));
        assert!(close(v[1], C64::from_polar(a, PI / 6.0), 1e-15));
        assert!(close(v[2], C64::from_polar(a, PI / 3.0), 1e-15));
    }

    #[test]
    fn analyser_angles() {
        let d = 5;
        let t = AnalyserSetting::alice(1, 2).theta(d);
        assert!((t - 2.5 * 2.0 * PI / 5.0).abs() < 1e-15);
        let t = AnalyserSetting::bob(1, 3).theta(d);
        assert!((t - (-3.0 - 0.25) * 2.0 * PI / 5.0).abs() < 1e-15);
        let t = AnalyserSetting::bob(0, 0).theta(d);
        assert!((t - 0.25 * 2.0 * PI / 5.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_settings_rejected() {
        let s = DimensionSpec::new(3).unwrap();
        assert!(analyser_state(&s, &AnalyserSetting::alice(2, 0)).is_err());
        assert!(analyser_state(&s, &AnalyserSetting::bob(0, 3)).is_err());
    }

    #[test]
    fn bases_orthonormal() {
        for d in 2..=14 {
            let spec = DimensionSpec::new(d).unwrap();
            for party in [Party::Alice, Party::Bob] {
                let basis = |s: usize| -> Vec<Vec<C64>> {
                    (0..d)
                        .map(|o| {
                            let st = AnalyserSetting {
                                party,
                                setting: s,
                                outcome: o,
                            };
                            analyser_state(&spec, &st).unwrap()
                        })
                        .collect()
                };
                let (b0, b1) = (basis(0), basis(1));
                for i in 0..d {
                    for j in 0..d {
                        let want = if i == j { 1.0 } else { 0.0 };
                        assert!((inner(&b0[i], &b0[j]).norm() - want).abs() < 1e-12);
                        assert!((inner(&b1[i], &b1[j]).norm() - want).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn oam_relabelling_is_exact_permutation() {
        for d in [2, 5, 11, 14] {
            let m = mode_map(d).unwrap();
            for s in [AnalyserSetting::alice(0, 0), AnalyserSetting::bob(1, d - 1)] {
                let j = analyser_state(m.spec(), &s).unwrap();
                let o = analyser_state_oam(&m, &s).unwrap();
                for (&l, &amp) in o.ells.iter().zip(&o.amps) {
                    assert_eq!(amp, j[m.j_of_ell(s.party, l).unwrap()]);
                }
            }
        }
    }

    #[test]
    fn alice_angle_state_matches_analyser() {
        let m = mode_map(11).unwrap();
        let s = AnalyserSetting::alice(0, 0);
        let o = analyser_state_oam(&m, &s).unwrap();
        let g = angle_state_oam(&m, s.theta(11));
        for (a, b) in o.amps.iter().zip(&g.amps) {
            assert!(close(*a, *b, 1e-14));
        }
    }

    #[test]
    fn bob_state_is_conjugate_angle_state() {
        for d in [2, 4, 7, 11] {
            let m = mode_map(d).unwrap();
            for b in 0..2 {
                for w in 0..d {
                    let s = AnalyserSetting::bob(b, w);
                    let o = analyser_state_oam(&m, &s).unwrap();
                    let g = angle_state_oam(&m, -s.theta(d));
                    let phase = inner(&g.amps, &o.amps);
                    assert!((phase.norm() - 1.0).abs() < 1e-12, "d={d} b={b} w={w}");
                }
            }
        }
    }

    #[test]
    fn coincidence_depends_only_on_relative_angle() {
        let m = mode_map(7).unwrap();
        let delta = 0.37;
        let base = max_entangled_overlap(&angle_state_oam(&m, delta), &angle_state_oam(&m, 0.0))
            .norm_sqr();
        for shift in [-1.3, 0.2, 2.9] {
            let p = max_entangled_overlap(
                &angle_state_oam(&m, delta + shift),
                &angle_state_oam(&m, shift),
            )
            .norm_sqr();
            assert!((p - base).abs() < 1e-14);
        }
    }
}
