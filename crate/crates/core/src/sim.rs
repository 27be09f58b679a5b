//! Photon-counting Monte Carlo: Poisson coincidence counts for every
//! analyser setting, optional mode cross-talk, and propagation of the
//! counting error to `S_d`.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::bell::{probability_table, s_from_table, s_weights, BellValue, ProbabilityTable};
use crate::concentration::{apply_filter_pure, design_filter};
use crate::error::{Error, Result};
use crate::numerics::C64;
use crate::output::sig12;
use crate::reference::INTEGRATION_TIME_S;
use crate::spdc::lorentzian_state;
use crate::state::DensityMatrix;

/// Below this mean the Poisson sampler inverts the CDF exactly.
pub const POISSON_INVERSION_LIMIT: f64 = 30.0;

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub state: DensityMatrix,
    /// Coincidences per second summed over the `d^2` outcomes of one
    /// setting pair.
    pub total_rate: f64,
    pub integration_time: f64,
    pub crosstalk_epsilon: f64,
    pub seed: u64,
}

impl ExperimentPlan {
    pub fn new(state: DensityMatrix, total_rate: f64, seed: u64) -> Self {
        Self {
            state,
            total_rate,
            integration_time: INTEGRATION_TIME_S,
            crosstalk_epsilon: 0.0,
            seed,
        }
    }

    pub fn d(&self) -> usize {
        self.state.d()
    }

    /// Expected coincidences per setting pair.
    pub fn expected_counts(&self) -> f64 {
        self.total_rate * self.integration_time
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.total_rate >= 0.0 && self.total_rate.is_finite()) {
            return Err(Error::InvalidArgument(
                "rate must be finite and >= 0".into(),
            ));
        }
        if !(self.integration_time > 0.0 && self.integration_time.is_finite()) {
            return Err(Error::InvalidArgument(
                "integration time must be > 0".into(),
            ));
        }
        check_epsilon(self.crosstalk_epsilon)
    }
}

fn check_epsilon(eps: f64) -> Result<()> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::InvalidArgument(format!(
            "cross-talk {eps} not in [0, 1)"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CountRecord {
    pub a: usize,
    pub b: usize,
    pub v: usize,
    pub w: usize,
    pub count: u64,
}

/// Idler-mode cross-talk on the state: a fraction `eps` of each product
/// population `|jA, jB>` moves incoherently to `|jA, jB +- 1>`, split
/// evenly (an edge mode sends all of it to its single neighbour).
pub fn crosstalk_state(rho: &DensityMatrix, eps: f64) -> Result<DensityMatrix> {
    check_epsilon(eps)?;
    if eps == 0.0 {
        return Ok(rho.clone());
    }
    let d = rho.d();
    let pops = rho.populations();
    let mut m = rho.matrix().scale_real(1.0 - eps);
    for ja in 0..d {
        for jb in 0..d {
            let p = pops[ja * d + jb] * eps;
            if p == 0.0 {
                continue;
            }
            let nbrs: Vec<usize> = [jb.checked_sub(1), (jb + 1 < d).then_some(jb + 1)]
                .into_iter()
                .flatten()
                .collect();
            let share = p / nbrs.len() as f64;
            for nb in nbrs {
                let i = ja * d + nb;
                m.add_at(i, i, C64::new(share, 0.0));
            }
        }
    }
    Ok(DensityMatrix::from_parts_unchecked(d, m))
}

/// Outcome-level cross-talk on a probability table: Bob's outcome leaks
/// to its cyclic neighbours, `p' = (1-eps) p[v][w] + eps/2 (p[v][w-1] + p[v][w+1])`.
pub fn crosstalk_mix(t: &ProbabilityTable, eps: f64) -> Result<ProbabilityTable> {
    check_epsilon(eps)?;
    if eps == 0.0 {
        return Ok(t.clone());
    }
    let d = t.d();
    let mut out = Vec::with_capacity(4 * d * d);
    for a in 0..2 {
        for b in 0..2 {
            for v in 0..d {
                for w in 0..d {
                    let left = t.get(a, b, v, (w + d - 1) % d);
                    let right = t.get(a, b, v, (w + 1) % d);
                    out.push((1.0 - eps) * t.get(a, b, v, w) + 0.5 * eps * (left + right));
                }
            }
        }
    }
    ProbabilityTable::new(d, out)
}

/// Poisson draw: CDF inversion for small means, normal approximation with
/// continuity correction above [`POISSON_INVERSION_LIMIT`].
pub fn sample_poisson(lambda: f64, rng: &mut impl Rng) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    if lambda < POISSON_INVERSION_LIMIT {
        let u: f64 = rng.gen();
        let mut k = 0u64;
        let mut p = (-lambda).exp();
        let mut cdf = p;
        while u > cdf && p > 0.0 {
            k += 1;
            p *= lambda / k as f64;
            cdf += p;
        }
        return k;
    }
    let z: f64 = rng.sample(StandardNormal);
    (lambda + lambda.sqrt() * z + 0.5).floor().max(0.0) as u64
}

fn cell_rng(seed: u64, cell: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(cell as u64);
    rng
}

/// Expected counts `lambda = rate * time * p[a][b][v][w]` for each cell.
pub fn expected_counts(plan: &ExperimentPlan) -> Result<ProbabilityTable> {
    plan.validate()?;
    probability_table(&crosstalk_state(&plan.state, plan.crosstalk_epsilon)?)
}

/// One Poisson count per `(a, b, v, w)`, ordered `a, b, v, w`. Cell `i`
/// draws from stream `i` of the plan's seed.
pub fn simulate_counts(plan: &ExperimentPlan) -> Result<Vec<CountRecord>> {
    let t = expected_counts(plan)?;
    Ok(counts_from_table(&t, plan.expected_counts(), plan.seed))
}

/// Poisson counts with means `n * p` for an arbitrary table.
pub fn counts_from_table(t: &ProbabilityTable, n: f64, seed: u64) -> Vec<CountRecord> {
    let d = t.d();
    (0..4 * d * d)
        .into_par_iter()
        .map(|i| {
            let (a, b, v, w) = (i / (2 * d * d), i / (d * d) % 2, i / d % d, i % d);
            let lambda = n * t.get(a, b, v, w);
            CountRecord {
                a,
                b,
                v,
                w,
                count: sample_poisson(lambda, &mut cell_rng(seed, i)),
            }
        })
        .collect()
}

/// Counts arranged as a dense `4 d^2` array after checking every cell
/// appears exactly once.
fn dense_counts(d: usize, records: &[CountRecord]) -> Result<Vec<f64>> {
    let mut c = vec![None; 4 * d * d];
    for r in records {
        if r.a > 1 || r.b > 1 || r.v >= d || r.w >= d {
            return Err(Error::InvalidArgument(format!(
                "record ({}, {}, {}, {}) outside d={d}",
                r.a, r.b, r.v, r.w
            )));
        }
        let i = ((r.a * 2 + r.b) * d + r.v) * d + r.w;
        if c[i].replace(r.count as f64).is_some() {
            return Err(Error::InvalidArgument(format!(
                "duplicate record ({}, {}, {}, {})",
                r.a, r.b, r.v, r.w
            )));
        }
    }
    let missing = c.iter().filter(|x| x.is_none()).count();
    if missing > 0 {
        return Err(Error::Incomplete(format!(
            "{missing} of {} cells",
            4 * d * d
        )));
    }
    Ok(c.into_iter().map(|x| x.expect("checked")).collect())
}

/// `S_d` from raw counts with the first-order Poisson error
/// `sigma^2 = sum_i (dS/dC_i)^2 C_i`.
pub fn estimate_s_with_sigma(d: usize, records: &[CountRecord]) -> Result<BellValue> {
    let c = dense_counts(d, records)?;
    let (s, var) = s_and_variance(d, &c)?;
    Ok(BellValue {
        d,
        s,
        sigma: Some(var.sqrt()),
    })
}

fn s_and_variance(d: usize, c: &[f64]) -> Result<(f64, f64)> {
    let w = s_weights(d);
    let block = d * d;
    let mut s = 0.0;
    let mut var = 0.0;
    for ab in 0..4 {
        let cs = &c[ab * block..(ab + 1) * block];
        let ws = &w[ab * block..(ab + 1) * block];
        let n: f64 = cs.iter().sum();
        if n <= 0.0 {
            return Err(Error::InvalidTable(format!(
                "no counts for setting pair (a={}, b={})",
                ab / 2,
                ab % 2
            )));
        }
        let mean: f64 = cs.iter().zip(ws).map(|(c, w)| c * w).sum::<f64>() / n;
        s += mean;
        for (ci, wi) in cs.iter().zip(ws) {
            let g = (wi - mean) / n;
            var += g * g * ci;
        }
    }
    Ok((s, var))
}

/// Parametric bootstrap: redraw every count as Poisson with the observed
/// count as its mean and report the spread of `S_d`.
pub fn bootstrap_sigma(
    d: usize,
    records: &[CountRecord],
    resamples: usize,
    seed: u64,
) -> Result<f64> {
    if resamples < 2 {
        return Err(Error::InvalidArgument(
            "bootstrap needs at least 2 resamples".into(),
        ));
    }
    let c = dense_counts(d, records)?;
    let values: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = cell_rng(seed, r);
            let draw: Vec<f64> = c
                .iter()
                .map(|&x| sample_poisson(x, &mut rng) as f64)
                .collect();
            s_and_variance(d, &draw).map(|x| x.0)
        })
        .collect::<Result<_>>()?;
    let mean = values.iter().sum::<f64>() / resamples as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (resamples - 1) as f64;
    Ok(var.sqrt())
}

pub fn write_counts_csv(records: &[CountRecord], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "a,b,v,w,count")?;
    for r in records {
        writeln!(out, "{},{},{},{},{}", r.a, r.b, r.v, r.w, r.count)?;
    }
    Ok(())
}

pub fn read_counts_csv(path: &Path) -> Result<Vec<CountRecord>> {
    let text = crate::output::read_text(path)?;
    let bad = |line: usize, why: &str| {
        Error::InvalidArgument(format!("{}:{line}: {why}", path.display()))
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "a,b,v,w,count" => {}
        _ => return Err(bad(1, "expected header a,b,v,w,count")),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let f: Vec<u64> = l
                .split(',')
                .map(|x| x.trim().parse::<u64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(i + 1, "non-integer field"))?;
            if f.len() != 5 {
                return Err(bad(i + 1, "expected 5 fields"));
            }
            Ok(CountRecord {
                a: f[0] as usize,
                b: f[1] as usize,
                v: f[2] as usize,
                w: f[3] as usize,
                count: f[4],
            })
        })
        .collect()
}

/// Settings shared by every row of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    /// Expected coincidences per setting pair; `None` evaluates the exact
    /// probabilities without counting noise.
    pub counts_per_setting: Option<f64>,
    pub crosstalk_epsilon: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub d: usize,
    pub s: f64,
    pub sigma: f64,
    pub filtered: bool,
    pub gamma: f64,
    pub seed: u64,
}

/// The source state projected onto `d` modes, optionally concentrated.
pub fn source_state(gamma: f64, d: usize, filtered: bool) -> Result<DensityMatrix> {
    let src = lorentzian_state(gamma, d)?;
    let state = if filtered {
        apply_filter_pure(&src, &design_filter(&src)?)?.state
    } else {
        src
    };
    Ok(state.to_density())
}

/// `S_d` against `d` for the source state. Row `d` uses seed
/// `seed + d` so rows are independent of the range requested.
pub fn run_sd_sweep(
    gamma: f64,
    ds: &[usize],
    filtered: bool,
    opts: &SweepOptions,
) -> Result<Vec<SweepRow>> {
    check_epsilon(opts.crosstalk_epsilon)?;
    ds.par_iter()
        .map(|&d| {
            let rho = crosstalk_state(&source_state(gamma, d, filtered)?, opts.crosstalk_epsilon)?;
            let table = probability_table(&rho)?;
            let seed = opts.seed.wrapping_add(d as u64);
            let (s, sigma) = match opts.counts_per_setting {
                None => (s_from_table(&table).s, 0.0),
                Some(n) => {
                    let v = estimate_s_with_sigma(d, &counts_from_table(&table, n, seed))?;
                    (v.s, v.sigma.unwrap_or(0.0))
                }
            };
            Ok(SweepRow {
                d,
                s,
                sigma,
                filtered,
                gamma,
                seed,
            })
        })
        .collect()
}

pub fn write_sweep_csv(rows: &[SweepRow], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "d,s,sigma,filtered,gamma,seed")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.d,
            sig12(r.s),
            sig12(r.sigma),
            r.filtered,
            sig12(r.gamma),
            r.seed
        )?;
    }
    Ok(())
}

/// Fraction of product-basis population off the correlated diagonal.
pub fn off_diagonal_weight(rho: &DensityMatrix) -> f64 {
    let d = rho.d();
    let pops = rho.populations();
    (0..d * d).filter(|i| i / d != i % d).map(|i| pops[i]).sum()
}

/// A diagonal product-basis table `p[a][b][v][w] = delta_vw / d`, the
/// computational-basis coincidence pattern of perfectly conserved modes.
pub fn correlated_table(d: usize) -> Result<ProbabilityTable> {
    let mut p = vec![0.0; 4 * d * d];
    for ab in 0..4 {
        for j in 0..d {
            p[ab * d * d + j * d + j] = 1.0 / d as f64;
        }
    }
    ProbabilityTable::new(d, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bell::max_entangled_vector;
    use crate::reference::MAX_ENTANGLED_AND_MAXIMAL;

    fn max_ent(d: usize) -> DensityMatrix {
        DensityMatrix::from_pure(d, &max_entangled_vector(d)).unwrap()
    }

    #[test]
    fn poisson_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for lambda in [0.5, 7.0, 29.0, 31.0, 500.0] {
            let n = 40_000;
            let xs: Vec<f64> = (0..n)
                .map(|_| sample_poisson(lambda, &mut rng) as f64)
                .collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            assert!(
                (mean - lambda).abs() < 5.0 * (lambda / n as f64).sqrt(),
                "{lambda}: {mean}"
            );
            assert!((var / lambda - 1.0).abs() < 0.05, "{lambda}: {var}");
        }
        assert_eq!(sample_poisson(0.0, &mut rng), 0);
    }

    #[test]
    fn frequencies_converge() {
        let mut plan = ExperimentPlan::new(max_ent(3), 1e8, 5);
        plan.integration_time = 1.0;
        let recs = simulate_counts(&plan).unwrap();
        let t = probability_table(&plan.state).unwrap();
        for r in &recs {
            let p = t.get(r.a, r.b, r.v, r.w);
            let lambda = 1e8 * p;
            if lambda > 0.0 {
                assert!((r.count as f64 - lambda).abs() <= 5.0 * lambda.sqrt() + 1.0);
            }
        }
    }

    #[test]
    fn zero_rate_and_determinism() {
        let plan = ExperimentPlan::new(max_ent(2), 0.0, 1);
        assert!(simulate_counts(&plan).unwrap().iter().all(|r| r.count == 0));
        let plan = ExperimentPlan::new(max_ent(4), 50.0, 9);
        assert_eq!(
            simulate_counts(&plan).unwrap(),
            simulate_counts(&plan).unwrap()
        );
        let other = ExperimentPlan {
            seed: 10,
            ..plan.clone()
        };
        assert_ne!(
            simulate_counts(&plan).unwrap(),
            simulate_counts(&other).unwrap()
        );
    }

    #[test]
    fn large_counts_recover_table_s1() {
        let mut plan = ExperimentPlan::new(max_ent(2), 1e8, 3);
        plan.integration_time = 1.0;
        let v = estimate_s_with_sigma(2, &simulate_counts(&plan).unwrap()).unwrap();
        assert!((v.s - 2.8284).abs() < 1e-3);
        assert!(v.sigma.unwrap() < 1e-3);
    }

    #[test]
    fn sigma_scales_as_inverse_sqrt() {
        let rho = max_ent(3);
        let sig = |n: f64| {
            let mut plan = ExperimentPlan::new(rho.clone(), n, 17);
            plan.integration_time = 1.0;
            estimate_s_with_sigma(3, &simulate_counts(&plan).unwrap())
                .unwrap()
                .sigma
                .unwrap()
        };
        let (s1, s4) = (sig(1e4), sig(4e4));
        assert!((s1 / s4 / 2.0 - 1.0).abs() < 0.1, "{s1} {s4}");
    }

    #[test]
    fn propagation_agrees_with_bootstrap() {
        let mut plan = ExperimentPlan::new(max_ent(3), 2e4, 21);
        plan.integration_time = 1.0;
        let recs = simulate_counts(&plan).unwrap();
        let analytic = estimate_s_with_sigma(3, &recs).unwrap().sigma.unwrap();
        let boot = bootstrap_sigma(3, &recs, 400, 8).unwrap();
        assert!((boot / analytic - 1.0).abs() < 0.2, "{boot} vs {analytic}");
    }

    #[test]
    fn uniform_counts_cancel() {
        let d = 3;
        let recs: Vec<CountRecord> = (0..4 * d * d)
            .map(|i| CountRecord {
                a: i / 18,
                b: i / 9 % 2,
                v: i / 3 % 3,
                w: i % 3,
                count: 1000,
            })
            .collect();
        let v = estimate_s_with_sigma(d, &recs).unwrap();
        assert!(v.s.abs() < 1e-12);
        assert!(v.sigma.unwrap() > 0.0);
    }

    #[test]
    fn incomplete_and_duplicate_records() {
        let plan = ExperimentPlan::new(max_ent(2), 100.0, 1);
        let mut recs = simulate_counts(&plan).unwrap();
        recs.pop();
        assert!(matches!(
            estimate_s_with_sigma(2, &recs),
            Err(Error::Incomplete(_))
        ));
        let dup = recs[0];
        recs.push(dup);
        assert!(estimate_s_with_sigma(2, &recs).is_err());
    }

    #[test]
    fn crosstalk_table_properties() {
        let t = probability_table(&max_ent(4)).unwrap();
        assert_eq!(crosstalk_mix(&t, 0.0).unwrap().as_slice(), t.as_slice());
        let u = ProbabilityTable::uniform(5);
        for (x, y) in crosstalk_mix(&u, 0.5)
            .unwrap()
            .as_slice()
            .iter()
            .zip(u.as_slice())
        {
            assert!((x - y).abs() < 1e-15);
        }
        let m = crosstalk_mix(&t, 0.3).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                let s: f64 = m.block(a, b).iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
        let c = crosstalk_mix(&correlated_table(11).unwrap(), 0.08).unwrap();
        let off: f64 = (0..11 * 11)
            .filter(|i| i / 11 != i % 11)
            .map(|i| c.block(0, 0)[i])
            .sum();
        assert!((off - 0.08).abs() < 1e-12);
        assert!(crosstalk_mix(&t, 1.0).is_err());
    }

    #[test]
    fn crosstalk_state_moves_eight_percent() {
        let rho = crosstalk_state(&max_ent(11), 0.08).unwrap();
        assert!((off_diagonal_weight(&rho) - 0.08).abs() < 1e-12);
        assert!((rho.matrix().trace().re - 1.0).abs() < 1e-12);
        DensityMatrix::new(11, rho.matrix().clone()).unwrap();
    }

    #[test]
    fn exact_filtered_sweep_is_table_s1() {
        let opts = SweepOptions {
            counts_per_setting: None,
            crosstalk_epsilon: 0.0,
            seed: 0,
        };
        let ds: Vec<usize> = (2..=8).collect();
        for row in run_sd_sweep(7.58, &ds, true, &opts).unwrap() {
            let (_, want, _) = MAX_ENTANGLED_AND_MAXIMAL[row.d - 2];
            assert!((row.s - want).abs() < 1e-3);
            assert!(row.s <= crate::bell::max_violation(row.d).unwrap().0 + 1e-9);
        }
        let one = run_sd_sweep(7.58, &[2], false, &opts).unwrap();
        assert_eq!(one.len(), 1);
    }

    #[test]
    fn counts_csv_round_trip() {
        let plan = ExperimentPlan::new(max_ent(2), 100.0, 4);
        let recs = simulate_counts(&plan).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let mut buf = Vec::new();
        write_counts_csv(&recs, &mut buf).unwrap();
        std::fs::write(&path, buf).unwrap();
        assert_eq!(read_counts_csv(&path).unwrap(), recs);
    }
}
