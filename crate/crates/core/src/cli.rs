//! The `qbell` command-line front end.
//!
//! Exit codes: 0 on success, 1 when a computation fails its contract
//! (including infeasible witness constraints), 2 for usage and I/O errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bell::{cached_bell_operator, expectation_max_entangled, MAX_OPERATOR_DIM};
use crate::concentration::{design_filter, filter_file, FilterFile, FilterSpec};
use crate::error::{Error, Result};
use crate::output::{fixed4, sig12, write_text};
use crate::reference::{MEASURED_S11_ALL_P, SOURCE_GAMMA};
use crate::sim::{
    bootstrap_sigma, estimate_s_with_sigma, run_sd_sweep, simulate_counts, source_state,
    write_counts_csv, write_sweep_csv, ExperimentPlan, SweepOptions,
};
use crate::spdc::{fit_gamma, fringe_curve, lorentzian_state, write_fringe_csv, RatePoint};
use crate::witness::{
    certify_dimension, maximize_s11, paper_scenario, ConstraintSet, WitnessOptions,
    DEFAULT_SIGNIFICANCE, DEFAULT_STARTS,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "qbell", version, about = "High-dimensional OAM Bell tests")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output file; standard output when omitted.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Maximally entangled and maximal violations for d = 2..=d_max.
    TableS1 {
        #[arg(long, default_value_t = 14)]
        d_max: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// The Bell operator as a dense CSV.
    Operator {
        #[arg(long)]
        d: usize,
        /// Also print this many of the largest eigenvalues.
        #[arg(long, default_value_t = 0)]
        top: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Coincidence fringe over two periods.
    Fringe {
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 201)]
        points: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// S_d against d for the source state.
    Sweep {
        #[arg(long, default_value_t = SOURCE_GAMMA)]
        gamma: f64,
        #[arg(long, default_value_t = 2)]
        d_min: usize,
        #[arg(long, default_value_t = 14)]
        d_max: usize,
        #[arg(long)]
        filtered: bool,
        /// Expected coincidences per setting pair; exact probabilities when omitted.
        #[arg(long)]
        counts: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        crosstalk: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Poisson coincidence counts for one dimension.
    Simulate {
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = SOURCE_GAMMA)]
        gamma: f64,
        /// Use the maximally entangled state instead of the source state.
        #[arg(long, conflicts_with = "filtered")]
        max_entangled: bool,
        #[arg(long)]
        filtered: bool,
        /// Coincidences per second per setting pair.
        #[arg(long, default_value_t = 1000.0)]
        rate: f64,
        #[arg(long, default_value_t = crate::reference::INTEGRATION_TIME_S)]
        time: f64,
        #[arg(long, default_value_t = 0.0)]
        crosstalk: f64,
        #[arg(long)]
        seed: Option<u64>,
        /// Cross-check the propagated error with this many bootstrap resamples.
        #[arg(long)]
        bootstrap: Option<usize>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Fit the spiral bandwidth to pair rates (CSV: ell,rate[,sigma]).
    FitGamma {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Amplitude-equalizing filter for the source spectrum.
    FilterDesign {
        #[arg(long, default_value_t = 11)]
        d: usize,
        #[arg(long, default_value_t = SOURCE_GAMMA)]
        gamma: f64,
        /// Emit the diagonal used in the d = 11 experiments instead.
        #[arg(long)]
        paper_preset: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Largest S_d reachable with (d-1)-dimensional entanglement.
    Witness {
        /// Constraint JSON; the built-in d = 11 scenario when omitted.
        #[arg(long)]
        constraints: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_STARTS)]
        starts: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the file's band multiplier.
        #[arg(long)]
        band_multiplier: Option<f64>,
        #[arg(long, default_value_t = MEASURED_S11_ALL_P.0)]
        measured: f64,
        #[arg(long, default_value_t = MEASURED_S11_ALL_P.1)]
        sigma: f64,
        #[arg(long, default_value_t = DEFAULT_SIGNIFICANCE)]
        significance: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Separation of a measured value from a bound.
    Certify {
        #[arg(long)]
        bound: f64,
        #[arg(long)]
        measured: f64,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = DEFAULT_SIGNIFICANCE)]
        significance: f64,
    },
}

struct Io<'a> {
    stdout: &'a mut dyn Write,
    stderr: &'a mut dyn Write,
}

impl Io<'_> {
    fn emit(&mut self, out: &OutArgs, text: &str) -> Result<()> {
        match &out.out {
            Some(path) => write_text(path, text),
            None => self
                .stdout
                .write_all(text.as_bytes())
                .map_err(|e| Error::io("<stdout>", e)),
        }
    }

    fn note(&mut self, msg: &str) {
        let _ = writeln!(self.stderr, "{msg}");
    }

    fn seed(&mut self, seed: Option<u64>) -> u64 {
        seed.unwrap_or_else(|| {
            let s = rand::random::<u64>();
            self.note(&format!("seed: {s}"));
            s
        })
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn csv_text(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> String {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run(
    args: impl IntoIterator<Item = OsString>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                return EXIT_USAGE;
            }
            let _ = write!(stdout, "{}", e.render());
            return EXIT_OK;
        }
    };
    if let Err(e) = configure_threads() {
        let _ = writeln!(stderr, "error: {e}");
        return EXIT_USAGE;
    }
    let mut io = Io { stdout, stderr };
    match execute(cli.command, &mut io) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            io.note(&format!("error: {e}"));
            if e.is_usage() {
                EXIT_USAGE
            } else {
                EXIT_FAILURE
            }
        }
    }
}

/// Honors `QBELL_THREADS` by sizing the global worker pool once.
fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("QBELL_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        Error::InvalidArgument(format!("QBELL_THREADS={v} is not a positive integer"))
    })?;
    // a pool built earlier in this process keeps its size
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

fn check_range(what: &str, d: usize, lo: usize, hi: usize) -> Result<()> {
    if d < lo || d > hi {
        return Err(Error::InvalidArgument(format!(
            "{what}={d} not in {lo}..={hi}"
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct TableRow {
    d: usize,
    violation_max_entangled: f64,
    max_eigenvalue: f64,
}

fn execute(cmd: Command, io: &mut Io) -> Result<()> {
    match cmd {
        Command::TableS1 { d_max, out } => {
            check_range("d-max", d_max, 2, MAX_OPERATOR_DIM)?;
            let rows = (2..=d_max)
                .map(|d| {
                    Ok(TableRow {
                        d,
                        violation_max_entangled: expectation_max_entangled(d)?,
                        max_eigenvalue: cached_bell_operator(d)?.spectrum()?.eigenvalues[0],
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let text = match out.format {
                Format::Json => to_json(&rows),
                Format::Csv => {
                    let mut s = String::from("d,violation_max_entangled,max_eigenvalue\n");
                    for r in &rows {
                        s += &format!(
                            "{},{},{}\n",
                            r.d,
                            fixed4(r.violation_max_entangled),
                            fixed4(r.max_eigenvalue)
                        );
                    }
                    s
                }
            };
            io.emit(&out, &text)
        }
        Command::Operator { d, top, out } => {
            let op = cached_bell_operator(d)?;
            if top > 0 {
                let ev = op.spectrum()?.eigenvalues;
                let list: Vec<String> = ev.iter().take(top).map(|x| fixed4(*x)).collect();
                io.note(&format!("largest eigenvalues: {}", list.join(", ")));
            }
            let text = match out.format {
                Format::Csv => csv_text(|b| op.write_csv(b)),
                Format::Json => {
                    let m = op.matrix();
                    let rows: Vec<Vec<[f64; 2]>> = (0..m.rows())
                        .map(|i| m.row(i).iter().map(|z| [z.re, z.im]).collect())
                        .collect();
                    to_json(&rows)
                }
            };
            io.emit(&out, &text)
        }
        Command::Fringe { d, points, out } => {
            let pts = fringe_curve(d, points)?;
            let text = match out.format {
                Format::Csv => csv_text(|b| write_fringe_csv(&pts, b)),
                Format::Json => to_json(&pts),
            };
            io.emit(&out, &text)
        }
        Command::Sweep {
            gamma,
            d_min,
            d_max,
            filtered,
            counts,
            crosstalk,
            seed,
            out,
        } => {
            check_range("d-min", d_min, 2, MAX_OPERATOR_DIM)?;
            check_range("d-max", d_max, d_min, MAX_OPERATOR_DIM)?;
            let seed = match counts {
                Some(_) => io.seed(seed),
                None => seed.unwrap_or(0),
            };
            if let Some(n) = counts {
                if !(n > 0.0) {
                    return Err(Error::InvalidArgument("--counts must be positive".into()));
                }
            }
            let ds: Vec<usize> = (d_min..=d_max).collect();
            let opts = SweepOptions {
                counts_per_setting: counts,
                crosstalk_epsilon: crosstalk,
                seed,
            };
            let rows = run_sd_sweep(gamma, &ds, filtered, &opts)?;
            let text = match out.format {
                Format::Csv => csv_text(|b| write_sweep_csv(&rows, b)),
                Format::Json => to_json(&rows),
            };
            io.emit(&out, &text)
        }
        Command::Simulate {
            d,
            gamma,
            max_entangled,
            filtered,
            rate,
            time,
            crosstalk,
            seed,
            bootstrap,
            out,
        } => {
            check_range("d", d, 2, MAX_OPERATOR_DIM)?;
            let seed = io.seed(seed);
            let state = if max_entangled {
                source_state(1e12, d, false)?
            } else {
                source_state(gamma, d, filtered)?
            };
            let plan = ExperimentPlan {
                state,
                total_rate: rate,
                integration_time: time,
                crosstalk_epsilon: crosstalk,
                seed,
            };
            let recs = simulate_counts(&plan)?;
            let est = estimate_s_with_sigma(d, &recs)?;
            let mut msg = format!(
                "S_{d} = {} +- {}",
                sig12(est.s),
                sig12(est.sigma.unwrap_or(0.0))
            );
            if let Some(n) = bootstrap {
                msg += &format!(
                    " (bootstrap sigma {})",
                    sig12(bootstrap_sigma(d, &recs, n, seed)?)
                );
            }
            io.note(&msg);
            let text = match out.format {
                Format::Csv => csv_text(|b| write_counts_csv(&recs, b)),
                Format::Json => to_json(&recs),
            };
            io.emit(&out, &text)
        }
        Command::FitGamma { input, out } => {
            let fit = fit_gamma(&read_rates(&input)?)?;
            let text = match out.format {
                Format::Json => to_json(&fit),
                Format::Csv => format!(
                    "gamma,amplitude,residual,log_domain,flat\n{},{},{},{},{}\n",
                    sig12(fit.gamma),
                    sig12(fit.amplitude),
                    sig12(fit.residual),
                    fit.log_domain,
                    fit.flat
                ),
            };
            io.emit(&out, &text)
        }
        Command::FilterDesign {
            d,
            gamma,
            paper_preset,
            out,
        } => {
            let file = if paper_preset {
                if d != 11 {
                    return Err(Error::InvalidArgument(
                        "the published filter is for d = 11".into(),
                    ));
                }
                let f = FilterSpec::measured_preset();
                FilterFile {
                    d: 11,
                    gamma: None,
                    diag: f.diag_a().to_vec(),
                }
            } else {
                let src = lorentzian_state(gamma, d)?;
                filter_file(&design_filter(&src)?, &src)
            };
            let text = match out.format {
                Format::Json => to_json(&file),
                Format::Csv => {
                    let spec = crate::modes::DimensionSpec::new(file.d)?;
                    let mut s = String::from("ell,amplitude\n");
                    for (l, o) in spec.ells().iter().zip(&file.diag) {
                        s += &format!("{l},{}\n", sig12(*o));
                    }
                    s
                }
            };
            io.emit(&out, &text)
        }
        Command::Witness {
            constraints,
            starts,
            seed,
            band_multiplier,
            measured,
            sigma,
            significance,
            out,
        } => {
            let mut set = match &constraints {
                Some(p) => ConstraintSet::read(p)?,
                None => paper_scenario(),
            };
            if let Some(m) = band_multiplier {
                set.band_multiplier = m;
            }
            let seed = io.seed(seed);
            let opts = WitnessOptions {
                n_starts: starts,
                seed,
                ..Default::default()
            };
            let result = maximize_s11(&set, &opts)?;
            let cert = certify_dimension(result.best_s, measured, sigma, significance);
            io.note(&format!(
                "best S_{} = {} ; measured {} +- {} is {:.2} sigma above: {}",
                result.d,
                fixed4(result.best_s),
                measured,
                sigma,
                cert.separation,
                if cert.certified {
                    "certified"
                } else {
                    "not certified"
                }
            ));
            #[derive(Serialize)]
            struct Report<'a> {
                result: &'a crate::witness::WitnessResult,
                certificate: crate::witness::Certificate,
            }
            io.emit(
                &out,
                &to_json(&Report {
                    result: &result,
                    certificate: cert,
                }),
            )
        }
        Command::Certify {
            bound,
            measured,
            sigma,
            significance,
        } => {
            let cert = certify_dimension(bound, measured, sigma, significance);
            let _ = io.stdout.write_all(to_json(&cert).as_bytes());
            Ok(())
        }
    }
}

/// Rates CSV with header `ell,rate` or `ell,rate,sigma`.
pub fn read_rates(path: &Path) -> Result<Vec<RatePoint>> {
    let text = crate::output::read_text(path)?;
    let bad = |line: usize, why: &str| {
        Error::InvalidArgument(format!("{}:{line}: {why}", path.display()))
    };
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let header = lines
        .next()
        .map(|(_, h)| h.trim().to_string())
        .unwrap_or_default();
    let with_sigma = match header.as_str() {
        "ell,rate" => false,
        "ell,rate,sigma" => true,
        _ => return Err(bad(1, "expected header ell,rate[,sigma]")),
    };
    lines
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').map(str::trim).collect();
            if f.len() != if with_sigma { 3 } else { 2 } {
                return Err(bad(i + 1, "wrong number of fields"));
            }
            let ell = f[0]
                .parse::<i32>()
                .map_err(|_| bad(i + 1, "ell must be an integer"))?;
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(i + 1, "not a number"));
            Ok(RatePoint {
                ell,
                rate: num(f[1])?,
                sigma: if with_sigma { num(f[2])? } else { 0.0 },
            })
        })
        .collect()
}
