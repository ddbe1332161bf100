//! Command-line driver: matrix generation, exact norms, sketching, streaming
//! updates, calibration, and the separation/distinguishing experiments.
//!
//! Conventions shared by every subcommand:
//! - data goes to stdout or the requested output file and is byte-stable
//!   across re-runs; the fully resolved configuration (and the only
//!   timestamp) goes to stderr;
//! - numeric output is printed with 12 significant digits;
//! - exit codes: 0 success, 2 validation or guard error, 3 I/O error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qpnorm::embed::{calibrate, CalibrationTable};
use qpnorm::lab::{
    distinguisher_experiment, separation_experiment, DistKind, DistributionSpec, ExactOracle,
    Sampler,
};
use qpnorm::oracles::best_oracle;
use qpnorm::rng::sample_gaussian_matrix;
use qpnorm::sketch::{self, Family, PlanOptions, Sketcher};
use qpnorm::{Error, Exponent, Matrix, SeededRng};

#[derive(Parser)]
#[command(name = "qpnorm", version, about = "Sketches and oracles for q->p matrix norms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct SeedArgs {
    /// Seed for anything random in this command.
    #[arg(long)]
    seed: Option<u64>,
    /// Draw the seed from OS entropy instead (it is still logged).
    #[arg(long, default_value_t = false)]
    entropy: bool,
}

impl SeedArgs {
    fn resolve(&self) -> Result<u64, Error> {
        match (self.seed, self.entropy) {
            (Some(s), false) => Ok(s),
            (None, true) => Ok(rand::random()),
            (Some(_), true) => Err(Error::guard(
                "seed-flags",
                "--seed and --entropy are mutually exclusive",
            )),
            (None, false) => Err(Error::guard(
                "seed-required",
                "this command is randomized: pass --seed N or --entropy",
            )),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample a matrix and write it in the text format.
    Gen {
        /// Distribution kind, or "plain" for i.i.d. uniform [-1, 1) entries.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        /// Spike scale for the planted kinds.
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        /// Rank for the rankr kinds.
        #[arg(long, default_value_t = 1)]
        r: usize,
        #[arg(long, default_value = "2")]
        p: Exponent,
        #[arg(long, default_value = "1")]
        q: Exponent,
        #[command(flatten)]
        seed: SeedArgs,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Compute the best available exact or bracketed q->p norm.
    Exact {
        #[arg(long)]
        q: Exponent,
        #[arg(long)]
        p: Exponent,
        /// Net tolerance when a net oracle is needed.
        #[arg(long, default_value_t = 0.25)]
        eps: f64,
        matrix: PathBuf,
    },
    /// Sketch a matrix and write the state file.
    Sketch {
        #[arg(long)]
        family: String,
        #[arg(long)]
        p: Exponent,
        #[arg(long)]
        q: Exponent,
        /// Rank budget for two_to_p_lowrank.
        #[arg(long)]
        r: Option<usize>,
        /// Block size for the block-sign families.
        #[arg(long, short = 'B')]
        block: Option<usize>,
        /// Rows for gaussian_vec.
        #[arg(long)]
        k: Option<usize>,
        /// Rows per copy for one_to_p (odd, >= 7).
        #[arg(long)]
        t: Option<usize>,
        #[command(flatten)]
        seed: SeedArgs,
        matrix: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Estimate the norm from a state file.
    Estimate { state: PathBuf },
    /// Apply an update stream ("i j delta" lines) to a state file.
    Stream {
        state: PathBuf,
        updates: PathBuf,
        /// Write the updated state here instead of in place.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Monte Carlo calibration of estimator constants for one exponent.
    Calibrate {
        #[arg(long)]
        p: Exponent,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[command(flatten)]
        seed: SeedArgs,
        /// Table file to create or update.
        #[arg(short, long, default_value = "calibration.txt")]
        output: PathBuf,
    },
    /// Run a separation or distinguishing experiment from a key=value config.
    Experiment {
        #[arg(long)]
        kind: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

/// 12 significant digits, plain notation for moderate magnitudes.
fn sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if (-5..=14).contains(&mag) {
        let decimals = (11 - mag).max(0) as usize;
        let s = format!("{x:.decimals$}");
        let trimmed = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        if trimmed == "-0" {
            "0".to_string()
        } else {
            trimmed
        }
    } else {
        format!("{x:.11e}")
    }
}

fn log_config(fields: &[(&str, String)]) {
    let body: Vec<String> = fields.iter().map(|(k, v)| format!("{k}={v}")).collect();
    eprintln!("config: {}", body.join(" "));
    let now = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    eprintln!("log: started unix={now}");
}

fn run(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Gen {
            kind,
            n,
            d,
            alpha,
            r,
            p,
            q,
            seed,
            output,
        } => {
            let seed = seed.resolve()?;
            log_config(&[
                ("command", "gen".into()),
                ("kind", kind.clone()),
                ("n", n.to_string()),
                ("d", d.to_string()),
                ("alpha", alpha.to_string()),
                ("r", r.to_string()),
                ("p", p.to_string()),
                ("q", q.to_string()),
                ("seed", seed.to_string()),
                ("output", output.display().to_string()),
            ]);
            let mut rng = SeededRng::new(seed);
            let a = if kind == "plain" {
                if n == 0 || d == 0 {
                    return Err(Error::guard("positive-dims", format!("got {n}x{d}")));
                }
                Matrix::from_fn(n, d, |_, _| 2.0 * rng.uniform() - 1.0)
            } else if kind == "gaussian" {
                sample_gaussian_matrix(&mut rng, n, d, 1.0)?
            } else {
                let spec = DistributionSpec::new(DistKind::parse(&kind)?, n, d)
                    .with_alpha(alpha)
                    .with_rank(r)
                    .with_exponents(q, p);
                Sampler::new(&spec)?.sample(&mut rng)
            };
            a.write_file(&output)?;
            Ok(())
        }
        Command::Exact { q, p, eps, matrix } => {
            log_config(&[
                ("command", "exact".into()),
                ("q", q.to_string()),
                ("p", p.to_string()),
                ("eps", eps.to_string()),
                ("matrix", matrix.display().to_string()),
            ]);
            let a = Matrix::read_file(&matrix)?;
            let (bracket, witness) = best_oracle(&a, q, p, eps)?;
            let w = witness.map_or("-".to_string(), |w| w.render());
            println!(
                "{} {} {} {}",
                sig12(bracket.lower),
                sig12(bracket.upper),
                bracket.method.as_str(),
                w
            );
            Ok(())
        }
        Command::Sketch {
            family,
            p,
            q,
            r,
            block,
            k,
            t,
            seed,
            matrix,
            output,
        } => {
            let seed = seed.resolve()?;
            let fam = Family::parse(&family)?;
            let a = Matrix::read_file(&matrix)?;
            let mut opts = PlanOptions::default();
            if let Some(r) = r {
                opts.rank = r;
            }
            if let Some(b) = block {
                opts.block = b;
            }
            if let Some(k) = k {
                opts.k = k;
            }
            if let Some(t) = t {
                opts.rows_per_copy = t;
            }
            let desc = sketch::plan(fam, a.rows(), a.cols(), p, q, seed, &opts)?;
            log_config(&[
                ("command", "sketch".into()),
                ("family", family.clone()),
                ("n", desc.n.to_string()),
                ("d", desc.d.to_string()),
                ("p", p.to_string()),
                ("q", q.to_string()),
                ("seed", seed.to_string()),
                ("k", desc.k().to_string()),
                ("matrix", matrix.display().to_string()),
                ("output", output.display().to_string()),
            ]);
            let sk = Sketcher::new(&desc)?;
            let state = sk.apply(&a)?;
            sketch::write_state(&desc, &state, &output)?;
            Ok(())
        }
        Command::Estimate { state } => {
            log_config(&[
                ("command", "estimate".into()),
                ("state", state.display().to_string()),
            ]);
            let (desc, st) = sketch::read_state(&state)?;
            let est = sketch::estimate(&desc, &st)?;
            let w = est.witness.map_or("-".to_string(), |w| w.render());
            let tag = if est.lower_bound_only {
                "lower_bound"
            } else {
                "estimate"
            };
            println!("{} {} {} {}", sig12(est.value), est.family.as_str(), tag, w);
            Ok(())
        }
        Command::Stream {
            state,
            updates,
            output,
        } => {
            log_config(&[
                ("command", "stream".into()),
                ("state", state.display().to_string()),
                ("updates", updates.display().to_string()),
            ]);
            let (desc, mut st) = sketch::read_state(&state)?;
            let sk = Sketcher::new(&desc)?;
            let text = std::fs::read_to_string(&updates)?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let tok: Vec<&str> = line.split_whitespace().collect();
                if tok.len() != 3 {
                    return Err(Error::Parse(format!(
                        "update line {} must be \"i j delta\", got {line:?}",
                        lineno + 1
                    )));
                }
                let i: usize = tok[0]
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad row index {:?}", tok[0])))?;
                let j: usize = tok[1]
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad column index {:?}", tok[1])))?;
                let delta: f64 = tok[2]
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad delta {:?}", tok[2])))?;
                sk.update(&mut st, i, j, delta)?;
            }
            let target = output.unwrap_or(state);
            sketch::write_state(&desc, &st, &target)?;
            Ok(())
        }
        Command::Calibrate {
            p,
            samples,
            seed,
            output,
        } => {
            let seed = seed.resolve()?;
            log_config(&[
                ("command", "calibrate".into()),
                ("p", p.to_string()),
                ("samples", samples.to_string()),
                ("seed", seed.to_string()),
                ("output", output.display().to_string()),
            ]);
            let entry = calibrate(p, samples, seed)?;
            let mut table = if output.exists() {
                CalibrationTable::read_file(&output)?
            } else {
                CalibrationTable::new()
            };
            println!(
                "{} {} {} {} {}",
                entry.p,
                sig12(entry.median_scale),
                sig12(entry.mean_scale),
                entry.samples,
                entry.seed
            );
            table.insert(entry);
            table.write_file(&output)?;
            Ok(())
        }
        Command::Experiment {
            kind,
            config,
            output,
        } => {
            let cfg = KvConfig::read(&config)?;
            run_experiment(&kind, cfg, &output)
        }
    }
}

/// Simple key=value config file: one pair per line, '#' comments.
struct KvConfig {
    values: BTreeMap<String, String>,
}

impl KvConfig {
    fn read(path: &Path) -> Result<KvConfig, Error> {
        let text = std::fs::read_to_string(path)?;
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Parse(format!(
                    "config line {} is not key=value: {raw:?}",
                    lineno + 1
                )));
            };
            values.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(KvConfig { values })
    }

    fn get(&self, key: &str) -> Result<&str, Error> {
        self.values
            .get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| Error::Parse(format!("config is missing required key {key:?}")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, Error> {
        self.get(key)?
            .parse()
            .map_err(|_| Error::Parse(format!("config key {key:?} has an invalid value")))
    }

    fn parse_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, Error> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Parse(format!("config key {key:?} has an invalid value"))),
        }
    }

    fn log_fields(&self, extra: &[(&str, String)]) {
        let mut fields: Vec<(&str, String)> = extra.to_vec();
        for (k, v) in &self.values {
            fields.push((k.as_str(), v.clone()));
        }
        log_config(&fields);
    }
}

fn run_experiment(kind: &str, cfg: KvConfig, output: &Path) -> Result<(), Error> {
    let n: usize = cfg.parse("n")?;
    let d: usize = cfg.parse_or("d", n)?;
    let r: usize = cfg.parse_or("r", 1)?;
    let alpha: f64 = cfg.parse_or("alpha", 0.0)?;
    let kappa: f64 = cfg.parse_or("kappa", 0.0)?;
    let p: Exponent = cfg.parse("p")?;
    let q: Exponent = cfg.parse("q")?;
    let trials: usize = cfg.parse("trials")?;
    let seed: u64 = cfg.parse("seed")?;

    let mut null_spec = DistributionSpec::new(DistKind::parse(cfg.get("null_kind")?)?, n, d)
        .with_rank(r)
        .with_exponents(q, p);
    null_spec.kappa = kappa;
    let mut planted_spec = DistributionSpec::new(DistKind::parse(cfg.get("planted_kind")?)?, n, d)
        .with_rank(r)
        .with_alpha(alpha)
        .with_exponents(q, p);
    planted_spec.kappa = kappa;

    let mut rng = SeededRng::new(seed);
    let report = match kind {
        "separation" => {
            let oracle = ExactOracle::parse(cfg.get("oracle")?)?;
            cfg.log_fields(&[
                ("command", "experiment".to_string()),
                ("kind", kind.to_string()),
                ("output", output.display().to_string()),
            ]);
            separation_experiment(&null_spec, &planted_spec, oracle, trials, &mut rng)?
        }
        "distinguish" => {
            let fam = Family::parse(cfg.get("family")?)?;
            let mut opts = PlanOptions::default();
            opts.rank = cfg.parse_or("rank", opts.rank)?;
            opts.block = cfg.parse_or("block", opts.block)?;
            opts.k = cfg.parse_or("k", opts.k)?;
            let (rows, cols) = null_spec.dims();
            let sketch_seed: u64 = cfg.parse_or("sketch_seed", seed ^ 0x5EC0)?;
            let desc = sketch::plan(fam, rows, cols, p, q, sketch_seed, &opts)?;
            cfg.log_fields(&[
                ("command", "experiment".to_string()),
                ("kind", kind.to_string()),
                ("sketch_k", desc.k().to_string()),
                ("output", output.display().to_string()),
            ]);
            distinguisher_experiment(&null_spec, &planted_spec, &desc, trials, &mut rng)?
        }
        other => {
            return Err(Error::Parse(format!(
                "experiment kind must be separation or distinguish, got {other:?}"
            )))
        }
    };
    std::fs::write(output, report.to_csv())?;
    println!(
        "success_rate {} gap {} threshold {}",
        sig12(report.success_rate),
        sig12(report.gap_stat),
        sig12(report.threshold)
    );
    Ok(())
}
