use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use prophet_core::checks::{run_suite, Suite, REPORT_HEADER};
use prophet_core::dist::exact_expected_max;
use prophet_core::families::{eps_small_random, iid_bernoulli, random_discrete, sqrt3_example};
use prophet_core::oracle::optimal_value;
use prophet_core::policy::extract_policy;
use prophet_core::program::build_reduced;
use prophet_core::simulate::{csv_row, monte_carlo, run_pipeline, CSV_HEADER};
use prophet_core::{Instance, ModelKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Prophet secretary and free-order experiments: instance generation, exact
/// oracles, policy programs, the sample-based pipeline and property checks.
#[derive(Parser, Debug)]
#[command(name = "prophet", version)]
struct Cli {
    /// Flat `key = value` file supplying defaults for the flags below.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Arrival model: secretary, free-order or fixed-order.
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true)]
    eps: Option<f64>,
    #[arg(long, global = true)]
    episodes: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Instance file (`n s` header, then `m v1 p1 ... vm pm` per variable).
    #[arg(long, global = true)]
    instance: Option<PathBuf>,
    /// Write the output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Write the program in LP text format to this file.
    #[arg(long = "dump-lp", global = true)]
    dump_lp: Option<PathBuf>,
    /// Jitter grid size for tie-breaking in the pipeline (0 disables).
    #[arg(long, global = true)]
    smooth: Option<usize>,
    /// Number of variables for `gen`.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Success probability for `gen iid_bernoulli`.
    #[arg(long, global = true)]
    p: Option<f64>,
    /// Size of the i.i.d. prefix for `gen random_discrete`.
    #[arg(long, global = true)]
    s: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write an instance file: iid_bernoulli, sqrt3_example, random_discrete, eps_small_random.
    Gen { family: String },
    /// Optimal online value of the instance under the model.
    Oracle,
    /// Solve the reduced program of the instance.
    Lp,
    /// Sample-based pipeline evaluated by Monte Carlo on the instance.
    Pipeline,
    /// Monte Carlo of the full-information program policy.
    Simulate,
    /// Run a property suite (or `all`); exits nonzero if any case fails.
    Check { suite: String },
}

/// Flag values with config-file fallbacks.
struct Settings {
    cli: Cli,
    file: HashMap<String, String>,
}

impl Settings {
    fn load(cli: Cli) -> Result<Self> {
        let file = match &cli.config {
            Some(path) => parse_config(&fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)?,
            None => HashMap::new(),
        };
        Ok(Self { cli, file })
    }

    fn get<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.file
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| anyhow::anyhow!("config key `{key}`: {e}")))
            .transpose()
    }

    fn model(&self) -> Result<ModelKind> {
        Ok(self.get(self.cli.model.clone(), "model")?.as_deref().unwrap_or("secretary").parse()?)
    }

    fn eps(&self) -> Result<f64> {
        let eps = self.get(self.cli.eps, "eps")?.unwrap_or(0.2);
        if !(eps > 0.0 && eps <= 0.5) {
            bail!("--eps must lie in (0, 0.5], got {eps}");
        }
        Ok(eps)
    }

    fn episodes(&self) -> Result<usize> {
        let k = self.get(self.cli.episodes, "episodes")?.unwrap_or(100_000);
        if k == 0 {
            bail!("--episodes must be at least 1");
        }
        Ok(k)
    }

    fn seed(&self) -> Result<u64> {
        Ok(self.get(self.cli.seed, "seed")?.unwrap_or(1))
    }

    fn path(&self, flag: &Option<PathBuf>, key: &str) -> Result<Option<PathBuf>> {
        self.get(flag.clone(), key)
    }

    fn instance(&self) -> Result<Instance> {
        let path = self.path(&self.cli.instance, "instance")?.context("--instance is required")?;
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        Instance::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    fn emit(&self, text: &str) -> Result<()> {
        match self.path(&self.cli.out, "out")? {
            Some(path) => write_file(&path, text),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn parse_config(text: &str) -> Result<HashMap<String, String>> {
    let mut map = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .with_context(|| format!("config line {}: expected `key = value`", i + 1))?;
        map.insert(key.trim().replace('_', "-"), value.trim().to_string());
    }
    Ok(map)
}

fn gen(settings: &Settings, family: &str) -> Result<String> {
    let n = settings.get(settings.cli.n, "n")?.unwrap_or(10);
    let seed = settings.seed()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inst = match family {
        "iid_bernoulli" => iid_bernoulli(n, settings.get(settings.cli.p, "p")?.unwrap_or(0.5))?,
        "sqrt3_example" => sqrt3_example(n)?,
        "random_discrete" => {
            let s = settings.get(settings.cli.s, "s")?.unwrap_or(0);
            random_discrete(&mut rng, n, s, 3, 9)?
        }
        "eps_small_random" => eps_small_random(&mut rng, n, settings.eps()?, 3, 9)?,
        other => bail!("unknown family `{other}`"),
    };
    Ok(inst.to_text())
}

fn oracle(settings: &Settings) -> Result<String> {
    let inst = settings.instance()?;
    let model = settings.model()?;
    let emax = exact_expected_max(&inst);
    let opt = optimal_value(&inst, model)?;
    Ok(format!(
        "model,n,expected_max,optimal_value,ratio\n{model},{},{emax:.6},{opt:.6},{:.6}\n",
        inst.n(),
        opt / emax
    ))
}

fn lp(settings: &Settings) -> Result<String> {
    let inst = settings.instance()?;
    let prog = build_reduced(&inst, settings.model()?)?;
    if let Some(path) = settings.path(&settings.cli.dump_lp, "dump-lp")? {
        write_file(&path, &prog.lp.dump())?;
    }
    let start = Instant::now();
    let solved = prog.solve()?;
    let ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(format!(
        "delta,n,s,states,solve_ms\n{:.6},{},{},{},{ms:.6}\n",
        solved.delta,
        inst.n(),
        inst.num_iid_prefix(),
        prog.num_states()
    ))
}

fn pipeline(settings: &Settings) -> Result<String> {
    let inst = settings.instance()?;
    let model = settings.model()?;
    let (eps, episodes, seed) = (settings.eps()?, settings.episodes()?, settings.seed()?);
    let grid = settings.get(settings.cli.smooth, "smooth")?.unwrap_or(64);
    let out = run_pipeline(&inst, eps, model, seed, (grid > 0).then_some(grid))?;
    let stats = monte_carlo(&out.policy, &inst, model, episodes, seed)?;
    let truth = build_reduced(&inst, model)?.solve()?.delta;
    let mut text = format!("{CSV_HEADER},delta_true\n");
    writeln!(text, "{},{truth:.6}", csv_row(model, eps, inst.n(), seed, &stats, out.delta))?;
    Ok(text)
}

fn simulate(settings: &Settings) -> Result<String> {
    let inst = settings.instance()?;
    let model = settings.model()?;
    let (episodes, seed) = (settings.episodes()?, settings.seed()?);
    let solved = build_reduced(&inst, model)?.solve()?;
    let policy = extract_policy(&solved)?;
    let stats = monte_carlo(&policy, &inst, model, episodes, seed)?;
    Ok(format!("{CSV_HEADER}\n{}\n", csv_row(model, 0.0, inst.n(), seed, &stats, solved.delta)))
}

fn check(settings: &Settings, name: &str) -> Result<(String, bool)> {
    let suites: Vec<Suite> = if name == "all" { Suite::ALL.to_vec() } else { vec![name.parse()?] };
    let seed = settings.seed()?;
    let mut text = format!("{REPORT_HEADER}\n");
    let mut ok = true;
    for suite in suites {
        let report = run_suite(suite, seed)?;
        ok &= report.passed();
        // drop the per-suite header, one header for the whole table
        text.push_str(report.to_csv().split_once('\n').map_or("", |(_, rows)| rows));
    }
    Ok((text, ok))
}

fn run(cli: Cli) -> Result<bool> {
    let settings = Settings::load(cli)?;
    let (text, ok) = match &settings.cli.command {
        Command::Gen { family } => (gen(&settings, family)?, true),
        Command::Oracle => (oracle(&settings)?, true),
        Command::Lp => (lp(&settings)?, true),
        Command::Pipeline => (pipeline(&settings)?, true),
        Command::Simulate => (simulate(&settings)?, true),
        Command::Check { suite } => check(&settings, suite)?,
    };
    settings.emit(&text)?;
    Ok(ok)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
