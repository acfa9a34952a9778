use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use geordd::io::config::seed_from_env;
use geordd::io::report::{
    write_confounding_csv, write_lates_csv, write_placebo_csv, write_power_csv, write_sentinels_csv, write_tests_csv,
    write_to, write_wiggly_csv, SimMetadata,
};
use geordd::io::{run_pipeline_until, run_placebo, AnalysisConfig, Stage};
use geordd::late::Scheme;
use geordd::sims::{
    sim_confounding, sim_power, sim_wiggly, ConfoundingConfig, PowerConfig, WigglyScenario, DEFAULT_WIGGLE_GRID,
};
use geordd::testing::TestMethod;

#[derive(Parser)]
#[command(name = "geordd", version, about = "Gaussian-process regression discontinuity along geographic borders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit hyperparameters.
    Fit(StageArgs),
    /// Fit, then estimate the effect at sentinels along the border.
    Cliff(StageArgs),
    /// Everything up to the local average treatment effects.
    Late(StageArgs),
    /// The full analysis including hypothesis tests.
    Test(StageArgs),
    /// Tests across straight placebo borders inside one region.
    Placebo(PlaceboArgs),
    /// Simulation studies.
    #[command(subcommand)]
    Simulate(Simulation),
}

#[derive(Args)]
struct StageArgs {
    /// Analysis configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Overrides the configured seed. GEORDD_SEED is used when neither is set.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sentinels: Option<usize>,
    /// Comma-separated, e.g. `unif,inv`.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<Scheme>>,
    /// Comma-separated, e.g. `inv_analytic,mll_bootstrap`.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<TestMethod>>,
    /// Bootstrap draws.
    #[arg(long)]
    draws: Option<usize>,
    /// Include the full sentinel covariance in the report.
    #[arg(long)]
    full_covariance: bool,
    /// JSON report; `-` for stdout.
    #[arg(short, long, default_value = "-")]
    out: PathBuf,
    #[arg(long)]
    sentinels_csv: Option<PathBuf>,
    #[arg(long)]
    lates_csv: Option<PathBuf>,
    #[arg(long)]
    tests_csv: Option<PathBuf>,
}

#[derive(Args)]
struct PlaceboArgs {
    #[arg(short, long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Region label to split.
    #[arg(long)]
    region: String,
    /// Comma-separated angles in degrees; defaults to 1, 2, ..., 180.
    #[arg(long, value_delimiter = ',')]
    angles: Option<Vec<f64>>,
    #[arg(long, default_value = "inv_analytic")]
    method: TestMethod,
    #[arg(long, default_value_t = 1000)]
    draws: usize,
    /// CSV with one row per angle; `-` for stdout.
    #[arg(short, long, default_value = "-")]
    out: PathBuf,
}

#[derive(Args)]
struct SimOutput {
    /// Required unless GEORDD_SEED is set.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV table; `-` for stdout.
    #[arg(short, long, default_value = "-")]
    out: PathBuf,
    /// JSON sidecar with the seed and settings.
    #[arg(long)]
    meta: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Simulation {
    /// Distance-based RDD against the inverse-variance estimate under confounding.
    Confounding {
        #[arg(long, default_value_t = 3.0)]
        alpha: f64,
        #[arg(long, default_value_t = 20_000)]
        n: usize,
        #[command(flatten)]
        output: SimOutput,
    },
    /// Estimator means as the border gets more jagged.
    Wiggly {
        #[arg(long, default_value_t = 500)]
        n_sims: usize,
        /// Comma-separated wiggle counts.
        #[arg(long, value_delimiter = ',')]
        wiggles: Option<Vec<usize>>,
        #[arg(long)]
        tooth_height: Option<f64>,
        #[command(flatten)]
        output: SimOutput,
    },
    /// Rejection rates of the tests on a lattice layout.
    Power {
        #[arg(long, default_value_t = 1.2)]
        effect: f64,
        #[arg(long, default_value_t = 1000)]
        n_sims: usize,
        #[arg(long, default_value_t = 500)]
        draws: usize,
        #[arg(long, default_value_t = 0.05)]
        level: f64,
        #[command(flatten)]
        output: SimOutput,
    },
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<AnalysisConfig> {
    let mut cfg = AnalysisConfig::from_file(path)?;
    if seed.is_some() {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run_stage(args: &StageArgs, stage: Stage) -> Result<()> {
    let mut cfg = load_config(&args.config, args.seed)?;
    if let Some(r) = args.sentinels {
        cfg.cliff.sentinels = r;
    }
    if let Some(s) = &args.schemes {
        cfg.late.schemes = s.clone();
    }
    if let Some(m) = &args.methods {
        cfg.tests.methods = m.clone();
    }
    if let Some(b) = args.draws {
        cfg.tests.draws = b;
    }
    cfg.cliff.full_covariance |= args.full_covariance;

    let report = run_pipeline_until(&cfg, stage)?;
    write_to(&args.out, |w| {
        let mut s = report.to_json()?;
        s.push('\n');
        w.write_all(s.as_bytes())?;
        Ok(())
    })?;
    if let (Some(path), Some(cliff)) = (&args.sentinels_csv, &report.cliff) {
        write_to(path, |w| write_sentinels_csv(w, &cliff.sentinels))?;
    }
    if let Some(path) = &args.lates_csv {
        if stage >= Stage::Late {
            write_to(path, |w| write_lates_csv(w, &report.lates))?;
        }
    }
    if let Some(path) = &args.tests_csv {
        if stage >= Stage::Test {
            write_to(path, |w| write_tests_csv(w, &report.tests))?;
        }
    }
    Ok(())
}

fn run_placebo_cmd(args: &PlaceboArgs) -> Result<()> {
    let cfg = load_config(&args.config, args.seed)?;
    let angles = args.angles.clone().unwrap_or_else(|| (1..=180).map(f64::from).collect());
    let report = run_placebo(&cfg, &args.region, &angles, args.method, args.draws)?;
    write_to(&args.out, |w| write_placebo_csv(w, &report))?;
    let failed = report.entries.iter().filter(|e| e.p_value.is_none()).count();
    eprintln!("p-value histogram (10 bins): {:?}", report.histogram);
    if failed > 0 {
        eprintln!("{failed} of {} angles failed", report.entries.len());
    }
    eprintln!("note: {}", report.note);
    Ok(())
}

fn sim_seed(out: &SimOutput) -> Result<u64> {
    match out.seed {
        Some(s) => Ok(s),
        None => seed_from_env()?.context("simulations need --seed or GEORDD_SEED"),
    }
}

fn write_meta(out: &SimOutput, meta: SimMetadata) -> Result<()> {
    if let Some(path) = &out.meta {
        let mut s = serde_json::to_string_pretty(&meta)?;
        s.push('\n');
        std::fs::write(path, s).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

fn run_simulation(sim: &Simulation) -> Result<()> {
    match sim {
        Simulation::Confounding { alpha, n, output } => {
            let seed = sim_seed(output)?;
            let cfg = ConfoundingConfig { alpha: *alpha, n: *n, ..Default::default() };
            let r = sim_confounding(&cfg, seed)?;
            write_to(&output.out, |w| write_confounding_csv(w, &r))?;
            write_meta(output, SimMetadata::new("confounding", seed, 1, &cfg)?)
        }
        Simulation::Wiggly { n_sims, wiggles, tooth_height, output } => {
            let seed = sim_seed(output)?;
            let mut scenario = WigglyScenario::default();
            if let Some(h) = tooth_height {
                scenario.tooth_height = *h;
            }
            let wiggles = wiggles.clone().unwrap_or_else(|| DEFAULT_WIGGLE_GRID.to_vec());
            let table = sim_wiggly(&scenario, &wiggles, *n_sims, seed)?;
            write_to(&output.out, |w| write_wiggly_csv(w, &table))?;
            let settings = serde_json::json!({ "scenario": scenario, "wiggles": wiggles });
            write_meta(output, SimMetadata::new("wiggly", seed, *n_sims, &settings)?)
        }
        Simulation::Power { effect, n_sims, draws, level, output } => {
            let seed = sim_seed(output)?;
            let cfg =
                PowerConfig { effect: *effect, n_sims: *n_sims, draws: *draws, level: *level, ..Default::default() };
            let r = sim_power(&cfg, seed)?;
            write_to(&output.out, |w| write_power_csv(w, &r))?;
            write_meta(output, SimMetadata::new("power", seed, *n_sims, &cfg)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Fit(a) => run_stage(a, Stage::Fit),
        Command::Cliff(a) => run_stage(a, Stage::Cliff),
        Command::Late(a) => run_stage(a, Stage::Late),
        Command::Test(a) => run_stage(a, Stage::Test),
        Command::Placebo(a) => run_placebo_cmd(a),
        Command::Simulate(s) => run_simulation(s),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
