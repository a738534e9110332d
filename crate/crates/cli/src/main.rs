use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use lmpinfer::case::write_native_case;
use lmpinfer::dispatch::{generate_dataset, DatasetOptions, SolverKind};
use lmpinfer::harness::{
    load_case, merge_reports, run_experiment, save_dataset, CaseFormat, ExperimentConfig, ExperimentReport,
    ScenarioSelector,
};
use lmpinfer::scenario1::{Scenario1Params, BIND_TOL, MARGIN_PU, MIN_GAP_PU};
use lmpinfer::scenario2::{Scenario2Params, DEFAULT_A_MAX, DEFAULT_BUDGET, DEFAULT_MAX_ITER, DEFAULT_TOL};

#[derive(Parser)]
#[command(name = "lmpinfer", version, about = "Generate market datasets and infer generator costs from LMPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a case file to the native JSON format.
    Parse {
        #[command(flatten)]
        case: CaseArgs,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a dataset (CSV plus metadata) from a case.
    GenData {
        #[command(flatten)]
        case: CaseArgs,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-generator attack on an existing dataset.
    AttackIndividual {
        #[command(flatten)]
        input: AttackInput,
        #[command(flatten)]
        s1: Scenario1Args,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate attack on an existing dataset.
    AttackAggregate {
        #[command(flatten)]
        input: AttackInput,
        #[command(flatten)]
        s2: Scenario2Args,
        /// Seed of the pair search.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge report files (or run directories) into one summary CSV.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full pipeline: generate (or load) a dataset and run the attacks.
    Run {
        #[command(flatten)]
        case: CaseArgs,
        #[command(flatten)]
        data: DataArgs,
        /// Use this dataset instead of generating one.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ScenarioArg::Both)]
        scenario: ScenarioArg,
        #[command(flatten)]
        s1: Scenario1Args,
        #[command(flatten)]
        s2: Scenario2Args,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct CaseArgs {
    #[arg(long)]
    case: PathBuf,
    /// Defaults to `matpower` for `.m` files, `native` otherwise.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long, value_enum, default_value_t = SolverArg::Ed)]
    solver: SolverArg,
    #[arg(long, default_value_t = 200)]
    points: usize,
    /// Half-width of the uniform load range as a fraction of nominal.
    #[arg(long, default_value_t = 0.2)]
    range: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct AttackInput {
    /// Dataset CSV; metadata is read from the sibling `.meta.json`.
    #[arg(long)]
    dataset: PathBuf,
    /// Case used for ground-truth metrics and the interior filter.
    #[arg(long)]
    case: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Args)]
struct Scenario1Args {
    #[arg(long, default_value_t = MARGIN_PU)]
    margin_pu: f64,
    #[arg(long, default_value_t = MIN_GAP_PU)]
    min_gap_pu: f64,
    #[arg(long, default_value_t = BIND_TOL)]
    bind_tol: f64,
}

#[derive(Args)]
struct Scenario2Args {
    #[arg(long, default_value_t = DEFAULT_A_MAX)]
    a_max: f64,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
    /// Random point pairs drawn in the pair search.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: usize,
    /// Run the iteration even when convergence is not guaranteed.
    #[arg(long)]
    force_unguaranteed: bool,
    /// Comma-separated initial coefficients (default a_max/2 each).
    #[arg(long, value_delimiter = ',')]
    init: Option<Vec<f64>>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Matpower,
    Native,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Ed,
    Dcopf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    Individual,
    Aggregate,
    Both,
}

impl From<FormatArg> for CaseFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Matpower => CaseFormat::Matpower,
            FormatArg::Native => CaseFormat::Native,
        }
    }
}

impl From<SolverArg> for SolverKind {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Ed => SolverKind::EconomicDispatch,
            SolverArg::Dcopf => SolverKind::DcOpf,
        }
    }
}

impl From<ScenarioArg> for ScenarioSelector {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::Individual => ScenarioSelector::Individual,
            ScenarioArg::Aggregate => ScenarioSelector::Aggregate,
            ScenarioArg::Both => ScenarioSelector::Both,
        }
    }
}

impl Scenario1Args {
    fn params(&self) -> Scenario1Params {
        Scenario1Params {
            margin_pu: self.margin_pu,
            min_gap_pu: self.min_gap_pu,
            bind_tol: self.bind_tol,
            ..Scenario1Params::default()
        }
    }
}

impl Scenario2Args {
    fn params(&self, seed: u64) -> Scenario2Params {
        Scenario2Params {
            a_max: self.a_max,
            tol: self.tol,
            max_iter: self.max_iter,
            budget: self.budget,
            seed,
            force: self.force_unguaranteed,
            init: self.init.clone(),
        }
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| anyhow!("writing {}: {e}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn attack_config(input: &AttackInput, out: &Path, scenario: ScenarioSelector) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(PathBuf::new(), out);
    cfg.case_path = input.case.clone();
    cfg.case_format = input.format.map(Into::into);
    cfg.dataset_path = Some(input.dataset.clone());
    cfg.scenario = scenario;
    cfg
}

fn summarize(report: &ExperimentReport, out: &Path) {
    if let Some(r) = &report.scenario1 {
        let recovered = r.generators.iter().filter(|g| g.recovered().is_some()).count();
        println!("per-generator: {recovered}/{} generators recovered", r.generators.len());
    }
    if let Some(r) = &report.scenario2 {
        let c = &r.conditions;
        println!(
            "aggregate: conditions {} (a_min {}, identifiable {}), ran {}, converged {}",
            if c.overall { "hold" } else { "fail" },
            c.a_min.map_or("undefined".into(), |v| format!("{v:.6}")),
            c.identifiability_ok,
            r.ran,
            r.result.as_ref().is_some_and(|x| x.converged)
        );
    }
    if let Some(m) = &report.metrics {
        if let Some(s) = &m.scenario1 {
            println!("per-generator mse_a {:?} mse_b {:?}", s.mse_a, s.mse_b);
        }
        if let Some(s) = &m.scenario2 {
            println!("aggregate mse_a {:?} after {:?} iterations", s.mse_a, s.iterations);
        }
    }
    println!("wrote {}", out.display());
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Parse { case, out } => {
            let grid = load_case(&case.case, case.format.map(Into::into))?;
            write_or_print(out.as_deref(), &write_native_case(&grid))?;
        }
        Command::GenData { case, data, out } => {
            let grid = load_case(&case.case, case.format.map(Into::into))?;
            let opts = DatasetOptions::new(data.points, data.range, data.seed, data.solver.into());
            info!("generating {} points", data.points);
            let ds = generate_dataset(&grid, &opts).map_err(lmpinfer::Error::from)?;
            let csv = save_dataset(&ds, &out)?;
            println!("wrote {} ({} points, {} redraws)", csv.display(), ds.points.len(), ds.meta.retries);
        }
        Command::AttackIndividual { input, s1, out } => {
            let mut cfg = attack_config(&input, &out, ScenarioSelector::Individual);
            cfg.scenario1 = s1.params();
            let report = run_experiment(&cfg)?;
            summarize(&report, &out);
        }
        Command::AttackAggregate { input, s2, seed, out } => {
            let mut cfg = attack_config(&input, &out, ScenarioSelector::Aggregate);
            cfg.scenario2 = s2.params(seed);
            let report = run_experiment(&cfg)?;
            summarize(&report, &out);
        }
        Command::Report { runs, out } => {
            write_or_print(out.as_deref(), &merge_reports(&runs)?)?;
        }
        Command::Run {
            case,
            data,
            dataset,
            scenario,
            s1,
            s2,
            out,
        } => {
            let mut cfg = ExperimentConfig::new(case.case, &out);
            cfg.case_format = case.format.map(Into::into);
            cfg.dataset_path = dataset;
            cfg.solver = data.solver.into();
            cfg.n_points = data.points;
            cfg.range_fraction = data.range;
            cfg.seed = data.seed;
            cfg.scenario = scenario.into();
            cfg.scenario1 = s1.params();
            cfg.scenario2 = s2.params(data.seed);
            let report = run_experiment(&cfg)?;
            summarize(&report, &out);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Messages already embed their causes.
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
