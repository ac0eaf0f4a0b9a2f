use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use atse::adjust::{
    atse_adjust, eca_estimate, itt_estimate, oracle_estimate, relative_effect, tse_adjust,
    AdjustmentResult, Covariate, Diagnostics, Method, RecensorPolicy,
};
use atse::bootstrap::{bootstrap_ci, BootstrapCi, BootstrapSpec};
use atse::config::{parse_rmst_policy, scenario_from_config, study_from_config};
use atse::dataio::{read_dataset_csv, write_adjusted_csv, write_dataset_csv};
use atse::error::Error;
use atse::sim::{
    simulate_external, simulate_rct, true_control_rmst, Condition, ScenarioSpec, Source,
    TrialDataset,
};
use atse::stream::StreamKey;
use atse::study::{run_study, OutputFormat};

/// Trial simulator and crossover-adjustment toolkit.
#[derive(Parser)]
#[command(name = "atse", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one RCT and one external control dataset.
    Simulate(SimulateArgs),
    /// Print the quadrature truth for a scenario configuration.
    Truth(TruthArgs),
    /// Run one adjustment method on dataset CSVs.
    Adjust(AdjustArgs),
    /// Run the replication study and write the metrics table.
    Study(StudyArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario preset 1-8.
    #[arg(long)]
    scenario: u8,
    /// Unmeasured-confounding condition A, B, or C.
    #[arg(long, default_value = "A")]
    condition: String,
    #[arg(long)]
    seed: u64,
    /// Output directory for rct.csv and external.csv.
    #[arg(long)]
    out: PathBuf,
    /// Drop the oracle-only unmeasured-factor column from the CSVs.
    #[arg(long)]
    omit_oracle_cols: bool,
}

#[derive(Args)]
struct TruthArgs {
    /// Scenario configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Horizon in days.
    #[arg(long)]
    tstar: f64,
}

#[derive(Args)]
struct AdjustArgs {
    /// One of itt, oracle, tse, atse, eca.
    #[arg(long)]
    method: String,
    #[arg(long)]
    rct: PathBuf,
    /// External control dataset (required for atse and eca).
    #[arg(long)]
    external: Option<PathBuf>,
    /// ATSE decay factor.
    #[arg(long, default_value_t = 4.0)]
    c: f64,
    #[arg(long, default_value = "switchers-only")]
    recensor: String,
    /// RMST mode: km, weibull, or hybrid.
    #[arg(long, default_value = "hybrid")]
    rmst: String,
    #[arg(long)]
    tstar: f64,
    /// Bootstrap replicate count; enables the percentile interval.
    #[arg(long)]
    bootstrap: Option<usize>,
    /// Bootstrap confidence level.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the adjusted dataset CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    /// Study configuration file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// csv, json, or md.
    #[arg(long)]
    format: Option<String>,
    /// Metrics table path; per-replication estimates go next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(error: &Error) -> u8 {
    match error {
        Error::Config(_) | Error::CsvSchema(_) | Error::InvalidSpec(_) => 2,
        Error::Io(_) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => run_simulate(args),
        Command::Truth(args) => run_truth(args),
        Command::Adjust(args) => run_adjust(args),
        Command::Study(args) => run_study_command(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn read_config_file(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn run_simulate(args: SimulateArgs) -> Result<(), Error> {
    let mut spec = ScenarioSpec::preset(args.scenario)?;
    spec.condition = Condition::parse(&args.condition)?;
    let key = StreamKey::new(args.seed);
    let rct = simulate_rct(&spec, &key)?;
    let external = simulate_external(&spec, &key)?;
    fs::create_dir_all(&args.out)?;
    let rct_path = args.out.join("rct.csv");
    let external_path = args.out.join("external.csv");
    write_dataset_csv(&rct_path, &rct, args.omit_oracle_cols)?;
    write_dataset_csv(&external_path, &external, args.omit_oracle_cols)?;
    println!("wrote {} and {}", rct_path.display(), external_path.display());
    Ok(())
}

fn run_truth(args: TruthArgs) -> Result<(), Error> {
    let spec = scenario_from_config(&read_config_file(&args.config)?)?;
    let truth = true_control_rmst(&spec, args.tstar)?;
    println!("{truth:.6}");
    Ok(())
}

#[derive(Serialize)]
struct AdjustOutput {
    #[serde(flatten)]
    diagnostics: Diagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    bootstrap: Option<BootstrapCi>,
}

fn run_adjust(args: AdjustArgs) -> Result<(), Error> {
    let rmst_policy = parse_rmst_policy(&args.rmst, None)?;
    let recensor = RecensorPolicy::parse(&args.recensor)?;
    let covariates = Covariate::defaults();
    let t_star = args.tstar;

    let rct = read_dataset_csv(&args.rct)?;
    if rct.source != Source::Rct {
        return Err(Error::CsvSchema(format!(
            "{} holds external data, expected an RCT dataset",
            args.rct.display()
        )));
    }
    let external = match &args.external {
        Some(path) => {
            let ds = read_dataset_csv(path)?;
            if ds.source != Source::External {
                return Err(Error::CsvSchema(format!(
                    "{} holds RCT data, expected an external dataset",
                    path.display()
                )));
            }
            Some(ds)
        }
        None => None,
    };

    let method = match args.method.as_str() {
        "itt" => Method::Itt,
        "oracle" => Method::Oracle,
        "tse" => Method::Tse,
        "atse" => Method::Atse { c: args.c },
        "eca" => Method::Eca,
        other => return Err(Error::Config(format!("unknown method `{other}`"))),
    };
    if matches!(method, Method::Atse { .. } | Method::Eca) && external.is_none() {
        return Err(Error::Config(format!(
            "method `{}` requires --external",
            args.method
        )));
    }

    let run = |rct: &TrialDataset,
               external: Option<&TrialDataset>|
     -> Result<AdjustmentResult, Error> {
        match method {
            Method::Itt => itt_estimate(rct, rmst_policy, t_star),
            Method::Oracle => oracle_estimate(rct, rmst_policy, t_star),
            Method::Tse => tse_adjust(rct, &covariates, recensor, rmst_policy, t_star),
            Method::Atse { c } => atse_adjust(
                rct,
                external.expect("presence checked above"),
                &covariates,
                c,
                recensor,
                rmst_policy,
                t_star,
            ),
            Method::Eca => eca_estimate(
                rct,
                external.expect("presence checked above"),
                &covariates,
                rmst_policy,
                t_star,
            ),
        }
    };

    let mut result = run(&rct, external.as_ref())?;
    // The relative treatment effect needs events on both arms; leave it out
    // of the diagnostics when it is not estimable (e.g. the external-only
    // analysis carries no experimental arm).
    result.relative = relative_effect(&result.adjusted, rmst_policy, t_star).ok();

    let bootstrap = match args.bootstrap {
        Some(replicates) => {
            let spec = BootstrapSpec {
                replicates,
                level: args.level,
                stratified: true,
                seed: args.seed,
            };
            Some(bootstrap_ci(
                &rct,
                external.as_ref(),
                |r, e| run(r, e),
                |r| r.control_rmst,
                &spec,
            )?)
        }
        None => None,
    };

    if let Some(path) = &args.out {
        write_adjusted_csv(path, &result.adjusted)?;
    }
    let output = AdjustOutput { diagnostics: result.diagnostics(), bootstrap };
    println!(
        "{}",
        serde_json::to_string_pretty(&output).expect("diagnostics serialize")
    );
    Ok(())
}

fn run_study_command(args: StudyArgs) -> Result<(), Error> {
    let mut config = study_from_config(&read_config_file(&args.config)?)?;
    if let Some(reps) = args.reps {
        config.replications = reps;
    }
    if let Some(threads) = args.threads {
        config.threads = threads;
    }
    if let Some(seed) = args.seed {
        config.base_seed = seed;
    }
    if let Some(format) = &args.format {
        config.format = OutputFormat::parse(format)?;
    }
    if let Some(out) = &args.out {
        config.out = Some(out.clone());
    }
    config.validate()?;
    let out = config.out.clone().ok_or_else(|| {
        Error::Config("no output path: set `out` in the config or pass --out".into())
    })?;

    let output = run_study(&config)?;
    fs::write(&out, output.render(config.format))?;
    let replicates_path = replicates_sibling(&out);
    fs::write(&replicates_path, output.render_replicates_csv())?;
    println!(
        "wrote {} cells to {} (replicates: {})",
        output.cells.len(),
        out.display(),
        replicates_path.display()
    );
    Ok(())
}

fn replicates_sibling(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "study".to_string());
    out.with_file_name(format!("{stem}_replicates.csv"))
}
