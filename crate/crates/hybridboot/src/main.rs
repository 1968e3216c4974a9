use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use hybridboot::commands::{execute, CORRELATE_COLUMNS, GRADNORM_COLUMNS, SIZES_COLUMNS, SWEEP_COLUMNS, TRAIN_COLUMNS};
use hybridboot::config::{self, Command};
use hybridboot::csv_io::{encode_csv, write_csv};
use hybridboot::Error;

const AFTER_HELP: &str = "\
Commands:
  train      train one model, write per-epoch metrics, optionally a checkpoint
  sweep      train per level in sweep.grid, as sampled bound and fixed level
  sizes      hybrid vs dropout over the training-set sizes in sizes.sizes
  gradnorm   after training, per-example corruption level vs gradient norm
  correlate  median absolute filter correlation per conv layer and seed
  expand     write a corrupted expansion of a CSV table

Metric columns (schema v1, in order):
  train      {train}
  sweep      {sweep}
  sizes      {sizes}
  gradnorm   {gradnorm}
  correlate  {correlate}
  expand     the input table's columns

Empty metric cells mean \"not measured\"; a failed grid point keeps its row
with the reason in `status`.

Config keys (INI sections): run.{seed,seeds,out,checkpoint,version},
data.{images,labels,test_images,test_labels,n,test_limit},
model.{arch,hidden,input_u}, corruption.{scheme,structure,u,fixed_p,normalize},
train.{batch_size,epochs,lr,lr_schedule,momentum_schedule,weight_decay,eval_every},
sweep.{grid,modes}, sizes.{sizes,hybrid_u,dropout_u,steps}, correlate.probe,
expand.{input,target,scheme,u,factor,include_originals,fixed_p}.
Relative paths resolve against the config file's directory.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical divergence.";

#[derive(Parser, Debug)]
#[command(name = "hybridboot", version, about = "Hybrid bootstrap and dropout experiments")]
struct Cli {
    /// train | sweep | sizes | gradnorm | correlate | expand
    command: String,
    /// INI experiment configuration
    config: PathBuf,
    /// Override a config value, e.g. --set train.epochs=20
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Metrics destination (default run.out, else stdout)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Same as --set run.seed=N
    #[arg(long)]
    seed: Option<u64>,
}

fn after_help() -> String {
    let j = |c: &[&str]| c.join(",");
    AFTER_HELP
        .replace("{train}", &j(TRAIN_COLUMNS))
        .replace("{sweep}", &j(SWEEP_COLUMNS))
        .replace("{sizes}", &j(SIZES_COLUMNS))
        .replace("{gradnorm}", &j(GRADNORM_COLUMNS))
        .replace("{correlate}", &j(CORRELATE_COLUMNS))
}

fn main_inner(cli: Cli) -> Result<(), Error> {
    let command: Command = cli.command.parse()?;
    let mut overrides = cli.set;
    if let Some(seed) = cli.seed {
        overrides.push(format!("run.seed={seed}"));
    }
    let cfg = config::load(command, &cli.config, &overrides)?;
    let table = execute(&cfg)?.table();
    match cli.out.or(cfg.out) {
        Some(path) => write_csv(&table, path),
        None => std::io::stdout()
            .write_all(&encode_csv(&table))
            .map_err(|e| Error::Io {
                path: "<stdout>".into(),
                source: e,
            }),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse_from_with_help() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hybridboot: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

trait ParseWithHelp: Sized {
    fn try_parse_from_with_help() -> Result<Self, clap::Error>;
}

impl ParseWithHelp for Cli {
    fn try_parse_from_with_help() -> Result<Self, clap::Error> {
        use clap::{CommandFactory, FromArgMatches};
        let matches = Cli::command().after_help(after_help()).try_get_matches()?;
        Cli::from_arg_matches(&matches)
    }
}
