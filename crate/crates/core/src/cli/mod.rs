//! The `strategem` command line: verification suites, experiments and data
//! generation, each writing one machine-readable table.

pub mod config;
pub mod experiments;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

pub use config::{OutputFormat, Overrides, RunConfig, SEED_ENV};
pub use experiments::{policy_table, FoldAccuracy, MeanStd, PolicyTable};
pub use output::Report;

use crate::attention::InnerMode;
use crate::data::{write_csv, SyntheticConfig};
use crate::equivalence::{
    context_scaling_study, dual_track_curves, verify_alpha_simplex, verify_inner, verify_lemma, verify_outer,
    verify_softmax, CurvesConfig, EquivalenceReport, ScalingConfig,
};
use crate::error::{Error, Result};
use crate::strategic::Label;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

const FORMATS: &str = "\
CONFIGURATION
  Settings come from built-in defaults, then STRATEGEM_SEED (seed only),
  then --config, then flags. The config file is flat `key = value` TOML
  using the field names echoed in any output header. A CSV or JSON file
  previously written by this tool is also accepted as --config and
  reproduces that run.

OUTPUT FORMATS
  csv   A header block of `#` comment lines: `# strategem <command>`,
        then the effective configuration as `# key = value`. Next comes a
        comma-separated table with a header row. Whole-table summaries
        (fitted slope, fold means) follow as trailing `# key = value` lines.
  json  {\"metadata\": {\"command\", \"config\", \"summary\"}, \"rows\": [ ... ]},
        one object per table row.

TABLES
  verify               suite, instances, cosine, cosine_zero_vector, l2,
                       max_abs, tolerance, pass, homogeneity_gap,
                       gap_identity_error
  experiment curves    iter, cosine, l2, kl, mean_shift, ce_gd, ce_icl
  experiment table     fold, strategic, non_strategic (mean and std in summary)
  experiment scaling   n, median_error, samples (slope in summary)
  gendata              feature columns then label; always CSV

EXIT STATUS
  0 success, 1 verification failure, 2 usage or configuration error,
  3 I/O error";

#[derive(Debug, Parser)]
#[command(name = "strategem", version, about = "Strategic classification games and their attention-layer simulators", after_long_help = FORMATS)]
struct Cli {
    /// Flat TOML config file, or a previous output of this tool.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed; overrides STRATEGEM_SEED and the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output path; stdout when absent.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,
    /// Worker threads for suites, folds and seeds.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run dual-track identity suites; exits 1 if any suite fails.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
        /// Shift one constructed matrix entry so that the suites must fail.
        #[arg(long)]
        tamper: bool,
    },
    /// Run an experiment and write its table.
    Experiment {
        #[arg(value_enum)]
        kind: Experiment,
    },
    /// Write the configured synthetic dataset as CSV.
    Gendata,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Inner,
    Outer,
    Lemma,
    Softmax,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Curves,
    Table,
    Scaling,
}

/// Maps an error to its exit status.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => EXIT_IO,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(cli: Cli) -> Result<i32> {
    let tamper = matches!(cli.command, Command::Verify { tamper: true, .. });
    let flags = Overrides { seed: cli.seed, out: cli.out, format: cli.format, jobs: cli.jobs, tamper };
    let env_seed = std::env::var(SEED_ENV).ok();
    let cfg = RunConfig::resolve(cli.config.as_deref(), env_seed.as_deref(), &flags)?;
    let job = || match cli.command {
        Command::Verify { suite, .. } => cmd_verify(suite, &cfg),
        Command::Experiment { kind } => cmd_experiment(kind, &cfg).map(|_| EXIT_OK),
        Command::Gendata => cmd_gendata(&cfg).map(|_| EXIT_OK),
    };
    match cfg.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::config(format!("worker pool: {e}")))?
            .install(job),
        None => job(),
    }
}

fn suite_name(suite: Suite) -> &'static str {
    match suite {
        Suite::Inner => "inner",
        Suite::Outer => "outer",
        Suite::Lemma => "lemma",
        Suite::Softmax => "softmax",
        Suite::All => "all",
    }
}

/// Reports for one suite name; `all` runs every suite in a fixed order.
///
/// The inner suite covers exact and corrected modes on negative contexts,
/// the corrected mode on positive contexts, and the raw-mode gap identity.
pub fn run_suite(suite: Suite, cfg: &RunConfig) -> Result<Vec<EquivalenceReport>> {
    Ok(match suite {
        Suite::Inner => {
            let s = cfg.verify_settings(cfg.inner_instances);
            vec![
                verify_inner(&s, InnerMode::Exact, Label::Negative)?,
                verify_inner(&s, InnerMode::Corrected, Label::Negative)?,
                verify_inner(&s, InnerMode::Corrected, Label::Positive)?,
                verify_inner(&s, InnerMode::Raw, Label::Negative)?,
            ]
        }
        Suite::Outer => vec![verify_outer(&cfg.verify_settings(cfg.outer_instances))?],
        Suite::Lemma => vec![verify_lemma(&cfg.verify_settings(cfg.lemma_instances))?],
        Suite::Softmax => {
            let s = cfg.verify_settings(cfg.softmax_instances);
            vec![verify_softmax(&s)?, verify_alpha_simplex(&s)?]
        }
        Suite::All => {
            let mut all = Vec::new();
            for s in [Suite::Inner, Suite::Outer, Suite::Lemma, Suite::Softmax] {
                all.extend(run_suite(s, cfg)?);
            }
            all
        }
    })
}

pub fn cmd_verify(suite: Suite, cfg: &RunConfig) -> Result<i32> {
    let reports = run_suite(suite, cfg)?;
    for r in &reports {
        eprintln!(
            "{}: {} (error {:.3e}, tolerance {:e}, {} instances)",
            r.suite,
            if r.pass { "pass" } else { "FAIL" },
            r.gap_identity_error.unwrap_or(r.max_abs),
            r.tolerance,
            r.instances
        );
    }
    let command = format!("verify {}", suite_name(suite));
    let report = Report { command: &command, config: cfg, rows: &reports, summary: Map::new() };
    output::emit(cfg, &report.render()?)?;
    let failed: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.suite.as_str()).collect();
    if failed.is_empty() {
        Ok(EXIT_OK)
    } else {
        eprintln!("verification failed: {}", failed.join(", "));
        Ok(EXIT_VERIFY_FAILED)
    }
}

fn summary(entries: Vec<(&str, Value)>) -> Map<String, Value> {
    entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Renders the table for `kind` without writing it anywhere.
pub fn render_experiment(kind: Experiment, cfg: &RunConfig) -> Result<Vec<u8>> {
    match kind {
        Experiment::Curves => {
            let data = cfg.load_dataset()?;
            let curves = CurvesConfig { bilevel: cfg.bilevel(data.dim())?, window_step: cfg.window_step };
            let rows = dual_track_curves(&data.examples, &curves, cfg.seed)?;
            let last = rows.last().expect("curves always hold the initial row");
            let summary = summary(vec![("final_cosine", json!(last.cosine)), ("final_l2", json!(last.l2))]);
            Report { command: "experiment curves", config: cfg, rows: &rows, summary }.render()
        }
        Experiment::Table => {
            let data = cfg.load_dataset()?;
            let table = policy_table(&data, &cfg.bilevel(data.dim())?, cfg.folds, cfg.seed)?;
            let summary = summary(vec![
                ("strategic_mean", json!(table.strategic.mean)),
                ("strategic_std", json!(table.strategic.std)),
                ("non_strategic_mean", json!(table.non_strategic.mean)),
                ("non_strategic_std", json!(table.non_strategic.std)),
                ("gap", json!(table.gap())),
            ]);
            Report { command: "experiment table", config: cfg, rows: &table.folds, summary }.render()
        }
        Experiment::Scaling => {
            let population = SyntheticConfig {
                positive_fraction: cfg.positive_fraction,
                ..SyntheticConfig::symmetric(
                    cfg.d,
                    cfg.n,
                    cfg.class_offset,
                    cfg.scaling_class_scale,
                    cfg.seed,
                )
            };
            let study = ScalingConfig {
                population,
                manipulation: cfg.manipulation(cfg.d)?,
                queries_per_seed: cfg.scaling_queries,
                seed: cfg.seed,
            };
            let table = context_scaling_study(&cfg.scaling_ns, cfg.scaling_seeds, &study)?;
            Report {
                command: "experiment scaling",
                config: cfg,
                rows: &table.rows,
                summary: summary(vec![("slope", json!(table.slope))]),
            }
            .render()
        }
    }
}

pub fn cmd_experiment(kind: Experiment, cfg: &RunConfig) -> Result<()> {
    output::emit(cfg, &render_experiment(kind, cfg)?)
}

/// The configured synthetic draw as CSV, headed by the configuration.
pub fn render_gendata(cfg: &RunConfig) -> Result<Vec<u8>> {
    if cfg.format != OutputFormat::Csv {
        return Err(Error::config("gendata writes CSV only"));
    }
    let data = crate::data::gen_synthetic(&cfg.synthetic_config())?;
    let mut out = Vec::new();
    output::write_header(&mut out, "gendata", cfg)?;
    write_csv(&data, &mut out)?;
    Ok(out)
}

pub fn cmd_gendata(cfg: &RunConfig) -> Result<()> {
    output::emit(cfg, &render_gendata(cfg)?)
}
