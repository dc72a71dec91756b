use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use geocurate::config::PipelineConfig;
use geocurate::grouping::GroupingSeeds;
use geocurate::manifest::{CountryCode, Split};
use geocurate::pipeline::{self, StageIo};

/// Build, curate and evaluate country-recognition image datasets.
#[derive(Parser)]
#[command(name = "geocurate", version)]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, short, global = true, default_value = "geocurate.toml")]
    config: PathBuf,
    /// Override a config value, e.g. `--set thresholds.urban=0.6`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone, Default)]
struct Io {
    /// Input manifest (defaults to the previous stage's output).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output file (defaults to the stage's file in the work directory).
    #[arg(long)]
    output: Option<PathBuf>,
}

impl Io {
    fn stage(&self) -> StageIo {
        StageIo {
            input: self.input.clone(),
            output: self.output.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write keyword×city queries and per-city bounding boxes.
    GenQueries {
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Drop repeated query strings.
        #[arg(long)]
        dedup: bool,
        /// Only count the raw cross product.
        #[arg(long)]
        count_only: bool,
    },
    /// Assign a country to every record from its coordinates.
    AssignCountry(Io),
    /// Apply the date, grey, scene and face filters.
    Filter(Io),
    /// Resize and re-encode images for storage.
    Normalize(Io),
    /// Map countries to classes.
    Group {
        #[command(flatten)]
        io: Io,
        /// Countries merged from the start, e.g. `IT,VA` (compute mode).
        #[arg(long = "seed-group", value_name = "CODES")]
        seed_groups: Vec<String>,
        /// Countries kept as their own class (compute mode).
        #[arg(long)]
        sealed: Vec<String>,
    },
    /// Assign train/val/test per country.
    Split(Io),
    /// Write the class weight table.
    Weights(Io),
    /// Write five-crop plans for kept records.
    CropPlans {
        #[command(flatten)]
        io: Io,
        /// Limit to one split.
        #[arg(long, value_parser = parse_split)]
        split: Option<Split>,
    },
    /// Score predictions and write the accuracy report.
    Eval(Io),
    /// Write dataset statistics and re-render the accuracy table.
    Report(Io),
    /// Parse and check every configured input.
    Validate,
}

fn parse_split(s: &str) -> Result<Split, String> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        _ => Err(format!("unknown split `{s}`")),
    }
}

fn parse_codes(list: &str) -> Result<Vec<CountryCode>, String> {
    list.split(',')
        .map(|c| c.trim().parse::<CountryCode>().map_err(|_| format!("bad country code `{c}`")))
        .collect()
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).unwrap_or_default()
}

fn run(cli: &Cli) -> Result<(), String> {
    let cfg = PipelineConfig::load(&cli.config, &cli.overrides).map_err(|e| e.to_string())?;
    let err = |e: pipeline::PipelineError| e.to_string();
    match &cli.command {
        Command::GenQueries {
            out_dir,
            dedup,
            count_only,
        } => {
            let s = pipeline::gen_queries(&cfg, out_dir.as_deref(), *dedup, *count_only).map_err(err)?;
            eprintln!("gen-queries: {}", json(&s));
        }
        Command::AssignCountry(io) => {
            let s = pipeline::assign_country(&cfg, &io.stage()).map_err(err)?;
            eprintln!("assign-country: {}", json(&s));
        }
        Command::Filter(io) => {
            let r = pipeline::filter(&cfg, &io.stage()).map_err(err)?;
            eprintln!("filter: {}", json(&r));
        }
        Command::Normalize(io) => {
            let s = pipeline::normalize(&cfg, &io.stage()).map_err(err)?;
            eprintln!("normalize: {}", json(&s));
        }
        Command::Group { io, seed_groups, sealed } => {
            let mut seeds = GroupingSeeds::default();
            for g in seed_groups {
                seeds.groups.push(parse_codes(g)?);
            }
            for s in sealed {
                seeds.sealed.extend(parse_codes(s)?);
            }
            let s = pipeline::group(&cfg, &io.stage(), &seeds).map_err(err)?;
            eprintln!("group: {}", json(&s));
        }
        Command::Split(io) => {
            let c = pipeline::split(&cfg, &io.stage()).map_err(err)?;
            eprintln!("split: {}", json(&c));
        }
        Command::Weights(io) => {
            let t = pipeline::weights(&cfg, &io.stage()).map_err(err)?;
            eprintln!("weights: {} classes weighted, {} excluded", t.entries.len(), t.excluded.len());
        }
        Command::CropPlans { io, split } => {
            let n = pipeline::crop_plans(&cfg, &io.stage(), *split).map_err(err)?;
            eprintln!("crop-plans: {n} images");
        }
        Command::Eval(io) => {
            let r = pipeline::eval(&cfg, &io.stage()).map_err(err)?;
            eprint!("{}", r.to_table());
        }
        Command::Report(io) => {
            let r = pipeline::report(&cfg, &io.stage()).map_err(err)?;
            eprintln!("report: {} records, {} kept", r.records.total, r.kept.total);
        }
        Command::Validate => {
            for (item, summary) in pipeline::validate(&cfg).map_err(err)? {
                eprintln!("ok {item}: {summary}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors.
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
