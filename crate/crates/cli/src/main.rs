use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use scope_nav::episode::Variant;
use scope_nav::harness::{execute_run, plot_csv, report_csv, report_from_dir, RunConfig};
use scope_nav::scene::{generate_scene, load_scene, save_scene, GenParams};

#[derive(Parser)]
#[command(name = "scope", version, about = "Frontier-potential navigation simulator and batch harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
    Plot,
}

#[derive(Subcommand)]
enum Command {
    /// Generate scene files, one per seed.
    Gen {
        /// Seeds as `a..b` (exclusive) or a comma list.
        #[arg(long, default_value = "0..10")]
        seeds: String,
        #[arg(long, default_value_t = 4)]
        rooms: usize,
        #[arg(long, default_value_t = 4)]
        objects_per_room: usize,
        #[arg(long, default_value_t = 32)]
        size: usize,
        #[arg(long, default_value_t = 3)]
        goals: usize,
        #[arg(long, default_value = "scenes")]
        out: PathBuf,
    },
    /// Run a seed × variant grid and write traces plus reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `seeds` from the config.
        #[arg(long)]
        seeds: Option<String>,
        /// Overrides `variants`; repeat or comma-separate.
        #[arg(long, value_delimiter = ',')]
        variant: Vec<Variant>,
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Recompute metrics from a run directory or a directory of traces.
    Report {
        dir: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Check scene files against the scene invariants.
    Validate {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().with_context(|| format!("bad seed range start in {s:?}"))?;
        let b: u64 = b.trim().parse().with_context(|| format!("bad seed range end in {s:?}"))?;
        if a >= b {
            bail!("empty seed range {s:?}");
        }
        return Ok((a..b).collect());
    }
    let seeds = s
        .split(',')
        .filter(|x| !x.trim().is_empty())
        .map(|x| x.trim().parse::<u64>().with_context(|| format!("bad seed {x:?}")))
        .collect::<Result<Vec<_>>>()?;
    if seeds.is_empty() {
        bail!("no seeds given");
    }
    Ok(seeds)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen {
            seeds,
            rooms,
            objects_per_room,
            size,
            goals,
            out,
        } => {
            let params = GenParams {
                rooms,
                objects_per_room,
                size,
                goals,
            };
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for seed in parse_seeds(&seeds)? {
                let scene = generate_scene(seed, &params).with_context(|| format!("seed {seed}"))?;
                let path = out.join(format!("scene-{seed}.json"));
                fs::write(&path, save_scene(&scene)).with_context(|| format!("writing {}", path.display()))?;
                log::info!("wrote {}", path.display());
            }
        }
        Command::Run {
            config,
            seeds,
            variant,
            workers,
            out,
        } => {
            let text = fs::read_to_string(&config)
                .with_context(|| format!("reading config {}", config.display()))?;
            let mut cfg = RunConfig::from_json(&text)?;
            if let Some(s) = seeds {
                cfg.seeds = parse_seeds(&s)?;
            }
            if !variant.is_empty() {
                cfg.variants = variant;
            }
            cfg.validate()?;
            let (dir, report) = execute_run(&cfg, &out, workers)?;
            for (v, metrics) in &report.summary {
                let get = |m: &str| metrics.get(m).map_or(f64::NAN, |s| s.mean);
                println!(
                    "{:<18} SR {:6.2}  SPL {:6.2}  EFF {:6.2}  ECE {:6.2}",
                    v.to_string(),
                    get("sr"),
                    get("spl"),
                    get("efficiency"),
                    get("ece")
                );
            }
            for t in &report.targets {
                println!(
                    "target {:<40} {:8.3} (>= {:.3}) {}",
                    t.name,
                    t.value,
                    t.threshold,
                    if t.passed { "ok" } else { "MISSED" }
                );
            }
            println!("wrote {}", dir.display());
        }
        Command::Report { dir, format } => {
            let report = report_from_dir(&dir)?;
            match format {
                Format::Csv => print!("{}", report_csv(&report)),
                Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
                Format::Plot => print!("{}", plot_csv(&report)),
            }
        }
        Command::Validate { files } => {
            let mut failed = 0;
            for f in &files {
                let result = fs::read_to_string(f)
                    .map_err(anyhow::Error::from)
                    .and_then(|t| load_scene(&t).map_err(anyhow::Error::from));
                match result {
                    Ok(_) => println!("ok      {}", f.display()),
                    Err(e) => {
                        failed += 1;
                        println!("invalid {}: {e}", f.display());
                    }
                }
            }
            if failed > 0 {
                bail!("{failed} of {} scene files failed validation", files.len());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
