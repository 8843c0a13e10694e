use std::path::PathBuf;
use std::process;

use clap::{Args, Parser, Subcommand};

use tikhoflow_cli::config::{self, FlatConfig};
use tikhoflow_cli::pipeline::{self, Outcome};
use tikhoflow_cli::presets::{self, Preset};
use tikhoflow_cli::{compare, CliError};
use tikhoflow_core::schedules::{check_hbeta, log_grid, suggest_mu};

#[derive(Parser)]
#[command(
    name = "tikhoflow",
    version,
    about = "Simulate Tikhonov-regularized gradient flows and verify their convergence rates"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate one system; write CSV, SVG plots, and a JSON manifest
    Run(CommonArgs),
    /// Run several systems on one problem and overlay the diagnostics
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Worker threads (default: available parallelism)
        #[arg(long, value_name = "N")]
        workers: Option<usize>,
    },
    /// Check the growth hypotheses for a schedule; exit 0 iff they hold
    Checkschedule(CommonArgs),
    /// Inspect built-in experiment presets
    Presets {
        #[command(subcommand)]
        cmd: PresetsCmd,
    },
}

#[derive(Subcommand)]
enum PresetsCmd {
    /// Print the preset catalog
    List,
}

#[derive(Args)]
struct CommonArgs {
    /// Flat key=value config file (repeatable; later files override)
    #[arg(long = "config", value_name = "PATH")]
    configs: Vec<PathBuf>,
    /// Built-in preset name (see `presets list`)
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Override one key, KEY=VALUE (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory (default: $TIKHOFLOW_OUT, then ./out)
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

impl CommonArgs {
    fn out_dir(&self) -> PathBuf {
        if let Some(dir) = &self.out {
            return dir.clone();
        }
        if let Ok(dir) = std::env::var("TIKHOFLOW_OUT") {
            if !dir.is_empty() {
                return PathBuf::from(dir);
            }
        }
        PathBuf::from("out")
    }

    /// preset < config files < --set, later entries winning.
    fn single_config(&self) -> Result<FlatConfig, CliError> {
        let mut cfg = FlatConfig::new();
        if let Some(name) = &self.preset {
            match presets::lookup(name) {
                Some(Preset::Run(preset)) => cfg.merge_from(&preset),
                Some(Preset::Compare(_)) => {
                    return Err(CliError::Config(format!(
                        "preset {name:?} is a comparison suite; use the compare subcommand"
                    )))
                }
                None => return Err(unknown_preset(name)),
            }
        }
        for path in &self.configs {
            cfg.merge_from(&FlatConfig::parse_file(path)?);
        }
        for spec in &self.sets {
            cfg.apply_override(spec)?;
        }
        if cfg.is_empty() {
            return Err(CliError::Config(
                "nothing to do: pass --preset, --config, or --set keys".into(),
            ));
        }
        Ok(cfg)
    }

    fn member_configs(&self) -> Result<Vec<FlatConfig>, CliError> {
        let mut members = Vec::new();
        if let Some(name) = &self.preset {
            match presets::lookup(name) {
                Some(Preset::Compare(cfgs)) => members.extend(cfgs),
                Some(Preset::Run(_)) => {
                    return Err(CliError::Config(format!(
                        "preset {name:?} is a single run; use the run subcommand or add --config members"
                    )))
                }
                None => return Err(unknown_preset(name)),
            }
        }
        for path in &self.configs {
            members.push(FlatConfig::parse_file(path)?);
        }
        for member in &mut members {
            for spec in &self.sets {
                member.apply_override(spec)?;
            }
        }
        Ok(members)
    }
}

fn unknown_preset(name: &str) -> CliError {
    let known: Vec<&str> = presets::CATALOG.iter().map(|(n, _)| *n).collect();
    CliError::Config(format!(
        "unknown preset {name:?}; available: {}",
        known.join(", ")
    ))
}

fn main() {
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    process::exit(code);
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.cmd {
        Cmd::Run(args) => cmd_run(args),
        Cmd::Compare { common, workers } => cmd_compare(common, workers),
        Cmd::Checkschedule(args) => cmd_checkschedule(args),
        Cmd::Presets { cmd: PresetsCmd::List } => {
            for (name, description) in presets::CATALOG {
                println!("{name:<17} {description}");
            }
            Ok(0)
        }
    }
}

fn cmd_run(args: CommonArgs) -> Result<i32, CliError> {
    let setup = config::resolve(&args.single_config()?)?;
    let out_dir = args.out_dir();
    let output = pipeline::execute(&setup, &out_dir)?;
    let m = &output.manifest;
    println!(
        "{}: ok ({} samples, {} accepted steps, method {}, {:.2} s)",
        m.label,
        m.sample_count,
        m.accepted_steps,
        m.method.unwrap_or("-"),
        m.wall_time_s
    );
    for (name, fit) in &m.rate_fits {
        match fit {
            Outcome::Ok(f) => println!(
                "  {name} vs {}: slope {:.4} over t in [{:.3e}, {:.3e}]",
                f.regressor.name(),
                f.slope,
                f.window.0,
                f.window.1
            ),
            Outcome::Err { error } => println!("  {name}: no rate ({error})"),
        }
    }
    if let Some(bound) = &m.energy_bound {
        match bound {
            Outcome::Ok(b) => println!(
                "  energy bound: {} (mu = {:.4}, fitted M = {:.4e})",
                if b.pass { "holds" } else { "violated" },
                b.mu,
                b.fitted_m
            ),
            Outcome::Err { error } => println!("  energy bound: not checked ({error})"),
        }
    }
    println!("  outputs: {}", out_dir.display());
    Ok(0)
}

fn cmd_compare(args: CommonArgs, workers: Option<usize>) -> Result<i32, CliError> {
    let members: Vec<_> = args
        .member_configs()?
        .iter()
        .map(config::resolve)
        .collect::<Result<_, _>>()?;
    let workers = workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(CliError::Config("--workers must be at least 1".into()));
    }
    let out_dir = args.out_dir();
    let summary = compare::execute(members, workers, &out_dir)?;
    for r in &summary.results {
        match &r.outcome {
            Ok(rows) => println!("{}: ok ({} samples)", r.label, rows.len()),
            Err(e) => println!("{}: failed ({e})", r.label),
        }
    }
    println!(
        "compared {} systems ({} failed); combined table: {}",
        summary.results.len(),
        summary.failed_count(),
        summary.combined_csv.display()
    );
    Ok(0)
}

fn cmd_checkschedule(args: CommonArgs) -> Result<i32, CliError> {
    let cfg = args.single_config()?;
    let check = config::resolve_check(&cfg)?;
    let grid = log_grid(10.0, 1e6, 400).expect("static grid");
    let mu = check.mu.unwrap_or(check.c / 2.0);
    let report = check_hbeta(&check.schedule, check.c, mu, &grid)?;
    let suggested = suggest_mu(&check.schedule, check.c, &grid).ok();
    let doc = serde_json::json!({
        "report": report,
        "suggested_mu": suggested,
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&doc).expect("report serializes")
    );
    Ok(if report.verdict { 0 } else { 1 })
}
