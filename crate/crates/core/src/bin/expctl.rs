use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};

use featlearn::config::{self, PRESETS};
use featlearn::expctl::{cmd_figure1, cmd_run, cmd_verify, parse_seeds, VerifyOptions};
use featlearn::gradcheck::Fault;
use featlearn::trainer::{check_assumptions, Mode, TrainConfig};
use featlearn::Result;

#[derive(Parser)]
#[command(name = "expctl", version, about = "Run contrastive feature-learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train each seed and write trace, summary and manifest files.
    Run(Common),
    /// Run both modes and write the four panel CSVs.
    Figure1(Common),
    /// Print the pass/fail table of gradient, ledger and lemma checks.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Add 1e-3 to one analytic gradient entry (exercises the checker).
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

#[derive(Args)]
struct Common {
    /// Named preset: figure1 or theory.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<Mode>,
    /// Comma list (0,1,2) or range (0..3).
    #[arg(long, default_value = "0,1,2")]
    seeds: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    log_every: Option<usize>,
    #[arg(long)]
    probe_every: Option<usize>,
    /// Seeds run in parallel.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

impl Common {
    fn resolve(&self) -> Result<(String, TrainConfig, Vec<u64>)> {
        let (name, mut cfg) = match &self.config {
            Some(path) => {
                let loaded = config::load(path, self.mode)?;
                (path.display().to_string(), loaded.config)
            }
            None => {
                let name = self.preset.clone().unwrap_or_else(|| "figure1".to_string());
                let cfg = config::preset(&name, self.mode.unwrap_or(Mode::Multi))?;
                (name, cfg)
            }
        };
        if let Some(k) = self.log_every {
            cfg.log_every = k;
        }
        if let Some(k) = self.probe_every {
            cfg.probe_every = k;
        }
        cfg.validate()?;
        Ok((name, cfg, parse_seeds(&self.seeds)?))
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run(c) => {
            let (name, cfg, seeds) = c.resolve()?;
            for w in check_assumptions(&cfg).warnings() {
                eprintln!("warning: assumption {} = {} ({})", w.name, w.value, w.expect);
            }
            let report = cmd_run(&cfg, &name, &seeds, &c.out, c.threads)?;
            for (seed, r) in &report.outcomes {
                match r {
                    Ok(o) => println!(
                        "{} seed {seed}: loss {:.6} -> {:.6}, accuracy {:.4}",
                        cfg.mode,
                        o.initial_loss,
                        o.final_loss(),
                        o.final_accuracy()
                    ),
                    Err(e) => eprintln!("{} seed {seed}: {e}", cfg.mode),
                }
            }
            if let Some(acc) = report.mean_final_accuracy() {
                println!("mean final accuracy {acc:.4}");
            }
            Ok(report.all_ok())
        }
        Command::Figure1(c) => {
            let (name, cfg, seeds) = c.resolve()?;
            let report = cmd_figure1(&cfg, &name, &seeds, &c.out, c.threads)?;
            for p in &report.panels {
                println!("{}", p.display());
            }
            Ok(true)
        }
        Command::Verify { common, inject_fault } => {
            let (_, cfg, seeds) = common.resolve()?;
            let opts = VerifyOptions {
                fault: inject_fault.then_some(Fault {
                    row: 0,
                    col: 0,
                    delta: 1e-3,
                }),
            };
            let report = cmd_verify(&cfg, &seeds, &opts)?;
            print!("{report}");
            Ok(report.all_passed())
        }
    }
}

fn preset_arg(cli: &Cli) -> Option<&str> {
    match &cli.command {
        Command::Run(c) | Command::Figure1(c) | Command::Verify { common: c, .. } => c.preset.as_deref(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(name) = preset_arg(&cli).filter(|p| !PRESETS.contains(p)) {
        eprintln!(
            "error: unknown preset {name:?}, expected one of {}\n",
            PRESETS.join(", ")
        );
        eprintln!("{}", Cli::command().render_usage());
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
