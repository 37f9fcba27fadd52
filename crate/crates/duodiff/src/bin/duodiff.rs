//! Thin command-line front end over the library operations in
//! [`duodiff::commands`].
//!
//! Exit codes: 0 on success, 1 when the request itself is unusable (missing
//! files, unknown keys, bad values), 2 when the computation fails underway.
//! Failures also emit a one-line JSON error report on stderr so wrapping
//! scripts can parse the reason.

use clap::{Args, Parser, Subcommand};
use duodiff::commands::{
    cmd_curate, cmd_eval, cmd_oracle_check, cmd_sample, cmd_sweep, cmd_train, CommandError,
};
use duodiff::config::RunConfig;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "duodiff",
    version,
    about = "Dual-conditioned diffusion at desk scale: curate, train, sample, sweep, evaluate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file (flat key = value, supports include). Defaults plus
    /// DUODIFF_* environment overrides apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override the run seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Override any config key, repeatable: --set lr=0.001
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Label a segment manifest into speech and non-speech pools.
    Curate {
        #[command(flatten)]
        common: Common,
        /// Input manifest (JSONL), overriding the config.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Train the noise-prediction network against the grid world.
    Train {
        #[command(flatten)]
        common: Common,
        /// Number of optimizer steps, overriding the config.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Draw guided samples from the oracle world or a checkpoint.
    Sample {
        #[command(flatten)]
        common: Common,
        /// Description guidance weight.
        #[arg(long)]
        w_desc: Option<f64>,
        /// Content guidance weight.
        #[arg(long)]
        w_cont: Option<f64>,
        /// Number of samples to draw.
        #[arg(long)]
        n_samples: Option<usize>,
        /// Sample from this checkpoint instead of the analytic oracle.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Score samples over the guidance-weight grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated weight list, e.g. 5,7,9.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Aggregate evaluation metrics over a batch file.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Evaluation batch (JSON), overriding the config.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Verify the guidance decomposition against the analytic world.
    OracleCheck {
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common) -> Result<RunConfig, CommandError> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path).map_err(|e| CommandError::Input(e.to_string()))?,
        None => RunConfig::from_env().map_err(|e| CommandError::Input(e.to_string()))?,
    };
    for pair in &common.set {
        let Some((key, value)) = pair.split_once('=') else {
            return Err(CommandError::Input(format!(
                "--set expects KEY=VALUE, got {pair:?}"
            )));
        };
        config
            .set(key.trim(), value.trim())
            .map_err(|e| CommandError::Input(e.to_string()))?;
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.out_dir = out.clone();
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<(), CommandError> {
    match cli.command {
        Command::Curate { common, manifest } => {
            let mut config = load_config(&common)?;
            if let Some(m) = manifest {
                config.manifest = Some(m);
            }
            let outcome = cmd_curate(&config)?;
            let s = &outcome.summary;
            println!(
                "curated {} segments: {} speech, {} non-speech, {} unresolved",
                s.total, s.speech, s.non_speech, s.unresolved
            );
            for issue in &s.errors {
                println!("  unresolved {}: {}", issue.id, issue.message);
            }
            println!("wrote {}", outcome.segments.display());
            println!("wrote {}", outcome.summary_json.display());
        }
        Command::Train { common, steps } => {
            let mut config = load_config(&common)?;
            if let Some(steps) = steps {
                config.train_steps = steps;
            }
            let outcome = cmd_train(&config)?;
            println!(
                "trained {} steps: loss {:.4} -> {:.4}",
                outcome.steps, outcome.first_loss, outcome.last_loss
            );
            println!("wrote {}", outcome.loss_csv.display());
            println!("wrote {}", outcome.checkpoint.display());
            if let Some(svg) = &outcome.loss_svg {
                println!("wrote {}", svg.display());
            }
        }
        Command::Sample {
            common,
            w_desc,
            w_cont,
            n_samples,
            checkpoint,
        } => {
            let mut config = load_config(&common)?;
            if let Some(w) = w_desc {
                config.w_desc = w;
            }
            if let Some(w) = w_cont {
                config.w_cont = w;
            }
            if let Some(n) = n_samples {
                config.n_samples = n;
            }
            if let Some(c) = checkpoint {
                config.checkpoint = Some(c);
            }
            let outcome = cmd_sample(&config)?;
            let mean = outcome
                .mean
                .iter()
                .map(|m| format!("{m:.4}"))
                .collect::<Vec<_>>()
                .join(", ");
            println!(
                "drew {} samples from {} scores; mean [{}]",
                outcome.n_samples, outcome.backend, mean
            );
            println!("wrote {}", outcome.csv.display());
            if let Some(svg) = &outcome.svg {
                println!("wrote {}", svg.display());
            }
        }
        Command::Sweep { common, grid } => {
            let mut config = load_config(&common)?;
            if let Some(grid) = grid {
                config
                    .set("sweep_grid", &grid)
                    .map_err(|e| CommandError::Input(e.to_string()))?;
            }
            let outcome = cmd_sweep(&config)?;
            println!("w_desc  w_cont  proj_content  dist_joint_mean  fad_component  kl_posterior");
            for c in &outcome.cells {
                println!(
                    "{:>6}  {:>6}  {:>12.4}  {:>15.4}  {:>13.4}  {:>12.4}",
                    c.w_desc, c.w_cont, c.proj_content, c.dist_joint_mean, c.fad_component,
                    c.kl_posterior
                );
            }
            println!("wrote {}", outcome.csv.display());
            if let Some(svg) = &outcome.svg {
                println!("wrote {}", svg.display());
            }
        }
        Command::Eval { common, input } => {
            let mut config = load_config(&common)?;
            if let Some(i) = input {
                config.eval_input = Some(i);
            }
            let outcome = cmd_eval(&config)?;
            let r = &outcome.report;
            let show = |name: &str, v: Option<f64>| {
                if let Some(v) = v {
                    println!("{name} = {v:.6}");
                }
            };
            show("wer_mean", r.wer_mean);
            show("delta_wer_mean", r.delta_wer_mean);
            show("kl_mean", r.kl_mean);
            show("frechet", r.frechet);
            show("cosine_mean", r.cosine_mean);
            println!("wrote {}", outcome.json.display());
        }
        Command::OracleCheck { common } => {
            let config = load_config(&common)?;
            let outcome = cmd_oracle_check(&config)?;
            println!("{}", outcome.line);
            println!("wrote {}", outcome.json.display());
            if !outcome.report.passed {
                return Err(CommandError::Runtime(
                    "decomposition deviation exceeded tolerance".to_string(),
                ));
            }
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        let kind = match &e {
            CommandError::Input(_) => "input",
            CommandError::Runtime(_) => "runtime",
        };
        eprintln!(
            "{}",
            serde_json::json!({ "error": e.to_string(), "kind": kind })
        );
        std::process::exit(e.exit_code());
    }
}
