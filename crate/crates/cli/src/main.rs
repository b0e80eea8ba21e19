mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tedio_core::ErrorKind;

use crate::config::{parse_seeds, RunConfig};

/// Toy video diffusion with temporal-diagonal latent refinement.
///
/// Exit codes: 0 success, 2 usage or configuration error, 3 I/O error,
/// 4 numeric or dimension error.
#[derive(Parser)]
#[command(name = "tedio", version)]
struct Cli {
    #[command(flatten)]
    global: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

/// Flags shared by every subcommand; each one overrides the config file.
#[derive(Args, Default)]
struct Overrides {
    /// JSON run configuration; missing keys take defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for corpus generation, initialization, training and probe noise.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Sampling seeds: comma-separated values or ranges like 0-49.
    #[arg(long, global = true, value_name = "LIST")]
    seeds: Option<String>,
    #[arg(long, global = true, value_enum)]
    tedio: Option<Switch>,
    /// Capture block (1-based).
    #[arg(long, global = true, value_name = "I")]
    block: Option<usize>,
    #[arg(long, global = true, value_name = "K")]
    k: Option<usize>,
    #[arg(long, global = true, value_name = "F")]
    eta: Option<f64>,
    /// Refinement iterations per optimized step.
    #[arg(long, global = true, value_name = "N")]
    iters: Option<usize>,
    /// Number of earliest sampling steps optimized.
    #[arg(long, global = true, value_name = "N")]
    ell: Option<usize>,
    /// Worker threads across independent seeds or clips.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    #[arg(long, global = true, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    /// Corpus directory.
    #[arg(long, global = true, value_name = "DIR")]
    data: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus (TDT clips, manifest, PPM frames).
    GenData {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, value_name = "RATE")]
        jitter_rate: Option<f64>,
    },
    /// Train the toy model; writes model.ckpt and loss.csv.
    Train {
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Sample videos for each seed; writes TDT/PPM videos, samples.csv and events.csv.
    Sample,
    /// Attention and variability statistics of a corpus under a checkpoint.
    Probe,
    /// Sweep one refinement hyperparameter, e.g. `--sweep iters 0,1,2,3`.
    Ablate {
        #[arg(long, num_args = 2, value_names = ["PARAM", "VALUES"], required = true)]
        sweep: Vec<String>,
    },
    /// Finite-difference gradient suites on the micro model (TEDIO_F64=1 for f64).
    Gradcheck {
        /// Random cases per suite.
        #[arg(long, default_value_t = 3)]
        cases: u64,
    },
    /// Compare a baseline and a refined `sample` output directory.
    Report { baseline: PathBuf, refined: PathBuf },
}

fn effective_config(o: &Overrides) -> tedio_core::Result<RunConfig> {
    let mut c = match &o.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &o.out {
        c.out = v.clone();
    }
    if let Some(s) = o.seed {
        c.corpus.seed = s;
        c.train.seed = s;
        c.probe.noise_seed = s;
    }
    if let Some(v) = &o.seeds {
        c.seeds = parse_seeds(v)?;
    }
    if let Some(v) = o.tedio {
        c.tedio_enabled = matches!(v, Switch::On);
    }
    if let Some(v) = o.block {
        c.tedio.block = v;
    }
    if let Some(v) = o.k {
        c.tedio.k = v;
    }
    if let Some(v) = o.eta {
        c.tedio.eta = v;
    }
    if let Some(v) = o.iters {
        c.tedio.n_iters = v;
    }
    if let Some(v) = o.ell {
        c.tedio.ell = v;
        c.tedio.timesteps = None;
    }
    if let Some(v) = o.jobs {
        c.jobs = v;
    }
    if let Some(v) = &o.checkpoint {
        c.checkpoint = Some(v.clone());
    }
    if let Some(v) = &o.data {
        c.data = Some(v.clone());
    }
    Ok(c)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = effective_config(&cli.global)?;
    match cli.command {
        Command::GenData { n, jitter_rate } => {
            if let Some(n) = n {
                cfg.corpus.n = n;
            }
            if let Some(r) = jitter_rate {
                cfg.corpus.jitter_rate = r;
            }
            commands::gen_data(&cfg)
        }
        Command::Train { steps } => {
            if let Some(s) = steps {
                cfg.train.steps = s;
            }
            commands::train(&cfg)
        }
        Command::Sample => commands::sample(&mut cfg),
        Command::Probe => commands::probe(&mut cfg),
        Command::Ablate { sweep } => commands::ablate(&mut cfg, &sweep[0], &sweep[1]),
        Command::Gradcheck { cases } => commands::gradcheck(&cfg, cases),
        Command::Report { baseline, refined } => commands::report(&cfg, &baseline, &refined),
    }
}

fn kind_of(err: &anyhow::Error) -> ErrorKind {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<tedio_core::Error>() {
            return e.kind();
        }
        if cause.is::<std::io::Error>() {
            return ErrorKind::Io;
        }
    }
    ErrorKind::Numeric
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 2,
        ErrorKind::Io => 3,
        ErrorKind::Numeric => 4,
    }
}

fn fail(kind: ErrorKind, message: &str) -> ExitCode {
    let name = match kind {
        ErrorKind::Usage => "usage",
        ErrorKind::Io => "io",
        ErrorKind::Numeric => "numeric",
    };
    let flat = message.split_whitespace().collect::<Vec<_>>().join(" ");
    eprintln!("error kind={name} code={}: {flat}", exit_code(kind));
    ExitCode::from(exit_code(kind))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            return fail(ErrorKind::Usage, first.trim_start_matches("error: "));
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Library errors already name their cause; others get the chain.
            let msg = if e.is::<tedio_core::Error>() { e.to_string() } else { format!("{e:#}") };
            fail(kind_of(&e), &msg)
        }
    }
}
