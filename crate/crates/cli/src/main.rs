use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kgdial::dialogue::ProviderKind;
use kgdial::eval::{evaluate_run, MetricReport};
use kgdial::kg::TripleFormat;
use kgdial::pipeline::{run, Mode, PipelineConfig, PipelineError, RunOptions, Stage, Workspace};
use kgdial::synthetic::{planted_partition, PlantedConfig};

#[derive(Parser)]
#[command(name = "kgdial", version, about = "Build multi-turn dialogue datasets from a knowledge graph")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Overrides {
    /// TOML config file; flags below override its fields.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// full, partition_only, argw_only or baseline.
    #[arg(long)]
    mode: Option<Mode>,
    /// Knowledge graph source file.
    #[arg(long)]
    kg: Option<PathBuf>,
    /// tsv or jsonl.
    #[arg(long)]
    format: Option<TripleFormat>,
    /// Output directory for artifacts.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Generation worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// Use the HTTP provider instead of the mock.
    #[arg(long)]
    http: bool,
    /// Turns per dialogue.
    #[arg(long)]
    turns: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage in order.
    Run {
        #[command(flatten)]
        o: Overrides,
        /// Skip stages whose recorded artifacts are still current.
        #[arg(long)]
        resume: bool,
    },
    /// Load the graph and compute entity embeddings.
    Ingest(Overrides),
    Partition(Overrides),
    Walk(Overrides),
    Generate(Overrides),
    Filter(Overrides),
    Split(Overrides),
    Stats(Overrides),
    /// Score model outputs against the test split.
    Eval {
        /// JSONL of {dialogue_id, turn, answer}.
        #[arg(long)]
        outputs: PathBuf,
        /// Test split; defaults to <output>/test.jsonl.
        #[arg(long)]
        test: Option<PathBuf>,
        #[command(flatten)]
        o: Overrides,
    },
    /// Write a planted-partition graph as TSV.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 6)]
        blocks: usize,
        #[arg(long, default_value_t = 15)]
        block_size: usize,
        #[arg(long, default_value_t = 0.5)]
        p_in: f64,
        #[arg(long, default_value_t = 0.02)]
        p_out: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Print the effective config as TOML.
    Config(Overrides),
}

fn load(o: &Overrides) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &o.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(m) = o.mode {
        cfg.mode = m;
    }
    if let Some(p) = &o.kg {
        cfg.paths.kg = p.clone();
    }
    if let Some(f) = o.format {
        cfg.paths.format = f;
    }
    if let Some(p) = &o.output {
        cfg.paths.output = p.clone();
    }
    if let Some(w) = o.workers {
        cfg.provider.workers = w;
    }
    if o.http {
        cfg.provider.provider = ProviderKind::HttpLlm;
    }
    if let Some(t) = o.turns {
        cfg.walk.turns = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn stages(o: &Overrides, stages: &[Stage]) -> Result<(), PipelineError> {
    let cfg = load(o)?;
    let ws = Workspace::new(&cfg)?;
    for &s in stages {
        ws.run_stage(s)?;
        tracing::info!(stage = s.name(), "done");
    }
    Ok(())
}

fn pipeline<T>(r: Result<T, PipelineError>) -> Result<T, ExitCode> {
    r.map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(e.exit_code() as u8)
    })
}

fn execute(cmd: Command) -> Result<(), ExitCode> {
    match cmd {
        Command::Run { o, resume } => pipeline(load(&o).and_then(|cfg| {
            let m = run(&cfg, RunOptions { resume })?;
            println!("run complete: {} ({} stages, config {})", cfg.paths.output.display(), m.stages.len(), m.config_hash);
            Ok(())
        })),
        Command::Ingest(o) => pipeline(stages(&o, &[Stage::Ingest, Stage::Embed])),
        Command::Partition(o) => pipeline(stages(&o, &[Stage::Partition])),
        Command::Walk(o) => pipeline(stages(&o, &[Stage::Walk])),
        Command::Generate(o) => pipeline(stages(&o, &[Stage::Generate])),
        Command::Filter(o) => pipeline(stages(&o, &[Stage::Filter])),
        Command::Split(o) => pipeline(stages(&o, &[Stage::Split])),
        Command::Stats(o) => pipeline(stages(&o, &[Stage::Stats]).and_then(|()| {
            let cfg = load(&o)?;
            let tsv = std::fs::read_to_string(cfg.paths.output.join(kgdial::pipeline::STATS_FILE))
                .map_err(|e| PipelineError::Stage { stage: Stage::Stats, message: e.to_string() })?;
            print!("{tsv}");
            Ok(())
        })),
        Command::Eval { outputs, test, o } => {
            let cfg = pipeline(load(&o))?;
            let test = test.unwrap_or_else(|| cfg.paths.output.join("test.jsonl"));
            match evaluate_run(&outputs, &test) {
                Ok(r) => {
                    println!("{}", MetricReport::HEADER);
                    println!("{r}");
                    Ok(())
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    Err(ExitCode::from(2))
                }
            }
        }
        Command::Synth {
            out,
            blocks,
            block_size,
            p_in,
            p_out,
            seed,
        } => {
            let pc = PlantedConfig {
                blocks,
                block_size,
                p_in,
                p_out,
                seed,
            };
            let g = planted_partition(&pc);
            g.write_tsv(&out).map_err(|e| {
                eprintln!("error: {}: {e}", out.display());
                ExitCode::from(2)
            })?;
            println!("wrote {} triples to {}", g.triples.len(), out.display());
            Ok(())
        }
        Command::Config(o) => pipeline(load(&o).map(|cfg| print!("{}", cfg.to_toml()))),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_env("KGDIAL_LOG").unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => code,
    }
}
