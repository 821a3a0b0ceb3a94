use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use namegrounder_core::evalharness::{run_experiment, ExperimentConfig};
use namegrounder_core::langgen::gen_dataset;
use namegrounder_core::Grammar;

use crate::session::{Engine, Response, Session};

#[derive(Debug, Parser)]
#[command(name = "namegrounder", version, about = "Tabletop grounding simulator with named-object memory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset (scenes.jsonl + instructions.jsonl).
    Gen(GenArgs),
    /// Run the w/o vs w/ naming experiment and write reports.
    Eval(EvalArgs),
    /// Line-mode session: one instruction per line, one JSON response per line.
    Repl(ReplArgs),
    /// HTTP service for the console.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// Experiment config (TOML); supplies library, mix, noise and tie-break.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        match &self.config {
            Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display())),
            None => Ok(ExperimentConfig::default()),
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 20)]
    pub scenes: usize,
    #[arg(long, default_value_t = 15)]
    pub per_scene: usize,
    #[arg(long, default_value_t = 6)]
    pub min_objects: usize,
    #[arg(long, default_value_t = 8)]
    pub max_objects: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[command(flatten)]
    pub config: ConfigArg,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Output directory for dataset, episodes, reports and manifest.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SessionArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Memory store file, loaded at start and rewritten after each naming.
    #[arg(long, env = "NAMEGROUNDER_MEMORY")]
    pub memory: Option<PathBuf>,
}

impl SessionArgs {
    pub fn engine(&self) -> anyhow::Result<Engine> {
        let cfg = self.config.load()?;
        let library = cfg.load_library()?;
        Ok(Engine::new(library, cfg.noise, cfg.tie_break)?.with_memory(self.memory.clone()))
    }
}

#[derive(Debug, Args)]
pub struct ReplArgs {
    #[arg(long, default_value_t = 0)]
    pub scene_seed: u64,
    /// Exact object count for the session scene.
    #[arg(long)]
    pub objects: Option<usize>,
    #[command(flatten)]
    pub session: SessionArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    #[arg(long, env = "NAMEGROUNDER_PORT", default_value_t = 8080)]
    pub port: u16,
    #[command(flatten)]
    pub session: SessionArgs,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::Eval(a) => eval(a),
        Command::Repl(a) => {
            let engine = a.session.engine()?;
            let mut session = Session::new(&engine, "repl", a.scene_seed, a.objects.map(|n| n..=n))?;
            let stdin = std::io::stdin();
            repl(&engine, &mut session, stdin.lock(), std::io::stdout().lock())
        }
        Command::Serve(a) => {
            let engine = a.session.engine()?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(crate::http::serve(engine, SocketAddr::new(a.host, a.port)))
        }
    }
}

fn gen(a: GenArgs) -> anyhow::Result<()> {
    if a.min_objects > a.max_objects {
        bail!("--min-objects must not exceed --max-objects");
    }
    let cfg = a.config.load()?;
    let library = cfg.load_library()?;
    let grammar = Grammar::builtin(&library)?;
    let ds = gen_dataset(
        &grammar,
        &library,
        a.scenes,
        a.per_scene,
        a.min_objects..=a.max_objects,
        &cfg.mix,
        a.seed,
    )?;
    ds.write_to(&a.out)?;
    println!(
        "wrote {} scenes and {} instructions ({} ambiguous) to {}",
        ds.scenes.len(),
        ds.instructions.len(),
        ds.ambiguous_count(),
        a.out.display()
    );
    Ok(())
}

fn eval(a: EvalArgs) -> anyhow::Result<()> {
    let cfg = a.config.load()?;
    let out = run_experiment(&cfg)?;
    out.write_to(&a.out)?;
    print!("{}", out.table());
    Ok(())
}

fn summary(r: &Response) -> String {
    let ep = &r.episode;
    let target = |c: &Option<namegrounder_core::executor::ChosenTarget>| {
        c.as_ref().map_or("-".to_string(), |c| c.instance_id.clone())
    };
    format!(
        "[{}] {}: {} (src {} dst {} obj {}){}",
        r.turn,
        r.instruction_class.as_str(),
        if ep.sr_ok { "done" } else { "failed" },
        target(&r.chosen_src),
        target(&r.chosen_dst),
        target(&r.chosen_object),
        if ep.sr_ok { String::new() } else { format!(" at {:?}", ep.failure_stage).to_lowercase() }
    )
}

const REPL_HELP: &str = ":scene | :memory | :new SEED [N] | :help | :quit";

/// Reads instructions line by line and writes one JSON document per line.
/// Lines starting with `:` are session commands. A short summary of each
/// turn goes to stderr.
pub fn repl<R: BufRead, W: Write>(engine: &Engine, session: &mut Session, input: R, mut out: W) -> anyhow::Result<()> {
    for line in input.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let json = match line.split_whitespace().collect::<Vec<_>>().as_slice() {
            [":quit" | ":q"] => break,
            [":help"] => {
                eprintln!("{REPL_HELP}");
                continue;
            }
            [":scene"] => serde_json::to_string(&session.scene_payload(engine))?,
            [":memory"] => serde_json::to_string(&session.memory_payload())?,
            [":new", seed, rest @ ..] if rest.len() <= 1 => {
                let seed: u64 = seed.parse().context("scene seed")?;
                let objects = match rest.first() {
                    Some(n) => Some(n.parse::<usize>().context("object count")?),
                    None => None,
                };
                session.new_scene(engine, seed, objects.map(|n| n..=n))?;
                serde_json::to_string(&session.scene_payload(engine))?
            }
            [cmd, ..] if cmd.starts_with(':') => {
                eprintln!("unknown command {cmd}; {REPL_HELP}");
                continue;
            }
            _ => {
                let r = session.submit_instruction(engine, line)?;
                eprintln!("{}", summary(&r));
                serde_json::to_string(&r)?
            }
        };
        writeln!(out, "{json}")?;
    }
    Ok(())
}
