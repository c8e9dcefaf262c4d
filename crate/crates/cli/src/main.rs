use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::warn;

use rolesim_core::analysis::{archive_rows, build_analysis, write_analysis};
use rolesim_core::evolution::checkpoint::{read_json, write_json_atomic, RUN_FILE, TRAJECTORIES_FILE};
use rolesim_core::trajectory::Reference;
use rolesim_core::{
    run_evolution, ControllerLibrary, Dyad, Engine, HallOfFame, InitSpec, RunConfig, Simulator,
    TrajectoryLibrary,
};

#[derive(Parser)]
#[command(name = "rolesim", version, about = "Evolve and analyse role-switching dyads")]
struct Cli {
    /// Worker threads for trial evaluation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// JSON run configuration; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Use the small preset (100 dyads, 40 generations) instead of the full one.
    #[arg(long, conflicts_with = "config")]
    desk: bool,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
            None if self.desk => RunConfig::desk_scale(1),
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the evolutionary search, checkpointing every generation.
    Evolve {
        #[command(flatten)]
        run: RunArgs,
        /// Output directory (falls back to `output_dir` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from the checkpoints in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Simulate one dyad and write its trial as CSV.
    Simulate {
        /// Dyad JSON, or an archive (`hof.json`) together with `--member`.
        #[arg(long)]
        dyad: PathBuf,
        /// Dyad id to pick from an archive; defaults to the first member.
        #[arg(long)]
        member: Option<String>,
        /// Trajectory id (`traj-<i>` or `holdout`).
        #[arg(long)]
        trajectory: String,
        /// Run directory whose configuration and trajectories to use.
        #[arg(long, conflicts_with_all = ["config", "seed", "desk"])]
        run_dir: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute cooperation metrics over one or more archives.
    Analyze {
        /// Archive file; repeat to pool several runs. Each is read with the
        /// `run.json` stored next to it.
        #[arg(long, required = true)]
        hof: Vec<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Seed for the random decile baseline (default: the first archive's seed).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate the trajectory library for a configuration.
    Trajgen {
        #[command(flatten)]
        run: RunArgs,
        /// JSON destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Evolve { run, out, resume } => evolve(&run, out, resume),
        Command::Simulate {
            dyad,
            member,
            trajectory,
            run_dir,
            run,
            out,
        } => simulate(&dyad, member.as_deref(), &trajectory, run_dir.as_deref(), &run, out.as_deref()),
        Command::Analyze { hof, out, seed } => analyze(&hof, &out, seed),
        Command::Trajgen { run, out } => trajgen(&run, out.as_deref()),
    }
}

fn evolve(args: &RunArgs, out: Option<PathBuf>, resume: bool) -> Result<()> {
    // Resuming without an explicit configuration picks up the stored one.
    let stored = match (&out, resume, &args.config, args.desk) {
        (Some(dir), true, None, false) if dir.join(RUN_FILE).is_file() => {
            let mut config: RunConfig = read_json(&dir.join(RUN_FILE))?;
            if let Some(seed) = args.seed {
                config.seed = seed;
            }
            Some(config)
        }
        _ => None,
    };
    let config = match stored {
        Some(config) => config,
        None => args.load()?,
    };
    let out = out
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| anyhow!("no output directory: pass --out or set output_dir"))?;
    let stdout = io::stdout();
    let outcome = run_evolution(&config, Some(&out), resume, |g| {
        let _ = writeln!(
            stdout.lock(),
            "generation {:>4}  trajectory {:<8}  front0 {:>4}  archive {:>5}",
            g.generation,
            g.trajectory_id,
            g.front0,
            g.hof_size
        );
    })?;
    println!(
        "done: {} evaluations, {} archived dyads in {}",
        outcome.evaluations,
        outcome.hof.len(),
        out.display()
    );
    Ok(())
}

/// Accepts a bare dyad or an archive file.
fn load_dyad(path: &Path, member: Option<&str>) -> Result<Dyad> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    if value.get("members").is_some() {
        let hof: HallOfFame = serde_json::from_value(value).context("archive schema")?;
        let found = match member {
            Some(id) => hof.members().iter().find(|m| m.dyad.id.0 == id),
            None => hof.members().first(),
        };
        return found
            .map(|m| m.dyad.clone())
            .ok_or_else(|| anyhow!("no such member in {}", path.display()));
    }
    if member.is_some() {
        bail!("--member needs an archive file");
    }
    serde_json::from_value(value).context("dyad schema")
}

fn simulate(
    dyad: &Path,
    member: Option<&str>,
    trajectory: &str,
    run_dir: Option<&Path>,
    args: &RunArgs,
    out: Option<&Path>,
) -> Result<()> {
    let dyad = load_dyad(dyad, member)?;
    let (config, trajectories) = match run_dir {
        Some(dir) => {
            let config: RunConfig = read_json(&dir.join(RUN_FILE))?;
            let library: TrajectoryLibrary = read_json(&dir.join(TRAJECTORIES_FILE))?;
            (config, library)
        }
        None => {
            let config = args.load()?;
            let library = TrajectoryLibrary::generate(config.seed, config.trajectory_count, &config.trajectory_config())?;
            (config, library)
        }
    };
    let sim = Simulator::new(config.egg, config.dt, ControllerLibrary::standard(&config.egg))?;
    dyad.validate(&sim.library)?;
    let traj = trajectories.get(trajectory)?;
    let rec = sim.simulate_trial(&dyad, traj, &InitSpec::standard(&config.egg))?;
    if !rec.valid {
        warn!("trial became non-finite and was cut short");
    }
    match out {
        Some(path) => rec.write_csv(BufWriter::new(fs::File::create(path)?))?,
        None => rec.write_csv(io::stdout().lock())?,
    }
    eprintln!(
        "{} on {}: {} steps, switches {:?}",
        dyad.id,
        traj.id(),
        rec.len(),
        rec.switch_counts()
    );
    Ok(())
}

fn analyze(hofs: &[PathBuf], out: &Path, seed: Option<u64>) -> Result<()> {
    let mut rows = Vec::new();
    let mut archives = Vec::new();
    for path in hofs {
        let hof: HallOfFame = read_json(path).with_context(|| format!("reading {}", path.display()))?;
        let run_file = path.with_file_name(RUN_FILE);
        let config: RunConfig =
            read_json(&run_file).with_context(|| format!("reading {}", run_file.display()))?;
        let engine = Engine::new(config)?;
        let members: Vec<&Dyad> = hof.members().iter().map(|m| &m.dyad).collect();
        rows.extend(archive_rows(
            &members,
            &engine.simulator,
            &engine.trajectories.holdout,
            engine.config.stabilization_slope,
        )?);
        archives.push(hof);
    }
    let dyads: Vec<&Dyad> = archives.iter().flat_map(|h| h.members().iter().map(|m| &m.dyad)).collect();
    let seed = seed.unwrap_or(archives[0].seed);
    let analysis = build_analysis(rows, &dyads, dyads.len(), seed)?;
    if analysis.rows.is_empty() {
        warn!("no archived dyad passed the loss filter; writing empty outputs");
    }
    write_analysis(&analysis, out)?;
    let s = &analysis.summary;
    println!(
        "{} of {} archived dyads analysed, {} top performers -> {}",
        s.analysed,
        s.archive_size,
        s.top_performers,
        out.display()
    );
    Ok(())
}

fn trajgen(args: &RunArgs, out: Option<&Path>) -> Result<()> {
    let config = args.load()?;
    let library = TrajectoryLibrary::generate(config.seed, config.trajectory_count, &config.trajectory_config())?;
    match out {
        Some(path) => write_json_atomic(path, &library)?,
        None => {
            let mut w = io::stdout().lock();
            serde_json::to_writer_pretty(&mut w, &library)?;
            writeln!(w)?;
        }
    }
    Ok(())
}
