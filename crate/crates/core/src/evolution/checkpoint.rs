//! On-disk run layout:
//!
//! ```text
//! <out>/run.json                  config (including seed) the run was started with
//! <out>/controllers.json          controller library
//! <out>/trajectories.json         training rotation and held-out trajectory
//! <out>/scores.csv                dyad_id,generation,tracking,stabilization,effort1,effort2,jerk
//! <out>/hof.json                  Hall of Fame after the last merged generation
//! <out>/gen_<k>_population.json   survivors of generation k
//! ```
//!
//! Each generation appends its score rows, then rewrites `hof.json`, then
//! writes its population file. JSON files are replaced atomically.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::evolution::{Engine, HallOfFame, Population, ScoreRow};

pub const RUN_FILE: &str = "run.json";
pub const HOF_FILE: &str = "hof.json";
pub const SCORES_FILE: &str = "scores.csv";
pub const CONTROLLERS_FILE: &str = "controllers.json";
pub const TRAJECTORIES_FILE: &str = "trajectories.json";

pub fn population_file(generation: u32) -> String {
    format!("gen_{generation}_population.json")
}

fn parse_population_file(name: &str) -> Option<u32> {
    name.strip_prefix("gen_")?
        .strip_suffix("_population.json")?
        .parse()
        .ok()
}

pub fn write_json_atomic<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn population_generations(&self) -> Result<Vec<u32>> {
        if !self.root.is_dir() {
            return Ok(Vec::new());
        }
        let mut gens = Vec::new();
        for entry in fs::read_dir(&self.root)? {
            if let Some(g) = entry?.file_name().to_str().and_then(parse_population_file) {
                gens.push(g);
            }
        }
        gens.sort_unstable();
        Ok(gens)
    }

    pub fn has_checkpoint(&self) -> bool {
        self.path(RUN_FILE).is_file()
            && self
                .population_generations()
                .map(|g| !g.is_empty())
                .unwrap_or(false)
    }

    /// Clears earlier outputs and writes the run description.
    pub fn start(&self, config: &RunConfig, engine: &Engine) -> Result<()> {
        fs::create_dir_all(&self.root)?;
        for g in self.population_generations()? {
            fs::remove_file(self.path(&population_file(g)))?;
        }
        for name in [HOF_FILE, SCORES_FILE] {
            let p = self.path(name);
            if p.exists() {
                fs::remove_file(p)?;
            }
        }
        write_json_atomic(&self.path(RUN_FILE), config)?;
        write_json_atomic(&self.path(CONTROLLERS_FILE), engine.library())?;
        write_json_atomic(&self.path(TRAJECTORIES_FILE), &engine.trajectories)?;
        let mut w = csv::Writer::from_path(self.path(SCORES_FILE))?;
        w.write_record([
            "dyad_id",
            "generation",
            "tracking",
            "stabilization",
            "effort1",
            "effort2",
            "jerk",
        ])?;
        w.flush()?;
        Ok(())
    }

    pub fn write_population(&self, pop: &Population) -> Result<()> {
        write_json_atomic(&self.path(&population_file(pop.generation)), pop)
    }

    pub fn write_hof(&self, hof: &HallOfFame) -> Result<()> {
        write_json_atomic(&self.path(HOF_FILE), hof)
    }

    pub fn append_scores(&self, rows: &[ScoreRow]) -> Result<()> {
        let file = OpenOptions::new()
            .append(true)
            .open(self.path(SCORES_FILE))?;
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(BufWriter::new(file));
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_scores(&self) -> Result<Vec<ScoreRow>> {
        let mut r = csv::Reader::from_path(self.path(SCORES_FILE))?;
        Ok(r.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
    }

    /// Loads the newest population and archive, dropping score rows written
    /// after that population. Only the generation count and output directory
    /// may differ from the stored configuration.
    pub fn resume(&self, config: &RunConfig) -> Result<(Population, HallOfFame)> {
        let stored: RunConfig = read_json(&self.path(RUN_FILE))?;
        let comparable = |c: &RunConfig| RunConfig {
            generations: 1,
            output_dir: None,
            ..c.clone()
        };
        if comparable(&stored) != comparable(config) {
            return Err(Error::Checkpoint(
                "configuration differs from the one the run was started with".into(),
            ));
        }
        if &stored != config {
            write_json_atomic(&self.path(RUN_FILE), config)?;
        }
        let latest = *self
            .population_generations()?
            .last()
            .ok_or_else(|| Error::Checkpoint("no population checkpoint".into()))?;
        let pop: Population = read_json(&self.path(&population_file(latest)))?;
        let hof = if latest == 0 {
            HallOfFame::new(config.seed)
        } else {
            let hof: HallOfFame = read_json(&self.path(HOF_FILE))?;
            // The archive is written before the population, so it may be one
            // generation ahead; re-merging that generation is a no-op.
            if hof.generation < latest || hof.generation > latest + 1 {
                return Err(Error::Checkpoint(format!(
                    "archive at generation {} does not match population {latest}",
                    hof.generation
                )));
            }
            hof
        };
        let rows: Vec<ScoreRow> = self
            .read_scores()?
            .into_iter()
            .filter(|r| r.generation <= latest)
            .collect();
        let mut w = csv::Writer::from_path(self.path(SCORES_FILE))?;
        for row in &rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok((pop, hof))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::run_evolution;

    fn config() -> RunConfig {
        RunConfig {
            population_size: 8,
            generations: 4,
            duration: 5.0,
            seed: 13,
            ..RunConfig::default()
        }
    }

    #[test]
    fn files_written_per_generation() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_evolution(&config(), Some(dir.path()), false, |_| {}).unwrap();
        let run = RunDir::new(dir.path());
        for g in 0..=4 {
            assert!(run.path(&population_file(g)).is_file());
        }
        let rows = run.read_scores().unwrap();
        assert_eq!(rows.len(), 4 * 16);
        let hof: HallOfFame = read_json(&run.path(HOF_FILE)).unwrap();
        assert_eq!(hof, out.hof);
        let header = fs::read_to_string(run.path(SCORES_FILE)).unwrap();
        assert!(header.starts_with("dyad_id,generation,tracking,stabilization,effort1,effort2,jerk\n"));
    }

    #[test]
    fn resume_reproduces_uninterrupted_run() {
        let full = tempfile::tempdir().unwrap();
        run_evolution(&config(), Some(full.path()), false, |_| {}).unwrap();

        let part = tempfile::tempdir().unwrap();
        let short = RunConfig {
            generations: 2,
            ..config()
        };
        run_evolution(&short, Some(part.path()), false, |_| {}).unwrap();
        // Pretend the first run was the full one and got cut after generation 2,
        // with generation 3's score rows and archive already flushed.
        write_json_atomic(&part.path().join(RUN_FILE), &config()).unwrap();
        let extra = tempfile::tempdir().unwrap();
        let three = RunConfig {
            generations: 3,
            ..config()
        };
        let o3 = run_evolution(&three, Some(extra.path()), false, |_| {}).unwrap();
        RunDir::new(part.path())
            .append_scores(&o3.log[o3.log.len() - 16..])
            .unwrap();
        RunDir::new(part.path()).write_hof(&o3.hof).unwrap();

        run_evolution(&config(), Some(part.path()), true, |_| {}).unwrap();
        for name in [HOF_FILE, SCORES_FILE, &population_file(4)] {
            let a = fs::read(full.path().join(name)).unwrap();
            let b = fs::read(part.path().join(name)).unwrap();
            assert!(a == b, "{name} differs after resume");
        }
    }

    #[test]
    fn resume_rejects_changed_config() {
        let dir = tempfile::tempdir().unwrap();
        run_evolution(&config(), Some(dir.path()), false, |_| {}).unwrap();
        let other = RunConfig {
            mutation_rate: 0.2,
            ..config()
        };
        assert!(run_evolution(&other, Some(dir.path()), true, |_| {}).is_err());
    }
}
