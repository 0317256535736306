use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::axi_fields::{read_tagged_snapshot, write_tagged_snapshot, AxiField};
use crate::error::{Error, Result};
use crate::nonuniqueness::Check;

use super::config::{GridBlock, RunConfig};

pub const MANIFEST: &str = "manifest.json";

/// One completed stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub wall_time_s: f64,
    pub pass: bool,
    /// file names relative to the run directory
    pub artifacts: Vec<String>,
    pub checks: Vec<Check>,
}

/// Versions of the tool and its output layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub mhdlab: String,
    pub schema: u32,
}

impl Default for Versions {
    fn default() -> Self {
        Self {
            mhdlab: env!("CARGO_PKG_VERSION").into(),
            schema: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grids {
    pub spectrum_n_r: usize,
    pub spectrum_r_max: f64,
    pub evolution: GridBlock,
    pub similarity: GridBlock,
}

/// Run manifest at `<outdir>/<hash>/manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub versions: Versions,
    pub threads: usize,
    pub grid: Grids,
    /// selected amplitude of the self-similar background
    pub beta: Option<f64>,
    /// its leading similarity eigenvalue
    pub a: Option<f64>,
    pub tolerances: BTreeMap<String, f64>,
    pub config: RunConfig,
    pub stages: BTreeMap<String, StageRecord>,
}

fn tolerances(c: &RunConfig) -> BTreeMap<String, f64> {
    let v = &c.verify.options;
    let k = &c.construction;
    [
        ("evolution.agreement_tol", c.evolution.agreement_tol),
        ("evolution.real_tol", c.evolution.real_tol),
        ("similarity.real_tol", c.similarity.real_tol),
        ("similarity.arnoldi.tol", c.similarity.arnoldi.tol),
        ("similarity.heat_margin", c.similarity.heat_margin),
        ("construction.picard_tol", k.picard_tol),
        ("construction.max_ratio", k.max_ratio),
        ("construction.gap_tol", k.gap_tol),
        ("verify.residual_tol", v.residual_tol),
        ("verify.energy_tol", v.energy_tol),
        ("verify.slope_tol", v.slope_tol),
        ("verify.scaling_tol", v.scaling_tol),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

impl Manifest {
    pub fn new(config: &RunConfig) -> Self {
        Self {
            config_hash: config.hash(),
            versions: Versions::default(),
            threads: rayon::current_num_threads(),
            grid: Grids {
                spectrum_n_r: config.spectrum.n_r,
                spectrum_r_max: config.spectrum.r_max,
                evolution: config.evolution.grid,
                similarity: config.similarity.grid,
            },
            beta: None,
            a: None,
            tolerances: tolerances(config),
            config: config.clone(),
            stages: BTreeMap::new(),
        }
    }
}

/// Output directory of one configuration.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub path: PathBuf,
    pub hash: String,
}

impl RunDir {
    pub fn create(config: &RunConfig) -> Result<Self> {
        let hash = config.hash();
        let path = config.outdir.join(&hash[..16]);
        std::fs::create_dir_all(&path)?;
        Ok(Self { path, hash })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    /// Existing manifest, or a fresh one. A manifest written for another
    /// config is refused.
    pub fn manifest(&self, config: &RunConfig) -> Result<Manifest> {
        let p = self.file(MANIFEST);
        if !p.exists() {
            return Ok(Manifest::new(config));
        }
        let m: Manifest = serde_json::from_str(&std::fs::read_to_string(&p)?)?;
        self.check_hash(&m.config_hash)?;
        Ok(m)
    }

    pub fn write_manifest(&self, m: &Manifest) -> Result<()> {
        std::fs::write(self.file(MANIFEST), serde_json::to_string_pretty(m)? + "\n")?;
        Ok(())
    }

    pub fn check_hash(&self, found: &str) -> Result<()> {
        if found != self.hash {
            return Err(Error::HashMismatch {
                expected: self.hash.clone(),
                found: found.to_string(),
            });
        }
        Ok(())
    }

    /// Writes `value` with a leading `config_hash` key.
    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut doc = serde_json::Map::new();
        doc.insert("config_hash".into(), Value::String(self.hash.clone()));
        match serde_json::to_value(value)? {
            Value::Object(m) => doc.extend(m),
            other => {
                doc.insert("data".into(), other);
            }
        }
        std::fs::write(self.file(name), serde_json::to_string_pretty(&Value::Object(doc))? + "\n")?;
        Ok(())
    }

    /// Reads a JSON artifact after checking its `config_hash`.
    pub fn read_json<T: DeserializeOwned>(&self, name: &str) -> Result<T> {
        let p = self.file(name);
        if !p.exists() {
            return Err(Error::InvalidArgument(format!("missing artifact {}", p.display())));
        }
        let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&p)?)?;
        let found = v.get("config_hash").and_then(Value::as_str).unwrap_or("").to_string();
        self.check_hash(&found)?;
        if let Value::Object(m) = &mut v {
            m.remove("config_hash");
        }
        Ok(serde_json::from_value(v)?)
    }

    /// CSV with a trailing `config_hash` column.
    pub fn write_csv(&self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let mut w = csv::Writer::from_path(self.file(name))?;
        w.write_record(header.iter().copied().chain(["config_hash"]))?;
        for row in rows {
            w.write_record(row.iter().map(String::as_str).chain([self.hash.as_str()]))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_snapshot(&self, name: &str, x: &AxiField, time: f64) -> Result<()> {
        if let Some(parent) = self.file(name).parent() {
            std::fs::create_dir_all(parent)?;
        }
        write_tagged_snapshot(&self.file(name), x, time, Some(&self.hash))
    }

    pub fn read_snapshot(&self, name: &str) -> Result<(AxiField, f64)> {
        let (x, t, tag) = read_tagged_snapshot(&self.file(name))?;
        self.check_hash(tag.as_deref().unwrap_or(""))?;
        Ok((x, t))
    }
}

/// `{:e}` formatting with round-trip precision.
pub fn fmt(v: f64) -> String {
    format!("{v:e}")
}

/// Artifact names of `stage` recorded in the manifest.
pub fn stage_artifacts<'a>(m: &'a Manifest, stage: &str) -> Result<&'a [String]> {
    m.stages
        .get(stage)
        .map(|s| s.artifacts.as_slice())
        .ok_or_else(|| Error::InvalidArgument(format!("stage `{stage}` has not been run for this config")))
}

pub fn find_artifact<'a>(m: &'a Manifest, stage: &str, name: &str) -> Result<&'a str> {
    stage_artifacts(m, stage)?
        .iter()
        .find(|a| a.as_str() == name)
        .map(String::as_str)
        .ok_or_else(|| Error::InvalidArgument(format!("stage `{stage}` recorded no `{name}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Doc {
        total: usize,
    }

    fn run_dir(seed: u64) -> (tempfile::TempDir, RunConfig, RunDir) {
        let tmp = tempfile::tempdir().unwrap();
        let config = RunConfig {
            outdir: tmp.path().to_path_buf(),
            seed,
            ..RunConfig::default()
        };
        let dir = RunDir::create(&config).unwrap();
        (tmp, config, dir)
    }

    #[test]
    fn json_artifacts_carry_and_check_the_hash() {
        let (tmp, _, dir) = run_dir(1);
        dir.write_json("a.json", &Doc { total: 3 }).unwrap();
        let text = std::fs::read_to_string(dir.file("a.json")).unwrap();
        assert!(text.contains(&dir.hash));
        assert_eq!(dir.read_json::<Doc>("a.json").unwrap(), Doc { total: 3 });
        let other = RunDir {
            path: dir.path.clone(),
            hash: "0".repeat(64),
        };
        assert!(matches!(other.read_json::<Doc>("a.json"), Err(Error::HashMismatch { .. })));
        drop(tmp);
    }

    #[test]
    fn csv_rows_end_with_the_hash() {
        let (_tmp, _, dir) = run_dir(2);
        dir.write_csv("s.csv", &["k", "n"], vec![vec!["1".into(), "2".into()]]).unwrap();
        let text = std::fs::read_to_string(dir.file("s.csv")).unwrap();
        assert_eq!(text, format!("k,n,config_hash\n1,2,{}\n", dir.hash));
    }

    #[test]
    fn manifest_round_trips_and_rejects_foreign_hash() {
        let (_tmp, config, dir) = run_dir(3);
        let mut m = dir.manifest(&config).unwrap();
        assert!(m.stages.is_empty());
        m.stages.insert(
            "spectrum".into(),
            StageRecord {
                wall_time_s: 0.5,
                pass: true,
                artifacts: vec!["spectrum.csv".into()],
                checks: vec![],
            },
        );
        dir.write_manifest(&m).unwrap();
        let again = dir.manifest(&config).unwrap();
        assert_eq!(again, m);
        assert_eq!(find_artifact(&again, "spectrum", "spectrum.csv").unwrap(), "spectrum.csv");
        assert!(find_artifact(&again, "construct", "x").is_err());
        m.config_hash = "f".repeat(64);
        dir.write_manifest(&m).unwrap();
        assert!(matches!(dir.manifest(&config), Err(Error::HashMismatch { .. })));
        // non-finite check values survive a round trip as NaN
        m.config_hash = dir.hash.clone();
        m.stages.get_mut("spectrum").unwrap().checks.push(Check::at_most("k_star", f64::INFINITY, 32.0));
        dir.write_manifest(&m).unwrap();
        let c = &dir.manifest(&config).unwrap().stages["spectrum"].checks[0];
        assert!(c.value.is_nan() && !c.pass);
    }
}
