//! Study configuration: TOML file, per-problem defaults, dotted-path
//! overrides, and the resolved-config hash that ties artifacts together.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::hashing::sha256_hex;
use crate::nsga3::Nsga3Config;
use crate::problems::ProblemId;

/// Which tuning grid to sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridChoice {
    Full,
    Reduced,
}

impl GridChoice {
    pub fn configs(self) -> Vec<crate::nn::NetConfig> {
        match self {
            GridChoice::Full => crate::nn::full_grid(),
            GridChoice::Reduced => crate::nn::reduced_grid(),
        }
    }
}

/// Resolved study configuration.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StudyConfig {
    pub problem: ProblemId,
    /// Tally-uncertainty levels, strictly descending.
    pub levels: Vec<f64>,
    pub grid: GridChoice,
    pub nsga3: Nsga3Config,
    pub repeats: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Worker-thread cap; `None` uses every core. Not part of the config
    /// hash (it cannot change results).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

impl StudyConfig {
    pub fn default_for(problem: ProblemId) -> Self {
        Self {
            problem,
            levels: crate::dataset::standard_levels(problem).to_vec(),
            grid: GridChoice::Full,
            nsga3: Nsga3Config::default(),
            repeats: 1,
            seed: 42,
            out: PathBuf::from("out"),
            jobs: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::Config("levels must be non-empty".into()));
        }
        for &u in &self.levels {
            crate::emulator::UncertaintySpec::new(u)?;
        }
        if !self.levels.windows(2).all(|w| w[0] > w[1]) {
            return Err(Error::Config(
                "levels must be strictly descending".into(),
            ));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if self.nsga3.population == 0 || self.nsga3.generations == 0 {
            return Err(Error::Config(
                "nsga3 population and generations must be positive".into(),
            ));
        }
        if self.nsga3.divisions + 1 > self.nsga3.population {
            return Err(Error::Config(format!(
                "nsga3.divisions {} yields more reference directions than the population {}",
                self.nsga3.divisions, self.nsga3.population
            )));
        }
        Ok(())
    }

    /// Hash of everything that can influence results (`out` and `jobs` are
    /// excluded: they change where and how fast, never what).
    pub fn config_hash(&self) -> String {
        let mut hashed = self.clone();
        hashed.out = PathBuf::new();
        hashed.jobs = None;
        let canonical = toml::to_string(&hashed).expect("config serializes");
        sha256_hex(canonical.as_bytes())
    }
}

/// A `key.path=value` override applied onto the TOML document before
/// deserialization. Values parse as TOML literals, falling back to strings.
pub fn apply_override(doc: &mut toml::Table, dotted: &str, raw_value: &str) -> Result<()> {
    let segments: Vec<&str> = dotted.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(Error::Config(format!("bad override key '{dotted}'")));
    }
    let value: toml::Value = match format!("v = {raw_value}").parse::<toml::Table>() {
        Ok(mut wrapper) => wrapper.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw_value.to_string()),
    };
    let mut table = doc;
    for seg in &segments[..segments.len() - 1] {
        table = table
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| {
                Error::Config(format!("override '{dotted}' descends into a non-table value"))
            })?;
    }
    table.insert(segments.last().unwrap().to_string(), value);
    Ok(())
}

/// Loads a study configuration: optional TOML file, then overrides, then
/// per-problem defaults for anything still missing.
pub fn load_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<StudyConfig> {
    let mut doc: toml::Table = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| {
                Error::Config(format!("cannot read config {}: {e}", p.display()))
            })?;
            text.parse().map_err(|e| {
                Error::Config(format!("cannot parse config {}: {e}", p.display()))
            })?
        }
        None => toml::Table::new(),
    };
    for (key, value) in overrides {
        apply_override(&mut doc, key, value)?;
    }

    let problem = match doc.get("problem") {
        Some(v) => {
            let name = v.as_str().ok_or_else(|| {
                Error::Config("config field 'problem' must be a string".into())
            })?;
            ProblemId::parse(name)?
        }
        None => ProblemId::Moderator,
    };

    // Fill defaults for anything the file and overrides left unset.
    let defaults = StudyConfig::default_for(problem);
    let default_doc: toml::Table = toml::Value::try_from(&defaults)
        .expect("defaults serialize")
        .as_table()
        .cloned()
        .expect("defaults form a table");
    merge_missing(&mut doc, &default_doc);

    let config: StudyConfig = toml::Value::Table(doc)
        .try_into()
        .map_err(|e| Error::Config(format!("config schema: {e}")))?;
    config.validate()?;
    Ok(config)
}

fn merge_missing(doc: &mut toml::Table, defaults: &toml::Table) {
    for (key, default_value) in defaults {
        match doc.get_mut(key) {
            None => {
                doc.insert(key.clone(), default_value.clone());
            }
            Some(toml::Value::Table(sub)) => {
                if let toml::Value::Table(default_sub) = default_value {
                    merge_missing(sub, default_sub);
                }
            }
            Some(_) => {}
        }
    }
}
