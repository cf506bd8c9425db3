//! The TOML run manifest that drives every subcommand.
//!
//! Relative paths are resolved against the directory holding the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::SplitRatios;
use crate::error::{Error, Result};
use crate::eval::EvalOptions;
use crate::federation::{FederationConfig, Mode, SecureConfig};
use crate::model::{ModelKind, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalOptions,
    #[serde(default)]
    pub secure: SecureConfig,
    #[serde(default)]
    pub attack: AttackSection,
    #[serde(default)]
    pub report: ReportSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    /// Tab-separated `head relation tail` file.
    pub triples: Option<PathBuf>,
    pub entities: Option<PathBuf>,
    pub relations: Option<PathBuf>,
    /// Where `split` writes and `train` reads client directories;
    /// defaults to `<output_dir>/split`.
    pub split_dir: Option<PathBuf>,
    pub num_clients: usize,
    pub ratios: SplitRatios,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            triples: None,
            entities: None,
            relations: None,
            split_dir: None,
            num_clients: 5,
            ratios: SplitRatios::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub mode: Mode,
    pub model: ModelKind,
    pub rounds: usize,
    pub sample_fraction: f64,
    pub eval_every: usize,
    pub patience: usize,
    pub hyper: TrainConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        let fed = FederationConfig::default();
        Self {
            mode: fed.mode,
            model: ModelKind::TransE,
            rounds: fed.rounds,
            sample_fraction: fed.sample_fraction,
            eval_every: fed.eval_every,
            patience: fed.patience,
            hyper: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    pub leakage_ratios: Vec<f64>,
    pub traitor: usize,
    /// Training run to attack; defaults to `output_dir`.
    pub run_dir: Option<PathBuf>,
}

impl Default for AttackSection {
    fn default() -> Self {
        Self {
            leakage_ratios: vec![0.3, 0.5, 1.0],
            traitor: 0,
            run_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    /// Training run directories to compare.
    pub runs: Vec<PathBuf>,
    pub targets: Vec<f64>,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self {
            runs: Vec::new(),
            targets: vec![0.2, 0.4],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Split,
    Train,
    Attack,
    Report,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base)
    }

    /// Parses manifest text, resolving relative paths against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut m: RunManifest = toml::from_str(text).map_err(|e| Error::Validation {
            field: "manifest".into(),
            message: e.to_string(),
        })?;
        m.resolve(base);
        Ok(m)
    }

    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.output_dir);
        for p in [
            &mut self.dataset.triples,
            &mut self.dataset.entities,
            &mut self.dataset.relations,
            &mut self.dataset.split_dir,
            &mut self.attack.run_dir,
        ]
        .into_iter()
        .flatten()
        {
            join(p);
        }
        self.report.runs.iter_mut().for_each(join);
    }

    pub fn split_dir(&self) -> PathBuf {
        self.dataset.split_dir.clone().unwrap_or_else(|| self.output_dir.join("split"))
    }

    pub fn attack_run_dir(&self) -> PathBuf {
        self.attack.run_dir.clone().unwrap_or_else(|| self.output_dir.clone())
    }

    pub fn federation(&self) -> FederationConfig {
        FederationConfig {
            mode: self.train.mode,
            rounds: self.train.rounds,
            sample_fraction: self.train.sample_fraction,
            eval_every: self.train.eval_every,
            patience: self.train.patience,
            seed: self.seed,
            secure: self.secure,
            eval: EvalOptions {
                norm: self.train.hyper.norm,
                ..self.eval
            },
        }
    }

    /// Checks flag combinations and the paths `command` will read.
    pub fn validate(&self, command: Command) -> Result<()> {
        let exists = |field: &str, p: &Path| {
            if p.exists() {
                Ok(())
            } else {
                Err(Error::validation(field, format!("{} does not exist", p.display())))
            }
        };
        match command {
            Command::Split => {
                let triples = self
                    .dataset
                    .triples
                    .as_deref()
                    .ok_or_else(|| Error::validation("dataset.triples", "required by split"))?;
                exists("dataset.triples", triples)?;
                if let Some(p) = &self.dataset.entities {
                    exists("dataset.entities", p)?;
                }
                if let Some(p) = &self.dataset.relations {
                    exists("dataset.relations", p)?;
                }
                if self.dataset.num_clients == 0 {
                    return Err(Error::validation("dataset.num_clients", "must be at least 1"));
                }
                self.dataset.ratios.validate()
            }
            Command::Train => {
                exists("dataset.split_dir", &self.split_dir())?;
                self.train.hyper.validate()?;
                self.federation().validate()
            }
            Command::Attack => {
                exists("attack.run_dir", &self.attack_run_dir())?;
                if self.attack.leakage_ratios.is_empty() {
                    return Err(Error::validation("attack.leakage_ratios", "at least one ratio is required"));
                }
                if let Some(r) = self.attack.leakage_ratios.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
                    return Err(Error::validation("attack.leakage_ratios", format!("{r} is outside (0, 1]")));
                }
                Ok(())
            }
            Command::Report => {
                if self.report.runs.is_empty() {
                    return Err(Error::validation("report.runs", "at least one run is required"));
                }
                for r in &self.report.runs {
                    exists("report.runs", r)?;
                }
                if let Some(t) = self.report.targets.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
                    return Err(Error::validation("report.targets", format!("{t} is outside (0, 1]")));
                }
                Ok(())
            }
        }
    }
}
