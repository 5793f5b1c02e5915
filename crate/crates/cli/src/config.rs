//! Run configuration: a TOML document whose every section has defaults.
//!
//! ```toml
//! seed = 7                  # required here or via --seed
//! preset = "toy"            # network preset: "toy" | "full"
//!
//! [network]                 # optional overrides of preset fields
//! epochs = 80
//!
//! [corpus]
//! train_missions = 11
//! eval_missions = 2
//! duration = 400.0          # s per generated mission
//!
//! [imu_noise]               # µg/√Hz, °/√Hz, m/s², rad/s, per √s
//! vrw = 57.0
//! arw = 0.018
//!
//! [dvl]
//! beam_pitch_deg = 20.0
//! [dvl.errors]              # per-beam scale, bias m/s, noise m/s
//! noise_std = 0.042
//!
//! [ekf.initial]             # 1σ: m/s, rad, m/s², rad/s
//! [ekf.process]             # densities of the continuous-time noise
//!
//! [training]
//! windows = "strided"       # default: strided for toy, disjoint otherwise
//!
//! [evaluation]
//! durations = [30.0, 40.0, 50.0]
//! n_starts = 5
//! inflation = 1.0
//! ```
//!
//! Resolution fills in every default, so the resolved document alone
//! reproduces a run; its SHA-256 is the configuration hash stamped on every
//! output file.

use std::path::{Path, PathBuf};

use dvlnav::dvl_model::{beam_directions, BeamGeometry, DvlErrorParams};
use dvlnav::ekf::EkfConfig;
use dvlnav::eval_runner::EvalConfig;
use dvlnav::set_transformer::StHyperParams;
use dvlnav::sim_data::{corpus_specs, ImuNoiseParams, Provenance, TrajectorySpec, WindowMode};
use dvlnav::{NavError, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    /// Output directory. Not part of the hashed configuration.
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    pub preset: String,
    pub network: Option<toml::Table>,
    pub corpus: CorpusConfig,
    pub imu_noise: ImuNoiseParams,
    pub dvl: DvlConfig,
    pub ekf: EkfConfig,
    pub training: TrainingConfig,
    pub evaluation: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            out: None,
            preset: "toy".into(),
            network: None,
            corpus: CorpusConfig::default(),
            imu_noise: ImuNoiseParams::default(),
            dvl: DvlConfig::default(),
            ekf: EkfConfig::default(),
            training: TrainingConfig::default(),
            evaluation: EvalConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub train_missions: usize,
    pub eval_missions: usize,
    /// s, length of each generated mission.
    pub duration: f64,
    /// Explicit trajectories, training missions first. When empty, varied
    /// layouts are drawn from the seed.
    pub missions: Vec<TrajectorySpec>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            train_missions: 11,
            eval_missions: 2,
            duration: 400.0,
            missions: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DvlConfig {
    pub beam_pitch_deg: f64,
    pub errors: DvlErrorParams,
}

impl Default for DvlConfig {
    fn default() -> Self {
        DvlConfig {
            beam_pitch_deg: 20.0,
            errors: DvlErrorParams::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub windows: Option<WindowMode>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub preset: Option<String>,
    pub durations: Option<Vec<f64>>,
}

/// A configuration with every default applied and derived objects built.
#[derive(Debug, Clone)]
pub struct Resolved {
    /// Fixpoint document: resolving it again yields the same values.
    pub config: RunConfig,
    pub seed: u64,
    pub out: PathBuf,
    pub hyper: StHyperParams,
    pub windows: WindowMode,
    pub geometry: BeamGeometry,
    pub eval: EvalConfig,
    pub hash: String,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| NavError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| NavError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| NavError::Config(format!("{}: {e}", path.display())))
    }

    pub fn resolve(mut self, overrides: &Overrides) -> Result<Resolved> {
        if let Some(seed) = overrides.seed {
            self.seed = Some(seed);
        }
        if let Some(out) = &overrides.out {
            self.out = Some(out.clone());
        }
        if let Some(preset) = &overrides.preset {
            if *preset != self.preset {
                self.network = None;
            }
            self.preset = preset.clone();
        }
        if let Some(d) = &overrides.durations {
            self.evaluation.durations = d.clone();
        }
        let seed = self
            .seed
            .ok_or_else(|| NavError::Config("a seed is required (config `seed` or --seed)".into()))?;

        let hyper = resolve_network(&self.preset, self.network.as_ref())?;
        self.network = Some(toml::Table::try_from(&hyper).map_err(|e| NavError::Config(e.to_string()))?);
        let windows = self.training.windows.unwrap_or(if self.preset == "toy" {
            WindowMode::Strided
        } else {
            WindowMode::Disjoint
        });
        self.training.windows = Some(windows);

        let c = &mut self.corpus;
        let count = c.train_missions + c.eval_missions;
        if c.train_missions == 0 || c.eval_missions == 0 {
            return Err(NavError::Config("corpus needs at least one training and one evaluation mission".into()));
        }
        if c.missions.is_empty() {
            if !(c.duration > 0.0) {
                return Err(NavError::Config("corpus.duration must be positive".into()));
            }
            c.missions = corpus_specs(count, c.duration, seed);
        } else if c.missions.len() != count {
            return Err(NavError::Config(format!(
                "corpus.missions lists {} trajectories but train_missions + eval_missions = {count}",
                c.missions.len()
            )));
        }

        self.imu_noise.validate().map_err(|e| NavError::Config(e.to_string()))?;
        let geometry =
            beam_directions(self.dvl.beam_pitch_deg.to_radians()).map_err(|e| NavError::Config(e.to_string()))?;
        let mut eval = self.evaluation.clone();
        eval.ekf = self.ekf.clone();
        eval.dvl_noise_std = self.dvl.errors.noise_std;
        eval.validate()?;
        if !(1..=20).contains(&self.ekf.taylor_order) {
            return Err(NavError::Config("ekf.taylor_order must be in 1..=20".into()));
        }

        let text = toml::to_string(&self).map_err(|e| NavError::Config(e.to_string()))?;
        let hash = hex::encode(Sha256::digest(text.as_bytes()));
        let out = self.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        Ok(Resolved {
            config: self,
            seed,
            out,
            hyper,
            windows,
            geometry,
            eval,
            hash,
        })
    }
}

fn resolve_network(preset: &str, overrides: Option<&toml::Table>) -> Result<StHyperParams> {
    let base = StHyperParams::preset(preset)
        .ok_or_else(|| NavError::Config(format!("unknown network preset {preset:?} (expected \"toy\" or \"full\")")))?;
    let hyper = match overrides {
        None => base,
        Some(table) => {
            let mut merged = toml::Table::try_from(&base).map_err(|e| NavError::Config(e.to_string()))?;
            for (k, v) in table {
                merged.insert(k.clone(), v.clone());
            }
            merged
                .try_into()
                .map_err(|e: toml::de::Error| NavError::Config(format!("[network]: {e}")))?
        }
    };
    hyper.validate().map_err(|e| NavError::Config(e.to_string()))?;
    Ok(hyper)
}

impl Resolved {
    pub fn provenance(&self) -> Provenance {
        Provenance {
            config_hash: self.hash.clone(),
            seed: self.seed,
        }
    }

    pub fn mission_ids(&self) -> Vec<String> {
        (1..=self.config.corpus.missions.len())
            .map(|i| format!("M{i:02}"))
            .collect()
    }

    pub fn manifest(&self) -> Manifest {
        let ids = self.mission_ids();
        let n_train = self.config.corpus.train_missions;
        Manifest {
            config_hash: self.hash.clone(),
            seed: self.seed,
            train_missions: ids[..n_train].to_vec(),
            eval_missions: ids[n_train..].to_vec(),
            config: self.config.clone(),
        }
    }
}

/// Written next to simulated data; lists the mission split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub train_missions: Vec<String>,
    pub eval_missions: Vec<String>,
    pub config: RunConfig,
}

impl Manifest {
    pub const FILE: &'static str = "manifest.toml";

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| NavError::Config(e.to_string()))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(Self::FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| NavError::io(&path, e))?;
        toml::from_str(&text).map_err(|e| NavError::Schema {
            path: path.clone(),
            msg: e.to_string(),
        })
    }
}
