use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cohorts::{CohortCounts, CohortKind};
use crate::detectors::{DetectorKind, TrainConfig};
use crate::diffusion::{DiffusionHyper, ScheduleSpec};
use crate::error::{Error, Result};
use crate::marl::GameConfig;
use crate::synth::SynthSpec;

/// Attack methods compared within one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    MarlFull,
    MarlAuto,
    MarlAutoCyborg,
    MarlSa,
    Random,
    Dice,
}

impl Method {
    pub const ALL: [Method; 6] =
        [Method::MarlFull, Method::MarlAuto, Method::MarlAutoCyborg, Method::MarlSa, Method::Random, Method::Dice];

    pub fn name(self) -> &'static str {
        match self {
            Method::MarlFull => "marl-full",
            Method::MarlAuto => "marl-auto",
            Method::MarlAutoCyborg => "marl-auto-cyborg",
            Method::MarlSa => "marl-sa",
            Method::Random => "random",
            Method::Dice => "dice",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }

    /// Cohorts the method controls; empty for the baselines.
    pub fn kinds(self) -> &'static [CohortKind] {
        match self {
            Method::MarlFull | Method::MarlSa => &CohortKind::ALL,
            Method::MarlAuto => &[CohortKind::Automated],
            Method::MarlAutoCyborg => &[CohortKind::Automated, CohortKind::Cyborg],
            Method::Random | Method::Dice => &[],
        }
    }

    pub fn is_marl(self) -> bool {
        !self.kinds().is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Prefix of a stored graph (`<prefix>.nodes.csv`, ...). Synthesized when absent.
    pub path: Option<PathBuf>,
    pub synth: SynthSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionConfig {
    pub schedule: ScheduleSpec,
    pub train: DiffusionHyper,
    /// Corruption depth `T′`; `T/5` when absent.
    pub t_corrupt: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetClass {
    /// Half humans, half bots.
    #[default]
    Balanced,
    Bot,
    Human,
    Any,
}

/// Which test nodes form the target set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetConfig {
    /// 0 means every eligible test node.
    pub count: usize,
    pub class: TargetClass,
}

impl Default for TargetConfig {
    fn default() -> Self {
        TargetConfig { count: 20, class: TargetClass::Balanced }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub seeds: Vec<u64>,
    /// Edge budget as a fraction of the clean edge count.
    pub r: f64,
    /// Cap on injected accounts.
    pub delta_v: usize,
    /// Ratios swept for the statistics table, using marl-full.
    pub stats_ratios: Vec<f64>,
    pub detectors: Vec<String>,
    pub methods: Vec<Method>,
    /// Adds marl-sa to `methods`.
    pub sa: bool,
    pub t_up: usize,
    pub output: PathBuf,
    pub data: DataConfig,
    pub surrogate: TrainConfig,
    pub zoo: TrainConfig,
    pub diffusion: DiffusionConfig,
    pub cohorts: CohortCounts,
    pub targets: TargetConfig,
    pub game: GameConfig,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            seeds: vec![0],
            r: 0.15,
            delta_v: 10,
            stats_ratios: vec![0.0, 0.05, 0.10, 0.15],
            detectors: vec!["gcn".into(), "sgc".into(), "sage".into()],
            methods: vec![Method::MarlFull, Method::MarlAuto, Method::MarlAutoCyborg, Method::Random, Method::Dice],
            sa: false,
            t_up: 10,
            output: PathBuf::from("runs"),
            data: DataConfig::default(),
            surrogate: TrainConfig::default(),
            zoo: TrainConfig::default(),
            diffusion: DiffusionConfig::default(),
            cohorts: CohortCounts::new(20, 10, 10),
            targets: TargetConfig::default(),
            game: GameConfig::default(),
        }
    }
}

impl AttackConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: AttackConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r >= 0.0 && self.r.is_finite()) {
            return Err(Error::Config(format!("r must be a finite non-negative number, got {}", self.r)));
        }
        if self.stats_ratios.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(Error::Config("stats ratios must be finite and non-negative".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("no seeds given".into()));
        }
        if self.cohorts.evolved > self.delta_v {
            return Err(Error::Config(format!(
                "{} evolved bots requested but delta_v allows {}",
                self.cohorts.evolved, self.delta_v
            )));
        }
        if self.t_up == 0 {
            return Err(Error::Config("t_up must be at least 1".into()));
        }
        for d in &self.detectors {
            DetectorKind::parse(d)?;
        }
        if self.data.path.is_none() {
            self.data.synth.validate()?;
        }
        self.game.validate()
    }

    /// `round(r · |E|)`.
    pub fn edge_budget(r: f64, edges: usize) -> usize {
        (r * edges as f64).round() as usize
    }

    /// Methods in run order, with marl-sa appended when `sa` is set.
    pub fn method_list(&self) -> Vec<Method> {
        let mut m = self.methods.clone();
        if self.sa && !m.contains(&Method::MarlSa) {
            m.push(Method::MarlSa);
        }
        m.dedup();
        m
    }
}
