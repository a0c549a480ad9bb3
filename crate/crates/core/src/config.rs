//! JSON configuration file. Every section is optional; missing sections
//! fall back to the built-in defaults in `data/default_config.json`.

use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DEFAULT_PACKET_LENGTH_BITS;
use crate::perf::MacParams;
use crate::radio::{McsTables, PropagationParams, RadioEnv};
use crate::scenarios::{
    ExplicitScenario, GridDefaults, HomeGeometry, Sampling, ScenarioSpec, DEFAULT_N_STA,
    TEST_2_4_FIXTURE_SEED,
};
use crate::selection::SelectionConfig;

const BUILTIN: &str = include_str!("../data/default_config.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub propagation: PropagationParams,
    #[serde(default = "builtin_mcs")]
    pub mcs_tables: McsTables,
    #[serde(default)]
    pub mac_overheads: MacParams,
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub traffic: TrafficSection,
    #[serde(default)]
    pub run: RunSection,
}

fn builtin_mcs() -> McsTables {
    Config::builtin().mcs_tables.clone()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub sampling: Sampling,
    pub home: HomeGeometry,
    pub fixture_seed: u64,
    /// Generated scenario to run instead of a built-in test.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec: Option<ScenarioSpec>,
    /// Explicit topology to run or validate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explicit: Option<ExplicitScenario>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection {
            sampling: Sampling::default(),
            home: HomeGeometry::default(),
            fixture_seed: TEST_2_4_FIXTURE_SEED,
            spec: None,
            explicit: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficSection {
    pub packet_length_bits: f64,
    pub n_sta: usize,
    /// Per-STA load for scenario runs; built-in tests sweep their own.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_sta_load_bps: Option<f64>,
}

impl Default for TrafficSection {
    fn default() -> Self {
        TrafficSection {
            packet_length_bits: DEFAULT_PACKET_LENGTH_BITS,
            n_sta: DEFAULT_N_STA,
            per_sta_load_bps: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub k: Option<usize>,
    pub workers: Option<usize>,
    pub emit_events: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 20_240_501,
            k: None,
            workers: None,
            emit_events: false,
        }
    }
}

impl Config {
    /// Built-in defaults, parsed once.
    pub fn builtin() -> &'static Config {
        static CELL: OnceLock<Config> = OnceLock::new();
        CELL.get_or_init(|| {
            let c: Config = serde_json::from_str(BUILTIN).expect("built-in config parses");
            c.check().expect("built-in config is valid");
            c
        })
    }

    pub fn from_json(text: &str) -> Result<Config> {
        let c: Config = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.check()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let c: Config = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        c.check()?;
        Ok(c)
    }

    pub fn check(&self) -> Result<()> {
        self.propagation.check()?;
        self.mac_overheads.band_2g4.check()?;
        self.mac_overheads.band_5g.check()?;
        if !(self.mac_overheads.d_cap_ms > 0.0) {
            return Err(Error::Config("d_cap_ms must be positive".into()));
        }
        self.selection.check()?;
        if !(self.traffic.packet_length_bits > 0.0) {
            return Err(Error::Config("packet_length_bits must be positive".into()));
        }
        if self.run.k == Some(0) {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.scenario.spec.is_some() && self.scenario.explicit.is_some() {
            return Err(Error::Config("scenario takes either spec or explicit, not both".into()));
        }
        if let Some(s) = &self.scenario.spec {
            s.check()?;
        }
        Ok(())
    }

    pub fn radio_env(&self) -> RadioEnv {
        RadioEnv::new(self.propagation, self.mcs_tables.clone())
    }

    pub fn grid_defaults(&self) -> GridDefaults {
        GridDefaults {
            seed: self.run.seed,
            sampling: self.scenario.sampling,
            home: self.scenario.home,
            fixture_seed: self.scenario.fixture_seed,
            propagation: self.propagation,
        }
    }
}

impl Default for Config {
    fn default() -> Self {
        Config::builtin().clone()
    }
}
