//! Experiment configuration: a single TOML file resolved against defaults,
//! echoed verbatim (with its content hash) into every output.

use phoscat::chain::{ChainConfig, EnsembleConfig, InitialData, WavePacketSpec};
use phoscat::dispersion::DispersionRelation;
use phoscat::scattering::{ScatteringOpts, ThermostatParams};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    pub dispersion: DispersionSection,
    pub thermostat: ThermostatSection,
    pub grid: GridSection,
    pub chain: ChainSection,
    pub ensemble: EnsembleSection,
    pub packet: PacketSection,
    pub simulate: SimulateSection,
    pub identities: IdentitiesSection,
    pub compare: CompareSection,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 1,
            dispersion: Default::default(),
            thermostat: Default::default(),
            grid: Default::default(),
            chain: Default::default(),
            ensemble: Default::default(),
            packet: Default::default(),
            simulate: Default::default(),
            identities: Default::default(),
            compare: Default::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DispersionSection {
    /// "nearest_neighbor" or "tabulated"
    pub model: String,
    pub omega_min: f64,
    /// two-column `y alpha_y` file for the tabulated model
    pub couplings_file: Option<PathBuf>,
    pub radius: usize,
}

impl Default for DispersionSection {
    fn default() -> Self {
        DispersionSection {
            model: "nearest_neighbor".into(),
            omega_min: 0.0,
            couplings_file: None,
            radius: 8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThermostatSection {
    pub gamma: f64,
    pub mu: f64,
    pub temperature: f64,
}

impl Default for ThermostatSection {
    fn default() -> Self {
        ThermostatSection {
            gamma: 1.0,
            mu: 1.0,
            temperature: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    /// coefficient table resolution over the torus
    pub k_points: usize,
    pub delta_excl: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            k_points: 256,
            delta_excl: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainSection {
    pub n: usize,
    /// macroscopic box length; the lattice scale is `box_len / n`
    pub box_len: f64,
    /// macroscopic time horizon (microscopic is `t_end_macro / epsilon`)
    pub t_end_macro: f64,
}

impl Default for ChainSection {
    fn default() -> Self {
        ChainSection {
            n: 1024,
            box_len: 6.0,
            t_end_macro: 1.6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub m: usize,
    pub chunk: usize,
    /// number of evenly spaced observation times
    pub checkpoints: usize,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        EnsembleSection {
            m: 400,
            chunk: 16,
            checkpoints: 8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PacketSection {
    pub k0: f64,
    pub x0: f64,
    pub sigma: f64,
    pub amplitude: f64,
}

impl Default for PacketSection {
    fn default() -> Self {
        PacketSection {
            k0: 0.2,
            x0: -0.6,
            sigma: 0.1,
            amplitude: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    /// "packet", "thermal" or "zero"
    pub init: String,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            init: "thermal".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdentitiesSection {
    pub gammas: Vec<f64>,
    pub mus: Vec<f64>,
    /// test hook: corrupt Gamma by this amount before the suite
    pub perturb_gamma: f64,
}

impl Default for IdentitiesSection {
    fn default() -> Self {
        IdentitiesSection {
            gammas: vec![0.5, 1.0, 2.0],
            mus: vec![0.5, 1.0, 2.0, 10.0],
            perturb_gamma: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSection {
    pub z_threshold: f64,
    pub spectrum_bins: usize,
    /// window length (sites) of the density estimator
    pub window_len: usize,
}

impl Default for CompareSection {
    fn default() -> Self {
        CompareSection {
            z_threshold: 3.0,
            spectrum_bins: 32,
            window_len: 64,
        }
    }
}

#[derive(Debug)]
pub enum ConfigError {
    Io(String),
    Parse(String),
    Invalid(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Io(s) => write!(f, "config io error: {s}"),
            ConfigError::Parse(s) => write!(f, "config parse error: {s}"),
            ConfigError::Invalid(s) => write!(f, "invalid config: {s}"),
        }
    }
}

impl std::error::Error for ConfigError {}

impl Config {
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn dispersion(&self) -> Result<DispersionRelation, ConfigError> {
        let d = match self.dispersion.model.as_str() {
            "nearest_neighbor" => DispersionRelation::nearest_neighbor(self.dispersion.omega_min),
            "tabulated" => {
                let path = self.dispersion.couplings_file.as_ref().ok_or_else(|| {
                    ConfigError::Invalid("tabulated model needs couplings_file".into())
                })?;
                DispersionRelation::from_coupling_file(path, self.dispersion.radius)
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?
            }
            other => {
                return Err(ConfigError::Invalid(format!(
                    "unknown dispersion model '{other}'"
                )))
            }
        };
        let report = d.validate();
        if !report.is_valid() {
            return Err(ConfigError::Invalid(report.to_string()));
        }
        Ok(d)
    }

    pub fn params(&self) -> Result<ThermostatParams, ConfigError> {
        ThermostatParams::new(
            self.thermostat.gamma,
            self.thermostat.mu,
            self.thermostat.temperature,
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn scattering_opts(&self) -> ScatteringOpts {
        ScatteringOpts {
            delta_excl: self.grid.delta_excl,
            ..ScatteringOpts::default()
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.chain.box_len / self.chain.n as f64
    }

    pub fn packet_spec(&self) -> WavePacketSpec {
        WavePacketSpec {
            k0: self.packet.k0,
            x0: self.packet.x0,
            sigma: self.packet.sigma,
            amplitude: self.packet.amplitude,
            epsilon: self.epsilon(),
        }
    }

    pub fn initial_data(&self) -> Result<InitialData, ConfigError> {
        Ok(match self.simulate.init.as_str() {
            "packet" => InitialData::Packet(self.packet_spec()),
            "thermal" => InitialData::Thermal,
            "zero" => InitialData::Zero,
            other => return Err(ConfigError::Invalid(format!("unknown init '{other}'"))),
        })
    }

    pub fn ensemble_config(&self, init: InitialData) -> Result<EnsembleConfig, ConfigError> {
        let t_end = self.chain.t_end_macro / self.epsilon();
        let n_checkpoints = self.ensemble.checkpoints;
        let checkpoints = (1..=n_checkpoints)
            .map(|i| t_end * i as f64 / n_checkpoints as f64)
            .collect();
        Ok(EnsembleConfig {
            chain: ChainConfig {
                n: self.chain.n,
                params: self.params()?,
                disp: self.dispersion()?,
                seed: self.seed,
                t_end,
            },
            init,
            m: self.ensemble.m,
            checkpoints,
            chunk: self.ensemble.chunk,
        })
    }

    /// Canonical serialized form; the hash of this string names the run.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn content_hash(&self) -> String {
        format!("{:016x}", fnv1a64(self.canonical().as_bytes()))
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}
