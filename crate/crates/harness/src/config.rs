//! Experiment configuration, stored as TOML.

use std::path::PathBuf;

use pufsim_core::entropy::CalibrationAnchor;
use pufsim_core::population::{MismatchWeights, PlacementKind, PositionBias};
use pufsim_core::{EnvironmentCondition, NoiseCalibration, PlacementConfig, PopulationSpec};
use pufsim_nist::TestKind;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const SCHEMA_VERSION: &str = "1.0";
const SUPPORTED_MAJOR: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: String,
    /// Seeds above the TOML integer range are written as decimal strings.
    #[serde(with = "seed_format")]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub population: PopulationConfig,
    pub calibration: CalibrationConfig,
    /// Readout sessions; the first one is the enrollment session.
    pub readout: Vec<ReadoutConfig>,
    #[serde(default)]
    pub masking: MaskingConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub randomness: RandomnessConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementChoice {
    /// One region per cell on a `cells x 1` grid.
    Independent,
    /// All cells in one region on a `cells x 1` grid.
    SingleRegion,
    #[serde(rename = "d1_clustered")]
    D1,
    #[serde(rename = "d2_32x32")]
    D2,
    #[serde(rename = "d3_64x16_adjacent")]
    D3,
    #[serde(rename = "d4_64x16_nonadjacent")]
    D4,
    /// Explicit table in `custom_placement`.
    Custom,
}

/// Same offset on every `stride`-th position, starting at position 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodicBias {
    pub stride: usize,
    /// Offset in units of `sigma_mismatch`.
    pub offset_sigmas: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationConfig {
    pub devices: usize,
    /// Defaults to the placement's cell count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
    pub sigma_mismatch: f64,
    pub placement: PlacementChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom_placement: Option<PlacementConfig>,
    #[serde(default)]
    pub global_weight: f64,
    #[serde(default)]
    pub regional_weight: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bias: Vec<PositionBias>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periodic_bias: Option<PeriodicBias>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CalibrationConfig {
    /// Temperature anchors referenced to an error-free read at 25 C, 1.0 V.
    TemperatureStudy {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma_mismatch: Option<f64>,
    },
    /// Supply-voltage anchors referenced to 3.3 V at 25 C.
    VoltageStudy {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma_mismatch: Option<f64>,
        nominal_ber: f64,
    },
    SinglePoint {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma_mismatch: Option<f64>,
        env: EnvironmentCondition,
        target_ber: f64,
    },
    Anchors {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma_mismatch: Option<f64>,
        reference: EnvironmentCondition,
        anchors: Vec<CalibrationAnchor>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutConfig {
    pub env: EnvironmentCondition,
    pub trials: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskingConfig {
    pub enabled: bool,
    pub bias_threshold: f64,
    pub stability_threshold: f64,
}

impl Default for MaskingConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            bias_threshold: 0.3,
            stability_threshold: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    pub bucket_width_percent: f64,
    /// Per-region intra-HD aggregates over the placement regions.
    pub per_region: bool,
    pub colormap: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            bucket_width_percent: 1.0,
            per_region: true,
            colormap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub envs: Vec<EnvironmentCondition>,
    pub trials: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            envs: Vec::new(),
            trials: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceSource {
    /// One sequence per device: its enrolled signature.
    PerDevice,
    /// Enrolled signatures concatenated in device order, cut into
    /// sequences of `sequence_bits` (the remainder is dropped).
    Concatenated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomnessConfig {
    pub enabled: bool,
    pub alpha: f64,
    pub tests: Vec<TestKind>,
    pub source: SequenceSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence_bits: Option<usize>,
    pub block_size: usize,
    pub enforce_min_length: bool,
    /// Run the rank test once over all sequences joined together.
    pub rank_on_concatenation: bool,
}

impl Default for RandomnessConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            alpha: 0.001,
            tests: TestKind::ALL.to_vec(),
            source: SequenceSource::PerDevice,
            sequence_bits: None,
            block_size: 128,
            enforce_min_length: true,
            rank_on_concatenation: false,
        }
    }
}

mod seed_format {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
        match i64::try_from(*seed) {
            Ok(v) => s.serialize_i64(v),
            Err(_) => s.serialize_str(&seed.to_string()),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(u64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Int(v) => Ok(v),
            Repr::Text(t) => t.trim().parse().map_err(|_| de::Error::custom(format!("invalid seed {t:?}"))),
        }
    }
}

fn config_error(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: toml::Table = text.parse().map_err(|e| config_error(format!("invalid TOML: {e}")))?;
        let version = raw
            .get("schema_version")
            .and_then(|v| v.as_str())
            .ok_or_else(|| config_error("missing schema_version"))?;
        check_schema_version(version)?;
        let config: Self = toml::from_str(text).map_err(|e| config_error(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_error(format!("cannot serialize config: {e}")))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn population_spec(&self) -> Result<PopulationSpec> {
        let p = &self.population;
        let placement = match p.placement {
            PlacementChoice::D1 => PlacementConfig::built_in(PlacementKind::D1Clustered)?,
            PlacementChoice::D2 => PlacementConfig::built_in(PlacementKind::D2Blocks32x32)?,
            PlacementChoice::D3 => PlacementConfig::built_in(PlacementKind::D3Adjacent64x16)?,
            PlacementChoice::D4 => PlacementConfig::built_in(PlacementKind::D4Isolated64x16)?,
            PlacementChoice::Independent | PlacementChoice::SingleRegion => {
                let cells = p
                    .cells
                    .ok_or_else(|| config_error("population.cells is required for this placement"))?;
                if p.placement == PlacementChoice::Independent {
                    PlacementConfig::independent(cells, 1)?
                } else {
                    PlacementConfig::single_region(cells, 1)?
                }
            }
            PlacementChoice::Custom => p
                .custom_placement
                .clone()
                .ok_or_else(|| config_error("placement = \"custom\" needs a custom_placement table"))?,
        };
        if p.placement != PlacementChoice::Custom && p.custom_placement.is_some() {
            return Err(config_error("custom_placement is only used with placement = \"custom\""));
        }
        let cells = p.cells.unwrap_or(placement.cell_count());
        if cells != placement.cell_count() {
            return Err(config_error(format!(
                "population.cells = {cells} but the placement has {} cells",
                placement.cell_count()
            )));
        }
        let local_sq = 1.0 - p.global_weight.powi(2) - p.regional_weight.powi(2);
        if p.global_weight < 0.0 || p.regional_weight < 0.0 || local_sq < -1e-12 {
            return Err(config_error(
                "global and regional weights must be non-negative with squares summing to at most 1",
            ));
        }
        let weights = MismatchWeights {
            global: p.global_weight,
            regional: p.regional_weight,
            local: local_sq.max(0.0).sqrt(),
        };
        let mut bias_map = Vec::new();
        if let Some(pattern) = p.periodic_bias {
            if pattern.stride == 0 {
                return Err(config_error("periodic_bias.stride must be positive"));
            }
            bias_map.extend((0..cells).step_by(pattern.stride).map(|c| {
                let (row, col) = placement.position_of(c);
                PositionBias {
                    row,
                    col,
                    offset: pattern.offset_sigmas * p.sigma_mismatch,
                }
            }));
        }
        bias_map.extend(p.bias.iter().copied());
        let spec = PopulationSpec {
            num_devices: p.devices,
            cells_per_device: cells,
            sigma_mismatch: p.sigma_mismatch,
            weights,
            placement,
            bias_map,
            master_seed: self.master_seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn noise_calibration(&self) -> Result<NoiseCalibration> {
        let default_sigma = self.population.sigma_mismatch;
        let calibration = match &self.calibration {
            CalibrationConfig::TemperatureStudy { sigma_mismatch } => {
                NoiseCalibration::temperature_study(1.0).with_sigma_mismatch(sigma_mismatch.unwrap_or(default_sigma))?
            }
            CalibrationConfig::VoltageStudy {
                sigma_mismatch,
                nominal_ber,
            } => NoiseCalibration::voltage_study(sigma_mismatch.unwrap_or(default_sigma), *nominal_ber)?,
            CalibrationConfig::SinglePoint {
                sigma_mismatch,
                env,
                target_ber,
            } => NoiseCalibration::single_point(sigma_mismatch.unwrap_or(default_sigma), *env, *target_ber)?,
            CalibrationConfig::Anchors {
                sigma_mismatch,
                reference,
                anchors,
            } => NoiseCalibration::new(sigma_mismatch.unwrap_or(default_sigma), *reference, anchors.iter().copied())?,
        };
        Ok(calibration)
    }

    /// The enrollment environment (first readout session).
    pub fn nominal_env(&self) -> Result<EnvironmentCondition> {
        self.readout
            .first()
            .map(|r| r.env)
            .ok_or_else(|| config_error("at least one readout session is required"))
    }

    pub fn validate(&self) -> Result<()> {
        check_schema_version(&self.schema_version)?;
        let spec = self.population_spec()?;
        self.noise_calibration()?;
        self.nominal_env()?;
        for (i, r) in self.readout.iter().enumerate() {
            if r.trials == 0 {
                return Err(config_error(format!("readout session {i} needs at least one trial")));
            }
        }
        if !self.sweep.envs.is_empty() && self.sweep.trials == 0 {
            return Err(config_error("sweep.trials must be positive"));
        }
        let m = &self.masking;
        if m.enabled {
            if !(m.bias_threshold > 0.0 && m.bias_threshold <= 0.5) {
                return Err(config_error("masking.bias_threshold must lie in (0, 0.5]"));
            }
            if !(m.stability_threshold > 0.5 && m.stability_threshold <= 1.0) {
                return Err(config_error("masking.stability_threshold must lie in (0.5, 1]"));
            }
            if spec.num_devices < 2 {
                return Err(config_error("masking needs at least two devices"));
            }
        }
        if !(self.metrics.bucket_width_percent > 0.0 && self.metrics.bucket_width_percent.is_finite()) {
            return Err(config_error("metrics.bucket_width_percent must be positive"));
        }
        if spec.num_devices < 2 {
            return Err(config_error("inter-HD needs at least two devices"));
        }
        let r = &self.randomness;
        if r.enabled {
            if !(r.alpha > 0.0 && r.alpha < 1.0) {
                return Err(config_error("randomness.alpha must lie in (0, 1)"));
            }
            if r.tests.is_empty() {
                return Err(config_error("randomness.tests is empty"));
            }
            if r.source == SequenceSource::Concatenated && !r.sequence_bits.is_some_and(|b| b > 0) {
                return Err(config_error("randomness.sequence_bits is required for the concatenated source"));
            }
        }
        Ok(())
    }

    /// Every readout and sweep environment must lie inside the calibration.
    /// Checked when signatures are first read, not at load time.
    pub fn check_environments(&self) -> Result<(), pufsim_core::Error> {
        let calibration = self.noise_calibration().map_err(|e| match e {
            HarnessError::Core(inner) => inner,
            other => pufsim_core::Error::InvalidCalibration(other.to_string()),
        })?;
        for env in self.readout.iter().map(|r| &r.env).chain(&self.sweep.envs) {
            calibration.target_ber_at(env)?;
        }
        Ok(())
    }

    /// Canonical text used for the manifest digest; the output directory is
    /// left out so that relocating a run does not change it.
    pub fn canonical_text(&self) -> Result<String> {
        Self {
            output_dir: None,
            ..self.clone()
        }
        .to_toml()
    }
}

fn check_schema_version(version: &str) -> Result<()> {
    let major = version
        .split('.')
        .next()
        .and_then(|m| m.parse::<u32>().ok())
        .ok_or_else(|| config_error(format!("malformed schema_version {version:?}")))?;
    if major != SUPPORTED_MAJOR {
        return Err(config_error(format!(
            "unsupported schema major version {major} (this build reads {SUPPORTED_MAJOR}.x)"
        )));
    }
    Ok(())
}
