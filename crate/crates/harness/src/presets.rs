//! Built-in experiment configurations.

use pufsim_core::{EnvironmentCondition, PlacementConfig};
use pufsim_nist::TestKind;

use crate::config::*;
use crate::error::{HarnessError, Result};

pub const NAMES: [&str; 7] = ["minimal", "paper-sim", "paper-fpga", "d1", "d2", "d3", "d4"];

fn env(t: f64, v: f64) -> EnvironmentCondition {
    EnvironmentCondition::new(t, v).expect("preset environments are valid")
}

fn base(population: PopulationConfig, calibration: CalibrationConfig, readout: Vec<ReadoutConfig>) -> ExperimentConfig {
    ExperimentConfig {
        schema_version: SCHEMA_VERSION.to_string(),
        master_seed: 1,
        output_dir: None,
        population,
        calibration,
        readout,
        masking: MaskingConfig::default(),
        metrics: MetricsConfig::default(),
        sweep: SweepConfig::default(),
        randomness: RandomnessConfig::default(),
    }
}

fn local_population(devices: usize, cells: usize, placement: PlacementChoice) -> PopulationConfig {
    PopulationConfig {
        devices,
        cells: Some(cells),
        sigma_mismatch: 0.25,
        placement,
        custom_placement: None,
        global_weight: 0.0,
        regional_weight: 0.0,
        bias: Vec::new(),
        periodic_bias: None,
    }
}

/// Two devices of four cells, one noiseless read.
pub fn minimal() -> ExperimentConfig {
    let nominal = EnvironmentCondition::simulation_nominal();
    base(
        local_population(2, 4, PlacementChoice::Independent),
        CalibrationConfig::SinglePoint {
            sigma_mismatch: None,
            env: nominal,
            target_ber: 0.0,
        },
        vec![ReadoutConfig { env: nominal, trials: 1 }],
    )
}

/// 10000 simulated instances of 64 cells at sigma 0.25, read noiselessly at
/// the 25 C nominal point, swept over the five temperature anchors, and
/// tested as ten 64000-bit sequences.
pub fn paper_sim() -> ExperimentConfig {
    let mut cfg = base(
        local_population(10_000, 64, PlacementChoice::Independent),
        CalibrationConfig::TemperatureStudy { sigma_mismatch: None },
        vec![ReadoutConfig {
            env: EnvironmentCondition::simulation_nominal(),
            trials: 1,
        }],
    );
    cfg.sweep = SweepConfig {
        envs: [0.0, 20.0, 45.0, 65.0, 85.0].into_iter().map(|t| env(t, 1.0)).collect(),
        trials: 1,
    };
    cfg.randomness = RandomnessConfig {
        enabled: true,
        source: SequenceSource::Concatenated,
        sequence_bits: Some(64_000),
        ..RandomnessConfig::default()
    };
    cfg
}

/// Ten boards, each sampled in five regions of 1024 LUTs (a 64 x 80 grid,
/// one region per 16 rows), read four times at 3.3 V.
pub fn paper_fpga() -> ExperimentConfig {
    let regions = (0..64 * 80u32).map(|c| c / (64 * 16)).collect();
    let placement = PlacementConfig::custom(64, 80, regions, std::iter::empty()).expect("valid preset placement");
    let mut population = local_population(10, 5 * 1024, PlacementChoice::Custom);
    population.custom_placement = Some(placement);
    let mut cfg = base(
        population,
        CalibrationConfig::VoltageStudy {
            sigma_mismatch: None,
            nominal_ber: 0.0307,
        },
        vec![ReadoutConfig {
            env: EnvironmentCondition::board_nominal(),
            trials: 4,
        }],
    );
    cfg.masking.enabled = true;
    cfg.sweep = SweepConfig {
        envs: [3.0, 2.65, 2.5, 2.2, 2.0].into_iter().map(|v| env(25.0, v)).collect(),
        trials: 4,
    };
    cfg.randomness = RandomnessConfig {
        enabled: true,
        ..RandomnessConfig::default()
    };
    cfg
}

/// Ten boards of 1024 cells on one of the four placements, with a 0.3
/// regional mismatch weight, tested per board.
pub fn placement_study(placement: PlacementChoice) -> ExperimentConfig {
    let mut population = local_population(10, 1024, placement);
    population.regional_weight = 0.3;
    let mut cfg = base(
        population,
        CalibrationConfig::VoltageStudy {
            sigma_mismatch: None,
            nominal_ber: 0.0307,
        },
        vec![ReadoutConfig {
            env: EnvironmentCondition::board_nominal(),
            trials: 4,
        }],
    );
    cfg.randomness = RandomnessConfig {
        enabled: true,
        tests: TestKind::ALL.to_vec(),
        ..RandomnessConfig::default()
    };
    cfg
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    Ok(match name {
        "minimal" => minimal(),
        "paper-sim" => paper_sim(),
        "paper-fpga" => paper_fpga(),
        "d1" => placement_study(PlacementChoice::D1),
        "d2" => placement_study(PlacementChoice::D2),
        "d3" => placement_study(PlacementChoice::D3),
        "d4" => placement_study(PlacementChoice::D4),
        other => {
            return Err(HarnessError::Config(format!(
                "unknown preset {other:?} (available: {})",
                NAMES.join(", ")
            )))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates() {
        for name in NAMES {
            let cfg = preset(name).unwrap();
            cfg.validate().unwrap();
            cfg.check_environments().unwrap();
        }
        assert!(preset("nope").is_err());
    }

    #[test]
    fn paper_fpga_has_five_regions_of_1024() {
        let spec = paper_fpga().population_spec().unwrap();
        assert_eq!(spec.placement.region_sizes(), vec![1024; 5]);
        assert_eq!(spec.cells_per_device, 5120);
    }
}
