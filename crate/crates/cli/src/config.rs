//! Run configuration shared by all subcommands.
//!
//! Every field has a default, so an empty JSON object is a valid config.
//! The fully resolved config (after command-line overrides) is written into
//! each run manifest.

use acam_core::baseline_grid::GridSettings;
use acam_core::geometry::{make_cube_array, BoardLayout, MicArray};
use acam_core::simulator::{NoiseLevel, SimConfig};
use acam_core::solver::SolverOptions;
use acam_core::tdoa_model::PairingStrategy;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub simulation: SimConfig,
    pub calibration: CalibrationConfig,
    pub extraction: ExtractionConfig,
    pub compare: CompareConfig,
    pub audio: AudioConfig,
}

/// Inputs for solving a recorded dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub strategy: PairingStrategy,
    pub speed_of_sound: f64,
    /// TDOA noise standard deviation, seconds.
    pub sigma_tdoa: f64,
    /// Starting microphone positions in the camera frame. Defaults to a
    /// 0.5 m cube centered on the camera.
    pub initial_array: Option<MicArray>,
    /// Sources on the board. Defaults to the six-source grid.
    pub board: Option<BoardLayout>,
    pub solver: SolverOptions,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            strategy: PairingStrategy::SingleReference(0),
            speed_of_sound: 340.0,
            sigma_tdoa: NoiseLevel::Lv1.sigma(),
            initial_array: None,
            board: None,
            solver: SolverOptions::default(),
        }
    }
}

impl CalibrationConfig {
    pub fn initial_array(&self) -> Result<MicArray, CliError> {
        match &self.initial_array {
            Some(a) => Ok(a.clone()),
            None => Ok(make_cube_array(0.5, Vector3::zeros())?),
        }
    }

    pub fn board(&self) -> Result<BoardLayout, CliError> {
        match &self.board {
            Some(b) => Ok(b.clone()),
            None => Ok(BoardLayout::grid(6)?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    pub mic_count: usize,
    pub strategy: PairingStrategy,
    /// Search bound for each pairwise lag, seconds. Defaults to the
    /// diameter of the nominal array divided by the speed of sound.
    pub max_lag_s: Option<f64>,
    /// Diameter used for the default lag bound, meters.
    pub array_diameter: f64,
    pub speed_of_sound: f64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            mic_count: 8,
            strategy: PairingStrategy::SingleReference(0),
            max_lag_s: None,
            array_diameter: 0.5 * 3f64.sqrt(),
            speed_of_sound: 340.0,
        }
    }
}

impl ExtractionConfig {
    pub fn max_lag(&self) -> f64 {
        self.max_lag_s.unwrap_or_else(|| {
            acam_core::gccphat::default_max_lag(self.array_diameter, self.speed_of_sound)
        })
    }
}

/// Proposed solver against the grid baseline. The simulation section
/// supplies everything else; a known reference microphone is always added.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub noise_levels: Vec<NoiseLevel>,
    pub strategy: PairingStrategy,
    pub grid: GridSettings,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            noise_levels: NoiseLevel::TABLE.to_vec(),
            strategy: PairingStrategy::SingleReference(8),
            grid: GridSettings::default(),
        }
    }
}

/// Synthetic recordings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AudioConfig {
    pub sample_rate: u32,
    /// `null` for a noiseless recording.
    pub snr_db: Option<f64>,
}

impl Default for AudioConfig {
    fn default() -> Self {
        Self {
            sample_rate: 48_000,
            snr_db: Some(20.0),
        }
    }
}

impl AudioConfig {
    pub fn snr(&self) -> f64 {
        self.snr_db.unwrap_or(f64::INFINITY)
    }
}

/// Command-line overrides applied on top of a loaded config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub noise_level: Option<NoiseLevel>,
    pub strategy: Option<PairingStrategy>,
}

impl RunConfig {
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.simulation.seed = seed;
        }
        if let Some(level) = o.noise_level {
            self.simulation.noise_level = level;
            self.calibration.sigma_tdoa = level.sigma();
        }
        if let Some(strategy) = o.strategy {
            self.simulation.strategy = strategy;
            self.calibration.strategy = strategy;
            self.extraction.strategy = strategy;
        }
    }
}

/// Parses `lv1`..`lv4` or `custom:<seconds>`.
pub fn parse_noise_level(s: &str) -> Result<NoiseLevel, String> {
    match s.to_ascii_lowercase().as_str() {
        "lv1" => Ok(NoiseLevel::Lv1),
        "lv2" => Ok(NoiseLevel::Lv2),
        "lv3" => Ok(NoiseLevel::Lv3),
        "lv4" => Ok(NoiseLevel::Lv4),
        other => {
            let sigma = other
                .strip_prefix("custom:")
                .ok_or_else(|| format!("expected lv1..lv4 or custom:<seconds>, got `{s}`"))?;
            let sigma: f64 = sigma
                .parse()
                .map_err(|_| format!("bad custom sigma `{sigma}`"))?;
            if sigma >= 0.0 && sigma.is_finite() {
                Ok(NoiseLevel::Custom(sigma))
            } else {
                Err(format!("custom sigma must be non-negative, got {sigma}"))
            }
        }
    }
}

/// Parses `single-ref`, `single-ref:<index>` or `all-pairs`.
pub fn parse_strategy(s: &str) -> Result<PairingStrategy, String> {
    match s {
        "all-pairs" => Ok(PairingStrategy::AllPairs),
        "single-ref" => Ok(PairingStrategy::SingleReference(0)),
        other => other
            .strip_prefix("single-ref:")
            .and_then(|r| r.parse().ok())
            .map(PairingStrategy::SingleReference)
            .ok_or_else(|| format!("expected single-ref[:index] or all-pairs, got `{s}`")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_default() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"simulaton": {}}"#).is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let mut cfg = RunConfig::default();
        cfg.calibration.initial_array =
            Some(make_cube_array(0.4, Vector3::new(0.0, 0.1, 0.0)).unwrap());
        cfg.audio.snr_db = None;
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn flag_parsers() {
        assert_eq!(parse_noise_level("LV3").unwrap(), NoiseLevel::Lv3);
        assert_eq!(
            parse_noise_level("custom:1e-4").unwrap(),
            NoiseLevel::Custom(1e-4)
        );
        assert!(parse_noise_level("custom:-1").is_err());
        assert!(parse_noise_level("lv5").is_err());
        assert_eq!(
            parse_strategy("single-ref").unwrap(),
            PairingStrategy::SingleReference(0)
        );
        assert_eq!(
            parse_strategy("single-ref:3").unwrap(),
            PairingStrategy::SingleReference(3)
        );
        assert_eq!(
            parse_strategy("all-pairs").unwrap(),
            PairingStrategy::AllPairs
        );
        assert!(parse_strategy("pairs").is_err());
    }

    #[test]
    fn overrides_reach_every_section() {
        let mut cfg = RunConfig::default();
        cfg.apply(&Overrides {
            seed: Some(9),
            noise_level: Some(NoiseLevel::Lv2),
            strategy: Some(PairingStrategy::AllPairs),
        });
        assert_eq!(cfg.simulation.seed, 9);
        assert_eq!(cfg.simulation.noise_level, NoiseLevel::Lv2);
        assert_eq!(cfg.calibration.sigma_tdoa, 0.333e-3);
        assert_eq!(cfg.extraction.strategy, PairingStrategy::AllPairs);
    }
}
