//! Subcommand implementations. Each returns `Ok(())` for exit code 0 or a
//! [`CliError`] carrying its exit code; outputs that exist in the partial
//! case are written before the error is returned.

use std::path::Path;

use acam_core::gccphat::{extract_windows, synth_recording, EmissionWindow};
use acam_core::geometry::MicArray;
use acam_core::simulator::{
    draw_trial, run_dataset_sweep, run_monte_carlo, run_monte_carlo_with, McReport, Method,
    NoiseLevel, SimConfig, SweepPoint,
};
use acam_core::solver::{gauss_newton, CalibrationResult};
use acam_core::tdoa_model::{assemble_noise, MeasurementSet, TdoaTable};
use serde::{Deserialize, Serialize};

use crate::config::{Overrides, RunConfig};
use crate::error::CliError;
use crate::files;
use crate::manifest::{Envelope, RunManifest};

pub const REPORT_FILE: &str = "report.json";
pub const TRIALS_FILE: &str = "trials.csv";
pub const COMPARE_JSON: &str = "compare.json";
pub const COMPARE_CSV: &str = "compare.csv";
pub const SWEEP_JSON: &str = "sweep.json";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const POSES_FILE: &str = "poses.json";
pub const MEASUREMENTS_FILE: &str = "measurements.csv";
pub const TRUTH_FILE: &str = "truth.json";
pub const CALIBRATE_CONFIG_FILE: &str = "calibrate.json";
pub const WAV_FILE: &str = "recording.wav";
pub const WINDOWS_FILE: &str = "windows.csv";

pub fn load_config(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let mut cfg = match path {
        Some(p) => files::read_json(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(overrides);
    Ok(cfg)
}

fn sim_sigma(level: NoiseLevel) -> f64 {
    match level.sigma() {
        s if s > 0.0 => s,
        _ => 1.0,
    }
}

/// Monte-Carlo run of the proposed solver: `report.json` and `trials.csv`
/// in `out_dir`.
pub fn cmd_simulate(
    config_path: Option<&Path>,
    overrides: &Overrides,
    out_dir: &Path,
) -> Result<(), CliError> {
    let cfg = load_config(config_path, overrides)?;
    cfg.simulation.validate()?;
    let mut manifest = RunManifest::start("simulate", config_path, &cfg)?;
    let report = run_monte_carlo(&cfg.simulation).map_err(|e| CliError::Runtime(e.to_string()))?;
    manifest.finish();
    files::write_atomic(&out_dir.join(TRIALS_FILE), &files::trials_csv(&report)?)?;
    let all_failed = report.rmse.is_none();
    files::write_json(
        &out_dir.join(REPORT_FILE),
        &Envelope {
            manifest,
            body: report,
        },
    )?;
    if all_failed {
        return Err(CliError::Runtime(
            "every trial failed; see report.json".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrateReport {
    pub result: CalibrationResult,
}

/// Solves a recorded dataset and writes a `CalibrationResult` JSON to `out`.
pub fn cmd_calibrate(
    poses_path: &Path,
    measurements_path: &Path,
    config_path: Option<&Path>,
    overrides: &Overrides,
    out: &Path,
) -> Result<(), CliError> {
    let cfg = load_config(config_path, overrides)?;
    let cal = &cfg.calibration;
    let mut manifest = RunManifest::start("calibrate", config_path, &cfg)?;
    manifest.add_input(poses_path)?;
    manifest.add_input(measurements_path)?;

    let initial = cal.initial_array()?;
    let board = cal.board()?;
    let poses = files::read_poses(poses_path)?;
    let table = files::read_measurements(measurements_path, initial.len(), cal.strategy)?;
    let z = MeasurementSet::from_table(&table, &poses, &board)
        .map_err(|e| CliError::input(measurements_path.display(), e))?;
    if cal.sigma_tdoa.is_nan() || cal.sigma_tdoa <= 0.0 {
        return Err(CliError::Input(
            "calibration.sigma_tdoa must be positive".into(),
        ));
    }
    let noise = assemble_noise(
        cal.sigma_tdoa,
        cal.strategy,
        z.mic_count(),
        z.events().len(),
    )?;
    let result = gauss_newton(&initial, &z, &noise, cal.speed_of_sound, &cal.solver)?;
    manifest.finish();
    let converged = result.converged;
    let iterations = result.iterations_used;
    files::write_json(
        out,
        &Envelope {
            manifest,
            body: CalibrateReport { result },
        },
    )?;
    if !converged {
        return Err(CliError::Partial(format!(
            "solver stopped at the iteration cap ({iterations}) without converging; partial result written to {}",
            out.display()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtractFailure {
    pub window: usize,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtractReport {
    pub measurements_file: String,
    pub windows: usize,
    pub failures: Vec<ExtractFailure>,
}

/// GCC-PHAT extraction into a measurement CSV at `out`, with a
/// `<out>.manifest.json` sidecar. Windows that fail are left out of the CSV
/// and listed on stderr and in the sidecar.
pub fn cmd_extract(
    wav_path: &Path,
    windows_path: &Path,
    config_path: Option<&Path>,
    overrides: &Overrides,
    out: &Path,
) -> Result<(), CliError> {
    let cfg = load_config(config_path, overrides)?;
    let ex = &cfg.extraction;
    let mut manifest = RunManifest::start("extract", config_path, &cfg)?;
    manifest.add_input(wav_path)?;
    manifest.add_input(windows_path)?;

    let audio = files::read_wav(wav_path)?;
    if audio.channel_count() != ex.mic_count {
        return Err(CliError::Input(format!(
            "{}: {} channels, config expects {} microphones",
            wav_path.display(),
            audio.channel_count(),
            ex.mic_count
        )));
    }
    let windows = files::read_windows(windows_path)?;
    if windows.is_empty() {
        return Err(CliError::Input(format!(
            "{}: no windows",
            windows_path.display()
        )));
    }
    let blocks = extract_windows(&audio, &windows, ex.strategy, ex.max_lag())
        .map_err(|e| CliError::input(windows_path.display(), e))?;

    let mut keys = Vec::new();
    let mut values = Vec::new();
    let mut failures = Vec::new();
    for (w, (block, win)) in blocks.into_iter().zip(&windows).enumerate() {
        match block {
            Ok(v) => {
                keys.push(EmissionWindow::key(win));
                values.extend(v);
            }
            Err(e) => failures.push(ExtractFailure {
                window: w,
                message: e.to_string(),
            }),
        }
    }
    let table = TdoaTable::new(ex.mic_count, ex.strategy, keys, values)?;
    manifest.finish();
    files::write_measurements(out, &table)?;
    let sidecar = out.with_extension("manifest.json");
    let report = ExtractReport {
        measurements_file: out.display().to_string(),
        windows: windows.len(),
        failures: failures.clone(),
    };
    files::write_json(
        &sidecar,
        &Envelope {
            manifest,
            body: report,
        },
    )?;
    if !failures.is_empty() {
        for f in &failures {
            eprintln!("window {}: {}", f.window, f.message);
        }
        return Err(CliError::Partial(format!(
            "{} of {} windows failed extraction",
            failures.len(),
            windows.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub noise_level: String,
    pub sigma_s: f64,
    pub proposed_rmse: Option<f64>,
    pub baseline_rmse: Option<f64>,
    /// Baseline RMSE over proposed RMSE.
    pub ratio: Option<f64>,
    pub proposed_convergence_rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
}

/// Proposed solver and grid baseline side by side, one row per noise level.
pub fn compare_rows(cfg: &RunConfig) -> Result<Vec<CompareRow>, CliError> {
    cfg.compare.grid.validate()?;
    cfg.compare
        .noise_levels
        .iter()
        .map(|&level| {
            let sim = SimConfig {
                noise_level: level,
                known_reference: true,
                strategy: cfg.compare.strategy,
                ..cfg.simulation.clone()
            };
            sim.validate()?;
            let proposed = run_monte_carlo_with(&sim, &Method::GaussNewton)?;
            let baseline = run_monte_carlo_with(&sim, &Method::GridSearch(cfg.compare.grid))?;
            Ok(CompareRow {
                noise_level: level.label(),
                sigma_s: level.sigma(),
                proposed_rmse: proposed.rmse,
                baseline_rmse: baseline.rmse,
                ratio: proposed.rmse.zip(baseline.rmse).map(|(p, b)| b / p),
                proposed_convergence_rate: proposed.convergence_rate,
            })
        })
        .collect::<Result<_, acam_core::Error>>()
        .map_err(CliError::from)
}

/// `compare.json` and a one-row-per-level `compare.csv` in `out_dir`.
pub fn cmd_compare(
    config_path: Option<&Path>,
    overrides: &Overrides,
    out_dir: &Path,
) -> Result<(), CliError> {
    let cfg = load_config(config_path, overrides)?;
    let mut manifest = RunManifest::start("compare", config_path, &cfg)?;
    let rows = compare_rows(&cfg)?;
    manifest.finish();
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        writer
            .serialize(row)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    files::write_atomic(&out_dir.join(COMPARE_CSV), &bytes)?;
    files::write_json(
        &out_dir.join(COMPARE_JSON),
        &Envelope {
            manifest,
            body: CompareReport { rows },
        },
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
}

/// RMSE against the number of board positions: `sweep.json` and `sweep.csv`.
pub fn cmd_sweep(
    config_path: Option<&Path>,
    overrides: &Overrides,
    board_counts: &[usize],
    out_dir: &Path,
) -> Result<(), CliError> {
    let cfg = load_config(config_path, overrides)?;
    if board_counts.is_empty() {
        return Err(CliError::Input("no board counts given".into()));
    }
    let mut manifest = RunManifest::start("sweep", config_path, &cfg)?;
    let points = run_dataset_sweep(&cfg.simulation, board_counts, &Method::GaussNewton)?;
    manifest.finish();
    let mut writer = csv::Writer::from_writer(Vec::new());
    for p in &points {
        writer
            .serialize(p)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    files::write_atomic(&out_dir.join(SWEEP_CSV), &bytes)?;
    files::write_json(
        &out_dir.join(SWEEP_JSON),
        &Envelope {
            manifest,
            body: SweepReport { points },
        },
    )
}

/// Config for calibrating an exported dataset: the exported initial guess,
/// board and noise level, with the known microphone (if any) held fixed.
fn calibrate_config(cfg: &RunConfig, initial: MicArray, known: Option<usize>) -> RunConfig {
    let sim = &cfg.simulation;
    let mut out = cfg.clone();
    out.calibration.strategy = sim.strategy;
    out.calibration.speed_of_sound = sim.speed_of_sound;
    out.calibration.sigma_tdoa = sim_sigma(sim.noise_level);
    out.calibration.initial_array = Some(initial);
    out.calibration.solver = sim.solver.clone();
    if let Some(k) = known {
        if !out.calibration.solver.fixed_mics.contains(&k) {
            out.calibration.solver.fixed_mics.push(k);
        }
    }
    out
}

/// Writes trial `trial` of the configured simulation as a dataset:
/// poses, measurements, ground truth and a matching calibrate config.
pub fn cmd_export(
    config_path: Option<&Path>,
    overrides: &Overrides,
    trial: usize,
    out_dir: &Path,
) -> Result<(), CliError> {
    let cfg = load_config(config_path, overrides)?;
    let inputs = draw_trial(&cfg.simulation, trial)?;
    let mut cal = calibrate_config(&cfg, inputs.initial.clone(), inputs.scenario.known_mic);
    cal.calibration.board = Some(inputs.scenario.board.clone());
    files::write_poses(&out_dir.join(POSES_FILE), &inputs.scenario.poses)?;
    files::write_measurements(
        &out_dir.join(MEASUREMENTS_FILE),
        &inputs.measurements.to_table(),
    )?;
    files::write_json(&out_dir.join(TRUTH_FILE), &inputs.scenario.true_mics)?;
    files::write_json(&out_dir.join(CALIBRATE_CONFIG_FILE), &cal)
}

/// Renders the configured scenario to a multichannel WAV with emission
/// windows, poses, ground truth and a config for `extract` and `calibrate`.
pub fn cmd_synth_audio(
    config_path: Option<&Path>,
    overrides: &Overrides,
    out_dir: &Path,
) -> Result<(), CliError> {
    let cfg = load_config(config_path, overrides)?;
    cfg.simulation.validate()?;
    // Same scenario and initial guess as trial 0 of a Monte-Carlo run.
    let trial = draw_trial(&cfg.simulation, 0)?;
    let scenario = trial.scenario;
    let (audio, windows) = synth_recording(
        &scenario,
        cfg.audio.sample_rate as f64,
        cfg.audio.snr(),
        cfg.simulation.seed,
    )?;
    let mut out_cfg = calibrate_config(&cfg, trial.initial, scenario.known_mic);
    out_cfg.calibration.board = Some(scenario.board.clone());
    out_cfg.extraction.mic_count = scenario.true_mics.len();
    out_cfg.extraction.strategy = cfg.simulation.strategy;
    out_cfg.extraction.speed_of_sound = scenario.c;
    out_cfg.extraction.array_diameter = scenario.true_mics.diameter();
    files::write_wav(&out_dir.join(WAV_FILE), &audio)?;
    files::write_windows(&out_dir.join(WINDOWS_FILE), &windows)?;
    files::write_poses(&out_dir.join(POSES_FILE), &scenario.poses)?;
    files::write_json(&out_dir.join(TRUTH_FILE), &scenario.true_mics)?;
    files::write_json(&out_dir.join(CALIBRATE_CONFIG_FILE), &out_cfg)
}

/// Reads a `report.json` written by `simulate`.
pub fn read_report(path: &Path) -> Result<Envelope<McReport>, CliError> {
    files::read_json(path)
}
