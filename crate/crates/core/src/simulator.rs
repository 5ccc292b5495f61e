//! Scenario generation, measurement simulation and Monte-Carlo evaluation.
//!
//! A scenario is a cube array at the camera origin observed by a board that
//! visits `boards` random poses in front of the camera, each carrying
//! `sources_per_board` sources. Trials reuse one scenario (unless
//! `redraw_scenario` is set) and draw fresh TDOA noise, source-position
//! perturbations and initial guesses.
//!
//! # Seeding
//!
//! Every random draw comes from a ChaCha8 generator seeded with the master
//! seed. Stream 0 yields the scenario seed; trial `t` uses stream `t + 1`, so
//! results do not depend on how trials are scheduled across threads.

use std::time::Instant;

use nalgebra::{DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitBall, UnitSphere};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline_grid::{grid_calibrate, GridOptions, GridSettings};
use crate::error::{Error, Result};
use crate::geometry::{axis_angle, make_cube_array, BoardLayout, MicArray, Pose};
use crate::solver::{gauss_newton, CalibrationResult, SolverOptions};
use crate::tdoa_model::{
    assemble_noise, events_from_poses, predict, EmissionEvent, MeasurementSet, PairingStrategy,
};

/// Extra reference microphone used when the reference position is known.
pub const KNOWN_REFERENCE_POSITION: Vector3<f64> = Vector3::new(0.0, -0.35, 0.0);

/// Depth range (camera z, meters) of sampled board positions.
pub const BOARD_DEPTH: (f64, f64) = (1.0, 3.0);
/// Lateral half-extent (camera x and y, meters) of sampled board positions.
pub const BOARD_LATERAL: f64 = 1.0;
/// Maximum tilt of the board away from facing the camera, radians.
pub const BOARD_MAX_TILT: f64 = std::f64::consts::FRAC_PI_4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLevel {
    Lv1,
    Lv2,
    Lv3,
    Lv4,
    /// Standard deviation in seconds.
    Custom(f64),
}

impl NoiseLevel {
    pub const TABLE: [NoiseLevel; 4] = [
        NoiseLevel::Lv1,
        NoiseLevel::Lv2,
        NoiseLevel::Lv3,
        NoiseLevel::Lv4,
    ];

    /// TDOA noise standard deviation, seconds.
    pub fn sigma(&self) -> f64 {
        match *self {
            NoiseLevel::Lv1 => 0.0666e-3,
            NoiseLevel::Lv2 => 0.333e-3,
            NoiseLevel::Lv3 => 0.999e-3,
            NoiseLevel::Lv4 => 1.332e-3,
            NoiseLevel::Custom(s) => s,
        }
    }

    pub fn label(&self) -> String {
        match self {
            NoiseLevel::Lv1 => "lv1".into(),
            NoiseLevel::Lv2 => "lv2".into(),
            NoiseLevel::Lv3 => "lv3".into(),
            NoiseLevel::Lv4 => "lv4".into(),
            NoiseLevel::Custom(s) => format!("custom({s:e})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub noise_level: NoiseLevel,
    /// Per-axis standard deviation of the true source positions around the
    /// nominal ones the solver sees, meters.
    pub source_position_error_std: f64,
    /// Radius of the ball around the truth from which initial guesses are
    /// drawn, meters.
    pub init_range: f64,
    pub trials: usize,
    pub strategy: PairingStrategy,
    pub boards: usize,
    pub sources_per_board: usize,
    pub seed: u64,
    pub speed_of_sound: f64,
    pub array_side: f64,
    /// Adds a ninth microphone at [`KNOWN_REFERENCE_POSITION`] whose position
    /// is known and held fixed.
    pub known_reference: bool,
    pub redraw_scenario: bool,
    pub solver: SolverOptions,
    pub grid: GridSettings,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            noise_level: NoiseLevel::Lv1,
            source_position_error_std: 0.1,
            init_range: 0.5,
            trials: 100,
            strategy: PairingStrategy::SingleReference(0),
            boards: 69,
            sources_per_board: 6,
            seed: 1,
            speed_of_sound: 340.0,
            array_side: 0.5,
            known_reference: false,
            redraw_scenario: false,
            solver: SolverOptions::default(),
            grid: GridSettings::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.boards == 0 || self.sources_per_board == 0 {
            return bad("boards and sources_per_board must be at least 1");
        }
        let sigma = self.noise_level.sigma();
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return bad("noise level must be non-negative");
        }
        if !(self.source_position_error_std >= 0.0) || !(self.init_range >= 0.0) {
            return bad("source_position_error_std and init_range must be non-negative");
        }
        if !(self.speed_of_sound > 0.0) || !(self.array_side > 0.0) {
            return bad("speed_of_sound and array_side must be positive");
        }
        self.strategy.validate(self.mic_count())?;
        self.solver.validate(self.mic_count())
    }

    pub fn mic_count(&self) -> usize {
        if self.known_reference {
            9
        } else {
            8
        }
    }

    pub fn known_mic(&self) -> Option<usize> {
        self.known_reference.then_some(8)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub true_mics: MicArray,
    pub poses: Vec<Pose>,
    pub board: BoardLayout,
    pub c: f64,
    pub events: Vec<EmissionEvent>,
    pub known_mic: Option<usize>,
}

fn sample_pose(rng: &mut ChaCha8Rng) -> Pose {
    let t = Vector3::new(
        rng.gen_range(-BOARD_LATERAL..=BOARD_LATERAL),
        rng.gen_range(-BOARD_LATERAL..=BOARD_LATERAL),
        rng.gen_range(BOARD_DEPTH.0..=BOARD_DEPTH.1),
    );
    // Facing the camera: board +z points back along camera -z.
    let facing = axis_angle(&Vector3::x(), std::f64::consts::PI);
    let axis: [f64; 3] = UnitSphere.sample(rng);
    let tilt = rng.gen_range(0.0..=BOARD_MAX_TILT);
    let rotation = axis_angle(&Vector3::from(axis), tilt) * facing;
    Pose::from_rotation(rotation, t)
}

/// Deterministic scenario for `seed`. Poses are drawn sequentially, so a
/// scenario with fewer boards is a prefix of one with more.
pub fn generate_scenario(config: &SimConfig, seed: u64) -> Result<Scenario> {
    if config.boards == 0 || config.sources_per_board == 0 {
        return Err(Error::InvalidArgument(
            "boards and sources_per_board must be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cube = make_cube_array(config.array_side, Vector3::zeros())?;
    let mut mics = cube.positions().to_vec();
    if config.known_reference {
        mics.push(KNOWN_REFERENCE_POSITION);
    }
    let poses: Vec<Pose> = (0..config.boards).map(|_| sample_pose(&mut rng)).collect();
    let board = BoardLayout::grid(config.sources_per_board)?;
    let events = events_from_poses(&poses, &board);
    Ok(Scenario {
        true_mics: MicArray::new(mics)?,
        poses,
        board,
        c: config.speed_of_sound,
        events,
        known_mic: config.known_mic(),
    })
}

/// Noisy TDOAs for the scenario. The returned set carries the nominal source
/// positions; the TDOAs themselves are computed at perturbed positions.
pub fn simulate_measurements(
    scenario: &Scenario,
    config: &SimConfig,
    seed: u64,
) -> Result<MeasurementSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let src_err = Normal::new(0.0, config.source_position_error_std)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let sigma = config.noise_level.sigma();
    let tdoa_err = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;

    let perturbed: Vec<EmissionEvent> = scenario
        .events
        .iter()
        .map(|ev| {
            let mut ev = *ev;
            if config.source_position_error_std > 0.0 {
                ev.source_position += Vector3::from_fn(|_, _| src_err.sample(&mut rng));
            }
            ev
        })
        .collect();
    let mut z = predict(&scenario.true_mics, &perturbed, config.strategy, scenario.c)?;
    if sigma > 0.0 {
        z.iter_mut().for_each(|v| *v += tdoa_err.sample(&mut rng));
    }
    MeasurementSet::new(
        z,
        config.strategy,
        scenario.events.clone(),
        scenario.true_mics.len(),
    )
}

/// Truth displaced by a uniform draw from the ball of radius `init_range`;
/// the known microphone (if any) stays at its true position.
pub fn initial_guess(
    scenario: &Scenario,
    init_range: f64,
    rng: &mut ChaCha8Rng,
) -> Result<MicArray> {
    MicArray::new(
        scenario
            .true_mics
            .positions()
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let ball: [f64; 3] = UnitBall.sample(rng);
                if Some(i) == scenario.known_mic {
                    *p
                } else {
                    p + Vector3::from(ball) * init_range
                }
            })
            .collect(),
    )
}

/// `sqrt(mean over trials and microphones of ‖x̂_i − x_i‖²)`.
pub fn rmse(estimates: &[MicArray], truth: &MicArray) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::InvalidArgument("no estimates".into()));
    }
    let mut sum = 0.0;
    for est in estimates {
        if est.len() != truth.len() {
            return Err(Error::DimensionMismatch {
                what: "estimate microphone count",
                expected: truth.len(),
                found: est.len(),
            });
        }
        sum += est
            .positions()
            .iter()
            .zip(truth.positions())
            .map(|(a, b)| (a - b).norm_squared())
            .sum::<f64>();
    }
    Ok((sum / (estimates.len() * truth.len()) as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Method {
    GaussNewton,
    GridSearch(GridSettings),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    /// Position error per estimated microphone (the known microphone, if
    /// any, is omitted), meters. Empty when the trial failed.
    pub mic_errors: Vec<f64>,
    pub mic_indices: Vec<usize>,
    pub converged: bool,
    pub iterations: usize,
    pub failure: Option<String>,
}

pub const DIVERGENCE_POLICY: &str =
    "trials whose solve returned an error are marked non-converged and excluded from the RMSE; \
     trials stopped by the iteration cap are non-converged but included";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub config: SimConfig,
    pub method: Method,
    /// `None` when every trial failed.
    pub rmse: Option<f64>,
    pub convergence_rate: f64,
    pub failed_trials: usize,
    pub divergence_policy: String,
    pub trials: Vec<TrialRecord>,
    pub wall_time_s: f64,
}

impl McReport {
    /// RMSE recomputed from the per-trial errors.
    pub fn recompute_rmse(&self) -> Option<f64> {
        rmse_from_records(&self.trials)
    }
}

pub fn rmse_from_records(trials: &[TrialRecord]) -> Option<f64> {
    let (sum, count) = trials
        .iter()
        .filter(|t| t.failure.is_none())
        .flat_map(|t| t.mic_errors.iter())
        .fold((0.0, 0usize), |(s, n), e| (s + e * e, n + 1));
    (count > 0).then(|| (sum / count as f64).sqrt())
}

fn scenario_seed(master: u64) -> u64 {
    ChaCha8Rng::seed_from_u64(master).gen()
}

fn trial_rng(master: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(trial as u64 + 1);
    rng
}

fn solve_trial(
    scenario: &Scenario,
    config: &SimConfig,
    method: &Method,
    z: &MeasurementSet,
    initial: &MicArray,
) -> Result<CalibrationResult> {
    match method {
        Method::GaussNewton => {
            // Zero noise still needs a positive weight; uniform weights leave
            // the iterates unchanged.
            let sigma = match config.noise_level.sigma() {
                s if s > 0.0 => s,
                _ => 1.0,
            };
            let noise = assemble_noise(sigma, z.strategy(), z.mic_count(), z.events().len())?;
            let mut opts = config.solver.clone();
            if let Some(k) = scenario.known_mic {
                if !opts.fixed_mics.contains(&k) {
                    opts.fixed_mics.push(k);
                }
            }
            gauss_newton(initial, z, &noise, scenario.c, &opts)
        }
        Method::GridSearch(settings) => {
            let known = scenario.known_mic.ok_or_else(|| {
                Error::InvalidArgument("grid baseline requires a known reference microphone".into())
            })?;
            let opts = GridOptions {
                settings: *settings,
                nominal_array: initial.clone(),
                known_ref_in_board1: scenario.poses[0]
                    .camera_to_board(&scenario.true_mics.positions()[known]),
                reference_index: known,
            };
            grid_calibrate(z, &scenario.poses, &opts, scenario.c)
        }
    }
}

/// Everything one Monte-Carlo trial feeds to a solver.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialInputs {
    pub scenario: Scenario,
    pub measurements: MeasurementSet,
    pub initial: MicArray,
}

fn trial_inputs(
    base: &Scenario,
    config: &SimConfig,
    trial: usize,
) -> Result<(Option<Scenario>, MeasurementSet, MicArray)> {
    let mut rng = trial_rng(config.seed, trial);
    let redrawn = if config.redraw_scenario {
        Some(generate_scenario(config, rng.gen())?)
    } else {
        None
    };
    let scenario = redrawn.as_ref().unwrap_or(base);
    let z = simulate_measurements(scenario, config, rng.gen())?;
    let initial = initial_guess(scenario, config.init_range, &mut rng)?;
    Ok((redrawn, z, initial))
}

/// The scenario, measurements and initial guess trial `trial` of a
/// Monte-Carlo run with `config` uses.
pub fn draw_trial(config: &SimConfig, trial: usize) -> Result<TrialInputs> {
    config.validate()?;
    let base = scenario_for(config)?;
    let (redrawn, measurements, initial) = trial_inputs(&base, config, trial)?;
    Ok(TrialInputs {
        scenario: redrawn.unwrap_or(base),
        measurements,
        initial,
    })
}

/// Solves pre-drawn trial inputs with `method` under `config`'s solver
/// settings.
pub fn solve_inputs(
    inputs: &TrialInputs,
    config: &SimConfig,
    method: &Method,
) -> Result<CalibrationResult> {
    solve_trial(
        &inputs.scenario,
        config,
        method,
        &inputs.measurements,
        &inputs.initial,
    )
}

fn run_trial(base: &Scenario, config: &SimConfig, method: &Method, trial: usize) -> TrialRecord {
    let (redrawn, z, initial) = match trial_inputs(base, config, trial) {
        Ok(t) => t,
        Err(e) => return failed(trial, e),
    };
    let scenario = redrawn.as_ref().unwrap_or(base);
    let outcome = solve_trial(scenario, config, method, &z, &initial);
    match outcome {
        Ok(res) => {
            let (mic_indices, mic_errors) = res
                .estimate
                .positions()
                .iter()
                .zip(scenario.true_mics.positions())
                .enumerate()
                .filter(|(i, _)| Some(*i) != scenario.known_mic)
                .map(|(i, (a, b))| (i, (a - b).norm()))
                .unzip();
            TrialRecord {
                trial,
                mic_errors,
                mic_indices,
                converged: res.converged,
                iterations: res.iterations_used,
                failure: None,
            }
        }
        Err(e) => failed(trial, e),
    }
}

fn failed(trial: usize, e: Error) -> TrialRecord {
    TrialRecord {
        trial,
        mic_errors: Vec::new(),
        mic_indices: Vec::new(),
        converged: false,
        iterations: 0,
        failure: Some(e.to_string()),
    }
}

/// Monte-Carlo evaluation of `method` under `config`.
pub fn run_monte_carlo_with(config: &SimConfig, method: &Method) -> Result<McReport> {
    config.validate()?;
    if let Method::GridSearch(settings) = method {
        settings.validate()?;
        if !config.known_reference {
            return Err(Error::InvalidArgument(
                "grid baseline requires known_reference = true".into(),
            ));
        }
    }
    let started = Instant::now();
    let scenario = generate_scenario(config, scenario_seed(config.seed))?;
    let trials: Vec<TrialRecord> = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(&scenario, config, method, t))
        .collect();
    let converged = trials.iter().filter(|t| t.converged).count();
    let failed_trials = trials.iter().filter(|t| t.failure.is_some()).count();
    Ok(McReport {
        config: config.clone(),
        method: method.clone(),
        rmse: rmse_from_records(&trials),
        convergence_rate: converged as f64 / trials.len() as f64,
        failed_trials,
        divergence_policy: DIVERGENCE_POLICY.to_string(),
        trials,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// Monte-Carlo evaluation of the Gauss-Newton solver.
pub fn run_monte_carlo(config: &SimConfig) -> Result<McReport> {
    run_monte_carlo_with(config, &Method::GaussNewton)
}

/// The scenario a Monte-Carlo run with `config` uses (first trial's, when
/// scenarios are redrawn per trial).
pub fn scenario_for(config: &SimConfig) -> Result<Scenario> {
    generate_scenario(config, scenario_seed(config.seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub boards: usize,
    pub rmse: Option<f64>,
    pub convergence_rate: f64,
}

/// RMSE as a function of the number of board positions. Smaller datasets are
/// prefixes of larger ones for the same seed.
pub fn run_dataset_sweep(
    config: &SimConfig,
    board_counts: &[usize],
    method: &Method,
) -> Result<Vec<SweepPoint>> {
    board_counts
        .iter()
        .map(|&boards| {
            let cfg = SimConfig {
                boards,
                ..config.clone()
            };
            let report = run_monte_carlo_with(&cfg, method)?;
            Ok(SweepPoint {
                boards,
                rmse: report.rmse,
                convergence_rate: report.convergence_rate,
            })
        })
        .collect()
}

/// Noiseless measurements at the nominal geometry.
pub fn ideal_measurements(
    scenario: &Scenario,
    strategy: PairingStrategy,
) -> Result<MeasurementSet> {
    let z: DVector<f64> = predict(&scenario.true_mics, &scenario.events, strategy, scenario.c)?;
    MeasurementSet::new(
        z,
        strategy,
        scenario.events.clone(),
        scenario.true_mics.len(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small(trials: usize) -> SimConfig {
        SimConfig {
            trials,
            boards: 20,
            ..Default::default()
        }
    }

    #[test]
    fn event_count_matches_boards_times_sources() {
        let cfg = SimConfig::default();
        let s = generate_scenario(&cfg, 3).unwrap();
        assert_eq!(s.poses.len(), 69);
        assert_eq!(s.events.len(), 414);
        assert_eq!(s.true_mics.len(), 8);
    }

    #[test]
    fn scenario_is_deterministic() {
        let cfg = SimConfig::default();
        assert_eq!(
            generate_scenario(&cfg, 11).unwrap(),
            generate_scenario(&cfg, 11).unwrap()
        );
        assert_ne!(
            generate_scenario(&cfg, 11).unwrap(),
            generate_scenario(&cfg, 12).unwrap()
        );
    }

    #[test]
    fn fewer_boards_is_a_prefix() {
        let big = generate_scenario(
            &SimConfig {
                boards: 60,
                ..Default::default()
            },
            5,
        )
        .unwrap();
        let few = generate_scenario(
            &SimConfig {
                boards: 10,
                ..Default::default()
            },
            5,
        )
        .unwrap();
        assert_eq!(&big.poses[..10], &few.poses[..]);
    }

    #[test]
    fn cube_min_pairwise_distance() {
        let s = generate_scenario(&SimConfig::default(), 0).unwrap();
        let p = s.true_mics.positions();
        let mut min = f64::INFINITY;
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                min = min.min((p[i] - p[j]).norm());
            }
        }
        assert_relative_eq!(min, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn poses_stay_in_the_documented_frustum() {
        let s = generate_scenario(
            &SimConfig {
                boards: 200,
                ..Default::default()
            },
            9,
        )
        .unwrap();
        for pose in &s.poses {
            let t = pose.translation();
            assert!(t.x.abs() <= 1.0 && t.y.abs() <= 1.0 && (1.0..=3.0).contains(&t.z));
            // Board normal within 45° of pointing back at the camera.
            let normal = pose.rotation() * Vector3::z();
            assert!(normal.dot(&-Vector3::z()) >= std::f64::consts::FRAC_PI_4.cos() - 1e-12);
        }
    }

    #[test]
    fn noiseless_measurements_equal_the_model() {
        let cfg = SimConfig {
            noise_level: NoiseLevel::Custom(0.0),
            source_position_error_std: 0.0,
            ..Default::default()
        };
        let s = generate_scenario(&cfg, 1).unwrap();
        let z = simulate_measurements(&s, &cfg, 2).unwrap();
        let g = predict(&s.true_mics, &s.events, cfg.strategy, 340.0).unwrap();
        assert_eq!(z.values(), &g);
    }

    #[test]
    fn measurements_are_deterministic() {
        let cfg = SimConfig::default();
        let s = generate_scenario(&cfg, 1).unwrap();
        assert_eq!(
            simulate_measurements(&s, &cfg, 7).unwrap(),
            simulate_measurements(&s, &cfg, 7).unwrap()
        );
    }

    #[test]
    fn tdoa_noise_has_the_configured_spread() {
        // 414 events × 28 pairs × 9 seeds ≈ 1.04e5 samples.
        let cfg = SimConfig {
            noise_level: NoiseLevel::Lv4,
            source_position_error_std: 0.0,
            strategy: PairingStrategy::AllPairs,
            ..Default::default()
        };
        let s = generate_scenario(&cfg, 1).unwrap();
        let g = predict(&s.true_mics, &s.events, cfg.strategy, 340.0).unwrap();
        let mut residuals = Vec::new();
        for seed in 0..9 {
            let z = simulate_measurements(&s, &cfg, seed).unwrap();
            residuals.extend((z.values() - &g).iter().copied());
        }
        assert!(residuals.len() >= 100_000);
        let n = residuals.len() as f64;
        let mean = residuals.iter().sum::<f64>() / n;
        let std = (residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((std / 1.332e-3 - 1.0).abs() < 0.02, "std = {std}");
    }

    #[test]
    fn rmse_examples() {
        let truth = make_cube_array(0.5, Vector3::zeros()).unwrap();
        assert_eq!(rmse(std::slice::from_ref(&truth), &truth).unwrap(), 0.0);

        let shifted = MicArray::new(
            truth
                .positions()
                .iter()
                .map(|p| p + Vector3::new(0.1, 0.0, 0.0))
                .collect(),
        )
        .unwrap();
        assert_relative_eq!(rmse(&[shifted], &truth).unwrap(), 0.1, max_relative = 1e-12);

        // Two trials on a two-microphone array with per-mic errors
        // {0.1, 0.2} and {0.3, 0.4}: sqrt((0.01 + 0.04 + 0.09 + 0.16) / 4).
        let t = MicArray::new(vec![Vector3::zeros(), Vector3::x()]).unwrap();
        let a = MicArray::new(vec![
            Vector3::new(0.1, 0.0, 0.0),
            Vector3::new(1.0, 0.2, 0.0),
        ])
        .unwrap();
        let b = MicArray::new(vec![
            Vector3::new(0.0, 0.0, 0.3),
            Vector3::new(1.4, 0.0, 0.0),
        ])
        .unwrap();
        assert_relative_eq!(
            rmse(&[a, b], &t).unwrap(),
            0.075f64.sqrt(),
            max_relative = 1e-12
        );

        assert!(rmse(std::slice::from_ref(&truth), &t).is_err());
        assert!(rmse(&[], &t).is_err());
    }

    #[test]
    fn monte_carlo_noiseless_recovers_exactly() {
        let cfg = SimConfig {
            noise_level: NoiseLevel::Custom(0.0),
            source_position_error_std: 0.0,
            solver: SolverOptions {
                step_threshold: 1e-12,
                ..Default::default()
            },
            ..small(5)
        };
        let report = run_monte_carlo(&cfg).unwrap();
        assert!(report.rmse.unwrap() < 1e-9, "{:?}", report.rmse);
        assert_eq!(report.failed_trials, 0);
    }

    #[test]
    fn monte_carlo_report_is_consistent_and_deterministic() {
        let cfg = small(6);
        let a = run_monte_carlo(&cfg).unwrap();
        let b = run_monte_carlo(&cfg).unwrap();
        assert_eq!(a.trials, b.trials);
        assert_eq!(a.rmse, b.rmse);
        assert_eq!(a.recompute_rmse(), a.rmse);
        assert_eq!(a.trials.len(), 6);
        assert!(a
            .trials
            .iter()
            .all(|t| t.mic_errors.len() == 8 || t.failure.is_some()));
    }

    #[test]
    fn drawn_trial_matches_the_monte_carlo_record() {
        let cfg = small(4);
        let report = run_monte_carlo(&cfg).unwrap();
        let inputs = draw_trial(&cfg, 2).unwrap();
        let res = solve_inputs(&inputs, &cfg, &Method::GaussNewton).unwrap();
        let errors: Vec<f64> = res
            .estimate
            .positions()
            .iter()
            .zip(inputs.scenario.true_mics.positions())
            .map(|(a, b)| (a - b).norm())
            .collect();
        assert_eq!(errors, report.trials[2].mic_errors);
    }

    #[test]
    fn known_reference_is_excluded_from_errors() {
        let cfg = SimConfig {
            known_reference: true,
            strategy: PairingStrategy::SingleReference(8),
            ..small(3)
        };
        let report = run_monte_carlo(&cfg).unwrap();
        for t in &report.trials {
            assert_eq!(t.mic_indices, (0..8).collect::<Vec<_>>());
        }
    }

    #[test]
    fn grid_requires_known_reference() {
        let method = Method::GridSearch(GridSettings::default());
        assert!(run_monte_carlo_with(&small(1), &method).is_err());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(run_monte_carlo(&SimConfig {
            trials: 0,
            ..Default::default()
        })
        .is_err());
        assert!(run_monte_carlo(&SimConfig {
            boards: 0,
            ..Default::default()
        })
        .is_err());
        assert!(run_monte_carlo(&SimConfig {
            noise_level: NoiseLevel::Custom(-1.0),
            ..Default::default()
        })
        .is_err());
        assert!(run_monte_carlo(&SimConfig {
            strategy: PairingStrategy::SingleReference(8),
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn config_json_uses_readable_names() {
        let json = serde_json::to_string(&SimConfig::default()).unwrap();
        assert!(json.contains("\"single_reference\":0"), "{json}");
        assert!(json.contains("\"lv1\""), "{json}");
        let back: SimConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, SimConfig::default());
        let partial: SimConfig =
            serde_json::from_str(r#"{"noise_level":"lv3","trials":7}"#).unwrap();
        assert_eq!(partial.noise_level, NoiseLevel::Lv3);
        assert_eq!(partial.trials, 7);
        assert_eq!(partial.boards, 69);
    }
}
