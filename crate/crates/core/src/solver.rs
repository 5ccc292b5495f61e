//! Weighted Gauss-Newton for the microphone-position least-squares problem
//!
//! ```text
//! min_x ‖g(x) − z‖²_{W⁻¹}
//! ```
//!
//! Each iteration solves `H Δx = −b` with `H = Jᵀ W⁻¹ J`, `b = Jᵀ W⁻¹ e`,
//! `e = g(x̂) − z`, and sets `x̂ ← x̂ + Δx`. The update is joint over all
//! free microphones unless [`SolverOptions::block_coordinate`] is set.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::MicArray;
use crate::tdoa_model::{jacobian, predict, MeasurementSet, NoiseModel};

/// Upper bound for automatic damping escalation (relative to mean diag(H)).
pub const MAX_AUTO_DAMPING: f64 = 1e-2;
/// First damping value tried when the undamped factorization fails.
const FIRST_AUTO_DAMPING: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Stop once `‖Δx‖₂` (meters, over the stacked free coordinates) falls
    /// below this value. The step that triggers the stop is still applied.
    pub step_threshold: f64,
    /// Tikhonov term `λ·mean(diag H)·I` always added to `H`.
    pub damping_floor: f64,
    pub condition_limit: f64,
    /// Microphones whose positions are known and held fixed. They still
    /// contribute measurement rows.
    pub fixed_mics: Vec<usize>,
    /// Update one microphone's three coordinates at a time instead of the
    /// whole stacked vector.
    pub block_coordinate: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            step_threshold: 1e-3,
            damping_floor: 0.0,
            condition_limit: 1e12,
            fixed_mics: Vec::new(),
            block_coordinate: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self, mic_count: usize) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::InvalidArgument(
                "max_iterations must be at least 1".into(),
            ));
        }
        if !(self.step_threshold > 0.0) {
            return Err(Error::InvalidArgument(
                "step_threshold must be positive".into(),
            ));
        }
        if !(self.damping_floor >= 0.0) || !self.damping_floor.is_finite() {
            return Err(Error::InvalidArgument(
                "damping_floor must be non-negative".into(),
            ));
        }
        if !(self.condition_limit > 1.0) {
            return Err(Error::InvalidArgument(
                "condition_limit must exceed 1".into(),
            ));
        }
        let mut seen = vec![false; mic_count];
        for &m in &self.fixed_mics {
            if m >= mic_count || std::mem::replace(&mut seen[m], true) {
                return Err(Error::InvalidArgument(format!(
                    "fixed microphone index {m} invalid or repeated"
                )));
            }
        }
        Ok(())
    }

    fn free_mics(&self, mic_count: usize) -> Vec<usize> {
        (0..mic_count)
            .filter(|m| !self.fixed_mics.contains(m))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub estimate: MicArray,
    pub iterations_used: usize,
    pub final_weighted_residual: f64,
    /// True when the step threshold stopped the iteration, false when the
    /// iteration cap did.
    pub converged: bool,
    pub step_norm_trace: Vec<f64>,
}

/// `‖g(x) − z‖²_{W⁻¹}`.
pub fn weighted_residual(
    x: &MicArray,
    z: &MeasurementSet,
    noise: &NoiseModel,
    c: f64,
) -> Result<f64> {
    check_dimensions(x, z, noise)?;
    let e = predict(x, z.events(), z.strategy(), c)? - z.values();
    noise.weighted_norm_sq(&e)
}

fn check_dimensions(x: &MicArray, z: &MeasurementSet, noise: &NoiseModel) -> Result<()> {
    if x.len() != z.mic_count() {
        return Err(Error::DimensionMismatch {
            what: "microphone count",
            expected: z.mic_count(),
            found: x.len(),
        });
    }
    if noise.block_size() != z.block_size() || noise.block_count() != z.events().len() {
        return Err(Error::DimensionMismatch {
            what: "noise model",
            expected: z.len(),
            found: noise.dim(),
        });
    }
    Ok(())
}

fn select_columns(jac: &DMatrix<f64>, mics: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(jac.nrows(), 3 * mics.len());
    for (slot, &m) in mics.iter().enumerate() {
        out.columns_mut(3 * slot, 3)
            .copy_from(&jac.columns(3 * m, 3));
    }
    out
}

/// Solves `(H + λ s I) Δ = rhs` with `s = mean(diag H)` and `λ` starting at
/// the damping floor. While the Cholesky factorization fails, λ escalates ×10
/// (from [`FIRST_AUTO_DAMPING`]) up to [`MAX_AUTO_DAMPING`]. The factored
/// matrix must then satisfy the condition limit.
fn solve_normal_equations(
    h: &DMatrix<f64>,
    rhs: &DVector<f64>,
    opts: &SolverOptions,
    iteration: usize,
) -> Result<DVector<f64>> {
    let n = h.nrows();
    let scale = h.diagonal().mean();
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::IllConditioned {
            iteration,
            condition: f64::INFINITY,
        });
    }
    let mut lambda = opts.damping_floor;
    loop {
        let mut a = h.clone();
        for i in 0..n {
            a[(i, i)] += lambda * scale;
        }
        if let Some(chol) = a.clone().cholesky() {
            let condition = condition_number(a);
            if condition > opts.condition_limit {
                return Err(Error::IllConditioned {
                    iteration,
                    condition,
                });
            }
            return Ok(chol.solve(rhs));
        }
        lambda = if lambda == 0.0 {
            FIRST_AUTO_DAMPING
        } else {
            lambda * 10.0
        };
        if lambda > MAX_AUTO_DAMPING * (1.0 + 1e-9) && lambda > opts.damping_floor {
            return Err(Error::IllConditioned {
                iteration,
                condition: f64::INFINITY,
            });
        }
    }
}

fn condition_number(a: DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(a).eigenvalues;
    let lo = eig.min();
    let hi = eig.amax();
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

/// Whitened residual and Jacobian (restricted to `mics`) at `x`.
fn linearize(
    x: &MicArray,
    z: &MeasurementSet,
    noise: &NoiseModel,
    c: f64,
    mics: &[usize],
    iteration: usize,
    trace: &[f64],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let e = predict(x, z.events(), z.strategy(), c)? - z.values();
    if !e.iter().all(|v| v.is_finite()) {
        return Err(Error::Diverged {
            iteration,
            step_norms: trace.to_vec(),
        });
    }
    let jac = jacobian(x, z.events(), z.strategy(), c)?;
    Ok((
        noise.whiten(&e)?,
        noise.whiten_rows(&select_columns(&jac, mics))?,
    ))
}

#[allow(clippy::too_many_arguments)]
fn gauss_newton_step(
    x: &MicArray,
    z: &MeasurementSet,
    noise: &NoiseModel,
    c: f64,
    mics: &[usize],
    opts: &SolverOptions,
    iteration: usize,
    trace: &[f64],
) -> Result<DVector<f64>> {
    let (e, j) = linearize(x, z, noise, c, mics, iteration, trace)?;
    let h = j.transpose() * &j;
    let b = j.transpose() * e;
    solve_normal_equations(&h, &(-b), opts, iteration)
}

fn apply_step(stacked: &mut [f64], mics: &[usize], step: &DVector<f64>) {
    for (slot, &m) in mics.iter().enumerate() {
        for a in 0..3 {
            stacked[3 * m + a] += step[3 * slot + a];
        }
    }
}

/// Runs Gauss-Newton from `initial` until the step norm drops below
/// `opts.step_threshold` or `opts.max_iterations` is reached.
pub fn gauss_newton(
    initial: &MicArray,
    z: &MeasurementSet,
    noise: &NoiseModel,
    c: f64,
    opts: &SolverOptions,
) -> Result<CalibrationResult> {
    check_dimensions(initial, z, noise)?;
    opts.validate(initial.len())?;
    let free = opts.free_mics(initial.len());
    let unknowns = 3 * free.len();
    if free.is_empty() || z.len() < unknowns {
        return Err(Error::Underdetermined {
            measurements: z.len(),
            unknowns,
        });
    }

    let mut stacked = initial.stacked();
    let mut trace = Vec::with_capacity(opts.max_iterations);
    let mut converged = false;

    for iteration in 0..opts.max_iterations {
        let x = MicArray::from_stacked(&stacked).map_err(|_| Error::Diverged {
            iteration,
            step_norms: trace.clone(),
        })?;
        let step_norm = if opts.block_coordinate {
            let mut sq = 0.0;
            let mut current = x;
            for &m in &free {
                let step = gauss_newton_step(&current, z, noise, c, &[m], opts, iteration, &trace)?;
                apply_step(&mut stacked, &[m], &step);
                sq += step.norm_squared();
                current = MicArray::from_stacked(&stacked).map_err(|_| Error::Diverged {
                    iteration,
                    step_norms: trace.clone(),
                })?;
            }
            sq.sqrt()
        } else {
            let step = gauss_newton_step(&x, z, noise, c, &free, opts, iteration, &trace)?;
            apply_step(&mut stacked, &free, &step);
            step.norm()
        };
        trace.push(step_norm);
        if !step_norm.is_finite() {
            return Err(Error::Diverged {
                iteration,
                step_norms: trace,
            });
        }
        if step_norm < opts.step_threshold {
            converged = true;
            break;
        }
    }

    let iterations_used = trace.len();
    let estimate = MicArray::from_stacked(&stacked).map_err(|_| Error::Diverged {
        iteration: iterations_used,
        step_norms: trace.clone(),
    })?;
    let final_weighted_residual = weighted_residual(&estimate, z, noise, c)?;
    if !final_weighted_residual.is_finite() {
        return Err(Error::Diverged {
            iteration: iterations_used,
            step_norms: trace,
        });
    }
    Ok(CalibrationResult {
        estimate,
        iterations_used,
        final_weighted_residual,
        converged,
        step_norm_trace: trace,
    })
}

/// `Jᵀ W⁻¹ e` at `x`, over the free microphones. Zero at a stationary point.
pub fn gradient(
    x: &MicArray,
    z: &MeasurementSet,
    noise: &NoiseModel,
    c: f64,
    opts: &SolverOptions,
) -> Result<DVector<f64>> {
    check_dimensions(x, z, noise)?;
    let free = opts.free_mics(x.len());
    let (e, j) = linearize(x, z, noise, c, &free, 0, &[])?;
    Ok(j.transpose() * e)
}
