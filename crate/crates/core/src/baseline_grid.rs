//! Grid-search baseline.
//!
//! Mirrors the search-based comparison method: the array is first anchored
//! with a reference microphone whose position is known in the frame of the
//! first board pose, then each remaining microphone is located independently
//! by exhaustively scoring a cube of candidate positions around its nominal
//! (rough prior) position.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{MicArray, Pose};
use crate::solver::CalibrationResult;
use crate::tdoa_model::{predict, MeasurementSet};

/// Extent and spacing of the per-microphone search cube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSettings {
    /// Half edge length of the search cube, meters.
    pub search_half_width: f64,
    /// Grid step, meters.
    pub resolution: f64,
}

impl Default for GridSettings {
    fn default() -> Self {
        Self {
            search_half_width: 0.5,
            resolution: 0.05,
        }
    }
}

impl GridSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0) || !self.resolution.is_finite() {
            return Err(Error::InvalidArgument(
                "grid resolution must be positive".into(),
            ));
        }
        if !(self.search_half_width >= self.resolution) || !self.search_half_width.is_finite() {
            return Err(Error::InvalidArgument(
                "grid half width must be at least one resolution step (empty grid)".into(),
            ));
        }
        Ok(())
    }

    /// Nodes per axis on each side of the center; the axis holds `2h + 1` nodes.
    pub fn half_steps(&self) -> usize {
        (self.search_half_width / self.resolution + 1e-9).floor() as usize
    }

    pub fn node_count(&self) -> usize {
        (2 * self.half_steps() + 1).pow(3)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOptions {
    pub settings: GridSettings,
    /// Rough array geometry; only relative positions matter, the anchor step
    /// translates it onto the known reference.
    pub nominal_array: MicArray,
    /// Reference microphone position expressed in the frame of board pose 0.
    pub known_ref_in_board1: Vector3<f64>,
    pub reference_index: usize,
}

/// One microphone's share of the measurement rows, grouped by source.
struct MicRows {
    sources: Vec<Vector3<f64>>,
    // Per source: range targets t such that the row residual is (‖p − s‖ − t)/c.
    targets: Vec<Vec<f64>>,
}

impl MicRows {
    fn collect(z: &MeasurementSet, current: &MicArray, mic: usize, c: f64) -> Result<Self> {
        let pairs = z.strategy().pairs(z.mic_count())?;
        let block = pairs.len();
        let mut sources = Vec::new();
        let mut targets = Vec::new();
        for (e, event) in z.events().iter().enumerate() {
            let s = event.source_position;
            let mut ts = Vec::new();
            for (r, pair) in pairs.iter().enumerate() {
                let value = z.values()[e * block + r];
                let (partner, sign) = if pair.mic == mic {
                    (pair.reference, 1.0)
                } else if pair.reference == mic {
                    (pair.mic, -1.0)
                } else {
                    continue;
                };
                let dp = (current.positions()[partner] - s).norm();
                if dp < 1e-12 {
                    return Err(Error::DegenerateGeometry {
                        mic: partner,
                        distance: dp,
                    });
                }
                ts.push(dp + sign * c * value);
            }
            if !ts.is_empty() {
                sources.push(s);
                targets.push(ts);
            }
        }
        Ok(Self { sources, targets })
    }

    fn cost(&self, p: &Vector3<f64>) -> f64 {
        self.sources
            .iter()
            .zip(&self.targets)
            .map(|(s, ts)| {
                let d = (p - s).norm();
                ts.iter().map(|t| (d - t) * (d - t)).sum::<f64>()
            })
            .sum()
    }
}

/// Exhaustive search; returns the lowest-cost node, ties going to the lowest
/// lexicographic `(ix, iy, iz)` index.
fn search(rows: &MicRows, center: &Vector3<f64>, settings: &GridSettings) -> Vector3<f64> {
    let h = settings.half_steps() as i64;
    let side = (2 * h + 1) as usize;
    let res = settings.resolution;
    let node = |ix: i64, iy: i64, iz: i64| {
        center
            + Vector3::new(
                (ix - h) as f64 * res,
                (iy - h) as f64 * res,
                (iz - h) as f64 * res,
            )
    };
    let (_, best) = (0..side as i64)
        .into_par_iter()
        .map(|ix| {
            let mut best = (f64::INFINITY, usize::MAX);
            for iy in 0..side as i64 {
                for iz in 0..side as i64 {
                    let cost = rows.cost(&node(ix, iy, iz));
                    let idx = (ix as usize * side + iy as usize) * side + iz as usize;
                    if cost < best.0 {
                        best = (cost, idx);
                    }
                }
            }
            best
        })
        .reduce(
            || (f64::INFINITY, usize::MAX),
            |a, b| {
                if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) {
                    b
                } else {
                    a
                }
            },
        );
    let ix = best / (side * side);
    let iy = (best / side) % side;
    let iz = best % side;
    node(ix as i64, iy as i64, iz as i64)
}

/// Anchors the array on the known reference microphone, then grid-searches
/// every other microphone independently. Partner microphones in a row take
/// their anchored nominal positions.
///
/// `final_weighted_residual` is reported with unit weights (seconds²).
pub fn grid_calibrate(
    z: &MeasurementSet,
    poses: &[Pose],
    opts: &GridOptions,
    c: f64,
) -> Result<CalibrationResult> {
    opts.settings.validate()?;
    let n = z.mic_count();
    if opts.nominal_array.len() != n {
        return Err(Error::DimensionMismatch {
            what: "nominal array",
            expected: n,
            found: opts.nominal_array.len(),
        });
    }
    if opts.reference_index >= n {
        return Err(Error::InvalidArgument(format!(
            "reference index {} out of range for {n} microphones",
            opts.reference_index
        )));
    }
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(
            "speed of sound must be positive".into(),
        ));
    }
    let first = poses
        .first()
        .ok_or_else(|| Error::InvalidArgument("grid baseline needs the first board pose".into()))?;

    let reference = first.board_to_camera(&opts.known_ref_in_board1);
    let shift = reference - opts.nominal_array.positions()[opts.reference_index];
    let anchored = MicArray::new(
        opts.nominal_array
            .positions()
            .iter()
            .map(|p| p + shift)
            .collect(),
    )?;

    let estimates = (0..n)
        .into_par_iter()
        .map(|m| {
            if m == opts.reference_index {
                return Ok(reference);
            }
            let rows = MicRows::collect(z, &anchored, m, c)?;
            if rows.sources.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "microphone {m} appears in no measurement row"
                )));
            }
            Ok(search(&rows, &anchored.positions()[m], &opts.settings))
        })
        .collect::<Result<Vec<_>>>()?;

    let estimate = MicArray::new(estimates)?;
    let e = predict(&estimate, z.events(), z.strategy(), c)? - z.values();
    Ok(CalibrationResult {
        estimate,
        iterations_used: 0,
        final_weighted_residual: e.norm_squared(),
        converged: true,
        step_norm_trace: Vec::new(),
    })
}
