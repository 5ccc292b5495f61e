//! TDOA observation model: pairing strategies, measurement stacking, the
//! forward model `g(x)`, its analytic Jacobian, and the block noise model.
//!
//! # Stacking order
//!
//! Measurements are grouped into one block per emission event (board
//! position `k`, source `j`), events in the order they are supplied. Inside a
//! block the rows follow [`PairingStrategy::pairs`]:
//!
//! * `SingleReference(r)`: pairs `(i, r)` for every `i != r`, increasing `i`.
//! * `AllPairs`: pairs `(ℓ, i)` for `i < ℓ`, ordered lexicographically by
//!   `(i, ℓ)`; the lower index acts as the reference. With reference 0 the
//!   single-reference block is therefore the leading sub-block of the
//!   all-pairs block.
//!
//! Each row holds `T = (‖x_mic − s‖ − ‖x_ref − s‖) / c`.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoardLayout, MicArray, Pose};

const MIN_SOURCE_DISTANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingStrategy {
    SingleReference(usize),
    AllPairs,
}

/// One TDOA row: arrival at `mic` minus arrival at `reference`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MicPair {
    pub mic: usize,
    pub reference: usize,
}

impl PairingStrategy {
    pub fn validate(&self, mic_count: usize) -> Result<()> {
        if mic_count < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least two microphones, got {mic_count}"
            )));
        }
        match *self {
            PairingStrategy::SingleReference(r) if r >= mic_count => Err(Error::InvalidArgument(
                format!("reference index {r} out of range for {mic_count} microphones"),
            )),
            _ => Ok(()),
        }
    }

    pub fn block_size(&self, mic_count: usize) -> usize {
        match self {
            PairingStrategy::SingleReference(_) => mic_count.saturating_sub(1),
            PairingStrategy::AllPairs => mic_count * mic_count.saturating_sub(1) / 2,
        }
    }

    /// Rows of one measurement block, in canonical order.
    pub fn pairs(&self, mic_count: usize) -> Result<Vec<MicPair>> {
        self.validate(mic_count)?;
        Ok(match *self {
            PairingStrategy::SingleReference(r) => (0..mic_count)
                .filter(|&i| i != r)
                .map(|i| MicPair {
                    mic: i,
                    reference: r,
                })
                .collect(),
            PairingStrategy::AllPairs => (0..mic_count)
                .flat_map(|i| {
                    (i + 1..mic_count).map(move |l| MicPair {
                        mic: l,
                        reference: i,
                    })
                })
                .collect(),
        })
    }

    pub fn describe_block(&self, mic_count: usize) -> String {
        match self {
            PairingStrategy::SingleReference(_) => format!(
                "{} rows (N-1 for single-reference, N = {mic_count})",
                self.block_size(mic_count)
            ),
            PairingStrategy::AllPairs => format!(
                "{} rows (N(N-1)/2 for all-pairs, N = {mic_count})",
                self.block_size(mic_count)
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EventKey {
    pub board_index: usize,
    pub source_index: usize,
}

/// A single source emission with its position resolved in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmissionEvent {
    pub board_index: usize,
    pub source_index: usize,
    pub source_position: Vector3<f64>,
}

impl EmissionEvent {
    pub fn key(&self) -> EventKey {
        EventKey {
            board_index: self.board_index,
            source_index: self.source_index,
        }
    }
}

/// Every (board, source) emission, board-major.
pub fn events_from_poses(poses: &[Pose], board: &BoardLayout) -> Vec<EmissionEvent> {
    poses
        .iter()
        .enumerate()
        .flat_map(|(k, pose)| {
            board
                .source_positions()
                .iter()
                .enumerate()
                .map(move |(j, s)| EmissionEvent {
                    board_index: k,
                    source_index: j,
                    source_position: pose.board_to_camera(s),
                })
        })
        .collect()
}

/// Resolves a single key against poses and a board layout.
pub fn resolve_event(key: EventKey, poses: &[Pose], board: &BoardLayout) -> Result<EmissionEvent> {
    let pose = poses.get(key.board_index).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "board index {} has no pose ({} poses)",
            key.board_index,
            poses.len()
        ))
    })?;
    let source = board
        .source_positions()
        .get(key.source_index)
        .ok_or_else(|| {
            Error::InvalidArgument(format!(
                "source index {} not on board ({} sources)",
                key.source_index,
                board.len()
            ))
        })?;
    Ok(EmissionEvent {
        board_index: key.board_index,
        source_index: key.source_index,
        source_position: pose.board_to_camera(source),
    })
}

fn checked_distance(mic: &Vector3<f64>, source: &Vector3<f64>, index: usize) -> Result<f64> {
    let d = (mic - source).norm();
    if d < MIN_SOURCE_DISTANCE {
        return Err(Error::DegenerateGeometry {
            mic: index,
            distance: d,
        });
    }
    Ok(d)
}

/// Time difference of arrival of one emission at `mic` relative to `reference`.
pub fn tdoa_pair(
    mic: &Vector3<f64>,
    reference: &Vector3<f64>,
    source: &Vector3<f64>,
    c: f64,
) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "speed of sound must be positive, got {c}"
        )));
    }
    let di = checked_distance(mic, source, 0)?;
    let dr = checked_distance(reference, source, 1)?;
    Ok((di - dr) / c)
}

fn check_inputs(
    x: &MicArray,
    events: &[EmissionEvent],
    strategy: PairingStrategy,
    c: f64,
) -> Result<Vec<MicPair>> {
    if events.is_empty() {
        return Err(Error::InvalidArgument("no emission events".into()));
    }
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "speed of sound must be positive, got {c}"
        )));
    }
    strategy.pairs(x.len())
}

fn distances(x: &MicArray, source: &Vector3<f64>, out: &mut Vec<f64>) -> Result<()> {
    out.clear();
    for (i, p) in x.positions().iter().enumerate() {
        out.push(checked_distance(p, source, i)?);
    }
    Ok(())
}

/// Stacked forward model `g(x)` in canonical block order.
pub fn predict(
    x: &MicArray,
    events: &[EmissionEvent],
    strategy: PairingStrategy,
    c: f64,
) -> Result<DVector<f64>> {
    let pairs = check_inputs(x, events, strategy, c)?;
    let mut out = DVector::zeros(pairs.len() * events.len());
    let mut dist = Vec::with_capacity(x.len());
    for (e, event) in events.iter().enumerate() {
        distances(x, &event.source_position, &mut dist)?;
        let base = e * pairs.len();
        for (r, pair) in pairs.iter().enumerate() {
            out[base + r] = (dist[pair.mic] - dist[pair.reference]) / c;
        }
    }
    Ok(out)
}

/// Analytic Jacobian of [`predict`] with respect to the stacked microphone
/// coordinates (3N columns, microphone-major).
pub fn jacobian(
    x: &MicArray,
    events: &[EmissionEvent],
    strategy: PairingStrategy,
    c: f64,
) -> Result<DMatrix<f64>> {
    let pairs = check_inputs(x, events, strategy, c)?;
    let n = x.len();
    let mut jac = DMatrix::zeros(pairs.len() * events.len(), 3 * n);
    let mut units: Vec<Vector3<f64>> = Vec::with_capacity(n);
    for (e, event) in events.iter().enumerate() {
        units.clear();
        for (i, p) in x.positions().iter().enumerate() {
            let d = p - event.source_position;
            let norm = d.norm();
            if norm < MIN_SOURCE_DISTANCE {
                return Err(Error::DegenerateGeometry {
                    mic: i,
                    distance: norm,
                });
            }
            units.push(d / (c * norm));
        }
        let base = e * pairs.len();
        for (r, pair) in pairs.iter().enumerate() {
            let row = base + r;
            for a in 0..3 {
                jac[(row, 3 * pair.mic + a)] = units[pair.mic][a];
                jac[(row, 3 * pair.reference + a)] = -units[pair.reference][a];
            }
        }
    }
    Ok(jac)
}

/// One line of a measurement file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TdoaRow {
    pub event: usize,
    pub board_index: usize,
    pub source_index: usize,
    pub pair_i: usize,
    pub pair_ref: usize,
    pub tdoa_seconds: f64,
}

/// Stacked TDOA values keyed by emission event, without source positions.
/// This is what a measurement file or an audio extraction produces.
#[derive(Debug, Clone, PartialEq)]
pub struct TdoaTable {
    mic_count: usize,
    strategy: PairingStrategy,
    keys: Vec<EventKey>,
    values: Vec<f64>,
}

impl TdoaTable {
    pub fn new(
        mic_count: usize,
        strategy: PairingStrategy,
        keys: Vec<EventKey>,
        values: Vec<f64>,
    ) -> Result<Self> {
        strategy.validate(mic_count)?;
        let expected = strategy.block_size(mic_count) * keys.len();
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "TDOA values",
                expected,
                found: values.len(),
            });
        }
        Ok(Self {
            mic_count,
            strategy,
            keys,
            values,
        })
    }

    /// Validates file rows against the canonical block order.
    pub fn from_rows(
        mic_count: usize,
        strategy: PairingStrategy,
        rows: &[TdoaRow],
    ) -> Result<Self> {
        let pairs = strategy.pairs(mic_count)?;
        let block = pairs.len();
        let mut keys = Vec::new();
        let mut values = Vec::with_capacity(rows.len());
        let mut start = 0;
        while start < rows.len() {
            let event = keys.len();
            let first = &rows[start];
            if first.event != event {
                return Err(Error::MalformedRow {
                    row: start,
                    message: format!("expected event {event}, found {}", first.event),
                });
            }
            let len = rows[start..]
                .iter()
                .take_while(|r| r.event == event)
                .count();
            if len != block {
                return Err(Error::MalformedRow {
                    row: start,
                    message: format!(
                        "event {event} has {len} rows, expected a block of {}",
                        strategy.describe_block(mic_count)
                    ),
                });
            }
            for (offset, (row, pair)) in rows[start..start + block].iter().zip(&pairs).enumerate() {
                if (row.pair_i, row.pair_ref) != (pair.mic, pair.reference) {
                    return Err(Error::MalformedRow {
                        row: start + offset,
                        message: format!(
                            "pair ({}, {}) out of canonical order, expected ({}, {})",
                            row.pair_i, row.pair_ref, pair.mic, pair.reference
                        ),
                    });
                }
                if (row.board_index, row.source_index) != (first.board_index, first.source_index) {
                    return Err(Error::MalformedRow {
                        row: start + offset,
                        message: "board/source index changes inside an event block".into(),
                    });
                }
                if !row.tdoa_seconds.is_finite() {
                    return Err(Error::MalformedRow {
                        row: start + offset,
                        message: "non-finite TDOA".into(),
                    });
                }
                values.push(row.tdoa_seconds);
            }
            keys.push(EventKey {
                board_index: first.board_index,
                source_index: first.source_index,
            });
            start += block;
        }
        Self::new(mic_count, strategy, keys, values)
    }

    pub fn rows(&self) -> Vec<TdoaRow> {
        let pairs = self
            .strategy
            .pairs(self.mic_count)
            .expect("validated at construction");
        let block = pairs.len();
        self.keys
            .iter()
            .enumerate()
            .flat_map(|(e, key)| {
                pairs.iter().enumerate().map({
                    let values = &self.values;
                    move |(r, pair)| TdoaRow {
                        event: e,
                        board_index: key.board_index,
                        source_index: key.source_index,
                        pair_i: pair.mic,
                        pair_ref: pair.reference,
                        tdoa_seconds: values[e * block + r],
                    }
                })
            })
            .collect()
    }

    pub fn mic_count(&self) -> usize {
        self.mic_count
    }

    pub fn strategy(&self) -> PairingStrategy {
        self.strategy
    }

    pub fn keys(&self) -> &[EventKey] {
        &self.keys
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Stacked measurement vector `z` with resolved emission geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    values: DVector<f64>,
    strategy: PairingStrategy,
    events: Vec<EmissionEvent>,
    mic_count: usize,
    block_size: usize,
}

impl MeasurementSet {
    pub fn new(
        values: DVector<f64>,
        strategy: PairingStrategy,
        events: Vec<EmissionEvent>,
        mic_count: usize,
    ) -> Result<Self> {
        strategy.validate(mic_count)?;
        let block_size = strategy.block_size(mic_count);
        if values.len() != block_size * events.len() {
            return Err(Error::DimensionMismatch {
                what: "measurement vector",
                expected: block_size * events.len(),
                found: values.len(),
            });
        }
        Ok(Self {
            values,
            strategy,
            events,
            mic_count,
            block_size,
        })
    }

    pub fn from_table(table: &TdoaTable, poses: &[Pose], board: &BoardLayout) -> Result<Self> {
        let events = table
            .keys()
            .iter()
            .map(|&key| resolve_event(key, poses, board))
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            DVector::from_column_slice(table.values()),
            table.strategy(),
            events,
            table.mic_count(),
        )
    }

    pub fn to_table(&self) -> TdoaTable {
        TdoaTable {
            mic_count: self.mic_count,
            strategy: self.strategy,
            keys: self.events.iter().map(EmissionEvent::key).collect(),
            values: self.values.iter().copied().collect(),
        }
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn strategy(&self) -> PairingStrategy {
        self.strategy
    }

    pub fn events(&self) -> &[EmissionEvent] {
        &self.events
    }

    pub fn mic_count(&self) -> usize {
        self.mic_count
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Gaussian TDOA noise: one covariance block `P` per emission event, so the
/// stacked covariance is `W = diag(P, …, P)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    sigma_tdoa: Option<f64>,
    block_cov: DMatrix<f64>,
    // L⁻¹ where P = L Lᵀ.
    whitener: DMatrix<f64>,
    // Diagonal of L⁻¹ when P is diagonal.
    diagonal_whitener: Option<DVector<f64>>,
    block_count: usize,
}

impl NoiseModel {
    pub fn from_block_covariance(block_cov: DMatrix<f64>, block_count: usize) -> Result<Self> {
        if !block_cov.is_square() || block_cov.nrows() == 0 {
            return Err(Error::InvalidArgument(
                "block covariance must be square".into(),
            ));
        }
        let asym = (&block_cov - block_cov.transpose()).abs().max();
        if asym > 1e-12 * block_cov.abs().max() {
            return Err(Error::InvalidArgument(
                "block covariance must be symmetric".into(),
            ));
        }
        let chol = block_cov.clone().cholesky().ok_or_else(|| {
            Error::InvalidArgument("block covariance must be positive definite".into())
        })?;
        let n = block_cov.nrows();
        let whitener = chol
            .l()
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .ok_or_else(|| Error::InvalidArgument("singular block covariance".into()))?;
        let diagonal_whitener = block_cov.is_diagonal_exact().then(|| whitener.diagonal());
        Ok(Self {
            sigma_tdoa: None,
            block_cov,
            whitener,
            diagonal_whitener,
            block_count,
        })
    }

    pub fn sigma_tdoa(&self) -> Option<f64> {
        self.sigma_tdoa
    }

    pub fn block_cov(&self) -> &DMatrix<f64> {
        &self.block_cov
    }

    pub fn block_size(&self) -> usize {
        self.block_cov.nrows()
    }

    pub fn block_count(&self) -> usize {
        self.block_count
    }

    pub fn dim(&self) -> usize {
        self.block_size() * self.block_count
    }

    /// Dense stacked covariance `W`. Only meant for small problems and tests.
    pub fn weight_matrix(&self) -> DMatrix<f64> {
        let b = self.block_size();
        let mut w = DMatrix::zeros(self.dim(), self.dim());
        for k in 0..self.block_count {
            w.view_mut((k * b, k * b), (b, b))
                .copy_from(&self.block_cov);
        }
        w
    }

    /// Covariance multiplied by `factor` (> 0).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(Error::InvalidArgument(
                "scale factor must be positive".into(),
            ));
        }
        let mut out = Self::from_block_covariance(&self.block_cov * factor, self.block_count)?;
        out.sigma_tdoa = self.sigma_tdoa.map(|s| s * factor.sqrt());
        Ok(out)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "noise model",
                expected: self.dim(),
                found: len,
            });
        }
        Ok(())
    }

    /// Applies `W^{-1/2}` (block Cholesky factor inverse) to a stacked vector.
    pub fn whiten(&self, e: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(e.len())?;
        let b = self.block_size();
        if let Some(d) = &self.diagonal_whitener {
            return Ok(DVector::from_fn(e.len(), |i, _| e[i] * d[i % b]));
        }
        let mut out = DVector::zeros(e.len());
        for k in 0..self.block_count {
            let seg = &self.whitener * e.rows(k * b, b);
            out.rows_mut(k * b, b).copy_from(&seg);
        }
        Ok(out)
    }

    /// Applies `W^{-1/2}` to every column of a stacked matrix.
    pub fn whiten_rows(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_len(m.nrows())?;
        let b = self.block_size();
        if let Some(d) = &self.diagonal_whitener {
            return Ok(DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
                m[(i, j)] * d[i % b]
            }));
        }
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        for k in 0..self.block_count {
            let seg = &self.whitener * m.rows(k * b, b);
            out.rows_mut(k * b, b).copy_from(&seg);
        }
        Ok(out)
    }

    /// `eᵀ W⁻¹ e`.
    pub fn weighted_norm_sq(&self, e: &DVector<f64>) -> Result<f64> {
        Ok(self.whiten(e)?.norm_squared())
    }
}

trait ExactDiagonal {
    fn is_diagonal_exact(&self) -> bool;
}

impl ExactDiagonal for DMatrix<f64> {
    fn is_diagonal_exact(&self) -> bool {
        self.iter()
            .enumerate()
            .all(|(idx, v)| *v == 0.0 || idx % self.nrows() == idx / self.nrows())
    }
}

/// Isotropic noise `P = σ²·I` for `event_count` blocks of the strategy's size.
pub fn assemble_noise(
    sigma_tdoa: f64,
    strategy: PairingStrategy,
    mic_count: usize,
    event_count: usize,
) -> Result<NoiseModel> {
    if !(sigma_tdoa > 0.0) || !sigma_tdoa.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "TDOA noise standard deviation must be positive, got {sigma_tdoa}"
        )));
    }
    strategy.validate(mic_count)?;
    let b = strategy.block_size(mic_count);
    let var = sigma_tdoa * sigma_tdoa;
    let mut model = NoiseModel::from_block_covariance(DMatrix::identity(b, b) * var, event_count)?;
    model.sigma_tdoa = Some(sigma_tdoa);
    Ok(model)
}
