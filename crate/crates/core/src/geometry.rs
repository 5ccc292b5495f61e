//! Frames, rigid transforms and array/board construction.
//!
//! All positions are expressed in meters. The camera frame is the global
//! frame; a [`Pose`] maps calibration-board coordinates into it.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-9;

/// Rigid transform taking board-frame points into the camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseRecord", into = "PoseRecord")]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

/// On-disk pose layout: row-major rotation followed by translation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseRecord {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl Pose {
    /// Validates that `rotation` is a proper rotation (orthonormal, det +1).
    /// Nearly-orthonormal inputs are rejected, not repaired.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !rotation
            .iter()
            .chain(translation.iter())
            .all(|v| v.is_finite())
        {
            return Err(Error::InvalidPose("non-finite entry".into()));
        }
        let gram = rotation.transpose() * rotation;
        let off = (gram - Matrix3::identity()).abs().max();
        if off > ORTHONORMAL_TOL {
            return Err(Error::InvalidPose(format!(
                "rotation is not orthonormal (max |RᵀR - I| = {off:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::InvalidPose(format!(
                "rotation determinant is {det}, expected +1"
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_rotation(rotation: Rotation3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: *rotation.matrix(),
            translation,
        }
    }

    pub fn from_row_major(rotation: &[f64; 9], translation: &[f64; 3]) -> Result<Self> {
        Self::new(
            Matrix3::from_row_slice(rotation),
            Vector3::from_column_slice(translation),
        )
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// `R·p + t`.
    pub fn board_to_camera(&self, source_board: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * source_board + self.translation
    }

    /// `Rᵀ·(p - t)`.
    pub fn camera_to_board(&self, point_camera: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (point_camera - self.translation)
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }
}

impl TryFrom<PoseRecord> for Pose {
    type Error = Error;

    fn try_from(record: PoseRecord) -> Result<Self> {
        Pose::from_row_major(&record.rotation, &record.translation)
    }
}

impl From<Pose> for PoseRecord {
    fn from(pose: Pose) -> Self {
        let r = pose.rotation;
        PoseRecord {
            rotation: [
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)],
            ],
            translation: [pose.translation.x, pose.translation.y, pose.translation.z],
        }
    }
}

/// Free-form description of the visual pattern printed on the board.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckerSpec {
    pub rows: u32,
    pub cols: u32,
    pub square_size: f64,
}

/// Sound-source positions on the calibration board, in the board frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoardLayoutRecord", into = "BoardLayoutRecord")]
pub struct BoardLayout {
    source_positions: Vec<Vector3<f64>>,
    checker_spec: Option<CheckerSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoardLayoutRecord {
    pub source_positions: Vec<Vector3<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checker_spec: Option<CheckerSpec>,
}

impl BoardLayout {
    pub fn new(source_positions: Vec<Vector3<f64>>) -> Result<Self> {
        if source_positions.is_empty() {
            return Err(Error::InvalidArgument(
                "board layout needs at least one source".into(),
            ));
        }
        if !source_positions
            .iter()
            .all(|p| p.iter().all(|v| v.is_finite()))
        {
            return Err(Error::InvalidArgument(
                "board source position is not finite".into(),
            ));
        }
        Ok(Self {
            source_positions,
            checker_spec: None,
        })
    }

    pub fn with_checker_spec(mut self, spec: CheckerSpec) -> Self {
        self.checker_spec = Some(spec);
        self
    }

    /// `count` sources on a rectangular grid spanning a 0.6 m × 0.4 m board
    /// in the board's z = 0 plane, centered on the board origin. Filled
    /// row-major; for `count = 6` this is a 3 × 2 grid.
    pub fn grid(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidArgument(
                "board layout needs at least one source".into(),
            ));
        }
        let cols = ((1.5 * count as f64).sqrt().ceil() as usize).clamp(1, count);
        let rows = count.div_ceil(cols);
        let coord = |idx: usize, n: usize, extent: f64| {
            if n == 1 {
                0.0
            } else {
                -extent / 2.0 + extent * idx as f64 / (n - 1) as f64
            }
        };
        let positions = (0..count)
            .map(|s| {
                let (r, c) = (s / cols, s % cols);
                Vector3::new(coord(c, cols, 0.6), coord(r, rows, 0.4), 0.0)
            })
            .collect();
        Self::new(positions)
    }

    pub fn source_positions(&self) -> &[Vector3<f64>] {
        &self.source_positions
    }

    pub fn checker_spec(&self) -> Option<&CheckerSpec> {
        self.checker_spec.as_ref()
    }

    pub fn len(&self) -> usize {
        self.source_positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source_positions.is_empty()
    }
}

impl TryFrom<BoardLayoutRecord> for BoardLayout {
    type Error = Error;

    fn try_from(record: BoardLayoutRecord) -> Result<Self> {
        let mut layout = BoardLayout::new(record.source_positions)?;
        layout.checker_spec = record.checker_spec;
        Ok(layout)
    }
}

impl From<BoardLayout> for BoardLayoutRecord {
    fn from(layout: BoardLayout) -> Self {
        BoardLayoutRecord {
            source_positions: layout.source_positions,
            checker_spec: layout.checker_spec,
        }
    }
}

/// Microphone positions in the camera frame, indexed 0..N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vector3<f64>>", into = "Vec<Vector3<f64>>")]
pub struct MicArray {
    positions: Vec<Vector3<f64>>,
}

impl MicArray {
    pub fn new(positions: Vec<Vector3<f64>>) -> Result<Self> {
        if !positions.iter().all(|p| p.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidArgument(
                "microphone position is not finite".into(),
            ));
        }
        Ok(Self { positions })
    }

    /// Rebuilds an array from a stacked `[x_0; x_1; …]` coordinate vector.
    pub fn from_stacked(stacked: &[f64]) -> Result<Self> {
        if !stacked.len().is_multiple_of(3) {
            return Err(Error::DimensionMismatch {
                what: "stacked microphone coordinates",
                expected: stacked.len() / 3 * 3,
                found: stacked.len(),
            });
        }
        Self::new(
            stacked
                .chunks_exact(3)
                .map(Vector3::from_column_slice)
                .collect(),
        )
    }

    pub fn stacked(&self) -> Vec<f64> {
        self.positions
            .iter()
            .flat_map(|p| p.iter().copied())
            .collect()
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Vector3<f64>> {
        self.positions.get(index)
    }

    /// Largest pairwise microphone distance.
    pub fn diameter(&self) -> f64 {
        let mut best = 0.0f64;
        for (a, pa) in self.positions.iter().enumerate() {
            for pb in &self.positions[a + 1..] {
                best = best.max((pa - pb).norm());
            }
        }
        best
    }
}

impl TryFrom<Vec<Vector3<f64>>> for MicArray {
    type Error = Error;

    fn try_from(positions: Vec<Vector3<f64>>) -> Result<Self> {
        MicArray::new(positions)
    }
}

impl From<MicArray> for Vec<Vector3<f64>> {
    fn from(array: MicArray) -> Self {
        array.positions
    }
}

/// Eight microphones on the vertices of an axis-aligned cube.
///
/// Vertex `v` has offset `(±s/2, ±s/2, ±s/2)` where the sign on x, y and z is
/// taken from bits 2, 1 and 0 of `v` respectively (0 → minus, 1 → plus), so
/// vertex 0 is `(-,-,-)`, vertex 1 is `(-,-,+)` and vertex 7 is `(+,+,+)`.
pub fn make_cube_array(side: f64, center: Vector3<f64>) -> Result<MicArray> {
    if !(side > 0.0) || !side.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "cube side must be positive, got {side}"
        )));
    }
    let h = side / 2.0;
    let sign = |bit: bool| if bit { h } else { -h };
    let positions = (0..8u8)
        .map(|v| {
            center
                + Vector3::new(
                    sign(v & 0b100 != 0),
                    sign(v & 0b010 != 0),
                    sign(v & 0b001 != 0),
                )
        })
        .collect();
    MicArray::new(positions)
}

/// Rotation of `angle` radians about `axis`.
pub fn axis_angle(axis: &Vector3<f64>, angle: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn rot_z(angle: f64) -> Matrix3<f64> {
        let (s, c) = angle.sin_cos();
        Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
    }

    #[test]
    fn identity_transform() {
        let p = Pose::identity().board_to_camera(&Vector3::new(0.1, 0.2, 0.0));
        assert_eq!(p, Vector3::new(0.1, 0.2, 0.0));
    }

    #[test]
    fn pure_translation() {
        let pose = Pose::new(Matrix3::identity(), Vector3::new(1.0, 0.0, 0.0)).unwrap();
        let p = pose.board_to_camera(&Vector3::new(0.1, 0.2, 0.0));
        assert_relative_eq!(p, Vector3::new(1.1, 0.2, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn quarter_turn_about_z() {
        let pose = Pose::new(rot_z(FRAC_PI_2), Vector3::new(0.0, 0.0, 1.0)).unwrap();
        let p = pose.board_to_camera(&Vector3::new(0.1, 0.0, 0.0));
        // R = [[0,-1,0],[1,0,0],[0,0,1]] applied by hand.
        assert_relative_eq!(p, Vector3::new(0.0, 0.1, 1.0), epsilon = 1e-15);
    }

    #[test]
    fn rejects_non_orthonormal_rotation() {
        let mut m = Matrix3::identity();
        m[(0, 0)] = 1.0 + 1e-6;
        assert!(matches!(
            Pose::new(m, Vector3::zeros()),
            Err(Error::InvalidPose(_))
        ));
    }

    #[test]
    fn rejects_reflection() {
        let m = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(Pose::new(m, Vector3::zeros()).is_err());
    }

    #[test]
    fn pose_record_round_trip_is_row_major() {
        let pose = Pose::new(rot_z(0.3), Vector3::new(1.0, 2.0, 3.0)).unwrap();
        let record = PoseRecord::from(pose);
        assert_relative_eq!(record.rotation[1], -(0.3f64).sin());
        assert_eq!(Pose::try_from(record).unwrap(), pose);
    }

    #[test]
    fn cube_first_vertex() {
        let cube = make_cube_array(0.5, Vector3::zeros()).unwrap();
        assert_eq!(cube.len(), 8);
        assert_eq!(cube.positions()[0], Vector3::new(-0.25, -0.25, -0.25));
        assert_eq!(cube.positions()[1], Vector3::new(-0.25, -0.25, 0.25));
        assert_eq!(cube.positions()[7], Vector3::new(0.25, 0.25, 0.25));
    }

    #[test]
    fn cube_vertex_norms() {
        let cube = make_cube_array(0.4, Vector3::zeros()).unwrap();
        for p in cube.positions() {
            assert_relative_eq!(p.norm(), 0.2 * 3f64.sqrt(), epsilon = 1e-15);
        }
    }

    #[test]
    fn cube_offset_center() {
        let cube = make_cube_array(1.0, Vector3::new(1.0, 1.0, 1.0)).unwrap();
        for p in cube.positions() {
            assert!(p.iter().all(|&v| v == 0.5 || v == 1.5));
        }
    }

    #[test]
    fn cube_rejects_bad_side() {
        assert!(make_cube_array(0.0, Vector3::zeros()).is_err());
        assert!(make_cube_array(-1.0, Vector3::zeros()).is_err());
    }

    #[test]
    fn grid_layout_six_sources() {
        let board = BoardLayout::grid(6).unwrap();
        assert_eq!(board.len(), 6);
        assert_eq!(board.source_positions()[0], Vector3::new(-0.3, -0.2, 0.0));
        assert_eq!(board.source_positions()[5], Vector3::new(0.3, 0.2, 0.0));
        assert!(BoardLayout::grid(0).is_err());
        assert_eq!(
            BoardLayout::grid(1).unwrap().source_positions()[0],
            Vector3::zeros()
        );
    }

    #[test]
    fn mic_array_stacking() {
        let cube = make_cube_array(0.5, Vector3::zeros()).unwrap();
        let back = MicArray::from_stacked(&cube.stacked()).unwrap();
        assert_eq!(back, cube);
        assert!(MicArray::from_stacked(&[1.0, 2.0]).is_err());
        assert!(MicArray::new(vec![Vector3::new(f64::NAN, 0.0, 0.0)]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn vec3() -> impl Strategy<Value = Vector3<f64>> {
            (-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64).prop_map(|(x, y, z)| Vector3::new(x, y, z))
        }

        fn pose() -> impl Strategy<Value = Pose> {
            (vec3(), 0.0..std::f64::consts::PI, vec3()).prop_filter_map(
                "axis must be nonzero",
                |(axis, angle, t)| {
                    (axis.norm() > 1e-3).then(|| Pose::from_rotation(axis_angle(&axis, angle), t))
                },
            )
        }

        proptest! {
            #[test]
            fn preserves_distances(pose in pose(), a in vec3(), b in vec3()) {
                let d0 = (a - b).norm();
                let d1 = (pose.board_to_camera(&a) - pose.board_to_camera(&b)).norm();
                prop_assert!((d0 - d1).abs() < 1e-12);
            }

            #[test]
            fn inverse_round_trip(pose in pose(), p in vec3()) {
                let back = pose.inverse().board_to_camera(&pose.board_to_camera(&p));
                prop_assert!((back - p).norm() < 1e-12);
                let back = pose.camera_to_board(&pose.board_to_camera(&p));
                prop_assert!((back - p).norm() < 1e-12);
            }
        }
    }
}
