//! Object poses and fixed-rate trajectories, with the CSV exchange format.

use std::fmt::Write as _;

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};

use super::primitive::{canonical_quaternion, quaternion_from_wxyz, UNIT_TOLERANCE};
use crate::error::{Error, Result};

/// Poses per trajectory.
pub const TRAJECTORY_LEN: usize = 256;
/// Simulation and sampling interval in seconds.
pub const TIME_STEP: f64 = 1.0 / 300.0;
/// Trajectories per object.
pub const NUM_INTERACTIONS: usize = 4;

pub const CSV_HEADER: &str = "t,px,py,pz,qw,qx,qy,qz";

/// Position of the object-frame origin and the object orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    orientation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Pose {
            position,
            orientation: canonical_quaternion(orientation),
        }
    }

    pub fn identity() -> Self {
        Pose::new(Vector3::zeros(), UnitQuaternion::identity())
    }

    pub fn orientation(&self) -> &UnitQuaternion<f64> {
        &self.orientation
    }

    /// Components `(px, py, pz, qw, qx, qy, qz)`.
    pub fn components(&self) -> [f64; 7] {
        let q = &self.orientation;
        [
            self.position.x,
            self.position.y,
            self.position.z,
            q.w,
            q.i,
            q.j,
            q.k,
        ]
    }

    pub fn from_components(c: [f64; 7]) -> Result<Self> {
        let q = quaternion_from_wxyz([c[3], c[4], c[5], c[6]])?;
        Ok(Pose::new(Vector3::new(c[0], c[1], c[2]), q))
    }

    pub fn isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.position), self.orientation)
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Pose::new(iso.translation.vector, iso.rotation)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.orientation * p + self.position
    }

    /// Linear interpolation of position and spherical interpolation of
    /// orientation.
    pub fn interpolate(&self, other: &Pose, t: f64) -> Pose {
        let position = self.position.lerp(&other.position, t);
        let mut target = other.orientation;
        if self.orientation.coords.dot(&target.coords) < 0.0 {
            target = UnitQuaternion::new_unchecked(-target.into_inner());
        }
        let orientation = self
            .orientation
            .try_slerp(&target, t, 1e-12)
            .unwrap_or(self.orientation);
        Pose::new(position, orientation)
    }

    /// Whether the stored quaternion is unit within tolerance.
    pub fn is_valid(&self) -> bool {
        (self.orientation.quaternion().norm() - 1.0).abs() <= UNIT_TOLERANCE
            && self.orientation.w >= 0.0
            && self.position.iter().all(|v| v.is_finite())
    }
}

/// Poses sampled every `dt` seconds; pose `i` is the state at `(i + 1) * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    poses: Vec<Pose>,
    dt: f64,
    interaction_id: usize,
}

impl Trajectory {
    pub fn new(poses: Vec<Pose>, dt: f64, interaction_id: usize) -> Result<Self> {
        if poses.is_empty() {
            return Err(Error::domain("trajectory has no poses"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::domain(format!("invalid time step {dt}")));
        }
        Ok(Trajectory {
            poses,
            dt,
            interaction_id,
        })
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn interaction_id(&self) -> usize {
        self.interaction_id
    }

    /// 256 poses at 1/300 s.
    pub fn is_standard(&self) -> bool {
        self.poses.len() == TRAJECTORY_LEN && self.dt == TIME_STEP
    }

    pub fn time(&self, index: usize) -> f64 {
        (index + 1) as f64 * self.dt
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.poses.len() * 120);
        out.push_str(CSV_HEADER);
        out.push('\n');
        for (i, pose) in self.poses.iter().enumerate() {
            out.push_str(&format_significant(self.time(i), 9));
            for c in pose.components() {
                write!(out, ",{c}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Parse the CSV exchange format. Line numbers in errors are 1-based.
    pub fn from_csv(text: &str, dt: f64, interaction_id: usize) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| Error::Parse {
                offset: 1,
                reason: e.to_string(),
            })?
            .iter()
            .collect::<Vec<_>>()
            .join(",");
        if header != CSV_HEADER {
            return Err(Error::Parse {
                offset: 1,
                reason: format!("expected header {CSV_HEADER:?}, found {header:?}"),
            });
        }
        let mut poses = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let line = row + 2;
            let record = record.map_err(|e| Error::Parse {
                offset: line,
                reason: e.to_string(),
            })?;
            if record.len() != 8 {
                return Err(Error::Parse {
                    offset: line,
                    reason: format!("expected 8 fields, found {}", record.len()),
                });
            }
            let mut c = [0.0; 7];
            for (k, field) in record.iter().skip(1).enumerate() {
                c[k] = field.trim().parse().map_err(|_| Error::Parse {
                    offset: line,
                    reason: format!("invalid number {field:?}"),
                })?;
            }
            let pose = Pose::from_components(c).map_err(|e| Error::Parse {
                offset: line,
                reason: e.to_string(),
            })?;
            poses.push(pose);
        }
        Trajectory::new(poses, dt, interaction_id)
    }
}

/// Fixed-point rendering of `value` with `digits` significant digits.
pub fn format_significant(value: f64, digits: usize) -> String {
    if value == 0.0 || !value.is_finite() {
        return format!("{value}");
    }
    let magnitude = value.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    format!("{value:.decimals$}")
}
