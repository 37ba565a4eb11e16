use nalgebra::{DMatrix, Matrix2x3, Matrix3, Matrix6, UnitQuaternion, Vector2, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let k = CameraIntrinsics { fx, fy, cx, cy };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::Validation {
                what: "intrinsics",
                reason: format!("focal lengths must be positive, got ({}, {})", self.fx, self.fy),
            });
        }
        Ok(())
    }

    /// Pixel coordinates of a camera-frame point, `None` behind the camera.
    pub fn project(&self, p: &Vector3<f64>) -> Option<Vector2<f64>> {
        (p.z > 0.0).then(|| Vector2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    fn project_jacobian(&self, p: &Vector3<f64>) -> Matrix2x3<f64> {
        let iz = 1.0 / p.z;
        Matrix2x3::new(
            self.fx * iz,
            0.0,
            -self.fx * p.x * iz * iz,
            0.0,
            self.fy * iz,
            -self.fy * p.y * iz * iz,
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let k: CameraIntrinsics = serde_json::from_str(text).map_err(|source| Error::Json {
            context: "intrinsics".into(),
            source,
        })?;
        k.validate()?;
        Ok(k)
    }
}

/// Project model points under a camera-frame pose (`X_c = R X + t`).
pub fn project(points: &[Vector3<f64>], pose: &Pose, k: &CameraIntrinsics) -> Vec<Option<Vector2<f64>>> {
    points.iter().map(|p| k.project(&pose.transform_point(p))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub initial_damping: f64,
    pub max_iterations: usize,
    pub step_tolerance: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            initial_damping: 1e-3,
            max_iterations: 100,
            step_tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PnpSolution {
    /// Camera-frame pose of the model.
    pub pose: Pose,
    pub converged: bool,
    pub iterations: usize,
    /// Per-coordinate reprojection RMS in pixels.
    pub rms: f64,
    /// Half the summed squared residual after each accepted step, starting
    /// with the initial pose.
    pub cost_history: Vec<f64>,
}

fn residuals(points3d: &[Vector3<f64>], points2d: &[Vector2<f64>], k: &CameraIntrinsics, q: &UnitQuaternion<f64>, t: &Vector3<f64>) -> Option<f64> {
    let mut cost = 0.0;
    for (x, u) in points3d.iter().zip(points2d) {
        let p = k.project(&(q * x + t))?;
        cost += (p - u).norm_squared();
    }
    Some(0.5 * cost)
}

fn jacobian(
    points3d: &[Vector3<f64>],
    points2d: &[Vector2<f64>],
    k: &CameraIntrinsics,
    q: &UnitQuaternion<f64>,
    t: &Vector3<f64>,
) -> (DMatrix<f64>, Vec<f64>) {
    let n = points3d.len();
    let mut j = DMatrix::zeros(2 * n, 6);
    let mut r = Vec::with_capacity(2 * n);
    for (i, (x, u)) in points3d.iter().zip(points2d).enumerate() {
        let rx = q * x;
        let pc = rx + t;
        let proj = k.project(&pc).unwrap_or_else(|| Vector2::new(f64::NAN, f64::NAN));
        r.push(proj.x - u.x);
        r.push(proj.y - u.y);
        let dp = k.project_jacobian(&pc);
        let drot = dp * -rx.cross_matrix();
        let dtr = dp * Matrix3::identity();
        for row in 0..2 {
            for c in 0..3 {
                j[(2 * i + row, c)] = drot[(row, c)];
                j[(2 * i + row, 3 + c)] = dtr[(row, c)];
            }
        }
    }
    (j, r)
}

/// Levenberg-Marquardt refinement of a camera-frame pose from 2D-3D
/// correspondences. Rotation steps are applied on the left,
/// `q <- exp(dtheta) q`, and the quaternion is renormalized after each one.
pub fn solve_pnp_lm(
    points3d: &[Vector3<f64>],
    points2d: &[Vector2<f64>],
    k: &CameraIntrinsics,
    initial: &Pose,
    config: &LmConfig,
) -> Result<PnpSolution> {
    k.validate()?;
    if points3d.len() != points2d.len() {
        return Err(Error::domain(format!(
            "{} model points for {} image points",
            points3d.len(),
            points2d.len()
        )));
    }
    if points3d.len() < 4 {
        return Err(Error::Degenerate(format!("{} correspondences, need at least 4", points3d.len())));
    }
    let mut q = *initial.orientation();
    let mut t = initial.position;
    let mut cost = residuals(points3d, points2d, k, &q, &t)
        .ok_or_else(|| Error::Degenerate("initial pose puts model points behind the camera".into()))?;

    let (j0, _) = jacobian(points3d, points2d, k, &q, &t);
    let sv = j0.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 1e-10 * smax) {
        return Err(Error::Degenerate(format!("Jacobian is rank deficient (singular values {smin:.3e} / {smax:.3e})")));
    }

    let mut lambda = config.initial_damping;
    let mut history = vec![cost];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        let (j, r) = jacobian(points3d, points2d, k, &q, &t);
        let jt = j.transpose();
        let a: Matrix6<f64> = (&jt * &j).fixed_view::<6, 6>(0, 0).into_owned();
        let g: Vector6<f64> = (&jt * DMatrix::from_column_slice(r.len(), 1, &r)).fixed_view::<6, 1>(0, 0).into_owned();
        if g.amax() == 0.0 {
            converged = true;
            break;
        }
        let mut accepted = false;
        while lambda < 1e16 {
            let mut damped = a;
            for d in 0..6 {
                damped[(d, d)] += lambda * a[(d, d)].max(1e-12);
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&-g)) else {
                lambda *= 10.0;
                continue;
            };
            let dq = UnitQuaternion::from_scaled_axis(Vector3::new(step[0], step[1], step[2]));
            let q_new = UnitQuaternion::new_normalize((dq * q).into_inner());
            let t_new = t + Vector3::new(step[3], step[4], step[5]);
            match residuals(points3d, points2d, k, &q_new, &t_new) {
                Some(c) if c < cost => {
                    q = q_new;
                    t = t_new;
                    cost = c;
                    history.push(c);
                    lambda /= 10.0;
                    accepted = true;
                    if step.norm() < config.step_tolerance {
                        converged = true;
                    }
                    break;
                }
                _ => {
                    if step.norm() < config.step_tolerance {
                        // No further decrease is representable.
                        converged = true;
                        break;
                    }
                    lambda *= 10.0;
                }
            }
        }
        if converged || !accepted {
            converged = converged || cost == 0.0;
            break;
        }
    }
    if !converged {
        log::warn!("PnP did not converge after {iterations} iterations (cost {cost:.3e})");
    }
    Ok(PnpSolution {
        pose: Pose::new(t, q),
        converged,
        iterations,
        rms: (2.0 * cost / (2 * points3d.len()) as f64).sqrt(),
        cost_history: history,
    })
}

/// Identity rotation with the translation that centers the model on the
/// image centroid at a depth matching the observed spread.
pub fn initial_guess(points3d: &[Vector3<f64>], points2d: &[Vector2<f64>], k: &CameraIntrinsics) -> Pose {
    let n = points3d.len().max(1) as f64;
    let m3 = points3d.iter().sum::<Vector3<f64>>() / n;
    let m2 = points2d.iter().sum::<Vector2<f64>>() / n;
    let s3 = (points3d.iter().map(|p| (p - m3).norm_squared()).sum::<f64>() / n).sqrt();
    let s2 = (points2d
        .iter()
        .map(|p| {
            let d = p - m2;
            (d.x / k.fx).powi(2) + (d.y / k.fy).powi(2)
        })
        .sum::<f64>()
        / n)
        .sqrt();
    let depth = if s2 > 0.0 { s3 / s2 } else { 1.0 };
    let center = Vector3::new((m2.x - k.cx) / k.fx * depth, (m2.y - k.cy) / k.fy * depth, depth);
    Pose::new(center - m3, UnitQuaternion::identity())
}

/// The 24 proper rotations mapping the coordinate axes onto themselves.
pub fn axis_rotations() -> Vec<UnitQuaternion<f64>> {
    let mut out: Vec<UnitQuaternion<f64>> = Vec::with_capacity(24);
    let axes = [Vector3::x(), Vector3::y(), Vector3::z(), -Vector3::x(), -Vector3::y(), -Vector3::z()];
    for a in &axes {
        for b in &axes {
            if a.dot(b) != 0.0 {
                continue;
            }
            let c = a.cross(b);
            let m = Matrix3::from_columns(&[*a, *b, c]);
            let q = UnitQuaternion::from_matrix(&m);
            if !out.iter().any(|o| o.angle_to(&q) < 1e-9) {
                out.push(q);
            }
        }
    }
    out.sort_by(|a, b| a.angle().total_cmp(&b.angle()));
    out
}

/// PnP without a prior pose: LM is started from every axis-aligned rotation
/// (identity first) with the centroid translation, and the lowest final
/// cost wins. Ties keep the earlier start.
pub fn solve_pnp_multistart(
    points3d: &[Vector3<f64>],
    points2d: &[Vector2<f64>],
    k: &CameraIntrinsics,
    config: &LmConfig,
) -> Result<PnpSolution> {
    let guess = initial_guess(points3d, points2d, k);
    let n = points3d.len().max(1) as f64;
    let m3 = points3d.iter().sum::<Vector3<f64>>() / n;
    let center = guess.position + m3;
    let mut best: Option<PnpSolution> = None;
    let mut last_err = None;
    for q in axis_rotations() {
        let start = Pose::new(center - q * m3, q);
        match solve_pnp_lm(points3d, points2d, k, &start, config) {
            Ok(sol) => {
                let cost = *sol.cost_history.last().expect("history starts with the initial cost");
                if best.as_ref().is_none_or(|b| cost < *b.cost_history.last().expect("non-empty")) {
                    best = Some(sol);
                }
            }
            Err(e @ Error::Degenerate(_)) if points3d.len() < 4 => return Err(e),
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::Degenerate("no start converged".into())))
}
