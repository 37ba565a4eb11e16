use std::collections::BTreeMap;

use nalgebra::{Isometry3, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::matching::{distance_matrix, hungarian};
use super::pnp::{solve_pnp_lm, solve_pnp_multistart, CameraIntrinsics, LmConfig};
use crate::error::{Error, Result};
use crate::model::{Pose, Trajectory, TIME_STEP, TRAJECTORY_LEN};

/// 2D detections in one frame. In the first frame `points[j]` is the
/// projection of model point `j`; later frames may list detections in any
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointFrame {
    pub frame: usize,
    pub points: Vec<Vector2<f64>>,
    pub visible: Vec<bool>,
}

impl KeypointFrame {
    pub fn new(frame: usize, points: Vec<Vector2<f64>>) -> Self {
        let visible = vec![true; points.len()];
        KeypointFrame { frame, points, visible }
    }

    pub fn visible_points(&self) -> Vec<Vector2<f64>> {
        self.points
            .iter()
            .zip(&self.visible)
            .filter(|(_, v)| **v)
            .map(|(p, _)| *p)
            .collect()
    }
}

#[derive(Debug, Deserialize)]
struct KeypointRow {
    frame: usize,
    point_id: usize,
    u: f64,
    v: f64,
    visible: u8,
}

/// Parse `frame,point_id,u,v,visible` rows. Frames come out sorted; point
/// ids within a frame must be `0..n` without gaps.
pub fn read_keypoints_csv(text: &str) -> Result<Vec<KeypointFrame>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse { offset: 1, reason: e.to_string() })?
        .iter()
        .map(str::to_owned)
        .collect();
    if header != ["frame", "point_id", "u", "v", "visible"] {
        return Err(Error::Parse {
            offset: 1,
            reason: format!("expected header frame,point_id,u,v,visible, found {}", header.join(",")),
        });
    }
    let mut frames: BTreeMap<usize, BTreeMap<usize, (Vector2<f64>, bool)>> = BTreeMap::new();
    for (row, rec) in reader.deserialize::<KeypointRow>().enumerate() {
        let line = row + 2;
        let rec = rec.map_err(|e| Error::Parse { offset: line, reason: e.to_string() })?;
        if rec.visible > 1 || !rec.u.is_finite() || !rec.v.is_finite() {
            return Err(Error::Parse {
                offset: line,
                reason: "visible must be 0 or 1 and coordinates finite".into(),
            });
        }
        let prev = frames
            .entry(rec.frame)
            .or_default()
            .insert(rec.point_id, (Vector2::new(rec.u, rec.v), rec.visible == 1));
        if prev.is_some() {
            return Err(Error::Parse {
                offset: line,
                reason: format!("duplicate point {} in frame {}", rec.point_id, rec.frame),
            });
        }
    }
    frames
        .into_iter()
        .map(|(frame, pts)| {
            if pts.keys().enumerate().any(|(i, &id)| i != id) {
                return Err(Error::Parse {
                    offset: 0,
                    reason: format!("frame {frame}: point ids must be 0..n"),
                });
            }
            let (points, visible) = pts.into_values().unzip();
            Ok(KeypointFrame { frame, points, visible })
        })
        .collect()
}

pub fn write_keypoints_csv(frames: &[KeypointFrame]) -> String {
    let mut out = String::from("frame,point_id,u,v,visible\n");
    for f in frames {
        for (i, (p, v)) in f.points.iter().zip(&f.visible).enumerate() {
            out.push_str(&format!("{},{},{},{},{}\n", f.frame, i, p.x, p.y, *v as u8));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractOptions {
    pub lm: LmConfig,
    /// World-to-camera transform; identity means poses are camera-frame.
    pub world_to_camera: Isometry3<f64>,
    /// Output length; longer inputs are truncated, shorter ones padded by
    /// holding the last pose.
    pub length: usize,
    pub dt: f64,
    /// Solve each frame from the default guess instead of the previous pose,
    /// which allows solving frames in parallel.
    pub independent: bool,
    pub interaction_id: usize,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            lm: LmConfig::default(),
            world_to_camera: Isometry3::identity(),
            length: TRAJECTORY_LEN,
            dt: TIME_STEP,
            independent: false,
            interaction_id: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FrameStatus {
    Solved { rms: f64, converged: bool },
    Gap { reason: String },
    Padded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub trajectory: Trajectory,
    /// One entry per output pose.
    pub status: Vec<FrameStatus>,
}

impl Extraction {
    pub fn gaps(&self) -> Vec<bool> {
        self.status.iter().map(|s| !matches!(s, FrameStatus::Solved { .. })).collect()
    }
}

fn assign_detections(reference: &[Vector2<f64>], detections: &[Vector2<f64>]) -> Result<Vec<usize>> {
    hungarian(&distance_matrix(detections, reference))
}

/// Recover object poses from keypoint tracks.
///
/// Correspondence in the first frame is given. Each later frame's visible
/// detections are assigned to model points by optimal matching against the
/// model points projected under the predicted pose (constant-velocity
/// extrapolation of the last two solutions), then the pose is refined with
/// PnP starting from that prediction. Frames with fewer than four visible
/// points, or whose solve fails, become gaps that are filled by
/// interpolation.
pub fn extract_trajectory(
    frames: &[KeypointFrame],
    model: &[Vector3<f64>],
    k: &CameraIntrinsics,
    options: &ExtractOptions,
) -> Result<Extraction> {
    k.validate()?;
    if frames.is_empty() {
        return Err(Error::domain("no keypoint frames"));
    }
    if frames.windows(2).any(|w| w[1].frame <= w[0].frame) {
        return Err(Error::domain("keypoint frames must be strictly increasing"));
    }
    if frames[0].points.len() != model.len() {
        return Err(Error::domain(format!(
            "first frame has {} points for {} model points",
            frames[0].points.len(),
            model.len()
        )));
    }
    let n = frames.len().min(options.length);
    let mut solved: Vec<Option<(Pose, f64, bool)>> = vec![None; n];
    let mut reasons: Vec<Option<String>> = vec![None; n];

    // Frame 0: visible annotated points.
    let first = &frames[0];
    let ids: Vec<usize> = (0..model.len()).filter(|&j| first.visible[j]).collect();

    let solve = |m: &[Vector3<f64>], img: &[Vector2<f64>], init: Option<&Pose>| {
        match init {
            Some(guess) => solve_pnp_lm(m, img, k, guess, &options.lm),
            None => solve_pnp_multistart(m, img, k, &options.lm),
        }
    };

    if options.independent {
        // Matching is chained on pixels; solves are independent.
        let mut tracked: Vec<Vector2<f64>> = first.points.clone();
        let mut correspondences = Vec::with_capacity(n);
        for (f, frame) in frames.iter().take(n).enumerate() {
            if f == 0 {
                correspondences.push(ids.iter().map(|&j| (j, first.points[j])).collect::<Vec<_>>());
                continue;
            }
            let det = frame.visible_points();
            match assign_detections(&tracked, &det) {
                Ok(a) => {
                    for (d, &j) in a.iter().enumerate() {
                        tracked[j] = det[d];
                    }
                    correspondences.push(a.iter().enumerate().map(|(d, &j)| (j, det[d])).collect());
                }
                Err(_) => correspondences.push(Vec::new()),
            }
        }
        let results: Vec<Result<_>> = correspondences
            .par_iter()
            .map(|c| {
                let m: Vec<_> = c.iter().map(|(j, _)| model[*j]).collect();
                let img: Vec<_> = c.iter().map(|(_, p)| *p).collect();
                solve(&m, &img, None)
            })
            .collect();
        for (f, r) in results.into_iter().enumerate() {
            match r {
                Ok(s) => solved[f] = Some((s.pose, s.rms, s.converged)),
                Err(e) => reasons[f] = Some(gap_reason(f, e)),
            }
        }
    } else {
        let mut history: Vec<Pose> = Vec::new();
        for (f, frame) in frames.iter().take(n).enumerate() {
            let prediction = predict(&history);
            let corr: Result<Vec<(usize, Vector2<f64>)>> = if f == 0 {
                Ok(ids.iter().map(|&j| (j, first.points[j])).collect())
            } else {
                let det = frame.visible_points();
                match &prediction {
                    Some(p) if det.len() >= 4 => {
                        let reference: Vec<Vector2<f64>> = model
                            .iter()
                            .map(|x| k.project(&p.transform_point(x)).unwrap_or(Vector2::repeat(f64::MAX / 4.0)))
                            .collect();
                        assign_detections(&reference, &det)
                            .map(|a| a.iter().enumerate().map(|(d, &j)| (j, det[d])).collect())
                    }
                    Some(_) => Err(Error::Degenerate(format!("{} visible points", det.len()))),
                    None => Err(Error::Degenerate("no earlier pose to track from".into())),
                }
            };
            let result = corr.and_then(|c| {
                let m: Vec<_> = c.iter().map(|(j, _)| model[*j]).collect();
                let img: Vec<_> = c.iter().map(|(_, p)| *p).collect();
                solve(&m, &img, prediction.as_ref())
            });
            match result {
                Ok(s) => {
                    history.push(s.pose);
                    solved[f] = Some((s.pose, s.rms, s.converged));
                }
                Err(e) => reasons[f] = Some(gap_reason(f, e)),
            }
        }
    }

    let mut ordered: Vec<FrameStatus> = solved
        .iter()
        .zip(reasons)
        .map(|(s, reason)| match s {
            Some((_, rms, converged)) => FrameStatus::Solved {
                rms: *rms,
                converged: *converged,
            },
            None => FrameStatus::Gap {
                reason: reason.unwrap_or_default(),
            },
        })
        .collect();

    let valid: Vec<usize> = (0..n).filter(|&f| solved[f].is_some()).collect();
    if valid.is_empty() {
        return Err(Error::Degenerate("no frame could be solved".into()));
    }
    let camera_to_world = options.world_to_camera.inverse();
    let to_world = |p: &Pose| Pose::from_isometry(&(camera_to_world * p.isometry()));
    let mut poses = Vec::with_capacity(options.length);
    for f in 0..n {
        let pose = match &solved[f] {
            Some((p, _, _)) => *p,
            None => {
                let before = valid.iter().rev().find(|&&v| v < f);
                let after = valid.iter().find(|&&v| v > f);
                match (before, after) {
                    (Some(&a), Some(&b)) => {
                        let t = (f - a) as f64 / (b - a) as f64;
                        solved[a].unwrap().0.interpolate(&solved[b].unwrap().0, t)
                    }
                    (Some(&a), None) => solved[a].unwrap().0,
                    (None, Some(&b)) => solved[b].unwrap().0,
                    (None, None) => unreachable!("at least one valid frame"),
                }
            }
        };
        poses.push(to_world(&pose));
    }
    while poses.len() < options.length {
        poses.push(*poses.last().expect("non-empty"));
        ordered.push(FrameStatus::Padded);
    }
    Ok(Extraction {
        trajectory: Trajectory::new(poses, options.dt, options.interaction_id)?,
        status: ordered,
    })
}

fn gap_reason(frame: usize, e: Error) -> String {
    log::warn!("frame {frame}: {e}");
    e.to_string()
}

/// Constant-velocity extrapolation of the last two poses.
fn predict(history: &[Pose]) -> Option<Pose> {
    match history {
        [] => None,
        [p] => Some(*p),
        [.., a, b] => {
            let dq = b.orientation() * a.orientation().inverse();
            Some(Pose::new(b.position * 2.0 - a.position, dq * b.orientation()))
        }
    }
}
