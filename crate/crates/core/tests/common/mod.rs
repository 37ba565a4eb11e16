//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{Matrix3, Vector3};
use physprim::model::{Pose, PrimitiveObject, Trajectory};

/// Mass, center of mass and inertia about the center of mass by summing
/// point masses over an `n^3` grid on the unit cube. Each cell contributes,
/// for every axis-aligned primitive it overlaps, the overlap's mass placed at
/// the overlap's centroid. Exact up to the cells' own second moments.
pub fn voxel_inertia(object: &PrimitiveObject, n: usize) -> (f64, Vector3<f64>, Matrix3<f64>) {
    let h = 1.0 / n as f64;
    let mut mass = 0.0;
    let mut first = Vector3::zeros();
    let mut second = Matrix3::zeros();
    for prim in object.primitives() {
        assert!(prim.is_axis_aligned(), "oracle handles axis-aligned cuboids only");
        let (lo, hi) = prim.bounds();
        let rho = prim.density().expect("densities assigned").density();
        // Per axis: (overlap length, overlap midpoint) for every cell.
        let spans: Vec<Vec<(f64, f64)>> = (0..3)
            .map(|a| {
                (0..n)
                    .map(|i| {
                        let c0 = -0.5 + i as f64 * h;
                        let (a0, a1) = (lo[a].max(c0), hi[a].min(c0 + h));
                        if a1 > a0 {
                            (a1 - a0, 0.5 * (a0 + a1))
                        } else {
                            (0.0, 0.0)
                        }
                    })
                    .collect()
            })
            .collect();
        for &(lx, x) in &spans[0] {
            if lx == 0.0 {
                continue;
            }
            for &(ly, y) in &spans[1] {
                if ly == 0.0 {
                    continue;
                }
                for &(lz, z) in &spans[2] {
                    if lz == 0.0 {
                        continue;
                    }
                    let m = rho * lx * ly * lz;
                    let p = Vector3::new(x, y, z);
                    mass += m;
                    first += m * p;
                    second += m * p * p.transpose();
                }
            }
        }
    }
    let com = first / mass;
    // I = sum m (|r|^2 E - r r^T) about the COM.
    let central = second - mass * com * com.transpose();
    let inertia = Matrix3::identity() * central.trace() - central;
    (mass, com, inertia)
}

/// All permutations of `0..n`.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..=p.len() {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

/// Largest component-wise difference between two poses, after flipping
/// `b`'s quaternion into `a`'s hemisphere.
pub fn pose_max_diff(a: &Pose, b: &Pose) -> f64 {
    let ca = a.components();
    let mut cb = b.components();
    let dot: f64 = (3..7).map(|i| ca[i] * cb[i]).sum();
    if dot < 0.0 {
        for c in &mut cb[3..] {
            *c = -*c;
        }
    }
    ca.iter().zip(&cb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn trajectory_max_diff(a: &Trajectory, b: &Trajectory) -> f64 {
    assert_eq!(a.len(), b.len());
    a.poses().iter().zip(b.poses()).map(|(p, q)| pose_max_diff(p, q)).fold(0.0, f64::max)
}

/// Every file under `dir`, relative path and contents, sorted by path.
pub fn read_tree(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &std::path::Path, dir: &std::path::Path, out: &mut Vec<(String, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}
