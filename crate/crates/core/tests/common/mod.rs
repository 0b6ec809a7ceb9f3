#![allow(dead_code)]

use std::path::PathBuf;

use contdef::refnet::PositionMap;
use contdef::{AgentId, Position3};
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn scatter(rng: &mut ChaCha8Rng, count: usize, min_sep: f64, mut draw: impl FnMut(&mut ChaCha8Rng) -> Position3) -> PositionMap<f64> {
    let mut pts: Vec<Position3> = Vec::with_capacity(count);
    while pts.len() < count {
        let p = draw(rng);
        if pts.iter().all(|q| (p - q).norm() >= min_sep) {
            pts.push(p);
        }
    }
    pts.into_iter().enumerate().map(|(k, p)| (AgentId(k as u32 + 1), p)).collect()
}

/// `count` agents in the plane `z = z0`, at least 2 m apart.
pub fn planar_formation(rng: &mut ChaCha8Rng, count: usize, z0: f64) -> PositionMap<f64> {
    let half = 6.0 * (count as f64).sqrt();
    scatter(rng, count, 2.0, |r| Position3::new(r.gen_range(-half..half), r.gen_range(-half..half), z0))
}

/// `count` agents in a cube, at least 2 m apart.
pub fn spatial_formation(rng: &mut ChaCha8Rng, count: usize) -> PositionMap<f64> {
    let half = 4.0 * (count as f64).cbrt();
    scatter(rng, count, 2.0, |r| {
        Position3::new(r.gen_range(-half..half), r.gen_range(-half..half), r.gen_range(-half..half))
    })
}

/// Planar affine map `(Q, d)` acting on `x, y` and leaving `z` alone, with
/// both singular values in `[0.3, 3]`.
pub fn planar_map(rng: &mut ChaCha8Rng) -> (Matrix3<f64>, Vector3<f64>) {
    let rot = |t: f64| Matrix3::new(t.cos(), -t.sin(), 0.0, t.sin(), t.cos(), 0.0, 0.0, 0.0, 1.0);
    let scale = Matrix3::new(rng.gen_range(0.3..3.0), 0.0, 0.0, 0.0, rng.gen_range(0.3..3.0), 0.0, 0.0, 0.0, 1.0);
    let flip = if rng.gen_bool(0.5) { Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0) } else { Matrix3::identity() };
    let q = rot(rng.gen_range(0.0..std::f64::consts::TAU)) * scale * flip * rot(rng.gen_range(0.0..std::f64::consts::TAU));
    let d = Vector3::new(rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0), 0.0);
    (q, d)
}

pub fn apply_map(positions: &PositionMap<f64>, q: &Matrix3<f64>, d: &Vector3<f64>) -> PositionMap<f64> {
    positions.iter().map(|(id, p)| (*id, q * p + d)).collect()
}

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn shipped_scenario() -> PathBuf {
    workspace_root().join("scenarios/three_phase.toml")
}
