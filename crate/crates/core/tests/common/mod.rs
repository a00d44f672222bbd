//! Shared test oracles.
#![allow(dead_code)]

use std::collections::HashMap;

use aeroman::aero::{radius, SlipstreamVolume, X_MAX, X_MIN};
use aeroman::geometry::Vec3;
use aeroman::params::ThrusterPose;
use kiddo::ImmutableKdTree;
use kiddo::SquaredEuclidean;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform-ish samples of the closed boundary of `vol`: the lateral surface on
/// a regular (x, angle) grid plus both end caps on concentric rings.
pub fn boundary_samples(vol: &SlipstreamVolume, n: usize) -> Vec<[f64; 3]> {
    let cap_share = n / 10;
    let lateral = n - cap_share;
    let nx = ((lateral as f64) / 2.0).sqrt().ceil() as usize;
    let na = lateral.div_ceil(nx);
    let mut out = Vec::with_capacity(n + 2 * na);
    for i in 0..nx {
        let x = X_MIN + (X_MAX - X_MIN) * i as f64 / (nx - 1) as f64;
        for k in 0..na {
            let a = std::f64::consts::TAU * k as f64 / na as f64;
            out.push(vol.surface_point(x, a).into());
        }
    }
    let per_cap = cap_share / 2;
    let rings = (per_cap as f64 / 20.0).sqrt().ceil().max(1.0) as usize;
    for &x in &[X_MIN, X_MAX] {
        let r = radius(x);
        for j in 1..=rings {
            let rho = r * j as f64 / rings as f64;
            let m = (per_cap * j * 2 / (rings * (rings + 1))).max(6);
            for k in 0..m {
                let a = std::f64::consts::TAU * k as f64 / m as f64;
                let local = Vec3::new(x, rho * a.cos(), rho * a.sin());
                out.push(vol.to_body(&local).into());
            }
        }
        out.push(vol.to_body(&Vec3::new(x, 0.0, 0.0)).into());
    }
    out
}

/// Dense-sampling distance between two solid volumes: 0 when a boundary sample
/// of one lies inside the other, otherwise the nearest pair of boundary samples.
///
/// Exact over the sample sets. Samples of `a` are bucketed into cubic cells;
/// a cell is searched only while `dist(centre, b) - half_diagonal` is below the
/// best pair found so far.
pub fn dense_distance(a: &SlipstreamVolume, b: &SlipstreamVolume, n: usize) -> f64 {
    let sa = boundary_samples(a, n);
    let sb = boundary_samples(b, n);
    let inside = |v: &SlipstreamVolume, pts: &[[f64; 3]]| {
        pts.iter().any(|p| v.is_inside(&Vec3::from(*p)))
    };
    if inside(b, &sa) || inside(a, &sb) {
        return 0.0;
    }
    let tree: ImmutableKdTree<f64, 3> = ImmutableKdTree::new_from_slice(&sb);
    let nearest = |p: &[f64; 3]| tree.nearest_one::<SquaredEuclidean>(p).distance.sqrt();

    const CELL: f64 = 0.01;
    let half_diag = 0.5 * CELL * 3f64.sqrt();
    let bucket = |pts: &[[f64; 3]]| {
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in pts.iter().enumerate() {
            cells.entry(p.map(|c| (c / CELL).floor() as i64)).or_default().push(i);
        }
        cells
    };
    let centre = |k: &[i64; 3]| k.map(|c| (c as f64 + 0.5) * CELL);
    let cells_a = bucket(&sa);
    let centres_b: Vec<[f64; 3]> = bucket(&sb).keys().map(centre).collect();
    let coarse: ImmutableKdTree<f64, 3> = ImmutableKdTree::new_from_slice(&centres_b);
    // every sample lies within half_diag of its cell centre
    let mut bounds: Vec<(f64, &Vec<usize>)> = cells_a
        .iter()
        .map(|(k, idx)| {
            let d = coarse.nearest_one::<SquaredEuclidean>(&centre(k)).distance.sqrt();
            (d - 2.0 * half_diag, idx)
        })
        .collect();
    bounds.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut best = f64::INFINITY;
    for (lower, idx) in bounds {
        if lower >= best {
            break;
        }
        for &i in idx {
            best = best.min(nearest(&sa[i]));
        }
    }
    best
}

pub fn random_unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn random_pose(rng: &mut impl Rng, half_width: f64) -> ThrusterPose {
    let r = Vec3::new(
        rng.random_range(-half_width..half_width),
        rng.random_range(-half_width..half_width),
        rng.random_range(-half_width..half_width),
    );
    ThrusterPose::from_unit(r, random_unit(rng)).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
