//! Independent reference implementations and scenario builders shared by
//! the integration and acceptance tests.

#![allow(dead_code)]

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use starjitter::recovery::{Clustering, Hypothesis, HypothesisGrid, Label, SupportSet};
use starjitter::{Event, Micros, Polarity, SensorGeometry};

pub const GEOM: SensorGeometry = SensorGeometry::DEFAULT;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Point-level DBSCAN straight from the textbook: O(n²) region queries,
/// points visited in input order, border points keep the first cluster
/// that reaches them.
pub fn dbscan_naive(points: &[(i32, i32)], eps: f64, min_pts: usize) -> Clustering {
    const UNSEEN: i64 = -2;
    const NOISE: i64 = -1;
    let n = points.len();
    let near = |a: (i32, i32), b: (i32, i32)| {
        let dx = (a.0 - b.0) as f64;
        let dy = (a.1 - b.1) as f64;
        dx * dx + dy * dy <= eps * eps
    };
    let region = |i: usize| (0..n).filter(|&j| near(points[i], points[j])).collect::<Vec<_>>();
    let mut label = vec![UNSEEN; n];
    let mut next = 0i64;
    for i in 0..n {
        if label[i] != UNSEEN {
            continue;
        }
        let seeds = region(i);
        if seeds.len() < min_pts {
            label[i] = NOISE;
            continue;
        }
        let c = next;
        next += 1;
        label[i] = c;
        let mut stack = seeds;
        while let Some(j) = stack.pop() {
            if label[j] == NOISE {
                label[j] = c;
            }
            if label[j] != UNSEEN {
                continue;
            }
            label[j] = c;
            let r = region(j);
            if r.len() >= min_pts {
                stack.extend(r);
            }
        }
    }
    Clustering {
        labels: label.iter().map(|&l| if l < 0 { Label::Noise } else { Label::Cluster(l as u32) }).collect(),
        n_clusters: next as u32,
    }
}

/// Least-squares line through integer `(t_us, value)` pairs, solved from
/// the uncentered normal equations in exact integer arithmetic. Returns
/// `(slope per second, intercept at t = 0)`, or `None` when all times coincide.
pub fn least_squares_exact(points: &[(u64, i64)]) -> Option<(f64, f64)> {
    let n = points.len() as i128;
    let (mut st, mut sv, mut stt, mut stv) = (0i128, 0i128, 0i128, 0i128);
    for &(t, v) in points {
        let (t, v) = (t as i128, v as i128);
        st += t;
        sv += v;
        stt += t * t;
        stv += t * v;
    }
    let det = n * stt - st * st;
    if det == 0 {
        return None;
    }
    let slope_per_us = (n * stv - st * sv) as f64 / det as f64;
    let intercept = (sv * stt - st * stv) as f64 / det as f64;
    Some((slope_per_us * 1e6, intercept))
}

/// Scores every grid cell from the indicator sum and keeps the best under
/// (most support, smallest squared norm, smallest (dx, dy)).
pub fn search_exhaustive(prev: &SupportSet, curr: &SupportSet, grid: &HypothesisGrid) -> Option<Hypothesis> {
    if prev.pixels.is_empty() || curr.pixels.is_empty() {
        return None;
    }
    let present: HashSet<(i32, i32)> = curr.pixels.iter().copied().collect();
    let r = grid.radius;
    let mut best: Option<(u32, i32, i32, i32)> = None;
    for dx in -r..=r {
        for dy in -r..=r {
            let support = prev.pixels.iter().filter(|&&(x, y)| present.contains(&(x + dx, y + dy))).count() as u32;
            let norm = dx * dx + dy * dy;
            let better = match best {
                None => true,
                Some((s, n, bx, by)) => support > s || (support == s && (norm < n || (norm == n && (dx, dy) < (bx, by)))),
            };
            if better {
                best = Some((support, norm, dx, dy));
            }
        }
    }
    best.map(|(support, _, dx, dy)| Hypothesis { dx, dy, support })
}

/// Random clustered point set: a few blobs plus uniform scatter.
pub fn random_points(rng: &mut ChaCha8Rng, max_n: usize) -> Vec<(i32, i32)> {
    let n = rng.random_range(0..=max_n);
    let span = rng.random_range(20..300);
    let blobs: Vec<(i32, i32, i32)> =
        (0..rng.random_range(0..6)).map(|_| (rng.random_range(0..span), rng.random_range(0..span), rng.random_range(1..6))).collect();
    (0..n)
        .map(|_| {
            if !blobs.is_empty() && rng.random_bool(0.7) {
                let (cx, cy, w) = blobs[rng.random_range(0..blobs.len())];
                (cx + rng.random_range(-w..=w), cy + rng.random_range(-w..=w))
            } else {
                (rng.random_range(0..span), rng.random_range(0..span))
            }
        })
        .collect()
}

/// A star track over `[t0, t0 + span]` moving linearly with pixel noise.
pub fn random_cluster(rng: &mut ChaCha8Rng) -> Vec<Event> {
    let n = rng.random_range(2..600);
    let t0 = rng.random_range(0..30_000_000u64);
    let span = rng.random_range(1_000..100_000u64);
    let (x0, y0) = (rng.random_range(100.0..1100.0), rng.random_range(100.0..600.0));
    let (vx, vy) = (rng.random_range(-400.0..400.0), rng.random_range(-400.0..400.0));
    let mut ev: Vec<Event> = (0..n)
        .map(|_| {
            let t = t0 + rng.random_range(0..=span);
            let s = (t - t0) as f64 * 1e-6;
            let x = x0 + vx * s + rng.random_range(-2.0..2.0);
            let y = y0 + vy * s + rng.random_range(-2.0..2.0);
            Event::new(t, x.round() as u16, y.round() as u16, Polarity::Positive)
        })
        .collect();
    ev.sort_unstable();
    ev
}

/// A support-set pair: `prev` is a random blob, `curr` is `prev` shifted
/// with a fraction of its pixels replaced by random ones. Small blobs and
/// small shifts produce plenty of ties.
pub fn random_support_pair(rng: &mut ChaCha8Rng, radius: i32) -> (SupportSet, SupportSet) {
    let n = rng.random_range(1..80);
    let spread = rng.random_range(1..12);
    let (cx, cy) = (rng.random_range(50..500), rng.random_range(50..500));
    let prev: Vec<(i32, i32)> =
        (0..n).map(|_| (cx + rng.random_range(-spread..=spread), cy + rng.random_range(-spread..=spread))).collect();
    let shift = (rng.random_range(-radius..=radius), rng.random_range(-radius..=radius));
    let replace = rng.random_range(0.0..0.6);
    let curr: Vec<(i32, i32)> = prev
        .iter()
        .map(|&(x, y)| {
            if rng.random_bool(replace) {
                (cx + rng.random_range(-2 * spread..=2 * spread), cy + rng.random_range(-2 * spread..=2 * spread))
            } else {
                (x + shift.0, y + shift.1)
            }
        })
        .collect();
    let r = radius as f64;
    (SupportSet { pixels: prev, radius: r }, SupportSet { pixels: curr, radius: r })
}

/// Sorted random events on the default sensor.
pub fn random_events(rng: &mut ChaCha8Rng, n: usize, t_max: Micros) -> Vec<Event> {
    let mut ev: Vec<Event> = (0..n)
        .map(|_| {
            let p = if rng.random_bool(0.5) { Polarity::Positive } else { Polarity::Negative };
            Event::new(rng.random_range(0..t_max), rng.random_range(0..GEOM.width), rng.random_range(0..GEOM.height), p)
        })
        .collect();
    ev.sort_unstable();
    ev
}

/// Relative closeness with a guard for exact zeros.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(f64::MIN_POSITIVE)
}
