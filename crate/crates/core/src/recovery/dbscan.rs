//! DBSCAN over integer pixel coordinates.
//!
//! Events that share a pixel have identical neighborhoods, so the search
//! runs over distinct pixels weighted by multiplicity. Labels are assigned
//! in the classic order: points are visited in input order, each new core
//! point opens the next cluster id, and a border point belongs to the first
//! cluster that reaches it. The result is identical to point-level DBSCAN.

use std::collections::VecDeque;

use rustc_hash::FxHashMap;

/// Label of one input point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Noise,
    Cluster(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    pub labels: Vec<Label>,
    pub n_clusters: u32,
}

impl Clustering {
    /// Input indices per cluster, in input order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_clusters as usize];
        for (i, l) in self.labels.iter().enumerate() {
            if let Label::Cluster(c) = l {
                out[*c as usize].push(i);
            }
        }
        out
    }

    pub fn noise(&self) -> Vec<usize> {
        self.labels.iter().enumerate().filter(|(_, l)| **l == Label::Noise).map(|(i, _)| i).collect()
    }
}

/// Clusters `points` with neighborhood radius `eps` (inclusive) and
/// density threshold `min_pts` (the point itself counts).
pub fn dbscan(points: &[(i32, i32)], eps: f64, min_pts: usize) -> Clustering {
    assert!(eps > 0.0, "eps must be positive");
    assert!(min_pts >= 1, "min_pts must be at least 1");
    if points.is_empty() {
        return Clustering { labels: Vec::new(), n_clusters: 0 };
    }
    if eps <= MAX_DENSE_EPS {
        if let Some(c) = DENSE.with(|d| dense_dbscan(&mut d.borrow_mut(), points, eps, min_pts)) {
            return c;
        }
    }
    hashed_dbscan(points, eps, min_pts)
}

const MAX_DENSE_EPS: f64 = 8.0;
const MAX_DENSE_CELLS: usize = 1 << 22;

/// Pixel lookup table over a padded bounding box, cleared by bumping a
/// generation counter instead of zeroing.
#[derive(Default)]
struct DenseIndex {
    stamp: Vec<u32>,
    slot: Vec<u32>,
    generation: u32,
}

impl DenseIndex {
    fn reset(&mut self, cells: usize) {
        if self.stamp.len() < cells {
            self.stamp.resize(cells, 0);
            self.slot.resize(cells, 0);
        }
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.stamp.fill(0);
            self.generation = 1;
        }
    }

    fn get(&self, k: usize) -> Option<usize> {
        (self.stamp[k] == self.generation).then(|| self.slot[k] as usize)
    }

    fn insert(&mut self, k: usize, v: usize) {
        self.stamp[k] = self.generation;
        self.slot[k] = v as u32;
    }
}

thread_local! {
    static DENSE: std::cell::RefCell<DenseIndex> = std::cell::RefCell::default();
}

/// Distinct pixels in order of first appearance, their multiplicities and
/// the pixel id of every point.
struct Pixels {
    pixels: Vec<(i32, i32)>,
    weight: Vec<usize>,
    point_pixel: Vec<usize>,
}

impl Pixels {
    fn with_capacity(n: usize) -> Self {
        Self { pixels: Vec::new(), weight: Vec::new(), point_pixel: Vec::with_capacity(n) }
    }

    fn add(&mut self, p: (i32, i32), existing: Option<usize>) -> Option<usize> {
        match existing {
            Some(id) => {
                self.weight[id] += 1;
                self.point_pixel.push(id);
                None
            }
            None => {
                let id = self.pixels.len();
                self.pixels.push(p);
                self.weight.push(1);
                self.point_pixel.push(id);
                Some(id)
            }
        }
    }
}

fn dense_dbscan(index: &mut DenseIndex, points: &[(i32, i32)], eps: f64, min_pts: usize) -> Option<Clustering> {
    let r = eps.floor() as i64;
    let (mut x0, mut y0, mut x1, mut y1) = (i64::MAX, i64::MAX, i64::MIN, i64::MIN);
    for &(x, y) in points {
        x0 = x0.min(x as i64);
        y0 = y0.min(y as i64);
        x1 = x1.max(x as i64);
        y1 = y1.max(y as i64);
    }
    let w = (x1 - x0 + 1 + 2 * r) as usize;
    let h = (y1 - y0 + 1 + 2 * r) as usize;
    if w.checked_mul(h).is_none_or(|c| c > MAX_DENSE_CELLS) {
        return None;
    }
    index.reset(w * h);
    let key = |(x, y): (i32, i32)| ((y as i64 - y0 + r) as usize) * w + (x as i64 - x0 + r) as usize;

    let mut px = Pixels::with_capacity(points.len());
    for &p in points {
        let k = key(p);
        if let Some(id) = px.add(p, index.get(k)) {
            index.insert(k, id);
        }
    }

    let eps2 = eps * eps;
    let mut deltas = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if ((dx * dx + dy * dy) as f64) <= eps2 {
                deltas.push(dy as isize * w as isize + dx as isize);
            }
        }
    }
    let keys: Vec<usize> = px.pixels.iter().map(|&p| key(p)).collect();
    let labels = expand(&px.weight, min_pts, |id, out| {
        out.clear();
        out.extend(deltas.iter().filter_map(|&d| index.get((keys[id] as isize + d) as usize)));
    });
    Some(finish(&px, labels))
}

fn hashed_dbscan(points: &[(i32, i32)], eps: f64, min_pts: usize) -> Clustering {
    let mut pixel_index: FxHashMap<(i32, i32), usize> =
        FxHashMap::with_capacity_and_hasher(points.len(), Default::default());
    let mut px = Pixels::with_capacity(points.len());
    for &p in points {
        if let Some(id) = px.add(p, pixel_index.get(&p).copied()) {
            pixel_index.insert(p, id);
        }
    }

    let cell = eps.floor().max(1.0) as i32;
    let reach = (eps / cell as f64).ceil() as i32;
    let eps2 = eps * eps;
    let mut grid: FxHashMap<(i32, i32), Vec<usize>> = FxHashMap::default();
    for (id, &(x, y)) in px.pixels.iter().enumerate() {
        grid.entry((x.div_euclid(cell), y.div_euclid(cell))).or_default().push(id);
    }
    let pixels = &px.pixels;
    let labels = expand(&px.weight, min_pts, |id, out| {
        out.clear();
        let (x, y) = pixels[id];
        let (cx, cy) = (x.div_euclid(cell), y.div_euclid(cell));
        for gx in cx - reach..=cx + reach {
            for gy in cy - reach..=cy + reach {
                if let Some(ids) = grid.get(&(gx, gy)) {
                    for &j in ids {
                        let (dx, dy) = ((pixels[j].0 - x) as f64, (pixels[j].1 - y) as f64);
                        if dx * dx + dy * dy <= eps2 {
                            out.push(j);
                        }
                    }
                }
            }
        }
    });
    finish(&px, labels)
}

/// Labels pixels given a neighborhood query. Neighbor order does not
/// affect the result.
fn expand<N: FnMut(usize, &mut Vec<usize>)>(weight: &[usize], min_pts: usize, mut neighbors: N) -> (Vec<Label>, u32) {
    let n = weight.len();
    // Core status is a property of the pixel.
    let mut nb = Vec::new();
    let is_core: Vec<bool> = (0..n)
        .map(|id| {
            neighbors(id, &mut nb);
            nb.iter().map(|&j| weight[j]).sum::<usize>() >= min_pts
        })
        .collect();

    let mut label: Vec<Option<Label>> = vec![None; n];
    let mut n_clusters = 0u32;
    let mut queue = VecDeque::new();
    for id in 0..n {
        if label[id].is_some() {
            continue;
        }
        if !is_core[id] {
            label[id] = Some(Label::Noise);
            continue;
        }
        let c = n_clusters;
        n_clusters += 1;
        label[id] = Some(Label::Cluster(c));
        queue.push_back(id);
        while let Some(q) = queue.pop_front() {
            neighbors(q, &mut nb);
            for &j in &nb {
                match label[j] {
                    None => {
                        label[j] = Some(Label::Cluster(c));
                        if is_core[j] {
                            queue.push_back(j);
                        }
                    }
                    Some(Label::Noise) => label[j] = Some(Label::Cluster(c)),
                    Some(Label::Cluster(_)) => {}
                }
            }
        }
    }
    (label.into_iter().map(|l| l.unwrap_or(Label::Noise)).collect(), n_clusters)
}

fn finish(px: &Pixels, (labels, n_clusters): (Vec<Label>, u32)) -> Clustering {
    Clustering { labels: px.point_pixel.iter().map(|&id| labels[id]).collect(), n_clusters }
}

#[cfg(test)]
pub(crate) mod reference {
    //! Quadratic textbook DBSCAN used as the oracle.
    use super::{Clustering, Label};

    pub fn dbscan_quadratic(points: &[(i32, i32)], eps: f64, min_pts: usize) -> Clustering {
        let n = points.len();
        let eps2 = eps * eps;
        let region = |i: usize| -> Vec<usize> {
            (0..n)
                .filter(|&j| {
                    let dx = (points[j].0 - points[i].0) as f64;
                    let dy = (points[j].1 - points[i].1) as f64;
                    dx * dx + dy * dy <= eps2
                })
                .collect()
        };
        let mut labels: Vec<Option<Label>> = vec![None; n];
        let mut c = 0u32;
        for i in 0..n {
            if labels[i].is_some() {
                continue;
            }
            let nb = region(i);
            if nb.len() < min_pts {
                labels[i] = Some(Label::Noise);
                continue;
            }
            labels[i] = Some(Label::Cluster(c));
            let mut seeds: Vec<usize> = nb;
            let mut k = 0;
            while k < seeds.len() {
                let q = seeds[k];
                k += 1;
                match labels[q] {
                    Some(Label::Noise) => labels[q] = Some(Label::Cluster(c)),
                    Some(Label::Cluster(_)) => {}
                    None => {
                        labels[q] = Some(Label::Cluster(c));
                        let qn = region(q);
                        if qn.len() >= min_pts {
                            seeds.extend(qn);
                        }
                    }
                }
            }
            c += 1;
        }
        Clustering { labels: labels.into_iter().map(|l| l.unwrap()).collect(), n_clusters: c }
    }
}
