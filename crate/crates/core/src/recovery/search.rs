use rustc_hash::FxHashMap;

use serde::Serialize;

use crate::model::Event;
use crate::recovery::fit::StarCentroid;

/// Current-batch events of one star within `radius` of its centroid, kept
/// as pixel coordinates (with multiplicity).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SupportSet {
    pub pixels: Vec<(i32, i32)>,
    pub radius: f64,
}

impl SupportSet {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// Keeps the events strictly closer than `radius` to `centroid`.
pub fn extract_support<'a, I>(events: I, centroid: StarCentroid, radius: f64) -> SupportSet
where
    I: IntoIterator<Item = &'a Event>,
{
    let r2 = radius * radius;
    let pixels = events
        .into_iter()
        .filter(|e| {
            let dx = e.x as f64 - centroid.x;
            let dy = e.y as f64 - centroid.y;
            dx * dx + dy * dy < r2
        })
        .map(Event::pixel)
        .collect();
    SupportSet { pixels, radius }
}

/// Integer displacement hypotheses `[-radius, radius]^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HypothesisGrid {
    pub radius: i32,
}

impl HypothesisGrid {
    pub fn new(radius: i32) -> Self {
        assert!(radius >= 0);
        Self { radius }
    }

    /// Grid that covers every displacement up to `r` pixels.
    pub fn covering(r: f64) -> Self {
        Self::new(r.ceil() as i32)
    }

    pub fn contains(&self, h: (i32, i32)) -> bool {
        h.0.abs() <= self.radius && h.1.abs() <= self.radius
    }

    pub fn side(&self) -> usize {
        (2 * self.radius + 1) as usize
    }

    pub fn iter(&self) -> impl Iterator<Item = (i32, i32)> + '_ {
        let r = self.radius;
        (-r..=r).flat_map(move |hx| (-r..=r).map(move |hy| (hx, hy)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Hypothesis {
    pub dx: i32,
    pub dy: i32,
    pub support: u32,
}

impl Hypothesis {
    /// Ordering used to pick the winner: more support, then smaller
    /// displacement, then lexicographically smaller `(dx, dy)`.
    pub fn beats(&self, other: &Hypothesis) -> bool {
        let n = |h: &Hypothesis| h.dx * h.dx + h.dy * h.dy;
        (self.support, std::cmp::Reverse(n(self)), std::cmp::Reverse((self.dx, self.dy)))
            > (other.support, std::cmp::Reverse(n(other)), std::cmp::Reverse((other.dx, other.dy)))
    }
}

/// Displacement that maps the most previous-batch events onto pixels of
/// the current batch. Returns `None` when either set is empty.
pub fn search_jitter(prev: &SupportSet, curr: &SupportSet, grid: &HypothesisGrid) -> Option<Hypothesis> {
    search_jitter_with_chance(prev, curr, grid).map(|(h, _)| h)
}

/// Like [`search_jitter`], also returning the mean support over the whole
/// grid: the level a displacement reaches by chance overlap alone.
pub fn search_jitter_with_chance(
    prev: &SupportSet,
    curr: &SupportSet,
    grid: &HypothesisGrid,
) -> Option<(Hypothesis, f64)> {
    if prev.is_empty() || curr.is_empty() {
        return None;
    }
    let mut prev_counts: FxHashMap<(i32, i32), u32> = FxHashMap::default();
    for &p in &prev.pixels {
        *prev_counts.entry(p).or_default() += 1;
    }
    let mut curr_unique: Vec<(i32, i32)> = curr.pixels.clone();
    curr_unique.sort_unstable();
    curr_unique.dedup();

    // Every (prev event, distinct current pixel) pair votes for the shift between them.
    let side = grid.side();
    let r = grid.radius;
    let mut votes = vec![0u32; side * side];
    for (&(px, py), &m) in &prev_counts {
        for &(cx, cy) in &curr_unique {
            let h = (cx - px, cy - py);
            if grid.contains(h) {
                votes[(h.0 + r) as usize * side + (h.1 + r) as usize] += m;
            }
        }
    }

    let mut best = Hypothesis { dx: 0, dy: 0, support: votes[r as usize * side + r as usize] };
    for (i, &v) in votes.iter().enumerate() {
        let cand = Hypothesis { dx: (i / side) as i32 - r, dy: (i % side) as i32 - r, support: v };
        if cand.beats(&best) {
            best = cand;
        }
    }
    let chance = votes.iter().map(|&v| v as f64).sum::<f64>() / votes.len() as f64;
    Some((best, chance))
}


#[cfg(test)]
mod tests {
    use super::reference::search_brute_force;
    use super::*;
    use crate::model::Polarity;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(pixels: Vec<(i32, i32)>) -> SupportSet {
        SupportSet { pixels, radius: 20.58 }
    }

    fn blob(rng: &mut ChaCha8Rng, n: usize) -> Vec<(i32, i32)> {
        (0..n).map(|_| (100 + rng.random_range(-6..=6), 200 + rng.random_range(-6..=6))).collect()
    }

    #[test]
    fn identity_wins_tie_break() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = set(blob(&mut rng, 40));
        let h = search_jitter(&w, &w, &HypothesisGrid::covering(20.58)).unwrap();
        assert_eq!((h.dx, h.dy), (0, 0));
        assert_eq!(h.support, 40);
    }

    #[test]
    fn exact_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let prev = blob(&mut rng, 50);
        let curr: Vec<_> = prev.iter().map(|&(x, y)| (x + 3, y - 2)).collect();
        let h = search_jitter(&set(prev.clone()), &set(curr), &HypothesisGrid::covering(20.58)).unwrap();
        assert_eq!((h.dx, h.dy, h.support), (3, -2, prev.len() as u32));
    }

    #[test]
    fn empty_sets_unavailable() {
        let g = HypothesisGrid::new(21);
        assert!(search_jitter(&set(vec![]), &set(vec![(1, 1)]), &g).is_none());
        assert!(search_jitter(&set(vec![(1, 1)]), &set(vec![]), &g).is_none());
    }

    #[test]
    fn lexicographic_tie_break() {
        // (0,0)->(1,0) and (0,0)->(-1,0) give equal support and equal norm
        let prev = set(vec![(10, 10)]);
        let curr = set(vec![(11, 10), (9, 10)]);
        let h = search_jitter(&prev, &curr, &HypothesisGrid::new(3)).unwrap();
        assert_eq!((h.dx, h.dy), (-1, 0));
        assert_eq!(search_brute_force(&prev, &curr, &HypothesisGrid::new(3)), Some(h));
    }

    #[test]
    fn corrupted_sets_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = HypothesisGrid::covering(20.58);
        for _ in 0..50 {
            let prev = blob(&mut rng, 60);
            let (sx, sy) = (rng.random_range(-8..=8), rng.random_range(-8..=8));
            let mut curr: Vec<_> = prev.iter().map(|&(x, y)| (x + sx, y + sy)).collect();
            for p in curr.iter_mut().take(12) {
                *p = (rng.random_range(80..120), rng.random_range(180..220));
            }
            let (a, b) = (set(prev), set(curr));
            assert_eq!(search_jitter(&a, &b, &g), search_brute_force(&a, &b, &g));
        }
    }

    #[test]
    fn support_radius_is_strict() {
        let c = StarCentroid { x: 10.0, y: 10.0 };
        let evs = vec![
            Event::new(0, 10, 10, Polarity::Positive),
            Event::new(0, 13, 10, Polarity::Positive), // exactly r = 3
            Event::new(0, 12, 12, Polarity::Negative),
        ];
        let s = extract_support(&evs, c, 3.0);
        assert_eq!(s.pixels, vec![(10, 10), (12, 12)]);
        let all_at_centre = vec![Event::new(0, 10, 10, Polarity::Positive); 7];
        assert_eq!(extract_support(&all_at_centre, c, 0.5).len(), 7);
    }

    #[test]
    fn support_matches_distance_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let evs: Vec<Event> = (0..500)
            .map(|i| Event::new(i, rng.random_range(0..80), rng.random_range(0..80), Polarity::Positive))
            .collect();
        let c = StarCentroid { x: 40.3, y: 38.9 };
        let s = extract_support(&evs, c, 20.58);
        let expected: Vec<(i32, i32)> = evs
            .iter()
            .filter(|e| ((e.x as f64 - c.x).powi(2) + (e.y as f64 - c.y).powi(2)).sqrt() < 20.58)
            .map(|e| e.pixel())
            .collect();
        assert_eq!(s.pixels, expected);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn pixels() -> impl Strategy<Value = Vec<(i32, i32)>> {
            prop::collection::vec((0i32..30, 0i32..30), 1..40)
        }

        proptest! {
            #[test]
            fn translation_equivariant(a in pixels(), b in pixels(), tx in -50i32..50, ty in -50i32..50) {
                let g = HypothesisGrid::new(21);
                let h = search_jitter(&set(a.clone()), &set(b.clone()), &g).unwrap();
                let shift = |v: &[(i32, i32)]| v.iter().map(|&(x, y)| (x + tx, y + ty)).collect::<Vec<_>>();
                let h2 = search_jitter(&set(shift(&a)), &set(shift(&b)), &g).unwrap();
                prop_assert_eq!(h, h2);
            }

            #[test]
            fn bounded_and_equal_to_oracle(a in pixels(), b in pixels(), r in 0i32..25) {
                let g = HypothesisGrid::new(r);
                let h = search_jitter(&set(a.clone()), &set(b.clone()), &g).unwrap();
                prop_assert!(h.dx.abs() <= r && h.dy.abs() <= r);
                prop_assert_eq!(Some(h), search_brute_force(&set(a), &set(b), &g));
            }
        }
    }
}
