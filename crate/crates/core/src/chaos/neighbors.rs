//! Exact nearest-neighbour queries over embedded point sets.
//!
//! Points are sorted by their first coordinate. For both supported norms the
//! first-coordinate gap lower-bounds the full distance, so a scan outward
//! from the query's rank can stop as soon as that gap exceeds the best
//! distance found. Ties are broken by the smaller point index, which makes
//! the result identical to a plain linear scan.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    Euclidean,
    Max,
}

impl Norm {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Norm::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Norm::Max => a
                .iter()
                .zip(b)
                .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist: f64,
}

pub struct NeighborIndex<'a> {
    points: &'a [Vec<f64>],
    norm: Norm,
    order: Vec<usize>,
    rank: Vec<usize>,
}

impl<'a> NeighborIndex<'a> {
    pub fn new(points: &'a [Vec<f64>], norm: Norm) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| points[a][0].total_cmp(&points[b][0]).then(a.cmp(&b)));
        let mut rank = vec![0; points.len()];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r;
        }
        Self {
            points,
            norm,
            order,
            rank,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn norm(&self) -> Norm {
        self.norm
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.norm.distance(&self.points[i], &self.points[j])
    }

    /// Nearest point `j != query` with `accept(j)` and distance `>= min_dist`.
    pub fn nearest(
        &self,
        query: usize,
        min_dist: f64,
        accept: impl Fn(usize) -> bool,
    ) -> Option<Neighbor> {
        let q = &self.points[query];
        let r = self.rank[query];
        let mut best: Option<Neighbor> = None;
        let consider = |j: usize, best: &mut Option<Neighbor>| {
            if j == query || !accept(j) {
                return;
            }
            let d = self.norm.distance(q, &self.points[j]);
            if d < min_dist {
                return;
            }
            let better = match best {
                None => true,
                Some(b) => d < b.dist || (d == b.dist && j < b.index),
            };
            if better {
                *best = Some(Neighbor { index: j, dist: d });
            }
        };
        let mut lo = r;
        let mut hi = r + 1;
        let mut lo_open = true;
        let mut hi_open = true;
        while lo_open || hi_open {
            if lo_open {
                if lo == 0 {
                    lo_open = false;
                } else {
                    lo -= 1;
                    let j = self.order[lo];
                    let gap = q[0] - self.points[j][0];
                    if best.is_some_and(|b| gap > b.dist) {
                        lo_open = false;
                    } else {
                        consider(j, &mut best);
                    }
                }
            }
            if hi_open {
                if hi >= self.order.len() {
                    hi_open = false;
                } else {
                    let j = self.order[hi];
                    hi += 1;
                    let gap = self.points[j][0] - q[0];
                    if best.is_some_and(|b| gap > b.dist) {
                        hi_open = false;
                    } else {
                        consider(j, &mut best);
                    }
                }
            }
        }
        best
    }

    /// All points `j != query` with `accept(j)` and `min_dist <= dist < radius`,
    /// ordered by index.
    pub fn within(
        &self,
        query: usize,
        radius: f64,
        min_dist: f64,
        accept: impl Fn(usize) -> bool,
    ) -> Vec<Neighbor> {
        let q = &self.points[query];
        let r = self.rank[query];
        let mut out = Vec::new();
        let mut visit = |j: usize| {
            if j == query || !accept(j) {
                return;
            }
            let d = self.norm.distance(q, &self.points[j]);
            if d >= min_dist && d < radius {
                out.push(Neighbor { index: j, dist: d });
            }
        };
        for &j in self.order[..r].iter().rev() {
            if q[0] - self.points[j][0] >= radius {
                break;
            }
            visit(j);
        }
        for &j in &self.order[r + 1..] {
            if self.points[j][0] - q[0] >= radius {
                break;
            }
            visit(j);
        }
        out.sort_by_key(|n| n.index);
        out
    }
}
