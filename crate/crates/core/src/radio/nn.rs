use crate::error::{Error, Result};
use crate::geo::LocalPoint;

/// Uniform-grid index for exact nearest-neighbour queries over a fixed point set.
///
/// Rings of cells are searched outward until the best candidate found is
/// provably closer than anything in an unvisited ring. Ties on distance go to
/// the smallest index, matching a linear scan.
#[derive(Clone, Debug)]
pub struct NearestNeighbors {
    points: Vec<LocalPoint>,
    min: LocalPoint,
    cell: f64,
    nx: usize,
    ny: usize,
    /// Point indices grouped by cell (row-major), ascending within each cell.
    starts: Vec<usize>,
    items: Vec<usize>,
}

impl NearestNeighbors {
    pub fn new(points: Vec<LocalPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid(
                "non-finite point in nearest-neighbour index",
            ));
        }
        let (mut lo, mut hi) = (points[0], points[0]);
        for p in &points {
            lo = LocalPoint::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = LocalPoint::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        let (w, h) = ((hi.x - lo.x).max(1e-9), (hi.y - lo.y).max(1e-9));
        // about two points per cell
        let target_cells = (points.len() / 2).max(1) as f64;
        let cell = ((w * h) / target_cells).sqrt().max(w.max(h) / 4096.0);
        let nx = ((w / cell).floor() as usize + 1).max(1);
        let ny = ((h / cell).floor() as usize + 1).max(1);
        let mut counts = vec![0usize; nx * ny + 1];
        let cell_of = |p: &LocalPoint| {
            let cx = (((p.x - lo.x) / cell) as usize).min(nx - 1);
            let cy = (((p.y - lo.y) / cell) as usize).min(ny - 1);
            cy * nx + cx
        };
        for p in &points {
            counts[cell_of(p) + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let starts = counts.clone();
        let mut fill = counts;
        let mut items = vec![0; points.len()];
        for (i, p) in points.iter().enumerate() {
            let c = cell_of(p);
            items[fill[c]] = i;
            fill[c] += 1;
        }
        Ok(NearestNeighbors {
            points,
            min: lo,
            cell,
            nx,
            ny,
            starts,
            items,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[LocalPoint] {
        &self.points
    }

    pub fn nearest(&self, q: LocalPoint) -> usize {
        let fx = (q.x - self.min.x) / self.cell;
        let fy = (q.y - self.min.y) / self.cell;
        let cx = fx.floor().clamp(0.0, (self.nx - 1) as f64) as i64;
        let cy = fy.floor().clamp(0.0, (self.ny - 1) as f64) as i64;
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        let max_ring = self.nx.max(self.ny) as i64;
        for ring in 0..=max_ring {
            // distance from q to the nearest point of any cell in this ring
            if ring > 0 && best != usize::MAX {
                let gap = self.ring_clearance(q, cx, cy, ring);
                if gap == f64::INFINITY || gap * gap > best_d {
                    break;
                }
            }
            for (x, y) in ring_cells(cx, cy, ring) {
                if x < 0 || y < 0 || x >= self.nx as i64 || y >= self.ny as i64 {
                    continue;
                }
                let c = y as usize * self.nx + x as usize;
                for &i in &self.items[self.starts[c]..self.starts[c + 1]] {
                    let d = self.points[i].distance_sq(&q);
                    if d < best_d || (d == best_d && i < best) {
                        best_d = d;
                        best = i;
                    }
                }
            }
        }
        best
    }

    /// Lower bound on the distance from `q` to any cell at Chebyshev ring `ring`
    /// around `(cx, cy)`.
    fn ring_clearance(&self, q: LocalPoint, cx: i64, cy: i64, ring: i64) -> f64 {
        // the visited block spans cells cx-ring+1 ..= cx+ring-1; a side that
        // already reaches the grid edge has no unvisited points beyond it
        let (lo_x, hi_x) = (cx - ring + 1, cx + ring - 1);
        let (lo_y, hi_y) = (cy - ring + 1, cy + ring - 1);
        let mut gap = f64::INFINITY;
        if lo_x > 0 {
            gap = gap.min(q.x - (self.min.x + lo_x as f64 * self.cell));
        }
        if hi_x < self.nx as i64 - 1 {
            gap = gap.min(self.min.x + (hi_x + 1) as f64 * self.cell - q.x);
        }
        if lo_y > 0 {
            gap = gap.min(q.y - (self.min.y + lo_y as f64 * self.cell));
        }
        if hi_y < self.ny as i64 - 1 {
            gap = gap.min(self.min.y + (hi_y + 1) as f64 * self.cell - q.y);
        }
        gap.max(0.0)
    }
}

fn ring_cells(cx: i64, cy: i64, ring: i64) -> impl Iterator<Item = (i64, i64)> {
    let r = ring;
    (-r..=r).flat_map(move |dy| {
        let dxs: Vec<i64> = if dy.abs() == r {
            (-r..=r).collect()
        } else {
            vec![-r, r]
        };
        dxs.into_iter().map(move |dx| (cx + dx, cy + dy))
    })
}

/// Index of the point closest to `q`, ties to the smallest index, by linear scan.
pub fn nearest_linear(points: &[LocalPoint], q: LocalPoint) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        let d = p.distance_sq(&q);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
}
