//! Density-based clustering over 2D points (Euclidean metric).
//!
//! Points are visited in input order; a border point reachable from two
//! clusters stays with whichever cluster claimed it first. Neighbourhoods are
//! closed balls (`d <= eps`) and include the query point itself.

use std::collections::HashMap;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    /// Cluster id per input point, `None` for noise.
    pub labels: Vec<Option<usize>>,
    /// Member indices per cluster, ascending, in discovery order.
    pub clusters: Vec<Vec<usize>>,
    pub noise: Vec<usize>,
}

impl Clustering {
    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }
}

/// Uniform grid with `eps`-sized cells for radius queries.
struct Grid {
    eps: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl Grid {
    fn new(points: &[[f64; 2]], eps: f64) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, eps)).or_default().push(i);
        }
        Self { eps, cells }
    }

    fn key(p: &[f64; 2], eps: f64) -> (i64, i64) {
        ((p[0] / eps).floor() as i64, (p[1] / eps).floor() as i64)
    }

    /// Indices within `eps` of point `i`, ascending.
    fn neighbours(&self, points: &[[f64; 2]], i: usize, out: &mut Vec<usize>) {
        out.clear();
        let p = points[i];
        let (cx, cy) = Self::key(&p, self.eps);
        let eps2 = self.eps * self.eps;
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(cell) = self.cells.get(&(cx + dx, cy + dy)) {
                    out.extend(cell.iter().copied().filter(|&j| {
                        let q = points[j];
                        let ex = p[0] - q[0];
                        let ey = p[1] - q[1];
                        ex * ex + ey * ey <= eps2
                    }));
                }
            }
        }
        out.sort_unstable();
    }
}

/// Clusters `points`; `min_samples` counts the point itself.
///
/// `eps` must be positive and `min_samples` at least 1; violating either
/// yields every point as noise.
pub fn dbscan(points: &[[f64; 2]], eps: f64, min_samples: usize) -> Clustering {
    let n = points.len();
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    if n == 0 || !(eps > 0.0) || min_samples == 0 {
        return Clustering {
            labels,
            clusters,
            noise: (0..n).collect(),
        };
    }

    let grid = Grid::new(points, eps);
    let mut visited = vec![false; n];
    let mut nbrs = Vec::new();
    let mut inner = Vec::new();
    let mut queue = std::collections::VecDeque::new();

    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        grid.neighbours(points, i, &mut nbrs);
        if nbrs.len() < min_samples {
            continue;
        }
        let id = clusters.len();
        let mut members = vec![i];
        labels[i] = Some(id);
        queue.clear();
        queue.extend(nbrs.iter().copied().filter(|&j| j != i));
        while let Some(j) = queue.pop_front() {
            if labels[j].is_none() {
                labels[j] = Some(id);
                members.push(j);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            grid.neighbours(points, j, &mut inner);
            if inner.len() >= min_samples {
                queue.extend(inner.iter().copied().filter(|&k| !visited[k] || labels[k].is_none()));
            }
        }
        members.sort_unstable();
        clusters.push(members);
    }

    let noise = (0..n).filter(|&i| labels[i].is_none()).collect();
    Clustering {
        labels,
        clusters,
        noise,
    }
}

/// Arithmetic mean of the selected points.
pub fn centroid(points: &[[f64; 2]], members: &[usize]) -> [f64; 2] {
    let k = members.len() as f64;
    let (sx, sy) = members
        .iter()
        .fold((0.0, 0.0), |(sx, sy), &i| (sx + points[i][0], sy + points[i][1]));
    [sx / k, sy / k]
}
