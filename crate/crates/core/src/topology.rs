//! Cluster placements and the pairwise path-loss geometry.
//!
//! A [`Topology`] is immutable once built. It stores the dense distance
//! matrix together with the received-power matrix `P0 / d^eta`, so the
//! allocation inner loop never evaluates `powf`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_P0: f64 = 1.0;
pub const DEFAULT_ETA: f64 = 2.0;

/// How the positions were generated. Reference assignments (alternating,
/// lattice reuse) need this to know the array's structure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layout {
    UniformLinear { n: usize, d: f64 },
    RandomLinear { n: usize, d: f64, min_sep: f64 },
    Rectangular { rows: usize, cols: usize, d: f64 },
    Hexagonal { rows: usize, cols: usize, d: f64 },
    Custom,
}

impl Layout {
    pub fn is_linear(&self) -> bool {
        matches!(self, Layout::UniformLinear { .. } | Layout::RandomLinear { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    positions: Vec<[f64; 2]>,
    dim: usize,
    dist: Vec<f64>,
    gain: Vec<f64>,
    p0: f64,
    eta: f64,
    min_sep: f64,
    layout: Layout,
}

impl Topology {
    /// Builds a topology from explicit coordinates. `min_sep` becomes the
    /// smallest pairwise distance found.
    pub fn from_positions(positions: Vec<Vec<f64>>, p0: f64, eta: f64) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::invalid("positions", "at least one cluster is required"));
        }
        let dim = positions[0].len();
        if !(1..=2).contains(&dim) {
            return Err(Error::invalid("positions", "coordinates must be 1-D or 2-D"));
        }
        let mut pts = Vec::with_capacity(positions.len());
        for (i, p) in positions.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::invalid(
                    "positions",
                    format!("cluster {i} has {} coordinates, expected {dim}", p.len()),
                ));
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid("positions", format!("cluster {i} is not finite")));
            }
            pts.push([p[0], if dim == 2 { p[1] } else { 0.0 }]);
        }
        Self::build(pts, dim, p0, eta, None, Layout::Custom)
    }

    fn build(
        positions: Vec<[f64; 2]>,
        dim: usize,
        p0: f64,
        eta: f64,
        min_sep: Option<f64>,
        layout: Layout,
    ) -> Result<Self> {
        if !(p0 > 0.0 && p0.is_finite()) {
            return Err(Error::invalid("p0", format!("must be positive, got {p0}")));
        }
        if !(eta >= 1.0 && eta.is_finite()) {
            return Err(Error::invalid("eta", format!("must be at least 1, got {eta}")));
        }
        let n = positions.len();
        let mut dist = vec![0.0; n * n];
        let mut observed_min = f64::INFINITY;
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = positions[i][0] - positions[j][0];
                let dy = positions[i][1] - positions[j][1];
                let d = dx.hypot(dy);
                dist[i * n + j] = d;
                dist[j * n + i] = d;
                observed_min = observed_min.min(d);
            }
        }
        if n > 1 && !(observed_min > 0.0) {
            return Err(Error::invalid("positions", "two clusters share a location"));
        }
        let min_sep = match min_sep {
            Some(m) => {
                // generators guarantee this up to rounding of the coordinates
                if n > 1 && observed_min < m * (1.0 - 1e-12) {
                    return Err(Error::invalid(
                        "min_sep",
                        format!("pair at distance {observed_min} is closer than {m}"),
                    ));
                }
                m
            }
            None if n > 1 => observed_min,
            None => f64::INFINITY,
        };
        let mut topo = Topology {
            positions,
            dim,
            dist,
            gain: Vec::new(),
            p0,
            eta,
            min_sep,
            layout,
        };
        topo.refresh_gain();
        Ok(topo)
    }

    fn refresh_gain(&mut self) {
        let n = self.len();
        self.gain = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let g = self.p0 / self.dist[i * n + j].powf(self.eta);
                self.gain[i * n + j] = g;
                self.gain[j * n + i] = g;
            }
        }
    }

    /// Replaces the path-loss parameters, keeping the geometry.
    pub fn with_path_loss(mut self, p0: f64, eta: f64) -> Result<Self> {
        if !(p0 > 0.0 && p0.is_finite()) {
            return Err(Error::invalid("p0", format!("must be positive, got {p0}")));
        }
        if !(eta >= 1.0 && eta.is_finite()) {
            return Err(Error::invalid("eta", format!("must be at least 1, got {eta}")));
        }
        self.p0 = p0;
        self.eta = eta;
        self.refresh_gain();
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i][..self.dim]
    }

    pub fn positions(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.position(i).to_vec()).collect()
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.len() + j]
    }

    /// Received power at `i` from a transmitter at `j`: `P0 / d_ij^eta`, zero on the diagonal.
    #[inline]
    pub fn gain(&self, i: usize, j: usize) -> f64 {
        self.gain[i * self.len() + j]
    }

    /// Row `i` of the gain matrix.
    #[inline]
    pub fn gain_row(&self, i: usize) -> &[f64] {
        let n = self.len();
        &self.gain[i * n..(i + 1) * n]
    }

    pub fn p0(&self) -> f64 {
        self.p0
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn min_sep(&self) -> f64 {
        self.min_sep
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    /// Smallest and largest gap between neighbouring clusters along a
    /// linear array. `None` for 2-D placements.
    pub fn adjacent_gaps(&self) -> Option<(f64, f64)> {
        if self.dim != 1 || self.len() < 2 {
            return None;
        }
        let mut xs: Vec<f64> = self.positions.iter().map(|p| p[0]).collect();
        xs.sort_by(f64::total_cmp);
        let gaps = xs.windows(2).map(|w| w[1] - w[0]);
        let (lo, hi) = gaps.fold((f64::INFINITY, 0.0f64), |(lo, hi), g| (lo.min(g), hi.max(g)));
        Some((lo, hi))
    }

    pub fn to_document(&self) -> TopologyDocument {
        TopologyDocument {
            positions: self.positions(),
            p0: self.p0,
            eta: self.eta,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("topology document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TopologyDocument =
            serde_json::from_str(text).map_err(|e| Error::Document(e.to_string()))?;
        Self::from_positions(doc.positions, doc.p0, doc.eta)
    }
}

/// On-disk form of a topology. The distance matrix is never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyDocument {
    pub positions: Vec<Vec<f64>>,
    pub p0: f64,
    pub eta: f64,
}

fn check_spacing(d: f64) -> Result<()> {
    if d > 0.0 && d.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("d", format!("spacing must be positive, got {d}")))
    }
}

fn check_grid(rows: usize, cols: usize) -> Result<()> {
    if rows == 0 || cols == 0 || rows * cols < 2 {
        Err(Error::invalid(
            "rows/cols",
            format!("{rows}x{cols} lattice must hold at least two clusters"),
        ))
    } else {
        Ok(())
    }
}

/// Clusters at `0, d, 2d, ..., (n-1)d`.
pub fn make_uniform_linear_array(n: usize, d: f64) -> Result<Topology> {
    if n < 2 {
        return Err(Error::invalid("n", format!("need at least 2 clusters, got {n}")));
    }
    check_spacing(d)?;
    let positions = (0..n).map(|i| [i as f64 * d, 0.0]).collect();
    let mut topo = Topology::build(
        positions,
        1,
        DEFAULT_P0,
        DEFAULT_ETA,
        Some(d),
        Layout::UniformLinear { n, d },
    )?;
    // exact |i-j| d, independent of coordinate rounding
    for i in 0..n {
        for j in 0..n {
            topo.dist[i * n + j] = i.abs_diff(j) as f64 * d;
        }
    }
    topo.refresh_gain();
    Ok(topo)
}

/// `n` clusters in `[0, (n-1)d]` with the endpoints pinned and every pair at
/// least `min_sep` apart.
///
/// Interior points are drawn uniformly from the feasible set by sampling
/// `n-2` uniform points on the slack interval `[0, (n-1)(d - min_sep)]`,
/// sorting them and shifting the k-th by `k * min_sep`.
pub fn make_random_linear_array<R: Rng + ?Sized>(
    n: usize,
    d: f64,
    min_sep: f64,
    rng: &mut R,
) -> Result<Topology> {
    if n < 2 {
        return Err(Error::invalid("n", format!("need at least 2 clusters, got {n}")));
    }
    check_spacing(d)?;
    if !(min_sep > 0.0 && min_sep.is_finite()) {
        return Err(Error::invalid("min_sep", format!("must be positive, got {min_sep}")));
    }
    if min_sep > d {
        return Err(Error::invalid(
            "min_sep",
            format!("{n} clusters cannot be {min_sep} apart within [0, {}]", (n - 1) as f64 * d),
        ));
    }
    let span = (n - 1) as f64 * d;
    let slack = (n - 1) as f64 * (d - min_sep);
    let mut u: Vec<f64> = (0..n - 2).map(|_| rng.random::<f64>() * slack).collect();
    u.sort_by(f64::total_cmp);
    let mut positions = Vec::with_capacity(n);
    positions.push([0.0, 0.0]);
    for (k, x) in u.iter().enumerate() {
        positions.push([x + (k + 1) as f64 * min_sep, 0.0]);
    }
    positions.push([span, 0.0]);
    Topology::build(
        positions,
        1,
        DEFAULT_P0,
        DEFAULT_ETA,
        Some(min_sep),
        Layout::RandomLinear { n, d, min_sep },
    )
}

/// Integer lattice: cluster `(i, j)` at `(j d, i d)`, row-major indexing.
pub fn make_rectangular_lattice(rows: usize, cols: usize, d: f64) -> Result<Topology> {
    check_grid(rows, cols)?;
    check_spacing(d)?;
    let mut positions = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            positions.push([j as f64 * d, i as f64 * d]);
        }
    }
    let dim = if rows == 1 || cols == 1 { 1 } else { 2 };
    if dim == 1 {
        for p in positions.iter_mut() {
            p[0] += p[1];
            p[1] = 0.0;
        }
    }
    Topology::build(
        positions,
        dim,
        DEFAULT_P0,
        DEFAULT_ETA,
        Some(d),
        Layout::Rectangular { rows, cols, d },
    )
}

/// Triangular (hexagonal-packing) lattice built from offset rows: odd rows
/// shift by `d/2`, rows are `d * sqrt(3)/2` apart.
pub fn make_hexagonal_lattice(rows: usize, cols: usize, d: f64) -> Result<Topology> {
    check_grid(rows, cols)?;
    check_spacing(d)?;
    let pitch = d * 3f64.sqrt() / 2.0;
    let mut positions = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        let offset = if i % 2 == 1 { d / 2.0 } else { 0.0 };
        for j in 0..cols {
            positions.push([j as f64 * d + offset, i as f64 * pitch]);
        }
    }
    let dim = if rows == 1 { 1 } else { 2 };
    Topology::build(
        positions,
        dim,
        DEFAULT_P0,
        DEFAULT_ETA,
        Some(d),
        Layout::Hexagonal { rows, cols, d },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn assert_geometry(t: &Topology) {
        let n = t.len();
        for i in 0..n {
            assert_eq!(t.dist(i, i), 0.0);
            for j in 0..n {
                assert_eq!(t.dist(i, j), t.dist(j, i));
                if i != j {
                    assert!(t.dist(i, j) >= t.min_sep() * (1.0 - 1e-12));
                }
            }
        }
    }

    #[test]
    fn ula_distances() {
        let t = make_uniform_linear_array(3, 1.0).unwrap();
        assert_eq!(t.dist(0, 2), 2.0);
        let t = make_uniform_linear_array(2, 0.5).unwrap();
        assert_eq!(t.dist(0, 1), 0.5);
        assert_eq!(t.dist(1, 0), 0.5);
        let t = make_uniform_linear_array(100, 1.0).unwrap();
        assert_eq!(t.dist(0, 99), 99.0);
        for i in 0..100 {
            for j in 0..100 {
                assert_eq!(t.dist(i, j), i.abs_diff(j) as f64);
            }
        }
        assert_geometry(&t);
    }

    #[test]
    fn ula_rejects_degenerate() {
        assert!(make_uniform_linear_array(1, 1.0).is_err());
        assert!(make_uniform_linear_array(3, 0.0).is_err());
        assert!(make_uniform_linear_array(3, -1.0).is_err());
    }

    #[test]
    fn random_linear_endpoints_and_gaps() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = make_random_linear_array(2, 1.0, 1.0, &mut rng).unwrap();
        assert_eq!(t.positions(), vec![vec![0.0], vec![1.0]]);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = make_random_linear_array(10, 1.0, 0.5, &mut rng).unwrap();
        let xs: Vec<f64> = t.positions().into_iter().map(|p| p[0]).collect();
        assert_eq!(xs[0], 0.0);
        assert_eq!(xs[9], 9.0);
        for w in xs.windows(2) {
            let gap = w[1] - w[0];
            assert!((0.5 - 1e-12..=9.0).contains(&gap), "gap {gap}");
        }
        assert_geometry(&t);
    }

    #[test]
    fn random_linear_infeasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(make_random_linear_array(3, 1.0, 1.5, &mut rng).is_err());
    }

    #[test]
    fn random_linear_is_seed_deterministic() {
        let a = make_random_linear_array(50, 1.0, 0.3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = make_random_linear_array(50, 1.0, 0.3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rectangular_geometry() {
        let t = make_rectangular_lattice(2, 2, 1.0).unwrap();
        assert!((t.dist(0, 3) - 2f64.sqrt()).abs() < 1e-15);
        let t = make_rectangular_lattice(1, 3, 2.0).unwrap();
        assert_eq!(t.dist(0, 2), 4.0);
        assert_eq!(t.dim(), 1);
        let t = make_rectangular_lattice(10, 10, 1.0).unwrap();
        assert_eq!(t.len(), 100);
        assert_geometry(&t);
        assert!(make_rectangular_lattice(1, 1, 1.0).is_err());
        assert!(make_rectangular_lattice(0, 5, 1.0).is_err());
    }

    #[test]
    fn hexagonal_geometry() {
        let t = make_hexagonal_lattice(2, 2, 1.0).unwrap();
        for i in 0..4 {
            let unit = (0..4).filter(|&j| j != i && (t.dist(i, j) - 1.0).abs() < 1e-12).count();
            assert!(unit >= 2, "cluster {i} has {unit} unit neighbours");
        }
        let t = make_hexagonal_lattice(1, 2, 1.0).unwrap();
        assert_eq!(t.dist(0, 1), 1.0);
        let t = make_hexagonal_lattice(10, 10, 1.0).unwrap();
        assert_eq!(t.len(), 100);
        assert_geometry(&t);
        // interior cluster of a triangular lattice has six unit neighbours
        let c = 5 * 10 + 5;
        let unit = (0..100).filter(|&j| j != c && (t.dist(c, j) - 1.0).abs() < 1e-12).count();
        assert_eq!(unit, 6);
    }

    #[test]
    fn json_round_trip_recomputes_distances() {
        let t = make_hexagonal_lattice(3, 4, 1.5).unwrap().with_path_loss(2.0, 3.0).unwrap();
        let text = t.to_json();
        assert!(!text.contains("dist"));
        let back = Topology::from_json(&text).unwrap();
        assert_eq!(back.len(), t.len());
        assert_eq!(back.eta(), 3.0);
        for i in 0..t.len() {
            for j in 0..t.len() {
                assert!((back.dist(i, j) - t.dist(i, j)).abs() < 1e-12);
            }
        }
        let one_d = Topology::from_json(r#"{"positions": [[0.0],[2.0]], "p0": 1.0, "eta": 2.0}"#)
            .unwrap();
        assert_eq!(one_d.gain(0, 1), 0.25);
    }

    #[test]
    fn from_positions_rejects_bad_input() {
        assert!(Topology::from_positions(vec![vec![0.0], vec![0.0]], 1.0, 2.0).is_err());
        assert!(Topology::from_positions(vec![vec![0.0], vec![1.0, 2.0]], 1.0, 2.0).is_err());
        assert!(Topology::from_positions(vec![vec![0.0], vec![1.0]], 0.0, 2.0).is_err());
        assert!(Topology::from_positions(vec![vec![0.0], vec![1.0]], 1.0, 0.5).is_err());
    }
}
