//! Ground truth for small instances and the analytic reference values the
//! converged algorithm is measured against.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interference::{
    aggregate_interference, worst_case_interference, ActivityState, Assignment, InterferenceCache,
};
use crate::topology::{Layout, Topology};

/// Largest `r^(active clusters)` the exhaustive search will enumerate.
pub const SEARCH_LIMIT: f64 = 1e7;

/// `bound_report` only runs the exhaustive search below this size.
pub const REPORT_SEARCH_LIMIT: f64 = 65_536.0;

/// Globally optimal assignment by enumerating every band choice of the
/// active clusters in lexicographic order. The first minimizer found (the
/// lexicographically smallest) is returned; inactive clusters are put in
/// band 1.
pub fn brute_force_optimal(top: &Topology, act: &ActivityState, r: usize) -> Result<(Assignment, f64)> {
    if act.len() != top.len() {
        return Err(Error::invalid("activity", "length does not match topology"));
    }
    if r == 0 {
        return Err(Error::invalid("r", "at least one band is required"));
    }
    let active: Vec<usize> = act.active_indices().collect();
    let size = (r as f64).powi(active.len() as i32);
    if size > SEARCH_LIMIT {
        return Err(Error::SearchSpace {
            size,
            limit: SEARCH_LIMIT,
        });
    }
    let mut asg = Assignment::uniform(top.len(), r)?;
    let mut cache = InterferenceCache::new(top, &asg, act)?;
    let mut best = asg.clone();
    let mut best_value = cache.aggregate(&asg, act);
    if r == 1 || active.is_empty() {
        return Ok((best, best_value));
    }
    loop {
        // odometer step, last active cluster varies fastest
        let mut pos = active.len();
        loop {
            if pos == 0 {
                return Ok((best, best_value));
            }
            pos -= 1;
            let i = active[pos];
            let b = asg.band(i);
            if b < r {
                cache.switch_band(top, &mut asg, act, i, b + 1);
                break;
            }
            cache.switch_band(top, &mut asg, act, i, 1);
        }
        let value = cache.aggregate(&asg, act);
        if value < best_value - 1e-12 * best_value.max(f64::MIN_POSITIVE) {
            best_value = value;
            best = asg.clone();
        }
    }
}

/// Bands cycle `1, 2, ..., r` along the cluster index.
pub fn alternating_assignment(n: usize, r: usize) -> Result<Assignment> {
    if n == 0 {
        return Err(Error::invalid("n", "at least one cluster is required"));
    }
    Assignment::new((0..n).map(|i| i % r.max(1) + 1).collect(), r)
}

/// Frequency-reuse pattern on a lattice: `r = k^2` tiles a `k x k` block on
/// the rectangular lattice (`r = 2` is the checkerboard); the hexagonal
/// lattice supports `r = 3` and `r = 4`, both with co-band clusters never
/// adjacent.
pub fn lattice_reuse_assignment(layout: Layout, r: usize) -> Option<Assignment> {
    let bands: Vec<usize> = match layout {
        Layout::Rectangular { rows, cols, .. } => {
            let k = (r as f64).sqrt().round() as usize;
            if k * k == r {
                (0..rows)
                    .flat_map(|i| (0..cols).map(move |j| (i % k) * k + j % k + 1))
                    .collect()
            } else if r == 2 {
                (0..rows)
                    .flat_map(|i| (0..cols).map(move |j| (i + j) % 2 + 1))
                    .collect()
            } else {
                return None;
            }
        }
        Layout::Hexagonal { rows, cols, .. } => {
            // axial coordinates of the offset-row construction
            let axial = |i: usize, j: usize| (j as i64 - (i / 2) as i64, i as i64);
            match r {
                3 => (0..rows)
                    .flat_map(|i| {
                        (0..cols).map(move |j| {
                            let (q, s) = axial(i, j);
                            (q - s).rem_euclid(3) as usize + 1
                        })
                    })
                    .collect(),
                4 => (0..rows)
                    .flat_map(|i| {
                        (0..cols).map(move |j| {
                            let (q, s) = axial(i, j);
                            2 * q.rem_euclid(2) as usize + s.rem_euclid(2) as usize + 1
                        })
                    })
                    .collect(),
                _ => return None,
            }
        }
        _ => return None,
    };
    Assignment::new(bands, r).ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    /// Exhaustive search over all assignments.
    Exhaustive,
    /// Alternating assignment on a uniform linear array with two bands and
    /// `eta >= 2`, where it is provably optimal.
    AlternatingOptimal,
    /// Alternating along a linear array: a near-optimal reference.
    Alternating,
    /// Lattice frequency-reuse pattern: a near-optimal reference.
    Reuse,
}

impl ReferenceKind {
    pub fn label(&self) -> &'static str {
        match self {
            ReferenceKind::Exhaustive => "optimal (exhaustive search)",
            ReferenceKind::AlternatingOptimal => "optimal (alternating, two bands)",
            ReferenceKind::Alternating => "near-optimal reference (alternating)",
            ReferenceKind::Reuse => "near-optimal reference (1:r reuse)",
        }
    }

    pub fn is_optimal(&self) -> bool {
        matches!(self, ReferenceKind::Exhaustive | ReferenceKind::AlternatingOptimal)
    }
}

/// Centralized reference assignment for a topology: alternating along
/// linear arrays (in position order), 1:r reuse on lattices.
pub fn reference_assignment(top: &Topology, r: usize) -> Option<(Assignment, ReferenceKind)> {
    let n = top.len();
    if r == 1 {
        return Assignment::uniform(n, 1).ok().map(|a| (a, ReferenceKind::Alternating));
    }
    let layout = top.layout();
    if layout.is_linear() || (layout == Layout::Custom && top.dim() == 1) {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| top.position(a)[0].total_cmp(&top.position(b)[0]));
        let mut bands = vec![1; n];
        for (rank, &i) in order.iter().enumerate() {
            bands[i] = rank % r + 1;
        }
        let kind = match layout {
            Layout::UniformLinear { .. } if r == 2 && top.eta() >= 2.0 => ReferenceKind::AlternatingOptimal,
            _ => ReferenceKind::Alternating,
        };
        return Assignment::new(bands, r).ok().map(|a| (a, kind));
    }
    lattice_reuse_assignment(layout, r).map(|a| (a, ReferenceKind::Reuse))
}

/// Terms summed directly before the Euler-Maclaurin tail takes over.
const ZETA_DIRECT_TERMS: u32 = 1000;

/// Riemann zeta for real `s > 1`: direct summation of the first terms plus
/// an Euler-Maclaurin tail through the `B_6` correction.
pub fn riemann_zeta(s: f64) -> Result<f64> {
    if !(s > 1.0) || !s.is_finite() {
        return Err(Error::Domain(format!("zeta({s}) (series diverges for s <= 1)")));
    }
    let m = ZETA_DIRECT_TERMS as f64;
    let head: f64 = (1..ZETA_DIRECT_TERMS).rev().map(|j| (j as f64).powf(-s)).sum();
    let fm = m.powf(-s);
    let tail = m.powf(1.0 - s) / (s - 1.0) + fm / 2.0 + s * fm / (12.0 * m)
        - s * (s + 1.0) * (s + 2.0) * fm / (720.0 * m.powi(3))
        + s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) * fm / (30240.0 * m.powi(5));
    Ok(head + tail)
}

/// Large-N per-cluster lower bound on the optimal aggregate for a linear
/// array of spacing `d`: `2 zeta(eta) P0 / (r d)^eta`.
pub fn asymptotic_lower_bound(r: usize, eta: f64, p0: f64, d: f64) -> Result<f64> {
    if r == 0 {
        return Err(Error::invalid("r", "at least one band is required"));
    }
    if !(d > 0.0) {
        return Err(Error::invalid("d", format!("must be positive, got {d}")));
    }
    Ok(2.0 * riemann_zeta(eta)? * p0 / ((r as f64) * d).powf(eta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n_active: usize,
    pub r: usize,
    pub eta: f64,
    /// Aggregate of the converged assignment.
    pub i_a: f64,
    /// Optimal or reference aggregate, when one is available.
    pub i_o: Option<f64>,
    pub i_o_source: Option<ReferenceKind>,
    pub i_o_label: Option<String>,
    /// All active clusters co-band.
    pub i_w: f64,
    pub ratio_aw: f64,
    pub ratio_ao: Option<f64>,
    /// `n_active` times the per-cluster asymptotic lower bound (linear arrays).
    pub analytic_lower: Option<f64>,
    /// `r^(eta-1) / (d_min / min(d_max, d))^eta` from adjacent gaps (linear arrays).
    pub analytic_ratio_cap: Option<f64>,
    /// `I_a <= I_w / r` up to 1e-9 relative.
    pub upper_bound_holds: bool,
    /// `I_o <= I_a` whenever `I_o` is a true optimum.
    pub oracle_consistent: bool,
}

impl BoundReport {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !self.upper_bound_holds {
            v.push(format!(
                "I_a = {} exceeds I_w / r = {}",
                self.i_a,
                self.i_w / self.r as f64
            ));
        }
        if !self.oracle_consistent {
            v.push(format!("optimum {:?} exceeds I_a = {}", self.i_o, self.i_a));
        }
        v
    }
}

/// Measures a converged assignment against the worst case, the optimum (or
/// a labelled reference) and the analytic bounds.
pub fn bound_report(
    top: &Topology,
    act: &ActivityState,
    converged: &Assignment,
    r: usize,
    d_ref: f64,
) -> Result<BoundReport> {
    let i_a = aggregate_interference(top, converged, act);
    let i_w = worst_case_interference(top, act);
    let n_active = act.active_count();
    let eta = top.eta();

    let mut reference = None;
    if (r as f64).powi(n_active as i32) <= REPORT_SEARCH_LIMIT {
        let (_, value) = brute_force_optimal(top, act, r)?;
        reference = Some((value, ReferenceKind::Exhaustive));
    } else if let Some((asg, kind)) = reference_assignment(top, r) {
        reference = Some((aggregate_interference(top, &asg, act), kind));
    }
    let (i_o, i_o_source) = match reference {
        Some((v, k)) => (Some(v), Some(k)),
        None => (None, None),
    };

    let linear = top.dim() == 1;
    let analytic_lower = if linear && eta > 1.0 {
        Some(n_active as f64 * asymptotic_lower_bound(r, eta, top.p0(), d_ref)?)
    } else {
        None
    };
    let analytic_ratio_cap = top.adjacent_gaps().map(|(d_min, d_max)| {
        (r as f64).powf(eta - 1.0) / (d_min / d_max.min(d_ref)).powf(eta)
    });

    let upper_bound_holds = i_a <= i_w / r as f64 + 1e-9 * (i_w / r as f64).max(1.0);
    let oracle_consistent = match (i_o, i_o_source) {
        (Some(o), Some(k)) if k.is_optimal() => o <= i_a + 1e-9 * i_a.max(1.0),
        _ => true,
    };
    Ok(BoundReport {
        n_active,
        r,
        eta,
        i_a,
        i_o,
        i_o_source,
        i_o_label: i_o_source.map(|k| k.label().to_string()),
        i_w,
        ratio_aw: if i_w > 0.0 { i_a / i_w } else { 0.0 },
        ratio_ao: i_o.filter(|&o| o > 0.0).map(|o| i_a / o),
        analytic_lower,
        analytic_ratio_cap,
        upper_bound_holds,
        oracle_consistent,
    })
}
