//! Co-band path-loss interference.
//!
//! Bands are 1-based (`1..=r`) everywhere in the public API. Inactive
//! clusters neither radiate nor count as receivers in the aggregate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::Topology;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment {
    bands: Vec<usize>,
    r: usize,
}

impl Assignment {
    pub fn new(bands: Vec<usize>, r: usize) -> Result<Self> {
        if r == 0 {
            return Err(Error::invalid("r", "at least one band is required"));
        }
        if let Some((i, b)) = bands.iter().enumerate().find(|(_, &b)| b == 0 || b > r) {
            return Err(Error::invalid("bands", format!("cluster {i} has band {b}, outside 1..={r}")));
        }
        Ok(Assignment { bands, r })
    }

    /// Every cluster in band 1.
    pub fn uniform(n: usize, r: usize) -> Result<Self> {
        Self::new(vec![1; n], r)
    }

    pub fn len(&self) -> usize {
        self.bands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }

    pub fn r(&self) -> usize {
        self.r
    }

    #[inline]
    pub fn band(&self, i: usize) -> usize {
        self.bands[i]
    }

    pub fn bands(&self) -> &[usize] {
        &self.bands
    }

    pub(crate) fn set(&mut self, i: usize, band: usize) {
        debug_assert!((1..=self.r).contains(&band));
        self.bands[i] = band;
    }

    /// Relabels bands in order of first appearance, so assignments that only
    /// differ by a permutation of band labels compare equal.
    pub fn canonical(&self) -> Assignment {
        let mut map = vec![0usize; self.r + 1];
        let mut next = 1;
        let bands = self
            .bands
            .iter()
            .map(|&b| {
                if map[b] == 0 {
                    map[b] = next;
                    next += 1;
                }
                map[b]
            })
            .collect();
        Assignment { bands, r: self.r }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityState {
    active: Vec<bool>,
    alpha: f64,
}

impl ActivityState {
    pub fn new(active: Vec<bool>, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid("alpha", format!("must lie in [0, 1], got {alpha}")));
        }
        Ok(ActivityState { active, alpha })
    }

    pub fn all_active(n: usize) -> Self {
        ActivityState {
            active: vec![true; n],
            alpha: 1.0,
        }
    }

    pub fn with_alpha(n: usize, alpha: f64) -> Result<Self> {
        Self::new(vec![true; n], alpha)
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    #[inline]
    pub fn is_active(&self, i: usize) -> bool {
        self.active[i]
    }

    pub fn flags(&self) -> &[bool] {
        &self.active
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn active_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.active.iter().enumerate().filter(|(_, &a)| a).map(|(i, _)| i)
    }

    pub(crate) fn set(&mut self, i: usize, on: bool) {
        self.active[i] = on;
    }
}

pub(crate) fn check_lengths(top: &Topology, asg: &Assignment, act: &ActivityState) -> Result<()> {
    if asg.len() != top.len() {
        return Err(Error::invalid(
            "assignment",
            format!("length {} does not match {} clusters", asg.len(), top.len()),
        ));
    }
    if act.len() != top.len() {
        return Err(Error::invalid(
            "activity",
            format!("length {} does not match {} clusters", act.len(), top.len()),
        ));
    }
    Ok(())
}

/// Interference `c_i` would see in band `k`: the sum of `P0 / d_ij^eta` over
/// active clusters `j != i` currently in band `k`.
pub fn band_interference(
    top: &Topology,
    asg: &Assignment,
    act: &ActivityState,
    i: usize,
    k: usize,
) -> f64 {
    top.gain_row(i)
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i && act.is_active(j) && asg.band(j) == k)
        .map(|(_, g)| g)
        .sum()
}

/// Interference experienced by `c_i` in its own band.
pub fn cluster_interference(top: &Topology, asg: &Assignment, act: &ActivityState, i: usize) -> f64 {
    band_interference(top, asg, act, i, asg.band(i))
}

/// Network aggregate: sum of `cluster_interference` over active receivers.
pub fn aggregate_interference(top: &Topology, asg: &Assignment, act: &ActivityState) -> f64 {
    act.active_indices()
        .map(|i| cluster_interference(top, asg, act, i))
        .sum()
}

/// Aggregate with every active cluster forced into one band.
pub fn worst_case_interference(top: &Topology, act: &ActivityState) -> f64 {
    let n = top.len();
    let asg = Assignment::uniform(n, 1).expect("single band is valid");
    aggregate_interference(top, &asg, act)
}

/// Per-cluster per-band interference table maintained incrementally.
///
/// `table[i][k]` is the interference `c_i` would see in band `k` from active
/// clusters other than itself. A band switch or an activity toggle touches
/// one column of every row, O(N). Entries whose band has no active emitter
/// left are reset to exactly zero so cancellation error cannot accumulate in
/// empty bands.
#[derive(Debug, Clone)]
pub struct InterferenceCache {
    n: usize,
    r: usize,
    table: Vec<f64>,
    emitters: Vec<u32>,
}

impl InterferenceCache {
    pub fn new(top: &Topology, asg: &Assignment, act: &ActivityState) -> Result<Self> {
        check_lengths(top, asg, act)?;
        let n = top.len();
        let r = asg.r();
        let mut cache = InterferenceCache {
            n,
            r,
            table: vec![0.0; n * r],
            emitters: vec![0; n * r],
        };
        for i in 0..n {
            let row = top.gain_row(i);
            for j in act.active_indices() {
                if j != i {
                    let k = asg.band(j) - 1;
                    cache.table[i * r + k] += row[j];
                    cache.emitters[i * r + k] += 1;
                }
            }
        }
        Ok(cache)
    }

    /// Interference `c_i` would see in band `k` (1-based).
    #[inline]
    pub fn band(&self, i: usize, k: usize) -> f64 {
        self.table[i * self.r + k - 1]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.table[i * self.r..(i + 1) * self.r]
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Aggregate interference, summed from the table in O(N).
    pub fn aggregate(&self, asg: &Assignment, act: &ActivityState) -> f64 {
        act.active_indices().map(|i| self.band(i, asg.band(i))).sum()
    }

    fn remove_emitter(&mut self, top: &Topology, j: usize, k: usize) {
        for (i, &g) in top.gain_row(j).iter().enumerate() {
            if i == j {
                continue;
            }
            let idx = i * self.r + k - 1;
            self.emitters[idx] -= 1;
            if self.emitters[idx] == 0 {
                self.table[idx] = 0.0;
            } else {
                self.table[idx] -= g;
            }
        }
    }

    fn add_emitter(&mut self, top: &Topology, j: usize, k: usize) {
        for (i, &g) in top.gain_row(j).iter().enumerate() {
            if i == j {
                continue;
            }
            let idx = i * self.r + k - 1;
            self.emitters[idx] += 1;
            self.table[idx] += g;
        }
    }

    /// Moves cluster `i` to band `new`, updating `asg` and the table.
    pub fn switch_band(
        &mut self,
        top: &Topology,
        asg: &mut Assignment,
        act: &ActivityState,
        i: usize,
        new: usize,
    ) {
        let old = asg.band(i);
        if old == new {
            return;
        }
        if act.is_active(i) {
            self.remove_emitter(top, i, old);
            self.add_emitter(top, i, new);
        }
        asg.set(i, new);
    }

    /// Turns cluster `i` on or off, updating `act` and the table.
    pub fn set_active(
        &mut self,
        top: &Topology,
        asg: &Assignment,
        act: &mut ActivityState,
        i: usize,
        on: bool,
    ) {
        if act.is_active(i) == on {
            return;
        }
        if on {
            self.add_emitter(top, i, asg.band(i));
        } else {
            self.remove_emitter(top, i, asg.band(i));
        }
        act.set(i, on);
    }
}
