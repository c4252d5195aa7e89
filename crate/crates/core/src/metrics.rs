//! Link-level figures of merit derived from the interference state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interference::{check_lengths, cluster_interference, ActivityState, Assignment};
use crate::topology::Topology;

/// Intra-cluster signal and receiver noise powers for the capacity formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub signal_power: f64,
    pub noise_power: f64,
}

impl LinkParams {
    /// Signal at the 1 m reference power, noise a tenth of it.
    pub fn for_p0(p0: f64) -> Self {
        LinkParams {
            signal_power: p0,
            noise_power: 0.1 * p0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.signal_power > 0.0 && self.signal_power.is_finite()) {
            return Err(Error::invalid("signal_power", format!("must be positive, got {}", self.signal_power)));
        }
        if !(self.noise_power > 0.0 && self.noise_power.is_finite()) {
            return Err(Error::invalid("noise_power", format!("must be positive, got {}", self.noise_power)));
        }
        Ok(())
    }
}

impl Default for LinkParams {
    fn default() -> Self {
        Self::for_p0(1.0)
    }
}

/// `log2(1 + S / (N0 + I))` in bits/s/Hz.
pub fn capacity(link: &LinkParams, interference: f64) -> f64 {
    (1.0 + link.signal_power / (link.noise_power + interference)).log2()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterCapacities {
    /// `None` for inactive clusters.
    pub per_cluster: Vec<Option<f64>>,
    /// Mean over active clusters (0 when none is active).
    pub normalized: f64,
}

pub fn shannon_capacity(
    top: &Topology,
    asg: &Assignment,
    act: &ActivityState,
    link: &LinkParams,
) -> Result<ClusterCapacities> {
    check_lengths(top, asg, act)?;
    link.validate()?;
    let per_cluster: Vec<Option<f64>> = (0..top.len())
        .map(|i| act.is_active(i).then(|| capacity(link, cluster_interference(top, asg, act, i))))
        .collect();
    let active = act.active_count();
    let total: f64 = per_cluster.iter().flatten().sum();
    let normalized = if active > 0 { total / active as f64 } else { 0.0 };
    Ok(ClusterCapacities {
        per_cluster,
        normalized,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    pub per_cluster: Vec<Option<f64>>,
    pub normalized_aggregate: f64,
    pub reference_normalized: f64,
    /// `None` when the reference capacity is zero.
    pub achieved_fraction: Option<f64>,
    pub link: LinkParams,
}

pub fn capacity_comparison(
    top: &Topology,
    act: &ActivityState,
    algo: &Assignment,
    reference: &Assignment,
    link: &LinkParams,
) -> Result<CapacityReport> {
    let ours = shannon_capacity(top, algo, act, link)?;
    let theirs = shannon_capacity(top, reference, act, link)?;
    Ok(CapacityReport {
        achieved_fraction: (theirs.normalized > 0.0).then(|| ours.normalized / theirs.normalized),
        per_cluster: ours.per_cluster,
        normalized_aggregate: ours.normalized,
        reference_normalized: theirs.normalized,
        link: *link,
    })
}

/// `10 log10(i_a / i_ref)`.
pub fn db_gap(i_a: f64, i_ref: f64) -> Result<f64> {
    if !(i_a > 0.0 && i_ref > 0.0) {
        return Err(Error::Domain(format!("dB gap of {i_a} over {i_ref}")));
    }
    Ok(10.0 * (i_a / i_ref).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::make_uniform_linear_array;
    use proptest::prelude::*;

    #[test]
    fn isolated_cluster_has_unit_capacity() {
        let link = LinkParams { signal_power: 1.0, noise_power: 1.0 };
        assert_eq!(capacity(&link, 0.0), 1.0);
        assert!(capacity(&link, 0.3) < 1.0);
    }

    #[test]
    fn ula3_capacity_example() {
        let t = make_uniform_linear_array(3, 1.0).unwrap();
        let a = Assignment::new(vec![1, 1, 2], 2).unwrap();
        let link = LinkParams { signal_power: 1.0, noise_power: 0.1 };
        let caps = shannon_capacity(&t, &a, &ActivityState::all_active(3), &link).unwrap();
        let c0 = caps.per_cluster[0].unwrap();
        assert!((c0 - (1.0f64 + 1.0 / 1.1).log2()).abs() < 1e-12);
        assert!((c0 - 0.9329).abs() < 1e-4);
    }

    #[test]
    fn inactive_clusters_are_excluded() {
        let t = make_uniform_linear_array(3, 1.0).unwrap();
        let a = Assignment::new(vec![1, 1, 1], 1).unwrap();
        let act = ActivityState::new(vec![true, false, false], 1.0).unwrap();
        let caps = shannon_capacity(&t, &a, &act, &LinkParams::default()).unwrap();
        assert_eq!(caps.per_cluster[1], None);
        assert!((caps.normalized - 11f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn comparison_against_itself() {
        let t = make_uniform_linear_array(6, 1.0).unwrap();
        let a = Assignment::new(vec![1, 2, 1, 1, 2, 2], 2).unwrap();
        let act = ActivityState::all_active(6);
        let rep = capacity_comparison(&t, &act, &a, &a, &LinkParams::default()).unwrap();
        assert_eq!(rep.achieved_fraction, Some(1.0));
    }

    #[test]
    fn db_gap_values() {
        assert_eq!(db_gap(3.0, 3.0).unwrap(), 0.0);
        assert!((db_gap(2.0, 1.0).unwrap() - 3.010_299_956_639_812).abs() < 1e-12);
        assert!(db_gap(0.0, 1.0).is_err());
        assert!(db_gap(1.0, -1.0).is_err());
    }

    #[test]
    fn link_validation() {
        let t = make_uniform_linear_array(2, 1.0).unwrap();
        let a = Assignment::uniform(2, 1).unwrap();
        let bad = LinkParams { signal_power: 1.0, noise_power: 0.0 };
        assert!(shannon_capacity(&t, &a, &ActivityState::all_active(2), &bad).is_err());
    }

    proptest! {
        #[test]
        fn capacity_strictly_decreases_with_interference(i in 0.0f64..100.0, extra in 1e-6f64..10.0) {
            let link = LinkParams::default();
            prop_assert!(capacity(&link, i + extra) < capacity(&link, i));
        }

        #[test]
        fn normalized_capacity_ignores_indexing(bands in proptest::collection::vec(1usize..=3, 2..10), shift in 0usize..10) {
            // mirror the array: the cluster order reverses, the geometry does not change
            let n = bands.len();
            let t = make_uniform_linear_array(n, 1.0).unwrap();
            let a = Assignment::new(bands.clone(), 3).unwrap();
            let mut rev = bands;
            rev.reverse();
            let b = Assignment::new(rev, 3).unwrap();
            let act = ActivityState::all_active(n);
            let link = LinkParams { signal_power: 1.0, noise_power: 0.05 + shift as f64 * 0.01 };
            let x = shannon_capacity(&t, &a, &act, &link).unwrap().normalized;
            let y = shannon_capacity(&t, &b, &act, &link).unwrap().normalized;
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}
