//! Asynchronous best-band updates.
//!
//! One cluster at a time moves to the band where it sees the least
//! interference. Because the channel is reciprocal, each move changes the
//! network aggregate by exactly twice the change the mover sees, so the
//! aggregate is a potential that never increases.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interference::{check_lengths, ActivityState, Assignment, InterferenceCache};
use crate::topology::Topology;

/// A cluster only switches when the best band beats its current one by more
/// than this fraction of its total (all-band) interference.
pub const SWITCH_TOLERANCE: f64 = 1e-9;

/// RNG stream for update scheduling.
pub const SCHEDULE_STREAM: u64 = 0;
/// RNG stream for on/off activity.
pub const ACTIVITY_STREAM: u64 = 1;
/// RNG stream for random initial assignments.
pub const INITIAL_STREAM: u64 = 2;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialAssignment {
    /// Every cluster starts in band 1.
    #[default]
    AllFirst,
    UniformRandom,
}

pub fn initial_assignment(mode: InitialAssignment, n: usize, r: usize, seed: u64) -> Result<Assignment> {
    match mode {
        InitialAssignment::AllFirst => Assignment::uniform(n, r),
        InitialAssignment::UniformRandom => {
            let mut rng = stream_rng(seed, INITIAL_STREAM);
            Assignment::new((0..n).map(|_| rng.random_range(1..=r)).collect(), r)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub epoch: u64,
    pub time: f64,
    pub cluster: usize,
    pub old_band: usize,
    pub new_band: usize,
    pub aggregate_before: f64,
    pub aggregate_after: f64,
    /// `2 * (I_{i,new} - I_{i,old})` evaluated before the move.
    pub predicted_delta: f64,
}

impl UpdateRecord {
    pub fn switched(&self) -> bool {
        self.old_band != self.new_band
    }

    pub fn is_monotone(&self) -> bool {
        self.aggregate_after <= self.aggregate_before + 1e-9 * self.aggregate_before.max(1.0)
    }
}

/// One replica's mutable state.
#[derive(Debug, Clone)]
pub struct SimState<'a> {
    topology: &'a Topology,
    assignment: Assignment,
    activity: ActivityState,
    cache: InterferenceCache,
    epoch: u64,
    time: f64,
    rng: ChaCha8Rng,
}

impl<'a> SimState<'a> {
    pub fn new(
        topology: &'a Topology,
        assignment: Assignment,
        activity: ActivityState,
        seed: u64,
    ) -> Result<Self> {
        check_lengths(topology, &assignment, &activity)?;
        let cache = InterferenceCache::new(topology, &assignment, &activity)?;
        Ok(SimState {
            topology,
            assignment,
            activity,
            cache,
            epoch: 0,
            time: 0.0,
            rng: stream_rng(seed, SCHEDULE_STREAM),
        })
    }

    pub fn topology(&self) -> &'a Topology {
        self.topology
    }

    pub fn assignment(&self) -> &Assignment {
        &self.assignment
    }

    pub fn activity(&self) -> &ActivityState {
        &self.activity
    }

    pub fn cache(&self) -> &InterferenceCache {
        &self.cache
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn aggregate(&self) -> f64 {
        self.cache.aggregate(&self.assignment, &self.activity)
    }

    pub fn set_active(&mut self, i: usize, on: bool) {
        self.cache
            .set_active(self.topology, &self.assignment, &mut self.activity, i, on);
    }

    /// Band `c_i` would pick now. Ties within tolerance keep the current
    /// band; otherwise the lowest-indexed minimizer wins.
    pub fn best_band(&self, i: usize) -> Result<usize> {
        if !self.activity.is_active(i) {
            return Err(Error::invalid("cluster", format!("cluster {i} is inactive")));
        }
        let row = self.cache.row(i);
        let total: f64 = row.iter().sum();
        let tol = SWITCH_TOLERANCE * total;
        let min = row.iter().copied().fold(f64::INFINITY, f64::min);
        let current = self.assignment.band(i);
        if row[current - 1] <= min + tol {
            return Ok(current);
        }
        let k = row.iter().position(|&v| v <= min + tol).expect("minimum is attained");
        Ok(k + 1)
    }

    /// Performs the best-band update of cluster `i` and advances the epoch.
    pub fn apply_update(&mut self, i: usize) -> Result<UpdateRecord> {
        let new = self.best_band(i)?;
        let old = self.assignment.band(i);
        let before = self.aggregate();
        let predicted_delta = 2.0 * (self.cache.band(i, new) - self.cache.band(i, old));
        self.cache
            .switch_band(self.topology, &mut self.assignment, &self.activity, i, new);
        let after = if new == old { before } else { self.aggregate() };
        let record = UpdateRecord {
            epoch: self.epoch,
            time: self.time,
            cluster: i,
            old_band: old,
            new_band: new,
            aggregate_before: before,
            aggregate_after: after,
            predicted_delta,
        };
        self.epoch += 1;
        Ok(record)
    }

    /// True when no active cluster can strictly improve.
    pub fn is_stable(&self) -> bool {
        self.activity
            .active_indices()
            .all(|i| self.best_band(i) == Ok(self.assignment.band(i)))
    }

    pub fn into_parts(self) -> (Assignment, ActivityState) {
        (self.assignment, self.activity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchedulerKind {
    /// Rounds of a fresh uniform permutation of the active clusters, one
    /// update every `delta_t`.
    RandomPermutationRounds { delta_t: f64 },
    /// Network-wide Poisson clock with mean inter-event time `delta_t`; the
    /// updating cluster is uniform among the active ones.
    PoissonClock { delta_t: f64 },
}

impl SchedulerKind {
    pub fn delta_t(&self) -> f64 {
        match *self {
            SchedulerKind::RandomPermutationRounds { delta_t } => delta_t,
            SchedulerKind::PoissonClock { delta_t } => delta_t,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scheduler {
    kind: SchedulerKind,
    round: Vec<usize>,
    clock: Option<Exp<f64>>,
}

impl Scheduler {
    pub fn new(kind: SchedulerKind) -> Result<Self> {
        let delta_t = kind.delta_t();
        if !(delta_t > 0.0 && delta_t.is_finite()) {
            return Err(Error::invalid("delta_t", format!("must be positive, got {delta_t}")));
        }
        let clock = match kind {
            SchedulerKind::PoissonClock { delta_t } => {
                Some(Exp::new(1.0 / delta_t).map_err(|e| Error::invalid("delta_t", e.to_string()))?)
            }
            SchedulerKind::RandomPermutationRounds { .. } => None,
        };
        Ok(Scheduler {
            kind,
            round: Vec::new(),
            clock,
        })
    }

    pub fn kind(&self) -> SchedulerKind {
        self.kind
    }

    /// True when the permutation round in progress has been used up.
    pub fn round_finished(&self) -> bool {
        self.round.is_empty()
    }

    /// Time until the next tick: exponential with mean `delta_t` for the
    /// Poisson clock, exactly `delta_t` for permutation rounds.
    pub fn draw_interval<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.clock {
            Some(exp) => exp.sample(rng),
            None => self.kind.delta_t(),
        }
    }

    /// Uniformly random active cluster.
    pub fn draw_cluster<R: Rng + ?Sized>(&self, act: &ActivityState, rng: &mut R) -> Result<usize> {
        let count = act.active_count();
        if count == 0 {
            return Err(Error::NoActiveCluster);
        }
        let pick = rng.random_range(0..count);
        Ok(act.active_indices().nth(pick).expect("pick below active count"))
    }

    /// Next cluster to update and the time elapsed before it does.
    pub fn schedule_next<R: Rng + ?Sized>(
        &mut self,
        act: &ActivityState,
        rng: &mut R,
    ) -> Result<(usize, f64)> {
        let count = act.active_count();
        if count == 0 {
            return Err(Error::NoActiveCluster);
        }
        match self.kind {
            SchedulerKind::PoissonClock { .. } => {
                let dt = self.draw_interval(rng);
                Ok((self.draw_cluster(act, rng)?, dt))
            }
            SchedulerKind::RandomPermutationRounds { delta_t } => loop {
                if self.round.is_empty() {
                    self.round = act.active_indices().collect();
                    self.round.shuffle(rng);
                    // popped from the back
                    self.round.reverse();
                }
                let i = self.round.pop().expect("round is non-empty");
                if act.is_active(i) {
                    return Ok((i, delta_t));
                }
            },
        }
    }
}

/// Free-function form of [`Scheduler::schedule_next`].
pub fn schedule_next<R: Rng + ?Sized>(
    scheduler: &mut Scheduler,
    state: &SimState<'_>,
    rng: &mut R,
) -> Result<(usize, f64)> {
    scheduler.schedule_next(state.activity(), rng)
}

/// `10 * N^(eta + 2)`, saturating.
pub fn default_update_guard(n: usize, eta: f64) -> u64 {
    let g = 10.0 * (n as f64).powf(eta + 2.0);
    if g >= u64::MAX as f64 {
        u64::MAX
    } else {
        g.ceil() as u64
    }
}

#[derive(Debug, Clone)]
pub struct Convergence {
    pub trace: Vec<UpdateRecord>,
    pub updates: u64,
    pub switches: u64,
    pub aggregate: f64,
}

/// Runs updates until the assignment is a fixed point of the update rule.
///
/// Permutation rounds stop after a full round without a switch. The Poisson
/// clock stops at the first event after which no active cluster can strictly
/// improve (checked after every switch).
pub fn run_to_convergence(
    state: &mut SimState<'_>,
    scheduler: &mut Scheduler,
    max_updates: Option<u64>,
) -> Result<Convergence> {
    let guard =
        max_updates.unwrap_or_else(|| default_update_guard(state.topology.len(), state.topology.eta()));
    let mut trace = Vec::new();
    let mut switches = 0u64;
    if state.activity.active_count() == 0 {
        let aggregate = state.aggregate();
        return Ok(Convergence { trace, updates: 0, switches, aggregate });
    }
    let poisson = matches!(scheduler.kind(), SchedulerKind::PoissonClock { .. });
    if poisson && state.is_stable() {
        let aggregate = state.aggregate();
        return Ok(Convergence { trace, updates: 0, switches, aggregate });
    }
    let mut round_switches = 0u64;
    loop {
        if trace.len() as u64 >= guard {
            return Err(Error::NonConvergence {
                updates: trace.len() as u64,
                guard,
            });
        }
        let i = state.next_event(scheduler)?;
        let record = state.apply_update(i)?;
        let switched = record.switched();
        trace.push(record);
        if switched {
            switches += 1;
            round_switches += 1;
        }
        let done = if poisson {
            switched && state.is_stable()
        } else if scheduler.round_finished() {
            let quiet = round_switches == 0;
            round_switches = 0;
            quiet
        } else {
            false
        };
        if done {
            break;
        }
    }
    let updates = trace.len() as u64;
    let aggregate = state.aggregate();
    Ok(Convergence { trace, updates, switches, aggregate })
}

impl SimState<'_> {
    /// Draws the next updating cluster from the state's own generator and
    /// advances the clock.
    pub fn next_event(&mut self, scheduler: &mut Scheduler) -> Result<usize> {
        let (i, dt) = scheduler.schedule_next(&self.activity, &mut self.rng)?;
        self.time += dt;
        Ok(i)
    }

    /// Clock tick only; returns the new time.
    pub fn tick(&mut self, scheduler: &Scheduler) -> f64 {
        self.time += scheduler.draw_interval(&mut self.rng);
        self.time
    }

    pub fn pick_cluster(&mut self, scheduler: &Scheduler) -> Result<usize> {
        scheduler.draw_cluster(&self.activity, &mut self.rng)
    }
}
