//! Seeded, parallel Monte Carlo simulation of the lazy walk: trajectories,
//! coverage processes, local times (lazy and non-lazy), excursion statistics,
//! hitting probes, and Green's-function estimates.
//!
//! Replicas are embarrassingly parallel and individually reproducible: the
//! trajectory of replica `i` depends only on `(seed, i)`, never on the thread
//! that ran it, and aggregations reduce in fixed replica order. Coverage uses
//! a bit-packed visited set with O(1) updates per step.

mod walker;

pub use walker::{DenseWalker, TorusPos, TorusWalker};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bitset::DenseBitSet;
use crate::error::{Error, Result};
use crate::graph::{GraphSpec, VertexId};
use crate::rng::replica_rng;
use crate::spectral::SpectralReport;
use crate::stats::{quantile, MeanEstimate, ProbEstimate};

/// Default confidence level for intervals.
pub const DEFAULT_LEVEL: f64 = 0.95;

/// Initial-state convention for a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartSpec {
    /// Start at a fixed vertex.
    Fixed(VertexId),
    /// Draw the start from the stationary law (degree-biased; uniform on
    /// regular graphs).
    Stationary,
}

/// A reproducible simulation request.
#[derive(Debug, Clone)]
pub struct SimPlan {
    pub graph: GraphSpec,
    pub start: StartSpec,
    pub t_max: u64,
    pub replicas: u64,
    pub seed: u64,
    /// Sorted measurement times within `[0, t_max]`.
    pub checkpoints: Vec<u64>,
}

impl SimPlan {
    pub fn new(graph: GraphSpec, start: StartSpec, t_max: u64, replicas: u64, seed: u64) -> Self {
        Self {
            graph,
            start,
            t_max,
            replicas,
            seed,
            checkpoints: vec![t_max],
        }
    }

    pub fn with_checkpoints(mut self, checkpoints: Vec<u64>) -> Self {
        self.checkpoints = checkpoints;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicas < 1 {
            return Err(Error::invalid("replicas", "need at least one replica"));
        }
        if self.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(
                "checkpoint_times",
                "must be strictly increasing",
            ));
        }
        if let Some(&last) = self.checkpoints.last() {
            if last > self.t_max {
                return Err(Error::invalid(
                    "checkpoint_times",
                    "checkpoints must lie in [0, t_max]",
                ));
            }
        }
        if let StartSpec::Fixed(v) = self.start {
            if v >= self.graph.vertex_count() {
                return Err(Error::invalid("start", format!("vertex {v} out of range")));
            }
        }
        Ok(())
    }
}

fn draw_start(graph: &GraphSpec, start: StartSpec, rng: &mut ChaCha8Rng) -> VertexId {
    match start {
        StartSpec::Fixed(v) => v,
        StartSpec::Stationary => {
            if graph.uniform_degree().is_some() {
                rng.random_range(0..graph.vertex_count())
            } else {
                // Degree-biased draw for irregular explicit graphs.
                let n = graph.vertex_count();
                let total: u64 = (0..n).map(|v| graph.degree(v).unwrap() as u64).sum();
                let mut target = rng.random_range(0..total);
                for v in 0..n {
                    let d = graph.degree(v).unwrap() as u64;
                    if target < d {
                        return v;
                    }
                    target -= d;
                }
                n - 1
            }
        }
    }
}

/// Stationary mass of a vertex set under the lazy walk.
pub fn stationary_mass(graph: &GraphSpec, members: &[VertexId]) -> f64 {
    match graph.uniform_degree() {
        Some(_) => members.len() as f64 / graph.vertex_count() as f64,
        None => {
            let total: u64 = (0..graph.vertex_count())
                .map(|v| graph.degree(v).unwrap() as u64)
                .sum();
            let mass: u64 = members
                .iter()
                .map(|&v| graph.degree(v).unwrap() as u64)
                .sum();
            mass as f64 / total as f64
        }
    }
}

/// Runs one replica of the lazy walk, feeding every position to `visit` as
/// `(t, position, moved)`; `moved` is false at `t = 0` and on hold steps.
///
/// Trajectories are a pure function of `(plan.seed, replica)`.
pub fn simulate_walk<F: FnMut(u64, VertexId, bool)>(
    plan: &SimPlan,
    walker: &DenseWalker,
    replica: u64,
    mut visit: F,
) {
    let mut rng = replica_rng(plan.seed, replica);
    let mut pos = draw_start(&plan.graph, plan.start, &mut rng) as u32;
    visit(0, pos as VertexId, false);
    for t in 1..=plan.t_max {
        let (next, moved) = walker.step(pos, &mut rng);
        pos = next;
        visit(t, pos as VertexId, moved);
    }
}

/// Collects one replica's full trajectory.
pub fn trajectory(plan: &SimPlan, walker: &DenseWalker, replica: u64) -> Vec<VertexId> {
    let mut out = Vec::with_capacity(plan.t_max as usize + 1);
    simulate_walk(plan, walker, replica, |_, v, _| out.push(v));
    out
}

/// Aggregated uncovered-set trajectory.
#[derive(Debug, Clone)]
pub struct CoverageSample {
    pub checkpoints: Vec<u64>,
    pub mean_uncovered: Vec<f64>,
    pub q10: Vec<f64>,
    pub q50: Vec<f64>,
    pub q90: Vec<f64>,
    /// Raw `|U(t)|` per checkpoint (outer) and replica (inner).
    pub raw_uncovered: Vec<Vec<u32>>,
    /// Supplied thresholds `s_i`.
    pub thresholds: Vec<u64>,
    /// `threshold_times[i][r]`: first `t` with `|U(t)| <= s_i` in replica
    /// `r`, `None` if not reached by `t_max`.
    pub threshold_times: Vec<Vec<Option<u64>>>,
    pub replicas: u64,
    pub seed: u64,
}

impl CoverageSample {
    /// Empirical `P[|U(t)| > s]` at checkpoint index `ci`.
    pub fn uncovered_exceeds(&self, ci: usize, s: u64, level: f64) -> ProbEstimate {
        let raw = &self.raw_uncovered[ci];
        let successes = raw.iter().filter(|&&u| u as u64 > s).count() as u64;
        ProbEstimate::new(successes, raw.len() as u64, level)
    }
}

/// Simulates the coverage process and aggregates `|U(t)|` statistics over
/// replicas; `thresholds` additionally records per-replica first passage
/// times of `|U(t)|` below each value.
pub fn coverage_trajectory(plan: &SimPlan, thresholds: &[u64]) -> Result<CoverageSample> {
    plan.validate()?;
    let n = plan.graph.vertex_count();
    let walker = DenseWalker::build(&plan.graph)?;
    let results: Vec<(Vec<u32>, Vec<Option<u64>>)> = (0..plan.replicas)
        .into_par_iter()
        .map(|replica| {
            let mut visited = DenseBitSet::new(n as usize);
            let mut at_checkpoint = Vec::with_capacity(plan.checkpoints.len());
            let mut hit_times = vec![None; thresholds.len()];
            let mut ci = 0;
            simulate_walk(plan, &walker, replica, |t, v, _| {
                visited.insert(v as usize);
                let uncovered = (n as usize - visited.len()) as u64;
                for (i, &s) in thresholds.iter().enumerate() {
                    if hit_times[i].is_none() && uncovered <= s {
                        hit_times[i] = Some(t);
                    }
                }
                while ci < plan.checkpoints.len() && plan.checkpoints[ci] == t {
                    at_checkpoint.push(uncovered as u32);
                    ci += 1;
                }
            });
            (at_checkpoint, hit_times)
        })
        .collect();

    let ckpts = plan.checkpoints.len();
    let mut raw_uncovered = vec![Vec::with_capacity(results.len()); ckpts];
    for (counts, _) in &results {
        for (ci, &u) in counts.iter().enumerate() {
            raw_uncovered[ci].push(u);
        }
    }
    let mut mean_uncovered = Vec::with_capacity(ckpts);
    let (mut q10, mut q50, mut q90) = (Vec::new(), Vec::new(), Vec::new());
    for raw in &raw_uncovered {
        let mut sorted: Vec<f64> = raw.iter().map(|&u| u as f64).collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        mean_uncovered.push(sorted.iter().sum::<f64>() / sorted.len() as f64);
        q10.push(quantile(&sorted, 0.10));
        q50.push(quantile(&sorted, 0.50));
        q90.push(quantile(&sorted, 0.90));
    }
    let mut threshold_times = vec![Vec::with_capacity(results.len()); thresholds.len()];
    for (_, hits) in &results {
        for (i, &t) in hits.iter().enumerate() {
            threshold_times[i].push(t);
        }
    }
    Ok(CoverageSample {
        checkpoints: plan.checkpoints.clone(),
        mean_uncovered,
        q10,
        q50,
        q90,
        raw_uncovered,
        thresholds: thresholds.to_vec(),
        threshold_times,
        replicas: plan.replicas,
        seed: plan.seed,
    })
}

/// Per-replica local-time record for a fixed vertex set.
#[derive(Debug, Clone)]
pub struct LocalTimeRecord {
    /// Lazy local time: steps `0..=t` spent in the set.
    pub lazy_total: u64,
    /// Non-lazy local time: move-steps in `1..=t` landing in the set.
    pub nonlazy_total: u64,
    /// Distinct set members visited by time `t`.
    pub distinct: u64,
    /// Total move-steps in `1..=t` (the hold-step complement).
    pub moves: u64,
    /// Non-lazy visit counts per set member (indexed like `members`).
    pub nonlazy_visits: Vec<u32>,
}

impl LocalTimeRecord {
    /// Total non-lazy time at members visited more than `k` times.
    pub fn heavy_visit_total(&self, k: u32) -> u64 {
        self.nonlazy_visits
            .iter()
            .filter(|&&c| c > k)
            .map(|&c| c as u64)
            .sum()
    }
}

/// Local-time records for a set `S`, measured at several horizons.
#[derive(Debug, Clone)]
pub struct LocalTimeStudy {
    /// Sorted member list of `S`.
    pub members: Vec<VertexId>,
    pub times: Vec<u64>,
    /// `records[ti][replica]`.
    pub records: Vec<Vec<LocalTimeRecord>>,
    pub pi_s: f64,
}

/// Simulates local times of `S` for every horizon in `times` in one pass per
/// replica.
pub fn local_time_study(
    plan: &SimPlan,
    members: &[VertexId],
    times: &[u64],
) -> Result<LocalTimeStudy> {
    let mut plan = plan.clone();
    let horizon = times.iter().max().copied().unwrap_or(0);
    plan.t_max = plan.t_max.max(horizon);
    plan.checkpoints = vec![plan.t_max];
    plan.validate()?;
    if members.is_empty() {
        return Err(Error::invalid("S", "set must be nonempty"));
    }
    let n = plan.graph.vertex_count() as usize;
    let mut sorted = members.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let in_set = DenseBitSet::from_iter(n, sorted.iter().map(|&v| v as usize));
    let mut index_of = vec![u32::MAX; n];
    for (i, &v) in sorted.iter().enumerate() {
        index_of[v as usize] = i as u32;
    }
    let walker = DenseWalker::build(&plan.graph)?;
    let records: Vec<Vec<LocalTimeRecord>> = (0..plan.replicas)
        .into_par_iter()
        .map(|replica| {
            let mut lazy = 0u64;
            let mut nonlazy = 0u64;
            let mut moves = 0u64;
            let mut visits = vec![0u32; sorted.len()];
            let mut seen = DenseBitSet::new(sorted.len());
            let mut out = Vec::with_capacity(times.len());
            let mut ti = 0;
            simulate_walk(&plan, &walker, replica, |t, v, moved| {
                let member = in_set.contains(v as usize);
                if member {
                    lazy += 1;
                    let idx = index_of[v as usize] as usize;
                    seen.insert(idx);
                    if moved {
                        nonlazy += 1;
                        visits[idx] += 1;
                    }
                }
                moves += moved as u64;
                while ti < times.len() && times[ti] == t {
                    out.push(LocalTimeRecord {
                        lazy_total: lazy,
                        nonlazy_total: nonlazy,
                        distinct: seen.len() as u64,
                        moves,
                        nonlazy_visits: visits.clone(),
                    });
                    ti += 1;
                }
            });
            out
        })
        .collect();
    // transpose to records[ti][replica]
    let mut by_time = vec![Vec::with_capacity(records.len()); times.len()];
    for per_replica in records {
        for (ti, rec) in per_replica.into_iter().enumerate() {
            by_time[ti].push(rec);
        }
    }
    Ok(LocalTimeStudy {
        pi_s: stationary_mass(&plan.graph, &sorted),
        members: sorted,
        times: times.to_vec(),
        records: by_time,
    })
}

/// One tail estimate `P[L_S(t) <= t pi(S)/2]` next to its analytic bound.
#[derive(Debug, Clone)]
pub struct LocalTimeTail {
    pub t: u64,
    pub pi_s: f64,
    pub threshold: f64,
    pub estimate: ProbEstimate,
    /// `exp(-c0 t pi(S) / t_rel)`.
    pub analytic_rhs: f64,
}

/// Estimates the lower-tail probability of the local time from stationarity
/// at each horizon, side by side with `exp(-c0 t pi(S)/t_rel)`.
///
/// Requires a stationary start and `lambda0 >= 1/2` (the regime where the
/// analytic bound applies).
pub fn local_time_tail(
    plan: &SimPlan,
    members: &[VertexId],
    times: &[u64],
    spectral: &SpectralReport,
    c0: f64,
    level: f64,
) -> Result<Vec<LocalTimeTail>> {
    if plan.start != StartSpec::Stationary {
        return Err(Error::invalid(
            "start",
            "local_time_tail requires a stationary start",
        ));
    }
    if spectral.lambda0 < 0.5 {
        return Err(Error::invalid(
            "lambda0",
            format!(
                "bound comparison needs lambda0 >= 1/2, got {}",
                spectral.lambda0
            ),
        ));
    }
    let study = local_time_study(plan, members, times)?;
    if study.pi_s <= 0.0 || study.pi_s >= 1.0 + 1e-12 {
        return Err(Error::invalid("S", "need 0 < pi(S)"));
    }
    Ok(study
        .times
        .iter()
        .enumerate()
        .map(|(ti, &t)| {
            let threshold = t as f64 * study.pi_s / 2.0;
            let successes = study.records[ti]
                .iter()
                .filter(|r| (r.lazy_total as f64) <= threshold)
                .count() as u64;
            LocalTimeTail {
                t,
                pi_s: study.pi_s,
                threshold,
                estimate: ProbEstimate::new(successes, plan.replicas, level),
                analytic_rhs: (-c0 * t as f64 * study.pi_s / spectral.t_rel).exp(),
            }
        })
        .collect())
}

/// Distinct-coverage statistics of a set: per-replica `C_S(t)` counts and the
/// empirical probability of staying at or below a threshold.
#[derive(Debug, Clone)]
pub struct DistinctCoverage {
    pub t: u64,
    pub counts: Vec<u64>,
    pub mean: f64,
}

impl DistinctCoverage {
    pub fn prob_at_most(&self, threshold: f64, level: f64) -> ProbEstimate {
        let successes = self
            .counts
            .iter()
            .filter(|&&c| c as f64 <= threshold)
            .count() as u64;
        ProbEstimate::new(successes, self.counts.len() as u64, level)
    }
}

pub fn distinct_coverage(plan: &SimPlan, members: &[VertexId], t: u64) -> Result<DistinctCoverage> {
    let study = local_time_study(plan, members, &[t])?;
    let counts: Vec<u64> = study.records[0].iter().map(|r| r.distinct).collect();
    let mean = counts.iter().sum::<u64>() as f64 / counts.len() as f64;
    Ok(DistinctCoverage { t, counts, mean })
}

/// Result of the small-set hitting probe.
#[derive(Debug, Clone)]
pub struct HittingProbe {
    /// Time window `floor(|G| / |S|)`.
    pub window: u64,
    pub estimate: ProbEstimate,
    /// `rho0 / G*(s)` when the caller supplied both.
    pub analytic_lhs: Option<f64>,
    /// Whether `t_u <= |G| / (2|S|)` held (the regime the floor applies in).
    pub hypothesis_ok: Option<bool>,
}

/// Estimates `P[tau_S <= |G|/|S|]` and reports it against `rho0/G*(|S|)`.
pub fn hitting_probe(
    plan: &SimPlan,
    members: &[VertexId],
    t_u: Option<u64>,
    rho0_over_gstar: Option<f64>,
    level: f64,
) -> Result<HittingProbe> {
    plan.validate()?;
    if members.is_empty() {
        return Err(Error::invalid("S", "set must be nonempty"));
    }
    let n = plan.graph.vertex_count();
    let s = members.len() as u64;
    let window = n / s;
    let in_set = DenseBitSet::from_iter(n as usize, members.iter().map(|&v| v as usize));
    let walker = DenseWalker::build(&plan.graph)?;
    let hits: u64 = (0..plan.replicas)
        .into_par_iter()
        .map(|replica| {
            let mut rng = replica_rng(plan.seed, replica);
            let mut pos = draw_start(&plan.graph, plan.start, &mut rng) as u32;
            if in_set.contains(pos as usize) {
                return 1u64;
            }
            for _ in 1..=window {
                pos = walker.step(pos, &mut rng).0;
                if in_set.contains(pos as usize) {
                    return 1;
                }
            }
            0
        })
        .sum();
    Ok(HittingProbe {
        window,
        estimate: ProbEstimate::new(hits, plan.replicas, level),
        analytic_lhs: rho0_over_gstar,
        hypothesis_ok: t_u.map(|tu| tu <= n / (2 * s)),
    })
}

/// One race from L1 distance `k`: did the walk reach the origin before
/// radius `2k`, and how long did the race take.
#[derive(Debug, Clone, Copy)]
pub struct EscapeTrial {
    pub hit_zero: bool,
    pub duration: u64,
}

/// One excursion through the radii `2k -> 4k -> 2k`.
#[derive(Debug, Clone, Copy)]
pub struct ExcursionCycle {
    /// Whether the origin was hit on the outward `2k -> 4k` leg.
    pub hit_zero: bool,
    pub out_duration: u64,
    pub back_duration: u64,
}

/// Excursion statistics on a torus at radius parameter `k`.
#[derive(Debug, Clone)]
pub struct ExcursionSample {
    pub k: u32,
    pub n: u32,
    pub d: u32,
    /// Races from distance `k`.
    pub escape: Vec<EscapeTrial>,
    /// `P[tau_0 < tau_{2k}]` from distance `k`.
    pub escape_estimate: ProbEstimate,
    /// Return times to radius `k` from distance `2k`; `None` once `step_cap`
    /// is exceeded (the finite surrogate for "no return").
    pub return_times: Vec<Option<u64>>,
    pub step_cap: u64,
    pub cycles: Vec<ExcursionCycle>,
}

impl ExcursionSample {
    /// Empirical `P[tau_k > threshold]` from distance `2k` (censored trials
    /// count as exceeding).
    pub fn return_exceeds(&self, threshold: u64, level: f64) -> ProbEstimate {
        let successes = self
            .return_times
            .iter()
            .filter(|t| t.is_none_or(|t| t > threshold))
            .count() as u64;
        ProbEstimate::new(successes, self.return_times.len() as u64, level)
    }

    /// Fraction of trials with no return within the step cap. A large-torus
    /// surrogate for the infinite-lattice no-return probability, reported
    /// only as such.
    pub fn no_return_surrogate(&self, level: f64) -> ProbEstimate {
        let successes = self.return_times.iter().filter(|t| t.is_none()).count() as u64;
        ProbEstimate::new(successes, self.return_times.len() as u64, level)
    }
}

/// Configuration for [`excursion_stats`].
#[derive(Debug, Clone, Copy)]
pub struct ExcursionConfig {
    pub k: u32,
    pub trials: u64,
    /// Cap on steps per return trial; defaults to `10 d n^2` when zero.
    pub step_cap: u64,
    pub cycles: u64,
    pub seed: u64,
    /// Start distance override for the escape races (defaults to `k`).
    pub start_distance: Option<u64>,
    pub level: f64,
}

/// Simulates radius races and excursions of the lazy walk on a torus.
///
/// Requires `d >= 8k` so that the radii `k < 2k < 4k` sit well inside the
/// regime where each move changes the radius by one.
pub fn excursion_stats(g: &GraphSpec, cfg: &ExcursionConfig) -> Result<ExcursionSample> {
    let (n, d) = g
        .torus_dims()
        .ok_or_else(|| Error::Unsupported("excursion_stats requires a torus".into()))?;
    if cfg.k < 1 {
        return Err(Error::invalid("k", "need k >= 1"));
    }
    if d < 8 * cfg.k {
        return Err(Error::invalid(
            "d",
            format!("excursions need d >= 8k (d = {d}, k = {})", cfg.k),
        ));
    }
    let walker = TorusWalker { n, d };
    let k = cfg.k as u64;
    let step_cap = if cfg.step_cap == 0 {
        10 * d as u64 * (n as u64 * n as u64)
    } else {
        cfg.step_cap
    };
    // check the start is representable
    walker.at_distance(4 * k)?;

    let start_escape = cfg.start_distance.unwrap_or(k);
    let escape: Vec<EscapeTrial> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = replica_rng(cfg.seed, trial);
            let mut pos = walker.at_distance(start_escape).unwrap();
            let mut t = 0u64;
            loop {
                if pos.l1 == 0 {
                    return EscapeTrial {
                        hit_zero: true,
                        duration: t,
                    };
                }
                if pos.l1 >= 2 * k {
                    return EscapeTrial {
                        hit_zero: false,
                        duration: t,
                    };
                }
                walker.step(&mut pos, &mut rng);
                t += 1;
            }
        })
        .collect();
    let hits = escape.iter().filter(|e| e.hit_zero).count() as u64;
    let escape_estimate = ProbEstimate::new(hits, cfg.trials.max(1), cfg.level);

    // Return races from distance 2k down to k, censored at the step cap.
    let return_times: Vec<Option<u64>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = replica_rng(cfg.seed ^ 0x9e3779b97f4a7c15, trial);
            let mut pos = walker.at_distance(2 * k).unwrap();
            for t in 1..=step_cap {
                walker.step(&mut pos, &mut rng);
                if pos.l1 <= k {
                    return Some(t);
                }
            }
            None
        })
        .collect();

    // Alternating 2k -> 4k -> 2k decomposition of one long run.
    let mut cycles = Vec::with_capacity(cfg.cycles as usize);
    let mut rng = replica_rng(cfg.seed ^ 0x517cc1b727220a95, 0);
    let mut pos = walker.at_distance(2 * k).unwrap();
    while (cycles.len() as u64) < cfg.cycles {
        let mut hit_zero = false;
        let mut out_duration = 0u64;
        while pos.l1 < 4 * k {
            walker.step(&mut pos, &mut rng);
            out_duration += 1;
            if pos.l1 == 0 {
                hit_zero = true;
            }
        }
        let mut back_duration = 0u64;
        while pos.l1 > 2 * k {
            walker.step(&mut pos, &mut rng);
            back_duration += 1;
        }
        cycles.push(ExcursionCycle {
            hit_zero,
            out_duration,
            back_duration,
        });
    }

    Ok(ExcursionSample {
        k: cfg.k,
        n,
        d,
        escape,
        escape_estimate,
        return_times,
        step_cap,
        cycles,
    })
}

/// Monte Carlo Green's-function estimate: mean time spent at `y` during
/// `[0, t_u]` starting from `x`, with standard error.
pub fn green_mc(
    g: &GraphSpec,
    x: VertexId,
    y: VertexId,
    t_u: u64,
    replicas: u64,
    seed: u64,
    level: f64,
) -> Result<MeanEstimate> {
    if let Some((n, d)) = g.torus_dims() {
        // Translate so the target is the origin and walk in coordinate space.
        let walker = TorusWalker { n, d };
        let cx = g.decode(x)?;
        let cy = g.decode(y)?;
        let rel: Vec<u32> = cx.iter().zip(&cy).map(|(&a, &b)| (a + n - b) % n).collect();
        let counts: Vec<f64> = (0..replicas)
            .into_par_iter()
            .map(|replica| {
                let mut rng = replica_rng(seed, replica);
                let mut pos = walker.position(rel.clone());
                let mut count = (pos.nonzero == 0) as u64;
                for _ in 1..=t_u {
                    walker.step(&mut pos, &mut rng);
                    count += (pos.nonzero == 0) as u64;
                }
                count as f64
            })
            .collect();
        Ok(MeanEstimate::from_samples(&counts, level))
    } else {
        let walker = DenseWalker::build(g)?;
        let plan = SimPlan::new(g.clone(), StartSpec::Fixed(x), t_u, replicas, seed);
        plan.validate()?;
        let counts: Vec<f64> = (0..replicas)
            .into_par_iter()
            .map(|replica| {
                let mut count = 0u64;
                simulate_walk(&plan, &walker, replica, |_, v, _| {
                    count += (v == y) as u64;
                });
                count as f64
            })
            .collect();
        Ok(MeanEstimate::from_samples(&counts, level))
    }
}

/// Surrogate uniform-mixing horizon for tori too large for dense kernels:
/// `ceil(d * max(ln d, 1) * n^2)`, the scaling the dense oracle confirms on
/// small instances.
pub fn uniform_mixing_surrogate_torus(n: u32, d: u32) -> u64 {
    let dd = d as f64;
    (dd * (dd.ln().max(1.0)) * (n as f64 * n as f64)).ceil() as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{default_eps, greens_table, spectrum, uniform_mixing_time, DenseKernel};

    fn plan_fixed(g: GraphSpec, t_max: u64, replicas: u64, seed: u64) -> SimPlan {
        SimPlan::new(g, StartSpec::Fixed(0), t_max, replicas, seed)
    }

    #[test]
    fn hold_fraction_is_half() {
        let g = GraphSpec::complete(2).unwrap();
        let plan = plan_fixed(g.clone(), 1_000_000, 1, 42);
        let walker = DenseWalker::build(&g).unwrap();
        let mut holds = 0u64;
        let mut last = 0u64;
        simulate_walk(&plan, &walker, 0, |t, v, _| {
            if t > 0 {
                holds += (v == last) as u64;
            }
            last = v;
        });
        let frac = holds as f64 / 1_000_000.0;
        assert!((frac - 0.5).abs() < 0.002, "hold fraction {frac}");
    }

    #[test]
    fn occupation_frequencies_match_stationary() {
        let g = GraphSpec::cycle(4).unwrap();
        let plan = plan_fixed(g.clone(), 400_000, 1, 7);
        let walker = DenseWalker::build(&g).unwrap();
        let mut counts = [0u64; 4];
        simulate_walk(&plan, &walker, 0, |_, v, _| counts[v as usize] += 1);
        for c in counts {
            let f = c as f64 / 400_001.0;
            assert!((f - 0.25).abs() < 0.01, "occupation {f}");
        }
    }

    #[test]
    fn replay_is_deterministic() {
        let g = GraphSpec::torus(4, 2).unwrap();
        let plan = plan_fixed(g, 500, 3, 99);
        let walker = DenseWalker::build(&plan.graph).unwrap();
        let a: Vec<_> = (0..3).map(|r| trajectory(&plan, &walker, r)).collect();
        let b: Vec<_> = (0..3).map(|r| trajectory(&plan, &walker, r)).collect();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1], "replicas should differ");
    }

    #[test]
    fn determinism_across_thread_counts() {
        let g = GraphSpec::cycle(16).unwrap();
        let plan = plan_fixed(g, 200, 64, 5).with_checkpoints(vec![0, 50, 200]);
        let pool1 = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let a = pool1.install(|| coverage_trajectory(&plan, &[8, 0]).unwrap());
        let b = pool4.install(|| coverage_trajectory(&plan, &[8, 0]).unwrap());
        assert_eq!(a.raw_uncovered, b.raw_uncovered);
        assert_eq!(a.threshold_times, b.threshold_times);
        assert_eq!(a.mean_uncovered, b.mean_uncovered);
    }

    #[test]
    fn coverage_starts_at_size_minus_one_and_decreases() {
        let g = GraphSpec::cycle(8).unwrap();
        let plan = plan_fixed(g, 300, 40, 11).with_checkpoints(vec![0, 10, 50, 300]);
        let sample = coverage_trajectory(&plan, &[]).unwrap();
        for &u in &sample.raw_uncovered[0] {
            assert_eq!(u, 7);
        }
        // monotone per replica across checkpoints
        for r in 0..40 {
            for ci in 1..sample.checkpoints.len() {
                assert!(sample.raw_uncovered[ci][r] <= sample.raw_uncovered[ci - 1][r]);
            }
        }
        // eventually covered
        assert!(sample.mean_uncovered.last().unwrap() < &0.5);
    }

    #[test]
    fn coverage_one_step_mean_on_cycle3() {
        // One lazy step from a fixed start: holds with 1/2 (|U| stays 2),
        // moves with 1/2 (|U| drops to 1); mean 1.5.
        let g = GraphSpec::cycle(3).unwrap();
        let plan = plan_fixed(g, 1, 40_000, 13).with_checkpoints(vec![1]);
        let sample = coverage_trajectory(&plan, &[]).unwrap();
        let mean = sample.mean_uncovered[0];
        let se = (0.25f64 / 40_000.0).sqrt(); // var of {1,2} coin flip is 1/4
        assert!((mean - 1.5).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn local_time_partition_identity() {
        // L_S(t) + L_{S^c}(t) = t + 1 per replica.
        let g = GraphSpec::cycle(8).unwrap();
        let t = 123;
        let plan = plan_fixed(g, t, 32, 17);
        let s: Vec<u64> = vec![0, 1, 2, 3];
        let sc: Vec<u64> = vec![4, 5, 6, 7];
        let a = local_time_study(&plan, &s, &[t]).unwrap();
        let b = local_time_study(&plan, &sc, &[t]).unwrap();
        for (ra, rb) in a.records[0].iter().zip(&b.records[0]) {
            assert_eq!(ra.lazy_total + rb.lazy_total, t + 1);
            assert_eq!(ra.moves, rb.moves);
            assert_eq!(ra.nonlazy_total + rb.nonlazy_total, ra.moves);
            // per-record ordering invariants
            for r in [ra, rb] {
                assert!(r.nonlazy_total <= r.lazy_total);
                assert!(r.lazy_total <= t + 1);
                assert!(r.distinct <= 4.min(r.lazy_total));
                assert_eq!(
                    r.nonlazy_visits.iter().map(|&c| c as u64).sum::<u64>(),
                    r.nonlazy_total
                );
            }
        }
    }

    #[test]
    fn stationary_occupation_matches_pi() {
        let g = GraphSpec::torus(3, 2).unwrap();
        let t = 200u64;
        let plan = SimPlan::new(g, StartSpec::Stationary, t, 4000, 23);
        let s: Vec<u64> = vec![0, 1, 4];
        let study = local_time_study(&plan, &s, &[t]).unwrap();
        // At stationarity E[L_S(t)] = (t+1) pi(S) exactly.
        let samples: Vec<f64> = study.records[0]
            .iter()
            .map(|r| r.lazy_total as f64)
            .collect();
        let est = MeanEstimate::from_samples(&samples, 0.95);
        let expect = (t + 1) as f64 * study.pi_s;
        assert!(
            (est.mean - expect).abs() < 3.0 * est.stderr,
            "mean {} vs {expect}",
            est.mean
        );
    }

    #[test]
    fn nonlazy_local_time_is_half_of_lazy_in_mean() {
        let g = GraphSpec::cycle(6).unwrap();
        let t = 300u64;
        let plan = SimPlan::new(g, StartSpec::Stationary, t, 4000, 29);
        let s: Vec<u64> = vec![0, 1, 2];
        let study = local_time_study(&plan, &s, &[t]).unwrap();
        let nl: Vec<f64> = study.records[0]
            .iter()
            .map(|r| r.nonlazy_total as f64)
            .collect();
        let est = MeanEstimate::from_samples(&nl, 0.95);
        // E[L^Y_S(t)] = t pi(S) / 2 at stationarity.
        let expect = t as f64 * study.pi_s / 2.0;
        assert!(
            (est.mean - expect).abs() < 3.0 * est.stderr,
            "mean {} vs {expect}",
            est.mean
        );
    }

    #[test]
    fn nonlazy_equals_moves_on_full_set() {
        let g = GraphSpec::cycle(5).unwrap();
        let t = 77;
        let plan = plan_fixed(g, t, 16, 31);
        let all: Vec<u64> = (0..5).collect();
        let study = local_time_study(&plan, &all, &[t]).unwrap();
        for r in &study.records[0] {
            assert_eq!(r.nonlazy_total, r.moves);
            assert_eq!(r.lazy_total, t + 1);
        }
    }

    #[test]
    fn local_time_tail_runs_against_bound() {
        let g = GraphSpec::cycle(16).unwrap();
        let kernel = DenseKernel::build(&g).unwrap();
        let rep = spectrum(&kernel).unwrap();
        let plan = SimPlan::new(g, StartSpec::Stationary, 128, 4000, 37);
        let s: Vec<u64> = (0..8).collect();
        let tails = local_time_tail(&plan, &s, &[64, 128], &rep, 1.0 / 50.0, 0.95).unwrap();
        for tail in &tails {
            assert!(tail.estimate.p_hat - 2.0 * tail.estimate.stderr <= tail.analytic_rhs);
        }
    }

    #[test]
    fn local_time_tail_requires_stationary_start() {
        let g = GraphSpec::cycle(16).unwrap();
        let rep = spectrum(&DenseKernel::build(&g).unwrap()).unwrap();
        let plan = plan_fixed(g, 64, 10, 1);
        assert!(local_time_tail(&plan, &[0, 1], &[64], &rep, 0.02, 0.95).is_err());
    }

    #[test]
    fn distinct_coverage_edges() {
        let g = GraphSpec::cycle(8).unwrap();
        // t = 0 from a start inside S: C_S = 1.
        let plan = plan_fixed(g.clone(), 0, 20, 41);
        let dc = distinct_coverage(&plan, &[0, 1], 0).unwrap();
        assert!(dc.counts.iter().all(|&c| c == 1));
        // singleton S: C_S in {0, 1} and P[C_S = 1] = P[tau_S <= t].
        let plan = plan_fixed(g.clone(), 30, 400, 43);
        let dc = distinct_coverage(&plan, &[4], 30).unwrap();
        assert!(dc.counts.iter().all(|&c| c <= 1));
        // S = V, large t: C_S -> |G|.
        let plan = plan_fixed(g, 2000, 50, 47);
        let all: Vec<u64> = (0..8).collect();
        let dc = distinct_coverage(&plan, &all, 2000).unwrap();
        assert!(dc.mean > 7.9);
    }

    #[test]
    fn hitting_probe_full_set_is_certain() {
        let g = GraphSpec::cycle(6).unwrap();
        let plan = SimPlan::new(g, StartSpec::Stationary, 10, 200, 53);
        let all: Vec<u64> = (0..6).collect();
        let probe = hitting_probe(&plan, &all, Some(3), None, 0.95).unwrap();
        assert_eq!(probe.window, 1);
        assert_eq!(probe.estimate.p_hat, 1.0);
        assert_eq!(probe.hypothesis_ok, Some(false));
    }

    #[test]
    fn green_mc_matches_exact_on_cycle6() {
        let g = GraphSpec::cycle(6).unwrap();
        let kernel = DenseKernel::build(&g).unwrap();
        let t_u = uniform_mixing_time(&kernel, default_eps()).unwrap();
        let table = greens_table(&kernel, t_u).unwrap();
        let est = green_mc(&g, 0, 1, t_u, 40_000, 61, 0.95).unwrap();
        assert!(
            (est.mean - table.row()[1]).abs() < 3.0 * est.stderr,
            "mc {} exact {}",
            est.mean,
            table.row()[1]
        );
        // x = y with t_u = 0: exactly one visit, zero variance.
        let est = green_mc(&g, 2, 2, 0, 100, 67, 0.95).unwrap();
        assert_eq!(est.mean, 1.0);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn excursion_degenerate_and_preconditions() {
        let g = GraphSpec::torus(5, 8).unwrap();
        let cfg = ExcursionConfig {
            k: 1,
            trials: 50,
            step_cap: 1000,
            cycles: 3,
            seed: 71,
            start_distance: Some(0),
            level: 0.95,
        };
        let sample = excursion_stats(&g, &cfg).unwrap();
        // start at distance zero: tau_0 = 0 < tau_2k always
        assert_eq!(sample.escape_estimate.p_hat, 1.0);
        assert!(sample.escape.iter().all(|e| e.hit_zero && e.duration == 0));
        for c in &sample.cycles {
            assert!(c.out_duration > 0 && c.back_duration > 0);
        }
        // d < 8k rejected
        let bad = ExcursionConfig { k: 2, ..cfg };
        assert!(excursion_stats(&g, &bad).is_err());
    }

    #[test]
    fn excursion_escape_probability_is_positive_but_small() {
        let g = GraphSpec::torus(5, 8).unwrap();
        let cfg = ExcursionConfig {
            k: 1,
            trials: 4000,
            step_cap: 0,
            cycles: 0,
            seed: 73,
            start_distance: None,
            level: 0.95,
        };
        let sample = excursion_stats(&g, &cfg).unwrap();
        // From distance 1 the first move hits 0 with probability 1/(2d) = 1/16,
        // so the race probability is strictly positive but bounded away from 1.
        assert!(sample.escape_estimate.p_hat > 0.02);
        assert!(sample.escape_estimate.p_hat < 0.5);
    }

    #[test]
    fn escape_probability_scales_inversely_with_degree() {
        // From distance 1 the race to {0} vs radius 2 is decided by the
        // first move: exactly one of the 2d directions hits the origin, so
        // d * P[tau_0 < tau_2] = 1/2 exactly.
        for d in [8u32, 10, 12, 14] {
            let g = GraphSpec::torus(5, d).unwrap();
            let cfg = ExcursionConfig {
                k: 1,
                trials: 100_000,
                step_cap: 0,
                cycles: 0,
                seed: 79 + d as u64,
                start_distance: None,
                level: 0.95,
            };
            let sample = excursion_stats(&g, &cfg).unwrap();
            let scaled = d as f64 * sample.escape_estimate.p_hat;
            let slack = 3.0 * d as f64 * sample.escape_estimate.stderr;
            assert!(
                (scaled - 0.5).abs() <= slack,
                "d={d}: d * escape = {scaled} (slack {slack})"
            );
        }
    }

    #[test]
    fn return_time_tail_and_no_return_surrogate() {
        // From distance 2k the return to radius k takes a long time with
        // positive probability; the censored fraction is the large-torus
        // surrogate for never returning.
        let g = GraphSpec::torus(5, 8).unwrap();
        let cfg = ExcursionConfig {
            k: 1,
            trials: 3000,
            step_cap: 0, // defaults to 10 d n^2 = 2000
            cycles: 0,
            seed: 83,
            start_distance: None,
            level: 0.95,
        };
        let sample = excursion_stats(&g, &cfg).unwrap();
        assert_eq!(sample.step_cap, 2000);
        let c_k = 0.05;
        let threshold = (c_k * 8.0 * 25.0) as u64;
        let tail = sample.return_exceeds(threshold, 0.95);
        assert!(
            tail.p_hat > 0.1,
            "tail beyond {threshold} too small: {}",
            tail.p_hat
        );
        let surrogate = sample.no_return_surrogate(0.95);
        assert!(surrogate.p_hat > 0.0 && surrogate.p_hat < 1.0);
    }

    #[test]
    fn hitting_probe_calibrated_floor_transfers_to_fresh_sets() {
        // Calibrate rho0 as the observed minimum of P_hat * G*(s) over 20
        // seeded size-5 set draws on torus(5,3), then check 10 fresh draws
        // stay above rho0/G*(s) within Monte Carlo slack.
        let g = GraphSpec::torus(5, 3).unwrap();
        let kernel = DenseKernel::build(&g).unwrap();
        let t_u = uniform_mixing_time(&kernel, default_eps()).unwrap();
        let table = greens_table(&kernel, t_u).unwrap();
        let gstar5 = table.g_star(5).unwrap();
        let n = g.vertex_count();
        let draw_set = |seed: u64| -> Vec<u64> {
            let mut rng = replica_rng(seed, 0);
            let mut set = Vec::new();
            while set.len() < 5 {
                let v = rng.random_range(0..n);
                if !set.contains(&v) {
                    set.push(v);
                }
            }
            set
        };
        let probe = |set: &[u64], seed: u64| {
            let plan = SimPlan::new(g.clone(), StartSpec::Fixed(0), n, 2000, seed);
            hitting_probe(&plan, set, Some(t_u), Some(1.0 / gstar5), 0.95).unwrap()
        };
        let mut rho0 = f64::INFINITY;
        for i in 0..20u64 {
            let p = probe(&draw_set(1000 + i), 2000 + i);
            rho0 = rho0.min(p.estimate.p_hat * gstar5);
        }
        assert!(rho0 > 0.0, "calibrated rho0 must be positive");
        for i in 0..10u64 {
            let p = probe(&draw_set(5000 + i), 6000 + i);
            assert!(
                p.estimate.p_hat >= rho0 / gstar5 - 3.0 * p.estimate.stderr,
                "fresh draw {i}: {} below floor {}",
                p.estimate.p_hat,
                rho0 / gstar5
            );
        }
    }

    #[test]
    fn plan_validation() {
        let g = GraphSpec::cycle(4).unwrap();
        let mut plan = plan_fixed(g, 10, 1, 0);
        plan.checkpoints = vec![3, 3];
        assert!(plan.validate().is_err());
        plan.checkpoints = vec![3, 11];
        assert!(plan.validate().is_err());
        plan.checkpoints = vec![3, 10];
        assert!(plan.validate().is_ok());
        plan.start = StartSpec::Fixed(4);
        assert!(plan.validate().is_err());
    }
}
