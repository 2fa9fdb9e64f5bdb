//! The lamp-and-walker ("diamond") chain over a base graph: each step moves
//! the walker by the lazy rule and re-randomizes the lamps at the step's two
//! endpoints.
//!
//! Three exact routes into the chain live here side by side:
//!
//! * the dense diamond kernel over all `2^{|G|} * |G|` states (tiny bases);
//! * the covered-set dynamic program over `(visited set, position)` pairs,
//!   which yields `E[2^{|U(t)|}]` and lamp-marginal probabilities without
//!   touching lamp states;
//! * Monte Carlo sampling of both the chain itself and the walk-then-mark
//!   shortcut.
//!
//! The identity connecting the first two — lamp-marginal density ratios
//! equal covered-set moments — is checked bit-exactly by `identity_check`.

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bitset::DenseBitSet;
use crate::error::{Error, Result};
use crate::graph::{GraphSpec, VertexId};
use crate::mc::DenseWalker;
use crate::rng::replica_rng;
use crate::spectral::mixing_time_scan;
use crate::stats::MeanEstimate;

/// Hard cap on base size for the dense diamond kernel.
pub const DIAMOND_VERTEX_CAP: u32 = 16;
/// Default cap on diamond states for matrix mode (memory bound).
pub const DEFAULT_DIAMOND_STATE_CAP: usize = 4096;
/// Cap on base size for the covered-set dynamic program.
pub const DP_VERTEX_CAP: u32 = 20;

/// Full state of the diamond chain: a lamp configuration and the walker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiamondState {
    pub lamps: DenseBitSet,
    pub position: VertexId,
}

impl DiamondState {
    /// All lamps off, walker at `position`.
    pub fn dark(g: &GraphSpec, position: VertexId) -> Self {
        Self {
            lamps: DenseBitSet::new(g.vertex_count() as usize),
            position,
        }
    }
}

/// One step of the diamond chain: draw `y` by the lazy rule at the walker,
/// re-randomize the lamps at the old and new positions (one fair bit when
/// they coincide), move the walker. Lamps elsewhere are untouched.
pub fn diamond_step(g: &GraphSpec, state: &mut DiamondState, rng: &mut ChaCha8Rng) -> Result<()> {
    let x = state.position;
    let y = if rng.random::<bool>() {
        x
    } else {
        let nbrs = g.neighbors(x)?;
        nbrs[rng.random_range(0..nbrs.len())]
    };
    if rng.random::<bool>() {
        state.lamps.insert(x as usize);
    } else {
        state.lamps.remove(x as usize);
    }
    if y != x {
        if rng.random::<bool>() {
            state.lamps.insert(y as usize);
        } else {
            state.lamps.remove(y as usize);
        }
    }
    state.position = y;
    Ok(())
}

/// Dense transition matrix of the diamond chain with its product stationary
/// law. State `(f, x)` has index `f * |G| + x`.
#[derive(Debug, Clone)]
pub struct DiamondKernel {
    graph: GraphSpec,
    matrix: DMatrix<f64>,
    pi: DVector<f64>,
    lamp_count: usize,
}

/// Builds the exact diamond kernel; capacity-checked against
/// `2^{|G|} |G| <= state_cap`.
pub fn build_diamond_kernel(g: &GraphSpec, state_cap: usize) -> Result<DiamondKernel> {
    let n = g.vertex_count();
    if n > DIAMOND_VERTEX_CAP as u64 {
        return Err(Error::capacity(
            "diamond base vertices",
            n as u128,
            DIAMOND_VERTEX_CAP as u128,
        ));
    }
    let n = n as usize;
    let states = (1u128 << n) * n as u128;
    if states > state_cap as u128 {
        return Err(Error::capacity("diamond states", states, state_cap as u128));
    }
    let states = states as usize;
    let mut matrix = DMatrix::zeros(states, states);
    for f in 0..(1usize << n) {
        for x in 0..n {
            let from = f * n + x;
            for (y, p) in g.lazy_step_distribution(x as u64)? {
                let y = y as usize;
                if y == x {
                    // Only the lamp at x refreshes: two outcomes at p/2.
                    for bx in 0..2usize {
                        let g2 = (f & !(1 << x)) | (bx << x);
                        matrix[(from, g2 * n + x)] += p / 2.0;
                    }
                } else {
                    // Lamps at x and y refresh independently: four outcomes at p/4.
                    for bx in 0..2usize {
                        for by in 0..2usize {
                            let g2 = (f & !(1 << x) & !(1 << y)) | (bx << x) | (by << y);
                            matrix[(from, g2 * n + y)] += p / 4.0;
                        }
                    }
                }
            }
        }
    }
    // pi((f, x)) = pi_base(x) 2^{-|G|}
    let total_degree: f64 = (0..n).map(|v| g.degree(v as u64).unwrap() as f64).sum();
    let scale = 1.0 / (1u64 << n) as f64;
    let mut pi = DVector::zeros(states);
    for f in 0..(1usize << n) {
        for x in 0..n {
            pi[f * n + x] = g.degree(x as u64).unwrap() as f64 / total_degree * scale;
        }
    }
    Ok(DiamondKernel {
        graph: g.clone(),
        matrix,
        pi,
        lamp_count: n,
    })
}

impl DiamondKernel {
    pub fn states(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn lamp_count(&self) -> usize {
        self.lamp_count
    }

    pub fn graph(&self) -> &GraphSpec {
        &self.graph
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn pi(&self) -> &DVector<f64> {
        &self.pi
    }

    pub fn index(&self, lamps: u64, position: VertexId) -> usize {
        lamps as usize * self.lamp_count + position as usize
    }

    /// Max over states of `|(pi P)(s) - pi(s)|`.
    pub fn stationarity_defect(&self) -> f64 {
        let prod = self.pi.transpose() * &self.matrix;
        (0..self.states())
            .map(|s| (prod[s] - self.pi[s]).abs())
            .fold(0.0, f64::max)
    }

    /// Max over state pairs of `|pi(a) P(a,b) - pi(b) P(b,a)|`.
    pub fn detailed_balance_defect(&self) -> f64 {
        let m = self.states();
        let mut worst: f64 = 0.0;
        for a in 0..m {
            for b in 0..m {
                worst = worst.max(
                    (self.pi[a] * self.matrix[(a, b)] - self.pi[b] * self.matrix[(b, a)]).abs(),
                );
            }
        }
        worst
    }
}

/// Exact epsilon-uniform mixing time of the diamond chain.
///
/// The diamond chain of a vertex-transitive base is itself vertex transitive
/// (base automorphisms act on positions, lamp XOR translations act on
/// configurations), so a single start state suffices.
pub fn diamond_uniform_mixing_exact(dk: &DiamondKernel, eps: f64, cap: u64) -> Result<u64> {
    let single = dk.graph.is_transitive().then_some(0);
    mixing_time_scan(&dk.matrix, &dk.pi, eps, single, false, cap)
}

/// Uniform ratio distance of the diamond chain at each `t` in `0..=t_max`,
/// from the all-lamps-off start at vertex 0.
pub fn diamond_uniform_distance_curve(dk: &DiamondKernel, t_max: u64) -> Vec<f64> {
    let m = dk.states();
    let mut row = RowDVector::zeros(m);
    row[0] = 1.0;
    let mut out = Vec::with_capacity(t_max as usize + 1);
    for _ in 0..=t_max {
        let mut worst: f64 = 0.0;
        for s in 0..m {
            worst = worst.max((row[s] - dk.pi[s]).abs() / dk.pi[s]);
        }
        out.push(worst);
        row *= &dk.matrix;
    }
    out
}

/// The covered-set dynamic program: exact law of `(visited set, position)`
/// under the lazy walk from a fixed start.
#[derive(Debug, Clone)]
pub struct CoverDp {
    n: usize,
    /// `prob[c * n + x] = P[C(t) = c, X(t) = x]`.
    prob: Vec<f64>,
    steps: Vec<Vec<(usize, f64)>>,
    pub t: u64,
}

impl CoverDp {
    pub fn new(g: &GraphSpec, start: VertexId) -> Result<Self> {
        let n = g.vertex_count();
        if n > DP_VERTEX_CAP as u64 {
            return Err(Error::capacity(
                "covered-set DP vertices",
                n as u128,
                DP_VERTEX_CAP as u128,
            ));
        }
        let n = n as usize;
        if start as usize >= n {
            return Err(Error::invalid("start", "start vertex out of range"));
        }
        let steps = (0..n)
            .map(|x| {
                Ok(g.lazy_step_distribution(x as u64)?
                    .into_iter()
                    .map(|(y, p)| (y as usize, p))
                    .collect())
            })
            .collect::<Result<Vec<_>>>()?;
        let mut prob = vec![0.0; (1usize << n) * n];
        prob[(1usize << start) * n + start as usize] = 1.0;
        Ok(Self {
            n,
            prob,
            steps,
            t: 0,
        })
    }

    /// Advances the law by one lazy step; the covered set gains the new
    /// position.
    pub fn step(&mut self) {
        let n = self.n;
        let mut next = vec![0.0; self.prob.len()];
        for c in 0..(1usize << n) {
            let base = c * n;
            for x in 0..n {
                let p = self.prob[base + x];
                if p == 0.0 {
                    continue;
                }
                for &(y, q) in &self.steps[x] {
                    next[(c | (1 << y)) * n + y] += p * q;
                }
            }
        }
        self.prob = next;
        self.t += 1;
    }

    /// `E[2^{|U(t)|}]` under the current law.
    pub fn exp_moment(&self) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for c in 0..(1usize << n) {
            let weight = (1u64 << (n - c.count_ones() as usize)) as f64;
            let mass: f64 = self.prob[c * n..(c + 1) * n].iter().sum();
            acc += weight * mass;
        }
        acc
    }

    /// `E[2^{|U(t)|} 1{W subseteq C(t)}]` for the mismatch set `W`.
    pub fn exp_moment_restricted(&self, w: usize) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for c in 0..(1usize << n) {
            if c & w != w {
                continue;
            }
            let weight = (1u64 << (n - c.count_ones() as usize)) as f64;
            let mass: f64 = self.prob[c * n..(c + 1) * n].iter().sum();
            acc += weight * mass;
        }
        acc
    }

    /// `P[|U(t)| = 0]`.
    pub fn all_covered_probability(&self) -> f64 {
        let full = (1usize << self.n) - 1;
        self.prob[full * self.n..(full + 1) * self.n].iter().sum()
    }
}

/// A grid of `E[2^{|U(t)|}]` values, exact (DP) or estimated (MC).
#[derive(Debug, Clone)]
pub struct ProxyCurve {
    pub times: Vec<u64>,
    pub values: Vec<f64>,
    /// Per-point standard errors; `None` for the exact curve.
    pub stderr: Option<Vec<f64>>,
    /// Per-point flag: the sample maximum contributed over half the mean.
    pub heavy_tail: Option<Vec<bool>>,
}

impl ProxyCurve {
    pub fn is_exact(&self) -> bool {
        self.stderr.is_none()
    }
}

/// Exact `E_x[2^{|U(t)|}]` on a sorted time grid via the covered-set DP.
pub fn exp_moment_exact(g: &GraphSpec, start: VertexId, t_grid: &[u64]) -> Result<ProxyCurve> {
    if t_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("t_grid", "must be strictly increasing"));
    }
    let mut dp = CoverDp::new(g, start)?;
    let mut values = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        while dp.t < t {
            dp.step();
        }
        values.push(dp.exp_moment());
    }
    Ok(ProxyCurve {
        times: t_grid.to_vec(),
        values,
        stderr: None,
        heavy_tail: None,
    })
}

/// Monte Carlo `E_x[2^{|U(t)|}]` on a time grid.
///
/// The sample mean is reported untrimmed; points where one replica carries
/// more than half the total get the heavy-tail flag instead of any
/// correction.
pub fn exp_moment_mc(
    g: &GraphSpec,
    start: VertexId,
    t_grid: &[u64],
    replicas: u64,
    seed: u64,
    level: f64,
) -> Result<ProxyCurve> {
    if t_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("t_grid", "must be strictly increasing"));
    }
    if replicas < 2 {
        return Err(Error::invalid("replicas", "need at least two replicas"));
    }
    let n = g.vertex_count();
    let walker = DenseWalker::build(g)?;
    let t_max = t_grid.last().copied().unwrap_or(0);
    let per_replica: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map(|replica| {
            let mut rng = replica_rng(seed, replica);
            let mut visited = DenseBitSet::new(n as usize);
            let mut pos = start as u32;
            visited.insert(pos as usize);
            let mut out = Vec::with_capacity(t_grid.len());
            let mut gi = 0;
            for t in 0..=t_max {
                if t > 0 {
                    pos = walker.step(pos, &mut rng).0;
                    visited.insert(pos as usize);
                }
                while gi < t_grid.len() && t_grid[gi] == t {
                    let uncovered = n as usize - visited.len();
                    out.push((uncovered as f64).exp2());
                    gi += 1;
                }
            }
            out
        })
        .collect();
    let mut values = Vec::with_capacity(t_grid.len());
    let mut stderr = Vec::with_capacity(t_grid.len());
    let mut heavy = Vec::with_capacity(t_grid.len());
    for gi in 0..t_grid.len() {
        let samples: Vec<f64> = per_replica.iter().map(|r| r[gi]).collect();
        let est = MeanEstimate::from_samples(&samples, level);
        values.push(est.mean);
        stderr.push(est.stderr);
        heavy.push(est.heavy_tail_flag());
    }
    Ok(ProxyCurve {
        times: t_grid.to_vec(),
        values,
        stderr: Some(stderr),
        heavy_tail: Some(heavy),
    })
}

/// Outcome of the proxy-crossing search: either the least grid time at which
/// the curve sits at or below `1 + eps`, or an honest refusal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProxyCrossing {
    Determined(u64),
    /// The crossing lies strictly inside `(lower, upper)`; the grid cannot
    /// pin it down and interpolation is out of contract.
    Undetermined {
        lower: u64,
        upper: u64,
    },
    /// The curve never reaches the threshold on this grid.
    NoCrossing,
}

/// Least grid time with curve value at or below `1 + eps`.
///
/// Exact curves are determined only when the bracketing grid points are
/// adjacent integers (or the curve already meets the threshold at `t = 0`).
/// MC curves use the conservative two-standard-error rule: the crossing
/// point must satisfy `value + 2 stderr <= 1 + eps` and its predecessor
/// `value - 2 stderr > 1 + eps`.
pub fn proxy_mixing_time(curve: &ProxyCurve, eps: f64) -> ProxyCrossing {
    let thresh = 1.0 + eps;
    match &curve.stderr {
        None => {
            for (i, (&t, &v)) in curve.times.iter().zip(&curve.values).enumerate() {
                if v <= thresh {
                    if i == 0 {
                        return if t == 0 {
                            ProxyCrossing::Determined(0)
                        } else {
                            ProxyCrossing::Undetermined { lower: 0, upper: t }
                        };
                    }
                    let prev = curve.times[i - 1];
                    return if prev + 1 == t {
                        ProxyCrossing::Determined(t)
                    } else {
                        ProxyCrossing::Undetermined {
                            lower: prev,
                            upper: t,
                        }
                    };
                }
            }
            ProxyCrossing::NoCrossing
        }
        Some(se) => {
            for i in 0..curve.times.len() {
                if curve.values[i] + 2.0 * se[i] <= thresh {
                    if i == 0 {
                        return if curve.times[0] == 0 {
                            ProxyCrossing::Determined(0)
                        } else {
                            ProxyCrossing::Undetermined {
                                lower: 0,
                                upper: curve.times[0],
                            }
                        };
                    }
                    return if curve.values[i - 1] - 2.0 * se[i - 1] > thresh {
                        ProxyCrossing::Determined(curve.times[i])
                    } else {
                        ProxyCrossing::Undetermined {
                            lower: curve.times[i - 1],
                            upper: curve.times[i],
                        }
                    };
                }
            }
            ProxyCrossing::NoCrossing
        }
    }
}

/// Result of the exact two-route identity check.
#[derive(Debug, Clone, Copy)]
pub struct IdentityCheck {
    /// `P[(lamps at t) = target] / 2^{-|G|}` from the diamond kernel.
    pub lhs: f64,
    /// `E[2^{|U(t)|} 1{W subseteq C(t)}]` from the covered-set DP.
    pub rhs: f64,
    pub gap: f64,
}

/// Checks, by two independent exact routes, that the lamp-marginal density
/// ratio equals the covered-set moment restricted to covering the mismatch
/// set `W = {v : f0(v) != target(v)}`.
///
/// Requires `t >= 1`: only after the first step has the start lamp been
/// refreshed, which is what makes every covered lamp an independent fair bit.
pub fn identity_check(
    dk: &DiamondKernel,
    f0: u64,
    x0: VertexId,
    target: u64,
    t: u64,
) -> Result<IdentityCheck> {
    if t < 1 {
        return Err(Error::invalid("t", "identity holds for t >= 1"));
    }
    let n = dk.lamp_count;
    // Route 1: iterate the exact diamond row and marginalize the position.
    let mut row = RowDVector::zeros(dk.states());
    row[dk.index(f0, x0)] = 1.0;
    for _ in 0..t {
        row *= &dk.matrix;
    }
    let marginal: f64 = (0..n).map(|x| row[target as usize * n + x]).sum();
    let lhs = marginal * (1u64 << n) as f64;
    // Route 2: covered-set DP restricted to covering the mismatch set.
    let w = (f0 ^ target) as usize;
    let mut dp = CoverDp::new(&dk.graph, x0)?;
    for _ in 0..t {
        dp.step();
    }
    let rhs = dp.exp_moment_restricted(w);
    Ok(IdentityCheck {
        lhs,
        rhs,
        gap: (lhs - rhs).abs(),
    })
}

/// Output of the walk-then-mark sampler.
#[derive(Debug, Clone)]
pub struct LampMarking {
    pub covered: DenseBitSet,
    pub marking: DenseBitSet,
    pub position: VertexId,
}

/// Samples the lamp configuration at time `t` the indirect way: run the walk,
/// then mark every covered vertex with an independent fair bit. Uncovered
/// lamps keep their initial value.
pub fn sample_lamp_marking(
    g: &GraphSpec,
    walker: &DenseWalker,
    initial: &DenseBitSet,
    start: VertexId,
    t: u64,
    rng: &mut ChaCha8Rng,
) -> LampMarking {
    let n = g.vertex_count() as usize;
    let mut covered = DenseBitSet::new(n);
    let mut pos = start as u32;
    covered.insert(pos as usize);
    for _ in 0..t {
        pos = walker.step(pos, rng).0;
        covered.insert(pos as usize);
    }
    let mut marking = initial.clone();
    for v in covered.iter() {
        if rng.random::<bool>() {
            marking.insert(v);
        } else {
            marking.remove(v);
        }
    }
    LampMarking {
        covered,
        marking,
        position: pos as VertexId,
    }
}
