//! Exact dense-matrix oracles for the lazy walk: transition kernel, spectrum,
//! relaxation/mixing/hitting times, Green's function, and the top-set sum G*.
//!
//! Everything here is limited to graphs whose kernel fits densely in memory
//! (default 4096 states). The uniform mixing time is computed by repeated
//! squaring for `|G| <= 1024` and by per-start power iteration above that;
//! on vertex-transitive graphs a single start suffices because every row of
//! `P^t` realizes the same distance profile.

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{Error, Result};
use crate::graph::GraphSpec;

/// Default cap on dense kernel size.
pub const DEFAULT_DENSE_LIMIT: usize = 4096;
/// Squaring is preferred to stepwise powers below this size.
pub const SQUARING_LIMIT: usize = 1024;
/// Step cap before a mixing-time search reports divergence.
pub const DEFAULT_STEP_CAP: u64 = 1_000_000;
/// Default epsilon for mixing times.
pub fn default_eps() -> f64 {
    0.5 / std::f64::consts::E
}

/// A row-stochastic lazy transition matrix together with its stationary law.
#[derive(Debug, Clone)]
pub struct DenseKernel {
    graph: GraphSpec,
    matrix: DMatrix<f64>,
    pi: DVector<f64>,
}

impl DenseKernel {
    /// Builds the lazy kernel of `g`, capped at [`DEFAULT_DENSE_LIMIT`] states.
    pub fn build(g: &GraphSpec) -> Result<Self> {
        Self::build_with_limit(g, DEFAULT_DENSE_LIMIT)
    }

    pub fn build_with_limit(g: &GraphSpec, dense_limit: usize) -> Result<Self> {
        let n = g.vertex_count();
        if n > dense_limit as u64 {
            return Err(Error::capacity(
                "dense kernel",
                n as u128,
                dense_limit as u128,
            ));
        }
        let n = n as usize;
        let mut matrix = DMatrix::zeros(n, n);
        let mut degree_total = 0.0;
        let mut degrees = vec![0.0; n];
        for v in 0..n {
            for (u, p) in g.lazy_step_distribution(v as u64)? {
                matrix[(v, u as usize)] += p;
            }
            let deg = g.degree(v as u64)? as f64;
            degrees[v] = deg;
            degree_total += deg;
        }
        // Lazy walk stationary law is degree-proportional (uniform when regular).
        let pi = DVector::from_iterator(n, degrees.iter().map(|&d| d / degree_total));
        Ok(Self {
            graph: g.clone(),
            matrix,
            pi,
        })
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn pi(&self) -> &DVector<f64> {
        &self.pi
    }

    pub fn graph(&self) -> &GraphSpec {
        &self.graph
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.size();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)]).abs());
            }
        }
        worst
    }

    /// Max over states of `|(pi P)(y) - pi(y)|`.
    pub fn stationarity_defect(&self) -> f64 {
        let prod = self.pi.transpose() * &self.matrix;
        (0..self.size())
            .map(|y| (prod[y] - self.pi[y]).abs())
            .fold(0.0, f64::max)
    }
}

/// Spectrum summary: eigenvalues (descending), the second largest one, and
/// the relaxation time `1/(1 - lambda0)`.
#[derive(Debug, Clone)]
pub struct SpectralReport {
    pub eigenvalues: Vec<f64>,
    pub lambda0: f64,
    pub t_rel: f64,
    /// False when only the extremes were materialized.
    pub full_spectrum: bool,
}

/// Full real spectrum of a symmetric kernel.
pub fn spectrum(kernel: &DenseKernel) -> Result<SpectralReport> {
    if kernel.max_asymmetry() > 1e-12 {
        return Err(Error::Unsupported(
            "spectrum requires a symmetric kernel (regular graph)".into(),
        ));
    }
    let eig = kernel.matrix.clone().symmetric_eigen();
    let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    eigenvalues.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let lambda0 = eigenvalues.get(1).copied().unwrap_or(0.0);
    if lambda0 >= 1.0 - 1e-13 {
        return Err(Error::Numerical(
            "second eigenvalue is 1: kernel is not ergodic".into(),
        ));
    }
    Ok(SpectralReport {
        lambda0,
        t_rel: 1.0 / (1.0 - lambda0),
        eigenvalues,
        full_spectrum: true,
    })
}

/// Torus spectrum from the cosine formula
/// `1/2 + (1/2d) * sum_j cos(2 pi k_j / n)`, `k` ranging over `{0..n-1}^d`.
///
/// The full multiset is materialized when `n^d` fits the dense limit;
/// otherwise only the trivial eigenvalue, `lambda0`, and the smallest
/// eigenvalue are returned.
pub fn torus_spectrum_closed_form(n: u32, d: u32, dense_limit: usize) -> Result<SpectralReport> {
    if n < 2 || d < 1 {
        return Err(Error::invalid(
            "n,d",
            "torus spectrum requires n >= 2, d >= 1",
        ));
    }
    let count = (n as u128).pow(d);
    let tau = 2.0 * std::f64::consts::PI;
    let cos_k: Vec<f64> = (0..n).map(|k| (tau * k as f64 / n as f64).cos()).collect();
    // lambda0 is realized by k = (1, 0, ..., 0): the first harmonic in one
    // coordinate maximizes the cosine sum among nonzero frequencies.
    let lambda0 = 0.5 + (cos_k[1] + (d as f64 - 1.0)) / (2.0 * d as f64);
    if count <= dense_limit as u128 {
        let count = count as usize;
        let mut eigenvalues = Vec::with_capacity(count);
        for id in 0..count {
            let mut rest = id;
            let mut sum = 0.0;
            for _ in 0..d {
                sum += cos_k[rest % n as usize];
                rest /= n as usize;
            }
            eigenvalues.push(0.5 + sum / (2.0 * d as f64));
        }
        eigenvalues.sort_by(|a, b| b.partial_cmp(a).unwrap());
        Ok(SpectralReport {
            lambda0,
            t_rel: 1.0 / (1.0 - lambda0),
            eigenvalues,
            full_spectrum: true,
        })
    } else {
        let min_cos = cos_k.iter().cloned().fold(f64::INFINITY, f64::min);
        let lambda_min = 0.5 + d as f64 * min_cos / (2.0 * d as f64);
        Ok(SpectralReport {
            lambda0,
            t_rel: 1.0 / (1.0 - lambda0),
            eigenvalues: vec![1.0, lambda0, lambda_min],
            full_spectrum: false,
        })
    }
}

/// Worst relative deviation of the given rows of `P^t` from stationarity:
/// `max |row(y) - pi(y)| / pi(y)`.
fn uniform_distance(rows: &DMatrix<f64>, pi: &DVector<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for r in 0..rows.nrows() {
        for y in 0..rows.ncols() {
            worst = worst.max((rows[(r, y)] - pi[y]).abs() / pi[y]);
        }
    }
    worst
}

/// Worst total variation distance of the given rows from stationarity.
fn tv_distance(rows: &DMatrix<f64>, pi: &DVector<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for r in 0..rows.nrows() {
        let d: f64 = (0..rows.ncols())
            .map(|y| (rows[(r, y)] - pi[y]).abs())
            .sum();
        worst = worst.max(0.5 * d);
    }
    worst
}

fn start_rows(size: usize, single_row: Option<usize>) -> DMatrix<f64> {
    match single_row {
        Some(x) => {
            let mut rows = DMatrix::zeros(1, size);
            rows[(0, x)] = 1.0;
            rows
        }
        None => DMatrix::identity(size, size),
    }
}

/// Least `t` with distance `<= eps`, found by stepping `rows <- rows * P`.
///
/// Works for any ergodic row-stochastic matrix; `single_row` restricts the
/// start states (valid on vertex-transitive chains where all rows share one
/// distance profile). `tv` switches the metric from uniform-ratio to total
/// variation.
pub fn mixing_time_scan(
    p: &DMatrix<f64>,
    pi: &DVector<f64>,
    eps: f64,
    single_row: Option<usize>,
    tv: bool,
    cap: u64,
) -> Result<u64> {
    if eps <= 0.0 {
        return Err(Error::invalid("eps", "must be positive"));
    }
    let metric = if tv { tv_distance } else { uniform_distance };
    let mut rows = start_rows(p.nrows(), single_row);
    let mut t = 0u64;
    loop {
        if metric(&rows, pi) <= eps {
            return Ok(t);
        }
        if t >= cap {
            return Err(Error::Divergence {
                cap,
                context: format!("mixing distance still above {eps}"),
            });
        }
        rows *= p;
        t += 1;
    }
}

/// Least `t` with uniform-ratio distance `<= eps`, via repeated squaring and
/// binary search.
///
/// Valid only when the distance is nonincreasing in `t`, which holds for
/// lazy kernels: they are positive semidefinite, so the worst ratio equals
/// the diagonal quantity `max_x P^t(x,x)/pi(x) - 1`, a sum of decaying
/// nonnegative eigenvalue powers.
pub fn uniform_mixing_time_squaring(
    p: &DMatrix<f64>,
    pi: &DVector<f64>,
    eps: f64,
    cap: u64,
) -> Result<u64> {
    if eps <= 0.0 {
        return Err(Error::invalid("eps", "must be positive"));
    }
    let identity = DMatrix::identity(p.nrows(), p.ncols());
    if uniform_distance(&identity, pi) <= eps {
        return Ok(0);
    }
    // Cache P^(2^j) until the distance drops (or the exponent overflows cap).
    let mut powers: Vec<DMatrix<f64>> = vec![p.clone()];
    let mut k = 0usize;
    loop {
        if uniform_distance(&powers[k], pi) <= eps {
            break;
        }
        if (1u128 << (k + 1)) > cap as u128 {
            return Err(Error::Divergence {
                cap,
                context: "uniform distance above eps at the step cap".into(),
            });
        }
        let next = &powers[k] * &powers[k];
        powers.push(next);
        k += 1;
    }
    if k == 0 {
        return Ok(1);
    }
    // Distance exceeds eps at 2^(k-1) and meets it at 2^k.
    let mut lo = 1u64 << (k - 1);
    let mut hi = 1u64 << k;
    let power_at = |t: u64| -> DMatrix<f64> {
        let mut acc = identity.clone();
        for (j, pw) in powers.iter().enumerate() {
            if t & (1 << j) != 0 {
                acc *= pw;
            }
        }
        acc
    };
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if uniform_distance(&power_at(mid), pi) <= eps {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Epsilon-uniform mixing time of a lazy kernel.
pub fn uniform_mixing_time(kernel: &DenseKernel, eps: f64) -> Result<u64> {
    uniform_mixing_time_with_cap(kernel, eps, DEFAULT_STEP_CAP)
}

pub fn uniform_mixing_time_with_cap(kernel: &DenseKernel, eps: f64, cap: u64) -> Result<u64> {
    if kernel.size() <= SQUARING_LIMIT {
        uniform_mixing_time_squaring(&kernel.matrix, &kernel.pi, eps, cap)
    } else {
        let single = kernel.graph.is_transitive().then_some(0);
        mixing_time_scan(&kernel.matrix, &kernel.pi, eps, single, false, cap)
    }
}

/// Epsilon-total-variation mixing time of a lazy kernel.
pub fn tv_mixing_time(kernel: &DenseKernel, eps: f64) -> Result<u64> {
    let single = kernel.graph.is_transitive().then_some(0);
    mixing_time_scan(
        &kernel.matrix,
        &kernel.pi,
        eps,
        single,
        true,
        DEFAULT_STEP_CAP,
    )
}

/// All-pairs expected hitting times plus the expected return times.
#[derive(Debug, Clone)]
pub struct HittingTable {
    /// `expected_hit[(x, y)] = E_x[time to reach y]`, zero on the diagonal.
    pub expected_hit: DMatrix<f64>,
    /// Maximum of `expected_hit` over all pairs.
    pub t_hit: f64,
    /// `mean_return[x] = E_x[first return time to x]`.
    pub mean_return: DVector<f64>,
}

/// Solves the hitting-time systems through the fundamental matrix
/// `Z = (I - P + 1 pi^T)^{-1}`, then reads off
/// `E_x[tau_y] = (Z(y,y) - Z(x,y)) / pi(y)`.
///
/// Return times use the one-step decomposition
/// `E_x[tau_x^+] = 1 + sum_z P(x,z) E_z[tau_x]`, which must equal `1/pi(x)`.
pub fn hitting_times(kernel: &DenseKernel) -> Result<HittingTable> {
    let n = kernel.size();
    let p = &kernel.matrix;
    let pi = &kernel.pi;
    let mut a = DMatrix::identity(n, n) - p;
    for x in 0..n {
        for y in 0..n {
            a[(x, y)] += pi[y];
        }
    }
    let z = a
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular hitting-time system".into()))?;
    let mut expected_hit = DMatrix::zeros(n, n);
    let mut t_hit: f64 = 0.0;
    for y in 0..n {
        for x in 0..n {
            if x != y {
                let h = (z[(y, y)] - z[(x, y)]) / pi[y];
                expected_hit[(x, y)] = h;
                t_hit = t_hit.max(h);
            }
        }
    }
    let mut mean_return = DVector::zeros(n);
    for x in 0..n {
        let mut acc = 1.0;
        for z in 0..n {
            acc += p[(x, z)] * expected_hit[(z, x)];
        }
        mean_return[x] = acc;
    }
    Ok(HittingTable {
        expected_hit,
        t_hit,
        mean_return,
    })
}

/// Green's row from the origin: visit masses `sum_{t=0}^{horizon} P^t(0, y)`,
/// the adjacent-pair value, and the top-sum curve behind G*.
#[derive(Debug, Clone)]
pub struct GreensTable {
    horizon: u64,
    row: Vec<f64>,
    g_adj: f64,
    /// Prefix sums of the row sorted descending; `prefix[n]` = top-n sum.
    prefix: Vec<f64>,
    transitive: bool,
    /// Full visit-mass matrix, kept only for small non-transitive graphs so
    /// that the exhaustive G* fallback can run.
    full: Option<DMatrix<f64>>,
}

/// Cap for the exhaustive-subset G* fallback on non-transitive graphs.
pub const EXHAUSTIVE_GSTAR_LIMIT: usize = 12;

/// Accumulates the Green's row of the origin over `0..=horizon` steps.
pub fn greens_table(kernel: &DenseKernel, horizon: u64) -> Result<GreensTable> {
    let n = kernel.size();
    let mut v = RowDVector::zeros(n);
    v[0] = 1.0;
    let mut acc = v.clone();
    for _ in 0..horizon {
        v *= &kernel.matrix;
        acc += &v;
    }
    let row: Vec<f64> = acc.iter().cloned().collect();
    let mut g_adj: f64 = 0.0;
    for u in kernel.graph.neighbors(0)? {
        g_adj = g_adj.max(row[u as usize]);
    }
    let mut sorted = row.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut sum = 0.0;
    for x in &sorted {
        sum += x;
        prefix.push(sum);
    }
    let transitive = kernel.graph.is_transitive();
    // A user-asserted transitivity claim on an explicit graph gets
    // spot-checked here: the top-sum reduction below silently depends on it.
    if transitive && matches!(kernel.graph.family(), crate::graph::Family::Explicit { .. }) {
        let starts: Vec<usize> = [1, n / 2, n - 1].into_iter().filter(|&s| s > 0).collect();
        let deviation = transitivity_diagnostic(kernel, horizon, &starts);
        if deviation > 1e-8 {
            return Err(Error::invalid(
                "transitive",
                format!("claimed transitive, but Green-row multisets differ by {deviation:.3e}"),
            ));
        }
    }
    let full = if !transitive && n <= EXHAUSTIVE_GSTAR_LIMIT {
        Some(greens_matrix(kernel, horizon))
    } else {
        None
    };
    Ok(GreensTable {
        horizon,
        row,
        g_adj,
        prefix,
        transitive,
        full,
    })
}

/// Full visit-mass matrix `sum_{t=0}^{horizon} P^t`.
pub fn greens_matrix(kernel: &DenseKernel, horizon: u64) -> DMatrix<f64> {
    let n = kernel.size();
    let mut power = DMatrix::identity(n, n);
    let mut acc = power.clone();
    for _ in 0..horizon {
        power *= &kernel.matrix;
        acc += &power;
    }
    acc
}

impl GreensTable {
    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    /// Visit masses `G(0, y)` indexed by vertex.
    pub fn row(&self) -> &[f64] {
        &self.row
    }

    /// `G(0, 0)`.
    pub fn origin(&self) -> f64 {
        self.row[0]
    }

    /// Largest visit mass among the origin's neighbors.
    pub fn g_adj(&self) -> f64 {
        self.g_adj
    }

    /// Maximal expected time in any `n`-set, seen from its worst interior
    /// point. On transitive graphs this reduces to the sum of the `n`
    /// largest origin-row values; otherwise an exhaustive subset search runs
    /// (capped at [`EXHAUSTIVE_GSTAR_LIMIT`] vertices).
    pub fn g_star(&self, n: usize) -> Result<f64> {
        if n < 1 || n > self.row.len() {
            return Err(Error::invalid(
                "n",
                format!("need 1 <= n <= {}", self.row.len()),
            ));
        }
        if self.transitive {
            Ok(self.prefix[n])
        } else {
            match &self.full {
                Some(full) => Ok(g_star_exhaustive(full, n)),
                None => Err(Error::capacity(
                    "exhaustive G* on a non-transitive graph",
                    self.row.len() as u128,
                    EXHAUSTIVE_GSTAR_LIMIT as u128,
                )),
            }
        }
    }

    /// The whole top-sum curve `n -> G*(n)` for `n = 1..=|G|`.
    pub fn g_star_curve(&self) -> Result<Vec<f64>> {
        (1..=self.row.len()).map(|n| self.g_star(n)).collect()
    }
}

/// Brute-force G*: maximize `sum_{y in S} G(z, y)` over all `n`-subsets `S`
/// and interior points `z`. Exponential; the independent oracle for the
/// top-sum reduction.
pub fn g_star_exhaustive(green: &DMatrix<f64>, n: usize) -> f64 {
    use itertools::Itertools;
    let size = green.nrows();
    assert!(n >= 1 && n <= size);
    let mut best = f64::NEG_INFINITY;
    for subset in (0..size).combinations(n) {
        for &z in &subset {
            let s: f64 = subset.iter().map(|&y| green[(z, y)]).sum();
            best = best.max(s);
        }
    }
    best
}

/// Multiset distance between Green's rows started at `0` and at sampled
/// vertices: a spot check of claimed vertex transitivity. Returns the worst
/// absolute difference between sorted rows.
pub fn transitivity_diagnostic(kernel: &DenseKernel, horizon: u64, starts: &[usize]) -> f64 {
    let n = kernel.size();
    let row_from = |x: usize| -> Vec<f64> {
        let mut v = RowDVector::zeros(n);
        v[x] = 1.0;
        let mut acc = v.clone();
        for _ in 0..horizon {
            v *= &kernel.matrix;
            acc += &v;
        }
        let mut row: Vec<f64> = acc.iter().cloned().collect();
        row.sort_by(|a, b| b.partial_cmp(a).unwrap());
        row
    };
    let base = row_from(0);
    let mut worst: f64 = 0.0;
    for &x in starts {
        let other = row_from(x);
        for (a, b) in base.iter().zip(&other) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn kernel(g: &GraphSpec) -> DenseKernel {
        DenseKernel::build(g).unwrap()
    }

    #[test]
    fn kernel_invariants_hold_on_fixtures() {
        for g in [
            GraphSpec::cycle(3).unwrap(),
            GraphSpec::cycle(6).unwrap(),
            GraphSpec::complete(2).unwrap(),
            GraphSpec::hypercube(3).unwrap(),
            GraphSpec::torus(4, 2).unwrap(),
        ] {
            let k = kernel(&g);
            for x in 0..k.size() {
                let row_sum: f64 = (0..k.size()).map(|y| k.matrix()[(x, y)]).sum();
                assert!((row_sum - 1.0).abs() < 1e-12);
                assert_eq!(k.matrix()[(x, x)], 0.5);
            }
            assert!(k.max_asymmetry() < 1e-15);
            assert!(k.stationarity_defect() < 1e-12);
        }
    }

    #[test]
    fn kernel_capacity_error() {
        let g = GraphSpec::hypercube(13).unwrap(); // 8192 states
        assert!(matches!(
            DenseKernel::build(&g),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn build_kernel_examples() {
        let k = kernel(&GraphSpec::complete(2).unwrap());
        for x in 0..2 {
            for y in 0..2 {
                assert_eq!(k.matrix()[(x, y)], 0.5);
            }
        }
        let k = kernel(&GraphSpec::hypercube(2).unwrap());
        assert_eq!(k.matrix()[(0, 3)], 0.0); // antipode unreachable in one step
        assert_eq!(k.matrix()[(0, 1)], 0.25);
        assert_eq!(k.matrix()[(0, 2)], 0.25);
    }

    #[test]
    fn cycle4_spectrum() {
        let rep = spectrum(&kernel(&GraphSpec::cycle(4).unwrap())).unwrap();
        let expect = [1.0, 0.5, 0.5, 0.0];
        for (a, e) in rep.eigenvalues.iter().zip(expect) {
            assert_relative_eq!(*a, e, epsilon = 1e-10);
        }
        assert_relative_eq!(rep.lambda0, 0.5, epsilon = 1e-10);
        assert_relative_eq!(rep.t_rel, 2.0, epsilon = 1e-10);
    }

    #[test]
    fn cycle3_spectrum() {
        let rep = spectrum(&kernel(&GraphSpec::cycle(3).unwrap())).unwrap();
        assert_relative_eq!(rep.lambda0, 0.25, epsilon = 1e-10);
        assert_relative_eq!(rep.t_rel, 4.0 / 3.0, epsilon = 1e-10);
    }

    #[test]
    fn hypercube_relaxation_matches_closed_form() {
        for d in 1..=6u32 {
            let rep = spectrum(&kernel(&GraphSpec::hypercube(d).unwrap())).unwrap();
            assert_relative_eq!(rep.lambda0, 1.0 - 1.0 / d as f64, epsilon = 1e-10);
            assert_relative_eq!(rep.t_rel, d as f64, epsilon = 1e-8);
            assert!(rep.eigenvalues[0] > 1.0 - 1e-10);
            assert!(rep.eigenvalues.iter().all(|&l| l > -1e-10));
        }
    }

    #[test]
    fn closed_form_matches_dense_solver() {
        for (n, d) in [(4u32, 1u32), (2, 3), (3, 2), (5, 2)] {
            let g = if d == 1 {
                GraphSpec::cycle(n).unwrap()
            } else {
                GraphSpec::torus(n, d).unwrap()
            };
            let dense = spectrum(&kernel(&g)).unwrap();
            let closed = torus_spectrum_closed_form(n, d, DEFAULT_DENSE_LIMIT).unwrap();
            assert_eq!(dense.eigenvalues.len(), closed.eigenvalues.len());
            for (a, b) in dense.eigenvalues.iter().zip(&closed.eigenvalues) {
                assert_relative_eq!(*a, *b, epsilon = 1e-8);
            }
            assert_relative_eq!(dense.lambda0, closed.lambda0, epsilon = 1e-8);
        }
    }

    #[test]
    fn closed_form_extremes_when_over_limit() {
        let rep = torus_spectrum_closed_form(5, 10, DEFAULT_DENSE_LIMIT).unwrap();
        assert!(!rep.full_spectrum);
        let expect = 0.5 + ((2.0 * std::f64::consts::PI / 5.0).cos() + 9.0) / 20.0;
        assert_relative_eq!(rep.lambda0, expect, epsilon = 1e-12);
    }

    #[test]
    fn uniform_mixing_complete2() {
        // P^1 is already exactly stationary on the lazy two-clique.
        let k = kernel(&GraphSpec::complete(2).unwrap());
        assert_eq!(uniform_mixing_time(&k, default_eps()).unwrap(), 1);
        // At t=0 the worst ratio is |G|-1, so eps >= |G|-1 gives 0.
        assert_eq!(uniform_mixing_time(&k, 1.0).unwrap(), 0);
    }

    #[test]
    fn uniform_mixing_eps_over_size_is_zero() {
        for g in [
            GraphSpec::cycle(5).unwrap(),
            GraphSpec::hypercube(3).unwrap(),
        ] {
            let k = kernel(&g);
            let eps = (k.size() - 1) as f64;
            assert_eq!(uniform_mixing_time(&k, eps).unwrap(), 0);
            assert!(uniform_mixing_time(&k, eps * 0.999).unwrap() > 0);
        }
    }

    #[test]
    fn uniform_mixing_cycle8_window_and_boundary() {
        let k = kernel(&GraphSpec::cycle(8).unwrap());
        let t_u = uniform_mixing_time(&k, default_eps()).unwrap();
        assert!((8..=512).contains(&t_u), "t_u = {t_u}");
        // Scan and squaring agree, and the distance at t_u - 1 exceeds eps.
        let scan =
            mixing_time_scan(k.matrix(), k.pi(), default_eps(), None, false, 10_000).unwrap();
        assert_eq!(scan, t_u);
        let single =
            mixing_time_scan(k.matrix(), k.pi(), default_eps(), Some(0), false, 10_000).unwrap();
        assert_eq!(single, t_u);
    }

    #[test]
    fn scan_and_squaring_agree_on_overlap() {
        for g in [
            GraphSpec::cycle(3).unwrap(),
            GraphSpec::cycle(12).unwrap(),
            GraphSpec::complete(5).unwrap(),
            GraphSpec::hypercube(4).unwrap(),
            GraphSpec::torus(3, 2).unwrap(),
        ] {
            let k = kernel(&g);
            for eps in [1.0, 0.5, default_eps(), 0.05] {
                let a = uniform_mixing_time_squaring(k.matrix(), k.pi(), eps, 100_000).unwrap();
                let b = mixing_time_scan(k.matrix(), k.pi(), eps, None, false, 100_000).unwrap();
                assert_eq!(a, b, "{g} at eps={eps}");
            }
        }
    }

    #[test]
    fn tv_mixing_examples() {
        let k = kernel(&GraphSpec::complete(2).unwrap());
        assert_eq!(tv_mixing_time(&k, 0.25).unwrap(), 1);

        let k3 = kernel(&GraphSpec::cycle(3).unwrap());
        let tv = tv_mixing_time(&k3, default_eps()).unwrap();
        let tu = uniform_mixing_time(&k3, default_eps()).unwrap();
        assert!(tv <= tu);
        // monotone nonincreasing in eps
        let mut last = u64::MAX;
        for eps in [0.05, 0.1, 0.2, 0.4] {
            let t = tv_mixing_time(&k3, eps).unwrap();
            assert!(t <= last);
            last = t;
        }
    }

    #[test]
    fn tv_never_exceeds_uniform_at_equal_eps() {
        for g in [
            GraphSpec::cycle(6).unwrap(),
            GraphSpec::hypercube(3).unwrap(),
            GraphSpec::complete(4).unwrap(),
        ] {
            let k = kernel(&g);
            for eps in [0.3, default_eps(), 0.05] {
                assert!(tv_mixing_time(&k, eps).unwrap() <= uniform_mixing_time(&k, eps).unwrap());
            }
        }
    }

    #[test]
    fn hitting_complete3() {
        let table = hitting_times(&kernel(&GraphSpec::complete(3).unwrap())).unwrap();
        for x in 0..3 {
            for y in 0..3 {
                if x != y {
                    assert_relative_eq!(table.expected_hit[(x, y)], 4.0, epsilon = 1e-10);
                } else {
                    assert_eq!(table.expected_hit[(x, y)], 0.0);
                }
            }
        }
        for x in 0..3 {
            assert_relative_eq!(table.mean_return[x], 3.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn hitting_solves_the_defining_system() {
        // h_y = 1 + P h_y off the target, h_y(y) = 0.
        let k = kernel(&GraphSpec::cycle(5).unwrap());
        let table = hitting_times(&k).unwrap();
        for y in 0..5 {
            for x in 0..5 {
                if x == y {
                    continue;
                }
                let mut rhs = 1.0;
                for z in 0..5 {
                    rhs += k.matrix()[(x, z)] * table.expected_hit[(z, y)];
                }
                assert_relative_eq!(table.expected_hit[(x, y)], rhs, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn hitting_cycle4_antipode_is_worst() {
        let table = hitting_times(&kernel(&GraphSpec::cycle(4).unwrap())).unwrap();
        assert!(table.expected_hit[(0, 2)] > table.expected_hit[(0, 1)]);
        assert_relative_eq!(table.t_hit, table.expected_hit[(0, 2)], epsilon = 1e-12);
        assert_relative_eq!(
            table.expected_hit[(0, 1)],
            table.expected_hit[(0, 3)],
            epsilon = 1e-10
        );
    }

    #[test]
    fn kac_mean_return_equals_size() {
        for g in [
            GraphSpec::cycle(3).unwrap(),
            GraphSpec::cycle(8).unwrap(),
            GraphSpec::complete(6).unwrap(),
            GraphSpec::hypercube(4).unwrap(),
            GraphSpec::torus(3, 3).unwrap(),
        ] {
            let k = kernel(&g);
            let table = hitting_times(&k).unwrap();
            for x in 0..k.size() {
                assert_relative_eq!(table.mean_return[x], k.size() as f64, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn greens_row_sums_to_horizon_plus_one() {
        let g = GraphSpec::cycle(6).unwrap();
        let k = kernel(&g);
        let t_u = uniform_mixing_time(&k, default_eps()).unwrap();
        let gt = greens_table(&k, t_u).unwrap();
        let total: f64 = gt.row().iter().sum();
        assert_relative_eq!(total, (t_u + 1) as f64, epsilon = 1e-8);
        for &v in gt.row() {
            assert!(gt.origin() >= v - 1e-12);
        }
    }

    #[test]
    fn greens_zero_horizon() {
        let k = kernel(&GraphSpec::cycle(5).unwrap());
        let gt = greens_table(&k, 0).unwrap();
        assert_eq!(gt.row()[0], 1.0);
        assert!(gt.row()[1..].iter().all(|&v| v == 0.0));
        for n in 1..=5 {
            assert_eq!(gt.g_star(n).unwrap(), 1.0);
        }
    }

    #[test]
    fn g_star_edges() {
        let k = kernel(&GraphSpec::cycle(6).unwrap());
        let gt = greens_table(&k, 10).unwrap();
        assert_relative_eq!(gt.g_star(1).unwrap(), gt.origin(), epsilon = 1e-12);
        assert_relative_eq!(gt.g_star(6).unwrap(), 11.0, epsilon = 1e-8);
        let curve = gt.g_star_curve().unwrap();
        for w in curve.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
        assert!(gt.g_star(0).is_err());
        assert!(gt.g_star(7).is_err());
    }

    #[test]
    fn g_star_matches_exhaustive_on_cycle5() {
        let k = kernel(&GraphSpec::cycle(5).unwrap());
        let t_u = uniform_mixing_time(&k, default_eps()).unwrap();
        let gt = greens_table(&k, t_u).unwrap();
        let full = greens_matrix(&k, t_u);
        for n in 1..=5 {
            assert_relative_eq!(
                gt.g_star(n).unwrap(),
                g_star_exhaustive(&full, n),
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn g_star_exhaustive_fallback_for_non_transitive() {
        // A 4-path is connected but not transitive.
        let path =
            GraphSpec::explicit(vec![vec![1], vec![0, 2], vec![1, 3], vec![2]], false).unwrap();
        let k = kernel(&path);
        let gt = greens_table(&k, 6).unwrap();
        let full = greens_matrix(&k, 6);
        for n in 1..=4 {
            assert_relative_eq!(
                gt.g_star(n).unwrap(),
                g_star_exhaustive(&full, n),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn power_monotonicity_on_transitive_fixtures() {
        // P^t(x,y) <= P^t(x,x) and P^t(x,x) nonincreasing in t.
        for g in [
            GraphSpec::cycle(6).unwrap(),
            GraphSpec::hypercube(3).unwrap(),
        ] {
            let k = kernel(&g);
            let n = k.size();
            let mut power = DMatrix::<f64>::identity(n, n);
            let mut last_diag = vec![f64::INFINITY; n];
            for _t in 0..40 {
                for x in 0..n {
                    for y in 0..n {
                        assert!(power[(x, y)] <= power[(x, x)] + 1e-12);
                    }
                    assert!(power[(x, x)] <= last_diag[x] + 1e-12);
                    last_diag[x] = power[(x, x)];
                }
                power *= k.matrix();
            }
        }
    }

    #[test]
    fn mixing_search_diverges_at_cap() {
        let k = kernel(&GraphSpec::cycle(16).unwrap());
        assert!(matches!(
            mixing_time_scan(k.matrix(), k.pi(), 0.01, None, false, 3),
            Err(Error::Divergence { cap: 3, .. })
        ));
        assert!(matches!(
            uniform_mixing_time_squaring(k.matrix(), k.pi(), 1e-8, 4),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn spectrum_rejects_asymmetric_kernel() {
        // An irregular explicit graph has a degree-biased, asymmetric kernel.
        let path = GraphSpec::explicit(vec![vec![1], vec![0, 2], vec![1]], false).unwrap();
        let k = kernel(&path);
        assert!(matches!(spectrum(&k), Err(Error::Unsupported(_))));
    }

    #[test]
    fn g_star_non_transitive_over_cap_errors() {
        // 13-vertex path: too large for the exhaustive fallback.
        let mut adj: Vec<Vec<u64>> = Vec::new();
        for i in 0..13u64 {
            let mut nbrs = Vec::new();
            if i > 0 {
                nbrs.push(i - 1);
            }
            if i < 12 {
                nbrs.push(i + 1);
            }
            adj.push(nbrs);
        }
        let g = GraphSpec::explicit(adj, false).unwrap();
        let k = kernel(&g);
        let gt = greens_table(&k, 8).unwrap();
        assert!(matches!(gt.g_star(3), Err(Error::Capacity { .. })));
    }

    #[test]
    fn transitivity_diagnostic_flags_path() {
        let k = kernel(&GraphSpec::cycle(6).unwrap());
        assert!(transitivity_diagnostic(&k, 12, &[1, 3, 5]) < 1e-10);
        let path =
            GraphSpec::explicit(vec![vec![1], vec![0, 2], vec![1, 3], vec![2]], false).unwrap();
        let kp = kernel(&path);
        assert!(transitivity_diagnostic(&kp, 12, &[1]) > 1e-3);
    }

    /// 3-regular 12-vertex graph with trivial automorphism group, from its
    /// LCF code [-5,-2,-4,2,5,-2,2,5,-2,-5,4,2]: regular, so the degree
    /// check cannot catch a false transitivity claim.
    fn frucht_graph(claim: bool) -> Result<GraphSpec> {
        let lcf: [i64; 12] = [-5, -2, -4, 2, 5, -2, 2, 5, -2, -5, 4, 2];
        let mut adj = vec![Vec::new(); 12];
        let mut add = |a: usize, b: usize| {
            if !adj[a].contains(&(b as u64)) {
                adj[a].push(b as u64);
                adj[b].push(a as u64);
            }
        };
        for (i, &shift) in lcf.iter().enumerate() {
            add(i, (i + 1) % 12);
            add(i, ((i as i64 + shift).rem_euclid(12)) as usize);
        }
        GraphSpec::explicit(adj, claim)
    }

    #[test]
    fn false_transitivity_claim_is_caught_by_green_rows() {
        // The claim passes the constant-degree check at construction but
        // fails the Green-row multiset spot check.
        let honest = frucht_graph(false).unwrap();
        assert_eq!(honest.uniform_degree(), Some(3));
        let claimed = frucht_graph(true).unwrap();
        let k = kernel(&claimed);
        match greens_table(&k, 20) {
            Err(Error::InvalidInput { field, .. }) => assert_eq!(field, "transitive"),
            other => panic!("expected rejected claim, got {other:?}"),
        }
        // the honest version computes fine and reaches the exhaustive G* cap
        let kh = kernel(&honest);
        let gt = greens_table(&kh, 20).unwrap();
        assert!(gt.g_star(3).unwrap() > 0.0);
    }
}
