//! Gaussian machinery: the conditional law of the terminal state, the
//! exponential change of measure, linear-constraint projection, and rectangle
//! probabilities for multivariate normals.
//!
//! Rectangle probabilities use the separation-of-variables transform with
//! greedy variable reordering and a randomized rank-1 lattice (square-root
//! generators, tent-periodized, independent uniform shifts). Linearly
//! dependent constraint rows survive as zero-pivot indicators inside the
//! integrand, which is how systems with more rows than underlying dimensions
//! are handled. A plain Monte Carlo estimator doubles as the independent
//! oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mat::{lower_tri_mat_vec, SymMatrix};
use crate::model::{seasonal_demand_mean, ScenarioSpec, StateVector};
use crate::norm;

/// Relative threshold below which a projected row variance counts as zero.
pub const DEGENERATE_REL_TOL: f64 = 1e-12;

/// Mean vector plus covariance matrix of a multivariate normal.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLaw {
    mean: Vec<f64>,
    cov: SymMatrix,
}

impl GaussianLaw {
    pub fn new(mean: Vec<f64>, cov: SymMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::InvalidInput(format!(
                "mean dimension {} does not match covariance dimension {}",
                mean.len(),
                cov.dim()
            )));
        }
        if !cov.is_psd(1e-10) {
            return Err(Error::Numerics(
                "covariance is not positive semidefinite".into(),
            ));
        }
        Ok(GaussianLaw { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &SymMatrix {
        &self.cov
    }

    pub fn max_variance(&self) -> f64 {
        (0..self.dim()).map(|i| self.cov.get(i, i)).fold(0.0, f64::max)
    }

    /// True when every coordinate has exactly zero variance (zero horizon or
    /// zero volatilities): the law is a point mass at its mean.
    pub fn is_point_mass(&self) -> bool {
        self.max_variance() == 0.0
    }
}

/// Linear constraint system `lower <= rows * x <= upper`, entries may be
/// infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraints {
    pub rows: Vec<Vec<f64>>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearConstraints {
    pub fn empty() -> Self {
        LinearConstraints {
            rows: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>, lower: f64, upper: f64) {
        debug_assert!(lower <= upper, "constraint bounds inverted: {lower} > {upper}");
        self.rows.push(row);
        self.lower.push(lower);
        self.upper.push(upper);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Whether `x` satisfies every constraint (closed bounds).
    pub fn contains(&self, x: &[f64]) -> bool {
        self.rows.iter().enumerate().all(|(i, row)| {
            let v: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
            v >= self.lower[i] && v <= self.upper[i]
        })
    }
}

/// Conditional law of the terminal state at `maturity` given `state` at
/// `state.time`: log fuel costs and demand deviations decay at their
/// mean-reversion speeds towards the long-run means, and the covariance is
/// the stationary-bridging form `rho_ij s_i s_j (1-exp(-(a_i+a_j) tau)) /
/// (a_i+a_j)`.
pub fn conditional_law(
    state: &StateVector,
    maturity: f64,
    scenario: &ScenarioSpec,
) -> Result<GaussianLaw> {
    let tau = maturity - state.time;
    if tau < 0.0 || !tau.is_finite() {
        return Err(Error::InvalidInput(format!(
            "maturity {maturity} precedes the state time {}",
            state.time
        )));
    }
    let n = scenario.n_fuels();
    if state.log_fuels.len() != n {
        return Err(Error::InvalidInput(format!(
            "state carries {} fuels, scenario has {n}",
            state.log_fuels.len()
        )));
    }
    let m = n + 2;
    let mut speeds = Vec::with_capacity(m);
    let mut vols = Vec::with_capacity(m);
    let mut mean = Vec::with_capacity(m);
    for (f, &x) in scenario.fuels.iter().zip(&state.log_fuels) {
        let decay = (-f.mean_reversion * tau).exp();
        mean.push(x * decay + f.long_run_log_mean * (1.0 - decay));
        speeds.push(f.mean_reversion);
        vols.push(f.volatility);
    }
    for (market, demand) in [
        (&scenario.market_a, state.demand_a),
        (&scenario.market_b, state.demand_b),
    ] {
        let dev = demand - seasonal_demand_mean(market, state.time);
        let decay = (-market.demand_mean_reversion * tau).exp();
        mean.push(seasonal_demand_mean(market, maturity) + dev * decay);
        speeds.push(market.demand_mean_reversion);
        vols.push(market.demand_vol);
    }
    let corr = scenario.correlation_matrix()?;
    let mut cov = SymMatrix::zeros(m);
    for i in 0..m {
        for j in i..m {
            let a = speeds[i] + speeds[j];
            let v = corr.get(i, j) * vols[i] * vols[j] * (1.0 - (-a * tau).exp()) / a;
            cov.set(i, j, v);
        }
    }
    GaussianLaw::new(mean, cov)
}

/// The change of measure absorbing a factor `exp(lambda' X + eta)`:
/// `E[exp(lambda' X + eta) f(X)] = factor * E[f(X~)]` where `X~` keeps the
/// covariance and has its mean shifted by `cov * lambda`.
pub fn exponential_tilt(
    law: &GaussianLaw,
    lambda: &[f64],
    eta: f64,
) -> Result<(f64, GaussianLaw)> {
    if lambda.len() != law.dim() {
        return Err(Error::InvalidInput(format!(
            "tilt dimension {} does not match law dimension {}",
            lambda.len(),
            law.dim()
        )));
    }
    let quad = law.cov.quad_form(lambda);
    let lin: f64 = lambda.iter().zip(law.mean()).map(|(a, b)| a * b).sum();
    let factor = (0.5 * quad + lin + eta).exp();
    let shift = law.cov.mat_vec(lambda);
    let mean = law
        .mean
        .iter()
        .zip(&shift)
        .map(|(m, s)| m + s)
        .collect();
    Ok((factor, GaussianLaw {
        mean,
        cov: law.cov.clone(),
    }))
}

/// Result of projecting a constraint system onto its row space.
#[derive(Debug, Clone)]
pub enum Projected {
    /// A genuine box probability remains to be integrated.
    Boxed {
        law: GaussianLaw,
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    /// Every row resolved deterministically.
    Certain(f64),
}

/// Law of `Y = rows * X` together with the box bounds, after resolving
/// zero-variance rows (satisfied rows are dropped, violated ones collapse the
/// probability to zero) and merging proportional duplicate rows.
pub fn project(law: &GaussianLaw, constraints: &LinearConstraints) -> Result<Projected> {
    let m = law.dim();
    for row in &constraints.rows {
        if row.len() != m {
            return Err(Error::InvalidInput(format!(
                "constraint row has {} entries, law dimension is {m}",
                row.len()
            )));
        }
    }
    if constraints.is_empty() {
        return Ok(Projected::Certain(1.0));
    }
    let y_mean: Vec<f64> = constraints
        .rows
        .iter()
        .map(|row| row.iter().zip(law.mean()).map(|(a, b)| a * b).sum())
        .collect();
    let y_cov = law.cov.congruence(&constraints.rows);
    let max_var = (0..y_cov.dim()).map(|i| y_cov.get(i, i)).fold(0.0, f64::max);
    let var_tol = DEGENERATE_REL_TOL * max_var;

    let mut kept: Vec<usize> = Vec::new();
    let mut lower: Vec<f64> = Vec::new();
    let mut upper: Vec<f64> = Vec::new();
    for i in 0..constraints.len() {
        if y_cov.get(i, i) <= var_tol {
            // Deterministic row: resolve at its mean.
            let slack = 1e-9 * (1.0 + y_mean[i].abs());
            if y_mean[i] < constraints.lower[i] - slack || y_mean[i] > constraints.upper[i] + slack
            {
                return Ok(Projected::Certain(0.0));
            }
            continue;
        }
        // Duplicate of an earlier kept row (up to scale)?
        let mut merged = false;
        for (pos, &j) in kept.iter().enumerate() {
            if let Some(c) = proportionality(&constraints.rows[j], &constraints.rows[i]) {
                let (lo, up) = if c > 0.0 {
                    (constraints.lower[i] / c, constraints.upper[i] / c)
                } else {
                    (constraints.upper[i] / c, constraints.lower[i] / c)
                };
                lower[pos] = lower[pos].max(lo);
                upper[pos] = upper[pos].min(up);
                if lower[pos] > upper[pos] {
                    return Ok(Projected::Certain(0.0));
                }
                merged = true;
                break;
            }
        }
        if !merged {
            kept.push(i);
            lower.push(constraints.lower[i]);
            upper.push(constraints.upper[i]);
        }
    }
    if kept.is_empty() {
        return Ok(Projected::Certain(1.0));
    }
    let mean: Vec<f64> = kept.iter().map(|&i| y_mean[i]).collect();
    let mut cov = SymMatrix::zeros(kept.len());
    for (ii, &i) in kept.iter().enumerate() {
        for (jj, &j) in kept.iter().enumerate().skip(ii) {
            cov.set(ii, jj, y_cov.get(i, j));
        }
    }
    Ok(Projected::Boxed {
        law: GaussianLaw { mean, cov },
        lower,
        upper,
    })
}

/// Scale `c` with `b = c * a`, or `None` if the rows are not proportional.
fn proportionality(a: &[f64], b: &[f64]) -> Option<f64> {
    let pivot = a
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))?
        .0;
    if a[pivot] == 0.0 {
        return None;
    }
    let c = b[pivot] / a[pivot];
    if c == 0.0 || !c.is_finite() {
        return None;
    }
    for (x, y) in a.iter().zip(b) {
        if (y - c * x).abs() > 1e-12 * (x.abs().max(y.abs()) + 1.0) {
            return None;
        }
    }
    Some(c)
}

/// Probability value with an error estimate and the work spent on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbabilityEstimate {
    pub value: f64,
    /// Estimated absolute error (about three standard errors).
    pub error: f64,
    /// Lattice points or Monte Carlo samples evaluated.
    pub samples_or_points: u64,
}

impl ProbabilityEstimate {
    pub fn certain(value: f64) -> Self {
        ProbabilityEstimate {
            value,
            error: 0.0,
            samples_or_points: 0,
        }
    }
}

/// Tuning for [`rectangle_probability`].
#[derive(Debug, Clone, Copy)]
pub struct QuadratureOptions {
    /// Absolute tolerance the adaptive loop aims for.
    pub tolerance: f64,
    /// Number of independent random shifts.
    pub shifts: usize,
    pub min_points: usize,
    pub max_points: usize,
    pub seed: u64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions {
            tolerance: 1e-4,
            shifts: 12,
            min_points: 512,
            max_points: 1 << 17,
            seed: 0,
        }
    }
}

impl QuadratureOptions {
    pub fn from_scenario(scenario: &ScenarioSpec, seed: u64) -> Self {
        QuadratureOptions {
            tolerance: scenario.numerics.quadrature_tolerance,
            shifts: scenario.numerics.quadrature_shifts,
            max_points: scenario.numerics.max_points_per_shift,
            seed,
            ..QuadratureOptions::default()
        }
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol;
        self
    }
}

const PRIMES: [u64; 20] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71];
/// Residual variance below this (correlation units) counts as a dependent row.
const RANK_TOL: f64 = 1e-9;
/// Slack for deterministic indicator rows inside the integrand.
const INDICATOR_TOL: f64 = 1e-8;
/// Products of conditional masses below this short-circuit the quadrature.
const SCREEN_CUTOFF: f64 = 1e-13;
const SCREEN_ERROR: f64 = 1e-9;

struct SovSystem {
    /// Cholesky-style factor rows (lower triangular, zero diagonal marks a
    /// dependent row), in pivot order.
    factor: Vec<Vec<f64>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Number of positive pivots = lattice dimension.
    rank: usize,
    /// Product of conditional masses along the reordering pass.
    rough_mass: f64,
}

/// Greedy most-restrictive-first reordering with in-place pivoted Cholesky.
fn build_sov_system(cov: &SymMatrix, lower: &[f64], upper: &[f64]) -> SovSystem {
    let r = cov.dim();
    // Standardize rows to unit variance where possible.
    let mut scale = vec![1.0; r];
    for i in 0..r {
        let v = cov.get(i, i);
        scale[i] = if v > 0.0 { v.sqrt() } else { 1.0 };
    }
    let mut w: Vec<Vec<f64>> = (0..r)
        .map(|i| {
            (0..r)
                .map(|j| cov.get(i, j) / (scale[i] * scale[j]))
                .collect()
        })
        .collect();
    let mut a: Vec<f64> = lower.iter().zip(&scale).map(|(x, s)| x / s).collect();
    let mut b: Vec<f64> = upper.iter().zip(&scale).map(|(x, s)| x / s).collect();
    let mut y = vec![0.0; r];
    let mut rough_mass = 1.0_f64;
    let mut rank = 0;

    for i in 0..r {
        // Pick the remaining row with the smallest conditional mass;
        // dependent rows wait until the end.
        let mut best = i;
        let mut best_mass = f64::INFINITY;
        for j in i..r {
            let var = w[j][j].max(0.0);
            let mass = if var <= RANK_TOL {
                2.0
            } else {
                let ctr: f64 = (0..i).map(|s| w[j][s] * y[s]).sum();
                let d = var.sqrt();
                (norm::cdf((b[j] - ctr) / d) - norm::cdf((a[j] - ctr) / d)).max(0.0)
            };
            if mass < best_mass {
                best_mass = mass;
                best = j;
            }
        }
        if best != i {
            w.swap(i, best);
            for row in w.iter_mut() {
                row.swap(i, best);
            }
            a.swap(i, best);
            b.swap(i, best);
        }
        let var = w[i][i].max(0.0);
        if var <= RANK_TOL {
            // Dependent row: keep its loadings on earlier pivots, zero pivot.
            w[i][i] = 0.0;
            for j in (i + 1)..r {
                w[j][i] = 0.0;
            }
            let ctr: f64 = (0..i).map(|s| w[i][s] * y[s]).sum();
            if ctr < a[i] - INDICATOR_TOL || ctr > b[i] + INDICATOR_TOL {
                rough_mass = 0.0;
            }
            y[i] = ctr;
            continue;
        }
        let d = var.sqrt();
        w[i][i] = d;
        for j in (i + 1)..r {
            w[j][i] /= d;
        }
        for j in (i + 1)..r {
            for s in (i + 1)..=j {
                let upd = w[j][i] * w[s][i];
                w[j][s] -= upd;
                if s != j {
                    w[s][j] -= upd;
                }
            }
        }
        let ctr: f64 = (0..i).map(|s| w[i][s] * y[s]).sum();
        let alo = (a[i] - ctr) / d;
        let ahi = (b[i] - ctr) / d;
        let (plo, phi) = (norm::cdf(alo), norm::cdf(ahi));
        let mass = (phi - plo).max(0.0);
        rough_mass *= mass;
        y[i] = if mass > 1e-13 {
            (norm::pdf(alo) - norm::pdf(ahi)) / mass
        } else {
            // Numerically empty slice: park the conditional point midway.
            0.5 * (alo.max(-9.0) + ahi.min(9.0))
        };
        rank += 1;
    }
    // Zero the strict upper triangle so rows read as factor rows.
    for i in 0..r {
        for j in (i + 1)..r {
            w[i][j] = 0.0;
        }
    }
    SovSystem {
        factor: w,
        lower: a,
        upper: b,
        rank,
        rough_mass,
    }
}

impl SovSystem {
    fn integrand(&self, point: &[f64], y: &mut [f64]) -> f64 {
        let r = self.lower.len();
        let mut prod = 1.0;
        let mut iu = 0;
        for i in 0..r {
            let l = &self.factor[i];
            let ctr: f64 = (0..i).map(|s| l[s] * y[s]).sum();
            if l[i] > 0.0 {
                let lo = norm::cdf((self.lower[i] - ctr) / l[i]);
                let hi = norm::cdf((self.upper[i] - ctr) / l[i]);
                let mass = hi - lo;
                if mass <= 0.0 {
                    return 0.0;
                }
                prod *= mass;
                let u = (lo + point[iu] * mass).clamp(1e-300, 1.0 - 1e-16);
                y[i] = norm::inv_cdf(u);
                iu += 1;
            } else {
                if ctr < self.lower[i] - INDICATOR_TOL || ctr > self.upper[i] + INDICATOR_TOL {
                    return 0.0;
                }
                y[i] = ctr;
            }
        }
        prod
    }
}

/// `P(lower <= Y <= upper)` for `Y ~ law`, by randomized lattice quadrature
/// over the separation-of-variables transform. Deterministic in
/// `opts.seed`; the reported error is a three-standard-error estimate over
/// the random shifts.
pub fn rectangle_probability(
    law: &GaussianLaw,
    lower: &[f64],
    upper: &[f64],
    opts: &QuadratureOptions,
) -> Result<ProbabilityEstimate> {
    let r = law.dim();
    if lower.len() != r || upper.len() != r {
        return Err(Error::InvalidInput(
            "bound lengths do not match law dimension".into(),
        ));
    }
    if r == 0 {
        return Ok(ProbabilityEstimate::certain(1.0));
    }
    // Resolve zero-variance rows first: they are point masses at the mean.
    let max_var = law.max_variance();
    let var_tol = DEGENERATE_REL_TOL * max_var;
    let mut live: Vec<usize> = Vec::new();
    for i in 0..r {
        if law.cov.get(i, i) <= var_tol {
            let m = law.mean[i];
            let slack = 1e-9 * (1.0 + m.abs());
            if m < lower[i] - slack || m > upper[i] + slack {
                return Ok(ProbabilityEstimate::certain(0.0));
            }
        } else {
            live.push(i);
        }
    }
    if live.is_empty() {
        return Ok(ProbabilityEstimate::certain(1.0));
    }
    let mut cov = SymMatrix::zeros(live.len());
    for (ii, &i) in live.iter().enumerate() {
        for (jj, &j) in live.iter().enumerate().skip(ii) {
            cov.set(ii, jj, law.cov.get(i, j));
        }
    }
    let a: Vec<f64> = live.iter().map(|&i| lower[i] - law.mean[i]).collect();
    let b: Vec<f64> = live.iter().map(|&i| upper[i] - law.mean[i]).collect();
    let sys = build_sov_system(&cov, &a, &b);
    if sys.rough_mass < SCREEN_CUTOFF {
        return Ok(ProbabilityEstimate {
            value: sys.rough_mass.max(0.0),
            error: SCREEN_ERROR,
            samples_or_points: 0,
        });
    }
    if sys.rank == 0 {
        // All rows dependent/deterministic and none violated along the pass.
        return Ok(ProbabilityEstimate::certain(1.0));
    }

    let dim = sys.rank;
    let gens: Vec<f64> = (0..dim).map(|i| (PRIMES[i % PRIMES.len()] as f64).sqrt().fract()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let shifts: Vec<Vec<f64>> = (0..opts.shifts)
        .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
        .collect();

    let mut sums = vec![0.0_f64; opts.shifts];
    let mut evaluated = 0usize;
    let mut n = opts.min_points.max(8);
    let mut value = f64::NAN;
    let mut error;
    let mut total_points = 0u64;
    let mut point = vec![0.0; dim];
    let mut y = vec![0.0; sys.lower.len()];
    loop {
        for (s, shift) in shifts.iter().enumerate() {
            let mut acc = 0.0;
            for j in evaluated..n {
                let jf = (j + 1) as f64;
                for (i, g) in gens.iter().enumerate() {
                    let x = (jf * g + shift[i]).fract();
                    point[i] = (2.0 * x - 1.0).abs();
                }
                acc += sys.integrand(&point, &mut y);
            }
            sums[s] += acc;
            total_points += (n - evaluated) as u64;
        }
        evaluated = n;
        let means: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
        let prev = value;
        value = means.iter().sum::<f64>() / means.len() as f64;
        let var = means
            .iter()
            .map(|m| (m - value) * (m - value))
            .sum::<f64>()
            / (means.len() as f64 - 1.0);
        error = 3.0 * (var / means.len() as f64).sqrt();
        if n >= opts.max_points {
            break;
        }
        // The shift-based error estimate is unreliable while the lattice is
        // still missing rare corners of the integrand, so besides the error
        // test require the value to have settled across one doubling.
        if error <= opts.tolerance && (value - prev).abs() <= opts.tolerance.max(error) {
            break;
        }
        n = (n * 2).min(opts.max_points);
    }
    Ok(ProbabilityEstimate {
        value: value.clamp(0.0, 1.0),
        error,
        samples_or_points: total_points,
    })
}

/// Convenience: project a constraint system and integrate the surviving box.
pub fn constraint_probability(
    law: &GaussianLaw,
    constraints: &LinearConstraints,
    opts: &QuadratureOptions,
) -> Result<ProbabilityEstimate> {
    match project(law, constraints)? {
        Projected::Certain(v) => Ok(ProbabilityEstimate::certain(v)),
        Projected::Boxed { law, lower, upper } => {
            rectangle_probability(&law, &lower, &upper, opts)
        }
    }
}

/// Monte Carlo oracle for [`rectangle_probability`]: exact Gaussian sampling
/// through the positive-semidefinite Cholesky factor, binomial standard
/// error. Each sample index draws from its own counter-derived stream, so the
/// result is independent of parallel scheduling.
pub fn mc_rectangle_probability(
    law: &GaussianLaw,
    lower: &[f64],
    upper: &[f64],
    n: usize,
    seed: u64,
) -> Result<ProbabilityEstimate> {
    let r = law.dim();
    if lower.len() != r || upper.len() != r {
        return Err(Error::InvalidInput(
            "bound lengths do not match law dimension".into(),
        ));
    }
    if n == 0 {
        return Err(Error::InvalidInput("sample count must be positive".into()));
    }
    let chol = law.cov.cholesky_psd(1e-12)?;
    let hits: u64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let z: Vec<f64> = (0..r).map(|_| rng.sample(StandardNormal)).collect();
            let shock = lower_tri_mat_vec(&chol, r, &z);
            let inside = (0..r).all(|j| {
                let x = law.mean[j] + shock[j];
                x >= lower[j] && x <= upper[j]
            });
            inside as u64
        })
        .sum();
    let p = hits as f64 / n as f64;
    Ok(ProbabilityEstimate {
        value: p,
        error: (p * (1.0 - p) / n as f64).sqrt(),
        samples_or_points: n as u64,
    })
}
