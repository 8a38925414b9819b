//! Monte Carlo side of the engine: exact terminal-state sampling under the
//! conditional Gaussian law, payoff estimators that double as oracles for
//! every analytic pricer, and log-spot moment estimation for the lognormal
//! (Margrabe) comparison.
//!
//! Sampling derives each sample's normal draws from `(seed, sample index)`
//! through an independent stream, so batches are reproducible no matter how
//! the work is scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{spot_prices, SpotOutcome};
use crate::error::{Error, Result};
use crate::gaussian::conditional_law;
use crate::mat::lower_tri_mat_vec;
use crate::model::{MarketId, ScenarioSpec, StateVector};

/// Terminal states drawn from the conditional law.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub states: Vec<StateVector>,
    pub seed: u64,
    /// Conditioning time (the sampled state's time), years.
    pub t: f64,
    /// Terminal time of every sampled state, years.
    pub maturity: f64,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub standard_error: f64,
    pub n: usize,
}

/// Payoffs the estimator knows how to average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Payoff {
    Forward(MarketId),
    Call(MarketId, f64),
    /// Two-sided transmission right: the absolute price spread.
    TransmissionRight,
    /// Indicator of the coupled regimes (prices coincide).
    CouplingIndicator,
}

/// Draws `n` exact samples of the terminal state at `maturity` given `state`
/// at `state.time`.
pub fn sample_terminal(
    scenario: &ScenarioSpec,
    state: &StateVector,
    maturity: f64,
    n: usize,
    seed: u64,
) -> Result<SampleBatch> {
    if n == 0 {
        return Err(Error::InvalidInput("sample count must be positive".into()));
    }
    let law = conditional_law(state, maturity, scenario)?;
    let dim = law.dim();
    let chol = law.cov().cholesky_psd(1e-12)?;
    let mean = law.mean().to_vec();
    let states: Vec<StateVector> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let z: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let shock = lower_tri_mat_vec(&chol, dim, &z);
            let v: Vec<f64> = mean.iter().zip(&shock).map(|(m, s)| m + s).collect();
            StateVector::from_vec(&v, maturity)
        })
        .collect();
    Ok(SampleBatch {
        states,
        seed,
        t: state.time,
        maturity,
    })
}

/// Spot outcomes for every state of a batch (parallel, order-preserving).
pub fn evaluate_spots(batch: &SampleBatch, scenario: &ScenarioSpec) -> Vec<SpotOutcome> {
    batch
        .states
        .par_iter()
        .map(|state| spot_prices(state, scenario))
        .collect()
}

/// Averages `payoff` over spot outcomes already computed from a batch.
pub fn mc_price_from_spots(payoff: Payoff, spots: &[SpotOutcome]) -> McEstimate {
    let n = spots.len();
    let values: Vec<f64> = spots
        .iter()
        .map(|out| match payoff {
            Payoff::Forward(m) => out.price(m),
            Payoff::Call(m, strike) => (out.price(m) - strike).max(0.0),
            Payoff::TransmissionRight => (out.price_a - out.price_b).abs(),
            Payoff::CouplingIndicator => out.regime().is_coupled() as u8 as f64,
        })
        .collect();
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let var = values
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / (nf - 1.0).max(1.0);
    // Identical payoffs can still leave rounding dust in the deviations.
    let var = if var <= 1e-24 * (1.0 + mean * mean) { 0.0 } else { var };
    McEstimate {
        value: mean,
        standard_error: (var / nf).sqrt(),
        n,
    }
}

/// Monte Carlo price of a payoff over a sampled batch.
pub fn mc_price(payoff: Payoff, batch: &SampleBatch, scenario: &ScenarioSpec) -> Result<McEstimate> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("batch is empty".into()));
    }
    let spots = evaluate_spots(batch, scenario);
    Ok(mc_price_from_spots(payoff, &spots))
}

/// Sample moments of the simulated log spot prices: annualized volatilities,
/// their correlation, and the mean price levels (the Monte Carlo forwards).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpotLogMoments {
    /// Standard deviation of log spot over sqrt(maturity - t), per year.
    pub vol_a: f64,
    pub vol_b: f64,
    pub correlation: f64,
    pub forward_a: f64,
    pub forward_b: f64,
    /// Set when a volatility vanished and the correlation defaulted to 1.
    pub degenerate: bool,
}

/// Estimates [`SpotLogMoments`] from spot outcomes of a batch.
pub fn spot_log_moments_from_spots(
    spots: &[SpotOutcome],
    t: f64,
    maturity: f64,
) -> Result<SpotLogMoments> {
    let n = spots.len();
    if n < 2 {
        return Err(Error::InvalidInput(
            "need at least two samples for moments".into(),
        ));
    }
    if spots
        .iter()
        .any(|s| !(s.price_a > 0.0) || !(s.price_b > 0.0))
    {
        return Err(Error::Numerics(
            "nonpositive simulated spot price; log moments undefined".into(),
        ));
    }
    let nf = n as f64;
    let tau = (maturity - t).max(f64::MIN_POSITIVE);
    let mut mean_a = 0.0;
    let mut mean_b = 0.0;
    let mut log_a = Vec::with_capacity(n);
    let mut log_b = Vec::with_capacity(n);
    for s in spots {
        mean_a += s.price_a / nf;
        mean_b += s.price_b / nf;
        log_a.push(s.price_a.ln());
        log_b.push(s.price_b.ln());
    }
    let m_a: f64 = log_a.iter().sum::<f64>() / nf;
    let m_b: f64 = log_b.iter().sum::<f64>() / nf;
    let (mut var_a, mut var_b) = (0.0, 0.0);
    let mut cov = 0.0;
    for i in 0..n {
        let da = log_a[i] - m_a;
        let db = log_b[i] - m_b;
        var_a += da * da;
        var_b += db * db;
        cov += da * db;
    }
    var_a /= nf - 1.0;
    var_b /= nf - 1.0;
    cov /= nf - 1.0;
    let floor_a = 1e-24 * (1.0 + m_a * m_a);
    let floor_b = 1e-24 * (1.0 + m_b * m_b);
    if var_a <= floor_a {
        var_a = 0.0;
    }
    if var_b <= floor_b {
        var_b = 0.0;
    }
    let degenerate = var_a <= 0.0 || var_b <= 0.0;
    let correlation = if degenerate {
        1.0
    } else {
        (cov / (var_a * var_b).sqrt()).clamp(-1.0, 1.0)
    };
    Ok(SpotLogMoments {
        vol_a: (var_a / tau).sqrt(),
        vol_b: (var_b / tau).sqrt(),
        correlation,
        forward_a: mean_a,
        forward_b: mean_b,
        degenerate,
    })
}

/// Estimates [`SpotLogMoments`] directly from a batch.
pub fn spot_log_moments(batch: &SampleBatch, scenario: &ScenarioSpec) -> Result<SpotLogMoments> {
    let spots = evaluate_spots(batch, scenario);
    spot_log_moments_from_spots(&spots, batch.t, batch.maturity)
}
