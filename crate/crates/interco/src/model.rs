//! Static model definition for the two coupled zones: fuels, technologies,
//! markets, interconnection bounds, and the deterministic building blocks
//! (seasonal capacities and demand means, scarcity pricing, merit orders,
//! marginality intervals, offer curves).
//!
//! Internal units are MW and EUR/MWh; times are in years and seasonal shapes
//! have a one-year period. All functions here are pure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::SymMatrix;

/// Two-letter handle for the zones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MarketId {
    A,
    B,
}

impl MarketId {
    pub fn other(self) -> MarketId {
        match self {
            MarketId::A => MarketId::B,
            MarketId::B => MarketId::A,
        }
    }
}

impl std::fmt::Display for MarketId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MarketId::A => write!(f, "A"),
            MarketId::B => write!(f, "B"),
        }
    }
}

/// One global fuel driving production costs through a log Ornstein-Uhlenbeck
/// process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuelSpec {
    pub name: String,
    /// log cost at the valuation time, log(EUR/MWh).
    pub initial_log_cost: f64,
    /// Mean-reversion speed, 1/year. Strictly positive.
    pub mean_reversion: f64,
    /// Long-run mean of the log cost (constant in time).
    pub long_run_log_mean: f64,
    /// Volatility of the log cost, 1/sqrt(year). Nonnegative.
    pub volatility: f64,
}

/// One production technology inside a market, burning a global fuel and with
/// a deterministic seasonal capacity
/// `capacity_const + capacity_cos*cos(2*pi*t) + capacity_sin*sin(2*pi*t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechnologySpec {
    /// Index into the scenario's global fuel list.
    pub fuel: usize,
    pub capacity_const: f64,
    pub capacity_cos: f64,
    pub capacity_sin: f64,
}

impl TechnologySpec {
    pub fn capacity_at(&self, t: f64) -> f64 {
        let w = std::f64::consts::TAU * t;
        self.capacity_const + self.capacity_cos * w.cos() + self.capacity_sin * w.sin()
    }

    /// Exact minimum of the seasonal capacity over a full year.
    pub fn min_capacity(&self) -> f64 {
        self.capacity_const - self.capacity_cos.hypot(self.capacity_sin)
    }
}

/// One market (price zone): its technology stack, scarcity coefficients and
/// demand dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSpec {
    pub technologies: Vec<TechnologySpec>,
    /// Scarcity level coefficient (dimensionless).
    pub alpha: f64,
    /// Scarcity slope, 1/MW. Nonpositive.
    pub beta: f64,
    /// Seasonal demand mean: `demand_const + cos/sin terms`, MW.
    pub demand_const: f64,
    pub demand_cos: f64,
    pub demand_sin: f64,
    /// Demand deviation mean-reversion speed, 1/year. Strictly positive.
    pub demand_mean_reversion: f64,
    /// Demand deviation volatility, MW/sqrt(year). Nonnegative.
    pub demand_vol: f64,
    /// Demand deviation from the seasonal mean at the valuation time, MW.
    pub initial_demand_dev: f64,
}

impl MarketSpec {
    pub fn n_technologies(&self) -> usize {
        self.technologies.len()
    }

    /// Total available capacity at `t`, MW.
    pub fn total_capacity(&self, t: f64) -> f64 {
        self.technologies.iter().map(|tech| tech.capacity_at(t)).sum()
    }
}

/// Commercial flow bounds on the interconnector, MW. `flow_min <= 0 <= flow_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingSpec {
    pub flow_min: f64,
    pub flow_max: f64,
}

/// Numerical settings carried with a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericsSpec {
    /// Absolute tolerance targeted by the rectangle-probability quadrature.
    pub quadrature_tolerance: f64,
    /// Number of randomized shifts in the quadrature.
    pub quadrature_shifts: usize,
    /// Hard cap on lattice points per shift.
    pub max_points_per_shift: usize,
    /// Default Monte Carlo sample count.
    pub mc_samples: usize,
    /// Grid resolution of the brute-force flow oracle, MW.
    pub brute_force_grid_step: f64,
    /// Enumeration refuses scenarios with more fuels than this.
    pub max_fuels: usize,
}

impl Default for NumericsSpec {
    fn default() -> Self {
        NumericsSpec {
            quadrature_tolerance: 1e-4,
            quadrature_shifts: 12,
            max_points_per_shift: 1 << 17,
            mc_samples: 1_000_000,
            brute_force_grid_step: 1.0,
            max_fuels: 5,
        }
    }
}

/// Full model definition: global fuels, the two markets, interconnection
/// bounds, driver correlations and numerics settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub fuels: Vec<FuelSpec>,
    pub market_a: MarketSpec,
    pub market_b: MarketSpec,
    pub coupling: CouplingSpec,
    /// Correlation of the Wiener drivers, row-major (N+2)x(N+2) in the order
    /// fuels 1..N, demand A, demand B.
    pub correlation: Vec<f64>,
    /// Valuation time `t`, years.
    pub valuation_time: f64,
    pub seed: u64,
    pub numerics: NumericsSpec,
}

impl ScenarioSpec {
    pub fn n_fuels(&self) -> usize {
        self.fuels.len()
    }

    /// Dimension of the driver vector: fuels plus the two demands.
    pub fn state_dim(&self) -> usize {
        self.n_fuels() + 2
    }

    pub fn market(&self, id: MarketId) -> &MarketSpec {
        match id {
            MarketId::A => &self.market_a,
            MarketId::B => &self.market_b,
        }
    }

    pub fn correlation_matrix(&self) -> Result<SymMatrix> {
        SymMatrix::from_rows(self.state_dim(), self.correlation.clone())
    }

    /// The state pinned at the valuation time by the scenario's initial
    /// conditions.
    pub fn initial_state(&self) -> StateVector {
        let t = self.valuation_time;
        StateVector {
            log_fuels: self.fuels.iter().map(|f| f.initial_log_cost).collect(),
            demand_a: seasonal_demand_mean(&self.market_a, t) + self.market_a.initial_demand_dev,
            demand_b: seasonal_demand_mean(&self.market_b, t) + self.market_b.initial_demand_dev,
            time: t,
        }
    }

    /// Checks every model invariant; returns the first violation.
    pub fn validate(&self) -> Result<()> {
        if self.fuels.is_empty() {
            return Err(Error::validation("fuels", "at least one fuel is required"));
        }
        for (i, f) in self.fuels.iter().enumerate() {
            let path = |s: &str| format!("fuels[{i}].{s}");
            if !f.initial_log_cost.is_finite() {
                return Err(Error::validation(path("initial_log_cost"), "must be finite"));
            }
            if !(f.mean_reversion > 0.0) || !f.mean_reversion.is_finite() {
                return Err(Error::validation(path("mean_reversion"), "must be finite and > 0"));
            }
            if !f.long_run_log_mean.is_finite() {
                return Err(Error::validation(path("long_run_log_mean"), "must be finite"));
            }
            if !(f.volatility >= 0.0) || !f.volatility.is_finite() {
                return Err(Error::validation(path("volatility"), "must be finite and >= 0"));
            }
        }
        let mut used = vec![false; self.fuels.len()];
        for (id, market) in [(MarketId::A, &self.market_a), (MarketId::B, &self.market_b)] {
            let mname = format!("market_{}", id.to_string().to_lowercase());
            if market.technologies.is_empty() {
                return Err(Error::validation(
                    format!("{mname}.technologies"),
                    "at least one technology is required",
                ));
            }
            for (k, tech) in market.technologies.iter().enumerate() {
                let path = format!("{mname}.technologies[{k}]");
                if tech.fuel >= self.fuels.len() {
                    return Err(Error::validation(
                        format!("{path}.fuel"),
                        format!("fuel index {} out of range", tech.fuel),
                    ));
                }
                used[tech.fuel] = true;
                if tech.min_capacity() < 0.0 {
                    return Err(Error::validation(
                        format!("{path}.capacity"),
                        "seasonal capacity dips below zero",
                    ));
                }
            }
            if !(market.beta <= 0.0) || !market.beta.is_finite() {
                return Err(Error::validation(format!("{mname}.beta"), "must be finite and <= 0"));
            }
            if !market.alpha.is_finite() {
                return Err(Error::validation(format!("{mname}.alpha"), "must be finite"));
            }
            if !(market.demand_mean_reversion > 0.0) || !market.demand_mean_reversion.is_finite() {
                return Err(Error::validation(
                    format!("{mname}.demand_mean_reversion"),
                    "must be finite and > 0",
                ));
            }
            if !(market.demand_vol >= 0.0) || !market.demand_vol.is_finite() {
                return Err(Error::validation(
                    format!("{mname}.demand_vol"),
                    "must be finite and >= 0",
                ));
            }
            for (field, v) in [
                ("demand_const", market.demand_const),
                ("demand_cos", market.demand_cos),
                ("demand_sin", market.demand_sin),
                ("initial_demand_dev", market.initial_demand_dev),
            ] {
                if !v.is_finite() {
                    return Err(Error::validation(format!("{mname}.{field}"), "must be finite"));
                }
            }
        }
        if let Some(idx) = used.iter().position(|u| !u) {
            return Err(Error::validation(
                format!("fuels[{idx}]"),
                "fuel is not referenced by any technology",
            ));
        }
        if self.market_a.beta == 0.0 && self.market_b.beta == 0.0 {
            return Err(Error::validation(
                "market_a.beta",
                "beta may not be zero in both markets (flat offer curves leave the coupled flow undefined)",
            ));
        }
        if !(self.coupling.flow_min <= 0.0 && self.coupling.flow_max >= 0.0) {
            return Err(Error::validation(
                "coupling",
                format!(
                    "flow bounds must satisfy flow_min <= 0 <= flow_max, got [{}, {}]",
                    self.coupling.flow_min, self.coupling.flow_max
                ),
            ));
        }
        let m = self.state_dim();
        if self.correlation.len() != m * m {
            return Err(Error::validation(
                "correlation",
                format!("expected {m}x{m} = {} entries, got {}", m * m, self.correlation.len()),
            ));
        }
        let corr = self.correlation_matrix().map_err(|e| Error::Validation {
            field: "correlation".into(),
            message: e.to_string(),
        })?;
        for i in 0..m {
            if (corr.get(i, i) - 1.0).abs() > 1e-12 {
                return Err(Error::validation(
                    "correlation",
                    format!("diagonal entry {i} is {} instead of 1", corr.get(i, i)),
                ));
            }
        }
        if !corr.is_psd(1e-10) {
            return Err(Error::validation(
                "correlation",
                "matrix is not positive semidefinite",
            ));
        }
        if !self.valuation_time.is_finite() {
            return Err(Error::validation("valuation_time", "must be finite"));
        }
        let num = &self.numerics;
        if !(num.quadrature_tolerance > 0.0) {
            return Err(Error::validation("numerics.quadrature_tolerance", "must be > 0"));
        }
        if num.quadrature_shifts < 2 {
            return Err(Error::validation("numerics.quadrature_shifts", "must be >= 2"));
        }
        if !(num.brute_force_grid_step > 0.0) {
            return Err(Error::validation("numerics.brute_force_grid_step", "must be > 0"));
        }
        if self.fuels.len() > num.max_fuels {
            return Err(Error::validation(
                "fuels",
                format!(
                    "{} fuels exceed the enumeration cap of {} (merit orders grow factorially)",
                    self.fuels.len(),
                    num.max_fuels
                ),
            ));
        }
        Ok(())
    }
}

/// The random state at one time point: log fuel costs and the two demands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub log_fuels: Vec<f64>,
    pub demand_a: f64,
    pub demand_b: f64,
    /// Time the state refers to, years.
    pub time: f64,
}

impl StateVector {
    pub fn is_finite(&self) -> bool {
        self.log_fuels.iter().all(|v| v.is_finite())
            && self.demand_a.is_finite()
            && self.demand_b.is_finite()
            && self.time.is_finite()
    }

    /// Flattens to the driver vector layout (fuels, demand A, demand B).
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.log_fuels.clone();
        v.push(self.demand_a);
        v.push(self.demand_b);
        v
    }

    pub fn from_vec(v: &[f64], time: f64) -> StateVector {
        let n = v.len() - 2;
        StateVector {
            log_fuels: v[..n].to_vec(),
            demand_a: v[n],
            demand_b: v[n + 1],
            time,
        }
    }

    pub fn demand(&self, id: MarketId) -> f64 {
        match id {
            MarketId::A => self.demand_a,
            MarketId::B => self.demand_b,
        }
    }
}

/// Per-market permutations sorting the realized technology costs ascending,
/// ties broken by base technology index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeritOrder {
    pub perm_a: Vec<usize>,
    pub perm_b: Vec<usize>,
}

impl MeritOrder {
    pub fn perm(&self, id: MarketId) -> &[usize] {
        match id {
            MarketId::A => &self.perm_a,
            MarketId::B => &self.perm_b,
        }
    }
}

/// Seasonal capacity of technology `k` (base index) at time `t`, MW.
pub fn capacity_at(market: &MarketSpec, k: usize, t: f64) -> Result<f64> {
    let tech = market
        .technologies
        .get(k)
        .ok_or_else(|| Error::InvalidInput(format!("technology index {k} out of range")))?;
    Ok(tech.capacity_at(t))
}

/// Seasonal demand mean `f_t`, MW.
pub fn seasonal_demand_mean(market: &MarketSpec, t: f64) -> f64 {
    let w = std::f64::consts::TAU * t;
    market.demand_const + market.demand_cos * w.cos() + market.demand_sin * w.sin()
}

/// Marginal price of a technology with cost `s` when total capacity is
/// `c_bar` and demand is `d`: `s * exp(alpha + beta * (c_bar - d))`.
pub fn scarcity_price(s: f64, c_bar: f64, d: f64, alpha: f64, beta: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::InvalidInput(format!(
            "marginal cost must be positive, got {s}"
        )));
    }
    Ok(s * (alpha + beta * (c_bar - d)).exp())
}

fn sort_by_cost(costs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..costs.len()).collect();
    // Stable sort keeps base-index order on ties.
    idx.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]));
    idx
}

/// Realized merit order of both markets under the given state.
pub fn merit_order(state: &StateVector, scenario: &ScenarioSpec) -> MeritOrder {
    let perm = |market: &MarketSpec| {
        let costs: Vec<f64> = market
            .technologies
            .iter()
            .map(|t| state.log_fuels[t.fuel])
            .collect();
        sort_by_cost(&costs)
    };
    MeritOrder {
        perm_a: perm(&scenario.market_a),
        perm_b: perm(&scenario.market_b),
    }
}

/// Global fuel ordering by realized cost ascending, ties broken by fuel index.
pub fn global_cost_order(state: &StateVector) -> Vec<usize> {
    sort_by_cost(&state.log_fuels)
}

/// Marginality interval `[lower, upper)` of the technology ranked `k`
/// (0-based) under `order`, at time `t`. Intervals tile `[0, total capacity]`.
pub fn marginality_interval(
    market: &MarketSpec,
    order: &[usize],
    k: usize,
    t: f64,
) -> Result<(f64, f64)> {
    if k >= order.len() || order.len() != market.technologies.len() {
        return Err(Error::InvalidInput(format!(
            "rank {k} out of range for {} technologies",
            market.technologies.len()
        )));
    }
    let mut lower = 0.0;
    for &tech in &order[..k] {
        lower += capacity_at(market, tech, t)?;
    }
    let upper = lower + capacity_at(market, order[k], t)?;
    Ok((lower, upper))
}

/// A market's realized offer stack at a point in time: technologies sorted by
/// cost with cumulative capacities, ready for price lookups.
///
/// Demand outside `[0, total]` extrapolates: below zero the cheapest
/// technology stays marginal, at or above the total the most expensive one
/// does (the scarcity term then blows up, which is the intended shortage
/// signal).
#[derive(Debug, Clone)]
pub struct OfferStack {
    /// Technology base indices, ascending realized cost.
    pub order: Vec<usize>,
    /// Realized log costs by rank.
    pub log_costs: Vec<f64>,
    /// Cumulative capacity by rank (cum[r] covers ranks 0..=r), MW.
    pub cum: Vec<f64>,
    pub total_capacity: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// A price discontinuity of an offer stack: the demand level where the
/// marginal technology switches between two ranks with distinct costs.
#[derive(Debug, Clone, Copy)]
pub struct Breakpoint {
    pub demand: f64,
    /// Marginal rank just below the breakpoint demand.
    pub below: usize,
    /// Marginal rank at and above the breakpoint demand.
    pub above: usize,
}

impl OfferStack {
    pub fn build(market: &MarketSpec, state: &StateVector, t: f64) -> OfferStack {
        let costs: Vec<f64> = market
            .technologies
            .iter()
            .map(|tech| state.log_fuels[tech.fuel])
            .collect();
        let order = sort_by_cost(&costs);
        let log_costs: Vec<f64> = order.iter().map(|&i| costs[i]).collect();
        let mut cum = Vec::with_capacity(order.len());
        let mut acc = 0.0;
        for &i in &order {
            acc += market.technologies[i].capacity_at(t);
            cum.push(acc);
        }
        OfferStack {
            order,
            log_costs,
            cum,
            total_capacity: acc,
            alpha: market.alpha,
            beta: market.beta,
        }
    }

    pub fn n(&self) -> usize {
        self.order.len()
    }

    pub fn lower_edge(&self, rank: usize) -> f64 {
        if rank == 0 {
            0.0
        } else {
            self.cum[rank - 1]
        }
    }

    pub fn width(&self, rank: usize) -> f64 {
        self.cum[rank] - self.lower_edge(rank)
    }

    /// Rank whose half-open interval `[lower, upper)` contains `d`, with the
    /// extrapolation rules for demand outside the stack. Zero-width ranks are
    /// never marginal.
    pub fn marginal_rank(&self, d: f64) -> usize {
        let n = self.n();
        let mut r = self.cum.partition_point(|&c| c <= d);
        if r >= n {
            r = n - 1;
        }
        // A trailing zero-width rank can only be reached through the clamp;
        // fall back to the last rank that actually has capacity.
        while r > 0 && self.width(r) <= 0.0 {
            r -= 1;
        }
        if self.width(r) <= 0.0 {
            r = (0..n).find(|&i| self.width(i) > 0.0).unwrap_or(0);
        }
        r
    }

    /// Log offer price if rank `rank` is marginal at demand `d`.
    pub fn log_price_of_rank(&self, rank: usize, d: f64) -> f64 {
        self.log_costs[rank] + self.alpha + self.beta * (self.total_capacity - d)
    }

    /// Log offer price and marginal rank at demand `d`.
    pub fn log_price(&self, d: f64) -> (f64, usize) {
        let r = self.marginal_rank(d);
        (self.log_price_of_rank(r, d), r)
    }

    /// Offer price and marginal rank at demand `d`.
    pub fn price(&self, d: f64) -> (f64, usize) {
        let (lp, r) = self.log_price(d);
        (lp.exp(), r)
    }

    /// Genuine discontinuities: adjacencies of positive-width ranks with
    /// strictly increasing cost.
    pub fn breakpoints(&self) -> Vec<Breakpoint> {
        let mut out = Vec::new();
        let mut prev: Option<usize> = None;
        for r in 0..self.n() {
            if self.width(r) <= 0.0 {
                continue;
            }
            if let Some(p) = prev {
                if self.log_costs[r] > self.log_costs[p] {
                    out.push(Breakpoint {
                        demand: self.lower_edge(r),
                        below: p,
                        above: r,
                    });
                }
            }
            prev = Some(r);
        }
        out
    }
}

/// Offer curve lookup: price and marginal rank for demand `d` at time `t`.
pub fn offer_curve(
    market: &MarketSpec,
    state: &StateVector,
    d: f64,
    t: f64,
) -> Result<(f64, usize)> {
    let stack = OfferStack::build(market, state, t);
    let (log_price, rank) = stack.log_price(d);
    if !log_price.is_finite() {
        return Err(Error::Numerics(format!(
            "offer price overflowed at demand {d}"
        )));
    }
    Ok((log_price.exp(), rank))
}
