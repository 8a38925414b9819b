//! Quasi-analytic derivative pricing over the merit-order partition.
//!
//! Every payoff in scope restricts, on each cell of the partition (global
//! cost ordering, marginal pair, regime), to `exp(lambda' V + eta)` times the
//! indicator of a linear constraint system in the terminal state `V`. The
//! exponential tilt turns each term into a scale factor times a Gaussian
//! rectangle probability, which the `gaussian` module integrates. Events are
//! summed in a fixed lexicographic order so repeated runs are bit-identical.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{spot_prices, EventKey, Regime};
use crate::error::{Error, Result};
use crate::gaussian::{
    conditional_law, constraint_probability, exponential_tilt, GaussianLaw, LinearConstraints,
    ProbabilityEstimate, QuadratureOptions,
};
use crate::model::{MarketId, MarketSpec, MeritOrder, ScenarioSpec};
use crate::montecarlo::SpotLogMoments;
use crate::norm;

/// Which price leg a term represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TermRole {
    /// Zone A's own offer price at the saturated flow.
    LegA,
    /// Zone B's own offer price at the saturated flow.
    LegB,
    /// The common price of a coupled regime (serves both zones).
    Common,
}

/// Exponential weight `exp(lambda' V + eta)` of one price leg.
#[derive(Debug, Clone, PartialEq)]
pub struct Tilt {
    pub lambda: Vec<f64>,
    pub eta: f64,
}

/// One cell of the pricing partition with the tilt of a requested price leg
/// and the cell's defining linear constraints (including the global
/// cost-ordering block).
#[derive(Debug, Clone)]
pub struct EventTerm {
    pub key: EventKey,
    pub tilt: Tilt,
    pub constraints: LinearConstraints,
    pub role: TermRole,
}

/// A price split into per-event contributions.
#[derive(Debug, Clone)]
pub struct PriceDecomposition {
    pub total: f64,
    /// `(key, contribution, untilted event probability)` per event, in
    /// enumeration order; events whose contribution and probability both
    /// vanish are omitted.
    pub per_event: Vec<(EventKey, f64, f64)>,
    /// Root-sum-square of the per-term quadrature error estimates.
    pub quadrature_error: f64,
}

/// Zone data frozen at the pricing maturity.
struct ZoneAtMaturity {
    /// Technology base index per merit rank under the induced order.
    order: Vec<usize>,
    /// Fuel index per merit rank.
    fuels: Vec<usize>,
    /// Cumulative capacity per rank, MW.
    cum: Vec<f64>,
    total: f64,
    alpha: f64,
    beta: f64,
}

impl ZoneAtMaturity {
    /// Induces the zone merit order from a global cost ordering: technologies
    /// sorted by their fuel's position, base index breaking ties.
    fn build(market: &MarketSpec, global_order: &[usize], maturity: f64) -> ZoneAtMaturity {
        let mut pos = vec![0usize; global_order.len()];
        for (p, &f) in global_order.iter().enumerate() {
            pos[f] = p;
        }
        let mut order: Vec<usize> = (0..market.technologies.len()).collect();
        order.sort_by_key(|&t| (pos[market.technologies[t].fuel], t));
        let caps: Vec<f64> = order
            .iter()
            .map(|&t| market.technologies[t].capacity_at(maturity))
            .collect();
        let mut cum = Vec::with_capacity(order.len());
        let mut acc = 0.0;
        for c in &caps {
            acc += c;
            cum.push(acc);
        }
        ZoneAtMaturity {
            fuels: order.iter().map(|&t| market.technologies[t].fuel).collect(),
            order,
            cum,
            total: acc,
            alpha: market.alpha,
            beta: market.beta,
        }
    }

    fn lower_edge(&self, rank: usize) -> f64 {
        if rank == 0 {
            0.0
        } else {
            self.cum[rank - 1]
        }
    }

    fn upper_edge(&self, rank: usize) -> f64 {
        self.cum[rank]
    }
}

/// Enumerates the full pricing partition: every global fuel ordering (in
/// lexicographic order), marginal rank pair, and regime. Fails when the fuel
/// count exceeds the scenario's enumeration cap.
pub fn enumerate_events(scenario: &ScenarioSpec) -> Result<Vec<EventKey>> {
    let n = scenario.n_fuels();
    if n > scenario.numerics.max_fuels {
        return Err(Error::InvalidInput(format!(
            "{n} fuels exceed the enumeration cap of {}",
            scenario.numerics.max_fuels
        )));
    }
    let mut keys = Vec::new();
    for sigma in permutations_lex(n) {
        let zone_a = ZoneAtMaturity::build(&scenario.market_a, &sigma, scenario.valuation_time);
        let zone_b = ZoneAtMaturity::build(&scenario.market_b, &sigma, scenario.valuation_time);
        let merit = MeritOrder {
            perm_a: zone_a.order.clone(),
            perm_b: zone_b.order.clone(),
        };
        for k in 0..scenario.market_a.n_technologies() {
            for l in 0..scenario.market_b.n_technologies() {
                for regime in Regime::ALL {
                    keys.push(EventKey {
                        global_order: sigma.clone(),
                        merit: merit.clone(),
                        k,
                        l,
                        regime,
                    });
                }
            }
        }
    }
    Ok(keys)
}

fn permutations_lex(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..n).collect();
    let mut used = vec![false; n];
    fn rec(
        n: usize,
        depth: usize,
        current: &mut Vec<usize>,
        used: &mut Vec<bool>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if depth == n {
            out.push(current.clone());
            return;
        }
        for v in 0..n {
            if !used[v] {
                used[v] = true;
                current[depth] = v;
                rec(n, depth + 1, current, used, out);
                used[v] = false;
            }
        }
    }
    rec(n, 0, &mut current, &mut used, &mut out);
    out
}

/// Builds the tilt and constraint system of `key` for the requested price
/// leg at `maturity`. For coupled regimes both legs resolve to the common
/// price.
pub fn event_term(
    key: &EventKey,
    scenario: &ScenarioSpec,
    maturity: f64,
    leg: MarketId,
) -> Result<EventTerm> {
    let n = scenario.n_fuels();
    let mut sorted = key.global_order.clone();
    sorted.sort_unstable();
    if sorted != (0..n).collect::<Vec<_>>() {
        return Err(Error::InvalidInput(
            "global_order is not a permutation of the fuel indices".into(),
        ));
    }
    if key.k >= scenario.market_a.n_technologies() || key.l >= scenario.market_b.n_technologies() {
        return Err(Error::InvalidInput(format!(
            "marginal pair ({}, {}) out of range",
            key.k, key.l
        )));
    }
    let zone_a = ZoneAtMaturity::build(&scenario.market_a, &key.global_order, maturity);
    let zone_b = ZoneAtMaturity::build(&scenario.market_b, &key.global_order, maturity);
    let builder = EventBuilder {
        dim: n + 2,
        n_fuels: n,
        zone_a,
        zone_b,
        flow_min: scenario.coupling.flow_min,
        flow_max: scenario.coupling.flow_max,
        global_order: &key.global_order,
    };
    let (constraints, legs) = builder.build(key.k, key.l, key.regime);
    let (tilt, role) = match (key.regime, leg) {
        (Regime::SaturatedAToB | Regime::SaturatedBToA, MarketId::A) => {
            (legs.leg_a.clone(), TermRole::LegA)
        }
        (Regime::SaturatedAToB | Regime::SaturatedBToA, MarketId::B) => {
            (legs.leg_b.clone(), TermRole::LegB)
        }
        (_, _) => (legs.leg_a.clone(), TermRole::Common),
    };
    Ok(EventTerm {
        key: key.clone(),
        tilt,
        constraints,
        role,
    })
}

/// Tilts of the price legs of one event: for saturated regimes the two zone
/// legs differ; for coupled regimes `leg_a == leg_b` is the common price.
struct EventLegs {
    leg_a: Tilt,
    leg_b: Tilt,
}

struct EventBuilder<'a> {
    dim: usize,
    n_fuels: usize,
    zone_a: ZoneAtMaturity,
    zone_b: ZoneAtMaturity,
    flow_min: f64,
    flow_max: f64,
    global_order: &'a [usize],
}

impl EventBuilder<'_> {
    fn row(&self) -> Vec<f64> {
        vec![0.0; self.dim]
    }

    fn demand_a(&self) -> usize {
        self.n_fuels
    }

    fn demand_b(&self) -> usize {
        self.n_fuels + 1
    }

    /// The global cost-ordering block: adjacent log-cost differences are
    /// nonnegative.
    fn merit_rows(&self, cons: &mut LinearConstraints) {
        for w in self.global_order.windows(2) {
            let mut row = self.row();
            row[w[1]] += 1.0;
            row[w[0]] -= 1.0;
            cons.push(row, 0.0, f64::INFINITY);
        }
    }

    fn build(&self, k: usize, l: usize, regime: Regime) -> (LinearConstraints, EventLegs) {
        match regime {
            Regime::SaturatedAToB => self.saturated(k, l, self.flow_max, true),
            Regime::SaturatedBToA => self.saturated(k, l, self.flow_min, false),
            Regime::CoupledDiscA => self.disc_a(k, l),
            Regime::CoupledDiscB => self.disc_b(k, l),
            Regime::CoupledInterior => self.interior(k, l),
        }
    }

    /// Saturated flow `e` (upper bound for A-to-B, lower for B-to-A): both
    /// marginality boxes at the shifted demands plus the price-ordering row.
    fn saturated(&self, k: usize, l: usize, e: f64, a_exports: bool) -> (LinearConstraints, EventLegs) {
        let (za, zb) = (&self.zone_a, &self.zone_b);
        let mut cons = LinearConstraints::empty();
        let mut row = self.row();
        row[self.demand_a()] = 1.0;
        cons.push(row, za.lower_edge(k) - e, za.upper_edge(k) - e);
        let mut row = self.row();
        row[self.demand_b()] = 1.0;
        cons.push(row, zb.lower_edge(l) + e, zb.upper_edge(l) + e);
        // Ordering of the two saturated offer prices.
        let mut row = self.row();
        row[za.fuels[k]] += 1.0;
        row[zb.fuels[l]] -= 1.0;
        row[self.demand_a()] += -za.beta;
        row[self.demand_b()] += zb.beta;
        let bound = zb.alpha - za.alpha + zb.beta * (zb.total + e) - za.beta * (za.total - e);
        if a_exports {
            // Exporting A stays at or below B's price at full export.
            cons.push(row, f64::NEG_INFINITY, bound);
        } else {
            cons.push(row, bound, f64::INFINITY);
        }
        self.merit_rows(&mut cons);
        let leg_a = Tilt {
            lambda: {
                let mut lam = self.row();
                lam[za.fuels[k]] = 1.0;
                lam[self.demand_a()] = -za.beta;
                lam
            },
            eta: za.alpha + za.beta * (za.total - e),
        };
        let leg_b = Tilt {
            lambda: {
                let mut lam = self.row();
                lam[zb.fuels[l]] = 1.0;
                lam[self.demand_b()] = -zb.beta;
                lam
            },
            eta: zb.alpha + zb.beta * (zb.total + e),
        };
        (cons, EventLegs { leg_a, leg_b })
    }

    /// Coupled flow pinned at the lower edge of A's rank `k`: the flow bound
    /// box on demand A, B's marginality box on total demand, and B's price
    /// bracketed by the jump of A's curve. Rank 0 has no technology below,
    /// so the cheap-side bracket row is vacuous there.
    fn disc_a(&self, k: usize, l: usize) -> (LinearConstraints, EventLegs) {
        let (za, zb) = (&self.zone_a, &self.zone_b);
        let pin = za.lower_edge(k);
        let mut cons = LinearConstraints::empty();
        let mut row = self.row();
        row[self.demand_a()] = 1.0;
        cons.push(row, pin - self.flow_max, pin - self.flow_min);
        let mut row = self.row();
        row[self.demand_a()] = 1.0;
        row[self.demand_b()] = 1.0;
        cons.push(row, pin + zb.lower_edge(l), pin + zb.upper_edge(l));
        let bracket =
            zb.alpha - za.alpha + zb.beta * (zb.total + pin) - za.beta * (za.total - pin);
        if k > 0 {
            // Cheap side of the jump stays at or below B's price.
            let mut row = self.row();
            row[za.fuels[k - 1]] += 1.0;
            row[zb.fuels[l]] -= 1.0;
            row[self.demand_a()] += zb.beta;
            row[self.demand_b()] += zb.beta;
            cons.push(row, f64::NEG_INFINITY, bracket);
        }
        // Dear side of the jump reaches at or above B's price.
        let mut row = self.row();
        row[za.fuels[k]] += 1.0;
        row[zb.fuels[l]] -= 1.0;
        row[self.demand_a()] += zb.beta;
        row[self.demand_b()] += zb.beta;
        cons.push(row, bracket, f64::INFINITY);
        self.merit_rows(&mut cons);
        // Common price: B's offer at the residual demand D_B + D_A - pin.
        let common = Tilt {
            lambda: {
                let mut lam = self.row();
                lam[zb.fuels[l]] = 1.0;
                lam[self.demand_a()] = -zb.beta;
                lam[self.demand_b()] = -zb.beta;
                lam
            },
            eta: zb.alpha + zb.beta * (zb.total + pin),
        };
        let legs = EventLegs {
            leg_a: common.clone(),
            leg_b: common,
        };
        (cons, legs)
    }

    /// Mirror case: flow pinned at the lower edge of B's rank `l`.
    fn disc_b(&self, k: usize, l: usize) -> (LinearConstraints, EventLegs) {
        let (za, zb) = (&self.zone_a, &self.zone_b);
        let pin = zb.lower_edge(l);
        let mut cons = LinearConstraints::empty();
        let mut row = self.row();
        row[self.demand_b()] = 1.0;
        cons.push(row, pin + self.flow_min, pin + self.flow_max);
        let mut row = self.row();
        row[self.demand_a()] = 1.0;
        row[self.demand_b()] = 1.0;
        cons.push(row, pin + za.lower_edge(k), pin + za.upper_edge(k));
        let bracket =
            za.alpha - zb.alpha + za.beta * (za.total + pin) - zb.beta * (zb.total - pin);
        if l > 0 {
            let mut row = self.row();
            row[zb.fuels[l - 1]] += 1.0;
            row[za.fuels[k]] -= 1.0;
            row[self.demand_a()] += za.beta;
            row[self.demand_b()] += za.beta;
            cons.push(row, f64::NEG_INFINITY, bracket);
        }
        let mut row = self.row();
        row[zb.fuels[l]] += 1.0;
        row[za.fuels[k]] -= 1.0;
        row[self.demand_a()] += za.beta;
        row[self.demand_b()] += za.beta;
        cons.push(row, bracket, f64::INFINITY);
        self.merit_rows(&mut cons);
        let common = Tilt {
            lambda: {
                let mut lam = self.row();
                lam[za.fuels[k]] = 1.0;
                lam[self.demand_a()] = -za.beta;
                lam[self.demand_b()] = -za.beta;
                lam
            },
            eta: za.alpha + za.beta * (za.total + pin),
        };
        let legs = EventLegs {
            leg_a: common.clone(),
            leg_b: common,
        };
        (cons, legs)
    }

    /// Interior coupled flow: the price-equality flow, expressed in the
    /// state through `gamma * g`, must respect the flow bounds and both
    /// marginality boxes (gamma = beta_A + beta_B < 0 flips the bounds).
    fn interior(&self, k: usize, l: usize) -> (LinearConstraints, EventLegs) {
        let (za, zb) = (&self.zone_a, &self.zone_b);
        let gamma = za.beta + zb.beta;
        let kappa = za.alpha - zb.alpha + za.beta * za.total - zb.beta * zb.total;
        let mut cons = LinearConstraints::empty();
        // gamma * g = fuel log ratio + kappa - beta_A D_A + beta_B D_B.
        let mut row = self.row();
        row[za.fuels[k]] += 1.0;
        row[zb.fuels[l]] -= 1.0;
        row[self.demand_a()] += -za.beta;
        row[self.demand_b()] += zb.beta;
        cons.push(row, gamma * self.flow_max - kappa, gamma * self.flow_min - kappa);
        // gamma * (D_A + g) within gamma * [lower_k, upper_k], flipped.
        let mut row = self.row();
        row[za.fuels[k]] += 1.0;
        row[zb.fuels[l]] -= 1.0;
        row[self.demand_a()] += zb.beta;
        row[self.demand_b()] += zb.beta;
        cons.push(
            row,
            gamma * za.upper_edge(k) - kappa,
            gamma * za.lower_edge(k) - kappa,
        );
        // gamma * (D_B - g) within gamma * [lower_l, upper_l], flipped.
        let mut row = self.row();
        row[zb.fuels[l]] += 1.0;
        row[za.fuels[k]] -= 1.0;
        row[self.demand_a()] += za.beta;
        row[self.demand_b()] += za.beta;
        cons.push(
            row,
            gamma * zb.upper_edge(l) + kappa,
            gamma * zb.lower_edge(l) + kappa,
        );
        self.merit_rows(&mut cons);
        let common = Tilt {
            lambda: {
                let mut lam = self.row();
                lam[za.fuels[k]] += zb.beta / gamma;
                lam[zb.fuels[l]] += za.beta / gamma;
                lam[self.demand_a()] = -za.beta * zb.beta / gamma;
                lam[self.demand_b()] = -za.beta * zb.beta / gamma;
                lam
            },
            eta: (zb.beta * za.alpha + za.beta * zb.alpha
                + za.beta * zb.beta * (za.total + zb.total))
                / gamma,
        };
        let legs = EventLegs {
            leg_a: common.clone(),
            leg_b: common,
        };
        (cons, legs)
    }
}

fn mix_seed(a: u64, b: u64, c: u64) -> u64 {
    let mut z = a
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(b.wrapping_mul(0xbf58_476d_1ce4_e5b9))
        .wrapping_add(c.wrapping_mul(0x94d0_49bb_1331_11eb));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

struct PreparedEvent {
    key: EventKey,
    constraints: LinearConstraints,
    legs: EventLegs,
}

/// Shared pricing engine for one (scenario, maturity): enumerates and builds
/// every event once, then evaluates whichever terms a pricer needs. Terms
/// are integrated in parallel but reduced in enumeration order, and each term
/// derives its quadrature seed from the scenario seed and its own index, so
/// results do not depend on thread scheduling.
pub struct PartitionPricer<'a> {
    scenario: &'a ScenarioSpec,
    maturity: f64,
    law: GaussianLaw,
    events: Vec<PreparedEvent>,
    base: QuadratureOptions,
}

#[derive(Debug, Clone, Copy)]
struct TermValue {
    value: f64,
    error: f64,
}

impl<'a> PartitionPricer<'a> {
    pub fn new(scenario: &'a ScenarioSpec, maturity: f64) -> Result<Self> {
        let state = scenario.initial_state();
        let law = conditional_law(&state, maturity, scenario)?;
        let keys = enumerate_events(scenario)?;
        let events = keys
            .into_iter()
            .map(|key| {
                let zone_a = ZoneAtMaturity::build(&scenario.market_a, &key.global_order, maturity);
                let zone_b = ZoneAtMaturity::build(&scenario.market_b, &key.global_order, maturity);
                let builder = EventBuilder {
                    dim: scenario.state_dim(),
                    n_fuels: scenario.n_fuels(),
                    zone_a,
                    zone_b,
                    flow_min: scenario.coupling.flow_min,
                    flow_max: scenario.coupling.flow_max,
                    global_order: &key.global_order,
                };
                let (constraints, legs) = builder.build(key.k, key.l, key.regime);
                PreparedEvent {
                    key,
                    constraints,
                    legs,
                }
            })
            .collect();
        Ok(PartitionPricer {
            scenario,
            maturity,
            law,
            events,
            base: QuadratureOptions::from_scenario(scenario, scenario.seed),
        })
    }

    pub fn maturity(&self) -> f64 {
        self.maturity
    }

    pub fn is_deterministic(&self) -> bool {
        self.law.is_point_mass()
    }

    /// Untilted probability of one event.
    fn probability(&self, idx: usize, strike_row: Option<(&Tilt, f64)>) -> Result<TermValue> {
        let ev = &self.events[idx];
        let opts = QuadratureOptions {
            seed: mix_seed(self.scenario.seed, idx as u64, 1),
            ..self.base
        };
        let cons = augment(&ev.constraints, strike_row);
        let p = constraint_probability(&self.law, &cons, &opts)?;
        Ok(TermValue {
            value: p.value,
            error: p.error,
        })
    }

    /// Tilted term `E[exp(lambda'V + eta) 1_event]`, optionally intersected
    /// with the strike half-space of the same leg.
    fn leg_term(&self, idx: usize, tilt: &Tilt, salt: u64, strike: Option<f64>) -> Result<TermValue> {
        let ev = &self.events[idx];
        let (factor, tilted) = exponential_tilt(&self.law, &tilt.lambda, tilt.eta)?;
        let opts = QuadratureOptions {
            seed: mix_seed(self.scenario.seed, idx as u64, salt),
            tolerance: self.base.tolerance / factor.max(1.0),
            ..self.base
        };
        let cons = augment(&ev.constraints, strike.map(|k| (tilt, k)));
        let p = constraint_probability(&tilted, &cons, &opts)?;
        Ok(TermValue {
            value: factor * p.value,
            error: factor * p.error,
        })
    }

    fn tilt_for(&self, idx: usize, market: MarketId) -> &Tilt {
        let ev = &self.events[idx];
        match market {
            MarketId::A => &ev.legs.leg_a,
            MarketId::B => &ev.legs.leg_b,
        }
    }

    /// Forward price of one market: the expectation of its terminal spot.
    pub fn forward(&self, market: MarketId) -> Result<PriceDecomposition> {
        if self.is_deterministic() {
            return Ok(self.deterministic_price(|out| out.price(market)));
        }
        let indices: Vec<usize> = (0..self.events.len()).collect();
        let evals: Vec<Result<(TermValue, TermValue)>> = indices
            .par_iter()
            .map(|&i| {
                let tilt = self.tilt_for(i, market);
                let salt = match market {
                    MarketId::A => 2,
                    MarketId::B => 3,
                };
                Ok((self.leg_term(i, tilt, salt, None)?, self.probability(i, None)?))
            })
            .collect();
        self.assemble(evals)
    }

    /// Two-sided transmission-right value: the absolute price spread,
    /// supported on the saturated regimes only.
    pub fn transmission_right(&self) -> Result<PriceDecomposition> {
        if self.is_deterministic() {
            return Ok(self.deterministic_price(|out| (out.price_a - out.price_b).abs()));
        }
        let evals: Vec<Result<(TermValue, TermValue)>> = (0..self.events.len())
            .into_par_iter()
            .map(|i| {
                let regime = self.events[i].key.regime;
                let spread = match regime {
                    Regime::SaturatedAToB => {
                        let b = self.leg_term(i, &self.events[i].legs.leg_b, 3, None)?;
                        let a = self.leg_term(i, &self.events[i].legs.leg_a, 2, None)?;
                        TermValue {
                            value: b.value - a.value,
                            error: b.error.hypot(a.error),
                        }
                    }
                    Regime::SaturatedBToA => {
                        let a = self.leg_term(i, &self.events[i].legs.leg_a, 2, None)?;
                        let b = self.leg_term(i, &self.events[i].legs.leg_b, 3, None)?;
                        TermValue {
                            value: a.value - b.value,
                            error: a.error.hypot(b.error),
                        }
                    }
                    _ => TermValue {
                        value: 0.0,
                        error: 0.0,
                    },
                };
                let prob = if regime.is_coupled() {
                    TermValue { value: 0.0, error: 0.0 }
                } else {
                    self.probability(i, None)?
                };
                Ok((spread, prob))
            })
            .collect();
        self.assemble(evals)
    }

    /// One-sided transmission right: only the named exporting direction pays.
    pub fn transmission_right_one_sided(&self, direction: MarketId) -> Result<PriceDecomposition> {
        if self.is_deterministic() {
            return Ok(self.deterministic_price(|out| match direction {
                MarketId::A => (out.price_b - out.price_a).max(0.0),
                MarketId::B => (out.price_a - out.price_b).max(0.0),
            }));
        }
        let paying = match direction {
            MarketId::A => Regime::SaturatedAToB,
            MarketId::B => Regime::SaturatedBToA,
        };
        let evals: Vec<Result<(TermValue, TermValue)>> = (0..self.events.len())
            .into_par_iter()
            .map(|i| {
                if self.events[i].key.regime != paying {
                    return Ok((TermValue { value: 0.0, error: 0.0 }, TermValue { value: 0.0, error: 0.0 }));
                }
                let a = self.leg_term(i, &self.events[i].legs.leg_a, 2, None)?;
                let b = self.leg_term(i, &self.events[i].legs.leg_b, 3, None)?;
                let spread = match direction {
                    MarketId::A => TermValue { value: b.value - a.value, error: a.error.hypot(b.error) },
                    MarketId::B => TermValue { value: a.value - b.value, error: a.error.hypot(b.error) },
                };
                Ok((spread, self.probability(i, None)?))
            })
            .collect();
        self.assemble(evals)
    }

    /// European call on one market's spot: per event the price leg minus the
    /// strike, restricted to the leg exceeding the strike.
    pub fn call(&self, market: MarketId, strike: f64) -> Result<PriceDecomposition> {
        if strike < 0.0 {
            return Err(Error::InvalidInput(format!(
                "strike must be nonnegative, got {strike}"
            )));
        }
        if self.is_deterministic() {
            return Ok(self.deterministic_price(|out| (out.price(market) - strike).max(0.0)));
        }
        let strike_opt = if strike > 0.0 { Some(strike) } else { None };
        let evals: Vec<Result<(TermValue, TermValue)>> = (0..self.events.len())
            .into_par_iter()
            .map(|i| {
                let tilt = self.tilt_for(i, market);
                let salt = match market {
                    MarketId::A => 4,
                    MarketId::B => 5,
                };
                let term = self.leg_term(i, tilt, salt, strike_opt)?;
                let prob = self.probability(i, strike_opt.map(|s| (tilt, s)))?;
                Ok((
                    TermValue {
                        value: term.value - strike * prob.value,
                        error: term.error.hypot(strike * prob.error),
                    },
                    prob,
                ))
            })
            .collect();
        self.assemble(evals)
    }

    /// Probability that the two spot prices coincide: total mass of the
    /// coupled regimes.
    pub fn coupling_rate(&self) -> Result<ProbabilityEstimate> {
        if self.is_deterministic() {
            let out = spot_prices(&self.mean_state(), self.scenario);
            return Ok(ProbabilityEstimate::certain(
                out.regime().is_coupled() as u8 as f64,
            ));
        }
        let evals: Vec<Result<TermValue>> = (0..self.events.len())
            .into_par_iter()
            .map(|i| {
                if self.events[i].key.regime.is_coupled() {
                    self.probability(i, None)
                } else {
                    Ok(TermValue { value: 0.0, error: 0.0 })
                }
            })
            .collect();
        let mut value = 0.0;
        let mut err_sq = 0.0;
        let mut points = 0u64;
        for e in evals {
            let e = e?;
            value += e.value;
            err_sq += e.error * e.error;
            points += 1;
        }
        Ok(ProbabilityEstimate {
            value: value.clamp(0.0, 1.0),
            error: err_sq.sqrt(),
            samples_or_points: points,
        })
    }

    /// Sum of the untilted probabilities of every enumerated event; should be
    /// 1 up to quadrature error when the partition is sound.
    pub fn partition_closure(&self) -> Result<ProbabilityEstimate> {
        if self.is_deterministic() {
            return Ok(ProbabilityEstimate::certain(1.0));
        }
        let evals: Vec<Result<TermValue>> = (0..self.events.len())
            .into_par_iter()
            .map(|i| self.probability(i, None))
            .collect();
        let mut value = 0.0;
        let mut err_sq = 0.0;
        for e in evals {
            let e = e?;
            value += e.value;
            err_sq += e.error * e.error;
        }
        Ok(ProbabilityEstimate {
            value,
            error: err_sq.sqrt(),
            samples_or_points: self.events.len() as u64,
        })
    }

    fn mean_state(&self) -> crate::model::StateVector {
        crate::model::StateVector::from_vec(self.law.mean(), self.maturity)
    }

    fn deterministic_price(
        &self,
        payoff: impl Fn(&crate::coupling::SpotOutcome) -> f64,
    ) -> PriceDecomposition {
        let state = self.mean_state();
        let out = spot_prices(&state, self.scenario);
        let value = payoff(&out);
        PriceDecomposition {
            total: value,
            per_event: vec![(out.key, value, 1.0)],
            quadrature_error: 0.0,
        }
    }

    fn assemble(
        &self,
        evals: Vec<Result<(TermValue, TermValue)>>,
    ) -> Result<PriceDecomposition> {
        let mut total = 0.0;
        let mut err_sq = 0.0;
        let mut per_event = Vec::new();
        for (i, ev) in evals.into_iter().enumerate() {
            let (term, prob) = ev?;
            total += term.value;
            err_sq += term.error * term.error;
            if term.value != 0.0 || prob.value != 0.0 {
                per_event.push((self.events[i].key.clone(), term.value, prob.value));
            }
        }
        Ok(PriceDecomposition {
            total,
            per_event,
            quadrature_error: err_sq.sqrt(),
        })
    }
}

fn augment(cons: &LinearConstraints, strike: Option<(&Tilt, f64)>) -> LinearConstraints {
    match strike {
        None => cons.clone(),
        Some((tilt, k)) => {
            let mut out = cons.clone();
            out.push(tilt.lambda.clone(), k.ln() - tilt.eta, f64::INFINITY);
            out
        }
    }
}

impl crate::coupling::SpotOutcome {
    pub fn price(&self, market: MarketId) -> f64 {
        match market {
            MarketId::A => self.price_a,
            MarketId::B => self.price_b,
        }
    }
}

/// Forward price of `market` at `maturity`, decomposed over the partition.
/// The conditioning time is the scenario's valuation time.
pub fn forward_price(
    market: MarketId,
    scenario: &ScenarioSpec,
    maturity: f64,
) -> Result<PriceDecomposition> {
    PartitionPricer::new(scenario, maturity)?.forward(market)
}

/// Value of the two-sided transmission right (both exporting directions).
pub fn transmission_right_value(scenario: &ScenarioSpec, maturity: f64) -> Result<PriceDecomposition> {
    PartitionPricer::new(scenario, maturity)?.transmission_right()
}

/// European call on one market's terminal spot.
pub fn call_value(
    market: MarketId,
    strike: f64,
    scenario: &ScenarioSpec,
    maturity: f64,
) -> Result<PriceDecomposition> {
    PartitionPricer::new(scenario, maturity)?.call(market, strike)
}

/// Probability that the terminal spot prices coincide.
pub fn coupling_rate(scenario: &ScenarioSpec, maturity: f64) -> Result<ProbabilityEstimate> {
    PartitionPricer::new(scenario, maturity)?.coupling_rate()
}

/// Exchange-option value of the transmission right under joint lognormal
/// spot dynamics with moment-matched volatilities and correlation: the sum of
/// the two directional exchange options.
pub fn margrabe_value(
    scenario: &ScenarioSpec,
    maturity: f64,
    moments: &SpotLogMoments,
) -> Result<f64> {
    let tau = maturity - scenario.valuation_time;
    if tau < 0.0 {
        return Err(Error::InvalidInput(
            "maturity precedes the valuation time".into(),
        ));
    }
    if !(moments.forward_a > 0.0 && moments.forward_b > 0.0) {
        return Err(Error::InvalidInput(
            "Margrabe valuation needs positive forwards".into(),
        ));
    }
    if moments.vol_a < 0.0 || moments.vol_b < 0.0 {
        return Err(Error::InvalidInput("volatilities must be nonnegative".into()));
    }
    if !(-1.0..=1.0).contains(&moments.correlation) {
        return Err(Error::InvalidInput(format!(
            "correlation {} outside [-1, 1]",
            moments.correlation
        )));
    }
    let var = moments.vol_a * moments.vol_a + moments.vol_b * moments.vol_b
        - 2.0 * moments.correlation * moments.vol_a * moments.vol_b;
    let sig = var.max(0.0).sqrt() * tau.sqrt();
    let leg = |fx: f64, fy: f64| -> f64 {
        if sig == 0.0 {
            return (fx - fy).max(0.0);
        }
        let d1 = ((fx / fy).ln() + 0.5 * sig * sig) / sig;
        let d2 = d1 - sig;
        fx * norm::cdf(d1) - fy * norm::cdf(d2)
    };
    Ok(leg(moments.forward_b, moments.forward_a) + leg(moments.forward_a, moments.forward_b))
}
