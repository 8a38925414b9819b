//! Independent verification of the coupling partition.
//!
//! The cell evaluators here re-state each regime's defining inequalities
//! directly in terms of offer-stack prices, on purpose *not* reusing the
//! solver's walk, so they can serve as an oracle for it: for a classified
//! outcome the matching cell must hold, every sibling cell must fail, and the
//! realized flow must equal the regime's closed form.
//!
//! Demand outside `[0, total capacity]` follows the stack extrapolation (the
//! extreme technologies stay marginal), so interval membership at the stack
//! ends is checked in that extended sense; strict interior edges are exact.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::coupling::{spot_prices, Regime, SpotOutcome};
use crate::error::{Error, Result};
use crate::model::{seasonal_demand_mean, OfferStack, ScenarioSpec, StateVector};

/// Verdict of one cell's inequality system at a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellStatus {
    Holds,
    /// Within numerical tolerance of an inequality boundary.
    Boundary,
    Fails,
}

/// One candidate cell with its implied flow and marginal pair.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub regime: Regime,
    pub k: usize,
    pub l: usize,
    pub flow: f64,
    pub status: CellStatus,
}

const LOG_EPS: f64 = 1e-10;

struct CellContext {
    stack_a: OfferStack,
    stack_b: OfferStack,
    demand_a: f64,
    demand_b: f64,
    flow_min: f64,
    flow_max: f64,
    mw_eps: f64,
}

impl CellContext {
    fn new(state: &StateVector, scenario: &ScenarioSpec) -> Self {
        let t = state.time;
        let stack_a = OfferStack::build(&scenario.market_a, state, t);
        let stack_b = OfferStack::build(&scenario.market_b, state, t);
        let mw_eps = 1e-9 * (1.0 + stack_a.total_capacity + stack_b.total_capacity);
        CellContext {
            stack_a,
            stack_b,
            demand_a: state.demand_a,
            demand_b: state.demand_b,
            flow_min: scenario.coupling.flow_min,
            flow_max: scenario.coupling.flow_max,
            mw_eps,
        }
    }

    fn log_a(&self, rank: usize, flow: f64) -> f64 {
        self.stack_a.log_price_of_rank(rank, self.demand_a + flow)
    }

    fn log_b(&self, rank: usize, flow: f64) -> f64 {
        self.stack_b.log_price_of_rank(rank, self.demand_b - flow)
    }

    /// Slack of `d` inside rank `r`'s interval, extended at the stack ends.
    fn containment_slack(&self, stack: &OfferStack, r: usize, d: f64) -> f64 {
        let first = (0..stack.n()).find(|&i| stack.width(i) > 0.0).unwrap_or(0);
        let last = (0..stack.n()).rev().find(|&i| stack.width(i) > 0.0).unwrap_or(0);
        let lo_slack = if r == first { f64::INFINITY } else { d - stack.lower_edge(r) };
        let hi_slack = if r == last { f64::INFINITY } else { stack.cum[r] - d };
        lo_slack.min(hi_slack)
    }

    fn status_from_slacks(&self, log_slacks: &[f64], mw_slacks: &[f64]) -> CellStatus {
        let mut boundary = false;
        for &s in log_slacks {
            if s < -LOG_EPS {
                return CellStatus::Fails;
            }
            if s <= LOG_EPS {
                boundary = true;
            }
        }
        for &s in mw_slacks {
            if s < -self.mw_eps {
                return CellStatus::Fails;
            }
            if s <= self.mw_eps {
                boundary = true;
            }
        }
        if boundary {
            CellStatus::Boundary
        } else {
            CellStatus::Holds
        }
    }

    /// Highest positive-width rank strictly below `r` with a strictly lower
    /// cost, i.e. the technology on the cheap side of a genuine jump.
    fn jump_partner(stack: &OfferStack, r: usize) -> Option<usize> {
        (0..r)
            .rev()
            .find(|&p| stack.width(p) > 0.0 && stack.log_costs[p] < stack.log_costs[r])
    }

    fn cell_saturated(&self, regime: Regime) -> CellOutcome {
        let flow = match regime {
            Regime::SaturatedAToB => self.flow_max,
            _ => self.flow_min,
        };
        let k = self.stack_a.marginal_rank(self.demand_a + flow);
        let l = self.stack_b.marginal_rank(self.demand_b - flow);
        let price_gap = match regime {
            Regime::SaturatedAToB => self.log_b(l, flow) - self.log_a(k, flow),
            _ => self.log_a(k, flow) - self.log_b(l, flow),
        };
        let mw = [
            self.containment_slack(&self.stack_a, k, self.demand_a + flow),
            self.containment_slack(&self.stack_b, l, self.demand_b - flow),
        ];
        CellOutcome {
            regime,
            k,
            l,
            flow,
            status: self.status_from_slacks(&[price_gap], &mw),
        }
    }

    fn cell_disc_a(&self, k: usize) -> CellOutcome {
        let fails = |flow: f64, l: usize| CellOutcome {
            regime: Regime::CoupledDiscA,
            k,
            l,
            flow,
            status: CellStatus::Fails,
        };
        if self.stack_a.width(k) <= 0.0 {
            return fails(f64::NAN, 0);
        }
        let Some(prev) = Self::jump_partner(&self.stack_a, k) else {
            // No jump below this rank: the extended curve is continuous there.
            return fails(f64::NAN, 0);
        };
        let g = self.stack_a.lower_edge(k) - self.demand_a;
        let l = self.stack_b.marginal_rank(self.demand_b - g);
        let cheap_below = self.log_b(l, g) - self.log_a(prev, g);
        let dear_above = self.log_a(k, g) - self.log_b(l, g);
        let mw = [
            g - self.flow_min,
            self.flow_max - g,
            self.containment_slack(&self.stack_b, l, self.demand_b - g),
        ];
        CellOutcome {
            regime: Regime::CoupledDiscA,
            k,
            l,
            flow: g,
            status: self.status_from_slacks(&[cheap_below, dear_above], &mw),
        }
    }

    fn cell_disc_b(&self, l: usize) -> CellOutcome {
        let fails = |flow: f64, k: usize| CellOutcome {
            regime: Regime::CoupledDiscB,
            k,
            l,
            flow,
            status: CellStatus::Fails,
        };
        if self.stack_b.width(l) <= 0.0 {
            return fails(f64::NAN, 0);
        }
        let Some(prev) = Self::jump_partner(&self.stack_b, l) else {
            return fails(f64::NAN, 0);
        };
        let g = self.demand_b - self.stack_b.lower_edge(l);
        let k = self.stack_a.marginal_rank(self.demand_a + g);
        let cheap_below = self.log_a(k, g) - self.log_b(prev, g);
        let dear_above = self.log_b(l, g) - self.log_a(k, g);
        let mw = [
            g - self.flow_min,
            self.flow_max - g,
            self.containment_slack(&self.stack_a, k, self.demand_a + g),
        ];
        CellOutcome {
            regime: Regime::CoupledDiscB,
            k,
            l,
            flow: g,
            status: self.status_from_slacks(&[cheap_below, dear_above], &mw),
        }
    }

    fn cell_interior(&self, k: usize, l: usize) -> CellOutcome {
        if self.stack_a.width(k) <= 0.0 || self.stack_b.width(l) <= 0.0 {
            return CellOutcome {
                regime: Regime::CoupledInterior,
                k,
                l,
                flow: f64::NAN,
                status: CellStatus::Fails,
            };
        }
        let gamma = self.stack_a.beta + self.stack_b.beta;
        let g = (self.stack_a.log_costs[k] - self.stack_b.log_costs[l] + self.stack_a.alpha
            - self.stack_b.alpha
            + self.stack_a.beta * (self.stack_a.total_capacity - self.demand_a)
            - self.stack_b.beta * (self.stack_b.total_capacity - self.demand_b))
            / gamma;
        let mw = [
            g - self.flow_min,
            self.flow_max - g,
            self.containment_slack(&self.stack_a, k, self.demand_a + g),
            self.containment_slack(&self.stack_b, l, self.demand_b - g),
        ];
        CellOutcome {
            regime: Regime::CoupledInterior,
            k,
            l,
            flow: g,
            status: self.status_from_slacks(&[], &mw),
        }
    }

    fn all_cells(&self) -> Vec<CellOutcome> {
        let mut cells = vec![
            self.cell_saturated(Regime::SaturatedAToB),
            self.cell_saturated(Regime::SaturatedBToA),
        ];
        for k in 0..self.stack_a.n() {
            cells.push(self.cell_disc_a(k));
        }
        for l in 0..self.stack_b.n() {
            cells.push(self.cell_disc_b(l));
        }
        for k in 0..self.stack_a.n() {
            for l in 0..self.stack_b.n() {
                cells.push(self.cell_interior(k, l));
            }
        }
        cells
    }
}

fn flow_matches(found: f64, implied: f64) -> bool {
    (found - implied).abs() <= 1e-9 * (1.0 + implied.abs())
}

/// Checks that the defining inequalities of `outcome`'s cell hold at `state`
/// and that the realized flow equals the cell's closed form.
pub fn verify_event_inequalities(
    state: &StateVector,
    scenario: &ScenarioSpec,
    outcome: &SpotOutcome,
) -> Result<()> {
    let ctx = CellContext::new(state, scenario);
    let cell = match outcome.regime() {
        Regime::SaturatedAToB => ctx.cell_saturated(Regime::SaturatedAToB),
        Regime::SaturatedBToA => ctx.cell_saturated(Regime::SaturatedBToA),
        Regime::CoupledDiscA => ctx.cell_disc_a(outcome.key.k),
        Regime::CoupledDiscB => ctx.cell_disc_b(outcome.key.l),
        Regime::CoupledInterior => ctx.cell_interior(outcome.key.k, outcome.key.l),
    };
    if cell.status == CellStatus::Fails {
        return Err(Error::Numerics(format!(
            "classified cell {:?} (k={}, l={}) fails its inequalities",
            outcome.regime(),
            outcome.key.k,
            outcome.key.l
        )));
    }
    if cell.k != outcome.key.k || cell.l != outcome.key.l {
        return Err(Error::Numerics(format!(
            "classified marginal pair ({}, {}) disagrees with cell ({}, {})",
            outcome.key.k, outcome.key.l, cell.k, cell.l
        )));
    }
    if !flow_matches(outcome.flow, cell.flow) {
        return Err(Error::Numerics(format!(
            "flow {} disagrees with closed form {}",
            outcome.flow, cell.flow
        )));
    }
    Ok(())
}

/// Aggregate result of a partition soundness sweep.
#[derive(Debug, Clone, Default)]
pub struct PartitionStats {
    pub states: usize,
    /// States skipped because some cell sat on an inequality boundary.
    pub boundary_ties: usize,
    pub regime_counts: [usize; 5],
    pub failures: Vec<String>,
}

impl PartitionStats {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Samples `n` wide-spread random states at time `t` and checks, for each,
/// that exactly one cell holds, that it is the classified one, and that the
/// flow matches the closed form. Sampling is deterministic in `seed`.
pub fn partition_soundness(
    scenario: &ScenarioSpec,
    t: f64,
    n: usize,
    seed: u64,
) -> PartitionStats {
    let mut stats = PartitionStats {
        states: n,
        ..Default::default()
    };
    let states = random_states(scenario, t, n, seed);
    for (idx, state) in states.iter().enumerate() {
        let out = spot_prices(state, scenario);
        let regime_idx = Regime::ALL
            .iter()
            .position(|&r| r == out.regime())
            .unwrap();
        stats.regime_counts[regime_idx] += 1;

        let ctx = CellContext::new(state, scenario);
        let cells = ctx.all_cells();
        if cells.iter().any(|c| c.status == CellStatus::Boundary) {
            stats.boundary_ties += 1;
            continue;
        }
        let holding: Vec<&CellOutcome> =
            cells.iter().filter(|c| c.status == CellStatus::Holds).collect();
        if holding.len() != 1 {
            if stats.failures.len() < 8 {
                stats.failures.push(format!(
                    "state {idx}: {} cells hold (expected exactly 1), classified {:?}",
                    holding.len(),
                    out.regime()
                ));
            }
            continue;
        }
        let cell = holding[0];
        if cell.regime != out.regime() || cell.k != out.key.k || cell.l != out.key.l {
            if stats.failures.len() < 8 {
                stats.failures.push(format!(
                    "state {idx}: classified {:?} (k={}, l={}) but cell {:?} (k={}, l={}) holds",
                    out.regime(),
                    out.key.k,
                    out.key.l,
                    cell.regime,
                    cell.k,
                    cell.l
                ));
            }
            continue;
        }
        if !flow_matches(out.flow, cell.flow) {
            if stats.failures.len() < 8 {
                stats.failures.push(format!(
                    "state {idx}: flow {} does not match closed form {}",
                    out.flow, cell.flow
                ));
            }
        }
    }
    stats
}

/// Wide-spread random states for partition stress tests: log costs around the
/// long-run means, demands around the seasonal means, both inflated well past
/// the model's own volatility so merit switches and all regimes occur.
pub fn random_states(scenario: &ScenarioSpec, t: f64, n: usize, seed: u64) -> Vec<StateVector> {
    let fa = seasonal_demand_mean(&scenario.market_a, t);
    let fb = seasonal_demand_mean(&scenario.market_b, t);
    let cap = scenario.market_a.total_capacity(t).max(scenario.market_b.total_capacity(t));
    let demand_sd = 0.05 * cap;
    (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let log_fuels = scenario
                .fuels
                .iter()
                .map(|f| f.long_run_log_mean + 0.35 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            StateVector {
                log_fuels,
                demand_a: fa + demand_sd * rng.sample::<f64, _>(StandardNormal),
                demand_b: fb + demand_sd * rng.sample::<f64, _>(StandardNormal),
                time: t,
            }
        })
        .collect()
}

/// A deliberately awkward variant of the base example: breakpoints sit next
/// to the demand means in both zones so every regime is exercised.
pub fn stress_scenario() -> ScenarioSpec {
    let mut s = crate::scenarios::table1_with(0.5, 0.01, 6.0);
    s.market_b.technologies[0].capacity_const = 44_000.0;
    s.market_b.technologies[1].capacity_const = 45_000.0;
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;

    #[test]
    fn partition_soundness_on_base_scenario() {
        let s = scenarios::table1();
        let stats = partition_soundness(&s, 1.0, 3_000, 1234);
        assert!(stats.passed(), "failures: {:?}", stats.failures);
        // The sweep must visit a coupled and a saturated regime at least.
        assert!(stats.regime_counts.iter().filter(|&&c| c > 0).count() >= 2);
    }

    #[test]
    fn partition_soundness_on_stress_scenario() {
        let s = stress_scenario();
        let stats = partition_soundness(&s, 1.0, 3_000, 77);
        assert!(stats.passed(), "failures: {:?}", stats.failures);
        // All five regimes should appear under the stress layout.
        assert!(
            stats.regime_counts.iter().all(|&c| c > 0),
            "regime counts {:?}",
            stats.regime_counts
        );
    }
}
