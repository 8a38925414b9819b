//! Interconnection flow optimization and spot price formation.
//!
//! Given a realized state, the coupled flow minimizes the absolute price
//! spread between the two zones subject to the flow bounds. The outcome is
//! classified into five regimes: saturated export in either direction, the
//! coupled flow landing on a price discontinuity of either offer curve, or a
//! coupled interior solution where the two offer prices match exactly.
//!
//! The log price spread is piecewise linear and nondecreasing in the flow
//! (both offer curves are monotone), so the optimum is located by walking the
//! discontinuities of both stacks between zero flow and the active bound.

use serde::{Deserialize, Serialize};

use crate::model::{
    global_cost_order, merit_order, MeritOrder, OfferStack, ScenarioSpec, StateVector,
};

/// Outcome regime of the flow optimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// Flow pinned at the upper bound; A exports, prices stay apart.
    SaturatedAToB,
    /// Flow pinned at the lower bound; B exports, prices stay apart.
    SaturatedBToA,
    /// Coupled, flow lands on a discontinuity of market A's offer curve.
    CoupledDiscA,
    /// Coupled, flow lands on a discontinuity of market B's offer curve.
    CoupledDiscB,
    /// Coupled, interior segment; both offer prices are equal.
    CoupledInterior,
}

impl Regime {
    pub const ALL: [Regime; 5] = [
        Regime::SaturatedAToB,
        Regime::SaturatedBToA,
        Regime::CoupledDiscA,
        Regime::CoupledDiscB,
        Regime::CoupledInterior,
    ];

    /// True for the three coupled regimes where the zonal prices coincide.
    pub fn is_coupled(self) -> bool {
        matches!(
            self,
            Regime::CoupledDiscA | Regime::CoupledDiscB | Regime::CoupledInterior
        )
    }

    pub fn label(self) -> &'static str {
        match self {
            Regime::SaturatedAToB => "saturated_a_to_b",
            Regime::SaturatedBToA => "saturated_b_to_a",
            Regime::CoupledDiscA => "coupled_disc_a",
            Regime::CoupledDiscB => "coupled_disc_b",
            Regime::CoupledInterior => "coupled_interior",
        }
    }
}

/// One cell of the pricing partition: global cost ordering, induced zone
/// merit orders, the marginal rank in each zone, and the regime.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventKey {
    /// Global fuel indices in ascending-cost order.
    pub global_order: Vec<usize>,
    /// Zone merit orders induced by (or realized with) `global_order`.
    pub merit: MeritOrder,
    /// Marginal rank in market A (0-based position in `merit.perm_a`).
    pub k: usize,
    /// Marginal rank in market B.
    pub l: usize,
    pub regime: Regime,
}

/// Realized flow, regime, marginal technologies and spot prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotOutcome {
    /// Optimal commercial flow, MW (positive = A exports to B).
    pub flow: f64,
    pub key: EventKey,
    pub price_a: f64,
    pub price_b: f64,
}

impl SpotOutcome {
    pub fn regime(&self) -> Regime {
        self.key.regime
    }
}

enum BreakpointOwner {
    A,
    B,
}

struct WalkBreakpoint {
    flow: f64,
    owner: BreakpointOwner,
    below: usize,
    above: usize,
}

struct Solver<'a> {
    stack_a: OfferStack,
    stack_b: OfferStack,
    demand_a: f64,
    demand_b: f64,
    flow_min: f64,
    flow_max: f64,
    state: &'a StateVector,
    scenario: &'a ScenarioSpec,
}

impl<'a> Solver<'a> {
    fn new(state: &'a StateVector, scenario: &'a ScenarioSpec) -> Self {
        let t = state.time;
        Solver {
            stack_a: OfferStack::build(&scenario.market_a, state, t),
            stack_b: OfferStack::build(&scenario.market_b, state, t),
            demand_a: state.demand_a,
            demand_b: state.demand_b,
            flow_min: scenario.coupling.flow_min,
            flow_max: scenario.coupling.flow_max,
            state,
            scenario,
        }
    }

    /// Log price spread `log P_A(D_A + e) - log P_B(D_B - e)` with explicit
    /// marginal ranks.
    fn spread(&self, rank_a: usize, rank_b: usize, e: f64) -> f64 {
        self.stack_a.log_price_of_rank(rank_a, self.demand_a + e)
            - self.stack_b.log_price_of_rank(rank_b, self.demand_b - e)
    }

    fn ranks_at(&self, e: f64) -> (usize, usize) {
        (
            self.stack_a.marginal_rank(self.demand_a + e),
            self.stack_b.marginal_rank(self.demand_b - e),
        )
    }

    /// Interior coupled flow where the two marginal prices match, for fixed
    /// marginal ranks.
    fn interior_flow(&self, rank_a: usize, rank_b: usize) -> f64 {
        let gamma = self.stack_a.beta + self.stack_b.beta;
        let num = self.stack_a.log_costs[rank_a] - self.stack_b.log_costs[rank_b]
            + self.stack_a.alpha
            - self.stack_b.alpha
            + self.stack_a.beta * (self.stack_a.total_capacity - self.demand_a)
            - self.stack_b.beta * (self.stack_b.total_capacity - self.demand_b);
        num / gamma
    }

    /// Breakpoints of the spread within `(lo, hi]` of flow space, ascending.
    /// A-breakpoints sort before coincident B-breakpoints.
    fn breakpoints_within(&self, lo: f64, hi: f64) -> Vec<WalkBreakpoint> {
        let mut out = Vec::new();
        for bp in self.stack_a.breakpoints() {
            let e = bp.demand - self.demand_a;
            if e > lo && e <= hi {
                out.push(WalkBreakpoint {
                    flow: e,
                    owner: BreakpointOwner::A,
                    below: bp.below,
                    above: bp.above,
                });
            }
        }
        for bp in self.stack_b.breakpoints() {
            let e = self.demand_b - bp.demand;
            if e > lo && e <= hi {
                out.push(WalkBreakpoint {
                    flow: e,
                    owner: BreakpointOwner::B,
                    below: bp.below,
                    above: bp.above,
                });
            }
        }
        out.sort_by(|x, y| {
            x.flow.total_cmp(&y.flow).then_with(|| {
                let xa = matches!(x.owner, BreakpointOwner::A);
                let ya = matches!(y.owner, BreakpointOwner::A);
                ya.cmp(&xa) // A first
            })
        });
        out
    }

    /// Same, descending within `[lo, hi)`.
    fn breakpoints_within_desc(&self, lo: f64, hi: f64) -> Vec<WalkBreakpoint> {
        let mut out = self.breakpoints_within(lo - 0.0, hi);
        out.retain(|b| b.flow >= lo && b.flow < hi);
        out.reverse();
        out
    }

    fn outcome(&self, regime: Regime, flow: f64, k: usize, l: usize) -> SpotOutcome {
        let merit = merit_order(self.state, self.scenario);
        let key = EventKey {
            global_order: global_cost_order(self.state),
            merit,
            k,
            l,
            regime,
        };
        let d_a = self.demand_a + flow;
        let d_b = self.demand_b - flow;
        let (price_a, price_b) = match regime {
            Regime::SaturatedAToB | Regime::SaturatedBToA => (
                self.stack_a.log_price_of_rank(k, d_a).exp(),
                self.stack_b.log_price_of_rank(l, d_b).exp(),
            ),
            // The common price is set by the side whose curve is continuous at
            // the landing point; on the interior both sides agree.
            Regime::CoupledDiscA => {
                let common = self.stack_b.log_price_of_rank(l, d_b).exp();
                (common, common)
            }
            Regime::CoupledDiscB | Regime::CoupledInterior => {
                let common = self.stack_a.log_price_of_rank(k, d_a).exp();
                (common, common)
            }
        };
        SpotOutcome {
            flow,
            key,
            price_a,
            price_b,
        }
    }

    fn solve(&self) -> SpotOutcome {
        let (k0, l0) = self.ranks_at(0.0);
        if self.spread(k0, l0, 0.0) <= 0.0 {
            self.solve_upward()
        } else {
            self.solve_downward()
        }
    }

    /// A exports: the flow rises from zero until the bound saturates (A1) or
    /// the spread crosses zero.
    fn solve_upward(&self) -> SpotOutcome {
        let e_max = self.flow_max;
        let (ke, le) = self.ranks_at(e_max);
        if self.spread(ke, le, e_max) <= 0.0 {
            return self.outcome(Regime::SaturatedAToB, e_max, ke, le);
        }
        let mut lo = 0.0;
        for bp in self.breakpoints_within(0.0, e_max) {
            let (k, l) = self.ranks_at(0.5 * (lo + bp.flow));
            // Spread approaching the breakpoint from the left.
            if self.spread(k, l, bp.flow) >= 0.0 {
                let e = self.interior_flow(k, l).clamp(lo, bp.flow);
                return self.outcome(Regime::CoupledInterior, e, k, l);
            }
            // Spread just past the jump.
            match bp.owner {
                BreakpointOwner::A => {
                    if self.spread(bp.above, l, bp.flow) >= 0.0 {
                        let l_at = self.stack_b.marginal_rank(self.demand_b - bp.flow);
                        return self.outcome(Regime::CoupledDiscA, bp.flow, bp.above, l_at);
                    }
                }
                BreakpointOwner::B => {
                    if self.spread(k, bp.below, bp.flow) >= 0.0 {
                        let k_at = self.stack_a.marginal_rank(self.demand_a + bp.flow);
                        return self.outcome(Regime::CoupledDiscB, bp.flow, k_at, bp.above);
                    }
                }
            }
            lo = bp.flow;
        }
        // No stall: the crossing sits in the last segment.
        let (k, l) = self.ranks_at(0.5 * (lo + e_max));
        let e = self.interior_flow(k, l).clamp(lo, e_max);
        self.outcome(Regime::CoupledInterior, e, k, l)
    }

    /// B exports: the flow falls from zero until the bound saturates (A2) or
    /// the spread crosses zero.
    fn solve_downward(&self) -> SpotOutcome {
        let e_min = self.flow_min;
        let (ke, le) = self.ranks_at(e_min);
        if self.spread(ke, le, e_min) >= 0.0 {
            return self.outcome(Regime::SaturatedBToA, e_min, ke, le);
        }
        let mut hi = 0.0;
        for bp in self.breakpoints_within_desc(e_min, 0.0) {
            let (k, l) = self.ranks_at(0.5 * (hi + bp.flow));
            // Spread approaching the breakpoint from the right; at an
            // A-breakpoint the half-open convention already yields the
            // right-segment rank at the point itself.
            let approach = match bp.owner {
                BreakpointOwner::A => self.spread(bp.above, l, bp.flow),
                BreakpointOwner::B => self.spread(k, bp.below, bp.flow),
            };
            if approach <= 0.0 {
                let e = self.interior_flow(k, l).clamp(bp.flow, hi);
                return self.outcome(Regime::CoupledInterior, e, k, l);
            }
            match bp.owner {
                BreakpointOwner::A => {
                    if self.spread(bp.below, l, bp.flow) <= 0.0 {
                        let l_at = self.stack_b.marginal_rank(self.demand_b - bp.flow);
                        return self.outcome(Regime::CoupledDiscA, bp.flow, bp.above, l_at);
                    }
                }
                BreakpointOwner::B => {
                    if self.spread(k, bp.above, bp.flow) <= 0.0 {
                        let k_at = self.stack_a.marginal_rank(self.demand_a + bp.flow);
                        return self.outcome(Regime::CoupledDiscB, bp.flow, k_at, bp.above);
                    }
                }
            }
            hi = bp.flow;
        }
        let (k, l) = self.ranks_at(0.5 * (hi + e_min));
        let e = self.interior_flow(k, l).clamp(e_min, hi);
        self.outcome(Regime::CoupledInterior, e, k, l)
    }
}

/// Full spot outcome (flow, regime, marginal pair, prices) for a realized
/// state at `state.time`.
pub fn spot_prices(state: &StateVector, scenario: &ScenarioSpec) -> SpotOutcome {
    Solver::new(state, scenario).solve()
}

/// The event cell containing the state. Boundary ties resolve in the fixed
/// priority A1 > A2 > disc-A > disc-B > interior.
pub fn classify(state: &StateVector, scenario: &ScenarioSpec) -> EventKey {
    spot_prices(state, scenario).key
}

/// The optimal commercial flow, MW.
pub fn optimal_flow(state: &StateVector, scenario: &ScenarioSpec) -> f64 {
    spot_prices(state, scenario).flow
}

/// Grid-scan oracle applying the flow definition literally: the extremal
/// grid flow keeping the exporting side's offer price on the cheap side of
/// the importer's. Agrees with [`optimal_flow`] to within one `grid_step`.
pub fn brute_force_flow(state: &StateVector, scenario: &ScenarioSpec, grid_step: f64) -> f64 {
    assert!(grid_step > 0.0, "grid_step must be positive");
    let t = state.time;
    let stack_a = OfferStack::build(&scenario.market_a, state, t);
    let stack_b = OfferStack::build(&scenario.market_b, state, t);
    let spread = |e: f64| {
        stack_a.log_price(state.demand_a + e).0 - stack_b.log_price(state.demand_b - e).0
    };
    let (e_min, e_max) = (scenario.coupling.flow_min, scenario.coupling.flow_max);
    let steps = ((e_max - e_min) / grid_step).ceil() as usize;
    let grid = |i: usize| (e_min + i as f64 * grid_step).min(e_max);
    if spread(0.0) <= 0.0 {
        // sup of the flows keeping P_A <= P_B.
        for i in (0..=steps).rev() {
            let e = grid(i);
            if spread(e) <= 0.0 {
                return e;
            }
        }
        e_min
    } else {
        // inf of the flows keeping P_A >= P_B.
        for i in 0..=steps {
            let e = grid(i);
            if spread(e) >= 0.0 {
                return e;
            }
        }
        e_max
    }
}
