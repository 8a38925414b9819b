//! Built-in example scenarios: a two-market, two-technology-per-zone setup
//! with a cheap-baseload zone A and a mid-cost zone B, plus the four
//! uncertainty configurations used by the validation sweeps.
//!
//! Demand uncertainty is stated as the terminal demand variance (GW^2) at the
//! one-year reference horizon and fuel uncertainty as the terminal standard
//! deviation of the log cost; both are converted to Ornstein-Uhlenbeck
//! volatilities at mean-reversion speed 1/year.

use crate::model::{
    CouplingSpec, FuelSpec, MarketSpec, NumericsSpec, ScenarioSpec, TechnologySpec,
};

/// Reference horizon (years) at which terminal moments are stated.
pub const MOMENT_HORIZON: f64 = 1.0;
const MEAN_REVERSION: f64 = 1.0;

/// Ornstein-Uhlenbeck volatility that produces `target_sd` as the terminal
/// standard deviation over `tau` years at mean-reversion speed `a`.
pub fn ou_sigma_for_terminal_std(target_sd: f64, a: f64, tau: f64) -> f64 {
    if target_sd == 0.0 {
        return 0.0;
    }
    let factor = (1.0 - (-2.0 * a * tau).exp()) / (2.0 * a);
    target_sd / factor.sqrt()
}

fn fuel(name: &str, cost: f64, terminal_log_sd: f64) -> FuelSpec {
    FuelSpec {
        name: name.to_string(),
        initial_log_cost: cost.ln(),
        mean_reversion: MEAN_REVERSION,
        long_run_log_mean: cost.ln(),
        volatility: ou_sigma_for_terminal_std(terminal_log_sd, MEAN_REVERSION, MOMENT_HORIZON),
    }
}

fn flat_tech(fuel: usize, capacity_mw: f64) -> TechnologySpec {
    TechnologySpec {
        fuel,
        capacity_const: capacity_mw,
        capacity_cos: 0.0,
        capacity_sin: 0.0,
    }
}

fn market(
    techs: Vec<TechnologySpec>,
    alpha: f64,
    demand_mw: f64,
    terminal_demand_sd_mw: f64,
) -> MarketSpec {
    MarketSpec {
        technologies: techs,
        alpha,
        beta: -1e-5, // -0.01 per GW expressed per MW
        demand_const: demand_mw,
        demand_cos: 0.0,
        demand_sin: 0.0,
        demand_mean_reversion: MEAN_REVERSION,
        demand_vol: ou_sigma_for_terminal_std(terminal_demand_sd_mw, MEAN_REVERSION, MOMENT_HORIZON),
        initial_demand_dev: 0.0,
    }
}

/// Two-zone example with explicit uncertainty levels.
///
/// * `demand_variance_gw2` - terminal demand variance in GW^2 (same in both
///   zones).
/// * `fuel_terminal_log_sd` - terminal standard deviation of every log fuel
///   cost.
/// * `ntc_gw` - symmetric interconnection bound, so flows live in
///   `[-ntc, +ntc]`.
pub fn table1_with(demand_variance_gw2: f64, fuel_terminal_log_sd: f64, ntc_gw: f64) -> ScenarioSpec {
    let demand_sd_mw = demand_variance_gw2.sqrt() * 1_000.0;
    let fuels = vec![
        fuel("A1", 10.0, fuel_terminal_log_sd),
        fuel("A2", 40.0, fuel_terminal_log_sd),
        fuel("B1", 20.0, fuel_terminal_log_sd),
        fuel("B2", 35.0, fuel_terminal_log_sd),
    ];
    let market_a = market(
        vec![flat_tech(0, 48_000.0), flat_tech(1, 18_000.0)],
        0.56,
        50_000.0,
        demand_sd_mw,
    );
    let market_b = market(
        vec![flat_tech(2, 33_000.0), flat_tech(3, 56_000.0)],
        0.89,
        45_000.0,
        demand_sd_mw,
    );
    let dim = fuels.len() + 2;
    let mut correlation = vec![0.0; dim * dim];
    for i in 0..dim {
        correlation[i * dim + i] = 1.0;
    }
    ScenarioSpec {
        fuels,
        market_a,
        market_b,
        coupling: CouplingSpec {
            flow_min: -ntc_gw * 1_000.0,
            flow_max: ntc_gw * 1_000.0,
        },
        correlation,
        valuation_time: 0.0,
        seed: 20_170_421,
        numerics: NumericsSpec::default(),
    }
}

/// Base example: low demand variance (0.5 GW^2), low fuel volatility (1%
/// terminal log sd), 4 GW symmetric interconnection.
pub fn table1() -> ScenarioSpec {
    table1_with(0.5, 0.01, 4.0)
}

/// Uncertainty level of one driver family in the example sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Low,
    High,
}

impl Level {
    pub fn demand_variance_gw2(self) -> f64 {
        match self {
            Level::Low => 0.5,
            Level::High => 5.0,
        }
    }

    pub fn fuel_terminal_log_sd(self) -> f64 {
        match self {
            Level::Low => 0.01,
            Level::High => 0.10,
        }
    }
}

/// One of the four demand-variance x fuel-volatility configurations.
pub fn table1_config(demand: Level, fuel_vol: Level, ntc_gw: f64) -> ScenarioSpec {
    table1_with(
        demand.demand_variance_gw2(),
        fuel_vol.fuel_terminal_log_sd(),
        ntc_gw,
    )
}

/// All four (demand, fuel) uncertainty configurations with labels.
pub fn section4_configs(ntc_gw: f64) -> Vec<(&'static str, ScenarioSpec)> {
    vec![
        ("low_var_low_vol", table1_config(Level::Low, Level::Low, ntc_gw)),
        ("low_var_high_vol", table1_config(Level::Low, Level::High, ntc_gw)),
        ("high_var_low_vol", table1_config(Level::High, Level::Low, ntc_gw)),
        ("high_var_high_vol", table1_config(Level::High, Level::High, ntc_gw)),
    ]
}

/// Replaces the interconnection bounds with symmetric `[-ntc, +ntc]`.
pub fn with_symmetric_ntc(mut scenario: ScenarioSpec, ntc_gw: f64) -> ScenarioSpec {
    scenario.coupling.flow_min = -ntc_gw * 1_000.0;
    scenario.coupling.flow_max = ntc_gw * 1_000.0;
    scenario
}

/// Zeroes every volatility, making the terminal state deterministic.
pub fn with_zero_volatility(mut scenario: ScenarioSpec) -> ScenarioSpec {
    for f in &mut scenario.fuels {
        f.volatility = 0.0;
    }
    scenario.market_a.demand_vol = 0.0;
    scenario.market_b.demand_vol = 0.0;
    scenario
}
