//! Command-line interface: scenario loading, command dispatch, and CSV
//! emission. Numeric output is printed with nine significant digits and every
//! command is deterministic given the scenario and seed.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::checks;
use crate::coupling::spot_prices;
use crate::error::{Error, Result};
use crate::gaussian::conditional_law;
use crate::model::{MarketId, ScenarioSpec, StateVector};
use crate::montecarlo::{
    evaluate_spots, mc_price_from_spots, sample_terminal, spot_log_moments_from_spots, Payoff,
};
use crate::pricing::{margrabe_value, PartitionPricer};
use crate::scenario::load_scenario;

/// Structural spot and derivatives pricing for two coupled power markets.
#[derive(Debug, Parser)]
#[command(name = "interco", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Overrides the scenario seed (also settable through the SEED
    /// environment variable; the flag wins).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MarketArg {
    A,
    B,
}

impl From<MarketArg> for MarketId {
    fn from(m: MarketArg) -> MarketId {
        match m {
            MarketArg::A => MarketId::A,
            MarketArg::B => MarketId::B,
        }
    }
}

#[derive(Debug, Args)]
pub struct ScenarioArg {
    /// Path to the scenario JSON file.
    #[arg(long)]
    pub scenario: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Spot outcome at the mean terminal state.
    Spot {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// Terminal time in years; defaults to the valuation time.
        #[arg(long)]
        maturity: Option<f64>,
    },
    /// Forward price of one market.
    Forward {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long)]
        market: MarketArg,
        #[arg(long)]
        maturity: f64,
        /// Cross-check against a Monte Carlo estimate.
        #[arg(long)]
        mc: bool,
        /// Monte Carlo samples for --mc (defaults to the scenario setting).
        #[arg(long)]
        samples: Option<usize>,
    },
    /// European call on one market's spot.
    Call {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long)]
        market: MarketArg,
        /// Strike, EUR/MWh.
        #[arg(long)]
        strike: f64,
        #[arg(long)]
        maturity: f64,
    },
    /// Transmission right on the interconnector (both directions unless
    /// --direction picks the single exporting side).
    Ptr {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long)]
        maturity: f64,
        /// Value only the leg paying when this market exports.
        #[arg(long)]
        direction: Option<MarketArg>,
    },
    /// Probability that the two spot prices coincide at maturity.
    CouplingRate {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long)]
        maturity: f64,
    },
    /// Lognormal (exchange-option) approximation of the transmission right,
    /// with moments estimated from simulated spots.
    Margrabe {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long)]
        maturity: f64,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Sweep one coupling parameter and emit a CSV of prices per point.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// One of: coupling.ntc (symmetric bounds), coupling.flow_max,
        /// coupling.flow_min.
        #[arg(long)]
        param: String,
        /// Start value; plain numbers are MW, `GW`/`MW` suffixes accepted.
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
        #[arg(long)]
        step: String,
        #[arg(long)]
        maturity: f64,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Add Monte Carlo cross-check columns.
        #[arg(long)]
        mc: bool,
        /// Samples for the moment estimation and --mc columns.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Run the partition, oracle, and closure self-checks.
    Validate {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// Random states for the partition soundness sweep.
        #[arg(long, default_value_t = 100_000)]
        states: usize,
        /// Terminal time of the sampled states.
        #[arg(long, default_value_t = 1.0)]
        maturity: f64,
    },
    /// Simulate terminal states and emit their spot outcomes as CSV.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long)]
        maturity: f64,
        #[arg(long)]
        samples: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Nine significant digits, scientific.
fn fmt9(x: f64) -> String {
    format!("{x:.8e}")
}

/// Parses a power quantity into MW; accepts `GW`/`MW` suffixes, plain
/// numbers are MW.
fn parse_power_mw(text: &str) -> Result<f64> {
    let t = text.trim();
    let lower = t.to_ascii_lowercase();
    let (digits, scale) = if let Some(stripped) = lower.strip_suffix("gw") {
        (stripped, 1_000.0)
    } else if let Some(stripped) = lower.strip_suffix("mw") {
        (stripped, 1.0)
    } else {
        (lower.as_str(), 1.0)
    };
    digits
        .trim()
        .parse::<f64>()
        .map(|v| v * scale)
        .map_err(|_| Error::InvalidInput(format!("cannot parse power value `{text}`")))
}

fn load_with_seed(path: &PathBuf, seed_flag: Option<u64>) -> Result<ScenarioSpec> {
    let mut scenario = load_scenario(path)?;
    let env_seed = std::env::var("SEED")
        .ok()
        .and_then(|s| s.parse::<u64>().ok());
    if let Some(seed) = seed_flag.or(env_seed) {
        scenario.seed = seed;
    }
    Ok(scenario)
}

fn mean_state(scenario: &ScenarioSpec, maturity: f64) -> Result<StateVector> {
    let law = conditional_law(&scenario.initial_state(), maturity, scenario)?;
    Ok(StateVector::from_vec(law.mean(), maturity))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Spot { scenario, maturity } => {
            let spec = load_with_seed(&scenario.scenario, cli.seed)?;
            let maturity = maturity.unwrap_or(spec.valuation_time);
            let state = mean_state(&spec, maturity)?;
            let out = spot_prices(&state, &spec);
            let fuel_a = &spec.fuels[spec.market_a.technologies[out.key.merit.perm_a[out.key.k]].fuel];
            let fuel_b = &spec.fuels[spec.market_b.technologies[out.key.merit.perm_b[out.key.l]].fuel];
            println!("maturity = {}", fmt9(maturity));
            println!("flow_mw = {}", fmt9(out.flow));
            println!("regime = {}", out.regime().label());
            println!("marginal_a = rank {} (fuel {})", out.key.k + 1, fuel_a.name);
            println!("marginal_b = rank {} (fuel {})", out.key.l + 1, fuel_b.name);
            println!("price_a = {}", fmt9(out.price_a));
            println!("price_b = {}", fmt9(out.price_b));
        }
        Command::Forward {
            scenario,
            market,
            maturity,
            mc,
            samples,
        } => {
            let spec = load_with_seed(&scenario.scenario, cli.seed)?;
            let market: MarketId = market.into();
            let pricer = PartitionPricer::new(&spec, maturity)?;
            let fwd = pricer.forward(market)?;
            println!(
                "forward_{market} = {} +- {}",
                fmt9(fwd.total),
                fmt9(fwd.quadrature_error)
            );
            if mc {
                let n = samples.unwrap_or(spec.numerics.mc_samples);
                let batch = sample_terminal(&spec, &spec.initial_state(), maturity, n, spec.seed)?;
                let est = mc_price_from_spots(Payoff::Forward(market), &evaluate_spots(&batch, &spec));
                println!(
                    "mc_forward_{market} = {} +- {} (n = {n})",
                    fmt9(est.value),
                    fmt9(est.standard_error)
                );
            }
        }
        Command::Call {
            scenario,
            market,
            strike,
            maturity,
        } => {
            let spec = load_with_seed(&scenario.scenario, cli.seed)?;
            let market: MarketId = market.into();
            let call = PartitionPricer::new(&spec, maturity)?.call(market, strike)?;
            println!(
                "call_{market}_k{strike} = {} +- {}",
                fmt9(call.total),
                fmt9(call.quadrature_error)
            );
        }
        Command::Ptr {
            scenario,
            maturity,
            direction,
        } => {
            let spec = load_with_seed(&scenario.scenario, cli.seed)?;
            let pricer = PartitionPricer::new(&spec, maturity)?;
            let value = match direction {
                None => pricer.transmission_right()?,
                Some(d) => pricer.transmission_right_one_sided(d.into())?,
            };
            let label = match direction {
                None => "ptr".to_string(),
                Some(d) => format!("ptr_{}", MarketId::from(d)),
            };
            println!(
                "{label} = {} +- {}",
                fmt9(value.total),
                fmt9(value.quadrature_error)
            );
        }
        Command::CouplingRate { scenario, maturity } => {
            let spec = load_with_seed(&scenario.scenario, cli.seed)?;
            let rate = PartitionPricer::new(&spec, maturity)?.coupling_rate()?;
            println!("coupling_rate = {} +- {}", fmt9(rate.value), fmt9(rate.error));
        }
        Command::Margrabe {
            scenario,
            maturity,
            samples,
        } => {
            let spec = load_with_seed(&scenario.scenario, cli.seed)?;
            let n = samples.unwrap_or(spec.numerics.mc_samples);
            let batch = sample_terminal(&spec, &spec.initial_state(), maturity, n, spec.seed)?;
            let spots = evaluate_spots(&batch, &spec);
            let moments = spot_log_moments_from_spots(&spots, spec.valuation_time, maturity)?;
            println!("vol_a = {}", fmt9(moments.vol_a));
            println!("vol_b = {}", fmt9(moments.vol_b));
            println!("correlation = {}", fmt9(moments.correlation));
            println!("forward_a = {}", fmt9(moments.forward_a));
            println!("forward_b = {}", fmt9(moments.forward_b));
            if moments.degenerate {
                println!("note = degenerate spot distribution; correlation defaulted to 1");
            }
            let value = margrabe_value(&spec, maturity, &moments)?;
            println!("margrabe = {}", fmt9(value));
        }
        Command::Sweep {
            scenario,
            param,
            from,
            to,
            step,
            maturity,
            out,
            mc,
            samples,
        } => {
            let spec = load_with_seed(&scenario.scenario, cli.seed)?;
            let from = parse_power_mw(&from)?;
            let to = parse_power_mw(&to)?;
            let step = parse_power_mw(&step)?;
            if !(step > 0.0) || to < from {
                return Err(Error::InvalidInput(
                    "sweep needs step > 0 and to >= from".into(),
                ));
            }
            let csv = sweep_csv(&spec, &param, from, to, step, maturity, mc, samples)?;
            std::fs::write(&out, csv)
                .map_err(|e| Error::Parse(format!("cannot write {}: {e}", out.display())))?;
            println!("wrote {}", out.display());
        }
        Command::Validate {
            scenario,
            states,
            maturity,
        } => {
            let spec = load_with_seed(&scenario.scenario, cli.seed)?;
            run_validate(&spec, states, maturity)?;
        }
        Command::Simulate {
            scenario,
            maturity,
            samples,
            out,
        } => {
            let spec = load_with_seed(&scenario.scenario, cli.seed)?;
            let batch = sample_terminal(&spec, &spec.initial_state(), maturity, samples, spec.seed)?;
            let spots = evaluate_spots(&batch, &spec);
            let mut csv = String::from("sample");
            for f in &spec.fuels {
                let _ = write!(csv, ",log_cost_{}", f.name);
            }
            csv.push_str(",demand_a_mw,demand_b_mw,flow_mw,regime,price_a,price_b\n");
            for (i, (state, outcome)) in batch.states.iter().zip(&spots).enumerate() {
                let _ = write!(csv, "{i}");
                for v in &state.log_fuels {
                    let _ = write!(csv, ",{}", fmt9(*v));
                }
                let _ = writeln!(
                    csv,
                    ",{},{},{},{},{},{}",
                    fmt9(state.demand_a),
                    fmt9(state.demand_b),
                    fmt9(outcome.flow),
                    outcome.regime().label(),
                    fmt9(outcome.price_a),
                    fmt9(outcome.price_b)
                );
            }
            std::fs::write(&out, csv)
                .map_err(|e| Error::Parse(format!("cannot write {}: {e}", out.display())))?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn sweep_csv(
    spec: &ScenarioSpec,
    param: &str,
    from: f64,
    to: f64,
    step: f64,
    maturity: f64,
    mc: bool,
    samples: Option<usize>,
) -> Result<String> {
    let n_samples = samples.unwrap_or(200_000);
    let mut csv = String::from(
        "e_max_mw,e_min_mw,f_a,f_a_err,f_b,f_b_err,coupling_rate,coupling_rate_err,ptr,ptr_err,margrabe",
    );
    if mc {
        csv.push_str(",mc_f_a,mc_f_a_se,mc_f_b,mc_f_b_se,mc_ptr,mc_ptr_se");
    }
    csv.push('\n');
    let steps = ((to - from) / step).round() as usize;
    for i in 0..=steps {
        let x = (from + i as f64 * step).min(to);
        let mut point = spec.clone();
        match param {
            "coupling.ntc" => {
                point.coupling.flow_max = x;
                point.coupling.flow_min = -x;
            }
            "coupling.flow_max" => point.coupling.flow_max = x,
            "coupling.flow_min" => point.coupling.flow_min = x,
            other => {
                return Err(Error::InvalidInput(format!(
                    "unsupported sweep parameter `{other}` (use coupling.ntc, coupling.flow_max, coupling.flow_min)"
                )));
            }
        }
        point.validate().map_err(|e| {
            Error::InvalidInput(format!("sweep value {x} MW produces an invalid scenario: {e}"))
        })?;
        let pricer = PartitionPricer::new(&point, maturity)?;
        let f_a = pricer.forward(MarketId::A)?;
        let f_b = pricer.forward(MarketId::B)?;
        let rate = pricer.coupling_rate()?;
        let ptr = pricer.transmission_right()?;
        let batch = sample_terminal(&point, &point.initial_state(), maturity, n_samples, point.seed)?;
        let spots = evaluate_spots(&batch, &point);
        let moments = spot_log_moments_from_spots(&spots, point.valuation_time, maturity)?;
        let margrabe = margrabe_value(&point, maturity, &moments)?;
        let _ = write!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{}",
            fmt9(point.coupling.flow_max),
            fmt9(point.coupling.flow_min),
            fmt9(f_a.total),
            fmt9(f_a.quadrature_error),
            fmt9(f_b.total),
            fmt9(f_b.quadrature_error),
            fmt9(rate.value),
            fmt9(rate.error),
            fmt9(ptr.total),
            fmt9(ptr.quadrature_error),
            fmt9(margrabe)
        );
        if mc {
            let mc_a = mc_price_from_spots(Payoff::Forward(MarketId::A), &spots);
            let mc_b = mc_price_from_spots(Payoff::Forward(MarketId::B), &spots);
            let mc_ptr = mc_price_from_spots(Payoff::TransmissionRight, &spots);
            let _ = write!(
                csv,
                ",{},{},{},{},{},{}",
                fmt9(mc_a.value),
                fmt9(mc_a.standard_error),
                fmt9(mc_b.value),
                fmt9(mc_b.standard_error),
                fmt9(mc_ptr.value),
                fmt9(mc_ptr.standard_error)
            );
        }
        csv.push('\n');
    }
    Ok(csv)
}

fn run_validate(spec: &ScenarioSpec, states: usize, maturity: f64) -> Result<()> {
    let mut all_ok = true;
    let mut report = |name: &str, ok: bool, detail: String| {
        println!("[{}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        all_ok &= ok;
    };

    let stats = checks::partition_soundness(spec, maturity, states, spec.seed);
    report(
        "partition soundness",
        stats.passed(),
        format!(
            "{} states, {} boundary ties, regime counts {:?}{}",
            stats.states,
            stats.boundary_ties,
            stats.regime_counts,
            if stats.failures.is_empty() {
                String::new()
            } else {
                format!("; failures: {:?}", stats.failures)
            }
        ),
    );

    // Brute-force flow oracle on a subsample.
    let oracle_states = checks::random_states(spec, maturity, 200, spec.seed ^ 0x5eed);
    let grid = spec.numerics.brute_force_grid_step;
    let mut worst: f64 = 0.0;
    for state in &oracle_states {
        let flow = crate::coupling::optimal_flow(state, spec);
        let bf = crate::coupling::brute_force_flow(state, spec, grid);
        worst = worst.max((flow - bf).abs());
    }
    report(
        "flow oracle agreement",
        worst <= grid + 1e-6,
        format!("max |analytic - grid| = {worst:.3} MW over {} states", oracle_states.len()),
    );

    let pricer = PartitionPricer::new(spec, maturity)?;
    let closure = pricer.partition_closure()?;
    report(
        "partition closure",
        (closure.value - 1.0).abs() <= 1e-3 + closure.error,
        format!("sum = {} +- {}", fmt9(closure.value), fmt9(closure.error)),
    );

    // Analytic forward versus Monte Carlo.
    let n = 100_000;
    let batch = sample_terminal(spec, &spec.initial_state(), maturity, n, spec.seed ^ 0xfe)?;
    let spots = evaluate_spots(&batch, spec);
    for market in [MarketId::A, MarketId::B] {
        let analytic = pricer.forward(market)?;
        let est = mc_price_from_spots(Payoff::Forward(market), &spots);
        let tol = 3.0 * est.standard_error + analytic.quadrature_error;
        report(
            &format!("forward {market} vs Monte Carlo"),
            (analytic.total - est.value).abs() <= tol,
            format!(
                "analytic {} vs mc {} +- {}",
                fmt9(analytic.total),
                fmt9(est.value),
                fmt9(est.standard_error)
            ),
        );
    }

    if all_ok {
        Ok(())
    } else {
        Err(Error::Numerics("validation failed".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_parsing() {
        assert_eq!(parse_power_mw("20GW").unwrap(), 20_000.0);
        assert_eq!(parse_power_mw("1 gw").unwrap(), 1_000.0);
        assert_eq!(parse_power_mw("500MW").unwrap(), 500.0);
        assert_eq!(parse_power_mw("750").unwrap(), 750.0);
        assert!(parse_power_mw("abc").is_err());
    }
}
