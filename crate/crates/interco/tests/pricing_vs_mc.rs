//! Cross-validation of the quasi-analytic pricers against the Monte Carlo
//! estimators on the bundled example scenarios.

use interco::model::MarketId;
use interco::montecarlo::{
    evaluate_spots, mc_price_from_spots, sample_terminal, Payoff,
};
use interco::pricing::PartitionPricer;
use interco::scenarios;

const MC_SAMPLES: usize = 200_000;

fn check_config(name: &str, scenario: &interco::model::ScenarioSpec, maturity: f64) {
    let pricer = PartitionPricer::new(scenario, maturity).unwrap();
    let batch = sample_terminal(
        scenario,
        &scenario.initial_state(),
        maturity,
        MC_SAMPLES,
        scenario.seed ^ 0xabcd,
    )
    .unwrap();
    let spots = evaluate_spots(&batch, scenario);

    let closure = pricer.partition_closure().unwrap();
    assert!(
        (closure.value - 1.0).abs() <= 1e-3 + closure.error,
        "{name}: partition closure {} (err {})",
        closure.value,
        closure.error
    );

    for market in [MarketId::A, MarketId::B] {
        let analytic = pricer.forward(market).unwrap();
        let mc = mc_price_from_spots(Payoff::Forward(market), &spots);
        let tol = 3.0 * mc.standard_error + analytic.quadrature_error;
        assert!(
            (analytic.total - mc.value).abs() <= tol,
            "{name}: forward {market} analytic {} vs mc {} +- {} (quad err {})",
            analytic.total,
            mc.value,
            mc.standard_error,
            analytic.quadrature_error
        );
    }

    let ptr = pricer.transmission_right().unwrap();
    let mc = mc_price_from_spots(Payoff::TransmissionRight, &spots);
    assert!(
        (ptr.total - mc.value).abs() <= 3.0 * mc.standard_error + ptr.quadrature_error,
        "{name}: ptr analytic {} vs mc {} +- {}",
        ptr.total,
        mc.value,
        mc.standard_error
    );

    let call = pricer.call(MarketId::A, 50.0).unwrap();
    let mc = mc_price_from_spots(Payoff::Call(MarketId::A, 50.0), &spots);
    assert!(
        (call.total - mc.value).abs() <= 3.0 * mc.standard_error + call.quadrature_error,
        "{name}: call analytic {} vs mc {} +- {}",
        call.total,
        mc.value,
        mc.standard_error
    );

    let rate = pricer.coupling_rate().unwrap();
    let mc = mc_price_from_spots(Payoff::CouplingIndicator, &spots);
    assert!(
        (rate.value - mc.value).abs() <= 3.0 * mc.standard_error + rate.error + 1e-4,
        "{name}: coupling rate analytic {} vs mc {} +- {}",
        rate.value,
        mc.value,
        mc.standard_error
    );
}

#[test]
fn analytic_matches_mc_low_var_low_vol() {
    check_config("low/low", &scenarios::table1(), 1.0);
}

#[test]
fn analytic_matches_mc_high_var_high_vol() {
    let s = scenarios::table1_config(scenarios::Level::High, scenarios::Level::High, 4.0);
    check_config("high/high", &s, 1.0);
}

#[test]
fn analytic_matches_mc_at_zero_ntc() {
    let s = scenarios::with_symmetric_ntc(
        scenarios::table1_config(scenarios::Level::High, scenarios::Level::Low, 0.0),
        0.0,
    );
    check_config("high/low @ 0 GW", &s, 1.0);
}

#[test]
fn mc_regime_frequencies_match_event_probabilities() {
    let s = scenarios::table1_config(scenarios::Level::High, scenarios::Level::High, 4.0);
    let maturity = 1.0;
    let pricer = PartitionPricer::new(&s, maturity).unwrap();
    let fwd = pricer.forward(MarketId::A).unwrap();
    let batch =
        sample_terminal(&s, &s.initial_state(), maturity, MC_SAMPLES, s.seed ^ 77).unwrap();
    let spots = evaluate_spots(&batch, &s);

    // Event-by-event: the classified key of a sampled state carries the
    // realized global cost ordering, so sampled frequencies compare directly
    // against the per-event analytic probabilities.
    use std::collections::HashMap;
    let mut analytic: HashMap<(Vec<usize>, usize, usize, u8), f64> = HashMap::new();
    for (key, _, prob) in &fwd.per_event {
        *analytic
            .entry((key.global_order.clone(), key.k, key.l, key.regime as u8))
            .or_default() += prob;
    }
    let mut counts: HashMap<(Vec<usize>, usize, usize, u8), usize> = HashMap::new();
    for out in &spots {
        *counts
            .entry((
                out.key.global_order.clone(),
                out.key.k,
                out.key.l,
                out.key.regime as u8,
            ))
            .or_default() += 1;
    }
    let n = spots.len() as f64;
    let mut checked = 0;
    for (cell, &p) in &analytic {
        if p < 1e-3 {
            continue;
        }
        checked += 1;
        let freq = counts.get(cell).copied().unwrap_or(0) as f64 / n;
        let se = (p * (1.0 - p) / n).sqrt();
        assert!(
            (freq - p).abs() <= 3.0 * se + 1e-3,
            "cell {cell:?}: analytic {p} vs sampled {freq}"
        );
    }
    assert!(checked > 10, "only {checked} events had mass above 1e-3");
}
