//! Acceptance suite: one test per release criterion, each printing a single
//! PASS/FAIL line (run with `--nocapture` to see them). The tests share a
//! lock so the stated runtime budgets are measured without contention.

use std::sync::Mutex;
use std::time::Instant;

use interco::checks;
use interco::coupling::{brute_force_flow, spot_prices, Regime};
use interco::gaussian::{
    exponential_tilt, rectangle_probability, GaussianLaw, QuadratureOptions,
};
use interco::mat::SymMatrix;
use interco::model::{MarketId, ScenarioSpec};
use interco::montecarlo::{
    evaluate_spots, mc_price_from_spots, sample_terminal, spot_log_moments_from_spots, Payoff,
};
use interco::pricing::{margrabe_value, PartitionPricer};
use interco::scenarios::{self, Level};

static GATE: Mutex<()> = Mutex::new(());

fn conclude(name: &str, failures: Vec<String>, detail: String) {
    if failures.is_empty() {
        println!("[PASS] {name}: {detail}");
    } else {
        println!("[FAIL] {name}: {detail}; failures: {failures:?}");
        panic!("{name} failed: {failures:?}");
    }
}

#[test]
fn criterion_1_deterministic_coupling() {
    let _gate = GATE.lock().unwrap_or_else(|e| e.into_inner());
    let started = Instant::now();
    let mut failures = Vec::new();

    let scenario = scenarios::table1();
    let state = scenario.initial_state();
    let out = spot_prices(&state, &scenario);
    let grid = 1.0;
    let oracle = brute_force_flow(&state, &scenario, grid);

    if (out.flow - (-2_000.0)).abs() > 1e-9 {
        failures.push(format!("flow {} != -2000 MW", out.flow));
    }
    if (out.flow - oracle).abs() > grid {
        failures.push(format!("flow {} vs grid oracle {oracle}", out.flow));
    }
    let reference = 35.0 * 0.47_f64.exp();
    if (out.price_a - reference).abs() > 0.01 || (out.price_b - reference).abs() > 0.01 {
        failures.push(format!(
            "prices ({}, {}) vs 35 e^0.47 = {reference}",
            out.price_a, out.price_b
        ));
    }
    // Grid-oracle price pair at the oracle flow brackets the common price.
    let pa = interco::model::offer_curve(&scenario.market_a, &state, state.demand_a + oracle, state.time)
        .unwrap()
        .0;
    let pb = interco::model::offer_curve(&scenario.market_b, &state, state.demand_b - oracle, state.time)
        .unwrap()
        .0;
    if !(out.price_a <= pa.max(pb) + 0.01 && out.price_a >= pb.min(pa) - 0.01) {
        failures.push(format!("common price {} outside oracle pair ({pa}, {pb})", out.price_a));
    }
    // Above 2 GW of interconnection the expensive technology in A shuts down.
    if state.demand_a + out.flow > 48_000.0 + 1e-9 {
        failures.push(format!(
            "residual demand {} still dispatches the expensive technology",
            state.demand_a + out.flow
        ));
    }
    let elapsed = started.elapsed();
    if elapsed.as_secs_f64() > 1.0 {
        failures.push(format!("runtime {elapsed:?} exceeds 1 s"));
    }
    conclude(
        "criterion 1 (deterministic coupling)",
        failures,
        format!(
            "flow {} MW, common price {:.6}, oracle {} MW, regime {}, {:?}",
            out.flow,
            out.price_a,
            oracle,
            out.regime().label(),
            elapsed
        ),
    );
}

#[test]
fn criterion_2_partition_soundness() {
    let _gate = GATE.lock().unwrap_or_else(|e| e.into_inner());
    let started = Instant::now();
    let mut failures = Vec::new();

    // 100k random states split across the base layout and a stressed layout
    // whose breakpoints sit next to the demand means (all five regimes).
    let base = scenarios::table1();
    let stress = checks::stress_scenario();
    let stats_base = checks::partition_soundness(&base, 1.0, 60_000, 2024);
    let stats_stress = checks::partition_soundness(&stress, 1.0, 40_000, 4048);
    for (name, stats) in [("base", &stats_base), ("stress", &stats_stress)] {
        if !stats.passed() {
            failures.push(format!("{name}: {:?}", stats.failures));
        }
    }
    if !stats_stress.regime_counts.iter().all(|&c| c > 0) {
        failures.push(format!(
            "stress layout missed a regime: {:?}",
            stats_stress.regime_counts
        ));
    }
    let elapsed = started.elapsed();
    if elapsed.as_secs_f64() > 30.0 {
        failures.push(format!("runtime {elapsed:?} exceeds 30 s"));
    }
    conclude(
        "criterion 2 (partition soundness)",
        failures,
        format!(
            "100000 states, regimes base {:?} / stress {:?}, boundary ties {}, {:?}",
            stats_base.regime_counts,
            stats_stress.regime_counts,
            stats_base.boundary_ties + stats_stress.boundary_ties,
            elapsed
        ),
    );
}

#[test]
fn criterion_3_analytic_vs_monte_carlo() {
    let _gate = GATE.lock().unwrap_or_else(|e| e.into_inner());
    let started = Instant::now();
    let mut failures = Vec::new();
    let mc_samples = 1_000_000;
    let maturity = 1.0;

    for ntc in [0.0, 4.0, 12.0] {
        for (name, scenario) in scenarios::section4_configs(ntc) {
            let pricer = PartitionPricer::new(&scenario, maturity).unwrap();
            let batch = sample_terminal(
                &scenario,
                &scenario.initial_state(),
                maturity,
                mc_samples,
                scenario.seed ^ 0x51ab,
            )
            .unwrap();
            let spots = evaluate_spots(&batch, &scenario);
            let mut check = |what: &str, analytic: f64, quad_err: f64, payoff: Payoff| {
                let mc = mc_price_from_spots(payoff, &spots);
                let tol = 3.0 * mc.standard_error + quad_err;
                if (analytic - mc.value).abs() > tol {
                    failures.push(format!(
                        "{name}@{ntc}GW {what}: analytic {analytic:.6} vs mc {:.6} +- {:.2e} (quad {quad_err:.2e})",
                        mc.value, mc.standard_error
                    ));
                }
            };
            for market in [MarketId::A, MarketId::B] {
                let fwd = pricer.forward(market).unwrap();
                check(
                    &format!("forward {market}"),
                    fwd.total,
                    fwd.quadrature_error,
                    Payoff::Forward(market),
                );
            }
            let ptr = pricer.transmission_right().unwrap();
            check("ptr", ptr.total, ptr.quadrature_error, Payoff::TransmissionRight);
            let call = pricer.call(MarketId::A, 50.0).unwrap();
            check(
                "call A @ 50",
                call.total,
                call.quadrature_error,
                Payoff::Call(MarketId::A, 50.0),
            );
            let rate = pricer.coupling_rate().unwrap();
            check(
                "coupling rate",
                rate.value,
                rate.error,
                Payoff::CouplingIndicator,
            );
        }
    }
    let elapsed = started.elapsed();
    if elapsed.as_secs_f64() > 600.0 {
        failures.push(format!("runtime {elapsed:?} exceeds 10 min"));
    }
    conclude(
        "criterion 3 (analytic vs Monte Carlo)",
        failures,
        format!("4 configurations x 3 capacities x 5 quantities at n = {mc_samples}, {elapsed:?}"),
    );
}

#[test]
fn criterion_4_event_probability_closure() {
    let _gate = GATE.lock().unwrap_or_else(|e| e.into_inner());
    let mut failures = Vec::new();
    let mut detail = String::new();
    for (name, scenario) in scenarios::section4_configs(4.0) {
        let closure = PartitionPricer::new(&scenario, 1.0)
            .unwrap()
            .partition_closure()
            .unwrap();
        detail.push_str(&format!("{name}: {:.6}  ", closure.value));
        if (closure.value - 1.0).abs() > 1e-3 {
            failures.push(format!("{name}: closure {} != 1 +- 1e-3", closure.value));
        }
    }
    conclude("criterion 4 (event-probability closure)", failures, detail);
}

fn sweep_points(
    scenario_for: impl Fn(f64) -> ScenarioSpec,
    maturity: f64,
    with_margrabe: Option<usize>,
) -> Vec<(f64, f64, f64, f64, f64, f64, f64, Option<f64>)> {
    // (ntc_gw, f_a, f_b, rate, rate_err, ptr, ptr_err, margrabe)
    (0..=20)
        .map(|gw| {
            let scenario = scenario_for(gw as f64);
            let pricer = PartitionPricer::new(&scenario, maturity).unwrap();
            let f_a = pricer.forward(MarketId::A).unwrap();
            let f_b = pricer.forward(MarketId::B).unwrap();
            let rate = pricer.coupling_rate().unwrap();
            let ptr = pricer.transmission_right().unwrap();
            let margrabe = with_margrabe.map(|n| {
                let batch = sample_terminal(
                    &scenario,
                    &scenario.initial_state(),
                    maturity,
                    n,
                    scenario.seed ^ 0x3a7,
                )
                .unwrap();
                let spots = evaluate_spots(&batch, &scenario);
                let moments =
                    spot_log_moments_from_spots(&spots, scenario.valuation_time, maturity).unwrap();
                margrabe_value(&scenario, maturity, &moments).unwrap()
            });
            (
                gw as f64,
                f_a.total,
                f_b.total,
                rate.value,
                rate.error,
                ptr.total,
                ptr.quadrature_error,
                margrabe,
            )
        })
        .collect()
}

#[test]
fn criterion_5_coupling_rate_and_forward_convergence() {
    let _gate = GATE.lock().unwrap_or_else(|e| e.into_inner());
    let started = Instant::now();
    let mut failures = Vec::new();
    let mut detail = String::new();

    for (demand, fuel, name) in [
        (Level::Low, Level::Low, "low/low"),
        (Level::Low, Level::High, "low/high"),
        (Level::High, Level::Low, "high/low"),
        (Level::High, Level::High, "high/high"),
    ] {
        let points = sweep_points(
            |gw| scenarios::table1_config(demand, fuel, gw),
            1.0,
            None,
        );
        for w in points.windows(2) {
            let (ref a, ref b) = (w[0], w[1]);
            let slack = a.4 + b.4;
            if b.3 < a.3 - slack {
                failures.push(format!(
                    "{name}: coupling rate dips {} -> {} between {} and {} GW",
                    a.3, b.3, a.0, b.0
                ));
            }
        }
        let last = points.last().unwrap();
        if last.3 < 0.99 {
            failures.push(format!("{name}: final coupling rate {} < 0.99", last.3));
        }
        let spread = (last.1 - last.2).abs();
        let avg = 0.5 * (last.1 + last.2);
        if spread > 0.005 * avg {
            failures.push(format!(
                "{name}: |F_A - F_B| = {spread:.4} exceeds 0.5% of {avg:.2} at 20 GW"
            ));
        }
        detail.push_str(&format!(
            "{name}: rate(20GW) {:.4}, spread {:.2e}%  ",
            last.3,
            100.0 * spread / avg
        ));
    }
    conclude(
        "criterion 5 (coupling-rate / forward convergence sweeps)",
        failures,
        format!("{detail}{:?}", started.elapsed()),
    );
}

#[test]
fn criterion_6_transmission_right_decay_and_lognormal_dominance() {
    let _gate = GATE.lock().unwrap_or_else(|e| e.into_inner());
    let started = Instant::now();
    let mut failures = Vec::new();

    let points = sweep_points(
        |gw| scenarios::table1_config(Level::High, Level::High, gw),
        1.0,
        Some(200_000),
    );
    let first = points.first().unwrap();
    let last = points.last().unwrap();
    if !(last.5 < 0.05 * first.5) {
        failures.push(format!(
            "ptr(20 GW) = {} is not below 5% of ptr(0 GW) = {}",
            last.5, first.5
        ));
    }
    // The lognormal approximation is expected (not proven) to dominate the
    // structural value; violations are flagged loudly, not failed.
    let mut dominated = true;
    for p in &points {
        let margrabe = p.7.unwrap();
        if p.5 > margrabe + p.6 {
            dominated = false;
            println!(
                "[WARN] criterion 6: structural ptr {} exceeds lognormal value {} at {} GW \
                 (ptr err {:.1e}); expected-empirical dominance violated",
                p.5, margrabe, p.0, p.6
            );
        }
    }
    conclude(
        "criterion 6 (transmission-right decay / lognormal dominance)",
        failures,
        format!(
            "ptr 0 GW {:.4} -> 20 GW {:.6}, lognormal dominance {}, {:?}",
            first.5,
            last.5,
            if dominated { "held at every point" } else { "violated (warned above)" },
            started.elapsed()
        ),
    );
}

#[test]
fn criterion_7_gaussian_kernel_accuracy() {
    let _gate = GATE.lock().unwrap_or_else(|e| e.into_inner());
    let mut failures = Vec::new();
    let opts = QuadratureOptions::default().with_tolerance(1e-5);

    // 1D half line.
    let law1 = GaussianLaw::new(vec![0.0], SymMatrix::identity(1)).unwrap();
    let half = rectangle_probability(&law1, &[0.0], &[f64::INFINITY], &opts).unwrap();
    if (half.value - 0.5).abs() > 1e-4 {
        failures.push(format!("half-line probability {}", half.value));
    }

    // Correlated orthant at rho = 1/2 has probability exactly 1/3.
    let mut cov = SymMatrix::identity(2);
    cov.set(0, 1, 0.5);
    let law2 = GaussianLaw::new(vec![0.0, 0.0], cov).unwrap();
    let orthant =
        rectangle_probability(&law2, &[0.0, 0.0], &[f64::INFINITY, f64::INFINITY], &opts).unwrap();
    if (orthant.value - 1.0 / 3.0).abs() > 1e-4 {
        failures.push(format!("orthant probability {}", orthant.value));
    }

    // Tilt identity through the tilt + 1D CDF path: E[e^X 1_{X>=0}] for a
    // standard normal equals e^{1/2} Phi(1) = 1.3871429788350048.
    let (factor, tilted) = exponential_tilt(&law1, &[1.0], 0.0).unwrap();
    let shifted = rectangle_probability(&tilted, &[0.0], &[f64::INFINITY], &opts).unwrap();
    let via_tilt = factor * shifted.value;
    let analytic = 1.387_142_978_835_004_8;
    if (via_tilt - analytic).abs() > 1e-6 {
        failures.push(format!("tilt identity {via_tilt} vs {analytic}"));
    }

    conclude(
        "criterion 7 (Gaussian kernel accuracy)",
        failures,
        format!(
            "half {:.8}, orthant {:.8}, tilt path {:.10}",
            half.value, orthant.value, via_tilt
        ),
    );
}

#[test]
fn criterion_8_call_structure() {
    let _gate = GATE.lock().unwrap_or_else(|e| e.into_inner());
    let started = Instant::now();
    let mut failures = Vec::new();

    let scenario = scenarios::table1();
    let pricer = PartitionPricer::new(&scenario, 1.0).unwrap();
    let strikes: Vec<f64> = (0..=10).map(|i| 10.0 * i as f64).collect();
    let calls: Vec<_> = strikes
        .iter()
        .map(|&k| pricer.call(MarketId::A, k).unwrap())
        .collect();

    let forward = pricer.forward(MarketId::A).unwrap();
    let combined = forward.quadrature_error + calls[0].quadrature_error + 1e-9;
    if (calls[0].total - forward.total).abs() > combined {
        failures.push(format!(
            "call(0) = {} vs forward {} (tol {combined:.2e})",
            calls[0].total, forward.total
        ));
    }
    for i in 1..calls.len() {
        let slack = calls[i - 1].quadrature_error + calls[i].quadrature_error;
        if calls[i].total > calls[i - 1].total + slack {
            failures.push(format!(
                "call increases at strike {}: {} -> {}",
                strikes[i],
                calls[i - 1].total,
                calls[i].total
            ));
        }
    }
    for i in 1..calls.len() - 1 {
        let second_diff = calls[i + 1].total - 2.0 * calls[i].total + calls[i - 1].total;
        let err = calls[i - 1].quadrature_error
            + 2.0 * calls[i].quadrature_error
            + calls[i + 1].quadrature_error;
        if second_diff < -err {
            failures.push(format!(
                "convexity violated at strike {}: second difference {second_diff:.3e} (err {err:.1e})",
                strikes[i]
            ));
        }
    }
    conclude(
        "criterion 8 (call structure)",
        failures,
        format!(
            "call(0) {:.6} vs forward {:.6}, call(100) {:.2e}, {:?}",
            calls[0].total,
            forward.total,
            calls.last().unwrap().total,
            started.elapsed()
        ),
    );
}
