//! Cross-check of the generated event constraint systems against an
//! independent, literal transcription of the saturated and interior-coupled
//! cell matrices (with the lower flow bound substituted where the upper one
//! was clearly copy-pasted). Systems must match as sets of normalized
//! (row, lower, upper) triples: row order, row scaling, sign flips and
//! swapped bound presentation are immaterial.

use interco::coupling::{EventKey, Regime};
use interco::gaussian::LinearConstraints;
use interco::model::{MarketId, MeritOrder};
use interco::pricing::event_term;
use interco::scenarios;

/// Canonical form: bounds ordered, row scaled to unit max coefficient, first
/// nonzero coefficient positive.
fn canonicalize(rows: &LinearConstraints) -> Vec<(Vec<i64>, i64, i64)> {
    let quantize = |x: f64| -> i64 {
        if x == f64::INFINITY {
            i64::MAX
        } else if x == f64::NEG_INFINITY {
            i64::MIN
        } else {
            (x * 1e6).round() as i64
        }
    };
    let mut out = Vec::new();
    for i in 0..rows.len() {
        let mut row = rows.rows[i].clone();
        let (mut lo, mut hi) = (rows.lower[i], rows.upper[i]);
        if lo > hi {
            std::mem::swap(&mut lo, &mut hi);
        }
        let scale = row.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
        assert!(scale > 0.0, "zero constraint row");
        for v in &mut row {
            *v /= scale;
        }
        lo /= scale;
        hi /= scale;
        if let Some(first) = row.iter().find(|v| v.abs() > 1e-12) {
            if *first < 0.0 {
                for v in &mut row {
                    *v = -*v;
                }
                let (nlo, nhi) = (-hi, -lo);
                lo = nlo;
                hi = nhi;
            }
        }
        out.push((
            row.iter().map(|&v| quantize(v)).collect(),
            quantize(lo),
            quantize(hi),
        ));
    }
    out.sort();
    out
}

struct Setup {
    scenario: interco::model::ScenarioSpec,
    /// Cumulative capacities per zone rank at the maturity, MW.
    cum_a: Vec<f64>,
    cum_b: Vec<f64>,
    fuels_a: Vec<usize>,
    fuels_b: Vec<usize>,
}

fn setup() -> Setup {
    let scenario = scenarios::table1();
    Setup {
        scenario,
        cum_a: vec![48_000.0, 66_000.0],
        cum_b: vec![33_000.0, 89_000.0],
        fuels_a: vec![0, 1],
        fuels_b: vec![2, 3],
    }
}

impl Setup {
    fn low_a(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.cum_a[k - 1]
        }
    }

    fn low_b(&self, l: usize) -> f64 {
        if l == 0 {
            0.0
        } else {
            self.cum_b[l - 1]
        }
    }

    fn key(&self, k: usize, l: usize, regime: Regime) -> EventKey {
        EventKey {
            global_order: vec![0, 1, 2, 3],
            merit: MeritOrder {
                perm_a: vec![0, 1],
                perm_b: vec![0, 1],
            },
            k,
            l,
            regime,
        }
    }

    /// Literal transcription of the saturated-cell system at flow `e` for
    /// marginal pair (k, l); `a_exports` picks the inequality direction.
    fn saturated_literal(&self, k: usize, l: usize, e: f64, a_exports: bool) -> LinearConstraints {
        let (alpha_a, beta_a) = (0.56, -1e-5);
        let (alpha_b, beta_b) = (0.89, -1e-5);
        let (cbar_a, cbar_b) = (66_000.0, 89_000.0);
        let mut cons = LinearConstraints::empty();
        // I-1 / I-2: marginality of k and l at the shifted demands.
        cons.push(
            vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
            self.low_a(k) - e,
            self.cum_a[k] - e,
        );
        cons.push(
            vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
            self.low_b(l) + e,
            self.cum_b[l] + e,
        );
        // I-3: price ordering at the saturated flow.
        let mut row = vec![0.0; 6];
        row[self.fuels_a[k]] = 1.0;
        row[self.fuels_b[l]] = -1.0;
        row[4] = -beta_a;
        row[5] = beta_b;
        let bound = alpha_b - alpha_a + beta_b * (cbar_b + e) - beta_a * (cbar_a - e);
        if a_exports {
            cons.push(row, f64::NEG_INFINITY, bound);
        } else {
            cons.push(row, bound, f64::INFINITY);
        }
        // I-4: the differencing block over the global cost ordering.
        for i in 0..3 {
            let mut row = vec![0.0; 6];
            row[i] = -1.0;
            row[i + 1] = 1.0;
            cons.push(row, 0.0, f64::INFINITY);
        }
        cons
    }

    /// Literal interior-coupled system with `K = alpha_A - alpha_B +
    /// beta_A C_A - beta_B C_B` and the flow row's lower bound taken at the
    /// lower transfer limit.
    fn interior_literal(&self, k: usize, l: usize) -> LinearConstraints {
        let (beta_a, beta_b) = (-1e-5, -1e-5);
        let gamma: f64 = beta_a + beta_b;
        let kcst = 0.56 - 0.89 + beta_a * 66_000.0 - beta_b * 89_000.0;
        let (e_min, e_max) = (-4_000.0, 4_000.0);
        let mut cons = LinearConstraints::empty();
        let mut row = vec![0.0; 6];
        row[self.fuels_a[k]] = 1.0;
        row[self.fuels_b[l]] = -1.0;
        row[4] = -beta_a;
        row[5] = beta_b;
        cons.push(row, gamma * e_max - kcst, gamma * e_min - kcst);
        let mut row = vec![0.0; 6];
        row[self.fuels_a[k]] = 1.0;
        row[self.fuels_b[l]] = -1.0;
        row[4] = beta_b;
        row[5] = beta_b;
        // As printed, the bounds read (gamma*low - K, gamma*up - K); with
        // gamma < 0 that pair arrives inverted, so order it here (the
        // canonical comparison is order-insensitive anyway).
        let (x, y) = (gamma * self.low_a(k) - kcst, gamma * self.cum_a[k] - kcst);
        cons.push(row, x.min(y), x.max(y));
        let mut row = vec![0.0; 6];
        row[self.fuels_b[l]] = 1.0;
        row[self.fuels_a[k]] = -1.0;
        row[4] = beta_a;
        row[5] = beta_a;
        let (x, y) = (gamma * self.low_b(l) + kcst, gamma * self.cum_b[l] + kcst);
        cons.push(row, x.min(y), x.max(y));
        for i in 0..3 {
            let mut row = vec![0.0; 6];
            row[i] = -1.0;
            row[i + 1] = 1.0;
            cons.push(row, 0.0, f64::INFINITY);
        }
        cons
    }
}

#[test]
fn saturated_a_to_b_matches_literal_system() {
    let s = setup();
    for k in 0..2 {
        for l in 0..2 {
            let key = s.key(k, l, Regime::SaturatedAToB);
            let term = event_term(&key, &s.scenario, 1.0, MarketId::A).unwrap();
            let literal = s.saturated_literal(k, l, 4_000.0, true);
            assert_eq!(
                canonicalize(&term.constraints),
                canonicalize(&literal),
                "A-to-B cell (k={k}, l={l})"
            );
            // Leg tilts: canonical fuel vector and the demand slope.
            assert_eq!(term.tilt.lambda[s.fuels_a[k]], 1.0);
            assert_eq!(term.tilt.lambda[4], 1e-5);
            let eta = 0.56 + (-1e-5) * (66_000.0 - 4_000.0);
            assert!((term.tilt.eta - eta).abs() < 1e-12);
            let term_b = event_term(&key, &s.scenario, 1.0, MarketId::B).unwrap();
            assert_eq!(term_b.tilt.lambda[s.fuels_b[l]], 1.0);
            assert_eq!(term_b.tilt.lambda[5], 1e-5);
            let eta_b = 0.89 + (-1e-5) * (89_000.0 + 4_000.0);
            assert!((term_b.tilt.eta - eta_b).abs() < 1e-12);
        }
    }
}

#[test]
fn saturated_b_to_a_matches_literal_system_with_lower_bound() {
    let s = setup();
    for k in 0..2 {
        for l in 0..2 {
            let key = s.key(k, l, Regime::SaturatedBToA);
            let term = event_term(&key, &s.scenario, 1.0, MarketId::A).unwrap();
            let literal = s.saturated_literal(k, l, -4_000.0, false);
            assert_eq!(
                canonicalize(&term.constraints),
                canonicalize(&literal),
                "B-to-A cell (k={k}, l={l})"
            );
            let eta = 0.56 + (-1e-5) * (66_000.0 + 4_000.0);
            assert!((term.tilt.eta - eta).abs() < 1e-12);
        }
    }
}

#[test]
fn interior_coupled_matches_literal_system() {
    let s = setup();
    for k in 0..2 {
        for l in 0..2 {
            let key = s.key(k, l, Regime::CoupledInterior);
            let term = event_term(&key, &s.scenario, 1.0, MarketId::B).unwrap();
            let literal = s.interior_literal(k, l);
            assert_eq!(
                canonicalize(&term.constraints),
                canonicalize(&literal),
                "interior cell (k={k}, l={l})"
            );
        }
    }
}

#[test]
fn disc_a_tilt_is_the_importer_price_leg() {
    let s = setup();
    let key = s.key(1, 1, Regime::CoupledDiscA);
    let term = event_term(&key, &s.scenario, 1.0, MarketId::A).unwrap();
    // Common price is B's offer: lambda = (E_l^B, -beta_B, -beta_B),
    // eta = alpha_B + beta_B (C_B + cumulative cheap capacity in A).
    assert_eq!(term.tilt.lambda[3], 1.0);
    assert_eq!(term.tilt.lambda[4], 1e-5);
    assert_eq!(term.tilt.lambda[5], 1e-5);
    let eta = 0.89 + (-1e-5) * (89_000.0 + 48_000.0);
    assert!((term.tilt.eta - eta).abs() < 1e-12);
    // Both legs coincide on coupled cells.
    let term_b = event_term(&key, &s.scenario, 1.0, MarketId::B).unwrap();
    assert_eq!(term.tilt.lambda, term_b.tilt.lambda);
}

#[test]
fn event_term_rejects_invalid_keys() {
    let s = setup();
    let mut key = s.key(0, 0, Regime::SaturatedAToB);
    key.k = 7;
    assert!(event_term(&key, &s.scenario, 1.0, MarketId::A).is_err());
    let mut key = s.key(0, 0, Regime::SaturatedAToB);
    key.global_order = vec![0, 0, 2, 3];
    assert!(event_term(&key, &s.scenario, 1.0, MarketId::A).is_err());
}
