use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tfmm_guard::attack::*;
use tfmm_guard::{MarketPrices, PoolState, TradeIntent};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_weights(r: &mut ChaCha8Rng, n: usize, floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| floor + r.random::<f64>()).collect();
    let s: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|x| x / s).collect();
    let tail: f64 = w[1..].iter().sum();
    w[0] = 1.0 - tail;
    w
}

fn random_pool(r: &mut ChaCha8Rng, n: usize, gamma: f64) -> PoolState {
    let res = (0..n).map(|_| 10f64.powf(r.random_range(0.0..4.0))).collect();
    PoolState::new(res, random_weights(r, n, 0.1), gamma).unwrap()
}

/// Prices that put each token's quote anywhere within `spread` (log) of spot.
fn random_market(r: &mut ChaCha8Rng, pool: &PoolState, spread: f64) -> MarketPrices {
    let raw: Vec<f64> = (0..pool.n_tokens())
        .map(|i| pool.spot_price(i, 0) * r.random_range(-spread..spread).exp())
        .collect();
    MarketPrices::normalized(&raw).unwrap()
}

// Bisection oracle for Delta1 / R1 solving (1 + x)(1 + gamma x)^(w1/w2) = target.
fn delta1_oracle(w1: f64, w2: f64, gamma: f64, target: f64) -> f64 {
    let f = |x: f64| (1.0 + x) * (1.0 + gamma * x).powf(w1 / w2) - target;
    let (mut lo, mut hi) = (0.0, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn asymmetric_delta1_matches_bisection() {
    let (w1, w2, g, eps) = (0.3, 0.7, 0.997, 0.05);
    let d1 = solve_manip_delta1(100.0, w1, w2, g, eps).unwrap();
    let oracle = 100.0 * delta1_oracle(w1, w2, g, g * g * 1.05);
    assert!((d1 - oracle).abs() <= 1e-12 * oracle, "{d1} vs {oracle}");
    let ratio = w1 / w2;
    let resid = manip_delta1_log_lhs(d1 / 100.0, ratio, g) - (g * g * 1.05f64).ln();
    assert!(resid.abs() < 1e-12);
}

#[test]
fn joint_roots_preserve_invariant() {
    let (w1, w2, g, eps) = (0.3, 0.7, 0.997, 0.05);
    let d1 = solve_manip_delta1(100.0, w1, w2, g, eps).unwrap();
    let d2 = solve_manip_delta2(100.0, w1, w2, g, eps).unwrap();
    let before = w1 * 100f64.ln() + w2 * 100f64.ln();
    let after = w1 * (100.0 + g * d1).ln() + w2 * (100.0 - d2).ln();
    assert!(((after - before) / before).abs() < 1e-10);
}

#[test]
fn post_manipulation_quote_hits_target() {
    let mut r = rng(1);
    for _ in 0..200 {
        let g = [1.0, 0.997, 0.99][r.random_range(0..3)];
        let pool = random_pool(&mut r, 2, g);
        let market = worst_case_market(&pool, [0, 1]).unwrap();
        let eps = epsilon_null(g) + r.random_range(1e-4..0.5);
        let s = AttackScenario::new(pool.clone(), market.clone(), vec![0.0, 0.0], eps).unwrap();
        let t = s.manipulation_trade().unwrap();
        let after = pool.apply_trade(&t).unwrap();
        let quote = after.fee_adjusted_quote(1, 0);
        let want = (1.0 + eps) * market.relative(1, 0);
        assert!((quote / want - 1.0).abs() < 1e-9, "{quote} vs {want}");
    }
}

#[test]
fn closed_form_round_trip_without_fee() {
    // Equal weights, no fee, eps = 0.05 from a (100, 100) pool.
    let (d1, d2) = (100.0 * (1.05f64.sqrt() - 1.0), 100.0 * (1.0 - 1.05f64.powf(-0.5)));
    assert!((d1 - 2.469508).abs() < 1e-6);
    assert!((d2 - 2.409993).abs() < 1e-6);
    let w = [0.5, 0.5];
    let (r1, r2) = (100.0 + d1, 100.0 - d2);
    let (a1, a2) = arb_trade_closed_form(r1, r2, w, w, 1.0, 0.05);
    // The arbitrage undoes the manipulation exactly.
    assert!((a1 - d1).abs() < 1e-12, "{a1}");
    assert!((a2 - d2).abs() < 1e-12, "{a2}");
    let k0 = 0.5 * r1.ln() + 0.5 * r2.ln();
    let k1 = 0.5 * (r1 - a1).ln() + 0.5 * (r2 + a2).ln();
    assert!(((k1 - k0) / k0).abs() < 1e-10);
}

#[test]
fn closed_form_satisfies_invariant_under_weight_change() {
    let mut r = rng(2);
    for _ in 0..500 {
        let w1 = r.random_range(0.1..0.9);
        let dw = r.random_range(-0.05..0.05);
        let w = [w1, 1.0 - w1];
        let wp = [w1 + dw, 1.0 - w1 - dw];
        let (r1, r2) = (r.random_range(1.0..1e3), r.random_range(1.0..1e3));
        let g = r.random_range(0.99..1.0);
        let eps = r.random_range(0.0..0.3);
        let (a1, a2) = arb_trade_closed_form(r1, r2, w, wp, g, eps);
        let k0 = wp[0] * r1.ln() + wp[1] * r2.ln();
        let k1 = wp[0] * (r1 - a1).ln() + wp[1] * (r2 + a2).ln();
        assert!((k1 - k0).abs() <= 1e-10 * k0.abs().max(1.0));
    }
}

#[test]
fn manipulation_cost_example_and_monotone() {
    let pool = PoolState::new(vec![100.0, 100.0], vec![0.5, 0.5], 1.0).unwrap();
    let market = MarketPrices::new(vec![1.0, 1.0]).unwrap();
    let s = AttackScenario::new(pool.clone(), market.clone(), vec![0.0, 0.0], 0.05).unwrap();
    let c = manipulation_cost(&s).unwrap();
    assert!((c - 0.059515).abs() < 1e-6, "{c}");

    let pool = PoolState::new(vec![300.0, 20.0], vec![0.35, 0.65], 0.997).unwrap();
    let market = worst_case_market(&pool, [0, 1]).unwrap();
    let base = AttackScenario::new(pool, market, vec![0.01, -0.01], epsilon_null(0.997)).unwrap();
    let mut prev_c = manipulation_cost(&base).unwrap();
    let no_update = |eps: f64| {
        AttackScenario::new(base.pool().clone(), base.market().clone(), vec![0.0, 0.0], eps).unwrap()
    };
    let mut prev_x = arb_return_upper_bound(&no_update(base.epsilon())).unwrap();
    for k in 1..=100 {
        let s = base.at_epsilon(base.epsilon() + 0.005 * k as f64).unwrap();
        let c = manipulation_cost(&s).unwrap();
        let x = arb_return_upper_bound(&no_update(s.epsilon())).unwrap();
        assert!(c > prev_c);
        assert!(x > prev_x);
        prev_c = c;
        prev_x = x;
    }
}

// Ternary search over the amount paid in for each direction, using the
// pool's own pair quote.
fn pair_arb_oracle(pool: &PoolState, market: &MarketPrices, i: usize, j: usize) -> f64 {
    let p = market.prices();
    let best_one_way = |inp: usize, out: usize| -> f64 {
        let profit = |d: f64| p[out] * pool.quote_pair_trade(inp, out, d) - p[inp] * d;
        let (mut lo, mut hi) = (0.0, 10.0 * pool.reserves()[inp]);
        for _ in 0..300 {
            let a = lo + (hi - lo) / 3.0;
            let b = hi - (hi - lo) / 3.0;
            if profit(a) < profit(b) {
                lo = a;
            } else {
                hi = b;
            }
        }
        profit(0.5 * (lo + hi)).max(0.0)
    };
    best_one_way(i, j).max(best_one_way(j, i))
}

#[test]
fn fee_aware_pair_matches_search_oracle() {
    let mut r = rng(3);
    for _ in 0..100 {
        let g = [1.0, 0.997, 0.99, 0.95][r.random_range(0..4)];
        let pool = random_pool(&mut r, 2, g);
        let market = random_market(&mut r, &pool, 0.3);
        let (trade, profit) = arb_fee_aware_pair(&pool, &market, 0, 1).unwrap();
        let oracle = pair_arb_oracle(&pool, &market, 0, 1);
        let scale = pool.value(&market);
        assert!(
            (profit - oracle).abs() <= 1e-6 * oracle.max(1e-9 * scale),
            "profit {profit} oracle {oracle}"
        );
        pool.validate_trade(&trade).unwrap();
    }
}

#[test]
fn no_fee_pair_arb_lands_on_market() {
    let mut r = rng(4);
    for _ in 0..50 {
        let pool = random_pool(&mut r, 2, 1.0);
        let market = random_market(&mut r, &pool, 0.3);
        let (t, _) = arb_fee_aware_pair(&pool, &market, 0, 1).unwrap();
        let after = pool.apply_trade(&t).unwrap();
        let rel = after.spot_price(1, 0) / market.relative(1, 0) - 1.0;
        assert!(rel.abs() < 1e-10, "{rel}");
    }
}

#[test]
fn ntoken_with_two_tokens_matches_pair() {
    let mut r = rng(5);
    for _ in 0..200 {
        let g = [1.0, 0.997, 0.99][r.random_range(0..3)];
        let pool = random_pool(&mut r, 2, g);
        let market = random_market(&mut r, &pool, 0.2);
        let (_, a) = arb_fee_aware_pair(&pool, &market, 0, 1).unwrap();
        let (t, b) = arb_fee_aware_ntoken(&pool, &market).unwrap();
        let scale = pool.value(&market);
        assert!((a - b).abs() <= 1e-8 * a.abs().max(1e-6 * scale), "{a} vs {b}");
        pool.validate_trade(&t).unwrap();
    }
}

#[test]
fn ntoken_without_fee_matches_lagrange() {
    let mut r = rng(6);
    for _ in 0..200 {
        let pool = random_pool(&mut r, 3, 1.0);
        let market = random_market(&mut r, &pool, 0.5);
        let (w, res, p) = (pool.weights(), pool.reserves(), market.prices());
        // Minimise sum p_i x_i subject to sum w_i ln x_i = ln k: x_i = lambda w_i / p_i.
        let ln_k: f64 = (0..3).map(|i| w[i] * res[i].ln()).sum();
        let ln_lambda = ln_k - (0..3).map(|i| w[i] * (w[i] / p[i]).ln()).sum::<f64>();
        let target: Vec<f64> = (0..3).map(|i| ln_lambda.exp() * w[i] / p[i]).collect();
        let expected: f64 = (0..3).map(|i| p[i] * (res[i] - target[i])).sum();
        let (t, profit) = arb_fee_aware_ntoken(&pool, &market).unwrap();
        let scale = pool.value(&market);
        assert!((profit - expected).abs() <= 1e-8 * expected.abs().max(1e-6 * scale));
        for i in 0..3 {
            let post = res[i] + t.delta_in[i] - t.lambda_out[i];
            assert!((post / target[i] - 1.0).abs() < 1e-8);
        }
    }
}

// Scale a random in/out proposal to trading-function equality by bisection.
fn feasible_trade(pool: &PoolState, dep: &[f64], wd: &[f64]) -> TradeIntent {
    let ln_k = pool.log_invariant();
    let at = |s: f64| TradeIntent {
        delta_in: dep.to_vec(),
        lambda_out: wd.iter().map(|x| x * s).collect(),
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    if pool.log_invariant_after(&at(1.0)) >= ln_k {
        return at(1.0);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if pool.log_invariant_after(&at(mid)) >= ln_k {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(lo)
}

#[test]
fn ntoken_with_fee_beats_random_feasible_trades() {
    let mut r = rng(7);
    for _ in 0..100 {
        let g = [0.997, 0.99, 0.95][r.random_range(0..3)];
        let pool = random_pool(&mut r, 3, g);
        let market = random_market(&mut r, &pool, 0.2);
        let (t, best) = arb_fee_aware_ntoken(&pool, &market).unwrap();
        pool.validate_trade(&t).unwrap();
        assert!(best >= 0.0);
        let scale = pool.value(&market);
        // Perturbations around the optimum and random trades never do better.
        for _ in 0..2000 {
            let mut dep = vec![0.0; 3];
            let mut wd = vec![0.0; 3];
            for k in 0..3 {
                let base = t.delta_in[k] - t.lambda_out[k];
                let x = if r.random_bool(0.5) {
                    base * r.random_range(0.9..1.1)
                } else {
                    pool.reserves()[k] * r.random_range(-0.5..0.5)
                };
                if x > 0.0 {
                    dep[k] = x;
                } else {
                    wd[k] = -x;
                }
            }
            let trial = feasible_trade(&pool, &dep, &wd);
            if pool.validate_trade(&trial).is_err() {
                continue;
            }
            let v = trial.net_value(&market);
            assert!(v <= best + 1e-10 * scale, "random trade {v} beats oracle {best}");
        }
    }
}

#[test]
fn ntoken_has_zero_trade_at_spot_without_fee() {
    let mut r = rng(8);
    let pool = random_pool(&mut r, 4, 1.0);
    let spots: Vec<f64> = (0..4).map(|i| pool.spot_price(i, 0)).collect();
    let market = MarketPrices::normalized(&spots).unwrap();
    let (t, p) = arb_fee_aware_ntoken(&pool, &market).unwrap();
    let scale = pool.value(&market);
    assert!(p.abs() <= 1e-12 * scale);
    for k in 0..4 {
        assert!(t.delta_in[k] <= 1e-12 * pool.reserves()[k]);
        assert!(t.lambda_out[k] <= 1e-12 * pool.reserves()[k]);
    }
}

fn random_scenario(r: &mut ChaCha8Rng, gamma: f64, dw_max: f64) -> AttackScenario {
    let pool = random_pool(r, 2, gamma);
    let market = if r.random_bool(0.5) {
        worst_case_market(&pool, [0, 1]).unwrap()
    } else {
        // Anywhere inside the band.
        let lg = -gamma.ln();
        let raw = [1.0, pool.spot_price(1, 0) * r.random_range(-lg..=lg).exp()];
        MarketPrices::normalized(&raw).unwrap()
    };
    let w = pool.weights()[0];
    let dw = r.random_range(-dw_max..=dw_max).clamp(0.02 - w, w - 0.02);
    let probe = AttackScenario::new(pool, market, vec![-dw, dw], 1.0).unwrap();
    let eps = probe.epsilon_null() + 10f64.powf(r.random_range(-5.0..0.0));
    probe.at_epsilon(eps).unwrap()
}

#[test]
fn fee_free_bound_dominates_fee_arbitrage() {
    let mut r = rng(9);
    for _ in 0..1000 {
        let g = [0.997, 0.99][r.random_range(0..2)];
        let s = random_scenario(&mut r, g, 0.05);
        let out = run_pair_attack(&s).unwrap();
        assert!(out.x_return_ub >= out.x_return, "{} < {}", out.x_return_ub, out.x_return);
        if out.arb_in != 0.0 || out.arb_out != 0.0 {
            assert!(out.x_return_ub > out.x_return);
        }
    }
}

#[test]
fn price_matched_fee_trade_brackets_no_fee_amounts() {
    let mut r = rng(10);
    for _ in 0..1000 {
        let g = [0.997, 0.99][r.random_range(0..2)];
        let s = random_scenario(&mut r, g, 0.05);
        let (d1, d2) = s.manipulation().unwrap();
        let wp = s.updated_weights();
        let res = s.pool().reserves();
        let after = PoolState::new(vec![res[0] + d1, res[1] - d2], wp.clone(), g).unwrap();
        let (out1, in2) = arb_price_matched_pair(&after, s.market(), 0, 1).unwrap();
        let (out1_free, in2_free) = {
            let free = after.with_gamma(1.0).unwrap();
            arb_price_matched_pair(&free, s.market(), 0, 1).unwrap()
        };
        if out1_free == 0.0 {
            continue;
        }
        // Positive direction: token 2 paid in, token 1 taken out.
        if in2_free > 0.0 {
            assert!(in2 > in2_free, "{in2} <= {in2_free}");
            assert!(out1 < out1_free, "{out1} >= {out1_free}");
        } else {
            assert!(-out1 > -out1_free);
            assert!(-in2 < -in2_free);
        }
    }
}

#[test]
fn no_weight_change_never_profits() {
    let mut r = rng(11);
    for _ in 0..200 {
        let g = [1.0, 0.997, 0.99][r.random_range(0..3)];
        let s = random_scenario(&mut r, g, 0.0);
        for k in 1..=20 {
            let s = s.at_epsilon(s.epsilon_null() + 0.01 * k as f64).unwrap();
            let out = run_pair_attack(&s).unwrap();
            if g < 1.0 {
                assert!(out.z < 0.0, "z = {} at eps {}", out.z, s.epsilon());
            } else {
                // Without fees the round trip is exactly neutral.
                assert!(out.z.abs() <= 1e-12 * out.pool_value, "z = {}", out.z);
            }
        }
    }
}

#[test]
fn large_weight_shift_admits_profitable_attack() {
    let pool = PoolState::new(vec![100.0, 100.0], vec![0.5, 0.5], 0.997).unwrap();
    let market = worst_case_market(&pool, [0, 1]).unwrap();
    let base = AttackScenario::new(pool, market, vec![-0.05, 0.05], epsilon_null(0.997)).unwrap();
    let best = (1..=400)
        .map(|k| {
            let s = base.at_epsilon(base.epsilon_null() + 0.0025 * k as f64).unwrap();
            run_pair_attack(&s).unwrap().z
        })
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(best > 0.0, "best z {best}");
}

#[test]
fn mirror_attack_is_reindexed_original() {
    let mut r = rng(12);
    for _ in 0..100 {
        let s = random_scenario(&mut r, 0.997, 0.05);
        let out = run_pair_attack(&s).unwrap();
        let pool = s.pool().permuted(&[1, 0]).unwrap();
        let p = s.market().prices();
        let market = MarketPrices::normalized(&[p[1], p[0]]).unwrap();
        let dw = s.weight_update();
        let mirror = AttackScenario::with_pair(pool, market, vec![dw[1], dw[0]], s.epsilon(), [1, 0]).unwrap();
        let m = run_pair_attack(&mirror).unwrap();
        // Values are in a different numeraire; compare relative to pool value.
        let a = out.z / out.pool_value;
        let b = m.z / m.pool_value;
        assert!((a - b).abs() <= 1e-9 * a.abs() + 1e-14, "{a} vs {b}");
        // Renormalising prices rounds the target; the root amplifies that
        // by about 1 / (eps - eps0).
        assert!((out.delta1 - m.delta1).abs() <= 1e-9 * out.delta1);
        assert!((out.delta2 - m.delta2).abs() <= 1e-9 * out.delta2);
    }
}

#[test]
fn null_epsilon_gives_bit_exact_zero() {
    let mut r = rng(13);
    for _ in 0..200 {
        let s = random_scenario(&mut r, 0.997, 0.05);
        let s = s.at_epsilon(s.epsilon_null()).unwrap();
        let out = run_pair_attack(&s).unwrap();
        assert_eq!(out.delta1, 0.0);
        assert_eq!(out.delta2, 0.0);
        assert_eq!(out.z, 0.0);
    }
}
