//! The three-stage pair attack and the arbitrage oracles it relies on.
//!
//! Stage 1: the attacker pays token `a` into the pool and withdraws token `b`
//! until the pool's fee-adjusted quote for `b` sits at `(1 + eps) * m_p`.
//! Stage 2: the weights move by `dw` between blocks; reserves are unchanged.
//! Stage 3: an arbitrage trade is taken against the updated pool.
//!
//! The attacker's gain over plain arbitrage is `Z = X(eps) - C(eps) - X(eps0)`,
//! where `eps0` is the deviation already present before any manipulation.
//! `Z` uses the fee-aware optimal arbitrage; `Z~` uses the no-fee closed form,
//! which bounds the fee-aware return from above.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poolcore::{check_weights, MarketError, MarketPrices, PoolError, PoolState, TradeIntent};
use crate::roots::{bisect_increasing, expand_upper, RootError};

/// Slack allowed on the pre-attack no-arb check and on `eps >= eps0`.
pub const SCENARIO_TOL: f64 = 1e-12;
/// Weight updates must sum to zero within this absolute tolerance.
pub const WEIGHT_UPDATE_SUM_TOL: f64 = 1e-12;

/// Deviation targets within this (log) of 1 are the null trade; recomputing
/// the target at `eps0` can land a few ulps above 1.
const NULL_TARGET_SLACK: f64 = 8.0 * f64::EPSILON;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AttackError {
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error("target deviation {target} is below the no-manipulation value; no root")]
    NoRoot { target: f64 },
    #[error("root finding failed: {0}")]
    Root(#[from] RootError),
    #[error("market has {market} prices for a {pool}-token pool")]
    MarketSize { market: usize, pool: usize },
    #[error("weight update has {got} entries for a {expected}-token pool")]
    UpdateSize { got: usize, expected: usize },
    #[error("weight update sums to {0}, expected 0")]
    UpdateSum(f64),
    #[error("pre-attack pool is outside the no-arb band (excess ratio {0})")]
    PreAttackArbitrage(f64),
    #[error("epsilon {epsilon} is below the null deviation {null}")]
    EpsilonBelowNull { epsilon: f64, null: f64 },
    #[error(transparent)]
    Arb(#[from] ArbError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ArbError {
    #[error("arbitrage multiplier search did not converge: {0}")]
    NonConvergence(String),
    #[error("market has {market} prices for a {pool}-token pool")]
    MarketSize { market: usize, pool: usize },
}

/// Worst-case pre-existing deviation of the fee-adjusted quote from the market:
/// `gamma^-2 - 1`.
pub fn epsilon_null(gamma: f64) -> f64 {
    1.0 / (gamma * gamma) - 1.0
}

/// `ln[(1 + x)(1 + gamma x)^r]`, the log of the stage-1 deviation reached by
/// paying in `x = Delta1 / R1`, with `r = w1 / w2`.
pub fn manip_delta1_log_lhs(x: f64, ratio: f64, gamma: f64) -> f64 {
    x.ln_1p() + ratio * (gamma * x).ln_1p()
}

/// `ln[s^-1 (1 + (s^-q - 1) / gamma)]` with `s = 1 - y`, `y = Delta2 / R2`,
/// `q = w2 / w1`.
pub fn manip_delta2_log_lhs(y: f64, ratio: f64, gamma: f64) -> f64 {
    let ln_s = (-y).ln_1p();
    -ln_s + ((-ratio * ln_s).exp_m1() / gamma).ln_1p()
}

/// Fraction `Delta1 / R1` that moves the deviation ratio to `target`
/// (`target = gamma^2 (1 + eps)` in the worst case).
pub fn solve_delta1_fraction(w1: f64, w2: f64, gamma: f64, target: f64) -> Result<f64, AttackError> {
    let ln_target = target.ln();
    if !(ln_target >= -SCENARIO_TOL) {
        return Err(AttackError::NoRoot { target });
    }
    if ln_target <= NULL_TARGET_SLACK {
        return Ok(0.0);
    }
    let ratio = w1 / w2;
    let f = |x: f64| manip_delta1_log_lhs(x, ratio, gamma) - ln_target;
    let hi = expand_upper(&f, 0.0, 1.0, 1100)?;
    Ok(bisect_increasing(f, 0.0, hi, 0.0)?)
}

/// Fraction `Delta2 / R2` withdrawn by the same manipulation, in `[0, 1)`.
pub fn solve_delta2_fraction(w1: f64, w2: f64, gamma: f64, target: f64) -> Result<f64, AttackError> {
    let ln_target = target.ln();
    if !(ln_target >= -SCENARIO_TOL) {
        return Err(AttackError::NoRoot { target });
    }
    if ln_target <= NULL_TARGET_SLACK {
        return Ok(0.0);
    }
    let ratio = w2 / w1;
    let f = |y: f64| manip_delta2_log_lhs(y, ratio, gamma) - ln_target;
    Ok(bisect_increasing(f, 0.0, 1.0 - 1e-12, 0.0)?)
}

/// Stage-1 inflow of token 1 for a worst-case pool at deviation `epsilon`.
pub fn solve_manip_delta1(r1: f64, w1: f64, w2: f64, gamma: f64, epsilon: f64) -> Result<f64, AttackError> {
    Ok(r1 * solve_delta1_fraction(w1, w2, gamma, gamma * gamma * (1.0 + epsilon))?)
}

/// Stage-1 outflow of token 2 for a worst-case pool at deviation `epsilon`.
pub fn solve_manip_delta2(r2: f64, w1: f64, w2: f64, gamma: f64, epsilon: f64) -> Result<f64, AttackError> {
    Ok(r2 * solve_delta2_fraction(w1, w2, gamma, gamma * gamma * (1.0 + epsilon))?)
}

/// No-fee arbitrage after the weight update, in closed form.
///
/// Returns `(Delta1', Delta2')`: token 1 taken out and token 2 paid in by the
/// arbitrageur, bringing the no-fee quote back to the market price. Both are
/// negative when the profitable direction is the opposite one.
pub fn arb_trade_closed_form(
    r1p: f64,
    r2p: f64,
    w: [f64; 2],
    wp: [f64; 2],
    gamma: f64,
    epsilon: f64,
) -> (f64, f64) {
    let ln_rho = (w[1] / wp[1]).ln() + (wp[0] / w[0]).ln() - gamma.ln() - epsilon.ln_1p();
    let s = wp[0] + wp[1];
    let d1 = -r1p * (ln_rho * wp[1] / s).exp_m1();
    let d2 = r2p * (-ln_rho * wp[0] / s).exp_m1();
    (d1, d2)
}

/// Full input of one pair attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScenario", into = "RawScenario")]
pub struct AttackScenario {
    pool: PoolState,
    market: MarketPrices,
    weight_update: Vec<f64>,
    epsilon: f64,
    pair: [usize; 2],
}

#[derive(Serialize, Deserialize)]
struct RawScenario {
    pool: PoolState,
    market: MarketPrices,
    weight_update: Vec<f64>,
    epsilon: f64,
    #[serde(default = "default_pair")]
    pair: [usize; 2],
}

fn default_pair() -> [usize; 2] {
    [0, 1]
}

impl TryFrom<RawScenario> for AttackScenario {
    type Error = AttackError;

    fn try_from(r: RawScenario) -> Result<Self, Self::Error> {
        AttackScenario::with_pair(r.pool, r.market, r.weight_update, r.epsilon, r.pair)
    }
}

impl From<AttackScenario> for RawScenario {
    fn from(s: AttackScenario) -> Self {
        RawScenario {
            pool: s.pool,
            market: s.market,
            weight_update: s.weight_update,
            epsilon: s.epsilon,
            pair: s.pair,
        }
    }
}

/// Checks a weight update against a pool: length, zero sum, and that the
/// updated weights stay on the open simplex. Returns the updated weights.
pub fn updated_weights(pool: &PoolState, weight_update: &[f64]) -> Result<Vec<f64>, AttackError> {
    let n = pool.n_tokens();
    if weight_update.len() != n {
        return Err(AttackError::UpdateSize {
            got: weight_update.len(),
            expected: n,
        });
    }
    let sum: f64 = weight_update.iter().sum();
    if !(sum.abs() <= WEIGHT_UPDATE_SUM_TOL) {
        return Err(AttackError::UpdateSum(sum));
    }
    let w: Vec<f64> = pool.weights().iter().zip(weight_update).map(|(w, d)| w + d).collect();
    check_weights(&w)?;
    Ok(w)
}

/// A market sitting at the pool-unfavourable edge of the no-arb band for
/// `pair = [a, b]`: the pool already quotes `b` at `m_p / gamma` in units of
/// `a`, and every other token at its no-fee quote.
pub fn worst_case_market(pool: &PoolState, pair: [usize; 2]) -> Result<MarketPrices, AttackError> {
    pool.check_pair(pair[0], pair[1])?;
    let mut raw: Vec<f64> = (0..pool.n_tokens()).map(|i| pool.spot_price(i, 0)).collect();
    raw[pair[1]] = pool.gamma() * raw[pair[0]] * pool.spot_price(pair[1], pair[0]);
    Ok(MarketPrices::normalized(&raw)?)
}

impl AttackScenario {
    /// Attack pumping token 1 against token 0.
    pub fn new(
        pool: PoolState,
        market: MarketPrices,
        weight_update: Vec<f64>,
        epsilon: f64,
    ) -> Result<Self, AttackError> {
        Self::with_pair(pool, market, weight_update, epsilon, [0, 1])
    }

    /// Attack paying in `pair[0]` and pumping the quote of `pair[1]`.
    pub fn with_pair(
        pool: PoolState,
        market: MarketPrices,
        weight_update: Vec<f64>,
        epsilon: f64,
        pair: [usize; 2],
    ) -> Result<Self, AttackError> {
        pool.check_pair(pair[0], pair[1])?;
        if market.len() != pool.n_tokens() {
            return Err(AttackError::MarketSize {
                market: market.len(),
                pool: pool.n_tokens(),
            });
        }
        updated_weights(&pool, &weight_update)?;
        let excess = pool.band_excess(&market);
        if !(excess <= 1.0 + SCENARIO_TOL) {
            return Err(AttackError::PreAttackArbitrage(excess));
        }
        let s = AttackScenario {
            pool,
            market,
            weight_update,
            epsilon,
            pair,
        };
        let null = s.epsilon_null();
        if !(epsilon.is_finite() && (1.0 + epsilon) >= (1.0 + null) * (1.0 - SCENARIO_TOL)) {
            return Err(AttackError::EpsilonBelowNull { epsilon, null });
        }
        Ok(s)
    }

    /// Same scenario at a different deviation.
    pub fn at_epsilon(&self, epsilon: f64) -> Result<Self, AttackError> {
        Self::with_pair(
            self.pool.clone(),
            self.market.clone(),
            self.weight_update.clone(),
            epsilon,
            self.pair,
        )
    }

    pub fn pool(&self) -> &PoolState {
        &self.pool
    }

    pub fn market(&self) -> &MarketPrices {
        &self.market
    }

    pub fn weight_update(&self) -> &[f64] {
        &self.weight_update
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn pair(&self) -> [usize; 2] {
        self.pair
    }

    /// Market price of the pumped token in units of the paid-in token.
    pub fn market_pair_price(&self) -> f64 {
        self.market.relative(self.pair[1], self.pair[0])
    }

    /// Deviation of the pre-attack fee-adjusted quote from the market. Equals
    /// [`epsilon_null`] when the market sits at the worst-case band edge.
    pub fn epsilon_null(&self) -> f64 {
        let quote = self.pool.fee_adjusted_quote(self.pair[1], self.pair[0]);
        quote / self.market_pair_price() - 1.0
    }

    /// Ratio `(1 + eps) / (1 + eps0)` driving the implicit stage-1 equations.
    fn target(&self) -> f64 {
        let quote = self.pool.fee_adjusted_quote(self.pair[1], self.pair[0]);
        (1.0 + self.epsilon) * self.market_pair_price() / quote
    }

    pub fn updated_weights(&self) -> Vec<f64> {
        updated_weights(&self.pool, &self.weight_update).expect("validated at construction")
    }

    /// Stage-1 amounts `(Delta1, Delta2)` in token units.
    pub fn manipulation(&self) -> Result<(f64, f64), AttackError> {
        let [a, b] = self.pair;
        let (w1, w2) = (self.pool.weights()[a], self.pool.weights()[b]);
        let gamma = self.pool.gamma();
        let target = self.target();
        let x = solve_delta1_fraction(w1, w2, gamma, target)?;
        let y = solve_delta2_fraction(w1, w2, gamma, target)?;
        Ok((self.pool.reserves()[a] * x, self.pool.reserves()[b] * y))
    }

    /// The stage-1 trade as a [`TradeIntent`].
    pub fn manipulation_trade(&self) -> Result<TradeIntent, AttackError> {
        let (d1, d2) = self.manipulation()?;
        Ok(TradeIntent::pair(self.pool.n_tokens(), self.pair[0], self.pair[1], d1, d2))
    }
}

/// Stage-1 cost in numeraire units: `p_a Delta1 - p_b Delta2`.
pub fn manipulation_cost(scenario: &AttackScenario) -> Result<f64, AttackError> {
    let (d1, d2) = scenario.manipulation()?;
    Ok(pair_cost(scenario, d1, d2))
}

fn pair_cost(s: &AttackScenario, d1: f64, d2: f64) -> f64 {
    let p = s.market.prices();
    p[s.pair[0]] * d1 - p[s.pair[1]] * d2
}

/// Upper bound `X_{gamma=1}(eps)` on the stage-3 arbitrage return.
pub fn arb_return_upper_bound(scenario: &AttackScenario) -> Result<f64, AttackError> {
    let (d1, d2) = scenario.manipulation()?;
    let (a1, a2) = closed_form_after(scenario, d1, d2, scenario.epsilon);
    Ok(pair_cost(scenario, a1, a2))
}

fn closed_form_after(s: &AttackScenario, d1: f64, d2: f64, epsilon: f64) -> (f64, f64) {
    let [a, b] = s.pair;
    let wp = s.updated_weights();
    let w = s.pool.weights();
    arb_trade_closed_form(
        s.pool.reserves()[a] + d1,
        s.pool.reserves()[b] - d2,
        [w[a], w[b]],
        [wp[a], wp[b]],
        s.pool.gamma(),
        epsilon,
    )
}

/// Profit-maximising arbitrage between tokens `i` and `j` with fees.
///
/// Returns the zero trade when the market price of `j` (in `i`) lies inside
/// the pool's no-arb band. Otherwise returns the trade at which the marginal
/// fee-inclusive exchange rate equals the market price. The profit is the
/// numeraire value received by the arbitrageur.
pub fn arb_fee_aware_pair(
    pool: &PoolState,
    market: &MarketPrices,
    i: usize,
    j: usize,
) -> Result<(TradeIntent, f64), AttackError> {
    pool.check_pair(i, j)?;
    if market.len() != pool.n_tokens() {
        return Err(AttackError::MarketSize {
            market: market.len(),
            pool: pool.n_tokens(),
        });
    }
    let n = pool.n_tokens();
    let m = market.relative(j, i);
    let gamma = pool.gamma();
    // Selling j to the pool pays gamma * spot(j, i) per unit at the margin.
    let sell_j = gamma.ln() + pool.spot_price(j, i).ln() - m.ln();
    let sell_i = gamma.ln() + pool.spot_price(i, j).ln() + m.ln();
    let trade = if sell_j > 0.0 {
        one_sided_optimum(pool, j, i, sell_j)
    } else if sell_i > 0.0 {
        one_sided_optimum(pool, i, j, sell_i)
    } else {
        TradeIntent::zero(n)
    };
    let profit = trade.net_value(market);
    Ok((trade, profit))
}

// Pay `inp` in, take `out` out, where `ln_edge = ln(gamma * spot(inp, out) / market(inp, out)) > 0`.
// With u = 1 + gamma x / R_in the marginal rate is gamma spot u^-(1+a), a = w_in / w_out.
fn one_sided_optimum(pool: &PoolState, inp: usize, out: usize, ln_edge: f64) -> TradeIntent {
    let w = pool.weights();
    let r = pool.reserves();
    let a = w[inp] / w[out];
    let ln_u = ln_edge / (1.0 + a);
    let delta = r[inp] * ln_u.exp_m1() / pool.gamma();
    let lambda = -r[out] * (-a * ln_u).exp_m1();
    TradeIntent::pair(pool.n_tokens(), inp, out, delta, lambda)
}

/// Fee-paying pair trade that lands on the same post-trade reserve ratio as
/// the no-fee optimum (the construction used to compare fee and no-fee
/// arbitrage amounts). Returns `(token i out, token j in)`, signed like
/// [`arb_trade_closed_form`]: positive when `j` is paid in.
pub fn arb_price_matched_pair(
    pool: &PoolState,
    market: &MarketPrices,
    i: usize,
    j: usize,
) -> Result<(f64, f64), AttackError> {
    pool.check_pair(i, j)?;
    let w = pool.weights();
    let r = pool.reserves();
    let gamma = pool.gamma();
    let m = market.relative(j, i);
    let spot = pool.spot_price(j, i);
    if spot == m {
        return Ok((0.0, 0.0));
    }
    // Target ratio R_i'' / R_j'' at which spot(j, i) = m.
    let ratio = m * w[i] / w[j];
    let ln_k = w[i] * r[i].ln() + w[j] * r[j].ln();
    if spot > m {
        // j is paid in: R_j'' = R_j + x, R_i'' = ratio (R_j + x), fee on x.
        let f = |x: f64| w[i] * (ratio * (r[j] + x)).ln() + w[j] * (r[j] + gamma * x).ln() - ln_k;
        let hi = expand_upper(&f, 0.0, r[j], 1100)?;
        let x = bisect_increasing(f, 0.0, hi, 0.0)?;
        let out_i = r[i] - ratio * (r[j] + x);
        Ok((out_i, x))
    } else {
        // i is paid in: R_i'' = R_i + x, R_j'' = (R_i + x) / ratio.
        let f = |x: f64| w[i] * (r[i] + gamma * x).ln() + w[j] * ((r[i] + x) / ratio).ln() - ln_k;
        let hi = expand_upper(&f, 0.0, r[i], 1100)?;
        let x = bisect_increasing(f, 0.0, hi, 0.0)?;
        let out_j = r[j] - (r[i] + x) / ratio;
        Ok((-x, -out_j))
    }
}

/// Reserves minimising pool value at `market` without fees:
/// `R_i'' = lambda w_i / p_i`, `lambda = k / prod (w_j / p_j)^{w_j}`.
pub fn no_fee_optimal_reserves(pool: &PoolState, market: &MarketPrices) -> Vec<f64> {
    let w = pool.weights();
    let p = market.prices();
    let ln_lambda = pool.log_invariant()
        - w.iter().zip(p).map(|(wi, pi)| wi * (wi / pi).ln()).sum::<f64>();
    w.iter().zip(p).map(|(wi, pi)| (ln_lambda + (wi / pi).ln()).exp()).collect()
}

/// Optimal multi-token arbitrage with fees.
///
/// Maximises `sum p_i (Lambda_i - Delta_i)` over trades accepted by the
/// trading function. At the optimum each token's fee-adjusted post-trade
/// reserve is `clamp(R_i, mu gamma w_i / p_i, mu w_i / p_i)` for one
/// multiplier `mu` that restores the trading function to equality. Tokens
/// whose reserve rises were paid in, those whose reserve falls were taken
/// out, the rest are untouched. In `t = ln mu` the log trading function is
/// piecewise linear and non-decreasing, so `t` is found exactly by scanning
/// its breakpoints.
pub fn arb_fee_aware_ntoken(
    pool: &PoolState,
    market: &MarketPrices,
) -> Result<(TradeIntent, f64), ArbError> {
    let n = pool.n_tokens();
    if market.len() != n {
        return Err(ArbError::MarketSize {
            market: market.len(),
            pool: n,
        });
    }
    let w = pool.weights();
    let r = pool.reserves();
    let p = market.prices();
    let ln_gamma = pool.gamma().ln();
    let ln_r: Vec<f64> = r.iter().map(|x| x.ln()).collect();
    let ln_wp: Vec<f64> = (0..n).map(|i| (w[i] / p[i]).ln()).collect();
    // Token i is taken out for t < ln v_i, paid in for t > ln v_i - ln gamma.
    let ln_v: Vec<f64> = (0..n).map(|i| ln_r[i] - ln_wp[i]).collect();
    let lo = ln_v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ln_v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(ArbError::NonConvergence(format!("non-finite state {ln_v:?}")));
    }
    if hi - lo <= -ln_gamma {
        return Ok((TradeIntent::zero(n), 0.0));
    }
    let ln_post = |t: f64, i: usize| (ln_wp[i] + t + ln_gamma).max(ln_r[i].min(ln_wp[i] + t));
    let ln_k = pool.log_invariant();
    let g = |t: f64| (0..n).map(|i| w[i] * ln_post(t, i)).sum::<f64>() - ln_k;

    let mut knots: Vec<f64> = ln_v.iter().flat_map(|&a| [a, a - ln_gamma]).collect();
    knots.sort_by(f64::total_cmp);
    // g(lo) <= 0 <= g(hi - ln gamma): find the segment holding the root.
    let mut left = knots[0];
    let mut g_left = g(left);
    if g_left > 0.0 {
        return Err(ArbError::NonConvergence(format!("g(lo) = {g_left} > 0")));
    }
    let mut t = f64::NAN;
    for &right in &knots[1..] {
        let g_right = g(right);
        if g_right >= 0.0 {
            t = if g_right == g_left {
                left
            } else {
                left + (right - left) * (-g_left) / (g_right - g_left)
            };
            break;
        }
        left = right;
        g_left = g_right;
    }
    if !t.is_finite() {
        return Err(ArbError::NonConvergence(format!("no sign change, g = {g_left}")));
    }
    let mut trade = TradeIntent::zero(n);
    for i in 0..n {
        let step = ln_post(t, i) - ln_r[i];
        if step > 0.0 {
            trade.delta_in[i] = r[i] * step.exp_m1() / pool.gamma();
        } else if step < 0.0 {
            trade.lambda_out[i] = -r[i] * step.exp_m1();
        }
    }
    let profit = trade.net_value(market);
    Ok((trade, profit))
}

/// Every stage quantity of one pair attack.
///
/// `arb_out` is token `a` taken out and `arb_in` token `b` paid in by the
/// stage-3 arbitrage (negative for the opposite direction). Fields without a
/// suffix use the fee-aware arbitrage; `_ub` fields use the no-fee closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub delta1: f64,
    pub delta2: f64,
    pub cost: f64,
    pub arb_in: f64,
    pub arb_out: f64,
    pub x_return: f64,
    pub x_null: f64,
    pub z: f64,
    pub arb_in_ub: f64,
    pub arb_out_ub: f64,
    pub x_return_ub: f64,
    pub x_null_ub: f64,
    pub z_ub: f64,
    pub epsilon_null: f64,
    pub pool_value: f64,
}

/// Signed pair amounts of a trade in the `(a out, b in)` convention.
fn signed_pair(trade: &TradeIntent, a: usize, b: usize) -> (f64, f64) {
    (
        trade.lambda_out[a] - trade.delta_in[a],
        trade.delta_in[b] - trade.lambda_out[b],
    )
}

/// Runs all three stages and the no-manipulation counterfactual.
pub fn run_pair_attack(scenario: &AttackScenario) -> Result<AttackOutcome, AttackError> {
    let s = scenario;
    let [a, b] = s.pair;
    let (d1, d2) = s.manipulation()?;
    let cost = pair_cost(s, d1, d2);

    let wp = s.updated_weights();
    let mut reserves = s.pool.reserves().to_vec();
    reserves[a] += d1;
    reserves[b] -= d2;
    let after = PoolState::new(reserves, wp.clone(), s.pool.gamma())?;
    let null_after = s.pool.with_weights(wp)?;

    let (arb, x_return) = arb_fee_aware_pair(&after, &s.market, a, b)?;
    let (_, x_null) = arb_fee_aware_pair(&null_after, &s.market, a, b)?;
    let (arb_out, arb_in) = signed_pair(&arb, a, b);

    let (arb_out_ub, arb_in_ub) = closed_form_after(s, d1, d2, s.epsilon);
    let (n1, n2) = closed_form_after(s, 0.0, 0.0, s.epsilon_null());
    let x_return_ub = pair_cost(s, arb_out_ub, arb_in_ub);
    let x_null_ub = pair_cost(s, n1, n2);

    Ok(AttackOutcome {
        delta1: d1,
        delta2: d2,
        cost,
        arb_in,
        arb_out,
        x_return,
        x_null,
        z: x_return - cost - x_null,
        arb_in_ub,
        arb_out_ub,
        x_return_ub,
        x_null_ub,
        z_ub: x_return_ub - cost - x_null_ub,
        epsilon_null: s.epsilon_null(),
        pool_value: s.pool.value(&s.market),
    })
}
