//! Adversarial attack search for one guardrail setting.
//!
//! Each restart draws a base reserve vector and a starting point in an
//! unconstrained free vector of dimension `4N`, then runs momentum gradient
//! ascent with central finite-difference gradients. The free vector maps
//! onto the feasible set by construction:
//!
//! | block | map |
//! |---|---|
//! | weights | `w = floor + (1 - N floor) softmax(x)` |
//! | band | `ln(p_i R_i / w_i)` spread over `[ln gamma, 0]` through a sigmoid |
//! | weight update | bounded `tanh` proposal projected onto the zero-sum box |
//! | trade | per-token in/out proposal within the trade cap, scaled to equality |
//!
//! Reserves stay fixed within a restart: rescaling a token's reserve and
//! its price together leaves the normalised return unchanged, so they carry
//! no extra freedom once prices are free.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack::{arb_fee_aware_ntoken, no_fee_optimal_reserves};
use crate::bounds::Guardrails;
use crate::poolcore::{MarketPrices, PoolState, TradeIntent};

/// `found` is reported when the best normalised return exceeds this.
pub const FOUND_THRESHOLD: f64 = 1e-9;

/// Restarts stop early after this many iterations without improvement.
const IMPROVEMENT_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error("need at least 2 tokens, got {0}")]
    TooFewTokens(usize),
    #[error("n_restarts must be at least 1")]
    NoRestarts,
    #[error("gamma must lie in (0, 1], got {0}")]
    BadGamma(f64),
    #[error("min_weight {min_weight} leaves no room for {n} tokens")]
    FloorTooHigh { min_weight: f64, n: usize },
    #[error("pair trade ({0}, {1}) is not a pair of distinct tokens")]
    BadPair(usize, usize),
    #[error("free vector has length {got}, expected {expected}")]
    Dimension { got: usize, expected: usize },
}

/// Shape of the first (manipulating) trade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TradeMode {
    /// Any set of tokens may be paid in or taken out.
    General,
    /// Only `pay_in` enters and only `take_out` leaves.
    Pair { pay_in: usize, take_out: usize },
}

/// Adam-style step parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub learning_rate: f64,
    /// Multiplicative learning-rate decay per iteration.
    pub decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Central-difference step in free-vector units.
    pub fd_step: f64,
    /// Stop a restart after this many iterations without improvement.
    pub patience: usize,
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            decay: 0.995,
            beta1: 0.9,
            beta2: 0.999,
            fd_step: 1e-5,
            patience: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpec {
    pub n_tokens: usize,
    pub guardrails: Guardrails,
    pub gamma: f64,
    pub n_restarts: usize,
    pub max_iters: usize,
    pub step_schedule: StepSchedule,
    pub master_seed: u64,
    /// Selects an independent random stream per sweep cell.
    pub cell_index: u32,
    pub trade_mode: TradeMode,
}

impl SearchSpec {
    pub fn new(n_tokens: usize, guardrails: Guardrails, gamma: f64, n_restarts: usize, master_seed: u64) -> Self {
        Self {
            n_tokens,
            guardrails,
            gamma,
            n_restarts,
            max_iters: 300,
            step_schedule: StepSchedule::default(),
            master_seed,
            cell_index: 0,
            trade_mode: TradeMode::General,
        }
    }

    pub fn dimension(&self) -> usize {
        4 * self.n_tokens
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let n = self.n_tokens;
        if n < 2 {
            return Err(SearchError::TooFewTokens(n));
        }
        if self.n_restarts == 0 {
            return Err(SearchError::NoRestarts);
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(SearchError::BadGamma(self.gamma));
        }
        if self.guardrails.min_weight * n as f64 >= 1.0 {
            return Err(SearchError::FloorTooHigh {
                min_weight: self.guardrails.min_weight,
                n,
            });
        }
        if let TradeMode::Pair { pay_in, take_out } = self.trade_mode {
            if pay_in == take_out || pay_in >= n || take_out >= n {
                return Err(SearchError::BadPair(pay_in, take_out));
            }
        }
        Ok(())
    }

    /// Random stream for one restart of this cell.
    pub fn restart_rng(&self, restart: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(((self.cell_index as u64) << 32) | restart as u64);
        rng
    }
}

/// A fully specified general attack: pre-attack pool and prices, first
/// trade, and the weight update applied before arbitrage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralScenario {
    pub pool: PoolState,
    pub market: MarketPrices,
    pub trade: TradeIntent,
    pub weight_update: Vec<f64>,
}

/// Objective breakdown at one scenario, in numeraire units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// `Z / V0` with the fee-aware arbitrage oracle; `-inf` on oracle failure.
    pub z_norm: f64,
    /// Same with a fee-free closing arbitrage.
    pub z_ub_norm: f64,
    pub cost: f64,
    pub x_return: f64,
    pub x_null: f64,
    pub pool_value: f64,
}

impl Evaluation {
    fn failed() -> Self {
        Self {
            z_norm: f64::NEG_INFINITY,
            z_ub_norm: f64::NEG_INFINITY,
            cost: f64::NAN,
            x_return: f64::NAN,
            x_null: f64::NAN,
            pool_value: f64::NAN,
        }
    }

    pub fn is_failure(&self) -> bool {
        self.z_norm == f64::NEG_INFINITY
    }
}

/// Normalised attacker return of a scenario.
///
/// The cost is the market value paid for the first trade, `X` the optimal
/// fee-aware arbitrage after the weight update and `X0` the same on the
/// untouched pool with updated weights.
pub fn objective(scenario: &GeneralScenario) -> Evaluation {
    let GeneralScenario {
        pool,
        market,
        trade,
        weight_update,
    } = scenario;
    let n = pool.n_tokens();
    let cost = -trade.net_value(market);
    let pool_value = pool.value(market);
    let w_new: Vec<f64> = (0..n).map(|i| pool.weights()[i] + weight_update[i]).collect();
    let r_after: Vec<f64> = (0..n)
        .map(|i| pool.reserves()[i] + trade.delta_in[i] - trade.lambda_out[i])
        .collect();
    let (after, null) = match (
        PoolState::new(r_after, w_new.clone(), pool.gamma()),
        pool.with_weights(w_new),
    ) {
        (Ok(a), Ok(b)) => (a, b),
        _ => return Evaluation::failed(),
    };
    let (x_return, x_null) = match (arb_fee_aware_ntoken(&after, market), arb_fee_aware_ntoken(&null, market)) {
        (Ok((_, x)), Ok((_, x0))) => (x, x0),
        _ => return Evaluation::failed(),
    };
    let no_fee_profit = |p: &PoolState| -> f64 {
        let target = no_fee_optimal_reserves(p, market);
        (0..n)
            .map(|i| market.prices()[i] * (p.reserves()[i] - target[i]))
            .sum()
    };
    let z = x_return - cost - x_null;
    let z_ub = no_fee_profit(&after) - cost - no_fee_profit(&null);
    if !z.is_finite() {
        return Evaluation::failed();
    }
    Evaluation {
        z_norm: z / pool_value,
        z_ub_norm: z_ub / pool_value,
        cost,
        x_return,
        x_null,
        pool_value,
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Closest point in `{sum = 0, lo_i <= x_i <= hi}` along a uniform shift.
fn project_zero_sum(a: &[f64], lo: &[f64], hi: f64) -> Vec<f64> {
    if hi == 0.0 {
        return vec![0.0; a.len()];
    }
    let clamp_sum = |tau: f64| -> f64 { a.iter().zip(lo).map(|(&v, &l)| (v - tau).clamp(l, hi)).sum() };
    // clamp_sum is non-increasing in tau; bracket its zero.
    let spread = a.iter().map(|v| v.abs()).fold(0.0, f64::max) + hi;
    let (mut t_lo, mut t_hi) = (-spread, spread);
    for _ in 0..200 {
        let mid = 0.5 * (t_lo + t_hi);
        if mid <= t_lo || mid >= t_hi {
            break;
        }
        if clamp_sum(mid) > 0.0 {
            t_lo = mid;
        } else {
            t_hi = mid;
        }
    }
    let tau = if clamp_sum(t_lo).abs() <= clamp_sum(t_hi).abs() { t_lo } else { t_hi };
    let mut out: Vec<f64> = a.iter().zip(lo).map(|(&v, &l)| (v - tau).clamp(l, hi)).collect();
    // Put the rounding residual on the entry with the most room.
    let residual: f64 = out.iter().sum();
    if residual != 0.0 {
        let k = (0..out.len())
            .max_by(|&i, &j| {
                let room = |m: usize| (out[m] - lo[m]).min(hi - out[m]);
                room(i).total_cmp(&room(j))
            })
            .unwrap_or(0);
        out[k] -= residual;
    }
    out
}

/// Safeguarded Newton solve of `f(s) = target` on `[0, 1]` for a monotone,
/// convex-or-concave `f` with `f(0) <= target <= f(1)` (or reversed).
fn newton_unit<F>(f: F, target: f64, start: f64) -> f64
where
    F: Fn(f64) -> (f64, f64),
{
    let mut s = start;
    for _ in 0..100 {
        let (v, d) = f(s);
        let r = v - target;
        if r == 0.0 || d == 0.0 || !d.is_finite() {
            break;
        }
        let next = (s - r / d).clamp(0.0, 1.0);
        if (next - s).abs() <= 4.0 * f64::EPSILON * s.abs().max(f64::MIN_POSITIVE) {
            s = next;
            break;
        }
        s = next;
    }
    s
}

/// Scales a proposed trade so the trading function holds with equality.
///
/// If the deposits alone overshoot the withdrawals they are scaled down,
/// otherwise the withdrawals are. A proposal with an empty side is zero.
fn equalize_trade(pool: &PoolState, deposits: &[f64], withdrawals: &[f64]) -> TradeIntent {
    let n = pool.n_tokens();
    let r = pool.reserves();
    let w = pool.weights();
    let g = pool.gamma();
    let any_in = deposits.iter().any(|&d| d > 0.0);
    let any_out = withdrawals.iter().any(|&d| d > 0.0);
    if !(any_in && any_out) {
        return TradeIntent::zero(n);
    }
    let gain = |d: f64| -> (f64, f64) {
        let mut v = 0.0;
        let mut dv = 0.0;
        for i in 0..n {
            if deposits[i] > 0.0 {
                let a = g * deposits[i] / r[i];
                v += w[i] * (d * a).ln_1p();
                dv += w[i] * a / (1.0 + d * a);
            }
        }
        (v, dv)
    };
    let loss = |s: f64| -> (f64, f64) {
        let mut v = 0.0;
        let mut dv = 0.0;
        for i in 0..n {
            if withdrawals[i] > 0.0 {
                let b = withdrawals[i] / r[i];
                v -= w[i] * (-s * b).ln_1p();
                dv += w[i] * b / (1.0 - s * b);
            }
        }
        (v, dv)
    };
    let (full_gain, _) = gain(1.0);
    let (full_loss, _) = loss(1.0);
    let (d, s) = if full_gain >= full_loss {
        (newton_unit(gain, full_loss, 1.0), 1.0)
    } else {
        (1.0, newton_unit(loss, full_gain, 0.0))
    };
    let mut trade = TradeIntent {
        delta_in: deposits.iter().map(|x| x * d).collect(),
        lambda_out: withdrawals.iter().map(|x| x * s).collect(),
    };
    // Newton can leave the invariant a rounding step short; trim withdrawals.
    if pool.validate_trade(&trade).is_err() {
        let shave = 1.0 - 1e-13;
        for x in trade.lambda_out.iter_mut() {
            *x *= shave;
        }
    }
    trade
}

/// Maps a free vector onto a feasible scenario.
///
/// `reserves` fixes the pool's reserves; the all-ones vector and a zero
/// free vector give equal weights, prices at the centre of the no-arb band,
/// no trade and no weight update.
pub fn parameterize(spec: &SearchSpec, reserves: &[f64], x: &[f64]) -> Result<GeneralScenario, SearchError> {
    let n = spec.n_tokens;
    if x.len() != spec.dimension() {
        return Err(SearchError::Dimension {
            got: x.len(),
            expected: spec.dimension(),
        });
    }
    let rails = &spec.guardrails;
    let floor = rails.min_weight;
    let (xw, rest) = x.split_at(n);
    let (xb, rest) = rest.split_at(n);
    let (xd, xt) = rest.split_at(n);

    let weights: Vec<f64> = softmax(xw)
        .into_iter()
        .map(|s| floor + (1.0 - n as f64 * floor) * s)
        .collect();

    let ln_inv_gamma = -spec.gamma.ln();
    let raw_prices: Vec<f64> = (0..n)
        .map(|i| weights[i] * (-ln_inv_gamma * sigmoid(xb[i])).exp() / reserves[i])
        .collect();
    let market = MarketPrices::normalized(&raw_prices).expect("positive prices");

    let cap = rails.max_weight_change;
    let proposal: Vec<f64> = xd.iter().map(|&y| 1.5 * cap * y.tanh()).collect();
    let lower: Vec<f64> = weights.iter().map(|&w| (-cap).max(floor - w).min(0.0)).collect();
    let weight_update = project_zero_sum(&proposal, &lower, cap);

    let pool = PoolState::new(reserves.to_vec(), weights, spec.gamma).expect("parameterised pool is valid");

    let frac = rails.max_trade_fraction;
    let u: Vec<f64> = match spec.trade_mode {
        TradeMode::General => xt.iter().map(|v| v.tanh()).collect(),
        TradeMode::Pair { pay_in, take_out } => {
            let mut u = vec![0.0; n];
            u[pay_in] = xt[pay_in].tanh().abs();
            u[take_out] = -xt[take_out].tanh().abs();
            u
        }
    };
    let deposits: Vec<f64> = (0..n).map(|i| frac * reserves[i] * u[i].max(0.0)).collect();
    let withdrawals: Vec<f64> = (0..n).map(|i| frac * reserves[i] * (-u[i]).max(0.0)).collect();
    let trade = equalize_trade(&pool, &deposits, &withdrawals);

    Ok(GeneralScenario {
        pool,
        market,
        trade,
        weight_update,
    })
}

/// Objective of the scenario a free vector maps to.
pub fn evaluate(spec: &SearchSpec, reserves: &[f64], x: &[f64]) -> Evaluation {
    match parameterize(spec, reserves, x) {
        Ok(s) => objective(&s),
        Err(_) => Evaluation::failed(),
    }
}

/// Central-difference gradient of `z_norm` in the free vector.
pub fn fd_gradient(spec: &SearchSpec, reserves: &[f64], x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            probe[k] = x[k] + h;
            let up = evaluate(spec, reserves, &probe).z_norm;
            probe[k] = x[k] - h;
            let down = evaluate(spec, reserves, &probe).z_norm;
            probe[k] = x[k];
            let g = (up - down) / (2.0 * h);
            if g.is_finite() {
                g
            } else {
                0.0
            }
        })
        .collect()
}

/// Best point of one restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartResult {
    pub restart: usize,
    pub reserves: Vec<f64>,
    pub x: Vec<f64>,
    pub evaluation: Evaluation,
    pub iterations: usize,
    pub oracle_failures: usize,
}

/// Random starting reserves and free vector for one restart.
pub fn initial_point(spec: &SearchSpec, restart: usize) -> (Vec<f64>, Vec<f64>) {
    let n = spec.n_tokens;
    let mut rng = spec.restart_rng(restart);
    let reserves: Vec<f64> = (0..n).map(|_| 10f64.powf(4.0 * rng.random::<f64>())).collect();
    let mut x = Vec::with_capacity(4 * n);
    // Exponential draws through softmax give a flat Dirichlet.
    for _ in 0..n {
        let e = -(1.0 - rng.random::<f64>()).ln();
        x.push(e.max(1e-300).ln());
    }
    for _ in 0..n {
        let q: f64 = rng.random_range(1e-6..1.0 - 1e-6);
        x.push((q / (1.0 - q)).ln());
    }
    for _ in 0..n {
        let u: f64 = rng.random_range(-1.0..1.0);
        x.push((u / 1.5).atanh());
    }
    for _ in 0..n {
        let size = 10f64.powf(-5.0 * rng.random::<f64>()).min(0.999);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        x.push((sign * size).atanh());
    }
    (reserves, x)
}

/// Momentum ascent from `x0`, keeping the best point visited.
pub fn ascend(spec: &SearchSpec, reserves: &[f64], x0: &[f64], restart: usize) -> RestartResult {
    let sched = &spec.step_schedule;
    let dim = x0.len();
    let mut x = x0.to_vec();
    let mut m = vec![0.0; dim];
    let mut v = vec![0.0; dim];
    let mut failures = 0;
    let mut current = evaluate(spec, reserves, &x);
    if current.is_failure() {
        failures += 1;
    }
    let mut best_x = x.clone();
    let mut best = current;
    let mut stale = 0;
    let mut lr = sched.learning_rate;
    let mut iterations = 0;
    for t in 1..=spec.max_iters {
        iterations = t;
        let g = fd_gradient(spec, reserves, &x, sched.fd_step);
        let (b1t, b2t) = (sched.beta1.powi(t as i32), sched.beta2.powi(t as i32));
        for k in 0..dim {
            m[k] = sched.beta1 * m[k] + (1.0 - sched.beta1) * g[k];
            v[k] = sched.beta2 * v[k] + (1.0 - sched.beta2) * g[k] * g[k];
            let mhat = m[k] / (1.0 - b1t);
            let vhat = v[k] / (1.0 - b2t);
            if vhat > 0.0 {
                x[k] += lr * mhat / (vhat.sqrt() + 1e-300_f64.max(1e-12 * vhat.sqrt()));
            }
        }
        lr *= sched.decay;
        current = evaluate(spec, reserves, &x);
        if current.is_failure() {
            failures += 1;
        }
        if current.z_norm > best.z_norm + IMPROVEMENT_TOL {
            stale = 0;
        } else {
            stale += 1;
        }
        if current.z_norm > best.z_norm || best.is_failure() && !current.is_failure() {
            best = current;
            best_x.copy_from_slice(&x);
        }
        if stale >= sched.patience {
            break;
        }
    }
    RestartResult {
        restart,
        reserves: reserves.to_vec(),
        x: best_x,
        evaluation: best,
        iterations,
        oracle_failures: failures,
    }
}

/// Best attack over all restarts of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestAttack {
    pub z_norm: f64,
    /// Same scenario scored with a fee-free closing arbitrage.
    pub z_ub_norm: f64,
    pub scenario: Option<GeneralScenario>,
    pub found: bool,
    pub restarts_used: usize,
    pub best_restart: Option<usize>,
    pub oracle_failures: usize,
    /// Argmax in free-vector form, for warm starts.
    pub reserves: Vec<f64>,
    pub x: Vec<f64>,
}

/// Deterministic reduction: larger `z_norm` wins, ties go to the lower
/// restart index.
fn better(a: &RestartResult, b: &RestartResult) -> bool {
    match a.evaluation.z_norm.total_cmp(&b.evaluation.z_norm) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => a.restart < b.restart,
    }
}

fn reduce(spec: &SearchSpec, results: Vec<RestartResult>) -> BestAttack {
    let oracle_failures = results.iter().map(|r| r.oracle_failures).sum();
    let restarts_used = results.len();
    let best = results.into_iter().fold(None::<RestartResult>, |acc, r| match acc {
        Some(a) if !better(&r, &a) => Some(a),
        _ => Some(r),
    });
    match best {
        Some(b) if !b.evaluation.is_failure() => {
            let scenario = parameterize(spec, &b.reserves, &b.x).ok();
            BestAttack {
                z_norm: b.evaluation.z_norm,
                z_ub_norm: b.evaluation.z_ub_norm,
                scenario,
                found: b.evaluation.z_norm > FOUND_THRESHOLD,
                restarts_used,
                best_restart: Some(b.restart),
                oracle_failures,
                reserves: b.reserves,
                x: b.x,
            }
        }
        _ => BestAttack {
            z_norm: f64::NEG_INFINITY,
            z_ub_norm: f64::NEG_INFINITY,
            scenario: None,
            found: false,
            restarts_used,
            best_restart: None,
            oracle_failures,
            reserves: Vec::new(),
            x: Vec::new(),
        },
    }
}

/// Runs every restart of a cell and keeps the best.
///
/// Restarts run on the current rayon pool; the result does not depend on
/// how many threads it has.
pub fn search_cell(spec: &SearchSpec) -> Result<BestAttack, SearchError> {
    spec.validate()?;
    let results: Vec<RestartResult> = (0..spec.n_restarts)
        .into_par_iter()
        .map(|k| {
            let (reserves, x0) = initial_point(spec, k);
            ascend(spec, &reserves, &x0, k)
        })
        .collect();
    Ok(reduce(spec, results))
}

/// Re-optimises a found attack with its first trade restricted to one
/// ordered pair, starting from the general optimum's weights, band and
/// weight update. Returns the best over all ordered pairs.
pub fn best_pair_restriction(spec: &SearchSpec, best: &BestAttack) -> Result<BestAttack, SearchError> {
    spec.validate()?;
    let n = spec.n_tokens;
    if best.x.len() != spec.dimension() {
        return Err(SearchError::Dimension {
            got: best.x.len(),
            expected: spec.dimension(),
        });
    }
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let results: Vec<RestartResult> = pairs
        .par_iter()
        .enumerate()
        .map(|(k, &(i, j))| {
            let pair_spec = SearchSpec {
                trade_mode: TradeMode::Pair { pay_in: i, take_out: j },
                ..spec.clone()
            };
            let mut x0 = best.x.clone();
            let xt = &mut x0[3 * n..];
            let size = xt[i].tanh().abs().max(xt[j].tanh().abs()).clamp(1e-6, 0.999);
            for v in xt.iter_mut() {
                *v = 0.0;
            }
            xt[i] = size.atanh();
            xt[j] = size.atanh();
            let mut r = ascend(&pair_spec, &best.reserves, &x0, k);
            r.restart = k;
            r
        })
        .collect();
    let (k, _) = results
        .iter()
        .enumerate()
        .fold((0, &results[0]), |(bk, b), (k, r)| if better(r, b) { (k, r) } else { (bk, b) });
    let (i, j) = pairs[k];
    let pair_spec = SearchSpec {
        trade_mode: TradeMode::Pair { pay_in: i, take_out: j },
        ..spec.clone()
    };
    Ok(reduce(&pair_spec, vec![results[k].clone()]))
}
