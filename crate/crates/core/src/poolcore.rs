//! Geometric-mean pool with time-varying weights.
//!
//! A pool holds `N` reserves `R_i`, a weight vector `w` on the open simplex and
//! a fee parameter `gamma` (the fee charged on inflows is `1 - gamma`). Its
//! trading function is `prod R_i^{w_i} = k`, where `k` depends on the weights
//! in force at the block the trade lands in. Nothing here caches `k`; it is
//! always recomputed from the current reserves and weights.
//!
//! All products of powers are evaluated in the log domain.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Weights must sum to one within this absolute tolerance.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Smallest admissible weight entry.
pub const MIN_WEIGHT_ENTRY: f64 = 1e-9;
/// Smallest admissible reserve.
pub const MIN_RESERVE: f64 = 1e-12;
/// Relative tolerance on the trading-function comparison in [`PoolState::validate_trade`].
pub const ACCEPT_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PoolError {
    #[error("pool needs at least two tokens, got {0}")]
    TooFewTokens(usize),
    #[error("reserves and weights differ in length ({reserves} vs {weights})")]
    LengthMismatch { reserves: usize, weights: usize },
    #[error("reserve {index} = {value} is not a finite value >= {MIN_RESERVE}")]
    BadReserve { index: usize, value: f64 },
    #[error("weight {index} = {value} is outside [{MIN_WEIGHT_ENTRY}, 1)")]
    BadWeight { index: usize, value: f64 },
    #[error("weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("gamma = {0} is outside (0, 1]")]
    BadGamma(f64),
    #[error("token index {index} out of range for a {n}-token pool")]
    BadIndex { index: usize, n: usize },
    #[error("token pair ({0}, {0}) is not a pair")]
    SameToken(usize),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MarketError {
    #[error("market needs at least two prices")]
    TooFew,
    #[error("price {index} = {value} is not finite and positive")]
    BadPrice { index: usize, value: f64 },
    #[error("numeraire price (index 0) must be exactly 1, got {0}")]
    Numeraire(f64),
}

/// Reasons a trade can be refused by the trading function.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TradeRejection {
    #[error("self-trade: token {0} is both paid in and taken out")]
    SelfTrade(usize),
    #[error("drains-reserve: token {0} withdrawal reaches the whole reserve")]
    DrainsReserve(usize),
    #[error("trade vector length {got} does not match pool size {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("amount for token {0} is negative or not finite")]
    BadAmount(usize),
    #[error("trading function would fall by {log_shortfall:e} in log terms")]
    InvariantDecrease { log_shortfall: f64 },
}

/// Reserves, weights and fee of one pool at one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPool", into = "RawPool")]
pub struct PoolState {
    reserves: Vec<f64>,
    weights: Vec<f64>,
    gamma: f64,
}

#[derive(Serialize, Deserialize)]
struct RawPool {
    reserves: Vec<f64>,
    weights: Vec<f64>,
    gamma: f64,
}

impl TryFrom<RawPool> for PoolState {
    type Error = PoolError;

    fn try_from(raw: RawPool) -> Result<Self, Self::Error> {
        PoolState::new(raw.reserves, raw.weights, raw.gamma)
    }
}

impl From<PoolState> for RawPool {
    fn from(p: PoolState) -> Self {
        RawPool {
            reserves: p.reserves,
            weights: p.weights,
            gamma: p.gamma,
        }
    }
}

pub(crate) fn check_weights(weights: &[f64]) -> Result<(), PoolError> {
    for (index, &value) in weights.iter().enumerate() {
        if !value.is_finite() || value < MIN_WEIGHT_ENTRY || value >= 1.0 {
            return Err(PoolError::BadWeight { index, value });
        }
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(PoolError::WeightSum(sum));
    }
    Ok(())
}

impl PoolState {
    pub fn new(reserves: Vec<f64>, weights: Vec<f64>, gamma: f64) -> Result<Self, PoolError> {
        if reserves.len() != weights.len() {
            return Err(PoolError::LengthMismatch {
                reserves: reserves.len(),
                weights: weights.len(),
            });
        }
        if reserves.len() < 2 {
            return Err(PoolError::TooFewTokens(reserves.len()));
        }
        for (index, &value) in reserves.iter().enumerate() {
            if !value.is_finite() || value < MIN_RESERVE {
                return Err(PoolError::BadReserve { index, value });
            }
        }
        check_weights(&weights)?;
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(PoolError::BadGamma(gamma));
        }
        Ok(PoolState {
            reserves,
            weights,
            gamma,
        })
    }

    pub fn n_tokens(&self) -> usize {
        self.reserves.len()
    }

    pub fn reserves(&self) -> &[f64] {
        &self.reserves
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn check_pair(&self, i: usize, j: usize) -> Result<(), PoolError> {
        let n = self.n_tokens();
        for index in [i, j] {
            if index >= n {
                return Err(PoolError::BadIndex { index, n });
            }
        }
        if i == j {
            return Err(PoolError::SameToken(i));
        }
        Ok(())
    }

    /// Same reserves and fee, new weights (the between-block weight update).
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self, PoolError> {
        PoolState::new(self.reserves.clone(), weights, self.gamma)
    }

    pub fn with_reserves(&self, reserves: Vec<f64>) -> Result<Self, PoolError> {
        PoolState::new(reserves, self.weights.clone(), self.gamma)
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self, PoolError> {
        PoolState::new(self.reserves.clone(), self.weights.clone(), gamma)
    }

    /// Token `perm[k]` of `self` becomes token `k` of the result.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, PoolError> {
        let n = self.n_tokens();
        if let Some(&index) = perm.iter().find(|&&p| p >= n) {
            return Err(PoolError::BadIndex { index, n });
        }
        PoolState::new(
            perm.iter().map(|&p| self.reserves[p]).collect(),
            perm.iter().map(|&p| self.weights[p]).collect(),
            self.gamma,
        )
    }

    /// `ln k = sum w_i ln R_i`.
    pub fn log_invariant(&self) -> f64 {
        self.reserves
            .iter()
            .zip(&self.weights)
            .map(|(r, w)| w * r.ln())
            .sum()
    }

    /// The trading-function value `k = prod R_i^{w_i}`.
    pub fn invariant_k(&self) -> f64 {
        self.log_invariant().exp()
    }

    /// Log of the trading function evaluated on the fee-adjusted post-trade
    /// reserves `R_i + gamma*Delta_i - Lambda_i`. Does not check the trade.
    pub fn log_invariant_after(&self, trade: &TradeIntent) -> f64 {
        (0..self.n_tokens())
            .map(|i| {
                let eff = self.reserves[i] + self.gamma * trade.delta_in[i] - trade.lambda_out[i];
                self.weights[i] * eff.ln()
            })
            .sum()
    }

    /// Accepts a trade iff the trading function does not decrease (up to a
    /// relative tolerance of [`ACCEPT_REL_TOL`]). Trades that increase `k` are
    /// accepted.
    pub fn validate_trade(&self, trade: &TradeIntent) -> Result<(), TradeRejection> {
        let n = self.n_tokens();
        for len in [trade.delta_in.len(), trade.lambda_out.len()] {
            if len != n {
                return Err(TradeRejection::LengthMismatch { got: len, expected: n });
            }
        }
        for i in 0..n {
            let (d, l) = (trade.delta_in[i], trade.lambda_out[i]);
            if !(d.is_finite() && l.is_finite() && d >= 0.0 && l >= 0.0) {
                return Err(TradeRejection::BadAmount(i));
            }
            if d > 0.0 && l > 0.0 {
                return Err(TradeRejection::SelfTrade(i));
            }
            if l >= self.reserves[i] {
                return Err(TradeRejection::DrainsReserve(i));
            }
        }
        let shortfall = self.log_invariant() - self.log_invariant_after(trade);
        if shortfall > ACCEPT_REL_TOL {
            return Err(TradeRejection::InvariantDecrease {
                log_shortfall: shortfall,
            });
        }
        Ok(())
    }

    /// Reserves after the trade settles. The full inflow (fee included) stays
    /// in the pool.
    pub fn apply_trade(&self, trade: &TradeIntent) -> Result<Self, PoolError> {
        let reserves = self
            .reserves
            .iter()
            .zip(trade.delta_in.iter().zip(&trade.lambda_out))
            .map(|(r, (d, l))| r + d - l)
            .collect();
        self.with_reserves(reserves)
    }

    /// Amount of token `j` the pool pays out for `delta_i` of token `i`, at
    /// equality of the trading function.
    pub fn quote_pair_trade(&self, i: usize, j: usize, delta_i: f64) -> f64 {
        let ratio = self.weights[i] / self.weights[j];
        let growth = (self.gamma * delta_i / self.reserves[i]).ln_1p();
        -self.reserves[j] * (-ratio * growth).exp_m1()
    }

    /// No-fee price of `token` in units of `numeraire`:
    /// `(w_token / R_token) / (w_num / R_num)`.
    pub fn spot_price(&self, token: usize, numeraire: usize) -> f64 {
        (self.weights[token] / self.reserves[token])
            / (self.weights[numeraire] / self.reserves[numeraire])
    }

    /// Marginal price, in `numeraire`, of buying `token` from the pool with
    /// fees: `spot_price / gamma`.
    pub fn fee_adjusted_quote(&self, token: usize, numeraire: usize) -> f64 {
        self.spot_price(token, numeraire) / self.gamma
    }

    /// External prices of `token` (in `numeraire`) for which neither trade
    /// direction is profitable.
    pub fn no_arb_band(&self, token: usize, numeraire: usize) -> QuoteBand {
        let mid = self.spot_price(token, numeraire);
        QuoteBand {
            lower: self.gamma * mid,
            upper: mid / self.gamma,
        }
    }

    /// Value of the reserves at the given external prices.
    pub fn value(&self, market: &MarketPrices) -> f64 {
        self.reserves
            .iter()
            .zip(market.prices())
            .map(|(r, p)| r * p)
            .sum()
    }

    /// Largest ratio of `gamma * (pool price) / (market price)` over all
    /// ordered pairs. The pool is inside every pairwise no-arb band iff this
    /// is at most one.
    pub fn band_excess(&self, market: &MarketPrices) -> f64 {
        // v_i = p_i R_i / w_i; pair (i, j) is in band iff v_i / v_j <= 1/gamma.
        let v: Vec<f64> = (0..self.n_tokens())
            .map(|i| market.prices()[i] * self.reserves[i] / self.weights[i])
            .collect();
        let hi = v.iter().cloned().fold(f64::MIN, f64::max);
        let lo = v.iter().cloned().fold(f64::MAX, f64::min);
        self.gamma * hi / lo
    }

    /// True when every token pair quotes inside its no-arb band at `market`,
    /// with relative slack `tol`.
    pub fn within_no_arb(&self, market: &MarketPrices, tol: f64) -> bool {
        self.band_excess(market) <= 1.0 + tol
    }
}

/// A multi-token trade: `delta_in` is paid into the pool, `lambda_out` taken out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeIntent {
    pub delta_in: Vec<f64>,
    pub lambda_out: Vec<f64>,
}

impl TradeIntent {
    pub fn zero(n: usize) -> Self {
        TradeIntent {
            delta_in: vec![0.0; n],
            lambda_out: vec![0.0; n],
        }
    }

    /// One-hot pair trade: `delta` of token `i` in, `lambda` of token `j` out.
    pub fn pair(n: usize, i: usize, j: usize, delta: f64, lambda: f64) -> Self {
        let mut t = TradeIntent::zero(n);
        t.delta_in[i] = delta;
        t.lambda_out[j] = lambda;
        t
    }

    pub fn is_zero(&self) -> bool {
        self.delta_in.iter().chain(&self.lambda_out).all(|&x| x == 0.0)
    }

    /// Net value received by the trader at `market`: `sum p_i (Lambda_i - Delta_i)`.
    pub fn net_value(&self, market: &MarketPrices) -> f64 {
        market
            .prices()
            .iter()
            .zip(self.delta_in.iter().zip(&self.lambda_out))
            .map(|(p, (d, l))| p * (l - d))
            .sum()
    }
}

/// External prices in units of the numeraire (token 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MarketPrices {
    prices: Vec<f64>,
}

impl TryFrom<Vec<f64>> for MarketPrices {
    type Error = MarketError;

    fn try_from(prices: Vec<f64>) -> Result<Self, Self::Error> {
        MarketPrices::new(prices)
    }
}

impl From<MarketPrices> for Vec<f64> {
    fn from(m: MarketPrices) -> Self {
        m.prices
    }
}

impl MarketPrices {
    pub fn new(prices: Vec<f64>) -> Result<Self, MarketError> {
        if prices.len() < 2 {
            return Err(MarketError::TooFew);
        }
        for (index, &value) in prices.iter().enumerate() {
            if !(value.is_finite() && value > 0.0) {
                return Err(MarketError::BadPrice { index, value });
            }
        }
        if prices[0] != 1.0 {
            return Err(MarketError::Numeraire(prices[0]));
        }
        Ok(MarketPrices { prices })
    }

    /// Rescales arbitrary positive prices so that token 0 is the numeraire.
    pub fn normalized(raw: &[f64]) -> Result<Self, MarketError> {
        let base = *raw.first().ok_or(MarketError::TooFew)?;
        if !(base.is_finite() && base > 0.0) {
            return Err(MarketError::BadPrice { index: 0, value: base });
        }
        let mut prices: Vec<f64> = raw.iter().map(|p| p / base).collect();
        prices[0] = 1.0;
        MarketPrices::new(prices)
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    /// Price of `token` in units of `numeraire`.
    pub fn relative(&self, token: usize, numeraire: usize) -> f64 {
        self.prices[token] / self.prices[numeraire]
    }
}

/// Interval of external prices around a pool quote that admits no arbitrage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuoteBand {
    pub lower: f64,
    pub upper: f64,
}

impl QuoteBand {
    pub fn contains(&self, price: f64) -> bool {
        self.lower <= price && price <= self.upper
    }
}
