//! Weight-change bounds under which the pair attack cannot profit, and the
//! guardrail checks a pool applies to trades and weight updates.
//!
//! If the no-fee bound `Z~(eps)` is non-increasing in `eps` then no deviation
//! beyond the null value pays. That holds when two gradient conditions hold
//! at the size of the manipulating trade; both tighten monotonically as the
//! trade grows, so checking them at the trade-size cap covers every smaller
//! trade. For a two-token pool the conditions, together with their mirror
//! images for the opposite attack direction, become four bounds on
//! `dw = dw_1 = -dw_2`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

use crate::poolcore::{PoolState, TradeIntent};

/// `dDelta1/deps` along the worst-case stage-1 root, evaluated at `delta1`.
pub fn ddelta1_depsilon(r1: f64, w1: f64, w2: f64, gamma: f64, delta1: f64) -> f64 {
    let x = delta1 / r1;
    let ratio = w1 / w2;
    let inner = 1.0 + gamma * ratio * (1.0 + x) / (1.0 + gamma * x);
    gamma * gamma * r1 / (inner * (ratio * (gamma * x).ln_1p()).exp())
}

/// `dDelta2/deps` along the worst-case stage-1 root, evaluated at `delta2`.
pub fn ddelta2_depsilon(r2: f64, w1: f64, w2: f64, gamma: f64, delta2: f64) -> f64 {
    let s = 1.0 - delta2 / r2;
    let q = w2 / w1;
    gamma.powi(3) * r2 * s * s / ((1.0 + q) * (-q * s.ln()).exp() - (1.0 - gamma))
}

/// The two gradient conditions for the traded pair, with `(w1, w2)` the
/// pre-update and `(w1p, w2p)` the post-update weights of the pair.
///
/// `cond_a` makes `Delta1' - Delta1` non-increasing in `eps`; `cond_b` does
/// the same for `Delta2 - Delta2'`. Both holding rules the attack out.
pub fn gradient_conditions_n(
    w1: f64,
    w2: f64,
    w1p: f64,
    w2p: f64,
    gamma: f64,
    delta1_over_r1: f64,
    delta2_over_r2: f64,
) -> (bool, bool) {
    let sp = w1p + w2p;
    let q1 = (1.0 + delta1_over_r1) / (1.0 + gamma * delta1_over_r1);
    // w2p/sp * (1 + gamma (w1/w2) q1) <= 1, multiplied through by sp * w2.
    let cond_a = w2p * (w2 + gamma * w1 * q1) <= sp * w2;
    let f = (1.0 - gamma) * ((w2 / w1) * (-delta2_over_r2).ln_1p()).exp();
    // w1p/sp >= (1 - f) / (1 + w2/w1 - f), multiplied through by sp * w1 denominators.
    let cond_b = w1p * (w1 + w2 - w1 * f) >= sp * w1 * (1.0 - f);
    (cond_a, cond_b)
}

/// Which of the four two-token inequalities a cell fails (or `None`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Binding {
    LowerInflow,
    LowerOutflow,
    UpperInflow,
    UpperOutflow,
    None,
}

impl Binding {
    pub fn label(self) -> &'static str {
        match self {
            Binding::LowerInflow => "lower-inflow",
            Binding::LowerOutflow => "lower-outflow",
            Binding::UpperInflow => "upper-inflow",
            Binding::UpperOutflow => "upper-outflow",
            Binding::None => "none",
        }
    }
}

impl fmt::Display for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Bounds on `dw` for a two-token pool with `w = w_1`.
///
/// The lower bounds come from attacks pumping token 2 and the upper bounds
/// from the mirror attack pumping token 1. Each attack contributes one bound
/// from its inflow leg and one from its outflow leg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoTokenBounds {
    pub lb_inflow: f64,
    pub lb_outflow: f64,
    pub ub_inflow: f64,
    pub ub_outflow: f64,
}

impl TwoTokenBounds {
    pub fn lower(&self) -> f64 {
        self.lb_inflow.max(self.lb_outflow)
    }

    pub fn upper(&self) -> f64 {
        self.ub_inflow.min(self.ub_outflow)
    }

    pub fn is_safe(&self, dw: f64) -> bool {
        self.lower() <= dw && dw <= self.upper()
    }

    /// Largest `|dw|` that is safe in both directions.
    pub fn half_width(&self) -> f64 {
        (-self.lower()).min(self.upper()).max(0.0)
    }

    /// The most violated inequality at `dw`, or [`Binding::None`] when safe.
    pub fn binding(&self, dw: f64) -> Binding {
        let violations = [
            (self.lb_inflow - dw, Binding::LowerInflow),
            (self.lb_outflow - dw, Binding::LowerOutflow),
            (dw - self.ub_inflow, Binding::UpperInflow),
            (dw - self.ub_outflow, Binding::UpperOutflow),
        ];
        violations
            .iter()
            .filter(|(v, _)| *v > 0.0)
            .fold((0.0, Binding::None), |best, &(v, b)| if v > best.0 { (v, b) } else { best })
            .1
    }
}

/// The four bounds on `dw` at trade fractions `d1_frac = Delta1/R1` and
/// `d2_frac = Delta2/R2`. Written in a form that is exactly zero at
/// `gamma = 1` and zero fractions.
pub fn two_token_bounds(w: f64, gamma: f64, d1_frac: f64, d2_frac: f64) -> TwoTokenBounds {
    let v = 1.0 - w;
    let q1 = (1.0 + d1_frac) / (1.0 + gamma * d1_frac);
    let q2 = (1.0 + d2_frac) / (1.0 + gamma * d2_frac);
    let f = (1.0 - gamma) * ((v / w) * (-d2_frac).ln_1p()).exp();
    let g = (1.0 - gamma) * ((w / v) * (-d1_frac).ln_1p()).exp();
    TwoTokenBounds {
        lb_inflow: v * w * (gamma * q1 - 1.0) / (v + gamma * w * q1),
        lb_outflow: -w * v * f / (1.0 - w * f),
        ub_inflow: w * v * (1.0 - gamma * q2) / (w + gamma * v * q2),
        ub_outflow: v * w * g / (1.0 - v * g),
    }
}

/// Safe cells of a `(w, dw)` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafeRegion {
    pub w_grid: Vec<f64>,
    pub dw_grid: Vec<f64>,
    /// Row-major over `(w, dw)`.
    pub safe: Vec<bool>,
    pub binding: Vec<Binding>,
}

impl SafeRegion {
    pub fn is_safe(&self, wi: usize, dwi: usize) -> bool {
        self.safe[wi * self.dw_grid.len() + dwi]
    }

    /// `(w, dw, safe, binding)` in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = (f64, f64, bool, Binding)> + '_ {
        let m = self.dw_grid.len();
        (0..self.safe.len()).map(move |k| {
            (self.w_grid[k / m], self.dw_grid[k % m], self.safe[k], self.binding[k])
        })
    }
}

/// Evaluates the four bounds with both trade fractions at `max_trade_fraction`.
pub fn safe_region(w_grid: &[f64], dw_grid: &[f64], gamma: f64, max_trade_fraction: f64) -> SafeRegion {
    let rows: Vec<Vec<Binding>> = w_grid
        .par_iter()
        .map(|&w| {
            let b = two_token_bounds(w, gamma, max_trade_fraction, max_trade_fraction);
            dw_grid.iter().map(|&dw| b.binding(dw)).collect()
        })
        .collect();
    let binding: Vec<Binding> = rows.into_iter().flatten().collect();
    SafeRegion {
        w_grid: w_grid.to_vec(),
        dw_grid: dw_grid.to_vec(),
        safe: binding.iter().map(|b| *b == Binding::None).collect(),
        binding,
    }
}

/// Largest per-entry weight-change cap for which every traded pair of an
/// `n_tokens` pool with weights at or above `min_weight` stays inside the
/// two-token safe region, with both trade fractions at `max_trade_fraction`.
///
/// A pair with weights `(w1, w2)` and mass `s = w1 + w2` sees its normalised
/// weight `w1 / s` move by `|dw1 w2 - w1 dw2| / (s s')`, at most `cap / s'`
/// where `s' >= s - 2 cap` is the updated mass (`s' = s = 1` for two
/// tokens). The cap is therefore the minimum over the normalised weight `nu`
/// of `s_min(nu) h(nu) / (1 + 2 h(nu))`, `h` the half-width. For
/// `n_tokens > 2` the smallest pair mass compatible with `nu` is
/// `min_weight / min(nu, 1 - nu)`.
/// Checks only the pair conditions; the third-token legs of a general trade
/// are not covered.
pub fn pair_safe_weight_change_cap(min_weight: f64, max_trade_fraction: f64, gamma: f64, n_tokens: usize) -> f64 {
    const STEPS: usize = 20_000;
    let s_max = 1.0 - (n_tokens as f64 - 2.0) * min_weight;
    let nu_lo = min_weight / s_max;
    let nu_hi = 1.0 - nu_lo;
    (0..=STEPS)
        .map(|k| {
            let nu = nu_lo + (nu_hi - nu_lo) * k as f64 / STEPS as f64;
            let s_min = if n_tokens == 2 {
                1.0
            } else {
                (min_weight / nu.min(1.0 - nu)).min(s_max)
            };
            let h = two_token_bounds(nu, gamma, max_trade_fraction, max_trade_fraction).half_width();
            if n_tokens == 2 {
                h
            } else {
                s_min * h / (1.0 + 2.0 * h)
            }
        })
        .fold(f64::INFINITY, f64::min)
}

/// The three protection parameters of a pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Guardrails {
    /// Cap on `Delta_i / R_i` and `Lambda_i / R_i`.
    pub max_trade_fraction: f64,
    /// Floor on every weight, before and after an update.
    pub min_weight: f64,
    /// Cap on `|dw_i|` per block.
    pub max_weight_change: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GuardrailError {
    #[error("max_trade_fraction {0} must lie in (0, 1)")]
    TradeFraction(f64),
    #[error("min_weight {0} must lie in (0, 1)")]
    MinWeight(f64),
    #[error("max_weight_change {0} must lie in [0, 1)")]
    WeightChange(f64),
    #[error("min_weight {min_weight} leaves no room for {n} tokens")]
    FloorTooHigh { min_weight: f64, n: usize },
}

/// One guardrail breach.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GuardrailViolation {
    TradeInflow { token: usize, fraction: f64 },
    TradeOutflow { token: usize, fraction: f64 },
    WeightChange { token: usize, change: f64 },
    MinWeight { token: usize, weight: f64 },
}

impl GuardrailViolation {
    pub fn rail(&self) -> &'static str {
        match self {
            GuardrailViolation::TradeInflow { .. } => "trade-inflow",
            GuardrailViolation::TradeOutflow { .. } => "trade-outflow",
            GuardrailViolation::WeightChange { .. } => "weight-change",
            GuardrailViolation::MinWeight { .. } => "min-weight",
        }
    }
}

impl fmt::Display for GuardrailViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GuardrailViolation::TradeInflow { token, fraction }
            | GuardrailViolation::TradeOutflow { token, fraction } => {
                write!(f, "{} on token {token}: fraction {fraction}", self.rail())
            }
            GuardrailViolation::WeightChange { token, change } => {
                write!(f, "{} on token {token}: {change}", self.rail())
            }
            GuardrailViolation::MinWeight { token, weight } => {
                write!(f, "{} on token {token}: {weight}", self.rail())
            }
        }
    }
}

/// Every rail a trade and weight update breach together.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("guardrails breached: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
pub struct GuardrailRejection(pub Vec<GuardrailViolation>);

impl GuardrailRejection {
    pub fn rails(&self) -> Vec<&'static str> {
        self.0.iter().map(|v| v.rail()).collect()
    }
}

/// Relative slack on the caps so values computed as `cap * R` pass.
const RAIL_SLACK: f64 = 1e-12;

impl Guardrails {
    pub fn new(max_trade_fraction: f64, min_weight: f64, max_weight_change: f64) -> Result<Self, GuardrailError> {
        if !(max_trade_fraction > 0.0 && max_trade_fraction < 1.0) {
            return Err(GuardrailError::TradeFraction(max_trade_fraction));
        }
        if !(min_weight > 0.0 && min_weight < 1.0) {
            return Err(GuardrailError::MinWeight(min_weight));
        }
        if !(max_weight_change >= 0.0 && max_weight_change < 1.0) {
            return Err(GuardrailError::WeightChange(max_weight_change));
        }
        Ok(Guardrails {
            max_trade_fraction,
            min_weight,
            max_weight_change,
        })
    }

    pub fn check_tokens(&self, n: usize) -> Result<(), GuardrailError> {
        if self.min_weight * n as f64 >= 1.0 {
            return Err(GuardrailError::FloorTooHigh {
                min_weight: self.min_weight,
                n,
            });
        }
        Ok(())
    }

    /// Caps are inclusive.
    pub fn check(&self, pool: &PoolState, trade: &TradeIntent, weight_update: &[f64]) -> Result<(), GuardrailRejection> {
        let mut v = Vec::new();
        let cap = self.max_trade_fraction * (1.0 + RAIL_SLACK);
        for (i, &r) in pool.reserves().iter().enumerate() {
            let din = trade.delta_in.get(i).copied().unwrap_or(0.0);
            let dout = trade.lambda_out.get(i).copied().unwrap_or(0.0);
            if din > cap * r {
                v.push(GuardrailViolation::TradeInflow { token: i, fraction: din / r });
            }
            if dout > cap * r {
                v.push(GuardrailViolation::TradeOutflow { token: i, fraction: dout / r });
            }
        }
        let floor = self.min_weight * (1.0 - RAIL_SLACK);
        for (i, &w) in pool.weights().iter().enumerate() {
            let dw = weight_update.get(i).copied().unwrap_or(0.0);
            if dw.abs() > self.max_weight_change * (1.0 + RAIL_SLACK) + f64::EPSILON * 4.0 {
                v.push(GuardrailViolation::WeightChange { token: i, change: dw });
            }
            if w < floor {
                v.push(GuardrailViolation::MinWeight { token: i, weight: w });
            } else if w + dw < floor {
                v.push(GuardrailViolation::MinWeight { token: i, weight: w + dw });
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(GuardrailRejection(v))
        }
    }
}

/// Free-function form of [`Guardrails::check`].
pub fn check_guardrails(
    pool: &PoolState,
    trade: &TradeIntent,
    weight_update: &[f64],
    g: &Guardrails,
) -> Result<(), GuardrailRejection> {
    g.check(pool, trade, weight_update)
}
