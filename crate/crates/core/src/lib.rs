//! Multi-block manipulation of geometric-mean pools whose weights change
//! between blocks.
//!
//! - [`poolcore`]: trading function, trade acceptance, quotes and no-arb band.
//! - [`attack`]: the manipulate / weight-update / arbitrage pipeline and the
//!   arbitrage oracles.
//! - [`bounds`]: analytic weight-change bounds under which the pair attack
//!   cannot profit, and guardrail checks.
//! - [`optimizer`]: adversarial search for the best attack under a guardrail
//!   setting.

pub mod attack;
pub mod bounds;
pub mod optimizer;
pub mod poolcore;
pub mod roots;

pub use attack::{run_pair_attack, AttackOutcome, AttackScenario};
pub use bounds::Guardrails;
pub use poolcore::{MarketPrices, PoolState, QuoteBand, TradeIntent};
