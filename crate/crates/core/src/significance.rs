//! Monte-Carlo probability that a random strategy does at least as well.
//!
//! Each trial draws `n_bets` rows uniformly without replacement from the
//! strategy's eligible universe and settles them. Trial `t` uses
//! `ChaCha8Rng::seed_from_u64(seed)` switched to stream `t`, so results do not
//! depend on scheduling or thread count.

use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backtest::{settle_bet, BetLedger, BetRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Staking {
    /// One unit on every sampled row.
    Unit,
    /// The real strategy's stakes, randomly reassigned to the sampled rows.
    Permuted,
}

impl FromStr for Staking {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit" => Ok(Staking::Unit),
            "permuted" => Ok(Staking::Permuted),
            other => Err(Error::InvalidArgument(format!("unknown staking `{other}`"))),
        }
    }
}

impl fmt::Display for Staking {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Staking::Unit => "unit",
            Staking::Permuted => "permuted",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Roi,
    AbsoluteReturn,
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "roi" => Ok(Metric::Roi),
            "absolute" | "absolute-return" => Ok(Metric::AbsoluteReturn),
            other => Err(Error::InvalidArgument(format!("unknown metric `{other}`"))),
        }
    }
}

impl Metric {
    /// Metric over stakes and profits; ROI of a zero stake is -inf so it never
    /// beats anything.
    pub fn value(
        self,
        stakes: impl Iterator<Item = f64>,
        profits: impl Iterator<Item = f64>,
    ) -> f64 {
        let profit: f64 = profits.sum();
        match self {
            Metric::AbsoluteReturn => profit,
            Metric::Roi => {
                let staked: f64 = stakes.sum();
                if staked > 0.0 {
                    profit / staked
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceConfig {
    pub trials: usize,
    pub seed: u64,
    pub staking: Staking,
    pub metric: Metric,
}

impl Default for SignificanceConfig {
    fn default() -> Self {
        SignificanceConfig {
            trials: 100_000,
            seed: 42,
            staking: Staking::Unit,
            metric: Metric::Roi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    pub p_bs: f64,
    pub trials: usize,
    pub n_bets: usize,
    pub universe_size: usize,
    pub exceed_count: usize,
    pub seed: u64,
    pub staking: Staking,
    pub metric: Metric,
    pub real_value: f64,
    /// `sqrt(p (1 - p) / trials)`.
    pub mc_standard_error: f64,
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

fn trial_value(
    universe: &[BetRecord],
    real_stakes: &[f64],
    n_bets: usize,
    cfg: &SignificanceConfig,
    trial: usize,
) -> f64 {
    let mut rng = trial_rng(cfg.seed, trial);
    let mut picks = index::sample(&mut rng, universe.len(), n_bets).into_vec();
    picks.sort_unstable();
    let stakes: Vec<f64> = match cfg.staking {
        Staking::Unit => vec![1.0; n_bets],
        Staking::Permuted => {
            let mut s = real_stakes.to_vec();
            s.shuffle(&mut rng);
            s
        }
    };
    let profits = picks
        .iter()
        .zip(&stakes)
        .map(|(&i, &f)| settle_bet(f, universe[i].odds_used, universe[i].y));
    cfg.metric.value(stakes.iter().copied(), profits)
}

/// Fraction of random trials whose metric is at least `real_value`.
///
/// `real_stakes` supplies the stake multiset for permuted staking; its
/// length sets the number of bets per trial.
pub fn random_strategy_pvalue(
    real_value: f64,
    universe: &[BetRecord],
    real_stakes: &[f64],
    cfg: &SignificanceConfig,
) -> Result<SignificanceResult> {
    let n_bets = real_stakes.len();
    if n_bets > universe.len() {
        return Err(Error::UniverseTooSmall {
            universe: universe.len(),
            bets: n_bets,
        });
    }
    if cfg.trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let exceed_count = (0..cfg.trials)
        .into_par_iter()
        .filter(|&t| trial_value(universe, real_stakes, n_bets, cfg, t) >= real_value)
        .count();
    let p = exceed_count as f64 / cfg.trials as f64;
    Ok(SignificanceResult {
        p_bs: p,
        trials: cfg.trials,
        n_bets,
        universe_size: universe.len(),
        exceed_count,
        seed: cfg.seed,
        staking: cfg.staking,
        metric: cfg.metric,
        real_value,
        mc_standard_error: (p * (1.0 - p) / cfg.trials as f64).sqrt(),
    })
}

/// Tests the bets placed in `ledger` against random draws from `universe`
/// (defaults to every eligible row of the ledger).
pub fn ledger_significance(
    ledger: &BetLedger,
    universe: Option<&[BetRecord]>,
    cfg: &SignificanceConfig,
) -> Result<SignificanceResult> {
    let placed: Vec<&BetRecord> = ledger.placed().collect();
    if placed.is_empty() {
        return Err(Error::ZeroInvestment);
    }
    let stakes: Vec<f64> = placed.iter().map(|r| r.f_star).collect();
    let real = cfg
        .metric
        .value(stakes.iter().copied(), placed.iter().map(|r| r.profit));
    let universe = universe.unwrap_or(&ledger.records);
    random_strategy_pvalue(real, universe, &stakes, cfg)
}
