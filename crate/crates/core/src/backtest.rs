//! Out-of-sample betting simulation with reset-bankroll Kelly staking.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{self, RegressionFit};
use crate::features::{self, FixedEffect, Model};
use crate::ingest::{OddsSource, PlayerMatchRow, RowKey, Side};

/// Decimal places `p` is rounded to before interval tests, so values stored
/// as e.g. 0.800000011920929 compare equal to 0.8.
pub const P_ROUNDING_DECIMALS: i32 = 9;

fn round_p(p: f64) -> f64 {
    let scale = 10f64.powi(P_ROUNDING_DECIMALS);
    (p * scale).round() / scale
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Interval {
    pub fn closed(lo: f64, hi: f64) -> Self {
        Interval {
            lo,
            hi,
            lo_closed: true,
            hi_closed: true,
        }
    }

    pub fn open(lo: f64, hi: f64) -> Self {
        Interval {
            lo,
            hi,
            lo_closed: false,
            hi_closed: false,
        }
    }

    pub fn contains(&self, p: f64) -> bool {
        let above = if self.lo_closed {
            p >= self.lo
        } else {
            p > self.lo
        };
        let below = if self.hi_closed {
            p <= self.hi
        } else {
            p < self.hi
        };
        above && below
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{},{}{}",
            if self.lo_closed { '[' } else { '(' },
            self.lo,
            self.hi,
            if self.hi_closed { ']' } else { ')' }
        )
    }
}

/// Union of intervals over the average-odds implied probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PRange(pub Vec<Interval>);

impl PRange {
    pub fn everything() -> Self {
        PRange(vec![Interval::closed(0.0, 1.0)])
    }

    pub fn contains(&self, p: f64) -> bool {
        let p = round_p(p);
        self.0.iter().any(|i| i.contains(p))
    }
}

impl fmt::Display for PRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
        f.write_str(&parts.join("U"))
    }
}

impl FromStr for PRange {
    type Err = Error;

    /// `[0.4,0.6]`, `(0,0.2)U(0.8,1)`; `∪` is accepted for the union.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad p-range `{s}`"));
        let normalized = s.replace('∪', "U").replace(' ', "");
        let mut out = Vec::new();
        for part in normalized.split(['U', 'u']) {
            let mut chars = part.chars();
            let lo_closed = match chars.next() {
                Some('[') => true,
                Some('(') => false,
                _ => return Err(bad()),
            };
            let hi_closed = match part.chars().last() {
                Some(']') => true,
                Some(')') => false,
                _ => return Err(bad()),
            };
            let body = &part[1..part.len() - 1];
            let (lo, hi) = body.split_once(',').ok_or_else(bad)?;
            let lo: f64 = lo.parse().map_err(|_| bad())?;
            let hi: f64 = hi.parse().map_err(|_| bad())?;
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
                return Err(bad());
            }
            out.push(Interval {
                lo,
                hi,
                lo_closed,
                hi_closed,
            });
        }
        if out.is_empty() {
            return Err(bad());
        }
        Ok(PRange(out))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub model: Model,
    pub odds_source: OddsSource,
    pub competitiveness: Option<PRange>,
    pub excluded: Vec<RowKey>,
}

impl StrategyConfig {
    pub fn new(model: Model, odds_source: OddsSource) -> Self {
        StrategyConfig {
            model,
            odds_source,
            competitiveness: None,
            excluded: Vec::new(),
        }
    }

    pub fn with_range(mut self, range: PRange) -> Self {
        self.competitiveness = Some(range);
        self
    }

    pub fn excluding(mut self, keys: Vec<RowKey>) -> Self {
        self.excluded = keys;
        self
    }
}

/// Model win probability `a + (1 + b1) z + b2 RankDist + b3 WikiBuzz`,
/// with the RankDist term dropped for the reduced model. Not clamped.
pub fn predict_outcome(fit: &RegressionFit, row: &PlayerMatchRow, model: Model) -> Result<f64> {
    let z = row.z_avg.ok_or(Error::MissingFeature("z_avg"))?;
    let mut y = fit.alpha_hat + (1.0 + fit.beta_z()) * z + fit.beta_wikibuzz() * row.wikibuzz;
    if model.uses_rank_dist() {
        y += fit.beta_rank_dist() * row.rank_dist;
    }
    Ok(y)
}

/// Kelly stake `max(p - (1 - p) / b, 0)` with payoff `b = odds - 1`.
pub fn kelly_fraction(y_tilde: f64, odds: f64) -> f64 {
    let b = odds - 1.0;
    if b.is_nan() || b <= 0.0 {
        return 0.0;
    }
    (y_tilde - (1.0 - y_tilde) / b).max(0.0)
}

/// Profit of a stake on a bankroll reset to 1.
pub fn settle_bet(f_star: f64, odds: f64, y: u8) -> f64 {
    if y == 1 {
        f_star * odds - f_star
    } else {
        -f_star
    }
}

/// Rows whose average-odds implied probability lies in `range`.
pub fn apply_competitiveness(rows: &[PlayerMatchRow], range: &PRange) -> Vec<PlayerMatchRow> {
    rows.iter()
        .filter(|r| r.z_avg.is_some_and(|p| range.contains(p)))
        .cloned()
        .collect()
}

/// Drops the addressed matches or single directed rows.
pub fn exclude_player_rows(
    rows: &[PlayerMatchRow],
    keys: &[RowKey],
) -> Result<Vec<PlayerMatchRow>> {
    let known: BTreeSet<&str> = rows.iter().map(|r| r.match_id.as_str()).collect();
    if let Some(k) = keys.iter().find(|k| !known.contains(k.match_id.as_str())) {
        return Err(Error::UnknownMatchId(k.to_string()));
    }
    Ok(rows
        .iter()
        .filter(|r| !keys.iter().any(|k| k.matches(&r.match_id, r.perspective)))
        .cloned()
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetRecord {
    pub match_id: String,
    pub date: NaiveDate,
    pub side: Side,
    pub player: String,
    pub opponent: String,
    pub y: u8,
    pub y_tilde: f64,
    pub odds_used: f64,
    /// Overround of the betting source on this match, when both sides quote.
    pub overround: Option<f64>,
    pub f_star: f64,
    pub profit: f64,
    pub cumulative: f64,
}

impl BetRecord {
    pub fn placed(&self) -> bool {
        self.f_star > 0.0
    }

    pub fn key(&self) -> RowKey {
        RowKey {
            match_id: self.match_id.clone(),
            side: Some(self.side),
        }
    }
}

/// Every eligible row in chronological order with its betting decision.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BetLedger {
    pub records: Vec<BetRecord>,
    /// Predictions outside [0, 1] (kept as-is).
    pub out_of_range_predictions: usize,
}

impl BetLedger {
    pub fn placed(&self) -> impl Iterator<Item = &BetRecord> {
        self.records.iter().filter(|r| r.placed())
    }
}

/// Simulates one potential bet per eligible test row.
pub fn run_backtest(
    fit: &RegressionFit,
    test_rows: &[PlayerMatchRow],
    config: &StrategyConfig,
) -> Result<BetLedger> {
    let source = config.odds_source;
    let mut by_match: HashMap<&str, [Option<f64>; 2]> = HashMap::new();
    for r in test_rows {
        let slot = by_match.entry(&r.match_id).or_default();
        slot[usize::from(r.perspective == Side::Loser)] = r.odds(source);
    }
    let overround_of = |id: &str| -> Option<f64> {
        match by_match.get(id)? {
            [Some(a), Some(b)] => Some(features::overround(1.0 / a, 1.0 / b)),
            _ => None,
        }
    };

    // Exclusions are checked against the whole test set, so a row outside
    // the competitiveness window is not an unknown id.
    let mut universe = exclude_player_rows(test_rows, &config.excluded)?;
    if let Some(range) = &config.competitiveness {
        universe = apply_competitiveness(&universe, range);
    }
    universe.retain(|r| r.odds(source).is_some() && r.z_avg.is_some());
    universe.sort_by(|a, b| {
        a.date
            .cmp(&b.date)
            .then_with(|| a.match_id.cmp(&b.match_id))
            .then_with(|| a.perspective.cmp(&b.perspective))
    });
    if universe.is_empty() {
        return Err(Error::EmptyUniverse);
    }

    let mut ledger = BetLedger::default();
    let mut cumulative = 0.0;
    for r in &universe {
        let odds = r.odds(source).expect("filtered above");
        let y_tilde = predict_outcome(fit, r, config.model)?;
        if !(0.0..=1.0).contains(&y_tilde) {
            ledger.out_of_range_predictions += 1;
        }
        let f_star = kelly_fraction(y_tilde, odds);
        let profit = if f_star > 0.0 {
            settle_bet(f_star, odds, r.y)
        } else {
            0.0
        };
        cumulative += profit;
        ledger.records.push(BetRecord {
            match_id: r.match_id.clone(),
            date: r.date,
            side: r.perspective,
            player: r.player.clone(),
            opponent: r.opponent.clone(),
            y: r.y,
            y_tilde,
            odds_used: odds,
            overround: overround_of(&r.match_id),
            f_star,
            profit,
            cumulative,
        });
    }
    Ok(ledger)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub key: String,
    pub date: NaiveDate,
    pub player: String,
    pub opponent: String,
    pub odds: f64,
    pub f_star: f64,
    pub profit: f64,
    /// Share of the absolute return this bet accounts for.
    pub share_of_return: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub n_odds: usize,
    pub bets_placed: usize,
    pub mean_overround_pct: Option<f64>,
    pub investment: f64,
    pub absolute_return: f64,
    /// `None` when nothing was staked.
    pub roi_pct: Option<f64>,
    pub out_of_range_predictions: usize,
    /// Placed bets ranked by |profit|, largest first.
    pub attribution: Vec<Attribution>,
}

impl StrategySummary {
    pub fn roi(&self) -> Result<f64> {
        self.roi_pct.ok_or(Error::ZeroInvestment)
    }
}

/// Number of bets kept in the attribution ranking.
pub const ATTRIBUTION_TOP: usize = 10;

pub fn summarize(ledger: &BetLedger) -> StrategySummary {
    let placed: Vec<&BetRecord> = ledger.placed().collect();
    let investment: f64 = placed.iter().map(|r| r.f_star).sum();
    let absolute_return: f64 = placed.iter().map(|r| r.profit).sum();
    let overrounds: Vec<f64> = ledger.records.iter().filter_map(|r| r.overround).collect();
    let mean_overround_pct = (!overrounds.is_empty())
        .then(|| 100.0 * overrounds.iter().sum::<f64>() / overrounds.len() as f64);

    let mut ranked = placed.clone();
    ranked.sort_by(|a, b| b.profit.abs().total_cmp(&a.profit.abs()));
    let attribution = ranked
        .into_iter()
        .take(ATTRIBUTION_TOP)
        .map(|r| Attribution {
            key: r.key().to_string(),
            date: r.date,
            player: r.player.clone(),
            opponent: r.opponent.clone(),
            odds: r.odds_used,
            f_star: r.f_star,
            profit: r.profit,
            share_of_return: (absolute_return != 0.0).then(|| r.profit / absolute_return),
        })
        .collect();

    StrategySummary {
        n_odds: ledger.records.len(),
        bets_placed: placed.len(),
        mean_overround_pct,
        investment,
        absolute_return,
        roi_pct: (investment > 0.0).then(|| 100.0 * absolute_return / investment),
        out_of_range_predictions: ledger.out_of_range_predictions,
        attribution,
    }
}

/// Running profit after each placed bet.
pub fn cumulative_series(ledger: &BetLedger) -> Vec<(NaiveDate, f64)> {
    let mut total = 0.0;
    ledger
        .placed()
        .map(|r| {
            total += r.profit;
            (r.date, total)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct StrategyRun {
    pub fit: RegressionFit,
    pub ledger: BetLedger,
    pub summary: StrategySummary,
}

/// Fits on the (range-filtered) training rows and backtests on the test rows.
///
/// With `reuse_fit`, the supplied fit is used as-is instead of re-estimating
/// on the competitiveness-filtered training sample.
pub fn run_strategy(
    train: &[PlayerMatchRow],
    test: &[PlayerMatchRow],
    config: &StrategyConfig,
    fe: &BTreeSet<FixedEffect>,
    reuse_fit: Option<&RegressionFit>,
) -> Result<StrategyRun> {
    let fit = match reuse_fit {
        Some(f) => f.clone(),
        None => {
            let sample = match &config.competitiveness {
                Some(range) => apply_competitiveness(train, range),
                None => train.to_vec(),
            };
            let design = features::build_design(&sample, config.model, fe)?;
            estimate::fit_ols(&design)?
        }
    };
    let ledger = run_backtest(&fit, test, config)?;
    let summary = summarize(&ledger);
    Ok(StrategyRun {
        fit,
        ledger,
        summary,
    })
}

const LEDGER_COLUMNS: [&str; 12] = [
    "match_id",
    "date",
    "side",
    "player",
    "opponent",
    "y",
    "y_tilde",
    "odds",
    "overround",
    "f_star",
    "profit",
    "cumulative",
];

pub fn write_ledger<W: Write>(ledger: &BetLedger, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LEDGER_COLUMNS)?;
    for r in &ledger.records {
        w.write_record([
            r.match_id.clone(),
            r.date.format("%Y-%m-%d").to_string(),
            r.side.tag().to_string(),
            r.player.clone(),
            r.opponent.clone(),
            r.y.to_string(),
            r.y_tilde.to_string(),
            r.odds_used.to_string(),
            r.overround.map(|v| v.to_string()).unwrap_or_default(),
            r.f_star.to_string(),
            r.profit.to_string(),
            r.cumulative.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ledger<R: Read>(input: R) -> Result<BetLedger> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    for c in LEDGER_COLUMNS {
        if !headers.iter().any(|h| h == c) {
            return Err(Error::MissingColumn(c.to_string()));
        }
    }
    let idx = |c: &str| headers.iter().position(|h| h == c).unwrap();
    let mut ledger = BetLedger::default();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        let get = |c: &str| rec.get(idx(c)).unwrap_or("").trim();
        let num = |c: &str| -> Result<f64> {
            get(c).parse().map_err(|_| Error::Parse {
                row,
                message: format!("bad number in `{c}`"),
            })
        };
        let date =
            NaiveDate::parse_from_str(get("date"), "%Y-%m-%d").map_err(|_| Error::BadDate {
                row,
                value: get("date").to_string(),
            })?;
        let side = match get("side") {
            "w" => Side::Winner,
            "l" => Side::Loser,
            other => {
                return Err(Error::Parse {
                    row,
                    message: format!("bad side `{other}`"),
                });
            }
        };
        let y_tilde = num("y_tilde")?;
        if !(0.0..=1.0).contains(&y_tilde) {
            ledger.out_of_range_predictions += 1;
        }
        ledger.records.push(BetRecord {
            match_id: get("match_id").to_string(),
            date,
            side,
            player: get("player").to_string(),
            opponent: get("opponent").to_string(),
            y: if num("y")? > 0.5 { 1 } else { 0 },
            y_tilde,
            odds_used: num("odds")?,
            overround: get("overround").parse().ok(),
            f_star: num("f_star")?,
            profit: num("profit")?,
            cumulative: num("cumulative")?,
        });
    }
    Ok(ledger)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn kelly_examples() {
        assert_eq!(kelly_fraction(0.5, 2.0), 0.0);
        assert!((kelly_fraction(0.6, 2.0) - 0.2).abs() < 1e-15);
        assert_eq!(kelly_fraction(0.4, 2.0), 0.0);
        assert_eq!(kelly_fraction(0.9, 1.0), 0.0);
    }

    #[test]
    fn settle_examples() {
        assert!((settle_bet(0.2, 2.0, 1) - 0.2).abs() < 1e-15);
        assert_eq!(settle_bet(0.2, 2.0, 0), -0.2);
        // 0.393 * 5.50 - 0.393
        assert!((settle_bet(0.393, 5.5, 1) - 1.7685).abs() < 1e-12);
    }

    #[test]
    fn p_range_parsing_and_rounding() {
        let r: PRange = "[0.2,0.8]".parse().unwrap();
        assert!(r.contains(0.8));
        assert!(r.contains(1.0 / 1.25));
        assert!(r.contains(0.8000000000000002));
        assert!(r.contains(0.2));
        let open: PRange = "(0,0.2)U(0.8,1)".parse().unwrap();
        assert!(!open.contains(0.8));
        assert!(!open.contains(0.8000000000000002));
        assert!(open.contains(0.81));
        assert!(open.contains(0.1));
        assert!(!open.contains(1.0));
        assert_eq!(open.to_string(), "(0,0.2)U(0.8,1)");
        assert!("(0,0.4)∪(0.6,1)".parse::<PRange>().is_ok());
        assert!("[0.6,0.4]".parse::<PRange>().is_err());
        assert!("0.4,0.6".parse::<PRange>().is_err());
    }

    #[test]
    fn zero_coefficients_reproduce_market() {
        let fit = RegressionFit::from_coefficients(Model::Pm, 0.0, 0.0, 0.0, 0.0);
        let row = PlayerMatchRow {
            match_id: "m".into(),
            date: NaiveDate::from_ymd_opt(2019, 1, 1).unwrap(),
            perspective: Side::Winner,
            player: String::new(),
            opponent: String::new(),
            y: 1,
            z: 0.37,
            z_avg: Some(0.37),
            z_b365: None,
            z_best: None,
            odds_avg: None,
            odds_b365: None,
            odds_best: None,
            overround: 0.0,
            rank_dist: 0.4,
            wikibuzz: -2.0,
            e: 0.63,
            season: 2019,
            tournament_key: String::new(),
        };
        assert_eq!(predict_outcome(&fit, &row, Model::Pm).unwrap(), 0.37);
        let mut missing = row;
        missing.z_avg = None;
        assert!(matches!(
            predict_outcome(&fit, &missing, Model::Pm),
            Err(Error::MissingFeature(_))
        ));
    }

    #[test]
    fn empty_ledger_has_no_roi() {
        let s = summarize(&BetLedger::default());
        assert!(matches!(s.roi(), Err(Error::ZeroInvestment)));
        assert_eq!(s.bets_placed, 0);
    }

    proptest! {
        #[test]
        fn kelly_bounds(p in -0.5f64..1.5, odds in 1.0f64..50.0) {
            let f = kelly_fraction(p, odds);
            prop_assert!(f >= 0.0);
            if p <= 1.0 {
                prop_assert!(f <= p.max(0.0) + 1e-15);
            }
            if p <= 1.0 / odds - 1e-12 {
                prop_assert_eq!(f, 0.0);
            }
        }
    }
}
