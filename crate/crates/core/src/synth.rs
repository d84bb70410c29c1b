//! Seeded synthetic match corpus for fixtures, demos and tests.
//!
//! Outcomes follow a logistic strength model; bookmaker odds quote the true
//! probability plus a margin, and pageviews carry a small buzz signal so the
//! estimation step has something to find. Optional anomalies mirror the
//! cases the cleaning step is meant to catch.

use chrono::{Datelike, Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::{normalize_dataset, Dataset, MatchRecord, OddsPair, Rank};
use crate::pageviews::api_floor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_matches: usize,
    pub n_players: usize,
    pub start: NaiveDate,
    pub end: NaiveDate,
    /// Average-odds margin `K`.
    pub overround: f64,
    /// Inject one anomaly of each cleaning kind per this many matches
    /// (0 disables).
    pub anomaly_every: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            n_matches: 1500,
            n_players: 120,
            start: NaiveDate::from_ymd_opt(2016, 1, 4).expect("valid date"),
            end: NaiveDate::from_ymd_opt(2020, 2, 28).expect("valid date"),
            overround: 0.06,
            anomaly_every: 0,
        }
    }
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn odds_from(p: f64) -> f64 {
    round2((1.0 / p).max(1.01))
}

/// Generates the corpus; identical configs give identical datasets.
pub fn synth_corpus(cfg: &SynthConfig) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_players = cfg.n_players.max(2);
    let strength: Vec<f64> = (0..n_players)
        .map(|_| rng.random_range(-1.5..1.5))
        .collect();
    let mut order: Vec<usize> = (0..n_players).collect();
    order.sort_by(|&a, &b| strength[b].total_cmp(&strength[a]));
    let mut rank = vec![Rank::Unranked; n_players];
    for (pos, &p) in order.iter().enumerate() {
        // Leave a few players unranked.
        if pos % 25 != 24 {
            rank[p] = Rank::Ranked(pos as u32 + 1);
        }
    }
    let median: Vec<f64> = (0..n_players)
        .map(|p| (20.0 + 4000.0 * ((strength[p] + 1.5) / 3.0).powi(2)).round())
        .collect();
    let first_seen: Vec<NaiveDate> = (0..n_players)
        .map(|p| {
            if p % 17 == 5 {
                api_floor() + Duration::days((300 + 37 * p as i64) % 1500)
            } else {
                api_floor()
            }
        })
        .collect();

    let span = (cfg.end - cfg.start).num_days().max(1);
    let mut records = Vec::with_capacity(cfg.n_matches);
    for i in 0..cfg.n_matches {
        let date = cfg.start + Duration::days(span * i as i64 / cfg.n_matches.max(1) as i64);
        let a = rng.random_range(0..n_players);
        let mut b = rng.random_range(0..n_players - 1);
        if b >= a {
            b += 1;
        }
        // Buzz: log ratio of yesterday's views to the median.
        let buzz_a: f64 =
            rng.random_range(-1.0..1.0) + if rng.random_bool(0.1) { 2.5 } else { 0.0 };
        let buzz_b: f64 =
            rng.random_range(-1.0..1.0) + if rng.random_bool(0.1) { 2.5 } else { 0.0 };
        let edge = 1.2 * (strength[a] - strength[b]);
        let p_true = 1.0 / (1.0 + (-(edge + 0.08 * (buzz_a - buzz_b))).exp());
        // The market sees strength but not buzz.
        let p_mkt = (1.0 / (1.0 + (-edge).exp())).clamp(0.03, 0.97);
        let a_wins = rng.random_bool(p_true);
        let (w, l, buzz_w, buzz_l, p_w) = if a_wins {
            (a, b, buzz_a, buzz_b, p_mkt)
        } else {
            (b, a, buzz_b, buzz_a, 1.0 - p_mkt)
        };
        let k = cfg.overround;
        let avg_w = odds_from(p_w * (1.0 + k));
        let avg_l = odds_from((1.0 - p_w) * (1.0 + k));
        let mut b365_w = round2(avg_w * rng.random_range(0.97..1.02));
        let mut b365_l = round2(avg_l * rng.random_range(0.97..1.02));
        let best_w = round2(avg_w * rng.random_range(1.03..1.09)).max(b365_w);
        let best_l = round2(avg_l * rng.random_range(1.03..1.09)).max(b365_l);
        b365_w = b365_w.max(1.01);
        b365_l = b365_l.max(1.01);
        let views = |p: usize, buzz: f64| ((median[p] * buzz.exp()).round() as u64).max(1);
        let week = date.iso_week().week();
        records.push(MatchRecord {
            match_id: String::new(),
            date,
            tournament: format!("Synthetic Open {}", week % 26 + 1),
            season: date.year(),
            player_w: format!("Player {w:03}"),
            player_l: format!("Player {l:03}"),
            rank_w: rank[w],
            rank_l: rank[l],
            bet365: OddsPair::new(Some(b365_w), Some(b365_l)),
            average: OddsPair::new(Some(avg_w), Some(avg_l)),
            best: OddsPair::new(Some(best_w), Some(best_l)),
            wiki_yesterday_w: Some(views(w, buzz_w)),
            wiki_yesterday_l: Some(views(l, buzz_l)),
            wiki_med365_w: Some(median[w]),
            wiki_med365_l: Some(median[l]),
            wiki_first_w: Some(first_seen[w]),
            wiki_first_l: Some(first_seen[l]),
            comment: Some("Completed".into()),
        });
    }

    if cfg.anomaly_every > 0 {
        for (i, m) in records.iter_mut().enumerate() {
            match (i % cfg.anomaly_every, i / cfg.anomaly_every % 2) {
                // Single book quoting far above the market best.
                (3, _) => m.bet365.odds_w = Some(round2(m.best.odds_w.unwrap_or(2.0) * 2.6)),
                (5, 0) => m.bet365.odds_l = None,
                (5, _) => m.best.odds_w = None,
                // Best odds far out of line with the average.
                (7, _) => m.best.odds_l = Some(round2(m.average.odds_l.unwrap_or(2.0) * 40.0)),
                (9, _) => m.wiki_first_w = Some(m.date - Duration::days(30)),
                _ => {}
            }
        }
    }
    normalize_dataset(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let cfg = SynthConfig {
            n_matches: 200,
            ..Default::default()
        };
        assert_eq!(synth_corpus(&cfg), synth_corpus(&cfg));
        let other = SynthConfig {
            seed: 8,
            ..cfg.clone()
        };
        assert_ne!(
            synth_corpus(&cfg).fingerprint(),
            synth_corpus(&other).fingerprint()
        );
    }

    #[test]
    fn clean_corpus_has_consistent_odds() {
        let ds = synth_corpus(&SynthConfig {
            n_matches: 300,
            ..Default::default()
        });
        assert_eq!(ds.len(), 300);
        for m in &ds.matches {
            assert!(m.bet365.odds_w.unwrap() <= m.best.odds_w.unwrap());
            assert!(m.average.odds_l.unwrap() >= 1.01);
        }
    }

    #[test]
    fn anomalies_are_injected() {
        let ds = synth_corpus(&SynthConfig {
            n_matches: 400,
            anomaly_every: 40,
            ..Default::default()
        });
        assert!(ds
            .matches
            .iter()
            .any(|m| m.bet365.odds_l.is_none() || m.best.odds_w.is_none()));
        assert!(ds
            .matches
            .iter()
            .any(|m| m.bet365.odds_w.unwrap_or(0.0) > m.best.odds_w.unwrap_or(f64::MAX)));
    }
}
