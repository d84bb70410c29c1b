//! Property tests over generated inputs and synthetic corpora.

use std::collections::BTreeSet;

use chrono::{Days, NaiveDate};
use proptest::prelude::*;

use buzzcheck::backtest::{
    kelly_fraction, predict_outcome, run_backtest, settle_bet, BetRecord, StrategyConfig,
};
use buzzcheck::clean::{run_pipeline, PipelineOptions};
use buzzcheck::estimate::{fit_ols, RegressionFit};
use buzzcheck::features::{
    build_design, forecast_error, parse_fixed_effects, rank_distance, wikibuzz, Model,
};
use buzzcheck::ingest::{
    normalize_dataset, parse_match_file, to_player_rows, write_canonical_to, OddsSource,
    PlayerMatchRow, Rank, Schema, Side,
};
use buzzcheck::pageviews::{buzz_inputs, median, PageviewSeries};
use buzzcheck::significance::{random_strategy_pvalue, SignificanceConfig};
use buzzcheck::synth::{synth_corpus, SynthConfig};

fn rank() -> impl Strategy<Value = Rank> {
    prop_oneof![Just(Rank::Unranked), (1u32..2000).prop_map(Rank::Ranked)]
}

fn corpus(seed: u64, n: usize, anomaly_every: usize) -> buzzcheck::Dataset {
    synth_corpus(&SynthConfig {
        seed,
        n_matches: n,
        n_players: 40,
        anomaly_every,
        ..Default::default()
    })
}

fn rows(seed: u64, n: usize) -> Vec<PlayerMatchRow> {
    to_player_rows(&corpus(seed, n, 0), OddsSource::MarketAverage).rows
}

/// Least squares by explicit normal equations, Gauss-Jordan elimination.
fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let k = x[0].len();
    let mut a: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| x.iter().map(|r| r[i] * r[j]).sum())
                .collect()
        })
        .collect();
    let mut b: Vec<f64> = (0..k)
        .map(|i| x.iter().zip(y).map(|(r, v)| r[i] * v).sum())
        .collect();
    for col in 0..k {
        let piv = (col..k)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let d = a[col][col];
        for v in a[col].iter_mut() {
            *v /= d;
        }
        b[col] /= d;
        for r in 0..k {
            if r != col {
                let f = a[r][col];
                let pivot_row = a[col].clone();
                for (v, p) in a[r].iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
                b[r] -= f * b[col];
            }
        }
    }
    b
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rank_distance_is_antisymmetric(a in rank(), b in rank()) {
        prop_assert_eq!(rank_distance(a, b), -rank_distance(b, a));
    }

    #[test]
    fn wikibuzz_antisymmetric_and_scale_free(
        wi in 1u32..100_000, wj in 1u32..100_000,
        mi in 0.5f64..50_000.0, mj in 0.5f64..50_000.0,
        c in 0.01f64..100.0,
    ) {
        let (wi, wj) = (wi as f64, wj as f64);
        let v = wikibuzz(wi, mi, wj, mj).unwrap();
        prop_assert_eq!(v, -wikibuzz(wj, mj, wi, mi).unwrap());
        let scaled = wikibuzz(c * wi, c * mi, wj, mj).unwrap();
        prop_assert!((v - scaled).abs() <= 1e-9 * v.abs().max(1.0));
    }

    #[test]
    fn forecast_error_is_bounded(z in 1e-6f64..=1.0, y in 0u8..=1) {
        let e = forecast_error(y, z);
        prop_assert!((-1.0..=1.0).contains(&e));
    }

    #[test]
    fn kelly_bounds(y_tilde in -0.5f64..1.0, odds in 1.0f64..50.0) {
        let f = kelly_fraction(y_tilde, odds);
        prop_assert!(f >= 0.0);
        prop_assert!(f <= y_tilde.max(0.0) + 1e-15);
        if y_tilde <= 1.0 / odds {
            prop_assert!(f <= 1e-12);
        }
    }

    #[test]
    fn settlement_scales_with_the_stake(f in 0.0f64..1.0, odds in 1.01f64..30.0, c in 0.1f64..10.0, y in 0u8..=1) {
        let a = settle_bet(c * f, odds, y);
        let b = c * settle_bet(f, odds, y);
        prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }

    #[test]
    fn median_of_a_symmetric_window(center in 0u32..10_000, offsets in prop::collection::vec(0u32..500, 1..40)) {
        let c = center as f64;
        let mut v: Vec<f64> = offsets.iter().flat_map(|&o| [c - o as f64, c + o as f64]).collect();
        prop_assert_eq!(median(&mut v), Some(c));
    }

    #[test]
    fn buzz_inputs_ignore_the_match_day_and_after(extra in prop::collection::vec(0u64..1_000_000, 1..10)) {
        let day = NaiveDate::from_ymd_opt(2019, 5, 20).unwrap();
        let start = day - Days::new(366);
        let base: std::collections::BTreeMap<_, _> = start
            .iter_days()
            .take(366)
            .enumerate()
            .map(|(i, d)| (d, (i as u64 * 37) % 101))
            .collect();
        let series = |counts| PageviewSeries {
            profile_key: "p".into(),
            first_available: start,
            covered: (start, day + Days::new(20)),
            counts,
        };
        let mut later = base.clone();
        for (i, v) in extra.iter().enumerate() {
            later.insert(day + Days::new(i as u64), *v);
        }
        prop_assert_eq!(buzz_inputs(&series(base), day).unwrap(), buzz_inputs(&series(later), day).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn canonical_round_trip(seed in 0u64..1000, n in 1usize..80, every in prop::sample::select(vec![0usize, 7, 11])) {
        let ds = corpus(seed, n, every);
        let mut buf = Vec::new();
        write_canonical_to(&ds, &mut buf).unwrap();
        let again = normalize_dataset(parse_match_file(buf.as_slice(), &Schema::canonical()).unwrap());
        prop_assert_eq!(&again, &ds);
        let mut buf2 = Vec::new();
        write_canonical_to(&again, &mut buf2).unwrap();
        prop_assert_eq!(buf, buf2);
    }

    #[test]
    fn paired_rows_are_antisymmetric(seed in 0u64..1000) {
        for p in rows(seed, 60).chunks(2) {
            prop_assert_eq!(&p[0].match_id, &p[1].match_id);
            prop_assert_eq!(p[0].rank_dist, -p[1].rank_dist);
            prop_assert_eq!(p[0].wikibuzz, -p[1].wikibuzz);
            prop_assert!((p[0].e + p[1].e + p[0].overround).abs() < 1e-12);
            prop_assert!(p[0].z > 0.0 && p[0].z <= 1.0);
        }
    }

    #[test]
    fn predictions_sum_pairwise(
        seed in 0u64..1000,
        alpha in -0.1f64..0.1, bz in -0.2f64..0.2, brd in -0.2f64..0.2, bwb in -0.05f64..0.05,
    ) {
        let fit = RegressionFit::from_coefficients(Model::Pm, alpha, bz, brd, bwb);
        for p in rows(seed, 40).chunks(2) {
            let a = predict_outcome(&fit, &p[0], Model::Pm).unwrap();
            let b = predict_outcome(&fit, &p[1], Model::Pm).unwrap();
            let want = 2.0 * alpha + (1.0 + bz) * (1.0 + p[0].overround);
            prop_assert!((a + b - want).abs() < 1e-12);
        }
    }

    #[test]
    fn ols_matches_normal_equations(seed in 0u64..1000) {
        let sample = rows(seed, 90);
        let fe = parse_fixed_effects("season").unwrap();
        let design = build_design(&sample, Model::Pm, &fe).unwrap();
        let fit = fit_ols(&design).unwrap();
        let x: Vec<Vec<f64>> = (0..design.n_rows()).map(|r| design.x.row(r).iter().copied().collect()).collect();
        let oracle = normal_equations(&x, design.response.as_slice());
        for (a, b) in fit.params.iter().zip(&oracle) {
            prop_assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn fixed_effects_match_within_demeaning(seed in 0u64..1000) {
        // Frisch-Waugh: slopes with season dummies equal slopes on
        // season-demeaned data without an intercept.
        let sample = rows(seed, 120);
        let fe = parse_fixed_effects("season").unwrap();
        let fit = fit_ols(&build_design(&sample, Model::Pm, &fe).unwrap()).unwrap();
        let seasons: BTreeSet<i32> = sample.iter().map(|r| r.season).collect();
        let cols = |r: &PlayerMatchRow| vec![r.z, r.rank_dist, r.wikibuzz, r.e];
        let mut demeaned: Vec<Vec<f64>> = sample.iter().map(cols).collect();
        for s in seasons {
            let idx: Vec<usize> = (0..sample.len()).filter(|&i| sample[i].season == s).collect();
            let mut means = [0.0; 4];
            for &i in &idx {
                for (m, v) in means.iter_mut().zip(&demeaned[i]) {
                    *m += v / idx.len() as f64;
                }
            }
            for &i in &idx {
                for (v, m) in demeaned[i].iter_mut().zip(&means) {
                    *v -= m;
                }
            }
        }
        let x: Vec<Vec<f64>> = demeaned.iter().map(|r| r[..3].to_vec()).collect();
        let y: Vec<f64> = demeaned.iter().map(|r| r[3]).collect();
        let slopes = normal_equations(&x, &y);
        for (a, b) in fit.beta_hat.iter().zip(&slopes) {
            prop_assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn row_order_does_not_matter(seed in 0u64..1000, rot in 1usize..100) {
        let sample = rows(seed, 100);
        let fe = parse_fixed_effects("season,tournament").unwrap();
        let a = fit_ols(&build_design(&sample, Model::PmWithoutRd, &fe).unwrap()).unwrap();
        let mut shuffled = sample.clone();
        shuffled.rotate_left(rot % sample.len());
        shuffled.reverse();
        let b = fit_ols(&build_design(&shuffled, Model::PmWithoutRd, &fe).unwrap()).unwrap();
        prop_assert!((a.alpha_hat - b.alpha_hat).abs() < 1e-9);
        for (x, y) in a.beta_hat.iter().zip(&b.beta_hat) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn bets_do_not_depend_on_each_other(seed in 0u64..1000, drop in 0usize..200) {
        let test = rows(seed, 100);
        let fit = RegressionFit::from_coefficients(Model::Pm, 0.01, 0.05, 0.02, 0.01);
        let cfg = StrategyConfig::new(Model::Pm, OddsSource::Bet365);
        let full = run_backtest(&fit, &test, &cfg).unwrap();
        let gone = &test[drop % test.len()];
        let rest: Vec<_> = test.iter().filter(|r| r.key() != gone.key()).cloned().collect();
        let part = run_backtest(&fit, &rest, &cfg).unwrap();
        let key = |r: &BetRecord| (r.match_id.clone(), r.side);
        for r in &part.records {
            let same = full.records.iter().find(|f| key(f) == key(r)).unwrap();
            prop_assert_eq!(same.f_star, r.f_star);
            prop_assert_eq!(same.profit, r.profit);
        }
    }

    #[test]
    fn cleaning_an_anomaly_free_corpus_twice_changes_nothing(seed in 0u64..1000) {
        let ds = corpus(seed, 150, 0);
        let (once, _) = run_pipeline(&ds, &PipelineOptions::default()).unwrap();
        let (twice, report) = run_pipeline(&once, &PipelineOptions::default()).unwrap();
        prop_assert_eq!(&twice, &once);
        prop_assert!(report.steps.iter().all(|s| s.rows_removed == 0));
    }
}

fn universe(n: usize) -> Vec<BetRecord> {
    (0..n)
        .map(|i| BetRecord {
            match_id: format!("m{i}"),
            date: NaiveDate::from_ymd_opt(2019, 1, 1).unwrap(),
            side: Side::Winner,
            player: String::new(),
            opponent: String::new(),
            y: u8::from(i % 3 == 0),
            y_tilde: 0.5,
            odds_used: 1.4 + (i % 9) as f64 * 0.35,
            overround: None,
            f_star: 0.0,
            profit: 0.0,
            cumulative: 0.0,
        })
        .collect()
}

#[test]
fn p_value_falls_as_the_real_roi_rises() {
    let u = universe(120);
    let stakes = vec![0.1; 15];
    let cfg = SignificanceConfig {
        trials: 2_000,
        seed: 5,
        ..Default::default()
    };
    let ps: Vec<f64> = [-0.5, -0.1, 0.0, 0.1, 0.3, 0.8]
        .iter()
        .map(|&roi| random_strategy_pvalue(roi, &u, &stakes, &cfg).unwrap().p_bs)
        .collect();
    assert!(ps.windows(2).all(|w| w[0] >= w[1]), "{ps:?}");
}
