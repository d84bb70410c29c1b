//! Python bindings for the buzzcheck engine.
//!
//! Exposes datasets, cleaning, estimation, backtesting, the significance
//! test and the replication run. Results come back as plain Python values
//! or small read-only classes.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use buzzcheck::backtest::{self, PRange, StrategyConfig};
use buzzcheck::clean::{self, PipelineOptions, Sigma};
use buzzcheck::estimate::{self, parse_clusters};
use buzzcheck::features::{self, parse_fixed_effects, Model};
use buzzcheck::ingest::{self, parse_row_keys, OddsSource, Rank, Schema, SplitConfig};
use buzzcheck::report::{self, ReplicateOptions};
use buzzcheck::significance::{self, SignificanceConfig};
use buzzcheck::synth::{self, SynthConfig};

create_exception!(pybuzzcheck, BuzzcheckError, PyException);

fn err(e: buzzcheck::Error) -> PyErr {
    BuzzcheckError::new_err(e.to_string())
}

fn parse<T: std::str::FromStr<Err = buzzcheck::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

fn rank(r: Option<u32>) -> Rank {
    r.map_or(Rank::Unranked, Rank::Ranked)
}

/// A normalized match corpus.
#[pyclass(frozen, skip_from_py_object, name = "Dataset")]
#[derive(Clone)]
struct PyDataset {
    inner: ingest::Dataset,
}

#[pymethods]
impl PyDataset {
    /// Reads a match file; `schema` is `canonical`, `tennis-data` or a schema file path.
    #[staticmethod]
    #[pyo3(signature = (path, schema = "canonical"))]
    fn load(path: PathBuf, schema: &str) -> PyResult<Self> {
        let schema = match schema {
            "canonical" => Schema::canonical(),
            "tennis-data" => Schema::tennis_data(),
            p => Schema::from_file(p.as_ref()).map_err(err)?,
        };
        let records = ingest::parse_match_path(&path, &schema).map_err(err)?;
        Ok(PyDataset {
            inner: ingest::normalize_dataset(records),
        })
    }

    /// Seeded synthetic corpus.
    #[staticmethod]
    #[pyo3(signature = (n_matches = 1500, seed = 7, anomaly_every = 0))]
    fn synthetic(n_matches: usize, seed: u64, anomaly_every: usize) -> Self {
        PyDataset {
            inner: synth::synth_corpus(&SynthConfig {
                seed,
                n_matches,
                anomaly_every,
                ..Default::default()
            }),
        }
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        ingest::write_canonical(&self.inner, &path).map_err(err)?;
        Ok(())
    }

    /// Runs the cleaning steps; returns the cleaned dataset and the row
    /// count after each step (starting with the input count).
    #[pyo3(signature = (sigma = None))]
    fn clean(&self, sigma: Option<f64>) -> PyResult<(PyDataset, Vec<usize>, Option<f64>)> {
        let opts = PipelineOptions {
            sigma: sigma.map_or(Sigma::Auto, Sigma::Fixed),
            ..Default::default()
        };
        let (ds, rep) = clean::run_pipeline(&self.inner, &opts).map_err(err)?;
        Ok((PyDataset { inner: ds }, rep.checkpoints(), rep.sigma_used))
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset({} matches, {} rows)",
            self.inner.len(),
            self.inner.n_rows()
        )
    }
}

/// Regression estimates with clustered inference.
#[pyclass(frozen, name = "Fit")]
struct PyFit {
    inner: estimate::RegressionFit,
}

#[pymethods]
impl PyFit {
    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha_hat
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows
    }

    /// `{name: estimate}` including `const`.
    fn coefficients(&self) -> BTreeMap<String, f64> {
        self.inner
            .names
            .iter()
            .filter_map(|n| Some((n.clone(), self.inner.coef(n)?)))
            .collect()
    }

    fn standard_errors(&self) -> BTreeMap<String, f64> {
        self.inner
            .names
            .iter()
            .filter_map(|n| Some((n.clone(), self.inner.se(n)?)))
            .collect()
    }

    fn p_values(&self) -> BTreeMap<String, f64> {
        self.inner
            .names
            .iter()
            .filter_map(|n| Some((n.clone(), self.inner.p_value(n)?)))
            .collect()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| err(e.into()))
    }
}

/// Aggregate results of one strategy.
#[pyclass(frozen, get_all, name = "Summary")]
struct PySummary {
    n_odds: usize,
    bets_placed: usize,
    mean_overround_pct: Option<f64>,
    investment: f64,
    absolute_return: f64,
    roi_pct: Option<f64>,
    /// `(date, cumulative profit)` after each placed bet.
    cumulative: Vec<(String, f64)>,
    p_bs: Option<f64>,
}

#[pymethods]
impl PySummary {
    fn __repr__(&self) -> String {
        format!(
            "Summary(n_odds={}, bets={}, investment={:.2}, return={:.2}, roi={:?})",
            self.n_odds, self.bets_placed, self.investment, self.absolute_return, self.roi_pct
        )
    }
}

fn player_rows(ds: &PyDataset) -> Vec<ingest::PlayerMatchRow> {
    ingest::to_player_rows(&ds.inner, OddsSource::MarketAverage).rows
}

/// Fits the mispricing regression on rows dated within `[start, end]`.
#[pyfunction]
#[pyo3(signature = (dataset, start, end, model = "pm", fe = "season,tournament", clusters = "tournament,match", p_range = None))]
fn fit(
    dataset: &PyDataset,
    start: &str,
    end: &str,
    model: &str,
    fe: &str,
    clusters: &str,
    p_range: Option<&str>,
) -> PyResult<PyFit> {
    let model: Model = parse(model)?;
    let mut rows = ingest::slice_dates(&player_rows(dataset), parse_date(start)?, parse_date(end)?);
    if let Some(r) = p_range {
        rows = backtest::apply_competitiveness(&rows, &parse::<PRange>(r)?);
    }
    let design = features::build_design(&rows, model, &parse_fixed_effects(fe).map_err(err)?)
        .map_err(err)?;
    let fit = estimate::fit_ols(&design).map_err(err)?;
    let fit = estimate::with_inference(fit, &design, &parse_clusters(clusters).map_err(err)?)
        .map_err(err)?;
    Ok(PyFit { inner: fit })
}

fn parse_date(s: &str) -> PyResult<chrono::NaiveDate> {
    s.parse()
        .map_err(|_| BuzzcheckError::new_err(format!("bad date `{s}`")))
}

/// Trains on the 2016-2018 window (or `train`) and backtests through `test_end`.
#[pyfunction]
#[pyo3(name = "backtest", signature = (dataset, model = "pm", odds = "bet365", p_range = None, exclude = None, train = ("2016-01-01", "2018-12-31"), test_end = "2020-02-29", fe = "season,tournament", trials = 0, seed = 42))]
#[allow(clippy::too_many_arguments)]
fn run_backtest(
    dataset: &PyDataset,
    model: &str,
    odds: &str,
    p_range: Option<&str>,
    exclude: Option<&str>,
    train: (&str, &str),
    test_end: &str,
    fe: &str,
    trials: usize,
    seed: u64,
) -> PyResult<PySummary> {
    let split = SplitConfig {
        train_start: parse_date(train.0)?,
        train_end: parse_date(train.1)?,
        test_end: parse_date(test_end)?,
    };
    let (train_rows, test_rows) =
        ingest::split_samples(&player_rows(dataset), &split).map_err(err)?;
    let mut config = StrategyConfig::new(parse(model)?, parse(odds)?);
    if let Some(r) = p_range {
        config = config.with_range(parse(r)?);
    }
    if let Some(list) = exclude {
        config = config.excluding(parse_row_keys(list).map_err(err)?);
    }
    let fe = parse_fixed_effects(fe).map_err(err)?;
    let run = backtest::run_strategy(&train_rows, &test_rows, &config, &fe, None).map_err(err)?;
    let p_bs = if trials > 0 && run.summary.bets_placed > 0 {
        let cfg = SignificanceConfig {
            trials,
            seed,
            ..Default::default()
        };
        Some(
            significance::ledger_significance(&run.ledger, None, &cfg)
                .map_err(err)?
                .p_bs,
        )
    } else {
        None
    };
    let s = run.summary;
    Ok(PySummary {
        n_odds: s.n_odds,
        bets_placed: s.bets_placed,
        mean_overround_pct: s.mean_overround_pct,
        investment: s.investment,
        absolute_return: s.absolute_return,
        roi_pct: s.roi_pct,
        cumulative: backtest::cumulative_series(&run.ledger)
            .into_iter()
            .map(|(d, v)| (d.to_string(), v))
            .collect(),
        p_bs,
    })
}

#[pyfunction]
fn implied_probability(odds: f64) -> PyResult<f64> {
    features::implied_probability(odds).map_err(err)
}

/// Ranks as integers, `None` for unranked.
#[pyfunction]
fn rank_distance(rank_i: Option<u32>, rank_j: Option<u32>) -> f64 {
    features::rank_distance(rank(rank_i), rank(rank_j))
}

#[pyfunction]
fn wikibuzz(w_i: f64, med_i: f64, w_j: f64, med_j: f64) -> PyResult<f64> {
    features::wikibuzz(w_i, med_i, w_j, med_j).map_err(err)
}

#[pyfunction]
fn kelly_fraction(y_tilde: f64, odds: f64) -> f64 {
    backtest::kelly_fraction(y_tilde, odds)
}

#[pyfunction]
fn settle_bet(f_star: f64, odds: f64, won: bool) -> f64 {
    backtest::settle_bet(f_star, odds, u8::from(won))
}

/// Runs a replication config; returns the manifest as JSON.
#[pyfunction]
#[pyo3(signature = (config, out_dir, data_dir = None, seed = None, trials = None))]
fn replicate_all(
    config: PathBuf,
    out_dir: PathBuf,
    data_dir: Option<PathBuf>,
    seed: Option<u64>,
    trials: Option<usize>,
) -> PyResult<String> {
    let run = report::replicate_all(
        &config,
        &out_dir,
        &ReplicateOptions {
            data_dir,
            seed,
            trials,
        },
    )
    .map_err(err)?;
    serde_json::to_string(&run).map_err(|e| err(e.into()))
}

#[pymodule]
fn pybuzzcheck(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("BuzzcheckError", m.py().get_type::<BuzzcheckError>())?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyFit>()?;
    m.add_class::<PySummary>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(run_backtest, m)?)?;
    m.add_function(wrap_pyfunction!(implied_probability, m)?)?;
    m.add_function(wrap_pyfunction!(rank_distance, m)?)?;
    m.add_function(wrap_pyfunction!(wikibuzz, m)?)?;
    m.add_function(wrap_pyfunction!(kelly_fraction, m)?)?;
    m.add_function(wrap_pyfunction!(settle_bet, m)?)?;
    m.add_function(wrap_pyfunction!(replicate_all, m)?)?;
    Ok(())
}
