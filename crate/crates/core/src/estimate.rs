//! Least-squares fit of the forecast-error model with fixed effects and
//! two-way cluster-robust inference.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::features::{DesignMatrix, FixedEffect, Model};

/// Cluster dimensions used for the covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterBy {
    Tournament,
    Match,
}

impl FromStr for ClusterBy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tournament" => Ok(ClusterBy::Tournament),
            "match" => Ok(ClusterBy::Match),
            other => Err(Error::InvalidArgument(format!(
                "unknown cluster dimension `{other}`"
            ))),
        }
    }
}

/// Parses a comma-separated list such as `tournament,match`; `none` gives
/// heteroskedasticity-robust errors.
pub fn parse_clusters(list: &str) -> Result<BTreeSet<ClusterBy>> {
    if list.trim().eq_ignore_ascii_case("none") {
        return Ok(BTreeSet::new());
    }
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect()
}

/// Covariance and test statistics for the reported coefficients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Inference {
    /// Row-major covariance over `[alpha, betas...]`.
    pub covariance: Vec<Vec<f64>>,
    pub se: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    pub df: usize,
    pub cluster_counts: BTreeMap<ClusterBy, usize>,
    /// Negative eigenvalues floored to zero.
    pub clipped_eigenvalues: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegressionFit {
    pub model: Model,
    /// `const` followed by the model's slope names.
    pub names: Vec<String>,
    /// Grand intercept: fixed effects centered to observation-weighted mean zero.
    pub alpha_hat: f64,
    pub beta_hat: Vec<f64>,
    /// Centered fixed-effect levels, keyed `season[2017]` / `tournament[...]`.
    pub fe_estimates: BTreeMap<String, f64>,
    pub absorbed_effects: Vec<FixedEffect>,
    pub n_rows: usize,
    pub n_params: usize,
    pub inference: Option<Inference>,
    #[serde(skip)]
    pub residuals: Vec<f64>,
    #[serde(skip)]
    pub fitted: Vec<f64>,
    /// Dummy-coded parameter vector as estimated.
    #[serde(skip)]
    pub params: Vec<f64>,
    #[serde(skip)]
    xtx_inv: Option<DMatrix<f64>>,
    /// Maps the full parameter vector onto `[alpha, betas...]`.
    #[serde(skip)]
    reporting: Option<DMatrix<f64>>,
}

impl RegressionFit {
    /// Estimate by reported name (`const`, `z`, `rank_dist`, `wikibuzz`).
    pub fn coef(&self, name: &str) -> Option<f64> {
        if name == "const" {
            return Some(self.alpha_hat);
        }
        self.names[1..]
            .iter()
            .position(|n| n == name)
            .map(|i| self.beta_hat[i])
    }

    pub fn se(&self, name: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == name)?;
        self.inference.as_ref().map(|inf| inf.se[i])
    }

    pub fn p_value(&self, name: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == name)?;
        self.inference.as_ref().map(|inf| inf.p_values[i])
    }

    pub fn beta_z(&self) -> f64 {
        self.coef("z").unwrap_or(0.0)
    }

    pub fn beta_rank_dist(&self) -> f64 {
        self.coef("rank_dist").unwrap_or(0.0)
    }

    pub fn beta_wikibuzz(&self) -> f64 {
        self.coef("wikibuzz").unwrap_or(0.0)
    }

    /// Fit with the given coefficients and no data behind it; used for
    /// forecasting with published or hand-picked values.
    pub fn from_coefficients(
        model: Model,
        alpha: f64,
        beta_z: f64,
        beta_rd: f64,
        beta_wb: f64,
    ) -> Self {
        let beta_hat = match model {
            Model::Pm => vec![beta_z, beta_rd, beta_wb],
            Model::PmWithoutRd => vec![beta_z, beta_wb],
        };
        let mut names = vec!["const".to_string()];
        names.extend(model.slope_names().iter().map(|s| s.to_string()));
        RegressionFit {
            model,
            names,
            alpha_hat: alpha,
            beta_hat,
            fe_estimates: BTreeMap::new(),
            absorbed_effects: Vec::new(),
            n_rows: 0,
            n_params: 1 + model.slope_names().len(),
            inference: None,
            residuals: Vec::new(),
            fitted: Vec::new(),
            params: Vec::new(),
            xtx_inv: None,
            reporting: None,
        }
    }
}

/// Ordinary least squares via Householder QR.
pub fn fit_ols(design: &DesignMatrix) -> Result<RegressionFit> {
    let (n, k) = design.x.shape();
    if n <= k {
        return Err(Error::NotEnoughRows { rows: n, params: k });
    }
    let qr = design.x.clone().qr();
    let r = qr.r();
    let max_diag = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let tol = max_diag * (n.max(k) as f64) * f64::EPSILON * 16.0;
    if let Some(j) = (0..k).find(|&i| r[(i, i)].abs() <= tol) {
        return Err(Error::RankDeficient(format!(
            "column `{}` is linearly dependent on earlier columns",
            design.names[j]
        )));
    }

    let mut qty = design.response.clone();
    qr.q_tr_mul(&mut qty);
    let rhs = DVector::from_iterator(k, qty.iter().take(k).copied());
    let params = r
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::RankDeficient("singular triangular factor".into()))?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::RankDeficient("singular triangular factor".into()))?;
    let xtx_inv = &r_inv * r_inv.transpose();

    let fitted = &design.x * &params;
    let residuals = &design.response - &fitted;

    // alpha = mean(x)' theta over intercept and dummies, i.e. the intercept
    // with every fixed-effect block centered at its observation mean.
    let n_rep = design.n_reported();
    let means: Vec<f64> = (0..k).map(|j| design.x.column(j).mean()).collect();
    let mut reporting = DMatrix::<f64>::zeros(n_rep, k);
    reporting[(0, 0)] = 1.0;
    for (j, &m) in means.iter().enumerate().skip(n_rep) {
        reporting[(0, j)] = m;
    }
    for s in 1..n_rep {
        reporting[(s, s)] = 1.0;
    }
    let reported = &reporting * &params;

    let mut fe_estimates = BTreeMap::new();
    let mut block_mean: HashMap<FixedEffect, f64> = HashMap::new();
    for (d, j) in design.dummies.iter().zip(n_rep..) {
        *block_mean.entry(d.effect).or_default() += means[j] * params[j];
    }
    for (effect, reference) in &design.reference_levels {
        let key = format!("{:?}[{}]", effect, reference).to_lowercase();
        fe_estimates.insert(key, -block_mean.get(effect).copied().unwrap_or(0.0));
    }
    for (d, j) in design.dummies.iter().zip(n_rep..) {
        let key = format!("{:?}[{}]", d.effect, d.level).to_lowercase();
        fe_estimates.insert(key, params[j] - block_mean[&d.effect]);
    }

    Ok(RegressionFit {
        model: design.model,
        names: design.names[..n_rep].to_vec(),
        alpha_hat: reported[0],
        beta_hat: reported.iter().skip(1).copied().collect(),
        fe_estimates,
        absorbed_effects: design.absorbed.clone(),
        n_rows: n,
        n_params: k,
        inference: None,
        residuals: residuals.iter().copied().collect(),
        fitted: fitted.iter().copied().collect(),
        params: params.iter().copied().collect(),
        xtx_inv: Some(xtx_inv),
        reporting: Some(reporting),
    })
}

/// CR1 one-way cluster sandwich over the full parameter vector.
fn sandwich(
    x: &DMatrix<f64>,
    resid: &[f64],
    bread: &DMatrix<f64>,
    groups: &[usize],
    n_groups: usize,
) -> DMatrix<f64> {
    let (n, k) = x.shape();
    let mut scores = DMatrix::<f64>::zeros(n_groups, k);
    for (i, (&g, &e)) in groups.iter().zip(resid).enumerate() {
        for j in 0..k {
            scores[(g, j)] += x[(i, j)] * e;
        }
    }
    let meat = scores.transpose() * &scores;
    let g = n_groups as f64;
    let scale = g / (g - 1.0) * (n as f64 - 1.0) / (n as f64 - k as f64);
    bread * meat * bread * scale
}

fn dense_pairs(a: &[usize], b: &[usize]) -> (Vec<usize>, usize) {
    let mut ids: HashMap<(usize, usize), usize> = HashMap::new();
    let v = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let n = ids.len();
            *ids.entry((x, y)).or_insert(n)
        })
        .collect();
    (v, ids.len())
}

/// Full-parameter covariance, clustered on one or two dimensions.
///
/// Two dimensions combine by inclusion-exclusion `V_a + V_b - V_ab` where
/// `V_ab` clusters on the intersection; negative eigenvalues of the sum are
/// floored at zero.
pub fn full_cluster_covariance(
    fit: &RegressionFit,
    design: &DesignMatrix,
    clusters: &BTreeSet<ClusterBy>,
) -> Result<(DMatrix<f64>, BTreeMap<ClusterBy, usize>, usize)> {
    let bread = fit
        .xtx_inv
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("fit carries no design information".into()))?;
    let keys = &design.clusters;
    let dim = |c: ClusterBy| -> (&[usize], usize) {
        match c {
            ClusterBy::Tournament => (&keys.tournament, keys.n_tournament),
            ClusterBy::Match => (&keys.matches, keys.n_matches),
        }
    };
    let mut counts = BTreeMap::new();
    for &c in clusters {
        let (_, g) = dim(c);
        if g < 2 {
            return Err(Error::SingleCluster(match c {
                ClusterBy::Tournament => "tournament",
                ClusterBy::Match => "match",
            }));
        }
        counts.insert(c, g);
    }
    let x = &design.x;
    let resid = &fit.residuals;
    let dims: Vec<ClusterBy> = clusters.iter().copied().collect();
    let v = match dims.as_slice() {
        [] => {
            // No clustering requested: heteroskedasticity-robust (HC1).
            let singles: Vec<usize> = (0..x.nrows()).collect();
            sandwich(x, resid, bread, &singles, singles.len())
        }
        [a] => {
            let (ga, na) = dim(*a);
            sandwich(x, resid, bread, ga, na)
        }
        [a, b] => {
            let (ga, na) = dim(*a);
            let (gb, nb) = dim(*b);
            let (gab, nab) = dense_pairs(ga, gb);
            let va = sandwich(x, resid, bread, ga, na);
            let vb = sandwich(x, resid, bread, gb, nb);
            let vab = sandwich(x, resid, bread, &gab, nab);
            va + vb - vab
        }
        _ => unreachable!("only two cluster dimensions exist"),
    };
    let (v, clipped) = clip_eigenvalues(v);
    Ok((v, counts, clipped))
}

/// Symmetrizes and floors negative eigenvalues at zero.
pub fn clip_eigenvalues(v: DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let sym = (&v + v.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    let clipped = eig.eigenvalues.iter().filter(|&&l| l < 0.0).count();
    if clipped == 0 {
        return (sym, 0);
    }
    let vals = eig.eigenvalues.map(|l| l.max(0.0));
    let out = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    (out, clipped)
}

/// Cluster-robust covariance of the reported coefficients `[alpha, betas...]`.
pub fn cluster_covariance(
    fit: &RegressionFit,
    design: &DesignMatrix,
    clusters: &BTreeSet<ClusterBy>,
) -> Result<DMatrix<f64>> {
    let (v, _, _) = full_cluster_covariance(fit, design, clusters)?;
    let reporting = fit
        .reporting
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("fit carries no design information".into()))?;
    Ok(reporting * v * reporting.transpose())
}

/// Two-sided p-value of `t` under Student's t with `df` degrees of freedom.
pub fn two_sided_p(t: f64, df: usize) -> f64 {
    if !t.is_finite() {
        return if t.is_nan() { f64::NAN } else { 0.0 };
    }
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

/// Attaches clustered inference to `fit`. Degrees of freedom for the
/// t tests are `min(G) - 1` across the cluster dimensions.
pub fn with_inference(
    mut fit: RegressionFit,
    design: &DesignMatrix,
    clusters: &BTreeSet<ClusterBy>,
) -> Result<RegressionFit> {
    let (v, counts, clipped) = full_cluster_covariance(&fit, design, clusters)?;
    let reporting = fit.reporting.as_ref().expect("checked above");
    let cov = reporting * v * reporting.transpose();
    let n_rep = cov.nrows();
    let se: Vec<f64> = (0..n_rep).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
    let estimates: Vec<f64> = std::iter::once(fit.alpha_hat)
        .chain(fit.beta_hat.iter().copied())
        .collect();
    let t_stats: Vec<f64> = estimates.iter().zip(&se).map(|(b, s)| b / s).collect();
    let df = counts
        .values()
        .min()
        .copied()
        .unwrap_or(fit.n_rows.saturating_sub(fit.n_params) + 1)
        - 1;
    let p_values = t_stats.iter().map(|&t| two_sided_p(t, df.max(1))).collect();
    fit.inference = Some(Inference {
        covariance: (0..n_rep)
            .map(|i| (0..n_rep).map(|j| cov[(i, j)]).collect())
            .collect(),
        se,
        t_stats,
        p_values,
        df,
        cluster_counts: counts,
        clipped_eigenvalues: clipped,
    });
    Ok(fit)
}

/// Tournament and match, the default clustering.
pub fn default_clusters() -> BTreeSet<ClusterBy> {
    BTreeSet::from([ClusterBy::Tournament, ClusterBy::Match])
}

/// Fit plus default two-way clustered inference.
pub fn estimate(design: &DesignMatrix) -> Result<RegressionFit> {
    with_inference(fit_ols(design)?, design, &default_clusters())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub name: String,
    pub label: String,
    pub estimate: f64,
    pub se: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTable {
    pub model: Model,
    pub rows: Vec<CoefficientRow>,
    pub n_rows: usize,
    pub df: Option<usize>,
}

pub fn coefficient_label(name: &str) -> &'static str {
    match name {
        "z" => "Odds-implied probability, b1",
        "rank_dist" => "WTA rank distance to opponent (RD), b2",
        "wikibuzz" => "Wiki relative buzz factor, b3",
        "const" => "Constant, a",
        _ => "",
    }
}

/// Coefficient rows in display order: slopes first, constant last.
pub fn mispricing_table(fit: &RegressionFit) -> CoefficientTable {
    let mut order: Vec<usize> = (1..fit.names.len()).collect();
    order.push(0);
    let rows = order
        .into_iter()
        .map(|i| {
            let name = fit.names[i].clone();
            let estimate = if i == 0 {
                fit.alpha_hat
            } else {
                fit.beta_hat[i - 1]
            };
            CoefficientRow {
                label: coefficient_label(&name).to_string(),
                name,
                estimate,
                se: fit.inference.as_ref().map(|inf| inf.se[i]),
                p_value: fit.inference.as_ref().map(|inf| inf.p_values[i]),
            }
        })
        .collect();
    CoefficientTable {
        model: fit.model,
        rows,
        n_rows: fit.n_rows,
        df: fit.inference.as_ref().map(|i| i.df),
    }
}
