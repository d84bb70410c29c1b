//! Predictors and targets of the mispricing regression.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{PlayerMatchRow, Rank};

/// Raw inverse decimal odds; no overround adjustment.
pub fn implied_probability(odds: f64) -> Result<f64> {
    if !odds.is_finite() || odds < 1.0 {
        return Err(Error::BadOdds(odds));
    }
    Ok(1.0 / odds)
}

/// Bookmaker margin `z_i + z_j - 1`; negative for best-of-market odds.
pub fn overround(z_i: f64, z_j: f64) -> f64 {
    z_i + z_j - 1.0
}

/// `-(1/rank_i - 1/rank_j)` with 1/Unranked = 0.
pub fn rank_distance(rank_i: Rank, rank_j: Rank) -> f64 {
    -(rank_i.inverse() - rank_j.inverse())
}

/// `ln(w_i / med_i) - ln(w_j / med_j)` for yesterday's views `w` and
/// trailing-year medians `med`.
pub fn wikibuzz(w_i: f64, med_i: f64, w_j: f64, med_j: f64) -> Result<f64> {
    for v in [w_i, med_i, w_j, med_j] {
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::NonPositiveInput(v));
        }
    }
    Ok((w_i / med_i).ln() - (w_j / med_j).ln())
}

/// Signed forecast error `y - z`.
pub fn forecast_error(y: u8, z: f64) -> f64 {
    f64::from(y) - z
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Model {
    /// Preferred model: z, RankDist and WikiBuzz.
    Pm,
    /// Preferred model without the RankDist term.
    PmWithoutRd,
}

impl Model {
    pub fn uses_rank_dist(self) -> bool {
        matches!(self, Model::Pm)
    }

    pub fn label(self) -> &'static str {
        match self {
            Model::Pm => "PM",
            Model::PmWithoutRd => "PM w/o RD",
        }
    }

    pub fn slope_names(self) -> &'static [&'static str] {
        match self {
            Model::Pm => &["z", "rank_dist", "wikibuzz"],
            Model::PmWithoutRd => &["z", "wikibuzz"],
        }
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pm" => Ok(Model::Pm),
            "pm-no-rd" | "pm_no_rd" | "pm-wo-rd" => Ok(Model::PmWithoutRd),
            other => Err(Error::InvalidArgument(format!("unknown model `{other}`"))),
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::Pm => "pm",
            Model::PmWithoutRd => "pm-no-rd",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedEffect {
    Season,
    Tournament,
}

impl FixedEffect {
    fn level(self, row: &PlayerMatchRow) -> String {
        match self {
            FixedEffect::Season => row.season.to_string(),
            FixedEffect::Tournament => row.tournament_key.clone(),
        }
    }
}

impl FromStr for FixedEffect {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "season" | "year" => Ok(FixedEffect::Season),
            "tournament" => Ok(FixedEffect::Tournament),
            other => Err(Error::InvalidArgument(format!(
                "unknown fixed effect `{other}`"
            ))),
        }
    }
}

/// Parses `season,tournament` style lists; `none` or empty gives no effects.
pub fn parse_fixed_effects(list: &str) -> Result<BTreeSet<FixedEffect>> {
    if list.trim().eq_ignore_ascii_case("none") {
        return Ok(BTreeSet::new());
    }
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect()
}

/// A dummy column: which effect and which level it switches on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DummyColumn {
    pub effect: FixedEffect,
    pub level: String,
}

/// Cluster membership per row, as dense indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterKeys {
    pub tournament: Vec<usize>,
    pub matches: Vec<usize>,
    pub n_tournament: usize,
    pub n_matches: usize,
}

/// Regression inputs for the forecast-error model.
///
/// Column layout: intercept, slopes (`model.slope_names()`), then dummies.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub model: Model,
    pub response: DVector<f64>,
    pub x: DMatrix<f64>,
    pub names: Vec<String>,
    pub dummies: Vec<DummyColumn>,
    /// Omitted reference level per effect.
    pub reference_levels: BTreeMap<FixedEffect, String>,
    /// Effects requested but absorbed by a finer nested effect.
    pub absorbed: Vec<FixedEffect>,
    pub clusters: ClusterKeys,
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    /// Intercept plus slopes.
    pub fn n_reported(&self) -> usize {
        1 + self.model.slope_names().len()
    }

    pub fn n_params(&self) -> usize {
        self.x.ncols()
    }
}

fn dense_index<'a>(keys: impl Iterator<Item = &'a str>) -> (Vec<usize>, usize) {
    let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
    let keys: Vec<&str> = keys.collect();
    for k in &keys {
        let n = ids.len();
        ids.entry(k).or_insert(n);
    }
    (keys.iter().map(|k| ids[k]).collect(), ids.len())
}

pub fn cluster_keys(rows: &[PlayerMatchRow]) -> ClusterKeys {
    let (tournament, n_tournament) = dense_index(rows.iter().map(|r| r.tournament_key.as_str()));
    let (matches, n_matches) = dense_index(rows.iter().map(|r| r.match_id.as_str()));
    ClusterKeys {
        tournament,
        matches,
        n_tournament,
        n_matches,
    }
}

/// Builds the regression design for `model` with the requested fixed effects.
///
/// Each effect gets one dummy per level except its (lexicographically first)
/// reference level. Season is absorbed when tournament effects are also
/// requested, since every tournament key belongs to exactly one season.
pub fn build_design(
    rows: &[PlayerMatchRow],
    model: Model,
    fe: &BTreeSet<FixedEffect>,
) -> Result<DesignMatrix> {
    let n = rows.len();
    let mut names: Vec<String> = vec!["const".into()];
    names.extend(model.slope_names().iter().map(|s| s.to_string()));

    let mut absorbed = Vec::new();
    let mut effects: Vec<FixedEffect> = fe.iter().copied().collect();
    if fe.contains(&FixedEffect::Season) && fe.contains(&FixedEffect::Tournament) {
        let mut season_of: BTreeMap<&str, i32> = BTreeMap::new();
        let nested = rows
            .iter()
            .all(|r| *season_of.entry(&r.tournament_key).or_insert(r.season) == r.season);
        if nested {
            effects.retain(|e| *e != FixedEffect::Season);
            absorbed.push(FixedEffect::Season);
        }
    }

    let mut dummies = Vec::new();
    let mut reference_levels = BTreeMap::new();
    let mut level_of: Vec<Vec<String>> = Vec::new();
    for &effect in &effects {
        let levels: Vec<String> = rows.iter().map(|r| effect.level(r)).collect();
        let distinct: BTreeSet<&String> = levels.iter().collect();
        let mut it = distinct.into_iter();
        if let Some(reference) = it.next() {
            reference_levels.insert(effect, reference.clone());
        }
        for level in it {
            dummies.push(DummyColumn {
                effect,
                level: level.clone(),
            });
        }
        level_of.push(levels);
    }

    let k = names.len() + dummies.len();
    let mut x = DMatrix::<f64>::zeros(n, k);
    for (i, r) in rows.iter().enumerate() {
        x[(i, 0)] = 1.0;
        x[(i, 1)] = r.z;
        if model.uses_rank_dist() {
            x[(i, 2)] = r.rank_dist;
            x[(i, 3)] = r.wikibuzz;
        } else {
            x[(i, 2)] = r.wikibuzz;
        }
    }
    let first_dummy = names.len();
    let mut col_of: BTreeMap<(FixedEffect, &str), usize> = BTreeMap::new();
    for (j, d) in dummies.iter().enumerate() {
        col_of.insert((d.effect, d.level.as_str()), first_dummy + j);
    }
    for (effect, levels) in effects.iter().zip(&level_of) {
        for (i, level) in levels.iter().enumerate() {
            if let Some(&c) = col_of.get(&(*effect, level.as_str())) {
                x[(i, c)] = 1.0;
            }
        }
    }
    for d in &dummies {
        names.push(format!("{:?}[{}]", d.effect, d.level).to_lowercase());
    }

    // A constant slope column is collinear with the intercept.
    for (c, name) in names.iter().enumerate().take(first_dummy).skip(1) {
        let col = x.column(c);
        if n > 0 && col.iter().all(|v| *v == col[0]) {
            return Err(Error::RankDeficient(format!(
                "regressor `{name}` is constant"
            )));
        }
    }

    Ok(DesignMatrix {
        model,
        response: DVector::from_iterator(n, rows.iter().map(|r| r.e)),
        x,
        names,
        dummies,
        reference_levels,
        absorbed,
        clusters: cluster_keys(rows),
    })
}
