//! Match/odds file parsing, dataset normalization and the player-match view.
//!
//! Input files follow the tennis-data.co.uk layout with pageview columns
//! joined on. Column names drift between yearly files, so every file is read
//! through an explicit [`Schema`] rather than by guessing headers.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features;

/// First and last calendar dates any record may carry.
pub fn dataset_bounds() -> (NaiveDate, NaiveDate) {
    (
        NaiveDate::from_ymd_opt(2015, 7, 1).unwrap(),
        NaiveDate::from_ymd_opt(2023, 8, 31).unwrap(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OddsSource {
    Bet365,
    MarketAverage,
    MarketBest,
}

impl OddsSource {
    pub const ALL: [OddsSource; 3] = [
        OddsSource::Bet365,
        OddsSource::MarketAverage,
        OddsSource::MarketBest,
    ];

    pub fn label(self) -> &'static str {
        match self {
            OddsSource::Bet365 => "bet365",
            OddsSource::MarketAverage => "average",
            OddsSource::MarketBest => "best",
        }
    }
}

impl FromStr for OddsSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bet365" | "b365" => Ok(OddsSource::Bet365),
            "avg" | "average" | "market_average" => Ok(OddsSource::MarketAverage),
            "best" | "max" | "market_best" => Ok(OddsSource::MarketBest),
            other => Err(Error::InvalidArgument(format!(
                "unknown odds source `{other}`"
            ))),
        }
    }
}

impl fmt::Display for OddsSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Decimal odds on the eventual winner and loser from one source.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OddsPair {
    pub odds_w: Option<f64>,
    pub odds_l: Option<f64>,
}

impl OddsPair {
    pub fn new(odds_w: Option<f64>, odds_l: Option<f64>) -> Self {
        Self { odds_w, odds_l }
    }

    pub fn side(&self, side: Side) -> Option<f64> {
        match side {
            Side::Winner => self.odds_w,
            Side::Loser => self.odds_l,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.odds_w.is_some() && self.odds_l.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rank {
    Ranked(u32),
    Unranked,
}

impl Rank {
    /// Inverse rank, with unranked players contributing 0.
    pub fn inverse(self) -> f64 {
        match self {
            Rank::Ranked(r) => 1.0 / f64::from(r),
            Rank::Unranked => 0.0,
        }
    }

    fn parse_cell(cell: &str) -> Rank {
        match cell.trim().parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 1.0 && v.fract() == 0.0 && v <= f64::from(u32::MAX) => {
                Rank::Ranked(v as u32)
            }
            _ => Rank::Unranked,
        }
    }
}

impl fmt::Display for Rank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rank::Ranked(r) => write!(f, "{r}"),
            Rank::Unranked => f.write_str("NR"),
        }
    }
}

/// Which player a directed row is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Winner,
    Loser,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Winner => Side::Loser,
            Side::Loser => Side::Winner,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Side::Winner => "w",
            Side::Loser => "l",
        }
    }
}

/// One completed match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub match_id: String,
    pub date: NaiveDate,
    pub tournament: String,
    pub season: i32,
    pub player_w: String,
    pub player_l: String,
    pub rank_w: Rank,
    pub rank_l: Rank,
    pub bet365: OddsPair,
    pub average: OddsPair,
    pub best: OddsPair,
    pub wiki_yesterday_w: Option<u64>,
    pub wiki_yesterday_l: Option<u64>,
    pub wiki_med365_w: Option<f64>,
    pub wiki_med365_l: Option<f64>,
    /// Earliest date with pageview data for each profile, when known.
    pub wiki_first_w: Option<NaiveDate>,
    pub wiki_first_l: Option<NaiveDate>,
    /// Completion status (`Completed`, `Retired`, `Walkover`, ...).
    pub comment: Option<String>,
}

impl MatchRecord {
    /// Tournament name plus season, so each yearly edition is its own key.
    pub fn tournament_key(&self) -> String {
        format!("{} {}", self.tournament, self.season)
    }

    pub fn odds(&self, source: OddsSource) -> &OddsPair {
        match source {
            OddsSource::Bet365 => &self.bet365,
            OddsSource::MarketAverage => &self.average,
            OddsSource::MarketBest => &self.best,
        }
    }

    pub fn player(&self, side: Side) -> &str {
        match side {
            Side::Winner => &self.player_w,
            Side::Loser => &self.player_l,
        }
    }

    pub fn rank(&self, side: Side) -> Rank {
        match side {
            Side::Winner => self.rank_w,
            Side::Loser => self.rank_l,
        }
    }

    pub fn wiki_yesterday(&self, side: Side) -> Option<u64> {
        match side {
            Side::Winner => self.wiki_yesterday_w,
            Side::Loser => self.wiki_yesterday_l,
        }
    }

    pub fn wiki_med365(&self, side: Side) -> Option<f64> {
        match side {
            Side::Winner => self.wiki_med365_w,
            Side::Loser => self.wiki_med365_l,
        }
    }

    pub fn wiki_first(&self, side: Side) -> Option<NaiveDate> {
        match side {
            Side::Winner => self.wiki_first_w,
            Side::Loser => self.wiki_first_l,
        }
    }

    pub fn is_completed(&self) -> bool {
        match &self.comment {
            None => true,
            Some(c) => c.trim().is_empty() || c.trim().eq_ignore_ascii_case("completed"),
        }
    }

    fn assign_id(&mut self) {
        self.match_id = match_id(
            self.date,
            &self.player_w,
            &self.player_l,
            &self.tournament_key(),
        );
    }
}

/// Deterministic match identifier: the leading 12 hex digits of a SHA-256
/// over date, players and tournament key.
pub fn match_id(date: NaiveDate, player_w: &str, player_l: &str, tournament_key: &str) -> String {
    let mut h = Sha256::new();
    h.update(date.format("%Y-%m-%d").to_string());
    for part in [player_w, player_l, tournament_key] {
        h.update([0x1f]);
        h.update(part.as_bytes());
    }
    hex::encode(&h.finalize()[..6])
}

/// Maps logical fields onto the column names of one input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schema {
    /// chrono format string, e.g. `%d/%m/%Y` (day-first) or `%Y-%m-%d`.
    pub date_format: String,
    pub delimiter: char,
    pub date: String,
    pub tournament: String,
    pub winner: String,
    pub loser: String,
    pub rank_w: Option<String>,
    pub rank_l: Option<String>,
    pub bet365_w: Option<String>,
    pub bet365_l: Option<String>,
    pub avg_w: Option<String>,
    pub avg_l: Option<String>,
    pub best_w: Option<String>,
    pub best_l: Option<String>,
    pub wiki_yesterday_w: Option<String>,
    pub wiki_yesterday_l: Option<String>,
    pub wiki_med365_w: Option<String>,
    pub wiki_med365_l: Option<String>,
    pub wiki_first_w: Option<String>,
    pub wiki_first_l: Option<String>,
    pub comment: Option<String>,
}

impl Default for Schema {
    fn default() -> Self {
        Schema::tennis_data()
    }
}

impl Schema {
    /// tennis-data.co.uk column names with joined pageview columns, ISO dates.
    pub fn tennis_data() -> Self {
        let s = |v: &str| Some(v.to_string());
        Schema {
            date_format: "%Y-%m-%d".into(),
            delimiter: ',',
            date: "Date".into(),
            tournament: "Tournament".into(),
            winner: "Winner".into(),
            loser: "Loser".into(),
            rank_w: s("WRank"),
            rank_l: s("LRank"),
            bet365_w: s("B365W"),
            bet365_l: s("B365L"),
            avg_w: s("AvgW"),
            avg_l: s("AvgL"),
            best_w: s("MaxW"),
            best_l: s("MaxL"),
            wiki_yesterday_w: s("wiki_yesterday_w"),
            wiki_yesterday_l: s("wiki_yesterday_l"),
            wiki_med365_w: s("wiki_med365_w"),
            wiki_med365_l: s("wiki_med365_l"),
            wiki_first_w: None,
            wiki_first_l: None,
            comment: None,
        }
    }

    /// Layout written by [`write_canonical`].
    pub fn canonical() -> Self {
        let s = |v: &str| Some(v.to_string());
        Schema {
            date_format: "%Y-%m-%d".into(),
            delimiter: ',',
            date: "date".into(),
            tournament: "tournament".into(),
            winner: "player_w".into(),
            loser: "player_l".into(),
            rank_w: s("rank_w"),
            rank_l: s("rank_l"),
            bet365_w: s("b365_w"),
            bet365_l: s("b365_l"),
            avg_w: s("avg_w"),
            avg_l: s("avg_l"),
            best_w: s("best_w"),
            best_l: s("best_l"),
            wiki_yesterday_w: s("wiki_yesterday_w"),
            wiki_yesterday_l: s("wiki_yesterday_l"),
            wiki_med365_w: s("wiki_med365_w"),
            wiki_med365_l: s("wiki_med365_l"),
            wiki_first_w: s("wiki_first_w"),
            wiki_first_l: s("wiki_first_l"),
            comment: s("comment"),
        }
    }

    /// Loads a schema from a TOML or JSON file (by extension).
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            Ok(serde_json::from_str(&text)?)
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))
        }
    }
}

struct ColumnIndex {
    date: usize,
    tournament: usize,
    winner: usize,
    loser: usize,
    optional: BTreeMap<&'static str, usize>,
}

impl ColumnIndex {
    fn resolve(schema: &Schema, headers: &csv::StringRecord) -> Result<Self> {
        let find = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let (date, tournament, winner, loser) = (
            find(&schema.date)?,
            find(&schema.tournament)?,
            find(&schema.winner)?,
            find(&schema.loser)?,
        );
        let mut optional = BTreeMap::new();
        let named: [(&'static str, &Option<String>); 15] = [
            ("rank_w", &schema.rank_w),
            ("rank_l", &schema.rank_l),
            ("bet365_w", &schema.bet365_w),
            ("bet365_l", &schema.bet365_l),
            ("avg_w", &schema.avg_w),
            ("avg_l", &schema.avg_l),
            ("best_w", &schema.best_w),
            ("best_l", &schema.best_l),
            ("wiki_yesterday_w", &schema.wiki_yesterday_w),
            ("wiki_yesterday_l", &schema.wiki_yesterday_l),
            ("wiki_med365_w", &schema.wiki_med365_w),
            ("wiki_med365_l", &schema.wiki_med365_l),
            ("wiki_first_w", &schema.wiki_first_w),
            ("wiki_first_l", &schema.wiki_first_l),
            ("comment", &schema.comment),
        ];
        for (field, column) in named {
            if let Some(column) = column {
                optional.insert(field, find(column)?);
            }
        }
        Ok(ColumnIndex {
            date,
            tournament,
            winner,
            loser,
            optional,
        })
    }

    fn cell<'r>(&self, record: &'r csv::StringRecord, field: &str) -> Option<&'r str> {
        self.optional
            .get(field)
            .and_then(|&i| record.get(i))
            .map(str::trim)
            .filter(|s| !is_missing_token(s))
    }
}

fn is_missing_token(s: &str) -> bool {
    matches!(
        s.to_ascii_lowercase().as_str(),
        "" | "na" | "n/a" | "nan" | "none" | "null" | "-"
    )
}

fn parse_odds(cell: Option<&str>) -> Option<f64> {
    let v: f64 = cell?.parse().ok()?;
    (v.is_finite() && v >= 1.0).then_some(v)
}

fn parse_count(cell: Option<&str>) -> Option<u64> {
    let v: f64 = cell?.parse().ok()?;
    (v.is_finite() && v >= 0.0 && v.fract() == 0.0).then_some(v as u64)
}

fn parse_median(cell: Option<&str>) -> Option<f64> {
    let v: f64 = cell?.parse().ok()?;
    (v.is_finite() && v >= 0.0).then_some(v)
}

fn parse_date(value: &str, format: &str) -> Option<NaiveDate> {
    let value = value.trim();
    NaiveDate::parse_from_str(value, format).ok().or_else(|| {
        // Spreadsheet exports often append a midnight time component.
        let head = value.split([' ', 'T']).next()?;
        NaiveDate::parse_from_str(head, format).ok()
    })
}

/// Parses one delimiter-separated match file through `schema`.
pub fn parse_match_file<R: Read>(input: R, schema: &Schema) -> Result<Vec<MatchRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .has_headers(true)
        .flexible(false)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let cols = ColumnIndex::resolve(schema, &headers)?;
    let (lo, hi) = dataset_bounds();

    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        let get = |idx: usize| record.get(idx).map(str::trim).unwrap_or("");

        let raw_date = get(cols.date);
        let date = parse_date(raw_date, &schema.date_format)
            .filter(|d| *d >= lo && *d <= hi)
            .ok_or_else(|| Error::BadDate {
                row,
                value: raw_date.to_string(),
            })?;
        let tournament = get(cols.tournament).to_string();
        let player_w = get(cols.winner).to_string();
        let player_l = get(cols.loser).to_string();
        if tournament.is_empty() || player_w.is_empty() || player_l.is_empty() {
            return Err(Error::Parse {
                row,
                message: "empty tournament or player cell".into(),
            });
        }

        let rank = |f: &str| {
            cols.cell(&record, f)
                .map_or(Rank::Unranked, Rank::parse_cell)
        };
        let odds = |w: &str, l: &str| {
            OddsPair::new(
                parse_odds(cols.cell(&record, w)),
                parse_odds(cols.cell(&record, l)),
            )
        };
        let first = |f: &str| {
            cols.cell(&record, f)
                .and_then(|v| parse_date(v, &schema.date_format))
        };

        let mut rec = MatchRecord {
            match_id: String::new(),
            date,
            season: date.year(),
            tournament,
            player_w,
            player_l,
            rank_w: rank("rank_w"),
            rank_l: rank("rank_l"),
            bet365: odds("bet365_w", "bet365_l"),
            average: odds("avg_w", "avg_l"),
            best: odds("best_w", "best_l"),
            wiki_yesterday_w: parse_count(cols.cell(&record, "wiki_yesterday_w")),
            wiki_yesterday_l: parse_count(cols.cell(&record, "wiki_yesterday_l")),
            wiki_med365_w: parse_median(cols.cell(&record, "wiki_med365_w")),
            wiki_med365_l: parse_median(cols.cell(&record, "wiki_med365_l")),
            wiki_first_w: first("wiki_first_w"),
            wiki_first_l: first("wiki_first_l"),
            comment: cols.cell(&record, "comment").map(str::to_string),
        };
        rec.assign_id();
        out.push(rec);
    }
    Ok(out)
}

pub fn parse_match_path(path: &Path, schema: &Schema) -> Result<Vec<MatchRecord>> {
    let file = std::fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingInput(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    parse_match_file(std::io::BufReader::new(file), schema)
}

/// A sorted, de-duplicated set of matches.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub matches: Vec<MatchRecord>,
    pub duplicates_collapsed: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    /// Player-match rows: two per match.
    pub fn n_rows(&self) -> usize {
        2 * self.matches.len()
    }

    pub fn players(&self) -> HashSet<&str> {
        self.matches
            .iter()
            .flat_map(|m| [m.player_w.as_str(), m.player_l.as_str()])
            .collect()
    }

    pub fn get(&self, match_id: &str) -> Option<&MatchRecord> {
        self.matches.iter().find(|m| m.match_id == match_id)
    }

    /// Locates a match by players (either order) and date.
    pub fn find(&self, date: NaiveDate, a: &str, b: &str) -> Option<&MatchRecord> {
        self.matches.iter().find(|m| {
            m.date == date
                && ((m.player_w == a && m.player_l == b) || (m.player_w == b && m.player_l == a))
        })
    }

    /// Keeps only matches recorded as completed.
    pub fn completed_only(&self) -> Dataset {
        Dataset {
            matches: self
                .matches
                .iter()
                .filter(|m| m.is_completed())
                .cloned()
                .collect(),
            duplicates_collapsed: self.duplicates_collapsed,
        }
    }

    /// SHA-256 over the canonical CSV rendering.
    pub fn fingerprint(&self) -> String {
        let mut buf = Vec::new();
        write_canonical_to(self, &mut buf).expect("in-memory write");
        hex::encode(Sha256::digest(&buf))
    }
}

fn canonical_line(m: &MatchRecord) -> String {
    canonical_fields(m).join(",")
}

/// Sorts by date then tournament key, collapses duplicate
/// (date, players, tournament) rows to their first occurrence and assigns ids.
pub fn normalize_dataset(records: Vec<MatchRecord>) -> Dataset {
    let mut keyed: Vec<(String, MatchRecord)> = records
        .into_iter()
        .map(|mut m| {
            m.assign_id();
            (canonical_line(&m), m)
        })
        .collect();
    keyed.sort_by(|(la, a), (lb, b)| {
        a.date
            .cmp(&b.date)
            .then_with(|| a.tournament_key().cmp(&b.tournament_key()))
            .then_with(|| a.player_w.cmp(&b.player_w))
            .then_with(|| a.player_l.cmp(&b.player_l))
            .then_with(|| la.cmp(lb))
    });

    let mut seen = HashSet::new();
    let mut matches = Vec::with_capacity(keyed.len());
    let mut duplicates = 0;
    for (_, m) in keyed {
        if seen.insert(m.match_id.clone()) {
            matches.push(m);
        } else {
            duplicates += 1;
        }
    }
    if duplicates > 0 {
        log::warn!("collapsed {duplicates} duplicate match rows");
    }
    Dataset {
        matches,
        duplicates_collapsed: duplicates,
    }
}

pub const CANONICAL_COLUMNS: [&str; 22] = [
    "match_id",
    "date",
    "tournament",
    "season",
    "player_w",
    "player_l",
    "rank_w",
    "rank_l",
    "b365_w",
    "b365_l",
    "avg_w",
    "avg_l",
    "best_w",
    "best_l",
    "wiki_yesterday_w",
    "wiki_yesterday_l",
    "wiki_med365_w",
    "wiki_med365_l",
    "wiki_first_w",
    "wiki_first_l",
    "comment",
    "tournament_key",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn canonical_fields(m: &MatchRecord) -> Vec<String> {
    let date = |d: Option<NaiveDate>| opt(d.map(|d| d.format("%Y-%m-%d")));
    vec![
        m.match_id.clone(),
        m.date.format("%Y-%m-%d").to_string(),
        m.tournament.clone(),
        m.season.to_string(),
        m.player_w.clone(),
        m.player_l.clone(),
        m.rank_w.to_string(),
        m.rank_l.to_string(),
        opt(m.bet365.odds_w),
        opt(m.bet365.odds_l),
        opt(m.average.odds_w),
        opt(m.average.odds_l),
        opt(m.best.odds_w),
        opt(m.best.odds_l),
        opt(m.wiki_yesterday_w),
        opt(m.wiki_yesterday_l),
        opt(m.wiki_med365_w),
        opt(m.wiki_med365_l),
        date(m.wiki_first_w),
        date(m.wiki_first_l),
        m.comment.clone().unwrap_or_default(),
        m.tournament_key(),
    ]
}

pub fn write_canonical_to<W: Write>(ds: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CANONICAL_COLUMNS)?;
    for m in &ds.matches {
        w.write_record(canonical_fields(m))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub format: String,
    pub columns: Vec<String>,
    pub n_matches: usize,
    pub n_rows: usize,
    pub n_players: usize,
    pub first_date: Option<NaiveDate>,
    pub last_date: Option<NaiveDate>,
    pub duplicates_collapsed: usize,
    pub fingerprint: String,
}

impl DatasetMetadata {
    pub fn describe(ds: &Dataset) -> Self {
        DatasetMetadata {
            format: "buzzcheck-canonical-v1".into(),
            columns: CANONICAL_COLUMNS.iter().map(|c| c.to_string()).collect(),
            n_matches: ds.len(),
            n_rows: ds.n_rows(),
            n_players: ds.players().len(),
            first_date: ds.matches.first().map(|m| m.date),
            last_date: ds.matches.last().map(|m| m.date),
            duplicates_collapsed: ds.duplicates_collapsed,
            fingerprint: ds.fingerprint(),
        }
    }
}

/// Writes the canonical CSV plus a `<path>.json` metadata sidecar.
pub fn write_canonical(ds: &Dataset, path: &Path) -> Result<DatasetMetadata> {
    let file = std::fs::File::create(path)?;
    write_canonical_to(ds, std::io::BufWriter::new(file))?;
    let meta = DatasetMetadata::describe(ds);
    let sidecar = sidecar_path(path);
    std::fs::write(sidecar, serde_json::to_string_pretty(&meta)?)?;
    Ok(meta)
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    name.into()
}

/// Reads a canonical dataset file back.
pub fn read_canonical(path: &Path) -> Result<Dataset> {
    Ok(normalize_dataset(parse_match_path(
        path,
        &Schema::canonical(),
    )?))
}

/// One directed view of a match (player i against player j).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerMatchRow {
    pub match_id: String,
    pub date: NaiveDate,
    pub perspective: Side,
    pub player: String,
    pub opponent: String,
    pub y: u8,
    /// Implied probability from the source chosen for the model.
    pub z: f64,
    pub z_avg: Option<f64>,
    pub z_b365: Option<f64>,
    pub z_best: Option<f64>,
    pub odds_avg: Option<f64>,
    pub odds_b365: Option<f64>,
    pub odds_best: Option<f64>,
    /// Overround of the z source for this match.
    pub overround: f64,
    pub rank_dist: f64,
    pub wikibuzz: f64,
    pub e: f64,
    pub season: i32,
    pub tournament_key: String,
}

impl PlayerMatchRow {
    pub fn key(&self) -> RowKey {
        RowKey {
            match_id: self.match_id.clone(),
            side: Some(self.perspective),
        }
    }

    pub fn odds(&self, source: OddsSource) -> Option<f64> {
        match source {
            OddsSource::Bet365 => self.odds_b365,
            OddsSource::MarketAverage => self.odds_avg,
            OddsSource::MarketBest => self.odds_best,
        }
    }

    pub fn implied(&self, source: OddsSource) -> Option<f64> {
        match source {
            OddsSource::Bet365 => self.z_b365,
            OddsSource::MarketAverage => self.z_avg,
            OddsSource::MarketBest => self.z_best,
        }
    }
}

/// Addresses a whole match (`side == None`) or one directed row of it.
/// Text form: `<match_id>` or `<match_id>:w` / `<match_id>:l`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowKey {
    pub match_id: String,
    pub side: Option<Side>,
}

impl RowKey {
    pub fn matches(&self, match_id: &str, side: Side) -> bool {
        self.match_id == match_id && self.side.is_none_or(|s| s == side)
    }
}

impl FromStr for RowKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (id, side) = match s.split_once(':') {
            None => (s, None),
            Some((id, "w")) => (id, Some(Side::Winner)),
            Some((id, "l")) => (id, Some(Side::Loser)),
            Some(_) => return Err(Error::InvalidArgument(format!("bad row key `{s}`"))),
        };
        if id.is_empty() {
            return Err(Error::InvalidArgument("empty match id".into()));
        }
        Ok(RowKey {
            match_id: id.to_string(),
            side,
        })
    }
}

impl fmt::Display for RowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.side {
            None => f.write_str(&self.match_id),
            Some(side) => write!(f, "{}:{}", self.match_id, side.tag()),
        }
    }
}

/// Parses a comma-separated list of row keys.
pub fn parse_row_keys(list: &str) -> Result<Vec<RowKey>> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RowExclusions {
    pub missing_odds: usize,
    pub missing_pageviews: usize,
    pub zero_pageviews: usize,
}

impl RowExclusions {
    pub fn total(&self) -> usize {
        self.missing_odds + self.missing_pageviews + self.zero_pageviews
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlayerRows {
    pub rows: Vec<PlayerMatchRow>,
    /// Matches left out, by reason.
    pub excluded: RowExclusions,
}

fn implied(odds: Option<f64>) -> Option<f64> {
    odds.and_then(|o| features::implied_probability(o).ok())
}

/// Expands each usable match into its two directed rows.
///
/// A match is usable when the model's odds source is present on both sides
/// and all four pageview inputs are positive. Other sources may be missing
/// per side; that only limits which strategies can bet on the row.
pub fn to_player_rows(ds: &Dataset, odds_source_for_z: OddsSource) -> PlayerRows {
    let mut out = PlayerRows::default();
    for m in &ds.matches {
        let z_pair = m.odds(odds_source_for_z);
        let (Some(zw), Some(zl)) = (implied(z_pair.odds_w), implied(z_pair.odds_l)) else {
            out.excluded.missing_odds += 1;
            continue;
        };
        let (Some(yw), Some(yl), Some(mw), Some(ml)) = (
            m.wiki_yesterday_w,
            m.wiki_yesterday_l,
            m.wiki_med365_w,
            m.wiki_med365_l,
        ) else {
            out.excluded.missing_pageviews += 1;
            continue;
        };
        let Ok(buzz_w) = features::wikibuzz(yw as f64, mw, yl as f64, ml) else {
            out.excluded.zero_pageviews += 1;
            continue;
        };
        let k = features::overround(zw, zl);
        let rd_w = features::rank_distance(m.rank_w, m.rank_l);
        let tournament_key = m.tournament_key();

        for side in [Side::Winner, Side::Loser] {
            let (z, rank_dist, wikibuzz, y) = match side {
                Side::Winner => (zw, rd_w, buzz_w, 1u8),
                Side::Loser => (zl, -rd_w, -buzz_w, 0u8),
            };
            out.rows.push(PlayerMatchRow {
                match_id: m.match_id.clone(),
                date: m.date,
                perspective: side,
                player: m.player(side).to_string(),
                opponent: m.player(side.other()).to_string(),
                y,
                z,
                z_avg: implied(m.average.side(side)),
                z_b365: implied(m.bet365.side(side)),
                z_best: implied(m.best.side(side)),
                odds_avg: m.average.side(side),
                odds_b365: m.bet365.side(side),
                odds_best: m.best.side(side),
                overround: k,
                rank_dist,
                wikibuzz,
                e: features::forecast_error(y, z),
                season: m.season,
                tournament_key: tournament_key.clone(),
            });
        }
    }
    out
}

/// Date boundaries for the in-sample / out-of-sample split (all inclusive
/// except that the test window starts strictly after `train_end`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train_start: NaiveDate,
    pub train_end: NaiveDate,
    pub test_end: NaiveDate,
}

impl SplitConfig {
    /// Train 2016-2018, test January 2019 through February 2020.
    pub fn original() -> Self {
        SplitConfig {
            train_start: NaiveDate::from_ymd_opt(2016, 1, 1).unwrap(),
            train_end: NaiveDate::from_ymd_opt(2018, 12, 31).unwrap(),
            test_end: NaiveDate::from_ymd_opt(2020, 2, 29).unwrap(),
        }
    }

    /// Train from the start of the extended corpus, test through August 2023.
    pub fn extended() -> Self {
        SplitConfig {
            train_start: NaiveDate::from_ymd_opt(2015, 7, 1).unwrap(),
            train_end: NaiveDate::from_ymd_opt(2018, 12, 31).unwrap(),
            test_end: NaiveDate::from_ymd_opt(2023, 8, 31).unwrap(),
        }
    }
}

pub fn split_samples(
    rows: &[PlayerMatchRow],
    cfg: &SplitConfig,
) -> Result<(Vec<PlayerMatchRow>, Vec<PlayerMatchRow>)> {
    if cfg.train_end >= cfg.test_end {
        return Err(Error::InvalidArgument(
            "train_end must precede test_end".into(),
        ));
    }
    let train: Vec<_> = rows
        .iter()
        .filter(|r| r.date >= cfg.train_start && r.date <= cfg.train_end)
        .cloned()
        .collect();
    let test: Vec<_> = rows
        .iter()
        .filter(|r| r.date > cfg.train_end && r.date <= cfg.test_end)
        .cloned()
        .collect();
    if train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if test.is_empty() {
        return Err(Error::EmptySplit("test"));
    }
    Ok((train, test))
}

/// Rows dated within `[from, to]`.
pub fn slice_dates(rows: &[PlayerMatchRow], from: NaiveDate, to: NaiveDate) -> Vec<PlayerMatchRow> {
    rows.iter()
        .filter(|r| r.date >= from && r.date <= to)
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "Date,Tournament,Winner,Loser,WRank,LRank,B365W,B365L,AvgW,AvgL,MaxW,MaxL,wiki_yesterday_w,wiki_yesterday_l,wiki_med365_w,wiki_med365_l\n";

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    #[test]
    fn hercog_row_keeps_three_odds_pairs() {
        let text = format!(
            "{HEADER}2019-03-22,Miami Open,Hercog P.,Doi M.,93,112,5.50,1.66,1.85,1.95,2.10,2.06,120,80,40,35\n"
        );
        let recs = parse_match_file(text.as_bytes(), &Schema::tennis_data()).unwrap();
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        assert_eq!(r.bet365.odds_w, Some(5.5));
        assert_eq!(r.best.odds_w, Some(2.1));
        assert_eq!(r.average.odds_w, Some(1.85));
        assert_eq!(r.tournament_key(), "Miami Open 2019");
        assert_eq!(r.rank_w, Rank::Ranked(93));
    }

    #[test]
    fn na_rank_is_unranked_and_bad_odds_missing() {
        let text =
            format!("{HEADER}2019-03-22,Miami Open,A,B,N/A,12,abc,0.5,1.5,2.5,,2.6,1,2,3,4\n");
        let r = &parse_match_file(text.as_bytes(), &Schema::tennis_data()).unwrap()[0];
        assert_eq!(r.rank_w, Rank::Unranked);
        assert_eq!(r.bet365, OddsPair::new(None, None));
        assert_eq!(r.best.odds_w, None);
        assert_eq!(r.best.odds_l, Some(2.6));
    }

    #[test]
    fn header_only_is_empty() {
        assert!(parse_match_file(HEADER.as_bytes(), &Schema::tennis_data())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn missing_column_is_named() {
        let err = parse_match_file(
            "Date,Tournament,Winner\n".as_bytes(),
            &Schema::tennis_data(),
        )
        .unwrap_err();
        assert!(
            matches!(&err, Error::MissingColumn(c) if c == "Loser"),
            "{err:?}"
        );
    }

    #[test]
    fn truncated_row_reports_index() {
        let text = format!(
            "{HEADER}2019-03-22,Miami Open,A,B,1,2,2,2,2,2,2,2,1,1,1,1\n2019-03-23,Miami\n"
        );
        let err = parse_match_file(text.as_bytes(), &Schema::tennis_data()).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, .. }), "{err:?}");
    }

    #[test]
    fn bad_and_out_of_range_dates() {
        let text = format!("{HEADER}22/03/2019,Miami Open,A,B,1,2,2,2,2,2,2,2,1,1,1,1\n");
        assert!(matches!(
            parse_match_file(text.as_bytes(), &Schema::tennis_data()),
            Err(Error::BadDate { row: 1, .. })
        ));
        let mut dayfirst = Schema::tennis_data();
        dayfirst.date_format = "%d/%m/%Y".into();
        let r = parse_match_file(text.as_bytes(), &dayfirst).unwrap();
        assert_eq!(r[0].date, d(2019, 3, 22));

        let early = format!("{HEADER}2014-03-22,Miami Open,A,B,1,2,2,2,2,2,2,2,1,1,1,1\n");
        assert!(parse_match_file(early.as_bytes(), &Schema::tennis_data()).is_err());
    }

    fn rec(date: NaiveDate, w: &str, l: &str) -> MatchRecord {
        MatchRecord {
            match_id: String::new(),
            date,
            tournament: "Open".into(),
            season: date.year(),
            player_w: w.into(),
            player_l: l.into(),
            rank_w: Rank::Ranked(1),
            rank_l: Rank::Ranked(2),
            bet365: OddsPair::new(Some(1.5), Some(2.5)),
            average: OddsPair::new(Some(1.5), Some(2.5)),
            best: OddsPair::new(Some(1.6), Some(2.7)),
            wiki_yesterday_w: Some(10),
            wiki_yesterday_l: Some(20),
            wiki_med365_w: Some(5.0),
            wiki_med365_l: Some(4.0),
            wiki_first_w: None,
            wiki_first_l: None,
            comment: None,
        }
    }

    #[test]
    fn duplicates_collapse() {
        let a = rec(d(2017, 1, 3), "A", "B");
        let ds = normalize_dataset(vec![a.clone(), a]);
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.duplicates_collapsed, 1);
    }

    #[test]
    fn shuffled_input_normalizes_identically() {
        let recs = vec![
            rec(d(2017, 1, 5), "C", "D"),
            rec(d(2017, 1, 3), "A", "B"),
            rec(d(2017, 1, 4), "E", "F"),
            rec(d(2017, 1, 3), "G", "H"),
        ];
        let mut rev = recs.clone();
        rev.reverse();
        assert_eq!(normalize_dataset(recs), normalize_dataset(rev));
    }

    #[test]
    fn player_rows_come_in_pairs() {
        let ds = normalize_dataset(vec![
            rec(d(2017, 1, 3), "A", "B"),
            rec(d(2017, 1, 4), "C", "D"),
        ]);
        let pr = to_player_rows(&ds, OddsSource::MarketAverage);
        assert_eq!(pr.rows.len(), 4);
        assert_eq!(pr.rows[0].y, 1);
        assert_eq!(pr.rows[1].y, 0);
        assert_eq!(pr.rows[0].rank_dist, -pr.rows[1].rank_dist);
        assert_eq!(pr.rows[0].wikibuzz, -pr.rows[1].wikibuzz);
    }

    #[test]
    fn zero_views_exclude_the_match() {
        let mut r = rec(d(2017, 1, 3), "A", "B");
        r.wiki_yesterday_l = Some(0);
        let pr = to_player_rows(&normalize_dataset(vec![r]), OddsSource::MarketAverage);
        assert!(pr.rows.is_empty());
        assert_eq!(pr.excluded.zero_pageviews, 1);
    }

    #[test]
    fn split_windows() {
        let ds = normalize_dataset(vec![
            rec(d(2015, 8, 1), "A", "B"),
            rec(d(2016, 1, 1), "A", "B"),
            rec(d(2018, 12, 31), "A", "B"),
            rec(d(2019, 1, 1), "A", "B"),
            rec(d(2020, 2, 29), "A", "B"),
            rec(d(2020, 3, 1), "A", "B"),
        ]);
        let rows = to_player_rows(&ds, OddsSource::MarketAverage).rows;
        let (train, test) = split_samples(&rows, &SplitConfig::original()).unwrap();
        assert_eq!(train.len(), 4);
        assert_eq!(test.len(), 4);

        let early: Vec<_> = rows
            .iter()
            .filter(|r| r.date.year() < 2019)
            .cloned()
            .collect();
        assert!(matches!(
            split_samples(&early, &SplitConfig::original()),
            Err(Error::EmptySplit("test"))
        ));
    }

    #[test]
    fn row_keys_parse() {
        let keys = parse_row_keys("abc:w, def").unwrap();
        assert_eq!(keys[0].side, Some(Side::Winner));
        assert_eq!(keys[1].side, None);
        assert_eq!(keys[0].to_string(), "abc:w");
        assert!("x:q".parse::<RowKey>().is_err());
    }
}
