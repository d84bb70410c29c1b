//! Table rendering, P&L plots and the config-driven replication run.
//!
//! Every table renders to aligned text, CSV and JSON from the same cells, so
//! the three formats agree value for value. Rounding happens only here.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::backtest::{
    cumulative_series, run_strategy, write_ledger, PRange, StrategyConfig, StrategyRun,
    StrategySummary,
};
use crate::clean::{run_pipeline, CleaningReport, PipelineOptions, Sigma};
use crate::error::{Error, Result};
use crate::estimate::{parse_clusters, with_inference, ClusterBy, RegressionFit};
use crate::features::{build_design, parse_fixed_effects, FixedEffect, Model};
use crate::ingest::{
    normalize_dataset, parse_match_path, slice_dates, split_samples, to_player_rows, Dataset,
    OddsSource, PlayerMatchRow, RowKey, Schema, Side, SplitConfig,
};
use crate::significance::{ledger_significance, SignificanceConfig, SignificanceResult};

/// Output format shared by the CLI and the renderers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Text,
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "text" | "txt" => Ok(Format::Text),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::InvalidArgument(format!("unknown format `{other}`"))),
        }
    }
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Text => "txt",
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Table1,
    Table2,
    Table3,
    Table4,
    AppendixB,
    AppendixC,
    AppendixD,
}

impl Layout {
    pub const ALL: [Layout; 7] = [
        Layout::Table1,
        Layout::Table2,
        Layout::Table3,
        Layout::Table4,
        Layout::AppendixB,
        Layout::AppendixC,
        Layout::AppendixD,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Layout::Table1 => "table1",
            Layout::Table2 => "table2",
            Layout::Table3 => "table3",
            Layout::Table4 => "table4",
            Layout::AppendixB => "appendix_b",
            Layout::AppendixC => "appendix_c",
            Layout::AppendixD => "appendix_d",
        }
    }

    fn default_title(self) -> &'static str {
        match self {
            Layout::Table1 => "Model estimates of betting market mispricing, in-sample period",
            Layout::Table2 => "Out-of-sample Bet365 strategy results",
            Layout::Table3 => "Out-of-sample Bet365 strategy results by match competitiveness",
            Layout::Table4 => "Model estimates of betting market mispricing, extended period",
            Layout::AppendixB => "Out-of-sample best odds strategy results",
            Layout::AppendixC => {
                "Out-of-sample Bet365 strategy results, additional competitiveness windows"
            }
            Layout::AppendixD => "Data cleaning steps for the extended dataset",
        }
    }
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        Layout::ALL
            .into_iter()
            .find(|l| l.id() == key)
            .ok_or_else(|| Error::UnknownLayout(s.to_string()))
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Empty,
    Int(i64),
    Num {
        value: f64,
        decimals: usize,
    },
    /// Standard error, shown in parentheses in text output.
    Se {
        value: f64,
        decimals: usize,
    },
    Text(String),
}

impl Cell {
    fn num(value: Option<f64>, decimals: usize) -> Cell {
        match value {
            Some(v) if v.is_finite() => Cell::Num { value: v, decimals },
            _ => Cell::Empty,
        }
    }

    fn se(value: Option<f64>, decimals: usize) -> Cell {
        match value {
            Some(v) if v.is_finite() => Cell::Se { value: v, decimals },
            _ => Cell::Empty,
        }
    }

    fn fixed(value: f64, decimals: usize) -> String {
        let s = format!("{value:.decimals$}");
        // Avoid "-0.000".
        if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
            s[1..].to_string()
        } else {
            s
        }
    }

    fn plain(&self, extra: usize) -> String {
        match self {
            Cell::Empty => String::new(),
            Cell::Int(v) => v.to_string(),
            Cell::Num { value, decimals } | Cell::Se { value, decimals } => {
                Cell::fixed(*value, decimals + extra)
            }
            Cell::Text(s) => s.clone(),
        }
    }

    fn text(&self, extra: usize) -> String {
        match self {
            Cell::Empty => "-".into(),
            Cell::Int(v) => thousands(*v),
            Cell::Se { .. } => format!("({})", self.plain(extra)),
            _ => self.plain(extra),
        }
    }

    fn json(&self, extra: usize) -> Value {
        match self {
            Cell::Empty => Value::Null,
            Cell::Int(v) => json!(v),
            Cell::Num { .. } | Cell::Se { .. } => {
                json!(self.plain(extra).parse::<f64>().expect("formatted float"))
            }
            Cell::Text(s) => json!(s),
        }
    }

    fn is_numeric(&self) -> bool {
        !matches!(self, Cell::Text(_))
    }
}

fn thousands(v: i64) -> String {
    let digits = v.unsigned_abs().to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    if v < 0 {
        format!("-{out}")
    } else {
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub label: String,
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub layout: Layout,
    pub title: String,
    /// Header of the label column followed by one header per cell column.
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
    pub notes: Vec<String>,
}

impl Table {
    pub fn render(&self, format: Format) -> String {
        self.render_with(format, 0)
    }

    /// Renders with `extra` additional decimals on every real-valued cell.
    pub fn render_with(&self, format: Format, extra: usize) -> String {
        match format {
            Format::Text => self.text(extra),
            Format::Csv => self.csv(extra),
            Format::Json => {
                serde_json::to_string_pretty(&self.json(extra)).expect("json value") + "\n"
            }
        }
    }

    fn text(&self, extra: usize) -> String {
        let grid: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                std::iter::once(r.label.clone())
                    .chain(r.cells.iter().map(|c| c.text(extra)))
                    .collect()
            })
            .collect();
        let ncol = self.columns.len();
        let mut widths: Vec<usize> = self.columns.iter().map(|c| c.chars().count()).collect();
        for row in &grid {
            for (i, cell) in row.iter().enumerate().take(ncol) {
                widths[i] = widths[i].max(cell.chars().count());
            }
        }
        let line = |cells: &[String], numeric: &dyn Fn(usize) -> bool| -> String {
            let mut out = String::new();
            for (i, cell) in cells.iter().enumerate().take(ncol) {
                if i > 0 {
                    out.push_str("  ");
                }
                let pad = widths[i] - cell.chars().count();
                if i > 0 && numeric(i) {
                    out.push_str(&" ".repeat(pad));
                    out.push_str(cell);
                } else {
                    out.push_str(cell);
                    out.push_str(&" ".repeat(pad));
                }
            }
            out.trim_end().to_string()
        };
        let total: usize = widths.iter().sum::<usize>() + 2 * ncol.saturating_sub(1);
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.title);
        let _ = writeln!(out, "{}", "=".repeat(total));
        let _ = writeln!(out, "{}", line(&self.columns, &|_| true));
        let _ = writeln!(out, "{}", "-".repeat(total));
        for (row, cells) in self.rows.iter().zip(&grid) {
            let numeric = |i: usize| row.cells.get(i - 1).is_none_or(Cell::is_numeric);
            let _ = writeln!(out, "{}", line(cells, &numeric));
        }
        let _ = writeln!(out, "{}", "-".repeat(total));
        for note in &self.notes {
            let _ = writeln!(out, "{note}");
        }
        out
    }

    fn csv(&self, extra: usize) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            let rec: Vec<String> = std::iter::once(row.label.clone())
                .chain(row.cells.iter().map(|c| c.plain(extra)))
                .collect();
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8 csv")
    }

    fn json(&self, extra: usize) -> Value {
        json!({
            "layout": self.layout.id(),
            "title": self.title,
            "columns": self.columns,
            "rows": self.rows.iter().map(|r| json!({
                "label": r.label,
                "values": r.cells.iter().map(|c| c.json(extra)).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
            "notes": self.notes,
        })
    }
}

/// What a table is built from.
#[derive(Debug, Clone)]
pub enum TableInput<'a> {
    /// Coefficient columns; `None` renders as dashes.
    Estimates(Vec<(String, Option<&'a RegressionFit>)>),
    /// Strategy columns; `None` renders as dashes.
    Strategies(Vec<(String, Option<&'a StrategySummary>)>),
    Cleaning(&'a CleaningReport),
}

pub const COEFFICIENT_DECIMALS: usize = 3;
pub const STRATEGY_DECIMALS: usize = 2;

const COEFFICIENT_ORDER: [&str; 4] = ["z", "rank_dist", "wikibuzz", "const"];

fn coefficient_row_label(name: &str) -> &'static str {
    match name {
        "z" => "Odds-implied probability, b1",
        "rank_dist" => "WTA rank distance to opponent (RD), b2",
        "wikibuzz" => "Wiki relative buzz factor, b3",
        _ => "Constant, a",
    }
}

fn estimates_table(layout: Layout, cols: &[(String, Option<&RegressionFit>)]) -> Table {
    let with_p = layout == Layout::Table4;
    let mut columns = vec![String::new()];
    for (label, _) in cols {
        if with_p {
            columns.push(format!("{label} Parameter"));
            columns.push(format!("{label} P-value"));
        } else {
            columns.push(label.clone());
        }
    }
    let mut rows = Vec::new();
    for name in COEFFICIENT_ORDER {
        let mut est = Vec::new();
        let mut se = Vec::new();
        for (_, fit) in cols {
            let coef = fit.and_then(|f| f.coef(name));
            est.push(Cell::num(coef, COEFFICIENT_DECIMALS));
            se.push(Cell::se(fit.and_then(|f| f.se(name)), COEFFICIENT_DECIMALS));
            if with_p {
                est.push(Cell::num(
                    fit.and_then(|f| f.p_value(name)),
                    COEFFICIENT_DECIMALS,
                ));
                se.push(Cell::Empty);
            }
        }
        rows.push(TableRow {
            label: coefficient_row_label(name).into(),
            cells: est,
        });
        rows.push(TableRow {
            label: "(s.e.)".into(),
            cells: se,
        });
    }
    let mut n = Vec::new();
    for (_, fit) in cols {
        n.push(fit.map_or(Cell::Empty, |f| Cell::Int(f.n_rows as i64)));
        if with_p {
            n.push(Cell::Empty);
        }
    }
    rows.push(TableRow {
        label: "N of player-matches".into(),
        cells: n,
    });
    let mut notes =
        vec!["Standard errors in parentheses, clustered by tournament and match.".to_string()];
    if let Some(df) = cols
        .iter()
        .find_map(|(_, f)| f.and_then(|f| f.inference.as_ref()).map(|i| i.df))
    {
        notes.push(format!("t tests with {df} degrees of freedom."));
    }
    Table {
        layout,
        title: layout.default_title().into(),
        columns,
        rows,
        notes,
    }
}

const STRATEGY_ROWS: [&str; 6] = [
    "N odds (2 x J matches)",
    "Number of bets placed",
    "Mean overround (%)",
    "Investment (x per bet budget)",
    "Absolute return (x per bet budget)",
    "Return on Investment (%)",
];

fn strategies_table(layout: Layout, cols: &[(String, Option<&StrategySummary>)]) -> Table {
    let mut columns = vec![String::new()];
    columns.extend(cols.iter().map(|(l, _)| l.clone()));
    let rows = STRATEGY_ROWS
        .iter()
        .enumerate()
        .map(|(i, label)| TableRow {
            label: (*label).into(),
            cells: cols
                .iter()
                .map(|(_, s)| match s {
                    None => Cell::Empty,
                    Some(s) => match i {
                        0 => Cell::Int(s.n_odds as i64),
                        1 => Cell::Int(s.bets_placed as i64),
                        2 => Cell::num(s.mean_overround_pct, STRATEGY_DECIMALS),
                        3 => Cell::num(Some(s.investment), STRATEGY_DECIMALS),
                        4 => Cell::num(Some(s.absolute_return), STRATEGY_DECIMALS),
                        _ => Cell::num(s.roi_pct, STRATEGY_DECIMALS),
                    },
                })
                .collect(),
        })
        .collect();
    Table {
        layout,
        title: layout.default_title().into(),
        columns,
        rows,
        notes: vec!["Kelly stakes on a bankroll reset to 1 before each bet.".into()],
    }
}

fn short_date(d: NaiveDate) -> String {
    d.format("%d/%m/%y").to_string()
}

fn cleaning_table(report: &CleaningReport) -> Table {
    let columns: Vec<String> = [
        "Step", "Rows", "Date", "Player i", "Player j", "Best_i", "Av._i", "Bet365_i", "Wiki_i",
        "Wiki_j",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let mut rows = Vec::new();
    if let Some(first) = report.steps.first() {
        let mut cells = vec![Cell::Int(first.rows_before as i64)];
        cells.extend(std::iter::repeat_n(Cell::Empty, 8));
        rows.push(TableRow {
            label: "0".into(),
            cells,
        });
    }
    for step in &report.steps {
        let mut cells = vec![Cell::Int(step.rows_after() as i64)];
        match step.exemplars.first() {
            Some(e) => {
                let odds =
                    |v: Option<f64>| v.map_or(Cell::Text("None".into()), |v| Cell::num(Some(v), 2));
                cells.push(Cell::Text(short_date(e.date)));
                cells.push(Cell::Text(e.player_i.clone()));
                cells.push(Cell::Text(e.player_j.clone()));
                cells.push(odds(e.best_i));
                cells.push(odds(e.avg_i));
                cells.push(odds(e.bet365_i));
                let wiki =
                    |d: Option<NaiveDate>| d.map_or(Cell::Empty, |d| Cell::Text(short_date(d)));
                cells.push(wiki(e.wiki_i));
                cells.push(wiki(e.wiki_j));
            }
            None => cells.extend(std::iter::repeat_n(Cell::Empty, 8)),
        }
        rows.push(TableRow {
            label: step.step.to_string(),
            cells,
        });
    }
    let mut notes: Vec<String> = report
        .steps
        .iter()
        .map(|s| {
            if s.skipped {
                format!("{}. {}: skipped", s.step, s.name)
            } else {
                format!(
                    "{}. {}: rows removed {}",
                    s.step,
                    s.name,
                    thousands(s.rows_removed as i64)
                )
            }
        })
        .collect();
    if let Some(sigma) = report.sigma_used {
        notes.push(format!("Best-odds spread standard deviation: {sigma:.4}"));
    }
    notes.push(format!(
        "Final: {} rows, {} matches, {} players.",
        thousands(report.final_rows as i64),
        thousands(report.final_matches as i64),
        report.final_players
    ));
    Table {
        layout: Layout::AppendixD,
        title: Layout::AppendixD.default_title().into(),
        columns,
        rows,
        notes,
    }
}

/// Builds a table for `layout` (an id such as `table2` or `appendix_d`).
pub fn render_table(input: &TableInput<'_>, layout: &str) -> Result<Table> {
    let layout: Layout = layout.parse()?;
    match (layout, input) {
        (Layout::Table1 | Layout::Table4, TableInput::Estimates(cols)) => {
            Ok(estimates_table(layout, cols))
        }
        (
            Layout::Table2 | Layout::Table3 | Layout::AppendixB | Layout::AppendixC,
            TableInput::Strategies(cols),
        ) => Ok(strategies_table(layout, cols)),
        (Layout::AppendixD, TableInput::Cleaning(report)) => Ok(cleaning_table(report)),
        (layout, _) => Err(Error::InvalidArgument(format!(
            "layout {layout} does not take this kind of input"
        ))),
    }
}

/// One cumulative P&L curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnlSeries {
    pub label: String,
    pub points: Vec<(NaiveDate, f64)>,
    pub dashed: bool,
}

/// Vertical line drawn at a date, such as a change of dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    pub date: NaiveDate,
    pub label: String,
}

const PLOT_W: f64 = 760.0;
const PLOT_H: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = if norm < 1.5 {
        1.0
    } else if norm < 3.0 {
        2.0
    } else if norm < 7.0 {
        5.0
    } else {
        10.0
    };
    step * mag
}

/// SVG document for the series. Empty series are skipped; a series with a
/// single point is drawn as a dot.
pub fn pnl_svg(series: &[PnlSeries], marker: Option<&Marker>, title: &str) -> Result<String> {
    let drawn: Vec<&PnlSeries> = series.iter().filter(|s| !s.points.is_empty()).collect();
    if drawn.is_empty() {
        return Err(Error::EmptySeries);
    }
    let dates = drawn
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .chain(marker.map(|m| m.date));
    let (d0, d1) = dates.fold((NaiveDate::MAX, NaiveDate::MIN), |(lo, hi), d| {
        (lo.min(d), hi.max(d))
    });
    let values = drawn.iter().flat_map(|s| s.points.iter().map(|p| p.1));
    let (mut y0, mut y1) = values.fold((0.0f64, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if y1 - y0 < 1e-9 {
        y0 -= 1.0;
        y1 += 1.0;
    }
    let step = nice_step(y1 - y0);
    y0 = (y0 / step).floor() * step;
    y1 = (y1 / step).ceil() * step;
    let span_days = ((d1 - d0).num_days()).max(1) as f64;
    let inner_w = PLOT_W - MARGIN_L - MARGIN_R;
    let inner_h = PLOT_H - MARGIN_T - MARGIN_B;
    let sx = |d: NaiveDate| MARGIN_L + inner_w * (d - d0).num_days() as f64 / span_days;
    let sy = |v: f64| MARGIN_T + inner_h * (1.0 - (v - y0) / (y1 - y0));

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{PLOT_W}" height="{PLOT_H}" viewBox="0 0 {PLOT_W} {PLOT_H}" font-family="sans-serif" font-size="11">"#
    );
    for s in &drawn {
        let (last_d, last_v) = s.points[s.points.len() - 1];
        let _ = writeln!(
            svg,
            "<!-- series \"{}\": {} points, final {} on {} -->",
            xml_escape(&s.label).replace("--", "- -"),
            s.points.len(),
            last_v,
            last_d
        );
    }
    let _ = writeln!(
        svg,
        r#"<rect x="0" y="0" width="{PLOT_W}" height="{PLOT_H}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
        PLOT_W / 2.0,
        xml_escape(title)
    );
    // Horizontal grid and y labels.
    let mut v = y0;
    while v <= y1 + step * 1e-6 {
        let y = sy(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{MARGIN_L}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{}" stroke-width="1"/>"##,
            PLOT_W - MARGIN_R,
            if v.abs() < step * 1e-6 {
                "#888"
            } else {
                "#eee"
            }
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            MARGIN_L - 6.0,
            y + 4.0,
            Cell::fixed(v, if step < 1.0 { 2 } else { 0 })
        );
        v += step;
    }
    // Year ticks.
    for year in chrono::Datelike::year(&d0)..=chrono::Datelike::year(&d1) + 1 {
        let d = NaiveDate::from_ymd_opt(year, 1, 1).expect("valid date");
        if d < d0 || d > d1 {
            continue;
        }
        let x = sx(d);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#888"/>"##,
            PLOT_H - MARGIN_B,
            PLOT_H - MARGIN_B + 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{year}</text>"#,
            PLOT_H - MARGIN_B + 18.0
        );
    }
    let _ = writeln!(
        svg,
        r##"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{inner_w}" height="{inner_h}" fill="none" stroke="#444"/>"##
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" transform="rotate(-90 16 {:.2})" text-anchor="middle">Cumulative profit (x per bet budget)</text>"#,
        MARGIN_T + inner_h / 2.0,
        MARGIN_T + inner_h / 2.0
    );
    if let Some(m) = marker {
        let x = sx(m.date);
        let _ = writeln!(
            svg,
            r##"<line class="marker" x1="{x:.2}" y1="{MARGIN_T}" x2="{x:.2}" y2="{:.2}" stroke="#555" stroke-dasharray="2,3"/>"##,
            PLOT_H - MARGIN_B
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="10">{}</text>"#,
            x + 4.0,
            MARGIN_T + 12.0,
            xml_escape(&m.label)
        );
    }
    for (i, s) in drawn.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let dash = if s.dashed {
            r#" stroke-dasharray="6,4""#
        } else {
            ""
        };
        if s.points.len() == 1 {
            let (d, v) = s.points[0];
            let _ = writeln!(
                svg,
                r#"<circle class="series" cx="{:.2}" cy="{:.2}" r="3" fill="{colour}"/>"#,
                sx(d),
                sy(v)
            );
        } else {
            let pts: Vec<String> = s
                .points
                .iter()
                .map(|&(d, v)| format!("{:.2},{:.2}", sx(d), sy(v)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline class="series" fill="none" stroke="{colour}" stroke-width="1.5"{dash} points="{}"/>"#,
                pts.join(" ")
            );
        }
        let ly = MARGIN_T + 16.0 + 16.0 * i as f64;
        let lx = MARGIN_L + 10.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="1.5"{dash}/>"#,
            lx + 24.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}">{}</text>"#,
            lx + 30.0,
            ly + 4.0,
            xml_escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Exact point values, one row per point.
pub fn pnl_csv(series: &[PnlSeries]) -> Result<String> {
    if series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::EmptySeries);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["series", "date", "cumulative"])?;
    for s in series {
        for (d, v) in &s.points {
            w.write_record([s.label.as_str(), &d.to_string(), &v.to_string()])?;
        }
    }
    Ok(
        String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
            .expect("utf8 csv"),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotFiles {
    pub svg: PathBuf,
    pub csv: PathBuf,
}

/// Writes `<stem>.svg` and `<stem>.csv`.
pub fn emit_pnl_plot(
    series: &[PnlSeries],
    marker: Option<&Marker>,
    title: &str,
    stem: &Path,
) -> Result<PlotFiles> {
    let svg = pnl_svg(series, marker, title)?;
    let csv = pnl_csv(series)?;
    let files = PlotFiles {
        svg: stem.with_extension("svg"),
        csv: stem.with_extension("csv"),
    };
    write_atomic(&files.svg, svg.as_bytes())?;
    write_atomic(&files.csv, csv.as_bytes())?;
    Ok(files)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    std::io::Write::write_all(&mut tmp, bytes)?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

// ---------------------------------------------------------------------------
// Replication config

fn default_canonical() -> String {
    "canonical".into()
}

fn default_tennis_data() -> String {
    "tennis-data".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Directory the data paths are relative to; defaults to the config's.
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Original study corpus with precomputed pageview inputs.
    #[serde(default)]
    pub original: Option<PathBuf>,
    #[serde(default = "default_canonical")]
    pub original_schema: String,
    /// Raw extended corpus; cleaned in the run.
    #[serde(default)]
    pub extended_raw: Option<PathBuf>,
    #[serde(default = "default_tennis_data")]
    pub extended_raw_schema: String,
    /// Already cleaned extended corpus; used instead of cleaning the raw one.
    #[serde(default)]
    pub extended_clean: Option<PathBuf>,
    #[serde(default = "default_canonical")]
    pub extended_clean_schema: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtendedSection {
    pub start: NaiveDate,
    pub end: NaiveDate,
    /// First date taken from the extended corpus when continuing a backtest.
    pub continue_from: NaiveDate,
    #[serde(default = "default_marker_label")]
    pub marker_label: String,
    #[serde(default)]
    pub sigma: Option<f64>,
}

fn default_marker_label() -> String {
    "dataset change".into()
}

fn default_fe() -> String {
    "season,tournament".into()
}

fn default_clusters() -> String {
    "tournament,match".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationSection {
    #[serde(default = "default_fe")]
    pub fixed_effects: String,
    #[serde(default = "default_clusters")]
    pub clusters: String,
}

impl Default for EstimationSection {
    fn default() -> Self {
        EstimationSection {
            fixed_effects: default_fe(),
            clusters: default_clusters(),
        }
    }
}

/// Identifies one player-match row by date and names. Names match exactly,
/// or else by case-insensitive substring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowLocator {
    pub date: NaiveDate,
    pub player: String,
    pub opponent: String,
}

fn default_trials() -> usize {
    100_000
}

fn default_seed() -> u64 {
    42
}

fn default_unit() -> String {
    "unit".into()
}

fn default_roi() -> String {
    "roi".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignificanceSection {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_unit")]
    pub staking: String,
    #[serde(default = "default_roi")]
    pub metric: String,
}

impl Default for SignificanceSection {
    fn default() -> Self {
        SignificanceSection {
            trials: default_trials(),
            seed: default_seed(),
            staking: default_unit(),
            metric: default_roi(),
        }
    }
}

fn default_bet365() -> String {
    "bet365".into()
}

fn default_original() -> String {
    "original".into()
}

/// A strategy or estimation column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub model: String,
    #[serde(default = "default_bet365")]
    pub odds: String,
    #[serde(default)]
    pub p_range: Option<String>,
    /// Drop the rows listed under `[[exclude]]`.
    #[serde(default)]
    pub exclude_listed: bool,
    /// `original` or `extended`.
    #[serde(default = "default_original")]
    pub period: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub label: String,
    #[serde(flatten)]
    pub strategy: StrategySpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSpec {
    pub id: String,
    pub layout: String,
    #[serde(default)]
    pub title: Option<String>,
    #[serde(default, rename = "column")]
    pub columns: Vec<ColumnSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSpec {
    pub label: String,
    #[serde(default)]
    pub dashed: bool,
    #[serde(flatten)]
    pub strategy: StrategySpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureSpec {
    pub id: String,
    pub title: String,
    /// Draw the dataset-change marker from `[extended]`.
    #[serde(default)]
    pub marker: bool,
    #[serde(rename = "series")]
    pub series: Vec<SeriesSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSpec {
    pub id: String,
    #[serde(flatten)]
    pub strategy: StrategySpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicationConfig {
    pub data: DataSection,
    #[serde(default)]
    pub split: Option<SplitConfig>,
    #[serde(default)]
    pub extended: Option<ExtendedSection>,
    #[serde(default)]
    pub estimation: EstimationSection,
    #[serde(default, rename = "exclude")]
    pub exclusions: Vec<RowLocator>,
    #[serde(default)]
    pub significance: SignificanceSection,
    #[serde(default, rename = "table")]
    pub tables: Vec<TableSpec>,
    #[serde(default, rename = "figure")]
    pub figures: Vec<FigureSpec>,
    #[serde(default, rename = "test")]
    pub tests: Vec<TestSpec>,
}

impl ReplicationConfig {
    pub fn from_path(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingInput(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg: ReplicationConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok((cfg, bytes))
    }
}

/// Overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct ReplicateOptions {
    pub data_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub name: String,
    pub kind: String,
    pub files: Vec<String>,
    /// SHA-256 over the listed files in order.
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRun {
    pub tool_version: String,
    pub config_digest: String,
    pub dataset_fingerprints: BTreeMap<String, String>,
    pub outputs: Vec<OutputEntry>,
    pub significance: Vec<(String, SignificanceResult)>,
}

impl ReplicationRun {
    pub fn tables(&self) -> impl Iterator<Item = &OutputEntry> {
        self.outputs.iter().filter(|o| o.kind == "table")
    }

    pub fn figures(&self) -> impl Iterator<Item = &OutputEntry> {
        self.outputs.iter().filter(|o| o.kind == "figure")
    }
}

fn resolve_schema(spec: &str, base: &Path) -> Result<Schema> {
    match spec {
        "canonical" => Ok(Schema::canonical()),
        "tennis-data" | "tennis_data" => Ok(Schema::tennis_data()),
        path => Schema::from_file(&base.join(path)),
    }
}

fn load(path: &Path, schema: &Schema) -> Result<Dataset> {
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    Ok(normalize_dataset(parse_match_path(path, schema)?))
}

fn name_matches(candidate: &str, wanted: &str) -> bool {
    candidate == wanted || candidate.to_lowercase().contains(&wanted.to_lowercase())
}

/// Finds the row key of `loc` in `ds`.
pub fn locate_row(ds: &Dataset, loc: &RowLocator) -> Result<RowKey> {
    ds.matches
        .iter()
        .filter(|m| m.date == loc.date)
        .find_map(|m| {
            [Side::Winner, Side::Loser].into_iter().find_map(|side| {
                (name_matches(m.player(side), &loc.player)
                    && name_matches(m.player(side.other()), &loc.opponent))
                .then(|| RowKey {
                    match_id: m.match_id.clone(),
                    side: Some(side),
                })
            })
        })
        .ok_or_else(|| {
            Error::UnknownMatchId(format!("{} {} vs {}", loc.date, loc.player, loc.opponent))
        })
}

struct Context {
    fe: BTreeSet<FixedEffect>,
    clusters: BTreeSet<ClusterBy>,
    train: Vec<PlayerMatchRow>,
    test: Vec<PlayerMatchRow>,
    extended_rows: Vec<PlayerMatchRow>,
    extended: Option<ExtendedSection>,
    excluded: Vec<RowKey>,
    fits: HashMap<String, RegressionFit>,
    runs: HashMap<String, StrategyRun>,
}

fn spec_key(spec: &StrategySpec) -> String {
    format!(
        "{}|{}|{}|{}|{}",
        spec.model,
        spec.odds,
        spec.p_range.as_deref().unwrap_or("all"),
        spec.exclude_listed,
        spec.period
    )
}

impl Context {
    fn need_original(&self) -> Result<()> {
        if self.train.is_empty() {
            return Err(Error::Config("a strategy needs `data.original`".into()));
        }
        Ok(())
    }

    fn extended(&self) -> Result<&ExtendedSection> {
        self.extended.as_ref().ok_or_else(|| {
            Error::Config("the extended period needs an `[extended]` section".into())
        })
    }

    fn run(&mut self, spec: &StrategySpec) -> Result<StrategyRun> {
        let key = spec_key(spec);
        if let Some(run) = self.runs.get(&key) {
            return Ok(run.clone());
        }
        self.need_original()?;
        let model: Model = spec.model.parse()?;
        let odds: OddsSource = spec.odds.parse()?;
        let mut config = StrategyConfig::new(model, odds);
        if let Some(r) = &spec.p_range {
            config = config.with_range(r.parse::<PRange>()?);
        }
        if spec.exclude_listed {
            config = config.excluding(self.excluded.clone());
        }
        let test = match spec.period.as_str() {
            "original" => self.test.clone(),
            "extended" => {
                let ext = self.extended()?;
                let mut rows = self.test.clone();
                rows.extend(slice_dates(&self.extended_rows, ext.continue_from, ext.end));
                rows
            }
            other => return Err(Error::Config(format!("unknown period `{other}`"))),
        };
        let fit_key = format!(
            "{}|{}",
            spec.model,
            spec.p_range.as_deref().unwrap_or("all")
        );
        let cached = self.fits.get(&fit_key).cloned();
        let run = run_strategy(&self.train, &test, &config, &self.fe, cached.as_ref())?;
        self.fits.entry(fit_key).or_insert_with(|| run.fit.clone());
        self.runs.insert(key, run.clone());
        Ok(run)
    }

    fn estimate(&self, spec: &StrategySpec) -> Result<RegressionFit> {
        let model: Model = spec.model.parse()?;
        let mut rows = match spec.period.as_str() {
            "original" => {
                self.need_original()?;
                self.train.clone()
            }
            "extended" => {
                let ext = self.extended()?;
                slice_dates(&self.extended_rows, ext.start, ext.end)
            }
            other => return Err(Error::Config(format!("unknown period `{other}`"))),
        };
        if let Some(r) = &spec.p_range {
            rows = crate::backtest::apply_competitiveness(&rows, &r.parse()?);
        }
        let design = build_design(&rows, model, &self.fe)?;
        with_inference(crate::estimate::fit_ols(&design)?, &design, &self.clusters)
    }
}

/// Runs every table, figure and significance test in `config_path` and
/// writes them under `out_dir` with a `manifest.json`.
pub fn replicate_all(
    config_path: &Path,
    out_dir: &Path,
    opts: &ReplicateOptions,
) -> Result<ReplicationRun> {
    let (cfg, bytes) = ReplicationConfig::from_path(config_path)?;
    let base = config_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let data_dir = opts
        .data_dir
        .clone()
        .or_else(|| cfg.data.dir.as_ref().map(|d| base.join(d)))
        .unwrap_or_else(|| base.clone());

    // Check every input up front so a missing file is reported by path.
    let inputs = [
        cfg.data.original.as_ref(),
        cfg.data.extended_raw.as_ref(),
        cfg.data.extended_clean.as_ref(),
    ];
    for p in inputs.into_iter().flatten() {
        let full = data_dir.join(p);
        if !full.exists() {
            return Err(Error::MissingInput(full));
        }
    }

    let mut fingerprints = BTreeMap::new();
    let original = match &cfg.data.original {
        Some(p) => {
            let ds = load(
                &data_dir.join(p),
                &resolve_schema(&cfg.data.original_schema, &base)?,
            )?;
            fingerprints.insert("original".to_string(), ds.fingerprint());
            Some(ds)
        }
        None => None,
    };
    let mut cleaning: Option<CleaningReport> = None;
    let mut extended_ds: Option<Dataset> = None;
    if let Some(p) = &cfg.data.extended_raw {
        let raw = load(
            &data_dir.join(p),
            &resolve_schema(&cfg.data.extended_raw_schema, &base)?,
        )?;
        fingerprints.insert("extended_raw".to_string(), raw.fingerprint());
        let sigma = match cfg.extended.as_ref().and_then(|e| e.sigma) {
            Some(s) => Sigma::Fixed(s),
            None => Sigma::Auto,
        };
        let (clean, report) = run_pipeline(
            &raw,
            &PipelineOptions {
                sigma,
                ..Default::default()
            },
        )?;
        cleaning = Some(report);
        extended_ds = Some(clean);
    }
    if let Some(p) = &cfg.data.extended_clean {
        let ds = load(
            &data_dir.join(p),
            &resolve_schema(&cfg.data.extended_clean_schema, &base)?,
        )?;
        fingerprints.insert("extended_clean".to_string(), ds.fingerprint());
        extended_ds = Some(ds);
    }

    let split = cfg.split.unwrap_or_else(SplitConfig::original);
    let (train, test, excluded) = match &original {
        Some(ds) => {
            let rows = to_player_rows(ds, OddsSource::MarketAverage).rows;
            let (train, test) = split_samples(&rows, &split)?;
            let excluded = cfg
                .exclusions
                .iter()
                .map(|l| locate_row(ds, l))
                .collect::<Result<Vec<_>>>()?;
            (train, test, excluded)
        }
        None => (Vec::new(), Vec::new(), Vec::new()),
    };
    let extended_rows = extended_ds
        .as_ref()
        .map(|ds| to_player_rows(ds, OddsSource::MarketAverage).rows)
        .unwrap_or_default();

    let mut ctx = Context {
        fe: parse_fixed_effects(&cfg.estimation.fixed_effects)?,
        clusters: parse_clusters(&cfg.estimation.clusters)?,
        train,
        test,
        extended_rows,
        extended: cfg.extended.clone(),
        excluded,
        fits: HashMap::new(),
        runs: HashMap::new(),
    };

    fs::create_dir_all(out_dir)?;
    let mut outputs = Vec::new();

    for spec in &cfg.tables {
        let layout: Layout = spec.layout.parse()?;
        let mut table = match layout {
            Layout::Table1 | Layout::Table4 => {
                let fits = spec
                    .columns
                    .iter()
                    .map(|c| ctx.estimate(&c.strategy))
                    .collect::<Result<Vec<_>>>()?;
                let path = out_dir.join(format!("{}_fits.json", spec.id));
                let values: Vec<Value> = spec
                    .columns
                    .iter()
                    .zip(&fits)
                    .map(|(c, f)| json!({"label": c.label, "fit": f}))
                    .collect();
                write_atomic(
                    &path,
                    (serde_json::to_string_pretty(&values)? + "\n").as_bytes(),
                )?;
                outputs.push(entry(
                    &format!("{}_data", spec.id),
                    "data",
                    out_dir,
                    &[path],
                )?);
                let cols = spec
                    .columns
                    .iter()
                    .zip(&fits)
                    .map(|(c, f)| (c.label.clone(), Some(f)))
                    .collect();
                render_table(&TableInput::Estimates(cols), layout.id())?
            }
            Layout::AppendixD => {
                let report = cleaning
                    .as_ref()
                    .ok_or_else(|| Error::Config("appendix_d needs `data.extended_raw`".into()))?;
                let mut files = Vec::new();
                let path = out_dir.join("cleaning_report.json");
                write_atomic(
                    &path,
                    (serde_json::to_string_pretty(report)? + "\n").as_bytes(),
                )?;
                files.push(path);
                outputs.push(entry("cleaning_report", "data", out_dir, &files)?);
                render_table(&TableInput::Cleaning(report), layout.id())?
            }
            _ => {
                let runs = spec
                    .columns
                    .iter()
                    .map(|c| ctx.run(&c.strategy))
                    .collect::<Result<Vec<_>>>()?;
                let mut files = Vec::new();
                for (i, run) in runs.iter().enumerate() {
                    let path = out_dir
                        .join("ledgers")
                        .join(format!("{}_{}.csv", spec.id, i + 1));
                    let mut buf = Vec::new();
                    write_ledger(&run.ledger, &mut buf)?;
                    write_atomic(&path, &buf)?;
                    files.push(path);
                }
                let path = out_dir.join(format!("{}_summaries.json", spec.id));
                let summaries: Vec<Value> = spec
                    .columns
                    .iter()
                    .zip(&runs)
                    .map(|(c, r)| json!({"label": c.label, "summary": r.summary}))
                    .collect();
                write_atomic(
                    &path,
                    (serde_json::to_string_pretty(&summaries)? + "\n").as_bytes(),
                )?;
                files.push(path);
                outputs.push(entry(
                    &format!("{}_data", spec.id),
                    "data",
                    out_dir,
                    &files,
                )?);
                let cols = spec
                    .columns
                    .iter()
                    .zip(&runs)
                    .map(|(c, r)| (c.label.clone(), Some(&r.summary)))
                    .collect();
                render_table(&TableInput::Strategies(cols), layout.id())?
            }
        };
        if let Some(t) = &spec.title {
            table.title = t.clone();
        }
        let mut files = Vec::new();
        for format in [Format::Text, Format::Csv, Format::Json] {
            let path = out_dir.join(format!("{}.{}", spec.id, format.extension()));
            write_atomic(&path, table.render(format).as_bytes())?;
            files.push(path);
        }
        outputs.push(entry(&spec.id, "table", out_dir, &files)?);
    }

    for fig in &cfg.figures {
        let mut series = Vec::new();
        for s in &fig.series {
            let run = ctx.run(&s.strategy)?;
            series.push(PnlSeries {
                label: s.label.clone(),
                points: cumulative_series(&run.ledger),
                dashed: s.dashed,
            });
        }
        let marker = if fig.marker {
            let ext = ctx.extended()?;
            Some(Marker {
                date: ext.continue_from,
                label: ext.marker_label.clone(),
            })
        } else {
            None
        };
        let files = emit_pnl_plot(&series, marker.as_ref(), &fig.title, &out_dir.join(&fig.id))?;
        outputs.push(entry(&fig.id, "figure", out_dir, &[files.svg, files.csv])?);
    }

    let sig_cfg = SignificanceConfig {
        trials: opts.trials.unwrap_or(cfg.significance.trials),
        seed: opts.seed.unwrap_or(cfg.significance.seed),
        staking: cfg.significance.staking.parse()?,
        metric: cfg.significance.metric.parse()?,
    };
    let mut significance = Vec::new();
    for t in &cfg.tests {
        let run = ctx.run(&t.strategy)?;
        significance.push((
            t.id.clone(),
            ledger_significance(&run.ledger, None, &sig_cfg)?,
        ));
    }
    if !significance.is_empty() {
        let path = out_dir.join("significance.json");
        let value: BTreeMap<&str, &SignificanceResult> =
            significance.iter().map(|(k, v)| (k.as_str(), v)).collect();
        write_atomic(
            &path,
            (serde_json::to_string_pretty(&value)? + "\n").as_bytes(),
        )?;
        outputs.push(entry("significance", "data", out_dir, &[path])?);
    }

    let run = ReplicationRun {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_digest: sha256_hex(&bytes),
        dataset_fingerprints: fingerprints,
        outputs,
        significance,
    };
    write_atomic(
        &out_dir.join("manifest.json"),
        (serde_json::to_string_pretty(&run)? + "\n").as_bytes(),
    )?;
    Ok(run)
}

fn entry(name: &str, kind: &str, out_dir: &Path, files: &[PathBuf]) -> Result<OutputEntry> {
    let mut hasher = Sha256::new();
    let mut rel = Vec::new();
    for f in files {
        hasher.update(fs::read(f)?);
        rel.push(
            f.strip_prefix(out_dir)
                .unwrap_or(f)
                .to_string_lossy()
                .replace('\\', "/"),
        );
    }
    Ok(OutputEntry {
        name: name.to_string(),
        kind: kind.to_string(),
        files: rel,
        sha256: hex::encode(hasher.finalize()),
    })
}
