//! `buzzcheck` command line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use buzzcheck::backtest::{self, PRange, StrategyConfig, StrategySummary};
use buzzcheck::clean::{self, PipelineOptions, Sigma};
use buzzcheck::estimate::{self, parse_clusters, RegressionFit};
use buzzcheck::features::{self, parse_fixed_effects, Model};
use buzzcheck::ingest::{self, parse_row_keys, OddsSource, Schema, SplitConfig};
use buzzcheck::pageviews::{self, PageviewClient, WikimediaSource};
use buzzcheck::report::{self, Format, Layout, Marker, PnlSeries, ReplicateOptions, TableInput};
use buzzcheck::significance::{self, Metric, SignificanceConfig, Staking};
use buzzcheck::synth::{self, SynthConfig};
use buzzcheck::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "buzzcheck",
    version,
    about = "Backtest WikiBuzz tennis betting strategies"
)]
struct Cli {
    /// Master seed for anything random.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Directory relative output paths are resolved against.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Format for what is printed to stdout.
    #[arg(long, global = true, default_value = "text")]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse a match file into the canonical dataset.
    Ingest(IngestArgs),
    /// Run the four cleaning steps.
    Clean(CleanArgs),
    /// Write per-player-match feature rows.
    Features(FeaturesArgs),
    /// Fit the mispricing regression.
    Estimate(EstimateArgs),
    /// Backtest a Kelly strategy out of sample.
    Backtest(BacktestArgs),
    /// Random-strategy p-value for a bet ledger.
    Significance(SignificanceArgs),
    /// Render a table or P&L plot from saved outputs.
    Report(ReportArgs),
    /// Run every table and figure described by a config file.
    ReplicateAll(ReplicateArgs),
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// `tennis-data`, `canonical`, or a TOML/JSON schema file.
    #[arg(long, default_value = "tennis-data")]
    schema: String,
    #[arg(long)]
    out: PathBuf,
    /// Keep only completed matches.
    #[arg(long)]
    completed_only: bool,
    /// Pageview cache used to fill missing Wikipedia inputs.
    #[arg(long)]
    pageviews: Option<PathBuf>,
    /// Fetch cache misses from the Wikimedia API.
    #[arg(long, requires = "pageviews")]
    live: bool,
}

#[derive(Args, Debug)]
struct CleanArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
    /// `auto` or a fixed standard deviation for the best-odds rule.
    #[arg(long, default_value = "auto")]
    sigma: String,
    #[arg(long = "skip-step")]
    skip_step: Vec<usize>,
    /// Match ids to drop before cleaning.
    #[arg(long, value_delimiter = ',')]
    exclude: Vec<String>,
}

#[derive(Args, Debug)]
struct FeaturesArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Odds source for the implied probability z.
    #[arg(long, default_value = "average")]
    odds: OddsSource,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "pm")]
    model: Model,
    #[arg(long, default_value = "season,tournament")]
    fe: String,
    #[arg(long, default_value = "tournament,match")]
    clusters: String,
    /// `2016:2018` or `2020-02-01:2023-08-31`.
    #[arg(long, default_value = "2016:2018")]
    train: String,
    #[arg(long)]
    p_range: Option<PRange>,
    /// Fit JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BacktestArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "pm")]
    model: Model,
    #[arg(long, default_value = "bet365")]
    odds: OddsSource,
    #[arg(long)]
    p_range: Option<PRange>,
    /// Row keys `id`, `id:w` or `id:l`.
    #[arg(long)]
    exclude: Option<String>,
    #[arg(long, default_value = "season,tournament")]
    fe: String,
    #[arg(long, default_value = "2016:2018")]
    train: String,
    /// Last day of the test period.
    #[arg(long, default_value = "2020-02-29")]
    test_end: NaiveDate,
    /// Use the fit on the full training sample for every competitiveness window.
    #[arg(long)]
    reuse_full_fit: bool,
    #[arg(long)]
    ledger: Option<PathBuf>,
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SignificanceArgs {
    #[arg(long)]
    ledger: PathBuf,
    /// Ledger whose rows form the sampling universe; defaults to `--ledger`.
    #[arg(long)]
    universe: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    #[arg(long, default_value = "unit")]
    staking: Staking,
    #[arg(long, default_value = "roi")]
    metric: Metric,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Table layout id such as `table2` or `appendix_d`.
    #[arg(long, conflicts_with = "pnl")]
    layout: Option<Layout>,
    /// `LABEL=FILE` pairs: fit JSON, summary JSON or a cleaning report.
    #[arg(long)]
    column: Vec<String>,
    /// Draw cumulative P&L from ledgers.
    #[arg(long)]
    pnl: bool,
    /// `LABEL=LEDGER.csv`, append `:dashed` for a dashed line.
    #[arg(long)]
    series: Vec<String>,
    #[arg(long)]
    marker: Option<NaiveDate>,
    #[arg(long, default_value = "Cumulative profit")]
    title: String,
    /// Output stem for plots; tables are written when given.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReplicateArgs {
    #[arg(long, default_value = "configs/replicate.toml")]
    config: PathBuf,
    /// Overrides the data directory in the config.
    #[arg(long, env = "BUZZCHECK_DATA_DIR")]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 1500)]
    matches: usize,
    #[arg(long, default_value_t = 120)]
    players: usize,
    #[arg(long, default_value = "2016-01-04")]
    start: NaiveDate,
    #[arg(long, default_value = "2020-02-28")]
    end: NaiveDate,
    /// Inject anomalies every N matches (0 for none).
    #[arg(long, default_value_t = 0)]
    anomaly_every: usize,
    #[arg(long)]
    out: PathBuf,
}

struct Ctx {
    seed: u64,
    out_dir: PathBuf,
    format: Format,
}

impl Ctx {
    fn out(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out_dir.join(p)
        }
    }

    fn write(&self, p: &Path, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.out(p);
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, bytes)?;
        Ok(path)
    }

    /// Prints `value` as JSON, or through `text` for text and CSV output.
    fn emit<T: Serialize>(&self, value: &T, text: impl FnOnce() -> String) -> Result<()> {
        let out = match self.format {
            Format::Json => serde_json::to_string_pretty(value)? + "\n",
            _ => text(),
        };
        std::io::stdout().write_all(out.as_bytes())?;
        Ok(())
    }
}

fn parse_window(s: &str) -> Result<(NaiveDate, NaiveDate)> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| Error::InvalidArgument(format!("expected FROM:TO, got `{s}`")))?;
    let bound = |v: &str, end: bool| -> Result<NaiveDate> {
        let v = v.trim();
        if let Ok(year) = v.parse::<i32>() {
            let d = if end {
                NaiveDate::from_ymd_opt(year, 12, 31)
            } else {
                NaiveDate::from_ymd_opt(year, 1, 1)
            };
            return d.ok_or_else(|| Error::InvalidArgument(format!("bad year `{v}`")));
        }
        v.parse()
            .map_err(|_| Error::InvalidArgument(format!("bad date `{v}`")))
    };
    Ok((bound(a, false)?, bound(b, true)?))
}

fn load_schema(spec: &str) -> Result<Schema> {
    match spec {
        "tennis-data" | "tennis_data" => Ok(Schema::tennis_data()),
        "canonical" => Ok(Schema::canonical()),
        path => Schema::from_file(Path::new(path)),
    }
}

fn split_pair(s: &str) -> Result<(String, PathBuf)> {
    let (label, path) = s
        .split_once('=')
        .ok_or_else(|| Error::InvalidArgument(format!("expected LABEL=FILE, got `{s}`")))?;
    Ok((label.to_string(), PathBuf::from(path)))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingInput(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn open_ledger(path: &Path) -> Result<backtest::BetLedger> {
    let file = fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingInput(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    backtest::read_ledger(file)
}

fn cmd_ingest(ctx: &Ctx, a: &IngestArgs) -> Result<()> {
    let schema = load_schema(&a.schema)?;
    let mut ds = ingest::normalize_dataset(ingest::parse_match_path(&a.input, &schema)?);
    if a.completed_only {
        ds = ds.completed_only();
    }
    let mut enrich = None;
    if let Some(dir) = &a.pageviews {
        let client = if a.live {
            PageviewClient::live(dir, Box::new(WikimediaSource::from_env()))?
        } else {
            PageviewClient::fixture(dir)?
        };
        let r = pageviews::enrich_dataset(&mut ds, &client, &pageviews::profile_key_for);
        for (player, date, err) in r.failed.iter().take(20) {
            log::warn!("no pageview inputs for {player} on {date}: {err}");
        }
        enrich = Some(r);
    }
    let meta = ingest::write_canonical(&ds, &ctx.out(&a.out))?;
    ctx.emit(
        &serde_json::json!({"dataset": meta, "pageviews": enrich}),
        || {
            let mut s = format!(
                "{} matches ({} player-match rows, {} duplicates collapsed) written to {}\n",
                ds.len(),
                ds.n_rows(),
                ds.duplicates_collapsed,
                ctx.out(&a.out).display()
            );
            if let Some(r) = &enrich {
                s.push_str(&format!(
                    "pageview inputs filled {}, missing {}\n",
                    r.filled,
                    r.failed.len()
                ));
            }
            s
        },
    )
}

fn cmd_clean(ctx: &Ctx, a: &CleanArgs) -> Result<()> {
    let mut ds = ingest::read_canonical(&a.input)?;
    if !a.exclude.is_empty() {
        ds = clean::exclude_rows(&ds, &a.exclude)?;
    }
    let sigma = match a.sigma.as_str() {
        "auto" => Sigma::Auto,
        v => Sigma::Fixed(
            v.parse()
                .map_err(|_| Error::InvalidArgument(format!("bad sigma `{v}`")))?,
        ),
    };
    let opts = PipelineOptions {
        sigma,
        skip_steps: a.skip_step.iter().copied().collect(),
    };
    let (cleaned, rep) = clean::run_pipeline(&ds, &opts)?;
    ingest::write_canonical(&cleaned, &ctx.out(&a.out))?;
    if let Some(p) = &a.report {
        ctx.write(p, (serde_json::to_string_pretty(&rep)? + "\n").as_bytes())?;
    }
    let table = report::render_table(&TableInput::Cleaning(&rep), "appendix_d")?;
    print!("{}", table.render(ctx.format));
    Ok(())
}

fn cmd_features(ctx: &Ctx, a: &FeaturesArgs) -> Result<()> {
    let ds = ingest::read_canonical(&a.input)?;
    let rows = ingest::to_player_rows(&ds, a.odds);
    let path = ctx.out(&a.out);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(&path)?;
    for r in &rows.rows {
        w.serialize(r)?;
    }
    w.flush()?;
    ctx.emit(&rows.excluded, || {
        format!(
            "{} feature rows written to {}; excluded: missing odds {}, missing pageviews {}, zero pageviews {}\n",
            rows.rows.len(),
            path.display(),
            rows.excluded.missing_odds,
            rows.excluded.missing_pageviews,
            rows.excluded.zero_pageviews
        )
    })
}

fn cmd_estimate(ctx: &Ctx, a: &EstimateArgs) -> Result<()> {
    let ds = ingest::read_canonical(&a.input)?;
    let rows = ingest::to_player_rows(&ds, OddsSource::MarketAverage).rows;
    let (from, to) = parse_window(&a.train)?;
    let mut sample = ingest::slice_dates(&rows, from, to);
    if let Some(r) = &a.p_range {
        sample = backtest::apply_competitiveness(&sample, r);
    }
    if sample.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    let design = features::build_design(&sample, a.model, &parse_fixed_effects(&a.fe)?)?;
    let fit = estimate::with_inference(
        estimate::fit_ols(&design)?,
        &design,
        &parse_clusters(&a.clusters)?,
    )?;
    if let Some(p) = &a.out {
        ctx.write(p, (serde_json::to_string_pretty(&fit)? + "\n").as_bytes())?;
    }
    let mut table = report::render_table(
        &TableInput::Estimates(vec![(a.model.label().to_string(), Some(&fit))]),
        "table4",
    )?;
    table.title = format!("Mispricing model estimates, {} to {}", from, to);
    print!("{}", table.render(ctx.format));
    Ok(())
}

fn cmd_backtest(ctx: &Ctx, a: &BacktestArgs) -> Result<()> {
    let ds = ingest::read_canonical(&a.input)?;
    let rows = ingest::to_player_rows(&ds, OddsSource::MarketAverage).rows;
    let (train_start, train_end) = parse_window(&a.train)?;
    let split = SplitConfig {
        train_start,
        train_end,
        test_end: a.test_end,
    };
    let (train, test) = ingest::split_samples(&rows, &split)?;
    let mut config = StrategyConfig::new(a.model, a.odds);
    if let Some(r) = &a.p_range {
        config = config.with_range(r.clone());
    }
    if let Some(list) = &a.exclude {
        config = config.excluding(parse_row_keys(list)?);
    }
    let fe = parse_fixed_effects(&a.fe)?;
    let full_fit = if a.reuse_full_fit {
        Some(estimate::fit_ols(&features::build_design(
            &train, a.model, &fe,
        )?)?)
    } else {
        None
    };
    let run = backtest::run_strategy(&train, &test, &config, &fe, full_fit.as_ref())?;
    if let Some(p) = &a.ledger {
        let mut buf = Vec::new();
        backtest::write_ledger(&run.ledger, &mut buf)?;
        ctx.write(p, &buf)?;
    }
    if let Some(p) = &a.summary {
        ctx.write(
            p,
            (serde_json::to_string_pretty(&run.summary)? + "\n").as_bytes(),
        )?;
    }
    let label = format!("{} {}", a.model.label(), a.odds);
    let table = report::render_table(
        &TableInput::Strategies(vec![(label, Some(&run.summary))]),
        "table2",
    )?;
    print!("{}", table.render(ctx.format));
    if ctx.format == Format::Text {
        if let Some(top) = run.summary.attribution.first() {
            println!(
                "Largest single bet: {} {} v {} at {} (stake {:.3}, profit {:.3})",
                top.date, top.player, top.opponent, top.odds, top.f_star, top.profit
            );
        }
    }
    Ok(())
}

fn cmd_significance(ctx: &Ctx, a: &SignificanceArgs) -> Result<()> {
    let ledger = open_ledger(&a.ledger)?;
    let universe = a.universe.as_deref().map(open_ledger).transpose()?;
    let cfg = SignificanceConfig {
        trials: a.trials,
        seed: ctx.seed,
        staking: a.staking,
        metric: a.metric,
    };
    let result = significance::ledger_significance(
        &ledger,
        universe.as_ref().map(|u| u.records.as_slice()),
        &cfg,
    )?;
    if let Some(p) = &a.out {
        ctx.write(
            p,
            (serde_json::to_string_pretty(&result)? + "\n").as_bytes(),
        )?;
    }
    ctx.emit(&result, || match ctx.format {
        Format::Csv => format!(
            "p_bs,trials,n_bets,universe_size,exceed_count,seed,real_value,mc_standard_error\n{},{},{},{},{},{},{},{}\n",
            result.p_bs,
            result.trials,
            result.n_bets,
            result.universe_size,
            result.exceed_count,
            result.seed,
            result.real_value,
            result.mc_standard_error
        ),
        _ => format!(
            "p_bs = {:.4} ({} of {} trials, {} bets from {} rows, seed {}, MC s.e. {:.5})\n",
            result.p_bs,
            result.exceed_count,
            result.trials,
            result.n_bets,
            result.universe_size,
            result.seed,
            result.mc_standard_error
        ),
    })
}

fn cmd_report(ctx: &Ctx, a: &ReportArgs) -> Result<()> {
    if a.pnl {
        if a.series.is_empty() {
            return Err(Error::EmptySeries);
        }
        let mut series = Vec::new();
        for s in &a.series {
            let (spec, dashed) = match s.strip_suffix(":dashed") {
                Some(rest) => (rest, true),
                None => (s.as_str(), false),
            };
            let (label, path) = split_pair(spec)?;
            series.push(PnlSeries {
                label,
                points: backtest::cumulative_series(&open_ledger(&path)?),
                dashed,
            });
        }
        let marker = a.marker.map(|date| Marker {
            date,
            label: "dataset change".into(),
        });
        let stem = ctx.out(a.out.as_deref().unwrap_or(Path::new("pnl")));
        let files = report::emit_pnl_plot(&series, marker.as_ref(), &a.title, &stem)?;
        return ctx.emit(&files, || {
            format!(
                "wrote {} and {}\n",
                files.svg.display(),
                files.csv.display()
            )
        });
    }
    let layout = a
        .layout
        .ok_or_else(|| Error::InvalidArgument("give --layout or --pnl".into()))?;
    let pairs = a
        .column
        .iter()
        .map(|c| split_pair(c))
        .collect::<Result<Vec<_>>>()?;
    let table = match layout {
        Layout::Table1 | Layout::Table4 => {
            let fits: Vec<(String, RegressionFit)> = pairs
                .iter()
                .map(|(l, p)| Ok((l.clone(), read_json(p)?)))
                .collect::<Result<_>>()?;
            report::render_table(
                &TableInput::Estimates(fits.iter().map(|(l, f)| (l.clone(), Some(f))).collect()),
                layout.id(),
            )?
        }
        Layout::AppendixD => {
            let (_, p) = pairs.first().ok_or_else(|| {
                Error::InvalidArgument("appendix_d needs --column report=FILE".into())
            })?;
            let rep: clean::CleaningReport = read_json(p)?;
            report::render_table(&TableInput::Cleaning(&rep), layout.id())?
        }
        _ => {
            let sums: Vec<(String, StrategySummary)> = pairs
                .iter()
                .map(|(l, p)| Ok((l.clone(), read_json(p)?)))
                .collect::<Result<_>>()?;
            report::render_table(
                &TableInput::Strategies(sums.iter().map(|(l, s)| (l.clone(), Some(s))).collect()),
                layout.id(),
            )?
        }
    };
    let rendered = table.render(ctx.format);
    if let Some(p) = &a.out {
        ctx.write(p, rendered.as_bytes())?;
    }
    print!("{rendered}");
    Ok(())
}

fn cmd_replicate(ctx: &Ctx, a: &ReplicateArgs) -> Result<()> {
    let opts = ReplicateOptions {
        data_dir: a.data_dir.clone(),
        seed: Some(ctx.seed),
        trials: a.trials,
    };
    let run = report::replicate_all(&a.config, &ctx.out_dir, &opts)?;
    ctx.emit(&run, || {
        let mut s = String::new();
        for o in &run.outputs {
            s.push_str(&format!(
                "{:<8} {:<20} {}\n",
                o.kind,
                o.name,
                o.files.join(", ")
            ));
        }
        for (id, r) in &run.significance {
            s.push_str(&format!("p_bs {id}: {:.4} ({} bets)\n", r.p_bs, r.n_bets));
        }
        s.push_str(&format!(
            "manifest: {}\n",
            ctx.out_dir.join("manifest.json").display()
        ));
        s
    })
}

fn cmd_synth(ctx: &Ctx, a: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        seed: ctx.seed,
        n_matches: a.matches,
        n_players: a.players,
        start: a.start,
        end: a.end,
        anomaly_every: a.anomaly_every,
        ..Default::default()
    };
    let ds = synth::synth_corpus(&cfg);
    let meta = ingest::write_canonical(&ds, &ctx.out(&a.out))?;
    ctx.emit(&meta, || {
        format!(
            "{} synthetic matches written to {}\n",
            ds.len(),
            ctx.out(&a.out).display()
        )
    })
}

fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx {
        seed: cli.seed,
        out_dir: cli.out_dir,
        format: cli.format,
    };
    fs::create_dir_all(&ctx.out_dir)?;
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(&ctx, a),
        Command::Clean(a) => cmd_clean(&ctx, a),
        Command::Features(a) => cmd_features(&ctx, a),
        Command::Estimate(a) => cmd_estimate(&ctx, a),
        Command::Backtest(a) => cmd_backtest(&ctx, a),
        Command::Significance(a) => cmd_significance(&ctx, a),
        Command::Report(a) => cmd_report(&ctx, a),
        Command::ReplicateAll(a) => cmd_replicate(&ctx, a),
        Command::Synth(a) => cmd_synth(&ctx, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
