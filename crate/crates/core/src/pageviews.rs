//! Daily Wikipedia pageviews with an on-disk month cache, and the
//! yesterday/trailing-median inputs derived from them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use chrono::{Datelike, Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Earliest date the pageview API serves.
pub fn api_floor() -> NaiveDate {
    NaiveDate::from_ymd_opt(2015, 7, 1).unwrap()
}

/// Days in the trailing window ending yesterday.
pub const MEDIAN_WINDOW_DAYS: u64 = 366;
/// Minimum profile age, in days, for a match to be usable.
pub const MIN_PROFILE_AGE_DAYS: i64 = 366;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageviewSeries {
    pub profile_key: String,
    pub first_available: NaiveDate,
    /// Inclusive date range the counts were fetched for; days inside it
    /// without an entry had no recorded traffic.
    pub covered: (NaiveDate, NaiveDate),
    pub counts: BTreeMap<NaiveDate, u64>,
}

impl PageviewSeries {
    pub fn get(&self, date: NaiveDate) -> u64 {
        self.counts.get(&date).copied().unwrap_or(0)
    }
}

/// Median; the mean of the two central values for even lengths.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

/// Yesterday's views and the median over the 366 days ending yesterday,
/// treating days without an entry as zero views.
pub fn buzz_inputs(series: &PageviewSeries, match_date: NaiveDate) -> Result<(u64, f64)> {
    let yesterday = match_date - Days::new(1);
    let start = match_date - Days::new(MEDIAN_WINDOW_DAYS);
    if series.covered.0 > start || series.covered.1 < yesterday {
        return Err(Error::InsufficientHistory {
            profile: series.profile_key.clone(),
            needed: start,
        });
    }
    let mut window: Vec<f64> = start
        .iter_days()
        .take_while(|d| *d <= yesterday)
        .map(|d| series.get(d) as f64)
        .collect();
    let med = median(&mut window).expect("window is non-empty");
    Ok((series.get(yesterday), med))
}

/// True when the profile is at least one year and one day old on `match_date`.
pub fn profile_age_ok(first_available: NaiveDate, match_date: NaiveDate) -> bool {
    (match_date - first_available).num_days() >= MIN_PROFILE_AGE_DAYS
}

fn month_key(d: NaiveDate) -> String {
    format!("{:04}-{:02}", d.year(), d.month())
}

fn months_between(start: NaiveDate, end: NaiveDate) -> Vec<(NaiveDate, NaiveDate)> {
    let mut out = Vec::new();
    let mut first = start.with_day(1).unwrap();
    while first <= end {
        let next = first.checked_add_months(chrono::Months::new(1)).unwrap();
        let last = next - Days::new(1);
        out.push((first.max(start), last.min(end)));
        first = next;
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub first_available: NaiveDate,
    pub months: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CacheIndex {
    pub profiles: BTreeMap<String, ProfileEntry>,
}

/// One CSV per (profile, month) under `dir/<profile>/<YYYY-MM>.csv`, plus an
/// `index.json` manifest. Writes go through a temp file and a rename.
#[derive(Debug)]
pub struct PageviewCache {
    dir: PathBuf,
    index: Mutex<CacheIndex>,
}

fn safe_component(profile: &str) -> String {
    profile
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || matches!(c, '_' | '-' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    use std::io::Write;
    let parent = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(parent)?;
    let mut tmp = tempfile::NamedTempFile::new_in(parent)?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

impl PageviewCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        let index_path = dir.join("index.json");
        let index = if index_path.exists() {
            serde_json::from_str(&std::fs::read_to_string(&index_path)?)?
        } else {
            CacheIndex::default()
        };
        Ok(PageviewCache {
            dir,
            index: Mutex::new(index),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn entry(&self, profile: &str) -> Option<ProfileEntry> {
        self.index.lock().unwrap().profiles.get(profile).cloned()
    }

    fn month_path(&self, profile: &str, month: &str) -> PathBuf {
        self.dir
            .join(safe_component(profile))
            .join(format!("{month}.csv"))
    }

    pub fn read_month(
        &self,
        profile: &str,
        month: &str,
    ) -> Result<Option<BTreeMap<NaiveDate, u64>>> {
        let listed = self
            .entry(profile)
            .is_some_and(|e| e.months.iter().any(|m| m == month));
        if !listed {
            return Ok(None);
        }
        let mut rdr = csv::Reader::from_path(self.month_path(profile, month))?;
        let mut out = BTreeMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = || Error::Parse {
                row: i + 1,
                message: format!("bad cache line for {profile} {month}"),
            };
            let date = NaiveDate::parse_from_str(rec.get(0).ok_or_else(bad)?, "%Y-%m-%d")
                .map_err(|_| bad())?;
            let views: u64 = rec.get(1).ok_or_else(bad)?.parse().map_err(|_| bad())?;
            out.insert(date, views);
        }
        Ok(Some(out))
    }

    pub fn write_month(
        &self,
        profile: &str,
        month: &str,
        counts: &BTreeMap<NaiveDate, u64>,
        first_available: NaiveDate,
    ) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["date", "views"])?;
        for (d, v) in counts {
            w.write_record([d.format("%Y-%m-%d").to_string(), v.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        write_atomic(&self.month_path(profile, month), &bytes)?;

        let mut index = self.index.lock().unwrap();
        let entry = index
            .profiles
            .entry(profile.to_string())
            .or_insert_with(|| ProfileEntry {
                first_available,
                months: Vec::new(),
            });
        entry.first_available = entry.first_available.min(first_available);
        if !entry.months.iter().any(|m| m == month) {
            entry.months.push(month.to_string());
            entry.months.sort();
        }
        let text = serde_json::to_string_pretty(&*index)? + "\n";
        write_atomic(&self.dir.join("index.json"), text.as_bytes())
    }
}

/// Anything that can return daily counts for an article and date range.
pub trait PageviewSource: Send + Sync {
    fn fetch_range(
        &self,
        profile: &str,
        start: NaiveDate,
        end: NaiveDate,
    ) -> Result<BTreeMap<NaiveDate, u64>>;
}

/// Wikimedia REST pageview endpoint.
///
/// `BUZZCHECK_PAGEVIEWS_URL` overrides the base URL and
/// `BUZZCHECK_PAGEVIEWS_RPS` the request budget per second (default 10).
pub struct WikimediaSource {
    base_url: String,
    min_interval: Duration,
    max_retries: u32,
    next_slot: Mutex<Instant>,
    agent: ureq::Agent,
}

pub const DEFAULT_PAGEVIEWS_URL: &str =
    "https://wikimedia.org/api/rest_v1/metrics/pageviews/per-article/en.wikipedia/all-access/user";

impl WikimediaSource {
    pub fn from_env() -> Self {
        let base_url = std::env::var("BUZZCHECK_PAGEVIEWS_URL")
            .unwrap_or_else(|_| DEFAULT_PAGEVIEWS_URL.to_string());
        let rps: f64 = std::env::var("BUZZCHECK_PAGEVIEWS_RPS")
            .ok()
            .and_then(|v| v.parse().ok())
            .filter(|v: &f64| *v > 0.0)
            .unwrap_or(10.0);
        WikimediaSource {
            base_url,
            min_interval: Duration::from_secs_f64(1.0 / rps),
            max_retries: 4,
            next_slot: Mutex::new(Instant::now()),
            agent: ureq::Agent::new_with_defaults(),
        }
    }

    fn wait_for_slot(&self) {
        let wait = {
            let mut next = self.next_slot.lock().unwrap();
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.min_interval;
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

#[derive(Deserialize)]
struct ApiItem {
    timestamp: String,
    views: u64,
}

#[derive(Deserialize)]
struct ApiResponse {
    items: Vec<ApiItem>,
}

impl PageviewSource for WikimediaSource {
    fn fetch_range(
        &self,
        profile: &str,
        start: NaiveDate,
        end: NaiveDate,
    ) -> Result<BTreeMap<NaiveDate, u64>> {
        let url = format!(
            "{}/{}/daily/{}00/{}00",
            self.base_url,
            profile,
            start.format("%Y%m%d"),
            end.format("%Y%m%d")
        );
        let mut attempt = 0;
        loop {
            self.wait_for_slot();
            let result = self
                .agent
                .get(&url)
                .header("User-Agent", "buzzcheck/0.1 (research backtesting)")
                .call();
            match result {
                Ok(mut resp) => {
                    let body = resp
                        .body_mut()
                        .read_to_string()
                        .map_err(|e| Error::Transport(e.to_string()))?;
                    let parsed: ApiResponse = serde_json::from_str(&body)?;
                    let mut out = BTreeMap::new();
                    for item in parsed.items {
                        let day = item.timestamp.get(..8).unwrap_or("");
                        if let Ok(d) = NaiveDate::parse_from_str(day, "%Y%m%d") {
                            out.insert(d, item.views);
                        }
                    }
                    return Ok(out);
                }
                Err(ureq::Error::StatusCode(404)) => {
                    return Err(Error::ProfileNotFound(profile.to_string()))
                }
                Err(e) => {
                    let retryable = matches!(
                        e,
                        ureq::Error::StatusCode(429) | ureq::Error::StatusCode(500..=599)
                    ) || !matches!(e, ureq::Error::StatusCode(_));
                    if !retryable || attempt >= self.max_retries {
                        return Err(Error::Transport(e.to_string()));
                    }
                    let backoff = Duration::from_millis(250 * (1 << attempt));
                    std::thread::sleep(backoff.min(Duration::from_secs(4)));
                    attempt += 1;
                }
            }
        }
    }
}

pub enum Transport {
    /// Reads the cache only; never touches the network.
    Fixture,
    /// Fills cache misses from the given source.
    Live(Box<dyn PageviewSource>),
}

pub struct PageviewClient {
    pub cache: PageviewCache,
    pub transport: Transport,
}

impl PageviewClient {
    pub fn fixture(dir: impl Into<PathBuf>) -> Result<Self> {
        Ok(PageviewClient {
            cache: PageviewCache::open(dir)?,
            transport: Transport::Fixture,
        })
    }

    pub fn live(dir: impl Into<PathBuf>, source: Box<dyn PageviewSource>) -> Result<Self> {
        Ok(PageviewClient {
            cache: PageviewCache::open(dir)?,
            transport: Transport::Live(source),
        })
    }

    /// Daily counts for `profile` over `[start, end]`, month by month from the
    /// cache, fetching and caching missing months in live mode.
    pub fn fetch_daily_pageviews(
        &self,
        profile: &str,
        start: NaiveDate,
        end: NaiveDate,
    ) -> Result<PageviewSeries> {
        if start > end {
            return Err(Error::InvalidArgument(format!(
                "start {start} is after end {end}"
            )));
        }
        let floor = api_floor();
        let mut counts = BTreeMap::new();
        for (m_start, m_end) in months_between(start.max(floor), end) {
            let month = month_key(m_start);
            let cached = self.cache.read_month(profile, &month)?;
            let month_counts = match (cached, &self.transport) {
                (Some(c), _) => c,
                (None, Transport::Fixture) => {
                    return Err(Error::CacheMiss {
                        profile: profile.to_string(),
                        month,
                    })
                }
                (None, Transport::Live(source)) => {
                    let first = m_start.with_day(1).unwrap().max(floor);
                    let last =
                        first.checked_add_months(chrono::Months::new(1)).unwrap() - Days::new(1);
                    let fetched = source.fetch_range(profile, first, last)?;
                    let first_seen = self
                        .cache
                        .entry(profile)
                        .map(|e| e.first_available)
                        .into_iter()
                        .chain(fetched.keys().next().copied())
                        .min()
                        .unwrap_or(first);
                    self.cache
                        .write_month(profile, &month, &fetched, first_seen)?;
                    fetched
                }
            };
            counts.extend(
                month_counts
                    .into_iter()
                    .filter(|(d, _)| *d >= m_start && *d <= m_end),
            );
        }
        let first_available = self
            .cache
            .entry(profile)
            .map(|e| e.first_available)
            .or_else(|| counts.keys().next().copied())
            .unwrap_or(floor)
            .max(floor);
        Ok(PageviewSeries {
            profile_key: profile.to_string(),
            first_available,
            covered: (start.max(floor), end),
            counts,
        })
    }
}

/// Outcome of filling pageview inputs into a dataset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnrichReport {
    pub filled: usize,
    /// `(player, match date, error)` for sides left without inputs.
    pub failed: Vec<(String, NaiveDate, String)>,
}

/// Default mapping from a player name to a profile key.
pub fn profile_key_for(player: &str) -> String {
    player.trim().replace(' ', "_")
}

/// Fills missing yesterday/median/first-available inputs from `client`.
/// Sides that already carry both counts are left untouched.
pub fn enrich_dataset(
    ds: &mut crate::ingest::Dataset,
    client: &PageviewClient,
    profile_of: &dyn Fn(&str) -> String,
) -> EnrichReport {
    use crate::ingest::Side;
    let mut report = EnrichReport::default();
    for m in &mut ds.matches {
        for side in [Side::Winner, Side::Loser] {
            if m.wiki_yesterday(side).is_some() && m.wiki_med365(side).is_some() {
                continue;
            }
            let profile = profile_of(m.player(side));
            let start = m.date - Days::new(MEDIAN_WINDOW_DAYS);
            let outcome = client
                .fetch_daily_pageviews(&profile, start, m.date - Days::new(1))
                .and_then(|series| Ok((buzz_inputs(&series, m.date)?, series.first_available)));
            match outcome {
                Ok(((yesterday, med), first)) => {
                    let (y, md, f) = match side {
                        Side::Winner => (
                            &mut m.wiki_yesterday_w,
                            &mut m.wiki_med365_w,
                            &mut m.wiki_first_w,
                        ),
                        Side::Loser => (
                            &mut m.wiki_yesterday_l,
                            &mut m.wiki_med365_l,
                            &mut m.wiki_first_l,
                        ),
                    };
                    *y = Some(yesterday);
                    *md = Some(med);
                    f.get_or_insert(first);
                    report.filled += 1;
                }
                Err(e) => report
                    .failed
                    .push((m.player(side).to_string(), m.date, e.to_string())),
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn constant(v: u64, start: NaiveDate, end: NaiveDate) -> PageviewSeries {
        PageviewSeries {
            profile_key: "x".into(),
            first_available: start,
            covered: (start, end),
            counts: start
                .iter_days()
                .take_while(|x| *x <= end)
                .map(|x| (x, v))
                .collect(),
        }
    }

    #[test]
    fn constant_series_inputs() {
        let s = constant(7, d(2016, 1, 1), d(2017, 12, 31));
        assert_eq!(buzz_inputs(&s, d(2017, 6, 1)).unwrap(), (7, 7.0));
    }

    #[test]
    fn insufficient_history() {
        let s = constant(7, d(2017, 1, 1), d(2017, 12, 31));
        assert!(matches!(
            buzz_inputs(&s, d(2017, 6, 1)),
            Err(Error::InsufficientHistory { .. })
        ));
    }

    #[test]
    fn gaps_count_as_zero_and_no_lookahead() {
        let mut s = constant(10, d(2016, 1, 1), d(2018, 1, 1));
        let m = d(2017, 6, 1);
        // Remove 200 of the 366 window days: median becomes 0.
        for k in 1..=200 {
            s.counts.remove(&(m - Days::new(k)));
        }
        assert_eq!(buzz_inputs(&s, m).unwrap(), (0, 0.0));
        let before = buzz_inputs(&s, m).unwrap();
        for k in 0..100 {
            s.counts.insert(m + Days::new(k), 1_000_000);
        }
        assert_eq!(buzz_inputs(&s, m).unwrap(), before);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [26.0, 27.0, 1.0, 100.0]), Some(26.5));
        assert_eq!(median(&mut []), None);
    }

    #[test]
    fn profile_age_boundaries() {
        assert!(!profile_age_ok(d(2021, 6, 5), d(2021, 6, 7)));
        assert!(profile_age_ok(d(2015, 7, 1), d(2017, 7, 1)));
        let created = d(2019, 3, 1);
        assert!(profile_age_ok(created, created + Days::new(366)));
        assert!(!profile_age_ok(created, created + Days::new(365)));
    }

    #[test]
    fn months_split() {
        let m = months_between(d(2018, 1, 20), d(2018, 3, 2));
        assert_eq!(m.len(), 3);
        assert_eq!(m[0], (d(2018, 1, 20), d(2018, 1, 31)));
        assert_eq!(m[2], (d(2018, 3, 1), d(2018, 3, 2)));
    }

    #[test]
    fn reversed_range_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let client = PageviewClient::fixture(dir.path()).unwrap();
        assert!(matches!(
            client.fetch_daily_pageviews("A", d(2018, 3, 2), d(2018, 3, 1)),
            Err(Error::InvalidArgument(_))
        ));
    }

    struct Fake;
    impl PageviewSource for Fake {
        fn fetch_range(
            &self,
            profile: &str,
            start: NaiveDate,
            end: NaiveDate,
        ) -> Result<BTreeMap<NaiveDate, u64>> {
            if profile == "Missing" {
                return Err(Error::ProfileNotFound(profile.into()));
            }
            Ok(start
                .iter_days()
                .take_while(|x| *x <= end)
                .map(|x| (x, u64::from(x.day())))
                .collect())
        }
    }

    #[test]
    fn live_fills_cache_then_fixture_reads_it() {
        let dir = tempfile::tempdir().unwrap();
        let live = PageviewClient::live(dir.path(), Box::new(Fake)).unwrap();
        let s = live
            .fetch_daily_pageviews("Some_Player", d(2018, 2, 10), d(2018, 3, 5))
            .unwrap();
        assert_eq!(s.counts.len(), 24);
        assert_eq!(s.get(d(2018, 3, 5)), 5);
        assert!(matches!(
            live.fetch_daily_pageviews("Missing", d(2018, 2, 10), d(2018, 2, 11)),
            Err(Error::ProfileNotFound(_))
        ));

        let fixture = PageviewClient::fixture(dir.path()).unwrap();
        let again = fixture
            .fetch_daily_pageviews("Some_Player", d(2018, 2, 10), d(2018, 3, 5))
            .unwrap();
        assert_eq!(again, s);
        assert!(matches!(
            fixture.fetch_daily_pageviews("Some_Player", d(2018, 4, 1), d(2018, 4, 2)),
            Err(Error::CacheMiss { .. })
        ));
    }
}
