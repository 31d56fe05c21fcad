//! App event logs, the app vocabulary and normalized frequency tables.
//!
//! A log file is plain text, one event per line:
//!
//! ```text
//! 2012-01-02T08:01:30,com.facebook.katana
//! ```
//!
//! Timestamps are ISO-8601 local date-times (seconds optional, truncated to
//! the minute). A dataset is a set of such files plus `manifest.json`:
//! `{"users":[{"id":"u01","path":"u01.csv"}]}` with paths relative to the
//! manifest.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const TIMESTAMP_FORMATS: [&str; 2] = ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%dT%H:%M"];
const WRITE_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AppEvent {
    pub timestamp: NaiveDateTime,
    pub package: String,
}

impl AppEvent {
    /// Builds an event, truncating the timestamp to the minute.
    pub fn new(timestamp: NaiveDateTime, package: impl Into<String>) -> Result<Self> {
        let package = package.into();
        if package.is_empty() {
            return Err(Error::Param("empty package name".into()));
        }
        let timestamp = timestamp
            .with_second(0)
            .and_then(|t| t.with_nanosecond(0))
            .expect("zero seconds is always valid");
        Ok(AppEvent { timestamp, package })
    }

    pub fn day(&self) -> NaiveDate {
        self.timestamp.date()
    }

    pub fn minute_of_day(&self) -> u32 {
        self.timestamp.hour() * 60 + self.timestamp.minute()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventLog {
    pub user_id: String,
    /// Sorted by timestamp (stable, so same-minute events keep file order).
    pub events: Vec<AppEvent>,
}

impl EventLog {
    pub fn new(user_id: impl Into<String>, mut events: Vec<AppEvent>) -> Self {
        events.sort_by(|a, b| a.timestamp.cmp(&b.timestamp));
        EventLog { user_id: user_id.into(), events }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for e in &self.events {
            writeln!(w, "{},{}", e.timestamp.format(WRITE_FORMAT), e.package)?;
        }
        Ok(())
    }
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    TIMESTAMP_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

/// Parses a `timestamp,package` log. Blank lines and a leading
/// `timestamp,package` header are skipped.
pub fn parse_log<R: Read>(reader: R, user_id: &str) -> Result<EventLog> {
    let mut events = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || (line_no == 1 && line.eq_ignore_ascii_case("timestamp,package")) {
            continue;
        }
        let (ts, pkg) = line.split_once(',').ok_or_else(|| Error::Parse {
            line: line_no,
            msg: "expected `timestamp,package`".into(),
        })?;
        let timestamp = parse_timestamp(ts.trim()).ok_or_else(|| Error::Parse {
            line: line_no,
            msg: format!("invalid timestamp `{}`", ts.trim()),
        })?;
        let event = AppEvent::new(timestamp, pkg.trim()).map_err(|_| Error::Parse {
            line: line_no,
            msg: "empty package name".into(),
        })?;
        events.push(event);
    }
    if events.is_empty() {
        return Err(Error::EmptyLog(user_id.to_string()));
    }
    Ok(EventLog::new(user_id, events))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub users: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        let mut ids: Vec<&str> = manifest.users.iter().map(|u| u.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("duplicate user id in manifest".into()));
        }
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        Ok(())
    }
}

/// Loads every log named by the manifest, in manifest order.
pub fn load_dataset(manifest_path: &Path) -> Result<Vec<EventLog>> {
    let manifest = Manifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    manifest
        .users
        .iter()
        .map(|u| {
            let path = if u.path.is_absolute() { u.path.clone() } else { base.join(&u.path) };
            parse_log(File::open(&path)?, &u.id)
        })
        .collect()
}

/// Package name to integer label. Indices are the byte-wise lexicographic
/// ranks of the distinct names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppVocabulary {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl AppVocabulary {
    pub fn from_names<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut names: Vec<String> = names.into_iter().map(Into::into).collect();
        names.sort_unstable();
        names.dedup();
        if names.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Ok(AppVocabulary { names, index })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn encode(&self, package: &str) -> Option<usize> {
        self.index.get(package).copied()
    }

    pub fn decode(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

pub fn build_vocabulary(logs: &[EventLog]) -> Result<AppVocabulary> {
    AppVocabulary::from_names(logs.iter().flat_map(|l| l.events.iter().map(|e| e.package.as_str())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Global,
    Local,
    PerDay,
}

impl Scope {
    pub const ALL: [Scope; 3] = [Scope::Global, Scope::Local, Scope::PerDay];

    pub fn name(self) -> &'static str {
        match self {
            Scope::Global => "global",
            Scope::Local => "local",
            Scope::PerDay => "perday",
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "global" => Ok(Scope::Global),
            "local" => Ok(Scope::Local),
            "perday" => Ok(Scope::PerDay),
            _ => Err(Error::Param(format!("unknown encoding `{s}` (global, local, perday)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Owner {
    Dataset,
    User(String),
    UserDay(String, NaiveDate),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTable {
    pub scope: Scope,
    pub owner: Owner,
    pub values: Vec<f64>,
    /// No event fell in scope; `values` is all zeros.
    pub empty: bool,
}

impl FrequencyTable {
    pub fn get(&self, app: usize) -> f64 {
        self.values[app]
    }

    /// Writes `app,index,frequency` rows with nine fractional digits.
    pub fn write_csv<W: Write>(&self, vocab: &AppVocabulary, mut w: W) -> Result<()> {
        if vocab.len() != self.values.len() {
            return Err(Error::Param("vocabulary and table sizes differ".into()));
        }
        writeln!(w, "app,index,frequency")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{},{:.9}", vocab.names[i], i, v)?;
        }
        Ok(())
    }

    /// Reads a precomputed table written by [`FrequencyTable::write_csv`]
    /// (or any file of that shape). Indices must cover `0..n` exactly once.
    pub fn read_csv<R: Read>(reader: R, scope: Scope, owner: Owner) -> Result<(AppVocabulary, Self)> {
        let mut rows: BTreeMap<usize, (String, f64)> = BTreeMap::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (line_no == 1 && line.starts_with("app,")) {
                continue;
            }
            let err = |msg: &str| Error::Parse { line: line_no, msg: msg.to_string() };
            // package names may not contain commas, so split from the right
            let mut parts = line.rsplitn(3, ',');
            let freq = parts.next().ok_or_else(|| err("missing frequency"))?;
            let index = parts.next().ok_or_else(|| err("missing index"))?;
            let app = parts.next().ok_or_else(|| err("missing app"))?;
            let freq: f64 = freq.trim().parse().map_err(|_| err("bad frequency"))?;
            let index: usize = index.trim().parse().map_err(|_| err("bad index"))?;
            if !(0.0..=1.0).contains(&freq) {
                return Err(err("frequency outside [0,1]"));
            }
            if rows.insert(index, (app.trim().to_string(), freq)).is_some() {
                return Err(err("duplicate index"));
            }
        }
        if rows.keys().enumerate().any(|(i, &k)| i != k) {
            return Err(Error::Format("table indices are not 0..n".into()));
        }
        let names: Vec<String> = rows.values().map(|(n, _)| n.clone()).collect();
        let vocab = AppVocabulary::from_names(names.iter().cloned())?;
        if vocab.names != names {
            return Err(Error::Format("table indices are not the lexicographic ranks".into()));
        }
        let values: Vec<f64> = rows.values().map(|(_, f)| *f).collect();
        let empty = values.iter().all(|&v| v == 0.0);
        Ok((vocab, FrequencyTable { scope, owner, values, empty }))
    }
}

/// Normalized frequency table over `events`.
pub fn table_from_events<'a, I>(events: I, vocab: &AppVocabulary, scope: Scope, owner: Owner) -> Result<FrequencyTable>
where
    I: IntoIterator<Item = &'a AppEvent>,
{
    let mut counts = vec![0u64; vocab.len()];
    let mut total = 0u64;
    for e in events {
        let i = vocab.encode(&e.package).ok_or_else(|| Error::UnknownApp(e.package.clone()))?;
        counts[i] += 1;
        total += 1;
    }
    let values = if total == 0 {
        vec![0.0; vocab.len()]
    } else {
        counts.iter().map(|&c| c as f64 / total as f64).collect()
    };
    Ok(FrequencyTable { scope, owner, values, empty: total == 0 })
}

pub fn compute_frequencies(
    logs: &[EventLog],
    vocab: &AppVocabulary,
    scope: Scope,
    owner: Owner,
) -> Result<FrequencyTable> {
    let find = |user: &str| {
        logs.iter()
            .find(|l| l.user_id == user)
            .ok_or_else(|| Error::Config(format!("no log for user `{user}`")))
    };
    match (&scope, &owner) {
        (Scope::Global, Owner::Dataset) => {
            table_from_events(logs.iter().flat_map(|l| l.events.iter()), vocab, scope, owner)
        }
        (Scope::Local, Owner::User(user)) => {
            let log = find(user)?;
            table_from_events(&log.events, vocab, scope, owner.clone())
        }
        (Scope::PerDay, Owner::UserDay(user, day)) => {
            let log = find(user)?;
            let day = *day;
            table_from_events(log.events.iter().filter(|e| e.day() == day), vocab, scope, owner.clone())
        }
        _ => Err(Error::Config(format!("owner {owner:?} does not match scope {scope}"))),
    }
}

/// Groups a sorted log by calendar date. Days without events do not appear.
pub fn split_days(log: &EventLog) -> Vec<(NaiveDate, &[AppEvent])> {
    log.events
        .chunk_by(|a, b| a.day() == b.day())
        .map(|chunk| (chunk[0].day(), chunk))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn ts(s: &str) -> NaiveDateTime {
        parse_timestamp(s).unwrap()
    }

    fn log(user: &str, rows: &[(&str, &str)]) -> EventLog {
        let events = rows.iter().map(|(t, p)| AppEvent::new(ts(t), *p).unwrap()).collect();
        EventLog::new(user, events)
    }

    #[test]
    fn parses_one_line() {
        let l = parse_log("2012-01-02T08:01:30,com.facebook.katana\n".as_bytes(), "u").unwrap();
        assert_eq!(l.events.len(), 1);
        assert_eq!(l.events[0].timestamp, ts("2012-01-02T08:01"));
        assert_eq!(l.events[0].package, "com.facebook.katana");
    }

    #[test]
    fn resorts_out_of_order_lines() {
        let text = "2012-01-02T09:00:00,b\n2012-01-02T08:00:00,a\n";
        let l = parse_log(text.as_bytes(), "u").unwrap();
        assert_eq!(l.events[0].package, "a");
        assert_eq!(l.events[1].package, "b");
    }

    #[test]
    fn keeps_duplicate_events() {
        let text = "2012-01-02T09:00:01,a\n2012-01-02T09:00:40,a\n";
        assert_eq!(parse_log(text.as_bytes(), "u").unwrap().len(), 2);
    }

    #[test]
    fn rejects_invalid_datetime_with_line_number() {
        match parse_log("2012-13-40T99:99,x\n".as_bytes(), "u") {
            Err(Error::Parse { line: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match parse_log("2012-01-02T08:00,a\nnot a line\n".as_bytes(), "u") {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_stream_is_an_error() {
        assert!(matches!(parse_log("".as_bytes(), "u"), Err(Error::EmptyLog(_))));
        assert!(matches!(parse_log("\n\n".as_bytes(), "u"), Err(Error::EmptyLog(_))));
    }

    #[test]
    fn vocabulary_is_lexicographic() {
        let l = log("u", &[("2012-01-02T08:00", "b.app"), ("2012-01-02T08:01", "a.app"), ("2012-01-02T08:02", "a.app")]);
        let v = build_vocabulary(&[l]).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.encode("a.app"), Some(0));
        assert_eq!(v.encode("b.app"), Some(1));
        assert_eq!(v.decode(1), Some("b.app"));
    }

    #[test]
    fn vocabulary_is_bytewise_not_locale_aware() {
        let v = AppVocabulary::from_names(["b", "B", "a", "_x"]).unwrap();
        assert_eq!(v.names(), &["B", "_x", "a", "b"]);
    }

    #[test]
    fn singleton_and_empty_vocabulary() {
        let l = log("u", &[("2012-01-02T08:00", "only")]);
        let v = build_vocabulary(&[l]).unwrap();
        assert_eq!((v.len(), v.encode("only")), (1, Some(0)));
        let empty = EventLog::new("u", vec![]);
        assert!(matches!(build_vocabulary(&[empty]), Err(Error::EmptyVocabulary)));
    }

    #[test]
    fn global_normalization() {
        let l = log("u", &[
            ("2012-01-02T08:00", "a"),
            ("2012-01-02T08:01", "a"),
            ("2012-01-02T08:02", "a"),
            ("2012-01-02T08:03", "b"),
        ]);
        let logs = [l];
        let v = build_vocabulary(&logs).unwrap();
        let t = compute_frequencies(&logs, &v, Scope::Global, Owner::Dataset).unwrap();
        assert_eq!(t.values, vec![0.75, 0.25]);
    }

    #[test]
    fn ties_and_absent_apps() {
        let u1 = log("u1", &[("2012-01-02T08:00", "a"), ("2012-01-02T08:01", "a"), ("2012-01-02T08:02", "b"), ("2012-01-02T08:03", "b")]);
        let u2 = log("u2", &[("2012-01-02T08:00", "c")]);
        let logs = [u1, u2];
        let v = build_vocabulary(&logs).unwrap();
        let t = compute_frequencies(&logs, &v, Scope::Local, Owner::User("u1".into())).unwrap();
        assert_eq!(t.values, vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn perday_on_inactive_day_is_flagged_empty() {
        let u = log("u", &[("2012-01-02T08:00", "a")]);
        let logs = [u];
        let v = build_vocabulary(&logs).unwrap();
        let day = NaiveDate::from_ymd_opt(2012, 1, 3).unwrap();
        let t = compute_frequencies(&logs, &v, Scope::PerDay, Owner::UserDay("u".into(), day)).unwrap();
        assert!(t.empty);
        assert_eq!(t.values, vec![0.0]);
    }

    #[test]
    fn mismatched_owner_is_rejected() {
        let logs = [log("u", &[("2012-01-02T08:00", "a")])];
        let v = build_vocabulary(&logs).unwrap();
        assert!(compute_frequencies(&logs, &v, Scope::Global, Owner::User("u".into())).is_err());
        assert!(compute_frequencies(&logs, &v, Scope::Local, Owner::User("nobody".into())).is_err());
    }

    #[test]
    fn split_days_partitions_by_date() {
        let l = log("u", &[
            ("2012-01-02T10:00", "a"),
            ("2012-01-02T23:59", "a"),
            ("2012-01-03T00:00", "b"),
            ("2012-01-05T12:00", "c"),
        ]);
        let days = split_days(&l);
        let dates: Vec<String> = days.iter().map(|(d, _)| d.to_string()).collect();
        assert_eq!(dates, ["2012-01-02", "2012-01-03", "2012-01-05"]);
        assert_eq!(days[0].1.len(), 2);
        assert_eq!(days[1].1.len(), 1);

        let one = log("u", &[("2012-01-02T01:00", "a"), ("2012-01-02T02:00", "b")]);
        assert_eq!(split_days(&one).len(), 1);
    }

    #[test]
    fn table_csv_has_nine_fractional_digits() {
        let v = AppVocabulary::from_names(["a", "b", "c"]).unwrap();
        let t = FrequencyTable { scope: Scope::Global, owner: Owner::Dataset, values: vec![0.5, 0.25, 0.25], empty: false };
        let mut out = Vec::new();
        t.write_csv(&v, &mut out).unwrap();
        assert_eq!(String::from_utf8(out.clone()).unwrap(), "app,index,frequency\na,0,0.500000000\nb,1,0.250000000\nc,2,0.250000000\n");
        let (v2, t2) = FrequencyTable::read_csv(out.as_slice(), Scope::Global, Owner::Dataset).unwrap();
        assert_eq!(v2, v);
        assert_eq!(t2.values, t.values);
    }

    #[test]
    fn log_csv_round_trips() {
        let l = log("u", &[("2012-01-02T10:00", "a"), ("2012-01-03T00:00", "b:proc")]);
        let mut out = Vec::new();
        l.write_csv(&mut out).unwrap();
        assert_eq!(parse_log(out.as_slice(), "u").unwrap(), l);
    }
}
