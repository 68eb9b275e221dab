//! Loading, cleaning and temporal batching of labeled news records.
//!
//! Records flow through [`load_records`] → [`clean_normalize`] →
//! [`partition_batches`]; featurization lives in [`features`].

pub mod features;

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use chrono::NaiveDate;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub use features::{featurize, FeatureGroup, FeatureVector, Featurizer};

/// One news item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub title: String,
    pub subject: String,
    pub source: String,
    /// Binary protected attribute, the counterfactual flip target.
    pub protected: u8,
    pub date: NaiveDate,
    /// 0 = fake, 1 = true.
    pub label: u8,
}

/// Column names for each record role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schema {
    pub title: String,
    pub subject: String,
    pub source: String,
    pub date: String,
    pub label: String,
    /// When absent, a seeded Bernoulli(0.5) attribute is synthesized.
    #[serde(default)]
    pub protected: Option<String>,
    /// When absent, ids are `r<row number>`.
    #[serde(default)]
    pub id: Option<String>,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            title: "title".into(),
            subject: "subject".into(),
            source: "source".into(),
            date: "date".into(),
            label: "label".into(),
            protected: None,
            id: None,
        }
    }
}

impl Schema {
    fn required(&self) -> [(&'static str, &str); 5] {
        [
            ("title", &self.title),
            ("subject", &self.subject),
            ("source", &self.source),
            ("date", &self.date),
            ("label", &self.label),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (role, column) in self.required() {
            if column.trim().is_empty() {
                return Err(Error::config(format!("schema role `{role}` is unmapped")));
            }
        }
        Ok(())
    }
}

/// Why rows were excluded during loading and cleaning.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropCounts {
    pub missing_title: usize,
    pub unknown_label: usize,
    pub bad_date: usize,
    pub bad_protected: usize,
    pub empty_after_cleaning: usize,
}

impl DropCounts {
    pub fn total(&self) -> usize {
        self.missing_title + self.unknown_label + self.bad_date + self.bad_protected + self.empty_after_cleaning
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSet {
    pub records: Vec<Record>,
    pub dropped: DropCounts,
}

impl RecordSet {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dropped_count(&self) -> usize {
        self.dropped.total()
    }
}

/// Ordered partition of records into sequential batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSeries {
    pub batches: Vec<Vec<Record>>,
    /// Batches with index below this are never injected.
    pub clean_prefix: usize,
}

impl BatchSeries {
    pub fn k(&self) -> usize {
        self.batches.len()
    }

    pub fn with_clean_prefix(mut self, clean_prefix: usize) -> Result<Self> {
        if clean_prefix < 1 || clean_prefix > self.k() {
            return Err(Error::invalid(format!(
                "clean prefix {clean_prefix} outside [1, {}]",
                self.k()
            )));
        }
        self.clean_prefix = clean_prefix;
        Ok(self)
    }

    /// Records of the clean prefix, in temporal order.
    pub fn clean_records(&self) -> impl Iterator<Item = &Record> {
        self.batches[..self.clean_prefix].iter().flatten()
    }

    pub fn total_records(&self) -> usize {
        self.batches.iter().map(Vec::len).sum()
    }
}

/// Raw row as read from disk, before validation.
struct RawRow {
    id: Option<String>,
    title: Option<String>,
    subject: Option<String>,
    source: Option<String>,
    date: Option<String>,
    label: Option<String>,
    protected: Option<String>,
}

enum Format {
    Csv,
    JsonLines,
}

fn detect_format(path: &Path) -> Format {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("jsonl") || ext.eq_ignore_ascii_case("json") => Format::JsonLines,
        _ => Format::Csv,
    }
}

/// Load every parseable row of a CSV or JSON-lines file.
///
/// Rows with an empty title, a label other than `fake`/`true`, an unparseable
/// date or a non-binary protected value are excluded and counted. `seed`
/// drives the synthesized protected attribute when the schema maps none.
pub fn load_records(path: &Path, schema: &Schema, seed: u64) -> Result<RecordSet> {
    schema.validate()?;
    let rows = match detect_format(path) {
        Format::Csv => read_csv(path, schema)?,
        Format::JsonLines => read_json_lines(path, schema)?,
    };

    let mut protected_rng = rng::rng_from_seed(rng::stage_seed(seed, rng::Stage::Ingest));
    let mut dropped = DropCounts::default();
    let mut records = Vec::with_capacity(rows.len());
    for (row_index, row) in rows.into_iter().enumerate() {
        // Draw for every row so the synthesized attribute of a row does not
        // depend on whether earlier rows were dropped.
        let synthesized: u8 = u8::from(protected_rng.random_bool(0.5));

        let title = match row.title {
            Some(t) if !t.trim().is_empty() => t,
            _ => {
                dropped.missing_title += 1;
                continue;
            }
        };
        let Some(label) = row.label.as_deref().and_then(parse_label) else {
            dropped.unknown_label += 1;
            continue;
        };
        let Some(date) = row.date.as_deref().and_then(parse_date) else {
            dropped.bad_date += 1;
            continue;
        };
        let protected = match (&schema.protected, row.protected.as_deref()) {
            (None, _) => synthesized,
            (Some(_), Some(value)) => match parse_binary(value) {
                Some(p) => p,
                None => {
                    dropped.bad_protected += 1;
                    continue;
                }
            },
            (Some(_), None) => {
                dropped.bad_protected += 1;
                continue;
            }
        };
        let id = row
            .id
            .filter(|s| !s.trim().is_empty())
            .unwrap_or_else(|| format!("r{row_index}"));
        records.push(Record {
            id,
            title,
            subject: row.subject.unwrap_or_default().trim().to_string(),
            source: row.source.unwrap_or_default().trim().to_string(),
            protected,
            date,
            label,
        });
    }

    if records.is_empty() {
        return Err(Error::data(format!(
            "zero surviving rows in {} ({} dropped)",
            path.display(),
            dropped.total()
        )));
    }
    Ok(RecordSet { records, dropped })
}

fn read_csv(path: &Path, schema: &Schema) -> Result<Vec<RawRow>> {
    let file = File::open(path).map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(file);
    let headers = match reader.headers() {
        Ok(h) => h.clone(),
        // An empty file has no header row at all.
        Err(_) => return Ok(Vec::new()),
    };
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);
    let mut required = Vec::new();
    for (role, name) in schema.required() {
        match column(name) {
            Some(i) => required.push(i),
            None if headers.is_empty() => return Ok(Vec::new()),
            None => {
                return Err(Error::config(format!(
                    "schema maps `{role}` to column `{name}`, which is not in {}",
                    path.display()
                )))
            }
        }
    }
    let optional = |name: &Option<String>, role: &str| -> Result<Option<usize>> {
        match name {
            None => Ok(None),
            Some(n) => column(n)
                .map(Some)
                .ok_or_else(|| Error::config(format!("schema maps `{role}` to missing column `{n}`"))),
        }
    };
    let protected_col = optional(&schema.protected, "protected")?;
    let id_col = optional(&schema.id, "id")?;

    let mut rows = Vec::new();
    for result in reader.records() {
        let rec = result.map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        let get = |i: usize| rec.get(i).map(str::to_string);
        rows.push(RawRow {
            title: get(required[0]),
            subject: get(required[1]),
            source: get(required[2]),
            date: get(required[3]),
            label: get(required[4]),
            protected: protected_col.and_then(get),
            id: id_col.and_then(get),
        });
    }
    Ok(rows)
}

fn read_json_lines(path: &Path, schema: &Schema) -> Result<Vec<RawRow>> {
    let file = File::open(path).map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    let field = |obj: &serde_json::Map<String, serde_json::Value>, name: &str| {
        obj.get(name).and_then(|v| match v {
            serde_json::Value::String(s) => Some(s.clone()),
            serde_json::Value::Null => None,
            other => Some(other.to_string()),
        })
    };
    let mut rows = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| Error::data(format!("{} line {}: {e}", path.display(), n + 1)))?;
        let Some(obj) = value.as_object() else {
            return Err(Error::data(format!(
                "{} line {}: expected a JSON object",
                path.display(),
                n + 1
            )));
        };
        rows.push(RawRow {
            title: field(obj, &schema.title),
            subject: field(obj, &schema.subject),
            source: field(obj, &schema.source),
            date: field(obj, &schema.date),
            label: field(obj, &schema.label),
            protected: schema.protected.as_deref().and_then(|c| field(obj, c)),
            id: schema.id.as_deref().and_then(|c| field(obj, c)),
        });
    }
    Ok(rows)
}

fn parse_label(token: &str) -> Option<u8> {
    let t = token.trim();
    if t.eq_ignore_ascii_case("fake") {
        Some(0)
    } else if t.eq_ignore_ascii_case("true") {
        Some(1)
    } else {
        None
    }
}

fn parse_binary(token: &str) -> Option<u8> {
    match token.trim() {
        "0" => Some(0),
        "1" => Some(1),
        t if t.eq_ignore_ascii_case("false") => Some(0),
        t if t.eq_ignore_ascii_case("true") => Some(1),
        _ => None,
    }
}

const DATE_FORMATS: [&str; 5] = ["%Y-%m-%d", "%B %d, %Y", "%b %d, %Y", "%d-%b-%y", "%Y/%m/%d"];

pub fn parse_date(token: &str) -> Option<NaiveDate> {
    let t = token.trim();
    // Timestamps such as 2017-12-31T08:00:00 keep only their date part.
    let t = t.split('T').next().unwrap_or(t);
    DATE_FORMATS
        .iter()
        .find_map(|fmt| NaiveDate::parse_from_str(t, fmt).ok())
}

/// Lowercase, drop every character that is neither alphanumeric nor
/// whitespace, and collapse runs of whitespace to one space.
pub fn normalize_title(title: &str) -> String {
    let stripped: String = title
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect();
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Lower and upper date quantiles used for trimming.
pub const DATE_TRIM_QUANTILES: (f64, f64) = (0.01, 0.99);

/// Nearest-rank quantile on an already sorted slice.
fn nearest_rank<T: Copy>(sorted: &[T], q: f64) -> T {
    let idx = (q * (sorted.len() - 1) as f64).round() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

/// Normalize titles, drop records whose title becomes empty, and clip dates
/// to the [1%, 99%] quantile range. Idempotent.
pub fn clean_normalize(set: RecordSet) -> RecordSet {
    let RecordSet { records, mut dropped } = set;
    let mut cleaned: Vec<Record> = Vec::with_capacity(records.len());
    for mut r in records {
        r.title = normalize_title(&r.title);
        if r.title.is_empty() {
            dropped.empty_after_cleaning += 1;
            continue;
        }
        cleaned.push(r);
    }

    if !cleaned.is_empty() {
        let mut dates: Vec<NaiveDate> = cleaned.iter().map(|r| r.date).collect();
        dates.sort_unstable();
        let lo = nearest_rank(&dates, DATE_TRIM_QUANTILES.0);
        let hi = nearest_rank(&dates, DATE_TRIM_QUANTILES.1);
        for r in &mut cleaned {
            r.date = r.date.clamp(lo, hi);
        }
    }
    RecordSet {
        records: cleaned,
        dropped,
    }
}

/// Sort by (date, id) and split into `k` contiguous batches whose sizes
/// differ by at most one; the larger batches come last.
///
/// The clean prefix defaults to the first half of the batches.
pub fn partition_batches(records: Vec<Record>, k: usize) -> Result<BatchSeries> {
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 batches, got {k}")));
    }
    if k > records.len() {
        return Err(Error::invalid(format!(
            "cannot split {} records into {k} batches",
            records.len()
        )));
    }
    let mut records = records;
    records.sort_by(|a, b| a.date.cmp(&b.date).then_with(|| a.id.cmp(&b.id)));

    let n = records.len();
    let base = n / k;
    let larger = n % k;
    let mut batches = Vec::with_capacity(k);
    let mut iter = records.into_iter();
    for i in 0..k {
        let size = if i >= k - larger { base + 1 } else { base };
        batches.push(iter.by_ref().take(size).collect());
    }
    Ok(BatchSeries {
        batches,
        clean_prefix: (k / 2).max(1),
    })
}

/// Write records as JSON lines (debug dump of the cleaned set).
pub fn write_json_lines<W: std::io::Write>(mut out: W, records: &[Record]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
