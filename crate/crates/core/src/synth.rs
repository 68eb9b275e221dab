//! Seeded synthetic news corpus with a known clean generative process.
//!
//! Every record draws, in order: the label, a subject and source (both
//! mildly label-dependent), three cue words that each come from the label's
//! own cue vocabulary with probability 0.8, two topic words of the subject
//! (politics draws from a much broader vocabulary than the other subjects),
//! an optional sentiment word (positive words, which lean towards true items,
//! are the framing lexicon's source terms; negative ones come from a milder
//! vocabulary, so framed replacements are new to the clean corpus), two to
//! four neutral filler words, a date uniform
//! over 2016-2017, and an independent protected bit. Titles are shuffled
//! token sequences. The generator is the stand-in for the unpublished corpus.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bias::Lexicon;
use crate::error::{Error, Result};
use crate::rng::{self, StageRng};

/// Minimum records per batch.
pub const MIN_ROWS_PER_BATCH: usize = 20;
pub const CUE_ACCURACY: f64 = 0.8;

const SUBJECTS: [(&str, &[&str]); 6] = [
    ("business", &["market", "shares", "company", "trade", "bank"]),
    ("health", &["hospital", "vaccine", "doctors", "patients", "clinic"]),
    (
        "politics",
        &[
            "senate",
            "election",
            "campaign",
            "congress",
            "governor",
            "ballot",
            "lawmakers",
            "primary",
            "veto",
            "caucus",
            "mayor",
            "poll",
            "debate",
            "party",
            "voters",
            "cabinet",
            "speaker",
            "referendum",
            "district",
            "filibuster",
            "delegates",
            "statehouse",
            "incumbent",
            "nominee",
        ],
    ),
    ("science", &["research", "study", "space", "climate", "lab"]),
    ("sports", &["league", "coach", "season", "match", "team"]),
    ("world", &["embassy", "border", "minister", "summit", "treaty"]),
];
/// Subject weights given fake (first) or true (second) label.
const SUBJECT_WEIGHTS: [[f64; 6]; 2] = [
    [0.13, 0.13, 0.35, 0.13, 0.13, 0.13],
    [0.17, 0.17, 0.15, 0.17, 0.17, 0.17],
];
const SOURCES: [&str; 5] = ["blog", "daily", "public", "tabloid", "wire"];
const SOURCE_WEIGHTS: [[f64; 5]; 2] = [[0.3, 0.2, 0.1, 0.3, 0.1], [0.1, 0.2, 0.3, 0.1, 0.3]];
const FAKE_CUES: [&str; 10] = [
    "shocking",
    "secret",
    "exposed",
    "hoax",
    "bombshell",
    "leaked",
    "insane",
    "truth",
    "hidden",
    "outrage",
];
const TRUE_CUES: [&str; 10] = [
    "report",
    "official",
    "announced",
    "confirmed",
    "statement",
    "according",
    "data",
    "quarterly",
    "reuters",
    "briefing",
];
const FILLER: [&str; 16] = [
    "the", "a", "of", "in", "on", "after", "new", "says", "over", "with", "for", "week", "first", "year", "plan",
    "amid",
];
/// Negative wording of the clean corpus; disjoint from the framing lexicon.
const MILD_NEGATIVES: [&str; 10] = [
    "concern", "dispute", "delay", "warning", "cuts", "probe", "risk", "setback", "strain", "doubts",
];
const SENTIMENT_RATE: f64 = 0.6;
/// Probability that a sentiment word is positive, for fake / true items.
const POSITIVE_RATE: [f64; 2] = [0.35, 0.65];
const FIRST_DAY: (i32, u32, u32) = (2016, 1, 1);
const N_DAYS: i64 = 731;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub k: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthRow {
    pub id: String,
    pub title: String,
    pub subject: String,
    pub source: String,
    pub date: NaiveDate,
    /// 0 = fake, 1 = true.
    pub label: u8,
    pub protected: u8,
}

fn weighted(rng: &mut StageRng, weights: &[f64]) -> usize {
    let mut u: f64 = rng.random();
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn pick<'a>(rng: &mut StageRng, words: &[&'a str]) -> &'a str {
    words.choose(rng).expect("vocabulary is non-empty")
}

pub fn synthesize(cfg: &SynthConfig) -> Result<Vec<SynthRow>> {
    if cfg.k == 0 {
        return Err(Error::invalid("synthetic data needs at least one batch"));
    }
    if cfg.n < MIN_ROWS_PER_BATCH * cfg.k {
        return Err(Error::invalid(format!(
            "n = {} is below {} rows per batch for k = {}",
            cfg.n, MIN_ROWS_PER_BATCH, cfg.k
        )));
    }
    let lexicon = Lexicon::default();
    let positives: Vec<&str> = lexicon.pairs().iter().map(|(p, _)| p.as_str()).collect();
    let first = NaiveDate::from_ymd_opt(FIRST_DAY.0, FIRST_DAY.1, FIRST_DAY.2).expect("valid date");
    let mut rng = rng::rng_from_seed(cfg.seed);
    let width = cfg.n.to_string().len();

    let mut rows = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let label = u8::from(rng.random_bool(0.5));
        let l = usize::from(label);
        let (subject, topics) = SUBJECTS[weighted(&mut rng, &SUBJECT_WEIGHTS[l])];
        let source = SOURCES[weighted(&mut rng, &SOURCE_WEIGHTS[l])];

        let mut words: Vec<&str> = Vec::with_capacity(12);
        for _ in 0..3 {
            let own = rng.random_bool(CUE_ACCURACY);
            let fake_vocab = (label == 0) == own;
            words.push(pick(&mut rng, if fake_vocab { &FAKE_CUES } else { &TRUE_CUES }));
        }
        for _ in 0..2 {
            words.push(pick(&mut rng, topics));
        }
        if rng.random_bool(SENTIMENT_RATE) {
            let positive = rng.random_bool(POSITIVE_RATE[l]);
            if positive {
                words.push(pick(&mut rng, &positives));
            } else {
                words.push(pick(&mut rng, &MILD_NEGATIVES));
            }
        }
        let n_filler = rng.random_range(2..=4);
        for _ in 0..n_filler {
            words.push(pick(&mut rng, &FILLER));
        }
        words.shuffle(&mut rng);

        let date = first + chrono::Duration::days(rng.random_range(0..N_DAYS));
        let protected = u8::from(rng.random_bool(0.5));
        rows.push(SynthRow {
            id: format!("s{:0width$}", i + 1),
            title: words.join(" "),
            subject: subject.to_string(),
            source: source.to_string(),
            date,
            label,
            protected,
        });
    }
    Ok(rows)
}

/// Write the corpus as CSV with a commented header describing the process.
pub fn write_synthetic<W: Write>(out: W, cfg: &SynthConfig) -> Result<()> {
    let rows = synthesize(cfg)?;
    let mut out = out;
    writeln!(
        out,
        "# synthetic news corpus: n={} k={} seed={}",
        cfg.n, cfg.k, cfg.seed
    )?;
    writeln!(
        out,
        "# label ~ Bernoulli(0.5) (fake/true); subject and source weights depend on the label"
    )?;
    writeln!(
        out,
        "# title = 3 cue words (own-label vocabulary w.p. {CUE_ACCURACY}) + 2 subject topic words"
    )?;
    writeln!(
        out,
        "#   + sentiment word w.p. {SENTIMENT_RATE} (lexicon positive term w.p. {} fake / {} true, else a mild negative)",
        POSITIVE_RATE[0], POSITIVE_RATE[1]
    )?;
    writeln!(out, "#   + 2-4 filler words, shuffled")?;
    writeln!(
        out,
        "# date ~ uniform over 2016-01-01..2017-12-31; protected ~ Bernoulli(0.5), independent"
    )?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "title", "subject", "source", "date", "label", "protected"])?;
    for r in &rows {
        let date = r.date.format("%Y-%m-%d").to_string();
        let label = if r.label == 1 { "true" } else { "fake" };
        let protected = r.protected.to_string();
        w.write_record([
            r.id.as_str(),
            r.title.as_str(),
            r.subject.as_str(),
            r.source.as_str(),
            date.as_str(),
            label,
            protected.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn generate_synthetic(cfg: &SynthConfig, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_synthetic(&mut buf, cfg)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}
