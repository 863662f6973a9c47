//! Seeded generation of labeled and unlabeled equation datasets, and their
//! on-disk form (`manifest.jsonl` plus `glyphs.bin`).

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::glyph::{render_glyph_with, GlyphImage, GlyphPool, GlyphStyle, GLYPH_PIXELS};
use crate::grammar::{eval_equation, BitString, ParsedEquation};
use crate::symbol::{symbols_from_str, symbols_to_string, Symbol};
use crate::table::{make_standard_table, OperationTable};

/// Shortest legal equation, `a+b=c`.
pub const MIN_EQUATION_LENGTH: usize = 5;

/// Parameters of [`generate_dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    /// Inclusive range of total symbol counts, operators included.
    pub min_length: usize,
    pub max_length: usize,
    pub per_length: usize,
    pub positive_fraction: f64,
    pub labeled_fraction: f64,
    pub hidden_table: OperationTable,
    pub style: GlyphStyle,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            min_length: 5,
            max_length: 10,
            per_length: 500,
            positive_fraction: 0.5,
            labeled_fraction: 0.2,
            hidden_table: make_standard_table(),
            style: GlyphStyle::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenError {
    #[error("no equation of total length {0} exists under the hidden table")]
    InfeasibleLength(usize),
    #[error("length range {min}..={max} is invalid (minimum legal length is {MIN_EQUATION_LENGTH})")]
    InvalidLengths { min: usize, max: usize },
    #[error("{name} must lie in [0, 1], got {value}")]
    InvalidFraction { name: &'static str, value: f64 },
    #[error("glyph pool has no image for {0}")]
    EmptyPoolClass(Symbol),
}

/// One equation as seen by a learner.
#[derive(Debug, Clone, PartialEq)]
pub struct EquationSample {
    pub glyphs: Vec<GlyphImage>,
    pub truth_symbols: Option<Vec<Symbol>>,
    pub veracity: Option<bool>,
}

impl EquationSample {
    pub fn len(&self) -> usize {
        self.glyphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.glyphs.is_empty()
    }

    /// Glyphs paired with their true symbols, if known.
    pub fn labeled_glyphs(&self) -> Option<impl Iterator<Item = (&GlyphImage, Symbol)>> {
        self.truth_symbols
            .as_ref()
            .map(|t| self.glyphs.iter().zip(t.iter().copied()))
    }
}

/// Ground truth of an unlabeled sample, held back from learners.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub symbols: Vec<Symbol>,
    pub veracity: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub labeled: Vec<EquationSample>,
    pub unlabeled: Vec<EquationSample>,
    pub seed: u64,
    hidden_table: OperationTable,
    answer_key: Vec<Answer>,
}

impl Dataset {
    /// The generating rule. Not part of what learners receive.
    pub fn hidden_table(&self) -> OperationTable {
        self.hidden_table
    }

    /// True symbols and veracity of each unlabeled sample, index-aligned
    /// with `unlabeled`. For evaluation only.
    pub fn answer_key(&self) -> &[Answer] {
        &self.answer_key
    }

    pub fn len(&self) -> usize {
        self.labeled.len() + self.unlabeled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A dataset with no unlabeled part, e.g. a test set.
    pub fn labeled_only(labeled: Vec<EquationSample>, seed: u64, hidden_table: OperationTable) -> Self {
        Dataset {
            labeled,
            unlabeled: Vec::new(),
            seed,
            hidden_table,
            answer_key: Vec::new(),
        }
    }

    /// Every sample with its truth attached, labeled first.
    pub fn revealed(&self) -> Vec<EquationSample> {
        let mut out = self.labeled.clone();
        out.extend(self.unlabeled.iter().zip(&self.answer_key).map(|(s, a)| EquationSample {
            glyphs: s.glyphs.clone(),
            truth_symbols: Some(a.symbols.clone()),
            veracity: Some(a.veracity),
        }));
        out
    }
}

fn random_operand(len: usize, rng: &mut impl Rng) -> BitString {
    let bits = (0..len)
        .map(|i| if i == 0 && len > 1 { 1 } else { rng.gen_range(0..=1u8) })
        .collect();
    BitString::from_bits(bits).expect("nonempty operand")
}

const SAMPLE_ATTEMPTS: usize = 20_000;
/// Longest length for which infeasibility is confirmed by enumeration.
const MAX_ENUMERATED_LENGTH: usize = 18;

/// Every legal operand of exactly `len` digits.
fn all_operands(len: usize) -> Vec<BitString> {
    if len == 1 {
        return vec![BitString::from_u64(0), BitString::from_u64(1)];
    }
    let lo = 1u64 << (len - 1);
    (lo..lo << 1).map(BitString::from_u64).collect()
}

fn enumerate_true_equations(length: usize, table: OperationTable) -> Vec<ParsedEquation> {
    let mut out = Vec::new();
    for lx in 1..=length - 4 {
        for ly in 1..=length - 3 - lx {
            let lz = length - 2 - lx - ly;
            for x in all_operands(lx) {
                for y in all_operands(ly) {
                    let z = eval_equation(&x, &y, table);
                    if z.len() == lz {
                        out.push(ParsedEquation { x: x.clone(), y, z });
                    }
                }
            }
        }
    }
    out
}

/// Draws a true equation of the given total length, by rejection sampling
/// over operand lengths and falling back to enumeration.
fn sample_true_equation(length: usize, table: OperationTable, rng: &mut impl Rng) -> Result<ParsedEquation, GenError> {
    for _ in 0..SAMPLE_ATTEMPTS {
        let lx = rng.gen_range(1..=length - 4);
        let ly = rng.gen_range(1..=length - 3 - lx);
        let lz = length - 2 - lx - ly;
        let x = random_operand(lx, rng);
        let y = random_operand(ly, rng);
        let z = eval_equation(&x, &y, table);
        if z.len() == lz {
            return Ok(ParsedEquation { x, y, z });
        }
    }
    if length <= MAX_ENUMERATED_LENGTH {
        let all = enumerate_true_equations(length, table);
        if !all.is_empty() {
            let pick = rng.gen_range(0..all.len());
            return Ok(all[pick].clone());
        }
    }
    Err(GenError::InfeasibleLength(length))
}

/// Corrupts `z` so the equation no longer holds, keeping its length and
/// legality: either flip one or two digits or resample the whole group.
fn corrupt(eq: &ParsedEquation, rng: &mut impl Rng) -> ParsedEquation {
    let truth = eq.z.bits();
    loop {
        let bits: Vec<u8> = if rng.gen_bool(0.5) {
            let mut b = truth.to_vec();
            let flips = if b.len() > 1 { rng.gen_range(1..=2) } else { 1 };
            for _ in 0..flips {
                let i = rng.gen_range(0..b.len());
                b[i] ^= 1;
            }
            b
        } else {
            random_operand(truth.len(), rng).bits().to_vec()
        };
        let z = BitString::from_bits(bits).expect("nonempty");
        if !z.has_illegal_leading_zero() && z.bits() != truth {
            return ParsedEquation {
                x: eq.x.clone(),
                y: eq.y.clone(),
                z,
            };
        }
    }
}

fn validate(config: &GenConfig) -> Result<(), GenError> {
    if config.min_length < MIN_EQUATION_LENGTH || config.max_length < config.min_length {
        return Err(GenError::InvalidLengths {
            min: config.min_length,
            max: config.max_length,
        });
    }
    for (name, value) in [
        ("positive_fraction", config.positive_fraction),
        ("labeled_fraction", config.labeled_fraction),
    ] {
        if !(0.0..=1.0).contains(&value) {
            return Err(GenError::InvalidFraction { name, value });
        }
    }
    Ok(())
}

/// Generates a dataset with synthetic glyphs. A pure function of
/// `(config, seed)`.
pub fn generate_dataset(config: &GenConfig, seed: u64) -> Result<Dataset, GenError> {
    generate_dataset_from(config, seed, None)
}

/// As [`generate_dataset`], drawing glyphs from `pool` when given instead
/// of rendering them.
pub fn generate_dataset_from(config: &GenConfig, seed: u64, pool: Option<&GlyphPool>) -> Result<Dataset, GenError> {
    validate(config)?;
    if let Some(pool) = pool {
        if let Some(s) = Symbol::ALL.iter().find(|s| pool.len(**s) == 0) {
            return Err(GenError::EmptyPoolClass(*s));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let table = config.hidden_table;

    let mut records: Vec<(Vec<Symbol>, bool)> = Vec::new();
    for length in config.min_length..=config.max_length {
        let positives = (config.per_length as f64 * config.positive_fraction).round() as usize;
        for k in 0..config.per_length {
            let eq = sample_true_equation(length, table, &mut rng)?;
            let veracity = k < positives;
            let eq = if veracity { eq } else { corrupt(&eq, &mut rng) };
            debug_assert_eq!(eq.symbol_len(), length);
            records.push((eq.to_symbols(), veracity));
        }
    }
    records.shuffle(&mut rng);

    let n_labeled = (config.labeled_fraction * records.len() as f64).round() as usize;
    let mut labeled = Vec::with_capacity(n_labeled);
    let mut unlabeled = Vec::with_capacity(records.len() - n_labeled);
    let mut answer_key = Vec::with_capacity(records.len() - n_labeled);
    for (n, (symbols, veracity)) in records.into_iter().enumerate() {
        let glyphs = symbols
            .iter()
            .map(|&s| match pool {
                Some(pool) => pool.sample(s, &mut rng).expect("pool checked").clone(),
                None => render_glyph_with(s, rng.gen(), &config.style),
            })
            .collect();
        if n < n_labeled {
            labeled.push(EquationSample {
                glyphs,
                truth_symbols: Some(symbols),
                veracity: Some(veracity),
            });
        } else {
            unlabeled.push(EquationSample {
                glyphs,
                truth_symbols: None,
                veracity: None,
            });
            answer_key.push(Answer { symbols, veracity });
        }
    }
    Ok(Dataset {
        labeled,
        unlabeled,
        seed,
        hidden_table: table,
        answer_key,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Labeled,
    Unlabeled,
}

/// One line of `manifest.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: usize,
    pub length: usize,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub veracity: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbols: Option<String>,
    /// Byte offset of each glyph's 784-byte block in `glyphs.bin`.
    pub glyph_offsets: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AnswerRecord {
    id: usize,
    symbols: String,
    veracity: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Meta {
    seed: u64,
    labeled: usize,
    unlabeled: usize,
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const GLYPHS_FILE: &str = "glyphs.bin";
/// Generator-private truth for unlabeled samples.
pub const ANSWERS_FILE: &str = "answers.jsonl";
pub const META_FILE: &str = "meta.json";

#[derive(Debug, thiserror::Error)]
pub enum DatasetIoError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file} line {line}: {message}")]
    Malformed { file: String, line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetIoError + '_ {
    move |source| DatasetIoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `manifest.jsonl`, `glyphs.bin`, `answers.jsonl` and `meta.json`
/// into `dir`. The hidden table is never written.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<(), DatasetIoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let glyphs_path = dir.join(GLYPHS_FILE);
    let answers_path = dir.join(ANSWERS_FILE);
    let mut manifest = BufWriter::new(fs::File::create(&manifest_path).map_err(io_err(&manifest_path))?);
    let mut glyphs = BufWriter::new(fs::File::create(&glyphs_path).map_err(io_err(&glyphs_path))?);
    let mut answers = BufWriter::new(fs::File::create(&answers_path).map_err(io_err(&answers_path))?);

    let mut offset = 0u64;
    let samples = dataset
        .labeled
        .iter()
        .map(|s| (Split::Labeled, s))
        .chain(dataset.unlabeled.iter().map(|s| (Split::Unlabeled, s)));
    for (id, (split, sample)) in samples.enumerate() {
        let mut glyph_offsets = Vec::with_capacity(sample.len());
        for g in &sample.glyphs {
            glyph_offsets.push(offset);
            glyphs.write_all(&g.to_bytes()).map_err(io_err(&glyphs_path))?;
            offset += GLYPH_PIXELS as u64;
        }
        let record = ManifestRecord {
            id,
            length: sample.len(),
            split,
            veracity: sample.veracity,
            symbols: sample.truth_symbols.as_deref().map(symbols_to_string),
            glyph_offsets,
        };
        let line = serde_json::to_string(&record).expect("manifest record serializes");
        writeln!(manifest, "{line}").map_err(io_err(&manifest_path))?;
        if split == Split::Unlabeled {
            let answer = &dataset.answer_key[id - dataset.labeled.len()];
            let rec = AnswerRecord {
                id,
                symbols: symbols_to_string(&answer.symbols),
                veracity: answer.veracity,
            };
            writeln!(answers, "{}", serde_json::to_string(&rec).expect("answer serializes"))
                .map_err(io_err(&answers_path))?;
        }
    }
    manifest.flush().map_err(io_err(&manifest_path))?;
    glyphs.flush().map_err(io_err(&glyphs_path))?;
    answers.flush().map_err(io_err(&answers_path))?;

    let meta_path = dir.join(META_FILE);
    let meta = Meta {
        seed: dataset.seed,
        labeled: dataset.labeled.len(),
        unlabeled: dataset.unlabeled.len(),
    };
    fs::write(&meta_path, serde_json::to_string_pretty(&meta).expect("meta serializes")).map_err(io_err(&meta_path))?;
    Ok(())
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, DatasetIoError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| DatasetIoError::Malformed {
            file: path.display().to_string(),
            line: n + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Reads a dataset written by [`write_dataset`]. The hidden table is
/// unknown to readers and comes back as the standard table placeholder;
/// the answer key is loaded when `answers.jsonl` is present.
pub fn read_dataset(dir: &Path) -> Result<Dataset, DatasetIoError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let records: Vec<ManifestRecord> = read_jsonl(&manifest_path)?;
    let glyphs_path = dir.join(GLYPHS_FILE);
    let blob = fs::read(&glyphs_path).map_err(io_err(&glyphs_path))?;
    let malformed = |line: usize, message: String| DatasetIoError::Malformed {
        file: manifest_path.display().to_string(),
        line,
        message,
    };

    let mut labeled = Vec::new();
    let mut unlabeled = Vec::new();
    let mut unlabeled_ids = Vec::new();
    for (n, rec) in records.iter().enumerate() {
        if rec.glyph_offsets.len() != rec.length {
            return Err(malformed(n + 1, "glyph count differs from length".into()));
        }
        let glyphs = rec
            .glyph_offsets
            .iter()
            .map(|&o| {
                let start = o as usize;
                blob.get(start..start + GLYPH_PIXELS)
                    .ok_or_else(|| malformed(n + 1, format!("glyph offset {o} out of range")))
                    .map(|b| GlyphImage::from_bytes(b).expect("block has 784 bytes"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let truth_symbols = match &rec.symbols {
            Some(s) => Some(symbols_from_str(s).map_err(|e| malformed(n + 1, e.to_string()))?),
            None => None,
        };
        if truth_symbols.as_ref().is_some_and(|t| t.len() != rec.length) {
            return Err(malformed(n + 1, "symbol string length differs from length".into()));
        }
        let sample = EquationSample {
            glyphs,
            truth_symbols,
            veracity: rec.veracity,
        };
        match rec.split {
            Split::Labeled => labeled.push(sample),
            Split::Unlabeled => {
                unlabeled.push(sample);
                unlabeled_ids.push(rec.id);
            }
        }
    }

    let answers_path = dir.join(ANSWERS_FILE);
    let answer_key = if answers_path.exists() {
        let answers: Vec<AnswerRecord> = read_jsonl(&answers_path)?;
        let by_id: std::collections::HashMap<usize, &AnswerRecord> = answers.iter().map(|a| (a.id, a)).collect();
        unlabeled_ids
            .iter()
            .filter_map(|id| by_id.get(id))
            .map(|a| {
                Ok(Answer {
                    symbols: symbols_from_str(&a.symbols).map_err(|e| DatasetIoError::Malformed {
                        file: answers_path.display().to_string(),
                        line: a.id,
                        message: e.to_string(),
                    })?,
                    veracity: a.veracity,
                })
            })
            .collect::<Result<Vec<_>, DatasetIoError>>()?
    } else {
        Vec::new()
    };

    let meta_path = dir.join(META_FILE);
    let seed = match fs::read_to_string(&meta_path) {
        Ok(text) => serde_json::from_str::<Meta>(&text).map(|m| m.seed).unwrap_or(0),
        Err(_) => 0,
    };
    Ok(Dataset {
        labeled,
        unlabeled,
        seed,
        hidden_table: make_standard_table(),
        answer_key,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_expression;
    use crate::table::make_xor_table;

    fn small(per_length: usize) -> GenConfig {
        GenConfig {
            min_length: 5,
            max_length: 8,
            per_length,
            style: GlyphStyle::clean(),
            ..GenConfig::default()
        }
    }

    #[test]
    fn lengths_and_truth_hold() {
        let ds = generate_dataset(&small(20), 3).unwrap();
        assert_eq!(ds.len(), 80);
        for s in ds.revealed() {
            let truth = s.truth_symbols.as_ref().unwrap();
            assert_eq!(truth.len(), s.len());
            assert!((5..=8).contains(&s.len()));
            let eq = parse_expression(truth).unwrap();
            assert_eq!(eq.holds_under(ds.hidden_table()), s.veracity.unwrap(), "{eq}");
        }
    }

    #[test]
    fn labeled_fraction_is_rounded() {
        let ds = generate_dataset(&small(25), 1).unwrap();
        assert_eq!(ds.labeled.len(), (0.2f64 * 100.0).round() as usize);
        assert!(ds.unlabeled.len() >= ds.labeled.len());
        assert!(ds.unlabeled.iter().all(|s| s.truth_symbols.is_none() && s.veracity.is_none()));
    }

    #[test]
    fn rejects_bad_config() {
        let mut c = small(1);
        c.min_length = 4;
        assert!(matches!(generate_dataset(&c, 0), Err(GenError::InvalidLengths { .. })));
        let mut c = small(1);
        c.labeled_fraction = 1.5;
        assert!(matches!(generate_dataset(&c, 0), Err(GenError::InvalidFraction { .. })));
    }

    #[test]
    fn infeasible_length_reported() {
        // Always summing to 1 with a carry makes z one digit longer than
        // the longest operand, so z can never have a single digit.
        let grow = OperationTable::from_fn(|_| crate::table::AdderOutput { s: 1, c_out: 1 });
        let c = GenConfig {
            min_length: 5,
            max_length: 5,
            per_length: 1,
            hidden_table: grow,
            ..small(1)
        };
        assert_eq!(generate_dataset(&c, 0), Err(GenError::InfeasibleLength(5)));
    }

    #[test]
    fn xor_table_lengths() {
        // Carry-free results never outgrow the longer operand, so six
        // symbols (no split of four digits works) are unreachable.
        let c = GenConfig {
            hidden_table: make_xor_table(),
            min_length: 6,
            max_length: 6,
            ..small(5)
        };
        assert_eq!(generate_dataset(&c, 11), Err(GenError::InfeasibleLength(6)));
        let c = GenConfig {
            min_length: 7,
            max_length: 7,
            ..c
        };
        let ds = generate_dataset(&c, 11).unwrap();
        assert_eq!(ds.len(), 5);
    }

    #[test]
    fn disk_round_trip() {
        let ds = generate_dataset(&small(4), 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back.labeled, ds.labeled);
        assert_eq!(back.unlabeled, ds.unlabeled);
        assert_eq!(back.answer_key(), ds.answer_key());
        assert_eq!(back.seed, 5);
    }
}
