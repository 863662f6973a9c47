//! Label-rate sweeps with per-length evaluation and report files.
//!
//! Each labeled fraction trains the abductive loop and the perception-only
//! baseline on the same data and seeds, then scores every test equation as
//! correct or incorrect. Three methods are reported:
//!
//! * `perception`: judgement classifier on the baseline model's embeddings,
//!   trained on the labeled equations;
//! * `chatabl`: judgement classifier on the loop's final model, trained on
//!   labeled equations plus unlabeled ones levelled by the reasoner;
//! * `chatabl-rule`: the loop's argmax reading checked against the
//!   surviving operations, without a learned classifier.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::abduction::HypothesisState;
use crate::abl::{
    build_judgement_set, level_under, run_abl_with, run_baseline, train_judge, AblError, JudgeError, JudgementModel,
    LoopConfig, ReasonerKind, STATS_HEADER,
};
use crate::dataset::{generate_dataset, write_dataset, DatasetIoError, EquationSample, GenConfig, GenError};
use crate::glyph::GlyphStyle;
use crate::kb::KnowledgeBase;
use crate::llm::Backend;
use crate::metrics::{auc, compute_metrics, Metrics, MetricsError};
use crate::perception::{PerceptionError, PerceptionModel};
use crate::table::{make_standard_table, OperationTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub train_min_length: usize,
    pub train_max_length: usize,
    pub test_min_length: usize,
    pub test_max_length: usize,
    pub per_length: usize,
    pub test_per_length: usize,
    pub labeled_fractions: Vec<f64>,
    pub positive_fraction: f64,
    pub hidden_table: OperationTable,
    pub style: GlyphStyle,
    pub data_seed: u64,
    pub test_seed: u64,
    /// Test only on lengths longer than any training equation.
    pub disjoint_lengths: bool,
    /// Also write the generated train and test sets.
    pub write_data: bool,
    #[serde(rename = "loop")]
    pub loop_config: LoopConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            train_min_length: 5,
            train_max_length: 10,
            test_min_length: 5,
            test_max_length: 26,
            per_length: 500,
            test_per_length: 500,
            labeled_fractions: vec![0.2],
            positive_fraction: 0.5,
            hidden_table: make_standard_table(),
            style: GlyphStyle::default(),
            data_seed: 11,
            test_seed: 12,
            disjoint_lengths: false,
            write_data: true,
            loop_config: LoopConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot generate data: {0}")]
    Generate(#[from] GenError),
    #[error(transparent)]
    Abl(#[from] AblError),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error("judgement classifier: {0}")]
    Judge(#[from] JudgeError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    DatasetIo(#[from] DatasetIoError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.to_string()));
        if self.train_min_length < crate::dataset::MIN_EQUATION_LENGTH
            || self.test_min_length < crate::dataset::MIN_EQUATION_LENGTH
        {
            return bad("equations have at least 5 symbols");
        }
        if self.train_min_length > self.train_max_length || self.test_min_length > self.test_max_length {
            return bad("length ranges must be nonempty");
        }
        if self.disjoint_lengths && self.test_max_length <= self.train_max_length {
            return bad("disjoint lengths need test lengths above the training range");
        }
        if self.labeled_fractions.is_empty() {
            return bad("no labeled fraction given");
        }
        if self.labeled_fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return bad("labeled fractions must lie in (0, 1]");
        }
        if self.per_length == 0 || self.test_per_length == 0 {
            return bad("per-length counts must be positive");
        }
        Ok(())
    }

    /// Test lengths actually used, after the disjoint option.
    pub fn test_lengths(&self) -> std::ops::RangeInclusive<usize> {
        let min = if self.disjoint_lengths {
            self.test_min_length.max(self.train_max_length + 1)
        } else {
            self.test_min_length
        };
        min..=self.test_max_length
    }

    fn train_gen(&self, labeled_fraction: f64) -> GenConfig {
        GenConfig {
            min_length: self.train_min_length,
            max_length: self.train_max_length,
            per_length: self.per_length,
            positive_fraction: self.positive_fraction,
            labeled_fraction,
            hidden_table: self.hidden_table,
            style: self.style,
        }
    }
}

/// One test length at a time, each with its own seed; lengths the hidden
/// operation cannot produce are skipped. All samples carry their truth.
pub fn generate_test_set(config: &ExperimentConfig) -> Result<Vec<EquationSample>, ExperimentError> {
    let mut out = Vec::new();
    for length in config.test_lengths() {
        let gen = GenConfig {
            min_length: length,
            max_length: length,
            per_length: config.test_per_length,
            positive_fraction: config.positive_fraction,
            labeled_fraction: 1.0,
            hidden_table: config.hidden_table,
            style: config.style,
        };
        match generate_dataset(&gen, config.test_seed.wrapping_add(length as u64)) {
            Ok(d) => out.extend(d.labeled),
            Err(GenError::InfeasibleLength(_)) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

/// Per-sample prediction of one method.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub method: String,
    pub levels: Vec<bool>,
    pub scores: Vec<f64>,
    pub exact: Vec<bool>,
}

fn judge_predictions(
    method: &str,
    model: &PerceptionModel,
    judge: &JudgementModel,
    test: &[EquationSample],
) -> Result<Predictions, PerceptionError> {
    let pseudos = model.classify_many(test)?;
    let mut p = Predictions {
        method: method.to_string(),
        levels: Vec::with_capacity(test.len()),
        scores: Vec::with_capacity(test.len()),
        exact: Vec::with_capacity(test.len()),
    };
    for (s, pseudo) in test.iter().zip(&pseudos) {
        let (level, score) = judge.judge(&model.embed(s)?);
        p.levels.push(level);
        p.scores.push(score);
        p.exact.push(s.truth_symbols.as_deref() == Some(pseudo.argmax_symbols()));
    }
    Ok(p)
}

fn rule_predictions(
    model: &PerceptionModel,
    state: &HypothesisState,
    test: &[EquationSample],
) -> Result<Predictions, PerceptionError> {
    let pseudos = model.classify_many(test)?;
    let mut p = Predictions {
        method: "chatabl-rule".to_string(),
        levels: Vec::with_capacity(test.len()),
        scores: Vec::with_capacity(test.len()),
        exact: Vec::with_capacity(test.len()),
    };
    for (s, pseudo) in test.iter().zip(&pseudos) {
        let reading = pseudo.argmax_symbols();
        let score = match crate::grammar::parse_expression(reading) {
            Ok(eq) if !state.is_empty() => {
                state.tables().filter(|t| eq.holds_under(*t)).count() as f64 / state.len() as f64
            }
            _ => 0.0,
        };
        p.levels.push(level_under(state, reading));
        p.scores.push(score);
        p.exact.push(s.truth_symbols.as_deref() == Some(reading));
    }
    Ok(p)
}

/// Metrics over the chosen indices; AUC is left out when only one class
/// is present.
pub fn score(p: &Predictions, truth: &[bool], idx: &[usize]) -> Result<Metrics, MetricsError> {
    let levels: Vec<bool> = idx.iter().map(|&i| p.levels[i]).collect();
    let t: Vec<bool> = idx.iter().map(|&i| truth[i]).collect();
    let scores: Vec<f64> = idx.iter().map(|&i| p.scores[i]).collect();
    let mut m = compute_metrics(&levels, &t)?;
    m.auc = match auc(&scores, &t) {
        Ok(a) => Some(a),
        Err(MetricsError::SingleClass(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(m)
}

pub const METRICS_HEADER: &str = "method,labeled_frac,accuracy,precision,recall,f1,auc";
pub const PER_LENGTH_HEADER: &str = "method,labeled_frac,length,n,accuracy,precision,recall,f1,auc,eqn_acc";

fn fmt_auc(a: Option<f64>) -> String {
    a.map_or(String::new(), |v| format!("{v:.6}"))
}

struct Csv {
    path: PathBuf,
    out: BufWriter<File>,
}

impl Csv {
    fn create(path: PathBuf, header: &str) -> Result<Self, ExperimentError> {
        let file = File::create(&path).map_err(|source| ExperimentError::Io {
            path: path.clone(),
            source,
        })?;
        let mut csv = Csv {
            path,
            out: BufWriter::new(file),
        };
        csv.line(header)?;
        Ok(csv)
    }

    /// Writes and flushes, so rows survive a later failure.
    fn line(&mut self, text: &str) -> Result<(), ExperimentError> {
        writeln!(self.out, "{text}")
            .and_then(|_| self.out.flush())
            .map_err(|source| ExperimentError::Io {
                path: self.path.clone(),
                source,
            })
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), ExperimentError> {
    fs::write(path, contents).map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Summary of one labeled fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct FractionResult {
    pub labeled_fraction: f64,
    pub rows: Vec<(String, Metrics)>,
    pub abl_stats: Vec<crate::abl::RoundStats>,
    pub baseline_stats: Vec<crate::abl::RoundStats>,
}

/// Runs every labeled fraction and writes the reports under `out`.
///
/// Layout: `config.json`, `metrics.csv`, `per_length.csv`, optional
/// `test_data/`, and per fraction `frac-<f>/` holding both stats CSVs,
/// checkpoints, the hypothesis dump and prompt transcripts.
pub fn run_experiment(
    config: &ExperimentConfig,
    kb: &KnowledgeBase,
    out: &Path,
    backend: Option<&dyn Backend>,
) -> Result<Vec<FractionResult>, ExperimentError> {
    config.validate()?;
    fs::create_dir_all(out).map_err(|source| ExperimentError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    write_file(
        &out.join("config.json"),
        serde_json::to_string_pretty(config).expect("config serializes"),
    )?;
    let mut metrics_csv = Csv::create(out.join("metrics.csv"), METRICS_HEADER)?;
    let mut per_length_csv = Csv::create(out.join("per_length.csv"), PER_LENGTH_HEADER)?;

    let test = generate_test_set(config)?;
    if config.write_data {
        let test_set = crate::dataset::Dataset::labeled_only(test.clone(), config.test_seed, config.hidden_table);
        write_dataset(&test_set, &out.join("test_data"))?;
    }
    let truth: Vec<bool> = test.iter().map(|s| s.veracity.expect("test samples carry veracity")).collect();
    let lengths: Vec<usize> = config.test_lengths().collect();

    let mut results = Vec::new();
    for &frac in &config.labeled_fractions {
        let dir = out.join(format!("frac-{frac:.2}"));
        fs::create_dir_all(&dir).map_err(|source| ExperimentError::Io {
            path: dir.clone(),
            source,
        })?;
        let train = generate_dataset(&config.train_gen(frac), config.data_seed)?;
        if config.write_data {
            write_dataset(&train, &dir.join("train_data"))?;
        }
        let lc = &config.loop_config;

        let (base_model, base_stats) = run_baseline(&train, lc, &test)?;
        let base_pairs = labeled_pairs(&base_model, &train.labeled)?;
        let base_judge = train_judge(&base_pairs, lc.judge_steps, lc.judge_lr, lc.judge_seed)?;

        let report = run_abl_with(&train, kb, lc, &test, backend)?;
        let mut pairs = labeled_pairs(&report.model, &train.labeled)?;
        pairs.extend(build_judgement_set(&report.model, &report.state, &train.unlabeled, None)?);
        let judge = train_judge(&pairs, lc.judge_steps, lc.judge_lr, lc.judge_seed)?;

        let predictions = [
            judge_predictions("perception", &base_model, &base_judge, &test)?,
            judge_predictions("chatabl", &report.model, &judge, &test)?,
            rule_predictions(&report.model, &report.state, &test)?,
        ];

        let all: Vec<usize> = (0..test.len()).collect();
        let mut rows = Vec::new();
        for p in &predictions {
            let m = score(p, &truth, &all)?;
            metrics_csv.line(&format!(
                "{},{frac:.2},{:.6},{:.6},{:.6},{:.6},{}",
                p.method,
                m.accuracy,
                m.precision,
                m.recall,
                m.f1,
                fmt_auc(m.auc)
            ))?;
            for &len in &lengths {
                let idx: Vec<usize> = all.iter().copied().filter(|&i| test[i].len() == len).collect();
                if idx.is_empty() {
                    continue;
                }
                let m = score(p, &truth, &idx)?;
                let exact = idx.iter().filter(|&&i| p.exact[i]).count() as f64 / idx.len() as f64;
                per_length_csv.line(&format!(
                    "{},{frac:.2},{len},{},{:.6},{:.6},{:.6},{:.6},{},{exact:.6}",
                    p.method,
                    idx.len(),
                    m.accuracy,
                    m.precision,
                    m.recall,
                    m.f1,
                    fmt_auc(m.auc)
                ))?;
            }
            rows.push((p.method.clone(), m));
        }

        let stats_csv = |stats: &[crate::abl::RoundStats]| {
            let mut s = String::from(STATS_HEADER);
            s.push('\n');
            for r in stats {
                s.push_str(&r.csv_row());
                s.push('\n');
            }
            s
        };
        write_file(&dir.join("stats.csv"), stats_csv(&report.stats))?;
        write_file(&dir.join("baseline_stats.csv"), stats_csv(&base_stats))?;
        write_file(&dir.join("model.ckpt"), report.model.to_bytes())?;
        write_file(&dir.join("baseline.ckpt"), base_model.to_bytes())?;
        write_file(&dir.join("hypotheses.txt"), report.state.to_dump())?;
        write_file(
            &dir.join("judge.json"),
            serde_json::to_string_pretty(&judge).expect("judge serializes"),
        )?;
        if lc.reasoner != ReasonerKind::Oracle {
            let mut text = String::new();
            for (i, t) in &report.transcripts {
                let line = serde_json::json!({ "unlabeled_index": i, "loop": t });
                text.push_str(&line.to_string());
                text.push('\n');
            }
            write_file(&dir.join("transcripts.jsonl"), text)?;
        }

        results.push(FractionResult {
            labeled_fraction: frac,
            rows,
            abl_stats: report.stats,
            baseline_stats: base_stats,
        });
    }
    Ok(results)
}

fn labeled_pairs(
    model: &PerceptionModel,
    labeled: &[EquationSample],
) -> Result<Vec<(crate::perception::Embedding, bool)>, PerceptionError> {
    labeled
        .iter()
        .filter_map(|s| Some((s, s.veracity?)))
        .map(|(s, v)| Ok((model.embed(s)?, v)))
        .collect()
}
