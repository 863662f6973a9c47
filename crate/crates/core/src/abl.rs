//! The abductive learning loop and the final judgement classifier.
//!
//! Perception is first fitted on the labeled glyphs. Each round then reads
//! the unlabeled equations, asks the reasoner to revise the readings into
//! ones the knowledge base and the surviving operations accept, and
//! retrains on `CE(labeled) + lambda * CE(revised)`. Equations the reasoner
//! abstains on are left out of retraining.

use std::fmt;
use std::str::FromStr;

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::abduction::{
    confidence_order, revise_with, seed_state, AbductionError, EditBudget, HypothesisState, Outcome,
};
use crate::dataset::{Dataset, EquationSample};
use crate::grammar::parse_expression;
use crate::kb::KnowledgeBase;
use crate::llm::{self_feedback_loop, Backend, LoopError, LoopOptions, LoopState, MockBackend};
use crate::perception::{Batch, Embedding, PerceptionError, PerceptionModel, PseudoLabel, DEFAULT_HIDDEN, DEFAULT_LR};
use crate::symbol::Symbol;

/// Which reasoner revises pseudo-labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReasonerKind {
    /// Direct calls to the exact search.
    #[default]
    Oracle,
    /// The prompt loop against a backend that answers with the exact search.
    Mock,
    /// The prompt loop against a chat endpoint.
    Live,
}

impl fmt::Display for ReasonerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReasonerKind::Oracle => "oracle",
            ReasonerKind::Mock => "mock",
            ReasonerKind::Live => "live",
        })
    }
}

impl FromStr for ReasonerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(ReasonerKind::Oracle),
            "mock" => Ok(ReasonerKind::Mock),
            "live" => Ok(ReasonerKind::Live),
            other => Err(format!("unknown reasoner {other:?}; expected oracle, mock or live")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    pub rounds: usize,
    pub lambda_unlabel: f64,
    pub reasoner: ReasonerKind,
    pub edit_budget: EditBudget,
    /// Abstain when the best revision lowers the reading's log score by
    /// more than this many nats.
    pub max_revision_cost: Option<f64>,
    /// Gradient steps on labeled glyphs before the first round.
    pub pretrain_steps: usize,
    pub steps_per_round: usize,
    pub lr: f64,
    pub hidden: usize,
    pub model_seed: u64,
    pub judge_seed: u64,
    pub judge_steps: usize,
    pub judge_lr: f64,
    pub max_iterations: usize,
    pub gated: bool,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            rounds: 3,
            lambda_unlabel: 1.0,
            reasoner: ReasonerKind::Oracle,
            edit_budget: EditBudget::Proportional,
            max_revision_cost: Some(DEFAULT_MAX_REVISION_COST),
            pretrain_steps: 150,
            steps_per_round: 100,
            lr: DEFAULT_LR,
            hidden: DEFAULT_HIDDEN,
            model_seed: 1,
            judge_seed: 2,
            judge_steps: 2000,
            judge_lr: 1.0,
            max_iterations: crate::llm::DEFAULT_MAX_ITERATIONS,
            gated: true,
        }
    }
}

/// Default abstention threshold in nats.
pub const DEFAULT_MAX_REVISION_COST: f64 = 2.0;

#[derive(Debug, thiserror::Error)]
pub enum AblError {
    #[error("rounds must be at least 1")]
    NoRounds,
    #[error("lambda_unlabel must be finite and non-negative, got {0}")]
    BadLambda(f64),
    #[error("labeled data has no glyph of class {0}")]
    MissingClass(Symbol),
    #[error("the live reasoner needs a chat backend")]
    NoBackend,
    #[error(transparent)]
    Abduction(#[from] AbductionError),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error("reasoner failed on unlabeled equation {index}: {source}")]
    Reasoner {
        index: usize,
        #[source]
        source: LoopError,
    },
}

/// Measurements after pretraining (round 0) and after each round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub round: usize,
    pub glyph_acc: f64,
    pub eqn_acc: f64,
    pub surviving_count: usize,
    pub mean_edits: f64,
    pub revised: usize,
    pub abstained: usize,
    /// Share of revisions equal to the hidden truth; evaluation only.
    pub revision_acc: Option<f64>,
}

pub const STATS_HEADER: &str = "round,glyph_acc,eqn_acc,surviving_count,mean_edits,revised,abstained";

impl RoundStats {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{:.6},{},{:.6},{},{}",
            self.round, self.glyph_acc, self.eqn_acc, self.surviving_count, self.mean_edits, self.revised, self.abstained
        )
    }
}

#[derive(Debug, Clone)]
pub struct AblReport {
    pub model: PerceptionModel,
    pub state: HypothesisState,
    pub stats: Vec<RoundStats>,
    /// Reasoner outcomes of the last round, aligned with the unlabeled set.
    pub outcomes: Vec<Outcome>,
    /// Prompt-loop transcripts of the last round, by unlabeled index.
    pub transcripts: Vec<(usize, LoopState)>,
}

/// Glyph- and sequence-level accuracy of argmax readings against the
/// truth attached to `samples`. Samples without truth are skipped.
pub fn reading_accuracy(model: &PerceptionModel, samples: &[EquationSample]) -> Result<(f64, f64), PerceptionError> {
    let known: Vec<&EquationSample> = samples.iter().filter(|s| s.truth_symbols.is_some()).collect();
    if known.is_empty() {
        return Ok((0.0, 0.0));
    }
    let owned: Vec<EquationSample> = known.iter().map(|s| (*s).clone()).collect();
    let pseudos = model.classify_many(&owned)?;
    let (mut glyphs, mut glyphs_ok, mut eqns_ok) = (0usize, 0usize, 0usize);
    for (p, s) in pseudos.iter().zip(&known) {
        let truth = s.truth_symbols.as_ref().expect("filtered");
        glyphs += truth.len();
        glyphs_ok += p.argmax_symbols().iter().zip(truth).filter(|(a, b)| a == b).count();
        eqns_ok += usize::from(p.argmax_symbols() == truth.as_slice());
    }
    Ok((glyphs_ok as f64 / glyphs as f64, eqns_ok as f64 / known.len() as f64))
}

fn labeled_batch(dataset: &Dataset) -> Result<Batch, AblError> {
    let pairs: Vec<_> = dataset.labeled.iter().filter_map(|s| s.labeled_glyphs()).flatten().collect();
    for s in Symbol::ALL {
        if !pairs.iter().any(|(_, t)| *t == s) {
            return Err(AblError::MissingClass(s));
        }
    }
    Ok(Batch::new(pairs))
}

fn labeled_facts(dataset: &Dataset) -> Vec<(Vec<Symbol>, bool)> {
    dataset
        .labeled
        .iter()
        .filter_map(|s| Some((s.truth_symbols.clone()?, s.veracity?)))
        .collect()
}

fn validate(config: &LoopConfig) -> Result<(), AblError> {
    if config.rounds == 0 {
        return Err(AblError::NoRounds);
    }
    if !(config.lambda_unlabel.is_finite() && config.lambda_unlabel >= 0.0) {
        return Err(AblError::BadLambda(config.lambda_unlabel));
    }
    Ok(())
}

fn train(model: &mut PerceptionModel, parts: &[(&Batch, f64)], steps: usize, lr: f64) -> Result<(), PerceptionError> {
    for _ in 0..steps {
        model.train_step_weighted(parts, lr)?;
    }
    Ok(())
}

fn stats_for(
    round: usize,
    model: &PerceptionModel,
    eval: &[EquationSample],
    state: &HypothesisState,
    outcomes: &[Outcome],
    dataset: &Dataset,
) -> Result<RoundStats, PerceptionError> {
    let (glyph_acc, eqn_acc) = reading_accuracy(model, eval)?;
    let revised: Vec<(usize, &crate::abduction::RevisionResult)> =
        outcomes.iter().enumerate().filter_map(|(i, o)| Some((i, o.revision()?))).collect();
    let mean_edits = if revised.is_empty() {
        0.0
    } else {
        revised.iter().map(|(_, r)| r.edits as f64).sum::<f64>() / revised.len() as f64
    };
    let key = dataset.answer_key();
    let revision_acc = (!revised.is_empty() && key.len() == outcomes.len()).then(|| {
        revised.iter().filter(|(i, r)| key[*i].symbols == r.revised_symbols).count() as f64 / revised.len() as f64
    });
    Ok(RoundStats {
        round,
        glyph_acc,
        eqn_acc,
        surviving_count: state.len(),
        mean_edits,
        revised: revised.len(),
        abstained: outcomes.len() - revised.len(),
        revision_acc,
    })
}

/// Revises every pseudo-label with the configured reasoner, most
/// confident first, promoting accepted revisions to facts.
fn reason(
    pseudos: &[PseudoLabel],
    kb: &KnowledgeBase,
    mut state: HypothesisState,
    config: &LoopConfig,
    backend: Option<&dyn Backend>,
) -> Result<(HypothesisState, Vec<Outcome>, Vec<(usize, LoopState)>), AblError> {
    let mut outcomes: Vec<Option<Outcome>> = vec![None; pseudos.len()];
    let mut transcripts = Vec::new();
    for i in confidence_order(pseudos) {
        let pseudo = &pseudos[i];
        let budget = config.edit_budget.for_len(pseudo.len());
        let revision = match config.reasoner {
            ReasonerKind::Oracle => {
                let opts = crate::abduction::ReviseOptions {
                    max_cost: config.max_revision_cost,
                    ..crate::abduction::ReviseOptions::with_budget(budget)
                };
                revise_with(pseudo, &state, &opts).map_err(|e| e.to_string())
            }
            ReasonerKind::Mock | ReasonerKind::Live => {
                let opts = LoopOptions {
                    max_iterations: config.max_iterations,
                    gated: config.gated,
                    budget: Some(budget),
                    ..LoopOptions::default()
                };
                let mock;
                let backend: &dyn Backend = match config.reasoner {
                    ReasonerKind::Mock => {
                        mock = MockBackend::new(&state, budget).with_pseudo(pseudo);
                        &mock
                    }
                    _ => backend.ok_or(AblError::NoBackend)?,
                };
                let out = self_feedback_loop(pseudo, kb, backend, Some(&state), &opts)
                    .map_err(|source| AblError::Reasoner { index: i, source })?;
                transcripts.push((i, out.state));
                out.result.ok_or_else(|| "prompt loop exhausted".to_string()).and_then(|r| {
                    let drop = pseudo.log_score(pseudo.argmax_symbols()) - r.log_score;
                    match config.max_revision_cost {
                        Some(max) if drop > max => Err(format!("revision costs {drop:.3} nats")),
                        _ => Ok(r),
                    }
                })
            }
        };
        let outcome = match revision {
            Ok(r) => match parse_expression(&r.revised_symbols) {
                Ok(eq) if state.explains(&eq) => {
                    state = state.filter_parsed(&eq, true);
                    Outcome::Revised(r)
                }
                // faithful mode can accept what no surviving table explains
                _ => Outcome::Abstained {
                    reason: "revision not explained by the surviving operations".to_string(),
                },
            },
            Err(reason) => Outcome::Abstained { reason },
        };
        outcomes[i] = Some(outcome);
    }
    transcripts.sort_by_key(|(i, _)| *i);
    let outcomes = outcomes.into_iter().map(|o| o.expect("every index visited")).collect();
    Ok((state, outcomes, transcripts))
}

/// Runs the loop with the oracle or mock reasoner.
pub fn run_abl(
    dataset: &Dataset,
    kb: &KnowledgeBase,
    config: &LoopConfig,
    eval: &[EquationSample],
) -> Result<AblReport, AblError> {
    run_abl_with(dataset, kb, config, eval, None)
}

/// As [`run_abl`], with a chat backend for the live reasoner.
pub fn run_abl_with(
    dataset: &Dataset,
    kb: &KnowledgeBase,
    config: &LoopConfig,
    eval: &[EquationSample],
    backend: Option<&dyn Backend>,
) -> Result<AblReport, AblError> {
    validate(config)?;
    if config.reasoner == ReasonerKind::Live && backend.is_none() {
        return Err(AblError::NoBackend);
    }
    let labeled = labeled_batch(dataset)?;
    let facts = labeled_facts(dataset);
    let mut state = seed_state(kb, &facts)?;
    // prompts show exemplars; labeled equations serve when the KB has none
    let with_exemplars;
    let kb = if kb.exemplars().is_empty() {
        with_exemplars = kb
            .clone()
            .with_exemplars(facts.iter().map(|(s, v)| (s.as_slice(), *v)))
            .expect("labeled equations parse");
        &with_exemplars
    } else {
        kb
    };
    let mut model = PerceptionModel::new(config.hidden, config.model_seed);
    train(&mut model, &[(&labeled, 1.0)], config.pretrain_steps, config.lr)?;

    let mut stats = vec![stats_for(0, &model, eval, &state, &[], dataset)?];
    let mut outcomes = Vec::new();
    let mut transcripts = Vec::new();
    for round in 1..=config.rounds {
        let pseudos = if dataset.unlabeled.is_empty() {
            Vec::new()
        } else {
            model.classify_many(&dataset.unlabeled)?
        };
        let (next, round_outcomes, round_transcripts) = reason(&pseudos, kb, state, config, backend)?;
        state = next;

        let revised: Vec<_> = dataset
            .unlabeled
            .iter()
            .zip(&round_outcomes)
            .filter_map(|(s, o)| Some(s.glyphs.iter().zip(o.revision()?.revised_symbols.iter().copied())))
            .flatten()
            .collect();
        let revised = Batch::new(revised);
        train(
            &mut model,
            &[(&labeled, 1.0), (&revised, config.lambda_unlabel)],
            config.steps_per_round,
            config.lr,
        )?;
        stats.push(stats_for(round, &model, eval, &state, &round_outcomes, dataset)?);
        outcomes = round_outcomes;
        transcripts = round_transcripts;
    }
    Ok(AblReport {
        model,
        state,
        stats,
        outcomes,
        transcripts,
    })
}

/// Perception trained on labeled glyphs alone with the same seeds and the
/// same number of gradient steps as [`run_abl`].
pub fn run_baseline(
    dataset: &Dataset,
    config: &LoopConfig,
    eval: &[EquationSample],
) -> Result<(PerceptionModel, Vec<RoundStats>), AblError> {
    validate(config)?;
    let labeled = labeled_batch(dataset)?;
    let mut model = PerceptionModel::new(config.hidden, config.model_seed);
    let empty = HypothesisState::empty();
    let mut stats = Vec::with_capacity(config.rounds + 1);
    train(&mut model, &[(&labeled, 1.0)], config.pretrain_steps, config.lr)?;
    stats.push(stats_for(0, &model, eval, &empty, &[], dataset)?);
    for round in 1..=config.rounds {
        train(&mut model, &[(&labeled, 1.0)], config.steps_per_round, config.lr)?;
        stats.push(stats_for(round, &model, eval, &empty, &[], dataset)?);
    }
    Ok((model, stats))
}

/// True iff every surviving table accepts `symbols`.
pub fn level_under(state: &HypothesisState, symbols: &[Symbol]) -> bool {
    match parse_expression(symbols) {
        Ok(eq) => !state.is_empty() && state.tables().all(|t| eq.holds_under(t)),
        Err(_) => false,
    }
}

/// Training pairs for the judgement classifier.
///
/// With `outcomes`, a revised sample is levelled by its revision and an
/// abstained one is left out; otherwise the argmax reading is used.
pub fn build_judgement_set(
    model: &PerceptionModel,
    state: &HypothesisState,
    samples: &[EquationSample],
    outcomes: Option<&[Outcome]>,
) -> Result<Vec<(Embedding, bool)>, PerceptionError> {
    let mut out = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let level = match outcomes.map(|o| &o[i]) {
            Some(Outcome::Abstained { .. }) => continue,
            Some(Outcome::Revised(r)) => level_under(state, &r.revised_symbols),
            None => level_under(state, model.classify_sequence(s)?.argmax_symbols()),
        };
        out.push((model.embed(s)?, level));
    }
    Ok(out)
}

/// Logistic classifier over equation embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgementModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum JudgeError {
    #[error("judgement set has only {0} examples")]
    SingleClass(bool),
    #[error("judgement set is empty")]
    Empty,
    #[error("embeddings have different widths")]
    Ragged,
    #[error("training diverged")]
    NonFinite,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl JudgementModel {
    pub fn logit(&self, e: &Embedding) -> f64 {
        self.bias + self.weights.iter().zip(&e.values).map(|(w, x)| w * x).sum::<f64>()
    }

    /// Score in `[0, 1]` and the level `score >= threshold`.
    pub fn judge(&self, e: &Embedding) -> (bool, f64) {
        let score = sigmoid(self.logit(e));
        (score >= self.threshold, score)
    }
}

/// Full-batch gradient descent on the mean logistic loss, starting from
/// small seeded weights.
pub fn train_judge(pairs: &[(Embedding, bool)], steps: usize, lr: f64, seed: u64) -> Result<JudgementModel, JudgeError> {
    let first = pairs.first().ok_or(JudgeError::Empty)?;
    let width = first.0.width();
    if pairs.iter().any(|(e, _)| e.width() != width) {
        return Err(JudgeError::Ragged);
    }
    let positives = pairs.iter().filter(|p| p.1).count();
    if positives == 0 || positives == pairs.len() {
        return Err(JudgeError::SingleClass(positives > 0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w: Array1<f64> = (0..width).map(|_| rng.gen_range(-0.01..0.01)).collect();
    let mut b = 0.0;
    let x = ndarray::Array2::from_shape_fn((pairs.len(), width), |(i, j)| pairs[i].0.values[j]);
    let y: Array1<f64> = pairs.iter().map(|p| if p.1 { 1.0 } else { 0.0 }).collect();
    let n = pairs.len() as f64;
    for _ in 0..steps {
        let z = x.dot(&w) + b;
        let residual = z.mapv(sigmoid) - &y;
        let gw = x.t().dot(&residual) / n;
        let gb = residual.sum() / n;
        w.scaled_add(-lr, &gw);
        b -= lr * gb;
    }
    if !(w.iter().all(|v| v.is_finite()) && b.is_finite()) {
        return Err(JudgeError::NonFinite);
    }
    Ok(JudgementModel {
        weights: w.to_vec(),
        bias: b,
        threshold: 0.5,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abduction::standard_only;
    use crate::symbol::symbols_from_str;

    #[test]
    fn reasoner_names_round_trip() {
        for r in [ReasonerKind::Oracle, ReasonerKind::Mock, ReasonerKind::Live] {
            assert_eq!(r.to_string().parse::<ReasonerKind>().unwrap(), r);
        }
        assert!("gpt".parse::<ReasonerKind>().is_err());
    }

    #[test]
    fn levels() {
        let state = standard_only();
        assert!(level_under(&state, &symbols_from_str("1+1=10").unwrap()));
        assert!(!level_under(&state, &symbols_from_str("1+1=11").unwrap()));
        assert!(!level_under(&state, &symbols_from_str("1+=11").unwrap()));
    }

    #[test]
    fn separable_judge() {
        let pairs: Vec<(Embedding, bool)> = (0..40)
            .map(|i| {
                let t = i as f64 / 40.0;
                let label = i % 2 == 0;
                let x = if label { 0.2 + t * 0.1 } else { -0.2 - t * 0.1 };
                (Embedding { values: vec![x, t] }, label)
            })
            .collect();
        let m = train_judge(&pairs, 5000, 1.0, 7).unwrap();
        assert!(pairs.iter().all(|(e, l)| m.judge(e).0 == *l));
        assert_eq!(m, train_judge(&pairs, 5000, 1.0, 7).unwrap());
    }

    #[test]
    fn judge_threshold_inclusive() {
        let m = JudgementModel {
            weights: vec![0.0],
            bias: 0.0,
            threshold: 0.5,
        };
        assert_eq!(m.judge(&Embedding { values: vec![3.0] }), (true, 0.5));
        let single = vec![(Embedding { values: vec![1.0] }, true)];
        assert_eq!(train_judge(&single, 10, 1.0, 0), Err(JudgeError::SingleClass(true)));
    }
}
