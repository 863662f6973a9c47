//! Prompted reasoning through a chat model.
//!
//! Two prompts drive the exchange. The consistency prompt asks whether an
//! expression agrees with the rules and exemplars; the re-reasoning prompt
//! carries the failed verdict back as a penalty and asks for a correction.
//! [`self_feedback_loop`] alternates them until a correction is accepted or
//! the iteration cap is hit.

mod backend;

pub use backend::{
    cassette_digest, Backend, CassetteEntry, ChatError, ChatRequest, LiveBackend, MockBackend, RecordingBackend,
    ReplayBackend, RequestConfig, API_KEY_ENV, API_URL_ENV, DEFAULT_API_URL,
};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::abduction::{HypothesisState, RevisionResult};
use crate::kb::KnowledgeBase;
use crate::perception::PseudoLabel;
use crate::symbol::{symbols_from_str, symbols_to_string, Symbol};

pub const CDP_QUERY: &str =
    "Please determine whether the given expression is consistent with the rules base and the exemplar prompts ?";

pub const RDP_QUERY: &str = "Could you please correct the given expression and provide reasoning for your solution ? And what type of addition operation is likely being performed in this expression?";

/// Penalty threaded from a failed consistency check into the next query.
pub const DEFAULT_PENALTY: &str = "No, please continue reasoning";

pub const DEFAULT_EXEMPLARS: usize = 4;
pub const DEFAULT_MAX_ITERATIONS: usize = 5;

const ROLE_LINE: &str = "You are a reasoning expert.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        ChatMessage {
            role,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    Cdp,
    Rdp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub messages: Vec<ChatMessage>,
    pub kind: PromptKind,
    pub expression: String,
    pub penalty: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("expression is empty")]
    EmptyExpression,
    #[error("penalty text is empty")]
    EmptyPenalty,
}

fn render_system(kb: &KnowledgeBase, expression: &str, k: usize, kind: PromptKind) -> String {
    let mut out = String::new();
    out.push_str(ROLE_LINE);
    out.push('\n');
    match kind {
        PromptKind::Cdp => out.push_str(
            "Task: decide whether an expression over the symbols 0, 1, + and = is consistent with the rules and the exemplars below.\n",
        ),
        PromptKind::Rdp => out.push_str(
            "Task: correct the given expression so that it is consistent with the rules and the exemplars below, changing as few symbols as possible, and name the kind of addition it performs.\n",
        ),
    }
    out.push_str("\nRules:\n");
    out.push_str(&kb.render_rules_text());

    // foreign characters only matter for ranking, so they are dropped there
    let query: Vec<Symbol> = expression.chars().filter_map(Symbol::from_char).collect();
    let k = k.min(kb.exemplars().len());
    let exemplars = kb.select_exemplars(&query, k).expect("k is clamped to the exemplar count");
    if !exemplars.is_empty() {
        out.push_str("\nExemplars:\n");
        for e in exemplars {
            let label = if e.veracity { "consistent" } else { "inconsistent" };
            let _ = match &e.explanation {
                Some(why) => writeln!(out, "- {} : {} ({})", e.expr, label, why),
                None => writeln!(out, "- {} : {}", e.expr, label),
            };
        }
    }

    out.push_str("\nOutput format:\n");
    match kind {
        PromptKind::Cdp => out.push_str(
            "First line: VERDICT: CONSISTENT or VERDICT: INCONSISTENT\nThen one or more lines of reasoning.\n",
        ),
        PromptKind::Rdp => out.push_str(
            "First line: VERDICT: CONSISTENT or VERDICT: INCONSISTENT for the given expression\nCORRECTED: <the corrected expression>\nOPERATION: <the type of addition being performed>\nThen the reasoning for your solution.\n",
        ),
    }
    out
}

/// Consistency discrimination prompt for `expression`, showing the `k`
/// exemplars nearest to it.
pub fn build_cdp(kb: &KnowledgeBase, expression: &str, k: usize) -> Result<Prompt, PromptError> {
    if expression.is_empty() {
        return Err(PromptError::EmptyExpression);
    }
    let system = render_system(kb, expression, k, PromptKind::Cdp);
    let user = format!("{CDP_QUERY}\nExpression: {expression}");
    Ok(Prompt {
        messages: vec![ChatMessage::new(Role::System, system), ChatMessage::new(Role::User, user)],
        kind: PromptKind::Cdp,
        expression: expression.to_string(),
        penalty: None,
    })
}

/// Re-reasoning prompt: the penalty text comes first, then the correction
/// query.
pub fn build_rdp(kb: &KnowledgeBase, expression: &str, penalty: &str, k: usize) -> Result<Prompt, PromptError> {
    if expression.is_empty() {
        return Err(PromptError::EmptyExpression);
    }
    if penalty.trim().is_empty() {
        return Err(PromptError::EmptyPenalty);
    }
    let system = render_system(kb, expression, k, PromptKind::Rdp);
    let user = format!("{penalty}\n{RDP_QUERY}\nExpression: {expression}");
    Ok(Prompt {
        messages: vec![ChatMessage::new(Role::System, system), ChatMessage::new(Role::User, user)],
        kind: PromptKind::Rdp,
        expression: expression.to_string(),
        penalty: Some(penalty.to_string()),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub consistent: bool,
    pub reason: String,
    pub corrected_expression: Option<String>,
    pub operation_guess: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
pub enum ReplyError {
    #[error("reply has no VERDICT line")]
    MissingVerdict,
    #[error("unrecognised verdict {0:?}")]
    BadVerdict(String),
    #[error("corrected expression {0:?} uses symbols outside 0, 1, + and =")]
    ForeignCorrection(String),
}

/// Reads the line protocol:
///
/// ```text
/// VERDICT: CONSISTENT | VERDICT: INCONSISTENT
/// CORRECTED: <expr>        (optional)
/// OPERATION: <free text>   (optional)
/// ```
///
/// Leading blank lines are skipped; any other lines become the reason.
/// Whitespace inside a corrected expression is ignored.
pub fn parse_reply(text: &str, kind: PromptKind) -> Result<Verdict, ReplyError> {
    let mut lines = text.lines().map(str::trim).skip_while(|l| l.is_empty());
    let first = lines.next().ok_or(ReplyError::MissingVerdict)?;
    let value = first.strip_prefix("VERDICT:").ok_or(ReplyError::MissingVerdict)?.trim();
    let consistent = match value {
        "CONSISTENT" => true,
        "INCONSISTENT" => false,
        other => return Err(ReplyError::BadVerdict(other.to_string())),
    };
    let mut verdict = Verdict {
        consistent,
        reason: String::new(),
        corrected_expression: None,
        operation_guess: None,
    };
    let mut reason = Vec::new();
    for line in lines {
        if let (PromptKind::Rdp, Some(expr)) = (kind, line.strip_prefix("CORRECTED:")) {
            let expr: String = expr.chars().filter(|c| !c.is_whitespace()).collect();
            if symbols_from_str(&expr).is_err() {
                return Err(ReplyError::ForeignCorrection(expr));
            }
            verdict.corrected_expression = Some(expr);
        } else if let (PromptKind::Rdp, Some(op)) = (kind, line.strip_prefix("OPERATION:")) {
            verdict.operation_guess = Some(op.trim().to_string());
        } else if !line.is_empty() {
            reason.push(line);
        }
    }
    verdict.reason = reason.join("\n");
    Ok(verdict)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoopStatus {
    Running,
    Accepted,
    Exhausted,
}

/// One request and its reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub iteration: usize,
    pub prompt: Prompt,
    pub reply: String,
    pub verdict: Result<Verdict, ReplyError>,
    /// Why a consistent verdict was overruled locally, if it was.
    pub rejected: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopState {
    pub iteration: usize,
    pub history: Vec<Exchange>,
    pub status: LoopStatus,
}

impl LoopState {
    pub fn cdp_calls(&self) -> usize {
        self.history.iter().filter(|e| e.prompt.kind == PromptKind::Cdp).count()
    }

    pub fn rdp_calls(&self) -> usize {
        self.history.iter().filter(|e| e.prompt.kind == PromptKind::Rdp).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopOptions {
    pub max_iterations: usize,
    /// Verify accepted expressions locally instead of trusting the verdict.
    pub gated: bool,
    pub penalty: String,
    pub exemplars: usize,
    /// Maximum positions changed from the perceived reading, checked in
    /// gated mode.
    pub budget: Option<usize>,
    /// Extra attempts when a reply does not follow the line protocol.
    pub parse_retries: usize,
}

impl Default for LoopOptions {
    fn default() -> Self {
        LoopOptions {
            max_iterations: DEFAULT_MAX_ITERATIONS,
            gated: true,
            penalty: DEFAULT_PENALTY.to_string(),
            exemplars: DEFAULT_EXEMPLARS,
            budget: None,
            parse_retries: 2,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LoopError {
    #[error("max_iterations must be at least 1")]
    NoIterations,
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Chat(#[from] ChatError),
    #[error("reply still malformed after {attempts} attempts: {error}")]
    ParseFailure { attempts: usize, error: ReplyError, last_reply: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopOutcome {
    /// `None` when the loop ran out of iterations.
    pub result: Option<RevisionResult>,
    pub state: LoopState,
}

fn ask(
    backend: &dyn Backend,
    prompt: Prompt,
    iteration: usize,
    retries: usize,
    history: &mut Vec<Exchange>,
) -> Result<Verdict, LoopError> {
    let mut attempts = 0;
    loop {
        attempts += 1;
        let reply = backend.chat(&prompt)?;
        let verdict = parse_reply(&reply, prompt.kind);
        history.push(Exchange {
            iteration,
            prompt: prompt.clone(),
            reply: reply.clone(),
            verdict: verdict.clone(),
            rejected: None,
        });
        match verdict {
            Ok(v) => return Ok(v),
            Err(error) if attempts > retries => {
                return Err(LoopError::ParseFailure {
                    attempts,
                    error,
                    last_reply: reply,
                })
            }
            Err(_) => {}
        }
    }
}

fn hamming(a: &[Symbol], b: &[Symbol]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count() + a.len().abs_diff(b.len())
}

/// Local acceptance test used in gated mode. Returns why the expression
/// is rejected, if it is.
fn gate(
    expression: &str,
    perceived: &[Symbol],
    kb: &KnowledgeBase,
    state: Option<&HypothesisState>,
    budget: Option<usize>,
) -> Option<String> {
    if let Err(v) = kb.check_structural_str(expression) {
        return Some(format!("breaks {} rule(s) of the knowledge base", v.len()));
    }
    let symbols = symbols_from_str(expression).expect("structural check rejects foreign symbols");
    if symbols.len() != perceived.len() {
        return Some(format!("has {} symbols, {} were perceived", symbols.len(), perceived.len()));
    }
    if let Some(budget) = budget {
        let edits = hamming(&symbols, perceived);
        if edits > budget {
            return Some(format!("changes {edits} symbols, budget is {budget}"));
        }
    }
    if let Some(state) = state {
        let eq = crate::grammar::parse_expression(&symbols).expect("structural check implies a parse");
        if !state.explains(&eq) {
            return Some("no surviving operation explains it".to_string());
        }
    }
    None
}

/// Runs consistency and re-reasoning prompts in turn, starting from the
/// argmax reading of `pseudo`, until an expression is accepted or
/// `max_iterations` consistency checks have been spent.
///
/// Each iteration asks for a verdict on the current expression. If it is
/// accepted the loop ends; otherwise, unless this was the last iteration,
/// the penalty and correction query are sent and the corrected expression
/// becomes current. A reply without a correction leaves it unchanged.
pub fn self_feedback_loop(
    pseudo: &PseudoLabel,
    kb: &KnowledgeBase,
    backend: &dyn Backend,
    state: Option<&HypothesisState>,
    opts: &LoopOptions,
) -> Result<LoopOutcome, LoopError> {
    if opts.max_iterations == 0 {
        return Err(LoopError::NoIterations);
    }
    let perceived = pseudo.argmax_symbols();
    let mut current = symbols_to_string(perceived);
    let mut ls = LoopState {
        iteration: 0,
        history: Vec::new(),
        status: LoopStatus::Running,
    };
    let mut trace = vec![format!("perceived {current}")];

    for iteration in 1..=opts.max_iterations {
        ls.iteration = iteration;
        let cdp = build_cdp(kb, &current, opts.exemplars)?;
        let verdict = ask(backend, cdp, iteration, opts.parse_retries, &mut ls.history)?;
        let rejected = match (verdict.consistent, opts.gated) {
            (false, _) => None,
            (true, false) => None,
            (true, true) => gate(&current, perceived, kb, state, opts.budget),
        };
        if verdict.consistent && rejected.is_none() {
            trace.push(format!("iteration {iteration}: {current} judged consistent"));
            ls.status = LoopStatus::Accepted;
            let symbols = symbols_from_str(&current).ok();
            let result = match symbols {
                Some(symbols) => accepted_result(pseudo, state, symbols, trace),
                // faithful mode can accept text outside the alphabet
                None => {
                    ls.status = LoopStatus::Exhausted;
                    None
                }
            };
            return Ok(LoopOutcome { result, state: ls });
        }
        match rejected {
            Some(why) => {
                trace.push(format!("iteration {iteration}: {current} judged consistent but {why}"));
                ls.history.last_mut().expect("just pushed").rejected = Some(why);
            }
            None => trace.push(format!("iteration {iteration}: {current} judged inconsistent")),
        }
        if iteration == opts.max_iterations {
            break;
        }
        let rdp = build_rdp(kb, &current, &opts.penalty, opts.exemplars)?;
        let verdict = ask(backend, rdp, iteration, opts.parse_retries, &mut ls.history)?;
        match verdict.corrected_expression {
            Some(next) if !next.is_empty() => {
                let op = verdict.operation_guess.as_deref().unwrap_or("unspecified operation");
                trace.push(format!("iteration {iteration}: corrected to {next} ({op})"));
                current = next;
            }
            _ => trace.push(format!("iteration {iteration}: no correction offered")),
        }
    }
    ls.status = LoopStatus::Exhausted;
    Ok(LoopOutcome { result: None, state: ls })
}

fn accepted_result(
    pseudo: &PseudoLabel,
    state: Option<&HypothesisState>,
    symbols: Vec<Symbol>,
    trace: Vec<String>,
) -> Option<RevisionResult> {
    let perceived = pseudo.argmax_symbols();
    let log_score = if symbols.len() == perceived.len() {
        pseudo.log_score(&symbols)
    } else {
        f64::NEG_INFINITY
    };
    let supporting_tables = match (state, crate::grammar::parse_expression(&symbols)) {
        (Some(state), Ok(eq)) => state.supporting(&eq),
        _ => Vec::new(),
    };
    Some(RevisionResult {
        edits: hamming(&symbols, perceived),
        revised_symbols: symbols,
        supporting_tables,
        log_score,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abduction::{revise, standard_only};
    use crate::kb::{Rule, RuleKind};

    fn syms(s: &str) -> Vec<Symbol> {
        symbols_from_str(s).unwrap()
    }

    fn kb_with_exemplars() -> KnowledgeBase {
        KnowledgeBase::default()
            .with_exemplars([
                (syms("1+1=10").as_slice(), true),
                (syms("1+0=1").as_slice(), true),
                (syms("10+1=10").as_slice(), false),
            ])
            .unwrap()
    }

    #[test]
    fn cdp_layout() {
        let kb = kb_with_exemplars();
        let p = build_cdp(&kb, "1+1=11", 2).unwrap();
        assert_eq!(p.messages.len(), 2);
        assert_eq!(p.messages[0].role, Role::System);
        assert_eq!(p.messages[1].role, Role::User);
        assert!(p.messages[0].content.contains("reasoning expert"));
        assert!(p.messages[1].content.starts_with(CDP_QUERY));
        assert!(p.messages[1].content.ends_with("1+1=11"));
        assert_eq!(p.penalty, None);
        assert_eq!(p.messages[0].content.matches("\n- ").count(), 2);
        assert_eq!(build_cdp(&kb, "1+1=11", 2).unwrap(), p);
        assert_eq!(build_cdp(&kb, "", 2), Err(PromptError::EmptyExpression));
    }

    #[test]
    fn cdp_numbers_every_rule() {
        let rules = vec![
            Rule {
                kind: RuleKind::Alphabet,
                text: "a".into(),
            },
            Rule {
                kind: RuleKind::Operators,
                text: "b".into(),
            },
            Rule {
                kind: RuleKind::Segments,
                text: "c".into(),
            },
        ];
        let kb = KnowledgeBase::new(rules, Vec::new(), Vec::new()).unwrap();
        let p = build_cdp(&kb, "1+1=10", 2).unwrap();
        let sys = &p.messages[0].content;
        for line in ["1. a\n", "2. b\n", "3. c\n"] {
            assert!(sys.contains(line));
        }
        assert!(!sys.contains("4. "));
        assert!(!sys.contains("Exemplars"));
    }

    #[test]
    fn rdp_puts_penalty_before_query() {
        let kb = kb_with_exemplars();
        let p = build_rdp(&kb, "1+1=11", DEFAULT_PENALTY, 2).unwrap();
        let user = &p.messages[1].content;
        let pen = user.find(DEFAULT_PENALTY).unwrap();
        let q = user.find(RDP_QUERY).unwrap();
        assert!(pen < q);
        assert!(p.messages[0].content.contains("CORRECTED:"));
        assert!(p.messages[0].content.contains("reasoning"));
        assert_eq!(p.penalty.as_deref(), Some(DEFAULT_PENALTY));
        assert_eq!(build_rdp(&kb, "1+1=11", " ", 2), Err(PromptError::EmptyPenalty));
    }

    #[test]
    fn reply_grammar() {
        let v = parse_reply("VERDICT: CONSISTENT", PromptKind::Cdp).unwrap();
        assert!(v.consistent);
        let v = parse_reply(
            "VERDICT: INCONSISTENT\nCORRECTED: 1+1=10\nOPERATION: binary addition with carry",
            PromptKind::Rdp,
        )
        .unwrap();
        assert!(!v.consistent);
        assert_eq!(v.corrected_expression.as_deref(), Some("1+1=10"));
        assert_eq!(v.operation_guess.as_deref(), Some("binary addition with carry"));
        assert_eq!(parse_reply("looks fine to me", PromptKind::Cdp), Err(ReplyError::MissingVerdict));
        assert_eq!(parse_reply("", PromptKind::Cdp), Err(ReplyError::MissingVerdict));
        assert!(matches!(parse_reply("VERDICT: MAYBE", PromptKind::Cdp), Err(ReplyError::BadVerdict(_))));
        assert!(matches!(
            parse_reply("VERDICT: INCONSISTENT\nCORRECTED: 1+2=3", PromptKind::Rdp),
            Err(ReplyError::ForeignCorrection(_))
        ));
        let v = parse_reply("\nVERDICT: INCONSISTENT\nCORRECTED: 1 + 1 = 10\nbecause 1+1 carries", PromptKind::Rdp).unwrap();
        assert_eq!(v.corrected_expression.as_deref(), Some("1+1=10"));
        assert_eq!(v.reason, "because 1+1 carries");
    }

    struct Always(&'static str);

    impl Backend for Always {
        fn chat(&self, _: &Prompt) -> Result<String, ChatError> {
            Ok(self.0.to_string())
        }
    }

    #[test]
    fn consistent_input_accepted_at_once() {
        let kb = KnowledgeBase::default();
        let state = standard_only();
        let pseudo = PseudoLabel::peaked(&syms("1+1=10"), 0.9).unwrap();
        let mock = MockBackend::new(&state, 2).with_pseudo(&pseudo);
        let out = self_feedback_loop(&pseudo, &kb, &mock, Some(&state), &LoopOptions::default()).unwrap();
        assert_eq!(out.state.status, LoopStatus::Accepted);
        assert_eq!(out.state.iteration, 1);
        assert_eq!(out.state.rdp_calls(), 0);
        assert_eq!(out.result.unwrap().edits, 0);
    }

    #[test]
    fn mock_loop_matches_oracle() {
        let kb = KnowledgeBase::default();
        let state = standard_only();
        let mut rows: Vec<[f64; 4]> = syms("1+1=11")
            .iter()
            .map(|s| {
                let mut r = [0.02; 4];
                r[s.index()] = 0.94;
                r
            })
            .collect();
        rows[5] = [0.3, 0.6, 0.05, 0.05];
        let pseudo = PseudoLabel::from_rows(rows).unwrap();
        let oracle = revise(&pseudo, &state, 2).unwrap();
        let mock = MockBackend::new(&state, 2).with_pseudo(&pseudo);
        let out = self_feedback_loop(&pseudo, &kb, &mock, Some(&state), &LoopOptions::default()).unwrap();
        let r = out.result.unwrap();
        assert_eq!(r.revised_symbols, oracle.revised_symbols);
        assert_eq!(r.revised_symbols, syms("1+1=10"));
        assert_eq!(out.state.iteration, 2);
        assert_eq!(out.state.rdp_calls(), 1);
    }

    #[test]
    fn stubborn_backend_exhausts() {
        let kb = KnowledgeBase::default();
        let pseudo = PseudoLabel::peaked(&syms("1+1=11"), 0.9).unwrap();
        let backend = Always("VERDICT: INCONSISTENT\nCORRECTED: 1+1=11");
        let opts = LoopOptions {
            max_iterations: 3,
            ..LoopOptions::default()
        };
        let out = self_feedback_loop(&pseudo, &kb, &backend, None, &opts).unwrap();
        assert_eq!(out.state.status, LoopStatus::Exhausted);
        assert_eq!(out.state.iteration, 3);
        assert_eq!(out.state.cdp_calls(), 3);
        assert_eq!(out.state.rdp_calls(), 2);
        assert!(out.result.is_none());
    }

    #[test]
    fn gate_overrules_false_consistency() {
        let kb = KnowledgeBase::default();
        let state = standard_only();
        let pseudo = PseudoLabel::peaked(&syms("1+1=11"), 0.9).unwrap();
        let backend = Always("VERDICT: CONSISTENT");
        let out = self_feedback_loop(&pseudo, &kb, &backend, Some(&state), &LoopOptions::default()).unwrap();
        assert_eq!(out.state.status, LoopStatus::Exhausted);
        assert!(out.state.history.iter().any(|e| e.rejected.is_some()));

        let faithful = LoopOptions {
            gated: false,
            ..LoopOptions::default()
        };
        let out = self_feedback_loop(&pseudo, &kb, &backend, Some(&state), &faithful).unwrap();
        assert_eq!(out.state.status, LoopStatus::Accepted);
        assert_eq!(out.result.unwrap().revised_symbols, syms("1+1=11"));
    }

    #[test]
    fn persistent_garbage_is_an_error() {
        let kb = KnowledgeBase::default();
        let pseudo = PseudoLabel::peaked(&syms("1+1=10"), 0.9).unwrap();
        let err = self_feedback_loop(&pseudo, &kb, &Always("sure"), None, &LoopOptions::default()).unwrap_err();
        match err {
            LoopError::ParseFailure { attempts, .. } => assert_eq!(attempts, 3),
            e => panic!("unexpected {e}"),
        }
        let opts = LoopOptions {
            max_iterations: 0,
            ..LoopOptions::default()
        };
        assert!(matches!(
            self_feedback_loop(&pseudo, &kb, &Always("sure"), None, &opts),
            Err(LoopError::NoIterations)
        ));
    }
}
