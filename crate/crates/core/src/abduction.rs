//! The exact symbolic reasoner.
//!
//! It keeps the set of operation tables that agree with every accepted
//! fact and revises perception readings into the most probable sequence
//! that some surviving table explains.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use crate::grammar::{eval_matches, parse_expression, ParseError, ParsedEquation};
use crate::kb::KnowledgeBase;
use crate::perception::PseudoLabel;
use crate::symbol::{symbols_to_string, Symbol, ALPHABET_SIZE};
use crate::table::{make_standard_table, OperationTable, TABLE_COUNT};

/// True iff `symbols` parses as `x+y=z` and `table` maps `x, y` to `z`.
pub fn check_consistency(symbols: &[Symbol], table: OperationTable) -> bool {
    match parse_expression(symbols) {
        Ok(eq) => eq.holds_under(table),
        Err(_) => false,
    }
}

const WORDS: usize = TABLE_COUNT / 64;

/// The tables still consistent with every fact seen so far.
#[derive(Clone, PartialEq, Eq)]
pub struct HypothesisState {
    surviving: Box<[u64; WORDS]>,
    count: usize,
    facts_applied: usize,
}

impl std::fmt::Debug for HypothesisState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HypothesisState")
            .field("surviving", &self.count)
            .field("facts_applied", &self.facts_applied)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AbductionError {
    #[error("fact {expr:?} does not parse: {source}")]
    UnparseableFact {
        expr: String,
        #[source]
        source: ParseError,
    },
    #[error("no labeled facts given")]
    NoFacts,
    #[error("labeled facts are inconsistent: no table survives the first {prefix_len} of them")]
    InconsistentFacts { prefix_len: usize },
    #[error("knowledge-base table constraints admit no table")]
    InconsistentConstraints,
    #[error("malformed hypothesis dump line {line}: {text:?}")]
    BadDump { line: usize, text: String },
}

impl Default for HypothesisState {
    fn default() -> Self {
        HypothesisState::full()
    }
}

impl HypothesisState {
    /// All 65,536 tables.
    pub fn full() -> Self {
        HypothesisState {
            surviving: Box::new([u64::MAX; WORDS]),
            count: TABLE_COUNT,
            facts_applied: 0,
        }
    }

    pub fn empty() -> Self {
        HypothesisState {
            surviving: Box::new([0; WORDS]),
            count: 0,
            facts_applied: 0,
        }
    }

    pub fn from_tables(tables: impl IntoIterator<Item = OperationTable>) -> Self {
        let mut s = HypothesisState::empty();
        for t in tables {
            let c = t.code() as usize;
            if s.surviving[c / 64] & (1 << (c % 64)) == 0 {
                s.surviving[c / 64] |= 1 << (c % 64);
                s.count += 1;
            }
        }
        s
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn facts_applied(&self) -> usize {
        self.facts_applied
    }

    pub fn contains(&self, table: OperationTable) -> bool {
        let c = table.code() as usize;
        self.surviving[c / 64] & (1 << (c % 64)) != 0
    }

    /// Surviving tables in ascending code order.
    pub fn tables(&self) -> impl Iterator<Item = OperationTable> + '_ {
        self.surviving.iter().enumerate().flat_map(|(w, &bits)| {
            let mut bits = bits;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(OperationTable::from_code((w * 64 + b) as u16))
            })
        })
    }

    /// Keeps only tables satisfying `keep`. Never adds tables.
    pub fn retain(&self, mut keep: impl FnMut(OperationTable) -> bool) -> Self {
        let mut out = HypothesisState {
            surviving: Box::new([0; WORDS]),
            count: 0,
            facts_applied: self.facts_applied,
        };
        for t in self.tables() {
            if keep(t) {
                let c = t.code() as usize;
                out.surviving[c / 64] |= 1 << (c % 64);
                out.count += 1;
            }
        }
        out
    }

    /// Keeps tables under which the fact's truth value equals `veracity`.
    pub fn filter_hypotheses(&self, symbols: &[Symbol], veracity: bool) -> Result<Self, AbductionError> {
        let eq = parse_expression(symbols).map_err(|source| AbductionError::UnparseableFact {
            expr: symbols_to_string(symbols),
            source,
        })?;
        Ok(self.filter_parsed(&eq, veracity))
    }

    pub fn filter_parsed(&self, eq: &ParsedEquation, veracity: bool) -> Self {
        let mut scratch = Vec::new();
        let (x, y, z) = (eq.x.bits(), eq.y.bits(), eq.z.bits());
        let mut next = self.retain(|t| eval_matches(x, y, z, t, &mut scratch) == veracity);
        next.facts_applied += 1;
        next
    }

    /// True if at least one surviving table explains `eq`.
    pub fn explains(&self, eq: &ParsedEquation) -> bool {
        let mut scratch = Vec::new();
        let (x, y, z) = (eq.x.bits(), eq.y.bits(), eq.z.bits());
        self.tables().any(|t| eval_matches(x, y, z, t, &mut scratch))
    }

    /// Codes of the surviving tables that explain `eq`.
    pub fn supporting(&self, eq: &ParsedEquation) -> Vec<u16> {
        let mut scratch = Vec::new();
        let (x, y, z) = (eq.x.bits(), eq.y.bits(), eq.z.bits());
        self.tables()
            .filter(|&t| eval_matches(x, y, z, t, &mut scratch))
            .map(|t| t.code())
            .collect()
    }

    /// Sorted lowercase hex codes, one per line.
    pub fn to_dump(&self) -> String {
        let mut out = String::with_capacity(self.count * 5);
        for t in self.tables() {
            let _ = writeln!(out, "{}", t.to_hex());
        }
        out
    }

    pub fn from_dump(text: &str) -> Result<Self, AbductionError> {
        let mut tables = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            tables.push(OperationTable::from_hex(line).ok_or_else(|| AbductionError::BadDump {
                line: n + 1,
                text: line.to_string(),
            })?);
        }
        Ok(HypothesisState::from_tables(tables))
    }
}

/// Revised reading of one equation.
#[derive(Debug, Clone, PartialEq)]
pub struct RevisionResult {
    pub revised_symbols: Vec<Symbol>,
    /// Codes of surviving tables under which the revision holds, ascending.
    pub supporting_tables: Vec<u16>,
    /// Sum over positions of `ln p(chosen symbol)`.
    pub log_score: f64,
    /// Positions that differ from the argmax reading.
    pub edits: usize,
    pub trace: Vec<String>,
}

impl RevisionResult {
    pub fn expression(&self) -> String {
        symbols_to_string(&self.revised_symbols)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReviseError {
    #[error("pseudo-label is empty")]
    EmptyPseudoLabel,
    #[error("no hypotheses survive")]
    NoHypotheses,
    #[error("no consistent reading within {budget} edits")]
    NoSolution { budget: usize },
}

/// Largest budget searched over every alternative symbol; larger budgets
/// only consider each position's runner-up symbol.
pub const EXHAUSTIVE_BUDGET: usize = 3;

/// Default edit budget for a sequence: `ceil(len / 4)`.
pub fn default_budget(len: usize) -> usize {
    len.div_ceil(4)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReviseOptions {
    pub budget: usize,
    /// Abandon the search once the log-score drop from the argmax
    /// reading exceeds this many nats.
    pub max_cost: Option<f64>,
    /// Upper bound on search nodes expanded before giving up.
    pub max_expansions: usize,
}

impl ReviseOptions {
    pub fn with_budget(budget: usize) -> Self {
        ReviseOptions {
            budget,
            max_cost: None,
            max_expansions: 2_000_000,
        }
    }
}

/// One possible change: put `symbol` at `position`, costing `cost` nats.
#[derive(Debug, Clone, Copy)]
struct Move {
    position: usize,
    symbol: Symbol,
    cost: f64,
}

/// Search node: a set of move indices (ascending) and its total cost.
struct Node {
    cost: f64,
    moves: Vec<usize>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // Reversed so the max-heap pops the cheapest node first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then_with(|| other.moves.cmp(&self.moves))
    }
}

fn candidate_moves(pseudo: &PseudoLabel, budget: usize) -> Vec<Move> {
    let argmax = pseudo.argmax_symbols();
    let mut moves = Vec::new();
    for (position, &best) in argmax.iter().enumerate() {
        let base = pseudo.log_prob(position, best);
        let alternatives: Vec<Symbol> = if budget <= EXHAUSTIVE_BUDGET {
            Symbol::ALL.iter().copied().filter(|&s| s != best).collect()
        } else {
            // runner-up: highest probability other than the argmax,
            // lowest index on ties
            let row = &pseudo.probs()[position];
            let mut runner: Option<usize> = None;
            for i in 0..ALPHABET_SIZE {
                if i != best.index() && runner.is_none_or(|r| row[i] > row[r]) {
                    runner = Some(i);
                }
            }
            vec![Symbol::from_index(runner.expect("alphabet has 4 symbols")).unwrap()]
        };
        for symbol in alternatives {
            moves.push(Move {
                position,
                symbol,
                cost: (base - pseudo.log_prob(position, symbol)).max(0.0),
            });
        }
    }
    moves.sort_by(|a, b| {
        a.cost
            .total_cmp(&b.cost)
            .then(a.position.cmp(&b.position))
            .then(a.symbol.cmp(&b.symbol))
    });
    moves
}

/// Ranking of accepted candidates: higher log score, then fewer edits,
/// then lexicographically smaller symbol sequence.
fn better(a: &(f64, usize, Vec<Symbol>), b: &(f64, usize, Vec<Symbol>)) -> bool {
    match a.0.total_cmp(&b.0) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => (a.1, &a.2) < (b.1, &b.2),
    }
}

/// Most probable reading within `budget` edits of the argmax that parses
/// and is explained by at least one surviving table.
pub fn revise(pseudo: &PseudoLabel, state: &HypothesisState, budget: usize) -> Result<RevisionResult, ReviseError> {
    revise_with(pseudo, state, &ReviseOptions::with_budget(budget))
}

/// [`revise`] with explicit search limits.
///
/// Candidates are enumerated lazily in order of increasing log-score drop
/// from the argmax reading (the classic k-best subset expansion over moves
/// sorted by cost), so the first explained candidate is optimal up to ties;
/// every candidate within floating-point tolerance of it is then compared
/// with the exact tie-breaking order.
pub fn revise_with(pseudo: &PseudoLabel, state: &HypothesisState, opts: &ReviseOptions) -> Result<RevisionResult, ReviseError> {
    if pseudo.is_empty() {
        return Err(ReviseError::EmptyPseudoLabel);
    }
    if state.is_empty() {
        return Err(ReviseError::NoHypotheses);
    }
    let argmax = pseudo.argmax_symbols();
    let budget = opts.budget;
    let moves = candidate_moves(pseudo, budget);

    let mut heap = BinaryHeap::new();
    heap.push(Node {
        cost: 0.0,
        moves: Vec::new(),
    });
    let mut expanded = 0usize;
    let mut examined = 0usize;
    let mut found_cost: Option<f64> = None;
    let mut best: Option<(f64, usize, Vec<Symbol>, ParsedEquation)> = None;
    let mut seq = argmax.to_vec();

    while let Some(node) = heap.pop() {
        if let Some(fc) = found_cost {
            if node.cost > fc + 1e-9 * fc.abs().max(1.0) {
                break;
            }
        }
        if opts.max_cost.is_some_and(|m| node.cost > m) {
            break;
        }
        expanded += 1;
        if expanded > opts.max_expansions {
            break;
        }

        // children: extend with the next move, or swap the last move for it
        let next = node.moves.last().map_or(0, |&m| m + 1);
        if next < moves.len() {
            if node.moves.len() < budget {
                let mut ext = node.moves.clone();
                ext.push(next);
                heap.push(Node {
                    cost: node.cost + moves[next].cost,
                    moves: ext,
                });
            }
            if let Some(&last) = node.moves.last() {
                let mut swap = node.moves.clone();
                *swap.last_mut().unwrap() = next;
                let cost = node.cost - moves[last].cost + moves[next].cost;
                heap.push(Node {
                    cost: cost.max(node.cost),
                    moves: swap,
                });
            }
        }

        // distinct positions only
        let mut positions: Vec<usize> = node.moves.iter().map(|&m| moves[m].position).collect();
        positions.sort_unstable();
        if positions.windows(2).any(|w| w[0] == w[1]) {
            continue;
        }

        seq.copy_from_slice(argmax);
        for &m in &node.moves {
            seq[moves[m].position] = moves[m].symbol;
        }
        examined += 1;
        let Ok(eq) = parse_expression(&seq) else {
            continue;
        };
        if !state.explains(&eq) {
            continue;
        }
        found_cost.get_or_insert(node.cost);
        let cand = (pseudo.log_score(&seq), node.moves.len(), seq.clone());
        let replace = match &best {
            None => true,
            Some((s, e, v, _)) => better(&cand, &(*s, *e, v.clone())),
        };
        if replace {
            best = Some((cand.0, cand.1, cand.2, eq));
        }
    }

    let Some((log_score, edits, revised, eq)) = best else {
        return Err(ReviseError::NoSolution { budget });
    };
    let supporting_tables = state.supporting(&eq);
    let changed: Vec<String> = argmax
        .iter()
        .zip(&revised)
        .enumerate()
        .filter(|(_, (a, r))| a != r)
        .map(|(i, (a, r))| format!("{i}:{a}->{r}"))
        .collect();
    let trace = vec![
        format!(
            "perceived {} (log score {:.4})",
            symbols_to_string(argmax),
            pseudo.log_score(argmax)
        ),
        format!("examined {examined} candidate readings within {budget} edits"),
        if changed.is_empty() {
            "reading already consistent".to_string()
        } else {
            format!("changed {}", changed.join(", "))
        },
        format!(
            "accepted {} (log score {log_score:.4}), explained by {} of {} surviving tables",
            symbols_to_string(&revised),
            supporting_tables.len(),
            state.len()
        ),
    ];
    Ok(RevisionResult {
        revised_symbols: revised,
        supporting_tables,
        log_score,
        edits,
        trace,
    })
}

/// A reasoner's answer for one equation.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Revised(RevisionResult),
    /// No revision was accepted; the equation is left out of retraining.
    Abstained { reason: String },
}

impl Outcome {
    pub fn revision(&self) -> Option<&RevisionResult> {
        match self {
            Outcome::Revised(r) => Some(r),
            Outcome::Abstained { .. } => None,
        }
    }
}

/// How the per-equation edit budget is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditBudget {
    /// `ceil(len / 4)`.
    Proportional,
    Fixed(usize),
}

impl EditBudget {
    pub fn for_len(self, len: usize) -> usize {
        match self {
            EditBudget::Proportional => default_budget(len),
            EditBudget::Fixed(n) => n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchOptions {
    pub budget: EditBudget,
    pub max_cost: Option<f64>,
    pub max_expansions: usize,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions {
            budget: EditBudget::Proportional,
            max_cost: None,
            max_expansions: 2_000_000,
        }
    }
}

impl BatchOptions {
    pub fn revise_options(&self, len: usize) -> ReviseOptions {
        ReviseOptions {
            budget: self.budget.for_len(len),
            max_cost: self.max_cost,
            max_expansions: self.max_expansions,
        }
    }
}

/// Hypothesis state implied by the knowledge base's known table entries
/// and the labeled facts, applied in order.
pub fn seed_state(kb: &KnowledgeBase, labeled_facts: &[(Vec<Symbol>, bool)]) -> Result<HypothesisState, AbductionError> {
    if labeled_facts.is_empty() {
        return Err(AbductionError::NoFacts);
    }
    let constraints = kb.table_constraints();
    let mut state = HypothesisState::full().retain(|t| constraints.iter().all(|c| c.admits(t)));
    if state.is_empty() {
        return Err(AbductionError::InconsistentConstraints);
    }
    for (i, (symbols, veracity)) in labeled_facts.iter().enumerate() {
        state = state.filter_hypotheses(symbols, *veracity)?;
        if state.is_empty() {
            return Err(AbductionError::InconsistentFacts { prefix_len: i + 1 });
        }
    }
    Ok(state)
}

/// Order in which a batch is processed: descending mean confidence, ties
/// by input position.
pub fn confidence_order(pseudos: &[PseudoLabel]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pseudos.len()).collect();
    order.sort_by(|&a, &b| {
        pseudos[b]
            .mean_confidence()
            .total_cmp(&pseudos[a].mean_confidence())
            .then(a.cmp(&b))
    });
    order
}

/// Revises a batch greedily, most confident first. Each accepted revision
/// becomes a positive fact that narrows the hypotheses for the rest.
/// Outcomes are returned in input order.
pub fn abduce_batch(
    pseudos: &[PseudoLabel],
    kb: &KnowledgeBase,
    labeled_facts: &[(Vec<Symbol>, bool)],
    opts: &BatchOptions,
) -> Result<(HypothesisState, Vec<Outcome>), AbductionError> {
    let state = seed_state(kb, labeled_facts)?;
    Ok(abduce_from(state, pseudos, opts))
}

/// The greedy loop of [`abduce_batch`] starting from a given state.
pub fn abduce_from(mut state: HypothesisState, pseudos: &[PseudoLabel], opts: &BatchOptions) -> (HypothesisState, Vec<Outcome>) {
    let mut outcomes: Vec<Option<Outcome>> = vec![None; pseudos.len()];
    for i in confidence_order(pseudos) {
        let pseudo = &pseudos[i];
        let outcome = match revise_with(pseudo, &state, &opts.revise_options(pseudo.len())) {
            Ok(r) => {
                let eq = parse_expression(&r.revised_symbols).expect("revisions parse");
                state = state.filter_parsed(&eq, true);
                Outcome::Revised(r)
            }
            Err(e) => Outcome::Abstained { reason: e.to_string() },
        };
        outcomes[i] = Some(outcome);
    }
    (state, outcomes.into_iter().map(|o| o.expect("every index visited")).collect())
}

/// Convenience: the state holding only standard binary addition.
pub fn standard_only() -> HypothesisState {
    HypothesisState::from_tables([make_standard_table()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbol::symbols_from_str;
    use crate::table::{make_xor_table, AdderInput, AdderOutput};

    fn syms(s: &str) -> Vec<Symbol> {
        symbols_from_str(s).unwrap()
    }

    #[test]
    fn consistency_examples() {
        let std = make_standard_table();
        assert!(check_consistency(&syms("1+1=10"), std));
        assert!(!check_consistency(&syms("1+1=10"), OperationTable::from_code(0)));
        assert!(!check_consistency(&syms("11+=1"), std));
    }

    #[test]
    fn filtering_by_one_plus_one() {
        let s = HypothesisState::full().filter_hypotheses(&syms("1+1=10"), true).unwrap();
        // brute force: entry (1,1,0) must be (0,1); then (0,0,1) only
        // matters through the emitted carry, which is checked by eval
        let expected = OperationTable::all().filter(|&t| check_consistency(&syms("1+1=10"), t)).count();
        assert_eq!(s.len(), expected);
        assert_eq!(s.len(), 16_384);
        for t in s.tables() {
            assert_eq!(t.get(AdderInput::new(1, 1, 0)), AdderOutput { s: 0, c_out: 1 });
        }
        assert_eq!(s.facts_applied(), 1);
    }

    #[test]
    fn filtering_is_idempotent_and_monotone() {
        let s1 = HypothesisState::full().filter_hypotheses(&syms("1+10=11"), true).unwrap();
        let s2 = s1.filter_hypotheses(&syms("1+10=11"), true).unwrap();
        assert_eq!(s1.to_dump(), s2.to_dump());
        let s3 = s2.filter_hypotheses(&syms("1+1=10"), false).unwrap();
        assert!(s3.len() <= s2.len());
        assert!(s3.tables().all(|t| s2.contains(t)));
        assert!(HypothesisState::full().filter_hypotheses(&syms("1+="), true).is_err());
    }

    #[test]
    fn zero_fact_constrains_zero_entry() {
        let s = HypothesisState::full().filter_hypotheses(&syms("0+0=0"), true).unwrap();
        for t in s.tables() {
            // (0,0,0) must give sum 0; a carry would emit "10"
            assert_eq!(t.get(AdderInput::new(0, 0, 0)).s, 0);
            if t.get(AdderInput::new(0, 0, 0)).c_out == 1 {
                // then "1" would be emitted before stripping: z = "10" != "0"
                panic!("carry-emitting table survived");
            }
        }
        assert_eq!(s.len(), TABLE_COUNT / 4);
    }

    #[test]
    fn dump_round_trip() {
        let s = HypothesisState::from_tables([make_standard_table(), make_xor_table()]);
        let text = s.to_dump();
        assert_eq!(text.lines().count(), 2);
        let mut lines: Vec<&str> = text.lines().collect();
        let sorted = {
            lines.sort();
            lines.clone()
        };
        assert_eq!(text.lines().collect::<Vec<_>>(), sorted);
        assert_eq!(HypothesisState::from_dump(&text).unwrap(), s);
        assert!(HypothesisState::from_dump("zzzz\n").is_err());
    }

    fn pseudo_from(text: &str, conf: &[f64]) -> PseudoLabel {
        let rows = syms(text)
            .iter()
            .zip(conf)
            .map(|(s, &c)| {
                let mut r = [(1.0 - c) / 3.0; 4];
                r[s.index()] = c;
                r
            })
            .collect();
        PseudoLabel::from_rows(rows).unwrap()
    }

    #[test]
    fn consistent_argmax_needs_no_edit() {
        let p = pseudo_from("1+1=10", &[0.9; 6]);
        let r = revise(&p, &standard_only(), 2).unwrap();
        assert_eq!(r.edits, 0);
        assert_eq!(r.revised_symbols, syms("1+1=10"));
        assert!(r.log_score <= 0.0);
        assert_eq!(r.supporting_tables, vec![make_standard_table().code()]);
    }

    #[test]
    fn fixes_least_confident_digit() {
        let p = pseudo_from("1+1=11", &[0.95, 0.95, 0.95, 0.95, 0.95, 0.5]);
        let r = revise(&p, &standard_only(), 1).unwrap();
        assert_eq!(r.revised_symbols, syms("1+1=10"));
        assert_eq!(r.edits, 1);
    }

    #[test]
    fn zero_budget_contradiction_has_no_solution() {
        let p = pseudo_from("1+1=11", &[0.9; 6]);
        assert_eq!(revise(&p, &standard_only(), 0), Err(ReviseError::NoSolution { budget: 0 }));
    }

    #[test]
    fn large_budget_uses_runner_up_only() {
        // runner-up of the last glyph is "=", which can never fix it
        let mut rows: Vec<[f64; 4]> = syms("1+1=11")
            .iter()
            .map(|s| {
                let mut r = [0.02; 4];
                r[s.index()] = 0.94;
                r
            })
            .collect();
        rows[5] = [0.05, 0.6, 0.3, 0.05];
        let p = PseudoLabel::from_rows(rows).unwrap();
        let wide = revise(&p, &standard_only(), 3).unwrap();
        assert_eq!(wide.revised_symbols, syms("1+1=10"));
        assert_eq!(revise(&p, &standard_only(), 4), Err(ReviseError::NoSolution { budget: 4 }));
    }

    #[test]
    fn max_cost_abstains() {
        let p = pseudo_from("1+1=11", &[0.99; 6]);
        let opts = ReviseOptions {
            max_cost: Some(1.0),
            ..ReviseOptions::with_budget(2)
        };
        assert!(revise_with(&p, &standard_only(), &opts).is_err());
    }

    #[test]
    fn batch_needs_facts() {
        let kb = KnowledgeBase::default();
        assert_eq!(abduce_batch(&[], &kb, &[], &BatchOptions::default()), Err(AbductionError::NoFacts));
        let facts = vec![(syms("1+1=10"), true), (syms("1+1=10"), false)];
        assert_eq!(
            abduce_batch(&[], &kb, &facts, &BatchOptions::default()),
            Err(AbductionError::InconsistentFacts { prefix_len: 2 })
        );
        let facts = vec![(syms("1+1=10"), true)];
        let (state, out) = abduce_batch(&[], &kb, &facts, &BatchOptions::default()).unwrap();
        assert!(out.is_empty());
        assert_eq!(state.len(), 16_384);
    }

    #[test]
    fn batch_outcomes_keep_input_order() {
        let kb = KnowledgeBase::default();
        let facts = vec![(syms("1+1=10"), true), (syms("1+0=1"), true), (syms("11+1=100"), true)];
        let pseudos = vec![
            pseudo_from("1+1=11", &[0.9, 0.9, 0.9, 0.9, 0.9, 0.4]),
            pseudo_from("10+1=11", &[0.99; 7]),
        ];
        let (_, out) = abduce_batch(&pseudos, &kb, &facts, &BatchOptions::default()).unwrap();
        assert_eq!(out[0].revision().unwrap().revised_symbols, syms("1+1=10"));
        assert_eq!(out[1].revision().unwrap().revised_symbols, syms("10+1=11"));
        assert_eq!(confidence_order(&pseudos), vec![1, 0]);
    }
}
