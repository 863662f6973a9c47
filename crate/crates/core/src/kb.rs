//! The knowledge base: structural rules with their natural-language
//! wording, exemplar equations for prompts, and optional known table
//! entries.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::grammar::{parse_expression_str, Operator, OperatorScan, Segment};
use crate::symbol::{symbols_to_string, Symbol};
use crate::table::{AdderInput, AdderOutput, OperationTable};

/// What a rule checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleKind {
    /// Only `0`, `1`, `+`, `=` may appear.
    Alphabet,
    /// Exactly one `+` and one `=`, in that order.
    Operators,
    /// Digit groups are nonempty and have no leading zero.
    Segments,
    /// Digit-by-digit evaluation with carry. Describes the computation and
    /// holds for any single equation.
    DigitwiseCarry,
    /// The hidden operation is fixed across equations. Holds for any
    /// single equation.
    FixedOperation,
}

impl RuleKind {
    pub fn id(self) -> &'static str {
        match self {
            RuleKind::Alphabet => "alphabet",
            RuleKind::Operators => "operators",
            RuleKind::Segments => "segments",
            RuleKind::DigitwiseCarry => "digitwise-carry",
            RuleKind::FixedOperation => "fixed-operation",
        }
    }

    pub fn from_id(id: &str) -> Option<RuleKind> {
        [
            RuleKind::Alphabet,
            RuleKind::Operators,
            RuleKind::Segments,
            RuleKind::DigitwiseCarry,
            RuleKind::FixedOperation,
        ]
        .into_iter()
        .find(|k| k.id() == id)
    }
}

/// A machine-checkable rule and its wording.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub kind: RuleKind,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub expr: String,
    pub veracity: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableConstraint {
    pub a: u8,
    pub b: u8,
    pub c_in: u8,
    pub s: u8,
    pub c_out: u8,
}

impl TableConstraint {
    pub fn input(&self) -> AdderInput {
        AdderInput::new(self.a, self.b, self.c_in)
    }

    pub fn output(&self) -> AdderOutput {
        AdderOutput {
            s: self.s,
            c_out: self.c_out,
        }
    }

    pub fn admits(&self, table: OperationTable) -> bool {
        table.get(self.input()) == self.output()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum KbError {
    #[error("unknown rule id {0:?}")]
    UnknownRule(String),
    #[error("exemplar {expr:?} does not parse: {reason}")]
    BadExemplar { expr: String, reason: String },
    #[error("table constraint has a non-bit value: {0:?}")]
    BadConstraint(TableConstraint),
    #[error("requested {requested} exemplars but only {available} exist")]
    TooManyExemplars { requested: usize, available: usize },
    #[error("cannot read knowledge base: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed knowledge base file: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeBase {
    rules: Vec<Rule>,
    exemplars: Vec<Exemplar>,
    table_constraints: Vec<TableConstraint>,
}

const DEFAULT_RULES: [(RuleKind, &str); 5] = [
    (
        RuleKind::Alphabet,
        "Every equation is written using only the symbols 0, 1, + and =.",
    ),
    (
        RuleKind::Operators,
        "Every equation has the form X+Y=Z: exactly one + and exactly one =, with the + before the =.",
    ),
    (
        RuleKind::Segments,
        "X, Y and Z are nonempty strings of the digits 0 and 1, and none of them starts with 0 unless it is exactly 0.",
    ),
    (
        RuleKind::DigitwiseCarry,
        "Z is computed digit by digit, starting from the rightmost digits of X and Y, and each step may pass a carry digit to the next position on the left.",
    ),
    (
        RuleKind::FixedOperation,
        "The operation that produces Z from X and Y is unknown, but it is the same for every equation.",
    ),
];

impl Default for KnowledgeBase {
    fn default() -> Self {
        KnowledgeBase {
            rules: DEFAULT_RULES
                .iter()
                .map(|(kind, text)| Rule {
                    kind: *kind,
                    text: (*text).to_string(),
                })
                .collect(),
            exemplars: Vec::new(),
            table_constraints: Vec::new(),
        }
    }
}

fn check_exemplar(e: &Exemplar) -> Result<(), KbError> {
    parse_expression_str(&e.expr).map(|_| ()).map_err(|err| KbError::BadExemplar {
        expr: e.expr.clone(),
        reason: err.to_string(),
    })
}

impl KnowledgeBase {
    pub fn new(rules: Vec<Rule>, exemplars: Vec<Exemplar>, table_constraints: Vec<TableConstraint>) -> Result<Self, KbError> {
        for e in &exemplars {
            check_exemplar(e)?;
        }
        for c in &table_constraints {
            if [c.a, c.b, c.c_in, c.s, c.c_out].iter().any(|&v| v > 1) {
                return Err(KbError::BadConstraint(*c));
            }
        }
        Ok(KnowledgeBase {
            rules,
            exemplars,
            table_constraints,
        })
    }

    /// Default rules plus exemplars taken from labeled equations.
    pub fn with_exemplars<'a>(mut self, labeled: impl IntoIterator<Item = (&'a [Symbol], bool)>) -> Result<Self, KbError> {
        for (symbols, veracity) in labeled {
            let e = Exemplar {
                expr: symbols_to_string(symbols),
                veracity,
                explanation: None,
            };
            check_exemplar(&e)?;
            self.exemplars.push(e);
        }
        Ok(self)
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn rule_texts(&self) -> impl Iterator<Item = &str> {
        self.rules.iter().map(|r| r.text.as_str())
    }

    pub fn exemplars(&self) -> &[Exemplar] {
        &self.exemplars
    }

    pub fn table_constraints(&self) -> &[TableConstraint] {
        &self.table_constraints
    }

    /// Loads the JSON form: `{rules: [{id, text}], exemplars: [{expr,
    /// veracity, explanation?}], table_constraints: [{a, b, c_in, s, c_out}]}`.
    pub fn from_json(text: &str) -> Result<Self, KbError> {
        let file: KbFile = serde_json::from_str(text)?;
        let rules = file
            .rules
            .into_iter()
            .map(|r| {
                RuleKind::from_id(&r.id)
                    .map(|kind| Rule { kind, text: r.text })
                    .ok_or(KbError::UnknownRule(r.id))
            })
            .collect::<Result<Vec<_>, _>>()?;
        KnowledgeBase::new(rules, file.exemplars, file.table_constraints)
    }

    pub fn load(path: &Path) -> Result<Self, KbError> {
        KnowledgeBase::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        let file = KbFile {
            rules: self
                .rules
                .iter()
                .map(|r| RuleRecord {
                    id: r.kind.id().to_string(),
                    text: r.text.clone(),
                })
                .collect(),
            exemplars: self.exemplars.clone(),
            table_constraints: self.table_constraints.clone(),
        };
        serde_json::to_string_pretty(&file).expect("knowledge base serializes")
    }

    /// Numbered rule list, one line per rule.
    pub fn render_rules_text(&self) -> String {
        let mut out = String::new();
        for (n, text) in self.rule_texts().enumerate() {
            let _ = writeln!(out, "{}. {}", n + 1, text);
        }
        out
    }

    /// The `k` exemplars closest to `query` by Levenshtein distance over
    /// symbols, ties kept in list order.
    pub fn select_exemplars(&self, query: &[Symbol], k: usize) -> Result<Vec<&Exemplar>, KbError> {
        if k > self.exemplars.len() {
            return Err(KbError::TooManyExemplars {
                requested: k,
                available: self.exemplars.len(),
            });
        }
        let query: Vec<char> = query.iter().map(|s| s.as_char()).collect();
        let mut ranked: Vec<(usize, usize)> = self
            .exemplars
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let chars: Vec<char> = e.expr.chars().collect();
                (strsim::generic_levenshtein(&query, &chars), i)
            })
            .collect();
        ranked.sort();
        Ok(ranked.into_iter().take(k).map(|(_, i)| &self.exemplars[i]).collect())
    }

    /// Evaluates every rule against `symbols`.
    pub fn check_structural(&self, symbols: &[Symbol]) -> Result<(), Vec<Violation>> {
        let tokens: Vec<Option<Symbol>> = symbols.iter().copied().map(Some).collect();
        self.check_tokens(&tokens)
    }

    /// As [`check_structural`](Self::check_structural) for raw text, where
    /// characters outside the alphabet are possible.
    pub fn check_structural_str(&self, text: &str) -> Result<(), Vec<Violation>> {
        let tokens: Vec<Option<Symbol>> = text.chars().map(Symbol::from_char).collect();
        self.check_tokens(&tokens)
    }

    fn check_tokens(&self, tokens: &[Option<Symbol>]) -> Result<(), Vec<Violation>> {
        let mut violations = Vec::new();
        for (rule, r) in self.rules.iter().enumerate() {
            for kind in rule_violations(r.kind, tokens) {
                violations.push(Violation { rule, kind });
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    ForeignSymbol { position: usize },
    MissingOperator(Operator),
    DuplicateOperator(Operator),
    OperatorOrder,
    EmptySegment(Segment),
    LeadingZero(Segment),
}

/// A failed rule: its index in the knowledge base and what went wrong.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: usize,
    pub kind: ViolationKind,
}

fn operator_violations(scan: &OperatorScan) -> Vec<ViolationKind> {
    let mut out = Vec::new();
    for (op, found) in [(Operator::Plus, &scan.plus), (Operator::Equals, &scan.equals)] {
        match found.len() {
            0 => out.push(ViolationKind::MissingOperator(op)),
            1 => {}
            _ => out.push(ViolationKind::DuplicateOperator(op)),
        }
    }
    if out.is_empty() && scan.equals[0] < scan.plus[0] {
        out.push(ViolationKind::OperatorOrder);
    }
    out
}

fn rule_violations(kind: RuleKind, tokens: &[Option<Symbol>]) -> Vec<ViolationKind> {
    let known: Vec<Symbol> = tokens.iter().map(|t| t.unwrap_or(Symbol::Zero)).collect();
    match kind {
        RuleKind::Alphabet => tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| t.is_none())
            .map(|(position, _)| ViolationKind::ForeignSymbol { position })
            .collect(),
        RuleKind::Operators => operator_violations(&OperatorScan::scan(&known)),
        RuleKind::Segments => {
            let scan = OperatorScan::scan(&known);
            if !operator_violations(&scan).is_empty() {
                return Vec::new();
            }
            let (p, e) = (scan.plus[0], scan.equals[0]);
            let groups = [
                (Segment::X, &tokens[..p]),
                (Segment::Y, &tokens[p + 1..e]),
                (Segment::Z, &tokens[e + 1..]),
            ];
            let mut out = Vec::new();
            for (segment, group) in groups {
                if group.is_empty() {
                    out.push(ViolationKind::EmptySegment(segment));
                } else if group.len() > 1 && group[0] == Some(Symbol::Zero) {
                    out.push(ViolationKind::LeadingZero(segment));
                }
            }
            out
        }
        RuleKind::DigitwiseCarry | RuleKind::FixedOperation => Vec::new(),
    }
}

#[derive(Serialize, Deserialize)]
struct RuleRecord {
    id: String,
    text: String,
}

#[derive(Serialize, Deserialize)]
struct KbFile {
    rules: Vec<RuleRecord>,
    #[serde(default)]
    exemplars: Vec<Exemplar>,
    #[serde(default)]
    table_constraints: Vec<TableConstraint>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_expression;
    use crate::symbol::symbols_from_str;
    use proptest::prelude::*;

    fn three_rule_kb(exemplars: &[&str]) -> KnowledgeBase {
        let rules = DEFAULT_RULES[..3]
            .iter()
            .map(|(kind, text)| Rule {
                kind: *kind,
                text: text.to_string(),
            })
            .collect();
        let exemplars = exemplars
            .iter()
            .map(|e| Exemplar {
                expr: e.to_string(),
                veracity: true,
                explanation: None,
            })
            .collect();
        KnowledgeBase::new(rules, exemplars, vec![]).unwrap()
    }

    #[test]
    fn renders_numbered_lines() {
        let kb = three_rule_kb(&[]);
        let text = kb.render_rules_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("1. "));
        assert!(lines[2].starts_with("3. "));
        assert_eq!(text, kb.render_rules_text());
    }

    #[test]
    fn default_text_names_no_operation() {
        let text = KnowledgeBase::default().render_rules_text();
        assert!(text.contains("X+Y=Z"));
        let lower = text.to_lowercase();
        for word in ["addition", " add", "sum", "xor", "exclusive", "subtract", "multipl", "and gate", "or gate"] {
            assert!(!lower.contains(word), "default rules mention {word:?}");
        }
    }

    #[test]
    fn exemplar_selection() {
        let kb = three_rule_kb(&["1+1=10", "1+1=1", "111+111=1110"]);
        let q = symbols_from_str("1+1=10").unwrap();
        let all = kb.select_exemplars(&q, 3).unwrap();
        assert_eq!(all[0].expr, "1+1=10");
        // distances 0, 1, 7
        let two: Vec<&str> = kb.select_exemplars(&q, 2).unwrap().iter().map(|e| e.expr.as_str()).collect();
        assert_eq!(two, ["1+1=10", "1+1=1"]);
        assert!(matches!(kb.select_exemplars(&q, 4), Err(KbError::TooManyExemplars { .. })));
    }

    #[test]
    fn ties_keep_list_order() {
        let kb = three_rule_kb(&["1+0=1", "0+1=1", "1+1=10"]);
        let q = symbols_from_str("0+0=1").unwrap();
        let got: Vec<&str> = kb.select_exemplars(&q, 3).unwrap().iter().map(|e| e.expr.as_str()).collect();
        assert_eq!(got, ["1+0=1", "0+1=1", "1+1=10"]);
    }

    #[test]
    fn structural_examples() {
        let kb = KnowledgeBase::default();
        assert_eq!(kb.check_structural_str("1+1=10"), Ok(()));
        assert_eq!(
            kb.check_structural_str("1+=0"),
            Err(vec![Violation {
                rule: 2,
                kind: ViolationKind::EmptySegment(Segment::Y)
            }])
        );
        assert_eq!(
            kb.check_structural_str("11111"),
            Err(vec![
                Violation {
                    rule: 1,
                    kind: ViolationKind::MissingOperator(Operator::Plus)
                },
                Violation {
                    rule: 1,
                    kind: ViolationKind::MissingOperator(Operator::Equals)
                },
            ])
        );
        assert!(kb.check_structural_str("1+a=1").is_err());
    }

    #[test]
    fn rejects_unparseable_exemplar() {
        let err = KnowledgeBase::default().with_exemplars([(&[Symbol::One][..], true)]);
        assert!(matches!(err, Err(KbError::BadExemplar { .. })));
    }

    #[test]
    fn json_round_trip() {
        let json = r#"{
            "rules": [{"id": "operators", "text": "one plus, one equals"}],
            "exemplars": [{"expr": "1+1=10", "veracity": true, "explanation": "carry"}],
            "table_constraints": [{"a": 1, "b": 1, "c_in": 0, "s": 0, "c_out": 1}]
        }"#;
        let kb = KnowledgeBase::from_json(json).unwrap();
        assert_eq!(kb.rules().len(), 1);
        assert_eq!(kb.table_constraints().len(), 1);
        assert_eq!(KnowledgeBase::from_json(&kb.to_json()).unwrap(), kb);
        let bad = r#"{"rules": [{"id": "mystery", "text": "?"}]}"#;
        assert!(matches!(KnowledgeBase::from_json(bad), Err(KbError::UnknownRule(_))));
    }

    fn any_symbols() -> impl Strategy<Value = Vec<Symbol>> {
        prop::collection::vec(prop::sample::select(Symbol::ALL.to_vec()), 0..12)
    }

    proptest! {
        #[test]
        fn structural_check_agrees_with_parser(s in any_symbols()) {
            let kb = KnowledgeBase::default();
            prop_assert_eq!(kb.check_structural(&s).is_ok(), parse_expression(&s).is_ok());
        }
    }
}
