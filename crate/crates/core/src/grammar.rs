//! Equation syntax (`X+Y=Z` over binary digits) and digit-by-digit
//! evaluation under an operation table.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::symbol::{symbols_from_str, ForeignSymbol, Symbol};
use crate::table::OperationTable;

/// A nonempty string of binary digits, most significant first.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct BitString(Vec<u8>);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BitStringError {
    #[error("bit string is empty")]
    Empty,
    #[error("character {0:?} is not a binary digit")]
    NotABit(char),
}

impl BitString {
    pub fn from_bits(bits: Vec<u8>) -> Result<Self, BitStringError> {
        if bits.is_empty() {
            return Err(BitStringError::Empty);
        }
        if let Some(&b) = bits.iter().find(|&&b| b > 1) {
            return Err(BitStringError::NotABit((b'0' + b.min(9)) as char));
        }
        Ok(BitString(bits))
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True when the string has a leading zero and is not exactly `"0"`.
    pub fn has_illegal_leading_zero(&self) -> bool {
        self.0.len() > 1 && self.0[0] == 0
    }

    pub fn to_symbols(&self) -> impl Iterator<Item = Symbol> + '_ {
        self.0.iter().map(|&b| if b == 1 { Symbol::One } else { Symbol::Zero })
    }

    /// Binary encoding of `value` without leading zeros.
    pub fn from_u64(value: u64) -> Self {
        if value == 0 {
            return BitString(vec![0]);
        }
        let width = 64 - value.leading_zeros() as usize;
        BitString((0..width).rev().map(|i| ((value >> i) & 1) as u8).collect())
    }

    /// Integer value, or `None` if it does not fit in 64 bits.
    pub fn to_u64(&self) -> Option<u64> {
        self.0.iter().try_fold(0u64, |acc, &b| acc.checked_mul(2).map(|v| v | b as u64))
    }
}

impl FromStr for BitString {
    type Err = BitStringError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(BitStringError::NotABit(other)),
            })
            .collect::<Result<Vec<u8>, _>>()?;
        BitString::from_bits(bits)
    }
}

impl TryFrom<String> for BitString {
    type Error = BitStringError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<BitString> for String {
    fn from(b: BitString) -> String {
        b.to_string()
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "\"{self}\"")
    }
}

/// Writes the evaluation of `x (+) y` into `out`, least significant digit
/// first and without stripping. Returns the number of significant digits
/// (at least 1), so the canonical result is `out[..n]` read backwards.
fn eval_lsb_first(x: &[u8], y: &[u8], table: OperationTable, out: &mut Vec<u8>) -> usize {
    out.clear();
    let width = x.len().max(y.len());
    let mut carry = 0u8;
    for i in 0..width {
        let a = if i < x.len() { x[x.len() - 1 - i] } else { 0 };
        let b = if i < y.len() { y[y.len() - 1 - i] } else { 0 };
        let o = table.lookup(a, b, carry);
        out.push(o.s);
        carry = o.c_out;
    }
    if carry == 1 {
        out.push(1);
    }
    let mut n = out.len();
    while n > 1 && out[n - 1] == 0 {
        n -= 1;
    }
    n
}

/// Evaluates `x (+) y` under `table`.
///
/// Both operands are right-aligned and the shorter is padded with zeros.
/// Cells are applied from the rightmost digit with an initial carry of 0;
/// a final carry of 1 emits a leading `1`, and leading zeros are stripped.
pub fn eval_equation(x: &BitString, y: &BitString, table: OperationTable) -> BitString {
    let mut buf = Vec::with_capacity(x.len().max(y.len()) + 1);
    let n = eval_lsb_first(x.bits(), y.bits(), table, &mut buf);
    BitString(buf[..n].iter().rev().copied().collect())
}

/// String-level wrapper around [`eval_equation`].
pub fn eval_str(x: &str, y: &str, table: OperationTable) -> Result<String, BitStringError> {
    let x: BitString = x.parse()?;
    let y: BitString = y.parse()?;
    Ok(eval_equation(&x, &y, table).to_string())
}

/// Checks `eval(x, y) == z` without allocating a result string. `scratch`
/// is reused between calls in hot loops.
pub(crate) fn eval_matches(x: &[u8], y: &[u8], z: &[u8], table: OperationTable, scratch: &mut Vec<u8>) -> bool {
    let n = eval_lsb_first(x, y, table, scratch);
    n == z.len() && scratch[..n].iter().rev().eq(z.iter())
}

/// Which of the three digit groups an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Segment {
    X,
    Y,
    Z,
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Segment::X => "left",
            Segment::Y => "middle",
            Segment::Z => "right",
        };
        f.write_str(name)
    }
}

/// Operator symbols of the grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operator {
    Plus,
    Equals,
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Operator::Plus => "+",
            Operator::Equals => "=",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("missing {0} operator")]
    MissingOperator(Operator),
    #[error("{0} operator appears more than once")]
    DuplicateOperator(Operator),
    #[error("= appears before +")]
    OperatorOrder,
    #[error("empty {0} segment")]
    EmptySegment(Segment),
    #[error("leading zero in {0} segment")]
    LeadingZero(Segment),
    #[error(transparent)]
    Foreign(#[from] ForeignSymbol),
}

/// A syntactically valid equation `x + y = z`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParsedEquation {
    pub x: BitString,
    pub y: BitString,
    pub z: BitString,
}

impl ParsedEquation {
    pub fn to_symbols(&self) -> Vec<Symbol> {
        let mut out = Vec::with_capacity(self.x.len() + self.y.len() + self.z.len() + 2);
        out.extend(self.x.to_symbols());
        out.push(Symbol::Plus);
        out.extend(self.y.to_symbols());
        out.push(Symbol::Equals);
        out.extend(self.z.to_symbols());
        out
    }

    /// Total symbol count including both operators.
    pub fn symbol_len(&self) -> usize {
        self.x.len() + self.y.len() + self.z.len() + 2
    }

    pub fn holds_under(&self, table: OperationTable) -> bool {
        let mut scratch = Vec::new();
        eval_matches(self.x.bits(), self.y.bits(), self.z.bits(), table, &mut scratch)
    }
}

impl fmt::Display for ParsedEquation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+{}={}", self.x, self.y, self.z)
    }
}

/// Positions of the operators in a symbol sequence, plus any grammar
/// problems with them. Shared by the parser and the structural checker.
#[derive(Debug, Default)]
pub(crate) struct OperatorScan {
    pub plus: Vec<usize>,
    pub equals: Vec<usize>,
}

impl OperatorScan {
    pub fn scan(symbols: &[Symbol]) -> Self {
        let mut scan = OperatorScan::default();
        for (i, s) in symbols.iter().enumerate() {
            match s {
                Symbol::Plus => scan.plus.push(i),
                Symbol::Equals => scan.equals.push(i),
                _ => {}
            }
        }
        scan
    }
}

fn segment_bits(symbols: &[Symbol]) -> Vec<u8> {
    symbols.iter().filter_map(|s| s.bit()).collect()
}

/// Parses a symbol sequence as `X+Y=Z`.
///
/// Succeeds iff there is exactly one `+` and exactly one `=`, the `+`
/// comes first, all three digit groups are nonempty and none has a
/// leading zero (the literal `0` is allowed).
pub fn parse_expression(symbols: &[Symbol]) -> Result<ParsedEquation, ParseError> {
    let scan = OperatorScan::scan(symbols);
    match scan.plus.len() {
        0 => return Err(ParseError::MissingOperator(Operator::Plus)),
        1 => {}
        _ => return Err(ParseError::DuplicateOperator(Operator::Plus)),
    }
    match scan.equals.len() {
        0 => return Err(ParseError::MissingOperator(Operator::Equals)),
        1 => {}
        _ => return Err(ParseError::DuplicateOperator(Operator::Equals)),
    }
    let (p, e) = (scan.plus[0], scan.equals[0]);
    if e < p {
        return Err(ParseError::OperatorOrder);
    }
    let groups = [
        (Segment::X, &symbols[..p]),
        (Segment::Y, &symbols[p + 1..e]),
        (Segment::Z, &symbols[e + 1..]),
    ];
    let mut parts = Vec::with_capacity(3);
    for (segment, group) in groups {
        if group.is_empty() {
            return Err(ParseError::EmptySegment(segment));
        }
        let bits = BitString(segment_bits(group));
        if bits.has_illegal_leading_zero() {
            return Err(ParseError::LeadingZero(segment));
        }
        parts.push(bits);
    }
    let z = parts.pop().unwrap();
    let y = parts.pop().unwrap();
    let x = parts.pop().unwrap();
    Ok(ParsedEquation { x, y, z })
}

/// Parses text such as `"1+1=10"`.
pub fn parse_expression_str(text: &str) -> Result<ParsedEquation, ParseError> {
    let symbols = symbols_from_str(text)?;
    parse_expression(&symbols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbol::Symbol::*;
    use crate::table::{make_standard_table, make_xor_table};

    #[test]
    fn eval_examples() {
        let std = make_standard_table();
        assert_eq!(eval_str("1", "1", std).unwrap(), "10");
        assert_eq!(eval_str("11", "1", std).unwrap(), "100");
        assert_eq!(eval_str("1", "1", make_xor_table()).unwrap(), "0");
        assert_eq!(eval_str("0", "0", std).unwrap(), "0");
    }

    #[test]
    fn eval_rejects_bad_operands() {
        let std = make_standard_table();
        assert_eq!(eval_str("", "1", std), Err(BitStringError::Empty));
        assert_eq!(eval_str("1", "12", std), Err(BitStringError::NotABit('2')));
    }

    #[test]
    fn parse_examples() {
        let eq = parse_expression(&[One, Plus, One, Equals, One, Zero]).unwrap();
        assert_eq!(eq.x.to_string(), "1");
        assert_eq!(eq.y.to_string(), "1");
        assert_eq!(eq.z.to_string(), "10");

        assert_eq!(
            parse_expression(&[Plus, One, Equals, Zero]),
            Err(ParseError::EmptySegment(Segment::X))
        );
        assert_eq!(
            parse_expression(&[One, Plus, Zero, One, Equals, One]),
            Err(ParseError::LeadingZero(Segment::Y))
        );
    }

    #[test]
    fn parse_error_kinds() {
        assert_eq!(parse_expression_str("11=1"), Err(ParseError::MissingOperator(Operator::Plus)));
        assert_eq!(parse_expression_str("1+1"), Err(ParseError::MissingOperator(Operator::Equals)));
        assert_eq!(parse_expression_str("1+1+1=1"), Err(ParseError::DuplicateOperator(Operator::Plus)));
        assert_eq!(parse_expression_str("1+1=1=1"), Err(ParseError::DuplicateOperator(Operator::Equals)));
        assert_eq!(parse_expression_str("1=1+1"), Err(ParseError::OperatorOrder));
        assert_eq!(parse_expression_str("1+1="), Err(ParseError::EmptySegment(Segment::Z)));
        assert!(matches!(parse_expression_str("1+a=1"), Err(ParseError::Foreign(_))));
        assert!(parse_expression_str("0+0=0").is_ok());
    }

    #[test]
    fn integer_conversions() {
        assert_eq!(BitString::from_u64(0).to_string(), "0");
        assert_eq!(BitString::from_u64(6).to_string(), "110");
        assert_eq!("1011".parse::<BitString>().unwrap().to_u64(), Some(11));
    }
}
