//! The four-symbol alphabet of binary equations.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Number of distinct symbols. Perception output rows have this width.
pub const ALPHABET_SIZE: usize = 4;

/// One glyph class: `0`, `1`, `+` or `=`.
///
/// The discriminant is the class index used by perception rows, so
/// `Symbol::Zero as usize == 0` and so on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Symbol {
    #[serde(rename = "0")]
    Zero = 0,
    #[serde(rename = "1")]
    One = 1,
    #[serde(rename = "+")]
    Plus = 2,
    #[serde(rename = "=")]
    Equals = 3,
}

impl Symbol {
    pub const ALL: [Symbol; ALPHABET_SIZE] = [Symbol::Zero, Symbol::One, Symbol::Plus, Symbol::Equals];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Symbol> {
        Symbol::ALL.get(index).copied()
    }

    pub fn from_char(c: char) -> Option<Symbol> {
        match c {
            '0' => Some(Symbol::Zero),
            '1' => Some(Symbol::One),
            '+' => Some(Symbol::Plus),
            '=' => Some(Symbol::Equals),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Symbol::Zero => '0',
            Symbol::One => '1',
            Symbol::Plus => '+',
            Symbol::Equals => '=',
        }
    }

    pub fn is_digit(self) -> bool {
        matches!(self, Symbol::Zero | Symbol::One)
    }

    /// The bit value of a digit symbol.
    pub fn bit(self) -> Option<u8> {
        match self {
            Symbol::Zero => Some(0),
            Symbol::One => Some(1),
            _ => None,
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// Error returned when text contains a character outside the alphabet.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("character {found:?} at position {position} is not one of 0, 1, +, =")]
pub struct ForeignSymbol {
    pub position: usize,
    pub found: char,
}

/// Converts text like `"1+1=10"` into symbols. Whitespace is not skipped.
pub fn symbols_from_str(text: &str) -> Result<Vec<Symbol>, ForeignSymbol> {
    text.chars()
        .enumerate()
        .map(|(position, c)| Symbol::from_char(c).ok_or(ForeignSymbol { position, found: c }))
        .collect()
}

pub fn symbols_to_string(symbols: &[Symbol]) -> String {
    symbols.iter().map(|s| s.as_char()).collect()
}
