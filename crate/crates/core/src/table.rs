//! Full-adder style operation tables: the hypothesis space of hidden
//! arithmetic rules.
//!
//! A table maps every input triple `(a, b, c_in)` to an output pair
//! `(s, c_out)`. There are 8 inputs with 4 possible outputs each, so the
//! space has exactly 4^8 = 65,536 members, each identified by a 16-bit
//! code. Input `i = a<<2 | b<<1 | c_in` stores its sum bit at code bit
//! `2i` and its carry bit at code bit `2i + 1`.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Number of distinct tables.
pub const TABLE_COUNT: usize = 1 << 16;

/// Input triple of one adder cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AdderInput {
    pub a: u8,
    pub b: u8,
    pub c_in: u8,
}

impl AdderInput {
    pub fn new(a: u8, b: u8, c_in: u8) -> Self {
        debug_assert!(a <= 1 && b <= 1 && c_in <= 1);
        AdderInput { a, b, c_in }
    }

    pub fn index(self) -> usize {
        ((self.a as usize) << 2) | ((self.b as usize) << 1) | self.c_in as usize
    }

    pub fn from_index(index: usize) -> Self {
        assert!(index < 8, "adder input index out of range");
        AdderInput {
            a: ((index >> 2) & 1) as u8,
            b: ((index >> 1) & 1) as u8,
            c_in: (index & 1) as u8,
        }
    }

    /// All 8 inputs in index order.
    pub fn all() -> impl Iterator<Item = AdderInput> {
        (0..8).map(AdderInput::from_index)
    }
}

/// Output pair of one adder cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AdderOutput {
    pub s: u8,
    pub c_out: u8,
}

/// A total table over all 8 adder inputs, stored as its canonical code.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OperationTable(u16);

impl OperationTable {
    pub fn from_code(code: u16) -> Self {
        OperationTable(code)
    }

    pub fn code(self) -> u16 {
        self.0
    }

    /// Builds a table from an output rule applied to every input.
    pub fn from_fn(mut rule: impl FnMut(AdderInput) -> AdderOutput) -> Self {
        let mut code = 0u16;
        for input in AdderInput::all() {
            let out = rule(input);
            let i = input.index();
            code |= ((out.s & 1) as u16) << (2 * i);
            code |= ((out.c_out & 1) as u16) << (2 * i + 1);
        }
        OperationTable(code)
    }

    pub fn get(self, input: AdderInput) -> AdderOutput {
        self.lookup(input.a, input.b, input.c_in)
    }

    #[inline]
    pub fn lookup(self, a: u8, b: u8, c_in: u8) -> AdderOutput {
        let i = ((a as u32) << 2) | ((b as u32) << 1) | c_in as u32;
        let bits = (self.0 >> (2 * i)) & 0b11;
        AdderOutput {
            s: (bits & 1) as u8,
            c_out: (bits >> 1) as u8,
        }
    }

    /// Returns a copy with one entry replaced.
    pub fn with_entry(self, input: AdderInput, out: AdderOutput) -> Self {
        let i = input.index();
        let mask = !(0b11u16 << (2 * i));
        let bits = (((out.c_out & 1) as u16) << 1) | (out.s & 1) as u16;
        OperationTable((self.0 & mask) | (bits << (2 * i)))
    }

    /// Iterates over every table in code order.
    pub fn all() -> impl Iterator<Item = OperationTable> {
        (0..=u16::MAX).map(OperationTable)
    }

    /// Lowercase four-digit hex, as used in hypothesis dumps.
    pub fn to_hex(self) -> String {
        format!("{:04x}", self.0)
    }

    pub fn from_hex(text: &str) -> Option<Self> {
        let t = text.trim();
        if t.is_empty() || t.len() > 4 {
            return None;
        }
        u16::from_str_radix(t, 16).ok().map(OperationTable)
    }
}

impl fmt::Debug for OperationTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "OperationTable({:#06x})", self.0)
    }
}

impl fmt::Display for OperationTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, input) in AdderInput::all().enumerate() {
            let out = self.get(input);
            if n > 0 {
                write!(f, " ")?;
            }
            write!(f, "{}{}{}->{}{}", input.a, input.b, input.c_in, out.s, out.c_out)?;
        }
        Ok(())
    }
}

/// Ordinary binary addition: `s = a ^ b ^ c_in`, `c_out = majority(a, b, c_in)`.
pub fn make_standard_table() -> OperationTable {
    OperationTable::from_fn(|i| AdderOutput {
        s: i.a ^ i.b ^ i.c_in,
        c_out: (i.a & i.b) | (i.a & i.c_in) | (i.b & i.c_in),
    })
}

/// Carry-free addition: `s = a ^ b ^ c_in`, `c_out = 0`.
pub fn make_xor_table() -> OperationTable {
    OperationTable::from_fn(|i| AdderOutput {
        s: i.a ^ i.b ^ i.c_in,
        c_out: 0,
    })
}
