use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A unary-encoding report: one symbol in `{+1, -1, 0}` per padded key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UeReport {
    pub bits: Vec<i8>,
}

impl UeReport {
    pub fn d_prime(&self) -> usize {
        self.bits.len()
    }

    /// Symbol reported for `key` (1-based).
    pub fn at(&self, key: u32) -> i8 {
        self.bits[key as usize - 1]
    }

    /// Decode a base-3 index (`0 → 0`, `1 → +1`, `2 → -1`, least significant position first).
    pub fn from_index(mut index: usize, d_prime: usize) -> Self {
        let bits = (0..d_prime)
            .map(|_| {
                let s = match index % 3 {
                    0 => 0,
                    1 => 1,
                    _ => -1,
                };
                index /= 3;
                s
            })
            .collect();
        Self { bits }
    }

    pub fn index(&self) -> usize {
        self.bits.iter().rev().fold(0, |acc, &s| {
            acc * 3
                + match s {
                    0 => 0,
                    1 => 1,
                    _ => 2,
                }
        })
    }
}

impl fmt::Display for UeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &s in &self.bits {
            f.write_str(match s {
                1 => "+",
                -1 => "-",
                _ => "0",
            })?;
        }
        Ok(())
    }
}

impl FromStr for UeReport {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .trim()
            .chars()
            .map(|c| match c {
                '+' => Ok(1),
                '-' => Ok(-1),
                '0' => Ok(0),
                other => Err(Error::Parse {
                    line: 0,
                    message: format!("unexpected symbol `{other}` in unary report"),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        if bits.is_empty() {
            return Err(Error::Parse { line: 0, message: "empty unary report".into() });
        }
        Ok(Self { bits })
    }
}

/// The non-zero positions of a unary-encoding report.
///
/// Distributed exactly like [`UeReport`], but costs `O(b·d')` instead of
/// `O(d')` to produce; the experiment harness uses it for large domains.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseUeReport {
    pub d_prime: usize,
    /// `(key, ±1)` sorted by key.
    pub entries: Vec<(u32, i8)>,
}

impl SparseUeReport {
    pub fn to_dense(&self) -> UeReport {
        let mut bits = vec![0i8; self.d_prime];
        for &(k, s) in &self.entries {
            bits[k as usize - 1] = s;
        }
        UeReport { bits }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GrrReport {
    pub key: u32,
    pub value: i8,
}

impl fmt::Display for GrrReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.key, self.value)
    }
}

impl FromStr for GrrReport {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse { line: 0, message: format!("expected `key,±1`, got `{s}`") };
        let (k, v) = s.trim().split_once(',').ok_or_else(bad)?;
        let key: u32 = k.trim().parse().map_err(|_| bad())?;
        let value: i8 = v.trim().parse().map_err(|_| bad())?;
        if key == 0 || (value != 1 && value != -1) {
            return Err(bad());
        }
        Ok(Self { key, value })
    }
}

/// Single-iteration PrivKV report: sampled index, perturbed possession bit, perturbed value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PrivKvReport {
    pub index: u32,
    pub key_bit: u8,
    /// `0` exactly when `key_bit == 0`.
    pub value: i8,
}

impl fmt::Display for PrivKvReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.index, self.key_bit, self.value)
    }
}

impl FromStr for PrivKvReport {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse { line: 0, message: format!("expected `j,bit,v`, got `{s}`") };
        let mut parts = s.trim().split(',').map(str::trim);
        let index: u32 = parts.next().and_then(|x| x.parse().ok()).ok_or_else(bad)?;
        let key_bit: u8 = parts.next().and_then(|x| x.parse().ok()).ok_or_else(bad)?;
        let value: i8 = parts.next().and_then(|x| x.parse().ok()).ok_or_else(bad)?;
        if parts.next().is_some() || index == 0 || key_bit > 1 || !(-1..=1).contains(&value) {
            return Err(bad());
        }
        if (key_bit == 0) != (value == 0) {
            return Err(bad());
        }
        Ok(Self { index, key_bit, value })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportKind {
    Ue,
    Grr,
    PrivKv,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Report {
    Ue(UeReport),
    Grr(GrrReport),
    PrivKv(PrivKvReport),
}

impl Report {
    pub fn kind(&self) -> ReportKind {
        match self {
            Report::Ue(_) => ReportKind::Ue,
            Report::Grr(_) => ReportKind::Grr,
            Report::PrivKv(_) => ReportKind::PrivKv,
        }
    }

    /// Parse one serialized line; `line_no` is used in error messages.
    pub fn parse_line(kind: ReportKind, line: &str, line_no: usize) -> Result<Self> {
        let parsed = match kind {
            ReportKind::Ue => line.parse().map(Report::Ue),
            ReportKind::Grr => line.parse().map(Report::Grr),
            ReportKind::PrivKv => line.parse().map(Report::PrivKv),
        };
        parsed.map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse { line: line_no, message },
            other => other,
        })
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Report::Ue(r) => r.fmt(f),
            Report::Grr(r) => r.fmt(f),
            Report::PrivKv(r) => r.fmt(f),
        }
    }
}
