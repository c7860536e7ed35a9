//! Closed-form positive rational sequences `i -> q_i` (indices from 1) and
//! the greedy subsequence with `q_{i_k} >= k`.

use std::fmt;
use std::str::FromStr;

use num_traits::{One, Signed};
use serde::{Deserialize, Serialize};

use crate::rational::{format_rational, int, parse_rational, rat, Rational};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SequenceSpec {
    /// `q_i = i`.
    Linear,
    /// `q_i = i` for even `i`, `1/i` for odd `i`.
    Mixed,
    /// `q_i = value` for all `i`.
    Constant {
        #[serde(with = "crate::rational::serde_rational")]
        value: Rational,
    },
    /// Listed values for `i <= prefix.len()`, then the tail rule.
    Table {
        #[serde(with = "crate::rational::serde_rational::vec")]
        prefix: Vec<Rational>,
        tail: TableTail,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum TableTail {
    Linear,
    Constant {
        #[serde(with = "crate::rational::serde_rational")]
        value: Rational,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SequenceError {
    #[error("sequence value at index {index} is {value}, expected a positive rational")]
    NotPositive { index: u64, value: String },
    #[error("cannot parse sequence {0:?}; expected linear, mixed, constant:R or table:a,b,..[;tail=linear|constant:R]")]
    Parse(String),
    #[error("no index i with q_i >= {needed} found within {horizon} indices after {after}")]
    SupNotWitnessed { needed: u64, after: u64, horizon: u64 },
}

impl SequenceSpec {
    /// `q_i` for `i >= 1`.
    pub fn value(&self, i: u64) -> Rational {
        assert!(i >= 1, "sequences are indexed from 1");
        match self {
            SequenceSpec::Linear => int(i as i64),
            SequenceSpec::Mixed if i.is_multiple_of(2) => int(i as i64),
            SequenceSpec::Mixed => rat(1, i as i64),
            SequenceSpec::Constant { value } => value.clone(),
            SequenceSpec::Table { prefix, tail } => match prefix.get(i as usize - 1) {
                Some(v) => v.clone(),
                None => match tail {
                    TableTail::Linear => int(i as i64),
                    TableTail::Constant { value } => value.clone(),
                },
            },
        }
    }

    pub fn validate(&self) -> Result<(), SequenceError> {
        let bad = |index: u64, v: &Rational| SequenceError::NotPositive {
            index,
            value: format_rational(v),
        };
        match self {
            SequenceSpec::Constant { value } if !value.is_positive() => Err(bad(1, value)),
            SequenceSpec::Table { prefix, tail } => {
                for (k, v) in prefix.iter().enumerate() {
                    if !v.is_positive() {
                        return Err(bad(k as u64 + 1, v));
                    }
                }
                match tail {
                    TableTail::Constant { value } if !value.is_positive() => {
                        Err(bad(prefix.len() as u64 + 1, value))
                    }
                    _ => Ok(()),
                }
            }
            _ => Ok(()),
        }
    }

    /// Whether `q` takes pairwise distinct values.
    pub fn is_injective(&self) -> bool {
        match self {
            SequenceSpec::Linear | SequenceSpec::Mixed => true,
            SequenceSpec::Constant { .. } => false,
            SequenceSpec::Table { prefix, tail } => {
                let mut seen: Vec<&Rational> = prefix.iter().collect();
                seen.sort();
                if seen.windows(2).any(|w| w[0] == w[1]) {
                    return false;
                }
                match tail {
                    TableTail::Constant { .. } => false,
                    // tail values are the integers > prefix.len()
                    TableTail::Linear => !prefix.iter().any(|v| {
                        v.denom().is_one() && *v.numer() > (prefix.len() as u64).into()
                    }),
                }
            }
        }
    }

    /// Whether `q_i = i` for every `i`.
    pub fn is_identity(&self) -> bool {
        match self {
            SequenceSpec::Linear => true,
            SequenceSpec::Table { prefix, tail: TableTail::Linear } => prefix
                .iter()
                .enumerate()
                .all(|(k, v)| *v == int(k as i64 + 1)),
            _ => false,
        }
    }

    /// Greedy subsequence `i_1 < i_2 < ...` with `q_{i_k} >= k`, each index
    /// the smallest admissible one. `horizon` bounds the scan gap between
    /// consecutive indices.
    pub fn greedy_subsequence(&self, horizon: u64) -> GreedySubsequence<'_> {
        GreedySubsequence {
            q: self,
            k: 0,
            last: 0,
            horizon,
            done: false,
        }
    }
}

impl fmt::Display for SequenceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SequenceSpec::Linear => write!(f, "linear"),
            SequenceSpec::Mixed => write!(f, "mixed"),
            SequenceSpec::Constant { value } => write!(f, "constant:{}", format_rational(value)),
            SequenceSpec::Table { prefix, tail } => {
                let vals: Vec<String> = prefix.iter().map(format_rational).collect();
                write!(f, "table:{}", vals.join(","))?;
                match tail {
                    TableTail::Linear => write!(f, ";tail=linear"),
                    TableTail::Constant { value } => {
                        write!(f, ";tail=constant:{}", format_rational(value))
                    }
                }
            }
        }
    }
}

impl FromStr for SequenceSpec {
    type Err = SequenceError;

    fn from_str(s: &str) -> Result<Self, SequenceError> {
        let err = || SequenceError::Parse(s.to_string());
        let s = s.trim();
        let spec = match s {
            "linear" => SequenceSpec::Linear,
            "mixed" => SequenceSpec::Mixed,
            _ => {
                if let Some(v) = s.strip_prefix("constant:") {
                    SequenceSpec::Constant {
                        value: parse_rational(v).map_err(|_| err())?,
                    }
                } else if let Some(rest) = s.strip_prefix("table:") {
                    let (vals, tail) = rest.split_once(';').unwrap_or((rest, "tail=linear"));
                    let prefix = vals
                        .split(',')
                        .filter(|v| !v.trim().is_empty())
                        .map(parse_rational)
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|_| err())?;
                    let tail = match tail.trim().strip_prefix("tail=").ok_or_else(err)? {
                        "linear" => TableTail::Linear,
                        t => TableTail::Constant {
                            value: t
                                .strip_prefix("constant:")
                                .and_then(|v| parse_rational(v).ok())
                                .ok_or_else(err)?,
                        },
                    };
                    SequenceSpec::Table { prefix, tail }
                } else {
                    return Err(err());
                }
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// One step of the greedy subsequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OmegaEntry {
    pub k: u64,
    pub index: u64,
    pub q: Rational,
}

pub struct GreedySubsequence<'a> {
    q: &'a SequenceSpec,
    k: u64,
    last: u64,
    horizon: u64,
    done: bool,
}

impl Iterator for GreedySubsequence<'_> {
    type Item = Result<OmegaEntry, SequenceError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let k = self.k + 1;
        let needed = int(k as i64);
        // fast paths for the closed forms whose answer is known
        let found = match self.q {
            SequenceSpec::Linear => Some(k.max(self.last + 1)),
            _ => (self.last + 1..=self.last.saturating_add(self.horizon))
                .find(|&i| self.q.value(i) >= needed),
        };
        match found {
            Some(index) => {
                self.k = k;
                self.last = index;
                Some(Ok(OmegaEntry {
                    k,
                    index,
                    q: self.q.value(index),
                }))
            }
            None => {
                self.done = true;
                Some(Err(SequenceError::SupNotWitnessed {
                    needed: k,
                    after: self.last,
                    horizon: self.horizon,
                }))
            }
        }
    }
}

/// Indices `<= upto` that belong to the greedy subsequence.
pub fn omega_prefix(q: &SequenceSpec, upto: u64, horizon: u64) -> Result<Vec<u64>, SequenceError> {
    let mut out = Vec::new();
    for entry in q.greedy_subsequence(horizon) {
        let e = entry?;
        if e.index > upto {
            break;
        }
        out.push(e.index);
    }
    Ok(out)
}
