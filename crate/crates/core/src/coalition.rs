//! Coalitions of agents as bitsets.
//!
//! Up to 64 agents fit inline in one machine word; larger agent counts spill
//! to a heap-allocated word vector. Exact enumeration code works on raw
//! `u64` masks and only builds `Coalition` values at the API boundary.

use std::cmp::Ordering;
use std::fmt;

use smallvec::{smallvec, SmallVec};

use crate::error::{Error, Result};

const WORD: usize = 64;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Coalition {
    n: usize,
    words: SmallVec<[u64; 1]>,
}

fn word_count(n: usize) -> usize {
    n.div_ceil(WORD).max(1)
}

/// Mask with the low `n` bits set (`n` ≤ 64).
pub fn full_mask(n: usize) -> u64 {
    if n >= WORD {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

impl Coalition {
    pub fn empty(n: usize) -> Self {
        Coalition {
            n,
            words: smallvec![0; word_count(n)],
        }
    }

    pub fn full(n: usize) -> Self {
        let mut c = Self::empty(n);
        for i in 0..n {
            c.words[i / WORD] |= 1 << (i % WORD);
        }
        c
    }

    /// Build from a bitmask; agent `i` is present iff bit `i` is set.
    pub fn from_bits(bits: u64, n: usize) -> Result<Self> {
        if n > WORD {
            return Err(Error::InvalidParameter(format!(
                "bitmask form holds at most {WORD} agents, got n={n}"
            )));
        }
        if bits & !full_mask(n) != 0 {
            return Err(Error::InvalidParameter(format!(
                "bitmask {bits:#b} has bits beyond n={n}"
            )));
        }
        Ok(Self::from_bits_unchecked(bits, n))
    }

    pub(crate) fn from_bits_unchecked(bits: u64, n: usize) -> Self {
        let mut c = Self::empty(n);
        c.words[0] = bits;
        c
    }

    pub fn from_agents<I: IntoIterator<Item = usize>>(agents: I, n: usize) -> Result<Self> {
        let mut c = Self::empty(n);
        for a in agents {
            if a >= n {
                return Err(Error::AgentOutOfRange { agent: a, n });
            }
            c.insert(a);
        }
        Ok(c)
    }

    /// Parse a sorted-agent-list key such as `"0,2,3"`; `""` is the empty set.
    pub fn parse_key(key: &str, n: usize) -> Result<Self> {
        let key = key.trim();
        if key.is_empty() || key == "{}" {
            return Ok(Self::empty(n));
        }
        let agents = key
            .split(',')
            .map(|a| {
                a.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidParameter(format!("bad agent `{a}` in `{key}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_agents(agents, n)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// The bitmask, when the coalition lives on at most 64 agents.
    pub fn bits(&self) -> Option<u64> {
        (self.n <= WORD).then(|| self.words[0])
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn contains(&self, agent: usize) -> bool {
        agent < self.n && self.words[agent / WORD] >> (agent % WORD) & 1 == 1
    }

    /// Panics if `agent >= n`.
    pub fn insert(&mut self, agent: usize) {
        assert!(
            agent < self.n,
            "agent {agent} out of range for n={}",
            self.n
        );
        self.words[agent / WORD] |= 1 << (agent % WORD);
    }

    pub fn remove(&mut self, agent: usize) {
        if agent < self.n {
            self.words[agent / WORD] &= !(1 << (agent % WORD));
        }
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        Ok(())
    }

    pub fn union(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let mut c = self.clone();
        c.union_with(other);
        Ok(c)
    }

    /// In-place union; callers guarantee equal `n`.
    pub fn union_with(&mut self, other: &Self) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= *b;
        }
    }

    pub fn difference(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let mut c = self.clone();
        for (a, b) in c.words.iter_mut().zip(&other.words) {
            *a &= !*b;
        }
        Ok(c)
    }

    pub fn complement(&self) -> Self {
        let full = Self::full(self.n);
        let mut c = full;
        for (a, b) in c.words.iter_mut().zip(&self.words) {
            *a &= !*b;
        }
        c
    }

    pub fn is_disjoint(&self, other: &Self) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & b == 0)
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.words
            .iter()
            .zip(&other.words)
            .all(|(a, b)| a & !b == 0)
    }

    /// Agents in increasing order.
    pub fn agents(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let b = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * WORD + b)
            })
        })
    }

    /// Sorted-agent-list key, e.g. `"0,2"`; the empty coalition is `""`.
    pub fn key(&self) -> String {
        self.agents()
            .map(|a| a.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Key built from agent names instead of indices.
    pub fn named_key<S: AsRef<str>>(&self, names: &[S]) -> String {
        self.agents()
            .map(|a| {
                names
                    .get(a)
                    .map_or_else(|| a.to_string(), |s| s.as_ref().to_string())
            })
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Coalitions order by cardinality, then lexicographically by agent list.
impl Ord for Coalition {
    fn cmp(&self, other: &Self) -> Ordering {
        self.n
            .cmp(&other.n)
            .then_with(|| self.len().cmp(&other.len()))
            .then_with(|| self.agents().cmp(other.agents()))
    }
}

impl PartialOrd for Coalition {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.key())
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.key())
    }
}

/// All submasks of `mask`, including `0` and `mask` itself (carry-rippler).
pub fn submasks(mask: u64) -> impl Iterator<Item = u64> {
    let mut next = Some(0u64);
    std::iter::from_fn(move || {
        let cur = next?;
        next = if cur == mask {
            None
        } else {
            Some((cur.wrapping_sub(mask)) & mask)
        };
        Some(cur)
    })
}

/// Masks over `n` agents with popcount in `1..=k`, ordered by size then
/// lexicographic agent list.
pub fn masks_up_to(n: usize, k: usize) -> Vec<u64> {
    let mut out: Vec<u64> = (1..=full_mask(n))
        .filter(|m| (m.count_ones() as usize) <= k)
        .collect();
    out.sort_by(|a, b| {
        a.count_ones()
            .cmp(&b.count_ones())
            .then_with(|| mask_agents(*a).cmp(mask_agents(*b)))
    });
    out
}

fn mask_agents(mut m: u64) -> impl Iterator<Item = u32> {
    std::iter::from_fn(move || {
        if m == 0 {
            return None;
        }
        let b = m.trailing_zeros();
        m &= m - 1;
        Some(b)
    })
}
