//! Cooperative games: set functions `v: 2^N → worth` with `v(∅) = 0`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_bigint::BigInt;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::coalition::{full_mask, Coalition};
use crate::error::{Error, Result};
use crate::worth::{parse_rational, Rational, Worth};

/// Largest agent count accepted by exact (full enumeration) computations.
pub const EXACT_MAX_N: usize = 25;

/// Largest agent count a bitmask-keyed game table can hold.
pub const TABLE_MAX_N: usize = 64;

pub trait Game: Sync {
    type Worth: Worth;

    fn n(&self) -> usize;

    /// Worth of `s`. Implementations may assume `s.n() == self.n()`.
    fn worth(&self, s: &Coalition) -> Result<Self::Worth>;

    fn eval(&self, s: &Coalition) -> Result<Self::Worth> {
        if s.n() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: s.n(),
            });
        }
        self.worth(s)
    }

    /// Whether `worth` may be called from several threads at once.
    fn parallel_safe(&self) -> bool {
        true
    }
}

impl<G: Game + ?Sized> Game for &G {
    type Worth = G::Worth;

    fn n(&self) -> usize {
        (**self).n()
    }

    fn worth(&self, s: &Coalition) -> Result<Self::Worth> {
        (**self).worth(s)
    }

    fn parallel_safe(&self) -> bool {
        (**self).parallel_safe()
    }
}

/// A game given by an explicit (sparse) table; unlisted coalitions are worth 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TableGame<W> {
    n: usize,
    worths: HashMap<u64, W>,
}

impl<W: Worth> TableGame<W> {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n > TABLE_MAX_N {
            return Err(Error::UnsupportedAgentCount {
                n,
                max: TABLE_MAX_N,
            });
        }
        Ok(TableGame {
            n,
            worths: HashMap::new(),
        })
    }

    /// Dense construction from a closure over bitmasks (`n ≤ EXACT_MAX_N`).
    pub fn from_fn(n: usize, mut f: impl FnMut(u64) -> W) -> Result<Self> {
        if n > EXACT_MAX_N {
            return Err(Error::ExactGuard {
                n,
                max: EXACT_MAX_N,
            });
        }
        let mut g = Self::new(n)?;
        for mask in 1..=full_mask(n) {
            let w = f(mask);
            if !w.is_zero_worth() || W::KIND == crate::worth::WorthKind::Numeric {
                g.worths.insert(mask, w);
            }
        }
        Ok(g)
    }

    /// Materialise any game into a table (`n ≤ EXACT_MAX_N`).
    pub fn from_game<G: Game<Worth = W>>(game: &G) -> Result<Self> {
        let table = WorthTable::tabulate(game)?;
        Self::from_fn(game.n(), |m| table.get(m).clone())
    }

    pub fn set(&mut self, s: &Coalition, w: W) -> Result<()> {
        if s.n() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: s.n(),
            });
        }
        let bits = s.bits().expect("table games hold at most 64 agents");
        if bits == 0 {
            if !w.is_zero_worth() {
                return Err(Error::NonZeroEmptyWorth(w.to_string()));
            }
            return Ok(());
        }
        self.worths.insert(bits, w);
        Ok(())
    }

    /// `a·v + b·w` over two games on the same agents.
    pub fn linear_combination<G, H>(a: &W, v: &G, b: &W, w: &H) -> Result<Self>
    where
        G: Game<Worth = W>,
        H: Game<Worth = W>,
    {
        if v.n() != w.n() {
            return Err(Error::DimensionMismatch {
                expected: v.n(),
                found: w.n(),
            });
        }
        let tv = WorthTable::tabulate(v)?;
        let tw = WorthTable::tabulate(w)?;
        Self::from_fn(v.n(), |m| {
            a.clone() * tv.get(m).clone() + b.clone() * tw.get(m).clone()
        })
    }
}

impl<W: Worth> Game for TableGame<W> {
    type Worth = W;

    fn n(&self) -> usize {
        self.n
    }

    fn worth(&self, s: &Coalition) -> Result<W> {
        let bits = s.bits().expect("table games hold at most 64 agents");
        Ok(self.worths.get(&bits).cloned().unwrap_or_else(W::zero))
    }
}

/// Games used as worked examples and in uniqueness arguments.
#[derive(Debug, Clone, PartialEq)]
pub enum BuiltinGame {
    /// Worth 1 for a strict majority of agents (`t ≥ 2` when `n = 3`).
    Majority {
        n: usize,
    },
    /// `Σ_{i∈T} 1 + c · max(0, t − 2)`.
    LinearCrosses {
        n: usize,
        c: Rational,
    },
    /// Worth 1 exactly on coalition `r`.
    Identity {
        r: Coalition,
    },
    /// Worth 1 when `t ≥ n − c − 1 + t₀`, stored as the resolved threshold.
    Threshold {
        n: usize,
        threshold: usize,
    },
    ConstantZero {
        n: usize,
    },
}

impl BuiltinGame {
    pub fn name(&self) -> &'static str {
        match self {
            BuiltinGame::Majority { .. } => "majority",
            BuiltinGame::LinearCrosses { .. } => "linear_crosses",
            BuiltinGame::Identity { .. } => "identity",
            BuiltinGame::Threshold { .. } => "threshold_x",
            BuiltinGame::ConstantZero { .. } => "constant_zero",
        }
    }
}

impl Game for BuiltinGame {
    type Worth = Rational;

    fn n(&self) -> usize {
        match self {
            BuiltinGame::Majority { n }
            | BuiltinGame::LinearCrosses { n, .. }
            | BuiltinGame::Threshold { n, .. }
            | BuiltinGame::ConstantZero { n } => *n,
            BuiltinGame::Identity { r } => r.n(),
        }
    }

    fn worth(&self, s: &Coalition) -> Result<Rational> {
        let t = s.len();
        let one = || Rational::from_integer(BigInt::from(1));
        Ok(match self {
            BuiltinGame::Majority { n } => {
                if 2 * t > *n {
                    one()
                } else {
                    Rational::zero()
                }
            }
            BuiltinGame::LinearCrosses { c, .. } => {
                let base = Rational::from_integer(BigInt::from(t));
                base + c * Rational::from_integer(BigInt::from(t.saturating_sub(2)))
            }
            BuiltinGame::Identity { r } => {
                if s == r {
                    one()
                } else {
                    Rational::zero()
                }
            }
            BuiltinGame::Threshold { threshold, .. } => {
                if t >= *threshold {
                    one()
                } else {
                    Rational::zero()
                }
            }
            BuiltinGame::ConstantZero { .. } => Rational::zero(),
        })
    }
}

/// Named parameters for [`builtin_game`]; must include `n`.
pub type Params = BTreeMap<String, String>;

fn param<'a>(params: &'a Params, key: &str) -> Result<&'a str> {
    params
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::InvalidParameter(format!("missing parameter `{key}`")))
}

fn int_param(params: &Params, key: &str) -> Result<i64> {
    let raw = param(params, key)?;
    raw.trim()
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("`{key}` must be an integer, got `{raw}`")))
}

pub fn builtin_game(name: &str, params: &Params) -> Result<BuiltinGame> {
    let n = int_param(params, "n")?;
    if n < 1 {
        return Err(Error::InvalidParameter(format!(
            "n must be positive, got {n}"
        )));
    }
    let n = n as usize;
    let game = match name {
        "majority" => BuiltinGame::Majority { n },
        "linear_crosses" => BuiltinGame::LinearCrosses {
            n,
            c: parse_rational(param(params, "c")?)?,
        },
        "identity" => {
            let r = Coalition::parse_key(param(params, "R")?, n)?;
            if r.is_empty() {
                return Err(Error::InvalidParameter(
                    "identity game needs a non-empty R".into(),
                ));
            }
            BuiltinGame::Identity { r }
        }
        "threshold_x" => {
            let c = int_param(params, "c")?;
            let t = int_param(params, "t")?;
            let threshold = n as i64 - c - 1 + t;
            if threshold < 1 || threshold > n as i64 {
                return Err(Error::InvalidParameter(format!(
                    "threshold n-c-1+t = {threshold} must lie in 1..={n}"
                )));
            }
            BuiltinGame::Threshold {
                n,
                threshold: threshold as usize,
            }
        }
        "constant_zero" => BuiltinGame::ConstantZero { n },
        other => {
            return Err(Error::Unknown {
                what: "builtin game",
                name: other.to_string(),
            })
        }
    };
    Ok(game)
}

/// Parse `majority:3`, `linear_crosses:3:c=-2`, `identity:3:R=0,1`,
/// `threshold_x:4:c=1:t=2`, `constant_zero:3`.
pub fn parse_builtin_game(spec: &str) -> Result<BuiltinGame> {
    let mut parts = spec.split(':');
    let name = parts.next().unwrap_or_default();
    let n = parts
        .next()
        .ok_or_else(|| Error::InvalidParameter(format!("`{spec}`: missing agent count")))?;
    let mut params = Params::new();
    params.insert("n".into(), n.into());
    for kv in parts {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::InvalidParameter(format!("`{kv}` is not key=value")))?;
        params.insert(k.trim().into(), v.trim().into());
    }
    builtin_game(name, &params)
}

/// A bijection on `0..n`.
#[derive(Clone, PartialEq, Eq)]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; map.len()];
        for &i in &map {
            if i >= map.len() || seen[i] {
                return Err(Error::InvalidParameter(format!(
                    "{map:?} is not a bijection"
                )));
            }
            seen[i] = true;
        }
        Ok(Permutation { map })
    }

    pub fn identity(n: usize) -> Self {
        Permutation {
            map: (0..n).collect(),
        }
    }

    pub fn swap(n: usize, i: usize, j: usize) -> Result<Self> {
        let mut map: Vec<usize> = (0..n).collect();
        if i >= n || j >= n {
            return Err(Error::AgentOutOfRange { agent: i.max(j), n });
        }
        map.swap(i, j);
        Ok(Permutation { map })
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut map: Vec<usize> = (0..n).collect();
        map.shuffle(rng);
        Permutation { map }
    }

    pub fn n(&self) -> usize {
        self.map.len()
    }

    pub fn apply(&self, agent: usize) -> usize {
        self.map[agent]
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.map.len()];
        for (i, &j) in self.map.iter().enumerate() {
            inv[j] = i;
        }
        Permutation { map: inv }
    }

    /// `σ(S) = {σ(i) : i ∈ S}`.
    pub fn apply_coalition(&self, s: &Coalition) -> Result<Coalition> {
        if s.n() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: s.n(),
            });
        }
        Coalition::from_agents(s.agents().map(|i| self.map[i]), s.n())
    }
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "σ{:?}", self.map)
    }
}

/// The permuted game `σv`, defined by `σv(σ(S)) = v(S)`.
#[derive(Debug, Clone)]
pub struct PermutedGame<G> {
    inner: G,
    inverse: Permutation,
}

pub fn permute_game<G: Game>(game: G, sigma: &Permutation) -> Result<PermutedGame<G>> {
    if sigma.n() != game.n() {
        return Err(Error::DimensionMismatch {
            expected: game.n(),
            found: sigma.n(),
        });
    }
    Ok(PermutedGame {
        inner: game,
        inverse: sigma.inverse(),
    })
}

impl<G: Game> Game for PermutedGame<G> {
    type Worth = G::Worth;

    fn n(&self) -> usize {
        self.inner.n()
    }

    fn worth(&self, s: &Coalition) -> Result<G::Worth> {
        self.inner.worth(&self.inverse.apply_coalition(s)?)
    }

    fn parallel_safe(&self) -> bool {
        self.inner.parallel_safe()
    }
}

/// Every worth of a game, indexed by bitmask. Filled once so the exact
/// indices never evaluate the game twice.
#[derive(Debug, Clone)]
pub struct WorthTable<W> {
    n: usize,
    values: Vec<W>,
}

impl<W: Worth> WorthTable<W> {
    pub fn tabulate<G: Game<Worth = W>>(game: &G) -> Result<Self> {
        let n = game.n();
        if n > EXACT_MAX_N {
            return Err(Error::ExactGuard {
                n,
                max: EXACT_MAX_N,
            });
        }
        let size = 1usize << n;
        let mut values = Vec::with_capacity(size);
        values.push(W::zero());
        for mask in 1..size as u64 {
            values.push(game.worth(&Coalition::from_bits_unchecked(mask, n))?);
        }
        let empty = game.worth(&Coalition::empty(n))?;
        if !empty.is_zero_worth() {
            return Err(Error::NonZeroEmptyWorth(empty.to_string()));
        }
        Ok(WorthTable { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, mask: u64) -> &W {
        &self.values[mask as usize]
    }

    pub fn full(&self) -> &W {
        self.get(full_mask(self.n))
    }
}

impl<W: Worth> Game for WorthTable<W> {
    type Worth = W;

    fn n(&self) -> usize {
        self.n
    }

    fn worth(&self, s: &Coalition) -> Result<W> {
        Ok(self
            .get(s.bits().expect("worth tables hold at most 25 agents"))
            .clone())
    }
}
