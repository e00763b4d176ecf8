//! JSON game files.
//!
//! ```json
//! {"n": 3, "k": 2, "worths": {"0,1": "1", "1,2": 1, "011": "1/2"}}
//! ```
//!
//! Keys are either sorted agent lists (`"0,2"`) or bit strings of exactly
//! `n ≥ 2` characters read as a binary numeral, so the rightmost character is
//! agent 0 (`"01"` is `{0}`). Values are `"p/q"` strings, decimal strings, or
//! JSON numbers; unlisted coalitions are worth 0. The writer always emits
//! agent-list keys and `"p/q"` values.

use std::path::Path;

use serde_json::{Map, Value};

use crate::coalition::{full_mask, Coalition};
use crate::error::{Error, Result};
use crate::game::{Game, TableGame, TABLE_MAX_N};
use crate::worth::{format_rational, parse_rational, Rational};

#[derive(Debug, Clone)]
pub struct GameFile {
    pub game: TableGame<Rational>,
    pub k: Option<usize>,
}

pub fn game_from_file(path: impl AsRef<Path>) -> Result<TableGame<Rational>> {
    load_game_file(path).map(|f| f.game)
}

pub fn load_game_file(path: impl AsRef<Path>) -> Result<GameFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_game_json(&text).map_err(|e| Error::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn parse_key(key: &str, n: usize) -> Result<Coalition> {
    let is_bitstring = n >= 2 && key.len() == n && key.chars().all(|c| c == '0' || c == '1');
    if is_bitstring {
        let bits = u64::from_str_radix(key, 2)
            .map_err(|_| Error::InvalidParameter(format!("bad bit-string key `{key}`")))?;
        return Coalition::from_bits(bits, n);
    }
    Coalition::parse_key(key, n)
}

fn parse_value(v: &Value) -> Result<Rational> {
    match v {
        Value::String(s) => parse_rational(s),
        Value::Number(num) => parse_rational(&num.to_string()),
        other => Err(Error::ParseNumber(other.to_string())),
    }
}

pub fn parse_game_json(text: &str) -> Result<GameFile> {
    let root: Value = serde_json::from_str(text)?;
    let obj = root
        .as_object()
        .ok_or_else(|| Error::InvalidParameter("game file must be a JSON object".into()))?;
    let n = obj
        .get("n")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::InvalidParameter("missing integer field `n`".into()))?
        as usize;
    if n == 0 || n > TABLE_MAX_N {
        return Err(Error::UnsupportedAgentCount {
            n,
            max: TABLE_MAX_N,
        });
    }
    let k = match obj.get("k") {
        None | Some(Value::Null) => None,
        Some(v) => {
            let k = v
                .as_u64()
                .ok_or_else(|| Error::InvalidParameter("`k` must be an integer".into()))?
                as usize;
            if k == 0 || k > n {
                return Err(Error::InvalidOrder { k, n });
            }
            Some(k)
        }
    };
    let mut game = TableGame::new(n)?;
    if let Some(worths) = obj.get("worths") {
        let map = worths
            .as_object()
            .ok_or_else(|| Error::InvalidParameter("`worths` must be an object".into()))?;
        for (key, value) in map {
            let s = parse_key(key, n)?;
            game.set(&s, parse_value(value)?)?;
        }
    }
    Ok(GameFile { game, k })
}

/// Serialise an exact game with `n ≤ 25`, listing every non-empty coalition.
pub fn game_to_json<G: Game<Worth = Rational>>(game: &G, k: Option<usize>) -> Result<Value> {
    let n = game.n();
    let table = crate::game::WorthTable::tabulate(game)?;
    let mut masks: Vec<u64> = (1..=full_mask(n)).collect();
    masks.sort_by_key(|&m| Coalition::from_bits_unchecked(m, n));
    let mut worths = Map::new();
    for m in masks {
        let key = Coalition::from_bits_unchecked(m, n).key();
        worths.insert(key, Value::String(format_rational(table.get(m))));
    }
    let mut root = Map::new();
    root.insert("n".into(), Value::from(n));
    if let Some(k) = k {
        root.insert("k".into(), Value::from(k));
    }
    root.insert("worths".into(), Value::Object(worths));
    Ok(Value::Object(root))
}

pub fn write_game_file<G: Game<Worth = Rational>>(
    game: &G,
    k: Option<usize>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let value = game_to_json(game, k)?;
    std::fs::write(path, serde_json::to_string_pretty(&value)? + "\n")?;
    Ok(())
}
