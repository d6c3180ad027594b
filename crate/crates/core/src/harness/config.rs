//! Scenario files: flat `key = value` lines, `#` starts a comment.
//!
//! ```text
//! protocol = newscs
//! params.d = 10
//! params.t = 12
//! params.max_bb = 2
//! seed = 7
//! network.malleate = all
//! network.delay = max
//! party.a.abort_at = open
//! ```

use std::collections::BTreeMap;

use crate::adversary::{ConflictOrder, DelayRule, Malleation, NetworkStrategy, Party, PartyStrategy, ProtocolKind};
use crate::chain::ChainParams;

use super::{HarnessError, Scenario};

const KEYS: [&str; 18] = [
    "protocol",
    "params.d",
    "params.t",
    "params.max_bb",
    "seed",
    "max_rounds",
    "fuzz",
    "network.malleate",
    "network.delay",
    "network.order",
    "party.a.abort_at",
    "party.a.withhold_secret",
    "party.a.bad_signature",
    "party.b.abort_at",
    "party.b.withhold_secret",
    "party.b.bad_signature",
    "party.a",
    "party.b",
];

fn invalid(field: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::ConfigInvalid { field: field.to_string(), message: message.into() }
}

fn parse_u64(field: &str, value: &str) -> Result<u64, HarnessError> {
    value.parse().map_err(|_| invalid(field, format!("expected a non-negative integer, got `{value}`")))
}

fn parse_bool(field: &str, value: &str) -> Result<bool, HarnessError> {
    match value {
        "true" | "yes" => Ok(true),
        "false" | "no" => Ok(false),
        _ => Err(invalid(field, format!("expected true or false, got `{value}`"))),
    }
}

fn parse_delay(value: &str) -> Result<DelayRule, HarnessError> {
    match value {
        "honest" => Ok(DelayRule::Honest),
        "max" => Ok(DelayRule::Max),
        _ => match value.strip_prefix("table:") {
            Some(list) => list
                .split(',')
                .map(|k| parse_u64("network.delay", k.trim()))
                .collect::<Result<_, _>>()
                .map(DelayRule::Table),
            None => parse_u64("network.delay", value).map(DelayRule::Constant),
        },
    }
}

fn parse_party(party: Party, map: &BTreeMap<String, String>, fuzz: bool) -> Result<PartyStrategy, HarnessError> {
    let prefix = format!("party.{}", party.label().to_lowercase());
    let field = |name: &str| format!("{prefix}.{name}");
    let mut s = PartyStrategy::honest(party);
    if let Some(v) = map.get(&prefix) {
        if v != "honest" {
            return Err(invalid(&prefix, format!("only `honest` is accepted here, got `{v}`")));
        }
    }
    if let Some(v) = map.get(&field("abort_at")) {
        if v != "none" {
            s.abort_at = Some(v.parse().map_err(|e| invalid(&field("abort_at"), format!("{e}")))?);
        }
    }
    if let Some(v) = map.get(&field("withhold_secret")) {
        s.withhold_secret = parse_bool(&field("withhold_secret"), v)?;
    }
    if let Some(v) = map.get(&field("bad_signature")) {
        s.send_bad_signature = parse_bool(&field("bad_signature"), v)?;
    }
    s.validated(fuzz).map_err(|e| invalid(&prefix, e.to_string()))
}

/// Parses a scenario file.
pub fn parse_scenario(text: &str) -> Result<Scenario, HarnessError> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| invalid(&format!("line {}", n + 1), format!("expected `key = value`, got `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(invalid(key, "unknown key"));
        }
        if map.insert(key.to_string(), value.to_string()).is_some() {
            return Err(invalid(key, "duplicate key"));
        }
    }
    let get = |k: &str| map.get(k).map(String::as_str);

    let protocol: ProtocolKind = get("protocol")
        .ok_or_else(|| invalid("protocol", "missing"))?
        .parse()
        .map_err(|e| invalid("protocol", format!("{e}")))?;
    let d = get("params.d").map(|v| parse_u64("params.d", v)).transpose()?.unwrap_or(Scenario::DEFAULT_D);
    let t = get("params.t").map(|v| parse_u64("params.t", v)).transpose()?.unwrap_or(Scenario::DEFAULT_T);
    let max_bb = get("params.max_bb").map(|v| parse_u64("params.max_bb", v)).transpose()?.unwrap_or(1);
    let seed = get("seed").map(|v| parse_u64("seed", v)).transpose()?.unwrap_or(0);
    let fuzz = get("fuzz").map(|v| parse_bool("fuzz", v)).transpose()?.unwrap_or(false);
    let params = ChainParams::new(max_bb, d, t).map_err(|e| invalid("params", e.to_string()))?;

    let malleation = match get("network.malleate").unwrap_or("off") {
        "off" | "none" | "false" => Malleation::Off,
        "all" | "true" => Malleation::All,
        other => return Err(invalid("network.malleate", format!("expected off or all, got `{other}`"))),
    };
    let delay = parse_delay(get("network.delay").unwrap_or("honest"))?;
    let order = match get("network.order").unwrap_or("fifo") {
        "fifo" => ConflictOrder::Fifo,
        "lifo" => ConflictOrder::Lifo,
        other => return Err(invalid("network.order", format!("expected fifo or lifo, got `{other}`"))),
    };
    let network =
        NetworkStrategy::new(malleation, delay, order, max_bb).map_err(|e| invalid("network.delay", e.to_string()))?;

    let a = parse_party(Party::A, &map, fuzz)?;
    let b = parse_party(Party::B, &map, fuzz)?;
    let mut scenario = Scenario::new(protocol, params, network, seed).with_parties(a, b);
    if let Some(v) = get("max_rounds") {
        scenario = scenario.with_max_rounds(parse_u64("max_rounds", v)?);
    }
    scenario.validate()?;
    Ok(scenario)
}
