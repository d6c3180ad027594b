//! Trace files.
//!
//! The `records` format is the canonical one: `#` header lines, then one
//! tab-separated record per ledger event in the order
//! `round event role txid body detail`, then a `# phase` footer. Details:
//!
//! ```text
//! genesis    out=10@A
//! broadcast  delay=2 malleated=yes
//! confirm    in=<txid>:0,<txid>:1 out=10@A,10@-
//! reject     UnknownInput
//! ```
//!
//! Output owners are `A`, `B` for pay-to-key outputs and `-` for composite
//! scripts.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

use crate::adversary::ProtocolKind;
use crate::chain::{TraceEvent, TraceKind};
use crate::crypto::{Digest, PublicKey};
use crate::txmodel::{Outpoint, TxOut};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Owner {
    A,
    B,
    Script,
}

impl Owner {
    fn as_str(self) -> &'static str {
        match self {
            Owner::A => "A",
            Owner::B => "B",
            Owner::Script => "-",
        }
    }
}

impl FromStr for Owner {
    type Err = ();

    fn from_str(s: &str) -> Result<Owner, ()> {
        match s {
            "A" => Ok(Owner::A),
            "B" => Ok(Owner::B),
            "-" => Ok(Owner::Script),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Detail {
    Genesis { outputs: Vec<(u64, Owner)> },
    Broadcast { delay: u64, malleated: bool },
    Confirm { inputs: Vec<Outpoint>, outputs: Vec<(u64, Owner)> },
    Reject { kind: String },
}

impl Detail {
    pub fn event(&self) -> &'static str {
        match self {
            Detail::Genesis { .. } => "genesis",
            Detail::Broadcast { .. } => "broadcast",
            Detail::Confirm { .. } => "confirm",
            Detail::Reject { .. } => "reject",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub round: u64,
    pub role: String,
    pub txid: Digest,
    pub body: Digest,
    pub detail: Detail,
}

impl TraceRecord {
    /// The party prefix of the role label.
    pub fn party(&self) -> &str {
        self.role.split('/').next().unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceHeader {
    pub protocol: ProtocolKind,
    pub d: u64,
    pub t: u64,
    pub max_bb: u64,
    pub seed: u64,
    pub network: String,
    pub party_a: String,
    pub party_b: String,
    pub key_a: PublicKey,
    pub key_b: PublicKey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
    pub phase: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TraceFormat {
    Text,
    #[default]
    Records,
}

impl FromStr for TraceFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<TraceFormat, String> {
        match s {
            "text" => Ok(TraceFormat::Text),
            "records" => Ok(TraceFormat::Records),
            other => Err(format!("unknown format `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("trace line {line}: {message}")]
pub struct ParseTraceError {
    pub line: usize,
    pub message: String,
}

fn owner_of(out: &TxOut, key_a: &PublicKey, key_b: &PublicKey) -> Owner {
    match out.script.owner() {
        Some(k) if k == key_a => Owner::A,
        Some(k) if k == key_b => Owner::B,
        _ => Owner::Script,
    }
}

impl Trace {
    pub fn from_events(header: TraceHeader, events: &[TraceEvent], phase: &str) -> Trace {
        let outputs = |e: &TraceEvent| {
            e.tx.outputs.iter().map(|o| (o.value, owner_of(o, &header.key_a, &header.key_b))).collect::<Vec<_>>()
        };
        let records = events
            .iter()
            .map(|e| {
                let detail = match &e.kind {
                    TraceKind::Genesis => Detail::Genesis { outputs: outputs(e) },
                    TraceKind::Broadcast { delay, malleated } => {
                        Detail::Broadcast { delay: *delay, malleated: *malleated }
                    }
                    TraceKind::Confirm => {
                        Detail::Confirm { inputs: e.tx.inputs.iter().map(|i| i.prevout).collect(), outputs: outputs(e) }
                    }
                    TraceKind::Reject(err) => Detail::Reject { kind: err.kind().to_string() },
                };
                TraceRecord { round: e.round, role: e.role.clone(), txid: e.txid, body: e.body, detail }
            })
            .collect();
        Trace { header, records, phase: phase.to_string() }
    }

    pub fn render(&self, format: TraceFormat) -> String {
        match format {
            TraceFormat::Records => self.to_records(),
            TraceFormat::Text => self.to_text(),
        }
    }

    pub fn to_records(&self) -> String {
        let h = &self.header;
        let mut s = String::new();
        writeln!(s, "# protocol {}", h.protocol).unwrap();
        writeln!(s, "# params d={} t={} max_bb={}", h.d, h.t, h.max_bb).unwrap();
        writeln!(s, "# seed {}", h.seed).unwrap();
        writeln!(s, "# network {}", h.network).unwrap();
        writeln!(s, "# party.a {}", h.party_a).unwrap();
        writeln!(s, "# party.b {}", h.party_b).unwrap();
        writeln!(s, "# key A {}", h.key_a.0).unwrap();
        writeln!(s, "# key B {}", h.key_b.0).unwrap();
        for r in &self.records {
            writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}",
                r.round,
                r.detail.event(),
                r.role,
                r.txid,
                r.body,
                DetailFmt(&r.detail)
            )
            .unwrap();
        }
        writeln!(s, "# phase {}", self.phase).unwrap();
        s
    }

    pub fn to_text(&self) -> String {
        let h = &self.header;
        let mut s = String::new();
        writeln!(s, "{} d={} t={} max_bb={} seed={}", h.protocol, h.d, h.t, h.max_bb, h.seed).unwrap();
        writeln!(s, "network  {}", h.network).unwrap();
        writeln!(s, "A        {}", h.party_a).unwrap();
        writeln!(s, "B        {}", h.party_b).unwrap();
        for r in &self.records {
            writeln!(
                s,
                "[{:>3}] {:<9} {:<16} {}  {}",
                r.round,
                r.detail.event(),
                r.role,
                &r.txid.to_hex()[..12],
                DetailFmt(&r.detail).short()
            )
            .unwrap();
        }
        writeln!(s, "phase    {}", self.phase).unwrap();
        s
    }

    pub fn parse_records(text: &str) -> Result<Trace, ParseTraceError> {
        let mut fields: std::collections::BTreeMap<&str, &str> = std::collections::BTreeMap::new();
        let mut records = Vec::new();
        let mut phase = None;
        for (n, line) in text.lines().enumerate() {
            let err = |message: String| ParseTraceError { line: n + 1, message };
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("# ") {
                let (key, value) = match rest.strip_prefix("key ") {
                    Some(k) => k.split_once(' ').map(|(p, v)| (if p == "A" { "key.a" } else { "key.b" }, v)),
                    None => rest.split_once(' '),
                }
                .ok_or_else(|| err("header without value".into()))?;
                if key == "phase" {
                    phase = Some(value.to_string());
                } else {
                    fields.insert(key, value);
                }
                continue;
            }
            records.push(parse_record(line).map_err(err)?);
        }
        let err0 = |message: String| ParseTraceError { line: 0, message };
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| err0(format!("missing header `{k}`")));
        let key = |k: &str| -> Result<PublicKey, ParseTraceError> {
            Digest::from_hex(get(k)?).map(PublicKey).ok_or_else(|| err0(format!("bad key in `{k}`")))
        };
        let params = get("params")?;
        let param = |name: &str| -> Result<u64, ParseTraceError> {
            params
                .split(' ')
                .find_map(|kv| kv.strip_prefix(name).and_then(|v| v.strip_prefix('=')))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| err0(format!("bad params `{name}`")))
        };
        let header = TraceHeader {
            protocol: get("protocol")?.parse().map_err(|e| err0(format!("{e}")))?,
            d: param("d")?,
            t: param("t")?,
            max_bb: param("max_bb")?,
            seed: get("seed")?.parse().map_err(|_| err0("bad seed".into()))?,
            network: get("network")?.to_string(),
            party_a: get("party.a")?.to_string(),
            party_b: get("party.b")?.to_string(),
            key_a: key("key.a")?,
            key_b: key("key.b")?,
        };
        let phase = phase.ok_or_else(|| err0("missing `# phase` footer".into()))?;
        Ok(Trace { header, records, phase })
    }
}

fn parse_outputs(s: &str) -> Result<Vec<(u64, Owner)>, String> {
    let s = s.strip_prefix("out=").ok_or("expected out=")?;
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|item| {
            let (v, o) = item.split_once('@').ok_or("output without owner")?;
            Ok((v.parse().map_err(|_| "bad value")?, o.parse().map_err(|_| "bad owner")?))
        })
        .collect()
}

fn parse_outpoint(s: &str) -> Result<Outpoint, String> {
    let (id, idx) = s.split_once(':').ok_or("outpoint without index")?;
    Ok(Outpoint::new(Digest::from_hex(id).ok_or("bad outpoint txid")?, idx.parse().map_err(|_| "bad outpoint index")?))
}

fn parse_record(line: &str) -> Result<TraceRecord, String> {
    let cols: Vec<&str> = line.split('\t').collect();
    let [round, event, role, txid, body, detail] = cols[..] else {
        return Err(format!("expected 6 fields, got {}", cols.len()));
    };
    let digest = |s: &str| Digest::from_hex(s).ok_or_else(|| format!("bad digest `{s}`"));
    let detail = match event {
        "genesis" => Detail::Genesis { outputs: parse_outputs(detail)? },
        "broadcast" => {
            let mut delay = None;
            let mut malleated = None;
            for kv in detail.split(' ') {
                match kv.split_once('=') {
                    Some(("delay", v)) => delay = v.parse().ok(),
                    Some(("malleated", "yes")) => malleated = Some(true),
                    Some(("malleated", "no")) => malleated = Some(false),
                    _ => return Err(format!("bad broadcast detail `{kv}`")),
                }
            }
            Detail::Broadcast { delay: delay.ok_or("missing delay")?, malleated: malleated.ok_or("missing malleated")? }
        }
        "confirm" => {
            let (ins, outs) = detail.split_once(' ').ok_or("confirm detail needs in= and out=")?;
            let ins = ins.strip_prefix("in=").ok_or("expected in=")?;
            let inputs = if ins.is_empty() {
                Vec::new()
            } else {
                ins.split(',').map(parse_outpoint).collect::<Result<_, _>>()?
            };
            Detail::Confirm { inputs, outputs: parse_outputs(outs)? }
        }
        "reject" => Detail::Reject { kind: detail.to_string() },
        other => return Err(format!("unknown event `{other}`")),
    };
    Ok(TraceRecord {
        round: round.parse().map_err(|_| format!("bad round `{round}`"))?,
        role: role.to_string(),
        txid: digest(txid)?,
        body: digest(body)?,
        detail,
    })
}

struct DetailFmt<'a>(&'a Detail);

impl DetailFmt<'_> {
    fn outputs(outs: &[(u64, Owner)]) -> String {
        outs.iter().map(|(v, o)| format!("{v}@{}", o.as_str())).collect::<Vec<_>>().join(",")
    }

    /// Like `Display` but with abbreviated outpoints.
    fn short(&self) -> String {
        match self.0 {
            Detail::Confirm { inputs, outputs } => {
                let ins: Vec<String> = inputs.iter().map(|o| format!("{o:?}")).collect();
                format!("in={} out={}", ins.join(","), Self::outputs(outputs))
            }
            _ => self.to_string(),
        }
    }
}

impl fmt::Display for DetailFmt<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Detail::Genesis { outputs } => write!(f, "out={}", Self::outputs(outputs)),
            Detail::Broadcast { delay, malleated } => {
                write!(f, "delay={delay} malleated={}", if *malleated { "yes" } else { "no" })
            }
            Detail::Confirm { inputs, outputs } => {
                let ins: Vec<String> = inputs.iter().map(|o| o.to_string()).collect();
                write!(f, "in={} out={}", ins.join(","), Self::outputs(outputs))
            }
            Detail::Reject { kind } => f.write_str(kind),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::hash;

    fn header() -> TraceHeader {
        TraceHeader {
            protocol: ProtocolKind::Cs,
            d: 10,
            t: 12,
            max_bb: 1,
            seed: 3,
            network: "malleate=off delay=honest order=fifo".into(),
            party_a: "honest".into(),
            party_b: "abort_at=fuse".into(),
            key_a: PublicKey(hash(b"a")),
            key_b: PublicKey(hash(b"b")),
        }
    }

    fn sample() -> Trace {
        let g = hash(b"g");
        Trace {
            header: header(),
            records: vec![
                TraceRecord {
                    round: 0,
                    role: "A/fund".into(),
                    txid: g,
                    body: hash(b"gb"),
                    detail: Detail::Genesis { outputs: vec![(10, Owner::A)] },
                },
                TraceRecord {
                    round: 0,
                    role: "A/cs.commit".into(),
                    txid: hash(b"c"),
                    body: hash(b"cb"),
                    detail: Detail::Broadcast { delay: 1, malleated: false },
                },
                TraceRecord {
                    round: 1,
                    role: "A/cs.commit".into(),
                    txid: hash(b"c"),
                    body: hash(b"cb"),
                    detail: Detail::Confirm { inputs: vec![Outpoint::new(g, 0)], outputs: vec![(10, Owner::Script)] },
                },
                TraceRecord {
                    round: 2,
                    role: "B/cs.fuse".into(),
                    txid: hash(b"f"),
                    body: hash(b"fb"),
                    detail: Detail::Reject { kind: "LockTimeNotReached".into() },
                },
            ],
            phase: "opened".into(),
        }
    }

    #[test]
    fn records_round_trip() {
        let t = sample();
        let text = t.to_records();
        assert_eq!(Trace::parse_records(&text), Ok(t));
        assert!(text.lines().nth(8).unwrap().starts_with("0\tgenesis\tA/fund\t"));
    }

    #[test]
    fn parse_errors_name_the_line() {
        let mut text = sample().to_records();
        text.push_str("1\tconfirm\tA/x\n");
        let e = Trace::parse_records(&text).unwrap_err();
        assert_eq!(e.line, text.lines().count());
        let missing = sample().to_records().replace("# phase opened\n", "");
        assert!(Trace::parse_records(&missing).unwrap_err().message.contains("phase"));
    }

    #[test]
    fn text_format_is_readable() {
        let text = sample().to_text();
        assert!(text.starts_with("cs d=10 t=12 max_bb=1 seed=3"));
        assert!(text.contains("reject"));
        assert!(text.ends_with("phase    opened\n"));
    }

    #[test]
    fn format_names() {
        assert_eq!("text".parse(), Ok(TraceFormat::Text));
        assert_eq!("records".parse(), Ok(TraceFormat::Records));
        assert!("json".parse::<TraceFormat>().is_err());
    }
}
