//! Scenario files, single runs, and the exhaustive fairness matrix.

mod config;
mod trace;
mod verdict;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::adversary::{enumerate_strategies, AdversaryError, NetworkStrategy, Party, PartyStrategy, ProtocolKind};
use crate::chain::ChainParams;
use crate::protocols::{self, Outcome, ProtocolError, RunConfig};

pub use config::parse_scenario;
pub use trace::{Detail, Owner, ParseTraceError, Trace, TraceFormat, TraceHeader, TraceRecord};
pub use verdict::{classify, Classification, Verdict};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HarnessError {
    #[error("invalid `{field}`: {message}")]
    ConfigInvalid { field: String, message: String },
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub protocol: ProtocolKind,
    pub params: ChainParams,
    pub seed: u64,
    pub network: NetworkStrategy,
    pub a: PartyStrategy,
    pub b: PartyStrategy,
    pub max_rounds: u64,
}

impl Scenario {
    pub const DEFAULT_D: u64 = 10;
    pub const DEFAULT_T: u64 = 12;

    /// Honest parties, `max_rounds = t + 3·max_bb + 2`.
    pub fn new(protocol: ProtocolKind, params: ChainParams, network: NetworkStrategy, seed: u64) -> Scenario {
        Scenario {
            protocol,
            params,
            seed,
            network,
            a: PartyStrategy::honest(Party::A),
            b: PartyStrategy::honest(Party::B),
            max_rounds: params.t + 3 * params.max_bb + 2,
        }
    }

    pub fn with_parties(mut self, a: PartyStrategy, b: PartyStrategy) -> Scenario {
        self.a = a;
        self.b = b;
        self
    }

    pub fn with_max_rounds(mut self, max_rounds: u64) -> Scenario {
        self.max_rounds = max_rounds;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Scenario {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let m = self.params.max_bb;
        if self.params.t <= 3 * m {
            return Err(HarnessError::ConfigInvalid {
                field: "params.t".into(),
                message: format!("t = {} must exceed 3 * max_bb = {}", self.params.t, 3 * m),
            });
        }
        if self.network.max_bb() != m {
            return Err(HarnessError::ConfigInvalid {
                field: "network".into(),
                message: format!("network max_bb {} differs from params.max_bb {m}", self.network.max_bb()),
            });
        }
        if self.max_rounds <= self.params.t + 2 * m {
            return Err(HarnessError::ConfigInvalid {
                field: "max_rounds".into(),
                message: format!(
                    "max_rounds = {} must exceed t + 2 * max_bb = {}",
                    self.max_rounds,
                    self.params.t + 2 * m
                ),
            });
        }
        for (s, party, field) in [(&self.a, Party::A, "party.a"), (&self.b, Party::B, "party.b")] {
            if s.party != party {
                return Err(HarnessError::ConfigInvalid {
                    field: field.into(),
                    message: format!("strategy is for {}", s.party),
                });
            }
        }
        Ok(())
    }

    fn run_config(&self) -> RunConfig {
        let mut config =
            RunConfig::new(self.params, self.network.clone(), self.seed).with_parties(self.a.clone(), self.b.clone());
        config.max_rounds = self.max_rounds;
        config
    }
}

/// Everything one run produced.
#[derive(Debug, Clone)]
pub struct Report {
    pub verdict: Verdict,
    pub trace: Trace,
    pub outcome: Outcome,
}

pub fn run_scenario(scenario: &Scenario) -> Result<Report, HarnessError> {
    scenario.validate()?;
    let outcome = protocols::run(scenario.protocol, &scenario.run_config())?;
    let header = TraceHeader {
        protocol: scenario.protocol,
        d: scenario.params.d,
        t: scenario.params.t,
        max_bb: scenario.params.max_bb,
        seed: scenario.seed,
        network: scenario.network.to_string(),
        party_a: scenario.a.to_string(),
        party_b: scenario.b.to_string(),
        key_a: outcome.keys[0],
        key_b: outcome.keys[1],
    };
    let trace = Trace::from_events(header, outcome.ledger.events(), outcome.phase);
    let verdict = classify(&trace);
    Ok(Report { verdict, trace, outcome })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixRow {
    pub network: NetworkStrategy,
    pub a: PartyStrategy,
    pub b: PartyStrategy,
    pub verdict: Verdict,
    /// Round of the last trace record.
    pub last_round: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixSummary {
    pub protocol: ProtocolKind,
    pub params: ChainParams,
    pub rows: Vec<MatrixRow>,
}

impl MatrixSummary {
    pub fn counts(&self) -> BTreeMap<Classification, usize> {
        let mut counts: BTreeMap<_, _> = Classification::ALL.iter().map(|&c| (c, 0)).collect();
        for row in &self.rows {
            *counts.get_mut(&row.verdict.classification).unwrap() += 1;
        }
        counts
    }

    pub fn unfair(&self) -> usize {
        self.rows.iter().filter(|r| r.verdict.classification.is_unfair()).count()
    }

    /// The legacy SCS is expected to break; every other protocol is not.
    pub fn as_expected(&self) -> bool {
        match self.protocol {
            ProtocolKind::ScsLegacy => self.unfair() > 0,
            _ => self.unfair() == 0,
        }
    }

    pub fn render(&self, format: TraceFormat) -> String {
        let mut s = String::new();
        let p = &self.params;
        match format {
            TraceFormat::Records => {
                writeln!(s, "# matrix {} d={} t={} max_bb={}", self.protocol, p.d, p.t, p.max_bb).unwrap();
                for (i, r) in self.rows.iter().enumerate() {
                    let v = &r.verdict;
                    writeln!(
                        s,
                        "{i}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                        r.network, r.a, r.b, v.classification, v.deltas[0], v.deltas[1], v.phase
                    )
                    .unwrap();
                }
                for (c, n) in self.counts() {
                    writeln!(s, "# count {c} {n}").unwrap();
                }
            }
            TraceFormat::Text => {
                writeln!(
                    s,
                    "{} matrix, d={} t={} max_bb={}, {} scenarios",
                    self.protocol,
                    p.d,
                    p.t,
                    p.max_bb,
                    self.rows.len()
                )
                .unwrap();
                writeln!(
                    s,
                    "{:>4}  {:<40} {:<20} {:<20} {:<18} {:>5} {:>5}  phase",
                    "#", "network", "A", "B", "verdict", "dA", "dB"
                )
                .unwrap();
                for (i, r) in self.rows.iter().enumerate() {
                    let v = &r.verdict;
                    writeln!(
                        s,
                        "{i:>4}  {:<40} {:<20} {:<20} {:<18} {:>5} {:>5}  {}",
                        r.network.to_string(),
                        r.a.to_string(),
                        r.b.to_string(),
                        v.classification.name(),
                        v.deltas[0],
                        v.deltas[1],
                        v.phase
                    )
                    .unwrap();
                }
                let counts: Vec<String> = self.counts().iter().map(|(c, n)| format!("{c}={n}")).collect();
                writeln!(s, "{}", counts.join(" ")).unwrap();
                writeln!(s, "{}", if self.as_expected() { "as expected" } else { "UNEXPECTED" }).unwrap();
            }
        }
        s
    }
}

/// Runs every strategy triple of the protocol. Rows follow enumeration order.
pub fn run_matrix(protocol: ProtocolKind, params: ChainParams, seed: u64) -> Result<MatrixSummary, HarnessError> {
    let triples = enumerate_strategies(params.max_bb, protocol)?;
    let rows = triples
        .into_par_iter()
        .map(|(network, a, b)| {
            let scenario = Scenario::new(protocol, params, network.clone(), seed).with_parties(a.clone(), b.clone());
            let report = run_scenario(&scenario)?;
            let last_round = report.trace.records.last().map_or(0, |r| r.round);
            Ok(MatrixRow { network, a, b, verdict: report.verdict, last_round })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    Ok(MatrixSummary { protocol, params, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::AbortPoint;

    fn params(m: u64) -> ChainParams {
        ChainParams::new(m, 10, 12).unwrap()
    }

    #[test]
    fn newscs_all_honest_is_nominal() {
        let s = Scenario::new(ProtocolKind::NewScs, params(1), NetworkStrategy::honest(1), 1);
        let r = run_scenario(&s).unwrap();
        assert_eq!(r.verdict.classification, Classification::Nominal);
        assert_eq!(r.verdict.deltas, [0, 0]);
        assert!(r.verdict.conserved);
    }

    #[test]
    fn legacy_withholding_under_malleation_is_unfair() {
        let s = Scenario::new(ProtocolKind::ScsLegacy, params(1), NetworkStrategy::malleate_all(1), 1)
            .with_parties(PartyStrategy::withholding(Party::A), PartyStrategy::honest(Party::B));
        let v = run_scenario(&s).unwrap().verdict;
        assert!(v.classification.is_unfair(), "{v:?}");
    }

    #[test]
    fn classify_replays_emitted_trace() {
        let s = Scenario::new(ProtocolKind::Cs, params(2), NetworkStrategy::malleate_all(2), 4)
            .with_parties(PartyStrategy::abort(Party::A, AbortPoint::Open), PartyStrategy::honest(Party::B));
        let r = run_scenario(&s).unwrap();
        let parsed = Trace::parse_records(&r.trace.to_records()).unwrap();
        assert_eq!(parsed, r.trace);
        assert_eq!(classify(&parsed), r.verdict);
        assert_eq!(r.verdict.deltas, [-10, 10]);
        assert_eq!(r.verdict.delta(Party::B), r.outcome.delta(Party::B));
    }

    #[test]
    fn scenario_invariants() {
        let s = Scenario::new(ProtocolKind::Cs, params(1), NetworkStrategy::honest(1), 0);
        assert!(s.validate().is_ok());
        assert!(matches!(
            s.clone().with_max_rounds(14).validate(),
            Err(HarnessError::ConfigInvalid { field, .. }) if field == "max_rounds"
        ));
        let mismatched = Scenario { network: NetworkStrategy::honest(2), ..s.clone() };
        assert!(mismatched.validate().is_err());
        let swapped = s.with_parties(PartyStrategy::honest(Party::B), PartyStrategy::honest(Party::B));
        assert!(swapped.validate().is_err());
    }

    #[test]
    fn matrix_bound() {
        assert_eq!(
            run_matrix(ProtocolKind::Cs, ChainParams::new(3, 10, 12).unwrap(), 0),
            Err(HarnessError::Adversary(AdversaryError::ExhaustiveBoundExceeded(3)))
        );
    }
}
