//! Experiments: digest divergence across variants, replication of a
//! compromised client against the server, and the attacker cost model.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::rngs::OsRng;
use rand::{RngCore, TryRngCore};
use serde::Serialize;
use thiserror::Error;

use crate::engine::{self, functionally_equivalent, GeneVector};
use crate::genome;
use crate::mac::MacRequest;
use crate::pool::variant_pool_build;
use crate::server::{NVersionDatabase, Server, ServerOptions, Verdict};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HarnessError {
    #[error("parameter {0} must be finite and non-negative")]
    InvalidParameter(&'static str),
    #[error("client count must be at least 1")]
    NoClients,
    #[error("unknown cost mode {0:?} (expected tamper-each or gene-extraction)")]
    UnknownMode(String),
    #[error("experiment setup failed: {0}")]
    Setup(String),
}

/// Attacker effort parameters, in arbitrary time units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostParameters {
    /// Analyse and tamper one copy on the attacker's own host.
    pub c0: f64,
    /// Obtain the guard of one target machine.
    pub c1: f64,
    /// Tamper one such guard.
    pub c2: f64,
    /// Extract the genes of one guard.
    pub c3: f64,
    /// Number of target machines.
    pub n: u64,
}

impl CostParameters {
    pub fn new(c0: f64, c1: f64, c2: f64, c3: f64, n: u64) -> Result<Self, HarnessError> {
        for (name, value) in [("c0", c0), ("c1", c1), ("c2", c2), ("c3", c3)] {
            if !value.is_finite() || value < 0.0 {
                return Err(HarnessError::InvalidParameter(name));
            }
        }
        Ok(CostParameters { c0, c1, c2, c3, n })
    }

    pub fn with_n(self, n: u64) -> Self {
        CostParameters { n, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CostMode {
    /// Tamper every target's guard individually.
    TamperEach,
    /// Extract each target's genes and emulate its variant.
    GeneExtraction,
}

impl FromStr for CostMode {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tamper-each" => Ok(CostMode::TamperEach),
            "gene-extraction" => Ok(CostMode::GeneExtraction),
            other => Err(HarnessError::UnknownMode(other.to_string())),
        }
    }
}

impl fmt::Display for CostMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CostMode::TamperEach => "tamper-each",
            CostMode::GeneExtraction => "gene-extraction",
        })
    }
}

/// `c0 + n * (c1 + c2)` or `c0 + n * (c1 + c3)`.
pub fn cost_total(p: &CostParameters, mode: CostMode) -> f64 {
    let per_target = match mode {
        CostMode::TamperEach => p.c1 + p.c2,
        CostMode::GeneExtraction => p.c1 + p.c3,
    };
    p.c0 + p.n as f64 * per_target
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Trial {
    pub index: usize,
    pub outcome: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExperimentReport {
    pub scenario: String,
    pub seed: Option<u64>,
    pub trials: Vec<Trial>,
    /// Count of trials per outcome.
    pub summary: BTreeMap<String, usize>,
}

impl ExperimentReport {
    fn new(scenario: &str, seed: Option<u64>) -> Self {
        ExperimentReport { scenario: scenario.to_string(), seed, trials: Vec::new(), summary: BTreeMap::new() }
    }

    fn push(&mut self, outcome: &str, detail: String) {
        let index = self.trials.len();
        self.trials.push(Trial { index, outcome: outcome.to_string(), detail });
        *self.summary.entry(outcome.to_string()).or_default() += 1;
    }

    pub fn count(&self, outcome: &str) -> usize {
        self.summary.get(outcome).copied().unwrap_or(0)
    }

    /// Whether the summary agrees with a fresh tally of the trials.
    pub fn is_consistent(&self) -> bool {
        let mut tally: BTreeMap<String, usize> = BTreeMap::new();
        for t in &self.trials {
            *tally.entry(t.outcome.clone()).or_default() += 1;
        }
        tally == self.summary
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let seed = self.seed.map_or_else(|| "random".to_string(), |s| s.to_string());
        let _ = writeln!(out, "scenario: {} (seed {seed})", self.scenario);
        let _ = writeln!(out, "trials:   {}", self.trials.len());
        for (outcome, count) in &self.summary {
            let _ = writeln!(out, "  {outcome:<12} {count}");
        }
        out
    }

    /// JSON lines: one `trial` record each, then one `summary` record.
    pub fn render_records(&self) -> String {
        #[derive(Serialize)]
        #[serde(tag = "record", rename_all = "lowercase")]
        enum Record<'a> {
            Trial {
                scenario: &'a str,
                #[serde(flatten)]
                trial: &'a Trial,
            },
            Summary {
                scenario: &'a str,
                seed: Option<u64>,
                trials: usize,
                counts: &'a BTreeMap<String, usize>,
            },
        }
        let mut out = String::new();
        for trial in &self.trials {
            out.push_str(&serde_json::to_string(&Record::Trial { scenario: &self.scenario, trial }).unwrap());
            out.push('\n');
        }
        let summary =
            Record::Summary { scenario: &self.scenario, seed: self.seed, trials: self.trials.len(), counts: &self.summary };
        out.push_str(&serde_json::to_string(&summary).unwrap());
        out.push('\n');
        out
    }
}

pub const EQUIVALENT: &str = "equivalent";
pub const COLLISION: &str = "collision";
pub const DISTINCT: &str = "distinct";

/// Compares digests of `message` for each pair. Equivalent pairs are
/// tallied apart and never counted as collisions.
pub fn divergence_over_pairs(pairs: &[(GeneVector, GeneVector)], message: &[u8], seed: Option<u64>) -> ExperimentReport {
    let mut report = ExperimentReport::new("divergence", seed);
    for (g1, g2) in pairs {
        if functionally_equivalent(g1, g2) {
            report.push(EQUIVALENT, String::new());
            continue;
        }
        let (d1, d2) = (engine::digest(g1, message), engine::digest(g2, message));
        let outcome = if d1 == d2 { COLLISION } else { DISTINCT };
        report.push(outcome, format!("{d1} {d2}"));
    }
    report
}

/// Draws `pair_count` random gene-vector pairs and compares their digests.
pub fn divergence_experiment(pair_count: usize, message: &[u8], seed: Option<u64>) -> ExperimentReport {
    let mut rng: Box<dyn RngCore> = match seed {
        Some(s) => Box::new(genome::seeded_rng(s)),
        None => Box::new(OsRng.unwrap_err()),
    };
    let pairs: Vec<_> = (0..pair_count)
        .map(|_| (genome::random_genes_from(&mut rng), genome::random_genes_from(&mut rng)))
        .collect();
    divergence_over_pairs(&pairs, message, seed)
}

pub const ACCEPTED: &str = "accepted";
pub const REJECTED: &str = "rejected";

/// An attacker who fully owns client 0 replays its MAC capability under
/// every registered client id against an in-process server.
///
/// Clients receive distinct variants. Only the compromised client's own id
/// should be accepted.
pub fn replication_experiment(client_count: usize, seed: Option<u64>) -> Result<ExperimentReport, HarnessError> {
    if client_count == 0 {
        return Err(HarnessError::NoClients);
    }
    let pool = variant_pool_build(client_count, seed, crate::codegen::DEFAULT_TEMPLATE)
        .map_err(|e| HarnessError::Setup(e.to_string()))?;
    let server = Server::new(
        NVersionDatabase::new(),
        pool,
        ServerOptions { unique_assignment: true, seed, ..Default::default() },
    );
    let ids: Vec<String> = (1..=client_count).map(|i| format!("client-{i}")).collect();
    for id in &ids {
        server.register_client(id).map_err(|e| HarnessError::Setup(e.to_string()))?;
    }

    // Everything the attacker learned from the compromised host.
    let stolen = server.lookup_genes(&ids[0]).map_err(|e| HarnessError::Setup(e.to_string()))?;
    let mut nonce_rng: Box<dyn RngCore> = match seed {
        Some(s) => Box::new(genome::seeded_rng(s ^ 0x6e6f6e6365)),
        None => Box::new(OsRng.unwrap_err()),
    };

    let mut report = ExperimentReport::new("replication", seed);
    for id in &ids {
        let mut nonce = [0u8; 16];
        nonce_rng.fill_bytes(&mut nonce);
        let request = MacRequest::build(&stolen, id.as_str(), nonce, b"tampered client request".to_vec())
            .map_err(|e| HarnessError::Setup(e.to_string()))?;
        let verdict = server.handle_verify(&request);
        let outcome = if verdict == Verdict::Accepted { ACCEPTED } else { REJECTED };
        report.push(outcome, format!("{id} {verdict}"));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::canonical_genes;

    #[test]
    fn cost_examples() {
        let p = CostParameters::new(10.0, 2.0, 3.0, 7.0, 5).unwrap();
        assert_eq!(cost_total(&p, CostMode::TamperEach), 35.0);
        assert_eq!(cost_total(&p, CostMode::GeneExtraction), 55.0);
        assert_eq!(cost_total(&p.with_n(0), CostMode::TamperEach), 10.0);
        assert_eq!(cost_total(&p.with_n(0), CostMode::GeneExtraction), 10.0);
    }

    #[test]
    fn cost_parameter_validation() {
        assert_eq!(CostParameters::new(-1.0, 0.0, 0.0, 0.0, 0), Err(HarnessError::InvalidParameter("c0")));
        assert_eq!(CostParameters::new(0.0, 0.0, f64::NAN, 0.0, 0), Err(HarnessError::InvalidParameter("c2")));
        assert_eq!("tamper-each".parse::<CostMode>(), Ok(CostMode::TamperEach));
        assert!("both".parse::<CostMode>().is_err());
    }

    #[test]
    fn divergence_small_cases() {
        let empty = divergence_experiment(0, b"m", Some(1));
        assert!(empty.trials.is_empty());
        assert_eq!(empty.count(COLLISION), 0);

        let g = canonical_genes();
        let control = divergence_over_pairs(&[(g, g)], b"m", None);
        assert_eq!(control.count(EQUIVALENT), 1);
        assert_eq!(control.count(COLLISION), 0);
        assert!(control.is_consistent());
    }

    #[test]
    fn replication_small_cases() {
        assert_eq!(replication_experiment(0, Some(1)), Err(HarnessError::NoClients));
        let one = replication_experiment(1, Some(1)).unwrap();
        assert_eq!((one.count(ACCEPTED), one.count(REJECTED)), (1, 0));
        let three = replication_experiment(3, Some(2)).unwrap();
        assert_eq!((three.count(ACCEPTED), three.count(REJECTED)), (1, 2));
        assert!(three.trials[0].detail.starts_with("client-1 accepted"));
    }

    #[test]
    fn report_renderings() {
        let report = replication_experiment(2, Some(3)).unwrap();
        let text = report.render_text();
        assert!(text.contains("scenario: replication (seed 3)"));
        assert!(text.contains("accepted"));
        let records = report.render_records();
        let lines: Vec<serde_json::Value> = records.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0]["record"], "trial");
        assert_eq!(lines[0]["outcome"], "accepted");
        assert_eq!(lines[2]["record"], "summary");
        assert_eq!(lines[2]["counts"]["rejected"], 1);
    }
}
