//! Case generation, offline diagnosis and strategy comparison.
//!
//! Case `i` of a dataset is drawn from its own ChaCha stream `(seed, i)`, so
//! a dataset is the same whether it is generated serially or in parallel.

use std::collections::BTreeMap;
use std::io;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{EvidenceValue, Network, NodeId};
use crate::strategies::{run_to_termination, Decision, StrategyError, StrategySpec};

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("a dataset needs at least one case")]
    EmptyDataset,
    #[error("dataset nodes do not match network {network}: {detail}")]
    NodeMismatch { network: String, detail: String },
    #[error("malformed dataset: {0}")]
    Format(String),
    #[error("no trial results to compare")]
    EmptyResults,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("case {case_id}: {source}")]
    Strategy {
        case_id: u64,
        #[source]
        source: StrategyError,
    },
}

/// A complete truth assignment, indexed like the network's nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Case {
    pub case_id: u64,
    pub truth: Vec<bool>,
}

/// Random stream for case `index` of the dataset seeded with `seed`.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Samples every node top-down: the root from its prior, each child from its
/// link given the parent's sampled value.
pub fn sample_case<R: Rng + ?Sized>(net: &Network, rng: &mut R, case_id: u64) -> Case {
    let mut truth = vec![false; net.len()];
    for &i in net.top_down() {
        let p = match net.parent(i) {
            None => net.root_prior(),
            Some(parent) => net.cpt(i).prob(usize::from(truth[parent]), 1),
        };
        truth[i] = rng.random::<f64>() < p;
    }
    Case { case_id, truth }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    /// Column order: node ids in document order.
    pub nodes: Vec<NodeId>,
    pub cases: Vec<Case>,
}

pub fn generate_dataset(net: &Network, n: usize, seed: u64) -> Result<Dataset, SimulationError> {
    if n == 0 {
        return Err(SimulationError::EmptyDataset);
    }
    let cases = (0..n as u64)
        .into_par_iter()
        .map(|i| sample_case(net, &mut substream(seed, i), i))
        .collect();
    Ok(Dataset {
        nodes: (0..net.len()).map(|i| net.id(i).clone()).collect(),
        cases,
    })
}

impl Dataset {
    /// CSV with header `case_id,<node ids>` and 0/1 values.
    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<(), SimulationError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["case_id".to_owned()];
        header.extend(self.nodes.iter().map(|n| n.to_string()));
        w.write_record(&header)?;
        for case in &self.cases {
            let mut row = vec![case.case_id.to_string()];
            row.extend(
                case.truth
                    .iter()
                    .map(|&t| if t { "1" } else { "0" }.to_owned()),
            );
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn read_csv<R: io::Read>(input: R) -> Result<Dataset, SimulationError> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        if header.get(0) != Some("case_id") {
            return Err(SimulationError::Format(
                "first column must be case_id".into(),
            ));
        }
        let nodes: Vec<NodeId> = header.iter().skip(1).map(NodeId::from).collect();
        let mut cases = Vec::new();
        for record in r.records() {
            let record = record?;
            let case_id = record[0]
                .parse()
                .map_err(|_| SimulationError::Format(format!("bad case id {:?}", &record[0])))?;
            let truth = record
                .iter()
                .skip(1)
                .map(|v| match v {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(SimulationError::Format(format!(
                        "case {case_id}: value {other:?} is not 0/1"
                    ))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            cases.push(Case { case_id, truth });
        }
        Ok(Dataset { nodes, cases })
    }

    /// Column permutation mapping network node `i` to its dataset column.
    fn columns_for(&self, net: &Network) -> Result<Vec<usize>, SimulationError> {
        let mismatch = |detail: String| SimulationError::NodeMismatch {
            network: net.name().to_owned(),
            detail,
        };
        if self.nodes.len() != net.len() {
            return Err(mismatch(format!(
                "{} columns for {} nodes",
                self.nodes.len(),
                net.len()
            )));
        }
        (0..net.len())
            .map(|i| {
                self.nodes
                    .iter()
                    .position(|n| n == net.id(i))
                    .ok_or_else(|| mismatch(format!("missing column {}", net.id(i))))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub case_id: u64,
    pub strategy: String,
    pub queries: Vec<NodeId>,
    pub query_count: usize,
    pub total_cost: f64,
    pub decisions: BTreeMap<NodeId, Decision>,
    /// `None` when the decision is "?".
    pub correct: BTreeMap<NodeId, Option<bool>>,
}

/// Replays each case's truth as hard answers under `strategy`.
pub fn run_trials(
    net: &Arc<Network>,
    name: &str,
    strategy: &StrategySpec,
    dataset: &Dataset,
) -> Result<Vec<TrialResult>, SimulationError> {
    let columns = dataset.columns_for(net)?;
    dataset
        .cases
        .par_iter()
        .map(|case| {
            if case.truth.len() != columns.len() {
                return Err(SimulationError::Format(format!(
                    "case {} has {} values",
                    case.case_id,
                    case.truth.len()
                )));
            }
            let truth = |i: usize| case.truth[columns[i]];
            let state = run_to_termination(Arc::clone(net), strategy.clone(), |leaf| {
                EvidenceValue::Hard(truth(net.index_of(leaf.as_str()).expect("known leaf")))
            })
            .map_err(|source| SimulationError::Strategy {
                case_id: case.case_id,
                source,
            })?;
            let decisions = state.decisions().cloned().unwrap_or_default();
            let correct = decisions
                .iter()
                .map(|(id, d)| {
                    let t = truth(net.index_of(id.as_str()).expect("known target"));
                    let verdict = match d {
                        Decision::Positive => Some(t),
                        Decision::Negative => Some(!t),
                        Decision::Undecided => None,
                    };
                    (id.clone(), verdict)
                })
                .collect();
            Ok(TrialResult {
                case_id: case.case_id,
                strategy: name.to_owned(),
                queries: state.query_log().iter().map(|q| q.node.clone()).collect(),
                query_count: state.query_count(),
                total_cost: state.total_cost(),
                decisions,
                correct,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TargetSummary {
    pub positive: usize,
    pub negative: usize,
    pub undecided: usize,
    pub decided: usize,
    pub correct: usize,
    /// Correct among decided cases.
    pub accuracy: Option<f64>,
    /// Truth rate among cases decided "+".
    pub positive_accuracy: Option<f64>,
    /// Falsity rate among cases decided "-".
    pub negative_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: String,
    pub trials: usize,
    pub mean_queries: f64,
    pub median_queries: f64,
    pub mean_cost: f64,
    /// Root decision counts and accuracy.
    pub root: TargetSummary,
    pub targets: BTreeMap<NodeId, TargetSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub network: String,
    pub seed: Option<u64>,
    /// Sorted by mean query count, then by name.
    pub strategies: Vec<StrategySummary>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn median(sorted: &[usize]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
    }
}

fn summarize_target(results: &[TrialResult], target: &NodeId) -> TargetSummary {
    let mut s = TargetSummary::default();
    let (mut pos_ok, mut neg_ok) = (0, 0);
    for r in results {
        let ok = r.correct.get(target).copied().flatten();
        match r.decisions.get(target) {
            Some(Decision::Positive) => {
                s.positive += 1;
                pos_ok += usize::from(ok == Some(true));
            }
            Some(Decision::Negative) => {
                s.negative += 1;
                neg_ok += usize::from(ok == Some(true));
            }
            _ => s.undecided += 1,
        }
    }
    s.decided = s.positive + s.negative;
    s.correct = pos_ok + neg_ok;
    s.accuracy = ratio(s.correct, s.decided);
    s.positive_accuracy = ratio(pos_ok, s.positive);
    s.negative_accuracy = ratio(neg_ok, s.negative);
    s
}

/// Aggregates one result set per strategy, all over the same dataset.
pub fn compare_report(
    net: &Network,
    seed: Option<u64>,
    groups: &[Vec<TrialResult>],
) -> Result<ComparisonReport, SimulationError> {
    if groups.is_empty() || groups.iter().any(|g| g.is_empty()) {
        return Err(SimulationError::EmptyResults);
    }
    let root = net.id(net.root()).clone();
    let mut strategies: Vec<StrategySummary> = groups
        .iter()
        .map(|results| {
            let trials = results.len();
            let mut counts: Vec<usize> = results.iter().map(|r| r.query_count).collect();
            counts.sort_unstable();
            let total_q: usize = counts.iter().sum();
            let total_cost: f64 = results.iter().map(|r| r.total_cost).sum();
            let mut targets: Vec<NodeId> = results
                .iter()
                .flat_map(|r| r.decisions.keys().cloned())
                .collect();
            targets.sort();
            targets.dedup();
            StrategySummary {
                strategy: results[0].strategy.clone(),
                trials,
                mean_queries: total_q as f64 / trials as f64,
                median_queries: median(&counts),
                mean_cost: total_cost / trials as f64,
                root: summarize_target(results, &root),
                targets: targets
                    .iter()
                    .map(|t| (t.clone(), summarize_target(results, t)))
                    .collect(),
            }
        })
        .collect();
    strategies.sort_by(|a, b| {
        a.mean_queries
            .total_cmp(&b.mean_queries)
            .then_with(|| a.strategy.cmp(&b.strategy))
    });
    Ok(ComparisonReport {
        network: net.name().to_owned(),
        seed,
        strategies,
    })
}
