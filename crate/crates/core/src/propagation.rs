//! Exact posteriors on the tree, link chaining and depth-vector condensation.
//!
//! [`propagate_beliefs`] runs two-pass message passing: likelihood messages
//! flow up from the evidence, prior messages flow down from the root, and
//! every node's posterior is the normalized product of the two.
//! [`enumerate_posterior`] computes the same quantities from the full joint
//! distribution and serves as ground truth for small networks.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    Evidence, EvidenceValue, LinkCpt, LinkSpec, Network, NetworkSpec, NodeId, NodeSpec,
};

/// Largest network [`enumerate_posterior`] accepts.
pub const MAX_ENUMERATION_NODES: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PropagationError {
    #[error("evidence on unknown node {0}")]
    UnknownNode(NodeId),
    #[error("soft evidence is only accepted on observable leaves, not on {0}")]
    SoftOnNonLeaf(NodeId),
    #[error("soft evidence {1} on {0} must lie strictly between 0 and 1")]
    SoftOutOfRange(NodeId, f64),
    #[error("contradictory evidence: it has probability zero under the network")]
    Contradictory,
    #[error("network has {0} nodes; enumeration is limited to {MAX_ENUMERATION_NODES}")]
    TooLarge(usize),
    #[error("{anchor} is not an ancestor of {node}")]
    NotAncestor { anchor: NodeId, node: NodeId },
    #[error("{0} is already observed")]
    AlreadyObserved(NodeId),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DepthVectorError {
    #[error("depth vector must be a non-empty list of positive integers")]
    Empty,
    #[error("depth vector entries must be positive")]
    ZeroJump,
    #[error("level vector must be strictly increasing and start above level 1")]
    BadLevels,
    #[error("depth vector {vector} sums to {sum}, but the deepest leaf is at depth {depth}")]
    SumMismatch {
        vector: DepthVector,
        sum: usize,
        depth: usize,
    },
    #[error("cannot parse depth vector {0:?}")]
    Parse(String),
}

/// Chains `parent -> mid` (`upper`) with `mid -> child` (`lower`) into the
/// direct link `parent -> child`, summing out the middle node.
pub fn chain_links(upper: LinkCpt, lower: LinkCpt) -> LinkCpt {
    let through = |p_mid: f64| lower.p_given_true * p_mid + lower.p_given_false * (1.0 - p_mid);
    LinkCpt {
        p_given_true: through(upper.p_given_true),
        p_given_false: through(upper.p_given_false),
    }
}

/// Chains the links along `path` (top node first).
pub fn chain_path(net: &Network, path: &[usize]) -> LinkCpt {
    path.iter()
        .skip(1)
        .fold(LinkCpt::IDENTITY, |acc, &i| chain_links(acc, net.cpt(i)))
}

/// Posterior of every node given the evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    /// `P(node = 1 | evidence)`, indexed like the network's nodes.
    pub posterior: Vec<f64>,
    pub evidence: Evidence,
}

impl BeliefState {
    pub fn p(&self, i: usize) -> f64 {
        self.posterior[i]
    }

    pub fn get(&self, net: &Network, id: &str) -> Option<f64> {
        net.index_of(id).map(|i| self.posterior[i])
    }

    pub fn to_map(&self, net: &Network) -> BTreeMap<NodeId, f64> {
        self.posterior
            .iter()
            .enumerate()
            .map(|(i, &p)| (net.id(i).clone(), p))
            .collect()
    }
}

type Pair = [f64; 2];

fn normalized(v: Pair) -> Result<Pair, PropagationError> {
    let z = v[0] + v[1];
    if z > 0.0 && z.is_finite() {
        Ok([v[0] / z, v[1] / z])
    } else {
        Err(PropagationError::Contradictory)
    }
}

pub(crate) fn local_likelihoods(
    net: &Network,
    evidence: &Evidence,
) -> Result<Vec<Pair>, PropagationError> {
    let mut lik = vec![[1.0, 1.0]; net.len()];
    for (id, value) in evidence.iter() {
        let i = net
            .index_of(id.as_str())
            .ok_or_else(|| PropagationError::UnknownNode(id.clone()))?;
        if let EvidenceValue::Soft(v) = *value {
            if !net.is_leaf(i) {
                return Err(PropagationError::SoftOnNonLeaf(id.clone()));
            }
            if !(v > 0.0 && v < 1.0) {
                return Err(PropagationError::SoftOutOfRange(id.clone(), v));
            }
        }
        lik[i] = value.likelihood();
    }
    Ok(lik)
}

/// Posterior pairs of a message-passing run, meaningful for nodes of the
/// processed subtree.
pub(crate) struct Messages {
    pub belief: Vec<Pair>,
}

/// Message passing over the subtree rooted at `order[0]`, listed top-down,
/// with `top_pi` as the prior of the subtree's root.
pub(crate) fn pass_messages(
    net: &Network,
    lik: &[Pair],
    order: &[usize],
    top_pi: Pair,
) -> Result<Messages, PropagationError> {
    let n = net.len();
    let mut lambda = vec![[1.0, 1.0]; n];
    let mut up = vec![[1.0, 1.0]; n];
    for &i in order.iter().rev() {
        let mut l = lik[i];
        for &c in net.children(i) {
            l[0] *= up[c][0];
            l[1] *= up[c][1];
        }
        let l = normalized(l)?;
        lambda[i] = l;
        let cpt = net.cpt(i);
        up[i] = normalized([
            cpt.prob(0, 0) * l[0] + cpt.prob(0, 1) * l[1],
            cpt.prob(1, 0) * l[0] + cpt.prob(1, 1) * l[1],
        ])?;
    }

    let mut pi = vec![[1.0, 1.0]; n];
    let mut belief = vec![[0.5, 0.5]; n];
    pi[order[0]] = normalized(top_pi)?;
    for &i in order {
        belief[i] = normalized([pi[i][0] * lambda[i][0], pi[i][1] * lambda[i][1]])?;
        let children = net.children(i);
        for (k, &c) in children.iter().enumerate() {
            let mut msg = [pi[i][0] * lik[i][0], pi[i][1] * lik[i][1]];
            for (k2, &other) in children.iter().enumerate() {
                if k2 != k {
                    msg[0] *= up[other][0];
                    msg[1] *= up[other][1];
                }
            }
            let msg = normalized(msg)?;
            let cpt = net.cpt(c);
            pi[c] = normalized([
                cpt.prob(0, 0) * msg[0] + cpt.prob(1, 0) * msg[1],
                cpt.prob(0, 1) * msg[0] + cpt.prob(1, 1) * msg[1],
            ])?;
        }
    }
    Ok(Messages { belief })
}

pub(crate) fn propagate_full(
    net: &Network,
    evidence: &Evidence,
) -> Result<Messages, PropagationError> {
    let lik = local_likelihoods(net, evidence)?;
    let prior = net.root_prior();
    pass_messages(net, &lik, net.top_down(), [1.0 - prior, prior])
}

/// Exact posterior of every node under `evidence`.
///
/// Hard evidence clamps its node; soft evidence `v` on a leaf weights the
/// leaf's states 1 and 0 by `v` and `1 - v`.
pub fn propagate_beliefs(
    net: &Network,
    evidence: &Evidence,
) -> Result<BeliefState, PropagationError> {
    let m = propagate_full(net, evidence)?;
    Ok(BeliefState {
        posterior: m.belief.iter().map(|b| b[1]).collect(),
        evidence: evidence.clone(),
    })
}

/// Posterior by brute-force summation over all `2^n` joint assignments.
pub fn enumerate_posterior(
    net: &Network,
    evidence: &Evidence,
) -> Result<BeliefState, PropagationError> {
    let n = net.len();
    if n > MAX_ENUMERATION_NODES {
        return Err(PropagationError::TooLarge(n));
    }
    let lik = local_likelihoods(net, evidence)?;
    let root = net.root();
    let prior = net.root_prior();
    let mut z = 0.0;
    let mut marginal = vec![0.0; n];
    for mask in 0u32..(1u32 << n) {
        let state = |i: usize| ((mask >> i) & 1) as usize;
        let mut w = if state(root) == 1 { prior } else { 1.0 - prior };
        for i in 0..n {
            if let Some(p) = net.parent(i) {
                w *= net.cpt(i).prob(state(p), state(i));
            }
            w *= lik[i][state(i)];
            if w == 0.0 {
                break;
            }
        }
        if w == 0.0 {
            continue;
        }
        z += w;
        for (i, m) in marginal.iter_mut().enumerate() {
            if state(i) == 1 {
                *m += w;
            }
        }
    }
    if z.is_nan() || z <= 0.0 {
        return Err(PropagationError::Contradictory);
    }
    Ok(BeliefState {
        posterior: marginal.into_iter().map(|m| m / z).collect(),
        evidence: evidence.clone(),
    })
}

/// `P(node=1 | anchor=a, evidence)` for both values of `a`, with the
/// anchor's own evidence replaced by the clamp.
pub(crate) fn conditioned_link(
    net: &Network,
    evidence: &Evidence,
    node: usize,
    anchor: usize,
) -> Result<LinkCpt, PropagationError> {
    let clamp = |value: bool| -> Result<f64, PropagationError> {
        let mut e = evidence.clone();
        e.insert(net.id(anchor).clone(), EvidenceValue::Hard(value))
            .expect("hard evidence is always valid");
        Ok(propagate_full(net, &e)?.belief[node][1])
    };
    Ok(LinkCpt::new(clamp(true)?, clamp(false)?))
}

/// The evidence-conditioned virtual link between an unobserved leaf and one
/// of its ancestors.
pub fn virtual_links(
    net: &Network,
    evidence: &Evidence,
    leaf: &str,
    anchor: &str,
) -> Result<LinkCpt, PropagationError> {
    let li = net
        .index_of(leaf)
        .ok_or_else(|| PropagationError::UnknownNode(leaf.into()))?;
    let ai = net
        .index_of(anchor)
        .ok_or_else(|| PropagationError::UnknownNode(anchor.into()))?;
    if !net.is_ancestor(ai, li) {
        return Err(PropagationError::NotAncestor {
            anchor: anchor.into(),
            node: leaf.into(),
        });
    }
    if evidence.is_observed(leaf) {
        return Err(PropagationError::AlreadyObserved(leaf.into()));
    }
    conditioned_link(net, evidence, li, ai)
}

/// Jumps between the tree levels a strategy looks at, starting from the root.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct DepthVector(Vec<usize>);

impl DepthVector {
    pub fn new(jumps: Vec<usize>) -> Result<Self, DepthVectorError> {
        if jumps.is_empty() {
            return Err(DepthVectorError::Empty);
        }
        if jumps.contains(&0) {
            return Err(DepthVectorError::ZeroJump);
        }
        Ok(DepthVector(jumps))
    }

    /// One jump over the whole depth: the two-level view.
    pub fn flat(depth: usize) -> Self {
        DepthVector(vec![depth.max(1)])
    }

    /// Every level retained.
    pub fn unit(depth: usize) -> Self {
        DepthVector(vec![1; depth.max(1)])
    }

    pub fn jumps(&self) -> &[usize] {
        &self.0
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn to_levels(&self) -> LevelVector {
        let mut level = 1;
        LevelVector(
            self.0
                .iter()
                .map(|j| {
                    level += j;
                    level
                })
                .collect(),
        )
    }

    /// Checks the sum against the deepest leaf of `net`.
    pub fn check(&self, net: &Network) -> Result<(), DepthVectorError> {
        let depth = net.max_depth();
        if self.total() != depth {
            return Err(DepthVectorError::SumMismatch {
                vector: self.clone(),
                sum: self.total(),
                depth,
            });
        }
        Ok(())
    }
}

impl TryFrom<Vec<usize>> for DepthVector {
    type Error = DepthVectorError;
    fn try_from(v: Vec<usize>) -> Result<Self, Self::Error> {
        DepthVector::new(v)
    }
}

impl From<DepthVector> for Vec<usize> {
    fn from(d: DepthVector) -> Self {
        d.0
    }
}

impl std::str::FromStr for DepthVector {
    type Err = DepthVectorError;

    /// Parses comma-separated jumps, with or without brackets: `1,2` or `[1,2]`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let inner = s.trim().trim_start_matches('[').trim_end_matches(']');
        let jumps = inner
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| DepthVectorError::Parse(s.to_owned()))?;
        DepthVector::new(jumps)
    }
}

impl fmt::Display for DepthVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|j| j.to_string()).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

/// The tree levels (root = level 1) a depth vector refers to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelVector(Vec<usize>);

impl LevelVector {
    pub fn new(levels: Vec<usize>) -> Result<Self, DepthVectorError> {
        if levels.is_empty() {
            return Err(DepthVectorError::Empty);
        }
        let mut prev = 1;
        for &l in &levels {
            if l <= prev {
                return Err(DepthVectorError::BadLevels);
            }
            prev = l;
        }
        Ok(LevelVector(levels))
    }

    pub fn levels(&self) -> &[usize] {
        &self.0
    }

    pub fn to_depth_vector(&self) -> DepthVector {
        let mut prev = 1;
        DepthVector(
            self.0
                .iter()
                .map(|&l| {
                    let j = l - prev;
                    prev = l;
                    j
                })
                .collect(),
        )
    }
}

/// Indexed form of a condensed tree, over the original node indices.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Condensation {
    pub retained: Vec<bool>,
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    /// Chained CPT from the virtual parent, identity for the root and for
    /// nodes that were dropped.
    pub cpt: Vec<LinkCpt>,
    /// Retained non-root nodes in the order of their original incoming links.
    pub link_order: Vec<usize>,
}

impl Condensation {
    pub fn new(net: &Network, dv: &DepthVector) -> Result<Self, DepthVectorError> {
        dv.check(net)?;
        let levels = dv.to_levels();
        let n = net.len();
        let retained: Vec<bool> = (0..n)
            .map(|i| {
                i == net.root() || net.is_leaf(i) || levels.levels().contains(&(net.depth(i) + 1))
            })
            .collect();
        let mut parent = vec![None; n];
        let mut cpt = vec![LinkCpt::IDENTITY; n];
        let mut children = vec![Vec::new(); n];
        // Children listed in the order of their original incoming links.
        let mut link_pos = vec![usize::MAX; n];
        for (k, link) in net.spec().links.iter().enumerate() {
            link_pos[net.index_of(link.child.as_str()).expect("validated")] = k;
        }
        let mut ordered: Vec<usize> = (0..n).filter(|&i| retained[i] && i != net.root()).collect();
        ordered.sort_by_key(|&i| link_pos[i]);
        for &i in &ordered {
            let mut a = net.parent(i).expect("non-root has a parent");
            while !retained[a] {
                a = net.parent(a).expect("root is retained");
            }
            parent[i] = Some(a);
            cpt[i] = chain_path(net, &net.path_down(a, i).expect("ancestor"));
            children[a].push(i);
        }
        Ok(Condensation {
            retained,
            parent,
            children,
            cpt,
            link_order: ordered,
        })
    }

    /// Observable leaves at or below `i` in the condensed tree.
    pub fn leaves_under<'a>(&'a self, net: &'a Network, i: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![i];
        while let Some(k) = stack.pop() {
            if net.is_leaf(k) {
                out.push(k);
            }
            stack.extend(self.children[k].iter().rev());
        }
        out
    }
}

/// A network condensed to the levels named by a depth vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualTree {
    #[serde(flatten)]
    pub network: NetworkSpec,
    /// Each virtual link `"P->C"` mapped to the original path from `P` to `C`.
    pub provenance: BTreeMap<String, Vec<NodeId>>,
}

/// Condenses `net` to the levels of `dv`: each retained node links to its
/// nearest retained ancestor through the chain of the skipped links.
pub fn transform_tree(net: &Network, dv: &DepthVector) -> Result<VirtualTree, DepthVectorError> {
    let c = Condensation::new(net, dv)?;
    let spec = net.spec();
    let nodes: Vec<NodeSpec> = (0..net.len())
        .filter(|&i| c.retained[i])
        .map(|i| net.node(i).clone())
        .collect();
    let mut provenance = BTreeMap::new();
    let links: Vec<LinkSpec> = c
        .link_order
        .iter()
        .map(|&ch| {
            let p = c.parent[ch].expect("retained non-root");
            let path = net.path_down(p, ch).expect("ancestor");
            provenance.insert(
                format!("{}->{}", net.id(p), net.id(ch)),
                path.iter().map(|&k| net.id(k).clone()).collect(),
            );
            LinkSpec {
                parent: net.id(p).clone(),
                child: net.id(ch).clone(),
                cpt: c.cpt[ch],
            }
        })
        .collect();
    let thresholds = spec
        .thresholds
        .iter()
        .filter(|(id, _)| net.index_of(id.as_str()).is_some_and(|i| c.retained[i]))
        .map(|(id, th)| (id.clone(), *th))
        .collect();
    Ok(VirtualTree {
        network: NetworkSpec {
            name: spec.name.clone(),
            root_prior: spec.root_prior,
            nodes,
            links,
            thresholds,
        },
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::EvidenceValue::{Hard, Soft};

    const TOL: f64 = 1e-9;

    fn ev(pairs: &[(&str, EvidenceValue)]) -> Evidence {
        let mut e = Evidence::new();
        for (id, v) in pairs {
            e.insert((*id).into(), *v).unwrap();
        }
        e
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn chain_example() {
        let c = chain_links(LinkCpt::new(0.9, 0.2), LinkCpt::new(0.8, 0.1));
        assert!(close(c.p_given_true, 0.73, 1e-12));
        assert!(close(c.p_given_false, 0.24, 1e-12));
    }

    #[test]
    fn chain_identity_and_absorbing() {
        let lower = LinkCpt::new(0.37, 0.81);
        assert_eq!(chain_links(LinkCpt::IDENTITY, lower), lower);
        let flat = chain_links(LinkCpt::new(0.9, 0.2), LinkCpt::new(0.5, 0.5));
        assert_eq!(flat, LinkCpt::new(0.5, 0.5));
    }

    #[test]
    fn figure4_prior_marginals() {
        let net = fixtures::figure4();
        let b = propagate_beliefs(&net, &Evidence::new()).unwrap();
        assert!(close(b.get(&net, "N1").unwrap(), 0.5, TOL));
        assert!(close(b.get(&net, "N11").unwrap(), 0.55, TOL));
        assert!(close(b.get(&net, "N111").unwrap(), 0.485, TOL));
    }

    #[test]
    fn figure4_single_observation() {
        let net = fixtures::figure4();
        let e = ev(&[("N111", Hard(true))]);
        let b = propagate_beliefs(&net, &e).unwrap();
        // 0.73 / (0.73 + 0.24) and 0.44 / 0.485
        assert!(close(b.get(&net, "N1").unwrap(), 0.73 / 0.97, TOL));
        assert!(close(b.get(&net, "N1").unwrap(), 0.752577, 1e-6));
        assert!(close(b.get(&net, "N11").unwrap(), 0.907216, 1e-6));
        assert_eq!(b.get(&net, "N111").unwrap(), 1.0);
        let oracle = enumerate_posterior(&net, &e).unwrap();
        for i in 0..net.len() {
            assert!(close(b.p(i), oracle.p(i), TOL));
        }
    }

    #[test]
    fn uniform_soft_evidence_is_a_no_op() {
        let net = fixtures::figure4();
        let base = propagate_beliefs(&net, &Evidence::new()).unwrap();
        let soft = propagate_beliefs(&net, &ev(&[("N111", Soft(0.5))])).unwrap();
        for i in 0..net.len() {
            assert!(close(base.p(i), soft.p(i), 1e-15));
        }
    }

    #[test]
    fn hard_evidence_clamps_exactly() {
        let net = fixtures::figure4();
        let e = ev(&[
            ("N11", Hard(false)),
            ("N121", Hard(true)),
            ("N113", Soft(0.7)),
        ]);
        let b = propagate_beliefs(&net, &e).unwrap();
        assert_eq!(b.get(&net, "N11"), Some(0.0));
        assert_eq!(b.get(&net, "N121"), Some(1.0));
    }

    #[test]
    fn evidence_errors() {
        let net = fixtures::figure4();
        let unknown: Evidence = [(NodeId::from("NX"), Hard(true))].into_iter().collect();
        assert_eq!(
            propagate_beliefs(&net, &unknown),
            Err(PropagationError::UnknownNode("NX".into()))
        );
        assert_eq!(
            propagate_beliefs(&net, &ev(&[("N11", Soft(0.4))])),
            Err(PropagationError::SoftOnNonLeaf("N11".into()))
        );
    }

    #[test]
    fn contradictory_evidence_is_an_error() {
        let text = r#"{"name":"det","root_prior":0.5,
            "nodes":[{"id":"R","kind":"root"},{"id":"A","kind":"observable"},{"id":"B","kind":"observable"}],
            "links":[{"parent":"R","child":"A","p_given_true":1.0,"p_given_false":0.0},
                     {"parent":"R","child":"B","p_given_true":1.0,"p_given_false":0.0}]}"#;
        let net = crate::model::load_network(text.as_bytes()).unwrap();
        let e = ev(&[("A", Hard(true)), ("B", Hard(false))]);
        assert_eq!(
            propagate_beliefs(&net, &e),
            Err(PropagationError::Contradictory)
        );
        assert_eq!(
            enumerate_posterior(&net, &e),
            Err(PropagationError::Contradictory)
        );
    }

    #[test]
    fn enumeration_small_cases() {
        let single =
            r#"{"name":"one","root_prior":0.3,"nodes":[{"id":"R","kind":"root"}],"links":[]}"#;
        let net = crate::model::load_network(single.as_bytes()).unwrap();
        let b = enumerate_posterior(&net, &Evidence::new()).unwrap();
        assert!(close(b.p(0), 0.3, 1e-15));

        let chain = r#"{"name":"two","root_prior":0.5,
            "nodes":[{"id":"R","kind":"root"},{"id":"L","kind":"observable"}],
            "links":[{"parent":"R","child":"L","p_given_true":0.8,"p_given_false":0.1}]}"#;
        let net = crate::model::load_network(chain.as_bytes()).unwrap();
        let b = enumerate_posterior(&net, &ev(&[("R", Hard(true))])).unwrap();
        assert!(close(b.p(1), 0.8, 1e-15));
    }

    #[test]
    fn virtual_link_examples() {
        let net = fixtures::figure4();
        let empty = Evidence::new();
        let v = virtual_links(&net, &empty, "N111", "N1").unwrap();
        assert!(close(v.p_given_true, 0.73, TOL) && close(v.p_given_false, 0.24, TOL));

        let direct = virtual_links(&net, &empty, "N111", "N11").unwrap();
        assert!(close(direct.p_given_true, 0.8, TOL) && close(direct.p_given_false, 0.1, TOL));

        let e = ev(&[("N112", Hard(true))]);
        let shifted = virtual_links(&net, &e, "N111", "N1").unwrap();
        // Oracle: clamp N1 and enumerate.
        let clamp = |v: bool| {
            let e = ev(&[("N112", Hard(true)), ("N1", Hard(v))]);
            enumerate_posterior(&net, &e)
                .unwrap()
                .get(&net, "N111")
                .unwrap()
        };
        assert!(close(shifted.p_given_true, clamp(true), TOL));
        assert!(close(shifted.p_given_false, clamp(false), TOL));
        assert!(!close(shifted.p_given_true, 0.73, 1e-3));

        assert!(matches!(
            virtual_links(&net, &empty, "N111", "N12"),
            Err(PropagationError::NotAncestor { .. })
        ));
        assert!(matches!(
            virtual_links(&net, &ev(&[("N111", Hard(true))]), "N111", "N1"),
            Err(PropagationError::AlreadyObserved(_))
        ));
    }

    #[test]
    fn depth_and_level_vectors() {
        let cases = [
            (vec![1, 1, 1], vec![2, 3, 4]),
            (vec![1, 2], vec![2, 4]),
            (vec![2, 1], vec![3, 4]),
            (vec![3], vec![4]),
        ];
        for (jumps, levels) in cases {
            let dv = DepthVector::new(jumps.clone()).unwrap();
            assert_eq!(dv.to_levels().levels(), &levels[..]);
            assert_eq!(LevelVector::new(levels).unwrap().to_depth_vector(), dv);
        }
        assert!(DepthVector::new(vec![]).is_err());
        assert!(DepthVector::new(vec![1, 0]).is_err());
        assert!(LevelVector::new(vec![3, 2]).is_err());
        assert_eq!("1,2".parse::<DepthVector>().unwrap().jumps(), &[1, 2]);
        assert_eq!("[2]".parse::<DepthVector>().unwrap().jumps(), &[2]);
        assert!("1,x".parse::<DepthVector>().is_err());
    }

    #[test]
    fn transform_identity_on_figure4() {
        let net = fixtures::figure4();
        let vt = transform_tree(&net, &DepthVector::new(vec![1, 1]).unwrap()).unwrap();
        assert_eq!(&vt.network, net.spec());
        assert_eq!(
            vt.provenance["N11->N111"],
            vec![NodeId::from("N11"), "N111".into()]
        );
    }

    #[test]
    fn transform_flat_figure4() {
        let net = fixtures::figure4();
        let vt = transform_tree(&net, &DepthVector::flat(2)).unwrap();
        assert_eq!(vt.network.nodes.len(), 7);
        assert_eq!(vt.network.links.len(), 6);
        let link = vt
            .network
            .links
            .iter()
            .find(|l| l.child.as_str() == "N111")
            .unwrap();
        assert_eq!(link.parent.as_str(), "N1");
        assert!(close(link.cpt.p_given_true, 0.73, 1e-12));
        assert!(close(link.cpt.p_given_false, 0.24, 1e-12));
        assert_eq!(
            vt.provenance["N1->N111"],
            vec![NodeId::from("N1"), "N11".into(), "N111".into()]
        );
        // The condensed spec is itself a valid network.
        assert!(crate::model::validate_network(&vt.network).is_empty());
    }

    #[test]
    fn transform_rejects_sum_mismatch() {
        let net = fixtures::figure4();
        assert!(matches!(
            transform_tree(&net, &DepthVector::new(vec![1, 2]).unwrap()),
            Err(DepthVectorError::SumMismatch {
                sum: 3,
                depth: 2,
                ..
            })
        ));
    }

    #[test]
    fn transform_four_level_chain() {
        let chain = fixtures::chain(&[
            LinkCpt::new(0.9, 0.2),
            LinkCpt::new(0.8, 0.1),
            LinkCpt::new(0.7, 0.3),
        ]);
        let expected = chain_links(
            chain_links(LinkCpt::new(0.9, 0.2), LinkCpt::new(0.8, 0.1)),
            LinkCpt::new(0.7, 0.3),
        );
        let vt = transform_tree(&chain, &DepthVector::new(vec![3]).unwrap()).unwrap();
        assert_eq!(vt.network.nodes.len(), 2);
        assert_eq!(vt.network.links.len(), 1);
        assert_eq!(vt.network.links[0].cpt, expected);
        assert_eq!(vt.provenance.values().next().unwrap().len(), 4);

        for (jumps, retained) in [(vec![1, 2], 3), (vec![2, 1], 3), (vec![1, 1, 1], 4)] {
            let vt = transform_tree(&chain, &DepthVector::new(jumps).unwrap()).unwrap();
            assert_eq!(vt.network.nodes.len(), retained);
        }
    }

    #[test]
    fn shallow_leaves_attach_to_nearest_retained_ancestor() {
        // R -> A -> B -> L1, and R -> A -> L2 (L2 at depth 2).
        let text = r#"{"name":"irregular","root_prior":0.4,
            "nodes":[{"id":"R","kind":"root"},{"id":"A","kind":"intermediate"},
                     {"id":"B","kind":"intermediate"},{"id":"L1","kind":"observable"},
                     {"id":"L2","kind":"observable"}],
            "links":[{"parent":"R","child":"A","p_given_true":0.9,"p_given_false":0.2},
                     {"parent":"A","child":"B","p_given_true":0.8,"p_given_false":0.3},
                     {"parent":"B","child":"L1","p_given_true":0.7,"p_given_false":0.1},
                     {"parent":"A","child":"L2","p_given_true":0.6,"p_given_false":0.4}]}"#;
        let net = crate::model::load_network(text.as_bytes()).unwrap();
        // Levels [3, 4]: B retained, A dropped.
        let vt = transform_tree(&net, &DepthVector::new(vec![2, 1]).unwrap()).unwrap();
        let parent_of = |c: &str| {
            vt.network
                .links
                .iter()
                .find(|l| l.child.as_str() == c)
                .map(|l| l.parent.as_str().to_owned())
        };
        assert_eq!(parent_of("B").as_deref(), Some("R"));
        assert_eq!(parent_of("L1").as_deref(), Some("B"));
        assert_eq!(parent_of("L2").as_deref(), Some("R"));
    }
}
