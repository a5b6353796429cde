//! Network schema: nodes, links, thresholds and evidence.
//!
//! A [`NetworkSpec`] is the plain, serializable description read from a
//! network file. [`validate_network`] reports every structural problem with
//! it, and [`Network`] is the validated, indexed form that the rest of the
//! crate works on.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Threshold pair used when a node has none of its own.
pub const DEFAULT_THRESHOLDS: Thresholds = Thresholds {
    t_high: 0.95,
    t_low: 0.05,
};

/// Short identifier of a node, unique within one network.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_owned())
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        NodeId(s)
    }
}

impl std::borrow::Borrow<str> for NodeId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Root,
    Intermediate,
    Observable,
}

fn default_cost() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: NodeId,
    pub kind: NodeKind,
    #[serde(default)]
    pub label: String,
    /// Whether the node's decision is reported as a goal of the session.
    #[serde(default)]
    pub target: bool,
    #[serde(rename = "cost", default = "default_cost")]
    pub observation_cost: f64,
}

/// Conditional table of a binary link: `P(child=1 | parent=1)` and
/// `P(child=1 | parent=0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkCpt {
    pub p_given_true: f64,
    pub p_given_false: f64,
}

impl LinkCpt {
    /// The link that copies its parent.
    pub const IDENTITY: LinkCpt = LinkCpt {
        p_given_true: 1.0,
        p_given_false: 0.0,
    };

    pub const fn new(p_given_true: f64, p_given_false: f64) -> Self {
        LinkCpt {
            p_given_true,
            p_given_false,
        }
    }

    /// `P(child = c | parent = p)` with states as 0/1 indices.
    #[inline]
    pub fn prob(&self, parent: usize, child: usize) -> f64 {
        let p1 = if parent == 1 {
            self.p_given_true
        } else {
            self.p_given_false
        };
        if child == 1 {
            p1
        } else {
            1.0 - p1
        }
    }

    pub fn is_valid(&self) -> bool {
        is_probability(self.p_given_true) && is_probability(self.p_given_false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub parent: NodeId,
    pub child: NodeId,
    #[serde(flatten)]
    pub cpt: LinkCpt,
}

/// Decision thresholds for one node; `t_low <= t_high`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    #[serde(rename = "high")]
    pub t_high: f64,
    #[serde(rename = "low")]
    pub t_low: f64,
}

impl Thresholds {
    pub const fn new(t_high: f64, t_low: f64) -> Self {
        Thresholds { t_high, t_low }
    }

    pub fn is_valid(&self) -> bool {
        is_probability(self.t_high) && is_probability(self.t_low) && self.t_low <= self.t_high
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        DEFAULT_THRESHOLDS
    }
}

/// Serializable description of an inference network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    pub root_prior: f64,
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<LinkSpec>,
    #[serde(default)]
    pub thresholds: BTreeMap<NodeId, Thresholds>,
}

impl NetworkSpec {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("network spec serializes")
    }
}

fn is_probability(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ViolationKind {
    EmptyId,
    DuplicateId,
    NoRoot,
    MultipleRoots,
    UnknownNode,
    ProbabilityOutOfRange,
    NotATree,
    ObservableNotLeaf,
    LeafNotObservable,
    InvalidThresholds,
    NegativeCost,
}

impl ViolationKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ViolationKind::EmptyId => "empty id",
            ViolationKind::DuplicateId => "duplicate id",
            ViolationKind::NoRoot => "no root",
            ViolationKind::MultipleRoots => "multiple roots",
            ViolationKind::UnknownNode => "unknown node",
            ViolationKind::ProbabilityOutOfRange => "probability out of range",
            ViolationKind::NotATree => "not a tree",
            ViolationKind::ObservableNotLeaf => "observable node is not a leaf",
            ViolationKind::LeafNotObservable => "leaf is not observable",
            ViolationKind::InvalidThresholds => "invalid thresholds",
            ViolationKind::NegativeCost => "negative cost",
        }
    }
}

/// One broken invariant, naming the offending node or link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub subject: String,
    pub detail: String,
}

impl Violation {
    fn new(kind: ViolationKind, subject: impl Into<String>, detail: impl Into<String>) -> Self {
        Violation {
            kind,
            subject: subject.into(),
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]", self.kind.as_str(), self.subject)?;
        if !self.detail.is_empty() {
            write!(f, ": {}", self.detail)?;
        }
        Ok(())
    }
}

fn link_name(link: &LinkSpec) -> String {
    format!("{}->{}", link.parent, link.child)
}

/// Checks every structural invariant of `spec`. An empty list means valid.
pub fn validate_network(spec: &NetworkSpec) -> Vec<Violation> {
    use ViolationKind::*;
    let mut out = Vec::new();

    if !is_probability(spec.root_prior) {
        out.push(Violation::new(
            ProbabilityOutOfRange,
            "root_prior",
            format!("{} is not in [0, 1]", spec.root_prior),
        ));
    }

    let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, node) in spec.nodes.iter().enumerate() {
        if node.id.as_str().is_empty() {
            out.push(Violation::new(EmptyId, format!("nodes[{i}]"), ""));
            continue;
        }
        if ids.insert(node.id.as_str(), i).is_some() {
            out.push(Violation::new(DuplicateId, node.id.as_str(), ""));
        }
        if node.observation_cost.is_nan() || node.observation_cost < 0.0 {
            out.push(Violation::new(
                NegativeCost,
                node.id.as_str(),
                format!("cost {}", node.observation_cost),
            ));
        }
    }

    let roots: Vec<&NodeSpec> = spec
        .nodes
        .iter()
        .filter(|n| n.kind == NodeKind::Root)
        .collect();
    match roots.len() {
        0 => out.push(Violation::new(NoRoot, spec.name.as_str(), "")),
        1 => {}
        _ => out.push(Violation::new(
            MultipleRoots,
            roots
                .iter()
                .map(|n| n.id.as_str())
                .collect::<Vec<_>>()
                .join(","),
            "",
        )),
    }

    let mut incoming: BTreeMap<&str, usize> = BTreeMap::new();
    let mut outgoing: BTreeSet<&str> = BTreeSet::new();
    for link in &spec.links {
        let name = link_name(link);
        let mut known = true;
        for end in [&link.parent, &link.child] {
            if !ids.contains_key(end.as_str()) {
                out.push(Violation::new(
                    UnknownNode,
                    name.as_str(),
                    format!("{end} is not declared"),
                ));
                known = false;
            }
        }
        if !link.cpt.is_valid() {
            out.push(Violation::new(
                ProbabilityOutOfRange,
                name.as_str(),
                format!(
                    "({}, {}) is not a pair of probabilities",
                    link.cpt.p_given_true, link.cpt.p_given_false
                ),
            ));
        }
        if link.parent == link.child {
            out.push(Violation::new(NotATree, name.as_str(), "self loop"));
        }
        if known {
            *incoming.entry(link.child.as_str()).or_default() += 1;
            outgoing.insert(link.parent.as_str());
        }
    }

    for node in &spec.nodes {
        let id = node.id.as_str();
        if id.is_empty() {
            continue;
        }
        let parents = incoming.get(id).copied().unwrap_or(0);
        match node.kind {
            NodeKind::Root if parents > 0 => {
                out.push(Violation::new(NotATree, id, "root has a parent"))
            }
            NodeKind::Intermediate | NodeKind::Observable if parents == 0 => {
                out.push(Violation::new(NotATree, id, "no incoming link"))
            }
            _ if parents > 1 => out.push(Violation::new(
                NotATree,
                id,
                format!("{parents} incoming links"),
            )),
            _ => {}
        }
        let is_leaf = !outgoing.contains(id);
        match node.kind {
            NodeKind::Observable if !is_leaf => out.push(Violation::new(ObservableNotLeaf, id, "")),
            NodeKind::Intermediate if is_leaf => {
                out.push(Violation::new(LeafNotObservable, id, ""))
            }
            _ => {}
        }
    }

    // Reachability from the root catches cycles and disconnected parts.
    if roots.len() == 1 {
        let root = roots[0].id.as_str();
        let mut seen = BTreeSet::from([root]);
        let mut queue = VecDeque::from([root]);
        while let Some(n) = queue.pop_front() {
            for link in spec.links.iter().filter(|l| l.parent.as_str() == n) {
                if seen.insert(link.child.as_str()) {
                    queue.push_back(link.child.as_str());
                }
            }
        }
        for node in &spec.nodes {
            if !node.id.as_str().is_empty() && !seen.contains(node.id.as_str()) {
                out.push(Violation::new(
                    NotATree,
                    node.id.as_str(),
                    "not reachable from the root",
                ));
            }
        }
    }

    for (id, th) in &spec.thresholds {
        if !ids.contains_key(id.as_str()) {
            out.push(Violation::new(
                UnknownNode,
                id.as_str(),
                "thresholds for undeclared node",
            ));
        }
        if !th.is_valid() {
            out.push(Violation::new(
                InvalidThresholds,
                id.as_str(),
                format!("need 0 <= low ({}) <= high ({}) <= 1", th.t_low, th.t_high),
            ));
        }
    }

    out
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid network: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Parses a network file and validates it.
pub fn load_network(bytes: &[u8]) -> Result<Network, LoadError> {
    let spec: NetworkSpec = serde_json::from_slice(bytes).map_err(|e| LoadError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Network::new(spec).map_err(LoadError::Invalid)
}

/// A validated network with tree indices.
///
/// Nodes are addressed by their position in the document order of
/// [`NetworkSpec::nodes`].
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    index: BTreeMap<NodeId, usize>,
    parent: Vec<Option<usize>>,
    // cpt[i] is the link parent(i) -> i; identity for the root.
    cpt: Vec<LinkCpt>,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
    top_down: Vec<usize>,
    root: usize,
}

impl Network {
    pub fn new(spec: NetworkSpec) -> Result<Self, Vec<Violation>> {
        let violations = validate_network(&spec);
        if !violations.is_empty() {
            return Err(violations);
        }
        let n = spec.nodes.len();
        let index: BTreeMap<NodeId, usize> = spec
            .nodes
            .iter()
            .enumerate()
            .map(|(i, node)| (node.id.clone(), i))
            .collect();
        let mut parent = vec![None; n];
        let mut cpt = vec![LinkCpt::IDENTITY; n];
        let mut children = vec![Vec::new(); n];
        for link in &spec.links {
            let p = index[&link.parent];
            let c = index[&link.child];
            parent[c] = Some(p);
            cpt[c] = link.cpt;
            children[p].push(c);
        }
        let root = spec
            .nodes
            .iter()
            .position(|node| node.kind == NodeKind::Root)
            .expect("validated");
        let mut depth = vec![0; n];
        let mut top_down = Vec::with_capacity(n);
        let mut queue = VecDeque::from([root]);
        while let Some(i) = queue.pop_front() {
            top_down.push(i);
            for &c in &children[i] {
                depth[c] = depth[i] + 1;
                queue.push_back(c);
            }
        }
        Ok(Network {
            spec,
            index,
            parent,
            cpt,
            children,
            depth,
            top_down,
            root,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn root_prior(&self) -> f64 {
        self.spec.root_prior
    }

    pub fn len(&self) -> usize {
        self.spec.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spec.nodes.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn node(&self, i: usize) -> &NodeSpec {
        &self.spec.nodes[i]
    }

    pub fn id(&self, i: usize) -> &NodeId {
        &self.spec.nodes[i].id
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        self.parent[i]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    /// CPT of the link entering `i` (identity for the root).
    pub fn cpt(&self, i: usize) -> LinkCpt {
        self.cpt[i]
    }

    /// Number of links between the root and `i`.
    pub fn depth(&self, i: usize) -> usize {
        self.depth[i]
    }

    pub fn max_depth(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    /// Node indices in breadth-first order from the root.
    pub fn top_down(&self) -> &[usize] {
        &self.top_down
    }

    pub fn is_leaf(&self, i: usize) -> bool {
        self.children[i].is_empty() && i != self.root
    }

    /// Observable leaves in document order.
    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.is_leaf(i))
    }

    pub fn thresholds(&self, i: usize) -> Thresholds {
        self.spec
            .thresholds
            .get(self.id(i))
            .copied()
            .unwrap_or_default()
    }

    /// Whether `ancestor` lies strictly above `node`.
    pub fn is_ancestor(&self, ancestor: usize, node: usize) -> bool {
        let mut cur = self.parent[node];
        while let Some(p) = cur {
            if p == ancestor {
                return true;
            }
            cur = self.parent[p];
        }
        false
    }

    /// `ancestor` followed by the nodes below it down to `node`.
    pub fn path_down(&self, ancestor: usize, node: usize) -> Option<Vec<usize>> {
        let mut path = vec![node];
        let mut cur = node;
        while cur != ancestor {
            cur = self.parent[cur]?;
            path.push(cur);
        }
        path.reverse();
        Some(path)
    }

    /// `i` and all of its descendants.
    pub fn subtree(&self, i: usize) -> Vec<usize> {
        let mut out = vec![i];
        let mut k = 0;
        while k < out.len() {
            out.extend_from_slice(&self.children[out[k]]);
            k += 1;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvidenceError {
    #[error("soft evidence {0} must lie strictly between 0 and 1")]
    SoftOutOfRange(f64),
    #[error("reading {0} is not a probability")]
    NotAProbability(f64),
}

/// What is known about one node.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum EvidenceValue {
    Hard(bool),
    /// Noisy reading, weighting the node's states by `(v, 1 - v)`.
    Soft(f64),
    #[default]
    Unobserved,
}

impl EvidenceValue {
    /// Maps a numeric reading: exactly 0 or 1 is hard, anything strictly
    /// between is soft.
    pub fn from_reading(v: f64) -> Result<Self, EvidenceError> {
        if v == 0.0 {
            Ok(EvidenceValue::Hard(false))
        } else if v == 1.0 {
            Ok(EvidenceValue::Hard(true))
        } else if v > 0.0 && v < 1.0 {
            Ok(EvidenceValue::Soft(v))
        } else {
            Err(EvidenceError::NotAProbability(v))
        }
    }

    pub fn is_observed(&self) -> bool {
        !matches!(self, EvidenceValue::Unobserved)
    }

    /// Likelihood weights for states `[0, 1]`.
    pub fn likelihood(&self) -> [f64; 2] {
        match *self {
            EvidenceValue::Hard(true) => [0.0, 1.0],
            EvidenceValue::Hard(false) => [1.0, 0.0],
            EvidenceValue::Soft(v) => [1.0 - v, v],
            EvidenceValue::Unobserved => [1.0, 1.0],
        }
    }

    /// The reading as a number, `None` when unobserved.
    pub fn reading(&self) -> Option<f64> {
        match *self {
            EvidenceValue::Hard(b) => Some(if b { 1.0 } else { 0.0 }),
            EvidenceValue::Soft(v) => Some(v),
            EvidenceValue::Unobserved => None,
        }
    }
}

impl fmt::Display for EvidenceValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvidenceValue::Hard(true) => f.write_str("1"),
            EvidenceValue::Hard(false) => f.write_str("0"),
            EvidenceValue::Soft(v) => write!(f, "{v}"),
            EvidenceValue::Unobserved => f.write_str("?"),
        }
    }
}

impl Serialize for EvidenceValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            EvidenceValue::Hard(b) => s.serialize_u8(u8::from(*b)),
            EvidenceValue::Soft(v) => s.serialize_f64(*v),
            EvidenceValue::Unobserved => s.serialize_none(),
        }
    }
}

impl<'de> Deserialize<'de> for EvidenceValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match Option::<f64>::deserialize(d)? {
            None => Ok(EvidenceValue::Unobserved),
            Some(v) => EvidenceValue::from_reading(v).map_err(serde::de::Error::custom),
        }
    }
}

/// Evidence map; nodes not present are unobserved.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Evidence(BTreeMap<NodeId, EvidenceValue>);

impl Evidence {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a value; `Unobserved` removes any previous entry.
    pub fn insert(&mut self, node: NodeId, value: EvidenceValue) -> Result<(), EvidenceError> {
        match value {
            EvidenceValue::Soft(v) if !(v > 0.0 && v < 1.0) => {
                return Err(EvidenceError::SoftOutOfRange(v))
            }
            EvidenceValue::Unobserved => {
                self.0.remove(&node);
            }
            _ => {
                self.0.insert(node, value);
            }
        }
        Ok(())
    }

    pub fn with(
        mut self,
        node: impl Into<NodeId>,
        value: EvidenceValue,
    ) -> Result<Self, EvidenceError> {
        self.insert(node.into(), value)?;
        Ok(self)
    }

    pub fn get(&self, node: &str) -> EvidenceValue {
        self.0.get(node).copied().unwrap_or_default()
    }

    pub fn is_observed(&self, node: &str) -> bool {
        self.0.contains_key(node)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, &EvidenceValue)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<(NodeId, EvidenceValue)> for Evidence {
    /// Collects without range checks; invalid soft values surface later as
    /// propagation errors.
    fn from_iter<T: IntoIterator<Item = (NodeId, EvidenceValue)>>(iter: T) -> Self {
        Evidence(iter.into_iter().filter(|(_, v)| v.is_observed()).collect())
    }
}
