//! Control strategies: termination criterion, decision function and
//! information-acquisition policy, run as a session state machine.
//!
//! Every strategy condenses the network with its depth vector and walks the
//! condensed tree top-down. The walk keeps a focus stack of subgoals: at
//! each level it picks the open child with the highest evaluation score and
//! descends until it reaches a leaf, which becomes the next query. The four
//! modes differ only in when a focused subgoal is released and when the
//! global goal is checked:
//!
//! | mode          | subgoal released when               | goal checked        |
//! |---------------|-------------------------------------|---------------------|
//! | `Flat`        | (no subgoals: two-level view)       | after every answer  |
//! | `Grouped`     | all its indicators are observed     | after every answer  |
//! | `Distributed` | its own thresholds decide it        | after every answer  |
//! | `Isolated`    | its own thresholds decide it        | when a subgoal ends |
//!
//! Posteriors are always exact over all evidence on the original tree. In
//! `Isolated` mode the visible [`BeliefState`] is refreshed only inside the
//! focused subtree until the subgoal ends, at which point the whole state is
//! refreshed and the goal is checked.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::model::{Evidence, EvidenceError, EvidenceValue, LinkCpt, Network, NodeId, Thresholds};
use crate::propagation::{
    conditioned_link, propagate_beliefs, BeliefState, Condensation, DepthVector, DepthVectorError,
    PropagationError,
};

/// Outcome for one hypothesis. Ordered `Negative < Undecided < Positive`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Decision {
    Negative,
    Undecided,
    Positive,
}

impl Decision {
    /// ASCII form used in JSON: `+`, `-`, `?`.
    pub fn code(&self) -> &'static str {
        match self {
            Decision::Positive => "+",
            Decision::Negative => "-",
            Decision::Undecided => "?",
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Positive => "+",
            Decision::Negative => "\u{2212}",
            Decision::Undecided => "?",
        })
    }
}

impl Serialize for Decision {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.code())
    }
}

impl<'de> Deserialize<'de> for Decision {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        match s.as_str() {
            "+" => Ok(Decision::Positive),
            "-" | "\u{2212}" => Ok(Decision::Negative),
            "?" => Ok(Decision::Undecided),
            other => Err(serde::de::Error::custom(format!(
                "unknown decision {other:?}"
            ))),
        }
    }
}

/// Maps a posterior to a decision; both thresholds are inclusive.
pub fn decide(p: f64, th: Thresholds) -> Decision {
    if p >= th.t_high {
        Decision::Positive
    } else if p <= th.t_low {
        Decision::Negative
    } else {
        Decision::Undecided
    }
}

/// `|P(c=1|p=1) - P(c=1|p=0)|`, independent of the parent's prior.
pub fn ev_discrimination(link: LinkCpt) -> f64 {
    (link.p_given_true - link.p_given_false).abs()
}

fn entropy(p: f64) -> f64 {
    let h = |x: f64| if x > 0.0 { -x * x.log2() } else { 0.0 };
    h(p) + h(1.0 - p)
}

/// Expected reduction, in bits, of the parent's entropy from observing the
/// child.
pub fn ev_info_gain(parent_posterior: f64, link: LinkCpt) -> f64 {
    let p = parent_posterior;
    let c1 = p * link.p_given_true + (1.0 - p) * link.p_given_false;
    let c0 = 1.0 - c1;
    let mut expected = 0.0;
    if c1 > 0.0 {
        expected += c1 * entropy(p * link.p_given_true / c1);
    }
    if c0 > 0.0 {
        expected += c0 * entropy(p * (1.0 - link.p_given_true) / c0);
    }
    (entropy(p) - expected).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Flat,
    Grouped,
    Distributed,
    Isolated,
}

impl Mode {
    fn releases_on_criterion(self) -> bool {
        matches!(self, Mode::Distributed | Mode::Isolated)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvScore {
    #[default]
    Discrimination,
    InfoGain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvTiming {
    /// Scores from the initial network, computed once.
    #[default]
    Static,
    /// Scores from evidence-conditioned virtual links, recomputed each step.
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Goal {
    /// Only the root must be decided.
    #[default]
    RootOnly,
    /// The root and the selected targets must be decided.
    RootPlusSelected,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StrategySpec {
    pub mode: Mode,
    /// `None` picks the mode's default: one jump for `Flat`, every level
    /// otherwise.
    #[serde(default)]
    pub depth_vector: Option<DepthVector>,
    #[serde(default)]
    pub ev: EvScore,
    #[serde(default)]
    pub ev_timing: EvTiming,
    #[serde(default)]
    pub goal: Goal,
    #[serde(default)]
    pub selected_targets: Vec<NodeId>,
}

impl StrategySpec {
    pub fn new(mode: Mode) -> Self {
        StrategySpec {
            mode,
            depth_vector: None,
            ev: EvScore::default(),
            ev_timing: EvTiming::default(),
            goal: Goal::default(),
            selected_targets: Vec::new(),
        }
    }

    pub fn with_depth_vector(mut self, dv: DepthVector) -> Self {
        self.depth_vector = Some(dv);
        self
    }

    pub fn with_ev(mut self, ev: EvScore, timing: EvTiming) -> Self {
        self.ev = ev;
        self.ev_timing = timing;
        self
    }

    pub fn with_targets(mut self, targets: impl IntoIterator<Item = NodeId>) -> Self {
        self.goal = Goal::RootPlusSelected;
        self.selected_targets = targets.into_iter().collect();
        self
    }

    /// Depth vector the strategy uses on `net`.
    pub fn resolved_depth_vector(&self, net: &Network) -> DepthVector {
        match (&self.depth_vector, self.mode) {
            (Some(dv), _) => dv.clone(),
            (None, Mode::Flat) => DepthVector::flat(net.max_depth()),
            (None, _) => DepthVector::unit(net.max_depth()),
        }
    }

    /// Short human-readable name, e.g. `grouped[1,1]/discrimination/static`.
    pub fn label(&self) -> String {
        let dv = self
            .depth_vector
            .as_ref()
            .map(|d| d.to_string())
            .unwrap_or_default();
        let mode = format!("{:?}", self.mode).to_lowercase();
        let ev = match self.ev {
            EvScore::Discrimination => "discrimination",
            EvScore::InfoGain => "info_gain",
        };
        let timing = match self.ev_timing {
            EvTiming::Static => "static",
            EvTiming::Dynamic => "dynamic",
        };
        let mut s = format!("{mode}{dv}/{ev}/{timing}");
        if self.goal == Goal::RootPlusSelected {
            s.push_str("/+targets");
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StrategyError {
    #[error(transparent)]
    DepthVector(#[from] DepthVectorError),
    #[error("flat strategies look at two levels only; depth vector must be [{0}], got {1}")]
    FlatDepthVector(usize, DepthVector),
    #[error("unknown target node {0}")]
    UnknownTarget(NodeId),
    #[error("session closed: the session has terminated")]
    NotActive,
    #[error("expected an answer for {expected}, got {got}")]
    NotSelected { expected: NodeId, got: NodeId },
    #[error("no unobserved indicator is available")]
    NothingToQuery,
    #[error("{0} is already observed")]
    AlreadyObserved(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("an answer must be an observed value")]
    EmptyAnswer,
    #[error(transparent)]
    Evidence(#[from] EvidenceError),
    #[error(transparent)]
    Propagation(#[from] PropagationError),
}

/// Strategy data derived once per session.
#[derive(Debug)]
struct Plan {
    condensed: Condensation,
    leaves_under: Vec<Vec<usize>>,
    goal_nodes: Vec<usize>,
    reported: Vec<usize>,
    /// Empty-evidence score of each retained node against its condensed
    /// parent.
    static_scores: Vec<f64>,
}

impl Plan {
    fn new(net: &Network, strategy: &StrategySpec) -> Result<Self, StrategyError> {
        let dv = strategy.resolved_depth_vector(net);
        dv.check(net)?;
        if strategy.mode == Mode::Flat && dv.jumps().len() != 1 {
            return Err(StrategyError::FlatDepthVector(net.max_depth(), dv));
        }
        let condensed = Condensation::new(net, &dv)?;
        let leaves_under = (0..net.len())
            .map(|i| condensed.leaves_under(net, i))
            .collect();

        let mut goal_nodes = vec![net.root()];
        if strategy.goal == Goal::RootPlusSelected {
            if strategy.selected_targets.is_empty() {
                goal_nodes
                    .extend((0..net.len()).filter(|&i| net.node(i).target && i != net.root()));
            } else {
                for id in &strategy.selected_targets {
                    let i = net
                        .index_of(id.as_str())
                        .ok_or_else(|| StrategyError::UnknownTarget(id.clone()))?;
                    if !goal_nodes.contains(&i) {
                        goal_nodes.push(i);
                    }
                }
            }
        }
        let mut reported: Vec<usize> = goal_nodes.clone();
        reported.extend((0..net.len()).filter(|&i| net.node(i).target));
        reported.sort_unstable();
        reported.dedup();

        let prior = propagate_beliefs(net, &Evidence::new())?;
        let static_scores = (0..net.len())
            .map(|i| match condensed.parent[i] {
                None => 0.0,
                Some(a) => score(strategy.ev, prior.p(a), condensed.cpt[i]),
            })
            .collect();

        Ok(Plan {
            condensed,
            leaves_under,
            goal_nodes,
            reported,
            static_scores,
        })
    }
}

fn score(ev: EvScore, anchor_posterior: f64, link: LinkCpt) -> f64 {
    match ev {
        EvScore::Discrimination => ev_discrimination(link),
        EvScore::InfoGain => ev_info_gain(anchor_posterior, link),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub node: NodeId,
    pub value: EvidenceValue,
    pub cost: f64,
    /// Observation made outside the strategy's suggestion.
    #[serde(rename = "override", default)]
    pub overridden: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Status {
    Active,
    Terminated {
        decisions: BTreeMap<NodeId, Decision>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Focus {
    node: usize,
    /// Re-entered after release; only exhaustion ends it this time.
    revisit: bool,
}

/// One diagnosis session. Every transition returns a new value.
#[derive(Debug, Clone)]
pub struct SessionState {
    net: Arc<Network>,
    strategy: StrategySpec,
    plan: Arc<Plan>,
    belief: BeliefState,
    exact: Vec<f64>,
    focus: Vec<Focus>,
    released: BTreeSet<usize>,
    query_log: Vec<QueryRecord>,
    status: Status,
}

impl PartialEq for SessionState {
    fn eq(&self, other: &Self) -> bool {
        self.net == other.net
            && self.strategy == other.strategy
            && self.belief == other.belief
            && self.exact == other.exact
            && self.focus == other.focus
            && self.released == other.released
            && self.query_log == other.query_log
            && self.status == other.status
    }
}

struct Selection {
    focus: Vec<Focus>,
    released: BTreeSet<usize>,
    leaf: usize,
}

impl SessionState {
    /// Starts a session in the prior state. It may terminate immediately
    /// when the prior already satisfies the goal.
    pub fn start(
        net: impl Into<Arc<Network>>,
        strategy: StrategySpec,
    ) -> Result<Self, StrategyError> {
        let net = net.into();
        let plan = Arc::new(Plan::new(&net, &strategy)?);
        let belief = propagate_beliefs(&net, &Evidence::new())?;
        let root = net.root();
        let mut state = SessionState {
            exact: belief.posterior.clone(),
            net,
            strategy,
            plan,
            belief,
            focus: vec![Focus {
                node: root,
                revisit: false,
            }],
            released: BTreeSet::new(),
            query_log: Vec::new(),
            status: Status::Active,
        };
        if state.goal_met() || state.unobserved_leaves() == 0 {
            state.terminate();
        }
        Ok(state)
    }

    pub fn network(&self) -> &Arc<Network> {
        &self.net
    }

    pub fn strategy(&self) -> &StrategySpec {
        &self.strategy
    }

    pub fn belief(&self) -> &BeliefState {
        &self.belief
    }

    pub fn evidence(&self) -> &Evidence {
        &self.belief.evidence
    }

    pub fn query_log(&self) -> &[QueryRecord] {
        &self.query_log
    }

    pub fn query_count(&self) -> usize {
        self.query_log.len()
    }

    pub fn total_cost(&self) -> f64 {
        self.query_log.iter().map(|q| q.cost).sum()
    }

    pub fn status(&self) -> &Status {
        &self.status
    }

    pub fn is_active(&self) -> bool {
        matches!(self.status, Status::Active)
    }

    pub fn decisions(&self) -> Option<&BTreeMap<NodeId, Decision>> {
        match &self.status {
            Status::Terminated { decisions } => Some(decisions),
            Status::Active => None,
        }
    }

    /// Current subgoal chain, root first.
    pub fn focus_stack(&self) -> Vec<NodeId> {
        self.focus
            .iter()
            .map(|f| self.net.id(f.node).clone())
            .collect()
    }

    /// Nodes whose decision is part of the goal.
    pub fn goal_nodes(&self) -> Vec<NodeId> {
        self.plan
            .goal_nodes
            .iter()
            .map(|&i| self.net.id(i).clone())
            .collect()
    }

    /// Whether every goal node is decided under the current beliefs.
    pub fn goal_met(&self) -> bool {
        self.plan
            .goal_nodes
            .iter()
            .all(|&i| decide(self.belief.p(i), self.net.thresholds(i)) != Decision::Undecided)
    }

    /// Score the strategy assigns to `id` against its condensed parent.
    pub fn score_of(&self, id: &str) -> Result<f64, StrategyError> {
        let i = self
            .net
            .index_of(id)
            .ok_or_else(|| StrategyError::UnknownNode(id.into()))?;
        Ok(match self.plan.condensed.parent[i] {
            Some(anchor) => self.score(i, anchor),
            None => 0.0,
        })
    }

    pub fn select_next(&self) -> Result<Option<NodeId>, StrategyError> {
        self.select_next_excluding(&[])
    }

    /// Like [`select_next`](Self::select_next), treating `excluded` leaves
    /// as unavailable for this round.
    pub fn select_next_excluding(
        &self,
        excluded: &[NodeId],
    ) -> Result<Option<NodeId>, StrategyError> {
        if !self.is_active() {
            return Err(StrategyError::NotActive);
        }
        let excluded = self.indices(excluded);
        Ok(self
            .plan_next(&excluded)
            .map(|s| self.net.id(s.leaf).clone()))
    }

    /// Records the answer for the suggested leaf and advances the session.
    pub fn step(
        &self,
        leaf: &NodeId,
        answer: EvidenceValue,
    ) -> Result<SessionState, StrategyError> {
        self.step_excluding(leaf, answer, &[])
    }

    pub fn step_excluding(
        &self,
        leaf: &NodeId,
        answer: EvidenceValue,
        excluded: &[NodeId],
    ) -> Result<SessionState, StrategyError> {
        if !self.is_active() {
            return Err(StrategyError::NotActive);
        }
        if self.belief.evidence.is_observed(leaf.as_str()) {
            return Err(StrategyError::AlreadyObserved(leaf.clone()));
        }
        if !answer.is_observed() {
            return Err(StrategyError::EmptyAnswer);
        }
        let excluded = self.indices(excluded);
        let sel = self
            .plan_next(&excluded)
            .ok_or(StrategyError::NothingToQuery)?;
        if self.net.id(sel.leaf) != leaf {
            return Err(StrategyError::NotSelected {
                expected: self.net.id(sel.leaf).clone(),
                got: leaf.clone(),
            });
        }
        let mut next = self.clone();
        next.focus = sel.focus;
        next.released = sel.released;
        next.apply(sel.leaf, answer, false)?;
        Ok(next)
    }

    /// Records an observation chosen by the operator rather than the
    /// strategy: any leaf, or hard evidence on an inner node. Beliefs are
    /// refreshed globally and the focus is re-derived from them.
    pub fn observe_override(
        &self,
        node: &NodeId,
        value: EvidenceValue,
    ) -> Result<SessionState, StrategyError> {
        if !self.is_active() {
            return Err(StrategyError::NotActive);
        }
        let i = self
            .net
            .index_of(node.as_str())
            .ok_or_else(|| StrategyError::UnknownNode(node.clone()))?;
        if self.belief.evidence.is_observed(node.as_str()) {
            return Err(StrategyError::AlreadyObserved(node.clone()));
        }
        if !value.is_observed() {
            return Err(StrategyError::EmptyAnswer);
        }
        let mut next = self.clone();
        next.apply(i, value, true)?;
        Ok(next)
    }

    fn indices(&self, ids: &[NodeId]) -> BTreeSet<usize> {
        ids.iter()
            .filter_map(|id| self.net.index_of(id.as_str()))
            .collect()
    }

    fn observed(&self, i: usize) -> bool {
        self.belief.evidence.is_observed(self.net.id(i).as_str())
    }

    fn exhausted(&self, i: usize) -> bool {
        self.plan.leaves_under[i].iter().all(|&l| self.observed(l))
    }

    fn unobserved_leaves(&self) -> usize {
        self.net.leaves().filter(|&l| !self.observed(l)).count()
    }

    fn criterion_met(&self, i: usize) -> bool {
        decide(self.exact[i], self.net.thresholds(i)) != Decision::Undecided
    }

    fn score(&self, child: usize, anchor: usize) -> f64 {
        match self.strategy.ev_timing {
            EvTiming::Static => self.plan.static_scores[child],
            EvTiming::Dynamic => {
                match conditioned_link(&self.net, &self.belief.evidence, child, anchor) {
                    Ok(link) => score(self.strategy.ev, self.exact[anchor], link),
                    // The anchor is already determined; nothing left to learn.
                    Err(_) => 0.0,
                }
            }
        }
    }

    fn plan_next(&self, excluded: &BTreeSet<usize>) -> Option<Selection> {
        let mut focus = self.focus.clone();
        let mut released = self.released.clone();
        loop {
            let top = focus.last().expect("root stays in focus").node;
            let mut path = Vec::new();
            if let Some(leaf) = self.descend(top, excluded, &mut path, &mut released) {
                focus.extend(path);
                return Some(Selection {
                    focus,
                    released,
                    leaf,
                });
            }
            if focus.len() == 1 {
                return None;
            }
            focus.pop();
        }
    }

    fn descend(
        &self,
        anchor: usize,
        excluded: &BTreeSet<usize>,
        path: &mut Vec<Focus>,
        released: &mut BTreeSet<usize>,
    ) -> Option<usize> {
        let mut open = Vec::new();
        let mut reentry = Vec::new();
        for &c in &self.plan.condensed.children[anchor] {
            if self.net.is_leaf(c) {
                if !self.observed(c) && !excluded.contains(&c) {
                    open.push(c);
                }
                continue;
            }
            if self.exhausted(c) {
                continue;
            }
            if self.strategy.mode.releases_on_criterion() && self.criterion_met(c) {
                released.insert(c);
            }
            if released.contains(&c) {
                reentry.push(c);
            } else {
                open.push(c);
            }
        }
        for (candidates, revisit) in [(open, false), (reentry, true)] {
            let mut scored: Vec<(f64, usize)> = candidates
                .into_iter()
                .map(|c| (self.score(c, anchor), c))
                .collect();
            scored.sort_by(|a, b| {
                b.0.total_cmp(&a.0)
                    .then_with(|| self.net.id(a.1).cmp(self.net.id(b.1)))
            });
            for (_, c) in scored {
                if self.net.is_leaf(c) {
                    return Some(c);
                }
                path.push(Focus { node: c, revisit });
                if let Some(leaf) = self.descend(c, excluded, path, released) {
                    return Some(leaf);
                }
                path.pop();
            }
        }
        None
    }

    fn apply(
        &mut self,
        node: usize,
        value: EvidenceValue,
        overridden: bool,
    ) -> Result<(), StrategyError> {
        let id = self.net.id(node).clone();
        let mut evidence = self.belief.evidence.clone();
        evidence.insert(id.clone(), value)?;
        let exact = propagate_beliefs(&self.net, &evidence)?;
        let cost = self.net.node(node).observation_cost;
        self.query_log.push(QueryRecord {
            node: id,
            value,
            cost,
            overridden,
        });
        self.exact = exact.posterior;
        self.belief.evidence = evidence;

        let isolated = self.strategy.mode == Mode::Isolated;
        let scope = self.focus.last().expect("root stays in focus").node;
        let mut refresh_all = overridden || !isolated || scope == self.net.root();

        // Release finished subgoals, innermost first.
        while self.focus.len() > 1 {
            let top = *self.focus.last().expect("non-empty");
            let by_criterion = self.strategy.mode.releases_on_criterion()
                && !top.revisit
                && self.criterion_met(top.node);
            if !(by_criterion || self.exhausted(top.node)) {
                break;
            }
            if by_criterion {
                self.released.insert(top.node);
            }
            self.focus.pop();
            refresh_all = true;
        }

        let exhausted = self.unobserved_leaves() == 0;
        if refresh_all || exhausted {
            self.belief.posterior = self.exact.clone();
            if exhausted || self.goal_met() {
                self.terminate();
            }
        } else {
            for i in self.net.subtree(scope) {
                self.belief.posterior[i] = self.exact[i];
            }
        }
        Ok(())
    }

    fn terminate(&mut self) {
        let decisions = self
            .plan
            .reported
            .iter()
            .map(|&i| {
                (
                    self.net.id(i).clone(),
                    decide(self.belief.p(i), self.net.thresholds(i)),
                )
            })
            .collect();
        self.status = Status::Terminated { decisions };
    }
}

/// `true` iff every goal node of the session is decided.
pub fn goal_met(state: &SessionState) -> bool {
    state.goal_met()
}

pub fn select_next(state: &SessionState) -> Result<Option<NodeId>, StrategyError> {
    state.select_next()
}

pub fn step(
    state: &SessionState,
    leaf: &NodeId,
    answer: EvidenceValue,
) -> Result<SessionState, StrategyError> {
    state.step(leaf, answer)
}

/// Runs a session to termination, asking `answer` for each suggested leaf.
pub fn run_to_termination<F>(
    net: impl Into<Arc<Network>>,
    strategy: StrategySpec,
    mut answer: F,
) -> Result<SessionState, StrategyError>
where
    F: FnMut(&NodeId) -> EvidenceValue,
{
    let mut state = SessionState::start(net, strategy)?;
    while state.is_active() {
        let leaf = state.select_next()?.ok_or(StrategyError::NothingToQuery)?;
        let value = answer(&leaf);
        state = state.step(&leaf, value)?;
    }
    Ok(state)
}
