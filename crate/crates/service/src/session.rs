//! Session records and the event log they are rebuilt from.

use std::collections::BTreeMap;
use std::sync::Arc;

use infernet::strategies::QueryRecord;
use infernet::{
    propagate_beliefs, Decision, Evidence, EvidenceValue, Network, NetworkSpec, NodeId, NodeKind,
    PropagationError, SessionState, Status, StrategySpec,
};
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

/// One line of a session log. `Suggested` and `Terminated` are derived
/// entries; replay recomputes and checks them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Created {
        session_id: String,
        created_at: String,
        network: NetworkSpec,
        strategy: StrategySpec,
    },
    Suggested {
        node: NodeId,
    },
    Observed {
        node: NodeId,
        value: EvidenceValue,
        #[serde(rename = "override", default)]
        overridden: bool,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        excluded: Vec<NodeId>,
    },
    Terminated {
        decisions: BTreeMap<NodeId, Decision>,
    },
    Closed {
        at: String,
    },
}

/// An observation as posted by a client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub node: NodeId,
    pub value: EvidenceValue,
    #[serde(rename = "override", default)]
    pub overridden: bool,
    /// Leaves skipped for this round before `node` was chosen.
    #[serde(default)]
    pub excluded: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionRecord {
    pub session_id: String,
    pub created_at: String,
    pub network_name: String,
    pub state: SessionState,
    pub events: Vec<SessionEvent>,
    pub closed_at: Option<String>,
}

impl SessionRecord {
    /// Starts a session and writes its opening events.
    pub fn create(
        session_id: String,
        created_at: String,
        net: Arc<Network>,
        strategy: StrategySpec,
    ) -> Result<Self, ServiceError> {
        let state = SessionState::start(net.clone(), strategy.clone())?;
        let mut record = SessionRecord {
            events: vec![SessionEvent::Created {
                session_id: session_id.clone(),
                created_at: created_at.clone(),
                network: net.spec().clone(),
                strategy,
            }],
            session_id,
            created_at,
            network_name: net.name().to_owned(),
            state,
            closed_at: None,
        };
        record.push_derived();
        Ok(record)
    }

    pub fn is_closed(&self) -> bool {
        self.closed_at.is_some()
    }

    /// Applies an observation and returns the events it produced.
    pub fn observe(&mut self, obs: Observation) -> Result<&[SessionEvent], ServiceError> {
        if self.is_closed() {
            return Err(ServiceError::SessionClosed);
        }
        let next = if obs.overridden {
            self.state.observe_override(&obs.node, obs.value)?
        } else {
            self.state
                .step_excluding(&obs.node, obs.value, &obs.excluded)?
        };
        self.state = next;
        let start = self.events.len();
        self.events.push(SessionEvent::Observed {
            node: obs.node,
            value: obs.value,
            overridden: obs.overridden,
            excluded: obs.excluded,
        });
        self.push_derived();
        Ok(&self.events[start..])
    }

    pub fn close(&mut self, at: String) -> Result<&SessionEvent, ServiceError> {
        if self.is_closed() {
            return Err(ServiceError::SessionClosed);
        }
        self.closed_at = Some(at.clone());
        self.events.push(SessionEvent::Closed { at });
        Ok(self.events.last().expect("just pushed"))
    }

    fn push_derived(&mut self) {
        match self.state.status() {
            Status::Active => {
                if let Ok(Some(node)) = self.state.select_next() {
                    self.events.push(SessionEvent::Suggested { node });
                }
            }
            Status::Terminated { decisions } => self.events.push(SessionEvent::Terminated {
                decisions: decisions.clone(),
            }),
        }
    }

    /// Rebuilds a record from its log. The inputs are re-applied and the
    /// regenerated log must equal the stored one entry for entry.
    pub fn replay(events: Vec<SessionEvent>) -> Result<Self, ServiceError> {
        let Some(SessionEvent::Created {
            session_id,
            created_at,
            network,
            strategy,
        }) = events.first().cloned()
        else {
            return Err(ServiceError::Store(
                "log does not start with a created event".into(),
            ));
        };
        let net = Network::new(network).map_err(|v| {
            ServiceError::Store(format!("logged network has {} violations", v.len()))
        })?;
        let mut record = SessionRecord::create(session_id, created_at, Arc::new(net), strategy)?;
        for event in &events[1..] {
            match event {
                SessionEvent::Observed {
                    node,
                    value,
                    overridden,
                    excluded,
                } => {
                    record.observe(Observation {
                        node: node.clone(),
                        value: *value,
                        overridden: *overridden,
                        excluded: excluded.clone(),
                    })?;
                }
                SessionEvent::Closed { at } => {
                    record.close(at.clone())?;
                }
                SessionEvent::Created { .. } => {
                    return Err(ServiceError::Store("second created event in log".into()));
                }
                SessionEvent::Suggested { .. } | SessionEvent::Terminated { .. } => {}
            }
        }
        if let Some(at) = record.events.iter().zip(&events).position(|(a, b)| a != b) {
            return Err(ServiceError::Store(format!(
                "replay diverged at event {at}"
            )));
        }
        if record.events.len() != events.len() {
            return Err(ServiceError::Store(format!(
                "replay produced {} events, log has {}",
                record.events.len(),
                events.len()
            )));
        }
        Ok(record)
    }

    pub fn view(&self) -> SessionView {
        SessionView::of(self)
    }
}

impl Serialize for SessionRecord {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Wire<'a> {
            session_id: &'a str,
            created_at: &'a str,
            network: &'a str,
            strategy: &'a StrategySpec,
            closed_at: &'a Option<String>,
            state: SessionView,
            events: &'a [SessionEvent],
        }
        Wire {
            session_id: &self.session_id,
            created_at: &self.created_at,
            network: &self.network_name,
            strategy: self.state.strategy(),
            closed_at: &self.closed_at,
            state: self.view(),
            events: &self.events,
        }
        .serialize(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeView {
    pub id: NodeId,
    pub label: String,
    pub kind: NodeKind,
    pub parent: Option<NodeId>,
    pub depth: usize,
    pub posterior: f64,
    pub evidence: EvidenceValue,
    pub decision: Decision,
    pub target: bool,
}

/// Everything a client needs to render a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub network: String,
    pub strategy: StrategySpec,
    pub status: Status,
    pub closed: bool,
    pub posteriors: BTreeMap<NodeId, f64>,
    pub evidence: Evidence,
    pub suggestion: Option<NodeId>,
    pub decisions: Option<BTreeMap<NodeId, Decision>>,
    pub query_log: Vec<QueryRecord>,
    pub focus: Vec<NodeId>,
    pub query_count: usize,
    pub total_cost: f64,
    pub nodes: Vec<NodeView>,
}

impl SessionView {
    fn of(record: &SessionRecord) -> Self {
        let state = &record.state;
        let net = state.network();
        let belief = state.belief();
        let nodes = (0..net.len())
            .map(|i| {
                let spec = net.node(i);
                NodeView {
                    id: spec.id.clone(),
                    label: spec.label.clone(),
                    kind: spec.kind,
                    parent: net.parent(i).map(|p| net.id(p).clone()),
                    depth: net.depth(i),
                    posterior: belief.p(i),
                    evidence: belief.evidence.get(spec.id.as_str()),
                    decision: infernet::decide(belief.p(i), net.thresholds(i)),
                    target: spec.target,
                }
            })
            .collect();
        let suggestion = if record.is_closed() {
            None
        } else {
            state.select_next().ok().flatten()
        };
        SessionView {
            session_id: record.session_id.clone(),
            network: record.network_name.clone(),
            strategy: state.strategy().clone(),
            status: state.status().clone(),
            closed: record.is_closed(),
            posteriors: belief.to_map(net),
            evidence: belief.evidence.clone(),
            suggestion,
            decisions: state.decisions().cloned(),
            query_log: state.query_log().to_vec(),
            focus: state.focus_stack(),
            query_count: state.query_count(),
            total_cost: state.total_cost(),
            nodes,
        }
    }
}

/// Hypothetical posteriors for both hard answers at one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIf {
    pub node: NodeId,
    pub score: f64,
    pub current: BTreeMap<NodeId, f64>,
    /// `None` when that answer contradicts the evidence so far.
    pub if_true: Option<BTreeMap<NodeId, f64>>,
    pub if_false: Option<BTreeMap<NodeId, f64>>,
}

impl WhatIf {
    pub fn of(state: &SessionState, node: &NodeId) -> Result<Self, ServiceError> {
        let net = state.network();
        if net.index_of(node.as_str()).is_none() {
            return Err(ServiceError::NotFound(format!("unknown node {node}")));
        }
        if state.evidence().is_observed(node.as_str()) {
            return Err(ServiceError::AlreadyObserved(node.clone()));
        }
        let branch = |b: bool| -> Result<Option<BTreeMap<NodeId, f64>>, ServiceError> {
            let e = state
                .evidence()
                .clone()
                .with(node.clone(), EvidenceValue::Hard(b))
                .map_err(|e| ServiceError::BadRequest(e.to_string()))?;
            match propagate_beliefs(net, &e) {
                Ok(belief) => Ok(Some(belief.to_map(net))),
                Err(PropagationError::Contradictory) => Ok(None),
                Err(e) => Err(ServiceError::BadRequest(e.to_string())),
            }
        };
        Ok(WhatIf {
            node: node.clone(),
            score: state.score_of(node.as_str())?,
            current: state.belief().to_map(net),
            if_true: branch(true)?,
            if_false: branch(false)?,
        })
    }
}
