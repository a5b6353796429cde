use std::sync::Arc;
use std::thread;

use infernet::fixtures::FIGURE4_JSON;
use infernet::{EvidenceValue, Mode, NodeId, StrategySpec};
use infernet_service::{Observation, ServiceError, SessionEvent, SessionManager, SessionRecord};

fn obs(node: &str, value: EvidenceValue) -> Observation {
    Observation {
        node: NodeId::new(node),
        value,
        overridden: false,
        excluded: Vec::new(),
    }
}

fn drive(m: &SessionManager, id: &str) {
    m.observe(id, obs("N111", EvidenceValue::Hard(true)))
        .unwrap();
    let skip = m.suggest(id, &[]).unwrap().unwrap();
    let other = m.suggest(id, std::slice::from_ref(&skip)).unwrap().unwrap();
    m.observe(
        id,
        Observation {
            excluded: vec![skip],
            ..obs(other.as_str(), EvidenceValue::Soft(0.7))
        },
    )
    .unwrap();
    m.observe(
        id,
        Observation {
            overridden: true,
            ..obs("N122", EvidenceValue::Hard(false))
        },
    )
    .unwrap();
}

#[test]
fn replay_reproduces_state_bit_for_bit() {
    let m = SessionManager::in_memory();
    m.register_network(FIGURE4_JSON.as_bytes()).unwrap();
    let id = m
        .create_session("figure4", StrategySpec::new(Mode::Distributed))
        .unwrap()
        .session_id;
    drive(&m, &id);
    let record = m.record(&id).unwrap();
    let replayed = SessionRecord::replay(record.events.clone()).unwrap();
    assert_eq!(replayed, record);
    let bits = |r: &SessionRecord| {
        r.state
            .belief()
            .posterior
            .iter()
            .map(|p| p.to_bits())
            .collect::<Vec<_>>()
    };
    assert_eq!(bits(&replayed), bits(&record));
    assert_eq!(
        serde_json::to_string(&replayed).unwrap(),
        serde_json::to_string(&record).unwrap()
    );
}

#[test]
fn tampered_logs_are_rejected() {
    let m = SessionManager::in_memory();
    m.register_network(FIGURE4_JSON.as_bytes()).unwrap();
    let id = m
        .create_session("figure4", StrategySpec::new(Mode::Grouped))
        .unwrap()
        .session_id;
    m.observe(&id, obs("N111", EvidenceValue::Hard(true)))
        .unwrap();
    let mut events = m.record(&id).unwrap().events;
    let last = events.len() - 1;
    events[last] = SessionEvent::Suggested {
        node: NodeId::new("N123"),
    };
    assert!(matches!(
        SessionRecord::replay(events),
        Err(ServiceError::Store(_))
    ));
}

#[test]
fn store_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (id, closed, before) = {
        let m = SessionManager::with_store(dir.path()).unwrap();
        assert!(m.list_networks().is_empty());
        m.register_network(FIGURE4_JSON.as_bytes()).unwrap();
        let id = m
            .create_session("figure4", StrategySpec::new(Mode::Isolated))
            .unwrap()
            .session_id;
        drive(&m, &id);
        let closed = m
            .create_session("figure4", StrategySpec::new(Mode::Flat))
            .unwrap()
            .session_id;
        m.close(&closed).unwrap();
        let before = m.record(&id).unwrap();
        (id, closed, before)
    };
    let m = SessionManager::with_store(dir.path()).unwrap();
    assert_eq!(m.list_networks().len(), 1);
    assert_eq!(m.record(&id).unwrap(), before);
    assert!(m.record(&closed).unwrap().is_closed());
    assert!(matches!(
        m.observe(&closed, obs("N111", EvidenceValue::Hard(true))),
        Err(ServiceError::SessionClosed)
    ));
    // The reopened session keeps going and keeps logging.
    let next = m.suggest(&id, &[]).unwrap().unwrap();
    m.observe(&id, obs(next.as_str(), EvidenceValue::Hard(true)))
        .unwrap();
    let after = m.record(&id).unwrap();
    drop(m);
    let m = SessionManager::with_store(dir.path()).unwrap();
    assert_eq!(m.record(&id).unwrap(), after);
}

#[test]
fn failed_requests_leave_no_trace() {
    let dir = tempfile::tempdir().unwrap();
    let m = SessionManager::with_store(dir.path()).unwrap();
    m.register_network(FIGURE4_JSON.as_bytes()).unwrap();
    let id = m
        .create_session("figure4", StrategySpec::new(Mode::Grouped))
        .unwrap()
        .session_id;
    let before = m.record(&id).unwrap();
    assert!(m
        .observe(&id, obs("N123", EvidenceValue::Hard(true)))
        .is_err());
    assert!(m
        .observe(&id, obs("ghost", EvidenceValue::Hard(true)))
        .is_err());
    assert_eq!(m.record(&id).unwrap(), before);
    let reopened = SessionManager::with_store(dir.path()).unwrap();
    assert_eq!(reopened.record(&id).unwrap(), before);
}

#[test]
fn concurrent_requests_on_one_session_serialize() {
    let m = Arc::new(SessionManager::in_memory());
    m.register_network(FIGURE4_JSON.as_bytes()).unwrap();
    let id = m
        .create_session("figure4", StrategySpec::new(Mode::Grouped))
        .unwrap()
        .session_id;
    // Every thread answers whatever is suggested; each leaf must be taken once.
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let m = m.clone();
            let id = id.clone();
            thread::spawn(move || {
                let mut ok = 0;
                for _ in 0..6 {
                    let Ok(Some(node)) = m.suggest(&id, &[]) else {
                        break;
                    };
                    if m.observe(&id, obs(node.as_str(), EvidenceValue::Hard(true)))
                        .is_ok()
                    {
                        ok += 1;
                    }
                }
                ok
            })
        })
        .collect();
    let total: usize = handles.into_iter().map(|h| h.join().unwrap()).sum();
    let record = m.record(&id).unwrap();
    assert_eq!(total, record.state.query_count());
    assert_eq!(record.state.query_count(), 6);
    assert_eq!(
        SessionRecord::replay(record.events.clone()).unwrap(),
        record
    );
}

#[test]
fn sessions_do_not_interfere() {
    let m = Arc::new(SessionManager::in_memory());
    m.register_network(FIGURE4_JSON.as_bytes()).unwrap();
    let ids: Vec<String> = (0..4)
        .map(|_| {
            m.create_session("figure4", StrategySpec::new(Mode::Grouped))
                .unwrap()
                .session_id
        })
        .collect();
    let handles: Vec<_> = ids
        .iter()
        .enumerate()
        .map(|(k, id)| {
            let (m, id) = (m.clone(), id.clone());
            thread::spawn(move || {
                let answer = EvidenceValue::Hard(k % 2 == 0);
                while let Ok(Some(node)) = m.suggest(&id, &[]) {
                    m.observe(&id, obs(node.as_str(), answer)).unwrap();
                }
                m.record(&id).unwrap()
            })
        })
        .collect();
    let records: Vec<SessionRecord> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert_eq!(records[0].state.belief(), records[2].state.belief());
    assert_eq!(records[1].state.belief(), records[3].state.belief());
    assert_ne!(records[0].state.belief(), records[1].state.belief());
}
