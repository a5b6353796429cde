use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use infernet::{load_network, LoadError, Network, NetworkSpec, NodeId, StrategySpec};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;
use crate::session::{Observation, SessionEvent, SessionRecord, SessionView, WhatIf};

/// Summary entry returned by [`SessionManager::list_networks`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkInfo {
    pub name: String,
    pub nodes: usize,
    pub leaves: usize,
    pub max_depth: usize,
}

impl NetworkInfo {
    fn of(net: &Network) -> Self {
        NetworkInfo {
            name: net.name().to_owned(),
            nodes: net.len(),
            leaves: net.leaves().count(),
            max_depth: net.max_depth(),
        }
    }
}

/// On-disk layout: `networks/<name>.json` and `sessions/<id>.jsonl`,
/// one event per line.
#[derive(Debug, Clone)]
struct Store {
    root: PathBuf,
}

impl Store {
    fn open(root: &Path) -> Result<Self, ServiceError> {
        fs::create_dir_all(root.join("networks"))?;
        fs::create_dir_all(root.join("sessions"))?;
        Ok(Store {
            root: root.to_path_buf(),
        })
    }

    fn network_path(&self, name: &str) -> PathBuf {
        self.root.join("networks").join(format!("{name}.json"))
    }

    fn session_path(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(format!("{id}.jsonl"))
    }

    fn save_network(&self, spec: &NetworkSpec) -> Result<(), ServiceError> {
        let path = self.network_path(&spec.name);
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, spec.to_json_pretty())?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    fn append(&self, id: &str, events: &[SessionEvent]) -> Result<(), ServiceError> {
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.session_path(id))?;
        let mut buf = Vec::new();
        for e in events {
            serde_json::to_writer(&mut buf, e).map_err(|e| ServiceError::Store(e.to_string()))?;
            buf.push(b'\n');
        }
        file.write_all(&buf)?;
        file.sync_data()?;
        Ok(())
    }

    fn load_networks(&self) -> Result<Vec<Network>, ServiceError> {
        let mut out = Vec::new();
        for path in sorted_entries(&self.root.join("networks"), "json")? {
            let bytes = fs::read(&path)?;
            let net = load_network(&bytes)
                .map_err(|e| ServiceError::Store(format!("{}: {e}", path.display())))?;
            out.push(net);
        }
        Ok(out)
    }

    fn load_sessions(&self) -> Result<Vec<SessionRecord>, ServiceError> {
        let mut out = Vec::new();
        for path in sorted_entries(&self.root.join("sessions"), "jsonl")? {
            let mut events = Vec::new();
            for (n, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let event = serde_json::from_str(&line).map_err(|e| {
                    ServiceError::Store(format!("{}:{}: {e}", path.display(), n + 1))
                })?;
                events.push(event);
            }
            let record = SessionRecord::replay(events)
                .map_err(|e| ServiceError::Store(format!("{}: {e}", path.display())))?;
            out.push(record);
        }
        Ok(out)
    }
}

fn sorted_entries(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, ServiceError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == ext))
        .collect();
    paths.sort();
    Ok(paths)
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= 128
        && !name.starts_with('.')
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

fn new_session_id() -> String {
    let bits: u128 = rand::rng().random();
    format!("{bits:032x}")
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Owns the network registry and the session table.
///
/// Each session sits behind its own mutex, so requests on one session run
/// one at a time while different sessions proceed in parallel.
#[derive(Debug, Default)]
pub struct SessionManager {
    networks: RwLock<BTreeMap<String, Arc<Network>>>,
    sessions: RwLock<HashMap<String, Arc<Mutex<SessionRecord>>>>,
    store: Option<Store>,
}

impl SessionManager {
    /// A manager that keeps everything in memory.
    pub fn in_memory() -> Self {
        SessionManager::default()
    }

    /// Opens (or creates) a store directory and replays every session in it.
    pub fn with_store(dir: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let store = Store::open(dir.as_ref())?;
        let mut networks = BTreeMap::new();
        for net in store.load_networks()? {
            networks.insert(net.name().to_owned(), Arc::new(net));
        }
        let mut sessions = HashMap::new();
        for record in store.load_sessions()? {
            sessions.insert(record.session_id.clone(), Arc::new(Mutex::new(record)));
        }
        Ok(SessionManager {
            networks: RwLock::new(networks),
            sessions: RwLock::new(sessions),
            store: Some(store),
        })
    }

    /// Registers (or replaces) a network from the bytes of a network file.
    pub fn register_network(&self, bytes: &[u8]) -> Result<NetworkInfo, ServiceError> {
        let net = load_network(bytes).map_err(|e| match e {
            LoadError::Syntax { .. } => ServiceError::BadRequest(e.to_string()),
            LoadError::Invalid(_) => ServiceError::Invalid(e.to_string()),
        })?;
        self.register(net)
    }

    pub fn register(&self, net: Network) -> Result<NetworkInfo, ServiceError> {
        if !valid_name(net.name()) {
            return Err(ServiceError::Invalid(format!(
                "network name {:?} must use letters, digits, '_', '-' or '.'",
                net.name()
            )));
        }
        if let Some(store) = &self.store {
            store.save_network(net.spec())?;
        }
        let info = NetworkInfo::of(&net);
        self.networks
            .write()
            .unwrap()
            .insert(net.name().to_owned(), Arc::new(net));
        Ok(info)
    }

    pub fn list_networks(&self) -> Vec<NetworkInfo> {
        self.networks
            .read()
            .unwrap()
            .values()
            .map(|n| NetworkInfo::of(n))
            .collect()
    }

    pub fn network(&self, name: &str) -> Result<Arc<Network>, ServiceError> {
        self.networks
            .read()
            .unwrap()
            .get(name)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("unknown network {name}")))
    }

    pub fn create_session(
        &self,
        network: &str,
        strategy: StrategySpec,
    ) -> Result<SessionView, ServiceError> {
        let net = self.network(network)?;
        let record = SessionRecord::create(new_session_id(), now(), net, strategy)?;
        if let Some(store) = &self.store {
            store.append(&record.session_id, &record.events)?;
        }
        let view = record.view();
        self.sessions
            .write()
            .unwrap()
            .insert(record.session_id.clone(), Arc::new(Mutex::new(record)));
        Ok(view)
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<SessionRecord>>, ServiceError> {
        self.sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("unknown session {id}")))
    }

    pub fn observe(&self, id: &str, obs: Observation) -> Result<SessionView, ServiceError> {
        let session = self.session(id)?;
        let mut record = session.lock().unwrap();
        let mut next = record.clone();
        let events = next.observe(obs)?.to_vec();
        if let Some(store) = &self.store {
            store.append(id, &events)?;
        }
        *record = next;
        Ok(record.view())
    }

    /// Next leaf the strategy would ask for, with `excluded` set aside.
    pub fn suggest(&self, id: &str, excluded: &[NodeId]) -> Result<Option<NodeId>, ServiceError> {
        let session = self.session(id)?;
        let record = session.lock().unwrap();
        if record.is_closed() {
            return Err(ServiceError::SessionClosed);
        }
        Ok(record.state.select_next_excluding(excluded)?)
    }

    pub fn whatif(&self, id: &str, node: &NodeId) -> Result<WhatIf, ServiceError> {
        let session = self.session(id)?;
        let record = session.lock().unwrap();
        WhatIf::of(&record.state, node)
    }

    pub fn get_state(&self, id: &str) -> Result<SessionView, ServiceError> {
        Ok(self.session(id)?.lock().unwrap().view())
    }

    pub fn record(&self, id: &str) -> Result<SessionRecord, ServiceError> {
        Ok(self.session(id)?.lock().unwrap().clone())
    }

    /// Closes the session and returns its final record.
    pub fn close(&self, id: &str) -> Result<SessionRecord, ServiceError> {
        let session = self.session(id)?;
        let mut record = session.lock().unwrap();
        let mut next = record.clone();
        let event = next.close(now())?.clone();
        if let Some(store) = &self.store {
            store.append(id, std::slice::from_ref(&event))?;
        }
        *record = next;
        Ok(record.clone())
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().unwrap().keys().cloned().collect();
        ids.sort();
        ids
    }
}
