//! Reference networks and random generators used by tests, benchmarks and
//! the guide.

use rand::Rng;

use crate::model::{
    load_network, Evidence, EvidenceValue, LinkCpt, LinkSpec, Network, NetworkSpec, NodeKind,
    NodeSpec,
};

/// The three-level reference network: root `N1`, intermediates `N11` and
/// `N12`, three indicators under each.
pub const FIGURE4_JSON: &str = include_str!("../fixtures/figure4.json");

pub fn figure4() -> Network {
    load_network(FIGURE4_JSON.as_bytes()).expect("bundled fixture is valid")
}

fn node(id: String, kind: NodeKind) -> NodeSpec {
    NodeSpec {
        label: id.clone(),
        id: id.into(),
        kind,
        target: kind == NodeKind::Root,
        observation_cost: 1.0,
    }
}

/// A single path `X0 -> X1 -> ... -> Xk` with the given link tables.
pub fn chain(cpts: &[LinkCpt]) -> Network {
    let ids: Vec<String> = (0..=cpts.len()).map(|i| format!("X{i}")).collect();
    let nodes = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let kind = if i == 0 {
                NodeKind::Root
            } else if i == cpts.len() {
                NodeKind::Observable
            } else {
                NodeKind::Intermediate
            };
            node(id.clone(), kind)
        })
        .collect();
    let links = cpts
        .iter()
        .enumerate()
        .map(|(i, &cpt)| LinkSpec {
            parent: ids[i].clone().into(),
            child: ids[i + 1].clone().into(),
            cpt,
        })
        .collect();
    Network::new(NetworkSpec {
        name: "chain".into(),
        root_prior: 0.5,
        nodes,
        links,
        thresholds: Default::default(),
    })
    .expect("chain is a valid tree")
}

/// A random valid tree with between 2 and `max_nodes` nodes and uniform
/// random link tables. Each new node picks a uniformly random earlier node
/// as its parent.
pub fn random_tree<R: Rng + ?Sized>(rng: &mut R, max_nodes: usize) -> Network {
    let n = rng.random_range(2..=max_nodes.max(2));
    let parents: Vec<usize> = (1..n).map(|i| rng.random_range(0..i)).collect();
    let mut has_child = vec![false; n];
    for &p in &parents {
        has_child[p] = true;
    }
    let nodes = (0..n)
        .map(|i| {
            let kind = match (i, has_child[i]) {
                (0, _) => NodeKind::Root,
                (_, true) => NodeKind::Intermediate,
                (_, false) => NodeKind::Observable,
            };
            node(format!("V{i}"), kind)
        })
        .collect();
    let links = parents
        .iter()
        .enumerate()
        .map(|(k, &p)| LinkSpec {
            parent: format!("V{p}").into(),
            child: format!("V{}", k + 1).into(),
            cpt: LinkCpt::new(rng.random(), rng.random()),
        })
        .collect();
    Network::new(NetworkSpec {
        name: "random".into(),
        root_prior: rng.random(),
        nodes,
        links,
        thresholds: Default::default(),
    })
    .expect("generated tree is valid")
}

/// Random evidence: each node is observed with probability `rate`; leaves
/// get soft readings half of the time.
pub fn random_evidence<R: Rng + ?Sized>(rng: &mut R, net: &Network, rate: f64) -> Evidence {
    let mut e = Evidence::new();
    for i in 0..net.len() {
        if !rng.random_bool(rate) {
            continue;
        }
        let value = if net.is_leaf(i) && rng.random_bool(0.5) {
            EvidenceValue::Soft(rng.random_range(0.01..0.99))
        } else {
            EvidenceValue::Hard(rng.random_bool(0.5))
        };
        e.insert(net.id(i).clone(), value).expect("valid reading");
    }
    e
}
