//! Bayesian Strategy Networks: DAGs of tactic nodes whose chain-rule
//! factorization defines the joint policy. Immutable after validation, so a
//! graph can be shared freely.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const GRAPH_SCHEMA_VERSION: u32 = 1;

/// One tactic: a named slice of the joint action vector plus the tactics it
/// conditions on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TacticNode {
    pub id: String,
    pub action_dims: usize,
    #[serde(default)]
    pub parents: Vec<String>,
}

impl TacticNode {
    pub fn new(id: &str, action_dims: usize, parents: &[&str]) -> Self {
        TacticNode {
            id: id.to_string(),
            action_dims,
            parents: parents.iter().map(|p| p.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphError {
    DuplicateId(String),
    DanglingParent { node: String, parent: String },
    SelfParent(String),
    ZeroActionDims(String),
    Cycle(Vec<String>),
    UnknownNode(String),
    MissingParentSample { node: String, parent: String },
    Empty,
    Schema(String),
}

impl fmt::Display for GraphError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphError::DuplicateId(id) => write!(f, "duplicate node id '{id}'"),
            GraphError::DanglingParent { node, parent } => {
                write!(f, "node '{node}' references unknown parent '{parent}'")
            }
            GraphError::SelfParent(id) => write!(f, "node '{id}' lists itself as a parent"),
            GraphError::ZeroActionDims(id) => write!(f, "node '{id}' has zero action dims"),
            GraphError::Cycle(ids) => write!(f, "cycle: {}", ids.join(" -> ")),
            GraphError::UnknownNode(id) => write!(f, "unknown node '{id}'"),
            GraphError::MissingParentSample { node, parent } => {
                write!(f, "node '{node}' needs parent '{parent}' sampled first")
            }
            GraphError::Empty => write!(f, "graph has no nodes"),
            GraphError::Schema(detail) => write!(f, "graph file: {detail}"),
        }
    }
}

impl std::error::Error for GraphError {}

/// Validated DAG of tactics with a fixed execution plan.
///
/// The topological order is unique under the declared tie-break
/// (lexicographic id among ready nodes) and also fixes the global action
/// layout: node `order[i]`'s action slice sits at `slice_ranges()[i]`.
#[derive(Debug, Clone)]
pub struct StrategyGraph {
    nodes: Vec<TacticNode>,
    index: HashMap<String, usize>,
    order: Vec<usize>,
    slices: Vec<std::ops::Range<usize>>,
    total_action_dim: usize,
}

impl StrategyGraph {
    /// Validate and build the execution plan.
    pub fn new(nodes: Vec<TacticNode>) -> Result<Self, GraphError> {
        validate_nodes(&nodes)?;
        let index: HashMap<String, usize> =
            nodes.iter().enumerate().map(|(i, n)| (n.id.clone(), i)).collect();
        let order = topo_order(&nodes, &index)?;
        let mut slices = Vec::with_capacity(order.len());
        let mut offset = 0;
        for &ni in &order {
            let w = nodes[ni].action_dims;
            slices.push(offset..offset + w);
            offset += w;
        }
        Ok(StrategyGraph { nodes, index, order, slices, total_action_dim: offset })
    }

    /// Single-node graph: the BSN degenerate case equal to a monolithic policy.
    pub fn single(id: &str, action_dims: usize) -> Self {
        StrategyGraph::new(vec![TacticNode::new(id, action_dims, &[])])
            .expect("single-node graph is always valid")
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn total_action_dim(&self) -> usize {
        self.total_action_dim
    }

    pub fn node(&self, id: &str) -> Result<&TacticNode, GraphError> {
        self.index
            .get(id)
            .map(|&i| &self.nodes[i])
            .ok_or_else(|| GraphError::UnknownNode(id.to_string()))
    }

    /// Node ids in execution order.
    pub fn topological_order(&self) -> Vec<&str> {
        self.order.iter().map(|&i| self.nodes[i].id.as_str()).collect()
    }

    /// Action-vector range of each node, aligned with `topological_order`.
    pub fn slice_ranges(&self) -> &[std::ops::Range<usize>] {
        &self.slices
    }

    /// Range for one node id.
    pub fn slice_of(&self, id: &str) -> Result<std::ops::Range<usize>, GraphError> {
        let ni = *self.index.get(id).ok_or_else(|| GraphError::UnknownNode(id.to_string()))?;
        let pos = self.order.iter().position(|&o| o == ni).unwrap();
        Ok(self.slices[pos].clone())
    }

    /// Width of a node's conditioning input: observation plus parent slices.
    pub fn conditioning_width(&self, id: &str, obs_dim: usize) -> Result<usize, GraphError> {
        let node = self.node(id)?;
        let parents: usize =
            node.parents.iter().map(|p| self.node(p).map(|n| n.action_dims)).sum::<Result<_, _>>()?;
        Ok(obs_dim + parents)
    }

    /// State concatenated with parent action slices in declared parent order.
    pub fn conditioning_input(
        &self,
        id: &str,
        state: &[f64],
        sampled: &HashMap<String, Vec<f64>>,
    ) -> Result<Vec<f64>, GraphError> {
        let node = self.node(id)?;
        let mut out = state.to_vec();
        for parent in &node.parents {
            let slice = sampled.get(parent).ok_or_else(|| GraphError::MissingParentSample {
                node: id.to_string(),
                parent: parent.clone(),
            })?;
            out.extend_from_slice(slice);
        }
        Ok(out)
    }
}

/// Standalone validation of a would-be graph, per the published contract.
pub fn validate(nodes: &[TacticNode]) -> Result<(), GraphError> {
    validate_nodes(nodes)?;
    let index: HashMap<String, usize> =
        nodes.iter().enumerate().map(|(i, n)| (n.id.clone(), i)).collect();
    topo_order(nodes, &index).map(|_| ())
}

fn validate_nodes(nodes: &[TacticNode]) -> Result<(), GraphError> {
    if nodes.is_empty() {
        return Err(GraphError::Empty);
    }
    let mut seen = HashMap::new();
    for n in nodes {
        if seen.insert(n.id.clone(), ()).is_some() {
            return Err(GraphError::DuplicateId(n.id.clone()));
        }
        if n.action_dims == 0 {
            return Err(GraphError::ZeroActionDims(n.id.clone()));
        }
    }
    for n in nodes {
        for p in &n.parents {
            if p == &n.id {
                return Err(GraphError::SelfParent(n.id.clone()));
            }
            if !seen.contains_key(p) {
                return Err(GraphError::DanglingParent { node: n.id.clone(), parent: p.clone() });
            }
        }
    }
    Ok(())
}

/// Kahn's algorithm, breaking ties lexicographically by id so the order is
/// unique and deterministic. On failure, names a concrete cycle.
fn topo_order(
    nodes: &[TacticNode],
    index: &HashMap<String, usize>,
) -> Result<Vec<usize>, GraphError> {
    let n = nodes.len();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut in_deg = vec![0usize; n];
    for (i, node) in nodes.iter().enumerate() {
        for p in &node.parents {
            children[index[p]].push(i);
            in_deg[i] += 1;
        }
    }
    let mut ready: std::collections::BTreeSet<(&str, usize)> = in_deg
        .iter()
        .enumerate()
        .filter(|(_, &d)| d == 0)
        .map(|(i, _)| (nodes[i].id.as_str(), i))
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(&(id, i)) = ready.iter().next() {
        ready.remove(&(id, i));
        order.push(i);
        for &c in &children[i] {
            in_deg[c] -= 1;
            if in_deg[c] == 0 {
                ready.insert((nodes[c].id.as_str(), c));
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    Err(GraphError::Cycle(find_cycle(nodes, index, &in_deg)))
}

/// Walk parent links among the unresolved nodes until one repeats.
fn find_cycle(
    nodes: &[TacticNode],
    index: &HashMap<String, usize>,
    in_deg: &[usize],
) -> Vec<String> {
    let start = in_deg.iter().position(|&d| d > 0).expect("cycle exists");
    let mut seen_at: HashMap<usize, usize> = HashMap::new();
    let mut path = Vec::new();
    let mut cur = start;
    loop {
        if let Some(&pos) = seen_at.get(&cur) {
            let mut cycle: Vec<String> =
                path[pos..].iter().map(|&i: &usize| nodes[i].id.clone()).collect();
            cycle.push(nodes[cur].id.clone());
            return cycle;
        }
        seen_at.insert(cur, path.len());
        path.push(cur);
        // follow any parent that is itself unresolved
        cur = nodes[cur]
            .parents
            .iter()
            .map(|p| index[p])
            .find(|&pi| in_deg[pi] > 0)
            .expect("unresolved node has an unresolved parent");
    }
}

// ---- graph definition file ----

#[derive(Debug, Serialize, Deserialize)]
struct GraphFile {
    version: u32,
    nodes: Vec<TacticNode>,
}

pub fn to_json(graph: &StrategyGraph) -> serde_json::Value {
    serde_json::json!({
        "version": GRAPH_SCHEMA_VERSION,
        "nodes": graph.nodes,
    })
}

pub fn from_json(value: &serde_json::Value) -> Result<StrategyGraph, GraphError> {
    let file: GraphFile = serde_json::from_value(value.clone())
        .map_err(|e| GraphError::Schema(e.to_string()))?;
    if file.version != GRAPH_SCHEMA_VERSION {
        return Err(GraphError::Schema(format!("unsupported version {}", file.version)));
    }
    StrategyGraph::new(file.nodes)
}

pub fn load_file(path: &Path) -> Result<StrategyGraph, GraphError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| GraphError::Schema(format!("read {}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| GraphError::Schema(e.to_string()))?;
    from_json(&value)
}

/// Named graph shapes used across tests and shipped configs. The 3P/5P
/// shapes are representative decompositions, not reconstructions of any
/// particular robot's joint map.
pub mod fixtures {
    use super::{StrategyGraph, TacticNode};

    /// 3-node chain of 1-D tactics.
    pub fn hopper_3p() -> StrategyGraph {
        StrategyGraph::new(vec![
            TacticNode::new("t1_hip", 1, &[]),
            TacticNode::new("t2_knee", 1, &["t1_hip"]),
            TacticNode::new("t3_ankle", 1, &["t2_knee"]),
        ])
        .unwrap()
    }

    /// 5-node tree: torso root fanning out to two 1-D legs of depth two.
    pub fn walker_5p() -> StrategyGraph {
        StrategyGraph::new(vec![
            TacticNode::new("t1_torso", 2, &[]),
            TacticNode::new("t2_left_hip", 1, &["t1_torso"]),
            TacticNode::new("t3_left_knee", 1, &["t2_left_hip"]),
            TacticNode::new("t4_right_hip", 1, &["t1_torso"]),
            TacticNode::new("t5_right_knee", 1, &["t4_right_hip"]),
        ])
        .unwrap()
    }

    /// 5-node tree with an abdomen root conditioning arms and legs.
    pub fn humanoid_5p() -> StrategyGraph {
        StrategyGraph::new(vec![
            TacticNode::new("t1_abdomen", 3, &[]),
            TacticNode::new("t2_left_leg", 2, &["t1_abdomen"]),
            TacticNode::new("t3_right_leg", 2, &["t1_abdomen"]),
            TacticNode::new("t4_left_arm", 2, &["t1_abdomen"]),
            TacticNode::new("t5_right_arm", 2, &["t1_abdomen"]),
        ])
        .unwrap()
    }

    /// a -> {b, c} -> d with 1-D tactics; the standard test diamond.
    pub fn diamond() -> StrategyGraph {
        StrategyGraph::new(vec![
            TacticNode::new("a", 1, &[]),
            TacticNode::new("b", 1, &["a"]),
            TacticNode::new("c", 1, &["a"]),
            TacticNode::new("d", 1, &["b", "c"]),
        ])
        .unwrap()
    }

    /// Shoulder-conditions-elbow chain matching the two-joint reacher.
    pub fn reacher_chain() -> StrategyGraph {
        StrategyGraph::new(vec![
            TacticNode::new("shoulder", 1, &[]),
            TacticNode::new("elbow", 1, &["shoulder"]),
        ])
        .unwrap()
    }
}
