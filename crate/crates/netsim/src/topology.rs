use crate::NetsimError;
use epic_core::node::NodeId;
use epic_core::protocol::AggregationTree;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

/// How readings travel to the gateway.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    /// Every meter's report is relayed unchanged to the gateway, which does
    /// all verification and aggregation.
    #[serde(rename = "etoe")]
    EndToEnd,
    /// Reports are verified and aggregated at every hop of a spanning tree.
    #[serde(rename = "hbyh")]
    HopByHop,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::EndToEnd, Mode::HopByHop];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::EndToEnd => "etoe",
            Mode::HopByHop => "hbyh",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = NetsimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "etoe" => Ok(Mode::EndToEnd),
            "hbyh" => Ok(Mode::HopByHop),
            _ => Err(NetsimError::Config(format!("unknown mode {s:?} (etoe, hbyh)"))),
        }
    }
}

/// Grid position in unit steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Position {
    pub x: i64,
    pub y: i64,
}

impl Position {
    pub fn dist2(self, o: Position) -> i64 {
        (self.x - o.x).pow(2) + (self.y - o.y).pow(2)
    }
}

/// `N` nodes on a square-ish grid: the gateway at the corner (index 0) and
/// meters `1..N` filling rows left to right.
#[derive(Debug, Clone)]
pub struct Topology {
    mode: Mode,
    positions: Vec<Position>,
    neighbors: Vec<Vec<usize>>,
    /// Next hop towards the gateway for every meter.
    next_hop: BTreeMap<NodeId, NodeId>,
    tree: AggregationTree,
    mst_edges: Vec<(usize, usize)>,
}

pub fn node_of(index: usize) -> NodeId {
    if index == 0 {
        NodeId::GATEWAY
    } else {
        NodeId::meter(index as u32)
    }
}

pub fn index_of(id: NodeId) -> usize {
    id.0 as usize
}

pub fn build_topology(n: usize, mode: Mode, range: f64) -> Result<Topology, NetsimError> {
    if n < 2 {
        return Err(NetsimError::Topology(format!("need at least 2 nodes, got {n}")));
    }
    if !(range.is_finite() && range > 0.0) {
        return Err(NetsimError::Topology(format!("radio range must be positive, got {range}")));
    }
    let cols = (n as f64).sqrt().ceil() as usize;
    let positions: Vec<Position> = (0..n)
        .map(|i| Position {
            x: (i % cols) as i64,
            y: (i / cols) as i64,
        })
        .collect();
    let r2 = range * range;
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && positions[i].dist2(positions[j]) as f64 <= r2)
                .collect()
        })
        .collect();

    let bfs_parent = bfs_parents(&neighbors)?;
    let mst_edges = kruskal(&positions, &neighbors);
    let tree_parent = match mode {
        Mode::EndToEnd => None,
        Mode::HopByHop => Some(orient(n, &mst_edges)),
    };
    let next_hop: BTreeMap<NodeId, NodeId> = (1..n)
        .map(|i| {
            let p = tree_parent.as_ref().map_or(bfs_parent[i], |t| t[i]);
            (node_of(i), node_of(p))
        })
        .collect();
    let tree = match mode {
        Mode::EndToEnd => AggregationTree::star(&(1..n).map(node_of).collect::<Vec<_>>()),
        Mode::HopByHop => AggregationTree::from_parents(next_hop.iter().map(|(&c, &p)| (c, p))),
    }
    .map_err(|e| NetsimError::Topology(e.to_string()))?;
    Ok(Topology {
        mode,
        positions,
        neighbors,
        next_hop,
        tree,
        mst_edges,
    })
}

/// Shortest-hop parents towards node 0, lowest index first on ties.
fn bfs_parents(neighbors: &[Vec<usize>]) -> Result<Vec<usize>, NetsimError> {
    let n = neighbors.len();
    let mut parent = vec![usize::MAX; n];
    parent[0] = 0;
    let mut queue = VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        for &v in &neighbors[u] {
            if parent[v] == usize::MAX {
                parent[v] = u;
                queue.push_back(v);
            }
        }
    }
    if let Some(lost) = parent.iter().position(|&p| p == usize::MAX) {
        return Err(NetsimError::Topology(format!(
            "node {} cannot reach the gateway with this radio range",
            node_of(lost)
        )));
    }
    Ok(parent)
}

/// Kruskal over squared Euclidean weights; ties broken by the ordered
/// index pair.
fn kruskal(positions: &[Position], neighbors: &[Vec<usize>]) -> Vec<(usize, usize)> {
    let mut edges: Vec<(i64, usize, usize)> = neighbors
        .iter()
        .enumerate()
        .flat_map(|(i, ns)| ns.iter().filter(move |&&j| i < j).map(move |&j| (i, j)))
        .map(|(i, j)| (positions[i].dist2(positions[j]), i, j))
        .collect();
    edges.sort_unstable();
    let mut uf: Vec<usize> = (0..positions.len()).collect();
    fn find(uf: &mut [usize], mut x: usize) -> usize {
        while uf[x] != x {
            uf[x] = uf[uf[x]];
            x = uf[x];
        }
        x
    }
    let mut out = Vec::with_capacity(positions.len() - 1);
    for (_, i, j) in edges {
        let (a, b) = (find(&mut uf, i), find(&mut uf, j));
        if a != b {
            uf[a] = b;
            out.push((i, j));
        }
    }
    out
}

fn orient(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut parent = vec![usize::MAX; n];
    parent[0] = 0;
    let mut queue = VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if parent[v] == usize::MAX {
                parent[v] = u;
                queue.push_back(v);
            }
        }
    }
    parent
}

impl Topology {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn size(&self) -> usize {
        self.positions.len()
    }

    pub fn meters(&self) -> Vec<NodeId> {
        (1..self.size()).map(node_of).collect()
    }

    pub fn position(&self, id: NodeId) -> Position {
        self.positions[index_of(id)]
    }

    pub fn neighbors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.neighbors[index_of(id)].iter().map(|&j| node_of(j))
    }

    pub fn degree(&self, id: NodeId) -> usize {
        self.neighbors[index_of(id)].len()
    }

    /// Radio next hop towards the gateway.
    pub fn next_hop(&self, id: NodeId) -> Option<NodeId> {
        self.next_hop.get(&id).copied()
    }

    /// Logical aggregation tree: a star for end-to-end, the spanning tree
    /// for hop-by-hop.
    pub fn tree(&self) -> &AggregationTree {
        &self.tree
    }

    /// Minimum spanning tree edges as node index pairs, whatever the mode.
    pub fn mst_edges(&self) -> &[(usize, usize)] {
        &self.mst_edges
    }

    pub fn mst_weight(&self) -> f64 {
        self.mst_edges
            .iter()
            .map(|&(a, b)| (self.positions[a].dist2(self.positions[b]) as f64).sqrt())
            .sum()
    }

    /// Radio hops from `id` to the gateway.
    pub fn hops(&self, id: NodeId) -> usize {
        let mut cur = id;
        let mut h = 0;
        while let Some(p) = self.next_hop(cur) {
            cur = p;
            h += 1;
        }
        h
    }
}
