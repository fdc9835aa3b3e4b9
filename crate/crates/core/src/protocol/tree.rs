use super::ProtocolError;
use crate::node::NodeId;
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::BTreeMap;

/// Aggregation tree rooted at the gateway. Children lists are kept sorted by
/// id, which fixes the canonical hash-list order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregationTree {
    parent: BTreeMap<NodeId, NodeId>,
    children: BTreeMap<NodeId, Vec<NodeId>>,
    depth: BTreeMap<NodeId, usize>,
}

impl AggregationTree {
    /// Builds the tree from `(meter, parent)` links. Every meter must reach
    /// the gateway.
    pub fn from_parents<I: IntoIterator<Item = (NodeId, NodeId)>>(links: I) -> Result<Self, ProtocolError> {
        let mut parent = BTreeMap::new();
        for (child, p) in links {
            if !child.is_meter() {
                return Err(ProtocolError::Topology(format!("{child} cannot have a parent")));
            }
            if p == NodeId::UTILITY || p == child {
                return Err(ProtocolError::Topology(format!("invalid parent {p} for {child}")));
            }
            if parent.insert(child, p).is_some() {
                return Err(ProtocolError::Topology(format!("{child} has two parents")));
            }
        }
        let mut children: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        children.insert(NodeId::GATEWAY, Vec::new());
        for (&c, &p) in &parent {
            if p != NodeId::GATEWAY && !parent.contains_key(&p) {
                return Err(ProtocolError::Topology(format!("parent {p} of {c} is not in the tree")));
            }
            children.entry(p).or_default().push(c);
            children.entry(c).or_default();
        }
        let mut depth = BTreeMap::new();
        depth.insert(NodeId::GATEWAY, 0);
        let mut stack = vec![NodeId::GATEWAY];
        while let Some(n) = stack.pop() {
            let d = depth[&n];
            for &c in &children[&n] {
                depth.insert(c, d + 1);
                stack.push(c);
            }
        }
        if depth.len() != parent.len() + 1 {
            return Err(ProtocolError::Topology("links contain a cycle".into()));
        }
        Ok(AggregationTree {
            parent,
            children,
            depth,
        })
    }

    /// Every meter reports directly to the gateway.
    pub fn star(meters: &[NodeId]) -> Result<Self, ProtocolError> {
        Self::from_parents(meters.iter().map(|&m| (m, NodeId::GATEWAY)))
    }

    pub fn meter_count(&self) -> usize {
        self.parent.len()
    }

    pub fn meters(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.parent.keys().copied()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.depth.contains_key(&id)
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.parent.get(&id).copied()
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        self.children.get(&id).map_or(&[], |c| c.as_slice())
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        self.children(id).is_empty()
    }

    pub fn depth(&self, id: NodeId) -> Option<usize> {
        self.depth.get(&id).copied()
    }

    pub fn height(&self) -> usize {
        self.depth.values().copied().max().unwrap_or(0)
    }

    /// Children before parents, ending at the gateway.
    pub fn post_order(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.depth.len());
        let mut stack = vec![(NodeId::GATEWAY, false)];
        while let Some((n, expanded)) = stack.pop() {
            if expanded {
                out.push(n);
            } else {
                stack.push((n, true));
                for &c in self.children(n).iter().rev() {
                    stack.push((c, false));
                }
            }
        }
        out
    }

    /// Meters whose hashes appear in `node`'s report: the node itself first,
    /// then each child's enumeration in id order.
    pub fn enumeration(&self, node: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        self.enumerate_into(node, &mut out);
        out
    }

    fn enumerate_into(&self, node: NodeId, out: &mut Vec<NodeId>) {
        if node.is_meter() {
            out.push(node);
        }
        for &c in self.children(node) {
            self.enumerate_into(c, out);
        }
    }

    pub fn subtree_size(&self, node: NodeId) -> usize {
        self.enumeration(node).len()
    }

    /// Nodes with children ordered deepest first, ties by id; the gateway
    /// comes last.
    pub fn non_leaf_bottom_up(&self) -> Vec<NodeId> {
        let mut v: Vec<NodeId> = self
            .children
            .iter()
            .filter(|(_, c)| !c.is_empty())
            .map(|(&n, _)| n)
            .collect();
        v.sort_by_key(|n| (std::cmp::Reverse(self.depth[n]), *n));
        v
    }

    /// Random recursive tree over `meters`: in a shuffled order, each meter
    /// attaches to the gateway or a uniformly chosen earlier meter.
    pub fn random<R: Rng + ?Sized>(meters: &[NodeId], rng: &mut R) -> Self {
        let mut order = meters.to_vec();
        order.shuffle(rng);
        let links: Vec<(NodeId, NodeId)> = order
            .iter()
            .enumerate()
            .map(|(i, &m)| {
                let k = rng.gen_range(0..=i);
                (m, if k == 0 { NodeId::GATEWAY } else { order[k - 1] })
            })
            .collect();
        Self::from_parents(links).expect("attachments point backwards")
    }

    /// Every unlabelled rooted tree with `meters` meters below the gateway,
    /// meters numbered in preorder.
    pub fn all_shapes(meters: usize) -> Vec<Self> {
        let n = meters + 1;
        let mut out = Vec::new();
        // Canonical level sequences in reverse lexicographic order, root at level 1.
        let mut level: Vec<usize> = (1..=n).collect();
        loop {
            out.push(Self::from_levels(&level));
            let Some(p) = (1..n).rev().find(|&i| level[i] != 2) else {
                break;
            };
            let q = (0..p).rev().find(|&i| level[i] == level[p] - 1).expect("parent level exists");
            for i in p..n {
                level[i] = level[i - (p - q)];
            }
        }
        out
    }

    fn from_levels(level: &[usize]) -> Self {
        let mut stack: Vec<NodeId> = vec![NodeId::GATEWAY];
        let mut links = Vec::with_capacity(level.len() - 1);
        for (i, &l) in level.iter().enumerate().skip(1) {
            stack.truncate(l - 1);
            let id = NodeId::meter(i as u32);
            links.push((id, *stack.last().expect("root stays on the stack")));
            stack.push(id);
        }
        Self::from_parents(links).expect("level sequence is a tree")
    }

    /// Path from `node` up to and including the gateway.
    pub fn path_to_gateway(&self, node: NodeId) -> Vec<NodeId> {
        let mut path = vec![node];
        let mut cur = node;
        while let Some(p) = self.parent(cur) {
            path.push(p);
            cur = p;
        }
        path
    }
}
