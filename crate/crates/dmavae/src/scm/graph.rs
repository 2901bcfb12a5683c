//! Causal graph templates and d-separation / back-door checking.
//!
//! Graphs here are tiny (at most eight nodes), so path blocking is decided by
//! exhaustive enumeration of simple paths rather than a reachability scheme.

use std::collections::HashSet;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CausalGraph {
    names: Vec<String>,
    latent: Vec<bool>,
    /// directed edges parent -> child
    edges: HashSet<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl CausalGraph {
    pub fn new(nodes: &[(&str, bool)], edges: &[(&str, &str)]) -> Result<Self> {
        let names: Vec<String> = nodes.iter().map(|(n, _)| n.to_string()).collect();
        let latent: Vec<bool> = nodes.iter().map(|(_, l)| *l).collect();
        let index = |name: &str| -> Result<usize> {
            names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Argument(format!("unknown node {name}")))
        };
        let mut edge_set = HashSet::new();
        let mut adjacency = vec![Vec::new(); names.len()];
        for (a, b) in edges {
            let (u, v) = (index(a)?, index(b)?);
            if edge_set.insert((u, v)) {
                adjacency[u].push(v);
                adjacency[v].push(u);
            }
        }
        let g = CausalGraph {
            names,
            latent,
            edges: edge_set,
            adjacency,
        };
        if g.has_cycle() {
            return Err(Error::Argument("graph contains a directed cycle".into()));
        }
        Ok(g)
    }

    pub fn node(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Argument(format!("unknown node {name}")))
    }

    pub fn node_names(&self) -> &[String] {
        &self.names
    }

    pub fn is_latent(&self, idx: usize) -> bool {
        self.latent[idx]
    }

    pub fn has_edge(&self, parent: &str, child: &str) -> bool {
        match (self.node(parent), self.node(child)) {
            (Ok(u), Ok(v)) => self.edges.contains(&(u, v)),
            _ => false,
        }
    }

    fn has_cycle(&self) -> bool {
        // Kahn's algorithm
        let n = self.names.len();
        let mut indeg = vec![0usize; n];
        for &(_, v) in &self.edges {
            indeg[v] += 1;
        }
        let mut queue: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut seen = 0;
        while let Some(u) = queue.pop() {
            seen += 1;
            for &(a, b) in &self.edges {
                if a == u {
                    indeg[b] -= 1;
                    if indeg[b] == 0 {
                        queue.push(b);
                    }
                }
            }
        }
        seen != n
    }

    /// Nodes in `set` together with all their ancestors.
    fn ancestral_closure(&self, set: &HashSet<usize>) -> HashSet<usize> {
        let mut closed = set.clone();
        let mut frontier: Vec<usize> = set.iter().copied().collect();
        while let Some(v) = frontier.pop() {
            for &(a, b) in &self.edges {
                if b == v && closed.insert(a) {
                    frontier.push(a);
                }
            }
        }
        closed
    }

    /// All simple undirected paths between two nodes.
    fn simple_paths(&self, from: usize, to: usize) -> Vec<Vec<usize>> {
        let mut paths = Vec::new();
        let mut stack = vec![from];
        let mut on_path = vec![false; self.names.len()];
        on_path[from] = true;
        self.dfs_paths(to, &mut stack, &mut on_path, &mut paths);
        paths
    }

    fn dfs_paths(
        &self,
        to: usize,
        stack: &mut Vec<usize>,
        on_path: &mut [bool],
        out: &mut Vec<Vec<usize>>,
    ) {
        let cur = *stack.last().unwrap();
        if cur == to {
            out.push(stack.clone());
            return;
        }
        for &next in &self.adjacency[cur] {
            if !on_path[next] {
                on_path[next] = true;
                stack.push(next);
                self.dfs_paths(to, stack, on_path, out);
                stack.pop();
                on_path[next] = false;
            }
        }
    }

    /// A path is blocked iff it contains a node held `fixed`, a non-collider
    /// in `observed`, or a collider that is neither in `observed` nor an
    /// ancestor of an observed node. `fixed` nodes are intervened on: they
    /// sever every path through them and never open a collider.
    fn path_blocked(
        &self,
        path: &[usize],
        fixed: &HashSet<usize>,
        observed: &HashSet<usize>,
    ) -> bool {
        let opening = self.ancestral_closure(observed);
        for w in path.windows(3) {
            let (prev, mid, next) = (w[0], w[1], w[2]);
            if fixed.contains(&mid) {
                return true;
            }
            let collider = self.edges.contains(&(prev, mid)) && self.edges.contains(&(next, mid));
            if collider {
                if !opening.contains(&mid) {
                    return true;
                }
            } else if observed.contains(&mid) {
                return true;
            }
        }
        false
    }

    /// Standard d-separation: every path between `a` and `b` is blocked
    /// given `conditioned`.
    pub fn d_separated(&self, a: &str, b: &str, conditioned: &[&str]) -> Result<bool> {
        let (u, v) = (self.node(a)?, self.node(b)?);
        let z: HashSet<usize> = conditioned
            .iter()
            .map(|n| self.node(n))
            .collect::<Result<_>>()?;
        let empty = HashSet::new();
        Ok(self
            .simple_paths(u, v)
            .iter()
            .all(|p| self.path_blocked(p, &empty, &z)))
    }

    /// True iff every back-door path from any exposure node to `outcome` is
    /// blocked. A back-door path starts with an arrow into its exposure node.
    /// `conditioned` nodes are held constant by intervention (they sever any
    /// path through them, as do other exposure nodes); `adjusted` nodes are
    /// observed, so they block non-colliders and open colliders.
    pub fn verify_adjustment(
        &self,
        exposures: &[&str],
        outcome: &str,
        conditioned: &[&str],
        adjusted: &[&str],
    ) -> Result<bool> {
        let exp_idx: Vec<usize> = exposures
            .iter()
            .map(|n| self.node(n))
            .collect::<Result<_>>()?;
        let out_idx = self.node(outcome)?;
        let mut fixed: HashSet<usize> = exp_idx.iter().copied().collect();
        for n in conditioned {
            fixed.insert(self.node(n)?);
        }
        let observed: HashSet<usize> = adjusted
            .iter()
            .map(|n| self.node(n))
            .collect::<Result<_>>()?;
        for &e in &exp_idx {
            for path in self.simple_paths(e, out_idx) {
                // back-door paths only: first edge points into the exposure
                if !self.edges.contains(&(path[1], path[0])) {
                    continue;
                }
                let fixed_here: HashSet<usize> =
                    fixed.iter().copied().filter(|&v| v != e).collect();
                if !self.path_blocked(&path, &fixed_here, &observed) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

/// The seven-node graph with all three pairwise latent-confounder types
/// (Z_TM, Z_TY, Z_MY), their proxy X, and the T -> M -> Y mediation spine.
pub fn figure2_graph() -> CausalGraph {
    graph_with_blocks(true, true, true, false)
}

/// Single latent block feeding T, M and Y simultaneously.
pub fn fig1b_graph() -> CausalGraph {
    graph_with_blocks(false, false, false, true)
}

pub fn graph_with_blocks(tm: bool, ty: bool, my: bool, shared: bool) -> CausalGraph {
    let mut nodes: Vec<(&str, bool)> = vec![("T", false), ("M", false), ("Y", false), ("X", false)];
    let mut edges: Vec<(&str, &str)> = vec![("T", "M"), ("T", "Y"), ("M", "Y")];
    if tm {
        nodes.push(("Z_TM", true));
        edges.extend([("Z_TM", "T"), ("Z_TM", "M"), ("Z_TM", "X")]);
    }
    if ty {
        nodes.push(("Z_TY", true));
        edges.extend([("Z_TY", "T"), ("Z_TY", "Y"), ("Z_TY", "X")]);
    }
    if my {
        nodes.push(("Z_MY", true));
        edges.extend([("Z_MY", "M"), ("Z_MY", "Y"), ("Z_MY", "X")]);
    }
    if shared {
        nodes.push(("Z", true));
        edges.extend([("Z", "T"), ("Z", "M"), ("Z", "Y"), ("Z", "X")]);
    }
    CausalGraph::new(&nodes, &edges).expect("template graph is well-formed")
}
