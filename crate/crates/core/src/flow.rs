//! Integral maximum flow by shortest augmenting paths.

use std::collections::VecDeque;

#[derive(Clone, Debug)]
struct Edge {
    to: usize,
    cap: u64,
    flow: u64,
}

/// A directed network with integral capacities. Edge ids are returned in
/// insertion order; their reverse residual edges are kept internally.
#[derive(Clone, Debug, Default)]
pub struct FlowNetwork {
    adj: Vec<Vec<usize>>,
    edges: Vec<Edge>,
}

impl FlowNetwork {
    pub fn new(nodes: usize) -> Self {
        FlowNetwork {
            adj: vec![Vec::new(); nodes],
            edges: Vec::new(),
        }
    }

    pub fn add_edge(&mut self, from: usize, to: usize, cap: u64) -> usize {
        let id = self.edges.len();
        self.edges.push(Edge { to, cap, flow: 0 });
        self.edges.push(Edge { to: from, cap: 0, flow: 0 });
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
        id
    }

    pub fn flow(&self, edge: usize) -> u64 {
        self.edges[edge].flow
    }

    fn residual(&self, e: usize) -> u64 {
        let edge = &self.edges[e];
        if e.is_multiple_of(2) {
            edge.cap - edge.flow
        } else {
            self.edges[e - 1].flow
        }
    }

    fn push(&mut self, e: usize, amount: u64) {
        if e.is_multiple_of(2) {
            self.edges[e].flow += amount;
        } else {
            self.edges[e - 1].flow -= amount;
        }
    }

    /// Maximum flow value from `s` to `t`. Deterministic for a fixed edge
    /// insertion order.
    pub fn max_flow(&mut self, s: usize, t: usize) -> u64 {
        let mut total = 0;
        loop {
            let mut via = vec![usize::MAX; self.adj.len()];
            let mut seen = vec![false; self.adj.len()];
            seen[s] = true;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for &e in &self.adj[u] {
                    let v = self.edges[e].to;
                    if !seen[v] && self.residual(e) > 0 {
                        seen[v] = true;
                        via[v] = e;
                        queue.push_back(v);
                    }
                }
            }
            if !seen[t] {
                return total;
            }
            let mut bottleneck = u64::MAX;
            let mut v = t;
            while v != s {
                let e = via[v];
                bottleneck = bottleneck.min(self.residual(e));
                v = self.edges[e ^ 1].to;
            }
            let mut v = t;
            while v != s {
                let e = via[v];
                self.push(e, bottleneck);
                v = self.edges[e ^ 1].to;
            }
            total += bottleneck;
        }
    }
}
