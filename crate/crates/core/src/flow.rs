//! Min-cost max-flow by successive shortest augmenting paths.
//!
//! Reduced costs under Johnson potentials keep every residual arc
//! non-negative, so each augmenting path is found with Dijkstra. Initial
//! potentials come from Bellman-Ford when the graph has negative arcs.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

pub type EdgeId = usize;

const INF: i64 = i64::MAX / 4;

#[derive(Debug, Clone)]
struct Arc {
    to: usize,
    cap: i64,
    cost: i64,
}

#[derive(Debug, Clone, Default)]
pub struct MinCostFlow {
    arcs: Vec<Arc>,
    adjacency: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowResult {
    pub flow: i64,
    pub cost: i64,
}

impl MinCostFlow {
    pub fn new(nodes: usize) -> Self {
        Self {
            arcs: Vec::new(),
            adjacency: vec![Vec::new(); nodes],
        }
    }

    pub fn add_node(&mut self) -> usize {
        self.adjacency.push(Vec::new());
        self.adjacency.len() - 1
    }

    pub fn nodes(&self) -> usize {
        self.adjacency.len()
    }

    /// Adds `from -> to` with capacity and per-unit cost; the paired
    /// reverse residual arc is `id ^ 1`.
    pub fn add_edge(&mut self, from: usize, to: usize, cap: i64, cost: i64) -> EdgeId {
        assert!(from < self.nodes() && to < self.nodes(), "edge endpoint out of range");
        assert!(cap >= 0, "negative capacity");
        let id = self.arcs.len();
        self.arcs.push(Arc { to, cap, cost });
        self.arcs.push(Arc {
            to: from,
            cap: 0,
            cost: -cost,
        });
        self.adjacency[from].push(id);
        self.adjacency[to].push(id + 1);
        id
    }

    /// Flow currently routed through a forward edge.
    pub fn flow(&self, edge: EdgeId) -> i64 {
        self.arcs[edge ^ 1].cap
    }

    fn bellman_ford(&self, source: usize) -> Vec<i64> {
        let n = self.nodes();
        let mut dist = vec![INF; n];
        dist[source] = 0;
        for _ in 0..n {
            let mut changed = false;
            for u in 0..n {
                if dist[u] == INF {
                    continue;
                }
                for &e in &self.adjacency[u] {
                    let a = &self.arcs[e];
                    if a.cap > 0 && dist[u] + a.cost < dist[a.to] {
                        dist[a.to] = dist[u] + a.cost;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        dist
    }

    /// Pushes as much flow as possible from `source` to `sink` (at most
    /// `limit` when given) at minimum total cost. Negative-cost cycles are
    /// not supported.
    pub fn solve(&mut self, source: usize, sink: usize, limit: Option<i64>) -> FlowResult {
        let n = self.nodes();
        let limit = limit.unwrap_or(INF);
        let mut potential = if self.arcs.iter().any(|a| a.cap > 0 && a.cost < 0) {
            self.bellman_ford(source)
                .into_iter()
                .map(|d| if d == INF { 0 } else { d })
                .collect()
        } else {
            vec![0; n]
        };
        let mut dist = vec![INF; n];
        let mut parent: Vec<Option<usize>> = vec![None; n];
        let mut heap = BinaryHeap::new();
        let mut result = FlowResult { flow: 0, cost: 0 };

        while result.flow < limit {
            dist.fill(INF);
            parent.fill(None);
            dist[source] = 0;
            heap.push(Reverse((0i64, source)));
            while let Some(Reverse((d, u))) = heap.pop() {
                if d > dist[u] {
                    continue;
                }
                for &e in &self.adjacency[u] {
                    let a = &self.arcs[e];
                    if a.cap == 0 {
                        continue;
                    }
                    let nd = d + a.cost + potential[u] - potential[a.to];
                    if nd < dist[a.to] {
                        dist[a.to] = nd;
                        parent[a.to] = Some(e);
                        heap.push(Reverse((nd, a.to)));
                    }
                }
            }
            if dist[sink] == INF {
                break;
            }
            for v in 0..n {
                if dist[v] < INF {
                    potential[v] += dist[v];
                }
            }
            let mut push = limit - result.flow;
            let mut v = sink;
            while let Some(e) = parent[v] {
                push = push.min(self.arcs[e].cap);
                v = self.arcs[e ^ 1].to;
            }
            let mut v = sink;
            while let Some(e) = parent[v] {
                self.arcs[e].cap -= push;
                self.arcs[e ^ 1].cap += push;
                result.cost += push * self.arcs[e].cost;
                v = self.arcs[e ^ 1].to;
            }
            result.flow += push;
        }
        result
    }
}
