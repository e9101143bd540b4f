//! Min-cost flow by successive shortest augmenting paths with node potentials.
//!
//! Capacities and flows are integers, arc costs are nonnegative reals. Arc
//! lower bounds are removed with the usual excess transformation: an arc
//! `(u, v)` with bounds `[lo, hi]` becomes an arc of capacity `hi - lo`, and
//! `lo` units of supply/demand are routed through a super source and sink.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Reduced costs above `-COST_EPS` are treated as zero.
const COST_EPS: f64 = 1e-9;

#[derive(Clone, Debug)]
struct Arc {
    to: usize,
    rev: usize,
    cap: i64,
    cost: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgeId(usize);

#[derive(Clone, Debug)]
struct EdgeInfo {
    from: usize,
    arc: usize,
    lower: i64,
    upper: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Infeasible;

#[derive(Clone, Debug)]
pub struct FlowNetwork {
    graph: Vec<Vec<Arc>>,
    edges: Vec<EdgeInfo>,
    /// Net forced inflow from lower bounds, per node.
    excess: Vec<i64>,
    base_cost: f64,
}

#[derive(PartialEq)]
struct HeapItem {
    dist: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (dist, node)
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl FlowNetwork {
    pub fn new(nodes: usize) -> Self {
        FlowNetwork {
            graph: vec![Vec::new(); nodes],
            edges: Vec::new(),
            excess: vec![0; nodes],
            base_cost: 0.0,
        }
    }

    pub fn add_node(&mut self) -> usize {
        self.graph.push(Vec::new());
        self.excess.push(0);
        self.graph.len() - 1
    }

    fn push_arc(&mut self, u: usize, v: usize, cap: i64, cost: f64) -> usize {
        let ru = self.graph[u].len();
        let rv = self.graph[v].len() + usize::from(u == v);
        self.graph[u].push(Arc {
            to: v,
            rev: rv,
            cap,
            cost,
        });
        self.graph[v].push(Arc {
            to: u,
            rev: ru,
            cap: 0,
            cost: -cost,
        });
        ru
    }

    /// Adds an arc carrying between `lower` and `upper` units at `cost` per unit.
    pub fn add_edge(&mut self, u: usize, v: usize, lower: i64, upper: i64, cost: f64) -> EdgeId {
        debug_assert!(0 <= lower && lower <= upper);
        debug_assert!(cost >= 0.0);
        let arc = self.push_arc(u, v, upper - lower, cost);
        if lower > 0 {
            self.excess[v] += lower;
            self.excess[u] -= lower;
            self.base_cost += lower as f64 * cost;
        }
        self.edges.push(EdgeInfo {
            from: u,
            arc,
            lower,
            upper,
        });
        EdgeId(self.edges.len() - 1)
    }

    /// Current flow on an edge (valid after [`FlowNetwork::solve`]).
    pub fn flow(&self, e: EdgeId) -> i64 {
        let info = &self.edges[e.0];
        let arc = &self.graph[info.from][info.arc];
        info.lower + (info.upper - info.lower - arc.cap)
    }

    /// Sends exactly `amount` units from `source` to `sink` honoring all
    /// bounds at minimum cost. Returns the total cost.
    pub fn solve(&mut self, source: usize, sink: usize, amount: i64) -> Result<f64, Infeasible> {
        let mut excess = self.excess.clone();
        excess[sink] -= amount;
        excess[source] += amount;
        let super_source = self.add_node();
        let super_sink = self.add_node();
        let mut required = 0i64;
        for (v, &ex) in excess.iter().enumerate() {
            if ex > 0 {
                self.push_arc(super_source, v, ex, 0.0);
                required += ex;
            } else if ex < 0 {
                self.push_arc(v, super_sink, -ex, 0.0);
            }
        }
        let (sent, cost) = self.successive_shortest_paths(super_source, super_sink, required);
        if sent < required {
            return Err(Infeasible);
        }
        Ok(self.base_cost + cost)
    }

    fn successive_shortest_paths(&mut self, s: usize, t: usize, limit: i64) -> (i64, f64) {
        let n = self.graph.len();
        let mut potential = vec![0.0f64; n];
        let mut dist = vec![f64::INFINITY; n];
        let mut prev: Vec<(usize, usize)> = vec![(usize::MAX, usize::MAX); n];
        let mut sent = 0i64;
        let mut cost = 0.0;
        while sent < limit {
            dist.iter_mut().for_each(|d| *d = f64::INFINITY);
            dist[s] = 0.0;
            let mut heap = BinaryHeap::new();
            heap.push(HeapItem { dist: 0.0, node: s });
            while let Some(HeapItem { dist: d, node: u }) = heap.pop() {
                if d > dist[u] {
                    continue;
                }
                for (i, a) in self.graph[u].iter().enumerate() {
                    if a.cap <= 0 {
                        continue;
                    }
                    let mut reduced = a.cost + potential[u] - potential[a.to];
                    if reduced < 0.0 {
                        debug_assert!(reduced > -COST_EPS * (1.0 + a.cost.abs()), "{reduced}");
                        reduced = 0.0;
                    }
                    let nd = d + reduced;
                    if nd < dist[a.to] {
                        dist[a.to] = nd;
                        prev[a.to] = (u, i);
                        heap.push(HeapItem {
                            dist: nd,
                            node: a.to,
                        });
                    }
                }
            }
            if !dist[t].is_finite() {
                break;
            }
            for v in 0..n {
                if dist[v].is_finite() {
                    potential[v] += dist[v];
                }
            }
            let mut push = limit - sent;
            let mut v = t;
            while v != s {
                let (u, i) = prev[v];
                push = push.min(self.graph[u][i].cap);
                v = u;
            }
            let mut v = t;
            while v != s {
                let (u, i) = prev[v];
                let rev = self.graph[u][i].rev;
                self.graph[u][i].cap -= push;
                self.graph[v][rev].cap += push;
                cost += push as f64 * self.graph[u][i].cost;
                v = u;
            }
            sent += push;
        }
        (sent, cost)
    }
}
