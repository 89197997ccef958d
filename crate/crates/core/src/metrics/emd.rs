//! Exact earth mover's distance on a grid via successive shortest paths.

use std::collections::VecDeque;

use crate::error::{invalid, Result};

const FLOW_EPS: f64 = 1e-15;

struct Edge {
    to: usize,
    cap: f64,
    cost: f64,
}

struct Network {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

impl Network {
    fn new(n: usize) -> Self {
        Self {
            edges: Vec::new(),
            adj: vec![Vec::new(); n],
        }
    }

    fn add(&mut self, from: usize, to: usize, cap: f64, cost: f64) {
        self.adj[from].push(self.edges.len());
        self.edges.push(Edge { to, cap, cost });
        self.adj[to].push(self.edges.len());
        self.edges.push(Edge { to: from, cap: 0.0, cost: -cost });
    }

    /// Shortest residual path by SPFA; returns the predecessor edge of each
    /// node on it.
    fn shortest_path(&self, source: usize, sink: usize) -> Option<Vec<Option<usize>>> {
        let n = self.adj.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut prev = vec![None; n];
        let mut queued = vec![false; n];
        let mut queue = VecDeque::new();
        dist[source] = 0.0;
        queue.push_back(source);
        queued[source] = true;
        while let Some(u) = queue.pop_front() {
            queued[u] = false;
            for &e in &self.adj[u] {
                let edge = &self.edges[e];
                if edge.cap <= FLOW_EPS {
                    continue;
                }
                let nd = dist[u] + edge.cost;
                if nd < dist[edge.to] - 1e-12 {
                    dist[edge.to] = nd;
                    prev[edge.to] = Some(e);
                    if !queued[edge.to] {
                        queued[edge.to] = true;
                        queue.push_back(edge.to);
                    }
                }
            }
        }
        dist[sink].is_finite().then_some(prev)
    }
}

/// Minimum cost of moving `supply` onto `demand` under `cost(i, j)`. Both
/// must carry the same total mass within 1e-9.
pub fn transport_cost(supply: &[f64], demand: &[f64], cost: impl Fn(usize, usize) -> f64) -> Result<f64> {
    if supply.iter().chain(demand).any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(invalid("transport masses must be finite and nonnegative"));
    }
    let (ms, md) = (supply.iter().sum::<f64>(), demand.iter().sum::<f64>());
    if (ms - md).abs() > 1e-9 {
        return Err(invalid(format!("mass mismatch: {ms} vs {md}")));
    }
    let sources: Vec<usize> = (0..supply.len()).filter(|&i| supply[i] > 0.0).collect();
    let sinks: Vec<usize> = (0..demand.len()).filter(|&j| demand[j] > 0.0).collect();
    let (s, t) = (0, 1 + sources.len() + sinks.len());
    let mut net = Network::new(t + 1);
    for (a, &i) in sources.iter().enumerate() {
        net.add(s, 1 + a, supply[i], 0.0);
        for (b, &j) in sinks.iter().enumerate() {
            net.add(1 + a, 1 + sources.len() + b, f64::INFINITY, cost(i, j));
        }
    }
    for (b, &j) in sinks.iter().enumerate() {
        net.add(1 + sources.len() + b, t, demand[j], 0.0);
    }
    let target = ms.min(md);
    let mut moved = 0.0;
    let mut total = 0.0;
    while target - moved > 1e-13 {
        let Some(prev) = net.shortest_path(s, t) else { break };
        let mut push = f64::INFINITY;
        let mut v = t;
        while let Some(e) = prev[v] {
            push = push.min(net.edges[e].cap);
            v = net.edges[e ^ 1].to;
        }
        push = push.min(target - moved);
        let mut v = t;
        while let Some(e) = prev[v] {
            net.edges[e].cap -= push;
            net.edges[e ^ 1].cap += push;
            total += push * net.edges[e].cost;
            v = net.edges[e ^ 1].to;
        }
        moved += push;
    }
    Ok(total)
}

/// Euclidean distance between the centres of cells `i` and `j` of a
/// row-major grid of width `cols`, in cell units.
pub fn cell_distance(i: usize, j: usize, cols: usize) -> f64 {
    let (ri, ci) = ((i / cols) as f64, (i % cols) as f64);
    let (rj, cj) = ((j / cols) as f64, (j % cols) as f64);
    (ri - rj).hypot(ci - cj)
}
