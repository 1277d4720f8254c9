//! Dinic max-flow on small graphs with real capacities.
//!
//! Used to decide feasibility of couplings supported on a thresholded set of
//! pairs, which is the inner loop of the `W_∞` bisection.

use crate::scalar::Scalar;

#[derive(Clone)]
struct Edge<T> {
    to: usize,
    cap: T,
    rev: usize,
}

pub struct Dinic<T> {
    graph: Vec<Vec<Edge<T>>>,
    level: Vec<i32>,
    iter: Vec<usize>,
    eps: T,
}

impl<T: Scalar> Dinic<T> {
    pub fn new(n: usize, eps: T) -> Self {
        Self { graph: vec![Vec::new(); n], level: vec![0; n], iter: vec![0; n], eps }
    }

    pub fn add_edge(&mut self, from: usize, to: usize, cap: T) -> (usize, usize) {
        let rev_from = self.graph[to].len();
        let rev_to = self.graph[from].len();
        self.graph[from].push(Edge { to, cap, rev: rev_from });
        self.graph[to].push(Edge { to: from, cap: T::zero(), rev: rev_to });
        (from, rev_to)
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.iter_mut().for_each(|l| *l = -1);
        let mut q = std::collections::VecDeque::new();
        self.level[s] = 0;
        q.push_back(s);
        while let Some(v) = q.pop_front() {
            for e in &self.graph[v] {
                if e.cap > self.eps && self.level[e.to] < 0 {
                    self.level[e.to] = self.level[v] + 1;
                    q.push_back(e.to);
                }
            }
        }
        self.level[t] >= 0
    }

    fn dfs(&mut self, v: usize, t: usize, f: T) -> T {
        if v == t {
            return f;
        }
        while self.iter[v] < self.graph[v].len() {
            let i = self.iter[v];
            let (to, cap, rev) = {
                let e = &self.graph[v][i];
                (e.to, e.cap, e.rev)
            };
            if cap > self.eps && self.level[v] < self.level[to] {
                let d = self.dfs(to, t, f.min(cap));
                if d > self.eps {
                    self.graph[v][i].cap = self.graph[v][i].cap - d;
                    self.graph[to][rev].cap = self.graph[to][rev].cap + d;
                    return d;
                }
            }
            self.iter[v] += 1;
        }
        T::zero()
    }

    pub fn max_flow(&mut self, s: usize, t: usize) -> T {
        let mut flow = T::zero();
        while self.bfs(s, t) {
            self.iter.iter_mut().for_each(|i| *i = 0);
            loop {
                let f = self.dfs(s, t, T::infinity());
                if f <= self.eps {
                    break;
                }
                flow = flow + f;
            }
        }
        flow
    }

    /// Flow currently pushed through the edge registered as `(from, index)`.
    pub fn edge_flow(&self, handle: (usize, usize), original_cap: T) -> T {
        let e = &self.graph[handle.0][handle.1];
        original_cap - e.cap
    }

    /// Residual capacity of a registered edge.
    pub fn edge_residual(&self, handle: (usize, usize)) -> T {
        self.graph[handle.0][handle.1].cap
    }
}
