// SPDX-License-Identifier: Apache-2.0

//! Transitive closure of the known graph as a bit matrix.
//!
//! Rows are filled in reverse topological order: a node's row is its own bit
//! plus the union of its successors' rows. Nodes at the same height (longest
//! path to a sink) never depend on each other, so each height is a batch of
//! independent rows that is filled in parallel.

use std::collections::VecDeque;

use crate::par;

/// Successor lists of a graph on nodes `0..n`, deduplicated.
pub fn successors(n: usize, edges: &[(u32, u32)]) -> Vec<Vec<u32>> {
    let mut succ = vec![Vec::new(); n];
    for &(u, v) in edges {
        succ[u as usize].push(v);
    }
    for s in &mut succ {
        s.sort_unstable();
        s.dedup();
    }
    succ
}

/// Kahn's algorithm. `Err` carries the nodes of one cycle, in edge order.
pub fn topo_order(succ: &[Vec<u32>]) -> Result<Vec<u32>, Vec<u32>> {
    let n = succ.len();
    let mut indeg = vec![0u32; n];
    for s in succ {
        for &v in s {
            indeg[v as usize] += 1;
        }
    }
    let mut queue: VecDeque<u32> = (0..n as u32).filter(|&u| indeg[u as usize] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(u) = queue.pop_front() {
        order.push(u);
        for &v in &succ[u as usize] {
            indeg[v as usize] -= 1;
            if indeg[v as usize] == 0 {
                queue.push_back(v);
            }
        }
    }
    if order.len() == n {
        Ok(order)
    } else {
        let stuck: Vec<bool> = indeg.iter().map(|d| *d > 0).collect();
        Err(cycle_among(succ, &stuck))
    }
}

/// A cycle among the nodes Kahn's algorithm could not emit. Each such node
/// keeps a stuck predecessor, so walking predecessors must repeat a node.
fn cycle_among(succ: &[Vec<u32>], alive: &[bool]) -> Vec<u32> {
    let mut pred = vec![u32::MAX; succ.len()];
    for (u, s) in succ.iter().enumerate() {
        if alive[u] {
            for &v in s {
                if alive[v as usize] {
                    pred[v as usize] = u as u32;
                }
            }
        }
    }
    let start = alive.iter().position(|a| *a).expect("a cycle exists") as u32;
    let mut seen_at = vec![usize::MAX; succ.len()];
    let mut path = Vec::new();
    let mut u = start;
    loop {
        if seen_at[u as usize] != usize::MAX {
            let mut cycle = path[seen_at[u as usize]..].to_vec();
            cycle.reverse();
            return cycle;
        }
        seen_at[u as usize] = path.len();
        path.push(u);
        u = pred[u as usize];
    }
}

/// Shortest path `from -> ... -> to` by BFS, as a node list.
pub fn shortest_path(succ: &[Vec<u32>], from: u32, to: u32) -> Option<Vec<u32>> {
    let mut parent = vec![u32::MAX; succ.len()];
    let mut queue = VecDeque::from([from]);
    parent[from as usize] = from;
    while let Some(u) = queue.pop_front() {
        if u == to {
            let mut path = vec![to];
            let mut x = to;
            while x != from {
                x = parent[x as usize];
                path.push(x);
            }
            path.reverse();
            return Some(path);
        }
        for &v in &succ[u as usize] {
            if parent[v as usize] == u32::MAX {
                parent[v as usize] = u;
                queue.push_back(v);
            }
        }
    }
    None
}

#[derive(Clone, Debug)]
pub struct Reachability {
    n: usize,
    words: usize,
    /// Row position of each node.
    pos: Vec<u32>,
    rows: Vec<u64>,
}

impl Reachability {
    /// Closure of the graph. `Err` carries a cycle.
    pub fn compute(n: usize, edges: &[(u32, u32)]) -> Result<Self, Vec<u32>> {
        let succ = successors(n, edges);
        let order = topo_order(&succ)?;
        Ok(Self::from_dag(&succ, &order))
    }

    fn from_dag(succ: &[Vec<u32>], order: &[u32]) -> Self {
        let n = succ.len();
        let words = n.div_ceil(64).max(1);
        let mut height = vec![0u32; n];
        for &u in order.iter().rev() {
            height[u as usize] = succ[u as usize].iter().map(|v| height[*v as usize] + 1).max().unwrap_or(0);
        }
        let levels = height.iter().max().map_or(0, |h| *h as usize + 1);
        let mut starts = vec![0usize; levels + 1];
        for h in &height {
            starts[*h as usize + 1] += 1;
        }
        for i in 0..levels {
            starts[i + 1] += starts[i];
        }
        let mut fill = starts.clone();
        let mut by_pos = vec![0u32; n];
        let mut pos = vec![0u32; n];
        for u in 0..n {
            let h = height[u] as usize;
            by_pos[fill[h]] = u as u32;
            pos[u] = fill[h] as u32;
            fill[h] += 1;
        }

        let mut rows = vec![0u64; n * words];
        for level in 0..levels {
            let (lo, hi) = (starts[level], starts[level + 1]);
            let (done, rest) = rows.split_at_mut(lo * words);
            let done: &[u64] = done;
            let (by_pos, pos) = (&by_pos, &pos);
            par::for_each_chunk(&mut rest[..(hi - lo) * words], words, |i, row| {
                let u = by_pos[lo + i] as usize;
                row[u / 64] |= 1 << (u % 64);
                for &v in &succ[u] {
                    let p = pos[v as usize] as usize * words;
                    for (w, x) in row.iter_mut().zip(&done[p..p + words]) {
                        *w |= *x;
                    }
                }
            });
        }
        Reachability { n, words, pos, rows }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Whether a path `a ~> b` exists. Every node reaches itself.
    pub fn reaches(&self, a: u32, b: u32) -> bool {
        let row = self.pos[a as usize] as usize * self.words;
        self.rows[row + b as usize / 64] >> (b % 64) & 1 == 1
    }

    /// Number of ordered pairs `(a, b)`, `a != b`, with `a ~> b`.
    pub fn related_pairs(&self) -> u64 {
        self.rows.iter().map(|w| w.count_ones() as u64).sum::<u64>() - self.n as u64
    }
}
