// SPDX-License-Identifier: Apache-2.0

//! Incremental acyclicity of the true-edge graph, kept with a dynamic
//! topological order (Pearce and Kelly). Several variables may share one
//! node pair; the pair's edge exists while any of them is true.

use std::collections::VecDeque;

use crate::ir::VarId;

const NONE: u32 = u32::MAX;

#[derive(Clone, Debug)]
pub struct Theory {
    ord: Vec<u32>,
    out: Vec<Vec<u32>>,
    inn: Vec<Vec<u32>>,
    slot_ends: Vec<(u32, u32)>,
    /// True variables holding each slot's edge, most recent last.
    support: Vec<Vec<VarId>>,
    var_slot: Vec<u32>,
    stamp: Vec<u32>,
    epoch: u32,
    parent: Vec<u32>,
}

impl Theory {
    /// `ends[v]` is the edge of variable `v`, or `None` when the variable
    /// carries no edge. `initial` is a permutation used as the starting order.
    pub fn new(n: usize, ends: &[Option<(u32, u32)>], initial: Option<&[u32]>) -> Self {
        let mut slot_of = std::collections::HashMap::new();
        let mut slot_ends = Vec::new();
        let var_slot = ends
            .iter()
            .map(|e| match e {
                None => NONE,
                Some(uv) => *slot_of.entry(*uv).or_insert_with(|| {
                    slot_ends.push(*uv);
                    slot_ends.len() as u32 - 1
                }),
            })
            .collect();
        let ord = match initial {
            Some(r) => r.to_vec(),
            None => (0..n as u32).collect(),
        };
        Theory {
            ord,
            out: vec![Vec::new(); n],
            inn: vec![Vec::new(); n],
            support: vec![Vec::new(); slot_ends.len()],
            slot_ends,
            var_slot,
            stamp: vec![0; n],
            epoch: 0,
            parent: vec![NONE; n],
        }
    }

    pub fn has_edge(&self, v: VarId) -> bool {
        self.var_slot.get(v as usize).is_some_and(|s| *s != NONE)
    }

    /// Whether asserting `v` keeps the current order: no edge, an existing
    /// edge, or one pointing forward.
    pub fn forward(&self, v: VarId) -> bool {
        match self.var_slot.get(v as usize) {
            Some(&s) if s != NONE => {
                let (a, b) = self.slot_ends[s as usize];
                !self.support[s as usize].is_empty() || self.ord[a as usize] < self.ord[b as usize]
            }
            _ => true,
        }
    }

    fn next_epoch(&mut self) -> u32 {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
        self.epoch
    }

    /// Asserts variable `v`. On a cycle the graph is unchanged and the cycle's
    /// variables are returned, starting with `v`.
    pub fn add(&mut self, v: VarId) -> Result<(), Vec<VarId>> {
        let s = self.var_slot[v as usize];
        if !self.support[s as usize].is_empty() {
            self.support[s as usize].push(v);
            return Ok(());
        }
        let (a, b) = self.slot_ends[s as usize];
        if a == b {
            return Err(vec![v]);
        }
        if self.ord[a as usize] > self.ord[b as usize] {
            self.reorder(a, b).map_err(|path| {
                let mut cycle = vec![v];
                cycle.extend(path.into_iter().map(|s| *self.support[s as usize].last().expect("live slot")));
                cycle
            })?;
        }
        self.support[s as usize].push(v);
        self.out[a as usize].push(s);
        self.inn[b as usize].push(s);
        Ok(())
    }

    /// Retracts the most recent assertion of `v`.
    pub fn remove(&mut self, v: VarId) {
        let s = self.var_slot[v as usize];
        let sup = &mut self.support[s as usize];
        let top = sup.pop();
        debug_assert_eq!(top, Some(v));
        if sup.is_empty() {
            let (a, b) = self.slot_ends[s as usize];
            let o = &mut self.out[a as usize];
            o.swap_remove(o.iter().position(|x| *x == s).expect("edge present"));
            let i = &mut self.inn[b as usize];
            i.swap_remove(i.iter().position(|x| *x == s).expect("edge present"));
        }
    }

    /// Makes room for edge `a -> b` where `b` currently precedes `a`. `Err`
    /// holds the slots of a shortest path `b ~> a`.
    fn reorder(&mut self, a: u32, b: u32) -> Result<(), Vec<u32>> {
        let ub = self.ord[a as usize];
        let lb = self.ord[b as usize];

        let e = self.next_epoch();
        let mut fwd = vec![b];
        let mut queue = VecDeque::from([b]);
        self.stamp[b as usize] = e;
        self.parent[b as usize] = NONE;
        while let Some(x) = queue.pop_front() {
            for &s in &self.out[x as usize] {
                let y = self.slot_ends[s as usize].1;
                if y == a {
                    let mut path = vec![s];
                    let mut z = x;
                    while self.parent[z as usize] != NONE {
                        let ps = self.parent[z as usize];
                        path.push(ps);
                        z = self.slot_ends[ps as usize].0;
                    }
                    path.reverse();
                    return Err(path);
                }
                if self.stamp[y as usize] != e && self.ord[y as usize] < ub {
                    self.stamp[y as usize] = e;
                    self.parent[y as usize] = s;
                    fwd.push(y);
                    queue.push_back(y);
                }
            }
        }

        let e = self.next_epoch();
        let mut back = vec![a];
        let mut stack = vec![a];
        self.stamp[a as usize] = e;
        while let Some(x) = stack.pop() {
            for &s in &self.inn[x as usize] {
                let y = self.slot_ends[s as usize].0;
                if self.stamp[y as usize] != e && self.ord[y as usize] > lb {
                    self.stamp[y as usize] = e;
                    back.push(y);
                    stack.push(y);
                }
            }
        }

        let ord = &mut self.ord;
        fwd.sort_unstable_by_key(|x| ord[*x as usize]);
        back.sort_unstable_by_key(|x| ord[*x as usize]);
        let mut slots: Vec<u32> = back.iter().chain(&fwd).map(|x| ord[*x as usize]).collect();
        slots.sort_unstable();
        for (x, o) in back.iter().chain(&fwd).zip(slots) {
            ord[*x as usize] = o;
        }
        Ok(())
    }

    /// Whether the current order is topological for the live edges.
    pub fn consistent(&self) -> bool {
        self.out.iter().enumerate().all(|(x, ss)| {
            ss.iter().all(|s| self.ord[x] < self.ord[self.slot_ends[*s as usize].1 as usize])
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn detects_shortest_cycle() {
        // 0->1->2->3 and 1->3; adding 3->1 closes the 2-edge cycle 1->3->1.
        let ends: Vec<Option<(u32, u32)>> = vec![Some((0, 1)), Some((1, 2)), Some((2, 3)), Some((1, 3)), Some((3, 1))];
        let mut t = Theory::new(4, &ends, None);
        for v in 0..4 {
            t.add(v).unwrap();
        }
        assert_eq!(t.add(4), Err(vec![4, 3]));
        assert!(t.consistent());
    }

    #[test]
    fn reorders_backward_edge() {
        let ends = vec![Some((2, 0)), Some((1, 2)), Some((0, 1))];
        let mut t = Theory::new(3, &ends, None);
        t.add(0).unwrap();
        t.add(1).unwrap();
        assert!(t.consistent());
        assert_eq!(t.add(2), Err(vec![2, 1, 0]));
        t.remove(1);
        t.add(2).unwrap();
        assert!(t.consistent());
    }

    #[test]
    fn shared_slot_survives_partial_removal() {
        let ends = vec![Some((0, 1)), Some((0, 1)), Some((1, 0))];
        let mut t = Theory::new(2, &ends, None);
        t.add(0).unwrap();
        t.add(1).unwrap();
        t.remove(1);
        assert_eq!(t.add(2), Err(vec![2, 0]));
        t.remove(0);
        t.add(2).unwrap();
    }

    #[test]
    fn self_loop() {
        let mut t = Theory::new(1, &[Some((0, 0))], None);
        assert_eq!(t.add(0), Err(vec![0]));
    }

    fn acyclic_with(n: usize, edges: &[(u32, u32)]) -> bool {
        crate::optimizer::Reachability::compute(n, edges).is_ok()
    }

    proptest! {
        #[test]
        fn agrees_with_batch_cycle_check(n in 2usize..12, raw in proptest::collection::vec((0u32..12, 0u32..12), 1..40)) {
            let edges: Vec<(u32, u32)> = raw.into_iter().map(|(a, b)| (a % n as u32, b % n as u32)).collect();
            let ends: Vec<Option<(u32, u32)>> = edges.iter().map(|e| Some(*e)).collect();
            let mut t = Theory::new(n, &ends, None);
            let mut live = Vec::new();
            for (v, e) in edges.iter().enumerate() {
                let mut with = live.clone();
                with.push(*e);
                let ok = acyclic_with(n, &with);
                match t.add(v as u32) {
                    Ok(()) => { prop_assert!(ok); live.push(*e); }
                    Err(cycle) => {
                        prop_assert!(!ok);
                        // The reported variables form a closed walk.
                        let mut nodes = cycle.iter().map(|x| edges[*x as usize]);
                        let first = nodes.next().unwrap();
                        let mut at = first.1;
                        for (p, q) in nodes { prop_assert_eq!(p, at); at = q; }
                        prop_assert_eq!(at, first.0);
                    }
                }
                prop_assert!(t.consistent());
            }
        }
    }
}
