// SPDX-License-Identifier: Apache-2.0

//! Activity-ordered queue of superposition blocks.

const RESCALE: f64 = 1e100;
const DECAY: f64 = 0.95;

/// Indexed binary max-heap of blocks keyed by conflict activity.
pub(super) struct BlockOrder {
    act: Vec<f64>,
    inc: f64,
    heap: Vec<u32>,
    /// Position in `heap`, or `u32::MAX` when absent.
    pos: Vec<u32>,
}

impl BlockOrder {
    /// Blocks earlier in `plan` start slightly ahead; any bump outweighs that.
    pub(super) fn new(n: usize, plan: &[u32]) -> Self {
        let mut act = vec![0.0; n];
        let scale = 1.0 / (plan.len() as f64 + 1.0);
        for (r, b) in plan.iter().enumerate() {
            act[*b as usize] = (plan.len() - r) as f64 * scale * 1e-3;
        }
        let mut o = BlockOrder { act, inc: 1.0, heap: Vec::with_capacity(n), pos: vec![u32::MAX; n] };
        for b in plan {
            o.insert(*b);
        }
        o
    }

    fn less(&self, a: u32, b: u32) -> bool {
        let (x, y) = (self.act[a as usize], self.act[b as usize]);
        x < y || (x == y && a > b)
    }

    fn sift_up(&mut self, mut i: usize) {
        let b = self.heap[i];
        while i > 0 {
            let p = (i - 1) / 2;
            if !self.less(self.heap[p], b) {
                break;
            }
            self.heap[i] = self.heap[p];
            self.pos[self.heap[i] as usize] = i as u32;
            i = p;
        }
        self.heap[i] = b;
        self.pos[b as usize] = i as u32;
    }

    fn sift_down(&mut self, mut i: usize) {
        let b = self.heap[i];
        loop {
            let l = 2 * i + 1;
            if l >= self.heap.len() {
                break;
            }
            let c = if l + 1 < self.heap.len() && self.less(self.heap[l], self.heap[l + 1]) { l + 1 } else { l };
            if !self.less(b, self.heap[c]) {
                break;
            }
            self.heap[i] = self.heap[c];
            self.pos[self.heap[i] as usize] = i as u32;
            i = c;
        }
        self.heap[i] = b;
        self.pos[b as usize] = i as u32;
    }

    pub(super) fn insert(&mut self, b: u32) {
        if self.pos[b as usize] != u32::MAX {
            return;
        }
        self.heap.push(b);
        self.sift_up(self.heap.len() - 1);
    }

    pub(super) fn pop(&mut self) -> Option<u32> {
        let top = *self.heap.first()?;
        let last = self.heap.pop().expect("non-empty heap");
        self.pos[top as usize] = u32::MAX;
        if !self.heap.is_empty() {
            self.heap[0] = last;
            self.sift_down(0);
        }
        Some(top)
    }

    pub(super) fn bump(&mut self, b: u32) {
        self.act[b as usize] += self.inc;
        if self.act[b as usize] > RESCALE {
            for a in &mut self.act {
                *a /= RESCALE;
            }
            self.inc /= RESCALE;
        }
        let p = self.pos[b as usize];
        if p != u32::MAX {
            self.sift_up(p as usize);
        }
    }

    pub(super) fn decay(&mut self) {
        self.inc /= DECAY;
    }
}

/// Element `i` (from 1) of the Luby sequence 1 1 2 1 1 2 4 ...
pub(super) fn luby(mut i: u64) -> u64 {
    loop {
        let mut k = 1;
        while (1u64 << k) - 1 < i {
            k += 1;
        }
        if (1u64 << k) - 1 == i {
            return 1 << (k - 1);
        }
        i -= (1u64 << (k - 1)) - 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn luby_prefix() {
        let s: Vec<u64> = (1..=15).map(luby).collect();
        assert_eq!(s, [1, 1, 2, 1, 1, 2, 4, 1, 1, 2, 1, 1, 2, 4, 8]);
    }

    #[test]
    fn plan_order_then_activity() {
        let mut o = BlockOrder::new(4, &[2, 0, 3, 1]);
        o.bump(1);
        assert_eq!(o.pop(), Some(1));
        assert_eq!(o.pop(), Some(2));
        o.insert(1);
        assert_eq!(o.pop(), Some(1));
        assert_eq!(o.pop(), Some(0));
        assert_eq!(o.pop(), Some(3));
        assert_eq!(o.pop(), None);
    }
}
