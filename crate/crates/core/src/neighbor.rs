use std::cmp::Ordering;

/// A point id together with its squared distance to the owner of the list it
/// sits in.
///
/// `fresh` marks entries that were not present in the previous version of the
/// same list (new in NN-Descent, or new since the last refinement round).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub id: u32,
    pub dist: f32,
    pub fresh: bool,
}

impl Neighbor {
    #[inline]
    pub fn new(id: u32, dist: f32) -> Self {
        Neighbor {
            id,
            dist,
            fresh: true,
        }
    }

    /// Total order by `(dist, id)`; the tie-break every algorithm uses.
    #[inline]
    pub fn order(&self, other: &Neighbor) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then_with(|| self.id.cmp(&other.id))
    }

    #[inline]
    pub fn precedes(&self, other: &Neighbor) -> bool {
        self.order(other) == Ordering::Less
    }
}

pub fn sort_neighbors(list: &mut [Neighbor]) {
    list.sort_unstable_by(Neighbor::order);
}

pub fn ids(list: &[Neighbor]) -> Vec<u32> {
    list.iter().map(|n| n.id).collect()
}

/// Bounded candidate list of a beam search.
///
/// Entries stay sorted by `(dist, id)` with unique ids and at most `capacity`
/// members. Each entry carries an `expanded` flag that, once set, stays set
/// until [`CandidatePool::reset`].
#[derive(Clone, Debug)]
pub struct CandidatePool {
    capacity: usize,
    entries: Vec<Neighbor>,
    expanded: Vec<bool>,
    // index of the first entry that may still be unexpanded
    cursor: usize,
}

impl CandidatePool {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "pool capacity must be positive");
        CandidatePool {
            capacity,
            entries: Vec::with_capacity(capacity + 1),
            expanded: Vec::with_capacity(capacity + 1),
            cursor: 0,
        }
    }

    pub fn reset(&mut self, capacity: usize) {
        assert!(capacity > 0, "pool capacity must be positive");
        self.capacity = capacity;
        self.entries.clear();
        self.expanded.clear();
        self.cursor = 0;
    }

    #[inline]
    pub fn capacity(&self) -> usize {
        self.capacity
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    #[inline]
    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    pub fn entries(&self) -> &[Neighbor] {
        &self.entries
    }

    pub fn is_expanded(&self, index: usize) -> bool {
        self.expanded[index]
    }

    /// Whether a candidate at distance `dist` could still enter the pool.
    #[inline]
    pub fn admits(&self, dist: f32) -> bool {
        !self.is_full() || dist <= self.entries[self.capacity - 1].dist
    }

    /// Inserts `cand` at its sorted position. Rejected when it does not precede
    /// the current last entry of a full pool or its id is already present.
    /// Returns whether the pool changed.
    pub fn insert(&mut self, cand: Neighbor) -> bool {
        if self.entries.iter().any(|e| e.id == cand.id) {
            return false;
        }
        self.insert_new(cand)
    }

    /// Like [`insert`](Self::insert) for a candidate the caller knows is not in
    /// the pool (search keeps a visited set).
    #[inline]
    pub(crate) fn insert_new(&mut self, cand: Neighbor) -> bool {
        debug_assert!(self.entries.iter().all(|e| e.id != cand.id));
        if self.is_full() && !cand.precedes(&self.entries[self.capacity - 1]) {
            return false;
        }
        let pos = self.entries.partition_point(|e| e.precedes(&cand));
        self.entries.insert(pos, cand);
        self.expanded.insert(pos, false);
        if self.entries.len() > self.capacity {
            self.entries.pop();
            self.expanded.pop();
        }
        if pos < self.cursor {
            self.cursor = pos;
        }
        true
    }

    /// Marks the closest unexpanded entry as expanded and returns it.
    #[inline]
    pub fn next_unexpanded(&mut self) -> Option<Neighbor> {
        while self.cursor < self.entries.len() && self.expanded[self.cursor] {
            self.cursor += 1;
        }
        if self.cursor < self.entries.len() {
            self.expanded[self.cursor] = true;
            Some(self.entries[self.cursor])
        } else {
            None
        }
    }

    pub fn truncated(&self, k: usize) -> Vec<Neighbor> {
        self.entries.iter().take(k).copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn insert_examples() {
        let mut pool = CandidatePool::new(4);
        assert!(pool.insert(Neighbor::new(7, 2.5)));
        assert_eq!(pool.entries(), &[Neighbor::new(7, 2.5)]);
        assert!(!pool.insert(Neighbor::new(7, 0.1)));

        for (id, d) in [(1, 1.0), (2, 9.0), (4, 3.0)] {
            assert!(pool.insert(Neighbor::new(id, d)));
        }
        let before = pool.entries().to_vec();
        assert!(!pool.insert(Neighbor::new(3, 9.5)));
        assert_eq!(pool.entries(), before.as_slice());
    }

    #[test]
    fn ties_break_by_id() {
        let mut pool = CandidatePool::new(2);
        pool.insert(Neighbor::new(5, 1.0));
        pool.insert(Neighbor::new(9, 1.0));
        assert!(pool.insert(Neighbor::new(3, 1.0)));
        assert_eq!(ids(pool.entries()), vec![3, 5]);
        assert!(!pool.insert(Neighbor::new(6, 1.0)));
    }

    #[test]
    fn expansion_cursor_moves_back_on_insert() {
        let mut pool = CandidatePool::new(3);
        pool.insert(Neighbor::new(0, 5.0));
        assert_eq!(pool.next_unexpanded().unwrap().id, 0);
        pool.insert(Neighbor::new(1, 1.0));
        pool.insert(Neighbor::new(2, 7.0));
        assert_eq!(pool.next_unexpanded().unwrap().id, 1);
        assert_eq!(pool.next_unexpanded().unwrap().id, 2);
        assert!(pool.next_unexpanded().is_none());
        assert!(pool.is_expanded(0) && pool.is_expanded(1) && pool.is_expanded(2));
    }

    proptest! {
        #[test]
        fn keeps_smallest_distinct(
            cap in 1usize..12,
            table in proptest::collection::vec(0u32..50, 30),
            offers in proptest::collection::vec(0u32..30, 0..80),
        ) {
            // a candidate's distance is a fixed function of its id, as in search
            let mut pool = CandidatePool::new(cap);
            let mut seen: Vec<Neighbor> = Vec::new();
            for id in offers {
                let cand = Neighbor::new(id, table[id as usize] as f32);
                pool.insert(cand);
                if !seen.iter().any(|n| n.id == id) {
                    seen.push(cand);
                }
            }
            sort_neighbors(&mut seen);
            seen.truncate(cap);
            let got = pool.entries();
            prop_assert!(got.windows(2).all(|w| w[0].precedes(&w[1])));
            prop_assert!(got.len() <= cap);
            prop_assert_eq!(got, seen.as_slice());
        }
    }
}
