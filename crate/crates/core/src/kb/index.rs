use std::collections::BTreeSet;

/// One of the six component orders a triple index can be sorted by.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum IndexOrder {
    Spo,
    Sop,
    Pso,
    Pos,
    Osp,
    Ops,
}

impl IndexOrder {
    pub const ALL: [IndexOrder; 6] = [
        IndexOrder::Spo,
        IndexOrder::Sop,
        IndexOrder::Pso,
        IndexOrder::Pos,
        IndexOrder::Osp,
        IndexOrder::Ops,
    ];

    /// Triple component (0 = s, 1 = p, 2 = o) stored at each key position.
    fn permutation(self) -> [usize; 3] {
        match self {
            IndexOrder::Spo => [0, 1, 2],
            IndexOrder::Sop => [0, 2, 1],
            IndexOrder::Pso => [1, 0, 2],
            IndexOrder::Pos => [1, 2, 0],
            IndexOrder::Osp => [2, 0, 1],
            IndexOrder::Ops => [2, 1, 0],
        }
    }

    fn slot(self) -> usize {
        self as usize
    }

    /// Index whose key prefix covers exactly the bound components.
    pub fn for_mask(s: bool, p: bool, o: bool) -> IndexOrder {
        match (s, p, o) {
            (true, true, _) | (true, false, false) | (false, false, false) => IndexOrder::Spo,
            (true, false, true) => IndexOrder::Sop,
            (false, true, false) => IndexOrder::Pso,
            (false, true, true) => IndexOrder::Pos,
            (false, false, true) => IndexOrder::Osp,
        }
    }
}

#[derive(Debug, Default)]
pub(super) struct PermutationIndexes {
    sorted: [BTreeSet<[u32; 3]>; 6],
}

impl PermutationIndexes {
    pub(super) fn insert(&mut self, spo: [u32; 3]) {
        for order in IndexOrder::ALL {
            let perm = order.permutation();
            self.sorted[order.slot()].insert([spo[perm[0]], spo[perm[1]], spo[perm[2]]]);
        }
    }

    /// Keys (in s, p, o layout) agreeing with every bound component. The
    /// longest bound prefix of `order` is range-scanned, any other bound
    /// component is filtered.
    pub(super) fn scan(&self, order: IndexOrder, bound: [Option<u32>; 3]) -> impl Iterator<Item = [u32; 3]> + '_ {
        let perm = order.permutation();
        let mut lo = [0u32; 3];
        let mut hi = [u32::MAX; 3];
        for (pos, &component) in perm.iter().enumerate() {
            match bound[component] {
                Some(v) => {
                    lo[pos] = v;
                    hi[pos] = v;
                }
                None => break,
            }
        }
        self.sorted[order.slot()]
            .range(lo..=hi)
            .map(move |key| {
                let mut spo = [0u32; 3];
                for (pos, &component) in perm.iter().enumerate() {
                    spo[component] = key[pos];
                }
                spo
            })
            .filter(move |spo| (0..3).all(|c| bound[c].is_none_or(|v| v == spo[c])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_order_answers_every_mask() {
        let mut idx = PermutationIndexes::default();
        let keys = [[1, 2, 3], [1, 2, 4], [1, 5, 3], [6, 2, 3], [6, 5, 4]];
        for k in keys {
            idx.insert(k);
        }
        for order in IndexOrder::ALL {
            for mask in 0..8u8 {
                for probe in keys {
                    let bound = [0, 1, 2].map(|c| (mask >> c & 1 == 1).then_some(probe[c]));
                    let mut got: Vec<_> = idx.scan(order, bound).collect();
                    got.sort();
                    let want: Vec<_> = keys
                        .iter()
                        .copied()
                        .filter(|k| (0..3).all(|c| bound[c].is_none_or(|v| v == k[c])))
                        .collect();
                    assert_eq!(got, want, "{order:?} mask {mask}");
                }
            }
        }
    }
}
