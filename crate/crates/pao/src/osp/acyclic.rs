//! Acyclicity of priority structures: at most two agents on top of the
//! remaining objects in every reachable submarket.

use serde::Serialize;

use crate::model::{ObjSet, Priorities};

/// A submarket with three or more distinct top-priority agents.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CyclicSubmarket {
    pub agents: Vec<usize>,
    pub objects: ObjSet,
    pub tops: Vec<usize>,
}

/// Top-priority agent of each object in `objects` among `agents`, deduplicated and sorted.
pub fn tops(priorities: &Priorities, agents: u64, objects: ObjSet) -> Vec<usize> {
    let mut t: Vec<usize> = objects
        .iter()
        .filter_map(|o| o.index())
        .filter_map(|o| priorities.top_among(o, agents))
        .collect();
    t.sort_unstable();
    t.dedup();
    t
}

/// First violating submarket, scanning remaining-agent sets and then
/// remaining-object sets in ascending bitmask order.
///
/// A submarket is reachable when the removed agents could have left with the
/// removed objects, that is, no more objects are gone than agents.
pub fn find_cyclic_submarket(priorities: &Priorities) -> Option<CyclicSubmarket> {
    let (n, m) = (priorities.n(), priorities.m());
    for agents in 1u64..(1 << n) {
        // Tops over a subset of objects are among the tops over all of them.
        if tops(priorities, agents, ObjSet::real(m)).len() <= 2 {
            continue;
        }
        let removed_agents = n - agents.count_ones() as usize;
        for bits in 1u32..(1 << m) {
            if m - bits.count_ones() as usize > removed_agents {
                continue;
            }
            let objects: ObjSet = (0..m).filter(|o| bits & (1 << o) != 0).map(crate::model::Obj::new).collect();
            let t = tops(priorities, agents, objects);
            if t.len() > 2 {
                return Some(CyclicSubmarket {
                    agents: (0..n).filter(|&a| agents & (1 << a) != 0).collect(),
                    objects,
                    tops: t,
                });
            }
        }
    }
    None
}

pub fn check_acyclic(priorities: &Priorities) -> bool {
    find_cyclic_submarket(priorities).is_none()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_orders_are_acyclic() {
        let p = Priorities::common(4, vec![2, 0, 3, 1]).unwrap();
        assert!(check_acyclic(&p));
    }

    #[test]
    fn three_distinct_tops_are_cyclic() {
        let p = Priorities::new(3, vec![vec![0, 1, 2], vec![1, 2, 0], vec![2, 0, 1]]).unwrap();
        let w = find_cyclic_submarket(&p).unwrap();
        assert_eq!(w.agents, vec![0, 1, 2]);
        assert_eq!(w.tops, vec![0, 1, 2]);
    }

    #[test]
    fn cycle_appearing_only_after_departure() {
        // a1 tops everything; once she leaves with o1, o2..o4 are topped by a2, a3, a4.
        let p = Priorities::new(
            4,
            vec![vec![0, 1, 2, 3], vec![0, 1, 2, 3], vec![0, 2, 1, 3], vec![0, 3, 1, 2]],
        )
        .unwrap();
        assert_eq!(tops(&p, 0b1111, ObjSet::real(4)), vec![0]);
        let w = find_cyclic_submarket(&p).unwrap();
        assert_eq!(w.agents, vec![1, 2, 3]);
        assert_eq!(w.tops, vec![1, 2, 3]);
    }
}
