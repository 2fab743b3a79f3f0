//! Bespoke direct implementations, independent of the update-function machinery.

use std::collections::VecDeque;

use super::genda::cycle_members;
use crate::model::{Allocation, Market, Obj, ObjSet, Preference, Priorities};

/// Agents pick in `order`; each takes her best object with a free seat (or `∅`).
pub fn serial_dictatorship(market: &Market, order: &[usize], profile: &[Preference]) -> Allocation {
    let mut seats = market.capacities().to_vec();
    let mut out = vec![Obj::NULL; market.n()];
    for &a in order {
        let pick = profile[a]
            .order()
            .iter()
            .copied()
            .find(|o| o.index().map_or(true, |i| seats[i] > 0))
            .expect("∅ is always available");
        if let Some(i) = pick.index() {
            seats[i] -= 1;
        }
        out[a] = pick;
    }
    Allocation(out)
}

/// Top trading cycles with unit capacities; all cycles of a round clear at once.
pub fn top_trading_cycles(market: &Market, priorities: &Priorities, profile: &[Preference]) -> Allocation {
    let n = market.n();
    let mut out = vec![Obj::NULL; n];
    let mut agents: u64 = (0..n).fold(0, |m, a| m | 1 << a);
    let mut objects = ObjSet::real(market.m());
    while agents != 0 {
        let menu = objects.with(Obj::NULL);
        let point: Vec<Obj> = (0..n).map(|a| profile[a].best_in(menu).expect("∅ in menu")).collect();
        let mut cleared = 0u64;
        for a in (0..n).filter(|&a| agents & (1 << a) != 0 && point[a].is_null()) {
            cleared |= 1 << a;
        }
        let succ = |a: usize| match point[a].index() {
            Some(o) => priorities.top_among(o, agents).expect("agents remain"),
            None => a,
        };
        cleared |= cycle_members(n, agents, succ);
        for a in (0..n).filter(|&a| cleared & (1 << a) != 0) {
            out[a] = point[a];
            objects.remove(point[a]);
        }
        agents &= !cleared;
    }
    Allocation(out)
}

/// Agent-proposing deferred acceptance with capacities.
pub fn deferred_acceptance(market: &Market, priorities: &Priorities, profile: &[Preference]) -> Allocation {
    let n = market.n();
    let mut next = vec![0usize; n];
    let mut held: Vec<Vec<usize>> = vec![Vec::new(); market.m()];
    let mut out = vec![Obj::NULL; n];
    let mut free: VecDeque<usize> = (0..n).collect();
    while let Some(a) = free.pop_front() {
        let o = profile[a].order()[next[a]];
        next[a] += 1;
        let Some(i) = o.index() else {
            out[a] = Obj::NULL;
            continue;
        };
        held[i].push(a);
        out[a] = o;
        if held[i].len() > market.capacities()[i] as usize {
            let (worst, _) = held[i]
                .iter()
                .enumerate()
                .max_by_key(|(_, &b)| priorities.rank(i, b))
                .expect("non-empty");
            let loser = held[i].swap_remove(worst);
            out[loser] = Obj::NULL;
            free.push_back(loser);
        }
    }
    Allocation(out)
}

/// Immediate-acceptance (Boston): round `k` considers each unassigned agent's
/// `k`-th choice; acceptances are final.
pub fn boston(market: &Market, priorities: &Priorities, profile: &[Preference]) -> Allocation {
    let n = market.n();
    let mut seats = market.capacities().to_vec();
    let mut out: Vec<Option<Obj>> = vec![None; n];
    for k in 0..=market.m() {
        let mut applicants: Vec<Vec<usize>> = vec![Vec::new(); market.m()];
        for a in 0..n {
            if out[a].is_some() {
                continue;
            }
            match profile[a].order()[k].index() {
                Some(i) => applicants[i].push(a),
                None => out[a] = Some(Obj::NULL),
            }
        }
        for (i, list) in applicants.iter_mut().enumerate() {
            list.sort_by_key(|&a| priorities.rank(i, a));
            for &a in list.iter().take(seats[i] as usize) {
                out[a] = Some(Obj::new(i));
            }
            seats[i] = seats[i].saturating_sub(list.len() as u32);
        }
    }
    Allocation(out.into_iter().map(|o| o.unwrap_or(Obj::NULL)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn o(i: usize) -> Obj {
        Obj::new(i)
    }

    fn pref(m: usize, order: &[usize]) -> Preference {
        Preference::acceptable(m, order).unwrap()
    }

    #[test]
    fn ttc_two_agent_swap() {
        let market = Market::new(2, 2);
        let pri = Priorities::new(2, vec![vec![0, 1], vec![1, 0]]).unwrap();
        let profile = vec![pref(2, &[1]), pref(2, &[0])];
        assert_eq!(top_trading_cycles(&market, &pri, &profile).0, vec![o(1), o(0)]);
    }

    #[test]
    fn sd_scores_order() {
        let market = Market::new(2, 2);
        let profile = vec![pref(2, &[0, 1]), pref(2, &[0, 1])];
        assert_eq!(serial_dictatorship(&market, &[0, 1], &profile).0, vec![o(0), o(1)]);
    }

    #[test]
    fn distinct_tops_everyone_gets_top() {
        let market = Market::new(3, 3);
        let pri = Priorities::new(3, vec![vec![0, 1, 2], vec![1, 0, 2], vec![2, 0, 1]]).unwrap();
        let profile = vec![pref(3, &[0]), pref(3, &[1]), pref(3, &[2])];
        let top = vec![o(0), o(1), o(2)];
        assert_eq!(top_trading_cycles(&market, &pri, &profile).0, top);
        assert_eq!(deferred_acceptance(&market, &pri, &profile).0, top);
        assert_eq!(serial_dictatorship(&market, &[2, 1, 0], &profile).0, top);
        assert_eq!(boston(&market, &pri, &profile).0, top);
    }

    #[test]
    fn truncation_at_null() {
        let market = Market::new(2, 2);
        let pri = Priorities::new(2, vec![vec![0, 1], vec![0, 1]]).unwrap();
        // a2 finds only o1 acceptable and loses it.
        let a2 = Preference::from_indices(2, &[Some(0), None]).unwrap();
        let profile = vec![pref(2, &[0, 1]), a2];
        for alloc in [
            deferred_acceptance(&market, &pri, &profile),
            boston(&market, &pri, &profile),
            top_trading_cycles(&market, &pri, &profile),
            serial_dictatorship(&market, &[0, 1], &profile),
        ] {
            assert_eq!(alloc.0, vec![o(0), Obj::NULL]);
        }
    }

    #[test]
    fn da_with_capacity_two() {
        let market = Market::with_labels(
            vec!["a".into(), "b".into(), "c".into()],
            vec![("x".into(), 2), ("y".into(), 1)],
            crate::model::Domain::Full,
        )
        .unwrap();
        let pri = Priorities::new(3, vec![vec![2, 1, 0], vec![0, 1, 2]]).unwrap();
        let profile = vec![pref(2, &[0, 1]), pref(2, &[0, 1]), pref(2, &[0, 1])];
        assert_eq!(deferred_acceptance(&market, &pri, &profile).0, vec![o(1), o(0), o(0)]);
        assert_eq!(boston(&market, &pri, &profile).0, vec![o(1), o(0), o(0)]);
    }
}
