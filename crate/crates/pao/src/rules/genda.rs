use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Allocation, Market, Obj, ObjSet, Preference, Priorities};

/// `Ψ(μ, μ')`: resolves a tentative allocation against new proposals.
///
/// Implementations must satisfy `Ψ(μ,μ')(a) ∈ {∅, μ(a), μ'(a)}` for every agent.
pub trait UpdateFunction: Send + Sync {
    fn update(&self, tentative: &[Obj], proposals: &[Obj]) -> Vec<Obj>;

    fn name(&self) -> &str {
        "psi"
    }
}

/// Verifies the `{∅, μ(a), μ'(a)}` restriction.
pub fn check_update(tentative: &[Obj], proposals: &[Obj], result: &[Obj]) -> Result<()> {
    if result.len() != tentative.len() {
        return Err(Error::ContractViolation {
            agent: result.len().min(tentative.len()),
            detail: format!("returned {} assignments for {} agents", result.len(), tentative.len()),
        });
    }
    for (a, &r) in result.iter().enumerate() {
        if !(r.is_null() || r == tentative[a] || r == proposals[a]) {
            return Err(Error::ContractViolation {
                agent: a,
                detail: format!("assigned {r}, which is neither ∅, the held {} nor the proposed {}", tentative[a], proposals[a]),
            });
        }
    }
    Ok(())
}

/// Agent's live item: her proposal if she made one, else what she holds.
pub fn current_items(tentative: &[Obj], proposals: &[Obj]) -> Vec<Obj> {
    tentative.iter().zip(proposals).map(|(&t, &p)| if p.is_null() { t } else { p }).collect()
}

/// Agents whose live item was replaced by `∅`.
pub fn rejected_agents(current: &[Obj], result: &[Obj]) -> Vec<bool> {
    current.iter().zip(result).map(|(c, r)| r.is_null() && !c.is_null()).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GendaRun {
    pub allocation: Allocation,
    pub steps: usize,
    /// Per agent, the objects she was rejected from, in order.
    pub rejections: Vec<Vec<Obj>>,
}

/// Runs the generalized DA procedure driven by `psi`.
///
/// Step 1 resolves everyone's top choice against the empty allocation. At each
/// later step, the agents rejected in the previous step propose to their
/// next-ranked object; the procedure stops at the first step with no rejection.
pub fn run_generalized_da(psi: &dyn UpdateFunction, market: &Market, profile: &[Preference]) -> Result<GendaRun> {
    market.check_profile(profile)?;
    let n = market.n();
    let guard = n * (market.m() + 1);
    let mut next = vec![1usize; n];
    let mut rejections = vec![Vec::new(); n];
    let mut tentative = vec![Obj::NULL; n];
    let mut proposals: Vec<Obj> = profile.iter().map(Preference::top).collect();
    let mut steps = 0;
    loop {
        steps += 1;
        let result = psi.update(&tentative, &proposals);
        check_update(&tentative, &proposals, &result)?;
        let current = current_items(&tentative, &proposals);
        let rejected = rejected_agents(&current, &result);
        if !rejected.iter().any(|&r| r) {
            let allocation = Allocation(result);
            allocation.validate(market)?;
            return Ok(GendaRun { allocation, steps, rejections });
        }
        if steps >= guard {
            return Err(Error::Divergence { steps });
        }
        proposals = vec![Obj::NULL; n];
        for a in (0..n).filter(|&a| rejected[a]) {
            rejections[a].push(current[a]);
            proposals[a] = profile[a].order()[next[a]];
            next[a] += 1;
        }
        tentative = result;
    }
}

/// Gale-Shapley: each object keeps its highest-priority applicants up to capacity.
#[derive(Clone, Debug)]
pub struct DaPsi {
    pub priorities: Priorities,
    pub capacities: Vec<u32>,
}

impl UpdateFunction for DaPsi {
    fn update(&self, tentative: &[Obj], proposals: &[Obj]) -> Vec<Obj> {
        let current = current_items(tentative, proposals);
        let mut result = vec![Obj::NULL; current.len()];
        for (o, &cap) in self.capacities.iter().enumerate() {
            let obj = Obj::new(o);
            let mut applicants: Vec<usize> = (0..current.len()).filter(|&a| current[a] == obj).collect();
            applicants.sort_by_key(|&a| self.priorities.rank(o, a));
            for &a in applicants.iter().take(cap as usize) {
                result[a] = obj;
            }
        }
        result
    }

    fn name(&self) -> &str {
        "da"
    }
}

/// Boston: held seats are final; proposers fill remaining seats by priority.
#[derive(Clone, Debug)]
pub struct BostonPsi {
    pub priorities: Priorities,
    pub capacities: Vec<u32>,
}

impl UpdateFunction for BostonPsi {
    fn update(&self, tentative: &[Obj], proposals: &[Obj]) -> Vec<Obj> {
        let n = tentative.len();
        let mut result = vec![Obj::NULL; n];
        for (o, &cap) in self.capacities.iter().enumerate() {
            let obj = Obj::new(o);
            let holders: Vec<usize> = (0..n).filter(|&a| proposals[a].is_null() && tentative[a] == obj).collect();
            for &a in &holders {
                result[a] = obj;
            }
            let free = (cap as usize).saturating_sub(holders.len());
            let mut applicants: Vec<usize> = (0..n).filter(|&a| proposals[a] == obj).collect();
            applicants.sort_by_key(|&a| self.priorities.rank(o, a));
            for &a in applicants.iter().take(free) {
                result[a] = obj;
            }
        }
        result
    }

    fn name(&self) -> &str {
        "boston"
    }
}

/// Top trading cycles as an update function (unit capacities).
///
/// Every agent points at her live item; the pointing rounds are replayed from
/// scratch, clearing all cycles of a round at once. Replay stops at the first
/// round in which some agent points at an object already cleared: those agents
/// are rejected, everyone else not yet in a cycle keeps pointing.
#[derive(Clone, Debug)]
pub struct TtcPsi {
    pub priorities: Priorities,
}

impl UpdateFunction for TtcPsi {
    fn update(&self, tentative: &[Obj], proposals: &[Obj]) -> Vec<Obj> {
        let c = current_items(tentative, proposals);
        let n = c.len();
        let mut result = vec![Obj::NULL; n];
        let mut active: u64 = (0..n).filter(|&a| !c[a].is_null()).fold(0, |m, a| m | 1 << a);
        let mut remaining = ObjSet::real(self.priorities.m());
        while active != 0 {
            if (0..n).any(|a| active & (1 << a) != 0 && !remaining.contains(c[a])) {
                break;
            }
            let succ = |a: usize| {
                let o = c[a].index().expect("active agents point at real objects");
                self.priorities.top_among(o, active).expect("active set is non-empty")
            };
            let cycles = cycle_members(n, active, succ);
            for a in (0..n).filter(|&a| cycles & (1 << a) != 0) {
                result[a] = c[a];
                remaining.remove(c[a]);
            }
            active &= !cycles;
        }
        for a in (0..n).filter(|&a| active & (1 << a) != 0) {
            if remaining.contains(c[a]) {
                result[a] = c[a];
            }
        }
        result
    }

    fn name(&self) -> &str {
        "ttc"
    }
}

/// Agents lying on a cycle of the functional graph `succ` restricted to `active`.
pub(crate) fn cycle_members(n: usize, active: u64, succ: impl Fn(usize) -> usize) -> u64 {
    // 0 = unvisited, 1 = on current walk, 2 = done
    let mut state = vec![0u8; n];
    let mut on_cycle = 0u64;
    for start in (0..n).filter(|&a| active & (1 << a) != 0) {
        if state[start] != 0 {
            continue;
        }
        let mut path = Vec::new();
        let mut a = start;
        while state[a] == 0 {
            state[a] = 1;
            path.push(a);
            a = succ(a);
        }
        if state[a] == 1 {
            let from = path.iter().position(|&x| x == a).expect("node on current walk");
            for &x in &path[from..] {
                on_cycle |= 1 << x;
            }
        }
        for &x in &path {
            state[x] = 2;
        }
    }
    on_cycle
}

#[cfg(test)]
mod tests {
    use super::*;

    fn o(i: usize) -> Obj {
        Obj::new(i)
    }

    struct AcceptAll;
    impl UpdateFunction for AcceptAll {
        fn update(&self, tentative: &[Obj], proposals: &[Obj]) -> Vec<Obj> {
            current_items(tentative, proposals)
        }
    }

    struct Rogue;
    impl UpdateFunction for Rogue {
        fn update(&self, tentative: &[Obj], _proposals: &[Obj]) -> Vec<Obj> {
            vec![o(1); tentative.len()]
        }
    }

    struct RejectForever;
    impl UpdateFunction for RejectForever {
        fn update(&self, tentative: &[Obj], proposals: &[Obj]) -> Vec<Obj> {
            // Rejects every real item but never touches ∅; a conforming psi
            // still terminates once agents reach ∅.
            let _ = proposals;
            vec![Obj::NULL; tentative.len()]
        }
    }

    fn pref(m: usize, order: &[usize]) -> Preference {
        Preference::acceptable(m, order).unwrap()
    }

    #[test]
    fn accept_all_distinct_tops_one_step() {
        let market = Market::new(3, 3);
        let profile = vec![pref(3, &[0]), pref(3, &[1]), pref(3, &[2])];
        let run = run_generalized_da(&AcceptAll, &market, &profile).unwrap();
        assert_eq!(run.allocation.0, vec![o(0), o(1), o(2)]);
        assert_eq!(run.steps, 1);
    }

    #[test]
    fn da_psi_rejection_chain() {
        let market = Market::new(2, 2);
        let psi = DaPsi { priorities: Priorities::new(2, vec![vec![0, 1], vec![0, 1]]).unwrap(), capacities: vec![1, 1] };
        let profile = vec![pref(2, &[0, 1]), pref(2, &[0, 1])];
        let run = run_generalized_da(&psi, &market, &profile).unwrap();
        assert_eq!(run.allocation.0, vec![o(0), o(1)]);
        assert_eq!(run.rejections, vec![vec![], vec![o(0)]]);
        let boston = BostonPsi { priorities: psi.priorities.clone(), capacities: vec![1, 1] };
        assert_eq!(run_generalized_da(&boston, &market, &profile).unwrap().allocation, run.allocation);
    }

    #[test]
    fn contract_violation_names_agent() {
        let market = Market::new(2, 2);
        let profile = vec![pref(2, &[0, 1]), pref(2, &[0, 1])];
        let err = run_generalized_da(&Rogue, &market, &profile).unwrap_err();
        assert!(matches!(err, Error::ContractViolation { agent: 0, .. }));
    }

    #[test]
    fn reject_everything_ends_at_null() {
        let market = Market::new(2, 2);
        let profile = vec![pref(2, &[0, 1]), pref(2, &[1, 0])];
        let run = run_generalized_da(&RejectForever, &market, &profile).unwrap();
        assert_eq!(run.allocation, Allocation::unmatched(2));
        assert_eq!(run.rejections[0], vec![o(0), o(1)]);
        assert!(run.steps <= 2 * 3);
    }

    #[test]
    fn ttc_psi_swap() {
        let market = Market::new(2, 2);
        let psi = TtcPsi { priorities: Priorities::new(2, vec![vec![0, 1], vec![1, 0]]).unwrap() };
        let profile = vec![pref(2, &[1, 0]), pref(2, &[0, 1])];
        let run = run_generalized_da(&psi, &market, &profile).unwrap();
        assert_eq!(run.allocation.0, vec![o(1), o(0)]);
    }

    #[test]
    fn cycles_found() {
        // 0->1->2->0, 3->0
        let succ = |a: usize| [1, 2, 0, 0][a];
        assert_eq!(cycle_members(4, 0b1111, succ), 0b0111);
        assert_eq!(cycle_members(2, 0b11, |a| a), 0b11);
    }
}
