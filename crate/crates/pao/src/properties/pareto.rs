use crate::error::{Error, Result};
use crate::model::{Allocation, Budget, Market, Obj, Preference};

/// Brute force: no feasible allocation weakly improves everyone and strictly
/// improves someone.
pub fn check_pareto_efficient(market: &Market, mu: &Allocation, profile: &[Preference], budget: Budget) -> Result<bool> {
    mu.validate(market)?;
    market.check_profile(profile)?;
    for nu in market.feasible_allocations(budget)? {
        let weakly = (0..market.n()).all(|a| profile[a].weakly_prefers(nu.get(a), mu.get(a)));
        let strictly = (0..market.n()).any(|a| profile[a].prefers(nu.get(a), mu.get(a)));
        if weakly && strictly {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Graph test: `μ` is efficient iff no agent prefers an object with a free
/// seat (or `∅`) and there is no cycle of agents each preferring the next
/// one's object.
pub fn is_pareto_efficient(market: &Market, mu: &Allocation, profile: &[Preference]) -> Result<bool> {
    mu.validate(market)?;
    if profile.len() != market.n() {
        return Err(Error::Validation(format!("{} preferences for {} agents", profile.len(), market.n())));
    }
    let n = market.n();
    for a in 0..n {
        let p = &profile[a];
        if p.prefers(Obj::NULL, mu.get(a)) {
            return Ok(false);
        }
        if market.objects().any(|o| mu.holders(o) < market.capacity(o) as usize && p.prefers(o, mu.get(a))) {
            return Ok(false);
        }
    }
    // a -> b when a prefers b's (real) object to her own.
    let edges: Vec<Vec<usize>> = (0..n)
        .map(|a| (0..n).filter(|&b| !mu.get(b).is_null() && profile[a].prefers(mu.get(b), mu.get(a))).collect())
        .collect();
    let mut state = vec![0u8; n];
    fn dfs(a: usize, edges: &[Vec<usize>], state: &mut [u8]) -> bool {
        state[a] = 1;
        for &b in &edges[a] {
            if state[b] == 1 || (state[b] == 0 && dfs(b, edges, state)) {
                return true;
            }
        }
        state[a] = 2;
        false
    }
    Ok(!(0..n).any(|a| state[a] == 0 && dfs(a, &edges, &mut state)))
}
