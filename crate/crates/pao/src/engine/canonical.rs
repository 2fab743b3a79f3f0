use std::sync::Arc;

use super::{MenuFunction, Step};
use crate::error::{Error, Result};
use crate::model::{CollectiveHistory, Market, ObjSet, PrefSet};
use crate::table::{Image, RuleTable};

/// The canonical PAO mechanism of a rule, computed from its outcome table.
///
/// After `h^A`, agent `i` is re-asked exactly when her last pick is outside
/// `μ_i^φ(h^A)`, and then gets `μ_i^φ(h^A)` as her menu. Once `|φ(h^A)| = 1`
/// this forces any agent still off the determined allocation onto it through
/// a singleton menu. The `literal` variant instead stops as soon as
/// `|φ(h^A)| = 1`.
#[derive(Clone, Debug)]
pub struct CanonicalMenus {
    table: Arc<RuleTable>,
    literal: bool,
    name: String,
}

impl CanonicalMenus {
    pub fn new(table: Arc<RuleTable>) -> CanonicalMenus {
        let name = format!("canonical:{}", table.rule().name());
        CanonicalMenus { table, literal: false, name }
    }

    pub fn literal(table: Arc<RuleTable>) -> CanonicalMenus {
        let name = format!("canonical-literal:{}", table.rule().name());
        CanonicalMenus { table, literal: true, name }
    }

    pub fn table(&self) -> &RuleTable {
        &self.table
    }

    /// Per-agent consistent sets `P(h_i)`; their product is `P(h^A)`.
    pub fn consistent_sets(&self, h: &CollectiveHistory) -> Result<Vec<PrefSet>> {
        let space = self.table.space();
        h.agents
            .iter()
            .enumerate()
            .map(|(a, hi)| {
                let s = space.consistent_set(hi)?;
                if s.is_empty() {
                    return Err(Error::MenuContract(format!("agent {a}'s history is consistent with no admissible preference")));
                }
                Ok(s)
            })
            .collect()
    }

    /// `φ(h^A)` and `μ_i^φ(h^A)`.
    pub fn image(&self, h: &CollectiveHistory) -> Result<Arc<Image>> {
        if h.n() != self.table.n() {
            return Err(Error::Validation(format!("history for {} agents, rule has {}", h.n(), self.table.n())));
        }
        self.table.image(&self.consistent_sets(h)?)
    }
}

impl MenuFunction for CanonicalMenus {
    fn name(&self) -> &str {
        &self.name
    }

    fn market(&self) -> &Market {
        self.table.rule().market()
    }

    fn menus(&self, h: &CollectiveHistory) -> Result<Step> {
        let image = self.image(h)?;
        if h.is_initial() {
            return Ok(Step::Menus(image.per_agent.clone()));
        }
        if self.literal && image.is_determined() {
            return Ok(Step::Menus(vec![ObjSet::EMPTY; h.n()]));
        }
        let menus: Vec<ObjSet> = (0..h.n())
            .map(|a| match h.agent(a).last_choice() {
                Some(last) if !image.per_agent[a].contains(last) => image.per_agent[a],
                _ => ObjSet::EMPTY,
            })
            .collect();
        if !image.is_determined() && menus.iter().all(|m| m.is_empty()) {
            return Ok(Step::Gridlock { outcomes: image.allocations.clone() });
        }
        Ok(Step::Menus(menus))
    }
}

/// `|φ(h^A)| > 1` while every agent's last pick is still feasible.
pub fn detect_gridlock(canonical: &CanonicalMenus, h: &CollectiveHistory) -> Result<bool> {
    if h.is_initial() {
        return Ok(false);
    }
    let image = canonical.image(h)?;
    Ok(!image.is_determined()
        && (0..h.n()).all(|a| h.agent(a).last_choice().is_some_and(|c| image.per_agent[a].contains(c))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::run_straightforward;
    use crate::model::{Budget, Obj, Preference, Priorities};
    use crate::rules::Rule;

    fn canon(rule: &Rule) -> CanonicalMenus {
        CanonicalMenus::new(Arc::new(RuleTable::new(rule, Budget::default()).unwrap()))
    }

    #[test]
    fn phi_star_gridlocks_after_o1() {
        let c = canon(&Rule::phi_star());
        let mut h = CollectiveHistory::empty(1);
        let Step::Menus(m) = c.menus(&h).unwrap() else { panic!() };
        assert_eq!(m[0], [Obj::new(0), Obj::new(2), Obj::NULL].into_iter().collect());
        h.agents[0].push(m[0], Obj::new(0)).unwrap();
        assert!(detect_gridlock(&c, &h).unwrap());
        assert!(matches!(c.menus(&h).unwrap(), Step::Gridlock { .. }));
    }

    #[test]
    fn da_rejected_agent_gets_remaining_feasible() {
        let market = crate::model::Market::new(2, 2);
        let da = Rule::da(market, Priorities::new(2, vec![vec![0, 1], vec![0, 1]]).unwrap()).unwrap();
        let c = canon(&da);
        let p = Preference::acceptable(2, &[0, 1]).unwrap();
        let tr = run_straightforward(&c, &[p.clone(), p]).unwrap();
        assert_eq!(tr.periods[1].menus[1], [Obj::new(1), Obj::NULL].into_iter().collect());
        assert_eq!(tr.allocation.unwrap().0, vec![Obj::new(0), Obj::new(1)]);
    }

    #[test]
    fn determined_image_never_gridlocks() {
        let market = crate::model::Market::new(2, 2);
        let sd = Rule::sd(market, &[2.0, 1.0]).unwrap();
        let c = canon(&sd);
        let space = c.table().space().clone();
        for i in 0..space.len() {
            for j in 0..space.len() {
                let tr = run_straightforward(&c, &space.profile(&[i, j])).unwrap();
                assert!(!tr.is_gridlock());
                assert!(!detect_gridlock(&c, &tr.history).unwrap());
            }
        }
    }
}
