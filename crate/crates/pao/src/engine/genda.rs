use std::sync::Arc;

use super::{MenuFunction, Step};
use crate::error::{Error, Result};
use crate::model::{CollectiveHistory, Market, Obj, ObjSet};
use crate::rules::{check_update, current_items, rejected_agents, Rule, UpdateFunction};

/// `𝕊*` for an update function: everyone starts with the full menu; agents
/// whose pick `Ψ` rejects get everything they have not yet picked.
///
/// Stateless: each call replays the history period by period through `Ψ`.
#[derive(Clone)]
pub struct GendaMenus {
    market: Market,
    psi: Arc<dyn UpdateFunction>,
    name: String,
}

impl std::fmt::Debug for GendaMenus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GendaMenus").field("name", &self.name).finish()
    }
}

/// Where a replay stands: tentative allocation and who must pick next.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GendaState {
    pub tentative: Vec<Obj>,
    pub rejected: Vec<bool>,
    pub periods: usize,
}

impl GendaMenus {
    pub fn new(market: Market, psi: Arc<dyn UpdateFunction>) -> GendaMenus {
        let name = format!("genda:{}", psi.name());
        GendaMenus { market, psi, name }
    }

    pub fn for_rule(rule: &Rule) -> Result<GendaMenus> {
        let psi = rule
            .update_function()
            .ok_or_else(|| Error::Unsupported(format!("rule {} has no update function", rule.name())))?;
        Ok(GendaMenus { market: rule.market().clone(), psi, name: format!("genda:{}", rule.name()) })
    }

    /// Replays `h`; errors if `h` could not have been produced by this menu function.
    pub fn replay(&self, h: &CollectiveHistory) -> Result<GendaState> {
        let n = self.market.n();
        if h.n() != n {
            return Err(Error::Validation(format!("history for {} agents, market has {n}", h.n())));
        }
        let mut used = vec![0usize; n];
        let mut tentative = vec![Obj::NULL; n];
        let mut rejected = vec![true; n];
        let mut periods = 0;
        loop {
            let movers: Vec<usize> = (0..n).filter(|&a| rejected[a]).collect();
            let ready = movers.iter().filter(|&&a| used[a] < h.agent(a).len()).count();
            if ready == 0 {
                break;
            }
            if ready != movers.len() {
                return Err(Error::MenuContract(format!("period {} of the history is incomplete", periods + 1)));
            }
            let mut proposals = vec![Obj::NULL; n];
            for &a in &movers {
                proposals[a] = h.agent(a).offers[used[a]].choice;
                used[a] += 1;
            }
            let result = self.psi.update(&tentative, &proposals);
            check_update(&tentative, &proposals, &result)?;
            let current = current_items(&tentative, &proposals);
            rejected = rejected_agents(&current, &result);
            tentative = result;
            periods += 1;
        }
        if let Some(a) = (0..n).find(|&a| used[a] != h.agent(a).len()) {
            return Err(Error::MenuContract(format!("agent {a} has picks this menu function never asked for")));
        }
        Ok(GendaState { tentative, rejected, periods })
    }
}

impl MenuFunction for GendaMenus {
    fn name(&self) -> &str {
        &self.name
    }

    fn market(&self) -> &Market {
        &self.market
    }

    fn menus(&self, h: &CollectiveHistory) -> Result<Step> {
        let universe = self.market.universe();
        if h.is_initial() {
            return Ok(Step::Menus(vec![universe; self.market.n()]));
        }
        let state = self.replay(h)?;
        Ok(Step::Menus(
            (0..self.market.n())
                .map(|a| if state.rejected[a] { universe.minus(h.agent(a).chosen_set()) } else { ObjSet::EMPTY })
                .collect(),
        ))
    }
}
