use serde::{Deserialize, Serialize};

use super::object::{Obj, ObjSet};
use super::preference::Preference;
use crate::error::{Error, Result};

/// One menu offered to an agent and the item she picked from it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MenuOffer {
    pub menu: ObjSet,
    pub choice: Obj,
}

impl MenuOffer {
    pub fn new(menu: ObjSet, choice: Obj) -> Result<MenuOffer> {
        if !menu.contains(choice) {
            return Err(Error::Validation(format!("choice {choice} is not in menu {menu:?}")));
        }
        Ok(MenuOffer { menu, choice })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChoiceHistory {
    pub offers: Vec<MenuOffer>,
}

impl ChoiceHistory {
    pub fn new() -> ChoiceHistory {
        ChoiceHistory::default()
    }

    pub fn from_offers(offers: Vec<MenuOffer>) -> ChoiceHistory {
        ChoiceHistory { offers }
    }

    pub fn push(&mut self, menu: ObjSet, choice: Obj) -> Result<()> {
        self.offers.push(MenuOffer::new(menu, choice)?);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.offers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offers.is_empty()
    }

    /// `→h`, the most recent choice.
    pub fn last_choice(&self) -> Option<Obj> {
        self.offers.last().map(|o| o.choice)
    }

    pub fn last_menu(&self) -> Option<ObjSet> {
        self.offers.last().map(|o| o.menu)
    }

    pub fn choices(&self) -> impl Iterator<Item = Obj> + '_ {
        self.offers.iter().map(|o| o.choice)
    }

    pub fn chosen_set(&self) -> ObjSet {
        self.choices().collect()
    }

    /// True iff `prefix` is a prefix of `self`.
    pub fn is_continuation_of(&self, prefix: &ChoiceHistory) -> bool {
        self.offers.starts_with(&prefix.offers)
    }

    pub(crate) fn check_universe(&self, m: usize) -> Result<()> {
        let allowed = ObjSet::universe(m);
        for o in &self.offers {
            if !o.menu.is_subset(allowed) {
                return Err(Error::UniverseMismatch(format!(
                    "menu {:?} has objects outside a universe of {m}",
                    o.menu
                )));
            }
        }
        Ok(())
    }
}

/// Whether every recorded choice is weakly best within its menu under `pref`.
pub fn is_consistent(pref: &Preference, h: &ChoiceHistory) -> Result<bool> {
    h.check_universe(pref.m())?;
    Ok(h.offers.iter().all(|o| o.menu.iter().all(|x| pref.weakly_prefers(o.choice, x))))
}

/// One choice history per agent.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CollectiveHistory {
    pub agents: Vec<ChoiceHistory>,
}

impl CollectiveHistory {
    pub fn empty(n: usize) -> CollectiveHistory {
        CollectiveHistory { agents: vec![ChoiceHistory::new(); n] }
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn agent(&self, a: usize) -> &ChoiceHistory {
        &self.agents[a]
    }

    pub fn is_initial(&self) -> bool {
        self.agents.iter().all(ChoiceHistory::is_empty)
    }

    pub fn last_choices(&self) -> Vec<Option<Obj>> {
        self.agents.iter().map(ChoiceHistory::last_choice).collect()
    }

    /// Per-agent prefix test.
    pub fn is_continuation_of(&self, prefix: &CollectiveHistory) -> bool {
        self.n() == prefix.n()
            && self.agents.iter().zip(&prefix.agents).all(|(h, p)| h.is_continuation_of(p))
    }
}
