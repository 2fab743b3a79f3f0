//! Agent behaviour in sequential and direct mechanisms.
//!
//! A strategy sees only its own choice history and the menu in front of it.

use rand::seq::IteratorRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChoiceHistory, Market, Obj, ObjSet, Preference};

/// `σ_a`: own history and offered menu to a pick.
pub trait Strategy: Send {
    fn choose(&mut self, own: &ChoiceHistory, menu: ObjSet) -> Result<Obj>;

    /// Whether this strategy picks exactly what the agent's true preference would.
    fn is_truthful(&self) -> bool {
        false
    }
}

/// Picks the best item of each menu under a fixed preference.
#[derive(Clone, Debug)]
pub struct Straightforward {
    pref: Preference,
    truthful: bool,
}

pub fn straightforward(pref: Preference) -> Straightforward {
    Straightforward { pref, truthful: true }
}

/// Plays straightforwardly for `fake` rather than the true preference.
pub fn as_if(fake: Preference) -> Straightforward {
    Straightforward { pref: fake, truthful: false }
}

impl Straightforward {
    pub fn preference(&self) -> &Preference {
        &self.pref
    }
}

impl Strategy for Straightforward {
    fn choose(&mut self, _own: &ChoiceHistory, menu: ObjSet) -> Result<Obj> {
        self.pref.best_in(menu).ok_or_else(|| Error::MenuContract("asked to choose from an empty menu".into()))
    }

    fn is_truthful(&self) -> bool {
        self.truthful
    }
}

/// Replays a fixed sequence of picks, one per menu received.
#[derive(Clone, Debug)]
pub struct Scripted {
    choices: Vec<Obj>,
}

pub fn scripted(choices: Vec<Obj>) -> Scripted {
    Scripted { choices }
}

impl Strategy for Scripted {
    fn choose(&mut self, own: &ChoiceHistory, menu: ObjSet) -> Result<Obj> {
        let k = own.len();
        let pick = *self
            .choices
            .get(k)
            .ok_or_else(|| Error::Validation(format!("script has {} picks, menu number {} requested", self.choices.len(), k + 1)))?;
        if !menu.contains(pick) {
            return Err(Error::Validation(format!("scripted pick {pick} (number {}) is not in menu {menu:?}", k + 1)));
        }
        Ok(pick)
    }
}

/// Uniform pick from each menu, from its own generator.
#[derive(Clone, Debug)]
pub struct SeededRandom {
    rng: ChaCha8Rng,
}

pub fn seeded_random(seed: u64) -> SeededRandom {
    SeededRandom { rng: ChaCha8Rng::seed_from_u64(seed) }
}

impl Strategy for SeededRandom {
    fn choose(&mut self, _own: &ChoiceHistory, menu: ObjSet) -> Result<Obj> {
        menu.iter().choose(&mut self.rng).ok_or_else(|| Error::MenuContract("asked to choose from an empty menu".into()))
    }
}

/// A submitted rank-order list in a direct mechanism.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectReport {
    pub preference: Preference,
}

impl DirectReport {
    pub fn truthful(pref: &Preference) -> DirectReport {
        DirectReport { preference: pref.clone() }
    }

    pub fn is_truthful(&self, truth: &Preference) -> bool {
        self.preference == *truth
    }
}

/// One entry of a strategy script file; objects are named by label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StrategySpec {
    Straightforward,
    AsIf { preference: Vec<String> },
    Scripted { choices: Vec<String> },
    Random { seed: u64 },
}

impl StrategySpec {
    /// `truth` is required for `straightforward`.
    pub fn build(&self, market: &Market, truth: Option<&Preference>) -> Result<Box<dyn Strategy>> {
        Ok(match self {
            StrategySpec::Straightforward => {
                let p = truth.ok_or_else(|| Error::Config("straightforward strategy needs a preference".into()))?;
                Box::new(straightforward(p.clone()))
            }
            StrategySpec::AsIf { preference } => Box::new(as_if(market.parse_preference(preference)?)),
            StrategySpec::Scripted { choices } => {
                Box::new(scripted(choices.iter().map(|c| market.parse_obj(c)).collect::<Result<_>>()?))
            }
            StrategySpec::Random { seed } => Box::new(seeded_random(*seed)),
        })
    }
}

/// Straightforward strategies for a whole profile.
pub fn all_straightforward(profile: &[Preference]) -> Vec<Box<dyn Strategy>> {
    profile.iter().map(|p| Box::new(straightforward(p.clone())) as Box<dyn Strategy>).collect()
}
