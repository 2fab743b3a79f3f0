//! Pick-an-object execution: menu functions and the period loop.

mod adapter;
mod canonical;
mod genda;
mod incentives;

use serde::{Deserialize, Serialize};

pub use adapter::{osp_to_pao, OspAdapter};
pub use canonical::{detect_gridlock, CanonicalMenus};
pub use genda::GendaMenus;
pub use incentives::{check_expost_incentives, decision_nodes, probe_uniqueness, reverify_pao_witness};

use crate::error::{Error, Result};
use crate::model::{Allocation, CollectiveHistory, Market, Obj, ObjSet, Preference};
use crate::strategies::{all_straightforward, Strategy};

/// What a menu function says after a collective history.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Step {
    /// One menu per agent; an empty set means the agent is not asked.
    Menus(Vec<ObjSet>),
    /// More information is needed but no agent's last pick can be ruled out.
    Gridlock { outcomes: Vec<Allocation> },
}

/// `𝕊`: collective history to next menus.
pub trait MenuFunction: Send + Sync {
    fn name(&self) -> &str;
    fn market(&self) -> &Market;
    fn menus(&self, h: &CollectiveHistory) -> Result<Step>;
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodRecord {
    pub t: usize,
    pub active: Vec<usize>,
    pub menus: Vec<ObjSet>,
    pub choices: Vec<Option<Obj>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum Termination {
    AllEmptyMenus,
    Gridlock { period: usize, outcomes: Vec<Allocation> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaoTranscript {
    pub engine: String,
    pub periods: Vec<PeriodRecord>,
    pub history: CollectiveHistory,
    pub allocation: Option<Allocation>,
    pub termination: Termination,
}

impl PaoTranscript {
    pub fn is_gridlock(&self) -> bool {
        matches!(self.termination, Termination::Gridlock { .. })
    }

    /// The final allocation, or an error naming the gridlock.
    pub fn outcome(&self) -> Result<&Allocation> {
        match (&self.allocation, &self.termination) {
            (Some(a), _) => Ok(a),
            (None, Termination::Gridlock { period, outcomes }) => Err(Error::Precondition(format!(
                "informational gridlock in period {period} with {} candidate allocations",
                outcomes.len()
            ))),
            (None, _) => Err(Error::Validation("transcript has no allocation".into())),
        }
    }
}

/// Periods are bounded by `n·(m+1)`: each active agent's menu loses her pick.
pub fn period_guard(market: &Market) -> usize {
    market.n() * (market.m() + 1)
}

pub fn run_pao(menus: &dyn MenuFunction, strategies: &mut [Box<dyn Strategy>]) -> Result<PaoTranscript> {
    run_pao_from(menus, CollectiveHistory::empty(menus.market().n()), strategies)
}

/// Runs the loop starting after `start`, which must itself be a history of `menus`.
pub fn run_pao_from(
    menus: &dyn MenuFunction,
    start: CollectiveHistory,
    strategies: &mut [Box<dyn Strategy>],
) -> Result<PaoTranscript> {
    let market = menus.market();
    let n = market.n();
    if strategies.len() != n || start.n() != n {
        return Err(Error::Validation(format!("{} strategies and {} histories for {n} agents", strategies.len(), start.n())));
    }
    let guard = period_guard(market);
    let mut h = start;
    let mut periods = Vec::new();
    let mut t = h.agents.iter().map(|x| x.len()).max().unwrap_or(0);
    loop {
        t += 1;
        let offered = match menus.menus(&h)? {
            Step::Gridlock { outcomes } => {
                return Ok(PaoTranscript {
                    engine: menus.name().into(),
                    periods,
                    history: h,
                    allocation: None,
                    termination: Termination::Gridlock { period: t, outcomes },
                })
            }
            Step::Menus(m) => m,
        };
        check_menus(market, &h, &offered)?;
        if offered.iter().all(|m| m.is_empty()) {
            let allocation = Allocation(h.last_choices().into_iter().map(|c| c.unwrap_or(Obj::NULL)).collect());
            allocation
                .validate(market)
                .map_err(|e| Error::MenuContract(format!("menu function {} ended on an infeasible allocation: {e}", menus.name())))?;
            return Ok(PaoTranscript {
                engine: menus.name().into(),
                periods,
                history: h,
                allocation: Some(allocation),
                termination: Termination::AllEmptyMenus,
            });
        }
        if t > guard {
            return Err(Error::Divergence { steps: t });
        }
        let mut choices = vec![None; n];
        for a in (0..n).filter(|&a| !offered[a].is_empty()) {
            let pick = strategies[a]
                .choose(h.agent(a), offered[a])
                .map_err(|e| Error::InvalidChoice { agent: a, period: t, detail: e.to_string() })?;
            if !offered[a].contains(pick) {
                return Err(Error::InvalidChoice {
                    agent: a,
                    period: t,
                    detail: format!("picked {pick}, menu is {:?}", offered[a]),
                });
            }
            choices[a] = Some(pick);
        }
        for a in 0..n {
            if let Some(c) = choices[a] {
                h.agents[a].push(offered[a], c)?;
            }
        }
        periods.push(PeriodRecord {
            t,
            active: (0..n).filter(|&a| choices[a].is_some()).collect(),
            menus: offered,
            choices,
        });
    }
}

/// Initial menus non-empty; later menus inside the previous menu minus the previous pick.
pub fn check_menus(market: &Market, h: &CollectiveHistory, menus: &[ObjSet]) -> Result<()> {
    if menus.len() != market.n() {
        return Err(Error::MenuContract(format!("{} menus for {} agents", menus.len(), market.n())));
    }
    let universe = market.universe();
    for (a, &menu) in menus.iter().enumerate() {
        if !menu.is_subset(universe) {
            return Err(Error::MenuContract(format!("agent {a}: menu {menu:?} leaves the object universe")));
        }
        let own = h.agent(a);
        match own.offers.last() {
            None if h.is_initial() && menu.is_empty() => {
                return Err(Error::MenuContract(format!("agent {a}: initial menu is empty")));
            }
            None if !menu.is_empty() && !h.is_initial() => {
                return Err(Error::MenuContract(format!("agent {a}: first menu issued after the first period")));
            }
            Some(last) if !menu.is_subset(last.menu.without(last.choice)) => {
                return Err(Error::MenuContract(format!(
                    "agent {a}: menu {menu:?} is not inside {:?} minus {}",
                    last.menu, last.choice
                )));
            }
            _ => {}
        }
    }
    Ok(())
}

/// Straightforward play of `profile` through `menus`.
pub fn run_straightforward(menus: &dyn MenuFunction, profile: &[Preference]) -> Result<PaoTranscript> {
    menus.market().check_profile(profile)?;
    run_pao(menus, &mut all_straightforward(profile))
}

/// Transcript as JSON lines: one `{t, active, menus, choices}` object per period,
/// then a closing `{allocation, termination}` record.
pub fn transcript_jsonl(tr: &PaoTranscript, market: &Market) -> String {
    let label_set = |s: &ObjSet| s.iter().map(|o| market.label(o).to_string()).collect::<Vec<_>>();
    let mut out = String::new();
    for p in &tr.periods {
        let line = serde_json::json!({
            "t": p.t,
            "active": p.active.iter().map(|&a| market.agent_labels()[a].clone()).collect::<Vec<_>>(),
            "menus": p.menus.iter().map(label_set).collect::<Vec<_>>(),
            "choices": p.choices.iter().map(|c| c.map(|o| market.label(o).to_string())).collect::<Vec<_>>(),
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    let close = serde_json::json!({
        "engine": tr.engine,
        "allocation": tr.allocation.as_ref().map(|a| a.labels(market)),
        "termination": tr.termination,
    });
    out.push_str(&close.to_string());
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Budget, Priorities};
    use crate::rules::Rule;
    use crate::strategies::{scripted, straightforward};
    use std::sync::Arc;

    fn o(i: usize) -> Obj {
        Obj::new(i)
    }

    fn pref(m: usize, order: &[usize]) -> Preference {
        Preference::acceptable(m, order).unwrap()
    }

    #[test]
    fn distinct_tops_one_period() {
        let market = Market::new(3, 3);
        let sd = Rule::sd(market, &[3.0, 2.0, 1.0]).unwrap();
        let canon = CanonicalMenus::new(Arc::new(crate::table::RuleTable::new(&sd, Budget::default()).unwrap()));
        let profile = vec![pref(3, &[0, 1, 2]), pref(3, &[1, 0, 2]), pref(3, &[2, 1, 0])];
        let tr = run_straightforward(&canon, &profile).unwrap();
        assert_eq!(tr.periods.len(), 1);
        assert_eq!(tr.allocation.unwrap().0, vec![o(0), o(1), o(2)]);
    }

    #[test]
    fn sd_conflict_reoffers_remainder() {
        let market = Market::new(2, 2);
        let sd = Rule::sd(market, &[90.0, 50.0]).unwrap();
        let canon = CanonicalMenus::new(Arc::new(crate::table::RuleTable::new(&sd, Budget::default()).unwrap()));
        let profile = vec![pref(2, &[0, 1]), pref(2, &[0, 1])];
        let tr = run_straightforward(&canon, &profile).unwrap();
        assert_eq!(tr.periods[1].menus[1], [o(1), Obj::NULL].into_iter().collect());
        assert!(tr.periods[1].menus[0].is_empty());
        assert_eq!(tr.allocation.unwrap().0, vec![o(0), o(1)]);
    }

    #[test]
    fn invalid_choice_names_period() {
        let market = Market::new(2, 2);
        let da = Rule::da(market, Priorities::new(2, vec![vec![0, 1], vec![0, 1]]).unwrap()).unwrap();
        let genda = GendaMenus::for_rule(&da).unwrap();
        let mut strategies: Vec<Box<dyn Strategy>> =
            vec![Box::new(straightforward(pref(2, &[0, 1]))), Box::new(scripted(vec![o(0), o(0)]))];
        let err = run_pao(&genda, &mut strategies).unwrap_err();
        assert!(matches!(err, Error::InvalidChoice { agent: 1, period: 2, .. }), "{err:?}");
    }

    struct Growing(Market);
    impl MenuFunction for Growing {
        fn name(&self) -> &str {
            "growing"
        }
        fn market(&self) -> &Market {
            &self.0
        }
        fn menus(&self, h: &CollectiveHistory) -> Result<Step> {
            Ok(Step::Menus(vec![if h.agent(0).len() < 2 { self.0.universe() } else { ObjSet::EMPTY }]))
        }
    }

    #[test]
    fn menu_contract_enforced() {
        let g = Growing(Market::new(1, 2));
        let err = run_straightforward(&g, &[pref(2, &[0, 1])]).unwrap_err();
        assert!(matches!(err, Error::MenuContract(_)));
    }

    #[test]
    fn jsonl_has_one_line_per_period_plus_close() {
        let market = Market::new(2, 2);
        let sd = Rule::sd(market.clone(), &[90.0, 50.0]).unwrap();
        let genda = GendaMenus::for_rule(&sd).unwrap();
        let tr = run_straightforward(&genda, &[pref(2, &[0, 1]), pref(2, &[0, 1])]).unwrap();
        let text = transcript_jsonl(&tr, &market);
        assert_eq!(text.lines().count(), tr.periods.len() + 1);
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["t"], 1);
        assert_eq!(first["menus"][0], serde_json::json!(["o1", "o2", "∅"]));
    }
}
