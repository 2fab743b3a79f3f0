//! Equilibrium checks over the whole game tree of a menu function.

use std::collections::VecDeque;
use std::time::Instant;

use rayon::prelude::*;

use super::{run_pao_from, MenuFunction, Step};
use crate::error::{Error, Result};
use crate::model::{Budget, ChoiceHistory, CollectiveHistory, Obj, ObjSet, Preference};
use crate::properties::{Checker, PropertyReport, Witness};
use crate::strategies::{all_straightforward, Strategy};
use crate::table::RuleTable;

/// Every history of the game at which some agent is asked to pick, in
/// breadth-first order. Any pick from any menu is followed.
pub fn decision_nodes(menus: &dyn MenuFunction, budget: Budget) -> Result<Vec<CollectiveHistory>> {
    let mut out = Vec::new();
    let mut queue = VecDeque::from([CollectiveHistory::empty(menus.market().n())]);
    while let Some(h) = queue.pop_front() {
        let Step::Menus(offered) = menus.menus(&h)? else { continue };
        if offered.iter().all(|m| m.is_empty()) {
            continue;
        }
        for picks in choice_vectors(&offered) {
            let mut next = h.clone();
            for (a, pick) in picks.into_iter().enumerate() {
                if let Some(c) = pick {
                    next.agents[a].push(offered[a], c)?;
                }
            }
            queue.push_back(next);
        }
        out.push(h);
        budget.check((out.len() + queue.len()) as u128)?;
    }
    Ok(out)
}

fn choice_vectors(menus: &[ObjSet]) -> Vec<Vec<Option<Obj>>> {
    let mut acc: Vec<Vec<Option<Obj>>> = vec![Vec::new()];
    for &m in menus {
        let options: Vec<Option<Obj>> = if m.is_empty() { vec![None] } else { m.iter().map(Some).collect() };
        acc = acc
            .into_iter()
            .flat_map(|prefix| {
                options.iter().map(move |&o| {
                    let mut v = prefix.clone();
                    v.push(o);
                    v
                })
            })
            .collect();
    }
    acc
}

fn continuation(menus: &dyn MenuFunction, h: &CollectiveHistory, mut strategies: Vec<Box<dyn Strategy>>) -> Result<Vec<Obj>> {
    let tr = run_pao_from(menus, h.clone(), &mut strategies)?;
    Ok(tr.outcome()?.0.clone())
}

/// Perfect ex-post equilibrium of straightforward play, against as-if deviations.
///
/// At every decision node, for every profile `P`, agent `a` and preference
/// `P'_a`: continuing straightforwardly under `P` must be weakly better for
/// `a` (under `P_a`) than acting as if `P'_a` while others stay straightforward.
pub fn check_expost_incentives(table: &RuleTable, menus: &dyn MenuFunction) -> Result<PropertyReport> {
    let started = Instant::now();
    let nodes = decision_nodes(menus, table.budget())?;
    let count = table.profile_count();
    table.budget().check(nodes.len() as u128 * count as u128)?;
    let found = nodes
        .par_iter()
        .map(|h| -> Result<Option<Witness>> {
            let outcomes = (0..count)
                .map(|q| continuation(menus, h, all_straightforward(&table.profile(q))))
                .collect::<Result<Vec<_>>>()?;
            for p in 0..count {
                let ids = table.ids(p);
                for a in 0..table.n() {
                    let truth = table.space().get(ids[a]);
                    let got = outcomes[p][a];
                    for q in 0..table.space().len() {
                        let dev = outcomes[table.replace(p, a, q)][a];
                        if truth.prefers(dev, got) {
                            return Ok(Some(Witness::ExPost {
                                history: h.clone(),
                                profile: table.profile(p),
                                agent: a,
                                as_if: table.space().get(q).clone(),
                                straightforward: got,
                                deviation: dev,
                            }));
                        }
                    }
                }
            }
            Ok(None)
        })
        .find_first(|r| !matches!(r, Ok(None)));
    let witness = match found {
        Some(Err(e)) => return Err(e),
        Some(Ok(w)) => w,
        None => None,
    };
    let mut report = PropertyReport::from_search(
        "ex-post-incentives",
        table.rule(),
        witness,
        (nodes.len() * count) as u64,
        started,
    );
    report.rule = format!("{} via {}", table.rule().name(), menus.name());
    Ok(report)
}

/// Picks `first` once, then `∅` whenever asked.
struct ThenNull {
    first: Option<Obj>,
}

impl Strategy for ThenNull {
    fn choose(&mut self, _own: &ChoiceHistory, menu: ObjSet) -> Result<Obj> {
        if let Some(o) = self.first.take() {
            return Ok(o);
        }
        if menu.contains(Obj::NULL) {
            Ok(Obj::NULL)
        } else {
            Err(Error::Precondition(format!("menu {menu:?} has no ∅ to fall back on")))
        }
    }
}

/// The ranking that picks `h`'s choices in order, then `∅`, then the rest.
fn choices_then_null(h: &ChoiceHistory, m: usize) -> Result<Preference> {
    let mut order: Vec<Obj> = Vec::new();
    for c in h.choices().chain(std::iter::once(Obj::NULL)) {
        if !order.contains(&c) {
            order.push(c);
        }
    }
    Preference::from_indices(m, &order.iter().map(|o| o.index()).collect::<Vec<_>>())
}

/// Punishment probe for the uniqueness of straightforward play.
///
/// At every decision node, every agent `a*` with a menu and every item `o` in
/// it: if `a*` picks `o` and every other pick from then on is `∅`, `a*` must
/// end with `o`, so any pick other than her top is strictly worse for some
/// consistent continuation. The rule is also evaluated at the profile that
/// ranks each agent's picks first and `∅` next, where `a*` must get `o`.
pub fn probe_uniqueness(table: &RuleTable, menus: &dyn MenuFunction) -> Result<PropertyReport> {
    let started = Instant::now();
    let rule = table.rule();
    if !rule.is_gale_shapley() {
        let checker = Checker::from_table(std::sync::Arc::new(RuleTable::new(rule, table.budget())?));
        for p in ["individually-rational", "strategy-proof", "resource-monotonic", "monotonic-discoverability"] {
            if !checker.check(p)?.holds() {
                return Err(Error::Precondition(format!(
                    "rule {} is neither Gale-Shapley DA nor {p}; the punishment construction does not apply",
                    rule.name()
                )));
            }
        }
    }
    let market = menus.market();
    let n = market.n();
    let nodes = decision_nodes(menus, table.budget())?;
    let mut examined = 0u64;
    let mut witness = None;
    'outer: for h in &nodes {
        let Step::Menus(offered) = menus.menus(h)? else { continue };
        for a in (0..n).filter(|&a| !offered[a].is_empty()) {
            for o in offered[a].iter() {
                examined += 1;
                let mut strategies: Vec<Box<dyn Strategy>> = (0..n)
                    .map(|b| Box::new(ThenNull { first: if b == a { Some(o) } else { None } }) as Box<dyn Strategy>)
                    .collect();
                let tr = run_pao_from(menus, h.clone(), &mut strategies)?;
                let got = tr.allocation.as_ref().map(|mu| mu.get(a));
                let mut ok = got == Some(o);
                if ok {
                    let star: Vec<Preference> =
                        tr.history.agents.iter().map(|hb| choices_then_null(hb, market.m())).collect::<Result<_>>()?;
                    if star.iter().all(|p| market.domain().admits(p)) {
                        ok = rule.evaluate(&star)?.get(a) == o;
                    }
                }
                if !ok {
                    witness = Some(Witness::Unpunished { history: h.clone(), agent: a, menu: offered[a], choice: o, outcome: got });
                    break 'outer;
                }
            }
        }
    }
    let mut report = PropertyReport::from_search("uniqueness-probe", rule, witness, examined, started);
    report.rule = format!("{} via {}", rule.name(), menus.name());
    Ok(report)
}

/// Replays a PAO witness through `menus`; `Ok(true)` when it still holds.
pub fn reverify_pao_witness(table: &RuleTable, menus: &dyn MenuFunction, witness: &Witness) -> Result<bool> {
    match witness {
        Witness::ExPost { history, profile, agent, as_if, straightforward, deviation } => {
            let got = continuation(menus, history, all_straightforward(profile))?[*agent];
            let mut dev_profile = profile.clone();
            dev_profile[*agent] = as_if.clone();
            let dev = continuation(menus, history, all_straightforward(&dev_profile))?[*agent];
            Ok(got == *straightforward && dev == *deviation && profile[*agent].prefers(dev, got))
        }
        Witness::Unpunished { history, agent, choice, outcome, .. } => {
            let n = table.n();
            let mut strategies: Vec<Box<dyn Strategy>> = (0..n)
                .map(|b| Box::new(ThenNull { first: if b == *agent { Some(*choice) } else { None } }) as Box<dyn Strategy>)
                .collect();
            let tr = run_pao_from(menus, history.clone(), &mut strategies)?;
            let got = tr.allocation.as_ref().map(|mu| mu.get(*agent));
            if got != *outcome {
                return Ok(false);
            }
            if got != Some(*choice) {
                return Ok(true);
            }
            let star: Vec<Preference> =
                tr.history.agents.iter().map(|hb| choices_then_null(hb, table.m())).collect::<Result<_>>()?;
            Ok(table.rule().evaluate(&star)?.get(*agent) != *choice)
        }
        _ => Err(Error::Unsupported("not a PAO witness".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::CanonicalMenus;
    use crate::model::{Market, Priorities};
    use crate::rules::Rule;
    use std::sync::Arc;

    fn setup(rule: &Rule) -> (Arc<RuleTable>, CanonicalMenus) {
        let t = Arc::new(RuleTable::new(rule, Budget::default()).unwrap());
        (t.clone(), CanonicalMenus::new(t))
    }

    #[test]
    fn choice_vectors_product() {
        let menus = [ObjSet::universe(1), ObjSet::EMPTY, ObjSet::universe(2)];
        let v = choice_vectors(&menus);
        assert_eq!(v.len(), 6);
        assert!(v.iter().all(|c| c[1].is_none()));
    }

    #[test]
    fn ttc_incentives_hold_two_by_two() {
        let ttc = Rule::ttc(Market::new(2, 2), Priorities::new(2, vec![vec![0, 1], vec![1, 0]]).unwrap()).unwrap();
        let (t, c) = setup(&ttc);
        let r = check_expost_incentives(&t, &c).unwrap();
        assert!(r.holds(), "{r:?}");
        assert!(r.profiles_examined > 36);
    }

    #[test]
    fn boston_three_by_three_has_profitable_deviation() {
        let pri = Priorities::new(3, vec![vec![0, 1, 2], vec![1, 2, 0], vec![2, 0, 1]]).unwrap();
        let boston = Rule::boston(Market::new(3, 3), pri).unwrap();
        let (t, c) = setup(&boston);
        // The deviation from the initial history alone already shows it.
        let nodes = decision_nodes(&c, Budget::default()).unwrap();
        assert!(nodes[0].is_initial());
        let sp = Checker::from_table(t.clone()).strategy_proof().unwrap();
        let Some(Witness::Misreport { profile, agent, report, .. }) = sp.witness else { panic!() };
        let w = Witness::ExPost {
            history: nodes[0].clone(),
            profile: profile.clone(),
            agent,
            as_if: report.clone(),
            straightforward: boston.evaluate(&profile).unwrap().get(agent),
            deviation: {
                let mut p = profile.clone();
                p[agent] = report;
                boston.evaluate(&p).unwrap().get(agent)
            },
        };
        assert!(reverify_pao_witness(&t, &c, &w).unwrap());
    }

    #[test]
    fn sd_probe_holds_and_precondition_enforced() {
        let sd = Rule::sd(Market::new(2, 2), &[1.0, 2.0]).unwrap();
        let (t, c) = setup(&sd);
        assert!(probe_uniqueness(&t, &c).unwrap().holds());
        let boston = Rule::boston(
            Market::new(3, 3),
            Priorities::new(3, vec![vec![0, 1, 2], vec![1, 2, 0], vec![2, 0, 1]]).unwrap(),
        )
        .unwrap();
        let (t, c) = setup(&boston);
        assert!(matches!(probe_uniqueness(&t, &c), Err(Error::Precondition(_))));
    }
}
