use std::sync::Arc;

use super::{MenuFunction, Step};
use crate::error::{Error, Result};
use crate::model::{CollectiveHistory, Market, ObjSet};
use crate::osp::{Action, MillipedeGame, Node};

/// PAO menus that drive a millipede game: each collective history is replayed
/// through the game, agents' picks standing in for their clinch or pass
/// decisions, until some mover's current pick can no longer be attained.
#[derive(Clone, Debug)]
pub struct OspAdapter {
    game: Arc<MillipedeGame>,
    name: String,
}

pub fn osp_to_pao(game: Arc<MillipedeGame>) -> OspAdapter {
    let name = format!("osp-adapter:{}", game.name());
    OspAdapter { game, name }
}

impl OspAdapter {
    pub fn game(&self) -> &MillipedeGame {
        &self.game
    }
}

impl MenuFunction for OspAdapter {
    fn name(&self) -> &str {
        &self.name
    }

    fn market(&self) -> &Market {
        self.game.market()
    }

    fn menus(&self, h: &CollectiveHistory) -> Result<Step> {
        let n = self.market().n();
        if h.n() != n {
            return Err(Error::Validation(format!("history for {} agents, game has {n}", h.n())));
        }
        let game = &self.game;
        let mut state = game.root();
        if h.is_initial() {
            return Ok(Step::Menus(game.outcome_sets(&state)?));
        }
        let picks: Vec<Vec<_>> = h.agents.iter().map(|hi| hi.choices().collect()).collect();
        if let Some(a) = (0..n).find(|&a| picks[a].is_empty()) {
            return Err(Error::MenuContract(format!("agent {a} has no picks after the first period")));
        }
        let mut eta = vec![0usize; n];
        loop {
            let d = match game.node(&state)? {
                // Agents whose last pick is not what the game gave them are
                // offered exactly that.
                Node::Terminal(mu) => {
                    return Ok(Step::Menus(
                        (0..n)
                            .map(|j| {
                                let got = mu.get(j);
                                if picks[j].last() == Some(&got) { ObjSet::EMPTY } else { ObjSet::singleton(got) }
                            })
                            .collect(),
                    ))
                }
                Node::Decision(d) => d,
            };
            let sets = game.outcome_sets(&state)?;
            let i = d.player;
            while !sets[i].contains(picks[i][eta[i]]) && eta[i] + 1 < picks[i].len() {
                eta[i] += 1;
            }
            let pick = picks[i][eta[i]];
            if !sets[i].contains(pick) {
                return Ok(Step::Menus(
                    (0..n)
                        .map(|j| if picks[j][eta[j]..].iter().any(|&o| sets[j].contains(o)) { ObjSet::EMPTY } else { sets[j] })
                        .collect(),
                ));
            }
            let action = if d.clinch.contains(pick) {
                Action::Clinch(pick)
            } else if d.pass {
                Action::Pass
            } else {
                return Err(Error::MenuContract(format!(
                    "agent {i}'s pick {pick} is attainable but neither clinchable nor passable here"
                )));
            };
            state = game.apply(&state, action)?;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run_straightforward, GendaMenus};
    use crate::model::{Budget, Priorities};
    use crate::osp::{build_osp_sd, build_osp_ttc, play_greedy};
    use crate::rules::Rule;

    #[test]
    fn ttc_two_agents_matches_direct_and_greedy() {
        let market = Market::new(2, 2);
        let pri = Priorities::new(2, vec![vec![0, 1], vec![1, 0]]).unwrap();
        let game = Arc::new(build_osp_ttc(&market, &pri).unwrap());
        let ttc = Rule::ttc(market.clone(), pri).unwrap();
        let adapter = osp_to_pao(game.clone());
        let space = market.space(Budget::default()).unwrap();
        for i in 0..space.len() {
            for j in 0..space.len() {
                let p = space.profile(&[i, j]);
                let via_pao = run_straightforward(&adapter, &p).unwrap().allocation.unwrap();
                assert_eq!(via_pao, ttc.evaluate(&p).unwrap(), "{p:?}");
                assert_eq!(via_pao, play_greedy(&game, &p).unwrap().allocation);
            }
        }
    }

    #[test]
    fn sd_adapter_agrees_with_genda() {
        let market = Market::new(2, 3);
        let game = Arc::new(build_osp_sd(&market, &[4.0, 7.0]).unwrap());
        let sd = Rule::sd(market.clone(), &[4.0, 7.0]).unwrap();
        let genda = GendaMenus::for_rule(&sd).unwrap();
        let adapter = osp_to_pao(game);
        let space = market.space(Budget::default()).unwrap();
        for i in 0..space.len() {
            for j in 0..space.len() {
                let p = space.profile(&[i, j]);
                assert_eq!(
                    run_straightforward(&adapter, &p).unwrap().allocation,
                    run_straightforward(&genda, &p).unwrap().allocation
                );
            }
        }
    }

    #[test]
    fn terminal_history_gives_empty_menus() {
        let market = Market::new(1, 2);
        let game = Arc::new(build_osp_sd(&market, &[1.0]).unwrap());
        let adapter = osp_to_pao(game);
        let mut h = CollectiveHistory::empty(1);
        let Step::Menus(m) = adapter.menus(&h).unwrap() else { panic!() };
        h.agents[0].push(m[0], crate::model::Obj::new(1)).unwrap();
        assert_eq!(adapter.menus(&h).unwrap(), Step::Menus(vec![ObjSet::EMPTY]));
    }

    #[test]
    fn game_ending_early_settles_stale_picks() {
        use crate::model::{Obj, Preference};
        let market = Market::new(2, 1);
        let adapter = osp_to_pao(Arc::new(build_osp_sd(&market, &[2.0, 1.0]).unwrap()));
        let p = Preference::acceptable(1, &[0]).unwrap();
        let tr = run_straightforward(&adapter, &[p.clone(), p]).unwrap();
        assert_eq!(tr.periods[1].menus, vec![ObjSet::EMPTY, ObjSet::singleton(Obj::NULL)]);
        assert_eq!(tr.allocation.unwrap().0, vec![Obj::new(0), Obj::NULL]);
    }
}
