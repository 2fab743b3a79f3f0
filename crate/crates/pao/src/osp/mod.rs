//! Millipede games: OSP serial dictatorship and OSP top trading cycles for
//! acyclic priorities.
//!
//! A game is a state machine rather than an explicit tree. Every decision node
//! offers a set of clinch options (objects the mover leaves with, `∅` among
//! them) and at most one pass.

mod acyclic;

use std::sync::{Arc, Mutex};

use rustc_hash::FxHashMap;

use serde::{Deserialize, Serialize};

pub use acyclic::{check_acyclic, find_cyclic_submarket, tops, CyclicSubmarket};

use crate::error::{Error, Result};
use crate::model::{Allocation, Market, Obj, ObjSet, Preference, Priorities, MAX_OBJECTS};
use crate::rules::sorted_by_score;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Clinch(Obj),
    Pass,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    /// OSP-SD: the mover picks from what is left.
    Serial,
    /// OSP-TTC: yes/no questions about the objects the mover owns.
    Interview,
    /// OSP-TTC after an all-no round: pick among the other owner's objects.
    Pick,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub player: usize,
    pub kind: NodeKind,
    pub clinch: ObjSet,
    pub pass: bool,
    /// Objects the mover owns at an interview, in the order she is asked about them.
    #[serde(default, skip_serializing_if = "no_objects")]
    pub owned: ObjSet,
}

fn no_objects(s: &ObjSet) -> bool {
    s.is_empty()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Node {
    Decision(Decision),
    Terminal(Allocation),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cursor {
    /// Position in the dictatorship order.
    Serial(usize),
    /// Position among the current owners, ascending by agent index.
    Interview(usize),
    /// All owners said no; the first owner's pick once she has made it.
    Pick(Option<Obj>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GameState {
    /// `Some` once the agent has left the game with that item.
    pub assigned: Vec<Option<Obj>>,
    pub seats: Vec<u32>,
    pub cursor: Cursor,
}

impl GameState {
    pub fn active_mask(&self) -> u64 {
        self.assigned.iter().enumerate().filter(|(_, a)| a.is_none()).fold(0, |m, (i, _)| m | 1 << i)
    }

    pub fn remaining(&self) -> ObjSet {
        self.seats.iter().enumerate().filter(|(_, &s)| s > 0).map(|(o, _)| Obj::new(o)).collect()
    }

    fn leave(&mut self, agent: usize, item: Obj) {
        if let Some(i) = item.index() {
            self.seats[i] -= 1;
        }
        self.assigned[agent] = Some(item);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "mechanism", rename_all = "snake_case")]
pub enum GameKind {
    SerialDictatorship { scores: Vec<f64>, order: Vec<usize> },
    TopTradingCycles { priorities: Vec<Vec<usize>> },
}

/// Active agents, seats capped at the number of active agents, cursor.
type Key = (u64, [u8; MAX_OBJECTS], Cursor);

fn memo_key(s: &GameState) -> Key {
    let active = s.active_mask();
    let cap = active.count_ones();
    let mut seats = [0u8; MAX_OBJECTS];
    for (slot, &k) in seats.iter_mut().zip(&s.seats) {
        *slot = k.min(cap) as u8;
    }
    (active, seats, s.cursor)
}

/// An OSP mechanism as a millipede game.
pub struct MillipedeGame {
    market: Market,
    name: String,
    kind: GameKind,
    priorities: Option<Priorities>,
    outcomes: Mutex<FxHashMap<Key, Arc<Vec<ObjSet>>>>,
}

impl Clone for MillipedeGame {
    fn clone(&self) -> Self {
        MillipedeGame {
            market: self.market.clone(),
            name: self.name.clone(),
            kind: self.kind.clone(),
            priorities: self.priorities.clone(),
            outcomes: Mutex::new(FxHashMap::default()),
        }
    }
}

impl std::fmt::Debug for MillipedeGame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MillipedeGame").field("name", &self.name).field("kind", &self.kind).finish()
    }
}

/// OSP-SD: agents are called once each in descending score order.
pub fn build_osp_sd(market: &Market, scores: &[f64]) -> Result<MillipedeGame> {
    if scores.len() != market.n() {
        return Err(Error::Validation(format!("{} scores for {} agents", scores.len(), market.n())));
    }
    crate::model::validate_scores(scores)?;
    let order = sorted_by_score(scores);
    Ok(MillipedeGame {
        market: market.clone(),
        name: "osp-sd".into(),
        kind: GameKind::SerialDictatorship { scores: scores.to_vec(), order },
        priorities: None,
        outcomes: Mutex::new(FxHashMap::default()),
    })
}

/// OSP-TTC; rejects cyclic priorities and non-unit capacities.
pub fn build_osp_ttc(market: &Market, priorities: &Priorities) -> Result<MillipedeGame> {
    priorities.check_market(market)?;
    if !market.unit_capacities() {
        return Err(Error::Unsupported("OSP-TTC requires unit capacities".into()));
    }
    if let Some(w) = find_cyclic_submarket(priorities) {
        let agents: Vec<&str> = w.agents.iter().map(|&a| market.agent_labels()[a].as_str()).collect();
        let objects: Vec<&str> = w.objects.iter().map(|o| market.label(o)).collect();
        return Err(Error::Unsupported(format!(
            "OSP-TTC needs acyclic priorities; agents {agents:?} with objects {objects:?} have {} distinct top agents",
            w.tops.len()
        )));
    }
    Ok(MillipedeGame {
        market: market.clone(),
        name: "osp-ttc".into(),
        kind: GameKind::TopTradingCycles { priorities: priorities.orders().to_vec() },
        priorities: Some(priorities.clone()),
        outcomes: Mutex::new(FxHashMap::default()),
    })
}

impl MillipedeGame {
    pub fn market(&self) -> &Market {
        &self.market
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &GameKind {
        &self.kind
    }

    pub fn is_ttc(&self) -> bool {
        matches!(self.kind, GameKind::TopTradingCycles { .. })
    }

    pub fn root(&self) -> GameState {
        let cursor = if self.is_ttc() { Cursor::Interview(0) } else { Cursor::Serial(0) };
        GameState { assigned: vec![None; self.market.n()], seats: self.market.capacities().to_vec(), cursor }
    }

    /// Current owners in OSP-TTC: the top remaining agent of each remaining object.
    pub fn owners(&self, s: &GameState) -> Vec<(usize, ObjSet)> {
        let Some(pri) = &self.priorities else { return Vec::new() };
        let active = s.active_mask();
        let mut out: Vec<(usize, ObjSet)> = Vec::new();
        for o in s.remaining().iter() {
            let owner = pri.top_among(o.index().expect("real object"), active).expect("active agents remain");
            match out.iter_mut().find(|(a, _)| *a == owner) {
                Some((_, set)) => set.insert(o),
                None => out.push((owner, ObjSet::singleton(o))),
            }
        }
        out.sort_by_key(|(a, _)| *a);
        out
    }

    fn terminal(&self, s: &GameState) -> Option<Allocation> {
        let done = match s.cursor {
            Cursor::Serial(k) => match &self.kind {
                GameKind::SerialDictatorship { order, .. } => k >= order.len() || s.remaining().is_empty(),
                _ => true,
            },
            _ => s.active_mask() == 0 || s.remaining().is_empty(),
        };
        done.then(|| Allocation(s.assigned.iter().map(|a| a.unwrap_or(Obj::NULL)).collect()))
    }

    /// Applies forced moves: a lone owner who said no to everything leaves with `∅`.
    fn settle(&self, mut s: GameState) -> Result<GameState> {
        loop {
            if self.terminal(&s).is_some() {
                return Ok(s);
            }
            let Cursor::Interview(k) = s.cursor else { return Ok(s) };
            let owners = self.owners(&s);
            if k < owners.len() {
                return Ok(s);
            }
            match owners.len() {
                1 => {
                    s.leave(owners[0].0, Obj::NULL);
                    s.cursor = Cursor::Interview(0);
                }
                2 => {
                    s.cursor = Cursor::Pick(None);
                    return Ok(s);
                }
                k => {
                    return Err(Error::Unsupported(format!("{k} owners said no in the same round; priorities are cyclic")))
                }
            }
        }
    }

    pub fn node(&self, s: &GameState) -> Result<Node> {
        if let Some(a) = self.terminal(s) {
            return Ok(Node::Terminal(a));
        }
        let null = ObjSet::singleton(Obj::NULL);
        let d = match (s.cursor, &self.kind) {
            (Cursor::Serial(k), GameKind::SerialDictatorship { order, .. }) => Decision {
                player: order[k],
                kind: NodeKind::Serial,
                clinch: s.remaining().union(null),
                pass: false,
                owned: ObjSet::EMPTY,
            },
            (Cursor::Interview(k), GameKind::TopTradingCycles { .. }) => {
                let owners = self.owners(s);
                let (player, owned) = *owners
                    .get(k)
                    .ok_or_else(|| Error::Validation(format!("interview position {k} past {} owners", owners.len())))?;
                Decision { player, kind: NodeKind::Interview, clinch: owned.union(null), pass: true, owned }
            }
            (Cursor::Pick(first), GameKind::TopTradingCycles { .. }) => {
                let owners = self.owners(s);
                if owners.len() != 2 {
                    return Err(Error::Validation(format!("pick round with {} owners", owners.len())));
                }
                let (mover, other) = if first.is_none() { (owners[0], owners[1]) } else { (owners[1], owners[0]) };
                Decision { player: mover.0, kind: NodeKind::Pick, clinch: other.1.union(null), pass: false, owned: ObjSet::EMPTY }
            }
            _ => return Err(Error::Validation("game state does not belong to this game".into())),
        };
        Ok(Node::Decision(d))
    }

    pub fn apply(&self, s: &GameState, action: Action) -> Result<GameState> {
        let Node::Decision(d) = self.node(s)? else {
            return Err(Error::Validation("no move at a terminal history".into()));
        };
        self.apply_at(s, &d, action)
    }

    fn apply_at(&self, s: &GameState, d: &Decision, action: Action) -> Result<GameState> {
        let mut next = s.clone();
        match action {
            Action::Pass if d.pass => {
                let Cursor::Interview(k) = s.cursor else { unreachable!("only interviews offer a pass") };
                next.cursor = Cursor::Interview(k + 1);
            }
            Action::Clinch(o) if d.clinch.contains(o) => match s.cursor {
                Cursor::Serial(k) => {
                    next.leave(d.player, o);
                    next.cursor = Cursor::Serial(k + 1);
                }
                Cursor::Pick(None) if !o.is_null() => next.cursor = Cursor::Pick(Some(o)),
                Cursor::Pick(Some(first)) => {
                    next.leave(self.owners(s)[0].0, first);
                    next.leave(d.player, o);
                    next.cursor = Cursor::Interview(0);
                }
                Cursor::Interview(_) | Cursor::Pick(None) => {
                    next.leave(d.player, o);
                    next.cursor = Cursor::Interview(0);
                }
            },
            _ => {
                return Err(Error::Validation(format!(
                    "{action:?} is not available to {} (clinch {:?}, pass {})",
                    self.market.agent_labels()[d.player],
                    d.clinch,
                    d.pass
                )))
            }
        }
        self.settle(next)
    }

    /// Every agent's possible final assignments over all continuations of `s`.
    ///
    /// For an agent still in the game this is the clinchable set `C_a(h)`,
    /// plus `∅` when some continuation leaves her without an object.
    pub fn outcome_sets(&self, s: &GameState) -> Result<Vec<ObjSet>> {
        let key = memo_key(s);
        let active = self.active_outcomes(key, s)?;
        Ok(s.assigned.iter().zip(active.iter()).map(|(a, &set)| a.map_or(set, ObjSet::singleton)).collect())
    }

    fn active_outcomes(&self, key: Key, s: &GameState) -> Result<Arc<Vec<ObjSet>>> {
        if let Some(hit) = self.outcomes.lock().expect("memo lock").get(&key) {
            return Ok(hit.clone());
        }
        let n = self.market.n();
        let mut acc = vec![ObjSet::EMPTY; n];
        match self.node(s)? {
            Node::Terminal(_) => {
                for a in (0..n).filter(|&a| s.assigned[a].is_none()) {
                    acc[a] = ObjSet::singleton(Obj::NULL);
                }
            }
            Node::Decision(d) => {
                let moves = d.clinch.iter().map(Action::Clinch).chain(d.pass.then_some(Action::Pass));
                for action in moves {
                    let child = self.apply_at(s, &d, action)?;
                    let sub = self.outcome_sets(&child)?;
                    for a in (0..n).filter(|&a| s.assigned[a].is_none()) {
                        acc[a] = acc[a].union(sub[a]);
                    }
                }
            }
        }
        let value = Arc::new(acc);
        self.outcomes.lock().expect("memo lock").insert(key, value.clone());
        Ok(value)
    }

    #[doc(hidden)]
    pub fn memo_len(&self) -> usize {
        self.outcomes.lock().unwrap().len()
    }

    pub fn clinchable(&self, s: &GameState, agent: usize) -> Result<ObjSet> {
        Ok(self.outcome_sets(s)?[agent])
    }
}

/// Behaviour at millipede decision nodes.
pub trait MillipedeStrategy: Send {
    fn act(&mut self, game: &MillipedeGame, state: &GameState, node: &Decision) -> Result<Action>;
}

/// Greedy play: clinch the best still-attainable item when offered, pass otherwise.
#[derive(Clone, Debug)]
pub struct Greedy {
    pub preference: Preference,
}

pub fn greedy_strategy(preference: Preference) -> Greedy {
    Greedy { preference }
}

impl MillipedeStrategy for Greedy {
    fn act(&mut self, game: &MillipedeGame, state: &GameState, node: &Decision) -> Result<Action> {
        if !node.pass {
            // Without a pass every clinch option is attainable and nothing else is.
            return Ok(Action::Clinch(self.preference.best_in(node.clinch).expect("menus are non-empty")));
        }
        let feasible = game.clinchable(state, node.player)?;
        let top = self.preference.best_in(feasible);
        Ok(match top {
            Some(o) if node.clinch.contains(o) => Action::Clinch(o),
            _ if node.pass => Action::Pass,
            _ => Action::Clinch(self.preference.best_in(node.clinch).expect("menus are non-empty")),
        })
    }
}

/// Fixed actions, one per decision node faced.
#[derive(Clone, Debug)]
pub struct ScriptedActions {
    actions: Vec<Action>,
    used: usize,
}

pub fn scripted_actions(actions: Vec<Action>) -> ScriptedActions {
    ScriptedActions { actions, used: 0 }
}

impl MillipedeStrategy for ScriptedActions {
    fn act(&mut self, _game: &MillipedeGame, _state: &GameState, _node: &Decision) -> Result<Action> {
        let a = *self
            .actions
            .get(self.used)
            .ok_or_else(|| Error::Validation(format!("script has {} actions, decision number {} requested", self.actions.len(), self.used + 1)))?;
        self.used += 1;
        Ok(a)
    }
}

/// Uniform over the available actions.
pub struct RandomActions {
    rng: rand_chacha::ChaCha8Rng,
}

pub fn random_actions(seed: u64) -> RandomActions {
    use rand::SeedableRng;
    RandomActions { rng: rand_chacha::ChaCha8Rng::seed_from_u64(seed) }
}

impl MillipedeStrategy for RandomActions {
    fn act(&mut self, _game: &MillipedeGame, _state: &GameState, node: &Decision) -> Result<Action> {
        use rand::seq::IteratorRandom;
        let actions = node.clinch.iter().map(Action::Clinch).chain(node.pass.then_some(Action::Pass));
        Ok(actions.choose(&mut self.rng).expect("non-empty node"))
    }
}

/// One entry of an OSP strategy script file; objects are named by label and
/// a pass is written `"pass"`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MillipedeStrategySpec {
    Greedy,
    AsIf { preference: Vec<String> },
    Scripted { actions: Vec<String> },
    Random { seed: u64 },
}

pub fn parse_action(market: &Market, label: &str) -> Result<Action> {
    if label == "pass" {
        Ok(Action::Pass)
    } else {
        market.parse_obj(label).map(Action::Clinch)
    }
}

pub fn action_label(market: &Market, action: Action) -> String {
    match action {
        Action::Pass => "pass".into(),
        Action::Clinch(o) => market.label(o).into(),
    }
}

impl MillipedeStrategySpec {
    /// `truth` is required for `greedy`.
    pub fn build(&self, market: &Market, truth: Option<&Preference>) -> Result<Box<dyn MillipedeStrategy>> {
        Ok(match self {
            MillipedeStrategySpec::Greedy => {
                let p = truth.ok_or_else(|| Error::Config("greedy strategy needs a preference".into()))?;
                Box::new(greedy_strategy(p.clone()))
            }
            MillipedeStrategySpec::AsIf { preference } => Box::new(greedy_strategy(market.parse_preference(preference)?)),
            MillipedeStrategySpec::Scripted { actions } => {
                Box::new(scripted_actions(actions.iter().map(|a| parse_action(market, a)).collect::<Result<_>>()?))
            }
            MillipedeStrategySpec::Random { seed } => Box::new(random_actions(*seed)),
        })
    }
}

/// One yes/no answer at an interview.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub object: Obj,
    pub yes: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveRecord {
    pub step: usize,
    pub player: usize,
    pub kind: NodeKind,
    pub clinch: ObjSet,
    pub pass: bool,
    pub action: Action,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub interview: Vec<Answer>,
}

/// Interview answers implied by an action: no to each owned object before the
/// clinched one, yes to it.
pub fn interview_answers(owned: ObjSet, action: Action) -> Vec<Answer> {
    let mut out = Vec::new();
    for o in owned.iter() {
        let yes = action == Action::Clinch(o);
        out.push(Answer { object: o, yes });
        if yes {
            break;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OspTranscript {
    pub game: String,
    pub moves: Vec<MoveRecord>,
    pub allocation: Allocation,
}

pub fn play_millipede(game: &MillipedeGame, strategies: &mut [Box<dyn MillipedeStrategy>]) -> Result<OspTranscript> {
    let n = game.market().n();
    if strategies.len() != n {
        return Err(Error::Validation(format!("{} strategies for {n} agents", strategies.len())));
    }
    let mut s = game.root();
    let mut moves = Vec::new();
    loop {
        match game.node(&s)? {
            Node::Terminal(allocation) => return Ok(OspTranscript { game: game.name().into(), moves, allocation }),
            Node::Decision(d) => {
                let step = moves.len() + 1;
                let action = strategies[d.player]
                    .act(game, &s, &d)
                    .map_err(|e| Error::InvalidChoice { agent: d.player, period: step, detail: e.to_string() })?;
                s = game
                    .apply(&s, action)
                    .map_err(|e| Error::InvalidChoice { agent: d.player, period: step, detail: e.to_string() })?;
                moves.push(MoveRecord {
                    step,
                    player: d.player,
                    kind: d.kind,
                    clinch: d.clinch,
                    pass: d.pass,
                    action,
                    interview: if d.kind == NodeKind::Interview { interview_answers(d.owned, action) } else { Vec::new() },
                });
            }
        }
    }
}

pub fn play_greedy(game: &MillipedeGame, profile: &[Preference]) -> Result<OspTranscript> {
    game.market().check_profile(profile)?;
    let mut strategies: Vec<Box<dyn MillipedeStrategy>> =
        profile.iter().map(|p| Box::new(greedy_strategy(p.clone())) as Box<dyn MillipedeStrategy>).collect();
    play_millipede(game, &mut strategies)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathClass {
    ClinchingOnly,
    ContainsPass,
    /// The agent never reached a decision node.
    NoDecision,
}

/// Per agent: did her path through the game include a pass?
pub fn classify_path(tr: &OspTranscript) -> Vec<PathClass> {
    let mut out = vec![PathClass::NoDecision; tr.allocation.n()];
    for m in &tr.moves {
        let c = &mut out[m.player];
        if m.action == Action::Pass {
            *c = PathClass::ContainsPass;
        } else if *c == PathClass::NoDecision {
            *c = PathClass::ClinchingOnly;
        }
    }
    out
}

/// Transcript as JSON lines: one record per move with labels, then the allocation.
pub fn osp_transcript_jsonl(tr: &OspTranscript, market: &Market) -> String {
    let label = |o: Obj| market.label(o).to_string();
    let mut out = String::new();
    for m in &tr.moves {
        let line = serde_json::json!({
            "step": m.step,
            "player": market.agent_labels()[m.player],
            "kind": m.kind,
            "clinch": m.clinch.iter().map(label).collect::<Vec<_>>(),
            "pass": m.pass,
            "action": action_label(market, m.action),
            "interview": m.interview.iter().map(|a| serde_json::json!({"question": label(a.object), "answer": if a.yes { "yes" } else { "no" }})).collect::<Vec<_>>(),
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    let close = serde_json::json!({
        "game": tr.game,
        "allocation": tr.allocation.labels(market),
        "paths": classify_path(tr),
    });
    out.push_str(&close.to_string());
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Budget;
    use crate::rules::Rule;

    fn o(i: usize) -> Obj {
        Obj::new(i)
    }

    fn pref(m: usize, order: &[usize]) -> Preference {
        Preference::acceptable(m, order).unwrap()
    }

    #[test]
    fn sd_menus_follow_scores() {
        let market = Market::new(2, 2);
        let game = build_osp_sd(&market, &[90.0, 50.0]).unwrap();
        let root = game.root();
        let Node::Decision(d) = game.node(&root).unwrap() else { panic!() };
        assert_eq!((d.player, d.clinch, d.pass), (0, market.universe(), false));
        let next = game.apply(&root, Action::Clinch(o(1))).unwrap();
        let Node::Decision(d) = game.node(&next).unwrap() else { panic!() };
        assert_eq!((d.player, d.clinch), (1, [o(0), Obj::NULL].into_iter().collect()));
    }

    #[test]
    fn ttc_both_own_favourite_clinch_at_first_interview() {
        let market = Market::new(2, 2);
        let pri = Priorities::new(2, vec![vec![0, 1], vec![1, 0]]).unwrap();
        let game = build_osp_ttc(&market, &pri).unwrap();
        let tr = play_greedy(&game, &[pref(2, &[0, 1]), pref(2, &[1, 0])]).unwrap();
        assert_eq!(tr.moves.len(), 2);
        assert!(tr.moves.iter().all(|m| m.kind == NodeKind::Interview && matches!(m.action, Action::Clinch(_))));
        assert_eq!(tr.allocation.0, vec![o(0), o(1)]);
        assert_eq!(classify_path(&tr), vec![PathClass::ClinchingOnly; 2]);
    }

    #[test]
    fn ttc_swap_goes_through_pick_round() {
        let market = Market::new(2, 2);
        let pri = Priorities::new(2, vec![vec![0, 1], vec![1, 0]]).unwrap();
        let game = build_osp_ttc(&market, &pri).unwrap();
        let tr = play_greedy(&game, &[pref(2, &[1, 0]), pref(2, &[0, 1])]).unwrap();
        let kinds: Vec<_> = tr.moves.iter().map(|m| (m.player, m.kind, m.action)).collect();
        assert_eq!(
            kinds,
            vec![
                (0, NodeKind::Interview, Action::Pass),
                (1, NodeKind::Interview, Action::Pass),
                (0, NodeKind::Pick, Action::Clinch(o(1))),
                (1, NodeKind::Pick, Action::Clinch(o(0))),
            ]
        );
        assert_eq!(tr.allocation.0, vec![o(1), o(0)]);
        assert_eq!(classify_path(&tr), vec![PathClass::ContainsPass; 2]);
        assert_eq!(tr.moves[0].interview, vec![Answer { object: o(0), yes: false }]);
    }

    #[test]
    fn lone_owner_saying_no_leaves_empty_handed() {
        let market = Market::new(2, 2);
        let game = build_osp_ttc(&market, &Priorities::common(2, vec![0, 1]).unwrap()).unwrap();
        let mut strategies: Vec<Box<dyn MillipedeStrategy>> = vec![
            Box::new(scripted_actions(vec![Action::Pass])),
            Box::new(greedy_strategy(pref(2, &[1, 0]))),
        ];
        let tr = play_millipede(&game, &mut strategies).unwrap();
        assert_eq!(tr.allocation.0, vec![Obj::NULL, o(1)]);
    }

    #[test]
    fn cyclic_priorities_rejected_with_submarket() {
        let market = Market::new(3, 3);
        let pri = Priorities::new(3, vec![vec![0, 1, 2], vec![1, 2, 0], vec![2, 0, 1]]).unwrap();
        let err = build_osp_ttc(&market, &pri).unwrap_err();
        assert!(matches!(err, Error::Unsupported(ref s) if s.contains("a1") && s.contains("3 distinct")), "{err}");
    }

    #[test]
    fn greedy_matches_direct_rules_two_by_two() {
        let market = Market::new(2, 2);
        let space = market.space(Budget::default()).unwrap();
        let pri = Priorities::new(2, vec![vec![1, 0], vec![0, 1]]).unwrap();
        let ttc = Rule::ttc(market.clone(), pri.clone()).unwrap();
        let sd = Rule::sd(market.clone(), &[1.0, 2.0]).unwrap();
        let g_ttc = build_osp_ttc(&market, &pri).unwrap();
        let g_sd = build_osp_sd(&market, &[1.0, 2.0]).unwrap();
        for i in 0..space.len() {
            for j in 0..space.len() {
                let p = space.profile(&[i, j]);
                assert_eq!(play_greedy(&g_ttc, &p).unwrap().allocation, ttc.evaluate(&p).unwrap(), "{p:?}");
                assert_eq!(play_greedy(&g_sd, &p).unwrap().allocation, sd.evaluate(&p).unwrap(), "{p:?}");
            }
        }
    }

    #[test]
    fn unavailable_action_is_invalid_choice() {
        let market = Market::new(2, 2);
        let game = build_osp_sd(&market, &[2.0, 1.0]).unwrap();
        let mut strategies: Vec<Box<dyn MillipedeStrategy>> =
            vec![Box::new(scripted_actions(vec![Action::Pass])), Box::new(greedy_strategy(pref(2, &[0, 1])))];
        let err = play_millipede(&game, &mut strategies).unwrap_err();
        assert!(matches!(err, Error::InvalidChoice { agent: 0, period: 1, .. }));
    }

    #[test]
    fn outcome_sets_at_root() {
        let market = Market::new(2, 2);
        let game = build_osp_sd(&market, &[2.0, 1.0]).unwrap();
        let c = game.outcome_sets(&game.root()).unwrap();
        assert_eq!(c[0], market.universe());
        assert_eq!(c[1], market.universe());
    }
}
