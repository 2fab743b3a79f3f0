//! Live sessions as an event-sourced state machine. Every accepted command
//! appends events to the log; replaying the log re-executes the commands and
//! checks that each stored event matches what the machine produces.

mod view;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{check_menus, period_guard, CanonicalMenus, GendaMenus, MenuFunction, Step};
use crate::error::{Error, Result};
use crate::model::{Allocation, Budget, CollectiveHistory, Market, MarketFile, Obj, ObjSet, Preference};
use crate::osp::{build_osp_sd, build_osp_ttc, interview_answers, Action, Decision, GameState, MillipedeGame, MillipedeStrategy, MoveRecord, Node};
use crate::rules::Rule;
use crate::table::RuleTable;

pub use view::*;

/// Schema version carried by every event and view.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mechanism {
    Direct,
    Pao,
    Osp,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EngineChoice {
    #[default]
    Genda,
    Canonical,
}

/// What happens to seats still undecided when a period's deadline passes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DefaultPolicy {
    /// Best offered option under the ranking declared at join; lowest index without one.
    BestByDeclared,
    /// End the session.
    Abort,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub market: MarketFile,
    pub mechanism: Mechanism,
    pub rule: String,
    #[serde(default)]
    pub engine: EngineChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_policy: Option<DefaultPolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idempotency_key: Option<String>,
    /// Enumeration budget for the canonical engine.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
}

impl SessionConfig {
    /// Session id: a hash of the config, so the same idempotency key and
    /// config always name the same session. `nonce` separates keyless creates.
    pub fn session_id(&self, nonce: u64) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("serializable"));
        if self.idempotency_key.is_none() {
            h.update(nonce.to_le_bytes());
        }
        hex::encode(&h.finalize()[..8])
    }
}

/// Seat tokens and the admin token derived from the session id and a server secret.
pub fn derive_tokens(session: &str, seats: usize, secret: &str) -> (Vec<String>, String) {
    let tok = |label: String| {
        let mut h = Sha256::new();
        h.update(secret.as_bytes());
        h.update(session.as_bytes());
        h.update(label.as_bytes());
        hex::encode(&h.finalize()[..12])
    };
    ((0..seats).map(|s| tok(format!("seat:{s}"))).collect(), tok("admin".into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Lobby,
    Running,
    Finished,
    Aborted,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Submission {
    Pick { object: Obj },
    Report { ranking: Preference },
    Act { action: Action },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum EventKind {
    Created { session: String, config: SessionConfig, tokens: Vec<String>, admin_token: String },
    Joined {
        seat: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        declared: Option<Preference>,
    },
    /// A period opens; `awaiting` must each submit once.
    Opened {
        period: usize,
        awaiting: Vec<usize>,
        menus: Vec<ObjSet>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        decision: Option<Decision>,
    },
    Choice { period: usize, seat: usize, submission: Submission },
    Defaulted { period: usize, seat: usize, submission: Submission },
    Finished { allocation: Allocation },
    Aborted { reason: String },
}

impl EventKind {
    /// Events that follow from earlier ones and are never commands.
    fn is_derived(&self) -> bool {
        matches!(self, EventKind::Opened { .. } | EventKind::Finished { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub v: u32,
    pub seq: usize,
    #[serde(flatten)]
    pub kind: EventKind,
}

enum Runtime {
    Direct(Rule),
    Pao(Box<dyn MenuFunction>),
    Osp(MillipedeGame),
}

fn build_runtime(config: &SessionConfig) -> Result<(Market, Runtime)> {
    let market = config.market.market()?;
    let priorities = config.market.priorities(&market)?;
    let scores = config.market.scores(&market)?;
    let rule = Rule::preset(&config.rule, &market, priorities.as_ref(), scores.as_deref())?;
    let runtime = match config.mechanism {
        Mechanism::Direct => Runtime::Direct(rule),
        Mechanism::Pao => match config.engine {
            EngineChoice::Genda => Runtime::Pao(Box::new(GendaMenus::for_rule(&rule)?)),
            EngineChoice::Canonical => {
                let budget = config.budget.map_or_else(Budget::default, Budget);
                Runtime::Pao(Box::new(CanonicalMenus::new(Arc::new(RuleTable::new(&rule, budget)?))))
            }
        },
        Mechanism::Osp => Runtime::Osp(match (config.rule.as_str(), &priorities, &scores) {
            ("sd", _, Some(s)) => build_osp_sd(&market, s)?,
            ("ttc", Some(p), _) => build_osp_ttc(&market, p)?,
            (r, ..) => return Err(Error::Validation(format!("OSP sessions run sd or ttc, not {r}"))),
        }),
    };
    Ok((market, runtime))
}

/// A session: configuration, derived runtime, current state and its event log.
#[derive(Clone)]
pub struct Session {
    id: String,
    config: SessionConfig,
    market: Market,
    runtime: Arc<Runtime>,
    tokens: Vec<String>,
    admin_token: String,
    pub phase: Phase,
    pub joined: Vec<bool>,
    pub declared: Vec<Option<Preference>>,
    pub period: usize,
    pub awaiting: Vec<usize>,
    pub menus: Vec<ObjSet>,
    pub decision: Option<Decision>,
    pub pending: Vec<Option<Submission>>,
    /// PAO sessions.
    pub history: CollectiveHistory,
    /// OSP sessions.
    pub game: Option<GameState>,
    pub moves: Vec<MoveRecord>,
    /// Direct sessions.
    pub reports: Vec<Option<Preference>>,
    pub allocation: Option<Allocation>,
    pub abort_reason: Option<String>,
    log: Vec<Event>,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session").field("id", &self.id).field("phase", &self.phase).field("period", &self.period).finish()
    }
}

impl Session {
    pub fn create(id: String, config: SessionConfig, tokens: Vec<String>, admin_token: String) -> Result<Session> {
        let (market, runtime) = build_runtime(&config)?;
        let n = market.n();
        if let Some(t) = &config.tokens {
            if t != &tokens {
                return Err(Error::Validation("tokens differ from the configured ones".into()));
            }
        }
        if tokens.len() != n {
            return Err(Error::Validation(format!("{} tokens for {n} seats", tokens.len())));
        }
        let mut sorted = tokens.clone();
        sorted.push(admin_token.clone());
        sorted.sort();
        sorted.dedup();
        if sorted.len() != n + 1 {
            return Err(Error::Validation("tokens must be distinct".into()));
        }
        if config.deadline_ms.is_some() && config.default_policy.is_none() {
            return Err(Error::Validation("a deadline needs a default policy".into()));
        }
        let mut s = Session {
            id: id.clone(),
            config: config.clone(),
            runtime: Arc::new(runtime),
            tokens: tokens.clone(),
            admin_token: admin_token.clone(),
            phase: Phase::Lobby,
            joined: vec![false; n],
            declared: vec![None; n],
            period: 0,
            awaiting: Vec::new(),
            menus: vec![ObjSet::EMPTY; n],
            decision: None,
            pending: vec![None; n],
            history: CollectiveHistory::empty(n),
            game: None,
            moves: Vec::new(),
            reports: vec![None; n],
            allocation: None,
            abort_reason: None,
            log: Vec::new(),
            market,
        };
        s.emit(EventKind::Created { session: id, config, tokens, admin_token });
        Ok(s)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn market(&self) -> &Market {
        &self.market
    }

    pub fn n(&self) -> usize {
        self.market.n()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn admin_token(&self) -> &str {
        &self.admin_token
    }

    pub fn log(&self) -> &[Event] {
        &self.log
    }

    pub fn game(&self) -> Option<&MillipedeGame> {
        match &*self.runtime {
            Runtime::Osp(g) => Some(g),
            _ => None,
        }
    }

    pub fn seat_of(&self, token: &str) -> Result<usize> {
        self.tokens.iter().position(|t| t == token).ok_or_else(|| Error::Unauthorized("unknown join token".into()))
    }

    pub fn is_admin(&self, token: &str) -> bool {
        token == self.admin_token
    }

    fn emit(&mut self, kind: EventKind) {
        let ev = Event { v: SCHEMA_VERSION, seq: self.log.len(), kind };
        self.log.push(ev);
    }

    /// Binds the seat of `token`; the session starts once every seat has joined.
    /// Joining again is a no-op.
    pub fn join(&mut self, token: &str, declared: Option<Preference>) -> Result<usize> {
        let seat = self.seat_of(token)?;
        if self.joined[seat] {
            return Ok(seat);
        }
        self.join_seat(seat, declared)?;
        Ok(seat)
    }

    fn join_seat(&mut self, seat: usize, declared: Option<Preference>) -> Result<()> {
        if self.phase != Phase::Lobby {
            return Err(Error::Precondition(format!("session is {:?}, joining needs the lobby", self.phase)));
        }
        if seat >= self.n() {
            return Err(Error::Validation(format!("no seat {seat}")));
        }
        if self.joined[seat] {
            return Err(Error::Precondition(format!("seat {seat} already joined")));
        }
        if let Some(p) = &declared {
            self.market.check_preference(p)?;
        }
        self.joined[seat] = true;
        self.declared[seat] = declared.clone();
        self.emit(EventKind::Joined { seat, declared });
        if self.joined.iter().all(|&j| j) {
            self.phase = Phase::Running;
            self.open_next()?;
        }
        Ok(())
    }

    pub fn submit(&mut self, token: &str, period: Option<usize>, submission: Submission) -> Result<usize> {
        let seat = self.seat_of(token)?;
        if let Some(p) = period {
            if p != self.period {
                return Err(Error::NotAwaited { seat, period: p });
            }
        }
        self.submit_seat(seat, self.period, submission, false)?;
        Ok(seat)
    }

    fn validate_submission(&self, seat: usize, period: usize, submission: &Submission) -> Result<()> {
        if self.phase != Phase::Running || period != self.period || !self.awaiting.contains(&seat) {
            return Err(Error::NotAwaited { seat, period });
        }
        if self.pending[seat].is_some() {
            return Err(Error::AlreadySubmitted { seat, period });
        }
        let invalid = |detail: String| Err(Error::InvalidChoice { agent: seat, period, detail });
        match (&*self.runtime, submission) {
            (Runtime::Pao(_), Submission::Pick { object }) => {
                if !self.menus[seat].contains(*object) {
                    return invalid(format!("{} is not in the menu", self.market.label(*object)));
                }
            }
            (Runtime::Direct(_), Submission::Report { ranking }) => {
                if let Err(e) = self.market.check_preference(ranking) {
                    return invalid(e.to_string());
                }
            }
            (Runtime::Osp(_), Submission::Act { action }) => {
                let d = self.decision.as_ref().expect("open OSP period has a decision");
                let ok = match action {
                    Action::Pass => d.pass,
                    Action::Clinch(o) => d.clinch.contains(*o),
                };
                if !ok {
                    return invalid(format!("{action:?} is not offered"));
                }
            }
            (_, s) => return invalid(format!("{s:?} does not fit a {:?} session", self.config.mechanism)),
        }
        Ok(())
    }

    fn submit_seat(&mut self, seat: usize, period: usize, submission: Submission, defaulted: bool) -> Result<()> {
        self.validate_submission(seat, period, &submission)?;
        self.pending[seat] = Some(submission.clone());
        self.emit(if defaulted {
            EventKind::Defaulted { period, seat, submission }
        } else {
            EventKind::Choice { period, seat, submission }
        });
        if self.awaiting.iter().all(|&a| self.pending[a].is_some()) {
            self.close_period()?;
        }
        Ok(())
    }

    /// Deadline for `period` passed: undecided seats get the default action.
    pub fn expire(&mut self, period: usize) -> Result<usize> {
        if self.phase != Phase::Running || period != self.period {
            return Ok(0);
        }
        let policy = self
            .config
            .default_policy
            .ok_or_else(|| Error::Precondition("no default policy configured".into()))?;
        if policy == DefaultPolicy::Abort {
            self.abort(format!("deadline of period {period} passed"))?;
            return Ok(0);
        }
        let late: Vec<usize> = self.awaiting.iter().copied().filter(|&a| self.pending[a].is_none()).collect();
        for &seat in &late {
            let submission = self.default_submission(seat);
            if self.period != period {
                break;
            }
            self.submit_seat(seat, period, submission, true)?;
        }
        Ok(late.len())
    }

    fn default_submission(&self, seat: usize) -> Submission {
        let identity = || {
            let mut order: Vec<Obj> = self.market.objects().collect();
            order.push(Obj::NULL);
            Preference::new(order).expect("permutation")
        };
        let pref = self.declared[seat].clone().unwrap_or_else(identity);
        match &*self.runtime {
            Runtime::Direct(_) => Submission::Report { ranking: pref },
            Runtime::Pao(_) => Submission::Pick { object: pref.best_in(self.menus[seat]).expect("awaited menus are non-empty") },
            Runtime::Osp(game) => {
                let d = self.decision.as_ref().expect("open OSP period has a decision");
                let state = self.game.as_ref().expect("running OSP session has a state");
                let action = crate::osp::greedy_strategy(pref)
                    .act(game, state, d)
                    .unwrap_or(Action::Clinch(d.clinch.iter().next().expect("non-empty")));
                Submission::Act { action }
            }
        }
    }

    pub fn abort(&mut self, reason: String) -> Result<()> {
        if matches!(self.phase, Phase::Finished | Phase::Aborted) {
            return Err(Error::Precondition(format!("session already {:?}", self.phase)));
        }
        self.phase = Phase::Aborted;
        self.awaiting.clear();
        self.abort_reason = Some(reason.clone());
        self.emit(EventKind::Aborted { reason });
        Ok(())
    }

    fn finish(&mut self, allocation: Allocation) {
        self.phase = Phase::Finished;
        self.awaiting.clear();
        self.menus = vec![ObjSet::EMPTY; self.n()];
        self.decision = None;
        self.allocation = Some(allocation.clone());
        self.emit(EventKind::Finished { allocation });
    }

    fn open(&mut self, awaiting: Vec<usize>, menus: Vec<ObjSet>, decision: Option<Decision>) {
        self.period += 1;
        self.awaiting = awaiting.clone();
        self.menus = menus.clone();
        self.decision = decision.clone();
        self.pending = vec![None; self.n()];
        self.emit(EventKind::Opened { period: self.period, awaiting, menus, decision });
    }

    /// Opens the next period, or ends the session.
    fn open_next(&mut self) -> Result<()> {
        let n = self.n();
        let runtime = self.runtime.clone();
        match &*runtime {
            Runtime::Direct(_) => self.open((0..n).collect(), vec![self.market.universe(); n], None),
            Runtime::Pao(menus) => {
                match menus.menus(&self.history)? {
                    Step::Gridlock { outcomes } => {
                        self.abort(format!("informational gridlock with {} candidate allocations", outcomes.len()))?;
                    }
                    Step::Menus(offered) => {
                        check_menus(&self.market, &self.history, &offered)?;
                        if offered.iter().all(|m| m.is_empty()) {
                            let allocation = Allocation(
                                self.history.last_choices().into_iter().map(|c| c.unwrap_or(Obj::NULL)).collect(),
                            );
                            allocation.validate(&self.market)?;
                            self.finish(allocation);
                        } else if self.period >= period_guard(&self.market) {
                            self.abort(format!("no allocation after {} periods", self.period))?;
                        } else {
                            let awaiting = (0..n).filter(|&a| !offered[a].is_empty()).collect();
                            self.open(awaiting, offered, None);
                        }
                    }
                }
            }
            Runtime::Osp(game) => {
                let state = self.game.get_or_insert_with(|| game.root()).clone();
                match game.node(&state)? {
                    Node::Terminal(allocation) => self.finish(allocation),
                    Node::Decision(d) => {
                        let mut menus = vec![ObjSet::EMPTY; n];
                        menus[d.player] = d.clinch;
                        self.open(vec![d.player], menus, Some(d));
                    }
                }
            }
        }
        Ok(())
    }

    fn close_period(&mut self) -> Result<()> {
        let runtime = self.runtime.clone();
        let n = self.n();
        let pending = std::mem::replace(&mut self.pending, vec![None; n]);
        match &*runtime {
            Runtime::Direct(rule) => {
                let reports: Vec<Preference> = pending
                    .into_iter()
                    .map(|s| match s {
                        Some(Submission::Report { ranking }) => ranking,
                        _ => unreachable!("validated"),
                    })
                    .collect();
                let allocation = rule.evaluate(&reports)?;
                self.reports = reports.into_iter().map(Some).collect();
                self.finish(allocation);
                return Ok(());
            }
            Runtime::Pao(_) => {
                for (a, s) in pending.into_iter().enumerate() {
                    if let Some(Submission::Pick { object }) = s {
                        self.history.agents[a].push(self.menus[a], object)?;
                    }
                }
            }
            Runtime::Osp(game) => {
                let d = self.decision.clone().expect("open OSP period has a decision");
                let Some(Submission::Act { action }) = pending[d.player].clone() else { unreachable!("validated") };
                let state = self.game.as_ref().expect("running OSP session has a state");
                self.game = Some(game.apply(state, action)?);
                self.moves.push(MoveRecord {
                    step: self.period,
                    player: d.player,
                    kind: d.kind,
                    clinch: d.clinch,
                    pass: d.pass,
                    action,
                    interview: if d.kind == crate::osp::NodeKind::Interview {
                        interview_answers(d.owned, action)
                    } else {
                        Vec::new()
                    },
                });
            }
        }
        self.open_next()
    }
}

/// Rebuilds a session from its event log, checking every stored event
/// against the one the state machine produces. A log cut short yields the
/// state after its last command.
pub fn replay(events: &[Event]) -> Result<Session> {
    let fail = |offset: usize, detail: String| Error::Replay { offset, detail };
    let first = events.first().ok_or_else(|| fail(0, "empty log".into()))?;
    let EventKind::Created { session, config, tokens, admin_token } = &first.kind else {
        return Err(fail(0, "log does not start with a created event".into()));
    };
    let mut s = Session::create(session.clone(), config.clone(), tokens.clone(), admin_token.clone())
        .map_err(|e| fail(0, e.to_string()))?;
    if s.log[0] != *first {
        return Err(fail(0, "created event differs from recomputation".into()));
    }
    let mut k = 1;
    while k < events.len() {
        let ev = &events[k];
        if ev.v != SCHEMA_VERSION {
            return Err(fail(k, format!("schema version {} is not {SCHEMA_VERSION}", ev.v)));
        }
        if ev.seq != k {
            return Err(fail(k, format!("sequence number {} at offset {k}", ev.seq)));
        }
        let step = match &ev.kind {
            EventKind::Joined { seat, declared } => s.join_seat(*seat, declared.clone()),
            EventKind::Choice { period, seat, submission } => s.submit_seat(*seat, *period, submission.clone(), false),
            EventKind::Defaulted { period, .. } => s.expire(*period).map(|_| ()),
            EventKind::Aborted { reason } => s.abort(reason.clone()),
            EventKind::Created { .. } => Err(Error::Validation("second created event".into())),
            kind if kind.is_derived() => Err(Error::Validation(format!("unexpected {} event", kind_name(kind)))),
            _ => unreachable!(),
        };
        step.map_err(|e| fail(k, e.to_string()))?;
        if s.log.len() <= k {
            return Err(fail(k, "event had no effect".into()));
        }
        for j in k..s.log.len().min(events.len()) {
            if s.log[j] != events[j] {
                return Err(fail(j, format!("stored {} event differs from recomputation", kind_name(&events[j].kind))));
            }
        }
        k = s.log.len();
    }
    Ok(s)
}

fn kind_name(k: &EventKind) -> &'static str {
    match k {
        EventKind::Created { .. } => "created",
        EventKind::Joined { .. } => "joined",
        EventKind::Opened { .. } => "opened",
        EventKind::Choice { .. } => "choice",
        EventKind::Defaulted { .. } => "defaulted",
        EventKind::Finished { .. } => "finished",
        EventKind::Aborted { .. } => "aborted",
    }
}

pub fn log_jsonl(events: &[Event]) -> String {
    events.iter().map(|e| serde_json::to_string(e).expect("serializable") + "\n").collect()
}

/// Parses a JSON-lines log; a malformed line is a replay error at its offset.
pub fn parse_log(text: &str) -> Result<Vec<Event>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Replay { offset: i, detail: e.to_string() }))
        .collect()
}
