use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Mechanism, Phase, Session, Submission, SCHEMA_VERSION};
use crate::model::{CollectiveHistory, Obj, ObjSet};
use crate::osp::{Action, NodeKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeatStatus {
    Lobby,
    /// A menu or question is waiting for this seat.
    Choose,
    Submitted,
    /// Others are deciding.
    Wait,
    Done,
}

/// One of the seat's own past picks in a PAO session.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PickView {
    pub period: usize,
    pub menu: Vec<String>,
    pub pick: String,
    /// The seat was asked again afterwards.
    pub rejected: bool,
}

/// One of the seat's own past moves in an OSP session.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveView {
    pub period: usize,
    pub kind: NodeKind,
    /// The object clinched, or `None` for a pass.
    pub clinched: Option<String>,
    /// Yes/no answers at an interview, in question order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub answers: Vec<(String, bool)>,
}

/// The question in front of a seat in an OSP session.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionView {
    pub kind: NodeKind,
    /// Objects the seat may clinch now, `∅` included.
    pub clinch: Vec<String>,
    pub pass: bool,
    /// At an interview: the owned objects asked about one by one.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub questions: Vec<String>,
}

/// What one participant may see: own menu, own past picks, the period.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantView {
    pub v: u32,
    pub session: String,
    pub seat: usize,
    pub agent: String,
    pub mechanism: Mechanism,
    pub rule: String,
    pub phase: Phase,
    pub period: usize,
    pub status: SeatStatus,
    /// Current menu; for direct sessions the ranking form (all objects and `∅`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub menu: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<QuestionView>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub picks: Vec<PickView>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub moves: Vec<MoveView>,
    /// The last pick that has not been rejected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub held: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub submitted_report: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assignment: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline_ms: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdminView {
    pub v: u32,
    pub session: String,
    pub mechanism: Mechanism,
    pub rule: String,
    pub phase: Phase,
    pub period: usize,
    pub seats: usize,
    pub joined: usize,
    pub awaiting: usize,
    pub submitted: usize,
    pub events: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allocation: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultView {
    pub v: u32,
    pub session: String,
    pub phase: Phase,
    /// Agent label to object label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allocation: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<CollectiveHistory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moves: Option<Vec<crate::osp::MoveRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl Session {
    fn labels(&self, set: ObjSet) -> Vec<String> {
        set.iter().map(|o| self.market().label(o).to_string()).collect()
    }

    fn label(&self, o: Obj) -> String {
        self.market().label(o).to_string()
    }

    pub fn participant_view(&self, seat: usize) -> ParticipantView {
        let awaited = self.awaiting.contains(&seat);
        let status = match self.phase {
            Phase::Lobby => SeatStatus::Lobby,
            Phase::Finished | Phase::Aborted => SeatStatus::Done,
            Phase::Running if awaited && self.pending[seat].is_some() => SeatStatus::Submitted,
            Phase::Running if awaited => SeatStatus::Choose,
            Phase::Running => SeatStatus::Wait,
        };
        let own = self.history.agent(seat);
        let picks: Vec<PickView> = own
            .offers
            .iter()
            .enumerate()
            .map(|(k, offer)| {
                let later = k + 1 < own.offers.len() || (awaited && self.phase == Phase::Running);
                PickView {
                    period: self.period_of_pick(seat, k),
                    menu: self.labels(offer.menu),
                    pick: self.label(offer.choice),
                    rejected: later,
                }
            })
            .collect();
        let held = picks.last().filter(|p| !p.rejected).map(|p| p.pick.clone());
        let moves = self
            .moves
            .iter()
            .filter(|m| m.player == seat)
            .map(|m| MoveView {
                period: m.step,
                kind: m.kind,
                clinched: match m.action {
                    Action::Clinch(o) => Some(self.label(o)),
                    Action::Pass => None,
                },
                answers: m.interview.iter().map(|a| (self.label(a.object), a.yes)).collect(),
            })
            .collect();
        let question = self.decision.as_ref().filter(|d| d.player == seat && awaited).map(|d| QuestionView {
            kind: d.kind,
            clinch: self.labels(d.clinch),
            pass: d.pass,
            questions: self.labels(d.owned),
        });
        let submitted_report = match &self.pending[seat] {
            Some(Submission::Report { ranking }) => Some(self.market().preference_labels(ranking)),
            _ => self.reports[seat].as_ref().map(|r| self.market().preference_labels(r)),
        };
        ParticipantView {
            v: SCHEMA_VERSION,
            session: self.id().to_string(),
            seat,
            agent: self.market().agent_labels()[seat].clone(),
            mechanism: self.config().mechanism,
            rule: self.config().rule.clone(),
            phase: self.phase,
            period: self.period,
            status,
            menu: (awaited && self.config().mechanism != Mechanism::Osp).then(|| self.labels(self.menus[seat])),
            question,
            picks,
            moves,
            held,
            submitted_report,
            assignment: self.allocation.as_ref().map(|a| self.label(a.get(seat))),
            deadline_ms: self.config().deadline_ms,
        }
    }

    /// Period in which the seat's `k`-th pick was made.
    fn period_of_pick(&self, seat: usize, k: usize) -> usize {
        let mut seen = 0;
        for ev in self.log() {
            if let super::EventKind::Choice { period, seat: s, .. } | super::EventKind::Defaulted { period, seat: s, .. } = &ev.kind {
                if *s == seat {
                    if seen == k {
                        return *period;
                    }
                    seen += 1;
                }
            }
        }
        k + 1
    }

    fn allocation_labels(&self) -> Option<BTreeMap<String, String>> {
        self.allocation.as_ref().map(|a| {
            self.market().agent_labels().iter().enumerate().map(|(i, l)| (l.clone(), self.label(a.get(i)))).collect()
        })
    }

    pub fn admin_view(&self) -> AdminView {
        AdminView {
            v: SCHEMA_VERSION,
            session: self.id().to_string(),
            mechanism: self.config().mechanism,
            rule: self.config().rule.clone(),
            phase: self.phase,
            period: self.period,
            seats: self.n(),
            joined: self.joined.iter().filter(|&&j| j).count(),
            awaiting: self.awaiting.len(),
            submitted: self.awaiting.iter().filter(|&&a| self.pending[a].is_some()).count(),
            events: self.log().len(),
            allocation: self.allocation_labels(),
            reason: self.abort_reason.clone(),
        }
    }

    pub fn result_view(&self) -> ResultView {
        let done = matches!(self.phase, Phase::Finished | Phase::Aborted);
        ResultView {
            v: SCHEMA_VERSION,
            session: self.id().to_string(),
            phase: self.phase,
            allocation: self.allocation_labels(),
            history: (done && self.config().mechanism == Mechanism::Pao).then(|| self.history.clone()),
            moves: (done && self.config().mechanism == Mechanism::Osp).then(|| self.moves.clone()),
            reason: self.abort_reason.clone(),
        }
    }
}
