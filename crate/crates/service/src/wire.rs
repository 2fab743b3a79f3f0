//! Request and response bodies. Every response carries `v`.

use serde::{Deserialize, Serialize};

use pao::session::{AdminView, Event, ParticipantView};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Created {
    pub v: u32,
    pub session: String,
    pub seats: usize,
    pub tokens: Vec<String>,
    pub admin_token: String,
    /// The idempotency key named a session that already existed.
    pub existing: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct JoinRequest {
    pub token: String,
    /// Ranking by labels, all objects and `∅`; used by the default policy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Joined {
    pub v: u32,
    pub session: String,
    pub seat: usize,
    pub view: ParticipantView,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WireAction {
    Pass,
    Clinch(String),
}

/// Exactly one of `object`, `ranking` and `action` must be set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChoiceRequest {
    /// Falls back to the bearer token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<String>,
    /// Guards against answering a period that already closed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranking: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<WireAction>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub v: u32,
    pub accepted: bool,
    pub seat: usize,
    pub period: usize,
    pub view: ParticipantView,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventsResponse {
    pub v: u32,
    pub admin: AdminView,
    pub events: Vec<Event>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    /// `invalid-choice`, `already-submitted`, `not-awaited`, `unauthorized`,
    /// `not-found`, `validation`, `conflict` or `internal`.
    pub kind: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub v: u32,
    pub error: ErrorBody,
}
