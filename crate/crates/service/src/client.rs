use eventsource_stream::Eventsource;
use futures::{Stream, StreamExt};
use serde::de::DeserializeOwned;
use serde::Serialize;

use pao::model::{ChoiceHistory, Market, Preference};
use pao::session::{AdminView, ParticipantView, Phase, ResultView, SessionConfig, SeatStatus};
use pao::strategies::Strategy;

use crate::wire::{Ack, ApiError, ChoiceRequest, Created, EventsResponse, JoinRequest, Joined};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("http: {0}")]
    Http(#[from] reqwest::Error),
    /// The server answered with an error body.
    #[error("{status} {}: {}", .body.error.kind, .body.error.message)]
    Api { status: u16, body: ApiError },
    #[error("stream: {0}")]
    Stream(String),
    #[error(transparent)]
    Model(#[from] pao::Error),
}

impl ClientError {
    pub fn kind(&self) -> Option<&str> {
        match self {
            ClientError::Api { body, .. } => Some(&body.error.kind),
            _ => None,
        }
    }
}

pub type ClientResult<T> = Result<T, ClientError>;

#[derive(Clone, Debug)]
pub struct Client {
    http: reqwest::Client,
    base: String,
}

async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> ClientResult<T> {
    let status = resp.status();
    if status.is_success() {
        Ok(resp.json().await?)
    } else {
        let body: ApiError = resp.json().await?;
        Err(ClientError::Api { status: status.as_u16(), body })
    }
}

impl Client {
    pub fn new(base: impl Into<String>) -> Client {
        Client { http: reqwest::Client::new(), base: base.into().trim_end_matches('/').to_string() }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> ClientResult<T> {
        decode(self.http.post(self.url(path)).json(body).send().await?).await
    }

    async fn get<T: DeserializeOwned>(&self, path: &str, token: Option<&str>) -> ClientResult<T> {
        let mut req = self.http.get(self.url(path));
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        decode(req.send().await?).await
    }

    pub async fn create(&self, config: &SessionConfig) -> ClientResult<Created> {
        self.post("/sessions", config).await
    }

    pub async fn join(&self, session: &str, token: &str, declared: Option<Vec<String>>) -> ClientResult<Joined> {
        self.post(&format!("/sessions/{session}/join"), &JoinRequest { token: token.into(), declared }).await
    }

    pub async fn view(&self, session: &str, token: &str) -> ClientResult<ParticipantView> {
        self.get(&format!("/sessions/{session}/view"), Some(token)).await
    }

    pub async fn admin_view(&self, session: &str, admin_token: &str) -> ClientResult<AdminView> {
        self.get(&format!("/sessions/{session}/view"), Some(admin_token)).await
    }

    pub async fn choose(&self, session: &str, request: &ChoiceRequest) -> ClientResult<Ack> {
        self.post(&format!("/sessions/{session}/choice"), request).await
    }

    pub async fn result(&self, session: &str) -> ClientResult<ResultView> {
        self.get(&format!("/sessions/{session}/result"), None).await
    }

    pub async fn events(&self, session: &str, admin_token: &str) -> ClientResult<EventsResponse> {
        self.get(&format!("/sessions/{session}/events"), Some(admin_token)).await
    }

    /// Participant views pushed by the server, starting with the current one.
    pub async fn stream(
        &self,
        session: &str,
        token: &str,
    ) -> ClientResult<impl Stream<Item = ClientResult<ParticipantView>> + use<>> {
        let resp = self.http.get(self.url(&format!("/sessions/{session}/stream"))).bearer_auth(token).send().await?;
        if !resp.status().is_success() {
            let status = resp.status().as_u16();
            return Err(ClientError::Api { status, body: resp.json().await? });
        }
        Ok(resp.bytes_stream().eventsource().filter_map(|ev| async move {
            match ev {
                Ok(ev) if ev.event == "view" => {
                    Some(serde_json::from_str(&ev.data).map_err(|e| ClientError::Stream(e.to_string())))
                }
                Ok(_) => None,
                Err(e) => Some(Err(ClientError::Stream(e.to_string()))),
            }
        }))
    }
}

/// How a robot participant answers.
pub enum RobotPlan {
    /// PAO sessions: a strategy fed the seat's own history.
    Picks(Box<dyn Strategy>),
    /// Direct sessions: one ranking.
    Report(Preference),
}

/// Rebuilds a seat's own choice history from its view.
pub fn own_history(market: &Market, view: &ParticipantView) -> pao::Result<ChoiceHistory> {
    let mut h = ChoiceHistory::new();
    for p in &view.picks {
        let menu = p.menu.iter().map(|l| market.parse_obj(l)).collect::<pao::Result<_>>()?;
        h.push(menu, market.parse_obj(&p.pick)?)?;
    }
    Ok(h)
}

/// Joins a seat and answers every period it is asked in, following the SSE
/// stream until the session ends. Returns the last view.
pub async fn run_robot(
    client: &Client,
    session: &str,
    token: &str,
    market: &Market,
    mut plan: RobotPlan,
) -> ClientResult<ParticipantView> {
    let joined = client.join(session, token, None).await?;
    let mut last = joined.view;
    let mut answered = 0usize;
    let mut views = Box::pin(client.stream(session, token).await?);
    while let Some(view) = views.next().await {
        let view = view?;
        if view.status == SeatStatus::Choose && view.period > answered {
            let menu = view.menu.clone().unwrap_or_default();
            let mut req = ChoiceRequest { token: Some(token.into()), period: Some(view.period), ..Default::default() };
            match &mut plan {
                RobotPlan::Picks(strategy) => {
                    let menu = menu.iter().map(|l| market.parse_obj(l)).collect::<pao::Result<_>>()?;
                    let pick = strategy.choose(&own_history(market, &view)?, menu)?;
                    req.object = Some(market.label(pick).to_string());
                }
                RobotPlan::Report(pref) => req.ranking = Some(market.preference_labels(pref)),
            }
            client.choose(session, &req).await?;
            answered = view.period;
        }
        let over = matches!(view.phase, Phase::Finished | Phase::Aborted);
        last = view;
        if over {
            break;
        }
    }
    Ok(last)
}
