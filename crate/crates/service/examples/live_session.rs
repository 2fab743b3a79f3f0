//! Start a server on a free port, open a PAO-TTC session and let one robot per
//! seat play straightforwardly over HTTP and SSE.

use pao::experiments::{market_for, Environment};
use pao::model::{Domain, MarketFile};
use pao::session::{EngineChoice, Mechanism, SessionConfig};
use pao::strategies::straightforward;
use pao_service::{run_robot, AppState, Client, RobotPlan, ServiceConfig};

#[tokio::main]
async fn main() {
    let draw = market_for(1, 1, Environment::TtcAcyclic, 4, 4);
    let market = draw.market();
    let mut file = MarketFile::from_parts(&market, draw.priorities().unwrap().as_ref(), None);
    file.domain = Some(Domain::AllAcceptable);
    let cfg = SessionConfig {
        market: file,
        mechanism: Mechanism::Pao,
        rule: "ttc".into(),
        engine: EngineChoice::Genda,
        tokens: None,
        deadline_ms: None,
        default_policy: None,
        idempotency_key: None,
        budget: None,
    };

    let state = AppState::recover(ServiceConfig::default()).await.unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(async move { pao_service::serve(listener, state).await.unwrap() });
    println!("serving on {url}");

    let client = Client::new(url);
    let created = client.create(&cfg).await.unwrap();
    println!("session {}", created.session);
    let mut robots = Vec::new();
    for (seat, token) in created.tokens.iter().enumerate() {
        let (client, id, token, market) = (client.clone(), created.session.clone(), token.clone(), market.clone());
        let plan = RobotPlan::Picks(Box::new(straightforward(draw.profile[seat].clone())));
        robots.push(tokio::spawn(async move { run_robot(&client, &id, &token, &market, plan).await }));
    }
    for r in robots {
        r.await.unwrap().unwrap();
    }
    let result = client.result(&created.session).await.unwrap();
    println!("{}", serde_json::to_string_pretty(&result).unwrap());
}
