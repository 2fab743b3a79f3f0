//! Build the OSP millipede game for TTC on an acyclic market, play it greedily
//! and again through the pick-an-object adapter.

use std::sync::Arc;

use pao::engine::{osp_to_pao, run_straightforward};
use pao::experiments::{market_for, Environment};
use pao::osp::{build_osp_ttc, check_acyclic, classify_path, play_greedy};
use pao::rules::Rule;

fn main() -> pao::Result<()> {
    let draw = market_for(5, 1, Environment::TtcAcyclic, 5, 5);
    let market = draw.market();
    let pri = draw.priorities()?.expect("priority environment");
    println!("acyclic: {}", check_acyclic(&pri));
    let game = Arc::new(build_osp_ttc(&market, &pri)?);
    let greedy = play_greedy(&game, &draw.profile)?;
    println!("greedy  {}", greedy.allocation.labels(&market).join(" "));
    println!("paths   {:?}", classify_path(&greedy));
    let via = run_straightforward(&osp_to_pao(game), &draw.profile)?;
    println!("adapter {} in {} periods", via.outcome()?.labels(&market).join(" "), via.periods.len());
    println!("direct  {}", Rule::ttc(market.clone(), pri)?.evaluate(&draw.profile)?.labels(&market).join(" "));
    Ok(())
}
