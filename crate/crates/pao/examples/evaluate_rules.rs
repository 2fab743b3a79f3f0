//! Evaluate the four preset rules on one generated 6x6 market.

use pao::experiments::{market_for, Environment};
use pao::rules::Rule;

fn main() -> pao::Result<()> {
    let draw = market_for(7, 1, Environment::TtcAcyclic, 6, 6);
    let market = draw.market();
    let pri = draw.priorities()?;
    for (a, p) in draw.profile.iter().enumerate() {
        println!("{:>3}: {}", market.agent_labels()[a], market.preference_labels(p).join(" > "));
    }
    let scores: Vec<f64> = (0..market.n()).map(|a| 100.0 - a as f64).collect();
    for name in ["sd", "ttc", "da", "boston"] {
        let rule = Rule::preset(name, &market, pri.as_ref(), Some(&scores))?;
        let mu = rule.evaluate(&draw.profile)?;
        println!("{name:>7}: {}", mu.labels(&market).join(" "));
    }
    Ok(())
}
