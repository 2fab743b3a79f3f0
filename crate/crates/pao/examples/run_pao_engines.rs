//! Drive the same DA market through the canonical and the generalized-DA menu
//! functions and print the period-by-period menus.

use std::sync::Arc;

use pao::engine::{run_straightforward, CanonicalMenus, GendaMenus, MenuFunction};
use pao::experiments::{market_for, Environment};
use pao::model::Budget;
use pao::rules::Rule;
use pao::table::RuleTable;

fn main() -> pao::Result<()> {
    let draw = market_for(3, 1, Environment::TtcCyclic, 3, 3);
    let market = draw.market();
    let rule = Rule::da(market.clone(), draw.priorities()?.expect("priority environment"))?;
    let canonical = CanonicalMenus::new(Arc::new(RuleTable::new(&rule, Budget::default())?));
    let genda = GendaMenus::for_rule(&rule)?;
    for menus in [&canonical as &dyn MenuFunction, &genda] {
        let tr = run_straightforward(menus, &draw.profile)?;
        println!("{}", menus.name());
        for (t, period) in tr.periods.iter().enumerate() {
            let offers: Vec<String> = period
                .menus
                .iter()
                .zip(&period.choices)
                .map(|(menu, c)| {
                    let items: Vec<&str> = menu.iter().map(|o| market.label(o)).collect();
                    format!("{{{}}}->{}", items.join(","), c.map_or("-", |o| market.label(o)))
                })
                .collect();
            println!("  t={} {}", t + 1, offers.join("  "));
        }
        println!("  outcome {}", tr.outcome()?.labels(&market).join(" "));
    }
    println!("direct  {}", rule.evaluate(&draw.profile)?.labels(&market).join(" "));
    Ok(())
}
