//! Run the exhaustive axiom checkers on the textbook rules and the two
//! hand-built examples, printing any counterexample found.

use pao::model::{Budget, Market, Priorities};
use pao::properties::Checker;
use pao::rules::Rule;

fn main() -> pao::Result<()> {
    let market = Market::new(3, 3);
    let rotated = Priorities::new(3, vec![vec![0, 1, 2], vec![1, 2, 0], vec![2, 0, 1]])?;
    let rules = vec![
        Rule::sd(market.clone(), &[3.0, 2.0, 1.0])?,
        Rule::ttc(market.clone(), rotated.clone())?,
        Rule::da(market.clone(), rotated.clone())?,
        Rule::boston(market, rotated)?,
        Rule::example1(),
        Rule::example2(),
    ];
    for rule in &rules {
        let checker = Checker::new(rule, Budget::default())?;
        for prop in ["md", "sp", "rm", "nb"] {
            let r = checker.check(prop)?;
            println!("{:<8} {:<4} {:?} ({} profiles)", rule.name(), prop, r.verdict, r.profiles_examined);
            if let Some(w) = &r.witness {
                println!("         {}", serde_json::to_string(w).unwrap());
            }
        }
    }
    Ok(())
}
