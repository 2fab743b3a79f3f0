//! Straightforward play of the canonical menus for φ*, one run per ranking.
//! Some histories leave an agent without any attainable menu.

use std::sync::Arc;

use pao::engine::{run_straightforward, CanonicalMenus};
use pao::model::Budget;
use pao::rules::Rule;
use pao::table::RuleTable;

fn main() -> pao::Result<()> {
    let phi = Rule::phi_star();
    let market = phi.market().clone();
    let table = Arc::new(RuleTable::new(&phi, Budget::default())?);
    let menus = CanonicalMenus::new(table.clone());
    for i in 0..table.profile_count() {
        let p = table.profile(i);
        let tr = run_straightforward(&menus, &p)?;
        let picks: Vec<_> = tr.periods.iter().filter_map(|r| r.choices[0]).map(|o| market.label(o).to_string()).collect();
        let end = if tr.is_gridlock() { "gridlock".to_string() } else { format!("gets {}", market.label(tr.outcome()?.get(0))) };
        println!("{:<20} picks {:<12} {end}", market.preference_labels(&p[0]).join(">"), picks.join(","));
    }
    Ok(())
}
