//! A small simulated experiment: three seeds of 8x8 markets under every
//! treatment, half of the agents random. Writes the output tables to a
//! directory given as the first argument, or a temporary one.

use pao::experiments::{metrics_csv, run_battery, write_battery, AgentMix, BatteryConfig, TreatmentPlan};

fn main() -> pao::Result<()> {
    let dir = match std::env::args().nth(1) {
        Some(d) => std::path::PathBuf::from(d),
        None => std::env::temp_dir().join("pao-simulate-example"),
    };
    std::fs::create_dir_all(&dir)?;
    let config = BatteryConfig {
        plan: TreatmentPlan::table1(),
        mix: AgentMix::parse("half-random", 8)?,
        seeds: vec![1, 2, 3],
        groups: 2,
        n: 8,
        m: 8,
    };
    let records = run_battery(&config)?;
    let out = write_battery(&dir, &config, &records)?;
    print!("{}", metrics_csv(&out.metrics)?);
    for f in ["table2_truthful.csv", "table4_avg_rank.csv", "table5_equilibrium.csv"] {
        println!("\n{f}\n{}", std::fs::read_to_string(dir.join(f))?);
    }
    eprintln!("wrote {}", dir.display());
    Ok(())
}
