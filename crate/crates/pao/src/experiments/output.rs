use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::battery::{market_for, osp_game, BatteryConfig, Play, RoundRecord};
use super::metrics::{analyze_records, clinch_pass_from, metrics_from, pivot, CellMetrics, ClinchPassRow};
use crate::engine::{run_pao, GendaMenus};
use crate::error::{Error, Result};
use crate::osp::{play_millipede, scripted_actions, MillipedeStrategy};
use crate::strategies::{scripted, Strategy};

pub const TRANSCRIPTS: &str = "transcripts.jsonl";
pub const METRICS: &str = "metrics.csv";
pub const TABLE2: &str = "table2_truthful.csv";
pub const TABLE3: &str = "table3_clinch_pass.csv";
pub const TABLE4: &str = "table4_avg_rank.csv";
pub const TABLE5: &str = "table5_equilibrium.csv";
pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryManifest {
    pub tool: String,
    pub version: String,
    pub config: BatteryConfig,
    pub records: usize,
    /// File name to lowercase hex SHA-256.
    pub files: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatteryOutput {
    pub metrics: Vec<CellMetrics>,
    pub clinch_pass: Vec<ClinchPassRow>,
    pub manifest: BatteryManifest,
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io(format!("{}: {e}", path.display()))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path).map_err(io(path))?)))
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".into(), |v| format!("{v:.6}"))
}

pub fn metrics_csv(metrics: &[CellMetrics]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "arm",
        "environment",
        "markets",
        "plays",
        "truthful",
        "truthful_rate",
        "avg_rank",
        "avg_payoff",
        "equilibrium_allocation_rate",
        "pareto_rate",
        "deviation_cost",
    ])
    .map_err(csv_err)?;
    for c in metrics {
        w.write_record([
            c.arm.label().to_string(),
            c.environment.label().to_string(),
            c.markets.to_string(),
            c.plays.to_string(),
            c.truthful.to_string(),
            format!("{:.6}", c.truthful_rate),
            format!("{:.6}", c.avg_rank),
            format!("{:.6}", c.avg_payoff),
            format!("{:.6}", c.equilibrium_allocation_rate),
            format!("{:.6}", c.pareto_rate),
            opt(c.deviation_cost),
        ])
        .map_err(csv_err)?;
    }
    String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.to_string()))?).map_err(|e| Error::Io(e.to_string()))
}

fn pivot_csv(rows: Vec<[String; 4]>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["environment", "Direct", "PAO", "OSP"]).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.to_string()))?).map_err(|e| Error::Io(e.to_string()))
}

fn clinch_pass_csv(rows: &[ClinchPassRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["environment", "agents", "first_node_clinch", "first_node_pass", "no_decision", "observed_with_pass"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.environment.label().to_string(),
            r.agents.to_string(),
            r.first_node_clinch.to_string(),
            r.first_node_pass.to_string(),
            r.no_decision.to_string(),
            r.observed_with_pass.to_string(),
        ])
        .map_err(csv_err)?;
    }
    String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.to_string()))?).map_err(|e| Error::Io(e.to_string()))
}

/// The derived tables as `(file name, contents)`.
pub fn render_tables(metrics: &[CellMetrics], clinch_pass: &[ClinchPassRow]) -> Result<Vec<(&'static str, String)>> {
    Ok(vec![
        (METRICS, metrics_csv(metrics)?),
        (TABLE2, pivot_csv(pivot(metrics, |c| c.truthful_rate))?),
        (TABLE3, clinch_pass_csv(clinch_pass)?),
        (TABLE4, pivot_csv(pivot(metrics, |c| c.avg_rank))?),
        (TABLE5, pivot_csv(pivot(metrics, |c| c.equilibrium_allocation_rate))?),
    ])
}

/// Writes transcripts, tables and a hashed manifest into `dir`.
pub fn write_battery(dir: &Path, config: &BatteryConfig, records: &[RoundRecord]) -> Result<BatteryOutput> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let analyses = analyze_records(records)?;
    let metrics = metrics_from(&analyses)?;
    let clinch_pass = clinch_pass_from(&analyses);
    let tpath = dir.join(TRANSCRIPTS);
    {
        let mut f = std::io::BufWriter::new(fs::File::create(&tpath).map_err(io(&tpath))?);
        for r in records {
            serde_json::to_writer(&mut f, r).map_err(|e| Error::Io(e.to_string()))?;
            f.write_all(b"\n").map_err(io(&tpath))?;
        }
        f.flush().map_err(io(&tpath))?;
    }
    let mut files = BTreeMap::new();
    files.insert(TRANSCRIPTS.to_string(), sha256_file(&tpath)?);
    for (name, body) in render_tables(&metrics, &clinch_pass)? {
        let p = dir.join(name);
        fs::write(&p, body).map_err(io(&p))?;
        files.insert(name.to_string(), sha256_file(&p)?);
    }
    let manifest = BatteryManifest {
        tool: "pao".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        records: records.len(),
        files,
    };
    let mpath = dir.join(MANIFEST);
    fs::write(&mpath, serde_json::to_string_pretty(&manifest).expect("serializable")).map_err(io(&mpath))?;
    Ok(BatteryOutput { metrics, clinch_pass, manifest })
}

pub fn read_transcripts(path: &Path) -> Result<Vec<RoundRecord>> {
    let f = fs::File::open(path).map_err(io(path))?;
    BufReader::new(f)
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
        .map(|(i, l)| {
            let l = l.map_err(io(path))?;
            serde_json::from_str(&l).map_err(|e| Error::Validation(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Loads a battery directory, checking every hash in the manifest.
pub fn load_battery(dir: &Path) -> Result<(BatteryManifest, Vec<RoundRecord>)> {
    let mpath = dir.join(MANIFEST);
    let manifest: BatteryManifest = serde_json::from_str(&fs::read_to_string(&mpath).map_err(io(&mpath))?)
        .map_err(|e| Error::Validation(format!("{}: {e}", mpath.display())))?;
    for (name, want) in &manifest.files {
        let got = sha256_file(&dir.join(name))?;
        if &got != want {
            return Err(Error::Validation(format!("{name}: hash {got} does not match manifest {want}")));
        }
    }
    let records = read_transcripts(&dir.join(TRANSCRIPTS))?;
    if records.len() != manifest.records {
        return Err(Error::Validation(format!("{} records, manifest says {}", records.len(), manifest.records)));
    }
    Ok((manifest, records))
}

/// Replays one record from its own moves: the market must regenerate from
/// its seed and the recorded play must reproduce the recorded allocation.
pub fn verify_record(r: &RoundRecord, n: usize, m: usize) -> Result<()> {
    let fail = |what: &str| {
        Err(Error::Validation(format!(
            "seed {} group {} round {} {:?}: {what}",
            r.seed, r.group, r.round, r.arm
        )))
    };
    if market_for(r.seed, r.round, r.environment, n, m) != r.draw {
        return fail("market does not regenerate from its seed");
    }
    let rule = r.draw.rule()?;
    match &r.play {
        Play::Direct { reports } => {
            if rule.evaluate(reports)? != r.allocation {
                return fail("reports do not produce the allocation");
            }
        }
        Play::Pao { transcript } => {
            let menus = GendaMenus::for_rule(&rule)?;
            let mut s: Vec<Box<dyn Strategy>> = transcript
                .history
                .agents
                .iter()
                .map(|h| Box::new(scripted(h.choices().collect())) as Box<dyn Strategy>)
                .collect();
            let again = run_pao(&menus, &mut s)?;
            if &again != transcript || again.allocation.as_ref() != Some(&r.allocation) {
                return fail("choices do not replay to the transcript");
            }
        }
        Play::Osp { transcript } => {
            let game = osp_game(&r.draw)?;
            let mut s: Vec<Box<dyn MillipedeStrategy>> = (0..n)
                .map(|a| {
                    let acts = transcript.moves.iter().filter(|mv| mv.player == a).map(|mv| mv.action).collect();
                    Box::new(scripted_actions(acts)) as Box<dyn MillipedeStrategy>
                })
                .collect();
            let again = play_millipede(&game, &mut s)?;
            if &again != transcript || again.allocation != r.allocation {
                return fail("actions do not replay to the transcript");
            }
        }
    }
    Ok(())
}

/// Reloads a battery directory, replays every record and recomputes every
/// table; returns the recomputed metrics when all files match byte for byte.
pub fn recompute_battery(dir: &Path) -> Result<Vec<CellMetrics>> {
    let (manifest, records) = load_battery(dir)?;
    let (n, m) = (manifest.config.n, manifest.config.m);
    records.par_iter().try_for_each(|r| verify_record(r, n, m))?;
    let analyses = analyze_records(&records)?;
    let metrics = metrics_from(&analyses)?;
    let clinch_pass = clinch_pass_from(&analyses);
    for (name, body) in render_tables(&metrics, &clinch_pass)? {
        let p = dir.join(name);
        if fs::read_to_string(&p).map_err(io(&p))? != body {
            return Err(Error::Validation(format!("{name} differs from the recomputed table")));
        }
    }
    Ok(metrics)
}
