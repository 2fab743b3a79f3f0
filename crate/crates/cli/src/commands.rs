use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::json;

use pao::engine::{
    check_expost_incentives, osp_to_pao, probe_uniqueness, run_pao, transcript_jsonl, CanonicalMenus, GendaMenus,
    MenuFunction, PaoTranscript,
};
use pao::experiments::{
    analyze_records, clinch_pass_from, market_for, metrics_csv, metrics_from, render_tables, run_battery, write_battery,
    AgentMix, BatteryConfig, TreatmentPlan, MANIFEST, METRICS, TRANSCRIPTS,
};
use pao::model::{parse_profile, profile_document, Budget, Market, MarketFile, Profile};
use pao::osp::{
    action_label, build_osp_sd, build_osp_ttc, classify_path, osp_transcript_jsonl, play_millipede, MillipedeGame,
    MillipedeStrategy, MillipedeStrategySpec, OspTranscript,
};
use pao::properties::{Checker, PropertyReport};
use pao::rules::Rule;
use pao::strategies::{Strategy, StrategySpec};
use pao::table::RuleTable;

use crate::args::{EngineArg, Format, Global, MarketArgs};
use crate::render::{csv_line, csv_rows, grid, set_label};
use crate::{read_json, CliError, Outcome};

type Result<T> = std::result::Result<T, CliError>;

pub(crate) struct Loaded {
    pub file: MarketFile,
    pub market: Market,
    pub rule: Rule,
    pub profile: Option<Profile>,
}

impl Loaded {
    pub fn profile(&self) -> Result<&Profile> {
        self.profile.as_ref().ok_or_else(|| CliError::Usage("a profile is needed: pass --profile or --env".into()))
    }

    pub fn inputs(&self) -> serde_json::Value {
        json!({
            "rule": self.rule.name(),
            "market": self.file,
            "profile": self.profile.as_ref().map(|p| profile_document(&self.market, p)),
        })
    }
}

/// Presets with their own universe, usable without a market.
const FIXED_PRESETS: &[(&str, fn() -> Rule)] =
    &[("phi-star", Rule::phi_star), ("example1", Rule::example1), ("example2", Rule::example2)];

pub(crate) fn rule_from_file(name: &str, file: &MarketFile) -> Result<(Market, Rule)> {
    let market = file.market()?;
    let pri = file.priorities(&market)?;
    let scores = file.scores(&market)?;
    let rule = Rule::preset(name, &market, pri.as_ref(), scores.as_deref())?;
    Ok((market, rule))
}

pub(crate) fn load(g: &Global, rule: &str, a: &MarketArgs) -> Result<Loaded> {
    let mut drawn = None;
    let mut file = match (&a.market, a.env) {
        (Some(path), _) => read_json::<MarketFile>(path)?,
        (None, Some(env)) => {
            let draw = market_for(g.seed, 1, env.into(), a.n, a.m);
            let market = draw.market();
            let file = MarketFile::from_parts(&market, draw.priorities()?.as_ref(), draw.scores.as_deref());
            drawn = Some(draw.profile);
            file
        }
        (None, None) if FIXED_PRESETS.iter().any(|(name, _)| *name == rule) => {
            let (_, preset) = FIXED_PRESETS.iter().find(|(name, _)| *name == rule).expect("listed");
            MarketFile::from_parts(preset().market(), None, None)
        }
        (None, None) => return Err(CliError::Usage(format!("rule {rule} needs --market or --env"))),
    };
    if let Some(d) = a.domain {
        file.domain = Some(d.into());
    }
    let (market, rule) = rule_from_file(rule, &file)?;
    let profile = match &a.profile {
        Some(path) => Some(parse_profile(&market, &read_json(path)?)?),
        None => drawn,
    };
    if let Some(p) = &profile {
        market.check_profile(p)?;
    }
    Ok(Loaded { file, market, rule, profile })
}

fn budget(g: &Global) -> Budget {
    g.budget.map(Budget).unwrap_or_default()
}

fn labels(market: &Market, set: pao::model::ObjSet) -> Vec<String> {
    set.iter().map(|o| market.label(o).to_string()).collect()
}

fn json_line(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string(v).expect("serializable");
    s.push('\n');
    s
}

fn pretty(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn with_inputs(l: &Loaded, out: Outcome) -> Outcome {
    let mut out = out.file("market.json", pretty(&l.file));
    if let Some(p) = &l.profile {
        out = out.file("profile.json", pretty(&profile_document(&l.market, p)));
    }
    out
}

pub(crate) fn eval(g: &Global, rule: &str, a: &MarketArgs) -> Result<Outcome> {
    let l = load(g, rule, a)?;
    let alloc = l.rule.evaluate(l.profile()?)?;
    let pairs: BTreeMap<String, String> = l
        .market
        .agent_labels()
        .iter()
        .enumerate()
        .map(|(i, a)| (a.clone(), l.market.label(alloc.get(i)).to_string()))
        .collect();
    let doc = json!({ "v": pao::session::SCHEMA_VERSION, "rule": l.rule.name(), "allocation": pairs });
    let rows: Vec<Vec<String>> = l
        .market
        .agent_labels()
        .iter()
        .map(|a| vec![a.clone(), pairs[a].clone()])
        .collect();
    let header = vec!["agent".to_string(), "object".to_string()];
    let stdout = match g.format {
        Format::Json => json_line(&doc),
        Format::Csv => std::iter::once(&header).chain(&rows).map(|r| csv_line(r)).collect(),
        Format::Table => grid(&std::iter::once(header).chain(rows).collect::<Vec<_>>()),
    };
    Ok(with_inputs(&l, Outcome::new(stdout, l.inputs())).file("allocation.json", pretty(&doc)))
}

pub(crate) fn menus_for(engine: EngineArg, rule: &Rule, file: &MarketFile, budget: Budget) -> Result<Box<dyn MenuFunction>> {
    Ok(match engine {
        EngineArg::Genda => Box::new(GendaMenus::for_rule(rule)?),
        EngineArg::Canonical => Box::new(CanonicalMenus::new(Arc::new(RuleTable::new(rule, budget)?))),
        EngineArg::OspAdapter => Box::new(osp_to_pao(Arc::new(game_for(rule.name(), file)?))),
    })
}

pub(crate) fn game_for(rule: &str, file: &MarketFile) -> Result<MillipedeGame> {
    let market = file.market()?;
    match rule {
        "sd" => {
            let scores = file.scores(&market)?.ok_or_else(|| pao::Error::Validation("OSP-SD needs scores".into()))?;
            Ok(build_osp_sd(&market, &scores)?)
        }
        "ttc" => {
            let pri = file.priorities(&market)?.ok_or_else(|| pao::Error::Validation("OSP-TTC needs priorities".into()))?;
            Ok(build_osp_ttc(&market, &pri)?)
        }
        other => Err(pao::Error::Unsupported(format!("no OSP game for rule {other}; use sd or ttc")).into()),
    }
}

fn script<T: serde::de::DeserializeOwned>(market: &Market, path: Option<&Path>) -> Result<BTreeMap<String, T>> {
    let Some(path) = path else { return Ok(BTreeMap::new()) };
    let doc: BTreeMap<String, T> = read_json(path)?;
    for agent in doc.keys() {
        market.agent_index(agent)?;
    }
    Ok(doc)
}

pub(crate) fn pao_strategies(l: &Loaded, doc: &BTreeMap<String, StrategySpec>) -> Result<Vec<Box<dyn Strategy>>> {
    l.market
        .agent_labels()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let spec = doc.get(a).cloned().unwrap_or(StrategySpec::Straightforward);
            let truth = match spec {
                StrategySpec::Straightforward => Some(&l.profile()?[i]),
                _ => l.profile.as_ref().map(|p| &p[i]),
            };
            Ok(spec.build(&l.market, truth)?)
        })
        .collect()
}

pub(crate) fn render_pao(tr: &PaoTranscript, market: &Market, format: Format) -> String {
    let header = ["t", "agent", "menu", "choice"].map(String::from).to_vec();
    let rows = tr.periods.iter().flat_map(|p| {
        p.active.iter().map(move |&a| {
            vec![
                p.t.to_string(),
                market.agent_labels()[a].clone(),
                set_label(&labels(market, p.menus[a])),
                market.label(p.choices[a].expect("active agents choose")).to_string(),
            ]
        })
    });
    match format {
        Format::Json => transcript_jsonl(tr, market),
        Format::Csv => std::iter::once(header).chain(rows).map(|r| csv_line(&r)).collect(),
        Format::Table => {
            let mut s = grid(&std::iter::once(header).chain(rows).collect::<Vec<_>>());
            let end = match &tr.allocation {
                Some(a) => format!("allocation: {}", a.labels(market).join(" ")),
                None => "gridlock".to_string(),
            };
            s.push_str(&end);
            s.push('\n');
            s
        }
    }
}

pub(crate) fn run_pao_cmd(
    g: &Global,
    rule: &str,
    a: &MarketArgs,
    engine: EngineArg,
    strategies: Option<&Path>,
) -> Result<Outcome> {
    let l = load(g, rule, a)?;
    let doc: BTreeMap<String, StrategySpec> = script(&l.market, strategies)?;
    let mut s = pao_strategies(&l, &doc)?;
    let menus = menus_for(engine, &l.rule, &l.file, budget(g))?;
    let tr = run_pao(menus.as_ref(), &mut s)?;
    let mut inputs = l.inputs();
    inputs["engine"] = json!(engine.name());
    inputs["strategies"] = json!(doc);
    let out = Outcome::new(render_pao(&tr, &l.market, g.format), inputs).file("transcript.jsonl", transcript_jsonl(&tr, &l.market));
    Ok(with_inputs(&l, out))
}

pub(crate) fn osp_strategies(l: &Loaded, doc: &BTreeMap<String, MillipedeStrategySpec>) -> Result<Vec<Box<dyn MillipedeStrategy>>> {
    l.market
        .agent_labels()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let spec = doc.get(a).cloned().unwrap_or(MillipedeStrategySpec::Greedy);
            let truth = match spec {
                MillipedeStrategySpec::Greedy => Some(&l.profile()?[i]),
                _ => l.profile.as_ref().map(|p| &p[i]),
            };
            Ok(spec.build(&l.market, truth)?)
        })
        .collect()
}

pub(crate) fn render_osp(tr: &OspTranscript, market: &Market, format: Format) -> String {
    let header = ["step", "player", "kind", "clinch", "pass", "action"].map(String::from).to_vec();
    let rows = tr.moves.iter().map(|m| {
        vec![
            m.step.to_string(),
            market.agent_labels()[m.player].clone(),
            serde_json::to_value(m.kind).expect("serializable").as_str().unwrap_or_default().to_string(),
            set_label(&labels(market, m.clinch)),
            m.pass.to_string(),
            action_label(market, m.action),
        ]
    });
    match format {
        Format::Json => osp_transcript_jsonl(tr, market),
        Format::Csv => std::iter::once(header).chain(rows).map(|r| csv_line(&r)).collect(),
        Format::Table => {
            let mut s = grid(&std::iter::once(header).chain(rows).collect::<Vec<_>>());
            let paths = classify_path(tr);
            for (i, a) in market.agent_labels().iter().enumerate() {
                s.push_str(&format!(
                    "{a}: {} ({})\n",
                    market.label(tr.allocation.get(i)),
                    serde_json::to_value(paths[i]).expect("serializable").as_str().unwrap_or_default()
                ));
            }
            s
        }
    }
}

pub(crate) fn run_osp(g: &Global, rule: &str, a: &MarketArgs, strategies: Option<&Path>) -> Result<Outcome> {
    let l = load(g, rule, a)?;
    let game = game_for(l.rule.name(), &l.file)?;
    let doc: BTreeMap<String, MillipedeStrategySpec> = script(&l.market, strategies)?;
    let mut s = osp_strategies(&l, &doc)?;
    let tr = play_millipede(&game, &mut s)?;
    let mut inputs = l.inputs();
    inputs["strategies"] = json!(doc);
    let out = Outcome::new(render_osp(&tr, &l.market, g.format), inputs).file("transcript.jsonl", osp_transcript_jsonl(&tr, &l.market));
    Ok(with_inputs(&l, out))
}

const ENGINE_PROPERTIES: &[&str] = &["ex-post-incentives", "probe-uniqueness"];

pub(crate) fn check(g: &Global, rule: &str, a: &MarketArgs, properties: &[String], engine: EngineArg) -> Result<Outcome> {
    let l = load(g, rule, a)?;
    let checker = Checker::new(&l.rule, budget(g))?;
    let mut reports: Vec<PropertyReport> = Vec::new();
    for p in properties {
        let report = if ENGINE_PROPERTIES.contains(&p.as_str()) {
            let menus: Box<dyn MenuFunction> = match engine {
                EngineArg::Canonical => Box::new(CanonicalMenus::new(checker.shared_table())),
                e => menus_for(e, &l.rule, &l.file, budget(g))?,
            };
            if p == "ex-post-incentives" {
                check_expost_incentives(checker.table(), menus.as_ref())?
            } else {
                probe_uniqueness(checker.table(), menus.as_ref())?
            }
        } else {
            checker.check(p)?
        };
        reports.push(report);
    }
    let header = ["property", "rule", "verdict", "profiles_examined", "elapsed_ms"].map(String::from).to_vec();
    let rows = reports.iter().map(|r| {
        vec![
            r.property.clone(),
            r.rule.clone(),
            if r.holds() { "holds" } else { "fails" }.to_string(),
            r.profiles_examined.to_string(),
            r.elapsed_ms.to_string(),
        ]
    });
    let stdout = match g.format {
        Format::Json => reports.iter().map(json_line).collect(),
        Format::Csv => std::iter::once(header).chain(rows).map(|r| csv_line(&r)).collect(),
        Format::Table => grid(&std::iter::once(header).chain(rows).collect::<Vec<_>>()),
    };
    let mut inputs = l.inputs();
    inputs["properties"] = json!(properties);
    inputs["engine"] = json!(engine.name());
    let mut out = Outcome::new(stdout, inputs).file("reports.jsonl", reports.iter().map(json_line).collect::<String>());
    for r in reports.iter().filter(|r| !r.holds()) {
        out = out.file(&format!("witness-{}.json", r.property), pretty(&r.witness));
    }
    out.exit = if reports.iter().all(PropertyReport::holds) { 0 } else { 1 };
    Ok(with_inputs(&l, out))
}

/// `a..b` and `a..=b` both include `b`; otherwise a comma list.
pub fn parse_seeds(spec: &str) -> std::result::Result<Vec<u64>, String> {
    let num = |s: &str| s.trim().parse::<u64>().map_err(|e| format!("bad seed {s:?}: {e}"));
    if let Some((a, b)) = spec.split_once("..") {
        let (a, b) = (num(a)?, num(b.strip_prefix('=').unwrap_or(b))?);
        if a > b {
            return Err(format!("empty seed range {spec}"));
        }
        return Ok((a..=b).collect());
    }
    spec.split(',').map(num).collect()
}

pub(crate) fn simulate(
    g: &Global,
    plan: &str,
    mix: &str,
    seeds: Option<&str>,
    groups: usize,
    n: usize,
    m: usize,
) -> Result<Outcome> {
    let seeds = match seeds {
        Some(s) => parse_seeds(s).map_err(CliError::Usage)?,
        None => vec![g.seed],
    };
    let config = BatteryConfig { plan: TreatmentPlan::by_name(plan)?, mix: AgentMix::parse(mix, n)?, seeds, groups, n, m };
    let records = run_battery(&config)?;
    let (metrics, clinch_pass, written) = match &g.out {
        Some(dir) => {
            let out = write_battery(dir, &config, &records)?;
            let mut names: Vec<String> = out.manifest.files.keys().cloned().collect();
            names.push(MANIFEST.into());
            (out.metrics, out.clinch_pass, names)
        }
        None => {
            let analyses = analyze_records(&records)?;
            (metrics_from(&analyses)?, clinch_pass_from(&analyses), Vec::new())
        }
    };
    let stdout = match g.format {
        Format::Json => pretty(&metrics),
        Format::Csv => metrics_csv(&metrics)?,
        Format::Table => render_tables(&metrics, &clinch_pass)?
            .into_iter()
            .filter(|(name, _)| *name != METRICS)
            .map(|(name, body)| format!("{}\n{}\n", name.trim_end_matches(".csv"), grid(&csv_rows(&body))))
            .collect(),
    };
    let mut out = Outcome::new(stdout, json!({ "config": config, "records": records.len(), "transcripts": TRANSCRIPTS }));
    out.written = written;
    Ok(out)
}

pub(crate) fn serve(addr: &str, data_dir: Option<PathBuf>, secret: Option<String>, stdout: &mut dyn Write) -> Result<i32> {
    let secret = secret.or_else(|| std::env::var("PAO_SECRET").ok()).unwrap_or_else(|| {
        let seed = format!("{:?}{}", std::time::SystemTime::now(), std::process::id());
        crate::sha256_hex(seed.as_bytes())
    });
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async {
        let state = pao_service::AppState::recover(pao_service::ServiceConfig { secret, data_dir }).await?;
        let listener = tokio::net::TcpListener::bind(addr).await?;
        let local = listener.local_addr()?;
        writeln!(stdout, "{}", json!({ "v": pao::session::SCHEMA_VERSION, "listening": format!("http://{local}") }))?;
        stdout.flush()?;
        pao_service::serve(listener, state).await?;
        Ok(0)
    })
}

#[cfg(test)]
mod tests {
    use super::parse_seeds;

    #[test]
    fn seed_ranges_include_both_ends() {
        assert_eq!(parse_seeds("1..100").unwrap().len(), 100);
        assert_eq!(parse_seeds("3..=5").unwrap(), vec![3, 4, 5]);
        assert_eq!(parse_seeds("7, 9").unwrap(), vec![7, 9]);
        assert!(parse_seeds("5..2").is_err());
        assert!(parse_seeds("x").is_err());
    }
}
