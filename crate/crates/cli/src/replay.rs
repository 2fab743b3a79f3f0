use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use pao::engine::{run_pao, transcript_jsonl};
use pao::experiments::{recompute_battery, MANIFEST};
use pao::model::{Budget, MarketFile, Obj};
use pao::osp::{osp_transcript_jsonl, parse_action, play_millipede, scripted_actions, Action, MillipedeStrategy};
use pao::session::{parse_log, replay as replay_session, SCHEMA_VERSION};
use pao::strategies::{scripted, Strategy};

use crate::args::{EngineArg, Format, Global};
use crate::commands::{game_for, menus_for, rule_from_file};
use crate::render::{csv_line, grid};
use crate::{read_json, sha256_hex, CliError, Outcome, RunManifest, RUN_MANIFEST};

type Result<T> = std::result::Result<T, CliError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub v: u32,
    /// `session`, `run-pao`, `run-osp` or `battery`.
    pub kind: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub summary: Value,
}

pub(crate) fn replay(g: &Global, path: &Path) -> Result<Outcome> {
    if !path.exists() {
        return Err(CliError::Usage(format!("{} does not exist", path.display())));
    }
    let (kind, checked) = if path.is_dir() {
        if path.join(RUN_MANIFEST).exists() {
            let manifest: RunManifest = read_json(&path.join(RUN_MANIFEST))?;
            match manifest.command.as_str() {
                "run-pao" | "run-osp" => (manifest.command.clone(), replay_run(path, &manifest)),
                "simulate" => ("battery".into(), battery(path)),
                other => return Err(CliError::Usage(format!("nothing to replay for a {other} run"))),
            }
        } else if path.join(MANIFEST).exists() {
            ("battery".into(), battery(path))
        } else {
            return Err(CliError::Usage(format!("{} holds no run or battery manifest", path.display())));
        }
    } else {
        let text = std::fs::read_to_string(path)?;
        ("session".into(), parse_log(&text).and_then(|events| replay_session(&events)).map(|s| json!(s.result_view())))
    };
    let report = match checked {
        Ok(summary) => ReplayReport { v: SCHEMA_VERSION, kind, ok: true, detail: None, summary },
        Err(e) => ReplayReport { v: SCHEMA_VERSION, kind, ok: false, detail: Some(e.to_string()), summary: Value::Null },
    };
    let fields = vec![report.kind.clone(), report.ok.to_string(), report.detail.clone().unwrap_or_default()];
    let stdout = match g.format {
        Format::Json => format!("{}\n", serde_json::to_string_pretty(&report).expect("serializable")),
        Format::Csv => csv_line(&["kind", "ok", "detail"].map(String::from)) + &csv_line(&fields),
        Format::Table => grid(&[vec!["kind".into(), "ok".into(), "detail".into()], fields]),
    };
    let exit = if report.ok { 0 } else { 1 };
    let mut out = Outcome::new(stdout, json!({ "path": path })).file("replay.json", serde_json::to_vec_pretty(&report).expect("serializable"));
    out.exit = exit;
    Ok(out)
}

fn battery(dir: &Path) -> pao::Result<Value> {
    let metrics = recompute_battery(dir)?;
    Ok(json!({ "cells": metrics.len() }))
}

fn into_pao(e: CliError) -> pao::Error {
    match e {
        CliError::Pao(e) => e,
        CliError::Usage(u) => pao::Error::Validation(u),
    }
}

fn input<T: serde::de::DeserializeOwned>(m: &RunManifest, key: &str) -> pao::Result<T> {
    serde_json::from_value(m.inputs.get(key).cloned().unwrap_or(Value::Null))
        .map_err(|e| pao::Error::Validation(format!("run manifest input {key}: {e}")))
}

/// Re-runs the recorded choices through the recorded engine or game and
/// demands the same transcript, byte for byte.
fn replay_run(dir: &Path, m: &RunManifest) -> pao::Result<Value> {
    for (name, want) in &m.outputs {
        let got = sha256_hex(&std::fs::read(dir.join(name))?);
        if &got != want {
            return Err(pao::Error::Replay { offset: 0, detail: format!("{name} does not match its hash in the run manifest") });
        }
    }
    let rule: String = input(m, "rule")?;
    let file: MarketFile = input(m, "market")?;
    let (market, rule) = rule_from_file(&rule, &file).map_err(into_pao)?;
    let text = std::fs::read_to_string(dir.join("transcript.jsonl"))?;
    let lines: Vec<Value> = text
        .lines()
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| pao::Error::Replay { offset: i, detail: e.to_string() }))
        .collect::<pao::Result<_>>()?;
    let again = if m.command == "run-pao" {
        let engine: String = input(m, "engine")?;
        let engine = EngineArg::parse(&engine).ok_or_else(|| pao::Error::Validation(format!("unknown engine {engine}")))?;
        let mut picks: Vec<Vec<Obj>> = vec![Vec::new(); market.n()];
        for line in lines.iter().filter(|l| l.get("t").is_some()) {
            let choices = line["choices"].as_array().ok_or_else(|| pao::Error::Validation("period without choices".into()))?;
            for (a, c) in choices.iter().enumerate() {
                if let Some(label) = c.as_str() {
                    picks.get_mut(a).ok_or_else(|| pao::Error::Validation("more choices than agents".into()))?.push(market.parse_obj(label)?);
                }
            }
        }
        let mut s: Vec<Box<dyn Strategy>> = picks.into_iter().map(|p| Box::new(scripted(p)) as Box<dyn Strategy>).collect();
        let menus = menus_for(engine, &rule, &file, m.budget.map(Budget).unwrap_or_default()).map_err(into_pao)?;
        let tr = run_pao(menus.as_ref(), &mut s)?;
        transcript_jsonl(&tr, &market)
    } else {
        let mut acts: Vec<Vec<Action>> = vec![Vec::new(); market.n()];
        for line in lines.iter().filter(|l| l.get("step").is_some()) {
            let player = market.agent_index(line["player"].as_str().unwrap_or_default())?;
            acts[player].push(parse_action(&market, line["action"].as_str().unwrap_or_default())?);
        }
        let game = game_for(rule.name(), &file).map_err(into_pao)?;
        let mut s: Vec<Box<dyn MillipedeStrategy>> =
            acts.into_iter().map(|a| Box::new(scripted_actions(a)) as Box<dyn MillipedeStrategy>).collect();
        osp_transcript_jsonl(&play_millipede(&game, &mut s)?, &market)
    };
    if let Some(k) = again.lines().zip(text.lines()).position(|(a, b)| a != b) {
        return Err(pao::Error::Replay { offset: k, detail: "replayed transcript differs".into() });
    }
    if again.lines().count() != text.lines().count() {
        return Err(pao::Error::Replay { offset: again.lines().count().min(text.lines().count()), detail: "transcript length differs".into() });
    }
    Ok(json!({ "lines": lines.len() }))
}
