use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::battery::{osp_game, Arm, Play, RoundRecord};
use super::market::{payoff_of, Environment};
use crate::error::{Error, Result};
use crate::model::{Obj, Preference};
use crate::osp::{greedy_strategy, Action, MillipedeStrategy, Node};
use crate::properties::is_pareto_efficient;

/// How one agent behaved in one record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentPlay {
    /// Took at least one decision (always true for direct reports).
    pub decided: bool,
    pub truthful: bool,
    pub item: Obj,
    /// OSP only: greedy action at the agent's first decision node.
    pub first_greedy: Option<Action>,
    /// OSP only: the agent passed at least once.
    pub passed: bool,
}

/// What the metrics need from one record, recomputed from what the record shows.
#[derive(Clone, Debug, PartialEq)]
pub struct RecordAnalysis {
    pub seed: u64,
    pub round: usize,
    pub arm: Arm,
    pub environment: Environment,
    pub plays: Vec<AgentPlay>,
    pub truth: Vec<Preference>,
    pub equilibrium: bool,
    pub pareto: bool,
}

pub fn agent_plays(r: &RoundRecord) -> Result<Vec<AgentPlay>> {
    let n = r.draw.n();
    let truth = &r.draw.profile;
    let mut out: Vec<AgentPlay> = (0..n)
        .map(|a| AgentPlay { decided: false, truthful: true, item: r.allocation.get(a), first_greedy: None, passed: false })
        .collect();
    match &r.play {
        Play::Direct { reports } => {
            for (a, p) in out.iter_mut().enumerate() {
                p.decided = true;
                p.truthful = reports[a] == truth[a];
            }
        }
        Play::Pao { transcript } => {
            for p in &transcript.periods {
                for a in 0..n {
                    if let Some(c) = p.choices[a] {
                        out[a].decided = true;
                        out[a].truthful &= truth[a].best_in(p.menus[a]) == Some(c);
                    }
                }
            }
        }
        Play::Osp { transcript } => {
            let game = osp_game(&r.draw)?;
            let mut state = game.root();
            for mv in &transcript.moves {
                let Node::Decision(d) = game.node(&state)? else {
                    return Err(Error::Validation(format!("move {} recorded after the game ended", mv.step)));
                };
                if d.player != mv.player {
                    return Err(Error::Validation(format!("move {} by agent {}, game expects {}", mv.step, mv.player, d.player)));
                }
                let greedy = greedy_strategy(truth[d.player].clone()).act(&game, &state, &d)?;
                let p = &mut out[d.player];
                p.decided = true;
                p.truthful &= greedy == mv.action;
                p.first_greedy.get_or_insert(greedy);
                p.passed |= mv.action == Action::Pass;
                state = game.apply(&state, mv.action)?;
            }
        }
    }
    Ok(out)
}

pub fn analyze(r: &RoundRecord) -> Result<RecordAnalysis> {
    Ok(RecordAnalysis {
        seed: r.seed,
        round: r.round,
        arm: r.arm,
        environment: r.environment,
        plays: agent_plays(r)?,
        truth: r.draw.profile.clone(),
        equilibrium: r.draw.rule()?.evaluate(&r.draw.profile)? == r.allocation,
        pareto: is_pareto_efficient(&r.draw.market(), &r.allocation, &r.draw.profile)?,
    })
}

pub fn analyze_records(records: &[RoundRecord]) -> Result<Vec<RecordAnalysis>> {
    records.par_iter().map(analyze).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub arm: Arm,
    pub environment: Environment,
    pub markets: usize,
    pub plays: usize,
    pub truthful: usize,
    pub truthful_rate: f64,
    pub avg_rank: f64,
    pub avg_payoff: f64,
    pub equilibrium_allocation_rate: f64,
    pub pareto_rate: f64,
    /// See [`deviation_cost`]; `None` when no role ever both conformed and deviated in one market.
    pub deviation_cost: Option<f64>,
}

#[derive(Default)]
struct Tally {
    markets: usize,
    plays: usize,
    truthful: usize,
    assigned: usize,
    rank_sum: usize,
    payoff_sum: i64,
    equilibrium: usize,
    pareto: usize,
}

/// One row per (arm, environment) cell present, ordered by arm then environment.
pub fn metrics_from(analyses: &[RecordAnalysis]) -> Result<Vec<CellMetrics>> {
    let mut cells: BTreeMap<(Arm, Environment), Tally> = BTreeMap::new();
    for s in analyses {
        let t = cells.entry((s.arm, s.environment)).or_default();
        t.markets += 1;
        t.equilibrium += s.equilibrium as usize;
        t.pareto += s.pareto as usize;
        for (a, p) in s.plays.iter().enumerate() {
            let pay = payoff_of(&s.truth[a], p.item);
            t.payoff_sum += pay;
            t.assigned += 1;
            t.rank_sum += if p.item.is_null() { s.truth[a].m() + 1 } else { s.truth[a].rank_of(p.item)? };
            if !p.decided {
                continue;
            }
            t.plays += 1;
            t.truthful += p.truthful as usize;
        }
    }
    let ratio = |x: usize, d: usize| if d == 0 { 0.0 } else { x as f64 / d as f64 };
    let costs = paired_costs(analyses, |s| (s.arm, s.environment))?;
    Ok(cells
        .into_iter()
        .map(|((arm, environment), t)| CellMetrics {
            arm,
            environment,
            markets: t.markets,
            plays: t.plays,
            truthful: t.truthful,
            truthful_rate: ratio(t.truthful, t.plays),
            avg_rank: ratio(t.rank_sum, t.assigned),
            avg_payoff: t.payoff_sum as f64 / t.assigned.max(1) as f64,
            equilibrium_allocation_rate: ratio(t.equilibrium, t.markets),
            pareto_rate: ratio(t.pareto, t.markets),
            deviation_cost: costs.get(&(arm, environment)).copied(),
        })
        .collect())
}

/// Paired same-role comparison: for each role in each market (seed, round,
/// arm), the mean payoff of its truthful plays minus that of its deviating
/// plays across groups, averaged over the (role, market) pairs that have both.
fn paired_costs<K: Ord + Copy>(analyses: &[RecordAnalysis], key: impl Fn(&RecordAnalysis) -> K) -> Result<BTreeMap<K, f64>> {
    type Sums = [(i64, usize); 2];
    let mut pairs: BTreeMap<(K, u64, usize, Arm, usize), Sums> = BTreeMap::new();
    for s in analyses {
        for (a, p) in s.plays.iter().enumerate().filter(|(_, p)| p.decided) {
            let e = pairs.entry((key(s), s.seed, s.round, s.arm, a)).or_default();
            let slot = &mut e[!p.truthful as usize];
            slot.0 += payoff_of(&s.truth[a], p.item);
            slot.1 += 1;
        }
    }
    let mut diffs: BTreeMap<K, (f64, usize)> = BTreeMap::new();
    for ((k, ..), [t, d]) in pairs {
        if t.1 > 0 && d.1 > 0 {
            let e = diffs.entry(k).or_default();
            e.0 += t.0 as f64 / t.1 as f64 - d.0 as f64 / d.1 as f64;
            e.1 += 1;
        }
    }
    Ok(diffs.into_iter().map(|(k, (sum, c))| (k, sum / c as f64)).collect())
}

/// Per-arm deviation cost; arms without a comparable pair are absent.
pub fn deviation_cost(analyses: &[RecordAnalysis]) -> Result<BTreeMap<Arm, f64>> {
    paired_costs(analyses, |s| s.arm)
}

pub fn compute_metrics(records: &[RoundRecord]) -> Result<Vec<CellMetrics>> {
    metrics_from(&analyze_records(records)?)
}

/// Clinch-or-pass shape of OSP play per environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClinchPassRow {
    pub environment: Environment,
    pub agents: usize,
    /// Greedy play at the agent's first decision node clinches.
    pub first_node_clinch: usize,
    pub first_node_pass: usize,
    /// Never reached a decision node.
    pub no_decision: usize,
    /// Observed paths that contain a pass.
    pub observed_with_pass: usize,
}

pub fn clinch_pass_from(analyses: &[RecordAnalysis]) -> Vec<ClinchPassRow> {
    let mut rows: BTreeMap<Environment, ClinchPassRow> = BTreeMap::new();
    for s in analyses.iter().filter(|s| s.arm == Arm::Osp) {
        let row = rows.entry(s.environment).or_insert(ClinchPassRow {
            environment: s.environment,
            agents: 0,
            first_node_clinch: 0,
            first_node_pass: 0,
            no_decision: 0,
            observed_with_pass: 0,
        });
        for p in &s.plays {
            row.agents += 1;
            match p.first_greedy {
                None => row.no_decision += 1,
                Some(Action::Pass) => row.first_node_pass += 1,
                Some(Action::Clinch(_)) => row.first_node_clinch += 1,
            }
            row.observed_with_pass += p.passed as usize;
        }
    }
    rows.into_values().collect()
}

/// `environment,Direct,PAO,OSP` rows; `n/a` where an arm never ran the environment.
pub fn pivot(metrics: &[CellMetrics], value: impl Fn(&CellMetrics) -> f64) -> Vec<[String; 4]> {
    Environment::ALL
        .iter()
        .map(|&env| {
            let cell = |arm: Arm| {
                metrics
                    .iter()
                    .find(|c| c.arm == arm && c.environment == env)
                    .map_or_else(|| "n/a".to_string(), |c| format!("{:.4}", value(c)))
            };
            [env.label().to_string(), cell(Arm::Direct), cell(Arm::Pao), cell(Arm::Osp)]
        })
        .collect()
}
