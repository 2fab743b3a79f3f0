use rand::seq::{IteratorRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::market::{generate_market, Environment, MarketDraw};
use crate::engine::{run_pao, GendaMenus, PaoTranscript};
use crate::error::{Error, Result};
use crate::model::{Allocation, ChoiceHistory, Obj, ObjSet, Preference};
use crate::osp::{
    build_osp_sd, build_osp_ttc, greedy_strategy, play_millipede, Action, Decision, GameState, MillipedeGame,
    MillipedeStrategy, OspTranscript,
};
use crate::strategies::{straightforward, Strategy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    Direct,
    Pao,
    Osp,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::Direct, Arm::Pao, Arm::Osp];

    pub fn label(self) -> &'static str {
        match self {
            Arm::Direct => "Direct",
            Arm::Pao => "PAO",
            Arm::Osp => "OSP",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundSpec {
    pub round: usize,
    pub direct: Environment,
    pub pao: Environment,
    pub osp: Environment,
}

impl RoundSpec {
    pub fn environment(&self, arm: Arm) -> Environment {
        match arm {
            Arm::Direct => self.direct,
            Arm::Pao => self.pao,
            Arm::Osp => self.osp,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreatmentPlan {
    pub name: String,
    pub arms: Vec<Arm>,
    pub rounds: Vec<RoundSpec>,
}

impl TreatmentPlan {
    /// 21 rounds: 1-7 cyclic TTC (acyclic for OSP), 8-14 acyclic TTC, 15-21 SD.
    pub fn table1() -> TreatmentPlan {
        let rounds = (1..=21)
            .map(|round| {
                let (d, o) = match round {
                    1..=7 => (Environment::TtcCyclic, Environment::TtcAcyclic),
                    8..=14 => (Environment::TtcAcyclic, Environment::TtcAcyclic),
                    _ => (Environment::Sd, Environment::Sd),
                };
                RoundSpec { round, direct: d, pao: d, osp: o }
            })
            .collect();
        TreatmentPlan { name: "table1".into(), arms: Arm::ALL.to_vec(), rounds }
    }

    pub fn by_name(name: &str) -> Result<TreatmentPlan> {
        match name {
            "table1" => Ok(TreatmentPlan::table1()),
            other => Err(Error::Config(format!("unknown plan {other:?}; known: table1"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds.iter().any(|r| r.osp == Environment::TtcCyclic) {
            return Err(Error::Config("the OSP arm cannot run TTC with cyclic priorities".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentModel {
    Truthful,
    /// Uniform random report, pick or action; objects are preferred to `∅` when both are offered.
    Random,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentMix {
    pub name: String,
    pub models: Vec<AgentModel>,
}

impl AgentMix {
    /// Models in group `g`: the list rotated by `g`, so a role alternates
    /// between models across groups playing the same markets.
    pub fn for_group(&self, g: usize) -> Vec<AgentModel> {
        let n = self.models.len();
        (0..n).map(|a| self.models[(a + g) % n]).collect()
    }

    pub fn uniform(name: &str, n: usize, model: AgentModel) -> AgentMix {
        AgentMix { name: name.into(), models: vec![model; n] }
    }

    /// `all-truthful`, `all-random`, `half-random` (odd roles random), or a
    /// comma list of `t`/`r`, one per role.
    pub fn parse(spec: &str, n: usize) -> Result<AgentMix> {
        let mix = match spec {
            "all-truthful" => AgentMix::uniform(spec, n, AgentModel::Truthful),
            "all-random" => AgentMix::uniform(spec, n, AgentModel::Random),
            "half-random" => AgentMix {
                name: spec.into(),
                models: (0..n).map(|a| if a % 2 == 1 { AgentModel::Random } else { AgentModel::Truthful }).collect(),
            },
            list => AgentMix {
                name: list.into(),
                models: list
                    .split(',')
                    .map(|t| match t.trim() {
                        "t" | "truthful" => Ok(AgentModel::Truthful),
                        "r" | "random" => Ok(AgentModel::Random),
                        other => Err(Error::Config(format!("unknown agent model {other:?} in mix {list:?}"))),
                    })
                    .collect::<Result<_>>()?,
            },
        };
        if mix.models.len() != n {
            return Err(Error::Config(format!("mix {:?} has {} roles, markets have {n} agents", mix.name, mix.models.len())));
        }
        Ok(mix)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryConfig {
    pub plan: TreatmentPlan,
    pub mix: AgentMix,
    pub seeds: Vec<u64>,
    pub groups: usize,
    pub n: usize,
    pub m: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mechanism", rename_all = "kebab-case")]
pub enum Play {
    Direct { reports: Vec<Preference> },
    Pao { transcript: PaoTranscript },
    Osp { transcript: OspTranscript },
}

/// Everything that happened in one market for one group in one arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub seed: u64,
    pub group: usize,
    pub round: usize,
    pub arm: Arm,
    pub environment: Environment,
    pub models: Vec<AgentModel>,
    pub draw: MarketDraw,
    pub play: Play,
    pub allocation: Allocation,
}

/// The markets of a seed are shared by all groups; Direct and PAO share draws.
pub fn market_for(seed: u64, round: usize, environment: Environment, n: usize, m: usize) -> MarketDraw {
    generate_market(seed, round as u64 * 4 + environment.index(), environment, n, m)
}

fn behaviour_rng(seed: u64, group: usize, round: usize, arm: Arm, agent: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((1 << 48) | ((((group as u64) << 8 | round as u64) << 2 | arm as u64) << 8) | agent as u64);
    rng
}

fn random_report(rng: &mut ChaCha8Rng, m: usize) -> Preference {
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(rng);
    Preference::acceptable(m, &order).expect("permutation")
}

struct RandomPick(ChaCha8Rng);

impl Strategy for RandomPick {
    fn choose(&mut self, _own: &ChoiceHistory, menu: ObjSet) -> Result<Obj> {
        let real = menu.without(Obj::NULL);
        let from = if real.is_empty() { menu } else { real };
        from.iter().choose(&mut self.0).ok_or_else(|| Error::MenuContract("empty menu".into()))
    }
}

struct RandomAction(ChaCha8Rng);

impl MillipedeStrategy for RandomAction {
    fn act(&mut self, _game: &MillipedeGame, _state: &GameState, node: &Decision) -> Result<Action> {
        let real = node.clinch.without(Obj::NULL);
        let mut options: Vec<Action> = real.iter().map(Action::Clinch).collect();
        if node.pass {
            options.push(Action::Pass);
        }
        if options.is_empty() {
            options.push(Action::Clinch(Obj::NULL));
        }
        Ok(*options.choose(&mut self.0).expect("non-empty"))
    }
}

pub fn osp_game(draw: &MarketDraw) -> Result<MillipedeGame> {
    let market = draw.market();
    match (&draw.scores, draw.priorities()?) {
        (Some(s), _) => build_osp_sd(&market, s),
        (None, Some(p)) => build_osp_ttc(&market, &p),
        _ => Err(Error::Validation("market draw has neither scores nor priorities".into())),
    }
}

/// Plays one market in one arm.
pub fn play_round(
    draw: &MarketDraw,
    arm: Arm,
    models: &[AgentModel],
    rng_for: impl Fn(usize) -> ChaCha8Rng,
) -> Result<(Play, Allocation)> {
    let n = draw.n();
    let rule = draw.rule()?;
    match arm {
        Arm::Direct => {
            let reports: Vec<Preference> = (0..n)
                .map(|a| match models[a] {
                    AgentModel::Truthful => draw.profile[a].clone(),
                    AgentModel::Random => random_report(&mut rng_for(a), draw.m()),
                })
                .collect();
            let allocation = rule.evaluate(&reports)?;
            Ok((Play::Direct { reports }, allocation))
        }
        Arm::Pao => {
            let menus = GendaMenus::for_rule(&rule)?;
            let mut strategies: Vec<Box<dyn Strategy>> = (0..n)
                .map(|a| match models[a] {
                    AgentModel::Truthful => Box::new(straightforward(draw.profile[a].clone())) as Box<dyn Strategy>,
                    AgentModel::Random => Box::new(RandomPick(rng_for(a))),
                })
                .collect();
            let transcript = run_pao(&menus, &mut strategies)?;
            let allocation = transcript.outcome()?.clone();
            Ok((Play::Pao { transcript }, allocation))
        }
        Arm::Osp => {
            let game = osp_game(draw)?;
            let mut strategies: Vec<Box<dyn MillipedeStrategy>> = (0..n)
                .map(|a| match models[a] {
                    AgentModel::Truthful => {
                        Box::new(greedy_strategy(draw.profile[a].clone())) as Box<dyn MillipedeStrategy>
                    }
                    AgentModel::Random => Box::new(RandomAction(rng_for(a))),
                })
                .collect();
            let transcript = play_millipede(&game, &mut strategies)?;
            let allocation = transcript.allocation.clone();
            Ok((Play::Osp { transcript }, allocation))
        }
    }
}

/// All rounds of all arms for every `(seed, group)`, in deterministic order.
pub fn run_battery(config: &BatteryConfig) -> Result<Vec<RoundRecord>> {
    config.plan.validate()?;
    if config.mix.models.len() != config.n {
        return Err(Error::Config(format!("mix has {} roles, markets have {} agents", config.mix.models.len(), config.n)));
    }
    if config.groups == 0 {
        return Err(Error::Config("at least one group is needed".into()));
    }
    let cells: Vec<(u64, usize)> =
        config.seeds.iter().flat_map(|&s| (0..config.groups).map(move |g| (s, g))).collect();
    let chunks = cells
        .par_iter()
        .map(|&(seed, group)| -> Result<Vec<RoundRecord>> {
            let models = config.mix.for_group(group);
            let mut out = Vec::new();
            for spec in &config.plan.rounds {
                for &arm in &config.plan.arms {
                    let environment = spec.environment(arm);
                    let draw = market_for(seed, spec.round, environment, config.n, config.m);
                    let (play, allocation) =
                        play_round(&draw, arm, &models, |a| behaviour_rng(seed, group, spec.round, arm, a))?;
                    out.push(RoundRecord {
                        seed,
                        group,
                        round: spec.round,
                        arm,
                        environment,
                        models: models.clone(),
                        draw,
                        play,
                        allocation,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table1_shape() {
        let p = TreatmentPlan::table1();
        assert_eq!(p.rounds.len(), 21);
        assert_eq!(p.rounds[0].environment(Arm::Direct), Environment::TtcCyclic);
        assert_eq!(p.rounds[0].environment(Arm::Osp), Environment::TtcAcyclic);
        assert_eq!(p.rounds[10].environment(Arm::Pao), Environment::TtcAcyclic);
        assert_eq!(p.rounds[20].environment(Arm::Osp), Environment::Sd);
        p.validate().unwrap();
        let mut bad = p.clone();
        bad.rounds[0].osp = Environment::TtcCyclic;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn mix_parsing() {
        assert_eq!(AgentMix::parse("half-random", 4).unwrap().models[1], AgentModel::Random);
        assert_eq!(AgentMix::parse("t,r,t", 3).unwrap().models, vec![AgentModel::Truthful, AgentModel::Random, AgentModel::Truthful]);
        assert!(matches!(AgentMix::parse("t,r", 3), Err(Error::Config(_))));
        assert!(matches!(AgentMix::parse("t,x,t", 3), Err(Error::Config(_))));
        let half = AgentMix::parse("half-random", 4).unwrap();
        assert_eq!(half.for_group(0)[0], AgentModel::Truthful);
        assert_eq!(half.for_group(1)[0], AgentModel::Random);
    }

    #[test]
    fn truthful_rounds_reach_the_rule() {
        let models = vec![AgentModel::Truthful; 8];
        for env in Environment::ALL {
            let draw = market_for(5, 1, env, 8, 8);
            let want = draw.rule().unwrap().evaluate(&draw.profile).unwrap();
            for arm in Arm::ALL {
                if arm == Arm::Osp && env == Environment::TtcCyclic {
                    continue;
                }
                let (_, got) = play_round(&draw, arm, &models, |a| behaviour_rng(5, 0, 1, arm, a)).unwrap();
                assert_eq!(got, want, "{arm:?} {env:?}");
            }
        }
    }
}
