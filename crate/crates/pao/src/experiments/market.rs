use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{Domain, Market, Obj, Preference, Priorities};
use crate::osp::check_acyclic;
use crate::rules::Rule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Environment {
    TtcCyclic,
    TtcAcyclic,
    Sd,
}

impl Environment {
    pub const ALL: [Environment; 3] = [Environment::TtcCyclic, Environment::TtcAcyclic, Environment::Sd];

    pub fn label(self) -> &'static str {
        match self {
            Environment::TtcCyclic => "TTC cyclic",
            Environment::TtcAcyclic => "TTC acyclic",
            Environment::Sd => "SD",
        }
    }

    pub fn index(self) -> u64 {
        self as u64
    }
}

const COMMON_MAX: f64 = 40.0;
const IDIO_MAX: f64 = 20.0;
const REJECTION_TRIES: usize = 100;

/// Euros for the object ranked `rank` (1-based): 22, 19, 16, ...
pub fn payoff(rank: usize) -> i64 {
    22 - 3 * (rank as i64 - 1)
}

/// Payoff of an assignment under the true preference; nothing for `∅`.
pub fn payoff_of(truth: &Preference, o: Obj) -> i64 {
    if o.is_null() {
        0
    } else {
        payoff(truth.rank_of(o).expect("object of the market"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorityDraw {
    Uniform,
    Rejection,
    Constructive,
    Scores,
}

/// One generated market: utilities, the ordinal profile they induce, and priorities or scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketDraw {
    pub seed: u64,
    pub stream: u64,
    pub environment: Environment,
    pub common: Vec<f64>,
    /// `idio[a][o]`.
    pub idio: Vec<Vec<f64>>,
    pub profile: Vec<Preference>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priorities: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
    pub priority_draw: PriorityDraw,
}

impl MarketDraw {
    pub fn n(&self) -> usize {
        self.idio.len()
    }

    pub fn m(&self) -> usize {
        self.common.len()
    }

    pub fn market(&self) -> Market {
        Market::unit(self.n(), self.m(), Domain::AllAcceptable)
    }

    pub fn utility(&self, a: usize, o: usize) -> f64 {
        self.common[o] + self.idio[a][o]
    }

    pub fn priorities(&self) -> Result<Option<Priorities>> {
        self.priorities.as_ref().map(|p| Priorities::new(self.n(), p.clone())).transpose()
    }

    /// The allocation rule played in this market.
    pub fn rule(&self) -> Result<Rule> {
        let market = self.market();
        match (&self.scores, self.priorities()?) {
            (Some(s), _) => Rule::sd(market, s),
            (None, Some(p)) => Rule::ttc(market, p),
            (None, None) => Err(crate::Error::Validation("market draw has neither scores nor priorities".into())),
        }
    }
}

fn ordinal(utilities: &[f64]) -> Option<Vec<usize>> {
    let mut order: Vec<usize> = (0..utilities.len()).collect();
    order.sort_by(|&x, &y| utilities[y].total_cmp(&utilities[x]));
    let tie = order.windows(2).any(|w| utilities[w[0]] == utilities[w[1]]);
    (!tie).then_some(order)
}

fn uniform_priorities(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Vec<Vec<usize>> {
    (0..m)
        .map(|_| {
            let mut v: Vec<usize> = (0..n).collect();
            v.shuffle(rng);
            v
        })
        .collect()
}

/// A random base order; each object independently keeps it or swaps one
/// adjacent pair. Every submarket then has its two first remaining agents as
/// the only possible tops.
fn constructive_acyclic(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Vec<Vec<usize>> {
    let mut base: Vec<usize> = (0..n).collect();
    base.shuffle(rng);
    (0..m)
        .map(|_| {
            let mut v = base.clone();
            if n >= 2 {
                let k = rng.gen_range(0..n);
                if k + 1 < n {
                    v.swap(k, k + 1);
                }
            }
            v
        })
        .collect()
}

/// Deterministic in `(seed, stream)`; `stream` separates rounds and environments.
pub fn generate_market(seed: u64, stream: u64, environment: Environment, n: usize, m: usize) -> MarketDraw {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let (common, idio, profile) = loop {
        let common: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() * COMMON_MAX).collect();
        let idio: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| rng.gen::<f64>() * IDIO_MAX).collect()).collect();
        let orders: Option<Vec<Vec<usize>>> =
            (0..n).map(|a| ordinal(&(0..m).map(|o| common[o] + idio[a][o]).collect::<Vec<_>>())).collect();
        if let Some(orders) = orders {
            let profile = orders.iter().map(|ord| Preference::acceptable(m, ord).expect("permutation")).collect();
            break (common, idio, profile);
        }
    };
    let (priorities, scores, priority_draw) = match environment {
        Environment::Sd => loop {
            let s: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..=100.0)).collect();
            if crate::model::validate_scores(&s).is_ok() {
                break (None, Some(s), PriorityDraw::Scores);
            }
        },
        Environment::TtcCyclic => (Some(uniform_priorities(&mut rng, n, m)), None, PriorityDraw::Uniform),
        Environment::TtcAcyclic => {
            let mut found = None;
            for _ in 0..REJECTION_TRIES {
                let p = uniform_priorities(&mut rng, n, m);
                if check_acyclic(&Priorities::new(n, p.clone()).expect("permutations")) {
                    found = Some(p);
                    break;
                }
            }
            match found {
                Some(p) => (Some(p), None, PriorityDraw::Rejection),
                None => (Some(constructive_acyclic(&mut rng, n, m)), None, PriorityDraw::Constructive),
            }
        }
    };
    MarketDraw { seed, stream, environment, common, idio, profile, priorities, scores, priority_draw }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payoff_by_rank() {
        let table: Vec<i64> = (1..=8).map(payoff).collect();
        assert_eq!(table, vec![22, 19, 16, 13, 10, 7, 4, 1]);
    }

    #[test]
    fn draws_are_deterministic_and_streams_differ() {
        let a = generate_market(7, 3, Environment::TtcCyclic, 8, 8);
        assert_eq!(a, generate_market(7, 3, Environment::TtcCyclic, 8, 8));
        assert_ne!(a.common, generate_market(7, 4, Environment::TtcCyclic, 8, 8).common);
        assert_ne!(a.common, generate_market(8, 3, Environment::TtcCyclic, 8, 8).common);
    }

    #[test]
    fn profile_follows_utilities() {
        let d = generate_market(1, 0, Environment::Sd, 8, 8);
        for a in 0..8 {
            let u: Vec<f64> = d.profile[a].order().iter().filter_map(|o| o.index()).map(|o| d.utility(a, o)).collect();
            assert_eq!(u.len(), 8);
            assert!(u.windows(2).all(|w| w[0] > w[1]));
        }
        let s = d.scores.unwrap();
        assert!(s.iter().all(|x| (1.0..=100.0).contains(x)));
    }

    #[test]
    fn acyclic_draws_pass_the_checker() {
        for seed in 0..50 {
            let d = generate_market(seed, 1, Environment::TtcAcyclic, 8, 8);
            assert!(check_acyclic(&d.priorities().unwrap().unwrap()));
        }
        // Small markets are often acyclic by rejection alone.
        let small: Vec<_> = (0..50).map(|s| generate_market(s, 1, Environment::TtcAcyclic, 3, 3).priority_draw).collect();
        assert!(small.contains(&PriorityDraw::Rejection));
    }
}
