//! Allocation rules: direct implementations, generalized DA, counterexamples.

pub mod direct;
mod genda;

use std::fmt;
use std::sync::Arc;

pub use genda::{
    check_update, current_items, rejected_agents, run_generalized_da, BostonPsi, DaPsi, GendaRun, TtcPsi,
    UpdateFunction,
};

use crate::error::{Error, Result};
use crate::model::{Allocation, Domain, Market, Obj, Preference, Priorities};

pub type Evaluator = Arc<dyn Fn(&[Preference]) -> Result<Allocation> + Send + Sync>;

/// What a rule is, for code that needs more than its outcomes.
#[derive(Clone, Debug, PartialEq)]
pub enum RuleFamily {
    SerialDictatorship { scores: Vec<f64> },
    TopTradingCycles { priorities: Priorities },
    DeferredAcceptance { priorities: Priorities },
    Boston { priorities: Priorities },
    PhiStar,
    Example1,
    Example2,
    GeneralizedDa,
    Custom,
}

/// `φ`: a deterministic map from preference profiles to allocations.
#[derive(Clone)]
pub struct Rule {
    name: String,
    market: Market,
    family: RuleFamily,
    eval: Evaluator,
    psi: Option<Arc<dyn UpdateFunction>>,
    pub claims_individually_rational: bool,
    pub claims_strategy_proof: bool,
}

impl fmt::Debug for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Rule").field("name", &self.name).field("market", &self.market).finish_non_exhaustive()
    }
}

pub const PRESETS: &[&str] = &["sd", "ttc", "da", "boston", "phi-star", "example1", "example2"];

impl Rule {
    pub fn custom(
        name: impl Into<String>,
        market: Market,
        f: impl Fn(&[Preference]) -> Allocation + Send + Sync + 'static,
    ) -> Rule {
        Rule {
            name: name.into(),
            market,
            family: RuleFamily::Custom,
            eval: Arc::new(move |p| Ok(f(p))),
            psi: None,
            claims_individually_rational: false,
            claims_strategy_proof: false,
        }
    }

    /// A rule computed by the generalized DA procedure for `psi`.
    pub fn generalized_da(name: impl Into<String>, market: Market, psi: Arc<dyn UpdateFunction>) -> Rule {
        let m2 = market.clone();
        let p2 = psi.clone();
        Rule {
            name: name.into(),
            market,
            family: RuleFamily::GeneralizedDa,
            eval: Arc::new(move |p| Ok(run_generalized_da(p2.as_ref(), &m2, p)?.allocation)),
            psi: Some(psi),
            claims_individually_rational: true,
            claims_strategy_proof: false,
        }
    }

    /// Serial dictatorship: agents pick in descending score order.
    pub fn sd(market: Market, scores: &[f64]) -> Result<Rule> {
        if scores.len() != market.n() {
            return Err(Error::Validation(format!("{} scores for {} agents", scores.len(), market.n())));
        }
        let priorities = Priorities::from_scores(market.m(), scores)?;
        let order = if market.m() > 0 { priorities.order(0).to_vec() } else { sorted_by_score(scores) };
        let m2 = market.clone();
        Ok(Rule {
            name: "sd".into(),
            psi: Some(Arc::new(DaPsi { priorities, capacities: market.capacities().to_vec() })),
            family: RuleFamily::SerialDictatorship { scores: scores.to_vec() },
            market,
            eval: Arc::new(move |p| Ok(direct::serial_dictatorship(&m2, &order, p))),
            claims_individually_rational: true,
            claims_strategy_proof: true,
        })
    }

    /// Top trading cycles; requires unit capacities.
    pub fn ttc(market: Market, priorities: Priorities) -> Result<Rule> {
        priorities.check_market(&market)?;
        if !market.unit_capacities() {
            return Err(Error::Unsupported("TTC requires unit capacities".into()));
        }
        let (m2, p2) = (market.clone(), priorities.clone());
        Ok(Rule {
            name: "ttc".into(),
            psi: Some(Arc::new(TtcPsi { priorities: priorities.clone() })),
            family: RuleFamily::TopTradingCycles { priorities },
            market,
            eval: Arc::new(move |p| Ok(direct::top_trading_cycles(&m2, &p2, p))),
            claims_individually_rational: true,
            claims_strategy_proof: true,
        })
    }

    /// Agent-proposing Gale-Shapley deferred acceptance.
    pub fn da(market: Market, priorities: Priorities) -> Result<Rule> {
        priorities.check_market(&market)?;
        let (m2, p2) = (market.clone(), priorities.clone());
        Ok(Rule {
            name: "da".into(),
            psi: Some(Arc::new(DaPsi { priorities: priorities.clone(), capacities: market.capacities().to_vec() })),
            family: RuleFamily::DeferredAcceptance { priorities },
            market,
            eval: Arc::new(move |p| Ok(direct::deferred_acceptance(&m2, &p2, p))),
            claims_individually_rational: true,
            claims_strategy_proof: true,
        })
    }

    /// Immediate acceptance.
    pub fn boston(market: Market, priorities: Priorities) -> Result<Rule> {
        priorities.check_market(&market)?;
        let (m2, p2) = (market.clone(), priorities.clone());
        Ok(Rule {
            name: "boston".into(),
            psi: Some(Arc::new(BostonPsi {
                priorities: priorities.clone(),
                capacities: market.capacities().to_vec(),
            })),
            family: RuleFamily::Boston { priorities },
            market,
            eval: Arc::new(move |p| Ok(direct::boston(&m2, &p2, p))),
            claims_individually_rational: true,
            claims_strategy_proof: false,
        })
    }

    /// One agent, `{o1,o2,o3}`: `(o1,o2,o3,∅) ↦ o1`, `(o1,o3,o2,∅) ↦ o3`, otherwise `∅`.
    pub fn phi_star() -> Rule {
        let market = Market::unit(1, 3, Domain::Full);
        let (o1, o2, o3) = (Obj::new(0), Obj::new(1), Obj::new(2));
        Rule {
            name: "phi-star".into(),
            market,
            family: RuleFamily::PhiStar,
            eval: Arc::new(move |p| {
                let out = match p[0].order() {
                    [a, b, c, d] if (*a, *b, *c, *d) == (o1, o2, o3, Obj::NULL) => o1,
                    [a, b, c, d] if (*a, *b, *c, *d) == (o1, o3, o2, Obj::NULL) => o3,
                    _ => Obj::NULL,
                };
                Ok(Allocation(vec![out]))
            }),
            psi: None,
            claims_individually_rational: true,
            claims_strategy_proof: false,
        }
    }

    /// One agent, `{o1,o2,o3}` all acceptable: `o1` when `o1` is her top,
    /// `o2` when `o3 P o1 P o2`, otherwise `∅`.
    pub fn example1() -> Rule {
        let market = Market::unit(1, 3, Domain::AllAcceptable);
        let (o1, o2, o3) = (Obj::new(0), Obj::new(1), Obj::new(2));
        Rule {
            name: "example1".into(),
            market,
            family: RuleFamily::Example1,
            eval: Arc::new(move |p| {
                let ord = p[0].order();
                let out = if ord[0] == o1 {
                    o1
                } else if ord[..3] == [o3, o1, o2] {
                    o2
                } else {
                    Obj::NULL
                };
                Ok(Allocation(vec![out]))
            }),
            psi: None,
            claims_individually_rational: true,
            claims_strategy_proof: false,
        }
    }

    /// Two agents, `{o1..o4}` all acceptable: `a1` gets her top; `a2` gets her
    /// favourite among `a1`'s two least-preferred objects.
    pub fn example2() -> Rule {
        let market = Market::unit(2, 4, Domain::AllAcceptable);
        Rule {
            name: "example2".into(),
            market,
            family: RuleFamily::Example2,
            eval: Arc::new(|p| {
                let first = p[0].order();
                let bottom = [first[2], first[3]].into_iter().collect();
                let second = p[1].best_in(bottom).expect("non-empty");
                Ok(Allocation(vec![first[0], second]))
            }),
            psi: None,
            claims_individually_rational: true,
            claims_strategy_proof: true,
        }
    }

    /// Builds a preset by name. Fixed-universe presets check `market`'s shape.
    pub fn preset(name: &str, market: &Market, priorities: Option<&Priorities>, scores: Option<&[f64]>) -> Result<Rule> {
        let need_pri = || {
            priorities.cloned().ok_or_else(|| Error::Validation(format!("rule {name} needs a priority table")))
        };
        let fixed = |rule: Rule| {
            let want = rule.market();
            if market.n() != want.n() || market.m() != want.m() {
                return Err(Error::Validation(format!(
                    "rule {name} is defined for {} agents and {} objects, market has {} and {}",
                    want.n(),
                    want.m(),
                    market.n(),
                    market.m()
                )));
            }
            Ok(rule)
        };
        match name {
            "sd" => match scores {
                Some(s) => Rule::sd(market.clone(), s),
                None => Err(Error::Validation("rule sd needs scores".into())),
            },
            "ttc" => Rule::ttc(market.clone(), need_pri()?),
            "da" => Rule::da(market.clone(), need_pri()?),
            "boston" => Rule::boston(market.clone(), need_pri()?),
            "phi-star" => fixed(Rule::phi_star()),
            "example1" => fixed(Rule::example1()),
            "example2" => fixed(Rule::example2()),
            other => Err(Error::Validation(format!("unknown rule {other:?}; expected one of {PRESETS:?}"))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn market(&self) -> &Market {
        &self.market
    }

    pub fn family(&self) -> &RuleFamily {
        &self.family
    }

    pub fn n(&self) -> usize {
        self.market.n()
    }

    pub fn evaluate(&self, profile: &[Preference]) -> Result<Allocation> {
        self.market.check_profile(profile)?;
        (self.eval)(profile)
    }

    /// Skips profile validation; for kernels that enumerate valid profiles.
    pub(crate) fn evaluate_unchecked(&self, profile: &[Preference]) -> Result<Allocation> {
        (self.eval)(profile)
    }

    pub fn update_function(&self) -> Option<Arc<dyn UpdateFunction>> {
        self.psi.clone()
    }

    pub fn is_gale_shapley(&self) -> bool {
        matches!(self.family, RuleFamily::DeferredAcceptance { .. })
    }

    /// The same rule evaluated through its generalized DA instantiation.
    pub fn via_genda(&self) -> Result<Rule> {
        let psi = self
            .psi
            .clone()
            .ok_or_else(|| Error::Unsupported(format!("rule {} has no update function", self.name)))?;
        let mut r = Rule::generalized_da(format!("{}-genda", self.name), self.market.clone(), psi);
        r.family = RuleFamily::GeneralizedDa;
        r.claims_strategy_proof = self.claims_strategy_proof;
        Ok(r)
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Rule {
        self.name = name.into();
        self
    }
}

pub(crate) fn sorted_by_score(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Budget, Preference};

    fn o(i: usize) -> Obj {
        Obj::new(i)
    }

    fn full(order: &[Option<usize>]) -> Preference {
        Preference::from_indices(3, order).unwrap()
    }

    #[test]
    fn phi_star_table() {
        let r = Rule::phi_star();
        let eval = |p: Preference| r.evaluate(&[p]).unwrap().get(0);
        assert_eq!(eval(full(&[Some(0), Some(1), Some(2), None])), o(0));
        assert_eq!(eval(full(&[Some(0), Some(2), Some(1), None])), o(2));
        assert_eq!(eval(full(&[Some(1), Some(0), Some(2), None])), Obj::NULL);
        // All 24 rankings: exactly two are mapped to a real object.
        let space = r.market().space(Budget::default()).unwrap();
        let matched: Vec<_> = space.prefs().iter().filter(|p| !eval((*p).clone()).is_null()).collect();
        assert_eq!(matched.len(), 2);
    }

    #[test]
    fn example_rules() {
        let e1 = Rule::example1();
        let p = Preference::acceptable(3, &[2, 0, 1]).unwrap();
        assert_eq!(e1.evaluate(&[p]).unwrap().get(0), o(1));
        let p = Preference::acceptable(3, &[0, 1, 2]).unwrap();
        assert_eq!(e1.evaluate(&[p]).unwrap().get(0), o(0));

        let e2 = Rule::example2();
        let p1 = Preference::acceptable(4, &[0, 1, 2, 3]).unwrap();
        let p2 = Preference::acceptable(4, &[2, 3]).unwrap();
        assert_eq!(e2.evaluate(&[p1, p2]).unwrap().0, vec![o(0), o(2)]);
    }

    #[test]
    fn preset_validation() {
        let market = Market::new(2, 2);
        assert!(Rule::preset("ttc", &market, None, None).is_err());
        assert!(Rule::preset("sd", &market, None, Some(&[1.0, 1.0])).is_err());
        assert!(Rule::preset("phi-star", &market, None, None).is_err());
        assert!(Rule::preset("nope", &market, None, None).is_err());
        assert!(Rule::ttc(Market::new(2, 2), Priorities::new(3, vec![vec![0, 1, 2]; 2]).unwrap()).is_err());
    }

    #[test]
    fn wrong_profile_shape_rejected() {
        let r = Rule::phi_star();
        assert!(r.evaluate(&[]).is_err());
        let short = Preference::from_indices(2, &[]).unwrap();
        assert!(r.evaluate(&[short]).is_err());
    }
}
