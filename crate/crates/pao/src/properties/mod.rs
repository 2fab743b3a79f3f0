//! Exhaustive checkers for the axioms on allocation rules.
//!
//! Every sweep runs over a [`RuleTable`], so a rule is evaluated once per
//! profile no matter how many properties are checked. Witnesses are the first
//! counterexample in profile-index order (agent 0 most significant), then
//! agent index, then preference index.

mod pareto;

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use pareto::{check_pareto_efficient, is_pareto_efficient};

use crate::error::{Error, Result};
use crate::model::{Allocation, Budget, CollectiveHistory, Obj, ObjSet, Preference, Profile};
use crate::rules::Rule;
use crate::table::RuleTable;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Holds,
    Fails,
}

/// A counterexample, with enough data to re-check it against the rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Witness {
    /// `φ(P) ≠ μ`, yet every agent `a` gets `μ(a)` at some profile of
    /// `ℒ(P,μ)`; `continuations[a]` is such a profile.
    MonotonicDiscoverability { profile: Profile, allocation: Allocation, outcome: Allocation, continuations: Vec<Profile> },
    /// Reporting `report` instead of `profile[agent]` is strictly better.
    Misreport { profile: Profile, agent: usize, report: Preference, truthful: Obj, misreported: Obj },
    NotIndividuallyRational { profile: Profile, agent: usize, assigned: Obj },
    /// `agent` switches to `report` and ends unmatched; `other` is hurt.
    ResourceMonotonicity { profile: Profile, agent: usize, report: Preference, other: usize, before: Obj, after: Obj },
    /// `agent` switches to `report` keeping her assignment; `other`'s changes.
    Bossy { profile: Profile, agent: usize, report: Preference, other: usize, before: Obj, after: Obj },
    /// `φ_a(γ ⊕ P|_{O∖I}) P_a`-worse than `φ_a(P*)`.
    RecursiveDominance { profile: Profile, agent: usize, head: Vec<Obj>, star: Preference, combined: Obj, deviation: Obj },
    /// After `history`, straightforward play under `profile` gives `agent`
    /// `straightforward`; acting as if `as_if` gives her the better `deviation`.
    ExPost { history: CollectiveHistory, profile: Profile, agent: usize, as_if: Preference, straightforward: Obj, deviation: Obj },
    /// After `history`, `agent` picks `choice` while everyone else picks `∅`
    /// from then on, yet does not end with `choice`.
    Unpunished { history: CollectiveHistory, agent: usize, menu: ObjSet, choice: Obj, outcome: Option<Obj> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub property: String,
    pub rule: String,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub witness: Option<Witness>,
    pub profiles_examined: u64,
    pub elapsed_ms: u64,
}

impl PropertyReport {
    pub fn holds(&self) -> bool {
        self.verdict == Verdict::Holds
    }

    pub(crate) fn from_search(
        property: &str,
        rule: &Rule,
        witness: Option<Witness>,
        profiles_examined: u64,
        started: Instant,
    ) -> PropertyReport {
        PropertyReport {
            property: property.into(),
            rule: rule.name().into(),
            verdict: if witness.is_some() { Verdict::Fails } else { Verdict::Holds },
            witness,
            profiles_examined,
            elapsed_ms: started.elapsed().as_millis() as u64,
        }
    }

    /// Re-evaluates `rule` on the witness. `Ok(true)` means the witness is a
    /// genuine counterexample (or the report has none and claims nothing).
    pub fn reverify(&self, rule: &Rule) -> Result<bool> {
        let Some(w) = &self.witness else {
            return Ok(self.holds());
        };
        let eval = |p: &[Preference]| rule.evaluate(p);
        let swap = |p: &Profile, a: usize, q: &Preference| {
            let mut p = p.clone();
            p[a] = q.clone();
            p
        };
        Ok(match w {
            Witness::MonotonicDiscoverability { profile, allocation, outcome, continuations } => {
                eval(profile)? == *outcome
                    && outcome != allocation
                    && continuations.len() == profile.len()
                    && continuations.iter().enumerate().all(|(a, cont)| {
                        in_lower_contour(profile, allocation, cont)
                            && eval(cont).map(|mu| mu.get(a) == allocation.get(a)).unwrap_or(false)
                    })
            }
            Witness::Misreport { profile, agent, report, truthful, misreported } => {
                let t = eval(profile)?.get(*agent);
                let d = eval(&swap(profile, *agent, report))?.get(*agent);
                t == *truthful && d == *misreported && profile[*agent].prefers(d, t)
            }
            Witness::NotIndividuallyRational { profile, agent, assigned } => {
                let got = eval(profile)?.get(*agent);
                got == *assigned && !profile[*agent].is_acceptable(got)
            }
            Witness::ResourceMonotonicity { profile, agent, report, other, before, after } => {
                let mu = eval(profile)?;
                let nu = eval(&swap(profile, *agent, report))?;
                nu.get(*agent).is_null()
                    && mu.get(*other) == *before
                    && nu.get(*other) == *after
                    && profile[*other].prefers(*before, *after)
            }
            Witness::Bossy { profile, agent, report, other, before, after } => {
                let mu = eval(profile)?;
                let nu = eval(&swap(profile, *agent, report))?;
                mu.get(*agent) == nu.get(*agent) && mu.get(*other) == *before && nu.get(*other) == *after && before != after
            }
            Witness::RecursiveDominance { profile, agent, head, star, combined, deviation } => {
                if !star.order().starts_with(head) {
                    return Ok(false);
                }
                let comb = profile[*agent].with_head(head)?;
                let c = eval(&swap(profile, *agent, &comb))?.get(*agent);
                let d = eval(&swap(profile, *agent, star))?.get(*agent);
                c == *combined && d == *deviation && profile[*agent].prefers(d, c)
            }
            Witness::ExPost { .. } | Witness::Unpunished { .. } => {
                return Err(Error::Unsupported("PAO witnesses are re-checked against their menu function".into()))
            }
        })
    }
}

fn in_lower_contour(profile: &[Preference], mu: &Allocation, cont: &[Preference]) -> bool {
    profile.len() == cont.len()
        && profile.iter().zip(cont).enumerate().all(|(a, (p, q))| q.order().starts_with(p.prefix_through(mu.get(a))))
}

/// `ℒ(P,μ)`: profiles agreeing with `P` on each `μ(a)` and everything above it.
pub fn lower_contour_set(table: &RuleTable, profile: &[Preference], mu: &Allocation) -> Result<Vec<Profile>> {
    let sets = lower_contour_sets(table, profile, mu)?;
    let mut out = Vec::new();
    table.for_each_in_product(&sets, |idx| out.push(table.profile(idx)))?;
    Ok(out)
}

fn lower_contour_sets(table: &RuleTable, profile: &[Preference], mu: &Allocation) -> Result<Vec<crate::model::PrefSet>> {
    if mu.n() != table.n() {
        return Err(Error::Validation(format!("allocation for {} agents, market has {}", mu.n(), table.n())));
    }
    let ids = profile.iter().map(|p| table.space().index_of(p)).collect::<Result<Vec<_>>>()?;
    Ok(ids.iter().enumerate().map(|(a, &i)| table.prefix_set(i, mu.get(a)).clone()).collect())
}

/// Checker front end: builds the outcome table once and runs any property.
pub struct Checker {
    table: Arc<RuleTable>,
}

pub const PROPERTIES: &[&str] = &[
    "monotonic-discoverability",
    "strategy-proof",
    "individually-rational",
    "resource-monotonic",
    "non-bossy",
    "recursive-dominance",
];

impl Checker {
    pub fn new(rule: &Rule, budget: Budget) -> Result<Checker> {
        Ok(Checker { table: Arc::new(RuleTable::new(rule, budget)?) })
    }

    pub fn from_table(table: Arc<RuleTable>) -> Checker {
        Checker { table }
    }

    pub fn shared_table(&self) -> Arc<RuleTable> {
        self.table.clone()
    }

    pub fn table(&self) -> &RuleTable {
        &self.table
    }

    pub fn rule(&self) -> &Rule {
        self.table.rule()
    }

    pub fn check(&self, property: &str) -> Result<PropertyReport> {
        match property {
            "monotonic-discoverability" | "md" => self.monotonic_discoverability(),
            "strategy-proof" | "sp" => self.strategy_proof(),
            "individually-rational" | "ir" => self.individually_rational(),
            "resource-monotonic" | "rm" => self.resource_monotonic(),
            "non-bossy" | "nb" => self.non_bossy(),
            "recursive-dominance" | "rd" => self.recursive_dominance(),
            other => Err(Error::Validation(format!("unknown property {other:?}; expected one of {PROPERTIES:?}"))),
        }
    }

    /// Searches profiles in index order; `probe` returns a witness or `None`.
    fn search(&self, probe: impl Fn(usize) -> Result<Option<Witness>> + Sync) -> Result<(Option<Witness>, u64)> {
        let count = self.table.profile_count();
        let found = (0..count)
            .into_par_iter()
            .map(|idx| probe(idx).map(|w| w.map(|w| (idx, w))))
            .find_first(|r| !matches!(r, Ok(None)));
        match found {
            None => Ok((None, count as u64)),
            Some(Err(e)) => Err(e),
            Some(Ok(Some((idx, w)))) => Ok((Some(w), idx as u64 + 1)),
            Some(Ok(None)) => unreachable!(),
        }
    }

    fn run(&self, property: &str, probe: impl Fn(usize) -> Result<Option<Witness>> + Sync) -> Result<PropertyReport> {
        let started = Instant::now();
        let (w, examined) = self.search(probe)?;
        Ok(PropertyReport::from_search(property, self.rule(), w, examined, started))
    }

    pub fn monotonic_discoverability(&self) -> Result<PropertyReport> {
        let t = &self.table;
        let allocations = t.rule().market().feasible_allocations(t.budget())?;
        self.run("monotonic-discoverability", |idx| {
            let ids = t.ids(idx);
            let outcome = t.allocation(idx);
            for mu in &allocations {
                if *mu == outcome {
                    continue;
                }
                let sets: Vec<_> = (0..t.n()).map(|a| t.prefix_set(ids[a], mu.get(a)).clone()).collect();
                let image = t.image(&sets)?;
                if (0..t.n()).all(|a| image.per_agent[a].contains(mu.get(a))) {
                    let mut continuations = Vec::with_capacity(t.n());
                    for a in 0..t.n() {
                        let mut hit = None;
                        t.for_each_in_product(&sets, |j| {
                            if hit.is_none() && t.outcome(j, a) == mu.get(a) {
                                hit = Some(j);
                            }
                        })?;
                        continuations.push(t.profile(hit.expect("image says it exists")));
                    }
                    return Ok(Some(Witness::MonotonicDiscoverability {
                        profile: t.profile(idx),
                        allocation: mu.clone(),
                        outcome,
                        continuations,
                    }));
                }
            }
            Ok(None)
        })
    }

    pub fn strategy_proof(&self) -> Result<PropertyReport> {
        let t = &self.table;
        let k = t.space().len();
        self.run("strategy-proof", |idx| {
            let ids = t.ids(idx);
            for a in 0..t.n() {
                let truth = t.space().get(ids[a]);
                let got = t.outcome(idx, a);
                for q in 0..k {
                    let dev = t.outcome(t.replace(idx, a, q), a);
                    if truth.prefers(dev, got) {
                        return Ok(Some(Witness::Misreport {
                            profile: t.profile(idx),
                            agent: a,
                            report: t.space().get(q).clone(),
                            truthful: got,
                            misreported: dev,
                        }));
                    }
                }
            }
            Ok(None)
        })
    }

    pub fn individually_rational(&self) -> Result<PropertyReport> {
        let t = &self.table;
        self.run("individually-rational", |idx| {
            let ids = t.ids(idx);
            for a in 0..t.n() {
                let got = t.outcome(idx, a);
                if !t.space().get(ids[a]).is_acceptable(got) {
                    return Ok(Some(Witness::NotIndividuallyRational { profile: t.profile(idx), agent: a, assigned: got }));
                }
            }
            Ok(None)
        })
    }

    pub fn resource_monotonic(&self) -> Result<PropertyReport> {
        let t = &self.table;
        let k = t.space().len();
        self.run("resource-monotonic", |idx| {
            let ids = t.ids(idx);
            for a in 0..t.n() {
                for q in 0..k {
                    let j = t.replace(idx, a, q);
                    if !t.outcome(j, a).is_null() {
                        continue;
                    }
                    for b in (0..t.n()).filter(|&b| b != a) {
                        let (before, after) = (t.outcome(idx, b), t.outcome(j, b));
                        if t.space().get(ids[b]).prefers(before, after) {
                            return Ok(Some(Witness::ResourceMonotonicity {
                                profile: t.profile(idx),
                                agent: a,
                                report: t.space().get(q).clone(),
                                other: b,
                                before,
                                after,
                            }));
                        }
                    }
                }
            }
            Ok(None)
        })
    }

    pub fn non_bossy(&self) -> Result<PropertyReport> {
        let t = &self.table;
        let k = t.space().len();
        self.run("non-bossy", |idx| {
            for a in 0..t.n() {
                for q in 0..k {
                    let j = t.replace(idx, a, q);
                    if t.outcome(j, a) != t.outcome(idx, a) {
                        continue;
                    }
                    if let Some(b) = (0..t.n()).find(|&b| t.outcome(j, b) != t.outcome(idx, b)) {
                        return Ok(Some(Witness::Bossy {
                            profile: t.profile(idx),
                            agent: a,
                            report: t.space().get(q).clone(),
                            other: b,
                            before: t.outcome(idx, b),
                            after: t.outcome(j, b),
                        }));
                    }
                }
            }
            Ok(None)
        })
    }

    /// For every `P*` and every length `k`, `γ` is the first `k` entries of
    /// `P*` and `I` their set; `γ ⊕ P_a|_{O∖I}` must weakly beat `P*`.
    pub fn recursive_dominance(&self) -> Result<PropertyReport> {
        let t = &self.table;
        let k = t.space().len();
        let len = t.space().get(0).order().len();
        self.run("recursive-dominance", |idx| {
            let ids = t.ids(idx);
            for a in 0..t.n() {
                let truth = t.space().get(ids[a]);
                for s in 0..k {
                    let star = t.space().get(s);
                    let dev = t.outcome(t.replace(idx, a, s), a);
                    for head_len in 0..=len {
                        let head = &star.order()[..head_len];
                        let combined = truth.with_head(head)?;
                        let Ok(c) = t.space().index_of(&combined) else {
                            continue;
                        };
                        let got = t.outcome(t.replace(idx, a, c), a);
                        if truth.prefers(dev, got) {
                            return Ok(Some(Witness::RecursiveDominance {
                                profile: t.profile(idx),
                                agent: a,
                                head: head.to_vec(),
                                star: star.clone(),
                                combined: got,
                                deviation: dev,
                            }));
                        }
                    }
                }
            }
            Ok(None)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Market, Priorities};

    fn pref(m: usize, v: &[Option<usize>]) -> Preference {
        Preference::from_indices(m, v).unwrap()
    }

    #[test]
    fn lower_contour_examples() {
        let t = RuleTable::new(&Rule::phi_star(), Budget::default()).unwrap();
        let p = vec![pref(3, &[Some(0), Some(1), Some(2), None])];
        let count = |o: Obj| lower_contour_set(&t, &p, &Allocation(vec![o])).unwrap().len();
        assert_eq!(count(Obj::new(0)), 6);
        assert_eq!(count(Obj::NULL), 1);
        assert_eq!(count(Obj::new(1)), 2);
        // Independent oracle: the displayed condition, pairwise.
        for mu in [Obj::new(0), Obj::new(1), Obj::new(2), Obj::NULL] {
            let direct = t
                .space()
                .prefs()
                .iter()
                .filter(|q| {
                    let up = |r: &Preference| -> Vec<(Obj, Obj)> {
                        let above: Vec<Obj> = r.order().iter().copied().filter(|&o| r.weakly_prefers(o, mu)).collect();
                        let mut pairs = Vec::new();
                        for &x in &above {
                            for &y in &above {
                                if r.prefers(x, y) {
                                    pairs.push((x, y));
                                }
                            }
                        }
                        pairs.sort();
                        pairs
                    };
                    let above_p: ObjSetLike = p[0].order().iter().copied().filter(|&o| p[0].weakly_prefers(o, mu)).collect();
                    let above_q: ObjSetLike = q.order().iter().copied().filter(|&o| q.weakly_prefers(o, mu)).collect();
                    above_p == above_q && up(&p[0]) == up(q)
                })
                .count();
            assert_eq!(direct, count(mu), "μ = {mu}");
        }
    }

    type ObjSetLike = std::collections::BTreeSet<Obj>;

    #[test]
    fn constant_rule_not_ir() {
        let market = Market::new(2, 2);
        let rule = Rule::custom("const-o1", market, |p| Allocation(vec![Obj::new(0), Obj::NULL][..p.len()].to_vec()));
        let c = Checker::new(&rule, Budget::default()).unwrap();
        let r = c.individually_rational().unwrap();
        assert_eq!(r.verdict, Verdict::Fails);
        assert!(r.reverify(&rule).unwrap());
    }

    #[test]
    fn bossy_rule_caught() {
        // a1 always gets ∅; her top choice decides whether a2 gets o1 or o2.
        let market = Market::new(2, 2);
        let rule = Rule::custom("bossy", market, |p| {
            let o = if p[0].top() == Obj::new(0) { Obj::new(0) } else { Obj::new(1) };
            Allocation(vec![Obj::NULL, o])
        });
        let c = Checker::new(&rule, Budget::default()).unwrap();
        let r = c.non_bossy().unwrap();
        assert_eq!(r.verdict, Verdict::Fails);
        assert!(r.reverify(&rule).unwrap());
    }

    #[test]
    fn single_agent_rm_vacuous() {
        let c = Checker::new(&Rule::phi_star(), Budget::default()).unwrap();
        assert!(c.resource_monotonic().unwrap().holds());
        assert!(c.individually_rational().unwrap().holds());
    }

    #[test]
    fn phi_star_md_witness() {
        let rule = Rule::phi_star();
        let c = Checker::new(&rule, Budget::default()).unwrap();
        let r = c.monotonic_discoverability().unwrap();
        assert_eq!(r.verdict, Verdict::Fails);
        assert!(r.reverify(&rule).unwrap());
        let Some(Witness::MonotonicDiscoverability { profile, allocation, .. }) = &r.witness else { panic!() };
        assert_eq!(profile[0].top(), Obj::new(0));
        assert_eq!(allocation.get(0), Obj::new(0));
    }

    #[test]
    fn ttc_sp_and_nb_small() {
        let market = Market::new(2, 2);
        let rule = Rule::ttc(market, Priorities::new(2, vec![vec![0, 1], vec![1, 0]]).unwrap()).unwrap();
        let c = Checker::new(&rule, Budget::default()).unwrap();
        for p in ["monotonic-discoverability", "strategy-proof", "individually-rational", "non-bossy", "recursive-dominance"] {
            assert!(c.check(p).unwrap().holds(), "{p}");
        }
    }

    #[test]
    fn unknown_property() {
        let c = Checker::new(&Rule::phi_star(), Budget::default()).unwrap();
        assert!(c.check("nope").is_err());
    }
}
