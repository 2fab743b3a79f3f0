use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::object::{Obj, ObjSet, MAX_OBJECTS};
use super::preference::{Budget, Domain, Preference, PreferenceSpace, Profile};
use crate::error::{Error, Result};

pub const NULL_LABEL: &str = "∅";

/// Agents, object types with capacities, and the admissible preference domain.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Market {
    agents: Vec<String>,
    objects: Vec<String>,
    capacities: Vec<u32>,
    domain: Domain,
}

impl Market {
    /// `n` agents `a1..an`, `m` unit-capacity objects `o1..om`, full domain.
    pub fn new(n: usize, m: usize) -> Market {
        Market::unit(n, m, Domain::Full)
    }

    pub fn unit(n: usize, m: usize, domain: Domain) -> Market {
        let agents = (1..=n).map(|i| format!("a{i}")).collect();
        let objects = (1..=m).map(|i| (format!("o{i}"), 1)).collect();
        Market::with_labels(agents, objects, domain).expect("generated labels are valid")
    }

    /// Objects are re-indexed in sorted label order.
    pub fn with_labels(agents: Vec<String>, mut objects: Vec<(String, u32)>, domain: Domain) -> Result<Market> {
        if agents.is_empty() {
            return Err(Error::Validation("a market needs at least one agent".into()));
        }
        if objects.len() > MAX_OBJECTS {
            return Err(Error::Validation(format!("at most {MAX_OBJECTS} object types are supported")));
        }
        objects.sort_by(|a, b| a.0.cmp(&b.0));
        for w in objects.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Validation(format!("duplicate object label {}", w[0].0)));
            }
        }
        let mut seen = agents.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != agents.len() {
            return Err(Error::Validation("duplicate agent label".into()));
        }
        for (label, cap) in &objects {
            if label == NULL_LABEL || label.is_empty() {
                return Err(Error::Validation(format!("invalid object label {label:?}")));
            }
            if *cap == 0 {
                return Err(Error::Validation(format!("object {label} has capacity 0")));
            }
        }
        let (objects, capacities) = objects.into_iter().unzip();
        Ok(Market { agents, objects, capacities, domain })
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn m(&self) -> usize {
        self.objects.len()
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn with_domain(mut self, domain: Domain) -> Market {
        self.domain = domain;
        self
    }

    pub fn agent_labels(&self) -> &[String] {
        &self.agents
    }

    pub fn object_labels(&self) -> &[String] {
        &self.objects
    }

    pub fn capacity(&self, o: Obj) -> u32 {
        match o.index() {
            Some(i) => self.capacities[i],
            None => u32::MAX,
        }
    }

    pub fn capacities(&self) -> &[u32] {
        &self.capacities
    }

    pub fn unit_capacities(&self) -> bool {
        self.capacities.iter().all(|&c| c == 1)
    }

    pub fn objects(&self) -> impl Iterator<Item = Obj> {
        (0..self.m()).map(Obj::new)
    }

    /// All object types plus `∅`.
    pub fn universe(&self) -> ObjSet {
        ObjSet::universe(self.m())
    }

    pub fn space(&self, budget: Budget) -> Result<PreferenceSpace> {
        PreferenceSpace::new(self.m(), self.domain, budget)
    }

    pub fn label(&self, o: Obj) -> &str {
        match o.index() {
            Some(i) => &self.objects[i],
            None => NULL_LABEL,
        }
    }

    pub fn parse_obj(&self, label: &str) -> Result<Obj> {
        if label == NULL_LABEL || label.eq_ignore_ascii_case("null") || label.eq_ignore_ascii_case("none") {
            return Ok(Obj::NULL);
        }
        self.objects
            .binary_search_by(|l| l.as_str().cmp(label))
            .map(Obj::new)
            .map_err(|_| Error::UniverseMismatch(format!("unknown object label {label:?}")))
    }

    pub fn agent_index(&self, label: &str) -> Result<usize> {
        self.agents
            .iter()
            .position(|a| a == label)
            .ok_or_else(|| Error::UniverseMismatch(format!("unknown agent label {label:?}")))
    }

    /// Parses a complete ranking given by labels.
    pub fn parse_preference<S: AsRef<str>>(&self, labels: &[S]) -> Result<Preference> {
        if labels.len() != self.m() + 1 {
            return Err(Error::Validation(format!(
                "a ranking must list all {} objects and ∅, got {} entries",
                self.m(),
                labels.len()
            )));
        }
        let order = labels.iter().map(|l| self.parse_obj(l.as_ref())).collect::<Result<Vec<_>>>()?;
        let p = Preference::new(order)?;
        self.check_preference(&p)?;
        Ok(p)
    }

    pub fn check_preference(&self, p: &Preference) -> Result<()> {
        if p.m() != self.m() {
            return Err(Error::UniverseMismatch(format!("ranking over {} objects, market has {}", p.m(), self.m())));
        }
        if !self.domain.admits(p) {
            return Err(Error::Validation(format!("{p:?} is outside the {:?} domain", self.domain)));
        }
        Ok(())
    }

    pub fn check_profile(&self, profile: &[Preference]) -> Result<()> {
        if profile.len() != self.n() {
            return Err(Error::UniverseMismatch(format!("profile has {} rankings for {} agents", profile.len(), self.n())));
        }
        profile.iter().try_for_each(|p| self.check_preference(p))
    }

    pub fn preference_labels(&self, p: &Preference) -> Vec<String> {
        p.order().iter().map(|&o| self.label(o).to_string()).collect()
    }

    /// Every capacity-feasible allocation, lexicographic with `∅` last per agent.
    pub fn feasible_allocations(&self, budget: Budget) -> Result<Vec<Allocation>> {
        let n = self.n();
        let k = self.m() + 1;
        budget.check((k as u128).checked_pow(n as u32).unwrap_or(u128::MAX))?;
        let mut out = Vec::new();
        let mut slots = vec![0usize; n];
        let mut used = vec![0u32; self.m()];
        fn rec(market: &Market, a: usize, slots: &mut [usize], used: &mut [u32], out: &mut Vec<Allocation>) {
            let m = market.m();
            if a == slots.len() {
                out.push(Allocation(slots.iter().map(|&s| Obj::from_slot(s, m)).collect()));
                return;
            }
            for s in 0..=m {
                if s < m && used[s] >= market.capacities[s] {
                    continue;
                }
                if s < m {
                    used[s] += 1;
                }
                slots[a] = s;
                rec(market, a + 1, slots, used, out);
                if s < m {
                    used[s] -= 1;
                }
            }
        }
        rec(self, 0, &mut slots, &mut used, &mut out);
        Ok(out)
    }
}

/// `μ`: one object (or `∅`) per agent.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Allocation(pub Vec<Obj>);

impl std::fmt::Debug for Allocation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(&self.0).finish()
    }
}

impl Allocation {
    pub fn unmatched(n: usize) -> Allocation {
        Allocation(vec![Obj::NULL; n])
    }

    pub fn get(&self, agent: usize) -> Obj {
        self.0[agent]
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn holders(&self, o: Obj) -> usize {
        self.0.iter().filter(|&&x| x == o).count()
    }

    pub fn validate(&self, market: &Market) -> Result<()> {
        if self.n() != market.n() {
            return Err(Error::Validation(format!("allocation covers {} agents, market has {}", self.n(), market.n())));
        }
        for o in market.objects() {
            if self.holders(o) as u32 > market.capacity(o) {
                return Err(Error::Validation(format!("{} is over capacity in {self:?}", market.label(o))));
            }
        }
        if let Some(o) = self.0.iter().find(|o| o.index().is_some_and(|i| i >= market.m())) {
            return Err(Error::UniverseMismatch(format!("{o} is not an object of the market")));
        }
        Ok(())
    }

    pub fn labels(&self, market: &Market) -> Vec<String> {
        self.0.iter().map(|&o| market.label(o).to_string()).collect()
    }
}

/// Per object, a strict order over all agents (highest priority first).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Priorities {
    order: Vec<Vec<usize>>,
    rank: Vec<Vec<u8>>,
}

impl Priorities {
    pub fn new(n: usize, order: Vec<Vec<usize>>) -> Result<Priorities> {
        let mut rank = Vec::with_capacity(order.len());
        for (o, ord) in order.iter().enumerate() {
            let mut r = vec![u8::MAX; n];
            if ord.len() != n {
                return Err(Error::Validation(format!("priority list of o{} has {} agents, expected {n}", o + 1, ord.len())));
            }
            for (pos, &a) in ord.iter().enumerate() {
                if a >= n || r[a] != u8::MAX {
                    return Err(Error::Validation(format!("priority list of o{} is not a permutation of agents", o + 1)));
                }
                r[a] = pos as u8;
            }
            rank.push(r);
        }
        Ok(Priorities { order, rank })
    }

    /// The same order at every object.
    pub fn common(m: usize, order: Vec<usize>) -> Result<Priorities> {
        let n = order.len();
        Priorities::new(n, vec![order; m])
    }

    /// Every object ranks agents by descending score.
    pub fn from_scores(m: usize, scores: &[f64]) -> Result<Priorities> {
        validate_scores(scores)?;
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        Priorities::common(m, order)
    }

    pub fn n(&self) -> usize {
        self.rank.first().map_or(0, Vec::len)
    }

    pub fn m(&self) -> usize {
        self.order.len()
    }

    pub fn check_market(&self, market: &Market) -> Result<()> {
        if self.m() != market.m() || (self.m() > 0 && self.n() != market.n()) {
            return Err(Error::Validation(format!(
                "priority table is {}x{}, market is {} agents x {} objects",
                self.m(),
                self.n(),
                market.n(),
                market.m()
            )));
        }
        Ok(())
    }

    pub fn order(&self, o: usize) -> &[usize] {
        &self.order[o]
    }

    pub fn orders(&self) -> &[Vec<usize>] {
        &self.order
    }

    /// 0 = highest priority.
    #[inline]
    pub fn rank(&self, o: usize, agent: usize) -> usize {
        self.rank[o][agent] as usize
    }

    /// Highest-priority agent at `o` among those in `agents` (bitmask).
    pub fn top_among(&self, o: usize, agents: u64) -> Option<usize> {
        self.order[o].iter().copied().find(|&a| agents & (1 << a) != 0)
    }
}

pub fn validate_scores(scores: &[f64]) -> Result<()> {
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Validation("scores must be finite".into()));
    }
    for i in 0..scores.len() {
        for j in i + 1..scores.len() {
            if scores[i] == scores[j] {
                return Err(Error::Validation(format!("duplicate score {} for agents {} and {}", scores[i], i + 1, j + 1)));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ObjectEntry {
    pub label: String,
    #[serde(default = "one")]
    pub capacity: u32,
}

fn one() -> u32 {
    1
}

/// JSON market document shared by the CLI, the experiments and the service.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MarketFile {
    pub agents: Vec<String>,
    pub objects: Vec<ObjectEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priorities: Option<BTreeMap<String, Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,
}

impl MarketFile {
    pub fn load(path: impl AsRef<Path>) -> Result<MarketFile> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn market(&self) -> Result<Market> {
        Market::with_labels(
            self.agents.clone(),
            self.objects.iter().map(|o| (o.label.clone(), o.capacity)).collect(),
            self.domain.unwrap_or_default(),
        )
    }

    pub fn priorities(&self, market: &Market) -> Result<Option<Priorities>> {
        let Some(table) = &self.priorities else { return Ok(None) };
        let mut order = Vec::with_capacity(market.m());
        for label in market.object_labels() {
            let list = table
                .get(label)
                .ok_or_else(|| Error::Validation(format!("priority table has no entry for {label}")))?;
            order.push(list.iter().map(|a| market.agent_index(a)).collect::<Result<Vec<_>>>()?);
        }
        if table.len() != market.m() {
            return Err(Error::Validation("priority table names unknown objects".into()));
        }
        Priorities::new(market.n(), order).map(Some)
    }

    pub fn scores(&self, market: &Market) -> Result<Option<Vec<f64>>> {
        let Some(table) = &self.scores else { return Ok(None) };
        let scores = market
            .agent_labels()
            .iter()
            .map(|a| table.get(a).copied().ok_or_else(|| Error::Validation(format!("no score for agent {a}"))))
            .collect::<Result<Vec<_>>>()?;
        validate_scores(&scores)?;
        Ok(Some(scores))
    }

    pub fn from_parts(market: &Market, priorities: Option<&Priorities>, scores: Option<&[f64]>) -> MarketFile {
        let agents = market.agent_labels().to_vec();
        MarketFile {
            agents: agents.clone(),
            objects: market
                .object_labels()
                .iter()
                .zip(market.capacities())
                .map(|(l, &c)| ObjectEntry { label: l.clone(), capacity: c })
                .collect(),
            priorities: priorities.map(|p| {
                market
                    .object_labels()
                    .iter()
                    .enumerate()
                    .map(|(o, l)| (l.clone(), p.order(o).iter().map(|&a| agents[a].clone()).collect()))
                    .collect()
            }),
            scores: scores.map(|s| agents.iter().cloned().zip(s.iter().copied()).collect()),
            domain: (market.domain() != Domain::Full).then_some(market.domain()),
        }
    }
}

/// Profile document: agent label → ranking labels.
pub fn parse_profile(market: &Market, doc: &BTreeMap<String, Vec<String>>) -> Result<Profile> {
    market
        .agent_labels()
        .iter()
        .map(|a| {
            let ranking = doc.get(a).ok_or_else(|| Error::Validation(format!("profile has no ranking for {a}")))?;
            market.parse_preference(ranking)
        })
        .collect()
}

pub fn profile_document(market: &Market, profile: &[Preference]) -> BTreeMap<String, Vec<String>> {
    market
        .agent_labels()
        .iter()
        .zip(profile)
        .map(|(a, p)| (a.clone(), market.preference_labels(p)))
        .collect()
}
