//! Exhaustive outcome tables: a rule evaluated once on every profile, plus
//! memoized images of product sets of profiles.

use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, RwLock};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Allocation, Budget, Obj, ObjSet, PrefSet, Preference, PreferenceSpace, Profile};
use crate::rules::Rule;

/// What a rule can output over a product of per-agent preference sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    /// `μ_i^φ`: every object agent `i` receives somewhere in the product.
    pub per_agent: Vec<ObjSet>,
    /// `φ(h)`: the distinct allocations, sorted.
    pub allocations: Vec<Allocation>,
    pub profiles: u64,
}

impl Image {
    pub fn is_determined(&self) -> bool {
        self.allocations.len() == 1
    }
}

pub struct RuleTable {
    rule: Rule,
    space: PreferenceSpace,
    n: usize,
    count: usize,
    cells: Vec<u8>,
    prefix: Vec<Vec<PrefSet>>,
    budget: Budget,
    cache: RwLock<HashMap<Vec<PrefSet>, Arc<Image>>>,
}

impl std::fmt::Debug for RuleTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RuleTable").field("rule", &self.rule.name()).field("profiles", &self.count).finish()
    }
}

impl RuleTable {
    pub fn new(rule: &Rule, budget: Budget) -> Result<RuleTable> {
        let market = rule.market();
        let space = market.space(budget)?;
        let n = market.n();
        let count = space.profile_count(n, budget)?;
        let results: Vec<Result<Vec<u8>>> = (0..count)
            .into_par_iter()
            .map(|idx| {
                let mut ids = vec![0; n];
                space.decode(n, idx, &mut ids);
                let profile: Vec<Preference> = ids.iter().map(|&i| space.get(i).clone()).collect();
                let mu = rule.evaluate_unchecked(&profile)?;
                if mu.n() != n {
                    return Err(Error::Validation(format!("rule {} returned {} assignments", rule.name(), mu.n())));
                }
                Ok(mu.0.iter().map(|o| o.code()).collect())
            })
            .collect();
        let mut cells = Vec::with_capacity(count * n);
        for r in results {
            cells.extend(r?);
        }
        let m = market.m();
        let prefix = space
            .prefs()
            .iter()
            .map(|p| (0..=m).map(|s| space.prefix_set(p, Obj::from_slot(s, m))).collect())
            .collect();
        Ok(RuleTable { rule: rule.clone(), space, n, count, cells, prefix, budget, cache: RwLock::default() })
    }

    pub fn rule(&self) -> &Rule {
        &self.rule
    }

    pub fn space(&self) -> &PreferenceSpace {
        &self.space
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.space.m()
    }

    pub fn budget(&self) -> Budget {
        self.budget
    }

    pub fn profile_count(&self) -> usize {
        self.count
    }

    #[inline]
    pub fn outcome(&self, profile: usize, agent: usize) -> Obj {
        Obj::from_code(self.cells[profile * self.n + agent])
    }

    pub fn allocation(&self, profile: usize) -> Allocation {
        Allocation((0..self.n).map(|a| self.outcome(profile, a)).collect())
    }

    pub fn ids(&self, profile: usize) -> Vec<usize> {
        let mut ids = vec![0; self.n];
        self.space.decode(self.n, profile, &mut ids);
        ids
    }

    pub fn profile(&self, profile: usize) -> Profile {
        self.space.profile(&self.ids(profile))
    }

    pub fn index(&self, ids: &[usize]) -> usize {
        self.space.encode(ids)
    }

    pub fn index_of(&self, profile: &[Preference]) -> Result<usize> {
        let ids = profile.iter().map(|p| self.space.index_of(p)).collect::<Result<Vec<_>>>()?;
        Ok(self.index(&ids))
    }

    /// Index of the profile equal to `profile` except agent `a` reports preference `q`.
    #[inline]
    pub fn replace(&self, profile: usize, a: usize, q: usize) -> usize {
        let k = self.space.len();
        let weight = k.pow((self.n - 1 - a) as u32);
        let current = (profile / weight) % k;
        profile - current * weight + q * weight
    }

    /// Preferences sharing preference `pref`'s ranking down to and including `o`.
    pub fn prefix_set(&self, pref: usize, o: Obj) -> &PrefSet {
        &self.prefix[pref][o.slot(self.m())]
    }

    /// Calls `f` on every profile index in the product of `sets`.
    pub fn for_each_in_product(&self, sets: &[PrefSet], mut f: impl FnMut(usize)) -> Result<u64> {
        let lists: Vec<Vec<usize>> = sets.iter().map(|s| s.iter().collect()).collect();
        let size = lists.iter().map(|l| l.len() as u128).product::<u128>();
        self.budget.check(size)?;
        if size == 0 {
            return Ok(0);
        }
        let mut pos = vec![0usize; self.n];
        loop {
            let ids: Vec<usize> = (0..self.n).map(|a| lists[a][pos[a]]).collect();
            f(self.index(&ids));
            let mut a = self.n;
            loop {
                if a == 0 {
                    return Ok(size as u64);
                }
                a -= 1;
                pos[a] += 1;
                if pos[a] < lists[a].len() {
                    break;
                }
                pos[a] = 0;
            }
        }
    }

    /// Image of the rule over the product of per-agent sets (memoized).
    pub fn image(&self, sets: &[PrefSet]) -> Result<Arc<Image>> {
        if let Some(hit) = self.cache.read().expect("cache lock").get(sets) {
            return Ok(hit.clone());
        }
        let mut per_agent = vec![ObjSet::EMPTY; self.n];
        let mut seen: BTreeSet<Vec<u8>> = BTreeSet::new();
        let profiles = self.for_each_in_product(sets, |idx| {
            let row = &self.cells[idx * self.n..(idx + 1) * self.n];
            for (a, &c) in row.iter().enumerate() {
                per_agent[a].insert(Obj::from_code(c));
            }
            if !seen.contains(row) {
                seen.insert(row.to_vec());
            }
        })?;
        let image = Arc::new(Image {
            per_agent,
            allocations: seen.into_iter().map(|r| Allocation(r.into_iter().map(Obj::from_code).collect())).collect(),
            profiles,
        });
        self.cache.write().expect("cache lock").insert(sets.to_vec(), image.clone());
        Ok(image)
    }
}
