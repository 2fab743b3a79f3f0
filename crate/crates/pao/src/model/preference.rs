use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::history::ChoiceHistory;
use super::object::{Obj, ObjSet, MAX_OBJECTS};
use crate::error::{Error, Result};

/// A strict ranking of all `m` object types and `∅`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Preference {
    order: Vec<Obj>,
    rank: Vec<u8>,
}

pub type Profile = Vec<Preference>;

impl Preference {
    pub fn new(order: Vec<Obj>) -> Result<Preference> {
        if order.is_empty() || order.len() > MAX_OBJECTS + 1 {
            return Err(Error::UniverseMismatch(format!(
                "ranking of length {} is not a ranking over objects plus ∅",
                order.len()
            )));
        }
        let m = order.len() - 1;
        let mut rank = vec![u8::MAX; m + 1];
        for (pos, &o) in order.iter().enumerate() {
            let slot = o.slot(m);
            if slot > m || rank[slot] != u8::MAX {
                return Err(Error::UniverseMismatch(format!(
                    "{o} is out of range or repeated in a ranking over {m} objects"
                )));
            }
            rank[slot] = pos as u8;
        }
        Ok(Preference { order, rank })
    }

    /// Builds a preference from 0-based object indices, with `None` as `∅`.
    ///
    /// Objects omitted from `order` are appended in index order, so
    /// `from_indices(3, &[Some(1), None])` is `(o2, ∅, o1, o3)`.
    pub fn from_indices(m: usize, order: &[Option<usize>]) -> Result<Preference> {
        let mut v: Vec<Obj> = order.iter().map(|o| o.map_or(Obj::NULL, Obj::new)).collect();
        for slot in 0..=m {
            let o = Obj::from_slot(slot, m);
            if !v.contains(&o) {
                v.push(o);
            }
        }
        Preference::new(v)
    }

    /// All real objects acceptable, ranked in `order` (missing objects appended).
    pub fn acceptable(m: usize, order: &[usize]) -> Result<Preference> {
        let mut v: Vec<Obj> = order.iter().map(|&i| Obj::new(i)).collect();
        for i in 0..m {
            if !order.contains(&i) {
                v.push(Obj::new(i));
            }
        }
        v.push(Obj::NULL);
        Preference::new(v)
    }

    pub fn m(&self) -> usize {
        self.order.len() - 1
    }

    pub fn order(&self) -> &[Obj] {
        &self.order
    }

    pub fn top(&self) -> Obj {
        self.order[0]
    }

    fn check(&self, o: Obj) -> Result<usize> {
        let slot = o.slot(self.m());
        if slot > self.m() {
            return Err(Error::UniverseMismatch(format!(
                "{o} is not in a universe of {} objects",
                self.m()
            )));
        }
        Ok(slot)
    }

    /// 1-based position of `o`.
    pub fn rank_of(&self, o: Obj) -> Result<usize> {
        let slot = self.check(o)?;
        Ok(self.rank[slot] as usize + 1)
    }

    /// 0-based position; panics on objects outside the universe.
    #[inline]
    pub fn pos(&self, o: Obj) -> usize {
        self.rank[o.slot(self.m())] as usize
    }

    /// Strict preference `a P b`.
    #[inline]
    pub fn prefers(&self, a: Obj, b: Obj) -> bool {
        self.pos(a) < self.pos(b)
    }

    /// Weak preference `a R b`.
    #[inline]
    pub fn weakly_prefers(&self, a: Obj, b: Obj) -> bool {
        self.pos(a) <= self.pos(b)
    }

    pub fn is_acceptable(&self, o: Obj) -> bool {
        self.weakly_prefers(o, Obj::NULL)
    }

    /// Most-preferred element of `menu`.
    pub fn best_in(&self, menu: ObjSet) -> Option<Obj> {
        self.order.iter().copied().find(|&o| menu.contains(o))
    }

    /// Objects ranked strictly above `o`, plus `o`, in order.
    pub fn prefix_through(&self, o: Obj) -> &[Obj] {
        &self.order[..=self.pos(o)]
    }

    /// `P|_I`: the ranking restricted to `keep`, in order.
    pub fn restricted(&self, keep: ObjSet) -> Vec<Obj> {
        self.order.iter().copied().filter(|&o| keep.contains(o)).collect()
    }

    /// Preference that ranks `head` first (in order), then the rest as in `self`.
    pub fn with_head(&self, head: &[Obj]) -> Result<Preference> {
        let h: ObjSet = head.iter().copied().collect();
        let mut v = head.to_vec();
        v.extend(self.order.iter().copied().filter(|&o| !h.contains(o)));
        Preference::new(v)
    }
}

impl fmt::Debug for Preference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, o) in self.order.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{o}")?;
        }
        write!(f, ")")
    }
}

impl Serialize for Preference {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.order.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Preference {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let order = Vec::<Obj>::deserialize(d)?;
        Preference::new(order).map_err(serde::de::Error::custom)
    }
}

/// Which rankings are admissible in a market.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    /// Every ranking of objects and `∅`: `(m+1)!` preferences.
    #[default]
    Full,
    /// `∅` ranked last: `m!` preferences.
    AllAcceptable,
}

impl Domain {
    pub fn admits(self, p: &Preference) -> bool {
        match self {
            Domain::Full => true,
            Domain::AllAcceptable => p.order.last() == Some(&Obj::NULL),
        }
    }

    pub fn size(self, m: usize) -> u128 {
        let k = match self {
            Domain::Full => m + 1,
            Domain::AllAcceptable => m,
        };
        (1..=k as u128).product()
    }
}

/// Cap on the number of candidates an exhaustive enumeration may touch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget(pub u64);

impl Default for Budget {
    fn default() -> Self {
        Budget(10_000_000)
    }
}

impl Budget {
    pub fn check(self, needed: u128) -> Result<()> {
        if needed > self.0 as u128 {
            Err(Error::BudgetExceeded { needed, budget: self.0 })
        } else {
            Ok(())
        }
    }
}

/// A set of preferences, as a bitset over indices of a [`PreferenceSpace`].
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct PrefSet {
    words: Vec<u64>,
}

impl PrefSet {
    pub fn empty(k: usize) -> PrefSet {
        PrefSet { words: vec![0; k.div_ceil(64)] }
    }

    pub fn full(k: usize) -> PrefSet {
        let mut s = PrefSet::empty(k);
        for i in 0..k {
            s.insert(i);
        }
        s
    }

    pub fn insert(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn contains(&self, i: usize) -> bool {
        self.words[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn intersect(&self, other: &PrefSet) -> PrefSet {
        PrefSet { words: self.words.iter().zip(&other.words).map(|(a, b)| a & b).collect() }
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            (0..64).filter(move |b| w & (1 << b) != 0).map(move |b| wi * 64 + b)
        })
    }
}

/// Every admissible preference of a market, indexed in lexicographic order
/// of rankings (real objects by index, `∅` last).
#[derive(Clone, Debug)]
pub struct PreferenceSpace {
    m: usize,
    domain: Domain,
    prefs: Vec<Preference>,
    index: HashMap<Vec<Obj>, usize>,
}

impl PreferenceSpace {
    pub fn new(m: usize, domain: Domain, budget: Budget) -> Result<PreferenceSpace> {
        budget.check(domain.size(m))?;
        let mut slots: Vec<usize> = match domain {
            Domain::Full => (0..=m).collect(),
            Domain::AllAcceptable => (0..m).collect(),
        };
        let mut prefs = Vec::new();
        loop {
            let mut order: Vec<Obj> = slots.iter().map(|&s| Obj::from_slot(s, m)).collect();
            if domain == Domain::AllAcceptable {
                order.push(Obj::NULL);
            }
            prefs.push(Preference::new(order)?);
            if !next_permutation(&mut slots) {
                break;
            }
        }
        let index = prefs.iter().enumerate().map(|(i, p)| (p.order.clone(), i)).collect();
        Ok(PreferenceSpace { m, domain, prefs, index })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.prefs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prefs.is_empty()
    }

    pub fn get(&self, i: usize) -> &Preference {
        &self.prefs[i]
    }

    pub fn prefs(&self) -> &[Preference] {
        &self.prefs
    }

    pub fn index_of(&self, p: &Preference) -> Result<usize> {
        self.index.get(&p.order).copied().ok_or_else(|| {
            Error::UniverseMismatch(format!("{p:?} is not in the {:?} domain over {} objects", self.domain, self.m))
        })
    }

    pub fn all(&self) -> PrefSet {
        PrefSet::full(self.len())
    }

    /// Preferences consistent with a choice history.
    pub fn consistent_set(&self, h: &ChoiceHistory) -> Result<PrefSet> {
        h.check_universe(self.m)?;
        let mut s = PrefSet::empty(self.len());
        for (i, p) in self.prefs.iter().enumerate() {
            if h.offers.iter().all(|o| o.menu.iter().all(|x| p.weakly_prefers(o.choice, x))) {
                s.insert(i);
            }
        }
        Ok(s)
    }

    /// Preferences that share `p`'s ranking down to and including `o`.
    pub fn prefix_set(&self, p: &Preference, o: Obj) -> PrefSet {
        let head = p.prefix_through(o);
        let mut s = PrefSet::empty(self.len());
        for (i, q) in self.prefs.iter().enumerate() {
            if q.order.starts_with(head) {
                s.insert(i);
            }
        }
        s
    }

    /// Preferences whose ranking begins with `head`.
    pub fn with_head(&self, head: &[Obj]) -> PrefSet {
        let mut s = PrefSet::empty(self.len());
        for (i, q) in self.prefs.iter().enumerate() {
            if q.order.starts_with(head) {
                s.insert(i);
            }
        }
        s
    }

    /// Number of profiles for `n` agents, guarded by the budget.
    pub fn profile_count(&self, n: usize, budget: Budget) -> Result<usize> {
        let count = (self.len() as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
        budget.check(count)?;
        Ok(count as usize)
    }

    /// Decodes a profile index (agent 0 most significant).
    pub fn decode(&self, n: usize, mut idx: usize, out: &mut [usize]) {
        let k = self.len();
        for a in (0..n).rev() {
            out[a] = idx % k;
            idx /= k;
        }
    }

    pub fn encode(&self, ids: &[usize]) -> usize {
        ids.iter().fold(0, |acc, &i| acc * self.len() + i)
    }

    pub fn profile(&self, ids: &[usize]) -> Profile {
        ids.iter().map(|&i| self.prefs[i].clone()).collect()
    }
}

/// Lexicographic successor; `false` when `v` is the last permutation.
pub fn next_permutation<T: Ord>(v: &mut [T]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn o(i: usize) -> Obj {
        Obj::new(i)
    }

    #[test]
    fn rank_queries() {
        let p = Preference::new(vec![o(0), o(1), Obj::NULL]).unwrap();
        assert_eq!(p.rank_of(o(0)).unwrap(), 1);
        assert_eq!(p.rank_of(Obj::NULL).unwrap(), 3);
        let q = Preference::new(vec![o(1), o(0), Obj::NULL]).unwrap();
        assert_eq!(q.rank_of(o(0)).unwrap(), 2);
        assert!(matches!(p.rank_of(o(5)), Err(Error::UniverseMismatch(_))));
    }

    #[test]
    fn rejects_non_permutations() {
        assert!(Preference::new(vec![o(0), o(0), Obj::NULL]).is_err());
        assert!(Preference::new(vec![o(0), o(2), Obj::NULL]).is_err());
        assert!(Preference::new(vec![]).is_err());
    }

    #[test]
    fn space_sizes_and_order() {
        let full = PreferenceSpace::new(3, Domain::Full, Budget::default()).unwrap();
        assert_eq!(full.len(), 24);
        assert_eq!(full.get(0).order(), &[o(0), o(1), o(2), Obj::NULL]);
        assert_eq!(full.get(23).order(), &[Obj::NULL, o(2), o(1), o(0)]);
        let acc = PreferenceSpace::new(3, Domain::AllAcceptable, Budget::default()).unwrap();
        assert_eq!(acc.len(), 6);
        assert!(acc.prefs().iter().all(|p| Domain::AllAcceptable.admits(p)));
        for (i, p) in full.prefs().iter().enumerate() {
            assert_eq!(full.index_of(p).unwrap(), i);
        }
    }

    #[test]
    fn budget_guard() {
        let err = PreferenceSpace::new(10, Domain::Full, Budget(1000)).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { budget: 1000, .. }));
    }

    #[test]
    fn profile_codec() {
        let s = PreferenceSpace::new(2, Domain::Full, Budget::default()).unwrap();
        let mut ids = [0; 3];
        for idx in 0..s.profile_count(3, Budget::default()).unwrap() {
            s.decode(3, idx, &mut ids);
            assert_eq!(s.encode(&ids), idx);
        }
    }

    #[test]
    fn with_head_and_restriction() {
        let p = Preference::new(vec![o(0), o(3), Obj::NULL, o(1), o(2)]).unwrap();
        let keep: ObjSet = [o(1), o(3)].into_iter().collect();
        assert_eq!(p.restricted(keep), vec![o(3), o(1)]);
        let q = p.with_head(&[o(2), Obj::NULL]).unwrap();
        assert_eq!(q.order(), &[o(2), Obj::NULL, o(0), o(3), o(1)]);
    }
}
