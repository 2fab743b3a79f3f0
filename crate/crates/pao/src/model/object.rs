use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Largest number of real object types representable in an [`ObjSet`].
pub const MAX_OBJECTS: usize = 31;

/// An object type, or the null object `∅`.
///
/// Real objects are small indices `0..m`; the null object is a sentinel that
/// sorts after every real object.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Obj(u8);

impl Obj {
    pub const NULL: Obj = Obj(u8::MAX);

    pub fn new(index: usize) -> Obj {
        assert!(index < MAX_OBJECTS, "object index {index} out of range");
        Obj(index as u8)
    }

    pub fn is_null(self) -> bool {
        self == Obj::NULL
    }

    /// Index of a real object; `None` for `∅`.
    pub fn index(self) -> Option<usize> {
        (!self.is_null()).then_some(self.0 as usize)
    }

    /// Dense position in a universe with `m` real objects (`∅` maps to `m`).
    pub fn slot(self, m: usize) -> usize {
        if self.is_null() {
            m
        } else {
            self.0 as usize
        }
    }

    pub fn from_slot(slot: usize, m: usize) -> Obj {
        if slot == m {
            Obj::NULL
        } else {
            Obj::new(slot)
        }
    }

    pub(crate) fn code(self) -> u8 {
        self.0
    }

    pub(crate) fn from_code(code: u8) -> Obj {
        Obj(code)
    }

    fn bit(self) -> u32 {
        if self.is_null() {
            1 << 31
        } else {
            1 << self.0
        }
    }
}

impl fmt::Debug for Obj {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Obj {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index() {
            Some(i) => write!(f, "o{}", i + 1),
            None => write!(f, "∅"),
        }
    }
}

// JSON form: the object index, or `null` for ∅.
impl Serialize for Obj {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.index() {
            Some(i) => s.serialize_some(&(i as u8)),
            None => s.serialize_none(),
        }
    }
}

impl<'de> Deserialize<'de> for Obj {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match Option::<u8>::deserialize(d)? {
            None => Ok(Obj::NULL),
            Some(i) if (i as usize) < MAX_OBJECTS => Ok(Obj(i)),
            Some(i) => Err(serde::de::Error::custom(format!("object index {i} out of range"))),
        }
    }
}

/// A set of objects (possibly containing `∅`), stored as a bitmask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct ObjSet(u32);

impl ObjSet {
    pub const EMPTY: ObjSet = ObjSet(0);

    pub fn singleton(o: Obj) -> ObjSet {
        ObjSet(o.bit())
    }

    /// All `m` real objects plus `∅`.
    pub fn universe(m: usize) -> ObjSet {
        ObjSet::real(m).with(Obj::NULL)
    }

    /// The `m` real objects, without `∅`.
    pub fn real(m: usize) -> ObjSet {
        ObjSet(((1u64 << m) - 1) as u32)
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn contains(self, o: Obj) -> bool {
        self.0 & o.bit() != 0
    }

    pub fn insert(&mut self, o: Obj) {
        self.0 |= o.bit();
    }

    pub fn remove(&mut self, o: Obj) {
        self.0 &= !o.bit();
    }

    pub fn with(mut self, o: Obj) -> ObjSet {
        self.insert(o);
        self
    }

    pub fn without(mut self, o: Obj) -> ObjSet {
        self.remove(o);
        self
    }

    pub fn union(self, other: ObjSet) -> ObjSet {
        ObjSet(self.0 | other.0)
    }

    pub fn intersect(self, other: ObjSet) -> ObjSet {
        ObjSet(self.0 & other.0)
    }

    pub fn minus(self, other: ObjSet) -> ObjSet {
        ObjSet(self.0 & !other.0)
    }

    pub fn is_subset(self, other: ObjSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    /// Real objects in ascending index order, then `∅` if present.
    pub fn iter(self) -> impl Iterator<Item = Obj> {
        let real = self.0 & !(1 << 31);
        (0..31)
            .filter(move |i| real & (1 << i) != 0)
            .map(Obj::new)
            .chain(self.contains(Obj::NULL).then_some(Obj::NULL))
    }

    /// Highest real object index present plus one (0 if none).
    pub fn real_span(self) -> usize {
        let real = self.0 & !(1 << 31);
        32 - real.leading_zeros() as usize
    }
}

impl FromIterator<Obj> for ObjSet {
    fn from_iter<I: IntoIterator<Item = Obj>>(iter: I) -> Self {
        let mut s = ObjSet::EMPTY;
        for o in iter {
            s.insert(o);
        }
        s
    }
}

impl fmt::Debug for ObjSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl Serialize for ObjSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for ObjSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(Vec::<Obj>::deserialize(d)?.into_iter().collect())
    }
}
