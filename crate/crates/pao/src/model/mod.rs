//! Markets, preferences, choice histories and allocations.

mod history;
mod market;
mod object;
mod preference;

pub use history::{is_consistent, ChoiceHistory, CollectiveHistory, MenuOffer};
pub use market::{
    parse_profile, profile_document, validate_scores, Allocation, Market, MarketFile, ObjectEntry, Priorities,
    NULL_LABEL,
};
pub use object::{Obj, ObjSet, MAX_OBJECTS};
pub use preference::{next_permutation, Budget, Domain, PrefSet, Preference, PreferenceSpace, Profile};
