//! Laboratory-style batteries: generated markets played under direct, PAO and
//! OSP mechanisms by truthful or random agents, with tables recomputable from
//! the stored transcripts.

mod battery;
mod market;
mod metrics;
mod output;

pub use battery::*;
pub use market::*;
pub use metrics::*;
pub use output::*;
