//! Who is who: registrable domains, CMP names, tracking domains and the
//! attribution of findings to a responsible party.

mod psl;
mod registry;

pub use psl::{PartyError, SuffixList};
pub use registry::{CmpRegistry, FirstPartyAliases, PartyRegistry, TrackingDomains};
