//! Exact information measures on finite distributions, inequality and PNS
//! oracles, distance correlation and classification metrics.

mod classify;
mod dcor;
mod joint;
mod lemmas;
mod pns;

pub use classify::{acc, auc, ScoredLabels};
pub use dcor::distance_correlation;
pub(crate) use joint::increment;
pub use joint::JointTable;
pub use lemmas::{check_dpi, check_lemma1, check_lemma2, InequalityCheck, INEQUALITY_SLACK};
pub use pns::{pns, PnsQuery, PnsReport, PnsWeighting};
