//! Analysis instruments: attribution statistics, ensemble decomposition of
//! a sum-to-one head, the Wilcoxon signed-rank test and rank aggregation.

mod attribution;
mod decomposition;
mod ranks;
mod wilcoxon;

pub use attribution::{attribution_stats, AttributionStats};
pub use decomposition::{decompose_ensemble, ensemble_terms, DecompositionRecord, EnsembleTerms};
pub use ranks::{midranks, rank_aggregate, RankTable};
pub use wilcoxon::{
    wilcoxon_signed_rank, wilcoxon_signed_rank_with, Alternative, WilcoxonMethod, WilcoxonResult,
};
