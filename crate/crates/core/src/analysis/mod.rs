//! Rank bounds for quantized depth-two networks and executable checks of
//! the structural statements behind layerwise learning.

mod lemmas;
mod rank;

pub use lemmas::{
    check_alignment, check_generative_correlations, check_parity_circuit, check_parity_gap, check_product_properties,
    check_pushforward, run_lemma_suite, LemmaScope, LemmaSuiteConfig, LemmaSuiteReport, LemmaSummary, Verdict, PARITY_XI,
};
pub use rank::{
    build_value_matrix, exact_rank, exact_rank_f64, exact_rank_i64, half_inputs, numeric_rank, rank_bound_check,
    QuantizedShallowNet, RankReport, SignMatrix, UnitRankRecord, MAX_HALF_DIM, MAX_RANK_B, MAX_RANK_WIDTH, SVD_RELATIVE_THRESHOLD,
};
