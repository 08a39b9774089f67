//! Desk-scale dense-retrieval workbench.
//!
//! Implements soft query expansion (SoftQE): a query encoder is trained so
//! its embedding of a raw query approximates a teacher's embedding of the
//! LLM-expanded query, removing the expander from the inference path. The
//! crate provides every stage needed to study the method end to end:
//!
//! * [`corpus`] — seeded synthetic corpora with an oracle expander standing
//!   in for an LLM, plus adapters for external TSV/qrels/JSONL data;
//! * [`encoder`] — a small differentiable text encoder with hand-derived
//!   gradients and a role-tagged binary checkpoint format;
//! * [`bm25`] — an inverted index for hard-negative mining;
//! * [`objectives`] — contrastive, representation-distillation, composite
//!   cross-encoder KD, and score-only KD losses with exact gradients;
//! * [`trainer`] — the DPR / Q2D-teacher / student training lineages with
//!   frozen-passage handling and cached teacher targets;
//! * [`eval`] — exhaustive dense search, MRR/recall/nDCG, and paired
//!   t-tests.
//!
//! Everything stochastic runs on an explicitly specified SplitMix64
//! generator ([`rng`]), so a fixed seed reproduces results bit-identically.

pub mod bm25;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod objectives;
pub mod rng;
pub mod trainer;

pub use corpus::{
    generate_corpus, load_corpus_dir, load_external_corpus, oracle_expand, write_corpus, Corpus,
    CorpusConfig, ExpandedQuery, Split,
};
pub use encoder::{
    encode, encode_backward, init_params, load_params, save_params, Embedding, EncoderParams,
    GradientSet, RoleTag,
};
pub use error::{Error, Result};
pub use eval::{
    build_dense_index, evaluate, mrr_at_k, ndcg_at_k, paired_t_test, paired_t_test_one_sided,
    recall_at_k, search, DenseIndex, EvalCutoffs, MetricReport, QueryInputMode, Ranking,
    TTestResult,
};
pub use objectives::{
    alpha_at_epoch, contrastive_loss, cross_encoder_scores, distillation_loss, kd_composite_loss,
    score_only_kd_loss, softqe_loss, CandidateSet, CrossEncoderScorer, KlDirection, LossSchedule,
    LossWeights, ScorerMode,
};
pub use trainer::{
    load_run_dir, precompute_teacher_targets, save_run_dir, train_dpr, train_q2d_teacher,
    train_score_only_kd, train_softqe_student, CacheOutcome, Objective, OptimizerKind,
    TrainConfig, TrainedModel,
};
pub use bm25::{build_inverted_index, bm25_score, mine_hard_negatives, InvertedIndex};
