//! Training loops for the three model lineages.
//!
//! * DPR baseline: query and passage encoders trained jointly on
//!   (query, positive, BM25 hard negatives) triples with the contrastive
//!   objective.
//! * Q2D teacher: identical loop, but the query side consumes expanded
//!   queries (query followed by its pseudo-document).
//! * Student runs: the passage encoder is copied from the teacher
//!   (frozen by default) and the query encoder learns against precomputed
//!   teacher targets — full representations for the distillation objectives,
//!   scalar candidate scores for the score-only baseline.
//!
//! Teacher targets are computed once, offline, and cached to disk keyed by
//! the teacher checksum and the corpus base hash (documents + queries +
//! qrels). A corpus whose expansions were stripped still hits the cache, so
//! a student can train with the expander disabled.
//!
//! Batches accumulate gradients in deterministic item order; all randomness
//! (shuffles, negative padding, init) derives from the config seed, so a run
//! reproduces byte-identically.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write as IoWrite};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bm25::{build_inverted_index, mine_hard_negatives};
use crate::corpus::{Corpus, Split};
use crate::encoder::{
    encode, encode_backward_into, init_params, read_params, write_params, EncoderParams,
    GradientSet, RoleTag,
};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::objectives::{
    contrastive_loss, cross_encoder_scores, grads_from_score_grads, kd_composite_loss,
    score_only_kd_loss, softqe_loss, CandidateSet, CrossEncoderScorer, KlDirection, LossSchedule,
    LossWeights,
};
use crate::rng::SplitMix64;

const QUERY_INIT_STREAM: u64 = 10;
const PASSAGE_INIT_STREAM: u64 = 11;
const SHUFFLE_STREAM_BASE: u64 = 100;
const MINE_PAD_SALT: u64 = 0x4D49_4E45_5041_4444;
const RANDOM_NEG_SALT: u64 = 0x524E_4547_0000_0001;

const TARGET_CACHE_MAGIC: &[u8; 4] = b"SQTC";
const TARGET_CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Contrastive,
    Softqe,
    KdComposite,
    ScoreOnlyKd,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub negatives_per_query: usize,
    /// Extra uniformly drawn non-relevant negatives appended after the BM25
    /// hard negatives. Counteracts the positive-norm inflation that pure
    /// per-query hard negatives allow at small scale.
    #[serde(default)]
    pub random_negatives_per_query: usize,
    pub schedule: LossSchedule,
    pub freeze_passage_encoder: bool,
    pub objective: Objective,
    pub seed: u64,
    pub d_emb: usize,
    pub d_hidden: usize,
    pub d_out: usize,
    pub normalize_output: bool,
    pub bm25_k1: f64,
    pub bm25_b: f64,
    /// Global gradient-norm clip; values <= 0 disable clipping.
    pub grad_clip: f64,
    pub kl_direction: KlDirection,
    pub cross_encoder: CrossEncoderScorer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 6,
            batch_size: 32,
            learning_rate: 2e-3,
            optimizer: OptimizerKind::default(),
            negatives_per_query: 7,
            random_negatives_per_query: 0,
            schedule: LossSchedule::step(6, 3, 1.0, 0.2, 0.2).unwrap(),
            freeze_passage_encoder: true,
            objective: Objective::Contrastive,
            seed: 0,
            d_emb: 64,
            d_hidden: 64,
            d_out: 32,
            normalize_output: false,
            bm25_k1: crate::bm25::DEFAULT_K1,
            bm25_b: crate::bm25::DEFAULT_B,
            grad_clip: 5.0,
            kl_direction: KlDirection::default(),
            cross_encoder: CrossEncoderScorer::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        // lr = 0 is permitted as a diagnostic no-op run
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Config(format!(
                "learning_rate ({}) must be finite and non-negative",
                self.learning_rate
            )));
        }
        if self.schedule.epochs() != self.epochs {
            return Err(Error::Config(format!(
                "schedule covers {} epochs but config trains {}",
                self.schedule.epochs(),
                self.epochs
            )));
        }
        if self.d_emb == 0 || self.d_hidden == 0 || self.d_out == 0 {
            return Err(Error::Config("encoder dimensions must be >= 1".into()));
        }
        if self.objective == Objective::KdComposite && self.negatives_per_query == 0 {
            return Err(Error::Config(
                "kd_composite needs at least one negative (cross-encoder requires 2 candidates)"
                    .into(),
            ));
        }
        Ok(())
    }

    /// Seeds for the two encoder initializations, derived from the run seed.
    fn query_init_seed(&self) -> u64 {
        SplitMix64::for_stream(self.seed, QUERY_INIT_STREAM).next_u64()
    }

    fn passage_init_seed(&self) -> u64 {
        SplitMix64::for_stream(self.seed, PASSAGE_INIT_STREAM).next_u64()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLosses {
    pub l_cont: f64,
    pub l_dist: f64,
    pub l_kl: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub lineage: String,
    pub corpus_hash: String,
    pub corpus_base_hash: String,
    pub seed: u64,
    pub teacher_checksum: Option<String>,
    pub teacher_target_source: Option<String>,
    /// Queries whose negative pool needed random padding, and the total
    /// number of padded slots.
    pub queries_with_padded_negatives: usize,
    pub padded_negative_slots: usize,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub query_params: EncoderParams,
    pub passage_params: EncoderParams,
    pub loss_history: Vec<EpochLosses>,
    pub config: TrainConfig,
    pub provenance: Provenance,
}

/// How the teacher targets were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheOutcome {
    /// Cache hit with matching expansions.
    Hit,
    /// Cache hit for a corpus without expansions (expander disabled).
    HitOffline,
    /// Cache existed but did not match; recomputed from expansions.
    MismatchRecomputed,
    /// No cache file; computed from expansions (and written when a cache
    /// directory was given).
    Computed,
}

impl CacheOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            CacheOutcome::Hit => "cache_hit",
            CacheOutcome::HitOffline => "cache_hit_offline",
            CacheOutcome::MismatchRecomputed => "cache_mismatch_recomputed",
            CacheOutcome::Computed => "computed",
        }
    }
}

struct TrainItem {
    query_id: u32,
    input_tokens: Vec<u32>,
    positive: u32,
    negatives: Vec<u32>,
}

struct PreparedData {
    items: Vec<TrainItem>,
    queries_with_padding: usize,
    padded_slots: usize,
}

fn prepare_items(corpus: &Corpus, config: &TrainConfig, use_expanded: bool) -> Result<PreparedData> {
    let index = build_inverted_index(corpus, config.bm25_k1, config.bm25_b)?;
    let pad_seed = config.seed ^ MINE_PAD_SALT;
    let mut items = Vec::new();
    let mut queries_with_padding = 0;
    let mut padded_slots = 0;
    for qid in corpus.query_ids(Split::Train) {
        let input_tokens = if use_expanded {
            corpus
                .expanded_query(qid)
                .map_err(|_| {
                    Error::Integrity(format!("missing expansion for train query {qid}"))
                })?
                .tokens
        } else {
            corpus.query_tokens(qid)?.to_vec()
        };
        let positive = corpus.gold_doc(qid)?;
        let mut negatives = if config.negatives_per_query > 0 {
            let mined =
                mine_hard_negatives(&index, corpus, qid, config.negatives_per_query, pad_seed)?;
            if mined.padded > 0 {
                queries_with_padding += 1;
                padded_slots += mined.padded;
            }
            mined.doc_ids
        } else {
            Vec::new()
        };
        if config.random_negatives_per_query > 0 {
            let relevant: std::collections::BTreeSet<u32> = corpus
                .relevant_docs(qid)
                .map(|m| m.keys().copied().collect())
                .unwrap_or_default();
            let chosen: std::collections::BTreeSet<u32> = negatives.iter().copied().collect();
            let pool: Vec<u32> = corpus
                .documents
                .iter()
                .map(|(id, _)| *id)
                .filter(|id| !relevant.contains(id) && !chosen.contains(id))
                .collect();
            let mut rng = SplitMix64::for_stream(config.seed ^ RANDOM_NEG_SALT, qid as u64);
            let take = config.random_negatives_per_query.min(pool.len());
            for i in rng.sample_distinct(pool.len(), take) {
                negatives.push(pool[i]);
            }
        }
        items.push(TrainItem {
            query_id: qid,
            input_tokens,
            positive,
            negatives,
        });
    }
    if items.is_empty() {
        return Err(Error::Config("corpus has no train queries".into()));
    }
    Ok(PreparedData {
        items,
        queries_with_padding,
        padded_slots,
    })
}

/// Adam/SGD over a fixed list of tensors.
struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Optimizer {
    fn new(kind: OptimizerKind, lr: f64, tensor_sizes: &[usize]) -> Self {
        let zeros: Vec<Vec<f64>> = tensor_sizes.iter().map(|&n| vec![0.0; n]).collect();
        Self {
            kind,
            lr,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        self.t += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (pi, gi) in p.iter_mut().zip(*g) {
                        *pi -= self.lr * gi;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let bc1 = 1.0 - beta1.powi(self.t as i32);
                let bc2 = 1.0 - beta2.powi(self.t as i32);
                for ((p, g), (m, v)) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(self.m.iter_mut().zip(self.v.iter_mut()))
                {
                    for i in 0..p.len() {
                        let gi = g[i];
                        m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                        v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                        let m_hat = m[i] / bc1;
                        let v_hat = v[i] / bc2;
                        p[i] -= self.lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
    }
}

fn zero_grads(grads: &mut GradientSet) {
    for tensor in grads.tensors_mut() {
        tensor.fill(0.0);
    }
}

/// Scale gradients to a global norm of at most `clip`.
fn clip_grads(sets: &mut [&mut GradientSet], clip: f64) {
    if clip <= 0.0 {
        return;
    }
    let norm = sets
        .iter()
        .map(|g| g.squared_norm())
        .sum::<f64>()
        .sqrt();
    if norm > clip {
        let scale = clip / norm;
        for set in sets.iter_mut() {
            set.scale(scale);
        }
    }
}

/// Everything a training step needs to compute the loss for one item.
struct StepContext<'a> {
    corpus: &'a Corpus,
    weights: LossWeights,
    objective: Objective,
    kl_direction: KlDirection,
    scorer: CrossEncoderScorer,
    targets: Option<&'a BTreeMap<u32, Vec<f64>>>,
}

struct ItemLosses {
    l_cont: f64,
    l_dist: f64,
    l_kl: f64,
    total: f64,
}

/// Forward + backward for one item. Accumulates parameter gradients for the
/// query encoder and, when unfrozen, the passage encoder.
#[allow(clippy::too_many_arguments)]
fn train_item(
    ctx: &StepContext<'_>,
    item: &TrainItem,
    query_params: &EncoderParams,
    passage_params: &EncoderParams,
    frozen_passages: bool,
    passage_cache: Option<&BTreeMap<u32, Vec<f64>>>,
    query_grads: &mut GradientSet,
    passage_grads: &mut GradientSet,
) -> Result<ItemLosses> {
    let query_emb = encode(query_params, &item.input_tokens)?;
    let embed_passage = |doc_id: u32| -> Result<Vec<f64>> {
        if let Some(cache) = passage_cache {
            return Ok(cache[&doc_id].clone());
        }
        Ok(encode(passage_params, ctx.corpus.doc_tokens(doc_id)?)?.values)
    };
    let cands = CandidateSet {
        query: query_emb.values,
        positive: embed_passage(item.positive)?,
        negatives: item
            .negatives
            .iter()
            .map(|&d| embed_passage(d))
            .collect::<Result<Vec<_>>>()?,
    };

    let (losses, grads) = match ctx.objective {
        Objective::Contrastive => {
            let (l_cont, grads) = contrastive_loss(&cands)?;
            (
                ItemLosses {
                    l_cont,
                    l_dist: 0.0,
                    l_kl: 0.0,
                    total: l_cont,
                },
                grads,
            )
        }
        Objective::Softqe => {
            let target = lookup_target(ctx, item.query_id)?;
            let out = softqe_loss(ctx.weights, &cands, &cands.query, target)?;
            (
                ItemLosses {
                    l_cont: out.contrastive,
                    l_dist: out.distillation,
                    l_kl: 0.0,
                    total: out.total,
                },
                out.grads,
            )
        }
        Objective::KdComposite => {
            let target = lookup_target(ctx, item.query_id)?;
            let mut candidate_ids = Vec::with_capacity(1 + item.negatives.len());
            candidate_ids.push(item.positive);
            candidate_ids.extend_from_slice(&item.negatives);
            let ce_probs =
                cross_encoder_scores(&ctx.scorer, item.query_id, &candidate_ids, ctx.corpus)?;
            let out = kd_composite_loss(
                ctx.weights,
                &cands,
                &cands.query,
                target,
                &ce_probs,
                ctx.kl_direction,
            )?;
            (
                ItemLosses {
                    l_cont: out.contrastive,
                    l_dist: out.distillation,
                    l_kl: out.kl,
                    total: out.total,
                },
                out.grads,
            )
        }
        Objective::ScoreOnlyKd => {
            let target = lookup_target(ctx, item.query_id)?;
            let student_scores = cands.candidate_scores();
            let teacher_scores: Vec<f64> = std::iter::once(&cands.positive)
                .chain(cands.negatives.iter())
                .map(|p| dot(target, p))
                .collect();
            let (mse, score_grads) = score_only_kd_loss(&student_scores, &teacher_scores)?;
            let (l_cont, cont_grads) = contrastive_loss(&cands)?;
            let alpha = ctx.weights.alpha;
            let mut grads = grads_from_score_grads(&cands, &score_grads);
            grads.scale_all(alpha);
            grads.add_scaled(&cont_grads, 1.0 - alpha);
            (
                ItemLosses {
                    l_cont,
                    l_dist: mse,
                    l_kl: 0.0,
                    total: alpha * mse + (1.0 - alpha) * l_cont,
                },
                grads,
            )
        }
    };

    encode_backward_into(query_params, &item.input_tokens, &grads.query, query_grads)?;
    if !frozen_passages {
        encode_backward_into(
            passage_params,
            ctx.corpus.doc_tokens(item.positive)?,
            &grads.positive,
            passage_grads,
        )?;
        for (neg_id, neg_grad) in item.negatives.iter().zip(&grads.negatives) {
            encode_backward_into(
                passage_params,
                ctx.corpus.doc_tokens(*neg_id)?,
                neg_grad,
                passage_grads,
            )?;
        }
    }
    Ok(losses)
}

fn lookup_target<'a>(ctx: &StepContext<'a>, query_id: u32) -> Result<&'a [f64]> {
    ctx.targets
        .and_then(|t| t.get(&query_id))
        .map(|v| v.as_slice())
        .ok_or_else(|| Error::Integrity(format!("no teacher target for query {query_id}")))
}

struct LineageSpec<'a> {
    name: &'a str,
    query_role: RoleTag,
    use_expanded: bool,
    objective: Objective,
    frozen_passages: bool,
    initial_passage_params: Option<&'a EncoderParams>,
    targets: Option<BTreeMap<u32, Vec<f64>>>,
    teacher_checksum: Option<String>,
    target_source: Option<String>,
}

fn run_training(corpus: &Corpus, config: &TrainConfig, spec: LineageSpec<'_>) -> Result<TrainedModel> {
    config.validate()?;
    let data = prepare_items(corpus, config, spec.use_expanded)?;
    let vocab_size = corpus.vocab_size();

    let mut query_params = init_params(
        config.query_init_seed(),
        vocab_size,
        config.d_emb,
        config.d_hidden,
        config.d_out,
        config.normalize_output,
        spec.query_role,
    )?;
    let mut passage_params = match spec.initial_passage_params {
        Some(teacher_passages) => {
            if teacher_passages.vocab_size() != vocab_size {
                return Err(Error::Integrity(format!(
                    "teacher passage encoder covers vocab {} but corpus needs {}",
                    teacher_passages.vocab_size(),
                    vocab_size
                )));
            }
            teacher_passages.clone()
        }
        None => init_params(
            config.passage_init_seed(),
            vocab_size,
            config.d_emb,
            config.d_hidden,
            config.d_out,
            config.normalize_output,
            RoleTag::Passage,
        )?,
    };

    // With frozen passages the candidate embeddings never change; compute
    // them once.
    let passage_cache: Option<BTreeMap<u32, Vec<f64>>> = if spec.frozen_passages {
        let mut cache = BTreeMap::new();
        for item in &data.items {
            for &doc_id in std::iter::once(&item.positive).chain(&item.negatives) {
                if !cache.contains_key(&doc_id) {
                    let emb = encode(&passage_params, corpus.doc_tokens(doc_id)?)?;
                    cache.insert(doc_id, emb.values);
                }
            }
        }
        Some(cache)
    } else {
        None
    };

    let query_tensor_sizes: Vec<usize> = query_params.tensors().iter().map(|t| t.len()).collect();
    let passage_tensor_sizes: Vec<usize> =
        passage_params.tensors().iter().map(|t| t.len()).collect();
    let mut tensor_sizes = query_tensor_sizes;
    if !spec.frozen_passages {
        tensor_sizes.extend(passage_tensor_sizes);
    }
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate, &tensor_sizes);

    let mut query_grads = GradientSet::zeros_like(&query_params);
    let mut passage_grads = GradientSet::zeros_like(&passage_params);

    let scorer = CrossEncoderScorer {
        // decorrelate cross-encoder noise across run seeds while staying
        // deterministic per (config, seed)
        seed: config.cross_encoder.seed ^ config.seed,
        ..config.cross_encoder.clone()
    };

    let mut order: Vec<usize> = (0..data.items.len()).collect();
    let mut loss_history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let weights = config.schedule.per_epoch[epoch];
        let ctx = StepContext {
            corpus,
            weights,
            objective: spec.objective,
            kl_direction: config.kl_direction,
            scorer: scorer.clone(),
            targets: spec.targets.as_ref(),
        };
        let mut shuffle_rng =
            SplitMix64::for_stream(config.seed, SHUFFLE_STREAM_BASE + epoch as u64);
        shuffle_rng.shuffle(&mut order);

        let mut sums = EpochLosses {
            l_cont: 0.0,
            l_dist: 0.0,
            l_kl: 0.0,
            total: 0.0,
        };
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            zero_grads(&mut query_grads);
            zero_grads(&mut passage_grads);
            let mut batch_total = 0.0;
            for &item_idx in batch {
                let losses = train_item(
                    &ctx,
                    &data.items[item_idx],
                    &query_params,
                    &passage_params,
                    spec.frozen_passages,
                    passage_cache.as_ref(),
                    &mut query_grads,
                    &mut passage_grads,
                )?;
                sums.l_cont += losses.l_cont;
                sums.l_dist += losses.l_dist;
                sums.l_kl += losses.l_kl;
                sums.total += losses.total;
                batch_total += losses.total;
            }
            if !batch_total.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: batch_idx,
                    msg: format!(
                        "non-finite loss; grad norms: query {:.3e}, passage {:.3e}",
                        query_grads.squared_norm().sqrt(),
                        passage_grads.squared_norm().sqrt()
                    ),
                });
            }
            let inv = 1.0 / batch.len() as f64;
            query_grads.scale(inv);
            if spec.frozen_passages {
                clip_grads(&mut [&mut query_grads], config.grad_clip);
                optimizer.step(
                    &mut query_params.tensors_mut(),
                    &query_grads.tensors(),
                );
            } else {
                passage_grads.scale(inv);
                clip_grads(
                    &mut [&mut query_grads, &mut passage_grads],
                    config.grad_clip,
                );
                let mut params: Vec<&mut [f64]> = Vec::with_capacity(10);
                let mut grads: Vec<&[f64]> = Vec::with_capacity(10);
                // split borrows: collect query then passage tensors
                for p in query_params.tensors_mut() {
                    params.push(p);
                }
                for p in passage_params.tensors_mut() {
                    params.push(p);
                }
                for g in query_grads.tensors() {
                    grads.push(g);
                }
                for g in passage_grads.tensors() {
                    grads.push(g);
                }
                optimizer.step(&mut params, &grads);
            }
        }
        let n = data.items.len() as f64;
        loss_history.push(EpochLosses {
            l_cont: sums.l_cont / n,
            l_dist: sums.l_dist / n,
            l_kl: sums.l_kl / n,
            total: sums.total / n,
        });
        if !query_params.is_finite() || !passage_params.is_finite() {
            return Err(Error::Diverged {
                epoch,
                batch: 0,
                msg: "non-finite parameters after epoch".into(),
            });
        }
    }

    let mut config_echo = config.clone();
    config_echo.objective = spec.objective;
    Ok(TrainedModel {
        query_params,
        passage_params,
        loss_history,
        config: config_echo,
        provenance: Provenance {
            lineage: spec.name.to_string(),
            corpus_hash: corpus.content_hash(),
            corpus_base_hash: corpus.base_hash(),
            seed: config.seed,
            teacher_checksum: spec.teacher_checksum,
            teacher_target_source: spec.target_source,
            queries_with_padded_negatives: data.queries_with_padding,
            padded_negative_slots: data.padded_slots,
        },
    })
}

/// Contrastive dual-encoder baseline over raw queries.
pub fn train_dpr(corpus: &Corpus, config: &TrainConfig) -> Result<TrainedModel> {
    run_training(
        corpus,
        config,
        LineageSpec {
            name: "dpr",
            query_role: RoleTag::Query,
            use_expanded: false,
            objective: Objective::Contrastive,
            frozen_passages: false,
            initial_passage_params: None,
            targets: None,
            teacher_checksum: None,
            target_source: None,
        },
    )
}

/// Contrastive dual encoder whose query side consumes expanded queries.
pub fn train_q2d_teacher(corpus: &Corpus, config: &TrainConfig) -> Result<TrainedModel> {
    run_training(
        corpus,
        config,
        LineageSpec {
            name: "q2d",
            query_role: RoleTag::TeacherQuery,
            use_expanded: true,
            objective: Objective::Contrastive,
            frozen_passages: false,
            initial_passage_params: None,
            targets: None,
            teacher_checksum: None,
            target_source: None,
        },
    )
}

fn check_teacher_roles(teacher: &TrainedModel) -> Result<()> {
    if teacher.query_params.role_tag != RoleTag::TeacherQuery {
        return Err(Error::Integrity(format!(
            "teacher query encoder has role '{}', expected 'teacher_query'",
            teacher.query_params.role_tag
        )));
    }
    if teacher.passage_params.role_tag != RoleTag::Passage {
        return Err(Error::Integrity(format!(
            "teacher passage encoder has role '{}', expected 'passage'",
            teacher.passage_params.role_tag
        )));
    }
    Ok(())
}

fn check_student_dims(teacher: &TrainedModel, config: &TrainConfig) -> Result<()> {
    let t = &teacher.query_params;
    if t.d_emb() != config.d_emb || t.d_hidden() != config.d_hidden || t.d_out() != config.d_out {
        return Err(Error::Config(format!(
            "student dims ({}, {}, {}) must match teacher dims ({}, {}, {})",
            config.d_emb,
            config.d_hidden,
            config.d_out,
            t.d_emb(),
            t.d_hidden(),
            t.d_out()
        )));
    }
    Ok(())
}

/// Representation-distillation student: passage encoder copied from the
/// teacher (frozen by default), query encoder trained against cached teacher
/// targets under the scheduled objective.
pub fn train_softqe_student(
    corpus: &Corpus,
    teacher: &TrainedModel,
    config: &TrainConfig,
    cache_dir: Option<&Path>,
) -> Result<TrainedModel> {
    if !matches!(config.objective, Objective::Softqe | Objective::KdComposite) {
        return Err(Error::Config(format!(
            "softqe student requires objective softqe or kd_composite, got {:?}",
            config.objective
        )));
    }
    check_teacher_roles(teacher)?;
    check_student_dims(teacher, config)?;
    let (targets, outcome) = precompute_teacher_targets(teacher, corpus, cache_dir)?;
    let name = if config.objective == Objective::KdComposite {
        "softqe_kd"
    } else {
        "softqe"
    };
    run_training(
        corpus,
        config,
        LineageSpec {
            name,
            query_role: RoleTag::StudentQuery,
            use_expanded: false,
            objective: config.objective,
            frozen_passages: config.freeze_passage_encoder,
            initial_passage_params: Some(&teacher.passage_params),
            targets: Some(targets),
            teacher_checksum: Some(teacher.query_params.checksum()),
            target_source: Some(outcome.as_str().to_string()),
        },
    )
}

/// Score-only distillation baseline: the student regresses the teacher's
/// scalar candidate scores instead of its representation.
pub fn train_score_only_kd(
    corpus: &Corpus,
    teacher: &TrainedModel,
    config: &TrainConfig,
    cache_dir: Option<&Path>,
) -> Result<TrainedModel> {
    check_teacher_roles(teacher)?;
    check_student_dims(teacher, config)?;
    let (targets, outcome) = precompute_teacher_targets(teacher, corpus, cache_dir)?;
    run_training(
        corpus,
        config,
        LineageSpec {
            name: "score_only_kd",
            query_role: RoleTag::StudentQuery,
            use_expanded: false,
            objective: Objective::ScoreOnlyKd,
            frozen_passages: config.freeze_passage_encoder,
            initial_passage_params: Some(&teacher.passage_params),
            targets: Some(targets),
            teacher_checksum: Some(teacher.query_params.checksum()),
            target_source: Some(outcome.as_str().to_string()),
        },
    )
}

/// Teacher embeddings of every train query's expanded form, cached to disk.
///
/// The cache is keyed by (teacher checksum, corpus base hash). When the given
/// corpus carries expansions their hash must also match, otherwise the cache
/// is recomputed; when the corpus has no expansions a base-hash match is
/// accepted, which is what lets a student train with the expander disabled.
pub fn precompute_teacher_targets(
    teacher: &TrainedModel,
    corpus: &Corpus,
    cache_dir: Option<&Path>,
) -> Result<(BTreeMap<u32, Vec<f64>>, CacheOutcome)> {
    check_teacher_roles(teacher)?;
    let teacher_checksum = teacher.query_params.checksum();
    let base_hash = corpus.base_hash();
    let full_hash = corpus.content_hash();
    let has_expansions = !corpus.expansions.is_empty();

    let cache_path = cache_dir.map(|dir| {
        dir.join(format!(
            "targets-{}-{}.bin",
            &teacher_checksum[..16],
            &base_hash[..16]
        ))
    });

    let mut stale_cache = false;
    if let Some(path) = &cache_path {
        if path.exists() {
            match read_target_cache(path) {
                Ok(cache) if cache.teacher_checksum == teacher_checksum
                    && cache.base_hash == base_hash =>
                {
                    if !has_expansions {
                        return Ok((cache.targets, CacheOutcome::HitOffline));
                    }
                    if cache.full_hash == full_hash {
                        return Ok((cache.targets, CacheOutcome::Hit));
                    }
                    stale_cache = true;
                }
                Ok(_) => stale_cache = true,
                Err(_) => stale_cache = true,
            }
        }
    }

    // Recompute from expansions.
    let train_ids = corpus.query_ids(Split::Train);
    let mut targets = BTreeMap::new();
    for qid in train_ids {
        let expanded = corpus.expanded_query(qid).map_err(|_| {
            Error::Integrity(format!(
                "cannot compute teacher target for query {qid}: no expansion available \
                 (expander disabled and no matching cache)"
            ))
        })?;
        let emb = encode(&teacher.query_params, &expanded.tokens)?;
        targets.insert(qid, emb.values);
    }
    if let Some(path) = &cache_path {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        write_target_cache(
            path,
            &TargetCache {
                teacher_checksum,
                base_hash,
                full_hash,
                targets: targets.clone(),
            },
        )?;
    }
    let outcome = if stale_cache {
        CacheOutcome::MismatchRecomputed
    } else {
        CacheOutcome::Computed
    };
    Ok((targets, outcome))
}

struct TargetCache {
    teacher_checksum: String,
    base_hash: String,
    full_hash: String,
    targets: BTreeMap<u32, Vec<f64>>,
}

fn write_target_cache(path: &Path, cache: &TargetCache) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(TARGET_CACHE_MAGIC)?;
    w.write_all(&TARGET_CACHE_VERSION.to_le_bytes())?;
    for s in [&cache.teacher_checksum, &cache.base_hash, &cache.full_hash] {
        let bytes = s.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(bytes)?;
    }
    let d_out = cache
        .targets
        .values()
        .next()
        .map(|v| v.len())
        .unwrap_or(0) as u32;
    w.write_all(&d_out.to_le_bytes())?;
    w.write_all(&(cache.targets.len() as u32).to_le_bytes())?;
    for (qid, emb) in &cache.targets {
        w.write_all(&qid.to_le_bytes())?;
        for v in emb {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_target_cache(path: &Path) -> Result<TargetCache> {
    let file = fs::File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != TARGET_CACHE_MAGIC {
        return Err(Error::Serialization("bad target-cache magic".into()));
    }
    let mut u32_buf = [0u8; 4];
    r.read_exact(&mut u32_buf)?;
    if u32::from_le_bytes(u32_buf) != TARGET_CACHE_VERSION {
        return Err(Error::Serialization("target-cache version mismatch".into()));
    }
    let read_string = |r: &mut BufReader<fs::File>| -> Result<String> {
        let mut len_buf = [0u8; 4];
        r.read_exact(&mut len_buf)?;
        let len = u32::from_le_bytes(len_buf) as usize;
        if len > 1024 {
            return Err(Error::Serialization("implausible string length".into()));
        }
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)?;
        String::from_utf8(buf).map_err(|_| Error::Serialization("non-UTF-8 string".into()))
    };
    let teacher_checksum = read_string(&mut r)?;
    let base_hash = read_string(&mut r)?;
    let full_hash = read_string(&mut r)?;
    r.read_exact(&mut u32_buf)?;
    let d_out = u32::from_le_bytes(u32_buf) as usize;
    r.read_exact(&mut u32_buf)?;
    let count = u32::from_le_bytes(u32_buf) as usize;
    let mut targets = BTreeMap::new();
    for _ in 0..count {
        r.read_exact(&mut u32_buf)?;
        let qid = u32::from_le_bytes(u32_buf);
        let mut emb = vec![0.0; d_out];
        for v in emb.iter_mut() {
            let mut f_buf = [0u8; 8];
            r.read_exact(&mut f_buf)?;
            *v = f64::from_le_bytes(f_buf);
        }
        targets.insert(qid, emb);
    }
    Ok(TargetCache {
        teacher_checksum,
        base_hash,
        full_hash,
        targets,
    })
}

/// Write `config.json`, `model.ckpt` (query block then passage block),
/// `loss_history.csv`, and `provenance.json`.
pub fn save_run_dir(model: &TrainedModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join("config.json"),
        serde_json::to_string_pretty(&model.config)
            .map_err(|e| Error::Serialization(e.to_string()))?,
    )?;
    let ckpt = fs::File::create(dir.join("model.ckpt"))?;
    let mut w = BufWriter::new(ckpt);
    write_params(&model.query_params, &mut w)?;
    write_params(&model.passage_params, &mut w)?;
    w.flush()?;
    let mut csv = String::from("epoch,l_cont,l_dist,l_kl,total\n");
    for (epoch, row) in model.loss_history.iter().enumerate() {
        writeln!(
            csv,
            "{},{},{},{},{}",
            epoch, row.l_cont, row.l_dist, row.l_kl, row.total
        )
        .unwrap();
    }
    fs::write(dir.join("loss_history.csv"), csv)?;
    fs::write(
        dir.join("provenance.json"),
        serde_json::to_string_pretty(&model.provenance)
            .map_err(|e| Error::Serialization(e.to_string()))?,
    )?;
    Ok(())
}

/// Load a run directory written by [`save_run_dir`].
pub fn load_run_dir(dir: &Path) -> Result<TrainedModel> {
    let config: TrainConfig = serde_json::from_str(&fs::read_to_string(dir.join("config.json"))?)
        .map_err(|e| Error::Serialization(format!("config.json: {e}")))?;
    let provenance: Provenance =
        serde_json::from_str(&fs::read_to_string(dir.join("provenance.json"))?)
            .map_err(|e| Error::Serialization(format!("provenance.json: {e}")))?;
    let ckpt = fs::File::open(dir.join("model.ckpt"))?;
    let mut r = BufReader::new(ckpt);
    let query_params = read_params(&mut r)?;
    let passage_params = read_params(&mut r)?;
    let mut loss_history = Vec::new();
    for (idx, line) in fs::read_to_string(dir.join("loss_history.csv"))?
        .lines()
        .enumerate()
    {
        if idx == 0 {
            continue; // header
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Serialization(format!(
                "loss_history.csv line {}: expected 5 fields",
                idx + 1
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Serialization(format!("bad float '{s}' in loss_history.csv")))
        };
        loss_history.push(EpochLosses {
            l_cont: parse(fields[1])?,
            l_dist: parse(fields[2])?,
            l_kl: parse(fields[3])?,
            total: parse(fields[4])?,
        });
    }
    Ok(TrainedModel {
        query_params,
        passage_params,
        loss_history,
        config,
        provenance,
    })
}
