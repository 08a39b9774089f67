//! Loss functions over embeddings, with exact gradients.
//!
//! The contrastive objective scores a query against one positive and N
//! negative passages by inner product and takes the negative log softmax of
//! the positive. Distillation is mean-per-dimension squared error against a
//! frozen target representation. The two compose as
//! `alpha * L_dist + (1 - alpha) * L_cont`, and a third cross-encoder term
//! extends the composition to
//! `alpha * L_dist + (1 - alpha) * [beta * KL + (1 - beta) * L_cont]`.
//! Score-only distillation (the weaker baseline) regresses candidate scores
//! instead of representations.
//!
//! Every softmax runs through log-sum-exp stabilization. All gradients are
//! hand-derived and checked against central finite differences in the tests.

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, log_sum_exp, softmax};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl LossWeights {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta", beta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} ({v}) must lie in [0, 1]")));
            }
        }
        Ok(Self { alpha, beta })
    }
}

/// Step-function distillation weight: `alpha_warm` for the first
/// `warmup_epochs` epochs, `alpha_after` for the rest. `beta` is constant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossSchedule {
    pub per_epoch: Vec<LossWeights>,
    pub warmup_epochs: usize,
    pub alpha_warm: f64,
    pub alpha_after: f64,
}

impl LossSchedule {
    pub fn step(
        total_epochs: usize,
        warmup_epochs: usize,
        alpha_warm: f64,
        alpha_after: f64,
        beta: f64,
    ) -> Result<Self> {
        if warmup_epochs > total_epochs {
            return Err(Error::Config(format!(
                "warmup_epochs ({warmup_epochs}) exceeds total epochs ({total_epochs})"
            )));
        }
        let per_epoch = (0..total_epochs)
            .map(|e| {
                LossWeights::new(
                    if e < warmup_epochs {
                        alpha_warm
                    } else {
                        alpha_after
                    },
                    beta,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            per_epoch,
            warmup_epochs,
            alpha_warm,
            alpha_after,
        })
    }

    /// Constant-alpha schedule.
    pub fn constant(total_epochs: usize, alpha: f64, beta: f64) -> Result<Self> {
        Self::step(total_epochs, 0, alpha, alpha, beta)
    }

    pub fn epochs(&self) -> usize {
        self.per_epoch.len()
    }
}

/// Distillation weight for an epoch.
pub fn alpha_at_epoch(schedule: &LossSchedule, epoch: usize) -> Result<f64> {
    schedule
        .per_epoch
        .get(epoch)
        .map(|w| w.alpha)
        .ok_or_else(|| {
            Error::Input(format!(
                "epoch {epoch} out of range (schedule covers {})",
                schedule.epochs()
            ))
        })
}

/// Query, positive, and negative embeddings for one training example.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub query: Vec<f64>,
    pub positive: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

impl CandidateSet {
    fn check(&self) -> Result<()> {
        let d = self.query.len();
        if self.positive.len() != d || self.negatives.iter().any(|n| n.len() != d) {
            return Err(Error::Input(
                "candidate embeddings must share one dimension".into(),
            ));
        }
        Ok(())
    }

    /// Inner products of the query against [positive, negatives...].
    pub fn candidate_scores(&self) -> Vec<f64> {
        let mut scores = Vec::with_capacity(1 + self.negatives.len());
        scores.push(dot(&self.query, &self.positive));
        for n in &self.negatives {
            scores.push(dot(&self.query, n));
        }
        scores
    }

    fn scores(&self) -> Vec<f64> {
        self.candidate_scores()
    }
}

/// Gradients with respect to the members of a [`CandidateSet`].
#[derive(Debug, Clone)]
pub struct CandidateGrads {
    pub query: Vec<f64>,
    pub positive: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

impl CandidateGrads {
    fn zeros(cands: &CandidateSet) -> Self {
        let d = cands.query.len();
        Self {
            query: vec![0.0; d],
            positive: vec![0.0; d],
            negatives: vec![vec![0.0; d]; cands.negatives.len()],
        }
    }

    pub fn scale_all(&mut self, a: f64) {
        scale_grads(self, a);
    }

    pub fn add_scaled(&mut self, other: &CandidateGrads, a: f64) {
        axpy(&mut self.query, a, &other.query);
        axpy(&mut self.positive, a, &other.positive);
        for (mine, theirs) in self.negatives.iter_mut().zip(&other.negatives) {
            axpy(mine, a, theirs);
        }
    }
}

/// Chain gradients on candidate scores `s_i = q . p_i` back to the
/// embeddings.
pub(crate) fn grads_from_score_grads(cands: &CandidateSet, score_grads: &[f64]) -> CandidateGrads {
    let mut grads = CandidateGrads::zeros(cands);
    axpy(&mut grads.query, score_grads[0], &cands.positive);
    axpy(&mut grads.positive, score_grads[0], &cands.query);
    for (i, neg) in cands.negatives.iter().enumerate() {
        let g = score_grads[i + 1];
        axpy(&mut grads.query, g, neg);
        axpy(&mut grads.negatives[i], g, &cands.query);
    }
    grads
}

/// `-log( e^{q.p+} / (e^{q.p+} + sum_i e^{q.p-_i}) )` with exact gradients
/// for the query, positive, and each negative.
pub fn contrastive_loss(cands: &CandidateSet) -> Result<(f64, CandidateGrads)> {
    cands.check()?;
    let scores = cands.scores();
    let loss = log_sum_exp(&scores) - scores[0];
    let mut score_grads = softmax(&scores);
    score_grads[0] -= 1.0;
    Ok((loss, grads_from_score_grads(cands, &score_grads)))
}

/// Mean squared error against a constant target; gradient flows to the
/// student only.
pub fn distillation_loss(student: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if student.len() != target.len() {
        return Err(Error::Input(format!(
            "dimension mismatch: student {} vs target {}",
            student.len(),
            target.len()
        )));
    }
    let d = student.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; student.len()];
    for (i, (s, t)) in student.iter().zip(target).enumerate() {
        let diff = s - t;
        loss += diff * diff;
        grad[i] = 2.0 * diff / d;
    }
    Ok((loss / d, grad))
}

/// Loss value with its components, and gradients for every input embedding.
/// `query_grad` already includes both the contrastive and the distillation
/// paths (the student embedding and the candidate-set query are the same
/// vector).
#[derive(Debug, Clone)]
pub struct CompositeLoss {
    pub total: f64,
    pub contrastive: f64,
    pub distillation: f64,
    pub kl: f64,
    pub grads: CandidateGrads,
}

/// `alpha * L_dist(student, target) + (1 - alpha) * L_cont(cands)`.
pub fn softqe_loss(
    weights: LossWeights,
    cands: &CandidateSet,
    student: &[f64],
    target: &[f64],
) -> Result<CompositeLoss> {
    if student != cands.query.as_slice() {
        return Err(Error::Input(
            "student embedding must be the candidate-set query".into(),
        ));
    }
    let alpha = weights.alpha;
    let (l_cont, cont_grads) = contrastive_loss(cands)?;
    let (l_dist, dist_grad) = distillation_loss(student, target)?;

    let mut grads = cont_grads;
    scale_grads(&mut grads, 1.0 - alpha);
    axpy(&mut grads.query, alpha, &dist_grad);
    Ok(CompositeLoss {
        total: alpha * l_dist + (1.0 - alpha) * l_cont,
        contrastive: l_cont,
        distillation: l_dist,
        kl: 0.0,
        grads,
    })
}

fn scale_grads(grads: &mut CandidateGrads, a: f64) {
    for g in grads.query.iter_mut() {
        *g *= a;
    }
    for g in grads.positive.iter_mut() {
        *g *= a;
    }
    for neg in grads.negatives.iter_mut() {
        for g in neg.iter_mut() {
            *g *= a;
        }
    }
}

/// Which distribution sits in the first KL slot. The default distills the
/// cross-encoder's soft labels into the student.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlDirection {
    /// KL(cross-encoder || student)
    #[default]
    TargetToStudent,
    /// KL(student || cross-encoder)
    StudentToTarget,
}

/// Three-term composition:
/// `alpha * L_dist + (1 - alpha) * [beta * KL + (1 - beta) * L_cont]`.
///
/// `ce_probs` must align with the `[positive, negatives...]` candidate order.
pub fn kd_composite_loss(
    weights: LossWeights,
    cands: &CandidateSet,
    student: &[f64],
    target: &[f64],
    ce_probs: &[f64],
    direction: KlDirection,
) -> Result<CompositeLoss> {
    let n_cands = 1 + cands.negatives.len();
    if ce_probs.len() != n_cands {
        return Err(Error::Input(format!(
            "ce_probs has length {}, expected {n_cands}",
            ce_probs.len()
        )));
    }
    let mut out = softqe_loss(weights, cands, student, target)?;
    let beta = weights.beta;
    if beta == 0.0 {
        return Ok(out);
    }

    let scores = cands.scores();
    let student_probs = softmax(&scores);
    let (kl, kl_score_grads) = kl_and_score_grads(ce_probs, &student_probs, direction);
    let kl_grads = grads_from_score_grads(cands, &kl_score_grads);

    // out currently holds alpha*L_dist + (1-alpha)*L_cont with matching
    // gradients; reweight the contrastive share by (1-beta) and add the KL
    // share at (1-alpha)*beta.
    let alpha = weights.alpha;
    out.total = alpha * out.distillation
        + (1.0 - alpha) * (beta * kl + (1.0 - beta) * out.contrastive);
    out.kl = kl;

    // Contrastive gradients were scaled by (1-alpha); the distillation part
    // of the query gradient is untouched by beta, so rescale only the
    // contrastive contribution.
    let mut cont_only = contrastive_loss(cands)?.1;
    scale_grads(&mut cont_only, (1.0 - alpha) * beta);
    sub_grads(&mut out.grads, &cont_only);
    let mut kl_part = kl_grads;
    scale_grads(&mut kl_part, (1.0 - alpha) * beta);
    add_grads(&mut out.grads, &kl_part);
    Ok(out)
}

fn add_grads(into: &mut CandidateGrads, from: &CandidateGrads) {
    axpy(&mut into.query, 1.0, &from.query);
    axpy(&mut into.positive, 1.0, &from.positive);
    for (a, b) in into.negatives.iter_mut().zip(&from.negatives) {
        axpy(a, 1.0, b);
    }
}

fn sub_grads(into: &mut CandidateGrads, from: &CandidateGrads) {
    axpy(&mut into.query, -1.0, &from.query);
    axpy(&mut into.positive, -1.0, &from.positive);
    for (a, b) in into.negatives.iter_mut().zip(&from.negatives) {
        axpy(a, -1.0, b);
    }
}

/// KL value and its gradient with respect to the student logits (the
/// candidate scores). With p the cross-encoder distribution and q = softmax(s)
/// the student's: d KL(p||q) / ds_i = q_i - p_i, and
/// d KL(q||p) / ds_i = q_i (ln(q_i/p_i) - KL).
fn kl_and_score_grads(
    ce_probs: &[f64],
    student_probs: &[f64],
    direction: KlDirection,
) -> (f64, Vec<f64>) {
    match direction {
        KlDirection::TargetToStudent => {
            let mut kl = 0.0;
            for (&p, &q) in ce_probs.iter().zip(student_probs) {
                if p > 0.0 {
                    kl += p * (p / q).ln();
                }
            }
            let grads = student_probs
                .iter()
                .zip(ce_probs)
                .map(|(&q, &p)| q - p)
                .collect();
            (kl, grads)
        }
        KlDirection::StudentToTarget => {
            let mut kl = 0.0;
            let mut log_ratio = vec![0.0; ce_probs.len()];
            for (i, (&q, &p)) in student_probs.iter().zip(ce_probs).enumerate() {
                log_ratio[i] = (q / p).ln();
                kl += q * log_ratio[i];
            }
            let grads = student_probs
                .iter()
                .zip(&log_ratio)
                .map(|(&q, &lr)| q * (lr - kl))
                .collect();
            (kl, grads)
        }
    }
}

/// Desk-scale stand-in for a trained cross-encoder: a relevance oracle with
/// temperature and optional Gaussian noise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossEncoderScorer {
    pub mode: ScorerMode,
    pub temperature: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerMode {
    /// Softmax over (graded relevance + noise) / temperature; the noise
    /// stream is keyed by (seed, query_id) and drawn per candidate position.
    Oracle,
    /// Like `Oracle`, but each perturbation is keyed by (seed, query_id,
    /// doc_id) so a pair always scores identically regardless of candidate
    /// order — a stand-in for an imperfect learned scorer.
    LearnedStub,
}

impl Default for CrossEncoderScorer {
    fn default() -> Self {
        Self {
            mode: ScorerMode::Oracle,
            temperature: 1.0,
            noise_sd: 0.25,
            seed: 0,
        }
    }
}

/// Soft labels over candidates for one query. Deterministic per
/// (scorer.seed, query_id); sums to 1.
pub fn cross_encoder_scores(
    scorer: &CrossEncoderScorer,
    query_id: u32,
    candidates: &[u32],
    corpus: &Corpus,
) -> Result<Vec<f64>> {
    if scorer.temperature <= 0.0 {
        return Err(Error::Config(format!(
            "temperature ({}) must be positive",
            scorer.temperature
        )));
    }
    if scorer.noise_sd < 0.0 {
        return Err(Error::Config(format!(
            "noise_sd ({}) must be non-negative",
            scorer.noise_sd
        )));
    }
    if candidates.len() < 2 {
        return Err(Error::Input(format!(
            "need at least 2 candidates, got {}",
            candidates.len()
        )));
    }
    let rels = corpus.relevant_docs(query_id).ok_or_else(|| {
        Error::Lookup(format!("unknown query_id {query_id} in cross-encoder call"))
    })?;
    let mut rng = SplitMix64::for_stream(scorer.seed, query_id as u64);
    let logits: Vec<f64> = candidates
        .iter()
        .map(|doc_id| {
            let rel = rels.get(doc_id).copied().unwrap_or(0) as f64;
            let noise = if scorer.noise_sd == 0.0 {
                0.0
            } else {
                match scorer.mode {
                    ScorerMode::Oracle => rng.next_gaussian() * scorer.noise_sd,
                    ScorerMode::LearnedStub => {
                        let mut pair_rng = SplitMix64::for_stream(
                            scorer.seed ^ ((query_id as u64) << 20),
                            *doc_id as u64,
                        );
                        pair_rng.next_gaussian() * scorer.noise_sd
                    }
                }
            };
            (rel + noise) / scorer.temperature
        })
        .collect();
    Ok(softmax(&logits))
}

/// Mean squared error between student and teacher candidate scores, with the
/// gradient taken with respect to the student scores.
pub fn score_only_kd_loss(
    student_scores: &[f64],
    teacher_scores: &[f64],
) -> Result<(f64, Vec<f64>)> {
    if student_scores.is_empty() {
        return Err(Error::Input("score lists must be non-empty".into()));
    }
    if student_scores.len() != teacher_scores.len() {
        return Err(Error::Input(format!(
            "score length mismatch: student {} vs teacher {}",
            student_scores.len(),
            teacher_scores.len()
        )));
    }
    let n = student_scores.len() as f64;
    let mut loss = 0.0;
    let mut grads = vec![0.0; student_scores.len()];
    for (i, (s, t)) in student_scores.iter().zip(teacher_scores).enumerate() {
        let diff = s - t;
        loss += diff * diff;
        grads[i] = 2.0 * diff / n;
    }
    Ok((loss / n, grads))
}
