//! Exhaustive dense retrieval and ranking metrics.
//!
//! Search is an exact inner-product scan with a fixed composite order
//! (descending score, ascending doc_id) so rankings reproduce across
//! platforms. Metrics use the trec_eval conventions: linear-gain nDCG,
//! relevance >= 1 counts as relevant, and queries without any relevant
//! document are excluded from aggregation with a reported count.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::corpus::{Corpus, Split};
use crate::encoder::{encode, EncoderParams};
use crate::error::{Error, Result};
use crate::linalg::dot;

/// One embedding row per document, aligned with `doc_ids`.
#[derive(Debug, Clone)]
pub struct DenseIndex {
    pub doc_ids: Vec<u32>,
    pub embeddings: Vec<Vec<f64>>,
}

/// Descending-score ranking for one query; ties broken by ascending doc_id.
#[derive(Debug, Clone)]
pub struct Ranking {
    pub query_id: u32,
    pub ranked: Vec<(u32, f64)>,
}

pub fn build_dense_index(passage_params: &EncoderParams, corpus: &Corpus) -> Result<DenseIndex> {
    let mut doc_ids = Vec::with_capacity(corpus.documents.len());
    let mut embeddings = Vec::with_capacity(corpus.documents.len());
    for (doc_id, tokens) in &corpus.documents {
        let emb = encode(passage_params, tokens).map_err(|e| {
            Error::Input(format!("encoding doc {doc_id}: {e}"))
        })?;
        doc_ids.push(*doc_id);
        embeddings.push(emb.values);
    }
    Ok(DenseIndex {
        doc_ids,
        embeddings,
    })
}

/// Exact top-k by inner product.
pub fn search(index: &DenseIndex, query_emb: &[f64], k: usize) -> Result<Vec<(u32, f64)>> {
    if k == 0 || k > index.doc_ids.len() {
        return Err(Error::Input(format!(
            "k ({k}) must lie in [1, {}]",
            index.doc_ids.len()
        )));
    }
    let mut scored: Vec<(u32, f64)> = index
        .doc_ids
        .iter()
        .zip(&index.embeddings)
        .map(|(&id, emb)| (id, dot(query_emb, emb)))
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}

fn first_relevant_rank(ranking: &[(u32, f64)], qrels: &BTreeMap<u32, u32>, k: usize) -> Option<usize> {
    ranking
        .iter()
        .take(k)
        .position(|(doc_id, _)| qrels.get(doc_id).copied().unwrap_or(0) >= 1)
        .map(|pos| pos + 1)
}

/// Reciprocal rank of the first relevant document within the top k, else 0.
pub fn mrr_at_k(ranking: &[(u32, f64)], qrels: &BTreeMap<u32, u32>, k: usize) -> f64 {
    match first_relevant_rank(ranking, qrels, k) {
        Some(rank) => 1.0 / rank as f64,
        None => 0.0,
    }
}

/// Fraction of relevant documents retrieved in the top k. `None` when the
/// query has no relevant document (undefined).
pub fn recall_at_k(ranking: &[(u32, f64)], qrels: &BTreeMap<u32, u32>, k: usize) -> Option<f64> {
    let relevant: BTreeSet<u32> = qrels
        .iter()
        .filter(|(_, &rel)| rel >= 1)
        .map(|(&id, _)| id)
        .collect();
    if relevant.is_empty() {
        return None;
    }
    let hits = ranking
        .iter()
        .take(k)
        .filter(|(doc_id, _)| relevant.contains(doc_id))
        .count();
    Some(hits as f64 / relevant.len() as f64)
}

/// Linear-gain nDCG: `DCG = sum_{i<=k} rel_i / log2(i + 1)` normalized by the
/// ideal DCG over all judged-relevant documents. `None` when undefined.
pub fn ndcg_at_k(ranking: &[(u32, f64)], qrels: &BTreeMap<u32, u32>, k: usize) -> Option<f64> {
    let gains: Vec<f64> = qrels
        .values()
        .filter(|&&rel| rel >= 1)
        .map(|&rel| rel as f64)
        .collect();
    if gains.is_empty() {
        return None;
    }
    let dcg: f64 = ranking
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, (doc_id, _))| {
            let rel = qrels.get(doc_id).copied().unwrap_or(0) as f64;
            rel / ((i + 2) as f64).log2()
        })
        .sum();
    let mut ideal = gains;
    ideal.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, rel)| rel / ((i + 2) as f64).log2())
        .sum();
    Some(dcg / idcg)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub p: f64,
    /// Set when the differences have zero variance, where the t statistic
    /// degenerates.
    pub degenerate: bool,
}

/// Two-sided paired Student t-test.
pub fn paired_t_test(per_query_a: &[f64], per_query_b: &[f64]) -> Result<TTestResult> {
    if per_query_a.len() != per_query_b.len() {
        return Err(Error::Input(format!(
            "paired samples differ in length: {} vs {}",
            per_query_a.len(),
            per_query_b.len()
        )));
    }
    let n = per_query_a.len();
    if n < 2 {
        return Err(Error::Input("need at least 2 paired observations".into()));
    }
    let diffs: Vec<f64> = per_query_a
        .iter()
        .zip(per_query_b)
        .map(|(a, b)| a - b)
        .collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n as f64 - 1.0);
    if var == 0.0 {
        return Ok(if mean == 0.0 {
            TTestResult {
                t: 0.0,
                p: 1.0,
                degenerate: true,
            }
        } else {
            TTestResult {
                t: mean.signum() * f64::INFINITY,
                p: 0.0,
                degenerate: true,
            }
        });
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n as f64 - 1.0)
        .map_err(|e| Error::Input(format!("t distribution: {e}")))?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok(TTestResult {
        t,
        p,
        degenerate: false,
    })
}

/// One-sided p-value for the alternative `mean(a) > mean(b)`.
pub fn paired_t_test_one_sided(per_query_a: &[f64], per_query_b: &[f64]) -> Result<TTestResult> {
    let two = paired_t_test(per_query_a, per_query_b)?;
    if two.degenerate {
        let p = if two.t > 0.0 {
            0.0
        } else if two.t < 0.0 {
            1.0
        } else {
            0.5
        };
        return Ok(TTestResult { p, ..two });
    }
    let n = per_query_a.len();
    let dist = StudentsT::new(0.0, 1.0, n as f64 - 1.0)
        .map_err(|e| Error::Input(format!("t distribution: {e}")))?;
    Ok(TTestResult {
        t: two.t,
        p: 1.0 - dist.cdf(two.t),
        degenerate: false,
    })
}

/// Which text goes through the query encoder at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryInputMode {
    /// Raw query tokens.
    Q,
    /// Query tokens followed by the stored pseudo-document.
    QPlus,
}

impl std::str::FromStr for QueryInputMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "q" => Ok(QueryInputMode::Q),
            "q_plus" => Ok(QueryInputMode::QPlus),
            other => Err(format!("unknown query input mode '{other}' (q|q_plus)")),
        }
    }
}

/// Rank cutoffs for the metric suite.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalCutoffs {
    pub mrr_k: usize,
    pub recall_ks: Vec<usize>,
    pub ndcg_k: usize,
}

impl Default for EvalCutoffs {
    fn default() -> Self {
        Self {
            mrr_k: 10,
            recall_ks: vec![50, 1000],
            ndcg_k: 10,
        }
    }
}

/// Per-query and aggregate metric values plus identifying metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    /// metric name -> query_id -> value.
    pub per_query: BTreeMap<String, BTreeMap<u32, f64>>,
    /// metric name -> arithmetic mean over evaluated queries.
    pub aggregates: BTreeMap<String, f64>,
    /// Queries dropped from aggregation because they had no relevant docs.
    pub excluded_queries: usize,
    pub metadata: ReportMetadata,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub corpus_hash: String,
    pub query_encoder_checksum: String,
    pub passage_encoder_checksum: String,
    pub query_input_mode: QueryInputMode,
    pub cutoffs: EvalCutoffs,
    pub num_queries: usize,
}

/// Embed the eval split under the chosen input mode, search the dense index,
/// and compute the full metric suite.
pub fn evaluate(
    query_params: &EncoderParams,
    passage_params: &EncoderParams,
    corpus: &Corpus,
    mode: QueryInputMode,
    cutoffs: &EvalCutoffs,
) -> Result<MetricReport> {
    let index = build_dense_index(passage_params, corpus)?;
    let rankings = rank_eval_queries(query_params, &index, corpus, mode, cutoffs)?;
    metric_report_from_rankings(&rankings, corpus, mode, cutoffs, query_params, passage_params)
}

/// Rankings for every eval-split query, deep enough for the largest cutoff.
pub fn rank_eval_queries(
    query_params: &EncoderParams,
    index: &DenseIndex,
    corpus: &Corpus,
    mode: QueryInputMode,
    cutoffs: &EvalCutoffs,
) -> Result<Vec<Ranking>> {
    let max_k = cutoffs
        .recall_ks
        .iter()
        .copied()
        .chain([cutoffs.mrr_k, cutoffs.ndcg_k])
        .max()
        .unwrap_or(10)
        .min(index.doc_ids.len());
    let mut rankings = Vec::new();
    for qid in corpus.query_ids(Split::Eval) {
        let tokens = match mode {
            QueryInputMode::Q => corpus.query_tokens(qid)?.to_vec(),
            QueryInputMode::QPlus => corpus.expanded_query(qid)?.tokens,
        };
        let emb = encode(query_params, &tokens)?;
        rankings.push(Ranking {
            query_id: qid,
            ranked: search(index, &emb.values, max_k)?,
        });
    }
    Ok(rankings)
}

fn metric_report_from_rankings(
    rankings: &[Ranking],
    corpus: &Corpus,
    mode: QueryInputMode,
    cutoffs: &EvalCutoffs,
    query_params: &EncoderParams,
    passage_params: &EncoderParams,
) -> Result<MetricReport> {
    let mut per_query: BTreeMap<String, BTreeMap<u32, f64>> = BTreeMap::new();
    let mut excluded = 0usize;
    let empty = BTreeMap::new();
    for ranking in rankings {
        let qrels = corpus.relevant_docs(ranking.query_id).unwrap_or(&empty);
        let has_relevant = qrels.values().any(|&r| r >= 1);
        if !has_relevant {
            excluded += 1;
            continue;
        }
        let qid = ranking.query_id;
        per_query
            .entry(format!("mrr@{}", cutoffs.mrr_k))
            .or_default()
            .insert(qid, mrr_at_k(&ranking.ranked, qrels, cutoffs.mrr_k));
        for &k in &cutoffs.recall_ks {
            let k_eff = k.min(corpus.documents.len());
            per_query
                .entry(format!("recall@{k}"))
                .or_default()
                .insert(qid, recall_at_k(&ranking.ranked, qrels, k_eff).unwrap());
        }
        per_query
            .entry(format!("ndcg@{}", cutoffs.ndcg_k))
            .or_default()
            .insert(qid, ndcg_at_k(&ranking.ranked, qrels, cutoffs.ndcg_k).unwrap());
    }
    let aggregates = per_query
        .iter()
        .map(|(name, values)| {
            let mean = values.values().sum::<f64>() / values.len() as f64;
            (name.clone(), mean)
        })
        .collect();
    Ok(MetricReport {
        per_query,
        aggregates,
        excluded_queries: excluded,
        metadata: ReportMetadata {
            corpus_hash: corpus.content_hash(),
            query_encoder_checksum: query_params.checksum(),
            passage_encoder_checksum: passage_params.checksum(),
            query_input_mode: mode,
            cutoffs: cutoffs.clone(),
            num_queries: rankings.len(),
        },
    })
}

/// Six-column TREC run format: `query_id Q0 doc_id rank score run_tag`.
pub fn write_trec_run(rankings: &[Ranking], run_tag: &str, path: &Path) -> Result<()> {
    let mut out = String::new();
    for ranking in rankings {
        for (rank, (doc_id, score)) in ranking.ranked.iter().enumerate() {
            writeln!(
                out,
                "{} Q0 {} {} {} {}",
                ranking.query_id,
                doc_id,
                rank + 1,
                score,
                run_tag
            )
            .unwrap();
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{init_params, RoleTag};
    use crate::rng::SplitMix64;

    fn qrels(pairs: &[(u32, u32)]) -> BTreeMap<u32, u32> {
        pairs.iter().copied().collect()
    }

    fn ranking_of(ids: &[u32]) -> Vec<(u32, f64)> {
        ids.iter()
            .enumerate()
            .map(|(i, &id)| (id, 1.0 - i as f64 * 0.01))
            .collect()
    }

    #[test]
    fn mrr_cases() {
        let rels = qrels(&[(5, 1)]);
        assert_eq!(mrr_at_k(&ranking_of(&[5, 1, 2]), &rels, 10), 1.0);
        let third = mrr_at_k(&ranking_of(&[1, 2, 5]), &rels, 10);
        assert!((third - 1.0 / 3.0).abs() < 1e-12);
        // relevant at rank 11 is outside the cutoff
        let ids: Vec<u32> = (0..10).chain([5].iter().map(|&x| x + 100)).collect();
        let rels_far = qrels(&[(105, 2)]);
        assert_eq!(mrr_at_k(&ranking_of(&ids), &rels_far, 10), 0.0);
    }

    #[test]
    fn recall_cases() {
        let rels = qrels(&[(1, 1), (2, 2)]);
        assert_eq!(recall_at_k(&ranking_of(&[1, 2, 3]), &rels, 3), Some(1.0));
        assert_eq!(recall_at_k(&ranking_of(&[1, 3, 4]), &rels, 3), Some(0.5));
        assert_eq!(recall_at_k(&ranking_of(&[1]), &qrels(&[]), 3), None);
    }

    #[test]
    fn ndcg_hand_computed() {
        // relevant (grade 1) at ranks 1 and 3, k=3:
        // DCG = 1 + 1/log2(4) = 1.5, IDCG = 1 + 1/log2(3)
        let rels = qrels(&[(10, 1), (30, 1)]);
        let got = ndcg_at_k(&ranking_of(&[10, 20, 30]), &rels, 3).unwrap();
        let idcg = 1.0 + 1.0 / 3f64.log2();
        assert!((got - 1.5 / idcg).abs() < 1e-12);
        assert!((got - 0.91972).abs() < 1e-5);
    }

    #[test]
    fn ndcg_ideal_is_one_and_grade_permutation_invariant() {
        let rels = qrels(&[(1, 2), (2, 1), (3, 1)]);
        assert!((ndcg_at_k(&ranking_of(&[1, 2, 3, 4]), &rels, 4).unwrap() - 1.0).abs() < 1e-12);
        // swapping equal-grade docs leaves the value unchanged
        let a = ndcg_at_k(&ranking_of(&[1, 2, 3, 4]), &rels, 4).unwrap();
        let b = ndcg_at_k(&ranking_of(&[1, 3, 2, 4]), &rels, 4).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn t_test_identical_samples() {
        let a = [0.4, 0.6, 0.1, 0.9];
        let res = paired_t_test(&a, &a).unwrap();
        assert_eq!(res.t, 0.0);
        assert_eq!(res.p, 1.0);
        assert!(res.degenerate);
    }

    #[test]
    fn t_test_symmetric_differences() {
        let a = [1.0, 0.0, 1.0, 0.0];
        let b = [0.0, 1.0, 0.0, 1.0];
        let res = paired_t_test(&a, &b).unwrap();
        assert!(res.t.abs() < 1e-12);
        assert!((res.p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn t_test_constant_nonzero_difference_degenerates() {
        let a = [1.0, 2.0, 3.0];
        let b = [0.0, 1.0, 2.0];
        let res = paired_t_test(&a, &b).unwrap();
        assert!(res.degenerate);
        assert_eq!(res.p, 0.0);
        assert!(res.t.is_infinite() && res.t > 0.0);
    }

    #[test]
    fn t_test_known_value() {
        // d = (1, 2, 3, 4): mean 2.5, sd sqrt(5/3), t = 2.5/sqrt(5/12)
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [0.0; 4];
        let res = paired_t_test(&a, &b).unwrap();
        let expected_t = 2.5 / (5.0f64 / 12.0).sqrt();
        assert!((res.t - expected_t).abs() < 1e-12);
        assert!(res.p > 0.0 && res.p < 0.05);
    }

    #[test]
    fn t_test_input_errors() {
        assert!(paired_t_test(&[1.0], &[1.0]).is_err());
        assert!(paired_t_test(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn one_sided_is_half_of_two_sided_for_positive_t() {
        let a = [0.9, 0.8, 0.85, 0.95, 0.7];
        let b = [0.5, 0.6, 0.65, 0.8, 0.55];
        let two = paired_t_test(&a, &b).unwrap();
        let one = paired_t_test_one_sided(&a, &b).unwrap();
        assert!(two.t > 0.0);
        assert!((one.p - two.p / 2.0).abs() < 1e-12);
    }

    #[test]
    fn search_matches_full_sort_and_tie_rule() {
        let mut rng = SplitMix64::new(12);
        let index = DenseIndex {
            doc_ids: (0..40).collect(),
            embeddings: (0..40)
                .map(|_| (0..6).map(|_| rng.next_gaussian()).collect())
                .collect(),
        };
        let query: Vec<f64> = (0..6).map(|_| rng.next_gaussian()).collect();
        for k in [1usize, 5, 40] {
            let got = search(&index, &query, k).unwrap();
            let mut full: Vec<(u32, f64)> = index
                .doc_ids
                .iter()
                .zip(&index.embeddings)
                .map(|(&id, e)| (id, dot(&query, e)))
                .collect();
            full.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            assert_eq!(got, full[..k].to_vec());
        }
        // all-zero query: every score ties at 0, ranking is ascending doc_id
        let zeros = vec![0.0; 6];
        let got = search(&index, &zeros, 40).unwrap();
        let ids: Vec<u32> = got.iter().map(|(id, _)| *id).collect();
        assert_eq!(ids, (0..40).collect::<Vec<u32>>());
        assert!(got.iter().all(|(_, s)| *s == 0.0));

        assert!(search(&index, &zeros, 0).is_err());
        assert!(search(&index, &zeros, 41).is_err());
    }

    #[test]
    fn dense_index_rows_match_direct_encoding() {
        let corpus = crate::corpus::generate_corpus(&crate::corpus::CorpusConfig {
            num_topics: 2,
            vocab_size: 60,
            num_docs: 10,
            doc_len: 8,
            num_train_queries: 3,
            num_eval_queries: 2,
            query_keep_fraction: 0.7,
            expander_recovery_rate: 1.0,
            expander_noise_rate: 0.0,
            seed: 2,
        })
        .unwrap();
        let params = init_params(8, corpus.vocab_size(), 8, 8, 4, false, RoleTag::Passage).unwrap();
        let index = build_dense_index(&params, &corpus).unwrap();
        for (i, (doc_id, tokens)) in corpus.documents.iter().enumerate() {
            assert_eq!(index.doc_ids[i], *doc_id);
            assert_eq!(index.embeddings[i], encode(&params, tokens).unwrap().values);
        }
        let again = build_dense_index(&params, &corpus).unwrap();
        assert_eq!(index.embeddings, again.embeddings);
    }

    #[test]
    fn trec_run_file_has_six_columns() {
        let rankings = vec![Ranking {
            query_id: 3,
            ranked: vec![(7, 1.25), (2, 0.5)],
        }];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.trec");
        write_trec_run(&rankings, "tag", &path).unwrap();
        let content = std::fs::read_to_string(&path).unwrap();
        for line in content.lines() {
            let cols: Vec<&str> = line.split_whitespace().collect();
            assert_eq!(cols.len(), 6);
            assert_eq!(cols[1], "Q0");
            assert_eq!(cols[5], "tag");
        }
        assert_eq!(content.lines().count(), 2);
    }
}
