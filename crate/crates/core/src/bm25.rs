//! BM25 inverted index for hard-negative mining.
//!
//! Scoring follows the Lucene variant with non-negative idf:
//! `score(q, d) = sum_t idf(t) * tf / (tf + k1 * (1 - b + b * len/avg_len))`
//! with `idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))`, summed over the
//! distinct query terms.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub const DEFAULT_K1: f64 = 0.9;
pub const DEFAULT_B: f64 = 0.4;

#[derive(Debug, Clone)]
pub struct InvertedIndex {
    /// token -> postings sorted by doc_id.
    postings: BTreeMap<u32, Vec<(u32, u32)>>,
    doc_lengths: BTreeMap<u32, usize>,
    avg_doc_len: f64,
    num_docs: usize,
    k1: f64,
    b: f64,
}

/// Hard negatives for one query, with padding provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinedNegatives {
    pub doc_ids: Vec<u32>,
    /// How many entries were random non-relevant padding because fewer than
    /// the requested number of candidates had a positive score.
    pub padded: usize,
}

pub fn build_inverted_index(corpus: &Corpus, k1: f64, b: f64) -> Result<InvertedIndex> {
    if corpus.documents.is_empty() {
        return Err(Error::Config("cannot index an empty corpus".into()));
    }
    let mut postings: BTreeMap<u32, Vec<(u32, u32)>> = BTreeMap::new();
    let mut doc_lengths = BTreeMap::new();
    let mut total_len = 0usize;
    // documents are sorted by id, so postings come out sorted for free
    for (doc_id, tokens) in &corpus.documents {
        doc_lengths.insert(*doc_id, tokens.len());
        total_len += tokens.len();
        let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
        for &t in tokens {
            *counts.entry(t).or_insert(0) += 1;
        }
        for (t, tf) in counts {
            postings.entry(t).or_default().push((*doc_id, tf));
        }
    }
    let num_docs = doc_lengths.len();
    Ok(InvertedIndex {
        postings,
        avg_doc_len: total_len as f64 / num_docs as f64,
        num_docs,
        doc_lengths,
        k1,
        b,
    })
}

impl InvertedIndex {
    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn postings(&self, token: u32) -> Option<&[(u32, u32)]> {
        self.postings.get(&token).map(|v| v.as_slice())
    }

    pub fn doc_len(&self, doc_id: u32) -> Option<usize> {
        self.doc_lengths.get(&doc_id).copied()
    }

    fn idf(&self, df: usize) -> f64 {
        let n = self.num_docs as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_weight(&self, tf: u32, doc_len: usize) -> f64 {
        let tf = tf as f64;
        let len_norm = 1.0 - self.b + self.b * doc_len as f64 / self.avg_doc_len;
        tf / (tf + self.k1 * len_norm)
    }
}

/// BM25 score of one document against a query (distinct terms).
pub fn bm25_score(index: &InvertedIndex, query_tokens: &[u32], doc_id: u32) -> Result<f64> {
    let doc_len = index
        .doc_len(doc_id)
        .ok_or_else(|| Error::Lookup(format!("unknown doc_id {doc_id}")))?;
    let terms: BTreeSet<u32> = query_tokens.iter().copied().collect();
    let mut score = 0.0;
    for t in terms {
        let Some(postings) = index.postings(t) else {
            continue;
        };
        let Ok(pos) = postings.binary_search_by_key(&doc_id, |(d, _)| *d) else {
            continue;
        };
        let tf = postings[pos].1;
        score += index.idf(postings.len()) * index.term_weight(tf, doc_len);
    }
    Ok(score)
}

/// All documents with a positive score for the query, as (doc_id, score),
/// ordered by descending score with ascending doc_id on ties.
pub fn bm25_search_all(index: &InvertedIndex, query_tokens: &[u32]) -> Vec<(u32, f64)> {
    let terms: BTreeSet<u32> = query_tokens.iter().copied().collect();
    let mut scores: BTreeMap<u32, f64> = BTreeMap::new();
    for t in terms {
        let Some(postings) = index.postings(t) else {
            continue;
        };
        let idf = index.idf(postings.len());
        for &(doc_id, tf) in postings {
            let len = index.doc_len(doc_id).unwrap_or(0);
            *scores.entry(doc_id).or_insert(0.0) += idf * index.term_weight(tf, len);
        }
    }
    let mut ranked: Vec<(u32, f64)> = scores.into_iter().collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    ranked
}

/// Top-n BM25 candidates for a query, excluding every document judged
/// relevant (grade >= 1). When fewer than n candidates score above zero, the
/// remainder is padded with seeded uniform draws from the non-relevant pool
/// and reported in [`MinedNegatives::padded`].
pub fn mine_hard_negatives(
    index: &InvertedIndex,
    corpus: &Corpus,
    query_id: u32,
    n: usize,
    pad_seed: u64,
) -> Result<MinedNegatives> {
    if n == 0 {
        return Err(Error::Input("must mine at least one negative".into()));
    }
    let query_tokens = corpus.query_tokens(query_id)?;
    let relevant: BTreeSet<u32> = corpus
        .relevant_docs(query_id)
        .map(|m| m.keys().copied().collect())
        .unwrap_or_default();

    let mut doc_ids: Vec<u32> = bm25_search_all(index, query_tokens)
        .into_iter()
        .filter(|(doc_id, _)| !relevant.contains(doc_id))
        .map(|(doc_id, _)| doc_id)
        .take(n)
        .collect();

    let mut padded = 0;
    if doc_ids.len() < n {
        let chosen: BTreeSet<u32> = doc_ids.iter().copied().collect();
        let pool: Vec<u32> = corpus
            .documents
            .iter()
            .map(|(id, _)| *id)
            .filter(|id| !relevant.contains(id) && !chosen.contains(id))
            .collect();
        let mut rng = SplitMix64::for_stream(pad_seed, query_id as u64);
        let need = (n - doc_ids.len()).min(pool.len());
        for i in rng.sample_distinct(pool.len(), need) {
            doc_ids.push(pool[i]);
            padded += 1;
        }
    }
    Ok(MinedNegatives { doc_ids, padded })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Split;
    use std::collections::BTreeMap;

    fn corpus_from_docs(docs: Vec<(u32, Vec<u32>)>, query: Vec<u32>, gold: u32) -> Corpus {
        let mut qrels = BTreeMap::new();
        qrels.insert(0, BTreeMap::from([(gold, 2)]));
        Corpus::new(
            docs,
            vec![(0, query, Split::Train)],
            qrels,
            BTreeMap::new(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn single_doc_counts() {
        // doc "a a b" with a=0, b=1
        let corpus = corpus_from_docs(vec![(7, vec![0, 0, 1])], vec![0], 7);
        let index = build_inverted_index(&corpus, DEFAULT_K1, DEFAULT_B).unwrap();
        assert_eq!(index.postings(0), Some(&[(7u32, 2u32)][..]));
        assert_eq!(index.postings(1), Some(&[(7u32, 1u32)][..]));
        assert_eq!(index.avg_doc_len(), 3.0);
        assert_eq!(index.num_docs(), 1);
    }

    #[test]
    fn hand_computed_score() {
        // N=1, df=1, tf=1, len=avg_len, k1=0.9, b=0.4:
        // idf = ln(1 + 0.5/1.5), score = idf * 1/(1+0.9)
        let corpus = corpus_from_docs(vec![(0, vec![5, 6, 7])], vec![5], 0);
        let index = build_inverted_index(&corpus, 0.9, 0.4).unwrap();
        let score = bm25_score(&index, &[5], 0).unwrap();
        let expected = (1.0f64 + 0.5 / 1.5).ln() / 1.9;
        assert!((score - expected).abs() < 1e-12);
        assert!((score - 0.15141).abs() < 1e-5);
    }

    #[test]
    fn no_overlap_scores_zero() {
        let corpus = corpus_from_docs(vec![(0, vec![1, 2]), (1, vec![3, 4])], vec![1], 0);
        let index = build_inverted_index(&corpus, DEFAULT_K1, DEFAULT_B).unwrap();
        assert_eq!(bm25_score(&index, &[9, 10], 0).unwrap(), 0.0);
    }

    #[test]
    fn additive_over_disjoint_term_sets() {
        let corpus = corpus_from_docs(
            vec![(0, vec![1, 2, 3, 4]), (1, vec![1, 9, 9, 9])],
            vec![1],
            0,
        );
        let index = build_inverted_index(&corpus, DEFAULT_K1, DEFAULT_B).unwrap();
        let s1 = bm25_score(&index, &[1, 2], 0).unwrap();
        let s2 = bm25_score(&index, &[3, 4], 0).unwrap();
        let joint = bm25_score(&index, &[1, 2, 3, 4], 0).unwrap();
        assert!((joint - (s1 + s2)).abs() < 1e-12);
    }

    #[test]
    fn unknown_doc_is_a_lookup_error() {
        let corpus = corpus_from_docs(vec![(0, vec![1])], vec![1], 0);
        let index = build_inverted_index(&corpus, DEFAULT_K1, DEFAULT_B).unwrap();
        assert!(matches!(
            bm25_score(&index, &[1], 42),
            Err(Error::Lookup(_))
        ));
    }

    #[test]
    fn rebuild_is_identical() {
        let corpus = corpus_from_docs(
            vec![(0, vec![1, 2, 2]), (3, vec![2, 5]), (9, vec![5, 5, 1])],
            vec![1],
            0,
        );
        let a = build_inverted_index(&corpus, DEFAULT_K1, DEFAULT_B).unwrap();
        let b = build_inverted_index(&corpus, DEFAULT_K1, DEFAULT_B).unwrap();
        assert_eq!(a.postings, b.postings);
        assert_eq!(a.doc_lengths, b.doc_lengths);
    }

    #[test]
    fn tf_sums_match_raw_counts() {
        let corpus = corpus_from_docs(
            vec![(0, vec![1, 1, 2]), (1, vec![1, 3]), (2, vec![2, 2, 2, 1])],
            vec![1],
            0,
        );
        let index = build_inverted_index(&corpus, DEFAULT_K1, DEFAULT_B).unwrap();
        for token in [1u32, 2, 3] {
            let posted: u32 = index
                .postings(token)
                .unwrap_or(&[])
                .iter()
                .map(|(_, tf)| tf)
                .sum();
            let raw: u32 = corpus
                .documents
                .iter()
                .flat_map(|(_, toks)| toks.iter())
                .filter(|&&t| t == token)
                .count() as u32;
            assert_eq!(posted, raw, "token {token}");
        }
    }

    #[test]
    fn mining_excludes_relevant_and_prefers_overlap() {
        // doc 0 is gold; doc 1 shares all query terms; doc 2 shares none.
        let mut qrels = BTreeMap::new();
        qrels.insert(0, BTreeMap::from([(0u32, 2u32)]));
        let corpus = Corpus::new(
            vec![(0, vec![1, 2]), (1, vec![1, 2]), (2, vec![8, 9])],
            vec![(0, vec![1, 2], Split::Train)],
            qrels,
            BTreeMap::new(),
            None,
        )
        .unwrap();
        let index = build_inverted_index(&corpus, DEFAULT_K1, DEFAULT_B).unwrap();
        let mined = mine_hard_negatives(&index, &corpus, 0, 1, 1).unwrap();
        assert_eq!(mined.doc_ids, vec![1]);
        assert_eq!(mined.padded, 0);
    }

    #[test]
    fn mining_pads_when_candidates_run_out() {
        let mut qrels = BTreeMap::new();
        qrels.insert(0, BTreeMap::from([(0u32, 2u32)]));
        let corpus = Corpus::new(
            vec![(0, vec![1]), (1, vec![2]), (2, vec![3]), (3, vec![4])],
            vec![(0, vec![1], Split::Train)],
            qrels,
            BTreeMap::new(),
            None,
        )
        .unwrap();
        let index = build_inverted_index(&corpus, DEFAULT_K1, DEFAULT_B).unwrap();
        // No other doc shares a term, so all 2 must be padding.
        let mined = mine_hard_negatives(&index, &corpus, 0, 2, 11).unwrap();
        assert_eq!(mined.padded, 2);
        assert_eq!(mined.doc_ids.len(), 2);
        assert!(!mined.doc_ids.contains(&0), "gold doc mined as negative");
        let again = mine_hard_negatives(&index, &corpus, 0, 2, 11).unwrap();
        assert_eq!(mined.doc_ids, again.doc_ids, "padding must be seeded");
    }

    #[test]
    fn empty_corpus_is_a_config_error() {
        let corpus = Corpus {
            documents: vec![],
            queries: vec![],
            qrels: BTreeMap::new(),
            expansions: BTreeMap::new(),
            meta: None,
        };
        assert!(matches!(
            build_inverted_index(&corpus, DEFAULT_K1, DEFAULT_B),
            Err(Error::Config(_))
        ));
    }
}
