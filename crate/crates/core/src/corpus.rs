//! Synthetic retrieval corpora and external-format adapters.
//!
//! A generated corpus is a topic-structured token world: the low end of the
//! vocabulary is partitioned into per-topic pools of salient terms, the rest
//! is shared background. Each document draws a set of salient terms from its
//! topic pool plus background filler; each query is a lossy degradation of
//! its gold document (every salient term kept independently with
//! `query_keep_fraction`). The oracle expander plays the role of an LLM
//! pseudo-document generator: it recovers the gold document's missing salient
//! terms with `expander_recovery_rate` and hallucinates off-topic terms at
//! `expander_noise_rate`.
//!
//! All randomness flows through [`SplitMix64`](crate::rng::SplitMix64)
//! streams keyed by (seed, entity id), so generation is a pure function of
//! the config and reproduces bit-identically across platforms.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Hash bucket count for non-numeric external tokens.
const TOKEN_HASH_BUCKETS: u32 = 1 << 16;

/// Stream-id bases keeping document, query, and expansion draws independent.
const DOC_STREAM: u64 = 1 << 32;
const QUERY_STREAM: u64 = 2 << 32;
const EXPANSION_SEED_SALT: u64 = 0xE9A1_5EED_0F42_77C3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub num_topics: usize,
    pub vocab_size: u32,
    pub num_docs: usize,
    pub doc_len: usize,
    pub num_train_queries: usize,
    pub num_eval_queries: usize,
    /// Fraction of a gold document's salient terms kept in its query, in (0, 1].
    pub query_keep_fraction: f64,
    /// Probability that each missing salient term appears in the pseudo-document.
    pub expander_recovery_rate: f64,
    /// Per-salient-term probability of drawing an off-topic hallucinated term.
    pub expander_noise_rate: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            num_topics: 20,
            vocab_size: 2400,
            num_docs: 2000,
            doc_len: 32,
            num_train_queries: 500,
            num_eval_queries: 100,
            query_keep_fraction: 0.5,
            expander_recovery_rate: 0.9,
            expander_noise_rate: 0.35,
            seed: 42,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_topics == 0 {
            return Err(Error::Config("num_topics must be >= 1".into()));
        }
        if self.num_docs == 0 || self.doc_len == 0 {
            return Err(Error::Config("num_docs and doc_len must be >= 1".into()));
        }
        if self.num_train_queries == 0 || self.num_eval_queries == 0 {
            return Err(Error::Config(
                "num_train_queries and num_eval_queries must be >= 1".into(),
            ));
        }
        if self.num_docs < self.num_train_queries + self.num_eval_queries {
            return Err(Error::Config(format!(
                "num_docs ({}) must be >= num_train_queries + num_eval_queries ({})",
                self.num_docs,
                self.num_train_queries + self.num_eval_queries
            )));
        }
        if (self.vocab_size as usize) < self.num_topics * 10 {
            return Err(Error::Config(format!(
                "vocab_size ({}) must be >= num_topics * 10 ({})",
                self.vocab_size,
                self.num_topics * 10
            )));
        }
        if !(self.query_keep_fraction > 0.0 && self.query_keep_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "query_keep_fraction ({}) must lie in (0, 1]",
                self.query_keep_fraction
            )));
        }
        for (name, v) in [
            ("expander_recovery_rate", self.expander_recovery_rate),
            ("expander_noise_rate", self.expander_noise_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} ({v}) must lie in [0, 1]")));
            }
        }
        Ok(())
    }

    /// Size of each topic's salient-term pool.
    pub fn pool_size(&self) -> u32 {
        (self.vocab_size / 2) / self.num_topics as u32
    }

    /// Number of distinct salient terms drawn per document.
    pub fn salient_per_doc(&self) -> usize {
        ((self.doc_len / 2).max(1)).min(self.pool_size() as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Eval => write!(f, "eval"),
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "eval" => Ok(Split::Eval),
            other => Err(format!("unknown split '{other}' (expected train|eval)")),
        }
    }
}

/// Generator bookkeeping kept alongside a synthetic corpus so the oracle
/// expander knows which terms are salient and which topics exist. Absent for
/// corpora loaded from external files; excluded from corpus equality and
/// hashing.
#[derive(Debug, Clone)]
pub struct SyntheticMeta {
    pub num_topics: usize,
    pub pool_size: u32,
    pub vocab_size: u32,
    pub doc_topic: BTreeMap<u32, u32>,
    pub salient: BTreeMap<u32, BTreeSet<u32>>,
}

/// Documents, queries, relevance judgments, and oracle expansions.
///
/// Equality compares only the data fields, not generator metadata, so a
/// write/reload round trip yields an equal corpus.
#[derive(Debug, Clone)]
pub struct Corpus {
    /// `(doc_id, tokens)`, ascending doc_id.
    pub documents: Vec<(u32, Vec<u32>)>,
    /// `(query_id, tokens, split)`, ascending query_id.
    pub queries: Vec<(u32, Vec<u32>, Split)>,
    /// query_id -> doc_id -> graded relevance (>= 1).
    pub qrels: BTreeMap<u32, BTreeMap<u32, u32>>,
    /// query_id -> pseudo-document tokens. May be empty.
    pub expansions: BTreeMap<u32, Vec<u32>>,
    pub meta: Option<SyntheticMeta>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.documents == other.documents
            && self.queries == other.queries
            && self.qrels == other.qrels
            && self.expansions == other.expansions
    }
}

/// An original query with its appended pseudo-document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpandedQuery {
    pub query_id: u32,
    /// Query tokens followed by pseudo-document tokens.
    pub tokens: Vec<u32>,
    /// Index where the pseudo-document begins; `tokens[..boundary]` is the
    /// original query verbatim.
    pub boundary: usize,
}

impl ExpandedQuery {
    pub fn new(query_id: u32, query_tokens: &[u32], pseudo_tokens: &[u32]) -> Self {
        let mut tokens = Vec::with_capacity(query_tokens.len() + pseudo_tokens.len());
        tokens.extend_from_slice(query_tokens);
        tokens.extend_from_slice(pseudo_tokens);
        Self {
            query_id,
            tokens,
            boundary: query_tokens.len(),
        }
    }

    pub fn pseudo_tokens(&self) -> &[u32] {
        &self.tokens[self.boundary..]
    }
}

impl Corpus {
    /// Sorts by id, checks for duplicates, and enforces referential
    /// integrity: qrels and expansions must name known ids, qrels must be
    /// non-empty, and every query needs at least one relevant document.
    pub fn new(
        mut documents: Vec<(u32, Vec<u32>)>,
        mut queries: Vec<(u32, Vec<u32>, Split)>,
        qrels: BTreeMap<u32, BTreeMap<u32, u32>>,
        expansions: BTreeMap<u32, Vec<u32>>,
        meta: Option<SyntheticMeta>,
    ) -> Result<Self> {
        documents.sort_by_key(|(id, _)| *id);
        queries.sort_by_key(|(id, _, _)| *id);
        if documents.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Integrity("duplicate doc_id".into()));
        }
        if queries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Integrity("duplicate query_id".into()));
        }
        let corpus = Self {
            documents,
            queries,
            qrels,
            expansions,
            meta,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    fn validate(&self) -> Result<()> {
        if self.qrels.is_empty() || self.qrels.values().all(|m| m.is_empty()) {
            return Err(Error::Integrity("no relevance judgments".into()));
        }
        let doc_ids: BTreeSet<u32> = self.documents.iter().map(|(id, _)| *id).collect();
        let query_ids: BTreeSet<u32> = self.queries.iter().map(|(id, _, _)| *id).collect();
        for (qid, docs) in &self.qrels {
            if !query_ids.contains(qid) {
                return Err(Error::Integrity(format!(
                    "qrel references unknown query_id {qid}"
                )));
            }
            for did in docs.keys() {
                if !doc_ids.contains(did) {
                    return Err(Error::Integrity(format!(
                        "qrel references unknown doc_id {did}"
                    )));
                }
            }
        }
        for (qid, _, _) in &self.queries {
            let has_relevant = self
                .qrels
                .get(qid)
                .map(|m| m.values().any(|&r| r >= 1))
                .unwrap_or(false);
            if !has_relevant {
                return Err(Error::Integrity(format!(
                    "query {qid} has no relevant document"
                )));
            }
        }
        for qid in self.expansions.keys() {
            if !query_ids.contains(qid) {
                return Err(Error::Integrity(format!(
                    "expansion references unknown query_id {qid}"
                )));
            }
        }
        Ok(())
    }

    pub fn doc_tokens(&self, doc_id: u32) -> Result<&[u32]> {
        self.documents
            .binary_search_by_key(&doc_id, |(id, _)| *id)
            .map(|i| self.documents[i].1.as_slice())
            .map_err(|_| Error::Lookup(format!("unknown doc_id {doc_id}")))
    }

    pub fn query_tokens(&self, query_id: u32) -> Result<&[u32]> {
        self.queries
            .binary_search_by_key(&query_id, |(id, _, _)| *id)
            .map(|i| self.queries[i].1.as_slice())
            .map_err(|_| Error::Lookup(format!("unknown query_id {query_id}")))
    }

    pub fn query_split(&self, query_id: u32) -> Result<Split> {
        self.queries
            .binary_search_by_key(&query_id, |(id, _, _)| *id)
            .map(|i| self.queries[i].2)
            .map_err(|_| Error::Lookup(format!("unknown query_id {query_id}")))
    }

    pub fn query_ids(&self, split: Split) -> Vec<u32> {
        self.queries
            .iter()
            .filter(|(_, _, s)| *s == split)
            .map(|(id, _, _)| *id)
            .collect()
    }

    pub fn relevant_docs(&self, query_id: u32) -> Option<&BTreeMap<u32, u32>> {
        self.qrels.get(&query_id)
    }

    /// The query's gold document: highest relevance grade, ties broken by
    /// ascending doc_id.
    pub fn gold_doc(&self, query_id: u32) -> Result<u32> {
        let rels = self
            .qrels
            .get(&query_id)
            .ok_or_else(|| Error::Lookup(format!("unknown query_id {query_id}")))?;
        rels.iter()
            .max_by_key(|(did, rel)| (**rel, std::cmp::Reverse(**did)))
            .map(|(did, _)| *did)
            .ok_or_else(|| Error::Integrity(format!("query {query_id} has no relevant document")))
    }

    /// Query tokens followed by the stored pseudo-document tokens.
    pub fn expanded_query(&self, query_id: u32) -> Result<ExpandedQuery> {
        let query = self.query_tokens(query_id)?;
        let pseudo = self
            .expansions
            .get(&query_id)
            .ok_or_else(|| Error::Integrity(format!("no expansion stored for query {query_id}")))?;
        Ok(ExpandedQuery::new(query_id, query, pseudo))
    }

    pub fn max_token_id(&self) -> u32 {
        let doc_max = self
            .documents
            .iter()
            .flat_map(|(_, t)| t.iter())
            .copied()
            .max()
            .unwrap_or(0);
        let query_max = self
            .queries
            .iter()
            .flat_map(|(_, t, _)| t.iter())
            .copied()
            .max()
            .unwrap_or(0);
        let exp_max = self
            .expansions
            .values()
            .flat_map(|t| t.iter())
            .copied()
            .max()
            .unwrap_or(0);
        doc_max.max(query_max).max(exp_max)
    }

    /// Smallest vocabulary covering every token in the corpus.
    pub fn vocab_size(&self) -> u32 {
        self.max_token_id() + 1
    }

    /// SHA-256 over the canonical file bytes (documents, queries, qrels,
    /// expansions), hex encoded.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.documents_bytes());
        hasher.update(self.queries_bytes());
        hasher.update(self.qrels_bytes());
        hasher.update(self.expansions_bytes());
        hex_digest(hasher)
    }

    /// Like [`Corpus::content_hash`] but excluding expansions. Identifies the
    /// retrieval substrate that teacher-target caches are keyed against, so
    /// a cache stays valid when expansions are stripped for offline runs.
    pub fn base_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.documents_bytes());
        hasher.update(self.queries_bytes());
        hasher.update(self.qrels_bytes());
        hex_digest(hasher)
    }

    /// A copy with the expansions map emptied, as used when demonstrating
    /// expander-free training from cached teacher targets.
    pub fn without_expansions(&self) -> Corpus {
        let mut stripped = self.clone();
        stripped.expansions.clear();
        stripped
    }

    pub fn documents_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for (id, tokens) in &self.documents {
            writeln!(out, "{}\t{}", id, join_tokens(tokens)).unwrap();
        }
        out
    }

    pub fn queries_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for (id, tokens, split) in &self.queries {
            writeln!(out, "{}\t{}\t{}", id, join_tokens(tokens), split).unwrap();
        }
        out
    }

    pub fn qrels_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for (qid, docs) in &self.qrels {
            for (did, rel) in docs {
                writeln!(out, "{qid} 0 {did} {rel}").unwrap();
            }
        }
        out
    }

    pub fn expansions_bytes(&self) -> Vec<u8> {
        #[derive(Serialize)]
        struct Line<'a> {
            query_id: u32,
            pseudo_doc: &'a str,
        }
        let mut out = Vec::new();
        for (qid, tokens) in &self.expansions {
            let line = Line {
                query_id: *qid,
                pseudo_doc: &join_tokens(tokens),
            };
            writeln!(out, "{}", serde_json::to_string(&line).unwrap()).unwrap();
        }
        out
    }
}

fn join_tokens(tokens: &[u32]) -> String {
    tokens
        .iter()
        .map(|t| t.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn hex_digest(hasher: Sha256) -> String {
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Generate a seeded synthetic corpus. Pure function of the config.
pub fn generate_corpus(config: &CorpusConfig) -> Result<Corpus> {
    config.validate()?;
    let pool = config.pool_size();
    let salient_count = config.salient_per_doc();
    let salient_region = config.num_topics as u32 * pool;

    let mut documents = Vec::with_capacity(config.num_docs);
    let mut doc_topic = BTreeMap::new();
    let mut salient_sets: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    for d in 0..config.num_docs {
        let doc_id = d as u32;
        let topic = (d % config.num_topics) as u32;
        let mut rng = SplitMix64::for_stream(config.seed, DOC_STREAM + d as u64);
        let salient: BTreeSet<u32> = rng
            .sample_distinct(pool as usize, salient_count)
            .into_iter()
            .map(|i| topic * pool + i as u32)
            .collect();
        let mut tokens: Vec<u32> = salient.iter().copied().collect();
        for _ in salient_count..config.doc_len {
            let background =
                salient_region + rng.next_below((config.vocab_size - salient_region) as u64) as u32;
            tokens.push(background);
        }
        rng.shuffle(&mut tokens);
        documents.push((doc_id, tokens));
        doc_topic.insert(doc_id, topic);
        salient_sets.insert(doc_id, salient);
    }

    let num_queries = config.num_train_queries + config.num_eval_queries;
    let mut queries = Vec::with_capacity(num_queries);
    let mut qrels: BTreeMap<u32, BTreeMap<u32, u32>> = BTreeMap::new();
    for q in 0..num_queries {
        let query_id = q as u32;
        let gold_id = q as u32; // distinct gold document per query
        let gold_salient = &salient_sets[&gold_id];
        let mut rng = SplitMix64::for_stream(config.seed, QUERY_STREAM + q as u64);
        let mut kept: Vec<u32> = gold_salient
            .iter()
            .copied()
            .filter(|_| rng.next_bool(config.query_keep_fraction))
            .collect();
        if kept.is_empty() {
            // A query must have at least one token; fall back to one salient
            // term drawn uniformly.
            let pick = rng.next_below(gold_salient.len() as u64) as usize;
            kept.push(*gold_salient.iter().nth(pick).unwrap());
        }
        rng.shuffle(&mut kept);
        let split = if q < config.num_train_queries {
            Split::Train
        } else {
            Split::Eval
        };
        queries.push((query_id, kept, split));

        let mut rels = BTreeMap::new();
        rels.insert(gold_id, 2);
        let gold_topic = doc_topic[&gold_id];
        for (doc_id, topic) in &doc_topic {
            if *doc_id == gold_id || *topic != gold_topic {
                continue;
            }
            let shared = gold_salient.intersection(&salient_sets[doc_id]).count();
            if 2 * shared >= gold_salient.len() {
                rels.insert(*doc_id, 1);
            }
        }
        qrels.insert(query_id, rels);
    }

    let meta = SyntheticMeta {
        num_topics: config.num_topics,
        pool_size: pool,
        vocab_size: config.vocab_size,
        doc_topic,
        salient: salient_sets,
    };

    let mut corpus = Corpus::new(documents, queries, qrels, BTreeMap::new(), Some(meta))?;

    let expansion_seed = config.seed ^ EXPANSION_SEED_SALT;
    let query_ids: Vec<u32> = corpus.queries.iter().map(|(id, _, _)| *id).collect();
    for qid in query_ids {
        let expanded = oracle_expand(
            qid,
            &corpus,
            config.expander_recovery_rate,
            config.expander_noise_rate,
            expansion_seed,
        )?;
        corpus
            .expansions
            .insert(qid, expanded.pseudo_tokens().to_vec());
    }
    Ok(corpus)
}

/// Simulate an LLM expansion of one query.
///
/// Each gold-document salient term missing from the query enters the
/// pseudo-document independently with `recovery_rate`. Hallucination is
/// modeled by one Bernoulli(`noise_rate`) trial per salient term, each
/// success drawing a term from a different topic's pool (or, for corpora
/// without generator metadata, from a different document). Deterministic per
/// `(seed, query_id)`.
pub fn oracle_expand(
    query_id: u32,
    corpus: &Corpus,
    recovery_rate: f64,
    noise_rate: f64,
    seed: u64,
) -> Result<ExpandedQuery> {
    for (name, v) in [("recovery_rate", recovery_rate), ("noise_rate", noise_rate)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Input(format!("{name} ({v}) must lie in [0, 1]")));
        }
    }
    let query = corpus.query_tokens(query_id)?;
    let gold_id = corpus.gold_doc(query_id)?;
    let salient: BTreeSet<u32> = match &corpus.meta {
        Some(meta) => meta.salient[&gold_id].clone(),
        None => corpus.doc_tokens(gold_id)?.iter().copied().collect(),
    };
    let query_set: BTreeSet<u32> = query.iter().copied().collect();

    let mut rng = SplitMix64::for_stream(seed, query_id as u64);
    let mut pseudo: Vec<u32> = salient
        .difference(&query_set)
        .copied()
        .filter(|_| rng.next_bool(recovery_rate))
        .collect();

    // One hallucinated source per query: a wrong topic (synthetic corpora)
    // or another document (external corpora). Coherent off-topic noise is
    // what makes expanded queries hostile to encoders that never trained on
    // them.
    enum NoiseSource {
        Pool { lo: u32, size: u32 },
        Doc(usize),
    }
    let source = match &corpus.meta {
        Some(meta) => {
            let gold_topic = meta.doc_topic[&gold_id] as u64;
            if meta.num_topics > 1 {
                let mut other = rng.next_below(meta.num_topics as u64 - 1);
                if other >= gold_topic {
                    other += 1;
                }
                NoiseSource::Pool {
                    lo: other as u32 * meta.pool_size,
                    size: meta.pool_size,
                }
            } else {
                // single topic: everything above the pool is background
                NoiseSource::Pool {
                    lo: meta.pool_size,
                    size: meta.vocab_size - meta.pool_size,
                }
            }
        }
        None => {
            let n = corpus.documents.len() as u64;
            let gold_pos = corpus
                .documents
                .binary_search_by_key(&gold_id, |(id, _)| *id)
                .unwrap() as u64;
            let mut pick = rng.next_below(n.max(2) - 1);
            if pick >= gold_pos {
                pick += 1;
            }
            NoiseSource::Doc(pick.min(n - 1) as usize)
        }
    };
    for _ in 0..salient.len() {
        if !rng.next_bool(noise_rate) {
            continue;
        }
        let noise_token = match &source {
            NoiseSource::Pool { lo, size } => lo + rng.next_below(*size as u64) as u32,
            NoiseSource::Doc(pos) => {
                let (_, tokens) = &corpus.documents[*pos];
                tokens[rng.next_below(tokens.len() as u64) as usize]
            }
        };
        pseudo.push(noise_token);
    }
    rng.shuffle(&mut pseudo);
    Ok(ExpandedQuery::new(query_id, query, &pseudo))
}

/// Write a corpus in the on-disk exchange formats plus `corpus_hash.txt`.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("documents.tsv"), corpus.documents_bytes())?;
    fs::write(dir.join("queries.tsv"), corpus.queries_bytes())?;
    fs::write(dir.join("qrels.txt"), corpus.qrels_bytes())?;
    fs::write(dir.join("expansions.jsonl"), corpus.expansions_bytes())?;
    fs::write(
        dir.join("corpus_hash.txt"),
        format!("{}\n", corpus.content_hash()),
    )?;
    Ok(())
}

/// Load a corpus directory written by [`write_corpus`].
pub fn load_corpus_dir(dir: &Path) -> Result<Corpus> {
    let expansions = dir.join("expansions.jsonl");
    load_external_corpus(
        &dir.join("documents.tsv"),
        &dir.join("queries.tsv"),
        &dir.join("qrels.txt"),
        if expansions.exists() {
            Some(expansions.as_path())
        } else {
            None
        },
    )
}

/// Map a whitespace token to an id: decimal literals pass through, anything
/// else is FNV-1a hashed into a fixed bucket space.
pub fn token_id_for_word(word: &str) -> u32 {
    if let Ok(id) = word.parse::<u32>() {
        return id;
    }
    let mut h: u32 = 0x811c_9dc5;
    for b in word.as_bytes() {
        h ^= u32::from(*b);
        h = h.wrapping_mul(0x0100_0193);
    }
    h % TOKEN_HASH_BUCKETS
}

fn parse_id(raw: &str, path: &Path, line: usize, what: &str) -> Result<u32> {
    raw.parse::<u32>().map_err(|_| Error::Parse {
        path: path.display().to_string(),
        line,
        msg: format!("{what} '{raw}' is not an unsigned integer"),
    })
}

fn tokenize_text(text: &str) -> Vec<u32> {
    text.split_whitespace().map(token_id_for_word).collect()
}

/// Adapter for externally produced retrieval data.
///
/// Formats: documents `doc_id<TAB>tokens`; queries `query_id<TAB>tokens<TAB>split`;
/// qrels in TREC format `query_id 0 doc_id relevance` (relevance-0 lines are
/// judged-nonrelevant and dropped); expansions as JSON lines with `query_id`
/// and `pseudo_doc` fields.
pub fn load_external_corpus(
    doc_path: &Path,
    query_path: &Path,
    qrel_path: &Path,
    expansion_path: Option<&Path>,
) -> Result<Corpus> {
    let mut documents = Vec::new();
    for (idx, raw) in fs::read_to_string(doc_path)?.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut parts = raw.splitn(2, '\t');
        let id = parse_id(parts.next().unwrap_or(""), doc_path, line, "doc_id")?;
        let text = parts.next().ok_or_else(|| Error::Parse {
            path: doc_path.display().to_string(),
            line,
            msg: "expected doc_id<TAB>tokens".into(),
        })?;
        documents.push((id, tokenize_text(text)));
    }

    let mut queries = Vec::new();
    for (idx, raw) in fs::read_to_string(query_path)?.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: query_path.display().to_string(),
                line,
                msg: format!(
                    "expected query_id<TAB>tokens<TAB>split, found {} fields",
                    fields.len()
                ),
            });
        }
        let id = parse_id(fields[0], query_path, line, "query_id")?;
        let split: Split = fields[2].parse().map_err(|msg| Error::Parse {
            path: query_path.display().to_string(),
            line,
            msg,
        })?;
        queries.push((id, tokenize_text(fields[1]), split));
    }

    let mut qrels: BTreeMap<u32, BTreeMap<u32, u32>> = BTreeMap::new();
    for (idx, raw) in fs::read_to_string(qrel_path)?.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                path: qrel_path.display().to_string(),
                line,
                msg: format!(
                    "expected 'query_id 0 doc_id relevance', found {} fields",
                    fields.len()
                ),
            });
        }
        let qid = parse_id(fields[0], qrel_path, line, "query_id")?;
        let did = parse_id(fields[2], qrel_path, line, "doc_id")?;
        let rel = parse_id(fields[3], qrel_path, line, "relevance")?;
        if rel >= 1 {
            qrels.entry(qid).or_default().insert(did, rel);
        }
    }

    let mut expansions = BTreeMap::new();
    if let Some(path) = expansion_path {
        #[derive(Deserialize)]
        struct Line {
            query_id: serde_json::Value,
            pseudo_doc: String,
        }
        for (idx, raw) in fs::read_to_string(path)?.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(raw).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line,
                msg: e.to_string(),
            })?;
            let qid = match &parsed.query_id {
                serde_json::Value::Number(n) => {
                    n.as_u64().and_then(|v| u32::try_from(v).ok()).ok_or_else(|| {
                        Error::Parse {
                            path: path.display().to_string(),
                            line,
                            msg: format!("query_id {n} out of range"),
                        }
                    })?
                }
                serde_json::Value::String(s) => parse_id(s, path, line, "query_id")?,
                other => {
                    return Err(Error::Parse {
                        path: path.display().to_string(),
                        line,
                        msg: format!("query_id must be a number or string, found {other}"),
                    })
                }
            };
            expansions.insert(qid, tokenize_text(&parsed.pseudo_doc));
        }
    }

    Corpus::new(documents, queries, qrels, expansions, None)
}
