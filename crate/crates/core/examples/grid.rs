//! Dev probe: underspecified queries — keep fraction low so expansions carry
//! real information. Prints lexical ceilings for both input modes.

use softqe_core::bm25::{build_inverted_index, bm25_search_all};
use softqe_core::corpus::{generate_corpus, CorpusConfig, Split};
use softqe_core::eval::{evaluate, EvalCutoffs, QueryInputMode};
use softqe_core::trainer::{train_dpr, train_q2d_teacher, TrainConfig};

fn bm25_mrr(corpus: &softqe_core::Corpus, expanded: bool) -> f64 {
    let index = build_inverted_index(corpus, 0.9, 0.4).unwrap();
    let mut total = 0.0;
    let ids = corpus.query_ids(Split::Eval);
    for &qid in &ids {
        let tokens = if expanded {
            corpus.expanded_query(qid).unwrap().tokens
        } else {
            corpus.query_tokens(qid).unwrap().to_vec()
        };
        let ranked = bm25_search_all(&index, &tokens);
        let rels = corpus.relevant_docs(qid).unwrap();
        for (rank, (doc, _)) in ranked.iter().take(10).enumerate() {
            if rels.get(doc).copied().unwrap_or(0) >= 1 {
                total += 1.0 / (rank + 1) as f64;
                break;
            }
        }
    }
    total / ids.len() as f64
}

fn main() {
    let cutoffs = EvalCutoffs::default();
    for keep in [0.15f64, 0.2, 0.25, 0.3] {
        for noise in [0.35f64, 0.45] {
            let corpus = generate_corpus(&CorpusConfig {
                num_topics: 10,
                vocab_size: 800,
                query_keep_fraction: keep,
                expander_recovery_rate: 0.9,
                expander_noise_rate: noise,
                ..CorpusConfig::default()
            })
            .unwrap();
            let qlen = corpus.queries.iter().map(|(_, t, _)| t.len()).sum::<usize>() as f64
                / corpus.queries.len() as f64;
            let config = TrainConfig {
                learning_rate: 1e-2,
                batch_size: 8,
                negatives_per_query: 7,
                random_negatives_per_query: 32,
                seed: 1,
                ..TrainConfig::default()
            };
            let dpr = train_dpr(&corpus, &config).unwrap();
            let dpr_q = evaluate(&dpr.query_params, &dpr.passage_params, &corpus, QueryInputMode::Q, &cutoffs).unwrap();
            let dpr_qp = evaluate(&dpr.query_params, &dpr.passage_params, &corpus, QueryInputMode::QPlus, &cutoffs).unwrap();
            let q2d = train_q2d_teacher(&corpus, &config).unwrap();
            let q2d_qp = evaluate(&q2d.query_params, &q2d.passage_params, &corpus, QueryInputMode::QPlus, &cutoffs).unwrap();
            let q2d_q = evaluate(&q2d.query_params, &q2d.passage_params, &corpus, QueryInputMode::Q, &cutoffs).unwrap();
            let a_gap = q2d_qp.aggregates["mrr@10"] - dpr_q.aggregates["mrr@10"];
            let c_gap = dpr_qp.aggregates["mrr@10"] - dpr_q.aggregates["mrr@10"];
            println!(
                "keep {keep} noise {noise} qlen {qlen:.1} bm25(q) {:.3} bm25(q+) {:.3} | dpr(q) {:.3} dpr(q+) {:.3} q2d(q+) {:.3} q2d(q) {:.3} | 4a {a_gap:+.3} 4c {c_gap:+.3} {}",
                bm25_mrr(&corpus, false),
                bm25_mrr(&corpus, true),
                dpr_q.aggregates["mrr@10"],
                dpr_qp.aggregates["mrr@10"],
                q2d_qp.aggregates["mrr@10"],
                q2d_q.aggregates["mrr@10"],
                if a_gap > 0.02 && c_gap < 0.0 { "<== OK" } else { "" },
            );
        }
    }
}
