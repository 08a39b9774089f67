//! Dev probe: where do eval golds rank, and who intrudes into the top 10?

use softqe_core::corpus::{generate_corpus, CorpusConfig, Split};
use softqe_core::encoder::encode;
use softqe_core::eval::{build_dense_index, search};
use softqe_core::linalg::l2_norm;
use softqe_core::trainer::{train_dpr, TrainConfig};

fn main() {
    let corpus = generate_corpus(&CorpusConfig::default()).unwrap();
    let config = TrainConfig {
        learning_rate: 5e-3,
        batch_size: 16,
        seed: 1,
        ..TrainConfig::default()
    };
    let model = train_dpr(&corpus, &config).unwrap();
    let index = build_dense_index(&model.passage_params, &corpus).unwrap();

    // norms of train-gold docs vs never-positive docs
    let mut train_gold_norms = vec![];
    let mut other_norms = vec![];
    for (i, (doc_id, _)) in corpus.documents.iter().enumerate() {
        let n = l2_norm(&index.embeddings[i]);
        if *doc_id < 500 {
            train_gold_norms.push(n);
        } else {
            other_norms.push(n);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!(
        "passage norms: train-gold {:.3}, other {:.3}",
        mean(&train_gold_norms),
        mean(&other_norms)
    );

    for split in [Split::Train, Split::Eval] {
        let mut gold_ranks = vec![];
        let mut intruders_traingold = 0usize;
        let mut top10_total = 0usize;
        for qid in corpus.query_ids(split).into_iter().take(100) {
            let emb = encode(&model.query_params, corpus.query_tokens(qid).unwrap()).unwrap();
            let ranking = search(&index, &emb.values, 2000).unwrap();
            let gold = corpus.gold_doc(qid).unwrap();
            let rank = ranking.iter().position(|(d, _)| *d == gold).unwrap() + 1;
            gold_ranks.push(rank as f64);
            for (d, _) in ranking.iter().take(10) {
                top10_total += 1;
                if *d < 500 {
                    intruders_traingold += 1;
                }
            }
        }
        gold_ranks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        println!(
            "{split:?}: gold rank median {} mean {:.1} | top10 share of train-gold docs {:.2}",
            gold_ranks[gold_ranks.len() / 2],
            mean(&gold_ranks),
            intruders_traingold as f64 / top10_total as f64,
        );
    }
}
