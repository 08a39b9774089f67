//! Dev probe: can the contrastive trainer overfit a tiny corpus?

use softqe_core::corpus::{generate_corpus, CorpusConfig};
use softqe_core::eval::{evaluate, EvalCutoffs, QueryInputMode};
use softqe_core::objectives::LossSchedule;
use softqe_core::trainer::{train_dpr, TrainConfig};

fn main() {
    let corpus = generate_corpus(&CorpusConfig {
        num_topics: 4,
        vocab_size: 200,
        num_docs: 60,
        doc_len: 16,
        num_train_queries: 30,
        num_eval_queries: 10,
        seed: 1,
        ..CorpusConfig::default()
    })
    .unwrap();

    for lr in [1e-3, 5e-3, 1e-2, 5e-2] {
        let epochs = 30;
        let config = TrainConfig {
            epochs,
            batch_size: 8,
            learning_rate: lr,
            negatives_per_query: 4,
            schedule: LossSchedule::constant(epochs, 0.0, 0.2).unwrap(),
            seed: 3,
            d_emb: 32,
            d_hidden: 32,
            d_out: 16,
            ..TrainConfig::default()
        };
        let model = train_dpr(&corpus, &config).unwrap();
        let curve: Vec<String> = model
            .loss_history
            .iter()
            .step_by(5)
            .map(|l| format!("{:.3}", l.l_cont))
            .collect();
        let report = evaluate(
            &model.query_params,
            &model.passage_params,
            &corpus,
            QueryInputMode::Q,
            &EvalCutoffs {
                mrr_k: 10,
                recall_ks: vec![10],
                ndcg_k: 10,
            },
        )
        .unwrap();
        println!(
            "lr {lr:>6}: l_cont {} -> {:.3} | mrr@10 {:.3}",
            curve.join(" "),
            model.loss_history.last().unwrap().l_cont,
            report.aggregates["mrr@10"]
        );
    }
}
