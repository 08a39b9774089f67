//! Dev probe: trains the lineages on the default desk corpus and prints the
//! directional comparisons.

use softqe_core::corpus::{generate_corpus, CorpusConfig};
use softqe_core::eval::{evaluate, EvalCutoffs, QueryInputMode};
use softqe_core::objectives::LossSchedule;
use softqe_core::trainer::{
    train_dpr, train_q2d_teacher, train_score_only_kd, train_softqe_student, Objective,
    TrainConfig,
};

fn main() {
    let t0 = std::time::Instant::now();
    let seeds: Vec<u64> = (1..=3).collect();
    let cutoffs = EvalCutoffs::default();

    let corpus = generate_corpus(&CorpusConfig::default()).unwrap();
    println!("corpus built in {:?}", t0.elapsed());
    println!(
        "mean query len: {:.2}, mean expansion len: {:.2}",
        corpus.queries.iter().map(|(_, t, _)| t.len()).sum::<usize>() as f64
            / corpus.queries.len() as f64,
        corpus.expansions.values().map(|t| t.len()).sum::<usize>() as f64
            / corpus.expansions.len() as f64
    );

    let mut agg: std::collections::BTreeMap<String, Vec<f64>> = Default::default();
    let mut push = |name: &str, v: f64| agg.entry(name.to_string()).or_default().push(v);

    for &seed in &seeds {
        let t = std::time::Instant::now();
        let mut config = TrainConfig {
            seed,
            ..TrainConfig::default()
        };

        let dpr = train_dpr(&corpus, &config).unwrap();
        let dpr_q = evaluate(&dpr.query_params, &dpr.passage_params, &corpus, QueryInputMode::Q, &cutoffs).unwrap();
        let dpr_qp = evaluate(&dpr.query_params, &dpr.passage_params, &corpus, QueryInputMode::QPlus, &cutoffs).unwrap();

        let teacher = train_q2d_teacher(&corpus, &config).unwrap();
        let q2d_qp = evaluate(&teacher.query_params, &teacher.passage_params, &corpus, QueryInputMode::QPlus, &cutoffs).unwrap();
        let q2d_q = evaluate(&teacher.query_params, &teacher.passage_params, &corpus, QueryInputMode::Q, &cutoffs).unwrap();

        config.objective = Objective::Softqe;
        let warm = train_softqe_student(&corpus, &teacher, &config, None).unwrap();
        let warm_eval = evaluate(&warm.query_params, &warm.passage_params, &corpus, QueryInputMode::Q, &cutoffs).unwrap();

        let mut combined_cfg = config.clone();
        combined_cfg.schedule = LossSchedule::constant(6, 0.2, 0.2).unwrap();
        let combined = train_softqe_student(&corpus, &teacher, &combined_cfg, None).unwrap();
        let combined_eval = evaluate(&combined.query_params, &combined.passage_params, &corpus, QueryInputMode::Q, &cutoffs).unwrap();

        let mut dist_cfg = config.clone();
        dist_cfg.schedule = LossSchedule::constant(6, 1.0, 0.2).unwrap();
        let dist_only = train_softqe_student(&corpus, &teacher, &dist_cfg, None).unwrap();
        let dist_eval = evaluate(&dist_only.query_params, &dist_only.passage_params, &corpus, QueryInputMode::Q, &cutoffs).unwrap();

        let mut cont_cfg = config.clone();
        cont_cfg.schedule = LossSchedule::constant(6, 0.0, 0.2).unwrap();
        let cont_only = train_softqe_student(&corpus, &teacher, &cont_cfg, None).unwrap();
        let cont_eval = evaluate(&cont_only.query_params, &cont_only.passage_params, &corpus, QueryInputMode::Q, &cutoffs).unwrap();

        let score_kd = train_score_only_kd(&corpus, &teacher, &config, None).unwrap();
        let score_eval = evaluate(&score_kd.query_params, &score_kd.passage_params, &corpus, QueryInputMode::Q, &cutoffs).unwrap();

        push("dpr_q_mrr", dpr_q.aggregates["mrr@10"]);
        push("dpr_qp_mrr", dpr_qp.aggregates["mrr@10"]);
        push("q2d_qp_mrr", q2d_qp.aggregates["mrr@10"]);
        push("q2d_q_mrr", q2d_q.aggregates["mrr@10"]);
        push("warm_mrr", warm_eval.aggregates["mrr@10"]);
        push("combined_mrr", combined_eval.aggregates["mrr@10"]);
        push("dist_mrr", dist_eval.aggregates["mrr@10"]);
        push("cont_mrr", cont_eval.aggregates["mrr@10"]);
        push("warm_ndcg", warm_eval.aggregates["ndcg@10"]);
        push("combined_ndcg", combined_eval.aggregates["ndcg@10"]);
        push("dist_ndcg", dist_eval.aggregates["ndcg@10"]);
        push("cont_ndcg", cont_eval.aggregates["ndcg@10"]);
        push("score_ndcg", score_eval.aggregates["ndcg@10"]);
        push("warm_final_ldist", warm.loss_history.last().unwrap().l_dist);
        push("combined_final_ldist", combined.loss_history.last().unwrap().l_dist);
        push("warm_e2_ldist", warm.loss_history[2].l_dist);
        push("warm_e0_ldist", warm.loss_history[0].l_dist);

        println!("seed {seed} done in {:?}", t.elapsed());
    }

    println!("\n== means over {} seeds ==", seeds.len());
    for (name, vals) in &agg {
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        println!("{name:>22}: {mean:.4}  {vals:?}");
    }
}
