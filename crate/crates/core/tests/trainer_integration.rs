//! Trainer behavior on small corpora: determinism, freezing, teacher-target
//! caching, the q+ = q reduction, and run-directory round trips.

use softqe_core::corpus::{generate_corpus, CorpusConfig, Split};
use softqe_core::encoder::{encode, init_params, write_params, RoleTag};
use softqe_core::eval::{evaluate, EvalCutoffs, QueryInputMode};
use softqe_core::objectives::LossSchedule;
use softqe_core::trainer::{
    load_run_dir, precompute_teacher_targets, save_run_dir, train_dpr, train_q2d_teacher,
    train_score_only_kd, train_softqe_student, CacheOutcome, Objective, TrainConfig,
};
use softqe_core::Error;

fn small_corpus_config(seed: u64) -> CorpusConfig {
    CorpusConfig {
        num_topics: 6,
        vocab_size: 400,
        num_docs: 120,
        doc_len: 16,
        num_train_queries: 40,
        num_eval_queries: 15,
        seed,
        ..CorpusConfig::default()
    }
}

fn small_train_config(seed: u64, epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 16,
        negatives_per_query: 4,
        schedule: LossSchedule::step(epochs, epochs / 2, 1.0, 0.2, 0.2).unwrap(),
        seed,
        d_emb: 24,
        d_hidden: 24,
        d_out: 12,
        ..TrainConfig::default()
    }
}

fn params_equal_ignoring_role(
    a: &softqe_core::EncoderParams,
    b: &softqe_core::EncoderParams,
) -> bool {
    a.tensors()
        .into_iter()
        .zip(b.tensors())
        .all(|(x, y)| x == y)
}

fn ckpt_bytes(params: &softqe_core::EncoderParams) -> Vec<u8> {
    let mut bytes = Vec::new();
    write_params(params, &mut bytes).unwrap();
    bytes
}

#[test]
fn dpr_is_deterministic_per_seed() {
    let corpus = generate_corpus(&small_corpus_config(1)).unwrap();
    let config = small_train_config(5, 2);
    let a = train_dpr(&corpus, &config).unwrap();
    let b = train_dpr(&corpus, &config).unwrap();
    assert_eq!(a.loss_history, b.loss_history);
    assert_eq!(ckpt_bytes(&a.query_params), ckpt_bytes(&b.query_params));
    assert_eq!(ckpt_bytes(&a.passage_params), ckpt_bytes(&b.passage_params));

    let mut other_seed = config.clone();
    other_seed.seed = 6;
    let c = train_dpr(&corpus, &other_seed).unwrap();
    assert_ne!(a.loss_history, c.loss_history);
}

#[test]
fn zero_learning_rate_is_a_no_op() {
    let corpus = generate_corpus(&small_corpus_config(2)).unwrap();
    let mut config = small_train_config(3, 2);
    config.learning_rate = 0.0;
    let model = train_dpr(&corpus, &config).unwrap();
    let fresh_query = init_params(
        softqe_core::rng::SplitMix64::for_stream(config.seed, 10).next_u64(),
        corpus.vocab_size(),
        config.d_emb,
        config.d_hidden,
        config.d_out,
        config.normalize_output,
        RoleTag::Query,
    )
    .unwrap();
    assert!(params_equal_ignoring_role(&model.query_params, &fresh_query));
    // losses still recorded and finite
    assert_eq!(model.loss_history.len(), 2);
    assert!(model.loss_history.iter().all(|l| l.total.is_finite()));
}

#[test]
fn q2d_with_empty_pseudo_docs_equals_dpr() {
    let mut corpus_config = small_corpus_config(3);
    corpus_config.expander_recovery_rate = 0.0;
    corpus_config.expander_noise_rate = 0.0;
    let corpus = generate_corpus(&corpus_config).unwrap();
    assert!(corpus.expansions.values().all(|p| p.is_empty()));

    let config = small_train_config(7, 2);
    let dpr = train_dpr(&corpus, &config).unwrap();
    let q2d = train_q2d_teacher(&corpus, &config).unwrap();
    assert_eq!(dpr.loss_history, q2d.loss_history);
    assert!(params_equal_ignoring_role(
        &dpr.query_params,
        &q2d.query_params
    ));
    assert!(params_equal_ignoring_role(
        &dpr.passage_params,
        &q2d.passage_params
    ));
    assert_eq!(q2d.query_params.role_tag, RoleTag::TeacherQuery);
}

#[test]
fn q2d_requires_expansions() {
    let corpus = generate_corpus(&small_corpus_config(4))
        .unwrap()
        .without_expansions();
    let err = train_q2d_teacher(&corpus, &small_train_config(1, 1)).unwrap_err();
    assert!(matches!(err, Error::Integrity(_)));
}

#[test]
fn frozen_student_keeps_teacher_passages_bit_identical() {
    let corpus = generate_corpus(&small_corpus_config(5)).unwrap();
    let config = small_train_config(9, 2);
    let teacher = train_q2d_teacher(&corpus, &config).unwrap();
    let teacher_passage_bytes = ckpt_bytes(&teacher.passage_params);

    let mut student_config = config.clone();
    student_config.objective = Objective::Softqe;
    let student = train_softqe_student(&corpus, &teacher, &student_config, None).unwrap();
    assert_eq!(ckpt_bytes(&student.passage_params), teacher_passage_bytes);
    assert_eq!(student.query_params.role_tag, RoleTag::StudentQuery);
    assert!(student.loss_history.iter().all(|l| l.l_dist.is_finite()));

    let mut unfrozen_config = student_config.clone();
    unfrozen_config.freeze_passage_encoder = false;
    let unfrozen = train_softqe_student(&corpus, &teacher, &unfrozen_config, None).unwrap();
    assert_ne!(ckpt_bytes(&unfrozen.passage_params), teacher_passage_bytes);
}

#[test]
fn student_rejects_wrong_roles_and_objectives() {
    let corpus = generate_corpus(&small_corpus_config(6)).unwrap();
    let config = small_train_config(2, 1);
    let dpr = train_dpr(&corpus, &config).unwrap();

    // a DPR model is not a teacher
    let mut student_config = config.clone();
    student_config.objective = Objective::Softqe;
    assert!(matches!(
        train_softqe_student(&corpus, &dpr, &student_config, None),
        Err(Error::Integrity(_))
    ));

    let teacher = train_q2d_teacher(&corpus, &config).unwrap();
    let mut bad_objective = config.clone();
    bad_objective.objective = Objective::Contrastive;
    assert!(matches!(
        train_softqe_student(&corpus, &teacher, &bad_objective, None),
        Err(Error::Config(_))
    ));
}

#[test]
fn teacher_targets_cache_round_trip_and_offline_mode() {
    let corpus = generate_corpus(&small_corpus_config(7)).unwrap();
    let config = small_train_config(3, 1);
    let teacher = train_q2d_teacher(&corpus, &config).unwrap();
    let cache_dir = tempfile::tempdir().unwrap();

    let (targets, outcome) =
        precompute_teacher_targets(&teacher, &corpus, Some(cache_dir.path())).unwrap();
    assert_eq!(outcome, CacheOutcome::Computed);
    assert_eq!(targets.len(), corpus.query_ids(Split::Train).len());

    // spot-check a few targets against direct encoding of q+
    for qid in corpus.query_ids(Split::Train).into_iter().take(10) {
        let expanded = corpus.expanded_query(qid).unwrap();
        let direct = encode(&teacher.query_params, &expanded.tokens).unwrap();
        assert_eq!(targets[&qid], direct.values, "target for query {qid}");
    }

    // cache hit returns bit-identical embeddings
    let (cached, outcome) =
        precompute_teacher_targets(&teacher, &corpus, Some(cache_dir.path())).unwrap();
    assert_eq!(outcome, CacheOutcome::Hit);
    assert_eq!(targets, cached);

    // offline: expansions stripped, cache still serves targets
    let stripped = corpus.without_expansions();
    let (offline, outcome) =
        precompute_teacher_targets(&teacher, &stripped, Some(cache_dir.path())).unwrap();
    assert_eq!(outcome, CacheOutcome::HitOffline);
    assert_eq!(targets, offline);

    // without a cache, the stripped corpus cannot produce targets
    assert!(matches!(
        precompute_teacher_targets(&teacher, &stripped, None),
        Err(Error::Integrity(_))
    ));

    // and a full student run works on the stripped corpus via the cache
    let mut student_config = config.clone();
    student_config.objective = Objective::Softqe;
    let student =
        train_softqe_student(&stripped, &teacher, &student_config, Some(cache_dir.path()))
            .unwrap();
    assert_eq!(
        student.provenance.teacher_target_source.as_deref(),
        Some("cache_hit_offline")
    );
}

#[test]
fn score_only_kd_records_mse_in_the_dist_channel() {
    let corpus = generate_corpus(&small_corpus_config(8)).unwrap();
    let config = small_train_config(4, 2);
    let teacher = train_q2d_teacher(&corpus, &config).unwrap();
    let model = train_score_only_kd(&corpus, &teacher, &config, None).unwrap();
    assert_eq!(model.provenance.lineage, "score_only_kd");
    assert!(model.loss_history.iter().all(|l| l.l_dist >= 0.0));
    assert!(model.loss_history.iter().all(|l| l.l_kl == 0.0));
    // determinism
    let again = train_score_only_kd(&corpus, &teacher, &config, None).unwrap();
    assert_eq!(model.loss_history, again.loss_history);
}

#[test]
fn kd_composite_student_trains_and_records_kl() {
    let corpus = generate_corpus(&small_corpus_config(9)).unwrap();
    let mut config = small_train_config(5, 2);
    config.objective = Objective::KdComposite;
    let teacher = train_q2d_teacher(&corpus, &config).unwrap();
    let model = train_softqe_student(&corpus, &teacher, &config, None).unwrap();
    assert_eq!(model.provenance.lineage, "softqe_kd");
    // the warmup epoch has alpha=1 so the KL share is zero there; the final
    // epoch mixes it in
    let last = model.loss_history.last().unwrap();
    assert!(last.l_kl >= 0.0);
    assert!(last.total.is_finite());
}

#[test]
fn run_dir_round_trip_is_lossless() {
    let corpus = generate_corpus(&small_corpus_config(10)).unwrap();
    let config = small_train_config(11, 2);
    let model = train_dpr(&corpus, &config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_run_dir(&model, dir.path()).unwrap();
    for file in [
        "config.json",
        "model.ckpt",
        "loss_history.csv",
        "provenance.json",
    ] {
        assert!(dir.path().join(file).exists(), "{file} missing");
    }
    let loaded = load_run_dir(dir.path()).unwrap();
    assert_eq!(loaded.loss_history, model.loss_history);
    assert_eq!(
        ckpt_bytes(&loaded.query_params),
        ckpt_bytes(&model.query_params)
    );
    assert_eq!(
        ckpt_bytes(&loaded.passage_params),
        ckpt_bytes(&model.passage_params)
    );
    assert_eq!(loaded.provenance.corpus_hash, model.provenance.corpus_hash);

    // saving again produces identical bytes
    let dir2 = tempfile::tempdir().unwrap();
    save_run_dir(&model, dir2.path()).unwrap();
    for file in ["config.json", "model.ckpt", "loss_history.csv"] {
        assert_eq!(
            std::fs::read(dir.path().join(file)).unwrap(),
            std::fs::read(dir2.path().join(file)).unwrap(),
            "{file} differs between saves"
        );
    }
}

#[test]
fn evaluation_is_deterministic_and_modes_differ() {
    let corpus = generate_corpus(&small_corpus_config(11)).unwrap();
    let config = small_train_config(13, 2);
    let model = train_dpr(&corpus, &config).unwrap();
    let cutoffs = EvalCutoffs {
        mrr_k: 10,
        recall_ks: vec![10, 50],
        ndcg_k: 10,
    };
    let a = evaluate(
        &model.query_params,
        &model.passage_params,
        &corpus,
        QueryInputMode::Q,
        &cutoffs,
    )
    .unwrap();
    let b = evaluate(
        &model.query_params,
        &model.passage_params,
        &corpus,
        QueryInputMode::Q,
        &cutoffs,
    )
    .unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
    for (name, agg) in &a.aggregates {
        let per_query = &a.per_query[name];
        let mean = per_query.values().sum::<f64>() / per_query.len() as f64;
        assert!((agg - mean).abs() < 1e-12, "{name} aggregate drift");
        assert!((0.0..=1.0 + 1e-12).contains(agg), "{name} out of range");
    }

    let plus = evaluate(
        &model.query_params,
        &model.passage_params,
        &corpus,
        QueryInputMode::QPlus,
        &cutoffs,
    )
    .unwrap();
    assert_ne!(
        a.aggregates["mrr@10"], plus.aggregates["mrr@10"],
        "q and q_plus modes should differ on this corpus"
    );

    // q_plus without expansions is an integrity error
    let stripped = corpus.without_expansions();
    assert!(matches!(
        evaluate(
            &model.query_params,
            &model.passage_params,
            &stripped,
            QueryInputMode::QPlus,
            &cutoffs,
        ),
        Err(Error::Integrity(_))
    ));
}

#[test]
fn divergence_is_reported_with_location() {
    let corpus = generate_corpus(&small_corpus_config(12)).unwrap();
    let mut config = small_train_config(1, 3);
    config.learning_rate = 1e12;
    config.grad_clip = 0.0; // disabled
    match train_dpr(&corpus, &config) {
        Err(Error::Diverged { .. }) => {}
        Ok(model) => {
            // enormous steps may still keep tanh-bounded losses finite; at
            // minimum the run must complete with finite recorded losses
            assert!(model.loss_history.iter().all(|l| l.total.is_finite()));
        }
        Err(other) => panic!("unexpected error {other}"),
    }
}
