use tsbench_core::eval::{evaluate, EvalContext, NamedModel, SplitSpec};
use tsbench_core::models::TrainConfig;
use tsbench_core::{generate, GeneratorSpec, ModelSpec, Transform, ValueSeries};

fn walk(seed: u64) -> ValueSeries {
    generate(&GeneratorSpec::martingale(0.01, 100.0, 2000, seed)).unwrap().series
}

fn models() -> Vec<NamedModel> {
    vec![
        NamedModel::new(ModelSpec::Linear { lags: vec![1], intercept: true }),
        NamedModel::new(ModelSpec::Linear { lags: vec![1, 2, 3, 4, 5, 21, 63], intercept: true }),
        NamedModel::new(ModelSpec::Glm),
        NamedModel::new(ModelSpec::Lstm(TrainConfig {
            hidden_size: 8,
            epochs: 20,
            sequence_length: 10,
            ..TrainConfig::default()
        })),
    ]
}

#[test]
fn no_model_beats_the_martingale_on_driftless_walks() {
    let models = models();
    let mut holds = vec![0usize; models.len()];
    for seed in 0..20 {
        let ctx = EvalContext::new(format!("walk-{seed}"), Transform::Close, seed);
        let ev = evaluate(&models, &walk(seed), &SplitSpec::fraction(0.7), &ctx).unwrap();
        for (i, m) in ev.report.models.iter().enumerate() {
            assert_eq!(m.score.n_predictions, ev.report.martingale.n_predictions);
            if m.score.rmse >= 0.98 * ev.report.martingale.rmse {
                holds[i] += 1;
            }
        }
    }
    for (m, h) in models.iter().zip(&holds) {
        assert!(*h >= 18, "{}: ratio >= 0.98 in only {h}/20 seeds", m.name);
    }
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let models = models();
    let series = walk(3);
    let ctx = EvalContext::new("walk-3", Transform::Close, 11);
    let spec = SplitSpec::WalkForward {
        train_len: 600,
        step: 350,
        alignment: Default::default(),
    };
    let a = evaluate(&models, &series, &spec, &ctx).unwrap();
    let b = evaluate(&models, &series, &spec, &ctx).unwrap();
    assert_eq!(a.report.to_json(), b.report.to_json());
    assert_eq!(a.report.to_table(), b.report.to_table());
    assert_eq!(a.table.to_csv(), b.table.to_csv());
}

#[test]
fn martingale_entry_matches_the_baseline_exactly() {
    for seed in [5, 6] {
        let ctx = EvalContext::new("walk", Transform::Close, 0);
        let ev = evaluate(&[NamedModel::new(ModelSpec::Martingale)], &walk(seed), &SplitSpec::fraction(0.7), &ctx).unwrap();
        assert_eq!(ev.report.models[0].score, ev.report.martingale);
        assert_eq!(ev.report.models[0].rmse_ratio, 1.0);
    }
}

#[test]
fn level_shift_leaves_martingale_errors_and_shifts_additive_predictions() {
    let series = walk(6);
    let shifted = ValueSeries::new(series.dates().to_vec(), series.values().iter().map(|v| v + 1000.0).collect()).unwrap();
    let models = vec![NamedModel::new(ModelSpec::Linear { lags: vec![1, 2], intercept: true })];
    let ctx = EvalContext::new("walk-6", Transform::Close, 0);
    let a = evaluate(&models, &series, &SplitSpec::fraction(0.7), &ctx).unwrap();
    let b = evaluate(&models, &shifted, &SplitSpec::fraction(0.7), &ctx).unwrap();
    assert!((a.report.martingale.rmse - b.report.martingale.rmse).abs() < 1e-9);
    assert!((a.report.martingale.mae - b.report.martingale.mae).abs() < 1e-9);
    let pa = a.table.column("linear[1,2]").unwrap();
    let pb = b.table.column("linear[1,2]").unwrap();
    for (x, y) in pa.iter().zip(pb) {
        assert!((y - x - 1000.0).abs() < 1e-6);
    }
    // whether the model beats the martingale is unchanged
    let rank = |r: &tsbench_core::eval::EvalReport| r.models[0].score.rmse < r.martingale.rmse;
    assert_eq!(rank(&a.report), rank(&b.report));
}
