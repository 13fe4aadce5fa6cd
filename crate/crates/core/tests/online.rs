use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsbench_core::online::{run_ensemble, EnsembleConfig, EnsembleSettings, EnsembleState, LossKind};
use tsbench_core::{generate, GeneratorSpec, ModelSpec};

const N: usize = 4;
const T: usize = 1000;

fn hedge_state() -> EnsembleState {
    let eta = (8.0 * (N as f64).ln() / T as f64).sqrt();
    let names = (0..N).map(|i| format!("e{i}")).collect();
    EnsembleState::new(
        names,
        EnsembleConfig {
            eta,
            loss_max: 1.0,
            loss: LossKind::Absolute,
        },
    )
    .unwrap()
}

fn bound() -> f64 {
    (T as f64 * (N as f64).ln() / 2.0).sqrt()
}

fn run(mut losses: impl FnMut(usize, &[f64]) -> Vec<f64>) -> f64 {
    let mut state = hedge_state();
    for t in 0..T {
        let l = losses(t, state.weights());
        state.update_with_losses(&l).unwrap();
    }
    // oracle: recompute the regret from the recorded matrix
    let best = state
        .expert_losses()
        .iter()
        .map(|row| row.iter().sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    let total: f64 = state.ensemble_losses().iter().sum();
    assert!((state.regret() - (total - best)).abs() < 1e-9);
    state.regret()
}

#[test]
fn regret_bound_on_random_losses() {
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let biases: Vec<f64> = (0..N).map(|_| rng.random_range(0.0..1.0)).collect();
        let regret = run(|_, _| {
            biases
                .iter()
                .map(|b| if rng.random_bool(*b) { 1.0 } else { 0.0 })
                .collect()
        });
        assert!(regret <= bound() + 1e-9, "seed {seed}: regret {regret} > {}", bound());
    }
}

#[test]
fn regret_bound_on_adversarial_losses() {
    // alternating leader
    let alternating = run(|t, _| (0..N).map(|i| if (t + i) % 2 == 0 { 1.0 } else { 0.0 }).collect());
    // loss on whichever expert currently has the most weight
    let follow_the_leader = run(|_, q| {
        let top = (0..N).max_by(|&a, &b| q[a].total_cmp(&q[b])).unwrap();
        (0..N).map(|i| if i == top { 1.0 } else { 0.0 }).collect()
    });
    // one good expert hidden behind a phase switch
    let switch = run(|t, _| {
        (0..N)
            .map(|i| match (t < T / 2, i) {
                (true, 0) => 0.0,
                (true, _) => 1.0,
                (false, 1) => 0.0,
                (false, _) => 1.0,
            })
            .collect()
    });
    for (name, r) in [("alternating", alternating), ("leader", follow_the_leader), ("switch", switch)] {
        assert!(r <= bound() + 1e-9, "{name}: regret {r} > {}", bound());
    }
}

fn experts() -> Vec<ModelSpec> {
    vec![
        ModelSpec::Martingale,
        ModelSpec::Linear { lags: vec![1], intercept: true },
        ModelSpec::Linear { lags: vec![1, 2, 3], intercept: true },
    ]
}

const TRAIN: usize = 500;

fn selected_window(spec: &GeneratorSpec) -> (usize, usize) {
    let sim = generate(spec).unwrap();
    let run = run_ensemble(&experts(), sim.series.values(), TRAIN, spec.seed, &EnsembleSettings::default()).unwrap();
    (run.selection.window, run.state.round())
}

#[test]
fn stationary_series_prefer_the_full_window() {
    // additive increments keep the loss distribution fixed; a geometric walk's
    // squared errors scale with the price level and drift with it
    let mut full = 0;
    for seed in 0..20 {
        let spec = GeneratorSpec::additive(0.0, 1.0, 100.0, TRAIN + T, seed);
        let (w, rounds) = selected_window(&spec);
        if w == rounds {
            full += 1;
        }
    }
    assert!(full >= 16, "full window chosen in {full}/20 seeds");
}

#[test]
fn regime_flip_prefers_a_recent_window() {
    let mut recent = 0;
    for seed in 0..20 {
        let mut spec = GeneratorSpec::additive(1.0, 1.0, 100.0, TRAIN + T, seed);
        spec.drift_flip_at = Some(TRAIN + T / 2);
        let (w, rounds) = selected_window(&spec);
        if w <= rounds / 2 {
            recent += 1;
        }
    }
    assert!(recent >= 16, "recent window chosen in {recent}/20 seeds");
}

