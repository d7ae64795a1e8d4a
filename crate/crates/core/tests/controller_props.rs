use nesy_control::controller::{
    encode_input, generate_dataset, gradients, loss, raw_target_displacement, train,
    DeltaController, EncodingMode, MlpParams, TrainConfig, TrainingSample,
};
use nesy_control::geometry::{apply_action, distance_to_goal, Action, EnvState, TaskRelation, WorkspaceConfig};
use proptest::prelude::*;

fn ws() -> WorkspaceConfig {
    WorkspaceConfig::default()
}

fn state() -> impl Strategy<Value = EnvState> {
    (0.0..=800.0f64, 0.0..=800.0f64, 0.0..=800.0f64, 0.0..=800.0f64)
        .prop_map(|(a, b, c, d)| EnvState::new(a, b, c, d))
}

fn task() -> impl Strategy<Value = TaskRelation> {
    (0usize..4).prop_map(|i| TaskRelation::ALL[i])
}

fn encoding() -> impl Strategy<Value = EncodingMode> {
    prop_oneof![Just(EncodingMode::OneHot), Just(EncodingMode::Scalar)]
}

fn controller(seed: u64, hidden: &[usize], mode: EncodingMode, scale: f64, max_step: f64) -> DeltaController {
    let sizes: Vec<usize> = std::iter::once(mode.input_dim())
        .chain(hidden.iter().copied())
        .chain([2])
        .collect();
    let mut params = MlpParams::init(&sizes, seed).unwrap();
    for v in params.values_mut() {
        *v *= scale;
    }
    DeltaController { params, encoding: mode, max_step }
}

/// Central difference of the loss in parameter `k`.
fn numeric_gradient(ctrl: &DeltaController, batch: &[TrainingSample], lambda: f64, k: usize, h: f64) -> f64 {
    let at = |delta: f64| {
        let mut c = ctrl.clone();
        *c.params.values_mut().nth(k).unwrap() += delta;
        loss(&c, batch, lambda, &ws()).unwrap()
    };
    (at(h) - at(-h)) / (2.0 * h)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn controller_output_is_bounded(
        seed in any::<u64>(),
        mode in encoding(),
        scale in prop_oneof![Just(1.0), Just(100.0), Just(1e6)],
        max_step in 0.5..100.0f64,
        s in state(),
        t in task(),
    ) {
        let ctrl = controller(seed, &[16, 16], mode, scale, max_step);
        let a = ctrl.act(&s, t, &ws()).unwrap();
        prop_assert!(a.dx.abs() <= max_step && a.dy.abs() <= max_step);
    }

    #[test]
    fn unclamped_targets_never_increase_distance(s in state(), t in task(), alpha in 0.01..=1.0f64) {
        let raw = raw_target_displacement(&s, t, &ws(), alpha);
        prop_assert!(raw.dx == 0.0 || raw.dy == 0.0);
        let next = apply_action(&s, raw, &ws());
        prop_assert!(distance_to_goal(&next, t, &ws()) <= distance_to_goal(&s, t, &ws()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn analytic_gradients_match_finite_differences(
        seed in any::<u64>(),
        mode in encoding(),
        hidden in proptest::collection::vec(2usize..6, 1..3),
        batch in proptest::collection::vec((state(), task(), -40.0..40.0f64, -40.0..40.0f64), 1..6),
        lambda in prop_oneof![Just(0.0), 0.0..0.5f64],
    ) {
        let ctrl = controller(seed, &hidden, mode, 1.0, 40.0);
        let batch: Vec<TrainingSample> = batch
            .into_iter()
            .map(|(state, task, dx, dy)| TrainingSample { state, task, target: Action::new(dx, dy) })
            .collect();
        let analytic = gradients(&ctrl, &batch, lambda, &ws()).unwrap();
        for (k, &g) in analytic.values().enumerate() {
            let n = numeric_gradient(&ctrl, &batch, lambda, k, 1e-5);
            // Components near zero are compared against a floor.
            let rel = (g - n).abs() / g.abs().max(n.abs()).max(1e-3);
            prop_assert!(rel <= 1e-4, "param {k}: analytic {g}, numeric {n}");
        }
    }
}

#[test]
fn training_is_deterministic_under_a_fixed_seed() {
    let cfg = TrainConfig {
        sample_count: 2000,
        epochs: 3,
        hidden_layers: vec![16],
        ..TrainConfig::default()
    };
    let a = train(&cfg, &ws()).unwrap();
    let b = train(&cfg, &ws()).unwrap();
    assert_eq!(a.controller, b.controller);
    assert_eq!(a.loss_curve, b.loss_curve);
    let c = train(&TrainConfig { seed: 43, ..cfg }, &ws()).unwrap();
    assert_ne!(a.controller, c.controller);
}

#[test]
fn scalar_encoding_example() {
    let s = EnvState::new(400.0, 100.0, 300.0, 100.0);
    let u = encode_input(&s, TaskRelation::RightOf, &ws(), EncodingMode::Scalar);
    assert_eq!(u.as_slice(), &[0.5, 0.125, 0.375, 0.125, 0.0]);
    assert_eq!(generate_dataset(&TrainConfig { sample_count: 3, ..Default::default() }, &ws()).len(), 3);
}
