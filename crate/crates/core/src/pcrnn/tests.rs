use super::*;
use crate::seeding::{normal_vector, rng};
use approx::assert_abs_diff_eq;
use proptest::prelude::*;

fn random_net(n: usize, p: usize, d: usize, out: usize, seed: u64) -> PcrnnParams {
    PcrnnParams::with_factor_dim(n, p, d, out, 5.0, &mut rng(seed, 0)).unwrap()
}

fn random_vec(len: usize, seed: u64) -> DVector<f64> {
    normal_vector(&mut rng(seed, 77), len, 1.0)
}

fn dense_prediction(net: &PcrnnParams, post: &DVector<f64>, c: &DVector<f64>) -> DVector<f64> {
    let drive = net.dense_recurrent_tensor().contract(&tanh(post), c);
    post * (1.0 - 1.0 / net.tau) + drive / net.tau
}

#[test]
fn factored_matches_dense_tensor() {
    let net = random_net(4, 2, 2, 2, 1);
    let post = random_vec(4, 2);
    let c = normalize_causes(&random_vec(2, 3).abs());
    let (h, _) = net.predict_step(&post, &c).unwrap();
    assert_abs_diff_eq!(h, dense_prediction(&net, &post, &c), epsilon = 1e-12);
}

#[test]
fn empty_factor_space_has_no_drive() {
    let net = random_net(4, 2, 0, 2, 1);
    assert_abs_diff_eq!(net.dense_recurrent_tensor().contract(&random_vec(4, 1), &uniform_causes(2)).norm(), 0.0);
    let post = random_vec(4, 5);
    let (h, _) = net.predict_step(&post, &uniform_causes(2)).unwrap();
    assert_abs_diff_eq!(h, post * 0.8, epsilon = 1e-15);
}

#[test]
fn scalar_tensor_entry() {
    let mut net = PcrnnParams::zeros(1, 1, 1, 1, 5.0);
    net.w_p[(0, 0)] = 2.0;
    net.w_f[(0, 0)] = 3.0;
    net.w_c[(0, 0)] = 5.0;
    assert_eq!(net.dense_recurrent_tensor().get(0, 0, 0), 30.0);
}

#[test]
fn huge_tau_freezes_the_state() {
    let mut net = random_net(5, 2, 3, 2, 4);
    net.tau = 1e12;
    let post = random_vec(5, 6);
    let (h, _) = net.predict_step(&post, &uniform_causes(2)).unwrap();
    assert_abs_diff_eq!(h, post, epsilon = 1e-10);
}

#[test]
fn leak_without_recurrence() {
    let mut net = random_net(6, 2, 3, 2, 8);
    net.w_f.fill(0.0);
    let h0 = random_vec(6, 9);
    let run = net
        .rollout(&h0, &uniform_causes(2), 10, None, &LearningRates::prediction(), true)
        .unwrap();
    for (t, s) in run.states.iter().enumerate() {
        let expected = &h0 * 0.8f64.powi(t as i32 + 1);
        assert_abs_diff_eq!(s.h, expected, epsilon = 1e-12);
    }
}

#[test]
fn zero_rates_leave_state_untouched() {
    let net = random_net(6, 3, 3, 2, 10);
    let post = random_vec(6, 11);
    let c = uniform_causes(3);
    let (h, x) = net.predict_step(&post, &c).unwrap();
    let target = random_vec(2, 12);
    let s = net
        .infer_step(&h, &x, &target, &post, &c, &LearningRates::prediction(), true)
        .unwrap();
    assert_eq!(s.h_post, h);
    assert_eq!(s.c, c);
    assert_abs_diff_eq!(s.eps_h.norm(), 0.0);
}

#[test]
fn perfect_prediction_needs_no_correction() {
    let net = random_net(6, 3, 3, 2, 13);
    let post = random_vec(6, 14);
    let c = uniform_causes(3);
    let (h, x) = net.predict_step(&post, &c).unwrap();
    let s = net.infer_step(&h, &x, &x, &post, &c, &LearningRates::default(), true).unwrap();
    assert_eq!(s.h_post, h);
    assert_abs_diff_eq!(s.c, c, epsilon = 1e-15);
}

#[test]
fn hidden_correction_by_hand() {
    let mut net = PcrnnParams::zeros(2, 1, 1, 1, 5.0);
    net.w_out = DMatrix::from_row_slice(1, 2, &[1.0, -2.0]);
    let h = DVector::from_vec(vec![0.3, 0.4]);
    let x = DVector::from_vec(vec![0.3f64.tanh() - 2.0 * 0.4f64.tanh()]);
    let target = DVector::from_vec(vec![x[0] - 0.5]);
    let rates = LearningRates::default().with_inference(0.1, 0.0);
    let s = net
        .infer_step(&h, &x, &target, &h, &uniform_causes(1), &rates, true)
        .unwrap();
    // e = 0.5, so h* = h - 0.1 * 0.5 * (1, -2)
    assert_abs_diff_eq!(s.h_post, DVector::from_vec(vec![0.25, 0.5]), epsilon = 1e-12);
}

#[test]
fn normalize_examples() {
    let c = normalize_causes(&DVector::from_vec(vec![0.4, -0.1, 0.2]));
    assert_abs_diff_eq!(c, DVector::from_vec(vec![2.0 / 3.0, 0.0, 1.0 / 3.0]), epsilon = 1e-12);
    let c = normalize_causes(&DVector::from_vec(vec![-0.4, -0.1, 0.0]));
    assert_abs_diff_eq!(c, uniform_causes(3), epsilon = 1e-15);
    let c = normalize_causes(&DVector::from_vec(vec![2.0, -1.0, 0.5]));
    assert_abs_diff_eq!(c, DVector::from_vec(vec![2.0 / 3.0, 0.0, 1.0 / 3.0]), epsilon = 1e-12);
    let c = normalize_causes(&DVector::from_vec(vec![-1.0, -1.0]));
    assert_abs_diff_eq!(c, DVector::from_vec(vec![0.5, 0.5]), epsilon = 1e-15);
    let c = normalize_causes(&DVector::from_vec(vec![0.5, 0.5]));
    assert_abs_diff_eq!(c, DVector::from_vec(vec![0.5, 0.5]), epsilon = 1e-15);
}

#[test]
fn zero_state_is_a_fixed_point() {
    let net = random_net(5, 2, 3, 2, 11);
    let (h, x) = net.predict_step(&DVector::zeros(5), &one_hot(2, 1)).unwrap();
    assert_eq!(h, DVector::zeros(5));
    assert_eq!(x, DVector::zeros(2));
    let run = net
        .rollout(&DVector::zeros(5), &one_hot(2, 0), 1, None, &LearningRates::prediction(), true)
        .unwrap();
    assert_eq!(run.outputs, vec![DVector::zeros(2)]);
}

#[test]
fn invalid_configuration_is_rejected() {
    assert!(PcrnnParams::new(0, 2, 2, 5.0, &mut rng(0, 0)).is_err());
    assert!(PcrnnParams::new(4, 2, 2, 0.5, &mut rng(0, 0)).is_err());
    let net = random_net(4, 2, 2, 2, 0);
    assert!(net.predict_step(&DVector::zeros(3), &uniform_causes(2)).is_err());
    let mut bad = LearningRates::default();
    bad.alpha_h = f64::NAN;
    assert!(bad.validate().is_err());
}

/// Central-difference gradient of `loss` with respect to every entry of the
/// matrix selected by `pick`.
fn numeric_gradient(
    net: &PcrnnParams,
    pick: fn(&mut PcrnnParams) -> &mut DMatrix<f64>,
    loss: &dyn Fn(&PcrnnParams) -> f64,
) -> DMatrix<f64> {
    let mut probe = net.clone();
    let shape = pick(&mut probe).shape();
    let step = 1e-6;
    DMatrix::from_fn(shape.0, shape.1, |r, c| {
        let mut plus = net.clone();
        pick(&mut plus)[(r, c)] += step;
        let mut minus = net.clone();
        pick(&mut minus)[(r, c)] -= step;
        (loss(&plus) - loss(&minus)) / (2.0 * step)
    })
}

struct Snapshot {
    net: PcrnnParams,
    post: DVector<f64>,
    c: DVector<f64>,
    state: PcrnnState,
    target: DVector<f64>,
}

fn snapshot(form: GradientForm, seed: u64) -> Snapshot {
    let net = random_net(6, 3, 3, 2, seed);
    let post = random_vec(6, seed + 1);
    let c = normalize_causes(&random_vec(3, seed + 2).abs());
    let target = random_vec(2, seed + 3);
    let (h, x) = net.predict_step(&post, &c).unwrap();
    let rates = LearningRates {
        gradient_form: form,
        ..LearningRates::default()
    };
    let state = net.infer_step(&h, &x, &target, &post, &c, &rates, false).unwrap();
    Snapshot {
        net,
        post,
        c,
        state,
        target,
    }
}

fn update_of(snap: &Snapshot, form: GradientForm, pick: fn(&mut PcrnnParams) -> &mut DMatrix<f64>) -> DMatrix<f64> {
    let lambda = 1e-3;
    let rates = LearningRates {
        lambda_out: lambda,
        lambda_p: lambda,
        lambda_f: lambda,
        lambda_c: lambda,
        gradient_form: form,
        ..LearningRates::default()
    };
    let mut net = snap.net.clone();
    let s = &snap.state;
    net.apply_local_update(&snap.post, &snap.c, &s.h, &s.eps, &s.eps_h, &rates).unwrap();
    let mut before = snap.net.clone();
    (pick(&mut net).clone() - pick(&mut before).clone()) / (-lambda)
}

#[test]
fn readout_update_is_the_output_error_gradient() {
    let snap = snapshot(GradientForm::Printed, 20);
    let h = snap.state.h.clone();
    let target = snap.target.clone();
    let loss = move |net: &PcrnnParams| 0.5 * (&net.w_out * tanh(&h) - &target).norm_squared();
    let numeric = numeric_gradient(&snap.net, |n| &mut n.w_out, &loss);
    let analytic = update_of(&snap, GradientForm::Printed, |n| &mut n.w_out);
    assert!((analytic - numeric).amax() < 1e-5);
}

/// The recurrent updates descend `0.5 |h(W) - h*|^2` with the posterior held
/// fixed; the exact form matches it and the printed form is `tau` times it.
#[test]
fn recurrent_updates_match_numeric_gradients() {
    let picks: [(&str, fn(&mut PcrnnParams) -> &mut DMatrix<f64>); 3] = [
        ("w_p", |n| &mut n.w_p),
        ("w_f", |n| &mut n.w_f),
        ("w_c", |n| &mut n.w_c),
    ];
    let snap = snapshot(GradientForm::Printed, 30);
    let (post, c, h_post) = (snap.post.clone(), snap.c.clone(), snap.state.h_post.clone());
    let loss = move |net: &PcrnnParams| {
        let (h, _) = net.predict_step(&post, &c).unwrap();
        0.5 * (h - &h_post).norm_squared()
    };
    for (name, pick) in picks {
        let numeric = numeric_gradient(&snap.net, pick, &loss);
        let exact = update_of(&snap, GradientForm::Exact, pick);
        let printed = update_of(&snap, GradientForm::Printed, pick);
        assert!((&exact - &numeric).amax() < 1e-5, "{name} exact");
        assert!((printed - numeric * snap.net.tau).amax() < 1e-5, "{name} printed");
    }
}

#[test]
fn exact_hidden_correction_is_the_output_loss_gradient() {
    let snap = snapshot(GradientForm::Exact, 40);
    let h = snap.state.h.clone();
    let loss = |h: &DVector<f64>| 0.5 * (&snap.net.w_out * tanh(h) - &snap.target).norm_squared();
    let step = 1e-6;
    let numeric = DVector::from_fn(h.len(), |i, _| {
        let mut plus = h.clone();
        plus[i] += step;
        let mut minus = h.clone();
        minus[i] -= step;
        (loss(&plus) - loss(&minus)) / (2.0 * step)
    });
    let analytic = snap.state.eps_h.clone() / LearningRates::default().alpha_h;
    assert_abs_diff_eq!(analytic, numeric, epsilon = 1e-6);
}

#[test]
fn exact_cause_update_is_the_hidden_loss_gradient() {
    let net = random_net(6, 3, 3, 2, 50);
    let post = random_vec(6, 51);
    let c = DVector::from_vec(vec![0.2, 0.5, 0.3]);
    let target = random_vec(2, 52);
    let (h, x) = net.predict_step(&post, &c).unwrap();
    let rates = LearningRates {
        alpha_c: 1.0,
        gradient_form: GradientForm::Exact,
        ..LearningRates::default()
    };
    let s = net.infer_step(&h, &x, &target, &post, &c, &rates, false).unwrap();
    let loss = |cv: &DVector<f64>| 0.5 * (net.predict_step(&post, cv).unwrap().0 - &s.h_post).norm_squared();
    let step = 1e-6;
    let numeric = DVector::from_fn(3, |k, _| {
        let mut plus = c.clone();
        plus[k] += step;
        let mut minus = c.clone();
        minus[k] -= step;
        (loss(&plus) - loss(&minus)) / (2.0 * step)
    });
    assert_abs_diff_eq!(&c - &s.c, numeric, epsilon = 1e-6);
}

#[test]
fn zero_error_or_zero_rate_leaves_weights() {
    let net = random_net(6, 3, 3, 2, 60);
    let post = random_vec(6, 61);
    let c = uniform_causes(3);
    let (h, _) = net.predict_step(&post, &c).unwrap();
    let mut updated = net.clone();
    updated
        .apply_local_update(&post, &c, &h, &DVector::zeros(2), &DVector::zeros(6), &LearningRates::default())
        .unwrap();
    assert_eq!(updated, net);

    let mut updated = net.clone();
    let no_learning = LearningRates {
        lambda_out: 0.0,
        lambda_p: 0.0,
        lambda_f: 0.0,
        lambda_c: 0.0,
        ..LearningRates::default()
    };
    updated
        .apply_local_update(&post, &c, &h, &random_vec(2, 62), &random_vec(6, 63), &no_learning)
        .unwrap();
    assert_eq!(updated, net);
}

#[test]
fn training_is_deterministic() {
    let targets: Vec<_> = (0..20).map(|t| DVector::from_vec(vec![(t as f64 * 0.3).sin(), 0.1])).collect();
    let run = || {
        let mut net = random_net(8, 2, 4, 2, 70);
        let h0 = random_vec(8, 71);
        for _ in 0..5 {
            net.train_sequence(&h0, &one_hot(2, 1), &targets, &LearningRates::default(), true)
                .unwrap();
        }
        net
    };
    assert_eq!(run(), run());
}

#[test]
fn training_reduces_error_on_one_sequence() {
    let targets: Vec<_> = (0..30)
        .map(|t| DVector::from_vec(vec![(t as f64 * 0.2).sin(), (t as f64 * 0.2).cos() - 1.0]))
        .collect();
    let mut net = random_net(16, 1, 8, 2, 80);
    let h0 = DVector::zeros(16);
    let rates = LearningRates {
        lambda_out: 0.01,
        ..LearningRates::default()
    };
    let first = net.train_sequence(&h0, &one_hot(1, 0), &targets, &rates, true).unwrap();
    let mut last = first;
    for _ in 0..300 {
        last = net.train_sequence(&h0, &one_hot(1, 0), &targets, &rates, true).unwrap();
    }
    assert!(last < 0.5 * first, "error {first} -> {last}");
}

#[test]
fn single_class_inference_stays_put() {
    let net = random_net(6, 1, 3, 2, 90);
    let targets: Vec<_> = (0..10).map(|t| DVector::from_element(2, t as f64 * 0.1)).collect();
    let inf = net
        .infer_causes(&DVector::zeros(6), &targets, 5, &LearningRates::default())
        .unwrap();
    assert_eq!(inf.c_final, DVector::from_element(1, 1.0));
}

#[test]
fn no_cause_rate_keeps_uniform_causes() {
    let net = random_net(6, 4, 3, 2, 91);
    let targets: Vec<_> = (0..10).map(|t| DVector::from_element(2, t as f64 * 0.1)).collect();
    let rates = LearningRates::default().with_inference(0.1, 0.0);
    let inf = net.infer_causes(&DVector::zeros(6), &targets, 3, &rates).unwrap();
    assert_eq!(inf.history.len(), 3);
    assert_abs_diff_eq!(inf.c_final, uniform_causes(4), epsilon = 1e-15);
}

proptest! {
    #[test]
    fn factored_equals_dense(n in 1usize..=6, p in 1usize..=3, d in 0usize..=3, seed in 0u64..1000) {
        let net = random_net(n, p, d, 2, seed);
        let post = random_vec(n, seed + 1);
        let c = random_vec(p, seed + 2);
        let (h, _) = net.predict_step(&post, &c).unwrap();
        prop_assert!((h - dense_prediction(&net, &post, &c)).amax() <= 1e-10);
    }

    #[test]
    fn causes_stay_on_simplex(values in proptest::collection::vec(-3.0..3.0f64, 1..8)) {
        let c = normalize_causes(&DVector::from_vec(values));
        prop_assert!((c.sum() - 1.0).abs() < 1e-12);
        prop_assert!(c.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn inference_keeps_causes_on_simplex(seed in 0u64..500, alpha_c in 0.0..1.0f64) {
        let net = random_net(6, 3, 3, 2, seed);
        let targets: Vec<_> = (0..8).map(|t| random_vec(2, seed * 31 + t)).collect();
        let rates = LearningRates::default().with_inference(0.1, alpha_c);
        let run = net.rollout(&random_vec(6, seed), &uniform_causes(3), 8, Some(&targets), &rates, true).unwrap();
        for s in &run.states {
            prop_assert!((s.c.sum() - 1.0).abs() < 1e-12);
            prop_assert!(s.c.iter().all(|v| *v >= 0.0));
        }
    }
}
