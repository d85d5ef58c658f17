use mazelab_nn::{optimize_step, Graph, ModelParams, OptimConfig, ParamSet, Tensor};
use mazelab_nn::{Gradients, Linear};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn softmax_and_entropy(logits: &[f32]) -> (Vec<f32>, f32) {
    let ps = ParamSet::<f32>::new();
    let mut g = Graph::new(&ps);
    let x = g.input(Tensor::vector(logits.to_vec()));
    let lp = g.log_softmax(x);
    let p = g.exp(lp);
    let plp = g.mul(p, lp);
    let s = g.sum(plp);
    let h = g.scale(s, -1.0);
    (g.value(p).data().to_vec(), g.value(h).data()[0])
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-30.0f32..30.0, 5)) {
        let (p, _) = softmax_and_entropy(&logits);
        let total: f32 = p.iter().sum();
        // log-domain rounding grows with the logsumexp magnitude
        let scale = logits.iter().fold(1.0f32, |m, &v| m.max(v.abs()));
        prop_assert!((total - 1.0).abs() <= 8.0 * f32::EPSILON * scale, "sum {}", total);
        prop_assert!(p.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn entropy_within_bounds(logits in prop::collection::vec(-30.0f32..30.0, 5)) {
        let (_, h) = softmax_and_entropy(&logits);
        prop_assert!(h >= -1e-6 && h <= 5f32.ln() + 1e-6, "entropy {}", h);
    }
}

#[test]
fn uniform_entropy_is_ln5() {
    let (_, h) = softmax_and_entropy(&[0.3; 5]);
    assert!((h - 5f32.ln()).abs() <= 1e-6);
}

#[test]
fn quadratic_bowl_descends_monotonically_after_warmup() {
    // loss = 0.5 * |A w - y|^2 for a fixed random linear model
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut ps = ParamSet::<f32>::new();
    let fc = Linear::new(&mut ps, "fc", 4, 3, &mut rng);
    let mut model = ModelParams::new(ps);
    let xs: Vec<[f32; 4]> = (0..8).map(|i| [1.0, i as f32 * 0.1, -(i as f32) * 0.2, 0.5]).collect();
    let ys: Vec<[f32; 3]> = xs.iter().map(|x| [x[0] - x[1], 2.0 * x[2], x[3] + x[1]]).collect();
    let cfg = OptimConfig {
        learning_rate: 2e-3,
        ..OptimConfig::default()
    };
    let loss_and_grad = |m: &ModelParams| {
        let mut g = Graph::new(&m.params);
        let mut terms = Vec::new();
        for (x, y) in xs.iter().zip(&ys) {
            let xi = g.input(Tensor::vector(x.to_vec()));
            let yi = g.input(Tensor::vector(y.to_vec()));
            let p = fc.forward(&mut g, xi).unwrap();
            let d = g.sub(p, yi);
            let sq = g.square(d);
            terms.push(g.sum(sq));
        }
        let total = g.add_n(&terms);
        let l = g.scale(total, 0.5);
        (g.value(l).data()[0], g.backward(l, 1.0))
    };
    let mut losses = Vec::new();
    for _ in 0..200 {
        let (l, gr) = loss_and_grad(&model);
        losses.push(l);
        model = optimize_step(&model, &gr, &cfg).unwrap();
    }
    assert_eq!(model.version(), 200);
    for w in losses[10..].windows(2) {
        assert!(w[1] < w[0], "loss rose: {} -> {}", w[0], w[1]);
    }
    assert!(losses[199] < 0.5 * losses[0]);
}

#[test]
fn sgd_two_steps_equal_one_summed_step_on_linear_model() {
    let mut ps = ParamSet::<f32>::new();
    let id = ps.add("w", Tensor::vector(vec![0.5, -1.5, 2.0]));
    let m = ModelParams::new(ps);
    let mut g1 = Gradients::zeros_like(&m.params);
    *g1.get_mut(id) = Tensor::vector(vec![0.1, 0.2, -0.3]);
    let mut g2 = Gradients::zeros_like(&m.params);
    *g2.get_mut(id) = Tensor::vector(vec![-0.4, 0.05, 0.6]);
    let cfg = OptimConfig::sgd(0.1);
    let two = optimize_step(&optimize_step(&m, &g1, &cfg).unwrap(), &g2, &cfg).unwrap();
    let mut sum = g1.clone();
    sum.add(&g2);
    let one = optimize_step(&m, &sum, &cfg).unwrap();
    for (a, b) in two.params.get(id).data().iter().zip(one.params.get(id).data()) {
        assert!((a - b).abs() < 1e-6);
    }
}
