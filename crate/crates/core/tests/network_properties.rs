use antiqa_core::net::{self, ArchConfig, Mode};
use antiqa_core::rng;
use antiqa_core::tensor::{Tape, Tensor};
use proptest::prelude::*;

fn narrow() -> ArchConfig {
    ArchConfig {
        input_size: 16,
        stage_channels: vec![4, 8, 16],
        se_reduction: 2,
        proj_dim: 4,
        mlp_dims: vec![12, 8, 4, 1],
        groupnorm_groups: 2,
        ..ArchConfig::default()
    }
}

fn batch(seed: u64, n: usize) -> Tensor {
    let mut r = rng::seeded(seed);
    Tensor::from_fn(&[n, 2, 16, 16], |_| rand::Rng::random::<f64>(&mut r))
}

fn crop(b: &Tensor, i: usize) -> Tensor {
    let per = 2 * 16 * 16;
    Tensor::new(vec![1, 2, 16, 16], b.data()[i * per..(i + 1) * per].to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn eval_is_deterministic_and_batch_independent(seed in any::<u64>(), n in 2usize..5) {
        let a = narrow();
        let p = net::build(&a, &mut rng::seeded(seed)).unwrap();
        let b = batch(seed ^ 1, n);
        let all = net::predict(&a, &p, b.clone()).unwrap();
        prop_assert_eq!(&all, &net::predict(&a, &p, b.clone()).unwrap());
        for i in 0..n {
            let alone = net::predict(&a, &p, crop(&b, i)).unwrap()[0];
            prop_assert!((alone - all[i]).abs() < 1e-9, "{} vs {}", alone, all[i]);
        }
    }

    #[test]
    fn se_gates_open_interval(seed in any::<u64>()) {
        let a = narrow();
        let p = net::build(&a, &mut rng::seeded(seed)).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(batch(seed, 2));
        let out = net::forward(&mut tape, &a, &p, x, Mode::Eval, &mut rng::seeded(0)).unwrap();
        prop_assert_eq!(out.se_gates.len(), a.stage_channels.len());
        for g in &out.se_gates {
            prop_assert!(tape.value(*g).iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }
}

#[test]
fn every_parameter_receives_gradient() {
    let a = narrow();
    let p = net::build(&a, &mut rng::seeded(7)).unwrap();
    let mut tape = Tape::new();
    let x = tape.constant(batch(8, 4));
    let out = net::forward(&mut tape, &a, &p, x, Mode::Train, &mut rng::seeded(9)).unwrap();
    let loss = tape.mse_loss(out.scores, &[0.5, 2.0, 3.5, 4.5]).unwrap();
    tape.backward(loss).unwrap();
    let grads = out.params.gradients(&tape, &p);
    for ((name, _), g) in p.iter().zip(&grads) {
        assert!(g.iter().all(|v| v.is_finite()), "{name} has non-finite gradient");
        assert!(g.iter().any(|&v| v != 0.0), "{name} has an all-zero gradient");
    }
}

#[test]
fn default_architecture_fits_budget() {
    let a = ArchConfig::default();
    let p = net::build(&a, &mut rng::seeded(0)).unwrap();
    let params = net::count_params(&p);
    let flops = net::estimate_flops(&a).unwrap();
    assert!(params <= 3_800_000, "{params} parameters");
    assert!(flops <= 31_500_000_000, "{flops} FLOPs");
}
