mod common;

use common::gradcheck::{max_relative_error, random_tensor, run_suite};
use ptclab::tensor::{Graph, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-6;

#[test]
fn every_op_passes_finite_differences_over_100_trials() {
    for (name, worst) in run_suite(100) {
        assert!(worst < TOL, "{name}: worst relative error {worst:e}");
    }
}

#[test]
fn conv_example_shape() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = random_tensor(&[1, 2, 5, 5], &mut rng, &[], 0.0);
    let k = random_tensor(&[3, 2, 3, 3], &mut rng, &[], 0.0);
    let err = max_relative_error(&[x, k], &|g: &mut Graph<f64>, v: &[Var]| g.conv2d(v[0], v[1], 1, 1).unwrap(), 3);
    assert!(err < TOL, "{err:e}");
}

#[test]
fn resample_example_shape() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = random_tensor(&[1, 1, 4, 4], &mut rng, &[], 0.0);
    let down = max_relative_error(std::slice::from_ref(&x), &|g: &mut Graph<f64>, v: &[Var]| g.down2(v[0]).unwrap(), 4);
    let up = max_relative_error(&[x], &|g: &mut Graph<f64>, v: &[Var]| g.up2(v[0]).unwrap(), 5);
    assert!(down < TOL && up < TOL, "{down:e} {up:e}");
}

#[test]
fn linear_example_shape() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = random_tensor(&[2, 3], &mut rng, &[], 0.0);
    let w = random_tensor(&[4, 3], &mut rng, &[], 0.0);
    let b = random_tensor(&[4], &mut rng, &[], 0.0);
    let err = max_relative_error(&[x, w, b], &|g: &mut Graph<f64>, v: &[Var]| g.linear(v[0], v[1], v[2]).unwrap(), 6);
    assert!(err < TOL, "{err:e}");
}

#[test]
fn sigmoid_relu_composite() {
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_tensor(&[7], &mut rng, &[0.0], 1e-3);
        let err = max_relative_error(
            &[x],
            &|g: &mut Graph<f64>, v: &[Var]| {
                let d = g.scale(v[0], 2.0).unwrap();
                let r = g.relu(d).unwrap();
                g.sigmoid(r).unwrap()
            },
            seed,
        );
        assert!(err < TOL, "seed {seed}: {err:e}");
    }
}

/// One tensor feeding k consumers accumulates the sum of the k single-consumer gradients.
#[test]
fn fan_out_gradient_is_sum_of_single_consumer_runs() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let x = random_tensor(&[5], &mut rng, &[0.0], 1e-3);
    let consumers: [fn(&mut Graph<f64>, Var) -> Var; 3] = [
        |g, x| g.sigmoid(x).unwrap(),
        |g, x| g.relu(x).unwrap(),
        |g, x| g.scale(x, -1.5).unwrap(),
    ];
    let single: Vec<Vec<f64>> = consumers
        .iter()
        .map(|f| {
            let mut g = Graph::new();
            let v = g.param(x.clone());
            let y = f(&mut g, v);
            let s = g.sum(y).unwrap();
            g.backward(s).unwrap();
            g.grad(v).unwrap().to_vec()
        })
        .collect();
    let mut g = Graph::new();
    let v = g.param(x.clone());
    let ys: Vec<Var> = consumers.iter().map(|f| f(&mut g, v)).collect();
    let mut total = g.sum(ys[0]).unwrap();
    for &y in &ys[1..] {
        let s = g.sum(y).unwrap();
        total = g.add(total, s).unwrap();
    }
    g.backward(total).unwrap();
    let fused = g.grad(v).unwrap();
    for i in 0..5 {
        let expect: f64 = single.iter().map(|s| s[i]).sum();
        assert!((fused[i] - expect).abs() < 1e-15);
    }
}

#[test]
fn identical_graphs_are_bitwise_reproducible() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let x = random_tensor(&[2, 3, 6, 6], &mut rng, &[], 0.0).cast::<f32>();
        let k = random_tensor(&[4, 3, 3, 3], &mut rng, &[], 0.0).cast::<f32>();
        let mut g = Graph::<f32>::new();
        let xv = g.param(x);
        let kv = g.param(k);
        let y = g.conv2d(xv, kv, 2, 1).unwrap();
        let y = g.sigmoid(y).unwrap();
        let s = g.sum(y).unwrap();
        g.backward(s).unwrap();
        (g.value(y).clone(), g.grad(xv).unwrap().to_vec(), g.grad(kv).unwrap().to_vec())
    };
    let (a, b) = (run(), run());
    assert_eq!(a.0.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.0.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert!(a.1.iter().zip(&b.1).all(|(p, q)| p.to_bits() == q.to_bits()));
    assert!(a.2.iter().zip(&b.2).all(|(p, q)| p.to_bits() == q.to_bits()));
}

#[test]
fn forward_on_bounded_inputs_is_finite() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = Tensor::from_fn(&[1, 2, 4, 4], |i| (i as f64 * 37.0) % 1999.0 - 999.0);
    let k = random_tensor(&[2, 2, 3, 3], &mut rng, &[], 0.0);
    let mut g = Graph::<f64>::new();
    let xv = g.constant(x);
    let kv = g.constant(k);
    let y = g.conv2d(xv, kv, 1, 1).unwrap();
    let z = g.sigmoid(y).unwrap();
    let t = Tensor::from_fn(&[1, 2, 4, 4], |i| (i % 2) as f64);
    let b = g.bce_with_logits(y, &t).unwrap();
    assert!(g.value(z).is_finite() && g.value(b).is_finite());
}

#[test]
fn injection_mlp_passes_finite_differences() {
    use ptclab::geometry::Point3;
    use ptclab::model::{Model, NetworkConfig};

    let cfg = NetworkConfig {
        input_channels: 2,
        encoder_channels: vec![2],
        decoder_channels: vec![1],
        mask_decoder_channels: vec![1],
        injection_channels: vec![5, 4, 3],
        pyramid_scales: vec![1],
        use_injection: true,
        ..NetworkConfig::desk()
    };
    let model = Model::new(cfg).unwrap();
    let specs = model.param_specs().to_vec();
    let first = specs.iter().position(|s| s.name.starts_with("inject.")).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let inputs: Vec<Tensor<f64>> = specs[first..].iter().map(|s| random_tensor(&s.shape, &mut rng, &[], 0.0)).collect();
    let points = vec![
        vec![Point3::new(1.0, 0.4, 12.0), Point3::new(-3.0, 0.6, 30.0), Point3::new(0.5, 0.5, 55.0)],
        vec![],
        vec![Point3::new(8.0, 0.2, 70.0)],
    ];
    let build = |g: &mut Graph<f64>, v: &[Var]| {
        let mut vars: Vec<Var> = specs[..first].iter().map(|s| g.constant(Tensor::zeros(&s.shape))).collect();
        vars.extend_from_slice(v);
        model.inject(g, &vars, &points).unwrap()
    };
    let err = max_relative_error(&inputs, &build, 9);
    assert!(err < TOL, "{err:e}");
}
