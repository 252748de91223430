//! Central finite-difference oracle for the autodiff engine. Independent of
//! `Graph::backward`: it only ever evaluates forward passes.

use ptclab::tensor::{Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;

/// Builds the op under test from fresh leaves; returns its output.
pub type Build<'a> = dyn Fn(&mut Graph<f64>, &[Var]) -> Var + 'a;

fn readout(g: &mut Graph<f64>, out: Var, weights: &[f64]) -> Var {
    let w = g.constant(Tensor::new(g.shape(out).to_vec(), weights.to_vec()).unwrap());
    let p = g.mul(out, w).unwrap();
    g.sum(p).unwrap()
}

fn forward_value(inputs: &[Tensor<f64>], build: &Build, weights: &[f64]) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = build(&mut g, &vars);
    let r = readout(&mut g, out, weights);
    g.value(r).item().unwrap()
}

/// Worst norm-wise relative error `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)`
/// over all inputs, for a random linear readout of the op's output.
pub fn max_relative_error(inputs: &[Tensor<f64>], build: &Build, seed: u64) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = build(&mut g, &vars);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
    let weights: Vec<f64> = (0..g.value(out).numel()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let r = readout(&mut g, out, &weights);
    g.backward(r).unwrap();

    let mut worst: f64 = 0.0;
    for (i, v) in vars.iter().enumerate() {
        let analytic: Vec<f64> = g
            .grad(*v)
            .map(|s| s.to_vec())
            .unwrap_or_else(|| vec![0.0; inputs[i].numel()]);
        let mut numeric = vec![0.0; inputs[i].numel()];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += STEP;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= STEP;
            *slot = (forward_value(&plus, build, &weights) - forward_value(&minus, build, &weights)) / (2.0 * STEP);
        }
        let diff = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        let scale = na.max(nn);
        let rel = if scale < 1e-12 { diff } else { diff / scale };
        worst = worst.max(rel);
    }
    worst
}

/// Uniform values in `[-1, 1]` kept at least `gap` away from every kink in `kinks`.
pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng, kinks: &[f64], gap: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| loop {
        let v: f64 = rng.random_range(-1.0..1.0);
        if kinks.iter().all(|k| (v - k).abs() > gap) {
            break v;
        }
    })
}

/// One named op family and its randomized trial generator.
pub struct OpCase {
    pub name: &'static str,
    pub trial: fn(&mut ChaCha8Rng) -> (Vec<Tensor<f64>>, Box<Build<'static>>),
}

pub fn op_cases() -> Vec<OpCase> {
    vec![
        OpCase {
            name: "conv2d",
            trial: |rng| {
                let n = rng.random_range(1..=2);
                let c = rng.random_range(1..=3);
                let k = rng.random_range(1..=3);
                let ks = if rng.random_bool(0.3) { 1 } else { 3 };
                let h = rng.random_range(3..=6);
                let w = rng.random_range(3..=6);
                let stride = rng.random_range(1..=2);
                let x = random_tensor(&[n, c, h, w], rng, &[], 0.0);
                let kern = random_tensor(&[k, c, ks, ks], rng, &[], 0.0);
                let pad = (ks - 1) / 2;
                (vec![x, kern], Box::new(move |g, v| g.conv2d(v[0], v[1], stride, pad).unwrap()))
            },
        },
        OpCase {
            name: "channel_bias",
            trial: |rng| {
                let n = rng.random_range(1..=2);
                let c = rng.random_range(1..=4);
                let shape = if rng.random_bool(0.5) { vec![n, c, rng.random_range(1..=4), rng.random_range(1..=4)] } else { vec![n, c] };
                let x = random_tensor(&shape, rng, &[], 0.0);
                let b = random_tensor(&[c], rng, &[], 0.0);
                (vec![x, b], Box::new(|g, v| g.channel_bias(v[0], v[1]).unwrap()))
            },
        },
        OpCase {
            name: "relu",
            trial: |rng| {
                let x = random_tensor(&[rng.random_range(1..=3), rng.random_range(1..=8)], rng, &[0.0], 1e-3);
                (vec![x], Box::new(|g, v| g.relu(v[0]).unwrap()))
            },
        },
        OpCase {
            name: "leaky_relu",
            trial: |rng| {
                let x = random_tensor(&[rng.random_range(1..=3), rng.random_range(1..=8)], rng, &[0.0], 1e-3);
                (vec![x], Box::new(|g, v| g.leaky_relu(v[0], 0.1).unwrap()))
            },
        },
        OpCase {
            name: "sigmoid",
            trial: |rng| {
                let x = random_tensor(&[rng.random_range(1..=3), rng.random_range(1..=8)], rng, &[], 0.0);
                let x = Tensor::from_fn(x.shape(), |i| x.data()[i] * 6.0);
                (vec![x], Box::new(|g, v| g.sigmoid(v[0]).unwrap()))
            },
        },
        OpCase {
            name: "add",
            trial: |rng| {
                let shape = [rng.random_range(1..=3), rng.random_range(1..=5)];
                let a = random_tensor(&shape, rng, &[], 0.0);
                let b = random_tensor(&shape, rng, &[], 0.0);
                (vec![a, b], Box::new(|g, v| g.add(v[0], v[1]).unwrap()))
            },
        },
        OpCase {
            name: "mul",
            trial: |rng| {
                let shape = [rng.random_range(1..=3), rng.random_range(1..=5)];
                let a = random_tensor(&shape, rng, &[], 0.0);
                let b = random_tensor(&shape, rng, &[], 0.0);
                (vec![a, b], Box::new(|g, v| g.mul(v[0], v[1]).unwrap()))
            },
        },
        OpCase {
            name: "scale",
            trial: |rng| {
                let k: f64 = rng.random_range(-3.0..3.0);
                let a = random_tensor(&[rng.random_range(1..=6)], rng, &[], 0.0);
                (vec![a], Box::new(move |g, v| g.scale(v[0], k).unwrap()))
            },
        },
        OpCase {
            name: "concat_channels",
            trial: |rng| {
                let (n, h, w) = (rng.random_range(1..=2), rng.random_range(1..=4), rng.random_range(1..=4));
                let a = random_tensor(&[n, rng.random_range(1..=3), h, w], rng, &[], 0.0);
                let b = random_tensor(&[n, rng.random_range(1..=3), h, w], rng, &[], 0.0);
                (vec![a, b], Box::new(|g, v| g.concat_channels(&[v[0], v[1], v[0]]).unwrap()))
            },
        },
        OpCase {
            name: "concat_rows",
            trial: |rng| {
                let d = rng.random_range(1..=4);
                let a = random_tensor(&[rng.random_range(1..=3), d], rng, &[], 0.0);
                let b = random_tensor(&[rng.random_range(1..=3), d], rng, &[], 0.0);
                (vec![a, b], Box::new(|g, v| g.concat(&[v[0], v[1]], 0).unwrap()))
            },
        },
        OpCase {
            name: "down2",
            trial: |rng| {
                let x = random_tensor(&[rng.random_range(1..=2), rng.random_range(1..=2), 2 * rng.random_range(1..=3), 2 * rng.random_range(1..=3)], rng, &[], 0.0);
                (vec![x], Box::new(|g, v| g.down2(v[0]).unwrap()))
            },
        },
        OpCase {
            name: "up2",
            trial: |rng| {
                let x = random_tensor(&[rng.random_range(1..=2), rng.random_range(1..=2), rng.random_range(1..=4), rng.random_range(1..=4)], rng, &[], 0.0);
                (vec![x], Box::new(|g, v| g.up2(v[0]).unwrap()))
            },
        },
        OpCase {
            name: "linear",
            trial: |rng| {
                let (n, din, dout) = (rng.random_range(1..=4), rng.random_range(1..=5), rng.random_range(1..=5));
                let x = random_tensor(&[n, din], rng, &[], 0.0);
                let w = random_tensor(&[dout, din], rng, &[], 0.0);
                let b = random_tensor(&[dout], rng, &[], 0.0);
                (vec![x, w, b], Box::new(|g, v| g.linear(v[0], v[1], v[2]).unwrap()))
            },
        },
        OpCase {
            name: "mean_rows",
            trial: |rng| {
                let x = random_tensor(&[rng.random_range(1..=6), rng.random_range(1..=4)], rng, &[], 0.0);
                (vec![x], Box::new(|g, v| g.mean_rows(v[0]).unwrap()))
            },
        },
        OpCase {
            name: "broadcast_spatial",
            trial: |rng| {
                let x = random_tensor(&[rng.random_range(1..=2), rng.random_range(1..=3)], rng, &[], 0.0);
                let (h, w) = (rng.random_range(1..=3), rng.random_range(1..=3));
                (vec![x], Box::new(move |g, v| g.broadcast_spatial(v[0], h, w).unwrap()))
            },
        },
        OpCase {
            name: "smooth_l1",
            trial: |rng| {
                let n = rng.random_range(2..=10);
                // Residuals stay clear of the |x| = 1 switch.
                let target = Tensor::from_fn(&[n], |i| if i % 3 == 0 { 0.0 } else { 10.0 + i as f64 });
                let pred = Tensor::from_fn(&[n], |i| {
                    let r = loop {
                        let r: f64 = rng.random_range(-3.0..3.0);
                        if (r.abs() - 1.0).abs() > 1e-3 {
                            break r;
                        }
                    };
                    target.data()[i] + r
                });
                (vec![pred], Box::new(move |g, v| g.masked_smooth_l1(v[0], &target).unwrap()))
            },
        },
        OpCase {
            name: "bce_with_logits",
            trial: |rng| {
                let n = rng.random_range(1..=8);
                let target = Tensor::from_fn(&[n], |i| (i % 2) as f64);
                let z = Tensor::from_fn(&[n], |_| rng.random_range(-4.0..4.0));
                (vec![z], Box::new(move |g, v| g.bce_with_logits(v[0], &target).unwrap()))
            },
        },
    ]
}

/// Runs `trials` seeded trials of every op case; returns (name, worst error) pairs.
pub fn run_suite(trials: u64) -> Vec<(&'static str, f64)> {
    op_cases()
        .into_iter()
        .map(|case| {
            let worst = (0..trials)
                .map(|seed| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed * 7919 + case.name.len() as u64);
                    let (inputs, build) = (case.trial)(&mut rng);
                    max_relative_error(&inputs, build.as_ref(), seed)
                })
                .fold(0.0, f64::max);
            (case.name, worst)
        })
        .collect()
}
