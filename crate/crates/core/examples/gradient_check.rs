//! Backpropagated gradients of a small double-precision network against
//! central finite differences.
//!
//! cargo run --example gradient_check

use comprint::nn::{BatchNormLayer, ConvLayer, Layer, Mode, Network, Tensor4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn loss(net: &mut Network<f64>, x: &Tensor4<f64>, r: &[f64]) -> f64 {
    let y = net.forward(x, Mode::Train).unwrap();
    y.data().iter().zip(r).map(|(a, b)| a * b).sum()
}

fn shift(net: &mut Network<f64>, block: usize, i: usize, delta: f64) {
    let mut k = 0;
    net.visit_params(|_, p, _| {
        if k == block {
            p[i] += delta;
        }
        k += 1;
    });
}

fn main() -> comprint::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut net = Network::new(vec![
        Layer::Conv(ConvLayer::kaiming(1, 4, 3, true, &mut rng)?),
        Layer::Relu,
        Layer::Conv(ConvLayer::kaiming(4, 4, 3, false, &mut rng)?),
        Layer::BatchNorm(BatchNormLayer::new(4, 0.9, 1e-5)?),
        Layer::Relu,
        Layer::Conv(ConvLayer::kaiming(4, 1, 3, true, &mut rng)?),
    ]);
    let x = Tensor4::from_vec([2, 1, 6, 6], (0..72).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let r: Vec<f64> = (0..72).map(|_| rng.random_range(-1.0..1.0)).collect();

    net.forward(&x, Mode::Train)?;
    net.backward(&Tensor4::from_vec([2, 1, 6, 6], r.clone())?)?;
    let mut analytic = Vec::new();
    net.visit_params(|name, _, g| analytic.push((name.to_string(), g.to_vec())));

    let h = 1e-5;
    for (block, (name, grads)) in analytic.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for (i, &g) in grads.iter().enumerate() {
            shift(&mut net, block, i, h);
            let up = loss(&mut net, &x, &r);
            shift(&mut net, block, i, -2.0 * h);
            let down = loss(&mut net, &x, &r);
            shift(&mut net, block, i, h);
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max((g - numeric).abs() / g.abs().max(numeric.abs()).max(1e-6));
        }
        println!("{name:<16} {:>4} values, worst relative error {worst:.2e}", grads.len());
    }
    Ok(())
}
