//! Backpropagation against central finite differences on a small network.
//!
//! cargo run --release --example gradient_check

use icontrain::nn::{Architecture, Network, Patch, PARAM_NAMES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn loss(net: &Network<f64>, patch: &Patch, target: [f64; 2]) -> f64 {
    let p = net.forward(patch).unwrap();
    -(target[0] * p[0].ln() + target[1] * p[1].ln())
}

fn main() -> anyhow::Result<()> {
    let arch = Architecture { patch_size: 21, conv1_filters: 4, conv2_filters: 4, fc_units: 10 };
    let mut net = Network::<f64>::new(arch, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let patch = Patch::new(21, (0..21 * 21).map(|_| rng.random_range(0.0..1.0)).collect())?;
    let target = [0.0, 1.0];
    let (grads, value) = net.backward(&patch, target)?;
    println!("loss {value:.6}");

    let h = 1e-6;
    for (k, name) in PARAM_NAMES.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for _ in 0..10 {
            let j = rng.random_range(0..grads.arrays()[k].len());
            let orig = net.params.arrays()[k].data()[j];
            net.params.arrays_mut()[k].data_mut()[j] = orig + h;
            let up = loss(&net, &patch, target);
            net.params.arrays_mut()[k].data_mut()[j] = orig - h;
            let down = loss(&net, &patch, target);
            net.params.arrays_mut()[k].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads.arrays()[k].data()[j];
            worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7));
        }
        println!("{name:>14}: max relative error {worst:.2e} over 10 coordinates");
    }
    Ok(())
}
