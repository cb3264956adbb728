//! Times one batched forward + backward pass of the Q-network.

use std::time::Instant;

use sketchnet::{Activation, Architecture, Input, Network};

fn main() {
    let batch: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(128);
    let net = Network::<f32>::init(Architecture::q_network(Activation::Linear), 1);
    let global: Vec<f32> = (0..batch * 4 * 84 * 84).map(|i| (i % 3) as f32 * 0.5).collect();
    let local = vec![0.5f32; batch * 121];
    let input = Input { batch, global: &global, local: &local };
    let grad = vec![0.01f32; batch * 242];
    for round in 0..3 {
        let t = Instant::now();
        let cache = net.forward(&input).unwrap();
        let fwd = t.elapsed();
        let _ = net.backward(&cache, &grad).unwrap();
        println!("round {round}: forward {:?}, forward+backward {:?}", fwd, t.elapsed());
    }
}
