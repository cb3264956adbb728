//! Analytic gradients against central finite differences in f64.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sketchnet::{cross_entropy_loss, Activation, Architecture, Input, Network};

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

struct Probe {
    global: Vec<f64>,
    local: Vec<f64>,
    batch: usize,
    weights: Vec<f64>,
}

/// Weighted output sum, or `None` if the ReLU pattern differs from `mask`.
fn loss(net: &Network<f64>, p: &Probe, mask: &[bool]) -> Option<f64> {
    let cache = net
        .forward(&Input {
            batch: p.batch,
            global: &p.global,
            local: &p.local,
        })
        .unwrap();
    (cache.relu_mask(net.architecture()) == mask).then(|| cache.output().iter().zip(&p.weights).map(|(o, w)| o * w).sum())
}

fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

fn check(arch: Architecture, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::<f64>::init(arch.clone(), seed);
    // Nonzero biases so ReLU units are not all sitting at the same kink.
    for t in (1..net.tensors().len()).step_by(2) {
        for i in 0..net.tensors()[t].len() {
            net.set_param(t, i, rng.gen_range(-0.1..0.1));
        }
    }
    let batch = 2;
    let probe = Probe {
        global: (0..batch * arch.global_input_len()).map(|_| rng.gen_range(0.0..1.0)).collect(),
        local: (0..batch * arch.local_input_len()).map(|_| f64::from(rng.gen_range(0..2u8))).collect(),
        batch,
        weights: (0..batch * arch.outputs()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    };
    let cache = net
        .forward(&Input {
            batch,
            global: &probe.global,
            local: &probe.local,
        })
        .unwrap();
    let mask = cache.relu_mask(&arch);
    let grads = net.backward(&cache, &probe.weights).unwrap();
    let names = arch.tensor_shapes();
    for (t, shape) in names.iter().enumerate() {
        let len = net.tensors()[t].len();
        let probes = if shape.name.ends_with("bias") { 4 } else { 10 };
        let mut done = 0;
        while done < probes {
            let i = rng.gen_range(0..len);
            let orig = net.get_param(t, i);
            net.set_param(t, i, orig + H);
            let plus = loss(&net, &probe, &mask);
            net.set_param(t, i, orig - H);
            let minus = loss(&net, &probe, &mask);
            net.set_param(t, i, orig);
            // A ReLU unit changed sides within ±H; the central difference is meaningless there.
            let (Some(plus), Some(minus)) = (plus, minus) else { continue };
            done += 1;
            let numeric = (plus - minus) / (2.0 * H);
            let analytic = grads.tensors[t][i];
            let err = relative_error(analytic, numeric);
            assert!(
                err < TOL,
                "{}[{i}]: analytic {analytic:e} numeric {numeric:e} rel err {err:e}",
                shape.name
            );
        }
    }
}

#[test]
fn q_network_with_linear_fc1() {
    check(Architecture::q_network(Activation::Linear), 11);
}

#[test]
fn q_network_with_relu_fc1() {
    check(Architecture::q_network(Activation::Relu), 12);
}

#[test]
fn classifier() {
    check(Architecture::classifier(8), 13);
}

#[test]
fn cross_entropy_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let logits: Vec<f64> = (0..242).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let (_, grad) = cross_entropy_loss(&logits, 100).unwrap();
    for i in [0, 5, 100, 241] {
        let mut up = logits.clone();
        up[i] += H;
        let mut down = logits.clone();
        down[i] -= H;
        let numeric =
            (cross_entropy_loss(&up, 100).unwrap().0 - cross_entropy_loss(&down, 100).unwrap().0) / (2.0 * H);
        assert!(relative_error(grad[i], numeric) < TOL);
    }
}
