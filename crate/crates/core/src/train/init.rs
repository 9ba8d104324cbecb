use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nn::{Graph, Layer};
use crate::numerics::{Real, Tensor};

/// Glorot-uniform convolution weights, zero biases, BatchNorm `gamma = 1`,
/// `beta = 0` and default running statistics. Parameters are drawn in node
/// order from one generator, so a seed fixes every value.
pub fn init_params<T: Real>(graph: &mut Graph<T>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for node in graph.nodes_mut() {
        match &mut node.layer {
            Layer::Conv2d(c) | Layer::FinalConv(c) => {
                let rf = c.kernel * c.kernel;
                glorot(&mut c.weight, c.c_in * rf, c.c_out * rf, &mut rng);
                c.bias.data_mut().fill(T::zero());
            }
            Layer::ConvTranspose2d(c) => {
                glorot(&mut c.weight, c.c_in * 4, c.c_out * 4, &mut rng);
                c.bias.data_mut().fill(T::zero());
            }
            Layer::BatchNorm(bn) => {
                bn.gamma.data_mut().fill(T::one());
                bn.beta.data_mut().fill(T::zero());
                bn.running_mean.data_mut().fill(T::zero());
                bn.running_var.data_mut().fill(T::one());
            }
            Layer::Relu | Layer::MaxPool2 | Layer::Concat => {}
        }
    }
}

pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn glorot<T: Real>(w: &mut Tensor<T>, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) {
    let limit = glorot_limit(fan_in, fan_out);
    for v in w.data_mut() {
        *v = T::from_f64(rng.gen_range(-limit..limit));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build, UNetConfig};

    fn graph(seed: u64) -> Graph<f32> {
        let mut g = build(&UNetConfig::new(2, 8).with_input(8, 8)).unwrap();
        init_params(&mut g, seed);
        g
    }

    #[test]
    fn deterministic_in_seed() {
        assert_eq!(graph(5), graph(5));
        assert_ne!(graph(5), graph(6));
    }

    #[test]
    fn biases_zero_and_weights_bounded() {
        let g = graph(1);
        for (name, t) in g.parameters() {
            if name.ends_with(".bias") || name.ends_with(".beta") {
                assert!(t.data().iter().all(|&v| v == 0.0), "{name}");
            }
            if name.ends_with(".gamma") {
                assert!(t.data().iter().all(|&v| v == 1.0), "{name}");
            }
        }
        let Layer::Conv2d(c) = &g.nodes()[0].layer else { panic!() };
        let limit = glorot_limit(13 * 9, 8 * 9) as f32;
        assert!(c.weight.data().iter().all(|v| v.abs() <= limit));
    }

    #[test]
    fn sampler_mean_is_centered() {
        // 8·128·3·3 = 9216 draws plus the rest of the graph: well over 10^4.
        let mut g = build::<f64>(&UNetConfig::new(1, 128).with_input(2, 2)).unwrap();
        init_params(&mut g, 99);
        let Layer::Conv2d(c) = &g.nodes()[3].layer else { panic!() };
        let draws = c.weight.data();
        assert!(draws.len() >= 10_000);
        let limit = glorot_limit(128 * 9, 128 * 9);
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        // Uniform(-a, a) has standard deviation a / sqrt(3).
        let se = limit / 3f64.sqrt() / n.sqrt();
        assert!(mean.abs() <= 3.0 * se, "mean {mean}, se {se}");
    }
}
