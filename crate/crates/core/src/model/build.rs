use crate::error::Result;
use crate::nn::conv::{Conv2d, ConvTranspose2d};
use crate::nn::norm::BatchNorm;
use crate::nn::{Graph, Layer, Source};
use crate::numerics::Real;

use super::cost::ParamCount;
use super::UNetConfig;

/// Receives each layer in graph order and returns its node index.
type Sink<'a, T> = dyn FnMut(String, Layer<T>, &[Source]) -> Result<usize> + 'a;

/// Appends `Conv k → BatchNorm → ReLU` twice and returns the last node.
fn double_conv<T: Real>(
    g: &mut Sink<'_, T>,
    prefix: &str,
    from: Source,
    c_in: usize,
    c_out: usize,
    k: usize,
) -> Result<usize> {
    let mut src = from;
    let mut c = c_in;
    let mut last = 0;
    for i in 1..=2 {
        let conv = g(
            format!("{prefix}.conv{i}"),
            Layer::Conv2d(Conv2d::new(k, c, c_out)?),
            &[src],
        )?;
        let bn = g(
            format!("{prefix}.bn{i}"),
            Layer::BatchNorm(BatchNorm::new(c_out)?),
            &[Source::Node(conv)],
        )?;
        last = g(format!("{prefix}.relu{i}"), Layer::Relu, &[Source::Node(bn)])?;
        src = Source::Node(last);
        c = c_out;
    }
    Ok(last)
}

/// Instantiates the layer graph with zeroed weights, unit BatchNorm scales
/// and default running statistics; see [`crate::train::init_params`].
///
/// Encoder block `i`: two `Conv k, BN, ReLU` sequences then a 2×2 max pool,
/// with the skip tapped before pooling. Decoder blocks run from the deepest
/// up: a 2×2 stride-2 transposed convolution to the matching encoder width,
/// concatenation `[skip, upsampled]`, then two `Conv k, BN, ReLU` sequences.
/// A linear 1×1 convolution maps to `out_channels`.
pub fn build<T: Real>(config: &UNetConfig) -> Result<Graph<T>> {
    let mut g = Graph::new();
    emit::<T>(config, &mut |name, layer, inputs| g.push(name, layer, inputs))?;
    Ok(g)
}

/// Parameter totals found by instantiating every layer exactly as [`build`]
/// does, one at a time. Peak memory is a single layer, so configurations too
/// large to hold as a whole graph can still be enumerated.
pub fn instantiated_param_count(config: &UNetConfig) -> Result<ParamCount> {
    let mut count = ParamCount {
        trainable: 0,
        non_trainable: 0,
    };
    let mut nodes = 0;
    emit::<f32>(config, &mut |_, layer, _| {
        count.trainable += layer.params().iter().map(|(_, t)| t.len() as u64).sum::<u64>();
        count.non_trainable += layer.buffers().iter().map(|(_, t)| t.len() as u64).sum::<u64>();
        nodes += 1;
        Ok(nodes - 1)
    })?;
    Ok(count)
}

fn emit<T: Real>(config: &UNetConfig, g: &mut Sink<'_, T>) -> Result<()> {
    config.validate()?;
    let k = config.kernel;
    let mut src = Source::Input;
    let mut c = config.in_channels;
    let mut skips = Vec::with_capacity(config.depth);

    for i in 1..=config.depth {
        let f = config.filters(i);
        let tap = double_conv(g, &format!("enc{i}"), src, c, f, k)?;
        skips.push(tap);
        let pool = g(format!("enc{i}.pool"), Layer::MaxPool2, &[Source::Node(tap)])?;
        src = Source::Node(pool);
        c = f;
    }

    for i in (1..=config.depth).rev() {
        let f = config.filters(i);
        let up = g(
            format!("dec{i}.up"),
            Layer::ConvTranspose2d(ConvTranspose2d::new(c, f)?),
            &[src],
        )?;
        let skip = skips[i - 1];
        let cat = g(
            format!("dec{i}.concat"),
            Layer::Concat,
            &[Source::Node(skip), Source::Node(up)],
        )?;
        let last = double_conv(g, &format!("dec{i}"), Source::Node(cat), 2 * f, f, k)?;
        src = Source::Node(last);
        c = f;
    }

    g("final".to_string(), Layer::final_conv(c, config.out_channels)?, &[src])?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amp::PrecisionPolicy;
    use crate::nn::Mode;
    use crate::numerics::Tensor;

    #[test]
    fn u1_1_on_2x2() {
        let cfg = UNetConfig::new(1, 1).with_input(2, 2);
        let g = build::<f32>(&cfg).unwrap();
        let names: Vec<&str> = g.nodes().iter().map(|n| n.name.as_str()).collect();
        assert_eq!(names.iter().filter(|n| n.ends_with(".pool")).count(), 1);
        assert_eq!(names.iter().filter(|n| n.ends_with(".up")).count(), 1);
        assert_eq!(names.last(), Some(&"final"));
        let x = Tensor::zeros(&[1, 13, 2, 2]).unwrap();
        let (y, _) = g.forward(&x, Mode::Train, &PrecisionPolicy::fp32()).unwrap();
        assert_eq!(y.shape(), &[1, 12, 2, 2]);
    }

    #[test]
    fn layer_count_is_affine_in_depth() {
        for f in [1, 4, 32] {
            let counts: Vec<usize> = (1..=5)
                .map(|d| build::<f32>(&UNetConfig::new(d, f).with_input(32, 32)).unwrap().len())
                .collect();
            for d in 0..5 {
                assert_eq!(counts[d], 15 * (d + 1) + 1);
            }
        }
    }

    #[test]
    fn shape_law_for_every_block() {
        let cfg = UNetConfig::new(3, 2).with_input(16, 24);
        let g = build::<f32>(&cfg).unwrap();
        let shapes = g.shapes(&[2, 13, 16, 24]).unwrap();
        for (node, s) in g.nodes().iter().zip(&shapes) {
            if let Some(i) = node.name.strip_suffix(".pool").and_then(|p| p.strip_prefix("enc")) {
                let i: u32 = i.parse().unwrap();
                assert_eq!(s[2..], [16 >> i, 24 >> i]);
            }
            if let Some(i) = node.name.strip_suffix(".up").and_then(|p| p.strip_prefix("dec")) {
                let i: u32 = i.parse().unwrap();
                assert_eq!(s[2..], [16 >> (i - 1), 24 >> (i - 1)]);
            }
        }
        assert_eq!(shapes.last().unwrap(), &vec![2, 12, 16, 24]);
    }

    #[test]
    fn indivisible_input_is_rejected() {
        assert!(build::<f32>(&UNetConfig::new(2, 4).with_input(6, 8)).is_err());
    }

    #[test]
    fn enumerated_count_matches_built_graph() {
        for (d, f, k) in [(1, 1, 3), (2, 4, 3), (3, 2, 5)] {
            let cfg = UNetConfig::new(d, f).with_kernel(k).with_input(16, 16);
            let g = build::<f32>(&cfg).unwrap();
            let n = instantiated_param_count(&cfg).unwrap();
            assert_eq!(n.trainable as usize, g.trainable_param_count());
            assert_eq!(n.total() as usize, g.total_param_count());
        }
    }
}
