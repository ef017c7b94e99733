//! Graph construction for the network: residual blocks, the global
//! feature branch, fusion, and the full forward pass.

use super::{Model, ModelConfig, GLOBAL_CONV_STACK};
use crate::error::{Error, Result};
use crate::image::{resize_plane_bilinear, ColorSpace, ImageBuffer};
use crate::jpeg::{build_qmap, pad_to_multiple, stack_image_and_qmap, unpad, QuantTable};
use crate::tensor::{Graph, Scalar, Tensor, Var};

/// One forward pass: the tape, the output node, and the parameter
/// leaves in the same order as `ModelParams::entries`. Dropped after
/// gradients are extracted.
pub struct ForwardPass<E: Scalar> {
    pub graph: Graph<E>,
    pub output: Var,
    pub param_vars: Vec<Var>,
}

/// x + scale * conv2(relu(conv1(x))), both convs 3x3 stride 1 pad 1.
/// No batch normalization anywhere.
pub fn residual_block<E: Scalar>(
    g: &mut Graph<E>,
    x: Var,
    conv1_w: Var,
    conv1_b: Var,
    conv2_w: Var,
    conv2_b: Var,
    res_scale: f64,
) -> Result<Var> {
    let a = g.conv2d(x, conv1_w, conv1_b, 1, 1)?;
    let a = g.relu(a);
    let b = g.conv2d(a, conv2_w, conv2_b, 1, 1)?;
    let scaled = g.scale(b, res_scale);
    g.add(x, scaled)
}

/// The whole-image feature stack: fixed conv settings, then
/// fc1 + ReLU, then fc2 (linear, no activation). Input must already be
/// resized to `config.global_input_size`.
pub fn global_branch<E: Scalar>(
    g: &mut Graph<E>,
    resized: Var,
    config: &ModelConfig,
    mut param: impl FnMut(&str) -> Var,
) -> Result<Var> {
    let [n, _, h, w] = g.value(resized).dims4();
    let gis = config.global_input_size;
    if h != gis || w != gis {
        return Err(Error::shape(
            "global_branch",
            format!("expected {0}x{0} input, got {1}x{2}", gis, h, w),
        ));
    }
    let mut x = resized;
    for (i, (_, _, stride)) in GLOBAL_CONV_STACK.iter().enumerate() {
        let name = format!("global.conv{}_{}", i / 2 + 1, i % 2 + 1);
        let w_var = param(&format!("{}.weight", name));
        let b_var = param(&format!("{}.bias", name));
        x = g.conv2d(x, w_var, b_var, *stride, 1)?;
        x = g.relu(x);
    }
    let flat = g.reshape(x, &[n, config.global_flat_dim()])?;
    let fc1 = g.linear(flat, param("global.fc1.weight"), param("global.fc1.bias"))?;
    let fc1 = g.relu(fc1);
    g.linear(fc1, param("global.fc2.weight"), param("global.fc2.bias"))
}

/// Broadcast-tiles the (N, D) global vector over the local grid and
/// concatenates along channels: (N, C, h, w) + (N, D) -> (N, C+D, h, w).
pub fn fuse_global<E: Scalar>(g: &mut Graph<E>, local: Var, global_vec: Var) -> Result<Var> {
    let [n, _, h, w] = g.value(local).dims4();
    let (vn, _) = g.value(global_vec).dims2()?;
    if n != vn {
        return Err(Error::shape(
            "fuse_global",
            format!("batch {} vs {}", n, vn),
        ));
    }
    let tiled = g.tile_spatial(global_vec, h, w)?;
    g.concat_channels(local, tiled)
}

/// Bilinear resize of every (n, c) plane of an NCHW tensor.
pub fn resize_tensor_bilinear<E: Scalar>(t: &Tensor<E>, new_h: usize, new_w: usize) -> Tensor<E> {
    let [n, c, h, w] = t.dims4();
    let mut data = Vec::with_capacity(n * c * new_h * new_w);
    for plane_idx in 0..n * c {
        let plane: Vec<f64> = t.data()[plane_idx * h * w..(plane_idx + 1) * h * w]
            .iter()
            .map(|v| v.to_f64())
            .collect();
        let resized = resize_plane_bilinear(&plane, w, h, new_w, new_h);
        data.extend(resized.into_iter().map(E::from_f64));
    }
    Tensor::new(&[n, c, new_h, new_w], data).expect("extent math is consistent")
}

/// First `keep` channels of an NCHW tensor.
pub fn slice_leading_channels<E: Scalar>(t: &Tensor<E>, keep: usize) -> Result<Tensor<E>> {
    let [n, c, h, w] = t.dims4();
    if keep > c {
        return Err(Error::shape(
            "slice_leading_channels",
            format!("keep {} of {} channels", keep, c),
        ));
    }
    let plane = h * w;
    let mut data = Vec::with_capacity(n * keep * plane);
    for s in 0..n {
        let start = s * c * plane;
        data.extend_from_slice(&t.data()[start..start + keep * plane]);
    }
    Tensor::new(&[n, keep, h, w], data)
}

/// Runs the whole forward computation on an existing graph against
/// caller-supplied parameter leaves (ordered like
/// `ModelConfig::param_spec`). This is what the end-to-end gradient
/// check drives directly.
pub fn forward_with_param_vars<E: Scalar>(
    g: &mut Graph<E>,
    cfg: &ModelConfig,
    param_vars: &[Var],
    input: &Tensor<E>,
) -> Result<Var> {
    let [_, c, h, w] = input.dims4();
    if c != cfg.in_channels {
        return Err(Error::shape(
            "forward",
            format!("input has {} channels, config wants {}", c, cfg.in_channels),
        ));
    }
    if h % 2 != 0 || w % 2 != 0 || h == 0 || w == 0 {
        return Err(Error::invalid(
            "forward",
            format!("spatial extents must be even, got {}x{}", h, w),
        ));
    }
    let spec = cfg.param_spec();
    if spec.len() != param_vars.len() {
        return Err(Error::shape(
            "forward",
            format!("{} parameter vars, config wants {}", param_vars.len(), spec.len()),
        ));
    }
    let var_of = |name: &str| -> Var {
        let idx = spec
            .iter()
            .position(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("parameter {:?} missing from spec", name));
        param_vars[idx]
    };

    let input_var = g.leaf(input.clone(), false);

    // restoration branch at half resolution
    let head = g.conv2d(input_var, var_of("head.weight"), var_of("head.bias"), 1, 1)?;
    let head = g.relu(head);
    let down = g.conv2d(head, var_of("down.weight"), var_of("down.bias"), 2, 1)?;
    let down = g.relu(down);

    let mut x = down;
    for i in 0..cfg.n_res_per_group {
        x = residual_block(
            g,
            x,
            var_of(&format!("group1.block{}.conv1.weight", i)),
            var_of(&format!("group1.block{}.conv1.bias", i)),
            var_of(&format!("group1.block{}.conv2.weight", i)),
            var_of(&format!("group1.block{}.conv2.bias", i)),
            cfg.res_scale,
        )?;
    }
    let group1_out = g.add(x, down)?;

    let mut x = if cfg.enable_global_branch {
        let resized = resize_tensor_bilinear(input, cfg.global_input_size, cfg.global_input_size);
        let resized_var = g.leaf(resized, false);
        let vec = global_branch(g, resized_var, cfg, &var_of)?;
        let fused = fuse_global(g, group1_out, vec)?;
        let f = g.conv2d(fused, var_of("fusion.weight"), var_of("fusion.bias"), 1, 1)?;
        g.relu(f)
    } else {
        group1_out
    };

    let group2_in = x;
    for i in 0..cfg.n_res_per_group {
        x = residual_block(
            g,
            x,
            var_of(&format!("group2.block{}.conv1.weight", i)),
            var_of(&format!("group2.block{}.conv1.bias", i)),
            var_of(&format!("group2.block{}.conv2.weight", i)),
            var_of(&format!("group2.block{}.conv2.bias", i)),
            cfg.res_scale,
        )?;
    }
    let group2_out = g.add(x, group2_in)?;

    // back to full resolution via sub-pixel convolution; the expansion
    // conv stays linear so no upsample channel can die under ReLU
    let up = g.conv2d(group2_out, var_of("up.weight"), var_of("up.bias"), 1, 1)?;
    let up = g.pixel_shuffle(up, 2)?;
    let mut out = g.conv2d(up, var_of("tail.weight"), var_of("tail.bias"), 1, 1)?;

    if cfg.global_residual_skip {
        let img_part = slice_leading_channels(input, cfg.image_channels())?;
        let img_var = g.leaf(img_part, false);
        out = g.add(out, img_var)?;
    }
    g.assert_finite(out, "forward")?;
    Ok(out)
}

impl<E: Scalar> Model<E> {
    /// Records the full forward computation for a batch. `input` is
    /// (N, in_channels, H, W) with image and map planes in [0,1];
    /// H and W must be even (the caller pads images beforehand).
    pub fn build_forward(&self, input: &Tensor<E>, with_grad: bool) -> Result<ForwardPass<E>> {
        let mut g = Graph::new();
        let param_vars: Vec<Var> = self
            .params
            .entries()
            .iter()
            .map(|(_, t)| g.leaf(t.clone(), with_grad))
            .collect();
        let output = forward_with_param_vars(&mut g, &self.config, &param_vars, input)?;
        Ok(ForwardPass { graph: g, output, param_vars })
    }

    /// Inference on a plain tensor: forward without gradients, output
    /// clamped to [0,1].
    pub fn infer(&self, input: &Tensor<E>) -> Result<Tensor<E>> {
        let pass = self.build_forward(input, false)?;
        let out = pass.graph.value(pass.output);
        let data = out
            .data()
            .iter()
            .map(|&v| v.maximum(E::ZERO).to_f64().min(1.0))
            .map(E::from_f64)
            .collect();
        Tensor::new(out.shape(), data)
    }
}

/// End-to-end single-image restoration: pads to the coding grid, tiles
/// the quantization map, runs the network, unpads.
pub fn restore_image<E: Scalar>(
    model: &Model<E>,
    degraded: &ImageBuffer,
    luma: &QuantTable,
    chroma: Option<&QuantTable>,
) -> Result<ImageBuffer> {
    let want_gray = !model.config.is_color();
    if degraded.is_gray() != want_gray {
        return Err(Error::invalid(
            "restore_image",
            format!(
                "model expects {} input, image is {}",
                if want_gray { "grayscale" } else { "color" },
                if degraded.is_gray() { "grayscale" } else { "color" }
            ),
        ));
    }
    if want_gray != chroma.is_none() {
        return Err(Error::invalid(
            "restore_image",
            "chroma table must be present exactly for color models",
        ));
    }
    // 8 is even, so block padding also satisfies the even-extent rule
    let (padded, orig) = pad_to_multiple(degraded, 8);
    let qmap = build_qmap(padded.width(), padded.height(), luma, chroma)?;
    let input: Tensor<E> = stack_image_and_qmap(&padded, &qmap)?;
    let out = model.infer(&input)?;
    let color = if want_gray { ColorSpace::Gray } else { ColorSpace::Rgb };
    let restored = ImageBuffer::from_tensor(&out, color)?;
    unpad(&restored, orig)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jpeg::scaled_ijg_tables;
    use crate::synth::synth_image;

    #[test]
    fn forward_shapes_color_and_gray() {
        let color: Model<f32> = Model::init(ModelConfig::toy(true), 5).unwrap();
        let input = Tensor::zeros(&[2, 5, 64, 64]);
        let pass = color.build_forward(&input, false).unwrap();
        assert_eq!(pass.graph.value(pass.output).shape(), &[2, 3, 64, 64]);

        let gray: Model<f32> = Model::init(ModelConfig::toy(false), 5).unwrap();
        let input = Tensor::zeros(&[1, 2, 128, 96]);
        let pass = gray.build_forward(&input, false).unwrap();
        assert_eq!(pass.graph.value(pass.output).shape(), &[1, 1, 128, 96]);
    }

    #[test]
    fn odd_extents_rejected() {
        let model: Model<f32> = Model::init(ModelConfig::toy(true), 5).unwrap();
        let input = Tensor::zeros(&[1, 5, 63, 64]);
        assert!(model.build_forward(&input, false).is_err());
    }

    #[test]
    fn channel_mismatch_rejected() {
        let model: Model<f32> = Model::init(ModelConfig::toy(true), 5).unwrap();
        let input = Tensor::zeros(&[1, 2, 64, 64]);
        assert!(model.build_forward(&input, false).is_err());
    }

    #[test]
    fn zero_weights_with_skip_is_identity() {
        let model: Model<f64> = Model::zeros(ModelConfig::toy(true)).unwrap();
        let img = synth_image(32, 32, true, 9);
        let (luma, chroma) = scaled_ijg_tables(35).unwrap();
        let restored = restore_image(&model, &img, &luma, Some(&chroma)).unwrap();
        assert_eq!(restored, img);
    }

    #[test]
    fn zero_weights_residual_block_is_identity() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_f64_slice(&[1, 2, 2, 2], &[1.0; 8]).unwrap(), false);
        let w1 = g.leaf(Tensor::zeros(&[2, 2, 3, 3]), false);
        let b1 = g.leaf(Tensor::zeros(&[2]), false);
        let w2 = g.leaf(Tensor::zeros(&[2, 2, 3, 3]), false);
        let b2 = g.leaf(Tensor::zeros(&[2]), false);
        let y = residual_block(&mut g, x, w1, b1, w2, b2, 0.1).unwrap();
        assert_eq!(g.value(y).data(), g.value(x).data());
    }

    #[test]
    fn residual_block_perturbation_is_damped_by_scale() {
        // perturbing the inner conv weights moves the output by
        // O(res_scale * eps)
        let relu_input: Tensor<f64> = Tensor::full(&[1, 1, 4, 4], 1.0);
        let eps = 1e-3;
        let run = |w2_val: f64| -> Vec<f64> {
            let mut g = Graph::<f64>::new();
            let x = g.leaf(relu_input.clone(), false);
            let w1 = g.leaf(Tensor::full(&[1, 1, 3, 3], 0.5), false);
            let b1 = g.leaf(Tensor::zeros(&[1]), false);
            let w2 = g.leaf(Tensor::full(&[1, 1, 3, 3], w2_val), false);
            let b2 = g.leaf(Tensor::zeros(&[1]), false);
            let y = residual_block(&mut g, x, w1, b1, w2, b2, 0.1).unwrap();
            g.value(y).data().to_vec()
        };
        let base = run(0.3);
        let bumped = run(0.3 + eps);
        let max_delta = base
            .iter()
            .zip(&bumped)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        // inner activation is at most 4.5 per site (9 taps * 0.5), so
        // the damped response stays within ~0.1 * 9 * 4.5 * eps
        assert!(max_delta > 0.0);
        assert!(max_delta < 0.1 * 9.0 * 4.5 * eps * 1.01, "delta {}", max_delta);
    }

    #[test]
    fn global_branch_output_dims_and_zero_case() {
        let cfg = ModelConfig::toy(true);
        let model: Model<f32> = Model::init(cfg.clone(), 3).unwrap();
        let input = Tensor::zeros(&[2, 5, 32, 32]);
        // probe the intermediate via a bare graph
        let mut g = Graph::<f32>::new();
        let names: Vec<String> = model.params.entries().iter().map(|(n, _)| n.clone()).collect();
        let vars: Vec<Var> = model
            .params
            .entries()
            .iter()
            .map(|(_, t)| g.leaf(t.clone(), false))
            .collect();
        let resized = resize_tensor_bilinear(&input, cfg.global_input_size, cfg.global_input_size);
        let resized_var = g.leaf(resized, false);
        let vec = global_branch(&mut g, resized_var, &cfg, |name| {
            vars[names.iter().position(|n| n == name).unwrap()]
        })
        .unwrap();
        assert_eq!(g.value(vec).shape(), &[2, cfg.global_vec_dim]);

        // all-zero weights give the zero feature vector
        let zero: Model<f32> = Model::zeros(cfg.clone()).unwrap();
        let mut g = Graph::<f32>::new();
        let zvars: Vec<Var> = zero
            .params
            .entries()
            .iter()
            .map(|(_, t)| g.leaf(t.clone(), false))
            .collect();
        let resized = resize_tensor_bilinear(&input, cfg.global_input_size, cfg.global_input_size);
        let rv = g.leaf(resized, false);
        let vec = global_branch(&mut g, rv, &cfg, |name| {
            zvars[names.iter().position(|n| n == name).unwrap()]
        })
        .unwrap();
        assert!(g.value(vec).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fuse_global_tiling_and_concat() {
        let mut g = Graph::<f64>::new();
        let local = g.leaf(Tensor::full(&[1, 3, 1, 1], 2.0), false);
        let vecv = g.leaf(Tensor::from_f64_slice(&[1, 3], &[5.0, 6.0, 7.0]).unwrap(), false);
        let fused = fuse_global(&mut g, local, vecv).unwrap();
        // h = w = 1: plain concatenation of the two vectors
        assert_eq!(g.value(fused).data(), &[2.0, 2.0, 2.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn disabling_global_branch_detaches_the_resize_path() {
        // outputs with different 112x112 content but identical
        // restoration-branch input must agree when the branch is off
        let cfg = ModelConfig { enable_global_branch: false, ..ModelConfig::toy(true) };
        let model: Model<f32> = Model::init(cfg, 8).unwrap();
        let img = synth_image(48, 48, true, 2);
        let (luma, chroma) = scaled_ijg_tables(20).unwrap();
        let a = restore_image(&model, &img, &luma, Some(&chroma)).unwrap();
        let b = restore_image(&model, &img, &luma, Some(&chroma)).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            model.param_count() + model.config.global_branch_param_delta(),
            ModelConfig::toy(true).param_count()
        );
    }

    #[test]
    fn output_extents_match_input_after_padding() {
        let model: Model<f32> = Model::init(ModelConfig::toy(true), 5).unwrap();
        let (luma, chroma) = scaled_ijg_tables(50).unwrap();
        for (w, h) in [(16usize, 16usize), (20, 36), (45, 37), (64, 48)] {
            let img = synth_image(w, h, true, w as u64 * 100 + h as u64);
            let restored = restore_image(&model, &img, &luma, Some(&chroma)).unwrap();
            assert_eq!((restored.width(), restored.height()), (w, h));
        }
    }
}
