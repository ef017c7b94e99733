//! End-to-end gradient verification of the composed network at f64.

use qgcn::model::{forward_with_param_vars, InitScheme, Model, ModelConfig};
use qgcn::tensor::{gradcheck, Tensor};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn tiny_config(global: bool) -> ModelConfig {
    ModelConfig {
        in_channels: 2,
        feat_channels: 4,
        n_res_per_group: 1,
        res_scale: 0.1,
        global_vec_dim: 4,
        global_input_size: 16,
        enable_global_branch: global,
        global_residual_skip: true,
        init: InitScheme::Gaussian { std: 0.05 },
    }
}

fn random_pair(rng: &mut ChaCha12Rng) -> (Tensor<f64>, Tensor<f64>) {
    let input = Tensor::new(
        &[1, 2, 16, 16],
        (0..2 * 256).map(|_| rng.random_range(0.05..0.95)).collect(),
    )
    .unwrap();
    // target far from any prediction keeps the L1 kinks out of the stencil
    let target = Tensor::new(
        &[1, 1, 16, 16],
        (0..256).map(|_| rng.random_range(3.0..4.0)).collect(),
    )
    .unwrap();
    (input, target)
}

/// Element-wise finite differences over EVERY parameter of the
/// restoration-only 16x16 toy model.
#[test]
fn elementwise_fd_restoration_model() {
    let cfg = tiny_config(false);
    let model: Model<f64> = Model::init(cfg.clone(), 21).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(77);
    let (input, target) = random_pair(&mut rng);

    let params: Vec<Tensor<f64>> =
        model.params.entries().iter().map(|(_, t)| t.clone()).collect();
    let report = gradcheck::finite_diff_check(
        "restoration model, all params",
        &params,
        move |g, vars| {
            let out = forward_with_param_vars(g, &cfg, vars, &input)?;
            let t = g.leaf(target.clone(), false);
            g.l1_loss(out, t)
        },
        gradcheck::FD_STEP,
        gradcheck::MODEL_TOLERANCE,
    )
    .unwrap();
    assert!(report.passed, "{}", report);
    assert_eq!(report.checked, ModelConfig { enable_global_branch: false, ..tiny_config(false) }.param_count());
}

/// Directional finite differences per parameter tensor on the full
/// two-branch model (element-wise probing of the fc layers would not
/// fit any time budget).
#[test]
fn directional_fd_full_model() {
    let cfg = tiny_config(true);
    let model: Model<f64> = Model::init(cfg.clone(), 22).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(78);
    let (input, target) = random_pair(&mut rng);

    let params: Vec<Tensor<f64>> =
        model.params.entries().iter().map(|(_, t)| t.clone()).collect();
    let report = gradcheck::finite_diff_directional(
        "full model, directional",
        &params,
        move |g, vars| {
            let out = forward_with_param_vars(g, &cfg, vars, &input)?;
            let t = g.leaf(target.clone(), false);
            g.l1_loss(out, t)
        },
        gradcheck::FD_STEP,
        gradcheck::MODEL_TOLERANCE,
        2,
        55,
    )
    .unwrap();
    assert!(report.passed, "{}", report);
}
