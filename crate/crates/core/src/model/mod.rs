//! The two-branch restoration network: a residual restoration branch
//! running at half resolution, conditioned on the quantization map, and
//! an optional whole-image global branch fused in the middle.

mod io;
mod net;

pub use io::{config_digest, load_checkpoint, save_checkpoint};
pub use net::{
    forward_with_param_vars, fuse_global, global_branch, residual_block, resize_tensor_bilinear,
    restore_image, slice_leading_channels, ForwardPass,
};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{gaussian_init, Scalar, Tensor};

/// Global-branch conv stack: (channels, kernel, stride), padding 1
/// throughout. Spatial extent halves at every 4-kernel layer.
pub const GLOBAL_CONV_STACK: [(usize, usize, usize); 8] = [
    (32, 4, 2),
    (32, 3, 1),
    (64, 4, 2),
    (64, 3, 1),
    (128, 4, 2),
    (128, 3, 1),
    (256, 4, 2),
    (256, 3, 1),
];

pub const GLOBAL_FC1_DIM: usize = 1024;

/// How fresh parameters are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum InitScheme {
    /// N(0, std) on every parameter.
    Gaussian { std: f64 },
    /// Fan-in-scaled Gaussian weights and zero biases, with the final
    /// conv damped by `tail_gain` so the output starts close to the
    /// identity. Converges in minutes at desk scale where the flat
    /// Gaussian needs hours.
    FanIn { tail_gain: f64 },
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme::Gaussian { std: 0.01 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// 2 for grayscale (image + 1 map plane), 5 for color (image + 2).
    pub in_channels: usize,
    pub feat_channels: usize,
    pub n_res_per_group: usize,
    pub res_scale: f64,
    pub global_vec_dim: usize,
    pub global_input_size: usize,
    pub enable_global_branch: bool,
    pub global_residual_skip: bool,
    #[serde(default)]
    pub init: InitScheme,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            in_channels: 5,
            feat_channels: 64,
            n_res_per_group: 32,
            res_scale: 0.1,
            global_vec_dim: 64,
            global_input_size: 112,
            enable_global_branch: true,
            global_residual_skip: true,
            init: InitScheme::default(),
        }
    }
}

impl ModelConfig {
    /// Small network for tests and quick desk-scale runs. The global
    /// branch keeps its layer stack but looks at a 48x48 thumbnail so a
    /// CPU step stays in the tens of milliseconds.
    pub fn toy(color: bool) -> Self {
        ModelConfig {
            in_channels: if color { 5 } else { 2 },
            feat_channels: 16,
            n_res_per_group: 2,
            global_input_size: 48,
            init: InitScheme::FanIn { tail_gain: 0.0 },
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels != 2 && self.in_channels != 5 {
            return Err(Error::Config(format!(
                "in_channels must be 2 or 5, got {}",
                self.in_channels
            )));
        }
        if self.feat_channels == 0 {
            return Err(Error::Config("feat_channels must be positive".into()));
        }
        if self.n_res_per_group == 0 {
            return Err(Error::Config("n_res_per_group must be at least 1".into()));
        }
        if self.global_input_size == 0 || self.global_input_size % 16 != 0 {
            return Err(Error::Config(format!(
                "global_input_size must be a positive multiple of 16, got {}",
                self.global_input_size
            )));
        }
        if self.global_vec_dim == 0 {
            return Err(Error::Config("global_vec_dim must be positive".into()));
        }
        Ok(())
    }

    /// Image channels the network consumes and produces.
    pub fn image_channels(&self) -> usize {
        if self.in_channels == 5 {
            3
        } else {
            1
        }
    }

    pub fn is_color(&self) -> bool {
        self.in_channels == 5
    }

    /// Flattened feature length entering fc1.
    pub fn global_flat_dim(&self) -> usize {
        let side = self.global_input_size / 16;
        256 * side * side
    }

    /// Every parameter tensor the config implies, in storage order.
    pub fn param_spec(&self) -> Vec<(String, Vec<usize>)> {
        let f = self.feat_channels;
        let mut spec: Vec<(String, Vec<usize>)> = Vec::new();
        let conv = |name: &str, cout: usize, cin: usize, k: usize| {
            [
                (format!("{}.weight", name), vec![cout, cin, k, k]),
                (format!("{}.bias", name), vec![cout]),
            ]
        };
        spec.extend(conv("head", f, self.in_channels, 3));
        spec.extend(conv("down", f, f, 3));
        for group in ["group1", "group2"] {
            for i in 0..self.n_res_per_group {
                spec.extend(conv(&format!("{}.block{}.conv1", group, i), f, f, 3));
                spec.extend(conv(&format!("{}.block{}.conv2", group, i), f, f, 3));
            }
        }
        if self.enable_global_branch {
            let mut cin = self.in_channels;
            for (i, (cout, k, _)) in GLOBAL_CONV_STACK.iter().enumerate() {
                let name = format!("global.conv{}_{}", i / 2 + 1, i % 2 + 1);
                spec.extend(conv(&name, *cout, cin, *k));
                cin = *cout;
            }
            spec.push(("global.fc1.weight".into(), vec![GLOBAL_FC1_DIM, self.global_flat_dim()]));
            spec.push(("global.fc1.bias".into(), vec![GLOBAL_FC1_DIM]));
            spec.push(("global.fc2.weight".into(), vec![self.global_vec_dim, GLOBAL_FC1_DIM]));
            spec.push(("global.fc2.bias".into(), vec![self.global_vec_dim]));
            spec.extend(conv("fusion", f, f + self.global_vec_dim, 3));
        }
        spec.extend(conv("up", 4 * f, f, 3));
        spec.extend(conv("tail", self.image_channels(), f, 3));
        spec
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> usize {
        self.param_spec()
            .iter()
            .map(|(_, shape)| shape.iter().product::<usize>())
            .sum()
    }

    /// Parameters the global branch adds on top of the plain
    /// restoration network: the conv/fc stack plus the fusion conv.
    pub fn global_branch_param_delta(&self) -> usize {
        let with = ModelConfig { enable_global_branch: true, ..self.clone() };
        let without = ModelConfig { enable_global_branch: false, ..self.clone() };
        with.param_count() - without.param_count()
    }
}

/// Named parameter tensors in a stable order.
#[derive(Clone, Debug)]
pub struct ModelParams<E> {
    entries: Vec<(String, Tensor<E>)>,
}

impl<E: Scalar> ModelParams<E> {
    pub fn entries(&self) -> &[(String, Tensor<E>)] {
        &self.entries
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<E>> {
        self.entries.iter_mut().map(|(_, t)| t).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<E>> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn shapes(&self) -> Vec<Vec<usize>> {
        self.entries.iter().map(|(_, t)| t.shape().to_vec()).collect()
    }

    pub fn total_len(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }
}

#[derive(Clone, Debug)]
pub struct Model<E: Scalar> {
    pub config: ModelConfig,
    pub params: ModelParams<E>,
}

impl<E: Scalar> Model<E> {
    /// Fresh model drawn per `config.init`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let entries = config
            .param_spec()
            .into_iter()
            .map(|(name, shape)| {
                let tensor = match config.init {
                    InitScheme::Gaussian { std } => gaussian_init(&shape, std, &mut rng)?,
                    InitScheme::FanIn { tail_gain } => {
                        let is_bias = shape.len() == 1;
                        if is_bias {
                            Tensor::zeros(&shape)
                        } else {
                            // conv (cout, cin, k, k) or linear (out, in)
                            let fan_in: usize = shape[1..].iter().product();
                            let gain = if name.starts_with("tail.") { tail_gain } else { 1.0 };
                            let std = gain * (2.0 / fan_in as f64).sqrt();
                            if std > 0.0 {
                                gaussian_init(&shape, std, &mut rng)?
                            } else {
                                Tensor::zeros(&shape)
                            }
                        }
                    }
                };
                Ok((name, tensor))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Model { config, params: ModelParams { entries } })
    }

    /// All-zero parameters; with the residual skip on, this model is
    /// the identity on the image.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let entries = config
            .param_spec()
            .into_iter()
            .map(|(name, shape)| (name, Tensor::zeros(&shape)))
            .collect();
        Ok(Model { config, params: ModelParams { entries } })
    }

    pub fn from_entries(config: ModelConfig, entries: Vec<(String, Tensor<E>)>) -> Result<Self> {
        config.validate()?;
        let spec = config.param_spec();
        if spec.len() != entries.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter tensors, got {}",
                spec.len(),
                entries.len()
            )));
        }
        for ((want_name, want_shape), (name, tensor)) in spec.iter().zip(&entries) {
            if want_name != name {
                return Err(Error::Checkpoint(format!(
                    "parameter order mismatch: expected {:?}, found {:?}",
                    want_name, name
                )));
            }
            let want_len: usize = want_shape.iter().product();
            if tensor.len() != want_len {
                return Err(Error::Checkpoint(format!(
                    "parameter {:?} has {} values, config wants {}",
                    name,
                    tensor.len(),
                    want_len
                )));
            }
        }
        // normalize shapes to the logical spec (checkpoints store 4D)
        let entries = spec
            .into_iter()
            .zip(entries)
            .map(|((_, shape), (name, tensor))| Ok((name, tensor.reshape(&shape)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Model { config, params: ModelParams { entries } })
    }

    pub fn param_count(&self) -> usize {
        self.params.total_len()
    }
}
