//! Central finite-difference oracle for the analytic backward passes.
//! The oracle only ever calls forward code, so it stays independent of
//! the gradient implementation it is judging. Everything here runs at
//! f64; single precision is too noisy for h = 1e-4.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use super::{Graph, Tensor, Var};
use crate::error::Result;

pub const FD_STEP: f64 = 1e-4;
pub const OP_TOLERANCE: f64 = 1e-4;
pub const MODEL_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct FdReport {
    pub name: String,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub checked: usize,
    pub passed: bool,
}

impl std::fmt::Display for FdReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {:<28} max rel err {:.3e} (tol {:.0e}, {} values)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.max_rel_err,
            self.tolerance,
            self.checked
        )
    }
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / denom
}

fn eval_loss<F>(inputs: &[Tensor<f64>], build: &F) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut graph = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| graph.leaf(t.clone(), false)).collect();
    let loss = build(&mut graph, &vars)?;
    Ok(graph.value(loss).data()[0])
}

/// Element-wise check: every entry of every listed input is perturbed
/// by +-h and the central difference is compared against the analytic
/// gradient from one backward pass.
pub fn finite_diff_check<F>(
    name: &str,
    inputs: &[Tensor<f64>],
    build: F,
    h: f64,
    tolerance: f64,
) -> Result<FdReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut graph = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| graph.leaf(t.clone(), true)).collect();
    let loss = build(&mut graph, &vars)?;
    let grads = graph.backward(loss)?;

    let mut max_rel = 0.0f64;
    let mut checked = 0usize;
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (ti, var) in vars.iter().enumerate() {
        let analytic = grads
            .get(*var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(inputs[ti].shape()));
        for ei in 0..inputs[ti].len() {
            let orig = work[ti].data()[ei];
            work[ti].data_mut()[ei] = orig + h;
            let plus = eval_loss(&work, &build)?;
            work[ti].data_mut()[ei] = orig - h;
            let minus = eval_loss(&work, &build)?;
            work[ti].data_mut()[ei] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            max_rel = max_rel.max(rel_err(analytic.data()[ei], numeric));
            checked += 1;
        }
    }
    Ok(FdReport {
        name: name.to_string(),
        max_rel_err: max_rel,
        tolerance,
        checked,
        passed: max_rel < tolerance,
    })
}

/// Directional check: each input tensor is perturbed along `dirs` random
/// unit directions and the slope is compared against the projection of
/// the analytic gradient. Used where element-wise probing is too slow.
pub fn finite_diff_directional<F>(
    name: &str,
    inputs: &[Tensor<f64>],
    build: F,
    h: f64,
    tolerance: f64,
    dirs: usize,
    seed: u64,
) -> Result<FdReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut graph = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| graph.leaf(t.clone(), true)).collect();
    let loss = build(&mut graph, &vars)?;
    let grads = graph.backward(loss)?;

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut max_rel = 0.0f64;
    let mut checked = 0usize;
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (ti, var) in vars.iter().enumerate() {
        let analytic = grads
            .get(*var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(inputs[ti].shape()));
        for _ in 0..dirs {
            let dir: Vec<f64> = (0..inputs[ti].len())
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect();
            let norm = (dir.len() as f64).sqrt();
            let projected: f64 = analytic
                .data()
                .iter()
                .zip(&dir)
                .map(|(&g, &d)| g * d / norm)
                .sum();

            let saved = work[ti].clone();
            for (w, &d) in work[ti].data_mut().iter_mut().zip(&dir) {
                *w += h * d / norm;
            }
            let plus = eval_loss(&work, &build)?;
            work[ti] = saved.clone();
            for (w, &d) in work[ti].data_mut().iter_mut().zip(&dir) {
                *w -= h * d / norm;
            }
            let minus = eval_loss(&work, &build)?;
            work[ti] = saved;

            let numeric = (plus - minus) / (2.0 * h);
            max_rel = max_rel.max(rel_err(projected, numeric));
            checked += 1;
        }
    }
    Ok(FdReport {
        name: name.to_string(),
        max_rel_err: max_rel,
        tolerance,
        checked,
        passed: max_rel < tolerance,
    })
}

/// Random tensor with entries kept away from zero so ReLU/L1 kinks do
/// not sit inside the finite-difference stencil.
pub fn kink_free_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor<f64> {
    let len: usize = shape.iter().product();
    let data = (0..len)
        .map(|_| {
            let v: f64 = rng.random_range(0.1..1.0);
            if rng.random::<bool>() {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(shape, data).expect("shape/data agree by construction")
}

/// Per-operation finite-difference suite. Returns one report per
/// differentiable op the engine exposes.
pub fn run_op_suite(seed: u64) -> Result<Vec<FdReport>> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let h = FD_STEP;
    let tol = OP_TOLERANCE;
    let mut reports = Vec::new();

    // conv2d, strided with padding: gradients for input, weight, bias.
    {
        let input = kink_free_tensor(&[2, 5, 8, 8], &mut rng);
        let weight = kink_free_tensor(&[6, 5, 3, 3], &mut rng);
        let bias = kink_free_tensor(&[6], &mut rng);
        let probe = kink_free_tensor(&[2, 6, 4, 4], &mut rng);
        reports.push(finite_diff_check(
            "conv2d(stride 2, pad 1)",
            &[input, weight, bias],
            move |g, vars| {
                let y = g.conv2d(vars[0], vars[1], vars[2], 2, 1)?;
                let p = g.leaf(probe.clone(), false);
                g.dot(y, p)
            },
            h,
            tol,
        )?);
    }

    // conv2d stride 1, same padding.
    {
        let input = kink_free_tensor(&[1, 3, 6, 6], &mut rng);
        let weight = kink_free_tensor(&[4, 3, 3, 3], &mut rng);
        let bias = kink_free_tensor(&[4], &mut rng);
        let probe = kink_free_tensor(&[1, 4, 6, 6], &mut rng);
        reports.push(finite_diff_check(
            "conv2d(stride 1, same)",
            &[input, weight, bias],
            move |g, vars| {
                let y = g.conv2d(vars[0], vars[1], vars[2], 1, 1)?;
                let p = g.leaf(probe.clone(), false);
                g.dot(y, p)
            },
            h,
            tol,
        )?);
    }

    // relu
    {
        let input = kink_free_tensor(&[2, 3, 4, 4], &mut rng);
        let probe = kink_free_tensor(&[2, 3, 4, 4], &mut rng);
        reports.push(finite_diff_check(
            "relu",
            &[input],
            move |g, vars| {
                let y = g.relu(vars[0]);
                let p = g.leaf(probe.clone(), false);
                g.dot(y, p)
            },
            h,
            tol,
        )?);
    }

    // add (both sides)
    {
        let a = kink_free_tensor(&[3, 4], &mut rng);
        let b = kink_free_tensor(&[3, 4], &mut rng);
        let probe = kink_free_tensor(&[3, 4], &mut rng);
        reports.push(finite_diff_check(
            "add",
            &[a, b],
            move |g, vars| {
                let y = g.add(vars[0], vars[1])?;
                let p = g.leaf(probe.clone(), false);
                g.dot(y, p)
            },
            h,
            tol,
        )?);
    }

    // scale by 0.1
    {
        let input = kink_free_tensor(&[2, 5], &mut rng);
        let probe = kink_free_tensor(&[2, 5], &mut rng);
        reports.push(finite_diff_check(
            "scale(0.1)",
            &[input],
            move |g, vars| {
                let y = g.scale(vars[0], 0.1);
                let p = g.leaf(probe.clone(), false);
                g.dot(y, p)
            },
            h,
            tol,
        )?);
    }

    // pixel_shuffle r=2
    {
        let input = kink_free_tensor(&[1, 8, 3, 3], &mut rng);
        let probe = kink_free_tensor(&[1, 2, 6, 6], &mut rng);
        reports.push(finite_diff_check(
            "pixel_shuffle(r=2)",
            &[input],
            move |g, vars| {
                let y = g.pixel_shuffle(vars[0], 2)?;
                let p = g.leaf(probe.clone(), false);
                g.dot(y, p)
            },
            h,
            tol,
        )?);
    }

    // linear 8 -> 4
    {
        let input = kink_free_tensor(&[2, 8], &mut rng);
        let weight = kink_free_tensor(&[4, 8], &mut rng);
        let bias = kink_free_tensor(&[4], &mut rng);
        let probe = kink_free_tensor(&[2, 4], &mut rng);
        reports.push(finite_diff_check(
            "linear(8->4)",
            &[input, weight, bias],
            move |g, vars| {
                let y = g.linear(vars[0], vars[1], vars[2])?;
                let p = g.leaf(probe.clone(), false);
                g.dot(y, p)
            },
            h,
            tol,
        )?);
    }

    // l1 loss, pred side, away from ties
    {
        let pred = kink_free_tensor(&[3, 3], &mut rng);
        let target: Tensor<f64> = Tensor::full(&[3, 3], 5.0);
        reports.push(finite_diff_check(
            "l1_loss",
            &[pred],
            move |g, vars| {
                let t = g.leaf(target.clone(), false);
                g.l1_loss(vars[0], t)
            },
            h,
            tol,
        )?);
    }

    // tile + concat as used by the feature-fusion stage
    {
        let vec = kink_free_tensor(&[2, 3], &mut rng);
        let local = kink_free_tensor(&[2, 2, 2, 2], &mut rng);
        let probe = kink_free_tensor(&[2, 5, 2, 2], &mut rng);
        reports.push(finite_diff_check(
            "tile_spatial + concat",
            &[vec, local],
            move |g, vars| {
                let tiled = g.tile_spatial(vars[0], 2, 2)?;
                let fused = g.concat_channels(vars[1], tiled)?;
                let p = g.leaf(probe.clone(), false);
                g.dot(fused, p)
            },
            h,
            tol,
        )?);
    }

    Ok(reports)
}
