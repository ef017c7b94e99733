// temporary: localize which parameter's analytic gradient is wrong
use qgcn::model::{forward_with_param_vars, InitScheme, Model, ModelConfig};
use qgcn::tensor::{Graph, Tensor, Var};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

#[test]
fn localize() {
    let cfg = ModelConfig {
        in_channels: 2, feat_channels: 4, n_res_per_group: 1, res_scale: 0.1,
        global_vec_dim: 4, global_input_size: 16,
        enable_global_branch: false, global_residual_skip: true,
        init: InitScheme::Gaussian { std: 0.05 },
    };
    let model: Model<f64> = Model::init(cfg.clone(), 21).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(77);
    let input = Tensor::<f64>::new(&[1,2,16,16], (0..512).map(|_| rng.random_range(0.05..0.95)).collect()).unwrap();
    let target = Tensor::<f64>::new(&[1,1,16,16], (0..256).map(|_| rng.random_range(3.0..4.0)).collect()).unwrap();

    let names: Vec<String> = model.params.entries().iter().map(|(n,_)| n.clone()).collect();
    let mut tensors: Vec<Tensor<f64>> = model.params.entries().iter().map(|(_,t)| t.clone()).collect();

    let eval = |tensors: &[Tensor<f64>]| -> f64 {
        let mut g = Graph::<f64>::new();
        let vars: Vec<Var> = tensors.iter().map(|t| g.leaf(t.clone(), false)).collect();
        let out = forward_with_param_vars(&mut g, &cfg, &vars, &input).unwrap();
        let t = g.leaf(target.clone(), false);
        let l = g.l1_loss(out, t).unwrap();
        g.value(l).data()[0]
    };

    // analytic
    let mut g = Graph::<f64>::new();
    let vars: Vec<Var> = tensors.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let out = forward_with_param_vars(&mut g, &cfg, &vars, &input).unwrap();
    let tv = g.leaf(target.clone(), false);
    let l = g.l1_loss(out, tv).unwrap();
    let grads = g.backward(l).unwrap();

    let h = 1e-4;
    for (ti, name) in names.iter().enumerate() {
        let analytic = grads.get(vars[ti]).cloned().unwrap_or_else(|| Tensor::zeros(tensors[ti].shape()));
        let mut worst = 0.0f64; let mut worst_ix = 0;
        for ei in 0..tensors[ti].len() {
            let orig = tensors[ti].data()[ei];
            tensors[ti].data_mut()[ei] = orig + h;
            let plus = eval(&tensors);
            tensors[ti].data_mut()[ei] = orig - h;
            let minus = eval(&tensors);
            tensors[ti].data_mut()[ei] = orig;
            let numeric = (plus - minus) / (2.0*h);
            let a = analytic.data()[ei];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            if rel > worst { worst = rel; worst_ix = ei; }
        }
        println!("{:40} max_rel={:.3e} at {}", name, worst, worst_ix);
    }
}
