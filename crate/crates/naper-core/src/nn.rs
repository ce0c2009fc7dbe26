//! Forward pass, independent training, ensemble average voting, and
//! accuracy evaluation for the dense models in `model`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::model::{ModelParams, NetworkSpec};
use crate::par;
use crate::{Error, Result};

/// How member scores are combined: raw logits averaged (default) or
/// per-member softmax probabilities averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnsembleMode {
    #[default]
    Logits,
    Softmax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f32,
    pub batch_size: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Scores = W_L · ReLU(... ReLU(W_1·x + b_1) ...) + b_L. NaN in the
/// parameters propagates to the scores: a corrupted model must visibly
/// corrupt its output.
pub fn forward(model: &ModelParams, x: &[f32]) -> Result<Vec<f32>> {
    if x.len() != model.input_dim() {
        return Err(Error::Contract(format!(
            "input length {} does not match model input dim {}",
            x.len(),
            model.input_dim()
        )));
    }
    let last = model.layer_count() - 1;
    let mut act = x.to_vec();
    let mut next = Vec::new();
    for (li, layer) in model.layers().iter().enumerate() {
        let (rows, cols) = (layer.in_dim(), layer.out_dim());
        let w = layer.weights.as_slice();
        next.clear();
        next.extend_from_slice(layer.bias.as_slice());
        for i in 0..rows {
            let xi = act[i];
            let row = &w[i * cols..(i + 1) * cols];
            for (o, wv) in next.iter_mut().zip(row) {
                *o += xi * wv;
            }
        }
        if li != last {
            for v in &mut next {
                *v = v.max(0.0);
            }
        }
        std::mem::swap(&mut act, &mut next);
    }
    Ok(act)
}

/// Element-wise mean of score vectors, summed in the order given.
pub fn mean_scores(scores: &[Vec<f32>]) -> Vec<f32> {
    let k = scores.len() as f32;
    let mut out = scores[0].clone();
    for s in &scores[1..] {
        for (o, v) in out.iter_mut().zip(s) {
            *o += v;
        }
    }
    for o in &mut out {
        *o /= k;
    }
    out
}

/// Ensemble inference: mean of the member score vectors (logit mode).
pub fn ensemble_infer(models: &[&ModelParams], x: &[f32]) -> Result<Vec<f32>> {
    ensemble_infer_mode(models, x, EnsembleMode::Logits)
}

pub fn ensemble_infer_mode(
    models: &[&ModelParams],
    x: &[f32],
    mode: EnsembleMode,
) -> Result<Vec<f32>> {
    if models.is_empty() {
        return Err(Error::Contract("ensemble needs at least one model".into()));
    }
    let mut scores = Vec::with_capacity(models.len());
    for m in models {
        let mut s = forward(m, x)?;
        if mode == EnsembleMode::Softmax {
            softmax_in_place(&mut s);
        }
        scores.push(s);
    }
    Ok(mean_scores(&scores))
}

fn softmax_in_place(z: &mut [f32]) {
    let max = z.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f32;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Argmax with ties broken by the lowest class index. NaN scores never
/// win over an earlier finite score.
pub fn argmax(scores: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate().skip(1) {
        if v > scores[best] {
            best = i;
        }
    }
    best
}

/// Fraction of samples whose ensemble argmax matches the label.
/// Parallel over samples when built with the `parallel` feature; the
/// count is an integer reduction, so the result is identical either way.
pub fn evaluate(models: &[&ModelParams], data: &Dataset) -> Result<f64> {
    check_eval_inputs(models, data)?;
    let correct: usize = par::map_indexed(data.n_samples(), |i| {
        let scores = ensemble_infer(models, data.sample(i)).expect("dims pre-checked");
        usize::from(argmax(&scores) == data.label(i))
    })
    .into_iter()
    .sum();
    Ok(correct as f64 / data.n_samples() as f64)
}

/// Always-sequential evaluation; the benches compare this against the
/// parallel path.
pub fn evaluate_seq(models: &[&ModelParams], data: &Dataset) -> Result<f64> {
    check_eval_inputs(models, data)?;
    let mut correct = 0usize;
    for i in 0..data.n_samples() {
        let scores = ensemble_infer(models, data.sample(i))?;
        correct += usize::from(argmax(&scores) == data.label(i));
    }
    Ok(correct as f64 / data.n_samples() as f64)
}

fn check_eval_inputs(models: &[&ModelParams], data: &Dataset) -> Result<()> {
    if data.n_samples() == 0 {
        return Err(Error::Contract("evaluation dataset is empty".into()));
    }
    if models.is_empty() {
        return Err(Error::Contract("evaluate needs at least one model".into()));
    }
    for m in models {
        if m.input_dim() != data.n_features() {
            return Err(Error::Contract(format!(
                "model input dim {} does not match dataset features {}",
                m.input_dim(),
                data.n_features()
            )));
        }
    }
    Ok(())
}

/// Mini-batch SGD with softmax cross-entropy. Initialization and batch
/// order come from the seeded generator, so the same (spec, data, cfg)
/// reproduces the model bit for bit; distinct seeds give distinct
/// parameters. The finished model is snapped onto the guard grid so its
/// relation sums stay exactly invertible.
pub fn train_independent(
    spec: &NetworkSpec,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<ModelParams> {
    cfg.validate()?;
    if data.n_samples() == 0 {
        return Err(Error::Contract("training dataset is empty".into()));
    }
    if spec.input_dim() != data.n_features() {
        return Err(Error::Contract(format!(
            "spec input dim {} does not match dataset features {}",
            spec.input_dim(),
            data.n_features()
        )));
    }
    if spec.class_count() != data.n_classes() {
        return Err(Error::Contract(format!(
            "spec class count {} does not match dataset classes {}",
            spec.class_count(),
            data.n_classes()
        )));
    }

    let mut model = ModelParams::init(spec, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9E37_79B9_7F4A_7C15);
    let n = data.n_samples();
    let mut order: Vec<usize> = (0..n).collect();

    let layer_count = model.layer_count();
    let mut grads_w: Vec<Vec<f32>> = model.layers().iter().map(|l| vec![0.0; l.weights.len()]).collect();
    let mut grads_b: Vec<Vec<f32>> = model.layers().iter().map(|l| vec![0.0; l.bias.len()]).collect();
    // Per-sample forward state: post-activation of every layer boundary.
    let mut acts: Vec<Vec<f32>> = Vec::new();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0f64;
        for batch in order.chunks(cfg.batch_size) {
            for g in &mut grads_w {
                g.iter_mut().for_each(|v| *v = 0.0);
            }
            for g in &mut grads_b {
                g.iter_mut().for_each(|v| *v = 0.0);
            }
            for &si in batch {
                let x = data.sample(si);
                let y = data.label(si);
                // Forward, keeping activations for backprop.
                acts.clear();
                acts.push(x.to_vec());
                for (li, layer) in model.layers().iter().enumerate() {
                    let (rows, cols) = (layer.in_dim(), layer.out_dim());
                    let w = layer.weights.as_slice();
                    let prev = &acts[li];
                    let mut out = layer.bias.as_slice().to_vec();
                    for i in 0..rows {
                        let xi = prev[i];
                        let row = &w[i * cols..(i + 1) * cols];
                        for (o, wv) in out.iter_mut().zip(row) {
                            *o += xi * wv;
                        }
                    }
                    if li != layer_count - 1 {
                        for v in &mut out {
                            *v = v.max(0.0);
                        }
                    }
                    acts.push(out);
                }
                // Softmax cross-entropy gradient at the output.
                let logits = acts.last().unwrap();
                let maxz = logits.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
                let exps: Vec<f32> = logits.iter().map(|z| (z - maxz).exp()).collect();
                let sum: f32 = exps.iter().sum();
                let mut delta: Vec<f32> = exps.iter().map(|e| e / sum).collect();
                let p = delta[y];
                epoch_loss += if p.is_nan() {
                    f64::NAN
                } else {
                    -f64::from(p.max(f32::MIN_POSITIVE)).ln()
                };
                delta[y] -= 1.0;
                // Backward.
                for li in (0..layer_count).rev() {
                    let layer = &model.layers()[li];
                    let (rows, cols) = (layer.in_dim(), layer.out_dim());
                    let prev = &acts[li];
                    let gw = &mut grads_w[li];
                    for i in 0..rows {
                        let xi = prev[i];
                        let grow = &mut gw[i * cols..(i + 1) * cols];
                        for (g, d) in grow.iter_mut().zip(&delta) {
                            *g += xi * d;
                        }
                    }
                    for (g, d) in grads_b[li].iter_mut().zip(&delta) {
                        *g += d;
                    }
                    if li > 0 {
                        let w = layer.weights.as_slice();
                        let mut prev_delta = vec![0.0f32; rows];
                        for i in 0..rows {
                            if prev[i] > 0.0 {
                                let row = &w[i * cols..(i + 1) * cols];
                                let mut acc = 0.0f32;
                                for (wv, d) in row.iter().zip(&delta) {
                                    acc += wv * d;
                                }
                                prev_delta[i] = acc;
                            }
                        }
                        delta = prev_delta;
                    }
                }
            }
            let scale = cfg.learning_rate / batch.len() as f32;
            for (li, layer) in model.layers_mut().iter_mut().enumerate() {
                for (w, g) in layer.weights.as_mut_slice().iter_mut().zip(&grads_w[li]) {
                    *w -= scale * g;
                }
                for (b, g) in layer.bias.as_mut_slice().iter_mut().zip(&grads_b[li]) {
                    *b -= scale * g;
                }
            }
        }
        if !epoch_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
    }
    model.snap_to_guard_grid();
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_synthetic;
    use crate::model::{models_bit_identical, LayerParams};
    use crate::tensor::Tensor;

    fn model_1layer(weights: Vec<f32>, rows: usize, cols: usize, bias: Vec<f32>) -> ModelParams {
        ModelParams::new(vec![LayerParams::new(
            Tensor::new(vec![rows, cols], weights).unwrap(),
            Tensor::from_vec(bias),
        )
        .unwrap()])
        .unwrap()
    }

    #[test]
    fn forward_identity_weights() {
        let m = model_1layer(vec![1.0, 0.0, 0.0, 1.0], 2, 2, vec![0.0, 0.0]);
        let s = forward(&m, &[3.0, -2.0]).unwrap();
        assert_eq!(s, vec![3.0, -2.0]);
    }

    #[test]
    fn forward_bias_only() {
        let m = model_1layer(vec![0.0, 0.0, 0.0, 0.0], 2, 2, vec![1.0, 0.0]);
        let s = forward(&m, &[5.0, 9.0]).unwrap();
        assert_eq!(s, vec![1.0, 0.0]);
    }

    #[test]
    fn forward_two_layer_hand_computed() {
        // W1=[[2]], b1=[-1], W2=[[3]], b2=[0.5]; x=[1] -> ReLU(1)*3+0.5.
        let l1 = LayerParams::new(
            Tensor::new(vec![1, 1], vec![2.0]).unwrap(),
            Tensor::from_vec(vec![-1.0]),
        )
        .unwrap();
        let l2 = LayerParams::new(
            Tensor::new(vec![1, 1], vec![3.0]).unwrap(),
            Tensor::from_vec(vec![0.5]),
        )
        .unwrap();
        let m = ModelParams::new(vec![l1, l2]).unwrap();
        assert_eq!(forward(&m, &[1.0]).unwrap(), vec![3.5]);
    }

    #[test]
    fn forward_rejects_bad_input_dim() {
        let m = model_1layer(vec![0.0; 4], 2, 2, vec![0.0; 2]);
        assert!(forward(&m, &[1.0]).is_err());
    }

    #[test]
    fn forward_propagates_nan() {
        let m = model_1layer(vec![f32::NAN, 0.0, 0.0, 1.0], 2, 2, vec![0.0, 0.0]);
        let s = forward(&m, &[1.0, 1.0]).unwrap();
        assert!(s[0].is_nan());
    }

    #[test]
    fn ensemble_examples() {
        let a = model_1layer(vec![0.0; 4], 2, 2, vec![1.0, 3.0]);
        let b = model_1layer(vec![0.0; 4], 2, 2, vec![3.0, 1.0]);
        let one = ensemble_infer(&[&a], &[0.0, 0.0]).unwrap();
        assert_eq!(one, forward(&a, &[0.0, 0.0]).unwrap());
        let two = ensemble_infer(&[&a, &b], &[0.0, 0.0]).unwrap();
        assert_eq!(two, vec![2.0, 2.0]);

        let c1 = model_1layer(vec![0.0; 4], 2, 2, vec![1.0, 0.0]);
        let c2 = model_1layer(vec![0.0; 4], 2, 2, vec![0.0, 1.0]);
        let c3 = model_1layer(vec![0.0; 4], 2, 2, vec![1.0, 1.0]);
        let three = ensemble_infer(&[&c1, &c2, &c3], &[0.0, 0.0]).unwrap();
        assert_eq!(three, vec![2.0 / 3.0, 2.0 / 3.0]);
    }

    #[test]
    fn ensemble_of_identical_copies_matches_forward() {
        let spec = NetworkSpec::new(vec![4, 6, 3]).unwrap();
        let m = ModelParams::init(&spec, 11);
        let x = [0.3, -0.2, 0.9, 0.01];
        let single = forward(&m, &x).unwrap();
        for k in [1usize, 2, 4] {
            let copies: Vec<&ModelParams> = (0..k).map(|_| &m).collect();
            let s = ensemble_infer(&copies, &x).unwrap();
            let bitwise: Vec<u32> = s.iter().map(|v| v.to_bits()).collect();
            let expect: Vec<u32> = single.iter().map(|v| v.to_bits()).collect();
            assert_eq!(bitwise, expect, "k={k}");
        }
    }

    #[test]
    fn ensemble_rejects_empty() {
        assert!(ensemble_infer(&[], &[1.0]).is_err());
    }

    #[test]
    fn softmax_mode_preserves_argmax_here() {
        let a = model_1layer(vec![0.0; 4], 2, 2, vec![2.0, -1.0]);
        let s = ensemble_infer_mode(&[&a], &[0.0, 0.0], EnsembleMode::Softmax).unwrap();
        assert!((s.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        assert_eq!(argmax(&s), 0);
    }

    #[test]
    fn evaluate_perfect_and_tied_models() {
        let data = gen_synthetic(3, 30, 2, 3, 0.1).unwrap();
        // A model that outputs one-hot of the true label exists only for
        // trivial data; emulate with per-sample check through a constant
        // model instead: constant scores tie-break to class 0.
        let constant = model_1layer(vec![0.0; 2 * 3], 2, 3, vec![0.0; 3]);
        let acc = evaluate(&[&constant], &data).unwrap();
        let frac0 = data.labels().iter().filter(|&&l| l == 0).count() as f64 / 30.0;
        assert_eq!(acc, frac0);
        assert!((acc - 1.0 / 3.0).abs() < 0.05);
    }

    #[test]
    fn evaluate_perfect_model_scores_one() {
        // scores = [x, -x]: sign of x picks the class, matching labels.
        let m = model_1layer(vec![1.0, -1.0], 1, 2, vec![0.0, 0.0]);
        let data = Dataset::new(vec![2.0, -3.0, 0.5, -0.1], vec![0, 1, 0, 1], 1, 2).unwrap();
        assert_eq!(evaluate(&[&m], &data).unwrap(), 1.0);
    }

    #[test]
    fn evaluate_hand_built_two_of_three() {
        // 1-D inputs, 2 classes; model scores = [x, 0]: positive x ->
        // class 0, negative -> class 1 (0 beats equal tie at x=0).
        let m = model_1layer(vec![1.0, 0.0], 1, 2, vec![0.0, 0.0]);
        let data = Dataset::new(vec![1.0, -1.0, -1.0], vec![0, 1, 0], 1, 2).unwrap();
        let acc = evaluate(&[&m], &data).unwrap();
        assert!((acc - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn evaluate_parallel_matches_sequential() {
        let data = gen_synthetic(5, 200, 8, 4, 1.0).unwrap();
        let spec = NetworkSpec::new(vec![8, 16, 4]).unwrap();
        let m1 = ModelParams::init(&spec, 1);
        let m2 = ModelParams::init(&spec, 2);
        let a = evaluate(&[&m1, &m2], &data).unwrap();
        let b = evaluate_seq(&[&m1, &m2], &data).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let data = gen_synthetic(9, 120, 4, 2, 0.5).unwrap();
        let spec = NetworkSpec::new(vec![4, 8, 2]).unwrap();
        let cfg = TrainConfig {
            seed: 5,
            epochs: 3,
            learning_rate: 0.1,
            batch_size: 16,
        };
        let a = train_independent(&spec, &data, &cfg).unwrap();
        let b = train_independent(&spec, &data, &cfg).unwrap();
        assert!(models_bit_identical(&a, &b));
        let c = train_independent(
            &spec,
            &data,
            &TrainConfig {
                seed: 6,
                ..cfg.clone()
            },
        )
        .unwrap();
        assert!(!models_bit_identical(&a, &c));
    }

    #[test]
    fn training_learns_separable_blobs() {
        let data = gen_synthetic(3, 200, 4, 2, 0.3).unwrap();
        let spec = NetworkSpec::new(vec![4, 16, 2]).unwrap();
        let cfg = TrainConfig {
            seed: 1,
            epochs: 50,
            learning_rate: 0.1,
            batch_size: 16,
        };
        let m = train_independent(&spec, &data, &cfg).unwrap();
        let acc = evaluate(&[&m], &data).unwrap();
        assert!(acc >= 0.95, "training accuracy {acc} below 0.95");
    }

    #[test]
    fn training_divergence_is_reported_with_epoch() {
        let data = gen_synthetic(3, 64, 4, 2, 0.3).unwrap();
        let spec = NetworkSpec::new(vec![4, 8, 2]).unwrap();
        let cfg = TrainConfig {
            seed: 1,
            epochs: 10,
            learning_rate: 1.0e30,
            batch_size: 8,
        };
        match train_independent(&spec, &data, &cfg) {
            Err(Error::Diverged { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn trained_model_is_on_guard_grid() {
        let data = gen_synthetic(4, 80, 4, 2, 0.4).unwrap();
        let spec = NetworkSpec::new(vec![4, 6, 2]).unwrap();
        let cfg = TrainConfig {
            seed: 2,
            epochs: 2,
            learning_rate: 0.05,
            batch_size: 8,
        };
        let m = train_independent(&spec, &data, &cfg).unwrap();
        for l in m.layers() {
            for &v in l.weights.as_slice().iter().chain(l.bias.as_slice()) {
                assert_eq!(v.to_bits(), crate::tensor::snap_to_guard_grid(v).to_bits());
            }
        }
    }
}
