//! Dense model parameters. Weights are stored as [in_dim, out_dim]
//! row-major so layer n's column count equals layer n+1's row count.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;
use crate::{Error, Result};

/// Architecture: input dim, hidden dims..., class count. Hidden layers
/// use ReLU, the output layer is identity (scores compared by argmax).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    layer_sizes: Vec<usize>,
}

impl NetworkSpec {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Contract(format!(
                "network needs at least input and output sizes, got {layer_sizes:?}"
            )));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::Contract(format!(
                "layer sizes must be positive, got {layer_sizes:?}"
            )));
        }
        Ok(NetworkSpec { layer_sizes })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn class_count(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn layer_count(&self) -> usize {
        self.layer_sizes.len() - 1
    }
}

/// One dense layer: weights [in, out] and bias [out].
#[derive(Debug, Clone)]
pub struct LayerParams {
    pub weights: Tensor,
    pub bias: Tensor,
}

impl LayerParams {
    pub fn new(weights: Tensor, bias: Tensor) -> Result<Self> {
        if weights.shape().len() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "layer weights must be 2-D, got {:?}",
                weights.shape()
            )));
        }
        if bias.shape().len() != 1 || bias.len() != weights.shape()[1] {
            return Err(Error::ShapeMismatch(format!(
                "bias {:?} does not match weights {:?}",
                bias.shape(),
                weights.shape()
            )));
        }
        Ok(LayerParams { weights, bias })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn byte_size(&self) -> u64 {
        self.weights.byte_size() + self.bias.byte_size()
    }

    pub fn snap_to_guard_grid(&mut self) {
        self.weights.snap_to_guard_grid();
        self.bias.snap_to_guard_grid();
    }
}

/// Ordered dense layers; adjacent layers must compose.
#[derive(Debug, Clone)]
pub struct ModelParams {
    layers: Vec<LayerParams>,
}

impl ModelParams {
    pub fn new(layers: Vec<LayerParams>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Contract("model needs at least one layer".into()));
        }
        for i in 1..layers.len() {
            if layers[i - 1].out_dim() != layers[i].in_dim() {
                return Err(Error::ShapeMismatch(format!(
                    "layer {} outputs {} but layer {} expects {}",
                    i - 1,
                    layers[i - 1].out_dim(),
                    i,
                    layers[i].in_dim()
                )));
            }
        }
        Ok(ModelParams { layers })
    }

    /// He-style uniform initialization on the guard grid, fully
    /// determined by the seed. Biases start at zero.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sizes = spec.layer_sizes();
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / fan_in as f32).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            let weights: Vec<f32> = (0..fan_in * fan_out).map(|_| dist.sample(&mut rng)).collect();
            let mut layer = LayerParams {
                weights: Tensor::new(vec![fan_in, fan_out], weights).unwrap(),
                bias: Tensor::zeros(vec![fan_out]).unwrap(),
            };
            layer.snap_to_guard_grid();
            layers.push(layer);
        }
        ModelParams { layers }
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn class_count(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    /// Recover the architecture from the stored shapes.
    pub fn spec(&self) -> NetworkSpec {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(|l| l.out_dim()));
        NetworkSpec { layer_sizes: sizes }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    pub fn byte_size(&self) -> u64 {
        self.layers.iter().map(|l| l.byte_size()).sum()
    }

    pub fn snap_to_guard_grid(&mut self) {
        for l in &mut self.layers {
            l.snap_to_guard_grid();
        }
    }
}

/// True when every tensor of both models is bit-identical.
pub fn models_bit_identical(a: &ModelParams, b: &ModelParams) -> bool {
    a.layer_count() == b.layer_count()
        && a.layers.iter().zip(&b.layers).all(|(la, lb)| {
            crate::tensor::bit_equal(&la.weights, &lb.weights).map(|c| c.equal).unwrap_or(false)
                && crate::tensor::bit_equal(&la.bias, &lb.bias).map(|c| c.equal).unwrap_or(false)
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation() {
        assert!(NetworkSpec::new(vec![4]).is_err());
        assert!(NetworkSpec::new(vec![4, 0, 2]).is_err());
        let s = NetworkSpec::new(vec![4, 8, 2]).unwrap();
        assert_eq!(s.input_dim(), 4);
        assert_eq!(s.class_count(), 2);
        assert_eq!(s.layer_count(), 2);
    }

    #[test]
    fn layers_must_compose() {
        let l1 = LayerParams::new(
            Tensor::zeros(vec![2, 3]).unwrap(),
            Tensor::zeros(vec![3]).unwrap(),
        )
        .unwrap();
        let bad = LayerParams::new(
            Tensor::zeros(vec![4, 1]).unwrap(),
            Tensor::zeros(vec![1]).unwrap(),
        )
        .unwrap();
        assert!(ModelParams::new(vec![l1.clone(), bad]).is_err());
        let good = LayerParams::new(
            Tensor::zeros(vec![3, 1]).unwrap(),
            Tensor::zeros(vec![1]).unwrap(),
        )
        .unwrap();
        assert!(ModelParams::new(vec![l1, good]).is_ok());
    }

    #[test]
    fn init_is_seed_deterministic_and_seed_sensitive() {
        let spec = NetworkSpec::new(vec![4, 8, 3]).unwrap();
        let a = ModelParams::init(&spec, 7);
        let b = ModelParams::init(&spec, 7);
        let c = ModelParams::init(&spec, 8);
        assert!(models_bit_identical(&a, &b));
        assert!(!models_bit_identical(&a, &c));
    }

    #[test]
    fn init_lands_on_guard_grid() {
        let spec = NetworkSpec::new(vec![4, 8, 3]).unwrap();
        let m = ModelParams::init(&spec, 3);
        for l in m.layers() {
            for &v in l.weights.as_slice() {
                assert_eq!(v, crate::tensor::snap_to_guard_grid(v));
            }
        }
    }

    #[test]
    fn spec_roundtrips_through_model() {
        let spec = NetworkSpec::new(vec![5, 7, 7, 2]).unwrap();
        let m = ModelParams::init(&spec, 1);
        assert_eq!(m.spec(), spec);
        assert_eq!(m.param_count(), 5 * 7 + 7 + 7 * 7 + 7 + 7 * 2 + 2);
    }
}
