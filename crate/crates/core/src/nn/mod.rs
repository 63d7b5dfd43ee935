//! Feed-forward network core with exact reverse-mode gradients.

mod conv;
mod dense;
mod gradcheck;
mod loss;

pub use conv::{col2im, im2col, Conv2DLayer, ConvGeometry};
pub use dense::{relu, relu_backward, DenseLayer};
pub use gradcheck::{central_difference, finite_difference_grad, max_relative_deviation};
pub use loss::{accuracy, argmax, cross_entropy, mse, Objective};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inherit::{
    InherConvCache, InherConvLayer, InherNetCache, InherNetLayer, InverseCache, InverseLayer,
    SymmetricCache, SymmetricLayer,
};
use crate::linalg::Matrix;
use crate::rng::{domain, Philox};

/// One stage of a [`Network`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    Dense(DenseLayer),
    Relu,
    Conv2d(Conv2DLayer),
    Inher(InherNetLayer),
    InherConv(InherConvLayer),
    Inverse(InverseLayer),
    Symmetric(SymmetricLayer),
}

/// Per-call intermediates needed by backward.
#[derive(Debug, Clone)]
pub enum LayerCache {
    Input(Matrix),
    Inher(InherNetCache),
    InherConv(InherConvCache),
    Inverse(InverseCache),
    Symmetric(SymmetricCache),
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Relu => "relu",
            Layer::Conv2d(_) => "conv2d",
            Layer::Inher(_) => "inher",
            Layer::InherConv(_) => "inher_conv",
            Layer::Inverse(_) => "inverse",
            Layer::Symmetric(_) => "symmetric",
        }
    }

    /// Expected input width, `None` for shape-agnostic layers.
    pub fn input_dim(&self) -> Option<usize> {
        match self {
            Layer::Dense(l) => Some(l.input_dim()),
            Layer::Relu => None,
            Layer::Conv2d(l) => Some(l.input_dim()),
            Layer::Inher(l) => Some(l.input_dim()),
            Layer::InherConv(l) => Some(l.input_dim()),
            Layer::Inverse(l) => Some(l.input_dim()),
            Layer::Symmetric(l) => Some(l.input_dim()),
        }
    }

    pub fn output_dim(&self) -> Option<usize> {
        match self {
            Layer::Dense(l) => Some(l.output_dim()),
            Layer::Relu => None,
            Layer::Conv2d(l) => Some(l.output_dim()),
            Layer::Inher(l) => Some(l.output_dim()),
            Layer::InherConv(l) => Some(l.output_dim()),
            Layer::Inverse(l) => Some(l.output_dim()),
            Layer::Symmetric(l) => Some(l.output_dim()),
        }
    }

    pub fn forward_cached(&self, x: &Matrix) -> Result<(Matrix, LayerCache)> {
        Ok(match self {
            Layer::Dense(l) => (l.forward(x)?, LayerCache::Input(x.clone())),
            Layer::Relu => (relu(x), LayerCache::Input(x.clone())),
            Layer::Conv2d(l) => (l.forward(x)?, LayerCache::Input(x.clone())),
            Layer::Inher(l) => {
                let (y, c) = l.forward_cached(x)?;
                (y, LayerCache::Inher(c))
            }
            Layer::InherConv(l) => {
                let (y, c) = l.forward_cached(x)?;
                (y, LayerCache::InherConv(c))
            }
            Layer::Inverse(l) => {
                let (y, c) = l.forward_cached(x)?;
                (y, LayerCache::Inverse(c))
            }
            Layer::Symmetric(l) => {
                let (y, c) = l.forward_cached(x)?;
                (y, LayerCache::Symmetric(c))
            }
        })
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            Layer::Dense(l) => l.forward(x),
            Layer::Relu => Ok(relu(x)),
            Layer::Conv2d(l) => l.forward(x),
            _ => Ok(self.forward_cached(x)?.0),
        }
    }

    /// Returns `(dX, per-parameter gradients)` in [`params`](Self::params) order.
    pub fn backward(&self, cache: &LayerCache, dy: &Matrix) -> Result<(Matrix, Vec<Vec<f64>>)> {
        match (self, cache) {
            (Layer::Dense(l), LayerCache::Input(x)) => l.backward(x, dy),
            (Layer::Relu, LayerCache::Input(x)) => Ok((relu_backward(x, dy), Vec::new())),
            (Layer::Conv2d(l), LayerCache::Input(x)) => l.backward(x, dy),
            (Layer::Inher(l), LayerCache::Inher(c)) => l.backward(c, dy),
            (Layer::InherConv(l), LayerCache::InherConv(c)) => l.backward(c, dy),
            (Layer::Inverse(l), LayerCache::Inverse(c)) => l.backward(c, dy),
            (Layer::Symmetric(l), LayerCache::Symmetric(c)) => l.backward(c, dy),
            _ => Err(Error::State(format!("cache does not belong to a {} layer", self.kind()))),
        }
    }

    pub fn params(&self) -> Vec<&[f64]> {
        match self {
            Layer::Dense(l) => l.params(),
            Layer::Relu => Vec::new(),
            Layer::Conv2d(l) => l.params(),
            Layer::Inher(l) => l.params(),
            Layer::InherConv(l) => l.params(),
            Layer::Inverse(l) => l.params(),
            Layer::Symmetric(l) => l.params(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Layer::Dense(l) => l.params_mut(),
            Layer::Relu => Vec::new(),
            Layer::Conv2d(l) => l.params_mut(),
            Layer::Inher(l) => l.params_mut(),
            Layer::InherConv(l) => l.params_mut(),
            Layer::Inverse(l) => l.params_mut(),
            Layer::Symmetric(l) => l.params_mut(),
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        match self {
            Layer::Dense(l) => l.param_names(),
            Layer::Relu => Vec::new(),
            Layer::Conv2d(l) => l.param_names(),
            Layer::Inher(l) => l.param_names(),
            Layer::InherConv(l) => l.param_names(),
            Layer::Inverse(l) => l.param_names(),
            Layer::Symmetric(l) => l.param_names(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Removes any learned gate so mixing is uniform. No-op for ungated layers.
    pub fn freeze_gate_uniform(&mut self) {
        match self {
            Layer::Inher(l) => l.gate = None,
            Layer::InherConv(l) => l.gate = None,
            Layer::Inverse(l) => l.gate = None,
            Layer::Symmetric(l) => l.gate = None,
            _ => {}
        }
    }
}

/// Gradients laid out as `layers[layer][param_tensor][entry]`, matching
/// [`Network::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Vec<Vec<f64>>>,
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        self.layers.iter().flatten().flatten().copied().collect()
    }

    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .flatten()
            .flatten()
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().flatten().flatten().all(|g| g.is_finite())
    }

    pub fn len(&self) -> usize {
        self.layers.iter().flatten().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
struct TrainCache {
    batch: usize,
    caches: Vec<LayerCache>,
}

/// An ordered stack of layers.
///
/// `forward` is a pure evaluation; `forward_train` additionally records the
/// intermediates consumed by the next `backward`.
#[derive(Debug, Clone, Default)]
pub struct Network {
    layers: Vec<Layer>,
    cache: Option<TrainCache>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let net = Self { layers, cache: None };
        net.validate()?;
        Ok(net)
    }

    /// ReLU MLP with Kaiming-uniform weights: `dims = [in, h1, ..., out]`.
    pub fn mlp(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::shape("mlp dims", "at least two positive widths", format!("{dims:?}")));
        }
        let mut rng = Philox::derived(seed, domain::INIT, 0);
        let mut layers = Vec::new();
        for (i, w) in dims.windows(2).enumerate() {
            if i > 0 {
                layers.push(Layer::Relu);
            }
            layers.push(Layer::Dense(DenseLayer::kaiming(w[0], w[1], true, &mut rng)));
        }
        Self::new(layers)
    }

    /// Checks that adjacent layer widths compose.
    pub fn validate(&self) -> Result<()> {
        let mut width: Option<usize> = None;
        for (i, l) in self.layers.iter().enumerate() {
            if let (Some(w), Some(inp)) = (width, l.input_dim()) {
                if w != inp {
                    return Err(Error::shape(format!("layer {i} ({})", l.kind()), inp, w));
                }
            }
            if let Some(o) = l.output_dim() {
                width = Some(o);
            }
        }
        Ok(())
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable access drops any pending training cache.
    pub fn layers_mut(&mut self) -> &mut Vec<Layer> {
        self.cache = None;
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<Layer> {
        self.layers
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.layers.iter().find_map(Layer::input_dim)
    }

    pub fn output_dim(&self) -> Option<usize> {
        self.layers.iter().rev().find_map(Layer::output_dim)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Layer::parameter_count).sum()
    }

    fn check_input(&self, i: usize, layer: &Layer, x: &Matrix) -> Result<()> {
        if let Some(d) = layer.input_dim() {
            if x.cols() != d {
                return Err(Error::shape(format!("layer {i} ({})", layer.kind()), d, x.cols()));
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut h = x.clone();
        for (i, l) in self.layers.iter().enumerate() {
            self.check_input(i, l, &h)?;
            h = l.forward(&h)?;
        }
        Ok(h)
    }

    pub fn forward_train(&mut self, x: &Matrix) -> Result<Matrix> {
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            self.check_input(i, l, &h)?;
            let (y, c) = l.forward_cached(&h)?;
            caches.push(c);
            h = y;
        }
        self.cache = Some(TrainCache {
            batch: x.rows(),
            caches,
        });
        Ok(h)
    }

    /// Consumes the cache left by the preceding [`forward_train`](Self::forward_train).
    pub fn backward(&mut self, loss_grad: &Matrix) -> Result<Gradients> {
        Ok(self.backward_with_input_grad(loss_grad)?.0)
    }

    /// As [`backward`](Self::backward), also returning the gradient wrt the input batch.
    pub fn backward_with_input_grad(&mut self, loss_grad: &Matrix) -> Result<(Gradients, Matrix)> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("backward called before forward_train".into()))?;
        if cache.batch != loss_grad.rows() {
            return Err(Error::shape("backward loss gradient rows", cache.batch, loss_grad.rows()));
        }
        let mut grads = vec![Vec::new(); self.layers.len()];
        let mut dy = loss_grad.clone();
        for (i, (l, c)) in self.layers.iter().zip(&cache.caches).enumerate().rev() {
            let (dx, g) = l.backward(c, &dy)?;
            grads[i] = g;
            dy = dx;
        }
        Ok((Gradients { layers: grads }, dy))
    }

    pub fn params(&self) -> Vec<Vec<&[f64]>> {
        self.layers.iter().map(Layer::params).collect()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.params().into_iter().flatten().copied().collect::<Vec<_>>())
            .collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.parameter_count();
        if flat.len() != n {
            return Err(Error::shape("set_flat_params", n, flat.len()));
        }
        self.cache = None;
        let mut off = 0;
        for l in &mut self.layers {
            for p in l.params_mut() {
                p.copy_from_slice(&flat[off..off + p.len()]);
                off += p.len();
            }
        }
        Ok(())
    }

    /// `θ ← θ − lr·g`, layer by layer.
    pub fn apply_update(&mut self, grads: &Gradients, lr: f64) -> Result<()> {
        if grads.layers.len() != self.layers.len() {
            return Err(Error::shape("apply_update layers", self.layers.len(), grads.layers.len()));
        }
        self.cache = None;
        for (i, (l, g)) in self.layers.iter_mut().zip(&grads.layers).enumerate() {
            let ps = l.params_mut();
            if ps.len() != g.len() {
                return Err(Error::shape(format!("apply_update layer {i}"), ps.len(), g.len()));
            }
            for (p, gp) in ps.into_iter().zip(g) {
                for (w, d) in p.iter_mut().zip(gp) {
                    *w -= lr * d;
                }
            }
        }
        Ok(())
    }

    /// Replaces every learned gate with uniform mixing.
    pub fn freeze_gates_uniform(&mut self) {
        self.cache = None;
        for l in &mut self.layers {
            l.freeze_gate_uniform();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(w: Matrix, b: Option<Vec<f64>>) -> Layer {
        Layer::Dense(DenseLayer::new(w, b).unwrap())
    }

    #[test]
    fn identity_dense_is_identity() {
        let net = Network::new(vec![dense(Matrix::identity(3), Some(vec![0.0; 3]))]).unwrap();
        let mut rng = Philox::new(1, 0);
        let x = Matrix::random_normal(4, 3, &mut rng);
        assert_eq!(net.forward(&x).unwrap(), x);
    }

    #[test]
    fn zero_input_zero_bias_gives_zero() {
        let mut rng = Philox::new(2, 0);
        let l = DenseLayer::kaiming(5, 3, true, &mut rng);
        assert_eq!(l.parameter_count(), 5 * 3 + 3);
        let y = l.forward(&Matrix::zeros(2, 5)).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stacked_linear_equals_product() {
        let mut rng = Philox::new(3, 0);
        let a = Matrix::random_normal(4, 6, &mut rng);
        let b = Matrix::random_normal(6, 2, &mut rng);
        let net = Network::new(vec![dense(a.clone(), None), dense(b.clone(), None)]).unwrap();
        let single = Network::new(vec![dense(a.matmul(&b).unwrap(), None)]).unwrap();
        let x = Matrix::random_normal(5, 4, &mut rng);
        let d = net.forward(&x).unwrap().max_abs_diff(&single.forward(&x).unwrap()).unwrap();
        assert!(d < 1e-12);
    }

    #[test]
    fn shape_error_names_layer() {
        let net = Network::mlp(&[4, 8, 2], 0).unwrap();
        let err = net.forward(&Matrix::zeros(1, 5)).unwrap_err().to_string();
        assert!(err.contains("layer 0"), "{err}");
        assert!(Network::new(vec![dense(Matrix::zeros(3, 4), None), dense(Matrix::zeros(5, 2), None)]).is_err());
    }

    #[test]
    fn backward_before_forward_is_state_error() {
        let mut net = Network::mlp(&[3, 2], 0).unwrap();
        assert!(matches!(net.backward(&Matrix::zeros(1, 2)), Err(Error::State(_))));
        net.forward_train(&Matrix::zeros(2, 3)).unwrap();
        assert!(net.backward(&Matrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn exact_fit_has_zero_gradient() {
        let mut net = Network::mlp(&[3, 5, 2], 4).unwrap();
        let mut rng = Philox::new(4, 1);
        let x = Matrix::random_normal(6, 3, &mut rng);
        let y = net.forward(&x).unwrap();
        let pred = net.forward_train(&x).unwrap();
        let (loss, g) = mse(&pred, &y).unwrap();
        assert_eq!(loss, 0.0);
        let grads = net.backward(&g).unwrap();
        assert_eq!(grads.norm(), 0.0);
    }

    #[test]
    fn single_dense_mse_closed_form() {
        let w = Matrix::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.25]]).unwrap();
        let mut net = Network::new(vec![dense(w.clone(), None)]).unwrap();
        let x = Matrix::from_rows(&[vec![1.5, -0.5]]).unwrap();
        let y = Matrix::from_rows(&[vec![0.2, 0.3]]).unwrap();
        let pred = net.forward_train(&x).unwrap();
        let (_, g) = mse(&pred, &y).unwrap();
        let grads = net.backward(&g).unwrap();
        // 2·xᵀ(xW − y)/n_out
        let r = x.matmul(&w).unwrap().sub(&y).unwrap();
        let expected = crate::linalg::matmul_tn(&x, &r).unwrap().scale(2.0 / 2.0);
        for (a, b) in grads.layers[0][0].iter().zip(expected.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn flat_params_round_trip() {
        let mut net = Network::mlp(&[3, 4, 2], 9).unwrap();
        let p = net.flat_params();
        assert_eq!(p.len(), net.parameter_count());
        let doubled: Vec<f64> = p.iter().map(|v| v * 2.0).collect();
        net.set_flat_params(&doubled).unwrap();
        assert_eq!(net.flat_params(), doubled);
    }
}
