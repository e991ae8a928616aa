use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    /// Absolute value; only allowed on the output layer.
    Abs,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Abs => z.abs(),
            Activation::Linear => z,
        }
    }

    /// Derivative at `z`; zero at the kinks.
    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Abs => {
                if z > 0.0 {
                    1.0
                } else if z < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Abs => 1,
            Activation::Linear => 2,
        }
    }

    pub(crate) fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Abs),
            2 => Ok(Activation::Linear),
            _ => Err(Error::Data(format!("unknown activation code {c}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Affine map followed by an activation. Weights are stored `inputs × outputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

/// Fully connected feed-forward network with inverted dropout after each
/// hidden activation.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<Layer>,
    dropout: f64,
}

/// Per-layer parameter gradients, shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| (Array2::zeros(l.weights.raw_dim()), Array1::zeros(l.bias.len())))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            *w += ow;
            *b += ob;
        }
    }

    /// Flattened view in layer order (weights row-major, then bias).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    masks: Vec<Option<Array2<f64>>>,
}

impl DenseNet {
    /// `sizes` = [inputs, hidden.., outputs]. Hidden weights use He-uniform
    /// initialisation, the output layer Glorot-uniform; biases are drawn from
    /// U(±1/√fan_in).
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Dimension(format!("invalid layer sizes {sizes:?}")));
        }
        if hidden == Activation::Abs {
            return Err(Error::Config("abs activation is only allowed on the output".into()));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Config(format!("dropout {dropout} not in [0, 1)")));
        }
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let (fan_in, fan_out) = (sizes[i], sizes[i + 1]);
                let last = i + 1 == n;
                let limit = if last {
                    (6.0 / (fan_in + fan_out) as f64).sqrt()
                } else {
                    (6.0 / fan_in as f64).sqrt()
                };
                let wdist = Uniform::new_inclusive(-limit, limit).unwrap();
                let bl = 1.0 / (fan_in as f64).sqrt();
                let bdist = Uniform::new_inclusive(-bl, bl).unwrap();
                Layer {
                    weights: Array2::from_shape_simple_fn((fan_in, fan_out), || wdist.sample(rng)),
                    bias: Array1::from_shape_simple_fn(fan_out, || bdist.sample(rng)),
                    activation: if last { output } else { hidden },
                }
            })
            .collect();
        Ok(Self { layers, dropout })
    }

    /// Assemble from explicit layers, checking shape compatibility.
    pub fn from_layers(layers: Vec<Layer>, dropout: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Dimension("network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weights.ncols() {
                return Err(Error::Dimension(format!("layer {i}: bias/weight mismatch")));
            }
            if i + 1 < layers.len() {
                if layers[i + 1].weights.nrows() != l.weights.ncols() {
                    return Err(Error::Dimension(format!("layers {i} and {} incompatible", i + 1)));
                }
                if l.activation == Activation::Abs {
                    return Err(Error::Config("abs activation only on the output layer".into()));
                }
            }
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Config(format!("dropout {dropout} not in [0, 1)")));
        }
        Ok(Self { layers, dropout })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().unwrap().weights.ncols()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_width()];
        s.extend(self.layers.iter().map(|l| l.weights.ncols()));
        s
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_width() {
            return Err(Error::Dimension(format!(
                "network expects {} inputs, got {}",
                self.input_width(),
                x.ncols()
            )));
        }
        Ok(())
    }

    /// Forward pass without recording activations.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        x: ArrayView2<f64>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut h: Option<Array2<f64>> = None;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let input = h.as_ref().map(|a| a.view()).unwrap_or(x);
            let mut z = input.dot(&layer.weights);
            z += &layer.bias;
            let act = layer.activation;
            z.mapv_inplace(|v| act.apply(v));
            if i < last {
                if let Some(mask) = self.dropout_mask(z.raw_dim(), mode, rng) {
                    z *= &mask;
                }
            }
            h = Some(z);
        }
        Ok(h.unwrap())
    }

    /// Forward pass keeping what [`DenseNet::backward`] needs.
    pub fn forward_tape<R: Rng + ?Sized>(
        &self,
        x: ArrayView2<f64>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Array2<f64>, Tape)> {
        self.check_input(&x)?;
        let n = self.layers.len();
        let mut tape = Tape {
            inputs: Vec::with_capacity(n),
            pre: Vec::with_capacity(n),
            masks: Vec::with_capacity(n),
        };
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weights);
            z += &layer.bias;
            let act = layer.activation;
            let mut a = z.mapv(|v| act.apply(v));
            let mask = if i + 1 < n {
                self.dropout_mask(a.raw_dim(), mode, rng)
            } else {
                None
            };
            if let Some(m) = &mask {
                a *= m;
            }
            tape.inputs.push(h);
            tape.pre.push(z);
            tape.masks.push(mask);
            h = a;
        }
        Ok((h, tape))
    }

    pub(crate) fn dropout_mask<R: Rng + ?Sized>(
        &self,
        dim: ndarray::Ix2,
        mode: Mode,
        rng: &mut R,
    ) -> Option<Array2<f64>> {
        if mode == Mode::Eval || self.dropout == 0.0 {
            return None;
        }
        let keep = 1.0 - self.dropout;
        let scale = 1.0 / keep;
        Some(Array2::from_shape_simple_fn(dim, || {
            if rng.random::<f64>() < keep {
                scale
            } else {
                0.0
            }
        }))
    }

    /// Reverse-mode gradients given dL/d(output). Also returns dL/d(input)
    /// when `input_grad` is set.
    pub fn backward(
        &self,
        tape: &Tape,
        upstream: ArrayView2<f64>,
        input_grad: bool,
    ) -> (Gradients, Option<Array2<f64>>) {
        let n = self.layers.len();
        let mut grads = Vec::with_capacity(n);
        let mut g = upstream.to_owned();
        let mut dx = None;
        for i in (0..n).rev() {
            let layer = &self.layers[i];
            if let Some(m) = &tape.masks[i] {
                g *= m;
            }
            let act = layer.activation;
            Zip::from(&mut g)
                .and(&tape.pre[i])
                .for_each(|gv, &z| *gv *= act.derivative(z));
            let dw = tape.inputs[i].t().dot(&g);
            let db = g.sum_axis(Axis(0));
            if i > 0 || input_grad {
                let next = g.dot(&layer.weights.t());
                if i == 0 {
                    dx = Some(next);
                } else {
                    g = next;
                }
            }
            grads.push((dw, db));
        }
        grads.reverse();
        (Gradients { layers: grads }, dx)
    }

    /// Parameters flattened in the same order as [`Gradients::flatten`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    /// Mutable access to the k-th flattened parameter.
    pub fn param_mut(&mut self, mut k: usize) -> &mut f64 {
        for l in &mut self.layers {
            let nw = l.weights.len();
            if k < nw {
                let cols = l.weights.ncols();
                return &mut l.weights[[k / cols, k % cols]];
            }
            k -= nw;
            if k < l.bias.len() {
                return &mut l.bias[k];
            }
            k -= l.bias.len();
        }
        panic!("parameter index out of range");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    fn random_x(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> Array2<f64> {
        let d = Uniform::new(-1.0, 1.0).unwrap();
        Array2::from_shape_simple_fn((rows, cols), || d.sample(r))
    }

    #[test]
    fn zero_net_outputs_zero() {
        let layers = vec![
            Layer {
                weights: Array2::zeros((3, 4)),
                bias: Array1::zeros(4),
                activation: Activation::Relu,
            },
            Layer {
                weights: Array2::zeros((4, 1)),
                bias: Array1::zeros(1),
                activation: Activation::Linear,
            },
        ];
        let net = DenseNet::from_layers(layers, 0.0).unwrap();
        let x = random_x(5, 3, &mut rng());
        let y = net.forward(x.view(), Mode::Eval, &mut rng()).unwrap();
        assert!(y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_linear_layer_matches_hand_product() {
        let w = array![[1.0, -2.0], [0.5, 3.0], [2.0, 0.0]];
        let b = array![0.25, -1.0];
        let net = DenseNet::from_layers(
            vec![Layer {
                weights: w.clone(),
                bias: b.clone(),
                activation: Activation::Linear,
            }],
            0.0,
        )
        .unwrap();
        let x = array![[1.0, 2.0, 3.0], [-1.0, 0.0, 0.5]];
        let y = net.forward(x.view(), Mode::Eval, &mut rng()).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let mut expect = b[j];
                for k in 0..3 {
                    expect += x[[i, k]] * w[[k, j]];
                }
                assert!((y[[i, j]] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_dropout_train_equals_eval() {
        let mut r = rng();
        let net = DenseNet::new(&[4, 8, 8, 1], Activation::Relu, Activation::Linear, 0.0, &mut r)
            .unwrap();
        let x = random_x(6, 4, &mut r);
        let a = net.forward(x.view(), Mode::Train, &mut r).unwrap();
        let b = net.forward(x.view(), Mode::Eval, &mut r).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dropout_is_inverted() {
        let mut r = rng();
        let layers = vec![
            Layer {
                weights: Array2::ones((1, 2000)),
                bias: Array1::zeros(2000),
                activation: Activation::Relu,
            },
            Layer {
                weights: Array2::from_elem((2000, 1), 1.0 / 2000.0),
                bias: Array1::zeros(1),
                activation: Activation::Linear,
            },
        ];
        let net = DenseNet::from_layers(layers, 0.2).unwrap();
        let x = Array2::ones((1, 1));
        let y = net.forward(x.view(), Mode::Train, &mut r).unwrap();
        assert!((y[[0, 0]] - 1.0).abs() < 0.05, "{}", y[[0, 0]]);
        let e = net.forward(x.view(), Mode::Eval, &mut r).unwrap();
        assert!((e[[0, 0]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let mut r = rng();
        let net = DenseNet::new(&[3, 4, 1], Activation::Relu, Activation::Linear, 0.0, &mut r)
            .unwrap();
        let x = random_x(2, 5, &mut r);
        assert!(matches!(
            net.forward(x.view(), Mode::Eval, &mut r),
            Err(Error::Dimension(_))
        ));
        assert!(DenseNet::new(&[3, 4, 1], Activation::Abs, Activation::Linear, 0.0, &mut r).is_err());
    }

    /// Sum of outputs as the scalar loss; compare with central differences.
    fn check_gradients(net: &mut DenseNet, x: &Array2<f64>) -> f64 {
        let mut r = rng();
        let (out, tape) = net.forward_tape(x.view(), Mode::Eval, &mut r).unwrap();
        let ones = Array2::ones(out.raw_dim());
        let (g, _) = net.backward(&tape, ones.view(), false);
        let analytic = g.flatten();
        let h = 1e-5;
        let loss = |n: &DenseNet| n.forward(x.view(), Mode::Eval, &mut rng()).unwrap().sum();
        let mut worst: f64 = 0.0;
        for k in 0..net.n_params() {
            let orig = *net.param_mut(k);
            *net.param_mut(k) = orig + h;
            let up = loss(net);
            *net.param_mut(k) = orig - h;
            let dn = loss(net);
            *net.param_mut(k) = orig;
            let fd = (up - dn) / (2.0 * h);
            let denom = analytic[k].abs().max(fd.abs()).max(1e-6);
            worst = worst.max((analytic[k] - fd).abs() / denom);
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut r = rng();
        let mut net =
            DenseNet::new(&[5, 7, 6, 1], Activation::Relu, Activation::Linear, 0.0, &mut r)
                .unwrap();
        let x = random_x(9, 5, &mut r);
        let err = check_gradients(&mut net, &x);
        assert!(err < 1e-4, "max relative error {err}");

        let mut absnet =
            DenseNet::new(&[1, 6, 1], Activation::Relu, Activation::Abs, 0.0, &mut r).unwrap();
        let t = random_x(8, 1, &mut r);
        let err = check_gradients(&mut absnet, &t);
        assert!(err < 1e-4, "abs net max relative error {err}");
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut r = rng();
        let net = DenseNet::new(&[3, 5, 1], Activation::Relu, Activation::Linear, 0.0, &mut r)
            .unwrap();
        let x = random_x(4, 3, &mut r);
        let (out, tape) = net.forward_tape(x.view(), Mode::Eval, &mut r).unwrap();
        let (_, dx) = net.backward(&tape, Array2::ones(out.raw_dim()).view(), true);
        let dx = dx.unwrap();
        let h = 1e-6;
        for i in 0..4 {
            for j in 0..3 {
                let mut xp = x.clone();
                xp[[i, j]] += h;
                let mut xm = x.clone();
                xm[[i, j]] -= h;
                let fd = (net.forward(xp.view(), Mode::Eval, &mut r).unwrap().sum()
                    - net.forward(xm.view(), Mode::Eval, &mut r).unwrap().sum())
                    / (2.0 * h);
                assert!((fd - dx[[i, j]]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn relu_blocks_negative_preactivation_and_abs_passes_positive() {
        let relu = Layer {
            weights: array![[1.0]],
            bias: array![-5.0],
            activation: Activation::Relu,
        };
        let out = Layer {
            weights: array![[2.0]],
            bias: array![0.0],
            activation: Activation::Linear,
        };
        let net = DenseNet::from_layers(vec![relu, out], 0.0).unwrap();
        let x = array![[1.0]];
        let (_, tape) = net.forward_tape(x.view(), Mode::Eval, &mut rng()).unwrap();
        let (g, _) = net.backward(&tape, array![[1.0]].view(), false);
        assert_eq!(g.layers[0].0[[0, 0]], 0.0);
        assert_eq!(g.layers[0].1[0], 0.0);

        let absnet = DenseNet::from_layers(
            vec![Layer {
                weights: array![[3.0]],
                bias: array![0.0],
                activation: Activation::Abs,
            }],
            0.0,
        )
        .unwrap();
        let (_, tape) = absnet.forward_tape(x.view(), Mode::Eval, &mut rng()).unwrap();
        let (g, _) = absnet.backward(&tape, array![[1.0]].view(), false);
        // d|3x|/dw = x at positive pre-activation, same as identity.
        assert_eq!(g.layers[0].0[[0, 0]], 1.0);
        assert_eq!(g.layers[0].1[0], 1.0);
    }
}
