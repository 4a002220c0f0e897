use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Sigmoid => T::one() / (T::one() + (-z).exp()),
            Activation::Identity => z,
        }
    }

    /// Derivative given the pre-activation `z` and the output `a`.
    #[inline]
    fn deriv<T: Scalar>(self, z: T, a: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => a * (T::one() - a),
            Activation::Identity => T::one(),
        }
    }
}

const LN_EPS: f64 = 1e-5;

/// Fully connected network: ReLU hidden layers, configurable output
/// activation, optional plain layer normalization in front of every layer
/// after the first. Parameters live in one flat vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T> {
    dims: Vec<usize>,
    output: Activation,
    layer_norm: bool,
    params: Vec<T>,
}

#[derive(Clone, Debug)]
struct LayerRecord<T> {
    /// Input to the affine map (after normalization when enabled).
    input: Vec<T>,
    /// `1/σ` of the normalized input, when normalized.
    inv_std: Option<T>,
    pre: Vec<T>,
    out: Vec<T>,
}

/// Activations recorded by one forward pass. Backward consumes it.
#[derive(Clone, Debug)]
pub struct Tape<T> {
    layers: Vec<LayerRecord<T>>,
}

/// Gradients from one backward pass.
#[derive(Clone, Debug)]
pub struct MlpGrad<T> {
    pub params: Vec<T>,
    pub input: Vec<T>,
}

/// `ceil(1.5·dim)`
pub fn default_hidden_width(input_dim: usize) -> usize {
    (3 * input_dim).div_ceil(2)
}

impl<T: Scalar> Mlp<T> {
    /// Kaiming-uniform weights (`±√(6/fan_in)`), zero biases.
    pub fn new(dims: &[usize], output: Activation, layer_norm: bool, seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config("an MLP needs at least two nonzero layer sizes".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                params.push(T::of(rng.gen_range(-bound..bound)));
            }
            params.extend(std::iter::repeat_n(T::zero(), fan_out));
        }
        Ok(Self {
            dims: dims.to_vec(),
            output,
            layer_norm,
            params,
        })
    }

    /// Input dimension, `hidden` layers of width `width`, output dimension.
    pub fn with_hidden(input: usize, hidden: usize, width: usize, out: usize, output: Activation, layer_norm: bool, seed: u64) -> Result<Self> {
        let mut dims = vec![input];
        dims.extend(std::iter::repeat_n(width, hidden));
        dims.push(out);
        Self::new(&dims, output, layer_norm, seed)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("nonempty dims")
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn layer_norm(&self) -> bool {
        self.layer_norm
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn set_params(&mut self, params: Vec<T>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::ShapeMismatch {
                expected: self.params.len(),
                got: params.len(),
            });
        }
        self.params = params;
        Ok(())
    }

    /// Zero the last layer so the network starts as the zero map.
    pub fn zero_output_layer(&mut self) {
        let n = self.dims.len();
        let last = self.dims[n - 2] * self.dims[n - 1] + self.dims[n - 1];
        let start = self.params.len() - last;
        self.params[start..].fill(T::zero());
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }

    /// Offsets of the weight block and bias block of layer `k`.
    fn offsets(&self, k: usize) -> (usize, usize) {
        let mut off = 0;
        for w in self.dims.windows(2).take(k) {
            off += w[0] * w[1] + w[1];
        }
        (off, off + self.dims[k] * self.dims[k + 1])
    }

    fn activation(&self, k: usize) -> Activation {
        if k + 1 == self.n_layers() {
            self.output
        } else {
            Activation::Relu
        }
    }

    fn normalize(v: &[T]) -> (Vec<T>, T) {
        let n = T::of(v.len() as f64);
        let mean = v.iter().fold(T::zero(), |s, &x| s + x) / n;
        let var = v.iter().fold(T::zero(), |s, &x| s + (x - mean) * (x - mean)) / n;
        let inv = T::one() / (var + T::of(LN_EPS)).sqrt();
        (v.iter().map(|&x| (x - mean) * inv).collect(), inv)
    }

    pub fn forward(&self, x: &[T]) -> Result<(Vec<T>, Tape<T>)> {
        if x.len() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let mut layers = Vec::with_capacity(self.n_layers());
        let mut h = x.to_vec();
        for k in 0..self.n_layers() {
            let (input, inv_std) = if self.layer_norm && k > 0 {
                let (v, inv) = Self::normalize(&h);
                (v, Some(inv))
            } else {
                (h, None)
            };
            let (din, dout) = (self.dims[k], self.dims[k + 1]);
            let (wo, bo) = self.offsets(k);
            let act = self.activation(k);
            let mut pre = Vec::with_capacity(dout);
            let mut out = Vec::with_capacity(dout);
            for o in 0..dout {
                let row = &self.params[wo + o * din..wo + (o + 1) * din];
                let z = crate::scalar::dot(row, &input) + self.params[bo + o];
                pre.push(z);
                out.push(act.apply(z));
            }
            h = out.clone();
            layers.push(LayerRecord {
                input,
                inv_std,
                pre,
                out,
            });
        }
        Ok((h, Tape { layers }))
    }

    pub fn predict(&self, x: &[T]) -> Result<Vec<T>> {
        self.forward(x).map(|(y, _)| y)
    }

    /// Reverse pass for one sample; `dy` is the cotangent of the output.
    pub fn backward(&self, tape: Tape<T>, dy: &[T]) -> Result<MlpGrad<T>> {
        if dy.len() != self.output_dim() {
            return Err(Error::ShapeMismatch {
                expected: self.output_dim(),
                got: dy.len(),
            });
        }
        let mut grad = vec![T::zero(); self.params.len()];
        let mut g = dy.to_vec();
        for (k, rec) in tape.layers.iter().enumerate().rev() {
            let (din, dout) = (self.dims[k], self.dims[k + 1]);
            let (wo, bo) = self.offsets(k);
            let act = self.activation(k);
            let dz: Vec<T> = (0..dout)
                .map(|o| g[o] * act.deriv(rec.pre[o], rec.out[o]))
                .collect();
            let mut dinput = vec![T::zero(); din];
            for o in 0..dout {
                if dz[o] == T::zero() {
                    continue;
                }
                grad[bo + o] += dz[o];
                let w = &self.params[wo + o * din..wo + (o + 1) * din];
                let gw = &mut grad[wo + o * din..wo + (o + 1) * din];
                for i in 0..din {
                    gw[i] += dz[o] * rec.input[i];
                    dinput[i] += dz[o] * w[i];
                }
            }
            g = match rec.inv_std {
                Some(inv) => {
                    let n = T::of(din as f64);
                    let mean_g = dinput.iter().fold(T::zero(), |s, &v| s + v) / n;
                    let mean_gx = dinput
                        .iter()
                        .zip(&rec.input)
                        .fold(T::zero(), |s, (&v, &xh)| s + v * xh)
                        / n;
                    dinput
                        .iter()
                        .zip(&rec.input)
                        .map(|(&v, &xh)| inv * (v - mean_g - xh * mean_gx))
                        .collect()
                }
                None => dinput,
            };
        }
        Ok(MlpGrad {
            params: grad,
            input: g,
        })
    }

    /// Evaluate with an explicit parameter vector (finite-difference helper).
    pub fn with_params(&self, params: &[T]) -> Self {
        Self {
            params: params.to_vec(),
            ..self.clone()
        }
    }
}

/// Affine map of `(0,1)` outputs onto per-coordinate boxes.
pub fn box_map<T: Scalar>(s: &[T], lo: &[T], hi: &[T]) -> Vec<T> {
    s.iter()
        .zip(lo.iter().zip(hi))
        .map(|(&s, (&l, &h))| l + s * (h - l))
        .collect()
}

pub fn box_map_backward<T: Scalar>(dy: &[T], lo: &[T], hi: &[T]) -> Vec<T> {
    dy.iter()
        .zip(lo.iter().zip(hi))
        .map(|(&d, (&l, &h))| d * (h - l))
        .collect()
}
