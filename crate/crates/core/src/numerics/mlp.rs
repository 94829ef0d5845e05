use serde::{Deserialize, Serialize};

use super::{relu, Matrix, Rng};
use crate::error::{Error, Result};

/// One affine layer, `y = x · w + b` on row-major batches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `fan_in x fan_out`
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense {
            w: Matrix::zeros(fan_in, fan_out),
            b: vec![0.0; fan_out],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.w.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.w.cols()
    }

    fn apply(&self, x: &Matrix) -> Matrix {
        let mut z = x.mul(&self.w);
        z.add_row_vector(&self.b);
        z
    }
}

/// Three affine layers with ReLU after the first two and a linear output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: [Dense; 3],
}

impl MlpParams {
    /// All-zero parameters for widths `[in, hidden1, hidden2, out]`.
    pub fn zeros(widths: [usize; 4]) -> Self {
        MlpParams {
            layers: [
                Dense::zeros(widths[0], widths[1]),
                Dense::zeros(widths[1], widths[2]),
                Dense::zeros(widths[2], widths[3]),
            ],
        }
    }

    /// He-style init: weights ~ N(0, 2 / fan_in), zero biases.
    pub fn gaussian(widths: [usize; 4], rng: &mut Rng) -> Self {
        let mut p = MlpParams::zeros(widths);
        for layer in &mut p.layers {
            let std = (2.0 / layer.fan_in() as f64).sqrt();
            for w in layer.w.data_mut() {
                *w = std * rng.normal();
            }
        }
        p
    }

    /// Builds parameters from explicit layers, checking that widths chain.
    pub fn from_layers(layers: [Dense; 3]) -> Result<Self> {
        for (i, l) in layers.iter().enumerate() {
            if l.b.len() != l.fan_out() {
                return Err(Error::shape(
                    "MlpParams::from_layers",
                    format!(
                        "layer {i}: bias length {} vs fan_out {}",
                        l.b.len(),
                        l.fan_out()
                    ),
                ));
            }
        }
        for i in 0..2 {
            if layers[i].fan_out() != layers[i + 1].fan_in() {
                return Err(Error::shape(
                    "MlpParams::from_layers",
                    format!(
                        "layer {i} outputs {} but layer {} expects {}",
                        layers[i].fan_out(),
                        i + 1,
                        layers[i + 1].fan_in()
                    ),
                ));
            }
        }
        Ok(MlpParams { layers })
    }

    pub fn widths(&self) -> [usize; 4] {
        [
            self.layers[0].fan_in(),
            self.layers[1].fan_in(),
            self.layers[2].fan_in(),
            self.layers[2].fan_out(),
        ]
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_width(&self) -> usize {
        self.layers[2].fan_out()
    }

    /// Weight and bias buffers in a fixed order: `w1, b1, w2, b2, w3, b3`.
    pub fn tensors(&self) -> [&[f64]; 6] {
        let [l1, l2, l3] = &self.layers;
        [l1.w.data(), &l1.b, l2.w.data(), &l2.b, l3.w.data(), &l3.b]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 6] {
        let [l1, l2, l3] = &mut self.layers;
        [
            l1.w.data_mut(),
            &mut l1.b,
            l2.w.data_mut(),
            &mut l2.b,
            l3.w.data_mut(),
            &mut l3.b,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Order-sensitive digest of every parameter bit pattern.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in self.tensors() {
            for x in t {
                h ^= x.to_bits();
                h = h.wrapping_mul(0x0100_0000_01b3).rotate_left(5);
            }
        }
        h
    }
}

/// Intermediate values retained by [`mlp_forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct MlpCache {
    input: Matrix,
    z1: Matrix,
    a1: Matrix,
    z2: Matrix,
    a2: Matrix,
    fingerprint: u64,
}

impl MlpCache {
    pub fn input(&self) -> &Matrix {
        &self.input
    }
}

/// Batched forward pass; row `i` of the output is the network applied to
/// row `i` of `h`.
pub fn mlp_forward(p: &MlpParams, h: &Matrix) -> Result<(Matrix, MlpCache)> {
    if h.cols() != p.input_width() {
        return Err(Error::shape(
            "mlp_forward",
            format!(
                "input has {} columns, network expects {}",
                h.cols(),
                p.input_width()
            ),
        ));
    }
    let [l1, l2, l3] = &p.layers;
    let z1 = l1.apply(h);
    let a1 = relu(&z1);
    let z2 = l2.apply(&a1);
    let a2 = relu(&z2);
    let out = l3.apply(&a2);
    let cache = MlpCache {
        input: h.clone(),
        z1,
        a1,
        z2,
        a2,
        fingerprint: p.fingerprint(),
    };
    Ok((out, cache))
}

/// Reverse-mode pass. Returns parameter gradients shaped like `p` and the
/// gradient with respect to the forward input.
pub fn mlp_backward(
    p: &MlpParams,
    cache: &MlpCache,
    out_grad: &Matrix,
) -> Result<(MlpParams, Matrix)> {
    if cache.fingerprint != p.fingerprint() || cache.z1.cols() != p.layers[0].fan_out() {
        return Err(Error::Contract(
            "mlp_backward called with a cache from different parameters".into(),
        ));
    }
    if out_grad.shape() != (cache.input.rows(), p.output_width()) {
        return Err(Error::shape(
            "mlp_backward",
            format!(
                "output gradient is {}x{}, forward produced {}x{}",
                out_grad.rows(),
                out_grad.cols(),
                cache.input.rows(),
                p.output_width()
            ),
        ));
    }
    let [l1, l2, l3] = &p.layers;

    let g3 = Dense {
        w: cache.a2.t_mul(out_grad),
        b: out_grad.column_sums(),
    };
    let dz2 = gate(out_grad.mul_t(&l3.w), &cache.z2);
    let g2 = Dense {
        w: cache.a1.t_mul(&dz2),
        b: dz2.column_sums(),
    };
    let dz1 = gate(dz2.mul_t(&l2.w), &cache.z1);
    let g1 = Dense {
        w: cache.input.t_mul(&dz1),
        b: dz1.column_sums(),
    };
    let input_grad = dz1.mul_t(&l1.w);
    Ok((
        MlpParams {
            layers: [g1, g2, g3],
        },
        input_grad,
    ))
}

/// Zeroes the upstream gradient where the pre-activation was not positive.
fn gate(mut upstream: Matrix, pre: &Matrix) -> Matrix {
    for (g, &z) in upstream.data_mut().iter_mut().zip(pre.data()) {
        if z <= 0.0 {
            *g = 0.0;
        }
    }
    upstream
}
