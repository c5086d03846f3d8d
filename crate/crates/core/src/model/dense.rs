//! Affine and ReLU primitives with their hand-derived backward passes.

use rand::Rng;

use crate::numkit::Tensor;

/// `x·W + b` for `x: [n×in]`, `W: [in×out]`, `b: [out]`.
pub fn affine(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let mut z = x.matmul(w);
    z.add_row_vector(b);
    z
}

pub struct AffineGrads {
    pub dx: Option<Tensor>,
    pub dw: Tensor,
    pub db: Tensor,
}

pub fn affine_backward(x: &Tensor, w: &Tensor, dz: &Tensor, need_dx: bool) -> AffineGrads {
    AffineGrads {
        dx: need_dx.then(|| dz.matmul_nt(w)),
        dw: x.matmul_tn(dz),
        db: dz.sum_rows(),
    }
}

pub fn relu(z: &Tensor) -> Tensor {
    z.map(|v| v.max(0.0))
}

/// Masks `dy` by the sign of the ReLU output `y` (subgradient 0 at 0).
pub fn relu_backward(y: &Tensor, dy: &Tensor) -> Tensor {
    let mut d = dy.clone();
    for (g, &o) in d.data_mut().iter_mut().zip(y.data()) {
        if o <= 0.0 {
            *g = 0.0;
        }
    }
    d
}

/// Uniform fan-in scaled weights `U(−√(6/fan_in), √(6/fan_in))`, rounded to
/// `f32` precision.
pub fn he_uniform<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / fan_in as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| f64::from(rng.gen_range(-limit..limit) as f32))
        .collect();
    Tensor::from_vec(&[fan_in, fan_out], data).expect("sizes match")
}
