//! Frame-context extractor (the shared front end).
//!
//! Group `g` splices `context[g]` neighbouring frames on each side of every
//! frame (edges are replicated), applies an affine map and a ReLU. Frame
//! count is preserved through all four groups.

use crate::error::{Error, Result};
use crate::model::config::{ExtractorConfig, NUM_GROUPS};
use crate::model::dense::{affine, affine_backward, relu, relu_backward};
use crate::numkit::{ParamMap, Tensor};

pub fn weight_name(g: usize) -> String {
    format!("group{}.w", g + 1)
}

pub fn bias_name(g: usize) -> String {
    format!("group{}.b", g + 1)
}

/// Intermediates kept from the forward pass.
#[derive(Debug, Clone)]
pub struct ExtractorCache {
    /// Spliced input of each group, `[T × (2c+1)·in]`.
    spliced: Vec<Tensor>,
    /// Post-ReLU output of each group, `[T × out]`.
    outputs: Vec<Tensor>,
}

impl ExtractorCache {
    pub fn output(&self) -> &Tensor {
        self.outputs.last().expect("four groups")
    }
}

fn splice(x: &Tensor, context: usize) -> Tensor {
    if context == 0 {
        return x.clone();
    }
    let (t_len, d) = (x.rows(), x.cols());
    let width = 2 * context + 1;
    let mut data = Vec::with_capacity(t_len * width * d);
    for t in 0..t_len {
        for o in 0..width {
            let src = (t + o).saturating_sub(context).min(t_len - 1);
            data.extend_from_slice(x.row(src));
        }
    }
    Tensor::from_vec(&[t_len, width * d], data).expect("sizes match")
}

fn unsplice(d_spliced: &Tensor, context: usize, d: usize) -> Tensor {
    if context == 0 {
        return d_spliced.clone();
    }
    let t_len = d_spliced.rows();
    let width = 2 * context + 1;
    let mut out = Tensor::zeros(&[t_len, d]);
    for t in 0..t_len {
        let row = d_spliced.row(t);
        for o in 0..width {
            let src = (t + o).saturating_sub(context).min(t_len - 1);
            let dst = out.row_mut(src);
            for (a, b) in dst.iter_mut().zip(&row[o * d..(o + 1) * d]) {
                *a += b;
            }
        }
    }
    out
}

pub fn extractor_forward(x: &Tensor, params: &ParamMap, cfg: &ExtractorConfig) -> Result<ExtractorCache> {
    if x.rank() != 2 || x.rows() == 0 {
        return Err(Error::contract("extractor input must be a non-empty [T × D] matrix"));
    }
    if x.cols() != cfg.input_dim {
        return Err(Error::structural(format!(
            "extractor expects {} features per frame, got {}",
            cfg.input_dim,
            x.cols()
        )));
    }
    let mut spliced = Vec::with_capacity(NUM_GROUPS);
    let mut outputs: Vec<Tensor> = Vec::with_capacity(NUM_GROUPS);
    for g in 0..NUM_GROUPS {
        let input = if g == 0 { x } else { &outputs[g - 1] };
        let s = splice(input, cfg.context[g]);
        let w = lookup(params, &weight_name(g))?;
        let b = lookup(params, &bias_name(g))?;
        if w.rows() != s.cols() || w.cols() != cfg.group_dims[g] || b.len() != cfg.group_dims[g] {
            return Err(Error::structural(format!(
                "group {} weights {:?} do not fit spliced width {} → {}",
                g + 1,
                w.dims(),
                s.cols(),
                cfg.group_dims[g]
            )));
        }
        let y = relu(&affine(&s, w, b));
        spliced.push(s);
        outputs.push(y);
    }
    Ok(ExtractorCache { spliced, outputs })
}

/// Backpropagates `d_out` into the weights of groups `lowest..4` (0-based),
/// accumulating into `grads`. Returns the gradient with respect to the
/// input frames when `lowest == 0`.
pub fn extractor_backward(
    cache: &ExtractorCache,
    d_out: &Tensor,
    params: &ParamMap,
    cfg: &ExtractorConfig,
    lowest: usize,
    grads: &mut ParamMap,
) -> Option<Tensor> {
    let mut d = d_out.clone();
    for g in (lowest..NUM_GROUPS).rev() {
        let dz = relu_backward(&cache.outputs[g], &d);
        let w = &params[&weight_name(g)];
        let need_dx = g > lowest || lowest == 0;
        let ag = affine_backward(&cache.spliced[g], w, &dz, need_dx);
        add_grad(grads, weight_name(g), ag.dw);
        add_grad(grads, bias_name(g), ag.db);
        d = unsplice(&ag.dx?, cfg.context[g], cfg.group_input_dim(g));
    }
    (lowest == 0).then_some(d)
}

pub(crate) fn lookup<'a>(params: &'a ParamMap, name: &str) -> Result<&'a Tensor> {
    params
        .get(name)
        .ok_or_else(|| Error::structural(format!("missing parameter {name}")))
}

pub(crate) fn add_grad(grads: &mut ParamMap, name: String, g: Tensor) {
    match grads.get_mut(&name) {
        Some(acc) => acc.add_scaled(&g, 1.0),
        None => {
            grads.insert(name, g);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splice_replicates_edges() {
        let x = Tensor::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let s = splice(&x, 1);
        assert_eq!(s.data(), &[1.0, 1.0, 2.0, 1.0, 2.0, 3.0, 2.0, 3.0, 3.0]);
        // adjoint of splicing: each source frame collects every copy
        let u = unsplice(&Tensor::filled(&[3, 3], 1.0), 1, 1);
        assert_eq!(u.data(), &[3.0, 3.0, 3.0]);
        let u = unsplice(&Tensor::from_vec(&[3, 3], (0..9).map(f64::from).collect()).unwrap(), 1, 1);
        assert_eq!(u.data(), &[0.0 + 1.0 + 3.0, 2.0 + 4.0 + 6.0, 5.0 + 7.0 + 8.0]);
    }

    #[test]
    fn identity_group_is_relu() {
        let cfg = ExtractorConfig {
            input_dim: 3,
            group_dims: [3, 3, 3, 3],
            context: [0; 4],
        };
        let mut p = ParamMap::new();
        for g in 0..4 {
            let mut w = Tensor::zeros(&[3, 3]);
            for i in 0..3 {
                w.set(i, i, 1.0);
            }
            p.insert(weight_name(g), w);
            p.insert(bias_name(g), Tensor::zeros(&[3]));
        }
        let x = Tensor::from_rows(&[vec![1.0, -2.0, 0.5], vec![-1.0, 3.0, 0.0]]).unwrap();
        let c = extractor_forward(&x, &p, &cfg).unwrap();
        assert_eq!(c.output().data(), &[1.0, 0.0, 0.5, 0.0, 3.0, 0.0]);
    }

    #[test]
    fn dim_mismatch_is_structural() {
        let cfg = ExtractorConfig::default();
        let x = Tensor::zeros(&[4, cfg.input_dim + 1]);
        let e = extractor_forward(&x, &ParamMap::new(), &cfg).unwrap_err();
        assert!(matches!(e, Error::Structural(_)));
    }
}
