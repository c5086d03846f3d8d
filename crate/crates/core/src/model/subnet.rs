//! Per-domain subnets (Φ1 then Φ2) and the softmax classifier heads.
//!
//! Domains are numbered as in the corpus: 0 is the clean source, `1..=N`
//! are the targets. Only target domains own a subnet and a classifier.

use crate::error::{Error, Result};
use crate::model::dense::{affine, affine_backward, relu, relu_backward};
use crate::model::extractor::{add_grad, lookup};
use crate::numkit::{ParamMap, Tensor};

pub const SUBNET_LAYERS: usize = 4;
pub const HEAD_W: &str = "head.w";
pub const HEAD_B: &str = "head.b";

pub fn subnet_weight(domain: usize, layer: usize) -> String {
    format!("subnet{domain}.l{}.w", layer + 1)
}

pub fn subnet_bias(domain: usize, layer: usize) -> String {
    format!("subnet{domain}.l{}.b", layer + 1)
}

pub fn classifier_weight(domain: usize) -> String {
    format!("classifier{domain}.w")
}

pub fn classifier_bias(domain: usize) -> String {
    format!("classifier{domain}.b")
}

/// How far through a subnet to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubnetStage {
    /// Φ1 only (the discrepancy space).
    Phi1,
    /// Φ2 ∘ Φ1 (the alignment / embedding space).
    Full,
}

#[derive(Debug, Clone)]
pub struct SubnetCache {
    domain: usize,
    /// Input to each executed layer.
    inputs: Vec<Tensor>,
    /// Output of each executed layer (post-activation).
    outputs: Vec<Tensor>,
}

impl SubnetCache {
    pub fn phi1(&self) -> &Tensor {
        &self.outputs[1]
    }

    pub fn output(&self) -> &Tensor {
        self.outputs.last().expect("at least two layers")
    }
}

/// Number of target domains with a subnet in `params`.
pub fn count_domains(params: &ParamMap) -> usize {
    (1..).take_while(|&h| params.contains_key(&subnet_weight(h, 0))).count()
}

fn check_domain(params: &ParamMap, domain: usize) -> Result<()> {
    let n = count_domains(params);
    if domain == 0 || domain > n {
        Err(Error::UnknownDomain {
            domain,
            available: n,
        })
    } else {
        Ok(())
    }
}

/// Runs rows of `x` through the subnet of `domain`. ReLU follows every layer
/// except the last one of Φ2.
pub fn subnet_forward(x: &Tensor, params: &ParamMap, domain: usize, stage: SubnetStage) -> Result<SubnetCache> {
    check_domain(params, domain)?;
    let layers = match stage {
        SubnetStage::Phi1 => 2,
        SubnetStage::Full => SUBNET_LAYERS,
    };
    let mut inputs = Vec::with_capacity(layers);
    let mut outputs: Vec<Tensor> = Vec::with_capacity(layers);
    for l in 0..layers {
        let input = if l == 0 { x.clone() } else { outputs[l - 1].clone() };
        let w = lookup(params, &subnet_weight(domain, l))?;
        let b = lookup(params, &subnet_bias(domain, l))?;
        if w.rows() != input.cols() {
            return Err(Error::structural(format!(
                "subnet {domain} layer {} expects width {}, got {}",
                l + 1,
                w.rows(),
                input.cols()
            )));
        }
        let z = affine(&input, w, b);
        let y = if l + 1 == SUBNET_LAYERS { z } else { relu(&z) };
        inputs.push(input);
        outputs.push(y);
    }
    Ok(SubnetCache {
        domain,
        inputs,
        outputs,
    })
}

/// Backward through a subnet. `d_phi1` adds a gradient at the Φ1 output and
/// `d_out` at the final executed layer; either may be absent. Returns the
/// gradient with respect to the subnet input.
pub fn subnet_backward(
    cache: &SubnetCache,
    d_phi1: Option<&Tensor>,
    d_out: Option<&Tensor>,
    params: &ParamMap,
    grads: &mut ParamMap,
) -> Tensor {
    let layers = cache.outputs.len();
    let mut d: Option<Tensor> = None;
    for l in (0..layers).rev() {
        if l + 1 == layers {
            d = d_out.cloned();
        }
        if l == 1 {
            if let Some(extra) = d_phi1 {
                match d.as_mut() {
                    Some(acc) => acc.add_scaled(extra, 1.0),
                    None => d = Some(extra.clone()),
                }
            }
        }
        let dy = d
            .take()
            .unwrap_or_else(|| Tensor::zeros(cache.outputs[l].dims()));
        let dz = if l + 1 == SUBNET_LAYERS {
            dy
        } else {
            relu_backward(&cache.outputs[l], &dy)
        };
        let w = &params[&subnet_weight(cache.domain, l)];
        let ag = affine_backward(&cache.inputs[l], w, &dz, true);
        add_grad(grads, subnet_weight(cache.domain, l), ag.dw);
        add_grad(grads, subnet_bias(cache.domain, l), ag.db);
        d = ag.dx;
    }
    d.expect("layer 1 computes dx")
}

fn linear_head(x: &Tensor, params: &ParamMap, w_name: &str, b_name: &str) -> Result<Tensor> {
    let w = lookup(params, w_name)?;
    let b = lookup(params, b_name)?;
    if w.rows() != x.cols() {
        return Err(Error::structural(format!(
            "{w_name} expects width {}, got {}",
            w.rows(),
            x.cols()
        )));
    }
    Ok(affine(x, w, b))
}

/// Speaker logits from the classifier of target `domain`.
pub fn classifier_forward(x: &Tensor, params: &ParamMap, domain: usize) -> Result<Tensor> {
    check_domain(params, domain)?;
    linear_head(x, params, &classifier_weight(domain), &classifier_bias(domain))
}

/// Backward of [`classifier_forward`]; returns the gradient for its input.
pub fn classifier_backward(
    x: &Tensor,
    d_logits: &Tensor,
    params: &ParamMap,
    domain: usize,
    grads: &mut ParamMap,
) -> Tensor {
    let ag = affine_backward(x, &params[&classifier_weight(domain)], d_logits, true);
    add_grad(grads, classifier_weight(domain), ag.dw);
    add_grad(grads, classifier_bias(domain), ag.db);
    ag.dx.expect("requested")
}

/// Speaker logits from the pretraining / fine-tuning head on pooled
/// representations.
pub fn head_forward(x: &Tensor, params: &ParamMap) -> Result<Tensor> {
    linear_head(x, params, HEAD_W, HEAD_B)
}

pub fn head_backward(x: &Tensor, d_logits: &Tensor, params: &ParamMap, train: bool, grads: &mut ParamMap) -> Tensor {
    let ag = affine_backward(x, &params[HEAD_W], d_logits, true);
    if train {
        add_grad(grads, HEAD_W.to_string(), ag.dw);
        add_grad(grads, HEAD_B.to_string(), ag.db);
    }
    ag.dx.expect("requested")
}
