//! Central-difference verification of analytic gradients.

use super::graph::{Graph, NodeId};
use super::tensor::Tensor;
use crate::error::{CoreError, Result};

/// Relative-error metric between an analytic and a numeric derivative.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / (a.abs() + n.abs() + 1e-12)
}

/// Check the gradient of a scalar-valued function of several tensors.
///
/// `f` rebuilds its computation on a fresh graph from the leaf ids it is
/// given, so the analytic path and every perturbed evaluation run the same
/// code. Returns the max relative error over all coordinates of all leaves.
pub fn grad_check_multi<F>(f: F, xs: &[Tensor], h: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    if !(1e-7..=1e-3).contains(&h) {
        return Err(CoreError::InvalidInput(format!(
            "grad_check step {} outside [1e-7, 1e-3]",
            h
        )));
    }

    // Analytic pass.
    let mut g = Graph::new();
    let ids: Vec<NodeId> = xs.iter().map(|x| g.param(x.clone())).collect();
    let loss = f(&mut g, &ids)?;
    if g.tensor(loss).numel() != 1 {
        return Err(CoreError::InvalidInput(
            "grad_check needs a scalar-valued function".into(),
        ));
    }
    if !g.data(loss)[0].is_finite() {
        return Err(CoreError::NonFinite { op: "grad_check" });
    }
    g.backward(loss)?;
    let analytic: Vec<Vec<f64>> = ids
        .iter()
        .map(|&id| g.grad(id).expect("leaf gradient populated").to_vec())
        .collect();

    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = xs.iter().map(|x| g.param(x.clone())).collect();
        let loss = f(&mut g, &ids)?;
        Ok(g.data(loss)[0])
    };

    let mut worst = 0.0f64;
    let mut probe: Vec<Tensor> = xs.to_vec();
    for (pi, x) in xs.iter().enumerate() {
        for ci in 0..x.numel() {
            let orig = x.data()[ci];
            probe[pi].data_mut()[ci] = orig + h;
            let fp = eval(&probe)?;
            probe[pi].data_mut()[ci] = orig - h;
            let fm = eval(&probe)?;
            probe[pi].data_mut()[ci] = orig;
            let numeric = (fp - fm) / (2.0 * h);
            worst = worst.max(rel_err(analytic[pi][ci], numeric));
        }
    }
    Ok(worst)
}

/// Single-tensor convenience wrapper around [`grad_check_multi`].
pub fn grad_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Graph, NodeId) -> Result<NodeId>,
{
    grad_check_multi(|g, ids| f(g, ids[0]), std::slice::from_ref(x), h)
}
