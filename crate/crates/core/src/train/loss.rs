use lhdr_tensor::{Element, Ops};

use crate::Result;

/// The two loss terms and their weighted sum, all scalar values of `O`.
pub struct LossTerms<V> {
    pub l1: V,
    pub lg: V,
    pub total: V,
}

/// `mean|ŷ′ − y′| + grad_weight · mean|∇ŷ′ − ∇y′|` with forward-difference
/// gradient maps.
pub fn loss<T: Element, O: Ops<T>>(
    ops: &mut O,
    pred: &O::Value,
    target: &O::Value,
    grad_weight: f64,
) -> Result<LossTerms<O::Value>> {
    let diff = ops.sub(pred, target)?;
    let l1 = ops.mean_abs(&diff);
    // The gradient map is linear, so the difference of maps is the map of the difference.
    let g = ops.grad_map(&diff);
    let lg = ops.mean_abs(&g);
    let weighted = ops.scale(&lg, grad_weight);
    let total = ops.add(&l1, &weighted)?;
    Ok(LossTerms { l1, lg, total })
}
