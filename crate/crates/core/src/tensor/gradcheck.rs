//! Central finite-difference gradient checking.
//!
//! The checker rebuilds the forward pass from scratch for every perturbed
//! coordinate, so it stays independent of the backward implementation it is
//! used to verify.

use super::{Graph, NodeId, Tensor};

/// Tolerances for comparing analytic and numeric gradients. The band is
/// `atol + rtol * max(|analytic|, |numeric|)`, the usual guard against
/// meaningless relative error on near-zero entries in single precision.
#[derive(Debug, Clone, Copy)]
pub struct CheckTolerance {
    pub h: f32,
    pub rtol: f64,
    pub atol: f64,
}

impl CheckTolerance {
    /// Op-level default: h = 1e-3, relative 1e-3.
    pub fn op_level() -> Self {
        CheckTolerance {
            h: 1e-3,
            rtol: 1e-3,
            atol: 1e-3,
        }
    }

    /// End-to-end default over a whole model: relative 2e-3 with a step
    /// balancing f32 evaluation noise against truncation error in the
    /// strongly curved layer-norm regions.
    pub fn end_to_end() -> Self {
        CheckTolerance {
            h: 5e-3,
            rtol: 2e-3,
            atol: 2e-3,
        }
    }
}

/// Outcome of a finite-difference comparison for one parameter tensor.
#[derive(Debug)]
pub struct CheckReport {
    pub checked: usize,
    pub max_abs_diff: f64,
    pub worst: Option<WorstEntry>,
}

#[derive(Debug)]
pub struct WorstEntry {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Checks the gradient of `build`'s scalar loss w.r.t. every entry of the
/// parameter tensor at `param_index` among the leaves.
///
/// `build` receives the current parameter tensors and must construct the full
/// forward pass, returning the graph and loss node. Entries of `indices`
/// select which coordinates to perturb (all when empty).
pub fn check_gradient<F>(
    params: &[Tensor],
    param_index: usize,
    indices: &[usize],
    tol: CheckTolerance,
    mut build: F,
) -> Result<CheckReport, String>
where
    F: FnMut(&[Tensor]) -> (Graph, NodeId, Vec<NodeId>),
{
    let (graph, loss, leaf_ids) = build(params);
    if leaf_ids.len() != params.len() {
        return Err(format!(
            "build returned {} leaves for {} params",
            leaf_ids.len(),
            params.len()
        ));
    }
    let grads = graph
        .backward(loss)
        .map_err(|e| format!("backward failed: {e}"))?;
    let analytic = grads.for_leaf(&graph, leaf_ids[param_index]);

    let all: Vec<usize>;
    let coords: &[usize] = if indices.is_empty() {
        all = (0..params[param_index].numel()).collect();
        &all
    } else {
        indices
    };

    let mut max_abs_diff = 0.0f64;
    let mut worst: Option<WorstEntry> = None;
    let mut violations = Vec::new();

    for &i in coords {
        let mut perturbed = params.to_vec();
        let base = perturbed[param_index].data()[i];

        perturbed[param_index].data_mut()[i] = base + tol.h;
        let (g_plus, loss_plus, _) = build(&perturbed);
        let lp = g_plus.value(loss_plus).data()[0] as f64;

        perturbed[param_index].data_mut()[i] = base - tol.h;
        let (g_minus, loss_minus, _) = build(&perturbed);
        let lm = g_minus.value(loss_minus).data()[0] as f64;

        let numeric = (lp - lm) / (2.0 * tol.h as f64);
        let a = analytic[i] as f64;
        let diff = (a - numeric).abs();
        if diff > max_abs_diff {
            max_abs_diff = diff;
            worst = Some(WorstEntry {
                index: i,
                analytic: a,
                numeric,
            });
        }
        let band = tol.atol + tol.rtol * a.abs().max(numeric.abs());
        if diff > band {
            violations.push((i, a, numeric, diff, band));
        }
    }

    if let Some((i, a, n, d, band)) = violations.first() {
        return Err(format!(
            "gradient mismatch at entry {i}: analytic {a:.6e}, numeric {n:.6e}, \
             |diff| {d:.3e} > band {band:.3e} ({} violations of {})",
            violations.len(),
            coords.len()
        ));
    }

    Ok(CheckReport {
        checked: coords.len(),
        max_abs_diff,
        worst,
    })
}
