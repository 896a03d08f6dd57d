use crate::error::Result;
use crate::numerics::graph::{Graph, NodeId};
use crate::numerics::tensor::Tensor;

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Denominator floor for the relative error, so entries whose true gradient
/// is ~0 are compared on an absolute scale below this magnitude.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// Worst disagreement between tape gradients and central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    /// (tensor index, flat entry index) of the worst entry.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub entries: usize,
}

/// Compares `backward` against central differences of `build` at `point`.
///
/// `build` receives a fresh graph and one parameter node per tensor of
/// `point`, and returns the scalar loss node.
pub fn grad_check<F>(point: &[Tensor], step: f64, build: F) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    let eval = |values: &[Tensor]| -> Result<(Graph, Vec<NodeId>, NodeId)> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = values.iter().map(|t| g.param(t.clone())).collect();
        let loss = build(&mut g, &ids)?;
        Ok((g, ids, loss))
    };

    let (graph, ids, loss) = eval(point)?;
    let analytic = graph.backward(loss)?.wrt(&ids);

    let mut report = GradCheck {
        max_relative_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        entries: 0,
    };
    let mut shifted = point.to_vec();
    for (ti, tensor) in point.iter().enumerate() {
        for ei in 0..tensor.len() {
            let base = tensor.values()[ei];
            shifted[ti].values_mut()[ei] = base + step;
            let (g, _, l) = eval(&shifted)?;
            let plus = g.value(l).item();
            shifted[ti].values_mut()[ei] = base - step;
            let (g, _, l) = eval(&shifted)?;
            let minus = g.value(l).item();
            shifted[ti].values_mut()[ei] = base;

            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[ti].values()[ei];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
            report.entries += 1;
            if err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst = (ti, ei);
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
