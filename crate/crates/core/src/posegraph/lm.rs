use nalgebra::{DMatrix, DVector, Matrix6, Vector6};

use super::{Edge, PoseGraph, SE3Transform};
use crate::error::{Error, Result};

const JACOBIAN_STEP: f64 = 1e-6;
const MAX_LAMBDA: f64 = 1e14;

/// `log(measured⁻¹ · pose_from⁻¹ · pose_to)`.
pub fn edge_error(edge: &Edge, from: &SE3Transform, to: &SE3Transform) -> Vector6<f64> {
    edge.measured
        .inverse()
        .compose(&from.inverse().compose(to))
        .log()
}

fn endpoint_indices(graph: &PoseGraph, edge: &Edge) -> (usize, usize) {
    // Endpoints are validated on insertion.
    (
        graph.index_of(edge.from).expect("edge endpoint exists"),
        graph.index_of(edge.to).expect("edge endpoint exists"),
    )
}

fn residual_of(graph: &PoseGraph, poses: &[SE3Transform]) -> f64 {
    graph
        .edges()
        .iter()
        .map(|e| {
            let (a, b) = endpoint_indices(graph, e);
            let r = edge_error(e, &poses[a], &poses[b]);
            (r.transpose() * e.information * r)[(0, 0)]
        })
        .sum()
}

/// Total weighted squared edge error `Σ eᵀ Ω e`.
pub fn total_residual(graph: &PoseGraph) -> f64 {
    residual_of(graph, &graph.poses())
}

/// Gauss-Newton system around the current poses. Vertex 0 is the gauge and
/// carries no parameters; vertex `k > 0` owns entries `6(k-1)..6k`.
#[derive(Debug, Clone)]
pub struct Linearization {
    /// `JᵀΩJ`.
    pub hessian: DMatrix<f64>,
    /// `JᵀΩe`.
    pub gradient: DVector<f64>,
    pub residual: f64,
}

fn numeric_jacobian(edge: &Edge, from: &SE3Transform, to: &SE3Transform, wrt_from: bool) -> Matrix6<f64> {
    let mut j = Matrix6::zeros();
    for m in 0..6 {
        let mut d = Vector6::zeros();
        d[m] = JACOBIAN_STEP;
        let plus = SE3Transform::exp(&d);
        let minus = SE3Transform::exp(&-d);
        let (ep, em) = if wrt_from {
            (
                edge_error(edge, &plus.compose(from), to),
                edge_error(edge, &minus.compose(from), to),
            )
        } else {
            (
                edge_error(edge, from, &plus.compose(to)),
                edge_error(edge, from, &minus.compose(to)),
            )
        };
        j.set_column(m, &((ep - em) / (2.0 * JACOBIAN_STEP)));
    }
    j
}

pub fn linearize(graph: &PoseGraph) -> Linearization {
    let poses = graph.poses();
    let n = 6 * poses.len().saturating_sub(1);
    let mut hessian = DMatrix::zeros(n, n);
    let mut gradient = DVector::zeros(n);
    let mut residual = 0.0;
    for e in graph.edges() {
        let (a, b) = endpoint_indices(graph, e);
        let r = edge_error(e, &poses[a], &poses[b]);
        residual += (r.transpose() * e.information * r)[(0, 0)];
        let blocks = [
            (a, numeric_jacobian(e, &poses[a], &poses[b], true)),
            (b, numeric_jacobian(e, &poses[a], &poses[b], false)),
        ];
        for &(va, ja) in &blocks {
            if va == 0 {
                continue;
            }
            let oa = 6 * (va - 1);
            let jt_omega = ja.transpose() * e.information;
            let ga = jt_omega * r;
            for i in 0..6 {
                gradient[oa + i] += ga[i];
            }
            for &(vb, jb) in &blocks {
                if vb == 0 {
                    continue;
                }
                let ob = 6 * (vb - 1);
                let block = jt_omega * jb;
                let mut view = hessian.view_mut((oa, ob), (6, 6));
                view += block;
            }
        }
    }
    Linearization {
        hessian,
        gradient,
        residual,
    }
}

/// Applies a stacked update by left-multiplying `exp(δ_k)` onto each
/// non-gauge vertex.
pub fn apply_update(poses: &[SE3Transform], delta: &DVector<f64>) -> Vec<SE3Transform> {
    poses
        .iter()
        .enumerate()
        .map(|(k, p)| {
            if k == 0 {
                *p
            } else {
                let d = Vector6::from_iterator(delta.rows(6 * (k - 1), 6).iter().copied());
                SE3Transform::exp(&d).compose(p)
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct LmStep {
    pub poses: Vec<SE3Transform>,
    pub delta: DVector<f64>,
    pub gradient: DVector<f64>,
    pub residual_before: f64,
    pub residual: f64,
}

fn solve_damped(lin: &Linearization, lambda: f64) -> Result<DVector<f64>> {
    let n = lin.gradient.len();
    let damped = &lin.hessian + DMatrix::identity(n, n) * lambda;
    let chol = damped
        .cholesky()
        .ok_or_else(|| Error::NumericalFailure(format!("damped Hessian is singular at lambda {lambda}")))?;
    let delta = -chol.solve(&lin.gradient);
    if delta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite pose update".into()));
    }
    Ok(delta)
}

/// One damped Gauss-Newton update `δ = -(H + λI)⁻¹ g`.
pub fn lm_step(graph: &PoseGraph, lambda: f64) -> Result<LmStep> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be nonnegative, got {lambda}")));
    }
    if graph.edges().is_empty() {
        return Err(Error::InvalidInput("pose graph has no edges".into()));
    }
    let lin = linearize(graph);
    let delta = solve_damped(&lin, lambda)?;
    let poses = apply_update(&graph.poses(), &delta);
    let residual = residual_of(graph, &poses);
    Ok(LmStep {
        poses,
        delta,
        gradient: lin.gradient,
        residual_before: lin.residual,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOptions {
    pub max_iters: usize,
    /// Stop once an accepted step changes the residual by less than this
    /// fraction.
    pub tolerance: f64,
    pub initial_lambda: f64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tolerance: 1e-12,
            initial_lambda: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizeReport {
    pub graph: PoseGraph,
    /// Initial residual followed by every accepted one.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub final_lambda: f64,
}

pub fn optimize(graph: &PoseGraph, max_iters: usize, tolerance: f64) -> Result<PoseGraph> {
    let opts = OptimizeOptions {
        max_iters,
        tolerance,
        ..OptimizeOptions::default()
    };
    Ok(optimize_with(graph, &opts)?.graph)
}

/// Levenberg-Marquardt with the classic ×10 / ÷10 damping schedule. A step
/// that does not lower the residual is rejected and retried with more
/// damping, so the accepted residuals never increase.
pub fn optimize_with(graph: &PoseGraph, opts: &OptimizeOptions) -> Result<OptimizeReport> {
    if !(opts.tolerance >= 0.0) || !(opts.initial_lambda > 0.0) {
        return Err(Error::InvalidParameter("tolerance and initial lambda must be positive".into()));
    }
    if !graph.is_connected() {
        return Err(Error::InvalidInput("pose graph is not connected".into()));
    }
    let mut current = graph.clone();
    let mut residual = total_residual(&current);
    let mut report = OptimizeReport {
        graph: current.clone(),
        residuals: vec![residual],
        iterations: 0,
        converged: residual == 0.0 || graph.edges().is_empty(),
        final_lambda: opts.initial_lambda,
    };
    if report.converged {
        return Ok(report);
    }
    let mut lambda = opts.initial_lambda;
    let mut lin = linearize(&current);
    while report.iterations < opts.max_iters {
        report.iterations += 1;
        let candidate = solve_damped(&lin, lambda).map(|d| apply_update(&current.poses(), &d));
        let accepted = match candidate {
            Ok(poses) => {
                let r = residual_of(&current, &poses);
                (r < residual).then_some((poses, r))
            }
            Err(_) => None,
        };
        match accepted {
            Some((poses, r)) => {
                let change = (residual - r) / residual;
                current = current.with_poses(&poses)?;
                residual = r;
                report.residuals.push(r);
                lambda = (lambda / 10.0).max(1e-12);
                if change < opts.tolerance || r == 0.0 {
                    report.converged = true;
                    break;
                }
                lin = linearize(&current);
            }
            None => {
                lambda *= 10.0;
                if lambda > MAX_LAMBDA {
                    // No descent left at any damping: a stationary point.
                    report.converged = true;
                    break;
                }
            }
        }
    }
    log::debug!(
        "pose graph LM: {} iterations, residual {:.3e} -> {:.3e}",
        report.iterations,
        report.residuals[0],
        residual
    );
    report.graph = current;
    report.final_lambda = lambda;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn at(x: f64, y: f64) -> SE3Transform {
        SE3Transform::from_translation(Vector3::new(x, y, 0.0))
    }

    fn pair(perturb: f64) -> PoseGraph {
        let mut g = PoseGraph::new();
        g.push_vertex(at(0.0, 0.0), 0.0).unwrap();
        g.push_vertex(at(1.0 + perturb, 0.0), 1.0).unwrap();
        g.add_edge(0, 1, at(1.0, 0.0), Matrix6::identity()).unwrap();
        g
    }

    #[test]
    fn consistent_graph_has_zero_update() {
        let step = lm_step(&pair(0.0), 1e-3).unwrap();
        assert!(step.gradient.amax() < 1e-12);
        assert!(step.delta.amax() < 1e-12);
        assert!(step.residual < 1e-24);
    }

    #[test]
    fn one_step_reduces_the_residual() {
        let step = lm_step(&pair(0.1), 1e-3).unwrap();
        assert!((step.residual_before - 0.01).abs() < 1e-9);
        assert!(step.residual < step.residual_before);
    }

    #[test]
    fn large_damping_approaches_gradient_descent() {
        let mut g = pair(0.1);
        // Give the error a rotational part so g is not axis aligned.
        let twisted = SE3Transform::exp(&Vector6::new(0.2, -0.1, 0.05, 0.1, 0.2, -0.3));
        g = g.with_poses(&[g.poses()[0], twisted]).unwrap();
        let mut last = -1.0;
        for k in 0..8 {
            let step = lm_step(&g, 1e-2 * 10f64.powi(k)).unwrap();
            let cos = -step.delta.dot(&step.gradient) / (step.delta.norm() * step.gradient.norm());
            assert!(cos >= last - 1e-12, "cosine decreased at k={k}");
            last = cos;
        }
        assert!(last > 1.0 - 1e-6, "cosine {last}");
    }

    #[test]
    fn zero_damping_is_the_gauss_newton_step() {
        let mut g = PoseGraph::new();
        g.push_vertex(at(0.0, 0.0), 0.0).unwrap();
        g.push_vertex(at(1.1, 0.2), 1.0).unwrap();
        g.push_vertex(at(0.9, 1.05), 2.0).unwrap();
        g.add_edge(0, 1, at(1.0, 0.0), Matrix6::identity()).unwrap();
        g.add_edge(1, 2, at(0.0, 1.0), Matrix6::identity()).unwrap();
        g.add_edge(0, 2, at(1.0, 1.0), Matrix6::identity() * 2.0).unwrap();
        let lin = linearize(&g);
        let direct = -lin.hessian.clone().lu().solve(&lin.gradient).unwrap();
        let step = lm_step(&g, 0.0).unwrap();
        assert!((step.delta - direct).amax() < 1e-9);
    }

    #[test]
    fn singular_system_reports_failure() {
        // Vertex 2 is unconstrained, so H has a zero block.
        let mut g = pair(0.1);
        g.push_vertex(at(5.0, 0.0), 2.0).unwrap();
        assert!(matches!(lm_step(&g, 0.0), Err(Error::NumericalFailure(_))));
        assert!(lm_step(&g, 1.0).is_ok());
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let mut g = pair(0.1);
        g.push_vertex(at(5.0, 0.0), 2.0).unwrap();
        assert!(matches!(optimize(&g, 10, 1e-9), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn consistent_graph_is_returned_unchanged() {
        let g = pair(0.0);
        let out = optimize_with(&g, &OptimizeOptions::default()).unwrap();
        assert_eq!(out.graph, g);
        assert_eq!(out.residuals, vec![0.0]);
    }
}
