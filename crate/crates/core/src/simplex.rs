//! Best barycentric weights: `min_{w in simplex} (1/M) ||A w - f||^2`.
//!
//! The solver first runs a primal active-set method from the given start. If
//! that does not reach the KKT conditions it falls back to accelerated
//! projected gradient (FISTA with function-value restart) on the Gram form of
//! the objective, followed by active-set refinement from the support of the
//! gradient iterate. All stages keep the iterate on the probability simplex.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transport::DiscreteIcdf;

const SIMPLEX_TOL: f64 = 1e-10;

/// A point of the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("empty weight vector".into()));
        }
        let sum: f64 = values.iter().sum();
        if values.iter().any(|&v| !(v >= -SIMPLEX_TOL)) || (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidInput(format!(
                "weights are not on the simplex (sum {sum})"
            )));
        }
        Ok(Self(values))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn vertex(n: usize, i: usize) -> Self {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        Self(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Append a zero weight, used to warm start after growing a dictionary.
    pub fn extended(&self) -> Self {
        let mut v = self.0.clone();
        v.push(0.0);
        Self(v)
    }
}

/// Euclidean projection onto the probability simplex (sort and threshold).
pub fn project_to_simplex(v: &[f64]) -> SimplexWeights {
    let n = v.len();
    assert!(n > 0, "cannot project an empty vector");
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (k + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        }
    }
    SimplexWeights(v.iter().map(|&x| (x - tau).max(0.0)).collect())
}

/// Weights inversely proportional to the W2 distance of each atom to the target.
pub fn init_weights(distances: &[f64]) -> SimplexWeights {
    let n = distances.len();
    let zeros = distances.iter().filter(|&&d| d == 0.0).count();
    if zeros > 0 {
        let w = 1.0 / zeros as f64;
        return SimplexWeights(distances.iter().map(|&d| if d == 0.0 { w } else { 0.0 }).collect());
    }
    let inv: Vec<f64> = distances.iter().map(|&d| 1.0 / (d + 1e-12)).collect();
    let total: f64 = inv.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return SimplexWeights::uniform(n);
    }
    SimplexWeights(inv.into_iter().map(|x| x / total).collect())
}

/// Atom matrix with its quadrature-weighted Gram matrix `A^T A / M`.
#[derive(Debug, Clone)]
pub struct AtomSystem {
    columns: Vec<Vec<f64>>,
    m: usize,
    gram: DMatrix<f64>,
    lipschitz: f64,
}

impl AtomSystem {
    pub fn new(atoms: &[DiscreteIcdf]) -> Result<Self> {
        let first = atoms
            .first()
            .ok_or_else(|| Error::InvalidInput("atom system needs at least one atom".into()))?;
        let mut sys = Self {
            columns: Vec::with_capacity(atoms.len()),
            m: first.len(),
            gram: DMatrix::zeros(0, 0),
            lipschitz: 0.0,
        };
        for a in atoms {
            sys.push(a)?;
        }
        Ok(sys)
    }

    /// Append one atom, extending the Gram matrix by one row and column.
    pub fn push(&mut self, atom: &DiscreteIcdf) -> Result<()> {
        if atom.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: atom.len(),
            });
        }
        let n = self.columns.len();
        let w = self.quadrature_weight();
        let mut gram = self.gram.clone().resize(n + 1, n + 1, 0.0);
        for (j, col) in self.columns.iter().enumerate() {
            let g = w * dot(col, &atom.values);
            gram[(n, j)] = g;
            gram[(j, n)] = g;
        }
        gram[(n, n)] = w * dot(&atom.values, &atom.values);
        self.gram = gram;
        self.columns.push(atom.values.clone());
        self.lipschitz = 2.0 * largest_eigenvalue(&self.gram);
        Ok(())
    }

    pub fn n_atoms(&self) -> usize {
        self.columns.len()
    }

    /// Length `M` of every column.
    pub fn n_nodes(&self) -> usize {
        self.m
    }

    pub fn quadrature_weight(&self) -> f64 {
        1.0 / self.m as f64
    }

    /// `A^T A / M`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn problem<'a>(&'a self, target: &'a DiscreteIcdf) -> Result<QpProblem<'a>> {
        QpProblem::new(self, target)
    }

    /// `(1/M) ||A w - f||^2` evaluated from the residual.
    pub fn objective(&self, w: &[f64], target: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (k, &f) in target.iter().enumerate() {
            let mut r = -f;
            for (col, &lambda) in self.columns.iter().zip(w) {
                r += lambda * col[k];
            }
            acc += r * r;
        }
        acc * self.quadrature_weight()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Power iteration; Gram matrices are symmetric positive semidefinite.
fn largest_eigenvalue(g: &DMatrix<f64>) -> f64 {
    let n = g.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..500 {
        let w = g * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - lambda).abs() <= 1e-12 * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    // guard against underestimation so 1/L stays a safe step
    lambda.max(g.diagonal().max()) * (1.0 + 1e-9)
}

/// One target against a fixed atom system.
#[derive(Debug, Clone)]
pub struct QpProblem<'a> {
    system: &'a AtomSystem,
    target: &'a [f64],
    /// `A^T f / M`.
    linear: DVector<f64>,
    /// `f^T f / M`.
    constant: f64,
}

impl<'a> QpProblem<'a> {
    pub fn new(system: &'a AtomSystem, target: &'a DiscreteIcdf) -> Result<Self> {
        if target.len() != system.m {
            return Err(Error::DimensionMismatch {
                expected: system.m,
                got: target.len(),
            });
        }
        let w = system.quadrature_weight();
        let linear = DVector::from_iterator(
            system.n_atoms(),
            system.columns.iter().map(|c| w * dot(c, &target.values)),
        );
        Ok(Self {
            system,
            target: &target.values,
            linear,
            constant: w * dot(&target.values, &target.values),
        })
    }

    pub fn system(&self) -> &AtomSystem {
        self.system
    }

    pub fn n(&self) -> usize {
        self.system.n_atoms()
    }

    /// Objective through the Gram form, `w^T G w - 2 b^T w + c`.
    fn gram_objective(&self, w: &DVector<f64>) -> f64 {
        let gw = &self.system.gram * w;
        (w.dot(&gw) - 2.0 * self.linear.dot(w) + self.constant).max(0.0)
    }

    /// Gradient `2 (G w - b)`.
    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let w = DVector::from_column_slice(w);
        let g = 2.0 * (&self.system.gram * w - &self.linear);
        g.iter().copied().collect()
    }

    /// Exact objective from the residual.
    pub fn objective(&self, w: &[f64]) -> f64 {
        self.system.objective(w, self.target)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpResult {
    pub weights: SimplexWeights,
    /// Squared W2 distance between the target and the barycenter.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Number of iterations over which the gradient phase must make relative
/// progress before handing over to the active-set refinement.
const STAGNATION_WINDOW: usize = 25;

pub fn solve(problem: &QpProblem<'_>, init: &SimplexWeights, settings: QpSettings) -> Result<QpResult> {
    let n = problem.n();
    if init.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: init.len(),
        });
    }
    if !(settings.tol > 0.0) {
        return Err(Error::InvalidInput("QP tolerance must be positive".into()));
    }
    if n == 1 {
        let w = vec![1.0];
        return Ok(QpResult {
            objective: problem.objective(&w),
            weights: SimplexWeights(w),
            iterations: 0,
            converged: true,
        });
    }

    // warm starts are usually close to the optimal face, where the active-set
    // method alone finishes in a handful of face solves
    let (direct, direct_iters, direct_ok) = active_set_refine(problem, init, settings.tol);
    if direct_ok {
        return Ok(QpResult {
            objective: problem.objective(direct.values()),
            weights: direct,
            iterations: direct_iters,
            converged: true,
        });
    }

    let (apg_w, apg_iters) = accelerated_projected_gradient(problem, init, settings);
    let (refined, as_iters, kkt_ok) = active_set_refine(problem, &apg_w, settings.tol);

    let apg_obj = problem.gram_objective(&DVector::from_column_slice(apg_w.values()));
    let ref_obj = problem.gram_objective(&DVector::from_column_slice(refined.values()));
    let (weights, converged) = if ref_obj <= apg_obj {
        (refined, kkt_ok)
    } else {
        let ok = kkt_residual(problem, apg_w.values()) < 10.0 * settings.tol;
        (apg_w, ok)
    };
    Ok(QpResult {
        objective: problem.objective(weights.values()),
        weights,
        iterations: direct_iters + apg_iters + as_iters,
        converged,
    })
}

/// FISTA with function-value restart. Returns the best iterate found.
fn accelerated_projected_gradient(
    problem: &QpProblem<'_>,
    init: &SimplexWeights,
    settings: QpSettings,
) -> (SimplexWeights, usize) {
    let g = &problem.system.gram;
    let b = &problem.linear;
    let lipschitz = problem.system.lipschitz;
    let mut x = DVector::from_column_slice(project_to_simplex(init.values()).values());
    if lipschitz <= 0.0 {
        return (SimplexWeights(x.iter().copied().collect()), 0);
    }
    let step = 1.0 / lipschitz;
    let mut y = x.clone();
    let mut t = 1.0_f64;
    let mut fx = problem.gram_objective(&x);
    let mut history = Vec::with_capacity(STAGNATION_WINDOW + 1);
    history.push(fx);
    let mut iters = 0;
    while iters < settings.max_iter {
        iters += 1;
        let grad = 2.0 * (g * &y - b);
        let trial = &y - step * &grad;
        let x_new = DVector::from_vec(project_to_simplex(trial.as_slice()).into_inner());
        let f_new = problem.gram_objective(&x_new);
        if f_new > fx {
            // restart momentum from the last accepted iterate
            t = 1.0;
            y = x.clone();
            continue;
        }
        // gradient-mapping norm at y
        let mapping = (&y - &x_new).norm() * lipschitz;
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &x_new + ((t - 1.0) / t_new) * (&x_new - &x);
        t = t_new;
        x = x_new;
        fx = f_new;
        if mapping < settings.tol {
            break;
        }
        history.push(fx);
        if history.len() > STAGNATION_WINDOW {
            let old = history[history.len() - 1 - STAGNATION_WINDOW];
            if old - fx <= settings.tol * fx.max(f64::MIN_POSITIVE) {
                break;
            }
        }
    }
    (SimplexWeights(x.iter().copied().collect()), iters)
}

/// Largest violation of the simplex KKT conditions for the gradient of the objective.
pub fn kkt_residual(problem: &QpProblem<'_>, w: &[f64]) -> f64 {
    let grad = problem.gradient(w);
    let free: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 1e-8).collect();
    if free.is_empty() {
        return f64::INFINITY;
    }
    let lo = free.iter().map(|&i| grad[i]).fold(f64::INFINITY, f64::min);
    let hi = free.iter().map(|&i| grad[i]).fold(f64::NEG_INFINITY, f64::max);
    let common = free.iter().map(|&i| grad[i]).sum::<f64>() / free.len() as f64;
    let mut worst = hi - lo;
    for i in 0..w.len() {
        if w[i] <= 1e-8 {
            worst = worst.max(common - grad[i]);
        }
    }
    worst.max(0.0)
}

/// Solve the equality-constrained subproblem on `free`:
/// `min w^T G w - 2 b^T w` with `sum(w) = 1`.
fn face_minimizer(problem: &QpProblem<'_>, free: &[usize]) -> Option<Vec<f64>> {
    let k = free.len();
    let g = &problem.system.gram;
    let mut kkt = DMatrix::zeros(k + 1, k + 1);
    let mut rhs = DVector::zeros(k + 1);
    for (a, &i) in free.iter().enumerate() {
        for (c, &j) in free.iter().enumerate() {
            kkt[(a, c)] = g[(i, j)];
        }
        kkt[(a, k)] = 1.0;
        kkt[(k, a)] = 1.0;
        rhs[a] = problem.linear[i];
    }
    rhs[k] = 1.0;
    let sol = kkt.clone().lu().solve(&rhs).filter(|s| s.iter().all(|v| v.is_finite()));
    let sol = match sol {
        Some(s) => s,
        // rank-deficient face: minimum-norm least-squares solution
        None => kkt.svd(true, true).solve(&rhs, 1e-14).ok()?,
    };
    Some(sol.iter().take(k).copied().collect())
}

/// Primal active-set method from a feasible start. Returns the iterate, the
/// number of face solves and whether the KKT conditions hold.
fn active_set_refine(problem: &QpProblem<'_>, start: &SimplexWeights, tol: f64) -> (SimplexWeights, usize, bool) {
    let n = problem.n();
    let mut x: Vec<f64> = start.values().to_vec();
    let mut free: Vec<usize> = (0..n).filter(|&i| x[i] > 0.0).collect();
    if free.is_empty() {
        free.push(0);
        x = SimplexWeights::vertex(n, 0).into_inner();
    }
    let max_iter = 10 * n + 50;
    for iter in 1..=max_iter {
        let Some(face) = face_minimizer(problem, &free) else {
            return (SimplexWeights(x), iter, false);
        };
        if face.iter().all(|&v| v >= 0.0) {
            let mut cand = vec![0.0; n];
            for (&i, &v) in free.iter().zip(&face) {
                cand[i] = v;
            }
            x = cand;
            let grad = problem.gradient(&x);
            let common = free.iter().map(|&i| grad[i]).sum::<f64>() / free.len() as f64;
            let entering = (0..n)
                .filter(|i| !free.contains(i))
                .map(|i| (i, grad[i] - common))
                .filter(|&(_, d)| d < -tol)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match entering {
                Some((j, _)) => {
                    free.push(j);
                    free.sort_unstable();
                }
                None => return (SimplexWeights(x), iter, true),
            }
        } else {
            // move towards the face minimizer until a weight hits zero
            let mut alpha = 1.0_f64;
            for (&i, &target) in free.iter().zip(&face) {
                let d = target - x[i];
                if d < 0.0 {
                    alpha = alpha.min(x[i] / -d);
                }
            }
            for (&i, &target) in free.iter().zip(&face) {
                x[i] += alpha * (target - x[i]);
            }
            let mut dropped = false;
            free.retain(|&i| {
                if x[i] <= 1e-15 {
                    x[i] = 0.0;
                    dropped = true;
                    false
                } else {
                    true
                }
            });
            if !dropped {
                // numerical stalemate: drop the smallest weight on the face
                if let Some(pos) = free
                    .iter()
                    .enumerate()
                    .min_by(|a, b| x[*a.1].total_cmp(&x[*b.1]))
                    .map(|(p, _)| p)
                {
                    x[free[pos]] = 0.0;
                    free.remove(pos);
                }
            }
            if free.is_empty() {
                return (SimplexWeights(start.values().to_vec()), iter, false);
            }
            let s: f64 = x.iter().sum();
            x.iter_mut().for_each(|v| *v /= s);
        }
    }
    (SimplexWeights(x), max_iter, false)
}

/// Sentinel returned by [`gram_condition`] for numerically singular Gram matrices.
pub const SINGULAR_CONDITION: f64 = f64::INFINITY;

/// Ratio of extreme eigenvalues of `A^T A`.
///
/// Returns [`SINGULAR_CONDITION`] when the smallest eigenvalue is at the
/// rounding level of the largest one.
pub fn gram_condition(system: &AtomSystem) -> f64 {
    let n = system.n_atoms();
    if n == 1 {
        return 1.0;
    }
    let eig = SymmetricEigen::new(system.gram.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let floor = (n as f64 * f64::EPSILON * max).max(1e-300);
    if min <= floor {
        return SINGULAR_CONDITION;
    }
    max / min
}

#[cfg(test)]
mod tests {
    use super::*;

    fn icdf(values: Vec<f64>) -> DiscreteIcdf {
        DiscreteIcdf { values }
    }

    #[test]
    fn projection_examples() {
        let on = [0.2, 0.3, 0.5];
        assert_eq!(project_to_simplex(&on).values(), &on);
        let p = project_to_simplex(&[1.2, -0.3]);
        assert_eq!(p.values(), &[1.0, 0.0]);
        let p = project_to_simplex(&[0.6, 0.6, 0.6]);
        for v in p.values() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn init_weights_examples() {
        assert_eq!(init_weights(&[0.3, 0.2, 0.0, 0.5]).values(), &[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(init_weights(&[2.0, 2.0]).values(), &[0.5, 0.5]);
        let w = init_weights(&[1.0, 3.0]);
        assert!((w.values()[0] - 0.75).abs() < 1e-11);
        assert!((w.values()[1] - 0.25).abs() < 1e-11);
    }

    #[test]
    fn singleton_simplex() {
        let a = icdf(vec![0.0, 0.2, 0.4, 0.6]);
        let f = icdf(vec![0.0, 0.1, 0.5, 0.9]);
        let sys = AtomSystem::new(std::slice::from_ref(&a)).unwrap();
        let r = solve(
            &sys.problem(&f).unwrap(),
            &SimplexWeights::uniform(1),
            QpSettings::default(),
        )
        .unwrap();
        assert_eq!(r.weights.values(), &[1.0]);
        let expected = (0.01 + 0.01 + 0.09) / 4.0;
        assert!((r.objective - expected).abs() < 1e-15);
    }

    #[test]
    fn realizable_target_recovers_zero_objective() {
        let m = 50;
        let atoms: Vec<DiscreteIcdf> = (1..=3)
            .map(|k| icdf((0..m).map(|j| (j as f64 / (m - 1) as f64).powi(k)).collect()))
            .collect();
        let w0 = [0.2, 0.5, 0.3];
        let target = icdf(
            (0..m)
                .map(|j| (0..3).map(|i| w0[i] * atoms[i].values[j]).sum())
                .collect(),
        );
        let sys = AtomSystem::new(&atoms).unwrap();
        let r = solve(
            &sys.problem(&target).unwrap(),
            &SimplexWeights::uniform(3),
            QpSettings::default(),
        )
        .unwrap();
        assert!(r.converged);
        assert!(r.objective < 1e-10);
        for (a, b) in r.weights.values().iter().zip(&w0) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn two_diracs_project_the_mean() {
        // Dirac icdfs are constant; the target's mean is projected onto the segment
        let m = 200;
        let (x1, x2) = (0.2, 0.7);
        let atoms = vec![icdf(vec![x1; m]), icdf(vec![x2; m])];
        let target = icdf((0..m).map(|j| 0.3 + 0.2 * j as f64 / (m - 1) as f64).collect());
        let mean = target.values.iter().sum::<f64>() / m as f64;
        let sys = AtomSystem::new(&atoms).unwrap();
        let r = solve(
            &sys.problem(&target).unwrap(),
            &SimplexWeights::uniform(2),
            QpSettings::default(),
        )
        .unwrap();
        let expected = [(x2 - mean) / (x2 - x1), (mean - x1) / (x2 - x1)];
        for (a, b) in r.weights.values().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-8, "{:?}", r.weights);
        }
    }

    #[test]
    fn condition_examples() {
        let a = icdf(vec![0.0, 0.3, 0.6, 0.9]);
        assert_eq!(gram_condition(&AtomSystem::new(std::slice::from_ref(&a)).unwrap()), 1.0);
        let twin = AtomSystem::new(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(gram_condition(&twin), SINGULAR_CONDITION);
        // constant columns are parallel: the closed-form eigenvalues are {0, x1^2 + x2^2}
        let consts = AtomSystem::new(&[icdf(vec![0.2; 8]), icdf(vec![0.7; 8])]).unwrap();
        assert_eq!(gram_condition(&consts), SINGULAR_CONDITION);
        // orthogonal-ish columns: compare with the closed-form 2x2 eigenvalues
        let b = icdf(vec![0.0, 0.1, 0.1, 0.8]);
        let sys = AtomSystem::new(&[a, b]).unwrap();
        let g = sys.gram();
        let (p, q, r) = (g[(0, 0)], g[(0, 1)], g[(1, 1)]);
        let mid = 0.5 * (p + r);
        let rad = (0.25 * (p - r) * (p - r) + q * q).sqrt();
        let expected = (mid + rad) / (mid - rad);
        assert!((gram_condition(&sys) - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn extended_weights_append_zero() {
        let w = SimplexWeights::new(vec![0.4, 0.6]).unwrap();
        assert_eq!(w.extended().values(), &[0.4, 0.6, 0.0]);
        assert!(SimplexWeights::new(vec![0.5, 0.6]).is_err());
        assert!(SimplexWeights::new(vec![1.5, -0.5]).is_err());
    }
}
