//! Scalar and vector fields over R^n given by evaluation callbacks, with
//! optional exact derivatives and explicit kink annotations. Fields without
//! exact derivatives fall back to central differences; nonsmooth field data
//! must be annotated or the subgradient routes refuse to run.

use std::sync::Arc;

use crate::geom;
use crate::scalar::Real;

type EvalFn<R> = Arc<dyn Fn(&[R]) -> R + Send + Sync>;
type GradFn<R> = Arc<dyn Fn(&[R]) -> Vec<R> + Send + Sync>;

/// Relative step for central differences; error is O(step^2).
pub fn fd_step<R: Real>(x: &[R]) -> R {
    R::of(6.0e-6) * (R::one() + geom::norm(x))
}

#[derive(Clone)]
pub struct ScalarField<R: Real> {
    eval: EvalFn<R>,
    gradient: Option<GradFn<R>>,
    /// Points (1D) where the field is continuous but not differentiable.
    kinks: Vec<R>,
}

impl<R: Real> ScalarField<R> {
    pub fn new(f: impl Fn(&[R]) -> R + Send + Sync + 'static) -> Self {
        Self {
            eval: Arc::new(f),
            gradient: None,
            kinks: Vec::new(),
        }
    }

    pub fn constant(c: R) -> Self {
        Self::new(move |_| c)
    }

    pub fn with_gradient(mut self, g: impl Fn(&[R]) -> Vec<R> + Send + Sync + 'static) -> Self {
        self.gradient = Some(Arc::new(g));
        self
    }

    /// Annotates 1D kink locations (e.g. `|x|` at 0).
    pub fn with_kinks(mut self, kinks: Vec<R>) -> Self {
        self.kinks = kinks;
        self
    }

    pub fn value(&self, x: &[R]) -> R {
        (self.eval)(x)
    }

    pub fn has_exact_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn kinks(&self) -> &[R] {
        &self.kinks
    }

    pub fn is_at_kink(&self, x: &[R], tol: R) -> bool {
        x.len() == 1 && self.kinks.iter().any(|&k| (x[0] - k).abs() <= tol)
    }

    /// Gradient: exact callback when present, else central differences.
    pub fn grad(&self, x: &[R]) -> Vec<R> {
        if let Some(g) = &self.gradient {
            return g(x);
        }
        let h = fd_step(x);
        (0..x.len())
            .map(|i| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[i] += h;
                xm[i] -= h;
                (self.value(&xp) - self.value(&xm)) / (h + h)
            })
            .collect()
    }

    /// One-sided slopes `(left, right)` of a 1D field, for kink brackets.
    pub fn one_sided_slopes(&self, x: R) -> (R, R) {
        let h = fd_step(&[x]);
        let f0 = self.value(&[x]);
        // Second-order one-sided stencils keep kink brackets tight.
        let right = (R::of(4.0) * self.value(&[x + h]) - R::of(3.0) * f0
            - self.value(&[x + h + h]))
            / (h + h);
        let left = (R::of(3.0) * f0 - R::of(4.0) * self.value(&[x - h])
            + self.value(&[x - h - h]))
            / (h + h);
        (left, right)
    }
}

impl<R: Real> std::fmt::Debug for ScalarField<R> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarField")
            .field("exact_gradient", &self.gradient.is_some())
            .field("kinks", &self.kinks)
            .finish()
    }
}

type VecEvalFn<R> = Arc<dyn Fn(&[R]) -> Vec<R> + Send + Sync>;
type JacFn<R> = Arc<dyn Fn(&[R]) -> Vec<Vec<R>> + Send + Sync>;

#[derive(Clone)]
pub struct VectorField<R: Real> {
    dim_out: usize,
    eval: VecEvalFn<R>,
    /// Jacobian rows are output components: J[i][j] = d f_i / d x_j.
    jacobian: Option<JacFn<R>>,
}

impl<R: Real> VectorField<R> {
    pub fn new(dim_out: usize, f: impl Fn(&[R]) -> Vec<R> + Send + Sync + 'static) -> Self {
        Self {
            dim_out,
            eval: Arc::new(f),
            jacobian: None,
        }
    }

    pub fn constant(v: Vec<R>) -> Self {
        let dim = v.len();
        Self::new(dim, move |_| v.clone())
    }

    pub fn with_jacobian(
        mut self,
        j: impl Fn(&[R]) -> Vec<Vec<R>> + Send + Sync + 'static,
    ) -> Self {
        self.jacobian = Some(Arc::new(j));
        self
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn value(&self, x: &[R]) -> Vec<R> {
        (self.eval)(x)
    }

    pub fn jacobian(&self, x: &[R]) -> Vec<Vec<R>> {
        if let Some(j) = &self.jacobian {
            return j(x);
        }
        let h = fd_step(x);
        let mut rows = vec![vec![R::zero(); x.len()]; self.dim_out];
        for j in 0..x.len() {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += h;
            xm[j] -= h;
            let fp = self.value(&xp);
            let fm = self.value(&xm);
            for i in 0..self.dim_out {
                rows[i][j] = (fp[i] - fm[i]) / (h + h);
            }
        }
        rows
    }

    /// `J(x)^T p`, the x-gradient of `x -> <f(x), p>`.
    pub fn jacobian_transpose_apply(&self, x: &[R], p: &[R]) -> Vec<R> {
        let j = self.jacobian(x);
        (0..x.len())
            .map(|col| (0..self.dim_out).map(|row| j[row][col] * p[row]).sum())
            .collect()
    }
}

impl<R: Real> std::fmt::Debug for VectorField<R> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VectorField")
            .field("dim_out", &self.dim_out)
            .field("exact_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_gradient_matches_exact() {
        let f = ScalarField::new(|x: &[f64]| x[0] * x[0] + 3.0 * x[1]);
        let g = f.grad(&[0.7, -0.2]);
        assert!((g[0] - 1.4).abs() < 1e-8);
        assert!((g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn one_sided_slopes_bracket_abs() {
        let f = ScalarField::new(|x: &[f64]| x[0].abs()).with_kinks(vec![0.0]);
        let (l, r) = f.one_sided_slopes(0.0);
        assert!((l + 1.0).abs() < 1e-6, "left {l}");
        assert!((r - 1.0).abs() < 1e-6, "right {r}");
        assert!(f.is_at_kink(&[1e-12], 1e-9));
        assert!(!f.is_at_kink(&[0.5], 1e-9));
    }

    #[test]
    fn jacobian_transpose_apply_linear_map() {
        // f(x) = A x with A = [[1, 2], [0, -1]]; J^T p = A^T p.
        let f = VectorField::new(2, |x: &[f64]| vec![x[0] + 2.0 * x[1], -x[1]]);
        let jt = f.jacobian_transpose_apply(&[0.3, 0.4], &[1.0, 1.0]);
        assert!((jt[0] - 1.0).abs() < 1e-8);
        assert!((jt[1] - 1.0).abs() < 1e-8);
    }
}
