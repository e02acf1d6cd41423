//! Small dense-vector helpers and axis-aligned boxes for states in R^n,
//! n <= 3. Nothing here is clever; the problem dimensions do not warrant a
//! linear-algebra dependency.

use crate::scalar::Real;

pub fn dot<R: Real>(a: &[R], b: &[R]) -> R {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm<R: Real>(a: &[R]) -> R {
    dot(a, a).sqrt()
}

pub fn dist<R: Real>(a: &[R], b: &[R]) -> R {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<R>()
        .sqrt()
}

pub fn scaled<R: Real>(a: &[R], s: R) -> Vec<R> {
    a.iter().map(|&x| x * s).collect()
}

/// `a + s * b`.
pub fn add_scaled<R: Real>(a: &[R], s: R, b: &[R]) -> Vec<R> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x + s * y).collect()
}

pub fn sub<R: Real>(a: &[R], b: &[R]) -> Vec<R> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

pub fn normalized<R: Real>(a: &[R]) -> Option<Vec<R>> {
    let n = norm(a);
    if n <= R::zero() {
        return None;
    }
    Some(scaled(a, R::one() / n))
}

/// Axis-aligned box, the working domain of all samplers and grids.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxDomain<R: Real> {
    pub lo: Vec<R>,
    pub hi: Vec<R>,
}

impl<R: Real> BoxDomain<R> {
    pub fn new(lo: Vec<R>, hi: Vec<R>) -> Self {
        assert_eq!(lo.len(), hi.len(), "box bounds must share a dimension");
        assert!(
            lo.iter().zip(&hi).all(|(&a, &b)| a <= b),
            "box must be nonempty"
        );
        Self { lo, hi }
    }

    pub fn unit_centered(dim: usize, half_width: R) -> Self {
        Self {
            lo: vec![-half_width; dim],
            hi: vec![half_width; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[R]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&xi, (&lo, &hi))| xi >= lo && xi <= hi)
    }

    pub fn clamp(&self, x: &[R]) -> Vec<R> {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&xi, (&lo, &hi))| xi.max(lo).min(hi))
            .collect()
    }

    pub fn center(&self) -> Vec<R> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&a, &b)| (a + b).half())
            .collect()
    }

    pub fn extents(&self) -> Vec<R> {
        self.hi.iter().zip(&self.lo).map(|(&b, &a)| b - a).collect()
    }

    pub fn diameter(&self) -> R {
        norm(&self.extents())
    }

    pub fn min_extent(&self) -> R {
        self.extents()
            .into_iter()
            .fold(R::infinity(), |m, e| m.min(e))
    }

    /// Grows the box by `pad` on every side of every axis.
    pub fn padded(&self, pad: R) -> Self {
        Self {
            lo: self.lo.iter().map(|&a| a - pad).collect(),
            hi: self.hi.iter().map(|&b| b + pad).collect(),
        }
    }

    /// Shrinks the box by `margin` on every side; panics if it would empty.
    pub fn shrunk(&self, margin: R) -> Self {
        Self::new(
            self.lo.iter().map(|&a| a + margin).collect(),
            self.hi.iter().map(|&b| b - margin).collect(),
        )
    }

    /// Maps `u in [0,1]^n` affinely onto the box.
    pub fn lerp(&self, u: &[R]) -> Vec<R> {
        u.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&ui, (&lo, &hi))| lo + ui * (hi - lo))
            .collect()
    }
}

/// Deterministic set of (approximately) evenly spread unit directions.
///
/// 1D: the two signs. 2D: a regular fan of angles. 3D: a Fibonacci sphere.
pub fn unit_directions<R: Real>(dim: usize, count: usize) -> Vec<Vec<R>> {
    match dim {
        0 => panic!("zero-dimensional direction fan"),
        1 => vec![vec![R::one()], vec![-R::one()]],
        2 => {
            let count = count.max(4);
            (0..count)
                .map(|j| {
                    let theta = 2.0 * std::f64::consts::PI * j as f64 / count as f64;
                    vec![R::of(theta.cos()), R::of(theta.sin())]
                })
                .collect()
        }
        3 => {
            // Fibonacci sphere: golden-angle spiral over z in (-1, 1).
            let count = count.max(8);
            let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
            (0..count)
                .map(|j| {
                    let z = 1.0 - 2.0 * (j as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let theta = golden * j as f64;
                    vec![
                        R::of(r * theta.cos()),
                        R::of(r * theta.sin()),
                        R::of(z),
                    ]
                })
                .collect()
        }
        d => panic!("direction fans only implemented for n <= 3, got {d}"),
    }
}

/// Default fan size used by the Hausdorff-semidistance samplers.
pub fn default_direction_count(dim: usize) -> usize {
    match dim {
        1 => 2,
        2 => 64,
        _ => 256,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directions_are_unit() {
        for dim in 1..=3 {
            for d in unit_directions::<f64>(dim, 32) {
                assert!((norm(&d) - 1.0).abs() < 1e-12, "dim {dim}: {d:?}");
            }
        }
    }

    #[test]
    fn box_clamp_and_contains() {
        let b = BoxDomain::new(vec![-1.0, 0.0], vec![1.0, 2.0]);
        assert!(b.contains(&[0.5, 1.0]));
        assert!(!b.contains(&[1.5, 1.0]));
        assert_eq!(b.clamp(&[1.5, -1.0]), vec![1.0, 0.0]);
        assert_eq!(b.center(), vec![0.0, 1.0]);
    }

    #[test]
    fn padded_then_shrunk_roundtrips() {
        let b = BoxDomain::new(vec![-1.0], vec![1.0]);
        assert_eq!(b.padded(0.5).shrunk(0.5), b);
    }
}
