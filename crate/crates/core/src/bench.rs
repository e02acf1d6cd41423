//! Closed-form benchmark instances that the verifiers and the acceptance
//! suite run against. Registry constants are frozen here so every reported
//! number is reproducible.

use std::sync::Arc;

use crate::dynamics::{ConvexBody, SetValuedMap};
use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::geom::BoxDomain;
use crate::hjb::{GridSpec, MayerProblem};
use crate::nonsmooth::{SampledFunction, SmoothnessHint};
use crate::scalar::Real;

/// Which hypotheses the instance is expected to satisfy. `None` records a
/// caveat (partially met).
#[derive(Clone, Copy, Debug)]
pub struct HypothesisProfile {
    pub sh: bool,
    pub h1: bool,
    pub h2: bool,
    pub h3: Option<bool>,
    pub h4: bool,
}

type ValueFn<R> = Arc<dyn Fn(R, &[R]) -> R + Send + Sync>;
type OptimalFn<R> = Arc<dyn Fn(R, &[R], R) -> Vec<R> + Send + Sync>;

#[derive(Clone)]
pub struct Benchmark<R: Real> {
    pub name: String,
    pub problem: MayerProblem<R>,
    /// Closed-form value function, when available.
    pub value: Option<ValueFn<R>>,
    /// Closed-form optimal trajectory: `(t0, x0, s) -> y(s)`.
    pub optimal_from: Option<OptimalFn<R>>,
    pub profile: HypothesisProfile,
    pub default_grid: GridSpec,
    pub default_velocity_samples: usize,
}

impl<R: Real> std::fmt::Debug for Benchmark<R> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Benchmark")
            .field("name", &self.name)
            .field("profile", &self.profile)
            .finish()
    }
}

pub const NAMES: [&str; 5] = [
    "eikonal1d",
    "two_ray",
    "ball_linear",
    "quartic_body",
    "interval_fg",
];

// Frozen registry constants of `ball_linear`: A = c I + w J (a rotation
// combined with a contraction), F(x) = B(Ax, r0), phi = |x - x*|^2.
pub const BALL_LINEAR_CONTRACTION: f64 = -0.2;
pub const BALL_LINEAR_ROTATION: f64 = 0.3;
pub const BALL_LINEAR_RADIUS: f64 = 0.5;
pub const BALL_LINEAR_TARGET: [f64; 2] = [0.25, 0.0];

/// Frozen `quartic_body` constants: the body is epi(x^4) within B(0, R0).
pub const QUARTIC_BALL_RADIUS: f64 = 1.0;
pub const QUARTIC_CURVE_SAMPLES: usize = 512;
pub const QUARTIC_ARC_SAMPLES: usize = 257;

/// Frozen `interval_fg` dynamics: F(x) = [-1 - x^2/4, 1 + x^2/4].
pub const INTERVAL_FG_COEFF: f64 = 0.25;

pub fn instance<R: Real>(name: &str) -> Result<Benchmark<R>> {
    match name {
        "eikonal1d" => Ok(eikonal1d()),
        "two_ray" => Ok(two_ray()),
        "ball_linear" => Ok(ball_linear()),
        "quartic_body" => Ok(quartic_body()),
        "interval_fg" => Ok(interval_fg()),
        other => Err(Error::UnknownBenchmark(other.into())),
    }
}

fn unit_interval_dynamics<R: Real>() -> SetValuedMap<R> {
    SetValuedMap::Interval1D {
        lower: ScalarField::constant(-R::one()).with_gradient(|_| vec![R::zero()]),
        upper: ScalarField::constant(R::one()).with_gradient(|_| vec![R::zero()]),
    }
}

fn box1<R: Real>(h: f64) -> BoxDomain<R> {
    BoxDomain::new(vec![R::of(-h)], vec![R::of(h)])
}

/// F = [-1, 1], phi = |x|: V(t,x) = max(|x| - (T - t), 0). Nonsmooth value,
/// smooth rays off the kinks.
pub fn eikonal1d<R: Real>() -> Benchmark<R> {
    let phi = SampledFunction::new(box1(20.0), |x: &[R]| x[0].abs())
        .with_hint(SmoothnessHint::LocallyLipschitz)
        .with_gradient(|x: &[R]| vec![signum0(x[0])]);
    let problem = MayerProblem::new(
        unit_interval_dynamics(),
        phi,
        R::zero(),
        R::one(),
        box1(2.0),
    )
    .unwrap();
    Benchmark {
        name: "eikonal1d".into(),
        problem,
        value: Some(Arc::new(|t: R, x: &[R]| {
            (x[0].abs() - (R::one() - t)).max(R::zero())
        })),
        optimal_from: Some(Arc::new(|t0: R, x0: &[R], s: R| {
            vec![signum0(x0[0]) * (x0[0].abs() - (s - t0)).max(R::zero())]
        })),
        profile: HypothesisProfile {
            sh: true,
            h1: true,
            h2: true,
            h3: Some(true),
            h4: true,
        },
        default_grid: GridSpec::new(201, vec![201]),
        default_velocity_samples: 2,
    }
}

fn signum0<R: Real>(x: R) -> R {
    if x > R::zero() {
        R::one()
    } else if x < R::zero() {
        -R::one()
    } else {
        R::zero()
    }
}

/// F = [-1, 1], phi = -x^2: V(t,x) = -(|x| + (T - t))^2. Two reachable
/// gradients of V at x = 0 and two disjoint optimal ray families.
pub fn two_ray<R: Real>() -> Benchmark<R> {
    let phi = SampledFunction::new(box1(20.0), |x: &[R]| -x[0] * x[0])
        .with_hint(SmoothnessHint::Smooth)
        .with_gradient(|x: &[R]| vec![-(x[0] + x[0])]);
    let problem = MayerProblem::new(
        unit_interval_dynamics(),
        phi,
        R::zero(),
        R::one(),
        box1(2.0),
    )
    .unwrap();
    Benchmark {
        name: "two_ray".into(),
        problem,
        value: Some(Arc::new(|t: R, x: &[R]| {
            let s = x[0].abs() + (R::one() - t);
            -s * s
        })),
        optimal_from: Some(Arc::new(|t0: R, x0: &[R], s: R| {
            let sign = if x0[0] < R::zero() { -R::one() } else { R::one() };
            vec![sign * (x0[0].abs() + (s - t0))]
        })),
        profile: HypothesisProfile {
            sh: true,
            h1: true,
            h2: true,
            h3: Some(true),
            h4: true,
        },
        default_grid: GridSpec::new(201, vec![401]),
        default_velocity_samples: 2,
    }
}

/// F(x) = B(Ax, r0) in R^2 with A a rotation+contraction, phi = |x - x*|^2.
/// Satisfies (H1)-(H3); dual arcs solve the linear adjoint p' = -A^T p.
pub fn ball_linear<R: Real>() -> Benchmark<R> {
    let a = ball_linear_matrix::<R>();
    let center = VectorField::new(2, move |x: &[R]| {
        vec![
            a[0][0] * x[0] + a[0][1] * x[1],
            a[1][0] * x[0] + a[1][1] * x[1],
        ]
    })
    .with_jacobian(move |_| vec![vec![a[0][0], a[0][1]], vec![a[1][0], a[1][1]]]);
    let dynamics = SetValuedMap::Ball {
        center,
        radius: ScalarField::constant(R::of(BALL_LINEAR_RADIUS)).with_gradient(|_| vec![R::zero(); 2]),
        dim: 2,
    };
    let target = [R::of(BALL_LINEAR_TARGET[0]), R::of(BALL_LINEAR_TARGET[1])];
    let phi = SampledFunction::new(
        BoxDomain::new(vec![R::of(-50.0); 2], vec![R::of(50.0); 2]),
        move |x: &[R]| {
            let d0 = x[0] - target[0];
            let d1 = x[1] - target[1];
            d0 * d0 + d1 * d1
        },
    )
    .with_hint(SmoothnessHint::Smooth)
    .with_gradient(move |x: &[R]| {
        vec![
            (x[0] - target[0]) + (x[0] - target[0]),
            (x[1] - target[1]) + (x[1] - target[1]),
        ]
    });
    let problem = MayerProblem::new(
        dynamics,
        phi,
        R::zero(),
        R::one(),
        BoxDomain::new(vec![-R::one(); 2], vec![R::one(); 2]),
    )
    .unwrap();
    Benchmark {
        name: "ball_linear".into(),
        problem,
        value: None,
        optimal_from: None,
        profile: HypothesisProfile {
            sh: true,
            h1: true,
            h2: true,
            h3: Some(true),
            h4: true,
        },
        default_grid: GridSpec::new(51, vec![41, 41]),
        default_velocity_samples: 8,
    }
}

pub fn ball_linear_matrix<R: Real>() -> [[R; 2]; 2] {
    let c = R::of(BALL_LINEAR_CONTRACTION);
    let w = R::of(BALL_LINEAR_ROTATION);
    [[c, -w], [w, c]]
}

/// Constant body epi(x^4) within B(0, R0): differentiable Hamiltonian with
/// x-independent grad_p H, yet not strongly convex (curvature 0 at the flat
/// point). Satisfies (H1) and not (H2); the ball caps leave two corner
/// points, so the C1-boundary part of (H3) is only partially met.
pub fn quartic_body<R: Real>() -> Benchmark<R> {
    let body = quartic_epigraph_body(
        R::of(QUARTIC_BALL_RADIUS),
        QUARTIC_CURVE_SAMPLES,
        QUARTIC_ARC_SAMPLES,
    );
    let dynamics = SetValuedMap::FixedBody { body };
    let phi = SampledFunction::new(
        BoxDomain::new(vec![R::of(-50.0); 2], vec![R::of(50.0); 2]),
        |x: &[R]| {
            let d0 = x[0] - R::of(0.2);
            let d1 = x[1] - R::of(0.3);
            d0 * d0 + d1 * d1
        },
    )
    .with_hint(SmoothnessHint::Smooth)
    .with_gradient(|x: &[R]| {
        vec![
            (x[0] - R::of(0.2)) + (x[0] - R::of(0.2)),
            (x[1] - R::of(0.3)) + (x[1] - R::of(0.3)),
        ]
    });
    let problem = MayerProblem::new(
        dynamics,
        phi,
        R::zero(),
        R::one(),
        BoxDomain::new(vec![-R::one(); 2], vec![R::one(); 2]),
    )
    .unwrap();
    Benchmark {
        name: "quartic_body".into(),
        problem,
        value: None,
        optimal_from: None,
        profile: HypothesisProfile {
            sh: true,
            h1: true,
            h2: false,
            h3: None,
            h4: true,
        },
        default_grid: GridSpec::new(41, vec![31, 31]),
        default_velocity_samples: 8,
    }
}

/// Boundary sampler of epi(x^4) within B(0, r0): the quartic arc sampled on
/// a log-graded abscissa grid (dense near the zero-curvature point) plus the
/// capping circular arc, both with exact outward unit normals.
pub fn quartic_epigraph_body<R: Real>(
    r0: R,
    curve_samples: usize,
    arc_samples: usize,
) -> ConvexBody<R> {
    // Corner abscissa: x^2 + x^8 = r0^2.
    let mut lo = R::zero();
    let mut hi = r0;
    for _ in 0..200 {
        let mid = (lo + hi).half();
        let v = mid * mid + mid.powi(8) - r0 * r0;
        if v > R::zero() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let xc = (lo + hi).half();

    let mut points = Vec::new();
    let mut normals = Vec::new();
    // Quartic branch, both signs, log-graded from xc down to 1e-6 * xc.
    let total = curve_samples.max(8);
    let decay = R::of((1e-6f64).powf(1.0 / (total - 1) as f64));
    let mut mags = Vec::with_capacity(total);
    let mut m = xc;
    for _ in 0..total {
        mags.push(m);
        m = m * decay;
    }
    for &mag in &mags {
        for sign in [R::one(), -R::one()] {
            let x = sign * mag;
            let y = x.powi(4);
            let slope = R::of(4.0) * x.powi(3);
            let nrm = (R::one() + slope * slope).sqrt();
            points.push(vec![x, y]);
            normals.push(vec![slope / nrm, -R::one() / nrm]);
        }
    }
    // Flat point itself.
    points.push(vec![R::zero(), R::zero()]);
    normals.push(vec![R::zero(), -R::one()]);
    // Capping arc through the top, from one corner to the other.
    let theta_c = xc.powi(4).atan2(xc);
    let span = R::of(std::f64::consts::PI) - theta_c - theta_c;
    let count = arc_samples.max(8);
    for j in 0..count {
        let theta = theta_c + span * R::from_usize(j).unwrap() / R::from_usize(count - 1).unwrap();
        let p = vec![r0 * theta.cos(), r0 * theta.sin()];
        normals.push(vec![p[0] / r0, p[1] / r0]);
        points.push(p);
    }
    ConvexBody::from_points(2, points).with_normals(normals)
}

/// F(x) = [f(x), g(x)] with f = -1 - x^2/4, g = 1 + x^2/4: the piecewise
/// Hamiltonian `H(x,p) = f(x) p` for p < 0, `g(x) p` for p >= 0, with a
/// unique optimal trajectory wherever V_x does not vanish. The registered
/// terminal cost is the smooth phi(x) = -x (so V has a closed form and a
/// nonvanishing gradient); the dual-fan experiments build a cone-type cost
/// on the same dynamics via [`cone_cost`].
pub fn interval_fg<R: Real>() -> Benchmark<R> {
    let problem = MayerProblem::new(
        interval_fg_dynamics(),
        SampledFunction::new(box1(1e6), |x: &[R]| -x[0])
            .with_hint(SmoothnessHint::Smooth)
            .with_gradient(|_| vec![-R::one()]),
        R::zero(),
        R::one(),
        box1(2.0),
    )
    .unwrap();
    Benchmark {
        name: "interval_fg".into(),
        problem,
        value: Some(Arc::new(|t: R, x: &[R]| {
            -interval_fg_flow(x[0], R::one() - t)
        })),
        optimal_from: Some(Arc::new(|t0: R, x0: &[R], s: R| {
            vec![interval_fg_flow(x0[0], s - t0)]
        })),
        profile: HypothesisProfile {
            sh: true,
            h1: true,
            h2: true,
            h3: Some(true),
            h4: true,
        },
        default_grid: GridSpec::new(801, vec![201]),
        default_velocity_samples: 2,
    }
}

pub fn interval_fg_dynamics<R: Real>() -> SetValuedMap<R> {
    let c = R::of(INTERVAL_FG_COEFF);
    SetValuedMap::Interval1D {
        lower: ScalarField::new(move |x: &[R]| -R::one() - c * x[0] * x[0])
            .with_gradient(move |x: &[R]| vec![-(c + c) * x[0]]),
        upper: ScalarField::new(move |x: &[R]| R::one() + c * x[0] * x[0])
            .with_gradient(move |x: &[R]| vec![(c + c) * x[0]]),
    }
}

/// Flow of x' = 1 + x^2/4 after time tau: x(tau) = 2 tan(arctan(x/2) + tau/2).
pub fn interval_fg_flow<R: Real>(x: R, tau: R) -> R {
    let two = R::of(2.0);
    two * ((x / two).atan() + tau.half()).tan()
}

/// Concave two-slope cost with a kink at `apex`:
/// `phi(y) = min(s1 (y - apex), s2 (y - apex))`.
/// Its proximal superdifferential at the apex is the slope bracket
/// `[min(s1,s2), max(s1,s2)]`, with quadratic constant 0.
pub fn cone_cost<R: Real>(apex: R, s1: R, s2: R) -> SampledFunction<R> {
    SampledFunction::new(box1(1e6), move |y: &[R]| {
        let d = y[0] - apex;
        (s1 * d).min(s2 * d)
    })
    .with_hint(SmoothnessHint::LocallyLipschitz)
}

/// Zero-dual variant: F = [-1,1], phi = x^2 (flat minimum at the origin).
/// V(t,x) = max(|x| - (T-t), 0)^2; optimal arcs from inside the cone carry
/// the identically-zero dual.
pub fn flat_min_problem<R: Real>() -> (MayerProblem<R>, ValueFn<R>, OptimalFn<R>) {
    let phi = SampledFunction::new(box1(20.0), |x: &[R]| x[0] * x[0])
        .with_hint(SmoothnessHint::Smooth)
        .with_gradient(|x: &[R]| vec![x[0] + x[0]]);
    let problem = MayerProblem::new(
        unit_interval_dynamics(),
        phi,
        R::zero(),
        R::one(),
        box1(2.0),
    )
    .unwrap();
    let value: ValueFn<R> = Arc::new(|t: R, x: &[R]| {
        let d = (x[0].abs() - (R::one() - t)).max(R::zero());
        d * d
    });
    let optimal: OptimalFn<R> = Arc::new(|t0: R, x0: &[R], s: R| {
        vec![signum0(x0[0]) * (x0[0].abs() - (s - t0)).max(R::zero())]
    });
    (problem, value, optimal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom;

    #[test]
    fn registry_names_resolve() {
        for name in NAMES {
            assert!(instance::<f64>(name).is_ok(), "{name}");
        }
        assert!(matches!(
            instance::<f64>("nope"),
            Err(Error::UnknownBenchmark(_))
        ));
    }

    #[test]
    fn eikonal_value_closed_form() {
        let b = eikonal1d::<f64>();
        let v = b.value.as_ref().unwrap();
        assert_eq!(v(0.0, &[2.0]), 1.0);
        assert_eq!(v(0.0, &[0.5]), 0.0);
        // Terminal condition matches phi.
        assert_eq!(v(1.0, &[-1.3]), 1.3);
    }

    #[test]
    fn two_ray_value_and_rays() {
        let b = two_ray::<f64>();
        let v = b.value.as_ref().unwrap();
        assert_eq!(v(0.0, &[0.0]), -1.0);
        assert_eq!(v(1.0, &[2.0]), -4.0);
        let opt = b.optimal_from.as_ref().unwrap();
        // From the origin the positive ray: y(s) = s; value is constant -1.
        let y = opt(0.0, &[0.0], 0.75);
        assert_eq!(y[0], 0.75);
        assert!((v(0.75, &y) - v(0.0, &[0.0])).abs() < 1e-12);
    }

    #[test]
    fn closed_forms_satisfy_terminal_condition_and_dpp_monotonicity() {
        for name in ["eikonal1d", "two_ray", "interval_fg"] {
            let b = instance::<f64>(name).unwrap();
            let v = b.value.as_ref().unwrap();
            let phi = &b.problem.terminal_cost;
            for x in [-1.7, -0.4, 0.0, 0.9, 1.8] {
                assert!(
                    (v(1.0, &[x]) - phi.value(&[x])).abs() < 1e-12,
                    "{name} terminal at {x}"
                );
            }
            // Along the closed-form optimal trajectory the value is constant.
            let opt = b.optimal_from.as_ref().unwrap();
            for x0 in [-1.2, 0.3, 1.5] {
                let v0 = v(0.0, &[x0]);
                for s in [0.25, 0.5, 0.99] {
                    let y = opt(0.0, &[x0], s);
                    assert!(
                        (v(s, &y) - v0).abs() < 1e-10,
                        "{name} from {x0} at {s}: {} vs {v0}",
                        v(s, &y)
                    );
                }
            }
        }
    }

    #[test]
    fn interval_fg_flow_matches_ode() {
        // x' = 1 + x^2/4 integrated crudely forward.
        let mut x = 0.3f64;
        let dt = 1e-5;
        for _ in 0..100_000 {
            let k1 = 1.0 + x * x / 4.0;
            let xm = x + 0.5 * dt * k1;
            x += dt * (1.0 + xm * xm / 4.0);
        }
        assert!((x - interval_fg_flow(0.3, 1.0)).abs() < 1e-6, "{x}");
    }

    #[test]
    fn quartic_body_boundary_is_on_the_body() {
        let body = quartic_epigraph_body(1.0f64, 128, 65);
        let r0 = 1.0;
        for (p, n) in body.points().iter().zip(body.normals().unwrap()) {
            assert!((geom::norm(n) - 1.0).abs() < 1e-12);
            // Either on the quartic curve or on the capping arc.
            let on_curve = (p[1] - p[0].powi(4)).abs() < 1e-12;
            let on_arc = (geom::norm(p) - r0).abs() < 1e-12;
            assert!(on_curve || on_arc, "{p:?}");
            assert!(geom::norm(p) <= r0 + 1e-12);
        }
        // Dense coverage near the flat point.
        let min_positive = body
            .points()
            .iter()
            .filter(|p| p[0] > 0.0)
            .map(|p| p[0])
            .fold(f64::INFINITY, f64::min);
        assert!(min_positive < 1e-5, "{min_positive}");
    }

    #[test]
    fn cone_cost_superdifferential_bracket() {
        let phi = cone_cost(1.0f64, -0.25, -1.0);
        assert_eq!(phi.value(&[1.0]), 0.0);
        // Left of the apex the shallow slope is active, right the steep one.
        assert!((phi.value(&[0.0]) - 0.25).abs() < 1e-12);
        assert!((phi.value(&[2.0]) + 1.0).abs() < 1e-12);
        // phi(y) <= q (y - apex) for q in [-1, -0.25].
        for q in [-1.0, -0.6, -0.25] {
            for y in [-0.5, 0.7, 1.0, 1.4, 2.5] {
                assert!(phi.value(&[y]) <= q * (y - 1.0) + 1e-12);
            }
        }
    }
}
