//! Set-valued dynamics F and the Hamiltonian H(x,p) = sup_{v in F(x)} <v,p>
//! (the support function of F(x) in direction p), together with the geometry
//! predicates used by the hypothesis audits: mid-point semiconvexity of F,
//! R-convexity of its values, and the strong-convexity modulus.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::geom::{self, BoxDomain};
use crate::scalar::Real;

/// Geometric predicates use this absolute tolerance scaled by body diameter.
pub const GEOMETRIC_TOL: f64 = 1e-9;

fn lossy_vec<R: Real>(x: &[R]) -> Vec<f64> {
    x.iter().map(|&v| v.lossy()).collect()
}

/// Convex body given by boundary samples, optionally with outward unit
/// normals at those samples. Used by the `FixedBody` dynamics variant.
#[derive(Clone, Debug)]
pub struct ConvexBody<R: Real> {
    dim: usize,
    points: Vec<Vec<R>>,
    normals: Option<Vec<Vec<R>>>,
}

impl<R: Real> ConvexBody<R> {
    pub fn from_points(dim: usize, points: Vec<Vec<R>>) -> Self {
        assert!(!points.is_empty(), "body needs at least one point");
        assert!(points.iter().all(|p| p.len() == dim));
        Self {
            dim,
            points,
            normals: None,
        }
    }

    pub fn with_normals(mut self, normals: Vec<Vec<R>>) -> Self {
        assert_eq!(normals.len(), self.points.len());
        self.normals = Some(normals);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Vec<R>] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Vec<R>]> {
        self.normals.as_deref()
    }

    /// Boundary resolution: the number of stored samples.
    pub fn resolution(&self) -> usize {
        self.points.len()
    }

    pub fn is_singleton(&self, tol: R) -> bool {
        self.points
            .iter()
            .all(|p| geom::dist(p, &self.points[0]) <= tol)
    }

    pub fn centroid(&self) -> Vec<R> {
        let n = R::from_usize(self.points.len()).unwrap();
        let mut c = vec![R::zero(); self.dim];
        for p in &self.points {
            for (ci, &pi) in c.iter_mut().zip(p) {
                *ci += pi / n;
            }
        }
        c
    }

    pub fn diameter(&self) -> R {
        let mut d = R::zero();
        // Cheap bound: twice the max distance from the centroid.
        let c = self.centroid();
        for p in &self.points {
            d = d.max(geom::dist(p, &c));
        }
        d + d
    }
}

/// Computable representation of the multifunction x -> F(x).
///
/// Every variant yields nonempty, convex, compact values; the support
/// function is closed-form except for `FixedBody`, which maximizes over its
/// stored boundary samples at the documented resolution.
#[derive(Clone, Debug)]
pub enum SetValuedMap<R: Real> {
    /// F(x) = [lower(x), upper(x)] in R^1.
    Interval1D {
        lower: ScalarField<R>,
        upper: ScalarField<R>,
    },
    /// F(x) = closed ball B(center(x), radius(x)) in R^n.
    Ball {
        center: VectorField<R>,
        radius: ScalarField<R>,
        dim: usize,
    },
    /// F(x) = constant body with sampled boundary.
    FixedBody { body: ConvexBody<R> },
    /// F(x) = convex hull of vertex fields v_1(x), ..., v_m(x).
    Polytope {
        vertices: Vec<VectorField<R>>,
        dim: usize,
    },
}

/// Result of one support-function evaluation.
#[derive(Clone, Debug)]
pub struct HamiltonianEval<R: Real> {
    /// H(x, p).
    pub value: R,
    /// Maximizers of `<v, p>` over F(x); nonempty.
    pub argmax_set: Vec<Vec<R>>,
    pub is_singleton: bool,
    /// grad_p H(x, p); present iff the argmax is a singleton and p != 0.
    pub p_gradient: Option<Vec<R>>,
}

impl<R: Real> SetValuedMap<R> {
    pub fn dim(&self) -> usize {
        match self {
            SetValuedMap::Interval1D { .. } => 1,
            SetValuedMap::Ball { dim, .. } => *dim,
            SetValuedMap::FixedBody { body } => body.dim(),
            SetValuedMap::Polytope { dim, .. } => *dim,
        }
    }

    fn check_dims(&self, x: &[R], p: &[R]) -> Result<()> {
        let n = self.dim();
        if x.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: x.len(),
            });
        }
        if p.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: p.len(),
            });
        }
        Ok(())
    }

    fn interval_bounds(&self, x: &[R]) -> Result<(R, R)> {
        match self {
            SetValuedMap::Interval1D { lower, upper } => {
                let f = lower.value(x);
                let g = upper.value(x);
                if f > g {
                    return Err(Error::EmptyInterval { at: lossy_vec(x) });
                }
                Ok((f, g))
            }
            _ => unreachable!(),
        }
    }

    /// Representative sample of F(x), used for the p = 0 argmax convention
    /// and for inner containment checks: extreme points in a direction fan
    /// plus the zero-bias center.
    pub fn sample_points(&self, x: &[R], directions: usize) -> Result<Vec<Vec<R>>> {
        let mut out = Vec::new();
        match self {
            SetValuedMap::Interval1D { .. } => {
                let (f, g) = self.interval_bounds(x)?;
                out.push(vec![f]);
                out.push(vec![g]);
            }
            SetValuedMap::Ball { .. } | SetValuedMap::Polytope { .. } => {
                for d in geom::unit_directions(self.dim(), directions) {
                    let ev = self.support(x, &d)?;
                    out.push(ev.argmax_set[0].clone());
                }
            }
            SetValuedMap::FixedBody { body } => {
                // Cap the sample so quadratic-pair consumers stay tractable;
                // strided subsampling preserves any graded boundary spacing.
                out.extend(subsample(body.points(), directions.max(256)).into_iter().cloned());
            }
        }
        out.push(self.center_point(x)?);
        Ok(out)
    }

    /// Zero-bias center of F(x): interval midpoint, ball center, body
    /// centroid, or vertex average.
    pub fn center_point(&self, x: &[R]) -> Result<Vec<R>> {
        Ok(match self {
            SetValuedMap::Interval1D { .. } => {
                let (f, g) = self.interval_bounds(x)?;
                vec![(f + g).half()]
            }
            SetValuedMap::Ball { center, .. } => center.value(x),
            SetValuedMap::FixedBody { body } => body.centroid(),
            SetValuedMap::Polytope { vertices, dim } => {
                let m = R::from_usize(vertices.len()).unwrap();
                let mut c = vec![R::zero(); *dim];
                for v in vertices {
                    for (ci, vi) in c.iter_mut().zip(v.value(x)) {
                        *ci += vi / m;
                    }
                }
                c
            }
        })
    }

    /// Support evaluation: H(x,p) = sup_{v in F(x)} <v,p> with maximizers.
    ///
    /// For p = 0 the value is exactly 0 and the argmax set is a sample of
    /// F(x); callers must branch on that case.
    pub fn support(&self, x: &[R], p: &[R]) -> Result<HamiltonianEval<R>> {
        self.check_dims(x, p)?;
        let pn = geom::norm(p);
        if pn == R::zero() {
            let argmax = self.sample_points(x, geom::default_direction_count(self.dim()))?;
            let singleton = match self {
                SetValuedMap::Interval1D { .. } => {
                    let (f, g) = self.interval_bounds(x)?;
                    f == g
                }
                _ => false,
            };
            return Ok(HamiltonianEval {
                value: R::zero(),
                argmax_set: argmax,
                is_singleton: singleton,
                p_gradient: None,
            });
        }

        match self {
            SetValuedMap::Interval1D { .. } => {
                let (f, g) = self.interval_bounds(x)?;
                let tol = R::of(GEOMETRIC_TOL) * (R::one() + (g - f).abs());
                let (value, v) = if p[0] >= R::zero() {
                    (g * p[0], g)
                } else {
                    (f * p[0], f)
                };
                let singleton = (g - f).abs() <= tol || p[0] != R::zero();
                Ok(HamiltonianEval {
                    value,
                    argmax_set: vec![vec![v]],
                    is_singleton: singleton,
                    p_gradient: singleton.then(|| vec![v]),
                })
            }
            SetValuedMap::Ball { center, radius, .. } => {
                let c = center.value(x);
                let r = radius.value(x);
                if r < R::zero() {
                    return Err(Error::NegativeRadius { at: lossy_vec(x) });
                }
                let value = geom::dot(&c, p) + r * pn;
                let v = geom::add_scaled(&c, r / pn, p);
                Ok(HamiltonianEval {
                    value,
                    argmax_set: vec![v.clone()],
                    is_singleton: true,
                    p_gradient: Some(v),
                })
            }
            SetValuedMap::FixedBody { body } => {
                let mut best = R::neg_infinity();
                for v in body.points() {
                    best = best.max(geom::dot(v, p));
                }
                let tol = R::of(GEOMETRIC_TOL) * (R::one() + body.diameter()) * pn;
                let argmax: Vec<Vec<R>> = body
                    .points()
                    .iter()
                    .filter(|v| geom::dot(v, p) >= best - tol)
                    .cloned()
                    .collect();
                let singleton = argmax.len() == 1;
                let grad = singleton.then(|| argmax[0].clone());
                Ok(HamiltonianEval {
                    value: best,
                    argmax_set: argmax,
                    is_singleton: singleton,
                    p_gradient: grad,
                })
            }
            SetValuedMap::Polytope { vertices, .. } => {
                let vals: Vec<(Vec<R>, R)> = vertices
                    .iter()
                    .map(|vf| {
                        let v = vf.value(x);
                        let s = geom::dot(&v, p);
                        (v, s)
                    })
                    .collect();
                let best = vals
                    .iter()
                    .map(|(_, s)| *s)
                    .fold(R::neg_infinity(), R::max);
                let diam = vals
                    .iter()
                    .map(|(v, _)| geom::norm(v))
                    .fold(R::zero(), R::max);
                let tol = R::of(GEOMETRIC_TOL) * (R::one() + diam) * pn;
                let argmax: Vec<Vec<R>> = vals
                    .iter()
                    .filter(|(_, s)| *s >= best - tol)
                    .map(|(v, _)| v.clone())
                    .collect();
                let singleton = argmax.len() == 1;
                let grad = singleton.then(|| argmax[0].clone());
                Ok(HamiltonianEval {
                    value: best,
                    argmax_set: argmax,
                    is_singleton: singleton,
                    p_gradient: grad,
                })
            }
        }
    }

    /// Shorthand for the Hamiltonian value.
    pub fn hamiltonian(&self, x: &[R], p: &[R]) -> Result<R> {
        Ok(self.support(x, p)?.value)
    }

    /// grad_p H(x, p) for p != 0; errors when the argmax is set-valued.
    pub fn p_gradient(&self, x: &[R], p: &[R]) -> Result<Vec<R>> {
        let ev = self.support(x, p)?;
        ev.p_gradient
            .ok_or_else(|| Error::SetValuedVelocity { at: lossy_vec(x) })
    }

    /// Inner description of the Fréchet x-subdifferential of H(.,p) at x,
    /// as a finite generator list (convex hull implied).
    ///
    /// Exact gradient for `Ball`, one-sided bracket at annotated kinks for
    /// `Interval1D`, active-vertex gradients for `Polytope`, and {0} for the
    /// x-independent `FixedBody`. Requires p != 0.
    pub fn x_subgradient(&self, x: &[R], p: &[R]) -> Result<Vec<Vec<R>>> {
        self.check_dims(x, p)?;
        if geom::norm(p) == R::zero() {
            return Err(Error::ZeroCovector);
        }
        match self {
            SetValuedMap::Ball { center, radius, .. } => {
                let r = radius.value(x);
                if r < R::zero() {
                    return Err(Error::NegativeRadius { at: lossy_vec(x) });
                }
                let mut g = center.jacobian_transpose_apply(x, p);
                let rg = radius.grad(x);
                let pn = geom::norm(p);
                for (gi, rgi) in g.iter_mut().zip(rg) {
                    *gi += pn * rgi;
                }
                Ok(vec![g])
            }
            SetValuedMap::Interval1D { lower, upper } => {
                let active = if p[0] >= R::zero() { upper } else { lower };
                let tol = R::of(GEOMETRIC_TOL) * (R::one() + x[0].abs());
                if active.is_at_kink(x, tol) {
                    let (l, r) = active.one_sided_slopes(x[0]);
                    let (a, b) = (l * p[0], r * p[0]);
                    // The Fréchet subdifferential at a kink of H(., p) is the
                    // one-sided slope bracket when the kink is convex; a
                    // concave kink has an empty subdifferential.
                    let slope_tol = R::of(1e-6) * (R::one() + a.abs().max(b.abs()));
                    if a > b + slope_tol {
                        return Err(Error::EmptySubdifferential { at: lossy_vec(x) });
                    }
                    Ok(vec![vec![a.min(b)], vec![a.max(b)]])
                } else {
                    let g = active.grad(x);
                    Ok(vec![vec![g[0] * p[0]]])
                }
            }
            SetValuedMap::FixedBody { .. } => Ok(vec![vec![R::zero(); self.dim()]]),
            SetValuedMap::Polytope { vertices, .. } => {
                let ev = self.support(x, p)?;
                let diam = ev
                    .argmax_set
                    .iter()
                    .map(|v| geom::norm(v))
                    .fold(R::one(), R::max);
                let tol = R::of(GEOMETRIC_TOL) * (R::one() + diam) * geom::norm(p);
                let mut gens = Vec::new();
                for vf in vertices {
                    let v = vf.value(x);
                    if geom::dot(&v, p) >= ev.value - tol {
                        gens.push(vf.jacobian_transpose_apply(x, p));
                    }
                }
                if gens.is_empty() {
                    return Err(Error::EmptySubdifferential { at: lossy_vec(x) });
                }
                Ok(gens)
            }
        }
    }

    /// Max speed bound `max { |v| : v in F(x) }` from the support samples.
    pub fn max_speed(&self, x: &[R]) -> Result<R> {
        Ok(match self {
            SetValuedMap::Interval1D { .. } => {
                let (f, g) = self.interval_bounds(x)?;
                f.abs().max(g.abs())
            }
            SetValuedMap::Ball { center, radius, .. } => {
                let r = radius.value(x);
                if r < R::zero() {
                    return Err(Error::NegativeRadius { at: lossy_vec(x) });
                }
                geom::norm(&center.value(x)) + r
            }
            _ => self
                .sample_points(x, geom::default_direction_count(self.dim()))?
                .iter()
                .map(|v| geom::norm(v))
                .fold(R::zero(), R::max),
        })
    }

    /// Sublinear-growth constant on a box: smallest r with
    /// `max|F(x)| <= r (1 + |x|)` over the sampled grid.
    pub fn growth_constant(&self, domain: &BoxDomain<R>, samples_per_axis: usize) -> Result<R> {
        let mut r = R::zero();
        for x in grid_points(domain, samples_per_axis) {
            let s = self.max_speed(&x)?;
            r = r.max(s / (R::one() + geom::norm(&x)));
        }
        Ok(r)
    }

    /// Hausdorff-metric Lipschitz estimate of F over sampled nearby pairs,
    /// via `dist_H(F(x),F(y)) = max_d |H(x,d) - H(y,d)|` on a direction fan.
    pub fn lipschitz_constant(
        &self,
        domain: &BoxDomain<R>,
        samples: usize,
        seed: u64,
    ) -> Result<R> {
        if matches!(self, SetValuedMap::FixedBody { .. }) {
            return Ok(R::zero());
        }
        let dirs = geom::unit_directions(self.dim(), geom::default_direction_count(self.dim()));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let delta = R::of(1e-3) * (R::one() + domain.diameter());
        let mut c = R::zero();
        for _ in 0..samples.max(8) {
            let x = random_point(domain, &mut rng);
            let d = random_unit(self.dim(), &mut rng);
            let y = domain.clamp(&geom::add_scaled(&x, delta, &d));
            let gap = geom::dist(&x, &y);
            if gap <= R::of(1e-12) {
                continue;
            }
            let mut dh = R::zero();
            for dir in &dirs {
                let hx = self.support(&x, dir)?.value;
                let hy = self.support(&y, dir)?.value;
                dh = dh.max((hx - hy).abs());
            }
            c = c.max(dh / gap);
        }
        Ok(c)
    }
}

fn subsample<T>(items: &[T], max: usize) -> Vec<&T> {
    if items.len() <= max {
        return items.iter().collect();
    }
    let stride = items.len().div_ceil(max);
    items.iter().step_by(stride).collect()
}

pub(crate) fn grid_points<R: Real>(domain: &BoxDomain<R>, per_axis: usize) -> Vec<Vec<R>> {
    let n = domain.dim();
    let per_axis = per_axis.max(2);
    let mut pts = Vec::with_capacity(per_axis.pow(n as u32));
    let mut idx = vec![0usize; n];
    loop {
        let u: Vec<R> = idx
            .iter()
            .map(|&i| R::from_usize(i).unwrap() / R::from_usize(per_axis - 1).unwrap())
            .collect();
        pts.push(domain.lerp(&u));
        let mut axis = 0;
        loop {
            if axis == n {
                return pts;
            }
            idx[axis] += 1;
            if idx[axis] < per_axis {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
    }
}

pub(crate) fn random_point<R: Real>(domain: &BoxDomain<R>, rng: &mut impl Rng) -> Vec<R> {
    let u: Vec<R> = (0..domain.dim()).map(|_| R::of(rng.gen::<f64>())).collect();
    domain.lerp(&u)
}

pub(crate) fn random_unit<R: Real>(dim: usize, rng: &mut impl Rng) -> Vec<R> {
    loop {
        let v: Vec<R> = (0..dim)
            .map(|_| R::of(rng.gen::<f64>() * 2.0 - 1.0))
            .collect();
        if let Some(u) = geom::normalized(&v) {
            if geom::norm(&v) <= R::one() {
                return u;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Mid-point semiconvexity of F.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct MidpointReport<R: Real> {
    /// Smallest constant fitting all sampled pairs.
    pub constant: R,
    /// Worst (x, z) pair encountered.
    pub worst: (Vec<R>, Vec<R>),
    /// Set when the fitted constant keeps growing as |z| refines.
    pub diverging: bool,
    /// Fitted constant per |z| shell, finest last.
    pub per_shell: Vec<R>,
}

#[derive(Clone, Debug)]
pub struct MidpointOptions {
    pub base_points: usize,
    pub shells: usize,
    pub directions: usize,
    pub seed: u64,
}

impl Default for MidpointOptions {
    fn default() -> Self {
        Self {
            base_points: 24,
            shells: 7,
            directions: 0, // 0 = dimension default
            seed: 0x5eed,
        }
    }
}

/// Fits the smallest c with
/// `dist_H^+(2 F(x), F(x+z) + F(x-z)) <= c |z|^2`
/// over sampled (x, z); the semidistance is evaluated on support directions,
/// where it equals `max_d [2 H(x,d) - H(x+z,d) - H(x-z,d)]`.
pub fn check_midpoint_semiconvexity<R: Real>(
    map: &SetValuedMap<R>,
    domain: &BoxDomain<R>,
    opts: &MidpointOptions,
) -> Result<MidpointReport<R>> {
    if opts.base_points == 0 {
        return Err(Error::InsufficientSamples { got: 0, min: 1 });
    }
    let n = map.dim();
    if matches!(map, SetValuedMap::FixedBody { .. }) {
        // x-independent values: 2F(x) = F(x+z) + F(x-z) identically.
        return Ok(MidpointReport {
            constant: R::zero(),
            worst: (domain.center(), vec![R::zero(); n]),
            diverging: false,
            per_shell: vec![R::zero(); opts.shells],
        });
    }
    let dir_count = if opts.directions == 0 {
        geom::default_direction_count(n)
    } else {
        opts.directions
    };
    let dirs = geom::unit_directions(n, dir_count);
    let z_dirs = geom::unit_directions(n, dir_count.min(32));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let r0 = R::of(0.25) * domain.min_extent();

    let mut constant = R::zero();
    let mut worst = (domain.center(), vec![R::zero(); n]);
    let mut per_shell = Vec::with_capacity(opts.shells);

    for shell in 0..opts.shells {
        let zr = r0 / R::of(2.0f64.powi(shell as i32));
        let inner = domain.shrunk(zr);
        let mut shell_c = R::zero();
        for _ in 0..opts.base_points {
            let x = random_point(&inner, &mut rng);
            for zd in &z_dirs {
                let z = geom::scaled(zd, zr);
                let xp = geom::add_scaled(&x, R::one(), &z);
                let xm = geom::add_scaled(&x, -R::one(), &z);
                let mut semidist = R::zero();
                for d in &dirs {
                    let two_h = R::of(2.0) * map.support(&x, d)?.value;
                    let sum_h = map.support(&xp, d)?.value + map.support(&xm, d)?.value;
                    semidist = semidist.max(two_h - sum_h);
                }
                let c = semidist / (zr * zr);
                if c > shell_c {
                    shell_c = c;
                }
                if c > constant {
                    constant = c;
                    worst = (x.clone(), z);
                }
            }
        }
        per_shell.push(shell_c);
    }

    // Divergence: the per-shell fit keeps growing geometrically under
    // refinement (a |z| (not |z|^2) defect looks like doubling per shell).
    let diverging = per_shell.len() >= 3 && {
        let k = per_shell.len();
        let tail_growth = per_shell[k - 1] > R::of(1.5) * per_shell[k - 2]
            && per_shell[k - 2] > R::of(1.5) * per_shell[k - 3];
        tail_growth && per_shell[k - 1] > R::of(4.0) * per_shell[0].max(R::of(1e-12))
    };

    Ok(MidpointReport {
        constant,
        worst,
        diverging,
        per_shell,
    })
}

// ---------------------------------------------------------------------------
// R-convexity.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct RConvexityReport<R: Real> {
    pub passes: bool,
    /// Worst residual of the sqrt characterization
    /// `|z - v| - sqrt(2R) <z - v, n>^(1/2)` over sampled (z, n, v).
    pub worst_residual: R,
    /// Whether the ball-containment characterization agrees at every sample.
    pub containment_agrees: bool,
    /// Degenerate singleton body: vacuously R-convex.
    pub singleton_warning: bool,
}

/// Tests R-convexity of the body F(x) by the sqrt inequality over sampled
/// boundary points with outward normals, cross-checked by containment in the
/// ball of center `z - R n` and radius R.
pub fn check_r_convexity<R: Real>(
    map: &SetValuedMap<R>,
    x: &[R],
    radius: R,
    direction_samples: usize,
) -> Result<RConvexityReport<R>> {
    assert!(radius > R::zero(), "R-convexity radius must be positive");
    let n = map.dim();
    let boundary: Vec<(Vec<R>, Vec<R>)> = match map {
        SetValuedMap::FixedBody { body } => match body.normals() {
            Some(normals) => body
                .points()
                .iter()
                .cloned()
                .zip(normals.iter().cloned())
                .collect(),
            None => fan_boundary(map, x, direction_samples, n)?,
        },
        _ => fan_boundary(map, x, direction_samples, n)?,
    };

    let body_points = map.sample_points(x, direction_samples.max(16))?;
    let diam = body_points
        .iter()
        .flat_map(|a| body_points.iter().map(move |b| geom::dist(a, b)))
        .fold(R::zero(), R::max);
    let tol = R::of(GEOMETRIC_TOL) * (R::one() + diam);

    if diam <= tol {
        return Ok(RConvexityReport {
            passes: true,
            worst_residual: R::zero(),
            containment_agrees: true,
            singleton_warning: true,
        });
    }

    let mut worst = R::neg_infinity();
    let mut containment_ok = true;
    let sqrt2r = (R::of(2.0) * radius).sqrt();
    for (z, nrm) in &boundary {
        for v in &body_points {
            let zv = geom::sub(z, v);
            let d = geom::norm(&zv);
            if d <= tol {
                continue;
            }
            let inner = geom::dot(&zv, nrm).max(R::zero());
            let residual = d - sqrt2r * inner.sqrt();
            if residual > worst {
                worst = residual;
            }
            // Characterization by balls: |z - R n - v| <= R.
            let center = geom::add_scaled(z, -radius, nrm);
            let c_residual = geom::dist(&center, v) - radius;
            let sqrt_pass = residual <= tol;
            let ball_pass = c_residual <= tol;
            if sqrt_pass != ball_pass {
                containment_ok = false;
            }
        }
    }
    if !worst.is_finite() {
        worst = R::zero();
    }
    Ok(RConvexityReport {
        passes: worst <= tol,
        worst_residual: worst,
        containment_agrees: containment_ok,
        singleton_warning: false,
    })
}

fn fan_boundary<R: Real>(
    map: &SetValuedMap<R>,
    x: &[R],
    count: usize,
    dim: usize,
) -> Result<Vec<(Vec<R>, Vec<R>)>> {
    let mut out = Vec::new();
    for d in geom::unit_directions(dim, count.max(geom::default_direction_count(dim))) {
        let ev = map.support(x, &d)?;
        // The generating direction is an outward normal at its support point.
        out.push((ev.argmax_set[0].clone(), d));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Hypothesis audit.
// ---------------------------------------------------------------------------

/// Estimated hypothesis profile of a multifunction on a working box.
#[derive(Clone, Debug)]
pub struct HypothesisAudit<R: Real> {
    /// Standing hypotheses verified on samples (nonempty convex compact
    /// values, sublinear growth) with the fitted growth constant.
    pub sh_ok: bool,
    pub growth_constant: R,
    /// Mid-point semiconvexity constant of F (H(.,p) semiconvex with c|p|).
    pub h1_semiconvexity_constant: R,
    pub h1_semiconvexity_diverging: bool,
    /// Lipschitz modulus of x -> grad_p H(x,p) over a p-annulus.
    pub h1_pgrad_lipschitz: Option<R>,
    /// Strong-convexity modulus c' of (H2), when bounded away from zero.
    pub h2_modulus: Option<R>,
    /// Fitted R-convexity radius of the values, when finite.
    pub r_convexity_radius: Option<R>,
    /// Hausdorff-metric Lipschitz constant of F on the box.
    pub lipschitz_constant: R,
    /// Sample points witnessing the worst constants.
    pub counterexample_points: Vec<Vec<R>>,
    /// Set when the evaluation budget ran out before all samples were used.
    pub partial: bool,
}

impl<R: Real> HypothesisAudit<R> {
    /// (H2) holds when the modulus stayed bounded away from zero.
    pub fn h2_ok(&self) -> bool {
        self.h2_modulus.is_some()
    }

    /// (H1) holds when the mid-point fit converged and grad_p H is
    /// Lipschitz in x.
    pub fn h1_ok(&self) -> bool {
        !self.h1_semiconvexity_diverging && self.h1_pgrad_lipschitz.is_some()
    }
}

#[derive(Clone, Debug)]
pub struct AuditOptions {
    /// Soft cap on support evaluations; the audit is flagged partial when hit.
    pub budget: usize,
    pub seed: u64,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            budget: 2_000_000,
            seed: 0xa0d17,
        }
    }
}

/// Modulus floor under which (H2) is reported as failed: a strongly convex
/// body keeps `<v_p - v, p> / (|p| |v - v_p|^2)` bounded below.
const H2_FLOOR: f64 = 1e-6;

pub fn audit_hypotheses<R: Real>(
    map: &SetValuedMap<R>,
    domain: &BoxDomain<R>,
    opts: &AuditOptions,
) -> Result<HypothesisAudit<R>> {
    let n = map.dim();
    let mut spent = 0usize;
    let mut partial = false;
    let mut counterexamples = Vec::new();

    // SH: values are nonempty/convex/compact by construction of the variants;
    // sample for interval ordering defects and fit the growth constant.
    let per_axis = if n == 1 { 33 } else { 9 };
    let mut sh_ok = true;
    for x in grid_points(domain, per_axis) {
        spent += 1;
        match map.max_speed(&x) {
            Ok(_) => {}
            Err(_) => {
                sh_ok = false;
                counterexamples.push(x);
            }
        }
    }
    let growth = map.growth_constant(domain, per_axis)?;

    // H1(i): mid-point property of F.
    let midpoint = check_midpoint_semiconvexity(map, domain, &MidpointOptions {
        seed: opts.seed,
        ..MidpointOptions::default()
    })?;
    if midpoint.diverging {
        counterexamples.push(midpoint.worst.0.clone());
    }
    spent += 24 * 7 * geom::default_direction_count(n);

    // H1(ii): Lipschitz fit of x -> grad_p H(x,p) on a p-annulus away from 0.
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x11);
    let mut pgrad_lip = R::zero();
    let mut pgrad_defined = true;
    let delta = R::of(1e-3) * (R::one() + domain.diameter());
    let p_mags = [0.7, 1.0, 1.4];
    'outer: for _ in 0..32 {
        if spent > opts.budget {
            partial = true;
            break;
        }
        let x = random_point(domain, &mut rng);
        let dx = random_unit(n, &mut rng);
        let y = domain.clamp(&geom::add_scaled(&x, delta, &dx));
        let gap = geom::dist(&x, &y);
        if gap <= R::of(1e-12) {
            continue;
        }
        for mag in p_mags {
            for pd in geom::unit_directions(n, 8) {
                spent += 2;
                let p = geom::scaled(&pd, R::of(mag));
                let gx = match map.p_gradient(&x, &p) {
                    Ok(g) => g,
                    Err(_) => {
                        pgrad_defined = false;
                        counterexamples.push(x.clone());
                        break 'outer;
                    }
                };
                let gy = match map.p_gradient(&y, &p) {
                    Ok(g) => g,
                    Err(_) => {
                        pgrad_defined = false;
                        counterexamples.push(y.clone());
                        break 'outer;
                    }
                };
                pgrad_lip = pgrad_lip.max(geom::dist(&gx, &gy) / gap);
            }
        }
    }

    // H2: modulus from <v_p - v, p> >= c' |p| |v - v_p|^2 over samples, and
    // the R-convexity radius from the sqrt characterization on the same data.
    let mut modulus = R::infinity();
    let mut radius = R::zero();
    let mut h2_witness: Option<Vec<R>> = None;
    let audit_points: Vec<Vec<R>> = if matches!(map, SetValuedMap::FixedBody { .. }) {
        vec![domain.center()] // values are x-independent
    } else if n == 1 {
        grid_points(domain, 9)
    } else {
        grid_points(domain, 3)
    };
    for x in &audit_points {
        if spent > opts.budget {
            partial = true;
            break;
        }
        let boundary: Vec<(Vec<R>, Vec<R>)> = match map {
            SetValuedMap::FixedBody { body } if body.normals().is_some() => body
                .points()
                .iter()
                .cloned()
                .zip(body.normals().unwrap().iter().cloned())
                .collect(),
            _ => fan_boundary(map, x, geom::default_direction_count(n), n)?,
        };
        let body_points = map.sample_points(x, geom::default_direction_count(n))?;
        spent += boundary.len() * body_points.len();
        let diam = map.max_speed(x)? + map.max_speed(x)?;
        let tol = R::of(GEOMETRIC_TOL) * (R::one() + diam);
        for (vp, nrm) in &boundary {
            for v in &body_points {
                let dv = geom::sub(vp, v);
                let d2 = geom::dot(&dv, &dv);
                if d2.sqrt() <= tol {
                    continue;
                }
                let inner = geom::dot(&dv, nrm);
                let ratio = inner / d2;
                if ratio < modulus {
                    modulus = ratio;
                    h2_witness = Some(x.clone());
                }
                if inner > tol {
                    radius = radius.max(d2 / (R::of(2.0) * inner));
                }
            }
        }
    }

    let scale = R::one() + domain.diameter();
    let h2_modulus = if modulus.is_finite() && modulus > R::of(H2_FLOOR) / scale {
        Some(modulus)
    } else {
        if let Some(w) = h2_witness {
            counterexamples.push(w);
        }
        None
    };
    let r_convexity_radius = if radius > R::zero() && radius.is_finite() {
        Some(radius)
    } else {
        None
    };

    let lipschitz = map.lipschitz_constant(domain, 64, opts.seed ^ 0x22)?;
    if spent > opts.budget {
        partial = true;
    }

    Ok(HypothesisAudit {
        sh_ok,
        growth_constant: growth,
        h1_semiconvexity_constant: midpoint.constant,
        h1_semiconvexity_diverging: midpoint.diverging,
        h1_pgrad_lipschitz: pgrad_defined.then_some(pgrad_lip),
        h2_modulus,
        r_convexity_radius,
        lipschitz_constant: lipschitz,
        counterexample_points: counterexamples,
        partial,
    })
}
