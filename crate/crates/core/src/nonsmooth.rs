//! Numerical estimators for generalized differentials of sampled functions:
//! proximal supergradient tests, Fréchet super/subdifferential membership,
//! reachable (limiting) gradients, semiconcavity constants, and upper Dini
//! derivatives.
//!
//! Every limit is realized by a fixed, documented schedule, and every verdict
//! that approximates a limit is three-valued so grid noise cannot forge a
//! certificate.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::{self, BoxDomain};
use crate::scalar::Real;

type EvalFn<R> = Arc<dyn Fn(&[R]) -> R + Send + Sync>;
type GradFn<R> = Arc<dyn Fn(&[R]) -> Vec<R> + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SmoothnessHint {
    Smooth,
    LocallyLipschitz,
    Unknown,
}

/// A deterministic evaluation callback on a box domain, optionally with an
/// exact gradient.
#[derive(Clone)]
pub struct SampledFunction<R: Real> {
    eval: EvalFn<R>,
    domain: BoxDomain<R>,
    hint: SmoothnessHint,
    exact_gradient: Option<GradFn<R>>,
}

impl<R: Real> SampledFunction<R> {
    pub fn new(domain: BoxDomain<R>, f: impl Fn(&[R]) -> R + Send + Sync + 'static) -> Self {
        Self {
            eval: Arc::new(f),
            domain,
            hint: SmoothnessHint::Unknown,
            exact_gradient: None,
        }
    }

    pub fn with_hint(mut self, hint: SmoothnessHint) -> Self {
        self.hint = hint;
        self
    }

    pub fn with_gradient(mut self, g: impl Fn(&[R]) -> Vec<R> + Send + Sync + 'static) -> Self {
        self.exact_gradient = Some(Arc::new(g));
        self
    }

    pub fn value(&self, x: &[R]) -> R {
        (self.eval)(x)
    }

    pub fn domain(&self) -> &BoxDomain<R> {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn hint(&self) -> SmoothnessHint {
        self.hint
    }

    pub fn exact_gradient(&self, x: &[R]) -> Option<Vec<R>> {
        self.exact_gradient.as_ref().map(|g| g(x))
    }

    pub fn has_exact_gradient(&self) -> bool {
        self.exact_gradient.is_some()
    }

    /// Negation, for mirroring superdifferential tests into subdifferential
    /// ones.
    pub fn negated(&self) -> SampledFunction<R> {
        let eval = self.eval.clone();
        let grad = self.exact_gradient.clone();
        let mut out = SampledFunction {
            eval: Arc::new(move |x: &[R]| -eval(x)),
            domain: self.domain.clone(),
            hint: self.hint,
            exact_gradient: None,
        };
        if let Some(g) = grad {
            out.exact_gradient = Some(Arc::new(move |x: &[R]| {
                g(x).into_iter().map(|v| -v).collect()
            }));
        }
        out
    }
}

impl<R: Real> std::fmt::Debug for SampledFunction<R> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SampledFunction")
            .field("domain", &self.domain)
            .field("hint", &self.hint)
            .field("exact_gradient", &self.exact_gradient.is_some())
            .finish()
    }
}

/// Three-valued verdict for limit-approximating tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    True,
    False,
    Inconclusive,
}

impl Verdict {
    pub fn is_true(self) -> bool {
        self == Verdict::True
    }
}

// ---------------------------------------------------------------------------
// Proximal supergradient test.
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProximalVerdict {
    Proximal,
    FrechetOnly,
    Rejected,
}

#[derive(Clone, Debug)]
pub struct SupergradientCertificate<R: Real> {
    pub candidate: Vec<R>,
    /// Smallest quadratic constant fitting all samples (0 when none needed).
    pub quadratic_constant: R,
    pub radius: R,
    /// Largest slack above the fitted quadratic bound; <= 0 by construction
    /// for a proximal verdict.
    pub max_violation: R,
    pub verdict: ProximalVerdict,
    /// Fitted constant per shrinking radius shell, finest last.
    pub per_shell: Vec<R>,
}

#[derive(Clone, Debug)]
pub struct ProximalTestOptions<R: Real> {
    /// Number of geometric shells inside the probe ball.
    pub shells: usize,
    /// Shells below this radius are skipped (grid data is noise below its
    /// cell size).
    pub min_radius: Option<R>,
    /// Tolerance for the fallback Fréchet (o(|y-x|)) test.
    pub frechet_tol: R,
}

impl<R: Real> Default for ProximalTestOptions<R> {
    fn default() -> Self {
        Self {
            shells: 13,
            min_radius: None,
            frechet_tol: R::of(1e-6),
        }
    }
}

/// Tests `u(y) - u(x) - <p, y-x> <= c |y-x|^2` on `B(x, rho)`, searching the
/// smallest `c >= 0` fitting all samples.
pub fn proximal_supergradient_test<R: Real>(
    u: &SampledFunction<R>,
    x: &[R],
    p: &[R],
    rho: R,
    sample_count: usize,
    opts: &ProximalTestOptions<R>,
) -> Result<SupergradientCertificate<R>> {
    let n = u.dim();
    let min_samples = 8usize.pow(n as u32);
    if sample_count < min_samples {
        return Err(Error::InsufficientSamples {
            got: sample_count,
            min: min_samples,
        });
    }
    probe_ball_inside(u.domain(), x, rho)?;

    let dirs = geom::unit_directions(n, sample_count);
    let ux = u.value(x);
    let mut per_shell = Vec::new();
    let mut frechet_per_shell = Vec::new();
    for j in 0..opts.shells {
        let r = rho / R::of(2.0f64.powi(j as i32));
        if let Some(min_r) = opts.min_radius {
            if r < min_r {
                break;
            }
        }
        let mut c_j = R::zero();
        let mut l_j = R::neg_infinity();
        for d in &dirs {
            let y = geom::add_scaled(x, r, d);
            let diff = u.value(&y) - ux - geom::dot(p, &geom::sub(&y, x));
            c_j = c_j.max(diff / (r * r));
            l_j = l_j.max(diff / r);
        }
        per_shell.push(c_j);
        frechet_per_shell.push(l_j);
    }
    if per_shell.len() < 3 {
        return Err(Error::InsufficientSamples {
            got: per_shell.len(),
            min: 3,
        });
    }

    let c = per_shell.iter().fold(R::zero(), |m, &v| m.max(v));
    let k = per_shell.len();
    let floor = R::of(1e-12);
    let growing = per_shell[k - 1] > R::of(1.6) * per_shell[k - 2].max(floor)
        && per_shell[k - 2] > R::of(1.6) * per_shell[k - 3].max(floor)
        && per_shell[k - 1] > R::of(8.0) * per_shell[0].max(floor);

    let verdict = if !growing {
        ProximalVerdict::Proximal
    } else {
        // No quadratic fit at this rho; fall back to the o(|y-x|) test on
        // the finest shells.
        let tail = &frechet_per_shell[k.saturating_sub(3)..];
        if tail.iter().all(|&l| l <= opts.frechet_tol) {
            ProximalVerdict::FrechetOnly
        } else {
            ProximalVerdict::Rejected
        }
    };

    // Violation of the fitted bound, by construction <= 0 when proximal.
    let mut max_violation = R::neg_infinity();
    for (j, &c_j) in per_shell.iter().enumerate() {
        let r = rho / R::of(2.0f64.powi(j as i32));
        max_violation = max_violation.max((c_j - c) * r * r);
    }

    Ok(SupergradientCertificate {
        candidate: p.to_vec(),
        quadratic_constant: c,
        radius: rho,
        max_violation,
        verdict,
        per_shell,
    })
}

/// Mirror test: q is a proximal subgradient of u at x iff -q is a proximal
/// supergradient of -u at x.
pub fn proximal_subgradient_test<R: Real>(
    u: &SampledFunction<R>,
    x: &[R],
    q: &[R],
    rho: R,
    sample_count: usize,
    opts: &ProximalTestOptions<R>,
) -> Result<SupergradientCertificate<R>> {
    let neg_q: Vec<R> = q.iter().map(|&v| -v).collect();
    let mut cert = proximal_supergradient_test(&u.negated(), x, &neg_q, rho, sample_count, opts)?;
    cert.candidate = q.to_vec();
    Ok(cert)
}

fn probe_ball_inside<R: Real>(domain: &BoxDomain<R>, x: &[R], rho: R) -> Result<()> {
    if rho <= R::zero() {
        return Err(Error::Invalid("probe radius must be positive".into()));
    }
    let inside = x
        .iter()
        .zip(domain.lo.iter().zip(&domain.hi))
        .all(|(&xi, (&lo, &hi))| xi - rho >= lo && xi + rho <= hi);
    if !inside {
        return Err(Error::ProbeExceedsDomain {
            at: x.iter().map(|&v| v.lossy()).collect(),
            radius: rho.lossy(),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Fréchet superdifferential membership.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct FrechetReport<R: Real> {
    pub verdict: Verdict,
    /// Estimated limsup of the sphere maxima of the difference quotient.
    pub limsup_estimate: R,
    pub sphere_maxima: Vec<R>,
}

#[derive(Clone, Debug)]
pub struct FrechetOptions<R: Real> {
    pub radii: Vec<R>,
    pub directions: usize,
    pub tol: R,
}

impl<R: Real> FrechetOptions<R> {
    pub fn with_radii(radii: Vec<R>) -> Self {
        Self {
            radii,
            ..Self::default()
        }
    }
}

impl<R: Real> Default for FrechetOptions<R> {
    fn default() -> Self {
        Self {
            radii: geometric_schedule(R::of(1e-3), 21),
            directions: 0,
            tol: R::of(1e-5),
        }
    }
}

/// Fixed geometric schedule r_k = r0 * 2^-k, k = 0..count.
pub fn geometric_schedule<R: Real>(r0: R, count: usize) -> Vec<R> {
    (0..count)
        .map(|k| r0 / R::of(2.0f64.powi(k as i32)))
        .collect()
}

/// Membership test for the Fréchet superdifferential:
/// `limsup_{y -> x} (u(y) - u(x) - <p, y-x>) / |y-x| <= 0`,
/// realized as the max sphere quotient over a shrinking radius schedule.
pub fn frechet_superdiff_membership<R: Real>(
    u: &SampledFunction<R>,
    x: &[R],
    p: &[R],
    opts: &FrechetOptions<R>,
) -> Result<FrechetReport<R>> {
    let n = u.dim();
    let dir_count = if opts.directions == 0 {
        geom::default_direction_count(n).max(16)
    } else {
        opts.directions
    };
    let dirs = geom::unit_directions(n, dir_count);
    let ux = u.value(x);
    let mut maxima = Vec::with_capacity(opts.radii.len());
    for &r in &opts.radii {
        if r <= R::zero() {
            continue;
        }
        let mut m = R::neg_infinity();
        let mut any = false;
        for d in &dirs {
            let y = geom::add_scaled(x, r, d);
            if !u.domain().contains(&y) {
                continue;
            }
            any = true;
            m = m.max((u.value(&y) - ux - geom::dot(p, &geom::sub(&y, x))) / r);
        }
        if any {
            maxima.push(m);
        }
    }
    if maxima.len() < 4 {
        return Err(Error::InsufficientSamples {
            got: maxima.len(),
            min: 4,
        });
    }

    // The limsup estimate is the max over the tail of the schedule.
    let tail_start = maxima.len().min(10).min(maxima.len() / 2).max(1);
    let tail = &maxima[maxima.len() - tail_start.max(3)..];
    let limsup = tail.iter().fold(R::neg_infinity(), |m, &v| m.max(v));

    let verdict = if limsup <= opts.tol {
        Verdict::True
    } else {
        // Still falling at the finest shells: the trend has not settled.
        let first = tail[0];
        let last = *tail.last().unwrap();
        if last <= R::of(0.6) * first && first > R::zero() {
            Verdict::Inconclusive
        } else {
            Verdict::False
        }
    };
    Ok(FrechetReport {
        verdict,
        limsup_estimate: limsup,
        sphere_maxima: maxima,
    })
}

/// Mirror membership for the Fréchet subdifferential.
pub fn frechet_subdiff_membership<R: Real>(
    u: &SampledFunction<R>,
    x: &[R],
    q: &[R],
    opts: &FrechetOptions<R>,
) -> Result<FrechetReport<R>> {
    let neg_q: Vec<R> = q.iter().map(|&v| -v).collect();
    frechet_superdiff_membership(&u.negated(), x, &neg_q, opts)
}

// ---------------------------------------------------------------------------
// Reachable gradients.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct GradientCluster<R: Real> {
    /// Cluster mean gradient.
    pub gradient: Vec<R>,
    pub multiplicity: usize,
    /// Differentiability points that produced the cluster (capped).
    pub witnesses: Vec<Vec<R>>,
}

#[derive(Clone, Debug)]
pub struct ReachableGradientSet<R: Real> {
    pub base: Vec<R>,
    pub clusters: Vec<GradientCluster<R>>,
}

impl<R: Real> ReachableGradientSet<R> {
    pub fn contains_zero(&self, tol: R) -> bool {
        self.clusters.iter().any(|c| geom::norm(&c.gradient) <= tol)
    }
}

#[derive(Clone, Debug)]
pub struct ReachableGradientOptions<R: Real> {
    /// Decreasing probe radii; gradients from the finer half are clustered.
    pub probe_radii: Vec<R>,
    pub directions: usize,
    /// Central-difference step of the differentiability stencil.
    pub stencil_step: Option<R>,
    /// A probe certifies differentiability when the best linear fit on the
    /// 2n-point stencil has residual <= this fraction of the stencil step.
    pub fit_tol_per_step: R,
    pub cluster_tol_rel: R,
}

impl<R: Real> Default for ReachableGradientOptions<R> {
    fn default() -> Self {
        Self {
            probe_radii: geometric_schedule(R::of(1e-2), 10),
            directions: 0,
            stencil_step: None,
            fit_tol_per_step: R::of(1e-6),
            cluster_tol_rel: R::of(1e-3),
        }
    }
}

/// Central-difference gradient with a differentiability certificate: the
/// symmetric second-difference residual of the best linear fit on the 2n
/// stencil must stay below `fit_tol`.
pub fn certified_gradient<R: Real>(
    u: &SampledFunction<R>,
    y: &[R],
    step: R,
    fit_tol: R,
) -> Option<Vec<R>> {
    let n = y.len();
    let uy = u.value(y);
    let mut grad = Vec::with_capacity(n);
    for i in 0..n {
        let mut yp = y.to_vec();
        let mut ym = y.to_vec();
        yp[i] += step;
        ym[i] -= step;
        if !u.domain().contains(&yp) || !u.domain().contains(&ym) {
            return None;
        }
        let up = u.value(&yp);
        let um = u.value(&ym);
        // Deviation of the stencil from any affine model.
        let residual = (up + um - uy - uy).abs().half();
        if residual > fit_tol {
            return None;
        }
        grad.push((up - um) / (step + step));
    }
    Some(grad)
}

/// Estimates the reachable (limiting) gradient set of `u` at `x`: gradients
/// sampled at certified differentiability points on shrinking probe shells,
/// clustered by complete linkage.
pub fn reachable_gradients<R: Real>(
    u: &SampledFunction<R>,
    x: &[R],
    opts: &ReachableGradientOptions<R>,
) -> Result<ReachableGradientSet<R>> {
    if u.hint() == SmoothnessHint::Unknown {
        return Err(Error::Invalid(
            "reachable gradients need a local Lipschitz (or smooth) hint".into(),
        ));
    }
    let n = u.dim();
    let dir_count = if opts.directions == 0 {
        geom::default_direction_count(n).max(12)
    } else {
        opts.directions
    };
    let dirs = geom::unit_directions(n, dir_count);

    let mut samples: Vec<(Vec<R>, Vec<R>)> = Vec::new(); // (witness, gradient)
    let tail_from = opts.probe_radii.len() / 2;
    for (k, &r) in opts.probe_radii.iter().enumerate() {
        if k < tail_from {
            continue; // limits are taken along the finer half
        }
        let step = opts
            .stencil_step
            .unwrap_or_else(|| R::of(1e-7) * (R::one() + geom::norm(x)))
            .min(r.half());
        let fit_tol = opts.fit_tol_per_step * step;
        for d in &dirs {
            let y = geom::add_scaled(x, r, d);
            if !u.domain().contains(&y) {
                continue;
            }
            if let Some(g) = certified_gradient(u, &y, step, fit_tol) {
                samples.push((y, g));
            }
        }
    }
    if samples.is_empty() {
        return Err(Error::NoDifferentiabilityPoints {
            at: x.iter().map(|&v| v.lossy()).collect(),
        });
    }

    let scale = samples
        .iter()
        .map(|(_, g)| geom::norm(g))
        .fold(R::zero(), R::max);
    let tol = opts.cluster_tol_rel * (R::one() + scale);
    let clusters = complete_linkage(&samples, tol);
    Ok(ReachableGradientSet {
        base: x.to_vec(),
        clusters,
    })
}

fn complete_linkage<R: Real>(samples: &[(Vec<R>, Vec<R>)], tol: R) -> Vec<GradientCluster<R>> {
    let mut groups: Vec<Vec<usize>> = (0..samples.len()).map(|i| vec![i]).collect();
    loop {
        let mut best: Option<(usize, usize, R)> = None;
        for a in 0..groups.len() {
            for b in a + 1..groups.len() {
                // Complete linkage: the merge cost is the max cross distance.
                let mut m = R::zero();
                for &i in &groups[a] {
                    for &j in &groups[b] {
                        m = m.max(geom::dist(&samples[i].1, &samples[j].1));
                    }
                }
                if m <= tol && best.map_or(true, |(_, _, bm)| m < bm) {
                    best = Some((a, b, m));
                }
            }
        }
        match best {
            Some((a, b, _)) => {
                let moved = groups.remove(b);
                groups[a].extend(moved);
            }
            None => break,
        }
    }
    groups
        .into_iter()
        .map(|idx| {
            let m = R::from_usize(idx.len()).unwrap();
            let dim = samples[idx[0]].1.len();
            let mut mean = vec![R::zero(); dim];
            for &i in &idx {
                for (s, &g) in mean.iter_mut().zip(&samples[i].1) {
                    *s += g / m;
                }
            }
            GradientCluster {
                gradient: mean,
                multiplicity: idx.len(),
                witnesses: idx.iter().take(8).map(|&i| samples[i].0.clone()).collect(),
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Semiconcavity constant.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct SemiconcavityFit<R: Real> {
    /// Smallest c >= 0 with `u(x+h) + u(x-h) - 2u(x) <= c |h|^2` on samples.
    pub constant: R,
    /// Raw supremum of the quotient (may be negative for concave u).
    pub raw_sup: R,
    pub diverging: bool,
    pub worst: (Vec<R>, Vec<R>),
    pub per_shell: Vec<R>,
}

#[derive(Clone, Debug)]
pub struct SemiconcavityOptions<R: Real> {
    pub base_points: usize,
    pub shells: usize,
    pub directions: usize,
    pub min_step: Option<R>,
    pub seed: u64,
}

impl<R: Real> Default for SemiconcavityOptions<R> {
    fn default() -> Self {
        Self {
            base_points: 32,
            shells: 8,
            directions: 0,
            min_step: None,
            seed: 0x5e111,
        }
    }
}

pub fn semiconcavity_constant<R: Real>(
    u: &SampledFunction<R>,
    domain: &BoxDomain<R>,
    opts: &SemiconcavityOptions<R>,
) -> Result<SemiconcavityFit<R>> {
    if !u.domain().contains(&domain.lo) || !u.domain().contains(&domain.hi) {
        return Err(Error::OutsideDomain {
            at: domain.lo.iter().map(|&v| v.lossy()).collect(),
        });
    }
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed);
    let n = domain.dim();
    let dir_count = if opts.directions == 0 {
        geom::default_direction_count(n).min(32)
    } else {
        opts.directions
    };
    let dirs = geom::unit_directions(n, dir_count);
    let r0 = R::of(0.25) * domain.min_extent();

    let mut raw_sup = R::neg_infinity();
    let mut worst = (domain.center(), vec![R::zero(); n]);
    let mut per_shell = Vec::new();
    for shell in 0..opts.shells {
        let hr = r0 / R::of(2.0f64.powi(shell as i32));
        if let Some(min_h) = opts.min_step {
            if hr < min_h {
                break;
            }
        }
        let inner = domain.shrunk(hr);
        let mut shell_sup = R::neg_infinity();
        for _ in 0..opts.base_points {
            let x = crate::dynamics::random_point(&inner, &mut rng);
            let ux = u.value(&x);
            for d in &dirs {
                let up = u.value(&geom::add_scaled(&x, hr, d));
                let um = u.value(&geom::add_scaled(&x, -hr, d));
                let q = (up + um - ux - ux) / (hr * hr);
                shell_sup = shell_sup.max(q);
                if q > raw_sup {
                    raw_sup = q;
                    worst = (x.clone(), geom::scaled(d, hr));
                }
            }
        }
        per_shell.push(shell_sup);
    }

    let k = per_shell.len();
    let floor = R::of(1e-12);
    let diverging = k >= 3
        && per_shell[k - 1] > R::of(1.5) * per_shell[k - 2].max(floor)
        && per_shell[k - 2] > R::of(1.5) * per_shell[k - 3].max(floor)
        && per_shell[k - 1] > R::of(4.0) * per_shell[0].max(floor);

    Ok(SemiconcavityFit {
        constant: raw_sup.max(R::zero()),
        raw_sup,
        diverging,
        worst,
        per_shell,
    })
}

// ---------------------------------------------------------------------------
// Upper Dini derivative.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct DiniEstimate<R: Real> {
    /// limsup estimate of the one-sided difference quotient.
    pub estimate: R,
    /// Spread of the quotient over the tail of the schedule.
    pub tail_spread: R,
    pub quotients: Vec<R>,
}

/// One-sided upper Dini derivative of `u` at `x` in direction `theta`,
/// realized as the max quotient over the tail of a decreasing `tau` schedule.
/// No extrapolation is applied: this is a genuine one-sided limsup probe.
pub fn dini_upper_derivative<R: Real>(
    u: &SampledFunction<R>,
    x: &[R],
    theta: &[R],
    tau_schedule: &[R],
) -> Result<DiniEstimate<R>> {
    if theta.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: theta.len(),
        });
    }
    let ux = u.value(x);
    let mut quotients = Vec::with_capacity(tau_schedule.len());
    for &tau in tau_schedule {
        if tau <= R::zero() {
            return Err(Error::Invalid("tau schedule must be positive".into()));
        }
        let y = geom::add_scaled(x, tau, theta);
        if !u.domain().contains(&y) {
            return Err(Error::OutsideDomain {
                at: y.iter().map(|&v| v.lossy()).collect(),
            });
        }
        quotients.push((u.value(&y) - ux) / tau);
    }
    if quotients.len() < 2 {
        return Err(Error::InsufficientSamples {
            got: quotients.len(),
            min: 2,
        });
    }
    let tail = &quotients[quotients.len() / 2..];
    let estimate = tail.iter().fold(R::neg_infinity(), |m, &v| m.max(v));
    let low = tail.iter().fold(R::infinity(), |m, &v| m.min(v));
    Ok(DiniEstimate {
        estimate,
        tail_spread: estimate - low,
        quotients,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn box1(h: f64) -> BoxDomain<f64> {
        BoxDomain::new(vec![-h], vec![h])
    }

    // -- proximal supergradient ---------------------------------------------

    #[test]
    fn concave_quadratic_is_proximal_with_zero_constant() {
        let u = SampledFunction::new(BoxDomain::new(vec![-2.0, -2.0], vec![2.0, 2.0]), |y| {
            -(y[0] * y[0] + y[1] * y[1])
        });
        let cert = proximal_supergradient_test(
            &u,
            &[0.0, 0.0],
            &[0.0, 0.0],
            1.0,
            64,
            &ProximalTestOptions::default(),
        )
        .unwrap();
        assert_eq!(cert.verdict, ProximalVerdict::Proximal);
        assert!(cert.quadratic_constant <= 1e-12);
        assert!(cert.max_violation <= 1e-12);
    }

    #[test]
    fn negative_abs_is_proximal_at_kink() {
        let u = SampledFunction::new(box1(2.0), |y| -y[0].abs());
        let cert =
            proximal_supergradient_test(&u, &[0.0], &[0.0], 1.0, 8, &ProximalTestOptions::default())
                .unwrap();
        assert_eq!(cert.verdict, ProximalVerdict::Proximal);
        assert!(cert.quadratic_constant <= 1e-12);
    }

    #[test]
    fn abs_rejects_zero_supergradient() {
        let u = SampledFunction::new(box1(2.0), |y| y[0].abs());
        let cert =
            proximal_supergradient_test(&u, &[0.0], &[0.0], 1.0, 8, &ProximalTestOptions::default())
                .unwrap();
        assert_eq!(cert.verdict, ProximalVerdict::Rejected);
    }

    #[test]
    fn three_halves_power_is_frechet_only() {
        // |y|^(3/2): Fréchet supergradient 0 at 0, but no quadratic bound.
        let u = SampledFunction::new(box1(2.0), |y| y[0].abs().powf(1.5));
        let cert =
            proximal_supergradient_test(&u, &[0.0], &[0.0], 1.0, 8, &ProximalTestOptions::default())
                .unwrap();
        assert_eq!(cert.verdict, ProximalVerdict::FrechetOnly);
    }

    #[test]
    fn probe_radius_must_fit_domain() {
        let u = SampledFunction::new(box1(0.5), |y| y[0]);
        let err = proximal_supergradient_test(
            &u,
            &[0.0],
            &[1.0],
            1.0,
            8,
            &ProximalTestOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::ProbeExceedsDomain { .. }));
    }

    #[test]
    fn sample_count_floor_is_8_per_dim() {
        let u = SampledFunction::new(BoxDomain::new(vec![-1.0, -1.0], vec![1.0, 1.0]), |y| {
            y[0] + y[1]
        });
        let err = proximal_supergradient_test(
            &u,
            &[0.0, 0.0],
            &[1.0, 1.0],
            0.5,
            16,
            &ProximalTestOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InsufficientSamples { min: 64, .. }));
    }

    // -- Fréchet membership --------------------------------------------------

    #[test]
    fn superdiff_of_negative_abs_contains_half() {
        let u = SampledFunction::new(box1(2.0), |y| -y[0].abs());
        let rep =
            frechet_superdiff_membership(&u, &[0.0], &[0.5], &FrechetOptions::default()).unwrap();
        assert_eq!(rep.verdict, Verdict::True);
    }

    #[test]
    fn superdiff_of_abs_is_empty() {
        let u = SampledFunction::new(box1(2.0), |y| y[0].abs());
        let rep =
            frechet_superdiff_membership(&u, &[0.0], &[0.5], &FrechetOptions::default()).unwrap();
        assert_eq!(rep.verdict, Verdict::False);
        assert!(rep.limsup_estimate >= 0.5 - 1e-9);
    }

    #[test]
    fn smooth_gradient_is_member() {
        let u = SampledFunction::new(box1(2.0), |y| y[0] * y[0]);
        let rep =
            frechet_superdiff_membership(&u, &[0.3], &[0.6], &FrechetOptions::default()).unwrap();
        assert_eq!(rep.verdict, Verdict::True);
    }

    #[test]
    fn subdiff_mirror_accepts_gradient_of_abs_off_kink() {
        let u = SampledFunction::new(box1(2.0), |y| y[0].abs());
        let rep =
            frechet_subdiff_membership(&u, &[0.5], &[1.0], &FrechetOptions::default()).unwrap();
        assert_eq!(rep.verdict, Verdict::True);
        // And at the kink, every q in [-1,1] is a subgradient of |.|.
        let rep =
            frechet_subdiff_membership(&u, &[0.0], &[0.3], &FrechetOptions::default()).unwrap();
        assert_eq!(rep.verdict, Verdict::True);
    }

    // -- reachable gradients --------------------------------------------------

    #[test]
    fn reachable_gradients_of_negative_abs() {
        let u = SampledFunction::new(box1(2.0), |y| -y[0].abs())
            .with_hint(SmoothnessHint::LocallyLipschitz);
        let set = reachable_gradients(&u, &[0.0], &ReachableGradientOptions::default()).unwrap();
        let mut grads: Vec<f64> = set.clusters.iter().map(|c| c.gradient[0]).collect();
        grads.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(grads.len(), 2, "clusters: {grads:?}");
        assert!((grads[0] + 1.0).abs() < 1e-5);
        assert!((grads[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn reachable_gradients_smooth_is_singleton() {
        let u = SampledFunction::new(box1(2.0), |y| y[0] * y[0]).with_hint(SmoothnessHint::Smooth);
        let set = reachable_gradients(&u, &[0.5], &ReachableGradientOptions::default()).unwrap();
        assert_eq!(set.clusters.len(), 1);
        assert!((set.clusters[0].gradient[0] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn reachable_gradients_of_two_ray_value_function() {
        // u(t,x) = -(|x| + (1-t))^2 on [0,1] x [-2,2]; at (0,0) the branch
        // gradients are (2, -2) and (2, 2).
        let u = SampledFunction::new(BoxDomain::new(vec![0.0, -2.0], vec![1.0, 2.0]), |y: &[f64]| {
            let (t, x) = (y[0], y[1]);
            -(x.abs() + (1.0 - t)) * (x.abs() + (1.0 - t))
        })
        .with_hint(SmoothnessHint::LocallyLipschitz);
        let set = reachable_gradients(&u, &[0.0, 0.0], &ReachableGradientOptions::default())
            .unwrap();
        let mut grads: Vec<(f64, f64)> = set
            .clusters
            .iter()
            .map(|c| (c.gradient[0], c.gradient[1]))
            .collect();
        grads.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        assert_eq!(grads.len(), 2, "clusters: {grads:?}");
        assert!((grads[0].0 - 2.0).abs() < 1e-4 && (grads[0].1 + 2.0).abs() < 1e-4);
        assert!((grads[1].0 - 2.0).abs() < 1e-4 && (grads[1].1 - 2.0).abs() < 1e-4);
    }

    #[test]
    fn hull_of_reachable_gradients_contains_accepted_supergradients() {
        // Discrete version of the semiconcave identity
        // co(reachable gradients) = Fréchet superdifferential, for -|y|.
        let u = SampledFunction::new(box1(2.0), |y| -y[0].abs())
            .with_hint(SmoothnessHint::LocallyLipschitz);
        let set = reachable_gradients(&u, &[0.0], &ReachableGradientOptions::default()).unwrap();
        let lo = set
            .clusters
            .iter()
            .map(|c| c.gradient[0])
            .fold(f64::INFINITY, f64::min);
        let hi = set
            .clusters
            .iter()
            .map(|c| c.gradient[0])
            .fold(f64::NEG_INFINITY, f64::max);
        for p in [-0.9, -0.3, 0.0, 0.4, 0.9] {
            let rep = frechet_superdiff_membership(&u, &[0.0], &[p], &FrechetOptions::default())
                .unwrap();
            if rep.verdict == Verdict::True {
                assert!(p >= lo - 1e-3 && p <= hi + 1e-3);
            }
        }
    }

    // -- semiconcavity ---------------------------------------------------------

    #[test]
    fn linear_has_zero_constant() {
        let u = SampledFunction::new(box1(4.0), |y| 3.0 * y[0] - 1.0);
        let fit =
            semiconcavity_constant(&u, &box1(2.0), &SemiconcavityOptions::default()).unwrap();
        assert!(fit.constant.abs() < 1e-9);
        assert!(!fit.diverging);
    }

    #[test]
    fn concave_quadratic_has_zero_constant_and_negative_sup() {
        let u = SampledFunction::new(box1(4.0), |y| -y[0] * y[0]);
        let fit =
            semiconcavity_constant(&u, &box1(2.0), &SemiconcavityOptions::default()).unwrap();
        assert!(fit.constant == 0.0);
        assert!((fit.raw_sup + 2.0).abs() < 1e-9);
    }

    #[test]
    fn abs_diverges() {
        let u = SampledFunction::new(box1(4.0), |y| y[0].abs());
        let fit =
            semiconcavity_constant(&u, &box1(2.0), &SemiconcavityOptions::default()).unwrap();
        assert!(fit.diverging, "per-shell fits: {:?}", fit.per_shell);
    }

    // -- Dini -------------------------------------------------------------------

    #[test]
    fn dini_matches_gradient_for_smooth() {
        let u = SampledFunction::new(BoxDomain::new(vec![-2.0, -2.0], vec![2.0, 2.0]), |y: &[f64]| {
            y[0] * y[0] + 2.0 * y[1]
        });
        let taus = geometric_schedule(1e-2, 12);
        let est = dini_upper_derivative(&u, &[0.5, 0.0], &[1.0, 1.0], &taus).unwrap();
        assert!((est.estimate - 3.0).abs() < 1e-2);
    }

    #[test]
    fn dini_one_sided_slopes_of_abs() {
        let taus = geometric_schedule(1e-2, 12);
        let neg = SampledFunction::new(box1(2.0), |y| -y[0].abs());
        let est = dini_upper_derivative(&neg, &[0.0], &[1.0], &taus).unwrap();
        assert!((est.estimate + 1.0).abs() < 1e-9);
        let pos = SampledFunction::new(box1(2.0), |y| y[0].abs());
        let est = dini_upper_derivative(&pos, &[0.0], &[1.0], &taus).unwrap();
        assert!((est.estimate - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dini_errors_when_schedule_leaves_domain() {
        let u = SampledFunction::new(box1(0.5), |y| y[0]);
        let err = dini_upper_derivative(&u, &[0.4], &[1.0], &[0.5, 0.25]).unwrap_err();
        assert!(matches!(err, Error::OutsideDomain { .. }));
    }
}
