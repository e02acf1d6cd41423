//! Hamiltonian characteristic and dual-arc integration: the backward coupled
//! system `x' = grad_p H(x,p)`, `-p' = grad_x H(x,p)` from terminal data
//! `(z, -grad phi(z))`, the terminal-value dual inclusion
//! `-p' in d_x^- H(xbar, p)` with a configurable subgradient selection, the
//! forward state flow along a given dual arc, and the maximum-principle
//! residual `|H(x,p) - <p, x'>|`.
//!
//! Every produced dual arc is subject to the vanishing dichotomy: it is
//! either never zero or identically zero, and integration aborts if a
//! nonzero arc crosses zero.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom;
use crate::hjb::MayerProblem;
use crate::scalar::Real;
use crate::traj::Trajectory;

/// Relative threshold of the zero-arc classification.
pub const DICHOTOMY_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SubgradientPolicy {
    /// Minimal-norm element of the convex hull of the generator list.
    MinimalNorm,
    /// First generator (deterministic, order as produced).
    LowestIndex,
    /// Generator average.
    Centroid,
}

impl SubgradientPolicy {
    /// Selects one element of the convex hull of `generators`.
    ///
    /// The minimal-norm point of a hull of m generators in R^n (n <= 3) is
    /// attained on a face spanned by at most three of them, so scanning
    /// vertices, segment projections, and in-triangle plane projections is
    /// exact for the bodies produced here.
    pub fn select<R: Real>(&self, generators: &[Vec<R>]) -> Vec<R> {
        debug_assert!(!generators.is_empty());
        match self {
            SubgradientPolicy::LowestIndex => generators[0].clone(),
            SubgradientPolicy::Centroid => {
                let m = R::from_usize(generators.len()).unwrap();
                let mut c = vec![R::zero(); generators[0].len()];
                for g in generators {
                    for (ci, &gi) in c.iter_mut().zip(g) {
                        *ci += gi / m;
                    }
                }
                c
            }
            SubgradientPolicy::MinimalNorm => {
                let mut best = generators[0].clone();
                let mut best_n = geom::norm(&best);
                let mut consider = |cand: Vec<R>| {
                    let n = geom::norm(&cand);
                    if n < best_n {
                        best_n = n;
                        best = cand;
                    }
                };
                for g in generators.iter().skip(1) {
                    consider(g.clone());
                }
                for (i, a) in generators.iter().enumerate() {
                    for b in generators.iter().skip(i + 1) {
                        if let Some(p) = project_origin_segment(a, b) {
                            consider(p);
                        }
                    }
                }
                if generators[0].len() >= 3 {
                    for (i, a) in generators.iter().enumerate() {
                        for (j, b) in generators.iter().enumerate().skip(i + 1) {
                            for c in generators.iter().skip(j + 1) {
                                if let Some(p) = project_origin_triangle(a, b, c) {
                                    consider(p);
                                }
                            }
                        }
                    }
                }
                best
            }
        }
    }
}

/// Projection of the origin onto segment [a, b], if it falls strictly inside.
fn project_origin_segment<R: Real>(a: &[R], b: &[R]) -> Option<Vec<R>> {
    let d = geom::sub(b, a);
    let dd = geom::dot(&d, &d);
    if dd <= R::zero() {
        return None;
    }
    let t = -geom::dot(a, &d) / dd;
    (t > R::zero() && t < R::one()).then(|| geom::add_scaled(a, t, &d))
}

/// Projection of the origin onto the triangle (a, b, c) plane, if it falls
/// inside the triangle (barycentric test).
fn project_origin_triangle<R: Real>(a: &[R], b: &[R], c: &[R]) -> Option<Vec<R>> {
    let u = geom::sub(b, a);
    let v = geom::sub(c, a);
    let uu = geom::dot(&u, &u);
    let vv = geom::dot(&v, &v);
    let uv = geom::dot(&u, &v);
    let det = uu * vv - uv * uv;
    if det.abs() <= R::of(1e-30) {
        return None;
    }
    let w: Vec<R> = a.iter().map(|&x| -x).collect();
    let wu = geom::dot(&w, &u);
    let wv = geom::dot(&w, &v);
    let s = (wu * vv - wv * uv) / det;
    let t = (wv * uu - wu * uv) / det;
    (s > R::zero() && t > R::zero() && s + t < R::one()).then(|| {
        let mut p = geom::add_scaled(a, s, &u);
        p = geom::add_scaled(&p, t, &v);
        p
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ArcMeta {
    pub method: String,
    pub step: f64,
    pub policy: Option<SubgradientPolicy>,
    /// Degenerate all-zero dual (stationary transversality datum).
    pub stationary: bool,
}

/// State trajectory and dual arc on a shared time mesh.
#[derive(Clone, Debug)]
pub struct ArcPair<R: Real> {
    pub state: Trajectory<R>,
    pub dual: Trajectory<R>,
    pub meta: ArcMeta,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dichotomy {
    AllZero,
    NeverZero,
    Violated { index: usize },
}

impl<R: Real> ArcPair<R> {
    pub fn new(state: Trajectory<R>, dual: Trajectory<R>, meta: ArcMeta) -> Result<Self> {
        if state.len() != dual.len() {
            return Err(Error::DimensionMismatch {
                expected: state.len(),
                got: dual.len(),
            });
        }
        Ok(Self { state, dual, meta })
    }

    pub fn times(&self) -> &[R] {
        self.state.times()
    }

    /// Zero/never-zero classification at relative threshold
    /// [`DICHOTOMY_TOL`].
    pub fn dichotomy(&self) -> Dichotomy {
        let max_p = self
            .dual
            .states()
            .iter()
            .map(|p| geom::norm(p))
            .fold(R::zero(), R::max);
        if max_p == R::zero() {
            return Dichotomy::AllZero;
        }
        let tol = R::of(DICHOTOMY_TOL) * max_p;
        match self
            .dual
            .states()
            .iter()
            .position(|p| geom::norm(p) <= tol)
        {
            None => Dichotomy::NeverZero,
            Some(index) => Dichotomy::Violated { index },
        }
    }

    /// Checks `|p(t)| <= |p(T)| exp(c_K (T - t))` up to a relative slack.
    pub fn gronwall_ok(&self, c_k: R, slack_rel: R) -> bool {
        let times = self.times();
        let t_end = *times.last().unwrap();
        let p_end = geom::norm(self.dual.end());
        times.iter().zip(self.dual.states()).all(|(&t, p)| {
            let bound = p_end * (c_k * (t_end - t)).exp();
            geom::norm(p) <= bound * (R::one() + slack_rel) + R::of(1e-300)
        })
    }

    /// Plot-ready CSV: one `t,x1..xn,p1..pn` row per mesh node.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        use std::io::Write;
        let n = self.state.dim();
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(w, "t")?;
        for a in 1..=n {
            write!(w, ",x{a}")?;
        }
        for a in 1..=n {
            write!(w, ",p{a}")?;
        }
        writeln!(w)?;
        for (k, &t) in self.times().iter().enumerate() {
            write!(w, "{}", t.lossy())?;
            for v in &self.state.states()[k] {
                write!(w, ",{}", v.lossy())?;
            }
            for v in &self.dual.states()[k] {
                write!(w, ",{}", v.lossy())?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// RK4.
// ---------------------------------------------------------------------------

/// Fixed-step RK4 from `t0` to `t1` (either direction); returns the full
/// mesh including both endpoints, in integration order.
pub fn rk4<R: Real>(
    mut f: impl FnMut(R, &[R]) -> Result<Vec<R>>,
    t0: R,
    t1: R,
    y0: Vec<R>,
    steps: usize,
) -> Result<Vec<(R, Vec<R>)>> {
    let steps = steps.max(1);
    let h = (t1 - t0) / R::from_usize(steps).unwrap();
    let mut out = Vec::with_capacity(steps + 1);
    let mut y = y0;
    let mut t = t0;
    out.push((t, y.clone()));
    for k in 0..steps {
        let k1 = f(t, &y)?;
        let y2 = geom::add_scaled(&y, h.half(), &k1);
        let k2 = f(t + h.half(), &y2)?;
        let y3 = geom::add_scaled(&y, h.half(), &k2);
        let k3 = f(t + h.half(), &y3)?;
        let y4 = geom::add_scaled(&y, h, &k3);
        let k4 = f(t + h, &y4)?;
        for i in 0..y.len() {
            y[i] += h / R::of(6.0)
                * (k1[i] + R::of(2.0) * k2[i] + R::of(2.0) * k3[i] + k4[i]);
        }
        t = if k + 1 == steps {
            t1
        } else {
            t0 + h * R::from_usize(k + 1).unwrap()
        };
        out.push((t, y.clone()));
    }
    Ok(out)
}

fn into_trajectories<R: Real>(
    mesh: Vec<(R, Vec<R>)>,
    n: usize,
) -> Result<(Trajectory<R>, Trajectory<R>)> {
    let mut mesh = mesh;
    if mesh.first().unwrap().0 > mesh.last().unwrap().0 {
        mesh.reverse();
    }
    let times: Vec<R> = mesh.iter().map(|(t, _)| *t).collect();
    let states: Vec<Vec<R>> = mesh.iter().map(|(_, y)| y[..n].to_vec()).collect();
    let duals: Vec<Vec<R>> = mesh.iter().map(|(_, y)| y[n..].to_vec()).collect();
    Ok((
        Trajectory::new(times.clone(), states)?,
        Trajectory::new(times, duals)?,
    ))
}

// ---------------------------------------------------------------------------
// Characteristic system.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct FlowOptions {
    /// Safety factor of the padded domain guard.
    pub pad_safety: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { pad_safety: 1.25 }
    }
}

/// Integrates the coupled characteristic system backward from the terminal
/// point `z`:
/// `x' = grad_p H(x, p)`, `p' = -grad_x H(x, p)`, `x(T) = z`,
/// `p(T) = -grad phi(z)`.
///
/// Requires an exact gradient of the terminal cost and differentiability of
/// H in x along the arc; a flat terminal gradient yields the degenerate
/// all-zero dual with the stationary flag set.
pub fn integrate_characteristics<R: Real>(
    problem: &MayerProblem<R>,
    z: &[R],
    steps: usize,
    opts: &FlowOptions,
) -> Result<ArcPair<R>> {
    let n = problem.dim();
    if z.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: z.len(),
        });
    }
    let grad_phi = problem
        .terminal_cost
        .exact_gradient(z)
        .ok_or(Error::ExactGradientRequired)?;
    let p_end: Vec<R> = grad_phi.iter().map(|&g| -g).collect();
    let step = (problem.duration() / R::from_usize(steps.max(1)).unwrap()).lossy();

    if geom::norm(&p_end) == R::zero() {
        // Zero dual: the forward flow is undefined, no fallback is taken.
        let state = Trajectory::from_fn(problem.t0, problem.horizon, steps + 1, |_| z.to_vec())?;
        let dual =
            Trajectory::from_fn(problem.t0, problem.horizon, steps + 1, |_| vec![R::zero(); n])?;
        return ArcPair::new(
            state,
            dual,
            ArcMeta {
                method: "rk4".into(),
                step,
                policy: None,
                stationary: true,
            },
        );
    }

    let guard = problem.padded_domain(opts.pad_safety)?;
    let p_scale = geom::norm(&p_end);
    let mut y0 = z.to_vec();
    y0.extend_from_slice(&p_end);
    let mesh = rk4(
        |t, y| {
            let (x, p) = y.split_at(n);
            if !guard.contains(x) {
                return Err(Error::LeftDomain { t: t.lossy() });
            }
            if geom::norm(p) <= R::of(DICHOTOMY_TOL) * p_scale {
                return Err(Error::DichotomyViolated { t: t.lossy() });
            }
            let dx = problem.dynamics.p_gradient(x, p)?;
            let gens = problem.dynamics.x_subgradient(x, p)?;
            if gens.len() > 1 {
                return Err(Error::UnannotatedKink {
                    at: x.iter().map(|&v| v.lossy()).collect(),
                });
            }
            let mut rhs = dx;
            rhs.extend(gens[0].iter().map(|&g| -g));
            Ok(rhs)
        },
        problem.horizon,
        problem.t0,
        y0,
        steps,
    )?;
    let (state, dual) = into_trajectories(mesh, n)?;
    let pair = ArcPair::new(
        state,
        dual,
        ArcMeta {
            method: "rk4".into(),
            step,
            policy: None,
            stationary: false,
        },
    )?;
    if let Dichotomy::Violated { index } = pair.dichotomy() {
        return Err(Error::DichotomyViolated {
            t: pair.times()[index].lossy(),
        });
    }
    Ok(pair)
}

/// Solves the terminal-value dual inclusion along a frozen state trajectory:
/// `-p' in d_x^- H(xbar(s), p(s))`, `-p(T) = q`,
/// selecting one subgradient per step with the given policy.
pub fn solve_dual_terminal<R: Real>(
    state: &Trajectory<R>,
    q: &[R],
    problem: &MayerProblem<R>,
    policy: SubgradientPolicy,
    steps: usize,
) -> Result<Trajectory<R>> {
    let n = problem.dim();
    if q.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: q.len(),
        });
    }
    let t0 = state.t_start();
    let t1 = state.t_end();
    let p_end: Vec<R> = q.iter().map(|&v| -v).collect();
    if geom::norm(&p_end) == R::zero() {
        // q = 0: the solution of the terminal-value problem vanishes.
        return Trajectory::from_fn(t0, t1, steps.max(1) + 1, |_| vec![R::zero(); n]);
    }
    let p_scale = geom::norm(&p_end);
    let mesh = rk4(
        |t, p| {
            if geom::norm(p) <= R::of(DICHOTOMY_TOL) * p_scale {
                return Err(Error::DichotomyViolated { t: t.lossy() });
            }
            let x = state.at(t);
            let gens = problem.dynamics.x_subgradient(&x, p)?;
            let sel = policy.select(&gens);
            Ok(sel.into_iter().map(|g| -g).collect())
        },
        t1,
        t0,
        p_end,
        steps,
    )?;
    let mut mesh = mesh;
    mesh.reverse();
    let times: Vec<R> = mesh.iter().map(|(t, _)| *t).collect();
    let duals: Vec<Vec<R>> = mesh.into_iter().map(|(_, p)| p).collect();
    Trajectory::new(times, duals)
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityFit {
    /// Fitted exponent k of `|y(s;t,x) - y(s;t,z)| <= e^(k (s-t)) |z - x|`.
    pub k_fit: f64,
    pub max_separation: f64,
    pub probe: f64,
}

#[derive(Clone, Debug)]
pub struct ForwardFlow<R: Real> {
    pub trajectory: Trajectory<R>,
    pub stability: Option<StabilityFit>,
}

/// Integrates the state flow `y' = grad_p H(y, p(s))` forward from `(t, x)`
/// along a given nonvanishing dual arc. Optionally fits the Lipschitz
/// stability exponent by integrating a probe start.
pub fn forward_flow<R: Real>(
    problem: &MayerProblem<R>,
    t_start: R,
    x: &[R],
    dual: &Trajectory<R>,
    steps: usize,
    stability_probe: Option<R>,
    opts: &FlowOptions,
) -> Result<ForwardFlow<R>> {
    let n = problem.dim();
    if x.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x.len(),
        });
    }
    let max_p = dual
        .states()
        .iter()
        .map(|p| geom::norm(p))
        .fold(R::zero(), R::max);
    let tol = R::of(DICHOTOMY_TOL) * max_p;
    if max_p == R::zero()
        || dual
            .states()
            .iter()
            .any(|p| geom::norm(p) <= tol)
    {
        return Err(Error::ZeroDualArc);
    }

    let guard = problem.padded_domain(opts.pad_safety)?;
    let t_end = dual.t_end();
    let integrate = |start: Vec<R>| -> Result<Vec<(R, Vec<R>)>> {
        rk4(
            |t, y| {
                if !guard.contains(y) {
                    return Err(Error::LeftDomain { t: t.lossy() });
                }
                let p = dual.at(t);
                problem.dynamics.p_gradient(y, &p)
            },
            t_start,
            t_end,
            start,
            steps,
        )
    };
    let mesh = integrate(x.to_vec())?;
    let times: Vec<R> = mesh.iter().map(|(t, _)| *t).collect();
    let states: Vec<Vec<R>> = mesh.iter().map(|(_, y)| y.clone()).collect();
    let trajectory = Trajectory::new(times, states)?;

    let stability = match stability_probe {
        None => None,
        Some(delta) => {
            let mut start = x.to_vec();
            start[0] += delta;
            let probe_mesh = integrate(start)?;
            let mut k_fit = R::zero();
            let mut max_sep = R::zero();
            for ((t, y), (_, yp)) in mesh.iter().zip(&probe_mesh).skip(1) {
                let sep = geom::dist(y, yp);
                max_sep = max_sep.max(sep);
                let span = *t - t_start;
                if span > R::zero() && sep > R::zero() {
                    k_fit = k_fit.max((sep / delta.abs()).ln() / span);
                }
            }
            Some(StabilityFit {
                k_fit: k_fit.lossy(),
                max_separation: max_sep.lossy(),
                probe: delta.lossy(),
            })
        }
    };
    Ok(ForwardFlow {
        trajectory,
        stability,
    })
}

// ---------------------------------------------------------------------------
// Maximum principle residual.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct MaxPrincipleResidual {
    pub sup: f64,
    pub mean: f64,
    pub per_node: Vec<f64>,
    /// Endpoint nodes use one-sided differences and are excluded from `sup`
    /// unless requested.
    pub endpoints_included: bool,
}

/// Residual of `H(x(t), p(t)) = <p(t), x'(t)>` over the mesh, with `x'`
/// estimated by central differences (one-sided at the endpoints, excluded
/// from the sup by default).
pub fn maximum_principle_residual<R: Real>(
    pair: &ArcPair<R>,
    problem: &MayerProblem<R>,
    include_endpoints: bool,
) -> Result<MaxPrincipleResidual> {
    let vels = pair.state.velocities();
    let states = pair.state.states();
    let duals = pair.dual.states();
    let m = states.len();
    let mut per_node = Vec::with_capacity(m);
    for k in 0..m {
        let h = problem.dynamics.support(&states[k], &duals[k])?.value;
        per_node.push((h - geom::dot(&duals[k], &vels[k])).abs().lossy());
    }
    let range: Box<dyn Iterator<Item = usize>> = if include_endpoints || m <= 2 {
        Box::new(0..m)
    } else {
        Box::new(1..m - 1)
    };
    let mut sup = 0f64;
    let mut sum = 0f64;
    let mut count = 0usize;
    for k in range {
        sup = sup.max(per_node[k]);
        sum += per_node[k];
        count += 1;
    }
    Ok(MaxPrincipleResidual {
        sup,
        mean: sum / count as f64,
        per_node,
        endpoints_included: include_endpoints,
    })
}
