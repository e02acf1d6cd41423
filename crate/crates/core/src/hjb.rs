//! Backward dynamic programming for the Mayer value function
//! `V(t,x) = inf { phi(y(T)) : y' in F(y), y(t) = x }` on a space-time grid:
//! a semi-Lagrangian scheme with multilinear interpolation, the direct
//! discretization of the dynamic programming principle. Also the viscosity
//! residual probe of `-V_t + H(x, -V_x) = 0` and the monotonicity check of
//! `s -> V(s, y(s))` along admissible trajectories.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::dynamics::SetValuedMap;
use crate::error::{Error, Result};
use crate::geom::{self, BoxDomain};
use crate::nonsmooth::SampledFunction;
use crate::scalar::Real;
use crate::traj::Trajectory;

/// Mayer problem data: dynamics, terminal cost, horizon, spatial box.
#[derive(Clone, Debug)]
pub struct MayerProblem<R: Real> {
    pub dynamics: SetValuedMap<R>,
    pub terminal_cost: SampledFunction<R>,
    pub t0: R,
    pub horizon: R,
    pub domain: BoxDomain<R>,
}

impl<R: Real> MayerProblem<R> {
    pub fn new(
        dynamics: SetValuedMap<R>,
        terminal_cost: SampledFunction<R>,
        t0: R,
        horizon: R,
        domain: BoxDomain<R>,
    ) -> Result<Self> {
        if t0 >= horizon {
            return Err(Error::Invalid("need t0 < T".into()));
        }
        if dynamics.dim() != domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: dynamics.dim(),
                got: domain.dim(),
            });
        }
        Ok(Self {
            dynamics,
            terminal_cost,
            t0,
            horizon,
            domain,
        })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn duration(&self) -> R {
        self.horizon - self.t0
    }

    /// Reachability envelope: every trajectory started in the box stays in
    /// the padded box. The radius bound `m' = max{ |v| : v in F(x), |x| = m }`
    /// is integrated over the horizon (midpoint rule), which stays tight for
    /// super-linear speed profiles where the closed-form Gronwall bound blows
    /// up.
    pub fn padded_domain(&self, safety: f64) -> Result<BoxDomain<R>> {
        let n = self.dim();
        let dirs = geom::unit_directions(n, geom::default_direction_count(n).min(32));
        let speed_at = |m: R| -> Result<R> {
            let mut s = R::zero();
            for d in &dirs {
                s = s.max(self.dynamics.max_speed(&geom::scaled(d, m))?);
            }
            Ok(s)
        };
        let b = self
            .domain
            .lo
            .iter()
            .chain(self.domain.hi.iter())
            .map(|&v| v.abs())
            .fold(R::zero(), R::max);
        let steps = 128;
        let h = self.duration() / R::from_usize(steps).unwrap();
        let mut m = b;
        for _ in 0..steps {
            let k1 = speed_at(m)?;
            let k2 = speed_at(m + h.half() * k1)?;
            m += h * k2;
            if m > R::of(1e9) {
                return Err(Error::Invalid(
                    "reachability envelope blows up within the horizon".into(),
                ));
            }
        }
        let pad = (m - b).max(R::zero()) * R::of(safety) + R::of(1e-9);
        Ok(self.domain.padded(pad))
    }
}

/// Grid resolution over the user box; the solver extends the grid to the
/// padded box keeping the same steps.
#[derive(Clone, Debug, Serialize)]
pub struct GridSpec {
    pub time_nodes: usize,
    pub space_nodes: Vec<usize>,
    pub pad_safety: f64,
}

impl GridSpec {
    pub fn new(time_nodes: usize, space_nodes: Vec<usize>) -> Self {
        Self {
            time_nodes,
            space_nodes,
            pad_safety: 1.05,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SchemeMeta {
    pub scheme: String,
    pub dt: f64,
    pub steps: Vec<f64>,
    pub velocity_directions: usize,
    pub speed_bound: f64,
    pub pad: f64,
    /// Feet clamped back into the padded grid during the sweep.
    pub clamped_feet: usize,
}

/// Space-time grid of value samples with multilinear interpolation,
/// time-major storage.
#[derive(Clone, Debug)]
pub struct ValueField<R: Real> {
    t0: R,
    t1: R,
    nt: usize,
    grid: BoxDomain<R>,
    user_box: BoxDomain<R>,
    nx: Vec<usize>,
    values: Vec<R>,
    meta: SchemeMeta,
}

impl<R: Real> ValueField<R> {
    /// Samples a closed-form function onto a grid (no padding).
    pub fn from_fn(
        t0: R,
        t1: R,
        nt: usize,
        grid: BoxDomain<R>,
        nx: Vec<usize>,
        f: impl Fn(R, &[R]) -> R,
    ) -> Self {
        assert_eq!(grid.dim(), nx.len());
        assert!(nt >= 2 && nx.iter().all(|&n| n >= 2));
        let mut field = Self {
            t0,
            t1,
            nt,
            user_box: grid.clone(),
            grid,
            nx,
            values: Vec::new(),
            meta: SchemeMeta {
                scheme: "sampled".into(),
                dt: 0.0,
                steps: Vec::new(),
                velocity_directions: 0,
                speed_bound: 0.0,
                pad: 0.0,
                clamped_feet: 0,
            },
        };
        field.meta.dt = field.dt().lossy();
        field.meta.steps = (0..field.dim()).map(|a| field.step(a).lossy()).collect();
        let n_space = field.space_len();
        let mut values = Vec::with_capacity(nt * n_space);
        for k in 0..nt {
            let t = field.t_node(k);
            for idx in 0..n_space {
                let x = field.node_coords(idx);
                values.push(f(t, &x));
            }
        }
        field.values = values;
        field
    }

    pub fn dim(&self) -> usize {
        self.nx.len()
    }

    pub fn t_start(&self) -> R {
        self.t0
    }

    pub fn t_end(&self) -> R {
        self.t1
    }

    pub fn time_nodes(&self) -> usize {
        self.nt
    }

    pub fn space_nodes(&self) -> &[usize] {
        &self.nx
    }

    pub fn grid_box(&self) -> &BoxDomain<R> {
        &self.grid
    }

    pub fn user_box(&self) -> &BoxDomain<R> {
        &self.user_box
    }

    pub fn meta(&self) -> &SchemeMeta {
        &self.meta
    }

    pub fn dt(&self) -> R {
        (self.t1 - self.t0) / R::from_usize(self.nt - 1).unwrap()
    }

    pub fn step(&self, axis: usize) -> R {
        (self.grid.hi[axis] - self.grid.lo[axis]) / R::from_usize(self.nx[axis] - 1).unwrap()
    }

    pub fn min_step(&self) -> R {
        (0..self.dim()).map(|a| self.step(a)).fold(R::infinity(), R::min)
    }

    pub fn t_node(&self, k: usize) -> R {
        if k == self.nt - 1 {
            self.t1
        } else {
            self.t0 + self.dt() * R::from_usize(k).unwrap()
        }
    }

    pub fn x_node(&self, axis: usize, i: usize) -> R {
        if i == self.nx[axis] - 1 {
            self.grid.hi[axis]
        } else {
            self.grid.lo[axis] + self.step(axis) * R::from_usize(i).unwrap()
        }
    }

    pub fn space_len(&self) -> usize {
        self.nx.iter().product()
    }

    fn node_coords(&self, mut flat: usize) -> Vec<R> {
        let n = self.dim();
        let mut idx = vec![0usize; n];
        for axis in (0..n).rev() {
            idx[axis] = flat % self.nx[axis];
            flat /= self.nx[axis];
        }
        (0..n).map(|a| self.x_node(a, idx[a])).collect()
    }

    fn flat_index(&self, idx: &[usize]) -> usize {
        let mut flat = 0usize;
        for (axis, &i) in idx.iter().enumerate() {
            flat = flat * self.nx[axis] + i;
        }
        flat
    }

    pub fn node_value(&self, k: usize, idx: &[usize]) -> R {
        self.values[k * self.space_len() + self.flat_index(idx)]
    }

    pub fn time_slice(&self, k: usize) -> &[R] {
        let n = self.space_len();
        &self.values[k * n..(k + 1) * n]
    }

    /// Multilinear interpolation of one time slice.
    pub fn eval_slice(&self, k: usize, x: &[R]) -> R {
        let slice = self.time_slice(k);
        self.interp_space(slice, x)
    }

    fn interp_space(&self, slice: &[R], x: &[R]) -> R {
        let n = self.dim();
        let mut cell = vec![0usize; n];
        let mut w = vec![R::zero(); n];
        for a in 0..n {
            let step = self.step(a);
            let rel = (x[a] - self.grid.lo[a]) / step;
            let max_cell = self.nx[a] - 2;
            let c = rel.floor().to_usize().unwrap_or(0).min(max_cell);
            cell[a] = c;
            w[a] = (rel - R::from_usize(c).unwrap()).max(R::zero()).min(R::one());
        }
        let mut acc = R::zero();
        for corner in 0..(1usize << n) {
            let mut weight = R::one();
            let mut idx = 0usize;
            for a in 0..n {
                let hi = (corner >> a) & 1 == 1;
                weight = weight * if hi { w[a] } else { R::one() - w[a] };
                idx = idx * self.nx[a] + cell[a] + usize::from(hi);
            }
            if weight > R::zero() {
                acc += weight * slice[idx];
            }
        }
        acc
    }

    /// Multilinear interpolation in (t, x); clamps t to the mesh span.
    pub fn eval(&self, t: R, x: &[R]) -> R {
        let dt = self.dt();
        let rel = ((t - self.t0) / dt).max(R::zero());
        let k = rel.floor().to_usize().unwrap_or(0).min(self.nt - 2);
        let w = (rel - R::from_usize(k).unwrap()).max(R::zero()).min(R::one());
        let a = self.eval_slice(k, x);
        let b = self.eval_slice(k + 1, x);
        a + w * (b - a)
    }

    /// A time slice as a sampled function of x (interpolated).
    pub fn slice_fn(&self, t: R) -> SampledFunction<R> {
        let field = self.clone();
        SampledFunction::new(self.grid.clone(), move |x: &[R]| field.eval(t, x))
            .with_hint(crate::nonsmooth::SmoothnessHint::LocallyLipschitz)
    }

    /// The whole field as a sampled function of (t, x).
    pub fn space_time_fn(&self) -> SampledFunction<R> {
        let field = self.clone();
        let mut lo = vec![self.t0];
        lo.extend_from_slice(&self.grid.lo);
        let mut hi = vec![self.t1];
        hi.extend_from_slice(&self.grid.hi);
        SampledFunction::new(BoxDomain::new(lo, hi), move |y: &[R]| {
            field.eval(y[0], &y[1..])
        })
        .with_hint(crate::nonsmooth::SmoothnessHint::LocallyLipschitz)
    }

    /// Max |self - f| over the user-box grid nodes.
    pub fn max_error_against(&self, f: impl Fn(R, &[R]) -> R) -> R {
        let mut worst = R::zero();
        for k in 0..self.nt {
            let t = self.t_node(k);
            for idx in 0..self.space_len() {
                let x = self.node_coords(idx);
                if !self.user_box.contains(&x) {
                    continue;
                }
                worst = worst.max((self.values[k * self.space_len() + idx] - f(t, &x)).abs());
            }
        }
        worst
    }

    /// Max |self - other| over this field's user-box nodes (`other`
    /// interpolated); a Richardson-style error proxy against a finer solve.
    pub fn max_gap_to(&self, other: &ValueField<R>) -> R {
        self.max_error_against(|t, x| other.eval(t, x))
    }

    // -- serialization -------------------------------------------------------

    const MAGIC: &'static [u8; 8] = b"VFLD0001";

    /// Binary layout: magic, u64 dim, u64 nt, f64 t0, f64 t1, per axis
    /// (u64 nodes, f64 lo, f64 hi), then nt * prod(nodes) f64 values
    /// (little endian, row-major space, time-major overall).
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        w.write_all(Self::MAGIC)?;
        w.write_all(&(self.dim() as u64).to_le_bytes())?;
        w.write_all(&(self.nt as u64).to_le_bytes())?;
        w.write_all(&self.t0.lossy().to_le_bytes())?;
        w.write_all(&self.t1.lossy().to_le_bytes())?;
        for a in 0..self.dim() {
            w.write_all(&(self.nx[a] as u64).to_le_bytes())?;
            w.write_all(&self.grid.lo[a].lossy().to_le_bytes())?;
            w.write_all(&self.grid.hi[a].lossy().to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.lossy().to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<ValueField<R>> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(Error::Invalid("bad value-field magic".into()));
        }
        let mut u64buf = [0u8; 8];
        let mut read_u64 = |r: &mut BufReader<std::fs::File>| -> Result<u64> {
            r.read_exact(&mut u64buf)?;
            Ok(u64::from_le_bytes(u64buf))
        };
        let dim = read_u64(&mut r)? as usize;
        let nt = read_u64(&mut r)? as usize;
        let mut f64buf = [0u8; 8];
        let mut read_f64 = |r: &mut BufReader<std::fs::File>| -> Result<f64> {
            r.read_exact(&mut f64buf)?;
            Ok(f64::from_le_bytes(f64buf))
        };
        let t0 = R::of(read_f64(&mut r)?);
        let t1 = R::of(read_f64(&mut r)?);
        let mut nx = Vec::with_capacity(dim);
        let mut lo = Vec::with_capacity(dim);
        let mut hi = Vec::with_capacity(dim);
        for _ in 0..dim {
            nx.push(read_u64(&mut r)? as usize);
            lo.push(R::of(read_f64(&mut r)?));
            hi.push(R::of(read_f64(&mut r)?));
        }
        let n_space: usize = nx.iter().product();
        let mut values = Vec::with_capacity(nt * n_space);
        for _ in 0..nt * n_space {
            values.push(R::of(read_f64(&mut r)?));
        }
        let grid = BoxDomain::new(lo, hi);
        let mut field = ValueField {
            t0,
            t1,
            nt,
            user_box: grid.clone(),
            grid,
            nx,
            values,
            meta: SchemeMeta {
                scheme: "loaded".into(),
                dt: 0.0,
                steps: Vec::new(),
                velocity_directions: 0,
                speed_bound: 0.0,
                pad: 0.0,
                clamped_feet: 0,
            },
        };
        field.meta.dt = field.dt().lossy();
        field.meta.steps = (0..field.dim()).map(|a| field.step(a).lossy()).collect();
        Ok(field)
    }

    /// CSV twin of the binary format: `#`-prefixed header lines carrying the
    /// meshes, then one `t,x1..xn,value` row per node.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "# value field: dim {} nt {}", self.dim(), self.nt)?;
        writeln!(w, "# t: {} {} {}", self.t0.lossy(), self.t1.lossy(), self.nt)?;
        for a in 0..self.dim() {
            writeln!(
                w,
                "# x{}: {} {} {}",
                a + 1,
                self.grid.lo[a].lossy(),
                self.grid.hi[a].lossy(),
                self.nx[a]
            )?;
        }
        write!(w, "t")?;
        for a in 0..self.dim() {
            write!(w, ",x{}", a + 1)?;
        }
        writeln!(w, ",value")?;
        for k in 0..self.nt {
            let t = self.t_node(k);
            for idx in 0..self.space_len() {
                let x = self.node_coords(idx);
                write!(w, "{}", t.lossy())?;
                for xi in &x {
                    write!(w, ",{}", xi.lossy())?;
                }
                writeln!(w, ",{}", self.values[k * self.space_len() + idx].lossy())?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Semi-Lagrangian solve.
// ---------------------------------------------------------------------------

/// Backward semi-Lagrangian sweep:
/// `V(t_k, x) = min_v Vtilde(t_{k+1}, x + dt v)`
/// over support points of F(x) in a fixed direction fan plus the zero-bias
/// center, with multilinear interpolation and lowest-index tie-breaking.
pub fn solve_hjb<R: Real>(
    problem: &MayerProblem<R>,
    grid: &GridSpec,
    velocity_samples: usize,
) -> Result<ValueField<R>> {
    let n = problem.dim();
    if grid.space_nodes.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: grid.space_nodes.len(),
        });
    }
    if grid.time_nodes < 2 || grid.space_nodes.iter().any(|&m| m < 2) {
        return Err(Error::Invalid("grid needs at least 2 nodes per axis".into()));
    }

    // Pad the user box by the reachability envelope, keeping user steps.
    let padded = problem.padded_domain(grid.pad_safety)?;
    let mut nx = Vec::with_capacity(n);
    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    let mut pad_used = 0f64;
    for a in 0..n {
        let step = (problem.domain.hi[a] - problem.domain.lo[a])
            / R::from_usize(grid.space_nodes[a] - 1).unwrap();
        let pad = (problem.domain.lo[a] - padded.lo[a]).max(R::zero());
        let extra = (pad / step).ceil().to_usize().unwrap_or(0);
        pad_used = pad_used.max(pad.lossy());
        nx.push(grid.space_nodes[a] + 2 * extra);
        lo.push(problem.domain.lo[a] - step * R::from_usize(extra).unwrap());
        hi.push(problem.domain.hi[a] + step * R::from_usize(extra).unwrap());
    }
    let grid_box = BoxDomain::new(lo, hi);

    // CFL: one step may not jump over a cell.
    let speed = problem
        .dynamics
        .growth_constant(&grid_box, 9)?
        * (R::one()
            + grid_box
                .lo
                .iter()
                .chain(grid_box.hi.iter())
                .map(|&v| v.abs())
                .fold(R::zero(), R::max));
    let nt = grid.time_nodes;
    let dt = problem.duration() / R::from_usize(nt - 1).unwrap();
    let mut field = ValueField {
        t0: problem.t0,
        t1: problem.horizon,
        nt,
        grid: grid_box.clone(),
        user_box: problem.domain.clone(),
        nx,
        values: Vec::new(),
        meta: SchemeMeta {
            scheme: "semi-lagrangian".into(),
            dt: dt.lossy(),
            steps: Vec::new(),
            velocity_directions: velocity_samples,
            speed_bound: speed.lossy(),
            pad: pad_used,
            clamped_feet: 0,
        },
    };
    field.meta.steps = (0..n).map(|a| field.step(a).lossy()).collect();
    let min_step = field.min_step();
    if dt * speed > min_step {
        return Err(Error::CflViolation {
            lhs: (dt * speed).lossy(),
            rhs: min_step.lossy(),
        });
    }

    // The terminal cost must cover the padded grid.
    if !problem.terminal_cost.domain().contains(&grid_box.lo)
        || !problem.terminal_cost.domain().contains(&grid_box.hi)
    {
        return Err(Error::OutsideDomain {
            at: grid_box.lo.iter().map(|&v| v.lossy()).collect(),
        });
    }

    let n_space = field.space_len();
    let dirs = geom::unit_directions(n, velocity_samples.max(2));
    let mut values = vec![R::zero(); nt * n_space];

    // Terminal condition: exact samples of phi on the grid.
    for idx in 0..n_space {
        let x = field.node_coords(idx);
        values[(nt - 1) * n_space + idx] = problem.terminal_cost.value(&x);
    }

    // x-independent bodies admit one support evaluation per direction.
    let frozen: Option<Vec<Vec<R>>> = match &problem.dynamics {
        SetValuedMap::FixedBody { .. } => {
            let x0 = grid_box.center();
            let mut vs = Vec::with_capacity(dirs.len() + 1);
            for d in &dirs {
                vs.push(problem.dynamics.support(&x0, d)?.argmax_set[0].clone());
            }
            vs.push(problem.dynamics.center_point(&x0)?);
            Some(vs)
        }
        _ => None,
    };

    let mut clamped = 0usize;
    for k in (0..nt - 1).rev() {
        let (head, tail) = values.split_at_mut((k + 1) * n_space);
        let next = &tail[..n_space];
        let slice = &mut head[k * n_space..];
        for idx in 0..n_space {
            let x = field.node_coords(idx);
            let mut best = R::infinity();
            let mut consider = |v: &[R], clamped: &mut usize| {
                let mut foot = geom::add_scaled(&x, dt, v);
                if !grid_box.contains(&foot) {
                    foot = grid_box.clamp(&foot);
                    *clamped += 1;
                }
                let val = field.interp_space(next, &foot);
                // Strict comparison: ties resolve to the lowest sample index.
                if val < best {
                    best = val;
                }
            };
            match &frozen {
                Some(vs) => {
                    for v in vs {
                        consider(v, &mut clamped);
                    }
                }
                None => {
                    for d in &dirs {
                        let ev = problem.dynamics.support(&x, d)?;
                        consider(&ev.argmax_set[0], &mut clamped);
                    }
                    consider(&problem.dynamics.center_point(&x)?, &mut clamped);
                }
            }
            slice[idx] = best;
        }
    }
    field.values = values;
    field.meta.clamped_feet = clamped;
    Ok(field)
}

/// Random admissible trajectory with piecewise-constant velocities drawn as
/// convex combinations of support points and the zero-bias center; useful
/// for exercising the monotonicity half of the programming principle.
pub fn random_admissible_trajectory<R: Real>(
    problem: &MayerProblem<R>,
    t_start: R,
    x0: &[R],
    nodes: usize,
    rng: &mut impl rand::Rng,
) -> Result<Trajectory<R>> {
    let n = problem.dim();
    let nodes = nodes.max(2);
    let dt = (problem.horizon - t_start) / R::from_usize(nodes - 1).unwrap();
    let mut times = Vec::with_capacity(nodes);
    let mut states = Vec::with_capacity(nodes);
    let mut y = x0.to_vec();
    for k in 0..nodes {
        times.push(if k == nodes - 1 {
            problem.horizon
        } else {
            t_start + dt * R::from_usize(k).unwrap()
        });
        states.push(y.clone());
        if k + 1 == nodes {
            break;
        }
        let d = crate::dynamics::random_unit(n, rng);
        let extreme = problem.dynamics.support(&y, &d)?.argmax_set[0].clone();
        let center = problem.dynamics.center_point(&y)?;
        let lambda = R::of(rng.gen::<f64>());
        let v = geom::add_scaled(&center, lambda, &geom::sub(&extreme, &center));
        y = geom::add_scaled(&y, dt, &v);
    }
    Trajectory::new(times, states)
}

// ---------------------------------------------------------------------------
// Viscosity residual.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct ResidualStats {
    pub max: f64,
    pub mean: f64,
    /// (quantile, value) pairs at 0.5, 0.9, 0.99.
    pub quantiles: Vec<(f64, f64)>,
    pub used: usize,
    pub rejected: usize,
}

#[derive(Clone, Debug)]
pub struct ResidualOptions<R: Real> {
    /// A sample is rejected as nondifferentiable when a grid-scale second
    /// difference exceeds this fraction of the local gradient scale.
    pub kink_threshold: R,
}

impl<R: Real> Default for ResidualOptions<R> {
    fn default() -> Self {
        Self {
            kink_threshold: R::of(0.1),
        }
    }
}

/// Central-difference residual `|-V_t + H(x, -V_x)|` at interior sample
/// points that pass a grid-scale differentiability screen.
pub fn viscosity_residual<R: Real>(
    field: &ValueField<R>,
    dynamics: &SetValuedMap<R>,
    points: &[(R, Vec<R>)],
    opts: &ResidualOptions<R>,
) -> Result<ResidualStats> {
    let n = field.dim();
    let dt = field.dt();
    let mut residuals: Vec<f64> = Vec::new();
    let mut rejected = 0usize;
    for (t, x) in points {
        let t = *t;
        if t - dt < field.t_start() || t + dt > field.t_end() {
            rejected += 1;
            continue;
        }
        let inside = (0..n).all(|a| {
            let h = field.step(a);
            x[a] - h >= field.grid_box().lo[a] && x[a] + h <= field.grid_box().hi[a]
        });
        if !inside {
            rejected += 1;
            continue;
        }

        let v0 = field.eval(t, x);
        let vt = (field.eval(t + dt, x) - field.eval(t - dt, x)) / (dt + dt);
        let mut grad = vec![R::zero(); n];
        let mut smooth = (field.eval(t + dt, x) + field.eval(t - dt, x) - v0 - v0).abs() / dt
            <= opts.kink_threshold * (R::one() + vt.abs());
        for a in 0..n {
            let h = field.step(a);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[a] += h;
            xm[a] -= h;
            let up = field.eval(t, &xp);
            let um = field.eval(t, &xm);
            grad[a] = (up - um) / (h + h);
            if (up + um - v0 - v0).abs() / h > opts.kink_threshold * (R::one() + grad[a].abs()) {
                smooth = false;
            }
        }
        if !smooth {
            rejected += 1;
            continue;
        }
        let minus_grad: Vec<R> = grad.iter().map(|&g| -g).collect();
        let h_val = dynamics.support(x, &minus_grad)?.value;
        residuals.push(((h_val - vt).abs()).lossy());
    }
    if residuals.is_empty() {
        return Err(Error::NoDifferentiabilityPoints { at: vec![] });
    }
    residuals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let used = residuals.len();
    let mean = residuals.iter().sum::<f64>() / used as f64;
    let q = |p: f64| residuals[((used - 1) as f64 * p).round() as usize];
    Ok(ResidualStats {
        max: residuals[used - 1],
        mean,
        quantiles: vec![(0.5, q(0.5)), (0.9, q(0.9)), (0.99, q(0.99))],
        used,
        rejected,
    })
}

// ---------------------------------------------------------------------------
// Dynamic programming principle check.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct DppReport {
    /// Most negative increment of s -> V(s, y(s)) (>= 0 means monotone).
    pub max_negative_increment: f64,
    pub max_abs_increment: f64,
    pub total_variation: f64,
    /// Worst admissibility excess of mesh velocities over F (support gap).
    pub admissibility_excess: f64,
}

#[derive(Clone, Debug)]
pub struct DppOptions<R: Real> {
    /// Tolerance for the velocity-inclusion check.
    pub admissibility_tol: R,
    pub reject_inadmissible: bool,
}

impl<R: Real> Default for DppOptions<R> {
    fn default() -> Self {
        Self {
            admissibility_tol: R::of(1e-6),
            reject_inadmissible: true,
        }
    }
}

/// Validates admissibility of the trajectory (mesh velocities inside F via
/// the support criterion) and reports monotonicity data of s -> V(s, y(s)).
pub fn dpp_check<R: Real>(
    field: &ValueField<R>,
    dynamics: &SetValuedMap<R>,
    trajectory: &Trajectory<R>,
    opts: &DppOptions<R>,
) -> Result<DppReport> {
    let n = trajectory.dim();
    let dirs = geom::unit_directions(n, geom::default_direction_count(n));
    let times = trajectory.times();
    let states = trajectory.states();
    let mut excess = R::zero();
    for k in 0..times.len() - 1 {
        let dt = times[k + 1] - times[k];
        let v = geom::scaled(&geom::sub(&states[k + 1], &states[k]), R::one() / dt);
        // Inclusion in the convex set F(y): <v, d> <= H(y, d) for all d.
        let mut worst = R::neg_infinity();
        for d in &dirs {
            let h0 = dynamics.support(&states[k], d)?.value;
            let h1 = dynamics.support(&states[k + 1], d)?.value;
            worst = worst.max(geom::dot(&v, d) - h0.max(h1));
        }
        excess = excess.max(worst);
        if opts.reject_inadmissible && worst > opts.admissibility_tol {
            return Err(Error::Inadmissible {
                index: k,
                excess: worst.lossy(),
            });
        }
    }

    let vals: Vec<R> = times
        .iter()
        .zip(states)
        .map(|(&t, y)| field.eval(t, y))
        .collect();
    let mut max_neg = R::zero();
    let mut max_abs = R::zero();
    let mut tv = R::zero();
    for w in vals.windows(2) {
        let inc = w[1] - w[0];
        max_neg = max_neg.min(inc);
        max_abs = max_abs.max(inc.abs());
        tv += inc.abs();
    }
    Ok(DppReport {
        max_negative_increment: max_neg.lossy(),
        max_abs_increment: max_abs.lossy(),
        total_variation: tv.lossy(),
        admissibility_excess: excess.lossy(),
    })
}
