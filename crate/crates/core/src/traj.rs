//! Time-sampled paths in R^n with linear interpolation between mesh nodes.
//! Shared by the grid solver (trajectory checks) and the characteristic
//! integrators (state and dual arcs).

use crate::error::{Error, Result};
use crate::geom;
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct Trajectory<R: Real> {
    times: Vec<R>,
    states: Vec<Vec<R>>,
}

impl<R: Real> Trajectory<R> {
    pub fn new(times: Vec<R>, states: Vec<Vec<R>>) -> Result<Self> {
        if times.len() != states.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                got: states.len(),
            });
        }
        if times.len() < 2 {
            return Err(Error::MeshTooShort {
                got: times.len(),
                min: 2,
            });
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid("time mesh must be strictly increasing".into()));
        }
        Ok(Self { times, states })
    }

    /// Uniform mesh on `[t0, t1]` sampled from a callback.
    pub fn from_fn(t0: R, t1: R, nodes: usize, f: impl Fn(R) -> Vec<R>) -> Result<Self> {
        let nodes = nodes.max(2);
        let dt = (t1 - t0) / R::from_usize(nodes - 1).unwrap();
        let times: Vec<R> = (0..nodes)
            .map(|k| {
                if k == nodes - 1 {
                    t1
                } else {
                    t0 + dt * R::from_usize(k).unwrap()
                }
            })
            .collect();
        let states = times.iter().map(|&t| f(t)).collect();
        Self::new(times, states)
    }

    pub fn times(&self) -> &[R] {
        &self.times
    }

    pub fn states(&self) -> &[Vec<R>] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn t_start(&self) -> R {
        self.times[0]
    }

    pub fn t_end(&self) -> R {
        *self.times.last().unwrap()
    }

    pub fn start(&self) -> &[R] {
        &self.states[0]
    }

    pub fn end(&self) -> &[R] {
        self.states.last().unwrap()
    }

    /// Linear interpolation; clamps outside the mesh span.
    pub fn at(&self, t: R) -> Vec<R> {
        if t <= self.times[0] {
            return self.states[0].clone();
        }
        if t >= self.t_end() {
            return self.end().to_vec();
        }
        let k = match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(k) => return self.states[k].clone(),
            Err(k) => k - 1,
        };
        let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        self.states[k]
            .iter()
            .zip(&self.states[k + 1])
            .map(|(&a, &b)| a + w * (b - a))
            .collect()
    }

    /// Mesh velocities by central differences, one-sided at the endpoints.
    pub fn velocities(&self) -> Vec<Vec<R>> {
        let n = self.len();
        (0..n)
            .map(|k| {
                let (a, b) = if k == 0 {
                    (k, k + 1)
                } else if k == n - 1 {
                    (k - 1, k)
                } else {
                    (k - 1, k + 1)
                };
                let dt = self.times[b] - self.times[a];
                geom::scaled(&geom::sub(&self.states[b], &self.states[a]), R::one() / dt)
            })
            .collect()
    }

    /// Largest pointwise distance to another path compared on this mesh.
    pub fn sup_distance(&self, other: &Trajectory<R>) -> R {
        self.times
            .iter()
            .zip(&self.states)
            .map(|(&t, s)| geom::dist(s, &other.at(t)))
            .fold(R::zero(), R::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_is_linear() {
        let tr = Trajectory::from_fn(0.0f64, 1.0, 11, |t| vec![2.0 * t, -t]).unwrap();
        let p = tr.at(0.55);
        assert!((p[0] - 1.1).abs() < 1e-12);
        assert!((p[1] + 0.55).abs() < 1e-12);
    }

    #[test]
    fn velocities_match_slope() {
        let tr = Trajectory::from_fn(0.0f64, 1.0, 21, |t| vec![3.0 * t + 1.0]).unwrap();
        for v in tr.velocities() {
            assert!((v[0] - 3.0).abs() < 1e-10);
        }
    }

    #[test]
    fn sup_distance_between_rays() {
        let a = Trajectory::from_fn(0.0f64, 1.0, 11, |t| vec![t]).unwrap();
        let b = Trajectory::from_fn(0.0f64, 1.0, 11, |t| vec![-t]).unwrap();
        assert!((a.sup_distance(&b) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_short_or_unsorted_mesh() {
        assert!(Trajectory::new(vec![0.0], vec![vec![1.0]]).is_err());
        assert!(Trajectory::new(vec![0.0, 0.0], vec![vec![1.0], vec![1.0]]).is_err());
    }
}
