//! Tracing the orbits that sweep out one unstable manifold `W^u(O_k)`.
//!
//! Orbits are traced inside the restricted triple `(k, k+1, k+2)` in
//! logarithmic coordinates, so orbits hugging a coordinate plane keep full
//! relative accuracy in their small components.
//!
//! An orbit is labelled by the angle `phi = atan2(x_{k+1}, x_{k+2})` at which
//! it first reaches `max(x_{k+1}, x_{k+2}) = r_phi`. The seed on the linear
//! unstable eigenplane that realises a requested `phi` is found by shooting.
//! `phi = 0` is the heteroclinic orbit to `O_{k+2}` in the `(k, k+2)` plane
//! and `phi = pi/2` the composite through `O_{k+1}`.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry3d::{restrict_triple, TripleParams};
use crate::integrator::{Formulation, Method, Stepper};
use crate::model::SystemParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceOptions {
    /// Seed radius relative to `sigma_k`.
    pub delta0_rel: f64,
    /// An orbit is considered arrived once within this sup distance of the
    /// target saddle, relative to its `sigma`.
    pub arrival_rel: f64,
    /// Labelling radius relative to `min(sigma_{k+1}, sigma_{k+2})`.
    pub label_radius_rel: f64,
    pub t_max: f64,
    pub angle_tol: f64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            delta0_rel: 1e-4,
            arrival_rel: 1e-7,
            label_radius_rel: 0.25,
            t_max: 1e4,
            angle_tol: 1e-10,
        }
    }
}

/// A traced orbit in triple coordinates with its cumulative arclength.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Orbit {
    pub phi: f64,
    pub points: Vec<[f64; 3]>,
    pub cumulative: Vec<f64>,
}

impl Orbit {
    fn from_points(phi: f64, points: Vec<[f64; 3]>) -> Self {
        let mut cumulative = Vec::with_capacity(points.len());
        let mut acc = 0.0;
        for (i, p) in points.iter().enumerate() {
            if i > 0 {
                acc += dist3(&points[i - 1], p);
            }
            cumulative.push(acc);
        }
        Self {
            phi,
            points,
            cumulative,
        }
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap_or(&0.0)
    }

    /// Point at normalised arclength `u` in `[0, 1]`, by linear interpolation.
    pub fn at_u(&self, u: f64) -> [f64; 3] {
        let d = u.clamp(0.0, 1.0) * self.length();
        let i = self.cumulative.partition_point(|&c| c < d);
        if i == 0 {
            return self.points[0];
        }
        if i >= self.points.len() {
            return *self.points.last().unwrap();
        }
        let (c0, c1) = (self.cumulative[i - 1], self.cumulative[i]);
        let w = if c1 > c0 { (d - c0) / (c1 - c0) } else { 1.0 };
        let (a, b) = (self.points[i - 1], self.points[i]);
        [0, 1, 2].map(|m| a[m] + w * (b[m] - a[m]))
    }

    fn concat(phi: f64, first: &Orbit, second: &Orbit) -> Orbit {
        let mut pts = first.points.clone();
        pts.extend_from_slice(&second.points[1..]);
        Orbit::from_points(phi, pts)
    }
}

pub(crate) fn dist3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// All orbits traced for one saddle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrbitFan {
    pub k: usize,
    /// Original indices `(k, k+1, k+2)`.
    pub triple: [usize; 3],
    pub angles: Vec<f64>,
    /// One orbit per angle; the last is the composite `O_k -> O_{k+1} -> O_{k+2}`.
    pub orbits: Vec<Orbit>,
    pub arclengths: Vec<f64>,
    /// Length of the edge `O_k -> O_{k+1}`.
    pub d_xy: f64,
    /// Length of the edge `O_{k+1} -> O_{k+2}`.
    pub d_yz: f64,
    /// The two halves of the composite orbit.
    pub edge_xy: Orbit,
    pub edge_yz: Orbit,
    /// `O_{k+1} -> O_{k+2}` traced again from a different seed radius, used
    /// to cross-check the stitching with the next fan.
    pub edge_yz_check: Orbit,
}

impl OrbitFan {
    /// `b = D_xy / D_{pi/2}`, the chart position of `O_{k+1}`.
    pub fn b(&self) -> f64 {
        self.d_xy / (self.d_xy + self.d_yz)
    }
}

/// Tracer bound to one restricted triple.
pub(crate) struct FanTracer {
    pub(crate) k: usize,
    pub(crate) t: TripleParams,
    opts: TraceOptions,
    label_radius: f64,
}

enum Stop {
    /// Stop when `max(x2, x3)` first reaches the labelling radius.
    Label,
    /// Record until within the arrival tolerance of axis equilibrium `axis`.
    Arrive(usize),
}

impl FanTracer {
    pub(crate) fn new(params: &SystemParams, k: usize, opts: TraceOptions) -> Result<Self> {
        params.check_cycle_index(k)?;
        for (name, v) in [
            ("delta0", opts.delta0_rel),
            ("arrival tolerance", opts.arrival_rel),
            ("t_max", opts.t_max),
            ("angle tolerance", opts.angle_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive")));
            }
        }
        if !(opts.label_radius_rel > 0.0 && opts.label_radius_rel < 1.0) {
            return Err(Error::InvalidInput("label radius must lie in (0, 1)".into()));
        }
        let t = restrict_triple(params, k);
        let label_radius = opts.label_radius_rel * t.s(2).min(t.s(3));
        Ok(Self {
            k,
            t,
            opts,
            label_radius,
        })
    }

    fn fail(&self, phi: f64, reason: impl Into<String>) -> Error {
        Error::TraceFailure {
            k: self.k,
            phi,
            reason: reason.into(),
        }
    }

    fn axis_point(&self, axis: usize) -> [f64; 3] {
        let mut p = [0.0; 3];
        p[axis] = self.t.sigma[axis];
        p
    }

    /// Unstable eigenvector at axis equilibrium `axis` for direction `dir`,
    /// `e_dir + c e_axis`, from the triangular Jacobian.
    fn eigvec(&self, axis: usize, dir: usize) -> [f64; 3] {
        let sa = self.t.sigma[axis];
        let lam = self.t.sigma[dir] - self.t.rho[dir][axis] * sa;
        let mut v = [0.0; 3];
        v[dir] = 1.0;
        v[axis] = -sa * self.t.rho[axis][dir] / (lam + sa);
        v
    }

    /// Seed on the eigenplane at `O_k`: weights `a` on the `k+2` direction
    /// and `b` on `k+1`, scaled to sup-norm `delta0`.
    fn seed(&self, s: f64, radius_scale: f64) -> [f64; 3] {
        let (a, b) = if s >= 0.0 { ((-s).exp(), 1.0) } else { (1.0, s.exp()) };
        let v2 = self.eigvec(0, 1);
        let v3 = self.eigvec(0, 2);
        let w = [0, 1, 2].map(|m| a * v3[m] + b * v2[m]);
        let norm = w.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let r = self.opts.delta0_rel * self.t.s(1) * radius_scale;
        let o = self.axis_point(0);
        [0, 1, 2].map(|m| o[m] + r * w[m] / norm)
    }

    fn edge_seed(&self, from: usize, dir: usize, radius_scale: f64) -> [f64; 3] {
        let v = self.eigvec(from, dir);
        let norm = v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
        let r = self.opts.delta0_rel * self.t.sigma[from] * radius_scale;
        let o = self.axis_point(from);
        [0, 1, 2].map(|m| o[m] + r * v[m] / norm)
    }

    /// Integrates from `x0`. For [`Stop::Label`] returns the label angle and
    /// no points; for [`Stop::Arrive`] returns the sampled polyline
    /// (excluding the equilibria themselves).
    fn run(&self, x0: [f64; 3], stop: Stop, phi: f64) -> Result<(f64, Vec<[f64; 3]>)> {
        let method = Method::Adaptive {
            rtol: 1e-11,
            atol: 1e-11,
            h_max: 0.25,
        };
        let mut st = Stepper::new(&self.t, Formulation::Log, method, 0.0, &x0);
        let mut pts = vec![x0];
        let mut x = [0.0; 3];
        let (target, tol) = match stop {
            Stop::Arrive(axis) => (self.axis_point(axis), self.opts.arrival_rel * self.t.sigma[axis]),
            Stop::Label => ([0.0; 3], 0.0),
        };
        let sup = |a: &[f64; 3], b: &[f64; 3]| (0..3).fold(0.0_f64, |m, i| m.max((a[i] - b[i]).abs()));
        let mut quiet_steps = 0usize;
        while st.t < self.opts.t_max {
            let seg = st.step(self.opts.t_max)?;
            match stop {
                Stop::Label => {
                    st.rhs.to_state_into(&seg.y1, &mut x);
                    if x[1].max(x[2]) >= self.label_radius {
                        let g = |tt: f64| {
                            let mut y = [0.0; 3];
                            st.rhs.to_state_into(&seg.interpolate(tt), &mut y);
                            (y[1].max(y[2]) - self.label_radius, y)
                        };
                        let (mut a, mut b) = (seg.t0, seg.t1);
                        while b - a > 1e-13 * b.max(1.0) {
                            let m = 0.5 * (a + b);
                            if m <= a || m >= b {
                                break;
                            }
                            if g(m).0 >= 0.0 {
                                b = m;
                            } else {
                                a = m;
                            }
                        }
                        let y = g(b).1;
                        return Ok((y[1].atan2(y[2]), Vec::new()));
                    }
                }
                Stop::Arrive(_) => {
                    const SUB: usize = 4;
                    for i in 1..=SUB {
                        let tt = seg.t0 + (seg.t1 - seg.t0) * i as f64 / SUB as f64;
                        if i == SUB {
                            st.rhs.to_state_into(&seg.y1, &mut x);
                        } else {
                            st.rhs.to_state_into(&seg.interpolate(tt), &mut x);
                        }
                        if sup(&x, &target) < tol {
                            pts.push(x);
                            return Ok((phi, pts));
                        }
                        pts.push(x);
                    }
                }
            }
            // A trajectory parked away from the target has found some other
            // attractor.
            let speed = self.t.field(&x).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if speed < 1e-14 {
                quiet_steps += 1;
                if quiet_steps > 50 {
                    return Err(self.fail(phi, format!("orbit stalled at {x:?} away from the target")));
                }
            } else {
                quiet_steps = 0;
            }
        }
        Err(self.fail(phi, format!("target not reached by t = {}", self.opts.t_max)))
    }

    /// Label angle of the orbit seeded with log-ratio `s`.
    fn label_angle(&self, s: f64, phi: f64) -> Result<f64> {
        Ok(self.run(self.seed(s, 1.0), Stop::Label, phi)?.0)
    }

    /// Seed log-ratio whose orbit carries label `phi`, for `0 < phi < pi/2`.
    fn shoot(&self, phi: f64) -> Result<f64> {
        const S_CAP: f64 = 700.0;
        let f = |s: f64| -> Result<f64> { Ok(self.label_angle(s, phi)? - phi) };
        let (mut lo, mut hi) = (-4.0, 4.0);
        let mut flo = f(lo)?;
        while flo > 0.0 {
            lo = 2.0 * lo - 4.0;
            if lo < -S_CAP {
                return Err(self.fail(phi, "cannot bracket label angle from below"));
            }
            flo = f(lo)?;
        }
        let mut fhi = f(hi)?;
        while fhi < 0.0 {
            hi = 2.0 * hi + 4.0;
            if hi > S_CAP {
                return Err(self.fail(phi, "cannot bracket label angle from above"));
            }
            fhi = f(hi)?;
        }
        // Illinois variant of regula falsi.
        let mut side = 0i8;
        for _ in 0..200 {
            let s = (lo * fhi - hi * flo) / (fhi - flo);
            let s = if s.is_finite() && s > lo && s < hi {
                s
            } else {
                0.5 * (lo + hi)
            };
            let fs = f(s)?;
            if fs.abs() < self.opts.angle_tol || hi - lo < 1e-13 {
                return Ok(s);
            }
            if fs < 0.0 {
                lo = s;
                flo = fs;
                if side == -1 {
                    fhi *= 0.5;
                }
                side = -1;
            } else {
                hi = s;
                fhi = fs;
                if side == 1 {
                    flo *= 0.5;
                }
                side = 1;
            }
        }
        Err(self.fail(phi, "shooting did not converge"))
    }

    fn with_endpoints(&self, from: usize, to: usize, phi: f64, mut pts: Vec<[f64; 3]>) -> Orbit {
        pts.insert(0, self.axis_point(from));
        pts.push(self.axis_point(to));
        Orbit::from_points(phi, pts)
    }

    /// Interior orbit with label `phi`.
    pub(crate) fn orbit_at(&self, phi: f64) -> Result<Orbit> {
        let seed = if phi == 0.0 {
            self.seed(f64::NEG_INFINITY, 1.0)
        } else {
            self.seed(self.shoot(phi)?, 1.0)
        };
        let (_, pts) = self.run(seed, Stop::Arrive(2), phi)?;
        Ok(self.with_endpoints(0, 2, phi, pts))
    }

    /// Heteroclinic edge between consecutive axis equilibria of the triple.
    pub(crate) fn edge(&self, from: usize, radius_scale: f64) -> Result<Orbit> {
        let seed = self.edge_seed(from, from + 1, radius_scale);
        let (_, pts) = self.run(seed, Stop::Arrive(from + 1), FRAC_PI_2)?;
        Ok(self.with_endpoints(from, from + 1, FRAC_PI_2, pts))
    }

    /// Embeds a triple point into the full state space.
    pub(crate) fn embed(&self, n: usize, x: &[f64; 3]) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (m, &i) in self.t.indices.iter().enumerate() {
            out[i - 1] = x[m];
        }
        out
    }

    pub(crate) fn composite(&self, xy: &Orbit, yz: &Orbit) -> Orbit {
        Orbit::concat(FRAC_PI_2, xy, yz)
    }
}

/// Uniform label grid `phi_j = (j/(m-1)) pi/2`.
pub fn angle_grid(m: usize) -> Vec<f64> {
    (0..m)
        .map(|j| {
            if j + 1 == m {
                FRAC_PI_2
            } else {
                j as f64 / (m - 1) as f64 * FRAC_PI_2
            }
        })
        .collect()
}

/// Traces `m_angles` orbits of `W^u(O_k)` on the uniform label grid.
pub fn trace_fan(params: &SystemParams, k: usize, m_angles: usize, opts: &TraceOptions) -> Result<OrbitFan> {
    if m_angles < 3 {
        return Err(Error::InvalidInput(format!("m_angles = {m_angles} must be at least 3")));
    }
    let tracer = FanTracer::new(params, k, *opts)?;
    let angles = angle_grid(m_angles);
    let mut orbits = Vec::with_capacity(m_angles);
    for &phi in &angles[..m_angles - 1] {
        orbits.push(tracer.orbit_at(phi)?);
    }
    fan_from_parts(&tracer, angles, orbits)
}

pub(crate) fn fan_from_parts(tracer: &FanTracer, angles: Vec<f64>, mut orbits: Vec<Orbit>) -> Result<OrbitFan> {
    let edge_xy = tracer.edge(0, 1.0)?;
    let edge_yz = tracer.edge(1, 1.0)?;
    let edge_yz_check = tracer.edge(1, 0.5)?;
    orbits.push(tracer.composite(&edge_xy, &edge_yz));
    let arclengths = orbits.iter().map(Orbit::length).collect();
    Ok(OrbitFan {
        k: tracer.k,
        triple: tracer.t.indices,
        angles,
        orbits,
        arclengths,
        d_xy: edge_xy.length(),
        d_yz: edge_yz.length(),
        edge_xy,
        edge_yz,
        edge_yz_check,
    })
}
