//! The three-dimensional restriction to a triple `(k, k+1, k+2)`.
//!
//! Inside the invariant coordinate space spanned by three consecutive cycle
//! directions the system reduces to a 3-species competition model with a
//! saddle on each axis and a sink at `(0, 0, sigma_3)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrator::{Formulation, Method, Stepper};
use crate::model::{SystemParams, VectorField};

/// Growth rates and inhibitions of a restricted triple, relabelled `1, 2, 3`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TripleParams {
    /// Original 1-based indices `(k, k+1, k+2)`.
    pub indices: [usize; 3],
    pub sigma: [f64; 3],
    /// `rho[i][j]`, 0-based, unit diagonal.
    pub rho: [[f64; 3]; 3],
}

impl TripleParams {
    pub fn new(sigma: [f64; 3], rho: [[f64; 3]; 3]) -> Result<Self> {
        for (i, s) in sigma.iter().enumerate() {
            if !(s.is_finite() && *s > 0.0) {
                return Err(Error::InvalidInput(format!("sigma[{}] = {s} must be positive", i + 1)));
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                let r = rho[i][j];
                if !(r.is_finite() && r > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "rho[{}][{}] = {r} must be positive",
                        i + 1,
                        j + 1
                    )));
                }
            }
            if rho[i][i] != 1.0 {
                return Err(Error::InvalidInput(format!("rho[{}][{}] must equal 1", i + 1, i + 1)));
            }
        }
        Ok(Self {
            indices: [1, 2, 3],
            sigma,
            rho,
        })
    }

    /// 1-based accessor matching the usual notation `rho_ij`.
    pub fn r(&self, i: usize, j: usize) -> f64 {
        self.rho[i - 1][j - 1]
    }

    pub fn s(&self, i: usize) -> f64 {
        self.sigma[i - 1]
    }

    pub fn field(&self, x: &[f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        self.eval(x, &mut out);
        out
    }

    pub fn sink(&self) -> [f64; 3] {
        [0.0, 0.0, self.sigma[2]]
    }

    /// Checks the eigenvalue sign pattern (ev1)–(ev5); returns the first
    /// failing label with its margin (positive = satisfied).
    pub fn eigen_preconditions(&self) -> Vec<(&'static str, f64)> {
        let (s1, s2, s3) = (self.s(1), self.s(2), self.s(3));
        vec![
            ("ev1", (s2 - self.r(2, 1) * s1).min(s3 - self.r(3, 1) * s1)),
            ("ev2", s3 - self.r(3, 2) * s2),
            ("ev3", -(s1 - self.r(1, 2) * s2)),
            ("ev4", -(s1 - self.r(1, 3) * s3)),
            ("ev5", -(s2 - self.r(2, 3) * s3)),
        ]
    }

    fn check_eigen_preconditions(&self) -> Result<()> {
        for (label, margin) in self.eigen_preconditions() {
            if !(margin > 0.0) {
                return Err(Error::Precondition(format!(
                    "{label} fails for triple {:?} (margin {margin:e})",
                    self.indices
                )));
            }
        }
        Ok(())
    }

    /// Height of `P_3` above `(x1, x2)`: `sigma_3 - rho_31 x1 - rho_32 x2`.
    pub fn p3_height(&self, x1: f64, x2: f64) -> f64 {
        self.s(3) - self.r(3, 1) * x1 - self.r(3, 2) * x2
    }
}

impl VectorField for TripleParams {
    fn dim(&self) -> usize {
        3
    }

    fn growth(&self, i: usize, x: &[f64]) -> f64 {
        self.sigma[i] - self.rho[i][0] * x[0] - self.rho[i][1] * x[1] - self.rho[i][2] * x[2]
    }
}

/// Extracts coordinates `(k, k+1, k+2)` mod `p`.
pub fn restrict_triple(params: &SystemParams, k: usize) -> TripleParams {
    let idx = [k, params.cyc(k, 1), params.cyc(k, 2)];
    let mut rho = [[1.0; 3]; 3];
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            rho[a][b] = params.rho(i, j);
        }
    }
    TripleParams {
        indices: idx,
        sigma: idx.map(|i| params.sigma_of(i)),
        rho,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PlaneLabel {
    P1,
    P2,
    P3,
    Sigma,
}

/// A plane meeting each positive axis once, stored by its intercepts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Plane3 {
    pub label: PlaneLabel,
    pub intercepts: [f64; 3],
}

impl Plane3 {
    /// Graph height over `(x1, x2)`, possibly negative outside the octant face.
    pub fn height(&self, x1: f64, x2: f64) -> f64 {
        let [a1, a2, a3] = self.intercepts;
        a3 * (1.0 - x1 / a1 - x2 / a2)
    }
}

/// Nullcline planes `P_1`, `P_2`, `P_3` and the plane `Sigma` through the
/// three axis equilibria.
pub fn planes(t: &TripleParams) -> [Plane3; 4] {
    let (s1, s2, s3) = (t.s(1), t.s(2), t.s(3));
    [
        Plane3 {
            label: PlaneLabel::P1,
            intercepts: [s1, s1 / t.r(1, 2), s1 / t.r(1, 3)],
        },
        Plane3 {
            label: PlaneLabel::P2,
            intercepts: [s2 / t.r(2, 1), s2, s2 / t.r(2, 3)],
        },
        Plane3 {
            label: PlaneLabel::P3,
            intercepts: [s3 / t.r(3, 1), s3 / t.r(3, 2), s3],
        },
        Plane3 {
            label: PlaneLabel::Sigma,
            intercepts: [s1, s2, s3],
        },
    ]
}

/// `s` dominates `r` when every intercept of `r` is at most that of `s` and
/// at least one is strictly smaller.
pub fn dominates(s: &Plane3, r: &Plane3) -> bool {
    let le = (0..3).all(|i| r.intercepts[i] <= s.intercepts[i]);
    let strict = (0..3).any(|i| r.intercepts[i] < s.intercepts[i]);
    le && strict
}

/// Extremes of `x2'` and of the outward flux `rho_31 x1' + rho_32 x2'` over a
/// cell-centred grid of `P_3` restricted to the box `B`.
#[derive(Debug, Clone, Serialize)]
pub struct BoxScan {
    pub grid: usize,
    pub points: usize,
    pub max_dx2: f64,
    pub max_flux: f64,
    /// `(x1, x2, x3)` where `max_flux` is attained.
    pub argmax_flux: [f64; 3],
}

pub fn p3_box_scan(t: &TripleParams, grid: usize) -> BoxScan {
    let (s1, s2) = (t.s(1), t.s(2));
    let mut scan = BoxScan {
        grid,
        points: 0,
        max_dx2: f64::NEG_INFINITY,
        max_flux: f64::NEG_INFINITY,
        argmax_flux: [f64::NAN; 3],
    };
    for i in 0..grid {
        let x1 = (i as f64 + 0.5) * s1 / grid as f64;
        for j in 0..grid {
            let x2 = (j as f64 + 0.5) * s2 / grid as f64;
            let x3 = t.p3_height(x1, x2);
            if !(x3 > 0.0) {
                continue;
            }
            let x = [x1, x2, x3];
            let d = t.field(&x);
            let flux = t.r(3, 1) * d[0] + t.r(3, 2) * d[1];
            scan.points += 1;
            scan.max_dx2 = scan.max_dx2.max(d[1]);
            if flux > scan.max_flux {
                scan.max_flux = flux;
                scan.argmax_flux = x;
            }
        }
    }
    scan
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RegionCriterion {
    /// `sigma_2/rho_21 <= sigma_3/rho_31`.
    InterceptOrder,
    /// Strictly negative outward flux on the whole grid.
    FluxGrid,
    None,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegionVerdict {
    pub holds: bool,
    pub criterion: RegionCriterion,
    pub intercept_margin: f64,
    /// Largest outward flux on the grid; negative means inward everywhere.
    pub witness_max_flux: f64,
    pub witness_point: [f64; 3],
    pub grid_points: usize,
    pub planes: [Plane3; 4],
}

/// Decides whether `P_3` and the coordinate planes bound a positively
/// invariant region.
pub fn invariant_region_check(t: &TripleParams) -> Result<RegionVerdict> {
    t.check_eigen_preconditions()?;
    let intercept_margin = t.s(3) / t.r(3, 1) - t.s(2) / t.r(2, 1);
    let scan = p3_box_scan(t, crate::conditions::BOX_SCAN_GRID);
    let criterion = if intercept_margin >= 0.0 {
        RegionCriterion::InterceptOrder
    } else if scan.points > 0 && scan.max_flux < 0.0 {
        RegionCriterion::FluxGrid
    } else {
        RegionCriterion::None
    };
    Ok(RegionVerdict {
        holds: criterion != RegionCriterion::None,
        criterion,
        intercept_margin,
        witness_max_flux: scan.max_flux,
        witness_point: scan.argmax_flux,
        grid_points: scan.points,
        planes: planes(t),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SinkVerdict {
    pub converged: bool,
    pub t_hit: Option<f64>,
    pub final_distance: f64,
}

pub const DEFAULT_SINK_TOL: f64 = 1e-6;
pub const DEFAULT_SINK_TMAX: f64 = 500.0;

/// Integrates the triple from `x0` and reports when the sup distance to
/// `(0, 0, sigma_3)` first drops below `tol`.
pub fn converge_to_sink(t: &TripleParams, x0: [f64; 3], tol: f64, t_max: f64) -> Result<SinkVerdict> {
    if !(tol > 0.0 && t_max > 0.0) {
        return Err(Error::InvalidInput("tol and t_max must be positive".into()));
    }
    if x0.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Precondition(format!("x0 = {x0:?} is not in the closed orthant")));
    }
    if !(x0[2] > 0.0) {
        return Err(Error::Precondition("x0 lies in the plane x3 = 0".into()));
    }
    if x0[2] > t.p3_height(x0[0], x0[1]) + 1e-12 {
        return Err(Error::Precondition(format!("x0 = {x0:?} lies above P_3")));
    }
    let sink = t.sink();
    let dist = |x: &[f64]| x.iter().zip(&sink).map(|(a, b)| (a - b).abs()).fold(0.0_f64, f64::max);
    if dist(&x0) < tol {
        return Ok(SinkVerdict {
            converged: true,
            t_hit: Some(0.0),
            final_distance: dist(&x0),
        });
    }
    let mut st = Stepper::new(t, Formulation::Linear, Method::default(), 0.0, &x0);
    let mut x = [0.0; 3];
    while st.t < t_max {
        let seg = st.step(t_max)?;
        st.rhs.to_state_into(&seg.y1, &mut x);
        if dist(&x) < tol {
            let (mut a, mut b) = (seg.t0, seg.t1);
            while b - a > 1e-12 * b.max(1.0) {
                let m = 0.5 * (a + b);
                st.rhs.to_state_into(&seg.interpolate(m), &mut x);
                if dist(&x) < tol {
                    b = m;
                } else {
                    a = m;
                }
            }
            st.rhs.to_state_into(&seg.y1, &mut x);
            return Ok(SinkVerdict {
                converged: true,
                t_hit: Some(b),
                final_distance: dist(&x),
            });
        }
    }
    Ok(SinkVerdict {
        converged: false,
        t_hit: None,
        final_distance: dist(&st.state()),
    })
}
