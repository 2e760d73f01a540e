//! Forward integration with saddle-neighbourhood events.
//!
//! Events are found by sign changes of scalar event functions across each
//! accepted step and refined by bisection on the dense-output interpolant.

mod stepper;

pub(crate) use stepper::Stepper;
pub use stepper::{Formulation, Method, Segment, CLAMP_TOL};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{SystemParams, VectorField};

/// Sup-norm box of radius `delta` around `O_k`, with entry half-width
/// `epsilon` for the section `S_0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddleNeighborhood {
    pub k: usize,
    pub delta: f64,
    pub epsilon: f64,
}

impl SaddleNeighborhood {
    pub fn new(k: usize, delta: f64, epsilon: f64) -> Result<Self> {
        if !(delta > 0.0 && epsilon > 0.0 && epsilon < delta) {
            return Err(Error::InvalidInput(format!(
                "neighbourhood of O_{k} needs 0 < epsilon < delta, got epsilon = {epsilon}, delta = {delta}"
            )));
        }
        Ok(Self { k, delta, epsilon })
    }

    /// `delta = 0.1 min sigma`, `epsilon = delta / 10`.
    pub fn default_delta(params: &SystemParams) -> f64 {
        0.1 * params.sigma().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// One neighbourhood per cycle saddle with a common radius.
    pub fn for_cycle(params: &SystemParams, delta: Option<f64>) -> Result<Vec<Self>> {
        let d = delta.unwrap_or_else(|| Self::default_delta(params));
        (1..=params.p()).map(|k| Self::new(k, d, d / 10.0)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    #[serde(rename = "enter_V")]
    EnterV,
    #[serde(rename = "exit_V")]
    ExitV,
    #[serde(rename = "cross_S0")]
    CrossS0,
    #[serde(rename = "cross_S1")]
    CrossS1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub k: usize,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub events: Vec<Event>,
}

impl Trajectory {
    pub fn final_state(&self) -> Option<&[f64]> {
        self.states.last().map(|s| s.as_slice())
    }
}

/// Which states end up in a [`Trajectory`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Output {
    /// Every accepted step.
    Steps,
    /// A uniform grid with this spacing, filled from dense output.
    Every(f64),
    /// Initial and final states only.
    Endpoints,
}

#[derive(Debug, Clone)]
pub struct IntegrateOptions {
    pub method: Method,
    pub formulation: Formulation,
    pub neighborhoods: Vec<SaddleNeighborhood>,
    pub output: Output,
    /// Bisection stops once the bracket is this short.
    pub event_time_tol: f64,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            method: Method::default(),
            formulation: Formulation::Linear,
            neighborhoods: Vec::new(),
            output: Output::Steps,
            event_time_tol: 1e-12,
        }
    }
}

/// Geometry needed to evaluate the event functions of one neighbourhood.
#[derive(Debug, Clone)]
pub(crate) struct HoodGeom {
    pub(crate) hood: SaddleNeighborhood,
    /// 0-based index of `k`.
    pub(crate) kk: usize,
    pub(crate) sigma_k: f64,
    /// 0-based indices of `k+1`, `k+2`.
    pub(crate) eta: [usize; 2],
}

impl HoodGeom {
    pub(crate) fn new(params: &SystemParams, hood: SaddleNeighborhood) -> Result<Self> {
        params.check_cycle_index(hood.k)?;
        Ok(Self {
            hood,
            kk: hood.k - 1,
            sigma_k: params.sigma_of(hood.k),
            eta: [params.cyc(hood.k, 1) - 1, params.cyc(hood.k, 2) - 1],
        })
    }

    /// `(|xi|, |eta|)` in the sup norm, `xi` being the displacement from
    /// `O_k` in every direction except `k+1`, `k+2`.
    pub(crate) fn norms(&self, x: &[f64]) -> (f64, f64) {
        let mut xi = 0.0_f64;
        let mut eta = 0.0_f64;
        for (i, &v) in x.iter().enumerate() {
            if i == self.eta[0] || i == self.eta[1] {
                eta = eta.max(v.abs());
            } else if i == self.kk {
                xi = xi.max((v - self.sigma_k).abs());
            } else {
                xi = xi.max(v.abs());
            }
        }
        (xi, eta)
    }

    /// Event functions `[g_V, g_S0, g_S1]`; each crosses zero on its surface.
    fn values(&self, x: &[f64]) -> [f64; 3] {
        let (xi, eta) = self.norms(x);
        let d = self.hood.delta;
        [xi.max(eta) - d, xi - d, eta - d]
    }

    /// Side conditions that make a zero of `g_S0` / `g_S1` a section crossing.
    fn on_section(&self, which: usize, x: &[f64]) -> bool {
        let (xi, eta) = self.norms(x);
        match which {
            1 => eta <= self.hood.epsilon,
            2 => xi <= self.hood.delta * (1.0 + 1e-9),
            _ => true,
        }
    }
}

/// What the driver hands to an observer.
pub enum Observation<'s> {
    Step {
        seg: &'s Segment,
        x: &'s [f64],
    },
    /// `y` is the state in working coordinates.
    Event {
        event: &'s Event,
        x: &'s [f64],
        y: &'s [f64],
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

/// Sub-intervals per step on which event functions are sampled, so a
/// neighbourhood grazed within a single long step is still noticed.
const EVENT_SUBDIV: usize = 4;

/// Streams accepted steps and located events to `observe` until `t_end` or
/// until the observer asks to stop. Returns the final time and state.
pub fn drive<F, O>(
    field: &F,
    params: &SystemParams,
    x0: &[f64],
    t_end: f64,
    opts: &IntegrateOptions,
    mut observe: O,
) -> Result<(f64, Vec<f64>)>
where
    F: VectorField + ?Sized,
    O: FnMut(Observation<'_>) -> Result<Flow>,
{
    validate_start(field.dim(), x0, t_end)?;
    let hoods: Vec<HoodGeom> = opts
        .neighborhoods
        .iter()
        .map(|h| HoodGeom::new(params, *h))
        .collect::<Result<_>>()?;
    let mut st = Stepper::new(field, opts.formulation, opts.method, 0.0, x0);
    let n = x0.len();
    let mut xa = vec![0.0; n];
    let mut xb = vec![0.0; n];
    let mut found: Vec<(f64, Event, Vec<f64>, Vec<f64>)> = Vec::new();
    while st.t < t_end {
        let seg = st.step(t_end)?;
        found.clear();
        if !hoods.is_empty() {
            let nodes: Vec<f64> = (0..=EVENT_SUBDIV)
                .map(|i| seg.t0 + (seg.t1 - seg.t0) * i as f64 / EVENT_SUBDIV as f64)
                .collect();
            st.rhs.to_state_into(&seg.y0, &mut xa);
            let mut ga: Vec<[f64; 3]> = hoods.iter().map(|h| h.values(&xa)).collect();
            for w in nodes.windows(2) {
                st.rhs.to_state_into(&seg.interpolate(w[1]), &mut xb);
                for (hi, h) in hoods.iter().enumerate() {
                    let gb = h.values(&xb);
                    for which in 0..3 {
                        let (a, b) = (ga[hi][which], gb[which]);
                        let kind = match which {
                            0 if a > 0.0 && b <= 0.0 => EventKind::EnterV,
                            0 if a <= 0.0 && b > 0.0 => EventKind::ExitV,
                            1 if a > 0.0 && b <= 0.0 => EventKind::CrossS0,
                            2 if a <= 0.0 && b > 0.0 => EventKind::CrossS1,
                            _ => continue,
                        };
                        let (te, xe, ye) =
                            bisect(&st.rhs, &seg, w[0], w[1], opts.event_time_tol, |x| h.values(x)[which]);
                        if which > 0 && !h.on_section(which, &xe) {
                            continue;
                        }
                        found.push((
                            te,
                            Event {
                                time: te,
                                kind,
                                k: h.hood.k,
                            },
                            xe,
                            ye,
                        ));
                    }
                    ga[hi] = gb;
                }
            }
            found.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        for (_, ev, xe, ye) in &found {
            if observe(Observation::Event {
                event: ev,
                x: xe,
                y: ye,
            })? == Flow::Stop
            {
                return Ok((ev.time, xe.clone()));
            }
        }
        st.rhs.to_state_into(&seg.y1, &mut xb);
        if observe(Observation::Step { seg: &seg, x: &xb })? == Flow::Stop {
            return Ok((seg.t1, xb));
        }
    }
    Ok((st.t, st.state()))
}

/// Root of a sign-changing `g` on `[a, b]`, returned as the right end of the
/// final bracket so the state is already past the surface.
fn bisect<F: VectorField + ?Sized>(
    rhs: &stepper::Rhs<'_, F>,
    seg: &Segment,
    a: f64,
    b: f64,
    tol: f64,
    g: impl Fn(&[f64]) -> f64,
) -> (f64, Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; seg.y0.len()];
    rhs.to_state_into(&seg.interpolate(a), &mut x);
    let ga = g(&x);
    let (mut lo, mut hi) = (a, b);
    while hi - lo > tol {
        let m = 0.5 * (lo + hi);
        if m <= lo || m >= hi {
            break;
        }
        rhs.to_state_into(&seg.interpolate(m), &mut x);
        if (g(&x) > 0.0) == (ga > 0.0) {
            lo = m;
        } else {
            hi = m;
        }
    }
    let y = seg.interpolate(hi);
    rhs.to_state_into(&y, &mut x);
    (hi, x, y)
}

fn validate_start(dim: usize, x0: &[f64], t_end: f64) -> Result<()> {
    if x0.len() != dim {
        return Err(Error::InvalidInput(format!(
            "x0 has {} components, expected {dim}",
            x0.len()
        )));
    }
    if let Some(i) = x0.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidInput(format!(
            "x0[{}] = {} is outside the closed positive orthant",
            i + 1,
            x0[i]
        )));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidInput(format!("t_end = {t_end} must be positive")));
    }
    Ok(())
}

/// Integrates the full system from `x0` over `[0, t_end]`.
pub fn integrate(params: &SystemParams, x0: &[f64], t_end: f64, opts: &IntegrateOptions) -> Result<Trajectory> {
    integrate_field(params, params, x0, t_end, opts)
}

/// [`integrate`] for any vector field of the same dimension as `params`
/// (used for restricted or modified systems).
pub fn integrate_field<F: VectorField + ?Sized>(
    field: &F,
    params: &SystemParams,
    x0: &[f64],
    t_end: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    if let Output::Every(dt) = opts.output {
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!("output spacing {dt} must be positive")));
        }
    }
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x0.to_vec()],
        events: Vec::new(),
    };
    let mut next_out = 1usize;
    let formulation = opts.formulation;
    let active: Vec<bool> = x0.iter().map(|&v| v > 0.0).collect();
    let to_x = |y: &[f64]| -> Vec<f64> {
        match formulation {
            Formulation::Linear => y.to_vec(),
            Formulation::Log => y
                .iter()
                .zip(&active)
                .map(|(v, &a)| if a { v.exp() } else { 0.0 })
                .collect(),
        }
    };
    let (tf, xf) = drive(field, params, x0, t_end, opts, |obs| {
        match obs {
            Observation::Event { event, .. } => traj.events.push(event.clone()),
            Observation::Step { seg, x } => match opts.output {
                Output::Steps => {
                    traj.times.push(seg.t1);
                    traj.states.push(x.to_vec());
                }
                Output::Every(dt) => loop {
                    let t = next_out as f64 * dt;
                    if t > seg.t1 || t > t_end {
                        break;
                    }
                    let xs = if t == seg.t1 {
                        x.to_vec()
                    } else {
                        to_x(&seg.interpolate(t))
                    };
                    traj.times.push(t);
                    traj.states.push(xs);
                    next_out += 1;
                },
                Output::Endpoints => {}
            },
        }
        Ok(Flow::Continue)
    })?;
    if *traj.times.last().unwrap() < tf {
        traj.times.push(tf);
        traj.states.push(xf);
    }
    Ok(traj)
}

/// Exit data of one passage through `V_k`.
#[derive(Debug, Clone, Serialize)]
pub struct Passage {
    /// Time from `S_0` to `S_1`.
    pub t: f64,
    /// Stable displacement at exit, ascending index order, `x_k - sigma_k`
    /// in place of `x_k`.
    pub xi: Vec<f64>,
    pub eta: [f64; 2],
    pub x: Vec<f64>,
}

/// Stable-coordinate indices at `O_k` (1-based, ascending).
pub fn xi_indices(params: &SystemParams, k: usize) -> Vec<usize> {
    let (k1, k2) = (params.cyc(k, 1), params.cyc(k, 2));
    (1..=params.n()).filter(|&j| j != k1 && j != k2).collect()
}

/// Flows from the point `(xi0, eta0)` on `S_0` to the first crossing of
/// `S_1 = {|eta| = delta}`.
///
/// `xi0` lists the stable displacements in the order of [`xi_indices`].
/// Integration runs in logarithmic coordinates, which keeps `eta` resolved
/// at any magnitude.
pub fn passage_map(params: &SystemParams, k: usize, xi0: &[f64], eta0: [f64; 2], delta: f64) -> Result<Passage> {
    params.check_cycle_index(k)?;
    let idx = xi_indices(params, k);
    if xi0.len() != idx.len() {
        return Err(Error::InvalidInput(format!(
            "xi0 needs {} components, got {}",
            idx.len(),
            xi0.len()
        )));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidInput("delta must be positive".into()));
    }
    let xi_norm = xi0.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if (xi_norm - delta).abs() > 1e-12 * delta.max(1.0) {
        return Err(Error::Precondition(format!(
            "|xi0| = {xi_norm} differs from delta = {delta}"
        )));
    }
    let eta_norm = eta0[0].abs().max(eta0[1].abs());
    if eta0.iter().any(|v| *v < 0.0) || !(eta_norm > 0.0 && eta_norm < delta) {
        return Err(Error::Precondition(format!(
            "eta0 = {eta0:?} must be non-negative with 0 < |eta0| < delta"
        )));
    }
    let (k1, k2) = (params.cyc(k, 1), params.cyc(k, 2));
    let sk = params.sigma_of(k);
    let mut x0 = vec![0.0; params.n()];
    for (&j, &v) in idx.iter().zip(xi0) {
        x0[j - 1] = if j == k { sk + v } else { v };
    }
    x0[k1 - 1] = eta0[0];
    x0[k2 - 1] = eta0[1];
    if let Some(j) = x0.iter().position(|v| *v < 0.0) {
        return Err(Error::Precondition(format!("xi0 puts x_{} below zero", j + 1)));
    }

    let hood = HoodGeom::new(
        params,
        SaddleNeighborhood {
            k,
            delta,
            epsilon: delta,
        },
    )?;
    let opts = IntegrateOptions {
        formulation: Formulation::Log,
        method: Method::Adaptive {
            rtol: 1e-11,
            atol: 1e-11,
            h_max: 0.5,
        },
        ..Default::default()
    };
    // Generous horizon: the slowest admissible escape from |eta| ~ 1e-300.
    let lam = crate::model::eigenvalue(params, k, k1).min(crate::model::eigenvalue(params, k, k2));
    let t_max = if lam > 0.0 { 800.0 / lam } else { 1e5 };

    let mut fail: Option<String> = None;
    let mut exit: Option<(f64, Vec<f64>)> = None;
    let active: Vec<bool> = x0.iter().map(|&v| v > 0.0).collect();
    let to_x = |y: &[f64]| -> Vec<f64> {
        y.iter()
            .zip(&active)
            .map(|(v, &a)| if a { v.exp() } else { 0.0 })
            .collect()
    };
    drive(params, params, &x0, t_max, &opts, |obs| {
        if let Observation::Step { seg, x } = obs {
            let (xi, eta) = hood.norms(x);
            if eta >= delta {
                // Locate |eta| = delta on this step.
                let g = |t: f64| hood.norms(&to_x(&seg.interpolate(t))).1 - delta;
                let (mut a, mut b) = (seg.t0, seg.t1);
                while b - a > 1e-12 {
                    let m = 0.5 * (a + b);
                    if m <= a || m >= b {
                        break;
                    }
                    if g(m) > 0.0 {
                        b = m;
                    } else {
                        a = m;
                    }
                }
                let xe = to_x(&seg.interpolate(b));
                if hood.norms(&xe).0 > 2.0 * delta {
                    fail = Some(format!("|xi| reached {} before S_1", hood.norms(&xe).0));
                } else {
                    exit = Some((b, xe));
                }
                return Ok(Flow::Stop);
            }
            if xi > 2.0 * delta {
                fail = Some(format!("|xi| grew to {xi:e} > 2 delta at t = {}", seg.t1));
                return Ok(Flow::Stop);
            }
        }
        Ok(Flow::Continue)
    })?;
    if let Some(reason) = fail {
        return Err(Error::PassageFailure { k, reason });
    }
    let (t, x) = exit.ok_or_else(|| Error::PassageFailure {
        k,
        reason: format!("no S_1 crossing within t = {t_max}"),
    })?;
    let xi = idx
        .iter()
        .map(|&j| if j == k { x[j - 1] - sk } else { x[j - 1] })
        .collect();
    Ok(Passage {
        t,
        xi,
        eta: [x[k1 - 1], x[k2 - 1]],
        x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditions::canonical_p5;
    use crate::model::saddle_point;

    fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn equilibrium_is_constant() {
        let p = canonical_p5();
        let o3 = saddle_point(&p, 3);
        let opts = IntegrateOptions {
            neighborhoods: SaddleNeighborhood::for_cycle(&p, None).unwrap(),
            ..Default::default()
        };
        let tr = integrate(&p, &o3, 50.0, &opts).unwrap();
        assert!(tr.states.iter().all(|s| s == &o3));
        assert!(tr.events.is_empty());
    }

    #[test]
    fn logistic_axis_matches_closed_form() {
        let p = canonical_p5();
        let x0 = [0.2, 0.0, 0.0, 0.0, 0.0];
        for formulation in [Formulation::Linear, Formulation::Log] {
            let opts = IntegrateOptions {
                formulation,
                output: Output::Every(0.5),
                ..Default::default()
            };
            let tr = integrate(&p, &x0, 10.0, &opts).unwrap();
            for (t, x) in tr.times.iter().zip(&tr.states) {
                let exact = 0.2 * t.exp() / (1.0 - 0.2 + 0.2 * t.exp());
                // Dense output is fourth order; accepted steps alone are ~1e-11.
                assert!(
                    (x[0] - exact).abs() < 1e-8,
                    "{formulation:?} t={t} got {} exact {exact}",
                    x[0]
                );
                assert_eq!(&x[1..], &[0.0; 4]);
            }
        }
    }

    #[test]
    fn rk4_and_adaptive_agree() {
        let p = canonical_p5();
        let x0 = [0.3, 0.2, 0.1, 0.25, 0.15];
        let a = integrate(&p, &x0, 20.0, &IntegrateOptions::default()).unwrap();
        let r = integrate(
            &p,
            &x0,
            20.0,
            &IntegrateOptions {
                method: Method::Rk4 { h: 1e-3 },
                output: Output::Endpoints,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(sup_diff(a.final_state().unwrap(), r.final_state().unwrap()) < 1e-9);
    }

    #[test]
    fn negative_start_rejected() {
        let p = canonical_p5();
        let r = integrate(&p, &[0.1, -0.1, 0.0, 0.0, 0.0], 1.0, &IntegrateOptions::default());
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn passage_respects_plane_and_time_bound() {
        let p = canonical_p5();
        let delta = 0.1;
        // xi order for k = 1: indices 1, 4, 5.
        let pass = passage_map(&p, 1, &[0.0, delta, 0.0], [0.0, 1e-4], delta).unwrap();
        assert_eq!(pass.eta[0], 0.0);
        assert!(pass.t >= (delta / 1e-4_f64).ln() / 0.2);
        let generic = passage_map(&p, 1, &[0.0, delta, 0.0], [1e-4, 1e-4], delta).unwrap();
        assert!(generic.t >= (delta / 1e-4_f64).ln() / 0.2);
    }

    #[test]
    fn passage_checks_section() {
        let p = canonical_p5();
        assert!(matches!(
            passage_map(&p, 1, &[0.0, 0.05, 0.0], [0.0, 1e-4], 0.1),
            Err(Error::Precondition(_))
        ));
    }
}
