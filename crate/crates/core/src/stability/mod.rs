//! Empirical stability of the heteroclinic surface: single-passage
//! contraction exponents, multi-lap distance profiles and symbolic
//! itineraries.

mod distance;

pub use distance::{closest_point_on_triangle, distance_to_gamma, mesh_floor, Hit, MeshIndex};

use std::f64::consts::LN_10;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditions::check_all;
use crate::error::{Error, Result};
use crate::integrator::{
    drive, passage_map, xi_indices, Event, EventKind, Flow, Formulation, IntegrateOptions, Method, Observation, Output,
    SaddleNeighborhood,
};
use crate::manifold::GammaMesh;
use crate::model::SystemParams;

/// Saddles entered in order, with the cycle step taken between each pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Itinerary {
    pub saddles: Vec<usize>,
    /// `1` or `2` for each consecutive pair.
    pub labels: Vec<u8>,
}

pub fn transition_label(from: usize, to: usize, p: usize) -> Result<u8> {
    match (to + p - from) % p {
        1 => Ok(1),
        2 => Ok(2),
        _ => Err(Error::ChannelViolation { from, to, p }),
    }
}

/// Reads the `enter_V` events of a trajectory.
pub fn extract_itinerary(events: &[Event], p: usize) -> Result<Itinerary> {
    let saddles: Vec<usize> = events
        .iter()
        .filter(|e| e.kind == EventKind::EnterV)
        .map(|e| e.k)
        .collect();
    let labels = saddles
        .windows(2)
        .map(|w| transition_label(w[0], w[1], p))
        .collect::<Result<_>>()?;
    Ok(Itinerary { saddles, labels })
}

/// Initial unstable displacement used in the contraction fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EtaDirection {
    /// `eta = (0.5 eps, eps)`.
    Generic,
    /// `eta = (0, eps)`, along `x_{k+2}` only.
    Strong,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractionPoint {
    pub eps: f64,
    pub passage_time: f64,
    /// Largest coordinate outside the triple `(k, k+1, k+2)` at exit.
    pub xi_exit: f64,
    pub log10_xi_exit: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractionFit {
    pub k: usize,
    pub delta: f64,
    pub direction: EtaDirection,
    pub points: Vec<ContractionPoint>,
    /// Fitted exponent in `|xi(T)| = C |eta(0)|^s`.
    pub s: f64,
    pub log10_c: f64,
    pub c: f64,
    /// Saddle value at `O_k`.
    pub nu: f64,
    /// `max(0, nu - s)`.
    pub e: f64,
    pub dissipative: bool,
    pub max_abs_residual: f64,
}

/// Least-squares line `y = a + s x`.
fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let s = sxy / sxx;
    (my - s * mx, s)
}

/// Runs one passage per `eps` from `S_0` and fits the exit size of the
/// stable coordinates against the entry size of the unstable ones.
///
/// The start point has `x_k = sigma_k`, one incoming coordinate (`x_{k-2}`,
/// or `x_{k-1}` when `p = 4`) equal to `delta`, all others zero.
pub fn contraction_experiment(
    params: &SystemParams,
    k: usize,
    delta: f64,
    eps_list: &[f64],
    direction: EtaDirection,
) -> Result<ContractionFit> {
    params.check_cycle_index(k)?;
    if eps_list.len() < 2 || eps_list.iter().any(|e| !(*e > 0.0 && *e < delta)) {
        return Err(Error::InvalidInput(
            "eps values must lie in (0, delta), at least two of them".into(),
        ));
    }
    let (lo, hi) = eps_list
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    if (hi / lo).log10() < 3.0 - 1e-9 {
        return Err(Error::InvalidInput(format!(
            "eps values span {:.2} decades; at least 3 are required",
            (hi / lo).log10()
        )));
    }
    let idx = xi_indices(params, k);
    let triple = [k, params.cyc(k, 1), params.cyc(k, 2)];
    let incoming = if triple.contains(&params.cyc(k, -2)) {
        params.cyc(k, -1)
    } else {
        params.cyc(k, -2)
    };
    let xi0: Vec<f64> = idx.iter().map(|&j| if j == incoming { delta } else { 0.0 }).collect();
    let mut points = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let eta0 = match direction {
            EtaDirection::Generic => [0.5 * eps, eps],
            EtaDirection::Strong => [0.0, eps],
        };
        let pass = passage_map(params, k, &xi0, eta0, delta)?;
        let xi_exit = (1..=params.n())
            .filter(|j| !triple.contains(j))
            .map(|j| pass.x[j - 1])
            .fold(0.0_f64, f64::max);
        points.push(ContractionPoint {
            eps,
            passage_time: pass.t,
            xi_exit,
            log10_xi_exit: xi_exit.log10(),
            residual: 0.0,
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.eps.log10()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.log10_xi_exit).collect();
    let (a, s) = fit_line(&xs, &ys);
    let mut max_abs_residual = 0.0_f64;
    for (pt, x) in points.iter_mut().zip(&xs) {
        pt.residual = pt.log10_xi_exit - (a + s * x);
        max_abs_residual = max_abs_residual.max(pt.residual.abs());
    }
    let saddle = &check_all(params).saddles[k - 1];
    Ok(ContractionFit {
        k,
        delta,
        direction,
        points,
        s,
        log10_c: a,
        c: 10f64.powf(a),
        nu: saddle.nu,
        e: (saddle.nu - s).max(0.0),
        dissipative: saddle.dissipative_ok,
        max_abs_residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityOptions {
    pub eps0: f64,
    pub laps: usize,
    pub trials: usize,
    pub seed: u64,
    /// Neighbourhood radius; defaults to `0.1 min sigma`.
    pub delta: Option<f64>,
    /// Estimated mesh discretisation error; distances below it carry no
    /// information about the true surface.
    pub mesh_floor: f64,
    /// Stall limit before the first full lap has been observed.
    pub first_lap_timeout: f64,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        Self {
            eps0: 1e-3,
            laps: 3,
            trials: 50,
            seed: 0,
            delta: None,
            mesh_floor: 0.0,
            first_lap_timeout: 5000.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PassageRecord {
    pub k: usize,
    pub entry_time: f64,
    pub exit_time: f64,
    pub t: f64,
    /// Distance to the mesh at entry and exit.
    pub entry_distance: f64,
    pub exit_distance: f64,
    pub entry_eta: f64,
    pub exit_xi: f64,
    /// Base-10 logarithms computed in working coordinates, meaningful far
    /// below the `f64` range.
    pub log10_entry_eta: f64,
    pub log10_exit_xi: f64,
    pub log10_entry_transverse: f64,
    pub log10_exit_transverse: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LapRecord {
    pub lap: usize,
    pub entry_time: f64,
    pub exit_time: f64,
    pub entry_distance: f64,
    pub exit_distance: f64,
    pub log10_entry_transverse: f64,
    pub log10_exit_transverse: f64,
    /// Transverse deviation at least halved and mesh distance at least
    /// halved or at the floor.
    pub contracts: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TrialStatus {
    Completed,
    Timeout,
    Alarm,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialReport {
    pub trial: usize,
    pub start: Vec<f64>,
    pub start_distance: f64,
    pub status: TrialStatus,
    pub message: Option<String>,
    pub itinerary: Itinerary,
    pub passages: Vec<PassageRecord>,
    pub laps: Vec<LapRecord>,
    pub max_distance: f64,
    /// First time the distance exceeded the alarm threshold.
    pub alarm_time: Option<f64>,
    pub end_time: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub options: StabilityOptions,
    pub delta: f64,
    pub alarm_threshold: f64,
    pub trials: Vec<TrialReport>,
    pub completed: usize,
    pub timeouts: usize,
    pub alarms: usize,
    pub failures: usize,
    pub all_laps_contract: bool,
    pub channel_ok: bool,
    /// Occurrences of `+1` and `+2` steps over all trials.
    pub label_counts: [usize; 2],
}

/// `log10` of `min_m |x outside {m, m+1, m+2}|_2`, evaluated from log
/// coordinates so that it stays finite for components that underflow.
pub fn log10_transverse(params: &SystemParams, y: &[f64]) -> f64 {
    (1..=params.p())
        .map(|m| {
            let t = [m, params.cyc(m, 1), params.cyc(m, 2)];
            let terms: Vec<f64> = (1..=params.n())
                .filter(|j| !t.contains(j))
                .map(|j| 2.0 * y[j - 1])
                .collect();
            let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if top == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            let sum: f64 = terms.iter().map(|v| (v - top).exp()).sum();
            0.5 * (top + sum.ln()) / LN_10
        })
        .fold(f64::INFINITY, f64::min)
}

fn log10_max(y: &[f64], idx: impl Iterator<Item = usize>) -> f64 {
    idx.map(|j| y[j - 1]).fold(f64::NEG_INFINITY, f64::max) / LN_10
}

/// Uniformly random point of the mesh surface.
fn sample_on_mesh(mesh: &GammaMesh, cumulative: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let total = *cumulative.last().unwrap();
    let r = rng.random_range(0.0..total);
    let t = cumulative.partition_point(|&c| c <= r).min(cumulative.len() - 1);
    let v = mesh.triangles[t].v;
    let (r1, r2): (f64, f64) = (rng.random(), rng.random());
    let s = r1.sqrt();
    let (wa, wb, wc) = (1.0 - s, s * (1.0 - r2), s * r2);
    let (a, b, c) = (mesh.position(v[0]), mesh.position(v[1]), mesh.position(v[2]));
    (0..mesh.n).map(|i| wa * a[i] + wb * b[i] + wc * c[i]).collect()
}

/// Offset of length `eps0` in a uniformly random direction, with negative
/// components reflected back into the orthant.
fn perturb(x: &[f64], eps0: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d: Vec<f64> = (0..x.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    x.iter().zip(&d).map(|(xi, di)| (xi + eps0 * di / norm).abs()).collect()
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

struct Open {
    k: usize,
    time: f64,
    distance: f64,
    eta: f64,
    log10_eta: f64,
    log10_transverse: f64,
}

fn run_trial(
    params: &SystemParams,
    index: &MeshIndex<'_>,
    cumulative: &[f64],
    opts: &StabilityOptions,
    delta: f64,
    alarm_threshold: f64,
    trial: usize,
) -> Result<TrialReport> {
    let mesh = index.mesh();
    let p = params.p();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(trial as u64);
    let on_mesh = sample_on_mesh(mesh, cumulative, &mut rng);
    let start = perturb(&on_mesh, opts.eps0, &mut rng);
    let start_distance = index.distance(&start)?;

    let integ = IntegrateOptions {
        method: Method::Adaptive {
            rtol: 1e-10,
            atol: 1e-10,
            h_max: 1.0,
        },
        formulation: Formulation::Log,
        neighborhoods: SaddleNeighborhood::for_cycle(params, Some(delta))?,
        output: Output::Endpoints,
        event_time_tol: 1e-12,
    };
    let needed = opts.laps * p + 1;
    let mut enters: Vec<(f64, f64, f64)> = Vec::new();
    let mut saddles: Vec<usize> = Vec::new();
    let mut labels: Vec<u8> = Vec::new();
    let mut passages = Vec::new();
    let mut open: Option<Open> = None;
    let mut status = TrialStatus::Completed;
    let mut message = None;
    let mut max_distance = start_distance;
    let mut last_event = 0.0;
    let mut step_error: Option<Error> = None;
    let mut anchor: Option<Vec<f64>> = None;
    let mut alarm: Option<(f64, f64)> = None;

    let result = drive(params, params, &start, f64::MAX / 4.0, &integ, |obs| {
        match obs {
            Observation::Event { event, x, y } => match event.kind {
                EventKind::EnterV => {
                    if let Some(&prev) = saddles.last() {
                        match transition_label(prev, event.k, p) {
                            Ok(l) => labels.push(l),
                            Err(e) => {
                                status = TrialStatus::Failed;
                                message = Some(e.to_string());
                                return Ok(Flow::Stop);
                            }
                        }
                    }
                    saddles.push(event.k);
                    let d = match index.distance(x) {
                        Ok(d) => d,
                        Err(e) => {
                            step_error = Some(e);
                            return Ok(Flow::Stop);
                        }
                    };
                    let tau = log10_transverse(params, y);
                    enters.push((event.time, d, tau));
                    last_event = event.time;
                    let eta_idx = [params.cyc(event.k, 1), params.cyc(event.k, 2)];
                    open = Some(Open {
                        k: event.k,
                        time: event.time,
                        distance: d,
                        eta: eta_idx.iter().map(|&j| x[j - 1]).fold(0.0, f64::max),
                        log10_eta: log10_max(y, eta_idx.into_iter()),
                        log10_transverse: tau,
                    });
                    if enters.len() >= needed {
                        return Ok(Flow::Stop);
                    }
                }
                EventKind::ExitV => {
                    if let Some(o) = open.take_if(|o| o.k == event.k) {
                        let d = match index.distance(x) {
                            Ok(d) => d,
                            Err(e) => {
                                step_error = Some(e);
                                return Ok(Flow::Stop);
                            }
                        };
                        let triple = [o.k, params.cyc(o.k, 1), params.cyc(o.k, 2)];
                        let off = || (1..=params.n()).filter(|j| !triple.contains(j));
                        passages.push(PassageRecord {
                            k: o.k,
                            entry_time: o.time,
                            exit_time: event.time,
                            t: event.time - o.time,
                            entry_distance: o.distance,
                            exit_distance: d,
                            entry_eta: o.eta,
                            exit_xi: off().map(|j| x[j - 1]).fold(0.0, f64::max),
                            log10_entry_eta: o.log10_eta,
                            log10_exit_xi: log10_max(y, off()),
                            log10_entry_transverse: o.log10_transverse,
                            log10_exit_transverse: log10_transverse(params, y),
                        });
                    }
                }
                _ => {}
            },
            Observation::Step { seg, x } => {
                // The last nearest point bounds the distance from above; the
                // mesh is only searched when that bound could raise the maximum.
                let bound = anchor.as_ref().map_or(f64::INFINITY, |c| euclid(x, c));
                if bound > max_distance {
                    let hit = match index.query(x) {
                        Ok(h) => h,
                        Err(e) => {
                            step_error = Some(e);
                            return Ok(Flow::Stop);
                        }
                    };
                    let v = mesh.triangles[hit.triangle].v;
                    anchor = Some(closest_point_on_triangle(
                        x,
                        mesh.position(v[0]),
                        mesh.position(v[1]),
                        mesh.position(v[2]),
                    ));
                    let d = hit.distance;
                    max_distance = max_distance.max(d);
                    if d > alarm_threshold && alarm.is_none() {
                        alarm = Some((seg.t1, d));
                    }
                }
                // Gaps between entries over the most recent lap.
                let gaps: Vec<f64> = enters.windows(2).map(|w| w[1].0 - w[0].0).collect();
                let recent = &gaps[gaps.len().saturating_sub(p)..];
                let limit = if gaps.len() >= p {
                    10.0 * recent.iter().cloned().fold(0.0, f64::max)
                } else {
                    opts.first_lap_timeout
                        .max(10.0 * recent.iter().cloned().fold(0.0, f64::max))
                };
                if seg.t1 - last_event > limit {
                    status = TrialStatus::Timeout;
                    message = Some(format!("no saddle entry between t = {last_event} and t = {}", seg.t1));
                    return Ok(Flow::Stop);
                }
            }
        }
        Ok(Flow::Continue)
    });
    let end_time = match result {
        Ok((t, _)) => t,
        Err(e) => {
            status = TrialStatus::Failed;
            message = Some(e.to_string());
            f64::NAN
        }
    };
    if let Some(e) = step_error {
        return Err(e);
    }
    if status == TrialStatus::Completed && enters.len() < needed {
        status = TrialStatus::Timeout;
    }
    // An alarm outranks completion and timeouts but the orbit is still
    // followed, so the lap records show what happened afterwards.
    if let (Some((t, d)), TrialStatus::Completed | TrialStatus::Timeout) = (alarm, status) {
        status = TrialStatus::Alarm;
        message = Some(format!("distance {d:e} exceeds {alarm_threshold:e} at t = {t}"));
    }

    let half = 0.5_f64.log10();
    let laps = (0..opts.laps)
        .filter(|l| (l + 1) * p < enters.len())
        .map(|l| {
            let (a, b) = (enters[l * p], enters[(l + 1) * p]);
            let tau_ok = b.2 <= a.2 + half;
            let mesh_ok = b.1 <= (0.5 * a.1).max(opts.mesh_floor);
            LapRecord {
                lap: l + 1,
                entry_time: a.0,
                exit_time: b.0,
                entry_distance: a.1,
                exit_distance: b.1,
                log10_entry_transverse: a.2,
                log10_exit_transverse: b.2,
                contracts: tau_ok && mesh_ok,
            }
        })
        .collect();
    Ok(TrialReport {
        trial,
        start,
        start_distance,
        status,
        message,
        itinerary: Itinerary { saddles, labels },
        passages,
        laps,
        max_distance,
        alarm_time: alarm.map(|a| a.0),
        end_time,
    })
}

/// Perturbs random surface points by `eps0` and follows each for `laps`
/// circuits of the cycle, recording every saddle passage.
pub fn stability_experiment(
    params: &SystemParams,
    mesh: &GammaMesh,
    opts: &StabilityOptions,
) -> Result<StabilityReport> {
    if !(opts.eps0 >= 0.0 && opts.eps0.is_finite()) || opts.laps == 0 || opts.trials == 0 {
        return Err(Error::InvalidInput(
            "eps0 must be non-negative, laps and trials positive".into(),
        ));
    }
    if mesh.n != params.n() || mesh.p != params.p() {
        return Err(Error::InvalidInput("mesh was built for different dimensions".into()));
    }
    let report = check_all(params);
    if !report.all_pass {
        return Err(Error::Precondition(format!(
            "parameters fail {} condition(s); stability is not certified",
            report.violations.len()
        )));
    }
    let index = MeshIndex::new(mesh)?;
    let mut cumulative = Vec::with_capacity(mesh.triangles.len());
    let mut acc = 0.0;
    for t in &mesh.triangles {
        acc += crate::manifold::triangle_area(mesh.position(t.v[0]), mesh.position(t.v[1]), mesh.position(t.v[2]));
        cumulative.push(acc);
    }
    let delta = opts.delta.unwrap_or_else(|| SaddleNeighborhood::default_delta(params));
    let alarm_threshold = 10.0 * opts.eps0 + opts.mesh_floor;
    let trials: Vec<TrialReport> = (0..opts.trials)
        .into_par_iter()
        .map(|trial| run_trial(params, &index, &cumulative, opts, delta, alarm_threshold, trial))
        .collect::<Result<_>>()?;

    let count = |s: TrialStatus| trials.iter().filter(|t| t.status == s).count();
    let mut label_counts = [0usize; 2];
    for t in &trials {
        for &l in &t.itinerary.labels {
            label_counts[(l - 1) as usize] += 1;
        }
    }
    Ok(StabilityReport {
        options: *opts,
        delta,
        alarm_threshold,
        all_laps_contract: trials.iter().all(|t| t.laps.iter().all(|l| l.contracts)),
        channel_ok: trials
            .iter()
            .all(|t| t.message.as_deref().is_none_or(|m| !m.starts_with("channel violation"))),
        completed: count(TrialStatus::Completed),
        timeouts: count(TrialStatus::Timeout),
        alarms: count(TrialStatus::Alarm),
        failures: count(TrialStatus::Failed),
        label_counts,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditions::canonical_p5;

    fn enter(k: usize) -> Event {
        Event {
            time: 0.0,
            kind: EventKind::EnterV,
            k,
        }
    }

    #[test]
    fn itinerary_labels() {
        let evs = [enter(1), enter(2), enter(4)];
        let it = extract_itinerary(&evs, 5).unwrap();
        assert_eq!(it.labels, vec![1, 2]);
        let wrap = extract_itinerary(&[enter(4), enter(1), enter(2)], 5).unwrap();
        assert_eq!(wrap.labels, vec![2, 1]);
        assert!(matches!(
            extract_itinerary(&[enter(1), enter(4)], 5),
            Err(Error::ChannelViolation { from: 1, to: 4, p: 5 })
        ));
    }

    #[test]
    fn line_fit_exact() {
        let (a, s) = fit_line(&[-3.0, -4.0, -5.0], &[-5.5, -7.0, -8.5]);
        assert!((s - 1.5).abs() < 1e-14 && (a - (-1.0)).abs() < 1e-13);
    }

    #[test]
    fn transverse_in_log_space() {
        let p = canonical_p5();
        // Only x_1 and x_4 non-zero: the best triple (4, 5, 1) contains both.
        let y = [0.0, f64::NEG_INFINITY, f64::NEG_INFINITY, -2.0, f64::NEG_INFINITY];
        assert_eq!(log10_transverse(&p, &y), f64::NEG_INFINITY);
        let y = [0.0, -5000.0, f64::NEG_INFINITY, -2000.0, f64::NEG_INFINITY];
        // Triple (4, 5, 1) leaves only x_2 outside.
        let expect = -5000.0 / LN_10;
        assert!((log10_transverse(&p, &y) - expect).abs() < 1e-9);
    }

    #[test]
    fn contraction_span_checked() {
        let p = canonical_p5();
        assert!(contraction_experiment(&p, 1, 0.1, &[1e-3, 1e-4], EtaDirection::Generic).is_err());
    }
}
