//! Explicit Runge–Kutta steppers with dense output.

use crate::error::{Error, Result};
use crate::model::VectorField;

/// Coordinates the ODE is advanced in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Formulation {
    /// `x` itself; tiny negative components from roundoff are clamped.
    #[default]
    Linear,
    /// `y_i = ln x_i` for every positive component, exact zeros held fixed.
    /// Orthant invariance is exact and components far below the `f64`
    /// range stay resolvable.
    Log,
}

/// Time-stepping scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Rk4 { h: f64 },
    Adaptive { rtol: f64, atol: f64, h_max: f64 },
}

impl Default for Method {
    fn default() -> Self {
        Method::Adaptive {
            rtol: 1e-10,
            atol: 1e-10,
            h_max: 0.5,
        }
    }
}

/// Components in `(-CLAMP_TOL, 0)` are rounded to zero after a linear step.
pub const CLAMP_TOL: f64 = 1e-13;

/// Maps a [`VectorField`] onto the working coordinates.
pub(crate) struct Rhs<'a, F: VectorField + ?Sized> {
    field: &'a F,
    formulation: Formulation,
    /// Active components in log coordinates (false = identically zero).
    active: Vec<bool>,
}

impl<'a, F: VectorField + ?Sized> Rhs<'a, F> {
    pub(crate) fn new(field: &'a F, formulation: Formulation, x0: &[f64]) -> Self {
        let active = x0.iter().map(|&v| v > 0.0).collect();
        Self {
            field,
            formulation,
            active,
        }
    }

    pub(crate) fn to_working(&self, x: &[f64]) -> Vec<f64> {
        match self.formulation {
            Formulation::Linear => x.to_vec(),
            Formulation::Log => x
                .iter()
                .zip(&self.active)
                .map(|(&v, &a)| if a { v.ln() } else { f64::NEG_INFINITY })
                .collect(),
        }
    }

    pub(crate) fn to_state_into(&self, y: &[f64], x: &mut [f64]) {
        match self.formulation {
            Formulation::Linear => x.copy_from_slice(y),
            Formulation::Log => {
                for i in 0..y.len() {
                    x[i] = if self.active[i] { y[i].exp() } else { 0.0 };
                }
            }
        }
    }

    pub(crate) fn to_state(&self, y: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; y.len()];
        self.to_state_into(y, &mut x);
        x
    }

    fn eval(&self, y: &[f64], dy: &mut [f64], scratch: &mut [f64]) {
        match self.formulation {
            Formulation::Linear => self.field.eval(y, dy),
            Formulation::Log => {
                self.to_state_into(y, scratch);
                for i in 0..y.len() {
                    dy[i] = if self.active[i] {
                        self.field.growth(i, scratch)
                    } else {
                        0.0
                    };
                }
            }
        }
    }

    /// Error weight for component `i`; inactive log components carry none.
    fn counts(&self, i: usize) -> bool {
        self.formulation == Formulation::Linear || self.active[i]
    }
}

/// One accepted step in working coordinates with what is needed for dense
/// output.
#[derive(Debug, Clone)]
pub struct Segment {
    pub t0: f64,
    pub t1: f64,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    pub f0: Vec<f64>,
    pub f1: Vec<f64>,
    /// Fifth coefficient of the Dormand–Prince continuous extension; `None`
    /// falls back to cubic Hermite.
    pub dense: Option<Vec<f64>>,
}

impl Segment {
    /// Dense output at time `t` in `[t0, t1]`.
    pub fn interpolate_into(&self, t: f64, out: &mut [f64]) {
        let h = self.t1 - self.t0;
        if h == 0.0 {
            out.copy_from_slice(&self.y1);
            return;
        }
        let s = (t - self.t0) / h;
        if let Some(d) = &self.dense {
            let s1 = 1.0 - s;
            for i in 0..out.len() {
                let (a, b) = (self.y0[i], self.y1[i]);
                if a == f64::NEG_INFINITY {
                    out[i] = a;
                    continue;
                }
                let diff = b - a;
                let bspl = h * self.f0[i] - diff;
                let r4 = diff - h * self.f1[i] - bspl;
                out[i] = a + s * (diff + s1 * (bspl + s * (r4 + s1 * d[i])));
            }
            return;
        }
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        for i in 0..out.len() {
            let (a, b) = (self.y0[i], self.y1[i]);
            out[i] = if a == f64::NEG_INFINITY {
                a
            } else {
                h00 * a + h10 * h * self.f0[i] + h01 * b + h11 * h * self.f1[i]
            };
        }
    }

    pub fn interpolate(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.y0.len()];
        self.interpolate_into(t, &mut out);
        out
    }
}

// Dormand–Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Smallest step the adaptive controller may take before giving up.
const H_MIN: f64 = 1e-14;

pub(crate) struct Stepper<'a, F: VectorField + ?Sized> {
    pub(crate) rhs: Rhs<'a, F>,
    method: Method,
    pub(crate) t: f64,
    pub(crate) y: Vec<f64>,
    pub(crate) f: Vec<f64>,
    h: f64,
    k: Vec<Vec<f64>>,
    stage: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a, F: VectorField + ?Sized> Stepper<'a, F> {
    pub(crate) fn new(field: &'a F, formulation: Formulation, method: Method, t0: f64, x0: &[f64]) -> Self {
        let rhs = Rhs::new(field, formulation, x0);
        let n = x0.len();
        let y = rhs.to_working(x0);
        let mut f = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        rhs.eval(&y, &mut f, &mut scratch);
        let h = match method {
            Method::Rk4 { h } => h,
            Method::Adaptive { rtol, atol, h_max } => {
                let scale: f64 = y
                    .iter()
                    .zip(&f)
                    .enumerate()
                    .filter(|(i, _)| rhs.counts(*i))
                    .map(|(_, (yi, fi))| {
                        let w = atol + rtol * if yi.is_finite() { yi.abs() } else { 0.0 };
                        (fi / w).powi(2)
                    })
                    .sum::<f64>()
                    .sqrt();
                let guess = if scale > 0.0 {
                    0.01 / scale * (n as f64).sqrt()
                } else {
                    h_max
                };
                guess.clamp(1e-6, h_max)
            }
        };
        Self {
            rhs,
            method,
            t: t0,
            y,
            f,
            h,
            k: vec![vec![0.0; n]; 7],
            stage: vec![0.0; n],
            scratch,
        }
    }

    pub(crate) fn state(&self) -> Vec<f64> {
        self.rhs.to_state(&self.y)
    }

    /// Advances by one accepted step without passing `t_stop`.
    pub(crate) fn step(&mut self, t_stop: f64) -> Result<Segment> {
        match self.method {
            Method::Rk4 { h } => {
                let h = h.min(t_stop - self.t);
                let y1 = self.rk4(h);
                self.accept(h, y1, None, None)
            }
            Method::Adaptive { rtol, atol, h_max } => loop {
                let h = self.h.min(h_max).min(t_stop - self.t);
                let (y1, f1, err, dense) = self.dopri(h, rtol, atol);
                if !err.is_finite() || err > 1.0 {
                    let fac = if err.is_finite() {
                        (0.9 * err.powf(-0.2)).max(0.2)
                    } else {
                        0.2
                    };
                    self.h = h * fac;
                    if self.h < H_MIN {
                        return Err(Error::IntegratorFailure {
                            t: self.t,
                            reason: "step size underflow".into(),
                        });
                    }
                    continue;
                }
                if self.rhs.formulation == Formulation::Linear
                    && y1.iter().any(|&v| v <= -CLAMP_TOL)
                    && h > 64.0 * H_MIN
                {
                    // Retry smaller before declaring the orthant left.
                    self.h = 0.25 * h;
                    continue;
                }
                let fac = if err > 0.0 {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                } else {
                    5.0
                };
                let seg = self.accept(h, y1, Some(f1), Some(dense))?;
                self.h = h * fac;
                return Ok(seg);
            },
        }
    }

    fn accept(&mut self, h: f64, mut y1: Vec<f64>, f1: Option<Vec<f64>>, dense: Option<Vec<f64>>) -> Result<Segment> {
        let t1 = self.t + h;
        if let Some(i) = y1.iter().position(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::Divergence {
                t: self.t,
                reason: format!("component {} became non-finite", i + 1),
            });
        }
        let mut clamped = false;
        if self.rhs.formulation == Formulation::Linear {
            for (i, v) in y1.iter_mut().enumerate() {
                if *v < 0.0 {
                    if *v > -CLAMP_TOL {
                        *v = 0.0;
                        clamped = true;
                    } else {
                        return Err(Error::IntegratorFailure {
                            t: t1,
                            reason: format!("component {} reached {v:e} below the orthant", i + 1),
                        });
                    }
                }
            }
        }
        let f1 = match f1 {
            Some(f) if !clamped => f,
            _ => {
                let mut f = vec![0.0; y1.len()];
                self.rhs.eval(&y1, &mut f, &mut self.scratch);
                f
            }
        };
        let seg = Segment {
            t0: self.t,
            t1,
            y0: std::mem::replace(&mut self.y, y1.clone()),
            y1,
            f0: std::mem::replace(&mut self.f, f1.clone()),
            f1,
            dense,
        };
        self.t = t1;
        Ok(seg)
    }

    fn stage_point(&mut self, h: f64, row: usize) {
        let n = self.y.len();
        for i in 0..n {
            let mut acc = 0.0;
            for (j, a) in A[row].iter().enumerate().take(row) {
                if *a != 0.0 {
                    acc += a * self.k[j][i];
                }
            }
            self.stage[i] = if self.y[i] == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                self.y[i] + h * acc
            };
        }
    }

    fn dopri(&mut self, h: f64, rtol: f64, atol: f64) -> (Vec<f64>, Vec<f64>, f64, Vec<f64>) {
        let n = self.y.len();
        self.k[0].copy_from_slice(&self.f);
        for row in 1..7 {
            self.stage_point(h, row);
            let mut out = std::mem::take(&mut self.k[row]);
            self.rhs.eval(&self.stage, &mut out, &mut self.scratch);
            self.k[row] = out;
        }
        // Row 6 of A is the 5th-order solution, so the last stage point is y1
        // and k[6] is f(y1).
        let y1 = self.stage.clone();
        let f1 = self.k[6].clone();
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in 0..n {
            if !self.rhs.counts(i) {
                continue;
            }
            let err: f64 = (0..7).map(|j| E[j] * self.k[j][i]).sum::<f64>() * h;
            let sc = atol + rtol * self.y[i].abs().max(y1[i].abs());
            sum += (err / sc).powi(2);
            count += 1;
        }
        let err = if count == 0 { 0.0 } else { (sum / count as f64).sqrt() };
        let dense = (0..n)
            .map(|i| h * (0..7).map(|j| D[j] * self.k[j][i]).sum::<f64>())
            .collect();
        (y1, f1, err, dense)
    }

    fn rk4(&mut self, h: f64) -> Vec<f64> {
        let n = self.y.len();
        let y = self.y.clone();
        let mut k1 = self.f.clone();
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        let lin = |tmp: &mut [f64], k: &[f64], c: f64| {
            for i in 0..n {
                tmp[i] = if y[i] == f64::NEG_INFINITY {
                    y[i]
                } else {
                    y[i] + c * k[i]
                };
            }
        };
        lin(&mut tmp, &k1, 0.5 * h);
        self.rhs.eval(&tmp, &mut k2, &mut self.scratch);
        lin(&mut tmp, &k2, 0.5 * h);
        self.rhs.eval(&tmp, &mut k3, &mut self.scratch);
        lin(&mut tmp, &k3, h);
        self.rhs.eval(&tmp, &mut k4, &mut self.scratch);
        for i in 0..n {
            k1[i] = if y[i] == f64::NEG_INFINITY {
                y[i]
            } else {
                y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            };
        }
        k1
    }
}
