//! Adaptive integration of `dX/dt = Q(X)` with blowup detection.
//!
//! A Dormand–Prince 5(4) pair advances the state with PI step-size control.
//! Integration stops once `‖X‖ ≥ r_max`; near a quadratic blowup
//! `‖X(t)‖ ~ 1/(T − t)`, so `1/‖X‖` is asymptotically affine in `t` and a
//! straight-line fit over the last accepted steps recovers `T`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadratic::{norm, QuadraticMap, StateVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_min: f64,
    /// Norm at which the run is declared a blowup.
    pub r_max: f64,
    pub t_end: f64,
    pub max_steps: usize,
    /// Number of trailing accepted steps fed to the blowup-time fit.
    pub fit_window: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rtol: 1e-10,
            atol: 1e-12,
            h_init: 1e-3,
            h_min: 1e-14,
            r_max: 1e8,
            t_end: 10.0,
            max_steps: 1_000_000,
            fit_window: 10,
        }
    }
}

impl IntegratorConfig {
    pub fn with_t_end(t_end: f64) -> Self {
        IntegratorConfig { t_end, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rtol", self.rtol),
            ("atol", self.atol),
            ("h_init", self.h_init),
            ("h_min", self.h_min),
            ("r_max", self.r_max),
            ("t_end", self.t_end),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.h_min >= self.h_init {
            return Err(Error::InvalidArgument("h_min must be smaller than h_init".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidArgument("max_steps must be >= 1".into()));
        }
        if self.fit_window < 3 {
            return Err(Error::InvalidArgument("fit_window must be >= 3".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status")]
pub enum TrajectoryStatus {
    ReachedHorizon,
    BlowupDetected { estimated_time: f64, fit_residual: f64 },
    StepUnderflow,
    StepLimit,
}

impl TrajectoryStatus {
    pub fn name(&self) -> &'static str {
        match self {
            TrajectoryStatus::ReachedHorizon => "ReachedHorizon",
            TrajectoryStatus::BlowupDetected { .. } => "BlowupDetected",
            TrajectoryStatus::StepUnderflow => "StepUnderflow",
            TrajectoryStatus::StepLimit => "StepLimit",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub norms: Vec<f64>,
    pub status: TrajectoryStatus,
}

impl Trajectory {
    pub fn last_time(&self) -> f64 {
        *self.times.last().expect("trajectory holds the initial state")
    }

    pub fn last_state(&self) -> &StateVector {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn last_norm(&self) -> f64 {
        *self.norms.last().expect("trajectory holds the initial state")
    }

    fn push(&mut self, t: f64, x: Vec<f64>) {
        self.norms.push(norm(&x));
        self.times.push(t);
        self.states.push(StateVector::from_raw(x));
    }

    fn tail(&self, window: usize) -> Vec<(f64, f64)> {
        let start = self.times.len().saturating_sub(window);
        self.times[start..].iter().copied().zip(self.norms[start..].iter().copied()).collect()
    }

    /// Whether the trailing norms are strictly increasing.
    fn tail_growing(&self, window: usize) -> bool {
        let start = self.norms.len().saturating_sub(window);
        let tail = &self.norms[start..];
        tail.len() >= 2 && tail.windows(2).all(|w| w[1] > w[0])
    }
}

// Dormand–Prince 5(4) tableau. The system is autonomous, so the nodes c_i
// are not needed.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;
const PI_ALPHA: f64 = 0.7 / 5.0;
const PI_BETA: f64 = 0.4 / 5.0;

struct Stepper<'a> {
    q: &'a QuadraticMap,
    k: [Vec<f64>; 7],
    stage: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(q: &'a QuadraticMap) -> Self {
        let n = q.dim();
        Stepper { q, k: std::array::from_fn(|_| vec![0.0; n]), stage: vec![0.0; n] }
    }

    /// One trial step. `k[0]` must hold `Q(x)`. Returns the 5th-order
    /// solution and the error norm; on return `k[6]` holds `Q(x_new)` (FSAL).
    fn step(&mut self, x: &[f64], h: f64) -> (Vec<f64>, f64) {
        let n = x.len();
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (r, a) in A[s][..s].iter().enumerate() {
                    acc += a * self.k[r][i];
                }
                self.stage[i] = x[i] + h * acc;
            }
            self.q.eval_into(&self.stage, &mut self.k[s]);
        }
        // Stage 7 was evaluated at the 5th-order solution itself.
        let x_new = self.stage.clone();
        let mut err = vec![0.0; n];
        for (i, e) in err.iter_mut().enumerate() {
            let mut acc = 0.0;
            for s in 0..7 {
                acc += (B5[s] - B4[s]) * self.k[s][i];
            }
            *e = h * acc;
        }
        (x_new, norm(&err))
    }
}

/// Integrates `dX/dt = Q(X)` from `t = 0` until blowup, the horizon, step
/// underflow or the step limit, whichever comes first.
pub fn integrate(q: &QuadraticMap, x0: &StateVector, cfg: &IntegratorConfig) -> Result<Trajectory> {
    cfg.validate()?;
    if x0.dim() != q.dim() {
        return Err(Error::DimensionMismatch { expected: q.dim(), found: x0.dim() });
    }
    if !x0.is_finite() {
        return Err(Error::NonFinite("initial state"));
    }
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        norms: Vec::new(),
        status: TrajectoryStatus::StepLimit,
    };
    let mut x = x0.coords().to_vec();
    traj.push(0.0, x.clone());
    if traj.last_norm() >= cfg.r_max {
        return Err(Error::InvalidArgument("initial norm already exceeds r_max".into()));
    }

    let mut stepper = Stepper::new(q);
    q.eval_into(&x, &mut stepper.k[0]);
    let mut t = 0.0;
    let mut h = cfg.h_init.min(cfg.t_end);
    let mut err_prev = 1e-4f64;
    let mut rejected_last = false;
    let mut steps = 0usize;

    loop {
        let remaining = cfg.t_end - t;
        let clipped = h >= remaining;
        let h_try = if clipped { remaining } else { h };
        if !clipped && h_try < cfg.h_min {
            return underflow(traj, cfg, t);
        }
        let (x_new, err_abs) = stepper.step(&x, h_try);
        let scale = cfg.atol + cfg.rtol * norm(&x).max(norm(&x_new));
        let err = if x_new.iter().all(|v| v.is_finite()) && err_abs.is_finite() {
            err_abs / scale
        } else {
            f64::INFINITY
        };

        if err <= 1.0 {
            steps += 1;
            t = if clipped { cfg.t_end } else { t + h_try };
            x = x_new;
            stepper.k.swap(0, 6);
            traj.push(t, x.clone());

            let mut fac = if err == 0.0 {
                FAC_MAX
            } else {
                SAFETY * err.powf(-PI_ALPHA) * err_prev.powf(PI_BETA)
            };
            fac = fac.clamp(FAC_MIN, FAC_MAX);
            if rejected_last {
                fac = fac.min(1.0);
            }
            // A clipped final step says nothing about the attainable step size.
            if !clipped {
                h = h_try * fac;
            }
            err_prev = err.max(1e-4);
            rejected_last = false;

            if traj.last_norm() >= cfg.r_max {
                let tail = traj.tail(cfg.fit_window);
                let (estimated_time, fit_residual) = estimate_blowup_time(&tail)?;
                traj.status = TrajectoryStatus::BlowupDetected { estimated_time, fit_residual };
                return Ok(traj);
            }
            if t >= cfg.t_end {
                traj.status = TrajectoryStatus::ReachedHorizon;
                return Ok(traj);
            }
            if steps >= cfg.max_steps {
                traj.status = TrajectoryStatus::StepLimit;
                return Ok(traj);
            }
        } else {
            let fac = if err.is_finite() { (SAFETY * err.powf(-0.2)).max(FAC_MIN) } else { FAC_MIN };
            h = h_try * fac.min(1.0);
            rejected_last = true;
        }
    }
}

fn underflow(mut traj: Trajectory, cfg: &IntegratorConfig, t: f64) -> Result<Trajectory> {
    if traj.tail_growing(cfg.fit_window) {
        traj.status = TrajectoryStatus::StepUnderflow;
        Ok(traj)
    } else {
        Err(Error::IntegrationFailure {
            t,
            reason: "step size underflow without norm growth".into(),
        })
    }
}

/// Fits `1/‖X‖` against `t` by least squares; returns the root of the fitted
/// line and the RMS fit error relative to the mean of `1/‖X‖`.
pub fn estimate_blowup_time(tail: &[(f64, f64)]) -> Result<(f64, f64)> {
    if tail.len() < 3 {
        return Err(Error::InvalidArgument(format!("blowup fit needs >= 3 samples, got {}", tail.len())));
    }
    if tail.iter().any(|(t, r)| !t.is_finite() || !r.is_finite() || *r <= 0.0) {
        return Err(Error::InvalidArgument("blowup fit needs finite, positive norms".into()));
    }
    let m = tail.len() as f64;
    let t_mean = tail.iter().map(|(t, _)| t).sum::<f64>() / m;
    let ys: Vec<f64> = tail.iter().map(|(_, r)| 1.0 / r).collect();
    let y_mean = ys.iter().sum::<f64>() / m;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for ((t, _), y) in tail.iter().zip(&ys) {
        let dt = t - t_mean;
        sxx += dt * dt;
        sxy += dt * (y - y_mean);
    }
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("blowup fit needs distinct times".into()));
    }
    let slope = sxy / sxx;
    if slope >= 0.0 {
        return Err(Error::NoBlowupSignature { slope });
    }
    let t_est = t_mean - y_mean / slope;
    let sse: f64 = tail
        .iter()
        .zip(&ys)
        .map(|((t, _), y)| {
            let r = y - (y_mean + slope * (t - t_mean));
            r * r
        })
        .sum();
    let residual = (sse / m).sqrt() / y_mean;
    Ok((t_est, residual))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BlowupVerdict {
    Blowup(f64),
    NoBlowupWithinHorizon,
}

/// Blowup verdict for one initial condition. Step underflow and the step
/// limit are reported as [`Error::Inconclusive`].
pub fn classify_trajectory(
    q: &QuadraticMap,
    x0: &StateVector,
    cfg: &IntegratorConfig,
) -> Result<BlowupVerdict> {
    let traj = integrate(q, x0, cfg)?;
    match traj.status {
        TrajectoryStatus::BlowupDetected { estimated_time, .. } => Ok(BlowupVerdict::Blowup(estimated_time)),
        TrajectoryStatus::ReachedHorizon => Ok(BlowupVerdict::NoBlowupWithinHorizon),
        s @ (TrajectoryStatus::StepUnderflow | TrajectoryStatus::StepLimit) => {
            Err(Error::Inconclusive { status: s.name().to_string(), t: traj.last_time() })
        }
    }
}
