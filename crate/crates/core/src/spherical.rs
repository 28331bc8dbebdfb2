//! Invariant lines of `Q`, blowup certificates and circle-map degree.
//!
//! When `Q` has no nontrivial zero, `v ↦ Q(v)/‖Q(v)‖` maps the unit sphere to
//! itself and takes the same value on `v` and `−v`. A fixed point `v` of that
//! map spans a line with `Q(v) = λv`, `λ > 0`, and on the line `X = c·v` the
//! ODE reduces to the scalar equation `dc/dt = λc²`, which blows up at
//! `t = 1/(λ c₀)` whenever `λ c₀ > 0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{classify_trajectory, BlowupVerdict, IntegratorConfig};
use crate::error::{Error, Result};
use crate::quadratic::{min_norm_on_sphere, norm, QuadraticMap, StateVector, EPS_ZERO};
use crate::rng;

/// Residual bound `‖Q(v) − λv‖` for accepting an invariant line.
pub const EPS_LINE: f64 = 1e-10;

/// Relative tolerance between predicted and integrated blowup times.
pub const VERIFY_TOL: f64 = 1e-3;

const PRE_ITERATIONS: usize = 50;
const NEWTON_STEPS: usize = 100;
const POLISH_STEPS: usize = 3;
const DEDUP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantLine {
    #[serde(with = "coords_array")]
    pub v: StateVector,
    pub lambda: f64,
    pub residual: f64,
}

impl InvariantLine {
    /// Validates and normalizes a candidate: `v` is rescaled to unit length,
    /// `λ` recomputed, and the representative flipped so that `λ ≥ 0`.
    pub fn from_direction(q: &QuadraticMap, v: &StateVector) -> Result<Self> {
        let v = v.normalized()?;
        let qv = q.eval(&v)?;
        let mut lambda = v.dot(&qv);
        let residual = (&qv - &v.scaled(lambda)).norm();
        let v = if lambda < 0.0 {
            lambda = -lambda;
            -&v
        } else {
            v
        };
        Ok(InvariantLine { v, lambda, residual })
    }
}

/// How a certificate's blowup time was confirmed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerificationMethod {
    /// Integration of `dX/dt = Q(X)` from `c₀·v` in the original basis.
    Direct,
    /// Integration in an orthonormal basis whose first vector is `v`, with
    /// the line kept exactly invariant. Used when the line repels nearby
    /// directions so strongly that rounding pushes the direct run off it.
    LineAdapted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupCertificate {
    #[serde(flatten)]
    pub line: InvariantLine,
    pub c0: f64,
    pub predicted_time: f64,
    pub verified_time: Option<f64>,
    pub verification_error: Option<f64>,
    #[serde(default)]
    pub verification_method: Option<VerificationMethod>,
}

impl BlowupCertificate {
    pub fn x0(&self) -> StateVector {
        self.line.v.scaled(self.c0)
    }

    /// Integration confirmed the predicted time to [`VERIFY_TOL`].
    pub fn is_verified(&self) -> bool {
        self.verification_error.is_some_and(|e| e <= VERIFY_TOL)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeReport {
    pub degree: i64,
    pub lefschetz: i64,
    pub samples_used: usize,
}

/// Multistart search for invariant lines `Q(v) = λv`, `‖v‖ = 1`.
///
/// Each start runs a short sphere-map iteration to generate a candidate, then
/// Newton's method on `(v, λ)` from both the candidate and the raw start.
/// Lines are deduplicated up to sign, stored with `λ ≥ 0` and returned sorted
/// by `λ` descending. The search does not test `Q` for degeneracy.
pub fn find_invariant_lines(q: &QuadraticMap, starts: usize, seed: u64) -> Vec<InvariantLine> {
    let n = q.dim();
    let mut stream = rng::stream(seed);
    let mut lines: Vec<InvariantLine> = Vec::new();
    for _ in 0..starts {
        let v0 = rng::unit_vector(&mut stream, n);
        let candidate = pre_iterate(q, &v0);
        let mut tried = Vec::with_capacity(2);
        if let Some(c) = candidate {
            tried.push(c);
        }
        tried.push(v0);
        for start in tried {
            if let Some(line) = newton_line(q, &start) {
                let dup = lines.iter().any(|l| l.v.dot(&line.v).abs() >= 1.0 - DEDUP_TOL);
                if !dup {
                    lines.push(line);
                }
            }
        }
    }
    lines.sort_by(|a, b| b.lambda.total_cmp(&a.lambda));
    lines
}

fn pre_iterate(q: &QuadraticMap, v0: &[f64]) -> Option<Vec<f64>> {
    let mut v = v0.to_vec();
    for _ in 0..PRE_ITERATIONS {
        let qv = q.eval_slice(&v);
        let nq = norm(&qv);
        if nq <= EPS_ZERO || !nq.is_finite() {
            return None;
        }
        let next: Vec<f64> = qv.into_iter().map(|x| x / nq).collect();
        let moved = norm(&next.iter().zip(&v).map(|(a, b)| a - b).collect::<Vec<_>>());
        v = next;
        if moved < 1e-13 {
            break;
        }
    }
    Some(v)
}

fn residual(q: &QuadraticMap, v: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let n = q.dim();
    let qv = q.eval_slice(v.as_slice());
    let mut f = DVector::zeros(n + 1);
    for i in 0..n {
        f[i] = qv[i] - lambda * v[i];
    }
    f[n] = 0.5 * (v.norm_squared() - 1.0);
    f
}

/// Newton on `{Q(v) − λv = 0, (‖v‖² − 1)/2 = 0}`. The Jacobian is
/// `[[J_Q(v) − λI, −v], [vᵀ, 0]]`; it is solved by SVD so that lines lying
/// in a continuum of solutions (rank-deficient Jacobian) still converge.
fn newton_line(q: &QuadraticMap, start: &[f64]) -> Option<InvariantLine> {
    let n = q.dim();
    let mut v = DVector::from_column_slice(start);
    let mut lambda = v.dot(&DVector::from_vec(q.eval_slice(v.as_slice())));
    let mut f = residual(q, &v, lambda);
    let mut fnorm = f.norm();
    let mut converged_at = None;
    for it in 0..NEWTON_STEPS {
        if fnorm <= 0.01 * EPS_LINE && converged_at.is_none() {
            converged_at = Some(it);
        }
        if converged_at.is_some_and(|c| it >= c + POLISH_STEPS) || fnorm == 0.0 {
            break;
        }
        let mut jac = DMatrix::zeros(n + 1, n + 1);
        jac.view_mut((0, 0), (n, n)).copy_from(&q.jacobian(v.as_slice()));
        for i in 0..n {
            jac[(i, i)] -= lambda;
            jac[(i, n)] = -v[i];
            jac[(n, i)] = v[i];
        }
        let svd = jac.svd(true, true);
        let smax = svd.singular_values.max();
        let Ok(step) = svd.solve(&(-&f), 1e-13 * smax) else {
            return None;
        };
        // Backtracking keeps far-away starts from diverging.
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let v_try = &v + step.rows(0, n) * alpha;
            let l_try = lambda + alpha * step[n];
            let f_try = residual(q, &v_try, l_try);
            let fn_try = f_try.norm();
            if fn_try.is_finite() && (fn_try < fnorm || fnorm < EPS_LINE) {
                v = v_try;
                lambda = l_try;
                f = f_try;
                fnorm = fn_try;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let line = InvariantLine::from_direction(q, &StateVector::new(v.data.into()).ok()?).ok()?;
    (line.residual <= EPS_LINE).then_some(line)
}

/// Blowup time `1/(λ c₀)` on the line `X = c·v`, absent when `λ c₀ < 0`.
pub fn line_blowup_time(line: &InvariantLine, c0: f64) -> Result<Option<f64>> {
    if line.residual > EPS_LINE {
        return Err(Error::InvalidArgument(format!(
            "line residual {:e} exceeds {EPS_LINE:e}",
            line.residual
        )));
    }
    if c0 == 0.0 || !c0.is_finite() {
        return Err(Error::InvalidArgument("c0 must be finite and nonzero".into()));
    }
    if line.lambda == 0.0 {
        return Err(Error::NeutralLine);
    }
    let rate = line.lambda * c0;
    Ok((rate > 0.0).then(|| 1.0 / rate))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateOptions {
    /// Multistart budget; defaults to `50·n`.
    pub starts: Option<usize>,
    /// Confirm the predicted time by numerical integration.
    pub verify: bool,
    pub integrator: IntegratorConfig,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        CertificateOptions { starts: None, verify: true, integrator: IntegratorConfig::with_t_end(2.0) }
    }
}

/// Invariant-line blowup certificate for `Q`, verified by integration.
pub fn generic_blowup_certificate(q: &QuadraticMap, seed: u64) -> Result<BlowupCertificate> {
    blowup_certificate_with(q, seed, &CertificateOptions::default())
}

pub fn blowup_certificate_with(
    q: &QuadraticMap,
    seed: u64,
    opts: &CertificateOptions,
) -> Result<BlowupCertificate> {
    let starts = opts.starts.unwrap_or(50 * q.dim());
    let lines = find_invariant_lines(q, starts, seed);
    let Some(line) = lines.into_iter().find(|l| l.lambda > EPS_LINE) else {
        return Err(Error::CertificateSearchFailed { report: min_norm_on_sphere(q, starts, seed) });
    };
    let c0 = 1.0 / line.lambda;
    let predicted_time = line_blowup_time(&line, c0)?.ok_or(Error::NeutralLine)?;
    let mut cert = BlowupCertificate {
        line,
        c0,
        predicted_time,
        verified_time: None,
        verification_error: None,
        verification_method: None,
    };
    if opts.verify {
        verify_certificate(q, &mut cert, &opts.integrator)?;
    }
    Ok(cert)
}

/// Integrates from `c₀·v` and records the blowup time, first in the original
/// basis and, if that run does not confirm the prediction, in the
/// line-adapted basis.
pub fn verify_certificate(q: &QuadraticMap, cert: &mut BlowupCertificate, cfg: &IntegratorConfig) -> Result<()> {
    let attempts = [
        (VerificationMethod::Direct, None),
        (VerificationMethod::LineAdapted, Some(line_adapted_map(q, &cert.line.v)?)),
    ];
    for (method, adapted) in attempts {
        let verdict = match &adapted {
            None => classify_trajectory(q, &cert.x0(), cfg),
            Some(qa) => {
                let mut y0 = vec![0.0; q.dim()];
                y0[0] = cert.c0;
                classify_trajectory(qa, &StateVector::new(y0)?, cfg)
            }
        };
        if let Ok(BlowupVerdict::Blowup(t)) = verdict {
            let err = (t - cert.predicted_time).abs() / cert.predicted_time;
            cert.verified_time = Some(t);
            cert.verification_error = Some(err);
            cert.verification_method = Some(method);
            if err <= VERIFY_TOL {
                break;
            }
        }
    }
    Ok(())
}

/// `Q` in an orthonormal basis `R` with first column `v`:
/// `Q'(y) = Rᵀ Q(R y)`. The coefficients `c'[i][0][0]`, `i ≥ 1`, equal the
/// transverse part of `Q(v)` and are set to zero, which perturbs `Q` by at
/// most the line residual and makes the first axis exactly invariant.
pub fn line_adapted_map(q: &QuadraticMap, v: &StateVector) -> Result<QuadraticMap> {
    let n = q.dim();
    if v.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: v.dim() });
    }
    let r = orthonormal_completion(v.normalized()?.coords());
    // c'[i][j][k] = Σ_abc R[a][i] c[a][b][c] R[b][j] R[c][k], in three contractions.
    let idx = |a: usize, b: usize, c: usize| (a * n + b) * n + c;
    let mut t1 = vec![0.0; n * n * n];
    for a in 0..n {
        for b in 0..n {
            for k in 0..n {
                t1[idx(a, b, k)] = (0..n).map(|c| q.coeff(a, b, c) * r[(c, k)]).sum();
            }
        }
    }
    let mut t2 = vec![0.0; n * n * n];
    for a in 0..n {
        for j in 0..n {
            for k in 0..n {
                t2[idx(a, j, k)] = (0..n).map(|b| r[(b, j)] * t1[idx(a, b, k)]).sum();
            }
        }
    }
    let mut out = vec![0.0; n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                out[idx(i, j, k)] = (0..n).map(|a| r[(a, i)] * t2[idx(a, j, k)]).sum();
            }
        }
    }
    for i in 1..n {
        out[idx(i, 0, 0)] = 0.0;
    }
    QuadraticMap::new(n, out)
}

/// Orthogonal matrix whose first column is the unit vector `v` (Householder).
fn orthonormal_completion(v: &[f64]) -> DMatrix<f64> {
    let n = v.len();
    let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
    // H = I − 2uuᵀ/uᵀu with u = v + sign·e₀ maps e₀ to −sign·v.
    let mut u = DVector::from_column_slice(v);
    u[0] += sign;
    let uu = u.norm_squared();
    let mut h = DMatrix::<f64>::identity(n, n) - (&u * u.transpose()) * (2.0 / uu);
    let col0 = h.column(0).into_owned() * (-sign);
    h.set_column(0, &col0);
    h
}

const DEFAULT_DEGREE_SAMPLES: usize = 4096;
const MAX_DEGREE_SAMPLES: usize = 1 << 20;

/// Winding number of `θ ↦ Q(cos θ, sin θ)` for `n = 2`, with `L = 1 − deg`.
pub fn circle_map_degree(q: &QuadraticMap, samples: Option<usize>) -> Result<DegreeReport> {
    if q.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: q.dim() });
    }
    let report = min_norm_on_sphere(q, 16, 0);
    if report.is_degenerate {
        return Err(Error::DegenerateDirection { norm: report.min_norm });
    }
    let mut m = samples.unwrap_or(DEFAULT_DEGREE_SAMPLES).max(4);
    loop {
        if let Some(total) = winding(q, m)? {
            let turns = total / std::f64::consts::TAU;
            let degree = turns.round();
            if (turns - degree).abs() > 1e-6 {
                return Err(Error::ResolutionExceeded { samples: m });
            }
            let degree = degree as i64;
            return Ok(DegreeReport { degree, lefschetz: 1 - degree, samples_used: m });
        }
        if m >= MAX_DEGREE_SAMPLES {
            return Err(Error::ResolutionExceeded { samples: m });
        }
        m = (m * 2).min(MAX_DEGREE_SAMPLES);
    }
}

/// Total unwrapped angle over the closed loop, or `None` when some
/// consecutive jump reaches π/2.
fn winding(q: &QuadraticMap, m: usize) -> Result<Option<f64>> {
    let angle = |k: usize| -> Result<f64> {
        let th = std::f64::consts::TAU * (k % m) as f64 / m as f64;
        let w = q.eval_slice(&[th.cos(), th.sin()]);
        let nw = norm(&w);
        if nw <= EPS_ZERO {
            return Err(Error::DegenerateDirection { norm: nw });
        }
        Ok(w[1].atan2(w[0]))
    };
    let first = angle(0)?;
    let mut prev = first;
    let mut total = 0.0;
    for k in 1..=m {
        let a = if k == m { first } else { angle(k)? };
        let mut jump = a - prev;
        jump -= std::f64::consts::TAU * (jump / std::f64::consts::TAU).round();
        if jump.abs() >= std::f64::consts::FRAC_PI_2 {
            return Ok(None);
        }
        total += jump;
        prev = a;
    }
    Ok(Some(total))
}

mod coords_array {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::quadratic::StateVector;

    pub fn serialize<S: Serializer>(v: &StateVector, s: S) -> Result<S::Ok, S::Error> {
        v.coords().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<StateVector, D::Error> {
        StateVector::new(Vec::<f64>::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}
