//! Seeded Monte Carlo experiments.
//!
//! - Q1: draw Gaussian `Q` and ask whether an invariant-line blowup
//!   certificate exists.
//! - Q2: draw Gaussian `A` and ask whether `dX/dt = −X·X`, `X(0) = A` blows
//!   up in forward time.
//!
//! Sample `i` uses the seed `derive_seed(master_seed, i)` and nothing else, so
//! results are identical for any number of worker threads.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{classify_trajectory, BlowupVerdict, IntegratorConfig};
use crate::error::{Error, Result};
use crate::exact::{real_spectrum, BlowupClass, SquareMatrix};
use crate::quadratic::{matrix_square_map, random_quadratic_map, QuadraticMap, StateVector};
use crate::rng::{derive_seed, normals, unit_from_seed};
use crate::spherical::{blowup_certificate_with, CertificateOptions, VerificationMethod};
use crate::TOOL_VERSION;

pub const WILSON_Z: f64 = 1.959964;
const MAX_FAILURE_CASES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum EnsembleKind {
    Q1RandomQ { n: usize },
    Q2MatrixCase { d: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub n_samples: u64,
    pub master_seed: u64,
    pub integrator: IntegratorConfig,
    pub verify_fraction: f64,
}

impl EnsembleSpec {
    /// Q1 spec; verification integrates to `t = 2` (certificates are
    /// normalized to blow up at `t = 1`).
    pub fn q1(n: usize, n_samples: u64, master_seed: u64) -> Self {
        EnsembleSpec {
            kind: EnsembleKind::Q1RandomQ { n },
            n_samples,
            master_seed,
            integrator: IntegratorConfig::with_t_end(2.0),
            verify_fraction: 0.05,
        }
    }

    pub fn q2(d: usize, n_samples: u64, master_seed: u64) -> Self {
        EnsembleSpec {
            kind: EnsembleKind::Q2MatrixCase { d },
            n_samples,
            master_seed,
            integrator: IntegratorConfig::with_t_end(10.0),
            verify_fraction: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidArgument("n_samples must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.verify_fraction) {
            return Err(Error::InvalidArgument("verify_fraction must lie in [0, 1]".into()));
        }
        match self.kind {
            EnsembleKind::Q1RandomQ { n: 0 } | EnsembleKind::Q2MatrixCase { d: 0 } => {
                return Err(Error::InvalidArgument("dimension must be >= 1".into()))
            }
            _ => {}
        }
        self.integrator.validate()
    }

    fn sample_seed(&self, index: u64) -> u64 {
        derive_seed(self.master_seed, index)
    }

    fn is_verified_sample(&self, seed: u64) -> bool {
        unit_from_seed(seed) < self.verify_fraction
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureCase {
    pub sample_index: u64,
    pub diagnostic: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Companion {
    Q1 {
        verified_samples: u64,
        /// Verified samples that needed the line-adapted basis.
        line_adapted_verifications: u64,
        max_verification_error: Option<f64>,
    },
    Q2 {
        /// Samples with a nonzero real eigenvalue: blowup at some real time.
        any_real_eigenvalue: u64,
        any_real_fraction: f64,
        any_real_ci: [f64; 2],
        verification_samples: u64,
        agreements: u64,
        disagreements: u64,
        inconclusive: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub spec: EnsembleSpec,
    pub successes: u64,
    pub failures: u64,
    pub estimate: f64,
    pub ci: [f64; 2],
    pub companion: Option<Companion>,
    pub failures_detail: Vec<FailureCase>,
    pub wall_time_seconds: f64,
    pub tool_version: String,
}

impl EnsembleResult {
    pub fn ci_low(&self) -> f64 {
        self.ci[0]
    }

    pub fn ci_high(&self) -> f64 {
        self.ci[1]
    }

    fn assemble(
        spec: &EnsembleSpec,
        successes: u64,
        companion: Companion,
        mut diagnostics: Vec<FailureCase>,
        started: Instant,
    ) -> Self {
        let n = spec.n_samples;
        diagnostics.sort_by_key(|f| f.sample_index);
        diagnostics.truncate(MAX_FAILURE_CASES);
        let (lo, hi) = wilson_interval(successes, n);
        EnsembleResult {
            spec: spec.clone(),
            successes,
            failures: n - successes,
            estimate: successes as f64 / n as f64,
            ci: [lo, hi],
            companion: Some(companion),
            failures_detail: diagnostics,
            wall_time_seconds: started.elapsed().as_secs_f64(),
            tool_version: TOOL_VERSION.to_string(),
        }
    }
}

/// 95% Wilson score interval for `successes` out of `n`.
pub fn wilson_interval(successes: u64, n: u64) -> (f64, f64) {
    assert!(n >= 1 && successes <= n, "wilson_interval needs 0 <= successes <= n, n >= 1");
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = WILSON_Z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let lo = if successes == 0 { 0.0 } else { (center - half).clamp(0.0, p) };
    let hi = if successes == n { 1.0 } else { (center + half).clamp(p, 1.0) };
    (lo, hi)
}

/// `d×d` matrix with i.i.d. standard normal entries from the ChaCha stream
/// keyed by `seed`.
pub fn sample_gaussian_matrix(d: usize, seed: u64) -> Result<SquareMatrix> {
    SquareMatrix::new(d, normals(seed, d * d))
}

fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs either experiment according to `spec.kind`.
pub fn run_ensemble(spec: &EnsembleSpec, workers: Option<usize>) -> Result<EnsembleResult> {
    match spec.kind {
        EnsembleKind::Q1RandomQ { n } => {
            run_q1_with_sampler(spec, workers, move |_, seed| random_quadratic_map(n, seed))
        }
        EnsembleKind::Q2MatrixCase { .. } => run_q2_with_workers(spec, workers),
    }
}

pub fn run_q1_experiment(spec: &EnsembleSpec) -> Result<EnsembleResult> {
    let EnsembleKind::Q1RandomQ { n } = spec.kind else {
        return Err(Error::InvalidArgument("expected a Q1 ensemble spec".into()));
    };
    run_q1_with_sampler(spec, None, move |_, seed| random_quadratic_map(n, seed))
}

pub fn run_q2_matrix_experiment(spec: &EnsembleSpec) -> Result<EnsembleResult> {
    run_q2_with_workers(spec, None)
}

struct Q1Outcome {
    success: bool,
    verification_error: Option<f64>,
    verified: bool,
    line_adapted: bool,
    diagnostic: Option<String>,
}

/// Q1 with a caller-supplied sampler `(index, seed) -> Q`.
pub fn run_q1_with_sampler<F>(spec: &EnsembleSpec, workers: Option<usize>, sampler: F) -> Result<EnsembleResult>
where
    F: Fn(u64, u64) -> Result<QuadraticMap> + Sync,
{
    spec.validate()?;
    if !matches!(spec.kind, EnsembleKind::Q1RandomQ { .. }) {
        return Err(Error::InvalidArgument("expected a Q1 ensemble spec".into()));
    }
    let started = Instant::now();
    let outcomes: Vec<Q1Outcome> = with_pool(workers, || {
        (0..spec.n_samples).into_par_iter().map(|i| q1_sample(spec, i, &sampler)).collect()
    })?;

    let successes = outcomes.iter().filter(|o| o.success).count() as u64;
    let verified_samples = outcomes.iter().filter(|o| o.verified).count() as u64;
    let line_adapted_verifications = outcomes.iter().filter(|o| o.line_adapted).count() as u64;
    let max_verification_error =
        outcomes.iter().filter_map(|o| o.verification_error).fold(None, |m: Option<f64>, e| {
            Some(m.map_or(e, |m| m.max(e)))
        });
    let diagnostics = outcomes
        .iter()
        .enumerate()
        .filter_map(|(i, o)| {
            o.diagnostic.as_ref().map(|d| FailureCase { sample_index: i as u64, diagnostic: d.clone() })
        })
        .take(MAX_FAILURE_CASES)
        .collect();
    Ok(EnsembleResult::assemble(
        spec,
        successes,
        Companion::Q1 { verified_samples, line_adapted_verifications, max_verification_error },
        diagnostics,
        started,
    ))
}

fn q1_sample<F>(spec: &EnsembleSpec, index: u64, sampler: &F) -> Q1Outcome
where
    F: Fn(u64, u64) -> Result<QuadraticMap>,
{
    let seed = spec.sample_seed(index);
    let verify = spec.is_verified_sample(seed);
    let fail = |diagnostic: String| Q1Outcome {
        success: false,
        verification_error: None,
        verified: verify,
        line_adapted: false,
        diagnostic: Some(diagnostic),
    };
    let q = match sampler(index, seed) {
        Ok(q) => q,
        Err(e) => return fail(e.to_string()),
    };
    let opts = CertificateOptions { starts: None, verify, integrator: spec.integrator.clone() };
    match blowup_certificate_with(&q, seed, &opts) {
        Err(e) => fail(e.to_string()),
        Ok(cert) if verify && !cert.is_verified() => fail(format!(
            "verification failed: predicted {} verified {:?} error {:?}",
            cert.predicted_time, cert.verified_time, cert.verification_error
        )),
        Ok(cert) => Q1Outcome {
            success: true,
            verification_error: cert.verification_error,
            verified: verify,
            line_adapted: cert.verification_method == Some(VerificationMethod::LineAdapted),
            diagnostic: None,
        },
    }
}

#[derive(Default)]
struct Q2Outcome {
    forward: bool,
    any_real: bool,
    verified: bool,
    agree: Option<bool>,
    inconclusive: bool,
    diagnostic: Option<String>,
}

fn run_q2_with_workers(spec: &EnsembleSpec, workers: Option<usize>) -> Result<EnsembleResult> {
    spec.validate()?;
    let EnsembleKind::Q2MatrixCase { d } = spec.kind else {
        return Err(Error::InvalidArgument("expected a Q2 ensemble spec".into()));
    };
    let q = matrix_square_map(d)?;
    let started = Instant::now();
    let outcomes: Vec<Q2Outcome> = with_pool(workers, || {
        (0..spec.n_samples).into_par_iter().map(|i| q2_sample(spec, d, &q, i)).collect()
    })?;

    let count = |f: fn(&Q2Outcome) -> bool| outcomes.iter().filter(|o| f(o)).count() as u64;
    let successes = count(|o| o.forward);
    let any_real = count(|o| o.any_real);
    let (lo, hi) = wilson_interval(any_real, spec.n_samples);
    let companion = Companion::Q2 {
        any_real_eigenvalue: any_real,
        any_real_fraction: any_real as f64 / spec.n_samples as f64,
        any_real_ci: [lo, hi],
        verification_samples: count(|o| o.verified),
        agreements: count(|o| o.agree == Some(true)),
        disagreements: count(|o| o.agree == Some(false)),
        inconclusive: count(|o| o.inconclusive),
    };
    let diagnostics = outcomes
        .iter()
        .enumerate()
        .filter_map(|(i, o)| {
            o.diagnostic.as_ref().map(|d| FailureCase { sample_index: i as u64, diagnostic: d.clone() })
        })
        .take(MAX_FAILURE_CASES)
        .collect();
    Ok(EnsembleResult::assemble(spec, successes, companion, diagnostics, started))
}

fn q2_sample(spec: &EnsembleSpec, d: usize, q: &QuadraticMap, index: u64) -> Q2Outcome {
    let seed = spec.sample_seed(index);
    let a = match sample_gaussian_matrix(d, seed) {
        Ok(a) => a,
        Err(e) => return Q2Outcome { diagnostic: Some(e.to_string()), ..Default::default() },
    };
    let report = match real_spectrum(&a) {
        Ok(r) => r,
        Err(e) => return Q2Outcome { diagnostic: Some(e.to_string()), ..Default::default() },
    };
    let mut out = Q2Outcome {
        forward: report.classification == BlowupClass::ForwardBlowup,
        any_real: report.has_nonzero_real_eigenvalue(),
        ..Default::default()
    };
    if !spec.is_verified_sample(seed) {
        return out;
    }
    out.verified = true;
    let t_end = spec.integrator.t_end;
    let spectral_blowup = report.forward_blowup_time.is_some_and(|t| t <= t_end);
    let x0 = StateVector::new(a.entries().to_vec()).expect("finite gaussian entries");
    match classify_trajectory(q, &x0, &spec.integrator) {
        Ok(verdict) => {
            let numeric_blowup = matches!(verdict, BlowupVerdict::Blowup(_));
            out.agree = Some(numeric_blowup == spectral_blowup);
            if numeric_blowup != spectral_blowup {
                out.diagnostic = Some(format!(
                    "spectral/dynamical disagreement: spectral blowup time {:?}, integration {:?}",
                    report.forward_blowup_time, verdict
                ));
            }
        }
        Err(e) => {
            out.inconclusive = true;
            out.diagnostic = Some(format!("inconclusive verification: {e}"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_boundaries() {
        assert_eq!(wilson_interval(0, 1).0, 0.0);
        assert_eq!(wilson_interval(7, 7).1, 1.0);
        let (lo, hi) = wilson_interval(500, 1000);
        assert!(((lo + hi) / 2.0 - 0.5).abs() < 1e-12);
        // z/(1 + z²/n) · sqrt(1/(4n) + z²/(4n²)) · 2
        let n = 1000.0;
        let z = WILSON_Z;
        let width = 2.0 * z / (1.0 + z * z / n) * (0.25 / n + z * z / (4.0 * n * n)).sqrt();
        assert!((hi - lo - width).abs() < 1e-12);
        assert!((hi - lo - 0.062).abs() < 5e-4);
    }

    #[test]
    fn gaussian_matrix_deterministic() {
        assert_eq!(sample_gaussian_matrix(2, 7).unwrap(), sample_gaussian_matrix(2, 7).unwrap());
        assert_ne!(sample_gaussian_matrix(2, 7).unwrap(), sample_gaussian_matrix(2, 8).unwrap());
    }

    #[test]
    fn gaussian_matrix_moments() {
        let mut sum = 0.0;
        let mut sq = 0.0;
        let mut count = 0.0;
        for i in 0..250_000u64 {
            let a = sample_gaussian_matrix(2, derive_seed(3, i)).unwrap();
            for x in a.entries() {
                sum += x;
                sq += x * x;
                count += 1.0;
            }
        }
        let mean = sum / count;
        let var = sq / count - mean * mean;
        assert!(mean.abs() < 0.004, "mean {mean}");
        assert!((var - 1.0).abs() < 0.005, "var {var}");
    }

    #[test]
    fn q1_injected_degenerate() {
        let spec = EnsembleSpec::q1(2, 1, 5);
        let res = run_q1_with_sampler(&spec, Some(1), |_, _| QuadraticMap::new(2, vec![0.0; 8])).unwrap();
        assert_eq!(res.estimate, 0.0);
        assert_eq!(res.failures, 1);
        assert!(res.failures_detail[0].diagnostic.contains("certificate search failed"));
    }

    #[test]
    fn q2_scalar_case() {
        let mut spec = EnsembleSpec::q2(1, 4000, 11);
        spec.verify_fraction = 0.02;
        let res = run_q2_matrix_experiment(&spec).unwrap();
        assert!(res.ci_low() <= 0.5 && 0.5 <= res.ci_high(), "{:?}", res.ci);
        match res.companion {
            Some(Companion::Q2 { any_real_fraction, disagreements, .. }) => {
                assert_eq!(any_real_fraction, 1.0);
                assert_eq!(disagreements, 0);
            }
            ref c => panic!("{c:?}"),
        }
    }

    #[test]
    fn spec_validation() {
        let mut spec = EnsembleSpec::q2(2, 0, 1);
        assert!(spec.validate().is_err());
        spec.n_samples = 1;
        spec.verify_fraction = 1.5;
        assert!(spec.validate().is_err());
        assert!(EnsembleSpec::q1(0, 1, 1).validate().is_err());
    }
}
