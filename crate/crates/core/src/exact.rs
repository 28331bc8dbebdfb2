//! Closed-form solutions of `dx/dt = −x²` and `dX/dt = −X·X`.
//!
//! With `x(0) = a` the scalar solution is `a/(1 + a t)`; the matrix solution
//! with `X(0) = A` is the resolvent form `A (I + tA)⁻¹`, which needs no
//! invertibility of `A`. Blowup happens exactly where `I + tA` is singular,
//! i.e. at `t = −1/λ` for real eigenvalues `λ` of `A`.

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for declaring an eigenvalue real: `|Im λ| ≤ τ (1 + |λ|)`.
pub const TAU_IM: f64 = 1e-9;

const SINGULAR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SquareMatrixWire")]
pub struct SquareMatrix {
    d: usize,
    entries: Vec<f64>,
}

#[derive(Deserialize)]
struct SquareMatrixWire {
    d: usize,
    entries: Vec<f64>,
}

impl TryFrom<SquareMatrixWire> for SquareMatrix {
    type Error = Error;
    fn try_from(w: SquareMatrixWire) -> Result<Self> {
        SquareMatrix::new(w.d, w.entries)
    }
}

impl SquareMatrix {
    pub fn new(d: usize, entries: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("matrix size must be >= 1".into()));
        }
        if entries.len() != d * d {
            return Err(Error::DimensionMismatch { expected: d * d, found: entries.len() });
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(SquareMatrix { d, entries })
    }

    pub fn identity(d: usize) -> Self {
        Self::diag(&vec![1.0; d])
    }

    pub fn diag(values: &[f64]) -> Self {
        let d = values.len();
        let mut entries = vec![0.0; d * d];
        for (i, v) in values.iter().enumerate() {
            entries[i * d + i] = *v;
        }
        SquareMatrix { d, entries }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Row-major entries; this is also the flattening used by
    /// [`matrix_square_map`](crate::quadratic::matrix_square_map).
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.d + col]
    }

    pub fn frobenius_norm(&self) -> f64 {
        crate::quadratic::norm(&self.entries)
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.d, self.d, &self.entries)
    }

    pub(crate) fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        let d = m.nrows();
        let entries = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| m[(i, j)]).collect();
        SquareMatrix { d, entries }
    }
}

/// Scalar initial value problem `dx/dt = −x²`, `x(0) = a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarSolution {
    pub a: f64,
    /// Forward pole `−1/a`, present iff `a < 0`.
    pub blowup_time: Option<f64>,
}

impl ScalarSolution {
    pub fn new(a: f64) -> Self {
        let blowup_time = (a < 0.0).then(|| -1.0 / a);
        ScalarSolution { a, blowup_time }
    }

    pub fn at(&self, t: f64) -> Result<f64> {
        scalar_solution(self.a, t)
    }
}

/// `x(t) = a/(1 + a t)`; fails at or beyond the pole `−1/a` along `[0, t]`.
pub fn scalar_solution(a: f64, t: f64) -> Result<f64> {
    if !a.is_finite() || !t.is_finite() {
        return Err(Error::NonFinite("scalar initial value or time"));
    }
    let denom = 1.0 + a * t;
    if a != 0.0 {
        let pole = -1.0 / a;
        let crossed = if t >= 0.0 { pole > 0.0 && pole <= t } else { pole < 0.0 && pole >= t };
        if crossed || denom.abs() <= SINGULAR_TOL * (1.0 + (a * t).abs()) {
            return Err(Error::PoleCrossed { pole_time: pole });
        }
    }
    Ok(a / denom)
}

/// `X(t) = A (I + tA)⁻¹`, the solution of `dX/dt = −X·X` with `X(0) = A`.
pub fn matrix_solution(a: &SquareMatrix, t: f64) -> Result<SquareMatrix> {
    if !t.is_finite() {
        return Err(Error::NonFinite("time"));
    }
    let d = a.d();
    let am = a.to_dmatrix();
    let m = DMatrix::<f64>::identity(d, d) + &am * t;
    let row_norms: f64 = m.row_iter().map(|r| r.norm()).product();
    let lu = m.lu();
    let det = lu.determinant();
    if row_norms == 0.0 || det.abs() < SINGULAR_TOL * row_norms {
        return Err(Error::BlowupSurface { t });
    }
    // A commutes with (I + tA)⁻¹, so A (I + tA)⁻¹ = (I + tA)⁻¹ A.
    let x = lu.solve(&am).ok_or(Error::BlowupSurface { t })?;
    Ok(SquareMatrix::from_dmatrix(&x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlowupClass {
    ForwardBlowup,
    BackwardOnlyBlowup,
    NoRealBlowup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    #[serde(with = "complex_list")]
    pub eigenvalues: Vec<Complex64>,
    /// Real parts of the eigenvalues that pass the realness test.
    pub real_eigenvalues: Vec<f64>,
    pub classification: BlowupClass,
    pub forward_blowup_time: Option<f64>,
    /// Latest negative time with `I + tA` singular (`−1/λ` for the smallest positive real `λ`).
    pub backward_blowup_time: Option<f64>,
}

impl SpectralReport {
    /// Some real `t ≠ 0` (either sign) makes `I + tA` singular.
    pub fn has_nonzero_real_eigenvalue(&self) -> bool {
        self.real_eigenvalues.iter().any(|l| l.abs() > TAU_IM * (1.0 + l.abs()))
    }
}

pub fn is_real_eigenvalue(l: Complex64) -> bool {
    l.im.abs() <= TAU_IM * (1.0 + l.norm())
}

pub fn real_spectrum(a: &SquareMatrix) -> Result<SpectralReport> {
    let eigenvalues = eigenvalues(a)?;
    Ok(classify_spectrum(eigenvalues))
}

fn eigenvalues(a: &SquareMatrix) -> Result<Vec<Complex64>> {
    let d = a.d();
    if d == 1 {
        return Ok(vec![Complex64::new(a.entries[0], 0.0)]);
    }
    let schur = Schur::try_new(a.to_dmatrix(), f64::EPSILON, 10_000 * d)
        .ok_or(Error::EigenFailure { d, norm: a.frobenius_norm() })?;
    let ev: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
    if ev.iter().any(|l| !l.re.is_finite() || !l.im.is_finite()) {
        return Err(Error::EigenFailure { d, norm: a.frobenius_norm() });
    }
    Ok(ev)
}

fn classify_spectrum(eigenvalues: Vec<Complex64>) -> SpectralReport {
    let real_eigenvalues: Vec<f64> =
        eigenvalues.iter().copied().filter(|l| is_real_eigenvalue(*l)).map(|l| l.re).collect();
    let nonzero = |l: f64| l.abs() > TAU_IM * (1.0 + l.abs());
    let most_negative = real_eigenvalues
        .iter()
        .copied()
        .filter(|l| *l < 0.0 && nonzero(*l))
        .fold(None, |m: Option<f64>, l| Some(m.map_or(l, |m| m.min(l))));
    let most_positive = real_eigenvalues
        .iter()
        .copied()
        .filter(|l| *l > 0.0 && nonzero(*l))
        .fold(None, |m: Option<f64>, l| Some(m.map_or(l, |m| m.max(l))));
    let classification = match (most_negative, most_positive) {
        (Some(_), _) => BlowupClass::ForwardBlowup,
        (None, Some(_)) => BlowupClass::BackwardOnlyBlowup,
        (None, None) => BlowupClass::NoRealBlowup,
    };
    SpectralReport {
        eigenvalues,
        real_eigenvalues,
        classification,
        forward_blowup_time: most_negative.map(|l| -1.0 / l),
        backward_blowup_time: most_positive.map(|l| -1.0 / l),
    }
}

/// Least `t > 0` with `det(I + tA) = 0`, if any.
pub fn matrix_blowup_time(a: &SquareMatrix) -> Result<Option<f64>> {
    Ok(real_spectrum(a)?.forward_blowup_time)
}

mod complex_list {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct ReIm {
        re: f64,
        im: f64,
    }

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|c| ReIm { re: c.re, im: c.im }).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        Ok(Vec::<ReIm>::deserialize(d)?.into_iter().map(|c| Complex64::new(c.re, c.im)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(d: usize, e: &[f64]) -> SquareMatrix {
        SquareMatrix::new(d, e.to_vec()).unwrap()
    }

    fn rotation() -> SquareMatrix {
        m(2, &[0.0, -1.0, 1.0, 0.0])
    }

    #[test]
    fn scalar_examples() {
        assert_eq!(scalar_solution(-1.0, 0.5).unwrap(), -2.0);
        assert!((scalar_solution(1.0, 1e6).unwrap() - 1.0 / (1.0 + 1e6)).abs() < 1e-18);
        assert_eq!(ScalarSolution::new(1.0).blowup_time, None);
        match scalar_solution(-2.0, 0.5) {
            Err(Error::PoleCrossed { pole_time }) => assert_eq!(pole_time, 0.5),
            other => panic!("{other:?}"),
        }
        assert!(matches!(scalar_solution(-2.0, 3.0), Err(Error::PoleCrossed { .. })));
        // Backward pole for positive a.
        assert!(matches!(scalar_solution(2.0, -1.0), Err(Error::PoleCrossed { .. })));
        assert_eq!(ScalarSolution::new(-4.0).blowup_time, Some(0.25));
    }

    #[test]
    fn matrix_solution_examples() {
        let x = matrix_solution(&SquareMatrix::diag(&[-1.0, 1.0]), 0.5).unwrap();
        assert!((x.get(0, 0) + 2.0).abs() < 1e-15);
        assert!((x.get(1, 1) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(x.get(0, 1), 0.0);

        let x = matrix_solution(&SquareMatrix::identity(2), 1.0).unwrap();
        assert_eq!(x.entries(), &[0.5, 0.0, 0.0, 0.5]);

        for t in [0.1, 1.0, 7.0, 1e3] {
            let x = matrix_solution(&rotation(), t).unwrap();
            // A (I + tA)⁻¹ = [[t, -1], [1, t]] / (1 + t²)
            let s = 1.0 + t * t;
            let expect = [t / s, -1.0 / s, 1.0 / s, t / s];
            for (a, b) in x.entries().iter().zip(expect) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn matrix_solution_singular_surface() {
        match matrix_solution(&SquareMatrix::diag(&[-1.0, 1.0]), 1.0) {
            Err(Error::BlowupSurface { t }) => assert_eq!(t, 1.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn matrix_solution_singular_a_is_fine() {
        let a = m(2, &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(matrix_solution(&a, 3.0).unwrap(), a);
    }

    #[test]
    fn spectrum_examples() {
        let r = real_spectrum(&SquareMatrix::diag(&[-1.0, 1.0])).unwrap();
        let mut re = r.real_eigenvalues.clone();
        re.sort_by(f64::total_cmp);
        assert_eq!(re, vec![-1.0, 1.0]);
        assert_eq!(r.classification, BlowupClass::ForwardBlowup);
        assert_eq!(r.forward_blowup_time, Some(1.0));

        let r = real_spectrum(&rotation()).unwrap();
        assert!(r.real_eigenvalues.is_empty());
        assert_eq!(r.classification, BlowupClass::NoRealBlowup);
        assert!(r.eigenvalues.iter().all(|l| l.re.abs() < 1e-15 && (l.im.abs() - 1.0).abs() < 1e-15));

        let r = real_spectrum(&SquareMatrix::identity(2)).unwrap();
        assert_eq!(r.real_eigenvalues, vec![1.0, 1.0]);
        assert_eq!(r.classification, BlowupClass::BackwardOnlyBlowup);
        assert_eq!(r.backward_blowup_time, Some(-1.0));
    }

    #[test]
    fn blowup_time_examples() {
        let t = matrix_blowup_time(&SquareMatrix::diag(&[-2.0, -0.5, 3.0])).unwrap().unwrap();
        assert!((t - 0.5).abs() < 1e-12);
        assert_eq!(matrix_blowup_time(&SquareMatrix::identity(3)).unwrap(), None);
        assert_eq!(matrix_blowup_time(&m(2, &[0.0; 4])).unwrap(), None);
        assert_eq!(real_spectrum(&m(3, &[0.0; 9])).unwrap().classification, BlowupClass::NoRealBlowup);
    }

    #[test]
    fn schur_path_matches_known_spectrum() {
        // Companion matrix of (x+1)(x-2)(x²+1) = x⁴ - x³ - x² - x - 2
        let a = m(4, &[
            1.0, 1.0, 1.0, 2.0,
            1.0, 0.0, 0.0, 0.0,
            0.0, 1.0, 0.0, 0.0,
            0.0, 0.0, 1.0, 0.0,
        ]);
        let r = real_spectrum(&a).unwrap();
        let mut re = r.real_eigenvalues.clone();
        re.sort_by(f64::total_cmp);
        assert_eq!(re.len(), 2);
        assert!((re[0] + 1.0).abs() < 1e-10 && (re[1] - 2.0).abs() < 1e-10);
        assert!((r.forward_blowup_time.unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn two_by_two_realness_matches_discriminant() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..2000 {
            let e: Vec<f64> = (0..4).map(|_| StandardNormal.sample(&mut rng)).collect();
            let disc = (e[0] - e[3]).powi(2) + 4.0 * e[1] * e[2];
            if disc.abs() < 1e-6 {
                continue;
            }
            let r = real_spectrum(&m(2, &e)).unwrap();
            assert_eq!(r.real_eigenvalues.len() == 2, disc > 0.0, "{e:?}");
        }
    }

    #[test]
    fn square_matrix_validation() {
        assert!(SquareMatrix::new(0, vec![]).is_err());
        assert!(SquareMatrix::new(2, vec![1.0; 3]).is_err());
        assert!(SquareMatrix::new(1, vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn spectral_report_json_shape() {
        let r = real_spectrum(&rotation()).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert!(v["eigenvalues"][0]["re"].is_number());
        assert!(v["eigenvalues"][0]["im"].is_number());
        assert_eq!(v["classification"], "NoRealBlowup");
    }
}
