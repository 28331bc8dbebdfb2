//! Homogeneous quadratic maps `Q: R^n → R^n`.
//!
//! `Q` is stored as a dense coefficient tensor `c[i][j][k]` (row-major, `i`
//! slowest) with `Q(X)_i = Σ_jk c[i][j][k] X_j X_k`. The tensor is kept
//! symmetric in `(j, k)` so the polarization `B(X, Y) = Q(X+Y) − Q(X) − Q(Y)`
//! is a direct contraction.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Threshold on `‖Q(v)‖` for unit `v` below which `Q` is treated as vanishing.
pub const EPS_ZERO: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StateVectorWire")]
pub struct StateVector {
    coords: Vec<f64>,
}

#[derive(Deserialize)]
struct StateVectorWire {
    coords: Vec<f64>,
}

impl TryFrom<StateVectorWire> for StateVector {
    type Error = Error;
    fn try_from(w: StateVectorWire) -> Result<Self> {
        StateVector::new(w.coords)
    }
}

impl StateVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidArgument("state vector must have dim >= 1".into()));
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("state vector"));
        }
        Ok(StateVector { coords })
    }

    pub fn zeros(dim: usize) -> Self {
        StateVector { coords: vec![0.0; dim.max(1)] }
    }

    /// Builds a vector without the finiteness check. Used internally where
    /// the caller inspects finiteness itself (e.g. integrator stages).
    pub(crate) fn from_raw(coords: Vec<f64>) -> Self {
        StateVector { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn norm(&self) -> f64 {
        norm(&self.coords)
    }

    pub fn scaled(&self, s: f64) -> StateVector {
        StateVector { coords: self.coords.iter().map(|x| s * x).collect() }
    }

    pub fn dot(&self, other: &StateVector) -> f64 {
        self.coords.iter().zip(&other.coords).map(|(a, b)| a * b).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|x| x.is_finite())
    }

    /// Unit vector in the same direction. Fails on the zero vector.
    pub fn normalized(&self) -> Result<StateVector> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::InvalidArgument("cannot normalize a zero vector".into()));
        }
        Ok(self.scaled(1.0 / n))
    }
}

impl std::ops::Add for &StateVector {
    type Output = StateVector;
    fn add(self, rhs: &StateVector) -> StateVector {
        StateVector::from_raw(self.coords.iter().zip(&rhs.coords).map(|(a, b)| a + b).collect())
    }
}

impl std::ops::Sub for &StateVector {
    type Output = StateVector;
    fn sub(self, rhs: &StateVector) -> StateVector {
        StateVector::from_raw(self.coords.iter().zip(&rhs.coords).map(|(a, b)| a - b).collect())
    }
}

impl std::ops::Neg for &StateVector {
    type Output = StateVector;
    fn neg(self) -> StateVector {
        self.scaled(-1.0)
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    // Scaled accumulation avoids overflow when integrating toward blowup.
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * x.iter().map(|v| (v / scale) * (v / scale)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticMap {
    dim: usize,
    coeffs: Vec<f64>,
}

impl QuadraticMap {
    /// Builds `Q` from a flat row-major tensor of length `dim³`, symmetrizing
    /// in the last two indices.
    pub fn new(dim: usize, coeffs: Vec<f64>) -> Result<Self> {
        Self::with_defect(dim, coeffs).map(|(q, _)| q)
    }

    /// Like [`QuadraticMap::new`], also returning the symmetrization defect
    /// `max |c[i][j][k] − c[i][k][j]|` of the input.
    pub fn with_defect(dim: usize, mut coeffs: Vec<f64>) -> Result<(Self, f64)> {
        if dim == 0 {
            return Err(Error::InvalidArgument("quadratic map must have dim >= 1".into()));
        }
        let len = dim
            .checked_mul(dim)
            .and_then(|v| v.checked_mul(dim))
            .ok_or_else(|| Error::InvalidArgument(format!("dimension {dim} overflows")))?;
        if coeffs.len() != len {
            return Err(Error::DimensionMismatch { expected: len, found: coeffs.len() });
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("quadratic map coefficients"));
        }
        let mut defect = 0.0f64;
        for i in 0..dim {
            for j in 0..dim {
                for k in (j + 1)..dim {
                    let a = i * dim * dim + j * dim + k;
                    let b = i * dim * dim + k * dim + j;
                    defect = defect.max((coeffs[a] - coeffs[b]).abs());
                    let avg = 0.5 * (coeffs[a] + coeffs[b]);
                    coeffs[a] = avg;
                    coeffs[b] = avg;
                }
            }
        }
        Ok((QuadraticMap { dim, coeffs }, defect))
    }

    /// Builds `Q` from a closure giving `c[i][j][k]`.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut coeffs = Vec::with_capacity(dim * dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    coeffs.push(f(i, j, k));
                }
            }
        }
        Self::new(dim, coeffs)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    #[inline]
    pub fn coeff(&self, i: usize, j: usize, k: usize) -> f64 {
        self.coeffs[(i * self.dim + j) * self.dim + k]
    }

    /// `s·Q`.
    pub fn scaled(&self, s: f64) -> QuadraticMap {
        QuadraticMap { dim: self.dim, coeffs: self.coeffs.iter().map(|c| s * c).collect() }
    }

    fn check_dim(&self, x: &StateVector) -> Result<()> {
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: x.dim() });
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("state vector"));
        }
        Ok(())
    }

    pub fn eval(&self, x: &StateVector) -> Result<StateVector> {
        self.check_dim(x)?;
        Ok(StateVector::from_raw(self.eval_slice(x.coords())))
    }

    /// Unchecked evaluation on a raw slice of length `dim`.
    pub(crate) fn eval_slice(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut out = vec![0.0; n];
        self.eval_into(x, &mut out);
        out
    }

    pub(crate) fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.dim;
        for (i, o) in out.iter_mut().enumerate() {
            let block = &self.coeffs[i * n * n..(i + 1) * n * n];
            let mut acc = 0.0;
            for (j, xj) in x.iter().enumerate() {
                let row = &block[j * n..(j + 1) * n];
                let inner: f64 = row.iter().zip(x).map(|(c, xk)| c * xk).sum();
                acc += xj * inner;
            }
            *o = acc;
        }
    }

    /// Polarization `B(X, Y)_i = Σ_jk c[i][j][k] (X_j Y_k + X_k Y_j)`.
    pub fn bilinear(&self, x: &StateVector, y: &StateVector) -> Result<StateVector> {
        self.check_dim(x)?;
        self.check_dim(y)?;
        let n = self.dim;
        let (x, y) = (x.coords(), y.coords());
        let out = (0..n)
            .map(|i| {
                let mut acc = 0.0;
                for j in 0..n {
                    for k in 0..n {
                        acc += self.coeff(i, j, k) * (x[j] * y[k] + x[k] * y[j]);
                    }
                }
                acc
            })
            .collect();
        Ok(StateVector::from_raw(out))
    }

    /// Jacobian of `Q` at `v`: `J w = B(v, w)`, i.e. `J_ij = 2 Σ_k c[i][j][k] v_k`.
    pub fn jacobian(&self, v: &[f64]) -> DMatrix<f64> {
        let n = self.dim;
        DMatrix::from_fn(n, n, |i, j| {
            let row = &self.coeffs[(i * n + j) * n..(i * n + j + 1) * n];
            2.0 * row.iter().zip(v).map(|(c, vk)| c * vk).sum::<f64>()
        })
    }

    /// The rescaled map `v ↦ Q(v)/‖Q(v)‖` on the unit sphere.
    pub fn sphere_map(&self, v: &StateVector) -> Result<StateVector> {
        self.check_dim(v)?;
        let nv = v.norm();
        if (nv - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("sphere_map needs a unit vector, |v| = {nv}")));
        }
        let q = self.eval_slice(v.coords());
        let nq = norm(&q);
        if nq <= EPS_ZERO {
            return Err(Error::DegenerateDirection { norm: nq });
        }
        Ok(StateVector::from_raw(q.into_iter().map(|x| x / nq).collect()))
    }
}

/// `Q(X) = −X·X` on `d×d` matrices flattened row-major, `(p, q) ↦ p·d + q`.
pub fn matrix_square_map(d: usize) -> Result<QuadraticMap> {
    if d == 0 {
        return Err(Error::InvalidArgument("matrix size must be >= 1".into()));
    }
    let n = d
        .checked_mul(d)
        .filter(|n| n.checked_mul(*n).and_then(|m| m.checked_mul(*n)).is_some())
        .ok_or_else(|| Error::InvalidArgument(format!("matrix size {d} overflows")))?;
    // (X·X)_{pq} = Σ_r X_{pr} X_{rq}
    let mut coeffs = vec![0.0; n * n * n];
    for p in 0..d {
        for q in 0..d {
            let i = p * d + q;
            for r in 0..d {
                let j = p * d + r;
                let k = r * d + q;
                coeffs[(i * n + j) * n + k] -= 0.5;
                coeffs[(i * n + k) * n + j] -= 0.5;
            }
        }
    }
    QuadraticMap::new(n, coeffs)
}

/// Gaussian random `Q`: i.i.d. standard normal entries, then symmetrized.
pub fn random_quadratic_map(n: usize, seed: u64) -> Result<QuadraticMap> {
    if n == 0 {
        return Err(Error::InvalidArgument("dimension must be >= 1".into()));
    }
    QuadraticMap::new(n, rng::normals(seed, n * n * n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyReport {
    pub min_norm: f64,
    pub argmin: StateVector,
    pub is_degenerate: bool,
}

const MIN_NORM_ITERS: usize = 200;

/// Multistart minimization of `‖Q(v)‖²` over the unit sphere.
///
/// Each start runs a Levenberg–Marquardt iteration restricted to the tangent
/// space at `v` followed by retraction onto the sphere. The verdict is a
/// numerical heuristic: a large minimum does not prove `Q` has no nontrivial
/// zero.
pub fn min_norm_on_sphere(q: &QuadraticMap, starts: usize, seed: u64) -> DegeneracyReport {
    let n = q.dim();
    let mut rng = rng::stream(seed);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..starts.max(1) {
        let v0 = rng::unit_vector(&mut rng, n);
        let (val, v) = minimize_from(q, v0);
        if best.as_ref().is_none_or(|(b, _)| val < *b) {
            best = Some((val, v));
        }
        if best.as_ref().is_some_and(|(b, _)| *b == 0.0) {
            break;
        }
    }
    let (_, v) = best.expect("at least one start");
    let argmin = StateVector::from_raw(v);
    let min_norm = norm(&q.eval_slice(argmin.coords()));
    DegeneracyReport { min_norm, argmin, is_degenerate: min_norm <= EPS_ZERO }
}

fn minimize_from(q: &QuadraticMap, v0: Vec<f64>) -> (f64, Vec<f64>) {
    let n = q.dim();
    let mut v = DVector::from_vec(v0);
    let mut r = DVector::from_vec(q.eval_slice(v.as_slice()));
    let mut f = r.norm_squared();
    let mut mu = 1e-3;
    for _ in 0..MIN_NORM_ITERS {
        if f == 0.0 {
            break;
        }
        let j = q.jacobian(v.as_slice());
        let g = j.transpose() * &r;
        let h = j.transpose() * &j;
        // Tangent-space step: [H + μI, v; vᵀ, 0] [δ; ν] = [−g; 0]
        let mut improved = false;
        for _ in 0..30 {
            let mut kkt = DMatrix::zeros(n + 1, n + 1);
            kkt.view_mut((0, 0), (n, n)).copy_from(&h);
            for i in 0..n {
                kkt[(i, i)] += mu * (1.0 + h[(i, i)]);
                kkt[(i, n)] = v[i];
                kkt[(n, i)] = v[i];
            }
            let mut rhs = DVector::zeros(n + 1);
            rhs.rows_mut(0, n).copy_from(&(-&g));
            let Some(sol) = kkt.lu().solve(&rhs) else {
                mu *= 10.0;
                continue;
            };
            let step = sol.rows(0, n).into_owned();
            let cand = (&v + &step).normalize();
            let rc = DVector::from_vec(q.eval_slice(cand.as_slice()));
            let fc = rc.norm_squared();
            if fc < f {
                let rel = (f - fc) / f;
                v = cand;
                r = rc;
                f = fc;
                mu = (mu * 0.3).max(1e-12);
                improved = rel > 1e-14;
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (f.sqrt(), v.data.into())
}
