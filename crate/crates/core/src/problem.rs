//! Finite-sum variational inequality problems.
//!
//! A problem is a set of `n` local operators `F_i : R^d -> R^d`; the aggregate
//! operator is `F(z) = (1/n) Σ_i F_i(z)` and a solution is any `z*` with
//! `F(z*) = 0`. All families here are affine, `F_i(z) = M_i z + q_i`.
//!
//! Three families are provided:
//!
//! * [`BilinearSaddleProblem`]: the regularized bilinear saddle point
//!   `g(x, y) = (1/n) Σ_i [xᵀA_i y + a_iᵀx + b_iᵀy + λ/2‖x‖² − λ/2‖y‖²]`,
//!   whose operator is `F_i(x, y) = (A_i y + a_i + λx, λy − A_iᵀx − b_i)`.
//! * [`QuadraticMinProblem`]: gradients of strongly convex quadratics,
//!   `F_i(z) = B_i z + c_i` with `B_i` symmetric positive definite.
//! * [`AffineProblem`]: arbitrary `M_i z + q_i`, with no structural checks.
//!   Useful for building small test operators.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::linalg::{self, dot, norm_sq, LinalgError, Matrix};

/// Absolute tolerance for the symmetry check on quadratic Hessians.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Pairs whose denominator falls below this are skipped by the estimators.
pub const DEGENERATE_PAIR_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("device index {index} out of range for {n} devices")]
    DeviceOutOfRange { index: usize, n: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("problem data contains non-finite entries")]
    NonFinite,
    #[error("matrix B_{device} is not symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { device: usize, asymmetry: f64 },
    #[error("matrix B_{device} is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { device: usize, min_eigenvalue: f64 },
    #[error("operator system is singular")]
    Singular,
    #[error("operation not supported for the {0} family")]
    UnsupportedFamily(&'static str),
}

impl From<LinalgError> for ProblemError {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::Singular => ProblemError::Singular,
            LinalgError::DimensionMismatch { expected, actual } => {
                ProblemError::DimensionMismatch { expected, actual }
            }
        }
    }
}

/// Cocoercivity and strong-monotonicity constants of a problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    /// Worst-case per-device cocoercivity constant.
    pub ell: f64,
    /// Strong-monotonicity constant of the aggregate operator.
    pub mu: f64,
    /// `‖(1/n) Σ A_i‖₂² / λ`, kept for the bilinear family only so results
    /// can be compared with the constant of the averaged coupling matrix.
    pub ell_coupling: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BilinearSaddleProblem {
    lambda: f64,
    a_mats: Vec<Matrix>,
    // Transposes of `a_mats`, so both halves of the operator are row dot products.
    a_mats_t: Vec<Matrix>,
    a_vecs: Vec<Vec<f64>>,
    b_vecs: Vec<Vec<f64>>,
}

impl BilinearSaddleProblem {
    pub fn new(
        lambda: f64,
        a_mats: Vec<Matrix>,
        a_vecs: Vec<Vec<f64>>,
        b_vecs: Vec<Vec<f64>>,
    ) -> Result<Self, ProblemError> {
        let n = a_mats.len();
        if n == 0 {
            return Err(ProblemError::InvalidParameter(
                "n must be at least 1".into(),
            ));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(ProblemError::InvalidParameter(format!(
                "lambda must be positive and finite, got {lambda}"
            )));
        }
        let d_half = a_mats[0].rows();
        if d_half == 0 {
            return Err(ProblemError::InvalidParameter(
                "d_half must be at least 1".into(),
            ));
        }
        if a_vecs.len() != n || b_vecs.len() != n {
            return Err(ProblemError::DimensionMismatch {
                expected: n,
                actual: a_vecs.len().min(b_vecs.len()),
            });
        }
        for m in &a_mats {
            if m.rows() != d_half || m.cols() != d_half {
                return Err(ProblemError::DimensionMismatch {
                    expected: d_half,
                    actual: if m.rows() != d_half {
                        m.rows()
                    } else {
                        m.cols()
                    },
                });
            }
            if !m.all_finite() {
                return Err(ProblemError::NonFinite);
            }
        }
        for v in a_vecs.iter().chain(&b_vecs) {
            if v.len() != d_half {
                return Err(ProblemError::DimensionMismatch {
                    expected: d_half,
                    actual: v.len(),
                });
            }
            if !linalg::all_finite(v) {
                return Err(ProblemError::NonFinite);
            }
        }
        let a_mats_t = a_mats.iter().map(Matrix::transpose).collect();
        Ok(Self {
            lambda,
            a_mats,
            a_mats_t,
            a_vecs,
            b_vecs,
        })
    }

    pub fn n(&self) -> usize {
        self.a_mats.len()
    }

    pub fn d_half(&self) -> usize {
        self.a_mats[0].rows()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn a_mats(&self) -> &[Matrix] {
        &self.a_mats
    }

    pub fn a_vecs(&self) -> &[Vec<f64>] {
        &self.a_vecs
    }

    pub fn b_vecs(&self) -> &[Vec<f64>] {
        &self.b_vecs
    }

    #[inline]
    fn coord(&self, i: usize, j: usize, z: &[f64]) -> f64 {
        let h = self.d_half();
        let (x, y) = z.split_at(h);
        if j < h {
            (dot(self.a_mats[i].row(j), y) + self.a_vecs[i][j]) + self.lambda * x[j]
        } else {
            let jj = j - h;
            (self.lambda * y[jj] - dot(self.a_mats_t[i].row(jj), x)) - self.b_vecs[i][jj]
        }
    }

    fn local_system(&self, i: usize) -> (Matrix, Vec<f64>) {
        let h = self.d_half();
        let mut m = Matrix::zeros(2 * h, 2 * h);
        for r in 0..h {
            m.set(r, r, self.lambda);
            m.set(h + r, h + r, self.lambda);
            for c in 0..h {
                m.set(r, h + c, self.a_mats[i].get(r, c));
                m.set(h + c, r, -self.a_mats[i].get(r, c));
            }
        }
        let mut q = self.a_vecs[i].clone();
        q.extend(self.b_vecs[i].iter().map(|b| -b));
        (m, q)
    }

    fn mean(&self) -> Self {
        let n = self.n() as f64;
        let mut a = Matrix::zeros(self.d_half(), self.d_half());
        for m in &self.a_mats {
            a.add_assign(m);
        }
        let data: Vec<f64> = a.as_slice().iter().map(|v| v / n).collect();
        let a = Matrix::from_row_major(self.d_half(), self.d_half(), data);
        Self::new(
            self.lambda,
            vec![a],
            vec![mean_of(&self.a_vecs)],
            vec![mean_of(&self.b_vecs)],
        )
        .expect("mean of a valid problem is valid")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticMinProblem {
    b_mats: Vec<Matrix>,
    c_vecs: Vec<Vec<f64>>,
}

impl QuadraticMinProblem {
    pub fn new(b_mats: Vec<Matrix>, c_vecs: Vec<Vec<f64>>) -> Result<Self, ProblemError> {
        let n = b_mats.len();
        if n == 0 {
            return Err(ProblemError::InvalidParameter(
                "n must be at least 1".into(),
            ));
        }
        if c_vecs.len() != n {
            return Err(ProblemError::DimensionMismatch {
                expected: n,
                actual: c_vecs.len(),
            });
        }
        let d = b_mats[0].rows();
        if d == 0 {
            return Err(ProblemError::InvalidParameter(
                "d must be at least 1".into(),
            ));
        }
        for (i, (b, c)) in b_mats.iter().zip(&c_vecs).enumerate() {
            if b.rows() != d || b.cols() != d || c.len() != d {
                return Err(ProblemError::DimensionMismatch {
                    expected: d,
                    actual: if c.len() != d { c.len() } else { b.cols() },
                });
            }
            if !b.all_finite() || !linalg::all_finite(c) {
                return Err(ProblemError::NonFinite);
            }
            let asymmetry = b.max_asymmetry();
            if asymmetry > SYMMETRY_TOL {
                return Err(ProblemError::NotSymmetric {
                    device: i,
                    asymmetry,
                });
            }
            let min_eigenvalue = linalg::symmetric_eigenvalues(b)[0];
            if min_eigenvalue <= 0.0 {
                return Err(ProblemError::NotPositiveDefinite {
                    device: i,
                    min_eigenvalue,
                });
            }
        }
        Ok(Self { b_mats, c_vecs })
    }

    pub fn n(&self) -> usize {
        self.b_mats.len()
    }

    pub fn d(&self) -> usize {
        self.b_mats[0].rows()
    }

    pub fn b_mats(&self) -> &[Matrix] {
        &self.b_mats
    }

    pub fn c_vecs(&self) -> &[Vec<f64>] {
        &self.c_vecs
    }

    fn mean_hessian(&self) -> Matrix {
        mean_matrix(&self.b_mats)
    }
}

/// General affine local operators `F_i(z) = M_i z + q_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineProblem {
    mats: Vec<Matrix>,
    offsets: Vec<Vec<f64>>,
}

impl AffineProblem {
    pub fn new(mats: Vec<Matrix>, offsets: Vec<Vec<f64>>) -> Result<Self, ProblemError> {
        let n = mats.len();
        if n == 0 {
            return Err(ProblemError::InvalidParameter(
                "n must be at least 1".into(),
            ));
        }
        if offsets.len() != n {
            return Err(ProblemError::DimensionMismatch {
                expected: n,
                actual: offsets.len(),
            });
        }
        let d = mats[0].rows();
        if d == 0 {
            return Err(ProblemError::InvalidParameter(
                "d must be at least 1".into(),
            ));
        }
        for (m, q) in mats.iter().zip(&offsets) {
            if m.rows() != d || m.cols() != d || q.len() != d {
                return Err(ProblemError::DimensionMismatch {
                    expected: d,
                    actual: if q.len() != d { q.len() } else { m.cols() },
                });
            }
            if !m.all_finite() || !linalg::all_finite(q) {
                return Err(ProblemError::NonFinite);
            }
        }
        Ok(Self { mats, offsets })
    }
}

/// A finite-sum VI problem from one of the supported families.
#[derive(Debug, Clone, PartialEq)]
pub enum VIProblem {
    Bilinear(BilinearSaddleProblem),
    QuadraticMin(QuadraticMinProblem),
    Affine(AffineProblem),
}

impl From<BilinearSaddleProblem> for VIProblem {
    fn from(p: BilinearSaddleProblem) -> Self {
        VIProblem::Bilinear(p)
    }
}

impl From<QuadraticMinProblem> for VIProblem {
    fn from(p: QuadraticMinProblem) -> Self {
        VIProblem::QuadraticMin(p)
    }
}

impl From<AffineProblem> for VIProblem {
    fn from(p: AffineProblem) -> Self {
        VIProblem::Affine(p)
    }
}

impl VIProblem {
    pub fn family(&self) -> &'static str {
        match self {
            VIProblem::Bilinear(_) => "bilinear",
            VIProblem::QuadraticMin(_) => "quadratic_min",
            VIProblem::Affine(_) => "affine",
        }
    }

    /// Number of devices.
    pub fn n(&self) -> usize {
        match self {
            VIProblem::Bilinear(p) => p.n(),
            VIProblem::QuadraticMin(p) => p.n(),
            VIProblem::Affine(p) => p.mats.len(),
        }
    }

    /// Dimension `d` of the iterate.
    pub fn dim(&self) -> usize {
        match self {
            VIProblem::Bilinear(p) => 2 * p.d_half(),
            VIProblem::QuadraticMin(p) => p.d(),
            VIProblem::Affine(p) => p.mats[0].rows(),
        }
    }

    fn check_args(&self, i: usize, z: &[f64]) -> Result<(), ProblemError> {
        if i >= self.n() {
            return Err(ProblemError::DeviceOutOfRange {
                index: i,
                n: self.n(),
            });
        }
        self.check_point(z)
    }

    fn check_point(&self, z: &[f64]) -> Result<(), ProblemError> {
        if z.len() != self.dim() {
            return Err(ProblemError::DimensionMismatch {
                expected: self.dim(),
                actual: z.len(),
            });
        }
        Ok(())
    }

    /// Coordinate `j` of `F_i(z)`, without argument checks.
    ///
    /// Produces exactly the value that [`VIProblem::eval_local`] stores in
    /// position `j`.
    #[inline]
    pub fn eval_local_coord(&self, i: usize, j: usize, z: &[f64]) -> f64 {
        match self {
            VIProblem::Bilinear(p) => p.coord(i, j, z),
            VIProblem::QuadraticMin(p) => dot(p.b_mats[i].row(j), z) + p.c_vecs[i][j],
            VIProblem::Affine(p) => dot(p.mats[i].row(j), z) + p.offsets[i][j],
        }
    }

    /// `out = F_i(z)`, without argument checks.
    pub fn eval_local_into(&self, i: usize, z: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.eval_local_coord(i, j, z);
        }
    }

    pub fn eval_local(&self, i: usize, z: &[f64]) -> Result<Vec<f64>, ProblemError> {
        self.check_args(i, z)?;
        let mut out = vec![0.0; self.dim()];
        self.eval_local_into(i, z, &mut out);
        Ok(out)
    }

    /// `F(z) = (1/n) Σ_i F_i(z)`, summed in ascending device order.
    pub fn eval_full(&self, z: &[f64]) -> Result<Vec<f64>, ProblemError> {
        self.check_point(z)?;
        let mut locals = vec![vec![0.0; self.dim()]; self.n()];
        Ok(self.eval_full_with_locals(z, &mut locals))
    }

    /// Like [`VIProblem::eval_full`], also leaving each `F_i(z)` in `locals`.
    pub(crate) fn eval_full_with_locals(&self, z: &[f64], locals: &mut [Vec<f64>]) -> Vec<f64> {
        for (i, out) in locals.iter_mut().enumerate() {
            self.eval_local_into(i, z, out);
        }
        mean_of(locals)
    }

    /// A single-device problem of the same family whose operator is the mean
    /// operator `F`. Equal to `F` up to floating-point rounding.
    pub fn aggregate(&self) -> VIProblem {
        match self {
            VIProblem::Bilinear(p) => VIProblem::Bilinear(p.mean()),
            VIProblem::QuadraticMin(p) => VIProblem::QuadraticMin(QuadraticMinProblem {
                b_mats: vec![p.mean_hessian()],
                c_vecs: vec![mean_of(&p.c_vecs)],
            }),
            VIProblem::Affine(p) => VIProblem::Affine(AffineProblem {
                mats: vec![mean_matrix(&p.mats)],
                offsets: vec![mean_of(&p.offsets)],
            }),
        }
    }

    /// Dense `(M_i, q_i)` of device `i`.
    pub fn local_system(&self, i: usize) -> (Matrix, Vec<f64>) {
        match self {
            VIProblem::Bilinear(p) => p.local_system(i),
            VIProblem::QuadraticMin(p) => (p.b_mats[i].clone(), p.c_vecs[i].clone()),
            VIProblem::Affine(p) => (p.mats[i].clone(), p.offsets[i].clone()),
        }
    }

    /// Dense `(M, q)` with `F(z) = M z + q`.
    pub fn affine_system(&self) -> (Matrix, Vec<f64>) {
        let systems: Vec<(Matrix, Vec<f64>)> =
            (0..self.n()).map(|i| self.local_system(i)).collect();
        let mats: Vec<Matrix> = systems.iter().map(|(m, _)| m.clone()).collect();
        let offsets: Vec<Vec<f64>> = systems.into_iter().map(|(_, q)| q).collect();
        (mean_matrix(&mats), mean_of(&offsets))
    }

    /// The unique `z*` with `F(z*) = 0`.
    pub fn exact_solution(&self) -> Result<Vec<f64>, ProblemError> {
        let (m, q) = self.affine_system();
        let rhs: Vec<f64> = q.iter().map(|v| -v).collect();
        Ok(linalg::solve(&m, &rhs)?)
    }

    /// Exact cocoercivity and strong-monotonicity constants.
    ///
    /// Bilinear: every `F_i` is `λI` plus a skew-symmetric part, so
    /// `⟨ΔF_i, Δz⟩ = λ‖Δz‖²` and `‖ΔF_i‖² ≤ (λ² + ‖A_i‖₂²)‖Δz‖²`, giving
    /// `ℓ = λ + max_i ‖A_i‖₂²/λ` and `μ = λ`.
    ///
    /// Quadratic: `ℓ = max_i λ_max(B_i)`, `μ = λ_min((1/n) Σ B_i)`.
    pub fn exact_constants(&self) -> Result<ProblemConstants, ProblemError> {
        match self {
            VIProblem::Bilinear(p) => {
                let lambda = p.lambda;
                let worst = p
                    .a_mats
                    .iter()
                    .map(|a| linalg::spectral_norm_sq(a).value)
                    .fold(0.0, f64::max);
                let mean = p.mean();
                let coupling = linalg::spectral_norm_sq(&mean.a_mats[0]).value / lambda;
                Ok(ProblemConstants {
                    ell: lambda + worst / lambda,
                    mu: lambda,
                    ell_coupling: Some(coupling),
                })
            }
            VIProblem::QuadraticMin(p) => {
                let ell = p
                    .b_mats
                    .iter()
                    .map(|b| *linalg::symmetric_eigenvalues(b).last().unwrap())
                    .fold(0.0, f64::max);
                let mu = linalg::symmetric_eigenvalues(&p.mean_hessian())[0];
                Ok(ProblemConstants {
                    ell,
                    mu,
                    ell_coupling: None,
                })
            }
            VIProblem::Affine(_) => Err(ProblemError::UnsupportedFamily("affine")),
        }
    }

    /// Sampled lower bound on the cocoercivity constant.
    ///
    /// Maximum over `samples` standard-normal pairs `(u, v)` and all devices of
    /// `‖F_i(u) − F_i(v)‖² / ⟨F_i(u) − F_i(v), u − v⟩`. Pairs with a
    /// denominator below [`DEGENERATE_PAIR_TOL`] are skipped; returns 0 when
    /// every pair is skipped.
    pub fn estimate_cocoercivity(&self, samples: usize, seed: u64) -> f64 {
        let d = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = vec![0.0; d];
        let mut v = vec![0.0; d];
        let mut fu = vec![0.0; d];
        let mut fv = vec![0.0; d];
        let mut best = 0.0f64;
        for _ in 0..samples {
            fill_normal(&mut rng, &mut u);
            fill_normal(&mut rng, &mut v);
            let dz = linalg::sub(&u, &v);
            for i in 0..self.n() {
                self.eval_local_into(i, &u, &mut fu);
                self.eval_local_into(i, &v, &mut fv);
                let df = linalg::sub(&fu, &fv);
                let den = dot(&df, &dz);
                if den < DEGENERATE_PAIR_TOL {
                    continue;
                }
                best = best.max(norm_sq(&df) / den);
            }
        }
        best
    }

    /// Sampled upper bound on the strong-monotonicity constant of `F`.
    ///
    /// Minimum over `samples` standard-normal pairs of
    /// `⟨F(u) − F(v), u − v⟩ / ‖u − v‖²`. Returns `f64::INFINITY` when every
    /// pair is degenerate.
    pub fn estimate_strong_monotonicity(&self, samples: usize, seed: u64) -> f64 {
        let d = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = vec![0.0; d];
        let mut v = vec![0.0; d];
        let mut locals = vec![vec![0.0; d]; self.n()];
        let mut best = f64::INFINITY;
        for _ in 0..samples {
            fill_normal(&mut rng, &mut u);
            fill_normal(&mut rng, &mut v);
            let dz = linalg::sub(&u, &v);
            let den = norm_sq(&dz);
            if den < DEGENERATE_PAIR_TOL {
                continue;
            }
            let fu = self.eval_full_with_locals(&u, &mut locals);
            let fv = self.eval_full_with_locals(&v, &mut locals);
            let df = linalg::sub(&fu, &fv);
            best = best.min(dot(&df, &dz) / den);
        }
        best
    }

    /// SHA-256 over the family tag and every stored coefficient's bit pattern.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.family().as_bytes());
        h.update((self.n() as u64).to_le_bytes());
        h.update((self.dim() as u64).to_le_bytes());
        for i in 0..self.n() {
            let (m, q) = self.local_system(i);
            for v in m.as_slice().iter().chain(&q) {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

fn fill_normal(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
}

fn mean_of(vs: &[Vec<f64>]) -> Vec<f64> {
    let n = vs.len() as f64;
    let mut acc = vec![0.0; vs[0].len()];
    for v in vs {
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    for a in acc.iter_mut() {
        *a /= n;
    }
    acc
}

fn mean_matrix(ms: &[Matrix]) -> Matrix {
    let mut acc = Matrix::zeros(ms[0].rows(), ms[0].cols());
    for m in ms {
        acc.add_assign(m);
    }
    let n = ms.len() as f64;
    let data = acc.as_slice().iter().map(|v| v / n).collect();
    Matrix::from_row_major(ms[0].rows(), ms[0].cols(), data)
}

/// Random bilinear saddle problem with a prescribed cocoercivity constant.
///
/// Entries of every `A_i`, `a_i`, `b_i` are i.i.d. standard normal from a
/// ChaCha8 stream seeded with `seed`, drawn device by device in the order
/// `A_i` (row-major), `a_i`, `b_i`. All `A_i` are then multiplied by one
/// common factor so that `max_i ‖A_i‖₂² / λ = target_ell − λ`, which makes
/// the exact constant of [`VIProblem::exact_constants`] equal `target_ell`.
pub fn generate_bilinear(
    n: usize,
    d_half: usize,
    lambda: f64,
    target_ell: f64,
    seed: u64,
) -> Result<BilinearSaddleProblem, ProblemError> {
    if n == 0 || d_half == 0 {
        return Err(ProblemError::InvalidParameter(
            "n and d_half must be at least 1".into(),
        ));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(ProblemError::InvalidParameter(format!(
            "lambda must be positive and finite, got {lambda}"
        )));
    }
    if !(target_ell > lambda && target_ell.is_finite()) {
        return Err(ProblemError::InvalidParameter(format!(
            "target_ell ({target_ell}) must exceed lambda ({lambda}): the cocoercivity \
             constant of this family is at least lambda"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a_mats = Vec::with_capacity(n);
    let mut a_vecs = Vec::with_capacity(n);
    let mut b_vecs = Vec::with_capacity(n);
    for _ in 0..n {
        let mut data = vec![0.0; d_half * d_half];
        fill_normal(&mut rng, &mut data);
        let mut a = vec![0.0; d_half];
        fill_normal(&mut rng, &mut a);
        let mut b = vec![0.0; d_half];
        fill_normal(&mut rng, &mut b);
        a_mats.push(Matrix::from_row_major(d_half, d_half, data));
        a_vecs.push(a);
        b_vecs.push(b);
    }
    let worst = a_mats
        .iter()
        .map(|a| linalg::spectral_norm_sq(a).value)
        .fold(0.0, f64::max);
    if worst == 0.0 {
        return Err(ProblemError::InvalidParameter(
            "generated coupling matrices are all zero".into(),
        ));
    }
    let factor = ((target_ell - lambda) * lambda / worst).sqrt();
    for a in a_mats.iter_mut() {
        a.scale(factor);
    }
    BilinearSaddleProblem::new(lambda, a_mats, a_vecs, b_vecs)
}

/// Random strongly convex quadratic problem: `B_i = G_iᵀG_i / d + I` with
/// standard-normal `G_i`, and standard-normal `c_i`.
pub fn generate_quadratic(
    n: usize,
    d: usize,
    seed: u64,
) -> Result<QuadraticMinProblem, ProblemError> {
    if n == 0 || d == 0 {
        return Err(ProblemError::InvalidParameter(
            "n and d must be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b_mats = Vec::with_capacity(n);
    let mut c_vecs = Vec::with_capacity(n);
    for _ in 0..n {
        let mut g = vec![0.0; d * d];
        fill_normal(&mut rng, &mut g);
        let g = Matrix::from_row_major(d, d, g);
        let gt = g.transpose();
        let mut b = Matrix::zeros(d, d);
        for r in 0..d {
            for c in r..d {
                let v = dot(gt.row(r), gt.row(c)) / d as f64 + if r == c { 1.0 } else { 0.0 };
                b.set(r, c, v);
                b.set(c, r, v);
            }
        }
        let mut c = vec![0.0; d];
        fill_normal(&mut rng, &mut c);
        b_mats.push(b);
        c_vecs.push(c);
    }
    QuadraticMinProblem::new(b_mats, c_vecs)
}

/// Seed-based problem description. Problems are always regenerated from
/// this, never stored as raw matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemDescriptor {
    Bilinear {
        n: usize,
        d_half: usize,
        lambda: f64,
        seed: u64,
        target_ell: f64,
    },
    QuadraticMin {
        n: usize,
        d: usize,
        seed: u64,
    },
}

impl ProblemDescriptor {
    pub fn build(&self) -> Result<VIProblem, ProblemError> {
        match *self {
            ProblemDescriptor::Bilinear {
                n,
                d_half,
                lambda,
                seed,
                target_ell,
            } => generate_bilinear(n, d_half, lambda, target_ell, seed).map(Into::into),
            ProblemDescriptor::QuadraticMin { n, d, seed } => {
                generate_quadratic(n, d, seed).map(Into::into)
            }
        }
    }
}

/// Writes a matrix as row-major CSV (no header), for debugging dumps.
pub fn write_matrix_csv<W: Write>(m: &Matrix, mut out: W) -> std::io::Result<()> {
    for r in 0..m.rows() {
        let line: Vec<String> = m.row(r).iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}
