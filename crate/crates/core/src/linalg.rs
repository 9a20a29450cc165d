//! Dense Hermitian operators on the truncated Fourier basis.
//!
//! An [`OperatorMatrix`] holds the `(2K+1)^d`-dimensional matrix of an
//! operator `diag(k) + convolution by ĉ`, its hermiticity diagnostic, and a
//! cached eigendecomposition used for resolvents, spectral propagators
//! (`e^{-itH}`, `cos(t√-H)`, `sinc(t√-H)`), and other functions of the
//! operator.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64;

use crate::error::{CoreError, Result};
use crate::torus::{FourierField, TorusSpec};

/// Dense-assembly guard from the operator modules.
pub const MAX_DENSE_ROWS: usize = 10_000;

#[derive(Debug, Clone)]
pub struct EigenPair {
    /// Ascending real eigenvalues.
    pub values: Array1<f64>,
    /// Unitary matrix of eigenvectors (columns).
    pub vectors: Array2<Complex64>,
}

impl EigenPair {
    /// `f(A) v = V f(Λ) V^H v`.
    pub fn apply_fn(&self, f: impl Fn(f64) -> Complex64, v: &Array1<Complex64>) -> Array1<Complex64> {
        let mut coeffs = self.vectors.t().mapv(|z| z.conj()).dot(v);
        for (c, &lam) in coeffs.iter_mut().zip(self.values.iter()) {
            *c *= f(lam);
        }
        self.vectors.dot(&coeffs)
    }
}

#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    spec: TorusSpec,
    mat: Array2<Complex64>,
    eig: Option<EigenPair>,
}

impl OperatorMatrix {
    /// Assembles `A[p,q] = δ_{pq}·diag(k_p) + ĉ(k_p - k_q)` on the lattice
    /// basis; `conv` coefficients outside the lattice are zero.
    pub fn from_convolution(
        spec: TorusSpec,
        diag: impl Fn([i64; 3]) -> f64,
        conv: &FourierField,
    ) -> Result<Self> {
        let n = spec.num_modes();
        if n > MAX_DENSE_ROWS {
            return Err(CoreError::MatrixTooLarge(format!(
                "{n} rows exceeds the dense guard of {MAX_DENSE_ROWS}"
            )));
        }
        let mut mat = Array2::<Complex64>::zeros((n, n));
        for p in 0..n {
            let kp = spec.mode_at(p);
            for q in 0..n {
                let kq = spec.mode_at(q);
                let dk = [kp[0] - kq[0], kp[1] - kq[1], kp[2] - kq[2]];
                let mut v = conv.coeff(dk);
                if p == q {
                    v += diag(kp);
                }
                mat[(p, q)] = v;
            }
        }
        Ok(Self { spec, mat, eig: None })
    }

    pub fn spec(&self) -> TorusSpec {
        self.spec
    }

    pub fn n(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &Array2<Complex64> {
        &self.mat
    }

    /// `max |A - A^H|` over entries, relative to the largest entry.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        let n = self.n();
        for p in 0..n {
            for q in p..n {
                let a = self.mat[(p, q)];
                let b = self.mat[(q, p)];
                worst = worst.max((a - b.conj()).norm());
                scale = scale.max(a.norm());
            }
        }
        worst / scale.max(f64::MIN_POSITIVE)
    }

    pub fn field_to_vec(&self, f: &FourierField) -> Array1<Complex64> {
        Array1::from(f.coeffs().to_vec())
    }

    pub fn vec_to_field(&self, v: &Array1<Complex64>) -> FourierField {
        let mut f = FourierField::zeros(self.spec);
        f.reality = false;
        f.coeffs_mut().copy_from_slice(v.as_slice().expect("contiguous"));
        f
    }

    /// Matrix–vector product `A f`.
    pub fn apply(&self, f: &FourierField) -> FourierField {
        let v = self.field_to_vec(f);
        self.vec_to_field(&self.mat.dot(&v))
    }

    /// `⟨f, A f⟩` (real part; the imaginary part of a Hermitian form is
    /// roundoff and is dropped).
    pub fn quadratic_form(&self, f: &FourierField) -> f64 {
        let v = self.field_to_vec(f);
        let av = self.mat.dot(&v);
        v.iter().zip(av.iter()).map(|(a, b)| (b * a.conj()).re).sum()
    }

    /// Computes and caches the eigendecomposition.
    ///
    /// LAPACK sees the row-major buffer as the transposed (= conjugated)
    /// Hermitian matrix, so the returned vectors may diagonalize `conj(A)`
    /// rather than `A`; we pick the conjugation that actually reconstructs
    /// `A` and verify the residual.
    pub fn ensure_eigen(&mut self) -> Result<&EigenPair> {
        if self.eig.is_none() {
            let (values, vectors) = self
                .mat
                .eigh(UPLO::Lower)
                .map_err(|e| CoreError::Linalg(format!("eigh failed: {e}")))?;
            let residual = |vecs: &Array2<Complex64>| -> f64 {
                let n = vecs.nrows();
                let scale = values
                    .iter()
                    .fold(0.0f64, |m, &v| m.max(v.abs()))
                    .max(f64::MIN_POSITIVE);
                let mut worst = 0.0f64;
                for col in [0, n / 2, n - 1] {
                    let v = vecs.column(col).to_owned();
                    let av = self.mat.dot(&v);
                    let err: f64 = av
                        .iter()
                        .zip(v.iter())
                        .map(|(a, b)| (a - b * values[col]).norm_sqr())
                        .sum::<f64>()
                        .sqrt();
                    worst = worst.max(err / scale);
                }
                worst
            };
            let conjugated = vectors.mapv(|z| z.conj());
            let (r_plain, r_conj) = (residual(&vectors), residual(&conjugated));
            let chosen = if r_conj < r_plain { conjugated } else { vectors };
            if r_plain.min(r_conj) > 1e-8 {
                return Err(CoreError::Linalg(format!(
                    "eigendecomposition residual too large: {:.3e}",
                    r_plain.min(r_conj)
                )));
            }
            self.eig = Some(EigenPair { values, vectors: chosen });
        }
        Ok(self.eig.as_ref().expect("just set"))
    }

    pub fn eigen(&self) -> Option<&EigenPair> {
        self.eig.as_ref()
    }

    pub fn eigen_required(&self) -> Result<&EigenPair> {
        self.eig
            .as_ref()
            .ok_or_else(|| CoreError::Linalg("eigendecomposition not computed".into()))
    }

    pub fn lambda_max(&mut self) -> Result<f64> {
        let e = self.ensure_eigen()?;
        Ok(e.values[e.values.len() - 1])
    }

    pub fn lambda_min(&mut self) -> Result<f64> {
        Ok(self.ensure_eigen()?.values[0])
    }

    /// `f(A) g` through the cached eigendecomposition.
    pub fn apply_fn(&self, f: impl Fn(f64) -> Complex64, g: &FourierField) -> Result<FourierField> {
        let e = self.eigen_required()?;
        let v = self.field_to_vec(g);
        Ok(self.vec_to_field(&e.apply_fn(f, &v)))
    }
}

/// `sin(x)/x` with the series fallback near zero.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0 + x.powi(4) / 120.0
    } else {
        x.sin() / x
    }
}

/// Conjugate-gradient solve of `M u = f` for a Hermitian positive-definite
/// operator given matrix-free; returns the solution and iteration count.
pub fn conjugate_gradient(
    apply: impl Fn(&FourierField) -> Result<FourierField>,
    f: &FourierField,
    tol_rel: f64,
    max_iter: usize,
) -> Result<(FourierField, usize)> {
    let fnorm = f.l2_norm();
    let mut x = FourierField::zeros(f.spec());
    x.reality = false;
    if fnorm == 0.0 {
        return Ok((x, 0));
    }
    let mut r = f.clone();
    let mut p = r.clone();
    let mut rs_old = r.inner(&r).re;
    for it in 0..max_iter {
        if rs_old.sqrt() <= tol_rel * fnorm {
            return Ok((x, it));
        }
        let ap = apply(&p)?;
        let denom = p.inner(&ap).re;
        if denom <= 0.0 || !denom.is_finite() {
            return Err(CoreError::NonConvergence(format!(
                "CG curvature {denom} not positive (operator not PD?)"
            )));
        }
        let alpha = Complex64::new(rs_old / denom, 0.0);
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        let rs_new = r.inner(&r).re;
        let beta = rs_new / rs_old;
        let mut p_next = r.clone();
        p_next.axpy(Complex64::new(beta, 0.0), &p);
        p = p_next;
        rs_old = rs_new;
    }
    if rs_old.sqrt() <= tol_rel * fnorm {
        return Ok((x, max_iter));
    }
    Err(CoreError::NonConvergence(format!(
        "CG stalled at relative residual {:.3e} after {max_iter} iterations",
        rs_old.sqrt() / fnorm
    )))
}
