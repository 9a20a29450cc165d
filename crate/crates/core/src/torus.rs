//! Fourier-lattice fields on the d-dimensional torus.
//!
//! A field is represented by its complex Fourier coefficients on the
//! truncated lattice `{k : |k|_∞ ≤ K}` with the convention
//!
//! ```text
//! f(x) = Σ_k  f̂(k) · exp(2πi ⟨k, x⟩),        x ∈ [0,1)^d .
//! ```
//!
//! Under this convention the Laplacian is the multiplier `-4π²|k|²` and
//! `(1-Δ)^{-1}` is `(1+4π²|k|²)^{-1}`.  Sobolev norms use the weight
//! `(1+|k|²)^α` (no 2π), matching the usual definition of `H^α` by
//! `Σ (1+|k|²)^α |f̂(k)|²`.
//!
//! Collocation grids carry `grid_n` points per axis.  Products of two
//! band-limited fields are exact (alias-free) after re-truncation to `K`
//! whenever `grid_n ≥ 3K+1`, which is the default grid choice.

use std::sync::Mutex;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::sync::Arc;

use crate::error::{CoreError, Result};

pub const TAU: f64 = std::f64::consts::TAU;

/// Geometry of the truncated Fourier lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TorusSpec {
    dim: usize,
    k_max: i64,
    grid_n: usize,
}

impl TorusSpec {
    /// Validates `dim ∈ {2,3}`, `K ≥ 4`, `grid_n ≥ 2K+1` and even.
    pub fn new(dim: usize, k_max: i64, grid_n: usize) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(CoreError::InvalidSpec(format!("dim must be 2 or 3, got {dim}")));
        }
        if k_max < 4 {
            return Err(CoreError::InvalidSpec(format!("K must be ≥ 4, got {k_max}")));
        }
        if (grid_n as i64) < 2 * k_max + 1 {
            return Err(CoreError::InvalidSpec(format!(
                "grid_n = {grid_n} < 2K+1 = {}",
                2 * k_max + 1
            )));
        }
        if grid_n % 2 != 0 {
            return Err(CoreError::InvalidSpec(format!("grid_n must be even, got {grid_n}")));
        }
        Ok(Self { dim, k_max, grid_n })
    }

    /// Smallest even grid with `grid_n ≥ 3K+1`, which dealiases quadratic
    /// products exactly after re-truncation to `K`.
    pub fn with_dealiased_grid(dim: usize, k_max: i64) -> Result<Self> {
        let mut n = (3 * k_max + 1) as usize;
        if n % 2 != 0 {
            n += 1;
        }
        Self::new(dim, k_max, n)
    }

    /// Same `K`, different collocation grid (must still satisfy the invariants).
    pub fn with_grid(self, grid_n: usize) -> Result<Self> {
        Self::new(self.dim, self.k_max, grid_n)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k_max(&self) -> i64 {
        self.k_max
    }

    pub fn grid_n(&self) -> usize {
        self.grid_n
    }

    /// Number of lattice modes, `(2K+1)^dim`.
    pub fn num_modes(&self) -> usize {
        let side = (2 * self.k_max + 1) as usize;
        side.pow(self.dim as u32)
    }

    /// Number of collocation points, `grid_n^dim`.
    pub fn num_grid_points(&self) -> usize {
        self.grid_n.pow(self.dim as u32)
    }

    /// Largest euclidean frequency on the lattice, `K·√d`.
    pub fn max_freq(&self) -> f64 {
        self.k_max as f64 * (self.dim as f64).sqrt()
    }

    #[inline]
    pub fn index_of(&self, k: [i64; 3]) -> usize {
        let side = (2 * self.k_max + 1) as usize;
        debug_assert!(self.contains(k));
        let mut idx = 0usize;
        for d in 0..self.dim {
            idx = idx * side + (k[d] + self.k_max) as usize;
        }
        idx
    }

    #[inline]
    pub fn mode_at(&self, mut idx: usize) -> [i64; 3] {
        let side = (2 * self.k_max + 1) as usize;
        let mut k = [0i64; 3];
        for d in (0..self.dim).rev() {
            k[d] = (idx % side) as i64 - self.k_max;
            idx /= side;
        }
        k
    }

    #[inline]
    pub fn contains(&self, k: [i64; 3]) -> bool {
        (0..self.dim).all(|d| k[d].abs() <= self.k_max)
            && (self.dim..3).all(|d| k[d] == 0)
    }

    /// Lexicographic iteration over the whole lattice.
    pub fn modes(&self) -> impl Iterator<Item = [i64; 3]> + '_ {
        (0..self.num_modes()).map(move |i| self.mode_at(i))
    }

    /// Canonical half-lattice: first nonzero component positive.
    pub fn is_canonical(&self, k: [i64; 3]) -> bool {
        for d in 0..self.dim {
            if k[d] > 0 {
                return true;
            }
            if k[d] < 0 {
                return false;
            }
        }
        false // zero mode is self-paired
    }

    pub fn negate(&self, k: [i64; 3]) -> [i64; 3] {
        [-k[0], -k[1], -k[2]]
    }
}

#[inline]
pub fn norm_sq(k: [i64; 3]) -> f64 {
    (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64
}

#[inline]
pub fn norm(k: [i64; 3]) -> f64 {
    norm_sq(k).sqrt()
}

/// A band-limited function/distribution given by its Fourier coefficients.
#[derive(Debug, Clone)]
pub struct FourierField {
    spec: TorusSpec,
    coeffs: Vec<Complex64>,
    /// Hermitian-symmetric coefficients (real-valued field).
    pub reality: bool,
    /// 3-d noise convention: the `k = 0` coefficient is held at zero.
    pub zero_mode_excluded: bool,
}

impl FourierField {
    pub fn zeros(spec: TorusSpec) -> Self {
        Self {
            spec,
            coeffs: vec![Complex64::ZERO; spec.num_modes()],
            reality: true,
            zero_mode_excluded: false,
        }
    }

    pub fn constant(spec: TorusSpec, c: Complex64) -> Self {
        let mut f = Self::zeros(spec);
        f.coeffs[spec.index_of([0, 0, 0])] = c;
        f.reality = c.im == 0.0;
        f
    }

    /// Single Fourier mode `amp · e^{2πi k·x}`.
    pub fn single_mode(spec: TorusSpec, k: [i64; 3], amp: Complex64) -> Result<Self> {
        if !spec.contains(k) {
            return Err(CoreError::InvalidParameter(format!("mode {k:?} outside lattice")));
        }
        let mut f = Self::zeros(spec);
        f.coeffs[spec.index_of(k)] = amp;
        f.reality = false;
        Ok(f)
    }

    pub fn from_fn(spec: TorusSpec, mut g: impl FnMut([i64; 3]) -> Complex64) -> Self {
        let coeffs = (0..spec.num_modes()).map(|i| g(spec.mode_at(i))).collect();
        Self { spec, coeffs, reality: false, zero_mode_excluded: false }
    }

    pub fn spec(&self) -> TorusSpec {
        self.spec
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    #[inline]
    pub fn coeff(&self, k: [i64; 3]) -> Complex64 {
        if self.spec.contains(k) {
            self.coeffs[self.spec.index_of(k)]
        } else {
            Complex64::ZERO
        }
    }

    #[inline]
    pub fn set_coeff(&mut self, k: [i64; 3], v: Complex64) {
        let idx = self.spec.index_of(k);
        self.coeffs[idx] = v;
    }

    /// Max relative deviation from hermitian symmetry `f̂(-k) = conj f̂(k)`.
    pub fn reality_defect(&self) -> f64 {
        let scale = self.l2_norm().max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for k in self.spec.modes() {
            let d = (self.coeff(self.spec.negate(k)) - self.coeff(k).conj()).norm();
            worst = worst.max(d);
        }
        worst / scale
    }

    /// Re-checks the declared invariants (reality, excluded zero mode).
    pub fn check_invariants(&self, tol: f64) -> Result<()> {
        if self.reality && self.reality_defect() > tol {
            return Err(CoreError::InvalidParameter(format!(
                "reality flag set but hermitian defect {} > {tol}",
                self.reality_defect()
            )));
        }
        if self.zero_mode_excluded && self.coeff([0, 0, 0]) != Complex64::ZERO {
            return Err(CoreError::InvalidParameter(
                "zero_mode_excluded set but f̂(0) ≠ 0".into(),
            ));
        }
        Ok(())
    }

    pub fn scale(&self, a: Complex64) -> Self {
        let mut out = self.clone();
        for c in out.coeffs.iter_mut() {
            *c *= a;
        }
        if a.im != 0.0 {
            out.reality = false;
        }
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_spec(other)?;
        let mut out = self.clone();
        for (c, o) in out.coeffs.iter_mut().zip(other.coeffs.iter()) {
            *c += o;
        }
        out.reality = self.reality && other.reality;
        out.zero_mode_excluded = self.zero_mode_excluded && other.zero_mode_excluded;
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_spec(other)?;
        let mut out = self.clone();
        for (c, o) in out.coeffs.iter_mut().zip(other.coeffs.iter()) {
            *c -= o;
        }
        out.reality = self.reality && other.reality;
        out.zero_mode_excluded = self.zero_mode_excluded && other.zero_mode_excluded;
        Ok(out)
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.spec, other.spec);
        for (c, o) in self.coeffs.iter_mut().zip(other.coeffs.iter()) {
            *c += o;
        }
        self.reality &= other.reality;
        self.zero_mode_excluded &= other.zero_mode_excluded;
    }

    pub fn axpy(&mut self, a: Complex64, other: &Self) {
        debug_assert_eq!(self.spec, other.spec);
        for (c, o) in self.coeffs.iter_mut().zip(other.coeffs.iter()) {
            *c += a * o;
        }
        self.reality &= other.reality && a.im == 0.0;
        self.zero_mode_excluded &= other.zero_mode_excluded;
    }

    pub fn check_same_spec(&self, other: &Self) -> Result<()> {
        if self.spec != other.spec {
            return Err(CoreError::SpecMismatch(format!(
                "{:?} vs {:?}",
                self.spec, other.spec
            )));
        }
        Ok(())
    }

    /// Applies a real Fourier multiplier `f̂(k) ← m(k)·f̂(k)`.
    pub fn apply_multiplier(&self, m: impl Fn([i64; 3]) -> f64) -> Self {
        let mut out = self.clone();
        for (i, c) in out.coeffs.iter_mut().enumerate() {
            *c *= m(self.spec.mode_at(i));
        }
        out
    }

    /// Laplacian, multiplier `-4π²|k|²`.
    pub fn laplacian(&self) -> Self {
        self.apply_multiplier(|k| -TAU * TAU * norm_sq(k))
    }

    /// `(1-Δ)^{-1}`, multiplier `(1+4π²|k|²)^{-1}`.
    pub fn bessel_inv(&self) -> Self {
        self.apply_multiplier(|k| 1.0 / (1.0 + TAU * TAU * norm_sq(k)))
    }

    /// `(1-Δ)`, multiplier `1+4π²|k|²`.
    pub fn bessel(&self) -> Self {
        self.apply_multiplier(|k| 1.0 + TAU * TAU * norm_sq(k))
    }

    /// `(-Δ)^{-1}` with the zero mode dropped (3-d noise convention).
    pub fn inv_neg_laplacian_dropping_zero(&self) -> Self {
        let mut out = self.apply_multiplier(|k| {
            let n = norm_sq(k);
            if n == 0.0 {
                0.0
            } else {
                1.0 / (TAU * TAU * n)
            }
        });
        out.zero_mode_excluded = true;
        let idx = out.spec.index_of([0, 0, 0]);
        out.coeffs[idx] = Complex64::ZERO;
        out
    }

    /// Partial derivative along `axis`, multiplier `2πi k_axis`.
    pub fn derivative(&self, axis: usize) -> Self {
        let mut out = self.clone();
        for (i, c) in out.coeffs.iter_mut().enumerate() {
            let k = self.spec.mode_at(i);
            *c *= Complex64::new(0.0, TAU * k[axis] as f64);
        }
        out
    }

    pub fn gradient(&self) -> Vec<Self> {
        (0..self.spec.dim()).map(|d| self.derivative(d)).collect()
    }

    /// `ℓ²` norm of the coefficients = `L²` norm of the field (Parseval).
    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `‖f‖_{H^α}` with weight `(1+|k|²)^α`.
    pub fn sobolev_norm(&self, alpha: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| (1.0 + norm_sq(self.spec.mode_at(i))).powf(alpha) * c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// `‖∇f‖_{L²}` with the operator convention (`2π|k|` weight).
    pub fn grad_l2_norm(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| TAU * TAU * norm_sq(self.spec.mode_at(i)) * c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Hermitian inner product `⟨f,g⟩ = Σ f̂(k) conj(ĝ(k)) = ∫ f ḡ`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.coeffs
            .iter()
            .zip(other.coeffs.iter())
            .map(|(a, b)| a * b.conj())
            .sum()
    }

    /// Bilinear pairing `(f,g) = Σ f̂(k) ĝ(-k) = ∫ f g` (no conjugation).
    pub fn bilinear_pair(&self, other: &Self) -> Complex64 {
        let mut acc = Complex64::ZERO;
        for k in self.spec.modes() {
            acc += self.coeff(k) * other.coeff(self.spec.negate(k));
        }
        acc
    }

    /// Synthesis on the collocation grid.
    pub fn to_grid(&self) -> Grid {
        Grid::synthesize(self)
    }

    /// Dealiased pointwise product, re-truncated to the lattice.
    pub fn product(&self, other: &Self) -> Result<Self> {
        self.check_same_spec(other)?;
        let mut ga = self.to_grid();
        let gb = other.to_grid();
        ga.mul_assign(&gb);
        let mut out = ga.analyze();
        out.reality = self.reality && other.reality;
        Ok(out)
    }

    /// `Σ_d (∂_d f)(∂_d g)` as a dealiased product; gradients use `2π` weights.
    pub fn grad_dot_grad(&self, other: &Self) -> Result<Self> {
        self.check_same_spec(other)?;
        let mut acc = Self::zeros(self.spec);
        for d in 0..self.spec.dim() {
            acc.add_assign(&self.derivative(d).product(&other.derivative(d))?);
        }
        acc.reality = self.reality && other.reality;
        Ok(acc)
    }
}

/// Pointwise samples of a field on the `grid_n^dim` collocation grid.
#[derive(Debug, Clone)]
pub struct Grid {
    spec: TorusSpec,
    values: Vec<Complex64>,
}

impl Grid {
    pub fn spec(&self) -> TorusSpec {
        self.spec
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn from_values(spec: TorusSpec, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != spec.num_grid_points() {
            return Err(CoreError::DimensionMismatch(format!(
                "grid has {} points, spec wants {}",
                values.len(),
                spec.num_grid_points()
            )));
        }
        Ok(Self { spec, values })
    }

    fn synthesize(field: &FourierField) -> Grid {
        let spec = field.spec;
        let n = spec.grid_n();
        let mut data = vec![Complex64::ZERO; spec.num_grid_points()];
        // Place mode k at grid bin (k mod n) per axis.
        let wrap = |k: i64| -> usize { ((k % n as i64 + n as i64) % n as i64) as usize };
        match spec.dim() {
            2 => {
                for (i, &c) in field.coeffs.iter().enumerate() {
                    let k = spec.mode_at(i);
                    data[wrap(k[0]) * n + wrap(k[1])] = c;
                }
            }
            _ => {
                for (i, &c) in field.coeffs.iter().enumerate() {
                    let k = spec.mode_at(i);
                    data[(wrap(k[0]) * n + wrap(k[1])) * n + wrap(k[2])] = c;
                }
            }
        }
        fft_nd(&mut data, n, spec.dim(), FftDirection::Inverse);
        Grid { spec, values: data }
    }

    /// Analysis: forward FFT, normalize by `1/N^d`, truncate to the lattice.
    pub fn analyze(&self) -> FourierField {
        let spec = self.spec;
        let n = spec.grid_n();
        let mut data = self.values.clone();
        fft_nd(&mut data, n, spec.dim(), FftDirection::Forward);
        let norm = 1.0 / spec.num_grid_points() as f64;
        let wrap = |k: i64| -> usize { ((k % n as i64 + n as i64) % n as i64) as usize };
        let mut out = FourierField::zeros(spec);
        out.reality = false;
        for i in 0..spec.num_modes() {
            let k = spec.mode_at(i);
            let flat = match spec.dim() {
                2 => wrap(k[0]) * n + wrap(k[1]),
                _ => (wrap(k[0]) * n + wrap(k[1])) * n + wrap(k[2]),
            };
            out.coeffs[i] = data[flat] * norm;
        }
        out
    }

    pub fn mul_assign(&mut self, other: &Grid) {
        debug_assert_eq!(self.spec, other.spec);
        for (a, b) in self.values.iter_mut().zip(other.values.iter()) {
            *a *= b;
        }
    }

    pub fn map_in_place(&mut self, f: impl Fn(Complex64) -> Complex64) {
        for v in self.values.iter_mut() {
            *v = f(*v);
        }
    }

    /// Grid quadrature `(N^{-d} Σ |u(x_j)|^p)^{1/p}`; `p = ∞` gives the max.
    pub fn lp_norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        }
        let mean = self
            .values
            .iter()
            .map(|v| v.norm().powf(p))
            .sum::<f64>()
            / self.values.len() as f64;
        mean.powf(1.0 / p)
    }

    pub fn linf_norm(&self) -> f64 {
        self.lp_norm(f64::INFINITY)
    }
}

/// In-place n-dimensional FFT on a `n^dim` row-major cube.
fn fft_nd(data: &mut [Complex64], n: usize, dim: usize, direction: FftDirection) {
    let plan = plan_fft(n, direction);
    let mut scratch = vec![Complex64::ZERO; n];
    match dim {
        2 => {
            // rows
            for row in data.chunks_exact_mut(n) {
                plan.process(row);
            }
            // columns
            for col in 0..n {
                for i in 0..n {
                    scratch[i] = data[i * n + col];
                }
                plan.process(&mut scratch);
                for i in 0..n {
                    data[i * n + col] = scratch[i];
                }
            }
        }
        3 => {
            let n2 = n * n;
            // last axis: contiguous
            for line in data.chunks_exact_mut(n) {
                plan.process(line);
            }
            // middle axis
            for plane in 0..n {
                for col in 0..n {
                    let base = plane * n2 + col;
                    for i in 0..n {
                        scratch[i] = data[base + i * n];
                    }
                    plan.process(&mut scratch);
                    for i in 0..n {
                        data[base + i * n] = scratch[i];
                    }
                }
            }
            // first axis
            for rest in 0..n2 {
                for i in 0..n {
                    scratch[i] = data[rest + i * n2];
                }
                plan.process(&mut scratch);
                for i in 0..n {
                    data[rest + i * n2] = scratch[i];
                }
            }
        }
        _ => unreachable!("dim is validated to 2 or 3"),
    }
}

static PLANNER: Mutex<Option<FftPlanner<f64>>> = Mutex::new(None);

fn plan_fft(n: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    let mut guard = PLANNER.lock().unwrap();
    let planner = guard.get_or_insert_with(FftPlanner::new);
    match direction {
        FftDirection::Forward => planner.plan_fft_forward(n),
        FftDirection::Inverse => planner.plan_fft_inverse(n),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn random_field(spec: TorusSpec, seed: u64) -> FourierField {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        FourierField::from_fn(spec, |_| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        })
    }

    #[test]
    fn spec_validation() {
        assert!(TorusSpec::new(2, 8, 26).is_ok());
        assert!(TorusSpec::new(1, 8, 26).is_err());
        assert!(TorusSpec::new(2, 3, 26).is_err());
        assert!(TorusSpec::new(2, 8, 16).is_err()); // < 2K+1
        assert!(TorusSpec::new(2, 8, 27).is_err()); // odd
        let s = TorusSpec::with_dealiased_grid(2, 32).unwrap();
        assert_eq!(s.grid_n(), 98);
    }

    #[test]
    fn mode_indexing_roundtrip() {
        for spec in [
            TorusSpec::new(2, 5, 16).unwrap(),
            TorusSpec::new(3, 4, 14).unwrap(),
        ] {
            for i in 0..spec.num_modes() {
                assert_eq!(spec.index_of(spec.mode_at(i)), i);
            }
        }
    }

    #[test]
    fn constant_grid_transforms_to_zero_mode() {
        let spec = TorusSpec::with_dealiased_grid(2, 8).unwrap();
        let grid = Grid::from_values(
            spec,
            vec![Complex64::new(1.0, 0.0); spec.num_grid_points()],
        )
        .unwrap();
        let f = grid.analyze();
        assert_relative_eq!(f.coeff([0, 0, 0]).re, 1.0, max_relative = 1e-12);
        let off: f64 = f
            .coeffs()
            .iter()
            .enumerate()
            .filter(|(i, _)| f.spec().mode_at(*i) != [0, 0, 0])
            .map(|(_, c)| c.norm())
            .fold(0.0, f64::max);
        assert!(off < 1e-13);
    }

    #[test]
    fn single_mode_grid_transform() {
        let spec = TorusSpec::with_dealiased_grid(2, 8).unwrap();
        let n = spec.grid_n();
        // e^{2πi x1} sampled on the grid
        let mut vals = Vec::with_capacity(spec.num_grid_points());
        for i in 0..n {
            for _j in 0..n {
                let x = i as f64 / n as f64;
                vals.push(Complex64::from_polar(1.0, TAU * x));
            }
        }
        let f = Grid::from_values(spec, vals).unwrap().analyze();
        assert_relative_eq!(f.coeff([1, 0, 0]).re, 1.0, max_relative = 1e-12);
        assert!(f.coeff([0, 0, 0]).norm() < 1e-13);
        assert!(f.coeff([0, 1, 0]).norm() < 1e-13);
    }

    #[test]
    fn roundtrip_random_field() {
        for spec in [
            TorusSpec::with_dealiased_grid(2, 8).unwrap(),
            TorusSpec::with_dealiased_grid(3, 4).unwrap(),
        ] {
            let f = random_field(spec, 7);
            let back = f.to_grid().analyze();
            let err = f.sub(&back).unwrap().l2_norm() / f.l2_norm();
            assert!(err < 1e-12, "roundtrip error {err}");
        }
    }

    #[test]
    fn parseval_grid_vs_coefficients() {
        let spec = TorusSpec::with_dealiased_grid(2, 8).unwrap();
        let f = random_field(spec, 11);
        let grid_l2 = f.to_grid().lp_norm(2.0);
        assert_relative_eq!(grid_l2, f.l2_norm(), max_relative = 1e-10);
    }

    #[test]
    fn sobolev_norm_single_mode() {
        // ‖e^{2πi(3,4)·x}‖_{H^1} = (1+25)^{1/2}
        let spec = TorusSpec::with_dealiased_grid(2, 8).unwrap();
        let f = FourierField::single_mode(spec, [3, 4, 0], Complex64::new(1.0, 0.0)).unwrap();
        assert_relative_eq!(f.sobolev_norm(1.0), 26.0f64.sqrt(), max_relative = 1e-14);
        // α = 0 reduces to the L² norm
        let g = random_field(spec, 3);
        assert_relative_eq!(g.sobolev_norm(0.0), g.l2_norm(), max_relative = 1e-12);
    }

    #[test]
    fn sobolev_norm_constant() {
        let spec = TorusSpec::with_dealiased_grid(2, 8).unwrap();
        let f = FourierField::constant(spec, Complex64::new(-2.5, 0.0));
        assert_relative_eq!(f.sobolev_norm(1.7), 2.5, max_relative = 1e-14);
    }

    #[test]
    fn product_matches_convolution_small() {
        let spec = TorusSpec::with_dealiased_grid(2, 4).unwrap();
        let f = random_field(spec, 1);
        let g = random_field(spec, 2);
        let p = f.product(&g).unwrap();
        // direct truncated convolution
        for k in spec.modes() {
            let mut acc = Complex64::ZERO;
            for q in spec.modes() {
                let r = [k[0] - q[0], k[1] - q[1], k[2] - q[2]];
                if spec.contains(r) {
                    acc += f.coeff(q) * g.coeff(r);
                }
            }
            assert!(
                (acc - p.coeff(k)).norm() < 1e-12,
                "mode {k:?}: {acc} vs {}",
                p.coeff(k)
            );
        }
    }

    #[test]
    fn derivative_of_single_mode() {
        let spec = TorusSpec::with_dealiased_grid(2, 8).unwrap();
        let f = FourierField::single_mode(spec, [3, -2, 0], Complex64::new(1.0, 0.0)).unwrap();
        let dx = f.derivative(0);
        assert_relative_eq!(dx.coeff([3, -2, 0]).im, TAU * 3.0, max_relative = 1e-14);
        let lap = f.laplacian();
        assert_relative_eq!(
            lap.coeff([3, -2, 0]).re,
            -TAU * TAU * 13.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn bessel_inverse_is_inverse() {
        let spec = TorusSpec::with_dealiased_grid(2, 6).unwrap();
        let f = random_field(spec, 4);
        let back = f.bessel_inv().bessel();
        assert!(f.sub(&back).unwrap().l2_norm() / f.l2_norm() < 1e-14);
    }

    #[test]
    fn bilinear_pair_picks_opposite_modes() {
        let spec = TorusSpec::with_dealiased_grid(2, 4).unwrap();
        let f = FourierField::single_mode(spec, [1, 2, 0], Complex64::new(2.0, 0.0)).unwrap();
        let g = FourierField::single_mode(spec, [-1, -2, 0], Complex64::new(3.0, 0.0)).unwrap();
        assert_relative_eq!(f.bilinear_pair(&g).re, 6.0, max_relative = 1e-14);
        let h = FourierField::single_mode(spec, [1, 2, 0], Complex64::new(3.0, 0.0)).unwrap();
        assert!(f.bilinear_pair(&h).norm() < 1e-14);
    }
}
