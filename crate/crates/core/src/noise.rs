//! White-noise realizations, mollification, renormalization constants, and
//! the enhanced-noise data driving the paracontrolled construction.
//!
//! Sampling convention: `ξ̂(k)` are i.i.d. standard complex Gaussians on the
//! canonical half-lattice with `ξ̂(-k) = conj ξ̂(k)` (real field), `E|ξ̂(k)|² = 1`.
//! In 2-d the zero mode is a real standard Gaussian; in 3-d it is dropped.
//! Each mode draws from its own ChaCha stream keyed by `(seed, k)`, so a
//! realization on a small lattice is the restriction of the same realization
//! on any larger lattice ("fixed realization extension").

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::dyadic::{holder_norm, DyadicPartition};
use crate::error::{CoreError, Result};
use crate::paracalc;
use crate::torus::{norm, norm_sq, FourierField, Grid, TorusSpec, TAU};

/// Smooth radial cutoff profile `m` with `m(0) = 1` and support in `|x| < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mollifier {
    /// `exp(1 - 1/(1-x²))` for `|x| < 1`, 0 otherwise.
    Bump,
    /// `cos²(πx/2)` for `|x| < 1`, 0 otherwise; shipped for the
    /// mollifier-independence experiments.
    CosineTaper,
}

impl Mollifier {
    pub fn id(&self) -> &'static str {
        match self {
            Mollifier::Bump => "bump",
            Mollifier::CosineTaper => "cosine",
        }
    }

    pub fn from_id(id: &str) -> Result<Self> {
        match id {
            "bump" => Ok(Mollifier::Bump),
            "cosine" => Ok(Mollifier::CosineTaper),
            other => Err(CoreError::InvalidParameter(format!("unknown mollifier `{other}`"))),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let r = x.abs();
        if r >= 1.0 {
            return 0.0;
        }
        match self {
            Mollifier::Bump => (1.0 - 1.0 / (1.0 - r * r)).exp(),
            Mollifier::CosineTaper => {
                let c = (std::f64::consts::FRAC_PI_2 * r).cos();
                c * c
            }
        }
    }
}

fn mode_stream(k: [i64; 3]) -> u64 {
    // 21 bits per signed component; |k| < 2^20 is far beyond any usable K
    const OFF: i64 = 1 << 20;
    (((k[0] + OFF) as u64) << 42) | (((k[1] + OFF) as u64) << 21) | ((k[2] + OFF) as u64)
}

fn standard_normal_pair(rng: &mut ChaCha20Rng) -> (f64, f64) {
    // Box-Muller from two uniforms
    let u1 = ((rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64).max(1e-300);
    let u2 = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    let r = (-2.0 * u1.ln()).sqrt();
    (r * (TAU * u2).cos(), r * (TAU * u2).sin())
}

/// Draws a white-noise realization on the lattice, deterministic in
/// `(seed, k)` per mode.
pub fn sample_white_noise(seed: u64, spec: TorusSpec) -> FourierField {
    let base = ChaCha20Rng::seed_from_u64(seed);
    let mut f = FourierField::zeros(spec);
    let modes: Vec<_> = spec.modes().collect();
    for k in modes {
        if spec.is_canonical(k) {
            let mut rng = base.clone();
            rng.set_stream(mode_stream(k));
            let (a, b) = standard_normal_pair(&mut rng);
            let c = Complex64::new(a, b) / 2f64.sqrt();
            f.set_coeff(k, c);
            f.set_coeff(spec.negate(k), c.conj());
        }
    }
    if spec.dim() == 2 {
        let mut rng = base.clone();
        rng.set_stream(mode_stream([0, 0, 0]));
        let (a, _) = standard_normal_pair(&mut rng);
        f.set_coeff([0, 0, 0], Complex64::new(a, 0.0));
    } else {
        f.zero_mode_excluded = true;
    }
    f.reality = true;
    f
}

/// Coefficientwise mollification `ξ̂(k) ← m(ε|k|) ξ̂(k)`.
pub fn mollify(xi: &FourierField, eps: f64, m: Mollifier) -> Result<FourierField> {
    if eps <= 0.0 {
        return Err(CoreError::InvalidParameter(format!("eps must be > 0, got {eps}")));
    }
    Ok(xi.apply_multiplier(|k| m.eval(eps * norm(k))))
}

/// A lattice renormalization constant with its truncation flag.
#[derive(Debug, Clone, Copy)]
pub struct RenormConstant {
    pub value: f64,
    /// Set when the support of `m(ε·)` spills past the summation lattice,
    /// i.e. the "divergent" sum is resolution-limited rather than
    /// mollifier-limited.
    pub truncated: bool,
}

fn support_truncated(eps: f64, k_max: i64) -> bool {
    eps * ((k_max + 1) as f64) < 1.0
}

/// 2-d constant `c_ε = Σ_{k∈Z²∩[-K,K]²} m(ε|k|)² / (1+|k|²)  ~ log(1/ε)`.
pub fn renorm_const_2d(eps: f64, m: Mollifier, k_max: i64) -> Result<RenormConstant> {
    if eps <= 0.0 {
        return Err(CoreError::InvalidParameter("eps must be > 0".into()));
    }
    let mut sum = 0.0f64;
    for k0 in -k_max..=k_max {
        for k1 in -k_max..=k_max {
            let n2 = (k0 * k0 + k1 * k1) as f64;
            let w = m.eval(eps * n2.sqrt());
            sum += w * w / (1.0 + n2);
        }
    }
    if !sum.is_finite() {
        return Err(CoreError::Overflow("2-d renormalization sum".into()));
    }
    Ok(RenormConstant { value: sum, truncated: support_truncated(eps, k_max) })
}

/// How the numerator of the 3-d double sum `c²_ε` treats `k₁·k₂`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum C2Numerator {
    /// `|k₁·k₂|` as printed.
    #[default]
    AbsoluteDot,
    /// Signed `k₁·k₂`, the alternative reading.
    SignedDot,
}

/// 3-d constants. `c¹_ε` is the exact lattice Wick constant
/// `E|∇X_ε|² = Σ_{k≠0} m(ε|k|)²/(4π²|k|²) ~ 1/ε` (the printed sum carries
/// the same asymptotics without the Fourier factor `4π²`).  `c²_ε` is the
/// printed double sum over `k₁ ≠ k₂`, both nonzero.
pub fn renorm_const_3d(
    eps: f64,
    m: Mollifier,
    k_max: i64,
    with_c2: bool,
    c2_mode: C2Numerator,
) -> Result<(RenormConstant, RenormConstant)> {
    if eps <= 0.0 {
        return Err(CoreError::InvalidParameter("eps must be > 0".into()));
    }
    let truncated = support_truncated(eps, k_max);
    let mut c1 = 0.0f64;
    let mut weighted: Vec<([i64; 3], f64)> = Vec::new();
    for k0 in -k_max..=k_max {
        for k1 in -k_max..=k_max {
            for k2 in -k_max..=k_max {
                let k = [k0, k1, k2];
                let n2 = norm_sq(k);
                if n2 == 0.0 {
                    continue;
                }
                let w = m.eval(eps * n2.sqrt());
                if w != 0.0 {
                    c1 += w * w / (TAU * TAU * n2);
                    if with_c2 {
                        weighted.push((k, w * w));
                    }
                }
            }
        }
    }
    if !c1.is_finite() {
        return Err(CoreError::Overflow("3-d c1 sum".into()));
    }
    let mut c2 = 0.0f64;
    if with_c2 {
        if k_max > 16 {
            return Err(CoreError::MatrixTooLarge(format!(
                "c2 double sum at K={k_max} needs ~(2K+1)^6 terms; cap is K=16"
            )));
        }
        for &(ka, wa) in &weighted {
            let na = norm_sq(ka);
            for &(kb, wb) in &weighted {
                let diff = [ka[0] - kb[0], ka[1] - kb[1], ka[2] - kb[2]];
                let d2 = norm_sq(diff);
                if d2 == 0.0 {
                    continue; // singular diagonal skipped
                }
                let dot = (ka[0] * kb[0] + ka[1] * kb[1] + ka[2] * kb[2]) as f64;
                let num = match c2_mode {
                    C2Numerator::AbsoluteDot => dot.abs(),
                    C2Numerator::SignedDot => dot,
                };
                c2 += wa * wb * num / (d2 * na * na * norm_sq(kb));
            }
        }
        if !c2.is_finite() {
            return Err(CoreError::Overflow("3-d c2 sum".into()));
        }
    }
    Ok((
        RenormConstant { value: c1, truncated },
        RenormConstant { value: c2, truncated },
    ))
}

/// 2-d enhanced noise: a realization `(ξ_ε, Ξ₂)` with
/// `Ξ₂ = ξ_ε ∘ (1-Δ)^{-1} ξ_ε + c_ε`.
#[derive(Debug, Clone)]
pub struct EnhancedNoise2d {
    pub eps: f64,
    pub seed: u64,
    pub mollifier: Mollifier,
    pub alpha: f64,
    pub xi: FourierField,
    pub xi2: FourierField,
    pub c_eps: f64,
    /// `(‖ξ_ε‖_{C^α}, ‖Ξ₂‖_{C^{2α+2}})`.
    pub norms: (f64, f64),
}

impl EnhancedNoise2d {
    /// The absent realization: `ξ ≡ 0`, `Ξ₂ ≡ 0`, `c_ε = 0` (the trivial
    /// paths of the operator and evolution modules).
    pub fn zero(spec: TorusSpec, alpha: f64) -> Self {
        Self {
            eps: 0.0,
            seed: 0,
            mollifier: Mollifier::Bump,
            alpha,
            xi: FourierField::zeros(spec),
            xi2: FourierField::zeros(spec),
            c_eps: 0.0,
            norms: (0.0, 0.0),
        }
    }

    /// Recomputation defect of the `Ξ₂` definition, relative to its norm.
    pub fn verify(&self, part: &DyadicPartition) -> Result<f64> {
        let x = self.xi.bessel_inv();
        let res = paracalc::resonant(&self.xi, &x, part)?;
        let rebuilt = res.add(&FourierField::constant(
            self.xi.spec(),
            Complex64::new(self.c_eps, 0.0),
        ))?;
        Ok(rebuilt.sub(&self.xi2)?.l2_norm() / self.xi2.l2_norm().max(f64::MIN_POSITIVE))
    }
}

/// Builds the 2-d enhancement from an already-drawn base realization, so a
/// whole ε-ladder can share one draw.
pub fn enhance_2d_from_draw(
    xi_base: &FourierField,
    seed: u64,
    eps: f64,
    m: Mollifier,
    alpha: f64,
) -> Result<EnhancedNoise2d> {
    let spec = xi_base.spec();
    if spec.dim() != 2 {
        return Err(CoreError::DimensionMismatch("enhance_2d needs dim = 2".into()));
    }
    let part = DyadicPartition::for_spec(&spec);
    let xi = mollify(xi_base, eps, m)?;
    let c_eps = renorm_const_2d(eps, m, spec.k_max())?.value;
    let x = xi.bessel_inv();
    let res = paracalc::resonant(&xi, &x, &part)?;
    let xi2 = res.add(&FourierField::constant(spec, Complex64::new(c_eps, 0.0)))?;
    let norms = (holder_norm(&xi, alpha, &part), holder_norm(&xi2, 2.0 * alpha + 2.0, &part));
    Ok(EnhancedNoise2d { eps, seed, mollifier: m, alpha, xi, xi2, c_eps, norms })
}

/// Samples a realization and enhances it.
pub fn enhance_2d(
    seed: u64,
    eps: f64,
    m: Mollifier,
    spec: TorusSpec,
    alpha: f64,
) -> Result<EnhancedNoise2d> {
    let xi_base = sample_white_noise(seed, spec);
    enhance_2d_from_draw(&xi_base, seed, eps, m, alpha)
}

/// 3-d enhanced noise: the six-tuple of tree fields plus the derived
/// `W`, `W̃`, `Z` driving the exponential transform.
#[derive(Debug, Clone)]
pub struct EnhancedNoise3d {
    pub eps: f64,
    pub seed: u64,
    pub mollifier: Mollifier,
    pub alpha: f64,
    pub xi: FourierField,
    /// `X = (-Δ)^{-1} ξ_ε`, zero mode dropped.
    pub x: FourierField,
    /// `X¹ = (1-Δ)^{-1}(|∇X|² - c¹_ε)`.
    pub x1: FourierField,
    /// `X² = 2(1-Δ)^{-1}(∇X·∇X¹)`.
    pub x2: FourierField,
    /// `X³ = (1-Δ)^{-1}(∇X·∇X²)`.
    pub x3: FourierField,
    /// `X⁴ = (1-Δ)^{-1}(|∇X¹|² - c²_ε)`.
    pub x4: FourierField,
    /// `∇X ∘ ∇X³`, summed over components via the resonant product.
    pub grad_x_res_grad_x3: FourierField,
    pub c1_eps: f64,
    pub c2_eps: f64,
    /// `W = X + X¹ + X²`.
    pub w: FourierField,
    /// `W̃ = (1-Δ)^{-1} ∇W`, one field per axis.
    pub w_tilde: Vec<FourierField>,
    /// `Z = (1-Δ)^{-1}(|∇X²|² + 2∇X¹·∇X² + X¹ + X²) + X⁴ + 2X³`.
    pub z: FourierField,
    /// Component Besov-Hölder norms in the spaces
    /// `C^α × C^{2α} × C^{α+1} × C^{α+1} × C^{4α} × C^{2α-1}`.
    pub norms: Vec<(&'static str, f64)>,
}

impl EnhancedNoise3d {
    /// Max recomputation defect over the tree-field defining formulas.
    pub fn verify(&self, part: &DyadicPartition) -> Result<f64> {
        let spec = self.xi.spec();
        let one = |c: f64| FourierField::constant(spec, Complex64::new(c, 0.0));
        let mut worst = 0.0f64;
        let mut upd = |lhs: &FourierField, rhs: &FourierField| -> Result<()> {
            let d = lhs.sub(rhs)?.l2_norm() / rhs.l2_norm().max(f64::MIN_POSITIVE);
            worst = worst.max(d);
            Ok(())
        };
        upd(&self.x, &self.xi.inv_neg_laplacian_dropping_zero())?;
        let sq = self.x.grad_dot_grad(&self.x)?;
        upd(&self.x1, &sq.sub(&one(self.c1_eps))?.bessel_inv())?;
        upd(
            &self.x2,
            &self
                .x
                .grad_dot_grad(&self.x1)?
                .bessel_inv()
                .scale(Complex64::new(2.0, 0.0)),
        )?;
        upd(&self.x3, &self.x.grad_dot_grad(&self.x2)?.bessel_inv())?;
        upd(
            &self.x4,
            &self.x1.grad_dot_grad(&self.x1)?.sub(&one(self.c2_eps))?.bessel_inv(),
        )?;
        let mut res = FourierField::zeros(spec);
        for d in 0..3 {
            res.add_assign(&paracalc::resonant(
                &self.x.derivative(d),
                &self.x3.derivative(d),
                part,
            )?);
        }
        upd(&self.grad_x_res_grad_x3, &res)?;
        upd(&self.w, &self.x.add(&self.x1)?.add(&self.x2)?)?;
        for d in 0..3 {
            upd(&self.w_tilde[d], &self.w.derivative(d).bessel_inv())?;
        }
        let z_core = self
            .x2
            .grad_dot_grad(&self.x2)?
            .add(&self.x1.grad_dot_grad(&self.x2)?.scale(Complex64::new(2.0, 0.0)))?
            .add(&self.x1)?
            .add(&self.x2)?
            .bessel_inv();
        let z = z_core
            .add(&self.x4)?
            .add(&self.x3.scale(Complex64::new(2.0, 0.0)))?;
        upd(&self.z, &z)?;
        Ok(worst)
    }
}

/// Builds the 3-d enhancement from a shared base draw, tree terms in
/// dependency order `X → X¹ → X² → (X³, X⁴, ∇X∘∇X³) → W → W̃ → Z`.
pub fn enhance_3d_from_draw(
    xi_base: &FourierField,
    seed: u64,
    eps: f64,
    m: Mollifier,
    alpha: f64,
    c2_mode: C2Numerator,
) -> Result<EnhancedNoise3d> {
    let spec = xi_base.spec();
    if spec.dim() != 3 {
        return Err(CoreError::DimensionMismatch("enhance_3d needs dim = 3".into()));
    }
    let part = DyadicPartition::for_spec(&spec);
    let one = |c: f64| FourierField::constant(spec, Complex64::new(c, 0.0));
    let xi = mollify(xi_base, eps, m)?;
    let (c1, c2) = renorm_const_3d(eps, m, spec.k_max(), true, c2_mode)?;
    let x = xi.inv_neg_laplacian_dropping_zero();
    let x1 = x.grad_dot_grad(&x)?.sub(&one(c1.value))?.bessel_inv();
    let x2 = x
        .grad_dot_grad(&x1)?
        .bessel_inv()
        .scale(Complex64::new(2.0, 0.0));
    let x3 = x.grad_dot_grad(&x2)?.bessel_inv();
    let x4 = x1.grad_dot_grad(&x1)?.sub(&one(c2.value))?.bessel_inv();
    let mut grad_res = FourierField::zeros(spec);
    for d in 0..3 {
        grad_res.add_assign(&paracalc::resonant(&x.derivative(d), &x3.derivative(d), &part)?);
    }
    let w = x.add(&x1)?.add(&x2)?;
    let w_tilde: Vec<FourierField> = (0..3).map(|d| w.derivative(d).bessel_inv()).collect();
    let z = x2
        .grad_dot_grad(&x2)?
        .add(&x1.grad_dot_grad(&x2)?.scale(Complex64::new(2.0, 0.0)))?
        .add(&x1)?
        .add(&x2)?
        .bessel_inv()
        .add(&x4)?
        .add(&x3.scale(Complex64::new(2.0, 0.0)))?;
    let norms = vec![
        ("X in C^a", holder_norm(&x, alpha, &part)),
        ("X1 in C^2a", holder_norm(&x1, 2.0 * alpha, &part)),
        ("X2 in C^{a+1}", holder_norm(&x2, alpha + 1.0, &part)),
        ("X3 in C^{a+1}", holder_norm(&x3, alpha + 1.0, &part)),
        ("X4 in C^4a", holder_norm(&x4, 4.0 * alpha, &part)),
        ("gradX o gradX3 in C^{2a-1}", holder_norm(&grad_res, 2.0 * alpha - 1.0, &part)),
    ];
    Ok(EnhancedNoise3d {
        eps,
        seed,
        mollifier: m,
        alpha,
        xi,
        x,
        x1,
        x2,
        x3,
        x4,
        grad_x_res_grad_x3: grad_res,
        c1_eps: c1.value,
        c2_eps: c2.value,
        w,
        w_tilde,
        z,
        norms,
    })
}

pub fn enhance_3d(
    seed: u64,
    eps: f64,
    m: Mollifier,
    spec: TorusSpec,
    alpha: f64,
    c2_mode: C2Numerator,
) -> Result<EnhancedNoise3d> {
    let xi_base = sample_white_noise(seed, spec);
    enhance_3d_from_draw(&xi_base, seed, eps, m, alpha, c2_mode)
}

/// The ε → 0 limit of the enhancement on a fixed lattice (`m ≡ 1`): the
/// mollifier saturates coefficientwise, so the limit is the enhancement of
/// the raw truncated draw with the `m ≡ 1` lattice constants.
pub fn enhance_2d_limit(xi_base: &FourierField, seed: u64, alpha: f64) -> Result<EnhancedNoise2d> {
    let spec = xi_base.spec();
    if spec.dim() != 2 {
        return Err(CoreError::DimensionMismatch("enhance_2d needs dim = 2".into()));
    }
    let part = DyadicPartition::for_spec(&spec);
    let k_max = spec.k_max();
    let mut c0 = 0.0f64;
    for k0 in -k_max..=k_max {
        for k1 in -k_max..=k_max {
            c0 += 1.0 / (1.0 + (k0 * k0 + k1 * k1) as f64);
        }
    }
    let x = xi_base.bessel_inv();
    let res = paracalc::resonant(xi_base, &x, &part)?;
    let xi2 = res.add(&FourierField::constant(spec, Complex64::new(c0, 0.0)))?;
    let norms = (
        holder_norm(xi_base, alpha, &part),
        holder_norm(&xi2, 2.0 * alpha + 2.0, &part),
    );
    Ok(EnhancedNoise2d {
        eps: 0.0,
        seed,
        mollifier: Mollifier::Bump,
        alpha,
        xi: xi_base.clone(),
        xi2,
        c_eps: c0,
        norms,
    })
}

/// Same limit construction in 3-d (`m ≡ 1` lattice Wick constants).
pub fn enhance_3d_limit(
    xi_base: &FourierField,
    seed: u64,
    alpha: f64,
    c2_mode: C2Numerator,
) -> Result<EnhancedNoise3d> {
    let spec = xi_base.spec();
    if spec.dim() != 3 {
        return Err(CoreError::DimensionMismatch("enhance_3d needs dim = 3".into()));
    }
    let part = DyadicPartition::for_spec(&spec);
    let one = |c: f64| FourierField::constant(spec, Complex64::new(c, 0.0));
    let k_max = spec.k_max();
    let mut c1 = 0.0f64;
    let mut modes = Vec::new();
    for k0 in -k_max..=k_max {
        for k1 in -k_max..=k_max {
            for k2 in -k_max..=k_max {
                let n2 = ((k0 * k0 + k1 * k1 + k2 * k2) as f64).max(0.0);
                if n2 == 0.0 {
                    continue;
                }
                c1 += 1.0 / (TAU * TAU * n2);
                modes.push([k0, k1, k2]);
            }
        }
    }
    let mut c2 = 0.0f64;
    if k_max <= 16 {
        for &ka in &modes {
            let na = norm_sq(ka);
            for &kb in &modes {
                let diff = [ka[0] - kb[0], ka[1] - kb[1], ka[2] - kb[2]];
                let d2 = norm_sq(diff);
                if d2 == 0.0 {
                    continue;
                }
                let dot = (ka[0] * kb[0] + ka[1] * kb[1] + ka[2] * kb[2]) as f64;
                let num = match c2_mode {
                    C2Numerator::AbsoluteDot => dot.abs(),
                    C2Numerator::SignedDot => dot,
                };
                c2 += num / (d2 * na * na * norm_sq(kb));
            }
        }
    } else {
        return Err(CoreError::MatrixTooLarge(format!(
            "c2 double sum at K={k_max} needs ~(2K+1)^6 terms; cap is K=16"
        )));
    }
    let x = xi_base.inv_neg_laplacian_dropping_zero();
    let x1 = x.grad_dot_grad(&x)?.sub(&one(c1))?.bessel_inv();
    let x2 = x
        .grad_dot_grad(&x1)?
        .bessel_inv()
        .scale(Complex64::new(2.0, 0.0));
    let x3 = x.grad_dot_grad(&x2)?.bessel_inv();
    let x4 = x1.grad_dot_grad(&x1)?.sub(&one(c2))?.bessel_inv();
    let mut grad_res = FourierField::zeros(spec);
    for d in 0..3 {
        grad_res.add_assign(&paracalc::resonant(&x.derivative(d), &x3.derivative(d), &part)?);
    }
    let w = x.add(&x1)?.add(&x2)?;
    let w_tilde: Vec<FourierField> = (0..3).map(|d| w.derivative(d).bessel_inv()).collect();
    let z = x2
        .grad_dot_grad(&x2)?
        .add(&x1.grad_dot_grad(&x2)?.scale(Complex64::new(2.0, 0.0)))?
        .add(&x1)?
        .add(&x2)?
        .bessel_inv()
        .add(&x4)?
        .add(&x3.scale(Complex64::new(2.0, 0.0)))?;
    let norms = vec![
        ("X in C^a", holder_norm(&x, alpha, &part)),
        ("X1 in C^2a", holder_norm(&x1, 2.0 * alpha, &part)),
        ("X2 in C^{a+1}", holder_norm(&x2, alpha + 1.0, &part)),
        ("X3 in C^{a+1}", holder_norm(&x3, alpha + 1.0, &part)),
        ("X4 in C^4a", holder_norm(&x4, 4.0 * alpha, &part)),
        ("gradX o gradX3 in C^{2a-1}", holder_norm(&grad_res, 2.0 * alpha - 1.0, &part)),
    ];
    Ok(EnhancedNoise3d {
        eps: 0.0,
        seed,
        mollifier: Mollifier::Bump,
        alpha,
        xi: xi_base.clone(),
        x,
        x1,
        x2,
        x3,
        x4,
        grad_x_res_grad_x3: grad_res,
        c1_eps: c1,
        c2_eps: c2,
        w,
        w_tilde,
        z,
        norms,
    })
}

/// Restricts a fine-lattice 2-d enhancement to a coarser lattice by
/// coefficient truncation.  The truncated `Ξ₂` carries resonant
/// contributions of the dropped high modes, so operators built from it see
/// genuine truncation effects — the object the resolution-doubling
/// diagnostics measure.
pub fn restrict_enhancement_2d(fine: &EnhancedNoise2d, coarse: TorusSpec) -> Result<EnhancedNoise2d> {
    let fine_spec = fine.xi.spec();
    if coarse.dim() != 2 || coarse.k_max() > fine_spec.k_max() {
        return Err(CoreError::InvalidParameter(
            "restriction target must be a coarser 2-d lattice".into(),
        ));
    }
    let part = DyadicPartition::for_spec(&coarse);
    let restrict = |f: &FourierField| {
        let mut out = FourierField::zeros(coarse);
        for k in coarse.modes() {
            out.set_coeff(k, f.coeff(k));
        }
        out.reality = f.reality;
        out.zero_mode_excluded = f.zero_mode_excluded;
        out
    };
    let xi = restrict(&fine.xi);
    let xi2 = restrict(&fine.xi2);
    let norms = (
        holder_norm(&xi, fine.alpha, &part),
        holder_norm(&xi2, 2.0 * fine.alpha + 2.0, &part),
    );
    Ok(EnhancedNoise2d {
        eps: fine.eps,
        seed: fine.seed,
        mollifier: fine.mollifier,
        alpha: fine.alpha,
        xi,
        xi2,
        c_eps: fine.c_eps,
        norms,
    })
}

/// Grid-evaluated exponentials of the 3-d noise fields.  The grids are the
/// primary representation (pointwise identities hold exactly there); use
/// [`ExpLift3d::field`] for a re-truncated coefficient view.
#[derive(Debug, Clone)]
pub struct ExpLift3d {
    pub e_x: Grid,
    pub e_x1: Grid,
    pub e_x2: Grid,
    pub e_w: Grid,
    pub e_w_neg: Grid,
    pub e_2w: Grid,
}

impl ExpLift3d {
    pub fn field(grid: &Grid) -> FourierField {
        let mut f = grid.analyze();
        f.reality = true;
        f
    }
}

/// Computes `e^X, e^{X¹}, e^{X²}, e^{W}, e^{-W}, e^{2W}` on the grid.
/// Fails with an overflow error for extreme realizations.
pub fn exp_lift(noise: &EnhancedNoise3d) -> Result<ExpLift3d> {
    let exp_grid = |f: &FourierField, scale: f64| -> Result<Grid> {
        let mut g = f.to_grid();
        g.map_in_place(|z| Complex64::new((scale * z.re).exp(), 0.0));
        if g.values().iter().any(|v| !v.re.is_finite()) {
            return Err(CoreError::Overflow("exponential lift overflowed".into()));
        }
        Ok(g)
    };
    Ok(ExpLift3d {
        e_x: exp_grid(&noise.x, 1.0)?,
        e_x1: exp_grid(&noise.x1, 1.0)?,
        e_x2: exp_grid(&noise.x2, 1.0)?,
        e_w: exp_grid(&noise.w, 1.0)?,
        e_w_neg: exp_grid(&noise.w, -1.0)?,
        e_2w: exp_grid(&noise.w, 2.0)?,
    })
}

/// Random `H^s`-regularity sample: hermitian coefficients
/// `σ·g_k/(1+|k|)^{s+d/2}` with `g_k` standard complex Gaussians.
pub fn rough_field(spec: TorusSpec, s: f64, sigma: f64, seed: u64) -> FourierField {
    let white = sample_white_noise(seed, spec);
    let d = spec.dim() as f64;
    let mut f = white.apply_multiplier(|k| sigma / (1.0 + norm(k)).powf(s + d / 2.0));
    f.reality = true;
    f
}

/// Random real field band-limited to `|k|_∞ ≤ band` (smooth samples for
/// operator sweeps).
pub fn band_limited_field(spec: TorusSpec, band: i64, sigma: f64, seed: u64) -> FourierField {
    let white = sample_white_noise(seed, spec);
    let mut f = white.apply_multiplier(|k| {
        if k.iter().all(|c| c.abs() <= band) {
            sigma
        } else {
            0.0
        }
    });
    f.reality = true;
    f
}

/// Random complex band-limited field (no reality constraint), for
/// Schrödinger data.
pub fn complex_band_limited_field(
    spec: TorusSpec,
    band: i64,
    sigma: f64,
    seed: u64,
) -> FourierField {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut f = FourierField::zeros(spec);
    f.reality = false;
    let modes: Vec<_> = spec.modes().collect();
    for k in modes {
        if k.iter().take(spec.dim()).all(|c| c.abs() <= band) {
            let (a, b) = {
                let u: f64 = rng.gen();
                let v: f64 = rng.gen();
                let r = (-2.0 * u.max(1e-300).ln()).sqrt();
                (r * (TAU * v).cos(), r * (TAU * v).sin())
            };
            f.set_coeff(k, Complex64::new(a, b) * sigma / 2f64.sqrt());
        }
    }
    f
}
