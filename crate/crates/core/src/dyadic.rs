//! Littlewood-Paley theory on the truncated lattice.
//!
//! The block multipliers come from a radial pair `(χ, ρ)` with
//!
//! * `supp χ ⊆ {|ξ| ≤ 4/3}`, `supp ρ ⊆ {3/4 ≤ |ξ| ≤ 8/3}`,
//! * `χ(ξ) + Σ_{j≥0} ρ(2^{-j}ξ) = 1`,
//! * `ρ(2^{-i}·)ρ(2^{-j}·) ≡ 0` for `|i-j| ≥ 2` and `χ·ρ(2^{-j}·) ≡ 0` for `j ≥ 1`.
//!
//! We build `ρ` by telescoping a smooth radial step: `ρ(r) = χ(r/2) - χ(r)`,
//! with `χ` a smooth transition from 1 to 0 on `[3/4, 4/3]` constructed from
//! the standard `exp(-1/t)` bump profile.  The telescoping makes the
//! partition of unity exact (up to roundoff) at every lattice point.

use crate::error::{CoreError, Result};
use crate::torus::{norm, FourierField, TorusSpec};

/// Smooth step: 0 for `t ≤ 0`, 1 for `t ≥ 1`, C^∞ monotone in between.
fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let e = (-1.0 / t).exp();
        let f = (-1.0 / (1.0 - t)).exp();
        e / (e + f)
    }
}

pub const CHI_PLATEAU: f64 = 3.0 / 4.0;
pub const CHI_SUPPORT: f64 = 4.0 / 3.0;
pub const RHO_SUPPORT_LO: f64 = 3.0 / 4.0;
pub const RHO_SUPPORT_HI: f64 = 8.0 / 3.0;

/// The dyadic bump pair and the block multipliers derived from it.
#[derive(Debug, Clone, Copy)]
pub struct DyadicPartition {
    j_max: i32,
}

impl DyadicPartition {
    /// Partition adapted to `spec`: blocks beyond `j_max` vanish on the lattice.
    pub fn for_spec(spec: &TorusSpec) -> Self {
        // χ(2^{-(J+1)} r) = 1 for all r ≤ K√d  ⟺  2^{-(J+1)} K√d ≤ 3/4.
        let r = spec.max_freq();
        let mut j = 0i32;
        while (2f64).powi(-(j + 1)) * r > CHI_PLATEAU {
            j += 1;
        }
        Self { j_max: j }
    }

    /// Largest block index with nonzero multiplier on the lattice.
    pub fn j_max(&self) -> i32 {
        self.j_max
    }

    /// Radial low-frequency bump.
    pub fn chi(&self, r: f64) -> f64 {
        1.0 - smooth_step((r - CHI_PLATEAU) / (CHI_SUPPORT - CHI_PLATEAU))
    }

    /// Radial annulus bump, `ρ(r) = χ(r/2) - χ(r)`.
    pub fn rho(&self, r: f64) -> f64 {
        self.chi(r / 2.0) - self.chi(r)
    }

    /// Multiplier of the block `Δ_j` at euclidean frequency `r`.
    pub fn block_multiplier(&self, j: i32, r: f64) -> f64 {
        if j == -1 {
            self.chi(r)
        } else {
            self.rho((2f64).powi(-j) * r)
        }
    }

    /// Max pointwise defect of `χ + Σ_j ρ(2^{-j}·) - 1` over the lattice.
    pub fn partition_defect(&self, spec: &TorusSpec) -> f64 {
        let mut worst = 0.0f64;
        for k in spec.modes() {
            let r = norm(k);
            let mut s = self.chi(r);
            for j in 0..=self.j_max {
                s += self.rho((2f64).powi(-j) * r);
            }
            worst = worst.max((s - 1.0).abs());
        }
        worst
    }
}

/// Littlewood-Paley block `Δ_j f`; `j = -1` is the χ block, `j > j_max`
/// returns the zero field.
pub fn lp_block(f: &FourierField, j: i32, part: &DyadicPartition) -> Result<FourierField> {
    if j < -1 {
        return Err(CoreError::InvalidParameter(format!("block index {j} < -1")));
    }
    if j > part.j_max() {
        return Ok(FourierField::zeros(f.spec()));
    }
    Ok(f.apply_multiplier(|k| part.block_multiplier(j, norm(k))))
}

/// All blocks `Δ_{-1} f, …, Δ_{j_max} f` at once.
pub fn lp_decompose(f: &FourierField, part: &DyadicPartition) -> Vec<FourierField> {
    (-1..=part.j_max())
        .map(|j| f.apply_multiplier(|k| part.block_multiplier(j, norm(k))))
        .collect()
}

/// Sharp euclidean frequency cutoff at `2^N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutoffSide {
    /// Keep `|k| > 2^N`.
    Above,
    /// Keep `|k| ≤ 2^N`.
    Below,
}

/// `Δ_{>N} f` (side = Above) or `Δ_{≤N} f` (side = Below);
/// the two sides sum back to `f` exactly.
pub fn freq_cutoff(f: &FourierField, n: u32, side: CutoffSide) -> FourierField {
    let threshold_sq = (2f64).powi(2 * n as i32);
    let keep_above = side == CutoffSide::Above;
    f.apply_multiplier(|k| {
        let above = crate::torus::norm_sq(k) > threshold_sq;
        if above == keep_above {
            1.0
        } else {
            0.0
        }
    })
}

/// Besov norm report: the value together with the per-block `L^p` norms it
/// was assembled from.
#[derive(Debug, Clone)]
pub struct NormReport {
    pub alpha: f64,
    pub p: f64,
    pub q: f64,
    pub value: f64,
    pub per_block: Vec<(i32, f64)>,
}

impl NormReport {
    /// Recomputes the value from the stored per-block norms.
    pub fn recompute(&self) -> f64 {
        combine_blocks(self.alpha, self.q, &self.per_block)
    }
}

fn combine_blocks(alpha: f64, q: f64, per_block: &[(i32, f64)]) -> f64 {
    if q.is_infinite() {
        per_block
            .iter()
            .map(|&(j, b)| (2f64).powi(j).powf(alpha) * b)
            .fold(0.0, f64::max)
    } else {
        per_block
            .iter()
            .map(|&(j, b)| ((2f64).powi(j).powf(alpha) * b).powf(q))
            .sum::<f64>()
            .powf(1.0 / q)
    }
}

/// `‖f‖_{B^α_{p,q}}` with block `L^p` norms evaluated on the collocation
/// grid (`p = 2` uses Parseval on the coefficients, `p = ∞` the grid max).
pub fn besov_norm(
    f: &FourierField,
    alpha: f64,
    p: f64,
    q: f64,
    part: &DyadicPartition,
) -> Result<NormReport> {
    if p < 1.0 || q < 1.0 {
        return Err(CoreError::InvalidParameter(format!(
            "Besov indices must satisfy p,q ≥ 1 (got p={p}, q={q})"
        )));
    }
    let mut per_block = Vec::new();
    for j in -1..=part.j_max() {
        let block = lp_block(f, j, part)?;
        let bn = if p == 2.0 {
            block.l2_norm()
        } else {
            block.to_grid().lp_norm(p)
        };
        per_block.push((j, bn));
    }
    let value = combine_blocks(alpha, q, &per_block);
    Ok(NormReport { alpha, p, q, value, per_block })
}

/// Besov-Hölder norm `‖f‖_{C^α} = ‖f‖_{B^α_{∞,∞}}`.
pub fn holder_norm(f: &FourierField, alpha: f64, part: &DyadicPartition) -> f64 {
    besov_norm(f, alpha, f64::INFINITY, f64::INFINITY, part)
        .expect("∞ indices are valid")
        .value
}

fn multi_indices(dim: usize, order: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    let mut stack = vec![([0usize; 3], 0usize, order)];
    while let Some((mu, d, rem)) = stack.pop() {
        if d == dim {
            if rem == 0 {
                out.push(mu);
            }
            continue;
        }
        for take in 0..=rem {
            let mut mu2 = mu;
            mu2[d] = take;
            stack.push((mu2, d + 1, rem - take));
        }
    }
    out
}

fn apply_multi_derivative(f: &FourierField, mu: [usize; 3]) -> FourierField {
    let mut out = f.clone();
    for (d, &m) in mu.iter().enumerate() {
        for _ in 0..m {
            out = out.derivative(d);
        }
    }
    out
}

/// Bernstein ratio `max_{|μ|=k} ‖∂^μ f‖_{L^q} / (λ^{k+d(1/p-1/q)} ‖f‖_{L^p})`
/// with `λ = 2^j`; `f` must be supported in block `j`.
pub fn bernstein_check(
    f: &FourierField,
    j: i32,
    k_deriv: usize,
    p: f64,
    q: f64,
    part: &DyadicPartition,
) -> Result<f64> {
    if p < 1.0 || q < 1.0 || q < p {
        return Err(CoreError::InvalidParameter(format!(
            "Bernstein needs 1 ≤ p ≤ q (got p={p}, q={q})"
        )));
    }
    let total = f.l2_norm();
    if total == 0.0 {
        return Ok(0.0);
    }
    // support check: no coefficient mass where the block multiplier vanishes
    let mut off_support = 0.0f64;
    for k in f.spec().modes() {
        if part.block_multiplier(j, norm(k)) == 0.0 {
            off_support += f.coeff(k).norm_sqr();
        }
    }
    if off_support.sqrt() / total > 1e-12 {
        return Err(CoreError::InvalidParameter(format!(
            "field is not supported in block {j} (off-support mass {:.3e})",
            off_support.sqrt() / total
        )));
    }
    let d = f.spec().dim() as f64;
    let lambda = (2f64).powi(j.max(0));
    let denom_norm = if p == 2.0 { f.l2_norm() } else { f.to_grid().lp_norm(p) };
    let denom = lambda.powf(k_deriv as f64 + d * (1.0 / p - 1.0 / q)) * denom_norm;
    let mut best = 0.0f64;
    for mu in multi_indices(f.spec().dim(), k_deriv) {
        let g = apply_multi_derivative(f, mu);
        let gn = if q == 2.0 { g.l2_norm() } else { g.to_grid().lp_norm(q) };
        best = best.max(gn);
    }
    Ok(best / denom)
}

/// `⟨Δ_i f, Δ_j f⟩` for blocks at distance ≥ 2, normalized by `‖f‖²`.
pub fn block_orthogonality_defect(f: &FourierField, part: &DyadicPartition) -> Result<f64> {
    let blocks = lp_decompose(f, part);
    let scale = f.l2_norm().max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for a in 0..blocks.len() {
        for b in (a + 2)..blocks.len() {
            worst = worst.max(blocks[a].inner(&blocks[b]).norm());
        }
    }
    Ok(worst / (scale * scale))
}
