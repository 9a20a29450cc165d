//! Bony paraproducts and the commutator/remainder operators built on them.
//!
//! With blocks `Δ_i` from [`crate::dyadic`], the product of two fields splits
//! as
//!
//! ```text
//! fg = f≺g + f∘g + f≻g,
//! f≺g = Σ_{i≤j-2} Δ_i f Δ_j g,    f∘g = Σ_{|i-j|≤1} Δ_i f Δ_j g,
//! ```
//!
//! and `f≻g = g≺f` as a bilinear expression.  All block products are
//! evaluated on the dealiased collocation grid, so the three parts sum to
//! the dealiased product exactly (the pair groups partition all `(i,j)`).

use num_complex::Complex64;

use crate::dyadic::{freq_cutoff, lp_decompose, CutoffSide, DyadicPartition};
use crate::error::{CoreError, Result};
use crate::torus::{FourierField, Grid};

/// Littlewood-Paley blocks of a field, synthesized on the grid once for
/// repeated pair summation.
pub struct BlockGrids {
    blocks: Vec<Grid>,
}

impl BlockGrids {
    pub fn of(f: &FourierField, part: &DyadicPartition) -> Self {
        let blocks = lp_decompose(f, part).iter().map(|b| b.to_grid()).collect();
        Self { blocks }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn grid(&self, idx: usize) -> &Grid {
        &self.blocks[idx]
    }

    pub fn zero_grid(&self) -> Grid {
        let mut g = self.blocks[0].clone();
        for v in g.values_mut() {
            *v = Complex64::ZERO;
        }
        g
    }
}

/// `acc += coeff · Σ_{(i,j) selected} Δ_i f · Δ_j g` on the grid.
pub fn pair_sum_into(
    acc: &mut Grid,
    coeff: f64,
    f: &BlockGrids,
    g: &BlockGrids,
    select: impl Fn(i32, i32) -> bool,
) {
    for a in 0..f.len() {
        let i = a as i32 - 1;
        for b in 0..g.len() {
            let j = b as i32 - 1;
            if select(i, j) {
                let fa = f.grid(a).values();
                let gb = g.grid(b).values();
                for (out, (x, y)) in acc.values_mut().iter_mut().zip(fa.iter().zip(gb)) {
                    *out += coeff * x * y;
                }
            }
        }
    }
}

/// `Σ_{(i,j) selected} Δ_i f · Δ_j g` accumulated on the grid.
fn pair_sum(f: &BlockGrids, g: &BlockGrids, select: impl Fn(i32, i32) -> bool) -> Grid {
    let mut acc = f.zero_grid();
    pair_sum_into(&mut acc, 1.0, f, g, select);
    acc
}

/// The three Bony pieces of a product.
#[derive(Debug, Clone)]
pub struct ProductTriple {
    /// `f ≺ g`
    pub lo_hi: FourierField,
    /// `f ∘ g`
    pub resonant: FourierField,
    /// `f ≻ g`
    pub hi_lo: FourierField,
}

impl ProductTriple {
    pub fn total(&self) -> FourierField {
        let mut t = self.lo_hi.clone();
        t.add_assign(&self.resonant);
        t.add_assign(&self.hi_lo);
        t
    }
}

/// Full Bony decomposition of `fg`.
pub fn paraproduct(f: &FourierField, g: &FourierField, part: &DyadicPartition) -> Result<ProductTriple> {
    f.check_same_spec(g)?;
    let fb = BlockGrids::of(f, part);
    let gb = BlockGrids::of(g, part);
    let reality = f.reality && g.reality;
    let mut lo_hi = pair_sum(&fb, &gb, |i, j| i <= j - 2).analyze();
    let mut resonant = pair_sum(&fb, &gb, |i, j| (i - j).abs() <= 1).analyze();
    let mut hi_lo = pair_sum(&fb, &gb, |i, j| i >= j + 2).analyze();
    lo_hi.reality = reality;
    resonant.reality = reality;
    hi_lo.reality = reality;
    Ok(ProductTriple { lo_hi, resonant, hi_lo })
}

/// `f ≺ g` alone.
pub fn para_lo_hi(f: &FourierField, g: &FourierField, part: &DyadicPartition) -> Result<FourierField> {
    f.check_same_spec(g)?;
    let fb = BlockGrids::of(f, part);
    let gb = BlockGrids::of(g, part);
    let mut out = pair_sum(&fb, &gb, |i, j| i <= j - 2).analyze();
    out.reality = f.reality && g.reality;
    Ok(out)
}

/// `f ∘ g` alone.
pub fn resonant(f: &FourierField, g: &FourierField, part: &DyadicPartition) -> Result<FourierField> {
    f.check_same_spec(g)?;
    let fb = BlockGrids::of(f, part);
    let gb = BlockGrids::of(g, part);
    let mut out = pair_sum(&fb, &gb, |i, j| (i - j).abs() <= 1).analyze();
    out.reality = f.reality && g.reality;
    Ok(out)
}

/// `f ≽ g = f∘g + f≻g`.
pub fn para_ge(f: &FourierField, g: &FourierField, part: &DyadicPartition) -> Result<FourierField> {
    f.check_same_spec(g)?;
    let fb = BlockGrids::of(f, part);
    let gb = BlockGrids::of(g, part);
    let mut out = pair_sum(&fb, &gb, |i, j| i >= j - 1).analyze();
    out.reality = f.reality && g.reality;
    Ok(out)
}

/// Pre-synthesized blocks of a fixed field, for repeated paraproducts
/// against a varying argument (the `Γ`-map iterates many of these).
pub struct FixedFactor {
    pub field: FourierField,
    blocks: BlockGrids,
}

impl FixedFactor {
    pub fn new(field: FourierField, part: &DyadicPartition) -> Self {
        let blocks = BlockGrids::of(&field, part);
        Self { field, blocks }
    }

    pub fn blocks(&self) -> &BlockGrids {
        &self.blocks
    }

    /// `v ≺ φ` with `φ` this fixed field.
    pub fn lo_hi_from(&self, v: &FourierField, part: &DyadicPartition) -> FourierField {
        let vb = BlockGrids::of(v, part);
        let mut out = pair_sum(&vb, &self.blocks, |i, j| i <= j - 2).analyze();
        out.reality = v.reality && self.field.reality;
        out
    }

    /// `φ ≺ v` with `φ` this fixed field.
    pub fn lo_hi_into(&self, v: &FourierField, part: &DyadicPartition) -> FourierField {
        let vb = BlockGrids::of(v, part);
        let mut out = pair_sum(&self.blocks, &vb, |i, j| i <= j - 2).analyze();
        out.reality = v.reality && self.field.reality;
        out
    }

    /// `v ∘ φ`.
    pub fn resonant_with(&self, v: &FourierField, part: &DyadicPartition) -> FourierField {
        let vb = BlockGrids::of(v, part);
        let mut out = pair_sum(&vb, &self.blocks, |i, j| (i - j).abs() <= 1).analyze();
        out.reality = v.reality && self.field.reality;
        out
    }

    /// `v ≽ φ = v∘φ + v≻φ`.
    pub fn ge_with(&self, v: &FourierField, part: &DyadicPartition) -> FourierField {
        let vb = BlockGrids::of(v, part);
        let mut out = pair_sum(&vb, &self.blocks, |i, j| i >= j - 1).analyze();
        out.reality = v.reality && self.field.reality;
        out
    }

    /// Full dealiased product `v·φ` (all block pairs).
    pub fn product_with(&self, v: &FourierField, part: &DyadicPartition) -> FourierField {
        let vb = BlockGrids::of(v, part);
        let mut out = pair_sum(&vb, &self.blocks, |_, _| true).analyze();
        out.reality = v.reality && self.field.reality;
        out
    }

    /// Adjoint of `v ↦ v ≺ φ` (hermitian inner product, real `φ`):
    /// `w ↦ Σ_j S_{j-1}(Δ_j φ · w)` with `S_{j-1} = Σ_{i≤j-2} Δ_i`.
    pub fn lo_hi_from_adjoint(&self, w: &FourierField, part: &DyadicPartition) -> FourierField {
        let wg = w.to_grid();
        let mut acc = FourierField::zeros(w.spec());
        for b in 0..self.blocks.len() {
            let j = b as i32 - 1;
            if j < 1 {
                continue; // S_{j-1} empty for j < 1
            }
            let mut prod = self.blocks.grid(b).clone();
            prod.mul_assign(&wg);
            let field = prod.analyze();
            let low = field.apply_multiplier(|k| {
                let r = crate::torus::norm(k);
                let mut s = 0.0;
                for i in -1..=(j - 2) {
                    s += part.block_multiplier(i, r);
                }
                s
            });
            acc.add_assign(&low);
        }
        acc
    }

    /// Adjoint of `v ↦ φ ≺ v`: `w ↦ Σ_j Δ_j(S_{j-1}φ · w)`.
    pub fn lo_hi_into_adjoint(&self, w: &FourierField, part: &DyadicPartition) -> FourierField {
        let wg = w.to_grid();
        let mut acc = FourierField::zeros(w.spec());
        // invariant: entering iteration j, cum = S_{j-1}φ = Σ_{i≤j-2} Δ_i φ
        let mut cum = self.blocks.grid(0).clone();
        for v in cum.values_mut() {
            *v = Complex64::ZERO;
        }
        for b in 0..self.blocks.len() {
            let j = b as i32 - 1;
            if j >= 1 {
                let mut prod = cum.clone();
                prod.mul_assign(&wg);
                let field = prod.analyze();
                let blk =
                    field.apply_multiplier(|k| part.block_multiplier(j, crate::torus::norm(k)));
                acc.add_assign(&blk);
            }
            // next iteration is j+1, which needs Σ_{i≤j-1}: fold in Δ_{j-1}φ
            if j >= 0 {
                let add = self.blocks.grid((j - 1 + 1) as usize);
                for (c, a) in cum.values_mut().iter_mut().zip(add.values()) {
                    *c += a;
                }
            }
        }
        acc
    }

    /// Adjoint of `v ↦ v ∘ φ`: `w ↦ Σ_{|i-j|≤1} Δ_i(Δ_j φ · w)`.
    pub fn resonant_adjoint(&self, w: &FourierField, part: &DyadicPartition) -> FourierField {
        let wg = w.to_grid();
        let mut acc = FourierField::zeros(w.spec());
        for b in 0..self.blocks.len() {
            let j = b as i32 - 1;
            let mut prod = self.blocks.grid(b).clone();
            prod.mul_assign(&wg);
            let field = prod.analyze();
            let near = field.apply_multiplier(|k| {
                let r = crate::torus::norm(k);
                let mut s = 0.0;
                for i in (j - 1)..=(j + 1) {
                    if i >= -1 {
                        s += part.block_multiplier(i, r);
                    }
                }
                s
            });
            acc.add_assign(&near);
        }
        acc
    }
}

/// Commutator `C(f,g,h) = (f≺g)∘h − f·(g∘h)`.
pub fn commutator_c(
    f: &FourierField,
    g: &FourierField,
    h: &FourierField,
    part: &DyadicPartition,
) -> Result<FourierField> {
    f.check_same_spec(g)?;
    f.check_same_spec(h)?;
    let fg = para_lo_hi(f, g, part)?;
    let first = resonant(&fg, h, part)?;
    let gh = resonant(g, h, part)?;
    let second = f.product(&gh)?;
    first.sub(&second)
}

/// Cutoff commutator `C_N(f,g,h) = (Δ_{>N}(f≺g))∘h − f·(g∘h)`.
pub fn commutator_cn(
    f: &FourierField,
    g: &FourierField,
    h: &FourierField,
    n: u32,
    part: &DyadicPartition,
) -> Result<FourierField> {
    f.check_same_spec(g)?;
    f.check_same_spec(h)?;
    let fg = freq_cutoff(&para_lo_hi(f, g, part)?, n, CutoffSide::Above);
    let first = resonant(&fg, h, part)?;
    let gh = resonant(g, h, part)?;
    let second = f.product(&gh)?;
    first.sub(&second)
}

/// Adjoint defect `D(f,g,h) = (f, h∘g) − (f≺g, h)` with the bilinear
/// pairing `(u,v) = ∫ uv = Σ_k û(k) v̂(-k)`.
pub fn adjoint_defect_d(
    f: &FourierField,
    g: &FourierField,
    h: &FourierField,
    part: &DyadicPartition,
) -> Result<Complex64> {
    f.check_same_spec(g)?;
    f.check_same_spec(h)?;
    let hg = resonant(h, g, part)?;
    let fg = para_lo_hi(f, g, part)?;
    Ok(f.bilinear_pair(&hg) - fg.bilinear_pair(h))
}

/// Resonance window such that `(Δ_i f Δ_k g, Δ_j h) = 0` whenever
/// `i ≤ k-2` and `|j-k| > L`, for the bump supports of this partition.
/// With `supp χ ⊆ [0,4/3]` and `supp ρ ⊆ [3/4, 8/3]` the product spectrum
/// lies in `[2^k/12, (10/3)·2^k]`, giving `j-k ≤ 2` and `k-j ≤ 5`.
pub const D_ORACLE_WINDOW: i32 = 5;

/// Independent double-block-sum formula for `D`:
/// `(Σ_{i≥k-1, |j-k|≤L} − Σ_{i, 1<|j-k|≤L}) (Δ_i f, Δ_j h Δ_k g)`.
/// Exact (equal to [`adjoint_defect_d`]) for every `L ≥ D_ORACLE_WINDOW`.
pub fn adjoint_defect_block_sum(
    f: &FourierField,
    g: &FourierField,
    h: &FourierField,
    window: i32,
    part: &DyadicPartition,
) -> Result<Complex64> {
    f.check_same_spec(g)?;
    f.check_same_spec(h)?;
    let fblocks = lp_decompose(f, part);
    let gb = BlockGrids::of(g, part);
    let hb = BlockGrids::of(h, part);
    let jm = part.j_max();
    let mut acc = Complex64::ZERO;
    for k in -1..=jm {
        for j in -1..=jm {
            let dist = (j - k).abs();
            if dist > window {
                continue;
            }
            // Δ_j h · Δ_k g on the grid
            let mut prod = hb.grid((j + 1) as usize).clone();
            prod.mul_assign(gb.grid((k + 1) as usize));
            let prod_field = prod.analyze();
            for (bi, fb) in fblocks.iter().enumerate() {
                let i = bi as i32 - 1;
                let term = fb.bilinear_pair(&prod_field);
                if dist <= 1 && i >= k - 1 {
                    acc += term;
                }
                if dist > 1 {
                    // second sum, over all i
                    if i >= k - 1 {
                        acc += term; // part of the first sum
                    }
                    acc -= term; // minus the full second sum
                }
            }
        }
    }
    Ok(acc)
}

/// Paraproduct-resolvent commutator
/// `R(f,g) = (1-Δ)^{-1}(f≺g) − f≺(1-Δ)^{-1}g`.
pub fn para_resolvent_r(
    f: &FourierField,
    g: &FourierField,
    part: &DyadicPartition,
) -> Result<FourierField> {
    f.check_same_spec(g)?;
    let first = para_lo_hi(f, g, part)?.bessel_inv();
    let second = para_lo_hi(f, &g.bessel_inv(), part)?;
    first.sub(&second)
}

/// Paralinearization `F(f) = F'(f) ≺ f + R_F(f)` for a scalar C² function
/// evaluated pointwise on the grid; returns `(F'(f)≺f, R_F(f))`.
pub fn paralinearize(
    value: impl Fn(f64) -> f64,
    derivative: impl Fn(f64) -> f64,
    f: &FourierField,
    part: &DyadicPartition,
) -> Result<(FourierField, FourierField)> {
    let grid = f.to_grid();
    let mut fv = grid.clone();
    let mut dv = grid.clone();
    fv.map_in_place(|z| Complex64::new(value(z.re), 0.0));
    dv.map_in_place(|z| Complex64::new(derivative(z.re), 0.0));
    if fv.values().iter().chain(dv.values()).any(|v| !v.re.is_finite()) {
        return Err(CoreError::InvalidParameter(
            "function or derivative not finite at attained values".into(),
        ));
    }
    let f_of = fv.analyze();
    let d_of = dv.analyze();
    let para = para_lo_hi(&d_of, f, part)?;
    let remainder = f_of.sub(&para)?;
    Ok((para, remainder))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::lp_block;
    use crate::torus::TorusSpec;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn random_real_field(spec: TorusSpec, seed: u64) -> FourierField {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut f = FourierField::zeros(spec);
        let modes: Vec<_> = spec.modes().collect();
        for k in modes {
            if spec.is_canonical(k) {
                let c = Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
                f.set_coeff(k, c);
                f.set_coeff(spec.negate(k), c.conj());
            }
        }
        f.set_coeff([0, 0, 0], Complex64::new(rng.gen::<f64>() - 0.5, 0.0));
        f.reality = true;
        f
    }

    #[test]
    fn decomposition_identity() {
        let spec = TorusSpec::with_dealiased_grid(2, 16).unwrap();
        let part = DyadicPartition::for_spec(&spec);
        let f = random_real_field(spec, 1);
        let g = random_real_field(spec, 2);
        let triple = paraproduct(&f, &g, &part).unwrap();
        let direct = f.product(&g).unwrap();
        let err = triple.total().sub(&direct).unwrap().l2_norm() / direct.l2_norm();
        assert!(err < 1e-12, "decomposition defect {err}");
    }

    #[test]
    fn one_lo_hi_g_drops_two_blocks() {
        // 1 ≺ g = g − Δ_{-1}g − Δ_0 g (block enumeration oracle)
        let spec = TorusSpec::with_dealiased_grid(2, 12).unwrap();
        let part = DyadicPartition::for_spec(&spec);
        let one = FourierField::constant(spec, Complex64::new(1.0, 0.0));
        let g = random_real_field(spec, 7);
        let lhs = para_lo_hi(&one, &g, &part).unwrap();
        let expected = g
            .sub(&lp_block(&g, -1, &part).unwrap())
            .unwrap()
            .sub(&lp_block(&g, 0, &part).unwrap())
            .unwrap();
        let err = lhs.sub(&expected).unwrap().l2_norm() / g.l2_norm();
        assert!(err < 1e-12, "1≺g identity defect {err}");
    }

    #[test]
    fn f_lo_hi_constant_vanishes() {
        let spec = TorusSpec::with_dealiased_grid(2, 12).unwrap();
        let part = DyadicPartition::for_spec(&spec);
        let one = FourierField::constant(spec, Complex64::new(4.0, 0.0));
        let f = random_real_field(spec, 3);
        assert_eq!(para_lo_hi(&f, &one, &part).unwrap().l2_norm(), 0.0);
    }

    #[test]
    fn hi_lo_is_swapped_lo_hi() {
        let spec = TorusSpec::with_dealiased_grid(2, 10).unwrap();
        let part = DyadicPartition::for_spec(&spec);
        let f = random_real_field(spec, 4);
        let g = random_real_field(spec, 5);
        let triple = paraproduct(&f, &g, &part).unwrap();
        let swapped = para_lo_hi(&g, &f, &part).unwrap();
        assert!(triple.hi_lo.sub(&swapped).unwrap().l2_norm() < 1e-12);
    }

    #[test]
    fn resonant_is_symmetric() {
        let spec = TorusSpec::with_dealiased_grid(2, 10).unwrap();
        let part = DyadicPartition::for_spec(&spec);
        let f = random_real_field(spec, 8);
        let g = random_real_field(spec, 9);
        let a = resonant(&f, &g, &part).unwrap();
        let b = resonant(&g, &f, &part).unwrap();
        assert!(a.sub(&b).unwrap().l2_norm() < 1e-12);
    }

    #[test]
    fn bilinearity() {
        let spec = TorusSpec::with_dealiased_grid(2, 8).unwrap();
        let part = DyadicPartition::for_spec(&spec);
        let f1 = random_real_field(spec, 10);
        let f2 = random_real_field(spec, 11);
        let g = random_real_field(spec, 12);
        let (a, b) = (Complex64::new(1.75, 0.0), Complex64::new(-0.5, 0.0));
        let comb = f1.scale(a).add(&f2.scale(b)).unwrap();
        let lhs = paraproduct(&comb, &g, &part).unwrap();
        let t1 = paraproduct(&f1, &g, &part).unwrap();
        let t2 = paraproduct(&f2, &g, &part).unwrap();
        for (l, (x, y)) in [
            (&lhs.lo_hi, (&t1.lo_hi, &t2.lo_hi)),
            (&lhs.resonant, (&t1.resonant, &t2.resonant)),
            (&lhs.hi_lo, (&t1.hi_lo, &t2.hi_lo)),
        ] {
            let rhs = x.scale(a).add(&y.scale(b)).unwrap();
            let mut worst = 0.0f64;
            for k in spec.modes() {
                worst = worst.max((l.coeff(k) - rhs.coeff(k)).norm());
            }
            assert!(worst < 1e-12, "bilinearity defect {worst}");
        }
    }

    #[test]
    fn commutator_vanishes_for_zero_g() {
        let spec = TorusSpec::with_dealiased_grid(2, 8).unwrap();
        let part = DyadicPartition::for_spec(&spec);
        let f = random_real_field(spec, 13);
        let z = FourierField::zeros(spec);
        let h = random_real_field(spec, 14);
        assert_eq!(commutator_c(&f, &z, &h, &part).unwrap().l2_norm(), 0.0);
        assert_eq!(commutator_cn(&f, &z, &h, 1, &part).unwrap().l2_norm(), 0.0);
    }

    #[test]
    fn commutator_constant_f_explicit() {
        // C(c,g,h) = (c≺g)∘h − c·(g∘h), both sides via tested primitives
        let spec = TorusSpec::with_dealiased_grid(2, 10).unwrap();
        let part = DyadicPartition::for_spec(&spec);
        let c = FourierField::constant(spec, Complex64::new(2.0, 0.0));
        let g = random_real_field(spec, 15);
        let h = random_real_field(spec, 16);
        let direct = commutator_c(&c, &g, &h, &part).unwrap();
        let cg = para_lo_hi(&c, &g, &part).unwrap();
        let lhs = resonant(&cg, &h, &part).unwrap();
        let rhs = c.product(&resonant(&g, &h, &part).unwrap()).unwrap();
        let expected = lhs.sub(&rhs).unwrap();
        assert!(direct.sub(&expected).unwrap().l2_norm() < 1e-13);
    }

    #[test]
    fn cutoff_commutator_difference_identity() {
        // C − C_N = (Δ_{≤N}(f≺g))∘h
        let spec = TorusSpec::with_dealiased_grid(2, 12).unwrap();
        let part = DyadicPartition::for_spec(&spec);
        let f = random_real_field(spec, 17);
        let g = random_real_field(spec, 18);
        let h = random_real_field(spec, 19);
        let n = 0u32;
        let c = commutator_c(&f, &g, &h, &part).unwrap();
        let cn = commutator_cn(&f, &g, &h, n, &part).unwrap();
        let diff = c.sub(&cn).unwrap();
        let low = freq_cutoff(&para_lo_hi(&f, &g, &part).unwrap(), n, CutoffSide::Below);
        let expected = resonant(&low, &h, &part).unwrap();
        let err = diff.sub(&expected).unwrap().l2_norm() / c.l2_norm().max(1e-300);
        assert!(err < 1e-12, "difference identity defect {err}");
    }

    #[test]
    fn cutoff_commutator_empty_band() {
        // 2^N beyond the lattice: Δ_{>N}(f≺g) = 0, so C_N = −f(g∘h)
        let spec = TorusSpec::with_dealiased_grid(2, 8).unwrap();
        let part = DyadicPartition::for_spec(&spec);
        let f = random_real_field(spec, 20);
        let g = random_real_field(spec, 21);
        let h = random_real_field(spec, 22);
        let cn = commutator_cn(&f, &g, &h, 5, &part).unwrap();
        let expected = f
            .product(&resonant(&g, &h, &part).unwrap())
            .unwrap()
            .scale(Complex64::new(-1.0, 0.0));
        assert!(cn.sub(&expected).unwrap().l2_norm() < 1e-13);
    }

    #[test]
    fn adjoint_defect_zero_h() {
        let spec = TorusSpec::with_dealiased_grid(2, 8).unwrap();
        let part = DyadicPartition::for_spec(&spec);
        let f = random_real_field(spec, 23);
        let g = random_real_field(spec, 24);
        let z = FourierField::zeros(spec);
        assert_eq!(adjoint_defect_d(&f, &g, &z, &part).unwrap(), Complex64::ZERO);
    }

    #[test]
    fn adjoint_defect_single_modes_frequency_bookkeeping() {
        // modes with k1 + k2 + k3 ≠ 0 pair to zero in both terms
        let spec = TorusSpec::with_dealiased_grid(2, 8).unwrap();
        let part = DyadicPartition::for_spec(&spec);
        let one = Complex64::new(1.0, 0.0);
        let f = FourierField::single_mode(spec, [1, 0, 0], one).unwrap();
        let g = FourierField::single_mode(spec, [2, 1, 0], one).unwrap();
        let h = FourierField::single_mode(spec, [3, -2, 0], one).unwrap();
        let d = adjoint_defect_d(&f, &g, &h, &part).unwrap();
        assert!(d.norm() < 1e-15);
    }

    #[test]
    fn adjoint_defect_matches_block_sum_oracle() {
        let spec = TorusSpec::with_dealiased_grid(2, 16).unwrap();
        let part = DyadicPartition::for_spec(&spec);
        for seed in 0..5u64 {
            let f = random_real_field(spec, 100 + seed);
            let g = random_real_field(spec, 200 + seed);
            let h = random_real_field(spec, 300 + seed);
            let d = adjoint_defect_d(&f, &g, &h, &part).unwrap();
            let oracle = adjoint_defect_block_sum(&f, &g, &h, D_ORACLE_WINDOW, &part).unwrap();
            let scale = f.l2_norm() * g.l2_norm() * h.l2_norm();
            assert!(
                (d - oracle).norm() / scale < 1e-12,
                "oracle mismatch {} at seed {seed}",
                (d - oracle).norm() / scale
            );
            // window stability: any larger window gives the same value
            let oracle6 = adjoint_defect_block_sum(&f, &g, &h, D_ORACLE_WINDOW + 1, &part).unwrap();
            assert!((oracle - oracle6).norm() / scale < 1e-13);
        }
    }

    #[test]
    fn nearest_neighbour_window_is_insufficient() {
        // With window 1 the second sum is empty and the formula misses the
        // i ≤ k-2, |j-k| ∈ (1, 5] interactions; the full window is required.
        let spec = TorusSpec::with_dealiased_grid(2, 16).unwrap();
        let part = DyadicPartition::for_spec(&spec);
        let f = random_real_field(spec, 400);
        let g = random_real_field(spec, 401);
        let h = random_real_field(spec, 402);
        let d = adjoint_defect_d(&f, &g, &h, &part).unwrap();
        let oracle1 = adjoint_defect_block_sum(&f, &g, &h, 1, &part).unwrap();
        let scale = f.l2_norm() * g.l2_norm() * h.l2_norm();
        assert!(
            (d - oracle1).norm() / scale > 1e-8,
            "window-1 oracle unexpectedly matches"
        );
    }

    #[test]
    fn para_resolvent_zero_g() {
        let spec = TorusSpec::with_dealiased_grid(2, 8).unwrap();
        let part = DyadicPartition::for_spec(&spec);
        let f = random_real_field(spec, 30);
        let z = FourierField::zeros(spec);
        assert_eq!(para_resolvent_r(&f, &z, &part).unwrap().l2_norm(), 0.0);
    }

    #[test]
    fn para_resolvent_constant_f() {
        let spec = TorusSpec::with_dealiased_grid(2, 10).unwrap();
        let part = DyadicPartition::for_spec(&spec);
        let c = FourierField::constant(spec, Complex64::new(1.5, 0.0));
        let g = random_real_field(spec, 31);
        let r = para_resolvent_r(&c, &g, &part).unwrap();
        let expected = para_lo_hi(&c, &g, &part)
            .unwrap()
            .bessel_inv()
            .sub(&para_lo_hi(&c, &g.bessel_inv(), &part).unwrap())
            .unwrap();
        assert!(r.sub(&expected).unwrap().l2_norm() < 1e-14);
    }

    #[test]
    fn paralinearize_identity_function() {
        // F = id: F' = 1, remainder = f − 1≺f = Δ_{-1}f + Δ_0 f
        let spec = TorusSpec::with_dealiased_grid(2, 12).unwrap();
        let part = DyadicPartition::for_spec(&spec);
        let f = random_real_field(spec, 32);
        let (_para, rem) = paralinearize(|x| x, |_| 1.0, &f, &part).unwrap();
        let expected = lp_block(&f, -1, &part)
            .unwrap()
            .add(&lp_block(&f, 0, &part).unwrap())
            .unwrap();
        let err = rem.sub(&expected).unwrap().l2_norm() / f.l2_norm();
        assert!(err < 1e-12, "identity paralinearization defect {err}");
    }

    #[test]
    fn paralinearize_constant_function() {
        let spec = TorusSpec::with_dealiased_grid(2, 8).unwrap();
        let part = DyadicPartition::for_spec(&spec);
        let f = random_real_field(spec, 33);
        let (para, rem) = paralinearize(|_| 2.5, |_| 0.0, &f, &part).unwrap();
        assert_eq!(para.l2_norm(), 0.0);
        assert_relative_eq!(rem.coeff([0, 0, 0]).re, 2.5, max_relative = 1e-12);
    }

    #[test]
    fn paralinearize_rejects_non_finite() {
        let spec = TorusSpec::with_dealiased_grid(2, 8).unwrap();
        let part = DyadicPartition::for_spec(&spec);
        let f = random_real_field(spec, 34);
        assert!(paralinearize(|x| 1.0 / (x - x), |_| 0.0, &f, &part).is_err());
    }

    #[test]
    fn fixed_factor_matches_free_functions() {
        let spec = TorusSpec::with_dealiased_grid(2, 10).unwrap();
        let part = DyadicPartition::for_spec(&spec);
        let phi = random_real_field(spec, 40);
        let v = random_real_field(spec, 41);
        let fixed = FixedFactor::new(phi.clone(), &part);
        let a = fixed.lo_hi_from(&v, &part);
        let b = para_lo_hi(&v, &phi, &part).unwrap();
        assert!(a.sub(&b).unwrap().l2_norm() < 1e-13);
        let c = fixed.lo_hi_into(&v, &part);
        let d = para_lo_hi(&phi, &v, &part).unwrap();
        assert!(c.sub(&d).unwrap().l2_norm() < 1e-13);
        let e = fixed.resonant_with(&v, &part);
        let f = resonant(&v, &phi, &part).unwrap();
        assert!(e.sub(&f).unwrap().l2_norm() < 1e-13);
    }

    #[test]
    fn fixed_factor_adjoints_pair_correctly() {
        // ⟨T v, w⟩ = ⟨v, T† w⟩ for each primitive
        let spec = TorusSpec::with_dealiased_grid(2, 10).unwrap();
        let part = DyadicPartition::for_spec(&spec);
        let phi = random_real_field(spec, 50);
        let v = random_real_field(spec, 51);
        let w = random_real_field(spec, 52);
        let fixed = FixedFactor::new(phi, &part);

        let lhs = fixed.lo_hi_from(&v, &part).inner(&w);
        let rhs = v.inner(&fixed.lo_hi_from_adjoint(&w, &part));
        assert!((lhs - rhs).norm() / lhs.norm().max(1e-300) < 1e-11, "lo_hi_from adjoint");

        let lhs = fixed.lo_hi_into(&v, &part).inner(&w);
        let rhs = v.inner(&fixed.lo_hi_into_adjoint(&w, &part));
        assert!((lhs - rhs).norm() / lhs.norm().max(1e-300) < 1e-11, "lo_hi_into adjoint");

        let lhs = fixed.resonant_with(&v, &part).inner(&w);
        let rhs = v.inner(&fixed.resonant_adjoint(&w, &part));
        assert!((lhs - rhs).norm() / lhs.norm().max(1e-300) < 1e-11, "resonant adjoint");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(6))]
        #[test]
        fn prop_decomposition_exact(seed in 0u64..500) {
            let spec = TorusSpec::with_dealiased_grid(2, 8).unwrap();
            let part = DyadicPartition::for_spec(&spec);
            let f = random_real_field(spec, seed);
            let g = random_real_field(spec, seed.wrapping_add(7919));
            let triple = paraproduct(&f, &g, &part).unwrap();
            let direct = f.product(&g).unwrap();
            let err = triple.total().sub(&direct).unwrap().l2_norm()
                / direct.l2_norm().max(1e-300);
            prop_assert!(err < 1e-10);
        }
    }
}
