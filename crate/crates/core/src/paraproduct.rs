//! Bony decomposition `fg = f≺g + f⊙g + f≻g`, the commutator
//! `R(f,g,h) = (f≺g)⊙h − f(g⊙h)` and a brute-force spectral oracle for `⊙`.
//!
//! Block products are taken pointwise in physical space at native
//! resolution, so the three pieces sum to the grid product exactly.

use crate::besov::{BlockDecomposition, DyadicPartition};
use crate::error::{Error, Result};
use crate::grid::{inverse, transform, Field, SpectralField, C64};

#[derive(Clone, Debug)]
pub struct BonyTriple {
    /// `f≺g = Σ_m S_{m−2}f · Δ_m g`
    pub lt: Field,
    /// `f⊙g = Σ_{|i−j|≤1} Δ_i f · Δ_j g`
    pub res: Field,
    /// `f≻g = g≺f`
    pub gt: Field,
}

impl BonyTriple {
    pub fn total(&self) -> Field {
        let mut t = &self.lt + &self.res;
        t += &self.gt;
        t
    }

    /// `f(≺+≻)g`
    pub fn non_resonant(&self) -> Field {
        &self.lt + &self.gt
    }
}

fn accumulate_product(acc: &mut Field, a: &Field, b: &Field) {
    for ((s, &x), &y) in acc.values_mut().iter_mut().zip(a.values()).zip(b.values()) {
        *s += x * y;
    }
}

/// `f≺g` from precomputed blocks.
pub fn para_lt(f: &BlockDecomposition, g: &BlockDecomposition) -> Field {
    let grid = f.grid();
    let mut acc = Field::zeros(grid);
    let mut low = Field::zeros(grid);
    let fb = f.blocks();
    let gb = g.blocks();
    // index i ↔ block m = i − 1; S_{m−2} collects f-blocks with index ≤ i − 2
    for i in 2..gb.len() {
        low += &fb[i - 2];
        accumulate_product(&mut acc, &low, &gb[i]);
    }
    acc
}

/// `f⊙g` from precomputed blocks.
pub fn resonant(f: &BlockDecomposition, g: &BlockDecomposition) -> Field {
    let grid = f.grid();
    let mut acc = Field::zeros(grid);
    let fb = f.blocks();
    let gb = g.blocks();
    let nb = fb.len();
    let mut near = Field::zeros(grid);
    for (i, fi) in fb.iter().enumerate() {
        near.values_mut().fill(C64::new(0.0, 0.0));
        for gj in &gb[i.saturating_sub(1)..=(i + 1).min(nb - 1)] {
            near += gj;
        }
        accumulate_product(&mut acc, fi, &near);
    }
    acc
}

pub fn bony_from_blocks(f: &BlockDecomposition, g: &BlockDecomposition) -> BonyTriple {
    BonyTriple {
        lt: para_lt(f, g),
        res: resonant(f, g),
        gt: para_lt(g, f),
    }
}

pub fn bony_decompose(f: &Field, g: &Field, p: &DyadicPartition) -> Result<BonyTriple> {
    f.same_grid(g)?;
    f.same_grid(&Field::zeros(p.grid()))?;
    let bf = BlockDecomposition::new(f, p);
    let bg = BlockDecomposition::new(g, p);
    Ok(bony_from_blocks(&bf, &bg))
}

/// `R(f,g,h) = (f≺g)⊙h − f·(g⊙h)`.
pub fn commutator_r(f: &Field, g: &Field, h: &Field, p: &DyadicPartition) -> Result<Field> {
    f.same_grid(g)?;
    f.same_grid(h)?;
    f.same_grid(&Field::zeros(p.grid()))?;
    let bf = BlockDecomposition::new(f, p);
    let bg = BlockDecomposition::new(g, p);
    let bh = BlockDecomposition::new(h, p);
    Ok(commutator_from_blocks(f, &bf, &bg, &bh, p))
}

/// Commutator with the blocks of `f`, `g`, `h` already available.
pub fn commutator_from_blocks(
    f: &Field,
    bf: &BlockDecomposition,
    bg: &BlockDecomposition,
    bh: &BlockDecomposition,
    p: &DyadicPartition,
) -> Field {
    let flt = BlockDecomposition::new(&para_lt(bf, bg), p);
    let mut out = resonant(&flt, bh);
    out -= &(f * &resonant(bg, bh));
    out
}

/// Largest grid accepted by [`resonant_oracle`].
pub const ORACLE_MAX_N: usize = 16;

/// `⊙` evaluated as the spectral convolution
/// `(f⊙g)^(k) = Σ_{k₁+k₂=k} ψ∘(k₁,k₂) f̂(k₁) ĝ(k₂)` (sums taken modulo the grid).
/// Cost is O(N⁶).
pub fn resonant_oracle(f: &Field, g: &Field, p: &DyadicPartition) -> Result<Field> {
    f.same_grid(g)?;
    f.same_grid(&Field::zeros(p.grid()))?;
    let grid = f.grid();
    if grid.n() > ORACLE_MAX_N {
        return Err(Error::Resource(format!(
            "resonant oracle is O(N^6); refusing N = {} > {ORACLE_MAX_N}",
            grid.n()
        )));
    }
    let fs = transform(f);
    let gs = transform(g);
    let mut out = vec![C64::new(0.0, 0.0); grid.len()];
    for (i, &a) in fs.coeffs().iter().enumerate() {
        if a == C64::new(0.0, 0.0) {
            continue;
        }
        let k1 = grid.wavenumber(i);
        for (j, &b) in gs.coeffs().iter().enumerate() {
            if b == C64::new(0.0, 0.0) {
                continue;
            }
            let psi = p.psi_resonant_flat(i, j);
            if psi == 0.0 {
                continue;
            }
            let k2 = grid.wavenumber(j);
            let k = grid.flat_index([k1[0] + k2[0], k1[1] + k2[1], k1[2] + k2[2]]);
            out[k] += psi * a * b;
        }
    }
    Ok(inverse(&SpectralField::from_coeffs(grid, out)?))
}
