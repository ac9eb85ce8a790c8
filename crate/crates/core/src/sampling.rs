//! Seeded random fields. Samples are smooth: short cosine series with
//! decaying amplitudes, so their gradients stay resolved on the grid.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::grid::{Grid, StateField};
use crate::scalar::Real;

/// Highest cosine wavenumber per axis used by [`smooth_scalar`].
pub const MAX_MODE: usize = 8;
const TERMS: usize = 10;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Child seed for stream `index` of `seed`, so members are reproducible
/// independently of each other.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random cosine series `Σ cⱼ Π_a cos(kⱼₐ π xₐ / Lₐ)` with `|cⱼ| ≲ 1/(1+|kⱼ|)`.
pub fn smooth_scalar<S: Real>(grid: &Grid<S>, rng: &mut impl Rng) -> Vec<S> {
    let dim = grid.dim();
    let mut out = vec![S::zero(); grid.len()];
    for _ in 0..TERMS {
        let mut k = [0usize; 3];
        for ka in k.iter_mut().take(dim) {
            *ka = rng.gen_range(0..=MAX_MODE);
        }
        let size: usize = k.iter().sum();
        let amp = S::lit(rng.gen_range(-1.0..1.0) / (1.0 + size as f64));
        for (idx, o) in out.iter_mut().enumerate() {
            let mut prod = S::one();
            for (a, &ka) in k.iter().enumerate().take(dim) {
                let j = grid.axis_index(idx, a);
                prod *= (S::PI() * S::of(ka) * S::of(j) / S::of(grid.cells()[a])).cos();
            }
            *o += amp * prod;
        }
    }
    out
}

/// Random smooth state with `‖g‖ = 1`.
pub fn unit_direction<S: Real>(grid: &Grid<S>, rng: &mut impl Rng) -> StateField<S> {
    loop {
        let g = StateField {
            u: smooth_scalar(grid, rng),
            v: smooth_scalar(grid, rng),
            w: smooth_scalar(grid, rng),
        };
        let n = g.norm_h(grid);
        if n > S::lit(1e-8) {
            return g.scaled(n.recip());
        }
    }
}

/// Random smooth state with `‖g‖² = radius_sq` exactly (up to rounding).
pub fn on_sphere<S: Real>(grid: &Grid<S>, radius_sq: S, rng: &mut impl Rng) -> StateField<S> {
    unit_direction(grid, rng).scaled(radius_sq.sqrt())
}

/// Random smooth state with `‖g‖²_E = radius_sq`.
pub fn on_sphere_e<S: Real>(grid: &Grid<S>, radius_sq: S, rng: &mut impl Rng) -> StateField<S> {
    let g = unit_direction(grid, rng);
    let n = g.norm_e_sq(grid);
    g.scaled((radius_sq / n).sqrt())
}
