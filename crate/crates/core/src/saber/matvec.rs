//! Matrix-vector and inner products over `R_q^l`.
//!
//! The lazy variants keep one evaluation-domain accumulator per output,
//! stream every product into it and interpolate once. The eager variant
//! interpolates after each product, which is the baseline for the meter.

use super::meter::MemoryMeter;
use super::poly::PolyRq;
use super::toom::{fused_mac, toom4_interpolate, toom4_mul, PolyEval};
use super::{SaberError, L, N};

pub type PolyVec = [PolyRq; L];
pub type PolyMatrix = [[PolyRq; L]; L];

fn lazy_dot<'a>(
    pairs: impl Iterator<Item = (&'a PolyRq, &'a PolyRq)>,
    meter: &MemoryMeter,
) -> Result<PolyRq, SaberError> {
    let _acc_words = meter.alloc(PolyEval::WORDS);
    let mut acc = PolyEval::zero();
    for (a, b) in pairs {
        fused_mac(&mut acc, a, b, meter);
    }
    toom4_interpolate(&acc, meter)
}

/// `A·s`, or `Aᵀ·s` when `transpose` is set. Exactly `l` interpolations.
pub fn matvec_mul_lazy(
    a: &PolyMatrix,
    s: &PolyVec,
    transpose: bool,
    meter: &MemoryMeter,
) -> Result<PolyVec, SaberError> {
    let mut out: PolyVec = Default::default();
    for (i, row) in out.iter_mut().enumerate() {
        *row = if transpose {
            lazy_dot((0..L).map(|j| (&a[j][i], &s[j])), meter)?
        } else {
            lazy_dot(a[i].iter().zip(s.iter()), meter)?
        };
    }
    Ok(out)
}

/// Same result as [`matvec_mul_lazy`], interpolating every product (`l²` times).
pub fn matvec_mul_eager(
    a: &PolyMatrix,
    s: &PolyVec,
    transpose: bool,
    meter: &MemoryMeter,
) -> Result<PolyVec, SaberError> {
    let mut out: PolyVec = Default::default();
    for (i, row) in out.iter_mut().enumerate() {
        for j in 0..L {
            let aij = if transpose { &a[j][i] } else { &a[i][j] };
            let _prod_words = meter.alloc(N);
            let prod = toom4_mul(aij, &s[j], meter)?;
            *row = row.add(&prod);
        }
    }
    Ok(out)
}

/// `Σ_j b_j·s_j` with a single interpolation.
pub fn inner_product_lazy(
    b: &PolyVec,
    s: &PolyVec,
    meter: &MemoryMeter,
) -> Result<PolyRq, SaberError> {
    lazy_dot(b.iter().zip(s.iter()), meter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::saber::poly::poly_mul_schoolbook;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_system(seed: u64) -> (PolyMatrix, PolyVec) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = core::array::from_fn(|_| core::array::from_fn(|_| PolyRq::random(&mut rng)));
        let s = core::array::from_fn(|_| PolyRq::random(&mut rng));
        (a, s)
    }

    fn oracle(a: &PolyMatrix, s: &PolyVec, transpose: bool) -> PolyVec {
        core::array::from_fn(|i| {
            (0..L).fold(PolyRq::zero(), |acc, j| {
                let aij = if transpose { &a[j][i] } else { &a[i][j] };
                acc.add(&poly_mul_schoolbook(aij, &s[j]))
            })
        })
    }

    #[test]
    fn identity_matrix() {
        let (_, s) = random_system(1);
        let id: PolyMatrix = core::array::from_fn(|i| {
            core::array::from_fn(|j| if i == j { PolyRq::one() } else { PolyRq::zero() })
        });
        let m = MemoryMeter::new();
        assert_eq!(matvec_mul_lazy(&id, &s, false, &m).unwrap(), s);
    }

    #[test]
    fn both_variants_match_oracle() {
        let (a, s) = random_system(2);
        for transpose in [false, true] {
            let want = oracle(&a, &s, transpose);
            let lazy = MemoryMeter::new();
            let eager = MemoryMeter::new();
            assert_eq!(matvec_mul_lazy(&a, &s, transpose, &lazy).unwrap(), want);
            assert_eq!(matvec_mul_eager(&a, &s, transpose, &eager).unwrap(), want);
            assert_eq!(lazy.interpolations(), 3);
            assert_eq!(eager.interpolations(), 9);
            assert_eq!(lazy.multiplications(), eager.multiplications());
            assert!(2 * lazy.peak() <= eager.peak(), "{} vs {}", lazy.peak(), eager.peak());
            assert_eq!(lazy.current(), 0);
        }
    }

    #[test]
    fn inner_product_interpolates_once() {
        let (a, s) = random_system(3);
        let m = MemoryMeter::new();
        let got = inner_product_lazy(&a[0], &s, &m).unwrap();
        assert_eq!(got, oracle(&a, &s, false)[0]);
        assert_eq!(m.interpolations(), 1);
    }
}
