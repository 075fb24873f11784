//! Ring elements of `Z_{2^13}[x] / (x^256 + 1)`.

use rand::Rng;

use super::{N, Q};

/// 256 coefficients, each kept below `2^13`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PolyRq {
    coeffs: [u16; N],
}

impl std::fmt::Debug for PolyRq {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PolyRq{:?}", &self.coeffs[..8])?;
        f.write_str("..")
    }
}

impl Default for PolyRq {
    fn default() -> Self {
        Self::zero()
    }
}

impl PolyRq {
    pub fn zero() -> Self {
        Self { coeffs: [0; N] }
    }

    pub fn one() -> Self {
        Self::monomial(0, 1)
    }

    /// `c · x^k`.
    pub fn monomial(k: usize, c: u16) -> Self {
        let mut p = Self::zero();
        p.coeffs[k % N] = c & (Q - 1);
        p
    }

    /// Reduces every coefficient mod `2^13`.
    pub fn from_coeffs(coeffs: [u16; N]) -> Self {
        Self {
            coeffs: coeffs.map(|c| c & (Q - 1)),
        }
    }

    /// Centered small coefficients, e.g. secrets in `[−4, 4]`.
    pub fn from_signed(coeffs: &[i16; N]) -> Self {
        Self {
            coeffs: coeffs.map(|c| (c as u16) & (Q - 1)),
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut c = [0u16; N];
        for x in c.iter_mut() {
            *x = rng.random::<u16>() & (Q - 1);
        }
        Self { coeffs: c }
    }

    pub fn coeffs(&self) -> &[u16; N] {
        &self.coeffs
    }

    pub fn coeff(&self, i: usize) -> u16 {
        self.coeffs[i]
    }

    /// Coefficient `i` as a centered value in `[−2^12, 2^12)`.
    pub fn centered(&self, i: usize) -> i16 {
        let c = self.coeffs[i] as i16;
        if c >= (Q / 2) as i16 {
            c - Q as i16
        } else {
            c
        }
    }

    pub fn add(&self, other: &PolyRq) -> PolyRq {
        let mut c = [0u16; N];
        for (i, x) in c.iter_mut().enumerate() {
            *x = self.coeffs[i].wrapping_add(other.coeffs[i]) & (Q - 1);
        }
        PolyRq { coeffs: c }
    }

    pub fn sub(&self, other: &PolyRq) -> PolyRq {
        let mut c = [0u16; N];
        for (i, x) in c.iter_mut().enumerate() {
            *x = self.coeffs[i].wrapping_sub(other.coeffs[i]) & (Q - 1);
        }
        PolyRq { coeffs: c }
    }

    pub(crate) fn coeffs_mut(&mut self) -> &mut [u16; N] {
        &mut self.coeffs
    }
}

/// Negacyclic product by direct convolution; the oracle for the Toom path.
pub fn poly_mul_schoolbook(a: &PolyRq, b: &PolyRq) -> PolyRq {
    let mut acc = [0u16; N];
    for i in 0..N {
        let ai = a.coeffs[i];
        if ai == 0 {
            continue;
        }
        for j in 0..N {
            let prod = ai.wrapping_mul(b.coeffs[j]);
            let k = i + j;
            if k < N {
                acc[k] = acc[k].wrapping_add(prod);
            } else {
                acc[k - N] = acc[k - N].wrapping_sub(prod);
            }
        }
    }
    PolyRq::from_coeffs(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // c_k = Σ_{i+j=k} a_i b_j − Σ_{i+j=k+256} a_i b_j, in i64 then reduced
    fn reference(a: &PolyRq, b: &PolyRq) -> PolyRq {
        let mut c = [0u16; N];
        for (k, out) in c.iter_mut().enumerate() {
            let mut s: i64 = 0;
            for i in 0..N {
                for j in 0..N {
                    let p = i64::from(a.coeff(i)) * i64::from(b.coeff(j));
                    if i + j == k {
                        s += p;
                    } else if i + j == k + N {
                        s -= p;
                    }
                }
            }
            *out = s.rem_euclid(i64::from(Q)) as u16;
        }
        PolyRq::from_coeffs(c)
    }

    #[test]
    fn identity_and_wraparound() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = PolyRq::random(&mut rng);
        assert_eq!(poly_mul_schoolbook(&PolyRq::one(), &b), b);
        let w = poly_mul_schoolbook(&PolyRq::monomial(255, 1), &PolyRq::monomial(1, 1));
        assert_eq!(w, PolyRq::monomial(0, Q - 1));
    }

    #[test]
    fn matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..2 {
            let a = PolyRq::random(&mut rng);
            let b = PolyRq::random(&mut rng);
            assert_eq!(poly_mul_schoolbook(&a, &b), reference(&a, &b));
        }
    }

    #[test]
    fn centered_view() {
        let p = PolyRq::from_signed(&core::array::from_fn(|i| (i % 9) as i16 - 4));
        assert_eq!(p.centered(0), -4);
        assert_eq!(p.centered(8), 4);
        assert_eq!(p.coeff(0), Q - 4);
    }
}
