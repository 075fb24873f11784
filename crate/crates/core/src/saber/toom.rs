//! Striding Toom-Cook-4.
//!
//! A polynomial is split by stride, `A(x) = Σ_i x^i · A_i(y)` with `y = x^4`,
//! so each limb lives in `Z[y] / (y^64 + 1)`. The degree-3 polynomial in `x`
//! is evaluated at `{0, 1, −1, 2, −2, 3, ∞}`, the seven 64-coefficient slots
//! are multiplied negacyclically, and interpolation recovers the degree-6
//! product. All slot arithmetic is mod `2^16`; the three guard bits above
//! `q = 2^13` make the final division by 8 an exact shift.

use super::meter::MemoryMeter;
use super::poly::PolyRq;
use super::{SaberError, N, Q};

pub const POINTS: usize = 7;
pub const LIMB: usize = N / 4;
/// Coefficient products in one 64×64 slot product.
pub const SLOT_MULTS: u64 = (LIMB * LIMB) as u64;

pub type Limbs = [[u16; LIMB]; 4];

/// Seven evaluation slots of 64 words each.
#[derive(Clone, PartialEq, Eq)]
pub struct PolyEval {
    slots: [[u16; LIMB]; POINTS],
}

impl std::fmt::Debug for PolyEval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list()
            .entries(self.slots.iter().map(|s| &s[..4]))
            .finish()
    }
}

impl Default for PolyEval {
    fn default() -> Self {
        Self::zero()
    }
}

impl PolyEval {
    pub const WORDS: usize = POINTS * LIMB;

    pub fn zero() -> Self {
        Self {
            slots: [[0; LIMB]; POINTS],
        }
    }

    pub fn from_slots(slots: [[u16; LIMB]; POINTS]) -> Self {
        Self { slots }
    }

    pub fn slot(&self, p: usize) -> &[u16; LIMB] {
        &self.slots[p]
    }

    pub fn slots(&self) -> &[[u16; LIMB]; POINTS] {
        &self.slots
    }
}

pub fn striding_split(a: &PolyRq) -> Limbs {
    let c = a.coeffs();
    let mut limbs = [[0u16; LIMB]; 4];
    for (t, quad) in c.chunks_exact(4).enumerate() {
        for i in 0..4 {
            limbs[i][t] = quad[i];
        }
    }
    limbs
}

/// Inverse of [`striding_split`], reducing mod `2^13`.
pub fn striding_join(limbs: &Limbs) -> PolyRq {
    let mut c = [0u16; N];
    for t in 0..LIMB {
        for i in 0..4 {
            c[4 * t + i] = limbs[i][t];
        }
    }
    PolyRq::from_coeffs(c)
}

/// Evaluates `l0 + l1·x + l2·x² + l3·x³` at the seven points.
#[inline]
fn eval_quad(l: [u16; 4]) -> [u16; POINTS] {
    let [l0, l1, l2, l3] = l;
    let even = l0.wrapping_add(l2);
    let odd = l1.wrapping_add(l3);
    // at ±2: l0 + 4 l2 ± (2 l1 + 8 l3)
    let even2 = l0.wrapping_add(l2 << 2);
    let odd2 = (l1 << 1).wrapping_add(l3 << 3);
    let at3 = l0
        .wrapping_add(l1.wrapping_mul(3))
        .wrapping_add(l2.wrapping_mul(9))
        .wrapping_add(l3.wrapping_mul(27));
    [
        l0,
        even.wrapping_add(odd),
        even.wrapping_sub(odd),
        even2.wrapping_add(odd2),
        even2.wrapping_sub(odd2),
        at3,
        l3,
    ]
}

#[inline]
pub(crate) fn eval_coeff_quad(a: &PolyRq, t: usize) -> [u16; POINTS] {
    let c = a.coeffs();
    eval_quad([c[4 * t], c[4 * t + 1], c[4 * t + 2], c[4 * t + 3]])
}

pub fn toom4_evaluate(limbs: &Limbs) -> PolyEval {
    let mut out = PolyEval::zero();
    for t in 0..LIMB {
        let e = eval_quad([limbs[0][t], limbs[1][t], limbs[2][t], limbs[3][t]]);
        for p in 0..POINTS {
            out.slots[p][t] = e[p];
        }
    }
    out
}

fn negacyclic64(a: &[u16; LIMB], b: &[u16; LIMB]) -> [u16; LIMB] {
    let mut c = [0u16; LIMB];
    for i in 0..LIMB {
        for j in 0..LIMB {
            let prod = a[i].wrapping_mul(b[j]);
            if i + j < LIMB {
                c[i + j] = c[i + j].wrapping_add(prod);
            } else {
                c[i + j - LIMB] = c[i + j - LIMB].wrapping_sub(prod);
            }
        }
    }
    c
}

/// Slot-wise negacyclic product mod `2^16`.
pub fn eval_pointwise_mul(ea: &PolyEval, eb: &PolyEval, meter: &MemoryMeter) -> PolyEval {
    let mut out = PolyEval::zero();
    for p in 0..POINTS {
        out.slots[p] = negacyclic64(&ea.slots[p], &eb.slots[p]);
    }
    meter.count_pointwise(POINTS as u64, SLOT_MULTS);
    out
}

/// Slot-wise addition mod `2^16`.
pub fn eval_accumulate(acc: &mut PolyEval, prod: &PolyEval) {
    for (a, b) in acc.slots.iter_mut().zip(&prod.slots) {
        for (x, &y) in a.iter_mut().zip(b) {
            *x = x.wrapping_add(y);
        }
    }
}

/// `acc += A(x)·B(x)` in evaluation form without materialising either
/// operand's evaluation: each 4-coefficient group is evaluated on the fly.
pub(crate) fn fused_mac(acc: &mut PolyEval, a: &PolyRq, b: &PolyRq, meter: &MemoryMeter) {
    let _tmp = meter.alloc(2 * POINTS);
    for u in 0..LIMB {
        let ea = eval_coeff_quad(a, u);
        for v in 0..LIMB {
            let eb = eval_coeff_quad(b, v);
            let (t, neg) = if u + v < LIMB { (u + v, false) } else { (u + v - LIMB, true) };
            for p in 0..POINTS {
                let prod = ea[p].wrapping_mul(eb[p]);
                let slot = &mut acc.slots[p][t];
                *slot = if neg { slot.wrapping_sub(prod) } else { slot.wrapping_add(prod) };
            }
        }
    }
    meter.count_pointwise(POINTS as u64, SLOT_MULTS);
}

// Rows: c0..c5; columns: points 0, 1, −1, 2, −2, 3. M·V = 120·I where
// V[p][k] = p^k, once the c6·p^6 term is removed from each value.
const INTERP: [[i16; 6]; 6] = [
    [120, 0, 0, 0, 0, 0],
    [-40, 120, -60, -30, 6, 4],
    [-150, 80, 80, -5, -5, 0],
    [50, -70, -5, 35, -5, -5],
    [30, -20, -20, 5, 5, 0],
    [-10, 10, 5, -5, -1, 1],
];
const POW6: [u16; 6] = [0, 1, 1, 64, 64, 729];
/// 15⁻¹ mod 2^13.
const INV15: u16 = 0x0EEF;

/// Recovers `c_0..c_6` (mod `2^13`) at one limb position.
#[inline]
fn interpolate_position(w: &[u16; POINTS], t: usize) -> Result<[u16; POINTS], SaberError> {
    let c6 = w[6];
    let mut wp = [0u16; 6];
    for p in 0..6 {
        wp[p] = w[p].wrapping_sub(POW6[p].wrapping_mul(c6));
    }
    let mut c = [0u16; POINTS];
    for k in 0..6 {
        let mut s = 0u16;
        for p in 0..6 {
            s = s.wrapping_add((INTERP[k][p] as u16).wrapping_mul(wp[p]));
        }
        if s & 7 != 0 {
            return Err(SaberError::InterpolationOverflow { limb: k, index: t });
        }
        c[k] = (s >> 3).wrapping_mul(INV15) & (Q - 1);
    }
    c[6] = c6 & (Q - 1);
    Ok(c)
}

/// Interpolates the seven slots back to a ring element, folding `x^256 = −1`.
pub fn toom4_interpolate(acc: &PolyEval, meter: &MemoryMeter) -> Result<PolyRq, SaberError> {
    let _tmp = meter.alloc(2 * POINTS);
    let mut out = PolyRq::zero();
    let oc = out.coeffs_mut();
    for t in 0..LIMB {
        let w: [u16; POINTS] = core::array::from_fn(|p| acc.slots[p][t]);
        let c = interpolate_position(&w, t)?;
        for (k, &ck) in c.iter().enumerate() {
            let n = 4 * t + k;
            if n < N {
                oc[n] = oc[n].wrapping_add(ck) & (Q - 1);
            } else {
                oc[n - N] = oc[n - N].wrapping_sub(ck) & (Q - 1);
            }
        }
    }
    meter.count_interpolation();
    Ok(out)
}

/// Full pipeline: split, evaluate, multiply, interpolate.
pub fn toom4_mul(a: &PolyRq, b: &PolyRq, meter: &MemoryMeter) -> Result<PolyRq, SaberError> {
    let _buf = meter.alloc(3 * PolyEval::WORDS);
    let ea = toom4_evaluate(&striding_split(a));
    let eb = toom4_evaluate(&striding_split(b));
    let prod = eval_pointwise_mul(&ea, &eb, meter);
    toom4_interpolate(&prod, meter)
}
