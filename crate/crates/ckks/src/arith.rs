//! Word-sized modular arithmetic for NTT-friendly primes below 2^62.

#[inline]
pub fn mul_mod(a: u64, b: u64, q: u64) -> u64 {
    ((a as u128 * b as u128) % q as u128) as u64
}

#[inline]
pub fn add_mod(a: u64, b: u64, q: u64) -> u64 {
    let s = a + b;
    if s >= q {
        s - q
    } else {
        s
    }
}

#[inline]
pub fn sub_mod(a: u64, b: u64, q: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        a + q - b
    }
}

pub fn pow_mod(mut base: u64, mut exp: u64, q: u64) -> u64 {
    let mut acc = 1u64 % q;
    base %= q;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, q);
        }
        base = mul_mod(base, base, q);
        exp >>= 1;
    }
    acc
}

/// Inverse modulo a prime via Fermat.
pub fn inv_mod(a: u64, q: u64) -> u64 {
    pow_mod(a, q - 2, q)
}

/// Maps a signed integer into `[0, q)`.
#[inline]
pub fn from_signed(x: i128, q: u64) -> u64 {
    let r = x.rem_euclid(q as i128);
    r as u64
}

/// Centered representative in `(-q/2, q/2]`.
#[inline]
pub fn to_centered(x: u64, q: u64) -> i64 {
    if x > q / 2 {
        -((q - x) as i64)
    } else {
        x as i64
    }
}

/// Precomputed Shoup quotient for repeated multiplication by a fixed `w`.
#[inline]
pub fn shoup(w: u64, q: u64) -> u64 {
    (((w as u128) << 64) / q as u128) as u64
}

#[inline]
pub fn mul_shoup(a: u64, w: u64, w_shoup: u64, q: u64) -> u64 {
    let hi = ((a as u128 * w_shoup as u128) >> 64) as u64;
    let r = a.wrapping_mul(w).wrapping_sub(hi.wrapping_mul(q));
    if r >= q {
        r - q
    } else {
        r
    }
}

/// Deterministic Miller-Rabin for 64-bit integers.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &p in &WITNESSES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &WITNESSES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Finds `count` distinct primes `p ≡ 1 (mod 2n)` strictly below `2^bits`,
/// scanning downward and skipping anything in `exclude`.
pub fn ntt_primes_below(bits: u32, ring_dim: usize, count: usize, exclude: &[u64]) -> Vec<u64> {
    let step = 2 * ring_dim as u64;
    let top = 1u64 << bits;
    let mut candidate = (top - 1) / step * step + 1;
    let mut found = Vec::with_capacity(count);
    while found.len() < count && candidate > step {
        if !exclude.contains(&candidate) && is_prime(candidate) {
            found.push(candidate);
        }
        candidate -= step;
    }
    found
}

/// A primitive `2n`-th root of unity modulo `q`, where `2n | q - 1`.
pub fn primitive_root_2n(ring_dim: usize, q: u64) -> u64 {
    let order = 2 * ring_dim as u64;
    let cofactor = (q - 1) / order;
    for g in 2..q {
        let psi = pow_mod(g, cofactor, q);
        // psi has order exactly 2n iff psi^n = -1.
        if pow_mod(psi, ring_dim as u64, q) == q - 1 {
            return psi;
        }
    }
    unreachable!("q is not NTT-friendly for this ring dimension")
}
