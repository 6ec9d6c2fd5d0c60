//! Negacyclic number theoretic transform over `Z_q[X]/(X^N + 1)`.
//!
//! The twist by powers of a primitive `2N`-th root `psi` is merged into the
//! butterflies (Cooley-Tukey forward, Gentleman-Sande inverse), so the forward
//! transform consumes coefficients in natural order and produces evaluations
//! in bit-reversed order. Pointwise products in that domain correspond to
//! negacyclic convolution.

use crate::arith::{add_mod, inv_mod, mul_mod, mul_shoup, pow_mod, primitive_root_2n, shoup, sub_mod};

#[derive(Debug, Clone)]
pub struct NttTable {
    pub modulus: u64,
    n: usize,
    psi_rev: Vec<u64>,
    psi_rev_shoup: Vec<u64>,
    psi_inv_rev: Vec<u64>,
    psi_inv_rev_shoup: Vec<u64>,
    n_inv: u64,
    n_inv_shoup: u64,
}

fn bit_reverse(x: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        x.reverse_bits() >> (usize::BITS - bits)
    }
}

impl NttTable {
    pub fn new(n: usize, q: u64) -> Self {
        assert!(n.is_power_of_two() && n >= 2, "ring dimension must be a power of two");
        let log_n = n.trailing_zeros();
        let psi = primitive_root_2n(n, q);
        let psi_inv = inv_mod(psi, q);
        let mut psi_rev = vec![0u64; n];
        let mut psi_inv_rev = vec![0u64; n];
        for i in 0..n {
            let r = bit_reverse(i, log_n) as u64;
            psi_rev[i] = pow_mod(psi, r, q);
            psi_inv_rev[i] = pow_mod(psi_inv, r, q);
        }
        let psi_rev_shoup = psi_rev.iter().map(|&w| shoup(w, q)).collect();
        let psi_inv_rev_shoup = psi_inv_rev.iter().map(|&w| shoup(w, q)).collect();
        let n_inv = inv_mod(n as u64, q);
        Self {
            modulus: q,
            n,
            psi_rev,
            psi_rev_shoup,
            psi_inv_rev,
            psi_inv_rev_shoup,
            n_inv,
            n_inv_shoup: shoup(n_inv, q),
        }
    }

    pub fn forward(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let q = self.modulus;
        let mut t = self.n;
        let mut m = 1;
        while m < self.n {
            t /= 2;
            for i in 0..m {
                let j1 = 2 * i * t;
                let w = self.psi_rev[m + i];
                let ws = self.psi_rev_shoup[m + i];
                for j in j1..j1 + t {
                    let u = a[j];
                    let v = mul_shoup(a[j + t], w, ws, q);
                    a[j] = add_mod(u, v, q);
                    a[j + t] = sub_mod(u, v, q);
                }
            }
            m *= 2;
        }
    }

    pub fn inverse(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let q = self.modulus;
        let mut t = 1;
        let mut m = self.n;
        while m > 1 {
            let h = m / 2;
            let mut j1 = 0;
            for i in 0..h {
                let w = self.psi_inv_rev[h + i];
                let ws = self.psi_inv_rev_shoup[h + i];
                for j in j1..j1 + t {
                    let u = a[j];
                    let v = a[j + t];
                    a[j] = add_mod(u, v, q);
                    a[j + t] = mul_shoup(sub_mod(u, v, q), w, ws, q);
                }
                j1 += 2 * t;
            }
            t *= 2;
            m = h;
        }
        for x in a.iter_mut() {
            *x = mul_shoup(*x, self.n_inv, self.n_inv_shoup, q);
        }
    }

    /// Negacyclic product of two coefficient-form polynomials.
    pub fn multiply(&self, a: &[u64], b: &[u64]) -> Vec<u64> {
        let mut fa = a.to_vec();
        let mut fb = b.to_vec();
        self.forward(&mut fa);
        self.forward(&mut fb);
        for (x, y) in fa.iter_mut().zip(&fb) {
            *x = mul_mod(*x, *y, self.modulus);
        }
        self.inverse(&mut fa);
        fa
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::ntt_primes_below;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn schoolbook_negacyclic(a: &[u64], b: &[u64], q: u64) -> Vec<u64> {
        let n = a.len();
        let mut out = vec![0u64; n];
        for i in 0..n {
            for j in 0..n {
                let p = mul_mod(a[i], b[j], q);
                let k = i + j;
                if k < n {
                    out[k] = add_mod(out[k], p, q);
                } else {
                    out[k - n] = sub_mod(out[k - n], p, q);
                }
            }
        }
        out
    }

    #[test]
    fn forward_inverse_is_identity() {
        let n = 256;
        let q = ntt_primes_below(61, n, 1, &[])[0];
        let table = NttTable::new(n, q);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let orig: Vec<u64> = (0..n).map(|_| rng.random_range(0..q)).collect();
        let mut a = orig.clone();
        table.forward(&mut a);
        assert_ne!(a, orig);
        table.inverse(&mut a);
        assert_eq!(a, orig);
    }

    #[test]
    fn product_matches_schoolbook() {
        for (n, bits) in [(8usize, 30u32), (64, 52), (128, 61)] {
            let q = ntt_primes_below(bits, n, 1, &[])[0];
            let table = NttTable::new(n, q);
            let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
            let a: Vec<u64> = (0..n).map(|_| rng.random_range(0..q)).collect();
            let b: Vec<u64> = (0..n).map(|_| rng.random_range(0..q)).collect();
            assert_eq!(table.multiply(&a, &b), schoolbook_negacyclic(&a, &b, q));
        }
    }

    #[test]
    fn x_to_the_n_is_minus_one() {
        let n = 16;
        let q = ntt_primes_below(40, n, 1, &[])[0];
        let table = NttTable::new(n, q);
        // X^(n-1) * X = X^n = -1
        let mut a = vec![0u64; n];
        a[n - 1] = 1;
        let mut b = vec![0u64; n];
        b[1] = 1;
        let prod = table.multiply(&a, &b);
        let mut expected = vec![0u64; n];
        expected[0] = q - 1;
        assert_eq!(prod, expected);
    }
}
