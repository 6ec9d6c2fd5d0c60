//! Canonical-embedding encoder for real vectors.
//!
//! Slot `j` of a plaintext polynomial `m(X)` is its evaluation at
//! `zeta^(5^j)` with `zeta = exp(i*pi/N)`; `N/2` slots are available and the
//! conjugate evaluations are implied by real coefficients. The special FFT
//! below maps between slot values and the packed coefficient layout
//! `(Re u_0..Re u_{n-1}, Im u_0..Im u_{n-1})`.

use num_complex::Complex64;
use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct Encoder {
    ring_dim: usize,
    /// `5^j mod 2N` for `j < N/2`.
    rot_group: Vec<usize>,
    /// `exp(2*pi*i*k / 2N)` for `k <= 2N`.
    ksi_pows: Vec<Complex64>,
}

fn bit_reverse_permute(vals: &mut [Complex64]) {
    let n = vals.len();
    let bits = n.trailing_zeros();
    if bits == 0 {
        return;
    }
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if i < j {
            vals.swap(i, j);
        }
    }
}

impl Encoder {
    pub fn new(ring_dim: usize) -> Self {
        let m = 2 * ring_dim;
        let slots = ring_dim / 2;
        let mut rot_group = Vec::with_capacity(slots);
        let mut five_pow = 1usize;
        for _ in 0..slots {
            rot_group.push(five_pow);
            five_pow = five_pow * 5 % m;
        }
        let ksi_pows = (0..=m)
            .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / m as f64))
            .collect();
        Self {
            ring_dim,
            rot_group,
            ksi_pows,
        }
    }

    pub fn slots(&self) -> usize {
        self.ring_dim / 2
    }

    /// Slot values -> packed coefficients (before scaling).
    fn fft_special_inv(&self, vals: &mut [Complex64]) {
        let size = vals.len();
        let m = 2 * self.ring_dim;
        let mut len = size;
        while len >= 2 {
            let lenh = len / 2;
            let lenq = len * 4;
            let gap = m / lenq;
            for i in (0..size).step_by(len) {
                for j in 0..lenh {
                    let idx = (lenq - (self.rot_group[j] % lenq)) * gap;
                    let u = vals[i + j] + vals[i + j + lenh];
                    let v = (vals[i + j] - vals[i + j + lenh]) * self.ksi_pows[idx];
                    vals[i + j] = u;
                    vals[i + j + lenh] = v;
                }
            }
            len /= 2;
        }
        bit_reverse_permute(vals);
        let inv = 1.0 / size as f64;
        for v in vals.iter_mut() {
            *v *= inv;
        }
    }

    /// Packed coefficients -> slot values.
    fn fft_special(&self, vals: &mut [Complex64]) {
        let size = vals.len();
        let m = 2 * self.ring_dim;
        bit_reverse_permute(vals);
        let mut len = 2;
        while len <= size {
            let lenh = len / 2;
            let lenq = len * 4;
            let gap = m / lenq;
            for i in (0..size).step_by(len) {
                for j in 0..lenh {
                    let idx = (self.rot_group[j] % lenq) * gap;
                    let u = vals[i + j];
                    let v = vals[i + j + lenh] * self.ksi_pows[idx];
                    vals[i + j] = u + v;
                    vals[i + j + lenh] = u - v;
                }
            }
            len *= 2;
        }
    }

    /// Encodes up to `N/2` reals into signed integer coefficients at `scale`.
    /// Missing slots are zero.
    pub fn encode(&self, values: &[f64], scale: f64) -> Vec<i64> {
        let slots = self.slots();
        assert!(values.len() <= slots, "too many values for one plaintext");
        let mut u: Vec<Complex64> = (0..slots)
            .map(|i| Complex64::new(values.get(i).copied().unwrap_or(0.0), 0.0))
            .collect();
        self.fft_special_inv(&mut u);
        let mut coeffs = vec![0i64; self.ring_dim];
        for (i, c) in u.iter().enumerate() {
            coeffs[i] = (c.re * scale).round() as i64;
            coeffs[i + slots] = (c.im * scale).round() as i64;
        }
        coeffs
    }

    /// Decodes centered coefficients back into `N/2` real slot values.
    pub fn decode(&self, coeffs: &[i64], scale: f64) -> Vec<f64> {
        let slots = self.slots();
        let mut u: Vec<Complex64> = (0..slots)
            .map(|i| Complex64::new(coeffs[i] as f64 / scale, coeffs[i + slots] as f64 / scale))
            .collect();
        self.fft_special(&mut u);
        u.into_iter().map(|c| c.re).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct evaluation of the integer polynomial at `zeta^(5^j)`.
    fn evaluate_slots(coeffs: &[i64], scale: f64) -> Vec<Complex64> {
        let n = coeffs.len();
        let m = 2 * n;
        let mut out = Vec::new();
        let mut root_exp = 1usize;
        for _ in 0..n / 2 {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, &c) in coeffs.iter().enumerate() {
                let e = (root_exp * k) % m;
                acc += Complex64::from_polar(1.0, PI * e as f64 / n as f64) * c as f64;
            }
            out.push(acc / scale);
            root_exp = root_exp * 5 % m;
        }
        out
    }

    #[test]
    fn encoded_polynomial_evaluates_to_slots() {
        let n = 64;
        let enc = Encoder::new(n);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vals: Vec<f64> = (0..n / 2).map(|_| rng.random_range(-5.0..5.0)).collect();
        let scale = 2f64.powi(40);
        let coeffs = enc.encode(&vals, scale);
        let evals = evaluate_slots(&coeffs, scale);
        for (v, e) in vals.iter().zip(&evals) {
            assert!((v - e.re).abs() < 1e-9, "{v} vs {e}");
            assert!(e.im.abs() < 1e-9);
        }
    }

    #[test]
    fn decode_inverts_encode() {
        let n = 1024;
        let enc = Encoder::new(n);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let vals: Vec<f64> = (0..300).map(|_| rng.random_range(-100.0..100.0)).collect();
        let scale = 2f64.powi(52);
        let out = enc.decode(&enc.encode(&vals, scale), scale);
        assert_eq!(out.len(), n / 2);
        for i in 0..n / 2 {
            let want = vals.get(i).copied().unwrap_or(0.0);
            assert!((out[i] - want).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_vector_is_constant_polynomial() {
        let enc = Encoder::new(32);
        let coeffs = enc.encode(&[1.5; 16], 1024.0);
        assert_eq!(coeffs[0], 1536);
        assert!(coeffs[1..].iter().all(|&c| c == 0));
    }
}
