//! Spectral entropy of an information matrix and entropy-based hard-case
//! selection.
//!
//! The matrix is zero-padded to powers of two and transformed with an
//! iterative radix-2 FFT. Entropy is measured in nats over the normalized
//! power spectrum.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::edge::InfoMatrix;

/// Default hard-case threshold in nats, calibrated for padded 2048×2048
/// spectra of full-HD screens.
pub const DEFAULT_H_MIN: f64 = 9.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    rows: usize,
    cols: usize,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn get(&self, u: usize, v: usize) -> Complex64 {
        self.coeffs[u * self.cols + v]
    }

    pub fn total_energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// In-place iterative radix-2 FFT; `buf.len()` must be a power of two.
fn fft_in_place(buf: &mut [Complex64]) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    if n < 2 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let step = -2.0 * std::f64::consts::PI / len as f64;
        let twiddles: Vec<Complex64> = (0..len / 2)
            .map(|k| Complex64::from_polar(1.0, step * k as f64))
            .collect();
        for chunk in buf.chunks_exact_mut(len) {
            let (lo, hi) = chunk.split_at_mut(len / 2);
            for ((a, b), w) in lo.iter_mut().zip(hi.iter_mut()).zip(&twiddles) {
                let t = *b * w;
                *b = *a - t;
                *a += t;
            }
        }
        len <<= 1;
    }
}

/// 2-D FFT of a real row-major matrix zero-padded to powers of two.
pub fn dft2_real(rows: usize, cols: usize, values: &[f64]) -> Spectrum {
    assert!(rows > 0 && cols > 0, "matrix must be nonempty");
    assert_eq!(values.len(), rows * cols);
    let pr = rows.next_power_of_two();
    let pc = cols.next_power_of_two();
    let mut coeffs = vec![Complex64::new(0.0, 0.0); pr * pc];
    for r in 0..rows {
        for c in 0..cols {
            coeffs[r * pc + c].re = values[r * cols + c];
        }
    }
    // rows past the source are all zero and stay zero
    for row in coeffs.chunks_exact_mut(pc).take(rows) {
        fft_in_place(row);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); pr];
    for c in 0..pc {
        for r in 0..pr {
            column[r] = coeffs[r * pc + c];
        }
        fft_in_place(&mut column);
        for r in 0..pr {
            coeffs[r * pc + c] = column[r];
        }
    }
    Spectrum {
        rows: pr,
        cols: pc,
        coeffs,
    }
}

pub fn dft2(m: &InfoMatrix) -> Spectrum {
    let values: Vec<f64> = m.bits().iter().map(|&b| f64::from(b)).collect();
    let s = dft2_real(m.rows(), m.cols(), &values);
    debug_assert!({
        let n = (s.rows * s.cols) as f64;
        let expected = n * m.count_ones() as f64;
        (s.total_energy() - expected).abs() <= 1e-6 * expected.max(1.0)
    });
    s
}

/// Swaps quadrants so the zero frequency lands at `(rows/2, cols/2)`.
pub fn fftshift(s: &Spectrum) -> Spectrum {
    let (hr, hc) = (s.rows / 2, s.cols / 2);
    let mut coeffs = Vec::with_capacity(s.coeffs.len());
    for u in 0..s.rows {
        let su = (u + s.rows - hr) % s.rows;
        for v in 0..s.cols {
            coeffs.push(s.coeffs[su * s.cols + (v + s.cols - hc) % s.cols]);
        }
    }
    Spectrum {
        rows: s.rows,
        cols: s.cols,
        coeffs,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    /// Nats.
    pub entropy: f64,
    pub total_energy: f64,
    /// Padded spectrum dimensions (rows, cols).
    pub matrix_dims: (usize, usize),
    /// Set when the spectrum carries no energy; such screens are never hard.
    pub degenerate: bool,
    pub is_hard: bool,
}

impl EntropyReport {
    pub fn with_threshold(mut self, h_min: f64) -> Self {
        self.is_hard = !self.degenerate && self.entropy > h_min;
        self
    }
}

/// Shannon entropy of the normalized power spectrum, `0 ln 0 = 0`.
pub fn spectral_entropy(s: &Spectrum) -> EntropyReport {
    let total = s.total_energy();
    let dims = (s.rows, s.cols);
    if total <= 0.0 {
        return EntropyReport {
            entropy: 0.0,
            total_energy: 0.0,
            matrix_dims: dims,
            degenerate: true,
            is_hard: false,
        };
    }
    let h: f64 = s
        .coeffs
        .iter()
        .map(|c| c.norm_sqr() / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    EntropyReport {
        entropy: h.max(0.0),
        total_energy: total,
        matrix_dims: dims,
        degenerate: false,
        is_hard: false,
    }
}

/// Entropy report of `m` with `is_hard` set against `h_min`.
pub fn score_matrix(m: &InfoMatrix, h_min: f64) -> EntropyReport {
    spectral_entropy(&dft2(m)).with_threshold(h_min)
}

/// Ids whose entropy exceeds `h_min`, highest first; equal entropies keep
/// input order.
pub fn select_visual_hard_cases<I: Clone>(reports: &[(I, EntropyReport)], h_min: f64) -> Vec<I> {
    let mut hard: Vec<&(I, EntropyReport)> = reports
        .iter()
        .filter(|(_, r)| !r.degenerate && r.entropy > h_min)
        .collect();
    hard.sort_by(|a, b| b.1.entropy.total_cmp(&a.1.entropy));
    hard.into_iter().map(|(id, _)| id.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct double sum over the padded matrix.
    fn naive_dft(rows: usize, cols: usize, values: &[f64]) -> Vec<Complex64> {
        let (pr, pc) = (rows.next_power_of_two(), cols.next_power_of_two());
        let mut out = Vec::with_capacity(pr * pc);
        for u in 0..pr {
            for v in 0..pc {
                let mut acc = Complex64::new(0.0, 0.0);
                for x in 0..rows {
                    for y in 0..cols {
                        let phase = -2.0
                            * std::f64::consts::PI
                            * ((u * x) as f64 / pr as f64 + (v * y) as f64 / pc as f64);
                        acc += Complex64::from_polar(values[x * cols + y], phase);
                    }
                }
                out.push(acc);
            }
        }
        out
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> InfoMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        InfoMatrix::from_fn(rows, cols, |_, _| rng.gen_bool(0.5))
    }

    fn as_f64(m: &InfoMatrix) -> Vec<f64> {
        m.bits().iter().map(|&b| f64::from(b)).collect()
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let m = InfoMatrix::from_fn(16, 16, |r, c| (r, c) == (0, 0));
        let s = dft2(&m);
        assert!(s.coeffs().iter().all(|c| (c.norm() - 1.0).abs() < 1e-12));
        let h = spectral_entropy(&s).entropy;
        assert!((h - 256f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn all_ones_is_dc_only() {
        let m = InfoMatrix::from_fn(16, 16, |_, _| true);
        let s = dft2(&m);
        assert!((s.get(0, 0).re - 256.0).abs() < 1e-9);
        for (i, c) in s.coeffs().iter().enumerate().skip(1) {
            assert!(c.norm() < 1e-9, "coefficient {i} = {c}");
        }
        assert_eq!(spectral_entropy(&s).entropy, 0.0);
    }

    #[test]
    fn random_8x8_matches_direct_sum() {
        let m = random_matrix(8, 8, 17);
        let s = dft2(&m);
        let oracle = naive_dft(8, 8, &as_f64(&m));
        for (a, b) in s.coeffs().iter().zip(&oracle) {
            assert!((a - b).norm() <= 1e-9 * b.norm().max(1.0));
        }
    }

    #[test]
    fn padding_to_powers_of_two() {
        let s = dft2(&random_matrix(5, 9, 1));
        assert_eq!((s.rows(), s.cols()), (8, 16));
    }

    #[test]
    fn random_32x32_entropy_matches_oracle() {
        let m = random_matrix(32, 32, 20240601);
        let oracle = naive_dft(32, 32, &as_f64(&m));
        let total: f64 = oracle.iter().map(|c| c.norm_sqr()).sum();
        let h_oracle: f64 = oracle
            .iter()
            .map(|c| c.norm_sqr() / total)
            .filter(|&p| p > 0.0)
            .map(|p| -p * p.ln())
            .sum();
        let h = spectral_entropy(&dft2(&m)).entropy;
        assert!((h - h_oracle).abs() < 1e-6, "{h} vs {h_oracle}");
    }

    #[test]
    fn shift_moves_dc_to_center() {
        let m = InfoMatrix::from_fn(16, 8, |_, _| true);
        let s = fftshift(&dft2(&m));
        assert!((s.get(8, 4).re - 128.0).abs() < 1e-9);
        assert!(s.get(0, 0).norm() < 1e-9);
    }

    #[test]
    fn blank_matrix_is_degenerate() {
        let r = score_matrix(&InfoMatrix::zeros(10, 10), 0.0);
        assert_eq!(r.entropy, 0.0);
        assert!(r.degenerate && !r.is_hard);
    }

    fn report(h: f64) -> EntropyReport {
        EntropyReport {
            entropy: h,
            total_energy: 1.0,
            matrix_dims: (4, 4),
            degenerate: false,
            is_hard: false,
        }
    }

    #[test]
    fn selection_filters_and_orders() {
        let reports = vec![("a", report(1.0)), ("b", report(3.0)), ("c", report(2.0)), ("d", report(3.0))];
        assert!(select_visual_hard_cases(&reports, 5.0).is_empty());
        assert_eq!(select_visual_hard_cases(&reports, 0.0), vec!["b", "d", "c", "a"]);
        assert_eq!(select_visual_hard_cases(&reports, 2.0), vec!["b", "d"]);
    }

    proptest! {
        #[test]
        fn fft_matches_direct_sum(seed in any::<u64>(), rows in 1usize..=16, cols in 1usize..=16) {
            let m = random_matrix(rows, cols, seed);
            let values = as_f64(&m);
            let s = dft2_real(rows, cols, &values);
            let oracle = naive_dft(rows, cols, &values);
            let scale = (m.count_ones() as f64).max(1.0);
            for (a, b) in s.coeffs().iter().zip(&oracle) {
                prop_assert!((a - b).norm() <= 1e-9 * scale);
            }
        }

        #[test]
        fn entropy_bounds(seed in any::<u64>(), rows in 1usize..=24, cols in 1usize..=24) {
            let s = dft2(&random_matrix(rows, cols, seed));
            let r = spectral_entropy(&s);
            let n = (s.rows() * s.cols()) as f64;
            prop_assert!(r.entropy >= 0.0);
            prop_assert!(r.entropy <= n.ln() + 1e-9);
        }

        #[test]
        fn shift_is_an_involution_preserving_entropy(seed in any::<u64>(), rows in 1usize..=20, cols in 1usize..=20) {
            let s = dft2(&random_matrix(rows, cols, seed));
            let shifted = fftshift(&s);
            prop_assert_eq!(&fftshift(&shifted), &s);
            let (a, b) = (spectral_entropy(&s).entropy, spectral_entropy(&shifted).entropy);
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }

        #[test]
        fn entropy_is_scale_invariant(seed in any::<u64>(), scale in 0.01f64..1000.0) {
            let m = random_matrix(12, 10, seed);
            let values = as_f64(&m);
            let scaled: Vec<f64> = values.iter().map(|v| v * scale).collect();
            let a = spectral_entropy(&dft2_real(12, 10, &values)).entropy;
            let b = spectral_entropy(&dft2_real(12, 10, &scaled)).entropy;
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }
}
