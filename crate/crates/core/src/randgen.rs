//! Seeded generation of channel, noise, and symbol data.
//!
//! Every random quantity of a trial comes from its own labeled stream, so
//! trials can run in any order or in parallel and still see exactly the
//! same data. A stream is a fresh ChaCha8 generator keyed by the byte
//! encoding of `(master_seed, trial_index, label, attempt)`, which makes
//! the mapping injective and platform independent.

use nalgebra::Complex;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::FRAC_1_SQRT_2;

use crate::model::{CMatrix, CVector, C64};

/// The independent random streams a trial draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamLabel {
    ChannelH,
    ChannelG,
    RelayNoise,
    DestNoise,
    Symbols,
}

impl StreamLabel {
    fn code(self) -> u8 {
        match self {
            StreamLabel::ChannelH => 0,
            StreamLabel::ChannelG => 1,
            StreamLabel::RelayNoise => 2,
            StreamLabel::DestNoise => 3,
            StreamLabel::Symbols => 4,
        }
    }
}

/// Addresses one random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub trial_index: u64,
    pub stream_label: StreamLabel,
    /// Resample attempt; 0 for the primary draw of a trial.
    pub attempt: u8,
}

impl SeedSpec {
    pub fn new(master_seed: u64, trial_index: u64, stream_label: StreamLabel) -> Self {
        Self {
            master_seed,
            trial_index,
            stream_label,
            attempt: 0,
        }
    }

    pub fn with_attempt(mut self, attempt: u8) -> Self {
        self.attempt = attempt;
        self
    }

    /// A generator positioned at the start of this stream. Creation is
    /// pure; nothing is shared between streams.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        seed[0..8].copy_from_slice(&self.master_seed.to_le_bytes());
        seed[8..16].copy_from_slice(&self.trial_index.to_le_bytes());
        seed[16] = self.stream_label.code();
        seed[17] = self.attempt;
        ChaCha8Rng::from_seed(seed)
    }
}

/// One circularly symmetric complex Gaussian draw with unit total
/// variance: real and imaginary parts each N(0, 1/2).
#[inline]
pub fn cscg_entry<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

/// CSCG matrix drawn sequentially from `rng`, filled column by column.
pub fn sample_cscg_matrix_with<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    let mut m = CMatrix::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            m[(r, c)] = cscg_entry(rng);
        }
    }
    m
}

/// CSCG matrix from a fresh stream.
pub fn sample_cscg_matrix(rows: usize, cols: usize, seed: &SeedSpec) -> CMatrix {
    assert!(rows >= 1 && cols >= 1);
    sample_cscg_matrix_with(&mut seed.rng(), rows, cols)
}

pub fn sample_cscg_vector_with<R: Rng + ?Sized>(rng: &mut R, len: usize) -> CVector {
    CVector::from_iterator(len, (0..len).map(|_| cscg_entry(rng)))
}

/// The four QPSK constellation points `(+-1 +- j)/sqrt(2)`, indexed by
/// `(re < 0) * 2 + (im < 0)`.
pub const QPSK_POINTS: [C64; 4] = [
    Complex::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2),
    Complex::new(FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
    Complex::new(-FRAC_1_SQRT_2, FRAC_1_SQRT_2),
    Complex::new(-FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
];

/// Quadrant index of a constellation point or detector output.
#[inline]
pub fn qpsk_index(s: C64) -> usize {
    ((s.re < 0.0) as usize) * 2 + ((s.im < 0.0) as usize)
}

/// Uniform unit-energy QPSK block drawn sequentially from `rng`.
pub fn sample_qpsk_block_with<R: Rng + ?Sized>(rng: &mut R, n_b: usize) -> CVector {
    CVector::from_iterator(n_b, (0..n_b).map(|_| QPSK_POINTS[rng.random_range(0..4)]))
}

/// Uniform unit-energy QPSK block from a fresh stream.
pub fn sample_qpsk_block(n_b: usize, seed: &SeedSpec) -> CVector {
    assert!(n_b >= 1);
    sample_qpsk_block_with(&mut seed.rng(), n_b)
}

/// Nearest QPSK point in Euclidean distance. Ties on either axis break
/// toward the positive half plane, so 0 maps to `(1 + j)/sqrt(2)`.
#[inline]
pub fn min_distance_detect(y: C64) -> C64 {
    let re = if y.re >= 0.0 {
        FRAC_1_SQRT_2
    } else {
        -FRAC_1_SQRT_2
    };
    let im = if y.im >= 0.0 {
        FRAC_1_SQRT_2
    } else {
        -FRAC_1_SQRT_2
    };
    Complex::new(re, im)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cscg_sample_moments() {
        let seed = SeedSpec::new(42, 0, StreamLabel::ChannelH);
        let m = sample_cscg_matrix(100, 1000, &seed);
        let n = (m.nrows() * m.ncols()) as f64;
        let var = m.iter().map(|z| z.norm_sqr()).sum::<f64>() / n;
        assert!((0.99..=1.01).contains(&var), "per-entry variance {var}");
        // circularity: E[z^2] should vanish
        let pseudo = m.iter().map(|z| z * z).sum::<C64>() / Complex::new(n, 0.0);
        assert!(pseudo.norm() < 0.02, "pseudo-variance {}", pseudo.norm());
    }

    #[test]
    fn cscg_deterministic_per_seed() {
        let seed = SeedSpec::new(7, 3, StreamLabel::ChannelG);
        let a = sample_cscg_matrix(4, 5, &seed);
        let b = sample_cscg_matrix(4, 5, &seed);
        assert_eq!(a, b);
        // different label, trial, or attempt gives a different stream
        let c = sample_cscg_matrix(4, 5, &SeedSpec::new(7, 3, StreamLabel::ChannelH));
        let d = sample_cscg_matrix(4, 5, &SeedSpec::new(7, 4, StreamLabel::ChannelG));
        let e = sample_cscg_matrix(4, 5, &seed.with_attempt(1));
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_ne!(a, e);
    }

    #[test]
    fn stream_order_independence() {
        // Generating trial 5 before trial 2 changes nothing.
        let h5 = sample_cscg_matrix(3, 3, &SeedSpec::new(1, 5, StreamLabel::ChannelH));
        let h2 = sample_cscg_matrix(3, 3, &SeedSpec::new(1, 2, StreamLabel::ChannelH));
        let h2_again = sample_cscg_matrix(3, 3, &SeedSpec::new(1, 2, StreamLabel::ChannelH));
        let h5_again = sample_cscg_matrix(3, 3, &SeedSpec::new(1, 5, StreamLabel::ChannelH));
        assert_eq!(h2, h2_again);
        assert_eq!(h5, h5_again);
    }

    #[test]
    fn qpsk_unit_energy_exact() {
        let seed = SeedSpec::new(9, 0, StreamLabel::Symbols);
        let b = sample_qpsk_block(1000, &seed);
        for s in b.iter() {
            assert_relative_eq!(s.norm_sqr(), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn qpsk_symbol_frequencies() {
        let mut rng = SeedSpec::new(11, 0, StreamLabel::Symbols).rng();
        let n = 100_000usize;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            let b = sample_qpsk_block_with(&mut rng, 1);
            counts[qpsk_index(b[0])] += 1;
        }
        for &c in &counts {
            let freq = c as f64 / n as f64;
            assert!(
                (0.2475..=0.2525).contains(&freq),
                "symbol frequency {freq} out of band"
            );
        }
    }

    #[test]
    fn qpsk_block_covariance_near_identity() {
        let mut rng = SeedSpec::new(13, 0, StreamLabel::Symbols).rng();
        let n_b = 4;
        let n = 100_000usize;
        let mut acc = CMatrix::zeros(n_b, n_b);
        for _ in 0..n {
            let b = sample_qpsk_block_with(&mut rng, n_b);
            acc += &b * b.adjoint();
        }
        let cov = acc / Complex::new(n as f64, 0.0);
        for r in 0..n_b {
            for c in 0..n_b {
                let expected = if r == c { 1.0 } else { 0.0 };
                assert!(
                    (cov[(r, c)] - Complex::new(expected, 0.0)).norm() < 0.02,
                    "covariance entry ({r},{c}) = {}",
                    cov[(r, c)]
                );
            }
        }
    }

    #[test]
    fn detector_quadrants_and_ties() {
        let p = FRAC_1_SQRT_2;
        assert_eq!(
            min_distance_detect(Complex::new(0.9, 0.8)),
            Complex::new(p, p)
        );
        // tie at the origin resolves toward positive real, positive imaginary
        assert_eq!(
            min_distance_detect(Complex::new(0.0, 0.0)),
            Complex::new(p, p)
        );
        assert_eq!(
            min_distance_detect(Complex::new(-0.1, -2.0)),
            Complex::new(-p, -p)
        );
        assert_eq!(
            min_distance_detect(Complex::new(0.0, -0.4)),
            Complex::new(p, -p)
        );
    }

    #[test]
    fn detector_is_nearest_point() {
        let mut rng = SeedSpec::new(17, 0, StreamLabel::Symbols).rng();
        for _ in 0..1000 {
            let y = cscg_entry(&mut rng);
            let detected = min_distance_detect(y);
            let best = QPSK_POINTS
                .iter()
                .map(|p| (y - p).norm_sqr())
                .fold(f64::INFINITY, f64::min);
            assert_relative_eq!((y - detected).norm_sqr(), best, epsilon = 1e-12);
        }
    }

    proptest::proptest! {
        #[test]
        fn detector_never_beaten_by_any_constellation_point(
            re in -1e6f64..1e6,
            im in -1e6f64..1e6,
        ) {
            let y = Complex::new(re, im);
            let detected = min_distance_detect(y);
            let d = (y - detected).norm_sqr();
            for p in QPSK_POINTS {
                proptest::prop_assert!(d <= (y - p).norm_sqr() + 1e-9);
            }
        }

        #[test]
        fn detector_output_is_a_constellation_point(
            re in proptest::num::f64::ANY,
            im in proptest::num::f64::ANY,
        ) {
            let detected = min_distance_detect(Complex::new(re, im));
            proptest::prop_assert!(QPSK_POINTS.contains(&detected));
        }
    }
}
