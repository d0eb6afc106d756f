#![allow(dead_code)]

use mcnoma::numerics::{ComplexMatrix, HermitianMatrix, C64};
use mcnoma::rate_region::CovarianceAllocation;
use mcnoma::scenario::ChannelSet;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub struct Rng(ChaCha8Rng);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Integer in `lo..=hi`.
    pub fn int(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.0.next_u64() % (hi - lo + 1) as u64) as usize
    }

    pub fn complex(&mut self) -> C64 {
        C64::new(self.range(-1.0, 1.0), self.range(-1.0, 1.0))
    }

    pub fn matrix(&mut self, rows: usize, cols: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(rows, cols, |_, _| self.complex())
    }

    /// `A A^*` scaled by `scale`, full rank with probability one.
    pub fn psd(&mut self, n: usize, scale: f64) -> HermitianMatrix {
        let a = self.matrix(n, n);
        HermitianMatrix::from_matrix(a.matmul(&a.adjoint()).scale(scale)).unwrap()
    }
}

pub struct Instance {
    pub ch: ChannelSet,
    pub alloc: CovarianceAllocation,
}

/// Random channels and covariances with the given dimensions.
pub fn instance(rng: &mut Rng, users: usize, subcarriers: usize, ap: usize, max_user_antennas: usize) -> Instance {
    let lx: Vec<usize> = (0..users).map(|_| rng.int(1, max_user_antennas)).collect();
    let h = (0..users).map(|u| (0..subcarriers).map(|_| rng.matrix(ap, lx[u])).collect()).collect();
    let ch = ChannelSet::new(h, rng.range(0.1, 2.0)).unwrap();
    let r = (0..users)
        .map(|u| {
            (0..subcarriers)
                .map(|_| {
                    let s = rng.range(0.0, 3.0);
                    rng.psd(lx[u], s)
                })
                .collect()
        })
        .collect();
    Instance { ch, alloc: CovarianceAllocation::new(r).unwrap() }
}

/// Seeded instance with `U <= 4`, `N <= 8`, antennas `<= 2`.
pub fn small_instance(seed: u64) -> Instance {
    let mut rng = Rng::new(seed);
    let u = rng.int(1, 4);
    let n = rng.int(1, 8);
    let ap = rng.int(1, 2);
    instance(&mut rng, u, n, ap, 2)
}

/// Scalar channel set with real gains in `[lo, hi]`.
pub fn scalar_channels(rng: &mut Rng, users: usize, subcarriers: usize, lo: f64, hi: f64) -> ChannelSet {
    let g: Vec<Vec<C64>> = (0..users)
        .map(|_| {
            (0..subcarriers)
                .map(|_| C64::from_polar(rng.range(lo, hi), rng.range(0.0, std::f64::consts::TAU)))
                .collect()
        })
        .collect();
    ChannelSet::scalar(&g, rng.range(0.2, 1.0)).unwrap()
}
