//! Deterministic, splittable random streams.
//!
//! Every Monte Carlo trial owns a generator derived from a [`StreamKey`]:
//! the master seed fixes the ChaCha key and the trial index selects the
//! ChaCha stream. Trials therefore never share state and can run on any
//! number of workers while producing bit-identical draws.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

/// Default master seed used by the CLI and the experiment drivers.
pub const DEFAULT_SEED: u64 = 20240601;

const TWO_POW_MINUS_53: f64 = 1.0 / (1u64 << 53) as f64;

/// Identifies one independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub master_seed: u64,
    pub trial_index: u64,
}

impl StreamKey {
    pub fn new(master_seed: u64, trial_index: u64) -> Self {
        Self {
            master_seed,
            trial_index,
        }
    }

    pub fn generator(self) -> TrialRng {
        TrialRng::from_key(self)
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Single-owner generator for one trial.
#[derive(Debug, Clone)]
pub struct TrialRng {
    inner: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl TrialRng {
    pub fn from_key(key: StreamKey) -> Self {
        let mut state = key.master_seed;
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut inner = ChaCha8Rng::from_seed(seed);
        inner.set_stream(key.trial_index);
        Self {
            inner,
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw on (0, 1]; exact zero never occurs.
    pub fn uniform_open01(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) + 1) as f64 * TWO_POW_MINUS_53
    }

    /// Uniform draw on (-1, 1) built from a 53-bit grid.
    fn uniform_pm1(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * TWO_POW_MINUS_53 * 2.0 - 1.0
    }

    /// One N(0, 1) draw (Marsaglia polar method; the second variate of each
    /// accepted pair is cached).
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        loop {
            let u = self.uniform_pm1();
            let v = self.uniform_pm1();
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let scale = (-2.0 * s.ln() / s).sqrt();
                self.spare_normal = Some(v * scale);
                return u * scale;
            }
        }
    }

    /// Fair random sign.
    pub fn rademacher(&mut self) -> i32 {
        if self.inner.next_u64() >> 63 == 0 {
            -1
        } else {
            1
        }
    }

    /// Magnitude draw with CDF `F(u) = 1 / log(e / u)` on (0, 1].
    pub fn counterexample_u(&mut self) -> f64 {
        counterexample_u_from_quantile(self.uniform_open01())
    }
}

/// Inverse CDF of `F(u) = 1 / log(e / u)`: `u = exp(1 - 1/q)`.
///
/// `q = 0` (and any `q` small enough for the exponential to underflow) maps
/// to the smallest positive subnormal, the representable stand-in for `0+`.
pub fn counterexample_u_from_quantile(q: f64) -> f64 {
    let smallest = f64::from_bits(1);
    if q <= 0.0 {
        return smallest;
    }
    let u = (1.0 - 1.0 / q).exp();
    u.clamp(smallest, 1.0)
}

/// CDF of the counterexample magnitude law.
pub fn counterexample_cdf(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        1.0 / (1.0 - u.ln())
    }
}
