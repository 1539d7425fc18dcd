//! Deterministic random number generation.
//!
//! Everything stochastic in this crate (weight initialization, shuffling,
//! negative sampling, synthetic data) draws from [`SeededRng`] so that a run
//! is a pure function of its seeds. The generator is xorshift64*, chosen for
//! its tiny explicit state; the exact update rule is documented on
//! [`SeededRng::next_u64`] so ports to other languages can match the stream
//! bit for bit.

/// A 64-bit xorshift* generator with splitmix64 seeding.
///
/// Two generators built from the same seed produce identical streams on every
/// platform. Never share one between threads; pass it explicitly.
#[derive(Debug, Clone)]
pub struct SeededRng {
    state: u64,
}

impl SeededRng {
    /// Builds a generator from `seed`. The raw seed is passed through one
    /// round of splitmix64 (`z = seed + 0x9E3779B97F4A7C15`,
    /// `z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9`,
    /// `z = (z ^ (z >> 27)) * 0x94D049BB133111EB`, `z = z ^ (z >> 31)`)
    /// so that nearby seeds start in unrelated states. A zero state (xorshift's
    /// one forbidden value) is replaced by the splitmix64 increment.
    pub fn new(seed: u64) -> Self {
        let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        if z == 0 {
            z = 0x9E37_79B9_7F4A_7C15;
        }
        SeededRng { state: z }
    }

    /// Next raw draw. Update rule (xorshift64*):
    /// `x ^= x >> 12; x ^= x << 25; x ^= x >> 27; return x * 0x2545F4914F6CDD1D`.
    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform draw in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n). Uses the modulo reduction; the bias is
    /// below 2^-53 for any n this crate uses and the reduction is trivially
    /// portable, which matters more here than perfect uniformity.
    pub fn next_index(&mut self, n: usize) -> usize {
        assert!(n > 0, "next_index called with n = 0");
        (self.next_u64() % n as u64) as usize
    }

    /// Standard normal draw via Box-Muller.
    pub fn next_gaussian(&mut self) -> f64 {
        // u1 in (0, 1] so the log is finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Poisson draw by Knuth's product-of-uniforms method. Fine for the
    /// desk-scale means used here (exp(-mean) must not underflow).
    pub fn next_poisson(&mut self, mean: f64) -> u64 {
        assert!(mean >= 0.0 && mean < 500.0, "poisson mean out of range: {mean}");
        let threshold = (-mean).exp();
        let mut k = 0u64;
        let mut p = 1.0;
        loop {
            p *= self.next_f64();
            if p <= threshold {
                return k;
            }
            k += 1;
        }
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_index(i + 1);
            items.swap(i, j);
        }
    }
}
