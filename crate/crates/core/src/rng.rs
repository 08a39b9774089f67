//! Deterministic pseudo-randomness.
//!
//! Everything stochastic in this workspace draws from [`SplitMix64`], the
//! 64-bit mixer of Steele, Lea & Flood. The sequence is fully specified by
//! integer arithmetic, so a given seed produces identical streams on every
//! platform and in every implementation language:
//!
//! ```text
//! state += 0x9E3779B97F4A7C15
//! z = state
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! output = z ^ (z >> 31)
//! ```
//!
//! Independent streams are derived with [`SplitMix64::for_stream`], which
//! offsets the seed by `stream * golden_gamma` before mixing. Uniform doubles
//! take the top 53 bits of one output; Gaussians use Box-Muller on two
//! uniforms.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Stream `stream` of the generator family seeded by `seed`. Streams with
    /// distinct ids are decorrelated by the output mixer.
    pub fn for_stream(seed: u64, stream: u64) -> Self {
        Self::new(seed.wrapping_add(stream.wrapping_mul(GOLDEN_GAMMA)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// New generator seeded from this one's next output.
    pub fn split(&mut self) -> Self {
        Self::new(self.next_u64())
    }

    /// Uniform double in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, bound)`. Uses the modulo reduction; the bias
    /// for desk-scale bounds (far below 2^32) is immaterial and the mapping
    /// stays portable.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "next_below requires a positive bound");
        self.next_u64() % bound
    }

    /// Bernoulli draw with success probability `p`.
    pub fn next_bool(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Standard normal via Box-Muller. Consumes exactly two uniforms.
    pub fn next_gaussian(&mut self) -> f64 {
        // 1 - u maps [0,1) onto (0,1], keeping the log argument positive.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// `k` distinct indices sampled uniformly from `[0, n)`, in draw order.
    pub fn sample_distinct(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot sample {k} distinct values from {n}");
        // Partial Fisher-Yates over an index pool.
        let mut pool: Vec<usize> = (0..n).collect();
        let mut out = Vec::with_capacity(k);
        for i in 0..k {
            let j = i + self.next_below((n - i) as u64) as usize;
            pool.swap(i, j);
            out.push(pool[i]);
        }
        out
    }
}
