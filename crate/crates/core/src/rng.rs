//! Counter-based deterministic random numbers.
//!
//! Every random decision in the pipeline is a pure function of
//! `(run seed, document id, sequence index, unit index, domain, counter)`.
//! Because no generator state is shared between decisions, output is
//! byte-identical regardless of processing order or worker count.

/// Decision domains, mixed into the key so distinct decision kinds at the
/// same position never reuse a stream.
pub mod domain {
    /// Bernoulli draw that selects a whole-word unit for masking.
    pub const SELECT: u64 = 1;
    /// 80/10/10 corruption fate for one selected unit.
    pub const FATE: u64 = 2;
    /// Replacement token draw for the 10% random-replacement arm.
    pub const REPLACE: u64 = 3;
    /// Fisher-Yates shuffle during scorer training.
    pub const SHUFFLE: u64 = 4;
    /// Reservoir sampling while collecting calibration scores.
    pub const RESERVOIR: u64 = 5;
}

/// splitmix64 finalizer: a bijective 64-bit mix with full avalanche.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash an arbitrary-length key of 64-bit words into one 64-bit value by
/// chaining the splitmix64 finalizer.
#[inline]
pub fn hash_key(words: &[u64]) -> u64 {
    let mut acc: u64 = 0x5E1E_C71B_u64.wrapping_mul(0x1_0000_0001);
    for &w in words {
        acc = mix(acc ^ w);
    }
    // Final mix so trailing zero words still change the output.
    mix(acc ^ (words.len() as u64))
}

/// A keyed counter RNG. Construct one per decision site; each call to
/// [`CounterRng::next_u64`] advances only the local counter.
#[derive(Debug, Clone)]
pub struct CounterRng {
    base: u64,
    counter: u64,
}

impl CounterRng {
    /// Key the stream by decision coordinates. `domain` is one of the
    /// [`domain`] constants.
    pub fn new(seed: u64, domain: u64, coords: &[u64]) -> Self {
        let mut words = Vec::with_capacity(coords.len() + 2);
        words.push(seed);
        words.push(domain);
        words.extend_from_slice(coords);
        CounterRng {
            base: hash_key(&words),
            counter: 0,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let v = mix(self.base ^ mix(self.counter));
        self.counter += 1;
        v
    }

    /// Uniform in [0, 1) with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n) by rejection, bias-free for any n > 0.
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "next_below(0)");
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }
}

/// Seeded Fisher-Yates shuffle keyed by `(seed, SHUFFLE, coords)`.
pub fn shuffle<T>(items: &mut [T], seed: u64, coords: &[u64]) {
    let mut rng = CounterRng::new(seed, domain::SHUFFLE, coords);
    for i in (1..items.len()).rev() {
        let j = rng.next_below(i as u64 + 1) as usize;
        items.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_deterministic() {
        let mut a = CounterRng::new(42, domain::SELECT, &[7, 3, 1]);
        let mut b = CounterRng::new(42, domain::SELECT, &[7, 3, 1]);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn distinct_domains_give_distinct_streams() {
        let mut a = CounterRng::new(42, domain::SELECT, &[7, 3, 1]);
        let mut b = CounterRng::new(42, domain::FATE, &[7, 3, 1]);
        let same = (0..64).filter(|_| a.next_u64() == b.next_u64()).count();
        assert_eq!(same, 0);
    }

    #[test]
    fn distinct_coords_give_distinct_streams() {
        let mut a = CounterRng::new(42, domain::SELECT, &[7, 3, 1]);
        let mut b = CounterRng::new(42, domain::SELECT, &[7, 3, 2]);
        let same = (0..64).filter(|_| a.next_u64() == b.next_u64()).count();
        assert_eq!(same, 0);
    }

    #[test]
    fn trailing_zero_coord_changes_stream() {
        let a = CounterRng::new(1, domain::SELECT, &[5]).next_u64();
        let b = CounterRng::new(1, domain::SELECT, &[5, 0]).next_u64();
        assert_ne!(a, b);
    }

    #[test]
    fn f64_in_unit_interval_and_roughly_uniform() {
        let mut rng = CounterRng::new(9, domain::SELECT, &[0]);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let v = rng.next_f64();
            assert!((0.0..1.0).contains(&v));
            sum += v;
        }
        let mean = sum / n as f64;
        assert!((mean - 0.5).abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn next_below_is_unbiased_over_small_range() {
        let mut rng = CounterRng::new(3, domain::REPLACE, &[0]);
        let mut counts = [0usize; 7];
        let n = 70_000;
        for _ in 0..n {
            counts[rng.next_below(7) as usize] += 1;
        }
        for &c in &counts {
            let expected = n as f64 / 7.0;
            assert!((c as f64 - expected).abs() < expected * 0.05, "count {c}");
        }
    }

    #[test]
    fn shuffle_is_seed_stable_and_a_permutation() {
        let mut a: Vec<u32> = (0..50).collect();
        let mut b: Vec<u32> = (0..50).collect();
        shuffle(&mut a, 11, &[2]);
        shuffle(&mut b, 11, &[2]);
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_ne!(a, sorted, "50 items should not shuffle to identity");
    }
}
