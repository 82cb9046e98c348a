//! Named, independently seeded random streams and the shared distribution
//! vocabulary.
//!
//! Reproducibility contract: every stream is a ChaCha8 generator seeded with
//! `fnv1a64(base_seed_le_bytes || 0x1f || label_utf8)`. A stream's draw
//! sequence therefore depends only on `(base_seed, label)`, never on the
//! order in which streams are first touched. Continuous distributions are
//! sampled by inverting the CDF on one uniform draw; `bernoulli` compares one
//! uniform draw against `p`; `constant` consumes no draw at all.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::EngineError;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a64(mut hash: u64, bytes: &[u8]) -> u64 {
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// 64-bit seed for the stream `label` under `base_seed`.
pub fn derive_seed(base_seed: u64, label: &str) -> u64 {
    let mut hash = fnv1a64(FNV_OFFSET, &base_seed.to_le_bytes());
    hash = fnv1a64(hash, &[0x1f]);
    fnv1a64(hash, label.as_bytes())
}

/// Base seed for replication `index` of an experiment.
pub fn replication_seed(base_seed: u64, index: u64) -> u64 {
    derive_seed(base_seed, &format!("rep:{index}"))
}

/// Base seed for replication `index` under an extra tag, e.g. the `"B"` arm
/// of an unpaired comparison.
pub fn replication_seed_tagged(base_seed: u64, index: u64, tag: &str) -> u64 {
    derive_seed(base_seed, &format!("rep:{index}:{tag}"))
}

/// Distribution of a sampled quantity.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum Distribution {
    Constant { value: f64 },
    Uniform { lo: f64, hi: f64 },
    Exponential { mean: f64 },
    Triangular { lo: f64, mode: f64, hi: f64 },
    Bernoulli { p: f64 },
}

impl Distribution {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |msg: String| Err(EngineError::BadDistributionParams(msg));
        match *self {
            Distribution::Constant { value } => {
                if !value.is_finite() {
                    return bad(format!("constant({value}) is not finite"));
                }
            }
            Distribution::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                    return bad(format!("uniform({lo}, {hi}) needs lo <= hi, both finite"));
                }
            }
            Distribution::Exponential { mean } => {
                if !mean.is_finite() || mean <= 0.0 {
                    return bad(format!("exponential(mean={mean}) needs mean > 0"));
                }
            }
            Distribution::Triangular { lo, mode, hi } => {
                if !(lo.is_finite() && mode.is_finite() && hi.is_finite())
                    || lo > mode
                    || mode > hi
                {
                    return bad(format!(
                        "triangular({lo}, {mode}, {hi}) needs lo <= mode <= hi, all finite"
                    ));
                }
            }
            Distribution::Bernoulli { p } => {
                if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                    return bad(format!("bernoulli(p={p}) needs p in [0, 1]"));
                }
            }
        }
        Ok(())
    }

    /// Draw one value. Callers must have validated the parameters.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            Distribution::Constant { value } => value,
            Distribution::Uniform { lo, hi } => {
                let u: f64 = rng.random();
                lo + (hi - lo) * u
            }
            Distribution::Exponential { mean } => {
                let u: f64 = rng.random();
                -mean * (1.0 - u).ln()
            }
            Distribution::Triangular { lo, mode, hi } => {
                if hi == lo {
                    return lo;
                }
                let u: f64 = rng.random();
                let cut = (mode - lo) / (hi - lo);
                if u < cut {
                    lo + (u * (hi - lo) * (mode - lo)).sqrt()
                } else {
                    hi - ((1.0 - u) * (hi - lo) * (hi - mode)).sqrt()
                }
            }
            Distribution::Bernoulli { p } => {
                let u: f64 = rng.random();
                if u < p {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Lazily created named substreams over one base seed.
pub struct RngStreams {
    base_seed: u64,
    streams: HashMap<String, ChaCha8Rng>,
}

impl RngStreams {
    pub fn new(base_seed: u64) -> RngStreams {
        RngStreams {
            base_seed,
            streams: HashMap::new(),
        }
    }

    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    pub fn stream(&mut self, label: &str) -> &mut ChaCha8Rng {
        let base = self.base_seed;
        self.streams
            .entry(label.to_owned())
            .or_insert_with(|| ChaCha8Rng::seed_from_u64(derive_seed(base, label)))
    }

    /// Validate `dist` and draw one value from the named stream. No other
    /// stream's cursor moves.
    pub fn draw(&mut self, label: &str, dist: &Distribution) -> Result<f64, EngineError> {
        dist.validate()?;
        Ok(dist.sample(self.stream(label)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_is_exact_and_consumes_nothing() {
        let mut streams = RngStreams::new(9);
        let v = streams.draw("a", &Distribution::Constant { value: 5.0 }).unwrap();
        assert_eq!(v, 5.0);
        let before = streams.stream("a").clone();
        streams.draw("a", &Distribution::Constant { value: 1.0 }).unwrap();
        assert_eq!(streams.stream("a").clone(), before);
    }

    #[test]
    fn same_seed_and_label_reproduces_draws() {
        let dist = Distribution::Uniform { lo: 0.0, hi: 1.0 };
        let mut a = RngStreams::new(123);
        let mut b = RngStreams::new(123);
        let xs: Vec<f64> = (0..1000).map(|_| a.draw("d", &dist).unwrap()).collect();
        let ys: Vec<f64> = (0..1000).map(|_| b.draw("d", &dist).unwrap()).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn streams_are_isolated_from_creation_order() {
        let dist = Distribution::Uniform { lo: 0.0, hi: 1.0 };
        let mut fwd = RngStreams::new(7);
        let mut rev = RngStreams::new(7);
        let labels = ["arrivals", "decisions:des:0:0", "durations:des:0:1", "calibration"];
        for l in labels {
            fwd.stream(l);
        }
        for l in labels.iter().rev() {
            rev.stream(l);
        }
        for l in labels {
            let a: Vec<f64> = (0..50).map(|_| fwd.draw(l, &dist).unwrap()).collect();
            let b: Vec<f64> = (0..50).map(|_| rev.draw(l, &dist).unwrap()).collect();
            assert_eq!(a, b, "stream {l} depends on creation order");
        }
    }

    #[test]
    fn interleaving_other_streams_does_not_shift_a_stream() {
        let dist = Distribution::Uniform { lo: 0.0, hi: 1.0 };
        let mut plain = RngStreams::new(11);
        let solo: Vec<f64> = (0..40).map(|_| plain.draw("x", &dist).unwrap()).collect();
        let mut noisy = RngStreams::new(11);
        let mut interleaved = Vec::new();
        for i in 0..40 {
            noisy.draw(&format!("noise:{i}"), &dist).unwrap();
            interleaved.push(noisy.draw("x", &dist).unwrap());
        }
        assert_eq!(solo, interleaved);
    }

    #[test]
    fn distinct_labels_give_distinct_sequences() {
        let dist = Distribution::Uniform { lo: 0.0, hi: 1.0 };
        let mut s = RngStreams::new(5);
        let a: Vec<f64> = (0..10).map(|_| s.draw("one", &dist).unwrap()).collect();
        let b: Vec<f64> = (0..10).map(|_| s.draw("two", &dist).unwrap()).collect();
        assert_ne!(a, b);
    }

    #[test]
    fn replication_seeds_differ_by_index_and_tag() {
        let s0 = replication_seed(42, 0);
        let s1 = replication_seed(42, 1);
        let s0b = replication_seed_tagged(42, 0, "B");
        assert_ne!(s0, s1);
        assert_ne!(s0, s0b);
        assert_eq!(s0, replication_seed(42, 0));
    }

    #[test]
    fn bernoulli_edges_are_degenerate() {
        let mut s = RngStreams::new(3);
        for _ in 0..20 {
            assert_eq!(s.draw("p0", &Distribution::Bernoulli { p: 0.0 }).unwrap(), 0.0);
            assert_eq!(s.draw("p1", &Distribution::Bernoulli { p: 1.0 }).unwrap(), 1.0);
        }
    }

    #[test]
    fn triangular_stays_in_bounds_and_handles_degenerate_edges() {
        let mut s = RngStreams::new(17);
        let t = Distribution::Triangular { lo: 1.0, mode: 2.0, hi: 5.0 };
        for _ in 0..500 {
            let v = s.draw("t", &t).unwrap();
            assert!((1.0..=5.0).contains(&v));
        }
        let flat = Distribution::Triangular { lo: 2.0, mode: 2.0, hi: 2.0 };
        assert_eq!(s.draw("t", &flat).unwrap(), 2.0);
        let left = Distribution::Triangular { lo: 0.0, mode: 0.0, hi: 1.0 };
        for _ in 0..100 {
            let v = s.draw("t", &left).unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn bad_parameters_are_rejected() {
        let mut s = RngStreams::new(1);
        let cases = [
            Distribution::Uniform { lo: 2.0, hi: 1.0 },
            Distribution::Exponential { mean: 0.0 },
            Distribution::Exponential { mean: -1.0 },
            Distribution::Triangular { lo: 0.0, mode: 2.0, hi: 1.0 },
            Distribution::Bernoulli { p: 1.5 },
            Distribution::Constant { value: f64::NAN },
        ];
        for dist in cases {
            let err = s.draw("bad", &dist).unwrap_err();
            assert!(matches!(err, EngineError::BadDistributionParams(_)), "{dist:?}");
        }
    }
}
