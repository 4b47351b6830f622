//! Single-pass estimators and small-memory algorithms.
//!
//! [`StreamingEstimator`]s see each constraint once, in stream order, and
//! report an exact rational estimate of the optimum. [`MemoryBoundedAlgorithm`]s
//! carry at most `c <= 16` bits of state, small enough that the law of the
//! state can be tabulated by the hybrid experiments in [`crate::commlab`].

use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use num_rational::Ratio;
use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::instance::{Constraint, Label, StreamReader, UgInstance};
use crate::seed::LabRng;
use crate::solver::exact_optimum;

/// Exact rational estimate of a Unique Games optimum.
pub type Estimate = Ratio<u64>;

/// Largest state budget, in bits, of a [`MemoryBoundedAlgorithm`].
pub const MAX_STATE_BITS: u32 = 16;

pub trait StreamingEstimator {
    fn init(&mut self, p: u32, n: usize);
    fn process(&mut self, constraint: &Constraint);
    fn finish(&mut self) -> Result<Estimate>;
}

/// Feeds a `ug v1` stream through `estimator` and returns its estimate.
pub fn run_stream<E, R>(estimator: &mut E, source: R) -> Result<Estimate>
where
    E: StreamingEstimator + ?Sized,
    R: BufRead,
{
    let reader = StreamReader::new(source)?;
    let header = reader.header().clone();
    estimator.init(header.p, header.n);
    for constraint in reader {
        estimator.process(&constraint?);
    }
    estimator.finish()
}

/// Counts constraints and reports `m / p`.
#[derive(Clone, Debug, Default)]
pub struct CountEstimator {
    p: Option<u32>,
    m: u64,
}

impl CountEstimator {
    pub fn new() -> Self {
        Self::default()
    }
}

impl StreamingEstimator for CountEstimator {
    fn init(&mut self, p: u32, _n: usize) {
        self.p = Some(p);
        self.m = 0;
    }

    fn process(&mut self, _constraint: &Constraint) {
        self.m += 1;
    }

    fn finish(&mut self) -> Result<Estimate> {
        let p = self
            .p
            .ok_or_else(|| Error::Contract("estimator was never initialised".into()))?;
        Ok(Ratio::new(self.m, u64::from(p)))
    }
}

/// Keeps a uniform reservoir of `budget` constraints, exact-solves it at the
/// end and rescales: `opt(sample) · m / |sample|`.
#[derive(Clone, Debug)]
pub struct SamplingEstimator {
    budget: usize,
    rng: LabRng,
    shape: Option<(u32, usize)>,
    seen: u64,
    reservoir: Vec<(u64, Constraint)>,
}

impl SamplingEstimator {
    pub fn new(budget: usize, rng: LabRng) -> Result<Self> {
        if budget == 0 {
            return Err(Error::Parameter(
                "sampling budget must be at least 1".into(),
            ));
        }
        Ok(Self {
            budget,
            rng,
            shape: None,
            seen: 0,
            reservoir: Vec::with_capacity(budget),
        })
    }

    /// Stream positions currently held in the reservoir.
    pub fn sampled_positions(&self) -> Vec<u64> {
        self.reservoir.iter().map(|(i, _)| *i).collect()
    }
}

impl StreamingEstimator for SamplingEstimator {
    fn init(&mut self, p: u32, n: usize) {
        self.shape = Some((p, n));
        self.seen = 0;
        self.reservoir.clear();
    }

    fn process(&mut self, constraint: &Constraint) {
        let position = self.seen;
        self.seen += 1;
        if self.reservoir.len() < self.budget {
            self.reservoir.push((position, constraint.clone()));
            return;
        }
        let slot = self.rng.random_range(0..=position);
        if (slot as usize) < self.budget {
            self.reservoir[slot as usize] = (position, constraint.clone());
        }
    }

    fn finish(&mut self) -> Result<Estimate> {
        let (p, n) = self
            .shape
            .ok_or_else(|| Error::Contract("estimator was never initialised".into()))?;
        if self.reservoir.is_empty() {
            return Ok(Ratio::from_integer(0));
        }
        let sample = self.reservoir.iter().map(|(_, c)| c.clone()).collect();
        let sub_instance = UgInstance::new(p, n, sample, None)?;
        let opt = exact_optimum(&sub_instance)?.opt_value as u64;
        Ok(Ratio::new(opt * self.seen, self.reservoir.len() as u64))
    }
}

/// A streaming algorithm whose whole memory is an integer in `[0, 2^bits)`.
pub trait MemoryBoundedAlgorithm: Send + Sync {
    fn bits(&self) -> u32;
    fn transition(&self, state: u32, constraint: &Constraint, rng: &mut dyn RngCore) -> u32;
    fn decide(&self, state: u32) -> Label;

    /// Number of distinct states.
    fn state_space(&self) -> usize {
        1 << self.bits()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ToyKind {
    ConstraintHashSketch,
    PrefixTracker,
    RandomProjectionParity,
}

impl ToyKind {
    pub const ALL: [ToyKind; 3] = [
        ToyKind::ConstraintHashSketch,
        ToyKind::PrefixTracker,
        ToyKind::RandomProjectionParity,
    ];
}

impl FromStr for ToyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constraint-hash-sketch" => Ok(ToyKind::ConstraintHashSketch),
            "prefix-tracker" => Ok(ToyKind::PrefixTracker),
            "random-projection-parity" => Ok(ToyKind::RandomProjectionParity),
            other => Err(Error::Parameter(format!(
                "unknown algorithm kind {other:?}"
            ))),
        }
    }
}

impl fmt::Display for ToyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ToyKind::ConstraintHashSketch => "constraint-hash-sketch",
            ToyKind::PrefixTracker => "prefix-tracker",
            ToyKind::RandomProjectionParity => "random-projection-parity",
        })
    }
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 33)).wrapping_mul(0xff51_afd7_ed55_8ccd);
    z = (z ^ (z >> 33)).wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    z ^ (z >> 33)
}

fn keyed_hash(key: u64, c: &Constraint) -> u64 {
    let h = mix64(key ^ c.u as u64);
    let h = mix64(h ^ (c.v as u64).rotate_left(21));
    mix64(h ^ u64::from(c.target()).rotate_left(42))
}

/// Sets bit `h(u, v, target) mod c`; says YES while at most half the bits are set.
struct HashSketch {
    bits: u32,
    key: u64,
}

impl MemoryBoundedAlgorithm for HashSketch {
    fn bits(&self) -> u32 {
        self.bits
    }

    fn transition(&self, state: u32, constraint: &Constraint, _rng: &mut dyn RngCore) -> u32 {
        if self.bits == 0 {
            return 0;
        }
        state | 1 << (keyed_hash(self.key, constraint) % u64::from(self.bits))
    }

    fn decide(&self, state: u32) -> Label {
        if 2 * state.count_ones() <= self.bits {
            Label::Yes
        } else {
            Label::No
        }
    }
}

/// One slot of `ceil(log2 p)` bits per vertex `0..slots`; each slot
/// accumulates (mod p) the targets of the constraints touching its vertex.
/// Says YES when the slot sum is 0 mod p.
struct PrefixTracker {
    bits: u32,
    p: u32,
    slot_bits: u32,
    slots: usize,
}

impl PrefixTracker {
    fn slot(&self, state: u32, i: usize) -> u32 {
        (state >> (i as u32 * self.slot_bits)) & ((1 << self.slot_bits) - 1)
    }
}

impl MemoryBoundedAlgorithm for PrefixTracker {
    fn bits(&self) -> u32 {
        self.bits
    }

    fn transition(&self, mut state: u32, constraint: &Constraint, _rng: &mut dyn RngCore) -> u32 {
        let target = constraint.target();
        for w in [constraint.u, constraint.v] {
            if w < self.slots {
                let shift = w as u32 * self.slot_bits;
                let updated = (self.slot(state, w) + target) % self.p;
                state = (state & !(((1 << self.slot_bits) - 1) << shift)) | updated << shift;
            }
        }
        state
    }

    fn decide(&self, state: u32) -> Label {
        let total: u32 = (0..self.slots).map(|i| self.slot(state, i)).sum();
        if total.is_multiple_of(self.p) {
            Label::Yes
        } else {
            Label::No
        }
    }
}

/// XOR of `c`-bit hashes of every `(u, v, target)` seen; says YES on even parity.
struct ProjectionParity {
    bits: u32,
    key: u64,
}

impl MemoryBoundedAlgorithm for ProjectionParity {
    fn bits(&self) -> u32 {
        self.bits
    }

    fn transition(&self, state: u32, constraint: &Constraint, _rng: &mut dyn RngCore) -> u32 {
        let mask = ((1u64 << self.bits) - 1) as u32;
        state ^ (keyed_hash(self.key, constraint) as u32 & mask)
    }

    fn decide(&self, state: u32) -> Label {
        if state.count_ones().is_multiple_of(2) {
            Label::Yes
        } else {
            Label::No
        }
    }
}

/// Builds one of the toy subjects for the hybrid experiments. Hash keys are
/// drawn from `rng`, so the algorithm is deterministic given the seed.
pub fn make_toy_algorithm<R: Rng + ?Sized>(
    kind: ToyKind,
    bits: u32,
    p: u32,
    rng: &mut R,
) -> Result<Box<dyn MemoryBoundedAlgorithm>> {
    if bits > MAX_STATE_BITS {
        return Err(Error::Parameter(format!(
            "state budget {bits} exceeds {MAX_STATE_BITS} bits"
        )));
    }
    crate::zp::check_modulus(p)?;
    let key = rng.next_u64();
    Ok(match kind {
        ToyKind::ConstraintHashSketch => Box::new(HashSketch { bits, key }),
        ToyKind::PrefixTracker => {
            let slot_bits = 32 - (p - 1).leading_zeros();
            Box::new(PrefixTracker {
                bits,
                p,
                slot_bits,
                slots: (bits / slot_bits) as usize,
            })
        }
        ToyKind::RandomProjectionParity => Box::new(ProjectionParity { bits, key }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{sample_ug, to_stream_string, Dist};
    use crate::seed::{derive_rng, master_rng};
    use crate::solver::exact_optimum;
    use std::io::{BufReader, Read};

    fn stream_of(p: u32, m: usize) -> String {
        let mut text = format!("ug v1 p={p} n=4 m={m}\n");
        for i in 0..m {
            text.push_str(&format!("lin {} {} {}\n", i % 3, i % 3 + 1, i as u32 % p));
        }
        text
    }

    #[test]
    fn count_examples() {
        let mut est = CountEstimator::new();
        assert_eq!(
            run_stream(&mut est, stream_of(5, 100).as_bytes()).unwrap(),
            Ratio::from_integer(20)
        );
        assert_eq!(
            run_stream(&mut est, stream_of(2, 7).as_bytes()).unwrap(),
            Ratio::new(7, 2)
        );
        assert_eq!(
            run_stream(&mut est, stream_of(3, 0).as_bytes()).unwrap(),
            Ratio::from_integer(0)
        );
    }

    #[test]
    fn count_attains_ratio_p_on_y_instances() {
        let mut rng = master_rng(1);
        for p in [2, 3, 5] {
            let inst = sample_ug(p, 8, 3, 5, Dist::Y, &mut rng).unwrap();
            let est = run_stream(
                &mut CountEstimator::new(),
                to_stream_string(&inst).as_bytes(),
            )
            .unwrap();
            let opt = exact_optimum(&inst).unwrap().opt_value as u64;
            assert_eq!(
                Ratio::from_integer(opt) / est,
                Ratio::from_integer(u64::from(p))
            );
        }
    }

    #[test]
    fn uninitialised_estimator_is_a_contract_error() {
        assert!(matches!(
            CountEstimator::new().finish(),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn parse_errors_propagate() {
        let mut est = CountEstimator::new();
        let err = run_stream(
            &mut est,
            "ug v1 p=3 n=4 m=2\nlin 0 1 1\nlin 0 9 1\n".as_bytes(),
        );
        assert!(matches!(err, Err(Error::Parse { line: 3, .. })));
    }

    /// Hands out the underlying bytes one at a time.
    struct Trickle<'a>(&'a [u8]);

    impl Read for Trickle<'_> {
        fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
            if self.0.is_empty() || buf.is_empty() {
                return Ok(0);
            }
            buf[0] = self.0[0];
            self.0 = &self.0[1..];
            Ok(1)
        }
    }

    #[test]
    fn chunking_does_not_matter() {
        let mut rng = master_rng(2);
        let inst = sample_ug(3, 10, 4, 30, Dist::N, &mut rng).unwrap();
        let text = to_stream_string(&inst);
        let whole = run_stream(
            &mut SamplingEstimator::new(20, derive_rng(5, "s", 0)).unwrap(),
            text.as_bytes(),
        )
        .unwrap();
        let trickled = run_stream(
            &mut SamplingEstimator::new(20, derive_rng(5, "s", 0)).unwrap(),
            BufReader::with_capacity(3, Trickle(text.as_bytes())),
        )
        .unwrap();
        assert_eq!(whole, trickled);
    }

    #[test]
    fn full_budget_sampling_is_exact() {
        let mut rng = master_rng(3);
        for _ in 0..5 {
            let inst = sample_ug(2, 10, 3, 20, Dist::N, &mut rng).unwrap();
            let mut est = SamplingEstimator::new(inst.m(), derive_rng(3, "s", 0)).unwrap();
            let got = run_stream(&mut est, to_stream_string(&inst).as_bytes()).unwrap();
            let opt = exact_optimum(&inst).unwrap().opt_value as u64;
            assert_eq!(got, Ratio::from_integer(opt));
        }
    }

    #[test]
    fn sampling_a_y_instance_returns_m() {
        let mut rng = master_rng(4);
        for budget in [1, 5, 17] {
            let inst = sample_ug(3, 10, 4, 25, Dist::Y, &mut rng).unwrap();
            let mut est =
                SamplingEstimator::new(budget, derive_rng(4, "s", budget as u64)).unwrap();
            let got = run_stream(&mut est, to_stream_string(&inst).as_bytes()).unwrap();
            assert_eq!(got, Ratio::from_integer(inst.m() as u64));
        }
    }

    #[test]
    fn reservoir_inclusion_is_uniform() {
        let (m, budget, runs) = (40usize, 10usize, 20_000);
        let text = stream_of(3, m);
        let mut counts = vec![0u64; m];
        for run in 0..runs {
            let mut est = SamplingEstimator::new(budget, derive_rng(9, "reservoir", run)).unwrap();
            run_stream(&mut est, text.as_bytes()).unwrap();
            for pos in est.sampled_positions() {
                counts[pos as usize] += 1;
            }
        }
        let expected = runs as f64 * budget as f64 / m as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // inclusion indicators are negatively correlated, so this is conservative;
        // 39 degrees of freedom, 0.001 upper quantile
        assert!(chi2 < 72.05, "chi2 = {chi2}");
    }

    #[test]
    fn estimates_are_deterministic_given_seed() {
        let mut rng = master_rng(5);
        let inst = sample_ug(2, 10, 5, 100, Dist::N, &mut rng).unwrap();
        let text = to_stream_string(&inst);
        let run = || {
            let mut est = SamplingEstimator::new(50, derive_rng(77, "s", 0)).unwrap();
            run_stream(&mut est, text.as_bytes()).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn zero_budget_is_rejected() {
        assert!(SamplingEstimator::new(0, master_rng(0)).is_err());
    }

    #[test]
    fn toy_algorithms_respect_their_budget() {
        let mut rng = master_rng(6);
        for kind in ToyKind::ALL {
            for bits in [0, 1, 3, 8, 16] {
                for p in [2, 3, 5] {
                    let alg = make_toy_algorithm(kind, bits, p, &mut rng).unwrap();
                    let mut state = 0;
                    for _ in 0..(100_000 / 45) {
                        let inst = sample_ug(p, 20, 5, 1, Dist::N, &mut rng).unwrap();
                        for c in inst.constraints() {
                            state = alg.transition(state, c, &mut rng);
                            assert!((state as usize) < alg.state_space(), "{kind} bits={bits}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn zero_bit_algorithms_are_constant() {
        let mut rng = master_rng(7);
        for kind in ToyKind::ALL {
            let alg = make_toy_algorithm(kind, 0, 3, &mut rng).unwrap();
            let inst = sample_ug(3, 8, 4, 3, Dist::N, &mut rng).unwrap();
            let state = inst
                .constraints()
                .iter()
                .fold(0, |s, c| alg.transition(s, c, &mut rng));
            assert_eq!(state, 0);
            assert_eq!(alg.decide(state), alg.decide(0));
        }
    }

    #[test]
    fn toy_kind_parsing() {
        for kind in ToyKind::ALL {
            assert_eq!(kind.to_string().parse::<ToyKind>().unwrap(), kind);
        }
        assert!("nope".parse::<ToyKind>().is_err());
        assert!(make_toy_algorithm(ToyKind::PrefixTracker, 17, 2, &mut master_rng(0)).is_err());
    }

    #[test]
    fn prefix_tracker_accumulates_targets() {
        let alg = make_toy_algorithm(ToyKind::PrefixTracker, 4, 3, &mut master_rng(0)).unwrap();
        let mut rng = master_rng(1);
        // two 2-bit slots, for vertices 0 and 1
        let s = alg.transition(0, &Constraint::linear(0, 5, 2), &mut rng);
        assert_eq!(s, 2);
        let s = alg.transition(s, &Constraint::linear(1, 0, 2), &mut rng);
        assert_eq!(s, 1 | 2 << 2);
        let s = alg.transition(s, &Constraint::linear(3, 4, 1), &mut rng);
        assert_eq!(s, 1 | 2 << 2);
    }
}
