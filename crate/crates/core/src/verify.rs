//! Randomized and exhaustive property suites for the Fourier and matching
//! inequalities, shared by the CLI `verify` command and the acceptance tests.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_rational::Ratio;
use rand::Rng;
use serde::Serialize;

use crate::commlab::{fourier_identity_gap, preimage_probability, PreimageMode};
use crate::error::{Error, Result};
use crate::fourier::{
    dft, hypercontractive_rho, level_mass_check, noise_operator, norm2_sq, norm_q,
    weighted_sum_check, FunctionTable,
};
use crate::seed::derive_rng;
use crate::zp::{checked_pow, sample_matching, ZpVector};

/// Outcome of one property over many cases.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyReport {
    pub name: String,
    pub cases: usize,
    pub violations: usize,
    /// Largest observed `lhs - rhs` (or error, for identities).
    pub worst: f64,
}

impl PropertyReport {
    fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            cases: 0,
            violations: 0,
            worst: f64::NEG_INFINITY,
        }
    }

    fn record(&mut self, excess: f64, ok: bool) {
        self.cases += 1;
        self.worst = self.worst.max(excess);
        if !ok {
            self.violations += 1;
        }
    }

    pub fn passed(&self) -> bool {
        self.cases > 0 && self.violations == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Parseval,
    Hypercontractivity,
    WeightedSum,
    LevelMass,
    Preimage,
    FourierIdentity,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Parseval,
        Suite::Hypercontractivity,
        Suite::WeightedSum,
        Suite::LevelMass,
        Suite::Preimage,
        Suite::FourierIdentity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Parseval => "parseval",
            Suite::Hypercontractivity => "hypercontractivity",
            Suite::WeightedSum => "lemma3",
            Suite::LevelMass => "level-mass",
            Suite::Preimage => "lemma4",
            Suite::FourierIdentity => "lemma5-identity",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown suite `{s}`")))
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A random subset of `Z_p^n`, drawn from a mix of families so that both
/// structured sets (large Fourier mass at low levels) and unstructured ones
/// are exercised: i.i.d. membership, subcubes, affine hyperplanes and
/// intersections of those.
pub fn random_subset<R: Rng + ?Sized>(p: u32, n: usize, rng: &mut R) -> Result<FunctionTable> {
    let len = checked_pow(p, n).ok_or_else(|| Error::Capacity(format!("{p}^{n} points")))?;
    let mut members = match rng.random_range(0..4) {
        0 => {
            let density = rng.random_range(0.0..1.0f64).powi(3);
            (0..len)
                .map(|_| rng.random_bool(density))
                .collect::<Vec<_>>()
        }
        1 => {
            let fixed: Vec<Option<u32>> = (0..n)
                .map(|_| rng.random_bool(0.4).then(|| rng.random_range(0..p)))
                .collect();
            (0..len)
                .map(|i| {
                    let x = ZpVector::from_index(p, n, i).expect("index in range");
                    fixed
                        .iter()
                        .enumerate()
                        .all(|(j, f)| f.is_none_or(|v| x.get(j) == v))
                })
                .collect()
        }
        _ => {
            let planes = rng.random_range(1..=3usize.min(n));
            let constraints: Vec<(ZpVector, u32)> = (0..planes)
                .map(|_| Ok((ZpVector::random(p, n, rng)?, rng.random_range(0..p))))
                .collect::<Result<_>>()?;
            (0..len)
                .map(|i| {
                    let x = ZpVector::from_index(p, n, i).expect("index in range");
                    constraints
                        .iter()
                        .all(|(a, b)| a.dot(&x).expect("same length") == *b)
                })
                .collect()
        }
    };
    if !members.iter().any(|&b| b) {
        let i = rng.random_range(0..len);
        members[i] = true;
    }
    FunctionTable::from_membership(p, n, &members)
}

/// Random complex-valued function on `Z_p^n`.
pub fn random_function<R: Rng + ?Sized>(p: u32, n: usize, rng: &mut R) -> Result<FunctionTable> {
    let len = checked_pow(p, n).ok_or_else(|| Error::Capacity(format!("{p}^{n} points")))?;
    let values = (0..len)
        .map(|_| {
            num_complex::Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
        .collect();
    FunctionTable::new(p, n, values)
}

/// Dimensions with `p^n <= max_len`, smallest first.
pub fn dimensions_up_to(p: u32, max_len: usize) -> Vec<usize> {
    (1..)
        .take_while(|&n| checked_pow(p, n).is_some_and(|l| l <= max_len))
        .collect()
}

/// `|‖f‖₂² - Σ|f̂|²| <= tol` for `per_shape` random functions of every shape.
pub fn parseval<R: Rng + ?Sized>(
    shapes: &[(u32, usize)],
    per_shape: usize,
    tol: f64,
    rng: &mut R,
) -> Result<PropertyReport> {
    let mut report = PropertyReport::new("parseval");
    for &(p, n) in shapes {
        for _ in 0..per_shape {
            let f = random_function(p, n, rng)?;
            let err = (norm2_sq(&f) - dft(&f).energy()).abs();
            report.record(err, err <= tol);
        }
    }
    Ok(report)
}

/// `‖T_ρ f‖₂ <= ‖f‖_q` for indicators, with the extremal `ρ` for each `q`.
pub fn hypercontractivity<R: Rng + ?Sized>(
    shapes: &[(u32, usize)],
    sets: usize,
    qs: &[f64],
    slack: f64,
    rng: &mut R,
) -> Result<PropertyReport> {
    let mut report = PropertyReport::new("hypercontractivity");
    for i in 0..sets {
        let (p, n) = shapes[i % shapes.len()];
        let f = random_subset(p, n, rng)?;
        for &q in qs {
            let lhs = norm2_sq(&noise_operator(&f, hypercontractive_rho(q, p)?)?).sqrt();
            let rhs = norm_q(&f, q)?;
            report.record(lhs - rhs, lhs <= rhs + slack);
        }
    }
    Ok(report)
}

/// `Σ δ^{|z|}|f̂(z)|² <= (|A|/p^n)^{2/(1+pδ)}` on the grid `δ ∈ {0, 1/4p, 1/2p, 1/p}`.
pub fn weighted_sum<R: Rng + ?Sized>(
    shapes: &[(u32, usize)],
    sets: usize,
    slack: f64,
    rng: &mut R,
) -> Result<PropertyReport> {
    let mut report = PropertyReport::new("lemma3");
    for i in 0..sets {
        let (p, n) = shapes[i % shapes.len()];
        let f = random_subset(p, n, rng)?;
        let pf = f64::from(p);
        for delta in [0.0, 1.0 / (4.0 * pf), 1.0 / (2.0 * pf), 1.0 / pf] {
            let check = weighted_sum_check(&f, delta)?;
            report.record(check.excess(), check.holds(slack));
        }
    }
    Ok(report)
}

/// Normalized level mass against `(4√2 p c/k)^k` with `c = log₂(p^n/|A|)`, for
/// every even `k <= min(4c, n)`.
pub fn level_mass<R: Rng + ?Sized>(
    shapes: &[(u32, usize)],
    sets: usize,
    slack: f64,
    rng: &mut R,
) -> Result<PropertyReport> {
    let mut report = PropertyReport::new("level-mass");
    for i in 0..sets {
        let (p, n) = shapes[i % shapes.len()];
        let f = random_subset(p, n, rng)?;
        let c = (f.len() as f64 / f.support_size()? as f64).log2();
        let top = ((4.0 * c + 1e-9).floor() as usize).min(n);
        for k in (0..=top).step_by(2) {
            let check = level_mass_check(&f, k, c.max(k as f64 / 4.0))?;
            report.record(check.excess(), check.holds(slack));
        }
    }
    Ok(report)
}

/// Exhaustive over `x ∈ Z_p^n`, `n <= max_n`, `1 <= r <= min(max_r, n/2)`:
/// the enumerated preimage probability is 0 for odd weight, at most the
/// binomial ratio for even weight, and equal to it when the nonzero entries of
/// `x` coincide. Exact rationals; `worst` is the largest violation as `f64`.
pub fn preimage_exhaustive(primes: &[u32], max_n: usize, max_r: usize) -> Result<PropertyReport> {
    let mut report = PropertyReport::new("lemma4");
    for &p in primes {
        for n in 1..=max_n {
            for r in 1..=max_r.min(n / 2) {
                for idx in 0..checked_pow(p, n).expect("small") {
                    let x = ZpVector::from_index(p, n, idx)?;
                    let exact = preimage_probability(&x, r, PreimageMode::Exact)?;
                    let bound = preimage_probability(&x, r, PreimageMode::Formula)?;
                    let k = x.weight();
                    let zero = Ratio::from_integer(BigUint::from(0u32));
                    let ok = if k % 2 == 1 {
                        exact == zero
                    } else if uniform_nonzero(&x) {
                        exact == bound
                    } else {
                        exact <= bound
                    };
                    let excess =
                        crate::commlab::ratio_to_f64(&exact) - crate::commlab::ratio_to_f64(&bound);
                    report.record(excess, ok);
                }
            }
        }
    }
    Ok(report)
}

fn uniform_nonzero(x: &ZpVector) -> bool {
    let mut nonzero = x.entries().iter().filter(|&&e| e != 0);
    match nonzero.next() {
        Some(first) => nonzero.all(|e| e == first),
        None => true,
    }
}

/// `max_z |p̂_M(z) - (p^n/(|A|p^r)) f̂(M^T z)| <= tol` for random `(A, M)`.
pub fn fourier_identity<R: Rng + ?Sized>(
    shapes: &[(u32, usize)],
    pairs: usize,
    tol: f64,
    rng: &mut R,
) -> Result<PropertyReport> {
    let mut report = PropertyReport::new("lemma5-identity");
    for i in 0..pairs {
        let (p, n) = shapes[i % shapes.len()];
        let a = random_subset(p, n, rng)?;
        let r = rng.random_range(1..=n / 2);
        let m = sample_matching(n, r, rng)?;
        let gap = fourier_identity_gap(&a, &m)?;
        report.record(gap, gap <= tol);
    }
    Ok(report)
}

/// Runs a suite with its desk-scale defaults. Each suite draws from its own
/// generator derived from `seed`.
pub fn run_suite(suite: Suite, seed: u64) -> Result<PropertyReport> {
    let mut rng = derive_rng(seed, suite.name(), 0);
    let small: Vec<(u32, usize)> = [2u32, 3]
        .into_iter()
        .flat_map(|p| {
            dimensions_up_to(p, 256)
                .into_iter()
                .skip(1)
                .map(move |n| (p, n))
        })
        .collect();
    match suite {
        Suite::Parseval => {
            let shapes: Vec<(u32, usize)> = [2u32, 3, 5]
                .into_iter()
                .flat_map(|p| dimensions_up_to(p, 4096).into_iter().map(move |n| (p, n)))
                .collect();
            parseval(&shapes, 20, 1e-9, &mut rng)
        }
        Suite::Hypercontractivity => {
            hypercontractivity(&small, 100, &[1.25, 1.5, 1.75], 1e-12, &mut rng)
        }
        Suite::WeightedSum => weighted_sum(&small, 200, 1e-12, &mut rng),
        Suite::LevelMass => level_mass(&small, 200, 1e-12, &mut rng),
        Suite::Preimage => preimage_exhaustive(&[2, 3], 6, 3),
        Suite::FourierIdentity => fourier_identity(&small, 50, 1e-9, &mut rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::master_rng;

    #[test]
    fn suite_names_round_trip() {
        for suite in Suite::ALL {
            assert_eq!(suite.name().parse::<Suite>().unwrap(), suite);
        }
        assert!("lemma0".parse::<Suite>().is_err());
    }

    #[test]
    fn random_subsets_are_nonempty_indicators() {
        let mut rng = master_rng(1);
        for _ in 0..50 {
            let f = random_subset(3, 4, &mut rng).unwrap();
            assert!(f.is_indicator());
            assert!(f.support_size().unwrap() >= 1);
        }
    }

    #[test]
    fn dimension_ranges() {
        assert_eq!(dimensions_up_to(2, 4096), (1..=12).collect::<Vec<_>>());
        assert_eq!(dimensions_up_to(5, 4096), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn uniform_nonzero_detection() {
        assert!(uniform_nonzero(&ZpVector::new(3, vec![0, 2, 2]).unwrap()));
        assert!(!uniform_nonzero(&ZpVector::new(3, vec![1, 2, 0]).unwrap()));
        assert!(uniform_nonzero(&ZpVector::zeros(3, 3).unwrap()));
    }

    #[test]
    fn default_suites_pass() {
        for suite in Suite::ALL {
            let report = run_suite(suite, 7).unwrap();
            assert!(report.passed(), "{report:?}");
        }
    }

    #[test]
    fn a_false_property_is_reported() {
        let mut rng = master_rng(2);
        let report = parseval(&[(2, 3)], 5, -1.0, &mut rng).unwrap();
        assert_eq!((report.cases, report.violations), (5, 5));
        assert!(!report.passed());
    }
}
