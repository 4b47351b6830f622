//! The communication laboratory.
//!
//! Exact conditional distributions `p_M(w) = |{x ∈ A : Mx = w}| / |A|`, total
//! variation distance, matching-preimage probabilities, Monte Carlo simulation
//! of one-way hidden-matching protocols with Bob's MAP rule, and the stage-wise
//! hybrid experiment together with the reduction protocol built on it.
//!
//! Distances between memory-state laws are plug-in estimates from sampled
//! runs. The plug-in estimate is biased upwards; every such estimate is
//! reported with a bootstrap standard error (200 resamples) and an upper bound
//! on its bias, `½ Σ_s (√(p̂_s(1-p̂_s)/N₁) + √(q̂_s(1-q̂_s)/N₂))`.

use std::collections::HashMap;

use num_bigint::BigUint;
use num_complex::Complex64;
use num_integer::binomial;
use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, RngCore};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fourier::{dft, FunctionTable, MAX_TABLE_LEN};
use crate::instance::{sample_hm, sample_n_stage, sample_y_stage, Constraint, Dist, Label};
use crate::seed::{derive_rng, LabRng};
use crate::streaming::MemoryBoundedAlgorithm;
use crate::zp::{
    check_modulus, checked_pow, count_matchings, enumerate_matchings, sample_matching, Matching,
    ZpVector,
};

/// Probability mass tolerance of a [`DistributionTable`].
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Exact mode of [`expected_tvd`] refuses more matchings than this.
pub const EXACT_MATCHING_LIMIT: u64 = 100_000;

/// Exact mode of [`preimage_probability`] enumerates matchings up to this many vertices.
pub const EXACT_PREIMAGE_MAX_N: usize = 10;

/// Minimum number of runs per side in the hybrid and reduction experiments.
pub const MIN_HYBRID_TRIALS: usize = 10_000;

/// Bootstrap resamples behind every reported plug-in standard error.
pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// A finite distribution over outcomes `0..len`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistributionTable {
    probs: Vec<f64>,
}

impl DistributionTable {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|&q| q.is_nan() || q < 0.0) {
            return Err(Error::Domain("probabilities must be nonnegative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::Domain(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { probs })
    }

    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::Domain("no observations".into()));
        }
        Self::new(counts.iter().map(|&c| c as f64 / total as f64).collect())
    }

    pub fn uniform(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::Domain(
                "uniform distribution over no outcomes".into(),
            ));
        }
        Ok(Self {
            probs: vec![1.0 / len as f64; len],
        })
    }

    pub fn point_mass(len: usize, outcome: usize) -> Result<Self> {
        if outcome >= len {
            return Err(Error::Domain(format!("outcome {outcome} outside 0..{len}")));
        }
        let mut probs = vec![0.0; len];
        probs[outcome] = 1.0;
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// `½ Σ |d1 - d2|`.
pub fn tvd(d1: &DistributionTable, d2: &DistributionTable) -> Result<f64> {
    if d1.len() != d2.len() {
        return Err(Error::Dimension(format!(
            "outcome sets differ: {} vs {} outcomes",
            d1.len(),
            d2.len()
        )));
    }
    Ok(0.5
        * d1.probs
            .iter()
            .zip(&d2.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>())
}

fn powers_of(p: u32, count: usize) -> Vec<usize> {
    std::iter::successors(Some(1usize), |&acc| Some(acc * p as usize))
        .take(count)
        .collect()
}

fn digit(index: usize, power: usize, p: u32) -> usize {
    (index / power) % p as usize
}

fn check_shapes(a: &FunctionTable, m: &Matching) -> Result<Vec<bool>> {
    if m.n() != a.n() {
        return Err(Error::Dimension(format!(
            "matching on {} vertices with a set in Z_p^{}",
            m.n(),
            a.n()
        )));
    }
    let members = a.members()?;
    if !members.iter().any(|&b| b) {
        return Err(Error::Domain("the set A is empty".into()));
    }
    match checked_pow(a.p(), m.size()) {
        Some(len) if len <= MAX_TABLE_LEN => Ok(members),
        _ => Err(Error::Capacity(format!(
            "{}^{} outcomes for w",
            a.p(),
            m.size()
        ))),
    }
}

/// Law of `w = Mx` for `x` uniform in `A`, over `Z_p^r` in mixed-radix order
/// (edge 0 least significant).
pub fn conditional_dist(a: &FunctionTable, m: &Matching) -> Result<DistributionTable> {
    let members = check_shapes(a, m)?;
    let p = a.p();
    let x_pow = powers_of(p, a.n());
    let w_pow = powers_of(p, m.size());
    let mut counts = vec![0u64; checked_pow(p, m.size()).unwrap_or(0)];
    for (idx, _) in members.iter().enumerate().filter(|(_, &b)| b) {
        let w: usize = m
            .edges()
            .iter()
            .zip(&w_pow)
            .map(|(&(u, v), &wp)| {
                ((digit(idx, x_pow[u], p) + digit(idx, x_pow[v], p)) % p as usize) * wp
            })
            .sum();
        counts[w] += 1;
    }
    DistributionTable::from_counts(&counts)
}

/// `max_z |p̂_M(z) - (p^n / (|A| p^r)) f̂(M^T z)|`.
pub fn fourier_identity_gap(a: &FunctionTable, m: &Matching) -> Result<f64> {
    let pm = conditional_dist(a, m)?;
    let (p, r) = (a.p(), m.size());
    let pm_hat = dft(&FunctionTable::from_real(p, r, pm.probs)?);
    let f_hat = dft(a);
    let scale = a.len() as f64 / (a.support_size()? as f64 * pm_hat.coefficients().len() as f64);
    let mut worst: f64 = 0.0;
    for (zi, &coefficient) in pm_hat.coefficients().iter().enumerate() {
        let z = ZpVector::from_index(p, r, zi)?;
        let lifted = m.apply_transpose(&z)?;
        let predicted: Complex64 = f_hat.coefficients()[lifted.to_index()] * scale;
        worst = worst.max((coefficient - predicted).norm());
    }
    Ok(worst)
}

/// How matchings are averaged over.
pub enum TvdMode<'a> {
    /// Every matching of the requested size.
    Exact,
    /// Independent uniform matchings.
    MonteCarlo {
        trials: usize,
        rng: &'a mut dyn RngCore,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TvdEstimate {
    pub mean: f64,
    /// Standard error of the mean; 0 in exact mode.
    pub std_error: f64,
    pub matchings: usize,
}

/// `E_M ‖p_M - U‖_tvd` over uniform `r`-edge matchings.
pub fn expected_tvd(a: &FunctionTable, r: usize, mode: TvdMode<'_>) -> Result<TvdEstimate> {
    let n = a.n();
    let uniform = DistributionTable::uniform(
        checked_pow(a.p(), r).ok_or_else(|| Error::Capacity("p^r overflows".into()))?,
    )?;
    let exact = matches!(mode, TvdMode::Exact);
    let values = match mode {
        TvdMode::Exact => {
            let total = count_matchings(n, r)?;
            if total > BigUint::from(EXACT_MATCHING_LIMIT) {
                return Err(Error::Capacity(format!(
                    "{total} matchings exceeds the exact-mode limit of {EXACT_MATCHING_LIMIT}"
                )));
            }
            enumerate_matchings(n, r)?
                .iter()
                .map(|m| tvd(&conditional_dist(a, m)?, &uniform))
                .collect::<Result<Vec<_>>>()?
        }
        TvdMode::MonteCarlo { trials, rng } => {
            if trials < 2 {
                return Err(Error::Parameter(
                    "Monte Carlo mode needs at least 2 trials".into(),
                ));
            }
            (0..trials)
                .map(|_| {
                    tvd(
                        &conditional_dist(a, &sample_matching(n, r, &mut *rng)?)?,
                        &uniform,
                    )
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    let count = values.len() as f64;
    let mean = values.iter().sum::<f64>() / count;
    let std_error = if exact {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0);
        (var / count).sqrt()
    };
    Ok(TvdEstimate {
        mean,
        std_error,
        matchings: values.len(),
    })
}

/// Terms of the chain bounding `E_M ‖p_M - U‖_tvd`, all computed exactly over
/// every matching:
///
/// `(E tvd)² <= E tvd² <= p^{2r} E ‖p_M - U‖₂²
///   = (p^{2n}/|A|²) Σ_{x≠0} Pr_M[x ∈ im M^T] |f̂(x)|²
///  <= (p^{2n}/|A|²) Σ_{k even} C(r,k/2)/C(n,k) Σ_{|x|=k} |f̂(x)|²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TvdChain {
    pub mean_tvd: f64,
    pub mean_tvd_sq: f64,
    pub l2_term: f64,
    pub preimage_term: f64,
    pub binomial_term: f64,
}

impl TvdChain {
    /// Every link holds, with `slack` relative to the size of the terms.
    pub fn holds(&self, slack: f64) -> bool {
        let tol = slack * self.binomial_term.abs().max(1.0);
        self.mean_tvd * self.mean_tvd <= self.mean_tvd_sq + tol
            && self.mean_tvd_sq <= self.l2_term + tol
            && (self.l2_term - self.preimage_term).abs() <= tol
            && self.preimage_term <= self.binomial_term + tol
    }
}

pub fn tvd_chain(a: &FunctionTable, r: usize) -> Result<TvdChain> {
    let (p, n) = (a.p(), a.n());
    let size = a.support_size()?;
    if size == 0 {
        return Err(Error::Domain("the set A is empty".into()));
    }
    let total = count_matchings(n, r)?;
    if total > BigUint::from(EXACT_MATCHING_LIMIT) {
        return Err(Error::Capacity(format!(
            "{total} matchings exceeds the exact-mode limit"
        )));
    }
    let matchings = enumerate_matchings(n, r)?;
    let w_len = checked_pow(p, r).ok_or_else(|| Error::Capacity("p^r overflows".into()))?;
    let uniform = DistributionTable::uniform(w_len)?;
    let f_hat = dft(a);
    let mut images = vec![0u64; a.len()];
    let (mut sum_tvd, mut sum_tvd_sq, mut sum_l2) = (0.0, 0.0, 0.0);
    for m in &matchings {
        let pm = conditional_dist(a, m)?;
        let d = tvd(&pm, &uniform)?;
        sum_tvd += d;
        sum_tvd_sq += d * d;
        let spectrum = dft(&FunctionTable::from_real(p, r, pm.probs)?);
        sum_l2 += spectrum.coefficients()[1..]
            .iter()
            .map(|c| c.norm_sqr())
            .sum::<f64>();
        for zi in 1..w_len {
            let x = m.apply_transpose(&ZpVector::from_index(p, r, zi)?)?;
            images[x.to_index()] += 1;
        }
    }
    let count = matchings.len() as f64;
    let amplification = (a.len() as f64 / size as f64).powi(2);
    let preimage_term = amplification
        * images
            .iter()
            .zip(f_hat.coefficients())
            .map(|(&hits, c)| hits as f64 / count * c.norm_sqr())
            .sum::<f64>();
    let levels = crate::fourier::level_masses(&f_hat);
    let binomial_term = amplification
        * (1..=(2 * r).min(n) / 2)
            .map(|half| {
                let k = 2 * half;
                let ratio =
                    binomial(r as u64, half as u64) as f64 / binomial(n as u64, k as u64) as f64;
                ratio * levels[k]
            })
            .sum::<f64>();
    Ok(TvdChain {
        mean_tvd: sum_tvd / count,
        mean_tvd_sq: sum_tvd_sq / count,
        l2_term: (w_len as f64).powi(2) * sum_l2 / count,
        preimage_term,
        binomial_term,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PreimageMode {
    /// Fraction of all matchings for which `M^T z = x` is solvable.
    Exact,
    /// The binomial-ratio bound `C(r, k/2) / C(n, k)`, `k = |x|`.
    Formula,
}

/// Probability over a uniform `r`-edge matching that `x` lies in the image of `M^T`.
pub fn preimage_probability(x: &ZpVector, r: usize, mode: PreimageMode) -> Result<Ratio<BigUint>> {
    let n = x.len();
    let total = count_matchings(n, r)?;
    let k = x.weight();
    match mode {
        PreimageMode::Formula => {
            if k % 2 == 1 {
                return Ok(Ratio::zero());
            }
            let half = k / 2;
            let numerator = if half > r {
                BigUint::zero()
            } else {
                binomial(BigUint::from(r), BigUint::from(half))
            };
            Ok(Ratio::new(
                numerator,
                binomial(BigUint::from(n), BigUint::from(k)),
            ))
        }
        PreimageMode::Exact => {
            if n > EXACT_PREIMAGE_MAX_N {
                return Err(Error::Capacity(format!(
                    "exact preimage enumeration supports n <= {EXACT_PREIMAGE_MAX_N}, got {n}"
                )));
            }
            if k % 2 == 1 {
                return Ok(Ratio::zero());
            }
            let hits = enumerate_matchings(n, r)?
                .iter()
                .filter(|m| admits_preimage(m, x))
                .count();
            Ok(Ratio::new(BigUint::from(hits), total))
        }
    }
}

/// `∃z: M^T z = x` iff both endpoints of every edge agree and every unmatched
/// vertex is 0.
fn admits_preimage(m: &Matching, x: &ZpVector) -> bool {
    let mut matched = vec![false; x.len()];
    for &(u, v) in m.edges() {
        if x.get(u) != x.get(v) {
            return false;
        }
        matched[u] = true;
        matched[v] = true;
    }
    matched
        .iter()
        .zip(x.entries())
        .all(|(&mt, &e)| mt || e == 0)
}

/// Alice's message as a partition of `Z_p^n` into classes `0..2^bits`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MessagePartition {
    p: u32,
    n: usize,
    bits: u32,
    class_of: Vec<u32>,
    members: Vec<Vec<u32>>,
}

impl MessagePartition {
    pub fn new(p: u32, n: usize, bits: u32, class_of: Vec<u32>) -> Result<Self> {
        check_modulus(p)?;
        let len = checked_pow(p, n)
            .filter(|&l| l <= MAX_TABLE_LEN)
            .ok_or_else(|| Error::Capacity(format!("{p}^{n} inputs")))?;
        if class_of.len() != len {
            return Err(Error::Dimension(format!("partition needs {len} entries")));
        }
        if bits > 31 {
            return Err(Error::Parameter("at most 31 message bits".into()));
        }
        if let Some(&bad) = class_of.iter().find(|&&c| c >> bits != 0) {
            return Err(Error::Domain(format!(
                "class {bad} does not fit in {bits} bits"
            )));
        }
        let mut members = vec![Vec::new(); 1 << bits];
        for (idx, &c) in class_of.iter().enumerate() {
            members[c as usize].push(idx as u32);
        }
        Ok(Self {
            p,
            n,
            bits,
            class_of,
            members,
        })
    }

    /// Zero-bit message.
    pub fn constant(p: u32, n: usize) -> Result<Self> {
        let len = checked_pow(p, n).ok_or_else(|| Error::Capacity(format!("{p}^{n} inputs")))?;
        Self::new(p, n, 0, vec![0; len])
    }

    /// Alice sends `x` itself.
    pub fn identity(p: u32, n: usize) -> Result<Self> {
        let len = checked_pow(p, n).ok_or_else(|| Error::Capacity(format!("{p}^{n} inputs")))?;
        let bits = usize::BITS - (len - 1).leading_zeros();
        Self::new(p, n, bits, (0..len as u32).collect())
    }

    /// Alice sends the first `c` coordinates of `x`.
    pub fn prefix(p: u32, n: usize, c: usize) -> Result<Self> {
        if c > n {
            return Err(Error::Parameter(format!(
                "prefix of {c} coordinates with n={n}"
            )));
        }
        let len = checked_pow(p, n).ok_or_else(|| Error::Capacity(format!("{p}^{n} inputs")))?;
        let classes = checked_pow(p, c).expect("p^c <= p^n");
        let bits = usize::BITS - (classes - 1).leading_zeros();
        Self::new(
            p,
            n,
            bits,
            (0..len).map(|idx| (idx % classes) as u32).collect(),
        )
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn class_of(&self, x: &ZpVector) -> u32 {
        self.class_of[x.to_index()]
    }

    /// Inputs (as mixed-radix indices) that send message `class`.
    pub fn members(&self, class: u32) -> &[u32] {
        &self.members[class as usize]
    }
}

/// Bob's MAP rule given Alice's class, his matching and his `w`: accept iff
/// `Pr[w | class, YES] >= Pr[w | NO] = p^{-r}`.
fn map_accepts(
    partition: &MessagePartition,
    class: u32,
    m: &Matching,
    w: &ZpVector,
    powers: &[usize],
) -> bool {
    let p = partition.p;
    let members = partition.members(class);
    let consistent = members
        .iter()
        .filter(|&&idx| {
            m.edges().iter().zip(w.entries()).all(|(&(u, v), &we)| {
                (digit(idx as usize, powers[u], p) + digit(idx as usize, powers[v], p)) % p as usize
                    == we as usize
            })
        })
        .count();
    let outcomes = checked_pow(p, m.size()).unwrap_or(usize::MAX);
    consistent.saturating_mul(outcomes) >= members.len()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AdvantageEstimate {
    /// `|P_YES[accept] - P_NO[accept]|`.
    pub advantage: f64,
    pub std_error: f64,
    pub accept_yes: f64,
    pub accept_no: f64,
    pub trials: usize,
}

impl AdvantageEstimate {
    fn from_counts(yes: usize, no: usize, trials: usize) -> Self {
        let t = trials as f64;
        let (py, pn) = (yes as f64 / t, no as f64 / t);
        Self {
            advantage: (py - pn).abs(),
            std_error: ((py * (1.0 - py) + pn * (1.0 - pn)) / t).sqrt(),
            accept_yes: py,
            accept_no: pn,
            trials,
        }
    }
}

/// Simulates `trials` YES and `trials` NO rounds of the one-way protocol in
/// which Alice sends her class and Bob applies the MAP rule. Round `t` draws
/// from a generator derived from one master seed taken from `rng`, so equally
/// seeded calls share their random inputs across partitions.
pub fn protocol_advantage<R: Rng + ?Sized>(
    partition: &MessagePartition,
    r: usize,
    trials: usize,
    rng: &mut R,
) -> Result<AdvantageEstimate> {
    if trials == 0 {
        return Err(Error::Parameter("at least one trial is required".into()));
    }
    let (p, n) = (partition.p, partition.n);
    if 2 * r > n {
        return Err(Error::Parameter(format!(
            "matchings of {r} edges need 2r <= n, n={n}"
        )));
    }
    let master = rng.next_u64();
    let powers = powers_of(p, n);
    let mut accepted = [0usize; 2];
    for (slot, (label, tag)) in [(Label::Yes, "hm-yes"), (Label::No, "hm-no")]
        .into_iter()
        .enumerate()
    {
        for t in 0..trials {
            let mut trial_rng = derive_rng(master, tag, t as u64);
            let hm = sample_hm(p, n, r, label, &mut trial_rng)?;
            let class = partition.class_of(hm.x());
            if map_accepts(partition, class, hm.matching(), hm.w(), &powers) {
                accepted[slot] += 1;
            }
        }
    }
    Ok(AdvantageEstimate::from_counts(
        accepted[0],
        accepted[1],
        trials,
    ))
}

/// Plug-in comparison of two samples of memory states.
struct StatePair {
    a: Vec<u32>,
    b: Vec<u32>,
    support: usize,
}

impl StatePair {
    fn new(a: &[u32], b: &[u32]) -> Self {
        let mut ids: HashMap<u32, u32> = HashMap::new();
        let mut compact = |s: &u32| {
            let next = ids.len() as u32;
            *ids.entry(*s).or_insert(next)
        };
        let a: Vec<u32> = a.iter().map(&mut compact).collect();
        let b: Vec<u32> = b.iter().map(&mut compact).collect();
        Self {
            a,
            b,
            support: ids.len(),
        }
    }

    fn counts(&self, sample: &[u32]) -> Vec<f64> {
        let mut counts = vec![0.0; self.support];
        for &s in sample {
            counts[s as usize] += 1.0;
        }
        counts
    }

    fn tvd_of(&self, a: &[u32], b: &[u32]) -> f64 {
        let (ca, cb) = (self.counts(a), self.counts(b));
        let (na, nb) = (a.len() as f64, b.len() as f64);
        0.5 * ca
            .iter()
            .zip(&cb)
            .map(|(x, y)| (x / na - y / nb).abs())
            .sum::<f64>()
    }

    fn tvd(&self) -> f64 {
        self.tvd_of(&self.a, &self.b)
    }

    fn bias_bound(&self) -> f64 {
        let (ca, cb) = (self.counts(&self.a), self.counts(&self.b));
        let (na, nb) = (self.a.len() as f64, self.b.len() as f64);
        0.5 * ca
            .iter()
            .zip(&cb)
            .map(|(x, y)| {
                let (pa, pb) = (x / na, y / nb);
                (pa * (1.0 - pa) / na).sqrt() + (pb * (1.0 - pb) / nb).sqrt()
            })
            .sum::<f64>()
    }

    fn bootstrap_se(&self, rng: &mut LabRng) -> f64 {
        let mut ra = vec![0u32; self.a.len()];
        let mut rb = vec![0u32; self.b.len()];
        let values: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
            .map(|_| {
                ra.iter_mut()
                    .for_each(|s| *s = self.a[rng.random_range(0..self.a.len())]);
                rb.iter_mut()
                    .for_each(|s| *s = self.b[rng.random_range(0..self.b.len())]);
                self.tvd_of(&ra, &rb)
            })
            .collect();
        std_dev(&values)
    }
}

fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// A plug-in TVD between two samples of memory states.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PluginTvd {
    pub value: f64,
    /// Bootstrap standard error.
    pub std_error: f64,
    /// Upper bound on `E[value] - true TVD` (the estimate is never biased downwards).
    pub bias_bound: f64,
}

fn plugin_tvd(a: &[u32], b: &[u32], rng: &mut LabRng) -> PluginTvd {
    let pair = StatePair::new(a, b);
    PluginTvd {
        value: pair.tvd(),
        std_error: pair.bootstrap_se(rng),
        bias_bound: pair.bias_bound(),
    }
}

fn check_stage_params(p: u32, n: usize, alpha_r: usize, trials: usize) -> Result<()> {
    check_modulus(p)?;
    if 2 * alpha_r > n {
        return Err(Error::Parameter(format!(
            "matchings of {alpha_r} edges need 2r <= n, n={n}"
        )));
    }
    if trials < MIN_HYBRID_TRIALS {
        return Err(Error::Parameter(format!(
            "at least {MIN_HYBRID_TRIALS} runs per side are required, got {trials}"
        )));
    }
    Ok(())
}

fn feed(
    alg: &dyn MemoryBoundedAlgorithm,
    mut state: u32,
    stage: &[Constraint],
    rng: &mut LabRng,
) -> Result<u32> {
    for c in stage {
        state = alg.transition(state, c, rng);
        if state as usize >= alg.state_space() {
            return Err(Error::Contract(format!(
                "state {state} escapes the declared {}-bit budget",
                alg.bits()
            )));
        }
    }
    Ok(state)
}

/// States after each of stages `0..=k` for one run drawn from `dist`.
fn run_family(
    alg: &dyn MemoryBoundedAlgorithm,
    p: u32,
    n: usize,
    alpha_r: usize,
    k: usize,
    dist: Dist,
    rng: &mut LabRng,
) -> Result<Vec<u32>> {
    let hidden = match dist {
        Dist::Y => Some(ZpVector::random(p, n, rng)?),
        Dist::N => None,
    };
    let mut states = Vec::with_capacity(k + 1);
    let mut state = 0;
    states.push(state);
    for _ in 0..k {
        let stage = match &hidden {
            Some(z) => sample_y_stage(z, alpha_r, rng)?,
            None => sample_n_stage(p, n, alpha_r, rng)?,
        };
        state = feed(alg, state, &stage, rng)?;
        states.push(state);
    }
    Ok(states)
}

/// `samples[j][t]`: state after stage `j` in run `t`.
#[allow(clippy::too_many_arguments)]
fn sample_runs(
    alg: &dyn MemoryBoundedAlgorithm,
    p: u32,
    n: usize,
    alpha_r: usize,
    k: usize,
    dist: Dist,
    trials: usize,
    master: u64,
    tag: &str,
) -> Result<Vec<Vec<u32>>> {
    let mut by_stage = vec![Vec::with_capacity(trials); k + 1];
    for t in 0..trials {
        let states = run_family(
            alg,
            p,
            n,
            alpha_r,
            k,
            dist,
            &mut derive_rng(master, tag, t as u64),
        )?;
        for (j, s) in states.into_iter().enumerate() {
            by_stage[j].push(s);
        }
    }
    Ok(by_stage)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HybridReport {
    pub trials: usize,
    /// `‖S^Y_j - S^N_j‖_tvd` for `j = 0..=k`.
    pub stages: Vec<PluginTvd>,
    /// `tvd_{j+1} - tvd_j` for `j = 0..k`.
    pub increments: Vec<f64>,
    /// Index with the largest increment.
    pub informative_index: usize,
}

impl HybridReport {
    pub fn tvd(&self) -> Vec<f64> {
        self.stages.iter().map(|s| s.value).collect()
    }

    pub fn max_increment(&self) -> f64 {
        self.increments
            .get(self.informative_index)
            .copied()
            .unwrap_or(0.0)
    }
}

/// Runs `alg` on `trials` fresh `Y` streams and `trials` fresh `N` streams of
/// `k` stages and measures the distance between the memory-state laws after
/// every stage.
pub fn hybrid_experiment<R: Rng + ?Sized>(
    alg: &dyn MemoryBoundedAlgorithm,
    p: u32,
    n: usize,
    alpha_r: usize,
    k: usize,
    trials: usize,
    rng: &mut R,
) -> Result<HybridReport> {
    check_stage_params(p, n, alpha_r, trials)?;
    let master = rng.next_u64();
    let yes = sample_runs(alg, p, n, alpha_r, k, Dist::Y, trials, master, "hybrid-y")?;
    let no = sample_runs(alg, p, n, alpha_r, k, Dist::N, trials, master, "hybrid-n")?;
    let stages: Vec<PluginTvd> = (0..=k)
        .map(|j| {
            plugin_tvd(
                &yes[j],
                &no[j],
                &mut derive_rng(master, "bootstrap", j as u64),
            )
        })
        .collect();
    let increments: Vec<f64> = stages.windows(2).map(|w| w[1].value - w[0].value).collect();
    let informative_index = increments
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (j, &d)| {
            if d > best.1 {
                (j, d)
            } else {
                best
            }
        })
        .0;
    Ok(HybridReport {
        trials,
        stages,
        increments,
        informative_index,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReductionReport {
    pub j_star: usize,
    /// Bob's MAP advantage on fresh evaluation rounds.
    pub advantage: AdvantageEstimate,
    /// `‖S̃^YES - S̃^NO‖_tvd` on the tabulation rounds.
    pub tilde: PluginTvd,
    /// `‖S^Y_{j*} - S^N_{j*}‖_tvd` from plain runs.
    pub before: PluginTvd,
    /// `‖S^Y_{j*+1} - S^N_{j*+1}‖_tvd` from plain runs.
    pub after: PluginTvd,
    /// `‖S̃^NO - S^N_{j*+1}‖_tvd`.
    pub data_processing: PluginTvd,
}

impl ReductionReport {
    /// Measured informative-index gap `tvd_{j*+1} - tvd_{j*}`.
    pub fn gap(&self) -> f64 {
        self.after.value - self.before.value
    }

    pub fn gap_std_error(&self) -> f64 {
        self.after.std_error.hypot(self.before.std_error)
    }
}

/// Alice's half of a reduction round: `j_star` stages of the `Y` family with
/// the hidden assignment set to her input.
fn alice_state(
    alg: &dyn MemoryBoundedAlgorithm,
    x: &ZpVector,
    alpha_r: usize,
    j_star: usize,
    rng: &mut LabRng,
) -> Result<u32> {
    let mut state = 0;
    for _ in 0..j_star {
        let stage = sample_y_stage(x, alpha_r, rng)?;
        state = feed(alg, state, &stage, rng)?;
    }
    Ok(state)
}

/// Bob's stage: `x_u + x_v = w_e` for his matching, with `w = Mx` (YES) or uniform (NO).
fn bob_stage(
    x: &ZpVector,
    alpha_r: usize,
    label: Label,
    rng: &mut LabRng,
) -> Result<Vec<Constraint>> {
    match label {
        Label::Yes => sample_y_stage(x, alpha_r, rng),
        Label::No => sample_n_stage(x.p(), x.len(), alpha_r, rng),
    }
}

fn reduction_round(
    alg: &dyn MemoryBoundedAlgorithm,
    p: u32,
    n: usize,
    alpha_r: usize,
    j_star: usize,
    label: Label,
    rng: &mut LabRng,
) -> Result<u32> {
    let x = ZpVector::random(p, n, rng)?;
    let sent = alice_state(alg, &x, alpha_r, j_star, rng)?;
    let stage = bob_stage(&x, alpha_r, label, rng)?;
    feed(alg, sent, &stage, rng)
}

/// The protocol obtained from a streaming algorithm and a stage index `j_star`:
/// Alice feeds `j_star` planted stages built from her `x` and sends the
/// memory; Bob feeds one stage built from his `(M, w)` and accepts iff the
/// resulting state is at least as likely under YES as under NO. Bob's state
/// laws are tabulated from rounds drawn independently of the evaluation rounds.
pub fn reduction_protocol<R: Rng + ?Sized>(
    alg: &dyn MemoryBoundedAlgorithm,
    j_star: usize,
    p: u32,
    n: usize,
    alpha_r: usize,
    trials: usize,
    rng: &mut R,
) -> Result<ReductionReport> {
    check_stage_params(p, n, alpha_r, trials)?;
    let master = rng.next_u64();
    let rounds = |label: Label, tag: &str| -> Result<Vec<u32>> {
        (0..trials)
            .map(|t| {
                reduction_round(
                    alg,
                    p,
                    n,
                    alpha_r,
                    j_star,
                    label,
                    &mut derive_rng(master, tag, t as u64),
                )
            })
            .collect()
    };

    let tab_yes = rounds(Label::Yes, "tabulate-yes")?;
    let tab_no = rounds(Label::No, "tabulate-no")?;
    let mut law: HashMap<u32, (u32, u32)> = HashMap::new();
    for &s in &tab_yes {
        law.entry(s).or_default().0 += 1;
    }
    for &s in &tab_no {
        law.entry(s).or_default().1 += 1;
    }
    // equal tabulation sizes, so counts compare like probabilities
    let accepts = |s: u32| law.get(&s).is_none_or(|&(y, n)| y >= n);
    let eval_yes = rounds(Label::Yes, "evaluate-yes")?;
    let eval_no = rounds(Label::No, "evaluate-no")?;
    let advantage = AdvantageEstimate::from_counts(
        eval_yes.iter().filter(|&&s| accepts(s)).count(),
        eval_no.iter().filter(|&&s| accepts(s)).count(),
        trials,
    );

    let plain_y = sample_runs(
        alg,
        p,
        n,
        alpha_r,
        j_star + 1,
        Dist::Y,
        trials,
        master,
        "plain-y",
    )?;
    let plain_n = sample_runs(
        alg,
        p,
        n,
        alpha_r,
        j_star + 1,
        Dist::N,
        trials,
        master,
        "plain-n",
    )?;
    let boot = |i: u64| derive_rng(master, "reduction-bootstrap", i);
    Ok(ReductionReport {
        j_star,
        advantage,
        tilde: plugin_tvd(&tab_yes, &tab_no, &mut boot(0)),
        before: plugin_tvd(&plain_y[j_star], &plain_n[j_star], &mut boot(1)),
        after: plugin_tvd(&plain_y[j_star + 1], &plain_n[j_star + 1], &mut boot(2)),
        data_processing: plugin_tvd(&tab_no, &plain_n[j_star + 1], &mut boot(3)),
    })
}

/// Converts an exact probability to `f64` (for reporting).
pub fn ratio_to_f64(r: &Ratio<BigUint>) -> f64 {
    let (num, den) = (
        r.numer().to_f64().unwrap_or(f64::NAN),
        r.denom().to_f64().unwrap_or(f64::NAN),
    );
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::master_rng;
    use crate::streaming::{make_toy_algorithm, ToyKind};
    use proptest::prelude::*;
    use rand::{Rng, RngCore};

    fn random_set(p: u32, n: usize, density: f64, rng: &mut LabRng) -> FunctionTable {
        let len = checked_pow(p, n).unwrap();
        let mut members: Vec<bool> = (0..len).map(|_| rng.random_bool(density)).collect();
        let forced = rng.random_range(0..len);
        members[forced] = true;
        FunctionTable::from_membership(p, n, &members).unwrap()
    }

    #[test]
    fn tvd_examples() {
        let d = DistributionTable::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(tvd(&d, &d).unwrap(), 0.0);
        let point = DistributionTable::point_mass(9, 4).unwrap();
        let uniform = DistributionTable::uniform(9).unwrap();
        assert!((tvd(&point, &uniform).unwrap() - (1.0 - 1.0 / 9.0)).abs() < 1e-15);
        let a = DistributionTable::new(vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        let b = DistributionTable::new(vec![0.0, 0.0, 0.25, 0.75]).unwrap();
        assert_eq!(tvd(&a, &b).unwrap(), 1.0);
        assert!(tvd(&a, &uniform).is_err());
    }

    #[test]
    fn distribution_validation() {
        assert!(DistributionTable::new(vec![0.5, 0.4]).is_err());
        assert!(DistributionTable::new(vec![1.5, -0.5]).is_err());
        assert!(DistributionTable::new(vec![0.5, 0.5 + 1e-12]).is_ok());
    }

    proptest! {
        #[test]
        fn tvd_is_a_metric(seed in any::<u64>(), len in 1usize..12) {
            let mut rng = master_rng(seed);
            let mut random_dist = || {
                let w: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..1.0)).collect();
                let total: f64 = w.iter().sum();
                DistributionTable::new(w.into_iter().map(|x| x / total).collect()).unwrap()
            };
            let (a, b, c) = (random_dist(), random_dist(), random_dist());
            prop_assert!(tvd(&a, &a).unwrap().abs() < 1e-15);
            prop_assert!((tvd(&a, &b).unwrap() - tvd(&b, &a).unwrap()).abs() < 1e-15);
            prop_assert!(tvd(&a, &c).unwrap() <= tvd(&a, &b).unwrap() + tvd(&b, &c).unwrap() + 1e-12);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&tvd(&a, &b).unwrap()));
        }
    }

    #[test]
    fn full_set_gives_uniform_w() {
        let a = FunctionTable::indicator(3, 4, |_| true).unwrap();
        let m = Matching::new(4, [(0, 2), (1, 3)]).unwrap();
        let pm = conditional_dist(&a, &m).unwrap();
        assert!(tvd(&pm, &DistributionTable::uniform(9).unwrap()).unwrap() < 1e-15);
    }

    #[test]
    fn constrained_set_gives_point_mass() {
        let a = FunctionTable::indicator(3, 2, |x| (x.get(0) + x.get(1)) % 3 == 0).unwrap();
        let m = Matching::new(2, [(0, 1)]).unwrap();
        let pm = conditional_dist(&a, &m).unwrap();
        assert_eq!(pm.probs(), &[1.0, 0.0, 0.0]);
        let d = tvd(&pm, &DistributionTable::uniform(3).unwrap()).unwrap();
        assert!((d - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn conditional_dist_errors() {
        let empty = FunctionTable::indicator(2, 3, |_| false).unwrap();
        let m = Matching::new(3, [(0, 1)]).unwrap();
        assert!(matches!(
            conditional_dist(&empty, &m),
            Err(Error::Domain(_))
        ));
        let a = FunctionTable::indicator(2, 4, |_| true).unwrap();
        assert!(matches!(conditional_dist(&a, &m), Err(Error::Dimension(_))));
    }

    #[test]
    fn fourier_identity_on_random_pairs() {
        let mut rng = master_rng(1);
        for _ in 0..40 {
            let p = rng.random_range(2..5);
            let n = rng.random_range(2..=if p == 2 { 8 } else { 5 });
            let a = random_set(p, n, rng.random_range(0.05..0.9), &mut rng);
            let r = rng.random_range(1..=n / 2);
            let m = sample_matching(n, r, &mut rng).unwrap();
            let pm = conditional_dist(&a, &m).unwrap();
            assert!((pm.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(fourier_identity_gap(&a, &m).unwrap() <= 1e-9);
        }
    }

    #[test]
    fn expected_tvd_of_full_set_is_zero() {
        let a = FunctionTable::indicator(2, 6, |_| true).unwrap();
        assert!(expected_tvd(&a, 2, TvdMode::Exact).unwrap().mean < 1e-15);
        let mut rng = master_rng(2);
        let mc = expected_tvd(
            &a,
            2,
            TvdMode::MonteCarlo {
                trials: 50,
                rng: &mut rng,
            },
        )
        .unwrap();
        assert!(mc.mean < 1e-15);
    }

    #[test]
    fn expected_tvd_single_coordinate_set() {
        let a = FunctionTable::indicator(2, 4, |x| x.get(0) == 0).unwrap();
        let est = expected_tvd(&a, 1, TvdMode::Exact).unwrap();
        assert_eq!(est.matchings, 6);
        assert!(est.mean.abs() < 1e-15);
    }

    #[test]
    fn monte_carlo_agrees_with_exact() {
        let mut rng = master_rng(3);
        for _ in 0..20 {
            let a = random_set(2, 6, rng.random_range(0.02..0.3), &mut rng);
            let exact = expected_tvd(&a, 1, TvdMode::Exact).unwrap();
            let mc = expected_tvd(
                &a,
                1,
                TvdMode::MonteCarlo {
                    trials: 400,
                    rng: &mut rng,
                },
            )
            .unwrap();
            assert!(
                (mc.mean - exact.mean).abs() <= 3.0 * mc.std_error + 1e-12,
                "exact {} mc {} ± {}",
                exact.mean,
                mc.mean,
                mc.std_error
            );
        }
    }

    #[test]
    fn exact_mode_capacity() {
        let a = FunctionTable::indicator(2, 16, |_| true).unwrap();
        assert!(matches!(
            expected_tvd(&a, 4, TvdMode::Exact),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn tvd_chain_holds() {
        let mut rng = master_rng(4);
        for _ in 0..15 {
            let p = rng.random_range(2..4);
            let n = if p == 2 { 8 } else { 5 };
            let a = random_set(p, n, rng.random_range(0.05..0.6), &mut rng);
            for r in 1..=2 {
                let chain = tvd_chain(&a, r).unwrap();
                assert!(chain.holds(1e-9), "{chain:?}");
                assert!(
                    (chain.l2_term - chain.preimage_term).abs() <= 1e-9 * chain.l2_term.max(1.0)
                );
            }
        }
    }

    fn ratio(n: u64, d: u64) -> Ratio<BigUint> {
        Ratio::new(BigUint::from(n), BigUint::from(d))
    }

    #[test]
    fn preimage_examples() {
        let x = ZpVector::new(3, vec![1, 1, 0, 0]).unwrap();
        assert_eq!(
            preimage_probability(&x, 1, PreimageMode::Exact).unwrap(),
            ratio(1, 6)
        );
        assert_eq!(
            preimage_probability(&x, 1, PreimageMode::Formula).unwrap(),
            ratio(1, 6)
        );
        let x = ZpVector::new(3, vec![1, 2, 0, 0]).unwrap();
        assert_eq!(
            preimage_probability(&x, 1, PreimageMode::Exact).unwrap(),
            ratio(0, 1)
        );
        assert_eq!(
            preimage_probability(&x, 1, PreimageMode::Formula).unwrap(),
            ratio(1, 6)
        );
        let x = ZpVector::new(3, vec![1, 2, 2, 0, 0]).unwrap();
        assert_eq!(
            preimage_probability(&x, 2, PreimageMode::Exact).unwrap(),
            ratio(0, 1)
        );
        let zero = ZpVector::zeros(2, 6).unwrap();
        assert_eq!(
            preimage_probability(&zero, 2, PreimageMode::Exact).unwrap(),
            ratio(1, 1)
        );
        assert_eq!(
            preimage_probability(&zero, 2, PreimageMode::Formula).unwrap(),
            ratio(1, 1)
        );
        let big = ZpVector::zeros(2, 12).unwrap();
        assert!(matches!(
            preimage_probability(&big, 2, PreimageMode::Exact),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn partitions() {
        let c = MessagePartition::constant(2, 4).unwrap();
        assert_eq!((c.bits(), c.members(0).len()), (0, 16));
        let id = MessagePartition::identity(3, 2).unwrap();
        assert_eq!(id.bits(), 4);
        assert!((0..9).all(|i| id.members(i).len() == 1));
        let pre = MessagePartition::prefix(2, 4, 2).unwrap();
        assert_eq!(pre.bits(), 2);
        let x = ZpVector::new(2, vec![1, 0, 1, 1]).unwrap();
        assert_eq!(pre.class_of(&x), 1);
        assert!(MessagePartition::new(2, 2, 1, vec![0, 1, 2, 0]).is_err());
    }

    /// Oracle: exact law of Bob's observables `(class, M, w)` under YES and NO,
    /// by enumerating every `x`, matching and `w`.
    fn observable_laws(partition: &MessagePartition, r: usize) -> (Vec<f64>, Vec<f64>) {
        let (p, n) = (partition.p(), partition.n());
        let matchings = enumerate_matchings(n, r).unwrap();
        let xs = checked_pow(p, n).unwrap();
        let ws = checked_pow(p, r).unwrap();
        let classes = 1usize << partition.bits();
        let cell = |class: usize, mi: usize, w: usize| (class * matchings.len() + mi) * ws + w;
        let mut yes = vec![0.0; classes * matchings.len() * ws];
        let mut no = yes.clone();
        let weight = 1.0 / (xs * matchings.len()) as f64;
        for xi in 0..xs {
            let x = ZpVector::from_index(p, n, xi).unwrap();
            let class = partition.class_of(&x) as usize;
            for (mi, m) in matchings.iter().enumerate() {
                yes[cell(class, mi, m.apply_incidence(&x).unwrap().to_index())] += weight;
                for w in 0..ws {
                    no[cell(class, mi, w)] += weight / ws as f64;
                }
            }
        }
        (yes, no)
    }

    #[test]
    fn monte_carlo_advantage_matches_exact_law() {
        let mut rng = master_rng(5);
        for partition in [
            MessagePartition::constant(2, 6).unwrap(),
            MessagePartition::prefix(2, 6, 3).unwrap(),
            MessagePartition::identity(2, 6).unwrap(),
            MessagePartition::prefix(3, 4, 2).unwrap(),
        ] {
            let (yes, no) = observable_laws(&partition, 2);
            let exact: f64 = yes.iter().zip(&no).map(|(y, n)| (y - n).max(0.0)).sum();
            let est = protocol_advantage(&partition, 2, 40_000, &mut rng).unwrap();
            assert!(
                (est.advantage - exact).abs() <= 3.0 * est.std_error + 1e-12,
                "exact {exact} est {est:?}"
            );
        }
    }

    #[test]
    fn map_rule_beats_random_rules() {
        let mut rng = master_rng(6);
        let partition = MessagePartition::prefix(2, 6, 3).unwrap();
        let (yes, no) = observable_laws(&partition, 2);
        let map: f64 = yes.iter().zip(&no).map(|(y, n)| (y - n).max(0.0)).sum();
        for _ in 0..100 {
            let rule: Vec<bool> = (0..yes.len()).map(|_| rng.random_bool(0.5)).collect();
            let adv: f64 = yes
                .iter()
                .zip(&no)
                .zip(&rule)
                .filter(|(_, &accept)| accept)
                .map(|((y, n), _)| y - n)
                .sum::<f64>()
                .abs();
            assert!(adv <= map + 1e-12);
        }
    }

    #[test]
    fn identity_protocol_advantage() {
        let est = protocol_advantage(
            &MessagePartition::identity(2, 6).unwrap(),
            2,
            40_000,
            &mut master_rng(7),
        )
        .unwrap();
        assert!(
            (est.advantage - 0.75).abs() <= 3.0 * est.std_error,
            "{est:?}"
        );
        assert_eq!(est.accept_yes, 1.0);
    }

    #[test]
    fn prefix_advantage_is_monotone_with_shared_randomness() {
        let mut previous = 0.0;
        for c in 0..=7 {
            let partition = MessagePartition::prefix(2, 7, c).unwrap();
            let est = protocol_advantage(&partition, 3, 5_000, &mut master_rng(8)).unwrap();
            assert!(est.advantage >= previous, "c={c}");
            previous = est.advantage;
        }
    }

    #[test]
    fn hybrid_starts_at_zero_and_constant_algorithm_stays_there() {
        let mut rng = master_rng(9);
        let alg = make_toy_algorithm(ToyKind::PrefixTracker, 0, 2, &mut rng).unwrap();
        let report =
            hybrid_experiment(alg.as_ref(), 2, 8, 2, 4, MIN_HYBRID_TRIALS, &mut rng).unwrap();
        assert!(report.tvd().iter().all(|&t| t == 0.0));
        assert_eq!(report.stages.len(), 5);
        let reduction =
            reduction_protocol(alg.as_ref(), 0, 2, 8, 2, MIN_HYBRID_TRIALS, &mut rng).unwrap();
        assert_eq!(reduction.advantage.advantage, 0.0);
    }

    #[test]
    fn first_stage_is_indistinguishable() {
        // a single planted matching has uniform targets, exactly like N
        let mut rng = master_rng(10);
        let alg = make_toy_algorithm(ToyKind::PrefixTracker, 8, 2, &mut rng).unwrap();
        let report =
            hybrid_experiment(alg.as_ref(), 2, 16, 2, 2, MIN_HYBRID_TRIALS, &mut rng).unwrap();
        assert_eq!(report.stages[0].value, 0.0);
        let first = report.stages[1];
        assert!(
            first.value <= first.bias_bound + 5.0 * first.std_error,
            "{first:?}"
        );
    }

    #[test]
    fn hybrid_rejects_small_trials() {
        let mut rng = master_rng(11);
        let alg = make_toy_algorithm(ToyKind::PrefixTracker, 4, 2, &mut rng).unwrap();
        assert!(hybrid_experiment(alg.as_ref(), 2, 8, 2, 2, 100, &mut rng).is_err());
    }

    /// On 4 vertices with perfect matchings over Z_2, every planted stage has
    /// target sum `Σz`; remembers the first stage's sum and flags any change.
    struct SumWitness;

    impl MemoryBoundedAlgorithm for SumWitness {
        fn bits(&self) -> u32 {
            5
        }
        fn transition(&self, state: u32, c: &Constraint, _rng: &mut dyn RngCore) -> u32 {
            let (pos, partial) = (state & 1, (state >> 1 & 1) ^ c.target());
            let (reference, set, flag) = (state >> 2 & 1, state >> 3 & 1, state >> 4 & 1);
            if pos == 0 {
                return 1 | partial << 1 | reference << 2 | set << 3 | flag << 4;
            }
            if set == 0 {
                partial << 2 | 1 << 3
            } else {
                reference << 2 | 1 << 3 | (flag | (partial ^ reference)) << 4
            }
        }
        fn decide(&self, state: u32) -> Label {
            if state >> 4 == 0 {
                Label::Yes
            } else {
                Label::No
            }
        }
    }

    #[test]
    fn informative_algorithm_is_detected_and_reduced() {
        let mut rng = master_rng(13);
        let report =
            hybrid_experiment(&SumWitness, 2, 4, 2, 3, MIN_HYBRID_TRIALS, &mut rng).unwrap();
        let expected = [0.0, 0.0, 0.5, 0.75];
        for (got, want) in report.stages.iter().zip(expected) {
            assert!(
                (got.value - want).abs() <= got.bias_bound + 5.0 * got.std_error,
                "{report:?}"
            );
        }
        assert_eq!(report.informative_index, 1);
        let red = reduction_protocol(&SumWitness, 1, 2, 4, 2, MIN_HYBRID_TRIALS, &mut rng).unwrap();
        let se = red.advantage.std_error.hypot(red.gap_std_error());
        assert!(
            (red.advantage.advantage - 0.5).abs() <= 5.0 * red.advantage.std_error,
            "{red:?}"
        );
        assert!(red.advantage.advantage >= red.gap() - 5.0 * se);
        assert!(
            red.data_processing.value
                <= red.before.value + 5.0 * red.data_processing.std_error + 0.01
        );
    }

    struct Leaky;

    impl MemoryBoundedAlgorithm for Leaky {
        fn bits(&self) -> u32 {
            2
        }
        fn transition(&self, state: u32, _c: &Constraint, _rng: &mut dyn RngCore) -> u32 {
            state + 1
        }
        fn decide(&self, _state: u32) -> Label {
            Label::Yes
        }
    }

    #[test]
    fn state_overflow_is_a_contract_violation() {
        let err = hybrid_experiment(&Leaky, 2, 8, 2, 3, MIN_HYBRID_TRIALS, &mut master_rng(12));
        assert!(matches!(err, Err(Error::Contract(_))));
    }
}
