//! Dense Fourier analysis over `Z_p^n`.
//!
//! Functions and spectra are stored as dense tables of `p^n` complex values
//! indexed in mixed radix with coordinate 0 least significant. The transform
//! uses the normalisation `f̂(z) = p^{-n} Σ_x f(x) conj(ω^{z·x})`,
//! `ω = exp(2πi/p)`, and the norms use the normalised counting measure.
//!
//! Transforms run as `n` successive length-`p` transforms along each
//! coordinate, `O(p^n · n · p)` work.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::zp::{check_modulus, checked_pow, weight_table, ZpVector};

/// Largest table (`p^n`) accepted by the transforms.
pub const MAX_TABLE_LEN: usize = 1 << 24;

/// Tolerance used when deciding whether a value is exactly 0 or 1.
const INDICATOR_EPS: f64 = 1e-12;

fn table_len(p: u32, n: usize) -> Result<usize> {
    check_modulus(p)?;
    match checked_pow(p, n) {
        Some(len) if len <= MAX_TABLE_LEN => Ok(len),
        _ => Err(Error::Capacity(format!(
            "table {p}^{n} exceeds the cap of {MAX_TABLE_LEN} entries"
        ))),
    }
}

/// A function `Z_p^n -> C` given by its full value table.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionTable {
    p: u32,
    n: usize,
    values: Vec<Complex64>,
}

/// Fourier coefficients of a function on `Z_p^n`, indexed like [`FunctionTable`].
#[derive(Clone, Debug, PartialEq)]
pub struct FourierSpectrum {
    p: u32,
    n: usize,
    coefficients: Vec<Complex64>,
}

impl FunctionTable {
    pub fn new(p: u32, n: usize, values: Vec<Complex64>) -> Result<Self> {
        let len = table_len(p, n)?;
        if values.len() != len {
            return Err(Error::Dimension(format!(
                "table for {p}^{n} needs {len} values, got {}",
                values.len()
            )));
        }
        Ok(Self { p, n, values })
    }

    pub fn from_real(p: u32, n: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(p, n, values.into_iter().map(Complex64::from).collect())
    }

    pub fn constant(p: u32, n: usize, value: Complex64) -> Result<Self> {
        let len = table_len(p, n)?;
        Ok(Self {
            p,
            n,
            values: vec![value; len],
        })
    }

    /// Indicator function from a membership table indexed by mixed-radix index.
    pub fn from_membership(p: u32, n: usize, members: &[bool]) -> Result<Self> {
        Self::new(
            p,
            n,
            members
                .iter()
                .map(|&m| Complex64::from(f64::from(u8::from(m))))
                .collect(),
        )
    }

    /// Indicator function of the set `{x : member(x)}`.
    pub fn indicator(p: u32, n: usize, mut member: impl FnMut(&ZpVector) -> bool) -> Result<Self> {
        let len = table_len(p, n)?;
        let mut members = Vec::with_capacity(len);
        for idx in 0..len {
            members.push(member(&ZpVector::from_index(p, n, idx)?));
        }
        Self::from_membership(p, n, &members)
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn at(&self, x: &ZpVector) -> Complex64 {
        self.values[x.to_index()]
    }

    /// True when every value is 0 or 1.
    pub fn is_indicator(&self) -> bool {
        self.values.iter().all(|v| {
            v.im.abs() <= INDICATOR_EPS
                && (v.re.abs() <= INDICATOR_EPS || (v.re - 1.0).abs() <= INDICATOR_EPS)
        })
    }

    /// Membership table of an indicator function.
    pub fn members(&self) -> Result<Vec<bool>> {
        if !self.is_indicator() {
            return Err(Error::Domain("function is not a 0/1 indicator".into()));
        }
        Ok(self.values.iter().map(|v| v.re > 0.5).collect())
    }

    /// `|A|` for an indicator of `A`.
    pub fn support_size(&self) -> Result<usize> {
        Ok(self.members()?.into_iter().filter(|&m| m).count())
    }

    /// `g(x) = f(x - a)`.
    pub fn shifted(&self, a: &ZpVector) -> Result<Self> {
        if a.p() != self.p || a.len() != self.n {
            return Err(Error::Dimension(
                "shift vector does not match the table".into(),
            ));
        }
        let mut values = vec![Complex64::default(); self.len()];
        let p = self.p;
        for (idx, slot) in values.iter_mut().enumerate() {
            let x = ZpVector::from_index(p, self.n, idx)?;
            let source: Vec<u32> = x
                .entries()
                .iter()
                .zip(a.entries())
                .map(|(&xi, &ai)| (xi + p - ai) % p)
                .collect();
            *slot = self.values[ZpVector::new(p, source)?.to_index()];
        }
        Ok(Self {
            p,
            n: self.n,
            values,
        })
    }
}

impl FourierSpectrum {
    pub fn new(p: u32, n: usize, coefficients: Vec<Complex64>) -> Result<Self> {
        let len = table_len(p, n)?;
        if coefficients.len() != len {
            return Err(Error::Dimension(format!(
                "spectrum for {p}^{n} needs {len} coefficients, got {}",
                coefficients.len()
            )));
        }
        Ok(Self { p, n, coefficients })
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn at(&self, z: &ZpVector) -> Complex64 {
        self.coefficients[z.to_index()]
    }

    /// `Σ_z |f̂(z)|²`.
    pub fn energy(&self) -> f64 {
        self.coefficients.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// In-place transform along every coordinate. `sign` is the exponent sign of
/// the kernel `exp(sign · 2πi jk/p)`.
fn transform_axes(p: u32, n: usize, data: &mut [Complex64], sign: f64) {
    let p = p as usize;
    let roots: Vec<Complex64> = (0..p)
        .map(|j| Complex64::from_polar(1.0, sign * std::f64::consts::TAU * j as f64 / p as f64))
        .collect();
    let mut fiber = vec![Complex64::default(); p];
    let mut stride = 1;
    for _ in 0..n {
        let block = stride * p;
        for base in (0..data.len()).step_by(block) {
            for offset in 0..stride {
                let start = base + offset;
                for (j, slot) in fiber.iter_mut().enumerate() {
                    *slot = data[start + j * stride];
                }
                for k in 0..p {
                    let mut acc = Complex64::default();
                    for (j, &v) in fiber.iter().enumerate() {
                        acc += v * roots[(j * k) % p];
                    }
                    data[start + k * stride] = acc;
                }
            }
        }
        stride = block;
    }
}

/// `f̂(z) = p^{-n} Σ_x f(x) conj(ω^{z·x})`.
pub fn dft(f: &FunctionTable) -> FourierSpectrum {
    let mut coefficients = f.values.clone();
    transform_axes(f.p, f.n, &mut coefficients, -1.0);
    let scale = 1.0 / coefficients.len() as f64;
    for c in &mut coefficients {
        *c *= scale;
    }
    FourierSpectrum {
        p: f.p,
        n: f.n,
        coefficients,
    }
}

/// `f(x) = Σ_z f̂(z) ω^{z·x}`.
pub fn inverse_dft(s: &FourierSpectrum) -> FunctionTable {
    let mut values = s.coefficients.clone();
    transform_axes(s.p, s.n, &mut values, 1.0);
    FunctionTable {
        p: s.p,
        n: s.n,
        values,
    }
}

/// `‖f‖₂² = p^{-n} Σ_x |f(x)|²`.
pub fn norm2_sq(f: &FunctionTable) -> f64 {
    f.values.iter().map(|v| v.norm_sqr()).sum::<f64>() / f.len() as f64
}

/// `‖f‖_q = (p^{-n} Σ_x |f(x)|^q)^{1/q}`.
pub fn norm_q(f: &FunctionTable, q: f64) -> Result<f64> {
    if !(q.is_finite() && q > 0.0) {
        return Err(Error::Parameter(format!(
            "norm exponent must be positive, got {q}"
        )));
    }
    let mean = f.values.iter().map(|v| v.norm().powf(q)).sum::<f64>() / f.len() as f64;
    Ok(mean.powf(1.0 / q))
}

/// Largest noise rate for which `‖T_ρ f‖₂ <= ‖f‖_q` is guaranteed on `Z_p^n`:
/// `ρ = √(q-1) (1/p)^{1/q - 1/2}`.
pub fn hypercontractive_rho(q: f64, p: u32) -> Result<f64> {
    if !(q > 1.0 && q < 2.0) {
        return Err(Error::Parameter(format!("q must lie in (1, 2), got {q}")));
    }
    check_modulus(p)?;
    Ok((q - 1.0).sqrt() * (1.0 / f64::from(p)).powf(1.0 / q - 0.5))
}

/// Noise operator: multiplies every coefficient by `ρ^{|z|}`.
pub fn noise_operator(f: &FunctionTable, rho: f64) -> Result<FunctionTable> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Parameter(format!(
            "rho must lie in [0, 1], got {rho}"
        )));
    }
    let mut spectrum = dft(f);
    let weights = weight_table(f.p, f.n);
    let powers = weight_powers(rho, f.n);
    for (c, &w) in spectrum.coefficients.iter_mut().zip(&weights) {
        *c *= powers[w as usize];
    }
    Ok(inverse_dft(&spectrum))
}

fn weight_powers(base: f64, n: usize) -> Vec<f64> {
    // 0^0 = 1 keeps the constant coefficient when the base is 0
    std::iter::successors(Some(1.0), |&acc| Some(acc * base))
        .take(n + 1)
        .collect()
}

/// A one-sided inequality `lhs <= rhs` evaluated numerically.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
}

impl InequalityCheck {
    pub fn holds(&self, slack: f64) -> bool {
        self.lhs <= self.rhs + slack
    }

    /// `lhs - rhs`; positive means violated.
    pub fn excess(&self) -> f64 {
        self.lhs - self.rhs
    }
}

/// `Σ_z δ^{|z|} |f̂(z)|²` for an indicator `f`, `0 <= δ <= 1/p`.
pub fn weighted_fourier_sum(f: &FunctionTable, delta: f64) -> Result<f64> {
    if !f.is_indicator() {
        return Err(Error::Domain(
            "weighted Fourier sum needs a 0/1 indicator".into(),
        ));
    }
    let limit = 1.0 / f64::from(f.p);
    if !(0.0..=limit).contains(&delta) {
        return Err(Error::Parameter(format!(
            "delta must lie in [0, 1/{}], got {delta}",
            f.p
        )));
    }
    let spectrum = dft(f);
    let weights = weight_table(f.p, f.n);
    let powers = weight_powers(delta, f.n);
    Ok(spectrum
        .coefficients
        .iter()
        .zip(&weights)
        .map(|(c, &w)| powers[w as usize] * c.norm_sqr())
        .sum())
}

/// `(|A| / p^n)^{2 / (1 + pδ)}`.
pub fn weighted_sum_bound(density: f64, p: u32, delta: f64) -> f64 {
    density.powf(2.0 / (1.0 + f64::from(p) * delta))
}

/// The weighted sum against its density bound.
pub fn weighted_sum_check(f: &FunctionTable, delta: f64) -> Result<InequalityCheck> {
    let lhs = weighted_fourier_sum(f, delta)?;
    let density = f.support_size()? as f64 / f.len() as f64;
    Ok(InequalityCheck {
        lhs,
        rhs: weighted_sum_bound(density, f.p, delta),
    })
}

/// Fourier mass at level `k`: `Σ_{|z|=k} |f̂(z)|²` for an indicator of nonempty `A`.
pub fn level_mass(f: &FunctionTable, k: usize) -> Result<f64> {
    if f.support_size()? == 0 {
        return Err(Error::Domain("level mass needs a nonempty set".into()));
    }
    if k > f.n {
        return Err(Error::Parameter(format!(
            "level {k} exceeds dimension {}",
            f.n
        )));
    }
    Ok(level_masses(&dft(f))[k])
}

/// Fourier mass at every level `0..=n`.
pub fn level_masses(spectrum: &FourierSpectrum) -> Vec<f64> {
    let mut masses = vec![0.0; spectrum.n + 1];
    for (c, &w) in spectrum
        .coefficients
        .iter()
        .zip(&weight_table(spectrum.p, spectrum.n))
    {
        masses[w as usize] += c.norm_sqr();
    }
    masses
}

/// `(4√2 p c / k)^k`, with the `k = 0` limit equal to 1.
pub fn level_mass_bound(p: u32, c: f64, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    (4.0 * std::f64::consts::SQRT_2 * f64::from(p) * c / k as f64).powi(k as i32)
}

/// `(p^{2n}/|A|²) Σ_{|z|=k} |f̂(z)|²` against `(4√2 p c/k)^k`, for `k <= 4c`.
pub fn level_mass_check(f: &FunctionTable, k: usize, c: f64) -> Result<InequalityCheck> {
    if k as f64 > 4.0 * c {
        return Err(Error::Parameter(format!(
            "level {k} exceeds 4c = {}",
            4.0 * c
        )));
    }
    let size = f.support_size()?;
    let mass = level_mass(f, k)?;
    let scale = (f.len() as f64 / size as f64).powi(2);
    Ok(InequalityCheck {
        lhs: scale * mass,
        rhs: level_mass_bound(f.p, c, k),
    })
}
