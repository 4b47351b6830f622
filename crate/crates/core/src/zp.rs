//! Arithmetic over `Z_p`, vectors, matchings and incidence-matrix actions.
//!
//! The modulus is any integer `p >= 2`; nothing here assumes primality.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of matchings [`enumerate_matchings`] will materialise.
pub const MAX_ENUMERATED_MATCHINGS: u64 = 2_000_000;

pub(crate) fn check_modulus(p: u32) -> Result<()> {
    if p < 2 {
        return Err(Error::Parameter(format!(
            "modulus p must be at least 2, got {p}"
        )));
    }
    Ok(())
}

/// `p^n` as a `usize`, or `None` on overflow.
pub fn checked_pow(p: u32, n: usize) -> Option<usize> {
    let mut acc: usize = 1;
    for _ in 0..n {
        acc = acc.checked_mul(p as usize)?;
    }
    Some(acc)
}

/// Dense vector over `Z_p`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ZpVector {
    p: u32,
    entries: Vec<u32>,
}

impl ZpVector {
    /// Builds a vector, rejecting entries outside `0..p`.
    pub fn new(p: u32, entries: Vec<u32>) -> Result<Self> {
        check_modulus(p)?;
        if let Some((i, e)) = entries.iter().enumerate().find(|(_, &e)| e >= p) {
            return Err(Error::Domain(format!(
                "entry {i} = {e} is not a residue mod {p}"
            )));
        }
        Ok(Self { p, entries })
    }

    /// Builds a vector by reducing every entry mod `p`.
    pub fn from_reduced(p: u32, entries: impl IntoIterator<Item = u64>) -> Result<Self> {
        check_modulus(p)?;
        let entries = entries
            .into_iter()
            .map(|e| (e % u64::from(p)) as u32)
            .collect();
        Ok(Self { p, entries })
    }

    pub fn zeros(p: u32, len: usize) -> Result<Self> {
        check_modulus(p)?;
        Ok(Self {
            p,
            entries: vec![0; len],
        })
    }

    /// Uniformly random vector in `Z_p^len`.
    pub fn random<R: Rng + ?Sized>(p: u32, len: usize, rng: &mut R) -> Result<Self> {
        check_modulus(p)?;
        let entries = (0..len).map(|_| rng.random_range(0..p)).collect();
        Ok(Self { p, entries })
    }

    /// Decodes a mixed-radix index (coordinate 0 least significant).
    pub fn from_index(p: u32, len: usize, mut index: usize) -> Result<Self> {
        check_modulus(p)?;
        let mut entries = Vec::with_capacity(len);
        for _ in 0..len {
            entries.push((index % p as usize) as u32);
            index /= p as usize;
        }
        if index != 0 {
            return Err(Error::Domain(format!("index exceeds {p}^{len}")));
        }
        Ok(Self { p, entries })
    }

    /// Mixed-radix index of this vector (coordinate 0 least significant).
    pub fn to_index(&self) -> usize {
        self.entries
            .iter()
            .rev()
            .fold(0usize, |acc, &e| acc * self.p as usize + e as usize)
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[u32] {
        &self.entries
    }

    pub fn get(&self, i: usize) -> u32 {
        self.entries[i]
    }

    fn check_compatible(&self, other: &ZpVector) -> Result<()> {
        if self.p != other.p {
            return Err(Error::Dimension(format!(
                "moduli differ: {} vs {}",
                self.p, other.p
            )));
        }
        if self.len() != other.len() {
            return Err(Error::Dimension(format!(
                "lengths differ: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        Ok(())
    }

    /// Entrywise sum mod `p`.
    pub fn add(&self, other: &ZpVector) -> Result<ZpVector> {
        self.check_compatible(other)?;
        let p = u64::from(self.p);
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(&a, &b)| ((u64::from(a) + u64::from(b)) % p) as u32)
            .collect();
        Ok(ZpVector { p: self.p, entries })
    }

    /// Scalar product mod `p`.
    pub fn dot(&self, other: &ZpVector) -> Result<u32> {
        self.check_compatible(other)?;
        let p = u64::from(self.p);
        let sum = self
            .entries
            .iter()
            .zip(&other.entries)
            .fold(0u64, |acc, (&a, &b)| {
                (acc + u64::from(a) * u64::from(b)) % p
            });
        Ok(sum as u32)
    }

    /// Number of nonzero entries.
    pub fn weight(&self) -> usize {
        self.entries.iter().filter(|&&e| e != 0).count()
    }
}

/// Weight of the vector with mixed-radix `index`, for every index below `p^n`.
pub fn weight_table(p: u32, n: usize) -> Vec<u32> {
    let len = checked_pow(p, n).expect("weight table size overflows usize");
    let mut weights = vec![0u32; len];
    for idx in 1..len {
        weights[idx] = weights[idx / p as usize] + u32::from(idx % p as usize != 0);
    }
    weights
}

/// A set of disjoint vertex pairs on `0..n`, in canonical form: each pair is
/// stored as `(u, v)` with `u < v` and the edge list is sorted.
///
/// The matching doubles as its incidence matrix `M` (one row per edge).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Matching {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl Matching {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut seen = vec![false; n];
        let mut canonical = Vec::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::Domain(format!("self-loop at vertex {a}")));
            }
            let (u, v) = (a.min(b), a.max(b));
            if v >= n {
                return Err(Error::Domain(format!("vertex {v} out of range for n={n}")));
            }
            for w in [u, v] {
                if std::mem::replace(&mut seen[w], true) {
                    return Err(Error::Domain(format!("vertex {w} appears in two edges")));
                }
            }
            canonical.push((u, v));
        }
        canonical.sort_unstable();
        Ok(Self {
            n,
            edges: canonical,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Number of edges `r`.
    pub fn size(&self) -> usize {
        self.edges.len()
    }

    /// `w = Mx`: for each edge `(u, v)`, `w_e = x_u + x_v mod p`.
    pub fn apply_incidence(&self, x: &ZpVector) -> Result<ZpVector> {
        if x.len() != self.n {
            return Err(Error::Dimension(format!(
                "vector of length {} applied to matching on {} vertices",
                x.len(),
                self.n
            )));
        }
        let p = x.p();
        let entries = self
            .edges
            .iter()
            .map(|&(u, v)| ((u64::from(x.get(u)) + u64::from(x.get(v))) % u64::from(p)) as u32)
            .collect();
        Ok(ZpVector { p, entries })
    }

    /// `M^T z`: both endpoints of edge `e` receive `z_e`, unmatched vertices 0.
    pub fn apply_transpose(&self, z: &ZpVector) -> Result<ZpVector> {
        if z.len() != self.size() {
            return Err(Error::Dimension(format!(
                "vector of length {} applied to transpose of matching with {} edges",
                z.len(),
                self.size()
            )));
        }
        let mut entries = vec![0; self.n];
        for (&(u, v), &ze) in self.edges.iter().zip(z.entries()) {
            entries[u] = ze;
            entries[v] = ze;
        }
        Ok(ZpVector { p: z.p(), entries })
    }
}

fn check_matching_params(n: usize, r: usize) -> Result<()> {
    if r.checked_mul(2).is_none_or(|twice| twice > n) {
        return Err(Error::Parameter(format!(
            "a matching of {r} edges needs 2r <= n, n={n}"
        )));
    }
    Ok(())
}

/// Uniformly random matching with exactly `r` edges on `n` vertices.
pub fn sample_matching<R: Rng + ?Sized>(n: usize, r: usize, rng: &mut R) -> Result<Matching> {
    check_matching_params(n, r)?;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    Matching::new(
        n,
        perm[..2 * r].chunks_exact(2).map(|pair| (pair[0], pair[1])),
    )
}

/// Exact number of `r`-edge matchings on `n` vertices: `n! / (2^r r! (n-2r)!)`.
pub fn count_matchings(n: usize, r: usize) -> Result<BigUint> {
    check_matching_params(n, r)?;
    // n!/(n-2r)! = n (n-1) ... (n-2r+1)
    let mut numerator = BigUint::one();
    for f in (n - 2 * r + 1)..=n {
        numerator *= f;
    }
    let mut denominator = BigUint::one();
    for f in 1..=r {
        denominator *= 2 * f;
    }
    Ok(numerator / denominator)
}

/// Every `r`-edge matching on `n` vertices, in lexicographic order of edge lists.
pub fn enumerate_matchings(n: usize, r: usize) -> Result<Vec<Matching>> {
    let total = count_matchings(n, r)?;
    match total.to_u64() {
        Some(t) if t <= MAX_ENUMERATED_MATCHINGS => {}
        _ => {
            return Err(Error::Capacity(format!(
                "{total} matchings of size {r} on {n} vertices exceeds enumeration cap {MAX_ENUMERATED_MATCHINGS}"
            )))
        }
    }
    let mut out = Vec::new();
    let mut used = vec![false; n];
    let mut edges = Vec::with_capacity(r);
    extend_matchings(n, r, 0, n - 2 * r, &mut used, &mut edges, &mut out);
    Ok(out)
}

fn extend_matchings(
    n: usize,
    r: usize,
    from: usize,
    skips_left: usize,
    used: &mut [bool],
    edges: &mut Vec<(usize, usize)>,
    out: &mut Vec<Matching>,
) {
    if edges.len() == r {
        out.push(Matching {
            n,
            edges: edges.clone(),
        });
        return;
    }
    let Some(u) = (from..n).find(|&v| !used[v]) else {
        return;
    };
    used[u] = true;
    for v in (u + 1)..n {
        if used[v] {
            continue;
        }
        used[v] = true;
        edges.push((u, v));
        extend_matchings(n, r, u + 1, skips_left, used, edges, out);
        edges.pop();
        used[v] = false;
    }
    // leave u unmatched
    if skips_left > 0 {
        extend_matchings(n, r, u + 1, skips_left - 1, used, edges, out);
    }
    used[u] = false;
}
