//! Exact evaluation and exhaustive optimisation of small Unique Games instances.
//!
//! The constraint graph is split into connected components, which are
//! optimised independently (the optimum is additive across components). Each
//! component is enumerated depth-first over its vertices in ascending order,
//! values ascending, so assignments are visited in lexicographic order; the
//! first assignment reaching the optimum is kept, which makes the witness the
//! lexicographically smallest optimal assignment. Subtrees that cannot beat
//! the incumbent are skipped, which never changes that witness.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::{sample_ug, Dist, UgInstance};
use crate::zp::ZpVector;

/// Assignment-space budget per component used to derive the default cap.
pub const ASSIGNMENT_BUDGET: f64 = 5.0e6;

/// Largest component size (vertices) solved by default: the largest `s` with
/// `p^s <= 5·10^6` (22 for `p = 2`).
pub fn default_vertex_cap(p: u32) -> usize {
    let mut cap = 0;
    let mut size = 1.0;
    while size * f64::from(p) <= ASSIGNMENT_BUDGET {
        size *= f64::from(p);
        cap += 1;
    }
    cap
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SolveResult {
    /// Maximum number of simultaneously satisfiable constraints.
    pub opt_value: usize,
    /// Lexicographically smallest assignment attaining `opt_value`.
    pub witness: ZpVector,
    /// Number of connected components with at least one constraint.
    pub components_solved: usize,
}

/// Number of constraints satisfied by `assignment`.
pub fn evaluate(instance: &UgInstance, assignment: &ZpVector) -> Result<usize> {
    if assignment.p() != instance.p() || assignment.len() != instance.n() {
        return Err(Error::Dimension(format!(
            "assignment in Z_{}^{} for instance over Z_{}^{}",
            assignment.p(),
            assignment.len(),
            instance.p(),
            instance.n()
        )));
    }
    let p = instance.p();
    Ok(instance
        .constraints()
        .iter()
        .filter(|c| c.is_satisfied(assignment.get(c.u), assignment.get(c.v), p))
        .count())
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Score table for one vertex pair inside a component: `scores[a * p + b]`
/// counts the constraints satisfied when the earlier vertex takes `a` and the
/// later vertex takes `b`.
struct PairTable {
    earlier: usize,
    scores: Vec<u32>,
}

struct Component {
    vertices: Vec<usize>,
    /// `incoming[j]`: pairs whose later endpoint is local vertex `j`.
    incoming: Vec<Vec<PairTable>>,
    /// `remaining[j]`: best achievable score from pairs completed at depth `>= j`.
    remaining: Vec<u64>,
}

impl Component {
    fn build(instance: &UgInstance, vertices: Vec<usize>, constraint_ids: &[usize]) -> Self {
        let p = instance.p() as usize;
        let mut local = std::collections::HashMap::with_capacity(vertices.len());
        for (i, &v) in vertices.iter().enumerate() {
            local.insert(v, i);
        }
        let mut incoming: Vec<Vec<PairTable>> = (0..vertices.len()).map(|_| Vec::new()).collect();
        for &id in constraint_ids {
            let c = &instance.constraints()[id];
            let (lu, lv) = (local[&c.u], local[&c.v]);
            let (earlier, later) = (lu.min(lv), lu.max(lv));
            let slot = match incoming[later].iter().position(|t| t.earlier == earlier) {
                Some(pos) => pos,
                None => {
                    incoming[later].push(PairTable {
                        earlier,
                        scores: vec![0; p * p],
                    });
                    incoming[later].len() - 1
                }
            };
            let table = &mut incoming[later][slot].scores;
            for (a, &b) in c.as_permutation(instance.p()).iter().enumerate() {
                let b = b as usize;
                // permutation maps x_u to x_v; orient as (earlier, later)
                if lu < lv {
                    table[a * p + b] += 1;
                } else {
                    table[b * p + a] += 1;
                }
            }
        }
        let mut remaining = vec![0u64; vertices.len() + 1];
        for j in (0..vertices.len()).rev() {
            let best: u64 = incoming[j]
                .iter()
                .map(|t| u64::from(*t.scores.iter().max().unwrap_or(&0)))
                .sum();
            remaining[j] = remaining[j + 1] + best;
        }
        Self {
            vertices,
            incoming,
            remaining,
        }
    }

    fn solve(&self, p: u32) -> (u64, Vec<u32>) {
        let mut search = Search {
            component: self,
            p: p as usize,
            current: vec![0; self.vertices.len()],
            best_value: None,
            best: vec![0; self.vertices.len()],
        };
        search.descend(0, 0);
        (search.best_value.unwrap_or(0), search.best)
    }
}

struct Search<'a> {
    component: &'a Component,
    p: usize,
    current: Vec<u32>,
    best_value: Option<u64>,
    best: Vec<u32>,
}

impl Search<'_> {
    fn descend(&mut self, depth: usize, score: u64) {
        if let Some(best) = self.best_value {
            if score + self.component.remaining[depth] <= best {
                return;
            }
        }
        if depth == self.current.len() {
            self.best_value = Some(score);
            self.best.copy_from_slice(&self.current);
            return;
        }
        for value in 0..self.p {
            let gained: u64 = self.component.incoming[depth]
                .iter()
                .map(|t| u64::from(t.scores[self.current[t.earlier] as usize * self.p + value]))
                .sum();
            self.current[depth] = value as u32;
            self.descend(depth + 1, score + gained);
        }
        self.current[depth] = 0;
    }
}

/// Exact optimum with the default per-component vertex cap.
pub fn exact_optimum(instance: &UgInstance) -> Result<SolveResult> {
    exact_optimum_capped(instance, default_vertex_cap(instance.p()))
}

/// Exact optimum, refusing components with more than `vertex_cap` vertices.
pub fn exact_optimum_capped(instance: &UgInstance, vertex_cap: usize) -> Result<SolveResult> {
    let n = instance.n();
    let mut sets = DisjointSets::new(n);
    let mut touched = vec![false; n];
    for c in instance.constraints() {
        sets.union(c.u, c.v);
        touched[c.u] = true;
        touched[c.v] = true;
    }
    // components keyed by their smallest vertex, which is the set root
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n];
    for v in (0..n).filter(|&v| touched[v]) {
        let root = sets.find(v);
        members[root].push(v);
    }
    let mut constraint_ids: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (id, c) in instance.constraints().iter().enumerate() {
        let root = sets.find(c.u);
        constraint_ids[root].push(id);
    }
    if let Some(big) = members
        .iter()
        .map(Vec::len)
        .max()
        .filter(|&s| s > vertex_cap)
    {
        return Err(Error::Capacity(format!(
            "component of {big} vertices exceeds the solver cap of {vertex_cap} for p={}",
            instance.p()
        )));
    }

    let mut witness = vec![0u32; n];
    let mut opt_value = 0u64;
    let mut components_solved = 0;
    for (root, vertices) in members.into_iter().enumerate() {
        if vertices.is_empty() {
            continue;
        }
        let component = Component::build(instance, vertices, &constraint_ids[root]);
        let (value, assignment) = component.solve(instance.p());
        for (&v, &a) in component.vertices.iter().zip(&assignment) {
            witness[v] = a;
        }
        opt_value += value;
        components_solved += 1;
    }
    Ok(SolveResult {
        opt_value: opt_value as usize,
        witness: ZpVector::new(instance.p(), witness)?,
        components_solved,
    })
}

/// Summary of exact optimum fractions over sampled instances.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FractionSummary {
    pub trials: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub fractions: Vec<f64>,
}

/// Samples `trials` instances and reports `opt_value / m` statistics.
pub fn optimum_fraction_stats<R: Rng + ?Sized>(
    p: u32,
    n: usize,
    alpha_r: usize,
    k: usize,
    dist: Dist,
    trials: usize,
    rng: &mut R,
) -> Result<FractionSummary> {
    if trials == 0 {
        return Err(Error::Parameter("at least one trial is required".into()));
    }
    if alpha_r == 0 {
        return Err(Error::Parameter(
            "instances must have at least one constraint".into(),
        ));
    }
    let mut fractions = Vec::with_capacity(trials);
    for _ in 0..trials {
        let instance = sample_ug(p, n, alpha_r, k, dist, rng)?;
        let solved = exact_optimum(&instance)?;
        fractions.push(solved.opt_value as f64 / instance.m() as f64);
    }
    Ok(FractionSummary {
        trials,
        mean: fractions.iter().sum::<f64>() / trials as f64,
        min: fractions.iter().copied().fold(f64::INFINITY, f64::min),
        max: fractions.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        fractions,
    })
}
