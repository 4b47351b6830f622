//! Instance distributions and the `ug v1` stream format.
//!
//! Two families are sampled here:
//!
//! * hidden-matching instances `(x, M, w)` where `w = Mx` (YES) or `w` is
//!   uniform and independent of `x` (NO);
//! * multi-stage Unique Games instances built from `k` independent uniform
//!   matchings of size `alpha_r`. In the `Y` family every edge `(u, v)` carries
//!   `x_u + x_v = z_u + z_v` for one hidden uniform `z`; in the `N` family each
//!   edge gets an independent uniform target.
//!
//! Constraints arrive stage-major, in sampled edge order within a stage.
//!
//! # Stream format
//!
//! UTF-8 text, one record per line:
//!
//! ```text
//! ug v1 p=<p> n=<n> m=<m>
//! stages <o1> <o2> ...            (optional; stage start offsets)
//! lin <u> <v> <c>                 (x_u + x_v = c mod p)
//! perm <u> <v> <t0> ... <t_{p-1}> (t[x_u] = x_v)
//! ```

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::zp::{check_modulus, sample_matching, Matching, ZpVector};

/// Which hidden-matching distribution `w` is drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Yes,
    No,
}

/// Which multi-stage Unique Games distribution an instance is drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dist {
    Y,
    N,
}

impl FromStr for Dist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Y" | "y" => Ok(Dist::Y),
            "N" | "n" => Ok(Dist::N),
            other => Err(Error::Parameter(format!("unknown distribution {other:?}"))),
        }
    }
}

impl fmt::Display for Dist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dist::Y => "Y",
            Dist::N => "N",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstraintForm {
    /// `x_u + x_v = c (mod p)`.
    Linear(u32),
    /// `table[x_u] = x_v`, with `table` a bijection on `0..p`.
    Permutation(Vec<u32>),
}

/// A two-variable Unique Games constraint.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Constraint {
    pub u: usize,
    pub v: usize,
    pub form: ConstraintForm,
}

impl Constraint {
    pub fn linear(u: usize, v: usize, c: u32) -> Self {
        Self {
            u,
            v,
            form: ConstraintForm::Linear(c),
        }
    }

    pub fn permutation(u: usize, v: usize, table: Vec<u32>) -> Self {
        Self {
            u,
            v,
            form: ConstraintForm::Permutation(table),
        }
    }

    /// Whether `(x_u, x_v) = (a, b)` satisfies the constraint.
    pub fn is_satisfied(&self, a: u32, b: u32, p: u32) -> bool {
        match &self.form {
            ConstraintForm::Linear(c) => (a + b) % p == *c,
            ConstraintForm::Permutation(table) => table[a as usize] == b,
        }
    }

    /// The constraint as a permutation table; `Linear(c)` is `a -> c - a`.
    pub fn as_permutation(&self, p: u32) -> Vec<u32> {
        match &self.form {
            ConstraintForm::Linear(c) => (0..p).map(|a| (c + p - a) % p).collect(),
            ConstraintForm::Permutation(table) => table.clone(),
        }
    }

    /// Image of 0 under the constraint's permutation; the right-hand side of a
    /// linear constraint.
    pub fn target(&self) -> u32 {
        match &self.form {
            ConstraintForm::Linear(c) => *c,
            ConstraintForm::Permutation(table) => table[0],
        }
    }

    fn validate(&self, p: u32, n: usize) -> std::result::Result<(), String> {
        if self.u >= n || self.v >= n {
            return Err(format!(
                "vertex out of range: ({}, {}) with n={n}",
                self.u, self.v
            ));
        }
        if self.u == self.v {
            return Err(format!("constraint on a single vertex {}", self.u));
        }
        match &self.form {
            ConstraintForm::Linear(c) if *c >= p => {
                Err(format!("target {c} is not a residue mod {p}"))
            }
            ConstraintForm::Linear(_) => Ok(()),
            ConstraintForm::Permutation(table) => {
                if table.len() != p as usize {
                    return Err(format!(
                        "permutation table has {} entries, need {p}",
                        table.len()
                    ));
                }
                let mut hit = vec![false; p as usize];
                for &t in table {
                    if t >= p || std::mem::replace(&mut hit[t as usize], true) {
                        return Err("permutation table is not a bijection".into());
                    }
                }
                Ok(())
            }
        }
    }
}

/// A Unique Games instance: alphabet `p`, vertices `0..n`, ordered constraints.
///
/// Samplers of the `Y` family attach the hidden planted assignment. It is kept
/// for tests, is never written to a stream, and does not take part in equality.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UgInstance {
    p: u32,
    n: usize,
    constraints: Vec<Constraint>,
    stage_offsets: Option<Vec<usize>>,
    hidden: Option<ZpVector>,
}

impl PartialEq for UgInstance {
    fn eq(&self, other: &Self) -> bool {
        self.p == other.p
            && self.n == other.n
            && self.constraints == other.constraints
            && self.stage_offsets == other.stage_offsets
    }
}

impl Eq for UgInstance {}

fn check_offsets(offsets: &[usize], m: usize) -> std::result::Result<(), String> {
    if offsets.first().is_some_and(|&o| o != 0) {
        return Err("first stage must start at offset 0".into());
    }
    if offsets.windows(2).any(|w| w[0] > w[1]) {
        return Err("stage offsets must be nondecreasing".into());
    }
    if offsets.last().is_some_and(|&o| o > m) {
        return Err(format!("stage offset exceeds constraint count {m}"));
    }
    Ok(())
}

impl UgInstance {
    pub fn new(
        p: u32,
        n: usize,
        constraints: Vec<Constraint>,
        stage_offsets: Option<Vec<usize>>,
    ) -> Result<Self> {
        check_modulus(p)?;
        for (i, c) in constraints.iter().enumerate() {
            c.validate(p, n)
                .map_err(|msg| Error::Domain(format!("constraint {i}: {msg}")))?;
        }
        if let Some(offsets) = &stage_offsets {
            check_offsets(offsets, constraints.len()).map_err(Error::Domain)?;
        }
        let instance = Self {
            p,
            n,
            constraints,
            stage_offsets,
            hidden: None,
        };
        for (s, stage) in instance.stages().enumerate() {
            let mut used = vec![false; n];
            for c in stage {
                if std::mem::replace(&mut used[c.u], true)
                    || std::mem::replace(&mut used[c.v], true)
                {
                    return Err(Error::Domain(format!("stage {s} is not a matching")));
                }
            }
        }
        Ok(instance)
    }

    /// Attaches a planted assignment.
    pub fn with_hidden(mut self, hidden: ZpVector) -> Result<Self> {
        if hidden.p() != self.p || hidden.len() != self.n {
            return Err(Error::Dimension(
                "hidden assignment does not match instance".into(),
            ));
        }
        self.hidden = Some(hidden);
        Ok(self)
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of constraints.
    pub fn m(&self) -> usize {
        self.constraints.len()
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn stage_offsets(&self) -> Option<&[usize]> {
        self.stage_offsets.as_deref()
    }

    pub fn hidden(&self) -> Option<&ZpVector> {
        self.hidden.as_ref()
    }

    /// Constraint slices per stage; without stage offsets, no stages.
    pub fn stages(&self) -> impl Iterator<Item = &[Constraint]> + '_ {
        let offsets = self.stage_offsets.as_deref().unwrap_or(&[]);
        offsets.iter().enumerate().map(move |(i, &start)| {
            let end = offsets
                .get(i + 1)
                .copied()
                .unwrap_or(self.constraints.len());
            &self.constraints[start..end]
        })
    }

    /// Same instance with constraints reordered and stage boundaries dropped.
    pub fn with_constraints(&self, constraints: Vec<Constraint>) -> Result<Self> {
        Self::new(self.p, self.n, constraints, None)
    }
}

/// One round of the hidden-matching problem.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HiddenMatchingInstance {
    x: ZpVector,
    matching: Matching,
    w: ZpVector,
    label: Label,
}

impl HiddenMatchingInstance {
    pub fn p(&self) -> u32 {
        self.x.p()
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn x(&self) -> &ZpVector {
        &self.x
    }

    pub fn matching(&self) -> &Matching {
        &self.matching
    }

    pub fn w(&self) -> &ZpVector {
        &self.w
    }

    pub fn label(&self) -> Label {
        self.label
    }

    /// Bob's view as a stage of constraints `x_u + x_v = w_e`.
    pub fn constraints(&self) -> Vec<Constraint> {
        stage_constraints(&self.matching, &self.w)
    }
}

fn stage_constraints(matching: &Matching, targets: &ZpVector) -> Vec<Constraint> {
    matching
        .edges()
        .iter()
        .zip(targets.entries())
        .map(|(&(u, v), &c)| Constraint::linear(u, v, c))
        .collect()
}

/// Samples `(x, M, w)`: `x` uniform, `M` a uniform `r`-edge matching, and
/// `w = Mx` for YES or uniform for NO.
pub fn sample_hm<R: Rng + ?Sized>(
    p: u32,
    n: usize,
    r: usize,
    label: Label,
    rng: &mut R,
) -> Result<HiddenMatchingInstance> {
    let x = ZpVector::random(p, n, rng)?;
    let matching = sample_matching(n, r, rng)?;
    let w = match label {
        Label::Yes => matching.apply_incidence(&x)?,
        Label::No => ZpVector::random(p, r, rng)?,
    };
    Ok(HiddenMatchingInstance {
        x,
        matching,
        w,
        label,
    })
}

/// One stage of the `Y` family for hidden assignment `z`.
pub fn sample_y_stage<R: Rng + ?Sized>(
    z: &ZpVector,
    r: usize,
    rng: &mut R,
) -> Result<Vec<Constraint>> {
    let matching = sample_matching(z.len(), r, rng)?;
    Ok(stage_constraints(&matching, &matching.apply_incidence(z)?))
}

/// One stage of the `N` family.
pub fn sample_n_stage<R: Rng + ?Sized>(
    p: u32,
    n: usize,
    r: usize,
    rng: &mut R,
) -> Result<Vec<Constraint>> {
    let matching = sample_matching(n, r, rng)?;
    let targets = ZpVector::random(p, r, rng)?;
    Ok(stage_constraints(&matching, &targets))
}

/// Samples a `k`-stage instance from the `Y` or `N` family with matchings of
/// `alpha_r` edges; `m = k · alpha_r`.
pub fn sample_ug<R: Rng + ?Sized>(
    p: u32,
    n: usize,
    alpha_r: usize,
    k: usize,
    dist: Dist,
    rng: &mut R,
) -> Result<UgInstance> {
    check_modulus(p)?;
    if k == 0 {
        return Err(Error::Parameter("at least one stage is required".into()));
    }
    if 2 * alpha_r > n {
        return Err(Error::Parameter(format!(
            "matchings of {alpha_r} edges need 2r <= n, n={n}"
        )));
    }
    let hidden = match dist {
        Dist::Y => Some(ZpVector::random(p, n, rng)?),
        Dist::N => None,
    };
    let mut constraints = Vec::with_capacity(k * alpha_r);
    let mut offsets = Vec::with_capacity(k);
    for _ in 0..k {
        offsets.push(constraints.len());
        let stage = match &hidden {
            Some(z) => sample_y_stage(z, alpha_r, rng)?,
            None => sample_n_stage(p, n, alpha_r, rng)?,
        };
        constraints.extend(stage);
    }
    let instance = UgInstance::new(p, n, constraints, Some(offsets))?;
    match hidden {
        Some(z) => instance.with_hidden(z),
        None => Ok(instance),
    }
}

/// Writes the instance in `ug v1` format. The hidden assignment is not written.
pub fn write_stream<W: Write>(instance: &UgInstance, sink: &mut W) -> std::io::Result<()> {
    writeln!(
        sink,
        "ug v1 p={} n={} m={}",
        instance.p,
        instance.n,
        instance.m()
    )?;
    if let Some(offsets) = &instance.stage_offsets {
        write!(sink, "stages")?;
        for o in offsets {
            write!(sink, " {o}")?;
        }
        writeln!(sink)?;
    }
    for c in &instance.constraints {
        match &c.form {
            ConstraintForm::Linear(t) => writeln!(sink, "lin {} {} {t}", c.u, c.v)?,
            ConstraintForm::Permutation(table) => {
                write!(sink, "perm {} {}", c.u, c.v)?;
                for t in table {
                    write!(sink, " {t}")?;
                }
                writeln!(sink)?;
            }
        }
    }
    Ok(())
}

/// The instance rendered as a `ug v1` string.
pub fn to_stream_string(instance: &UgInstance) -> String {
    let mut buf = Vec::new();
    write_stream(instance, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("stream output is ASCII")
}

/// Header of a `ug v1` stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StreamHeader {
    pub p: u32,
    pub n: usize,
    pub m: usize,
    pub stage_offsets: Option<Vec<usize>>,
}

/// Incremental reader: parses the header eagerly, then yields constraints one
/// line at a time.
pub struct StreamReader<R> {
    source: R,
    header: StreamHeader,
    line_no: usize,
    pending: Option<String>,
    emitted: usize,
    stage_used: Vec<bool>,
    next_stage: usize,
    finished: bool,
}

fn parse_field<T: FromStr>(token: &str, key: &str, line: usize) -> Result<T> {
    token
        .strip_prefix(key)
        .and_then(|rest| rest.strip_prefix('='))
        .and_then(|value| value.parse().ok())
        .ok_or_else(|| Error::parse(line, format!("expected {key}=<value>, found {token:?}")))
}

fn parse_number<T: FromStr>(token: &str, what: &str, line: usize) -> Result<T> {
    token
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid {what} {token:?}")))
}

impl<R: BufRead> StreamReader<R> {
    pub fn new(mut source: R) -> Result<Self> {
        let mut line = String::new();
        if source.read_line(&mut line)? == 0 {
            return Err(Error::parse(1, "empty stream"));
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 5 || tokens[0] != "ug" || tokens[1] != "v1" {
            return Err(Error::parse(1, "expected header `ug v1 p=<p> n=<n> m=<m>`"));
        }
        let p: u32 = parse_field(tokens[2], "p", 1)?;
        let n: usize = parse_field(tokens[3], "n", 1)?;
        let m: usize = parse_field(tokens[4], "m", 1)?;
        if p < 2 {
            return Err(Error::parse(
                1,
                format!("modulus p must be at least 2, got {p}"),
            ));
        }
        let mut reader = Self {
            source,
            header: StreamHeader {
                p,
                n,
                m,
                stage_offsets: None,
            },
            line_no: 1,
            pending: None,
            emitted: 0,
            stage_used: vec![false; n],
            next_stage: 0,
            finished: false,
        };
        if let Some(second) = reader.read_line()? {
            let mut tokens = second.split_whitespace();
            if tokens.next() == Some("stages") {
                let offsets = tokens
                    .map(|t| parse_number(t, "stage offset", reader.line_no))
                    .collect::<Result<Vec<usize>>>()?;
                check_offsets(&offsets, m).map_err(|msg| Error::parse(reader.line_no, msg))?;
                reader.header.stage_offsets = Some(offsets);
            } else {
                reader.pending = Some(second);
            }
        }
        Ok(reader)
    }

    pub fn header(&self) -> &StreamHeader {
        &self.header
    }

    /// Line number of the most recently consumed line.
    pub fn line(&self) -> usize {
        self.line_no
    }

    fn read_line(&mut self) -> Result<Option<String>> {
        let mut line = String::new();
        if self.source.read_line(&mut line)? == 0 {
            return Ok(None);
        }
        self.line_no += 1;
        Ok(Some(line))
    }

    fn next_line(&mut self) -> Result<Option<String>> {
        match self.pending.take() {
            Some(line) => Ok(Some(line)),
            None => self.read_line(),
        }
    }

    fn parse_constraint(&self, text: &str) -> Result<Constraint> {
        let line = self.line_no;
        let StreamHeader { p, n, .. } = self.header;
        let tokens: Vec<&str> = text.split_whitespace().collect();
        let constraint = match tokens.first().copied() {
            Some("lin") if tokens.len() == 4 => Constraint::linear(
                parse_number(tokens[1], "vertex", line)?,
                parse_number(tokens[2], "vertex", line)?,
                parse_number(tokens[3], "target", line)?,
            ),
            Some("perm") if tokens.len() == 3 + p as usize => Constraint::permutation(
                parse_number(tokens[1], "vertex", line)?,
                parse_number(tokens[2], "vertex", line)?,
                tokens[3..]
                    .iter()
                    .map(|t| parse_number(t, "table entry", line))
                    .collect::<Result<_>>()?,
            ),
            Some("lin") | Some("perm") => {
                return Err(Error::parse(line, "wrong number of fields"));
            }
            _ => {
                return Err(Error::parse(
                    line,
                    format!("unrecognised record {:?}", text.trim_end()),
                ))
            }
        };
        constraint
            .validate(p, n)
            .map_err(|msg| Error::parse(line, msg))?;
        Ok(constraint)
    }

    fn check_stage(&mut self, c: &Constraint) -> Result<()> {
        let Some(offsets) = &self.header.stage_offsets else {
            return Ok(());
        };
        while self.next_stage < offsets.len() && offsets[self.next_stage] == self.emitted {
            self.stage_used.iter_mut().for_each(|u| *u = false);
            self.next_stage += 1;
        }
        if self.next_stage == 0 {
            return Ok(());
        }
        for w in [c.u, c.v] {
            if std::mem::replace(&mut self.stage_used[w], true) {
                return Err(Error::parse(
                    self.line_no,
                    format!("vertex {w} repeats within stage {}", self.next_stage - 1),
                ));
            }
        }
        Ok(())
    }

    fn next_constraint(&mut self) -> Result<Option<Constraint>> {
        if self.emitted == self.header.m {
            // only blank lines may follow the last record
            while let Some(line) = self.next_line()? {
                if !line.trim().is_empty() {
                    return Err(Error::parse(
                        self.line_no,
                        format!("more than m={} constraint records", self.header.m),
                    ));
                }
            }
            return Ok(None);
        }
        let Some(text) = self.next_line()? else {
            return Err(Error::parse(
                self.line_no + 1,
                format!(
                    "stream ended after {} of {} constraints",
                    self.emitted, self.header.m
                ),
            ));
        };
        let constraint = self.parse_constraint(&text)?;
        self.check_stage(&constraint)?;
        self.emitted += 1;
        Ok(Some(constraint))
    }
}

impl<R: BufRead> Iterator for StreamReader<R> {
    type Item = Result<Constraint>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        let item = self.next_constraint();
        if !matches!(item, Ok(Some(_))) {
            self.finished = true;
        }
        item.transpose()
    }
}

/// Parses a complete `ug v1` stream.
pub fn parse_stream<R: BufRead>(source: R) -> Result<UgInstance> {
    let mut reader = StreamReader::new(source)?;
    let mut constraints = Vec::with_capacity(reader.header().m.min(1 << 20));
    for c in reader.by_ref() {
        constraints.push(c?);
    }
    let StreamHeader {
        p,
        n,
        stage_offsets,
        ..
    } = reader.header.clone();
    UgInstance::new(p, n, constraints, stage_offsets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::{derive_rng, master_rng};
    use proptest::prelude::*;
    use rand::Rng;

    fn parse(text: &str) -> Result<UgInstance> {
        parse_stream(text.as_bytes())
    }

    #[test]
    fn yes_instances_satisfy_w_equals_mx() {
        let mut rng = master_rng(1);
        for _ in 0..200 {
            let hm = sample_hm(5, 9, 3, Label::Yes, &mut rng).unwrap();
            assert_eq!(hm.matching().apply_incidence(hm.x()).unwrap(), *hm.w());
            assert_eq!(hm.matching().size(), 3);
        }
    }

    #[test]
    fn yes_instance_on_two_vertices_is_forced() {
        let mut rng = master_rng(2);
        for _ in 0..50 {
            let hm = sample_hm(3, 2, 1, Label::Yes, &mut rng).unwrap();
            let expected = (hm.x().get(0) + hm.x().get(1)) % 3;
            assert_eq!(hm.w().entries(), &[expected]);
        }
        assert!(sample_hm(3, 2, 2, Label::Yes, &mut rng).is_err());
    }

    #[test]
    fn no_instance_w_is_uniform() {
        let mut rng = master_rng(3);
        let draws = 90_000;
        let mut counts = [0u32; 9];
        for _ in 0..draws {
            let hm = sample_hm(3, 6, 2, Label::No, &mut rng).unwrap();
            counts[hm.w().to_index()] += 1;
        }
        let expected = draws as f64 / 9.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 8 degrees of freedom, 0.001 upper quantile
        assert!(chi2 < 26.12, "chi2 = {chi2}");
    }

    #[test]
    fn y_instances_are_satisfied_by_hidden_assignment() {
        let mut rng = master_rng(4);
        for p in [2, 3, 5, 7] {
            let inst = sample_ug(p, 10, 3, 6, Dist::Y, &mut rng).unwrap();
            let z = inst.hidden().unwrap();
            assert_eq!(inst.m(), 18);
            assert!(inst
                .constraints()
                .iter()
                .all(|c| c.is_satisfied(z.get(c.u), z.get(c.v), p)));
        }
    }

    #[test]
    fn stages_are_matchings() {
        let mut rng = master_rng(5);
        let inst = sample_ug(3, 12, 5, 40, Dist::N, &mut rng).unwrap();
        assert_eq!(inst.stages().count(), 40);
        for stage in inst.stages() {
            assert_eq!(stage.len(), 5);
            let mut used = [false; 12];
            for c in stage {
                assert!(!std::mem::replace(&mut used[c.u], true));
                assert!(!std::mem::replace(&mut used[c.v], true));
            }
        }
    }

    #[test]
    fn n_targets_pass_chi_square() {
        let mut rng = master_rng(6);
        let mut counts = [0u64; 5];
        for _ in 0..500 {
            let inst = sample_ug(5, 10, 4, 10, Dist::N, &mut rng).unwrap();
            for c in inst.constraints() {
                counts[c.target() as usize] += 1;
            }
        }
        let total: u64 = counts.iter().sum();
        let expected = total as f64 / 5.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 4 degrees of freedom, 0.001 upper quantile
        assert!(chi2 < 18.47, "chi2 = {chi2}");
    }

    #[test]
    fn n_fixed_assignment_satisfies_half() {
        let mut rng = master_rng(7);
        let inst = sample_ug(2, 12, 2, 200, Dist::N, &mut rng).unwrap();
        let x = ZpVector::random(2, 12, &mut rng).unwrap();
        let sat = inst
            .constraints()
            .iter()
            .filter(|c| c.is_satisfied(x.get(c.u), x.get(c.v), 2))
            .count();
        let frac = sat as f64 / inst.m() as f64;
        assert!((frac - 0.5).abs() <= 0.03 + 0.05, "fraction {frac}");
    }

    #[test]
    fn stages_are_independent() {
        // correlation between "edge (0,1) present" in consecutive stages
        let mut rng = master_rng(8);
        let trials = 20_000;
        let (mut a, mut b, mut ab) = (0.0, 0.0, 0.0);
        for _ in 0..trials {
            let inst = sample_ug(2, 6, 2, 2, Dist::N, &mut rng).unwrap();
            let has = |s: &[Constraint]| s.iter().any(|c| (c.u, c.v) == (0, 1)) as u8 as f64;
            let mut stages = inst.stages();
            let (x, y) = (has(stages.next().unwrap()), has(stages.next().unwrap()));
            a += x;
            b += y;
            ab += x * y;
        }
        let t = trials as f64;
        let cov = ab / t - (a / t) * (b / t);
        let var = (a / t) * (1.0 - a / t);
        assert!((cov / var).abs() < 0.05, "correlation {}", cov / var);
    }

    #[test]
    fn sample_ug_rejects_bad_parameters() {
        let mut rng = master_rng(9);
        assert!(sample_ug(3, 4, 3, 1, Dist::Y, &mut rng).is_err());
        assert!(sample_ug(3, 4, 1, 0, Dist::Y, &mut rng).is_err());
    }

    #[test]
    fn single_stage_is_satisfiable_under_both_families() {
        let mut rng = master_rng(10);
        for dist in [Dist::Y, Dist::N] {
            let inst = sample_ug(3, 8, 4, 1, dist, &mut rng).unwrap();
            // a matching can always be satisfied: set x_u = 0, x_v = c
            let mut x = vec![0; 8];
            for c in inst.constraints() {
                x[c.v] = c.target();
            }
            let x = ZpVector::new(3, x).unwrap();
            assert!(inst
                .constraints()
                .iter()
                .all(|c| c.is_satisfied(x.get(c.u), x.get(c.v), 3)));
        }
    }

    #[test]
    fn parse_single_linear_constraint() {
        let inst = parse("ug v1 p=3 n=4 m=1\nlin 0 1 2\n").unwrap();
        assert_eq!((inst.p(), inst.n(), inst.m()), (3, 4, 1));
        assert_eq!(inst.constraints(), &[Constraint::linear(0, 1, 2)]);
        assert_eq!(inst.stage_offsets(), None);
    }

    #[test]
    fn permutation_matches_linear_semantics() {
        let perm = parse("ug v1 p=2 n=2 m=1\nperm 0 1 1 0\n").unwrap();
        let lin = parse("ug v1 p=2 n=2 m=1\nlin 0 1 1\n").unwrap();
        let (pc, lc) = (&perm.constraints()[0], &lin.constraints()[0]);
        assert_eq!(pc.as_permutation(2), lc.as_permutation(2));
        for a in 0..2 {
            for b in 0..2 {
                assert_eq!(pc.is_satisfied(a, b, 2), lc.is_satisfied(a, b, 2));
            }
        }
        for c in 0..5 {
            let table = Constraint::linear(0, 1, c).as_permutation(5);
            assert!((0..5).all(|a| table[a as usize] == (c + 5 - a) % 5));
        }
    }

    #[test]
    fn multi_edges_are_kept() {
        let inst = parse("ug v1 p=2 n=2 m=2\nlin 0 1 0\nlin 0 1 0\n").unwrap();
        assert_eq!(inst.m(), 2);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let cases = [
            ("ug v2 p=3 n=4 m=1\nlin 0 1 2\n", 1),
            ("ug v1 p=3 n=4\n", 1),
            ("ug v1 p=1 n=4 m=0\n", 1),
            ("ug v1 p=3 n=4 m=1\nlin 0 4 2\n", 2),
            ("ug v1 p=3 n=4 m=1\nlin 0 0 2\n", 2),
            ("ug v1 p=3 n=4 m=1\nlin 0 1 3\n", 2),
            ("ug v1 p=3 n=4 m=2\nlin 0 1 2\nperm 0 1 0 0 1\n", 3),
            ("ug v1 p=3 n=4 m=2\nlin 0 1 2\n", 3),
            ("ug v1 p=3 n=4 m=1\nlin 0 1 2\nlin 1 2 0\n", 3),
            ("ug v1 p=3 n=4 m=1\nfoo 0 1 2\n", 2),
            ("ug v1 p=3 n=4 m=2\nstages 0\nlin 0 1 2\nlin 1 2 0\n", 4),
            ("ug v1 p=3 n=4 m=1\nstages 1\nlin 0 1 2\n", 2),
        ];
        for (text, line) in cases {
            match parse(text) {
                Err(Error::Parse { line: got, .. }) => assert_eq!(got, line, "{text:?}"),
                other => panic!("expected parse error for {text:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn hidden_assignment_is_not_written() {
        let mut rng = master_rng(11);
        let inst = sample_ug(3, 6, 2, 3, Dist::Y, &mut rng).unwrap();
        let text = to_stream_string(&inst);
        assert!(text.starts_with("ug v1 p=3 n=6 m=6\nstages 0 2 4\nlin "));
        let back = parse(&text).unwrap();
        assert!(back.hidden().is_none());
        assert_eq!(back, inst);
    }

    fn random_instance(seed: u64) -> UgInstance {
        let mut rng = derive_rng(seed, "instance", 0);
        let p = rng.random_range(2..6);
        let n = rng.random_range(2..10);
        if rng.random_bool(0.5) {
            let r = rng.random_range(1..=n / 2);
            let k = rng.random_range(1..6);
            let dist = if rng.random_bool(0.5) {
                Dist::Y
            } else {
                Dist::N
            };
            return sample_ug(p, n, r, k, dist, &mut rng).unwrap();
        }
        let m = rng.random_range(0..20);
        let constraints = (0..m)
            .map(|_| {
                let u = rng.random_range(0..n);
                let v = (u + rng.random_range(1..n)) % n;
                if rng.random_bool(0.5) {
                    Constraint::linear(u, v, rng.random_range(0..p))
                } else {
                    let mut table: Vec<u32> = (0..p).collect();
                    rand::seq::SliceRandom::shuffle(table.as_mut_slice(), &mut rng);
                    Constraint::permutation(u, v, table)
                }
            })
            .collect();
        UgInstance::new(p, n, constraints, None).unwrap()
    }

    proptest! {
        #[test]
        fn write_then_parse_is_identity(seed in any::<u64>()) {
            let inst = random_instance(seed);
            let text = to_stream_string(&inst);
            let back = parse(&text).unwrap();
            prop_assert_eq!(&back, &inst);
            prop_assert_eq!(to_stream_string(&back), text);
        }
    }
}
