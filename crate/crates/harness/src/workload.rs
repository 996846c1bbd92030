//! Synthetic turnstile streams with exact ground truth.

use std::collections::BTreeMap;

use hsketch_core::prf::{self, domain, PrfStream};
use hsketch_core::{FunctionTable, GroupDescriptor, GroupElement};
use rand::seq::SliceRandom;

use crate::error::{HarnessError, Result};

/// Where update values live.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ValueDomain {
    Group(GroupDescriptor),
    /// Exact signed integers, reduced modulo `p` only at query time.
    Integer,
}

/// A vector described by how many coordinates hold each value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WorkloadSpec {
    pub name: String,
    pub domain: ValueDomain,
    /// Value (one signed integer per group factor, or one integer) and the
    /// number of coordinates holding it.
    pub value_counts: Vec<(Vec<i64>, u64)>,
    /// Coordinates are drawn from `[0, universe)`.
    pub universe: u64,
    pub shuffle_seed: u64,
    /// Extra coordinates that receive `y` and later `-y`, netting to zero.
    pub cancellation_pairs: u64,
}

/// One turnstile update `x(v) <- x(v) + y`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Update {
    pub v: u64,
    pub y: Vec<i64>,
}

impl Update {
    pub fn group_value(&self, group: &GroupDescriptor) -> hsketch_core::Result<GroupElement> {
        group.element(&self.y)
    }
}

/// Exact final vector of a workload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TruthTable {
    pub domain: ValueDomain,
    /// Coordinates with a nonzero stated value, in generation order.
    pub final_vector: Vec<(u64, Vec<i64>)>,
}

impl TruthTable {
    /// `‖x‖_0` in the workload's own domain.
    pub fn support_size(&self) -> u64 {
        match &self.domain {
            ValueDomain::Integer => {
                self.final_vector.iter().filter(|(_, y)| y[0] != 0).count() as u64
            }
            ValueDomain::Group(g) => self
                .final_vector
                .iter()
                .filter(|(_, y)| g.element(y).is_ok_and(|x| !x.is_identity()))
                .count() as u64,
        }
    }

    /// Coordinates whose first component is `≡ j (mod p)`, `j != 0`.
    pub fn count_mod(&self, p: u32, j: u64) -> u64 {
        self.final_vector
            .iter()
            .filter(|(_, y)| y[0].rem_euclid(i64::from(p)) as u64 == j)
            .count() as u64
    }

    /// Coordinates whose first component is nonzero modulo `p`.
    pub fn support_mod(&self, p: u32) -> u64 {
        self.final_vector
            .iter()
            .filter(|(_, y)| y[0].rem_euclid(i64::from(p)) != 0)
            .count() as u64
    }

    /// `Σ_v (f(x(v)) - f(0))` with values reduced into `f`'s group.
    pub fn moment(&self, f: &FunctionTable<f64>) -> Result<f64> {
        let g = f.group();
        let f0 = f.get(&g.identity())?;
        let mut total = 0.0;
        for (_, y) in &self.final_vector {
            total += (f.get(&g.element(y)?)? - f0).re;
        }
        Ok(total)
    }

    /// Nonzero coordinates as group elements, for oracle-based schemes.
    pub fn group_support(&self, group: &GroupDescriptor) -> Result<Vec<(u64, GroupElement)>> {
        let mut out = Vec::with_capacity(self.final_vector.len());
        for (v, y) in &self.final_vector {
            let x = group.element(y)?;
            if !x.is_identity() {
                out.push((*v, x));
            }
        }
        Ok(out)
    }

    /// Occurrences of each nonzero group value.
    pub fn value_histogram(&self, group: &GroupDescriptor) -> Result<BTreeMap<GroupElement, u64>> {
        let mut hist = BTreeMap::new();
        for (_, x) in self.group_support(group)? {
            *hist.entry(x).or_insert(0) += 1;
        }
        Ok(hist)
    }
}

/// Generated stream plus its ground truth.
#[derive(Clone, Debug)]
pub struct Stream {
    pub updates: Vec<Update>,
    pub truth: TruthTable,
}

/// Distinct pseudo-random ids in `[0, universe)` via an affine permutation.
fn element_ids(count: u64, universe: u64, seed: u64) -> impl Iterator<Item = u64> {
    let key = prf::key(seed, domain::WORKLOAD, 1, 0);
    let offset = prf::word(key, 0) % universe;
    let mut mult = (prf::word(key, 1) % universe) | 1;
    while gcd(mult, universe) != 1 {
        mult += 2;
    }
    (0..count).map(move |i| {
        ((u128::from(mult) * u128::from(i) + u128::from(offset)) % u128::from(universe)) as u64
    })
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn negate(y: &[i64]) -> Vec<i64> {
    y.iter().map(|v| -v).collect()
}

fn shuffle(updates: &mut [Update], seed: u64) {
    let mut rng = PrfStream::new(prf::key(seed, domain::WORKLOAD, 2, 0));
    updates.shuffle(&mut rng);
}

/// Materializes the stream: one update per coordinate, cancellation pairs,
/// then a seeded shuffle.
pub fn gen_stream(spec: &WorkloadSpec) -> Result<Stream> {
    let arity = match &spec.domain {
        ValueDomain::Integer => 1,
        ValueDomain::Group(g) => g.rank(),
    };
    if let Some((y, _)) = spec.value_counts.iter().find(|(y, _)| y.len() != arity) {
        return Err(HarnessError::InvalidWorkload(format!(
            "value {y:?} does not have {arity} components"
        )));
    }
    let coordinates: u64 = spec.value_counts.iter().map(|(_, c)| c).sum();
    let total = coordinates
        .checked_add(spec.cancellation_pairs)
        .filter(|&t| t <= spec.universe)
        .ok_or_else(|| {
            HarnessError::InvalidWorkload(format!(
                "{coordinates} coordinates plus {} cancellation pairs exceed universe {}",
                spec.cancellation_pairs, spec.universe
            ))
        })?;
    if total == 0 {
        return Ok(Stream {
            updates: Vec::new(),
            truth: TruthTable {
                domain: spec.domain.clone(),
                final_vector: Vec::new(),
            },
        });
    }
    let mut ids = element_ids(total, spec.universe, spec.shuffle_seed);
    let mut updates = Vec::with_capacity((coordinates + 2 * spec.cancellation_pairs) as usize);
    let mut final_vector = Vec::with_capacity(coordinates as usize);
    for (y, count) in &spec.value_counts {
        for _ in 0..*count {
            let v = ids.next().expect("enough ids");
            updates.push(Update { v, y: y.clone() });
            final_vector.push((v, y.clone()));
        }
    }
    let filler = spec
        .value_counts
        .first()
        .map(|(y, _)| y.clone())
        .unwrap_or_else(|| vec![1; arity]);
    for _ in 0..spec.cancellation_pairs {
        let v = ids.next().expect("enough ids");
        updates.push(Update {
            v,
            y: filler.clone(),
        });
        updates.push(Update {
            v,
            y: negate(&filler),
        });
    }
    shuffle(&mut updates, spec.shuffle_seed);
    Ok(Stream {
        updates,
        truth: TruthTable {
            domain: spec.domain.clone(),
            final_vector,
        },
    })
}

/// Two streams over `Z_p` with `|A \ B| = only_a`, `|B \ A| = only_b` and
/// `|A ∩ B| = both`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnionSpec {
    pub name: String,
    pub p: u32,
    pub only_a: u64,
    pub only_b: u64,
    pub both: u64,
    pub universe: u64,
    pub shuffle_seed: u64,
}

#[derive(Clone, Debug)]
pub struct UnionStreams {
    pub group: GroupDescriptor,
    pub a: Vec<Update>,
    pub b: Vec<Update>,
    pub union_size: u64,
}

/// Values cycle through `1..p`. A shared coordinate holds `y` in stream A
/// and `-y` in stream B, so the coordinate-wise sum would miss it.
pub fn gen_union(spec: &UnionSpec) -> Result<UnionStreams> {
    let group = GroupDescriptor::cyclic(spec.p)?;
    let total = spec.only_a + spec.only_b + spec.both;
    if total > spec.universe {
        return Err(HarnessError::InvalidWorkload(format!(
            "{total} coordinates exceed universe {}",
            spec.universe
        )));
    }
    let p = i64::from(spec.p);
    let value = |i: u64| (i as i64 % (p - 1)) + 1;
    let mut ids = element_ids(total, spec.universe.max(1), spec.shuffle_seed);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for i in 0..spec.only_a {
        a.push(Update {
            v: ids.next().expect("enough ids"),
            y: vec![value(i)],
        });
    }
    for i in 0..spec.only_b {
        b.push(Update {
            v: ids.next().expect("enough ids"),
            y: vec![value(i)],
        });
    }
    for i in 0..spec.both {
        let v = ids.next().expect("enough ids");
        a.push(Update {
            v,
            y: vec![value(i)],
        });
        b.push(Update {
            v,
            y: vec![p - value(i)],
        });
    }
    shuffle(&mut a, spec.shuffle_seed);
    shuffle(&mut b, spec.shuffle_seed.wrapping_add(1));
    Ok(UnionStreams {
        group,
        a,
        b,
        union_size: total,
    })
}

/// `total` split into `parts` near-equal counts, larger counts first.
pub fn even_split(total: u64, parts: u64) -> Vec<u64> {
    (0..parts)
        .map(|i| total / parts + u64::from(i < total % parts))
        .collect()
}
