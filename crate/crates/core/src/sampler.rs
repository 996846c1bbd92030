//! Sampling baseline: level-sampled fingerprint buckets with singleton
//! detection, the τ*-GRA cardinality estimator and sample-based f-moments.
//!
//! Element `v` is included in level `k` of `[0, 22m')` independently with
//! probability `e^{-k/m'}`. Each level holds one bucket of `r` columns; a
//! column has two slots for odd `|G|` and three for even `|G|`, and every
//! inserted value lands in exactly one slot per column.

use std::collections::BTreeMap;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::group::{FunctionTable, GroupDescriptor, GroupElement};
use crate::math::gamma_fn;
use crate::prf::{self, domain, GOLDEN};
use crate::scalar::Scalar;

/// Exponent of the τ*-GRA estimator.
pub const TAU_STAR: f64 = 0.34355;
/// Levels per unit of `m'`.
pub const LEVELS_PER_M: usize = 22;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    Odd,
    Even,
}

impl Parity {
    pub fn of(group: &GroupDescriptor) -> Self {
        if group.is_odd_order() {
            Self::Odd
        } else {
            Self::Even
        }
    }

    /// Slots per column: 2 for a bi-splitter, 3 for a tri-splitter.
    pub fn width(self) -> usize {
        match self {
            Self::Odd => 2,
            Self::Even => 3,
        }
    }
}

/// Singleton detector with `r` columns of 2 or 3 group-valued slots.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FingerprintBucket {
    group: GroupDescriptor,
    parity: Parity,
    r: usize,
    slots: Vec<u32>,
}

/// Outcome of [`classify_bucket`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BucketClass {
    Empty,
    Singleton(GroupElement),
    NotSingleton,
}

impl FingerprintBucket {
    pub fn new(group: GroupDescriptor, r: usize) -> Result<Self> {
        if r == 0 {
            return Err(Error::InvalidConfig(
                "a fingerprint needs at least one column".into(),
            ));
        }
        let parity = Parity::of(&group);
        let len = r * parity.width() * group.rank();
        Ok(Self {
            group,
            parity,
            r,
            slots: vec![0; len],
        })
    }

    pub fn group(&self) -> &GroupDescriptor {
        &self.group
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// Residues held in `slot` of `column`.
    pub fn slot(&self, column: usize, slot: usize) -> &[u32] {
        let d = self.group.rank();
        let start = (column * self.parity.width() + slot) * d;
        &self.slots[start..start + d]
    }

    pub fn is_empty(&self) -> bool {
        self.slots.iter().all(|&s| s == 0)
    }
}

/// Slot of `column` that receives `v`'s value.
#[inline]
fn splitter_slot(seed: u64, v: u64, column: usize, width: usize) -> usize {
    (prf::word(prf::key(seed, domain::SPLITTER, v, column as u64), 0) % width as u64) as usize
}

/// Adds `y` to one PRF-chosen slot in every column.
pub fn splitter_update(
    bucket: &mut FingerprintBucket,
    v: u64,
    y: &GroupElement,
    seed: u64,
) -> Result<()> {
    if !bucket.group.contains(y) {
        return Err(Error::GroupMismatch(format!(
            "value {y} is not in the bucket group"
        )));
    }
    let width = bucket.parity.width();
    let orders = bucket.group.orders();
    let d = orders.len();
    for column in 0..bucket.r {
        let start = (column * width + splitter_slot(seed, v, column, width)) * d;
        for (t, &yt) in y.residues().iter().enumerate() {
            let p = u64::from(orders[t]);
            let s = &mut bucket.slots[start + t];
            *s = ((u64::from(*s) + u64::from(yt)) % p) as u32;
        }
    }
    Ok(())
}

/// `Singleton(x)` iff `x != 0` and every column has exactly one nonzero
/// slot, equal to `x`.
pub fn classify_bucket(bucket: &FingerprintBucket) -> BucketClass {
    if bucket.is_empty() {
        return BucketClass::Empty;
    }
    let width = bucket.parity.width();
    let mut value: Option<&[u32]> = None;
    for column in 0..bucket.r {
        let mut nonzero = (0..width)
            .map(|s| bucket.slot(column, s))
            .filter(|x| x.iter().any(|&r| r != 0));
        let (Some(x), None) = (nonzero.next(), nonzero.next()) else {
            return BucketClass::NotSingleton;
        };
        match value {
            None => value = Some(x),
            Some(v) if v == x => {}
            Some(_) => return BucketClass::NotSingleton,
        }
    }
    let x = value.expect("r >= 1 and the bucket is not empty").to_vec();
    BucketClass::Singleton(
        bucket
            .group
            .element_from_residues(x)
            .expect("slots hold reduced residues"),
    )
}

/// Calls `visit(k)` for every level in `[0, levels)` that includes `v`.
///
/// Inclusion at level `k` is an independent Bernoulli(`e^{-k/m'}`) draw.
/// The levels are found by thinning: candidates arrive at the rate of the
/// last candidate's probability and are accepted with the ratio of the
/// current to that rate, so the cost is proportional to the number of
/// included levels rather than to `levels`.
pub fn for_each_level(
    seed: u64,
    v: u64,
    m_prime: u32,
    levels: usize,
    mut visit: impl FnMut(usize),
) {
    let key = prf::key(seed, domain::SAMPLER_LEVEL, v, 0);
    let mut counter = 0u64;
    let mut draw = || {
        let w = prf::word(key, counter);
        counter += 1;
        w
    };
    let mf = f64::from(m_prime);
    let mut k = 0usize;
    let mut rate = 1.0f64;
    while k < levels {
        if rate < 1.0 {
            let skip = (prf::unit_open(draw()).ln() / (-rate).ln_1p()).floor();
            if skip >= (levels - k) as f64 {
                return;
            }
            k += skip as usize;
        }
        let p = (-(k as f64) / mf).exp();
        if p >= rate || prf::unit(draw()) * rate < p {
            visit(k);
        }
        rate = p;
        k += 1;
    }
}

/// Levels that include `v`, in increasing order.
pub fn sampled_levels(seed: u64, v: u64, m_prime: u32) -> Vec<usize> {
    let mut out = Vec::new();
    for_each_level(seed, v, m_prime, LEVELS_PER_M * m_prime as usize, |k| {
        out.push(k)
    });
    out
}

fn bucket_seed(seed: u64, level: usize) -> u64 {
    prf::mix64(seed ^ (level as u64 + 1).wrapping_mul(GOLDEN))
}

/// Empty levels and detected singleton values of a sampler.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LevelSummary {
    pub m_prime: u32,
    /// Levels held by the sketch; every level at or above is empty.
    pub levels: usize,
    pub empty_levels: Vec<usize>,
    /// Detected singleton values with their multiplicities across levels.
    pub singletons: BTreeMap<GroupElement, u64>,
}

impl LevelSummary {
    pub fn singleton_count(&self) -> u64 {
        self.singletons.values().sum()
    }

    /// τ*-GRA support size over the observed empty levels and the empty
    /// levels beyond the sketch.
    pub fn support_estimate<T: Scalar>(&self) -> GraEstimate<T> {
        tau_gra_estimate_truncated(&self.empty_levels, self.m_prime, self.levels)
    }
}

/// Level-sampled fingerprint sketch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SamplerSketch {
    m_prime: u32,
    seed: u64,
    buckets: Vec<FingerprintBucket>,
}

impl SamplerSketch {
    pub fn new(group: GroupDescriptor, m_prime: u32, r: usize, seed: u64) -> Result<Self> {
        if m_prime == 0 {
            return Err(Error::InvalidConfig("m' must be positive".into()));
        }
        let bucket = FingerprintBucket::new(group, r)?;
        Ok(Self {
            m_prime,
            seed,
            buckets: vec![bucket; LEVELS_PER_M * m_prime as usize],
        })
    }

    pub fn m_prime(&self) -> u32 {
        self.m_prime
    }

    pub fn levels(&self) -> usize {
        self.buckets.len()
    }

    pub fn bucket(&self, level: usize) -> &FingerprintBucket {
        &self.buckets[level]
    }

    pub fn update(&mut self, v: u64, y: &GroupElement) -> Result<()> {
        if !self.buckets[0].group.contains(y) {
            return Err(Error::GroupMismatch(format!(
                "value {y} is not in the sampler group"
            )));
        }
        let (seed, m_prime, levels) = (self.seed, self.m_prime, self.buckets.len());
        let buckets = &mut self.buckets;
        let mut result = Ok(());
        for_each_level(seed, v, m_prime, levels, |k| {
            if result.is_ok() {
                result = splitter_update(&mut buckets[k], v, y, bucket_seed(seed, k));
            }
        });
        result
    }

    pub fn summary(&self) -> LevelSummary {
        let mut summary = LevelSummary {
            m_prime: self.m_prime,
            levels: self.buckets.len(),
            ..Default::default()
        };
        for (k, bucket) in self.buckets.iter().enumerate() {
            match classify_bucket(bucket) {
                BucketClass::Empty => summary.empty_levels.push(k),
                BucketClass::Singleton(x) => *summary.singletons.entry(x).or_insert(0) += 1,
                BucketClass::NotSingleton => {}
            }
        }
        summary
    }
}

/// Exact level occupancy for the final vector: emptiness and singletons
/// are read from ground truth, so only sampling error remains.
pub fn ideal_oracle_summary(
    m_prime: u32,
    seed: u64,
    support: &[(u64, GroupElement)],
) -> LevelSummary {
    let levels = LEVELS_PER_M * m_prime as usize;
    let mut counts = vec![0u32; levels];
    let mut last = vec![usize::MAX; levels];
    for (i, (v, x)) in support.iter().enumerate() {
        if x.is_identity() {
            continue;
        }
        for_each_level(seed, *v, m_prime, levels, |k| {
            counts[k] += 1;
            last[k] = i;
        });
    }
    let mut summary = LevelSummary {
        m_prime,
        levels,
        ..Default::default()
    };
    for k in 0..levels {
        match counts[k] {
            0 => summary.empty_levels.push(k),
            1 => {
                *summary
                    .singletons
                    .entry(support[last[k]].1.clone())
                    .or_insert(0) += 1
            }
            _ => {}
        }
    }
    summary
}

/// τ*-GRA output.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GraEstimate<T> {
    Value(T),
    /// No empty level was observed.
    Saturated,
}

impl<T: Scalar> GraEstimate<T> {
    pub fn value(self) -> Result<T> {
        match self {
            Self::Value(v) => Ok(v),
            Self::Saturated => Err(Error::Saturated),
        }
    }
}

/// `λ̂ = (Σ_{k ∈ A} e^{-τ* k/m'} / (m' Γ(τ*)))^{-1/τ*}` over the empty
/// levels `A`.
pub fn tau_gra_estimate<T: Scalar>(zero_levels: &[usize], m_prime: u32) -> GraEstimate<T> {
    gra_from_levels(zero_levels, m_prime, T::zero())
}

/// τ*-GRA for a sketch holding levels `[0, levels)`: the levels at or above
/// `levels` never sample an element and join `A` through the closed form
/// `Σ_{k ≥ levels} e^{-τ* k/m'}`. Without them the estimate is biased
/// upward by a few percent at 22m' levels.
pub fn tau_gra_estimate_truncated<T: Scalar>(
    zero_levels: &[usize],
    m_prime: u32,
    levels: usize,
) -> GraEstimate<T> {
    let tau = T::of(TAU_STAR);
    let mf = T::of(f64::from(m_prime));
    let tail = (-tau * T::of(levels as f64) / mf).exp() / -(-tau / mf).exp_m1();
    gra_from_levels(zero_levels, m_prime, tail)
}

fn gra_from_levels<T: Scalar>(zero_levels: &[usize], m_prime: u32, tail: T) -> GraEstimate<T> {
    if zero_levels.is_empty() {
        return GraEstimate::Saturated;
    }
    let tau = T::of(TAU_STAR);
    let mf = T::of(f64::from(m_prime));
    let sum = zero_levels
        .iter()
        .fold(tail, |acc, &k| acc + (-tau * T::of(k as f64) / mf).exp());
    let g = gamma_fn(tau).expect("τ* is not a pole");
    GraEstimate::Value((sum / (mf * g)).powf(-T::one() / tau))
}

/// `λ̂₀ · mean(f(x) - f(0))` over detected singleton values.
pub fn sample_f_moment<T: Scalar>(
    summary: &LevelSummary,
    f: &FunctionTable<T>,
) -> Result<Complex<T>> {
    let n = summary.singleton_count();
    if n == 0 {
        return Err(Error::NoSamples);
    }
    let lambda = summary.support_estimate::<T>().value()?;
    let f0 = f.get(&f.group().identity())?;
    let mut acc = Complex::new(T::zero(), T::zero());
    for (x, &c) in &summary.singletons {
        acc = acc + (f.get(x)? - f0).scale(T::of(c as f64));
    }
    Ok(acc.scale(lambda / T::of(n as f64)))
}

/// Sampler `m'` using the memory of a Fourier tower with parameter `m`:
/// `3m / (2r)` for odd groups, `3m / (3r)` for even ones, rounded up.
pub fn equal_memory_m_prime(m: u32, r: usize, parity: Parity) -> u32 {
    let cells = 3 * u64::from(m);
    let per_level = (parity.width() * r) as u64;
    cells.div_ceil(per_level).max(1) as u32
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z(p: u32) -> GroupDescriptor {
        GroupDescriptor::cyclic(p).unwrap()
    }

    #[test]
    fn single_insert_shape() {
        let g = z(7);
        let mut b = FingerprintBucket::new(g.clone(), 3).unwrap();
        splitter_update(&mut b, 10, &g.cyclic_element(3).unwrap(), 1).unwrap();
        for c in 0..3 {
            let pair = (b.slot(c, 0)[0], b.slot(c, 1)[0]);
            assert!(pair == (3, 0) || pair == (0, 3));
        }
        assert_eq!(
            classify_bucket(&b),
            BucketClass::Singleton(g.cyclic_element(3).unwrap())
        );
        splitter_update(&mut b, 10, &g.cyclic_element(4).unwrap(), 1).unwrap();
        assert_eq!(classify_bucket(&b), BucketClass::Empty);
    }

    #[test]
    fn collision_pattern_is_not_singleton() {
        let g = z(7);
        let seed = (0..1000u64)
            .find(|&s| (0..3).all(|c| splitter_slot(s, 1, c, 2) != splitter_slot(s, 2, c, 2)))
            .unwrap();
        let mut b = FingerprintBucket::new(g.clone(), 3).unwrap();
        splitter_update(&mut b, 1, &g.cyclic_element(3).unwrap(), seed).unwrap();
        splitter_update(&mut b, 2, &g.cyclic_element(5).unwrap(), seed).unwrap();
        assert_eq!(classify_bucket(&b), BucketClass::NotSingleton);
    }

    #[test]
    fn tri_splitter_for_even_groups() {
        let g = z(8);
        let b = FingerprintBucket::new(g, 2).unwrap();
        assert_eq!(b.parity(), Parity::Even);
        assert_eq!(b.slots.len(), 6);
        assert_eq!(classify_bucket(&b), BucketClass::Empty);
    }

    #[test]
    fn level_inclusion_rates() {
        let m_prime = 16;
        let n = 40_000u64;
        let mut hits = vec![0u64; 22 * m_prime as usize];
        for v in 0..n {
            for k in sampled_levels(3, v, m_prime) {
                hits[k] += 1;
            }
        }
        for k in [0usize, 1, 8, 16, 40, 80] {
            let p = (-(k as f64) / f64::from(m_prime)).exp();
            let got = hits[k] as f64 / n as f64;
            let ci = 4.0 * (p * (1.0 - p) / n as f64).sqrt() + 1e-12;
            assert!((got - p).abs() <= ci, "level {k}: {got} vs {p}");
        }
        assert_eq!(sampled_levels(3, 5, m_prime), sampled_levels(3, 5, m_prime));
    }

    #[test]
    fn level_inclusions_are_independent() {
        // P(k1 and k2) = p1 p2 for a pair of nearby levels.
        let m_prime = 8;
        let n = 200_000u64;
        let (k1, k2) = (4usize, 6usize);
        let mut both = 0u64;
        for v in 0..n {
            let levels = sampled_levels(9, v, m_prime);
            if levels.contains(&k1) && levels.contains(&k2) {
                both += 1;
            }
        }
        let p = (-(k1 as f64) / 8.0).exp() * (-(k2 as f64) / 8.0).exp();
        let got = both as f64 / n as f64;
        assert!((got - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt());
    }

    #[test]
    fn tau_gra_examples() {
        let all: Vec<usize> = (0..22 * 384).collect();
        let v = match tau_gra_estimate::<f64>(&all, 384) {
            GraEstimate::Value(v) => v,
            GraEstimate::Saturated => panic!("not saturated"),
        };
        assert!(v < 1.0 && v > 0.0);
        assert_eq!(tau_gra_estimate::<f64>(&[], 384), GraEstimate::Saturated);
        let truncated = tau_gra_estimate_truncated::<f64>(&all, 384, all.len())
            .value()
            .unwrap();
        assert!(truncated < v);
    }

    #[test]
    fn tau_gra_truncated_expectation() {
        // Expected empty-level indicator weights at λ = 10^4 give back λ.
        let (m, lambda) = (384u32, 1e4f64);
        let levels = 22 * m as usize;
        let tau = TAU_STAR;
        let mf = f64::from(m);
        let sum: f64 = (0..levels)
            .map(|k| (-tau * k as f64 / mf).exp() * (-lambda * (-(k as f64) / mf).exp()).exp())
            .sum::<f64>()
            + (-tau * levels as f64 / mf).exp() / -(-tau / mf).exp_m1();
        let est = (sum / (mf * gamma_fn(tau).unwrap())).powf(-1.0 / tau);
        assert!((est / lambda - 1.0).abs() < 1e-6);
    }

    #[test]
    fn sample_f_moment_examples() {
        let g = z(7);
        let three = g.cyclic_element(3).unwrap();
        let summary = LevelSummary {
            m_prime: 8,
            levels: 176,
            empty_levels: (40..176).collect(),
            singletons: [(three, 12)].into_iter().collect(),
        };
        let f = FunctionTable::from_fn(g.clone(), |x| {
            Complex::new(if x.residues()[0] == 3 { 1.0 } else { 0.0 }, 0.0)
        });
        let lambda = summary.support_estimate::<f64>().value().unwrap();
        let got = sample_f_moment(&summary, &f).unwrap();
        assert!((got.re - lambda).abs() < 1e-9 * lambda);

        let none = LevelSummary {
            m_prime: 8,
            levels: 176,
            empty_levels: vec![1],
            singletons: BTreeMap::new(),
        };
        assert!(matches!(sample_f_moment(&none, &f), Err(Error::NoSamples)));
    }

    #[test]
    fn sampler_matches_ideal_oracle_without_collisions() {
        let g = z(7);
        let mut s = SamplerSketch::new(g.clone(), 4, 6, 5).unwrap();
        let support = vec![(77u64, g.cyclic_element(2).unwrap())];
        s.update(77, &support[0].1).unwrap();
        assert_eq!(s.summary(), ideal_oracle_summary(4, 5, &support));
    }

    #[test]
    fn equal_memory_helper() {
        let got: Vec<u32> = (2..=6)
            .map(|r| equal_memory_m_prime(128, r, Parity::Odd))
            .collect();
        assert_eq!(got, vec![96, 64, 48, 39, 32]);
        assert_eq!(equal_memory_m_prime(64, 2, Parity::Even), 32);
    }
}
