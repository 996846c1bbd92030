//! Ready-made experiments.

use hsketch_core::{
    equal_memory_m_prime, Complex, EstimateOptions, FunctionTable, GroupDescriptor, Parity,
};

use crate::error::{HarnessError, Result};
use crate::experiment::{ExperimentConfig, Quantity, Scheme, Task};
use crate::workload::{even_split, UnionSpec, ValueDomain, WorkloadSpec};

/// Coordinates are drawn from `[0, 2^32)`.
pub const UNIVERSE: u64 = 1 << 32;

fn z(p: u32) -> GroupDescriptor {
    GroupDescriptor::cyclic(p).expect("valid order")
}

fn group_workload(
    name: &str,
    p: u32,
    values: &[i64],
    counts: &[u64],
    shuffle_seed: u64,
) -> WorkloadSpec {
    WorkloadSpec {
        name: name.into(),
        domain: ValueDomain::Group(z(p)),
        value_counts: values
            .iter()
            .zip(counts)
            .map(|(&v, &c)| (vec![v], c))
            .collect(),
        universe: UNIVERSE,
        shuffle_seed,
        cancellation_pairs: 0,
    }
}

/// Three `Z_7` vectors with 10000 nonzero coordinates each: uniform over
/// `1..=6`, uniform over `{1, 3, 4}`, and all threes.
pub fn modulo7_workloads() -> Vec<WorkloadSpec> {
    vec![
        group_workload("x1", 7, &[1, 2, 3, 4, 5, 6], &even_split(10_000, 6), 1),
        group_workload("x2", 7, &[1, 3, 4], &even_split(10_000, 3), 2),
        group_workload("x3", 7, &[3], &[10_000], 3),
    ]
}

/// Ideal oracle with `m' = 3m`, fingerprint samplers with `r = 2..=6` at
/// equal memory, and the Fourier tower with parameter `m`.
pub fn equal_memory_schemes(m: u32, group: &GroupDescriptor) -> Vec<Scheme> {
    let parity = Parity::of(group);
    std::iter::once(Scheme::IdealOracle { m_prime: 3 * m })
        .chain((2..=6).map(|r| Scheme::Fingerprint {
            m_prime: equal_memory_m_prime(m, r, parity),
            r,
        }))
        .chain(std::iter::once(Scheme::fourier(m)))
        .collect()
}

pub fn modulo7(m: u32, trials: u32, base_seed: u64, options: EstimateOptions) -> ExperimentConfig {
    ExperimentConfig {
        tasks: modulo7_workloads()
            .into_iter()
            .map(|workload| Task::Moments {
                workload,
                quantities: Quantity::modulo_family(7),
            })
            .collect(),
        schemes: equal_memory_schemes(m, &z(7)),
        trials,
        base_seed,
        options,
        output: None,
    }
}

/// Signed representative of `x ∈ Z_p` in `(-p/2, p/2]`.
pub fn signed_representative(residue: u32, p: u32) -> i64 {
    let r = i64::from(residue);
    if 2 * r > i64::from(p) {
        r - i64::from(p)
    } else {
        r
    }
}

/// `f(x) = x²` on `Z_128` identified with `{-63, ..., 64}`.
pub fn l2_function() -> FunctionTable<f64> {
    FunctionTable::from_fn(z(128), |x| {
        let s = signed_representative(x.residues()[0], 128) as f64;
        Complex::new(s * s, 0.0)
    })
}

/// 9900 ones and 100 sixty-fours over `Z_128`; the second moment is 419500.
pub fn l2_workload() -> WorkloadSpec {
    group_workload("l2", 128, &[1, 64], &[9900, 100], 4)
}

pub fn l2_quantity() -> Quantity {
    Quantity::Moment {
        name: "l2".into(),
        f: l2_function(),
    }
}

/// Fourier tower with parameter `m` against the ideal oracle with
/// `m' = 3m`.
pub fn l2(m: u32, trials: u32, base_seed: u64, options: EstimateOptions) -> ExperimentConfig {
    ExperimentConfig {
        tasks: vec![Task::Moments {
            workload: l2_workload(),
            quantities: vec![l2_quantity()],
        }],
        schemes: vec![Scheme::fourier(m), Scheme::IdealOracle { m_prime: 3 * m }],
        trials,
        base_seed,
        options,
        output: None,
    }
}

/// `|A| = |B| = 600`, `|A ∩ B| = 200` over `Z_7`.
pub fn union_spec() -> UnionSpec {
    UnionSpec {
        name: "union".into(),
        p: 7,
        only_a: 400,
        only_b: 400,
        both: 200,
        universe: UNIVERSE,
        shuffle_seed: 5,
    }
}

pub fn union(m: u32, trials: u32, base_seed: u64, options: EstimateOptions) -> ExperimentConfig {
    ExperimentConfig {
        tasks: vec![Task::Union(union_spec())],
        schemes: vec![Scheme::fourier(m)],
        trials,
        base_seed,
        options,
        output: None,
    }
}

/// Integer workload with counts (300, 500, 100, 50, 25, 25) for the values
/// `1..=6` plus `sevens` coordinates equal to 7, which vanish modulo 7.
pub fn psi_workload(sevens: u64) -> WorkloadSpec {
    let mut value_counts: Vec<(Vec<i64>, u64)> = [300, 500, 100, 50, 25, 25]
        .iter()
        .zip(1..)
        .map(|(&c, v)| (vec![v], c))
        .collect();
    if sevens > 0 {
        value_counts.push((vec![7], sevens));
    }
    WorkloadSpec {
        name: "psi".into(),
        domain: ValueDomain::Integer,
        value_counts,
        universe: UNIVERSE,
        shuffle_seed: 6,
        cancellation_pairs: 0,
    }
}

/// The same counts as a `Z_7` workload, for schemes that need a group.
pub fn psi_group_workload() -> WorkloadSpec {
    group_workload(
        "psi",
        7,
        &[1, 2, 3, 4, 5, 6],
        &[300, 500, 100, 50, 25, 25],
        6,
    )
}

/// Keeps schemes whose name equals `name`; `all` keeps everything.
pub fn filter_schemes(config: &mut ExperimentConfig, name: &str) -> Result<()> {
    if name == "all" {
        return Ok(());
    }
    let available: Vec<String> = config.schemes.iter().map(Scheme::name).collect();
    config.schemes.retain(|s| s.name() == name);
    if config.schemes.is_empty() {
        return Err(HarnessError::Config(format!(
            "no scheme `{name}`; available: {}",
            available.join(", ")
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_memory_for_m128() {
        let s = equal_memory_schemes(128, &z(7));
        let names: Vec<String> = s.iter().map(Scheme::name).collect();
        assert_eq!(
            names,
            [
                "ideal-oracle",
                "fingerprint-r2",
                "fingerprint-r3",
                "fingerprint-r4",
                "fingerprint-r5",
                "fingerprint-r6",
                "fourier"
            ]
        );
        let primes: Vec<u32> = s
            .iter()
            .filter_map(|x| match x {
                Scheme::Fingerprint { m_prime, .. } => Some(*m_prime),
                Scheme::IdealOracle { m_prime } => Some(*m_prime),
                Scheme::Fourier { .. } => None,
            })
            .collect();
        assert_eq!(primes, [384, 96, 64, 48, 39, 32]);
    }

    #[test]
    fn signed_representatives() {
        assert_eq!(signed_representative(64, 128), 64);
        assert_eq!(signed_representative(65, 128), -63);
        assert_eq!(signed_representative(127, 128), -1);
        assert_eq!(signed_representative(3, 7), 3);
        assert_eq!(signed_representative(4, 7), -3);
    }

    #[test]
    fn scheme_filter() {
        let mut c = modulo7(16, 1, 0, EstimateOptions::default());
        filter_schemes(&mut c, "fingerprint-r3").unwrap();
        assert_eq!(c.schemes.len(), 1);
        assert!(filter_schemes(&mut c, "fourier").is_err());
    }
}
