//! Finite abelian groups `Z_{p1} x ... x Z_{pd}`, their characters, and the
//! discrete Fourier transform between functions on `G` and on the dual `Γ`.
//!
//! Conventions:
//! - `χ(x, γ) = exp(2πi Σ_t x_t γ_t / p_t)`; the dual group shares the
//!   descriptor of `G`.
//! - Counting measure on `G`, uniform probability measure on `Γ`:
//!   `f̂(γ) = Σ_x f(x) conj χ(x, γ)` and `f(x) = |Γ|^{-1} Σ_γ f̂(γ) χ(x, γ)`.
//! - Elements are enumerated mixed-radix, first factor most significant.

use std::fmt;
use std::io::{BufRead, Write};

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAX_TOTAL_SIZE: u128 = 1 << 31;
/// Root tables are materialized up to this order; larger groups fall back to
/// direct trigonometric evaluation.
const MAX_ROOT_TABLE: u64 = 1 << 20;

/// Canonical residue of `v` modulo `p` in `[0, p)`.
pub fn reduce_mod(v: i64, p: u32) -> u32 {
    debug_assert!(p >= 2);
    v.rem_euclid(i64::from(p)) as u32
}

/// Descriptor of `G = Z_{p1} x ... x Z_{pd}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GroupDescriptor {
    orders: Vec<u32>,
    total_size: usize,
}

/// An element of a [`GroupDescriptor`], stored as its residue vector.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupElement {
    residues: Vec<u32>,
}

impl GroupElement {
    pub fn residues(&self) -> &[u32] {
        &self.residues
    }

    pub fn is_identity(&self) -> bool {
        self.residues.iter().all(|&r| r == 0)
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let [r] = self.residues.as_slice() {
            return write!(f, "{r}");
        }
        write!(f, "(")?;
        for (i, r) in self.residues.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{r}")?;
        }
        write!(f, ")")
    }
}

impl GroupDescriptor {
    /// Builds `Z_{orders[0]} x ... x Z_{orders[d-1]}`.
    pub fn new(orders: &[u32]) -> Result<Self> {
        if orders.is_empty() {
            return Err(Error::InvalidGroup(
                "at least one cyclic factor is required".into(),
            ));
        }
        if let Some(&bad) = orders.iter().find(|&&p| p < 2) {
            return Err(Error::InvalidGroup(format!(
                "cyclic order {bad} is below 2"
            )));
        }
        let total: u128 = orders.iter().map(|&p| u128::from(p)).product();
        if total > MAX_TOTAL_SIZE {
            return Err(Error::TooLarge(total));
        }
        Ok(Self {
            orders: orders.to_vec(),
            total_size: total as usize,
        })
    }

    /// The cyclic group `Z_p`.
    pub fn cyclic(p: u32) -> Result<Self> {
        Self::new(&[p])
    }

    pub fn orders(&self) -> &[u32] {
        &self.orders
    }

    pub fn rank(&self) -> usize {
        self.orders.len()
    }

    pub fn total_size(&self) -> usize {
        self.total_size
    }

    /// `G1 x G2`, factors of `self` first.
    pub fn product(&self, other: &Self) -> Result<Self> {
        let mut orders = self.orders.clone();
        orders.extend_from_slice(&other.orders);
        Self::new(&orders)
    }

    /// Whether `|G|` is odd (bi-splitters suffice) or even (tri-splitters).
    pub fn is_odd_order(&self) -> bool {
        self.total_size % 2 == 1
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement {
            residues: vec![0; self.rank()],
        }
    }

    /// Element with the given residues, reduced into canonical range.
    pub fn element(&self, residues: &[i64]) -> Result<GroupElement> {
        if residues.len() != self.rank() {
            return Err(Error::GroupMismatch(format!(
                "element of rank {} for group of rank {}",
                residues.len(),
                self.rank()
            )));
        }
        Ok(GroupElement {
            residues: residues
                .iter()
                .zip(&self.orders)
                .map(|(&r, &p)| reduce_mod(r, p))
                .collect(),
        })
    }

    /// Element of a cyclic group from a signed representative.
    pub fn cyclic_element(&self, v: i64) -> Result<GroupElement> {
        self.element(&[v])
    }

    /// Wraps already-reduced residues, validating them.
    pub fn element_from_residues(&self, residues: Vec<u32>) -> Result<GroupElement> {
        self.check_residues(&residues)?;
        Ok(GroupElement { residues })
    }

    pub(crate) fn check_residues(&self, residues: &[u32]) -> Result<()> {
        if residues.len() != self.rank() {
            return Err(Error::GroupMismatch(format!(
                "element of rank {} for group of rank {}",
                residues.len(),
                self.rank()
            )));
        }
        if residues.iter().zip(&self.orders).any(|(&r, &p)| r >= p) {
            return Err(Error::GroupMismatch(format!(
                "residues {residues:?} not reduced for orders {:?}",
                self.orders
            )));
        }
        Ok(())
    }

    pub fn contains(&self, x: &GroupElement) -> bool {
        self.check_residues(&x.residues).is_ok()
    }

    /// Element at position `index` of the mixed-radix enumeration.
    pub fn element_at(&self, mut index: usize) -> GroupElement {
        debug_assert!(index < self.total_size);
        let mut residues = vec![0u32; self.rank()];
        for (slot, &p) in residues.iter_mut().zip(&self.orders).rev() {
            *slot = (index % p as usize) as u32;
            index /= p as usize;
        }
        GroupElement { residues }
    }

    /// Position of `x` in the mixed-radix enumeration.
    pub fn index_of(&self, x: &GroupElement) -> Result<usize> {
        self.check_residues(&x.residues)?;
        Ok(x.residues
            .iter()
            .zip(&self.orders)
            .fold(0usize, |acc, (&r, &p)| acc * p as usize + r as usize))
    }

    pub fn elements(&self) -> impl Iterator<Item = GroupElement> + '_ {
        (0..self.total_size).map(|i| self.element_at(i))
    }

    pub fn add(&self, x: &GroupElement, y: &GroupElement) -> Result<GroupElement> {
        self.check_residues(&x.residues)?;
        self.check_residues(&y.residues)?;
        Ok(GroupElement {
            residues: x
                .residues
                .iter()
                .zip(&y.residues)
                .zip(&self.orders)
                .map(|((&a, &b), &p)| ((u64::from(a) + u64::from(b)) % u64::from(p)) as u32)
                .collect(),
        })
    }

    pub fn neg(&self, x: &GroupElement) -> Result<GroupElement> {
        self.check_residues(&x.residues)?;
        Ok(GroupElement {
            residues: x
                .residues
                .iter()
                .zip(&self.orders)
                .map(|(&a, &p)| if a == 0 { 0 } else { p - a })
                .collect(),
        })
    }

    /// `x` added to itself `n` times; `n` is reduced modulo each order first.
    pub fn scalar_mul(&self, n: i64, x: &GroupElement) -> Result<GroupElement> {
        self.check_residues(&x.residues)?;
        Ok(GroupElement {
            residues: x
                .residues
                .iter()
                .zip(&self.orders)
                .map(|(&a, &p)| {
                    let n = u64::from(reduce_mod(n, p));
                    ((n * u64::from(a)) % u64::from(p)) as u32
                })
                .collect(),
        })
    }

    /// `χ(x, γ)`.
    pub fn char_eval<T: Scalar>(
        &self,
        x: &GroupElement,
        gamma: &GroupElement,
    ) -> Result<Complex<T>> {
        self.check_residues(&x.residues)?;
        self.check_residues(&gamma.residues)?;
        let chars = CharacterTable::<T>::new(self);
        Ok(chars.eval(chars.phase(&x.residues, &gamma.residues)))
    }
}

/// Exact phase arithmetic for characters of a fixed group.
///
/// `χ(x, γ) = exp(2πi · phase / L)` where `L = lcm(orders)` and `phase` is an
/// integer in `[0, L)`; a character value is exactly 1 iff its phase is 0.
#[derive(Clone, Debug)]
pub struct CharacterTable<T> {
    orders: Vec<u64>,
    lcm: u64,
    scale: Vec<u64>,
    roots: Option<Vec<Complex<T>>>,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl<T: Scalar> CharacterTable<T> {
    pub fn new(group: &GroupDescriptor) -> Self {
        let orders: Vec<u64> = group.orders().iter().map(|&p| u64::from(p)).collect();
        let lcm = orders.iter().fold(1u64, |l, &p| l / gcd(l, p) * p);
        let scale = orders.iter().map(|&p| lcm / p).collect();
        let roots =
            (lcm <= MAX_ROOT_TABLE).then(|| (0..lcm).map(|n| root_of_unity(n, lcm)).collect());
        Self {
            orders,
            lcm,
            scale,
            roots,
        }
    }

    pub fn lcm(&self) -> u64 {
        self.lcm
    }

    /// Phase numerator of `χ(x, γ)` over `lcm`.
    #[inline]
    pub fn phase(&self, x: &[u32], gamma: &[u32]) -> u64 {
        let mut acc = 0u64;
        for t in 0..self.orders.len() {
            let prod = (u64::from(x[t]) * u64::from(gamma[t])) % self.orders[t];
            acc += prod * self.scale[t];
        }
        acc % self.lcm
    }

    #[inline]
    pub fn eval(&self, phase: u64) -> Complex<T> {
        match &self.roots {
            Some(roots) => roots[phase as usize],
            None => root_of_unity(phase, self.lcm),
        }
    }
}

fn root_of_unity<T: Scalar>(n: u64, order: u64) -> Complex<T> {
    let theta = std::f64::consts::TAU * (n as f64) / (order as f64);
    Complex::new(T::of(theta.cos()), T::of(theta.sin()))
}

/// A complex-valued function on `G`, tabulated in enumeration order.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionTable<T> {
    group: GroupDescriptor,
    values: Vec<Complex<T>>,
}

/// A complex-valued function on the dual group `Γ`, tabulated in
/// enumeration order.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumTable<T> {
    group: GroupDescriptor,
    values: Vec<Complex<T>>,
}

macro_rules! table_common {
    ($name:ident) => {
        impl<T: Scalar> $name<T> {
            pub fn from_values(group: GroupDescriptor, values: Vec<Complex<T>>) -> Result<Self> {
                if values.len() != group.total_size() {
                    return Err(Error::GroupMismatch(format!(
                        "table has {} entries, group has {} elements",
                        values.len(),
                        group.total_size()
                    )));
                }
                Ok(Self { group, values })
            }

            pub fn from_fn(
                group: GroupDescriptor,
                mut f: impl FnMut(&GroupElement) -> Complex<T>,
            ) -> Self {
                let values = group.elements().map(|x| f(&x)).collect();
                Self { group, values }
            }

            pub fn zeros(group: GroupDescriptor) -> Self {
                let values = vec![Complex::new(T::zero(), T::zero()); group.total_size()];
                Self { group, values }
            }

            pub fn group(&self) -> &GroupDescriptor {
                &self.group
            }

            pub fn values(&self) -> &[Complex<T>] {
                &self.values
            }

            pub fn get(&self, x: &GroupElement) -> Result<Complex<T>> {
                Ok(self.values[self.group.index_of(x)?])
            }

            /// Pointwise linear combination `self + c·other`.
            pub fn add_scaled(&self, c: T, other: &Self) -> Result<Self> {
                if self.group != other.group {
                    return Err(Error::GroupMismatch("tables over different groups".into()));
                }
                let values = self
                    .values
                    .iter()
                    .zip(&other.values)
                    .map(|(a, b)| a + b.scale(c))
                    .collect();
                Ok(Self {
                    group: self.group.clone(),
                    values,
                })
            }

            pub fn scale(&self, c: T) -> Self {
                Self {
                    group: self.group.clone(),
                    values: self.values.iter().map(|v| v.scale(c)).collect(),
                }
            }

            /// Writes the `index,re,im` CSV form.
            pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
                writeln!(out, "index,re,im")?;
                for (i, v) in self.values.iter().enumerate() {
                    writeln!(out, "{},{},{}", i, v.re.to_f64_lossy(), v.im.to_f64_lossy())?;
                }
                Ok(())
            }

            /// Reads the `index,re,im` CSV form; rows must be complete and in order.
            pub fn read_csv<R: BufRead>(group: GroupDescriptor, input: R) -> Result<Self> {
                let values = read_table_csv(group.total_size(), input)?;
                Self::from_values(group, values)
            }
        }
    };
}

table_common!(FunctionTable);
table_common!(SpectrumTable);

fn read_table_csv<T: Scalar, R: BufRead>(expected: usize, input: R) -> Result<Vec<Complex<T>>> {
    let bad = |msg: String| Error::GroupMismatch(format!("table csv: {msg}"));
    let mut lines = input.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == "index,re,im" => {}
        other => return Err(bad(format!("bad header {other:?}"))),
    }
    let mut values = Vec::with_capacity(expected);
    for (row, line) in lines.enumerate() {
        let line = line.map_err(|e| bad(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        let [idx, re, im] = fields.as_slice() else {
            return Err(bad(format!("row {row} has {} fields", fields.len())));
        };
        let idx: usize = idx
            .parse()
            .map_err(|_| bad(format!("row {row}: bad index")))?;
        if idx != values.len() {
            return Err(bad(format!("row {row}: index {idx} out of order")));
        }
        let re: f64 = re.parse().map_err(|_| bad(format!("row {row}: bad re")))?;
        let im: f64 = im.parse().map_err(|_| bad(format!("row {row}: bad im")))?;
        values.push(Complex::new(T::of(re), T::of(im)));
    }
    if values.len() != expected {
        return Err(bad(format!("{} rows, expected {expected}", values.len())));
    }
    Ok(values)
}

/// `f̂(γ) = Σ_x f(x) conj χ(x, γ)`; naive `O(|G|²)`.
pub fn dft<T: Scalar>(f: &FunctionTable<T>) -> SpectrumTable<T> {
    let group = f.group().clone();
    let chars = CharacterTable::<T>::new(&group);
    let elements: Vec<GroupElement> = group.elements().collect();
    let values = elements
        .iter()
        .map(|gamma| {
            elements.iter().zip(f.values()).fold(
                Complex::new(T::zero(), T::zero()),
                |acc, (x, fx)| {
                    acc + fx * chars.eval(chars.phase(&x.residues, &gamma.residues)).conj()
                },
            )
        })
        .collect();
    SpectrumTable { group, values }
}

/// `f(x) = |Γ|^{-1} Σ_γ f̂(γ) χ(x, γ)`; exact inverse of [`dft`].
pub fn idft<T: Scalar>(s: &SpectrumTable<T>) -> FunctionTable<T> {
    let group = s.group().clone();
    let chars = CharacterTable::<T>::new(&group);
    let elements: Vec<GroupElement> = group.elements().collect();
    let inv = T::one() / T::of(group.total_size() as f64);
    let values = elements
        .iter()
        .map(|x| {
            elements
                .iter()
                .zip(s.values())
                .fold(Complex::new(T::zero(), T::zero()), |acc, (gamma, sg)| {
                    acc + sg * chars.eval(chars.phase(&x.residues, &gamma.residues))
                })
                .scale(inv)
        })
        .collect();
    FunctionTable { group, values }
}

/// `‖f‖_∞` and `‖f̂‖_1` (Haar weight `1/|Γ|`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norms<T> {
    pub norm_inf: T,
    pub hat_norm_1: T,
}

pub fn norms<T: Scalar>(f: &FunctionTable<T>, s: &SpectrumTable<T>) -> Result<Norms<T>> {
    if f.group() != s.group() {
        return Err(Error::GroupMismatch(
            "function and spectrum over different groups".into(),
        ));
    }
    let norm_inf = f.values().iter().map(|v| v.norm()).fold(T::zero(), T::max);
    Ok(Norms {
        norm_inf,
        hat_norm_1: spectrum_norm_1(s),
    })
}

/// `‖f̂‖_1 = |Γ|^{-1} Σ_γ |f̂(γ)|`.
pub fn spectrum_norm_1<T: Scalar>(s: &SpectrumTable<T>) -> T {
    let sum = s
        .values()
        .iter()
        .map(|v| v.norm())
        .fold(T::zero(), |a, b| a + b);
    sum / T::of(s.group().total_size() as f64)
}
