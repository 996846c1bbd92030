//! Fourier estimators over a triple tower.
//!
//! For each character `γ` and column `j` the truncated aggregate is
//! `U_j(γ) = Σ_{k=a}^{b-1} (χ(X_k, γ) - 1) e^{k/(3m)} - τ2`, where
//! `τ2 = e^{(a-1)/(3m)} / (1 - e^{-1/(3m)})` stands in for the cells below
//! `a`. The f-moment estimate is
//! `φ = |Γ|^{-1} Σ_γ f̂(γ) U_1 U_2 U_3 / (m³ |Γ(-1/3)|³)`.

use std::borrow::Cow;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::group::{CharacterTable, FunctionTable, GroupDescriptor, GroupElement, SpectrumTable};
use crate::math::{cpow, gamma_fn};
use crate::scalar::Scalar;
use crate::tower::{IntegerTowerSketch, TowerSketch, COPIES};

/// Query-time switches.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EstimateOptions {
    /// Subtract `τ2` in every column, including columns on which `γ` is
    /// trivial. By default such columns aggregate to exactly 0, which is
    /// their value in the untruncated tower.
    pub literal_truncation: bool,
    /// Report `max(0, estimate)` for quantities that count elements.
    pub clamp_nonnegative: bool,
    /// Keep the per-character contributions in the report.
    pub keep_terms: bool,
}

/// Result of one estimator evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimateReport<T> {
    /// Real part of the estimator.
    pub estimate: T,
    /// Magnitude of the imaginary part, pure numerical noise for real `f`.
    pub imag_residual: T,
    /// Per-character contributions; they sum to the complex estimate.
    pub gamma_terms: Option<SpectrumTable<T>>,
    /// Predicted relative standard deviation, when requested.
    pub predicted_rel_std: Option<T>,
}

impl<T: Scalar> EstimateReport<T> {
    fn from_complex(value: Complex<T>, terms: Option<SpectrumTable<T>>) -> Self {
        Self {
            estimate: value.re,
            imag_residual: value.im.abs(),
            gamma_terms: terms,
            predicted_rel_std: None,
        }
    }

    fn negated(mut self) -> Self {
        self.estimate = -self.estimate;
        self.gamma_terms = self.gamma_terms.map(|t| t.scale(-T::one()));
        self
    }

    fn clamped(mut self, clamp: bool) -> Self {
        if clamp && self.estimate < T::zero() {
            self.estimate = T::zero();
        }
        self
    }

    /// Attaches `sqrt(variance) / |truth|`.
    pub fn with_prediction(mut self, variance: T, truth: T) -> Self {
        self.predicted_rel_std = Some(variance.max(T::zero()).sqrt() / truth.abs());
        self
    }
}

/// `Γ(-1/3)` from the shared Gamma routine.
pub fn gamma_minus_one_third<T: Scalar>() -> T {
    gamma_fn(T::of(-1.0 / 3.0)).expect("-1/3 is not a pole")
}

/// `Γ(-2/3)` from the shared Gamma routine.
pub fn gamma_minus_two_thirds<T: Scalar>() -> T {
    gamma_fn(T::of(-2.0 / 3.0)).expect("-2/3 is not a pole")
}

/// `τ2 = e^{(a-1)/(3m)} / (1 - e^{-1/(3m)})`.
pub fn truncation_correction<T: Scalar>(a: i64, m: u32) -> T {
    let m3 = 3.0 * f64::from(m);
    T::of(((a - 1) as f64 / m3).exp() / -(-1.0 / m3).exp_m1())
}

/// `m³ |Γ(-1/3)|³`.
fn normalizer<T: Scalar>(m: u32) -> T {
    let mf = T::of(f64::from(m));
    (mf * gamma_minus_one_third::<T>().abs()).powi(3)
}

/// Truncated aggregate `U_j(γ)` of a single column.
pub fn aggregate_column<T: Scalar>(
    sketch: &TowerSketch,
    column: usize,
    gamma: &GroupElement,
    options: &EstimateOptions,
) -> Result<Complex<T>> {
    if column >= COPIES {
        return Err(Error::InvalidConfig(format!(
            "column {column} out of range"
        )));
    }
    if !sketch.group().contains(gamma) {
        return Err(Error::GroupMismatch(format!(
            "character {gamma} is not in the dual group"
        )));
    }
    let chars = CharacterTable::<T>::new(sketch.group());
    let params = sketch.params();
    let weights = cell_weights::<T>(params.a(), params.b(), params.m());
    let occupied: Vec<(usize, &[u32])> = sketch
        .column(column)
        .enumerate()
        .filter(|(_, (_, r))| r.iter().any(|&x| x != 0))
        .map(|(i, (_, r))| (i, r))
        .collect();
    let tau2 = truncation_correction::<T>(params.a(), params.m());
    Ok(aggregate(
        &chars,
        &occupied,
        gamma.residues(),
        &weights,
        tau2,
        options,
    ))
}

fn cell_weights<T: Scalar>(a: i64, b: i64, m: u32) -> Vec<T> {
    let m3 = 3.0 * f64::from(m);
    (a..b).map(|k| T::of((k as f64 / m3).exp())).collect()
}

#[inline]
fn aggregate<T: Scalar>(
    chars: &CharacterTable<T>,
    occupied: &[(usize, &[u32])],
    gamma: &[u32],
    weights: &[T],
    tau2: T,
    options: &EstimateOptions,
) -> Complex<T> {
    let mut sum = Complex::new(T::zero(), T::zero());
    let mut trivial = true;
    for &(offset, x) in occupied {
        let phase = chars.phase(x, gamma);
        if phase != 0 {
            trivial = false;
            sum = sum + (chars.eval(phase) - T::one()).scale(weights[offset]);
        }
    }
    if trivial && !options.literal_truncation {
        return Complex::new(T::zero(), T::zero());
    }
    sum - tau2
}

/// All column aggregates `U_j(γ)` of a sketch, computed once and reused for
/// any number of spectra.
#[derive(Clone, Debug)]
pub struct ColumnAggregates<T> {
    group: GroupDescriptor,
    m: u32,
    columns: [Vec<Complex<T>>; COPIES],
}

impl<T: Scalar> ColumnAggregates<T> {
    pub fn new(sketch: &TowerSketch, options: &EstimateOptions) -> Self {
        let group = sketch.group().clone();
        let chars = CharacterTable::<T>::new(&group);
        let params = sketch.params();
        let weights = cell_weights::<T>(params.a(), params.b(), params.m());
        let tau2 = truncation_correction::<T>(params.a(), params.m());
        let gammas: Vec<GroupElement> = group.elements().collect();
        let columns = std::array::from_fn(|j| {
            let occupied: Vec<(usize, &[u32])> = sketch
                .column(j)
                .enumerate()
                .filter(|(_, (_, r))| r.iter().any(|&x| x != 0))
                .map(|(i, (_, r))| (i, r))
                .collect();
            gammas
                .iter()
                .map(|g| aggregate(&chars, &occupied, g.residues(), &weights, tau2, options))
                .collect()
        });
        Self {
            group,
            m: params.m(),
            columns,
        }
    }

    pub fn group(&self) -> &GroupDescriptor {
        &self.group
    }

    /// `U_j` over `Γ` in enumeration order.
    pub fn column(&self, j: usize) -> &[Complex<T>] {
        &self.columns[j]
    }

    /// `V(γ) / (m³ |Γ(-1/3)|³)` with `V = U_1 U_2 U_3`.
    pub fn normalized_products(&self) -> Vec<Complex<T>> {
        let norm = normalizer::<T>(self.m);
        (0..self.group.total_size())
            .map(|i| (self.columns[0][i] * self.columns[1][i] * self.columns[2][i]).unscale(norm))
            .collect()
    }

    /// `max_γ |V(γ)| / (m³ |Γ(-1/3)|³)`, the magnitude against which
    /// cancellation in the estimator is judged.
    pub fn term_scale(&self) -> T {
        self.normalized_products()
            .iter()
            .map(|v| v.norm())
            .fold(T::zero(), T::max)
    }

    /// The f-moment estimator for spectrum `s`.
    pub fn estimate(
        &self,
        s: &SpectrumTable<T>,
        options: &EstimateOptions,
    ) -> Result<EstimateReport<T>> {
        if s.group() != &self.group {
            return Err(Error::GroupMismatch(
                "spectrum and sketch are over different groups".into(),
            ));
        }
        let inv = T::one() / T::of(self.group.total_size() as f64);
        let terms: Vec<Complex<T>> = self
            .normalized_products()
            .into_iter()
            .zip(s.values())
            .map(|(v, fh)| (fh * v).scale(inv))
            .collect();
        let total = terms
            .iter()
            .fold(Complex::new(T::zero(), T::zero()), |a, b| a + b);
        let terms = if options.keep_terms {
            Some(SpectrumTable::from_values(self.group.clone(), terms)?)
        } else {
            None
        };
        Ok(EstimateReport::from_complex(total, terms).clamped(options.clamp_nonnegative))
    }

    /// `ψ_{j,p}`, the estimated number of coordinates equal to `j` modulo
    /// `p` (minus the support size when `j = 0`). Clamping applies to
    /// `j != 0` only.
    pub fn modulo(&self, p: u32, j: u64, options: &EstimateOptions) -> Result<EstimateReport<T>> {
        let s = modulo_spectrum::<T>(p, j)?;
        let opts = EstimateOptions {
            clamp_nonnegative: options.clamp_nonnegative && j != 0,
            ..*options
        };
        self.estimate(&s, &opts)
    }

    /// `-ψ_{0,p}`, the estimated number of coordinates nonzero modulo `p`.
    pub fn support(&self, p: u32, options: &EstimateOptions) -> Result<EstimateReport<T>> {
        let raw = self.modulo(
            p,
            0,
            &EstimateOptions {
                clamp_nonnegative: false,
                ..*options
            },
        )?;
        Ok(raw.negated().clamped(options.clamp_nonnegative))
    }
}

/// `f̂_{j,p}(γ) = e^{-2πijγ/p}`, the spectrum of `1{x = j}` on `Z_p`.
pub fn modulo_spectrum<T: Scalar>(p: u32, j: u64) -> Result<SpectrumTable<T>> {
    if j >= u64::from(p) {
        return Err(Error::OutOfRange { j, p: u64::from(p) });
    }
    let group = GroupDescriptor::cyclic(p)?;
    let pp = u64::from(p);
    let values = (0..pp)
        .map(|gamma| {
            let n = (pp - (j * gamma) % pp) % pp;
            let theta = std::f64::consts::TAU * n as f64 / pp as f64;
            Complex::new(T::of(theta.cos()), T::of(theta.sin()))
        })
        .collect();
    SpectrumTable::from_values(group, values)
}

/// `f-moment` estimator `φ_{f,m;a,b}` for spectrum `s`.
pub fn estimate_f<T: Scalar>(
    sketch: &TowerSketch,
    s: &SpectrumTable<T>,
    options: &EstimateOptions,
) -> Result<EstimateReport<T>> {
    if s.group() != sketch.group() {
        return Err(Error::GroupMismatch(
            "spectrum and sketch are over different groups".into(),
        ));
    }
    ColumnAggregates::new(sketch, options).estimate(s, options)
}

/// Sketches that can be viewed over `Z_p`.
pub trait ModuloSource {
    fn over_cyclic(&self, p: u32) -> Result<Cow<'_, TowerSketch>>;
}

impl ModuloSource for TowerSketch {
    fn over_cyclic(&self, p: u32) -> Result<Cow<'_, TowerSketch>> {
        if self.group().orders() != [p] {
            return Err(Error::GroupMismatch(format!("sketch group is not Z_{p}")));
        }
        Ok(Cow::Borrowed(self))
    }
}

impl ModuloSource for IntegerTowerSketch {
    fn over_cyclic(&self, p: u32) -> Result<Cow<'_, TowerSketch>> {
        Ok(Cow::Owned(self.reduce_mod(p)?))
    }
}

/// `ψ_{j,p}` on a sketch over `Z_p` or an integer sketch reduced modulo `p`.
pub fn estimate_modulo<T: Scalar, S: ModuloSource + ?Sized>(
    sketch: &S,
    p: u32,
    j: u64,
    options: &EstimateOptions,
) -> Result<EstimateReport<T>> {
    if j >= u64::from(p) {
        return Err(Error::OutOfRange { j, p: u64::from(p) });
    }
    let view = sketch.over_cyclic(p)?;
    ColumnAggregates::new(&view, options).modulo(p, j, options)
}

/// `-ψ_{0,p}`, the number of coordinates nonzero modulo `p`.
pub fn estimate_support<T: Scalar, S: ModuloSource + ?Sized>(
    sketch: &S,
    p: u32,
    options: &EstimateOptions,
) -> Result<EstimateReport<T>> {
    let view = sketch.over_cyclic(p)?;
    ColumnAggregates::new(&view, options).support(p, options)
}

/// Size of the union of the supports of two streams sketched with shared
/// randomness: the f-moment of the product sketch for `f̂ ≡ -1`.
pub fn estimate_union<T: Scalar>(
    s1: &TowerSketch,
    s2: &TowerSketch,
    options: &EstimateOptions,
) -> Result<EstimateReport<T>> {
    let product = s1.combine_product(s2)?;
    let group = product.group().clone();
    let spectrum = SpectrumTable::from_values(
        group.clone(),
        vec![Complex::new(-T::one(), T::zero()); group.total_size()],
    )?;
    estimate_f(&product, &spectrum, options)
}

/// `μ̂_R(γ) = E χ(R, -γ)` for the value distribution `R` of a nonzero
/// coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct RHatTable<T> {
    table: SpectrumTable<T>,
}

impl<T: Scalar> RHatTable<T> {
    /// Validates `|μ̂| <= 1 + 1e-9` and `μ̂(0) = 1`.
    pub fn from_values(group: GroupDescriptor, values: Vec<Complex<T>>) -> Result<Self> {
        let slack = T::of(1e-9);
        if let Some(v) = values.iter().find(|v| v.norm() > T::one() + slack) {
            return Err(Error::InvalidRhat(format!(
                "|μ̂| = {:?} exceeds 1",
                v.norm()
            )));
        }
        if values
            .first()
            .is_some_and(|v0| (v0 - T::one()).norm() > slack)
        {
            return Err(Error::InvalidRhat("μ̂(0) must equal 1".into()));
        }
        Ok(Self {
            table: SpectrumTable::from_values(group, values)?,
        })
    }

    /// From the probability mass function of `R`; this is its DFT.
    pub fn from_pmf(pmf: &FunctionTable<T>) -> Result<Self> {
        let total = pmf.values().iter().fold(T::zero(), |a, v| a + v.re);
        if pmf
            .values()
            .iter()
            .any(|v| v.re < T::zero() || v.im != T::zero())
        {
            return Err(Error::InvalidRhat(
                "pmf entries must be real and nonnegative".into(),
            ));
        }
        if (total - T::one()).abs() > T::of(1e-9) {
            return Err(Error::InvalidRhat(format!("pmf sums to {total:?}")));
        }
        let s = crate::group::dft(pmf);
        Self::from_values(s.group().clone(), s.values().to_vec())
    }

    /// From occurrence counts of the nonzero values.
    pub fn from_counts(group: GroupDescriptor, counts: &[(GroupElement, u64)]) -> Result<Self> {
        let total: u64 = counts.iter().map(|(_, c)| c).sum();
        if total == 0 {
            return Err(Error::InvalidRhat("no occurrences".into()));
        }
        let mut pmf = vec![Complex::new(T::zero(), T::zero()); group.total_size()];
        for (x, c) in counts {
            pmf[group.index_of(x)?].re =
                pmf[group.index_of(x)?].re + T::of(*c as f64 / total as f64);
        }
        Self::from_pmf(&FunctionTable::from_values(group, pmf)?)
    }

    pub fn group(&self) -> &GroupDescriptor {
        self.table.group()
    }

    pub fn values(&self) -> &[Complex<T>] {
        self.table.values()
    }
}

/// Variance factor `α_{f,R}` as a double sum over `Γ x Γ`.
pub fn variance_factor<T: Scalar>(s: &SpectrumTable<T>, rhat: &RHatTable<T>) -> Result<Complex<T>> {
    let group = s.group();
    if group != rhat.group() {
        return Err(Error::GroupMismatch(
            "spectrum and characteristic table differ".into(),
        ));
    }
    let n = group.total_size();
    let mu = rhat.values();
    let elements: Vec<GroupElement> = group.elements().collect();
    let neg: Vec<usize> = elements
        .iter()
        .map(|g| {
            group
                .index_of(&group.neg(g).expect("own element"))
                .expect("own element")
        })
        .collect();
    let one = Complex::new(T::one(), T::zero());
    let two = Complex::new(T::of(2.0), T::zero());
    let e = T::of(2.0 / 3.0);
    let left: Vec<Complex<T>> = (0..n).map(|g| cpow(one - mu[neg[g]], e)).collect();
    let right: Vec<Complex<T>> = (0..n).map(|g| cpow(one - mu[g], e)).collect();
    let zero = Complex::new(T::zero(), T::zero());
    let mut acc = zero;
    for g in 0..n {
        let fg = s.values()[g];
        if fg == zero || left[g] == zero {
            continue;
        }
        for h in 0..n {
            let fh = s.values()[h];
            if fh == zero || right[h] == zero {
                continue;
            }
            // γ' - γ
            let diff = group
                .add(&elements[h], &elements[neg[g]])
                .expect("own elements");
            let d = group.index_of(&diff).expect("own element");
            let bracket = cpow(one - mu[d], e) - cpow(two - mu[neg[g]] - mu[h], e);
            acc = acc + fg * fh.conj() * bracket * left[g] * right[h];
        }
    }
    Ok(-acc.unscale(T::of((n * n) as f64)))
}

/// Leading-order variance `3 m^{-1} λ² (-Γ(-2/3)) Γ(-1/3)^{-2} Re α_{f,R}`.
pub fn predict_variance<T: Scalar>(
    s: &SpectrumTable<T>,
    rhat: &RHatTable<T>,
    lambda: T,
    m: u32,
) -> Result<T> {
    let alpha = variance_factor(s, rhat)?;
    let g13 = gamma_minus_one_third::<T>();
    let g23 = gamma_minus_two_thirds::<T>();
    let mf = T::of(f64::from(m));
    Ok(T::of(3.0) / mf * lambda * lambda * (-g23) / (g13 * g13) * alpha.re)
}
