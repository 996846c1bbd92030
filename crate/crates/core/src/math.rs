//! Special functions and the numeric oracles behind the estimator constants.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lanczos approximation, g = 7, nine terms.
const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `Γ(x)` for real `x` that is not a non-positive integer.
///
/// Arguments below 1/2 are shifted up with `Γ(x) = Γ(x + 1) / x` before the
/// Lanczos series is applied.
pub fn gamma_fn<T: Scalar>(x: T) -> Result<T> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("gamma of non-finite {x:?}")));
    }
    if x <= T::zero() && x == x.floor() {
        return Err(Error::Domain(format!("gamma pole at {x:?}")));
    }
    let half = T::of(0.5);
    let mut shifted = x;
    let mut divisor = T::one();
    while shifted < half {
        divisor = divisor * shifted;
        shifted = shifted + T::one();
    }
    Ok(lanczos(shifted) / divisor)
}

fn lanczos<T: Scalar>(x: T) -> T {
    let x = x - T::one();
    let mut series = T::of(LANCZOS_COEF[0]);
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        series = series + T::of(c) / (x + T::of(i as f64));
    }
    let t = x + T::of(LANCZOS_G + 0.5);
    T::of((2.0 * std::f64::consts::PI).sqrt()) * t.powf(x + T::of(0.5)) * (-t).exp() * series
}

/// Principal-branch `z^e` with `0^e = 0` for `e > 0`.
pub fn cpow<T: Scalar>(z: Complex<T>, e: T) -> Complex<T> {
    if z.re == T::zero() && z.im == T::zero() {
        return Complex::new(T::zero(), T::zero());
    }
    z.powf(e)
}

/// `e^z - 1` without cancellation for small `|z|`.
pub fn cexpm1<T: Scalar>(z: Complex<T>) -> Complex<T> {
    let half = (z.im * T::of(0.5)).sin();
    let re = z.re.exp_m1() * z.im.cos() - T::of(2.0) * half * half;
    Complex::new(re, z.re.exp() * z.im.sin())
}

/// Parameters of `η1(x; a, b, c) = (exp(-a e^{-x}) - exp(-b e^{-x})) e^{cx}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EtaParams<T> {
    a: Complex<T>,
    b: Complex<T>,
    c: T,
}

impl<T: Scalar> EtaParams<T> {
    pub fn new(a: Complex<T>, b: Complex<T>, c: T) -> Result<Self> {
        if a.re < T::zero() || b.re < T::zero() {
            return Err(Error::Domain(
                "eta parameters need Re(a), Re(b) >= 0".into(),
            ));
        }
        if !(c > T::zero() && c < T::one()) {
            return Err(Error::Domain(format!(
                "eta exponent c = {c:?} outside (0, 1)"
            )));
        }
        Ok(Self { a, b, c })
    }

    pub fn a(&self) -> Complex<T> {
        self.a
    }

    pub fn b(&self) -> Complex<T> {
        self.b
    }

    pub fn c(&self) -> T {
        self.c
    }

    pub fn eval(&self, x: T) -> Complex<T> {
        // e^{-a s} - e^{-b s} = -e^{-a s} expm1(-(b - a) s), stable as s -> 0.
        let shrink = (-x).exp();
        let ea = (-self.a.scale(shrink)).exp();
        let diff = if shrink < T::one() {
            -ea * cexpm1(-(self.b - self.a).scale(shrink))
        } else {
            ea - (-self.b.scale(shrink)).exp()
        };
        diff.scale((self.c * x).exp())
    }

    /// `η1'(x) = c η1 + η2(x; a) - η2(x; b)` with `η2(x; a) = a e^{-x} exp(-a e^{-x}) e^{cx}`.
    pub fn derivative(&self, x: T) -> Complex<T> {
        let eta2 = |a: Complex<T>| {
            let shrink = (-x).exp();
            (a.scale(shrink) * (-a.scale(shrink)).exp()).scale((self.c * x).exp())
        };
        self.eval(x).scale(self.c) + eta2(self.a) - eta2(self.b)
    }
}

/// `∫ η1 dx = (a^c - b^c) Γ(-c)`.
pub fn eta1_closed<T: Scalar>(params: &EtaParams<T>) -> Result<Complex<T>> {
    let g = gamma_fn(-params.c)?;
    Ok((cpow(params.a, params.c) - cpow(params.b, params.c)).scale(g))
}

/// `∫ η1 dx` by adaptive Gauss-Kronrod quadrature over a window outside of
/// which the tails are bounded by `tolerance / 10`.
pub fn eta1_quadrature<T: Scalar>(params: &EtaParams<T>, tolerance: T) -> Result<Complex<T>> {
    let spread = (params.b - params.a).norm();
    if spread == T::zero() {
        return Ok(Complex::new(T::zero(), T::zero()));
    }
    let c = params.c;
    let tail = tolerance / T::of(10.0);
    // |η1| <= 2 e^{cx} on the left and |b - a| e^{(c-1)x} on the right.
    let mut lo = (tail * c / T::of(2.0)).ln() / c;
    // With r = min(Re a, Re b) > 0, also |η1| <= 2 exp(-r e^{-x}) for x < 0,
    // whose integral below -ln(u) is at most tail once r u >= ln(2 / tail).
    let r = params.a.re.min(params.b.re);
    if r > T::zero() {
        let u = (T::of(2.0) / tail).ln().max(T::one()) / r;
        lo = lo.max((-u.ln()).min(T::zero()));
    }
    let hi = (tail * (T::one() - c) / spread).ln() / (c - T::one());
    integrate(
        |x| params.eval(x),
        lo.min(hi),
        hi.max(lo),
        tolerance / T::of(10.0),
    )
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS_K: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GK_WEIGHTS_G: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<T: Scalar, F: Fn(T) -> Complex<T>>(f: &F, lo: T, hi: T) -> (Complex<T>, T) {
    let half = (hi - lo) * T::of(0.5);
    let mid = lo + half;
    let centre = f(mid);
    let mut kronrod = centre.scale(T::of(GK_WEIGHTS_K[7]));
    let mut gauss = centre.scale(T::of(GK_WEIGHTS_G[3]));
    for i in 0..7 {
        let dx = half * T::of(GK_NODES[i]);
        let pair = f(mid - dx) + f(mid + dx);
        kronrod = kronrod + pair.scale(T::of(GK_WEIGHTS_K[i]));
        if i % 2 == 1 {
            gauss = gauss + pair.scale(T::of(GK_WEIGHTS_G[i / 2]));
        }
    }
    let kronrod = kronrod.scale(half);
    let gauss = gauss.scale(half);
    (kronrod, (kronrod - gauss).norm())
}

/// Adaptive G7-K15 integration of a complex integrand on `[lo, hi]` to an
/// absolute tolerance.
pub fn integrate<T: Scalar, F: Fn(T) -> Complex<T>>(
    f: F,
    lo: T,
    hi: T,
    tolerance: T,
) -> Result<Complex<T>> {
    const INITIAL_PIECES: usize = 64;
    const MAX_INTERVALS: usize = 200_000;
    let width = (hi - lo) / T::of(INITIAL_PIECES as f64);
    let mut pending: Vec<(T, T, T)> = (0..INITIAL_PIECES)
        .map(|i| {
            let a = lo + width * T::of(i as f64);
            (a, a + width, tolerance / T::of(INITIAL_PIECES as f64))
        })
        .collect();
    let mut total = Complex::new(T::zero(), T::zero());
    let mut evaluated = 0usize;
    while let Some((a, b, tol)) = pending.pop() {
        evaluated += 1;
        if evaluated > MAX_INTERVALS {
            return Err(Error::Quadrature(format!(
                "more than {MAX_INTERVALS} subintervals on [{lo:?}, {hi:?}]"
            )));
        }
        let (value, err) = gk15(&f, a, b);
        if !value.re.is_finite() || !value.im.is_finite() {
            return Err(Error::Quadrature(format!(
                "non-finite integrand near [{a:?}, {b:?}]"
            )));
        }
        if err <= tol || (b - a) <= T::epsilon() * (T::one() + a.abs()) * T::of(64.0) {
            total = total + value;
        } else {
            let mid = a + (b - a) * T::of(0.5);
            let half_tol = tol * T::of(0.5);
            pending.push((a, mid, half_tol));
            pending.push((mid, b, half_tol));
        }
    }
    Ok(total)
}

/// Both sides of `|∫h - m^{-1} Σ_k h(k/m)| <= m^{-1} ∫|h'|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RiemannGap<T> {
    pub integral: Complex<T>,
    pub riemann_sum: Complex<T>,
    pub gap: T,
    pub bound: T,
}

impl<T: Scalar> RiemannGap<T> {
    /// Whether the inequality holds, allowing `slack` for quadrature error.
    pub fn holds(&self, slack: T) -> bool {
        self.gap <= self.bound + slack
    }
}

/// Evaluates both sides of the Riemann-sum inequality for `h` with
/// derivative `dh` at grid spacing `1/m`. `h` and `dh` must be negligible
/// outside `window`.
pub fn riemann_gap_check<T, H, D>(
    h: H,
    dh: D,
    m: u32,
    window: (T, T),
    tolerance: T,
) -> Result<RiemannGap<T>>
where
    T: Scalar,
    H: Fn(T) -> Complex<T>,
    D: Fn(T) -> Complex<T>,
{
    let (lo, hi) = window;
    let mf = T::of(f64::from(m));
    let integral = integrate(&h, lo, hi, tolerance)?;
    let abs_derivative =
        integrate(|x| Complex::new(dh(x).norm(), T::zero()), lo, hi, tolerance)?.re;
    let first = (lo * mf).ceil().to_i64().unwrap_or(0);
    let last = (hi * mf).floor().to_i64().unwrap_or(0);
    let riemann_sum = (first..=last)
        .map(|k| h(T::of(k as f64) / mf))
        .fold(Complex::new(T::zero(), T::zero()), |a, b| a + b)
        .unscale(mf);
    Ok(RiemannGap {
        integral,
        riemann_sum,
        gap: (integral - riemann_sum).norm(),
        bound: abs_derivative / mf,
    })
}
