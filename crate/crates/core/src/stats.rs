//! Special functions behind the merge and prune tests: log-gamma, the
//! regularized incomplete beta/gamma functions, the standard normal quantile,
//! and central/noncentral F distributions.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

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

const CF_MAX_ITER: usize = 20_000;
const CF_EPS: f64 = 1e-16;
const CF_TINY: f64 = 1e-300;

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut acc = LANCZOS_COEF[0];
        let t = x + LANCZOS_G + 0.5;
        for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
    }
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Regularized incomplete beta function `I_u(a, b)`.
///
/// Returns NaN outside `0 <= u <= 1`, `a, b > 0`.
pub fn reg_inc_beta(u: f64, a: f64, b: f64) -> f64 {
    reg_inc_beta_split(u, 1.0 - u, a, b)
}

/// `I_u(a, b)` with the complement `v = 1 - u` supplied separately so callers
/// can keep full precision near `u = 1`.
fn reg_inc_beta_split(u: f64, v: f64, a: f64, b: f64) -> f64 {
    if !(a > 0.0 && b > 0.0) || !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
        return f64::NAN;
    }
    if u == 0.0 {
        return 0.0;
    }
    if v == 0.0 {
        return 1.0;
    }
    if u > (a + 1.0) / (a + b + 2.0) {
        1.0 - beta_cf_term(v, u, b, a)
    } else {
        beta_cf_term(u, v, a, b)
    }
}

/// `u^a v^b / (a B(a,b))` times the continued fraction, modified Lentz.
fn beta_cf_term(u: f64, v: f64, a: f64, b: f64) -> f64 {
    let ln_front = a * u.ln() + b * v.ln() - ln_beta(a, b);
    let front = ln_front.exp() / a;
    if front == 0.0 {
        return 0.0;
    }

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * u / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * u / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * u / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    front * h
}

/// Upper regularized incomplete gamma `Q(a, x)`.
fn reg_gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let ln_front = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        // series for P
        let mut ap = a;
        let mut del = 1.0 / a;
        let mut sum = del;
        for _ in 0..CF_MAX_ITER {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * CF_EPS {
                break;
            }
        }
        1.0 - sum * ln_front.exp()
    } else {
        // continued fraction for Q
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / CF_TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..=CF_MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < CF_TINY {
                d = CF_TINY;
            }
            c = b + an / c;
            if c.abs() < CF_TINY {
                c = CF_TINY;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < CF_EPS {
                break;
            }
        }
        ln_front.exp() * h
    }
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x >= 0.0 {
        reg_gamma_q(0.5, x * x)
    } else {
        2.0 - reg_gamma_q(0.5, x * x)
    }
}

/// Standard normal CDF `Φ(z)`.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal quantile `Φ⁻¹(p)` for `p ∈ (0, 1)`.
pub fn std_normal_inv_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::DomainError(format!("normal quantile needs p in (0,1), got {p}")));
    }
    if p > 0.5 {
        // 1 - p is exact here
        return Ok(-lower_normal_quantile(1.0 - p));
    }
    Ok(lower_normal_quantile(p))
}

/// Acklam's rational approximation followed by two Halley corrections.
fn lower_normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    let mut x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    for _ in 0..2 {
        let e = std_normal_cdf(x) - p;
        let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

/// Degrees of freedom and noncentrality of an F distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FParams {
    pub d1: f64,
    pub d2: f64,
    pub noncentrality: f64,
}

impl FParams {
    pub fn central(d1: f64, d2: f64) -> Result<Self> {
        Self::noncentral(d1, d2, 0.0)
    }

    pub fn noncentral(d1: f64, d2: f64, noncentrality: f64) -> Result<Self> {
        if !(d1 > 0.0 && d2 > 0.0) {
            return Err(Error::DomainError(format!("F dof must be positive, got ({d1}, {d2})")));
        }
        if !(noncentrality >= 0.0) || !noncentrality.is_finite() {
            return Err(Error::DomainError(format!("noncentrality must be finite and >= 0, got {noncentrality}")));
        }
        Ok(Self { d1, d2, noncentrality })
    }

    /// `(u, 1 - u)` with `u = d1 x / (d1 x + d2)`, both computed without cancellation.
    fn beta_args(&self, x: f64) -> (f64, f64) {
        let num = self.d1 * x;
        let den = num + self.d2;
        if x.is_infinite() {
            return (1.0, 0.0);
        }
        (num / den, self.d2 / den)
    }
}

/// Central F CDF (the noncentrality field is ignored).
pub fn f_cdf(x: f64, params: &FParams) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let (u, v) = params.beta_args(x);
    reg_inc_beta_split(u, v, 0.5 * params.d1, 0.5 * params.d2)
}

/// Central F survival function `1 - CDF`, accurate in the upper tail.
pub fn f_sf(x: f64, params: &FParams) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let (u, v) = params.beta_args(x);
    reg_inc_beta_split(v, u, 0.5 * params.d2, 0.5 * params.d1)
}

/// Central F quantile by bisection on `log x`.
pub fn f_inv_cdf(p: f64, params: &FParams) -> Result<f64> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::DomainError(format!("F quantile needs p in [0,1), got {p}")));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    // g(x) > 0 once x is past the quantile; the tail form keeps precision for p near 1
    let upper = p > 0.5;
    let q = 1.0 - p;
    let g = |x: f64| {
        if upper {
            q - f_sf(x, params)
        } else {
            f_cdf(x, params) - p
        }
    };
    let mut lo = 1.0;
    let mut hi = 1.0;
    while g(lo) > 0.0 {
        lo *= 0.5;
        if lo < 1e-300 {
            return Ok(0.0);
        }
    }
    while g(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::DomainError("F quantile bracket overflow".into()));
        }
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-14 {
            break;
        }
    }
    Ok((lo * hi).sqrt())
}

/// Noncentral F CDF as a Poisson mixture of incomplete beta functions,
/// summed outward from the Poisson mode until the unsummed mass is below 1e-12.
pub fn noncentral_f_cdf(x: f64, params: &FParams) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let lambda = params.noncentrality;
    if lambda == 0.0 {
        return f_cdf(x, params);
    }
    let (u, v) = params.beta_args(x);
    let a = 0.5 * params.d1;
    let b = 0.5 * params.d2;
    let mu = 0.5 * lambda;
    let ln_mu = mu.ln();
    let weight = |k: usize| (-mu + k as f64 * ln_mu - ln_gamma(k as f64 + 1.0)).exp();

    let mode = mu.floor() as usize;
    let mut mass = 0.0;
    let mut sum = 0.0;
    let mut k = mode;
    loop {
        let w = weight(k);
        mass += w;
        sum += w * reg_inc_beta_split(u, v, a + k as f64, b);
        if k == 0 || w < 1e-18 {
            break;
        }
        k -= 1;
    }
    let cap = mode + 100 + (60.0 * mu.sqrt()) as usize;
    let mut k = mode + 1;
    while 1.0 - mass >= 1e-12 && k <= cap {
        let w = weight(k);
        mass += w;
        let ib = reg_inc_beta_split(u, v, a + k as f64, b);
        sum += w * ib;
        // terms are monotone in k; the remaining tail contributes at most its mass times ib
        if ib < 1e-300 && k > mode {
            break;
        }
        k += 1;
    }
    sum.clamp(0.0, 1.0)
}

/// Kolmogorov–Smirnov statistic and asymptotic p-value of `samples` against `cdf`.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sqrt_n = n.sqrt();
    let lam = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    (d, kolmogorov_q(lam))
}

/// `Q_KS(λ) = 2 Σ_{k≥1} (-1)^{k-1} e^{-2k²λ²}`
fn kolmogorov_q(lam: f64) -> f64 {
    if lam < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let k = k as f64;
        let term = sign * (-2.0 * k * k * lam * lam).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
