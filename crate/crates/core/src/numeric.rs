//! Small numerical kernels shared by the bound evaluators.

use std::f64::consts::{LN_2, PI};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// `ln(exp(a) + exp(b))` without overflow.
pub fn ln_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Ceiling that treats values within `1e-9` of an integer as that integer,
/// so products like `0.15 * 20` land on 3 rather than 4.
pub fn ceil_guarded(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// `log2(2^k - 1)`; `-inf` for `k = 0`.
pub fn log2_pow2_minus_one(k: f64) -> f64 {
    if k <= 0.0 {
        return f64::NEG_INFINITY;
    }
    // 2^k - 1 = 2^k (1 - 2^-k)
    k + (-(-k * LN_2).exp()).ln_1p() / LN_2
}

// ln(n!) for n = 0..=15, exact factorials then a single rounding in ln.
fn ln_factorial_small(n: u64) -> f64 {
    debug_assert!(n <= 15);
    let mut f = 1.0f64;
    for i in 2..=n {
        f *= i as f64;
    }
    f.ln()
}

/// Stirling error `ln(n!) - ln(sqrt(2 pi n) (n/e)^n)` for integer `n >= 1`.
pub fn stirlerr(n: u64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    debug_assert!(n >= 1);
    if n <= 15 {
        let nf = n as f64;
        return ln_factorial_small(n) - (nf + 0.5) * nf.ln() + nf - 0.5 * (2.0 * PI).ln();
    }
    let nf = n as f64;
    let nn = nf * nf;
    if n > 500 {
        (S0 - S1 / nn) / nf
    } else if n > 80 {
        (S0 - (S1 - S2 / nn) / nn) / nf
    } else if n > 35 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / nf
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / nf
    }
}

/// Deviance term `x ln(x / np) + np - x`, evaluated stably near `x = np`.
pub fn bd0(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        let v2 = v * v;
        for j in 1..1000 {
            ej *= v2;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / np).ln() + np - x
    }
}

/// Natural log of the binomial pmf `C(n,x) p^x q^(n-x)` with `q = 1 - p`
/// supplied separately. Uses Loader's saddle-point decomposition so the
/// relative accuracy of the pmf stays near machine precision for large `n`.
/// Degenerate `p` follows the `0^0 = 1` convention.
pub fn ln_binom_pmf(x: u64, n: u64, p: f64, q: f64) -> f64 {
    debug_assert!(x <= n);
    if p == 0.0 {
        return if x == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if q == 0.0 {
        return if x == n { 0.0 } else { f64::NEG_INFINITY };
    }
    let nf = n as f64;
    if x == 0 {
        if n == 0 {
            return 0.0;
        }
        return if p < 0.1 {
            -bd0(nf, nf * q) - nf * p
        } else {
            nf * q.ln()
        };
    }
    if x == n {
        return if q < 0.1 {
            -bd0(nf, nf * p) - nf * q
        } else {
            nf * p.ln()
        };
    }
    let xf = x as f64;
    let lc = stirlerr(n) - stirlerr(x) - stirlerr(n - x) - bd0(xf, nf * p) - bd0(nf - xf, nf * q);
    let lf = (2.0 * PI).ln() + xf.ln() + (-xf / nf).ln_1p();
    lc - 0.5 * lf
}

#[cfg(test)]
mod tests {
    use super::*;

    fn choose(n: u64, k: u64) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    #[test]
    fn pmf_matches_direct_product_small_n() {
        for n in 0..30u64 {
            for x in 0..=n {
                for &p in &[0.0789f64, 0.25, 0.5, 0.9] {
                    let direct = choose(n, x) * p.powi(x as i32) * (1.0 - p).powi((n - x) as i32);
                    let got = ln_binom_pmf(x, n, p, 1.0 - p).exp();
                    assert!(
                        (got - direct).abs() <= 1e-13 * direct.max(1e-300),
                        "n={n} x={x} p={p}: {got} vs {direct}"
                    );
                }
            }
        }
    }

    #[test]
    fn pmf_degenerate_p() {
        assert_eq!(ln_binom_pmf(0, 7, 0.0, 1.0), 0.0);
        assert_eq!(ln_binom_pmf(3, 7, 0.0, 1.0), f64::NEG_INFINITY);
        assert_eq!(ln_binom_pmf(7, 7, 1.0, 0.0), 0.0);
        assert_eq!(ln_binom_pmf(0, 0, 0.3, 0.7), 0.0);
    }

    #[test]
    fn stirlerr_is_continuous_across_branches() {
        // the series and exact branches should agree at the switch point
        let exact16 = {
            let lf: f64 = (2..=16).map(|i| (i as f64).ln()).sum();
            lf - 16.5 * 16f64.ln() + 16.0 - 0.5 * (2.0 * PI).ln()
        };
        assert!((stirlerr(16) - exact16).abs() < 1e-14);
    }

    #[test]
    fn guarded_ceiling() {
        assert_eq!(ceil_guarded(0.15 * 20.0), 3.0);
        assert_eq!(ceil_guarded(4.8), 5.0);
        assert_eq!(ceil_guarded(276.98), 277.0);
        assert_eq!(ceil_guarded(-0.0), 0.0);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let s: CompensatedSum = [1.0, 1e-17, 1e-17, -1.0].into_iter().collect();
        assert!((s.value() - 2e-17).abs() < 1e-30);
    }

    #[test]
    fn log2_m_minus_one() {
        assert_eq!(log2_pow2_minus_one(0.0), f64::NEG_INFINITY);
        assert!((log2_pow2_minus_one(1.0) - 0.0).abs() < 1e-15);
        assert!((log2_pow2_minus_one(2.0) - 3f64.log2()).abs() < 1e-15);
        assert!((log2_pow2_minus_one(600.0) - 600.0).abs() < 1e-12);
    }

    #[test]
    fn ln_add_exp_basics() {
        assert!((ln_add_exp(0.0, 0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(ln_add_exp(f64::NEG_INFINITY, -3.0), -3.0);
    }
}
