//! Output-count distribution of a non-paralyzable counter with constant dead
//! time `tau`, driven by Poisson input of rate `lambda` over a window `T`.
//!
//! ```text
//! Π_n = ϑ(T-(n-1)τ) [1 - P(n-1; λ(T-(n-1)τ))] - ϑ(T-nτ) [1 - P(n; λ(T-nτ))],  n >= 1
//! Π_0 = e^{-λT}
//! ```
//!
//! where `P(m; a) = e^{-a} Σ_{k<=m} a^k/k!` and `ϑ(0) = 0`.

use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Result};

/// Sum of the pmf must be within this of 1.
pub const NORMALIZATION_TOL: f64 = 1e-12;
/// Negative rounding below this is clamped to zero.
const NEGATIVE_CLAMP: f64 = -1e-15;
/// With `tau = 0`, the pmf is kept up to `λT + TAIL_SIGMAS sqrt(λT) + 20`.
const TAIL_SIGMAS: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CounterParams {
    pub lambda: f64,
    pub t: f64,
    pub tau: f64,
}

impl CounterParams {
    pub fn new(lambda: f64, t: f64, tau: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid("lambda", lambda, "must be positive"));
        }
        if !(t > 0.0 && t.is_finite()) {
            return Err(invalid("T", t, "must be positive"));
        }
        if !(tau >= 0.0) {
            return Err(invalid("tau", tau, "must be nonnegative"));
        }
        Ok(Self { lambda, t, tau })
    }

    /// Largest count with nonzero probability (`None` means unbounded, `tau = 0`).
    pub fn support_bound(&self) -> Option<usize> {
        (self.tau > 0.0).then(|| {
            // largest n with T - (n-1) tau > 0
            let q = self.t / self.tau;
            let f = q.floor();
            (if f == q { f as usize } else { f as usize + 1 }).max(1)
        })
    }
}

/// Unit step with `ϑ(0) = 0`.
pub fn heaviside(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// `(λT)^n e^{-λT} / n!`, in log space.
pub fn poisson_pmf(lambda: f64, t: f64, n: u64) -> f64 {
    let a = lambda * t;
    if a == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (n as f64 * a.ln() - a - ln_gamma(n as f64 + 1.0)).exp()
}

/// `1 - e^{-a} Σ_{k=0}^{m} a^k/k!`, the Poisson upper tail `P(N > m)`.
///
/// Summed directly from whichever side avoids cancellation.
fn poisson_tail_above(a: f64, m: u64) -> f64 {
    if a <= 0.0 {
        return 0.0;
    }
    if (m as f64) < a {
        // lower sum is large: subtract it
        let mut term = (-a).exp();
        let mut sum = term;
        for k in 1..=m {
            term *= a / k as f64;
            sum += term;
        }
        (1.0 - sum).max(0.0)
    } else {
        // sum the tail k = m+1, m+2, ... term by term
        let first = poisson_pmf(a, 1.0, m + 1);
        let mut term = first;
        let mut sum = 0.0;
        let mut k = m + 1;
        while term > sum * 1e-17 && term > 0.0 {
            sum += term;
            k += 1;
            term *= a / k as f64;
        }
        sum
    }
}

/// `Π_n(T, τ)` for `n >= 1`.
pub fn output_pmf(p: &CounterParams, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(invalid("n", 0.0, "output_pmf is defined for n >= 1"));
    }
    let u = p.t - (n - 1) as f64 * p.tau;
    let v = p.t - n as f64 * p.tau;
    if u <= 0.0 {
        return Ok(0.0);
    }
    // 1 - P(n-1; a) = pmf(n; a) + 1 - P(n; a), so the bracket difference
    // only carries the shift from u to v and vanishes with tau
    let head = poisson_pmf(p.lambda, u, n);
    let shift = if v == u {
        0.0
    } else {
        poisson_tail_above(p.lambda * u, n) - heaviside(v) * poisson_tail_above(p.lambda * v.max(0.0), n)
    };
    Ok(head + shift)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountDistribution {
    pub pmf: Vec<f64>,
    /// `|Σ pmf - 1|`.
    pub normalization_defect: f64,
    /// Total negative rounding clamped to zero.
    pub clamped: f64,
    pub mean: f64,
    pub variance: f64,
}

impl CountDistribution {
    pub fn cumulative(&self) -> Vec<f64> {
        self.pmf
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect()
    }
}

/// The full distribution `Π_0, Π_1, ...` up to the support bound.
pub fn output_distribution(p: &CounterParams) -> Result<CountDistribution> {
    let n_max = match p.support_bound() {
        Some(b) => b,
        None => {
            let a = p.lambda * p.t;
            (a + TAIL_SIGMAS * a.sqrt() + 20.0).ceil() as usize
        }
    };
    let mut pmf = Vec::with_capacity(n_max + 1);
    pmf.push((-p.lambda * p.t).exp());
    let mut clamped = 0.0;
    for n in 1..=n_max {
        let mut v = output_pmf(p, n as u64)?;
        if v < 0.0 {
            if v < NEGATIVE_CLAMP {
                return Err(crate::Error::Calibration(format!("pmf[{n}] = {v:e} is negative")));
            }
            clamped += -v;
            v = 0.0;
        }
        pmf.push(v);
    }
    let total: f64 = pmf.iter().sum();
    let mean: f64 = pmf.iter().enumerate().map(|(n, q)| n as f64 * q).sum();
    let second: f64 = pmf.iter().enumerate().map(|(n, q)| (n * n) as f64 * q).sum();
    Ok(CountDistribution {
        normalization_defect: (total - 1.0).abs(),
        clamped,
        mean,
        variance: (second - mean * mean).max(0.0),
        pmf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn heaviside_convention() {
        assert_eq!(heaviside(5.0), 1.0);
        assert_eq!(heaviside(0.0), 0.0);
        assert_eq!(heaviside(-3.0), 0.0);
    }

    #[test]
    fn poisson_examples() {
        assert_relative_eq!(poisson_pmf(1.0, 1.0, 0), (-1f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(poisson_pmf(4.0, 1.0, 1), 4.0 * (-4f64).exp(), max_relative = 1e-14);
        assert_eq!(poisson_pmf(1.0, 0.0, 0), 1.0);
        assert!(poisson_pmf(1.0, 1.0, 2000) < 1e-300);
    }

    #[test]
    fn output_pmf_examples() {
        let p = CounterParams::new(1.0, 5.0, 1.0).unwrap();
        assert_relative_eq!(output_pmf(&p, 2).unwrap(), 0.331612, max_relative = 2e-6);
        let q = CounterParams::new(1.0, 1.0, 1.0).unwrap();
        assert_eq!(output_pmf(&q, 3).unwrap(), 0.0);
        assert!(output_pmf(&q, 0).is_err());
    }

    #[test]
    fn zero_dead_time_is_poisson() {
        let p = CounterParams::new(4.0, 1.0, 0.0).unwrap();
        let d = output_distribution(&p).unwrap();
        for (n, v) in d.pmf.iter().enumerate() {
            assert!((v - poisson_pmf(4.0, 1.0, n as u64)).abs() <= 1e-14);
        }
        assert!(d.normalization_defect <= 1e-12);
        assert_relative_eq!(d.mean, 4.0, max_relative = 1e-12);
    }

    #[test]
    fn long_dead_time_allows_one_output() {
        let p = CounterParams::new(1.0, 5.0, 6.0).unwrap();
        let d = output_distribution(&p).unwrap();
        assert_eq!(d.pmf.len(), 2);
        assert_relative_eq!(d.pmf[1], 1.0 - (-5f64).exp(), max_relative = 1e-14);
    }

    #[test]
    fn support_bound_on_exact_multiple() {
        // T = 2 tau: n = 3 needs T - 2 tau > 0, which fails
        let p = CounterParams::new(3.0, 2.0, 1.0).unwrap();
        assert_eq!(p.support_bound(), Some(2));
        assert_eq!(output_pmf(&p, 3).unwrap(), 0.0);
        let d = output_distribution(&p).unwrap();
        assert!(d.normalization_defect <= 1e-12);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(CounterParams::new(0.0, 1.0, 0.0).is_err());
        assert!(CounterParams::new(1.0, -1.0, 0.0).is_err());
        assert!(CounterParams::new(1.0, 1.0, -0.1).is_err());
    }
}
