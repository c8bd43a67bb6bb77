//! Diffusion specifications and their scale/speed apparatus.
//!
//! Scale density `h(x) = exp{-2 ∫^x A1/A2 dz}` and speed density
//! `k(x) = 2 / (A2(x) h(x))`. The antiderivative anchor is fixed per model:
//!
//! * Wiener: `ln h(x) = -2 mu x / sigma2` (anchor 0)
//! * OU: `ln h(x) = (x^2 - 2 rho x) / (theta sigma2)` (anchor 0)
//! * Feller: `ln h(x) = x / (theta xi) - (rho - nu) / (theta xi) * ln(x - nu)`
//!
//! Refractoriness moments scale with `h`, so these anchors are part of the
//! model definition, not a convenience.

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::models::{FellerParams, OuParams, WienerParams};
use crate::quadrature;
use crate::scaled::ScaledReal;

/// Classification of the lower end of the state interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryClass {
    /// Regular boundary with a reflecting condition imposed.
    Reflecting,
    Entrance,
    /// Natural, non-attracting, with finite speed measure near it.
    NaturalNonattracting,
    /// Natural and attracting; moments are not available.
    NaturalAttracting,
    Exit,
}

impl BoundaryClass {
    pub fn supports_moments(self) -> bool {
        matches!(
            self,
            BoundaryClass::Reflecting | BoundaryClass::Entrance | BoundaryClass::NaturalNonattracting
        )
    }
}

impl fmt::Display for BoundaryClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BoundaryClass::Reflecting => "reflecting",
            BoundaryClass::Entrance => "entrance",
            BoundaryClass::NaturalNonattracting => "natural-nonattracting",
            BoundaryClass::NaturalAttracting => "natural-attracting",
            BoundaryClass::Exit => "exit",
        };
        f.write_str(s)
    }
}

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Coefficients of a user-supplied diffusion.
#[derive(Clone)]
pub struct CustomCoefficients {
    pub drift: RealFn,
    pub variance: RealFn,
    /// `-2 ∫_{anchor}^x A1/A2 dz`.
    pub log_scale: RealFn,
    /// Exponent `e` with `k(x) ~ (x - r1)^e` near a finite lower end, if singular.
    pub lower_speed_exponent: Option<f64>,
}

impl fmt::Debug for CustomCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomCoefficients")
            .field("lower_speed_exponent", &self.lower_speed_exponent)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum ModelKind {
    Wiener(WienerParams),
    Ou(OuParams),
    Feller(FellerParams),
    Custom(CustomCoefficients),
}

/// Finite cut-off standing in for an infinite natural lower boundary.
///
/// The caller certifies `K(r1, point] < tail_tol * K(point, S]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    pub point: f64,
    pub tail_tol: f64,
}

/// A time-homogeneous diffusion on `(lower, upper)`.
#[derive(Debug, Clone)]
pub struct DiffusionSpec {
    kind: ModelKind,
    lower: f64,
    upper: f64,
    lower_class: BoundaryClass,
    truncation: Option<Truncation>,
}

impl DiffusionSpec {
    pub(crate) fn from_model(kind: ModelKind, lower: f64, lower_class: BoundaryClass) -> Self {
        Self {
            kind,
            lower,
            upper: f64::INFINITY,
            lower_class,
            truncation: None,
        }
    }

    /// A generic diffusion with a declared lower boundary class.
    ///
    /// An infinite `lower` requires a [`Truncation`]; a natural lower boundary
    /// is only accepted with one.
    pub fn custom(
        coefficients: CustomCoefficients,
        lower: f64,
        upper: f64,
        lower_class: BoundaryClass,
        truncation: Option<Truncation>,
    ) -> Result<Self> {
        if !(lower < upper) {
            return Err(invalid("lower", lower, "must be below the upper bound"));
        }
        if lower_class == BoundaryClass::NaturalNonattracting || lower.is_infinite() {
            let t = truncation.ok_or(Error::InvalidParameter {
                name: "truncation",
                value: lower,
                reason: "natural or infinite lower boundaries need a truncation point",
            })?;
            if !(t.point > lower && t.point < upper && t.point.is_finite()) {
                return Err(invalid("truncation.point", t.point, "must lie inside the interval"));
            }
            if !(t.tail_tol > 0.0 && t.tail_tol < 1.0) {
                return Err(invalid("truncation.tail_tol", t.tail_tol, "must be in (0, 1)"));
            }
        }
        Ok(Self {
            kind: ModelKind::Custom(coefficients),
            lower,
            upper,
            lower_class,
            truncation,
        })
    }

    /// A generic diffusion whose log-scale exponent is obtained by quadrature
    /// of `-2 A1/A2` from `anchor`.
    pub fn custom_from_coefficients(
        drift: impl Fn(f64) -> f64 + Send + Sync + 'static,
        variance: impl Fn(f64) -> f64 + Send + Sync + 'static,
        anchor: f64,
        lower: f64,
        upper: f64,
        lower_class: BoundaryClass,
        truncation: Option<Truncation>,
    ) -> Result<Self> {
        let drift: RealFn = Arc::new(drift);
        let variance: RealFn = Arc::new(variance);
        let (d, v) = (drift.clone(), variance.clone());
        let log_scale: RealFn = Arc::new(move |x: f64| {
            if x == anchor {
                return 0.0;
            }
            let (lo, hi, sign) = if x > anchor { (anchor, x, -2.0) } else { (x, anchor, 2.0) };
            let i = quadrature::integrate(|z| d(z) / v(z), lo, hi, None, 1e-13).unwrap_or(f64::NAN);
            sign * i
        });
        Self::custom(
            CustomCoefficients {
                drift,
                variance,
                log_scale,
                lower_speed_exponent: None,
            },
            lower,
            upper,
            lower_class,
            truncation,
        )
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn lower_class(&self) -> BoundaryClass {
        self.lower_class
    }

    pub fn truncation(&self) -> Option<Truncation> {
        self.truncation
    }

    /// Lower integration limit: `r1`, or the truncation point for natural/infinite ends.
    pub fn effective_lower(&self) -> f64 {
        match self.truncation {
            Some(t) if self.lower.is_infinite() || self.lower_class == BoundaryClass::NaturalNonattracting => {
                t.point
            }
            _ => self.lower,
        }
    }

    /// A representative interior point where integrands peak (OU/Feller attractor).
    pub fn mode_hint(&self) -> Option<f64> {
        match &self.kind {
            ModelKind::Ou(p) => Some(p.rho),
            ModelKind::Feller(p) => Some(p.rho),
            _ => None,
        }
    }

    pub fn drift(&self, x: f64) -> f64 {
        match &self.kind {
            ModelKind::Wiener(p) => p.mu,
            ModelKind::Ou(p) => -(x - p.rho) / p.theta,
            ModelKind::Feller(p) => -(x - p.rho) / p.theta,
            ModelKind::Custom(c) => (c.drift)(x),
        }
    }

    pub fn variance(&self, x: f64) -> f64 {
        self.variance_at(x, x - self.lower)
    }

    /// `A2` at `x = lower + d`, using `d` where precision matters.
    pub fn variance_at(&self, x: f64, d: f64) -> f64 {
        match &self.kind {
            ModelKind::Wiener(p) => p.sigma2,
            ModelKind::Ou(p) => p.sigma2,
            ModelKind::Feller(p) => 2.0 * p.xi * d,
            ModelKind::Custom(c) => (c.variance)(x),
        }
    }

    /// The log-scale exponent `-2 ∫^x A1/A2` with the model's anchor.
    pub fn log_scale_exponent(&self, x: f64) -> f64 {
        self.ln_scale_at(x, x - self.lower)
    }

    /// `ln h` at `x = lower + d`.
    pub fn ln_scale_at(&self, x: f64, d: f64) -> f64 {
        match &self.kind {
            ModelKind::Wiener(p) => -2.0 * p.mu * x / p.sigma2,
            ModelKind::Ou(p) => (x * x - 2.0 * p.rho * x) / (p.theta * p.sigma2),
            ModelKind::Feller(p) => {
                let a = p.theta * p.xi;
                x / a - ln_power(p.speed_exponent_plus_one(), d)
            }
            ModelKind::Custom(c) => (c.log_scale)(x),
        }
    }

    /// `ln k` at `x = lower + d`.
    pub fn ln_speed_at(&self, x: f64, d: f64) -> f64 {
        match &self.kind {
            ModelKind::Wiener(p) => (2.0 / p.sigma2).ln() + 2.0 * p.mu * x / p.sigma2,
            ModelKind::Ou(p) => (2.0 / p.sigma2).ln() - (x * x - 2.0 * p.rho * x) / (p.theta * p.sigma2),
            ModelKind::Feller(p) => {
                let a = p.theta * p.xi;
                -p.xi.ln() - x / a + ln_power(p.speed_exponent_plus_one() - 1.0, d)
            }
            ModelKind::Custom(_) => std::f64::consts::LN_2 - self.variance_at(x, d).ln() - self.ln_scale_at(x, d),
        }
    }

    /// Exponent `e` in `k(x) ~ (x - r1)^e` at a finite lower end, when `e != 0`.
    pub fn lower_speed_exponent(&self) -> Option<f64> {
        match &self.kind {
            ModelKind::Feller(p) => Some(p.speed_exponent_plus_one() - 1.0),
            ModelKind::Custom(c) => c.lower_speed_exponent,
            _ => None,
        }
    }

    fn check_point(&self, x: f64) -> Result<()> {
        if !(x >= self.lower && x < self.upper) || x.is_nan() {
            return Err(Error::Domain {
                what: "x",
                value: x,
                lower: self.lower,
                upper: self.upper,
            });
        }
        Ok(())
    }

    /// `h(x)` in extended-range form.
    pub fn eval_scale_density(&self, x: f64) -> Result<ScaledReal> {
        let d = x - self.lower;
        self.check_point(x)?;
        let l = self.ln_scale_at(x, d);
        if l == f64::INFINITY || l.is_nan() {
            return Err(Error::Singularity { at: x });
        }
        Ok(ScaledReal::from_ln(l))
    }

    /// `h(x)` as a plain `f64`; overflow is an error, never infinity.
    pub fn scale_density(&self, x: f64) -> Result<f64> {
        self.eval_scale_density(x)?.to_f64()
    }

    /// `k(x)` in extended-range form.
    pub fn eval_speed_density(&self, x: f64) -> Result<ScaledReal> {
        let d = x - self.lower;
        self.check_point(x)?;
        let l = self.ln_speed_at(x, d);
        if l == f64::INFINITY || l.is_nan() {
            return Err(Error::Singularity { at: x });
        }
        Ok(ScaledReal::from_ln(l))
    }

    pub fn speed_density(&self, x: f64) -> Result<f64> {
        self.eval_speed_density(x)?.to_f64()
    }

    /// `K(a, b] = ∫_a^b k`, handling an integrable singularity of `k` at `r1`.
    pub fn speed_measure(&self, a: f64, b: f64, tol: f64) -> Result<ScaledReal> {
        if !(tol > 0.0) {
            return Err(invalid("tol", tol, "must be positive"));
        }
        let lo = self.effective_lower();
        if !(a >= lo && b < self.upper && a <= b) {
            return Err(Error::Domain {
                what: "speed measure end",
                value: if a < lo { a } else { b },
                lower: lo,
                upper: self.upper,
            });
        }
        if a == b {
            return Ok(ScaledReal::ZERO);
        }
        let singular = if a == self.lower { self.lower_speed_exponent() } else { None };
        if let Some(e) = singular {
            if e <= -1.0 {
                return Err(Error::NonIntegrable { exponent: e });
            }
        }
        let base = a - self.lower;
        quadrature::integrate_ln(
            |d| self.ln_speed_at(a + d, base + d),
            a,
            b,
            singular.filter(|e| *e < 0.0),
            tol,
        )
    }

    pub fn classify_lower_boundary(&self) -> BoundaryClass {
        match &self.kind {
            ModelKind::Wiener(_) | ModelKind::Ou(_) => BoundaryClass::Reflecting,
            ModelKind::Feller(p) => {
                if p.rho - p.nu >= p.xi * p.theta {
                    BoundaryClass::Entrance
                } else {
                    BoundaryClass::Reflecting
                }
            }
            ModelKind::Custom(_) => self.lower_class,
        }
    }
}

/// `e * ln d`, taking `0 * ln 0 = 0`.
fn ln_power(e: f64, d: f64) -> f64 {
    if e == 0.0 {
        0.0
    } else {
        e * d.ln()
    }
}

/// Elastic threshold at `s` with absorbing coefficient `alpha` and reflecting
/// coefficient `beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticThreshold {
    pub s: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl ElasticThreshold {
    pub fn new(s: f64, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::AlphaZero(alpha));
        }
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(invalid("beta", beta, "must be finite and >= 0"));
        }
        Ok(Self { s, alpha, beta })
    }

    /// Threshold with reflecting probability `p_r = beta / (alpha + beta)`,
    /// normalized to `alpha + beta = 1`.
    pub fn from_reflecting_probability(s: f64, p_r: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p_r) {
            return Err(invalid("p_R", p_r, "must lie in [0, 1)"));
        }
        Self::new(s, 1.0 - p_r, p_r)
    }

    /// An absorbing threshold (`beta = 0`).
    pub fn absorbing(s: f64) -> Self {
        Self {
            s,
            alpha: 1.0,
            beta: 0.0,
        }
    }

    pub fn reflecting_probability(&self) -> f64 {
        self.beta / (self.alpha + self.beta)
    }

    /// `beta / alpha`.
    pub fn ratio(&self) -> f64 {
        self.beta / self.alpha
    }

    pub(crate) fn validate(&self, spec: &DiffusionSpec) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::AlphaZero(self.alpha));
        }
        if !(self.s > spec.effective_lower() && self.s < spec.upper()) {
            return Err(Error::Domain {
                what: "S",
                value: self.s,
                lower: spec.effective_lower(),
                upper: spec.upper(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{FellerParams, OuParams, WienerParams};
    use approx::assert_relative_eq;

    fn wiener(mu: f64, sigma2: f64) -> DiffusionSpec {
        WienerParams::new(mu, sigma2, -80.0).unwrap().spec()
    }

    fn feller(xi: f64) -> DiffusionSpec {
        FellerParams::new(5.0, -70.0, xi, -80.0).unwrap().spec()
    }

    fn ou(sigma2: f64) -> DiffusionSpec {
        OuParams::new(5.0, -70.0, sigma2, -80.0).unwrap().spec()
    }

    #[test]
    fn scale_density_examples() {
        assert_eq!(wiener(0.0, 10.0).scale_density(-33.0).unwrap(), 1.0);
        let w = wiener(-0.5, 10.0);
        assert_eq!(w.scale_density(0.0).unwrap(), 1.0);
        assert_relative_eq!(w.scale_density(-20.0).unwrap(), (-2.0f64).exp(), max_relative = 1e-15);
        // h(-79) = exp(-79/25) * 1^(-0.4)
        let h = feller(5.0).scale_density(-79.0).unwrap();
        assert_relative_eq!(h, (-3.16f64).exp(), max_relative = 1e-14);
        assert!((h - 0.04243).abs() < 1e-5);
    }

    #[test]
    fn feller_log_scale_matches_numerical_derivative() {
        let f = feller(5.0);
        for x in [-79.5, -75.0, -62.25, -50.0] {
            let step = 1e-4;
            let d = (f.log_scale_exponent(x + step) - f.log_scale_exponent(x - step)) / (2.0 * step);
            let want = -2.0 * f.drift(x) / f.variance(x);
            assert_relative_eq!(d, want, max_relative = 1e-6);
        }
    }

    #[test]
    fn speed_density_examples() {
        assert_relative_eq!(wiener(0.0, 10.0).speed_density(12.0).unwrap(), 0.2);
        let k = wiener(-0.5, 10.0).speed_density(-50.0).unwrap();
        assert_relative_eq!(k, 0.2 * 5f64.exp(), max_relative = 1e-14);
        assert!((k - 29.6826).abs() < 1e-4);
        // Feller with exponent -0.6 diverges at nu
        let f = feller(5.0);
        assert_relative_eq!(f.lower_speed_exponent().unwrap(), -0.6, max_relative = 1e-14);
        assert!(matches!(f.speed_density(-80.0), Err(Error::Singularity { .. })));
        assert!(matches!(f.speed_density(-81.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn identity_k_a2_h_is_two() {
        for spec in [wiener(-0.5, 10.0), ou(10.0), ou(500.0), feller(0.5), feller(5.0)] {
            for i in 1..=100 {
                let x = -80.0 + 30.0 * i as f64 / 100.0;
                let h = spec.eval_scale_density(x).unwrap();
                let k = spec.eval_speed_density(x).unwrap();
                let p = (h * k).to_f64().unwrap() * spec.variance(x);
                assert_relative_eq!(p, 2.0, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn overflow_is_signaled() {
        // OU with tiny variance: h(S) = exp(huge)
        let s = OuParams::new(5.0, -70.0, 0.01, -80.0).unwrap().spec();
        assert!(matches!(s.scale_density(50.0), Err(Error::Overflow { .. })));
        assert!(s.eval_scale_density(50.0).unwrap().ln_abs() > 709.0);
    }

    #[test]
    fn speed_measure_examples() {
        let w = wiener(-0.5, 10.0);
        let k = w.speed_measure(-80.0, -50.0, 1e-12).unwrap().to_f64().unwrap();
        assert_relative_eq!(k, 2.0 * (8f64.exp() - 5f64.exp()), max_relative = 1e-12);
        assert_eq!(w.speed_measure(-60.0, -60.0, 1e-9).unwrap(), ScaledReal::ZERO);
        let k_ou = ou(10.0).speed_measure(-80.0, -50.0, 1e-10).unwrap().to_f64().unwrap();
        assert_relative_eq!(k_ou, 9.0 * 9.901436e41, max_relative = 1e-6);
        // singular at nu: K = (1/xi) e^{-nu/a} a^c γ(c, (S-nu)/a)
        let f = feller(5.0);
        let kf = f.speed_measure(-80.0, -50.0, 1e-12).unwrap().to_f64().unwrap();
        assert_relative_eq!(kf, 9.0 * 3.983514, max_relative = 1e-6);
    }

    #[test]
    fn classification() {
        let c = |xi| FellerParams::new(5.0, -70.0, xi, -80.0).unwrap().spec().classify_lower_boundary();
        assert_eq!(c(0.5), BoundaryClass::Entrance);
        assert_eq!(c(2.0), BoundaryClass::Entrance);
        assert_eq!(c(5.0), BoundaryClass::Reflecting);
        assert_eq!(wiener(0.0, 1.0).classify_lower_boundary(), BoundaryClass::Reflecting);
    }

    #[test]
    fn threshold_validation() {
        assert!(matches!(ElasticThreshold::new(-50.0, 0.0, 1.0), Err(Error::AlphaZero(_))));
        let t = ElasticThreshold::from_reflecting_probability(-50.0, 0.9).unwrap();
        assert_relative_eq!(t.ratio(), 9.0, max_relative = 1e-15);
        assert!(ElasticThreshold::from_reflecting_probability(-50.0, 1.0).is_err());
        assert!(t.validate(&wiener(0.0, 1.0)).is_ok());
        let bad = ElasticThreshold::absorbing(-90.0);
        assert!(bad.validate(&wiener(0.0, 1.0)).is_err());
    }

    #[test]
    fn custom_natural_boundary_needs_truncation() {
        let r = DiffusionSpec::custom_from_coefficients(
            |x| -x,
            |_| 1.0,
            0.0,
            f64::NEG_INFINITY,
            f64::INFINITY,
            BoundaryClass::NaturalNonattracting,
            None,
        );
        assert!(r.is_err());
        let s = DiffusionSpec::custom_from_coefficients(
            |x| -x,
            |_| 1.0,
            0.0,
            f64::NEG_INFINITY,
            f64::INFINITY,
            BoundaryClass::NaturalNonattracting,
            Some(Truncation {
                point: -9.0,
                tail_tol: 1e-12,
            }),
        )
        .unwrap();
        assert_eq!(s.effective_lower(), -9.0);
        // h = exp(x^2) for A1 = -x, A2 = 1
        assert_relative_eq!(s.log_scale_exponent(1.5), 2.25, max_relative = 1e-12);
    }
}
