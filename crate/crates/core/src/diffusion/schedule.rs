use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear schedule on `1 - ā_t`:
/// `1 - ā_t = s · (a_min + (t-1)/(T-1) · (a_max - a_min))`, `t = 1..T`,
/// with the convention `ā_0 = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleSpec", into = "ScheduleSpec")]
pub struct NoiseSchedule {
    spec: ScheduleSpec,
    /// Index `t` holds `ā_t`; index 0 is 1.
    alpha_bar: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleSpec {
    pub steps: usize,
    pub s: f64,
    pub a_min: f64,
    pub a_max: f64,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec { steps: 50, s: 0.1, a_min: 1e-4, a_max: 0.2 }
    }
}

impl TryFrom<ScheduleSpec> for NoiseSchedule {
    type Error = Error;
    fn try_from(spec: ScheduleSpec) -> Result<Self> {
        NoiseSchedule::new(spec)
    }
}

impl From<NoiseSchedule> for ScheduleSpec {
    fn from(s: NoiseSchedule) -> Self {
        s.spec
    }
}

impl NoiseSchedule {
    pub fn new(spec: ScheduleSpec) -> Result<Self> {
        let ScheduleSpec { steps, s, a_min, a_max } = spec;
        if steps < 2 {
            return Err(Error::Config(format!("schedule needs T >= 2, got {steps}")));
        }
        if !(0.0 < a_min && a_min < a_max && a_max < 1.0) {
            return Err(Error::Config(format!("need 0 < a_min < a_max < 1, got {a_min}, {a_max}")));
        }
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::Config(format!("need s in (0, 1], got {s}")));
        }
        let mut alpha_bar = Vec::with_capacity(steps + 1);
        alpha_bar.push(1.0);
        for t in 1..=steps {
            let frac = (t - 1) as f64 / (steps - 1) as f64;
            alpha_bar.push(1.0 - s * (a_min + frac * (a_max - a_min)));
        }
        Ok(NoiseSchedule { spec, alpha_bar })
    }

    pub fn spec(&self) -> ScheduleSpec {
        self.spec
    }

    pub fn steps(&self) -> usize {
        self.spec.steps
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::Domain(format!("step {t} outside 1..={}", self.steps())));
        }
        Ok(())
    }

    /// `ā_t` for `t = 0..=T`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    /// `a_t = ā_t / ā_{t-1}`.
    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha_bar[t] / self.alpha_bar[t - 1]
    }

    pub fn beta(&self, t: usize) -> f64 {
        1.0 - self.alpha(t)
    }

    /// Coefficients `(c_t, c_0)` of `μ̃ = c_t·x_t + c_0·x_0`.
    pub fn posterior_coeffs(&self, t: usize) -> (f64, f64) {
        let ab = self.alpha_bar[t];
        let ab_prev = self.alpha_bar[t - 1];
        let a = self.alpha(t);
        let denom = 1.0 - ab;
        ((a.sqrt() * (1.0 - ab_prev)) / denom, (ab_prev.sqrt() * (1.0 - a)) / denom)
    }

    /// `σ²(t) = (1 - a_t)(1 - ā_{t-1}) / (1 - ā_t)`.
    pub fn posterior_variance(&self, t: usize) -> f64 {
        (1.0 - self.alpha(t)) * (1.0 - self.alpha_bar[t - 1]) / (1.0 - self.alpha_bar[t])
    }

    /// Weight on `‖x̂ - x_0‖²`: `½(ā_{t-1}/(1-ā_{t-1}) - ā_t/(1-ā_t))` for `t > 1`,
    /// and 1 at `t = 1` (unweighted reconstruction term).
    pub fn loss_weight(&self, t: usize) -> f64 {
        if t == 1 {
            return 1.0;
        }
        let snr = |ab: f64| ab / (1.0 - ab);
        0.5 * (snr(self.alpha_bar[t - 1]) - snr(self.alpha_bar[t]))
    }

    /// `x_t = √ā_t · x_0 + √(1 - ā_t) · ε`.
    pub fn forward_sample(&self, x0: &[f64], t: usize, eps: &[f64]) -> Result<Vec<f64>> {
        self.check_step(t)?;
        if x0.len() != eps.len() {
            return Err(Error::Dimension(format!("x0 has {} entries, noise {}", x0.len(), eps.len())));
        }
        let (a, b) = (self.alpha_bar[t].sqrt(), (1.0 - self.alpha_bar[t]).sqrt());
        Ok(x0.iter().zip(eps).map(|(x, e)| a * x + b * e).collect())
    }

    /// Mean and variance of `q(x_{t-1} | x_t, x_0)`.
    pub fn posterior_params(&self, xt: &[f64], x0: &[f64], t: usize) -> Result<(Vec<f64>, f64)> {
        self.check_step(t)?;
        if xt.len() != x0.len() {
            return Err(Error::Dimension("x_t and x_0 widths differ".into()));
        }
        let (ct, c0) = self.posterior_coeffs(t);
        let mu = xt.iter().zip(x0).map(|(a, b)| ct * a + c0 * b).collect();
        Ok((mu, self.posterior_variance(t)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn worked() -> NoiseSchedule {
        NoiseSchedule::new(ScheduleSpec { steps: 5, s: 1.0, a_min: 0.1, a_max: 0.9 }).unwrap()
    }

    #[test]
    fn worked_alpha_bar() {
        let s = worked();
        let expect = [0.9, 0.7, 0.5, 0.3, 0.1];
        for (t, e) in (1..=5).zip(expect) {
            assert!((s.alpha_bar(t) - e).abs() <= 1e-12, "t={t}");
        }
    }

    #[test]
    fn worked_variance_and_weight() {
        let s = worked();
        assert!((s.posterior_variance(2) - 2.0 / 27.0).abs() <= 1e-12);
        assert!((s.loss_weight(2) - 10.0 / 3.0).abs() <= 1e-12);
        // ā_0 = 1 makes the first step deterministic and the posterior mean x0.
        assert_eq!(s.posterior_variance(1), 0.0);
        let (mu, var) = s.posterior_params(&[3.0, -1.0], &[0.5, 0.25], 1).unwrap();
        assert_eq!(var, 0.0);
        assert!((mu[0] - 0.5).abs() < 1e-15 && (mu[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn endpoints_and_monotonicity() {
        for spec in [ScheduleSpec::default(), worked().spec(), ScheduleSpec { steps: 17, s: 0.4, a_min: 0.01, a_max: 0.6 }] {
            let s = NoiseSchedule::new(spec).unwrap();
            let t_max = spec.steps;
            assert!(((1.0 - s.alpha_bar(1)) - spec.s * spec.a_min).abs() <= 1e-12);
            assert!(((1.0 - s.alpha_bar(t_max)) - spec.s * spec.a_max).abs() <= 1e-12);
            let step = (1.0 - s.alpha_bar(2)) - (1.0 - s.alpha_bar(1));
            for t in 1..=t_max {
                let a = s.alpha(t);
                assert!(a > 0.0 && a < 1.0);
                assert!(s.loss_weight(t) > 0.0);
                if t >= 2 {
                    let d = (1.0 - s.alpha_bar(t)) - (1.0 - s.alpha_bar(t - 1));
                    assert!(d > 0.0);
                    assert!((d - step).abs() < 1e-12, "affine in t");
                }
            }
        }
    }

    #[test]
    fn forward_sample_without_noise() {
        let s = worked();
        let x = s.forward_sample(&[2.0, -4.0], 3, &[0.0, 0.0]).unwrap();
        assert!((x[0] - 2.0 * 0.5f64.sqrt()).abs() < 1e-15);
        assert!(s.forward_sample(&[1.0], 0, &[0.0]).is_err());
        assert!(s.forward_sample(&[1.0], 6, &[0.0]).is_err());
    }

    #[test]
    fn posterior_mean_fixed_point() {
        // With x_t = x_0 the coefficients sum to 1 in the small-noise limit.
        let s = NoiseSchedule::new(ScheduleSpec { steps: 1000, s: 1e-3, a_min: 1e-4, a_max: 2e-4 }).unwrap();
        let (mu, _) = s.posterior_params(&[1.7], &[1.7], 500).unwrap();
        assert!((mu[0] - 1.7).abs() < 1e-3);
    }

    #[test]
    fn invalid_specs() {
        assert!(NoiseSchedule::new(ScheduleSpec { steps: 5, s: 1.0, a_min: 0.5, a_max: 0.4 }).is_err());
        assert!(NoiseSchedule::new(ScheduleSpec { steps: 5, s: 0.0, a_min: 0.1, a_max: 0.4 }).is_err());
        assert!(NoiseSchedule::new(ScheduleSpec { steps: 1, s: 1.0, a_min: 0.1, a_max: 0.4 }).is_err());
    }
}
