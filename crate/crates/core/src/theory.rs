//! Closed-form thresholds and sample budgets, plus the tail-probability
//! machinery behind the critical differential degree.
//!
//! The tail results model the differential degree of a node as a sum of
//! `m` i.i.d. copies of `Z = X - Y` with `X ~ Bernoulli(p)` and
//! `Y ~ Bernoulli(q)`; by default `m = n`.

use serde::ser::{Serialize, Serializer};
use serde::Serialize as DeriveSerialize;

use crate::error::{Error, Result};
use crate::sbm::SbmParams;

/// `(sqrt(a) - sqrt(b))^2`.
pub fn ch_divergence(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "divergence needs positive rates, got a={a}, b={b}"
        )));
    }
    Ok((a.sqrt() - b.sqrt()).powi(2))
}

/// `1/3 + sqrt(4M + 1/9)`, the quantity `4 Delta` must exceed.
fn validity_threshold(m: f64) -> f64 {
    1.0 / 3.0 + (4.0 * m + 1.0 / 9.0).sqrt()
}

/// Whether `4 Delta > 1/3 + sqrt(4M + 1/9)` (strict).
pub fn budget_condition_holds(m: f64, delta: f64) -> bool {
    4.0 * delta > validity_threshold(m)
}

/// Sample-complexity saving `delta(M, Delta)`; `None` when the validity
/// condition fails, in which case the sampling bound is all nodes.
pub fn delta_exponent(m: f64, delta: f64) -> Result<Option<f64>> {
    if !(m > delta && delta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need M > Delta > 0, got M={m}, Delta={delta}"
        )));
    }
    if !budget_condition_holds(m, delta) {
        return Ok(None);
    }
    let gap = 4.0 * delta - validity_threshold(m);
    Ok(Some(gap * gap / (2.0 * (2.0 * m + gap))))
}

/// Critical differential degree `(sqrt(2(a+b) + 1/9) + 1/3 - (a-b)) ln n`.
/// Negative when the community gap is large.
pub fn ell_critical(params: &SbmParams) -> f64 {
    let (a, b) = (params.a(), params.b());
    ((2.0 * (a + b) + 1.0 / 9.0).sqrt() + 1.0 / 3.0 - (a - b)) * params.ln_n()
}

/// Label budget from the sufficient condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Budget {
    Count(usize),
    /// The condition fails; sample every node.
    All,
}

impl Budget {
    /// Resolve to a node count on a graph with `num_nodes` nodes.
    pub fn resolve(self, num_nodes: usize) -> usize {
        match self {
            Budget::Count(k) => k.min(num_nodes),
            Budget::All => num_nodes,
        }
    }
}

impl Serialize for Budget {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Budget::Count(k) => s.serialize_u64(*k as u64),
            Budget::All => s.serialize_str("all"),
        }
    }
}

/// `ceil(n^(1 - delta))`, at least 1 and at most `2n`.
pub fn sample_budget(params: &SbmParams) -> Budget {
    match delta_exponent(params.m(), params.delta()) {
        Ok(Some(d)) => Budget::Count(budget_for_exponent(params.n(), 1.0 - d)),
        _ => Budget::All,
    }
}

fn budget_for_exponent(n: usize, exponent: f64) -> usize {
    let raw = (exponent * (n as f64).ln()).exp().ceil();
    (raw as usize).clamp(1, 2 * n)
}

/// `1 - D(a, b)`: with `n^s` labels and `s` at or below this, recovery fails.
pub fn necessary_exponent(a: f64, b: f64) -> Result<f64> {
    Ok(1.0 - ch_divergence(a, b)?)
}

/// Three-point law of `Z = X - Y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZDistribution {
    pub p: f64,
    pub q: f64,
}

impl ZDistribution {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0 && q > 0.0 && q < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "probabilities must lie in (0, 1), got p={p}, q={q}"
            )));
        }
        Ok(Self { p, q })
    }

    pub fn from_params(params: &SbmParams) -> Self {
        Self {
            p: params.p(),
            q: params.q(),
        }
    }

    pub fn prob_plus(&self) -> f64 {
        self.p * (1.0 - self.q)
    }

    pub fn prob_zero(&self) -> f64 {
        self.p * self.q + (1.0 - self.p) * (1.0 - self.q)
    }

    pub fn prob_minus(&self) -> f64 {
        (1.0 - self.p) * self.q
    }

    pub fn mean(&self) -> f64 {
        self.p - self.q
    }

    pub fn variance(&self) -> f64 {
        self.p * (1.0 - self.q) + self.q * (1.0 - self.p) - (self.p - self.q).powi(2)
    }

    /// Exact `Pr(Z_1 + ... + Z_m <= -ell)` by convolution over `[-m, m]`.
    pub fn lower_tail(&self, ell: f64, m: usize) -> f64 {
        let cutoff = (-ell).floor();
        if cutoff < -(m as f64) {
            return 0.0;
        }
        if cutoff >= m as f64 {
            return 1.0;
        }
        let (plus, zero, minus) = (self.prob_plus(), self.prob_zero(), self.prob_minus());
        // pmf[k] = Pr(sum = k - m) after all steps; only the first `filled`
        // entries around the centre are live at each step.
        let width = 2 * m + 1;
        let mut pmf = vec![0.0f64; width];
        let mut next = vec![0.0f64; width];
        pmf[m] = 1.0;
        for step in 0..m {
            let (lo, hi) = (m - step, m + step);
            next[lo - 1..=hi + 1].fill(0.0);
            for k in lo..=hi {
                let mass = pmf[k];
                next[k - 1] += mass * minus;
                next[k] += mass * zero;
                next[k + 1] += mass * plus;
            }
            std::mem::swap(&mut pmf, &mut next);
        }
        let last = (cutoff as i64 + m as i64) as usize;
        pmf[..=last].iter().sum::<f64>().clamp(0.0, 1.0)
    }
}

/// Exact lower tail of the differential-degree model with `m` summands.
pub fn exact_tail(params: &SbmParams, ell: f64, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one summand".into()));
    }
    Ok(ZDistribution::from_params(params).lower_tail(ell, m))
}

/// Bernstein upper bound on `Pr(d* <= -ell)` for the `n`-term model.
///
/// With `t = ell + (a - b) ln n`, returns
/// `min(1, exp(-t^2 / (2 (n Var Z + c t / 3))))` where `c = 1 + p - q`
/// bounds the centred summand almost surely.
pub fn bernstein_tail_bound(params: &SbmParams, ell: f64) -> Result<f64> {
    let t = ell + (params.a() - params.b()) * params.ln_n();
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "deviation t = ell + (a-b) ln n must be positive, got {t}"
        )));
    }
    let z = ZDistribution::from_params(params);
    let sigma2 = params.n() as f64 * z.variance();
    let c = 1.0 + z.mean();
    Ok((-t * t / (2.0 * (sigma2 + c * t / 3.0))).exp().min(1.0))
}

/// Threshold summary for one parameter setting.
#[derive(Debug, Clone, PartialEq, DeriveSerialize)]
pub struct ThresholdReport {
    #[serde(rename = "D")]
    pub divergence: f64,
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "Delta")]
    pub delta_gap: f64,
    pub delta: Option<f64>,
    pub ell_critical: f64,
    pub budget: Budget,
    pub valid: bool,
}

impl ThresholdReport {
    pub fn new(params: &SbmParams) -> Self {
        let delta = delta_exponent(params.m(), params.delta()).ok().flatten();
        Self {
            divergence: params.divergence(),
            m: params.m(),
            delta_gap: params.delta(),
            delta,
            ell_critical: ell_critical(params),
            budget: sample_budget(params),
            valid: delta.is_some(),
        }
    }

    /// Exact recovery from the graph alone (`D >= 1`).
    pub fn recoverable_without_samples(&self) -> bool {
        self.divergence >= 1.0
    }
}

/// Budget exponent `1 - delta` against the normalized gap
/// `x = Delta / sqrt(M - 1/4)`, clipped to 1 where delta is undefined.
pub fn fig1_curve(m: f64, ratio_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    if !(m > 0.25) {
        return Err(Error::InvalidArgument(format!("need M > 1/4, got {m}")));
    }
    let scale = (m - 0.25).sqrt();
    ratio_grid
        .iter()
        .map(|&x| {
            if !(x > 0.0 && x <= 1.0) {
                return Err(Error::InvalidArgument(format!("grid value {x} outside (0, 1]")));
            }
            let y = match delta_exponent(m, x * scale)? {
                Some(d) => 1.0 - d,
                None => 1.0,
            };
            Ok((x, y))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Binomial, Distribution};

    fn params(n: usize, a: f64, b: f64) -> SbmParams {
        SbmParams::new(n, a, b).unwrap()
    }

    #[test]
    fn divergence_values() {
        assert_eq!(ch_divergence(3.0, 3.0).unwrap(), 0.0);
        assert!((ch_divergence(4.5, 2.0).unwrap() - 0.5).abs() < 1e-12);
        assert!((ch_divergence(9.0, 1.0).unwrap() - 4.0).abs() < 1e-12);
        assert!(ch_divergence(0.0, 1.0).is_err());
    }

    #[test]
    fn delta_exponent_values() {
        let d = delta_exponent(3.25, 1.25).unwrap().unwrap();
        assert!((d - 0.072_463).abs() < 1e-6, "{d}");

        // b = 2, D = 0.3: a = (sqrt(0.3) + sqrt(2))^2.
        let p = SbmParams::from_divergence(1000, 0.3, 2.0).unwrap();
        assert_eq!(delta_exponent(p.m(), p.delta()).unwrap(), None);

        let m: f64 = 3.25;
        let boundary = (1.0 / 3.0 + (4.0 * m + 1.0 / 9.0).sqrt()) / 4.0;
        assert_eq!(delta_exponent(m, boundary).unwrap(), None);
        assert!(delta_exponent(m, boundary + 1e-9).unwrap().is_some());

        assert!(delta_exponent(1.0, 1.0).is_err());
        assert!(delta_exponent(1.0, 0.0).is_err());
    }

    #[test]
    fn ell_critical_values() {
        // sqrt(13 + 1/9) + 1/3 - 2.5 = 1.454260...
        let coef = (13.0f64 + 1.0 / 9.0).sqrt() + 1.0 / 3.0 - 2.5;
        assert!((coef - 1.454_260).abs() < 1e-6);
        let e1000 = ell_critical(&params(1000, 4.5, 2.0));
        assert!((e1000 - 10.045).abs() < 1e-3, "{e1000}");
        let e2000 = ell_critical(&params(2000, 4.5, 2.0));
        assert!((e2000 - 11.053).abs() < 1e-3, "{e2000}");
        assert!(ell_critical(&params(1000, 16.0, 2.0)) < 0.0);
    }

    #[test]
    fn budget_values() {
        assert_eq!(sample_budget(&params(2000, 4.5, 2.0)), Budget::Count(1153));
        let weak = SbmParams::from_divergence(2000, 0.3, 2.0).unwrap();
        assert_eq!(sample_budget(&weak), Budget::All);
        assert_eq!(Budget::All.resolve(4000), 4000);
        assert_eq!(budget_for_exponent(2000, 0.0), 1);
        // delta ~ 4.02 > 1 gives a negative exponent; clamped to one label.
        assert_eq!(sample_budget(&params(1000, 16.0, 4.0)), Budget::Count(1));
    }

    #[test]
    fn necessary_exponent_values() {
        assert!((necessary_exponent(4.5, 2.0).unwrap() - 0.5).abs() < 1e-12);
        assert!(necessary_exponent(16.0, 4.0).unwrap() <= 0.0);
        assert!(necessary_exponent(2.000_001, 2.0).unwrap() < 1.0);
    }

    #[test]
    fn z_distribution_moments() {
        let z = ZDistribution::new(0.3, 0.1).unwrap();
        let total = z.prob_plus() + z.prob_zero() + z.prob_minus();
        assert!((total - 1.0).abs() < 1e-15);
        assert!((z.prob_plus() - z.prob_minus() - z.mean()).abs() < 1e-15);
        let second = z.prob_plus() + z.prob_minus();
        assert!((second - z.mean().powi(2) - z.variance()).abs() < 1e-15);
        assert!(ZDistribution::new(0.0, 0.1).is_err());
    }

    #[test]
    fn exact_tail_corners() {
        let p = params(100, 4.5, 2.0);
        let z = ZDistribution::from_params(&p);
        let single = exact_tail(&p, 0.5, 1).unwrap();
        assert!((single - z.prob_minus()).abs() < 1e-15);
        let pair = exact_tail(&p, 1.5, 2).unwrap();
        assert!((pair - z.prob_minus().powi(2)).abs() < 1e-15);
        assert_eq!(exact_tail(&p, 3.0, 2).unwrap(), 0.0);
        assert!((exact_tail(&p, -2.0, 2).unwrap() - 1.0).abs() < 1e-12);
        assert!(exact_tail(&p, 0.0, 0).is_err());
    }

    #[test]
    fn exact_tail_matches_monte_carlo() {
        // Sum of m copies of X - Y equals Binomial(m, p) - Binomial(m, q).
        let p = params(100, 4.5, 2.0);
        let exact = exact_tail(&p, 0.0, 100).unwrap();
        assert!(exact > 0.0 && exact < 1.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let bx = Binomial::new(100, p.p()).unwrap();
        let by = Binomial::new(100, p.q()).unwrap();
        let draws = 1_000_000;
        let hits = (0..draws)
            .filter(|_| (bx.sample(&mut rng) as i64) - (by.sample(&mut rng) as i64) <= 0)
            .count();
        let est = hits as f64 / draws as f64;
        let se = (est * (1.0 - est) / draws as f64).sqrt();
        assert!((est - exact).abs() < 3.0 * se, "exact {exact}, mc {est} +- {se}");
    }

    #[test]
    fn bernstein_limits_and_domain() {
        let p = params(100, 4.5, 2.0);
        assert!(bernstein_tail_bound(&p, 1e6).unwrap() < 1e-300);
        let t0 = -(p.a() - p.b()) * p.ln_n();
        assert!((bernstein_tail_bound(&p, t0 + 1e-9).unwrap() - 1.0).abs() < 1e-9);
        assert!(bernstein_tail_bound(&p, t0).is_err());
        assert!(bernstein_tail_bound(&p, t0 - 1.0).is_err());

        let ell = ell_critical(&p);
        assert!((ell - 6.697).abs() < 1e-3);
        assert!(bernstein_tail_bound(&p, ell).unwrap() >= exact_tail(&p, ell, 100).unwrap());
    }

    #[test]
    fn threshold_report_json() {
        let report = ThresholdReport::new(&params(2000, 4.5, 2.0));
        let json = serde_json::to_value(&report).unwrap();
        assert_eq!(json["budget"], 1153);
        assert_eq!(json["valid"], true);
        assert!((json["delta"].as_f64().unwrap() - 0.072_463).abs() < 1e-6);
        assert!((json["D"].as_f64().unwrap() - 0.5).abs() < 1e-12);
        assert!(!report.recoverable_without_samples());

        let weak = ThresholdReport::new(&SbmParams::from_divergence(2000, 0.3, 2.0).unwrap());
        let json = serde_json::to_value(&weak).unwrap();
        assert_eq!(json["budget"], "all");
        assert!(json["delta"].is_null());
        assert_eq!(json["valid"], false);

        assert!(ThresholdReport::new(&params(1000, 16.0, 4.0)).recoverable_without_samples());
    }

    #[test]
    fn fig1_curve_cases() {
        let m = 3.25;
        let x = 1.25 / 3.0f64.sqrt();
        let curve = fig1_curve(m, &[0.3, x, 1.0]).unwrap();
        assert_eq!(curve[0].1, 1.0);
        assert!((curve[1].1 - 0.9275).abs() < 1e-4);
        for big_m in [5.0, 10.0, 20.0] {
            assert!(fig1_curve(big_m, &[1.0]).unwrap()[0].1 < 1.0);
        }
        assert!(fig1_curve(0.25, &[0.5]).is_err());
        assert!(fig1_curve(3.0, &[1.5]).is_err());
    }

    #[test]
    fn fig1_curves_order() {
        let grid: Vec<f64> = (40..=100).map(|k| k as f64 / 100.0).collect();
        let curves: Vec<Vec<(f64, f64)>> = [3.0, 5.0, 10.0, 20.0]
            .iter()
            .map(|&m| fig1_curve(m, &grid).unwrap())
            .collect();
        for c in &curves {
            assert!(c.windows(2).all(|w| w[1].1 <= w[0].1));
        }
        for pair in curves.windows(2) {
            for (lo, hi) in pair[0].iter().zip(&pair[1]) {
                assert!(hi.1 <= lo.1);
            }
        }
    }

    proptest! {
        #[test]
        fn divergence_symmetry_and_scaling(a in 0.01f64..50.0, b in 0.01f64..50.0, k in 0.01f64..20.0) {
            let d = ch_divergence(a, b).unwrap();
            prop_assert!((d - ch_divergence(b, a).unwrap()).abs() < 1e-12 * (1.0 + d));
            let scaled = ch_divergence(k * a, k * b).unwrap();
            prop_assert!((scaled - k * d).abs() < 1e-9 * (1.0 + k * d));
        }

        #[test]
        fn delta_increases_with_gap(m in 1.0f64..50.0, f1 in 0.0f64..1.0, f2 in 0.0f64..1.0) {
            let (lo, hi) = (f1.min(f2) * m, f1.max(f2) * m);
            prop_assume!(lo > 0.0 && hi < m);
            let value = |d: f64| delta_exponent(m, d).unwrap().unwrap_or(0.0);
            prop_assert!(value(lo) <= value(hi));
        }

        #[test]
        fn lower_tail_is_monotone_in_ell(ell in -20.0f64..20.0, step in 0.0f64..5.0) {
            let p = params(60, 4.5, 2.0);
            let t1 = exact_tail(&p, ell, 60).unwrap();
            let t2 = exact_tail(&p, ell + step, 60).unwrap();
            prop_assert!(t2 <= t1 + 1e-15);
        }
    }
}
