//! Sampling distributions over bins and ball-weight distributions.
//!
//! Non-uniform distributions draw through a Walker/Vose alias table
//! (`rand_distr::weighted::WeightedAliasIndex`), so each draw costs one
//! bounded integer and one uniform real. The uniform distribution draws a
//! single bounded integer.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{BallocError, Result};

/// Tolerance on `sum(probs) == 1` accepted by [`SamplingDistribution::biased`].
pub const SUM_TOL: f64 = 1e-9;
/// Tolerance on the integrality of `M` for step distributions.
pub const STEP_M_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
enum BinSampler {
    Uniform(usize),
    Alias(WeightedAliasIndex<f64>),
}

/// Probability vector over `n` bins together with its `(a, b)`-bias metadata:
/// `a_bias = 1/(n min s)` and `b_bias = n max s`.
#[derive(Debug, Clone)]
pub struct SamplingDistribution {
    probs: Vec<f64>,
    a_bias: f64,
    b_bias: f64,
    sampler: BinSampler,
}

impl SamplingDistribution {
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(BallocError::InvalidDistribution("n must be at least 1".into()));
        }
        Ok(Self {
            probs: vec![1.0 / n as f64; n],
            a_bias: 1.0,
            b_bias: 1.0,
            sampler: BinSampler::Uniform(n),
        })
    }

    /// Arbitrary full-support distribution. Entries must be positive and sum
    /// to one within [`SUM_TOL`]; they are renormalized before storage.
    pub fn biased(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(BallocError::InvalidDistribution("empty probability vector".into()));
        }
        if let Some((i, p)) = probs.iter().enumerate().find(|(_, p)| !(**p > 0.0) || !p.is_finite()) {
            return Err(BallocError::InvalidDistribution(format!(
                "entry {i} is {p}, all entries must be positive"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(BallocError::InvalidDistribution(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        let probs: Vec<f64> = probs.iter().map(|p| p / sum).collect();
        Self::from_normalized(probs)
    }

    /// The `(a, b)`-step distribution: `M = n(a-1)/(ab-1)` bins of mass `b/n`
    /// followed by `n - M` bins of mass `1/(an)`. `M` must be integral.
    pub fn step(a: f64, b: f64, n: usize) -> Result<Self> {
        let heavy = step_heavy_count(a, b, n)?;
        let hi = b / n as f64;
        let lo = 1.0 / (a * n as f64);
        let probs: Vec<f64> = (0..n).map(|i| if i < heavy { hi } else { lo }).collect();
        Self::from_normalized(probs)
    }

    fn from_normalized(probs: Vec<f64>) -> Result<Self> {
        let n = probs.len() as f64;
        let min = probs.iter().copied().fold(f64::INFINITY, f64::min);
        let max = probs.iter().copied().fold(0.0, f64::max);
        let sampler = WeightedAliasIndex::new(probs.clone())
            .map_err(|e| BallocError::InvalidDistribution(e.to_string()))?;
        Ok(Self {
            a_bias: 1.0 / (n * min),
            b_bias: n * max,
            probs,
            sampler: BinSampler::Alias(sampler),
        })
    }

    pub fn n(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, bin: usize) -> f64 {
        self.probs[bin]
    }

    pub fn a_bias(&self) -> f64 {
        self.a_bias
    }

    pub fn b_bias(&self) -> f64 {
        self.b_bias
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.sampler, BinSampler::Uniform(_))
    }

    /// Whether every mass lies in `[1/(an), b/n]` up to `1e-12`.
    pub fn is_biased_within(&self, a: f64, b: f64) -> bool {
        let n = self.n() as f64;
        self.probs
            .iter()
            .all(|&p| p >= 1.0 / (a * n) - 1e-12 && p <= b / n + 1e-12)
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match &self.sampler {
            BinSampler::Uniform(n) => rng.random_range(0..*n),
            BinSampler::Alias(alias) => alias.sample(rng),
        }
    }
}

/// `M = n(a-1)/(ab-1)` as an integer, or an error when it is not integral or
/// falls outside `[1, n]`.
pub fn step_heavy_count(a: f64, b: f64, n: usize) -> Result<usize> {
    if !(a > 1.0 && b > 1.0) {
        return Err(BallocError::InvalidDistribution(format!(
            "step distribution needs a > 1 and b > 1, got a={a}, b={b}"
        )));
    }
    if n == 0 {
        return Err(BallocError::InvalidDistribution("n must be at least 1".into()));
    }
    let m = n as f64 * (a - 1.0) / (a * b - 1.0);
    let rounded = m.round();
    if (m - rounded).abs() > STEP_M_TOL {
        return Err(BallocError::NonIntegralStep { a, b, n, m });
    }
    if rounded < 1.0 || rounded > n as f64 {
        return Err(BallocError::InvalidDistribution(format!(
            "M = {rounded} outside [1, {n}]"
        )));
    }
    Ok(rounded as usize)
}

/// Keeps `a`, rounds `M` to the nearest integer in `[1, n-1]` and solves for
/// the `b` that makes it exact. Returns `(a, b, M)`.
pub fn snap_step_params(a: f64, b: f64, n: usize) -> Result<(f64, f64, usize)> {
    if !(a > 1.0 && b > 1.0) || n < 2 {
        return Err(BallocError::InvalidDistribution(format!(
            "cannot snap a={a}, b={b}, n={n}"
        )));
    }
    let m = n as f64 * (a - 1.0) / (a * b - 1.0);
    let heavy = (m.round() as usize).clamp(1, n - 1);
    let snapped_b = (n as f64 * (a - 1.0) / heavy as f64 + 1.0) / a;
    Ok((a, snapped_b, heavy))
}

/// Distribution of ball weights. All supported kinds have mean one and a
/// finite moment generating function at `mgf_lambda`.
#[derive(Debug, Clone)]
pub struct WeightDistribution {
    kind: WeightKind,
    mgf_lambda: f64,
}

#[derive(Debug, Clone)]
enum WeightKind {
    Unit,
    Exponential,
    Discrete { values: Vec<f64>, sampler: WeightedAliasIndex<f64> },
}

/// Tolerance on the mean of a discrete weight distribution.
pub const WEIGHT_MEAN_TOL: f64 = 1e-3;

impl WeightDistribution {
    pub fn unit() -> Self {
        Self { kind: WeightKind::Unit, mgf_lambda: 1.0 }
    }

    /// Exponential with mean one; its MGF is finite for every λ < 1.
    pub fn exponential() -> Self {
        Self { kind: WeightKind::Exponential, mgf_lambda: 0.5 }
    }

    pub fn discrete(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() != probs.len() {
            return Err(BallocError::InvalidDistribution(format!(
                "discrete weights need matching non-empty values/probs, got {} and {}",
                values.len(),
                probs.len()
            )));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(BallocError::InvalidDistribution("weights must be finite and >= 0".into()));
        }
        if probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(BallocError::InvalidDistribution("weight probabilities must be >= 0".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(BallocError::InvalidDistribution(format!(
                "weight probabilities sum to {sum}"
            )));
        }
        let mean: f64 = values.iter().zip(&probs).map(|(v, p)| v * p).sum::<f64>() / sum;
        if (mean - 1.0).abs() > WEIGHT_MEAN_TOL {
            return Err(BallocError::InvalidDistribution(format!(
                "weight mean is {mean}, expected 1"
            )));
        }
        let sampler = WeightedAliasIndex::new(probs)
            .map_err(|e| BallocError::InvalidDistribution(e.to_string()))?;
        Ok(Self { kind: WeightKind::Discrete { values, sampler }, mgf_lambda: 1.0 })
    }

    pub fn is_unit(&self) -> bool {
        matches!(self.kind, WeightKind::Unit)
    }

    pub fn mgf_lambda(&self) -> f64 {
        self.mgf_lambda
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            WeightKind::Unit => 1.0,
            WeightKind::Exponential => Exp1.sample(rng),
            WeightKind::Discrete { values, sampler } => values[sampler.sample(rng)],
        }
    }
}

/// Parsed form of a distribution spec string:
/// `uniform`, `step:a=2,b=2[,snap]`, `biased:@path.json` or `biased:[..]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DistSpec {
    Uniform,
    Step { a: f64, b: f64, snap: bool },
    Biased(Vec<f64>),
}

fn spec_err(spec: &str, reason: impl Into<String>) -> BallocError {
    BallocError::InvalidSpec { spec: spec.to_string(), reason: reason.into() }
}

fn read_json_arg(spec: &str, arg: &str) -> Result<serde_json::Value> {
    let text = if let Some(path) = arg.strip_prefix('@') {
        fs::read_to_string(Path::new(path))
            .map_err(|e| spec_err(spec, format!("cannot read {path}: {e}")))?
    } else {
        arg.to_string()
    };
    serde_json::from_str(&text).map_err(|e| spec_err(spec, e.to_string()))
}

impl DistSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "uniform" {
            return Ok(DistSpec::Uniform);
        }
        if let Some(rest) = s.strip_prefix("step:") {
            let (mut a, mut b, mut snap) = (None, None, false);
            for part in rest.split(',') {
                match part.split_once('=') {
                    Some(("a", v)) => a = Some(v.parse::<f64>().map_err(|e| spec_err(s, e.to_string()))?),
                    Some(("b", v)) => b = Some(v.parse::<f64>().map_err(|e| spec_err(s, e.to_string()))?),
                    None if part == "snap" => snap = true,
                    _ => return Err(spec_err(s, format!("unknown step parameter `{part}`"))),
                }
            }
            return match (a, b) {
                (Some(a), Some(b)) => Ok(DistSpec::Step { a, b, snap }),
                _ => Err(spec_err(s, "step needs both a= and b=")),
            };
        }
        if let Some(rest) = s.strip_prefix("biased:") {
            let probs: Vec<f64> = serde_json::from_value(read_json_arg(s, rest)?)
                .map_err(|e| spec_err(s, e.to_string()))?;
            return Ok(DistSpec::Biased(probs));
        }
        Err(spec_err(s, "expected uniform, step:a=..,b=.. or biased:@file"))
    }

    pub fn build(&self, n: usize) -> Result<SamplingDistribution> {
        match self {
            DistSpec::Uniform => SamplingDistribution::uniform(n),
            DistSpec::Step { a, b, snap } => {
                if *snap {
                    let (a, b, _) = snap_step_params(*a, *b, n)?;
                    SamplingDistribution::step(a, b, n)
                } else {
                    SamplingDistribution::step(*a, *b, n)
                }
            }
            DistSpec::Biased(p) => {
                if p.len() != n {
                    return Err(BallocError::InvalidDistribution(format!(
                        "biased vector has {} entries but n = {n}",
                        p.len()
                    )));
                }
                SamplingDistribution::biased(p.clone())
            }
        }
    }
}

/// Parsed weight spec: `unit`, `exp`, `discrete:@path.json` (or inline JSON)
/// where the JSON is `{"values": [...], "probs": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WeightSpec {
    Unit,
    Exponential,
    Discrete { values: Vec<f64>, probs: Vec<f64> },
}

impl WeightSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let body = s.strip_prefix("weights:").unwrap_or(s);
        match body {
            "unit" => Ok(WeightSpec::Unit),
            "exp" => Ok(WeightSpec::Exponential),
            _ => {
                let rest = body
                    .strip_prefix("discrete:")
                    .ok_or_else(|| spec_err(s, "expected unit, exp or discrete:@file"))?;
                #[derive(Deserialize)]
                struct Raw {
                    values: Vec<f64>,
                    probs: Vec<f64>,
                }
                let raw: Raw = serde_json::from_value(read_json_arg(s, rest)?)
                    .map_err(|e| spec_err(s, e.to_string()))?;
                Ok(WeightSpec::Discrete { values: raw.values, probs: raw.probs })
            }
        }
    }

    pub fn build(&self) -> Result<WeightDistribution> {
        match self {
            WeightSpec::Unit => Ok(WeightDistribution::unit()),
            WeightSpec::Exponential => Ok(WeightDistribution::exponential()),
            WeightSpec::Discrete { values, probs } => {
                WeightDistribution::discrete(values.clone(), probs.clone())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn freq(dist: &SamplingDistribution, bin: usize, draws: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..draws).filter(|_| dist.sample(&mut rng) == bin).count() as f64 / draws as f64
    }

    fn within_4_sigma(observed: f64, p: f64, draws: usize) -> bool {
        let sigma = (p * (1.0 - p) / draws as f64).sqrt();
        (observed - p).abs() <= 4.0 * sigma
    }

    #[test]
    fn uniform_examples() {
        let u = SamplingDistribution::uniform(4).unwrap();
        assert_eq!(u.probs(), &[0.25; 4]);
        assert_eq!(SamplingDistribution::uniform(1).unwrap().probs(), &[1.0]);
        let u3 = SamplingDistribution::uniform(3).unwrap();
        assert_eq!((u3.a_bias(), u3.b_bias()), (1.0, 1.0));
        assert!(SamplingDistribution::uniform(0).is_err());
    }

    #[test]
    fn biased_examples() {
        let d = SamplingDistribution::biased(vec![0.5, 0.5]).unwrap();
        assert_eq!((d.a_bias(), d.b_bias()), (1.0, 1.0));
        let d = SamplingDistribution::biased(vec![0.4, 0.2, 0.2, 0.2]).unwrap();
        assert_relative_eq!(d.a_bias(), 1.25, epsilon = 1e-12);
        assert_relative_eq!(d.b_bias(), 1.6, epsilon = 1e-12);
        assert!(SamplingDistribution::biased(vec![1.0, 0.0]).is_err());
        assert!(SamplingDistribution::biased(vec![0.5, 0.6]).is_err());
        assert!(SamplingDistribution::biased(vec![-0.5, 1.5]).is_err());
    }

    #[test]
    fn step_examples() {
        let d = SamplingDistribution::step(2.0, 2.0, 12).unwrap();
        for i in 0..4 {
            assert_relative_eq!(d.prob(i), 1.0 / 6.0, epsilon = 1e-15);
        }
        for i in 4..12 {
            assert_relative_eq!(d.prob(i), 1.0 / 24.0, epsilon = 1e-15);
        }
        assert_relative_eq!(d.probs().iter().sum::<f64>(), 1.0, epsilon = 1e-12);

        assert!(matches!(
            SamplingDistribution::step(2.0, 2.0, 10),
            Err(BallocError::NonIntegralStep { .. })
        ));

        let d = SamplingDistribution::step(3.0, 3.0, 8).unwrap();
        assert_eq!(step_heavy_count(3.0, 3.0, 8).unwrap(), 2);
        assert_relative_eq!(d.prob(0), 3.0 / 8.0, epsilon = 1e-15);
        assert_relative_eq!(d.prob(7), 1.0 / 24.0, epsilon = 1e-15);
        assert_relative_eq!(d.probs().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn step_round_trips_through_biased() {
        for &(a, b, n) in &[(2.0, 2.0, 12), (3.0, 3.0, 8), (3.0, 2.0, 10), (2.0, 3.0, 10), (3.0, 3.0, 1024)] {
            let step = SamplingDistribution::step(a, b, n).unwrap();
            let again = SamplingDistribution::biased(step.probs().to_vec()).unwrap();
            assert_relative_eq!(again.a_bias(), a, epsilon = 1e-9);
            assert_relative_eq!(again.b_bias(), b, epsilon = 1e-9);
        }
    }

    #[test]
    fn bias_bounds_hold_for_constructed() {
        let dists = [
            SamplingDistribution::uniform(7).unwrap(),
            SamplingDistribution::step(2.0, 2.0, 12).unwrap(),
            SamplingDistribution::biased(vec![0.1, 0.2, 0.3, 0.4]).unwrap(),
        ];
        for d in &dists {
            assert!(d.is_biased_within(d.a_bias(), d.b_bias()));
        }
    }

    #[test]
    fn snapping_makes_step_integral() {
        let (a, b, m) = snap_step_params(4.0, 4.0, 1024).unwrap();
        assert_eq!(m, 205);
        assert_eq!(step_heavy_count(a, b, 1024).unwrap(), 205);
        assert!(b > 1.0 && (b - 4.0).abs() < 0.01);
        assert!(DistSpec::parse("step:a=4,b=4,snap").unwrap().build(1024).is_ok());
        assert!(DistSpec::parse("step:a=4,b=4").unwrap().build(1024).is_err());
    }

    #[test]
    fn sample_frequencies() {
        let one = SamplingDistribution::uniform(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..1000).all(|_| one.sample(&mut rng) == 0));

        let step = SamplingDistribution::step(2.0, 2.0, 12).unwrap();
        assert!(within_4_sigma(freq(&step, 0, 1_000_000, 11), 1.0 / 6.0, 1_000_000));

        let biased = SamplingDistribution::biased(vec![0.4, 0.6]).unwrap();
        assert!(within_4_sigma(freq(&biased, 1, 1_000_000, 12), 0.6, 1_000_000));
    }

    #[test]
    fn weight_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let unit = WeightDistribution::unit();
        assert!((0..100).all(|_| unit.sample(&mut rng) == 1.0));

        let draws = 1_000_000;
        let exp = WeightDistribution::exponential();
        let mean = (0..draws).map(|_| exp.sample(&mut rng)).sum::<f64>() / draws as f64;
        assert!((mean - 1.0).abs() <= 0.01, "exp mean {mean}");

        let disc = WeightDistribution::discrete(vec![0.0, 2.0], vec![0.5, 0.5]).unwrap();
        let mut all_nonneg = true;
        let mean = (0..draws)
            .map(|_| {
                let w = disc.sample(&mut rng);
                all_nonneg &= w >= 0.0;
                w
            })
            .sum::<f64>()
            / draws as f64;
        assert!(all_nonneg);
        assert!((mean - 1.0).abs() <= 0.01, "discrete mean {mean}");
    }

    #[test]
    fn discrete_weight_validation() {
        assert!(WeightDistribution::discrete(vec![1.0, 3.0], vec![0.5, 0.5]).is_err());
        assert!(WeightDistribution::discrete(vec![1.0], vec![0.5, 0.5]).is_err());
        assert!(WeightDistribution::discrete(vec![-1.0, 3.0], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn spec_strings() {
        assert_eq!(DistSpec::parse("uniform").unwrap(), DistSpec::Uniform);
        assert_eq!(
            DistSpec::parse("step:a=2,b=2").unwrap(),
            DistSpec::Step { a: 2.0, b: 2.0, snap: false }
        );
        assert_eq!(DistSpec::parse("biased:[0.4,0.6]").unwrap(), DistSpec::Biased(vec![0.4, 0.6]));
        assert!(DistSpec::parse("step:a=2").is_err());
        assert!(DistSpec::parse("zipf:1").is_err());

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.json");
        std::fs::write(&p, "[0.25, 0.75]").unwrap();
        let spec = DistSpec::parse(&format!("biased:@{}", p.display())).unwrap();
        assert_eq!(spec.build(2).unwrap().probs(), &[0.25, 0.75]);
        assert!(spec.build(3).is_err());

        assert_eq!(WeightSpec::parse("weights:unit").unwrap(), WeightSpec::Unit);
        assert_eq!(WeightSpec::parse("exp").unwrap(), WeightSpec::Exponential);
        let w = dir.path().join("w.json");
        std::fs::write(&w, r#"{"values":[0,2],"probs":[0.5,0.5]}"#).unwrap();
        let ws = WeightSpec::parse(&format!("weights:discrete:@{}", w.display())).unwrap();
        assert!(ws.build().is_ok());
    }

    fn chi_square_p_value(dist: &SamplingDistribution, draws: usize, seed: u64) -> f64 {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts = vec![0u64; dist.n()];
        for _ in 0..draws {
            counts[dist.sample(&mut rng)] += 1;
        }
        let stat: f64 = counts
            .iter()
            .zip(dist.probs())
            .map(|(&c, &p)| {
                let e = p * draws as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        1.0 - ChiSquared::new((dist.n() - 1) as f64).unwrap().cdf(stat)
    }

    #[test]
    fn chi_square_goodness_of_fit() {
        let mut probs: Vec<f64> = (1..=64).map(|i| i as f64).collect();
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        let dists = [
            SamplingDistribution::uniform(64).unwrap(),
            SamplingDistribution::uniform(5).unwrap(),
            SamplingDistribution::step(3.0, 3.0, 8).unwrap(),
            SamplingDistribution::step(2.0, 2.0, 12).unwrap(),
            SamplingDistribution::biased(probs).unwrap(),
        ];
        for (k, d) in dists.iter().enumerate() {
            let p = chi_square_p_value(d, 1_000_000, 100 + k as u64);
            assert!(p > 1e-4, "dist {k}: p = {p}");
        }
    }
}
