//! Convergence of `dmax` as the sample size grows.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_trial, ClusteringMode, LipschitzLabeler, StabilityError, StabilityTrial, SyntheticDistribution, TrialConfig};
use crate::model::SizeMode;
use crate::rng::derive_seed;

pub const CSV_HEADER: &str = "n,trial,m,epsilon,dmax,bound,bound_satisfied,mode,seed";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub distribution: String,
    pub ns: Vec<usize>,
    pub trials: usize,
    pub gamma: f64,
    pub m_override: Option<usize>,
    pub k: usize,
    pub mode: ClusteringMode,
    pub restarts: usize,
    pub labeler: LipschitzLabeler,
    pub seed: u64,
    /// Thresholds for the reported `P(dmax < delta)` fractions.
    pub deltas: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            distribution: "blobs3".into(),
            ns: vec![256, 1024, 4096],
            trials: 20,
            gamma: 0.25,
            m_override: None,
            k: 3,
            mode: ClusteringMode::Restarts,
            restarts: 16,
            labeler: LipschitzLabeler::Identity,
            seed: 0,
            deltas: vec![0.01, 0.05, 0.1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaFraction {
    pub delta: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub n: usize,
    pub m: usize,
    pub trials: usize,
    pub median_dmax: f64,
    pub p90_dmax: f64,
    pub median_epsilon: f64,
    pub below_delta: Vec<DeltaFraction>,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub config: ExperimentConfig,
    pub size_mode: SizeMode,
    pub diameter: f64,
    pub density_floor: f64,
    pub beta: f64,
    pub per_n: Vec<SizeSummary>,
    /// Kendall tau between `n` and the median `dmax`; absent for a single `n`.
    pub kendall_tau: Option<f64>,
    /// Share of trials where `dmax` exceeded the propagated bound.
    pub violation_rate: f64,
    pub trials: Vec<StabilityTrial>,
}

/// Median of a non-empty list; the mean of the middle pair for even lengths.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Nearest-rank percentile of a non-empty list, `p` in `(0, 100]`.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * v.len() as f64).ceil() as usize;
    v[rank.clamp(1, v.len()) - 1]
}

/// Kendall tau-a between two equally long sequences.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mut score = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let s = (x[j] - x[i]).signum() * (y[j] - y[i]).signum();
            if (x[j] - x[i]) != 0.0 && (y[j] - y[i]) != 0.0 {
                score += s;
            }
        }
    }
    Some(score / (n * (n - 1) / 2) as f64)
}

/// Runs `trials` independent trials for every `n`. Trial `t` at size `n`
/// uses seed `derive_seed(derive_seed(seed, n), t)`.
pub fn convergence_experiment(config: &ExperimentConfig) -> Result<ConvergenceReport, StabilityError> {
    let dist = SyntheticDistribution::by_name(&config.distribution)
        .ok_or_else(|| StabilityError::InvalidConfig(format!("unknown distribution {:?}", config.distribution)))?;
    if config.ns.is_empty() || config.ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(StabilityError::InvalidConfig("ns must be non-empty and strictly increasing".into()));
    }
    if config.trials == 0 {
        return Err(StabilityError::InvalidConfig("trials must be positive".into()));
    }
    if !(0.0..0.5).contains(&config.gamma) {
        return Err(StabilityError::InvalidConfig("gamma must lie in [0, 0.5)".into()));
    }
    let jobs: Vec<(usize, usize)> = config
        .ns
        .iter()
        .flat_map(|&n| (0..config.trials).map(move |t| (n, t)))
        .collect();
    let trials: Vec<StabilityTrial> = jobs
        .par_iter()
        .map(|&(n, t)| {
            let tc = TrialConfig {
                n,
                gamma: config.gamma,
                m_override: config.m_override,
                k: config.k,
                mode: config.mode,
                restarts: config.restarts,
                seed: derive_seed(derive_seed(config.seed, n as u64), t as u64),
            };
            run_trial(&dist, &tc, &config.labeler)
        })
        .collect::<Result<_, _>>()?;

    let mut per_n = Vec::new();
    for (block, &n) in trials.chunks(config.trials).zip(&config.ns) {
        let d: Vec<f64> = block.iter().map(|t| t.dmax).collect();
        let e: Vec<f64> = block.iter().map(|t| t.epsilon).collect();
        per_n.push(SizeSummary {
            n,
            m: block[0].m,
            trials: block.len(),
            median_dmax: median(&d),
            p90_dmax: percentile(&d, 90.0),
            median_epsilon: median(&e),
            below_delta: config
                .deltas
                .iter()
                .map(|&delta| DeltaFraction {
                    delta,
                    fraction: d.iter().filter(|&&x| x < delta).count() as f64 / d.len() as f64,
                })
                .collect(),
            violations: block.iter().filter(|t| !t.bound_satisfied).count(),
        });
    }
    let xs: Vec<f64> = per_n.iter().map(|s| s.n as f64).collect();
    let ys: Vec<f64> = per_n.iter().map(|s| s.median_dmax).collect();
    let violations = trials.iter().filter(|t| !t.bound_satisfied).count();
    Ok(ConvergenceReport {
        config: config.clone(),
        size_mode: SizeMode::Fraction,
        diameter: dist.diameter,
        density_floor: dist.density_floor,
        beta: config.labeler.beta(),
        per_n,
        kendall_tau: kendall_tau(&xs, &ys),
        violation_rate: violations as f64 / trials.len() as f64,
        trials,
    })
}

impl ConvergenceReport {
    /// One row per trial, sorted by `(n, trial)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for (i, t) in self.trials.iter().enumerate() {
            let trial = i % self.config.trials;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                t.n,
                trial,
                t.m,
                t.epsilon,
                t.dmax,
                t.bound,
                t.bound_satisfied,
                t.mode.as_str(),
                t.seed
            )
            .expect("write to string");
        }
        out
    }

    /// Everything except the per-trial rows.
    pub fn summary_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("serializable");
        v.as_object_mut().expect("object").remove("trials");
        v
    }

    pub fn medians_strictly_decreasing(&self) -> bool {
        self.per_n.windows(2).all(|w| w[1].median_dmax < w[0].median_dmax)
    }

    /// Writes `stability.csv` and `summary.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), StabilityError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("stability.csv"), self.to_csv())?;
        let mut summary = serde_json::to_string_pretty(&self.summary_json()).expect("serializable");
        summary.push('\n');
        std::fs::write(dir.join("summary.json"), summary)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn statistics() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(percentile(&v, 90.0), 18.0);
        assert_eq!(percentile(&[5.0], 90.0), 5.0);
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]), Some(1.0 / 3.0));
        assert_eq!(kendall_tau(&[1.0], &[1.0]), None);
    }

    fn small(ns: Vec<usize>) -> ExperimentConfig {
        ExperimentConfig {
            ns,
            trials: 3,
            restarts: 4,
            seed: 9,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn single_size_has_no_trend() {
        let r = convergence_experiment(&small(vec![60])).unwrap();
        assert_eq!(r.per_n.len(), 1);
        assert_eq!(r.kendall_tau, None);
        assert_eq!(r.trials.len(), 3);
    }

    #[test]
    fn csv_shape_and_order() {
        let r = convergence_experiment(&small(vec![40, 80])).unwrap();
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 7);
        assert!(lines[1].starts_with("40,0,"));
        assert!(lines[6].starts_with("80,2,"));
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 9));
        assert!(r.summary_json().get("trials").is_none());
    }

    #[test]
    fn zero_override_gives_zero() {
        let cfg = ExperimentConfig {
            m_override: Some(0),
            ..small(vec![50, 100])
        };
        let r = convergence_experiment(&cfg).unwrap();
        assert!(r.trials.iter().all(|t| t.dmax == 0.0));
        assert_eq!(r.violation_rate, 0.0);
    }

    #[test]
    fn rejects_bad_ladders() {
        assert!(convergence_experiment(&small(vec![100, 50])).is_err());
        assert!(convergence_experiment(&small(vec![])).is_err());
        let cfg = ExperimentConfig {
            distribution: "nope".into(),
            ..small(vec![10])
        };
        assert!(convergence_experiment(&cfg).is_err());
    }

    #[test]
    fn parallel_run_is_reproducible() {
        let a = convergence_experiment(&small(vec![40, 80])).unwrap();
        let b = convergence_experiment(&small(vec![40, 80])).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }
}
