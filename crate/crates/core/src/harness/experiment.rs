//! Monte-Carlo trials at a fixed instance and their aggregation.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bounds::{baseline_bound, theoretical_bound, TheoreticalBound};
use super::config::{ExperimentConfig, Instance, ProtocolKind};
use crate::domain::{
    histogram, l2_error, linf_error, nonprivate_baseline, sample_dataset, true_answers,
};
use crate::error::{Error, Result};
use crate::numeric::mean_std;
use crate::protocols::{run_adsamp, run_gauss, run_phr, run_rejsamp, RegimeWarning};
use crate::rng::{labels, SeedStream};

/// One row of the per-trial CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub l2_vs_p: f64,
    pub l2_vs_phat: f64,
    pub linf: f64,
    pub n_hat: usize,
    pub projected: bool,
    pub gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl MetricSummary {
    fn of(values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        MetricSummary {
            mean,
            std,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Which per-trial metric a bound constrains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundedMetric {
    L2VsP,
    L2VsPhat,
    Linf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub metric: BoundedMetric,
    pub mean: f64,
    pub bound: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    /// The resolved configuration; re-running it reproduces `trials` exactly.
    pub config: ExperimentConfig,
    pub trials: Vec<TrialRecord>,
    pub l2_vs_p: MetricSummary,
    pub l2_vs_phat: MetricSummary,
    pub linf: MetricSummary,
    pub n_hat: MetricSummary,
    pub projected_trials: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<TheoreticalBound>,
    /// The comparison the protocol's guarantee speaks to.
    pub primary_check: BoundCheck,
    /// For offline protocols, the error against `A·p` versus the bound plus
    /// the sampling term.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampling_check: Option<BoundCheck>,
    pub warnings: Vec<RegimeWarning>,
    /// Excluded from the summary file so that reruns are byte-identical.
    #[serde(skip)]
    pub wall_clock: Duration,
}

impl ExperimentResult {
    pub fn bound_satisfied(&self) -> bool {
        self.primary_check.satisfied
    }
}

struct TrialOutcome {
    record: TrialRecord,
    warnings: Vec<RegimeWarning>,
}

/// Seed of trial `t`; a function of the master seed and `t` only.
pub fn trial_seed(master: SeedStream, trial: usize) -> SeedStream {
    master.derive(labels::TRIAL).derive(trial as u64)
}

fn run_trial(config: &ExperimentConfig, instance: &Instance, trial: usize) -> Result<TrialOutcome> {
    let seed = trial_seed(config.master_seed(), trial);
    let data = sample_dataset(
        &instance.dist,
        config.n,
        &mut seed.derive(labels::DATASET).rng(),
    )?;
    let protocol_seed = seed.derive(labels::PROTOCOL);
    let p = instance.dist.masses();

    let offline =
        |estimate: &[f64], projected: bool, gap: f64, n_hat: usize| -> Result<TrialRecord> {
            let matrix = instance
                .matrix
                .as_ref()
                .ok_or_else(|| Error::Config("missing query matrix".into()))?;
            let truth = true_answers(matrix, &instance.dist)?;
            let empirical = nonprivate_baseline(matrix, &data)?;
            Ok(TrialRecord {
                trial,
                l2_vs_p: l2_error(estimate, &truth)?,
                l2_vs_phat: l2_error(estimate, &empirical)?,
                linf: linf_error(estimate, &truth)?,
                n_hat,
                projected,
                gap,
            })
        };

    let (record, warnings) = match config.protocol {
        ProtocolKind::Gauss | ProtocolKind::Rejsamp => {
            let matrix = instance
                .matrix
                .as_ref()
                .ok_or_else(|| Error::Config("missing query matrix".into()))?;
            let out = if config.protocol == ProtocolKind::Gauss {
                run_gauss(matrix, &data, &config.budget()?, protocol_seed)?
            } else {
                run_rejsamp(matrix, &data, config.budget()?.epsilon(), protocol_seed)?
            };
            (
                offline(&out.estimate, out.projected, out.gap, out.active_users)?,
                out.warnings,
            )
        }
        ProtocolKind::Baseline => {
            let matrix = instance
                .matrix
                .as_ref()
                .ok_or_else(|| Error::Config("missing query matrix".into()))?;
            (
                offline(&nonprivate_baseline(matrix, &data)?, false, 0.0, data.len())?,
                Vec::new(),
            )
        }
        ProtocolKind::Phr => {
            let out = run_phr(
                &data,
                config.domain_size,
                config.budget()?.epsilon(),
                protocol_seed,
            )?;
            let phat = histogram(&data, config.domain_size)?;
            let est = out.estimate.masses();
            let record = TrialRecord {
                trial,
                l2_vs_p: l2_error(est, p)?,
                l2_vs_phat: l2_error(est, phat.masses())?,
                linf: linf_error(est, p)?,
                n_hat: data.len(),
                projected: true,
                gap: 0.0,
            };
            (record, Vec::new())
        }
        ProtocolKind::Adsamp => {
            let d = config
                .d
                .ok_or_else(|| Error::Config("adsamp needs d".into()))?;
            let mut strategy = config.strategy(instance, seed)?;
            let eps = config.budget()?.epsilon();
            let transcript = run_adsamp(&data, d, config.r, eps, strategy.as_mut(), protocol_seed)?;
            let estimates = transcript.estimates();
            let truth = transcript.true_answers(&instance.dist)?;
            let phat = histogram(&data, config.domain_size)?;
            let empirical: Vec<f64> = transcript
                .rounds
                .iter()
                .map(|r| r.query.evaluate(phat.masses()))
                .collect::<Result<_>>()?;
            let record = TrialRecord {
                trial,
                l2_vs_p: l2_error(&estimates, &truth)?,
                l2_vs_phat: l2_error(&estimates, &empirical)?,
                linf: linf_error(&estimates, &truth)?,
                n_hat: transcript.rounds.iter().map(|r| r.active_users).sum(),
                projected: false,
                gap: 0.0,
            };
            (record, transcript.warnings)
        }
    };
    Ok(TrialOutcome { record, warnings })
}

/// Runs every trial (in parallel; results do not depend on scheduling),
/// aggregates, and compares against the matching guarantee.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let started = Instant::now();
    let instance = config.build_instance()?;
    let mut outcomes: Vec<TrialOutcome> = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(config, &instance, t))
        .collect::<Result<_>>()?;
    outcomes.sort_by_key(|o| o.record.trial);

    let mut warnings: Vec<RegimeWarning> = Vec::new();
    for w in outcomes.iter().flat_map(|o| &o.warnings) {
        if !warnings.contains(w) {
            warnings.push(w.clone());
        }
    }
    let trials: Vec<TrialRecord> = outcomes.into_iter().map(|o| o.record).collect();
    let column = |f: fn(&TrialRecord) -> f64| trials.iter().map(f).collect::<Vec<f64>>();
    let l2_vs_p = MetricSummary::of(&column(|t| t.l2_vs_p));
    let l2_vs_phat = MetricSummary::of(&column(|t| t.l2_vs_phat));
    let linf = MetricSummary::of(&column(|t| t.linf));
    let n_hat = MetricSummary::of(&column(|t| t.n_hat as f64));

    let check = |metric: BoundedMetric, bound: f64| {
        let mean = match metric {
            BoundedMetric::L2VsP => l2_vs_p.mean,
            BoundedMetric::L2VsPhat => l2_vs_phat.mean,
            BoundedMetric::Linf => linf.mean,
        };
        BoundCheck {
            metric,
            mean,
            bound,
            satisfied: mean <= bound,
        }
    };
    // File matrices may leave d implicit; the bound needs it.
    let sized = ExperimentConfig {
        d: Some(config.num_queries(&instance)),
        ..config.clone()
    };
    let (bound, primary_check, sampling_check) = match config.protocol {
        ProtocolKind::Baseline => {
            let slack = 1.0 + 5.0 / (config.trials as f64).sqrt();
            (
                None,
                check(
                    BoundedMetric::L2VsP,
                    baseline_bound(config.r, config.n) * slack,
                ),
                None,
            )
        }
        ProtocolKind::Gauss | ProtocolKind::Rejsamp => {
            let b = theoretical_bound(&sized)?;
            (
                Some(b),
                check(BoundedMetric::L2VsPhat, b.stated),
                Some(check(BoundedMetric::L2VsP, b.with_sampling)),
            )
        }
        ProtocolKind::Phr => {
            let b = theoretical_bound(&sized)?;
            (Some(b), check(BoundedMetric::L2VsP, b.stated), None)
        }
        ProtocolKind::Adsamp => {
            let b = theoretical_bound(&sized)?;
            (Some(b), check(BoundedMetric::Linf, b.stated), None)
        }
    };

    Ok(ExperimentResult {
        config: config.clone(),
        projected_trials: trials.iter().filter(|t| t.projected).count(),
        trials,
        l2_vs_p,
        l2_vs_phat,
        linf,
        n_hat,
        bound,
        primary_check,
        sampling_check,
        warnings,
        wall_clock: started.elapsed(),
    })
}

/// Per-trial rows as CSV with a fixed column order.
pub fn trials_csv(result: &ExperimentResult) -> Result<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for record in &result.trials {
        writer.serialize(record)?;
    }
    writer
        .into_inner()
        .map_err(|e| Error::Config(format!("csv buffer: {e}")))
}

/// Paths written by [`write_outputs`]: the CSV and its JSON summary.
pub fn output_paths(csv_path: &Path) -> (PathBuf, PathBuf) {
    (csv_path.to_path_buf(), csv_path.with_extension("json"))
}

/// Writes the trial CSV at `csv_path` and the summary next to it.
pub fn write_outputs(result: &ExperimentResult, csv_path: &Path) -> Result<(PathBuf, PathBuf)> {
    let (csv_out, json_out) = output_paths(csv_path);
    if let Some(dir) = csv_out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(&csv_out, trials_csv(result)?).map_err(|e| Error::io(&csv_out, e))?;
    let mut summary = serde_json::to_vec_pretty(result)?;
    summary.push(b'\n');
    fs::write(&json_out, summary).map_err(|e| Error::io(&json_out, e))?;
    Ok((csv_out, json_out))
}

/// Reads back the configuration embedded in a summary file.
pub fn embedded_config(summary_path: &Path) -> Result<ExperimentConfig> {
    #[derive(Deserialize)]
    struct Summary {
        config: ExperimentConfig,
    }
    let text = fs::read_to_string(summary_path).map_err(|e| Error::io(summary_path, e))?;
    let summary: Summary = serde_json::from_str(&text)?;
    Ok(summary.config)
}
