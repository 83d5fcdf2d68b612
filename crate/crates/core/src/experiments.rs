//! Monte-Carlo experiment harness.
//!
//! Trials are independent tasks keyed by their grid position and trial
//! index; each derives its own random stream from the master seed, so the
//! output does not depend on how many threads execute them.

use std::fs;
use std::path::Path;
use std::time::Instant;

use log::{debug, info};
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::init::{initial_labeling, InitConfig};
use crate::rng::{self, purpose};
use crate::sampler::{run_algorithm1, Oracle};
use crate::sbm::{
    aligned_mismatches, diff_degree_unchecked, differential_degrees, error_rate, generate_sbm,
    minority_count, minority_count_strict, Graph, Labeling, SbmParams,
};
use crate::theory::{delta_exponent, fig1_curve};

/// Per-trial measurements.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRecord {
    #[serde(rename = "D")]
    pub divergence: f64,
    pub a: f64,
    pub b: f64,
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    pub n_m: usize,
    pub n_m_strict: usize,
    pub n_s: usize,
    pub init_errors: usize,
    pub comm_size_pos: usize,
    pub comm_size_neg: usize,
    pub runtime_s: f64,
}

/// Nodes that must be queried, in rank order, before every error of
/// `tau_prime` is covered, together with the number of errors.
///
/// `tau_prime` is first aligned to `truth` by the better global sign. With
/// no errors the count is zero; otherwise it is the number of nodes whose
/// differential degree is at most the largest one among erroneous nodes.
pub fn errors_cover_size(graph: &Graph, tau_prime: &Labeling, truth: &Labeling) -> Result<(usize, usize)> {
    let (errors, sign) = aligned_mismatches(tau_prime, truth)?;
    if errors == 0 {
        return Ok((0, 0));
    }
    let d = differential_degrees(graph, tau_prime)?;
    let threshold = (0..graph.num_nodes())
        .filter(|&v| tau_prime.get(v) * sign != truth.get(v))
        .map(|v| d[v])
        .max()
        .expect("at least one error");
    Ok((d.iter().filter(|&&x| x <= threshold).count(), errors))
}

/// Generate one instance, run the initializer and record the counts.
///
/// `divergence` is stored as given so grid keys survive round-off in `a`.
pub fn measure_trial(params: &SbmParams, config: &InitConfig, seed: u64) -> Result<ExperimentRecord> {
    measure_trial_at(params, params.divergence(), config, seed, 0)
}

fn measure_trial_at(
    params: &SbmParams,
    divergence: f64,
    config: &InitConfig,
    seed: u64,
    trial: usize,
) -> Result<ExperimentRecord> {
    let started = Instant::now();
    let (graph, truth) = generate_sbm(params, rng::derive_seed(seed, &[purpose::GRAPH]));
    let init = initial_labeling(&graph, config, seed)?;
    let n_m = minority_count(&graph, &truth)?;
    let n_m_strict = minority_count_strict(&graph, &truth)?;
    let (n_s, init_errors) = errors_cover_size(&graph, &init.labeling, &truth)?;
    let comm_size_pos = truth.count_positive();
    Ok(ExperimentRecord {
        divergence,
        a: params.a(),
        b: params.b(),
        n: params.n(),
        trial,
        seed,
        n_m,
        n_m_strict,
        n_s,
        init_errors,
        comm_size_pos,
        comm_size_neg: truth.len() - comm_size_pos,
        runtime_s: started.elapsed().as_secs_f64(),
    })
}

/// Errors of the single-node genie estimator and the strict minority set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenieCheck {
    pub misclassified: Vec<usize>,
    pub minority_strict: Vec<usize>,
}

impl GenieCheck {
    pub fn minorities_all_misclassified(&self) -> bool {
        // Both lists are sorted.
        let mut mis = self.misclassified.iter().peekable();
        self.minority_strict.iter().all(|v| {
            while mis.next_if(|&&m| m < *v).is_some() {}
            mis.peek() == Some(&v)
        })
    }
}

/// Classify every node by the majority label among its neighbours under
/// the true labels (ties go to `+1`), which is the maximum-likelihood label
/// given everything else.
pub fn genie_ml_check(graph: &Graph, truth: &Labeling) -> Result<GenieCheck> {
    if truth.len() != graph.num_nodes() {
        return Err(Error::LengthMismatch {
            expected: graph.num_nodes(),
            actual: truth.len(),
        });
    }
    let labels = truth.as_slice();
    let mut misclassified = Vec::new();
    let mut minority_strict = Vec::new();
    for v in 0..graph.num_nodes() {
        let net: i64 = graph.neighbors(v).iter().map(|&u| labels[u as usize] as i64).sum();
        let genie = if net >= 0 { 1 } else { -1 };
        if genie != labels[v] {
            misclassified.push(v);
        }
        if diff_degree_unchecked(graph, labels, v) < 0 {
            minority_strict.push(v);
        }
    }
    let check = GenieCheck {
        misclassified,
        minority_strict,
    };
    debug_assert!(check.minorities_all_misclassified());
    Ok(check)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    /// Minority count under the true labels.
    Minorities,
    /// Rank-prefix size covering all initializer errors.
    SampleSize,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Quantity::Minorities => "n_m",
            Quantity::SampleSize => "n_s",
        }
    }

    fn of(self, record: &ExperimentRecord) -> usize {
        match self {
            Quantity::Minorities => record.n_m,
            Quantity::SampleSize => record.n_s,
        }
    }
}

impl Serialize for Quantity {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExponentFit {
    pub divergence: f64,
    /// After clamping to at most 1.
    pub exponent: f64,
    pub raw_exponent: f64,
    pub clamped: bool,
    /// Euclidean norm of the log-residuals of this group's cells.
    pub residual: f64,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub quantity: Quantity,
    /// Shared intercept, natural-log scale.
    pub intercept: f64,
    pub exponents: Vec<ExponentFit>,
    /// Records left out because the quantity was zero.
    pub excluded: usize,
}

impl FitResult {
    pub fn exponent_for(&self, divergence: f64) -> Option<&ExponentFit> {
        self.exponents
            .iter()
            .find(|e| (e.divergence - divergence).abs() < 1e-9)
    }
}

/// Least-squares fit of `ln q = c + k_j ln n` with one intercept `c` shared
/// by all divergence groups `j`.
///
/// Zero-valued records are dropped; the remaining values are averaged per
/// `(D, n)` cell before taking logs. Exponents above 1 are clamped to 1.
pub fn fit_exponents(records: &[ExperimentRecord], quantity: Quantity) -> Result<FitResult> {
    let mut groups: Vec<(f64, Vec<(usize, f64, usize)>)> = Vec::new();
    let mut excluded = 0;
    let mut sorted: Vec<&ExperimentRecord> = records.iter().collect();
    sorted.sort_by(|x, y| x.divergence.total_cmp(&y.divergence).then(x.n.cmp(&y.n)));
    for r in sorted {
        let value = quantity.of(r);
        let group = match groups.last_mut() {
            Some((d, cells)) if (*d - r.divergence).abs() < 1e-9 => cells,
            _ => {
                groups.push((r.divergence, Vec::new()));
                &mut groups.last_mut().unwrap().1
            }
        };
        if value == 0 {
            excluded += 1;
            continue;
        }
        match group.last_mut() {
            Some((n, sum, count)) if *n == r.n => {
                *sum += value as f64;
                *count += 1;
            }
            _ => group.push((r.n, value as f64, 1)),
        }
    }
    if groups.is_empty() {
        return Err(Error::InsufficientData("no records".into()));
    }

    // Per group: x = ln n, y = ln(mean q).
    let mut data: Vec<(f64, Vec<(f64, f64)>)> = Vec::with_capacity(groups.len());
    for (d, cells) in groups {
        if cells.is_empty() {
            return Err(Error::AllZero(d));
        }
        if cells.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "D = {d} has nonzero values at only one n"
            )));
        }
        let points = cells
            .into_iter()
            .map(|(n, sum, count)| ((n as f64).ln(), (sum / count as f64).ln()))
            .collect();
        data.push((d, points));
    }

    // For fixed c the per-group slope is k_j = (Sxy_j - c Sx_j) / Sxx_j;
    // substituting leaves a one-dimensional least-squares problem in c.
    let moments: Vec<(f64, f64, f64)> = data
        .iter()
        .map(|(_, pts)| {
            pts.iter().fold((0.0, 0.0, 0.0), |(sx, sxx, sxy), &(x, y)| {
                (sx + x, sxx + x * x, sxy + x * y)
            })
        })
        .collect();
    let (mut num, mut den) = (0.0, 0.0);
    for ((_, pts), &(sx, sxx, sxy)) in data.iter().zip(&moments) {
        for &(x, y) in pts {
            let u = y - sxy / sxx * x;
            let w = 1.0 - sx / sxx * x;
            num += u * w;
            den += w * w;
        }
    }
    if !(den > 0.0) {
        return Err(Error::InsufficientData("degenerate design".into()));
    }
    let intercept = num / den;

    let exponents = data
        .iter()
        .zip(&moments)
        .map(|((d, pts), &(sx, sxx, sxy))| {
            let raw = (sxy - intercept * sx) / sxx;
            let residual = pts
                .iter()
                .map(|&(x, y)| (y - intercept - raw * x).powi(2))
                .sum::<f64>()
                .sqrt();
            ExponentFit {
                divergence: *d,
                exponent: raw.min(1.0),
                raw_exponent: raw,
                clamped: raw > 1.0,
                residual,
                cells: pts.len(),
            }
        })
        .collect();
    Ok(FitResult {
        quantity,
        intercept,
        exponents,
        excluded,
    })
}

/// Mean error rate and its standard error at one sampled fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub fraction: f64,
    pub budget: usize,
    pub mean_error: f64,
    pub stderr: f64,
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

/// Error rate after sampling each fraction of the `2n` nodes, averaged
/// over trials. Each trial draws one graph and one initial labeling and
/// reuses them for every fraction.
pub fn error_vs_fraction_sweep(
    params: &SbmParams,
    fractions: &[f64],
    trials: usize,
    master_seed: u64,
    config: &InitConfig,
) -> Result<Vec<SweepPoint>> {
    sweep_with_seeds(params, fractions, trials, config, |t| {
        rng::derive_seed(master_seed, &[t as u64])
    })
}

fn sweep_with_seeds(
    params: &SbmParams,
    fractions: &[f64],
    trials: usize,
    config: &InitConfig,
    seed_of: impl Fn(usize) -> u64 + Sync,
) -> Result<Vec<SweepPoint>> {
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    if let Some(f) = fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(Error::InvalidArgument(format!("fraction {f} outside [0, 1]")));
    }
    let num_nodes = params.num_nodes();
    let budgets: Vec<usize> = fractions
        .iter()
        .map(|f| ((f * num_nodes as f64).round() as usize).min(num_nodes))
        .collect();

    let per_trial: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<Vec<f64>> {
            let seed = seed_of(t);
            let (graph, truth) = generate_sbm(params, rng::derive_seed(seed, &[purpose::GRAPH]));
            let tau = initial_labeling(&graph, config, seed)?.labeling;
            budgets
                .iter()
                .map(|&budget| {
                    let mut oracle = Oracle::new(truth.clone());
                    let report = run_algorithm1(&graph, &tau, budget, &mut oracle)?;
                    error_rate(&report.labeling, &truth)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    Ok(fractions
        .iter()
        .zip(&budgets)
        .enumerate()
        .map(|(i, (&fraction, &budget))| {
            let errs: Vec<f64> = per_trial.iter().map(|t| t[i]).collect();
            let (mean_error, stderr) = mean_and_stderr(&errs);
            SweepPoint {
                fraction,
                budget,
                mean_error,
                stderr,
            }
        })
        .collect())
}

/// Runs `records.csv` / `fit.csv`: minority counts and error-cover sizes
/// over a grid of divergences and sizes at fixed `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Fig2Config {
    pub b: f64,
    pub divergences: Vec<f64>,
    pub ns: Vec<usize>,
    pub trials: usize,
    pub master_seed: u64,
    pub init: InitConfig,
    /// Write measured wall time into `runtime_s`; otherwise 0, which keeps
    /// the file byte-reproducible.
    pub record_runtime: bool,
}

impl Default for Fig2Config {
    fn default() -> Self {
        Self {
            b: 2.0,
            divergences: (0..=6).map(|k| 0.30 + 0.05 * k as f64).collect(),
            ns: (0..=5).map(|k| 1000 + 200 * k).collect(),
            trials: 30,
            master_seed: 0,
            init: InitConfig::default(),
            record_runtime: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fig2Output {
    pub records: Vec<ExperimentRecord>,
    pub minority_fit: FitResult,
    pub sample_fit: FitResult,
}

pub fn run_fig2_records(config: &Fig2Config) -> Result<Vec<ExperimentRecord>> {
    let mut keys = Vec::new();
    for (di, &d) in config.divergences.iter().enumerate() {
        for (ni, &n) in config.ns.iter().enumerate() {
            let params = SbmParams::from_divergence(n, d, config.b)?;
            for t in 0..config.trials {
                keys.push((di, ni, t, d, params));
            }
        }
    }
    info!("fig2: {} trials", keys.len());
    keys.into_par_iter()
        .map(|(di, ni, t, d, params)| {
            let seed = rng::derive_seed(config.master_seed, &[di as u64, ni as u64, t as u64]);
            let mut record = measure_trial_at(&params, d, &config.init, seed, t)?;
            if !config.record_runtime {
                record.runtime_s = 0.0;
            }
            debug!("D={d} n={} trial={t}: n_m={} n_s={}", params.n(), record.n_m, record.n_s);
            Ok(record)
        })
        .collect()
}

/// Run the grid and write `records.csv` and `fit.csv` into `out_dir`.
pub fn run_fig2(config: &Fig2Config, out_dir: &Path) -> Result<Fig2Output> {
    fs::create_dir_all(out_dir)?;
    let records = run_fig2_records(config)?;
    write_csv(&out_dir.join("records.csv"), &records)?;
    let minority_fit = fit_exponents(&records, Quantity::Minorities)?;
    let sample_fit = fit_exponents(&records, Quantity::SampleSize)?;
    write_fit_csv(&out_dir.join("fit.csv"), &[&minority_fit, &sample_fit])?;
    Ok(Fig2Output {
        records,
        minority_fit,
        sample_fit,
    })
}

#[derive(Serialize)]
struct FitRow {
    quantity: Quantity,
    #[serde(rename = "D")]
    divergence: f64,
    exponent: f64,
    clamped: bool,
    shared_intercept: f64,
    residual: f64,
}

pub fn write_fit_csv(path: &Path, fits: &[&FitResult]) -> Result<()> {
    let rows: Vec<FitRow> = fits
        .iter()
        .flat_map(|fit| {
            fit.exponents.iter().map(move |e| FitRow {
                quantity: fit.quantity,
                divergence: e.divergence,
                exponent: e.exponent,
                clamped: e.clamped,
                shared_intercept: fit.intercept,
                residual: e.residual,
            })
        })
        .collect();
    write_csv(path, &rows)
}

/// Error rate against sampled fraction for several graph sizes at one divergence.
#[derive(Debug, Clone, PartialEq)]
pub struct Fig3Config {
    pub b: f64,
    pub divergence: f64,
    pub ns: Vec<usize>,
    pub trials: usize,
    pub master_seed: u64,
    pub init: InitConfig,
    /// Grid points per curve, including fraction 0.
    pub points: usize,
    /// Grid end as a multiple of the theoretical fraction `n^(-delta)`, capped at 1.
    pub cap_factor: f64,
}

impl Default for Fig3Config {
    fn default() -> Self {
        Self {
            b: 2.0,
            divergence: 0.5,
            ns: vec![1000, 2000, 4000],
            trials: 30,
            master_seed: 0,
            init: InitConfig::default(),
            points: 21,
            cap_factor: 1.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig3Row {
    pub n: usize,
    pub fraction: f64,
    pub mean_error: f64,
    pub stderr: f64,
    pub theory_bound_fraction: f64,
}

/// `n^(-delta)`, or 1 when delta is undefined.
pub fn theory_bound_fraction(params: &SbmParams) -> f64 {
    match delta_exponent(params.m(), params.delta()) {
        Ok(Some(d)) => (params.n() as f64).powf(-d).min(1.0),
        _ => 1.0,
    }
}

pub fn fig3_fraction_grid(params: &SbmParams, points: usize, cap_factor: f64) -> Vec<f64> {
    let cap = (cap_factor * theory_bound_fraction(params)).min(1.0);
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..points)
            .map(|k| cap * k as f64 / (points - 1) as f64)
            .collect(),
    }
}

pub fn run_fig3_rows(config: &Fig3Config) -> Result<Vec<Fig3Row>> {
    let mut rows = Vec::new();
    for (ni, &n) in config.ns.iter().enumerate() {
        let params = SbmParams::from_divergence(n, config.divergence, config.b)?;
        let bound = theory_bound_fraction(&params);
        let grid = fig3_fraction_grid(&params, config.points, config.cap_factor);
        info!("fig3: n={n}, bound fraction {bound:.4}");
        let points = sweep_with_seeds(&params, &grid, config.trials, &config.init, |t| {
            rng::derive_seed(config.master_seed, &[ni as u64, t as u64])
        })?;
        rows.extend(points.into_iter().map(|p| Fig3Row {
            n,
            fraction: p.fraction,
            mean_error: p.mean_error,
            stderr: p.stderr,
            theory_bound_fraction: bound,
        }));
    }
    Ok(rows)
}

/// Run the sweep and write `fig3.csv` into `out_dir`.
pub fn run_fig3(config: &Fig3Config, out_dir: &Path) -> Result<Vec<Fig3Row>> {
    fs::create_dir_all(out_dir)?;
    let rows = run_fig3_rows(config)?;
    write_csv(&out_dir.join("fig3.csv"), &rows)?;
    Ok(rows)
}

/// Smallest fraction whose mean error is exactly zero, per `n`.
pub fn zero_error_fractions(rows: &[Fig3Row]) -> Vec<(usize, Option<f64>)> {
    let mut ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    ns.dedup();
    ns.into_iter()
        .map(|n| {
            let first = rows
                .iter()
                .filter(|r| r.n == n && r.mean_error == 0.0)
                .map(|r| r.fraction)
                .reduce(f64::min);
            (n, first)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig1Config {
    pub ms: Vec<f64>,
    pub grid: Vec<f64>,
}

impl Default for Fig1Config {
    fn default() -> Self {
        Self {
            ms: vec![3.0, 5.0, 10.0, 20.0],
            grid: (40..=100).map(|k| k as f64 / 100.0).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig1Row {
    #[serde(rename = "M")]
    pub m: f64,
    pub x: f64,
    pub one_minus_delta: f64,
}

pub fn run_fig1_rows(config: &Fig1Config) -> Result<Vec<Fig1Row>> {
    let mut rows = Vec::new();
    for &m in &config.ms {
        for (x, y) in fig1_curve(m, &config.grid)? {
            rows.push(Fig1Row {
                m,
                x,
                one_minus_delta: y,
            });
        }
    }
    Ok(rows)
}

/// Write `fig1.csv` into `out_dir`.
pub fn run_fig1(config: &Fig1Config, out_dir: &Path) -> Result<Vec<Fig1Row>> {
    fs::create_dir_all(out_dir)?;
    let rows = run_fig1_rows(config)?;
    write_csv(&out_dir.join("fig1.csv"), &rows)?;
    Ok(rows)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}
