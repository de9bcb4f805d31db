//! The `sweep` subcommand: algorithms × seeds, compared on paired seeds.

use std::path::Path;

use rayon::prelude::*;
use rlvr_core::Algorithm;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::runner::{self, RunError};

/// Both medians at or below this many iterations mark the comparison as
/// low-signal.
pub const LOW_SIGNAL_ITERATIONS: f64 = 10.0;

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub iterations_to_threshold: Option<usize>,
    pub c_of_t: f64,
    pub c_at_threshold: Option<f64>,
    pub final_mean_objective: f64,
    pub cumulative_all_passed: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AlgorithmSummary {
    pub algorithm: Algorithm,
    pub runs: usize,
    pub reached: usize,
    /// Median iterations-to-threshold with unreached runs ranked last;
    /// `None` when the median itself is unreached.
    pub median_iterations: Option<f64>,
    pub median_c_of_t: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub pairs: usize,
    /// Seeds where GRPO reached the threshold strictly earlier.
    pub grpo_wins: usize,
    pub ties: usize,
    pub win_fraction: f64,
    pub low_signal: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub threshold: f64,
    pub seeds: Vec<u64>,
    pub rows: Vec<SweepRow>,
    pub per_algorithm: Vec<AlgorithmSummary>,
    pub comparison: Option<Comparison>,
}

/// Median with `None` ranked above every finite value.
pub fn median_rank(values: &[Option<usize>]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = values.iter().map(|x| x.map_or(f64::INFINITY, |t| t as f64)).collect();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    let mid = if m % 2 == 1 { v[m / 2] } else { 0.5 * (v[m / 2 - 1] + v[m / 2]) };
    mid.is_finite().then_some(mid)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len();
    if m == 0 {
        f64::NAN
    } else if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

/// Runs every `(algorithm, seed)` pair. Seeds override both the scenario and
/// the selection stream. When `out` is given each run writes into
/// `out/<algorithm>-seed<seed>/`.
pub fn sweep(
    cfg: &ExperimentConfig,
    seeds: &[u64],
    algorithms: &[Algorithm],
    out: Option<&Path>,
) -> Result<SweepSummary, RunError> {
    if seeds.len() < 2 {
        return Err(RunError::Usage("sweep needs at least two seeds".into()));
    }
    if algorithms.is_empty() {
        return Err(RunError::Usage("sweep needs at least one algorithm".into()));
    }
    let jobs: Vec<(Algorithm, u64)> =
        algorithms.iter().flat_map(|&a| seeds.iter().map(move |&s| (a, s))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(algorithm, seed)| {
            let run_cfg = cfg.clone().with_seed(seed).with_algorithm(algorithm);
            let art = runner::run(&run_cfg)?;
            if let Some(dir) = out {
                art.write_to(&dir.join(format!("{}-seed{seed}", algorithm.name())))?;
            }
            let s = &art.summary;
            Ok(SweepRow {
                algorithm,
                seed,
                iterations_to_threshold: s.iterations_to_threshold,
                c_of_t: s.c_of_t,
                c_at_threshold: s.c_at_threshold,
                final_mean_objective: s.final_mean_objective,
                cumulative_all_passed: s.cumulative.as_ref().map(|c| c.all_passed),
            })
        })
        .collect::<Result<Vec<SweepRow>, RunError>>()?;

    let per_algorithm: Vec<AlgorithmSummary> = algorithms
        .iter()
        .map(|&a| {
            let mine: Vec<&SweepRow> = rows.iter().filter(|r| r.algorithm == a).collect();
            let its: Vec<Option<usize>> = mine.iter().map(|r| r.iterations_to_threshold).collect();
            let mut cs: Vec<f64> = mine.iter().map(|r| r.c_of_t).collect();
            AlgorithmSummary {
                algorithm: a,
                runs: mine.len(),
                reached: its.iter().filter(|t| t.is_some()).count(),
                median_iterations: median_rank(&its),
                median_c_of_t: median(&mut cs),
            }
        })
        .collect();

    let comparison = (algorithms.contains(&Algorithm::Grpo) && algorithms.contains(&Algorithm::Reinforce)).then(|| {
        let rank = |a: Algorithm, seed: u64| {
            rows.iter()
                .find(|r| r.algorithm == a && r.seed == seed)
                .and_then(|r| r.iterations_to_threshold)
                .map_or(f64::INFINITY, |t| t as f64)
        };
        let mut wins = 0;
        let mut ties = 0;
        for &s in seeds {
            let (g, r) = (rank(Algorithm::Grpo, s), rank(Algorithm::Reinforce, s));
            if g < r {
                wins += 1;
            } else if g == r {
                ties += 1;
            }
        }
        let medians: Vec<f64> = per_algorithm.iter().map(|p| p.median_iterations.unwrap_or(f64::INFINITY)).collect();
        let fast = medians.iter().all(|&m| m <= LOW_SIGNAL_ITERATIONS);
        Comparison {
            pairs: seeds.len(),
            grpo_wins: wins,
            ties,
            win_fraction: wins as f64 / seeds.len() as f64,
            low_signal: fast || 2 * ties >= seeds.len(),
        }
    });

    Ok(SweepSummary { threshold: cfg.diagnostics.threshold, seeds: seeds.to_vec(), rows, per_algorithm, comparison })
}

/// Plain-text table of a sweep.
pub fn render_table(s: &SweepSummary) -> String {
    let mut out = format!("{:<10} {:>6} {:>12} {:>8} {:>10}\n", "algorithm", "seed", "iters", "C(T)", "final_J");
    for r in &s.rows {
        let its = r.iterations_to_threshold.map_or_else(|| "unreached".to_string(), |t| t.to_string());
        out.push_str(&format!(
            "{:<10} {:>6} {:>12} {:>8.4} {:>10.6}\n",
            r.algorithm.name(),
            r.seed,
            its,
            r.c_of_t,
            r.final_mean_objective
        ));
    }
    for a in &s.per_algorithm {
        let m = a.median_iterations.map_or_else(|| "unreached".to_string(), |m| format!("{m}"));
        out.push_str(&format!(
            "median {:<10} iterations-to-threshold {m} ({} of {} reached), median C(T) {:.4}\n",
            a.algorithm.name(),
            a.reached,
            a.runs,
            a.median_c_of_t
        ));
    }
    if let Some(c) = &s.comparison {
        out.push_str(&format!(
            "grpo wins {}/{} paired seeds ({} ties){}\n",
            c.grpo_wins,
            c.pairs,
            c.ties,
            if c.low_signal { " [low signal]" } else { "" }
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_ranks_unreached_last() {
        assert_eq!(median_rank(&[Some(3), None, Some(1)]), Some(3.0));
        assert_eq!(median_rank(&[Some(2), Some(4)]), Some(3.0));
        assert_eq!(median_rank(&[Some(2), None, None]), None);
    }

    fn cfg(targets: &str) -> ExperimentConfig {
        let src = format!(
            "[scenario]\ngenerator = \"difficulty_preset\"\ntargets = {targets}\n\n[trainer]\nalgorithm = \"grpo\"\nhorizon = 400\n\n[diagnostics]\nsnapshot_every = 400\n"
        );
        ExperimentConfig::parse(&src, "sweep.toml").unwrap()
    }

    #[test]
    fn single_algorithm_has_no_comparison() {
        let s = sweep(&cfg("[0.5]"), &[0, 1], &[Algorithm::Grpo], None).unwrap();
        assert!(s.comparison.is_none());
        assert_eq!(s.rows.len(), 2);
    }

    #[test]
    fn near_solved_start_is_low_signal() {
        let s = sweep(&cfg("[0.99]"), &[0, 1, 2], &[Algorithm::Reinforce, Algorithm::Grpo], None).unwrap();
        let c = s.comparison.unwrap();
        assert!(c.low_signal);
        assert!(s.rows.iter().all(|r| r.iterations_to_threshold == Some(0)));
    }

    #[test]
    fn one_seed_rejected() {
        assert!(sweep(&cfg("[0.5]"), &[0], &[Algorithm::Grpo], None).is_err());
    }
}
