//! The `diagnose` subcommand: gradient geometry and curvature-bound slack at one θ.

use rlvr_core::diagnostics::{
    self, AssumptionReport, CosineStats, CurvatureBoundRow, MBoundReport, PhaseThresholds, ScaleReport,
};
use rlvr_core::scenarios::Scenario;
use rlvr_core::trainers;
use rlvr_core::PolicyParams;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::runner::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ThetaSource {
    /// The scenario's initial parameters.
    Initial,
    /// Parameters after running the configured trainer.
    Final,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnoseReport {
    pub theta: ThetaSource,
    pub assumptions: AssumptionReport,
    pub cosines: CosineStats,
    pub m_bound: MBoundReport,
    pub scale: ScaleReport,
    pub lemma: Vec<CurvatureBoundRow>,
    pub lemma_all_hold: bool,
}

impl DiagnoseReport {
    pub fn has_violations(&self) -> bool {
        self.assumptions.has_violations() || !self.lemma_all_hold
    }
}

pub fn diagnose_at(
    sc: &Scenario,
    theta: &PolicyParams,
    source: ThetaSource,
    thresholds: PhaseThresholds,
    ball_samples: usize,
    seed: u64,
) -> Result<DiagnoseReport, RunError> {
    let fs = &sc.features;
    let assumptions = diagnostics::assumption_report(fs, theta, None, thresholds)?;
    let lemma = diagnostics::lemma_bound_report(fs, theta, ball_samples, seed)?;
    Ok(DiagnoseReport {
        theta: source,
        cosines: diagnostics::pairwise_grad_cosines(fs, theta)?,
        m_bound: diagnostics::m_bound(fs, theta)?,
        scale: diagnostics::scale_regularity(fs, theta)?,
        lemma_all_hold: lemma.iter().all(CurvatureBoundRow::holds),
        lemma,
        assumptions,
    })
}

/// Diagnoses a scenario under `cfg`; `Final` runs the trainer first.
pub fn diagnose(cfg: &ExperimentConfig, sc: &Scenario, source: ThetaSource) -> Result<DiagnoseReport, RunError> {
    let theta = match source {
        ThetaSource::Initial => sc.theta0.clone(),
        ThetaSource::Final => trainers::run_trajectory(&cfg.trainer_config(), &sc.features, &sc.theta0)?.final_params,
    };
    let d = &cfg.diagnostics;
    diagnose_at(sc, &theta, source, d.thresholds(), d.ball_samples, cfg.trainer.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rlvr_core::diagnostics::{MStatus, Phase};
    use rlvr_core::FeatureSet;

    #[test]
    fn orthogonal_instance_is_clean() {
        let src = "[scenario]\ngenerator = \"orthogonal_blocks\"\nn = 4\n\n[trainer]\nalgorithm = \"grpo\"\nhorizon = 20\n";
        let cfg = ExperimentConfig::parse(src, "d.toml").unwrap();
        let sc = crate::instance::build_scenario(&cfg.scenario).unwrap();
        for source in [ThetaSource::Initial, ThetaSource::Final] {
            let r = diagnose(&cfg, &sc, source).unwrap();
            assert!(r.assumptions.cos_mean.abs() < 1e-12);
            assert_eq!(r.assumptions.m_status, MStatus::Vacuous);
            assert_eq!(r.assumptions.phase, Phase::I);
            assert!(!r.has_violations());
        }
    }

    #[test]
    fn anti_aligned_pair_flagged() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let features = FeatureSet::new(vec![x.clone(), x], vec![0, 1]).unwrap();
        let sc = Scenario { theta0: PolicyParams::zeros(2), features };
        let r = diagnose_at(&sc, &sc.theta0, ThetaSource::Initial, PhaseThresholds::default(), 10, 0).unwrap();
        assert!(r.has_violations());
    }
}
