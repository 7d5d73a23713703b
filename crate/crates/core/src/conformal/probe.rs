//! Empirical stability of the feasible stack against the symmetric stack.
//!
//! Each trial draws `n + 1` units. The symmetric stack cross-fits all of them,
//! the test unit included; the feasible stack cross-fits only the first `n`
//! (same fold labels) and predicts the test unit with full-sample learners.
//! Both score pairs are evaluated at the true test response. The probe yields
//! empirical estimates, not certificates, of the exceedance probability
//! `δ(ε)` and the boundary mass `h(ε)`.

use rand::Rng as _;
use rayon::prelude::*;

use super::{conformity_scores, ConformalConfig, MetaState, ScorePair};
use crate::error::{Error, Result};
use crate::folding::FoldScheme;
use crate::learners::Learner;
use crate::linalg::{rank_one_inverse_update, Matrix};
use crate::rng;
use crate::stack::{cross_fit, fit_full, Dataset};
use crate::synth::SyntheticSpec;

#[derive(Debug, Clone)]
pub struct ProbeConfig {
    /// Training size of the feasible stack.
    pub n: usize,
    pub folds: usize,
    pub alpha: f64,
    pub eps_grid: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub denom_floor: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            n: 100,
            folds: 5,
            alpha: 0.1,
            eps_grid: vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.5],
            trials: 100,
            seed: 0,
            denom_floor: super::DEFAULT_DENOM_FLOOR,
        }
    }
}

/// Per-trial scores at the true response.
#[derive(Debug, Clone, Copy)]
pub struct ProbeTrial {
    pub symmetric: ScorePair,
    pub feasible: ScorePair,
}

impl ProbeTrial {
    /// `max(|R̃ − R|, |R̃₍ₖ₎ − R₍ₖ₎|)`.
    pub fn deviation(&self) -> f64 {
        (self.feasible.r0 - self.symmetric.r0)
            .abs()
            .max((self.feasible.r_hat - self.symmetric.r_hat).abs())
    }
}

#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub eps_grid: Vec<f64>,
    /// Fraction of trials with deviation `≥ ε/2`.
    pub delta_hat: Vec<f64>,
    /// Fraction of trials with `R₍ₖ₎ − ε < R ≤ R₍ₖ₎` (symmetric stack).
    pub h_hat: Vec<f64>,
    pub trials: usize,
    /// Fraction of trials where the symmetric stack covers `Y_{n+1}`.
    pub symmetric_coverage: f64,
    /// Fraction of trials where the feasible stack covers `Y_{n+1}`.
    pub feasible_coverage: f64,
    pub per_trial: Vec<ProbeTrial>,
}

fn scores_at(z: Matrix, y: Vec<f64>, z0: &[f64], y0: f64, cfg: &ConformalConfig) -> Result<ScorePair> {
    let state = MetaState::fit(z, y)?;
    let b = rank_one_inverse_update(state.inverse_gram(), z0)?;
    conformity_scores(&state, z0, y0, &b, cfg)
}

fn run_trial<L: Learner>(generator: &SyntheticSpec, learners: &[L], cfg: &ProbeConfig, t: usize) -> Result<ProbeTrial> {
    let n = cfg.n;
    let mut rng = rng::child(cfg.seed, &format!("probe-trial-{t}"));
    let all = generator.draw(n + 1, &mut rng)?;
    let ccfg = ConformalConfig {
        alpha: cfg.alpha,
        denom_floor: cfg.denom_floor,
        ..ConformalConfig::default()
    };
    let head: Vec<usize> = (0..n).collect();
    let x_new = all.x().row(n);
    let y_new = all.y()[n];

    let scheme = FoldScheme::sample(n + 1, cfg.folds, rng.random())?;
    let sym = cross_fit(&all, learners, &scheme)?;
    let symmetric = scores_at(
        sym.z.select_rows(&head),
        sym.y[..n].to_vec(),
        sym.z.row(n),
        y_new,
        &ccfg,
    )?;

    let train: Dataset = all.subset(&head)?;
    let feas = cross_fit(&train, learners, &scheme.restrict_to_prefix(n)?)?;
    let z0 = fit_full(&train, learners)?.predict_row(x_new)?;
    let feasible = scores_at(feas.z, feas.y, &z0, y_new, &ccfg)?;

    Ok(ProbeTrial { symmetric, feasible })
}

/// Runs `cfg.trials` independent symmetric/feasible comparisons.
pub fn stability_probe<L: Learner>(
    generator: &SyntheticSpec,
    learners: &[L],
    cfg: &ProbeConfig,
) -> Result<StabilityReport> {
    if cfg.trials == 0 {
        return Err(Error::Config("stability probe needs at least one trial".into()));
    }
    if cfg.eps_grid.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Config("epsilon grid values must be positive".into()));
    }
    let per_trial = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(generator, learners, cfg, t))
        .collect::<Result<Vec<_>>>()?;

    let trials = per_trial.len() as f64;
    let frac = |pred: &dyn Fn(&ProbeTrial) -> bool| per_trial.iter().filter(|t| pred(t)).count() as f64 / trials;
    let delta_hat = cfg
        .eps_grid
        .iter()
        .map(|&eps| frac(&|t| t.deviation() >= eps / 2.0))
        .collect();
    let h_hat = cfg
        .eps_grid
        .iter()
        .map(|&eps| frac(&|t| t.symmetric.r_hat - eps < t.symmetric.r0 && t.symmetric.r0 <= t.symmetric.r_hat))
        .collect();
    Ok(StabilityReport {
        eps_grid: cfg.eps_grid.clone(),
        delta_hat,
        h_hat,
        trials: per_trial.len(),
        symmetric_coverage: frac(&|t| t.symmetric.accepts()),
        feasible_coverage: frac(&|t| t.feasible.accepts()),
        per_trial,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::LearnerSpec;

    fn small() -> (SyntheticSpec, Vec<LearnerSpec>, ProbeConfig) {
        let gen: SyntheticSpec = "fn=linear,d=2,noise=gaussian:0.5".parse().unwrap();
        let cfg = ProbeConfig {
            n: 40,
            folds: 4,
            alpha: 0.2,
            eps_grid: vec![0.05, 0.5, f64::INFINITY],
            trials: 3,
            seed: 9,
            ..ProbeConfig::default()
        };
        (gen, vec![LearnerSpec::Ridge { lambda: 0.1 }], cfg)
    }

    #[test]
    fn infinite_epsilon_has_no_exceedance() {
        let (gen, learners, cfg) = small();
        let r = stability_probe(&gen, &learners, &cfg).unwrap();
        assert_eq!(r.trials, 3);
        assert_eq!(r.delta_hat[2], 0.0);
        // With ε = ∞ the boundary band is the whole acceptance region.
        assert_eq!(r.h_hat[2], r.symmetric_coverage);
        assert!(r.delta_hat[0] >= r.delta_hat[1]);
    }

    #[test]
    fn single_trial() {
        let (gen, learners, mut cfg) = small();
        cfg.trials = 1;
        assert_eq!(stability_probe(&gen, &learners, &cfg).unwrap().trials, 1);
        cfg.trials = 0;
        assert!(stability_probe(&gen, &learners, &cfg).is_err());
    }
}
