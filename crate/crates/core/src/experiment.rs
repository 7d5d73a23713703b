//! Experiment configuration and the train/test runner.
//!
//! A config file holds flat `key = value` lines; `#` starts a comment.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `data` | | CSV path, relative to the config file |
//! | `response` | | response column of `data` |
//! | `synthetic` | | generator spec, e.g. `fn=friedman,n=500,d=5,noise=gaussian:1` |
//! | `dataset_name` | file stem or `synthetic` | label in reports |
//! | `train_frac` | 0.7 | training share of the shuffled data |
//! | `folds` | 5 | cross-fitting folds |
//! | `learners` | `ridge;knn;forest` | `;`-separated learner specs |
//! | `alpha` | `0.2,0.15,0.1` | miscoverage levels |
//! | `epsilon` | `1e-3·sd(y)` | absolute bisection tolerance |
//! | `u` | 10 | bracket half-width in response SDs |
//! | `denom_floor` | 1e-6 | score denominator floor |
//! | `expand_bracket` | false | widen the bracket while its edge is conformal |
//! | `calib_frac` | 0.3 | calibration share for the split baseline |
//! | `subsample` | 50 | units written to each figure file |
//! | `seed` | 0 | root seed |
//! | `out` | `out` | output directory |
//!
//! Exactly one of `data` and `synthetic` is required. A synthetic generator
//! is seeded from `seed`, so its spec must not carry its own.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::conformal::{calibration_size, conformal_rank, ConformalConfig, SplitConformal, DEFAULT_BRACKET_MULTIPLE, DEFAULT_DENOM_FLOOR};
use crate::data::load_csv;
use crate::error::{Error, Result};
use crate::eval::{self, EvaluationReport, QUANTILE_CONVENTION};
use crate::folding::FoldScheme;
use crate::learners::{ForestParams, LearnerSpec};
use crate::pipeline::StackedRegressor;
use crate::rng;
use crate::stack::Dataset;
use crate::synth::SyntheticSpec;

pub const STACKED_METHOD: &str = "Stacked CP";
pub const SPLIT_METHOD: &str = "Split CP";

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Csv { path: PathBuf, response: String },
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: DataSource,
    pub dataset_name: String,
    pub train_frac: f64,
    pub folds: usize,
    pub learners: Vec<LearnerSpec>,
    pub alphas: Vec<f64>,
    pub epsilon: Option<f64>,
    pub u: f64,
    pub denom_floor: f64,
    pub expand_bracket: bool,
    pub calib_frac: f64,
    pub subsample: usize,
    pub seed: u64,
    pub out: PathBuf,
}

pub fn default_learners() -> Vec<LearnerSpec> {
    vec![
        LearnerSpec::Ridge { lambda: 1.0 },
        LearnerSpec::Knn { k: 10 },
        LearnerSpec::Forest(ForestParams::default()),
    ]
}

impl ExperimentConfig {
    pub fn new(source: DataSource) -> Self {
        let dataset_name = match &source {
            DataSource::Csv { path, .. } => path
                .file_stem()
                .map_or_else(|| "data".to_owned(), |s| s.to_string_lossy().into_owned()),
            DataSource::Synthetic(_) => "synthetic".to_owned(),
        };
        Self {
            source,
            dataset_name,
            train_frac: 0.7,
            folds: 5,
            learners: default_learners(),
            alphas: vec![0.2, 0.15, 0.1],
            epsilon: None,
            u: DEFAULT_BRACKET_MULTIPLE,
            denom_floor: DEFAULT_DENOM_FLOOR,
            expand_bracket: false,
            calib_frac: 0.3,
            subsample: 50,
            seed: 0,
            out: PathBuf::from("out"),
        }
    }

    /// Reads a config file; a relative `data` path is resolved against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        let mut cfg: Self = text.parse()?;
        if let DataSource::Csv { path: data, .. } = &mut cfg.source {
            if data.is_relative() {
                if let Some(dir) = path.parent() {
                    *data = dir.join(&*data);
                }
            }
        }
        Ok(cfg)
    }

    pub fn conformal(&self, alpha: f64) -> ConformalConfig {
        ConformalConfig {
            alpha,
            epsilon: self.epsilon,
            u: self.u,
            denom_floor: self.denom_floor,
            expand_bracket: self.expand_bracket,
        }
    }

    /// Static checks; the rank precondition needs the data size and is
    /// checked by [`check_rank_preconditions`].
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return fail(format!("train_frac must lie in (0, 1), got {}", self.train_frac));
        }
        if !(self.calib_frac > 0.0 && self.calib_frac < 1.0) {
            return fail(format!("calib_frac must lie in (0, 1), got {}", self.calib_frac));
        }
        if self.folds < 2 {
            return fail(format!("folds must be at least 2, got {}", self.folds));
        }
        if self.learners.is_empty() {
            return fail("at least one learner is required".into());
        }
        if self.alphas.is_empty() {
            return fail("at least one alpha is required".into());
        }
        for spec in &self.learners {
            spec.validate()?;
        }
        for &alpha in &self.alphas {
            self.conformal(alpha).validate()?;
        }
        if let DataSource::Synthetic(spec) = &self.source {
            spec.validate()?;
        }
        Ok(())
    }
}

/// Fails when some `alpha` has `⌈(1 − α)(n + 1)⌉ > n` for the training or
/// calibration size.
pub fn check_rank_preconditions(alphas: &[f64], n_train: usize, n_cal: usize) -> Result<()> {
    for &alpha in alphas {
        for (what, n) in [("training", n_train), ("calibration", n_cal)] {
            if conformal_rank(alpha, n).is_err() {
                return Err(Error::Config(format!(
                    "alpha={alpha} is not attainable with {n} {what} units: the conformal rank exceeds the sample size"
                )));
            }
        }
    }
    Ok(())
}

fn parse_list<T: FromStr>(v: &str, sep: char, key: &str) -> Result<Vec<T>> {
    v.split(sep)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::Config(format!("bad {key} value {s:?}"))))
        .collect()
}

fn parse_value<T: FromStr>(v: &str, key: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("bad {key} value {v:?}")))
}

impl FromStr for ExperimentConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut pairs: Vec<(String, String)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let key = k.trim().to_owned();
            if pairs.iter().any(|(seen, _)| *seen == key) {
                return Err(Error::Config(format!("line {}: duplicate key {key}", lineno + 1)));
            }
            pairs.push((key, v.trim().to_owned()));
        }
        let get = |key: &str| pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());

        let source = match (get("data"), get("synthetic")) {
            (Some(path), None) => DataSource::Csv {
                path: PathBuf::from(path),
                response: get("response")
                    .ok_or_else(|| Error::Config("data requires a response column".into()))?
                    .to_owned(),
            },
            (None, Some(spec)) => {
                if spec.split(',').any(|item| item.trim().starts_with("seed")) {
                    return Err(Error::Config(
                        "the synthetic generator is seeded from the top-level seed key".into(),
                    ));
                }
                if get("response").is_some() {
                    return Err(Error::Config("response applies only to data files".into()));
                }
                DataSource::Synthetic(spec.parse()?)
            }
            _ => return Err(Error::Config("exactly one of data and synthetic is required".into())),
        };
        let mut cfg = Self::new(source);
        for (key, v) in &pairs {
            let v = v.as_str();
            match key.as_str() {
                "data" | "synthetic" | "response" => {}
                "dataset_name" => cfg.dataset_name = v.to_owned(),
                "train_frac" => cfg.train_frac = parse_value(v, key)?,
                "folds" => cfg.folds = parse_value(v, key)?,
                "learners" => cfg.learners = parse_list(v, ';', key)?,
                "alpha" => cfg.alphas = parse_list(v, ',', key)?,
                "epsilon" => cfg.epsilon = Some(parse_value(v, key)?),
                "u" => cfg.u = parse_value(v, key)?,
                "denom_floor" => cfg.denom_floor = parse_value(v, key)?,
                "expand_bracket" => cfg.expand_bracket = parse_value(v, key)?,
                "calib_frac" => cfg.calib_frac = parse_value(v, key)?,
                "subsample" => cfg.subsample = parse_value(v, key)?,
                "seed" => cfg.seed = parse_value(v, key)?,
                "out" => cfg.out = PathBuf::from(v),
                other => return Err(Error::Config(format!("unknown config key {other}"))),
            }
        }
        if let DataSource::Synthetic(spec) = &mut cfg.source {
            spec.seed = cfg.seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.source {
            DataSource::Csv { path, response } => {
                writeln!(f, "data = {}", path.display())?;
                writeln!(f, "response = {response}")?;
            }
            DataSource::Synthetic(spec) => {
                let text = spec.to_string();
                let without_seed: Vec<&str> = text.split(',').filter(|i| !i.starts_with("seed=")).collect();
                writeln!(f, "synthetic = {}", without_seed.join(","))?;
            }
        }
        let join = |v: Vec<String>, sep: &str| v.join(sep);
        writeln!(f, "dataset_name = {}", self.dataset_name)?;
        writeln!(f, "train_frac = {}", self.train_frac)?;
        writeln!(f, "folds = {}", self.folds)?;
        writeln!(f, "learners = {}", join(self.learners.iter().map(ToString::to_string).collect(), ";"))?;
        writeln!(f, "alpha = {}", join(self.alphas.iter().map(ToString::to_string).collect(), ","))?;
        if let Some(eps) = self.epsilon {
            writeln!(f, "epsilon = {eps}")?;
        }
        writeln!(f, "u = {}", self.u)?;
        writeln!(f, "denom_floor = {}", self.denom_floor)?;
        writeln!(f, "expand_bracket = {}", self.expand_bracket)?;
        writeln!(f, "calib_frac = {}", self.calib_frac)?;
        writeln!(f, "subsample = {}", self.subsample)?;
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "out = {}", self.out.display())
    }
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub alphas: Option<Vec<f64>>,
    pub folds: Option<usize>,
    pub seed: Option<u64>,
    pub epsilon: Option<f64>,
    pub u: Option<f64>,
    pub train_frac: Option<f64>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(self, mut cfg: ExperimentConfig) -> Result<ExperimentConfig> {
        if let Some(a) = self.alphas {
            cfg.alphas = a;
        }
        if let Some(k) = self.folds {
            cfg.folds = k;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
            if let DataSource::Synthetic(spec) = &mut cfg.source {
                spec.seed = s;
            }
        }
        if let Some(e) = self.epsilon {
            cfg.epsilon = Some(e);
        }
        if let Some(u) = self.u {
            cfg.u = u;
        }
        if let Some(t) = self.train_frac {
            cfg.train_frac = t;
        }
        if let Some(o) = self.out {
            cfg.out = o;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Summary of a finished run.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub reports: Vec<EvaluationReport>,
    pub table: String,
    pub n_train: usize,
    pub n_test: usize,
    pub n_cal: usize,
    pub dropped: usize,
}

fn load_source(cfg: &ExperimentConfig) -> Result<(Dataset, usize)> {
    match &cfg.source {
        DataSource::Csv { path, response } => {
            let loaded = load_csv(path, response)?;
            Ok((loaded.dataset, loaded.dropped))
        }
        DataSource::Synthetic(spec) => Ok((spec.generate()?, 0)),
    }
}

/// `0.1 → "0.1"`, used in per-level file names.
pub fn alpha_label(alpha: f64) -> String {
    alpha.to_string()
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(Error::Io)
}

fn write_records(path: &Path, records: &[eval::IntervalRecord]) -> Result<()> {
    eval::write_records(fs::File::create(path)?, records)
}

/// Shuffles, splits, fits the stacked model and the split baseline once, then
/// evaluates every `alpha` on the held-out units and writes:
/// `reports.csv`, `table.txt`, `manifest.txt`, and per level
/// `intervals_<alpha>.csv`, `baseline_intervals_<alpha>.csv`,
/// `figure_<alpha>.csv` (a seeded subsample of the stacked intervals).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let (data, dropped) = load_source(cfg)?;
    let n = data.n();
    let n_train = (n as f64 * cfg.train_frac).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::Config(format!(
            "train_frac={} leaves an empty training or test set for n={n}",
            cfg.train_frac
        )));
    }
    let n_cal = calibration_size(n_train, cfg.calib_frac);
    check_rank_preconditions(&cfg.alphas, n_train, n_cal)?;
    if cfg.folds > n_train {
        return Err(Error::BadFoldCount {
            folds: cfg.folds,
            n: n_train,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::child(cfg.seed, "split"));
    let (train_idx, test_idx) = order.split_at(n_train);
    let train = data.subset(train_idx)?;
    let test = data.subset(test_idx)?;

    let scheme = FoldScheme::sample(n_train, cfg.folds, rng::child_seed(cfg.seed, "folds"))?;
    let stacked = StackedRegressor::fit(&train, &cfg.learners, &scheme)?;
    let baseline = SplitConformal::fit(
        &train,
        &cfg.learners,
        cfg.folds,
        cfg.calib_frac,
        rng::child_seed(cfg.seed, "baseline"),
    )?;

    fs::create_dir_all(&cfg.out)?;
    let mut reports = Vec::new();
    let mut manifest_levels = String::new();
    for &alpha in &cfg.alphas {
        let label = alpha_label(alpha);
        let ivs = stacked.intervals(test.x(), &cfg.conformal(alpha))?;
        let base = baseline.intervals(test.x(), alpha)?;
        let stacked_report = eval::evaluate(&cfg.dataset_name, STACKED_METHOD, alpha, &ivs, test.y())?;
        let base_report = eval::evaluate(&cfg.dataset_name, SPLIT_METHOD, alpha, &base, test.y())?;

        let records = eval::interval_records(&ivs, test.y())?;
        write_records(&cfg.out.join(format!("intervals_{label}.csv")), &records)?;
        write_records(
            &cfg.out.join(format!("baseline_intervals_{label}.csv")),
            &eval::interval_records(&base, test.y())?,
        )?;
        let figure = eval::subsample_records(&records, cfg.subsample, rng::child_seed(cfg.seed, &format!("figure-{label}")));
        write_records(&cfg.out.join(format!("figure_{label}.csv")), &figure)?;

        manifest_levels.push_str(&format!(
            "level alpha={label} truncated={} floor_events={} split_quantile={}\n",
            stacked_report.truncated,
            stacked_report.floor_events,
            baseline.quantile(alpha)?
        ));
        reports.push(stacked_report);
        reports.push(base_report);
    }

    let rendered = eval::render_report(&reports)?;
    write_file(&cfg.out.join("reports.csv"), &rendered.csv)?;
    write_file(&cfg.out.join("table.txt"), &rendered.table)?;
    let manifest = format!(
        "stacked-cp {}\nseed = {}\nquantile_convention = {QUANTILE_CONVENTION}\nn = {n}\ndropped_rows = {dropped}\nn_train = {n_train}\nn_test = {}\nn_cal = {n_cal}\nfold_sizes = {:?}\n{manifest_levels}\n[config]\n{cfg}",
        env!("CARGO_PKG_VERSION"),
        cfg.seed,
        test.n(),
        scheme.fold_sizes(),
    );
    write_file(&cfg.out.join("manifest.txt"), &manifest)?;

    Ok(ExperimentOutcome {
        reports,
        table: rendered.table,
        n_train,
        n_test: test.n(),
        n_cal,
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "
        # tiny synthetic run
        synthetic = fn=linear,n=120,d=2,noise=gaussian:0.5
        learners = ridge:lambda=0.1; knn:k=5
        alpha = 0.2, 0.1
        folds = 3
        seed = 7
    ";

    #[test]
    fn parse_and_roundtrip() {
        let cfg: ExperimentConfig = SMALL.parse().unwrap();
        assert_eq!(cfg.alphas, vec![0.2, 0.1]);
        assert_eq!(cfg.folds, 3);
        assert_eq!(cfg.learners.len(), 2);
        assert_eq!(cfg.dataset_name, "synthetic");
        let DataSource::Synthetic(spec) = &cfg.source else { panic!() };
        assert_eq!(spec.seed, 7);
        let again: ExperimentConfig = cfg.to_string().parse().unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn config_errors() {
        for bad in [
            "",
            "folds = 3",
            "synthetic = fn=linear\ndata = x.csv\nresponse = y",
            "synthetic = fn=linear\nbogus = 1",
            "synthetic = fn=linear\ntrain_frac = 1.5",
            "synthetic = fn=linear\nalpha = 0",
            "synthetic = fn=linear,seed=3",
            "synthetic = fn=linear\nfolds = 1",
            "data = x.csv",
            "synthetic = fn=linear\nseed = 1\nseed = 2",
        ] {
            assert!(bad.parse::<ExperimentConfig>().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn overrides_apply() {
        let cfg: ExperimentConfig = SMALL.parse().unwrap();
        let cfg = Overrides {
            alphas: Some(vec![0.15]),
            seed: Some(11),
            u: Some(5.0),
            ..Default::default()
        }
        .apply(cfg)
        .unwrap();
        assert_eq!(cfg.alphas, vec![0.15]);
        assert_eq!(cfg.seed, 11);
        let DataSource::Synthetic(spec) = &cfg.source else { panic!() };
        assert_eq!(spec.seed, 11);
        assert!(Overrides {
            train_frac: Some(0.0),
            ..Default::default()
        }
        .apply(cfg)
        .is_err());
    }

    #[test]
    fn rank_gate() {
        assert!(check_rank_preconditions(&[0.1], 5, 5).is_err());
        assert!(check_rank_preconditions(&[0.1], 9, 9).is_ok());
        assert!(check_rank_preconditions(&[0.2, 0.1], 100, 8).is_err());
    }

    #[test]
    fn gate_runs_before_training() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg: ExperimentConfig = "synthetic = fn=linear,n=8,d=2\nalpha = 0.1\nfolds = 2".parse().unwrap();
        cfg.out = dir.path().join("out");
        let err = run_experiment(&cfg).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        assert!(!cfg.out.exists());
    }

    #[test]
    fn small_run_writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg: ExperimentConfig = SMALL.parse().unwrap();
        cfg.out = dir.path().to_path_buf();
        let outcome = run_experiment(&cfg).unwrap();
        assert_eq!(outcome.reports.len(), 4);
        assert_eq!((outcome.n_train, outcome.n_test), (84, 36));
        for f in [
            "reports.csv",
            "table.txt",
            "manifest.txt",
            "intervals_0.1.csv",
            "intervals_0.2.csv",
            "baseline_intervals_0.1.csv",
            "figure_0.2.csv",
        ] {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
        let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
        assert!(manifest.contains("seed = 7"));
    }
}
