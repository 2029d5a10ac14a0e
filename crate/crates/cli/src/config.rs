//! Run configuration: a sectioned `key = value` file (TOML syntax) where every
//! key has a default and unknown keys are rejected.

use std::path::{Path, PathBuf};

use popvec::classify::{ClassifierKind, ClassifierSpec, SplitPlan};
use popvec::embed::TsneConfig;
use popvec::rng::derive_seed;
use popvec::stimfeat::SchemeKind;
use popvec::stimgen::{Canvas, ResponseModel, UnitPopulation};
use popvec::sweep::{Algorithm, GridSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub paths: PathsSection,
    pub generate: GenerateSection,
    pub features: FeaturesSection,
    pub sweep: SweepSection,
    pub classify: ClassifySection,
    pub embed: EmbedSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    /// Root of every artifact; not part of the config hash.
    pub workdir: String,
    /// Spike-time CSV to preprocess instead of the generated one.
    pub spike_times: String,
    /// Response-matrix CSV to analyse instead of the preprocessed one.
    pub responses: String,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            workdir: "popvec-run".into(),
            spike_times: String::new(),
            responses: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateSection {
    pub n_units: usize,
    pub repetitions: usize,
    pub canvas_width: usize,
    pub canvas_height: usize,
    pub deg_per_px: f64,
    pub window_ms: f64,
    pub horizon_ms: f64,
    pub luminance_scale: f64,
    pub rf_center_deg: [f64; 2],
    pub rf_sigma_deg: [f64; 2],
    pub luminance_gain: [f64; 2],
    pub baseline_rate: [f64; 2],
    pub peak_gain: [f64; 2],
    pub latency_ms: [f64; 2],
}

impl Default for GenerateSection {
    fn default() -> Self {
        let canvas = Canvas::default();
        let model = ResponseModel::default();
        let pop = UnitPopulation::default();
        let pair = |(a, b): (f64, f64)| [a, b];
        Self {
            n_units: 177,
            repetitions: 20,
            canvas_width: canvas.width,
            canvas_height: canvas.height,
            deg_per_px: canvas.deg_per_px,
            window_ms: model.window_ms,
            horizon_ms: model.horizon_ms,
            luminance_scale: model.luminance_scale,
            rf_center_deg: pair(pop.rf_center_deg),
            rf_sigma_deg: pair(pop.rf_sigma_deg),
            luminance_gain: pair(pop.luminance_gain),
            baseline_rate: pair(pop.baseline_rate),
            peak_gain: pair(pop.peak_gain),
            latency_ms: pair(pop.latency_ms),
        }
    }
}

impl GenerateSection {
    pub fn canvas(&self) -> Canvas {
        Canvas {
            width: self.canvas_width,
            height: self.canvas_height,
            deg_per_px: self.deg_per_px,
        }
    }

    pub fn model(&self) -> ResponseModel {
        ResponseModel {
            window_ms: self.window_ms,
            horizon_ms: self.horizon_ms,
            luminance_scale: self.luminance_scale,
        }
    }

    pub fn population(&self) -> UnitPopulation {
        let pair = |[a, b]: [f64; 2]| (a, b);
        UnitPopulation {
            rf_center_deg: pair(self.rf_center_deg),
            rf_sigma_deg: pair(self.rf_sigma_deg),
            luminance_gain: pair(self.luminance_gain),
            baseline_rate: pair(self.baseline_rate),
            peak_gain: pair(self.peak_gain),
            latency_ms: pair(self.latency_ms),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturesSection {
    /// Two center-of-mass column cuts in pixels, or "auto" for the midpoints
    /// between generator positions.
    pub position_cuts: String,
    /// `L_tot` cut, or "auto" for the `luminosity_quantile` of the sample.
    pub luminosity_cut: String,
    pub luminosity_quantile: f64,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        Self {
            position_cuts: "auto".into(),
            luminosity_cut: "auto".into(),
            luminosity_quantile: 0.85,
        }
    }
}

impl FeaturesSection {
    pub fn position_cuts(&self) -> Result<Option<[f64; 2]>, CliError> {
        if self.position_cuts == "auto" {
            return Ok(None);
        }
        let v = parse_floats(&self.position_cuts)
            .filter(|v| v.len() == 2)
            .ok_or_else(|| {
                CliError::Config(format!(
                    "features.position_cuts: expected \"auto\" or two numbers, got \"{}\"",
                    self.position_cuts
                ))
            })?;
        Ok(Some([v[0], v[1]]))
    }

    pub fn luminosity_cut(&self) -> Result<Option<f64>, CliError> {
        if self.luminosity_cut == "auto" {
            return Ok(None);
        }
        let v = parse_floats(&self.luminosity_cut)
            .filter(|v| v.len() == 1)
            .ok_or_else(|| {
                CliError::Config(format!(
                    "features.luminosity_cut: expected \"auto\" or a number, got \"{}\"",
                    self.luminosity_cut
                ))
            })?;
        Ok(Some(v[0]))
    }
}

fn parse_floats(s: &str) -> Option<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub algorithms: Vec<String>,
    pub schemes: Vec<String>,
    pub sigma_count: usize,
    pub sigma_lo_factor: f64,
    pub sigma_hi_factor: f64,
    pub eps_percentiles: Vec<f64>,
    pub min_pts: Vec<usize>,
    pub k_values: Vec<usize>,
    pub min_class_size: usize,
    /// DS peel-off stops once fewer vertices than this remain.
    pub ds_min_cluster_size: usize,
    /// Cap on DS clusters per run; 0 means no cap.
    pub ds_max_clusters: usize,
    pub k_restarts: usize,
    pub k_max_iter: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        let g = GridSpec::default();
        Self {
            algorithms: Algorithm::ALL.iter().map(|a| a.name().to_string()).collect(),
            schemes: SchemeKind::ALL.iter().map(|s| s.name().to_string()).collect(),
            sigma_count: g.sigma_count,
            sigma_lo_factor: g.sigma_lo_factor,
            sigma_hi_factor: g.sigma_hi_factor,
            eps_percentiles: g.eps_percentiles,
            min_pts: g.min_pts,
            k_values: g.k_values,
            min_class_size: popvec::sweep::MIN_CLASS_SIZE,
            ds_min_cluster_size: popvec::sweep::MIN_CLASS_SIZE,
            ds_max_clusters: 0,
            k_restarts: 10,
            k_max_iter: 300,
        }
    }
}

impl SweepSection {
    pub fn grid_spec(&self) -> GridSpec {
        GridSpec {
            sigma_count: self.sigma_count,
            sigma_lo_factor: self.sigma_lo_factor,
            sigma_hi_factor: self.sigma_hi_factor,
            eps_percentiles: self.eps_percentiles.clone(),
            min_pts: self.min_pts.clone(),
            k_values: self.k_values.clone(),
        }
    }

    pub fn algorithms(&self) -> Result<Vec<Algorithm>, CliError> {
        parse_names(&self.algorithms, "sweep.algorithms")
    }

    pub fn schemes(&self) -> Result<Vec<SchemeKind>, CliError> {
        parse_names(&self.schemes, "sweep.schemes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifySection {
    pub classifiers: Vec<String>,
    pub schemes: Vec<String>,
    pub knn_k: Vec<usize>,
    pub svm_c: Vec<f64>,
    /// RBF γ values are these scales divided by the number of features.
    pub rbf_gamma_scales: Vec<f64>,
    pub n_splits: usize,
    pub test_fraction: f64,
    pub cv_folds: usize,
    /// Schemes re-evaluated with randomly permuted labels as a chance-level control.
    pub control_schemes: Vec<String>,
}

impl Default for ClassifySection {
    fn default() -> Self {
        let d = ClassifierSpec::default_for(ClassifierKind::RbfSvm);
        let plan = SplitPlan::default();
        Self {
            classifiers: ClassifierKind::ALL.iter().map(|k| k.name().to_string()).collect(),
            schemes: SchemeKind::ALL.iter().map(|s| s.name().to_string()).collect(),
            knn_k: d.k_values,
            svm_c: d.c_values,
            rbf_gamma_scales: d.gamma_scales,
            n_splits: plan.n_splits,
            test_fraction: plan.test_fraction,
            cv_folds: plan.cv_folds,
            control_schemes: vec![SchemeKind::Position.name().into(), SchemeKind::Luminosity.name().into()],
        }
    }
}

impl ClassifySection {
    pub fn specs(&self) -> Result<Vec<ClassifierSpec>, CliError> {
        let kinds: Vec<ClassifierKind> = parse_names(&self.classifiers, "classify.classifiers")?;
        let specs: Vec<ClassifierSpec> = kinds
            .into_iter()
            .map(|kind| ClassifierSpec {
                kind,
                k_values: self.knn_k.clone(),
                c_values: self.svm_c.clone(),
                gamma_scales: self.rbf_gamma_scales.clone(),
            })
            .collect();
        for s in &specs {
            s.validate().map_err(|e| CliError::Config(format!("classify: {e}")))?;
        }
        Ok(specs)
    }

    pub fn plan(&self, seed: u64) -> SplitPlan {
        SplitPlan {
            n_splits: self.n_splits,
            test_fraction: self.test_fraction,
            cv_folds: self.cv_folds,
            seed,
        }
    }

    pub fn schemes(&self) -> Result<Vec<SchemeKind>, CliError> {
        parse_names(&self.schemes, "classify.schemes")
    }

    pub fn control_schemes(&self) -> Result<Vec<SchemeKind>, CliError> {
        parse_names(&self.control_schemes, "classify.control_schemes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedSection {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iterations: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch: usize,
}

impl Default for EmbedSection {
    fn default() -> Self {
        let t = TsneConfig::default();
        Self {
            perplexity: t.perplexity,
            iterations: t.iterations,
            learning_rate: t.learning_rate,
            early_exaggeration: t.early_exaggeration,
            exaggeration_iterations: t.exaggeration_iterations,
            initial_momentum: t.initial_momentum,
            final_momentum: t.final_momentum,
            momentum_switch: t.momentum_switch,
        }
    }
}

impl EmbedSection {
    pub fn tsne(&self, seed: u64) -> TsneConfig {
        TsneConfig {
            perplexity: self.perplexity,
            iterations: self.iterations,
            learning_rate: self.learning_rate,
            early_exaggeration: self.early_exaggeration,
            exaggeration_iterations: self.exaggeration_iterations,
            initial_momentum: self.initial_momentum,
            final_momentum: self.final_momentum,
            momentum_switch: self.momentum_switch,
            seed,
        }
    }
}

fn parse_names<T: std::str::FromStr>(names: &[String], key: &str) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    if names.is_empty() {
        return Err(CliError::Config(format!("{key} must not be empty")));
    }
    names
        .iter()
        .map(|n| n.parse::<T>().map_err(|e| CliError::Config(format!("{key}: {e}"))))
        .collect()
}

/// Sub-seeds of the run seed, one per stage that draws random numbers.
#[derive(Debug, Clone, Copy)]
pub enum Stage {
    Sweep = 1,
    Classify = 2,
    Control = 3,
    Embed = 4,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical text of every setting that can change artifact content.
    pub fn canonical(&self) -> String {
        let mut c = self.clone();
        c.paths.workdir = String::new();
        toml::to_string(&c).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    pub fn defaults_text() -> String {
        let body = toml::to_string(&RunConfig::default()).expect("config serializes");
        format!("# popvec run configuration; every key is optional and shown with its default\n\n{body}")
    }

    pub fn workdir(&self) -> PathBuf {
        PathBuf::from(&self.paths.workdir)
    }

    pub fn stage_seed(&self, stage: Stage) -> u64 {
        derive_seed(self.run.seed, 1000 + stage as u64)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let g = &self.generate;
        if g.n_units == 0 || g.repetitions == 0 {
            return bad("generate.n_units and generate.repetitions must be positive".into());
        }
        if g.canvas_width == 0 || g.canvas_height == 0 || g.deg_per_px.is_nan() || g.deg_per_px <= 0.0 {
            return bad("generate canvas dimensions and deg_per_px must be positive".into());
        }
        if !(g.window_ms > 0.0 && g.horizon_ms >= g.window_ms && g.luminance_scale > 0.0) {
            return bad("generate: need window_ms > 0, horizon_ms >= window_ms and luminance_scale > 0".into());
        }
        for (name, [lo, hi]) in [
            ("rf_center_deg", g.rf_center_deg),
            ("rf_sigma_deg", g.rf_sigma_deg),
            ("luminance_gain", g.luminance_gain),
            ("baseline_rate", g.baseline_rate),
            ("peak_gain", g.peak_gain),
            ("latency_ms", g.latency_ms),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad(format!("generate.{name}: expected [low, high] with low <= high"));
            }
        }
        if g.rf_sigma_deg[0] <= 0.0 || g.baseline_rate[0] < 0.0 || g.peak_gain[0] < 0.0 || g.latency_ms[0] < 0.0 {
            return bad(
                "generate: rf_sigma_deg must be positive; baseline_rate, peak_gain and latency_ms nonnegative".into(),
            );
        }
        let f = &self.features;
        f.position_cuts()?;
        f.luminosity_cut()?;
        if !(0.0..1.0).contains(&f.luminosity_quantile) {
            return bad("features.luminosity_quantile must lie in [0, 1)".into());
        }
        let s = &self.sweep;
        s.algorithms()?;
        s.schemes()?;
        if s.sigma_count == 0 || !(s.sigma_lo_factor > 0.0 && s.sigma_hi_factor >= s.sigma_lo_factor) {
            return bad("sweep: need sigma_count >= 1 and 0 < sigma_lo_factor <= sigma_hi_factor".into());
        }
        if s.eps_percentiles.is_empty() || s.eps_percentiles.iter().any(|&q| !(q > 0.0 && q <= 100.0)) {
            return bad("sweep.eps_percentiles must be non-empty values in (0, 100]".into());
        }
        if s.min_pts.is_empty() || s.min_pts.contains(&0) || s.k_values.is_empty() || s.k_values.contains(&0) {
            return bad("sweep.min_pts and sweep.k_values must be non-empty positive integers".into());
        }
        if s.k_restarts == 0 || s.k_max_iter == 0 {
            return bad("sweep.k_restarts and sweep.k_max_iter must be positive".into());
        }
        let c = &self.classify;
        c.specs()?;
        c.schemes()?;
        if !c.control_schemes.is_empty() {
            c.control_schemes()?;
        }
        if c.n_splits == 0 || c.cv_folds < 2 || !(c.test_fraction > 0.0 && c.test_fraction < 1.0) {
            return bad("classify: need n_splits >= 1, cv_folds >= 2 and 0 < test_fraction < 1".into());
        }
        let e = &self.embed;
        if !(e.perplexity > 0.0 && e.learning_rate > 0.0 && e.early_exaggeration > 0.0) || e.iterations == 0 {
            return bad("embed: perplexity, learning_rate, early_exaggeration and iterations must be positive".into());
        }
        Ok(())
    }
}
