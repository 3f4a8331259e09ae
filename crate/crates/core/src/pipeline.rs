//! End-to-end experiments: synthesize labeled data from a known input model,
//! form the label/score cross-moment, decompose it, and compare the
//! recovered directions with the planted ones.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{canonicalize_sign, dot, norm};
use crate::model_spec::ModelSpec;
use crate::poly::{PolyFunction, PolySpec};
use crate::scalar::Scalar;
use crate::score::{selftaught_refit_weights, DensityModel, GaussianMixture, ScoreOrder};
use crate::spectral::{self, Component, DecompConfig, DecompositionResult, InitMethod};
use crate::stein::{self, cross_moment, expected_derivative, oracle_method, LabeledDataset, SteinReport};
use crate::tensor::{io, DenseTensor};

/// Scalar link `σ` in planted labels `Σ_j σ(u_j · x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Linear,
    Square,
    Cube,
    Tanh,
    /// `σ(t) = Σ_k c_k t^k`.
    Polynomial(Vec<f64>),
}

impl Link {
    fn coefficients(&self) -> Option<Vec<f64>> {
        match self {
            Self::Linear => Some(vec![0.0, 1.0]),
            Self::Square => Some(vec![0.0, 0.0, 1.0]),
            Self::Cube => Some(vec![0.0, 0.0, 0.0, 1.0]),
            Self::Polynomial(c) => Some(c.clone()),
            Self::Tanh => None,
        }
    }

    fn apply(&self, t: f64) -> f64 {
        match self {
            Self::Tanh => t.tanh(),
            other => other
                .coefficients()
                .unwrap_or_default()
                .iter()
                .rev()
                .fold(0.0, |acc, &c| acc * t + c),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LabelSpec {
    Polynomial {
        g: PolySpec,
        #[serde(default)]
        noise_sd: f64,
    },
    Planted {
        components: Vec<Vec<f64>>,
        link: Link,
        #[serde(default)]
        noise_sd: f64,
    },
}

impl LabelSpec {
    pub fn noise_sd(&self) -> f64 {
        match self {
            Self::Polynomial { noise_sd, .. } | Self::Planted { noise_sd, .. } => *noise_sd,
        }
    }

    pub fn planted(&self) -> Option<&[Vec<f64>]> {
        match self {
            Self::Planted { components, .. } => Some(components),
            Self::Polynomial { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MomentMode {
    /// `E[∇^(m) G]` from the deterministic oracle, no sampling.
    Exact,
    #[default]
    Empirical,
}

/// Optional overrides of the decomposition defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DecompSettings {
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub inits: Option<usize>,
    #[serde(default)]
    pub iters: Option<usize>,
    #[serde(default)]
    pub nu: Option<f64>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub init: Option<InitMethod>,
}

/// Output file names, resolved against the working directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    #[serde(default)]
    pub report: Option<String>,
    #[serde(default)]
    pub summary: Option<String>,
    #[serde(default)]
    pub components: Option<String>,
    #[serde(default)]
    pub moment: Option<String>,
    #[serde(default)]
    pub dataset: Option<String>,
    #[serde(default)]
    pub timings: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelftaughtSettings {
    /// Model generating the target inputs (components may differ in weight).
    pub target_model: ModelSpec,
    /// Allowed drop of mean log-likelihood per sample, in nats.
    #[serde(default = "default_drop")]
    pub loglik_drop_threshold: f64,
}

fn default_drop() -> f64 {
    2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub labels: LabelSpec,
    #[serde(default)]
    pub n_unlabeled: usize,
    pub n_labeled: usize,
    pub order: usize,
    #[serde(default)]
    pub decomp: DecompSettings,
    pub seed: u64,
    #[serde(default)]
    pub moment_mode: MomentMode,
    #[serde(default)]
    pub whiten: bool,
    #[serde(default)]
    pub outputs: OutputPaths,
    #[serde(default)]
    pub selftaught: Option<SelftaughtSettings>,
}

/// Label function: polynomial (oracle-friendly) or a general planted link.
#[derive(Clone, Debug)]
pub enum LabelFunction {
    Poly(PolyFunction<f64>),
    Planted { components: Vec<Vec<f64>>, link: Link },
}

impl LabelFunction {
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        match self {
            Self::Poly(g) => Ok(g.eval(x)?[0]),
            Self::Planted { components, link } => Ok(components.iter().map(|u| link.apply(dot(u, x))).sum()),
        }
    }

    pub fn as_poly(&self) -> Option<&PolyFunction<f64>> {
        match self {
            Self::Poly(g) => Some(g),
            Self::Planted { .. } => None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn score_order(&self) -> Result<ScoreOrder> {
        if !(1..=3).contains(&self.order) {
            return Err(Error::Validation(format!("pipeline order {} outside 1..=3", self.order)));
        }
        ScoreOrder::new(self.order)
    }

    pub fn build_model(&self) -> Result<DensityModel<f64>> {
        self.model.build()
    }

    /// Number of planted directions, when labels are planted.
    pub fn planted_count(&self) -> Option<usize> {
        self.labels.planted().map(<[_]>::len)
    }

    pub fn decomp_config(&self) -> Result<DecompConfig> {
        let s = &self.decomp;
        let k = s.k.unwrap_or_else(|| self.planted_count().unwrap_or(1).max(1));
        let mut cfg = DecompConfig::new(k).with_seed(self.seed);
        if let Some(v) = s.inits {
            cfg.inits = v;
        }
        if let Some(v) = s.iters {
            cfg.iters = v;
        }
        if let Some(v) = s.nu {
            cfg.nu = v;
        }
        if let Some(v) = s.tol {
            cfg.tol = v;
        }
        if let Some(v) = s.init {
            cfg.init = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn label_function(&self, dim: usize) -> Result<LabelFunction> {
        match &self.labels {
            LabelSpec::Polynomial { g, .. } => {
                let g = PolyFunction::from_spec(g)?;
                if !g.is_scalar() {
                    return Err(Error::Validation("pipeline labels must be scalar (output_dim 1)".into()));
                }
                if g.dim() != dim {
                    return Err(Error::Shape(format!("label polynomial has {} inputs, model has {dim}", g.dim())));
                }
                Ok(LabelFunction::Poly(g))
            }
            LabelSpec::Planted { components, link, .. } => {
                for (j, u) in components.iter().enumerate() {
                    if u.len() != dim {
                        return Err(Error::Shape(format!("planted component {j} has length {}, model has {dim}", u.len())));
                    }
                    if (norm(u) - 1.0).abs() > 1e-8 {
                        return Err(Error::Validation(format!("planted component {j} is not unit norm")));
                    }
                }
                let Some(coefs) = link.coefficients() else {
                    return Ok(LabelFunction::Planted {
                        components: components.clone(),
                        link: link.clone(),
                    });
                };
                if coefs.len() > crate::poly::MAX_DEGREE as usize + 1 {
                    return Err(Error::Validation("polynomial link degree exceeds 6".into()));
                }
                let mut g = PolyFunction::constant(dim, 0.0);
                if !components.is_empty() {
                    for (k, &c) in coefs.iter().enumerate() {
                        if c != 0.0 {
                            g = g.add(&PolyFunction::planted_power_sum(components, k as u32)?.scale(c))?;
                        }
                    }
                }
                Ok(LabelFunction::Poly(g))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.score_order()?;
        if self.n_labeled == 0 {
            return Err(Error::Validation("n_labeled must be at least 1".into()));
        }
        let noise = self.labels.noise_sd();
        if !(noise >= 0.0 && noise.is_finite()) {
            return Err(Error::Validation(format!("noise_sd {noise} must be non-negative")));
        }
        let model = self.build_model()?;
        self.label_function(model.dim())?;
        self.decomp_config()?;
        Ok(())
    }
}

/// Inputs from the model, labels `G(x) + σ_y ε` with independent standard
/// normal `ε`; the stream is fixed by the seed.
pub fn synth_generate(cfg: &ExperimentConfig) -> Result<LabeledDataset<f64>> {
    let model = cfg.build_model()?;
    synth_from(&model, cfg, cfg.n_labeled, cfg.seed)
}

fn synth_from(model: &DensityModel<f64>, cfg: &ExperimentConfig, n: usize, seed: u64) -> Result<LabeledDataset<f64>> {
    let d = model.dim();
    let g = cfg.label_function(d)?;
    let sd = cfg.labels.noise_sd();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = model.sample(&mut rng, n).map_err(|e| match e {
        Error::Unsupported(msg) => Error::Validation(msg),
        other => other,
    })?;
    let mut y = Vec::with_capacity(n);
    for row in x.chunks(d) {
        let eps: f64 = rng.sample(StandardNormal);
        y.push(g.eval(row)? + sd * eps);
    }
    LabeledDataset::new(d, 1, x, y)
}

fn unlabeled_stream(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeSummary {
    pub max: f64,
    pub mean: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub max_abs_gap: f64,
    pub max_gap_in_std_errors: f64,
}

impl From<&SteinReport<f64>> for GapSummary {
    fn from(r: &SteinReport<f64>) -> Self {
        Self {
            max_abs_gap: r.max_abs_gap,
            max_gap_in_std_errors: r.max_gap_in_std_errors,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    pub planted: usize,
    /// Index of the matched estimate, if any remained.
    pub estimate: Option<usize>,
    /// `min(‖û − u‖, ‖û + u‖)`; 2 when unmatched.
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelftaughtSummary {
    pub source_weights: Vec<f64>,
    pub refit_weights: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub source_mean_loglik: f64,
    pub target_mean_loglik: f64,
    pub low_likelihood: bool,
}

/// Deterministic run summary (wall-clock timings are kept separately).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub model: String,
    pub order: usize,
    pub n_labeled: usize,
    pub moment_mode: MomentMode,
    pub moment_std_error: Option<SeSummary>,
    pub stein_gap: Option<GapSummary>,
    /// `E[S_1]` over unlabeled draws, which is zero under a correct model.
    pub model_check: Option<GapSummary>,
    pub components: Vec<Component<f64>>,
    pub residual_fro: f64,
    pub candidates_kept: usize,
    pub partial: bool,
    pub recovery: Option<Vec<Recovery>>,
    pub max_recovery_error: Option<f64>,
    pub no_signal: bool,
    pub selftaught: Option<SelftaughtSummary>,
}

impl PipelineReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut line = |t: String| {
            s.push_str(&t);
            s.push('\n');
        };
        line(format!("model: {}  order: {}  labeled samples: {}", self.model, self.order, self.n_labeled));
        line(format!("moment mode: {:?}", self.moment_mode).to_lowercase());
        if let Some(se) = &self.moment_std_error {
            line(format!("moment standard error: max {:.3e}, mean {:.3e}", se.max, se.mean));
        }
        if let Some(g) = &self.stein_gap {
            line(format!(
                "stein gap: max |gap| {:.3e} ({:.2} standard errors)",
                g.max_abs_gap, g.max_gap_in_std_errors
            ));
        }
        if let Some(g) = &self.model_check {
            line(format!("model check E[S_1]: {:.2} standard errors", g.max_gap_in_std_errors));
        }
        if let Some(st) = &self.selftaught {
            line(format!("source weights: {:?}", st.source_weights));
            line(format!("refit weights:  {:?} ({} iterations)", st.refit_weights, st.iterations));
            line(format!(
                "mean log-likelihood: source {:.4}, target {:.4}{}",
                st.source_mean_loglik,
                st.target_mean_loglik,
                if st.low_likelihood { "  [LOW TARGET LIKELIHOOD]" } else { "" }
            ));
        }
        line(format!("components ({}{}):", self.components.len(), if self.partial { ", partial" } else { "" }));
        for (j, c) in self.components.iter().enumerate() {
            let v: Vec<String> = c.vector.iter().map(|x| format!("{x:+.4}")).collect();
            line(format!("  [{j}] weight {:+.6}  vector [{}]", c.weight, v.join(", ")));
        }
        line(format!("residual (Frobenius): {:.3e}", self.residual_fro));
        if let Some(rec) = &self.recovery {
            for r in rec {
                line(format!("  planted {} -> estimate {:?}: error {:.3e}", r.planted, r.estimate, r.error));
            }
        }
        if let Some(e) = self.max_recovery_error {
            line(format!("max recovery error: {e:.3e}"));
        }
        if self.no_signal {
            line("NO SIGNAL: component weights are within 5 standard errors of zero".into());
        }
        s
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct PipelineOutcome {
    pub report: PipelineReport,
    pub dataset: Option<LabeledDataset<f64>>,
    pub moment: DenseTensor<f64>,
    pub decomposition: DecompositionResult<f64>,
    pub timings: Vec<StageTiming>,
}

/// Where intermediate artifacts go as soon as they exist.
struct Sink<'a> {
    dir: Option<&'a Path>,
    outputs: &'a OutputPaths,
}

impl Sink<'_> {
    fn path(&self, name: &Option<String>) -> Option<PathBuf> {
        let dir = self.dir?;
        name.as_ref().map(|n| dir.join(n))
    }

    fn dataset(&self, data: &LabeledDataset<f64>) -> Result<()> {
        if let Some(p) = self.path(&self.outputs.dataset) {
            data.save(p)?;
        }
        Ok(())
    }

    fn moment(&self, t: &DenseTensor<f64>) -> Result<()> {
        if let Some(p) = self.path(&self.outputs.moment) {
            io::save(p, t)?;
        }
        Ok(())
    }

    fn finish(&self, outcome: &PipelineOutcome) -> Result<()> {
        if let Some(p) = self.path(&self.outputs.components) {
            std::fs::write(p, serde_json::to_string_pretty(&outcome.decomposition)? + "\n")?;
        }
        if let Some(p) = self.path(&self.outputs.report) {
            std::fs::write(p, serde_json::to_string_pretty(&outcome.report)? + "\n")?;
        }
        if let Some(p) = self.path(&self.outputs.summary) {
            std::fs::write(p, outcome.report.to_text())?;
        }
        if let Some(p) = self.path(&self.outputs.timings) {
            std::fs::write(p, serde_json::to_string_pretty(&outcome.timings)? + "\n")?;
        }
        Ok(())
    }
}

struct Clock {
    timings: Vec<StageTiming>,
    last: Instant,
}

impl Clock {
    fn new() -> Self {
        Self {
            timings: Vec::new(),
            last: Instant::now(),
        }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.timings.push(StageTiming {
            stage: stage.into(),
            seconds: (now - self.last).as_secs_f64(),
        });
        self.last = now;
    }
}

/// Greedy matching of estimates to planted directions by `|⟨û, u⟩|`.
pub fn recovery_errors(estimates: &[Vec<f64>], planted: &[Vec<f64>]) -> Vec<Recovery> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (e, u_hat) in estimates.iter().enumerate() {
        for (p, u) in planted.iter().enumerate() {
            pairs.push((dot(u_hat, u).abs(), e, p));
        }
    }
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_e = vec![false; estimates.len()];
    let mut out: Vec<Recovery> = (0..planted.len())
        .map(|p| Recovery {
            planted: p,
            estimate: None,
            error: 2.0,
        })
        .collect();
    for (_, e, p) in pairs {
        if used_e[e] || out[p].estimate.is_some() {
            continue;
        }
        used_e[e] = true;
        let dist = |s: f64| {
            estimates[e]
                .iter()
                .zip(&planted[p])
                .map(|(a, b)| (a - s * b).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        out[p] = Recovery {
            planted: p,
            estimate: Some(e),
            error: dist(1.0).min(dist(-1.0)),
        };
    }
    out
}

fn single_direction(v: &DenseTensor<f64>) -> DecompositionResult<f64> {
    let mut vector = v.data().to_vec();
    let weight = norm(&vector);
    let mut components = Vec::new();
    if weight > 0.0 {
        vector.iter_mut().for_each(|x| *x /= weight);
        let s = canonicalize_sign(&mut vector);
        components.push(Component { weight: weight * s, vector });
    }
    DecompositionResult {
        residual_fro: 0.0,
        candidates_kept: components.len(),
        components,
        starts: Vec::new(),
    }
}

fn decompose_stage(
    moment: &DenseTensor<f64>,
    second: Option<&DenseTensor<f64>>,
    m: usize,
    dc: &DecompConfig,
) -> Result<(DecompositionResult<f64>, bool)> {
    let outcome = match m {
        1 => {
            if dc.k != 1 {
                return Err(Error::Validation(format!("a first-order moment has one direction, k = {} requested", dc.k)));
            }
            Ok(single_direction(moment))
        }
        2 => {
            let comps = spectral::matrix_decompose(moment, dc.k)?;
            let w: Vec<f64> = comps.iter().map(|c| c.weight).collect();
            let v: Vec<Vec<f64>> = comps.iter().map(|c| c.vector.clone()).collect();
            let approx = crate::tensor::rank1_sum(&w, &v, 2)?;
            Ok(DecompositionResult {
                residual_fro: moment.sub(&approx)?.frobenius_norm(),
                candidates_kept: comps.len(),
                components: comps,
                starts: Vec::new(),
            })
        }
        _ => match second {
            Some(m2) => spectral::decompose_whitened(moment, m2, dc),
            None => spectral::decompose(moment, dc),
        },
    };
    match outcome {
        Ok(r) => Ok((r, false)),
        Err(Error::PartialResult { result, .. }) => Ok((*result, true)),
        Err(e) => Err(e),
    }
}

struct Prepared {
    model: DensityModel<f64>,
    order: ScoreOrder,
    labels: LabelFunction,
    decomp: DecompConfig,
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let model = cfg.build_model()?;
    let labels = cfg.label_function(model.dim())?;
    Ok(Prepared {
        order: cfg.score_order()?,
        decomp: cfg.decomp_config()?,
        model,
        labels,
    })
}

fn model_check(model: &DensityModel<f64>, n: usize, seed: u64) -> Result<Option<GapSummary>> {
    if n == 0 {
        return Ok(None);
    }
    let xs = match model.sample(&mut unlabeled_stream(seed), n) {
        Ok(xs) => xs,
        Err(Error::Unsupported(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let d = model.dim();
    let data = LabeledDataset::new(d, 1, xs, vec![1.0; n])?;
    let est = cross_moment(&data, model, ScoreOrder::new(1)?)?;
    let report = SteinReport::compare(est, DenseTensor::zeros(vec![d])?)?;
    Ok(Some(GapSummary::from(&report)))
}

/// Moment, optional whitening matrix, decomposition and metrics for a
/// prepared model and (in empirical mode) dataset.
fn analyze(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    data: Option<&LabeledDataset<f64>>,
    sink: &Sink<'_>,
    clock: &mut Clock,
) -> Result<(PipelineReport, DenseTensor<f64>, DecompositionResult<f64>)> {
    let m = prep.order;
    let oracle = |order: ScoreOrder| -> Result<Option<DenseTensor<f64>>> {
        let Some(g) = prep.labels.as_poly() else { return Ok(None) };
        let Ok(method) = oracle_method(&prep.model) else { return Ok(None) };
        expected_derivative(g, &prep.model, order, method).map(Some)
    };
    let (moment, se, stein_gap, second) = match (cfg.moment_mode, data) {
        (MomentMode::Exact, _) => {
            let t = oracle(m)
                .and_then(|t| {
                    t.ok_or_else(|| {
                        Error::Validation(
                            "exact moments need polynomial labels and a gaussian/gmm-based model of an analytic or quadrature-friendly kind".into(),
                        )
                    })
                })
                .map_err(|e| e.in_stage("moment"))?;
            let second = if cfg.whiten && m.get() == 3 {
                oracle(ScoreOrder::new(2)?).map_err(|e| e.in_stage("moment"))?
            } else {
                None
            };
            (t, None, None, second)
        }
        (MomentMode::Empirical, Some(data)) => {
            let est = cross_moment(data, &prep.model, m).map_err(|e| e.in_stage("moment"))?;
            let se = SeSummary {
                max: est.max_std_error(),
                mean: est.mean_std_error(),
            };
            let gap = match oracle(m).map_err(|e| e.in_stage("stein-check"))? {
                Some(o) => Some(GapSummary::from(&SteinReport::compare(est.clone(), o)?)),
                None => None,
            };
            let second = if cfg.whiten && m.get() == 3 {
                Some(
                    cross_moment(data, &prep.model, ScoreOrder::new(2)?)
                        .map_err(|e| e.in_stage("moment"))?
                        .value,
                )
            } else {
                None
            };
            (est.value, Some(se), gap, second)
        }
        (MomentMode::Empirical, None) => {
            return Err(Error::Validation("empirical mode needs a dataset".into()).in_stage("moment"));
        }
    };
    sink.moment(&moment).map_err(|e| e.in_stage("moment"))?;
    clock.lap("moment");

    if cfg.whiten && m.get() == 3 && second.is_none() {
        return Err(Error::Validation("whitening needs a second-order moment".into()).in_stage("whiten"));
    }
    let (decomposition, partial) =
        decompose_stage(&moment, second.as_ref(), m.get(), &prep.decomp).map_err(|e| e.in_stage("decompose"))?;
    clock.lap("decompose");

    let planted = cfg.labels.planted().filter(|p| !p.is_empty());
    let recovery = planted.map(|p| recovery_errors(&decomposition.vectors(), p));
    let max_recovery_error = recovery
        .as_ref()
        .map(|r| r.iter().map(|x| x.error).fold(0.0, f64::max));
    let max_w = decomposition.components.iter().map(|c| c.weight.abs()).fold(0.0, f64::max);
    let no_signal = decomposition.components.is_empty() || max_w < 5.0 * se.map_or(0.0, |s| s.max);
    let report = PipelineReport {
        model: prep.model.variant_name().into(),
        order: m.get(),
        n_labeled: data.map_or(0, LabeledDataset::len),
        moment_mode: cfg.moment_mode,
        moment_std_error: se,
        stein_gap,
        model_check: None,
        components: decomposition.components.clone(),
        residual_fro: decomposition.residual_fro,
        candidates_kept: decomposition.candidates_kept,
        partial,
        recovery,
        max_recovery_error,
        no_signal,
        selftaught: None,
    };
    Ok((report, moment, decomposition))
}

fn run(cfg: &ExperimentConfig, dir: Option<&Path>) -> Result<PipelineOutcome> {
    let sink = Sink {
        dir,
        outputs: &cfg.outputs,
    };
    let mut clock = Clock::new();
    let prep = prepare(cfg).map_err(|e| e.in_stage("config"))?;
    let data = match cfg.moment_mode {
        MomentMode::Empirical => {
            let d = synth_from(&prep.model, cfg, cfg.n_labeled, cfg.seed).map_err(|e| e.in_stage("synthesize"))?;
            sink.dataset(&d).map_err(|e| e.in_stage("synthesize"))?;
            Some(d)
        }
        MomentMode::Exact => None,
    };
    let check = model_check(&prep.model, cfg.n_unlabeled, cfg.seed).map_err(|e| e.in_stage("model-check"))?;
    clock.lap("synthesize");
    let (mut report, moment, decomposition) = analyze(cfg, &prep, data.as_ref(), &sink, &mut clock)?;
    report.model_check = check;
    let outcome = PipelineOutcome {
        report,
        dataset: data,
        moment,
        decomposition,
        timings: clock.timings,
    };
    sink.finish(&outcome).map_err(|e| e.in_stage("write"))?;
    Ok(outcome)
}

/// Runs the whole pipeline in memory.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<PipelineOutcome> {
    run(cfg, None)
}

/// Runs the pipeline and writes the configured outputs under `workdir`;
/// artifacts of stages that completed stay on disk if a later stage fails.
pub fn run_pipeline_in(cfg: &ExperimentConfig, workdir: &Path) -> Result<PipelineOutcome> {
    run(cfg, Some(workdir))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    Identity,
    Tanh,
    Logistic,
    Relu,
}

impl FromStr for Nonlinearity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "tanh" => Ok(Self::Tanh),
            "logistic" => Ok(Self::Logistic),
            "relu" => Ok(Self::Relu),
            other => Err(Error::Validation(format!(
                "unknown nonlinearity `{other}` (identity|tanh|logistic|relu)"
            ))),
        }
    }
}

impl Nonlinearity {
    pub fn apply<T: Scalar>(self, t: T) -> T {
        match self {
            Self::Identity => t,
            Self::Tanh => t.tanh(),
            Self::Logistic => T::one() / (T::one() + (-t).exp()),
            Self::Relu => t.max(T::zero()),
        }
    }
}

/// `[σ(u_j · x)]_j` in component order.
pub fn extract_features<T: Scalar>(
    components: &DecompositionResult<T>,
    x: &[T],
    sigma: Nonlinearity,
) -> Result<Vec<T>> {
    components
        .components
        .iter()
        .map(|c| {
            if c.vector.len() != x.len() {
                return Err(Error::Shape(format!(
                    "component of length {} for a point of length {}",
                    c.vector.len(),
                    x.len()
                )));
            }
            Ok(sigma.apply(dot(&c.vector, x)))
        })
        .collect()
}

fn mean_loglik(model: &DensityModel<f64>, xs: &[f64]) -> Result<f64> {
    let d = model.dim();
    let mut total = 0.0;
    let mut n = 0usize;
    for x in xs.chunks(d) {
        match model.log_density(x) {
            Ok(l) => {
                total += l.value;
                n += 1;
            }
            Err(Error::Degenerate { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    if n == 0 {
        return Err(Error::Fit("no sample has a non-degenerate density".into()));
    }
    Ok(total / n as f64)
}

/// Keeps the source mixture's components, refits its weights on the
/// target inputs, then runs the pipeline on the target data with the
/// transferred model.
pub fn selftaught_pipeline(
    source_unlabeled: &[f64],
    target: &LabeledDataset<f64>,
    cfg: &ExperimentConfig,
) -> Result<PipelineOutcome> {
    selftaught_run(source_unlabeled, target, cfg, None)
}

/// [`selftaught_pipeline`] writing the configured outputs under `workdir`.
pub fn selftaught_pipeline_in(
    source_unlabeled: &[f64],
    target: &LabeledDataset<f64>,
    cfg: &ExperimentConfig,
    workdir: &Path,
) -> Result<PipelineOutcome> {
    selftaught_run(source_unlabeled, target, cfg, Some(workdir))
}

fn selftaught_run(
    source_unlabeled: &[f64],
    target: &LabeledDataset<f64>,
    cfg: &ExperimentConfig,
    dir: Option<&Path>,
) -> Result<PipelineOutcome> {
    let sink = Sink {
        dir,
        outputs: &cfg.outputs,
    };
    let mut clock = Clock::new();
    let mut prep = prepare(cfg).map_err(|e| e.in_stage("config"))?;
    let DensityModel::GaussianMixture(source) = &prep.model else {
        return Err(Error::Validation("self-taught transfer needs a gmm source model".into()).in_stage("config"));
    };
    let source: GaussianMixture<f64> = source.clone();
    let d = source.dim();
    if target.input_dim() != d || source_unlabeled.is_empty() || !source_unlabeled.len().is_multiple_of(d) {
        return Err(Error::Shape(format!("source and target inputs must have dimension {d}")).in_stage("config"));
    }
    if target.label_dim() != 1 {
        return Err(Error::Validation("pipeline labels must be scalar".into()).in_stage("config"));
    }
    let threshold = cfg.selftaught.as_ref().map_or_else(default_drop, |s| s.loglik_drop_threshold);
    let source_ll = mean_loglik(&prep.model, source_unlabeled).map_err(|e| e.in_stage("refit"))?;
    let fit = selftaught_refit_weights(&source, target.inputs()).map_err(|e| e.in_stage("refit"))?;
    let transferred = source.with_weights(fit.weights.clone()).map_err(|e| e.in_stage("refit"))?;
    prep.model = DensityModel::GaussianMixture(transferred);
    let target_ll = mean_loglik(&prep.model, target.inputs()).map_err(|e| e.in_stage("refit"))?;
    clock.lap("refit");
    sink.dataset(target).map_err(|e| e.in_stage("synthesize"))?;
    let empirical = ExperimentConfig {
        moment_mode: MomentMode::Empirical,
        ..cfg.clone()
    };
    let (mut report, moment, decomposition) = analyze(&empirical, &prep, Some(target), &sink, &mut clock)?;
    report.selftaught = Some(SelftaughtSummary {
        source_weights: source.weights().to_vec(),
        refit_weights: fit.weights,
        iterations: fit.iterations,
        converged: fit.converged,
        source_mean_loglik: source_ll,
        target_mean_loglik: target_ll,
        low_likelihood: target_ll < source_ll - threshold,
    });
    let outcome = PipelineOutcome {
        report,
        dataset: None,
        moment,
        decomposition,
        timings: clock.timings,
    };
    sink.finish(&outcome).map_err(|e| e.in_stage("write"))?;
    Ok(outcome)
}

/// Source draws (from `cfg.model`) and a labeled target dataset (from the
/// configured target model) for a synthetic transfer experiment.
pub fn selftaught_synthesize(cfg: &ExperimentConfig) -> Result<(Vec<f64>, LabeledDataset<f64>)> {
    let settings = cfg
        .selftaught
        .as_ref()
        .ok_or_else(|| Error::Validation("config has no `selftaught` section".into()))?;
    let source = cfg.build_model()?;
    let target_model: DensityModel<f64> = settings.target_model.build()?;
    if target_model.dim() != source.dim() {
        return Err(Error::Shape("source and target models differ in dimension".into()));
    }
    let n_source = cfg.n_unlabeled.max(1);
    let xs = source.sample(&mut unlabeled_stream(cfg.seed), n_source)?;
    let target = synth_from(&target_model, cfg, cfg.n_labeled, cfg.seed)?;
    Ok((xs, target))
}

/// Mean of `S_1` and the Stein check on a dataset, for callers that want
/// the identity verified without running a decomposition.
pub fn dataset_stein_check(
    data: &LabeledDataset<f64>,
    model: &DensityModel<f64>,
    g: &PolyFunction<f64>,
    m: ScoreOrder,
) -> Result<SteinReport<f64>> {
    let oracle = expected_derivative(g, model, m, stein::oracle_method(model)?)?;
    SteinReport::compare(cross_moment(data, model, m)?, oracle)
}
