//! Runs attribution methods against a ground truth over many models and
//! inputs and tabulates RMSE and Spearman correlation per budget point.

use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{rmse, spearman};
use super::EvalCounter;
use crate::attribution::{self, AttributionResult, Method, MAX_EXACT_FEATURES};
use crate::coalition::ScalingMode;
use crate::error::{Error, Result};
use crate::network::{generate_random_model, load_model, random_input, Arch, Model};
use crate::seed;
use crate::tensor::Tensor;

pub const CSV_HEADER: &str =
    "model_id,sample_id,method,params,eval_count,rmse,spearman,gt_method,gt_evals,seed";

/// Where the benchmark models come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSource {
    File { path: PathBuf },
    Generate { arch: String, count: usize },
}

/// A method and the budget points to run it at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum MethodSpec {
    ExactShapley,
    ShapleySampling {
        permutations: Vec<usize>,
    },
    Occlusion,
    GradientXInput,
    IntegratedGradients {
        steps: Vec<usize>,
    },
    Dasp {
        #[serde(rename = "K")]
        k: Vec<usize>,
        #[serde(default)]
        scaling: ScalingMode,
    },
}

impl MethodSpec {
    fn budget_points(&self) -> usize {
        match self {
            MethodSpec::ShapleySampling { permutations } => permutations.len(),
            MethodSpec::IntegratedGradients { steps } => steps.len(),
            MethodSpec::Dasp { k, .. } => k.len(),
            _ => 1,
        }
    }
}

/// Exact ground truth up to `exact_max_features` features, long-run
/// sampling beyond.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundTruthPolicy {
    pub exact_max_features: usize,
    pub sampling_permutations: usize,
}

impl Default for GroundTruthPolicy {
    fn default() -> Self {
        GroundTruthPolicy {
            exact_max_features: 20,
            sampling_permutations: 10_000,
        }
    }
}

fn default_samples() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonConfig {
    pub models: ModelSource,
    /// Inputs per model; ignored when `inputs` is given.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Explicit inputs shared by every model.
    #[serde(default)]
    pub inputs: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub class: usize,
    #[serde(default)]
    pub seed: u64,
    /// Constant baseline value.
    #[serde(default)]
    pub baseline: f64,
    pub methods: Vec<MethodSpec>,
    #[serde(default)]
    pub ground_truth: GroundTruthPolicy,
}

impl ComparisonConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("no methods configured".into()));
        }
        if self.inputs.is_none() && self.samples == 0 {
            return Err(Error::Config("samples must be at least 1".into()));
        }
        if let Some(inputs) = &self.inputs {
            if inputs.is_empty() {
                return Err(Error::Config("`inputs` is empty".into()));
            }
        }
        if self.ground_truth.exact_max_features > MAX_EXACT_FEATURES {
            return Err(Error::Config(format!(
                "exact_max_features above {MAX_EXACT_FEATURES} is not supported"
            )));
        }
        if self.ground_truth.sampling_permutations == 0 {
            return Err(Error::Config(
                "sampling_permutations must be positive".into(),
            ));
        }
        for spec in &self.methods {
            if spec.budget_points() == 0 {
                return Err(Error::Config(format!("empty budget list in {spec:?}")));
            }
        }
        if let ModelSource::Generate { count: 0, .. } = self.models {
            return Err(Error::Config("model count must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub model_id: String,
    pub sample_id: usize,
    pub method: Method,
    pub params: String,
    pub eval_count: u64,
    pub rmse: f64,
    /// `NaN` when either vector is constant.
    pub spearman: f64,
    pub gt_method: Method,
    pub gt_evals: u64,
    pub seed: Option<u64>,
}

impl ReportRow {
    fn sort_key(&self) -> (&str, usize, Method, u64, &str) {
        (
            &self.model_id,
            self.sample_id,
            self.method,
            self.eval_count,
            &self.params,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ComparisonReport {
    pub rows: Vec<ReportRow>,
}

/// Formats with 9 significant digits, `%g` style.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf" } else { "-inf" }.into();
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-5..9).contains(&exp) {
        format!(
            "{}e{}{:02}",
            trim(mantissa),
            if exp < 0 { '-' } else { '+' },
            exp.abs()
        )
    } else {
        trim(&format!("{:.*}", (8 - exp) as usize, v))
    }
}

impl ComparisonReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.model_id,
                r.sample_id,
                r.method,
                r.params,
                r.eval_count,
                format_float(r.rmse),
                format_float(r.spearman),
                r.gt_method,
                r.gt_evals,
                r.seed.map(|s| s.to_string()).unwrap_or_default(),
            );
        }
        out
    }

    /// Rows for one method, in report order.
    pub fn rows_for(&self, method: Method) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(move |r| r.method == method)
    }
}

struct Task {
    model_id: String,
    model_index: usize,
    model: Model,
    sample_id: usize,
    x: Tensor,
}

fn build_tasks(config: &ComparisonConfig) -> Result<Vec<Task>> {
    let models: Vec<(String, Model)> = match &config.models {
        ModelSource::File { path } => {
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "model".into());
            vec![(id, load_model(path)?)]
        }
        ModelSource::Generate { arch, count } => {
            let arch: Arch = arch.parse()?;
            (0..*count)
                .map(|m| {
                    let s = seed::derive(config.seed, &[0, m as u64]);
                    Ok((format!("m{m:04}"), generate_random_model(s, &arch)?))
                })
                .collect::<Result<_>>()?
        }
    };
    let mut tasks = Vec::new();
    for (model_index, (model_id, model)) in models.into_iter().enumerate() {
        if config.class >= model.output_dim() {
            return Err(Error::Config(format!(
                "class {} out of range for model {model_id}",
                config.class
            )));
        }
        let inputs: Vec<Tensor> = match &config.inputs {
            Some(list) => list
                .iter()
                .map(|v| Tensor::new(model.input_shape().to_vec(), v.clone()))
                .collect::<Result<_>>()
                .map_err(|e| Error::Config(format!("input for {model_id}: {e}")))?,
            None => (0..config.samples)
                .map(|s| {
                    random_input(
                        model.input_shape(),
                        seed::derive(config.seed, &[1, model_index as u64, s as u64]),
                    )
                })
                .collect(),
        };
        for (sample_id, x) in inputs.into_iter().enumerate() {
            tasks.push(Task {
                model_id: model_id.clone(),
                model_index,
                model: model.clone(),
                sample_id,
                x,
            });
        }
    }
    Ok(tasks)
}

fn run_method(
    spec: &MethodSpec,
    task: &Task,
    class: usize,
    baseline: &Tensor,
    base_seed: u64,
) -> Result<Vec<(String, AttributionResult)>> {
    let (model, x) = (&task.model, &task.x);
    let c = EvalCounter::new();
    let path = |kind: u64, point: usize| {
        seed::derive(
            base_seed,
            &[
                kind,
                task.model_index as u64,
                task.sample_id as u64,
                point as u64,
            ],
        )
    };
    Ok(match spec {
        MethodSpec::ExactShapley => {
            vec![(
                String::new(),
                attribution::exact_shapley(model, x, class, baseline, &c)?,
            )]
        }
        MethodSpec::Occlusion => {
            vec![(
                String::new(),
                attribution::occlusion(model, x, class, baseline, &c)?,
            )]
        }
        MethodSpec::GradientXInput => {
            vec![(
                String::new(),
                attribution::gradient_x_input(model, x, class, &c)?,
            )]
        }
        MethodSpec::ShapleySampling { permutations } => permutations
            .iter()
            .enumerate()
            .map(|(p, &m)| {
                let r =
                    attribution::shapley_sampling(model, x, class, m, path(2, p), baseline, &c)?;
                Ok((format!("M={m}"), r))
            })
            .collect::<Result<_>>()?,
        MethodSpec::IntegratedGradients { steps } => steps
            .iter()
            .map(|&m| {
                let r = attribution::integrated_gradients(model, x, class, m, baseline, &c)?;
                Ok((format!("steps={m}"), r))
            })
            .collect::<Result<_>>()?,
        MethodSpec::Dasp { k, scaling } => k
            .iter()
            .map(|&k| {
                let r = attribution::dasp(model, x, class, k, baseline, *scaling, &c)?;
                let params = match scaling {
                    ScalingMode::Corrected => format!("K={k}"),
                    other => format!("K={k};scaling={}", other.as_str()),
                };
                Ok((params, r))
            })
            .collect::<Result<_>>()?,
    })
}

/// Runs every configured method on every (model, input) pair.
///
/// Ground truth is computed once per pair: exact enumeration when the
/// feature count allows it, otherwise Shapley sampling at the configured
/// permutation count (reported as `shapley_sampling` in `gt_method`). Rows
/// are sorted canonically, so the report is identical for identical configs
/// regardless of scheduling.
pub fn run_comparison(config: &ComparisonConfig) -> Result<ComparisonReport> {
    config.validate()?;
    let tasks = build_tasks(config)?;
    let class = config.class;

    let per_task: Vec<Vec<ReportRow>> = tasks
        .par_iter()
        .map(|task| {
            let baseline = Tensor::new(
                task.model.input_shape().to_vec(),
                vec![config.baseline; task.model.num_features()],
            )?;
            let n = task.model.num_features();
            let gt = if n <= config.ground_truth.exact_max_features {
                attribution::exact_shapley(
                    &task.model,
                    &task.x,
                    class,
                    &baseline,
                    &EvalCounter::new(),
                )?
            } else {
                attribution::shapley_sampling(
                    &task.model,
                    &task.x,
                    class,
                    config.ground_truth.sampling_permutations,
                    seed::derive(
                        config.seed,
                        &[3, task.model_index as u64, task.sample_id as u64],
                    ),
                    &baseline,
                    &EvalCounter::new(),
                )?
            };

            let mut rows = Vec::new();
            for spec in &config.methods {
                for (params, r) in run_method(spec, task, class, &baseline, config.seed)? {
                    rows.push(ReportRow {
                        model_id: task.model_id.clone(),
                        sample_id: task.sample_id,
                        method: r.method,
                        params,
                        eval_count: r.eval_count,
                        rmse: rmse(&r.values, &gt.values)?,
                        spearman: spearman(&r.values, &gt.values).unwrap_or(f64::NAN),
                        gt_method: gt.method,
                        gt_evals: gt.eval_count,
                        seed: r.seed,
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;

    let mut rows: Vec<ReportRow> = per_task.into_iter().flatten().collect();
    rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok(ComparisonReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format() {
        assert_eq!(format_float(0.0), "0");
        assert_eq!(format_float(3.535_533_905_932_737_6), "3.53553391");
        assert_eq!(format_float(-0.5), "-0.5");
        assert_eq!(format_float(1e-7), "1e-07");
        assert_eq!(format_float(1.234_567_891_2e-3), "0.00123456789");
        assert_eq!(format_float(123_456_789_123.0), "1.23456789e+11");
        assert_eq!(format_float(100.0), "100");
        assert_eq!(format_float(f64::NAN), "NaN");
    }

    #[test]
    fn config_parsing() {
        let text = r#"{
            "models": {"generate": {"arch": "10-16-relu-1", "count": 5}},
            "seed": 3,
            "methods": [
                {"method": "occlusion"},
                {"method": "dasp", "K": [1, 2, 5, 10]},
                {"method": "shapley_sampling", "permutations": [10]}
            ]
        }"#;
        let c = ComparisonConfig::from_json(text).unwrap();
        assert_eq!(c.samples, 1);
        assert_eq!(c.ground_truth, GroundTruthPolicy::default());
        assert_eq!(
            c.methods[1],
            MethodSpec::Dasp {
                k: vec![1, 2, 5, 10],
                scaling: ScalingMode::Corrected
            }
        );
        assert!(ComparisonConfig::from_json(r#"{"models": 1}"#).is_err());
    }

    #[test]
    fn accounting_rows() {
        let config = ComparisonConfig {
            models: ModelSource::Generate {
                arch: "10-16-relu-1".into(),
                count: 5,
            },
            samples: 1,
            inputs: None,
            class: 0,
            seed: 11,
            baseline: 0.0,
            methods: vec![
                MethodSpec::Occlusion,
                MethodSpec::Dasp {
                    k: vec![1, 2, 5, 10],
                    scaling: ScalingMode::Corrected,
                },
            ],
            ground_truth: GroundTruthPolicy::default(),
        };
        let report = run_comparison(&config).unwrap();
        assert_eq!(report.rows.len(), 5 * (1 + 4));
        for r in &report.rows {
            assert_eq!(r.gt_method, Method::ExactShapley);
            assert_eq!(r.gt_evals, 1024);
            match r.method {
                Method::Occlusion => assert_eq!(r.eval_count, 11),
                Method::Dasp => {
                    let k: u64 = r.params.trim_start_matches("K=").parse().unwrap();
                    assert_eq!(r.eval_count, 2 * k * 10);
                }
                other => panic!("unexpected method {other}"),
            }
        }
        let csv = report.to_csv();
        assert!(csv.starts_with(CSV_HEADER));
        assert_eq!(csv.lines().count(), 26);
        assert_eq!(run_comparison(&config).unwrap().to_csv(), csv);
    }

    #[test]
    fn sampling_ground_truth_above_threshold() {
        let config = ComparisonConfig {
            models: ModelSource::Generate {
                arch: "6-8-relu-1".into(),
                count: 1,
            },
            samples: 2,
            inputs: None,
            class: 0,
            seed: 5,
            baseline: 0.0,
            methods: vec![MethodSpec::Occlusion],
            ground_truth: GroundTruthPolicy {
                exact_max_features: 4,
                sampling_permutations: 200,
            },
        };
        let report = run_comparison(&config).unwrap();
        assert_eq!(report.rows.len(), 2);
        for r in &report.rows {
            assert_eq!(r.gt_method, Method::ShapleySampling);
            assert_eq!(r.gt_evals, 200 * 7);
        }
    }

    #[test]
    fn config_errors() {
        let mut config = ComparisonConfig::from_json(
            r#"{"models": {"generate": {"arch": "4-1", "count": 1}}, "methods": []}"#,
        )
        .unwrap();
        assert!(matches!(run_comparison(&config), Err(Error::Config(_))));
        config.methods.push(MethodSpec::Occlusion);
        config.class = 3;
        assert!(matches!(run_comparison(&config), Err(Error::Config(_))));
    }
}
