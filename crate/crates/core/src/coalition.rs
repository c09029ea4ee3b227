//! Gaussian statistics of the first linear layer's pre-activations when the
//! input is a uniformly random coalition of fixed size.
//!
//! For feature `i`, the remaining `M = N - 1` features form a finite
//! population. A coalition of size `k` keeps `k` of them at their values and
//! sets the rest to the baseline. Unit `j` of the first layer then sees the
//! sum of `k` draws without replacement from the per-feature contributions
//! `a_{jl} = W_{jl} (x_l - baseline_l)`, whose mean and variance follow from
//! the hypergeometric indicator covariance:
//!
//! ```text
//! mean = k * μ_j            μ_j  = (1/M) Σ_l a_{jl}
//! var  = k (M-k)/(M-1) σ²_j  σ²_j = (1/M) Σ_l a_{jl}² - μ_j²
//! ```
//!
//! Convolutions are handled as the linear maps they are; coefficients
//! outside a unit's receptive field are zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::ops::{apply_linear, LinearMode};
use crate::network::Model;
use crate::tensor::Tensor;

/// Finite-population variance factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalingMode {
    /// `k (M-k)/(M-1)` over the `M = N-1` features other than `i`. Zero
    /// variance when all of them are present.
    #[default]
    Corrected,
    /// `k (N-k)/(N-1)`, the factor for a population of all `N` features.
    PaperVerbatim,
}

impl ScalingMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScalingMode::Corrected => "corrected",
            ScalingMode::PaperVerbatim => "paper-verbatim",
        }
    }

    fn factor(&self, n: usize, k: usize) -> f64 {
        let pop = match self {
            ScalingMode::Corrected => n - 1,
            ScalingMode::PaperVerbatim => n,
        };
        if pop <= 1 || k == 0 || k >= pop {
            return 0.0;
        }
        k as f64 * (pop - k) as f64 / (pop - 1) as f64
    }
}

/// First-layer statistics for one `(feature, coalition size)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionStats {
    /// Mean pre-activation without the feature.
    pub mu: Tensor,
    /// Variance of the pre-activation (shared by both cases).
    pub var: Tensor,
    /// Mean pre-activation with the feature added.
    pub mu_with_i: Tensor,
}

/// Coalition sizes to evaluate, strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SizeSchedule {
    sizes: Vec<usize>,
}

impl SizeSchedule {
    /// An explicit schedule; sizes are sorted and deduplicated.
    pub fn new(mut sizes: Vec<usize>, num_features: usize) -> Result<Self> {
        sizes.sort_unstable();
        sizes.dedup();
        if sizes.is_empty() {
            return Err(Error::InvalidArgument(
                "empty coalition size schedule".into(),
            ));
        }
        if let Some(&k) = sizes.iter().find(|&&k| k >= num_features) {
            return Err(Error::InvalidArgument(format!(
                "coalition size {k} out of range for {num_features} features"
            )));
        }
        Ok(SizeSchedule { sizes })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }
}

/// `K` coalition sizes spread evenly over `0..=N-1`, endpoints included
/// when `K >= 2`; the middle size when `K == 1`.
pub fn pick_coalition_sizes(num_features: usize, k: usize) -> Result<SizeSchedule> {
    if k < 1 || k > num_features {
        return Err(Error::InvalidArgument(format!(
            "number of coalition sizes must be in 1..={num_features}, got {k}"
        )));
    }
    let last = num_features - 1;
    let sizes = if k == 1 {
        vec![last / 2]
    } else {
        let step = last as f64 / (k - 1) as f64;
        (0..k).map(|j| (j as f64 * step).round() as usize).collect()
    };
    SizeSchedule::new(sizes, num_features)
}

/// The first linear layer of a model, applied to one input.
///
/// Holds the per-unit totals over all features so that statistics for each
/// `(i, k)` cost one column extraction.
#[derive(Debug, Clone)]
pub struct FirstLayerProjector<'m> {
    model: &'m Model,
    layer_index: usize,
    // x - baseline
    delta: Vec<f64>,
    // W·delta and W²·delta² summed over all features.
    total: Vec<f64>,
    total_sq: Vec<f64>,
    // b + W·baseline
    offset: Vec<f64>,
}

impl<'m> FirstLayerProjector<'m> {
    pub fn new(model: &'m Model, x: &Tensor, baseline: &Tensor) -> Result<Self> {
        let layer_index = model.first_linear_layer()?;
        model.check_input(x)?;
        model.check_input(baseline)?;
        let layer = &model.layers()[layer_index];
        let shape = model.shape_at(layer_index);
        let delta: Vec<f64> = x
            .data()
            .iter()
            .zip(baseline.data())
            .map(|(a, b)| a - b)
            .collect();
        let sq: Vec<f64> = delta.iter().map(|d| d * d).collect();
        Ok(FirstLayerProjector {
            model,
            layer_index,
            total: apply_linear(layer, shape, &delta, LinearMode::Linear),
            total_sq: apply_linear(layer, shape, &sq, LinearMode::SquaredWeights),
            offset: apply_linear(layer, shape, baseline.data(), LinearMode::Affine),
            delta,
        })
    }

    /// Index of the first layer after the linear map.
    pub fn tail_start(&self) -> usize {
        self.layer_index + 1
    }

    pub fn num_features(&self) -> usize {
        self.delta.len()
    }

    /// Shape of the first layer's output.
    pub fn output_shape(&self) -> &[usize] {
        self.model.shape_at(self.layer_index + 1)
    }

    /// Column `i` of the linear map, i.e. `W e_i`.
    pub fn column(&self, i: usize) -> Vec<f64> {
        let layer = &self.model.layers()[self.layer_index];
        let mut e = vec![0.0; self.delta.len()];
        e[i] = 1.0;
        apply_linear(
            layer,
            self.model.shape_at(self.layer_index),
            &e,
            LinearMode::Linear,
        )
    }

    /// Flat statistics `(mu, var, mu_with_i)` for feature `i` and size `k`,
    /// given `column(i)`.
    pub(crate) fn stats_with_column(
        &self,
        i: usize,
        k: usize,
        column: &[f64],
        scaling: ScalingMode,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.delta.len();
        let rest = n - 1;
        let d = self.delta[i];
        let factor = scaling.factor(n, k);
        let units = self.total.len();
        let mut mu = Vec::with_capacity(units);
        let mut var = Vec::with_capacity(units);
        let mut mu_with = Vec::with_capacity(units);
        let units_iter = column
            .iter()
            .zip(&self.total)
            .zip(&self.total_sq)
            .zip(&self.offset);
        for (((&col, &total), &total_sq), &offset) in units_iter {
            let contrib = col * d;
            let (unit_mean, unit_var) = if rest == 0 {
                (0.0, 0.0)
            } else {
                let m = (total - contrib) / rest as f64;
                let s = (total_sq - contrib * contrib) / rest as f64 - m * m;
                (m, s.max(0.0))
            };
            let mean = if k == rest {
                total - contrib
            } else {
                k as f64 * unit_mean
            } + offset;
            mu.push(mean);
            var.push(if factor == 0.0 {
                0.0
            } else {
                factor * unit_var
            });
            mu_with.push(mean + contrib);
        }
        (mu, var, mu_with)
    }

    /// Statistics for feature `i` and coalition size `k`.
    pub fn stats(&self, i: usize, k: usize, scaling: ScalingMode) -> Result<CoalitionStats> {
        let n = self.delta.len();
        if i >= n {
            return Err(Error::InvalidArgument(format!(
                "feature {i} out of range for {n} features"
            )));
        }
        if k > n.saturating_sub(1) {
            return Err(Error::InvalidArgument(format!(
                "coalition size {k} exceeds the {} other features",
                n - 1
            )));
        }
        let (mu, var, mu_with) = self.stats_with_column(i, k, &self.column(i), scaling);
        let shape = self.output_shape().to_vec();
        Ok(CoalitionStats {
            mu: Tensor::new(shape.clone(), mu)?,
            var: Tensor::new(shape.clone(), var)?,
            mu_with_i: Tensor::new(shape, mu_with)?,
        })
    }
}

/// First-layer statistics for feature `i` and coalition size `k` with a zero
/// baseline and the corrected finite-population factor.
pub fn coalition_input_stats(
    model: &Model,
    x: &Tensor,
    i: usize,
    k: usize,
) -> Result<CoalitionStats> {
    if model.num_features() < 2 {
        return Err(Error::InvalidArgument("need at least two features".into()));
    }
    let baseline = x.with_data(vec![0.0; x.len()])?;
    FirstLayerProjector::new(model, x, &baseline)?.stats(i, k, ScalingMode::Corrected)
}
