//! Fed-KAN and Fed-MLP architectures assembled from [`crate::numeric`] layers.
//!
//! Fed-KAN: KAN layers `input -> 2 -> 4 -> 8`, then `FC(8 -> 8)` with ReLU
//! and dropout, then the `FC(8 -> 4)` output layer.
//! Fed-MLP: `FC(input -> 8 -> 16 -> 48 -> 4)` with ReLU and dropout after
//! every hidden layer.
//!
//! Trainable scalars are counted as
//! `Σ_kan_edges (G + k + 1) + Σ_dense (in + 1) · out`: each KAN edge carries
//! `G + k` spline coefficients and one base weight; KAN layers have no bias.

mod params;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numeric::{
    dropout, mse_loss, relu, relu_backward, GradientBundle, KanCache, KanLayerParams, LinearCache, LinearLayerParams,
    Matrix, Mode, SplineGrid,
};
pub use params::{ParameterVector, SegmentSpec};

/// Spline grid range for every KAN layer. Inputs are scaled into `[0, 1]`.
pub const GRID_RANGE: (f64, f64) = (-1.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    FedKan,
    FedMlp,
}

impl ModelKind {
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::FedKan => "Fed-KAN",
            ModelKind::FedMlp => "Fed-MLP",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            ModelKind::FedKan => "fed_kan",
            ModelKind::FedMlp => "fed_mlp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Flattened lookback window, `2 · W`.
    pub input_width: usize,
    pub kan_hidden_widths: Vec<usize>,
    pub mlp_hidden_widths: Vec<usize>,
    /// Fully connected head after the KAN stack; the last entry is the output layer.
    pub fc_head_widths: Vec<usize>,
    pub output_width: usize,
    pub grid_intervals: usize,
    pub spline_order: usize,
    pub dropout_p: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::reference(ModelKind::FedKan)
    }
}

/// One layer of the architecture before parameters are attached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    Kan {
        in_width: usize,
        out_width: usize,
    },
    Dense {
        in_width: usize,
        out_width: usize,
        relu: bool,
        dropout_p: Option<f64>,
    },
}

impl ModelConfig {
    /// Widths and spline settings used in the reference experiment, with a
    /// five-hour window of (downlink, uplink) pairs as input.
    pub fn reference(kind: ModelKind) -> Self {
        ModelConfig {
            kind,
            input_width: 10,
            kan_hidden_widths: vec![2, 4, 8],
            mlp_hidden_widths: vec![8, 16, 48],
            fc_head_widths: vec![8, 4],
            output_width: 4,
            grid_intervals: 5,
            spline_order: 3,
            dropout_p: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_width == 0 || self.output_width == 0 {
            return Err(Error::Config(
                "model.input_width and model.output_width must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!(
                "model.dropout_p must lie in [0, 1), got {}",
                self.dropout_p
            )));
        }
        match self.kind {
            ModelKind::FedKan => {
                if self.kan_hidden_widths.contains(&0) {
                    return Err(Error::Config("model.kan_hidden_widths must be positive".into()));
                }
                if self.fc_head_widths.contains(&0) {
                    return Err(Error::Config("model.fc_head_widths must be positive".into()));
                }
                match self.fc_head_widths.last() {
                    Some(&w) if w == self.output_width => {}
                    Some(&w) => {
                        return Err(Error::Config(format!(
                            "model.fc_head_widths must end at output_width {} (got {w})",
                            self.output_width
                        )))
                    }
                    None => return Err(Error::Config("model.fc_head_widths must not be empty".into())),
                }
                if self.grid_intervals == 0 {
                    return Err(Error::Config("model.grid_intervals must be positive".into()));
                }
            }
            ModelKind::FedMlp => {
                if self.mlp_hidden_widths.contains(&0) {
                    return Err(Error::Config("model.mlp_hidden_widths must be positive".into()));
                }
            }
        }
        Ok(())
    }

    /// The ordered layer chain from `input_width` to `output_width`.
    pub fn layer_plan(&self) -> Result<Vec<LayerSpec>> {
        self.validate()?;
        let dropout_p = (self.dropout_p > 0.0).then_some(self.dropout_p);
        let mut plan = Vec::new();
        let mut width = self.input_width;
        match self.kind {
            ModelKind::FedKan => {
                for &w in &self.kan_hidden_widths {
                    plan.push(LayerSpec::Kan {
                        in_width: width,
                        out_width: w,
                    });
                    width = w;
                }
                let last = self.fc_head_widths.len() - 1;
                for (idx, &w) in self.fc_head_widths.iter().enumerate() {
                    let hidden = idx < last;
                    plan.push(LayerSpec::Dense {
                        in_width: width,
                        out_width: w,
                        relu: hidden,
                        dropout_p: if hidden { dropout_p } else { None },
                    });
                    width = w;
                }
            }
            ModelKind::FedMlp => {
                for &w in &self.mlp_hidden_widths {
                    plan.push(LayerSpec::Dense {
                        in_width: width,
                        out_width: w,
                        relu: true,
                        dropout_p,
                    });
                    width = w;
                }
                plan.push(LayerSpec::Dense {
                    in_width: width,
                    out_width: self.output_width,
                    relu: false,
                    dropout_p: None,
                });
            }
        }
        Ok(plan)
    }

    /// Widths visited by the layer chain, input first.
    pub fn width_chain(&self) -> Result<Vec<usize>> {
        let plan = self.layer_plan()?;
        let mut chain = vec![self.input_width];
        chain.extend(plan.iter().map(|l| match *l {
            LayerSpec::Kan { out_width, .. } | LayerSpec::Dense { out_width, .. } => out_width,
        }));
        Ok(chain)
    }

    /// Stable hex digest of the configuration, stamped into weight files.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("model config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Exact number of trainable scalars for `config`.
pub fn count_parameters(config: &ModelConfig) -> Result<usize> {
    let per_edge = config.grid_intervals + config.spline_order + 1;
    Ok(config
        .layer_plan()?
        .iter()
        .map(|l| match *l {
            LayerSpec::Kan { in_width, out_width } => in_width * out_width * per_edge,
            LayerSpec::Dense {
                in_width, out_width, ..
            } => (in_width + 1) * out_width,
        })
        .sum())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Kan(KanLayerParams),
    Dense {
        params: LinearLayerParams,
        relu: bool,
        dropout_p: Option<f64>,
    },
}

/// Intermediate values recorded by [`Model::forward_traced`].
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    stages: Vec<StageTrace>,
}

#[derive(Debug, Clone)]
enum StageTrace {
    Kan(KanCache),
    Dense {
        cache: LinearCache,
        pre_relu: Option<Matrix>,
        mask: Option<Matrix>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    layers: Vec<Layer>,
    mode: Mode,
}

impl Model {
    /// Deterministically initialized model in training mode.
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Model> {
        let plan = config.layer_plan()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = plan
            .iter()
            .map(|spec| match *spec {
                LayerSpec::Kan { in_width, out_width } => {
                    let grid =
                        SplineGrid::uniform(GRID_RANGE.0, GRID_RANGE.1, config.grid_intervals, config.spline_order)?;
                    Ok(Layer::Kan(KanLayerParams::init(in_width, out_width, grid, &mut rng)?))
                }
                LayerSpec::Dense {
                    in_width,
                    out_width,
                    relu,
                    dropout_p,
                } => Ok(Layer::Dense {
                    params: LinearLayerParams::init(in_width, out_width, &mut rng)?,
                    relu,
                    dropout_p,
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Model {
            config: config.clone(),
            layers,
            mode: Mode::Train,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn num_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Kan(p) => p.num_parameters(),
                Layer::Dense { params, .. } => params.num_parameters(),
            })
            .sum()
    }

    /// Runs the network in the model's current mode; `rng` drives dropout in training.
    pub fn forward<R: Rng + ?Sized>(&self, batch: &Matrix, rng: &mut R) -> Result<Matrix> {
        Ok(self.run(batch, self.mode, rng)?.0)
    }

    /// Evaluation-mode forward pass, independent of the model's mode.
    pub fn predict(&self, batch: &Matrix) -> Result<Matrix> {
        // dropout never draws in evaluation mode
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        Ok(self.run(batch, Mode::Eval, &mut unused)?.0)
    }

    pub fn forward_traced<R: Rng + ?Sized>(&self, batch: &Matrix, rng: &mut R) -> Result<(Matrix, ForwardTrace)> {
        self.run(batch, self.mode, rng)
    }

    fn run<R: Rng + ?Sized>(&self, batch: &Matrix, mode: Mode, rng: &mut R) -> Result<(Matrix, ForwardTrace)> {
        if batch.cols() != self.config.input_width {
            return Err(Error::Contract(format!(
                "model expects {} input columns, got {}",
                self.config.input_width,
                batch.cols()
            )));
        }
        let mut x = batch.clone();
        let mut stages = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            match layer {
                Layer::Kan(params) => {
                    let (y, cache) = params.forward(&x)?;
                    stages.push(StageTrace::Kan(cache));
                    x = y;
                }
                Layer::Dense {
                    params,
                    relu: use_relu,
                    dropout_p,
                } => {
                    let (mut y, cache) = params.forward(&x)?;
                    let mut pre_relu = None;
                    if *use_relu {
                        let activated = relu(&y);
                        pre_relu = Some(y);
                        y = activated;
                    }
                    let mut mask = None;
                    if let Some(p) = dropout_p {
                        let out = dropout(&y, *p, mode, rng)?;
                        y = out.outputs;
                        mask = Some(out.mask);
                    }
                    stages.push(StageTrace::Dense { cache, pre_relu, mask });
                    x = y;
                }
            }
        }
        Ok((x, ForwardTrace { stages }))
    }

    /// Gradients of all parameters, in canonical segment order.
    pub fn backward(&self, trace: &ForwardTrace, upstream: &Matrix) -> Result<GradientBundle> {
        if trace.stages.len() != self.layers.len() {
            return Err(Error::Contract(format!(
                "trace has {} stages for a {}-layer model",
                trace.stages.len(),
                self.layers.len()
            )));
        }
        let mut grad = upstream.clone();
        let mut per_layer: Vec<[Vec<f64>; 2]> = Vec::with_capacity(self.layers.len());
        for (layer, stage) in self.layers.iter().zip(&trace.stages).rev() {
            match (layer, stage) {
                (Layer::Kan(params), StageTrace::Kan(cache)) => {
                    let (dx, g) = params.backward(cache, &grad)?;
                    per_layer.push([g.spline_coeffs, g.base_weights]);
                    grad = dx;
                }
                (Layer::Dense { params, .. }, StageTrace::Dense { cache, pre_relu, mask }) => {
                    if let Some(mask) = mask {
                        grad = grad.hadamard(mask)?;
                    }
                    if let Some(pre) = pre_relu {
                        grad = relu_backward(pre, &grad)?;
                    }
                    let (dx, g) = params.backward(cache, &grad)?;
                    per_layer.push([g.weights, g.biases]);
                    grad = dx;
                }
                _ => return Err(Error::Contract("trace does not match the model's layer kinds".into())),
            }
        }
        Ok(GradientBundle::new(per_layer.into_iter().rev().flatten().collect()))
    }

    /// Mean squared error on a batch and its parameter gradient.
    pub fn loss_and_gradient<R: Rng + ?Sized>(
        &self,
        batch: &Matrix,
        targets: &Matrix,
        rng: &mut R,
    ) -> Result<(f64, GradientBundle)> {
        let (pred, trace) = self.forward_traced(batch, rng)?;
        let (loss, upstream) = mse_loss(&pred, targets)?;
        Ok((loss, self.backward(&trace, &upstream)?))
    }

    /// Canonical segment layout: `layers.{idx}.{tensor}` in layer order.
    pub fn layout(&self) -> Vec<SegmentSpec> {
        let mut offset = 0;
        let mut out = Vec::new();
        for (name, shape) in self.segment_shapes() {
            let spec = SegmentSpec { name, shape, offset };
            offset += spec.len();
            out.push(spec);
        }
        out
    }

    fn segment_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (idx, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Kan(p) => {
                    out.push((
                        format!("layers.{idx}.kan.spline_coeffs"),
                        vec![p.in_width, p.out_width, p.num_basis()],
                    ));
                    out.push((format!("layers.{idx}.kan.base_weights"), vec![p.in_width, p.out_width]));
                }
                Layer::Dense { params: p, .. } => {
                    out.push((format!("layers.{idx}.dense.weights"), vec![p.out_width, p.in_width]));
                    out.push((format!("layers.{idx}.dense.biases"), vec![p.out_width]));
                }
            }
        }
        out
    }

    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| match l {
                Layer::Kan(p) => [p.spline_coeffs.as_slice(), p.base_weights.as_slice()],
                Layer::Dense { params: p, .. } => [p.weights.as_slice(), p.biases.as_slice()],
            })
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        self.layers
            .iter_mut()
            .flat_map(|l| match l {
                Layer::Kan(p) => [&mut p.spline_coeffs, &mut p.base_weights],
                Layer::Dense { params: p, .. } => [&mut p.weights, &mut p.biases],
            })
            .collect()
    }

    pub fn export_weights(&self) -> ParameterVector {
        let segments = self
            .segment_shapes()
            .into_iter()
            .zip(self.tensors())
            .map(|((name, shape), data)| (name, shape, data.to_vec()));
        ParameterVector::from_segments(segments).expect("model layout is consistent")
    }

    /// Replaces all parameters; segment names and shapes must match exactly.
    pub fn import_weights(&mut self, weights: &ParameterVector) -> Result<()> {
        params::check_layouts(&self.layout(), weights.layout())?;
        self.load_values(weights.values())
    }

    /// Overwrites parameters from a flat vector in canonical order.
    pub fn load_values(&mut self, values: &[f64]) -> Result<()> {
        let total: usize = self.tensors().iter().map(|t| t.len()).sum();
        if values.len() != total {
            return Err(Error::IncompatibleWeights {
                expected: format!("{total} values"),
                found: format!("{} values", values.len()),
            });
        }
        let mut offset = 0;
        for tensor in self.tensors_mut() {
            let n = tensor.len();
            tensor.copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }
}
