//! Early-exit inference: layer forward passes, k-means utility tests,
//! runtime centroid adaptation and propagation of adapted centroids to the
//! next layer.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("layer {layer}: expected {expected} input values, got {got}")]
    InputSize { layer: usize, expected: usize, got: usize },
    #[error("layer index {0} out of range")]
    NoLayer(usize),
    #[error("feature index {index} out of range for {len} activations")]
    FeatureIndex { index: usize, len: usize },
    #[error("classifier needs at least one feature")]
    NoFeatures,
    #[error("classifier needs at least two centroids, has {0}")]
    TooFewCentroids(usize),
    #[error("expected a vector of length {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("cluster index {0} out of range")]
    NoCluster(usize),
    #[error("adaptation weight {0} outside (0, 1)")]
    Weight(f64),
    #[error("not a probability distribution: {0}")]
    Distribution(String),
    #[error("layer {0}: centroid propagation through pooling is not supported")]
    PooledPropagation(usize),
    #[error("layer {layer}: {reason}")]
    Shape { layer: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Dense,
    Conv2d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    None,
}

/// Non-overlapping `size × size` max-pool over each channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pool {
    pub size: usize,
}

/// One unit's layer.
///
/// Dense: `shape = [out, in]`, weights row-major `out × in`.
/// Conv2d: `shape = [out_c, in_c, kh, kw]`, `input_shape = [in_c, h, w]`,
/// weights in that order; valid padding, stride 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub kind: LayerKind,
    pub shape: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_shape: Option<Vec<usize>>,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool: Option<Pool>,
}

impl Layer {
    pub fn dense(outputs: usize, inputs: usize, weights: Vec<f64>, bias: Vec<f64>, relu: bool) -> Self {
        Self {
            kind: LayerKind::Dense,
            shape: vec![outputs, inputs],
            input_shape: None,
            weights,
            bias,
            activation: if relu { Activation::Relu } else { Activation::None },
            pool: None,
        }
    }

    /// Checks internal consistency; `index` only labels errors.
    pub fn validate(&self, index: usize) -> Result<(), InferenceError> {
        let shape_err = |reason: String| InferenceError::Shape { layer: index, reason };
        let (w_len, b_len) = match self.kind {
            LayerKind::Dense => {
                let [out, inp] = self.shape[..] else {
                    return Err(shape_err("dense shape must be [out, in]".into()));
                };
                if self.pool.is_some() {
                    return Err(shape_err("pooling applies to conv2d layers only".into()));
                }
                (out * inp, out)
            }
            LayerKind::Conv2d => {
                let [oc, ic, kh, kw] = self.shape[..] else {
                    return Err(shape_err("conv2d shape must be [out_c, in_c, kh, kw]".into()));
                };
                let Some(&[c, h, w]) = self
                    .input_shape
                    .as_deref()
                    .and_then(|s| <&[usize; 3]>::try_from(s).ok())
                else {
                    return Err(shape_err("conv2d needs input_shape [c, h, w]".into()));
                };
                if c != ic {
                    return Err(shape_err(format!("input has {c} channels, kernel expects {ic}")));
                }
                if kh == 0 || kw == 0 || kh > h || kw > w {
                    return Err(shape_err("kernel does not fit the input".into()));
                }
                if let Some(p) = self.pool {
                    if p.size == 0 || p.size > h - kh + 1 || p.size > w - kw + 1 {
                        return Err(shape_err("pool size does not fit the output".into()));
                    }
                }
                (oc * ic * kh * kw, oc)
            }
        };
        if self.shape.contains(&0) {
            return Err(shape_err("zero-sized dimension".into()));
        }
        if self.weights.len() != w_len {
            return Err(shape_err(format!(
                "weights has {} entries, expected {w_len}",
                self.weights.len()
            )));
        }
        if self.bias.len() != b_len {
            return Err(shape_err(format!(
                "bias has {} entries, expected {b_len}",
                self.bias.len()
            )));
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        match self.kind {
            LayerKind::Dense => self.shape[1],
            LayerKind::Conv2d => self.input_shape.as_ref().map_or(0, |s| s.iter().product()),
        }
    }

    /// Shape before pooling.
    fn conv_out_shape(&self) -> [usize; 3] {
        let s = self.input_shape.as_ref().expect("validated conv2d");
        [self.shape[0], s[1] - self.shape[2] + 1, s[2] - self.shape[3] + 1]
    }

    pub fn output_shape(&self) -> Vec<usize> {
        match self.kind {
            LayerKind::Dense => vec![self.shape[0]],
            LayerKind::Conv2d => {
                let [c, h, w] = self.conv_out_shape();
                match self.pool {
                    Some(p) => vec![c, h / p.size, w / p.size],
                    None => vec![c, h, w],
                }
            }
        }
    }

    pub fn output_len(&self) -> usize {
        self.output_shape().iter().product()
    }

    /// `W·x + bias_scale·b`, before activation and pooling.
    fn linear(&self, x: &[f64], bias_scale: f64) -> Vec<f64> {
        match self.kind {
            LayerKind::Dense => {
                let inp = self.shape[1];
                self.weights
                    .chunks_exact(inp)
                    .zip(&self.bias)
                    .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + bias_scale * b)
                    .collect()
            }
            LayerKind::Conv2d => {
                let [oc, ic, kh, kw] = [self.shape[0], self.shape[1], self.shape[2], self.shape[3]];
                let s = self.input_shape.as_ref().expect("validated conv2d");
                let (h, w) = (s[1], s[2]);
                let [_, oh, ow] = self.conv_out_shape();
                let mut out = Vec::with_capacity(oc * oh * ow);
                for o in 0..oc {
                    for y in 0..oh {
                        for xo in 0..ow {
                            let mut acc = bias_scale * self.bias[o];
                            for c in 0..ic {
                                for dy in 0..kh {
                                    for dx in 0..kw {
                                        let wv = self.weights[((o * ic + c) * kh + dy) * kw + dx];
                                        acc += wv * x[(c * h + y + dy) * w + xo + dx];
                                    }
                                }
                            }
                            out.push(acc);
                        }
                    }
                }
                out
            }
        }
    }

    fn activate(&self, v: &mut [f64]) {
        if self.activation == Activation::Relu {
            for x in v.iter_mut() {
                *x = relu(*x);
            }
        }
    }

    fn pool(&self, v: Vec<f64>) -> Vec<f64> {
        let Some(p) = self.pool else {
            return v;
        };
        let [c, h, w] = self.conv_out_shape();
        let (ph, pw) = (h / p.size, w / p.size);
        let mut out = Vec::with_capacity(c * ph * pw);
        for ch in 0..c {
            for y in 0..ph {
                for x in 0..pw {
                    let mut m = f64::NEG_INFINITY;
                    for dy in 0..p.size {
                        for dx in 0..p.size {
                            m = m.max(v[(ch * h + y * p.size + dy) * w + x * p.size + dx]);
                        }
                    }
                    out.push(m);
                }
            }
        }
        out
    }
}

/// `(x + |x|) / 2`.
pub fn relu(x: f64) -> f64 {
    (x + x.abs()) / 2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansClassifier {
    /// Centroids in the selected-feature space.
    pub centroids: Vec<Vec<f64>>,
    /// The same centroids in the layer's full activation space.
    pub centroids_full: Vec<Vec<f64>>,
    pub labels: Vec<u32>,
    pub sizes: Vec<u64>,
    pub feature_indices: Vec<usize>,
    pub threshold: f64,
}

impl KMeansClassifier {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitOutcome {
    pub label: u32,
    /// Index of the nearest centroid.
    pub cluster: usize,
    pub delta1: f64,
    pub delta2: f64,
    pub psi: f64,
    pub exit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgileModel {
    pub layers: Vec<Layer>,
    pub classifiers: Vec<KMeansClassifier>,
    pub coefficients: Vec<f64>,
    /// Largest utility seen per layer during calibration.
    pub psi_max: Vec<f64>,
}

impl AgileModel {
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }
}

pub fn forward_layer(model: &AgileModel, layer_index: usize, input: &Tensor) -> Result<Tensor, InferenceError> {
    let layer = model
        .layers
        .get(layer_index)
        .ok_or(InferenceError::NoLayer(layer_index))?;
    forward(layer, layer_index, input)
}

fn forward(layer: &Layer, index: usize, input: &Tensor) -> Result<Tensor, InferenceError> {
    if input.len() != layer.input_len() {
        return Err(InferenceError::InputSize {
            layer: index,
            expected: layer.input_len(),
            got: input.len(),
        });
    }
    let mut z = layer.linear(&input.data, 1.0);
    layer.activate(&mut z);
    Ok(Tensor {
        shape: layer.output_shape(),
        data: layer.pool(z),
    })
}

/// Gathers flattened activations at `indices`, in order.
pub fn select_features(activation: &Tensor, indices: &[usize]) -> Result<Vec<f64>, InferenceError> {
    if indices.is_empty() {
        return Err(InferenceError::NoFeatures);
    }
    indices
        .iter()
        .map(|&i| {
            activation.data.get(i).copied().ok_or(InferenceError::FeatureIndex {
                index: i,
                len: activation.len(),
            })
        })
        .collect()
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Margin test between the two nearest centroids under L1 distance. Equal
/// distances resolve to the lower centroid index.
pub fn classify(clf: &KMeansClassifier, features: &[f64], threshold: f64) -> Result<UnitOutcome, InferenceError> {
    if clf.k() < 2 {
        return Err(InferenceError::TooFewCentroids(clf.k()));
    }
    let mut dists = Vec::with_capacity(clf.k());
    for (i, c) in clf.centroids.iter().enumerate() {
        if c.len() != features.len() {
            return Err(InferenceError::Dimension {
                expected: c.len(),
                got: features.len(),
            });
        }
        dists.push((l1(c, features), i));
    }
    dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let (delta1, cluster) = dists[0];
    let delta2 = dists[1].0;
    let psi = (delta2 - delta1).abs();
    Ok(UnitOutcome {
        label: clf.labels[cluster],
        cluster,
        delta1,
        delta2,
        psi,
        exit: psi >= threshold,
    })
}

/// Shannon entropy in bits.
pub fn entropy_utility(probs: &[f64]) -> Result<f64, InferenceError> {
    if probs.is_empty() {
        return Err(InferenceError::Distribution("empty".into()));
    }
    if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(InferenceError::Distribution(format!("entry {p}")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(InferenceError::Distribution(format!("sums to {sum}")));
    }
    Ok(probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|p| -p * p.log2())
        .sum::<f64>()
        .max(0.0))
}

/// Moves centroid `cluster` toward `x` by weight `w` and counts the sample.
/// `x_full`, when given, updates the full-space centroid the same way.
pub fn adapt_centroid(
    clf: &mut KMeansClassifier,
    cluster: usize,
    x: &[f64],
    x_full: Option<&[f64]>,
    w: f64,
) -> Result<(), InferenceError> {
    if !(w > 0.0 && w < 1.0) {
        return Err(InferenceError::Weight(w));
    }
    let c = clf
        .centroids
        .get_mut(cluster)
        .ok_or(InferenceError::NoCluster(cluster))?;
    if c.len() != x.len() {
        return Err(InferenceError::Dimension {
            expected: c.len(),
            got: x.len(),
        });
    }
    if let Some(xf) = x_full {
        let cf = clf
            .centroids_full
            .get(cluster)
            .ok_or(InferenceError::NoCluster(cluster))?;
        if cf.len() != xf.len() {
            return Err(InferenceError::Dimension {
                expected: cf.len(),
                got: xf.len(),
            });
        }
    }
    blend(c, x, w);
    if let Some(xf) = x_full {
        blend(&mut clf.centroids_full[cluster], xf, w);
    }
    clf.sizes[cluster] += 1;
    Ok(())
}

fn blend(c: &mut [f64], x: &[f64], w: f64) {
    for (ci, xi) in c.iter_mut().zip(x) {
        *ci = (1.0 - w) * *ci + w * xi;
    }
}

/// Image of full-space centroid `cluster` at `layer_index` through the next
/// layer: `(1/r)·σ(W·(r·c) + r·b)`. Returned in the next layer's full
/// activation space.
pub fn propagate_centroids(model: &AgileModel, layer_index: usize, cluster: usize) -> Result<Vec<f64>, InferenceError> {
    let next = layer_index + 1;
    let layer = model.layers.get(next).ok_or(InferenceError::NoLayer(next))?;
    let clf = model
        .classifiers
        .get(layer_index)
        .ok_or(InferenceError::NoLayer(layer_index))?;
    let c = clf
        .centroids_full
        .get(cluster)
        .ok_or(InferenceError::NoCluster(cluster))?;
    propagate(layer, next, c, clf.sizes[cluster])
}

/// Propagation rule applied to an explicit centroid and cluster size.
pub fn propagate(layer: &Layer, index: usize, centroid: &[f64], r: u64) -> Result<Vec<f64>, InferenceError> {
    if layer.pool.is_some() {
        return Err(InferenceError::PooledPropagation(index));
    }
    if centroid.len() != layer.input_len() {
        return Err(InferenceError::InputSize {
            layer: index,
            expected: layer.input_len(),
            got: centroid.len(),
        });
    }
    let r = r.max(1) as f64;
    let sum: Vec<f64> = centroid.iter().map(|v| v * r).collect();
    let mut z = layer.linear(&sum, r);
    layer.activate(&mut z);
    Ok(z.into_iter().map(|v| v / r).collect())
}

/// Writes a propagated full-space centroid into layer `layer_index`'s
/// classifier, refreshing its selected-feature view.
pub fn install_centroid(
    model: &mut AgileModel,
    layer_index: usize,
    cluster: usize,
    full: Vec<f64>,
) -> Result<(), InferenceError> {
    let clf = model
        .classifiers
        .get_mut(layer_index)
        .ok_or(InferenceError::NoLayer(layer_index))?;
    let slot = clf
        .centroids_full
        .get_mut(cluster)
        .ok_or(InferenceError::NoCluster(cluster))?;
    if slot.len() != full.len() {
        return Err(InferenceError::Dimension {
            expected: slot.len(),
            got: full.len(),
        });
    }
    let selected = select_features(&Tensor::vector(full.clone()), &clf.feature_indices)?;
    *slot = full;
    clf.centroids[cluster] = selected;
    Ok(())
}

/// Result of running one input through the model with early exit.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub label: u32,
    /// 1-based layer at which the utility test first passed, or the last
    /// layer.
    pub exit_layer: usize,
    pub outcomes: Vec<UnitOutcome>,
}

/// Runs layers until a utility test passes or the model ends.
pub fn infer(model: &AgileModel, input: &Tensor) -> Result<Inference, InferenceError> {
    let mut act = input.clone();
    let mut outcomes = Vec::new();
    for (i, clf) in model.classifiers.iter().enumerate() {
        act = forward_layer(model, i, &act)?;
        let feats = select_features(&act, &clf.feature_indices)?;
        let out = classify(clf, &feats, clf.threshold)?;
        outcomes.push(out);
        if out.exit || i + 1 == model.num_layers() {
            return Ok(Inference {
                label: out.label,
                exit_layer: i + 1,
                outcomes,
            });
        }
    }
    Err(InferenceError::NoLayer(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model_of(layers: Vec<Layer>) -> AgileModel {
        AgileModel {
            layers,
            classifiers: vec![],
            coefficients: vec![],
            psi_max: vec![],
        }
    }

    fn two_centroids(a: Vec<f64>, b: Vec<f64>) -> KMeansClassifier {
        KMeansClassifier {
            centroids_full: vec![a.clone(), b.clone()],
            centroids: vec![a, b],
            labels: vec![0, 1],
            sizes: vec![1, 1],
            feature_indices: vec![0, 1],
            threshold: 0.0,
        }
    }

    #[test]
    fn zero_layer_gives_zero() {
        let m = model_of(vec![Layer::dense(3, 2, vec![0.0; 6], vec![0.0; 3], true)]);
        let out = forward_layer(&m, 0, &Tensor::vector(vec![4.0, -2.0])).unwrap();
        assert_eq!(out.data, vec![0.0; 3]);
    }

    #[test]
    fn identity_layer_passes_through() {
        let m = model_of(vec![Layer::dense(2, 2, vec![1.0, 0.0, 0.0, 1.0], vec![0.0; 2], false)]);
        let x = Tensor::vector(vec![3.5, -1.25]);
        assert_eq!(forward_layer(&m, 0, &x).unwrap(), x);
    }

    #[test]
    fn dense_relu_by_hand() {
        let m = model_of(vec![Layer::dense(2, 2, vec![1.0, 2.0, 3.0, 4.0], vec![0.0; 2], true)]);
        let out = forward_layer(&m, 0, &Tensor::vector(vec![1.0, -1.0])).unwrap();
        assert_eq!(out.data, vec![0.0, 0.0]);
        let out = forward_layer(&m, 0, &Tensor::vector(vec![1.0, 1.0])).unwrap();
        assert_eq!(out.data, vec![3.0, 7.0]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let m = model_of(vec![Layer::dense(2, 2, vec![0.0; 4], vec![0.0; 2], true)]);
        assert!(matches!(
            forward_layer(&m, 0, &Tensor::vector(vec![1.0])),
            Err(InferenceError::InputSize { .. })
        ));
    }

    #[test]
    fn conv_and_pool_by_hand() {
        // One 3x3 channel, one 2x2 all-ones kernel, then 2x2 max-pool.
        let layer = Layer {
            kind: LayerKind::Conv2d,
            shape: vec![1, 1, 2, 2],
            input_shape: Some(vec![1, 3, 3]),
            weights: vec![1.0; 4],
            bias: vec![-10.0],
            activation: Activation::Relu,
            pool: None,
        };
        layer.validate(0).unwrap();
        let x = Tensor {
            shape: vec![1, 3, 3],
            data: (1..=9).map(f64::from).collect(),
        };
        let m = model_of(vec![layer.clone()]);
        let out = forward_layer(&m, 0, &x).unwrap();
        // Window sums 12, 16, 24, 28 minus 10.
        assert_eq!(out.shape, vec![1, 2, 2]);
        assert_eq!(out.data, vec![2.0, 6.0, 14.0, 18.0]);
        let pooled = model_of(vec![Layer {
            pool: Some(Pool { size: 2 }),
            ..layer
        }]);
        assert_eq!(forward_layer(&pooled, 0, &x).unwrap().data, vec![18.0]);
    }

    #[test]
    fn feature_gather() {
        let t = Tensor::vector(vec![1.0, 2.0, 3.0]);
        assert_eq!(select_features(&t, &[0, 1, 2]).unwrap(), t.data);
        assert_eq!(select_features(&t, &[2, 0]).unwrap(), vec![3.0, 1.0]);
        assert_eq!(select_features(&t, &[]), Err(InferenceError::NoFeatures));
        assert!(select_features(&t, &[3]).is_err());
    }

    #[test]
    fn margin_by_hand() {
        let clf = two_centroids(vec![0.0, 0.0], vec![10.0, 10.0]);
        let out = classify(&clf, &[1.0, 1.0], 5.0).unwrap();
        assert_eq!(
            (out.label, out.delta1, out.delta2, out.psi, out.exit),
            (0, 2.0, 18.0, 16.0, true)
        );
    }

    #[test]
    fn equidistant_never_exits() {
        let clf = two_centroids(vec![0.0, 0.0], vec![2.0, 2.0]);
        let out = classify(&clf, &[1.0, 1.0], 1e-9).unwrap();
        assert_eq!(out.psi, 0.0);
        assert!(!out.exit);
        assert_eq!(out.cluster, 0);
        assert!(classify(&clf, &[1.0, 1.0], 0.0).unwrap().exit);
    }

    #[test]
    fn classify_errors() {
        let mut clf = two_centroids(vec![0.0, 0.0], vec![2.0, 2.0]);
        assert!(matches!(
            classify(&clf, &[1.0], 0.0),
            Err(InferenceError::Dimension { .. })
        ));
        clf.centroids.pop();
        assert_eq!(
            classify(&clf, &[1.0, 1.0], 0.0),
            Err(InferenceError::TooFewCentroids(1))
        );
    }

    #[test]
    fn entropy_values() {
        assert_eq!(entropy_utility(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
        assert!((entropy_utility(&[0.25; 4]).unwrap() - 2.0).abs() < 1e-12);
        assert!((entropy_utility(&[0.5, 0.5]).unwrap() - 1.0).abs() < 1e-12);
        assert!(entropy_utility(&[0.5, 0.6]).is_err());
        assert!(entropy_utility(&[-0.5, 1.5]).is_err());
    }

    #[test]
    fn adaptation_arithmetic() {
        let mut clf = two_centroids(vec![0.0, 0.0], vec![5.0, 5.0]);
        adapt_centroid(&mut clf, 0, &[1.0, 1.0], Some(&[1.0, 1.0]), 0.05).unwrap();
        assert!((clf.centroids[0][0] - 0.05).abs() < 1e-15);
        assert!((clf.centroids_full[0][1] - 0.05).abs() < 1e-15);
        assert_eq!(clf.sizes, vec![2, 1]);
        let before = clf.centroids[1].clone();
        adapt_centroid(&mut clf, 1, &before.clone(), None, 0.3).unwrap();
        assert_eq!(clf.centroids[1], before);
        assert_eq!(
            adapt_centroid(&mut clf, 0, &[0.0, 0.0], None, 1.0),
            Err(InferenceError::Weight(1.0))
        );
        assert_eq!(
            adapt_centroid(&mut clf, 0, &[0.0, 0.0], None, 0.0),
            Err(InferenceError::Weight(0.0))
        );
    }

    #[test]
    fn singleton_propagation_is_forward_pass() {
        let layer = Layer::dense(2, 3, vec![1.0, -2.0, 0.5, -1.0, 1.0, 3.0], vec![0.25, -4.0], true);
        let c = vec![0.3, 1.7, -0.2];
        let m = model_of(vec![layer.clone()]);
        let fwd = forward_layer(&m, 0, &Tensor::vector(c.clone())).unwrap();
        assert_eq!(propagate(&layer, 0, &c, 1).unwrap(), fwd.data);
    }

    #[test]
    fn pooled_propagation_is_refused() {
        let layer = Layer {
            kind: LayerKind::Conv2d,
            shape: vec![1, 1, 1, 1],
            input_shape: Some(vec![1, 2, 2]),
            weights: vec![1.0],
            bias: vec![0.0],
            activation: Activation::Relu,
            pool: Some(Pool { size: 2 }),
        };
        assert_eq!(
            propagate(&layer, 3, &[0.0; 4], 2),
            Err(InferenceError::PooledPropagation(3))
        );
    }

    #[test]
    fn layer_validation() {
        assert!(Layer::dense(2, 2, vec![0.0; 3], vec![0.0; 2], true)
            .validate(0)
            .is_err());
        assert!(Layer::dense(2, 2, vec![0.0; 4], vec![0.0; 1], true)
            .validate(0)
            .is_err());
        assert!(Layer::dense(2, 2, vec![0.0; 4], vec![0.0; 2], true).validate(0).is_ok());
    }
}
