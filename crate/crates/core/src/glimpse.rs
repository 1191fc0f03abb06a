//! Temporal glimpse features and a linear person/non-person classifier.
//!
//! Around each proposal cell, slot `k` of the history (oldest first) is
//! sampled on a `(2r+1)^2` lattice whose stride is `dilations[k]`: older
//! frames are read wider, the newest at full resolution. The flattened
//! patches plus the peak score feed a logistic classifier.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detect::Proposal;
use crate::error::{Error, Result};
use crate::fusion::FusedMap;
use crate::occupancy::OccupancyMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureSource {
    /// Sample the averaged occupancy map.
    Mean,
    /// Sample every per-camera channel of a stacked fusion.
    Stacked { channels: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlimpseConfig {
    pub history_len: usize,
    pub patch_radius: usize,
    pub dilations: Vec<usize>,
    pub source: FeatureSource,
}

impl Default for GlimpseConfig {
    fn default() -> Self {
        Self {
            history_len: 4,
            patch_radius: 3,
            dilations: vec![4, 3, 2, 2, 1],
            source: FeatureSource::Mean,
        }
    }
}

impl GlimpseConfig {
    /// Current frame only, unit dilation.
    pub fn single_frame(patch_radius: usize) -> Self {
        Self {
            history_len: 0,
            patch_radius,
            dilations: vec![1],
            source: FeatureSource::Mean,
        }
    }

    pub fn with_source(mut self, source: FeatureSource) -> Self {
        self.source = source;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dilations.len() != self.history_len + 1 {
            return Err(Error::Config(format!(
                "need {} dilations for history length {}, got {}",
                self.history_len + 1,
                self.history_len,
                self.dilations.len()
            )));
        }
        if self.dilations.contains(&0) {
            return Err(Error::Config("dilations must be positive".into()));
        }
        if self.dilations.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Config("dilations must not increase toward the present".into()));
        }
        if self.dilations.last() != Some(&1) {
            return Err(Error::Config("the newest slot must use dilation 1".into()));
        }
        if let FeatureSource::Stacked { channels: 0 } = self.source {
            return Err(Error::Config("stacked features need at least one channel".into()));
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        match self.source {
            FeatureSource::Mean => 1,
            FeatureSource::Stacked { channels } => channels,
        }
    }

    pub fn patch_len(&self) -> usize {
        let side = 2 * self.patch_radius + 1;
        side * side
    }

    pub fn feature_len(&self) -> usize {
        (self.history_len + 1) * self.channels() * self.patch_len() + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlimpseFeatures(pub Vec<f64>);

impl GlimpseFeatures {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn planes<'a>(map: &'a FusedMap, config: &GlimpseConfig) -> Result<Vec<&'a OccupancyMap>> {
    match config.source {
        FeatureSource::Mean => Ok(vec![&map.mean]),
        FeatureSource::Stacked { channels } => {
            let stacked = map
                .stacked
                .as_ref()
                .ok_or_else(|| Error::ShapeMismatch("stacked features need stacked fusion".into()))?;
            if stacked.len() != channels {
                return Err(Error::ShapeMismatch(format!(
                    "classifier expects {channels} channels, map has {}",
                    stacked.len()
                )));
            }
            Ok(stacked.iter().collect())
        }
    }
}

/// Glimpse features of one proposal. `history` is ordered oldest to newest
/// and ends with the map the proposal came from; short histories are padded
/// at the front with their oldest map. Samples off the grid read 0.
pub fn extract_features(proposal: &Proposal, history: &[&FusedMap], config: &GlimpseConfig) -> Result<GlimpseFeatures> {
    let oldest = *history
        .first()
        .ok_or_else(|| Error::ShapeMismatch("glimpse extraction needs at least one map".into()))?;
    let slots = config.history_len + 1;
    let pad = slots.saturating_sub(history.len());
    let used = &history[history.len().saturating_sub(slots)..];
    let r = config.patch_radius as isize;
    let (row, col) = (proposal.row as isize, proposal.col as isize);
    let mut out = Vec::with_capacity(config.feature_len());
    for k in 0..slots {
        let map = if k < pad { oldest } else { used[k - pad] };
        let stride = config.dilations[k] as isize;
        for plane in planes(map, config)? {
            for dr in -r..=r {
                for dc in -r..=r {
                    out.push(plane.get_or_zero(row + dr * stride, col + dc * stride));
                }
            }
        }
    }
    out.push(proposal.score);
    debug_assert_eq!(out.len(), config.feature_len());
    Ok(GlimpseFeatures(out))
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlimpseClassifier {
    pub config: GlimpseConfig,
    pub weights: Vec<f64>,
    pub bias: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassifierFile {
    config: GlimpseConfig,
    weights: Vec<f64>,
    bias: f64,
    feature_length: usize,
}

impl GlimpseClassifier {
    pub fn zeros(config: GlimpseConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            weights: vec![0.0; config.feature_len()],
            config,
            bias: 0.0,
        })
    }

    pub fn logit(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.weights.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} features for a classifier of length {}",
                features.len(),
                self.weights.len()
            )));
        }
        Ok(self.weights.iter().zip(features).map(|(w, x)| w * x).sum::<f64>() + self.bias)
    }

    pub fn score(&self, features: &GlimpseFeatures) -> Result<f64> {
        self.logit(&features.0).map(sigmoid)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ClassifierFile {
            config: self.config.clone(),
            weights: self.weights.clone(),
            bias: self.bias,
            feature_length: self.weights.len(),
        };
        let text = serde_json::to_string_pretty(&file)?;
        std::fs::write(path, text).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ClassifierFile = serde_json::from_str(text)?;
        file.config.validate()?;
        let expected = file.config.feature_len();
        if file.feature_length != expected || file.weights.len() != expected {
            return Err(Error::Data(format!(
                "classifier feature length {} / {} weights, config implies {expected}",
                file.feature_length,
                file.weights.len()
            )));
        }
        if !file.weights.iter().all(|w| w.is_finite()) || !file.bias.is_finite() {
            return Err(Error::Data("classifier has non-finite weights".into()));
        }
        Ok(Self {
            config: file.config,
            weights: file.weights,
            bias: file.bias,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: GlimpseFeatures,
    pub positive: bool,
    pub frame: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            epochs: 300,
            learning_rate: 1.0,
            l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub classifier: GlimpseClassifier,
    /// Objective after each accepted epoch, starting with the initial value.
    pub losses: Vec<f64>,
}

/// Class-weighted logistic objective over a fixed sample set. Each class
/// carries half of the total weight.
pub struct Objective<'a> {
    samples: &'a [Sample],
    sample_weight: [f64; 2],
    l2: f64,
}

impl<'a> Objective<'a> {
    pub fn new(samples: &'a [Sample], l2: f64) -> Result<Self> {
        let positives = samples.iter().filter(|s| s.positive).count();
        let negatives = samples.len() - positives;
        if positives == 0 || negatives == 0 {
            return Err(Error::SingleClass);
        }
        let n = samples.len() as f64;
        Ok(Self {
            samples,
            sample_weight: [n / (2.0 * negatives as f64), n / (2.0 * positives as f64)],
            l2,
        })
    }

    pub fn loss(&self, weights: &[f64], bias: f64) -> f64 {
        let mut total = 0.0;
        for s in self.samples {
            let z = dot(weights, &s.features.0) + bias;
            let y = s.positive as u8 as f64;
            total += self.sample_weight[s.positive as usize] * (softplus(z) - y * z);
        }
        total / self.samples.len() as f64 + 0.5 * self.l2 * dot(weights, weights)
    }

    /// Loss and gradient with respect to (weights, bias).
    pub fn loss_and_gradient(&self, weights: &[f64], bias: f64) -> (f64, Vec<f64>, f64) {
        let inv_n = 1.0 / self.samples.len() as f64;
        let mut gw = vec![0.0; weights.len()];
        let mut gb = 0.0;
        let mut total = 0.0;
        for s in self.samples {
            let z = dot(weights, &s.features.0) + bias;
            let y = s.positive as u8 as f64;
            let sw = self.sample_weight[s.positive as usize];
            total += sw * (softplus(z) - y * z);
            let residual = sw * (sigmoid(z) - y) * inv_n;
            for (g, x) in gw.iter_mut().zip(&s.features.0) {
                *g += residual * x;
            }
            gb += residual;
        }
        for (g, w) in gw.iter_mut().zip(weights) {
            *g += self.l2 * w;
        }
        (total * inv_n + 0.5 * self.l2 * dot(weights, weights), gw, gb)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Full-batch gradient descent with Armijo backtracking, so the recorded
/// objective never increases. Deterministic: samples are visited in order.
pub fn train(config: &GlimpseConfig, samples: &[Sample], params: &TrainParams) -> Result<TrainOutcome> {
    config.validate()?;
    if !(params.learning_rate > 0.0 && params.l2 >= 0.0) {
        return Err(Error::Config("learning rate must be positive and l2 non-negative".into()));
    }
    let len = config.feature_len();
    if let Some(bad) = samples.iter().find(|s| s.features.0.len() != len) {
        return Err(Error::ShapeMismatch(format!(
            "sample has {} features, config implies {len}",
            bad.features.0.len()
        )));
    }
    let objective = Objective::new(samples, params.l2)?;
    let mut weights = vec![0.0; len];
    let mut bias = 0.0;
    let mut step = params.learning_rate;
    let mut losses = vec![objective.loss(&weights, bias)];
    for _ in 0..params.epochs {
        let (loss, gw, gb) = objective.loss_and_gradient(&weights, bias);
        let gnorm2 = dot(&gw, &gw) + gb * gb;
        if gnorm2 < 1e-18 {
            break;
        }
        let mut accepted = None;
        for _ in 0..60 {
            let cand_w: Vec<f64> = weights.iter().zip(&gw).map(|(w, g)| w - step * g).collect();
            let cand_b = bias - step * gb;
            let cand_loss = objective.loss(&cand_w, cand_b);
            if cand_loss <= loss - 1e-4 * step * gnorm2 {
                accepted = Some((cand_w, cand_b, cand_loss));
                break;
            }
            step *= 0.5;
        }
        let Some((w, b, l)) = accepted else {
            break;
        };
        weights = w;
        bias = b;
        losses.push(l);
        step *= 1.5;
    }
    Ok(TrainOutcome {
        classifier: GlimpseClassifier {
            config: config.clone(),
            weights,
            bias,
        },
        losses,
    })
}

/// Fraction of samples whose thresholded score agrees with the label.
pub fn accuracy(classifier: &GlimpseClassifier, samples: &[Sample], threshold: f64) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for s in samples {
        correct += ((classifier.score(&s.features)? >= threshold) == s.positive) as usize;
    }
    Ok(correct as f64 / samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{GroundGrid, Point2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> GroundGrid {
        GroundGrid::new(Point2::origin(), 0.025, n, n).unwrap()
    }

    fn fused_from(f: impl Fn(usize, usize) -> f64, n: usize) -> FusedMap {
        let g = grid(n);
        let mut m = OccupancyMap::zeros_ground(g);
        for r in 0..n {
            for c in 0..n {
                m.set(r, c, f(r, c));
            }
        }
        FusedMap {
            mean: m,
            coverage: vec![1; n * n],
            stacked: None,
        }
    }

    fn proposal(row: usize, col: usize, score: f64) -> Proposal {
        Proposal {
            row,
            col,
            position: grid(20).cell_center(row, col),
            score,
        }
    }

    #[test]
    fn defaults_are_valid_and_sized() {
        let c = GlimpseConfig::default();
        c.validate().unwrap();
        assert_eq!(c.feature_len(), 5 * 49 + 1);
        let bad = GlimpseConfig {
            dilations: vec![1, 2],
            history_len: 1,
            ..GlimpseConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(GlimpseConfig {
            dilations: vec![2],
            history_len: 0,
            ..GlimpseConfig::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn single_slot_reads_row_major_patch_and_score() {
        let map = fused_from(|r, c| (r * 10 + c) as f64 / 1000.0, 10);
        let f = extract_features(&proposal(4, 6, 0.9), &[&map], &GlimpseConfig::single_frame(1)).unwrap();
        let expected: Vec<f64> = [35, 36, 37, 45, 46, 47, 55, 56, 57]
            .iter()
            .map(|&v| v as f64 / 1000.0)
            .chain([0.9])
            .collect();
        assert_eq!(f.0, expected);
    }

    #[test]
    fn corner_samples_off_grid_are_zero() {
        let map = fused_from(|_, _| 1.0, 6);
        let f = extract_features(&proposal(0, 0, 1.0), &[&map], &GlimpseConfig::single_frame(1)).unwrap();
        assert_eq!(f.0[..9], [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn dilated_slot_uses_strided_offsets() {
        let n = 20;
        let value = |r: usize, c: usize| (r * n + c) as f64;
        let old = fused_from(value, n);
        let new = fused_from(|_, _| -1.0, n);
        let config = GlimpseConfig {
            history_len: 1,
            patch_radius: 1,
            dilations: vec![2, 1],
            source: FeatureSource::Mean,
        };
        let f = extract_features(&proposal(10, 10, 0.5), &[&old, &new], &config).unwrap();
        let mut expected = Vec::new();
        for dr in [-2isize, 0, 2] {
            for dc in [-2isize, 0, 2] {
                expected.push(value((10 + dr) as usize, (10 + dc) as usize));
            }
        }
        assert_eq!(&f.0[..9], expected.as_slice());
        assert!(f.0[9..18].iter().all(|&v| v == -1.0));
        assert_eq!(f.0.len(), config.feature_len());
    }

    #[test]
    fn short_history_repeats_oldest() {
        let a = fused_from(|_, _| 0.25, 8);
        let config = GlimpseConfig {
            history_len: 2,
            patch_radius: 0,
            dilations: vec![1, 1, 1],
            source: FeatureSource::Mean,
        };
        let f = extract_features(&proposal(3, 3, 0.1), &[&a], &config).unwrap();
        assert_eq!(f.0, vec![0.25, 0.25, 0.25, 0.1]);
        assert!(extract_features(&proposal(3, 3, 0.1), &[], &config).is_err());
    }

    #[test]
    fn stacked_source_requires_matching_channels() {
        let map = fused_from(|_, _| 0.5, 6);
        let config = GlimpseConfig::single_frame(0).with_source(FeatureSource::Stacked { channels: 2 });
        assert!(extract_features(&proposal(1, 1, 0.5), &[&map], &config).is_err());
        let mut st = map.clone();
        st.stacked = Some(vec![map.mean.clone(), OccupancyMap::zeros_ground(grid(6))]);
        let f = extract_features(&proposal(1, 1, 0.5), &[&st], &config).unwrap();
        assert_eq!(f.0, vec![0.5, 0.0, 0.5]);
    }

    #[test]
    fn score_basics() {
        let config = GlimpseConfig::single_frame(0);
        let mut c = GlimpseClassifier::zeros(config).unwrap();
        let f = GlimpseFeatures(vec![3.0, 0.2]);
        assert_eq!(c.score(&f).unwrap(), 0.5);
        assert!(c.score(&GlimpseFeatures(vec![1.0])).is_err());
        let mut last = 0.5;
        for b in [1.0, 5.0, 20.0, 40.0] {
            c.bias = b;
            let s = c.score(&f).unwrap();
            assert!(s >= last && s <= 1.0);
            last = s;
        }
        assert!(last > 1.0 - 1e-12);
        c.weights = vec![0.0, 1.0];
        let a = c.score(&GlimpseFeatures(vec![3.0, 0.2])).unwrap();
        let b = c.score(&GlimpseFeatures(vec![-7.0, 0.2])).unwrap();
        assert_eq!(a, b);
    }

    fn toy_samples(seed: u64, n: usize, separable: bool) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let positive = rng.random_bool(0.3);
                let shift = if positive { 0.6 } else { -0.6 };
                let noise = if separable { 0.2 } else { 1.0 };
                let features = vec![shift + rng.random_range(-noise..noise), rng.random_range(0.0..1.0)];
                Sample {
                    features: GlimpseFeatures(features),
                    positive,
                    frame: i as u64,
                }
            })
            .collect()
    }

    #[test]
    fn separable_toy_set_is_learned_exactly() {
        let config = GlimpseConfig::single_frame(0);
        let samples = toy_samples(2, 200, true);
        let out = train(&config, &samples, &TrainParams::default()).unwrap();
        assert_eq!(accuracy(&out.classifier, &samples, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn training_loss_never_increases() {
        let config = GlimpseConfig::single_frame(0);
        let samples = toy_samples(3, 300, false);
        let out = train(
            &config,
            &samples,
            &TrainParams {
                epochs: 100,
                ..Default::default()
            },
        )
        .unwrap();
        for w in out.losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
        assert!(out.losses.len() > 10);
    }

    #[test]
    fn single_class_is_rejected() {
        let config = GlimpseConfig::single_frame(0);
        let mut samples = toy_samples(4, 20, true);
        samples.iter_mut().for_each(|s| s.positive = true);
        assert!(matches!(train(&config, &samples, &TrainParams::default()), Err(Error::SingleClass)));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let samples = toy_samples(5, 50, false);
        let objective = Objective::new(&samples, 0.01).unwrap();
        let w = vec![0.3, -0.7];
        let b = 0.2;
        let (_, gw, gb) = objective.loss_and_gradient(&w, b);
        let h = 1e-5;
        for i in 0..2 {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[i] += h;
            wm[i] -= h;
            let fd = (objective.loss(&wp, b) - objective.loss(&wm, b)) / (2.0 * h);
            assert!((fd - gw[i]).abs() <= 1e-4 * fd.abs().max(1e-3), "{fd} vs {}", gw[i]);
        }
        let fd = (objective.loss(&w, b + h) - objective.loss(&w, b - h)) / (2.0 * h);
        assert!((fd - gb).abs() <= 1e-4 * fd.abs().max(1e-3));
    }

    #[test]
    fn classifier_json_round_trip_and_length_check() {
        let config = GlimpseConfig::default();
        let mut c = GlimpseClassifier::zeros(config).unwrap();
        c.weights[3] = 0.5;
        c.bias = -1.0;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        c.save(&path).unwrap();
        assert_eq!(GlimpseClassifier::load(&path).unwrap(), c);
        let text = std::fs::read_to_string(&path).unwrap();
        let tampered = text.replace("\"feature_length\": 246", "\"feature_length\": 245");
        assert!(GlimpseClassifier::from_json(&tampered).is_err());
    }
}
