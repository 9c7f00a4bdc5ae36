//! A minimal HTK-style recognizer: left-to-right GMM-HMMs per viseme,
//! flat-start initialization, embedded Baum-Welch re-estimation, silence and
//! short-pause tying, Viterbi forced alignment, and network-constrained
//! decoding.

mod decode;
mod train;

pub use decode::{
    build_network, decode, force_align, AlignedSegment, DecodeOutput, NetworkOrder, WordNetwork,
};
pub use train::{baum_welch, BaumWelchReport};

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Per-frame feature vectors at a fixed frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSequence {
    pub frames: Vec<Vec<f64>>,
    pub frame_rate: f64,
}

impl ObservationSequence {
    pub fn new(frames: Vec<Vec<f64>>, frame_rate: f64) -> Result<Self> {
        let dim = frames.first().map(|f| f.len()).ok_or_else(|| {
            Error::Hmm("observation sequence needs at least one frame".into())
        })?;
        if frames.iter().any(|f| f.len() != dim) {
            return Err(Error::Hmm("inconsistent feature dimensions".into()));
        }
        Ok(ObservationSequence { frames, frame_rate })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.frames[0].len()
    }
}

/// A diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Gmm {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl Gmm {
    pub fn n_mixtures(&self) -> usize {
        self.weights.len()
    }

    /// Mixture log-density at `x`.
    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let mut acc = f64::NEG_INFINITY;
        for m in 0..self.weights.len() {
            if self.weights[m] <= 0.0 {
                continue;
            }
            acc = log_add(acc, self.weights[m].ln() + self.component_log_pdf(m, x));
        }
        acc
    }

    /// Log-density of one component at `x`.
    pub fn component_log_pdf(&self, m: usize, x: &[f64]) -> f64 {
        let mean = &self.means[m];
        let var = &self.variances[m];
        let mut lp = 0.0;
        for d in 0..x.len() {
            let diff = x[d] - mean[d];
            lp += -0.5 * (2.0 * std::f64::consts::PI * var[d]).ln() - diff * diff / (2.0 * var[d]);
        }
        lp
    }
}

/// Stable `ln(exp(a) + exp(b))`.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// One left-to-right model. Transition row 0 is the non-emitting entry,
/// column `n_emitting + 1` the non-emitting exit; rows are stochastic.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Hmm {
    pub n_emitting: usize,
    /// `(n+2) x (n+2)` row-major transition probabilities.
    pub transitions: Vec<f64>,
    /// Pool index of each emitting state's mixture.
    pub states: Vec<usize>,
}

impl Hmm {
    #[inline]
    pub fn trans(&self, from: usize, to: usize) -> f64 {
        self.transitions[from * (self.n_emitting + 2) + to]
    }

    fn set_trans(&mut self, from: usize, to: usize, p: f64) {
        let n = self.n_emitting + 2;
        self.transitions[from * n + to] = p;
    }

    /// Fewest frames a path through this model must emit (zero for a tee).
    pub fn min_frames(&self) -> usize {
        // shortest path from entry to exit counting emitting visits
        let n = self.n_emitting + 2;
        let mut dist = vec![usize::MAX; n];
        dist[0] = 0;
        // relax in topological (left-to-right) order; entry is 0, exit n-1
        for _ in 0..n {
            for from in 0..n {
                if dist[from] == usize::MAX {
                    continue;
                }
                for to in 0..n {
                    if self.trans(from, to) <= 0.0 {
                        continue;
                    }
                    let cost = if to >= 1 && to <= self.n_emitting { 1 } else { 0 };
                    let cand = dist[from] + cost;
                    if cand < dist[to] {
                        dist[to] = cand;
                    }
                }
            }
        }
        dist[n - 1]
    }
}

/// The full model inventory. Mixtures live in a shared pool; tying two
/// states means pointing them at the same pool entry, so re-estimation keeps
/// tied parameters identical by construction.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HmmSet {
    pub dim: usize,
    pub n_mixtures: usize,
    pub pool: Vec<Gmm>,
    pub models: BTreeMap<String, Hmm>,
    /// Per-dimension variance floor (a fraction of the global variance).
    pub var_floor: Vec<f64>,
}

impl HmmSet {
    pub fn model(&self, label: &str) -> Result<&Hmm> {
        self.models
            .get(label)
            .ok_or_else(|| Error::Hmm(format!("no model for label '{label}'")))
    }

    /// Pool indices shared by more than one state.
    pub fn tied_groups(&self) -> Vec<Vec<(String, usize)>> {
        let mut users: BTreeMap<usize, Vec<(String, usize)>> = BTreeMap::new();
        for (label, hmm) in &self.models {
            for (si, &pi) in hmm.states.iter().enumerate() {
                users.entry(pi).or_default().push((label.clone(), si));
            }
        }
        users.into_values().filter(|v| v.len() > 1).collect()
    }
}

/// Configuration for the flat-start prototype.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct PrototypeConfig {
    pub emitting_states: usize,
    pub mixtures: usize,
}

impl Default for PrototypeConfig {
    fn default() -> Self {
        PrototypeConfig {
            emitting_states: 5,
            mixtures: 5,
        }
    }
}

/// Mixture-splitting offsets in units of the global standard deviation:
/// `0, +0.2, -0.2, +0.4, -0.4, ...`
fn split_offset(m: usize) -> f64 {
    if m == 0 {
        0.0
    } else {
        let k = (m + 1) / 2;
        let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
        sign * 0.2 * k as f64
    }
}

/// Flat-start initialization: every model gets the configured number of
/// emitting states; every state's mixture components share the global data
/// mean (perturbed per the splitting convention) and the global variance;
/// transitions are self 0.6, next 0.4.
pub fn flat_start(
    data: &[ObservationSequence],
    labels: &[String],
    cfg: PrototypeConfig,
) -> Result<(HmmSet, Vec<String>)> {
    if data.is_empty() {
        return Err(Error::Hmm("flat start needs data".into()));
    }
    if labels.is_empty() {
        return Err(Error::Hmm("flat start needs labels".into()));
    }
    let dim = data[0].dim();
    if data.iter().any(|o| o.dim() != dim) {
        return Err(Error::Hmm("inconsistent feature dimensions".into()));
    }
    let mut warnings = Vec::new();
    let n_frames: usize = data.iter().map(ObservationSequence::len).sum();
    let mut mean = vec![0.0; dim];
    for o in data {
        for f in &o.frames {
            for d in 0..dim {
                mean[d] += f[d];
            }
        }
    }
    for m in mean.iter_mut() {
        *m /= n_frames as f64;
    }
    let mut var = vec![0.0; dim];
    for o in data {
        for f in &o.frames {
            for d in 0..dim {
                let diff = f[d] - mean[d];
                var[d] += diff * diff;
            }
        }
    }
    for v in var.iter_mut() {
        *v /= n_frames as f64;
    }
    let mut var_floor = vec![0.0; dim];
    for d in 0..dim {
        if var[d] > 0.0 {
            var_floor[d] = 1e-6 * var[d];
        } else {
            var_floor[d] = 1e-8;
            warnings.push(format!(
                "dimension {d} has zero global variance; flooring at 1e-8"
            ));
        }
    }
    let floored_var: Vec<f64> = var
        .iter()
        .zip(var_floor.iter())
        .map(|(&v, &f)| v.max(f))
        .collect();
    let std: Vec<f64> = floored_var.iter().map(|v| v.sqrt()).collect();

    let prototype_gmm = |pool: &mut Vec<Gmm>| -> usize {
        let mut means = Vec::with_capacity(cfg.mixtures);
        for m in 0..cfg.mixtures {
            let off = split_offset(m);
            means.push(
                mean.iter()
                    .zip(std.iter())
                    .map(|(&mu, &s)| mu + off * s)
                    .collect(),
            );
        }
        pool.push(Gmm {
            weights: vec![1.0 / cfg.mixtures as f64; cfg.mixtures],
            means,
            variances: vec![floored_var.clone(); cfg.mixtures],
        });
        pool.len() - 1
    };

    let n = cfg.emitting_states;
    let mut pool = Vec::new();
    let mut models = BTreeMap::new();
    let mut sorted: Vec<String> = labels.to_vec();
    sorted.sort();
    sorted.dedup();
    for label in &sorted {
        let mut hmm = Hmm {
            n_emitting: n,
            transitions: vec![0.0; (n + 2) * (n + 2)],
            states: (0..n).map(|_| prototype_gmm(&mut pool)).collect(),
        };
        hmm.set_trans(0, 1, 1.0);
        for i in 1..=n {
            hmm.set_trans(i, i, 0.6);
            hmm.set_trans(i, i + 1, 0.4);
        }
        models.insert(label.clone(), hmm);
    }
    Ok((
        HmmSet {
            dim,
            n_mixtures: cfg.mixtures,
            pool,
            models,
            var_floor,
        },
        warnings,
    ))
}

/// Creates the short-pause tee model with its single emitting state tied to
/// the silence model's center state. Subsequent re-estimation updates the
/// shared mixture once.
pub fn tie_silence(set: &mut HmmSet, sil_label: &str, sp_label: &str) -> Result<()> {
    if set.models.contains_key(sp_label) {
        return Err(Error::Hmm(format!("model '{sp_label}' already exists")));
    }
    let sil = set.model(sil_label)?;
    if sil.n_emitting < 1 {
        return Err(Error::Hmm(format!("'{sil_label}' has no emitting states")));
    }
    let center = sil.states[sil.n_emitting / 2];
    let mut sp = Hmm {
        n_emitting: 1,
        transitions: vec![0.0; 9],
        states: vec![center],
    };
    // tee topology: the model may be skipped entirely
    sp.set_trans(0, 1, 0.5);
    sp.set_trans(0, 2, 0.5);
    sp.set_trans(1, 1, 0.5);
    sp.set_trans(1, 2, 0.5);
    set.models.insert(sp_label.to_string(), sp);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(frames: &[&[f64]]) -> ObservationSequence {
        ObservationSequence::new(frames.iter().map(|f| f.to_vec()).collect(), 60.0).unwrap()
    }

    #[test]
    fn flat_start_uses_global_statistics() {
        let data = vec![seq(&[&[0.0], &[2.0]])];
        let (set, warnings) = flat_start(
            &data,
            &["a".into()],
            PrototypeConfig {
                emitting_states: 2,
                mixtures: 1,
            },
        )
        .unwrap();
        assert!(warnings.is_empty());
        let hmm = set.model("a").unwrap();
        for &pi in &hmm.states {
            let g = &set.pool[pi];
            assert!((g.means[0][0] - 1.0).abs() < 1e-12);
            assert!((g.variances[0][0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_start_makes_identical_models() {
        let data = vec![seq(&[&[0.0, 1.0], &[2.0, 3.0], &[1.0, -1.0]])];
        let labels: Vec<String> = ["v01", "v02", "v03"].iter().map(|s| s.to_string()).collect();
        let (set, _) = flat_start(&data, &labels, PrototypeConfig::default()).unwrap();
        let a = set.model("v01").unwrap();
        let b = set.model("v02").unwrap();
        assert_eq!(a.transitions, b.transitions);
        for (&pa, &pb) in a.states.iter().zip(b.states.iter()) {
            assert_eq!(set.pool[pa], set.pool[pb]);
        }
        // mixture means follow the splitting offsets
        let g = &set.pool[a.states[0]];
        assert_eq!(g.n_mixtures(), 5);
        let base = g.means[0][0];
        let s = g.variances[0][0].sqrt();
        let offsets: Vec<f64> = g.means.iter().map(|m| (m[0] - base) / s).collect();
        for (o, expect) in offsets.iter().zip([0.0, 0.2, -0.2, 0.4, -0.4]) {
            assert!((o - expect).abs() < 1e-9, "{o} vs {expect}");
        }
    }

    #[test]
    fn flat_start_floors_zero_variance() {
        let data = vec![seq(&[&[3.0], &[3.0], &[3.0]])];
        let (set, warnings) =
            flat_start(&data, &["a".into()], PrototypeConfig::default()).unwrap();
        assert!(!warnings.is_empty());
        let g = &set.pool[set.model("a").unwrap().states[0]];
        assert!(g.variances[0][0] > 0.0);
    }

    #[test]
    fn flat_start_empty_data_is_error() {
        assert!(flat_start(&[], &["a".into()], PrototypeConfig::default()).is_err());
    }

    #[test]
    fn tie_creates_shared_center_state() {
        let data = vec![seq(&[&[0.0], &[1.0], &[2.0]])];
        let (mut set, _) =
            flat_start(&data, &["v18".into()], PrototypeConfig::default()).unwrap();
        tie_silence(&mut set, "v18", "sp").unwrap();
        let sil = set.model("v18").unwrap();
        let sp = set.model("sp").unwrap();
        assert_eq!(sp.n_emitting, 1);
        assert_eq!(sp.states[0], sil.states[2]);
        assert!(sp.trans(0, 2) > 0.0, "sp must be a tee model");
        assert_eq!(set.tied_groups().len(), 1);
        // min frames: sil needs 5, sp can be skipped
        assert_eq!(sil.min_frames(), 5);
        assert_eq!(sp.min_frames(), 0);
    }

    #[test]
    fn tie_requires_silence_model() {
        let data = vec![seq(&[&[0.0]])];
        let (mut set, _) = flat_start(&data, &["a".into()], PrototypeConfig::default()).unwrap();
        assert!(tie_silence(&mut set, "v18", "sp").is_err());
    }

    #[test]
    fn gmm_log_pdf_matches_hand_computation() {
        let g = Gmm {
            weights: vec![0.4, 0.6],
            means: vec![vec![0.0], vec![2.0]],
            variances: vec![vec![1.0], vec![4.0]],
        };
        let x = [1.0];
        let c1 = 0.4 * (-0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5).exp();
        let c2 = 0.6
            * (-0.5 * (2.0 * std::f64::consts::PI * 4.0).ln() - 1.0 / 8.0).exp();
        assert!((g.log_pdf(&x) - (c1 + c2).ln()).abs() < 1e-12);
    }

    #[test]
    fn log_add_is_stable() {
        assert!((log_add(-1000.0, -1000.0) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_add(f64::NEG_INFINITY, -3.0), -3.0);
    }
}
