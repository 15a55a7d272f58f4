//! Deterministic synthetic conflict-data generator and dataset splitting.
//!
//! Stands in for encoder outputs at desk scale: each class gets a fixed mean
//! direction per stream; the acoustic stream carries its class signal inside
//! a contiguous high-amplitude burst (so L2 saliency peaks on informative
//! frames) while the semantic stream spreads its class signal across every
//! frame. In conflict samples the semantic class differs from the acoustic
//! class, and the ground-truth label is always the acoustic class.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureSequence, StreamKind};
use crate::rng::{Stream, StreamRng};

/// Canonical 7-emotion vocabulary (alphabetical); other class counts get
/// generic names.
pub fn label_vocabulary(n_classes: usize) -> Vec<String> {
    if n_classes == 7 {
        ["angry", "disgust", "fear", "happy", "neutral", "sad", "surprised"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    } else {
        (0..n_classes).map(|i| format!("class_{i}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub n_classes: usize,
    pub samples_per_class: usize,
    /// Inclusive frame-count range for the acoustic stream.
    pub aco_frames: (usize, usize),
    /// Inclusive frame-count range for the semantic stream.
    pub sem_frames: (usize, usize),
    pub d_aco: usize,
    pub d_sem: usize,
    /// Scale of the per-frame semantic class signal relative to unit noise.
    pub snr: f64,
    /// Fraction of samples whose semantic class differs from the acoustic
    /// class; the label is always the acoustic class.
    pub conflict_fraction: f64,
    /// Length of the acoustic class-signal burst, in frames.
    pub burst_len: usize,
    /// Scale of the burst signal relative to unit noise.
    pub burst_amplitude: f64,
    pub seed: u64,
    /// Fraction of each class assigned to the train split.
    pub train_fraction: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_classes: 7,
            samples_per_class: 100,
            aco_frames: (80, 140),
            sem_frames: (40, 80),
            d_aco: 64,
            d_sem: 1280,
            snr: 1.0,
            conflict_fraction: 0.5,
            burst_len: 10,
            burst_amplitude: 6.0,
            seed: 42,
            train_fraction: 0.8,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 1 {
            return Err(Error::Config("n_classes must be >= 1".into()));
        }
        if self.samples_per_class < 1 {
            return Err(Error::Config("samples_per_class must be >= 1".into()));
        }
        for (name, (lo, hi)) in [("aco_frames", self.aco_frames), ("sem_frames", self.sem_frames)] {
            if lo < 1 || lo > hi {
                return Err(Error::Config(format!("{name}: invalid range {lo}..={hi}")));
            }
        }
        if self.d_aco < 1 || self.d_sem < 1 {
            return Err(Error::Config("feature dims must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.conflict_fraction) {
            return Err(Error::Config(format!(
                "conflict_fraction must be in [0, 1], got {}",
                self.conflict_fraction
            )));
        }
        if self.conflict_fraction > 0.0 && self.n_classes < 2 {
            return Err(Error::Config(
                "conflict_fraction > 0 requires at least 2 classes".into(),
            ));
        }
        if self.burst_len < 1 {
            return Err(Error::Config("burst_len must be >= 1".into()));
        }
        if !(0.0 < self.train_fraction && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction must be in (0, 1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub id: String,
    pub aco: FeatureSequence,
    pub sem: FeatureSequence,
    /// Ground-truth label = acoustic class.
    pub label: usize,
    /// Semantic class actually planted in the semantic stream.
    pub semantic_class: usize,
    pub conflict: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub labels: Vec<String>,
    pub samples: Vec<SynthSample>,
}

fn unit_direction(dim: usize, rng: &mut StreamRng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
    let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>()).max(1e-12);
    for x in &mut v {
        *x /= norm;
    }
    v
}

fn frame_count(range: (usize, usize), rng: &mut StreamRng) -> usize {
    range.0 + rng.below((range.1 - range.0 + 1) as u64) as usize
}

/// Fully deterministic given the spec (single sequential RNG stream).
pub fn generate_synthetic(spec: &SynthSpec) -> Result<SynthDataset> {
    spec.validate()?;
    let mut rng = StreamRng::new(spec.seed, Stream::Synth);

    let aco_dirs: Vec<Vec<f64>> =
        (0..spec.n_classes).map(|_| unit_direction(spec.d_aco, &mut rng)).collect();
    let sem_dirs: Vec<Vec<f64>> =
        (0..spec.n_classes).map(|_| unit_direction(spec.d_sem, &mut rng)).collect();

    // exact per-class conflict count so fractions 0 and 1 are literal
    let n_conflict =
        libm::round(spec.conflict_fraction * spec.samples_per_class as f64) as usize;

    let mut samples = Vec::with_capacity(spec.n_classes * spec.samples_per_class);
    for a in 0..spec.n_classes {
        for i in 0..spec.samples_per_class {
            let conflict = i < n_conflict;
            let s = if conflict {
                // uniform over classes != a
                let r = rng.below((spec.n_classes - 1) as u64) as usize;
                if r >= a {
                    r + 1
                } else {
                    r
                }
            } else {
                a
            };

            let t_aco = frame_count(spec.aco_frames, &mut rng);
            let t_sem = frame_count(spec.sem_frames, &mut rng);
            let burst_len = spec.burst_len.min(t_aco);
            let burst_start = rng.below((t_aco - burst_len + 1) as u64) as usize;

            let mut aco = Vec::with_capacity(t_aco * spec.d_aco);
            for r in 0..t_aco {
                let in_burst = r >= burst_start && r < burst_start + burst_len;
                for c in 0..spec.d_aco {
                    let mut v = rng.normal();
                    if in_burst {
                        v += spec.burst_amplitude * aco_dirs[a][c];
                    }
                    aco.push(v as f32);
                }
            }
            let mut sem = Vec::with_capacity(t_sem * spec.d_sem);
            for _ in 0..t_sem {
                for c in 0..spec.d_sem {
                    sem.push((rng.normal() + spec.snr * sem_dirs[s][c]) as f32);
                }
            }

            samples.push(SynthSample {
                id: format!("sample_{a:02}_{i:04}"),
                aco: FeatureSequence::new(StreamKind::Acoustic, t_aco, spec.d_aco, aco)?,
                sem: FeatureSequence::new(StreamKind::Semantic, t_sem, spec.d_sem, sem)?,
                label: a,
                semantic_class: s,
                conflict,
            });
        }
    }
    Ok(SynthDataset { labels: label_vocabulary(spec.n_classes), samples })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    Test,
}

/// Stratified split: each class is shuffled under the seed and cut at
/// round(fraction * class size), clamped so neither side of a class with at
/// least two samples is empty. Classes with fewer than two samples go
/// entirely to train and are reported as warnings.
pub fn stratified_split(
    labels: &[usize],
    n_classes: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<SplitTag>, Vec<String>)> {
    if !(0.0 < train_fraction && train_fraction < 1.0) {
        return Err(Error::Input(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut rng = StreamRng::new(seed, Stream::Shuffle);
    let mut tags = alloc::vec![SplitTag::Train; labels.len()];
    let mut warnings = Vec::new();
    for c in 0..n_classes {
        let mut idx: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == c)
            .map(|(i, _)| i)
            .collect();
        if idx.is_empty() {
            continue;
        }
        if idx.len() < 2 {
            warnings.push(format!(
                "class {c} has {} sample(s); assigned to train without a test share",
                idx.len()
            ));
            continue;
        }
        rng.shuffle(&mut idx);
        let n_train = (libm::round(train_fraction * idx.len() as f64) as usize)
            .clamp(1, idx.len() - 1);
        for &i in &idx[n_train..] {
            tags[i] = SplitTag::Test;
        }
    }
    Ok((tags, warnings))
}
