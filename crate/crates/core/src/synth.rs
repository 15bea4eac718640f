//! Synthetic heterogeneous subject streams.
//!
//! Each subject is a stream of thermal frames over an elliptical region. The field is
//! a smooth base profile plus a few modes whose coefficients follow an AR(1)
//! process: strongly varying before the transition frame (viable), damped and
//! shifted after it (unviable). Frames are masked, compressed and mapped to graph
//! spectral features, and each subject's features then get their own affine
//! distortion (scale, small rotation, shift) to model subject heterogeneity.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{param, Result};
use crate::eval::SubjectStream;
use crate::graph::{averaged_signal, GraphModel, GraphSignal};
use crate::onda::Label;
use crate::preprocess::{Compressor, Frame, Mask};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub frames_per_subject: usize,
    pub cadence_minutes: usize,
    /// First unviable frame.
    pub transition_frame: usize,
    /// Frames within this distance of the transition are not scored.
    pub exclusion_half_width: usize,
    pub frame_height: usize,
    pub frame_width: usize,
    pub compression_window: usize,
    /// Number of leading frames averaged to build each subject's graph.
    pub graph_window: usize,
    pub feature_dim: usize,
    pub n_modes: usize,
    /// Mode standard deviation before / after the transition.
    pub viable_spread: f64,
    pub unviable_spread: f64,
    /// AR(1) coefficient of the mode process.
    pub persistence: f64,
    /// Distance between the pre- and post-transition mode means.
    pub class_separation: f64,
    /// Pixel noise standard deviation.
    pub noise: f64,
    /// Spread of the per-subject baseline temperature.
    pub offset_spread: f64,
    /// Per-subject feature scale is drawn from `[1 - s, 1 + s]`.
    pub scale_spread: f64,
    /// Maximum angle of each random plane rotation applied to features.
    pub rotation: f64,
    /// Standard deviation of the per-subject feature shift, relative to the
    /// pooled per-feature standard deviation.
    pub shift: f64,
    /// Build each subject's graph from its own frames instead of one graph from
    /// the pooled average of every subject's leading frames.
    pub graph_per_subject: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_subjects: 4,
            frames_per_subject: 144,
            cadence_minutes: 10,
            transition_frame: 48,
            exclusion_half_width: 18,
            frame_height: 110,
            frame_width: 100,
            compression_window: 5,
            graph_window: 18,
            feature_dim: 50,
            n_modes: 6,
            viable_spread: 1.0,
            unviable_spread: 0.25,
            persistence: 0.8,
            class_separation: 1.0,
            noise: 0.05,
            offset_spread: 0.0,
            scale_spread: 0.3,
            rotation: 0.2,
            shift: 0.5,
            graph_per_subject: false,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 || self.frames_per_subject < 2 {
            return Err(param("need at least one subject and two frames per subject"));
        }
        if self.transition_frame == 0 || self.transition_frame >= self.frames_per_subject {
            return Err(param("transition frame must fall inside the stream"));
        }
        if self.graph_window == 0 || self.graph_window > self.frames_per_subject {
            return Err(param("graph window must be in 1..=frames_per_subject"));
        }
        if self.cadence_minutes == 0 || self.n_modes == 0 || self.feature_dim == 0 {
            return Err(param("cadence, mode count and feature dimension must be positive"));
        }
        if !(0.0..1.0).contains(&self.persistence) {
            return Err(param("persistence must be in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.scale_spread) {
            return Err(param("scale spread must be in [0, 1)"));
        }
        let nonneg = [
            self.viable_spread,
            self.unviable_spread,
            self.class_separation,
            self.noise,
            self.offset_spread,
            self.rotation,
            self.shift,
        ];
        if nonneg.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(param("spreads, noise and distortion levels must be non-negative"));
        }
        Ok(())
    }

    /// Elliptical region centered in the frame.
    pub fn mask(&self) -> Result<Mask> {
        let (h, w) = (self.frame_height, self.frame_width);
        let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
        let (ry, rx) = (h as f64 * 0.48, w as f64 * 0.48);
        let bits = (0..h * w)
            .map(|k| {
                let (r, c) = ((k / w) as f64, (k % w) as f64);
                ((r - cy) / ry).powi(2) + ((c - cx) / rx).powi(2) <= 1.0
            })
            .collect();
        Mask::new(h, w, bits)
    }

    pub fn labels(&self) -> Vec<Label> {
        (0..self.frames_per_subject)
            .map(|t| if t < self.transition_frame { 1 } else { -1 })
            .collect()
    }

    pub fn excluded(&self) -> std::ops::Range<usize> {
        let lo = self.transition_frame.saturating_sub(self.exclusion_half_width);
        let hi = (self.transition_frame + self.exclusion_half_width).min(self.frames_per_subject);
        lo..hi
    }
}

/// Raw frames of one subject.
#[derive(Debug, Clone)]
pub struct RawSubject {
    pub frames: Vec<Frame>,
    pub labels: Vec<Label>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Normalized base profile in `[0, 1]` over the frame: an off-center bump plus a
/// gentle gradient.
fn base_profile(cfg: &SynthConfig) -> DMatrix<f64> {
    let (h, w) = (cfg.frame_height as f64, cfg.frame_width as f64);
    let raw = DMatrix::from_fn(cfg.frame_height, cfg.frame_width, |r, c| {
        let y = r as f64 / h;
        let x = c as f64 / w;
        let bump = (-((y - 0.4).powi(2) + (x - 0.55).powi(2)) / 0.08).exp();
        bump + 0.3 * (1.0 - y)
    });
    let (lo, hi) = (raw.min(), raw.max());
    raw.map(|v| (v - lo) / (hi - lo))
}

pub fn synth_raw(cfg: &SynthConfig) -> Result<(Mask, Vec<RawSubject>)> {
    cfg.validate()?;
    let mask = cfg.mask()?;
    let base = base_profile(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = cfg.n_modes;
    // Class means of the mode coefficients, shared by all subjects.
    let viable_mean: Vec<f64> = (0..k).map(|_| normal(&mut rng)).collect();
    let direction: Vec<f64> = (0..k).map(|_| normal(&mut rng)).collect();
    let dir_norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    let unviable_mean: Vec<f64> = viable_mean
        .iter()
        .zip(&direction)
        .map(|(m, d)| m + cfg.class_separation * d / dir_norm)
        .collect();
    let innovation = (1.0 - cfg.persistence * cfg.persistence).sqrt();

    let mut subjects = Vec::with_capacity(cfg.n_subjects);
    for _ in 0..cfg.n_subjects {
        let level = 20.0 + cfg.offset_spread * normal(&mut rng);
        let amplitude = 3.0 * (1.0 + 0.1 * normal(&mut rng)).max(0.5);
        let mut state: Vec<f64> = (0..k).map(|_| normal(&mut rng)).collect();
        let mut frames = Vec::with_capacity(cfg.frames_per_subject);
        for t in 0..cfg.frames_per_subject {
            let viable = t < cfg.transition_frame;
            let (mean, spread) = if viable {
                (&viable_mean, cfg.viable_spread)
            } else {
                (&unviable_mean, cfg.unviable_spread)
            };
            for s in state.iter_mut() {
                *s = cfg.persistence * *s + innovation * normal(&mut rng);
            }
            let coeffs: Vec<f64> = (0..k).map(|j| mean[j] + spread * state[j]).collect();
            let mut pixels = DMatrix::zeros(cfg.frame_height, cfg.frame_width);
            for r in 0..cfg.frame_height {
                for c in 0..cfg.frame_width {
                    let b = base[(r, c)];
                    let modes: f64 = coeffs
                        .iter()
                        .enumerate()
                        .map(|(j, a)| a * ((j + 1) as f64 * std::f64::consts::PI * b).cos())
                        .sum();
                    pixels[(r, c)] =
                        level + amplitude * b + modes + cfg.noise * normal(&mut rng);
                }
            }
            frames.push(Frame::new(pixels)?);
        }
        subjects.push(RawSubject {
            frames,
            labels: cfg.labels(),
        });
    }
    Ok((mask, subjects))
}

/// Random orthogonal matrix built from plane rotations with angles in `[-max, max]`.
fn random_rotation(dim: usize, max_angle: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut q = DMatrix::identity(dim, dim);
    if max_angle == 0.0 || dim < 2 {
        return q;
    }
    for i in 0..dim - 1 {
        let theta = rng.gen_range(-max_angle..=max_angle);
        let (s, c) = theta.sin_cos();
        for row in 0..dim {
            let a = q[(row, i)];
            let b = q[(row, i + 1)];
            q[(row, i)] = c * a - s * b;
            q[(row, i + 1)] = s * a + c * b;
        }
    }
    q
}

/// Feature streams for every subject.
pub fn synth_streams(cfg: &SynthConfig) -> Result<Vec<SubjectStream>> {
    let (mask, raw) = synth_raw(cfg)?;
    let comp = Compressor::new(&mask, cfg.compression_window)?;
    if cfg.feature_dim > comp.grid().vertex_count() {
        return Err(param(format!(
            "feature dimension {} exceeds the {} graph vertices",
            cfg.feature_dim,
            comp.grid().vertex_count()
        )));
    }
    let signals = raw
        .iter()
        .map(|subject| {
            subject
                .frames
                .iter()
                .enumerate()
                .map(|(t, f)| comp.apply(f, t))
                .collect::<Result<Vec<GraphSignal>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut features = Vec::with_capacity(raw.len());
    if cfg.graph_per_subject {
        for s in &signals {
            let model = GraphModel::from_signals(comp.grid().clone(), s, cfg.graph_window, None)?;
            features.push(model.features(s, cfg.feature_dim)?);
        }
    } else {
        let averages = signals
            .iter()
            .enumerate()
            .map(|(i, s)| GraphSignal::new(averaged_signal(s, cfg.graph_window)?, i))
            .collect::<Result<Vec<_>>>()?;
        let model =
            GraphModel::from_signals(comp.grid().clone(), &averages, averages.len(), None)?;
        for s in &signals {
            features.push(model.features(s, cfg.feature_dim)?);
        }
    }

    // Distortion scale is relative to the pooled per-feature spread.
    let d = cfg.feature_dim;
    let total: usize = features.iter().map(|f| f.nrows()).sum();
    let mut mean = DVector::zeros(d);
    for f in &features {
        for row in f.row_iter() {
            mean += row.transpose();
        }
    }
    mean /= total as f64;
    let mut std = DVector::zeros(d);
    for f in &features {
        for row in f.row_iter() {
            let diff = row.transpose() - &mean;
            std += diff.component_mul(&diff);
        }
    }
    let std = (std / total as f64).map(f64::sqrt);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_d157_0e7e_0001);
    let mut out = Vec::with_capacity(features.len());
    for (i, (f, subject)) in features.into_iter().zip(raw).enumerate() {
        let scale = 1.0 + cfg.scale_spread * rng.gen_range(-1.0..=1.0);
        let rot = random_rotation(d, cfg.rotation, &mut rng);
        let shift = DVector::from_fn(d, |j, _| cfg.shift * std[j] * normal(&mut rng));
        let mut distorted = DMatrix::zeros(f.nrows(), d);
        for (t, row) in f.row_iter().enumerate() {
            let centered = row.transpose() - &mean;
            let y = &rot * centered * scale + &mean + &shift;
            distorted.set_row(t, &y.transpose());
        }
        out.push(SubjectStream::new(
            format!("subject{}", i + 1),
            distorted,
            subject.labels,
            cfg.cadence_minutes,
            cfg.excluded(),
        )?);
    }
    Ok(out)
}
