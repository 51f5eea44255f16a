use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::label::{appearance_label, encode_multiphase_label};
use crate::error::{Error, Result};
use crate::tensor::{ClassMap, Tensor};

/// Parameters of the synthetic multi-temporal building-change scenes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub phases: usize,
    pub bands: usize,
    /// Inclusive range of buildings per scene.
    pub objects_min: usize,
    pub objects_max: usize,
    /// Inclusive range of rectangle side lengths in pixels.
    pub object_min_size: usize,
    pub object_max_size: usize,
    /// Probability that a building already exists in phase 1.
    pub initial_presence: f64,
    /// Per-phase probability that an absent building appears.
    pub appear_prob: f64,
    /// Per-phase probability that a present building disappears.
    pub disappear_prob: f64,
    /// Peak amplitude of the low-frequency background texture.
    pub texture_amplitude: f64,
    /// Number of sinusoidal components in the background texture.
    pub texture_waves: usize,
    /// Standard deviation of additive per-pixel noise.
    pub noise_sigma: f64,
    /// Maximum per-axis translation (px) of phases 2..T relative to phase 1.
    pub jitter: usize,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            width: 64,
            height: 64,
            phases: 2,
            bands: 3,
            objects_min: 2,
            objects_max: 5,
            object_min_size: 8,
            object_max_size: 20,
            initial_presence: 0.5,
            appear_prob: 0.5,
            disappear_prob: 0.3,
            texture_amplitude: 0.08,
            texture_waves: 4,
            noise_sigma: 0.05,
            jitter: 2,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::config("width/height", "scene must be non-empty"));
        }
        if self.phases < 2 || self.phases > 8 {
            return Err(Error::config("phases", format!("must be in 2..=8, got {}", self.phases)));
        }
        if self.bands == 0 {
            return Err(Error::config("bands", "must be positive"));
        }
        if self.object_min_size == 0 {
            return Err(Error::config("object_min_size", "objects must have positive size"));
        }
        if self.object_min_size > self.object_max_size {
            return Err(Error::config("object_min_size", "exceeds object_max_size"));
        }
        if self.object_max_size > self.width.min(self.height) {
            return Err(Error::config("object_max_size", "objects must fit in the scene"));
        }
        if self.objects_min > self.objects_max {
            return Err(Error::config("objects_min", "exceeds objects_max"));
        }
        for (name, p) in [
            ("initial_presence", self.initial_presence),
            ("appear_prob", self.appear_prob),
            ("disappear_prob", self.disappear_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(name, format!("probability {p} outside [0, 1]")));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::config("noise_sigma", "must be finite and non-negative"));
        }
        if !(self.texture_amplitude >= 0.0 && self.texture_amplitude.is_finite()) {
            return Err(Error::config("texture_amplitude", "must be finite and non-negative"));
        }
        if 4 * self.jitter >= self.width.min(self.height) {
            return Err(Error::config("jitter", "must be below a quarter of the smaller scene side"));
        }
        Ok(())
    }

    /// Number of label classes: 2 for two phases (changed / unchanged),
    /// `2^T` otherwise.
    pub fn label_classes(&self) -> usize {
        if self.phases == 2 {
            2
        } else {
            1 << self.phases
        }
    }
}

/// One axis-aligned building with its per-phase existence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
    pub color: Vec<f32>,
    pub present: Vec<bool>,
}

impl Building {
    pub fn contains(&self, x: isize, y: isize) -> bool {
        x >= self.x as isize
            && y >= self.y as isize
            && x < (self.x + self.width) as isize
            && y < (self.y + self.height) as isize
    }
}

/// A multi-temporal image stack with its label.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// `T×bands×H×W`, values in `[0, 1]`.
    pub images: Tensor<f32>,
    /// `1×H×W`; binary (background → building) for two phases, the
    /// multi-phase encoding otherwise.
    pub label: ClassMap,
    /// Per-phase building masks in the phase-1 frame; empty when the sample
    /// was loaded from disk.
    pub masks: Vec<ClassMap>,
}

impl Sample {
    pub fn phases(&self) -> usize {
        self.images.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.images.shape()[2]
    }

    pub fn width(&self) -> usize {
        self.images.shape()[3]
    }
}

/// Everything the generator decided for one scene.
#[derive(Clone, Debug)]
pub struct Scene {
    pub buildings: Vec<Building>,
    /// `(dx, dy)` translation applied to each phase; phase 1 is `(0, 0)`.
    pub offsets: Vec<(isize, isize)>,
    pub sample: Sample,
}

struct Wave {
    amp: f64,
    fx: f64,
    fy: f64,
    phase: f64,
}

/// Per-index RNG: the spec seed selects the key, the sample index the stream.
fn scene_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Generates scene `index` of the dataset described by `spec`.
pub fn generate_scene(spec: &SceneSpec, index: usize) -> Result<Scene> {
    spec.validate()?;
    let mut rng = scene_rng(spec.seed, index as u64);
    let (w, h, bands, phases) = (spec.width, spec.height, spec.bands, spec.phases);

    let base: Vec<f64> = (0..bands).map(|_| rng.gen_range(0.25..0.45)).collect();
    let waves: Vec<Vec<Wave>> = (0..bands)
        .map(|_| {
            (0..spec.texture_waves)
                .map(|_| Wave {
                    amp: rng.gen_range(0.0..1.0) * spec.texture_amplitude / spec.texture_waves.max(1) as f64,
                    fx: rng.gen_range(-0.1..0.1),
                    fy: rng.gen_range(-0.1..0.1),
                    phase: rng.gen_range(0.0..std::f64::consts::TAU),
                })
                .collect()
        })
        .collect();

    let count = rng.gen_range(spec.objects_min..=spec.objects_max);
    let mut buildings = Vec::with_capacity(count);
    for _ in 0..count {
        let bw = rng.gen_range(spec.object_min_size..=spec.object_max_size);
        let bh = rng.gen_range(spec.object_min_size..=spec.object_max_size);
        let x = rng.gen_range(0..=w - bw);
        let y = rng.gen_range(0..=h - bh);
        let tone = rng.gen_range(0.6..0.9);
        let color = (0..bands)
            .map(|_| (tone + rng.gen_range(-0.05..0.05)) as f32)
            .collect();
        let mut present = Vec::with_capacity(phases);
        let mut alive = rng.gen_bool(spec.initial_presence);
        present.push(alive);
        for _ in 1..phases {
            alive = if alive {
                !rng.gen_bool(spec.disappear_prob)
            } else {
                rng.gen_bool(spec.appear_prob)
            };
            present.push(alive);
        }
        buildings.push(Building {
            x,
            y,
            width: bw,
            height: bh,
            color,
            present,
        });
    }

    let j = spec.jitter as isize;
    let offsets: Vec<(isize, isize)> = (0..phases)
        .map(|t| {
            if t == 0 || j == 0 {
                (0, 0)
            } else {
                (rng.gen_range(-j..=j), rng.gen_range(-j..=j))
            }
        })
        .collect();

    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::config("noise_sigma", e.to_string()))?;
    let mut images = vec![0f32; phases * bands * h * w];
    for (t, &(dx, dy)) in offsets.iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                let (sx, sy) = (x as isize + dx, y as isize + dy);
                let roof = buildings.iter().rev().find(|b| b.present[t] && b.contains(sx, sy));
                for b in 0..bands {
                    let v = match roof {
                        Some(r) => f64::from(r.color[b]),
                        None => {
                            base[b]
                                + waves[b]
                                    .iter()
                                    .map(|wv| {
                                        wv.amp
                                            * (std::f64::consts::TAU * (wv.fx * sx as f64 + wv.fy * sy as f64)
                                                + wv.phase)
                                                .cos()
                                    })
                                    .sum::<f64>()
                        }
                    };
                    let v = if spec.noise_sigma > 0.0 { v + noise.sample(&mut rng) } else { v };
                    images[((t * bands + b) * h + y) * w + x] = v.clamp(0.0, 1.0) as f32;
                }
            }
        }
    }

    let masks = phase_masks(&buildings, phases, w, h);
    let label = if phases == 2 {
        appearance_label(&masks)?
    } else {
        encode_multiphase_label(&masks)?
    };
    Ok(Scene {
        buildings,
        offsets,
        sample: Sample {
            images: Tensor::new([phases, bands, h, w], images)?,
            label,
            masks,
        },
    })
}

/// Union of the buildings present in each phase, in the phase-1 frame.
pub fn phase_masks(buildings: &[Building], phases: usize, width: usize, height: usize) -> Vec<ClassMap> {
    (0..phases)
        .map(|t| {
            let mut m = ClassMap::filled(1, height, width, 0);
            for b in buildings.iter().filter(|b| b.present[t]) {
                for y in b.y..b.y + b.height {
                    m.classes[y * width + b.x..y * width + b.x + b.width].fill(1);
                }
            }
            m
        })
        .collect()
}

/// `n` scenes with indices `0..n`.
pub fn generate_dataset(spec: &SceneSpec, n: usize) -> Result<Vec<Sample>> {
    if n == 0 {
        return Err(Error::InvalidArgument("generate_dataset: n must be at least 1".into()));
    }
    (0..n).map(|i| generate_scene(spec, i).map(|s| s.sample)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation() {
        let mut s = SceneSpec {
            object_min_size: 0,
            ..Default::default()
        };
        assert!(generate_dataset(&s, 1).is_err());
        s.object_min_size = 4;
        s.jitter = 16;
        assert!(s.validate().is_err());
        s.jitter = 2;
        s.appear_prob = 1.5;
        assert!(s.validate().is_err());
        assert!(generate_dataset(&SceneSpec::default(), 0).is_err());
    }

    #[test]
    fn values_in_unit_range() {
        let spec = SceneSpec {
            noise_sigma: 0.4,
            ..Default::default()
        };
        let s = generate_dataset(&spec, 3).unwrap();
        for sample in &s {
            assert!(sample.images.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn phase_one_is_reference_frame() {
        let scene = generate_scene(&SceneSpec::default(), 7).unwrap();
        assert_eq!(scene.offsets[0], (0, 0));
        assert!(scene.offsets.iter().all(|&(dx, dy)| dx.abs() <= 2 && dy.abs() <= 2));
    }
}
