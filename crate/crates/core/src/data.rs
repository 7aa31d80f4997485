//! Toy datasets, random walks and IDX image subsets.

use crate::nn::randn;
use crate::{Error, Mat, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ToyKind {
    Mog5,
    TwoMoons,
    Gauss,
    Mix1,
    Mix2,
    Mix3,
    Uniform5d,
}

impl ToyKind {
    pub const ALL: [ToyKind; 7] = [
        ToyKind::Mog5,
        ToyKind::TwoMoons,
        ToyKind::Gauss,
        ToyKind::Mix1,
        ToyKind::Mix2,
        ToyKind::Mix3,
        ToyKind::Uniform5d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ToyKind::Mog5 => "MOG5",
            ToyKind::TwoMoons => "TWO_MOONS",
            ToyKind::Gauss => "GAUSS",
            ToyKind::Mix1 => "MIX1",
            ToyKind::Mix2 => "MIX2",
            ToyKind::Mix3 => "MIX3",
            ToyKind::Uniform5d => "UNIFORM5D",
        }
    }

    pub fn dim(self) -> usize {
        if self == ToyKind::Uniform5d {
            5
        } else {
            2
        }
    }

    pub fn default_n(self) -> usize {
        if self == ToyKind::Uniform5d {
            10_000
        } else {
            2000
        }
    }
}

impl FromStr for ToyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.to_ascii_uppercase().replace('-', "_");
        ToyKind::ALL
            .into_iter()
            .find(|k| k.name() == up)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown dataset kind '{s}'")))
    }
}

/// Per-dimension affine map applied after generation: stored = raw·scale + shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

impl Normalization {
    pub fn identity(d: usize) -> Self {
        Self {
            scale: vec![1.0; d],
            shift: vec![0.0; d],
        }
    }

    /// Maps every column of `x` onto [0, 1] (constant columns go to 0.5).
    pub fn unit_box(x: &Mat) -> Self {
        let d = x.ncols();
        let mut scale = vec![1.0; d];
        let mut shift = vec![0.0; d];
        for j in 0..d {
            let c = x.column(j);
            let (lo, hi) = (c.min(), c.max());
            if hi > lo {
                scale[j] = 1.0 / (hi - lo);
                shift[j] = -lo * scale[j];
            } else {
                shift[j] = 0.5 - lo;
            }
        }
        Self { scale, shift }
    }

    pub fn apply(&self, x: &Mat) -> Mat {
        Mat::from_fn(x.nrows(), x.ncols(), |i, j| {
            x[(i, j)] * self.scale[j] + self.shift[j]
        })
    }

    pub fn invert(&self, x: &Mat) -> Mat {
        Mat::from_fn(x.nrows(), x.ncols(), |i, j| {
            (x[(i, j)] - self.shift[j]) / self.scale[j]
        })
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Mat,
    pub name: String,
    pub seed: u64,
    pub normalization: Normalization,
}

impl Dataset {
    pub fn new(
        samples: Mat,
        name: impl Into<String>,
        seed: u64,
        normalization: Normalization,
    ) -> Result<Self> {
        if samples.nrows() < 2 {
            return Err(Error::InvalidArgument(
                "a dataset needs at least two samples".into(),
            ));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("dataset samples".into()));
        }
        if normalization.scale.len() != samples.ncols()
            || normalization.shift.len() != samples.ncols()
            || normalization
                .scale
                .iter()
                .any(|s| *s == 0.0 || !s.is_finite())
        {
            return Err(Error::InvalidArgument(
                "normalization is not invertible".into(),
            ));
        }
        Ok(Self {
            samples,
            name: name.into(),
            seed,
            normalization,
        })
    }

    pub fn n(&self) -> usize {
        self.samples.nrows()
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    /// Writes the samples as CSV with a header `x0,x1,...`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header: Vec<String> = (0..self.dim()).map(|j| format!("x{j}")).collect();
        writeln!(f, "{}", header.join(","))?;
        for i in 0..self.n() {
            let row: Vec<String> = self.samples.row(i).iter().map(|x| x.to_string()).collect();
            writeln!(f, "{}", row.join(","))?;
        }
        f.flush()?;
        Ok(())
    }
}

/// Component parameters of a MIX dataset, before normalization.
#[derive(Debug, Clone)]
pub struct MixSpec {
    pub means: Vec<[f64; 2]>,
    pub variances: Vec<f64>,
}

pub const MIX_COMPONENTS: usize = 20;
pub const MIX_VAR_RANGE: (f64, f64) = (0.2, 0.8);

fn mix_salt(kind: ToyKind) -> u64 {
    match kind {
        ToyKind::Mix1 => 1,
        ToyKind::Mix2 => 2,
        _ => 3,
    }
}

/// Draws the 20 MIX components. Means are uniform in [−5, 5]²; the three
/// kinds differ only in how the stream is salted.
pub fn mix_spec(kind: ToyKind, seed: u64) -> MixSpec {
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(mix_salt(kind))));
    let mut means = Vec::with_capacity(MIX_COMPONENTS);
    let mut variances = Vec::with_capacity(MIX_COMPONENTS);
    for _ in 0..MIX_COMPONENTS {
        means.push([rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]);
        variances.push(rng.random_range(MIX_VAR_RANGE.0..=MIX_VAR_RANGE.1));
    }
    MixSpec { means, variances }
}

pub const MOG5_STD: f64 = 0.05;
pub const MOON_RADIUS: f64 = 1.0;
pub const MOON_OFFSET: f64 = 0.5;
pub const MOON_JITTER: f64 = 0.05;

/// MOG5 centres: the four corners and the middle of the unit box.
pub const MOG5_CENTERS: [[f64; 2]; 5] =
    [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0], [0.5, 0.5]];

pub fn gen_toy(kind: ToyKind, n: usize, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::InvalidArgument("n must be at least 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = Normal::new(0.0, 1.0).unwrap();
    let (raw, norm) = match kind {
        ToyKind::Mog5 => {
            let mut x = Mat::zeros(n, 2);
            for i in 0..n {
                let c = MOG5_CENTERS[rng.random_range(0..5)];
                x[(i, 0)] = c[0] + MOG5_STD * std.sample(&mut rng);
                x[(i, 1)] = c[1] + MOG5_STD * std.sample(&mut rng);
            }
            (x, Normalization::identity(2))
        }
        ToyKind::TwoMoons => {
            let mut x = Mat::zeros(n, 2);
            for i in 0..n {
                let t = rng.random_range(0.0..std::f64::consts::PI);
                let (a, b) = if i % 2 == 0 {
                    (MOON_RADIUS * t.cos(), MOON_RADIUS * t.sin())
                } else {
                    (
                        MOON_RADIUS * (1.0 - t.cos()),
                        MOON_OFFSET - MOON_RADIUS * t.sin(),
                    )
                };
                x[(i, 0)] = a + MOON_JITTER * std.sample(&mut rng);
                x[(i, 1)] = b + MOON_JITTER * std.sample(&mut rng);
            }
            let nm = Normalization::unit_box(&x);
            (x, nm)
        }
        ToyKind::Gauss => {
            // Centred in the unit box; std 0.1 keeps almost all mass inside.
            let x = randn(n, 2, &mut rng).map(|z| 0.5 + 0.1 * z);
            (x, Normalization::identity(2))
        }
        ToyKind::Mix1 | ToyKind::Mix2 | ToyKind::Mix3 => {
            let spec = mix_spec(kind, seed);
            let mut x = Mat::zeros(n, 2);
            for i in 0..n {
                let c = rng.random_range(0..MIX_COMPONENTS);
                let s = spec.variances[c].sqrt();
                x[(i, 0)] = spec.means[c][0] + s * std.sample(&mut rng);
                x[(i, 1)] = spec.means[c][1] + s * std.sample(&mut rng);
            }
            let nm = Normalization::unit_box(&x);
            (x, nm)
        }
        ToyKind::Uniform5d => {
            let x = Mat::from_fn(n, 5, |_, _| rng.random_range(0.0..1.0));
            (x, Normalization::identity(5))
        }
    };
    let samples = norm.apply(&raw);
    Dataset::new(samples, kind.name(), seed, norm)
}

/// Ensemble of 1-D random walks stored as trials × length positions.
#[derive(Debug, Clone)]
pub struct WalkEnsemble {
    pub positions: Mat,
    pub step_std: f64,
    pub divisor: f64,
}

pub const WALK_DIVISOR: f64 = 30.0;

impl WalkEnsemble {
    pub fn trials(&self) -> usize {
        self.positions.nrows()
    }

    pub fn length(&self) -> usize {
        self.positions.ncols()
    }

    /// Increments including the first step from 0.
    pub fn increments(&self) -> Mat {
        let (r, c) = self.positions.shape();
        Mat::from_fn(r, c, |i, t| {
            let prev = if t == 0 {
                0.0
            } else {
                self.positions[(i, t - 1)]
            };
            self.positions[(i, t)] - prev
        })
    }

    /// (position_t, position_{t+1}) pairs over all trials, as two N×1 matrices.
    pub fn transitions(&self) -> (Mat, Mat) {
        let (r, c) = self.positions.shape();
        let n = r * c;
        let mut from = Mat::zeros(n, 1);
        let mut to = Mat::zeros(n, 1);
        let mut k = 0;
        for i in 0..r {
            for t in 0..c {
                from[(k, 0)] = if t == 0 {
                    0.0
                } else {
                    self.positions[(i, t - 1)]
                };
                to[(k, 0)] = self.positions[(i, t)];
                k += 1;
            }
        }
        (from, to)
    }
}

pub fn simulate_random_walk(trials: usize, length: usize, seed: u64) -> Result<WalkEnsemble> {
    if trials < 1 || length < 1 {
        return Err(Error::InvalidArgument(
            "trials and length must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inc = randn(trials, length, &mut rng);
    let mut positions = Mat::zeros(trials, length);
    for i in 0..trials {
        let mut acc = 0.0;
        for t in 0..length {
            acc += inc[(i, t)];
            positions[(i, t)] = acc / WALK_DIVISOR;
        }
    }
    Ok(WalkEnsemble {
        positions,
        step_std: 1.0,
        divisor: WALK_DIVISOR,
    })
}

const IDX_UBYTE_MAGIC: u32 = 0x0000_0803;
/// Raw float files start with this magic, then rows and cols (u32 BE), then
/// rows·cols little-endian f32 values already in [0, 1].
pub const RAW_F32_MAGIC: u32 = 0x4D41_5446; // "MATF"

fn be_u32(b: &[u8], at: usize) -> Result<u32> {
    b.get(at..at + 4)
        .map(|s| u32::from_be_bytes([s[0], s[1], s[2], s[3]]))
        .ok_or_else(|| Error::Malformed("truncated header".into()))
}

/// Reads the first `count` images of an IDX (unsigned byte, 3-D) file or a
/// raw float matrix file, flattened and scaled to [0, 1].
pub fn load_idx_subset(path: &Path, count: usize) -> Result<Dataset> {
    let bytes = std::fs::read(path)?;
    let magic = be_u32(&bytes, 0)?;
    let (cols, samples) = if magic == IDX_UBYTE_MAGIC {
        let n = be_u32(&bytes, 4)? as usize;
        let h = be_u32(&bytes, 8)? as usize;
        let w = be_u32(&bytes, 12)? as usize;
        let d = h * w;
        if count > n {
            return Err(Error::InvalidArgument(format!(
                "asked for {count} images, file holds {n}"
            )));
        }
        let body = &bytes[16..];
        if body.len() < n * d {
            return Err(Error::Malformed(format!(
                "expected {} pixel bytes, found {}",
                n * d,
                body.len()
            )));
        }
        let m = Mat::from_fn(count, d, |i, j| body[i * d + j] as f64 / 255.0);
        (d, m)
    } else if magic == RAW_F32_MAGIC {
        let n = be_u32(&bytes, 4)? as usize;
        let d = be_u32(&bytes, 8)? as usize;
        if count > n {
            return Err(Error::InvalidArgument(format!(
                "asked for {count} rows, file holds {n}"
            )));
        }
        let body = &bytes[12..];
        if body.len() < n * d * 4 {
            return Err(Error::Malformed("raw float body is truncated".into()));
        }
        let m = Mat::from_fn(count, d, |i, j| {
            let o = (i * d + j) * 4;
            f32::from_le_bytes([body[o], body[o + 1], body[o + 2], body[o + 3]]) as f64
        });
        if m.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::Malformed("raw float values outside [0, 1]".into()));
        }
        (d, m)
    } else {
        return Err(Error::Malformed(format!(
            "unknown magic number {magic:#010x}"
        )));
    };
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(samples, name, 0, Normalization::identity(cols))
}

/// Writes images in IDX unsigned-byte format (used for fixtures).
pub fn write_idx(path: &Path, images: &[Vec<u8>], h: usize, w: usize) -> Result<()> {
    let mut out = Vec::with_capacity(16 + images.len() * h * w);
    for v in [IDX_UBYTE_MAGIC, images.len() as u32, h as u32, w as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for img in images {
        if img.len() != h * w {
            return Err(Error::ShapeMismatch(format!(
                "image has {} pixels, expected {}",
                img.len(),
                h * w
            )));
        }
        out.extend_from_slice(img);
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Stand-in for a 28×28 digit subset: each sample is one of ten smooth
/// stroke templates, randomly shifted by up to two pixels, with blurred
/// intensity noise, clipped to [0, 1].
pub fn image_surrogate(n: usize, side: usize, seed: u64) -> Result<Dataset> {
    if n < 2 || side < 4 {
        return Err(Error::InvalidArgument("need n ≥ 2 and side ≥ 4".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = side as f64;
    // Each template is a few Gaussian blobs placed along a random stroke.
    let templates: Vec<Vec<(f64, f64)>> = (0..10)
        .map(|_| {
            let (mut px, mut py) = (
                rng.random_range(0.3..0.7) * s,
                rng.random_range(0.25..0.45) * s,
            );
            let mut pts = Vec::new();
            for _ in 0..8 {
                pts.push((px, py));
                px = (px + rng.random_range(-0.12..0.12) * s).clamp(0.2 * s, 0.8 * s);
                py = (py + rng.random_range(0.0..0.08) * s).clamp(0.2 * s, 0.8 * s);
            }
            pts
        })
        .collect();
    let width = 0.06 * s;
    let d = side * side;
    let mut x = Mat::zeros(n, d);
    for i in 0..n {
        let t = &templates[rng.random_range(0..10)];
        let (dx, dy) = (rng.random_range(-2.0..=2.0), rng.random_range(-2.0..=2.0));
        let gain = rng.random_range(0.8..1.2);
        for r in 0..side {
            for c in 0..side {
                let mut v = 0.0f64;
                for (px, py) in t {
                    let e = ((c as f64 - px - dx).powi(2) + (r as f64 - py - dy).powi(2))
                        / (2.0 * width * width);
                    v = v.max((-e).exp());
                }
                x[(i, r * side + c)] =
                    (gain * v + 0.02 * rng.random_range(-1.0..1.0)).clamp(0.0, 1.0);
            }
        }
    }
    Dataset::new(x, "image_surrogate", seed, Normalization::identity(d))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_parse_and_have_dims() {
        for k in ToyKind::ALL {
            assert_eq!(k.name().parse::<ToyKind>().unwrap(), k);
            let ds = gen_toy(k, 50, 3).unwrap();
            assert_eq!(ds.dim(), k.dim());
            assert!(ds.samples.iter().all(|x| x.is_finite()));
        }
        assert!("nope".parse::<ToyKind>().is_err());
        assert!(gen_toy(ToyKind::Gauss, 1, 0).is_err());
    }

    #[test]
    fn normalization_inverts() {
        let ds = gen_toy(ToyKind::Mix2, 300, 9).unwrap();
        let raw = ds.normalization.invert(&ds.samples);
        assert!((ds.normalization.apply(&raw) - &ds.samples).amax() < 1e-12);
        assert!(ds.samples.min() >= -1e-12 && ds.samples.max() <= 1.0 + 1e-12);
    }

    #[test]
    fn walk_shapes() {
        let w = simulate_random_walk(3, 4, 1).unwrap();
        assert_eq!(w.positions.shape(), (3, 4));
        let inc = w.increments();
        let back: f64 = inc.row(1).sum();
        assert!((back - w.positions[(1, 3)]).abs() < 1e-12);
        assert!(simulate_random_walk(0, 3, 1).is_err());
    }
}
