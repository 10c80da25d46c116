//! Synthetic segmentation data: irregular bright ellipses on a dark noisy
//! background, binary PGM mask/image files, flip/translate augmentation and
//! multi-scale resampling.

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{resize_bilinear_plane, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::Path;

/// One image/mask pair; image values in [0,1], mask strictly binary.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: Tensor,
    pub mask: Tensor,
}

impl Sample {
    pub fn side(&self) -> usize {
        self.image.shape[1]
    }
}

/// Generator parameters. Foreground must land between 3% and 30% of the
/// pixels; a sample violating this is regenerated under a new sub-seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub size: usize,
    pub count: usize,
    pub seed: u64,
    pub noise_sigma: f64,
    pub blob_count_range: (usize, usize),
    pub intensity_contrast: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            size: 64,
            count: 250,
            seed: 42,
            noise_sigma: 0.08,
            blob_count_range: (1, 2),
            intensity_contrast: 0.35,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 || self.size % 16 != 0 {
            return Err(Error::InvalidArgument {
                op: "gen_synthetic",
                message: format!("size must be a positive multiple of 16, got {}", self.size),
            });
        }
        if self.count == 0 {
            return Err(Error::InvalidArgument {
                op: "gen_synthetic",
                message: "count must be at least 1".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Dataset {
    pub fn split(&self, name: &str) -> Option<&[Sample]> {
        match name {
            "train" => Some(&self.train),
            "val" => Some(&self.val),
            "test" => Some(&self.test),
            _ => None,
        }
    }
}

const FG_MIN: f64 = 0.03;
const FG_MAX: f64 = 0.30;

struct Blob {
    cx: f64,
    cy: f64,
    ax: f64,
    ay: f64,
    rot: f64,
    level: f64,
    harmonics: [(f64, f64); 3],
}

impl Blob {
    /// Normalized radius and boundary radius at a pixel center.
    fn radius_at(&self, x: f64, y: f64) -> (f64, f64) {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let (s, c) = self.rot.sin_cos();
        let u = (dx * c + dy * s) / self.ax;
        let v = (-dx * s + dy * c) / self.ay;
        let rho = (u * u + v * v).sqrt();
        let phi = v.atan2(u);
        let mut boundary = 1.0;
        for (h, &(amp, psi)) in self.harmonics.iter().enumerate() {
            boundary += amp * ((h as f64 + 2.0) * phi + psi).sin();
        }
        (rho, boundary)
    }
}

fn draw_blob(rng: &mut ChaCha8Rng, size: f64) -> Blob {
    let mut harmonics = [(0.0, 0.0); 3];
    for (h, slot) in harmonics.iter_mut().enumerate() {
        *slot = (
            rng.random_range(0.0..0.12) / (h as f64 + 1.0),
            rng.random_range(0.0..TAU),
        );
    }
    Blob {
        cx: rng.random_range(0.25..0.75) * size,
        cy: rng.random_range(0.25..0.75) * size,
        ax: rng.random_range(0.10..0.24) * size,
        ay: rng.random_range(0.10..0.24) * size,
        rot: rng.random_range(0.0..PI),
        level: rng.random_range(0.7..1.0),
        harmonics,
    }
}

fn gen_sample(spec: &SynthSpec, index: u64) -> Sample {
    let base_seed = rng::derive_seed(spec.seed, "sample", index);
    let n = spec.size;
    let mut attempt = 0u64;
    loop {
        let mut rng = rng::stream(base_seed, "attempt", attempt);
        let background = rng.random_range(0.15..0.25);
        let nblobs = rng.random_range(spec.blob_count_range.0..=spec.blob_count_range.1);
        let blobs: Vec<Blob> = (0..nblobs).map(|_| draw_blob(&mut rng, n as f64)).collect();

        let mut mask = vec![0.0f64; n * n];
        let mut fg = vec![0.0f64; n * n];
        // soft edge width in normalized radius units: fuzzy image boundary,
        // exact mask boundary
        let soft = 0.15;
        for r in 0..n {
            for c in 0..n {
                let (y, x) = (r as f64 + 0.5, c as f64 + 0.5);
                let mut best_alpha = 0.0f64;
                let mut inside = false;
                for blob in &blobs {
                    let (rho, boundary) = blob.radius_at(x, y);
                    if rho <= boundary {
                        inside = true;
                    }
                    let alpha = ((boundary - rho) / soft + 0.5).clamp(0.0, 1.0) * blob.level;
                    best_alpha = best_alpha.max(alpha);
                }
                if inside {
                    mask[r * n + c] = 1.0;
                }
                fg[r * n + c] = best_alpha;
            }
        }
        let fraction = mask.iter().sum::<f64>() / (n * n) as f64;
        if !(FG_MIN..=FG_MAX).contains(&fraction) {
            attempt += 1;
            continue;
        }

        let normal = Normal::new(0.0, spec.noise_sigma).expect("positive sigma");
        let image: Vec<f64> = fg
            .iter()
            .map(|&a| {
                let clean = background + spec.intensity_contrast * a;
                (clean + normal.sample(&mut rng)).clamp(0.0, 1.0)
            })
            .collect();

        return Sample {
            id: format!("{index:04}"),
            image: Tensor::new(vec![1, n, n], image),
            mask: Tensor::new(vec![1, n, n], mask),
        };
    }
}

/// Generate `count` samples and split them 8:1:1 after a seeded shuffle.
/// A pure function of the spec: identical specs give identical datasets.
pub fn gen_synthetic(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let samples: Vec<Sample> = (0..spec.count as u64).map(|i| gen_sample(spec, i)).collect();

    let mut order: Vec<usize> = (0..spec.count).collect();
    let mut rng = rng::stream(spec.seed, "split", 0);
    // Fisher-Yates
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let n_train = spec.count * 8 / 10;
    let n_val = spec.count / 10;
    let pick = |ids: &[usize]| -> Vec<Sample> {
        let mut sorted: Vec<usize> = ids.to_vec();
        sorted.sort_unstable();
        sorted.iter().map(|&i| samples[i].clone()).collect()
    };
    Ok(Dataset {
        train: pick(&order[..n_train]),
        val: pick(&order[n_train..n_train + n_val]),
        test: pick(&order[n_train + n_val..]),
    })
}

// ---- PGM ----

/// Serialize a [1,H,W] image in [0,1] as binary PGM (P5, maxval 255).
pub fn save_pgm(image: &Tensor) -> Result<Vec<u8>> {
    if image.shape.len() != 3 || image.shape[0] != 1 {
        return Err(Error::ShapeMismatch {
            op: "save_pgm",
            expected: "[1,H,W]".into(),
            got: format!("{:?}", image.shape),
        });
    }
    if image.data.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::InvalidArgument {
            op: "save_pgm",
            message: "pixel values must lie in [0,1]".into(),
        });
    }
    let (h, w) = (image.shape[1], image.shape[2]);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(image.data.iter().map(|&v| (v * 255.0).round() as u8));
    Ok(out)
}

struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl ByteCursor<'_> {
    fn fail<T>(&self) -> Result<T> {
        Err(Error::Format {
            what: self.what.to_string(),
            offset: self.pos,
        })
    }

    fn next(&mut self) -> Result<u8> {
        match self.bytes.get(self.pos) {
            Some(&b) => {
                self.pos += 1;
                Ok(b)
            }
            None => self.fail(),
        }
    }

    fn token(&mut self) -> Result<u64> {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return self.fail();
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .map_or_else(|| self.fail(), Ok)
    }
}

/// Parse a binary PGM produced by [`save_pgm`] (or any P5 with maxval 255).
pub fn load_pgm(bytes: &[u8]) -> Result<Tensor> {
    let mut cur = ByteCursor { bytes, pos: 0, what: "PGM header" };
    if cur.next()? != b'P' || cur.next()? != b'5' {
        return Err(Error::Format { what: "PGM magic".into(), offset: 0 });
    }
    let w = cur.token()? as usize;
    let h = cur.token()? as usize;
    let maxval = cur.token()?;
    if maxval != 255 {
        return Err(Error::Format { what: "PGM maxval (must be 255)".into(), offset: cur.pos });
    }
    if !cur.next()?.is_ascii_whitespace() {
        return Err(Error::Format { what: "PGM header terminator".into(), offset: cur.pos - 1 });
    }
    if h == 0 || w == 0 {
        return Err(Error::Format { what: "PGM dimensions".into(), offset: cur.pos });
    }
    let payload = &bytes[cur.pos..];
    if payload.len() != h * w {
        return Err(Error::Format {
            what: format!("PGM payload ({} bytes, expected {})", payload.len(), h * w),
            offset: cur.pos + payload.len().min(h * w),
        });
    }
    let data = payload.iter().map(|&b| b as f64 / 255.0).collect();
    Ok(Tensor::new(vec![1, h, w], data))
}

// ---- augmentation ----

fn flip_h(data: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] = data[r * w + (w - 1 - c)];
        }
    }
    out
}

fn flip_v(data: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        out[r * w..(r + 1) * w].copy_from_slice(&data[(h - 1 - r) * w..(h - r) * w]);
    }
    out
}

fn translate(data: &[f64], h: usize, w: usize, dy: isize, dx: isize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        let sr = r as isize - dy;
        if sr < 0 || sr >= h as isize {
            continue;
        }
        for c in 0..w {
            let sc = c as isize - dx;
            if sc >= 0 && sc < w as isize {
                out[r * w + c] = data[sr as usize * w + sc as usize];
            }
        }
    }
    out
}

/// Random horizontal/vertical flips (p = 0.5 each) and, with p = 0.5, an
/// integer translation uniform in +-10% of the side, zero-filled. The same
/// transform applies to image and mask.
pub fn augment(s: &Sample, rng: &mut ChaCha8Rng) -> Sample {
    let (h, w) = (s.image.shape[1], s.image.shape[2]);
    let mut img = s.image.data.clone();
    let mut msk = s.mask.data.clone();
    if rng.random::<f64>() < 0.5 {
        img = flip_h(&img, h, w);
        msk = flip_h(&msk, h, w);
    }
    if rng.random::<f64>() < 0.5 {
        img = flip_v(&img, h, w);
        msk = flip_v(&msk, h, w);
    }
    if rng.random::<f64>() < 0.5 {
        let t = ((w as f64) * 0.1).round() as isize;
        let dy = rng.random_range(-t..=t);
        let dx = rng.random_range(-t..=t);
        img = translate(&img, h, w, dy, dx);
        msk = translate(&msk, h, w, dy, dx);
    }
    Sample {
        id: s.id.clone(),
        image: Tensor::new(vec![1, h, w], img),
        mask: Tensor::new(vec![1, h, w], msk),
    }
}

/// The multi-scale training factors.
pub const SCALES: [f64; 3] = [0.5, 1.0, 1.25];

/// Draw the per-batch scale factor.
pub fn draw_scale(rng: &mut ChaCha8Rng) -> f64 {
    SCALES[rng.random_range(0..SCALES.len())]
}

/// Resample to `scale` times the side, snapped to the nearest multiple of
/// 16: image bilinearly, mask by nearest neighbor re-binarized. A target
/// below 16 skips scaling.
pub fn rescale_sample(s: &Sample, scale: f64) -> Sample {
    if scale == 1.0 {
        return s.clone();
    }
    let side = s.side();
    let raw = (side as f64 * scale).round();
    let target = ((raw / 16.0).round() as usize) * 16;
    if target < 16 || target == side {
        return s.clone();
    }
    let img = resize_bilinear_plane(&s.image.data, side, side, target, target);
    let factor = target as f64 / side as f64;
    let mut msk = vec![0.0; target * target];
    for r in 0..target {
        let sr = (((r as f64 + 0.5) / factor - 0.5).round().max(0.0) as usize).min(side - 1);
        for c in 0..target {
            let sc = (((c as f64 + 0.5) / factor - 0.5).round().max(0.0) as usize).min(side - 1);
            msk[r * target + c] = if s.mask.data[sr * side + sc] > 0.5 { 1.0 } else { 0.0 };
        }
    }
    Sample {
        id: s.id.clone(),
        image: Tensor::new(vec![1, target, target], img.iter().map(|v| v.clamp(0.0, 1.0)).collect()),
        mask: Tensor::new(vec![1, target, target], msk),
    }
}

/// Stack samples of a common size into [B,1,H,W] image and mask batches.
pub fn stack(samples: &[&Sample]) -> Result<(Tensor, Tensor)> {
    let first = samples.first().ok_or(Error::InvalidArgument {
        op: "stack",
        message: "empty batch".into(),
    })?;
    let (h, w) = (first.image.shape[1], first.image.shape[2]);
    let mut images = Vec::with_capacity(samples.len() * h * w);
    let mut masks = Vec::with_capacity(samples.len() * h * w);
    for s in samples {
        if s.image.shape != vec![1, h, w] {
            return Err(Error::ShapeMismatch {
                op: "stack",
                expected: format!("[1,{h},{w}]"),
                got: format!("{:?}", s.image.shape),
            });
        }
        images.extend_from_slice(&s.image.data);
        masks.extend_from_slice(&s.mask.data);
    }
    Ok((
        Tensor::new(vec![samples.len(), 1, h, w], images),
        Tensor::new(vec![samples.len(), 1, h, w], masks),
    ))
}

// ---- on-disk layout ----

/// Write `<root>/{train,val,test}/<id>.{img,mask}.pgm` plus `dataset.txt`.
pub fn save_dataset(root: &Path, ds: &Dataset) -> Result<()> {
    let mut manifest = String::new();
    for (name, samples) in [("train", &ds.train), ("val", &ds.val), ("test", &ds.test)] {
        let dir = root.join(name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        manifest.push_str(&format!("[{name}]\n"));
        for s in samples {
            let img_path = dir.join(format!("{}.img.pgm", s.id));
            fs::write(&img_path, save_pgm(&s.image)?)
                .map_err(|e| Error::io(img_path.display().to_string(), e))?;
            let mask_path = dir.join(format!("{}.mask.pgm", s.id));
            fs::write(&mask_path, save_pgm(&s.mask)?)
                .map_err(|e| Error::io(mask_path.display().to_string(), e))?;
            manifest.push_str(&s.id);
            manifest.push('\n');
        }
    }
    let mpath = root.join("dataset.txt");
    fs::write(&mpath, manifest).map_err(|e| Error::io(mpath.display().to_string(), e))
}

/// Load one split as listed by the manifest. Masks are re-binarized at 0.5
/// to absorb PGM quantization.
pub fn load_split(root: &Path, split: &str) -> Result<Vec<Sample>> {
    let mpath = root.join("dataset.txt");
    let manifest =
        fs::read_to_string(&mpath).map_err(|e| Error::io(mpath.display().to_string(), e))?;
    let mut samples = Vec::new();
    let mut in_section = false;
    for line in manifest.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            in_section = line == format!("[{split}]");
            continue;
        }
        if !in_section {
            continue;
        }
        let dir = root.join(split);
        let img_path = dir.join(format!("{line}.img.pgm"));
        let img_bytes =
            fs::read(&img_path).map_err(|e| Error::io(img_path.display().to_string(), e))?;
        let mask_path = dir.join(format!("{line}.mask.pgm"));
        let mask_bytes =
            fs::read(&mask_path).map_err(|e| Error::io(mask_path.display().to_string(), e))?;
        let image = load_pgm(&img_bytes)?;
        let mut mask = load_pgm(&mask_bytes)?;
        for v in mask.data.iter_mut() {
            *v = if *v > 0.5 { 1.0 } else { 0.0 };
        }
        samples.push(Sample { id: line.to_string(), image, mask });
    }
    Ok(samples)
}

pub fn load_dataset(root: &Path) -> Result<Dataset> {
    Ok(Dataset {
        train: load_split(root, "train")?,
        val: load_split(root, "val")?,
        test: load_split(root, "test")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(count: usize) -> SynthSpec {
        SynthSpec { size: 32, count, seed: 7, ..SynthSpec::default() }
    }

    #[test]
    fn generation_is_deterministic_and_nonempty() {
        let spec = small_spec(10);
        let a = gen_synthetic(&spec).unwrap();
        let b = gen_synthetic(&spec).unwrap();
        let total = a.train.len() + a.val.len() + a.test.len();
        assert_eq!(total, 10);
        for (sa, sb) in a.train.iter().zip(&b.train) {
            assert_eq!(sa, sb);
        }
        for s in a.train.iter().chain(&a.val).chain(&a.test) {
            assert!(s.mask.data.iter().any(|&v| v == 1.0), "empty mask in {}", s.id);
        }
    }

    #[test]
    fn foreground_fraction_in_bounds() {
        let spec = small_spec(40);
        let ds = gen_synthetic(&spec).unwrap();
        for s in ds.train.iter().chain(&ds.val).chain(&ds.test) {
            let f = s.mask.data.iter().sum::<f64>() / s.mask.data.len() as f64;
            assert!((FG_MIN..=FG_MAX).contains(&f), "{}: fraction {f}", s.id);
            assert!(s.mask.data.iter().all(|&v| v == 0.0 || v == 1.0));
            assert!(s.image.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn split_ratio_is_8_1_1() {
        let ds = gen_synthetic(&SynthSpec { size: 32, count: 20, seed: 3, ..SynthSpec::default() }).unwrap();
        assert_eq!((ds.train.len(), ds.val.len(), ds.test.len()), (16, 2, 2));
    }

    #[test]
    fn size_constraint_enforced() {
        let spec = SynthSpec { size: 60, ..SynthSpec::default() };
        assert!(gen_synthetic(&spec).is_err());
    }

    #[test]
    fn pgm_payload_and_header() {
        let img = Tensor::new(vec![1, 2, 2], vec![0.0, 1.0, 0.5, 0.5]);
        let bytes = save_pgm(&img).unwrap();
        assert!(bytes.starts_with(b"P5\n2 2\n255\n"));
        assert_eq!(&bytes[bytes.len() - 4..], &[0, 255, 128, 128]);

        let img64 = Tensor::zeros(vec![1, 64, 64]);
        let bytes = save_pgm(&img64).unwrap();
        assert!(bytes.starts_with(b"P5\n64 64\n255\n"));
    }

    #[test]
    fn pgm_roundtrip_bound() {
        let mut rng = crate::rng::stream(5, "pgm", 0);
        for _ in 0..50 {
            let data: Vec<f64> = (0..64).map(|_| rng.random_range(0.0..=1.0)).collect();
            let img = Tensor::new(vec![1, 8, 8], data.clone());
            let back = load_pgm(&save_pgm(&img).unwrap()).unwrap();
            for (a, b) in data.iter().zip(&back.data) {
                assert!((a - b).abs() <= 1.0 / 510.0 + 1e-12);
            }
        }
    }

    #[test]
    fn pgm_errors_name_offsets() {
        assert!(matches!(
            load_pgm(b"P6\n2 2\n255\n____"),
            Err(Error::Format { offset: 0, .. })
        ));
        let truncated = b"P5\n2 2\n255\n\xff";
        match load_pgm(truncated) {
            Err(Error::Format { what, .. }) => assert!(what.contains("payload")),
            other => panic!("expected payload error, got {other:?}"),
        }
        assert!(load_pgm(b"P5\n2 2\n127\n____").is_err());
    }

    #[test]
    fn augment_identity_and_involution() {
        let spec = small_spec(1);
        let ds = gen_synthetic(&spec).unwrap();
        let s = &ds.train.first().or(ds.val.first()).or(ds.test.first()).unwrap();

        // a stream whose first three draws stay >= 0.5 leaves it unchanged
        let mut probe = crate::rng::stream(1, "aug", 0);
        let mut tag = 0;
        loop {
            let mut r = crate::rng::stream(1, "aug", tag);
            let d: [f64; 3] = [r.random(), r.random(), r.random()];
            if d.iter().all(|&x| x >= 0.5) {
                break;
            }
            tag += 1;
            let _ = &mut probe;
        }
        let mut r = crate::rng::stream(1, "aug", tag);
        let out = augment(s, &mut r);
        assert_eq!(out.image, s.image);
        assert_eq!(out.mask, s.mask);

        // double horizontal flip restores the original
        let (h, w) = (s.side(), s.side());
        let once = flip_h(&s.image.data, h, w);
        let twice = flip_h(&once, h, w);
        assert_eq!(twice, s.image.data);
    }

    #[test]
    fn augment_keeps_mask_binary() {
        let spec = small_spec(4);
        let ds = gen_synthetic(&spec).unwrap();
        let mut rng = crate::rng::stream(9, "aug", 0);
        for s in ds.train.iter().chain(&ds.val).chain(&ds.test) {
            for _ in 0..10 {
                let out = augment(s, &mut rng);
                assert!(out.mask.data.iter().all(|&v| v == 0.0 || v == 1.0));
            }
        }
    }

    #[test]
    fn multiscale_sizes_and_binarity() {
        let spec = SynthSpec { size: 64, count: 2, seed: 11, ..SynthSpec::default() };
        let ds = gen_synthetic(&spec).unwrap();
        let s = ds.train.first().or(ds.test.first()).or(ds.val.first()).unwrap();
        assert_eq!(rescale_sample(s, 1.0), *s);
        let half = rescale_sample(s, 0.5);
        assert_eq!(half.side(), 32);
        let up = rescale_sample(s, 1.25);
        assert_eq!(up.side(), 80);
        assert!(up.mask.data.iter().all(|&v| v == 0.0 || v == 1.0));
        // a 16-pixel sample cannot shrink further
        let tiny = rescale_sample(&rescale_sample(&rescale_sample(s, 0.5), 0.5), 0.5);
        assert_eq!(tiny.side(), 16);
        assert_eq!(rescale_sample(&tiny, 0.5).side(), 16);
    }

    #[test]
    fn dataset_roundtrip_on_disk() {
        let spec = small_spec(5);
        let ds = gen_synthetic(&spec).unwrap();
        let dir = std::env::temp_dir().join(format!("phiseg_data_test_{}", std::process::id()));
        save_dataset(&dir, &ds).unwrap();
        let loaded = load_dataset(&dir).unwrap();
        assert_eq!(loaded.train.len(), ds.train.len());
        for (a, b) in ds.train.iter().zip(&loaded.train) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.mask.data, b.mask.data);
            for (x, y) in a.image.data.iter().zip(&b.image.data) {
                assert!((x - y).abs() <= 1.0 / 510.0 + 1e-12);
            }
        }
        std::fs::remove_dir_all(&dir).ok();
    }
}
