//! Exact 2-D discrete Fourier transforms, magnitude/phase spectra, axis-wise
//! phase unwrapping, and the frequency-domain filters.
//!
//! Transforms are separable: each power-of-two side takes an iterative
//! radix-2 pass, any other side a direct O(n^2) pass. `dft2_direct` forces
//! the direct path on both sides and doubles as the oracle for the fast one.

use crate::error::{Error, Result};
use std::f64::consts::{PI, TAU};

/// Below this modulus the phase is defined as 0 with zero gradient.
pub const EPS_PHASE: f64 = 1e-12;

/// A 2-D complex spectrum stored as two equal-shape real planes.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl ComplexField {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexField {
            re: vec![0.0; rows * cols],
            im: vec![0.0; rows * cols],
            rows,
            cols,
        }
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }
}

/// Which filter multiplies the spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    Lowpass,
    LeakyLowpass,
    Highpass,
    None,
}

impl FilterKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FilterKind::Lowpass => "lowpass",
            FilterKind::LeakyLowpass => "leaky",
            FilterKind::Highpass => "highpass",
            FilterKind::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lowpass" => Some(FilterKind::Lowpass),
            "leaky" | "leaky_lowpass" => Some(FilterKind::LeakyLowpass),
            "highpass" => Some(FilterKind::Highpass),
            "none" => Some(FilterKind::None),
            _ => None,
        }
    }
}

/// Frequency filter configuration. For the binary kinds `gamma` is the side
/// length of the retained (or removed) DC-centered block; for the leaky kind
/// it is the attenuation exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub gamma: f64,
    pub gamma_square_weight: bool,
}

impl FilterSpec {
    pub fn none() -> Self {
        FilterSpec {
            kind: FilterKind::None,
            gamma: 1.0,
            gamma_square_weight: false,
        }
    }
}

// ---- transforms ----

fn bit_reverse_permute(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    let mut j = 0usize;
    for i in 0..n {
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
        let mut m = n >> 1;
        while m >= 1 && j & m != 0 {
            j ^= m;
            m >>= 1;
        }
        j |= m;
    }
}

/// In-place iterative radix-2 FFT; `inverse` flips the twiddle sign. No
/// normalization here, the 2-D drivers apply 1/(M*N) once.
fn fft1d(re: &mut [f64], im: &mut [f64], inverse: bool) {
    let n = re.len();
    debug_assert!(n.is_power_of_two());
    if n <= 1 {
        return;
    }
    bit_reverse_permute(re, im);
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * TAU / len as f64;
        let (wre, wim) = (ang.cos(), ang.sin());
        let mut start = 0;
        while start < n {
            let (mut cre, mut cim) = (1.0, 0.0);
            for off in 0..len / 2 {
                let a = start + off;
                let b = a + len / 2;
                let tre = re[b] * cre - im[b] * cim;
                let tim = re[b] * cim + im[b] * cre;
                re[b] = re[a] - tre;
                im[b] = im[a] - tim;
                re[a] += tre;
                im[a] += tim;
                let nre = cre * wre - cim * wim;
                cim = cre * wim + cim * wre;
                cre = nre;
                let _ = off;
            }
            start += len;
        }
        len <<= 1;
    }
}

/// Direct O(n^2) 1-D DFT (complex in, complex out).
fn dft1d(re: &[f64], im: &[f64], out_re: &mut [f64], out_im: &mut [f64], inverse: bool) {
    let n = re.len();
    let sign = if inverse { 1.0 } else { -1.0 };
    for k in 0..n {
        let (mut sr, mut si) = (0.0, 0.0);
        for (t, (&xr, &xi)) in re.iter().zip(im).enumerate() {
            let ang = sign * TAU * (k as f64) * (t as f64) / n as f64;
            let (c, s) = (ang.cos(), ang.sin());
            sr += xr * c - xi * s;
            si += xr * s + xi * c;
        }
        out_re[k] = sr;
        out_im[k] = si;
    }
}

fn transform_axis(
    re: &mut Vec<f64>,
    im: &mut Vec<f64>,
    lines: usize,
    len: usize,
    line_stride: usize,
    elem_stride: usize,
    inverse: bool,
    force_direct: bool,
) {
    let use_fft = len.is_power_of_two() && !force_direct;
    let mut buf_re = vec![0.0; len];
    let mut buf_im = vec![0.0; len];
    let mut out_re = vec![0.0; len];
    let mut out_im = vec![0.0; len];
    for line in 0..lines {
        let base = line * line_stride;
        for e in 0..len {
            buf_re[e] = re[base + e * elem_stride];
            buf_im[e] = im[base + e * elem_stride];
        }
        if use_fft {
            fft1d(&mut buf_re, &mut buf_im, inverse);
            for e in 0..len {
                re[base + e * elem_stride] = buf_re[e];
                im[base + e * elem_stride] = buf_im[e];
            }
        } else {
            dft1d(&buf_re, &buf_im, &mut out_re, &mut out_im, inverse);
            for e in 0..len {
                re[base + e * elem_stride] = out_re[e];
                im[base + e * elem_stride] = out_im[e];
            }
        }
    }
}

fn transform2d(field: &mut ComplexField, inverse: bool, force_direct: bool) {
    let (m, n) = (field.rows, field.cols);
    // rows first (each row is contiguous), then columns
    transform_axis(&mut field.re, &mut field.im, m, n, n, 1, inverse, force_direct);
    transform_axis(&mut field.re, &mut field.im, n, m, 1, n, inverse, force_direct);
    if inverse {
        let scale = 1.0 / (m * n) as f64;
        field.re.iter_mut().for_each(|v| *v *= scale);
        field.im.iter_mut().for_each(|v| *v *= scale);
    }
}

fn check_dims(op: &'static str, rows: usize, cols: usize, len: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument {
            op,
            message: "image sides must be nonzero".into(),
        });
    }
    if rows * cols != len {
        return Err(Error::ShapeMismatch {
            op,
            expected: format!("{rows}x{cols} = {} values", rows * cols),
            got: format!("{len}"),
        });
    }
    Ok(())
}

/// Forward 2-D DFT of a real image.
pub fn dft2(x: &[f64], rows: usize, cols: usize) -> Result<ComplexField> {
    check_dims("dft2", rows, cols, x.len())?;
    let mut f = ComplexField {
        re: x.to_vec(),
        im: vec![0.0; x.len()],
        rows,
        cols,
    };
    transform2d(&mut f, false, false);
    Ok(f)
}

/// Forward 2-D DFT via the direct separable path on both axes (the oracle
/// for the radix-2 fast path; also complex-capable).
pub fn dft2_direct(x: &[f64], rows: usize, cols: usize) -> Result<ComplexField> {
    check_dims("dft2_direct", rows, cols, x.len())?;
    let mut f = ComplexField {
        re: x.to_vec(),
        im: vec![0.0; x.len()],
        rows,
        cols,
    };
    transform2d(&mut f, false, true);
    Ok(f)
}

/// Forward 2-D DFT of a complex field (used by adjoint computations).
pub fn dft2_complex(f: &ComplexField) -> ComplexField {
    let mut out = f.clone();
    transform2d(&mut out, false, false);
    out
}

/// Inverse 2-D DFT; returns the real part and the imaginary residual
/// (diagnostic; zero up to rounding for spectra of real images).
pub fn idft2(f: &ComplexField) -> (Vec<f64>, Vec<f64>) {
    let mut out = f.clone();
    transform2d(&mut out, true, false);
    (out.re, out.im)
}

/// Magnitude spectrum sqrt(re^2 + im^2).
pub fn magnitude(f: &ComplexField) -> Vec<f64> {
    f.re.iter().zip(&f.im).map(|(&r, &i)| r.hypot(i)).collect()
}

/// Phase spectrum in (-pi, pi]; coefficients with modulus below
/// [`EPS_PHASE`] get phase 0 (and zero gradient in the autodiff op).
pub fn phase(f: &ComplexField) -> Vec<f64> {
    f.re.iter()
        .zip(&f.im)
        .map(|(&r, &i)| if r.hypot(i) < EPS_PHASE { 0.0 } else { i.atan2(r) })
        .collect()
}

/// Map an angle difference into (-pi, pi].
pub fn wrap_to_pi(d: f64) -> f64 {
    d - TAU * ((d - PI) / TAU).ceil()
}

/// Which direction unwrap lines run; re-exported alongside the tape op.
pub use crate::tensor::UnwrapAxis;

/// Sequentially remove 2-pi jumps along every 1-D line of the given axis.
/// `Row` unwraps each row left-to-right, `Col` each column top-to-bottom;
/// the first element of a line is unchanged.
pub fn unwrap_axis(p: &[f64], rows: usize, cols: usize, axis: UnwrapAxis) -> Vec<f64> {
    assert_eq!(p.len(), rows * cols);
    let mut out = p.to_vec();
    match axis {
        UnwrapAxis::Row => {
            for r in 0..rows {
                let base = r * cols;
                for c in 1..cols {
                    let d = p[base + c] - p[base + c - 1];
                    out[base + c] = out[base + c - 1] + wrap_to_pi(d);
                }
            }
        }
        UnwrapAxis::Col => {
            for c in 0..cols {
                for r in 1..rows {
                    let d = p[r * cols + c] - p[(r - 1) * cols + c];
                    out[r * cols + c] = out[(r - 1) * cols + c] + wrap_to_pi(d);
                }
            }
        }
    }
    out
}

/// Signed centered frequency of an unshifted index: 0, 1, ..., then negative.
fn centered_freq(k: usize, m: usize) -> f64 {
    let c = m / 2;
    (((k + c) % m) as f64) - c as f64
}

/// Whether unshifted index `k` falls inside the DC-centered block of side
/// `gamma` (top-left corner floor(M/2) - floor(gamma/2) in the shifted view).
fn in_centered_block(k: usize, m: usize, gamma: usize) -> bool {
    let c = m / 2;
    let shifted = (k + c) % m;
    let lo = c as isize - (gamma / 2) as isize;
    let s = shifted as isize;
    s >= lo && s < lo + gamma as isize
}

/// Real multiplicative mask of `spec` for an MxN spectrum in unshifted
/// coordinates. Binary kinds validate gamma as a positive integer <= max(M,N).
pub fn filter_mask(spec: &FilterSpec, rows: usize, cols: usize) -> Result<Vec<f64>> {
    let mn = rows * cols;
    match spec.kind {
        FilterKind::None => Ok(vec![1.0; mn]),
        FilterKind::Lowpass | FilterKind::Highpass => {
            let g = spec.gamma;
            if g <= 0.0 || g.fract() != 0.0 {
                return Err(Error::InvalidArgument {
                    op: "filter_mask",
                    message: format!("binary filters need a positive integer gamma, got {g}"),
                });
            }
            let gamma = g as usize;
            if gamma > rows.max(cols) {
                return Err(Error::InvalidArgument {
                    op: "filter_mask",
                    message: format!("gamma {gamma} exceeds max({rows},{cols})"),
                });
            }
            let weight = if spec.gamma_square_weight { g * g } else { 1.0 };
            let lowpass = spec.kind == FilterKind::Lowpass;
            let mut mask = vec![0.0; mn];
            for k in 0..rows {
                let kin = in_centered_block(k, rows, gamma);
                for l in 0..cols {
                    let inside = kin && in_centered_block(l, cols, gamma);
                    let kept = inside == lowpass;
                    mask[k * cols + l] = if kept { weight } else { 0.0 };
                }
            }
            Ok(mask)
        }
        FilterKind::LeakyLowpass => {
            if spec.gamma <= 0.0 {
                return Err(Error::InvalidArgument {
                    op: "filter_mask",
                    message: format!("leaky lowpass needs gamma > 0, got {}", spec.gamma),
                });
            }
            let denom = (rows * rows + cols * cols) as f64;
            let mut mask = vec![0.0; mn];
            for k in 0..rows {
                let fk = centered_freq(k, rows);
                for l in 0..cols {
                    let fl = centered_freq(l, cols);
                    let r = ((fk * fk + fl * fl) / denom).sqrt();
                    mask[k * cols + l] = (1.0 + r).powf(-spec.gamma);
                }
            }
            Ok(mask)
        }
    }
}

/// Multiply a spectrum by the filter mask.
pub fn apply_filter(f: &ComplexField, spec: &FilterSpec) -> Result<ComplexField> {
    let mask = filter_mask(spec, f.rows, f.cols)?;
    let mut out = f.clone();
    for (v, m) in out.re.iter_mut().zip(&mask) {
        *v *= m;
    }
    for (v, m) in out.im.iter_mut().zip(&mask) {
        *v *= m;
    }
    Ok(out)
}

/// Circularly shift an image down by `dy` rows and right by `dx` columns.
pub fn circular_shift(x: &[f64], rows: usize, cols: usize, dy: usize, dx: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[((r + dy) % rows) * cols + (c + dx) % cols] = x[r * cols + c];
        }
    }
    out
}

/// Reverse-mask pipeline of the attention blocks and the spectrum tool:
/// |Re(idft2(filter(dft2(1 - x))))| for a real plane in [0,1].
pub fn reverse_filtered_mask(x: &[f64], rows: usize, cols: usize, spec: &FilterSpec) -> Result<Vec<f64>> {
    let reversed: Vec<f64> = x.iter().map(|&v| 1.0 - v).collect();
    let f = dft2(&reversed, rows, cols)?;
    let filtered = apply_filter(&f, spec)?;
    let (re, _) = idft2(&filtered);
    Ok(re.iter().map(|v| v.abs()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Vec<f64> {
        (0..m * n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn constant_image_has_dc_only_spectrum() {
        let (m, n, c) = (6, 10, 0.37);
        let f = dft2(&vec![c; m * n], m, n).unwrap();
        assert!((f.re[0] - (m * n) as f64 * c).abs() < 1e-9);
        assert!(f.im[0].abs() < 1e-9);
        for i in 1..m * n {
            assert!(f.re[i].hypot(f.im[i]) < 1e-9, "coefficient {i} nonzero");
        }
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let (m, n) = (8, 8);
        let mut x = vec![0.0; m * n];
        x[0] = 1.0;
        let f = dft2(&x, m, n).unwrap();
        for i in 0..m * n {
            assert!((f.re[i] - 1.0).abs() < 1e-12);
            assert!(f.im[i].abs() < 1e-12);
        }
    }

    #[test]
    fn parseval_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (m, n) = (8, 8);
        let x = random_image(&mut rng, m, n);
        let f = dft2(&x, m, n).unwrap();
        let spatial: f64 = x.iter().map(|v| v * v).sum();
        let spectral: f64 = f.re.iter().zip(&f.im).map(|(&r, &i)| r * r + i * i).sum::<f64>()
            / (m * n) as f64;
        assert!((spatial - spectral).abs() < 1e-9);
    }

    #[test]
    fn roundtrip_and_zero_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (m, n) in [(16, 16), (12, 20), (7, 9)] {
            let x = random_image(&mut rng, m, n);
            let f = dft2(&x, m, n).unwrap();
            let (re, im) = idft2(&f);
            for i in 0..m * n {
                assert!((re[i] - x[i]).abs() < 1e-9, "roundtrip {m}x{n} at {i}");
                assert!(im[i].abs() < 1e-9);
            }
        }
        let (re, im) = idft2(&ComplexField::zeros(4, 4));
        assert!(re.iter().chain(&im).all(|&v| v == 0.0));
    }

    #[test]
    fn conjugate_symmetry_of_real_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (m, n) = (10, 6);
        let x = random_image(&mut rng, m, n);
        let f = dft2(&x, m, n).unwrap();
        for k in 0..m {
            for l in 0..n {
                let kk = (m - k) % m;
                let ll = (n - l) % n;
                assert!((f.re[k * n + l] - f.re[kk * n + ll]).abs() < 1e-9);
                assert!((f.im[k * n + l] + f.im[kk * n + ll]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn fast_path_matches_direct_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (m, n) = (16, 16);
        for _ in 0..10 {
            let x = random_image(&mut rng, m, n);
            let fast = dft2(&x, m, n).unwrap();
            let direct = dft2_direct(&x, m, n).unwrap();
            for i in 0..m * n {
                assert!((fast.re[i] - direct.re[i]).abs() < 1e-9);
                assert!((fast.im[i] - direct.im[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn magnitude_and_phase_basics() {
        let f = ComplexField {
            re: vec![3.0, 0.0, 1.0, 0.0],
            im: vec![4.0, 0.0, 0.0, 1.0],
            rows: 2,
            cols: 2,
        };
        let mag = magnitude(&f);
        assert_eq!(mag[0], 5.0);
        assert_eq!(mag[1], 0.0);
        let ph = phase(&f);
        assert_eq!(ph[1], 0.0); // below EPS_PHASE
        assert_eq!(ph[2], 0.0); // atan2(0, 1)
        assert!((ph[3] - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn shift_theorem_magnitude_and_phase_ramp() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let (m, n) = (8, 8);
        let x = random_image(&mut rng, m, n);
        let (dy, dx) = (3usize, 5usize);
        let shifted = circular_shift(&x, m, n, dy, dx);
        let f0 = dft2(&x, m, n).unwrap();
        let f1 = dft2(&shifted, m, n).unwrap();
        let m0 = magnitude(&f0);
        let m1 = magnitude(&f1);
        let p0 = phase(&f0);
        let p1 = phase(&f1);
        for k in 0..m {
            for l in 0..n {
                let i = k * n + l;
                assert!((m0[i] - m1[i]).abs() < 1e-9);
                if m0[i] > 1e-6 {
                    let expected = -TAU * (k as f64 * dy as f64 / m as f64 + l as f64 * dx as f64 / n as f64);
                    let diff = wrap_to_pi(p1[i] - p0[i] - expected);
                    assert!(diff.abs() < 1e-9, "phase ramp off at ({k},{l}): {diff}");
                }
            }
        }
    }

    #[test]
    fn unwrap_examples() {
        // all jumps below pi: unchanged
        let p = vec![0.0, 0.2, 0.4];
        assert_eq!(unwrap_axis(&p, 1, 3, UnwrapAxis::Row), p);

        // jump of -6.0 corrected by +2pi
        let p = vec![3.0, -3.0];
        let u = unwrap_axis(&p, 1, 2, UnwrapAxis::Row);
        assert_eq!(u[0], 3.0);
        assert!((u[1] - (3.0 + (-3.0 - 3.0 + TAU))).abs() < 1e-15);

        // column unwrap works down each column
        let p = vec![3.0, 0.0, -3.0, 0.1];
        let u = unwrap_axis(&p, 2, 2, UnwrapAxis::Col);
        assert!((u[2] - (3.0 + (-6.0 + TAU))).abs() < 1e-15);
        assert!((u[3] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn unwrap_roundtrip_through_wrap() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let p: Vec<f64> = (0..64).map(|_| rng.random_range(-PI..PI)).collect();
            let u = unwrap_axis(&p, 4, 16, UnwrapAxis::Row);
            for (orig, unw) in p.iter().zip(&u) {
                let back = wrap_to_pi(*unw);
                assert!((back - orig).abs() < 1e-12, "wrap(unwrap) {back} vs {orig}");
            }
            // post-unwrap consecutive differences lie in (-pi, pi]
            for r in 0..4 {
                for c in 1..16 {
                    let d = u[r * 16 + c] - u[r * 16 + c - 1];
                    assert!(d > -PI && d <= PI);
                }
            }
        }
    }

    #[test]
    fn lowpass_gamma_max_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let (m, n) = (8, 6);
        let x = random_image(&mut rng, m, n);
        let f = dft2(&x, m, n).unwrap();
        let spec = FilterSpec {
            kind: FilterKind::Lowpass,
            gamma: m.max(n) as f64,
            gamma_square_weight: false,
        };
        let filtered = apply_filter(&f, &spec).unwrap();
        assert_eq!(filtered, f);
    }

    #[test]
    fn lowpass_gamma_one_keeps_dc_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let (m, n) = (8, 8);
        let x = random_image(&mut rng, m, n);
        let mean: f64 = x.iter().sum::<f64>() / (m * n) as f64;
        let f = dft2(&x, m, n).unwrap();
        let spec = FilterSpec {
            kind: FilterKind::Lowpass,
            gamma: 1.0,
            gamma_square_weight: false,
        };
        let filtered = apply_filter(&f, &spec).unwrap();
        let (re, _) = idft2(&filtered);
        for v in re {
            assert!((v - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn leaky_formula_values() {
        let (m, n) = (8, 8);
        for gamma in [1.0, 3.0, 5.0] {
            let spec = FilterSpec {
                kind: FilterKind::LeakyLowpass,
                gamma,
                gamma_square_weight: false,
            };
            let mask = filter_mask(&spec, m, n).unwrap();
            assert_eq!(mask[0], 1.0); // Gamma(0,0) = 1
            // centered corner: signed freqs (-M/2, -N/2) live at unshifted (M/2, N/2)
            let corner = mask[(m / 2) * n + n / 2];
            assert!((corner - 1.5f64.powf(-gamma)).abs() < 1e-15);
        }
        let g3 = FilterSpec { kind: FilterKind::LeakyLowpass, gamma: 3.0, gamma_square_weight: false };
        let mask = filter_mask(&g3, m, n).unwrap();
        assert!((mask[(m / 2) * n + n / 2] - 8.0 / 27.0).abs() < 1e-15);
    }

    #[test]
    fn binary_filter_idempotent_and_complementary() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let (m, n) = (16, 16);
        let x = random_image(&mut rng, m, n);
        let f = dft2(&x, m, n).unwrap();
        let lp = FilterSpec { kind: FilterKind::Lowpass, gamma: 5.0, gamma_square_weight: false };
        let hp = FilterSpec { kind: FilterKind::Highpass, gamma: 5.0, gamma_square_weight: false };
        let once = apply_filter(&f, &lp).unwrap();
        let twice = apply_filter(&once, &lp).unwrap();
        assert_eq!(once, twice); // bit-exact idempotence
        let high = apply_filter(&f, &hp).unwrap();
        for i in 0..m * n {
            assert!((once.re[i] + high.re[i] - f.re[i]).abs() < 1e-12);
            assert!((once.im[i] + high.im[i] - f.im[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma_exceeding_sides_rejected() {
        let spec = FilterSpec { kind: FilterKind::Lowpass, gamma: 9.0, gamma_square_weight: false };
        assert!(filter_mask(&spec, 8, 8).is_err());
        let ok = FilterSpec { kind: FilterKind::Lowpass, gamma: 8.0, gamma_square_weight: false };
        assert!(filter_mask(&ok, 8, 8).is_ok());
    }

    #[test]
    fn zero_sized_image_rejected() {
        assert!(dft2(&[], 0, 4).is_err());
    }
}
