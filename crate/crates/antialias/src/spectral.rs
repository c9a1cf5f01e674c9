//! Discrete Fourier analysis primitives and the spectrum-folding simulator.
//!
//! Everything here is a pure function on immutable data. Two transform
//! routes exist: a direct O(N^2) sum used as the reference for short
//! signals, and a radix-2 FFT used on power-of-two lengths. They are
//! cross-checked against each other in the tests.

use num_complex::Complex64;

use crate::{Error, Result};

/// Real 1-D signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal1d(pub Vec<f64>);

impl Signal1d {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("signal must have at least one sample"));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("signal sample".into()));
        }
        Ok(Signal1d(samples))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Real H x W image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image2d {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Image2d {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("image dimensions must be >= 1"));
        }
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "expected {} pixels, got {}",
                height * width,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image pixel".into()));
        }
        Ok(Image2d {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Image2d {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.width..(r + 1) * self.width]
    }
}

/// Which bin holds DC.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OriginConvention {
    DcFirst,
    Centered,
}

/// DFT of a 1-D signal. Bin `k` corresponds to angular frequency
/// `2*pi*k/N` in the dc-first convention.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub coefficients: Vec<Complex64>,
    pub origin: OriginConvention,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// Magnitude per bin; what this crate reports as "power spectral
    /// density".
    pub fn psd(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.norm()).collect()
    }

    pub fn energy(&self) -> f64 {
        self.coefficients.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// 2-D DFT, row-major bins, `coefficients[u * width + v]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum2d {
    pub height: usize,
    pub width: usize,
    pub coefficients: Vec<Complex64>,
    pub origin: OriginConvention,
}

impl Spectrum2d {
    pub fn psd(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.norm()).collect()
    }
}

fn check_finite(samples: &[f64]) -> Result<()> {
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("signal sample".into()));
    }
    Ok(())
}

/// Direct O(N^2) forward transform. Reference route for short signals and
/// the cross-check oracle for the FFT route.
pub fn dft_direct(samples: &[f64]) -> Vec<Complex64> {
    let n = samples.len();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, &x) in samples.iter().enumerate() {
            let angle = -2.0 * std::f64::consts::PI * (k as f64) * (i as f64) / (n as f64);
            acc += Complex64::from_polar(x, angle);
        }
        out.push(acc);
    }
    out
}

fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    // bit-reversal permutation
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * std::f64::consts::PI / (len as f64);
        let wl = Complex64::from_polar(1.0, ang);
        for start in (0..n).step_by(len) {
            let mut w = Complex64::new(1.0, 0.0);
            for i in 0..len / 2 {
                let u = buf[start + i];
                let v = buf[start + i + len / 2] * w;
                buf[start + i] = u + v;
                buf[start + i + len / 2] = u - v;
                w *= wl;
            }
        }
        len <<= 1;
    }
}

fn forward_complex(samples: &[Complex64]) -> Vec<Complex64> {
    let n = samples.len();
    if n.is_power_of_two() && n > 1 {
        let mut buf = samples.to_vec();
        fft_in_place(&mut buf, false);
        buf
    } else {
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, &x) in samples.iter().enumerate() {
                let angle = -2.0 * std::f64::consts::PI * (k as f64) * (i as f64) / (n as f64);
                acc += x * Complex64::from_polar(1.0, angle);
            }
            out.push(acc);
        }
        out
    }
}

fn inverse_complex(coeffs: &[Complex64]) -> Vec<Complex64> {
    let n = coeffs.len();
    let scale = 1.0 / n as f64;
    if n.is_power_of_two() && n > 1 {
        let mut buf = coeffs.to_vec();
        fft_in_place(&mut buf, true);
        for c in &mut buf {
            *c *= scale;
        }
        buf
    } else {
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, &c) in coeffs.iter().enumerate() {
                let angle = 2.0 * std::f64::consts::PI * (k as f64) * (i as f64) / (n as f64);
                acc += c * Complex64::from_polar(1.0, angle);
            }
            out.push(acc * scale);
        }
        out
    }
}

/// Forward DFT of a real signal, dc-first bins.
pub fn dft1d(signal: &Signal1d) -> Result<Spectrum> {
    check_finite(&signal.0)?;
    let input: Vec<Complex64> = signal.0.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    Ok(Spectrum {
        coefficients: forward_complex(&input),
        origin: OriginConvention::DcFirst,
    })
}

/// Inverse DFT; imaginary residue is discarded (inputs are real by contract).
pub fn idft1d(spectrum: &Spectrum) -> Result<Signal1d> {
    if spectrum.coefficients.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::NonFinite("spectrum coefficient".into()));
    }
    let time = inverse_complex(&spectrum.coefficients);
    Ok(Signal1d(time.iter().map(|c| c.re).collect()))
}

/// Separable 2-D forward transform: dft over rows, then over columns.
pub fn dft2d(img: &Image2d) -> Result<Spectrum2d> {
    check_finite(&img.data)?;
    let (h, w) = (img.height, img.width);
    let mut rows: Vec<Complex64> = img.data.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    for r in 0..h {
        let transformed = forward_complex(&rows[r * w..(r + 1) * w]);
        rows[r * w..(r + 1) * w].copy_from_slice(&transformed);
    }
    let mut out = rows;
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    for c in 0..w {
        for r in 0..h {
            col[r] = out[r * w + c];
        }
        let transformed = forward_complex(&col);
        for r in 0..h {
            out[r * w + c] = transformed[r];
        }
    }
    Ok(Spectrum2d {
        height: h,
        width: w,
        coefficients: out,
        origin: OriginConvention::DcFirst,
    })
}

/// Inverse of [`dft2d`], real part returned.
pub fn idft2d(spec: &Spectrum2d) -> Result<Image2d> {
    let (h, w) = (spec.height, spec.width);
    let mut buf = spec.coefficients.clone();
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    for c in 0..w {
        for r in 0..h {
            col[r] = buf[r * w + c];
        }
        let transformed = inverse_complex(&col);
        for r in 0..h {
            buf[r * w + c] = transformed[r];
        }
    }
    for r in 0..h {
        let transformed = inverse_complex(&buf[r * w..(r + 1) * w]);
        buf[r * w..(r + 1) * w].copy_from_slice(&transformed);
    }
    Image2d::new(h, w, buf.iter().map(|c| c.re).collect())
}

/// Keep every `stride`-th sample starting at index 0.
pub fn subsample(signal: &Signal1d, stride: usize) -> Result<Signal1d> {
    if stride < 1 {
        return Err(Error::invalid("stride must be >= 1"));
    }
    Ok(Signal1d(signal.0.iter().step_by(stride).copied().collect()))
}

/// 2-D subsampling with the same stride on both axes.
pub fn subsample2d(img: &Image2d, stride: usize) -> Result<Image2d> {
    if stride < 1 {
        return Err(Error::invalid("stride must be >= 1"));
    }
    let h = (img.height + stride - 1) / stride;
    let w = (img.width + stride - 1) / stride;
    let mut data = Vec::with_capacity(h * w);
    for r in (0..img.height).step_by(stride) {
        for c in (0..img.width).step_by(stride) {
            data.push(img.at(r, c));
        }
    }
    Image2d::new(h, w, data)
}

/// Analytic spectrum of the subsampled signal: the average of the `stride`
/// shifted copies of the original spectrum. Exact identity with
/// `dft1d(subsample(s, stride))` whenever `stride` divides N.
pub fn fold_spectrum(spectrum: &Spectrum, stride: usize) -> Result<Spectrum> {
    if stride < 1 {
        return Err(Error::invalid("stride must be >= 1"));
    }
    let n = spectrum.len();
    if n % stride != 0 {
        return Err(Error::invalid(format!(
            "spectrum length {n} not divisible by stride {stride}; truncate the signal first"
        )));
    }
    let m = n / stride;
    let scale = 1.0 / stride as f64;
    let coefficients = (0..m)
        .map(|k| {
            (0..stride)
                .map(|r| spectrum.coefficients[k + r * m])
                .sum::<Complex64>()
                * scale
        })
        .collect();
    Ok(Spectrum {
        coefficients,
        origin: spectrum.origin,
    })
}

fn high_band_fraction(items: impl Iterator<Item = (f64, f64)>) -> f64 {
    // items are (|frequency| minus cutoff, squared magnitude)
    let mut high = 0.0;
    let mut total = 0.0;
    for (excess, e) in items {
        total += e;
        if excess > 0.0 {
            high += e;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        high / total
    }
}

fn bin_freq(k: usize, n: usize) -> f64 {
    // normalized frequency of dc-first bin k, in [-0.5, 0.5)
    let half = n / 2;
    if k <= half {
        k as f64 / n as f64
    } else {
        k as f64 / n as f64 - 1.0
    }
}

/// Fraction of signal energy strictly above the subsampling Nyquist
/// frequency `pi/stride`, optionally after low-pass filtering. Zero means
/// subsampling at `stride` satisfies the Nyquist rate.
pub fn aliasing_energy(
    signal: &Signal1d,
    stride: usize,
    prefilter: Option<&crate::filters::Kernel>,
) -> Result<f64> {
    if stride < 2 {
        return Err(Error::invalid("aliasing_energy requires stride >= 2"));
    }
    let filtered = match prefilter {
        Some(k) => Signal1d(crate::filters::convolve_same_1d(
            &signal.0,
            k,
            crate::filters::Padding::Reflect,
        )),
        None => signal.clone(),
    };
    let spec = dft1d(&filtered)?;
    let n = spec.len();
    let nyquist = 0.5 / stride as f64;
    let items = spec
        .coefficients
        .iter()
        .enumerate()
        .map(|(k, c)| (bin_freq(k, n).abs() - nyquist, c.norm_sqr()));
    Ok(high_band_fraction(items))
}

/// 2-D analogue of [`aliasing_energy`]: energy in bins where either axis
/// frequency exceeds the stage Nyquist, as a fraction of total energy.
pub fn aliasing_energy2d(
    img: &Image2d,
    stride: usize,
    prefilter: Option<&crate::filters::Kernel>,
) -> Result<f64> {
    if stride < 2 {
        return Err(Error::invalid("aliasing_energy requires stride >= 2"));
    }
    let filtered = match prefilter {
        Some(k) => crate::filters::convolve_same_2d(img, k, crate::filters::Padding::Reflect)?,
        None => img.clone(),
    };
    let spec = dft2d(&filtered)?;
    let nyquist = 0.5 / stride as f64;
    let (h, w) = (spec.height, spec.width);
    let mut high = 0.0;
    let mut total = 0.0;
    for u in 0..h {
        let fu = bin_freq(u, h).abs();
        for v in 0..w {
            let fv = bin_freq(v, w).abs();
            let e = spec.coefficients[u * w + v].norm_sqr();
            total += e;
            if fu > nyquist || fv > nyquist {
                high += e;
            }
        }
    }
    Ok(if total == 0.0 { 0.0 } else { high / total })
}

/// Maximum radial frequency of the centered 2-D spectrum, the corner of
/// the [-0.5, 0.5]^2 square.
pub const NOTCH_R_MAX: f64 = std::f64::consts::SQRT_2 * 0.5;

/// Zero out one radial frequency band of the image's spectrum and
/// transform back. Bands are equal-width radius intervals covering
/// `[0, NOTCH_R_MAX]`; the last band is closed so the bands partition
/// every bin exactly once.
pub fn notch_filter(img: &Image2d, band_index: usize, n_bands: usize) -> Result<Image2d> {
    if n_bands == 0 || band_index >= n_bands {
        return Err(Error::invalid(format!(
            "band index {band_index} out of range for {n_bands} bands"
        )));
    }
    let mut spec = dft2d(img)?;
    let band_width = NOTCH_R_MAX / n_bands as f64;
    // boundaries computed the same way for adjacent bands, so every bin
    // falls in exactly one band
    let lo = band_index as f64 * band_width;
    let hi = (band_index + 1) as f64 * band_width;
    let last = band_index == n_bands - 1;
    let (h, w) = (spec.height, spec.width);
    for u in 0..h {
        let fu = bin_freq(u, h);
        for v in 0..w {
            let fv = bin_freq(v, w);
            let r = (fu * fu + fv * fv).sqrt();
            if (r >= lo && r < hi) || (last && r >= lo) {
                spec.coefficients[u * w + v] = Complex64::new(0.0, 0.0);
            }
        }
    }
    idft2d(&spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn signal(v: &[f64]) -> Signal1d {
        Signal1d::new(v.to_vec()).unwrap()
    }

    fn max_abs_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn impulse_spectrum_is_flat() {
        let mut s = vec![0.0; 8];
        s[0] = 1.0;
        let spec = dft1d(&signal(&s)).unwrap();
        for c in &spec.coefficients {
            assert!((c - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn shifted_impulse_has_linear_phase() {
        let n = 8;
        let n0 = 3;
        let mut s = vec![0.0; n];
        s[n0] = 1.0;
        let spec = dft1d(&signal(&s)).unwrap();
        for (k, c) in spec.coefficients.iter().enumerate() {
            assert!((c.norm() - 1.0).abs() < 1e-12);
            let expected = -2.0 * std::f64::consts::PI * (k as f64) * (n0 as f64) / n as f64;
            let diff = (c.arg() - expected).rem_euclid(2.0 * std::f64::consts::PI);
            let diff = diff.min(2.0 * std::f64::consts::PI - diff);
            assert!(diff < 1e-9, "bin {k}: phase {} vs {}", c.arg(), expected);
        }
    }

    #[test]
    fn symmetric_impulse_pair_is_cosine() {
        // delta[n-2] + delta[n+2] over a length-16 circle
        let n = 16;
        let mut s = vec![0.0; n];
        s[2] = 1.0;
        s[n - 2] = 1.0;
        let spec = dft1d(&signal(&s)).unwrap();
        for (m, c) in spec.coefficients.iter().enumerate() {
            let w = 2.0 * std::f64::consts::PI * m as f64 / n as f64;
            let expected = 2.0 * (2.0 * w).cos();
            assert!((c.re - expected).abs() < 1e-9);
            assert!(c.im.abs() < 1e-9);
        }
    }

    #[test]
    fn constant_spectrum_inverts_to_impulse() {
        let spec = Spectrum {
            coefficients: vec![Complex64::new(1.0, 0.0); 8],
            origin: OriginConvention::DcFirst,
        };
        let s = idft1d(&spec).unwrap();
        assert!((s.0[0] - 1.0).abs() < 1e-12);
        for &v in &s.0[1..] {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn zero_spectrum_inverts_to_zero() {
        let spec = Spectrum {
            coefficients: vec![Complex64::new(0.0, 0.0); 5],
            origin: OriginConvention::DcFirst,
        };
        let s = idft1d(&spec).unwrap();
        assert!(s.0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fft_matches_direct_dft() {
        let mut rng = rand_signal(64, 11);
        let spec = dft1d(&Signal1d(rng.clone())).unwrap();
        let direct = dft_direct(&rng);
        for (a, b) in spec.coefficients.iter().zip(&direct) {
            assert!((a - b).norm() < 1e-9);
        }
        rng.truncate(48); // non power of two falls back to direct
        let spec = dft1d(&Signal1d(rng.clone())).unwrap();
        let direct = dft_direct(&rng);
        for (a, b) in spec.coefficients.iter().zip(&direct) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    fn rand_signal(n: usize, seed: u64) -> Vec<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn dft2d_matches_double_sum_oracle() {
        // pure horizontal sinusoid: exactly two conjugate bins on the
        // horizontal frequency axis
        let (h, w) = (8, 16);
        let cycles = 3.0;
        let mut data = vec![0.0; h * w];
        for r in 0..h {
            for c in 0..w {
                data[r * w + c] =
                    (2.0 * std::f64::consts::PI * cycles * c as f64 / w as f64).cos();
            }
        }
        let img = Image2d::new(h, w, data.clone()).unwrap();
        let spec = dft2d(&img).unwrap();

        // brute-force double sum
        for u in 0..h {
            for v in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for r in 0..h {
                    for c in 0..w {
                        let ang = -2.0 * std::f64::consts::PI
                            * (u as f64 * r as f64 / h as f64 + v as f64 * c as f64 / w as f64);
                        acc += Complex64::from_polar(data[r * w + c], ang);
                    }
                }
                assert!((spec.coefficients[u * w + v] - acc).norm() < 1e-9);
            }
        }

        let expected_energy = (h * w) as f64 / 2.0;
        for u in 0..h {
            for v in 0..w {
                let mag = spec.coefficients[u * w + v].norm();
                if u == 0 && (v == 3 || v == w - 3) {
                    assert!((mag - expected_energy).abs() < 1e-9);
                } else {
                    assert!(mag < 1e-9, "unexpected energy at ({u},{v}): {mag}");
                }
            }
        }
    }

    #[test]
    fn dft2d_impulse_is_constant_plane() {
        let mut data = vec![0.0; 4 * 4];
        data[0] = 1.0;
        let spec = dft2d(&Image2d::new(4, 4, data).unwrap()).unwrap();
        for c in &spec.coefficients {
            assert!((c - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn round_trip_2d() {
        let data = rand_signal(16 * 16, 3);
        let img = Image2d::new(16, 16, data).unwrap();
        let back = idft2d(&dft2d(&img).unwrap()).unwrap();
        assert!(max_abs_err(&img.data, &back.data) < 1e-9);
    }

    #[test]
    fn subsample_basics() {
        let s = signal(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(subsample(&s, 2).unwrap().0, vec![0.0, 2.0, 4.0]);
        assert_eq!(subsample(&s, 1).unwrap().0, s.0);
        assert!(subsample(&s, 0).is_err());
        // non-divisible length keeps ceil(N/stride) samples
        let s = signal(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(subsample(&s, 2).unwrap().0, vec![0.0, 2.0, 4.0]);
    }

    #[test]
    fn folding_identity_on_random_signals() {
        for seed in 0..10 {
            for stride in [2usize, 3, 4] {
                let s = Signal1d(rand_signal(24, seed));
                let folded = fold_spectrum(&dft1d(&s).unwrap(), stride).unwrap();
                let sub_spec = dft1d(&subsample(&s, stride).unwrap()).unwrap();
                for (a, b) in folded.coefficients.iter().zip(&sub_spec.coefficients) {
                    assert!((a - b).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn bandlimited_fold_has_no_corruption() {
        // all energy below pi/2: bins 0..N/4 and conjugates
        let n = 32;
        let mut data = vec![0.0; n];
        for (i, v) in data.iter_mut().enumerate() {
            let t = i as f64 / n as f64;
            *v = (2.0 * std::f64::consts::PI * 3.0 * t).sin()
                + 0.5 * (2.0 * std::f64::consts::PI * 5.0 * t).cos();
        }
        let s = Signal1d(data);
        assert!(aliasing_energy(&s, 2, None).unwrap() < 1e-12);
        let spec = dft1d(&s).unwrap();
        let folded = fold_spectrum(&spec, 2).unwrap();
        // low half of original, scaled by 1/2
        for k in 0..n / 4 {
            assert!((folded.coefficients[k] - spec.coefficients[k] * 0.5).norm() < 1e-9);
        }
    }

    #[test]
    fn sinusoid_above_nyquist_fully_aliases() {
        let n = 32;
        let data: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 12.0 * i as f64 / n as f64).sin())
            .collect();
        let s = Signal1d(data);
        // 12/32 = 3/8 cycles-per-sample, above 1/4
        let e = aliasing_energy(&s, 2, None).unwrap();
        assert!((e - 1.0).abs() < 1e-6);
        // after stride-2 subsampling the energy lands at 1/4 of the shorter
        // signal: |3/8 - 1/2| * 2
        let sub = subsample(&s, 2).unwrap();
        let psd = dft1d(&sub).unwrap().psd();
        let peak = psd
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        let m = sub.len();
        let f = bin_freq(peak, m).abs();
        assert!((f - 0.25).abs() < 1e-12, "peak at {f}");
    }

    #[test]
    fn prefilter_reduces_aliasing_energy() {
        let n = 64;
        let data: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 24.0 * i as f64 / n as f64).sin())
            .collect();
        let s = Signal1d(data);
        let unfiltered = aliasing_energy(&s, 2, None).unwrap();
        let k7 = crate::filters::Kernel::binomial(7).unwrap().normalized();
        let filtered = aliasing_energy(&s, 2, Some(&k7)).unwrap();
        assert!(filtered < unfiltered);
    }

    #[test]
    fn notch_band_errors() {
        let img = Image2d::new(4, 4, vec![1.0; 16]).unwrap();
        assert!(notch_filter(&img, 16, 16).is_err());
        assert!(notch_filter(&img, 0, 0).is_err());
    }

    #[test]
    fn notch_removes_dc_in_band_zero() {
        let img = Image2d::new(8, 8, vec![3.0; 64]).unwrap();
        let out = notch_filter(&img, 0, 16).unwrap();
        assert!(out.data.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn notch_partition_reconstructs_image() {
        let data = rand_signal(16 * 16, 9);
        let img = Image2d::new(16, 16, data).unwrap();
        let n_bands = 16;
        let mut removed_sum = vec![0.0; img.data.len()];
        for b in 0..n_bands {
            let out = notch_filter(&img, b, n_bands).unwrap();
            for (acc, (orig, kept)) in removed_sum.iter_mut().zip(img.data.iter().zip(&out.data)) {
                *acc += orig - kept;
            }
        }
        assert!(max_abs_err(&removed_sum, &img.data) < 1e-9);
    }

    #[test]
    fn notch_outer_band_barely_touches_smooth_image() {
        // low-pass image: broad gaussian bump
        let n = 16;
        let mut data = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                let dr = r as f64 - 7.5;
                let dc = c as f64 - 7.5;
                data[r * n + c] = (-(dr * dr + dc * dc) / 18.0).exp();
            }
        }
        let img = Image2d::new(n, n, data).unwrap();
        // residual energy in the outer band is tiny by construction
        let out = notch_filter(&img, 15, 16).unwrap();
        assert!(max_abs_err(&img.data, &out.data) < 1e-3);
    }

    proptest! {
        #[test]
        fn round_trip_1d(v in proptest::collection::vec(-100.0f64..100.0, 1..64)) {
            let s = Signal1d::new(v).unwrap();
            let back = idft1d(&dft1d(&s).unwrap()).unwrap();
            prop_assert!(max_abs_err(&s.0, &back.0) < 1e-9);
        }

        #[test]
        fn parseval(v in proptest::collection::vec(-10.0f64..10.0, 1..64)) {
            let s = Signal1d::new(v).unwrap();
            let spec = dft1d(&s).unwrap();
            let time_energy: f64 = s.0.iter().map(|x| x * x).sum();
            let freq_energy = spec.energy() / s.len() as f64;
            let scale = time_energy.abs().max(1.0);
            prop_assert!((time_energy - freq_energy).abs() / scale < 1e-9);
        }

        #[test]
        fn folding_identity(
            v in proptest::collection::vec(-10.0f64..10.0, 12..=48),
            stride in 2usize..=4,
        ) {
            let n = (v.len() / stride) * stride;
            let s = Signal1d::new(v[..n].to_vec()).unwrap();
            let folded = fold_spectrum(&dft1d(&s).unwrap(), stride).unwrap();
            let sub_spec = dft1d(&subsample(&s, stride).unwrap()).unwrap();
            for (a, b) in folded.coefficients.iter().zip(&sub_spec.coefficients) {
                prop_assert!((a - b).norm() < 1e-9);
            }
        }
    }
}
