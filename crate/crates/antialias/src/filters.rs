//! Binomial low-pass kernels, their closed-form spectra, and filter
//! application. The taps are the ground truth; the printed closed forms
//! are kept alongside a corrected variant (see [`PsdForm`]).

use crate::spectral::Image2d;
use crate::{Error, Result};

/// Border handling for same-size convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Mirror about the edge sample without repeating it: [-1] -> [1],
    /// [n] -> [n-2].
    Reflect,
    Zero,
}

/// Fixed symmetric filter taps, 1-D. 2-D use is separable via [`Kernel::outer2d`].
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    taps: Vec<f64>,
    normalized: bool,
}

impl Kernel {
    /// Raw binomial taps: row `k-1` of Pascal's triangle.
    pub fn binomial(k: usize) -> Result<Kernel> {
        if k < 3 || k % 2 == 0 {
            return Err(Error::invalid(format!(
                "binomial kernel size must be odd and >= 3, got {k}"
            )));
        }
        let mut taps = vec![1.0];
        for _ in 1..k {
            let mut next = vec![1.0; taps.len() + 1];
            for i in 1..taps.len() {
                next[i] = taps[i - 1] + taps[i];
            }
            taps = next;
        }
        Ok(Kernel {
            taps,
            normalized: false,
        })
    }

    pub fn from_taps(taps: Vec<f64>, normalized: bool) -> Result<Kernel> {
        if taps.is_empty() || taps.len() % 2 == 0 {
            return Err(Error::invalid("kernel length must be odd"));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("kernel tap".into()));
        }
        Ok(Kernel { taps, normalized })
    }

    /// Unit-DC-gain variant: taps divided by their sum (2^(k-1) for raw
    /// binomial taps).
    pub fn normalized(&self) -> Kernel {
        if self.normalized {
            return self.clone();
        }
        let sum: f64 = self.taps.iter().sum();
        Kernel {
            taps: self.taps.iter().map(|t| t / sum).collect(),
            normalized: true,
        }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Separable 2-D taps, `out[i][j] = taps[i] * taps[j]`, row-major.
    pub fn outer2d(&self) -> Vec<f64> {
        let k = self.taps.len();
        let mut out = Vec::with_capacity(k * k);
        for &a in &self.taps {
            for &b in &self.taps {
                out.push(a * b);
            }
        }
        out
    }

    /// Magnitude of the frequency response at angular frequency `w`,
    /// computed from the taps (the ground truth for the closed forms).
    pub fn psd_at(&self, w: f64) -> f64 {
        let center = (self.taps.len() / 2) as isize;
        let mut re = 0.0;
        let mut im = 0.0;
        for (i, &t) in self.taps.iter().enumerate() {
            let n = i as isize - center;
            re += t * (w * n as f64).cos();
            im -= t * (w * n as f64).sin();
        }
        (re * re + im * im).sqrt()
    }
}

/// Which printing of the closed-form PSD to evaluate.
///
/// The published forms for k=5 and k=7 do not match the DFT of their own
/// taps; `Corrected` is the version that does.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsdForm {
    Printed,
    Corrected,
}

/// Closed-form PSD of the binomial kernels, k in {3, 5, 7}.
///
/// Corrected forms: x1 = 2 + 2cos(w); x2 = 6 + 8cos(w) + 2cos(2w);
/// x3 = 20 + 30cos(w) + 12cos(2w) + 2cos(3w).
pub fn binomial_psd_closed_form(k: usize, w: f64, form: PsdForm) -> Result<f64> {
    let v = match (k, form) {
        (3, _) => 2.0 + 2.0 * w.cos(),
        (5, PsdForm::Printed) => 6.0 + 8.0 * w.cos() + 2.0 * w.cos(),
        (5, PsdForm::Corrected) => 6.0 + 8.0 * w.cos() + 2.0 * (2.0 * w).cos(),
        (7, PsdForm::Printed) => {
            20.0 + 30.0 * w.cos() + 12.0 * (2.0 * w).cos() + (3.0 * w).cos()
        }
        (7, PsdForm::Corrected) => {
            20.0 + 30.0 * w.cos() + 12.0 * (2.0 * w).cos() + 2.0 * (3.0 * w).cos()
        }
        _ => {
            return Err(Error::invalid(format!(
                "closed-form PSD only defined for k in {{3,5,7}}, got {k}"
            )))
        }
    };
    Ok(v.abs())
}

fn pad_index(i: isize, n: usize, padding: Padding) -> Option<usize> {
    let n = n as isize;
    match padding {
        Padding::Zero => {
            if i < 0 || i >= n {
                None
            } else {
                Some(i as usize)
            }
        }
        Padding::Reflect => {
            if n == 1 {
                return Some(0);
            }
            // period of the mirrored extension is 2n - 2
            let period = 2 * n - 2;
            let mut i = i.rem_euclid(period);
            if i >= n {
                i = period - i;
            }
            Some(i as usize)
        }
    }
}

/// Same-size 1-D convolution with a symmetric kernel.
pub fn convolve_same_1d(x: &[f64], kern: &Kernel, padding: Padding) -> Vec<f64> {
    let center = (kern.len() / 2) as isize;
    let mut out = vec![0.0; x.len()];
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (t, &tap) in kern.taps().iter().enumerate() {
            let src = i as isize + t as isize - center;
            if let Some(j) = pad_index(src, x.len(), padding) {
                acc += tap * x[j];
            }
        }
        *o = acc;
    }
    out
}

/// Separable same-size 2-D convolution: rows then columns.
pub fn convolve_same_2d(img: &Image2d, kern: &Kernel, padding: Padding) -> Result<Image2d> {
    let (h, w) = (img.height, img.width);
    let mut tmp = vec![0.0; h * w];
    for r in 0..h {
        let filtered = convolve_same_1d(img.row(r), kern, padding);
        tmp[r * w..(r + 1) * w].copy_from_slice(&filtered);
    }
    let mut out = vec![0.0; h * w];
    let mut col = vec![0.0; h];
    for c in 0..w {
        for r in 0..h {
            col[r] = tmp[r * w + c];
        }
        let filtered = convolve_same_1d(&col, kern, padding);
        for r in 0..h {
            out[r * w + c] = filtered[r];
        }
    }
    Image2d::new(h, w, out)
}

/// Low-pass filter then keep every `stride`-th sample: the fixed
/// anti-aliasing layer used by the graph rewrites and the CNN engine.
pub fn blur_subsample_1d(x: &[f64], kern: &Kernel, stride: usize) -> Result<Vec<f64>> {
    if stride < 2 {
        return Err(Error::invalid("blur_subsample requires stride >= 2"));
    }
    let blurred = convolve_same_1d(x, kern, Padding::Reflect);
    Ok(blurred.into_iter().step_by(stride).collect())
}

/// 2-D variant of [`blur_subsample_1d`].
pub fn blur_subsample_2d(img: &Image2d, kern: &Kernel, stride: usize) -> Result<Image2d> {
    if stride < 2 {
        return Err(Error::invalid("blur_subsample requires stride >= 2"));
    }
    let blurred = convolve_same_2d(img, kern, Padding::Reflect)?;
    crate::spectral::subsample2d(&blurred, stride)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{aliasing_energy, dft1d, Signal1d};

    #[test]
    fn pascal_rows() {
        assert_eq!(Kernel::binomial(3).unwrap().taps(), &[1.0, 2.0, 1.0]);
        assert_eq!(
            Kernel::binomial(5).unwrap().taps(),
            &[1.0, 4.0, 6.0, 4.0, 1.0]
        );
        assert_eq!(
            Kernel::binomial(7).unwrap().taps(),
            &[1.0, 6.0, 15.0, 20.0, 15.0, 6.0, 1.0]
        );
        assert!(Kernel::binomial(4).is_err());
        assert!(Kernel::binomial(1).is_err());
    }

    #[test]
    fn normalization() {
        for k in [3, 5, 7] {
            let kern = Kernel::binomial(k).unwrap().normalized();
            let sum: f64 = kern.taps().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            let raw_sum: f64 = Kernel::binomial(k).unwrap().taps().iter().sum();
            assert_eq!(raw_sum, 2f64.powi(k as i32 - 1));
        }
    }

    #[test]
    fn outer_product_2d() {
        let k3 = Kernel::binomial(3).unwrap().normalized();
        let taps2d = k3.outer2d();
        let expected: Vec<f64> = [1.0, 2.0, 1.0, 2.0, 4.0, 2.0, 1.0, 2.0, 1.0]
            .iter()
            .map(|v| v / 16.0)
            .collect();
        for (a, b) in taps2d.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-15);
        }
        let k5 = Kernel::binomial(5).unwrap().normalized();
        let center = k5.outer2d()[2 * 5 + 2];
        assert!((center - 0.140625).abs() < 1e-15);
        for k in [3, 5, 7] {
            let sum: f64 = Kernel::binomial(k).unwrap().normalized().outer2d().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_k3() {
        assert_eq!(
            binomial_psd_closed_form(3, 0.0, PsdForm::Printed).unwrap(),
            4.0
        );
        let at_pi = binomial_psd_closed_form(3, std::f64::consts::PI, PsdForm::Printed).unwrap();
        assert!(at_pi.abs() < 1e-12);
        assert!(binomial_psd_closed_form(9, 0.0, PsdForm::Printed).is_err());
    }

    #[test]
    fn printed_forms_diverge_from_taps() {
        // both printings agree with the taps at w=0 but the printed k=5
        // form is wrong at pi/2
        let k5 = Kernel::binomial(5).unwrap();
        assert!((binomial_psd_closed_form(5, 0.0, PsdForm::Printed).unwrap() - 16.0).abs() < 1e-12);
        assert!((k5.psd_at(0.0) - 16.0).abs() < 1e-12);
        let w = std::f64::consts::FRAC_PI_2;
        let printed = binomial_psd_closed_form(5, w, PsdForm::Printed).unwrap();
        let corrected = binomial_psd_closed_form(5, w, PsdForm::Corrected).unwrap();
        assert!((corrected - k5.psd_at(w)).abs() < 1e-9);
        assert!((printed - k5.psd_at(w)).abs() > 1e-3);
    }

    #[test]
    fn corrected_forms_match_tap_dft() {
        for k in [3usize, 5, 7] {
            let kern = Kernel::binomial(k).unwrap();
            for i in 0..64 {
                let w = std::f64::consts::PI * i as f64 / 63.0;
                let closed = binomial_psd_closed_form(k, w, PsdForm::Corrected).unwrap();
                assert!(
                    (closed - kern.psd_at(w)).abs() < 1e-9,
                    "k={k} w={w}: {closed} vs {}",
                    kern.psd_at(w)
                );
            }
        }
    }

    #[test]
    fn tap_psd_matches_zero_padded_dft() {
        // |dft of zero-padded taps| sampled on the dft grid equals psd_at
        for k in [3usize, 5, 7] {
            let kern = Kernel::binomial(k).unwrap();
            let n = 64;
            let mut padded = vec![0.0; n];
            for (i, &t) in kern.taps().iter().enumerate() {
                padded[i] = t;
            }
            let spec = dft1d(&Signal1d::new(padded).unwrap()).unwrap();
            for (m, c) in spec.coefficients.iter().enumerate() {
                let w = 2.0 * std::f64::consts::PI * m as f64 / n as f64;
                assert!((c.norm() - kern.psd_at(w)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn attenuation_ordering() {
        let at = |k: usize, w: f64| {
            let kern = Kernel::binomial(k).unwrap().normalized();
            kern.psd_at(w)
        };
        let pi = std::f64::consts::PI;
        // all three have an analytic zero at pi, so the ordering holds up
        // to roundoff
        assert!(at(7, pi) <= at(5, pi) + 1e-12 && at(5, pi) <= at(3, pi) + 1e-12);
        // at the stride-2 cut-off frequency the ordering is strict
        let w = pi / 2.0;
        assert!(at(7, w) < at(5, w) && at(5, w) < at(3, w));
        // in the passband: smaller support preserves more
        let w = pi / 4.0;
        assert!(at(3, w) >= at(5, w) && at(5, w) >= at(7, w));
    }

    #[test]
    fn self_composition_is_next_binomial() {
        // [1,2,1] * [1,2,1] = [1,4,6,4,1], so two k=3 passes equal one
        // k=5 pass (up to normalization)
        let x: Vec<f64> = (0..17).map(|i| ((i * 7) % 13) as f64).collect();
        let k3 = Kernel::binomial(3).unwrap();
        let k5 = Kernel::binomial(5).unwrap();
        let twice = convolve_same_1d(&convolve_same_1d(&x, &k3, Padding::Zero), &k3, Padding::Zero);
        let once = convolve_same_1d(&x, &k5, Padding::Zero);
        // interior points are exact in integer arithmetic; borders differ
        // because zero padding is applied between passes
        for i in 2..x.len() - 2 {
            assert_eq!(twice[i], once[i]);
        }
        // tap-sequence identity is exact everywhere
        let mut taps_conv = vec![0.0; 5];
        for (i, &a) in k3.taps().iter().enumerate() {
            for (j, &b) in k3.taps().iter().enumerate() {
                taps_conv[i + j] += a * b;
            }
        }
        assert_eq!(taps_conv, k5.taps());
    }

    #[test]
    fn impulse_kernel_has_flat_spectrum() {
        let k1 = Kernel::from_taps(vec![1.0], true).unwrap();
        for i in 0..64 {
            let w = std::f64::consts::PI * i as f64 / 63.0;
            assert!((k1.psd_at(w) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn convolve_same_basics() {
        let k3 = Kernel::binomial(3).unwrap();
        let mut impulse = vec![0.0; 7];
        impulse[3] = 1.0;
        let out = convolve_same_1d(&impulse, &k3, Padding::Zero);
        assert_eq!(out, vec![0.0, 0.0, 1.0, 2.0, 1.0, 0.0, 0.0]);

        // DC gain 1 with reflect padding preserves constants exactly
        let c = vec![2.5; 9];
        let out = convolve_same_1d(&c, &k3.normalized(), Padding::Reflect);
        for v in out {
            assert!((v - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn separable_equals_full_2d() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let (h, w) = (9, 11);
        let data: Vec<f64> = (0..h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let img = Image2d::new(h, w, data).unwrap();
        let kern = Kernel::binomial(5).unwrap().normalized();
        let sep = convolve_same_2d(&img, &kern, Padding::Zero).unwrap();

        // full 2-D convolution with the outer-product taps
        let taps2d = kern.outer2d();
        let k = kern.len() as isize;
        let c = k / 2;
        for r in 0..h as isize {
            for col in 0..w as isize {
                let mut acc = 0.0;
                for i in 0..k {
                    for j in 0..k {
                        let rr = r + i - c;
                        let cc = col + j - c;
                        if rr >= 0 && rr < h as isize && cc >= 0 && cc < w as isize {
                            acc += taps2d[(i * k + j) as usize]
                                * img.at(rr as usize, cc as usize);
                        }
                    }
                }
                let got = sep.at(r as usize, col as usize);
                assert!((got - acc).abs() < 1e-12, "({r},{col}): {got} vs {acc}");
            }
        }
    }

    #[test]
    fn blur_subsample_basics() {
        let k3 = Kernel::binomial(3).unwrap().normalized();
        let c = vec![1.0; 8];
        let out = blur_subsample_1d(&c, &k3, 2).unwrap();
        assert_eq!(out.len(), 4);
        for v in out {
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert!(blur_subsample_1d(&c, &k3, 1).is_err());
    }

    #[test]
    fn nyquist_sinusoid_is_killed_by_k3() {
        // x1 has a zero at w = pi
        let n = 16;
        let x: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let k3 = Kernel::binomial(3).unwrap().normalized();
        let out = blur_subsample_1d(&x, &k3, 2).unwrap();
        for v in out {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn blur_reduces_aliasing_tenfold_on_noise() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..256).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = Signal1d::new(x).unwrap();
        let k7 = Kernel::binomial(7).unwrap().normalized();
        let plain = aliasing_energy(&s, 2, None).unwrap();
        let filtered = aliasing_energy(&s, 2, Some(&k7)).unwrap();
        assert!(plain >= 10.0 * filtered, "plain {plain} filtered {filtered}");
    }
}
