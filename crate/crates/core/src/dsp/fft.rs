//! In-place iterative radix-2 FFT and the power spectrum built on it.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Forward DFT `X_k = Σ_n x_n e^{−2πikn/N}` computed in place.
/// `re.len()` must be a power of two and equal to `im.len()`.
pub fn fft_in_place(re: &mut [f64], im: &mut [f64]) -> Result<()> {
    let n = re.len();
    if n != im.len() {
        return Err(Error::shape("fft", "real and imaginary parts differ in length"));
    }
    if !n.is_power_of_two() {
        return Err(Error::invalid("fft", format!("length {n} is not a power of two")));
    }
    if n <= 1 {
        return Ok(());
    }

    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }

    let mut size = 2;
    while size <= n {
        let half = size / 2;
        let step = -2.0 * PI / size as f64;
        for start in (0..n).step_by(size) {
            for k in 0..half {
                let (sin, cos) = (step * k as f64).sin_cos();
                let (a, b) = (start + k, start + k + half);
                let tr = re[b] * cos - im[b] * sin;
                let ti = re[b] * sin + im[b] * cos;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
            }
        }
        size *= 2;
    }
    Ok(())
}

/// `|X_k|²` for `k = 0..=fft_size/2` of a real frame zero-padded to `fft_size`.
pub fn power_spectrum(frame: &[f64], fft_size: usize) -> Result<Vec<f64>> {
    if frame.len() > fft_size {
        return Err(Error::invalid(
            "power_spectrum",
            format!("frame of {} samples exceeds fft size {fft_size}", frame.len()),
        ));
    }
    let mut re = vec![0.0; fft_size];
    let mut im = vec![0.0; fft_size];
    re[..frame.len()].copy_from_slice(frame);
    fft_in_place(&mut re, &mut im)?;
    Ok((0..=fft_size / 2).map(|k| re[k] * re[k] + im[k] * im[k]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_dft(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = x.len();
        let mut re = vec![0.0; n];
        let mut im = vec![0.0; n];
        for k in 0..n {
            for (t, &v) in x.iter().enumerate() {
                let angle = -2.0 * PI * (k * t % n) as f64 / n as f64;
                re[k] += v * angle.cos();
                im[k] += v * angle.sin();
            }
        }
        (re, im)
    }

    #[test]
    fn matches_naive_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &n in &[1usize, 2, 8, 64, 512] {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (nr, ni) = naive_dft(&x);
            let mut re = x.clone();
            let mut im = vec![0.0; n];
            fft_in_place(&mut re, &mut im).unwrap();
            let scale = nr.iter().chain(&ni).fold(1.0f64, |m, v| m.max(v.abs()));
            for k in 0..n {
                assert!((re[k] - nr[k]).abs() / scale < 1e-9, "re n={n} k={k}");
                assert!((im[k] - ni[k]).abs() / scale < 1e-9, "im n={n} k={k}");
            }
        }
    }

    #[test]
    fn parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..512).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut re = x.clone();
        let mut im = vec![0.0; 512];
        fft_in_place(&mut re, &mut im).unwrap();
        let time: f64 = x.iter().map(|v| v * v).sum();
        let freq: f64 = re.iter().zip(&im).map(|(a, b)| a * a + b * b).sum::<f64>() / 512.0;
        assert!((time - freq).abs() / time < 1e-9);
    }

    #[test]
    fn rejects_non_power_of_two() {
        let mut re = vec![0.0; 6];
        let mut im = vec![0.0; 6];
        assert!(fft_in_place(&mut re, &mut im).is_err());
    }
}
