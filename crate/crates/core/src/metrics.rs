//! PSNR and SSIM for images and volumes with intensities in `[0, 1]`.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::volume::Volume;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Peak signal-to-noise ratio with peak 1. Identical inputs give `+inf`.
pub fn psnr(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} values", a.len()),
            found: format!("{} values", b.len()),
        });
    }
    if a.is_empty() {
        return Err(Error::InvalidInput("PSNR of empty inputs".into()));
    }
    let mse = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        / a.len() as f64;
    Ok(psnr_from_mse(mse))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// PSNR over the whole 3D array.
pub fn psnr_volume(a: &Volume, b: &Volume) -> Result<f64> {
    check_dims(a, b)?;
    psnr(a.data(), b.data())
}

fn check_dims(a: &Volume, b: &Volume) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", a.dims()),
            found: format!("{:?}", b.dims()),
        });
    }
    Ok(())
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (k, v) in w.iter_mut().enumerate() {
        let d = k as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Separable "valid" filtering with the SSIM window.
fn filter_valid(img: &Array2<f64>, w: &[f64; SSIM_WINDOW]) -> Array2<f64> {
    let (rows, cols) = img.dim();
    let (or, oc) = (rows + 1 - SSIM_WINDOW, cols + 1 - SSIM_WINDOW);
    let mut horizontal = Array2::<f64>::zeros((rows, oc));
    for r in 0..rows {
        for c in 0..oc {
            horizontal[[r, c]] = (0..SSIM_WINDOW).map(|k| w[k] * img[[r, c + k]]).sum();
        }
    }
    let mut out = Array2::<f64>::zeros((or, oc));
    for r in 0..or {
        for c in 0..oc {
            out[[r, c]] = (0..SSIM_WINDOW).map(|k| w[k] * horizontal[[r + k, c]]).sum();
        }
    }
    out
}

/// Mean structural similarity with an 11x11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03 and dynamic range 1.
pub fn ssim2d(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", a.dim()),
            found: format!("{:?}", b.dim()),
        });
    }
    let (rows, cols) = a.dim();
    if rows < SSIM_WINDOW || cols < SSIM_WINDOW {
        return Err(Error::InvalidInput(format!(
            "SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {rows}x{cols}"
        )));
    }
    let w = gaussian_window();
    let a = a.to_owned();
    let b = b.to_owned();
    let mu_a = filter_valid(&a, &w);
    let mu_b = filter_valid(&b, &w);
    let aa = filter_valid(&(&a * &a), &w);
    let bb = filter_valid(&(&b * &b), &w);
    let ab = filter_valid(&(&a * &b), &w);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a.as_slice().unwrap()[i], mu_b.as_slice().unwrap()[i]);
        let va = aa.as_slice().unwrap()[i] - ma * ma;
        let vb = bb.as_slice().unwrap()[i] - mb * mb;
        let cov = ab.as_slice().unwrap()[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneSsim {
    pub axial: f64,
    pub coronal: f64,
    pub sagittal: f64,
}

impl PlaneSsim {
    pub fn mean(&self) -> f64 {
        (self.axial + self.coronal + self.sagittal) / 3.0
    }
}

fn family_mean(a: &Volume, b: &Volume, axis: usize) -> Result<f64> {
    let n = a.dims()[axis];
    let mut total = 0.0;
    for k in 0..n {
        let (rows, cols, sa) = a.slice(axis, k);
        let (_, _, sb) = b.slice(axis, k);
        let ia = Array2::from_shape_vec((rows, cols), sa).expect("slice shape");
        let ib = Array2::from_shape_vec((rows, cols), sb).expect("slice shape");
        total += ssim2d(ia.view(), ib.view())?;
    }
    Ok(total / n as f64)
}

/// SSIM averaged over every slice of each orthogonal plane family.
/// Axial slices are normal to z, coronal to y, sagittal to x.
pub fn ssim_volumetric(a: &Volume, b: &Volume) -> Result<PlaneSsim> {
    check_dims(a, b)?;
    Ok(PlaneSsim {
        axial: family_mean(a, b, 2)?,
        coronal: family_mean(a, b, 1)?,
        sagittal: family_mean(a, b, 0)?,
    })
}

fn finite_or_null<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

fn null_is_infinite<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

/// One evaluation record. Infinite PSNR (identical volumes) serializes as
/// `null`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: String,
    pub scale: [f64; 3],
    #[serde(serialize_with = "finite_or_null", deserialize_with = "null_is_infinite")]
    pub psnr_db: f64,
    pub ssim: f64,
    pub per_plane: PlaneSsim,
}

impl MetricReport {
    pub fn evaluate(method: &str, scale: [f64; 3], output: &Volume, reference: &Volume) -> Result<Self> {
        let per_plane = ssim_volumetric(output, reference)?;
        Ok(Self {
            method: method.to_string(),
            scale,
            psnr_db: psnr_volume(output, reference)?,
            ssim: per_plane.mean(),
            per_plane,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct 2D evaluation of the SSIM definition at every valid window.
    fn ssim_oracle(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        let (rows, cols) = a.dim();
        let mut g = [[0.0; 11]; 11];
        let mut total_w = 0.0;
        for (i, row) in g.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
                *v = (-(di * di + dj * dj) / 4.5).exp();
                total_w += *v;
            }
        }
        let mut sum = 0.0;
        let mut count = 0;
        for r in 0..=rows - 11 {
            for c in 0..=cols - 11 {
                let (mut ma, mut mb) = (0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        let w = g[i][j] / total_w;
                        ma += w * a[[r + i, c + j]];
                        mb += w * b[[r + i, c + j]];
                    }
                }
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        let w = g[i][j] / total_w;
                        let (x, y) = (a[[r + i, c + j]] - ma, b[[r + i, c + j]] - mb);
                        va += w * x * x;
                        vb += w * y * y;
                        cov += w * x * y;
                    }
                }
                let (c1, c2) = (1e-4, 9e-4);
                sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        sum / count as f64
    }

    fn random_image(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.random::<f64>())
    }

    #[test]
    fn psnr_examples() {
        let a = vec![0.5f32; 100];
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert_eq!(psnr_from_mse(0.01), 20.0);
        let a = vec![0.2f64; 64];
        let b: Vec<f64> = a.iter().map(|v| v + 0.1).collect();
        let mse = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / 64.0;
        assert!((psnr_from_mse(mse) - 20.0).abs() < 1e-9);
        assert!(psnr(&[0.0; 3], &[0.0; 4]).is_err());
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_image(&mut rng, 24, 19);
        let b = random_image(&mut rng, 24, 19);
        assert!((ssim2d(a.view(), a.view()).unwrap() - 1.0).abs() < 1e-12);
        let ab = ssim2d(a.view(), b.view()).unwrap();
        let ba = ssim2d(b.view(), a.view()).unwrap();
        assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn ssim_matches_direct_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let a = random_image(&mut rng, 16, 14);
            let b = a.mapv(|v| (v + 0.2 * (rng.random::<f64>() - 0.5)).clamp(0.0, 1.0));
            let got = ssim2d(a.view(), b.view()).unwrap();
            assert!((got - ssim_oracle(&a, &b)).abs() < 1e-12);
        }
    }

    #[test]
    fn inverted_binary_image() {
        let a = Array2::from_shape_fn((16, 16), |(r, c)| ((r / 4 + c / 4) % 2) as f64);
        let b = a.mapv(|v| 1.0 - v);
        let got = ssim2d(a.view(), b.view()).unwrap();
        assert!(got < 0.0, "{got}");
        assert!((got - ssim_oracle(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn ssim_too_small() {
        let a = Array2::<f64>::zeros((10, 20));
        assert!(ssim2d(a.view(), a.view()).is_err());
    }

    fn random_volume(seed: u64, dims: [usize; 3]) -> Volume {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Volume::from_fn(dims, |_, _, _| rng.random::<f32>()).unwrap()
    }

    #[test]
    fn volumetric_identity_and_mean() {
        let a = random_volume(3, [12, 13, 14]);
        let s = ssim_volumetric(&a, &a).unwrap();
        for v in [s.axial, s.coronal, s.sagittal, s.mean()] {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let b = random_volume(4, [12, 13, 14]);
        let r = MetricReport::evaluate("x", [1.0; 3], &a, &b).unwrap();
        assert!((r.ssim - (r.per_plane.axial + r.per_plane.coronal + r.per_plane.sagittal) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn slice_order_does_not_change_family_mean() {
        let a = random_volume(5, [12, 12, 12]);
        let b = random_volume(6, [12, 12, 12]);
        let flip = |v: &Volume| {
            let d = v.dims();
            Volume::from_fn(d, |x, y, z| v.get(x, y, d[2] - 1 - z)).unwrap()
        };
        let s = ssim_volumetric(&a, &b).unwrap();
        let f = ssim_volumetric(&flip(&a), &flip(&b)).unwrap();
        assert!((s.axial - f.axial).abs() < 1e-12);
    }

    #[test]
    fn report_json_uses_null_for_identical() {
        let a = random_volume(7, [11, 11, 11]);
        let r = MetricReport::evaluate("field", [2.0, 2.0, 2.0], &a, &a).unwrap();
        let json = serde_json::to_value(&r).unwrap();
        assert!(json["psnr_db"].is_null());
        let back: MetricReport = serde_json::from_value(json).unwrap();
        assert_eq!(back.psnr_db, f64::INFINITY);
    }

    proptest! {
        #[test]
        fn psnr_symmetric_and_monotone(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let base: Vec<f32> = (0..256).map(|_| rng.random::<f32>()).collect();
            let noise: Vec<f32> = (0..256).map(|_| rng.random::<f32>() - 0.5).collect();
            let mut prev = f64::INFINITY;
            for amp in [0.01f32, 0.05, 0.1, 0.3] {
                let noisy: Vec<f32> = base.iter().zip(&noise).map(|(b, n)| b + amp * n).collect();
                let p = psnr(&base, &noisy).unwrap();
                prop_assert!((p - psnr(&noisy, &base).unwrap()).abs() < 1e-12);
                prop_assert!(p < prev);
                prev = p;
            }
        }

        #[test]
        fn ssim_bounded_and_continuous(seed in 0u64..1000, eps in 1e-6f64..1e-2) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_image(&mut rng, 12, 12);
            let b = random_image(&mut rng, 12, 12);
            let s = ssim2d(a.view(), b.view()).unwrap();
            prop_assert!((-1.0..=1.0).contains(&s));
            let near = a.mapv(|v| v + eps);
            let s_near = ssim2d(a.view(), near.view()).unwrap();
            prop_assert!(s_near > 1.0 - 100.0 * eps);
        }
    }
}
