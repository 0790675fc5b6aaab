//! Spectral analysis of feature maps: direct 2D DFT, centered
//! log-magnitude spectra, radial band-energy profiles, and taps on the
//! local/global branches of a stage's final block. Used to compare how
//! much high-frequency content each branch carries.

use std::io::Write as _;
use std::path::Path;

use crate::attnconv::attnconv_forward;
use crate::block::{
    clo_block_forward, convffn_forward, global_branch_forward, LAYER_NORM_EPS,
};
use crate::error::{arg_err, Error, Result};
use crate::model::{conv_stem, Model};
use crate::ops::{dwconv2d, fully_connected, layer_norm_channels, split_channels};
use crate::tensor::{Elem, Tensor};

pub const DEFAULT_BANDS: usize = 8;

/// Spectrum of one feature map (or branch tap), averaged over batch and
/// channels, with DC shifted to the center pixel (H/2, W/2).
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    /// Centered mean DFT magnitude, row-major H x W.
    pub mag: Vec<f64>,
    /// log(1 + mag), same layout; non-negative everywhere.
    pub log_mag: Vec<f64>,
    pub h: usize,
    pub w: usize,
    /// Radial band energies, normalized to sum 1.
    pub bands: Vec<f64>,
    /// Tap identifier, e.g. "stage2.shared_only".
    pub source: String,
}

impl SpectrumReport {
    /// Fraction of band energy in the top half of the bands (the
    /// high-frequency mass used for branch comparisons).
    pub fn high_band_mass(&self) -> f64 {
        self.bands[self.bands.len() / 2..].iter().sum()
    }

    /// 8-bit binary PGM of the log-magnitude spectrum, max-normalized.
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let peak = self.log_mag.iter().cloned().fold(0.0_f64, f64::max);
        let mut bytes = Vec::with_capacity(self.log_mag.len() + 32);
        bytes.extend_from_slice(format!("P5\n{} {}\n255\n", self.w, self.h).as_bytes());
        for &v in &self.log_mag {
            let px = if peak > 0.0 { (v / peak * 255.0).round() } else { 0.0 };
            bytes.push(px as u8);
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(&bytes)?;
        Ok(())
    }

    /// `band_index,energy` CSV rows.
    pub fn bands_csv(&self) -> String {
        let mut out = String::from("band_index,energy\n");
        for (i, e) in self.bands.iter().enumerate() {
            out.push_str(&format!("{i},{e}\n"));
        }
        out
    }
}

/// Direct O(N^2)-per-axis 2D DFT of a real plane; returns (re, im).
fn dft2(plane: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    // rows first
    let mut row_re = vec![0.0; h * w];
    let mut row_im = vec![0.0; h * w];
    for y in 0..h {
        for v in 0..w {
            let (mut re, mut im) = (0.0, 0.0);
            for x in 0..w {
                let ang = -2.0 * std::f64::consts::PI * (v * x) as f64 / w as f64;
                let s = plane[y * w + x];
                re += s * ang.cos();
                im += s * ang.sin();
            }
            row_re[y * w + v] = re;
            row_im[y * w + v] = im;
        }
    }
    let mut out_re = vec![0.0; h * w];
    let mut out_im = vec![0.0; h * w];
    for u in 0..h {
        for v in 0..w {
            let (mut re, mut im) = (0.0, 0.0);
            for y in 0..h {
                let ang = -2.0 * std::f64::consts::PI * (u * y) as f64 / h as f64;
                let (c, s) = (ang.cos(), ang.sin());
                let (rr, ri) = (row_re[y * w + v], row_im[y * w + v]);
                re += rr * c - ri * s;
                im += rr * s + ri * c;
            }
            out_re[u * w + v] = re;
            out_im[u * w + v] = im;
        }
    }
    (out_re, out_im)
}

/// Mean-subtracted, channel-averaged, centered spectrum of a feature map.
pub fn feature_spectrum<E: Elem>(f: &Tensor<E>, source: &str) -> Result<SpectrumReport> {
    let [n, c, h, w] = f.dims();
    if h < 2 || w < 2 {
        return Err(arg_err!("spectrum needs H, W >= 2, got {h}x{w}"));
    }
    if !f.all_finite() {
        return Err(Error::Numeric("non-finite feature map in spectrum".into()));
    }
    let mut mag_raw = vec![0.0_f64; h * w];
    let mut plane = vec![0.0_f64; h * w];
    for ni in 0..n {
        for ci in 0..c {
            for yi in 0..h {
                for xi in 0..w {
                    plane[yi * w + xi] = f.at(ni, ci, yi, xi).to_f64_();
                }
            }
            let mean = plane.iter().sum::<f64>() / plane.len() as f64;
            for v in plane.iter_mut() {
                *v -= mean;
            }
            let (re, im) = dft2(&plane, h, w);
            for i in 0..h * w {
                mag_raw[i] += re[i].hypot(im[i]);
            }
        }
    }
    let scale = 1.0 / (n * c) as f64;
    // shift DC to the center pixel
    let mut mag = vec![0.0_f64; h * w];
    for u in 0..h {
        for v in 0..w {
            mag[((u + h / 2) % h) * w + (v + w / 2) % w] = mag_raw[u * w + v] * scale;
        }
    }
    let log_mag = mag.iter().map(|m| (1.0 + m).ln()).collect();
    let mut report = SpectrumReport {
        mag,
        log_mag,
        h,
        w,
        bands: Vec::new(),
        source: source.to_string(),
    };
    report.bands = band_energy(&report, DEFAULT_BANDS.min(h.min(w) / 2).max(2))?;
    Ok(report)
}

/// Partition the centered spectrum into `n_bands` annuli of equal radial
/// width (radius normalized to the Nyquist frequency), summing squared
/// magnitudes per annulus and normalizing to sum 1. Frequencies beyond
/// Nyquist (plane corners) fall into the outermost band.
pub fn band_energy(r: &SpectrumReport, n_bands: usize) -> Result<Vec<f64>> {
    if n_bands < 2 {
        return Err(arg_err!("band count must be >= 2, got {n_bands}"));
    }
    if n_bands > r.h.min(r.w) / 2 {
        return Err(arg_err!(
            "band count {n_bands} exceeds min(H,W)/2 = {}",
            r.h.min(r.w) / 2
        ));
    }
    let (h, w) = (r.h, r.w);
    let mut bands = vec![0.0_f64; n_bands];
    for u in 0..h {
        for v in 0..w {
            // normalized frequency per axis in [-0.5, 0.5), then radius
            // relative to Nyquist (0.5)
            let fy = (u as f64 - (h / 2) as f64) / h as f64;
            let fx = (v as f64 - (w / 2) as f64) / w as f64;
            let radius = fy.hypot(fx) / 0.5;
            let band = ((radius * n_bands as f64) as usize).min(n_bands - 1);
            let m = r.mag[u * w + v];
            bands[band] += m * m;
        }
    }
    let total: f64 = bands.iter().sum();
    if total > 0.0 {
        for b in bands.iter_mut() {
            *b /= total;
        }
    } else {
        // all-zero spectrum: all energy is (vacuously) in the DC band
        bands[0] = 1.0;
    }
    Ok(bands)
}

/// Run `x` through the model up to the final block of the chosen stage
/// (1-based, must be 2 or 3) and return spectra of three taps inside it:
/// the shared-weights path V_s, the full local-branch output, and the
/// global-branch output.
pub fn branch_spectra<E: Elem>(
    m: &Model<E>,
    x: &Tensor<E>,
    stage: usize,
) -> Result<Vec<SpectrumReport>> {
    if !(stage == 2 || stage == 3) {
        return Err(arg_err!("spectra stage must be 2 or 3, got {stage}"));
    }
    let si = stage - 1;
    let mut t = conv_stem(x, m)?;
    for (i, sp) in m.stages.iter().enumerate().take(si + 1) {
        let last = sp.blocks.len() - 1;
        for (j, (b, f)) in sp.blocks.iter().zip(&sp.ffns).enumerate() {
            if i == si && j == last {
                return block_branch_spectra(&t, b, stage);
            }
            t = clo_block_forward(&t, b)?;
            t = convffn_forward(&t, f)?;
        }
    }
    unreachable!("target block reached inside the loop");
}

fn block_branch_spectra<E: Elem>(
    x: &Tensor<E>,
    b: &crate::block::CloBlockParams<E>,
    stage: usize,
) -> Result<Vec<SpectrumReport>> {
    if !(b.use_local() && b.use_global()) {
        return Err(arg_err!(
            "branch spectra need both local and global branches present"
        ));
    }
    let local = b.local.as_ref().expect("local params present");
    let dw_v = local
        .dw_v
        .as_ref()
        .ok_or_else(|| arg_err!("branch spectra need the shared-weights path (dw_v)"))?;
    let normed = layer_norm_channels(x, &b.norm.gain, &b.norm.offset, LAYER_NORM_EPS)?;
    let qkv = fully_connected(&normed, &b.qkv)?;
    let sizes = [
        b.c_local, b.c_global, b.c_local, b.c_global, b.c_local, b.c_global,
    ];
    let parts = split_channels(&qkv, &sizes)?;
    let (q_l, k_l, v_l) = (&parts[0], &parts[2], &parts[4]);
    let (q_g, k_g, v_g) = (&parts[1], &parts[3], &parts[5]);
    let v_s = dwconv2d(v_l, dw_v)?;
    let full_local = attnconv_forward(q_l, k_l, v_l, local)?;
    let global = global_branch_forward(q_g, k_g, v_g, b.pool_stride, b.global_heads)?;
    Ok(vec![
        feature_spectrum(&v_s, &format!("stage{stage}.shared_only"))?,
        feature_spectrum(&full_local, &format!("stage{stage}.full_local"))?,
        feature_spectrum(&global, &format!("stage{stage}.global"))?,
    ])
}
