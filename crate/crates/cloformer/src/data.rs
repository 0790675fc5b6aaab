//! Synthetic classification data: colored geometric shapes on a noisy
//! background. Class identity = shape kind x color bucket, rendered with
//! seeded positional/size jitter, pixels in [0, 1].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{arg_err, Result};
use crate::tensor::{Elem, Tensor};

const SHAPES: usize = 4; // square, disk, cross, ring
const COLORS: [[f64; 3]; 6] = [
    [0.9, 0.1, 0.1],
    [0.1, 0.9, 0.1],
    [0.15, 0.25, 0.95],
    [0.9, 0.85, 0.1],
    [0.85, 0.15, 0.85],
    [0.1, 0.85, 0.85],
];

/// Number of distinct renderable classes.
pub const MAX_CLASSES: usize = SHAPES * COLORS.len();

#[derive(Debug, Clone)]
pub struct SynthDataset<E: Elem> {
    /// N x 3 x H x W, values in [0, 1].
    pub images: Tensor<E>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub seed: u64,
}

impl<E: Elem> SynthDataset<E> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Gather the images/labels at `indices` into one batch.
    pub fn batch(&self, indices: &[usize]) -> (Tensor<E>, Vec<usize>) {
        let [_, c, h, w] = self.images.dims();
        let plane = c * h * w;
        let mut data = Vec::with_capacity(indices.len() * plane);
        for &i in indices {
            data.extend_from_slice(&self.images.data()[i * plane..(i + 1) * plane]);
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        (
            Tensor::new([indices.len(), c, h, w], data).expect("batch extents agree"),
            labels,
        )
    }
}

fn inside_shape(shape: usize, dy: f64, dx: f64, r: f64) -> bool {
    match shape {
        0 => dy.abs() <= r && dx.abs() <= r,                       // square
        1 => dy.hypot(dx) <= r,                                    // disk
        2 => dy.abs() <= r * 0.35 || dx.abs() <= r * 0.35,         // cross arms
        _ => {
            let d = dy.hypot(dx);
            d <= r && d >= r * 0.55                                // ring
        }
    }
}

/// Balanced, deterministic synthetic set: `n` images of `hw` x `hw` split
/// evenly across `classes` shape-color classes.
pub fn gen_synth_dataset<E: Elem>(
    n: usize,
    classes: usize,
    hw: usize,
    seed: u64,
) -> Result<SynthDataset<E>> {
    if classes < 2 {
        return Err(arg_err!("need at least 2 classes, got {classes}"));
    }
    if classes > MAX_CLASSES {
        return Err(arg_err!(
            "{classes} classes exceed the {MAX_CLASSES} renderable shape-color combinations"
        ));
    }
    if hw % 32 != 0 {
        return Err(arg_err!("image extent must be divisible by 32, got {hw}"));
    }
    if n == 0 || n % classes != 0 {
        return Err(arg_err!(
            "sample count {n} must be a positive multiple of {classes} for balance"
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * 3 * hw * hw);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % classes;
        labels.push(class);
        let shape = class % SHAPES;
        let color = COLORS[class / SHAPES];
        // jittered center and radius, kept fully inside the frame
        let r = hw as f64 * rng.gen_range(0.14..0.24);
        let cy = rng.gen_range(r + 1.0..hw as f64 - r - 1.0);
        let cx = rng.gen_range(r + 1.0..hw as f64 - r - 1.0);
        let mut planes = vec![0.0_f64; 3 * hw * hw];
        for (px, v) in planes.iter_mut().enumerate() {
            let _ = px;
            *v = rng.gen_range(0.0..0.15); // background noise
        }
        for y in 0..hw {
            for x in 0..hw {
                if inside_shape(shape, y as f64 - cy, x as f64 - cx, r) {
                    for ch in 0..3 {
                        planes[ch * hw * hw + y * hw + x] = color[ch];
                    }
                }
            }
        }
        data.extend(planes.into_iter().map(E::from_f64));
    }
    Ok(SynthDataset {
        images: Tensor::new([n, 3, hw, hw], data)?,
        labels,
        num_classes: classes,
        seed,
    })
}
