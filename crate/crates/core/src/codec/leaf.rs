//! Leaf codecs.
//!
//! Categorical leaves are sent as a net point of their pmf and use no sample
//! points at all. Gaussian leaves use a surrogate scheme: `d + 1` sample points
//! fix an affine frame, and fixed-width corrections move the frame's Gaussian
//! onto the (encoder-known) true leaf. The quantization step is chosen from
//! `eps` so the decoded Gaussian's TV error stays well below `eps`.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::bits::{bit_width, BitReader, BitString};
use super::simplex::{levels_for_step, net_bits, quantize_to_levels, NetPoint};
use crate::error::{Result, SpnError};
use crate::model::Gaussian;

/// Net levels for a `d`-outcome categorical leaf at accuracy `eps`.
pub fn categorical_levels(d: usize, eps: f64) -> u64 {
    levels_for_step(eps / d as f64)
}

/// Bits the categorical codec actually writes.
pub fn categorical_bit_count(d: usize, eps: f64) -> usize {
    net_bits(d, categorical_levels(d, eps))
}

/// The advertised budget `d·⌈log₂(⌈d/eps⌉+1)⌉`.
pub fn categorical_bit_budget(d: usize, eps: f64) -> usize {
    d * bit_width(categorical_levels(d, eps)) as usize
}

pub fn leaf_encode_categorical(pmf: &[f64], eps: f64) -> Result<BitString> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(SpnError::Config(format!("accuracy {eps} must be positive")));
    }
    let point = quantize_to_levels(pmf, categorical_levels(pmf.len(), eps))?;
    let mut bits = BitString::new();
    point.write(&mut bits);
    Ok(bits)
}

pub fn leaf_decode_categorical(reader: &mut BitReader<'_>, d: usize, eps: f64) -> Result<Vec<f64>> {
    NetPoint::read(reader, d, categorical_levels(d, eps))?
        .map(|p| p.values())
        .ok_or_else(|| SpnError::Bitstream("categorical block is not a net point".into()))
}

/// Constants of the surrogate Gaussian codec.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianCodecConfig {
    /// `c` in `m(d) = max(d+1, ⌈c·d·ln 2d⌉)`.
    pub sample_constant: f64,
    /// Mean corrections live in `[-mean_range, mean_range]` frame units.
    pub mean_range: f64,
    /// Cholesky corrections: diagonal in `[1/scale_range, scale_range]`,
    /// off-diagonal in `[-scale_range, scale_range]`.
    pub scale_range: f64,
    /// Quantization step is `eps / (resolution·d)`.
    pub resolution: f64,
}

impl Default for GaussianCodecConfig {
    fn default() -> Self {
        GaussianCodecConfig { sample_constant: 20.0, mean_range: 8.0, scale_range: 8.0, resolution: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianEncoding {
    /// Indices into the encoder's sample list, in frame-vertex order.
    pub chosen: Vec<usize>,
    pub bits: BitString,
}

#[derive(Debug, Clone, Copy)]
struct Grid {
    lo: f64,
    hi: f64,
    levels: u64,
}

impl Grid {
    fn width(&self) -> u32 {
        bit_width(self.levels)
    }

    fn index(&self, v: f64) -> Option<u64> {
        if !(v >= self.lo && v <= self.hi) {
            return None;
        }
        let i = ((v - self.lo) / (self.hi - self.lo) * self.levels as f64).round() as u64;
        Some(i.min(self.levels))
    }

    fn value(&self, i: u64) -> f64 {
        self.lo + i as f64 * (self.hi - self.lo) / self.levels as f64
    }
}

impl GaussianCodecConfig {
    pub fn samples_needed(&self, d: usize) -> usize {
        let df = d as f64;
        ((self.sample_constant * df * (2.0 * df).ln()).ceil() as usize).max(d + 1)
    }

    pub fn points(&self, d: usize) -> usize {
        d + 1
    }

    fn step(&self, d: usize, eps: f64) -> f64 {
        eps / (self.resolution * d as f64)
    }

    fn grids(&self, d: usize, eps: f64) -> (Grid, Grid, Grid) {
        let step = self.step(d, eps);
        let mk = |half: f64| Grid { lo: -half, hi: half, levels: ((2.0 * half / step) - 1e-9).ceil().max(1.0) as u64 };
        (mk(self.mean_range), mk(self.scale_range.ln()), mk(self.scale_range))
    }

    /// Bits per Gaussian leaf: `d` mean entries, `d` log-diagonal entries and
    /// `d(d−1)/2` off-diagonal entries.
    pub fn bit_count(&self, d: usize, eps: f64) -> usize {
        let (mean, diag, off) = self.grids(d, eps);
        d * mean.width() as usize + d * diag.width() as usize + d * (d - 1) / 2 * off.width() as usize
    }

    pub fn encode(&self, samples: &[Vec<f64>], truth: &Gaussian, eps: f64) -> Result<GaussianEncoding> {
        let d = truth.dim();
        if eps.is_nan() || eps <= 0.0 {
            return Err(SpnError::Config(format!("accuracy {eps} must be positive")));
        }
        let needed = self.samples_needed(d);
        if samples.len() < needed {
            return Err(SpnError::InsufficientSamples { needed, have: samples.len() });
        }
        if let Some(bad) = samples.iter().find(|s| s.len() != d) {
            return Err(SpnError::Dimension { expected: d, got: bad.len() });
        }

        // pick the samples nearest to a regular simplex in the whitened frame
        let whitened: Vec<DVector<f64>> = samples.iter().map(|s| truth.whiten(s)).collect();
        let mut used = vec![false; samples.len()];
        let mut chosen = Vec::with_capacity(d + 1);
        for v in simplex_vertices(d) {
            let best = (0..samples.len())
                .filter(|&i| !used[i])
                .min_by(|&a, &b| (&whitened[a] - &v).norm_squared().total_cmp(&(&whitened[b] - &v).norm_squared()))
                .expect("at least d+1 samples");
            used[best] = true;
            chosen.push(best);
        }
        let points: Vec<&[f64]> = chosen.iter().map(|&i| samples[i].as_slice()).collect();
        let (centre, frame) = anchor(&points)
            .ok_or_else(|| SpnError::DegenerateSample("selected points do not span the space".into()))?;

        let u = frame
            .solve_lower_triangular(&(truth.mean() - &centre))
            .ok_or_else(|| SpnError::Numerical("singular frame".into()))?;
        // A⁻¹L is lower triangular with a positive diagonal, so it is the
        // Cholesky factor of A⁻¹ΣA⁻ᵀ
        let b = frame
            .solve_lower_triangular(truth.chol())
            .ok_or_else(|| SpnError::Numerical("singular frame".into()))?;

        let (mean_grid, diag_grid, off_grid) = self.grids(d, eps);
        let mut bits = BitString::new();
        let mut put = |grid: &Grid, v: f64, what: &str| -> Result<()> {
            let i = grid
                .index(v)
                .ok_or_else(|| SpnError::DegenerateSample(format!("{what} correction {v:.3} outside the codec range")))?;
            bits.push_uint(i, grid.width());
            Ok(())
        };
        for j in 0..d {
            put(&mean_grid, u[j], "mean")?;
        }
        for j in 0..d {
            put(&diag_grid, b[(j, j)].ln(), "scale")?;
        }
        for r in 0..d {
            for c in 0..r {
                put(&off_grid, b[(r, c)], "shear")?;
            }
        }
        Ok(GaussianEncoding { chosen, bits })
    }

    /// Rebuilds a Gaussian from `d + 1` points and the correction bits. A
    /// degenerate point set falls back to the identity frame.
    pub fn decode(&self, points: &[Vec<f64>], reader: &mut BitReader<'_>, d: usize, eps: f64) -> Result<Gaussian> {
        if points.len() != self.points(d) || points.iter().any(|p| p.len() != d) {
            return Err(SpnError::Layout(format!("Gaussian leaf expects {} points of dimension {d}", d + 1)));
        }
        let refs: Vec<&[f64]> = points.iter().map(|p| p.as_slice()).collect();
        let (centre, frame) = anchor(&refs).unwrap_or_else(|| (centroid(&refs), DMatrix::identity(d, d)));
        let (mean_grid, diag_grid, off_grid) = self.grids(d, eps);
        let mut get = |grid: &Grid| -> Result<f64> {
            let i = reader.read_uint(grid.width())?;
            if i > grid.levels {
                return Err(SpnError::Bitstream(format!("grid index {i} beyond {} levels", grid.levels)));
            }
            Ok(grid.value(i))
        };
        let mut u = DVector::zeros(d);
        for j in 0..d {
            u[j] = get(&mean_grid)?;
        }
        let mut b = DMatrix::zeros(d, d);
        for j in 0..d {
            b[(j, j)] = get(&diag_grid)?.exp();
        }
        for r in 0..d {
            for c in 0..r {
                b[(r, c)] = get(&off_grid)?;
            }
        }
        let mean = &centre + &frame * u;
        let m = &frame * b;
        let cov = &m * m.transpose();
        Gaussian::from_parts(mean, cov).map_err(|e| SpnError::Numerical(format!("decoded covariance: {e}")))
    }
}

/// Surrogate Gaussian leaf codec with default constants: returns the chosen
/// sample points and the correction bits.
pub fn leaf_encode_gaussian(samples: &[Vec<f64>], truth: &Gaussian, eps: f64) -> Result<(Vec<Vec<f64>>, BitString)> {
    let enc = GaussianCodecConfig::default().encode(samples, truth, eps)?;
    Ok((enc.chosen.iter().map(|&i| samples[i].clone()).collect(), enc.bits))
}

pub fn leaf_decode_gaussian(points: &[Vec<f64>], bits: &BitString, eps: f64) -> Result<Gaussian> {
    let d = points.first().map_or(0, |p| p.len());
    GaussianCodecConfig::default().decode(points, &mut bits.reader(), d, eps)
}

/// Vertices of a regular simplex centred at the origin with unit scatter,
/// built from a Helmert basis.
fn simplex_vertices(d: usize) -> Vec<DVector<f64>> {
    let scale = (d as f64).sqrt();
    (0..=d)
        .map(|i| {
            DVector::from_iterator(
                d,
                (1..=d).map(|j| {
                    let norm = ((j * (j + 1)) as f64).sqrt();
                    let q = if i < j {
                        1.0 / norm
                    } else if i == j {
                        -(j as f64) / norm
                    } else {
                        0.0
                    };
                    scale * q
                }),
            )
        })
        .collect()
}

fn centroid(points: &[&[f64]]) -> DVector<f64> {
    let d = points[0].len();
    let mut c = DVector::zeros(d);
    for p in points {
        c += DVector::from_column_slice(p);
    }
    c / points.len() as f64
}

/// Centroid and Cholesky factor of the scatter matrix divided by `d`.
fn anchor(points: &[&[f64]]) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let d = points[0].len();
    let c = centroid(points);
    let mut scatter = DMatrix::zeros(d, d);
    for p in points {
        let x = DVector::from_column_slice(p) - &c;
        scatter += &x * x.transpose();
    }
    scatter /= d as f64;
    if scatter.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let l = Cholesky::new(scatter)?.l();
    let diag_ok = (0..d).all(|i| l[(i, i)] > 0.0 && l[(i, i)].is_finite());
    let max = (0..d).map(|i| l[(i, i)]).fold(0.0, f64::max);
    let min = (0..d).map(|i| l[(i, i)]).fold(f64::INFINITY, f64::min);
    (diag_ok && min > max * 1e-12).then_some((c, l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::gaussian_tv_1d;
    use crate::model::LeafDistribution;
    use crate::rng;

    #[test]
    fn categorical_example() {
        let bits = leaf_encode_categorical(&[0.3, 0.7], 0.5).unwrap();
        let pmf = leaf_decode_categorical(&mut bits.reader(), 2, 0.5).unwrap();
        assert_eq!(pmf, vec![0.25, 0.75]);
        assert!(bits.len() <= categorical_bit_budget(2, 0.5));
    }

    #[test]
    fn categorical_vertex_is_exact() {
        for eps in [0.5, 0.1, 0.02] {
            let bits = leaf_encode_categorical(&[1.0, 0.0, 0.0, 0.0], eps).unwrap();
            let pmf = leaf_decode_categorical(&mut bits.reader(), 4, eps).unwrap();
            assert_eq!(pmf, vec![1.0, 0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn vertices_have_unit_scatter() {
        for d in 1..=4 {
            let vs = simplex_vertices(d);
            let mut s = DMatrix::<f64>::zeros(d, d);
            for v in &vs {
                s += v * v.transpose();
            }
            s /= d as f64;
            assert!((s - DMatrix::identity(d, d)).abs().max() < 1e-12);
            let sum: DVector<f64> = vs.iter().fold(DVector::zeros(d), |a, v| a + v);
            assert!(sum.abs().max() < 1e-12);
        }
    }

    #[test]
    fn sample_requirement() {
        let cfg = GaussianCodecConfig::default();
        assert_eq!(cfg.samples_needed(1), 14);
        assert_eq!(cfg.samples_needed(2), 56);
    }

    fn draw(g: &Gaussian, seed: u64, count: usize) -> Vec<Vec<f64>> {
        let leaf = LeafDistribution::Gaussian(g.clone());
        let mut r = rng::stream(seed, 0);
        (0..count)
            .map(|_| {
                let mut x = vec![0.0; g.dim()];
                leaf.sample_into(&mut r, &mut x);
                x
            })
            .collect()
    }

    #[test]
    fn univariate_round_trip() {
        let truth = Gaussian::new(vec![0.0], vec![1.0]).unwrap();
        for seed in 0..20 {
            let samples = draw(&truth, seed, 200);
            let (points, bits) = leaf_encode_gaussian(&samples, &truth, 0.1).unwrap();
            assert_eq!(points.len(), 2);
            assert_eq!(bits.len(), GaussianCodecConfig::default().bit_count(1, 0.1));
            let g = leaf_decode_gaussian(&points, &bits, 0.1).unwrap();
            let tv = gaussian_tv_1d(0.0, 1.0, g.mean()[0], g.cov()[(0, 0)].sqrt());
            assert!(tv <= 0.1, "seed {seed}: tv {tv}");
            assert_eq!(leaf_decode_gaussian(&points, &bits, 0.1).unwrap(), g);
        }
    }

    #[test]
    fn bivariate_budget_and_accuracy() {
        let truth = Gaussian::new(vec![1.0, -2.0], vec![2.0, 0.6, 0.6, 0.5]).unwrap();
        let cfg = GaussianCodecConfig::default();
        let samples = draw(&truth, 7, 500);
        let (points, bits) = leaf_encode_gaussian(&samples, &truth, 0.1).unwrap();
        assert_eq!(points.len(), cfg.points(2));
        assert_eq!(bits.len(), cfg.bit_count(2, 0.1));
        let g = leaf_decode_gaussian(&points, &bits, 0.1).unwrap();
        assert!((g.mean() - truth.mean()).abs().max() < 0.05);
        assert!((g.cov() - truth.cov()).abs().max() < 0.1);
    }

    #[test]
    fn too_few_samples() {
        let truth = Gaussian::new(vec![0.0], vec![1.0]).unwrap();
        let err = leaf_encode_gaussian(&draw(&truth, 1, 5), &truth, 0.1).unwrap_err();
        assert_eq!(err, SpnError::InsufficientSamples { needed: 14, have: 5 });
    }

    #[test]
    fn degenerate_points_fail_on_encode() {
        let truth = Gaussian::new(vec![0.0], vec![1.0]).unwrap();
        let samples = vec![vec![0.5]; 20];
        assert!(matches!(leaf_encode_gaussian(&samples, &truth, 0.1), Err(SpnError::DegenerateSample(_))));
    }
}
