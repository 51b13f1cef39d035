//! ℓ∞ nets on the probability simplex.
//!
//! A step-`s` net uses `L = ⌈1/s⌉` levels: the points of `Δ_k` whose
//! coordinates are multiples of `1/L`. Quantization is largest-remainder
//! rounding, so the result sums to exactly one and every coordinate moves by
//! less than `1/L ≤ s`. Only the first `k − 1` indices are transmitted.

use super::bits::{bit_width, BitReader, BitString};
use crate::error::{Result, SpnError};
use crate::signature::SIMPLEX_TOLERANCE;

/// Levels of a step-`step` grid on `[0, 1]`. The small slack keeps
/// `⌈12 / 0.6⌉` at 20 despite `0.6` not being representable.
pub fn levels_for_step(step: f64) -> u64 {
    assert!(step > 0.0, "grid step must be positive");
    (1.0 / step - 1e-9).ceil().max(1.0) as u64
}

/// Bits per transmitted coordinate for a net with `levels` levels.
pub fn index_width(levels: u64) -> u32 {
    bit_width(levels)
}

/// A net point: integer indices summing to `levels`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetPoint {
    pub indices: Vec<u64>,
    pub levels: u64,
}

impl NetPoint {
    pub fn values(&self) -> Vec<f64> {
        self.indices.iter().map(|&i| i as f64 / self.levels as f64).collect()
    }

    pub fn write(&self, out: &mut BitString) {
        let w = index_width(self.levels);
        for &i in &self.indices[..self.indices.len() - 1] {
            out.push_uint(i, w);
        }
    }

    /// Reads `k − 1` indices and completes the last. Returns `None` for bit
    /// patterns that are not net points (indices summing past `levels`).
    pub fn read(reader: &mut BitReader<'_>, k: usize, levels: u64) -> Result<Option<NetPoint>> {
        let w = index_width(levels);
        let mut indices = Vec::with_capacity(k);
        let mut total = 0u64;
        for _ in 0..k.saturating_sub(1) {
            let i = reader.read_uint(w)?;
            indices.push(i);
            total += i;
        }
        if total > levels {
            return Ok(None);
        }
        indices.push(levels - total);
        Ok(Some(NetPoint { indices, levels }))
    }
}

/// Bits written for a `k`-vector on a `levels` net.
pub fn net_bits(k: usize, levels: u64) -> usize {
    k.saturating_sub(1) * index_width(levels) as usize
}

pub fn quantize_to_levels(weights: &[f64], levels: u64) -> Result<NetPoint> {
    if weights.is_empty() {
        return Err(SpnError::Simplex("empty vector".into()));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0 || **w > 1.0) {
        return Err(SpnError::Simplex(format!("coordinate {w} outside [0, 1]")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(SpnError::Simplex(format!("coordinates sum to {total}")));
    }
    let scaled: Vec<f64> = weights.iter().map(|w| w * levels as f64).collect();
    let mut indices: Vec<u64> = scaled.iter().map(|s| s.floor() as u64).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    // larger fractional part first, lower index on ties
    order.sort_by(|&a, &b| {
        let fa = scaled[a] - scaled[a].floor();
        let fb = scaled[b] - scaled[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let assigned: u64 = indices.iter().sum();
    if assigned <= levels {
        for &i in order.iter().take((levels - assigned) as usize) {
            indices[i] += 1;
        }
    } else {
        // only reachable through the 1e-9 slack on the input sum
        let mut excess = assigned - levels;
        for &i in order.iter().rev() {
            if excess == 0 {
                break;
            }
            if indices[i] > 0 {
                indices[i] -= 1;
                excess -= 1;
            }
        }
    }
    Ok(NetPoint { indices, levels })
}

/// Quantizes `weights` onto the step-`step` net and returns the net point's
/// coordinates with its bit encoding.
pub fn quantize_simplex(weights: &[f64], step: f64) -> Result<(Vec<f64>, BitString)> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(SpnError::Simplex(format!("step {step} outside (0, 1]")));
    }
    let point = quantize_to_levels(weights, levels_for_step(step))?;
    let mut bits = BitString::new();
    point.write(&mut bits);
    Ok((point.values(), bits))
}

/// Number of points of `Δ_k` on an `L`-level grid: `C(L + k − 1, k − 1)`.
pub fn net_size(k: usize, levels: u64) -> u128 {
    let k = k as u128;
    let l = levels as u128;
    let mut c: u128 = 1;
    for i in 1..k {
        c = c * (l + i) / i;
    }
    c
}

/// All net points of `Δ_k` at `levels`, in lexicographic index order.
pub fn enumerate_net(k: usize, levels: u64) -> Vec<NetPoint> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(k: usize, left: u64, levels: u64, cur: &mut Vec<u64>, out: &mut Vec<NetPoint>) {
        if cur.len() + 1 == k {
            cur.push(left);
            out.push(NetPoint { indices: cur.clone(), levels });
            cur.pop();
            return;
        }
        for i in 0..=left {
            cur.push(i);
            rec(k, left - i, levels, cur, out);
            cur.pop();
        }
    }
    if k > 0 {
        rec(k, levels, levels, &mut cur, &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_coordinate_costs_nothing() {
        let (q, bits) = quantize_simplex(&[1.0], 0.1).unwrap();
        assert_eq!(q, vec![1.0]);
        assert!(bits.is_empty());
    }

    #[test]
    fn largest_remainder_example() {
        let (q, bits) = quantize_simplex(&[0.3, 0.7], 0.25).unwrap();
        assert_eq!(q, vec![0.25, 0.75]);
        assert_eq!(bits.len(), 3);
        let err = q.iter().zip([0.3, 0.7]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        // brute force over every point of the 4-level net on Δ₂
        let best = enumerate_net(2, 4)
            .iter()
            .map(|p| p.values().iter().zip([0.3, 0.7]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(f64::INFINITY, f64::min);
        assert!((err - best).abs() < 1e-12);
        assert!((err - 0.05).abs() < 1e-12);
    }

    #[test]
    fn levels_convention() {
        assert_eq!(levels_for_step(0.25), 4);
        assert_eq!(levels_for_step(2.0 * 0.3 / 12.0), 20);
        assert_eq!(levels_for_step(0.3), 4);
        assert_eq!(levels_for_step(1.0), 1);
        assert_eq!(index_width(20), 5);
    }

    #[test]
    fn rejects_non_simplex() {
        assert!(quantize_simplex(&[0.5, 0.6], 0.1).is_err());
        assert!(quantize_simplex(&[-0.1, 1.1], 0.1).is_err());
        assert!(quantize_simplex(&[], 0.1).is_err());
        assert!(quantize_simplex(&[1.0], 0.0).is_err());
    }

    #[test]
    fn read_rejects_non_net_patterns() {
        let mut b = BitString::new();
        b.push_uint(3, 2);
        b.push_uint(2, 2);
        let mut r = b.reader();
        assert_eq!(NetPoint::read(&mut r, 3, 3).unwrap(), None);
    }

    #[test]
    fn net_sizes_match_enumeration() {
        for k in 1..=4 {
            for l in 1..=6 {
                assert_eq!(net_size(k, l), enumerate_net(k, l).len() as u128);
            }
        }
        assert_eq!(net_size(2, 2), 3);
    }
}
