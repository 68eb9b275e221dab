//! Shared-bin histograms and the PSI / Jensen-Shannon divergences on them.
//!
//! Bins are right-closed with open outer ends: with edges `e_0 ≤ … ≤ e_m`,
//! bin 0 is `(-∞, e_1]`, bin i is `(e_i, e_{i+1}]` and the last bin is
//! `(e_{m-1}, ∞)`. Values outside the reference range land in the boundary
//! bins.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 10;
/// Floor applied to every proportion before taking logs.
pub const PROPORTION_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub proportions: Vec<f64>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Edges `[min, distinct interior deciles below max…, max]`.
///
/// A decile equal to the minimum is kept, so a point mass at the minimum
/// (typical for sparse count features) gets a bin of its own.
pub fn quantile_edges(values: &[f64], n_bins: usize) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::invalid("histogram of an empty sample"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("histogram of non-finite values"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
    let mut edges = vec![min];
    for i in 1..n_bins {
        let q = quantile_sorted(&sorted, i as f64 / n_bins as f64);
        let first_interior = edges.len() == 1;
        if q < max && (first_interior || q > edges[edges.len() - 1]) {
            edges.push(q);
        }
    }
    edges.push(max);
    Ok(edges)
}

/// One bin per distinct value (for codes and labels).
pub fn category_edges(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::invalid("histogram of an empty sample"));
    }
    let mut distinct = values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut edges = vec![distinct[0]];
    edges.extend_from_slice(&distinct[..distinct.len() - 1]);
    edges.push(distinct[distinct.len() - 1]);
    Ok(edges)
}

fn bin_of(interior: &[f64], v: f64) -> usize {
    interior.partition_point(|&e| e < v)
}

/// Floor every proportion at `floor` and rescale the rest so the total is 1.
fn floor_and_normalize(raw: &mut [f64], floor: f64) {
    let mut pinned = vec![false; raw.len()];
    loop {
        let mut changed = false;
        for (p, pin) in raw.iter_mut().zip(pinned.iter_mut()) {
            if !*pin && *p < floor {
                *p = floor;
                *pin = true;
                changed = true;
            }
        }
        let pinned_mass: f64 = raw.iter().zip(&pinned).filter(|(_, &k)| k).map(|(p, _)| p).sum();
        let free_mass: f64 = raw.iter().zip(&pinned).filter(|(_, &k)| !k).map(|(p, _)| p).sum();
        if free_mass > 0.0 {
            let scale = (1.0 - pinned_mass) / free_mass;
            for (p, &pin) in raw.iter_mut().zip(&pinned) {
                if !pin {
                    *p *= scale;
                }
            }
        }
        if !changed {
            break;
        }
    }
}

/// Histogram of `values` on `reference_edges`, or on their own decile
/// edges when no reference is given.
pub fn build_histogram(values: &[f64], reference_edges: Option<&[f64]>) -> Result<Histogram> {
    if values.is_empty() {
        return Err(Error::invalid("histogram of an empty sample"));
    }
    let edges = match reference_edges {
        Some(e) if e.len() >= 2 => e.to_vec(),
        Some(_) => return Err(Error::invalid("reference edges need at least two entries")),
        None => quantile_edges(values, DEFAULT_BINS)?,
    };
    let interior = &edges[1..edges.len() - 1];
    let mut counts = vec![0.0; edges.len() - 1];
    for &v in values {
        counts[bin_of(interior, v)] += 1.0;
    }
    let n = values.len() as f64;
    let mut proportions: Vec<f64> = counts.into_iter().map(|c| c / n).collect();
    floor_and_normalize(&mut proportions, PROPORTION_FLOOR);
    Ok(Histogram {
        bin_edges: edges,
        proportions,
    })
}

fn check_shared(a: &Histogram, b: &Histogram) -> Result<()> {
    if a.bin_edges != b.bin_edges || a.proportions.len() != b.proportions.len() {
        return Err(Error::invalid("histograms do not share bin edges"));
    }
    Ok(())
}

/// Population stability index `Σ (A - E) ln(A / E)` in nats.
pub fn psi(expected: &Histogram, actual: &Histogram) -> Result<f64> {
    check_shared(expected, actual)?;
    Ok(expected
        .proportions
        .iter()
        .zip(&actual.proportions)
        .map(|(&e, &a)| (a - e) * (a / e).ln())
        .sum())
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(&a, &b)| a * (a / b).ln()).sum()
}

/// Jensen-Shannon divergence in nats, in `[0, ln 2]`.
pub fn jsd(p: &Histogram, q: &Histogram) -> Result<f64> {
    check_shared(p, q)?;
    let m: Vec<f64> = p
        .proportions
        .iter()
        .zip(&q.proportions)
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    let value = 0.5 * kl(&p.proportions, &m) + 0.5 * kl(&q.proportions, &m);
    Ok(value.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist(p: &[f64]) -> Histogram {
        Histogram {
            bin_edges: (0..=p.len()).map(|i| i as f64).collect(),
            proportions: p.to_vec(),
        }
    }

    #[test]
    fn uniform_deciles() {
        let values: Vec<f64> = (0..100).map(f64::from).collect();
        let h = build_histogram(&values, None).unwrap();
        assert_eq!(h.proportions.len(), 10);
        assert_eq!(h.bin_edges.len(), 11);
        for p in &h.proportions {
            assert!((p - 0.1).abs() < 1e-12, "{p}");
        }
    }

    #[test]
    fn constant_values_collapse() {
        let h = build_histogram(&[3.0; 50], None).unwrap();
        assert_eq!(h.bin_edges, vec![3.0, 3.0]);
        assert_eq!(h.proportions, vec![1.0]);
    }

    #[test]
    fn sparse_feature_separates_zeros() {
        let mut v = vec![0.0; 95];
        v.extend([0.5, 1.0, 1.0, 0.25, 1.0]);
        let h = build_histogram(&v, None).unwrap();
        assert_eq!(h.bin_edges, vec![0.0, 0.0, 1.0]);
        assert!((h.proportions[0] - 0.95).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_values_clip_to_boundary_bins() {
        let edges = [0.0, 1.0, 2.0, 3.0];
        let h = build_histogram(&[-10.0, 0.5, 2.5, 99.0], Some(&edges)).unwrap();
        assert!((h.proportions[0] - 0.5).abs() < 1e-5);
        assert!((h.proportions[2] - 0.5).abs() < 1e-5);
    }

    #[test]
    fn floor_keeps_sum_and_minimum() {
        let h = build_histogram(&[0.0, 0.0, 0.0], Some(&[0.0, 1.0, 2.0, 3.0])).unwrap();
        assert!((h.proportions.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(h.proportions.iter().all(|&p| p >= PROPORTION_FLOOR));
        assert_eq!(h.proportions[1], PROPORTION_FLOOR);
    }

    #[test]
    fn category_edges_one_bin_per_value() {
        let e = category_edges(&[2.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(e, vec![0.0, 0.0, 1.0, 2.0]);
        let h = build_histogram(&[0.0, 1.0, 1.0, 2.0], Some(&e)).unwrap();
        assert!((h.proportions[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn psi_hand_value() {
        // 0.25 ln 2 + (-0.25) ln(2/3)
        let v = psi(&hist(&[0.25, 0.75]), &hist(&[0.5, 0.5])).unwrap();
        assert!((v - 0.274_653_072_167_027_45).abs() < 1e-12, "{v}");
        let h = hist(&[0.2, 0.3, 0.5]);
        assert_eq!(psi(&h, &h).unwrap(), 0.0);
    }

    #[test]
    fn jsd_disjoint_is_ln2() {
        let p = build_histogram(&[0.0; 10], Some(&[0.0, 0.0, 1.0])).unwrap();
        let q = build_histogram(&[1.0; 10], Some(&[0.0, 0.0, 1.0])).unwrap();
        let v = jsd(&p, &q).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-4, "{v}");
        // floored value computed independently
        assert!((v - 0.693_132_365_049_887_4).abs() < 1e-12, "{v}");
    }

    #[test]
    fn mismatched_edges_rejected() {
        let a = hist(&[0.5, 0.5]);
        let mut b = a.clone();
        b.bin_edges[1] = 0.5;
        assert!(psi(&a, &b).is_err());
        assert!(jsd(&a, &b).is_err());
        assert!(build_histogram(&[], None).is_err());
    }
}
