//! Thermal-loss channel: mix the mode with a thermal ancilla on a beam
//! splitter of transmissivity `1 - α`, then trace the ancilla out.
//!
//! The channel commutes with phase rotations, so an input element
//! `|n><n - c|` only feeds outputs `|n'><n' - c|` of the same coherence order
//! `c`. For each `c` the map is a real matrix
//! `T_c[n', n] = Σ_k p_k B_k(n → n') B_k(n - c → n' - c)`
//! where `B_k(n → n') = <n', n + k - n'| U_BS |n, k>` and `p_k` are the
//! thermal ancilla populations.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{locate, occupation, zero_block, FockDensityMatrix};
use crate::error::{check_non_negative, check_probability, invalid, Result};

/// Beam-splitter amplitudes `amps[n][p] = <p, n + k - p| U |n, k>` for one
/// ancilla occupation `k`, with `n < n_max` and `p < p_max`.
///
/// `U a† U† = t a† + ρ e†`, so the column `U|n, k>` is the eigenvector with
/// eigenvalue `n` of `U a†a U† = t² a†a + ρ² e†e + tρ (a†e + e†a)`, which is
/// tridiagonal in `|p, N - p>`. The three-term recurrence is run forward from
/// `p = 0` and backward from `p = N`, each only in the direction where it is
/// stable, and the two pieces are matched inside the oscillatory rows. The
/// sign follows from `<0, N|U|n, k> = ρ^n t^k √(N! / (n! k!)) > 0`.
pub(crate) fn ancilla_table(alpha: f64, k: usize, n_max: usize, p_max: usize) -> Vec<Vec<f64>> {
    if alpha == 1.0 {
        // Full swap: |n, k> -> (-1)^k |k, n>.
        let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
        return (0..n_max)
            .map(|_| {
                let mut col = vec![0.0; (k + 1).min(p_max)];
                if k < p_max {
                    col[k] = sign;
                }
                col
            })
            .collect();
    }
    if alpha == 0.0 {
        return (0..n_max)
            .map(|n| {
                let mut col = vec![0.0; (n + 1).min(p_max)];
                if n < p_max {
                    col[n] = 1.0;
                }
                col
            })
            .collect();
    }
    let t = (1.0 - alpha).sqrt();
    let rho = alpha.sqrt();
    (0..n_max)
        .map(|n| {
            let mut col = column(t, rho, n, k);
            col.truncate(p_max);
            col
        })
        .collect()
}

/// `U|n, k>` over `p = 0..=n+k` for `0 < t, ρ < 1`.
fn column(t: f64, rho: f64, n: usize, k: usize) -> Vec<f64> {
    let total = n + k;
    let nf = n as f64;
    let diag = |p: usize| t * t * p as f64 + rho * rho * (total - p) as f64;
    let off = |p: usize| t * rho * (((p + 1) * (total - p)) as f64).sqrt();
    if total == 0 {
        return vec![1.0];
    }
    let coupling = |p: usize| off(p) + if p > 0 { off(p - 1) } else { 0.0 };

    let oscillatory: Vec<usize> = (0..=total).filter(|&p| (nf - diag(p)).abs() <= coupling(p)).collect();
    let bottom = oscillatory.first().copied().unwrap_or(0);

    // The backward sweep stops at the first oscillatory row: below it the
    // sweep is unstable and its rescaling would flush the rows we keep.
    let mut back = vec![0.0; total + 2];
    back[total] = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    for p in (bottom + 1..=total).rev() {
        let v = ((nf - diag(p)) * back[p] - off(p) * back[p + 1]) / off(p - 1);
        back[p - 1] = v;
        if v.abs() > 1e100 {
            for x in &mut back[p - 1..] {
                *x *= 1e-100;
            }
        }
    }
    // Anchor on the largest backward value among the oscillatory rows, or
    // the row closest to the classical turning point if there are none.
    let anchor = if oscillatory.is_empty() {
        (0..=total)
            .min_by(|&a, &b| (nf - diag(a)).abs().total_cmp(&(nf - diag(b)).abs()))
            .unwrap_or(0)
    } else {
        oscillatory
            .iter()
            .copied()
            .max_by(|&a, &b| back[a].abs().total_cmp(&back[b].abs()))
            .unwrap_or(0)
    };

    let mut fwd = Vec::with_capacity(anchor + 1);
    fwd.push(1.0);
    for p in 0..anchor {
        let prev = if p > 0 { off(p - 1) * fwd[p - 1] } else { 0.0 };
        let v = ((nf - diag(p)) * fwd[p] - prev) / off(p);
        fwd.push(v);
        if v.abs() > 1e100 {
            for x in &mut fwd {
                *x *= 1e-100;
            }
        }
    }
    let mut col: Vec<f64> = if back[anchor] == 0.0 {
        fwd.clone()
    } else {
        let scale = fwd[anchor] / back[anchor];
        (0..=total)
            .map(|p| if p <= anchor { fwd[p] } else { back[p] * scale })
            .collect()
    };
    col.resize(total + 1, 0.0);
    let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
    col.iter_mut().for_each(|v| *v /= norm);
    col
}

pub(crate) fn thermal_weights(n_th: f64, env_cutoff: usize) -> (Vec<f64>, f64) {
    if n_th == 0.0 {
        return (vec![1.0], 0.0);
    }
    let q = n_th / (n_th + 1.0);
    let weights = (0..env_cutoff).map(|k| q.powi(k as i32) / (n_th + 1.0)).collect();
    (weights, q.powi(env_cutoff as i32))
}

/// `T_c` on a mode of dimension `dim` for every requested coherence order;
/// rows are outputs, columns inputs. One ancilla occupation is held at a time.
fn transfers(alpha: f64, weights: &[f64], orders: &[i32], dim: usize) -> HashMap<i32, DMatrix<f64>> {
    let mut out: HashMap<i32, DMatrix<f64>> = orders.iter().map(|&c| (c, DMatrix::zeros(dim, dim))).collect();
    for (k, &w) in weights.iter().enumerate() {
        let mut table = ancilla_table(alpha, k, dim, dim);
        table.iter_mut().for_each(|col| col.resize(dim, 0.0));
        for (&c, t) in out.iter_mut() {
            let lo = c.max(0) as usize;
            let hi = (dim as i32 + c.min(0)) as usize;
            let shift = (lo as i32 - c) as usize;
            for n in lo..hi {
                let m = (n as i32 - c) as usize;
                let a = &table[n][lo..hi];
                let b = &table[m][shift..shift + (hi - lo)];
                let dst = &mut t.column_mut(n);
                for (i, (x, y)) in a.iter().zip(b).enumerate() {
                    dst[lo + i] += w * x * y;
                }
            }
        }
    }
    out
}

pub(super) fn apply(
    state: &FockDensityMatrix,
    mode: usize,
    alpha: f64,
    n_th: f64,
    env_cutoff: usize,
) -> Result<FockDensityMatrix> {
    if mode >= state.n_modes() {
        return Err(invalid(format!("mode {mode} out of range")));
    }
    check_probability("alpha", alpha)?;
    check_non_negative("n_th", n_th)?;
    if env_cutoff == 0 {
        return Err(invalid("environment cutoff must be positive"));
    }
    if alpha == 0.0 {
        return Ok(state.clone());
    }
    let dim = state.cutoffs[mode];
    let (weights, env_tail) = thermal_weights(n_th, env_cutoff);
    let other = 1 - mode.min(1);
    let two_mode = state.n_modes() == 2;

    // Gather coherence lines: (other row, other col, c) -> vector over the target occupation.
    let mut lines: HashMap<(usize, usize, i32), DVector<Complex64>> = HashMap::new();
    for (&(dr, dc), block) in &state.blocks {
        for r in 0..block.nrows() {
            let row = occupation(dr, r);
            for c in 0..block.ncols() {
                let v = block[(r, c)];
                if v == Complex64::default() {
                    continue;
                }
                let col = occupation(dc, c);
                let (o_r, o_c) = if two_mode { (row[other], col[other]) } else { (0, 0) };
                let coh = row[mode] as i32 - col[mode] as i32;
                lines.entry((o_r, o_c, coh)).or_insert_with(|| DVector::zeros(dim))[row[mode]] += v;
            }
        }
    }

    let mut keys: Vec<_> = lines.keys().copied().collect();
    keys.sort_unstable();
    let mut orders: Vec<i32> = keys.iter().map(|k| k.2).collect();
    orders.sort_unstable();
    orders.dedup();
    let transfers = transfers(alpha, &weights, &orders, dim);
    let mut out_blocks: BTreeMap<(i32, i32), DMatrix<Complex64>> = BTreeMap::new();
    for key in keys {
        let (o_r, o_c, coh) = key;
        let line = &lines[&key];
        let t = &transfers[&coh];
        let re = t * line.map(|z| z.re);
        let im = t * line.map(|z| z.im);
        for x in 0..dim {
            let val = Complex64::new(re[x], im[x]);
            if val == Complex64::default() {
                continue;
            }
            let y = (x as i32 - coh) as usize;
            let (row, col) = if two_mode {
                let mut row = [0; 2];
                let mut col = [0; 2];
                row[mode] = x;
                row[other] = o_r;
                col[mode] = y;
                col[other] = o_c;
                (row, col)
            } else {
                ([x, 0], [y, 0])
            };
            let (kr, jr) = locate(two_mode, row);
            let (kc, jc) = locate(two_mode, col);
            out_blocks
                .entry((kr, kc))
                .or_insert_with(|| zero_block(&state.cutoffs, (kr, kc)))[(jr, jc)] += val;
        }
    }

    let mut out = FockDensityMatrix {
        cutoffs: state.cutoffs.clone(),
        blocks: out_blocks,
        tail_bound: state.tail_bound,
        tolerance: state.tolerance,
    };
    let lost = (state.trace() - out.trace()).max(0.0);
    out.tail_bound += lost.max(env_tail * state.trace());
    if out.tail_bound > out.tolerance {
        let mean = out.mean_photon(mode)?;
        let q = mean / (mean + 1.0);
        return Err(crate::error::Error::Truncation {
            tail: out.tail_bound,
            tolerance: out.tolerance,
            required_cutoff: super::geometric_cutoff(q, out.tolerance * 1e-2).max(dim + 1),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn amp(table: &[Vec<f64>], n: usize, p: usize) -> f64 {
        table[n].get(p).copied().unwrap_or(0.0)
    }

    #[test]
    fn amplitudes_are_unitary_columns() {
        // Σ_p |<p, n+k-p|U|n,k>|² = 1 when nothing is cut.
        for k in 0..10 {
            let table = ancilla_table(0.3, k, 12, 30);
            for n in 0..12 {
                let norm: f64 = (0..=n + k).map(|p| amp(&table, n, p).powi(2)).sum();
                assert!((norm - 1.0).abs() < 1e-12, "k={k} n={n} norm={norm}");
            }
        }
    }

    #[test]
    fn large_ancilla_columns_stay_unitary() {
        for alpha in [0.1, 0.5, 0.9] {
            for k in [40, 120] {
                let table = ancilla_table(alpha, k, 160, 400);
                for (n, col) in table.iter().enumerate() {
                    let norm: f64 = col.iter().map(|a| a * a).sum();
                    assert!((norm - 1.0).abs() < 1e-12, "alpha={alpha} k={k} n={n} norm={norm}");
                }
                // |n, k> and |n - 1, k + 1> share the photon total, so their images are orthogonal.
                let next = ancilla_table(alpha, k + 1, 160, 400);
                for n in 1..160 {
                    let dot: f64 = table[n].iter().zip(&next[n - 1]).map(|(a, b)| a * b).sum();
                    assert!(dot.abs() < 1e-12, "alpha={alpha} k={k} n={n} dot={dot}");
                }
            }
        }
    }

    #[test]
    fn amplitudes_match_polynomial_expansion() {
        // B = sqrt(p! q! / (n! k!)) Σ_l (-1)^l C(n, p-l) C(k, l) t^{p+k-2l} ρ^{n-p+2l}
        let alpha: f64 = 0.37;
        let (t, rho) = ((1.0 - alpha).sqrt(), alpha.sqrt());
        let fact = |n: usize| (1..=n).map(|x| x as f64).product::<f64>();
        let binom = |n: usize, k: usize| if k > n { 0.0 } else { fact(n) / (fact(k) * fact(n - k)) };
        for n in 0..6 {
            for k in 0..6 {
                let table = ancilla_table(alpha, k, 6, 12);
                for p in 0..=n + k {
                    let q = n + k - p;
                    let mut sum = 0.0;
                    for l in 0..=k.min(p) {
                        if p - l > n {
                            continue;
                        }
                        let e_t = (p + k) as i32 - 2 * l as i32;
                        let e_r = n as i32 - p as i32 + 2 * l as i32;
                        sum += (-1f64).powi(l as i32) * binom(n, p - l) * binom(k, l) * t.powi(e_t) * rho.powi(e_r);
                    }
                    let expect = (fact(p) * fact(q) / (fact(n) * fact(k))).sqrt() * sum;
                    assert!((amp(&table, n, p) - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn full_transmission_and_full_swap() {
        let id = ancilla_table(0.0, 2, 5, 10);
        assert_eq!(amp(&id, 3, 3), 1.0);
        assert_eq!(amp(&id, 3, 2), 0.0);
        for k in 0..4 {
            let swap = ancilla_table(1.0, k, 5, 10);
            for n in 0..5 {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                assert!((amp(&swap, n, k) - sign).abs() < 1e-14);
            }
        }
    }
}
