//! Two-mode squeezer on the sector representation.
//!
//! Within the sector of difference `d = |Δ|`, with basis `|j> = |j + d, j>`
//! (or its mirror), the zero-phase generator `r(ab - a†b†)` is a real
//! tridiagonal matrix, so the block unitary `U` is real. Column `n` of `U`
//! is an eigenvector of `U b†b U†` with eigenvalue `n`, and that operator
//! is again tridiagonal:
//! `H[j, j] = (c² + s²) j + s² (d + 1)`, `H[j, j+1] = c s √((j+1)(j+1+d))`.
//! Each column is therefore a solution of a three-term recurrence. It is
//! evaluated forward from the exact first entry
//! `U[0, n] = tanh^n r √C(n+d, n) / cosh^{d+1} r` up to the upper turning
//! point, and backward from far beyond the cutoff (Miller's method) in the
//! evanescent region, then the two pieces are matched and normalized. Both
//! directions are stable where they are used and rows past the cutoff never
//! leak back into the kept rows.
//!
//! A phase `θ` enters through `S(ξ) = R S(r) R†` with `R = e^{iθ a†a}`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{occupation, sector_len, FockDensityMatrix, Key};
use crate::error::{invalid, Error, Result};
use crate::gaussian::SqueezeParams;
use crate::outcome::OutcomeDistribution;

const CACHE_BUDGET_BYTES: usize = 512 << 20;

type ColumnKey = (u64, usize, usize, usize, usize);

struct ColumnCache {
    map: HashMap<ColumnKey, Arc<DMatrix<f64>>>,
    bytes: usize,
}

fn cache() -> &'static Mutex<ColumnCache> {
    static CACHE: OnceLock<Mutex<ColumnCache>> = OnceLock::new();
    CACHE.get_or_init(|| {
        Mutex::new(ColumnCache {
            map: HashMap::new(),
            bytes: 0,
        })
    })
}

/// Drops all memoized squeezer blocks.
pub fn clear_squeezer_cache() {
    let mut c = cache().lock().unwrap_or_else(|e| e.into_inner());
    c.map.clear();
    c.bytes = 0;
}

fn cached_columns(r: f64, d: usize, rows: usize, cols: usize, margin: usize) -> Arc<DMatrix<f64>> {
    let key = (r.to_bits(), d, rows, cols, margin);
    if let Some(hit) = cache().lock().unwrap_or_else(|e| e.into_inner()).map.get(&key) {
        return Arc::clone(hit);
    }
    let fresh = Arc::new(squeeze_columns(r, d, rows, cols, margin));
    let mut c = cache().lock().unwrap_or_else(|e| e.into_inner());
    let size = rows * cols * 8;
    if c.bytes + size > CACHE_BUDGET_BYTES {
        c.map.clear();
        c.bytes = 0;
    }
    c.bytes += size;
    c.map.insert(key, Arc::clone(&fresh));
    fresh
}

/// First `rows` entries of the first `cols` columns of the zero-phase block unitary.
pub(crate) fn squeeze_columns(r: f64, d: usize, rows: usize, cols: usize, margin: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows, cols);
    if r == 0.0 {
        for n in 0..rows.min(cols) {
            out[(n, n)] = 1.0;
        }
        return out;
    }
    let (c, s) = (r.cosh(), r.sinh());
    let df = d as f64;
    let diag = |k: usize| (c * c + s * s) * k as f64 + s * s * (df + 1.0);
    let off = |k: usize| c * s * (((k + 1) as f64) * (k as f64 + 1.0 + df)).sqrt();

    let mut back = Vec::new();
    let mut fwd = Vec::new();
    for n in 0..cols {
        let nf = n as f64;
        // `gap(k) <= 0` marks the oscillatory rows. The gap is convex in k, so
        // once it is positive and growing past `k = n` it stays positive.
        let gap = |k: usize| (nf - diag(k)).abs() - off(k) - off(k - 1);
        let (mut lo, mut hi) = (None, None);
        let mut k = 1;
        let mut prev = f64::INFINITY;
        loop {
            let g = gap(k);
            if g <= 0.0 {
                lo.get_or_insert(k);
                hi = Some(k);
            } else if k > n && g > prev {
                break;
            }
            prev = g;
            k += 1;
        }
        // Start the backward sweep where the unwanted solution has been
        // suppressed by ~1e-17 relative to every kept row: accumulate the
        // local growth rate of the dominant solution past both the turning
        // point and the last kept row (WKB estimate).
        let mut top = hi.unwrap_or(0).max(rows.saturating_sub(1)) + 1;
        let mut suppression = 0.0;
        while suppression < 39.2 || top < rows + margin {
            let x = ((diag(top) - nf) / off(top)).abs();
            suppression += 2.0 * (x / 2.0 + (x * x / 4.0 - 1.0).max(0.0).sqrt()).ln();
            top += 1;
        }

        back.clear();
        back.resize(top + 2, 0.0);
        back[top] = 1.0;
        // Below the oscillatory rows the backward sweep is the unstable
        // direction; stopping at `lo` also keeps rescaling from flushing the
        // rows we need to zero.
        let bottom = lo.unwrap_or(0);
        for k in (bottom + 1..=top).rev() {
            let v = ((nf - diag(k)) * back[k] - off(k) * back[k + 1]) / off(k - 1);
            back[k - 1] = v;
            if v.abs() > 1e100 {
                for x in &mut back[k - 1..] {
                    *x *= 1e-100;
                }
            }
        }

        let anchor = match (lo, hi) {
            (Some(a), Some(b)) => {
                let mut best = a;
                for k in a..=b {
                    if back[k].abs() > back[best].abs() {
                        best = k;
                    }
                }
                best
            }
            _ => 0,
        };

        // The sign of the first entry is positive; its size is fixed by normalization.
        fwd.clear();
        fwd.push(1.0);
        for k in 0..anchor {
            let prev = if k > 0 { off(k - 1) * fwd[k - 1] } else { 0.0 };
            let v = ((nf - diag(k)) * fwd[k] - prev) / off(k);
            fwd.push(v);
            if v.abs() > 1e100 {
                for x in &mut fwd {
                    *x *= 1e-100;
                }
            }
        }
        let scale = fwd[anchor] / back[anchor];
        let mut norm = 0.0;
        for k in 0..=top {
            let v = if k <= anchor { fwd[k] } else { back[k] * scale };
            norm += v * v;
        }
        let inv = 1.0 / norm.sqrt();
        for k in 0..rows {
            let v = if k <= anchor { fwd[k] } else { back[k] * scale };
            out[(k, n)] = v * inv;
        }
    }
    out
}

pub(super) fn check_modes(state: &FockDensityMatrix, i: usize, j: usize) -> Result<()> {
    if state.n_modes() != 2 {
        return Err(invalid("two-mode squeeze needs a two-mode state"));
    }
    if i == j || i > 1 || j > 1 {
        return Err(invalid(format!("invalid squeeze modes ({i}, {j})")));
    }
    Ok(())
}

/// Number of leading rows / columns that hold anything non-zero.
fn extent(block: &DMatrix<Complex64>) -> (usize, usize) {
    let mut rows = 0;
    let mut cols = 0;
    for r in 0..block.nrows() {
        for c in 0..block.ncols() {
            if block[(r, c)] != Complex64::default() {
                rows = rows.max(r + 1);
                cols = cols.max(c + 1);
            }
        }
    }
    (rows, cols)
}

/// `e^{iθ n0}` for the sector element `j` of `delta`.
fn phase_factor(theta: f64, delta: i32, j: usize) -> Complex64 {
    let n0 = occupation(delta, j)[0];
    Complex64::from_polar(1.0, theta * n0 as f64)
}

fn phase_is_trivial(theta: f64) -> bool {
    theta == 0.0
}

/// `R† X R` for a block keyed `(dr, dc)`.
fn unrotate(block: &DMatrix<Complex64>, key: Key, theta: f64) -> DMatrix<Complex64> {
    if phase_is_trivial(theta) {
        return block.clone();
    }
    DMatrix::from_fn(block.nrows(), block.ncols(), |r, c| {
        block[(r, c)] * phase_factor(theta, key.0, r).conj() * phase_factor(theta, key.1, c)
    })
}

fn split(x: &DMatrix<Complex64>) -> (DMatrix<f64>, DMatrix<f64>) {
    (x.map(|z| z.re), x.map(|z| z.im))
}

struct Prepared {
    key: Key,
    x: DMatrix<Complex64>,
    rows_u: Arc<DMatrix<f64>>,
    cols_u: Arc<DMatrix<f64>>,
}

fn prepare(state: &FockDensityMatrix, params: SqueezeParams, buffer: usize) -> Vec<Prepared> {
    let mut out = Vec::new();
    for (&key, block) in &state.blocks {
        let (er, ec) = extent(block);
        if er == 0 {
            continue;
        }
        let x = unrotate(&block.view((0, 0), (er, ec)).into_owned(), key, params.phase());
        let rows_r = sector_len(&state.cutoffs, key.0);
        let rows_c = sector_len(&state.cutoffs, key.1);
        let rows_u = cached_columns(params.r(), key.0.unsigned_abs() as usize, rows_r, er, buffer);
        let cols_u = cached_columns(params.r(), key.1.unsigned_abs() as usize, rows_c, ec, buffer);
        out.push(Prepared { key, x, rows_u, cols_u });
    }
    out
}

fn finish(
    state: &FockDensityMatrix,
    mut out: FockDensityMatrix,
    required_hint: impl FnOnce(&FockDensityMatrix) -> usize,
) -> Result<FockDensityMatrix> {
    let lost = (state.trace() - out.trace()).max(0.0);
    out.tail_bound = state.tail_bound + lost;
    if out.tail_bound > out.tolerance {
        return Err(Error::Truncation {
            tail: out.tail_bound,
            tolerance: out.tolerance,
            required_cutoff: required_hint(&out),
        });
    }
    Ok(out)
}

fn required_cutoff(state: &FockDensityMatrix) -> usize {
    let mean = state
        .mean_photon(0)
        .unwrap_or(0.0)
        .max(state.mean_photon(1).unwrap_or(0.0));
    let q = mean / (mean + 1.0);
    super::geometric_cutoff(q, state.tolerance * 1e-2).max(state.cutoffs[0] + 1)
}

pub(super) fn apply(state: &FockDensityMatrix, params: SqueezeParams, buffer: usize) -> Result<FockDensityMatrix> {
    if params.r() == 0.0 {
        return Ok(state.clone());
    }
    let mut out = FockDensityMatrix {
        cutoffs: state.cutoffs.clone(),
        blocks: Default::default(),
        tail_bound: state.tail_bound,
        tolerance: state.tolerance,
    };
    for p in prepare(state, params, buffer) {
        let (re, im) = split(&p.x);
        let left = &*p.rows_u;
        let right_t = p.cols_u.transpose();
        let y_re = left * re * &right_t;
        let y_im = left * im * &right_t;
        let theta = params.phase();
        let y = DMatrix::from_fn(y_re.nrows(), y_re.ncols(), |r, c| {
            let z = Complex64::new(y_re[(r, c)], y_im[(r, c)]);
            if phase_is_trivial(theta) {
                z
            } else {
                z * phase_factor(theta, p.key.0, r) * phase_factor(theta, p.key.1, c).conj()
            }
        });
        out.blocks.insert(p.key, y);
    }
    let hint_state = out.clone();
    finish(state, out, |_| required_cutoff(&hint_state))
}

/// Populations of `S ρ S†` on the output cutoffs `out`, which may exceed the
/// input cutoffs; only the `(Δ, Δ)` blocks contribute.
pub(super) fn number_distribution(
    state: &FockDensityMatrix,
    params: SqueezeParams,
    buffer: usize,
    out: &[usize],
) -> Result<OutcomeDistribution> {
    if state.n_modes() != 2 {
        return Err(invalid("two-mode squeeze needs a two-mode state"));
    }
    if out.len() != 2 || out.iter().zip(&state.cutoffs).any(|(o, i)| o < i) {
        return Err(invalid(format!(
            "output cutoffs {out:?} must cover {:?}",
            state.cutoffs
        )));
    }
    let mut probs = vec![0.0; out[0] * out[1]];
    let mut total = 0.0;
    for (&key, block) in &state.blocks {
        if key.0 != key.1 {
            continue;
        }
        let (er, ec) = extent(block);
        let e = er.max(ec);
        if e == 0 {
            continue;
        }
        let rows = sector_len(out, key.0);
        let d = key.0.unsigned_abs() as usize;
        let x = unrotate(&block.view((0, 0), (e, e)).into_owned(), key, params.phase());
        let u = if params.r() == 0.0 {
            Arc::new(DMatrix::identity(rows, e))
        } else {
            cached_columns(params.r(), d, rows, e, buffer)
        };
        // diag(U X Uᵀ) = rowwise Σ (U X) ∘ U; the antisymmetric imaginary part drops out.
        let ux = &*u * x.map(|z| z.re);
        for j in 0..rows {
            let p = ux.row(j).dot(&u.row(j));
            let occ = occupation(key.0, j);
            probs[occ[0] * out[1] + occ[1]] = p;
            total += p;
        }
    }
    let tail_bound = state.tail_bound + (state.trace() - total).max(0.0);
    if tail_bound > state.tolerance {
        let dist = OutcomeDistribution::new(out.to_vec(), probs.iter().map(|p| p.max(0.0)).collect(), tail_bound)?;
        let mean = dist.mean(0)?.max(dist.mean(1)?);
        let q = mean / (mean + 1.0);
        return Err(Error::Truncation {
            tail: tail_bound,
            tolerance: state.tolerance,
            required_cutoff: super::geometric_cutoff(q, state.tolerance * 1e-2).max(out[0] + 1),
        });
    }
    OutcomeDistribution::new(out.to_vec(), probs, tail_bound)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Columns of `exp(G)` for the truncated generator on a much larger space,
    /// via the spectrum of the symmetric matrix `S` with `T† G T = iS`, `T = diag(i^j)`.
    fn spectral_columns(r: f64, d: usize, rows: usize, cols: usize, big: usize) -> DMatrix<f64> {
        let mut sym = DMatrix::<f64>::zeros(big, big);
        for j in 1..big {
            let v = r * ((j * (j + d)) as f64).sqrt();
            sym[(j - 1, j)] = v;
            sym[(j, j - 1)] = v;
        }
        let eig = sym.symmetric_eigen();
        let q = &eig.eigenvectors;
        let cos = q * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::cos)) * q.transpose();
        let sin = q * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sin)) * q.transpose();
        // U = T (C + iS) T†, real part selected by (m - n) mod 4
        DMatrix::from_fn(rows, cols, |m, n| match (m + 4 * big - n) % 4 {
            0 => cos[(m, n)],
            1 => -sin[(m, n)],
            2 => -cos[(m, n)],
            _ => sin[(m, n)],
        })
    }

    #[test]
    fn small_truncated_exponential_agrees() {
        // the dense exponential itself is only good to ~1e-10 at these norms
        let r = 0.5;
        let rec = squeeze_columns(r, 1, 20, 6, 12);
        let mut g = DMatrix::<f64>::zeros(120, 120);
        for j in 1..120 {
            let v = r * ((j * (j + 1)) as f64).sqrt();
            g[(j - 1, j)] = v;
            g[(j, j - 1)] = -v;
        }
        let dense = g.exp().view((0, 0), (20, 6)).into_owned();
        assert!((&rec - &dense).amax() < 1e-9);
    }

    #[test]
    fn recurrence_matches_spectral_exponential() {
        for &(r, d) in &[
            (0.3, 0),
            (0.881373587019543, 0),
            (0.881373587019543, 3),
            (1.146215834780589, 7),
        ] {
            let rec = squeeze_columns(r, d, 40, 12, 12);
            let dense = spectral_columns(r, d, 40, 12, 300);
            let err = (&rec - &dense).amax();
            assert!(err < 1e-11, "r={r} d={d} err={err:e}");
        }
    }

    #[test]
    fn columns_are_orthonormal() {
        let u = squeeze_columns(1.1462158347805889, 2, 600, 30, 12);
        let gram = u.transpose() * &u;
        assert!((gram - DMatrix::<f64>::identity(30, 30)).amax() < 1e-11);
    }

    #[test]
    fn first_row_is_analytic() {
        // Large sectors start in the classically forbidden region; the
        // oscillatory rows only begin far below the diagonal.
        for (r, d) in [(0.7f64, 4usize), (2f64.sqrt().asinh(), 40), (2f64.sqrt().asinh(), 79)] {
            let u = squeeze_columns(r, d, 5, 60, 12);
            for n in 0..60usize {
                let binom = statrs::function::factorial::binomial((n + d) as u64, n as u64);
                let expect = r.tanh().powi(n as i32) * binom.sqrt() / r.cosh().powi(d as i32 + 1);
                assert!(
                    (u[(0, n)] - expect).abs() < 1e-11 * expect,
                    "d={d} n={n} got={} expect={expect}",
                    u[(0, n)]
                );
            }
        }
    }

    #[test]
    fn zero_squeeze_is_identity() {
        let u = squeeze_columns(0.0, 3, 5, 4, 12);
        assert_eq!(u, DMatrix::identity(5, 4));
    }
}
