//! Savitzky-Golay smoothing of learning curves.
//!
//! Interior points use the usual least-squares convolution coefficients.
//! Near the ends the default [`Boundary::Interp`] fits one polynomial to the
//! first (last) `window` samples and evaluates it in place, so polynomials
//! of degree `<= order` pass through unchanged everywhere.
//! [`Boundary::Mirror`] instead reflects the series about its end samples
//! and convolves; it does not reproduce odd-degree terms at the edges.

use nalgebra::DMatrix;

use crate::{Error, Result};

pub const DEFAULT_WINDOW: usize = 51;
pub const DEFAULT_ORDER: usize = 3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Boundary {
    #[default]
    Interp,
    Mirror,
}

impl std::str::FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "interp" => Ok(Boundary::Interp),
            "mirror" => Ok(Boundary::Mirror),
            other => Err(Error::Config(format!("unknown boundary mode `{other}`"))),
        }
    }
}

pub fn validate(window: usize, order: usize) -> Result<()> {
    if window.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "smoothing window {window} must be odd"
        )));
    }
    if order >= window {
        return Err(Error::Config(format!(
            "polynomial order {order} must be below the window {window}"
        )));
    }
    Ok(())
}

/// Weights `h` such that `Σ_j h_j y_j` is the value at sample `pos` of the
/// least-squares polynomial of degree `order` through `y_0..y_{window-1}`.
pub fn coefficients(window: usize, order: usize, pos: usize) -> Result<Vec<f64>> {
    validate(window, order)?;
    if pos >= window {
        return Err(Error::Config(format!(
            "evaluation position {pos} outside the window"
        )));
    }
    let half = (window / 2).max(1) as f64;
    let centre = (window / 2) as f64;
    let x = |j: usize| (j as f64 - centre) / half;
    let vander = DMatrix::from_fn(window, order + 1, |j, k| x(j).powi(k as i32));
    let pinv = vander
        .pseudo_inverse(1e-12)
        .map_err(|_| Error::Singular("Savitzky-Golay design matrix"))?;
    let at: Vec<f64> = (0..=order).map(|k| x(pos).powi(k as i32)).collect();
    Ok((0..window)
        .map(|j| (0..=order).map(|k| at[k] * pinv[(k, j)]).sum())
        .collect())
}

pub fn savitzky_golay(series: &[f64], window: usize, order: usize) -> Result<Vec<f64>> {
    savitzky_golay_with(series, window, order, Boundary::Interp)
}

pub fn savitzky_golay_with(
    series: &[f64],
    window: usize,
    order: usize,
    boundary: Boundary,
) -> Result<Vec<f64>> {
    validate(window, order)?;
    let n = series.len();
    if n < window {
        return Err(Error::Config(format!(
            "series of length {n} is shorter than the window {window}"
        )));
    }
    let half = window / 2;
    let central = coefficients(window, order, half)?;
    let convolve = |get: &dyn Fn(isize) -> f64, i: usize| -> f64 {
        central
            .iter()
            .enumerate()
            .map(|(j, h)| h * get(i as isize + j as isize - half as isize))
            .sum()
    };
    let mut out = vec![0.0; n];
    match boundary {
        Boundary::Interp => {
            let get = |k: isize| series[k as usize];
            for (i, o) in out.iter_mut().enumerate().take(n - half).skip(half) {
                *o = convolve(&get, i);
            }
            for i in 0..half {
                let h = coefficients(window, order, i)?;
                out[i] = h.iter().zip(&series[..window]).map(|(a, b)| a * b).sum();
                let tail = &series[n - window..];
                let h = coefficients(window, order, window - 1 - i)?;
                out[n - 1 - i] = h.iter().zip(tail).map(|(a, b)| a * b).sum();
            }
        }
        Boundary::Mirror => {
            let last = n as isize - 1;
            let get = |k: isize| {
                let mut k = k;
                // Reflections can repeat when the window exceeds the series.
                while k < 0 || k > last {
                    k = if k < 0 { -k } else { 2 * last - k };
                }
                series[k as usize]
            };
            if n == 1 {
                return Ok(series.to_vec());
            }
            for (i, o) in out.iter_mut().enumerate() {
                *o = convolve(&get, i);
            }
        }
    }
    Ok(out)
}

/// Smooths with the largest admissible window not exceeding `window`, so short
/// series are still filtered; series shorter than `order + 2` (or of length
/// zero) are returned unchanged.
pub fn savitzky_golay_clamped(
    series: &[f64],
    window: usize,
    order: usize,
    boundary: Boundary,
) -> Result<Vec<f64>> {
    validate(window, order)?;
    let mut w = window.min(series.len());
    if w.is_multiple_of(2) {
        w = w.saturating_sub(1);
    }
    if w <= order {
        return Ok(series.to_vec());
    }
    savitzky_golay_with(series, w, order, boundary)
}
