use std::f64::consts::PI;

use crate::{Error, Result};

/// Fixed state feature map `φ(s)`.
#[derive(Clone, Debug, PartialEq)]
pub enum FeatureMap {
    /// Constant feature `[1]`.
    Bias,
    Identity {
        dim: usize,
    },
    /// `[1, s_1, .., s_1^d, s_2, .., s_n^d]`, no cross terms.
    Polynomial {
        dim: usize,
        degree: usize,
    },
    /// Gaussian bumps `exp(-½ Σ_i ((s_i - c_i) / w_i)^2)`. Dimensions with a
    /// period measure the difference the short way round.
    RadialBasis {
        centers: Vec<Vec<f64>>,
        widths: Vec<f64>,
        periods: Vec<Option<f64>>,
    },
}

impl FeatureMap {
    /// Full tensor grid of centers. Periodic dimensions place `count`
    /// centers evenly around the circle starting at `low`; others span
    /// `[low, high]` inclusive. The width in each dimension is the spacing.
    pub fn rbf_grid(
        lows: &[f64],
        highs: &[f64],
        counts: &[usize],
        periodic: &[bool],
    ) -> Result<Self> {
        let dims = lows.len();
        if highs.len() != dims || counts.len() != dims || periodic.len() != dims || dims == 0 {
            return Err(Error::InvalidModel("rbf grid dimensions disagree".into()));
        }
        let mut axes = Vec::with_capacity(dims);
        let mut widths = Vec::with_capacity(dims);
        let mut periods = Vec::with_capacity(dims);
        for i in 0..dims {
            let span = highs[i] - lows[i];
            if counts[i] < 2 || !(span > 0.0) {
                return Err(Error::InvalidModel(
                    "rbf grid needs >= 2 centers over a positive span".into(),
                ));
            }
            let spacing = if periodic[i] {
                span / counts[i] as f64
            } else {
                span / (counts[i] - 1) as f64
            };
            axes.push(
                (0..counts[i])
                    .map(|k| lows[i] + spacing * k as f64)
                    .collect::<Vec<_>>(),
            );
            widths.push(spacing);
            periods.push(periodic[i].then_some(span));
        }
        let mut centers = vec![Vec::with_capacity(dims)];
        for axis in &axes {
            centers = centers
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |&c| {
                        let mut next = prefix.clone();
                        next.push(c);
                        next
                    })
                })
                .collect();
        }
        Ok(FeatureMap::RadialBasis {
            centers,
            widths,
            periods,
        })
    }

    /// 9 x 9 grid over angle (periodic) and angular velocity in [-8, 8].
    pub fn pendulum_rbf() -> Self {
        Self::rbf_grid(&[-PI, -8.0], &[PI, 8.0], &[9, 9], &[true, false])
            .expect("static grid is valid")
    }

    pub fn dim(&self) -> usize {
        match self {
            FeatureMap::Bias => 1,
            FeatureMap::Identity { dim } => *dim,
            FeatureMap::Polynomial { dim, degree } => 1 + dim * degree,
            FeatureMap::RadialBasis { centers, .. } => centers.len(),
        }
    }

    pub fn features(&self, state: &[f64]) -> Vec<f64> {
        match self {
            FeatureMap::Bias => vec![1.0],
            FeatureMap::Identity { .. } => state.to_vec(),
            FeatureMap::Polynomial { degree, .. } => {
                let mut out = Vec::with_capacity(self.dim());
                out.push(1.0);
                for &x in state {
                    let mut power = 1.0;
                    for _ in 0..*degree {
                        power *= x;
                        out.push(power);
                    }
                }
                out
            }
            FeatureMap::RadialBasis {
                centers,
                widths,
                periods,
            } => centers
                .iter()
                .map(|c| {
                    let sq: f64 = state
                        .iter()
                        .zip(c)
                        .zip(widths.iter().zip(periods))
                        .map(|((&x, &ci), (&w, period))| {
                            let mut d = x - ci;
                            if let Some(p) = period {
                                d -= p * (d / p).round();
                            }
                            (d / w) * (d / w)
                        })
                        .sum();
                    (-0.5 * sq).exp()
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_layout() {
        let f = FeatureMap::Polynomial { dim: 2, degree: 2 };
        assert_eq!(f.features(&[2.0, -1.0]), vec![1.0, 2.0, 4.0, -1.0, 1.0]);
        assert_eq!(f.dim(), 5);
    }

    #[test]
    fn pendulum_grid_is_periodic_in_angle() {
        let f = FeatureMap::pendulum_rbf();
        assert_eq!(f.dim(), 81);
        let a = f.features(&[PI - 1e-9, 0.3]);
        let b = f.features(&[-PI + 1e-9, 0.3]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-6);
        }
        // a state on a center has that feature equal to 1
        assert!(f.features(&[-PI, -8.0])[0] == 1.0);
    }
}
