//! Closed-form risk bounds, concentration radii and geometric summaries.
//!
//! All risk factors multiply the naive-estimator risk `sigma_bar^2`.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::kernel::{Bag, KernelSpec};
use crate::linalg;

/// Whether the tests use independent data or the same sample as estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMode {
    /// Tests run on an independent copy of the data.
    Independent,
    /// Tests and estimation share one sample.
    OneSample,
}

fn check_tau(tau: f64) -> Result<()> {
    if tau >= 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("tau must be finite and >= 0, got {tau}")))
    }
}

/// Risk factor of a single task whose neighbourhood has `degree = |V_i|`
/// members (the task itself included).
///
/// Independent tests: `(tau v + 1) / ((1 + tau) v + 1)` with `v = |V_i| - 1`.
/// One sample: `2 (tau + (tau + 1/|V_i|) / (1 + tau))`.
pub fn mse_factor_single(tau: f64, degree: usize, mode: BoundMode) -> Result<f64> {
    check_tau(tau)?;
    if degree == 0 {
        return Err(invalid("a neighbourhood always contains the task itself"));
    }
    Ok(match mode {
        BoundMode::Independent => {
            let v = (degree - 1) as f64;
            (tau * v + 1.0) / ((1.0 + tau) * v + 1.0)
        }
        BoundMode::OneSample => 2.0 * (tau + (tau + 1.0 / degree as f64) / (1.0 + tau)),
    })
}

/// Averaged risk factor given the covering number of the task means.
///
/// Independent tests: `tau/(tau + 1) + (cover/B)/(tau + 1)`.
/// One sample: `2 (tau + tau/(1 + tau) + (cover/B)/(1 + tau))`.
pub fn mse_factor_avg(tau: f64, cover: usize, b: usize, mode: BoundMode) -> Result<f64> {
    check_tau(tau)?;
    if cover < 1 || cover > b {
        return Err(invalid(format!(
            "covering number must lie in [1, B], got {cover} with B = {b}"
        )));
    }
    let ratio = cover as f64 / b as f64;
    Ok(match mode {
        BoundMode::Independent => tau / (tau + 1.0) + ratio / (tau + 1.0),
        BoundMode::OneSample => 2.0 * (tau + tau / (1.0 + tau) + ratio / (1.0 + tau)),
    })
}

/// `r(t) = 5 (sqrt((1/d_eff + L/(N sigma_bar)) t) + L t/(N sigma_bar))` and
/// `tau_min = r max(sqrt 2, r)`, returned as `(r, tau_min)`.
pub fn theory_radius(t: f64, d_eff: f64, l: f64, n: usize, sigma_bar: f64) -> Result<(f64, f64)> {
    if !(t > 0.0 && d_eff > 0.0 && l > 0.0 && sigma_bar > 0.0 && n > 0) {
        return Err(invalid(
            "theory radius needs t, d_eff, L, N and sigma_bar all positive",
        ));
    }
    let ratio = l / (n as f64 * sigma_bar);
    let r = 5.0 * (((1.0 / d_eff + ratio) * t).sqrt() + ratio * t);
    Ok((r, r * std::f64::consts::SQRT_2.max(r)))
}

/// Deviation radius of the norm of an empirical mean of bounded variables:
/// `2 sqrt((2 |Sigma|_op / N + 16 L sqrt(Tr Sigma) / N^{3/2}) t) + 2 L t / N`.
pub fn q_sigma(t: f64, trace_sigma: f64, op_norm_sigma: f64, n: usize, l: f64) -> Result<f64> {
    if !(t >= 0.0 && trace_sigma >= 0.0 && op_norm_sigma >= 0.0 && l > 0.0 && n > 0) {
        return Err(invalid(
            "q_sigma needs L, N positive and t and the covariance summaries non-negative",
        ));
    }
    let n = n as f64;
    Ok(
        2.0 * ((2.0 * op_norm_sigma / n + 16.0 * l * trace_sigma.sqrt() / n.powf(1.5)) * t).sqrt()
            + 2.0 * l * t / n,
    )
}

/// Deviation radius used for the unbiased squared MMD:
/// `2 sqrt((4 sigma_bar^2 / d_eff + 16 L sqrt(2 sigma_bar^2) / N) t) + 2 L t / N`.
pub fn q_mmd(t: f64, sigma_bar2: f64, d_eff: f64, n: usize, l: f64) -> Result<f64> {
    if !(t >= 0.0 && sigma_bar2 >= 0.0 && d_eff > 0.0 && l > 0.0 && n > 0) {
        return Err(invalid(
            "q needs d_eff, L, N positive and t, sigma_bar^2 non-negative",
        ));
    }
    let n = n as f64;
    Ok(
        2.0 * ((4.0 * sigma_bar2 / d_eff + 16.0 * l * (2.0 * sigma_bar2).sqrt() / n) * t).sqrt()
            + 2.0 * l * t / n,
    )
}

/// Both radii at once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Radii {
    pub q_sigma: f64,
    pub q: f64,
}

/// Computes `q_Sigma(t)` and `q(t)` for one distribution. `sigma_bar2` is
/// `Tr Sigma / N` and `d_eff` is `Tr Sigma / |Sigma|_op`.
pub fn q_radii(t: f64, trace_sigma: f64, op_norm_sigma: f64, n: usize, l: f64) -> Result<Radii> {
    let qs = q_sigma(t, trace_sigma, op_norm_sigma, n, l)?;
    let d_eff = if op_norm_sigma > 0.0 {
        trace_sigma / op_norm_sigma
    } else {
        1.0
    };
    let q = q_mmd(t, trace_sigma / n as f64, d_eff, n, l)?;
    Ok(Radii { q_sigma: qs, q })
}

/// Greedy covering: visit points in order and open a new centre whenever a
/// point lies farther than `radius` from all existing centres.
pub fn covering_number(points: ArrayView2<'_, f64>, radius: f64) -> Result<usize> {
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(invalid(format!(
            "radius must be finite and >= 0, got {radius}"
        )));
    }
    let r2 = radius * radius;
    let mut centres: Vec<usize> = Vec::new();
    for i in 0..points.nrows() {
        let p = points.row(i);
        let covered = centres.iter().any(|&c| {
            let d2: f64 = p
                .iter()
                .zip(points.row(c))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d2 <= r2
        });
        if !covered {
            centres.push(i);
        }
    }
    Ok(centres.len())
}

/// `sum(spectrum) / max(spectrum)`.
pub fn effective_dimension(spectrum: &[f64]) -> Result<f64> {
    if spectrum.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(invalid("spectrum must be finite and non-negative"));
    }
    let max = spectrum.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(invalid("spectrum has no positive value"));
    }
    Ok(spectrum.iter().sum::<f64>() / max)
}

/// Effective dimension of the empirical covariance operator of a bag, read off
/// the spectrum of its centred Gram matrix divided by `N`.
pub fn bag_effective_dimension(bag: &Bag, kernel: &KernelSpec) -> Result<f64> {
    let n = bag.len();
    let k = crate::kernel::gram_block(bag, bag, kernel)?.values;
    let row_means: Vec<f64> = k
        .rows()
        .into_iter()
        .map(|r| r.mean().unwrap_or(0.0))
        .collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let centred = Array2::from_shape_fn((n, n), |(i, j)| {
        (k[[i, j]] - row_means[i] - row_means[j] + grand) / n as f64
    });
    let spectrum: Vec<f64> = linalg::symmetric_eigenvalues(&centred)?
        .into_iter()
        .map(|v| v.max(0.0))
        .collect();
    effective_dimension(&spectrum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn single_task_factor_examples() {
        assert_abs_diff_eq!(
            mse_factor_single(0.1, 10, BoundMode::Independent).unwrap(),
            1.9 / 10.9,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            mse_factor_single(0.1, 10, BoundMode::Independent).unwrap(),
            0.1743,
            epsilon = 1e-4
        );
        assert_eq!(
            mse_factor_single(0.3, 1, BoundMode::Independent).unwrap(),
            1.0
        );
        assert!(mse_factor_single(0.3, 0, BoundMode::OneSample).is_err());
        // 2 (0.5 + (0.5 + 0.25) / 1.5)
        assert_abs_diff_eq!(
            mse_factor_single(0.5, 4, BoundMode::OneSample).unwrap(),
            2.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn averaged_factor_examples() {
        assert_abs_diff_eq!(
            mse_factor_avg(0.1, 1, 100, BoundMode::Independent).unwrap(),
            0.1,
            epsilon = 1e-15
        );
        assert_eq!(
            mse_factor_avg(0.0, 7, 7, BoundMode::Independent).unwrap(),
            1.0
        );
        assert!(mse_factor_avg(0.1, 0, 10, BoundMode::Independent).is_err());
        assert!(mse_factor_avg(0.1, 11, 10, BoundMode::Independent).is_err());
        assert_abs_diff_eq!(
            mse_factor_avg(1.0, 5, 10, BoundMode::OneSample).unwrap(),
            2.0 * (1.0 + 0.5 + 0.25),
            epsilon = 1e-15
        );
    }

    #[test]
    fn radius_example() {
        let (r, tau_min) = theory_radius(1.0, 100.0, 1.0, 100, 0.1).unwrap();
        assert_abs_diff_eq!(r, 2.1583123951777, epsilon = 1e-12);
        assert_abs_diff_eq!(r, 2.158, epsilon = 1e-3);
        assert_abs_diff_eq!(tau_min, 4.6583123951777, epsilon = 1e-12);
    }

    #[test]
    fn q_sigma_example() {
        let q = q_sigma(1.0, 1.0, 0.01, 100, 1.0).unwrap();
        assert_abs_diff_eq!(q, 0.2745584412271571, epsilon = 1e-14);
    }

    #[test]
    fn covering_examples() {
        let collocated = Array2::from_elem((5, 3), 1.0);
        assert_eq!(covering_number(collocated.view(), 0.0).unwrap(), 1);
        let pts = array![[0.0], [1.0], [3.0]];
        assert_eq!(covering_number(pts.view(), 0.0).unwrap(), 3);
        assert_eq!(covering_number(pts.view(), 1.0).unwrap(), 2);
        assert_eq!(covering_number(pts.view(), 3.0).unwrap(), 1);
    }

    #[test]
    fn cluster_model_means_are_covered_by_one_ball_per_cluster() {
        use crate::datagen::{gen_gaussian, GaussianKind, GaussianModel, CLUSTER_COUNT};
        // Means sit about 3.2 from their centre and about 45 from other clusters.
        let model = GaussianModel {
            b: 400,
            ..GaussianModel::new(GaussianKind::Cluster, 4)
        };
        let data = gen_gaussian(&model).unwrap();
        assert_eq!(
            covering_number(data.means.view(), 10.0).unwrap(),
            CLUSTER_COUNT
        );
    }

    #[test]
    fn radii_vanish_at_zero_deviation() {
        let r = q_radii(0.0, 1.0, 0.01, 100, 1.0).unwrap();
        assert_eq!((r.q_sigma, r.q), (0.0, 0.0));
    }

    #[test]
    fn effective_dimension_examples() {
        assert_abs_diff_eq!(
            effective_dimension(&[1.0, 1.0, 1.0, 1.0]).unwrap(),
            4.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            effective_dimension(&[1.0, 0.0, 0.0]).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert!(effective_dimension(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn isotropic_bag_has_full_effective_dimension() {
        // Vertices of a regular simplex-like set: +-e_k, centred and isotropic.
        let rows: Vec<Vec<f64>> = (0..3)
            .flat_map(|k| {
                [1.0, -1.0].map(|s| {
                    (0..3)
                        .map(|j| if j == k { s } else { 0.0 })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        let bag = Bag::from_rows("iso", &rows).unwrap();
        assert_abs_diff_eq!(
            bag_effective_dimension(&bag, &KernelSpec::Linear).unwrap(),
            3.0,
            epsilon = 1e-10
        );
    }

    proptest! {
        #[test]
        fn independent_factor_is_at_most_one_and_decreasing_in_degree(tau in 0.0f64..10.0, v in 1usize..50) {
            let a = mse_factor_single(tau, v, BoundMode::Independent).unwrap();
            let b = mse_factor_single(tau, v + 1, BoundMode::Independent).unwrap();
            prop_assert!(a <= 1.0 + 1e-15);
            prop_assert!(b <= a + 1e-15);
        }

        #[test]
        fn greedy_centres_form_a_cover(
            v in proptest::collection::vec(-5.0f64..5.0, 2..40), r in 0.0f64..3.0
        ) {
            let n = v.len() / 2;
            let pts = Array2::from_shape_vec((n, 2), v[..2 * n].to_vec()).unwrap();
            let c = covering_number(pts.view(), r).unwrap();
            prop_assert!(c >= 1 && c <= n);
            prop_assert_eq!(covering_number(pts.view(), 20.0).unwrap(), 1);
        }
    }
}
