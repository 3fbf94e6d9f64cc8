//! One-shot estimation on a fixed collection of bags.

use ndarray::{Array2, Axis};

use crate::error::{invalid, Result};
use crate::estimators::{
    apply_weights, mean_pairwise_sq_distance, mta_weights, mta_weights_from_parts, ne_weights,
    pp_james_stein, rkmse_weights, stb_weights, Method, MtaSimilarity, WeightMatrix,
};
use crate::harness::eval::ParamPoint;
use crate::kernel::{common_dim, Bag, KernelSpec};
use crate::similarity::{build_neighbor_graph_gaussian, build_neighbor_graph_kme, NeighborGraph};

/// How bags are compared.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Setting {
    /// Vector means with unit-variance noise; every bag has `n` samples.
    Gaussian,
    /// Kernel mean embeddings.
    Kernel(KernelSpec),
}

/// Output of [`estimate`]: the weight matrix where the method has one, and
/// explicit mean vectors where they exist (Gaussian setting or linear kernel).
#[derive(Debug, Clone)]
pub struct Estimate {
    pub weights: Option<WeightMatrix>,
    pub means: Option<Array2<f64>>,
}

/// Naive means, one row per bag.
pub fn bag_means(bags: &[Bag]) -> Result<Array2<f64>> {
    let d = common_dim(bags)?;
    let mut out = Array2::zeros((bags.len(), d));
    for (mut row, bag) in out.axis_iter_mut(Axis(0)).zip(bags) {
        row.assign(&bag.mean());
    }
    Ok(out)
}

fn common_len(bags: &[Bag]) -> Result<usize> {
    let n = bags
        .first()
        .map(Bag::len)
        .ok_or_else(|| invalid("no bags"))?;
    if bags.iter().any(|b| b.len() != n) {
        return Err(invalid("the Gaussian setting needs bags of equal size"));
    }
    Ok(n)
}

/// Similarity graph of the bags at threshold `zeta`.
pub fn neighbor_graph(bags: &[Bag], setting: Setting, zeta: f64) -> Result<NeighborGraph> {
    match setting {
        Setting::Gaussian => {
            build_neighbor_graph_gaussian(bag_means(bags)?.view(), zeta, common_len(bags)?)
        }
        Setting::Kernel(k) => build_neighbor_graph_kme(bags, &k, zeta),
    }
}

/// Estimate every bag's mean with `method` at `point`.
pub fn estimate(
    bags: &[Bag],
    setting: Setting,
    method: Method,
    point: &ParamPoint,
) -> Result<Estimate> {
    let zeta = || {
        point
            .zeta
            .ok_or_else(|| invalid(format!("{method} needs zeta")))
    };
    let gamma = || {
        point
            .gamma
            .ok_or_else(|| invalid(format!("{method} needs gamma")))
    };
    let muhats = bag_means(bags)?;
    let weights = match (method, setting) {
        (Method::Ne, _) => ne_weights(bags.len()),
        (Method::Stb0 | Method::StbWeight | Method::StbTheory, _) => stb_weights(
            &neighbor_graph(bags, setting, zeta()?)?,
            point.shrinkage(method)?,
        )?,
        (Method::PpJamesStein, Setting::Gaussian) => {
            let n = common_len(bags)?;
            let means = pp_james_stein(muhats.view(), 1.0 / n as f64, None)?;
            return Ok(Estimate {
                weights: None,
                means: Some(means),
            });
        }
        (Method::MtaConst | Method::MtaStb, Setting::Gaussian) => {
            let n = common_len(bags)?;
            let variances = vec![muhats.ncols() as f64 / n as f64; bags.len()];
            let graph;
            let sim = if method == Method::MtaConst {
                MtaSimilarity::Constant(mean_pairwise_sq_distance(&muhats.dot(&muhats.t())))
            } else {
                graph = neighbor_graph(bags, setting, zeta()?)?;
                MtaSimilarity::Graph(&graph)
            };
            mta_weights_from_parts(&variances, sim, gamma()?)?
        }
        (Method::RKmse, Setting::Kernel(k)) => rkmse_weights(bags, &k)?,
        (Method::MtaConst, Setting::Kernel(k)) => mta_weights(bags, &k, gamma()?, None)?,
        (Method::MtaStb, Setting::Kernel(k)) => {
            let graph = build_neighbor_graph_kme(bags, &k, zeta()?)?;
            mta_weights(bags, &k, gamma()?, Some(&graph))?
        }
        (Method::PpJamesStein, _) => return Err(invalid("PP-JS needs the Gaussian setting")),
        (Method::RKmse, _) => return Err(invalid("R-KMSE needs a kernel setting")),
    };
    let explicit = matches!(
        setting,
        Setting::Gaussian | Setting::Kernel(KernelSpec::Linear)
    );
    let means = if explicit {
        Some(apply_weights(&weights, muhats.view())?)
    } else {
        None
    };
    Ok(Estimate {
        weights: Some(weights),
        means,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn bags() -> Vec<Bag> {
        vec![
            Bag::new("a", array![[0.0, 0.0], [0.2, 0.0]]).unwrap(),
            Bag::new("b", array![[0.1, 0.1], [0.1, -0.1]]).unwrap(),
            Bag::new("c", array![[9.0, 9.0], [9.2, 9.0]]).unwrap(),
        ]
    }

    #[test]
    fn stb0_averages_the_near_pair() {
        let p = ParamPoint {
            zeta: Some(1.0),
            ..Default::default()
        };
        let e = estimate(&bags(), Setting::Gaussian, Method::Stb0, &p).unwrap();
        let m = e.means.unwrap();
        assert!((m[[0, 0]] - 0.1).abs() < 1e-12 && (m[[1, 0]] - 0.1).abs() < 1e-12);
        assert!((m[[2, 0]] - 9.1).abs() < 1e-12);
    }

    #[test]
    fn rbf_estimates_carry_weights_only() {
        let k = KernelSpec::gaussian_rbf(1.0).unwrap();
        let e = estimate(
            &bags(),
            Setting::Kernel(k),
            Method::RKmse,
            &ParamPoint::default(),
        )
        .unwrap();
        assert!(e.means.is_none());
        assert!(e.weights.is_some());
    }

    #[test]
    fn mode_restricted_methods_fail_elsewhere() {
        let k = Setting::Kernel(KernelSpec::Linear);
        assert!(estimate(&bags(), k, Method::PpJamesStein, &ParamPoint::default()).is_err());
        assert!(estimate(
            &bags(),
            Setting::Gaussian,
            Method::RKmse,
            &ParamPoint::default()
        )
        .is_err());
        assert!(estimate(
            &bags(),
            Setting::Gaussian,
            Method::StbWeight,
            &ParamPoint::default()
        )
        .is_err());
    }

    #[test]
    fn mta_rows_are_stochastic_in_both_settings() {
        let p = ParamPoint {
            zeta: Some(2.0),
            gamma: Some(3.0),
            c: None,
        };
        for s in [
            Setting::Gaussian,
            Setting::Kernel(KernelSpec::gaussian_rbf(0.5).unwrap()),
        ] {
            for m in [Method::MtaConst, Method::MtaStb] {
                let w = estimate(&bags(), s, m, &p).unwrap().weights.unwrap();
                assert!(w.max_row_sum_error() < 1e-10);
            }
        }
    }
}
