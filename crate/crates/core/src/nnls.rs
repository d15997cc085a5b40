//! Lawson-Hanson active-set solver for `min ||A x - b||` subject to `x >= 0`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct NnlsSolution {
    pub x: DVector<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
}

fn solve_passive(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[usize]) -> DVector<f64> {
    let sub = a.select_columns(passive);
    let svd = sub.svd(true, true);
    let tol = 1e-12 * svd.singular_values.max().max(1.0);
    let z = svd.solve(b, tol).expect("svd computed with both factors");
    let mut full = DVector::zeros(a.ncols());
    for (k, &j) in passive.iter().enumerate() {
        full[j] = z[k];
    }
    full
}

pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<NnlsSolution> {
    let (m, n) = a.shape();
    if b.len() != m {
        return Err(Error::invalid(format!(
            "nnls: rhs has {} rows, matrix has {m}",
            b.len()
        )));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("nnls: non-finite input"));
    }
    let mut x = DVector::zeros(n);
    if n == 0 {
        return Ok(NnlsSolution {
            residual_norm: b.norm(),
            x,
            iterations: 0,
        });
    }
    let tol = 1e-12 * a.norm().max(1.0) * b.norm().max(1.0);
    let mut passive: Vec<usize> = Vec::new();
    let mut in_passive = vec![false; n];
    let max_iter = 3 * n + 30;
    let mut iterations = 0;

    loop {
        let w = a.tr_mul(&(b - a * &x));
        let candidate = (0..n)
            .filter(|&j| !in_passive[j])
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let j = match candidate {
            Some(j) if w[j] > tol => j,
            _ => break,
        };
        iterations += 1;
        if iterations > max_iter {
            break;
        }
        passive.push(j);
        in_passive[j] = true;

        loop {
            let z = solve_passive(a, b, &passive);
            if passive.iter().all(|&i| z[i] > 0.0) {
                x = z;
                break;
            }
            let mut alpha = f64::INFINITY;
            for &i in &passive {
                if z[i] <= 0.0 {
                    let denom = x[i] - z[i];
                    if denom > 0.0 {
                        alpha = alpha.min(x[i] / denom);
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            x += (z - &x) * alpha;
            passive.retain(|&i| {
                let keep = x[i] > 1e-15;
                if !keep {
                    x[i] = 0.0;
                    in_passive[i] = false;
                }
                keep
            });
            if passive.is_empty() {
                break;
            }
        }
    }

    let residual_norm = (a * &x - b).norm();
    Ok(NnlsSolution {
        x,
        residual_norm,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unconstrained_optimum_is_returned_when_positive() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let x_true = DVector::from_vec(vec![0.5, 2.0]);
        let b = &a * &x_true;
        let sol = nnls(&a, &b).unwrap();
        assert!((sol.x - x_true).norm() < 1e-10);
        assert!(sol.residual_norm < 1e-10);
    }

    #[test]
    fn negative_direction_clamps_to_zero() {
        let a = DMatrix::identity(2, 2);
        let b = DVector::from_vec(vec![-1.0, 3.0]);
        let sol = nnls(&a, &b).unwrap();
        assert_eq!(sol.x[0], 0.0);
        assert!((sol.x[1] - 3.0).abs() < 1e-12);
        assert!((sol.residual_norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_problem() {
        let a = DMatrix::zeros(2, 0);
        let b = DVector::from_vec(vec![3.0, 4.0]);
        assert_eq!(nnls(&a, &b).unwrap().residual_norm, 5.0);
    }

    proptest! {
        // KKT conditions: x >= 0, gradient w = A^T (b - Ax) <= tol, and
        // complementary slackness x_j * w_j ~ 0.
        #[test]
        fn kkt_conditions_hold(
            data in proptest::collection::vec(-1.0f64..1.0, 24),
            rhs in proptest::collection::vec(-1.0f64..1.0, 6),
        ) {
            let a = DMatrix::from_row_slice(6, 4, &data);
            let b = DVector::from_vec(rhs);
            let sol = nnls(&a, &b).unwrap();
            let w = a.tr_mul(&(&b - &a * &sol.x));
            for j in 0..4 {
                prop_assert!(sol.x[j] >= 0.0);
                prop_assert!(w[j] < 1e-8);
                prop_assert!((sol.x[j] * w[j]).abs() < 1e-8);
            }
        }
    }
}
