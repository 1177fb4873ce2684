use super::{MatError, Result};

/// Finite-difference weights for the `k`-th derivative at 0 on arbitrary
/// distinct nodes (Fornberg's recursion). Exact for polynomials of degree
/// below the node count.
pub fn fd_weights(nodes: &[f64], k: usize) -> Result<Vec<f64>> {
    let n = nodes.len();
    if k >= n {
        return Err(MatError::Invalid(format!(
            "derivative order {k} needs more than {n} nodes"
        )));
    }
    if nodes.iter().any(|x| !x.is_finite()) {
        return Err(MatError::NonFinite);
    }
    for i in 0..n {
        for j in i + 1..n {
            if nodes[i] == nodes[j] {
                return Err(MatError::Invalid(format!("repeated node {}", nodes[i])));
            }
        }
    }
    // c[j][m]: weight of node j for derivative m using the nodes seen so far.
    let mut c = vec![vec![0.0; k + 1]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = nodes[0];
    for i in 1..n {
        let mn = i.min(k);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i];
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for m in (1..=mn).rev() {
                    c[i][m] = c1 * (m as f64 * c[i - 1][m - 1] - c5 * c[i - 1][m]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for m in (1..=mn).rev() {
                c[j][m] = (c4 * c[j][m] - m as f64 * c[j][m - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    Ok(c.into_iter().map(|row| row[k]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn centered_second_derivative() {
        let w = fd_weights(&[-1.0, 0.0, 1.0], 2).unwrap();
        assert!(close(&w, &[1.0, -2.0, 1.0], 1e-15));
    }

    #[test]
    fn centered_first_derivative() {
        let w = fd_weights(&[-1.0, 0.0, 1.0], 1).unwrap();
        assert!(close(&w, &[-0.5, 0.0, 0.5], 1e-15));
    }

    #[test]
    fn interpolation_weights_at_node() {
        let w = fd_weights(&[-2.0, 0.0, 3.0], 0).unwrap();
        assert!(close(&w, &[0.0, 1.0, 0.0], 1e-15));
    }

    #[test]
    fn exact_on_monomials_with_one_sided_nodes() {
        let nodes = [-1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0];
        for k in 0..nodes.len() {
            let w = fd_weights(&nodes, k).unwrap();
            for deg in 0..nodes.len() {
                let got: f64 = w.iter().zip(&nodes).map(|(wi, x)| wi * x.powi(deg as i32)).sum();
                let want = if deg == k { (1..=k).product::<usize>() as f64 } else { 0.0 };
                assert!((got - want).abs() <= 1e-10, "k={k} deg={deg}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn third_derivative_of_exp_converges_at_fourth_order() {
        let err = |d: f64| {
            let nodes: Vec<f64> = (-3..=3).map(|j| j as f64 * d).collect();
            let w = fd_weights(&nodes, 3).unwrap();
            let v: f64 = w.iter().zip(&nodes).map(|(wi, x)| wi * x.exp()).sum();
            (v - 1.0).abs()
        };
        let (e1, e2) = (err(0.1), err(0.05));
        let rate = (e1 / e2).log2();
        assert!(rate > 3.7 && rate < 4.3, "rate {rate}");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(fd_weights(&[0.0, 1.0], 2).is_err());
        assert!(fd_weights(&[0.0, 0.0, 1.0], 1).is_err());
    }
}
