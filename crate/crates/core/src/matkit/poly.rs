use num_complex::Complex64;

use super::{MatError, Result, MAX_ROOT_SWEEPS};

/// Coefficients below this magnitude are trimmed from the top.
const TRIM: f64 = 1e-300;

/// Polynomial with complex coefficients in ascending degree.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<Complex64>,
}

impl Polynomial {
    /// Builds a polynomial, trimming negligible leading coefficients. The zero
    /// polynomial keeps a single zero coefficient.
    pub fn new(mut coeffs: Vec<Complex64>) -> Self {
        while coeffs.len() > 1 && coeffs.last().map_or(false, |c| c.norm() <= TRIM) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(Complex64::new(0.0, 0.0));
        }
        Self { coeffs }
    }

    pub fn from_real(coeffs: &[f64]) -> Self {
        Self::new(coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect())
    }

    /// Monic polynomial with the given roots.
    pub fn from_roots(roots: &[Complex64]) -> Self {
        let mut coeffs = vec![Complex64::new(1.0, 0.0)];
        for &r in roots {
            let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
            for (k, &c) in coeffs.iter().enumerate() {
                next[k + 1] += c;
                next[k] -= c * r;
            }
            coeffs = next;
        }
        Self::new(coeffs)
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn leading(&self) -> Complex64 {
        self.coeffs[self.degree()]
    }

    pub fn max_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Horner evaluation.
    pub fn eval(&self, w: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * w + c)
    }

    /// Value and first derivative in one pass.
    pub fn eval_with_derivative(&self, w: Complex64) -> (Complex64, Complex64) {
        let zero = Complex64::new(0.0, 0.0);
        let mut p = zero;
        let mut dp = zero;
        for &c in self.coeffs.iter().rev() {
            dp = dp * w + p;
            p = p * w + c;
        }
        (p, dp)
    }

    /// Bound on rounding error of Horner's rule at `w`, used as the stopping
    /// criterion for the root iteration.
    fn eval_error_bound(&self, w: Complex64) -> f64 {
        let r = w.norm();
        let bound = self
            .coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * r + c.norm());
        4.0 * f64::EPSILON * bound
    }

    /// All roots by Aberth-Ehrlich simultaneous iteration followed by a Newton
    /// polish of each root.
    pub fn roots(&self) -> Result<Vec<Complex64>> {
        let n = self.degree();
        if n == 0 {
            return Err(MatError::Invalid("polynomial of degree 0 has no roots".into()));
        }
        if self.coeffs.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(MatError::NonFinite);
        }
        // Exact zero roots are split off so the iteration never sees them.
        let zeros = self.coeffs.iter().take_while(|c| c.norm() == 0.0).count();
        let reduced = Polynomial::new(self.coeffs[zeros..].to_vec());
        let mut roots = vec![Complex64::new(0.0, 0.0); zeros];
        if reduced.degree() > 0 {
            roots.extend(reduced.aberth()?);
        }
        Ok(roots)
    }

    fn aberth(&self) -> Result<Vec<Complex64>> {
        let n = self.degree();
        let lead = self.leading();
        let monic: Vec<Complex64> = self.coeffs.iter().map(|&c| c / lead).collect();
        let p = Polynomial { coeffs: monic };
        if n == 1 {
            return Ok(vec![-p.coeffs[0]]);
        }

        // Initial guesses on a circle of radius given by the Cauchy-style
        // bound, rotated off the real axis to break symmetry.
        let radius = (0..n)
            .map(|k| p.coeffs[k].norm().powf(1.0 / (n - k) as f64))
            .fold(0.0, f64::max)
            .max(1e-3);
        let mut z: Vec<Complex64> = (0..n)
            .map(|k| {
                let ang = 2.0 * std::f64::consts::PI * k as f64 / n as f64 + 0.4;
                Complex64::from_polar(radius, ang)
            })
            .collect();
        let mut done = vec![false; n];

        let mut sweeps = 0;
        while sweeps < MAX_ROOT_SWEEPS && done.iter().any(|d| !d) {
            sweeps += 1;
            for i in 0..n {
                if done[i] {
                    continue;
                }
                let (val, der) = p.eval_with_derivative(z[i]);
                if val.norm() <= p.eval_error_bound(z[i]) {
                    done[i] = true;
                    continue;
                }
                let ratio = val / der;
                let mut sum = Complex64::new(0.0, 0.0);
                for j in 0..n {
                    if j != i {
                        sum += 1.0 / (z[i] - z[j]);
                    }
                }
                let step = ratio / (1.0 - ratio * sum);
                if !(step.re.is_finite() && step.im.is_finite()) {
                    continue;
                }
                z[i] -= step;
                if step.norm() <= 4.0 * f64::EPSILON * z[i].norm() {
                    done[i] = true;
                }
            }
        }

        // Newton polish; keep the better of the two iterates.
        for zi in z.iter_mut() {
            for _ in 0..3 {
                let (val, der) = p.eval_with_derivative(*zi);
                if der.norm() == 0.0 {
                    break;
                }
                let cand = *zi - val / der;
                if p.eval(cand).norm() < val.norm() {
                    *zi = cand;
                } else {
                    break;
                }
            }
        }

        let scale = self.max_coeff();
        let worst = z
            .iter()
            .map(|&r| self.eval(r).norm() / scale)
            .fold(0.0, f64::max);
        // Clustered roots converge linearly; only fail when the backward error
        // is unacceptable.
        if !worst.is_finite() || worst > 1e-9 {
            return Err(MatError::NoConvergence {
                sweeps,
                residual: worst,
            });
        }
        Ok(z)
    }

    /// Largest root modulus.
    pub fn max_root_modulus(&self) -> Result<f64> {
        Ok(self.roots()?.iter().map(|r| r.norm()).fold(0.0, f64::max))
    }

    /// Whether every root lies strictly inside the disk `|w| < radius`, by
    /// the Schur-Cohn reduction. Much cheaper than [`Polynomial::roots`];
    /// points within rounding of the circle may go either way.
    pub fn roots_inside(&self, radius: f64) -> bool {
        schur_cohn(&self.coeffs, radius)
    }
}

pub(crate) fn schur_cohn(coeffs: &[Complex64], radius: f64) -> bool {
    let mut a: Vec<Complex64> = coeffs
        .iter()
        .scan(1.0, |r, &c| {
            let v = c * *r;
            *r *= radius;
            Some(v)
        })
        .collect();
    while a.len() > 1 && a[a.len() - 1] == Complex64::new(0.0, 0.0) {
        a.pop();
    }
    if a.iter().any(|c| !c.is_finite()) {
        return false;
    }
    // conj(a_n) p(w) - a_0 p*(w) has a zero constant term and, when
    // |a_0| < |a_n|, as many roots in the disk as p; divide by w and repeat.
    let mut n = a.len() - 1;
    while n > 0 {
        let (lead, tail) = (a[n], a[0]);
        if tail.norm() >= lead.norm() {
            return false;
        }
        let next: Vec<Complex64> = (1..=n).map(|k| lead.conj() * a[k] - tail * a[n - k].conj()).collect();
        a = next;
        n -= 1;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sorted(mut v: Vec<Complex64>) -> Vec<Complex64> {
        v.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap()));
        v
    }

    #[test]
    fn roots_of_w2_plus_1() {
        let r = sorted(Polynomial::from_real(&[1.0, 0.0, 1.0]).roots().unwrap());
        assert!((r[0] - c(0.0, -1.0)).norm() < 1e-14);
        assert!((r[1] - c(0.0, 1.0)).norm() < 1e-14);
    }

    #[test]
    fn roots_of_quadratic_with_real_roots() {
        let r = sorted(Polynomial::from_real(&[6.0, -5.0, 1.0]).roots().unwrap());
        assert!((r[0] - c(2.0, 0.0)).norm() < 1e-13);
        assert!((r[1] - c(3.0, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn roots_reconstruct_random_degree_8() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let coeffs: Vec<Complex64> = (0..9).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let p = Polynomial::new(coeffs.clone());
            let roots = p.roots().unwrap();
            assert_eq!(roots.len(), 8);
            let q = Polynomial::from_roots(&roots);
            let lead = p.leading();
            let scale = p.max_coeff();
            for (a, b) in p.coeffs().iter().zip(q.coeffs()) {
                assert!((a - b * lead).norm() <= 1e-8 * scale);
            }
        }
    }

    #[test]
    fn zero_and_repeated_roots() {
        let p = Polynomial::from_real(&[0.0, 0.0, 1.0]);
        assert_eq!(p.roots().unwrap(), vec![c(0.0, 0.0); 2]);
        let q = Polynomial::from_roots(&[c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(-1.0, 0.2)]);
        let roots = q.roots().unwrap();
        for r in roots {
            assert!(q.eval(r).norm() <= 1e-9 * q.max_coeff());
        }
    }

    #[test]
    fn trims_leading_zeros() {
        let p = Polynomial::from_real(&[1.0, 2.0, 0.0, 0.0]);
        assert_eq!(p.degree(), 1);
        assert!(Polynomial::from_real(&[3.0]).roots().is_err());
    }

    #[test]
    fn schur_cohn_agrees_with_roots() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut inside = 0;
        for _ in 0..400 {
            let n = rng.gen_range(1..9);
            let roots: Vec<Complex64> = (0..n)
                .map(|_| Complex64::from_polar(rng.gen_range(0.0..1.3), rng.gen_range(0.0..6.3)))
                .collect();
            let m = roots.iter().map(|r| r.norm()).fold(0.0, f64::max);
            if (m - 1.0).abs() < 1e-6 {
                continue;
            }
            let p = Polynomial::from_roots(&roots);
            assert_eq!(p.roots_inside(1.0), m < 1.0, "{roots:?}");
            inside += usize::from(m < 1.0);
        }
        assert!(inside > 20);
        assert!(Polynomial::from_real(&[-0.25, 0.0, 1.0]).roots_inside(0.6));
        assert!(!Polynomial::from_real(&[-0.25, 0.0, 1.0]).roots_inside(0.4));
        assert!(!Polynomial::from_real(&[-1.0, 0.0, 1.0]).roots_inside(1.0));
        assert!(Polynomial::from_real(&[0.0, 0.0, 1.0]).roots_inside(1.0));
    }

    #[test]
    fn derivative_evaluation() {
        let p = Polynomial::from_real(&[1.0, -2.0, 0.0, 4.0]);
        let (v, d) = p.eval_with_derivative(c(2.0, 0.0));
        assert_eq!(v, c(29.0, 0.0));
        assert_eq!(d, c(46.0, 0.0));
    }
}
