//! Two-sample Hotelling T² statistic.

use super::DriftError;

/// Sample mean and covariance (denominator `N - 1`; zero for `N = 1`).
pub fn mean_cov<R: AsRef<[f64]>>(rows: &[R]) -> (Vec<f64>, Vec<f64>) {
    let d = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
    let n = rows.len();
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r.as_ref()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n.max(1) as f64);
    let mut cov = vec![0.0; d * d];
    if n > 1 {
        for r in rows {
            let r = r.as_ref();
            for i in 0..d {
                let di = r[i] - mean[i];
                for j in 0..=i {
                    cov[i * d + j] += di * (r[j] - mean[j]);
                }
            }
        }
        for i in 0..d {
            for j in 0..=i {
                let c = cov[i * d + j] / (n - 1) as f64;
                cov[i * d + j] = c;
                cov[j * d + i] = c;
            }
        }
    }
    (mean, cov)
}

/// In-place Cholesky factorization of a symmetric `d x d` matrix (lower
/// triangle). Returns the index of the first non-positive pivot on failure.
fn cholesky(a: &mut [f64], d: usize) -> Result<(), usize> {
    for j in 0..d {
        let mut s = a[j * d + j];
        for k in 0..j {
            s -= a[j * d + k] * a[j * d + k];
        }
        if !(s > 0.0) || !s.is_finite() {
            return Err(j);
        }
        let l = s.sqrt();
        a[j * d + j] = l;
        for i in j + 1..d {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= a[i * d + k] * a[j * d + k];
            }
            a[i * d + j] = s / l;
        }
    }
    Ok(())
}

/// `delta^T S^-1 delta`, computed on the correlation scale so that features
/// in Pa and in fractions weigh alike; the correlation matrix gets a `1e-9`
/// ridge. A feature with zero variance is dropped when its mean difference is
/// zero too and is an error otherwise.
pub(crate) fn quadratic_form(s: &[f64], delta: &[f64], names: &[&str]) -> Result<f64, DriftError> {
    let d = delta.len();
    let mut keep = Vec::with_capacity(d);
    for i in 0..d {
        let v = s[i * d + i];
        if v > 0.0 && v.is_finite() {
            keep.push(i);
        } else if delta[i] != 0.0 || !v.is_finite() {
            return Err(DriftError::Degenerate(feature_name(names, i)));
        }
    }
    let k = keep.len();
    if k == 0 {
        return Ok(0.0);
    }
    let sd: Vec<f64> = keep.iter().map(|&i| s[i * d + i].sqrt()).collect();
    let mut a = vec![0.0; k * k];
    for (r, &i) in keep.iter().enumerate() {
        for (c, &j) in keep.iter().enumerate() {
            a[r * k + c] = s[i * d + j] / (sd[r] * sd[c]);
        }
        a[r * k + r] += 1e-9;
    }
    cholesky(&mut a, k).map_err(|r| DriftError::Degenerate(feature_name(names, keep[r])))?;
    // forward solve L y = delta; the form is |y|^2
    let mut y = vec![0.0; k];
    for r in 0..k {
        let mut v = delta[keep[r]] / sd[r];
        for c in 0..r {
            v -= a[r * k + c] * y[c];
        }
        y[r] = v / a[r * k + r];
    }
    Ok(y.iter().map(|v| v * v).sum())
}

fn feature_name(names: &[&str], i: usize) -> String {
    names.get(i).map(|s| s.to_string()).unwrap_or_else(|| format!("feature {i}"))
}

/// `HT² = (mu1 - mu2)^T (S1/N1 + S2/N2)^-1 (mu1 - mu2)` with rows as
/// observations.
///
/// A single-observation sample has no covariance of its own; it borrows the
/// other sample's covariance, which turns the statistic into the pooled
/// two-sample form for that case.
pub fn hotelling_t2<R: AsRef<[f64]>>(x1: &[R], x2: &[R]) -> Result<f64, DriftError> {
    hotelling_t2_named(x1, x2, &[])
}

/// [`hotelling_t2`] with feature names for error messages.
pub fn hotelling_t2_named<R: AsRef<[f64]>>(x1: &[R], x2: &[R], names: &[&str]) -> Result<f64, DriftError> {
    let (n1, n2) = (x1.len(), x2.len());
    if n1 == 0 || n2 == 0 || n1 + n2 < 3 {
        return Err(DriftError::TooFewObservations {
            needed: 3,
            got: n1 + n2,
        });
    }
    let d = x1[0].as_ref().len();
    if x1.iter().chain(x2.iter()).any(|r| r.as_ref().len() != d) {
        return Err(DriftError::DimensionMismatch);
    }
    let (m1, c1) = mean_cov(x1);
    let (m2, c2) = mean_cov(x2);
    let (c1, c2) = match (n1, n2) {
        (1, _) => (c2.clone(), c2),
        (_, 1) => (c1.clone(), c1),
        _ => (c1, c2),
    };
    let s: Vec<f64> = c1
        .iter()
        .zip(&c2)
        .map(|(a, b)| a / n1 as f64 + b / n2 as f64)
        .collect();
    let delta: Vec<f64> = m1.iter().zip(&m2).map(|(a, b)| a - b).collect();
    quadratic_form(&s, &delta, names)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples_give_zero() {
        let x = vec![[1.0, 2.0], [2.0, 1.0], [0.0, 0.5], [3.0, 2.5]];
        assert!(hotelling_t2(&x, &x).unwrap().abs() < 1e-20);
    }

    #[test]
    fn univariate_hand_value() {
        // sample variance 1 on both sides: two points at mean +- 1/sqrt(2) * sqrt(...)
        let n = 100;
        let make = |mu: f64| -> Vec<[f64; 1]> {
            (0..n)
                .map(|i| {
                    let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                    // alternating +-a has sample variance a^2 * n / (n - 1)
                    let a = ((n - 1) as f64 / n as f64).sqrt();
                    [mu + s * a]
                })
                .collect()
        };
        let ht = hotelling_t2(&make(0.0), &make(1.0)).unwrap();
        // 1 / (1/100 + 1/100) = 50, up to the 1e-9 ridge
        assert!((ht - 50.0).abs() < 1e-6, "{ht}");
    }

    #[test]
    fn symmetric_in_exchange() {
        let a = vec![[0.1, 0.3], [0.5, -0.2], [1.0, 0.7], [0.2, 0.2]];
        let b = vec![[1.1, 0.9], [0.4, 1.2], [0.8, 0.1]];
        let ab = hotelling_t2(&a, &b).unwrap();
        let ba = hotelling_t2(&b, &a).unwrap();
        assert!((ab - ba).abs() <= 1e-12 * ab);
        let one = vec![[2.0, 2.0]];
        let a1 = hotelling_t2(&a, &one).unwrap();
        let one_a = hotelling_t2(&one, &a).unwrap();
        assert!((a1 - one_a).abs() <= 1e-12 * a1);
    }

    #[test]
    fn constant_features() {
        let a = vec![[1.0, 5.0], [1.0, 5.0], [1.0, 5.0]];
        assert_eq!(hotelling_t2(&a, &[[1.0, 5.0]]).unwrap(), 0.0);
        let err = hotelling_t2_named(&a, &[[1.0, 6.0]], &["u", "p1"]).unwrap_err();
        assert_eq!(err, DriftError::Degenerate("p1".into()));
    }

    #[test]
    fn units_do_not_matter() {
        // a choke-sized and a pressure-sized feature; the shift is in the small one
        let a: Vec<[f64; 2]> = (0..40)
            .map(|i| [0.4 + 0.01 * ((i * 7 % 11) as f64 - 5.0), 1.7e7 * (1.0 + 0.01 * ((i * 3 % 7) as f64 - 3.0))])
            .collect();
        let b = vec![[0.7, 1.7e7]];
        let raw = hotelling_t2(&a, &b).unwrap();
        let rescaled: Vec<[f64; 2]> = a.iter().map(|r| [r[0] * 1e6, r[1] * 1e-6]).collect();
        let other = hotelling_t2(&rescaled, &[[0.7e6, 17.0]]).unwrap();
        assert!(raw > 50.0, "{raw}");
        assert!((raw - other).abs() <= 1e-9 * raw, "{raw} {other}");
    }

    #[test]
    fn constant_feature_without_difference_is_dropped() {
        let a = vec![[0.0, 5.0], [1.0, 5.0], [2.0, 5.0]];
        let with = hotelling_t2(&a, &[[3.0, 5.0]]).unwrap();
        let without = hotelling_t2(&[[0.0], [1.0], [2.0]], &[[3.0]]).unwrap();
        assert_eq!(with, without);
    }
}
