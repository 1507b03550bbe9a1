//! Small statistics helpers used by the Monte-Carlo machinery and the
//! goodness-of-fit checks.

/// Mean and unbiased sample variance; the variance is `None` for fewer than
/// two samples. Summation runs in slice order.
pub fn mean_variance(xs: &[f64]) -> (f64, Option<f64>) {
    if xs.is_empty() {
        return (f64::NAN, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, None);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, Some(ss / (n - 1.0)))
}

/// Standard error of the mean.
pub fn standard_error(xs: &[f64]) -> f64 {
    match mean_variance(xs) {
        (_, Some(v)) => (v / xs.len() as f64).sqrt(),
        _ => f64::NAN,
    }
}

/// Kolmogorov–Smirnov statistic of `samples` against the CDF `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Survival function of the Kolmogorov distribution, `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Asymptotic KS p-value (with the Stephens small-sample correction).
pub fn ks_pvalue(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = samples.len() as f64;
    if n == 0.0 {
        return f64::NAN;
    }
    let d = ks_statistic(samples, cdf);
    let sn = n.sqrt();
    kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)
}

/// KS p-value against the unit exponential.
pub fn ks_exp1_pvalue(samples: &[f64]) -> f64 {
    ks_pvalue(samples, |x| if x <= 0.0 { 0.0 } else { -(-x).exp_m1() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_variance_basics() {
        let (m, v) = mean_variance(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((v.unwrap() - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(mean_variance(&[3.0]), (3.0, None));
    }

    #[test]
    fn kolmogorov_quantiles() {
        // critical values of the limiting distribution
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-3);
    }

    #[test]
    fn ks_detects_wrong_distribution() {
        let uniform: Vec<f64> = (0..2000).map(|i| (i as f64 + 0.5) / 2000.0).collect();
        // probability-integral transform of Exp(1)
        let exp: Vec<f64> = uniform.iter().map(|u| -(1.0 - u).ln()).collect();
        assert!(ks_exp1_pvalue(&exp) > 0.99);
        let scaled: Vec<f64> = exp.iter().map(|x| 1.3 * x).collect();
        assert!(ks_exp1_pvalue(&scaled) < 1e-6);
    }
}
