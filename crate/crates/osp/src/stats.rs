//! Small statistics helpers for experiment aggregation.

/// Two-sided 95% Student-t critical values (t at 0.975) by degrees of
/// freedom; standard table values, linearly interpolated past df 30.
const T_975: [(usize, f64); 33] = [
    (1, 12.706),
    (2, 4.303),
    (3, 3.182),
    (4, 2.776),
    (5, 2.571),
    (6, 2.447),
    (7, 2.365),
    (8, 2.306),
    (9, 2.262),
    (10, 2.228),
    (11, 2.201),
    (12, 2.179),
    (13, 2.160),
    (14, 2.145),
    (15, 2.131),
    (16, 2.120),
    (17, 2.110),
    (18, 2.101),
    (19, 2.093),
    (20, 2.086),
    (21, 2.080),
    (22, 2.074),
    (23, 2.069),
    (24, 2.064),
    (25, 2.060),
    (26, 2.056),
    (27, 2.052),
    (28, 2.048),
    (29, 2.045),
    (30, 2.042),
    (40, 2.021),
    (60, 2.000),
    (120, 1.980),
];

pub fn t_crit_975(df: usize) -> f64 {
    if df == 0 {
        return f64::NAN;
    }
    if df > 120 {
        return 1.960;
    }
    let mut prev = T_975[0];
    for &(d, t) in &T_975 {
        if df == d {
            return t;
        }
        if df < d {
            let (d0, t0) = prev;
            let span = (d - d0) as f64;
            return t0 + (t - t0) * (df - d0) as f64 / span;
        }
        prev = (d, t);
    }
    1.960
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    var.sqrt()
}

/// Mean with a 95% Student-t confidence interval. A single observation
/// collapses the interval onto the mean.
pub fn ci95(xs: &[f64]) -> (f64, f64, f64) {
    let m = mean(xs);
    if xs.len() < 2 {
        return (m, m, m);
    }
    let half = t_crit_975(xs.len() - 1) * sample_std(xs) / (xs.len() as f64).sqrt();
    (m, m - half, m + half)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_table_matches_reference_values() {
        assert_eq!(t_crit_975(1), 12.706);
        assert_eq!(t_crit_975(19), 2.093);
        assert_eq!(t_crit_975(29), 2.045);
        assert_eq!(t_crit_975(60), 2.000);
        assert!((t_crit_975(45) - 2.01575).abs() < 1e-9); // linear between 40 and 60
        assert_eq!(t_crit_975(10_000), 1.960);
    }

    #[test]
    fn ci_basics() {
        let xs = [2.0, 4.0, 6.0, 8.0];
        let (m, lo, hi) = ci95(&xs);
        assert_eq!(m, 5.0);
        // std = sqrt(20/3), half-width = 3.182 * std / 2
        let half = 3.182 * (20.0f64 / 3.0).sqrt() / 2.0;
        assert!((hi - m - half).abs() < 1e-9);
        assert!((m - lo - half).abs() < 1e-9);
        let (m1, lo1, hi1) = ci95(&[7.0]);
        assert_eq!((m1, lo1, hi1), (7.0, 7.0, 7.0));
    }
}
