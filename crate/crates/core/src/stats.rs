//! Validation statistics: errors, Kruskal-Wallis, Pearson, Bland-Altman and
//! the sign test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF, StudentsT};

use crate::{Error, Result};

/// Significance level used for every test.
pub const ALPHA: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub parameter: String,
    pub truth: f64,
    pub estimate: f64,
    pub abs_err: f64,
    /// Absent when the reference value is zero.
    pub rel_err: Option<f64>,
    pub group: String,
    pub configuration: String,
}

/// Absolute and relative error of one estimate.
pub fn error_metrics(truth: f64, estimate: f64) -> (f64, Option<f64>) {
    let abs = (truth - estimate).abs();
    let rel = (truth != 0.0).then(|| abs / truth.abs());
    (abs, rel)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    Configuration,
    Group,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub factor: Factor,
    pub h: f64,
    pub p: f64,
    pub sizes: Vec<usize>,
}

/// Average ranks (1-based) with ties sharing the mean of their positions.
/// Also returns the sum of `t^3 - t` over tie groups.
pub fn ranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = 0.5 * (i + j) as f64 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        let t = (j - i + 1) as f64;
        ties += t * t * t - t;
        i = j + 1;
    }
    (out, ties)
}

/// Kruskal-Wallis H test with tie correction and the chi-squared
/// approximation (k - 1 degrees of freedom).
pub fn kruskal_wallis(groups: &[Vec<f64>], factor: Factor) -> Result<GroupComparison> {
    if groups.len() < 2 {
        return Err(Error::InsufficientData("need at least two groups".into()));
    }
    if groups.iter().any(|g| g.is_empty()) {
        return Err(Error::InsufficientData("every group needs a value".into()));
    }
    if groups.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("samples", "non-finite value"));
    }
    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let n = all.len() as f64;
    let (r, ties) = ranks(&all);
    let correction = 1.0 - ties / (n * n * n - n);
    if correction <= 0.0 {
        return Ok(GroupComparison {
            factor,
            h: 0.0,
            p: 1.0,
            sizes,
        });
    }
    let mut offset = 0;
    let mut sum = 0.0;
    for &size in &sizes {
        let rank_sum: f64 = r[offset..offset + size].iter().sum();
        sum += rank_sum * rank_sum / size as f64;
        offset += size;
    }
    let h = ((12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0)) / correction).max(0.0);
    let dist = ChiSquared::new((groups.len() - 1) as f64).expect("positive degrees of freedom");
    let p = dist.sf(h).clamp(0.0, 1.0);
    Ok(GroupComparison {
        factor,
        h,
        p,
        sizes,
    })
}

/// Sample correlation and its two-sided p-value from Student's t with
/// n - 2 degrees of freedom.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::Misaligned(format!("{} vs {} values", x.len(), y.len())));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!("correlation needs 3 pairs, got {n}")));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::ZeroVariance("x"));
    }
    if syy == 0.0 {
        return Err(Error::ZeroVariance("y"));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let dof = (n - 2) as f64;
    let p = if r.abs() == 1.0 {
        0.0
    } else {
        let t = r * (dof / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, dof).expect("positive degrees of freedom");
        (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
    };
    Ok((r, p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementSummary {
    /// Mean of reference minus estimate.
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub loa_lower: f64,
    pub loa_upper: f64,
    pub r: Option<f64>,
    pub p_r: Option<f64>,
    pub n: usize,
}

/// Bland-Altman agreement of `(reference, estimate)` pairs: mean difference
/// and limits at ±1.96 sample standard deviations, plus the correlation
/// when it is defined.
pub fn bland_altman(pairs: &[(f64, f64)]) -> Result<AgreementSummary> {
    let n = pairs.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("agreement needs 2 pairs, got {n}")));
    }
    let diffs: Vec<f64> = pairs.iter().map(|(v, r)| v - r).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let (x, y): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let corr = pearson(&x, &y).ok();
    Ok(AgreementSummary {
        mean_diff: mean,
        sd_diff: sd,
        loa_lower: mean - 1.96 * sd,
        loa_upper: mean + 1.96 * sd,
        r: corr.map(|c| c.0),
        p_r: corr.map(|c| c.1),
        n,
    })
}

/// Points of a Bland-Altman plot: (pair mean, reference - estimate).
pub fn bland_altman_points(pairs: &[(f64, f64)]) -> Vec<(f64, f64)> {
    pairs
        .iter()
        .map(|(v, r)| (0.5 * (v + r), v - r))
        .collect()
}

/// One-sided sign test that `a` tends to exceed `b` in paired samples. Ties
/// are discarded. Returns (positives, non-tied pairs, p-value).
pub fn sign_test_greater(a: &[f64], b: &[f64]) -> (usize, usize, f64) {
    let mut pos = 0;
    let mut n = 0;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            pos += 1;
            n += 1;
        } else if x < y {
            n += 1;
        }
    }
    if n == 0 {
        return (0, 0, 1.0);
    }
    let dist = Binomial::new(0.5, n as u64).expect("valid binomial");
    // P(X >= pos) = 1 - P(X <= pos - 1)
    let p = if pos == 0 { 1.0 } else { dist.sf(pos as u64 - 1) };
    (pos, n, p.clamp(0.0, 1.0))
}

/// Mean of the finite values, if any.
pub fn mean(values: &[f64]) -> Option<f64> {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Rank by counting: (number below) + (number equal + 1) / 2.
    fn brute_ranks(values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .map(|&v| {
                let below = values.iter().filter(|&&x| x < v).count() as f64;
                let equal = values.iter().filter(|&&x| x == v).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    }

    /// H as the between-group share of rank variance, which already includes
    /// the tie correction.
    fn brute_h(groups: &[Vec<f64>]) -> f64 {
        let all: Vec<f64> = groups.iter().flatten().copied().collect();
        let r = brute_ranks(&all);
        let n = all.len() as f64;
        let mean = (n + 1.0) / 2.0;
        let total: f64 = r.iter().map(|x| (x - mean).powi(2)).sum();
        let mut between = 0.0;
        let mut offset = 0;
        for g in groups {
            let m = r[offset..offset + g.len()].iter().sum::<f64>() / g.len() as f64;
            between += g.len() as f64 * (m - mean).powi(2);
            offset += g.len();
        }
        (n - 1.0) * between / total
    }

    /// Two-sided Student-t tail by Simpson integration of the density.
    fn simpson_t_p(t: f64, dof: f64) -> f64 {
        let ln_gamma = |x: f64| statrs::function::gamma::ln_gamma(x);
        let c = (ln_gamma((dof + 1.0) / 2.0) - ln_gamma(dof / 2.0)).exp() / (dof * std::f64::consts::PI).sqrt();
        let density = |x: f64| c * (1.0 + x * x / dof).powf(-(dof + 1.0) / 2.0);
        let steps = 200_000;
        let h = t.abs() / steps as f64;
        let mut sum = density(0.0) + density(t.abs());
        for i in 1..steps {
            sum += density(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let central = sum * h / 3.0;
        1.0 - 2.0 * central
    }

    fn dataset() -> (Vec<f64>, Vec<f64>) {
        let x = vec![1.12, 1.05, 0.98, 1.21, 1.10, 1.03, 1.16, 0.95, 1.08, 1.13];
        let y = vec![1.09, 1.07, 1.01, 1.18, 1.12, 0.99, 1.19, 0.97, 1.04, 1.15];
        (x, y)
    }

    #[test]
    fn error_examples() {
        let (abs, rel) = error_metrics(1.20, 1.15);
        assert!((abs - 0.05).abs() < 1e-12);
        assert!((rel.unwrap() - 0.041_666_666_666).abs() < 1e-9);
        assert_eq!(error_metrics(0.7, 0.7), (0.0, Some(0.0)));
        let (abs, rel) = error_metrics(0.0, 0.3);
        assert!((abs - 0.3).abs() < 1e-12 && rel.is_none());
    }

    #[test]
    fn ranks_match_counting_oracle() {
        let v = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0, 5.0, 3.0];
        let (r, ties) = ranks(&v);
        assert_eq!(r, brute_ranks(&v));
        // three tie pairs: 3 * (8 - 2)
        assert_eq!(ties, 18.0);
    }

    #[test]
    fn kruskal_wallis_matches_oracle() {
        let groups = vec![
            vec![2.9, 3.0, 2.5, 2.6, 3.2, 2.8],
            vec![3.8, 2.7, 4.0, 2.4, 3.0],
            vec![2.8, 3.4, 3.7, 2.2, 2.0, 3.0, 4.1],
        ];
        let kw = kruskal_wallis(&groups, Factor::Configuration).unwrap();
        assert!((kw.h - brute_h(&groups)).abs() < 1e-9);
        // Chi-squared with 2 degrees of freedom has survival exp(-H/2).
        assert!((kw.p - (-kw.h / 2.0).exp()).abs() < 1e-9);
        assert_eq!(kw.sizes, vec![6, 5, 7]);
    }

    #[test]
    fn separated_groups_are_significant() {
        let kw = kruskal_wallis(&[vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![6.0, 7.0, 8.0, 9.0, 10.0]], Factor::Group).unwrap();
        assert!((kw.h - brute_h(&[vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![6.0, 7.0, 8.0, 9.0, 10.0]])).abs() < 1e-9);
        assert!(kw.p < ALPHA, "p = {}", kw.p);
    }

    #[test]
    fn identical_groups_give_p_one() {
        let g = vec![1.0, 2.0, 3.0, 4.0];
        let kw = kruskal_wallis(&[g.clone(), g], Factor::Group).unwrap();
        assert_eq!(kw.h, 0.0);
        assert_eq!(kw.p, 1.0);
        let flat = kruskal_wallis(&[vec![2.0; 3], vec![2.0; 4]], Factor::Group).unwrap();
        assert_eq!((flat.h, flat.p), (0.0, 1.0));
        assert!(kruskal_wallis(&[vec![1.0]], Factor::Group).is_err());
        assert!(kruskal_wallis(&[vec![1.0], vec![]], Factor::Group).is_err());
    }

    #[test]
    fn null_p_values_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut ps: Vec<f64> = (0..200)
            .map(|_| {
                let groups: Vec<Vec<f64>> = (0..3).map(|_| (0..100).map(|_| rng.random::<f64>()).collect()).collect();
                kruskal_wallis(&groups, Factor::Configuration).unwrap().p
            })
            .collect();
        ps.sort_by(f64::total_cmp);
        let n = ps.len() as f64;
        let d = ps
            .iter()
            .enumerate()
            .map(|(i, &p)| (p - i as f64 / n).abs().max(((i + 1) as f64 / n - p).abs()))
            .fold(0.0, f64::max);
        // Kolmogorov-Smirnov critical value at alpha = 0.01.
        assert!(d < 1.628 / n.sqrt(), "D = {d}");
    }

    #[test]
    fn pearson_matches_direct_formula() {
        let (x, y) = dataset();
        let n = x.len() as f64;
        let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let syy: f64 = y.iter().map(|b| b * b).sum();
        let oracle = (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt());
        let (r, p) = pearson(&x, &y).unwrap();
        assert!((r - oracle).abs() < 1e-12, "{r} vs {oracle}");
        let t = r * ((n - 2.0) / (1.0 - r * r)).sqrt();
        assert!((p - simpson_t_p(t, n - 2.0)).abs() < 1e-9);
    }

    #[test]
    fn perfect_correlations() {
        let x = [1.0, 2.0, 3.5, 4.0, 7.0];
        let up: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let down: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &up).unwrap().0 - 1.0).abs() < 1e-12);
        assert!((pearson(&x, &down).unwrap().0 + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&x, &[1.0; 5]), Err(Error::ZeroVariance("y")));
        assert!(pearson(&[1.0, 2.0], &[2.0, 1.0]).is_err());
    }

    #[test]
    fn bland_altman_examples() {
        let ba = bland_altman(&[(1.0, 1.1), (2.0, 1.9)]).unwrap();
        assert!(ba.mean_diff.abs() < 1e-12);
        assert!((ba.sd_diff - 0.141_421_356).abs() < 1e-6);
        assert!((ba.loa_upper - 0.277).abs() < 5e-4 && (ba.loa_lower + 0.277).abs() < 5e-4);

        let same = bland_altman(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]).unwrap();
        assert_eq!((same.mean_diff, same.loa_upper - same.loa_lower), (0.0, 0.0));

        // Estimates 0.05 high: reference minus estimate is -0.05.
        let biased: Vec<(f64, f64)> = [0.9, 1.1, 1.4, 1.2].iter().map(|&v| (v, v + 0.05)).collect();
        let ba = bland_altman(&biased).unwrap();
        assert!((ba.mean_diff + 0.05).abs() < 1e-12);
        assert!((ba.loa_upper - ba.loa_lower).abs() < 1e-9);
        assert!(bland_altman(&[(1.0, 1.0)]).is_err());
    }

    #[test]
    fn sign_test_matches_binomial_tail() {
        let a = [3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 1.0, 2.0];
        let b = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 5.0];
        let (pos, n, p) = sign_test_greater(&a, &b);
        assert_eq!((pos, n), (6, 7));
        // P(X >= 6 | n = 7) = (7 + 1) / 128
        assert!((p - 8.0 / 128.0).abs() < 1e-12);
        assert_eq!(sign_test_greater(&[1.0], &[1.0]), (0, 0, 1.0));
    }

    proptest! {
        #[test]
        fn kruskal_wallis_is_rank_invariant(
            a in prop::collection::vec(-5.0f64..5.0, 3..12),
            b in prop::collection::vec(-5.0f64..5.0, 3..12),
            c in prop::collection::vec(-5.0f64..5.0, 3..12),
        ) {
            let groups = vec![a, b, c];
            let base = kruskal_wallis(&groups, Factor::Group).unwrap();
            let moved: Vec<Vec<f64>> = groups.iter().map(|g| g.iter().map(|v| v.powi(3) + 2.0 * v).collect()).collect();
            let other = kruskal_wallis(&moved, Factor::Group).unwrap();
            prop_assert!((base.h - other.h).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&base.p) && base.h >= 0.0);
            prop_assert!((base.h - brute_h(&groups)).abs() < 1e-9 || brute_h(&groups).is_nan());
        }

        #[test]
        fn pearson_is_affine_invariant(
            pts in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 4..20),
            scale in 0.1f64..10.0,
            offset in -5.0f64..5.0,
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            prop_assume!(pearson(&x, &y).is_ok());
            let (r, _) = pearson(&x, &y).unwrap();
            let xs: Vec<f64> = x.iter().map(|v| scale * v + offset).collect();
            let neg: Vec<f64> = y.iter().map(|v| -scale * v).collect();
            prop_assert!((pearson(&xs, &y).unwrap().0 - r).abs() < 1e-9);
            prop_assert!((pearson(&x, &neg).unwrap().0 + r).abs() < 1e-9);
        }

        #[test]
        fn bland_altman_mean_is_difference_of_means(
            pts in prop::collection::vec((0.1f64..10.0, 0.1f64..10.0), 2..30),
        ) {
            let ba = bland_altman(&pts).unwrap();
            let n = pts.len() as f64;
            let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
            let me = pts.iter().map(|p| p.1).sum::<f64>() / n;
            prop_assert!((ba.mean_diff - (mt - me)).abs() < 1e-9);
            prop_assert!(ba.loa_lower <= ba.mean_diff && ba.mean_diff <= ba.loa_upper);
        }

        #[test]
        fn relative_error_is_scale_invariant(t in 0.01f64..100.0, e in 0.0f64..100.0, alpha in 0.01f64..100.0) {
            let (_, r1) = error_metrics(t, e);
            let (_, r2) = error_metrics(alpha * t, alpha * e);
            prop_assert!((r1.unwrap() - r2.unwrap()).abs() < 1e-9 * (1.0 + r1.unwrap()));
        }
    }
}
