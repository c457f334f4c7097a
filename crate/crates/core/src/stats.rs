//! Rank statistics and reliability measures for self-report analysis.
//!
//! Everything here returns the statistic itself; permutation p-values are
//! computed in seeded, independently reproducible batches so callers may run
//! batches in parallel and still get bit-identical totals.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::recommender::GradeLetter;
use crate::session::Condition;

/// Default number of permutation rounds.
pub const DEFAULT_ROUNDS: u64 = 10_000;
/// Default seed for randomized procedures.
pub const DEFAULT_SEED: u64 = 42;
/// Rounds per deterministic batch.
pub const BATCH_ROUNDS: u64 = 1_000;

// Slack when comparing a permuted statistic against the observed one, so
// that arrangements with an identical statistic count as "at least as
// extreme" despite summation-order rounding.
const EXCEED_EPS: f64 = 1e-12;

fn invalid(msg: impl Into<alloc::string::String>) -> CoreError {
    CoreError::Validation(msg.into())
}

/// Mid-ranks (1-based; ties share the average of their positions).
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = alloc::vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start+1 ..= end share their mean.
        let mid = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            out[i] = mid;
        }
        start = end;
    }
    out
}

/// Sizes of the groups of tied values.
fn tie_sizes(values: &[f64]) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut sizes = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&v| v == sorted[i]).count();
        sizes.push(j);
        i += j;
    }
    sizes
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the `n - 1` denominator.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(invalid(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(CoreError::Undefined("correlation with zero variance".into()));
    }
    Ok(sxy / libm::sqrt(sxx * syy))
}

/// Spearman's rho: Pearson correlation of mid-ranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(invalid(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(invalid("spearman needs at least 3 pairs"));
    }
    pearson(&ranks(x), &ranks(y))
}

/// Cronbach's alpha over `rows` (respondents) by columns (items).
pub fn cronbach_alpha<R: AsRef<[f64]>>(rows: &[R]) -> Result<f64> {
    let n = rows.len();
    if n < 2 {
        return Err(invalid("cronbach's alpha needs at least 2 rows"));
    }
    let k = rows[0].as_ref().len();
    if k < 2 {
        return Err(invalid("cronbach's alpha needs at least 2 columns"));
    }
    if rows.iter().any(|r| r.as_ref().len() != k) {
        return Err(invalid("ragged ratings matrix"));
    }
    let item_var: f64 = (0..k)
        .map(|j| {
            let col: Vec<f64> = rows.iter().map(|r| r.as_ref()[j]).collect();
            sample_variance(&col)
        })
        .sum();
    let totals: Vec<f64> = rows.iter().map(|r| r.as_ref().iter().sum()).collect();
    let total_var = sample_variance(&totals);
    if total_var == 0.0 {
        return Err(CoreError::Undefined("total score variance is zero".into()));
    }
    let k = k as f64;
    Ok(k / (k - 1.0) * (1.0 - item_var / total_var))
}

fn check_groups<G: AsRef<[f64]>>(groups: &[G]) -> Result<()> {
    if groups.len() < 2 {
        return Err(invalid("need at least 2 groups"));
    }
    if groups.iter().any(|g| g.as_ref().is_empty()) {
        return Err(invalid("empty group"));
    }
    Ok(())
}

/// Kruskal-Wallis H with mid-ranks and the tie correction.
pub fn kruskal_h<G: AsRef<[f64]>>(groups: &[G]) -> Result<f64> {
    check_groups(groups)?;
    let pooled: Vec<f64> = groups.iter().flat_map(|g| g.as_ref().iter().copied()).collect();
    let n = pooled.len() as f64;
    let correction =
        1.0 - tie_sizes(&pooled)
            .into_iter()
            .map(|t| {
                let t = t as f64;
                t * t * t - t
            })
            .sum::<f64>()
            / (n * n * n - n);
    if correction <= 0.0 {
        return Err(CoreError::Undefined("all values identical".into()));
    }
    let r = ranks(&pooled);
    let mut offset = 0;
    let mut sum = 0.0;
    for g in groups {
        let len = g.as_ref().len();
        let rank_sum: f64 = r[offset..offset + len].iter().sum();
        sum += rank_sum * rank_sum / len as f64;
        offset += len;
    }
    let h = 12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0);
    Ok(h / correction)
}

/// One-way fixed-effects ANOVA F statistic.
pub fn anova_f<G: AsRef<[f64]>>(groups: &[G]) -> Result<f64> {
    check_groups(groups)?;
    let g = groups.len() as f64;
    let pooled: Vec<f64> = groups.iter().flat_map(|g| g.as_ref().iter().copied()).collect();
    let n = pooled.len() as f64;
    if n <= g {
        return Err(invalid("anova needs more observations than groups"));
    }
    let grand = mean(&pooled);
    let mut between = 0.0;
    let mut within = 0.0;
    for grp in groups {
        let grp = grp.as_ref();
        let m = mean(grp);
        between += grp.len() as f64 * (m - grand) * (m - grand);
        within += grp.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
    }
    if within == 0.0 {
        return Err(CoreError::Undefined("zero within-group variance".into()));
    }
    Ok((between / (g - 1.0)) / (within / (n - g)))
}

/// RNG for batch `batch` of a permutation run seeded with `seed`.
pub fn batch_rng(seed: u64, batch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch);
    rng
}

/// Splits `rounds` into `(batch index, rounds in batch)` pairs.
pub fn batches(rounds: u64) -> impl Iterator<Item = (u64, u64)> {
    let full = rounds / BATCH_ROUNDS;
    let rest = rounds % BATCH_ROUNDS;
    (0..full)
        .map(|b| (b, BATCH_ROUNDS))
        .chain((rest > 0).then_some((full, rest)))
}

/// `(1 + exceedances) / (rounds + 1)`.
pub fn permutation_p(exceedances: u64, rounds: u64) -> f64 {
    (1 + exceedances) as f64 / (rounds + 1) as f64
}

/// Number of label shuffles in one batch whose |rho| is at least the
/// observed |rho|.
pub fn spearman_exceedances(x: &[f64], y: &[f64], seed: u64, batch: u64, rounds: u64) -> Result<u64> {
    let observed = libm::fabs(spearman_rho(x, y)?);
    let rx = ranks(x);
    let mut ry = ranks(y);
    let mut rng = batch_rng(seed, batch);
    let mut hits = 0;
    for _ in 0..rounds {
        ry.shuffle(&mut rng);
        if libm::fabs(pearson(&rx, &ry)?) >= observed - EXCEED_EPS {
            hits += 1;
        }
    }
    Ok(hits)
}

/// Number of group-label shuffles in one batch whose statistic is at least
/// the observed one.
pub fn group_exceedances<G, F>(
    groups: &[G],
    statistic: F,
    seed: u64,
    batch: u64,
    rounds: u64,
) -> Result<u64>
where
    G: AsRef<[f64]>,
    F: Fn(&[&[f64]]) -> Result<f64>,
{
    let views: Vec<&[f64]> = groups.iter().map(AsRef::as_ref).collect();
    let observed = statistic(&views)?;
    let sizes: Vec<usize> = views.iter().map(|g| g.len()).collect();
    let mut pooled: Vec<f64> = views.iter().flat_map(|g| g.iter().copied()).collect();
    let mut rng = batch_rng(seed, batch);
    let mut hits = 0;
    for _ in 0..rounds {
        pooled.shuffle(&mut rng);
        let mut parts: Vec<&[f64]> = Vec::with_capacity(sizes.len());
        let mut rest: &[f64] = &pooled;
        for &s in &sizes {
            let (head, tail) = rest.split_at(s);
            parts.push(head);
            rest = tail;
        }
        if statistic(&parts)? >= observed - EXCEED_EPS {
            hits += 1;
        }
    }
    Ok(hits)
}

/// Sequential permutation p-value for Spearman's rho (two-sided).
pub fn spearman_permutation_p(x: &[f64], y: &[f64], rounds: u64, seed: u64) -> Result<f64> {
    let mut hits = 0;
    for (b, r) in batches(rounds) {
        hits += spearman_exceedances(x, y, seed, b, r)?;
    }
    Ok(permutation_p(hits, rounds))
}

/// Sequential permutation p-value for a group statistic (upper tail).
pub fn group_permutation_p<G, F>(groups: &[G], statistic: F, rounds: u64, seed: u64) -> Result<f64>
where
    G: AsRef<[f64]>,
    F: Fn(&[&[f64]]) -> Result<f64>,
{
    let mut hits = 0;
    for (b, r) in batches(rounds) {
        hits += group_exceedances(groups, &statistic, seed, b, r)?;
    }
    Ok(permutation_p(hits, rounds))
}

/// Lower median: the element at index `(n - 1) / 2` after sorting.
pub fn lower_median_by<T: Copy>(values: &[T], cmp: impl Fn(&T, &T) -> Ordering) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(cmp);
    Some(v[(v.len() - 1) / 2])
}

pub fn lower_median<T: Copy + Ord>(values: &[T]) -> Option<T> {
    lower_median_by(values, T::cmp)
}

/// One session's task outcome and ratings, as exported for analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRow {
    pub condition: Condition,
    pub grade: GradeLetter,
    pub relevance: f64,
    pub usage: u32,
    pub comprehension: u8,
    pub fairness: u8,
    pub accuracy: u8,
    pub trust: u8,
}

impl SessionRow {
    /// The four self-report measures in column order.
    pub fn ratings(&self) -> [f64; 4] {
        [
            self.comprehension as f64,
            self.fairness as f64,
            self.accuracy as f64,
            self.trust as f64,
        ]
    }
}

/// Per-condition medians (lower median throughout).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: Condition,
    pub n: usize,
    pub grade: GradeLetter,
    pub relevance: f64,
    pub comprehension: u8,
    pub fairness: u8,
    pub accuracy: u8,
    pub trust: u8,
}

/// Median table over the rows of each condition present in `rows`.
pub fn condition_summary(rows: &[SessionRow]) -> Vec<ConditionSummary> {
    let mut by_condition: BTreeMap<Condition, Vec<&SessionRow>> = BTreeMap::new();
    for r in rows {
        by_condition.entry(r.condition).or_default().push(r);
    }
    by_condition
        .into_iter()
        .map(|(condition, rows)| {
            let col = |f: fn(&SessionRow) -> u8| {
                let v: Vec<u8> = rows.iter().map(|r| f(r)).collect();
                lower_median(&v).expect("non-empty group")
            };
            let grades: Vec<GradeLetter> = rows.iter().map(|r| r.grade).collect();
            let relevance: Vec<f64> = rows.iter().map(|r| r.relevance).collect();
            ConditionSummary {
                condition,
                n: rows.len(),
                grade: lower_median(&grades).expect("non-empty group"),
                relevance: lower_median_by(&relevance, f64::total_cmp).expect("non-empty group"),
                comprehension: col(|r| r.comprehension),
                fairness: col(|r| r.fairness),
                accuracy: col(|r| r.accuracy),
                trust: col(|r| r.trust),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn mid_ranks() {
        assert_eq!(ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
        assert_eq!(tie_sizes(&[1.0, 1.0, 2.0]), vec![2, 1]);
    }

    #[test]
    fn spearman_examples() {
        let inc = [1.0, 2.0, 3.0, 4.0, 5.0];
        let dec = [5.0, 4.0, 3.0, 2.0, 1.0];
        assert_eq!(spearman_rho(&inc, &inc).unwrap(), 1.0);
        assert_eq!(spearman_rho(&inc, &dec).unwrap(), -1.0);
        assert_eq!(spearman_rho(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap(), 0.8);
        assert!(matches!(spearman_rho(&inc, &inc[..4]), Err(CoreError::Validation(_))));
        assert!(matches!(spearman_rho(&inc[..2], &inc[..2]), Err(CoreError::Validation(_))));
        assert!(matches!(
            spearman_rho(&inc, &[1.0; 5]),
            Err(CoreError::Undefined(_))
        ));
    }

    #[test]
    fn cronbach_degenerate_cases() {
        let identical = [[1.0, 1.0, 1.0], [2.0, 2.0, 2.0], [4.0, 4.0, 4.0]];
        assert!((cronbach_alpha(&identical).unwrap() - 1.0).abs() < 1e-15);
        let one_constant = [[1.0, 3.0], [2.0, 3.0], [3.0, 3.0]];
        assert!(cronbach_alpha(&one_constant).is_ok());
        let both_constant = [[3.0, 3.0], [3.0, 3.0]];
        assert!(matches!(cronbach_alpha(&both_constant), Err(CoreError::Undefined(_))));
        assert!(cronbach_alpha(&[[1.0, 2.0]]).is_err());
        assert!(cronbach_alpha(&[[1.0], [2.0]]).is_err());
    }

    #[test]
    fn kruskal_examples() {
        let g = [vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]];
        assert!((kruskal_h(&g).unwrap() - 7.2).abs() < 1e-12);
        let rev = [g[2].clone(), g[0].clone(), g[1].clone()];
        assert_eq!(kruskal_h(&g).unwrap(), kruskal_h(&rev).unwrap());
        assert!(matches!(kruskal_h(&[[2.0], [2.0]]), Err(CoreError::Undefined(_))));
        assert!(kruskal_h(&[vec![1.0]]).is_err());
        assert!(kruskal_h(&[vec![1.0], vec![]]).is_err());
    }

    #[test]
    fn anova_matches_hand_value() {
        // Means 2, 5, 8; grand 5; SSB = 3*(9+0+9) = 54, SSW = 6; F = 27 / 1 = 27.
        let g = [vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]];
        assert!((anova_f(&g).unwrap() - 27.0).abs() < 1e-12);
    }

    #[test]
    fn batches_cover_rounds() {
        let b: Vec<_> = batches(2_500).collect();
        assert_eq!(b, vec![(0, 1000), (1, 1000), (2, 500)]);
        assert_eq!(batches(0).count(), 0);
    }

    #[test]
    fn permutation_p_bounds() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let p = spearman_permutation_p(&x, &x, 500, DEFAULT_SEED).unwrap();
        assert!((1.0 / 501.0..=1.0).contains(&p));
        assert!(p < 0.01, "perfect correlation should be rare under shuffling: {p}");
        let again = spearman_permutation_p(&x, &x, 500, DEFAULT_SEED).unwrap();
        assert_eq!(p, again);
        let g = [vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]];
        let p = group_permutation_p(&g, |gs| kruskal_h(gs), 2_000, 7).unwrap();
        // Exact: 6 of 1680 labelings reach H = 7.2.
        assert!((p - 6.0 / 1680.0).abs() < 0.004, "{p}");
    }

    #[test]
    fn medians() {
        assert_eq!(lower_median(&[3, 1, 2, 4]), Some(2));
        assert_eq!(lower_median(&[5]), Some(5));
        assert_eq!(lower_median::<u8>(&[]), None);
        assert_eq!(lower_median(&[GradeLetter::A, GradeLetter::F]), Some(GradeLetter::F));
    }

    fn row(condition: Condition, grade: GradeLetter, rel: f64, r: [u8; 4]) -> SessionRow {
        SessionRow {
            condition,
            grade,
            relevance: rel,
            usage: 0,
            comprehension: r[0],
            fairness: r[1],
            accuracy: r[2],
            trust: r[3],
        }
    }

    #[test]
    fn summary_echoes_single_row_and_takes_lower_median() {
        let one = [row(Condition::C4, GradeLetter::B, 21.0, [3, 6, 6, 5])];
        let s = condition_summary(&one);
        assert_eq!(s.len(), 1);
        assert_eq!(
            (s[0].grade, s[0].relevance, s[0].comprehension, s[0].fairness, s[0].accuracy, s[0].trust),
            (GradeLetter::B, 21.0, 3, 6, 6, 5)
        );
        let two = [
            row(Condition::C1, GradeLetter::C, 11.0, [2, 4, 4, 4]),
            row(Condition::C1, GradeLetter::B, 25.0, [4, 6, 6, 6]),
        ];
        let s = condition_summary(&two);
        assert_eq!(s.len(), 1, "conditions without rows are omitted");
        assert_eq!(s[0].grade, GradeLetter::C);
        assert_eq!(s[0].relevance, 11.0);
        assert_eq!(s[0].comprehension, 2);
        assert_eq!(s[0].n, 2);
    }
}
