//! Statistical analysis of collected self-reports.
//!
//! Statistics come from [`recoin_core::stats`]; this module adds
//! large-sample p-values (Student t, chi-squared and F distributions from
//! `statrs`), parallel permutation p-values and the report that the
//! `analyze` command prints.

use std::fmt::Write as _;

use rayon::prelude::*;
use recoin_core::index::format_fixed2;
use recoin_core::stats::{
    self, batches, condition_summary, permutation_p, ConditionSummary, SessionRow,
};
use recoin_core::{Condition, CoreError};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, StudentsT};

type CoreResult<T> = Result<T, CoreError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PMethod {
    /// t / chi-squared / F approximation.
    LargeSample,
    Permutation { rounds: u64, seed: u64 },
}

impl Default for PMethod {
    fn default() -> Self {
        Self::Permutation {
            rounds: stats::DEFAULT_ROUNDS,
            seed: stats::DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LargeSample,
    Permutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub method: Method,
}

fn permutation_hits(rounds: u64, batch: impl Fn(u64, u64) -> CoreResult<u64> + Sync) -> CoreResult<u64> {
    let plan: Vec<(u64, u64)> = batches(rounds).collect();
    plan.into_par_iter()
        .map(|(b, r)| batch(b, r))
        .try_reduce(|| 0, |a, b| Ok(a + b))
}

fn distribution_error(e: impl std::fmt::Display) -> CoreError {
    CoreError::Undefined(e.to_string())
}

/// Spearman's rho with a two-sided p-value.
pub fn spearman(x: &[f64], y: &[f64], method: PMethod) -> CoreResult<TestResult> {
    let rho = stats::spearman_rho(x, y)?;
    let (p, method) = match method {
        PMethod::LargeSample => {
            let n = x.len() as f64;
            let p = if rho.abs() >= 1.0 {
                0.0
            } else {
                let t = rho * ((n - 2.0) / (1.0 - rho * rho)).sqrt();
                let dist = StudentsT::new(0.0, 1.0, n - 2.0).map_err(distribution_error)?;
                (2.0 * (1.0 - dist.cdf(t.abs()))).min(1.0)
            };
            (p, Method::LargeSample)
        }
        PMethod::Permutation { rounds, seed } => {
            let hits = permutation_hits(rounds, |b, r| stats::spearman_exceedances(x, y, seed, b, r))?;
            (permutation_p(hits, rounds), Method::Permutation)
        }
    };
    Ok(TestResult {
        statistic: rho,
        p_value: Some(p),
        method,
    })
}

fn group_test(
    groups: &[Vec<f64>],
    method: PMethod,
    statistic: fn(&[&[f64]]) -> CoreResult<f64>,
    upper_tail: impl Fn(f64) -> CoreResult<f64>,
) -> CoreResult<TestResult> {
    let views: Vec<&[f64]> = groups.iter().map(Vec::as_slice).collect();
    let observed = statistic(&views)?;
    let (p, method) = match method {
        PMethod::LargeSample => (upper_tail(observed)?, Method::LargeSample),
        PMethod::Permutation { rounds, seed } => {
            let hits = permutation_hits(rounds, |b, r| {
                stats::group_exceedances(groups, statistic, seed, b, r)
            })?;
            (permutation_p(hits, rounds), Method::Permutation)
        }
    };
    Ok(TestResult {
        statistic: observed,
        p_value: Some(p),
        method,
    })
}

/// Kruskal-Wallis H (tie-corrected) with a chi-squared or permutation p-value.
pub fn kruskal_wallis(groups: &[Vec<f64>], method: PMethod) -> CoreResult<TestResult> {
    let df = groups.len().saturating_sub(1) as f64;
    group_test(groups, method, |g| stats::kruskal_h(g), |h| {
        let dist = ChiSquared::new(df).map_err(distribution_error)?;
        Ok(1.0 - dist.cdf(h))
    })
}

/// One-way ANOVA F with an F-distribution or permutation p-value.
pub fn anova(groups: &[Vec<f64>], method: PMethod) -> CoreResult<TestResult> {
    let g = groups.len() as f64;
    let n: usize = groups.iter().map(Vec::len).sum();
    group_test(groups, method, |g| stats::anova_f(g), |f| {
        let dist = FisherSnedecor::new(g - 1.0, n as f64 - g).map_err(distribution_error)?;
        Ok(1.0 - dist.cdf(f))
    })
}

pub const MEASURES: [&str; 4] = ["comprehension", "fairness", "accuracy", "trust"];

/// Sessions by the four self-report measures, tagged with their condition.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RatingsMatrix {
    pub rows: Vec<(Condition, [f64; 4])>,
}

impl RatingsMatrix {
    pub fn from_rows(rows: &[SessionRow]) -> Self {
        Self {
            rows: rows.iter().map(|r| (r.condition, r.ratings())).collect(),
        }
    }

    pub fn only(&self, condition: Condition) -> Self {
        Self {
            rows: self.rows.iter().filter(|r| r.0 == condition).cloned().collect(),
        }
    }

    pub fn values(&self) -> Vec<[f64; 4]> {
        self.rows.iter().map(|r| r.1).collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.1[j]).collect()
    }
}

pub fn cronbach_alpha(m: &RatingsMatrix) -> CoreResult<f64> {
    stats::cronbach_alpha(&m.values())
}

/// A statistic that may be undefined for the data at hand.
#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum Outcome<T> {
    Ok(T),
    Undefined { error: String },
}

impl<T> From<CoreResult<T>> for Outcome<T> {
    fn from(r: CoreResult<T>) -> Self {
        match r {
            Ok(v) => Self::Ok(v),
            Err(e) => Self::Undefined { error: e.to_string() },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NamedTest {
    pub name: String,
    pub result: Outcome<TestResult>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Analysis {
    pub sessions: usize,
    pub summary: Vec<ConditionSummary>,
    pub cronbach_alpha: Vec<(String, Outcome<f64>)>,
    pub kruskal_wallis: Vec<NamedTest>,
    pub anova: Vec<NamedTest>,
    pub spearman: Vec<NamedTest>,
}

type Column = fn(&SessionRow) -> f64;

/// Runs the full analysis over session rows.
pub fn analyze(rows: &[SessionRow], method: PMethod) -> Analysis {
    let matrix = RatingsMatrix::from_rows(rows);
    let present: Vec<Condition> = Condition::ALL
        .into_iter()
        .filter(|c| rows.iter().any(|r| r.condition == *c))
        .collect();

    let mut cronbach = vec![("all".to_string(), cronbach_alpha(&matrix).into())];
    for c in &present {
        cronbach.push((c.to_string(), cronbach_alpha(&matrix.only(*c)).into()));
    }

    let by_condition = |f: fn(&SessionRow) -> f64| -> Vec<Vec<f64>> {
        present
            .iter()
            .map(|c| rows.iter().filter(|r| r.condition == *c).map(f).collect())
            .collect()
    };
    let columns: [(&str, Column); 6] = [
        ("relevance", |r| r.relevance),
        ("usage", |r| r.usage as f64),
        ("comprehension", |r| r.comprehension as f64),
        ("fairness", |r| r.fairness as f64),
        ("accuracy", |r| r.accuracy as f64),
        ("trust", |r| r.trust as f64),
    ];
    let kruskal_wallis = columns
        .iter()
        .map(|(name, f)| NamedTest {
            name: format!("{name} by condition"),
            result: kruskal_wallis(&by_condition(*f), method).into(),
        })
        .collect();
    let anova = columns[..2]
        .iter()
        .map(|(name, f)| NamedTest {
            name: format!("{name} by condition"),
            result: anova(&by_condition(*f), method).into(),
        })
        .collect();

    let mut spearman_tests = Vec::new();
    let relevance: Vec<f64> = rows.iter().map(|r| r.relevance).collect();
    let usage: Vec<f64> = rows.iter().map(|r| r.usage as f64).collect();
    spearman_tests.push(NamedTest {
        name: "relevance ~ usage".into(),
        result: spearman(&relevance, &usage, method).into(),
    });
    for (i, a) in MEASURES.iter().enumerate() {
        for (j, b) in MEASURES.iter().enumerate().skip(i + 1) {
            spearman_tests.push(NamedTest {
                name: format!("{a} ~ {b}"),
                result: spearman(&matrix.column(i), &matrix.column(j), method).into(),
            });
        }
    }

    Analysis {
        sessions: rows.len(),
        summary: condition_summary(rows),
        cronbach_alpha: cronbach,
        kruskal_wallis,
        anova,
        spearman: spearman_tests,
    }
}

fn fmt_p(p: Option<f64>) -> String {
    match p {
        Some(p) => format!("{p:.4}"),
        None => "-".into(),
    }
}

fn fmt_test(out: &mut String, label: &str, stat: &str, t: &NamedTest) {
    let _ = match &t.result {
        Outcome::Ok(r) => writeln!(
            out,
            "  {:<28} {label} = {:>9.4}  p = {}  ({})",
            t.name,
            r.statistic,
            fmt_p(r.p_value),
            match r.method {
                Method::LargeSample => "large-sample",
                Method::Permutation => "permutation",
            }
        ),
        Outcome::Undefined { error } => writeln!(out, "  {:<28} {stat}: {error}", t.name),
    };
}

impl Analysis {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "sessions: {}", self.sessions);
        let _ = writeln!(out);
        let _ = writeln!(out, "medians by condition");
        let _ = writeln!(
            out,
            "  {:<9} {:>3} {:>5} {:>9} {:>5} {:>5} {:>5} {:>5}",
            "condition", "n", "grade", "relevance", "comp", "fair", "acc", "trust"
        );
        for s in &self.summary {
            let _ = writeln!(
                out,
                "  {:<9} {:>3} {:>5} {:>9} {:>5} {:>5} {:>5} {:>5}",
                s.condition.as_str(),
                s.n,
                s.grade.as_str(),
                format_fixed2(s.relevance),
                s.comprehension,
                s.fairness,
                s.accuracy,
                s.trust
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "cronbach's alpha");
        for (label, alpha) in &self.cronbach_alpha {
            let _ = match alpha {
                Outcome::Ok(a) => writeln!(out, "  {label:<9} {a:.4}"),
                Outcome::Undefined { error } => writeln!(out, "  {label:<9} {error}"),
            };
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "kruskal-wallis");
        for t in &self.kruskal_wallis {
            fmt_test(&mut out, "H", "H", t);
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "one-way anova");
        for t in &self.anova {
            fmt_test(&mut out, "F", "F", t);
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "spearman");
        for t in &self.spearman {
            fmt_test(&mut out, "rho", "rho", t);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use recoin_core::recommender::GradeLetter;

    #[test]
    fn spearman_large_sample_and_permutation() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [1.0, 3.0, 2.0, 4.0];
        let t = spearman(&x, &y, PMethod::LargeSample).unwrap();
        assert_eq!(t.statistic, 0.8);
        // t = 0.8 * sqrt(2 / 0.36) = 1.8856; two-sided p with 2 df = 0.2.
        assert!((t.p_value.unwrap() - 0.2).abs() < 1e-9, "{t:?}");
        let perm = spearman(&x, &y, PMethod::default()).unwrap();
        assert_eq!(perm.method, Method::Permutation);
        // Exact: 8 of 24 orderings have |rho| >= 0.8.
        assert!((perm.p_value.unwrap() - 8.0 / 24.0).abs() < 0.02, "{perm:?}");
    }

    #[test]
    fn permutation_is_reproducible_across_thread_counts() {
        let g = vec![vec![1.0, 2.0, 5.0], vec![4.0, 3.0, 6.0], vec![7.0, 9.0, 8.0]];
        let m = PMethod::Permutation { rounds: 3_500, seed: 9 };
        let a = kruskal_wallis(&g, m).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| kruskal_wallis(&g, m).unwrap());
        assert_eq!(a.p_value, b.p_value);
        let p = a.p_value.unwrap();
        assert!((1.0 / 3_501.0..=1.0).contains(&p));
    }

    #[test]
    fn kruskal_large_sample_p() {
        let g = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]];
        let t = kruskal_wallis(&g, PMethod::LargeSample).unwrap();
        assert!((t.statistic - 7.2).abs() < 1e-12);
        // chi-squared(2) upper tail at 7.2 is exp(-3.6).
        assert!((t.p_value.unwrap() - (-3.6f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn anova_large_sample_p() {
        let g = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]];
        let t = anova(&g, PMethod::LargeSample).unwrap();
        assert!((t.statistic - 27.0).abs() < 1e-12);
        assert!(t.p_value.unwrap() < 0.01);
    }

    fn row(c: Condition, rel: f64, usage: u32, r: [u8; 4]) -> SessionRow {
        SessionRow {
            condition: c,
            grade: recoin_core::grade(rel).letter,
            relevance: rel,
            usage,
            comprehension: r[0],
            fairness: r[1],
            accuracy: r[2],
            trust: r[3],
        }
    }

    #[test]
    fn full_analysis_renders() {
        let rows = vec![
            row(Condition::C1, 11.0, 1, [2, 4, 4, 3]),
            row(Condition::C1, 15.0, 2, [3, 5, 4, 4]),
            row(Condition::C4, 21.0, 5, [3, 6, 6, 5]),
            row(Condition::C4, 25.0, 7, [4, 6, 7, 6]),
            row(Condition::C4, 2.0, 0, [1, 2, 3, 2]),
        ];
        let a = analyze(&rows, PMethod::Permutation { rounds: 200, seed: 42 });
        assert_eq!(a.summary.len(), 2);
        assert_eq!(a.summary[1].grade, GradeLetter::B);
        assert_eq!(a.spearman.len(), 7);
        let text = a.render_text();
        assert!(text.contains("C4"));
        assert!(text.contains("kruskal-wallis"));
        assert!(serde_json::to_string(&a).is_ok());
    }
}
