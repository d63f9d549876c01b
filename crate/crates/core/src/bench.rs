//! Rewrite time, plan evaluation time and direct evaluation time on
//! generated workloads.

use crate::error::{Error, Result};
use crate::eval::{eval_plan, eval_tree_pattern, materialize_view};
use crate::fragment::FragmentClass;
use crate::rewrite::{rewrite, Mode, RewriteOptions, RewritePlan};
use crate::workload::{generate_workload, GenConfig, Workload};
use serde::Serialize;
use std::collections::HashMap;
use std::time::Instant;

pub const WARMUP: usize = 3;
pub const RUNS: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum BenchStatus {
    Rewritten,
    NoRewriting,
    CapExceeded,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BenchCase {
    pub seed: u64,
    pub main_branch_size: usize,
    pub category: &'static str,
    pub view_set_size: usize,
    pub status: BenchStatus,
    pub rewrite_time_ms: f64,
    /// Rewriting with the useful views removed; always a negative outcome.
    pub useless_only_time_ms: f64,
    pub plan_eval_time_ms: Option<f64>,
    pub direct_eval_time_ms: f64,
    /// View heads in the plan.
    pub plan_size: usize,
    pub plan: Option<String>,
    pub doc_nodes: usize,
    /// Nodes in the view documents the plan reads.
    pub view_doc_nodes: usize,
    pub answers: usize,
    /// Plan and direct evaluation returned the same nodes.
    pub results_match: Option<bool>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct BenchReport {
    pub cases: Vec<BenchCase>,
}

pub fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Median wall time of `runs` calls after `warmup` unmeasured ones, in ms.
pub fn time_median<T>(warmup: usize, runs: usize, mut f: impl FnMut() -> T) -> (f64, T) {
    for _ in 0..warmup {
        std::hint::black_box(f());
    }
    let mut times = Vec::with_capacity(runs);
    let mut last = None;
    for _ in 0..runs.max(1) {
        let t = Instant::now();
        let r = std::hint::black_box(f());
        times.push(t.elapsed().as_secs_f64() * 1e3);
        last = Some(r);
    }
    (median(&mut times), last.unwrap())
}

fn options(mode: Mode) -> RewriteOptions {
    RewriteOptions { mode, ..Default::default() }
}

/// Times one workload.
pub fn bench_workload(cfg: &GenConfig, w: &Workload, mode: Mode) -> Result<BenchCase> {
    let opts = options(mode);
    let (rewrite_ms, outcome) = time_median(WARMUP, RUNS, || rewrite(&w.query, &w.views, &opts));
    let (status, plan): (BenchStatus, Option<RewritePlan>) = match outcome {
        Ok(Some(p)) => (BenchStatus::Rewritten, Some(p)),
        Ok(None) => (BenchStatus::NoRewriting, None),
        Err(Error::CapExceeded(_)) => (BenchStatus::CapExceeded, None),
        Err(e) => return Err(e),
    };
    let stripped = w.without_useful();
    let (useless_ms, _) = time_median(WARMUP, RUNS, || rewrite(&w.query, &stripped, &opts));
    let (direct_ms, direct) = time_median(WARMUP, RUNS, || eval_tree_pattern(&w.query, &w.doc));

    let mut case = BenchCase {
        seed: cfg.seed,
        main_branch_size: cfg.main_branch_size,
        category: cfg.category.name(),
        view_set_size: cfg.view_set_size,
        status,
        rewrite_time_ms: rewrite_ms,
        useless_only_time_ms: useless_ms,
        plan_eval_time_ms: None,
        direct_eval_time_ms: direct_ms,
        plan_size: 0,
        plan: None,
        doc_nodes: w.doc.len(),
        view_doc_nodes: 0,
        answers: direct.len(),
        results_match: None,
    };
    if let Some(plan) = plan {
        let mut docs = HashMap::new();
        for b in &plan.branches {
            if !docs.contains_key(&b.view) {
                let v = w.views.get(&b.view).ok_or_else(|| Error::UnknownView(b.view.clone()))?;
                docs.insert(b.view.clone(), materialize_view(v, &b.view, &w.doc));
            }
        }
        let (plan_ms, got) = time_median(WARMUP, RUNS, || eval_plan(&plan.ast, &docs));
        case.plan_eval_time_ms = Some(plan_ms);
        case.results_match = Some(got? == direct);
        case.view_doc_nodes = docs.values().map(|d| d.tree.len()).sum();
        case.plan_size = docs.len();
        case.plan = Some(plan.text());
    }
    Ok(case)
}

/// Generates the workload for `cfg` and times it.
pub fn bench(cfg: &GenConfig, mode: Mode) -> Result<BenchCase> {
    let w = generate_workload(cfg)?;
    bench_workload(cfg, &w, mode)
}

/// One case per (main-branch size, category, view-set size, query) with
/// seeds derived from `seed`.
pub fn bench_grid(base: &GenConfig, sizes: &[usize], categories: &[FragmentClass], view_sets: &[usize], queries: usize, mode: Mode) -> Result<BenchReport> {
    let mut report = BenchReport::default();
    for &s in sizes {
        for &c in categories {
            for &n in view_sets {
                for k in 0..queries {
                    let cfg = GenConfig { seed: base.seed.wrapping_mul(1000).wrapping_add(k as u64), main_branch_size: s, category: c, view_set_size: n, ..base.clone() };
                    report.cases.push(bench(&cfg, mode)?);
                }
            }
        }
    }
    Ok(report)
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("seed,mainBranchSize,category,viewSetSize,status,rewriteTimeMs,uselessOnlyTimeMs,planEvalTimeMs,directEvalTimeMs,planSize,docNodes,viewDocNodes,answers,resultsMatch\n");
        for c in &self.cases {
            s.push_str(&format!(
                "{},{},{},{},{},{:.4},{:.4},{},{:.4},{},{},{},{},{}\n",
                c.seed,
                c.main_branch_size,
                c.category,
                c.view_set_size,
                status_name(c.status),
                c.rewrite_time_ms,
                c.useless_only_time_ms,
                c.plan_eval_time_ms.map(|x| format!("{x:.4}")).unwrap_or_default(),
                c.direct_eval_time_ms,
                c.plan_size,
                c.doc_nodes,
                c.view_doc_nodes,
                c.answers,
                c.results_match.map(|b| b.to_string()).unwrap_or_default(),
            ));
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:>6} {:>3} {:>10} {:>5} {:>12} {:>11} {:>11} {:>11} {:>11} {:>5}\n",
            "seed", "mb", "category", "views", "status", "rewrite ms", "useless ms", "plan ms", "direct ms", "heads"
        );
        for c in &self.cases {
            s.push_str(&format!(
                "{:>6} {:>3} {:>10} {:>5} {:>12} {:>11.3} {:>11.3} {:>11} {:>11.3} {:>5}\n",
                c.seed,
                c.main_branch_size,
                c.category,
                c.view_set_size,
                status_name(c.status),
                c.rewrite_time_ms,
                c.useless_only_time_ms,
                c.plan_eval_time_ms.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into()),
                c.direct_eval_time_ms,
                c.plan_size,
            ));
        }
        s
    }
}

pub fn status_name(s: BenchStatus) -> &'static str {
    match s {
        BenchStatus::Rewritten => "rewritten",
        BenchStatus::NoRewriting => "noRewriting",
        BenchStatus::CapExceeded => "capExceeded",
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.max(1e-9).ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [40.0, 80.0, 160.0, 320.0].iter().map(|&x: &f64| (x, 3.0 * x.powf(1.5))).collect();
        assert!((log_log_slope(&pts) - 1.5).abs() < 1e-9);
    }
}
