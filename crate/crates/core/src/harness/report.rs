//! Aggregation of raw trials into success curves, pairwise comparison, and
//! CSV files. Curves are always derivable from the raw trial file.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{HarnessError, SweepParam, TrialOutcome, TrialResult};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959963984540054;

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub value: f64,
    pub trials: usize,
    pub successes: usize,
    pub rate: f64,
    /// Wald interval half-width.
    pub ci_halfwidth: f64,
}

impl CurvePoint {
    pub fn new(value: f64, trials: usize, successes: usize) -> Self {
        let rate = if trials == 0 {
            0.0
        } else {
            successes as f64 / trials as f64
        };
        let ci_halfwidth = if trials == 0 {
            0.0
        } else {
            Z_95 * (rate * (1.0 - rate) / trials as f64).sqrt()
        };
        Self {
            value,
            trials,
            successes,
            rate,
            ci_halfwidth,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuccessCurve {
    pub policy_id: String,
    pub param: SweepParam,
    /// Sorted by value.
    pub points: Vec<CurvePoint>,
}

impl SuccessCurve {
    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    /// Mean rate over grid values accepted by `keep`; `None` when none are.
    pub fn mean_rate_where(&self, keep: impl Fn(f64) -> bool) -> Option<f64> {
        let r: Vec<f64> = self.points.iter().filter(|p| keep(p.value)).map(|p| p.rate).collect();
        (!r.is_empty()).then(|| r.iter().sum::<f64>() / r.len() as f64)
    }

    pub fn rate_at(&self, value: f64) -> Option<f64> {
        self.points.iter().find(|p| p.value == value).map(|p| p.rate)
    }
}

/// One curve per (policy, parameter), in order of first appearance.
pub fn curves_from_trials(trials: &[TrialResult]) -> Vec<SuccessCurve> {
    let mut order: Vec<(String, SweepParam)> = Vec::new();
    let mut counts: BTreeMap<(usize, u64), (f64, usize, usize)> = BTreeMap::new();
    for t in trials {
        let key = (t.policy_id.clone(), t.param_tag);
        let idx = order.iter().position(|k| *k == key).unwrap_or_else(|| {
            order.push(key);
            order.len() - 1
        });
        // Sort key on the value's total order.
        let bits = t.param_value.to_bits();
        let ord = if bits >> 63 == 1 { !bits } else { bits | (1 << 63) };
        let e = counts.entry((idx, ord)).or_insert((t.param_value, 0, 0));
        e.1 += 1;
        e.2 += usize::from(t.outcome == TrialOutcome::Success);
    }
    order
        .into_iter()
        .enumerate()
        .map(|(i, (policy_id, param))| SuccessCurve {
            policy_id,
            param,
            points: counts
                .range((i, 0)..=(i, u64::MAX))
                .map(|(_, &(v, n, s))| CurvePoint::new(v, n, s))
                .collect(),
        })
        .collect()
}

fn same_grid(a: &SuccessCurve, b: &SuccessCurve) -> Result<(), HarnessError> {
    if a.param != b.param || a.values() != b.values() {
        return Err(HarnessError::MismatchedGrids(format!(
            "`{}` {} {:?} vs `{}` {} {:?}",
            a.policy_id,
            a.param,
            a.values(),
            b.policy_id,
            b.param,
            b.values()
        )));
    }
    Ok(())
}

/// Pools trials of `curves` (for instance one per training seed) into a
/// single curve named `id`. With equal trial counts the pooled rate is the
/// mean of the per-curve rates.
pub fn average_curves(curves: &[SuccessCurve], id: &str) -> Result<SuccessCurve, HarnessError> {
    let first = curves
        .first()
        .ok_or_else(|| HarnessError::Invalid("no curves to average".into()))?;
    for c in &curves[1..] {
        same_grid(first, c)?;
    }
    let points = (0..first.points.len())
        .map(|i| {
            let n = curves.iter().map(|c| c.points[i].trials).sum();
            let s = curves.iter().map(|c| c.points[i].successes).sum();
            CurvePoint::new(first.points[i].value, n, s)
        })
        .collect();
    Ok(SuccessCurve {
        policy_id: id.to_string(),
        param: first.param,
        points,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub a: String,
    pub b: String,
    /// Mean over the grid of `rate_a - rate_b`.
    pub mean_difference: f64,
    /// `mean_difference` relative to `b`'s mean rate; `None` when that is 0.
    pub relative_improvement: Option<f64>,
    /// `a` is at least as successful as `b` on average.
    pub a_not_worse: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub param: SweepParam,
    pub values: Vec<f64>,
    /// Every ordered pair of distinct curves.
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn row(&self, a: &str, b: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.a == a && r.b == b)
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:<16} {:<16} {:>10} {:>10}\n", "a", "b", "mean diff", "relative");
        for r in &self.rows {
            let rel = r
                .relative_improvement
                .map_or_else(|| "n/a".to_string(), |v| format!("{:+.1}%", 100.0 * v));
            s += &format!("{:<16} {:<16} {:>+10.3} {:>10}\n", r.a, r.b, r.mean_difference, rel);
        }
        s
    }
}

pub fn summarize_comparison(curves: &[SuccessCurve]) -> Result<Comparison, HarnessError> {
    summarize_comparison_where(curves, |_| true)
}

/// As [`summarize_comparison`], restricted to grid values accepted by `keep`.
pub fn summarize_comparison_where(
    curves: &[SuccessCurve],
    keep: impl Fn(f64) -> bool,
) -> Result<Comparison, HarnessError> {
    let first = curves
        .first()
        .ok_or_else(|| HarnessError::Invalid("no curves to compare".into()))?;
    for c in &curves[1..] {
        same_grid(first, c)?;
    }
    let values: Vec<f64> = first.values().into_iter().filter(|v| keep(*v)).collect();
    if values.is_empty() {
        return Err(HarnessError::Invalid("no grid values selected".into()));
    }
    let mut rows = Vec::new();
    for a in curves {
        for b in curves {
            if std::ptr::eq(a, b) {
                continue;
            }
            let diffs: Vec<f64> = a
                .points
                .iter()
                .zip(&b.points)
                .filter(|(p, _)| keep(p.value))
                .map(|(p, q)| p.rate - q.rate)
                .collect();
            let mean_difference = diffs.iter().sum::<f64>() / diffs.len() as f64;
            let base = b.mean_rate_where(&keep).unwrap_or(0.0);
            rows.push(ComparisonRow {
                a: a.policy_id.clone(),
                b: b.policy_id.clone(),
                mean_difference,
                relative_improvement: (base > 0.0).then(|| mean_difference / base),
                a_not_worse: mean_difference >= 0.0,
            });
        }
    }
    Ok(Comparison {
        param: first.param,
        values,
        rows,
    })
}

pub fn write_trials_csv<W: Write>(trials: &[TrialResult], out: W) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record([
        "policy_id",
        "param_tag",
        "param_value",
        "seed",
        "outcome",
        "distance_m",
        "mean_speed_mps",
        "survival_s",
    ])?;
    for t in trials {
        w.serialize(t)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_trials_csv<R: Read>(input: R) -> Result<Vec<TrialResult>, HarnessError> {
    Ok(csv::Reader::from_reader(input)
        .deserialize()
        .collect::<Result<Vec<_>, _>>()?)
}

#[derive(Serialize, Deserialize)]
struct CurveRow {
    policy_id: String,
    param_tag: SweepParam,
    param_value: f64,
    trials: usize,
    successes: usize,
    rate: f64,
    ci_halfwidth: f64,
}

pub fn write_curves_csv<W: Write>(curves: &[SuccessCurve], out: W) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record([
        "policy_id",
        "param_tag",
        "param_value",
        "trials",
        "successes",
        "rate",
        "ci_halfwidth",
    ])?;
    for c in curves {
        for p in &c.points {
            w.serialize(CurveRow {
                policy_id: c.policy_id.clone(),
                param_tag: c.param,
                param_value: p.value,
                trials: p.trials,
                successes: p.successes,
                rate: p.rate,
                ci_halfwidth: p.ci_halfwidth,
            })?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_curves_csv<R: Read>(input: R) -> Result<Vec<SuccessCurve>, HarnessError> {
    let mut curves: Vec<SuccessCurve> = Vec::new();
    for row in csv::Reader::from_reader(input).deserialize() {
        let r: CurveRow = row?;
        let point = CurvePoint {
            value: r.param_value,
            trials: r.trials,
            successes: r.successes,
            rate: r.rate,
            ci_halfwidth: r.ci_halfwidth,
        };
        match curves
            .iter_mut()
            .find(|c| c.policy_id == r.policy_id && c.param == r.param_tag)
        {
            Some(c) => c.points.push(point),
            None => curves.push(SuccessCurve {
                policy_id: r.policy_id,
                param: r.param_tag,
                points: vec![point],
            }),
        }
    }
    for c in &mut curves {
        c.points.sort_by(|a, b| a.value.total_cmp(&b.value));
    }
    Ok(curves)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial(id: &str, value: f64, seed: u64, outcome: TrialOutcome) -> TrialResult {
        TrialResult {
            policy_id: id.into(),
            param_tag: SweepParam::FrictionMu,
            param_value: value,
            seed,
            outcome,
            distance_m: 1.0,
            mean_speed_mps: 0.25,
            survival_s: 4.0,
            diverged: false,
        }
    }

    fn curve(id: &str, rates: &[(f64, usize, usize)]) -> SuccessCurve {
        SuccessCurve {
            policy_id: id.into(),
            param: SweepParam::BaseMassScale,
            points: rates.iter().map(|&(v, n, s)| CurvePoint::new(v, n, s)).collect(),
        }
    }

    #[test]
    fn three_of_four() {
        use TrialOutcome::*;
        let t: Vec<_> = [Success, Fall, Success, Success]
            .into_iter()
            .enumerate()
            .map(|(i, o)| trial("a", 0.5, i as u64, o))
            .collect();
        let c = curves_from_trials(&t);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].points[0].rate, 0.75);
        assert_eq!(c[0].points[0].trials, 4);
        let hw = Z_95 * (0.75f64 * 0.25 / 4.0).sqrt();
        assert_eq!(c[0].points[0].ci_halfwidth, hw);
    }

    #[test]
    fn curves_sorted_by_value_including_negatives() {
        use TrialOutcome::*;
        let t = vec![
            trial("a", 0.2, 0, Fall),
            trial("a", -3.0, 0, Success),
            trial("a", -0.5, 0, Success),
        ];
        assert_eq!(curves_from_trials(&t)[0].values(), vec![-3.0, -0.5, 0.2]);
    }

    #[test]
    fn identical_curves_compare_equal() {
        let a = curve("a", &[(1.0, 4, 2), (2.0, 4, 1)]);
        let b = curve("b", &[(1.0, 4, 2), (2.0, 4, 1)]);
        let cmp = summarize_comparison(&[a, b]).unwrap();
        let r = cmp.row("a", "b").unwrap();
        assert_eq!(r.mean_difference, 0.0);
        assert_eq!(r.relative_improvement, Some(0.0));
        assert!(r.a_not_worse);
    }

    #[test]
    fn full_over_half() {
        let a = curve("a", &[(1.0, 2, 2), (2.0, 2, 2)]);
        let b = curve("b", &[(1.0, 2, 1), (2.0, 2, 1)]);
        let cmp = summarize_comparison(&[a, b]).unwrap();
        assert_eq!(cmp.row("a", "b").unwrap().mean_difference, 0.5);
        assert_eq!(cmp.row("b", "a").unwrap().mean_difference, -0.5);
        assert!(!cmp.row("b", "a").unwrap().a_not_worse);
    }

    #[test]
    fn hand_computed_three_points() {
        // rates a = 0.9, 0.6, 0.2; b = 0.7, 0.7, 0.0 (10 trials each)
        let a = curve("a", &[(1.0, 10, 9), (1.6, 10, 6), (2.4, 10, 2)]);
        let b = curve("b", &[(1.0, 10, 7), (1.6, 10, 7), (2.4, 10, 0)]);
        let cmp = summarize_comparison(&[a.clone(), b.clone()]).unwrap();
        let r = cmp.row("a", "b").unwrap();
        assert!((r.mean_difference - 0.1).abs() < 1e-12);
        assert!((r.relative_improvement.unwrap() - 0.1 / (1.4 / 3.0)).abs() < 1e-12);
        let upper = summarize_comparison_where(&[a, b], |v| v >= 1.6).unwrap();
        assert!((upper.row("a", "b").unwrap().mean_difference - 0.05).abs() < 1e-12);
        assert_eq!(upper.values, vec![1.6, 2.4]);
    }

    #[test]
    fn mismatched_grids_rejected() {
        let a = curve("a", &[(1.0, 2, 2)]);
        let b = curve("b", &[(1.5, 2, 2)]);
        assert!(matches!(
            summarize_comparison(&[a, b]),
            Err(HarnessError::MismatchedGrids(_))
        ));
    }

    #[test]
    fn averaging_pools_trials() {
        let a = curve("s0", &[(1.0, 10, 10), (2.0, 10, 4)]);
        let b = curve("s1", &[(1.0, 10, 6), (2.0, 10, 0)]);
        let m = average_curves(&[a, b], "mean").unwrap();
        assert_eq!(m.points[0].rate, 0.8);
        assert_eq!(m.points[1].rate, 0.2);
        assert_eq!(m.points[1].trials, 20);
    }

    #[test]
    fn csv_round_trips_and_rederives() {
        use TrialOutcome::*;
        let t = vec![
            trial("a", 0.3, 0, Success),
            trial("a", 0.3, 1, Stall),
            trial("b", 0.3, 0, Timeout),
            trial("b", 0.3, 1, Fall),
        ];
        let mut raw = Vec::new();
        write_trials_csv(&t, &mut raw).unwrap();
        let text = String::from_utf8(raw.clone()).unwrap();
        assert!(text.starts_with(
            "policy_id,param_tag,param_value,seed,outcome,distance_m,mean_speed_mps,survival_s\n"
        ));
        assert!(text.contains("a,FRICTION_MU,0.3,1,STALL,"));
        let back = read_trials_csv(raw.as_slice()).unwrap();
        assert_eq!(back, t);
        let curves = curves_from_trials(&back);
        let mut agg = Vec::new();
        write_curves_csv(&curves, &mut agg).unwrap();
        assert_eq!(read_curves_csv(agg.as_slice()).unwrap(), curves);
    }

    #[test]
    fn empty_sets_write_header_only() {
        let mut raw = Vec::new();
        write_trials_csv(&[], &mut raw).unwrap();
        assert_eq!(raw.iter().filter(|&&b| b == b'\n').count(), 1);
        assert!(read_trials_csv(raw.as_slice()).unwrap().is_empty());
        let mut agg = Vec::new();
        write_curves_csv(&[], &mut agg).unwrap();
        assert_eq!(
            String::from_utf8(agg).unwrap(),
            "policy_id,param_tag,param_value,trials,successes,rate,ci_halfwidth\n"
        );
    }
}
