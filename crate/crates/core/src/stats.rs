//! Validation metrics: marginal location statistics, state alignment,
//! confusion matrices, monthly state tables, RMSE, and replicate summaries.

use chrono::{Datelike, NaiveDate};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PointParams;

/// Largest K for which exhaustive permutation search is allowed.
pub const MAX_ALIGN_STATES: usize = 8;

/// Per-location dry-day fraction and mean wet-day intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationStats {
    pub days: usize,
    pub dry_proportion: Vec<f64>,
    /// Mean of strictly positive values; `None` when a location has no wet day.
    pub mean_intensity: Vec<Option<f64>>,
}

/// Restricts [`location_stats`] to the rows where `states[t] == state`.
#[derive(Debug, Clone, Copy)]
pub struct StateMask<'a> {
    pub states: &'a [usize],
    pub state: usize,
}

pub fn location_stats(data: ArrayView2<f64>, mask: Option<StateMask<'_>>) -> Result<LocationStats> {
    if let Some(m) = mask {
        if m.states.len() != data.nrows() {
            return Err(Error::shape(format!(
                "state sequence has length {} but data has {} rows",
                m.states.len(),
                data.nrows()
            )));
        }
    }
    let rows: Vec<usize> = (0..data.nrows())
        .filter(|&t| mask.is_none_or(|m| m.states[t] == m.state))
        .collect();
    if rows.is_empty() {
        return Err(Error::Data("no rows selected for location statistics".into()));
    }
    let n = rows.len() as f64;
    let mut dry_proportion = Vec::with_capacity(data.ncols());
    let mut mean_intensity = Vec::with_capacity(data.ncols());
    for col in data.columns() {
        let mut dry = 0usize;
        let mut wet_sum = 0.0;
        for &t in &rows {
            let y = col[t];
            if y == 0.0 {
                dry += 1;
            } else {
                wet_sum += y;
            }
        }
        let wet = rows.len() - dry;
        dry_proportion.push(dry as f64 / n);
        mean_intensity.push((wet > 0).then(|| wet_sum / wet as f64));
    }
    Ok(LocationStats {
        days: rows.len(),
        dry_proportion,
        mean_intensity,
    })
}

/// Root mean squared difference.
pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("rmse of lengths {} and {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::domain("rmse of empty vectors"));
    }
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((ss / a.len() as f64).sqrt())
}

/// Every permutation of 0..k in lexicographic order.
fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(k);
    let mut used = vec![false; k];
    fn rec(k: usize, current: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        for i in 0..k {
            if !used[i] {
                used[i] = true;
                current.push(i);
                rec(k, current, used, out);
                current.pop();
                used[i] = false;
            }
        }
    }
    rec(k, &mut current, &mut used, &mut out);
    out
}

fn best_permutation(k: usize, cost: &Array2<f64>) -> Result<Vec<usize>> {
    if k > MAX_ALIGN_STATES {
        return Err(Error::domain(format!(
            "state alignment by exhaustive search supports K ≤ {MAX_ALIGN_STATES}, got {k}; order states by wetness instead"
        )));
    }
    let mut best = None;
    let mut best_cost = f64::INFINITY;
    for p in permutations(k) {
        let c: f64 = p.iter().enumerate().map(|(cand, &r)| cost[[cand, r]]).sum();
        // Strict comparison keeps the lexicographically first optimum.
        if c < best_cost - 1e-12 {
            best_cost = c;
            best = Some(p);
        }
    }
    Ok(best.unwrap_or_else(|| (0..k).collect()))
}

fn tv(a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>) -> f64 {
    0.5 * a.zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Distance between candidate state `c` and reference state `r`: total
/// variation between mixture-weight rows plus relative rate differences
/// `|λ − λ'| / (λ + λ')`, summed over locations.
fn state_distance(reference: &PointParams, r: usize, candidate: &PointParams, c: usize) -> f64 {
    let (_, l, m1) = reference.c.dim();
    let mut d = 0.0;
    for loc in 0..l {
        d += tv(
            (0..m1).map(|m| reference.c[[r, loc, m]]),
            (0..m1).map(|m| candidate.c[[c, loc, m]]),
        );
        for m in 0..m1 - 1 {
            let (x, y) = (reference.lambda[[r, loc, m]], candidate.lambda[[c, loc, m]]);
            d += (x - y).abs() / (x + y);
        }
    }
    d
}

/// Finds `perm` with `perm[candidate_state] = reference_state` minimizing the
/// summed parameter distance. Ties resolve to the lexicographically first
/// permutation.
pub fn align_states_params(reference: &PointParams, candidate: &PointParams) -> Result<Vec<usize>> {
    let k = reference.k();
    if candidate.k() != k || candidate.c.dim() != reference.c.dim() {
        return Err(Error::shape("parameter sets have different dimensions"));
    }
    let cost = Array2::from_shape_fn((k, k), |(c, r)| state_distance(reference, r, candidate, c));
    best_permutation(k, &cost)
}

/// Finds `perm` with `perm[candidate_label] = reference_label` minimizing the
/// Hamming distance between the relabeled candidate and the reference.
pub fn align_states_labels(reference: &[usize], candidate: &[usize], k: usize) -> Result<Vec<usize>> {
    if reference.len() != candidate.len() {
        return Err(Error::shape("label sequences differ in length"));
    }
    if reference.iter().chain(candidate).any(|&s| s >= k) {
        return Err(Error::domain(format!("labels must lie in 0..{k}")));
    }
    let mut cost = Array2::zeros((k, k));
    for (&r, &c) in reference.iter().zip(candidate) {
        // Each co-occurrence removes one mismatch when c maps to r.
        cost[[c, r]] -= 1.0;
    }
    best_permutation(k, &cost)
}

pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// State selection (new state i = old state `order[i]`) that sorts states by
/// expected daily precipitation summed over locations, wettest first.
pub fn wetness_order(params: &PointParams) -> Vec<usize> {
    let (k, l, m1) = params.c.dim();
    let wetness: Vec<f64> = (0..k)
        .map(|j| {
            let mut w = 0.0;
            for loc in 0..l {
                for m in 1..m1 {
                    w += params.c[[j, loc, m]] / params.lambda[[j, loc, m - 1]];
                }
            }
            w
        })
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| wetness[b].total_cmp(&wetness[a]).then(a.cmp(&b)));
    order
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// counts[decoded][true] after relabeling the decoded states.
    pub counts: Vec<Vec<usize>>,
    /// counts[j][j] / Σ_d counts[d][j]; `None` for a true state that never occurs.
    pub per_state_recall: Vec<Option<f64>>,
    pub accuracy: f64,
}

/// Tabulates decoded against true states; `perm[decoded] = aligned label`.
pub fn confusion(true_states: &[usize], decoded_states: &[usize], perm: &[usize]) -> Result<ConfusionMatrix> {
    if true_states.len() != decoded_states.len() {
        return Err(Error::domain(format!(
            "true and decoded sequences differ in length ({} vs {})",
            true_states.len(),
            decoded_states.len()
        )));
    }
    if true_states.is_empty() {
        return Err(Error::domain("empty state sequences"));
    }
    let k = perm.len();
    crate::model::check_permutation(perm, k)?;
    if true_states.iter().chain(decoded_states).any(|&s| s >= k) {
        return Err(Error::domain(format!("state labels must lie in 0..{k}")));
    }
    let mut counts = vec![vec![0usize; k]; k];
    for (&t, &d) in true_states.iter().zip(decoded_states) {
        counts[perm[d]][t] += 1;
    }
    let per_state_recall = (0..k)
        .map(|j| {
            let col: usize = counts.iter().map(|row| row[j]).sum();
            (col > 0).then(|| counts[j][j] as f64 / col as f64)
        })
        .collect();
    let correct: usize = (0..k).map(|j| counts[j][j]).sum();
    Ok(ConfusionMatrix {
        counts,
        per_state_recall,
        accuracy: correct as f64 / true_states.len() as f64,
    })
}

/// Percentage of days in each state, per calendar month present in `dates`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyDistribution {
    pub months: Vec<u32>,
    /// percent[i][j]: share of days of `months[i]` spent in state j; rows sum to 100.
    pub percent: Vec<Vec<f64>>,
}

pub fn monthly_state_distribution(states: &[usize], dates: &[NaiveDate], k: usize) -> Result<MonthlyDistribution> {
    if states.len() != dates.len() {
        return Err(Error::shape("states and dates differ in length"));
    }
    if states.iter().any(|&s| s >= k) {
        return Err(Error::domain(format!("state labels must lie in 0..{k}")));
    }
    let mut table = vec![vec![0usize; k]; 12];
    for (&s, d) in states.iter().zip(dates) {
        table[d.month0() as usize][s] += 1;
    }
    let mut months = Vec::new();
    let mut percent = Vec::new();
    for (m, row) in table.into_iter().enumerate() {
        let total: usize = row.iter().sum();
        if total == 0 {
            continue;
        }
        months.push(m as u32 + 1);
        percent.push(row.iter().map(|&c| 100.0 * c as f64 / total as f64).collect());
    }
    Ok(MonthlyDistribution { months, percent })
}

/// Linear-interpolation quantile of already sorted values.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    let h = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Distribution of a per-location statistic across replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q975: f64,
    /// Root mean squared difference between replicates and the reference value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmse_vs_reference: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
    /// Whether the reference lies inside [q025, q975].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_in_95: Option<bool>,
}

pub fn summarize_replicates(values: &[f64], reference: Option<f64>) -> Result<ReplicateSummary> {
    if values.is_empty() {
        return Err(Error::domain("no replicate values to summarize"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let q = |p| quantile_sorted(&sorted, p);
    let (q025, q975) = (q(0.025), q(0.975));
    let rmse_vs_reference = reference.map(|r| {
        (values.iter().map(|v| (v - r) * (v - r)).sum::<f64>() / n as f64).sqrt()
    });
    Ok(ReplicateSummary {
        n,
        mean,
        sd,
        q025,
        q25: q(0.25),
        q50: q(0.5),
        q75: q(0.75),
        q975,
        rmse_vs_reference,
        reference,
        reference_in_95: reference.map(|r| r >= q025 && r <= q975),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::paper_simulation_preset;
    use ndarray::array;

    #[test]
    fn location_stats_basic() {
        let data = array![[0.0], [1.2], [0.0], [3.4]];
        let s = location_stats(data.view(), None).unwrap();
        assert_eq!(s.dry_proportion, vec![0.5]);
        assert!((s.mean_intensity[0].unwrap() - 2.3).abs() < 1e-15);

        let states = [0, 1, 0, 1];
        let masked = location_stats(data.view(), Some(StateMask { states: &states, state: 0 })).unwrap();
        assert_eq!(masked.mean_intensity, vec![None]);
        assert_eq!(masked.dry_proportion, vec![1.0]);

        let all = [0, 0, 0, 0];
        let full = location_stats(data.view(), Some(StateMask { states: &all, state: 0 })).unwrap();
        assert_eq!(full, s);
        assert!(location_stats(data.view(), Some(StateMask { states: &all, state: 2 })).is_err());
    }

    #[test]
    fn rmse_cases() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert!((rmse(&[1.0, 5.0, -2.0], &[1.5, 5.5, -1.5]).unwrap() - 0.5).abs() < 1e-15);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn label_alignment() {
        let truth = [0, 1, 2, 1, 0, 2, 2];
        assert_eq!(align_states_labels(&truth, &truth, 3).unwrap(), vec![0, 1, 2]);
        let swapped: Vec<usize> = truth.iter().map(|&s| [1, 0, 2][s]).collect();
        assert_eq!(align_states_labels(&truth, &swapped, 3).unwrap(), vec![1, 0, 2]);
        assert!(align_states_labels(&[0; 3], &[0; 3], 9).is_err());
    }

    #[test]
    fn parameter_alignment_recovers_relabeling() {
        let truth = paper_simulation_preset();
        assert_eq!(align_states_params(&truth, &truth).unwrap(), vec![0, 1, 2]);
        let sel = [2, 0, 1];
        let shuffled = truth.permute_states(&sel).unwrap();
        // shuffled state i is truth state sel[i].
        assert_eq!(align_states_params(&truth, &shuffled).unwrap(), sel.to_vec());
    }

    #[test]
    fn paper_confusion_table() {
        let counts = [[631, 71, 11], [50, 363, 207], [24, 162, 281]];
        let mut t = Vec::new();
        let mut d = Vec::new();
        for (dec, row) in counts.iter().enumerate() {
            for (tr, &n) in row.iter().enumerate() {
                for _ in 0..n {
                    t.push(tr);
                    d.push(dec);
                }
            }
        }
        let cm = confusion(&t, &d, &[0, 1, 2]).unwrap();
        assert_eq!(t.len(), 1800);
        assert!((cm.accuracy - 1275.0 / 1800.0).abs() < 1e-15);
        assert!((cm.per_state_recall[0].unwrap() - 631.0 / 705.0).abs() < 1e-15);
        assert!((cm.per_state_recall[0].unwrap() - 0.895).abs() < 5e-4);
        assert!((cm.accuracy - 0.708).abs() < 5e-4);
    }

    #[test]
    fn confusion_edge_cases() {
        let t = [0, 1, 2, 2, 1];
        let cm = confusion(&t, &t, &[0, 1, 2]).unwrap();
        assert_eq!(cm.accuracy, 1.0);
        assert_eq!(cm.counts, vec![vec![1, 0, 0], vec![0, 2, 0], vec![0, 0, 2]]);
        let mut d = t;
        d[3] = 0;
        assert!((confusion(&t, &d, &[0, 1, 2]).unwrap().accuracy - 0.8).abs() < 1e-15);
        assert!(confusion(&t, &d[..4], &[0, 1, 2]).is_err());
    }

    #[test]
    fn monthly_table() {
        let dates: Vec<NaiveDate> = NaiveDate::from_ymd_opt(2001, 7, 1)
            .unwrap()
            .iter_days()
            .take(92)
            .collect();
        let states = vec![0; 92];
        let m = monthly_state_distribution(&states, &dates, 3).unwrap();
        assert_eq!(m.months, vec![7, 8, 9]);
        for row in &m.percent {
            assert_eq!(row, &vec![100.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn wetness_order_puts_wettest_first() {
        let truth = paper_simulation_preset();
        assert_eq!(wetness_order(&truth), vec![0, 1, 2]);
        let shuffled = truth.permute_states(&[1, 2, 0]).unwrap();
        assert_eq!(wetness_order(&shuffled), vec![2, 0, 1]);
    }

    #[test]
    fn replicate_summary() {
        let s = summarize_replicates(&[1.0, 2.0, 3.0, 4.0, 5.0], Some(3.0)).unwrap();
        assert_eq!(s.q50, 3.0);
        assert_eq!(s.mean, 3.0);
        assert!((s.rmse_vs_reference.unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.reference_in_95, Some(true));
    }
}
