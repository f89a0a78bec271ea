//! Task imbalance quantification and data rebalancing.
//!
//! At the start of interval `k` every task gets a PSNR distance
//! `d = psnr_single - psnr_multi`, clipped to `[-clip, clip]`. Weights are
//! `exp(d)` normalized to sum one, and quotas are `N * w` rounded by largest
//! remainder. Giving every sample the same weight `1 / N` while drawing
//! `N * w_i` samples from task `i` reproduces the weighted multi-task loss
//! `sum_i w_i * mean_i(loss)`; [`equivalence_oracle`] evaluates both sides.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, PSNR_CAP};

/// Validation PSNR of the frozen single-task reference and of the shared net on one task.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSnapshot {
    pub task_id: usize,
    pub psnr_single: f64,
    pub psnr_multi: f64,
}

impl TaskSnapshot {
    pub fn new(task_id: usize, psnr_single: f64, psnr_multi: f64) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && v <= PSNR_CAP;
        if !ok(psnr_single) || !ok(psnr_multi) {
            return Err(Error::invalid(format!(
                "snapshot for task {task_id} has invalid PSNR ({psnr_single}, {psnr_multi})"
            )));
        }
        Ok(TaskSnapshot {
            task_id,
            psnr_single,
            psnr_multi,
        })
    }
}

/// Positive when the shared model lags its reference on this task.
pub fn psnr_distance(snap: &TaskSnapshot) -> f64 {
    snap.psnr_single - snap.psnr_multi
}

/// Softmax of clipped distances.
pub fn weights_from_distances(distances: &[f64], clip: f64) -> Result<Vec<f64>> {
    if distances.len() < 2 {
        return Err(Error::invalid(format!(
            "weighting needs at least two tasks, got {}",
            distances.len()
        )));
    }
    if !(clip > 0.0) {
        return Err(Error::invalid(format!("clip must be > 0, got {clip}")));
    }
    if distances.iter().any(|d| !d.is_finite()) {
        return Err(Error::invalid("non-finite PSNR distance"));
    }
    let raw: Vec<f64> = distances.iter().map(|d| d.clamp(-clip, clip).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|r| r / total).collect())
}

/// Normalized task weights for one interval.
pub fn compute_weights(snaps: &[TaskSnapshot], clip: f64) -> Result<Vec<f64>> {
    let d: Vec<f64> = snaps.iter().map(psnr_distance).collect();
    weights_from_distances(&d, clip)
}

/// Default per-task minimum quota: `max(1, round(0.01 N))`.
pub fn default_floor(total: usize) -> usize {
    ((0.01 * total as f64).round() as usize).max(1)
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::invalid("no weights"));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid("weights must be finite and non-negative"));
    }
    let s: f64 = weights.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("weights sum to {s}, expected 1")));
    }
    Ok(())
}

/// Largest-remainder apportionment of `total` by `weights`; ties go to the
/// lower index. Each quota is `floor(N w_i)` or one more.
pub fn largest_remainder(weights: &[f64], total: usize) -> Result<Vec<usize>> {
    check_weights(weights)?;
    let ideal: Vec<f64> = weights.iter().map(|w| w * total as f64).collect();
    let mut quotas: Vec<usize> = ideal.iter().map(|v| v.floor() as usize).collect();
    let assigned: usize = quotas.iter().sum();
    // Floors of positive reals summing to N cannot exceed N, but rounding in
    // N * w can push a floor over by one; trim from the smallest remainders.
    let mut order: Vec<usize> = (0..weights.len()).collect();
    let frac = |i: usize| ideal[i] - ideal[i].floor();
    order.sort_by(|&a, &b| frac(b).total_cmp(&frac(a)).then(a.cmp(&b)));
    if assigned <= total {
        for &i in order.iter().cycle().take(total - assigned) {
            quotas[i] += 1;
        }
    } else {
        for &i in order.iter().rev().cycle().take(assigned - total) {
            quotas[i] -= 1;
        }
    }
    Ok(quotas)
}

/// Integer quotas summing to `total`, each at least `floor_min`.
///
/// Tasks under the floor are lifted one sample at a time, each sample taken
/// from the currently largest quota (lower index on ties).
pub fn weights_to_quotas(weights: &[f64], total: usize, floor_min: usize) -> Result<Vec<usize>> {
    if total < weights.len() * floor_min {
        return Err(Error::invalid(format!(
            "total {total} cannot give {} tasks a floor of {floor_min}",
            weights.len()
        )));
    }
    let mut quotas = largest_remainder(weights, total)?;
    while let Some(low) = quotas.iter().position(|&q| q < floor_min) {
        let (big, _) = quotas
            .iter()
            .enumerate()
            .fold((0, 0), |best, (i, &q)| if q > best.1 { (i, q) } else { best });
        quotas[big] -= 1;
        quotas[low] += 1;
    }
    Ok(quotas)
}

/// Both sides of the loss identity for per-task sample losses.
///
/// Returns `(sum_i w_i * mean_i, sum over samples of (w_i / N_i) * loss)`.
pub fn equivalence_oracle(task_losses: &[Vec<f64>], weights: &[f64]) -> Result<(f64, f64)> {
    if task_losses.len() != weights.len() {
        return Err(Error::invalid(format!(
            "{} tasks but {} weights",
            task_losses.len(),
            weights.len()
        )));
    }
    if let Some(i) = task_losses.iter().position(Vec::is_empty) {
        return Err(Error::invalid(format!("task {i} has no samples")));
    }
    let weighted_task: f64 = task_losses
        .iter()
        .zip(weights)
        .map(|(l, w)| w * (l.iter().sum::<f64>() / l.len() as f64))
        .sum();
    let sample_weighted: f64 = task_losses
        .iter()
        .zip(weights)
        .flat_map(|(l, &w)| {
            let per_sample = w / l.len() as f64;
            l.iter().map(move |v| per_sample * v)
        })
        .sum();
    Ok((weighted_task, sample_weighted))
}

/// Weights and quotas for one interval, with the inputs that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalPlan {
    pub interval_index: usize,
    pub snapshots: Vec<TaskSnapshot>,
    pub distances: Vec<f64>,
    pub weights: Vec<f64>,
    pub quotas: Vec<usize>,
    pub total: usize,
}

impl IntervalPlan {
    /// Equal weights, for the uniform baseline.
    pub fn uniform(interval_index: usize, n_tasks: usize, total: usize, floor_min: usize) -> Result<Self> {
        let weights = vec![1.0 / n_tasks as f64; n_tasks];
        let quotas = weights_to_quotas(&weights, total, floor_min)?;
        Ok(IntervalPlan {
            interval_index,
            snapshots: Vec::new(),
            distances: Vec::new(),
            weights,
            quotas,
            total,
        })
    }

    pub fn rows(&self) -> Vec<PlanRow> {
        (0..self.weights.len())
            .map(|i| PlanRow {
                interval: self.interval_index,
                task: i,
                psnr_single: self.snapshots.get(i).map(|s| s.psnr_single),
                psnr_multi: self.snapshots.get(i).map(|s| s.psnr_multi),
                distance: self.distances.get(i).copied(),
                weight: self.weights[i],
                quota: self.quotas[i],
            })
            .collect()
    }
}

/// Compute weights from snapshots then apportion `total` samples.
pub fn plan_interval(
    interval_index: usize,
    snaps: &[TaskSnapshot],
    total: usize,
    clip: f64,
    floor_min: usize,
) -> Result<IntervalPlan> {
    let distances: Vec<f64> = snaps.iter().map(psnr_distance).collect();
    let weights = weights_from_distances(&distances, clip)?;
    let quotas = weights_to_quotas(&weights, total, floor_min)?;
    Ok(IntervalPlan {
        interval_index,
        snapshots: snaps.to_vec(),
        distances,
        weights,
        quotas,
        total,
    })
}

/// One CSV row of a plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanRow {
    pub interval: usize,
    pub task: usize,
    pub psnr_single: Option<f64>,
    pub psnr_multi: Option<f64>,
    pub distance: Option<f64>,
    pub weight: f64,
    pub quota: usize,
}

pub fn write_plan_csv<W: std::io::Write>(plans: &[IntervalPlan], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in plans.iter().flat_map(IntervalPlan::rows) {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_plan_csv<R: std::io::Read>(input: R) -> Result<Vec<PlanRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn snaps(distances: &[f64]) -> Vec<TaskSnapshot> {
        distances
            .iter()
            .enumerate()
            .map(|(i, d)| TaskSnapshot::new(i, 25.0 + d, 25.0).unwrap())
            .collect()
    }

    #[test]
    fn distance_signs() {
        let d = |s, m| psnr_distance(&TaskSnapshot::new(0, s, m).unwrap());
        assert_eq!(d(24.0, 24.0), 0.0);
        assert!((d(24.5, 23.8) - 0.7).abs() < 1e-12);
        assert!((d(23.9, 24.1) + 0.2).abs() < 1e-12);
        assert!(TaskSnapshot::new(0, f64::NAN, 1.0).is_err());
        assert!(TaskSnapshot::new(0, 120.0, 1.0).is_err());
    }

    #[test]
    fn weight_examples() {
        for d in [-3.0, 0.0, 0.4] {
            let w = compute_weights(&snaps(&[d; 4]), 1.0).unwrap();
            assert!(w.iter().all(|v| (v - 0.25).abs() < 1e-15));
        }
        let e2 = 1f64.exp().powi(2);
        let w = compute_weights(&snaps(&[1.0, -1.0]), 2.0).unwrap();
        assert!((w[0] - e2 / (1.0 + e2)).abs() < 1e-12);
        assert!((w[0] - 0.8808).abs() < 1e-4 && (w[1] - 0.1192).abs() < 1e-4);
        let e = 1f64.exp();
        let w = compute_weights(&snaps(&[5.0, 0.0]), 1.0).unwrap();
        assert!((w[0] - e / (1.0 + e)).abs() < 1e-12);
        assert!((w[0] - 0.7311).abs() < 1e-4 && (w[1] - 0.2689).abs() < 1e-4);

        assert!(compute_weights(&snaps(&[1.0]), 1.0).is_err());
        assert!(compute_weights(&snaps(&[1.0, 2.0]), 0.0).is_err());
    }

    #[test]
    fn quota_examples() {
        assert_eq!(weights_to_quotas(&[0.4, 0.3, 0.2, 0.1], 1000, 1).unwrap(), vec![400, 300, 200, 100]);
        let third = 1.0 / 3.0;
        assert_eq!(weights_to_quotas(&[third; 3], 10, 1).unwrap(), vec![4, 3, 3]);
        let skewed = [0.999, 0.0003, 0.0003, 0.0004];
        assert_eq!(largest_remainder(&skewed, 100).unwrap(), vec![100, 0, 0, 0]);
        let q = weights_to_quotas(&skewed, 100, 1).unwrap();
        assert_eq!(q, vec![97, 1, 1, 1]);
        assert!(weights_to_quotas(&[0.5, 0.5], 3, 2).is_err());
        assert!(weights_to_quotas(&[0.5, 0.6], 10, 1).is_err());
        assert_eq!(default_floor(1600), 16);
        assert_eq!(default_floor(10), 1);
    }

    #[test]
    fn oracle_examples() {
        let losses = vec![vec![1.0, 3.0], vec![2.0, 2.0, 5.0], vec![0.5; 5]];
        let w = [0.2, 0.5, 0.3];
        let (a, b) = equivalence_oracle(&losses, &w).unwrap();
        // brute force in both summation orders
        let brute_a = 0.2 * 2.0 + 0.5 * 3.0 + 0.3 * 0.5;
        let mut brute_b = 0.0;
        for (i, l) in losses.iter().enumerate() {
            for v in l {
                brute_b += w[i] / l.len() as f64 * v;
            }
        }
        assert!((a - brute_a).abs() < 1e-12 && (b - brute_b).abs() < 1e-12);

        let eq = vec![vec![1.0, 2.0], vec![4.0, 6.0]];
        let (a, b) = equivalence_oracle(&eq, &[0.5, 0.5]).unwrap();
        assert!((a - 3.25).abs() < 1e-12 && (b - 3.25).abs() < 1e-12);
        assert!(equivalence_oracle(&[vec![], vec![1.0]], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn plan_examples() {
        let p = plan_interval(0, &snaps(&[0.0; 4]), 1600, 1.0, 16).unwrap();
        assert_eq!(p.quotas, vec![400; 4]);
        let p = plan_interval(1, &snaps(&[0.0, 0.6, 0.0, 0.0]), 1600, 1.0, 16).unwrap();
        let max = *p.quotas.iter().max().unwrap();
        assert_eq!(p.quotas[1], max);
        assert_eq!(p.quotas.iter().filter(|&&q| q == max).count(), 1);
        assert_eq!(p.quotas.iter().sum::<usize>(), 1600);
        assert_eq!(p.rows().len(), 4);
    }

    #[test]
    fn plan_csv_round_trip() {
        let plans = vec![
            plan_interval(0, &snaps(&[0.1, -0.3, 0.7]), 100, 1.0, 1).unwrap(),
            IntervalPlan::uniform(1, 3, 100, 1).unwrap(),
        ];
        let mut buf = Vec::new();
        write_plan_csv(&plans, &mut buf).unwrap();
        let rows = read_plan_csv(&buf[..]).unwrap();
        let expected: Vec<_> = plans.iter().flat_map(IntervalPlan::rows).collect();
        assert_eq!(rows, expected);
    }

    /// Data-level check: averaging per-sample gradients over a
    /// quota-proportioned multiset equals the gradient of the weighted
    /// multi-task loss with weights N_i / N.
    #[test]
    fn multiset_gradient_matches_weighted_task_gradient() {
        let mut rng = seed::rng(3);
        // linear model y = a x + b with squared loss, per-task sample pools
        let (a, b) = (0.7, -0.2);
        let pools: Vec<Vec<(f64, f64)>> = (0..4)
            .map(|t| {
                (0..7 + 3 * t)
                    .map(|_| {
                        let x: f64 = rng.random_range(-1.0..1.0);
                        (x, 0.3 * t as f64 + 1.1 * x + rng.random_range(-0.1..0.1))
                    })
                    .collect()
            })
            .collect();
        let grad = |&(x, y): &(f64, f64)| {
            let r = a * x + b - y;
            [2.0 * r * x, 2.0 * r]
        };
        let total = 10_000;
        let weights = weights_from_distances(&[0.4, -0.2, 0.9, 0.0], 1.0).unwrap();
        let quotas = weights_to_quotas(&weights, total, 1).unwrap();

        // multiset: quota_i cyclic draws from pool i, uniform weight 1/N
        let mut uniform = [0.0; 2];
        for (pool, &q) in pools.iter().zip(&quotas) {
            for s in 0..q {
                let g = grad(&pool[s % pool.len()]);
                uniform[0] += g[0] / total as f64;
                uniform[1] += g[1] / total as f64;
            }
        }
        let mut weighted = [0.0; 2];
        for (pool, &q) in pools.iter().zip(&quotas) {
            let w = q as f64 / total as f64;
            for s in pool {
                let g = grad(s);
                weighted[0] += w * g[0] / pool.len() as f64;
                weighted[1] += w * g[1] / pool.len() as f64;
            }
        }
        let max_pool = pools.iter().map(Vec::len).max().unwrap() as f64;
        let gmax = pools.iter().flatten().map(|s| grad(s)[0].abs().max(grad(s)[1].abs())).fold(0.0, f64::max);
        // cycling leaves at most one partial pass per task
        let bound = 4.0 * max_pool * gmax / total as f64;
        for k in 0..2 {
            assert!((uniform[k] - weighted[k]).abs() <= bound, "{uniform:?} vs {weighted:?}");
        }
        // and the quota weights track the task weights to O(1/N)
        for (q, w) in quotas.iter().zip(&weights) {
            assert!((*q as f64 / total as f64 - w).abs() <= 1.0 / total as f64);
        }
    }

    fn normalized(raw: &[f64]) -> Vec<f64> {
        let s: f64 = raw.iter().sum();
        raw.iter().map(|r| r / s).collect()
    }

    proptest! {
        #[test]
        fn quotas_exact_and_proportional(
            raw in proptest::collection::vec(0.001f64..1.0, 2..9),
            total in prop::sample::select(vec![16usize, 100, 1600]),
        ) {
            let w = normalized(&raw);
            let lr = largest_remainder(&w, total).unwrap();
            prop_assert_eq!(lr.iter().sum::<usize>(), total);
            for (q, wi) in lr.iter().zip(&w) {
                prop_assert!((*q as f64 - total as f64 * wi).abs() <= 1.0);
            }
            let floor = default_floor(total);
            if total >= w.len() * floor {
                let q = weights_to_quotas(&w, total, floor).unwrap();
                prop_assert_eq!(q.iter().sum::<usize>(), total);
                prop_assert!(q.iter().all(|&v| v >= floor));
            }
        }

        #[test]
        fn weights_shift_invariant_and_monotone(
            d in proptest::collection::vec(-3.0f64..3.0, 2..8),
            shift in -2.0f64..2.0,
        ) {
            let clip = 100.0;
            let w = weights_from_distances(&d, clip).unwrap();
            let shifted: Vec<f64> = d.iter().map(|v| v + shift).collect();
            let ws = weights_from_distances(&shifted, clip).unwrap();
            for (a, b) in w.iter().zip(&ws) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(w.iter().all(|&v| v > 0.0));
            let q = weights_to_quotas(&w, 100 * d.len(), 1).unwrap();
            for i in 0..d.len() {
                for j in 0..d.len() {
                    if d[i] > d[j] {
                        prop_assert!(w[i] > w[j]);
                        prop_assert!(q[i] >= q[j]);
                    }
                }
            }
        }

        #[test]
        fn oracle_sides_agree(
            losses in proptest::collection::vec(proptest::collection::vec(0.0f64..2.0, 1..50), 2..8),
            seed in any::<u64>(),
        ) {
            let mut rng = seed::rng(seed);
            let raw: Vec<f64> = losses.iter().map(|_| rng.random_range(0.01..1.0)).collect();
            let w = normalized(&raw);
            let (a, b) = equivalence_oracle(&losses, &w).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
        }
    }
}
