//! Tracking metrics: cardinality and nearest-peak position error.

use crate::gmm::Peak;
use crate::scenario::GroundTruth;
use crate::types::TargetState;

/// Errors above this distance count towards a track loss.
pub const TRACK_LOSS_DISTANCE: f64 = 300.0;
/// Minimum run length, in steps, of a track loss.
pub const TRACK_LOSS_STEPS: usize = 3;

/// Metrics of one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMetrics {
    pub step: usize,
    pub n_true: usize,
    pub n_hat: f64,
    /// Nearest-peak error per alive vehicle, `None` when there were no peaks.
    pub errors: Vec<(u32, Option<f64>)>,
}

impl StepMetrics {
    pub fn error(&self, id: u32) -> Option<f64> {
        self.errors
            .iter()
            .find(|(v, _)| *v == id)
            .and_then(|(_, e)| *e)
    }

    pub fn is_alive(&self, id: u32) -> bool {
        self.errors.iter().any(|(v, _)| *v == id)
    }
}

/// Distance from each vehicle to its nearest peak. Every vehicle gets `None`
/// when `peaks` is empty. A peak may be nearest to several vehicles.
pub fn position_errors(truth: &[(u32, TargetState)], peaks: &[Peak]) -> Vec<(u32, Option<f64>)> {
    truth
        .iter()
        .map(|(id, s)| {
            let nearest = peaks
                .iter()
                .map(|p| (p.x - s.x).hypot(p.y - s.y))
                .fold(None, |acc: Option<f64>, d| {
                    Some(acc.map_or(d, |a| a.min(d)))
                });
            (*id, nearest)
        })
        .collect()
}

/// Per-step track estimate: expected count and detected peaks.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackStep {
    pub step: usize,
    pub n_hat: f64,
    pub peaks: Vec<Peak>,
}

/// Per-step metrics of a track sequence against ground truth.
/// Steps beyond the end of the truth have no vehicles.
pub fn evaluate(truth: &GroundTruth, tracks: &[TrackStep]) -> Vec<StepMetrics> {
    tracks
        .iter()
        .map(|t| {
            let alive = truth.at(t.step);
            StepMetrics {
                step: t.step,
                n_true: alive.len(),
                n_hat: t.n_hat,
                errors: position_errors(alive, &t.peaks),
            }
        })
        .collect()
}

/// Run summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub steps: usize,
    /// Median over all (alive vehicle, step) pairs with an error.
    pub median_error: Option<f64>,
    pub p90_error: Option<f64>,
    /// Fraction of steps with |round(n_hat) - n_true| <= 1.
    pub cardinality_fraction: f64,
    /// Number of runs of at least three consecutive alive steps in which a
    /// vehicle's error exceeds 300 m or is missing.
    pub track_losses: usize,
    /// Alive (vehicle, step) pairs with no error because no peaks existed.
    pub missing_errors: usize,
    pub max_n_hat: f64,
}

impl Summary {
    /// `key=value` lines; missing statistics are written as `nan`.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| format!("{x:.6}"));
        format!(
            "steps={}\nmedian_error={}\np90_error={}\ncardinality_fraction={:.6}\ntrack_losses={}\nmissing_errors={}\nmax_n_hat={:.6}\n",
            self.steps,
            opt(self.median_error),
            opt(self.p90_error),
            self.cardinality_fraction,
            self.track_losses,
            self.missing_errors,
            self.max_n_hat
        )
    }
}

/// Percentile with linear interpolation between order statistics.
/// `q` is in [0, 1]. Returns `None` for an empty sample.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

/// Count maximal runs of at least `min_len` consecutive `true` values.
fn count_runs(flags: impl IntoIterator<Item = bool>, min_len: usize) -> usize {
    let mut runs = 0;
    let mut len = 0;
    for f in flags {
        if f {
            len += 1;
            if len == min_len {
                runs += 1;
            }
        } else {
            len = 0;
        }
    }
    runs
}

pub fn summarize(metrics: &[StepMetrics]) -> Summary {
    let errors: Vec<f64> = metrics
        .iter()
        .flat_map(|m| m.errors.iter().filter_map(|(_, e)| *e))
        .collect();
    let missing_errors = metrics
        .iter()
        .map(|m| m.errors.iter().filter(|(_, e)| e.is_none()).count())
        .sum();
    let within = metrics
        .iter()
        .filter(|m| (m.n_hat.round() - m.n_true as f64).abs() <= 1.0)
        .count();

    let mut ids: Vec<u32> = metrics
        .iter()
        .flat_map(|m| m.errors.iter().map(|(id, _)| *id))
        .collect();
    ids.sort_unstable();
    ids.dedup();
    let track_losses = ids
        .iter()
        .map(|&id| {
            // Consecutive means consecutive steps; a gap in liveness breaks the run.
            let mut runs = 0;
            let mut flags = Vec::new();
            for m in metrics {
                if m.is_alive(id) {
                    flags.push(m.error(id).is_none_or(|e| e > TRACK_LOSS_DISTANCE));
                } else {
                    runs += count_runs(flags.drain(..), TRACK_LOSS_STEPS);
                }
            }
            runs + count_runs(flags, TRACK_LOSS_STEPS)
        })
        .sum();

    Summary {
        steps: metrics.len(),
        median_error: percentile(&errors, 0.5),
        p90_error: percentile(&errors, 0.9),
        cardinality_fraction: if metrics.is_empty() {
            0.0
        } else {
            within as f64 / metrics.len() as f64
        },
        track_losses,
        missing_errors,
        max_n_hat: metrics.iter().map(|m| m.n_hat).fold(0.0, f64::max),
    }
}

/// OSPA distance with order 1 and cutoff `c` under optimal assignment.
///
/// Not the acceptance metric; offered as an assignment-based alternative to
/// the nearest-peak error.
pub fn ospa(truth: &[(f64, f64)], estimates: &[(f64, f64)], cutoff: f64) -> f64 {
    let (small, large) = if truth.len() <= estimates.len() {
        (truth, estimates)
    } else {
        (estimates, truth)
    };
    let (m, n) = (small.len(), large.len());
    if n == 0 {
        return 0.0;
    }
    let cost = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).hypot(a.1 - b.1).min(cutoff);
    let mut used = vec![false; n];
    let best = best_assignment(small, large, 0, &mut used, &cost);
    (best + cutoff * (n - m) as f64) / n as f64
}

fn best_assignment(
    small: &[(f64, f64)],
    large: &[(f64, f64)],
    i: usize,
    used: &mut [bool],
    cost: &impl Fn((f64, f64), (f64, f64)) -> f64,
) -> f64 {
    if i == small.len() {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for j in 0..large.len() {
        if !used[j] {
            used[j] = true;
            let c = cost(small[i], large[j]) + best_assignment(small, large, i + 1, used, cost);
            used[j] = false;
            best = best.min(c);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn at(x: f64, y: f64) -> TargetState {
        TargetState::new(x, y, 0.0, 0.0)
    }

    fn step(n_true: usize, n_hat: f64, errors: &[(u32, Option<f64>)]) -> StepMetrics {
        StepMetrics {
            step: 0,
            n_true,
            n_hat,
            errors: errors.to_vec(),
        }
    }

    #[test]
    fn three_four_five() {
        let e = position_errors(&[(0, at(0.0, 0.0))], &[Peak::new(30.0, 40.0, 1.0)]);
        assert_eq!(e, vec![(0, Some(50.0))]);
    }

    #[test]
    fn shared_peak_serves_both_vehicles() {
        let e = position_errors(
            &[(0, at(-10.0, 0.0)), (1, at(10.0, 0.0))],
            &[Peak::new(0.0, 0.0, 1.0)],
        );
        assert_eq!(e[0].1, e[1].1);
        assert_eq!(e[0].1, Some(10.0));
    }

    #[test]
    fn no_peaks_means_absent() {
        let e = position_errors(&[(0, at(0.0, 0.0)), (3, at(1.0, 1.0))], &[]);
        assert_eq!(e, vec![(0, None), (3, None)]);
    }

    #[test]
    fn perfect_tracker() {
        let m: Vec<_> = (0..10)
            .map(|_| step(2, 2.0, &[(0, Some(0.0)), (1, Some(0.0))]))
            .collect();
        let s = summarize(&m);
        assert_eq!(s.median_error, Some(0.0));
        assert_eq!(s.cardinality_fraction, 1.0);
        assert_eq!(s.track_losses, 0);
    }

    #[test]
    fn constant_errors() {
        let m: Vec<_> = (0..7).map(|_| step(1, 1.0, &[(0, Some(50.0))])).collect();
        let s = summarize(&m);
        assert_eq!(s.median_error, Some(50.0));
        assert_eq!(s.p90_error, Some(50.0));
    }

    #[test]
    fn one_excursion_is_one_loss() {
        let m: Vec<_> = (0..20)
            .map(|t| {
                step(
                    1,
                    1.0,
                    &[(0, Some(if (5..10).contains(&t) { 400.0 } else { 20.0 }))],
                )
            })
            .collect();
        assert_eq!(summarize(&m).track_losses, 1);
        // Two short excursions do not count.
        let m: Vec<_> = (0..20)
            .map(|t| {
                step(
                    1,
                    1.0,
                    &[(
                        0,
                        Some(if t == 3 || t == 4 || t == 8 {
                            400.0
                        } else {
                            20.0
                        }),
                    )],
                )
            })
            .collect();
        assert_eq!(summarize(&m).track_losses, 0);
    }

    #[test]
    fn cardinality_uses_rounded_estimate() {
        let m = vec![
            step(3, 1.6, &[]),
            step(3, 1.4, &[]),
            step(0, 0.4, &[]),
            step(1, 2.5, &[]),
        ];
        // 1.6 -> 2 ok, 1.4 -> 1 off by two, 0.4 -> 0 ok, 2.5 -> 3 off by two.
        assert_eq!(summarize(&m).cardinality_fraction, 0.5);
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0], 0.5), Some(2.5));
        assert_eq!(percentile(&[4.0, 1.0, 3.0, 2.0, 5.0], 0.9), Some(4.6));
        assert_eq!(percentile(&[], 0.5), None);
    }

    #[test]
    fn ospa_examples() {
        assert_eq!(ospa(&[], &[], 100.0), 0.0);
        assert_eq!(ospa(&[(0.0, 0.0)], &[(3.0, 4.0)], 100.0), 5.0);
        assert_eq!(ospa(&[(0.0, 0.0)], &[], 100.0), 100.0);
        // Optimal assignment swaps the naive pairing.
        let d = ospa(
            &[(0.0, 0.0), (10.0, 0.0)],
            &[(10.0, 0.0), (0.0, 0.0)],
            100.0,
        );
        assert_eq!(d, 0.0);
    }

    proptest! {
        #[test]
        fn errors_ignore_ordering_and_shrink_with_more_peaks(
            truth in proptest::collection::vec((-1e3..1e3f64, -1e3..1e3f64), 1..5),
            peaks in proptest::collection::vec((-1e3..1e3f64, -1e3..1e3f64), 1..6),
            extra in (-1e3..1e3f64, -1e3..1e3f64),
        ) {
            let t: Vec<_> = truth.iter().enumerate().map(|(i, &(x, y))| (i as u32, at(x, y))).collect();
            let p: Vec<_> = peaks.iter().map(|&(x, y)| Peak::new(x, y, 1.0)).collect();
            let base = position_errors(&t, &p);

            let mut rp = p.clone();
            rp.reverse();
            let mut rt = t.clone();
            rt.reverse();
            let mut rev = position_errors(&rt, &rp);
            rev.reverse();
            prop_assert_eq!(&base, &rev);

            let mut more = p.clone();
            more.push(Peak::new(extra.0, extra.1, 1.0));
            for (a, b) in base.iter().zip(position_errors(&t, &more)) {
                prop_assert!(b.1.unwrap() <= a.1.unwrap());
            }
        }
    }
}
