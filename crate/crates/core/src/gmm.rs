//! Peak extraction: fit a Gaussian mixture to the particle positions and read
//! the component means off as the detected maxima of the PHD.

use std::cmp::Ordering;
use std::f64::consts::PI;

use crate::dynamics::WeightedCloud;
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Smallest allowed covariance eigenvalue, in m².
pub const COVARIANCE_FLOOR: f64 = 1.0;
/// Components lighter than this are reinitialized once, then dropped.
pub const DEGENERATE_WEIGHT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmConfig {
    pub max_iter: usize,
    /// Relative change in log-likelihood below which iteration stops.
    pub tol: f64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            max_iter: 50,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: [f64; 2],
    /// Symmetric `[[xx, xy], [xy, yy]]`.
    pub cov: [[f64; 2]; 2],
}

impl Component {
    fn log_density(&self, p: [f64; 2]) -> f64 {
        let [[a, b], [_, c]] = self.cov;
        let det = a * c - b * b;
        let dx = p[0] - self.mean[0];
        let dy = p[1] - self.mean[1];
        let maha = (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
        -0.5 * maha - 0.5 * det.ln() - (2.0 * PI).ln()
    }

    /// Eigenvalues of the covariance, larger first.
    pub fn eigenvalues(&self) -> [f64; 2] {
        sym_eigen(self.cov).0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    pub components: Vec<Component>,
    /// Weighted log-likelihood of the data under the final mixture.
    pub log_likelihood: f64,
    pub iterations: usize,
}

impl GaussianMixture {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Index of the component with the highest responsibility for `p`.
    pub fn assign(&self, p: [f64; 2]) -> usize {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (k, c) in self.components.iter().enumerate() {
            let score = c.weight.ln() + c.log_density(p);
            if score > best_score {
                best_score = score;
                best = k;
            }
        }
        best
    }
}

/// A detected maximum of the PHD.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub x: f64,
    pub y: f64,
    /// Share of the expected target count carried by this component.
    pub mass: f64,
    /// Mass-weighted mean speed of the particles assigned to the component.
    pub speed: Option<f64>,
    /// Circular mean heading of the particles assigned to the component.
    pub heading: Option<f64>,
}

impl Peak {
    pub fn new(x: f64, y: f64, mass: f64) -> Self {
        Self {
            x,
            y,
            mass,
            speed: None,
            heading: None,
        }
    }
}

/// Number of components to fit for a given expected count.
pub fn choose_k(expected_count: f64) -> usize {
    if expected_count > 1e-3 {
        (expected_count.round() as usize).max(1)
    } else {
        0
    }
}

/// Distinct weighted 2-D points, with duplicated positions merged.
struct Points {
    xy: Vec<[f64; 2]>,
    w: Vec<f64>,
}

impl Points {
    fn from_cloud(cloud: &WeightedCloud) -> Self {
        let mut raw: Vec<([f64; 2], f64)> = cloud
            .iter()
            .filter(|(_, w)| *w > 0.0)
            .map(|(s, w)| ([s.x, s.y], w))
            .collect();
        raw.sort_by(|a, b| a.0[0].total_cmp(&b.0[0]).then(a.0[1].total_cmp(&b.0[1])));
        let mut xy: Vec<[f64; 2]> = Vec::with_capacity(raw.len());
        let mut w: Vec<f64> = Vec::with_capacity(raw.len());
        for (p, wt) in raw {
            if xy.last() == Some(&p) {
                *w.last_mut().unwrap() += wt;
            } else {
                xy.push(p);
                w.push(wt);
            }
        }
        let total: f64 = w.iter().sum();
        for v in &mut w {
            *v /= total;
        }
        Self { xy, w }
    }

    fn len(&self) -> usize {
        self.xy.len()
    }
}

/// Fit `k` components by weighted expectation maximization on positions.
pub fn fit(
    cloud: &WeightedCloud,
    k: usize,
    rng: &mut Stream,
    config: &GmmConfig,
) -> Result<GaussianMixture> {
    if k == 0 {
        return Err(Error::invalid("mixture needs at least one component"));
    }
    let points = Points::from_cloud(cloud);
    if points.len() < k {
        return Err(Error::TooFewPoints {
            requested: k,
            available: points.len(),
        });
    }

    let mut components = initialize(&points, k, rng);
    let mut reinitialized = vec![false; k];
    let mut resp = vec![0.0; points.len() * k];
    let mut prev_ll = e_step(&points, &components, &mut resp);
    let mut iterations = 0;
    let mut ll = prev_ll;

    while iterations < config.max_iter {
        iterations += 1;
        m_step(&points, &mut components, &resp);

        let restructured = handle_degenerate(&points, &mut components, &mut reinitialized);
        if restructured {
            resp.resize(points.len() * components.len(), 0.0);
        }
        ll = e_step(&points, &components, &mut resp);
        if !restructured {
            debug_assert!(
                ll >= prev_ll - 1e-9 * prev_ll.abs().max(1.0),
                "EM log-likelihood decreased: {prev_ll} -> {ll}"
            );
            if (ll - prev_ll).abs() <= config.tol * prev_ll.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
        prev_ll = ll;
    }

    Ok(GaussianMixture {
        components,
        log_likelihood: ll,
        iterations,
    })
}

/// Seeded greedy k-means++ selection of means: each new center is the best of
/// a few distance-weighted draws, judged by the weighted squared distance
/// that remains. Covariances and weights come from a hard assignment to the
/// nearest center.
fn initialize(points: &Points, k: usize, rng: &mut Stream) -> Vec<Component> {
    let n = points.len();
    let trials = 2 + (k as f64).ln() as usize;
    let mut centers: Vec<[f64; 2]> = Vec::with_capacity(k);
    centers.push(points.xy[draw_index(&points.w, rng)]);
    let mut d2: Vec<f64> = points.xy.iter().map(|p| dist2(*p, centers[0])).collect();
    while centers.len() < k {
        let score: Vec<f64> = points.w.iter().zip(&d2).map(|(w, d)| w * d).collect();
        let next = if score.iter().any(|s| *s > 0.0) {
            let potential = |c: [f64; 2]| -> f64 {
                points
                    .xy
                    .iter()
                    .zip(&points.w)
                    .zip(&d2)
                    .map(|((p, w), d)| w * d.min(dist2(*p, c)))
                    .sum()
            };
            let mut best = draw_index(&score, rng);
            let mut best_potential = potential(points.xy[best]);
            for _ in 1..trials {
                let i = draw_index(&score, rng);
                let pot = potential(points.xy[i]);
                if pot < best_potential {
                    best = i;
                    best_potential = pot;
                }
            }
            best
        } else {
            // Every remaining point coincides with a center; take the first unused one.
            (0..n)
                .find(|&i| !centers.contains(&points.xy[i]))
                .unwrap_or(0)
        };
        let c = points.xy[next];
        centers.push(c);
        for (d, p) in d2.iter_mut().zip(&points.xy) {
            *d = d.min(dist2(*p, c));
        }
    }

    let mut sums = vec![(0.0, [0.0; 2], [0.0; 3]); k];
    for (p, &w) in points.xy.iter().zip(&points.w) {
        let j = (0..k)
            .min_by(|&a, &b| dist2(*p, centers[a]).total_cmp(&dist2(*p, centers[b])))
            .unwrap();
        let s = &mut sums[j];
        s.0 += w;
        s.1[0] += w * p[0];
        s.1[1] += w * p[1];
    }
    for (p, &w) in points.xy.iter().zip(&points.w) {
        let j = (0..k)
            .min_by(|&a, &b| dist2(*p, centers[a]).total_cmp(&dist2(*p, centers[b])))
            .unwrap();
        let s = &mut sums[j];
        if s.0 > 0.0 {
            let mx = s.1[0] / s.0;
            let my = s.1[1] / s.0;
            s.2[0] += w * (p[0] - mx) * (p[0] - mx);
            s.2[1] += w * (p[0] - mx) * (p[1] - my);
            s.2[2] += w * (p[1] - my) * (p[1] - my);
        }
    }
    let floor_weight = 1e-3 / k as f64;
    let comps = centers
        .iter()
        .zip(&sums)
        .map(|(c, (w, m, s))| {
            if *w > 0.0 {
                Component {
                    weight: w.max(floor_weight),
                    mean: [m[0] / w, m[1] / w],
                    cov: floor_covariance([[s[0] / w, s[1] / w], [s[1] / w, s[2] / w]]),
                }
            } else {
                Component {
                    weight: floor_weight,
                    mean: *c,
                    cov: floor_covariance([[0.0, 0.0], [0.0, 0.0]]),
                }
            }
        })
        .collect();
    normalize_weights(comps)
}

fn normalize_weights(mut comps: Vec<Component>) -> Vec<Component> {
    let total: f64 = comps.iter().map(|c| c.weight).sum();
    for c in &mut comps {
        c.weight /= total;
    }
    comps
}

/// Fill responsibilities and return the weighted log-likelihood.
fn e_step(points: &Points, comps: &[Component], resp: &mut [f64]) -> f64 {
    let k = comps.len();
    let log_w: Vec<f64> = comps.iter().map(|c| c.weight.ln()).collect();
    let mut ll = 0.0;
    for (j, (p, &w)) in points.xy.iter().zip(&points.w).enumerate() {
        let row = &mut resp[j * k..(j + 1) * k];
        let mut max = f64::NEG_INFINITY;
        for (r, (c, lw)) in row.iter_mut().zip(comps.iter().zip(&log_w)) {
            *r = lw + c.log_density(*p);
            max = max.max(*r);
        }
        let mut sum = 0.0;
        for r in row.iter_mut() {
            *r = (*r - max).exp();
            sum += *r;
        }
        for r in row.iter_mut() {
            *r /= sum;
        }
        ll += w * (max + sum.ln());
    }
    ll
}

fn m_step(points: &Points, comps: &mut [Component], resp: &[f64]) {
    let k = comps.len();
    for (i, comp) in comps.iter_mut().enumerate() {
        let mut nk = 0.0;
        let mut mx = 0.0;
        let mut my = 0.0;
        for (j, (p, &w)) in points.xy.iter().zip(&points.w).enumerate() {
            let r = w * resp[j * k + i];
            nk += r;
            mx += r * p[0];
            my += r * p[1];
        }
        comp.weight = nk;
        if !(nk > 0.0) {
            continue;
        }
        mx /= nk;
        my /= nk;
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for (j, (p, &w)) in points.xy.iter().zip(&points.w).enumerate() {
            let r = w * resp[j * k + i];
            let dx = p[0] - mx;
            let dy = p[1] - my;
            sxx += r * dx * dx;
            sxy += r * dx * dy;
            syy += r * dy * dy;
        }
        comp.mean = [mx, my];
        comp.cov = floor_covariance([[sxx / nk, sxy / nk], [sxy / nk, syy / nk]]);
    }
}

/// Reinitialize a degenerate component once, drop it the second time.
/// Returns true when the mixture changed shape or content.
fn handle_degenerate(
    points: &Points,
    comps: &mut Vec<Component>,
    reinitialized: &mut Vec<bool>,
) -> bool {
    let mut changed = false;
    let mut i = 0;
    while i < comps.len() {
        if comps[i].weight >= DEGENERATE_WEIGHT {
            i += 1;
            continue;
        }
        changed = true;
        if reinitialized[i] || comps.len() == 1 {
            comps.remove(i);
            reinitialized.remove(i);
            continue;
        }
        // Restart at the point least explained by the other components.
        let others: Vec<[f64; 2]> = comps
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, c)| c.mean)
            .collect();
        let far = (0..points.len())
            .max_by(|&a, &b| {
                let da = points.w[a]
                    * others
                        .iter()
                        .map(|m| dist2(points.xy[a], *m))
                        .fold(f64::INFINITY, f64::min);
                let db = points.w[b]
                    * others
                        .iter()
                        .map(|m| dist2(points.xy[b], *m))
                        .fold(f64::INFINITY, f64::min);
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .unwrap_or(0);
        comps[i] = Component {
            weight: 1.0 / (comps.len() as f64),
            mean: points.xy[far],
            cov: comps
                .iter()
                .map(|c| c.cov)
                .max_by(|a, b| (a[0][0] + a[1][1]).total_cmp(&(b[0][0] + b[1][1])))
                .unwrap(),
        };
        reinitialized[i] = true;
        i += 1;
    }
    if changed && !comps.is_empty() {
        let total: f64 = comps.iter().map(|c| c.weight).sum();
        for c in comps.iter_mut() {
            c.weight /= total;
        }
    }
    changed
}

/// One peak per component, `mass = weight * expected_count`, heaviest first.
pub fn extract_peaks(mixture: &GaussianMixture, expected_count: f64) -> Vec<Peak> {
    let mut peaks: Vec<Peak> = mixture
        .components
        .iter()
        .map(|c| Peak::new(c.mean[0], c.mean[1], c.weight * expected_count))
        .collect();
    peaks.sort_by(|a, b| b.mass.partial_cmp(&a.mass).unwrap_or(Ordering::Equal));
    peaks
}

/// Mass-weighted speed and circular-mean heading of the particles assigned to
/// each component, in component order.
pub fn component_kinematics(
    mixture: &GaussianMixture,
    cloud: &WeightedCloud,
) -> Vec<Option<(f64, f64)>> {
    let k = mixture.len();
    let mut acc = vec![(0.0, 0.0, 0.0, 0.0); k];
    for (s, w) in cloud.iter() {
        if !(w > 0.0) {
            continue;
        }
        let j = mixture.assign([s.x, s.y]);
        let a = &mut acc[j];
        a.0 += w;
        a.1 += w * s.speed;
        a.2 += w * s.heading.sin();
        a.3 += w * s.heading.cos();
    }
    acc.into_iter()
        .map(|(w, sp, sn, cs)| (w > 0.0).then(|| (sp / w, sn.atan2(cs))))
        .collect()
}

/// Choose `k`, fit, and return peaks annotated with speed and heading.
///
/// Returns no mixture and no peaks when the expected count is negligible.
pub fn detect_peaks(
    cloud: &WeightedCloud,
    expected_count: f64,
    rng: &mut Stream,
    config: &GmmConfig,
) -> Result<(Option<GaussianMixture>, Vec<Peak>)> {
    let mut k = choose_k(expected_count);
    if k == 0 || cloud.is_empty() {
        return Ok((None, Vec::new()));
    }
    let distinct = Points::from_cloud(cloud).len();
    if distinct == 0 {
        return Ok((None, Vec::new()));
    }
    k = k.min(distinct);
    let mixture = fit(cloud, k, rng, config)?;
    let kinematics = component_kinematics(&mixture, cloud);
    let mut peaks: Vec<(Peak, usize)> = mixture
        .components
        .iter()
        .enumerate()
        .map(|(i, c)| {
            (
                Peak::new(c.mean[0], c.mean[1], c.weight * expected_count),
                i,
            )
        })
        .collect();
    peaks.sort_by(|a, b| b.0.mass.partial_cmp(&a.0.mass).unwrap_or(Ordering::Equal));
    let peaks = peaks
        .into_iter()
        .map(|(mut p, i)| {
            if let Some((speed, heading)) = kinematics[i] {
                p.speed = Some(speed);
                p.heading = Some(heading);
            }
            p
        })
        .collect();
    Ok((Some(mixture), peaks))
}

fn draw_index(weights: &[f64], rng: &mut Stream) -> usize {
    let total: f64 = weights.iter().sum();
    let target = rng.uniform() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if acc > target && *w > 0.0 {
            return i;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

#[inline]
fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Eigenvalues (descending) and the unit eigenvector of the larger one.
fn sym_eigen(m: [[f64; 2]; 2]) -> ([f64; 2], [f64; 2]) {
    let a = m[0][0];
    let b = m[0][1];
    let c = m[1][1];
    let half_tr = 0.5 * (a + c);
    let r = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let l1 = half_tr + r;
    let l2 = half_tr - r;
    // Principal axis angle; stable for any off-diagonal magnitude.
    let (sin, cos) = (0.5 * (2.0 * b).atan2(a - c)).sin_cos();
    let v = [cos, sin];
    ([l1, l2], v)
}

/// Clip eigenvalues below [`COVARIANCE_FLOOR`], keeping eigenvectors.
fn floor_covariance(m: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let ([l1, l2], [vx, vy]) = sym_eigen(m);
    if l2 >= COVARIANCE_FLOOR {
        return m;
    }
    let l1 = l1.max(COVARIANCE_FLOOR);
    let l2 = l2.max(COVARIANCE_FLOOR);
    // Second eigenvector is (-vy, vx).
    [
        [l1 * vx * vx + l2 * vy * vy, (l1 - l2) * vx * vy],
        [(l1 - l2) * vx * vy, l1 * vy * vy + l2 * vx * vx],
    ]
}
