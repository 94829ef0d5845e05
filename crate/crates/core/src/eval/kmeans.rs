use super::Partition;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

const MAX_ITERATIONS: usize = 300;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub partition: Partition,
    pub centroids: Matrix,
    /// Sum of squared distances to the assigned centroids.
    pub inertia: f64,
    /// Inertia after every assignment step of the winning restart.
    pub inertia_trace: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.row_iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means++ seeding: the first center uniformly, each next one with
/// probability proportional to its squared distance from the chosen set.
fn seed_centers(points: &Matrix, k: usize, rng: &mut Rng) -> Matrix {
    let n = points.rows();
    let mut centers = Matrix::zeros(k, points.cols());
    centers.row_mut(0).copy_from_slice(points.row(rng.below(n)));
    let mut dist: Vec<f64> = points
        .row_iter()
        .map(|p| sq_dist(p, centers.row(0)))
        .collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.uniform() * total;
            let mut chosen = n - 1;
            for (i, d) in dist.iter().enumerate() {
                if target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.below(n)
        };
        centers.row_mut(c).copy_from_slice(points.row(pick));
        for (i, p) in points.row_iter().enumerate() {
            dist[i] = dist[i].min(sq_dist(p, centers.row(c)));
        }
    }
    centers
}

fn assign(points: &Matrix, centroids: &Matrix) -> (Vec<usize>, f64) {
    let mut inertia = 0.0;
    let labels = points
        .row_iter()
        .map(|p| {
            let (c, d) = nearest(p, centroids);
            inertia += d;
            c
        })
        .collect();
    (labels, inertia)
}

/// Recomputes means; an empty cluster takes the point farthest from its
/// own centroid, drawn from a cluster that can spare one.
fn update(points: &Matrix, labels: &mut [usize], k: usize) -> Matrix {
    let dims = points.cols();
    loop {
        let mut sums = Matrix::zeros(k, dims);
        let mut counts = vec![0usize; k];
        for (p, &l) in points.row_iter().zip(labels.iter()) {
            counts[l] += 1;
            for (s, x) in sums.row_mut(l).iter_mut().zip(p) {
                *s += x;
            }
        }
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                let inv = 1.0 / count as f64;
                sums.row_mut(c).iter_mut().for_each(|s| *s *= inv);
            }
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return sums;
        };
        let donor = points
            .row_iter()
            .enumerate()
            .filter(|(i, _)| counts[labels[*i]] > 1)
            .map(|(i, p)| (i, sq_dist(p, sums.row(labels[i]))))
            .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            });
        match donor {
            Some((i, _)) => labels[i] = empty,
            // Fewer distinct points than clusters cannot happen with k <= n,
            // but never loop forever.
            None => return sums,
        }
    }
}

fn lloyd(points: &Matrix, k: usize, rng: &mut Rng) -> KMeansResult {
    let mut centroids = seed_centers(points, k, rng);
    let (mut labels, mut inertia) = assign(points, &centroids);
    let mut trace = vec![inertia];
    for _ in 0..MAX_ITERATIONS {
        centroids = update(points, &mut labels, k);
        let (next, next_inertia) = assign(points, &centroids);
        trace.push(next_inertia);
        inertia = next_inertia;
        if next == labels {
            break;
        }
        labels = next;
    }
    // Hitting the iteration cap can leave the last assignment with an
    // empty cluster; repair and settle the centroids on the final labels.
    centroids = update(points, &mut labels, k);
    let settled: f64 = points
        .row_iter()
        .zip(&labels)
        .map(|(p, &l)| sq_dist(p, centroids.row(l)))
        .sum();
    if settled != inertia {
        inertia = settled;
        trace.push(settled);
    }
    KMeansResult {
        partition: Partition {
            assignments: labels,
            k,
        },
        centroids,
        inertia,
        inertia_trace: trace,
    }
}

/// k-means++ seeded Lloyd iterations, keeping the restart with the lowest
/// inertia.
pub fn kmeans(points: &Matrix, k: usize, restarts: usize, seed: u64) -> Result<KMeansResult> {
    if k == 0 || k > points.rows() {
        return Err(Error::Config(format!(
            "k = {k} clusters is invalid for {} points",
            points.rows()
        )));
    }
    if restarts == 0 {
        return Err(Error::Config("k-means needs at least one restart".into()));
    }
    let mut rng = Rng::new(seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..restarts {
        let run = lloyd(points, k, &mut rng.fork());
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}
