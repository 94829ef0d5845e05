use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Majority vote among the `k` Euclidean nearest gallery points. Distance
/// ties go to the lower gallery index; vote ties go to the label with the
/// smaller mean neighbor distance, then to the smaller label.
pub fn knn_classify(
    gallery: &Matrix,
    gallery_labels: &[usize],
    probes: &Matrix,
    k: usize,
) -> Result<Vec<usize>> {
    if gallery.rows() == 0 {
        return Err(Error::Config("KNN needs a nonempty gallery".into()));
    }
    if gallery_labels.len() != gallery.rows() {
        return Err(Error::Data(format!(
            "{} gallery labels for {} gallery points",
            gallery_labels.len(),
            gallery.rows()
        )));
    }
    if k == 0 || k > gallery.rows() {
        return Err(Error::Config(format!(
            "k = {k} is invalid for a gallery of {}",
            gallery.rows()
        )));
    }
    if probes.cols() != gallery.cols() {
        return Err(Error::Data(format!(
            "probes have {} features, gallery has {}",
            probes.cols(),
            gallery.cols()
        )));
    }

    let mut dists: Vec<(f64, usize)> = Vec::with_capacity(gallery.rows());
    let predictions = probes
        .row_iter()
        .map(|probe| {
            dists.clear();
            dists.extend(gallery.row_iter().enumerate().map(|(i, g)| {
                let d2: f64 = g.iter().zip(probe).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2.sqrt(), i)
            }));
            dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

            // label -> (votes, summed distance)
            let mut tally: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
            for &(d, i) in &dists[..k] {
                let entry = tally.entry(gallery_labels[i]).or_insert((0, 0.0));
                entry.0 += 1;
                entry.1 += d;
            }
            let mut best: Option<(usize, usize, f64)> = None;
            for (&label, &(votes, total)) in &tally {
                let mean = total / votes as f64;
                let better = match best {
                    None => true,
                    Some((_, bv, bm)) => votes > bv || (votes == bv && mean < bm),
                };
                if better {
                    best = Some((label, votes, mean));
                }
            }
            best.expect("k >= 1").0
        })
        .collect();
    Ok(predictions)
}
