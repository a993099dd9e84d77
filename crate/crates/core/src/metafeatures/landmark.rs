use super::{push_six, six_names};
use crate::data::Dataset;
use crate::detectors::hbos::hbos;
use crate::detectors::iforest::IsolationForest;
use crate::detectors::loda::loda;
use crate::detectors::pca::pca_reconstruction;
use crate::error::{Error, Result};
use crate::seed;
use crate::stats::{mean, quantile_sorted, sorted, std_dev};

pub const LANDMARKER_LEN: usize = 24 + 12 + 24 + 6 + 4 * 8;

const IFOREST_TREES: usize = 100;
const HBOS_BINS: usize = 10;
const HBOS_TOLERANCE: f64 = 0.5;
const LODA_BINS: usize = 100;
const LODA_CUTS: usize = 100;

const TAG_IFOREST: u64 = 0x6c6d_6966;
const TAG_LODA: u64 = 0x6c6d_6c64;

const SCORED: [&str; 4] = ["iforest", "hbos", "loda", "pca"];

pub fn landmarker_names() -> Vec<String> {
    let mut names = Vec::new();
    for block in [
        "iforest_depth",
        "iforest_leaves",
        "iforest_importance_mean",
        "iforest_importance_max",
        "hbos_density_mean",
        "hbos_density_max",
        "loda_weight_mean",
        "loda_weight_max",
        "loda_density_mean",
        "loda_density_max",
    ] {
        six_names(&mut names, block);
    }
    names.extend((1..=3).map(|i| format!("pca_ev_ratio_{i}")));
    names.extend((1..=3).map(|i| format!("pca_singular_value_{i}")));
    for d in SCORED {
        six_names(&mut names, &format!("{d}_score"));
        names.push(format!("{d}_score_dispersion"));
        names.push(format!("{d}_score_max_gap"));
    }
    names
}

/// Landmarker block: structure of fitted IFOREST, HBOS, LODA and PCA models
/// plus summaries of their standardized scores.
pub fn extract_landmarker(data: &Dataset, seed: u64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(LANDMARKER_LEN);

    let forest = IsolationForest::fit(data, IFOREST_TREES, 1.0, seed::mix(&[seed, TAG_IFOREST]));
    let stats = forest.tree_stats();
    let depth: Vec<f64> = stats.iter().map(|t| t.depth as f64).collect();
    let leaves: Vec<f64> = stats.iter().map(|t| t.leaves as f64).collect();
    let imp_mean: Vec<f64> = stats.iter().map(|t| mean(&t.importance)).collect();
    let imp_max: Vec<f64> = stats.iter().map(|t| max_of(&t.importance)).collect();
    push_six(&mut out, &depth);
    push_six(&mut out, &leaves);
    push_six(&mut out, &imp_mean);
    push_six(&mut out, &imp_max);
    let iforest_scores = forest.score(data);

    let h = hbos(data, HBOS_BINS, HBOS_TOLERANCE);
    let d_mean: Vec<f64> = h.densities.iter().map(|d| mean(d)).collect();
    let d_max: Vec<f64> = h.densities.iter().map(|d| max_of(d)).collect();
    push_six(&mut out, &d_mean);
    push_six(&mut out, &d_max);

    let l = loda(data, LODA_BINS, LODA_CUTS, seed::mix(&[seed, TAG_LODA]));
    let w_abs: Vec<Vec<f64>> = l
        .projections
        .iter()
        .map(|w| w.iter().map(|v| v.abs()).collect())
        .collect();
    push_six(&mut out, &w_abs.iter().map(|w| mean(w)).collect::<Vec<_>>());
    push_six(
        &mut out,
        &w_abs.iter().map(|w| max_of(w)).collect::<Vec<_>>(),
    );
    push_six(
        &mut out,
        &l.densities.iter().map(|d| mean(d)).collect::<Vec<_>>(),
    );
    push_six(
        &mut out,
        &l.densities.iter().map(|d| max_of(d)).collect::<Vec<_>>(),
    );

    // All-constant data has no principal components: the PCA slots stay NaN.
    let pca_scores = match pca_reconstruction(data) {
        Ok(pca) => {
            for i in 0..3 {
                out.push(pca.explained_ratio.get(i).copied().unwrap_or(f64::NAN));
            }
            for i in 0..3 {
                out.push(pca.singular_values.get(i).copied().unwrap_or(f64::NAN));
            }
            Some(pca.scores)
        }
        Err(Error::DegenerateDataset(_)) => {
            out.extend_from_slice(&[f64::NAN; 6]);
            None
        }
        Err(e) => return Err(e),
    };

    score_block(&mut out, Some(&iforest_scores));
    score_block(&mut out, Some(&h.scores));
    score_block(&mut out, Some(&l.scores));
    score_block(&mut out, pca_scores.as_deref());

    debug_assert_eq!(out.len(), LANDMARKER_LEN);
    Ok(out)
}

fn max_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NAN, f64::max)
}

/// Six statistics of the z-scored scores, their std / IQR and the largest gap
/// between consecutive sorted values.
fn score_block(out: &mut Vec<f64>, scores: Option<&[f64]>) {
    let Some(scores) = scores else {
        out.extend_from_slice(&[f64::NAN; 8]);
        return;
    };
    let s = sorted(scores);
    let mu = mean(&s);
    let sd = std_dev(&s);
    let z: Vec<f64> = if sd > 0.0 {
        s.iter().map(|v| (v - mu) / sd).collect()
    } else {
        vec![0.0; s.len()]
    };
    push_six(out, &z);
    let iqr = quantile_sorted(&z, 0.75) - quantile_sorted(&z, 0.25);
    out.push(if iqr > 0.0 {
        std_dev(&z) / iqr
    } else {
        f64::NAN
    });
    out.push(z.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max));
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slot(v: &[f64], name: &str) -> f64 {
        v[landmarker_names().iter().position(|n| n == name).unwrap()]
    }

    fn line(values: &[f64]) -> Dataset {
        let rows: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
        Dataset::from_rows("line", &rows, None).unwrap()
    }

    #[test]
    fn pca_slots_nan_for_two_features() {
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![i as f64, ((i * 7) % 5) as f64])
            .collect();
        let d = Dataset::from_rows("two", &rows, None).unwrap();
        let v = extract_landmarker(&d, 0).unwrap();
        assert!(slot(&v, "pca_ev_ratio_3").is_nan());
        assert!(slot(&v, "pca_ev_ratio_1").is_finite());
        assert_eq!(v.len(), LANDMARKER_LEN);
    }

    #[test]
    fn isolated_point_shortens_trees() {
        // Many duplicates plus one far point: trees stop early on the duplicates.
        let mut spiked = vec![0.0; 299];
        spiked.push(1000.0);
        let uniform: Vec<f64> = (0..300).map(|i| i as f64 / 300.0).collect();
        let a = extract_landmarker(&line(&spiked), 5).unwrap();
        let b = extract_landmarker(&line(&uniform), 5).unwrap();
        assert!(slot(&a, "iforest_depth_mean") <= slot(&b, "iforest_depth_mean"));
    }

    #[test]
    fn hbos_and_pca_slots_ignore_row_order() {
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| {
                let t = i as f64;
                vec![t, 2.0 * t + (i % 3) as f64, (i * i % 13) as f64 * 0.01 - t]
            })
            .collect();
        let mut permuted = rows.clone();
        permuted.reverse();
        let a = Dataset::from_rows("a", &rows, None).unwrap();
        let b = Dataset::from_rows("b", &permuted, None).unwrap();
        let va = extract_landmarker(&a, 2).unwrap();
        let vb = extract_landmarker(&b, 2).unwrap();
        let names = landmarker_names();
        for (i, name) in names.iter().enumerate() {
            if name.starts_with("hbos") {
                assert_eq!(va[i].to_bits(), vb[i].to_bits(), "{name}");
            } else if name.starts_with("pca") {
                assert!(
                    (va[i] - vb[i]).abs() <= 1e-9 * va[i].abs().max(1.0),
                    "{name} {} {}",
                    va[i],
                    vb[i]
                );
            }
        }
    }

    #[test]
    fn constant_data_marks_pca_block() {
        let d = line(&[3.0; 10]);
        let v = extract_landmarker(&d, 1).unwrap();
        assert!(slot(&v, "pca_singular_value_1").is_nan());
        assert!(slot(&v, "pca_score_max_gap").is_nan());
    }
}
