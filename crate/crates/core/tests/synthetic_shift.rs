//! A ridge regression fit on the source domain must transfer measurably
//! worse to the target domain than to held-out source instances.

use lrppo::data::{generate_transfer_pair, RankingInstance, SyntheticConfig};
use lrppo::eval::mean_ndcg;

#[allow(clippy::needless_range_loop)]
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Ridge weights (with intercept) regressing grades on features.
fn ridge(train: &[RankingInstance], lambda: f64) -> Vec<f64> {
    let d = train[0].items[0].features.len() + 1;
    let mut xtx = vec![vec![0.0; d]; d];
    let mut xty = vec![0.0; d];
    for item in train.iter().flat_map(|i| &i.items) {
        let mut x = item.features.clone();
        x.push(1.0);
        let y = f64::from(item.relevance.unwrap());
        for i in 0..d {
            xty[i] += x[i] * y;
            for j in 0..d {
                xtx[i][j] += x[i] * x[j];
            }
        }
    }
    for (i, row) in xtx.iter_mut().enumerate().take(d - 1) {
        row[i] += lambda;
    }
    solve(xtx, xty)
}

#[test]
fn source_fit_degrades_on_target() {
    for seed in 0..3 {
        let gen = SyntheticConfig { seed, ..Default::default() };
        let (source, target) = generate_transfer_pair(&gen, 200, 200).unwrap();
        let (fit, held) = source.split_at(160);
        let w = ridge(fit, 1.0);
        let score = |features: &[f64]| -> lrppo::Result<f64> {
            Ok(features.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() + w[w.len() - 1])
        };
        let on_source = mean_ndcg(held, &[5], |it| score(&it.features)).unwrap()[0];
        let on_target = mean_ndcg(&target, &[5], |it| score(&it.features)).unwrap()[0];
        assert!(
            on_source - on_target >= 0.05,
            "seed {seed}: source {on_source:.4}, target {on_target:.4}"
        );
    }
}
