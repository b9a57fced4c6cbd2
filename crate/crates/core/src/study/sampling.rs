use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Latin hypercube sample: each dimension is cut into `n_pop` equal bins and
/// every bin holds exactly one point, jittered uniformly inside it.
pub fn lhs_sample(n_pop: usize, n_dims: usize, range: [f64; 2], seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = (range[1] - range[0]) / n_pop as f64;
    let mut rows = vec![vec![0.0; n_dims]; n_pop];
    for d in 0..n_dims {
        let mut bins: Vec<usize> = (0..n_pop).collect();
        bins.shuffle(&mut rng);
        for (row, &b) in rows.iter_mut().zip(&bins) {
            let u: f64 = rng.gen();
            row[d] = range[0] + width * (b as f64 + u);
        }
    }
    rows
}

/// I.i.d. uniform rows, each sorted in descending order.
pub fn random_sorted_sample(
    n_pop: usize,
    n_dims: usize,
    range: [f64; 2],
    seed: u64,
) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_pop)
        .map(|_| {
            let mut row: Vec<f64> = (0..n_dims).map(|_| rng.gen_range(range[0]..range[1])).collect();
            row.sort_by(|a, b| b.total_cmp(a));
            row
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lhs_fills_every_bin_once() {
        let n = 400;
        let rows = lhs_sample(n, 3, [4.0, 16.0], 11);
        assert_eq!(rows.len(), n);
        let width = 12.0 / n as f64;
        for d in 0..3 {
            let mut hit = vec![0; n];
            for r in &rows {
                assert!((4.0..16.0).contains(&r[d]));
                let b = (((r[d] - 4.0) / width).floor() as usize).min(n - 1);
                hit[b] += 1;
            }
            assert!(hit.iter().all(|&h| h == 1));
        }
    }

    #[test]
    fn lhs_single_point_and_determinism() {
        let one = lhs_sample(1, 2, [4.0, 16.0], 0);
        assert_eq!(one.len(), 1);
        assert!(one[0].iter().all(|x| (4.0..16.0).contains(x)));
        assert_eq!(lhs_sample(50, 3, [0.0, 1.0], 9), lhs_sample(50, 3, [0.0, 1.0], 9));
        assert_ne!(lhs_sample(50, 3, [0.0, 1.0], 9), lhs_sample(50, 3, [0.0, 1.0], 10));
    }

    #[test]
    fn sorted_rows_descend() {
        let rows = random_sorted_sample(200, 4, [4.0, 16.0], 5);
        for r in &rows {
            assert!(r.windows(2).all(|w| w[0] >= w[1]));
        }
        let flat = random_sorted_sample(20, 1, [4.0, 16.0], 5);
        assert!(flat.iter().all(|r| r.len() == 1));
    }

    #[test]
    fn first_marginal_dominates_last() {
        // Mann-Whitney U of d_1 against d_4 at n = 500.
        let rows = random_sorted_sample(500, 4, [4.0, 16.0], 21);
        let mut u = 0.0;
        for a in &rows {
            for b in &rows {
                if a[0] > b[3] {
                    u += 1.0;
                } else if a[0] == b[3] {
                    u += 0.5;
                }
            }
        }
        let auc = u / (500.0 * 500.0);
        assert!(auc > 0.9, "{auc}");
    }
}
