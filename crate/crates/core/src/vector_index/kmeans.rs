//! Seeded spherical k-means (k-means++ seeding, Lloyd iterations) over unit vectors.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dot;
use crate::embedder::l2_normalize;

/// Index of the centroid with the highest dot product; ties go to the lowest index.
pub(crate) fn nearest(centroids: &[f32], dim: usize, v: &[f32]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
        let s = dot(v, centroid);
        if s > best.1 {
            best = (c, s);
        }
    }
    best
}

/// Trains `nlist` unit centroids on `vectors` (row-major, `dim` wide).
///
/// When there are more than `max_train_per_list * nlist` rows, a seeded uniform sample of
/// that size is used for training.
pub(crate) fn train(
    vectors: &[f32],
    dim: usize,
    nlist: usize,
    iters: usize,
    seed: u64,
    max_train_per_list: usize,
) -> Vec<f32> {
    let n = vectors.len() / dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cap = max_train_per_list.max(1).saturating_mul(nlist);
    let train_ids: Vec<usize> = if n > cap {
        let mut ids = sample(&mut rng, n, cap).into_vec();
        ids.sort_unstable();
        ids
    } else {
        (0..n).collect()
    };
    let row = |i: usize| &vectors[i * dim..(i + 1) * dim];
    let m = train_ids.len();

    // k-means++ seeding with squared chord distance 2 - 2cos.
    let mut chosen = Vec::with_capacity(nlist);
    let mut centroids = Vec::with_capacity(nlist * dim);
    let first = rng.gen_range(0..m);
    chosen.push(first);
    centroids.extend_from_slice(row(train_ids[first]));
    let mut d2: Vec<f64> = train_ids
        .iter()
        .map(|&i| (2.0 - 2.0 * dot(row(i), row(train_ids[first]))).max(0.0))
        .collect();
    while chosen.len() < nlist {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = None;
            for (j, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(j);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total weight")
        } else {
            // All remaining points coincide with a centroid: take any unused one.
            let unused: Vec<usize> = (0..m).filter(|j| !chosen.contains(j)).collect();
            unused[rng.gen_range(0..unused.len())]
        };
        chosen.push(next);
        let c = row(train_ids[next]).to_vec();
        for (j, &i) in train_ids.iter().enumerate() {
            let d = (2.0 - 2.0 * dot(row(i), &c)).max(0.0);
            if d < d2[j] {
                d2[j] = d;
            }
        }
        centroids.extend_from_slice(&c);
    }

    let mut assign = vec![usize::MAX; m];
    for _ in 0..iters {
        let mut changed = false;
        let mut sims = vec![0f64; m];
        for (j, &i) in train_ids.iter().enumerate() {
            let (c, s) = nearest(&centroids, dim, row(i));
            if assign[j] != c {
                assign[j] = c;
                changed = true;
            }
            sims[j] = s;
        }
        if !changed {
            break;
        }
        let mut sums = vec![0f64; nlist * dim];
        let mut counts = vec![0usize; nlist];
        for (j, &i) in train_ids.iter().enumerate() {
            let c = assign[j];
            counts[c] += 1;
            for (acc, &x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(row(i)) {
                *acc += f64::from(x);
            }
        }
        // Empty clusters take the worst-fitting training points, in ascending similarity.
        let mut worst: Vec<usize> = (0..m).collect();
        worst.sort_by(|&a, &b| sims[a].total_cmp(&sims[b]).then(a.cmp(&b)));
        let mut donors = worst.into_iter();
        for c in 0..nlist {
            let target = &mut centroids[c * dim..(c + 1) * dim];
            if counts[c] == 0 {
                if let Some(j) = donors.next() {
                    target.copy_from_slice(row(train_ids[j]));
                }
                continue;
            }
            let mut v: Vec<f32> = sums[c * dim..(c + 1) * dim]
                .iter()
                .map(|&x| (x / counts[c] as f64) as f32)
                .collect();
            if l2_normalize(&mut v) {
                target.copy_from_slice(&v);
            }
        }
    }
    centroids
}
