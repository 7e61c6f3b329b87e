mod common;

use common::values;
use mktcube::segnet::{pca_fit, reconstruction_mse, train_autoencoder, AeTrainConfig, SegNet, SegNetConfig, SegNetError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.partial_cmp(x).unwrap());
    ev
}

fn dataset(seed: u64, rows: usize, p: usize) -> Vec<Vec<f64>> {
    let v = values(seed, rows * p, -1.0, 1.0);
    // correlated columns so the spectrum is spread out
    (0..rows)
        .map(|i| (0..p).map(|j| v[i * p + j] + 0.5 * v[i * p + (j + 1) % p] * (j as f64 + 1.0) / p as f64).collect())
        .collect()
}

#[test]
fn explained_variance_matches_jacobi_eigenvalues() {
    let (n, p) = (60, 9);
    let data = dataset(1, n, p);
    let rows: Vec<&[f64]> = data.iter().map(Vec::as_slice).collect();
    let mean: Vec<f64> = (0..p).map(|j| data.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let cov: Vec<Vec<f64>> = (0..p)
        .map(|a| (0..p).map(|b| data.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / n as f64).collect())
        .collect();
    let ev = jacobi_eigenvalues(cov);
    let total: f64 = ev.iter().sum();
    for k in 1..=p {
        let pca = pca_fit(&rows, k).unwrap();
        let captured: f64 = pca.singular_values.iter().map(|s| s * s / n as f64).sum();
        let want: f64 = ev[..k].iter().sum();
        assert!((captured - want).abs() < 1e-10 * total, "k={k}: {captured} vs {want}");
        // residual per element is the discarded variance spread over p columns
        let resid = pca.reconstruction_mse(&rows);
        assert!((resid - (total - want) / p as f64).abs() < 1e-10 * total);
    }
}

#[test]
fn low_rank_data_is_recovered_exactly() {
    let (n, p, r) = (40, 12, 3);
    let z = values(2, n * r, -1.0, 1.0);
    let basis = values(3, r * p, -1.0, 1.0);
    let data: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..p).map(|j| 0.3 + (0..r).map(|a| z[i * r + a] * basis[a * p + j]).sum::<f64>()).collect())
        .collect();
    let rows: Vec<&[f64]> = data.iter().map(Vec::as_slice).collect();
    assert!(pca_fit(&rows, r).unwrap().reconstruction_mse(&rows) < 1e-24);
    assert!(pca_fit(&rows, r - 1).unwrap().reconstruction_mse(&rows) > 1e-6);
}

#[test]
fn pca_error_falls_with_more_components() {
    let data = dataset(4, 50, 10);
    let rows: Vec<&[f64]> = data.iter().map(Vec::as_slice).collect();
    let errs: Vec<f64> = (1..=10).map(|k| pca_fit(&rows, k).unwrap().reconstruction_mse(&rows)).collect();
    assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    assert!(errs[9] < 1e-24);
}

fn small_cfg(k: usize) -> SegNetConfig {
    SegNetConfig { channels: vec![4, 6, 8], grid: 4, embedding_dim: k, init_bound: 0.3, ..Default::default() }
}

#[test]
fn reconstruction_keeps_image_shape() {
    let n = 5;
    let net = SegNet::new(small_cfg(3), n, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    for m in [8, 9, 13, 20, 33] {
        let img = values(m as u64, m * n, -1.0, 1.0);
        let enc = net.encode(&img, m).unwrap();
        assert_eq!(enc.embedding.len(), 3);
        assert_eq!(enc.records.len(), 3);
        assert_eq!(net.reconstruct(&img, m).unwrap().len(), m * n);
    }
}

#[test]
fn bad_inputs_are_rejected() {
    let net = SegNet::new(small_cfg(3), 5, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert!(matches!(net.encode(&[0.0; 35], 7), Err(SegNetError::TooFewStocks { m: 7, reduction: 8 })));
    assert!(matches!(net.encode(&[0.0; 41], 8), Err(SegNetError::ImageShape { .. })));
    let enc = net.encode(&[0.5; 40], 8).unwrap();
    assert!(matches!(net.decode(&[0.0; 2], &enc.records), Err(SegNetError::EmbeddingLength { .. })));
    assert!(matches!(net.decode(&enc.embedding, &enc.records[1..]), Err(SegNetError::RecordCount { .. })));
    let big: Vec<f64> = (0..40).map(|i| 1e6 * (i as f64).sin()).collect();
    assert!(net.reconstruct(&big, 8).unwrap().iter().all(|v| v.is_finite()));
    assert!(pca_fit::<f64>(&[], 1).is_err());
}

#[test]
fn zero_network_decodes_zero_embedding_to_zero() {
    let mut net = SegNet::new(small_cfg(3), 4, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    for id in net.store.ids().collect::<Vec<_>>() {
        net.store.get_mut(id).data_mut().fill(0.0);
    }
    let enc = net.encode(&values(5, 48, -1.0, 1.0), 12).unwrap();
    let out = net.decode(&[0.0; 3], &enc.records).unwrap();
    assert_eq!(out, vec![0.0; 48]);
}

#[test]
fn pool_positions_carry_information() {
    let m = 16;
    let img = values(6, m * 4, 0.0, 1.0);
    let out = train_autoencoder(&[&img], m, &small_cfg(4), &AeTrainConfig { steps: 300, learning_rate: 1e-2, ..Default::default() }).unwrap();
    let enc = out.net.encode(&img, m).unwrap();
    let full = out.net.decode(&enc.embedding, &enc.records).unwrap();
    let ablated = enc.ablated();
    let blind = out.net.decode(&ablated.embedding, &ablated.records).unwrap();
    let err = |r: &[f64]| r.iter().zip(&img).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    assert!(err(&full) < err(&blind), "ablation did not hurt: {} vs {}", err(&full), err(&blind));
}

#[test]
fn checkpoint_round_trip_preserves_reconstructions() {
    let net = SegNet::new(small_cfg(3), 4, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let back = SegNet::from_checkpoint(&net.checkpoint()).unwrap();
    let img = values(7, 40, -1.0, 1.0);
    assert_eq!(net.reconstruct(&img, 10).unwrap(), back.reconstruct(&img, 10).unwrap());
    assert_eq!(reconstruction_mse(&net, &[&img], 10).unwrap(), reconstruction_mse(&back, &[&img], 10).unwrap());
}

#[test]
fn zero_weights_decode_to_the_output_bias() {
    let mut net = SegNet::new(small_cfg(3), 4, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    for id in net.store.ids().collect::<Vec<_>>() {
        if net.store.name(id).ends_with(".w") {
            net.store.get_mut(id).data_mut().fill(0.0);
        }
    }
    let bias = net.store.get(net.store.find("dec0.b").unwrap()).data().to_vec();
    let enc = net.encode(&values(9, 48, -1.0, 1.0), 12).unwrap();
    let out = net.decode(&[0.0; 3], &enc.records).unwrap();
    for row in out.chunks(4) {
        assert_eq!(row, bias.as_slice());
    }
}

#[test]
fn embeddings_have_the_configured_length_and_are_stable() {
    let (m, n) = (20, 40);
    let img = values(10, m * n, 0.0, 1.0);
    let noise = values(11, m * n, -1.0, 1.0);
    let nudged: Vec<f64> = img.iter().zip(&noise).map(|(a, e)| a + 1e-6 * e).collect();
    for k in [16, 32, 64, 128] {
        let cfg = SegNetConfig { embedding_dim: k, ..Default::default() };
        let net = SegNet::new(cfg, n, &mut ChaCha8Rng::seed_from_u64(k as u64)).unwrap();
        let a = net.encode(&img, m).unwrap().embedding;
        assert_eq!(a.len(), k);
        assert_eq!(a, net.encode(&img, m).unwrap().embedding);
        let b = net.encode(&nudged, m).unwrap().embedding;
        let gap = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(gap < 1e-3, "k={k}: embeddings moved by {gap}");
        let out = net.reconstruct(&img, m).unwrap();
        assert_eq!(out.len(), m * n);
        assert!(out.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn training_loss_falls_and_repeats() {
    let m = 16;
    let images: Vec<Vec<f64>> = (0..30).map(|i| values(100 + i, m * 4, 0.0, 1.0)).collect();
    let refs: Vec<&[f64]> = images.iter().map(Vec::as_slice).collect();
    let cfg = AeTrainConfig { steps: 600, learning_rate: 3e-3, seed: 4, ..Default::default() };
    let a = train_autoencoder(&refs, m, &small_cfg(8), &cfg).unwrap();
    let blocks: Vec<f64> = a.losses.chunks(100).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    assert!(blocks.windows(2).all(|w| w[1] <= w[0]), "block means {blocks:?}");
    let b = train_autoencoder(&refs, m, &small_cfg(8), &cfg).unwrap();
    assert_eq!(a.losses.last(), b.losses.last());
}
