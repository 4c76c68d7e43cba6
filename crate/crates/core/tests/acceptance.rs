//! Acceptance gates for the whole pipeline. Criteria run sequentially so
//! the per-criterion runtime budgets are meaningful; every criterion prints
//! a pass/fail line and the suite fails if any criterion does.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use keypose::dec_cluster::{
    assign, dec_fit, dec_loss_and_grads, kl_loss, kmeans, soft_assign, target_distribution,
    DecConfig,
};
use keypose::grid_builder::{
    assemble_grid, borders_are_zero, disassemble_grid, GridLayout, Tile,
};
use keypose::motion_actor::{select_key_actor, track_motion_score, TrackScore};
use keypose::neural_core::{
    cross_entropy_loss, forward, grad_check, mse_loss, Activation, MlpParams, MlpSpec,
};
use keypose::pipeline::{run_ablation, run_pipeline, PipelineConfig};
use keypose::pose_data::{BBox, GrayImage, Keypoint2D, PoseFrame, JOINT_COUNT};
use keypose::pose_encoding::{encode_pose, PoseVector, POSE_VECTOR_DIM};
use keypose::pose_filter::{train_autoencoder, FilterConfig};
use keypose::synth_gen::{generate_dataset, generate_sequence, ActionClass, DatasetSpec, SynthSpec};

struct Criterion {
    name: &'static str,
    budget_secs: f64,
    run: fn(),
}

#[test]
fn acceptance() {
    let criteria: Vec<Criterion> = vec![
        Criterion { name: "1 formula oracles", budget_secs: 10.0, run: criterion_1 },
        Criterion { name: "2 gradient suite", budget_secs: 60.0, run: criterion_2 },
        Criterion { name: "3 invariance suite", budget_secs: 60.0, run: criterion_3 },
        Criterion { name: "4 clustering gate", budget_secs: 60.0, run: criterion_4 },
        Criterion { name: "5 filtering gate", budget_secs: 120.0, run: criterion_5 },
        Criterion { name: "6 key-actor gate", budget_secs: 120.0, run: criterion_6 },
        Criterion { name: "7 end-to-end gate", budget_secs: 600.0, run: criterion_7 },
        Criterion { name: "8 grid exactness", budget_secs: 60.0, run: criterion_8 },
        Criterion { name: "9 determinism", budget_secs: 600.0, run: criterion_9 },
    ];
    let mut failures = Vec::new();
    for c in &criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run));
        let elapsed = start.elapsed().as_secs_f64();
        let within_budget = elapsed <= c.budget_secs;
        match (&outcome, within_budget) {
            (Ok(()), true) => println!("criterion {}: PASS ({elapsed:.1}s)", c.name),
            (Ok(()), false) => {
                println!(
                    "criterion {}: FAIL (over budget: {elapsed:.1}s > {:.0}s)",
                    c.name, c.budget_secs
                );
                failures.push(c.name);
            }
            (Err(e), _) => {
                let msg = e
                    .downcast_ref::<String>()
                    .map(String::as_str)
                    .or_else(|| e.downcast_ref::<&str>().copied())
                    .unwrap_or("panic");
                println!("criterion {}: FAIL ({elapsed:.1}s) - {msg}", c.name);
                failures.push(c.name);
            }
        }
    }
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}

// ---------------------------------------------------------------------------
// Criterion 1: formula implementations match straight-line oracles.
// ---------------------------------------------------------------------------

fn oracle_soft_assign(z: &[Vec<f64>], mu: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut q = vec![vec![0.0; mu.len()]; z.len()];
    for i in 0..z.len() {
        let mut total = 0.0;
        for j in 0..mu.len() {
            let mut d2 = 0.0;
            for c in 0..z[i].len() {
                d2 += (z[i][c] - mu[j][c]) * (z[i][c] - mu[j][c]);
            }
            q[i][j] = 1.0 / (1.0 + d2);
            total += q[i][j];
        }
        for j in 0..mu.len() {
            q[i][j] /= total;
        }
    }
    q
}

fn oracle_target(q: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = q.len();
    let k = q[0].len();
    let mut f = vec![0.0; k];
    for row in q {
        for (j, v) in row.iter().enumerate() {
            f[j] += v;
        }
    }
    let mut p = vec![vec![0.0; k]; n];
    for i in 0..n {
        let mut denom = 0.0;
        for j in 0..k {
            p[i][j] = q[i][j] * q[i][j] / f[j];
            denom += p[i][j];
        }
        for j in 0..k {
            p[i][j] /= denom;
        }
    }
    p
}

fn oracle_kl(p: &[Vec<f64>], q: &[Vec<f64>]) -> f64 {
    let mut loss = 0.0;
    for i in 0..p.len() {
        for j in 0..p[i].len() {
            if p[i][j] > 0.0 {
                loss += p[i][j] * (p[i][j] / q[i][j]).ln();
            }
        }
    }
    loss
}

fn oracle_mse(c: &[Vec<f64>], c_hat: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for (a, b) in c.iter().zip(c_hat.iter()) {
        for (x, y) in a.iter().zip(b.iter()) {
            total += (x - y) * (x - y);
        }
    }
    total / c.len() as f64
}

fn oracle_cross_entropy(logits: &[Vec<f64>], labels: &[usize]) -> f64 {
    let mut loss = 0.0;
    for (row, &y) in logits.iter().zip(labels.iter()) {
        let denom: f64 = row.iter().map(|v| v.exp()).sum();
        loss -= (row[y].exp() / denom).ln();
    }
    loss / logits.len() as f64
}

fn random_stochastic(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let mut row: Vec<f64> = (0..k).map(|_| rng.gen_range(1e-3..1.0)).collect();
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
            row
        })
        .collect()
}

fn to_matrix(rows: &[Vec<f64>]) -> Array2<f64> {
    Array2::from_shape_fn((rows.len(), rows[0].len()), |(i, j)| rows[i][j])
}

fn criterion_1() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let tol = 1e-9;
    for _ in 0..100 {
        let n = rng.gen_range(1..8);
        let k = rng.gen_range(1..6);
        let d = rng.gen_range(1..5);
        let z: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect())
            .collect();
        let mu: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect())
            .collect();
        let q = soft_assign(&to_matrix(&z), &to_matrix(&mu)).unwrap();
        let q_oracle = oracle_soft_assign(&z, &mu);
        for i in 0..n {
            for j in 0..k {
                assert!((q[[i, j]] - q_oracle[i][j]).abs() < tol, "soft_assign");
            }
        }

        let q_rows: Vec<Vec<f64>> = (0..n).map(|i| q.row(i).to_vec()).collect();
        let p = target_distribution(&q);
        let p_oracle = oracle_target(&q_rows);
        for i in 0..n {
            for j in 0..k {
                assert!((p[[i, j]] - p_oracle[i][j]).abs() < tol, "target_distribution");
            }
        }

        let p2 = random_stochastic(&mut rng, n, k);
        let kl = kl_loss(&to_matrix(&p2), &q).unwrap();
        let q_for_oracle: Vec<Vec<f64>> = (0..n).map(|i| q.row(i).to_vec()).collect();
        assert!((kl - oracle_kl(&p2, &q_for_oracle)).abs() < tol, "kl_loss");

        let m = rng.gen_range(1..6);
        let w = rng.gen_range(1..7);
        let c: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..w).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let c_hat: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..w).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let (mse, _) = mse_loss(&to_matrix(&c), &to_matrix(&c_hat)).unwrap();
        assert!((mse - oracle_mse(&c, &c_hat)).abs() < tol, "mse_loss");

        let classes = rng.gen_range(2..7);
        let batch = rng.gen_range(1..6);
        let logits: Vec<Vec<f64>> = (0..batch)
            .map(|_| (0..classes).map(|_| rng.gen_range(-4.0..4.0)).collect())
            .collect();
        let labels: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..classes)).collect();
        let (ce, _) = cross_entropy_loss(&to_matrix(&logits), &labels).unwrap();
        assert!(
            (ce - oracle_cross_entropy(&logits, &labels)).abs() < tol,
            "cross_entropy_loss"
        );
    }
}

// ---------------------------------------------------------------------------
// Criterion 2: analytic gradients vs central finite differences.
// ---------------------------------------------------------------------------

fn criterion_2() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let tol = 1e-4;

    // Autoencoder-style nets under MSE reconstruction.
    for spec_idx in 0..8 {
        let d = rng.gen_range(3..7);
        let mid = rng.gen_range(2..6);
        let spec = MlpSpec::uniform(vec![d, mid + 2, mid, mid + 2, d], Activation::Tanh,
            Activation::Identity)
        .unwrap();
        let params = MlpParams::init(&spec, 1000 + spec_idx);
        let batch = Array2::from_shape_fn((5, d), |_| rng.gen_range(-1.0..1.0));
        let target = batch.clone();
        let err = grad_check(&spec, &params, &batch, 1e-5, |out| {
            mse_loss(&target, out).unwrap()
        })
        .unwrap();
        assert!(err < tol, "autoencoder gradient rel err {err}");
    }

    // Classifier-style nets under cross-entropy over logits.
    for spec_idx in 0..8 {
        let d = rng.gen_range(4..9);
        let hidden = rng.gen_range(3..8);
        let classes = rng.gen_range(2..5);
        let spec = MlpSpec::uniform(
            vec![d, hidden, classes],
            Activation::Tanh,
            Activation::Identity,
        )
        .unwrap();
        let params = MlpParams::init(&spec, 2000 + spec_idx);
        let batch = Array2::from_shape_fn((6, d), |_| rng.gen_range(-1.0..1.0));
        let labels: Vec<usize> = (0..6).map(|_| rng.gen_range(0..classes)).collect();
        let err = grad_check(&spec, &params, &batch, 1e-5, |out| {
            cross_entropy_loss(out, &labels).unwrap()
        })
        .unwrap();
        assert!(err < tol, "classifier gradient rel err {err}");
    }

    // DEC objective with the target distribution held constant:
    // encoder parameters and centroids both checked.
    for spec_idx in 0..6 {
        let d = rng.gen_range(3..6);
        let latent = rng.gen_range(2..4);
        let k = rng.gen_range(2..4);
        let n = 7;
        let spec = MlpSpec::uniform(vec![d, 5, latent], Activation::Tanh, Activation::Tanh)
            .unwrap();
        let params = MlpParams::init(&spec, 3000 + spec_idx);
        let vectors = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0));
        let centroids = Array2::from_shape_fn((k, latent), |_| rng.gen_range(-0.8..0.8));
        let latents = forward(&spec, &params, &vectors).unwrap();
        let p = target_distribution(&soft_assign(&latents, &centroids).unwrap());

        let loss_at = |params: &MlpParams, centroids: &Array2<f64>| -> f64 {
            let z = forward(spec_ref(&spec), params, &vectors).unwrap();
            kl_loss(&p, &soft_assign(&z, centroids).unwrap()).unwrap()
        };
        fn spec_ref(s: &MlpSpec) -> &MlpSpec {
            s
        }
        let (_, param_grads, centroid_grads, _) =
            dec_loss_and_grads(&spec, &params, &centroids, &vectors, &p).unwrap();

        let h = 1e-5;
        // Encoder parameters.
        let mut probe = params.clone();
        for layer in 0..params.layers.len() {
            for tensor in 0..2 {
                let len = if tensor == 0 {
                    params.layers[layer].weights.len()
                } else {
                    params.layers[layer].bias.len()
                };
                for i in 0..len {
                    let get = |p: &mut MlpParams| -> *mut f64 {
                        if tensor == 0 {
                            &mut p.layers[layer].weights.as_slice_mut().unwrap()[i]
                        } else {
                            &mut p.layers[layer].bias[i]
                        }
                    };
                    let slot = get(&mut probe);
                    unsafe {
                        let orig = *slot;
                        *slot = orig + h;
                        let up = loss_at(&probe, &centroids);
                        *slot = orig - h;
                        let down = loss_at(&probe, &centroids);
                        *slot = orig;
                        let numeric = (up - down) / (2.0 * h);
                        let analytic = if tensor == 0 {
                            param_grads.layers[layer].weights.as_slice().unwrap()[i]
                        } else {
                            param_grads.layers[layer].bias[i]
                        };
                        let rel = (analytic - numeric).abs()
                            / (analytic.abs().max(numeric.abs()) + h);
                        assert!(rel < tol, "dec encoder gradient rel err {rel}");
                    }
                }
            }
        }
        // Centroids.
        let mut probe_c = centroids.clone();
        for idx in 0..probe_c.len() {
            let orig = probe_c.as_slice().unwrap()[idx];
            probe_c.as_slice_mut().unwrap()[idx] = orig + h;
            let up = loss_at(&params, &probe_c);
            probe_c.as_slice_mut().unwrap()[idx] = orig - h;
            let down = loss_at(&params, &probe_c);
            probe_c.as_slice_mut().unwrap()[idx] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = centroid_grads.as_slice().unwrap()[idx];
            let rel = (analytic - numeric).abs() / (analytic.abs().max(numeric.abs()) + h);
            assert!(rel < tol, "dec centroid gradient rel err {rel}");
        }
    }
}

// ---------------------------------------------------------------------------
// Criterion 3: invariances.
// ---------------------------------------------------------------------------

fn sample_pose(rng: &mut ChaCha8Rng) -> PoseFrame {
    let mut joints = [Keypoint2D { x: 0.0, y: 0.0, confidence: 1.0 }; JOINT_COUNT];
    for j in joints.iter_mut() {
        j.x = rng.gen_range(-40.0..40.0);
        j.y = rng.gen_range(-40.0..40.0);
    }
    PoseFrame {
        frame_index: 0,
        joints,
        bbox: BBox { left: 0.0, top: 0.0, width: 80.0, height: 80.0 },
    }
}

fn criterion_3() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);

    // Polar encoding invariance under uniform scale and translation.
    for _ in 0..50 {
        let pose = sample_pose(&mut rng);
        let reference = encode_pose(&pose);
        for s in [0.1, 1.0, 7.3] {
            let tx = rng.gen_range(-200.0..200.0);
            let ty = rng.gen_range(-200.0..200.0);
            let mut transformed = pose.clone();
            for j in transformed.joints.iter_mut() {
                j.x = j.x * s + tx;
                j.y = j.y * s + ty;
            }
            let encoded = encode_pose(&transformed);
            for (a, b) in reference.as_slice().iter().zip(encoded.as_slice()) {
                assert!((a - b).abs() < 1e-9, "polar invariance: {a} vs {b}");
            }
        }
    }

    // Key-actor argmax invariance under positive scaling of all scores.
    for _ in 0..50 {
        let scores: Vec<TrackScore> = (0..rng.gen_range(2..8))
            .map(|i| TrackScore { track_id: i, score: rng.gen_range(0.0..10.0) })
            .collect();
        let winner = select_key_actor(&scores).unwrap();
        for c in [1e-3, 0.5, 1.0, 42.0, 1e6] {
            let scaled: Vec<TrackScore> = scores
                .iter()
                .map(|s| TrackScore { track_id: s.track_id, score: s.score * c })
                .collect();
            assert_eq!(select_key_actor(&scaled).unwrap(), winner);
        }
    }

    // Q and P rows sum to one; KL nonnegative with equality iff P = Q.
    for _ in 0..50 {
        let n = rng.gen_range(1..10);
        let k = rng.gen_range(1..6);
        let d = rng.gen_range(1..5);
        let z = Array2::from_shape_fn((n, d), |_| rng.gen_range(-5.0..5.0));
        let mu = Array2::from_shape_fn((k, d), |_| rng.gen_range(-5.0..5.0));
        let q = soft_assign(&z, &mu).unwrap();
        let p = target_distribution(&q);
        for i in 0..n {
            assert!((q.row(i).sum() - 1.0).abs() < 1e-9);
            assert!((p.row(i).sum() - 1.0).abs() < 1e-9);
        }
        let kl_pq = kl_loss(&p, &q).unwrap();
        assert!(kl_pq >= 0.0);
        assert!(kl_loss(&q, &q).unwrap().abs() < 1e-12);
        let differs = p
            .iter()
            .zip(q.iter())
            .any(|(a, b)| (a - b).abs() > 1e-12);
        if differs {
            assert!(kl_pq > 0.0);
        }
    }
}

// ---------------------------------------------------------------------------
// Criterion 4: clustering gate.
// ---------------------------------------------------------------------------

fn criterion_4() {
    // Three separable blobs of pose vectors (N = 300), SAE pretrained on
    // the same vectors, then DEC.
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut anchors = Vec::new();
    for cls in [ActionClass::Wave, ActionClass::Walk, ActionClass::Jump] {
        let mut spec = SynthSpec::new(cls, 900);
        spec.num_actors = 1;
        let (record, _, truth) = generate_sequence(&spec).unwrap();
        let poses = record.track_poses(truth.key_actor_id);
        anchors.push(encode_pose(poses[0]));
    }
    let mut vectors: Vec<PoseVector> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for (c, anchor) in anchors.iter().enumerate() {
        for _ in 0..100 {
            let mut v = [0.0f64; POSE_VECTOR_DIM];
            for (slot, &a) in v.iter_mut().zip(anchor.as_slice()) {
                *slot = (a + rng.gen_range(-0.015..0.015)).clamp(0.0, 1.0);
            }
            vectors.push(PoseVector(v));
            labels.push(c);
        }
    }
    let sae = train_autoencoder(
        &vectors,
        &FilterConfig { epochs: 150, seed: 5, ..FilterConfig::default() },
    )
    .unwrap();
    let (enc_spec, enc_params) = sae.encoder();
    let matrix = Array2::from_shape_fn((vectors.len(), POSE_VECTOR_DIM), |(i, j)| {
        vectors[i].as_slice()[j]
    });
    let fit = dec_fit(
        &enc_spec,
        &enc_params,
        &matrix,
        &DecConfig { k: 3, seed: 11, epochs: 60, ..DecConfig::default() },
    )
    .unwrap();
    assert!(
        fit.update_losses.last().unwrap() < fit.update_losses.first().unwrap(),
        "KL did not decrease: {:?}",
        fit.update_losses
    );
    let hard: Vec<usize> = (0..fit.q.nrows())
        .map(|i| {
            let row = fit.q.row(i);
            (0..row.len()).max_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap()).unwrap()
        })
        .collect();
    let perms: [[usize; 3]; 6] =
        [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let best = perms
        .iter()
        .map(|perm| {
            hard.iter()
                .zip(labels.iter())
                .filter(|(&h, &l)| perm[h] == l)
                .count()
        })
        .max()
        .unwrap();
    assert!(
        best >= 285,
        "cluster accuracy {}/300 under optimal matching",
        best
    );

    // k-means assignment step equals the exhaustive nearest-centroid oracle.
    for trial in 0..10 {
        let n = 8 + (trial * 6) % 57;
        let d = 2 + trial % 4;
        let k = 2 + trial % 5;
        let points = Array2::from_shape_fn((n, d), |_| rng.gen_range(-4.0..4.0));
        let result = kmeans(&points, k, trial as u64, 2).unwrap();
        let fast = assign(&points, &result.centroids);
        for i in 0..n {
            let mut best_j = 0;
            let mut best_d = f64::INFINITY;
            for j in 0..k {
                let mut dist = 0.0;
                for c in 0..d {
                    let diff = points[[i, c]] - result.centroids[[j, c]];
                    dist += diff * diff;
                }
                if dist < best_d {
                    best_d = dist;
                    best_j = j;
                }
            }
            assert_eq!(fast[i], best_j, "assignment differs from oracle");
        }
    }
}

// ---------------------------------------------------------------------------
// Criterion 5: filtering gate.
// ---------------------------------------------------------------------------

fn pose_pool(seeds: std::ops::Range<u64>) -> Vec<PoseFrame> {
    let mut out = Vec::new();
    for seed in seeds {
        for cls in ActionClass::ALL {
            let mut spec = SynthSpec::new(cls, seed);
            spec.num_actors = 1;
            let (record, _, truth) = generate_sequence(&spec).unwrap();
            out.extend(record.track_poses(truth.key_actor_id).into_iter().cloned());
        }
    }
    out
}

fn auroc(scores_pos: &[f64], scores_neg: &[f64]) -> f64 {
    // Probability that a corrupted pose outranks a clean one
    // (Mann-Whitney U with tie correction).
    let mut greater = 0.0;
    for p in scores_pos {
        for n in scores_neg {
            if p > n {
                greater += 1.0;
            } else if p == n {
                greater += 0.5;
            }
        }
    }
    greater / (scores_pos.len() as f64 * scores_neg.len() as f64)
}

fn criterion_5() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);

    let references: Vec<PoseVector> = pose_pool(0..5).iter().map(encode_pose).collect();
    let model = train_autoencoder(
        &references,
        &FilterConfig { epochs: 40, seed: 9, ..FilterConfig::default() },
    )
    .unwrap();

    let held_out = pose_pool(50..53);
    assert!(held_out.len() >= 200);
    let clean: Vec<PoseVector> = held_out[..200].iter().map(encode_pose).collect();
    let corrupted: Vec<PoseVector> = held_out[..200]
        .iter()
        .map(|pose| {
            let mut shuffled = pose.clone();
            shuffled.joints.shuffle(&mut rng);
            encode_pose(&shuffled)
        })
        .collect();
    let clean_errors = model.reconstruction_errors(&clean);
    let corrupt_errors = model.reconstruction_errors(&corrupted);
    let roc = auroc(&corrupt_errors, &clean_errors);
    assert!(roc >= 0.9, "AUROC {roc}");

    // Partition is exhaustive, disjoint, and order-independent.
    let mut mixed: Vec<PoseVector> = clean.iter().chain(corrupted.iter()).cloned().collect();
    let (kept, discarded) = model.filter_poses(&mixed);
    let mut union: Vec<usize> = kept.iter().chain(discarded.iter()).cloned().collect();
    union.sort_unstable();
    assert_eq!(union, (0..mixed.len()).collect::<Vec<_>>());

    let decisions: Vec<bool> = {
        let mut d = vec![false; mixed.len()];
        for &i in &kept {
            d[i] = true;
        }
        d
    };
    mixed.reverse();
    let (kept_rev, _) = model.filter_poses(&mixed);
    let mut decisions_rev = vec![false; mixed.len()];
    for &i in &kept_rev {
        decisions_rev[mixed.len() - 1 - i] = true;
    }
    assert_eq!(decisions, decisions_rev, "filter depends on pose order");
}

// ---------------------------------------------------------------------------
// Criterion 6: key-actor identification on multi-actor scenes.
// ---------------------------------------------------------------------------

fn criterion_6() {
    let mut correct = 0;
    let mut total = 0;
    for seed in 0..20u64 {
        for cls in ActionClass::ALL {
            let mut spec = SynthSpec::new(cls, 7000 + seed);
            spec.motion_ratio = 2.0;
            let (record, _, truth) = generate_sequence(&spec).unwrap();
            let scores: Vec<TrackScore> = record
                .tracks
                .iter()
                .filter_map(|t| track_motion_score(t, 0.5).ok())
                .collect();
            total += 1;
            if select_key_actor(&scores).unwrap() == truth.key_actor_id {
                correct += 1;
            }
        }
    }
    assert_eq!(total, 60);
    assert_eq!(correct, total, "key-actor accuracy {correct}/{total}");
}

// ---------------------------------------------------------------------------
// Criteria 7 and 9: end-to-end gate and determinism.
// ---------------------------------------------------------------------------

fn acceptance_dataset(dir: &std::path::Path) -> std::path::PathBuf {
    let mut spec = DatasetSpec::new(2024);
    spec.sequences_per_class = 40;
    spec.corrupt_prob = 0.08;
    generate_dataset(&spec, dir).unwrap();
    dir.join("manifest.json")
}

fn acceptance_config(manifest: std::path::PathBuf, out: std::path::PathBuf) -> PipelineConfig {
    let mut config = PipelineConfig::default();
    config.model_store = out.join("bundle.json");
    config.manifest = manifest;
    config.output_dir = out;
    config.filter.epochs = 40;
    config.cluster.epochs = 60;
    config.classifier.epochs = 20;
    config.seed = 7;
    config
}

fn criterion_7() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = acceptance_dataset(&dir.path().join("data"));
    let config = acceptance_config(manifest, dir.path().join("out"));
    let rows = run_ablation(&config).unwrap();
    assert_eq!(rows.len(), 5);
    for pair in rows.windows(2) {
        assert!(
            pair[0].test_accuracy <= pair[1].test_accuracy,
            "ablation ordering violated: {} ({:.3}) > {} ({:.3})",
            pair[0].name,
            pair[0].test_accuracy,
            pair[1].name,
            pair[1].test_accuracy
        );
    }
    let full = rows.last().unwrap();
    assert!(
        full.test_accuracy >= 0.90,
        "full-pipeline accuracy {:.3}",
        full.test_accuracy
    );
}

fn criterion_9() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = acceptance_dataset(&dir.path().join("data"));

    // The same configuration run twice; the second run overwrites the
    // first run's artifacts.
    let config = acceptance_config(manifest, dir.path().join("out"));
    let run = || {
        let report = run_pipeline(&config).unwrap();
        let bundle = std::fs::read(&config.model_store).unwrap();
        (report, bundle)
    };
    let (report_a, bundle_a) = run();
    let (report_b, bundle_b) = run();

    assert_eq!(report_a.test_accuracy, report_b.test_accuracy);
    assert_eq!(report_a.mean_precision, report_b.mean_precision);
    assert_eq!(report_a.per_class_precision, report_b.per_class_precision);
    let preds_a: Vec<(String, u32)> = report_a
        .predictions
        .iter()
        .map(|p| (p.sequence_id.clone(), p.predicted))
        .collect();
    let preds_b: Vec<(String, u32)> = report_b
        .predictions
        .iter()
        .map(|p| (p.sequence_id.clone(), p.predicted))
        .collect();
    assert_eq!(preds_a, preds_b);
    assert!(bundle_a == bundle_b, "persisted model bytes differ");
    assert!(report_a.is_self_consistent());
}

// ---------------------------------------------------------------------------
// Criterion 8: grid exactness.
// ---------------------------------------------------------------------------

fn criterion_8() {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let layout = GridLayout::default();
    let tiles: Vec<Tile> = (0..8)
        .map(|i| {
            let mut image = GrayImage::new(112, 112);
            for y in 0..112 {
                for x in 0..112 {
                    image.set(x, y, rng.gen());
                }
            }
            Tile {
                image,
                source_frame: i,
                source_bbox: BBox { left: 0.0, top: 0.0, width: 112.0, height: 112.0 },
                crop_rect: (0, 0, 112, 112),
            }
        })
        .collect();
    let grid = assemble_grid(&tiles, &layout, Some(0)).unwrap();
    assert_eq!((grid.image.width(), grid.image.height()), (463, 233));
    assert!(borders_are_zero(&grid), "non-zero border pixel");
    let recovered = disassemble_grid(&grid);
    for (t, r) in tiles.iter().zip(recovered.iter()) {
        assert_eq!(t.image.data(), r.data(), "tile bytes not recovered");
    }
}
