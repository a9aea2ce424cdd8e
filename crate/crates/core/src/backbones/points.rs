//! Trainable multi-scale point encoder.
//!
//! A shared per-point MLP embeds (x, y, z, r) into `d` channels; at each
//! scale points are bucketed into voxels of side `v0 * 2^(s-1)`, voxel means
//! are broadcast back and added to the point embedding, and a per-scale MLP
//! produces that scale's features. Everything after the voxel bucketing is
//! differentiable.
//!
//! Internally points are processed in a canonical coordinate order so voxel
//! sums are independent of input row order; outputs are gathered back to the
//! caller's order, which makes the encoder exactly permutation-equivariant.

use super::{BackboneError, N_SCALES};
use crate::autodiff::{Activation, Matrix, Mlp, Value};
use crate::geometry::PointCloud;
use rand::Rng;
use std::collections::HashMap;

/// Per-scale `N x d` point features.
#[derive(Debug, Clone)]
pub struct PointFeaturePyramid {
    pub scales: Vec<Value>,
}

impl PointFeaturePyramid {
    pub fn n_points(&self) -> usize {
        self.scales[0].shape().0
    }

    pub fn feature_dim(&self) -> usize {
        self.scales[0].shape().1
    }
}

/// Voxel bucket ids for a set of points: equal integer cell triples map to
/// equal ids, numbered densely by first occurrence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoxelAssignment {
    pub ids: Vec<usize>,
    pub n_voxels: usize,
}

/// Buckets each point into the axis-aligned cube of side `voxel_size`
/// containing it (floor of coordinate / size per axis).
pub fn voxel_assign(xyz: &[[f64; 3]], voxel_size: f64) -> VoxelAssignment {
    assert!(voxel_size > 0.0, "voxel size must be positive");
    let mut table: HashMap<(i64, i64, i64), usize> = HashMap::new();
    let mut ids = Vec::with_capacity(xyz.len());
    for p in xyz {
        let key = (
            (p[0] / voxel_size).floor() as i64,
            (p[1] / voxel_size).floor() as i64,
            (p[2] / voxel_size).floor() as i64,
        );
        let next = table.len();
        let id = *table.entry(key).or_insert(next);
        ids.push(id);
    }
    VoxelAssignment { n_voxels: table.len(), ids }
}

/// Trainable encoder parameters: the shared embedding MLP, one MLP per
/// scale, and the base voxel size.
#[derive(Clone)]
pub struct PointEncoder {
    pub embed: Mlp,
    pub scale_mlps: Vec<Mlp>,
    pub voxel_size: f64,
}

/// Input channels fed to the embedding MLP: x, y, z, and the distance from
/// the vertical axis.
pub const POINT_INPUT_DIM: usize = 4;

/// Z-scores each input column over the cloud, so meter-scale coordinates
/// reach the MLP at unit scale regardless of scene extent. The statistics
/// are order-independent, keeping the encoder permutation-equivariant.
pub fn standardize_columns(input: &mut Matrix) {
    let n = input.nrows() as f64;
    for mut col in input.columns_mut() {
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt().max(1e-6);
        for v in col.iter_mut() {
            *v = (*v - mean) / std;
        }
    }
}

impl PointEncoder {
    pub fn from_rng<R: Rng>(d: usize, voxel_size: f64, hidden: Activation, rng: &mut R) -> Self {
        assert!(voxel_size > 0.0, "voxel size must be positive");
        let embed = Mlp::from_rng(&[POINT_INPUT_DIM, d, d], hidden, rng);
        let scale_mlps = (0..N_SCALES).map(|_| Mlp::from_rng(&[d, d], hidden, rng)).collect();
        PointEncoder { embed, scale_mlps, voxel_size }
    }

    /// Voxel size at scale `s` (0-based): `v0 * 2^s`.
    pub fn scale_voxel_size(&self, s: usize) -> f64 {
        self.voxel_size * f64::powi(2.0, s as i32)
    }

    pub fn forward(&self, cloud: &PointCloud) -> Result<PointFeaturePyramid, BackboneError> {
        let n = cloud.len();
        // Canonical order: lexicographic by coordinates. Voxel sums then see
        // the same row sequence no matter how the caller ordered the points.
        let mut perm: Vec<usize> = (0..n).collect();
        perm.sort_by(|&a, &b| {
            let pa = &cloud.xyz[a];
            let pb = &cloud.xyz[b];
            pa[0]
                .total_cmp(&pb[0])
                .then(pa[1].total_cmp(&pb[1]))
                .then(pa[2].total_cmp(&pb[2]))
        });
        let mut back_to_input = vec![0usize; n];
        for (canon_pos, &orig) in perm.iter().enumerate() {
            back_to_input[orig] = canon_pos;
        }

        let canon_xyz: Vec<[f64; 3]> = perm.iter().map(|&i| cloud.xyz[i]).collect();
        let mut input = Matrix::zeros((n, POINT_INPUT_DIM));
        for (i, p) in canon_xyz.iter().enumerate() {
            input[(i, 0)] = p[0];
            input[(i, 1)] = p[1];
            input[(i, 2)] = p[2];
            input[(i, 3)] = (p[0] * p[0] + p[1] * p[1]).sqrt();
        }
        standardize_columns(&mut input);
        let embedded = self.embed.apply(&Value::constant(input))?;

        let mut scales = Vec::with_capacity(N_SCALES);
        for (s, mlp) in self.scale_mlps.iter().enumerate() {
            let assignment = voxel_assign(&canon_xyz, self.scale_voxel_size(s));
            let pooled = embedded.scatter_mean(&assignment.ids, assignment.n_voxels)?;
            let spread = pooled.gather_rows(&assignment.ids)?;
            let combined = embedded.add(&spread)?;
            let features = mlp.apply(&combined)?;
            scales.push(features.gather_rows(&back_to_input)?);
        }
        Ok(PointFeaturePyramid { scales })
    }

    /// Parameter leaves with stable names under `prefix`, in checkpoint order.
    pub fn named_params(&self, prefix: &str) -> Vec<(String, Value)> {
        let mut out = Vec::new();
        for (i, layer) in self.embed.layers.iter().enumerate() {
            out.push((format!("{prefix}.embed.{i}.w"), layer.w.clone()));
            out.push((format!("{prefix}.embed.{i}.b"), layer.b.clone()));
        }
        for (s, mlp) in self.scale_mlps.iter().enumerate() {
            for (i, layer) in mlp.layers.iter().enumerate() {
                out.push((format!("{prefix}.scale{s}.{i}.w"), layer.w.clone()));
                out.push((format!("{prefix}.scale{s}.{i}.b"), layer.b.clone()));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Linear;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(points: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(points.to_vec(), None).unwrap()
    }

    /// An encoder whose embedding and scale MLPs are identity maps on the
    /// first `POINT_INPUT_DIM` channels, so outputs can be computed by hand.
    fn identity_encoder(v0: f64) -> PointEncoder {
        let d = POINT_INPUT_DIM;
        let eye = Matrix::from_shape_fn((d, d), |(i, j)| if i == j { 1.0 } else { 0.0 });
        let embed = Mlp {
            layers: vec![Linear {
                w: Value::param(eye.clone()),
                b: Value::param(Matrix::zeros((1, d))),
            }],
            hidden: Activation::Relu,
        };
        let scale_mlps = (0..N_SCALES)
            .map(|_| Mlp {
                layers: vec![Linear {
                    w: Value::param(eye.clone()),
                    b: Value::param(Matrix::zeros((1, d))),
                }],
                hidden: Activation::Relu,
            })
            .collect();
        PointEncoder { embed, scale_mlps, voxel_size: v0 }
    }

    #[test]
    fn voxel_assign_same_cell() {
        let a = voxel_assign(&[[0.01, 0.0, 0.0], [0.09, 0.0, 0.0]], 0.1);
        assert_eq!(a.ids[0], a.ids[1]);
        assert_eq!(a.n_voxels, 1);
    }

    #[test]
    fn voxel_assign_cell_boundary() {
        let a = voxel_assign(&[[0.09, 0.0, 0.0], [0.11, 0.0, 0.0]], 0.1);
        assert_ne!(a.ids[0], a.ids[1]);
        assert_eq!(a.n_voxels, 2);
    }

    /// Partition oracle: group by the integer triple directly.
    fn partition_key(p: &[f64; 3], v: f64) -> (i64, i64, i64) {
        ((p[0] / v).floor() as i64, (p[1] / v).floor() as i64, (p[2] / v).floor() as i64)
    }

    #[test]
    fn voxel_assign_matches_grouping_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<[f64; 3]> = (0..1000)
            .map(|_| {
                [
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-3.0..3.0),
                ]
            })
            .collect();
        let v = 0.37;
        let a = voxel_assign(&pts, v);
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                let same_oracle = partition_key(&pts[i], v) == partition_key(&pts[j], v);
                assert_eq!(a.ids[i] == a.ids[j], same_oracle, "points {i},{j}");
            }
        }
        let distinct: std::collections::HashSet<_> = a.ids.iter().collect();
        assert_eq!(distinct.len(), a.n_voxels);
    }

    #[test]
    fn doubling_base_size_reproduces_next_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<[f64; 3]> = (0..200)
            .map(|_| {
                [
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                ]
            })
            .collect();
        let enc_a = identity_encoder(0.1);
        let enc_b = identity_encoder(0.2);
        for s in 0..N_SCALES - 1 {
            let next = voxel_assign(&pts, enc_a.scale_voxel_size(s + 1));
            let doubled = voxel_assign(&pts, enc_b.scale_voxel_size(s));
            assert_eq!(next, doubled);
        }
    }

    /// Standardized input rows for a cloud, mirroring the encoder's
    /// preprocessing.
    fn standardized_inputs(c: &PointCloud) -> Matrix {
        let mut input = Matrix::zeros((c.len(), POINT_INPUT_DIM));
        for (i, p) in c.xyz.iter().enumerate() {
            input[(i, 0)] = p[0];
            input[(i, 1)] = p[1];
            input[(i, 2)] = p[2];
            input[(i, 3)] = (p[0] * p[0] + p[1] * p[1]).sqrt();
        }
        standardize_columns(&mut input);
        input
    }

    #[test]
    fn two_points_in_one_voxel_pool_to_their_mean() {
        let enc = identity_encoder(10.0);
        let c = cloud(&[[0.2, 0.3, 0.1], [0.6, 0.1, 0.4]]);
        let pyr = enc.forward(&c).unwrap();
        // Identity MLPs: embedding = standardized (x, y, z, r); pooled =
        // mean of the two embeddings; output = embedding + pooled.
        let e = standardized_inputs(&c);
        let s0 = pyr.scales[0].data();
        for k in 0..4 {
            let mean = 0.5 * (e[(0, k)] + e[(1, k)]);
            assert_abs_diff_eq!(s0[(0, k)], e[(0, k)] + mean, epsilon = 1e-12);
            assert_abs_diff_eq!(s0[(1, k)], e[(1, k)] + mean, epsilon = 1e-12);
        }
    }

    #[test]
    fn singleton_voxels_pool_to_own_embedding() {
        // Two points far apart: each sits alone in its voxel at every scale,
        // so the pooled feature doubles the embedding.
        let enc = identity_encoder(0.5);
        let c = cloud(&[[10.3, -0.2, 0.7], [-9.1, 3.4, -2.2]]);
        let pyr = enc.forward(&c).unwrap();
        let e = standardized_inputs(&c);
        let s0 = pyr.scales[0].data();
        for i in 0..2 {
            for k in 0..4 {
                assert_abs_diff_eq!(s0[(i, k)], 2.0 * e[(i, k)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn twenty_point_grouping_matches_oracle_inside_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pts: Vec<[f64; 3]> = (0..20)
            .map(|_| {
                [
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                ]
            })
            .collect();
        let a = voxel_assign(&pts, 0.1);
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                assert_eq!(
                    a.ids[i] == a.ids[j],
                    partition_key(&pts[i], 0.1) == partition_key(&pts[j], 0.1)
                );
            }
        }
    }

    #[test]
    fn forward_is_permutation_equivariant_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let pts: Vec<[f64; 3]> = (0..40)
            .map(|_| {
                [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ]
            })
            .collect();
        let enc = PointEncoder::from_rng(8, 0.25, Activation::Relu, &mut rng);
        let pyr = enc.forward(&cloud(&pts)).unwrap();

        let mut shuffled_idx: Vec<usize> = (0..pts.len()).collect();
        // Deterministic shuffle.
        for i in (1..shuffled_idx.len()).rev() {
            let j = rng.gen_range(0..=i);
            shuffled_idx.swap(i, j);
        }
        let shuffled_pts: Vec<[f64; 3]> = shuffled_idx.iter().map(|&i| pts[i]).collect();
        let pyr_shuffled = enc.forward(&cloud(&shuffled_pts)).unwrap();

        for s in 0..N_SCALES {
            let base = pyr.scales[s].data();
            let shuf = pyr_shuffled.scales[s].data();
            for (new_row, &orig_row) in shuffled_idx.iter().enumerate() {
                for c in 0..8 {
                    assert_eq!(
                        shuf[(new_row, c)].to_bits(),
                        base[(orig_row, c)].to_bits(),
                        "scale {s} row {new_row}"
                    );
                }
            }
        }
    }

    #[test]
    fn outputs_are_finite_for_finite_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for trial in 0..10 {
            let n = rng.gen_range(1..80);
            let pts: Vec<[f64; 3]> = (0..n)
                .map(|_| {
                    [
                        rng.gen_range(-50.0..50.0),
                        rng.gen_range(-50.0..50.0),
                        rng.gen_range(-50.0..50.0),
                    ]
                })
                .collect();
            let enc = PointEncoder::from_rng(6, 0.1, Activation::Relu, &mut rng);
            let pyr = enc.forward(&cloud(&pts)).unwrap();
            for s in &pyr.scales {
                assert!(s.data().iter().all(|v| v.is_finite()), "trial {trial}");
            }
        }
    }

    #[test]
    fn gradients_flow_to_encoder_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let enc = PointEncoder::from_rng(4, 0.5, Activation::Relu, &mut rng);
        let c = cloud(&[[0.1, 0.2, 0.3], [0.7, -0.4, 0.2], [-0.6, 0.5, -0.1]]);
        let pyr = enc.forward(&c).unwrap();
        let loss = pyr.scales[3].rowwise_l2_mean();
        loss.backward().unwrap();
        let some_grad = enc
            .named_params("enc")
            .iter()
            .any(|(_, p)| p.grad().iter().any(|&g| g != 0.0));
        assert!(some_grad);
    }
}
