//! Point-to-pixel correspondence: extrinsic chaining, pinhole projection,
//! FOV masking, and bilinear upsampling of image feature maps.
//!
//! All operations here are pure functions over immutable inputs and are safe
//! to call concurrently.

use nalgebra::{Matrix3, Matrix4, SMatrix, Vector4};
use ndarray::Array3;
use thiserror::Error;

/// Intrinsic matrix shape: 3x4, applied to homogeneous camera coordinates.
pub type Intrinsics = SMatrix<f64, 3, 4>;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("transform {index} is not rigid: {reason}")]
    NotRigid { index: usize, reason: String },
    #[error("empty transform chain")]
    EmptyChain,
    #[error("invalid intrinsics: {0}")]
    BadIntrinsics(String),
    #[error("invalid point cloud: {0}")]
    BadCloud(String),
    #[error("invalid image size {width}x{height}")]
    BadImageSize { width: usize, height: usize },
    #[error("upsample target {th}x{tw} smaller than source {sh}x{sw}")]
    UpsampleShrink { sh: usize, sw: usize, th: usize, tw: usize },
}

/// A LIDAR scan: per-point XYZ coordinates in meters, optional intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub xyz: Vec<[f64; 3]>,
    pub intensity: Option<Vec<f64>>,
}

impl PointCloud {
    pub fn new(xyz: Vec<[f64; 3]>, intensity: Option<Vec<f64>>) -> Result<Self, GeometryError> {
        if xyz.is_empty() {
            return Err(GeometryError::BadCloud("point cloud is empty".into()));
        }
        if xyz.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::BadCloud("non-finite coordinate".into()));
        }
        if let Some(ints) = &intensity {
            if ints.len() != xyz.len() {
                return Err(GeometryError::BadCloud(format!(
                    "intensity length {} != point count {}",
                    ints.len(),
                    xyz.len()
                )));
            }
        }
        Ok(Self { xyz, intensity })
    }

    pub fn len(&self) -> usize {
        self.xyz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xyz.is_empty()
    }
}

/// A 4x4 homogeneous rigid transform. The last row must be (0,0,0,1) and the
/// rotation block orthonormal (to 1e-6) with positive determinant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    matrix: Matrix4<f64>,
}

const RIGID_TOL: f64 = 1e-6;

impl RigidTransform {
    pub fn identity() -> Self {
        Self { matrix: Matrix4::identity() }
    }

    pub fn new(matrix: Matrix4<f64>) -> Result<Self, GeometryError> {
        Self::validate(&matrix).map_err(|reason| GeometryError::NotRigid { index: 0, reason })?;
        Ok(Self { matrix })
    }

    fn validate(m: &Matrix4<f64>) -> Result<(), String> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err("non-finite entry".into());
        }
        let last = m.row(3);
        if last[0] != 0.0 || last[1] != 0.0 || last[2] != 0.0 || last[3] != 1.0 {
            return Err(format!(
                "last row is ({}, {}, {}, {}), expected (0, 0, 0, 1)",
                last[0], last[1], last[2], last[3]
            ));
        }
        let r = m.fixed_view::<3, 3>(0, 0).into_owned();
        let gram = r.transpose() * r;
        let dev = (gram - Matrix3::identity()).abs().max();
        if dev > RIGID_TOL {
            return Err(format!("rotation block deviates from orthonormal by {dev:e}"));
        }
        let det = r.determinant();
        if (det - 1.0).abs() > RIGID_TOL {
            return Err(format!("rotation determinant {det} is not +1"));
        }
        Ok(())
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.matrix
    }

    /// Apply to a 3-D point (homogeneous with w = 1).
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let v = self.matrix * Vector4::new(p[0], p[1], p[2], 1.0);
        [v[0], v[1], v[2]]
    }
}

/// Chains extrinsic transforms by multiplying them in the given order, so the
/// leftmost factor is applied last (standard right-to-left composition).
pub fn compose_extrinsic(chain: &[RigidTransform]) -> Result<RigidTransform, GeometryError> {
    if chain.is_empty() {
        return Err(GeometryError::EmptyChain);
    }
    for (index, t) in chain.iter().enumerate() {
        RigidTransform::validate(t.matrix())
            .map_err(|reason| GeometryError::NotRigid { index, reason })?;
    }
    let mut product = *chain[0].matrix();
    for t in &chain[1..] {
        product *= *t.matrix();
    }
    // The product of rigid transforms is rigid up to roundoff; revalidate so a
    // long chain cannot silently drift outside tolerance.
    RigidTransform::new(product)
}

/// Pinhole camera: 3x4 intrinsics, a LIDAR-to-camera extrinsic transform,
/// and the image dimensions in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub k: Intrinsics,
    pub t: RigidTransform,
    pub width: usize,
    pub height: usize,
}

impl CameraModel {
    pub fn new(
        k: Intrinsics,
        t: RigidTransform,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        if k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 || k[(2, 2)] != 1.0 {
            return Err(GeometryError::BadIntrinsics(format!(
                "bottom row starts ({}, {}, {}), expected (0, 0, 1)",
                k[(2, 0)],
                k[(2, 1)],
                k[(2, 2)]
            )));
        }
        if !k.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::BadIntrinsics("non-finite entry".into()));
        }
        if width < 1 || height < 1 {
            return Err(GeometryError::BadImageSize { width, height });
        }
        Ok(Self { k, t, width, height })
    }
}

/// Continuous projection of one point: pixel column `u`, pixel row `v`, and
/// camera-frame depth. When `depth == 0` the point cannot be normalized and
/// `u`/`v` are NaN; use [`Projection::is_valid`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

impl Projection {
    pub fn is_valid(&self) -> bool {
        self.depth != 0.0
    }
}

/// Maps a homogeneous image-plane vector to pixel coordinates by dividing by
/// its third component (the camera-frame depth).
pub fn normalize_homogeneous(h: [f64; 3]) -> Projection {
    let depth = h[2];
    if depth == 0.0 {
        Projection { u: f64::NAN, v: f64::NAN, depth }
    } else {
        Projection { u: h[0] / depth, v: h[1] / depth, depth }
    }
}

/// Projects every point through `K * T`, normalizing by the camera-frame
/// depth. Zero-depth points are flagged invalid rather than raising.
pub fn project_points(cloud: &PointCloud, cam: &CameraModel) -> Vec<Projection> {
    let p = cam.k * cam.t.matrix();
    cloud
        .xyz
        .iter()
        .map(|&[x, y, z]| {
            let h = p * Vector4::new(x, y, z, 1.0);
            normalize_homogeneous([h[0], h[1], h[2]])
        })
        .collect()
}

/// Point-to-pixel correspondence for one cloud/camera pair. `pixel` holds the
/// integer (row, col) of each in-FOV point, in point order.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceTable {
    pub in_fov: Vec<bool>,
    pub pixel: Vec<(u32, u32)>,
    pub n_overlap: usize,
    /// Image dimensions this table was built against.
    pub width: usize,
    pub height: usize,
}

impl CorrespondenceTable {
    /// Indices of the in-FOV points, in point order.
    pub fn in_fov_indices(&self) -> Vec<usize> {
        self.in_fov
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| f.then_some(i))
            .collect()
    }
}

/// Builds the correspondence table. A point is in the FOV iff its depth is
/// strictly positive and its floored pixel coordinates land inside
/// `[0, H) x [0, W)` (half-open; a floored coordinate equal to the image
/// dimension is not a valid index). Behind-camera points are excluded even
/// when their pixel inequalities would hold.
pub fn build_correspondence(cloud: &PointCloud, cam: &CameraModel) -> CorrespondenceTable {
    let projections = project_points(cloud, cam);
    let mut in_fov = Vec::with_capacity(projections.len());
    let mut pixel = Vec::new();
    for proj in &projections {
        let ok = proj.depth > 0.0 && {
            let col = proj.u.floor();
            let row = proj.v.floor();
            col >= 0.0 && col < cam.width as f64 && row >= 0.0 && row < cam.height as f64
        };
        in_fov.push(ok);
        if ok {
            pixel.push((proj.v.floor() as u32, proj.u.floor() as u32));
        }
    }
    let n_overlap = pixel.len();
    CorrespondenceTable { in_fov, pixel, n_overlap, width: cam.width, height: cam.height }
}

/// Bilinearly upsamples an `h x w x d` feature grid to `target = (H, W)`
/// using corner-aligned sampling: output corners map exactly onto input
/// corners, and a source axis of length 1 extends as a constant.
pub fn upsample_feature_map(
    featmap: &Array3<f64>,
    target: (usize, usize),
) -> Result<Array3<f64>, GeometryError> {
    let (sh, sw, d) = featmap.dim();
    let (th, tw) = target;
    if th < sh || tw < sw {
        return Err(GeometryError::UpsampleShrink { sh, sw, th, tw });
    }
    let mut out = Array3::zeros((th, tw, d));
    let row_scale = if th > 1 { (sh - 1) as f64 / (th - 1) as f64 } else { 0.0 };
    let col_scale = if tw > 1 { (sw - 1) as f64 / (tw - 1) as f64 } else { 0.0 };
    for i in 0..th {
        let sy = i as f64 * row_scale;
        let y0 = sy.floor() as usize;
        let fy = sy - y0 as f64;
        let y1 = if fy > 0.0 { y0 + 1 } else { y0 };
        for j in 0..tw {
            let sx = j as f64 * col_scale;
            let x0 = sx.floor() as usize;
            let fx = sx - x0 as f64;
            let x1 = if fx > 0.0 { x0 + 1 } else { x0 };
            for c in 0..d {
                // Exact-hit paths keep copies bit-identical.
                let v = match (fy > 0.0, fx > 0.0) {
                    (false, false) => featmap[(y0, x0, c)],
                    (false, true) => {
                        (1.0 - fx) * featmap[(y0, x0, c)] + fx * featmap[(y0, x1, c)]
                    }
                    (true, false) => {
                        (1.0 - fy) * featmap[(y0, x0, c)] + fy * featmap[(y1, x0, c)]
                    }
                    (true, true) => {
                        let top = (1.0 - fx) * featmap[(y0, x0, c)] + fx * featmap[(y0, x1, c)];
                        let bot = (1.0 - fx) * featmap[(y1, x0, c)] + fx * featmap[(y1, x1, c)];
                        (1.0 - fy) * top + fy * bot
                    }
                };
                out[(i, j, c)] = v;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn translation(x: f64, y: f64, z: f64) -> RigidTransform {
        let mut m = Matrix4::identity();
        m[(0, 3)] = x;
        m[(1, 3)] = y;
        m[(2, 3)] = z;
        RigidTransform::new(m).unwrap()
    }

    fn rot_z(angle: f64) -> RigidTransform {
        let (s, c) = angle.sin_cos();
        let mut m = Matrix4::identity();
        m[(0, 0)] = c;
        m[(0, 1)] = -s;
        m[(1, 0)] = s;
        m[(1, 1)] = c;
        RigidTransform::new(m).unwrap()
    }

    fn ident_k() -> Intrinsics {
        Intrinsics::from_row_slice(&[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0])
    }

    /// Independent 4x4 product, triple loop, no linear-algebra crate.
    fn matmul4_oracle(a: &Matrix4<f64>, b: &Matrix4<f64>) -> [[f64; 4]; 4] {
        let mut out = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                let mut acc = 0.0;
                for k in 0..4 {
                    acc += a[(i, k)] * b[(k, j)];
                }
                out[i][j] = acc;
            }
        }
        out
    }

    #[test]
    fn compose_identity_chain() {
        let id = RigidTransform::identity();
        let out = compose_extrinsic(&[id, id, id, id]).unwrap();
        assert_eq!(out.matrix(), &Matrix4::identity());
    }

    #[test]
    fn compose_translations_add() {
        let out = compose_extrinsic(&[translation(1.0, 0.0, 0.0), translation(2.0, 0.0, 0.0)])
            .unwrap();
        assert_eq!(out.apply([0.0, 0.0, 0.0]), [3.0, 0.0, 0.0]);
    }

    #[test]
    fn compose_order_matters_and_matches_oracle() {
        let t = translation(1.0, 0.0, 0.0);
        let r = rot_z(std::f64::consts::FRAC_PI_2);
        let tr = compose_extrinsic(&[t, r]).unwrap();
        let rt = compose_extrinsic(&[r, t]).unwrap();
        assert_ne!(tr.matrix(), rt.matrix());
        let expect_tr = matmul4_oracle(t.matrix(), r.matrix());
        let expect_rt = matmul4_oracle(r.matrix(), t.matrix());
        for i in 0..4 {
            for j in 0..4 {
                assert_abs_diff_eq!(tr.matrix()[(i, j)], expect_tr[i][j], epsilon = 1e-12);
                assert_abs_diff_eq!(rt.matrix()[(i, j)], expect_rt[i][j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn compose_rejects_non_rigid_naming_index() {
        let mut bad = Matrix4::identity();
        bad[(0, 0)] = 2.0;
        let chain = [
            RigidTransform::identity(),
            RigidTransform { matrix: bad },
            RigidTransform::identity(),
        ];
        match compose_extrinsic(&chain) {
            Err(GeometryError::NotRigid { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected NotRigid at index 1, got {other:?}"),
        }
    }

    #[test]
    fn compose_associativity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let parts: Vec<RigidTransform> = (0..4)
                .map(|_| {
                    let r = rot_z(rng.gen_range(-3.0..3.0));
                    let t = translation(
                        rng.gen_range(-2.0..2.0),
                        rng.gen_range(-2.0..2.0),
                        rng.gen_range(-2.0..2.0),
                    );
                    compose_extrinsic(&[t, r]).unwrap()
                })
                .collect();
            let whole = compose_extrinsic(&parts).unwrap();
            let folded = parts[1..]
                .iter()
                .fold(parts[0], |acc, t| compose_extrinsic(&[acc, *t]).unwrap());
            for i in 0..4 {
                for j in 0..4 {
                    assert_abs_diff_eq!(
                        whole.matrix()[(i, j)],
                        folded.matrix()[(i, j)],
                        epsilon = 1e-9
                    );
                }
            }
        }
    }

    #[test]
    fn project_optical_axis() {
        let cloud = PointCloud::new(vec![[0.0, 0.0, 2.0]], None).unwrap();
        let cam = CameraModel::new(ident_k(), RigidTransform::identity(), 10, 10).unwrap();
        let p = project_points(&cloud, &cam);
        assert_eq!((p[0].u, p[0].v, p[0].depth), (0.0, 0.0, 2.0));
    }

    #[test]
    fn project_hand_pinhole() {
        let k = Intrinsics::from_row_slice(&[
            2.0, 0.0, 3.0, 0.0, //
            0.0, 2.0, 4.0, 0.0, //
            0.0, 0.0, 1.0, 0.0,
        ]);
        let cloud = PointCloud::new(vec![[1.0, 1.0, 2.0]], None).unwrap();
        let cam = CameraModel::new(k, RigidTransform::identity(), 10, 10).unwrap();
        let p = project_points(&cloud, &cam);
        assert_eq!((p[0].u, p[0].v, p[0].depth), (4.0, 5.0, 2.0));
    }

    #[test]
    fn project_behind_camera_invalid_fov() {
        let cloud = PointCloud::new(vec![[0.0, 0.0, -1.0]], None).unwrap();
        let cam = CameraModel::new(ident_k(), RigidTransform::identity(), 10, 10).unwrap();
        let p = project_points(&cloud, &cam);
        assert_eq!(p[0].depth, -1.0);
        assert!(p[0].is_valid());
        let corr = build_correspondence(&cloud, &cam);
        assert!(!corr.in_fov[0]);
    }

    #[test]
    fn project_zero_depth_flagged() {
        let cloud = PointCloud::new(vec![[1.0, 1.0, 0.0]], None).unwrap();
        let cam = CameraModel::new(ident_k(), RigidTransform::identity(), 10, 10).unwrap();
        let p = project_points(&cloud, &cam);
        assert!(!p[0].is_valid());
        assert!(p[0].u.is_nan());
    }

    #[test]
    fn scale_consistency_of_normalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let h = [
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(0.1..5.0),
            ];
            let lambda: f64 = rng.gen_range(0.1..10.0);
            let a = normalize_homogeneous(h);
            let b = normalize_homogeneous([h[0] * lambda, h[1] * lambda, h[2] * lambda]);
            assert_abs_diff_eq!(a.u, b.u, epsilon = 1e-12);
            assert_abs_diff_eq!(a.v, b.v, epsilon = 1e-12);
        }
    }

    #[test]
    fn correspondence_floor_and_bounds() {
        // u = 4.7, v = 5.2 at depth 2: in FOV of a 10x8 image, pixel (5, 4).
        let k = Intrinsics::from_row_slice(&[
            1.0, 0.0, 4.7, 0.0, //
            0.0, 1.0, 5.2, 0.0, //
            0.0, 0.0, 1.0, 0.0,
        ]);
        let cloud = PointCloud::new(vec![[0.0, 0.0, 2.0]], None).unwrap();
        let cam = CameraModel::new(k, RigidTransform::identity(), 10, 8).unwrap();
        let corr = build_correspondence(&cloud, &cam);
        assert!(corr.in_fov[0]);
        assert_eq!(corr.pixel[0], (5, 4));
        assert_eq!(corr.n_overlap, 1);
    }

    #[test]
    fn correspondence_negative_column_out() {
        let k = Intrinsics::from_row_slice(&[
            1.0, 0.0, -0.1, 0.0, //
            0.0, 1.0, 3.0, 0.0, //
            0.0, 0.0, 1.0, 0.0,
        ]);
        let cloud = PointCloud::new(vec![[0.0, 0.0, 1.0]], None).unwrap();
        let cam = CameraModel::new(k, RigidTransform::identity(), 10, 8).unwrap();
        let corr = build_correspondence(&cloud, &cam);
        assert!(!corr.in_fov[0]);
        assert_eq!(corr.n_overlap, 0);
    }

    /// Scalar per-point re-evaluation of the projection + FOV rule, written
    /// without the production code path.
    fn fov_oracle(p: [f64; 3], k: &Intrinsics, t: &Matrix4<f64>, w: usize, h: usize) -> bool {
        let hp = [p[0], p[1], p[2], 1.0];
        let mut cam = [0.0; 4];
        for (i, c) in cam.iter_mut().enumerate() {
            *c = (0..4).map(|j| t[(i, j)] * hp[j]).sum();
        }
        let mut img = [0.0; 3];
        for (i, o) in img.iter_mut().enumerate() {
            *o = (0..4).map(|j| k[(i, j)] * cam[j]).sum();
        }
        let depth = img[2];
        if depth <= 0.0 {
            return false;
        }
        let u = (img[0] / depth).floor();
        let v = (img[1] / depth).floor();
        u >= 0.0 && u < w as f64 && v >= 0.0 && v < h as f64
    }

    #[test]
    fn correspondence_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let xyz: Vec<[f64; 3]> = (0..200)
            .map(|_| {
                [
                    rng.gen_range(-4.0..4.0),
                    rng.gen_range(-4.0..4.0),
                    rng.gen_range(-4.0..4.0),
                ]
            })
            .collect();
        let cloud = PointCloud::new(xyz.clone(), None).unwrap();
        let k = Intrinsics::from_row_slice(&[
            3.0, 0.0, 4.0, 0.0, //
            0.0, 3.0, 3.0, 0.0, //
            0.0, 0.0, 1.0, 0.0,
        ]);
        let t = compose_extrinsic(&[translation(0.2, -0.1, 0.5), rot_z(0.3)]).unwrap();
        let cam = CameraModel::new(k, t, 9, 7).unwrap();
        let corr = build_correspondence(&cloud, &cam);
        for (i, p) in xyz.iter().enumerate() {
            assert_eq!(corr.in_fov[i], fov_oracle(*p, &k, t.matrix(), 9, 7), "point {i}");
        }
        assert_eq!(corr.n_overlap, corr.in_fov.iter().filter(|&&f| f).count());
    }

    #[test]
    fn correspondence_pixels_always_in_bounds_fuzz() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let n = rng.gen_range(1..60);
            let xyz: Vec<[f64; 3]> = (0..n)
                .map(|_| {
                    [
                        rng.gen_range(-10.0..10.0),
                        rng.gen_range(-10.0..10.0),
                        rng.gen_range(-10.0..10.0),
                    ]
                })
                .collect();
            let cloud = PointCloud::new(xyz, None).unwrap();
            let f: f64 = rng.gen_range(0.5..6.0);
            let k = Intrinsics::from_row_slice(&[
                f,
                0.0,
                rng.gen_range(-3.0..6.0),
                0.0,
                0.0,
                f,
                rng.gen_range(-3.0..6.0),
                0.0,
                0.0,
                0.0,
                1.0,
                0.0,
            ]);
            let t = compose_extrinsic(&[
                translation(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ),
                rot_z(rng.gen_range(-3.0..3.0)),
            ])
            .unwrap();
            let (w, h) = (rng.gen_range(1..12), rng.gen_range(1..12));
            let cam = CameraModel::new(k, t, w, h).unwrap();
            let corr = build_correspondence(&cloud, &cam);
            assert!(corr.n_overlap <= cloud.len());
            for &(row, col) in &corr.pixel {
                assert!((row as usize) < h && (col as usize) < w);
            }
        }
    }

    #[test]
    fn upsample_constant_from_single_pixel() {
        let mut src = Array3::zeros((1, 1, 1));
        src[(0, 0, 0)] = 7.0;
        let out = upsample_feature_map(&src, (4, 4)).unwrap();
        assert!(out.iter().all(|&v| v == 7.0));
    }

    #[test]
    fn upsample_hand_bilinear_center() {
        let mut src = Array3::zeros((2, 2, 1));
        src[(0, 0, 0)] = 0.0;
        src[(0, 1, 0)] = 2.0;
        src[(1, 0, 0)] = 4.0;
        src[(1, 1, 0)] = 6.0;
        let out = upsample_feature_map(&src, (3, 3)).unwrap();
        assert_abs_diff_eq!(out[(1, 1, 0)], 3.0, epsilon = 1e-12);
        // Corners map exactly to corners under corner-aligned sampling.
        assert_eq!(out[(0, 0, 0)], 0.0);
        assert_eq!(out[(0, 2, 0)], 2.0);
        assert_eq!(out[(2, 0, 0)], 4.0);
        assert_eq!(out[(2, 2, 0)], 6.0);
    }

    #[test]
    fn upsample_identity_is_bit_copy() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let src = Array3::from_shape_fn((5, 6, 3), |_| rng.gen_range(-1.0..1.0));
        let out = upsample_feature_map(&src, (5, 6)).unwrap();
        assert_eq!(src, out);
    }

    #[test]
    fn upsample_rejects_shrink() {
        let src = Array3::<f64>::zeros((4, 4, 2));
        assert!(matches!(
            upsample_feature_map(&src, (3, 4)),
            Err(GeometryError::UpsampleShrink { .. })
        ));
    }
}
