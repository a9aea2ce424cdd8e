//! On-disk formats: KITTI-style point/label binaries, binary PPM images,
//! plain-text calibration, and the dataset manifest.

use super::{DataError, Scene};
use crate::geometry::{CameraModel, Intrinsics, PointCloud, RigidTransform};
use nalgebra::Matrix4;
use ndarray::Array3;
use std::fs;
use std::io::Write;
use std::path::Path;

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io { path: path.display().to_string(), source }
}

/// Writes `<dir>/<id>/{points.bin, labels.bin, image.ppm, calib.txt}`.
pub fn save_scene(scene: &Scene, dir: &Path) -> Result<(), DataError> {
    let scene_dir = dir.join(&scene.id);
    fs::create_dir_all(&scene_dir).map_err(|e| io_err(&scene_dir, e))?;

    let points_path = scene_dir.join("points.bin");
    let mut bytes = Vec::with_capacity(scene.n_points() * 16);
    for (i, p) in scene.cloud.xyz.iter().enumerate() {
        for &c in p {
            bytes.extend_from_slice(&(c as f32).to_le_bytes());
        }
        let intensity = scene.cloud.intensity.as_ref().map(|v| v[i]).unwrap_or(0.0);
        bytes.extend_from_slice(&(intensity as f32).to_le_bytes());
    }
    fs::write(&points_path, bytes).map_err(|e| io_err(&points_path, e))?;

    let labels_path = scene_dir.join("labels.bin");
    let mut bytes = Vec::with_capacity(scene.labels.len() * 4);
    for &l in &scene.labels {
        bytes.extend_from_slice(&l.to_le_bytes());
    }
    fs::write(&labels_path, bytes).map_err(|e| io_err(&labels_path, e))?;

    write_ppm(&scene_dir.join("image.ppm"), &scene.image)?;
    write_calibration(&scene_dir.join("calib.txt"), &scene.cam)?;
    Ok(())
}

/// Loads a scene from its directory; the directory name becomes the id.
pub fn load_scene(scene_dir: &Path) -> Result<Scene, DataError> {
    let id = scene_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scene".to_string());

    let points_path = scene_dir.join("points.bin");
    let bytes = fs::read(&points_path).map_err(|e| io_err(&points_path, e))?;
    if bytes.len() % 16 != 0 || bytes.is_empty() {
        return Err(DataError::BadFileSize {
            path: points_path.display().to_string(),
            expected: (bytes.len() as u64).div_ceil(16) * 16,
            detail: "16 bytes per point: float32 x, y, z, intensity".into(),
            actual: bytes.len() as u64,
        });
    }
    let n = bytes.len() / 16;
    let mut xyz = Vec::with_capacity(n);
    let mut intensity = Vec::with_capacity(n);
    for chunk in bytes.chunks_exact(16) {
        let f = |o: usize| {
            f32::from_le_bytes([chunk[o], chunk[o + 1], chunk[o + 2], chunk[o + 3]]) as f64
        };
        xyz.push([f(0), f(4), f(8)]);
        intensity.push(f(12));
    }

    let labels_path = scene_dir.join("labels.bin");
    let bytes = fs::read(&labels_path).map_err(|e| io_err(&labels_path, e))?;
    if bytes.len() != n * 4 {
        return Err(DataError::BadFileSize {
            path: labels_path.display().to_string(),
            expected: (n * 4) as u64,
            detail: format!("4 bytes per point for {n} points"),
            actual: bytes.len() as u64,
        });
    }
    let labels: Vec<u32> =
        bytes.chunks_exact(4).map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();

    let image = read_ppm(&scene_dir.join("image.ppm"))?;
    let cam = parse_calibration(&scene_dir.join("calib.txt"))?;
    let cloud = PointCloud::new(xyz, Some(intensity))?;
    Scene::new(cloud, labels, image, cam, id)
}

/// Binary 8-bit PPM (P6). Values are quantized to 1/255 steps; scenes
/// produced by the generator are already on that grid, so round trips are
/// exact.
pub fn write_ppm(path: &Path, image: &Array3<f64>) -> Result<(), DataError> {
    let (h, w, c) = image.dim();
    assert_eq!(c, 3, "PPM images are RGB");
    let mut out = Vec::with_capacity(h * w * 3 + 32);
    out.extend_from_slice(format!("P6\n{w} {h}\n255\n").as_bytes());
    for i in 0..h {
        for j in 0..w {
            for ch in 0..3 {
                out.push((image[(i, j, ch)] * 255.0).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn read_ppm(path: &Path) -> Result<Array3<f64>, DataError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let malformed = |line: usize, message: &str| DataError::Malformed {
        path: path.display().to_string(),
        line,
        message: message.to_string(),
    };
    // Header: three whitespace-separated tokens after the magic.
    if !bytes.starts_with(b"P6") {
        return Err(malformed(1, "expected P6 magic"));
    }
    let mut pos = 2usize;
    let mut fields = Vec::new();
    while fields.len() < 3 && pos < bytes.len() {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            break;
        }
        let token = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| malformed(1, "non-ASCII header"))?;
        fields.push(
            token
                .parse::<usize>()
                .map_err(|_| malformed(1, "header fields must be integers"))?,
        );
    }
    if fields.len() != 3 || fields[2] != 255 {
        return Err(malformed(1, "expected `P6 <w> <h> 255`"));
    }
    let (w, h) = (fields[0], fields[1]);
    pos += 1; // single whitespace byte after maxval
    let expected = h * w * 3;
    if bytes.len() < pos + expected {
        return Err(DataError::BadFileSize {
            path: path.display().to_string(),
            expected: (pos + expected) as u64,
            detail: format!("P6 header plus {h}x{w}x3 bytes"),
            actual: bytes.len() as u64,
        });
    }
    let data = &bytes[pos..pos + expected];
    Ok(Array3::from_shape_fn((h, w, 3), |(i, j, c)| {
        data[(i * w + j) * 3 + c] as f64 / 255.0
    }))
}

/// Plain-text calibration: `K:` followed by 12 row-major floats, `T:` by 16,
/// `size:` by `W H`. `#` lines are comments. Floats are printed with Rust's
/// shortest round-trip formatting, so write-then-parse is exact.
pub fn write_calibration(path: &Path, cam: &CameraModel) -> Result<(), DataError> {
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut text = String::from("# camera calibration\n");
    text.push_str("K:");
    for i in 0..3 {
        for j in 0..4 {
            text.push_str(&format!(" {}", cam.k[(i, j)]));
        }
    }
    text.push_str("\nT:");
    for i in 0..4 {
        for j in 0..4 {
            text.push_str(&format!(" {}", cam.t.matrix()[(i, j)]));
        }
    }
    text.push_str(&format!("\nsize: {} {}\n", cam.width, cam.height));
    f.write_all(text.as_bytes()).map_err(|e| io_err(path, e))
}

pub fn parse_calibration(path: &Path) -> Result<CameraModel, DataError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let malformed = |line: usize, message: String| DataError::Malformed {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut k: Option<Intrinsics> = None;
    let mut t: Option<RigidTransform> = None;
    let mut size: Option<(usize, usize)> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, rest) = line
            .split_once(':')
            .ok_or_else(|| malformed(line_no, "expected `key: values`".into()))?;
        let parse_floats = |rest: &str, want: usize| -> Result<Vec<f64>, DataError> {
            let vals: Result<Vec<f64>, _> =
                rest.split_whitespace().map(|tok| tok.parse::<f64>()).collect();
            let vals =
                vals.map_err(|e| malformed(line_no, format!("bad float: {e}")))?;
            if vals.len() != want {
                return Err(malformed(
                    line_no,
                    format!("expected {want} floats, got {}", vals.len()),
                ));
            }
            Ok(vals)
        };
        match key.trim() {
            "K" => {
                let vals = parse_floats(rest, 12)?;
                k = Some(Intrinsics::from_row_slice(&vals));
            }
            "T" => {
                let vals = parse_floats(rest, 16)?;
                let m = Matrix4::from_row_slice(&vals);
                t = Some(RigidTransform::new(m).map_err(|e| malformed(line_no, e.to_string()))?);
            }
            "size" => {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 2 {
                    return Err(malformed(line_no, "expected `size: W H`".into()));
                }
                let w = parts[0]
                    .parse::<usize>()
                    .map_err(|e| malformed(line_no, format!("bad width: {e}")))?;
                let h = parts[1]
                    .parse::<usize>()
                    .map_err(|e| malformed(line_no, format!("bad height: {e}")))?;
                size = Some((w, h));
            }
            other => {
                return Err(malformed(line_no, format!("unknown key `{other}`")));
            }
        }
    }
    let k = k.ok_or_else(|| malformed(0, "missing K line".into()))?;
    let t = t.ok_or_else(|| malformed(0, "missing T line".into()))?;
    let (w, h) = size.ok_or_else(|| malformed(0, "missing size line".into()))?;
    Ok(CameraModel::new(k, t, w, h)?)
}

/// Newline-separated scene ids.
pub fn save_manifest(dir: &Path, ids: &[String]) -> Result<(), DataError> {
    let path = dir.join("manifest.txt");
    let mut text = String::new();
    for id in ids {
        text.push_str(id);
        text.push('\n');
    }
    fs::write(&path, text).map_err(|e| io_err(&path, e))
}

pub fn load_manifest(dir: &Path) -> Result<Vec<String>, DataError> {
    let path = dir.join("manifest.txt");
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    Ok(text.lines().filter(|l| !l.trim().is_empty()).map(|l| l.trim().to_string()).collect())
}
