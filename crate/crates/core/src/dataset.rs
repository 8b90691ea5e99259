//! On-disk sequence storage.
//!
//! Layout per sequence directory:
//!
//! ```text
//! <name>/
//!   meta.json          name, seed, frame count, frame size
//!   groundtruth.txt    one "x,y,w,h" line per frame
//!   anchors.txt        one re-initialization frame index per line
//!   frames/000000.ppm  binary P6, 8-bit RGB
//!   masks/000000.pgm   binary P5, 0 = background, 255 = object
//! ```
//!
//! Generated pixels are integer-quantized, so save → load is bit-exact.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::BBox;
use crate::img::{image_dims, BinaryMap, Image};
use crate::synth::SequenceRecord;
use crate::tensor::Tensor;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Meta {
    name: String,
    seed: u64,
    frames: usize,
    width: usize,
    height: usize,
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::io(path.display().to_string(), e)
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn frame_file(dir: &Path, idx: usize) -> PathBuf {
    dir.join("frames").join(format!("{:08}.ppm", idx))
}

fn mask_file(dir: &Path, idx: usize) -> PathBuf {
    dir.join("masks").join(format!("{:08}.pgm", idx))
}

/// Write one frame as binary PPM (P6). Pixels are rounded to bytes; the
/// generator only produces integers so this loses nothing for saved suites.
fn write_ppm(path: &Path, img: &Image) -> Result<()> {
    let (h, w) = image_dims(img)?;
    let mut buf = Vec::with_capacity(20 + 3 * w * h);
    write!(buf, "P6\n{} {}\n255\n", w, h).expect("vec write");
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                buf.push(img.at(&[c, y, x]).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    fs::write(path, buf).map_err(|e| io_err(path, e))
}

/// Binary netpbm headers: magic, whitespace-separated dims, max value, then
/// a single whitespace byte before the raster.
fn parse_pnm_header(path: &Path, bytes: &[u8], magic: &str) -> Result<(usize, usize, usize)> {
    let mut pos = 0usize;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos == start {
            return Err(parse_err(path, 1, "truncated netpbm header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| {
            parse_err(path, 1, "non-ascii bytes in netpbm header")
        })?);
    }
    if fields[0] != magic {
        return Err(parse_err(
            path,
            1,
            format!("expected {} file, found magic '{}'", magic, fields[0]),
        ));
    }
    let dims: Vec<usize> = fields[1..4]
        .iter()
        .map(|f| {
            f.parse::<usize>()
                .map_err(|_| parse_err(path, 1, format!("bad header field '{}'", f)))
        })
        .collect::<Result<_>>()?;
    if dims[2] != 255 {
        return Err(parse_err(
            path,
            1,
            format!("only 8-bit netpbm supported, max value {}", dims[2]),
        ));
    }
    // Exactly one whitespace byte separates the header from the raster.
    Ok((dims[0], dims[1], pos + 1))
}

fn read_ppm(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let (w, h, offset) = parse_pnm_header(path, &bytes, "P6")?;
    let raster = &bytes[offset.min(bytes.len())..];
    if raster.len() != 3 * w * h {
        return Err(parse_err(
            path,
            1,
            format!("raster holds {} bytes, expected {}", raster.len(), 3 * w * h),
        ));
    }
    let mut img = Tensor::zeros(&[3, h, w]);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                img.set(&[c, y, x], raster[(y * w + x) * 3 + c] as f64);
            }
        }
    }
    Ok(img)
}

fn write_pgm(path: &Path, mask: &BinaryMap) -> Result<()> {
    let mut buf = Vec::with_capacity(20 + mask.width * mask.height);
    write!(buf, "P5\n{} {}\n255\n", mask.width, mask.height).expect("vec write");
    buf.extend(mask.data().iter().map(|&b| if b { 255u8 } else { 0 }));
    fs::write(path, buf).map_err(|e| io_err(path, e))
}

fn read_pgm(path: &Path) -> Result<BinaryMap> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let (w, h, offset) = parse_pnm_header(path, &bytes, "P5")?;
    let raster = &bytes[offset.min(bytes.len())..];
    if raster.len() != w * h {
        return Err(parse_err(
            path,
            1,
            format!("raster holds {} bytes, expected {}", raster.len(), w * h),
        ));
    }
    let data = raster
        .iter()
        .enumerate()
        .map(|(i, &b)| match b {
            0 => Ok(false),
            255 => Ok(true),
            other => Err(parse_err(
                path,
                1,
                format!("mask byte {} at offset {} is neither 0 nor 255", other, i),
            )),
        })
        .collect::<Result<Vec<bool>>>()?;
    BinaryMap::from_data(w, h, data)
}

/// Save a sequence under `root/<name>/`, creating directories as needed.
pub fn save_sequence(root: &Path, seq: &SequenceRecord) -> Result<PathBuf> {
    if seq.frames.is_empty() {
        return Err(Error::Degenerate("saving an empty sequence".into()));
    }
    let (h, w) = image_dims(&seq.frames[0])?;
    let dir = root.join(&seq.name);
    for sub in ["frames", "masks"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| io_err(&p, e))?;
    }
    let meta = Meta {
        name: seq.name.clone(),
        seed: seq.seed,
        frames: seq.frames.len(),
        width: w,
        height: h,
    };
    let meta_path = dir.join("meta.json");
    let json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    fs::write(&meta_path, json).map_err(|e| io_err(&meta_path, e))?;

    let gt_path = dir.join("groundtruth.txt");
    let mut gt = String::new();
    for b in &seq.gt_boxes {
        gt.push_str(&format!("{},{},{},{}\n", b.x, b.y, b.w, b.h));
    }
    fs::write(&gt_path, gt).map_err(|e| io_err(&gt_path, e))?;

    let anchors_path = dir.join("anchors.txt");
    let anchors: String = seq.anchors.iter().map(|a| format!("{}\n", a)).collect();
    fs::write(&anchors_path, anchors).map_err(|e| io_err(&anchors_path, e))?;

    for (i, (frame, mask)) in seq.frames.iter().zip(&seq.gt_masks).enumerate() {
        write_ppm(&frame_file(&dir, i), frame)?;
        write_pgm(&mask_file(&dir, i), mask)?;
    }
    Ok(dir)
}

/// Load one sequence from its directory.
pub fn load_sequence(dir: &Path) -> Result<SequenceRecord> {
    let meta_path = dir.join("meta.json");
    let meta_raw = fs::read_to_string(&meta_path).map_err(|e| io_err(&meta_path, e))?;
    let meta: Meta = serde_json::from_str(&meta_raw)
        .map_err(|e| parse_err(&meta_path, e.line(), e.to_string()))?;
    if meta.frames < 2 {
        return Err(parse_err(&meta_path, 1, "sequence shorter than 2 frames"));
    }

    let gt_path = dir.join("groundtruth.txt");
    let gt_raw = fs::read_to_string(&gt_path).map_err(|e| io_err(&gt_path, e))?;
    let mut gt_boxes = Vec::with_capacity(meta.frames);
    for (i, line) in gt_raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<f64> = line
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(&gt_path, i + 1, format!("bad number '{}'", p)))
            })
            .collect::<Result<_>>()?;
        if parts.len() != 4 {
            return Err(parse_err(
                &gt_path,
                i + 1,
                format!("expected 4 comma-separated fields, got {}", parts.len()),
            ));
        }
        gt_boxes.push(BBox::new(parts[0], parts[1], parts[2], parts[3]));
    }
    if gt_boxes.len() != meta.frames {
        return Err(parse_err(
            &gt_path,
            gt_boxes.len() + 1,
            format!("{} boxes for {} frames", gt_boxes.len(), meta.frames),
        ));
    }

    let anchors_path = dir.join("anchors.txt");
    let anchors_raw = fs::read_to_string(&anchors_path).map_err(|e| io_err(&anchors_path, e))?;
    let mut anchors = Vec::new();
    for (i, line) in anchors_raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let a = line.trim().parse::<usize>().map_err(|_| {
            parse_err(&anchors_path, i + 1, format!("bad anchor index '{}'", line))
        })?;
        if a >= meta.frames {
            return Err(parse_err(
                &anchors_path,
                i + 1,
                format!("anchor {} outside {} frames", a, meta.frames),
            ));
        }
        anchors.push(a);
    }

    let mut frames = Vec::with_capacity(meta.frames);
    let mut gt_masks = Vec::with_capacity(meta.frames);
    for i in 0..meta.frames {
        let img = read_ppm(&frame_file(dir, i))?;
        let (h, w) = image_dims(&img)?;
        if (w, h) != (meta.width, meta.height) {
            return Err(parse_err(
                &frame_file(dir, i),
                1,
                format!(
                    "frame is {}x{}, meta says {}x{}",
                    w, h, meta.width, meta.height
                ),
            ));
        }
        let mask = read_pgm(&mask_file(dir, i))?;
        if (mask.width, mask.height) != (meta.width, meta.height) {
            return Err(parse_err(
                &mask_file(dir, i),
                1,
                format!(
                    "mask is {}x{}, meta says {}x{}",
                    mask.width, mask.height, meta.width, meta.height
                ),
            ));
        }
        frames.push(img);
        gt_masks.push(mask);
    }
    Ok(SequenceRecord {
        name: meta.name,
        seed: meta.seed,
        frames,
        gt_boxes,
        gt_masks,
        anchors,
    })
}

/// Load every sequence directory (any entry holding a meta.json) under
/// `root`, sorted by name for stable ordering.
pub fn load_suite(root: &Path) -> Result<Vec<SequenceRecord>> {
    let entries = fs::read_dir(root).map_err(|e| io_err(root, e))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("meta.json").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Config(format!(
            "no sequence directories under {}",
            root.display()
        )));
    }
    dirs.iter().map(|d| load_sequence(d)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SequenceSpec};

    #[test]
    fn round_trip_is_bit_exact() {
        let rec = generate(&SequenceSpec {
            frames: 3,
            width: 24,
            height: 20,
            object_w: 6.0,
            object_h: 6.0,
            ..Default::default()
        })
        .unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let dir = save_sequence(tmp.path(), &rec).unwrap();
        let back = load_sequence(&dir).unwrap();
        assert_eq!(back.name, rec.name);
        assert_eq!(back.seed, rec.seed);
        assert_eq!(back.anchors, rec.anchors);
        assert_eq!(back.gt_boxes, rec.gt_boxes);
        for (a, b) in rec.frames.iter().zip(&back.frames) {
            assert_eq!(a.data(), b.data(), "frame bytes must round-trip exactly");
        }
        for (a, b) in rec.gt_masks.iter().zip(&back.gt_masks) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn bad_mask_byte_is_a_parse_error() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("bad.pgm");
        let mut buf = b"P5\n2 1\n255\n".to_vec();
        buf.extend([0u8, 17u8]);
        fs::write(&p, buf).unwrap();
        let err = read_pgm(&p).unwrap_err();
        assert!(err.to_string().contains("neither 0 nor 255"), "{}", err);
    }

    #[test]
    fn truncated_frame_is_a_parse_error() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("short.ppm");
        fs::write(&p, b"P6\n4 4\n255\nxx").unwrap();
        let err = read_ppm(&p).unwrap_err();
        assert!(err.to_string().contains("raster holds"), "{}", err);
    }

    #[test]
    fn groundtruth_line_numbers_in_errors() {
        let rec = generate(&SequenceSpec {
            frames: 2,
            width: 24,
            height: 20,
            object_w: 6.0,
            object_h: 6.0,
            ..Default::default()
        })
        .unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let dir = save_sequence(tmp.path(), &rec).unwrap();
        fs::write(dir.join("groundtruth.txt"), "1,2,3,4\n5,6,oops,8\n").unwrap();
        let err = load_sequence(&dir).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{}", err);
    }
}
