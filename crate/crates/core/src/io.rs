//! Image, feature-stack and feature-CSV file formats.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use image::{ImageBuffer, Luma};
use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::types::{FeatureMatrix, LabeledDataset};

/// Grayscale image, rows × columns, intensities nominally in [0, 1].
pub type Image = Array2<f64>;

const FSTK_MAGIC: &[u8; 4] = b"FSTK";
const FSTK_VERSION: u32 = 1;

/// Write `bytes` to a sibling temp file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Load an 8- or 16-bit grayscale PNG/PGM as reals in [0, 1].
pub fn load_gray_image(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let gray = img.to_luma16();
    let (w, h) = gray.dimensions();
    let data: Vec<f64> = gray.pixels().map(|p| f64::from(p.0[0]) / 65535.0).collect();
    Ok(Array2::from_shape_vec((h as usize, w as usize), data).expect("buffer matches dims"))
}

/// Quantize [0, 1] reals to 8 bits with a fixed mapping (values clamped).
pub fn to_gray8(img: &Image) -> ImageBuffer<Luma<u8>, Vec<u8>> {
    let (h, w) = img.dim();
    let buf: Vec<u8> = img
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    ImageBuffer::from_raw(w as u32, h as u32, buf).expect("buffer matches dims")
}

pub fn encode_png<P>(img: &ImageBuffer<P, Vec<P::Subpixel>>) -> Result<Vec<u8>>
where
    P: image::Pixel + image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
{
    let mut bytes = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: "<png>".into(),
            source,
        })?;
    Ok(bytes)
}

pub fn save_gray_png(path: &Path, img: &Image) -> Result<()> {
    write_atomic(path, &encode_png(&to_gray8(img))?)
}

/// Serialize a d×h×w stack in the flat little-endian `FSTK` layout.
pub fn encode_feature_stack(planes: &Array3<f64>) -> Vec<u8> {
    let (d, h, w) = planes.dim();
    let mut out = Vec::with_capacity(20 + 8 * planes.len());
    out.extend_from_slice(FSTK_MAGIC);
    for v in [FSTK_VERSION, h as u32, w as u32, d as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &v in planes.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_feature_stack(bytes: &[u8], path: &Path) -> Result<Array3<f64>> {
    if bytes.len() < 20 || &bytes[..4] != FSTK_MAGIC {
        return Err(Error::parse(path, "missing FSTK header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let version = word(0);
    if version != FSTK_VERSION {
        return Err(Error::FormatVersion {
            expected: FSTK_VERSION,
            found: version,
        });
    }
    let (h, w, d) = (word(1) as usize, word(2) as usize, word(3) as usize);
    let body = &bytes[20..];
    if body.len() != 8 * h * w * d {
        return Err(Error::parse(
            path,
            format!("expected {} payload bytes, found {}", 8 * h * w * d, body.len()),
        ));
    }
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Array3::from_shape_vec((d, h, w), values).expect("length checked"))
}

pub fn read_feature_stack(path: &Path) -> Result<Array3<f64>> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_feature_stack(&bytes, path)
}

/// CSV with header `f0..f{d-1}` and an optional trailing `label` column.
pub fn features_to_csv(features: &FeatureMatrix, labels: Option<&[usize]>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (0..features.n_dims()).map(|i| format!("f{i}")).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for (i, row) in features.rows().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        if let Some(l) = labels {
            rec.push(l[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.into_inner()
        .map_err(|e| Error::InvalidInput(format!("csv flush: {e}")))
}

/// Parse a feature CSV. Returns labels when a trailing `label` column exists.
pub fn features_from_csv(text: &str, path: &Path) -> Result<(FeatureMatrix, Option<Vec<usize>>)> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers()?.clone();
    let has_label = header.iter().next_back() == Some("label");
    let d = header.len() - usize::from(has_label);
    for (i, h) in header.iter().take(d).enumerate() {
        if h != format!("f{i}") {
            return Err(Error::parse(path, format!("column {i} named {h:?}, expected f{i}")));
        }
    }
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .take(d)
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(path, format!("row {}: {e}", line + 1)))?;
        rows.push(row);
        if has_label {
            let l = rec
                .get(d)
                .unwrap_or("")
                .trim()
                .parse::<usize>()
                .map_err(|e| Error::parse(path, format!("row {} label: {e}", line + 1)))?;
            labels.push(l);
        }
    }
    let features = FeatureMatrix::from_rows(&rows)?;
    Ok((features, has_label.then_some(labels)))
}

pub fn read_features_csv(path: &Path) -> Result<(FeatureMatrix, Option<Vec<usize>>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    features_from_csv(&text, path)
}

/// Read a labeled dataset; class names default to `class0..` when not given.
pub fn read_labeled_csv(path: &Path, class_names: Option<Vec<String>>) -> Result<LabeledDataset> {
    let (features, labels) = read_features_csv(path)?;
    let labels = labels.ok_or_else(|| Error::parse(path, "missing label column"))?;
    let names = class_names.unwrap_or_else(|| {
        let l = labels.iter().max().map_or(1, |m| m + 1);
        (0..l).map(|i| format!("class{i}")).collect()
    });
    LabeledDataset::new(features, labels, names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn fstk_layout_is_little_endian_plane_major() {
        let planes = Array3::from_shape_fn((2, 1, 2), |(d, _, c)| (10 * d + c) as f64);
        let bytes = encode_feature_stack(&planes);
        assert_eq!(&bytes[..4], b"FSTK");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1); // h
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2); // w
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 2); // d
        let third = f64::from_le_bytes(bytes[36..44].try_into().unwrap());
        assert_eq!(third, 10.0);
        let back = decode_feature_stack(&bytes, Path::new("x")).unwrap();
        assert_eq!(back, planes);
        assert!(decode_feature_stack(&bytes[..bytes.len() - 1], Path::new("x")).is_err());
    }

    #[test]
    fn feature_csv_round_trip_with_labels() {
        let f = FeatureMatrix::new(array![[0.1, 2.0], [1e-17, -3.5]]).unwrap();
        let bytes = features_to_csv(&f, Some(&[1, 0])).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.starts_with("f0,f1,label\n"));
        let (back, labels) = features_from_csv(&text, Path::new("x")).unwrap();
        assert_eq!(back, f);
        assert_eq!(labels, Some(vec![1, 0]));
    }

    #[test]
    fn feature_csv_rejects_bad_header() {
        assert!(features_from_csv("a,b\n1,2\n", Path::new("x")).is_err());
        let (_, labels) = features_from_csv("f0\n1\n", Path::new("x")).unwrap();
        assert!(labels.is_none());
    }

    #[test]
    fn gray_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.png");
        let img = Array2::from_shape_fn((3, 4), |(r, c)| ((r * 4 + c) as f64) / 11.0);
        save_gray_png(&p, &img).unwrap();
        let back = load_gray_image(&p).unwrap();
        assert_eq!(back.dim(), (3, 4));
        for (a, b) in img.iter().zip(back.iter()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }
}
