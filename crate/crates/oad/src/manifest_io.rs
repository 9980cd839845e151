//! Manifest and window-index CSV files.
//!
//! A manifest names source recordings: `path,class,user_id[,split]`.
//! The segment stage emits a window index
//! (`window_path,source_path,class,user_id,start_sample`), which later
//! stages accept anywhere a manifest is expected (the window path column
//! is used as the instance path). The featurize stage adds image/mels
//! paths and the mean RGB value.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use oad_core::eval::{Manifest, ManifestRow};
use oad_core::segment::ClassLabel;

use crate::csvio;

#[derive(Debug)]
pub enum ManifestError {
    Io(String, io::Error),
    Parse(String, String),
}

impl std::fmt::Display for ManifestError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ManifestError::Io(path, e) => write!(f, "{path}: {e}"),
            ManifestError::Parse(path, msg) => write!(f, "{path}: {msg}"),
        }
    }
}

impl std::error::Error for ManifestError {}

type Result<T> = std::result::Result<T, ManifestError>;

/// One row of a segment/featurize window index.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowIndexRow {
    pub window_path: String,
    pub source_path: String,
    pub class: ClassLabel,
    pub user_id: String,
    pub start_sample: usize,
    /// Featurize outputs; empty before that stage.
    pub image_path: String,
    pub mels_path: String,
    pub mean_rgb: Option<f64>,
}

/// Read a manifest or window index; either way every row resolves to
/// (instance path, class, user_id). Relative paths resolve against the
/// CSV's directory.
pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let display = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| ManifestError::Io(display.clone(), e))?;
    let (header, rows) = csvio::parse_document(&text)
        .ok_or_else(|| ManifestError::Parse(display.clone(), "empty file".into()))?;
    let col = |name: &str| header.iter().position(|h| h == name);

    let (path_col, class_col, user_col) = match (col("path"), col("window_path")) {
        (Some(p), _) => (p, col("class"), col("user_id")),
        (None, Some(p)) => (p, col("class"), col("user_id")),
        (None, None) => {
            return Err(ManifestError::Parse(
                display,
                format!("need a 'path' or 'window_path' column, found {header:?}"),
            ))
        }
    };
    let class_col = class_col
        .ok_or_else(|| ManifestError::Parse(display.clone(), "missing 'class' column".into()))?;
    let user_col = user_col
        .ok_or_else(|| ManifestError::Parse(display.clone(), "missing 'user_id' column".into()))?;
    let split_col = col("split");

    let base = path.parent().unwrap_or(Path::new("."));
    let mut manifest = Manifest::default();
    for (i, row) in rows.iter().enumerate() {
        let need = path_col.max(class_col).max(user_col) + 1;
        if row.len() < need {
            return Err(ManifestError::Parse(
                display,
                format!("row {} has {} fields, need {need}", i + 2, row.len()),
            ));
        }
        let raw = &row[path_col];
        let resolved = if Path::new(raw).is_absolute() {
            PathBuf::from(raw)
        } else {
            base.join(raw)
        };
        manifest.rows.push(ManifestRow {
            path: resolved.to_string_lossy().into_owned(),
            class: ClassLabel::parse(&row[class_col]),
            user_id: row[user_col].clone(),
            split: split_col.and_then(|c| row.get(c)).filter(|s| !s.is_empty()).cloned(),
        });
    }
    manifest
        .validate()
        .map_err(|e| ManifestError::Parse(display, e.to_string()))?;
    Ok(manifest)
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let display = path.display().to_string();
    let mut out = String::new();
    csvio::write_row(&mut out, &["path", "class", "user_id", "split"]);
    for row in &manifest.rows {
        csvio::write_row(
            &mut out,
            &[&row.path, row.class.as_str(), &row.user_id, row.split.as_deref().unwrap_or("")],
        );
    }
    fs::write(path, out).map_err(|e| ManifestError::Io(display, e))
}

pub const WINDOW_INDEX_HEADER: [&str; 5] =
    ["window_path", "source_path", "class", "user_id", "start_sample"];

pub fn write_window_index(path: &Path, rows: &[WindowIndexRow], featurized: bool) -> Result<()> {
    let display = path.display().to_string();
    let mut out = String::new();
    if featurized {
        csvio::write_row(
            &mut out,
            &[
                "window_path",
                "source_path",
                "class",
                "user_id",
                "start_sample",
                "image_path",
                "mels_path",
                "mean_rgb",
            ],
        );
    } else {
        csvio::write_row(&mut out, &WINDOW_INDEX_HEADER);
    }
    for row in rows {
        let start = row.start_sample.to_string();
        if featurized {
            let rgb = row.mean_rgb.map(|v| format!("{v:.4}")).unwrap_or_default();
            csvio::write_row(
                &mut out,
                &[
                    &row.window_path,
                    &row.source_path,
                    row.class.as_str(),
                    &row.user_id,
                    &start,
                    &row.image_path,
                    &row.mels_path,
                    &rgb,
                ],
            );
        } else {
            csvio::write_row(
                &mut out,
                &[&row.window_path, &row.source_path, row.class.as_str(), &row.user_id, &start],
            );
        }
    }
    fs::write(path, out).map_err(|e| ManifestError::Io(display, e))
}

pub fn read_window_index(path: &Path) -> Result<Vec<WindowIndexRow>> {
    let display = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| ManifestError::Io(display.clone(), e))?;
    let (header, rows) = csvio::parse_document(&text)
        .ok_or_else(|| ManifestError::Parse(display.clone(), "empty file".into()))?;
    let col = |name: &str| header.iter().position(|h| h == name);
    let need = |name: &str| {
        col(name).ok_or_else(|| {
            ManifestError::Parse(display.clone(), format!("missing '{name}' column"))
        })
    };
    let window_col = need("window_path")?;
    let source_col = need("source_path")?;
    let class_col = need("class")?;
    let user_col = need("user_id")?;
    let start_col = need("start_sample")?;
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |raw: &str| -> String {
        if raw.is_empty() || Path::new(raw).is_absolute() {
            raw.to_string()
        } else {
            base.join(raw).to_string_lossy().into_owned()
        }
    };

    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let get = |c: usize| row.get(c).cloned().unwrap_or_default();
        let start_sample = get(start_col).parse::<usize>().map_err(|_| {
            ManifestError::Parse(display.clone(), format!("row {}: bad start_sample", i + 2))
        })?;
        out.push(WindowIndexRow {
            window_path: resolve(&get(window_col)),
            source_path: get(source_col),
            class: ClassLabel::parse(&get(class_col)),
            user_id: get(user_col),
            start_sample,
            image_path: col("image_path").map(|c| resolve(&get(c))).unwrap_or_default(),
            mels_path: col("mels_path").map(|c| resolve(&get(c))).unwrap_or_default(),
            mean_rgb: col("mean_rgb").and_then(|c| get(c).parse().ok()),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join("oad-manifest-tests");
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn manifest_round_trip() {
        let m = Manifest {
            rows: vec![
                ManifestRow {
                    path: "/abs/a.wav".into(),
                    class: ClassLabel::Healthy,
                    user_id: "u1".into(),
                    split: None,
                },
                ManifestRow {
                    path: "/abs/b.wav".into(),
                    class: ClassLabel::Cc,
                    user_id: "u2".into(),
                    split: Some("test".into()),
                },
            ],
        };
        let path = temp("manifest.csv");
        write_manifest(&path, &m).unwrap();
        let back = read_manifest(&path).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn manifest_resolves_relative_paths() {
        let path = temp("rel.csv");
        fs::write(&path, "path,class,user_id\nsub/a.wav,flu,u9\n").unwrap();
        let m = read_manifest(&path).unwrap();
        assert!(m.rows[0].path.ends_with("oad-manifest-tests/sub/a.wav"));
    }

    #[test]
    fn manifest_rejects_missing_columns() {
        let path = temp("bad.csv");
        fs::write(&path, "file,klass\nx,y\n").unwrap();
        let err = read_manifest(&path).unwrap_err();
        assert!(err.to_string().contains("path"));
    }

    #[test]
    fn window_index_round_trip_with_features() {
        let rows = vec![WindowIndexRow {
            window_path: "/w/win_0.wav".into(),
            source_path: "src.wav".into(),
            class: ClassLabel::Cb,
            user_id: "u3".into(),
            start_sample: 4410,
            image_path: "/w/spec_0.ppm".into(),
            mels_path: "/w/spec_0.mels".into(),
            mean_rgb: Some(91.25),
        }];
        let path = temp("index.csv");
        write_window_index(&path, &rows, true).unwrap();
        let back = read_window_index(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].window_path, rows[0].window_path);
        assert_eq!(back[0].start_sample, 4410);
        assert_eq!(back[0].mean_rgb, Some(91.25));
    }

    #[test]
    fn window_index_readable_as_manifest() {
        let rows = vec![WindowIndexRow {
            window_path: "/w/win_1.wav".into(),
            source_path: "s.wav".into(),
            class: ClassLabel::Flu,
            user_id: "u7".into(),
            start_sample: 0,
            image_path: String::new(),
            mels_path: String::new(),
            mean_rgb: None,
        }];
        let path = temp("index2.csv");
        write_window_index(&path, &rows, false).unwrap();
        let m = read_manifest(&path).unwrap();
        assert_eq!(m.rows[0].path, "/w/win_1.wav");
        assert_eq!(m.rows[0].class, ClassLabel::Flu);
        assert_eq!(m.rows[0].user_id, "u7");
    }
}
