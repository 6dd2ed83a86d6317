//! File artifacts: drop-map CSVs, 16-bit PGM heatmaps, graph dumps,
//! and the run directory files (config, history, metrics, ablation).
//! All floats go through the canonical 9-digit formatter so identical
//! runs produce byte-identical files.

use crate::numfmt::g9;
use crate::oracle::{FrameTag, IrDropMap};
use crate::pdngraph::{HorizontalCase, PdnGraph};
use crate::{Error, Result};
use std::fs;
use std::path::Path;

/// Write a row-major map as comma-separated values, row 0 at y = 0.
pub fn write_map_csv(path: &Path, values: &[f64], rows: usize, cols: usize) -> Result<()> {
    debug_assert_eq!(values.len(), rows * cols);
    let mut out = String::new();
    for r in 0..rows {
        let row: Vec<String> = (0..cols).map(|c| values[r * cols + c].to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read a map CSV back; every row must have the same width.
pub fn read_map_csv(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::Format {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    let bad = |msg: String| Error::Format {
        path: path.display().to_string(),
        msg,
    };
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|tok| tok.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(format!("row {}: {e}", rows + 1)))?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(bad(format!("row {} has {} columns, expected {c}", rows + 1, row.len())))
            }
            _ => {}
        }
        values.extend(row);
        rows += 1;
    }
    let cols = cols.ok_or_else(|| bad("empty map file".into()))?;
    Ok((rows, cols, values))
}

/// 16-bit binary PGM with values linearly mapped from [0, max] to
/// [0, 65535]; an all-zero map stays black.
pub fn write_pgm16(path: &Path, values: &[f64], rows: usize, cols: usize) -> Result<()> {
    debug_assert_eq!(values.len(), rows * cols);
    let max = values.iter().cloned().fold(0.0f64, f64::max);
    let mut bytes = format!("P5\n{cols} {rows}\n65535\n").into_bytes();
    for &v in values {
        let g = if max > 0.0 {
            ((v / max).clamp(0.0, 1.0) * 65535.0).round() as u16
        } else {
            0
        };
        bytes.extend_from_slice(&g.to_be_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Write peak (or per-frame) drop maps next to each other.
pub fn write_drop_map(dir: &Path, stem: &str, map: &IrDropMap) -> Result<()> {
    write_map_csv(&dir.join(format!("{stem}.csv")), &map.drop_v, map.n_h, map.n_w)?;
    write_pgm16(&dir.join(format!("{stem}.pgm")), &map.drop_v, map.n_h, map.n_w)?;
    Ok(())
}

pub fn frame_stem(tag: FrameTag) -> String {
    match tag {
        FrameTag::Peak => "irdrop_peak".to_string(),
        FrameTag::Frame(t) => format!("irdrop_frame_{t:03}"),
    }
}

/// Graph dump: a `#nodes i j f0 f1 ...` section with one row per node,
/// then `#edges src dst` pairs.
pub fn write_graph_csv(path: &Path, graph: &PdnGraph) -> Result<()> {
    let mut out = String::from("#nodes i j");
    for name in &graph.feature_channel_names {
        out.push(' ');
        out.push_str(name);
    }
    out.push('\n');
    let c = graph.n_channels;
    for node in 0..graph.n_nodes() {
        let (i, j) = graph.coords(node);
        out.push_str(&format!("{i} {j}"));
        for ch in 0..c {
            out.push(' ');
            out.push_str(&graph.features[node * c + ch].to_string());
        }
        out.push('\n');
    }
    out.push_str("#edges src dst\n");
    for &(s, d) in &graph.edges {
        out.push_str(&format!("{s} {d}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read a graph dump back. Channel names come from the header row.
pub fn read_graph_csv(path: &Path) -> Result<PdnGraph> {
    let text = fs::read_to_string(path).map_err(|e| Error::Format {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    let bad = |msg: String| Error::Format {
        path: path.display().to_string(),
        msg,
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| bad("empty graph file".into()))?;
    let header_fields: Vec<&str> = header.split_whitespace().collect();
    if header_fields.len() < 4 || header_fields[0] != "#nodes" {
        return Err(bad("missing #nodes header".into()));
    }
    let feature_channel_names: Vec<String> =
        header_fields[3..].iter().map(|s| s.to_string()).collect();
    let c = feature_channel_names.len();

    let mut coords: Vec<(usize, usize)> = Vec::new();
    let mut features: Vec<f64> = Vec::new();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut in_edges = false;
    for (idx, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with("#edges") {
            in_edges = true;
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if in_edges {
            if fields.len() != 2 {
                return Err(bad(format!("line {}: edge needs src dst", idx + 1)));
            }
            let s = fields[0].parse().map_err(|_| bad(format!("line {}: bad src", idx + 1)))?;
            let d = fields[1].parse().map_err(|_| bad(format!("line {}: bad dst", idx + 1)))?;
            edges.push((s, d));
        } else {
            if fields.len() != 2 + c {
                return Err(bad(format!(
                    "line {}: node row needs i j and {c} features",
                    idx + 1
                )));
            }
            let i = fields[0].parse().map_err(|_| bad(format!("line {}: bad i", idx + 1)))?;
            let j = fields[1].parse().map_err(|_| bad(format!("line {}: bad j", idx + 1)))?;
            coords.push((i, j));
            for f in &fields[2..] {
                features.push(
                    f.parse::<f64>()
                        .map_err(|_| bad(format!("line {}: bad feature", idx + 1)))?,
                );
            }
        }
    }
    let n_h = coords.iter().map(|&(i, _)| i).max().map_or(0, |m| m + 1);
    let n_w = coords.iter().map(|&(_, j)| j).max().map_or(0, |m| m + 1);
    if coords.len() != n_h * n_w {
        return Err(bad(format!(
            "{} node rows do not fill a {n_h}x{n_w} grid",
            coords.len()
        )));
    }
    for (node, &(i, j)) in coords.iter().enumerate() {
        if node != i * n_w + j {
            return Err(bad("node rows must be in row-major order".into()));
        }
    }
    edges.sort_unstable();
    Ok(PdnGraph {
        n_h,
        n_w,
        features,
        n_channels: c,
        feature_channel_names,
        edges,
    })
}

/// Direction visualization: one gray code per tile from the horizontal
/// rule at its column (0 left, 1 both, 2 right), scaled to 16-bit.
pub fn write_direction_pgm(
    path: &Path,
    cases: &[HorizontalCase],
    rows: usize,
    cols: usize,
) -> Result<()> {
    debug_assert_eq!(cases.len(), rows * cols);
    let values: Vec<f64> = cases
        .iter()
        .map(|c| match c {
            HorizontalCase::RightToLeft => 0.0,
            HorizontalCase::Bidirectional => 1.0,
            HorizontalCase::LeftToRight => 2.0,
        })
        .collect();
    write_pgm16(path, &values, rows, cols)
}

/// key=value lines, keys sorted, reproducible.
pub fn write_config_txt(path: &Path, entries: &[(String, String)]) -> Result<()> {
    let mut sorted: Vec<&(String, String)> = entries.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out = String::new();
    for (k, v) in sorted {
        out.push_str(&format!("{k}={v}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Parse key=value lines; '#' starts a comment.
pub fn read_config_txt(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Format {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Format {
            path: path.display().to_string(),
            msg: format!("line {}: expected key=value", idx + 1),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn fmt_metric(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        g9(v)
    }
}

/// Per-sample metric rows plus a MEAN row (NaN-excluded) and an
/// EXCLUDED row counting the NaNs each column dropped.
pub fn write_metrics_csv(
    path: &Path,
    rows: &[(String, crate::metrics::MetricsReport)],
) -> Result<()> {
    let mut out = String::from("sample,nmae,r2,psnr,ssim,pearson,spearman,kendall,auc\n");
    for (id, report) in rows {
        out.push_str(id);
        for v in report.values() {
            out.push(',');
            out.push_str(&fmt_metric(v));
        }
        out.push('\n');
    }
    let (mean, excluded) = nan_excluded_mean(rows.iter().map(|(_, r)| r.values()));
    out.push_str("MEAN");
    for v in mean {
        out.push(',');
        out.push_str(&fmt_metric(v));
    }
    out.push('\n');
    out.push_str("EXCLUDED");
    for count in excluded {
        out.push_str(&format!(",{count}"));
    }
    out.push('\n');
    fs::write(path, out)?;
    Ok(())
}

/// Column means excluding NaN entries, plus per-column exclusion counts.
pub fn nan_excluded_mean(rows: impl Iterator<Item = [f64; 8]>) -> ([f64; 8], [usize; 8]) {
    let mut sum = [0.0; 8];
    let mut count = [0usize; 8];
    let mut excluded = [0usize; 8];
    for values in rows {
        for (c, v) in values.into_iter().enumerate() {
            if v.is_nan() {
                excluded[c] += 1;
            } else {
                sum[c] += v;
                count[c] += 1;
            }
        }
    }
    let mut mean = [f64::NAN; 8];
    for c in 0..8 {
        if count[c] > 0 {
            mean[c] = sum[c] / count[c] as f64;
        }
    }
    (mean, excluded)
}

/// Training curve: one row per epoch.
pub fn write_history_csv(path: &Path, history: &[crate::train::EpochStats]) -> Result<()> {
    let mut out = String::from("epoch,lr,train_loss,val_loss,train_nmae,val_nmae\n");
    for e in history {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            e.epoch,
            g9(e.lr),
            fmt_metric(e.train_loss),
            fmt_metric(e.val_loss),
            fmt_metric(e.train_nmae),
            fmt_metric(e.val_nmae)
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Ablation table: seven metric columns per variant; cells carry
/// mean±std when several seeds contributed.
pub fn write_ablation_csv(path: &Path, table: &crate::train::AblationTable) -> Result<()> {
    let mut out = String::from("variant,nmae,r2,psnr,ssim,pearson,spearman,kendall\n");
    for row in &table.rows {
        out.push_str(&row.variant);
        for cell in &row.cells {
            out.push(',');
            if let Some(std) = cell.std {
                out.push_str(&format!("{}±{}", fmt_metric(cell.mean), fmt_metric(std)));
            } else {
                out.push_str(&fmt_metric(cell.mean));
            }
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Per-seed raw ablation rows for recomputing the summary.
pub fn write_ablation_raw_csv(path: &Path, table: &crate::train::AblationTable) -> Result<()> {
    let mut out = String::from("variant,seed,nmae,r2,psnr,ssim,pearson,spearman,kendall\n");
    for run in &table.raw {
        out.push_str(&format!("{},{}", run.variant, run.seed));
        for v in &run.metrics {
            out.push(',');
            out.push_str(&fmt_metric(*v));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}
