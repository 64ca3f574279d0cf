//! CSV, JSON and SVG writers. Output is a pure function of the results.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::SCHEMA_VERSION;
use crate::error::{CliError, CliResult};
use crate::run::{CompareRecord, EvalRecord, McRecord, RowKey};

/// 17 significant digits.
pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn floats(v: &[f64]) -> String {
    v.iter().map(|x| float(*x)).collect::<Vec<_>>().join(";")
}

fn opt(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

const KEY_HEADER: [&str; 7] = ["query", "row", "kind", "params", "x", "t", "lambda"];

fn key_cells(k: &RowKey) -> Vec<String> {
    vec![
        k.query.clone(),
        k.row.to_string(),
        k.kind.to_string(),
        k.params.clone(),
        floats(&k.x),
        floats(&k.t),
        floats(&k.lambda),
    ]
}

fn csv_string(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
}

pub fn eval_csv(records: &[EvalRecord]) -> String {
    let header: Vec<&str> = KEY_HEADER.iter().copied().chain(["log_value", "value"]).collect();
    csv_string(
        &header,
        records.iter().map(|r| {
            let mut c = key_cells(&r.key);
            c.extend([float(r.log_value), float(r.value)]);
            c
        }),
    )
}

pub fn simulate_csv(records: &[McRecord]) -> String {
    let header: Vec<&str> = KEY_HEADER
        .iter()
        .copied()
        .chain(["n", "seed", "mean", "half_width", "std_dev"])
        .collect();
    csv_string(
        &header,
        records.iter().map(|r| {
            let mut c = key_cells(&r.key);
            let e = &r.estimate;
            c.extend([e.n.to_string(), e.seed.to_string(), float(e.mean), float(e.half_width), float(e.std_dev)]);
            c
        }),
    )
}

pub fn compare_csv(records: &[CompareRecord]) -> String {
    let header: Vec<&str> = KEY_HEADER
        .iter()
        .copied()
        .chain([
            "log_value",
            "value",
            "mc_mean",
            "mc_half_width",
            "oracle_value",
            "oracle_bound",
            "passed",
        ])
        .collect();
    csv_string(
        &header,
        records.iter().map(|r| {
            let mut c = key_cells(&r.key);
            c.extend([
                float(r.log_value),
                float(r.value),
                opt(r.mc.as_ref().map(|m| m.mean)),
                opt(r.mc.as_ref().map(|m| m.half_width)),
                opt(r.oracle.as_ref().map(|o| o.value)),
                opt(r.oracle.as_ref().map(|o| o.bound)),
                r.passed.to_string(),
            ]);
            c
        }),
    )
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    command: &'a str,
    passed: bool,
    records: &'a [T],
}

pub fn json_report<T: Serialize>(command: &str, passed: bool, records: &[T]) -> String {
    let env = Envelope {
        schema_version: SCHEMA_VERSION,
        command,
        passed,
        records,
    };
    let mut s = serde_json::to_string_pretty(&env).expect("records serialize");
    s.push('\n');
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Survival curves with `t` on the horizontal axis and the value on `[0, 1]` vertically.
pub fn survival_svg(series: &[crate::run::Curve]) -> String {
    let (w, h, left, right, top, bottom) = (640.0, 400.0, 60.0, 160.0, 20.0, 50.0);
    let t_max = series
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(|p| p.0))
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let px = |t: f64| left + (w - left - right) * t / t_max;
    let py = |v: f64| top + (h - top - bottom) * (1.0 - v.clamp(0.0, 1.0));
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let (x0, x1, y0, y1) = (px(0.0), px(t_max), py(0.0), py(1.0));
    let _ = writeln!(s, r#"<path d="M{x0:.2} {y1:.2} V{y0:.2} H{x1:.2}" stroke="black" fill="none"/>"#);
    for j in 0..=4 {
        let v = j as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{v:.2}</text>"#,
            x0 - 6.0,
            py(v) + 4.0
        );
        let t = t_max * v;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{t:.3}</text>"#,
            px(t),
            y0 + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">t</text>"#,
        (x0 + x1) / 2.0,
        h - 10.0
    );
    let _ = writeln!(s, r#"<text x="14" y="{:.2}" font-size="12" transform="rotate(-90 14 {:.2})" text-anchor="middle">survival</text>"#, (y0 + y1) / 2.0, (y0 + y1) / 2.0);
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = pts.iter().map(|(t, v)| format!("{:.3},{:.3}", px(*t), py(*v))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" stroke="{color}" stroke-width="1.5" fill="none"/>"#, points.join(" "));
        let ly = top + 16.0 * (i as f64 + 1.0);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{ly:.2}" font-size="11" fill="{color}">{}</text>"#,
            w - right + 10.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn write(dir: &Path, name: &str, contents: &str) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
        action: "create",
        path: dir.to_path_buf(),
        source,
    })?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|source| CliError::Io {
        action: "write",
        path: path.clone(),
        source,
    })?;
    Ok(path)
}
