//! Deterministic SVG and CSV artifacts.

use std::fmt::Write as _;
use std::path::Path;

use crate::compare::SimilarityReport;
use crate::corpus::{CorpusStats, NgramTable};
use crate::error::{Error, Result};
use crate::reduce::ReducedMatrix;

const CELL: f64 = 48.0;
const MARGIN: f64 = 56.0;
const SCATTER_SIZE: f64 = 640.0;
const LEGEND_WIDTH: f64 = 260.0;

/// Colour-blind friendly categorical palette; cycles past its length.
pub const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#393b79", "#637939",
];
pub const NOISE_COLOR: &str = "#c8c8c8";

/// Quotes a CSV field when it contains a separator, quote or line break.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Splits one CSV record, honouring quoted fields.
pub fn csv_split(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match (c, quoted) {
            ('"', true) if chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            ('"', _) => quoted = !quoted,
            (',', false) => out.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    out.push(cur);
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// White at 0, dark blue at 1; scores outside `[0, 1]` are clamped.
pub fn ramp_color(score: f64) -> String {
    let t = if score.is_nan() { 0.0 } else { score.clamp(0.0, 1.0) };
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(255.0, 8.0), lerp(255.0, 48.0), lerp(255.0, 107.0))
}

pub fn heatmap_svg(report: &SimilarityReport) -> Result<String> {
    let (rows, cols) = report.matrix.dim();
    if rows == 0 || cols == 0 {
        return Err(Error::input("heatmap of an empty matrix"));
    }
    let width = MARGIN + cols as f64 * CELL + 8.0;
    let height = MARGIN + rows as f64 * CELL + 8.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    for j in 0..cols {
        let x = MARGIN + (j as f64 + 0.5) * CELL;
        let _ = writeln!(
            s,
            r#"<text class="col-label" x="{x:.1}" y="{:.1}" text-anchor="middle">{j}</text>"#,
            MARGIN - 10.0
        );
    }
    for i in 0..rows {
        let y = MARGIN + (i as f64 + 0.5) * CELL;
        let _ = writeln!(
            s,
            r#"<text class="row-label" x="{:.1}" y="{y:.1}" text-anchor="end" dominant-baseline="middle">{i}</text>"#,
            MARGIN - 10.0
        );
    }
    for ((i, j), &v) in report.matrix.indexed_iter() {
        let x = MARGIN + j as f64 * CELL;
        let y = MARGIN + i as f64 * CELL;
        let fill = ramp_color(v);
        let ink = if v.clamp(0.0, 1.0) > 0.55 { "#ffffff" } else { "#000000" };
        let _ = writeln!(
            s,
            r##"<rect class="cell" x="{x:.1}" y="{y:.1}" width="{CELL:.1}" height="{CELL:.1}" fill="{fill}" stroke="#ffffff"/>"##
        );
        let _ = writeln!(
            s,
            r#"<text class="score" x="{:.1}" y="{:.1}" text-anchor="middle" dominant-baseline="middle" fill="{ink}">{v:.2}</text>"#,
            x + CELL / 2.0,
            y + CELL / 2.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Scatter of a 2-D projection with one colour per distinct label. Labels
/// are coloured in order of first appearance; `"noise"` is drawn grey.
pub fn scatter_svg(proj: &ReducedMatrix, labels: &[String]) -> Result<String> {
    if proj.dim() != 2 {
        return Err(Error::param(format!("scatter needs 2-D input, got {}", proj.dim())));
    }
    if labels.is_empty() {
        return Err(Error::input("scatter needs at least one label"));
    }
    if labels.len() != proj.len() {
        return Err(Error::input(format!(
            "{} labels for {} points",
            labels.len(),
            proj.len()
        )));
    }
    let mut legend: Vec<&str> = Vec::new();
    for l in labels {
        if !legend.contains(&l.as_str()) {
            legend.push(l);
        }
    }
    let mut palette_slot = 0;
    let colors: Vec<&str> = legend
        .iter()
        .map(|&l| {
            if l == "noise" {
                NOISE_COLOR
            } else {
                palette_slot += 1;
                PALETTE[(palette_slot - 1) % PALETTE.len()]
            }
        })
        .collect();

    let axis = |c: usize| {
        let col = proj.rows.column(c);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let inner = SCATTER_SIZE - 2.0 * MARGIN;
    let place = |v: f64, (lo, hi): (f64, f64)| {
        if hi > lo {
            MARGIN + (v - lo) / (hi - lo) * inner
        } else {
            SCATTER_SIZE / 2.0
        }
    };
    let (ax, ay) = (axis(0), axis(1));
    let width = SCATTER_SIZE + LEGEND_WIDTH;
    let height = SCATTER_SIZE.max(MARGIN + legend.len() as f64 * 18.0 + 16.0);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    for (i, l) in labels.iter().enumerate() {
        let k = legend.iter().position(|x| x == l).expect("label in legend");
        let x = place(proj.rows[[i, 0]], ax);
        // SVG y grows downward.
        let y = SCATTER_SIZE - place(proj.rows[[i, 1]], ay);
        let _ = writeln!(
            s,
            r#"<circle class="point" cx="{x:.2}" cy="{y:.2}" r="3" fill="{}" fill-opacity="0.8"/>"#,
            colors[k]
        );
    }
    for (k, l) in legend.iter().enumerate() {
        let y = MARGIN + k as f64 * 18.0;
        let _ = writeln!(
            s,
            r#"<g class="legend"><rect x="{:.1}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text></g>"#,
            SCATTER_SIZE + 8.0,
            y - 9.0,
            colors[k],
            SCATTER_SIZE + 24.0,
            y,
            xml_escape(l)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// `id,x,y,label` rows for a 2-D projection.
pub fn projection_csv(proj: &ReducedMatrix, labels: &[String]) -> Result<String> {
    if proj.dim() != 2 || labels.len() != proj.len() {
        return Err(Error::input("projection csv needs 2-D rows and one label per row"));
    }
    let mut s = String::from("id,x,y,label\n");
    for (i, id) in proj.item_ids.iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            csv_field(id),
            proj.rows[[i, 0]],
            proj.rows[[i, 1]],
            csv_field(&labels[i])
        );
    }
    Ok(s)
}

/// Parsed projection rows: `(id, x, y, label)`.
pub fn read_projection_csv(src: &str) -> Result<Vec<(String, f64, f64, String)>> {
    let mut lines = src.lines();
    if lines.next() != Some("id,x,y,label") {
        return Err(Error::Format("projection csv header".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f = csv_split(l);
            if f.len() != 4 {
                return Err(Error::Format(format!("bad projection row: {l}")));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(format!("{s}: {e}")));
            Ok((f[0].clone(), num(&f[1])?, num(&f[2])?, f[3].clone()))
        })
        .collect()
}

/// `ngram,count` rows, ready for a bar chart.
pub fn ngram_csv(table: &NgramTable) -> String {
    let mut s = String::from("ngram,count\n");
    for (gram, count) in &table.entries {
        let _ = writeln!(s, "{},{count}", csv_field(&gram.join(" ")));
    }
    s
}

pub fn read_ngram_csv(src: &str) -> Result<NgramTable> {
    let mut lines = src.lines();
    if lines.next() != Some("ngram,count") {
        return Err(Error::Format("ngram csv header".into()));
    }
    let mut entries = Vec::new();
    for l in lines.filter(|l| !l.is_empty()) {
        let f = csv_split(l);
        if f.len() != 2 {
            return Err(Error::Format(format!("bad ngram row: {l}")));
        }
        let count = f[1].parse().map_err(|e| Error::Format(format!("{}: {e}", f[1])))?;
        entries.push((f[0].split(' ').map(str::to_owned).collect::<Vec<_>>(), count));
    }
    let n = entries.first().map_or(0, |e: &(Vec<String>, usize)| e.0.len());
    Ok(NgramTable { n, entries })
}

/// One row per corpus: documents, words, average words and verses.
pub fn stats_csv(stats: &[CorpusStats]) -> String {
    let mut s = String::from("corpus,documents,words,avg_words,verses\n");
    for st in stats {
        let _ = writeln!(
            s,
            "{},{},{},{:.2},{}",
            csv_field(&st.name),
            st.documents,
            st.words,
            st.avg_words,
            st.verses
        );
    }
    s
}

pub fn write_file(path: impl AsRef<Path>, contents: impl AsRef<[u8]>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}
