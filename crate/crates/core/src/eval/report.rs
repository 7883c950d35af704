//! Evaluation report, timeline/perplexity tables and the SVG timeline.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{normalized_mi, Alignment, ContingencyTable, EvalError, PerplexityBins, Result};
use crate::imageio::LabelTrack;

/// Fraction of a frame's words carrying one topic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimelineRow {
    pub t: u64,
    pub topic: usize,
    pub proportion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub mean: f64,
    pub std: f64,
    pub medium: f64,
    pub high: f64,
}

/// Topic × terrain counts with the best one-to-one pairing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub topics: Vec<usize>,
    pub terrains: Vec<usize>,
    pub counts: Vec<Vec<u64>>,
    pub alignment: Vec<(usize, Option<usize>)>,
    pub aligned_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiReport {
    pub frames: usize,
    pub nmi_terrain: f64,
    pub nmi_interest: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub nmi_interest_reconstruction: Option<f64>,
    #[serde(rename = "K_discovered")]
    pub k_discovered: usize,
    pub confusion: Confusion,
    pub thresholds: Thresholds,
}

impl MiReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// NMI of scene labels against terrain and of perplexity bins against interest, plus the
/// topic/terrain confusion table.
pub fn mi_report(
    scene_labels: &[usize],
    annotation: &LabelTrack,
    bins: &PerplexityBins,
    k_discovered: usize,
) -> Result<MiReport> {
    let n = scene_labels.len();
    if annotation.len() != n {
        return Err(EvalError::LengthMismatch(n, annotation.len()));
    }
    if bins.bins.len() != n {
        return Err(EvalError::LengthMismatch(n, bins.bins.len()));
    }
    let nmi_terrain = normalized_mi(scene_labels, &annotation.terrain)?;
    let predicted: Vec<usize> = bins.bins.iter().map(|b| b.index()).collect();
    let annotated: Vec<usize> = annotation.interest.iter().map(|b| b.index()).collect();
    let nmi_interest = normalized_mi(&predicted, &annotated)?;

    let table = ContingencyTable::from_labels(scene_labels, &annotation.terrain)?;
    let alignment = Alignment::of(&table);
    let confusion = Confusion {
        aligned_accuracy: alignment.agreeing as f64 / n as f64,
        topics: table.row_labels,
        terrains: table.col_labels,
        counts: table.counts,
        alignment: alignment.pairs,
    };
    Ok(MiReport {
        frames: n,
        nmi_terrain,
        nmi_interest,
        nmi_interest_reconstruction: None,
        k_discovered,
        confusion,
        thresholds: Thresholds {
            mean: bins.mean,
            std: bins.std,
            medium: bins.medium_threshold(),
            high: bins.high_threshold(),
        },
    })
}

fn csv_error(path: &Path, e: csv::Error) -> EvalError {
    EvalError::Format {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

pub fn write_timeline_csv(path: &Path, rows: &[TimelineRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_timeline_csv(path: &Path) -> Result<Vec<TimelineRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| csv_error(path, e))
}

#[derive(Serialize, Deserialize)]
struct PerplexityRow {
    t: u64,
    perplexity: f64,
}

pub fn write_perplexity_csv(path: &Path, series: &[(u64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for &(t, perplexity) in series {
        w.serialize(PerplexityRow { t, perplexity })
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_perplexity_csv(path: &Path) -> Result<Vec<(u64, f64)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize::<PerplexityRow>()
        .map(|row| row.map(|p| (p.t, p.perplexity)))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| csv_error(path, e))
}

const PALETTE: [&str; 10] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7",
    "#9c755f", "#bab0ac",
];

pub fn topic_color(topic: usize) -> &'static str {
    PALETTE[topic % PALETTE.len()]
}

const WIDTH: f64 = 900.0;
const MARGIN: f64 = 40.0;
const BAND_H: f64 = 240.0;
const TRACE_H: f64 = 160.0;
const GAP: f64 = 30.0;

/// Stacked topic-proportion columns over t above a perplexity trace with μ+s and μ+2s
/// guide lines.
pub fn timeline_svg(rows: &[TimelineRow], perplexity: &[(u64, f64)], path: &Path) -> Result<()> {
    let svg = render_timeline(rows, perplexity)?;
    std::fs::write(path, svg)?;
    Ok(())
}

pub(crate) fn render_timeline(rows: &[TimelineRow], perplexity: &[(u64, f64)]) -> Result<String> {
    if rows.is_empty() || perplexity.is_empty() {
        return Err(EvalError::Empty);
    }
    let series: Vec<f64> = perplexity.iter().map(|p| p.1).collect();
    let bins = super::bin_perplexity(&series)?;

    let mut by_t: BTreeMap<u64, Vec<(usize, f64)>> = BTreeMap::new();
    for r in rows {
        by_t.entry(r.t).or_default().push((r.topic, r.proportion));
    }
    let t_min = by_t
        .keys()
        .next()
        .copied()
        .unwrap()
        .min(perplexity.iter().map(|p| p.0).min().unwrap());
    let t_max = by_t
        .keys()
        .last()
        .copied()
        .unwrap()
        .max(perplexity.iter().map(|p| p.0).max().unwrap());
    let span = (t_max - t_min + 1) as f64;
    let plot_w = WIDTH - 2.0 * MARGIN;
    let dx = plot_w / span;
    let x_of = |t: u64| MARGIN + (t - t_min) as f64 * dx;
    let height = 2.0 * MARGIN + BAND_H + GAP + TRACE_H;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<g id="topics">"#);
    for (&t, parts) in &by_t {
        let mut parts = parts.clone();
        parts.sort_by_key(|p| p.0);
        let mut y = MARGIN + BAND_H;
        for (topic, p) in parts {
            let h = p * BAND_H;
            y -= h;
            let _ = writeln!(
                s,
                r#"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="{}" data-topic="{topic}"/>"#,
                x_of(t),
                y,
                dx,
                h,
                topic_color(topic)
            );
        }
    }
    let _ = writeln!(s, "</g>");

    let top = MARGIN + BAND_H + GAP;
    let lo = series.iter().copied().fold(f64::INFINITY, f64::min).min(bins.mean);
    let hi = series
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
        .max(bins.high_threshold());
    let range = if hi > lo { hi - lo } else { 1.0 };
    let y_of = |v: f64| top + TRACE_H - (v - lo) / range * TRACE_H;
    let points: Vec<String> = perplexity
        .iter()
        .map(|&(t, v)| format!("{:.3},{:.3}", x_of(t) + dx / 2.0, y_of(v)))
        .collect();
    let _ = writeln!(
        s,
        r##"<polyline id="perplexity" fill="none" stroke="#222222" stroke-width="1.2" points="{}"/>"##,
        points.join(" ")
    );
    for (id, v) in [("mean-plus-s", bins.medium_threshold()), ("mean-plus-2s", bins.high_threshold())] {
        let _ = writeln!(
            s,
            r##"<line id="{id}" x1="{MARGIN}" x2="{:.3}" y1="{y:.3}" y2="{y:.3}" stroke="#c00000" stroke-dasharray="4 3"/>"##,
            WIDTH - MARGIN,
            y = y_of(v)
        );
    }
    let _ = writeln!(s, "</svg>");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::bin_perplexity;
    use crate::imageio::Interest;
    use tempfile::tempdir;

    #[test]
    fn perfect_recovery_report() {
        let labels = LabelTrack {
            terrain: vec![0, 0, 1, 1, 2, 2],
            interest: vec![Interest::Low; 6],
        };
        let bins = bin_perplexity(&[1.0; 6]).unwrap();
        let r = mi_report(&[2, 2, 0, 0, 1, 1], &labels, &bins, 3).unwrap();
        assert!((r.nmi_terrain - 1.0).abs() < 1e-12);
        assert_eq!(r.nmi_interest, 0.0);
        assert_eq!(r.confusion.aligned_accuracy, 1.0);
        let json = r.to_json().unwrap();
        assert!(json.contains("\"K_discovered\": 3"));
        assert!(!json.contains("reconstruction"));
        assert_eq!(json, mi_report(&[2, 2, 0, 0, 1, 1], &labels, &bins, 3).unwrap().to_json().unwrap());
        assert!(matches!(
            mi_report(&[0; 5], &labels, &bins, 1),
            Err(EvalError::LengthMismatch(5, 6))
        ));
    }

    #[test]
    fn csv_round_trips() {
        let dir = tempdir().unwrap();
        let rows = vec![
            TimelineRow { t: 0, topic: 0, proportion: 0.75 },
            TimelineRow { t: 0, topic: 2, proportion: 0.25 },
        ];
        let p = dir.path().join("timeline.csv");
        write_timeline_csv(&p, &rows).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("t,topic,proportion\n"));
        assert_eq!(read_timeline_csv(&p).unwrap(), rows);
        let q = dir.path().join("perplexity.csv");
        write_perplexity_csv(&q, &[(0, 3.5), (1, 4.0)]).unwrap();
        assert_eq!(read_perplexity_csv(&q).unwrap(), vec![(0, 3.5), (1, 4.0)]);
    }

    #[test]
    fn single_topic_fills_band() {
        let rows: Vec<_> = (0..4).map(|t| TimelineRow { t, topic: 0, proportion: 1.0 }).collect();
        let svg = render_timeline(&rows, &[(0, 1.0), (1, 2.0), (2, 1.5), (3, 9.0)]).unwrap();
        let rects: Vec<&str> = svg.lines().filter(|l| l.contains("data-topic")).collect();
        assert_eq!(rects.len(), 4);
        for r in rects {
            assert!(r.contains(&format!(r#"y="{MARGIN:.3}""#)));
            assert!(r.contains(&format!(r#"height="{BAND_H:.3}""#)));
        }
        assert!(svg.contains("mean-plus-2s"));
    }

    #[test]
    fn empty_input_writes_nothing() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("t.svg");
        assert!(matches!(timeline_svg(&[], &[(0, 1.0)], &p), Err(EvalError::Empty)));
        assert!(!p.exists());
    }
}
