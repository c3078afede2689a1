//! Verification metrics over genuine/impostor score sets.
//!
//! A pair is accepted at threshold `t` when `score >= t`. FMR is the share
//! of impostor pairs accepted, FNMR the share of genuine pairs rejected, and
//! TAR = 1 − FNMR.

use std::fmt::Write as _;

use crate::corpus::{protocol_hash, Manifest, PairLabel, VerificationPair};
use crate::error::{Error, Result};
use crate::fusion::cosine;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    entries: Vec<(f64, PairLabel)>,
    n_genuine: usize,
    n_impostor: usize,
    protocol: String,
}

impl ScoreSet {
    pub fn new(entries: Vec<(f64, PairLabel)>, protocol: impl Into<String>) -> Result<Self> {
        if let Some((s, _)) = entries.iter().find(|(s, _)| !s.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite score {s}")));
        }
        let n_genuine = entries
            .iter()
            .filter(|(_, l)| *l == PairLabel::Genuine)
            .count();
        Ok(Self {
            n_impostor: entries.len() - n_genuine,
            n_genuine,
            entries,
            protocol: protocol.into(),
        })
    }

    pub fn entries(&self) -> &[(f64, PairLabel)] {
        &self.entries
    }

    pub fn n_genuine(&self) -> usize {
        self.n_genuine
    }

    pub fn n_impostor(&self) -> usize {
        self.n_impostor
    }

    pub fn protocol(&self) -> &str {
        &self.protocol
    }
}

/// Scores every pair with `score(ref_item, probe_item)`.
pub fn score_pairs_with<F>(pairs: &[VerificationPair], mut score: F) -> Result<ScoreSet>
where
    F: FnMut(&str, &str) -> Result<f64>,
{
    let entries = pairs
        .iter()
        .map(|p| Ok((score(&p.ref_item, &p.probe_item)?, p.label)))
        .collect::<Result<Vec<_>>>()?;
    ScoreSet::new(entries, protocol_hash(pairs))
}

/// Cosine similarity of the `tag` vectors of each pair.
pub fn score_pairs(pairs: &[VerificationPair], m: &Manifest, tag: &str) -> Result<ScoreSet> {
    score_pairs_with(pairs, |a, b| {
        let ra = m.get(a).ok_or_else(|| Error::MissingItem(a.to_string()))?;
        let rb = m.get(b).ok_or_else(|| Error::MissingItem(b.to_string()))?;
        cosine(ra.vector(tag)?, rb.vector(tag)?)
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fmr: f64,
    pub fnmr: f64,
    pub false_matches: usize,
    pub false_non_matches: usize,
}

impl RocPoint {
    pub fn tar(&self) -> f64 {
        1.0 - self.fnmr
    }
}

/// Operating points at thresholds `+inf` followed by every distinct score in
/// decreasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub n_genuine: usize,
    pub n_impostor: usize,
}

pub fn sweep(scores: &ScoreSet) -> Result<RocCurve> {
    let (ng, ni) = (scores.n_genuine, scores.n_impostor);
    if ng == 0 || ni == 0 {
        return Err(Error::InvalidInput(format!(
            "sweep needs both classes, got {ng} genuine and {ni} impostor"
        )));
    }
    let mut sorted = scores.entries.clone();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let point = |threshold, fa: usize, ga: usize| RocPoint {
        threshold,
        fmr: fa as f64 / ni as f64,
        fnmr: (ng - ga) as f64 / ng as f64,
        false_matches: fa,
        false_non_matches: ng - ga,
    };
    let mut points = vec![point(f64::INFINITY, 0, 0)];
    let (mut fa, mut ga) = (0, 0);
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == t {
            match sorted[i].1 {
                PairLabel::Genuine => ga += 1,
                PairLabel::Impostor => fa += 1,
            }
            i += 1;
        }
        points.push(point(t, fa, ga));
    }
    Ok(RocCurve {
        points,
        n_genuine: ng,
        n_impostor: ni,
    })
}

/// Error rate where FMR meets FNMR, linearly interpolated between the two
/// operating points that bracket the sign change of `fmr − fnmr`.
pub fn eer(roc: &RocCurve) -> Result<f64> {
    if roc.points.len() < 2 {
        return Err(Error::InvalidInput(
            "EER needs at least two operating points".into(),
        ));
    }
    let diff = |p: &RocPoint| p.fmr - p.fnmr;
    let k = roc
        .points
        .iter()
        .position(|p| diff(p) >= 0.0)
        .ok_or_else(|| Error::InvalidInput("ROC curve never reaches FMR >= FNMR".into()))?;
    let hi = &roc.points[k];
    if diff(hi) == 0.0 || k == 0 {
        return Ok(hi.fmr);
    }
    let lo = &roc.points[k - 1];
    let (d0, d1) = (diff(lo), diff(hi));
    let t = -d0 / (d1 - d0);
    Ok(lo.fmr + t * (hi.fmr - lo.fmr))
}

/// TAR at the most permissive operating point whose FMR does not exceed
/// `far_target`. Never interpolated.
pub fn tar_at_far(roc: &RocCurve, far_target: f64) -> Result<f64> {
    if !(far_target > 0.0 && far_target < 1.0) {
        return Err(Error::InvalidInput(format!(
            "FAR target {far_target} not in (0, 1)"
        )));
    }
    let p = roc
        .points
        .iter()
        .rev()
        .find(|p| p.fmr <= far_target)
        .ok_or_else(|| Error::InvalidInput("empty ROC curve".into()))?;
    Ok(p.tar())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub system: String,
    pub eer: f64,
    /// `(far_target, tar)` in the report's target order.
    pub tar_at_far: Vec<(f64, f64)>,
    pub n_genuine: usize,
    pub n_impostor: usize,
    pub protocol: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub far_targets: Vec<f64>,
    pub rows: Vec<EvalRow>,
}

/// One row per system, in the given order. All systems must share a pair
/// protocol.
pub fn report(systems: &[(String, ScoreSet)], far_targets: &[f64]) -> Result<EvalReport> {
    let expected = match systems.first() {
        Some((_, s)) => s.protocol.clone(),
        None => {
            return Err(Error::InvalidInput(
                "report needs at least one system".into(),
            ))
        }
    };
    let mut rows = Vec::with_capacity(systems.len());
    for (name, scores) in systems {
        if scores.protocol != expected {
            return Err(Error::ProtocolMismatch {
                system: name.clone(),
                expected,
                found: scores.protocol.clone(),
            });
        }
        let roc = sweep(scores)?;
        let tars = far_targets
            .iter()
            .map(|&t| Ok((t, tar_at_far(&roc, t)?)))
            .collect::<Result<Vec<_>>>()?;
        rows.push(EvalRow {
            system: name.clone(),
            eer: eer(&roc)?,
            tar_at_far: tars,
            n_genuine: scores.n_genuine,
            n_impostor: scores.n_impostor,
            protocol: scores.protocol.clone(),
        });
    }
    Ok(EvalReport {
        far_targets: far_targets.to_vec(),
        rows,
    })
}

/// Percentage with one decimal, e.g. `0.099` → `9.9%`.
pub fn format_percent(v: f64) -> String {
    format!("{:.1}%", v * 100.0)
}

/// Column label for a FAR target, e.g. `0.001` → `TAR@0.1%FAR`.
pub fn far_label(target: f64) -> String {
    let pct = format!("{:.6}", target * 100.0);
    let pct = pct.trim_end_matches('0').trim_end_matches('.');
    format!("TAR@{pct}%FAR")
}

impl EvalReport {
    fn header(&self) -> Vec<String> {
        let mut h = vec!["System".to_string(), "EER".to_string()];
        h.extend(self.far_targets.iter().map(|&t| far_label(t)));
        h
    }

    fn cells(row: &EvalRow) -> Vec<String> {
        let mut c = vec![row.system.clone(), format_percent(row.eer)];
        c.extend(row.tar_at_far.iter().map(|&(_, v)| format_percent(v)));
        c
    }

    pub fn render_text(&self) -> String {
        let header = self.header();
        let body: Vec<Vec<String>> = self.rows.iter().map(Self::cells).collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|i| {
                body.iter()
                    .map(|r| r[i].len())
                    .chain([header[i].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| {
            let mut s = String::new();
            for (i, c) in cells.iter().enumerate() {
                if i == 0 {
                    let _ = write!(s, "{c:<w$}", w = widths[0]);
                } else {
                    let _ = write!(s, "  {c:>w$}", w = widths[i]);
                }
            }
            s.push('\n');
            s
        };
        let mut out = line(&header);
        out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
        out.push('\n');
        for r in &body {
            out.push_str(&line(r));
        }
        if let Some(r) = self.rows.first() {
            let _ = writeln!(
                out,
                "\n{} genuine / {} impostor pairs, protocol {}",
                r.n_genuine, r.n_impostor, r.protocol
            );
        }
        out
    }

    pub fn render_csv(&self) -> String {
        let mut header = self.header();
        header[0] = "system".into();
        header.extend(["n_genuine", "n_impostor", "protocol"].map(String::from));
        let mut out = header.join(",");
        out.push('\n');
        for r in &self.rows {
            let mut cells = Self::cells(r);
            cells.extend([
                r.n_genuine.to_string(),
                r.n_impostor.to_string(),
                r.protocol.clone(),
            ]);
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn render_scores_csv(pairs: &[VerificationPair], scores: &ScoreSet) -> String {
    let mut out = String::from("ref_item,probe_item,label,score\n");
    for (p, (s, _)) in pairs.iter().zip(&scores.entries) {
        let _ = writeln!(out, "{},{},{},{:?}", p.ref_item, p.probe_item, p.label, s);
    }
    out
}

pub fn render_roc_csv(roc: &RocCurve) -> String {
    let mut out = String::from("threshold,fmr,fnmr,tar\n");
    for p in &roc.points {
        let _ = writeln!(
            out,
            "{:?},{:?},{:?},{:?}",
            p.threshold,
            p.fmr,
            p.fnmr,
            p.tar()
        );
    }
    out
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Standalone SVG with TAR against log-scaled FMR, one polyline per curve.
pub fn render_roc_svg(curves: &[(String, RocCurve)]) -> String {
    let (w, h) = (640.0, 480.0);
    let (left, right, top, bottom) = (70.0, 220.0, 30.0, 60.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let min_fmr = curves
        .iter()
        .flat_map(|(_, c)| c.points.iter().map(|p| p.fmr))
        .filter(|&f| f > 0.0)
        .fold(1.0, f64::min);
    let lo_decade = min_fmr.log10().floor().min(-1.0);
    let x = |fmr: f64| {
        let f = fmr.max(10f64.powf(lo_decade));
        left + (f.log10() - lo_decade) / -lo_decade * pw
    };
    let y = |tar: f64| top + (1.0 - tar) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let mut d = lo_decade as i32;
    while d <= 0 {
        let px = x(10f64.powi(d));
        let _ = writeln!(
            s,
            r##"<line x1="{px:.2}" y1="{top}" x2="{px:.2}" y2="{:.2}" stroke="#dddddd"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">1e{d}</text>"##,
            top + ph,
            top + ph + 16.0
        );
        d += 1;
    }
    for k in 0..=5 {
        let tar = k as f64 / 5.0;
        let py = y(tar);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{tar:.1}</text>"##,
            left + pw,
            left - 6.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">False Match Rate (log scale)</text>"#,
        left + pw / 2.0,
        h - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">True Accept Rate</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );
    for (i, (name, curve)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = curve
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", x(p.fmr), y(p.tar())))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = top + 10.0 + 18.0 * i as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            xml_escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
