//! Accuracy-versus-channels charts as plain SVG text: one chart per scheme,
//! a line per model through the mean and a shaded band of one standard
//! deviation.

use std::fmt::Write as _;

use mvn_core::pipeline::AggregateRow;

use crate::failure::Failure;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Schemes in order of first appearance.
pub fn schemes(rows: &[AggregateRow]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for r in rows {
        if !out.contains(&r.scheme) {
            out.push(r.scheme.clone());
        }
    }
    out
}

/// Chart of the rows for `scheme`.
pub fn render_svg(rows: &[AggregateRow], scheme: &str) -> Result<String, Failure> {
    let rows: Vec<&AggregateRow> = rows.iter().filter(|r| r.scheme == scheme).collect();
    if rows.is_empty() {
        return Err(Failure::new("input", format!("no rows for scheme `{scheme}`")));
    }
    let mut models: Vec<&str> = Vec::new();
    for r in &rows {
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    let kmin = rows.iter().map(|r| r.k).min().unwrap() as f64;
    let kmax = rows.iter().map(|r| r.k).max().unwrap() as f64;
    let (kmin, kmax) = if kmin == kmax { (kmin - 1.0, kmax + 1.0) } else { (kmin, kmax) };
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let x = |k: f64| LEFT + (k - kmin) / (kmax - kmin) * pw;
    let y = |a: f64| TOP + (1.0 - a.clamp(0.0, 1.0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">Frame accuracy, {} SNR</text>"#,
        LEFT + pw / 2.0,
        escape(scheme)
    );
    for i in 0..=10 {
        let a = i as f64 / 10.0;
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{0:.1}" x2="{1:.1}" y2="{0:.1}" stroke="#dddddd"/><text x="{2:.1}" y="{3:.1}" text-anchor="end">{a:.1}</text>"##,
            y(a),
            LEFT + pw,
            LEFT - 6.0,
            y(a) + 4.0
        );
    }
    let mut ks: Vec<usize> = rows.iter().map(|r| r.k).collect();
    ks.sort_unstable();
    ks.dedup();
    let step = ks.len().div_ceil(15).max(1);
    for k in ks.iter().step_by(step) {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{k}</text>"#,
            x(*k as f64),
            TOP + ph + 16.0
        );
    }
    let _ = writeln!(
        s,
        r##"<line x1="{LEFT}" y1="{0:.1}" x2="{1:.1}" y2="{0:.1}" stroke="black"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{0:.1}" stroke="black"/>"##,
        TOP + ph,
        LEFT + pw
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">channels (K)</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{0:.1}" text-anchor="middle" transform="rotate(-90 16 {0:.1})">accuracy</text>"#,
        TOP + ph / 2.0
    );

    for (i, model) in models.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let mut pts: Vec<&AggregateRow> = rows.iter().copied().filter(|r| r.model == *model).collect();
        pts.sort_by_key(|r| r.k);
        let upper: Vec<String> = pts
            .iter()
            .map(|r| format!("{:.2},{:.2}", x(r.k as f64), y(r.mean + r.std)))
            .collect();
        let lower: Vec<String> = pts
            .iter()
            .rev()
            .map(|r| format!("{:.2},{:.2}", x(r.k as f64), y(r.mean - r.std)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polygon points="{} {}" fill="{colour}" fill-opacity="0.2" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" ")
        );
        let line: Vec<String> = pts
            .iter()
            .map(|r| format!("{:.2},{:.2}", x(r.k as f64), y(r.mean)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"><title>{}</title></polyline>"#,
            line.join(" "),
            escape(model)
        );
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = LEFT + pw + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{colour}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(model)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agg(model: &str, scheme: &str, k: usize, mean: f64, std: f64) -> AggregateRow {
        AggregateRow {
            model: model.into(),
            scheme: scheme.into(),
            k,
            mean,
            std,
            n: 2,
        }
    }

    #[test]
    fn one_polyline_per_model() {
        let rows = vec![
            agg("mvn", "increasing", 2, 0.6, 0.01),
            agg("mvn", "increasing", 4, 0.7, 0.02),
            agg("mvn", "increasing", 8, 0.8, 0.0),
            agg("mvn", "decreasing", 2, 0.9, 0.0),
        ];
        let svg = render_svg(&rows, "increasing").unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert_eq!(svg.matches("<polygon").count(), 1);
        assert_eq!(schemes(&rows), vec!["increasing", "decreasing"]);
        assert!(render_svg(&rows, "training_grid").is_err());
    }

    #[test]
    fn names_are_escaped() {
        let svg = render_svg(&[agg("a<b&c", "decreasing", 3, 0.5, 0.1)], "decreasing").unwrap();
        assert!(svg.contains("a&lt;b&amp;c") && !svg.contains("a<b"));
    }
}
