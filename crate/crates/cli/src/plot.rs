//! Minimal SVG line plots.

use std::fmt::Write as _;

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const PAD: f64 = 60.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn extent(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Polyline per series. With `log_x` the x axis is log10 and ticks sit on the
/// data's x values.
pub fn line_plot_svg(series: &[Series], x_label: &str, y_label: &str, log_x: bool) -> String {
    let tx = |x: f64| if log_x { x.max(f64::MIN_POSITIVE).log10() } else { x };
    let (x0, x1) = extent(series.iter().flat_map(|s| s.points.iter().map(|p| tx(p.0))));
    let (y0, y1) = extent(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let (y0, y1) = (y0 - 0.05 * (y1 - y0), y1 + 0.05 * (y1 - y0));
    let px = |x: f64| PAD + (tx(x) - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let py = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#).unwrap();
    writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<path d="M{PAD},{PAD} V{} H{}" fill="none" stroke="black"/>"#,
        H - PAD,
        W - PAD
    )
    .unwrap();

    let mut xticks: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    xticks.sort_by(f64::total_cmp);
    xticks.dedup();
    for x in xticks {
        let sx = px(x);
        writeln!(s, r#"<line x1="{sx:.1}" y1="{}" x2="{sx:.1}" y2="{}" stroke="black"/>"#, H - PAD, H - PAD + 5.0).unwrap();
        writeln!(s, r#"<text x="{sx:.1}" y="{}" font-size="11" text-anchor="middle">{x}</text>"#, H - PAD + 18.0).unwrap();
    }
    for i in 0..=4 {
        let y = y0 + (y1 - y0) * i as f64 / 4.0;
        let sy = py(y);
        writeln!(s, r#"<line x1="{}" y1="{sy:.1}" x2="{PAD}" y2="{sy:.1}" stroke="black"/>"#, PAD - 5.0).unwrap();
        writeln!(s, r#"<text x="{}" y="{:.1}" font-size="11" text-anchor="end">{y:.3}</text>"#, PAD - 8.0, sy + 4.0).unwrap();
    }
    writeln!(s, r#"<text x="{}" y="{}" font-size="13" text-anchor="middle">{x_label}</text>"#, W / 2.0, H - 15.0).unwrap();
    writeln!(
        s,
        r#"<text x="15" y="{}" font-size="13" text-anchor="middle" transform="rotate(-90 15 {})">{y_label}</text>"#,
        H / 2.0,
        H / 2.0
    )
    .unwrap();

    for (k, ser) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y))).collect();
        writeln!(s, r#"<polyline class="series" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, pts.join(" ")).unwrap();
        for &(x, y) in &ser.points {
            writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, px(x), py(y)).unwrap();
        }
        let ly = PAD + 16.0 * k as f64;
        writeln!(s, r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/>"#, W - PAD - 140.0, ly - 9.0).unwrap();
        writeln!(s, r#"<text x="{}" y="{ly}" font-size="11">{}</text>"#, W - PAD - 125.0, ser.name).unwrap();
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_polyline_per_series() {
        let series = vec![
            Series { name: "a".into(), points: vec![(1e3, 0.8), (1e4, 0.85), (1e5, 0.9)] },
            Series { name: "b".into(), points: vec![(1e3, 0.7), (1e5, 0.75)] },
        ];
        let svg = line_plot_svg(&series, "x", "y", true);
        assert_eq!(svg.matches(r#"class="series""#).count(), 2);
        assert_eq!(svg.matches("<circle").count(), 5);
        assert!(svg.trim_end().ends_with("</svg>"));
        // Equal spacing in log10: 1e3 → 1e4 and 1e4 → 1e5.
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn degenerate_input_does_not_produce_nan() {
        let svg = line_plot_svg(&[Series { name: "a".into(), points: vec![(10.0, 0.5)] }], "x", "y", true);
        assert!(!svg.contains("NaN"));
        let empty = line_plot_svg(&[], "x", "y", false);
        assert!(empty.contains("</svg>"));
    }
}
