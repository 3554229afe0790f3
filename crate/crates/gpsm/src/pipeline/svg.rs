//! Minimal SVG line/scatter plots for the run report. Hand-rolled on
//! purpose: the figures need only polylines, circles, and text, and the
//! output must be byte-stable across runs.

/// One named data series: a polyline, a marker cloud, or both.
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    /// CSS color, e.g. "#1b9e77".
    pub color: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
    pub markers: bool,
    pub line: bool,
}

impl Series {
    pub fn line(name: &str, color: &str, points: Vec<(f64, f64)>) -> Series {
        Series {
            name: name.to_string(),
            color: color.to_string(),
            points,
            dashed: false,
            markers: true,
            line: true,
        }
    }

    pub fn dashed(name: &str, color: &str, points: Vec<(f64, f64)>) -> Series {
        Series {
            dashed: true,
            ..Series::line(name, color, points)
        }
    }

    pub fn scatter(name: &str, color: &str, points: Vec<(f64, f64)>) -> Series {
        Series {
            markers: true,
            line: false,
            ..Series::line(name, color, points)
        }
    }
}

/// Stable palette for the standard series names.
pub fn series_color(name: &str) -> &'static str {
    match name {
        "indep" => "#d95f02",
        "potts" => "#1b9e77",
        "svae" => "#7570b3",
        "target" => "#222222",
        "ceiling" => "#888888",
        _ => "#17becf",
    }
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const X0: f64 = 70.0;
const Y0: f64 = 50.0;
const X1: f64 = 560.0;
const Y1: f64 = 430.0;
const N_TICKS: usize = 5;

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Axis bounds over all points, padded 5% each side; a degenerate range
/// widens to ±0.5 so every plot has extent.
fn bounds(series: &[Series]) -> ((f64, f64), (f64, f64)) {
    let mut xs = (f64::INFINITY, f64::NEG_INFINITY);
    let mut ys = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &(x, y) in &s.points {
            xs = (xs.0.min(x), xs.1.max(x));
            ys = (ys.0.min(y), ys.1.max(y));
        }
    }
    let pad = |(lo, hi): (f64, f64)| {
        if !lo.is_finite() || !hi.is_finite() {
            return (0.0, 1.0);
        }
        if hi - lo <= 0.0 {
            return (lo - 0.5, hi + 0.5);
        }
        let m = 0.05 * (hi - lo);
        (lo - m, hi + m)
    };
    (pad(xs), pad(ys))
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.').to_string();
    if s == "-0" {
        "0".to_string()
    } else {
        s
    }
}

/// Renders a complete standalone SVG document.
pub fn render_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let ((xmin, xmax), (ymin, ymax)) = bounds(series);
    let sx = |x: f64| X0 + (x - xmin) / (xmax - xmin) * (X1 - X0);
    let sy = |y: f64| Y1 - (y - ymin) / (ymax - ymin) * (Y1 - Y0);

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" role=\"img\">\n"
    ));
    out.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>\n"
    ));
    out.push_str(&format!(
        "<text x=\"{:.2}\" y=\"28\" font-size=\"16\" text-anchor=\"middle\" \
         font-family=\"sans-serif\">{}</text>\n",
        (X0 + X1) / 2.0,
        escape(title)
    ));

    // grid and tick labels
    for t in 0..N_TICKS {
        let f = t as f64 / (N_TICKS - 1) as f64;
        let xv = xmin + f * (xmax - xmin);
        let yv = ymin + f * (ymax - ymin);
        let px = sx(xv);
        let py = sy(yv);
        out.push_str(&format!(
            "<line x1=\"{px:.2}\" y1=\"{Y0:.2}\" x2=\"{px:.2}\" y2=\"{Y1:.2}\" \
             stroke=\"#dddddd\" stroke-width=\"1\"/>\n"
        ));
        out.push_str(&format!(
            "<line x1=\"{X0:.2}\" y1=\"{py:.2}\" x2=\"{X1:.2}\" y2=\"{py:.2}\" \
             stroke=\"#dddddd\" stroke-width=\"1\"/>\n"
        ));
        out.push_str(&format!(
            "<text x=\"{px:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\" \
             font-family=\"sans-serif\">{}</text>\n",
            Y1 + 16.0,
            tick_label(xv)
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\" \
             font-family=\"sans-serif\">{}</text>\n",
            X0 - 6.0,
            py + 4.0,
            tick_label(yv)
        ));
    }

    // axes frame
    out.push_str(&format!(
        "<rect x=\"{X0:.2}\" y=\"{Y0:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" \
         stroke=\"#333333\" stroke-width=\"1\"/>\n",
        X1 - X0,
        Y1 - Y0
    ));
    out.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"13\" text-anchor=\"middle\" \
         font-family=\"sans-serif\">{}</text>\n",
        (X0 + X1) / 2.0,
        Y1 + 38.0,
        escape(x_label)
    ));
    out.push_str(&format!(
        "<text x=\"20\" y=\"{:.2}\" font-size=\"13\" text-anchor=\"middle\" \
         font-family=\"sans-serif\" transform=\"rotate(-90 20 {:.2})\">{}</text>\n",
        (Y0 + Y1) / 2.0,
        (Y0 + Y1) / 2.0,
        escape(y_label)
    ));

    for s in series {
        if s.line && s.points.len() > 1 {
            let pts: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let dash = if s.dashed {
                " stroke-dasharray=\"6 4\""
            } else {
                ""
            };
            out.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"{}/>\n",
                pts.join(" "),
                s.color,
                dash
            ));
        }
        if s.markers {
            let r = if s.points.len() > 200 { 2.0 } else { 3.0 };
            for &(x, y) in &s.points {
                out.push_str(&format!(
                    "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{r}\" fill=\"{}\"/>\n",
                    sx(x),
                    sy(y),
                    s.color
                ));
            }
        }
    }

    // legend
    for (i, s) in series.iter().enumerate() {
        let ly = Y0 + 14.0 + 18.0 * i as f64;
        out.push_str(&format!(
            "<line x1=\"575\" y1=\"{ly:.2}\" x2=\"600\" y2=\"{ly:.2}\" stroke=\"{}\" \
             stroke-width=\"2\"{}/>\n",
            s.color,
            if s.dashed {
                " stroke-dasharray=\"6 4\""
            } else {
                ""
            }
        ));
        out.push_str(&format!(
            "<text x=\"606\" y=\"{:.2}\" font-size=\"12\" font-family=\"sans-serif\">{}</text>\n",
            ly + 4.0,
            escape(&s.name)
        ));
    }

    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Checks XML well-formedness by hand: balanced tags, quoted
    /// attributes, legal entities. Enough rigor for output we generate
    /// ourselves.
    pub(crate) fn assert_well_formed_xml(doc: &str) {
        let mut stack: Vec<String> = Vec::new();
        let bytes = doc.as_bytes();
        let mut i = 0;
        let mut saw_root = false;
        while i < bytes.len() {
            match bytes[i] {
                b'<' => {
                    let close = doc[i..]
                        .find('>')
                        .unwrap_or_else(|| panic!("unterminated tag at byte {i}"))
                        + i;
                    let inner = &doc[i + 1..close];
                    assert!(!inner.is_empty(), "empty tag at byte {i}");
                    // no raw '<' inside a tag
                    assert!(!inner.contains('<'), "nested '<' in tag: {inner}");
                    let quotes = inner.matches('"').count();
                    assert_eq!(quotes % 2, 0, "unbalanced quotes in tag: {inner}");
                    if let Some(name) = inner.strip_prefix('/') {
                        let open = stack
                            .pop()
                            .unwrap_or_else(|| panic!("closing </{name}> with empty stack"));
                        assert_eq!(open, name.trim(), "mismatched close tag");
                    } else if !inner.ends_with('/') && !inner.starts_with('?') {
                        let name: String =
                            inner.chars().take_while(|c| !c.is_whitespace()).collect();
                        if stack.is_empty() {
                            assert!(!saw_root, "second root element <{name}>");
                            saw_root = true;
                        }
                        stack.push(name);
                    }
                    i = close + 1;
                }
                b'&' => {
                    let rest = &doc[i..];
                    let ok = ["&amp;", "&lt;", "&gt;", "&quot;", "&apos;"]
                        .iter()
                        .any(|e| rest.starts_with(e));
                    assert!(ok, "bare '&' at byte {i}");
                    i += 1;
                }
                b'>' => panic!("bare '>' outside tag at byte {i}"),
                _ => i += 1,
            }
        }
        assert!(stack.is_empty(), "unclosed tags: {stack:?}");
        assert!(saw_root, "no root element");
    }

    fn sample_series() -> Vec<Series> {
        vec![
            Series::line("potts", series_color("potts"), vec![(2.0, 0.9), (3.0, 0.8)]),
            Series::dashed(
                "ceiling",
                series_color("ceiling"),
                vec![(2.0, 0.95), (3.0, 0.9)],
            ),
            Series::scatter("svae", series_color("svae"), vec![(2.5, 0.5)]),
        ]
    }

    #[test]
    fn plot_is_well_formed_and_carries_labels() {
        let doc = render_plot(
            "r20 by order",
            "order",
            "mean correlation",
            &sample_series(),
        );
        assert_well_formed_xml(&doc);
        assert!(doc.starts_with("<svg xmlns=\"http://www.w3.org/2000/svg\""));
        assert!(doc.contains("r20 by order"));
        assert!(doc.contains("mean correlation"));
        assert!(doc.contains("stroke-dasharray=\"6 4\""));
        assert!(doc.contains("#1b9e77"));
    }

    #[test]
    fn text_is_escaped() {
        let doc = render_plot("a < b & c", "x", "y", &sample_series());
        assert_well_formed_xml(&doc);
        assert!(doc.contains("a &lt; b &amp; c"));
    }

    #[test]
    fn degenerate_ranges_still_render() {
        let one = vec![Series::scatter("svae", "#7570b3", vec![(1.0, 1.0)])];
        let doc = render_plot("single point", "x", "y", &one);
        assert_well_formed_xml(&doc);
        // point sits at the plot centre once the range widens to +-0.5
        assert!(doc.contains("<circle"));
        let empty: Vec<Series> = vec![];
        assert_well_formed_xml(&render_plot("empty", "x", "y", &empty));
    }

    #[test]
    fn rendering_is_deterministic() {
        let a = render_plot("t", "x", "y", &sample_series());
        let b = render_plot("t", "x", "y", &sample_series());
        assert_eq!(a, b);
    }

    #[test]
    fn negative_zero_tick_prints_as_zero() {
        assert_eq!(tick_label(-0.0000001), "0");
        assert_eq!(tick_label(0.25), "0.25");
        assert_eq!(tick_label(3.0), "3");
    }

    #[test]
    fn checker_rejects_malformed_documents() {
        let unclosed = "<svg><g></svg>";
        assert!(std::panic::catch_unwind(|| assert_well_formed_xml(unclosed)).is_err());
        let bare_amp = "<svg>a & b</svg>";
        assert!(std::panic::catch_unwind(|| assert_well_formed_xml(bare_amp)).is_err());
    }
}
