//! Tiny self-contained SVG charts: just enough to eyeball a loss curve, a
//! scatter of sampled latents, or a sweep surface without pulling in a
//! plotting stack. Output is deterministic: fixed canvas, fixed precision,
//! no timestamps.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 48.0;

struct Bounds {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Bounds {
    fn of(points: impl Iterator<Item = (f64, f64)>) -> Bounds {
        let mut b = Bounds {
            x_min: f64::INFINITY,
            x_max: f64::NEG_INFINITY,
            y_min: f64::INFINITY,
            y_max: f64::NEG_INFINITY,
        };
        for (x, y) in points {
            if x.is_finite() && y.is_finite() {
                b.x_min = b.x_min.min(x);
                b.x_max = b.x_max.max(x);
                b.y_min = b.y_min.min(y);
                b.y_max = b.y_max.max(y);
            }
        }
        if !b.x_min.is_finite() {
            b = Bounds {
                x_min: 0.0,
                x_max: 1.0,
                y_min: 0.0,
                y_max: 1.0,
            };
        }
        if b.x_max - b.x_min < 1e-12 {
            b.x_min -= 0.5;
            b.x_max += 0.5;
        }
        if b.y_max - b.y_min < 1e-12 {
            b.y_min -= 0.5;
            b.y_max += 0.5;
        }
        b
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - 2.0 * MARGIN)
    }
}

const PALETTE: [&str; 6] = [
    "#1f6fb2", "#c2503a", "#3a9150", "#8451a0", "#b08a2e", "#457a8b",
];

fn header(title: &str) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    );
    let _ = write!(
        s,
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    );
    let _ = write!(
        s,
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    );
    s
}

fn axes(s: &mut String, b: &Bounds) {
    let _ = write!(
        s,
        "<line x1=\"{m}\" y1=\"{b0}\" x2=\"{r}\" y2=\"{b0}\" stroke=\"#444\" stroke-width=\"1\"/>\n",
        m = MARGIN,
        r = WIDTH - MARGIN,
        b0 = HEIGHT - MARGIN
    );
    let _ = write!(
        s,
        "<line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b0}\" stroke=\"#444\" stroke-width=\"1\"/>\n",
        m = MARGIN,
        t = MARGIN,
        b0 = HEIGHT - MARGIN
    );
    for (value, anchor, x, y) in [
        (b.x_min, "start", MARGIN, HEIGHT - MARGIN + 16.0),
        (b.x_max, "end", WIDTH - MARGIN, HEIGHT - MARGIN + 16.0),
    ] {
        let _ = write!(
            s,
            "<text x=\"{x:.1}\" y=\"{y:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"{anchor}\">{value:.4}</text>\n"
        );
    }
    for (value, y) in [(b.y_min, HEIGHT - MARGIN), (b.y_max, MARGIN + 4.0)] {
        let _ = write!(
            s,
            "<text x=\"{x:.1}\" y=\"{y:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{value:.4}</text>\n",
            x = MARGIN - 6.0
        );
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Render named series as polylines over shared axes.
pub fn line_chart(title: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let bounds = Bounds::of(series.iter().flat_map(|(_, pts)| pts.iter().copied()));
    let mut s = header(title);
    axes(&mut s, &bounds);
    for (i, (name, points)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut path = String::new();
        for (x, y) in points {
            if x.is_finite() && y.is_finite() {
                let _ = write!(path, "{:.2},{:.2} ", bounds.px(*x), bounds.py(*y));
            }
        }
        let _ = write!(
            s,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            path.trim_end()
        );
        let _ = write!(
            s,
            "<text x=\"{x}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{color}\">{}</text>\n",
            escape(name),
            x = WIDTH - MARGIN + 4.0 - 110.0,
            y = MARGIN + 16.0 * (i as f64 + 1.0)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Render point clouds, one color per named group.
pub fn scatter(title: &str, groups: &[(String, Vec<(f64, f64)>)]) -> String {
    let bounds = Bounds::of(groups.iter().flat_map(|(_, pts)| pts.iter().copied()));
    let mut s = header(title);
    axes(&mut s, &bounds);
    for (i, (name, points)) in groups.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        for (x, y) in points {
            if x.is_finite() && y.is_finite() {
                let _ = write!(
                    s,
                    "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"{color}\" fill-opacity=\"0.6\"/>\n",
                    bounds.px(*x),
                    bounds.py(*y)
                );
            }
        }
        let _ = write!(
            s,
            "<text x=\"{x}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{color}\">{}</text>\n",
            escape(name),
            x = WIDTH - MARGIN - 110.0,
            y = MARGIN + 16.0 * (i as f64 + 1.0)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_chart_is_deterministic_and_well_formed() {
        let series = vec![(
            "loss".to_string(),
            vec![(0.0, 2.0), (1.0, 1.5), (2.0, 1.1)],
        )];
        let a = line_chart("training", &series);
        let b = line_chart("training", &series);
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.trim_end().ends_with("</svg>"));
        assert!(a.contains("polyline"));
        assert!(a.contains("loss"));
    }

    #[test]
    fn scatter_handles_degenerate_and_nonfinite_points() {
        let groups = vec![("pts".to_string(), vec![(1.0, 1.0), (f64::NAN, 2.0)])];
        let svg = scatter("cloud", &groups);
        // One finite point, padded bounds, no NaN anywhere in the output.
        assert!(svg.contains("circle"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn titles_are_escaped() {
        let svg = line_chart("a < b & c", &[]);
        assert!(svg.contains("a &lt; b &amp; c"));
    }
}
