//! Minimal deterministic SVG line charts. No timestamps, no randomness:
//! identical data produces identical bytes.

use std::fmt::Write;

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 520.0;
const MARGIN_L: f64 = 72.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 48.0;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// One named series of (x, y) points.
pub struct Series<'a> {
    pub name: &'a str,
    pub points: Vec<(f64, f64)>,
}

fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if (1e-3..1e6).contains(&a) {
        format!("{v:.6}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    } else {
        format!("{v:.3e}")
    }
}

/// Render a line chart of the given series.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut xs = (f64::INFINITY, f64::NEG_INFINITY);
    let mut ys = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &(x, y) in &s.points {
            xs.0 = xs.0.min(x);
            xs.1 = xs.1.max(x);
            ys.0 = ys.0.min(y);
            ys.1 = ys.1.max(y);
        }
    }
    if !xs.0.is_finite() {
        xs = (0.0, 1.0);
    }
    if !ys.0.is_finite() {
        ys = (0.0, 1.0);
    }
    if xs.0 == xs.1 {
        xs.1 = xs.0 + 1.0;
    }
    if ys.0 == ys.1 {
        ys.0 -= 1.0;
        ys.1 += 1.0;
    }
    // A little vertical headroom.
    let pad = 0.05 * (ys.1 - ys.0);
    ys.0 -= pad;
    ys.1 += pad;

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let to_px = |x: f64, y: f64| {
        (
            MARGIN_L + (x - xs.0) / (xs.1 - xs.0) * plot_w,
            MARGIN_T + (1.0 - (y - ys.0) / (ys.1 - ys.0)) * plot_h,
        )
    };

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"monospace\" font-size=\"13\">\n"
    );
    let _ = write!(svg, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n");
    let _ = write!(
        svg,
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
        WIDTH / 2.0,
        title
    );

    // Frame.
    let _ = write!(
        svg,
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{plot_w}\" height=\"{plot_h}\" \
fill=\"none\" stroke=\"black\"/>\n"
    );

    // Axis ticks: min, mid, max on both axes.
    for frac in [0.0, 0.5, 1.0] {
        let xv = xs.0 + frac * (xs.1 - xs.0);
        let (px, _) = to_px(xv, ys.0);
        let _ = write!(
            svg,
            "<line x1=\"{px}\" y1=\"{}\" x2=\"{px}\" y2=\"{}\" stroke=\"black\"/>\n",
            MARGIN_T + plot_h,
            MARGIN_T + plot_h + 5.0
        );
        let _ = write!(
            svg,
            "<text x=\"{px}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            MARGIN_T + plot_h + 20.0,
            fmt_num(xv)
        );
        let yv = ys.0 + frac * (ys.1 - ys.0);
        let (_, py) = to_px(xs.0, yv);
        let _ = write!(
            svg,
            "<line x1=\"{}\" y1=\"{py}\" x2=\"{MARGIN_L}\" y2=\"{py}\" stroke=\"black\"/>\n",
            MARGIN_L - 5.0
        );
        let _ = write!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            MARGIN_L - 9.0,
            py + 4.0,
            fmt_num(yv)
        );
    }
    let _ = write!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 10.0,
        x_label
    );
    let _ = write!(
        svg,
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0,
        y_label
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        // Downsample long traces by a deterministic stride.
        let stride = (s.points.len() / 2000).max(1);
        let mut path = String::new();
        for (j, &(x, y)) in s.points.iter().step_by(stride).enumerate() {
            let (px, py) = to_px(x, y);
            let _ = write!(path, "{}{:.2},{:.2}", if j == 0 { "M" } else { " L" }, px, py);
        }
        let _ = write!(
            svg,
            "<path d=\"{path}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\"/>\n"
        );
        // Legend entry.
        let ly = MARGIN_T + 16.0 + 18.0 * i as f64;
        let _ = write!(
            svg,
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            MARGIN_L + plot_w - 160.0,
            MARGIN_L + plot_w - 130.0
        );
        let _ = write!(
            svg,
            "<text x=\"{}\" y=\"{}\">{}</text>\n",
            MARGIN_L + plot_w - 124.0,
            ly + 4.0,
            s.name
        );
    }
    svg.push_str("</svg>\n");
    svg
}
