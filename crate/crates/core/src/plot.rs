//! Self-contained SVG rendering of mean-function estimates: staircase curves,
//! a band polygon, and optional overlays. No plotting dependency; output is
//! byte-stable under fixed inputs.

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 45.0;

#[derive(Debug, Clone, Copy)]
pub enum LineStyle {
    Solid,
    Dashed,
    Dotted,
}

impl LineStyle {
    fn dash_attr(self) -> &'static str {
        match self {
            LineStyle::Solid => "",
            LineStyle::Dashed => " stroke-dasharray=\"8,4\"",
            LineStyle::Dotted => " stroke-dasharray=\"2,3\"",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Curve {
    pub label: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub color: &'static str,
    pub style: LineStyle,
    /// Render as a staircase (step-after) rather than a polyline.
    pub step: bool,
}

#[derive(Debug, Clone)]
pub struct Band {
    pub xs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub color: &'static str,
}

#[derive(Debug, Clone)]
pub struct Plot {
    pub title: String,
    pub x_window: (f64, f64),
    pub band: Option<Band>,
    pub curves: Vec<Curve>,
}

pub const COLOR_ESTIMATE: &str = "#1f77b4";
pub const COLOR_TRUTH: &str = "#000000";
pub const COLOR_BASELINE: &str = "#d62728";
pub const COLOR_SECONDARY: &str = "#2ca02c";
pub const COLOR_BAND: &str = "#aec7e8";

impl Plot {
    fn y_max(&self) -> f64 {
        let mut m: f64 = 0.0;
        if let Some(band) = &self.band {
            for &v in &band.upper {
                m = m.max(v);
            }
        }
        for c in &self.curves {
            for &v in &c.ys {
                m = m.max(v);
            }
        }
        if m <= 0.0 {
            1.0
        } else {
            m * 1.05
        }
    }

    pub fn render_svg(&self) -> String {
        let (x_lo, x_hi) = self.x_window;
        let y_hi = self.y_max();
        let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let sx = move |x: f64| MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
        let sy = move |y: f64| MARGIN_TOP + plot_h - y / y_hi * plot_h;

        let mut svg = String::new();
        svg.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
        ));
        svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"18\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
            WIDTH / 2.0,
            xml_escape(&self.title)
        ));

        if let Some(band) = &self.band {
            let mut points = String::new();
            for (x, y) in band.xs.iter().zip(&band.upper) {
                points.push_str(&format!("{:.2},{:.2} ", sx(*x), sy(*y)));
            }
            for (x, y) in band.xs.iter().zip(&band.lower).rev() {
                points.push_str(&format!("{:.2},{:.2} ", sx(*x), sy(*y)));
            }
            svg.push_str(&format!(
                "<polygon points=\"{}\" fill=\"{}\" fill-opacity=\"0.5\" stroke=\"none\"/>\n",
                points.trim_end(),
                band.color
            ));
        }

        for curve in &self.curves {
            let mut points = String::new();
            let mut last_y: Option<f64> = None;
            for (x, y) in curve.xs.iter().zip(&curve.ys) {
                if curve.step {
                    if let Some(prev) = last_y {
                        points.push_str(&format!("{:.2},{:.2} ", sx(*x), sy(prev)));
                    }
                    last_y = Some(*y);
                }
                points.push_str(&format!("{:.2},{:.2} ", sx(*x), sy(*y)));
            }
            svg.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.8\"{}/>\n",
                points.trim_end(),
                curve.color,
                curve.style.dash_attr()
            ));
        }

        // Axes with window bounds annotated.
        let x0 = sx(x_lo);
        let x1 = sx(x_hi);
        let y0 = sy(0.0);
        let y1 = sy(y_hi / 1.05);
        svg.push_str(&format!(
            "<line x1=\"{x0:.1}\" y1=\"{y0:.1}\" x2=\"{x1:.1}\" y2=\"{y0:.1}\" stroke=\"black\"/>\n"
        ));
        svg.push_str(&format!(
            "<line x1=\"{x0:.1}\" y1=\"{y0:.1}\" x2=\"{x0:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
            MARGIN_TOP
        ));
        svg.push_str(&format!(
            "<text x=\"{x0:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
            y0 + 18.0,
            fmt_tick(x_lo)
        ));
        svg.push_str(&format!(
            "<text x=\"{x1:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
            y0 + 18.0,
            fmt_tick(x_hi)
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{y0:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">0</text>\n",
            x0 - 6.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{y1:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">{}</text>\n",
            x0 - 6.0,
            fmt_tick(y_hi / 1.05)
        ));

        // Legend.
        let mut ly = MARGIN_TOP + 12.0;
        for curve in &self.curves {
            svg.push_str(&format!(
                "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{}\" stroke-width=\"2\"{}/>\n",
                MARGIN_LEFT + 10.0,
                MARGIN_LEFT + 40.0,
                curve.color,
                curve.style.dash_attr()
            ));
            svg.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
                MARGIN_LEFT + 46.0,
                ly + 4.0,
                xml_escape(&curve.label)
            ));
            ly += 16.0;
        }

        svg.push_str("</svg>\n");
        svg
    }
}

fn fmt_tick(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e6 {
        format!("{}", v as i64)
    } else {
        format!("{v:.3}")
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
