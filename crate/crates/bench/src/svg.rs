//! Minimal SVG line chart: one series against a horizontal threshold, with an
//! optional vertical onset marker.

use std::fmt::Write;

const W: f64 = 800.0;
const H: f64 = 320.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 40.0;

pub struct Chart<'a> {
    pub title: &'a str,
    pub y_label: &'a str,
    pub points: Vec<(f64, f64)>,
    pub threshold: f64,
    pub onset: Option<f64>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Chart<'_> {
    pub fn render(&self) -> String {
        let (x0, x1) = self
            .points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
        let (x0, x1) = if x0.is_finite() { (x0, x1.max(x0 + 1.0)) } else { (0.0, 1.0) };
        let y_top = self
            .points
            .iter()
            .map(|p| p.1)
            .filter(|v| v.is_finite())
            .fold(self.threshold, f64::max)
            * 1.1;
        let y_top = if y_top > 0.0 { y_top } else { 1.0 };
        let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (W - LEFT - RIGHT);
        let py = |y: f64| TOP + (1.0 - y.clamp(0.0, y_top) / y_top) * (H - TOP - BOTTOM);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle">{}</text>"#, W / 2.0, escape(self.title));
        // axes
        let _ = writeln!(
            s,
            r#"<path d="M{LEFT},{TOP} L{LEFT},{b} L{r},{b}" fill="none" stroke="black"/>"#,
            b = H - BOTTOM,
            r = W - RIGHT
        );
        for k in 0..=4 {
            let yv = y_top * k as f64 / 4.0;
            let xv = x0 + (x1 - x0) * k as f64 / 4.0;
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{:.1}" text-anchor="end">{:.3}</text>"#,
                LEFT - 5.0,
                py(yv) + 4.0,
                yv
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{}" text-anchor="middle">{:.0}</text>"#,
                px(xv),
                H - BOTTOM + 16.0,
                xv
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">t</text>"#,
            (LEFT + W - RIGHT) / 2.0,
            H - 6.0
        );
        let _ = writeln!(
            s,
            r#"<text x="14" y="{y}" text-anchor="middle" transform="rotate(-90 14 {y})">{}</text>"#,
            escape(self.y_label),
            y = (TOP + H - BOTTOM) / 2.0
        );
        let path: Vec<String> = self
            .points
            .iter()
            .filter(|p| p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" points="{}" fill="none" stroke="steelblue" stroke-width="1"/>"#,
            path.join(" ")
        );
        let ty = py(self.threshold);
        let _ = writeln!(
            s,
            r#"<line class="threshold" x1="{LEFT}" y1="{ty:.2}" x2="{}" y2="{ty:.2}" stroke="firebrick" stroke-dasharray="6,4"/>"#,
            W - RIGHT
        );
        if let Some(t0) = self.onset {
            let ox = px(t0);
            let _ = writeln!(
                s,
                r#"<line class="onset" x1="{ox:.2}" y1="{TOP}" x2="{ox:.2}" y2="{}" stroke="gray" stroke-dasharray="2,3"/>"#,
                H - BOTTOM
            );
            let _ = writeln!(s, r#"<text x="{:.2}" y="{}">onset t={t0}</text>"#, ox + 4.0, TOP + 12.0);
        }
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_is_horizontal_and_onset_marked() {
        let chart = Chart {
            title: "stat",
            y_label: "y",
            points: (1..=100).map(|t| (t as f64, (t % 7) as f64)).collect(),
            threshold: 5.0,
            onset: Some(50.0),
        };
        let svg = chart.render();
        let line = svg.lines().find(|l| l.contains("class=\"threshold\"")).unwrap();
        let attr = |name: &str| {
            let start = line.find(&format!("{name}=\"")).unwrap() + name.len() + 2;
            line[start..].split('"').next().unwrap().to_string()
        };
        assert_eq!(attr("y1"), attr("y2"));
        assert!(svg.contains("class=\"onset\""));
        assert!(svg.contains("onset t=50"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
