//! Minimal line/scatter SVG emitter for the sweep summaries. Data emission
//! is the contract; these plots are a convenience behind `--svg`.

pub struct Series<'a> {
    pub points: &'a [(f64, f64)],
    pub errors: Option<&'a [f64]>,
}

pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &Series<'_>) -> String {
    let (w, h) = (640.0, 420.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 40.0, 50.0);
    let pts = series.points;
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for (i, &(x, y)) in pts.iter().enumerate() {
        let e = series.errors.map(|e| e[i]).unwrap_or(0.0);
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y - e);
        y_max = y_max.max(y + e);
    }
    if !x_min.is_finite() {
        x_min = 0.0;
        x_max = 1.0;
        y_min = 0.0;
        y_max = 1.0;
    }
    if (x_max - x_min).abs() < f64::MIN_POSITIVE {
        x_max = x_min + 1.0;
    }
    if (y_max - y_min).abs() < f64::MIN_POSITIVE {
        y_max = y_min + 1.0;
    }
    let sx = |x: f64| ml + (x - x_min) / (x_max - x_min) * (w - ml - mr);
    let sy = |y: f64| h - mb - (y - y_min) / (y_max - y_min) * (h - mt - mb);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        w / 2.0,
        title
    ));
    // axes
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>\n",
        h - mb,
        w - mr
    ));
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - mb
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"12\">{}</text>\n",
        (ml + w - mr) / 2.0,
        h - 12.0,
        x_label
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 {:.1})\">{}</text>\n",
        (mt + h - mb) / 2.0,
        (mt + h - mb) / 2.0,
        y_label
    ));
    // range ticks
    for (v, label_x) in [(x_min, true), (x_max, true)] {
        let _ = label_x;
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"10\">{v:.3}</text>\n",
            sx(v),
            h - mb + 16.0
        ));
    }
    for v in [y_min, y_max] {
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-size=\"10\">{v:.3}</text>\n",
            ml - 6.0,
            sy(v) + 4.0
        ));
    }
    // error bars
    if let Some(errors) = series.errors {
        for (&(x, y), &e) in pts.iter().zip(errors.iter()) {
            if e > 0.0 {
                svg.push_str(&format!(
                    "<line x1=\"{0:.2}\" y1=\"{1:.2}\" x2=\"{0:.2}\" y2=\"{2:.2}\" stroke=\"#888\"/>\n",
                    sx(x),
                    sy(y - e),
                    sy(y + e)
                ));
            }
        }
    }
    // polyline + markers
    let path: Vec<String> = pts
        .iter()
        .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
        .collect();
    svg.push_str(&format!(
        "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"{}\"/>\n",
        path.join(" ")
    ));
    for &(x, y) in pts {
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"#1f77b4\"/>\n",
            sx(x),
            sy(y)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
