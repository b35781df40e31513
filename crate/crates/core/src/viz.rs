//! SVG rendering of one matched pair: both images side by side with a line
//! per correspondence and the per-orientation counts underneath.

use std::fmt::Write as _;
use std::path::Path;

use base64::Engine;

use crate::error::{Error, Result};
use crate::model::{GrayImage, Orientation, OrientationCounts, PairMatchResult};

const GAP: usize = 16;
const CAPTION_HEIGHT: usize = 48;

/// Finds the result for `{a, b}` in either order.
pub fn find_pair<'r>(results: &'r [PairMatchResult], a: &str, b: &str) -> Result<&'r PairMatchResult> {
    results
        .iter()
        .find(|r| (r.pair.a == a && r.pair.b == b) || (r.pair.a == b && r.pair.b == a))
        .ok_or_else(|| Error::PairNotFound(a.to_string(), b.to_string()))
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn counts_text(counts: &OrientationCounts) -> String {
    Orientation::ALL
        .iter()
        .map(|&o| format!("{}°:{}", o.degrees(), counts.get(o)))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Caption line: counts, total and verdict.
pub fn caption(result: &PairMatchResult) -> String {
    let verdict = if result.kept { "kept" } else { "dropped (< gate)" };
    format!(
        "{} – {} | stage 1 [{}] | stage 2 [{}] | total {} | {}",
        result.pair.a,
        result.pair.b,
        counts_text(&result.stage1_counts),
        counts_text(&result.stage2_counts),
        result.total,
        verdict
    )
}

fn embed(image: &GrayImage, x: usize) -> String {
    let data = base64::engine::general_purpose::STANDARD.encode(image.encode_png());
    format!(
        "<image x=\"{x}\" y=\"0\" width=\"{}\" height=\"{}\" href=\"data:image/png;base64,{data}\"/>\n",
        image.width(),
        image.height()
    )
}

/// `image_a` and `image_b` must be the images of `result.pair.a` and `.b`.
pub fn render_pair_svg(result: &PairMatchResult, image_a: &GrayImage, image_b: &GrayImage) -> String {
    let offset = image_a.width() + GAP;
    let width = offset + image_b.width();
    let height = image_a.height().max(image_b.height()) + CAPTION_HEIGHT;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">"
    );
    svg.push_str(&embed(image_a, 0));
    svg.push_str(&embed(image_b, offset));
    let colour = if result.kept { "#2ca02c" } else { "#d62728" };
    let _ = writeln!(svg, "<g stroke=\"{colour}\" stroke-width=\"1\" stroke-opacity=\"0.7\">");
    for [xa, ya, xb, yb] in &result.correspondences {
        let _ = writeln!(
            svg,
            "<line x1=\"{xa}\" y1=\"{ya}\" x2=\"{}\" y2=\"{yb}\"/>",
            xb + offset as f32
        );
    }
    svg.push_str("</g>\n");
    let _ = writeln!(
        svg,
        "<text x=\"4\" y=\"{}\" font-family=\"monospace\" font-size=\"12\">{}</text>",
        height - CAPTION_HEIGHT / 2,
        escape(&caption(result))
    );
    svg.push_str("</svg>\n");
    svg
}

pub fn save_pair_svg(path: &Path, result: &PairMatchResult, image_a: &GrayImage, image_b: &GrayImage) -> Result<()> {
    std::fs::write(path, render_pair_svg(result, image_a, image_b)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CandidatePair;

    fn result(kept: bool) -> PairMatchResult {
        let mut s1 = OrientationCounts::default();
        s1.set(Orientation::R90, 2);
        PairMatchResult {
            pair: CandidatePair::unscored("x<1", "y").unwrap(),
            stage1_counts: s1,
            stage2_counts: s1,
            total: 4,
            kept,
            correspondences: vec![[1.0, 2.0, 3.0, 4.0], [5.0, 6.0, 7.0, 8.0]],
        }
    }

    #[test]
    fn one_line_per_correspondence() {
        let img = GrayImage::from_fn(10, 8, |x, y| (x * y) as u8).unwrap();
        let svg = render_pair_svg(&result(true), &img, &img);
        assert_eq!(svg.matches("<line ").count(), 2);
        assert_eq!(svg.matches("<image ").count(), 2);
        assert!(svg.contains("x2=\"29\""));
        assert!(svg.contains("x&lt;1"));
        assert!(!svg.contains("dropped"));
    }

    #[test]
    fn dropped_caption() {
        assert!(caption(&result(false)).ends_with("dropped (< gate)"));
        assert!(caption(&result(false)).contains("90°:2"));
    }

    #[test]
    fn unknown_pair() {
        let rs = vec![result(true)];
        assert!(find_pair(&rs, "y", "x<1").is_ok());
        assert!(matches!(find_pair(&rs, "x<1", "z"), Err(Error::PairNotFound(..))));
    }
}
