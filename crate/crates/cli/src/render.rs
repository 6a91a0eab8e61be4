//! Affordance heatmaps: per-point colors and orthographic PPM images.

use clap::ValueEnum;
use ooaf::{Error, FeatureCloud, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum View {
    /// Looking down the z axis.
    Top,
    /// Looking along +y.
    Front,
    /// Looking along −x.
    Side,
}

impl View {
    /// Image coordinates (right, up) and depth toward the viewer.
    fn project(self, p: &[f64; 3]) -> (f64, f64, f64) {
        match self {
            View::Top => (p[0], p[1], p[2]),
            View::Front => (p[0], p[2], -p[1]),
            View::Side => (p[1], p[2], p[0]),
        }
    }
}

/// Blue → cyan → green → yellow → red.
pub fn heat_color(v: f64) -> [f64; 3] {
    let v = v.clamp(0.0, 1.0) * 4.0;
    let seg = (v.floor() as usize).min(3);
    let t = v - seg as f64;
    match seg {
        0 => [0.0, t, 1.0],
        1 => [0.0, 1.0, 1.0 - t],
        2 => [t, 1.0, 0.0],
        _ => [1.0, 1.0 - t, 0.0],
    }
}

fn channel_values(cloud: &FeatureCloud, channel: usize) -> Result<Vec<f64>> {
    cloud.affordance_channel(channel).ok_or_else(|| {
        Error::Invalid(format!(
            "cloud has {} affordance channels, channel {channel} requested",
            cloud.channels()
        ))
    })
}

/// Copy of `cloud` whose features are the RGB heat colors of `channel`.
pub fn colorize(cloud: &FeatureCloud, channel: usize) -> Result<FeatureCloud> {
    let values = channel_values(cloud, channel)?;
    let rgb = values.iter().flat_map(|&v| heat_color(v)).collect();
    cloud.with_features(3, rgb)
}

/// Binary PPM of the cloud seen from `view`, points splatted as small
/// squares with a depth test. The background is white.
pub fn render_ppm(cloud: &FeatureCloud, channel: usize, view: View, size: usize) -> Result<Vec<u8>> {
    if size < 8 {
        return Err(Error::Invalid("image size must be at least 8".into()));
    }
    let values = channel_values(cloud, channel)?;
    let proj: Vec<(f64, f64, f64)> = cloud.points().iter().map(|p| view.project(p)).collect();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for &(u, v, _) in &proj {
        lo = [lo[0].min(u), lo[1].min(v)];
        hi = [hi[0].max(u), hi[1].max(v)];
    }
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
    let usable = size as f64 * 0.9;
    let scale = usable / extent;
    let off = [
        (size as f64 - (hi[0] - lo[0]) * scale) / 2.0,
        (size as f64 - (hi[1] - lo[1]) * scale) / 2.0,
    ];
    let r = (size / 128).max(1) as isize;
    let mut depth = vec![f64::NEG_INFINITY; size * size];
    let mut pixels = vec![255u8; size * size * 3];
    for (&(u, v, d), &a) in proj.iter().zip(&values) {
        let col = (off[0] + (u - lo[0]) * scale).floor() as isize;
        let row = size as isize - 1 - (off[1] + (v - lo[1]) * scale).floor() as isize;
        let c = heat_color(a).map(|x| (x * 255.0).round() as u8);
        for dr in -r..=r {
            for dc in -r..=r {
                let (y, x) = (row + dr, col + dc);
                if y < 0 || x < 0 || y >= size as isize || x >= size as isize {
                    continue;
                }
                let i = y as usize * size + x as usize;
                if d > depth[i] {
                    depth[i] = d;
                    pixels[3 * i..3 * i + 3].copy_from_slice(&c);
                }
            }
        }
    }
    let mut out = format!("P6\n{size} {size}\n255\n").into_bytes();
    out.extend_from_slice(&pixels);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colormap_endpoints() {
        assert_eq!(heat_color(0.0), [0.0, 0.0, 1.0]);
        assert_eq!(heat_color(0.5), [0.0, 1.0, 0.0]);
        assert_eq!(heat_color(1.0), [1.0, 0.0, 0.0]);
        assert_eq!(heat_color(7.0), heat_color(1.0));
    }

    #[test]
    fn nearer_point_wins_the_pixel() {
        let pts = vec![[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [1.0, 1.0, 0.0]];
        let cloud = FeatureCloud::from_points(pts, 0)
            .unwrap()
            .with_affordance(1, vec![0.0, 1.0, 0.5])
            .unwrap();
        let img = render_ppm(&cloud, 0, View::Top, 16).unwrap();
        let header = b"P6\n16 16\n255\n".len();
        assert_eq!(img.len(), header + 16 * 16 * 3);
        // the two stacked points land bottom-left; the upper one is red
        let px = &img[header..];
        let reds = px.chunks(3).filter(|c| c == &[255, 0, 0]).count();
        let blues = px.chunks(3).filter(|c| c == &[0, 0, 255]).count();
        assert!(reds > 0 && blues == 0);
    }

    #[test]
    fn missing_channel_is_invalid() {
        let cloud = FeatureCloud::from_points(vec![[0.0; 3], [1.0; 3]], 0).unwrap();
        assert!(colorize(&cloud, 0).unwrap_err().is_validation());
    }
}
