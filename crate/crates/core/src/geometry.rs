//! Microphone-array and camera geometry.
//!
//! Coordinates are in meters with the array on the `z = 0` plane: `x` runs
//! horizontally along the baseline, `y` vertically, and `z` points forward
//! out of the baffle. Azimuth is measured in the horizontal plane from
//! broadside, positive towards `+x` (image right).

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const SPEED_OF_SOUND: f64 = 343.0;
pub const SAMPLE_RATE: f64 = 48_000.0;
/// Spacing of the ORTF-like stereo pair from the array center.
pub const STEREO_HALF_SPACING: f64 = 0.0883;

pub type Point = [f64; 3];

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ArrayGeometry {
    pub mic_positions: Vec<Point>,
    pub reference_mic_index: usize,
    /// Single channel used for the mono ablation.
    pub center_mic_index: usize,
    /// Two channels used for the stereo ablation.
    pub stereo_mic_indices: [usize; 2],
    pub speed_of_sound: f64,
    pub sample_rate: f64,
}

impl ArrayGeometry {
    /// The default 16-microphone rig: a 9-element lower subarray spanning the
    /// full 0.450 m aperture and a 7-element upper subarray 0.10 m above it.
    ///
    /// Index 0 is the leftmost microphone of the lower subarray and serves as
    /// the GCC/NIPD reference.
    pub fn default_rig() -> Self {
        let lower = [-0.225, -0.160, -STEREO_HALF_SPACING, -0.040, 0.0, 0.040, STEREO_HALF_SPACING, 0.160, 0.225];
        let upper = [-0.18, -0.12, -0.06, 0.0, 0.06, 0.12, 0.18];
        let mut mic_positions: Vec<Point> = lower.iter().map(|&x| [x, 0.0, 0.0]).collect();
        mic_positions.extend(upper.iter().map(|&x| [x, 0.10, 0.0]));
        Self {
            mic_positions,
            reference_mic_index: 0,
            center_mic_index: 4,
            stereo_mic_indices: [2, 6],
            speed_of_sound: SPEED_OF_SOUND,
            sample_rate: SAMPLE_RATE,
        }
    }

    pub fn n_mics(&self) -> usize {
        self.mic_positions.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_mics();
        if n < 2 {
            return Err(Error::config("array needs at least two microphones"));
        }
        let check = |i: usize, what: &str| {
            if i < n {
                Ok(())
            } else {
                Err(Error::config(format!("{what} index {i} out of range for {n} mics")))
            }
        };
        check(self.reference_mic_index, "reference mic")?;
        check(self.center_mic_index, "center mic")?;
        check(self.stereo_mic_indices[0], "stereo mic")?;
        check(self.stereo_mic_indices[1], "stereo mic")?;
        if !(self.speed_of_sound > 0.0 && self.sample_rate > 0.0) {
            return Err(Error::config("speed of sound and sample rate must be positive"));
        }
        Ok(())
    }

    /// Largest pairwise microphone distance, `d_max`.
    pub fn max_aperture(&self) -> f64 {
        self.farthest_pair().2
    }

    /// Indices and distance of the two microphones furthest apart (lowest
    /// index pair wins ties).
    pub fn farthest_pair(&self) -> (usize, usize, f64) {
        let mut best = (0, 0, 0.0);
        for a in 0..self.n_mics() {
            for b in a + 1..self.n_mics() {
                let d = distance(&self.mic_positions[a], &self.mic_positions[b]);
                if d > best.2 + 1e-12 {
                    best = (a, b, d);
                }
            }
        }
        best
    }

    /// Geometric center of the microphone positions.
    pub fn centroid(&self) -> Point {
        let n = self.n_mics() as f64;
        let mut c = [0.0; 3];
        for p in &self.mic_positions {
            for k in 0..3 {
                c[k] += p[k] / n;
            }
        }
        c
    }

    pub fn is_planar(&self) -> bool {
        self.mic_positions.iter().all(|p| p[2].abs() < 1e-12)
    }

    /// Checks that the configured stereo pair sits at `±half_spacing` from the
    /// array center along the baseline (within 1 mm) and on the same row.
    pub fn verify_stereo_pair(&self, half_spacing: f64) -> Result<()> {
        let c = self.centroid();
        let [a, b] = self.stereo_mic_indices;
        let (pa, pb) = (self.mic_positions[a], self.mic_positions[b]);
        let ok = (pa[0] - c[0] + half_spacing).abs() < 1e-3
            && (pb[0] - c[0] - half_spacing).abs() < 1e-3
            && (pa[1] - pb[1]).abs() < 1e-9;
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!(
                "stereo mics {a},{b} at x={:.4},{:.4} are not at ±{half_spacing} m from center x={:.4}",
                pa[0], pb[0], c[0]
            )))
        }
    }

    /// Far-field arrival time at `mic` relative to the coordinate origin.
    fn arrival_time(&self, mic: usize, direction: &Point) -> f64 {
        -dot(&self.mic_positions[mic], direction) / self.speed_of_sound
    }
}

/// Arrival-time difference `t_a - t_b` (seconds) of a far-field plane wave
/// from `azimuth_deg`. Positive when the wave reaches `mic_b` first.
pub fn tdoa(geometry: &ArrayGeometry, azimuth_deg: f64, mic_a: usize, mic_b: usize) -> Result<f64> {
    if !(azimuth_deg > -90.0 && azimuth_deg < 90.0) {
        return Err(Error::Domain { what: "azimuth (deg)", value: azimuth_deg });
    }
    let n = geometry.n_mics();
    if mic_a >= n || mic_b >= n {
        return Err(Error::Domain { what: "mic index", value: mic_a.max(mic_b) as f64 });
    }
    let u = azimuth_direction(azimuth_deg);
    Ok(geometry.arrival_time(mic_a, &u) - geometry.arrival_time(mic_b, &u))
}

/// Unit vector from the array towards a source at `azimuth_deg`.
pub fn azimuth_direction(azimuth_deg: f64) -> Point {
    let a = azimuth_deg.to_radians();
    [libm::sin(a), 0.0, libm::cos(a)]
}

pub(crate) fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn distance(a: &Point, b: &Point) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    libm::sqrt(dot(&d, &d))
}

/// Pinhole camera facing `horizontal_offset_deg` away from array broadside.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CameraModel {
    pub horizontal_fov_deg: f64,
    pub image_width: f64,
    pub horizontal_offset_deg: f64,
    pub view_index: usize,
}

pub const N_VIEWS: usize = 11;

impl Default for CameraModel {
    fn default() -> Self {
        Self { horizontal_fov_deg: 55.0, image_width: 2448.0, horizontal_offset_deg: 0.0, view_index: 0 }
    }
}

impl CameraModel {
    /// Eleven views with yaw offsets spaced 0.5° apart around broadside.
    pub fn default_views() -> Vec<CameraModel> {
        (0..N_VIEWS)
            .map(|v| CameraModel {
                horizontal_offset_deg: (v as f64 - 5.0) * 0.5,
                view_index: v,
                ..CameraModel::default()
            })
            .collect()
    }

    fn half_fov_tan(&self) -> f64 {
        libm::tan((self.horizontal_fov_deg / 2.0).to_radians())
    }

    pub fn contains(&self, azimuth_deg: f64) -> bool {
        (azimuth_deg - self.horizontal_offset_deg).abs() <= self.horizontal_fov_deg / 2.0 + 1e-12
    }

    /// `x = W/2 * (1 + tan(az - offset) / tan(fov/2))`.
    pub fn project(&self, azimuth_deg: f64) -> Result<f64> {
        if !self.contains(azimuth_deg) {
            return Err(Error::Domain { what: "azimuth outside camera FoV (deg)", value: azimuth_deg });
        }
        let rel = (azimuth_deg - self.horizontal_offset_deg).to_radians();
        Ok(self.image_width / 2.0 * (1.0 + libm::tan(rel) / self.half_fov_tan()))
    }

    pub fn unproject(&self, x_px: f64) -> Result<f64> {
        if !(x_px >= -1e-9 && x_px <= self.image_width + 1e-9) {
            return Err(Error::Domain { what: "pixel outside image", value: x_px });
        }
        let t = (2.0 * x_px / self.image_width - 1.0) * self.half_fov_tan();
        Ok(self.horizontal_offset_deg + libm::atan(t).to_degrees())
    }

    /// Pixel distance covered by `degrees` starting at the principal point.
    pub fn pixels_for_degrees(&self, degrees: f64) -> f64 {
        self.image_width / 2.0 * libm::tan(degrees.to_radians()) / self.half_fov_tan()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn default_rig_aperture_and_plane() {
        let g = ArrayGeometry::default_rig();
        g.validate().unwrap();
        assert_eq!(g.n_mics(), 16);
        assert_abs_diff_eq!(g.max_aperture(), 0.450, epsilon = 1e-6);
        assert_eq!(g.farthest_pair(), (0, 8, g.max_aperture()));
        assert!(g.is_planar());
        g.verify_stereo_pair(STEREO_HALF_SPACING).unwrap();
    }

    #[test]
    fn tdoa_broadside_and_identity() {
        let g = ArrayGeometry::default_rig();
        for a in 0..16 {
            for b in 0..16 {
                assert_eq!(tdoa(&g, 0.0, a, b).unwrap(), 0.0);
            }
            assert_eq!(tdoa(&g, 17.0, a, a).unwrap(), 0.0);
        }
    }

    #[test]
    fn tdoa_fov_edge_farthest_pair() {
        let g = ArrayGeometry::default_rig();
        let t = tdoa(&g, 27.5, 0, 8).unwrap();
        let expected = 0.450 * libm::sin(27.5f64.to_radians()) / 343.0;
        assert_abs_diff_eq!(t, expected, epsilon = 1e-15);
        assert_abs_diff_eq!(t, 6.06e-4, epsilon = 5e-7);
        // Brute force: path-length difference to a very distant point source.
        let r = 1e7;
        let u = azimuth_direction(27.5);
        let src = [u[0] * r, u[1] * r, u[2] * r];
        let path = distance(&src, &g.mic_positions[0]) - distance(&src, &g.mic_positions[8]);
        assert_abs_diff_eq!(t, path / 343.0, epsilon = 1e-10);
    }

    #[test]
    fn tdoa_rejects_endfire() {
        let g = ArrayGeometry::default_rig();
        assert!(matches!(tdoa(&g, 90.0, 0, 1), Err(Error::Domain { .. })));
        assert!(tdoa(&g, -95.0, 0, 1).is_err());
        assert!(tdoa(&g, 10.0, 0, 16).is_err());
    }

    #[test]
    fn projection_examples() {
        let cam = CameraModel::default();
        assert_abs_diff_eq!(cam.project(0.0).unwrap(), 1224.0, epsilon = 1e-9);
        assert_abs_diff_eq!(cam.project(27.5).unwrap(), 2448.0, epsilon = 1e-9);
        assert_abs_diff_eq!(cam.project(-27.5).unwrap(), 0.0, epsilon = 1e-9);
        let two = cam.project(2.0).unwrap();
        let expected = 1224.0 * (1.0 + libm::tan(2f64.to_radians()) / libm::tan(27.5f64.to_radians()));
        assert_abs_diff_eq!(two, expected, epsilon = 1e-9);
        assert!((two - 1306.0).abs() < 1.0);
        assert!(cam.project(28.0).is_err());

        let shifted = CameraModel { horizontal_offset_deg: 3.0, ..cam };
        assert_abs_diff_eq!(shifted.project(3.0).unwrap(), 1224.0, epsilon = 1e-9);
    }
}
