//! Two-dimensional image-source room simulation for multi-array recordings.

mod image;
mod manifest;
mod render;

pub use image::{calibrate_reflection, schroeder_t60, simulate_rirs, simulate_rirs_with_reflection};
pub use manifest::{load_rirs, save_rirs, RirIndex, RirIndexEntry, SourceIndexEntry};
pub use render::{render_observations, render_with_rirs, ObservationTensor, Rendered};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_SOUND_SPEED: f64 = 343.0;
pub const DEFAULT_MIC_SPACING: f64 = 0.0283;

/// Axis-aligned rectangle `[0, width] x [0, depth]` in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub width: f64,
    pub depth: f64,
}

impl Room {
    pub fn contains_strictly(&self, p: [f64; 2]) -> bool {
        p[0] > 0.0 && p[0] < self.width && p[1] > 0.0 && p[1] < self.depth
    }
}

/// Uniform linear array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicArray {
    pub center: [f64; 2],
    pub mic_count: usize,
    #[serde(default = "default_spacing")]
    pub spacing: f64,
    /// Direction of the mic line, radians.
    pub orientation: f64,
    /// Direction from the array toward the target spot, radians.
    pub look_direction: f64,
}

fn default_spacing() -> f64 {
    DEFAULT_MIC_SPACING
}

fn default_sound_speed() -> f64 {
    DEFAULT_SOUND_SPEED
}

impl MicArray {
    /// Broadside array at `center` looking at `target`.
    pub fn facing(center: [f64; 2], target: [f64; 2], mic_count: usize) -> Self {
        let look = (target[1] - center[1]).atan2(target[0] - center[0]);
        Self {
            center,
            mic_count,
            spacing: DEFAULT_MIC_SPACING,
            orientation: look + std::f64::consts::FRAC_PI_2,
            look_direction: look,
        }
    }

    /// Mic positions along the line, mic 0 first.
    pub fn mic_positions(&self) -> Vec<[f64; 2]> {
        let (s, c) = self.orientation.sin_cos();
        let mid = (self.mic_count as f64 - 1.0) / 2.0;
        (0..self.mic_count)
            .map(|m| {
                let off = (m as f64 - mid) * self.spacing;
                [self.center[0] + off * c, self.center[1] + off * s]
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceRole {
    Target,
    Interferer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourcePlacement {
    pub position: [f64; 2],
    pub role: SourceRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub room: Room,
    pub arrays: Vec<MicArray>,
    pub sources: Vec<SourcePlacement>,
    /// Reverberation time in seconds; 0 is anechoic.
    pub t60: f64,
    pub sample_rate: u32,
    #[serde(default = "default_sound_speed")]
    pub sound_speed: f64,
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl Scene {
    /// Default layout for `arrays` in {2, 3}: a 6 m x 6 m room with the target at
    /// the centre, arrays 2.5 m away facing it, and one interferer per array
    /// 1.5 m behind the target along that array's look direction.
    pub fn preset(arrays: usize, t60: f64) -> Result<Self> {
        let angles: &[f64] = match arrays {
            2 => &[180.0, 270.0],
            3 => &[180.0, 300.0, 60.0],
            _ => return Err(Error::InvalidScene(format!("no preset for {arrays} arrays"))),
        };
        let target = [3.0, 3.0];
        let (array_radius, behind) = (2.5, 1.5);
        let mut mic_arrays = Vec::new();
        let mut sources = vec![SourcePlacement { position: target, role: SourceRole::Target }];
        for &deg in angles {
            let (s, c) = deg.to_radians().sin_cos();
            let center = [target[0] + array_radius * c, target[1] + array_radius * s];
            mic_arrays.push(MicArray::facing(center, target, 3));
            sources.push(SourcePlacement {
                position: [target[0] - behind * c, target[1] - behind * s],
                role: SourceRole::Interferer,
            });
        }
        let scene = Self {
            room: Room { width: 6.0, depth: 6.0 },
            arrays: mic_arrays,
            sources,
            t60,
            sample_rate: 16000,
            sound_speed: DEFAULT_SOUND_SPEED,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScene(msg));
        if !(self.room.width > 0.0 && self.room.depth > 0.0) {
            return bad(format!("room {} x {}", self.room.width, self.room.depth));
        }
        if self.arrays.len() < 2 {
            return bad(format!("{} arrays, at least 2 required", self.arrays.len()));
        }
        let targets = self.sources.iter().filter(|s| s.role == SourceRole::Target).count();
        if targets != 1 {
            return bad(format!("{targets} target sources, exactly 1 required"));
        }
        if !(self.t60 >= 0.0) || self.sample_rate == 0 || !(self.sound_speed > 0.0) {
            return bad(format!("t60 {}, rate {}, c {}", self.t60, self.sample_rate, self.sound_speed));
        }
        for (idx, s) in self.sources.iter().enumerate() {
            if !self.room.contains_strictly(s.position) {
                return bad(format!("source {idx} at {:?} outside the room", s.position));
            }
        }
        for (a, arr) in self.arrays.iter().enumerate() {
            if arr.mic_count < 2 || !(arr.spacing > 0.0) {
                return bad(format!("array {a}: {} mics, spacing {}", arr.mic_count, arr.spacing));
            }
            for (m, p) in arr.mic_positions().into_iter().enumerate() {
                if !self.room.contains_strictly(p) {
                    return bad(format!("array {a} mic {m} at {p:?} outside the room"));
                }
                for (s, src) in self.sources.iter().enumerate() {
                    if distance(src.position, p) < 1e-6 {
                        return Err(Error::DegenerateGeometry { source_id: s, array: a, mic: m });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn target_index(&self) -> usize {
        self.sources.iter().position(|s| s.role == SourceRole::Target).unwrap_or(0)
    }

    pub fn roles(&self) -> Vec<SourceRole> {
        self.sources.iter().map(|s| s.role).collect()
    }

    /// Largest centre-to-centre distance between arrays, meters.
    pub fn max_array_distance(&self) -> f64 {
        let mut best: f64 = 0.0;
        for a in &self.arrays {
            for b in &self.arrays {
                best = best.max(distance(a.center, b.center));
            }
        }
        best
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let scene: Self = toml::from_str(text)?;
        scene.validate()?;
        Ok(scene)
    }
}

/// Room impulse response for one (source, array, mic) triple.
#[derive(Debug, Clone, PartialEq)]
pub struct Rir {
    pub taps: Vec<f64>,
    pub sample_rate: u32,
}

/// RIRs for every (source, array, mic) triple.
#[derive(Debug, Clone, PartialEq)]
pub struct RirSet {
    pub roles: Vec<SourceRole>,
    pub mics_per_array: Vec<usize>,
    pub sample_rate: u32,
    /// Indexed `[source][array][mic]`.
    pub rirs: Vec<Vec<Vec<Rir>>>,
}

impl RirSet {
    pub fn sources(&self) -> usize {
        self.roles.len()
    }

    pub fn arrays(&self) -> usize {
        self.mics_per_array.len()
    }

    pub fn get(&self, source: usize, array: usize, mic: usize) -> &Rir {
        &self.rirs[source][array][mic]
    }

    pub fn target_index(&self) -> usize {
        self.roles.iter().position(|&r| r == SourceRole::Target).unwrap_or(0)
    }

    pub fn interferers(&self) -> impl Iterator<Item = usize> + '_ {
        self.roles.iter().enumerate().filter(|(_, &r)| r == SourceRole::Interferer).map(|(i, _)| i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for a in [2, 3] {
            let s = Scene::preset(a, 0.0).unwrap();
            assert_eq!(s.arrays.len(), a);
            assert_eq!(s.sources.len(), a + 1);
            assert_eq!(s.target_index(), 0);
            // each interferer sits behind the target on its array's look line
            for (k, arr) in s.arrays.iter().enumerate() {
                let intf = s.sources[k + 1].position;
                let ang = (intf[1] - arr.center[1]).atan2(intf[0] - arr.center[0]);
                let diff = (ang - arr.look_direction).sin().abs();
                assert!(diff < 1e-12);
                assert!(distance(arr.center, intf) > distance(arr.center, s.sources[0].position));
            }
        }
        assert!(Scene::preset(4, 0.0).is_err());
    }

    #[test]
    fn mic_line_geometry() {
        let arr = MicArray::facing([1.0, 3.0], [3.0, 3.0], 3);
        let mics = arr.mic_positions();
        assert!((distance(mics[0], mics[1]) - 0.0283).abs() < 1e-12);
        assert!((distance(mics[0], mics[2]) - 0.0566).abs() < 1e-12);
        assert!((mics[1][0] - 1.0).abs() < 1e-12 && (mics[1][1] - 3.0).abs() < 1e-12);
        // broadside: all mics equidistant in x from the target line
        assert!((mics[0][0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn validation_errors() {
        let mut s = Scene::preset(2, 0.0).unwrap();
        s.sources[1].role = SourceRole::Target;
        assert!(s.validate().is_err());
        let mut s = Scene::preset(2, 0.0).unwrap();
        s.sources[0].position = [7.0, 1.0];
        assert!(s.validate().is_err());
        let mut s = Scene::preset(2, 0.0).unwrap();
        s.sources[1].position = s.arrays[0].mic_positions()[2];
        assert!(matches!(s.validate(), Err(Error::DegenerateGeometry { source_id: 1, array: 0, mic: 2 })));
        let mut s = Scene::preset(2, 0.0).unwrap();
        s.arrays.truncate(1);
        assert!(s.validate().is_err());
    }

    #[test]
    fn toml_roundtrip() {
        let s = Scene::preset(3, 0.256).unwrap();
        let text = toml::to_string(&s).unwrap();
        assert_eq!(Scene::from_toml(&text).unwrap(), s);
        let minimal = r#"
            t60 = 0.0
            sample_rate = 16000
            room = { width = 5.0, depth = 4.0 }
            [[arrays]]
            center = [1.0, 2.0]
            mic_count = 2
            orientation = 1.5707963267948966
            look_direction = 0.0
            [[arrays]]
            center = [2.5, 1.0]
            mic_count = 2
            orientation = 0.0
            look_direction = 1.5707963267948966
            [[sources]]
            position = [2.5, 2.0]
            role = "target"
        "#;
        let s = Scene::from_toml(minimal).unwrap();
        assert_eq!(s.sound_speed, 343.0);
        assert_eq!(s.arrays[0].spacing, 0.0283);
    }
}
