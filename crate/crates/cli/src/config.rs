use std::path::Path;

use serde::Deserialize;
use viewsynth::scene::{default_view_angles, Orbit, Pose};

use crate::commands::CliError;

/// Scene description read from TOML.
///
/// ```toml
/// angles = [-40.0, -20.0, 20.0, 40.0]
///
/// [[figure]]
/// name = "reach"
/// seed = 7
/// pose = { shoulder = [1.2, 0.3], elbow = [0.4, 1.0] }
/// ```
///
/// `angles` defaults to the seventeen-view ring and `orbit` to a 200x200
/// camera 3.2 units from the figure.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(default = "default_view_angles")]
    pub angles: Vec<f64>,
    #[serde(default)]
    pub orbit: Orbit,
    #[serde(rename = "figure")]
    pub figures: Vec<FigureConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigureConfig {
    pub name: String,
    pub seed: u64,
    #[serde(default)]
    pub pose: Pose,
}

impl SceneConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::new("config", format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| e.prefixed(&path.display().to_string()))
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: SceneConfig = toml::from_str(text).map_err(|e| CliError::new("config", e.to_string()))?;
        if cfg.figures.is_empty() {
            return Err(CliError::new("config", "no [[figure]] entries"));
        }
        if cfg.angles.is_empty() {
            return Err(CliError::new("config", "empty angle list"));
        }
        for (i, a) in cfg.angles.iter().enumerate() {
            if !a.is_finite() || cfg.angles[..i].contains(a) {
                return Err(CliError::new(
                    "config",
                    format!("angle {a} is not finite or is repeated"),
                ));
            }
        }
        let mut names: Vec<&str> = cfg.figures.iter().map(|f| f.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(CliError::new("config", format!("duplicate figure name {:?}", w[0])));
        }
        for f in &cfg.figures {
            let bad = f.name.is_empty() || f.name.contains(['/', '\\']) || f.name.starts_with('.');
            if bad {
                return Err(CliError::new(
                    "config",
                    format!("figure name {:?} is not a plain directory name", f.name),
                ));
            }
            f.pose
                .validate()
                .map_err(|e| CliError::new("config", format!("figure {}: {e}", f.name)))?;
        }
        cfg.orbit
            .intrinsics
            .validate()
            .map_err(|e| CliError::new("config", format!("orbit: {e}")))?;
        Ok(cfg)
    }

    /// Three figures in distinct poses around the full view ring.
    pub fn builtin() -> Self {
        SceneConfig {
            angles: default_view_angles(),
            orbit: Orbit::default(),
            figures: vec![
                FigureConfig {
                    name: "rest".into(),
                    seed: 1,
                    pose: Pose {
                        shoulder: [1.3, 1.2],
                        elbow: [0.2, 0.3],
                        ..Pose::default()
                    },
                },
                FigureConfig {
                    name: "reach".into(),
                    seed: 2,
                    pose: Pose {
                        shoulder: [0.2, 0.9],
                        elbow: [1.0, 0.4],
                        hip: [0.3, -0.1],
                        knee: [0.4, 0.1],
                    },
                },
                FigureConfig {
                    name: "stride".into(),
                    seed: 3,
                    pose: Pose {
                        shoulder: [0.8, 0.6],
                        elbow: [0.6, 0.9],
                        hip: [0.5, -0.3],
                        knee: [0.2, 0.5],
                    },
                },
            ],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = SceneConfig::parse("[[figure]]\nname = \"a\"\nseed = 4\n").unwrap();
        assert_eq!(cfg.angles.len(), 17);
        assert_eq!(cfg.orbit, Orbit::default());
        assert_eq!(cfg.figures[0].pose, Pose::default());
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            "angles = [10.0]\n",
            "[[figure]]\nname = \"a\"\nseed = 1\ncolour = 3\n",
            "[[figure]]\nname = \"a\"\nseed = 1\n[[figure]]\nname = \"a\"\nseed = 2\n",
            "[[figure]]\nname = \"../x\"\nseed = 1\n",
            "[[figure]]\nname = \"a\"\nseed = 1\npose = { elbow = [-1.0, 0.0] }\n",
            "angles = []\n[[figure]]\nname = \"a\"\nseed = 1\n",
            "angles = [10.0, 10.0]\n[[figure]]\nname = \"a\"\nseed = 1\n",
        ] {
            assert!(SceneConfig::parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn builtin_is_valid() {
        for f in &SceneConfig::builtin().figures {
            f.pose.validate().unwrap();
        }
    }
}
