use std::fs;
use std::io;
use std::path::Path;

use serde::Deserialize;

use super::{is_valid_level_name, ChallengeError, ChallengeSpec, Level};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LevelFile {
    name: String,
    test: String,
    #[serde(default)]
    next: NextField,
    #[serde(default, alias = "text")]
    body: String,
}

#[derive(Deserialize, Default)]
#[serde(untagged)]
enum NextField {
    #[default]
    None,
    One(String),
    Many(Vec<String>),
}

/// Loads a challenge written as one YAML file per level (`name`, `test`,
/// `next`, `body`). Files are taken in lexicographic file-name order, so the
/// first file holds the entry level.
pub fn load_level_dir(challenge_name: &str, dir: &Path) -> Result<ChallengeSpec, LoadDirError> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("yaml" | "yml")))
        .collect();
    paths.sort();

    let mut levels = Vec::with_capacity(paths.len());
    for path in paths {
        let text = fs::read_to_string(&path)?;
        let file: LevelFile = serde_yaml::from_str(&text).map_err(|e| LoadDirError::Yaml {
            file: path.display().to_string(),
            message: e.to_string(),
        })?;
        if !is_valid_level_name(&file.name) {
            return Err(LoadDirError::Yaml {
                file: path.display().to_string(),
                message: format!("invalid level name `{}`", file.name),
            });
        }
        if file.test.trim().is_empty() {
            return Err(ChallengeError::MissingField { field: "test", line: 0 }.into());
        }
        let next = match file.next {
            NextField::None => Vec::new(),
            NextField::One(n) => vec![n],
            NextField::Many(v) => v,
        };
        levels.push(Level {
            name: file.name,
            test: file.test.trim().to_string(),
            next,
            body: file.body.trim_end().to_string(),
        });
    }
    Ok(ChallengeSpec::new(challenge_name, levels)?)
}

#[derive(Debug, thiserror::Error)]
pub enum LoadDirError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("{file}: {message}")]
    Yaml { file: String, message: String },
    #[error(transparent)]
    Challenge(#[from] ChallengeError),
}
