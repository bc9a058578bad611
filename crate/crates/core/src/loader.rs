//! Reading challenges from disk in any of their forms: plain challenge
//! files, templates with a variables file, directories of per-level YAML
//! files and encrypted containers.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::challenge::{
    expand_template, load_level_dir, parse_challenge, parse_challenge_unchecked, ChallengeError, ChallengeSpec,
    LoadDirError, TemplateError, TemplateVariables,
};
use crate::security::{decrypt_challenge, is_encrypted, ChallengeKey, CryptoError};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}: cannot decrypt: {1}")]
    Crypto(PathBuf, CryptoError),
    #[error("{0}: not UTF-8 text")]
    NotText(PathBuf),
    #[error("{0}: {1}")]
    Template(PathBuf, TemplateError),
    #[error("{0}: {1}")]
    Challenge(PathBuf, ChallengeError),
    #[error(transparent)]
    Dir(#[from] LoadDirError),
}

/// The challenge name used for progress records and prompts: the file
/// name without its extension.
pub fn challenge_name_for(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "challenge".into())
}

fn read(path: &Path) -> Result<Vec<u8>, LoadError> {
    fs::read(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// File contents as text, decrypting `TAC1` containers with `key`.
pub fn read_challenge_text(path: &Path, key: &ChallengeKey) -> Result<String, LoadError> {
    let mut bytes = read(path)?;
    if is_encrypted(&bytes) {
        bytes = decrypt_challenge(&bytes, key).map_err(|e| LoadError::Crypto(path.to_path_buf(), e))?;
    }
    String::from_utf8(bytes).map_err(|_| LoadError::NotText(path.to_path_buf()))
}

/// Expands `path` as a template when a variables file is given.
pub fn challenge_source(path: &Path, vars: Option<&Path>, key: &ChallengeKey) -> Result<String, LoadError> {
    let text = read_challenge_text(path, key)?;
    let Some(vars_path) = vars else { return Ok(text) };
    let vars_text = String::from_utf8(read(vars_path)?).map_err(|_| LoadError::NotText(vars_path.to_path_buf()))?;
    let vars = TemplateVariables::from_yaml(&vars_text).map_err(|e| LoadError::Template(vars_path.to_path_buf(), e))?;
    expand_template(&text, &vars).map_err(|e| LoadError::Template(path.to_path_buf(), e))
}

/// Loads and validates a challenge with the key built into this binary.
pub fn load_challenge(path: &Path, vars: Option<&Path>) -> Result<ChallengeSpec, LoadError> {
    load_challenge_with(path, vars, &ChallengeKey::embedded())
}

pub fn load_challenge_with(path: &Path, vars: Option<&Path>, key: &ChallengeKey) -> Result<ChallengeSpec, LoadError> {
    let name = challenge_name_for(path);
    if path.is_dir() {
        return Ok(load_level_dir(&name, path)?);
    }
    let source = challenge_source(path, vars, key)?;
    parse_challenge(&name, &source).map_err(|e| LoadError::Challenge(path.to_path_buf(), e))
}

/// Like [`load_challenge`] but leaves the successor graph unchecked so all
/// findings can be reported together.
pub fn load_challenge_unchecked(path: &Path, vars: Option<&Path>) -> Result<ChallengeSpec, LoadError> {
    let name = challenge_name_for(path);
    if path.is_dir() {
        return Ok(load_level_dir(&name, path)?);
    }
    let source = challenge_source(path, vars, &ChallengeKey::embedded())?;
    parse_challenge_unchecked(&name, &source).map_err(|e| LoadError::Challenge(path.to_path_buf(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::security::encrypt_challenge;

    #[test]
    fn plain_encrypted_and_template_forms_agree() {
        let dir = tempfile::tempdir().unwrap();
        let plain = dir.path().join("sample.gta");
        fs::write(&plain, include_str!("../assets/sample_challenge.gta")).unwrap();
        let key = ChallengeKey::new(&[9; 24]).unwrap();
        let enc = dir.path().join("sample.tac");
        fs::write(&enc, encrypt_challenge(&fs::read(&plain).unwrap(), &key)).unwrap();

        let a = load_challenge_with(&plain, None, &key).unwrap();
        let b = load_challenge_with(&enc, None, &key).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.challenge_name(), "sample");

        let wrong = ChallengeKey::new(&[8; 24]).unwrap();
        assert!(matches!(load_challenge_with(&enc, None, &wrong), Err(LoadError::Crypto(..))));

        let tpl = dir.path().join("t.tpl");
        fs::write(&tpl, include_str!("../assets/sample_challenge_template.tpl")).unwrap();
        let vars = dir.path().join("vars.yaml");
        fs::write(&vars, include_str!("../assets/template_variables.yaml")).unwrap();
        let t = load_challenge_with(&tpl, Some(&vars), &key).unwrap();
        assert_eq!(t.levels().len(), 5);
    }
}
