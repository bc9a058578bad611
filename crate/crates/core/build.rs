use std::env;
use std::fs;
use std::path::PathBuf;

// Development defaults. Course builds point TA_BUILD_CONFIG at their own file.
const DEFAULT_SALTS: [&str; 3] = ["ta-dev-salt-one", "ta-dev-salt-two", "ta-dev-salt-three"];
const DEFAULT_KEY_HEX: &str = "7465726d616476656e747572652d6b31";

fn main() {
    println!("cargo:rerun-if-env-changed=TA_BUILD_CONFIG");
    let manifest_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").unwrap());
    let config_path = env::var_os("TA_BUILD_CONFIG")
        .map(PathBuf::from)
        .unwrap_or_else(|| manifest_dir.join("ta-build.toml"));
    println!("cargo:rerun-if-changed={}", config_path.display());

    let mut salts: Vec<String> = DEFAULT_SALTS.iter().map(|s| s.to_string()).collect();
    let mut key_hex = DEFAULT_KEY_HEX.to_string();

    if config_path.exists() {
        let text = fs::read_to_string(&config_path).expect("read build config");
        let value: toml::Table = text.parse().expect("build config is not valid TOML");
        for (i, name) in ["salt1", "salt2", "salt3"].iter().enumerate() {
            if let Some(s) = value.get(*name).and_then(|v| v.as_str()) {
                salts[i] = s.to_string();
            }
        }
        if let Some(k) = value.get("key_hex").and_then(|v| v.as_str()) {
            key_hex = k.to_string();
        }
    }

    for s in &salts {
        assert!(!s.is_empty(), "salts must be non-empty");
    }
    assert!(
        salts[0] != salts[1] && salts[1] != salts[2] && salts[0] != salts[2],
        "salts must be pairwise distinct"
    );
    let key = decode_hex(&key_hex);
    assert!(
        matches!(key.len(), 16 | 24 | 32),
        "challenge key must be 16, 24 or 32 bytes, got {}",
        key.len()
    );

    let out = PathBuf::from(env::var("OUT_DIR").unwrap()).join("embedded.rs");
    let code = format!(
        "pub const SALT1: &[u8] = &{:?};\npub const SALT2: &[u8] = &{:?};\npub const SALT3: &[u8] = &{:?};\npub const CHALLENGE_KEY: &[u8] = &{:?};\n",
        salts[0].as_bytes(),
        salts[1].as_bytes(),
        salts[2].as_bytes(),
        key
    );
    fs::write(out, code).unwrap();
}

fn decode_hex(s: &str) -> Vec<u8> {
    let s = s.trim();
    assert!(s.len() % 2 == 0, "key_hex must have an even number of digits");
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&s[i..i + 2], 16).expect("key_hex must be hexadecimal"))
        .collect()
}
