//! Dataset manifests: one [`MixtureRecipe`] per line.
//!
//! ```text
//! #! version=1 bank=synth bank_seed=7 n_speech=64 n_noise=32 experiment=simple
//! speech=3 noise=1 speech_start=0 speech_len=12000 offset=4000 snr=-5,0,5 perm=2,0,1 shuffle=991 scene=- diffuse=-
//! ```
//!
//! The `#!` line carries the dataset header as `key=value` pairs; other lines
//! starting with `#` are comments. Recipe lines always list the same keys in
//! the same order; `-` marks an absent optional. Reals are written in Rust's
//! shortest round-trip form, so parsing and re-serialising is lossless.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

use super::MixtureRecipe;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub header: BTreeMap<String, String>,
    pub recipes: Vec<MixtureRecipe>,
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn opt(v: Option<u64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

pub fn recipe_line(r: &MixtureRecipe) -> String {
    format!(
        "speech={} noise={} speech_start={} speech_len={} offset={} snr={} perm={} shuffle={} scene={} diffuse={}",
        r.speech_clip,
        r.noise_clip,
        r.speech_start,
        r.speech_len,
        r.offset,
        join(&r.snr_db),
        join(&r.permutation),
        opt(r.shuffle_seed),
        opt(r.scene),
        opt(r.diffuse_seed),
    )
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str, line: usize) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Parse(format!("line {line}: `{key}` has malformed value `{v}`")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str, line: usize) -> Result<Vec<T>> {
    v.split(',').map(|x| parse_num(key, x, line)).collect()
}

fn parse_opt(key: &str, v: &str, line: usize) -> Result<Option<u64>> {
    if v == "-" {
        Ok(None)
    } else {
        parse_num(key, v, line).map(Some)
    }
}

const RECIPE_KEYS: [&str; 10] = [
    "speech",
    "noise",
    "speech_start",
    "speech_len",
    "offset",
    "snr",
    "perm",
    "shuffle",
    "scene",
    "diffuse",
];

pub fn parse_recipe_line(text: &str, line: usize) -> Result<MixtureRecipe> {
    let mut fields = BTreeMap::new();
    for tok in text.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {line}: `{tok}` is not key=value")))?;
        if !RECIPE_KEYS.contains(&k) {
            return Err(Error::Parse(format!("line {line}: unknown key `{k}`")));
        }
        if fields.insert(k, v).is_some() {
            return Err(Error::Parse(format!("line {line}: duplicate key `{k}`")));
        }
    }
    let get = |k: &str| {
        fields
            .get(k)
            .copied()
            .ok_or_else(|| Error::Parse(format!("line {line}: missing key `{k}`")))
    };
    let recipe = MixtureRecipe {
        speech_clip: parse_num("speech", get("speech")?, line)?,
        noise_clip: parse_num("noise", get("noise")?, line)?,
        speech_start: parse_num("speech_start", get("speech_start")?, line)?,
        speech_len: parse_num("speech_len", get("speech_len")?, line)?,
        offset: parse_num("offset", get("offset")?, line)?,
        snr_db: parse_list("snr", get("snr")?, line)?,
        permutation: parse_list("perm", get("perm")?, line)?,
        shuffle_seed: parse_opt("shuffle", get("shuffle")?, line)?,
        scene: parse_opt("scene", get("scene")?, line)?,
        diffuse_seed: parse_opt("diffuse", get("diffuse")?, line)?,
    };
    if recipe.snr_db.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parse(format!("line {line}: non-finite SNR")));
    }
    super::check_permutation(&recipe.permutation, recipe.snr_db.len())
        .map_err(|e| Error::Parse(format!("line {line}: {e}")))?;
    Ok(recipe)
}

impl Manifest {
    pub fn new(header: BTreeMap<String, String>) -> Self {
        Self {
            header,
            recipes: Vec::new(),
        }
    }

    pub fn header_value(&self, key: &str) -> Result<&str> {
        self.header
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Parse(format!("manifest header lacks `{key}`")))
    }

    pub fn header_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.header_value(key)?;
        v.parse()
            .map_err(|_| Error::Parse(format!("manifest header `{key}` = `{v}` is malformed")))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("#! version=");
        out.push_str(&MANIFEST_VERSION.to_string());
        for (k, v) in &self.header {
            if k != "version" {
                let _ = write!(out, " {k}={v}");
            }
        }
        out.push('\n');
        for r in &self.recipes {
            out.push_str(&recipe_line(r));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut header = None;
        let mut recipes = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let raw = raw.trim();
            if let Some(h) = raw.strip_prefix("#!") {
                if header.is_some() {
                    return Err(Error::Parse(format!("line {line}: second header line")));
                }
                let mut map = BTreeMap::new();
                for tok in h.split_whitespace() {
                    let (k, v) = tok.split_once('=').ok_or_else(|| {
                        Error::Parse(format!("line {line}: `{tok}` is not key=value"))
                    })?;
                    map.insert(k.to_string(), v.to_string());
                }
                header = Some(map);
            } else if raw.is_empty() || raw.starts_with('#') {
                continue;
            } else {
                recipes.push(parse_recipe_line(raw, line)?);
            }
        }
        let header = header.ok_or_else(|| Error::Parse("manifest has no `#!` header line".into()))?;
        let m = Manifest { header, recipes };
        let version: u32 = m.header_parse("version")?;
        if version != MANIFEST_VERSION {
            return Err(Error::Parse(format!("unsupported manifest version {version}")));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn recipe_strategy() -> impl Strategy<Value = MixtureRecipe> {
        (1usize..6, any::<u64>(), prop::option::of(any::<u64>()), prop::option::of(0u64..1000))
            .prop_flat_map(|(k, s, shuffle, scene)| {
                (
                    prop::collection::vec(-40.0f64..20.0, k),
                    Just((0..k).collect::<Vec<usize>>()).prop_shuffle(),
                    0usize..32_000,
                    Just((s, shuffle, scene)),
                )
            })
            .prop_map(|(snr, perm, len, (s, shuffle, scene))| MixtureRecipe {
                speech_clip: (s % 50) as usize,
                noise_clip: (s % 7) as usize,
                speech_start: 0,
                speech_len: len,
                offset: 32_000 - len,
                snr_db: snr,
                permutation: perm,
                shuffle_seed: shuffle,
                scene,
                diffuse_seed: scene.map(|x| x * 3),
            })
    }

    proptest! {
        #[test]
        fn text_round_trip(recipes in prop::collection::vec(recipe_strategy(), 0..6)) {
            let mut header = BTreeMap::new();
            header.insert("bank".to_string(), "synth".to_string());
            header.insert("bank_seed".to_string(), "7".to_string());
            let m = Manifest { header, recipes };
            let text = m.to_text();
            let back = Manifest::parse(&text).unwrap();
            prop_assert_eq!(&back.recipes, &m.recipes);
            prop_assert_eq!(back.to_text(), text);
        }
    }

    #[test]
    fn rejects_unknown_keys_and_bad_permutations() {
        let text = "#! version=1\nspeech=0 noise=0 speech_start=0 speech_len=0 offset=0 snr=0 perm=0 shuffle=- scene=- diffuse=- colour=red\n";
        let err = Manifest::parse(text).unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("colour"), "{err}");
        let text = "#! version=1\nspeech=0 noise=0 speech_start=0 speech_len=0 offset=0 snr=0,1 perm=0,0 shuffle=- scene=- diffuse=-\n";
        assert!(Manifest::parse(text).is_err());
        assert!(Manifest::parse("speech=0\n").is_err());
        assert!(Manifest::parse("#! version=2\n").is_err());
    }
}
