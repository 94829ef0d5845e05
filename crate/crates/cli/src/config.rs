//! Layered configuration: command-line flags override a JSON file, which
//! overrides the built-in defaults. Everything is merged as JSON values and
//! deserialized once, so unknown keys and ill-typed values fail the same way
//! whichever layer they came from.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

/// One flag override: a dotted path into the config and its value.
pub struct Override {
    path: &'static str,
    value: Value,
}

#[derive(Default)]
pub struct Overrides(Vec<Override>);

impl Overrides {
    pub fn set(&mut self, path: &'static str, value: Option<impl Serialize>) {
        if let Some(v) = value {
            self.0.push(Override {
                path,
                value: serde_json::to_value(v).expect("flag values serialize"),
            });
        }
    }
}

fn lookup<'a>(root: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(root, |node, key| node.get(key))
}

fn assign(root: &mut Value, path: &str, value: Value) {
    let mut node = root;
    let mut keys = path.split('.').peekable();
    while let Some(key) = keys.next() {
        if !node.is_object() {
            *node = Value::Object(Map::new());
        }
        let map = node.as_object_mut().expect("just made an object");
        if keys.peek().is_none() {
            map.insert(key.to_string(), value);
            return;
        }
        node = map.entry(key).or_insert_with(|| Value::Object(Map::new()));
    }
}

fn merge(base: &mut Value, layer: Value) {
    match (base, layer) {
        (Value::Object(b), Value::Object(l)) => {
            for (k, v) in l {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, l) => *b = l,
    }
}

/// `DUA_SEED`, if set. A malformed value is a configuration error rather
/// than silently ignored.
pub fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var("DUA_SEED") {
        Ok(s) => {
            s.trim().parse().map(Some).map_err(|_| {
                CliError::config(format!("DUA_SEED={s:?} is not a nonnegative integer"))
            })
        }
        Err(_) => Ok(None),
    }
}

/// Resolves `T` from its defaults, an optional JSON file, and flags.
/// `seed_fallback` is applied at its path when neither the file nor a flag
/// sets it.
pub fn resolve<T>(
    file: Option<&Path>,
    flags: Overrides,
    seed_fallback: Option<(&'static str, Value)>,
) -> Result<T, CliError>
where
    T: Serialize + DeserializeOwned + Default,
{
    let mut value = serde_json::to_value(T::default()).expect("defaults serialize");
    let mut from_file = Value::Object(Map::new());
    if let Some(path) = file {
        let text = fs::read_to_string(path).map_err(|e| {
            CliError::config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        from_file = serde_json::from_str(&text).map_err(|e| {
            CliError::config(format!(
                "config file {} is not valid JSON: {e}",
                path.display()
            ))
        })?;
        if !from_file.is_object() {
            return Err(CliError::config(format!(
                "config file {} must hold a JSON object",
                path.display()
            )));
        }
        merge(&mut value, from_file.clone());
    }
    if let Some((path, seed)) = seed_fallback {
        let flagged = flags.0.iter().any(|o| o.path == path);
        if lookup(&from_file, path).is_none() && !flagged {
            assign(&mut value, path, seed);
        }
    }
    for o in flags.0 {
        assign(&mut value, o.path, o.value);
    }
    let origin = file.map_or_else(|| "flags".to_string(), |p| p.display().to_string());
    serde_json::from_value(value).map_err(|e| CliError::config(format!("{origin}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use dua_core::trainer::TrainConfig;
    use serde::Deserialize;

    #[derive(Default, Serialize, Deserialize, Debug, PartialEq)]
    #[serde(default, deny_unknown_fields)]
    struct Run {
        train: TrainConfig,
        normalize: bool,
    }

    fn write(text: &str) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        fs::write(f.path(), text).unwrap();
        f
    }

    #[test]
    fn flags_beat_file_beats_defaults() {
        let f = write(r#"{"train": {"epochs": 7, "lr": 0.5}}"#);
        let mut flags = Overrides::default();
        flags.set("train.lr", Some(0.25));
        let run: Run = resolve(Some(f.path()), flags, None).unwrap();
        assert_eq!(run.train.epochs, 7);
        assert_eq!(run.train.lr, 0.25);
        assert_eq!(run.train.latent_dim, TrainConfig::default().latent_dim);
    }

    #[test]
    fn seed_fallback_only_fills_gaps() {
        let fallback = || Some(("train.seed", Value::from(42u64)));
        let run: Run = resolve(None, Overrides::default(), fallback()).unwrap();
        assert_eq!(run.train.seed, 42);
        let f = write(r#"{"train": {"seed": 3}}"#);
        let run: Run = resolve(Some(f.path()), Overrides::default(), fallback()).unwrap();
        assert_eq!(run.train.seed, 3);
        let mut flags = Overrides::default();
        flags.set("train.seed", Some(9u64));
        let run: Run = resolve(None, flags, fallback()).unwrap();
        assert_eq!(run.train.seed, 9);
    }

    #[test]
    fn unknown_keys_and_missing_files_are_config_errors() {
        let f = write(r#"{"train": {"epoch": 7}}"#);
        let e = resolve::<Run>(Some(f.path()), Overrides::default(), None).unwrap_err();
        assert_eq!(e.code, 1);
        assert!(e.message.contains("epoch"), "{}", e.message);
        let e = resolve::<Run>(
            Some(Path::new("/nonexistent/cfg.json")),
            Overrides::default(),
            None,
        )
        .unwrap_err();
        assert_eq!(e.code, 1);
        assert!(e.message.contains("/nonexistent/cfg.json"));
    }

    #[test]
    fn bad_flag_values_are_config_errors() {
        let mut flags = Overrides::default();
        flags.set("train.objective", Some("bayes"));
        assert_eq!(resolve::<Run>(None, flags, None).unwrap_err().code, 1);
    }
}
