//! Flat `key = value` run configuration.
//!
//! Values are resolved from, in increasing precedence: the command's
//! defaults, a config file (`key = value` lines or a flat JSON object),
//! the `SQT_SEED` environment variable (seed only), and `--key value`
//! arguments. Every value remembers where it came from so that errors can
//! point at a file line or an argument.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

/// Where a value was set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Source {
    /// Built-in default.
    Default,
    /// A config file; `line` is 0 for JSON files.
    File {
        /// Path as given.
        path: String,
        /// 1-based line.
        line: usize,
    },
    /// An environment variable.
    Env(&'static str),
    /// A command-line argument.
    Cli,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Default => write!(f, "default"),
            Source::File { path, line: 0 } => write!(f, "{path}"),
            Source::File { path, line } => write!(f, "{path}:{line}"),
            Source::Env(var) => write!(f, "${var}"),
            Source::Cli => write!(f, "command line"),
        }
    }
}

/// A bad or unknown configuration value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    /// Where the offending value came from.
    pub source: Source,
    /// Offending key, if any.
    pub key: String,
    /// What is wrong.
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.key.is_empty() {
            write!(f, "{}: {}", self.source, self.message)
        } else {
            write!(f, "{}: `{}`: {}", self.source, self.key, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

/// One key a command understands.
#[derive(Clone, Copy, Debug)]
pub struct Key {
    /// Name with underscores.
    pub name: &'static str,
    /// Default value; `""` means unset.
    pub default: &'static str,
    /// Whether the value affects results (and so belongs in output headers).
    pub recorded: bool,
    /// One-line description.
    pub help: &'static str,
}

impl Key {
    /// A key that affects results.
    pub const fn new(name: &'static str, default: &'static str, help: &'static str) -> Self {
        Key {
            name,
            default,
            recorded: true,
            help,
        }
    }

    /// A key that only affects where or how fast output is produced.
    pub const fn unrecorded(name: &'static str, default: &'static str, help: &'static str) -> Self {
        Key {
            name,
            default,
            recorded: false,
            help,
        }
    }
}

#[derive(Clone, Debug)]
struct Entry {
    value: String,
    source: Source,
}

/// Resolved configuration of one command.
#[derive(Clone, Debug)]
pub struct Config {
    schema: Vec<Key>,
    entries: BTreeMap<String, Entry>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

/// Raw `(key, value, source)` triples from a config file.
pub fn read_file(path: &Path) -> Result<Vec<(String, String, Source)>, ConfigError> {
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        source: Source::File {
            path: shown.clone(),
            line: 0,
        },
        key: String::new(),
        message: format!("cannot read: {e}"),
    })?;
    let is_json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
    if is_json {
        parse_json(&text, &shown)
    } else {
        parse_key_value(&text, &shown)
    }
}

/// Parse `key = value` lines; `#` starts a comment.
pub fn parse_key_value(text: &str, path: &str) -> Result<Vec<(String, String, Source)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let source = Source::File {
            path: path.to_string(),
            line: i + 1,
        };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError {
                source,
                key: String::new(),
                message: format!("expected `key = value`, found `{line}`"),
            });
        };
        let key = normalize(k);
        if key.is_empty() {
            return Err(ConfigError {
                source,
                key,
                message: "empty key".into(),
            });
        }
        out.push((key, v.trim().to_string(), source));
    }
    Ok(out)
}

/// Parse a flat JSON object. Arrays become comma-separated lists.
pub fn parse_json(text: &str, path: &str) -> Result<Vec<(String, String, Source)>, ConfigError> {
    let source = Source::File {
        path: path.to_string(),
        line: 0,
    };
    let err = |key: &str, message: String| ConfigError {
        source: source.clone(),
        key: key.to_string(),
        message,
    };
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| err("", format!("invalid JSON: {e}")))?;
    let serde_json::Value::Object(map) = value else {
        return Err(err("", "expected a JSON object".into()));
    };
    let scalar = |key: &str, v: &serde_json::Value| -> Result<String, ConfigError> {
        match v {
            serde_json::Value::String(s) => Ok(s.clone()),
            serde_json::Value::Number(n) => Ok(n.to_string()),
            serde_json::Value::Bool(b) => Ok(b.to_string()),
            serde_json::Value::Null => Ok(String::new()),
            _ => Err(err(key, "nested values are not supported".into())),
        }
    };
    let mut out = Vec::new();
    for (k, v) in &map {
        let key = normalize(k);
        let text = match v {
            serde_json::Value::Array(items) => items
                .iter()
                .map(|x| scalar(&key, x))
                .collect::<Result<Vec<_>, _>>()?
                .join(","),
            other => scalar(&key, other)?,
        };
        out.push((key, text, source.clone()));
    }
    Ok(out)
}

/// Parse `--key value` / `--key=value` arguments. A single leading bare
/// word is returned as the positional argument.
pub fn parse_overrides(args: &[String]) -> Result<(Option<String>, Vec<(String, String)>), ConfigError> {
    let err = |message: String| ConfigError {
        source: Source::Cli,
        key: String::new(),
        message,
    };
    let mut positional = None;
    let mut out = Vec::new();
    let mut i = 0;
    while i < args.len() {
        let a = &args[i];
        let Some(body) = a.strip_prefix("--") else {
            if i == 0 {
                positional = Some(a.clone());
                i += 1;
                continue;
            }
            return Err(err(format!("unexpected argument `{a}`; options look like `--key value`")));
        };
        if let Some((k, v)) = body.split_once('=') {
            out.push((normalize(k), v.to_string()));
            i += 1;
        } else {
            let Some(v) = args.get(i + 1) else {
                return Err(err(format!("`{a}` needs a value")));
            };
            out.push((normalize(body), v.clone()));
            i += 2;
        }
    }
    Ok((positional, out))
}

impl Config {
    /// Resolve `schema` from file entries, the seed environment variable and
    /// command-line overrides. Unknown and repeated keys are errors.
    pub fn resolve(
        schema: &[Key],
        file: &[(String, String, Source)],
        env_seed: Option<String>,
        cli: &[(String, String)],
    ) -> Result<Config, ConfigError> {
        let mut entries = BTreeMap::new();
        for k in schema {
            if !k.default.is_empty() {
                entries.insert(
                    k.name.to_string(),
                    Entry {
                        value: k.default.to_string(),
                        source: Source::Default,
                    },
                );
            }
        }
        let known = |key: &str, source: &Source| -> Result<(), ConfigError> {
            if schema.iter().any(|k| k.name == key) {
                Ok(())
            } else {
                Err(ConfigError {
                    source: source.clone(),
                    key: key.to_string(),
                    message: "unknown key for this command".into(),
                })
            }
        };
        let mut seen = BTreeMap::new();
        for (key, value, source) in file {
            known(key, source)?;
            if let Some(prev) = seen.insert(key.clone(), source.clone()) {
                return Err(ConfigError {
                    source: source.clone(),
                    key: key.clone(),
                    message: format!("already set at {prev}"),
                });
            }
            entries.insert(
                key.clone(),
                Entry {
                    value: value.clone(),
                    source: source.clone(),
                },
            );
        }
        if let Some(seed) = env_seed {
            if schema.iter().any(|k| k.name == "seed") {
                entries.insert(
                    "seed".into(),
                    Entry {
                        value: seed.trim().to_string(),
                        source: Source::Env("SQT_SEED"),
                    },
                );
            }
        }
        let mut seen_cli = BTreeMap::new();
        for (key, value) in cli {
            known(key, &Source::Cli)?;
            if seen_cli.insert(key.clone(), ()).is_some() {
                return Err(ConfigError {
                    source: Source::Cli,
                    key: key.clone(),
                    message: "given more than once".into(),
                });
            }
            entries.insert(
                key.clone(),
                Entry {
                    value: value.clone(),
                    source: Source::Cli,
                },
            );
        }
        Ok(Config {
            schema: schema.to_vec(),
            entries,
        })
    }

    /// Defaults only.
    pub fn defaults(schema: &[Key]) -> Config {
        Config::resolve(schema, &[], None, &[]).expect("defaults only use known keys")
    }

    /// Set a value programmatically (as if from the command line).
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), ConfigError> {
        if !self.schema.iter().any(|k| k.name == key) {
            return Err(ConfigError {
                source: Source::Cli,
                key: key.into(),
                message: "unknown key for this command".into(),
            });
        }
        self.entries.insert(
            key.into(),
            Entry {
                value: value.into(),
                source: Source::Cli,
            },
        );
        Ok(())
    }

    /// An error about `key`, located where the key was set.
    pub fn error(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            source: self
                .entries
                .get(key)
                .map(|e| e.source.clone())
                .unwrap_or(Source::Default),
            key: key.to_string(),
            message: message.into(),
        }
    }

    /// Whether `key` belongs to this command.
    pub fn has(&self, key: &str) -> bool {
        self.schema.iter().any(|k| k.name == key)
    }

    /// Raw value, if set.
    pub fn raw(&self, key: &str) -> Option<&str> {
        assert!(self.schema.iter().any(|k| k.name == key), "`{key}` not in schema");
        self.entries.get(key).map(|e| e.value.as_str()).filter(|v| !v.is_empty())
    }

    /// Value that must be set.
    pub fn str(&self, key: &str) -> Result<&str, ConfigError> {
        self.raw(key).ok_or_else(|| self.error(key, "required"))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<T, ConfigError> {
        let v = self.str(key)?;
        v.parse().map_err(|_| self.error(key, format!("expected {what}, found `{v}`")))
    }

    /// A finite real.
    pub fn f64(&self, key: &str) -> Result<f64, ConfigError> {
        let x: f64 = self.parse(key, "a number")?;
        if !x.is_finite() {
            return Err(self.error(key, "must be finite"));
        }
        Ok(x)
    }

    /// A finite real, or `None` for `auto`.
    pub fn f64_or_auto(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.raw(key) {
            None | Some("auto") => Ok(None),
            Some(_) => self.f64(key).map(Some),
        }
    }

    /// A non-negative integer.
    pub fn usize(&self, key: &str) -> Result<usize, ConfigError> {
        self.parse(key, "a non-negative integer")
    }

    /// A 64-bit unsigned integer.
    pub fn u64(&self, key: &str) -> Result<u64, ConfigError> {
        self.parse(key, "a non-negative 64-bit integer")
    }

    /// `true`/`false` (also `yes`/`no`, `1`/`0`).
    pub fn bool(&self, key: &str) -> Result<bool, ConfigError> {
        match self.str(key)? {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            v => Err(self.error(key, format!("expected true or false, found `{v}`"))),
        }
    }

    /// One of `choices`.
    pub fn choice<'a>(&self, key: &str, choices: &[&'a str]) -> Result<&'a str, ConfigError> {
        let v = self.str(key)?;
        choices
            .iter()
            .copied()
            .find(|c| *c == v)
            .ok_or_else(|| self.error(key, format!("expected one of {}, found `{v}`", choices.join(", "))))
    }

    /// Comma-separated reals, or an inclusive range `start:stop:step`.
    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>, ConfigError> {
        let v = self.str(key)?;
        parse_f64_list(v).map_err(|m| self.error(key, m))
    }

    /// Comma-separated non-negative integers.
    pub fn usize_list(&self, key: &str) -> Result<Vec<usize>, ConfigError> {
        let v = self.str(key)?;
        v.split(',')
            .map(|x| x.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| self.error(key, format!("expected comma-separated integers, found `{v}`")))
    }

    /// Recorded keys with their resolved values, in schema order.
    pub fn recorded(&self) -> Vec<(String, String)> {
        self.schema
            .iter()
            .filter(|k| k.recorded)
            .map(|k| {
                let v = self.entries.get(k.name).map(|e| e.value.clone()).unwrap_or_default();
                (k.name.to_string(), v)
            })
            .collect()
    }
}

/// See [`Config::f64_list`].
pub fn parse_f64_list(v: &str) -> Result<Vec<f64>, String> {
    let bad = || format!("expected comma-separated numbers or start:stop:step, found `{v}`");
    let parts: Vec<&str> = v.split(':').collect();
    let out = if parts.len() == 3 {
        let n: Vec<f64> = parts
            .iter()
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad())?;
        let (start, stop, step) = (n[0], n[1], n[2]);
        if !(step > 0.0 && start.is_finite() && stop.is_finite() && stop >= start) {
            return Err(format!("range `{v}` needs step > 0 and stop >= start"));
        }
        // Points are start + k·step, so no rounding drift accumulates; the
        // stop point is kept when it lies on the grid up to roundoff.
        let count = ((stop - start) / step + 1e-9).floor() as usize;
        if count > 10_000_000 {
            return Err(format!("range `{v}` has too many points"));
        }
        (0..=count).map(|k| start + k as f64 * step).collect()
    } else if parts.len() == 1 {
        v.split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| bad())?
    } else {
        return Err(bad());
    };
    if out.iter().any(|x| !x.is_finite()) {
        return Err(format!("`{v}` contains a non-finite value"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCHEMA: &[Key] = &[
        Key::new("n_modes", "10", "modes"),
        Key::new("seed", "0", "seed"),
        Key::new("s", "1", "lengths"),
        Key::unrecorded("out", "-", "output"),
    ];

    #[test]
    fn precedence_is_default_file_env_cli() {
        let file = parse_key_value("n_modes = 4\nseed = 3 # comment\n", "a.cfg").unwrap();
        let c = Config::resolve(SCHEMA, &file, Some("9".into()), &[]).unwrap();
        assert_eq!(c.usize("n_modes").unwrap(), 4);
        assert_eq!(c.u64("seed").unwrap(), 9);
        let c = Config::resolve(SCHEMA, &file, Some("9".into()), &[("seed".into(), "11".into())]).unwrap();
        assert_eq!(c.u64("seed").unwrap(), 11);
    }

    #[test]
    fn errors_point_at_the_line() {
        let file = parse_key_value("\n\nn_modes = four\n", "a.cfg").unwrap();
        let c = Config::resolve(SCHEMA, &file, None, &[]).unwrap();
        let e = c.usize("n_modes").unwrap_err();
        assert_eq!(e.to_string(), "a.cfg:3: `n_modes`: expected a non-negative integer, found `four`");
        let e = parse_key_value("x\n", "b.cfg").unwrap_err();
        assert_eq!(e.source, Source::File { path: "b.cfg".into(), line: 1 });
    }

    #[test]
    fn unknown_and_duplicate_keys_are_rejected() {
        let file = parse_key_value("n_mode = 4\n", "a.cfg").unwrap();
        assert!(Config::resolve(SCHEMA, &file, None, &[]).is_err());
        let file = parse_key_value("seed = 1\nseed = 2\n", "a.cfg").unwrap();
        let e = Config::resolve(SCHEMA, &file, None, &[]).unwrap_err();
        assert!(e.message.contains("a.cfg:1"), "{e}");
    }

    #[test]
    fn json_and_text_agree() {
        let a = parse_json(r#"{"n_modes": 4, "s": [0.5, 1, 2]}"#, "a.json").unwrap();
        let b = parse_key_value("n_modes = 4\ns = 0.5,1,2\n", "a.cfg").unwrap();
        let ca = Config::resolve(SCHEMA, &a, None, &[]).unwrap();
        let cb = Config::resolve(SCHEMA, &b, None, &[]).unwrap();
        assert_eq!(ca.recorded(), cb.recorded());
        assert_eq!(ca.f64_list("s").unwrap(), vec![0.5, 1.0, 2.0]);
    }

    #[test]
    fn overrides_accept_both_spellings() {
        let args: Vec<String> = ["fast", "--n-modes", "3", "--seed=5"].iter().map(|s| s.to_string()).collect();
        let (pos, kv) = parse_overrides(&args).unwrap();
        assert_eq!(pos.as_deref(), Some("fast"));
        assert_eq!(kv, vec![("n_modes".into(), "3".into()), ("seed".into(), "5".into())]);
        assert!(parse_overrides(&["--seed".to_string()]).is_err());
    }

    #[test]
    fn ranges_are_inclusive_and_drift_free() {
        let r = parse_f64_list("0:3:0.5").unwrap();
        assert_eq!(r, vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0]);
        let r = parse_f64_list("0:1:0.1").unwrap();
        assert_eq!(r.len(), 11);
        assert_eq!(r[3], 3.0 * 0.1);
        assert!(parse_f64_list("1:0:0.1").is_err());
    }

    #[test]
    fn unrecorded_keys_stay_out_of_headers() {
        let c = Config::defaults(SCHEMA);
        assert!(c.recorded().iter().all(|(k, _)| k != "out"));
    }
}
