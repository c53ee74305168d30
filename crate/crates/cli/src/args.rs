//! Minimal flag parser: `--key value`, `--key=value`, repeatable flags,
//! and boolean switches. Unknown flags are hard errors so typos never
//! silently change a run.

#[derive(Debug, Default)]
pub struct Parsed {
    pub positional: Vec<String>,
    valued: Vec<(String, String)>,
    switches: Vec<String>,
}

pub fn parse(
    args: &[String],
    valued_keys: &[&str],
    switch_keys: &[&str],
) -> Result<Parsed, String> {
    let mut out = Parsed::default();
    let mut it = args.iter().peekable();
    while let Some(arg) = it.next() {
        if let Some(stripped) = arg.strip_prefix("--") {
            let (key, inline) = match stripped.split_once('=') {
                Some((k, v)) => (k.to_string(), Some(v.to_string())),
                None => (stripped.to_string(), None),
            };
            if switch_keys.contains(&key.as_str()) {
                if inline.is_some() {
                    return Err(format!("flag --{} takes no value", key));
                }
                out.switches.push(key);
            } else if valued_keys.contains(&key.as_str()) {
                let value = match inline {
                    Some(v) => v,
                    None => it
                        .next()
                        .ok_or_else(|| format!("flag --{} needs a value", key))?
                        .clone(),
                };
                out.valued.push((key, value));
            } else {
                return Err(format!("unknown flag --{}", key));
            }
        } else {
            out.positional.push(arg.clone());
        }
    }
    Ok(out)
}

impl Parsed {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.valued
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_all(&self, key: &str) -> Vec<&str> {
        self.valued
            .iter()
            .filter(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .collect()
    }

    pub fn has(&self, key: &str) -> bool {
        self.switches.iter().any(|s| s == key)
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>, String> {
        self.get(key)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| format!("flag --{} expects a number, got `{}`", key, v))
            })
            .transpose()
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>, String> {
        self.get(key)
            .map(|v| {
                v.parse::<usize>()
                    .map_err(|_| format!("flag --{} expects an integer, got `{}`", key, v))
            })
            .transpose()
    }

    /// Parse `X,Y,Z` triples.
    pub fn get_point(&self, key: &str) -> Result<Option<[f64; 3]>, String> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => {
                let parts: Vec<&str> = v.split(',').collect();
                if parts.len() != 3 {
                    return Err(format!("flag --{} expects X,Y,Z, got `{}`", key, v));
                }
                let mut p = [0.0; 3];
                for (d, part) in parts.iter().enumerate() {
                    p[d] = part
                        .trim()
                        .parse::<f64>()
                        .map_err(|_| format!("flag --{}: bad coordinate `{}`", key, part))?;
                }
                Ok(Some(p))
            }
        }
    }
}
