use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use choquard::groundstate::fmt12;
use serde_json::Value;

/// `run_<timestamp>/` with a `fields/` subdirectory.
pub struct RunDir {
    path: PathBuf,
}

impl RunDir {
    pub fn create(base: &Path) -> io::Result<Self> {
        fs::create_dir_all(base)?;
        let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string();
        let mut path = base.join(format!("run_{stamp}"));
        let mut k = 1;
        while path.exists() {
            path = base.join(format!("run_{stamp}_{k}"));
            k += 1;
        }
        fs::create_dir_all(path.join("fields"))?;
        Ok(RunDir { path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn fields(&self) -> PathBuf {
        self.path.join("fields")
    }
}

/// Rounds every float in a JSON value to twelve significant digits.
pub fn round12(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or(f64::NAN);
            fmt12(x).parse::<f64>().ok().and_then(serde_json::Number::from_f64).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round12).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round12(v))).collect()),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn rounding_keeps_integers_and_trims_floats() {
        let v = round12(json!({"a": 1, "b": [0.1234567890123456, 2.0], "c": "x"}));
        assert_eq!(v, json!({"a": 1, "b": [0.123456789012, 2.0], "c": "x"}));
    }
}
