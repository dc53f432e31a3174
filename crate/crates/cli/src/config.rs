use std::path::{Path, PathBuf};

use avse_ci::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

/// Environment variable naming the root that relative output paths resolve against.
pub const OUT_ROOT_ENV: &str = "AVSE_CI_OUT";

pub fn out_path(p: &Path) -> PathBuf {
    match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) if p.is_relative() => PathBuf::from(root).join(p),
        _ => p.to_path_buf(),
    }
}

pub fn load_config_file(path: &Path) -> Result<Value> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let v: Value = serde_json::from_slice(&bytes).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if !v.is_object() {
        return Err(Error::Config(format!("{}: config must be a JSON object", path.display())));
    }
    Ok(v)
}

fn overlay(base: &mut Value, over: &Value, at: &str) -> Result<()> {
    let (Value::Object(b), Value::Object(o)) = (&mut *base, over) else {
        *base = over.clone();
        return Ok(());
    };
    for (k, v) in o {
        let path = if at.is_empty() { k.clone() } else { format!("{at}.{k}") };
        match b.get_mut(k) {
            Some(slot) if slot.is_object() && v.is_object() => overlay(slot, v, &path)?,
            Some(slot) => *slot = v.clone(),
            None => return Err(Error::Config(format!("unknown config key `{path}`"))),
        }
    }
    Ok(())
}

/// `T::default()` with the keys of `file` laid over it. Unknown keys are an error.
pub fn resolve<T: Default + Serialize + DeserializeOwned>(file: Option<&Value>) -> Result<T> {
    let mut v = serde_json::to_value(T::default())?;
    if let Some(f) = file {
        overlay(&mut v, f, "")?;
    }
    serde_json::from_value(v).map_err(|e| Error::Config(format!("config: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Default, PartialEq, Serialize, Deserialize)]
    struct Inner {
        a: u32,
        b: f64,
    }

    #[derive(Debug, Default, PartialEq, Serialize, Deserialize)]
    struct Outer {
        inner: Inner,
        name: String,
    }

    #[test]
    fn overlays_nested_keys() {
        let file = serde_json::json!({"inner": {"b": 2.5}});
        let o: Outer = resolve(Some(&file)).unwrap();
        assert_eq!(o, Outer { inner: Inner { a: 0, b: 2.5 }, name: String::new() });
        assert_eq!(resolve::<Outer>(None).unwrap(), Outer::default());
    }

    #[test]
    fn rejects_unknown_and_mistyped_keys() {
        assert!(matches!(resolve::<Outer>(Some(&serde_json::json!({"inner": {"c": 1}}))), Err(Error::Config(_))));
        assert!(matches!(resolve::<Outer>(Some(&serde_json::json!({"name": 3}))), Err(Error::Config(_))));
    }
}
