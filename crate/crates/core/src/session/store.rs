use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::Mutex;

use crate::direction::{DirectionRecord, DirectionVector, FilterLayout};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const INDEX: &str = "index.json";

/// Named directions on disk, one JSON record per file, listed in save order.
#[derive(Debug)]
pub struct DirectionStore {
    dir: PathBuf,
    order: Mutex<Vec<String>>,
}

fn check_name(name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && name.len() <= 128
        && !name.starts_with('.')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "direction name `{name}` must be 1-128 characters of [A-Za-z0-9._-] and not start with a dot"
        )))
    }
}

impl DirectionStore {
    /// Opens or creates a store rooted at `dir`.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let index = dir.join(INDEX);
        let order = if index.exists() {
            serde_json::from_str(&fs::read_to_string(&index)?)
                .map_err(|e| Error::load(INDEX, e.to_string()))?
        } else {
            Vec::new()
        };
        Ok(Self {
            dir,
            order: Mutex::new(order),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{name}.json"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.order.lock().iter().any(|n| n == name)
    }

    /// Writes the record under its name. Existing names are never overwritten.
    pub fn save(&self, record: &DirectionRecord) -> Result<()> {
        check_name(&record.name)?;
        let mut order = self.order.lock();
        if order.iter().any(|n| n == &record.name) || self.path(&record.name).exists() {
            return Err(Error::Conflict(format!("a direction named `{}` already exists", record.name)));
        }
        record.write(&self.path(&record.name))?;
        order.push(record.name.clone());
        let tmp = self.dir.join(format!("{INDEX}.tmp"));
        fs::write(&tmp, serde_json::to_string(&*order)?)?;
        fs::rename(tmp, self.dir.join(INDEX))?;
        Ok(())
    }

    /// Names in save order.
    pub fn list(&self) -> Vec<String> {
        self.order.lock().clone()
    }

    pub fn records(&self) -> Result<Vec<DirectionRecord>> {
        self.list().iter().map(|n| self.get(n)).collect()
    }

    pub fn get(&self, name: &str) -> Result<DirectionRecord> {
        check_name(name)?;
        if !self.contains(name) {
            return Err(Error::NotFound(format!("no direction named `{name}`")));
        }
        DirectionRecord::read(&self.path(name))
    }

    /// Loads a direction for the given model, refusing other models and layouts.
    pub fn load<S: Scalar>(&self, name: &str, layout: &Arc<FilterLayout>, model_hash: &str) -> Result<DirectionVector<S>> {
        self.get(name)?.into_direction(layout, model_hash)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::direction::LayerSpec;

    fn direction(name: &str) -> DirectionVector<f64> {
        let layout = Arc::new(FilterLayout::new(vec![LayerSpec::new("l", 3, 1, 1)]).unwrap());
        DirectionVector::new(layout, vec![0.1, -0.2, 1.0 / 3.0], name).unwrap()
    }

    #[test]
    fn save_order_survives_reopen() {
        let tmp = tempfile::tempdir().unwrap();
        let store = DirectionStore::open(tmp.path()).unwrap();
        for n in ["b", "a"] {
            store.save(&DirectionRecord::from_direction(&direction(n), "h")).unwrap();
        }
        assert_eq!(store.list(), vec!["b", "a"]);
        let reopened = DirectionStore::open(tmp.path()).unwrap();
        assert_eq!(reopened.list(), vec!["b", "a"]);
        let d = direction("a");
        let back: DirectionVector<f64> = reopened.load("a", d.layout(), "h").unwrap();
        assert_eq!(back.values(), d.values());
    }

    #[test]
    fn duplicates_and_bad_names() {
        let tmp = tempfile::tempdir().unwrap();
        let store = DirectionStore::open(tmp.path()).unwrap();
        let rec = DirectionRecord::from_direction(&direction("x"), "h");
        store.save(&rec).unwrap();
        assert!(matches!(store.save(&rec), Err(Error::Conflict(_))));
        let mut bad = rec.clone();
        bad.name = "../escape".into();
        assert!(matches!(store.save(&bad), Err(Error::Argument(_))));
        assert!(matches!(store.get("missing"), Err(Error::NotFound(_))));
    }

    #[test]
    fn other_model_is_refused() {
        let tmp = tempfile::tempdir().unwrap();
        let store = DirectionStore::open(tmp.path()).unwrap();
        let d = direction("x");
        store.save(&DirectionRecord::from_direction(&d, "h1")).unwrap();
        let err = store.load::<f64>("x", d.layout(), "h2").unwrap_err();
        assert!(matches!(err, Error::Structural(_)));
    }
}
