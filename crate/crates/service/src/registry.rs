use std::collections::BTreeMap;
use std::sync::Arc;

use clickseg::predictors::{GeodesicPredictor, OracleFactory, PredictorFactory};

pub type SharedFactory = Arc<dyn PredictorFactory + Send + Sync>;

/// Predictors a session may bind to, by name. Sessions store only the name,
/// so entries can be replaced while sessions are live.
#[derive(Clone)]
pub struct PredictorRegistry {
    entries: BTreeMap<String, SharedFactory>,
    default: String,
}

impl PredictorRegistry {
    pub fn new(default: &str, factory: SharedFactory) -> Self {
        let mut entries = BTreeMap::new();
        entries.insert(default.to_string(), factory);
        Self {
            entries,
            default: default.to_string(),
        }
    }

    /// `geodesic` (default) and `oracle`, which predicts the session's ground
    /// truth when one was uploaded.
    pub fn standard() -> Self {
        let mut reg = Self::new("geodesic", Arc::new(GeodesicPredictor::default()));
        reg.insert("oracle", Arc::new(OracleFactory));
        reg
    }

    pub fn insert(&mut self, name: &str, factory: SharedFactory) {
        self.entries.insert(name.to_string(), factory);
    }

    pub fn set_default(&mut self, name: &str) -> bool {
        if self.entries.contains_key(name) {
            self.default = name.to_string();
            true
        } else {
            false
        }
    }

    pub fn default_name(&self) -> &str {
        &self.default
    }

    pub fn get(&self, name: &str) -> Option<SharedFactory> {
        self.entries.get(name).cloned()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}
