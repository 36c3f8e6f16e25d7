use std::any::{type_name, Any};
use std::collections::HashMap;
use std::sync::Arc;

use super::UvmError;

/// Exact-match configuration database keyed by `(context path, key)`.
///
/// Values are typed: a lookup names the type it expects and a stored value of
/// another type is an error, the same way a parameterized config database
/// would refuse it. Stored values must be `Send + Sync` so an endpoint handle
/// can be moved to whichever context ends up using it.
#[derive(Default)]
pub struct BindingRegistry {
    entries: HashMap<(String, String), Arc<dyn Any + Send + Sync>>,
    warnings: Vec<String>,
    sealed: bool,
}

impl BindingRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Binds `value` under `(path, key)`. Overwriting keeps the new value
    /// and records a warning.
    pub fn set<T: Any + Send + Sync>(
        &mut self,
        path: &str,
        key: &str,
        value: T,
    ) -> Result<(), UvmError> {
        if path.is_empty() || key.is_empty() {
            return Err(UvmError::Config(
                "registry path and key must be non-empty".into(),
            ));
        }
        if self.sealed {
            return Err(UvmError::Config(format!(
                "registry set of ({path}, {key}) after BUILD"
            )));
        }
        let k = (path.to_string(), key.to_string());
        if self.entries.insert(k, Arc::new(value)).is_some() {
            self.warnings.push(format!(
                "binding ({path}, {key}) overwritten; last write wins"
            ));
        }
        Ok(())
    }

    pub fn get<T: Any + Clone + Send + Sync>(&self, path: &str, key: &str) -> Result<T, UvmError> {
        if path.is_empty() || key.is_empty() {
            return Err(UvmError::Config(
                "registry path and key must be non-empty".into(),
            ));
        }
        let v = self
            .entries
            .get(&(path.to_string(), key.to_string()))
            .ok_or_else(|| UvmError::MissingBinding {
                path: path.to_string(),
                key: key.to_string(),
            })?;
        v.downcast_ref::<T>().cloned().ok_or_else(|| {
            UvmError::Config(format!(
                "binding ({path}, {key}) is not a {}",
                type_name::<T>()
            ))
        })
    }

    pub fn contains(&self, path: &str, key: &str) -> bool {
        self.entries
            .contains_key(&(path.to_string(), key.to_string()))
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Closes the registry to further `set`s. Called once BUILD completes.
    pub fn seal(&mut self) {
        self.sealed = true;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    struct Handle(u16);

    #[test]
    fn set_then_get() {
        let mut r = BindingRegistry::new();
        r.set("env.agent.driv", "driver_bfm_if", Handle(7)).unwrap();
        assert_eq!(
            r.get::<Handle>("env.agent.driv", "driver_bfm_if").unwrap(),
            Handle(7)
        );
    }

    #[test]
    fn missing_binding() {
        let r = BindingRegistry::new();
        assert!(matches!(
            r.get::<Handle>("env.agent.driv", "monitor_bfm_if"),
            Err(UvmError::MissingBinding { .. })
        ));
    }

    #[test]
    fn last_write_wins_with_warning() {
        let mut r = BindingRegistry::new();
        r.set("a", "k", Handle(1)).unwrap();
        r.set("a", "k", Handle(2)).unwrap();
        assert_eq!(r.get::<Handle>("a", "k").unwrap(), Handle(2));
        assert_eq!(r.warnings().len(), 1);
    }

    #[test]
    fn empty_path_rejected() {
        let mut r = BindingRegistry::new();
        assert!(matches!(
            r.set("", "k", Handle(1)),
            Err(UvmError::Config(_))
        ));
        assert!(matches!(r.get::<Handle>("", "k"), Err(UvmError::Config(_))));
    }

    #[test]
    fn exact_match_only() {
        let mut r = BindingRegistry::new();
        r.set("env.agent", "k", Handle(1)).unwrap();
        assert!(r.get::<Handle>("env.agent.driv", "k").is_err());
        assert!(r.get::<Handle>("env", "k").is_err());
    }

    #[test]
    fn typed_lookup() {
        let mut r = BindingRegistry::new();
        r.set("a", "k", 5u32).unwrap();
        assert!(matches!(
            r.get::<Handle>("a", "k"),
            Err(UvmError::Config(_))
        ));
    }

    #[test]
    fn sealed_after_build() {
        let mut r = BindingRegistry::new();
        r.seal();
        assert!(r.set("a", "k", 1u8).is_err());
    }
}
