use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

type Factory<T, C> = Box<dyn Fn(&C) -> Result<Box<T>> + Send + Sync>;

/// Name → factory table for interchangeable strategies.
///
/// `T` is the trait object produced (`dyn CodingStrategy`, `dyn CodebookTrainer`)
/// and `C` the configuration each factory is built from.
pub struct Registry<T: ?Sized, C> {
    kind: &'static str,
    factories: BTreeMap<String, Factory<T, C>>,
}

impl<T: ?Sized, C> Registry<T, C> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            factories: BTreeMap::new(),
        }
    }

    /// Registers a factory, replacing any previous entry of the same name.
    pub fn register<F>(&mut self, name: &str, factory: F) -> &mut Self
    where
        F: Fn(&C) -> Result<Box<T>> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
        self
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    /// Registered names in sorted order.
    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn create(&self, name: &str, config: &C) -> Result<Box<T>> {
        match self.factories.get(name) {
            Some(factory) => factory(config),
            None => Err(Error::InvalidArgument(format!(
                "unknown {} '{}' (available: {})",
                self.kind,
                name,
                self.names().join(", ")
            ))),
        }
    }
}

impl<T: ?Sized, C> fmt::Debug for Registry<T, C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("kind", &self.kind)
            .field("names", &self.names())
            .finish()
    }
}
