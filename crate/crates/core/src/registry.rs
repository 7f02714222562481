//! Name-keyed registries used to select strategies at runtime.

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown {kind} '{name}' (available: {available})")]
pub struct UnknownName {
    pub kind: &'static str,
    pub name: String,
    pub available: String,
}

pub struct Registry<T> {
    kind: &'static str,
    entries: Vec<(&'static str, T)>,
}

impl<T> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self { kind, entries: Vec::new() }
    }

    /// Adds `item` under `name`, replacing any earlier registration.
    pub fn register(&mut self, name: &'static str, item: T) -> &mut Self {
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = item,
            None => self.entries.push((name, item)),
        }
        self
    }

    pub fn get(&self, name: &str) -> Result<&T, UnknownName> {
        self.entries.iter().find(|(n, _)| *n == name).map(|(_, t)| t).ok_or_else(|| UnknownName {
            kind: self.kind,
            name: name.to_string(),
            available: self.names().join(", "),
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }
}
