use std::collections::HashMap;
use std::fmt;

use once_cell::sync::Lazy;
use parking_lot::RwLock;

/// Interned variable name. Equality and hashing are on the integer id.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Sym(u32);

struct Interner {
    names: Vec<String>,
    ids: HashMap<String, u32>,
}

static INTERNER: Lazy<RwLock<Interner>> = Lazy::new(|| {
    RwLock::new(Interner {
        names: Vec::new(),
        ids: HashMap::new(),
    })
});

impl Sym {
    pub fn new(name: &str) -> Sym {
        if let Some(&id) = INTERNER.read().ids.get(name) {
            return Sym(id);
        }
        let mut table = INTERNER.write();
        if let Some(&id) = table.ids.get(name) {
            return Sym(id);
        }
        let id = table.names.len() as u32;
        table.names.push(name.to_string());
        table.ids.insert(name.to_string(), id);
        Sym(id)
    }

    pub fn name(self) -> String {
        INTERNER.read().names[self.0 as usize].clone()
    }

    pub fn id(self) -> u32 {
        self.0
    }

    /// Symbol for the `order`-th time derivative of `self` (order 0 is `self`).
    pub fn derivative(self, order: usize) -> Sym {
        if order == 0 {
            self
        } else {
            Sym::new(&format!("{}_d{}", self.name(), order))
        }
    }
}

impl PartialOrd for Sym {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Symbols order by name so that canonical forms do not depend on interning order.
impl Ord for Sym {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        if self.0 == other.0 {
            return std::cmp::Ordering::Equal;
        }
        let table = INTERNER.read();
        table.names[self.0 as usize]
            .cmp(&table.names[other.0 as usize])
            .then(self.0.cmp(&other.0))
    }
}

impl fmt::Display for Sym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&INTERNER.read().names[self.0 as usize])
    }
}

impl fmt::Debug for Sym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sym({self})")
    }
}

/// Map from symbol to value.
pub type Binding = HashMap<Sym, f64>;
