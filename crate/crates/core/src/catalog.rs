//! Compiler flag catalogs.
//!
//! A catalog is the ordered universe of optimization flags a campaign may
//! toggle. Its line order fixes where each flag lives in a seed: switches
//! and enums occupy one byte, integer flags occupy two.
//!
//! The on-disk format is one flag per line with a single TAB between the
//! flag token and its kind:
//!
//! ```text
//! # comment
//! --addrsig	switch
//! --frame-pointer	enum:all,non-leaf,none
//! --stack-alignment	uint
//! ```

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

/// What values a flag can take.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FlagKind {
    /// Present or absent.
    Switch,
    /// `name=value` with one of at least two listed values.
    Enum(Vec<String>),
    /// `name=n` with `n` taken from a second seed byte.
    Uint,
}

impl FlagKind {
    /// Number of seed bytes the flag consumes.
    pub fn width(&self) -> usize {
        match self {
            FlagKind::Switch | FlagKind::Enum(_) => 1,
            FlagKind::Uint => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlagSpec {
    pub name: String,
    pub kind: FlagKind,
}

/// Selected state of a single flag, as decoded from a seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlagState {
    Off,
    /// A switch that is enabled.
    On,
    /// Index into an enum flag's value list.
    Choice(usize),
    Value(u8),
}

impl FlagState {
    pub fn is_selected(self) -> bool {
        !matches!(self, FlagState::Off)
    }
}

/// Byte span of one flag inside a seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ByteSpan {
    pub offset: usize,
    pub width: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CatalogError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid flag name {0:?}")]
    InvalidName(String),
    #[error("duplicate flag {0:?}")]
    Duplicate(String),
    #[error("enum flag {0:?} needs at least two distinct non-empty values")]
    BadEnum(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RenderError {
    #[error("flag {name}: enum index {index} out of range ({len} values)")]
    EnumIndex {
        name: String,
        index: usize,
        len: usize,
    },
    #[error("flag {name}: state {state:?} does not fit kind")]
    KindMismatch { name: String, state: FlagState },
}

/// Ordered flag universe together with its seed byte layout.
///
/// Immutable after construction.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FlagCatalog {
    flags: Vec<FlagSpec>,
    layout: Vec<ByteSpan>,
}

impl FlagCatalog {
    /// Builds a catalog from already-validated specs, computing the layout.
    pub fn new(flags: Vec<FlagSpec>) -> Result<Self, CatalogError> {
        let mut seen = HashSet::new();
        for spec in &flags {
            validate_name(&spec.name)?;
            if let FlagKind::Enum(values) = &spec.kind {
                validate_enum(&spec.name, values)?;
            }
            if !seen.insert(spec.name.as_str()) {
                return Err(CatalogError::Duplicate(spec.name.clone()));
            }
        }
        let mut offset = 0;
        let layout = flags
            .iter()
            .map(|spec| {
                let span = ByteSpan {
                    offset,
                    width: spec.kind.width(),
                };
                offset += span.width;
                span
            })
            .collect();
        Ok(Self { flags, layout })
    }

    pub fn flags(&self) -> &[FlagSpec] {
        &self.flags
    }

    pub fn layout(&self) -> &[ByteSpan] {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    /// Total number of seed bytes the catalog consumes.
    pub fn seed_width(&self) -> usize {
        self.layout.last().map_or(0, |s| s.offset + s.width)
    }

    /// Serializes back into the line format accepted by [`parse_catalog`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for spec in &self.flags {
            out.push_str(&spec.name);
            out.push('\t');
            match &spec.kind {
                FlagKind::Switch => out.push_str("switch"),
                FlagKind::Uint => out.push_str("uint"),
                FlagKind::Enum(values) => {
                    out.push_str("enum:");
                    out.push_str(&values.join(","));
                }
            }
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for FlagCatalog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let count = |pred: fn(&FlagKind) -> bool| self.flags.iter().filter(|s| pred(&s.kind)).count();
        write!(
            f,
            "flags={} width={} switch={} enum={} uint={}",
            self.len(),
            self.seed_width(),
            count(|k| matches!(k, FlagKind::Switch)),
            count(|k| matches!(k, FlagKind::Enum(_))),
            count(|k| matches!(k, FlagKind::Uint)),
        )
    }
}

fn validate_name(name: &str) -> Result<(), CatalogError> {
    if name.is_empty() || name.chars().any(char::is_whitespace) {
        return Err(CatalogError::InvalidName(name.to_string()));
    }
    Ok(())
}

fn validate_enum(name: &str, values: &[String]) -> Result<(), CatalogError> {
    let distinct: HashSet<&str> = values.iter().map(String::as_str).collect();
    if values.len() < 2 || distinct.len() != values.len() || values.iter().any(|v| v.is_empty()) {
        return Err(CatalogError::BadEnum(name.to_string()));
    }
    Ok(())
}

/// Parses the TAB-separated catalog format, preserving line order.
pub fn parse_catalog(text: &str) -> Result<FlagCatalog, CatalogError> {
    let mut flags = Vec::new();
    let mut names = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let err = |reason: String| CatalogError::Parse { line, reason };
        let trimmed = raw.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (name, kind) = trimmed
            .split_once('\t')
            .ok_or_else(|| err("missing kind (expected `<flag>\\t<kind>`)".into()))?;
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(err(format!("invalid flag name {name:?}")));
        }
        let kind = match kind.trim() {
            "switch" => FlagKind::Switch,
            "uint" => FlagKind::Uint,
            other => match other.strip_prefix("enum:") {
                Some(list) => {
                    let values: Vec<String> = list.split(',').map(|v| v.trim().to_string()).collect();
                    validate_enum(name, &values)
                        .map_err(|_| err(format!("enum {name} needs at least two distinct non-empty values")))?;
                    FlagKind::Enum(values)
                }
                None if other.is_empty() => return Err(err("missing kind".into())),
                None => return Err(err(format!("unknown kind {other:?}"))),
            },
        };
        if !names.insert(name.to_string()) {
            return Err(err(format!("duplicate flag {name}")));
        }
        flags.push(FlagSpec {
            name: name.to_string(),
            kind,
        });
    }
    FlagCatalog::new(flags)
}

/// Total seed width of a catalog.
pub fn total_seed_width(catalog: &FlagCatalog) -> usize {
    catalog.seed_width()
}

/// Renders a flag in a given state as command-line tokens.
pub fn render_flag(spec: &FlagSpec, state: FlagState) -> Result<Vec<String>, RenderError> {
    let mismatch = || RenderError::KindMismatch {
        name: spec.name.clone(),
        state,
    };
    match (&spec.kind, state) {
        (_, FlagState::Off) => Ok(Vec::new()),
        (FlagKind::Switch, FlagState::On) => Ok(vec![spec.name.clone()]),
        (FlagKind::Enum(values), FlagState::Choice(index)) => {
            let value = values.get(index).ok_or_else(|| RenderError::EnumIndex {
                name: spec.name.clone(),
                index,
                len: values.len(),
            })?;
            Ok(vec![format!("{}={}", spec.name, value)])
        }
        (FlagKind::Uint, FlagState::Value(n)) => Ok(vec![format!("{}={}", spec.name, n)]),
        _ => Err(mismatch()),
    }
}
