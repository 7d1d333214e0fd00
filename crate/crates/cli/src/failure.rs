//! Exit-code classification.

use std::fmt;

use nearmem_core::Error as CoreError;

/// Process exit codes. Clap usage errors are reported as `Arch` as well,
/// since they are illegal flag combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Config = 1,
    Workload = 2,
    Arch = 3,
    Runtime = 4,
}

impl ExitKind {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn label(self) -> &'static str {
        match self {
            ExitKind::Config => "invalid_config",
            ExitKind::Workload => "unknown_workload",
            ExitKind::Arch => "illegal_arch",
            ExitKind::Runtime => "runtime",
        }
    }
}

/// An error pinned to an exit code by the step that produced it.
#[derive(Debug)]
pub struct Stage {
    pub kind: ExitKind,
    pub what: String,
    source: Option<anyhow::Error>,
}

impl Stage {
    pub fn new(kind: ExitKind, what: impl Into<String>) -> Self {
        Stage {
            kind,
            what: what.into(),
            source: None,
        }
    }

    pub fn wrap(kind: ExitKind, what: impl Into<String>, source: impl Into<anyhow::Error>) -> Self {
        Stage {
            kind,
            what: what.into(),
            source: Some(source.into()),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.what)
    }
}

impl std::error::Error for Stage {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        self.source
            .as_ref()
            .map(|e| e.as_ref() as &(dyn std::error::Error + 'static))
    }
}

fn core_kind(e: &CoreError) -> ExitKind {
    match e {
        CoreError::InvalidConfig { .. } | CoreError::UnknownMemTech { .. } => ExitKind::Config,
        CoreError::UnknownWorkload(_) | CoreError::InvalidWorkload { .. } => ExitKind::Workload,
        CoreError::IllegalArch(_) => ExitKind::Arch,
        _ => ExitKind::Runtime,
    }
}

/// The outermost tagged step decides; untagged core errors map by variant.
pub fn classify(e: &anyhow::Error) -> ExitKind {
    for cause in e.chain() {
        if let Some(s) = cause.downcast_ref::<Stage>() {
            return s.kind;
        }
        if let Some(c) = cause.downcast_ref::<CoreError>() {
            return core_kind(c);
        }
    }
    ExitKind::Runtime
}
