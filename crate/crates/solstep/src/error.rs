use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] solstep_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    /// A CSV row that does not fit the schema. `line` is 1-based and counts
    /// the header.
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    InFile { path: PathBuf, source: Box<Error> },
    #[error("{0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// What went wrong, for choosing an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    Data,
    Numeric,
}

impl Error {
    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        Error::InFile {
            path: path.into(),
            source: Box::new(self),
        }
    }

    pub fn category(&self) -> Category {
        use solstep_core::Error as C;
        match self {
            Error::Config(_) => Category::Config,
            Error::InFile { source, .. } => source.category(),
            Error::Io { .. } | Error::Csv { .. } | Error::Format { .. } => Category::Data,
            Error::Core(e) => {
                let mut e = e;
                while let C::Split { source, .. } = e {
                    e = source;
                }
                match e {
                    C::Config(_) | C::Plan(_) | C::Filter(_) | C::Window(_) => Category::Config,
                    C::NonFinite(_) => Category::Numeric,
                    _ => Category::Data,
                }
            }
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.category() {
            Category::Config => 2,
            Category::Data => 3,
            Category::Numeric => 4,
        }
    }
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
