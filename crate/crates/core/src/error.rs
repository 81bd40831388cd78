use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("character {0:?} is not in the charset")]
    UnknownSymbol(char),

    #[error("duplicate symbol {0:?} in charset")]
    DuplicateSymbol(char),

    #[error("{}: row {row}: {message}", path.display())]
    Manifest {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("image shape: {0}")]
    Shape(String),

    #[error("layout: {0}")]
    Layout(String),

    #[error("glyphs overlap at radius {radius:.1} px; minimum feasible radius is {min_radius:.1} px")]
    CurveOverlap { radius: f64, min_radius: f64 },

    #[error("atlas: {0}")]
    Atlas(String),

    #[error("metric: {0}")]
    Metric(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;
