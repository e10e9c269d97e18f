use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("latent code has length {found}, model expects {expected}")]
    LatentLength { expected: usize, found: usize },

    #[error("latent code entry {0} is not finite")]
    NonFiniteLatent(usize),

    #[error("query point coincides with the shape center")]
    AtShapeCenter,

    #[error("regularity violated: |grad_x f| = {norm:e} at ({}, {}, {})", point[0], point[1], point[2])]
    Regularity { norm: f64, point: [f64; 3] },

    #[error("grid spacing must be positive and finite, got {0}")]
    InvalidSpacing(f64),

    #[error("zero level set touches the bounding box")]
    LevelSetTouchesBox,

    #[error("zero level set is empty on the sampling grid")]
    EmptyLevelSet,

    #[error("degenerate mesh: {0}")]
    DegenerateMesh(String),

    #[error("mesh is not watertight: {0}")]
    NotWatertight(String),

    #[error("kernel evaluated at coincident points")]
    CoincidentPoints,

    #[error("meshes too close: separation {separation:.4} < required {required:.4}")]
    MeshesTooClose { separation: f64, required: f64 },

    #[error("meshes intersect or the inclusion is not enclosed by the outer boundary")]
    MeshesIntersect,

    #[error("wrong mesh orientation: {0}")]
    Orientation(String),

    #[error("system matrix is singular")]
    SingularSystem,

    #[error("current pattern is not conservative: imbalance {imbalance:e} vs scale {scale:e}")]
    NotConservative { imbalance: f64, scale: f64 },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("linear solve residual {0:e} exceeds tolerance")]
    Residual(f64),

    #[error("sample size {size} outside 1..={max}")]
    SampleSize { size: usize, max: usize },

    #[error("gradient contains non-finite entries")]
    NonFiniteGradient,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
