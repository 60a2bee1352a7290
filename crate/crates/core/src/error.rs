use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of the model.
    #[error("{what} = {value} is outside the valid domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: String,
    },

    /// The transmitted transverse momentum exceeds the free-space wavenumber.
    #[error("no propagating diffraction order: |k_t|/k0 = {ratio:.6} > 1")]
    Evanescent { ratio: f64 },

    /// The drive places the spot outside the metasurface aperture.
    #[error("impact radius {impact_r:.3e} m exceeds the metasurface radius {r_max:.3e} m")]
    OffAperture { impact_r: f64, r_max: f64 },

    #[error("calibration fit failed: {0}")]
    Fit(String),

    #[error("calibration curve is not monotonic on {min} V .. {max} V")]
    NonMonotonic { min: f64, max: f64 },

    /// Requested directions outside the calibrated field of view; each
    /// entry is (sample index, theta deg, phi deg).
    #[error("{} requested direction(s) outside the reachable field of view (first: #{} at theta={:.3} deg, phi={:.3} deg)", .cells.len(), .cells[0].0, .cells[0].1, .cells[0].2)]
    Unreachable { cells: Vec<(usize, f64, f64)> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("length mismatch: {0}")]
    Length(String),

    #[error("malformed {kind}: {detail}")]
    Format { kind: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// A module failure while running a configuration.
    #[error("[{module}] {path}: {source}")]
    Context {
        module: &'static str,
        path: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn domain(what: &'static str, value: f64, domain: impl Into<String>) -> Self {
        Error::Domain {
            what,
            value,
            domain: domain.into(),
        }
    }

    pub fn context(self, module: &'static str, path: impl Into<String>) -> Self {
        Error::Context {
            module,
            path: path.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, below any context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            e => e,
        }
    }

    pub(crate) fn format(kind: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            kind,
            detail: detail.into(),
        }
    }
}
