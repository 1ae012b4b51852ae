use serde::{Deserialize, Serialize};

/// Which formula produced an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMethod {
    ClosedForm,
    Newton,
    Bayes,
    DriftTwoPoint,
    DriftThreePoint,
    SigmaFourier,
    QuadVar,
    QuadVarFd,
}

impl EstimatorMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorMethod::ClosedForm => "closed_form",
            EstimatorMethod::Newton => "newton",
            EstimatorMethod::Bayes => "bayes",
            EstimatorMethod::DriftTwoPoint => "drift2",
            EstimatorMethod::DriftThreePoint => "drift3",
            EstimatorMethod::SigmaFourier => "sigma_fourier",
            EstimatorMethod::QuadVar => "qv",
            EstimatorMethod::QuadVarFd => "qv_fd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    /// Variance estimate is exactly zero; sigma-scale information is infinite.
    DegenerateVariance,
    /// Newton iterate drifted towards `vartheta -> 0`.
    BoundaryEscape,
    NotConverged,
    /// Posterior mass near the quadrature window edge exceeded tolerance after widening.
    WindowBoundaryMass,
    /// Estimator without an established limit theory.
    Experimental,
    /// Input looks inconsistent with the model (e.g. smooth samples).
    OutOfModel,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: Option<usize>,
    pub grad_norm: Option<f64>,
    pub flags: Vec<Flag>,
}

impl Diagnostics {
    pub fn has(&self, flag: Flag) -> bool {
        self.flags.contains(&flag)
    }

    pub fn summary(&self) -> String {
        let mut parts = Vec::new();
        if let Some(i) = self.iterations {
            parts.push(format!("iter={i}"));
        }
        if let Some(g) = self.grad_norm {
            parts.push(format!("grad={g:.3e}"));
        }
        for f in &self.flags {
            parts.push(format!("{f:?}"));
        }
        parts.join(";")
    }
}

/// Point estimates with asymptotic standard errors.
///
/// `vartheta = sigma^2`. Sigma-scale errors follow from the delta method,
/// `se_sigma = se_vartheta / (2 sigma)`, equivalently the information
/// `4 vartheta Phi_N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: EstimatorMethod,
    /// Modes `N` or grid intervals `M`.
    pub n: usize,
    pub theta: Option<f64>,
    pub vartheta: Option<f64>,
    pub se_theta: Option<f64>,
    pub se_vartheta: Option<f64>,
    pub diagnostics: Diagnostics,
}

impl EstimateReport {
    pub fn new(method: EstimatorMethod, n: usize) -> Self {
        EstimateReport {
            method,
            n,
            theta: None,
            vartheta: None,
            se_theta: None,
            se_vartheta: None,
            diagnostics: Diagnostics::default(),
        }
    }

    pub fn sigma(&self) -> Option<f64> {
        self.vartheta.map(f64::sqrt)
    }

    pub fn se_sigma(&self) -> Option<f64> {
        let v = self.vartheta?;
        let se = self.se_vartheta?;
        // At vartheta = 0 the sigma-scale information 4 vartheta Phi_N is infinite.
        Some(if v > 0.0 { se / (2.0 * v.sqrt()) } else { 0.0 })
    }
}
