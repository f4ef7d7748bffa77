//! Control-affine plants `x' = f(x) + g(x) u + omega(x) d` and exogenous disturbance signals.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// The closed-form plants shipped with the toolkit, addressed by string key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlantKind {
    /// `x' = u` in the plane.
    #[serde(rename = "single_integrator_2d")]
    SingleIntegrator2d,
    /// `x' = f(x) + u - d` with a tanh-modulated rotation drift.
    #[serde(rename = "tanh_rd1")]
    TanhRd1,
    /// Planar double integrator `p' = v + d`, `v' = u`; state `[p; v]`.
    #[serde(rename = "double_integrator_4d")]
    DoubleIntegrator4d,
}

impl PlantKind {
    pub const ALL: [PlantKind; 3] = [
        PlantKind::SingleIntegrator2d,
        PlantKind::TanhRd1,
        PlantKind::DoubleIntegrator4d,
    ];

    pub fn key(self) -> &'static str {
        match self {
            PlantKind::SingleIntegrator2d => "single_integrator_2d",
            PlantKind::TanhRd1 => "tanh_rd1",
            PlantKind::DoubleIntegrator4d => "double_integrator_4d",
        }
    }
}

/// A control-affine plant with a disturbance channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlAffinePlant {
    kind: PlantKind,
    n: usize,
    m: usize,
    k: usize,
}

impl ControlAffinePlant {
    pub fn new(kind: PlantKind) -> Self {
        let (n, m, k) = match kind {
            PlantKind::SingleIntegrator2d => (2, 2, 0),
            PlantKind::TanhRd1 => (2, 2, 2),
            PlantKind::DoubleIntegrator4d => (4, 2, 2),
        };
        Self { kind, n, m, k }
    }

    pub fn kind(&self) -> PlantKind {
        self.kind
    }

    pub fn label(&self) -> &'static str {
        self.kind.key()
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn disturbance_dim(&self) -> usize {
        self.k
    }

    /// Number of leading state coordinates that are planar positions.
    pub fn position_dim(&self) -> usize {
        2
    }

    /// True when the input enters only through velocity states, so position
    /// constraints have relative degree two.
    pub fn has_velocity_split(&self) -> bool {
        matches!(self.kind, PlantKind::DoubleIntegrator4d)
    }

    /// Per-coordinate bounds of the box the scenarios operate in.
    pub fn working_box(&self) -> Vec<(f64, f64)> {
        match self.kind {
            PlantKind::SingleIntegrator2d | PlantKind::TanhRd1 => vec![(-10.0, 10.0); 2],
            PlantKind::DoubleIntegrator4d => {
                vec![(-12.0, 12.0), (-12.0, 12.0), (-5.0, 5.0), (-5.0, 5.0)]
            }
        }
    }

    pub fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        match self.kind {
            PlantKind::SingleIntegrator2d => DVector::zeros(2),
            PlantKind::TanhRd1 => {
                let s = (x[0] + x[1]).tanh();
                DVector::from_vec(vec![s * x[1], -s * x[0]])
            }
            PlantKind::DoubleIntegrator4d => DVector::from_vec(vec![x[2], x[3], 0.0, 0.0]),
        }
    }

    /// Jacobian of the drift, `df/dx`.
    pub fn drift_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match self.kind {
            PlantKind::SingleIntegrator2d => DMatrix::zeros(2, 2),
            PlantKind::TanhRd1 => {
                let s = (x[0] + x[1]).tanh();
                let ds = 1.0 - s * s;
                DMatrix::from_row_slice(2, 2, &[ds * x[1], ds * x[1] + s, -ds * x[0] - s, -ds * x[0]])
            }
            PlantKind::DoubleIntegrator4d => {
                let mut a = DMatrix::zeros(4, 4);
                a[(0, 2)] = 1.0;
                a[(1, 3)] = 1.0;
                a
            }
        }
    }

    pub fn input_map(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        match self.kind {
            PlantKind::SingleIntegrator2d | PlantKind::TanhRd1 => DMatrix::identity(2, 2),
            PlantKind::DoubleIntegrator4d => {
                let mut g = DMatrix::zeros(4, 2);
                g[(2, 0)] = 1.0;
                g[(3, 1)] = 1.0;
                g
            }
        }
    }

    pub fn disturbance_map(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        match self.kind {
            PlantKind::SingleIntegrator2d => DMatrix::zeros(2, 0),
            // x' = f + u - d
            PlantKind::TanhRd1 => -DMatrix::<f64>::identity(2, 2),
            PlantKind::DoubleIntegrator4d => {
                let mut w = DMatrix::zeros(4, 2);
                w[(0, 0)] = 1.0;
                w[(1, 1)] = 1.0;
                w
            }
        }
    }

    /// Linearization `(A, B)` at the origin.
    pub fn linearize_at_origin(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let zero = DVector::zeros(self.n);
        (self.drift_jacobian(&zero), self.input_map(&zero))
    }

    /// `f(x) + g(x) u + omega(x) d`.
    pub fn eval_dynamics(&self, x: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("state", x.len(), self.n)?;
        check_dim("input", u.len(), self.m)?;
        check_dim("disturbance", d.len(), self.k)?;

        let f = self.drift(x);
        ensure_finite(f.as_slice(), "drift f(x)")?;
        let g = self.input_map(x);
        ensure_finite(g.as_slice(), "input map g(x)")?;
        let w = self.disturbance_map(x);
        ensure_finite(w.as_slice(), "disturbance map omega(x)")?;

        let xdot = f + g * u + w * d;
        ensure_finite(xdot.as_slice(), "state derivative")?;
        Ok(xdot)
    }
}

fn check_dim(what: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::Contract(format!("{what} has dimension {got}, expected {want}")))
    }
}

/// The three registered plants.
pub fn builtin_plants() -> Vec<ControlAffinePlant> {
    PlantKind::ALL.iter().map(|&k| ControlAffinePlant::new(k)).collect()
}

/// Look up a plant by key.
pub fn plant_by_name(key: &str) -> Result<ControlAffinePlant> {
    PlantKind::ALL
        .iter()
        .find(|k| k.key() == key)
        .map(|&k| ControlAffinePlant::new(k))
        .ok_or_else(|| Error::Config(format!("unknown plant '{key}'")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DisturbanceKind {
    #[default]
    None,
    ExogenousFlow,
    IsaacsAdversary,
}

/// Parameters of the planar flow field: a constant drift plus a solid-body
/// swirl around `center` whose strength pulses in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowParams {
    pub constant: [f64; 2],
    pub rotation: f64,
    pub center: [f64; 2],
    pub omega: f64,
    pub pulse: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            constant: [0.0, 0.0],
            rotation: 0.0,
            center: [0.0, 0.0],
            omega: 0.0,
            pulse: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct DisturbanceSignal {
    pub kind: DisturbanceKind,
    pub magnitude: f64,
    pub flow: FlowParams,
}

impl DisturbanceSignal {
    pub fn none() -> Self {
        Self::default()
    }
}

/// Evaluate the exogenous flow at `(t, x)`. The output is saturated to
/// `signal.magnitude` in Euclidean norm.
pub fn exogenous_flow(signal: &DisturbanceSignal, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
    if signal.kind != DisturbanceKind::ExogenousFlow {
        return Err(Error::Contract(format!(
            "exogenous_flow called with disturbance kind {:?}",
            signal.kind
        )));
    }
    if x.len() < 2 {
        return Err(Error::Contract("flow field needs a planar position".into()));
    }
    let fp = &signal.flow;
    let dx = x[0] - fp.center[0];
    let dy = x[1] - fp.center[1];
    let radius = (dx * dx + dy * dy).sqrt();
    let swirl = fp.rotation * (1.0 + fp.pulse * (fp.omega * t).sin()) / (1.0 + radius);
    let mut out = [fp.constant[0] - swirl * dy, fp.constant[1] + swirl * dx];

    let cap = signal.magnitude.max(0.0);
    let norm = out[0].hypot(out[1]);
    if norm > cap {
        let scale = if norm > 0.0 { cap / norm } else { 0.0 };
        out[0] *= scale;
        out[1] *= scale;
    }
    Ok(DVector::from_row_slice(&out))
}
