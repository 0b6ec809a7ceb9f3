//! Containment exclusion mode: ideal planar flow past failed agents.
//!
//! A uniform stream of speed `u∞` heading `θ∞` is superposed with one doublet
//! per failed agent, so every failed agent sits inside a closed stream
//! surface of radius `a = √(δ/u∞)`. Healthy agents keep the stream value they
//! held at mode entry and advance along it with `dφ/dt = v_φ`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, Matrix3x2, Vector2};

use crate::error::{Error, Result};
use crate::geometry::Position3;
use crate::refnet::PositionMap;
use crate::scalar::Real;
use crate::AgentId;

/// Doublet centered at `(a, b)` with strength `delta` and axis angle `gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Doublet<T> {
    pub a: T,
    pub b: T,
    pub delta: T,
    pub gamma: T,
    /// Failed agent the doublet wraps, if any.
    pub agent: Option<AgentId>,
}

impl<T: Real> Doublet<T> {
    /// Radius of the closed stream surface in a stream of speed `u_inf`.
    pub fn radius(&self, u_inf: T) -> T {
        (self.delta / u_inf).sqrt()
    }

    fn offset(&self, x: T, y: T) -> (T, T, T) {
        let (dx, dy) = (x - self.a, y - self.b);
        (dx, dy, dx * dx + dy * dy)
    }

    /// `(φ, ψ)` contributed at `(x, y)`; `r2` must be positive.
    ///
    /// The stream part is `δ(−sin γ X + cos γ Y)/r²`; the potential carries
    /// the sign that makes the pair satisfy the Cauchy–Riemann equations.
    fn values(&self, x: T, y: T) -> (T, T) {
        let (dx, dy, r2) = self.offset(x, y);
        let (s, c) = self.gamma.sin_cos();
        (-self.delta * (c * dx + s * dy) / r2, self.delta * (-s * dx + c * dy) / r2)
    }

    /// Gradients `(∇φ, ∇ψ)` of the doublet terms.
    fn gradients(&self, x: T, y: T) -> (Vector2<T>, Vector2<T>) {
        let (dx, dy, r2) = self.offset(x, y);
        let (s, c) = self.gamma.sin_cos();
        let two = T::lit(2.0);
        let r4 = r2 * r2;
        let num_phi = -(c * dx + s * dy);
        let num_psi = -s * dx + c * dy;
        let gphi = Vector2::new(
            self.delta * (-c * r2 - num_phi * two * dx) / r4,
            self.delta * (-s * r2 - num_phi * two * dy) / r4,
        );
        let gpsi = Vector2::new(
            self.delta * (-s * r2 - num_psi * two * dx) / r4,
            self.delta * (c * r2 - num_psi * two * dy) / r4,
        );
        (gphi, gpsi)
    }
}

/// Surface the agents' altitude follows while sliding along streamlines.
#[derive(Clone, Default)]
pub enum HeightSurface<T> {
    /// Each agent keeps the altitude it had at mode entry.
    #[default]
    Flat,
    /// `z = z0 + sx·x + sy·y`.
    Plane { z0: T, sx: T, sy: T },
    /// Custom surface returning `(z, ∂z/∂x, ∂z/∂y)`.
    Custom(Arc<dyn Fn(T, T) -> (T, T, T) + Send + Sync>),
}

impl<T: Real> HeightSurface<T> {
    /// Height and slopes at `(x, y)`, or `None` when altitude is free.
    pub fn eval(&self, x: T, y: T) -> Option<(T, T, T)> {
        match self {
            Self::Flat => None,
            Self::Plane { z0, sx, sy } => Some((*z0 + *sx * x + *sy * y, *sx, *sy)),
            Self::Custom(f) => Some(f(x, y)),
        }
    }

    pub fn slope(&self, x: T, y: T) -> (T, T) {
        self.eval(x, y).map_or((T::zero(), T::zero()), |(_, sx, sy)| (sx, sy))
    }
}

impl<T: fmt::Debug> fmt::Debug for HeightSurface<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Flat => write!(f, "Flat"),
            Self::Plane { z0, sx, sy } => f.debug_struct("Plane").field("z0", z0).field("sx", sx).field("sy", sy).finish(),
            Self::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Uniform stream plus doublets, with the height surface used in 3-D.
#[derive(Debug, Clone)]
pub struct FlowField<T> {
    pub u_inf: T,
    pub theta_inf: T,
    pub doublets: Vec<Doublet<T>>,
    pub height_surface: HeightSurface<T>,
}

/// Potential, stream value and their gradients at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowSample<T> {
    pub phi: T,
    pub psi: T,
    pub grad_phi: Vector2<T>,
    pub grad_psi: Vector2<T>,
    /// Determinant of the `(φ, ψ)` Jacobian, `|∇φ|²`.
    pub jac_det: T,
    /// Index of a doublet whose exclusion disk strictly contains the point.
    pub inside_disk: Option<usize>,
}

/// `√(δ/u∞)`, the radius of the body streamline.
pub fn exclusion_radius<T: Real>(u_inf: T, delta: T) -> Result<T> {
    if !(u_inf > T::zero()) || !(delta > T::zero()) {
        return Err(Error::Argument("stream speed and doublet strength must be positive".into()));
    }
    Ok((delta / u_inf).sqrt())
}

impl<T: Real> FlowField<T> {
    pub fn uniform(u_inf: T, theta_inf: T) -> Result<Self> {
        if !(u_inf > T::zero()) {
            return Err(Error::Argument("stream speed must be positive".into()));
        }
        Ok(Self { u_inf, theta_inf, doublets: Vec::new(), height_surface: HeightSurface::Flat })
    }

    pub fn with_height_surface(mut self, surface: HeightSurface<T>) -> Self {
        self.height_surface = surface;
        self
    }

    /// Adds a doublet whose body streamline is a circle of `radius` about
    /// `(a, b)`.
    pub fn add_obstacle(&mut self, a: T, b: T, radius: T, agent: Option<AgentId>) -> Result<()> {
        if !(radius > T::zero()) {
            return Err(Error::Argument("exclusion radius must be positive".into()));
        }
        let d = Doublet { a, b, delta: radius * radius * self.u_inf, gamma: self.theta_inf + T::pi(), agent };
        for other in &self.doublets {
            let gap = ((other.a - a).powi(2) + (other.b - b).powi(2)).sqrt();
            if gap < other.radius(self.u_inf) + radius {
                log::warn!("exclusion disks around ({a}, {b}) and ({}, {}) overlap", other.a, other.b);
            }
        }
        self.doublets.push(d);
        Ok(())
    }

    /// Index of a doublet whose disk strictly contains `(x, y)`.
    pub fn inside_disk(&self, x: T, y: T) -> Option<usize> {
        self.doublets.iter().position(|d| {
            let r = d.radius(self.u_inf);
            d.offset(x, y).2 < r * r * (T::one() - T::lit(1e-12))
        })
    }

    pub fn psi(&self, x: T, y: T) -> Result<T> {
        eval_flow(self, x, y).map(|s| s.psi)
    }

    fn stagnation_floor(&self) -> T {
        T::lit(1e-9) * self.u_inf * self.u_inf
    }
}

/// One doublet per failed agent, each wrapped by a disk of `radius`.
pub fn build_flow_from_failures<T: Real>(
    failed: &[(AgentId, Position3<T>)],
    u_inf: T,
    theta_inf: T,
    radius: T,
) -> Result<FlowField<T>> {
    let mut field = FlowField::uniform(u_inf, theta_inf)?;
    for (id, p) in failed {
        field.add_obstacle(p.x, p.y, radius, Some(*id))?;
    }
    Ok(field)
}

/// Evaluates the flow at `(x, y)`.
pub fn eval_flow<T: Real>(field: &FlowField<T>, x: T, y: T) -> Result<FlowSample<T>> {
    let (s, c) = field.theta_inf.sin_cos();
    let u = field.u_inf;
    let mut phi = u * (x * c + y * s);
    let mut psi = u * (-x * s + y * c);
    let mut grad_phi = Vector2::new(u * c, u * s);
    let mut grad_psi = Vector2::new(-u * s, u * c);
    for d in &field.doublets {
        let r2 = d.offset(x, y).2;
        if !(r2 > T::zero()) {
            return Err(Error::Singularity { x: x.to_f64_lossy(), y: y.to_f64_lossy() });
        }
        let (dp, ds) = d.values(x, y);
        let (gp, gs) = d.gradients(x, y);
        phi += dp;
        psi += ds;
        grad_phi += gp;
        grad_psi += gs;
    }
    Ok(FlowSample {
        phi,
        psi,
        grad_phi,
        grad_psi,
        jac_det: grad_phi.x * grad_psi.y - grad_phi.y * grad_psi.x,
        inside_disk: field.inside_disk(x, y),
    })
}

/// Stream value of every healthy agent at mode entry.
pub fn assign_stream_constants<T: Real>(healthy: &PositionMap<T>, field: &FlowField<T>) -> Result<BTreeMap<AgentId, T>> {
    healthy
        .iter()
        .map(|(id, p)| {
            if let Some(k) = field.inside_disk(p.x, p.y) {
                return Err(Error::InsideExclusion {
                    agent: *id,
                    failed: field.doublets[k].agent.unwrap_or(AgentId(u32::MAX)),
                });
            }
            Ok((*id, eval_flow(field, p.x, p.y)?.psi))
        })
        .collect()
}

fn planar_velocity<T: Real>(field: &FlowField<T>, x: T, y: T, v_phi: T) -> Result<Vector2<T>> {
    let s = eval_flow(field, x, y)?;
    if s.jac_det < field.stagnation_floor() {
        return Err(Error::Stagnation { x: x.to_f64_lossy(), y: y.to_f64_lossy(), jac_det: s.jac_det.to_f64_lossy() });
    }
    Ok(Vector2::new(s.grad_psi.y, -s.grad_psi.x) * (v_phi / s.jac_det))
}

/// Desired velocity on the streamline through `(x, y)`: the planar part
/// keeps `ψ` fixed and advances `φ` at rate `v_phi`, the vertical part
/// follows the height surface.
pub fn streamline_velocity<T: Real>(field: &FlowField<T>, x: T, y: T, v_phi: T) -> Result<Position3<T>> {
    let v = planar_velocity(field, x, y, v_phi)?;
    let (sx, sy) = field.height_surface.slope(x, y);
    Ok(Position3::new(v.x, v.y, sx * v.x + sy * v.y))
}

/// Column of the generalized-coordinate vector a shape-matrix column acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowCoordinate {
    StreamSpeed,
    StreamHeading,
    CenterX(usize),
    CenterY(usize),
    Strength(usize),
    SlidingSpeed,
}

/// Shape matrix mapping generalized-coordinate rates to desired velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeMatrix<T: Real> {
    pub h: DMatrix<T>,
    pub layout: Vec<FlowCoordinate>,
}

impl<T: Real> ShapeMatrix<T> {
    /// Velocity under the given coordinate rates (length `3 + 3k`).
    pub fn velocity(&self, rates: &[T]) -> Result<Position3<T>> {
        if rates.len() != self.layout.len() {
            return Err(Error::Argument(format!("expected {} rates, got {}", self.layout.len(), rates.len())));
        }
        let v = &self.h * nalgebra::DVector::from_column_slice(rates);
        Ok(Position3::new(v[0], v[1], v[2]))
    }

    /// Rate vector of the steady mode: every parameter frozen, sliding at
    /// `v_phi`.
    pub fn steady_rates(&self, v_phi: T) -> Vec<T> {
        let mut rates = vec![T::zero(); self.layout.len()];
        *rates.last_mut().unwrap() = v_phi;
        rates
    }
}

/// Partial derivatives of the total potential with respect to each flow
/// parameter, in shape-matrix layout order (without the sliding column).
pub fn potential_sensitivities<T: Real>(field: &FlowField<T>, x: T, y: T) -> Result<Vec<T>> {
    let (s, c) = field.theta_inf.sin_cos();
    let mut out = vec![x * c + y * s, field.u_inf * (-x * s + y * c)];
    for d in &field.doublets {
        let r2 = d.offset(x, y).2;
        if !(r2 > T::zero()) {
            return Err(Error::Singularity { x: x.to_f64_lossy(), y: y.to_f64_lossy() });
        }
        // the doublet axis turns with the stream heading
        let (dx, dy, _) = d.offset(x, y);
        let (sg, cg) = d.gamma.sin_cos();
        out[1] += -d.delta * (-sg * dx + cg * dy) / r2;
        let (gp, _) = d.gradients(x, y);
        let (phi_d, _) = d.values(x, y);
        out.extend([-gp.x, -gp.y, phi_d / d.delta]);
    }
    Ok(out)
}

/// Shape matrix of the containment-exclusion mode at `(x, y)`.
///
/// Columns: stream speed, stream heading, then `(a, b, δ)` per doublet, then
/// the sliding column. The 2-row block is lifted to 3-D with the height
/// surface slopes.
pub fn cem_shape_matrix<T: Real>(field: &FlowField<T>, x: T, y: T) -> Result<ShapeMatrix<T>> {
    let sample = eval_flow(field, x, y)?;
    if sample.jac_det < field.stagnation_floor() {
        return Err(Error::Stagnation { x: x.to_f64_lossy(), y: y.to_f64_lossy(), jac_det: sample.jac_det.to_f64_lossy() });
    }
    let dir = Vector2::new(sample.grad_psi.y, -sample.grad_psi.x) / sample.jac_det;
    let sens = potential_sensitivities(field, x, y)?;
    let (sx, sy) = field.height_surface.slope(x, y);
    let lift = Matrix3x2::new(T::one(), T::zero(), T::zero(), T::one(), sx, sy);
    let cols = sens.len() + 1;
    let mut planar = DMatrix::<T>::zeros(2, cols);
    for (j, ds) in sens.iter().enumerate() {
        planar.set_column(j, &(-dir * *ds));
    }
    planar.set_column(cols - 1, &dir);
    let h = DMatrix::from_iterator(3, 2, lift.iter().copied()) * planar;

    let mut layout = vec![FlowCoordinate::StreamSpeed, FlowCoordinate::StreamHeading];
    for k in 0..field.doublets.len() {
        layout.extend([FlowCoordinate::CenterX(k), FlowCoordinate::CenterY(k), FlowCoordinate::Strength(k)]);
    }
    layout.push(FlowCoordinate::SlidingSpeed);
    Ok(ShapeMatrix { h, layout })
}

/// Result of one streamline integration step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamlineStep<T> {
    pub position: Position3<T>,
    /// Set when the raw step landed inside an exclusion disk and was pulled
    /// back onto the starting streamline.
    pub projected: bool,
}

/// Newton steps along `∇ψ` back onto the level set `psi0`.
pub fn project_to_streamline<T: Real>(field: &FlowField<T>, x: T, y: T, psi0: T) -> Result<(T, T)> {
    let (mut x, mut y) = (x, y);
    for _ in 0..20 {
        let s = eval_flow(field, x, y)?;
        let g2 = s.grad_psi.norm_squared();
        if !(g2 > T::zero()) {
            break;
        }
        let k = (psi0 - s.psi) / g2;
        x += k * s.grad_psi.x;
        y += k * s.grad_psi.y;
        if (psi0 - s.psi).abs() <= T::default_epsilon() * psi0.abs().max(T::one()) {
            break;
        }
    }
    Ok((x, y))
}

/// One classical fourth-order step of length `dt` along the streamline.
pub fn step_streamline<T: Real>(
    position: &Position3<T>,
    field: &FlowField<T>,
    v_phi: T,
    dt: T,
) -> Result<StreamlineStep<T>> {
    if dt < T::zero() {
        return Err(Error::Argument("time step must be nonnegative".into()));
    }
    if dt == T::zero() {
        return Ok(StreamlineStep { position: *position, projected: false });
    }
    let (x, y) = (position.x, position.y);
    let half = dt / T::lit(2.0);
    let k1 = planar_velocity(field, x, y, v_phi)?;
    let k2 = planar_velocity(field, x + k1.x * half, y + k1.y * half, v_phi)?;
    let k3 = planar_velocity(field, x + k2.x * half, y + k2.y * half, v_phi)?;
    let k4 = planar_velocity(field, x + k3.x * dt, y + k3.y * dt, v_phi)?;
    let inc = (k1 + (k2 + k3) * T::lit(2.0) + k4) * (dt / T::lit(6.0));
    let (mut nx, mut ny) = (x + inc.x, y + inc.y);
    let mut projected = false;
    if field.inside_disk(nx, ny).is_some() {
        let psi0 = eval_flow(field, x, y)?.psi;
        (nx, ny) = project_to_streamline(field, nx, ny, psi0)?;
        projected = true;
        log::warn!("streamline step from ({x}, {y}) entered an exclusion disk; projected back");
    }
    let nz = field.height_surface.eval(nx, ny).map_or(position.z, |(z, _, _)| z);
    Ok(StreamlineStep { position: Position3::new(nx, ny, nz), projected })
}
