//! Levenberg–Marquardt over keyframes, observed walls and observed rooms.
//! Plan nodes stay fixed.

use nalgebra::{DMatrix, DVector, UnitQuaternion, Vector2, Vector3};
use serde::Serialize;

use super::factors::{qmul, Factor, NodeRef};
use super::jet::{Jet, Scalar};
use super::{Origin, SGraph};
use crate::geometry::{wrap_angle, PlaneMinimal, Pose3};

/// Jet width; enough for the widest factor (a room and four observed walls).
const SLOTS: usize = 16;
type J = Jet<SLOTS>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizeReport {
    /// Accepted steps.
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Cost after each accepted step.
    pub costs: Vec<f64>,
    pub singular: bool,
}

struct Layout {
    keyframes: Vec<usize>,
    walls: Vec<Option<usize>>,
    rooms: Vec<Option<usize>>,
    dim: usize,
}

#[derive(Clone)]
struct State {
    keyframes: Vec<Pose3>,
    walls: Vec<PlaneMinimal>,
    rooms: Vec<Vector2<f64>>,
}

impl SGraph {
    fn layout(&self) -> Layout {
        let mut dim = 0;
        let keyframes = self
            .keyframes
            .iter()
            .map(|_| {
                dim += 6;
                dim - 6
            })
            .collect();
        let walls = self
            .walls
            .iter()
            .map(|w| {
                (w.origin == Origin::Observed).then(|| {
                    dim += 3;
                    dim - 3
                })
            })
            .collect();
        let rooms = self
            .rooms
            .iter()
            .map(|r| {
                (r.origin == Origin::Observed).then(|| {
                    dim += 2;
                    dim - 2
                })
            })
            .collect();
        Layout {
            keyframes,
            walls,
            rooms,
            dim,
        }
    }

    fn block(&self, n: &NodeRef) -> Vec<f64> {
        match *n {
            NodeRef::Keyframe(k) => self.keyframes[k].pose.to_array().to_vec(),
            NodeRef::Wall(w) => {
                let m = &self.walls[w].minimal;
                vec![m.phi, m.theta, m.d]
            }
            NodeRef::Room(r) => {
                let c = &self.rooms[r].center;
                vec![c.x, c.y]
            }
        }
    }

    pub(super) fn residual(&self, f: &Factor) -> Vec<f64> {
        let blocks: Vec<Vec<f64>> = f.nodes.iter().map(|n| self.block(n)).collect();
        f.residual(&blocks)
    }

    pub fn total_cost(&self) -> f64 {
        self.factors.iter().map(|f| f.cost_of(&self.residual(f))).sum()
    }

    /// Residual and Jacobian of `f` with respect to the tangent of each
    /// free node, plus the global column of every Jacobian column.
    fn linearize(&self, f: &Factor, layout: &Layout) -> (Vec<f64>, DMatrix<f64>, Vec<usize>) {
        let mut cols = Vec::new();
        let mut blocks: Vec<Vec<J>> = Vec::with_capacity(f.nodes.len());
        for n in &f.nodes {
            let plain = self.block(n);
            let offset = match *n {
                NodeRef::Keyframe(k) => Some(layout.keyframes[k]),
                NodeRef::Wall(w) => layout.walls[w],
                NodeRef::Room(r) => layout.rooms[r],
            };
            let Some(offset) = offset else {
                blocks.push(plain.iter().map(|&v| J::constant(v)).collect());
                continue;
            };
            let s = cols.len();
            match n {
                NodeRef::Keyframe(_) => {
                    cols.extend(offset..offset + 6);
                    // t + δt, q ⊗ (1, δω/2): exact to first order at δ = 0
                    let t = (0..3).map(|i| J::variable(plain[i], s + i));
                    let q = [J::constant(plain[3]), J::constant(plain[4]), J::constant(plain[5]), J::constant(plain[6])];
                    let dq = [
                        J::constant(1.0),
                        J::variable(0.0, s + 3).scale(0.5),
                        J::variable(0.0, s + 4).scale(0.5),
                        J::variable(0.0, s + 5).scale(0.5),
                    ];
                    blocks.push(t.chain(qmul(&q, &dq)).collect());
                }
                _ => {
                    cols.extend(offset..offset + plain.len());
                    blocks.push(
                        plain
                            .iter()
                            .enumerate()
                            .map(|(i, &v)| J::variable(v, s + i))
                            .collect(),
                    );
                }
            }
        }
        let r = f.residual(&blocks);
        let mut jac = DMatrix::zeros(r.len(), cols.len());
        for (i, ri) in r.iter().enumerate() {
            for j in 0..cols.len() {
                jac[(i, j)] = ri.g[j];
            }
        }
        (r.iter().map(|v| v.v).collect(), jac, cols)
    }

    fn normal_equations(&self, layout: &Layout) -> (DMatrix<f64>, DVector<f64>) {
        let mut h = DMatrix::zeros(layout.dim, layout.dim);
        let mut g = DVector::zeros(layout.dim);
        for f in &self.factors {
            let (r, jac, cols) = self.linearize(f, layout);
            if cols.is_empty() {
                continue;
            }
            let r = DVector::from_vec(r);
            let jt_w = jac.transpose() * &f.info;
            let hb = &jt_w * &jac;
            let gb = &jt_w * r;
            for (a, &ca) in cols.iter().enumerate() {
                g[ca] += gb[a];
                for (b, &cb) in cols.iter().enumerate() {
                    h[(ca, cb)] += hb[(a, b)];
                }
            }
        }
        (h, g)
    }

    fn state(&self) -> State {
        State {
            keyframes: self.keyframes.iter().map(|k| k.pose).collect(),
            walls: self.walls.iter().map(|w| w.minimal).collect(),
            rooms: self.rooms.iter().map(|r| r.center).collect(),
        }
    }

    fn restore(&mut self, s: &State) {
        for (k, p) in self.keyframes.iter_mut().zip(&s.keyframes) {
            k.pose = *p;
        }
        for (w, m) in self.walls.iter_mut().zip(&s.walls) {
            w.minimal = *m;
        }
        for (r, c) in self.rooms.iter_mut().zip(&s.rooms) {
            r.center = *c;
        }
    }

    /// Applies a tangent step to every free node.
    fn retract(&mut self, layout: &Layout, delta: &DVector<f64>) {
        for (k, &o) in self.keyframes.iter_mut().zip(&layout.keyframes) {
            let dt = Vector3::new(delta[o], delta[o + 1], delta[o + 2]);
            let dw = Vector3::new(delta[o + 3], delta[o + 4], delta[o + 5]);
            k.pose = Pose3::new(k.pose.t + dt, k.pose.q * UnitQuaternion::from_scaled_axis(dw));
        }
        for (w, o) in self.walls.iter_mut().zip(&layout.walls) {
            if let Some(o) = *o {
                w.minimal = PlaneMinimal {
                    phi: wrap_angle(w.minimal.phi + delta[o]),
                    theta: w.minimal.theta + delta[o + 1],
                    d: w.minimal.d + delta[o + 2],
                };
            }
        }
        for (r, o) in self.rooms.iter_mut().zip(&layout.rooms) {
            if let Some(o) = *o {
                r.center += Vector2::new(delta[o], delta[o + 1]);
            }
        }
    }

    /// Damped Gauss–Newton on the whole graph.
    ///
    /// Stops after `max_iters` accepted steps, when a step lowers the cost
    /// by less than 1e-6 relative, or when no damping yields a decrease.
    /// A singular system leaves the estimate untouched.
    pub fn optimize(&mut self, max_iters: usize) -> OptimizeReport {
        let initial = self.total_cost();
        let mut report = OptimizeReport {
            iterations: 0,
            initial_cost: initial,
            final_cost: initial,
            costs: Vec::new(),
            singular: false,
        };
        if initial < 1e-12 || self.keyframes.is_empty() {
            return report;
        }
        let layout = self.layout();
        let mut cost = initial;
        let mut lambda = 1e-4;
        'outer: while report.iterations < max_iters {
            let (h, g) = self.normal_equations(&layout);
            loop {
                let mut a = h.clone();
                for i in 0..layout.dim {
                    a[(i, i)] += lambda * h[(i, i)];
                }
                let Some(chol) = a.cholesky() else {
                    report.singular = true;
                    break 'outer;
                };
                let delta = -chol.solve(&g);
                let saved = self.state();
                self.retract(&layout, &delta);
                let new_cost = self.total_cost();
                if new_cost.is_finite() && new_cost < cost {
                    let rel = (cost - new_cost) / cost;
                    cost = new_cost;
                    report.iterations += 1;
                    report.costs.push(cost);
                    lambda = (lambda / 3.0).max(1e-12);
                    if rel < 1e-6 || cost < 1e-12 {
                        break 'outer;
                    }
                    break;
                }
                self.restore(&saved);
                lambda *= 10.0;
                if lambda > 1e12 {
                    break 'outer;
                }
            }
        }
        report.final_cost = cost;
        report
    }
}

impl SGraph {
    /// Analytic Jacobian of factor `index` next to central differences with
    /// step `h` on the tangent space, one column per free parameter.
    ///
    /// # Panics
    ///
    /// Panics if `index` is out of range.
    pub fn factor_jacobians(&self, index: usize, h: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let layout = self.layout();
        let f = &self.factors[index];
        let (_, analytic, cols) = self.linearize(f, &layout);
        let mut numeric = DMatrix::zeros(analytic.nrows(), cols.len());
        for (j, &c) in cols.iter().enumerate() {
            let mut step = DVector::zeros(layout.dim);
            step[c] = h;
            let mut plus = self.clone();
            plus.retract(&layout, &step);
            let mut minus = self.clone();
            minus.retract(&layout, &(-step));
            let rp = plus.residual(&plus.factors[index]);
            let rm = minus.residual(&minus.factors[index]);
            for i in 0..rp.len() {
                numeric[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        (analytic, numeric)
    }
}
