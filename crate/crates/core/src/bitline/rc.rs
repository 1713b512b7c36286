//! Closed-form transients of the lumped bitline network.
//!
//! Both network shapes reduce to sums of decaying exponentials around the
//! drive target: a single-node RC (isolation transistor off or absent) has
//! one mode, the driven two-node ladder (far access) has two real negative
//! modes obtained by eigen-decomposition.

/// Voltage of one node: `v(t) = v_inf + sum_i coeff_i * exp(rate_i * t)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct NodeTransient {
    pub v_inf: f64,
    /// `(coefficient, rate)` pairs, rates strictly negative. A single-mode
    /// node stores `(0.0, 0.0)` in the second slot.
    pub terms: [(f64, f64); 2],
}

impl NodeTransient {
    pub fn eval(&self, t: f64) -> f64 {
        self.v_inf + self.deviation(t)
    }

    /// Signed distance from the drive target at time `t`.
    pub fn deviation(&self, t: f64) -> f64 {
        let (c1, r1) = self.terms[0];
        let (c2, r2) = self.terms[1];
        c1 * (r1 * t).exp() + c2 * (r2 * t).exp()
    }

    /// Upper bound on `|deviation|`, monotone decreasing in `t`.
    fn envelope(&self, t: f64) -> f64 {
        let (c1, r1) = self.terms[0];
        let (c2, r2) = self.terms[1];
        c1.abs() * (r1 * t).exp() + c2.abs() * (r2 * t).exp()
    }

    fn is_single_mode(&self) -> bool {
        self.terms[1].0 == 0.0
    }

    /// Slowest (least negative) rate with a nonzero coefficient.
    fn slow_rate(&self) -> f64 {
        let (c1, r1) = self.terms[0];
        let (c2, r2) = self.terms[1];
        match (c1 != 0.0, c2 != 0.0) {
            (true, true) => r1.max(r2),
            (true, false) => r1,
            (false, true) => r2,
            (false, false) => -1.0,
        }
    }

    fn fast_rate(&self) -> f64 {
        let (c1, r1) = self.terms[0];
        let (c2, r2) = self.terms[1];
        match (c1 != 0.0, c2 != 0.0) {
            (true, true) => r1.min(r2),
            (true, false) => r1,
            (false, true) => r2,
            (false, false) => -1.0,
        }
    }
}

/// Solved transient of the whole network.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Transient {
    pub near: NodeTransient,
    /// Present only when the isolation transistor connects the far segment.
    pub far: Option<NodeTransient>,
}

impl Transient {
    pub fn slow_rate(&self) -> f64 {
        let mut r = self.near.slow_rate();
        if let Some(far) = &self.far {
            r = r.max(far.slow_rate());
        }
        r
    }
}

/// Single node of capacitance `c_total` driven toward `v_target` through
/// `r_drive`, starting at `v0`.
pub(crate) fn solve_single(c_total: f64, r_drive: f64, v0: f64, v_target: f64) -> Transient {
    let rate = -1.0 / (r_drive * c_total);
    Transient {
        near: NodeTransient {
            v_inf: v_target,
            terms: [(v0 - v_target, rate), (0.0, 0.0)],
        },
        far: None,
    }
}

/// Two-node ladder: the near node (capacitance `c_near`) is driven through
/// `r_drive`; the far node (`c_far`) hangs off it through `r_iso`. Both
/// nodes start at the same voltage `v0`.
pub(crate) fn solve_pair(
    c_near: f64,
    c_far: f64,
    r_drive: f64,
    r_iso: f64,
    v0: f64,
    v_target: f64,
) -> Transient {
    let gd = 1.0 / r_drive;
    let gi = 1.0 / r_iso;
    let a = (gd + gi) / c_near;
    let b = gi / c_near;
    let k = gi / c_far;

    // Deviation dynamics w' = A w with A = [[-a, b], [k, -k]]; both
    // eigenvalues are real and negative (discriminant = (a-k)^2 + 4bk > 0).
    let trace = -(a + k);
    let det = k * (a - b);
    let disc = (trace * trace - 4.0 * det).sqrt();
    let fast = 0.5 * (trace - disc);
    let slow = det / fast; // product of roots, avoids cancellation

    // Eigenvector for eigenvalue l is [1 + l/k, 1]. Decompose the uniform
    // initial deviation d = v0 - v_target: the far-node coefficients follow
    // from alpha*l1 + beta*l2 = 0 and alpha + beta = d.
    let d = v0 - v_target;
    let beta = d * fast / (fast - slow);
    let alpha = -d * slow / (fast - slow);

    Transient {
        near: NodeTransient {
            v_inf: v_target,
            terms: [
                (alpha * (1.0 + fast / k), fast),
                (beta * (1.0 + slow / k), slow),
            ],
        },
        far: Some(NodeTransient {
            v_inf: v_target,
            terms: [(alpha, fast), (beta, slow)],
        }),
    }
}

const BISECT_ITERS: u32 = 80;

/// First time the node voltage reaches `threshold` on its way toward the
/// drive target. `None` if it has not happened by `horizon`.
pub(crate) fn first_crossing(node: &NodeTransient, threshold: f64, horizon: f64) -> Option<f64> {
    let rising = node.v_inf >= node.eval(0.0);
    let crossed = |v: f64| if rising { v >= threshold } else { v <= threshold };
    if crossed(node.eval(0.0)) {
        return Some(0.0);
    }
    // Unreachable target: the asymptote never meets the threshold.
    if (rising && node.v_inf < threshold) || (!rising && node.v_inf > threshold) {
        return None;
    }

    if node.is_single_mode() {
        let (c, r) = node.terms[0];
        let ratio = (threshold - node.v_inf) / c;
        if ratio <= 0.0 {
            return Some(0.0);
        }
        let t = ratio.ln() / r;
        return if t <= horizon { Some(t) } else { None };
    }

    march(node, horizon, |v| crossed(v))
        .map(|(lo, hi)| bisect(lo, hi, |t| node.eval(t), threshold, rising))
}

/// First time after which the node stays within `tol` of its target
/// forever. `None` if that does not happen by `horizon`.
pub(crate) fn settle_time(node: &NodeTransient, tol: f64, horizon: f64) -> Option<f64> {
    if node.is_single_mode() {
        let c = node.terms[0].0.abs();
        if c <= tol {
            return Some(0.0);
        }
        let t = (tol / c).ln() / node.terms[0].1;
        return if t <= horizon { Some(t) } else { None };
    }

    // March until the envelope guarantees containment, remembering the last
    // step that was still outside the band.
    let mut last_outside: Option<(f64, f64)> = None;
    let mut t = 0.0;
    let fast_tau = 1.0 / node.fast_rate().abs();
    let slow_tau = 1.0 / node.slow_rate().abs();
    let phase1_end = 10.0 * fast_tau;
    loop {
        let dt = if t < phase1_end { fast_tau / 64.0 } else { slow_tau / 256.0 };
        let next = t + dt;
        if node.deviation(next).abs() > tol {
            last_outside = Some((next, next + dt));
        }
        if node.envelope(next) <= tol {
            break;
        }
        if next > horizon {
            return None;
        }
        t = next;
    }
    match last_outside {
        None => Some(if node.deviation(0.0).abs() > tol {
            // Outside at t=0 but inside by the first step: refine there.
            refine_settle(node, tol, 0.0, fast_tau / 64.0)
        } else {
            0.0
        }),
        Some((lo, _)) => {
            // Walk forward from the last outside point to a point inside.
            let mut hi = lo;
            let step = slow_tau / 256.0;
            while node.deviation(hi).abs() > tol {
                hi += step;
            }
            Some(refine_settle(node, tol, hi - step, hi))
        }
    }
}

fn refine_settle(node: &NodeTransient, tol: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..BISECT_ITERS {
        let mid = 0.5 * (lo + hi);
        if node.deviation(mid).abs() > tol {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Linear two-phase march; returns the step bracketing the first crossing.
fn march(
    node: &NodeTransient,
    horizon: f64,
    crossed: impl Fn(f64) -> bool,
) -> Option<(f64, f64)> {
    let fast_tau = 1.0 / node.fast_rate().abs();
    let slow_tau = 1.0 / node.slow_rate().abs();
    let phase1_end = 10.0 * fast_tau;
    let mut t = 0.0;
    loop {
        let dt = if t < phase1_end { fast_tau / 64.0 } else { slow_tau / 256.0 };
        let next = t + dt;
        if crossed(node.eval(next)) {
            return Some((t, next));
        }
        if next > horizon {
            return None;
        }
        t = next;
    }
}

fn bisect(mut lo: f64, mut hi: f64, eval: impl Fn(f64) -> f64, threshold: f64, rising: bool) -> f64 {
    for _ in 0..BISECT_ITERS {
        let mid = 0.5 * (lo + hi);
        let v = eval(mid);
        let crossed = if rising { v >= threshold } else { v <= threshold };
        if crossed {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}
