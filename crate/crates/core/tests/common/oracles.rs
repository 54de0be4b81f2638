//! Independent references for the inner minimization `min |w^H a|^2` over the uncertainty
//! sets and for the outer worst-case SINR maximization. None of them touches the SDP solver.

use rabf::array_model::{steering, ArrayGeometry, QuadSign, UncertaintySpec};
use rabf::hermlinalg::{vdot, vnorm, CVector, HermitianMatrix, C64};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

type P2 = (f64, f64);

pub fn gaussian_vector<R: Rng>(n: usize, rng: &mut R) -> CVector {
    CVector::from_fn(n, |_, _| C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)))
}

fn circle_intersections(c1: P2, r1: f64, c2: P2, r2: f64) -> Vec<P2> {
    let (dx, dy) = (c2.0 - c1.0, c2.1 - c1.1);
    let d = (dx * dx + dy * dy).sqrt();
    if d == 0.0 || d > r1 + r2 || d < (r1 - r2).abs() {
        return Vec::new();
    }
    let a = (r1 * r1 - r2 * r2 + d * d) / (2.0 * d);
    let h = (r1 * r1 - a * a).max(0.0).sqrt();
    let (mx, my) = (c1.0 + a * dx / d, c1.1 + a * dy / d);
    vec![(mx - h * dy / d, my + h * dx / d), (mx + h * dy / d, my - h * dx / d)]
}

/// Points where the circle crosses the line `coord = value` (`axis` 0 is x, 1 is y).
fn circle_line(c: P2, r: f64, axis: usize, value: f64) -> Vec<P2> {
    let (along, across) = if axis == 0 { (c.1, c.0) } else { (c.0, c.1) };
    let off = value - across;
    if off.abs() > r {
        return Vec::new();
    }
    let h = (r * r - off * off).sqrt();
    [along - h, along + h].iter().map(|&t| if axis == 0 { (value, t) } else { (t, value) }).collect()
}

/// Disk `(x - cx)^2 + y^2 <= eps` intersected with the annulus `lo <= x^2 + y^2 <= hi`, in the
/// half-plane `y >= 0`: the ball-and-shell set seen in a plane through the center direction.
struct DiskAnnulus {
    center: P2,
    eps: f64,
    lo: f64,
    hi: f64,
}

impl DiskAnnulus {
    fn contains(&self, p: P2, tol: f64) -> bool {
        let r2 = p.0 * p.0 + p.1 * p.1;
        let d2 = (p.0 - self.center.0).powi(2) + (p.1 - self.center.1).powi(2);
        p.1 >= -tol && d2 <= self.eps + tol && r2 >= self.lo - tol && r2 <= self.hi + tol
    }

    fn circles(&self) -> [(P2, f64); 3] {
        [(self.center, self.eps.sqrt()), ((0.0, 0.0), self.lo.sqrt()), ((0.0, 0.0), self.hi.sqrt())]
    }

    /// Corners of the region together with the crossings of each circle with both axes.
    fn corner_candidates(&self) -> Vec<P2> {
        let c = self.circles();
        let mut out = Vec::new();
        for i in 0..3 {
            for j in i + 1..3 {
                out.extend(circle_intersections(c[i].0, c[i].1, c[j].0, c[j].1));
            }
            out.extend(circle_line(c[i].0, c[i].1, 0, 0.0));
            out.extend(circle_line(c[i].0, c[i].1, 1, 0.0));
        }
        out.push((0.0, 0.0));
        out
    }
}

/// Exact `min |w^H a|^2` over `||a - a_hat||^2 <= eps, lo <= ||a||^2 <= hi`.
///
/// With `u = w / ||w||`, only `m = |u^H a|` and `rho = ||a - u u^H a||` matter, and the set of
/// attainable `(m, rho)` is the disk around `(|u^H a_hat|, ||a_hat_perp||)` cut by the annulus.
/// The smallest `m` of that planar region is attained at its leftmost disk point or at a corner.
pub fn ball_inner_exact(w: &CVector, a_hat: &CVector, eps: f64, lo: f64, hi: f64) -> f64 {
    let nw = vnorm(w);
    if nw == 0.0 {
        return 0.0;
    }
    let u = w / C64::new(nw, 0.0);
    let beta = vdot(&u, a_hat).norm();
    let p = (a_hat.norm_squared() - beta * beta).max(0.0).sqrt();
    let region = DiskAnnulus { center: (beta, p), eps, lo, hi };
    // the region lives in the quadrant m, rho >= 0; swap roles so `contains` checks rho >= 0
    let mut cands = region.corner_candidates();
    cands.push((beta - eps.sqrt(), p));
    let tol = 1e-12 * (1.0 + hi);
    let m = cands
        .into_iter()
        .filter(|&(m, rho)| m >= -tol && region.contains((m, rho), tol))
        .map(|(m, _)| m.max(0.0))
        .fold(f64::INFINITY, f64::min);
    nw * nw * m * m
}

/// Euclidean projection onto the ball-and-shell set.
///
/// The set is invariant under unitaries fixing `a_hat`, so the projection of `q` lies in the
/// real half-plane spanned by `a_hat` and the part of `q` off the real `a_hat` axis.
pub fn ball_projection(q: &CVector, a_hat: &CVector, eps: f64, lo: f64, hi: f64) -> CVector {
    let na = vnorm(a_hat);
    let e = a_hat / C64::new(na, 0.0);
    let xi = vdot(&e, q);
    let perp = q - &e * xi;
    let (x, y, z) = (xi.re, xi.im, vnorm(&perp));
    let r = (y * y + z * z).sqrt();
    let region = DiskAnnulus { center: (na, 0.0), eps, lo, hi };
    let tol = 1e-13 * (1.0 + hi);
    let (px, pr) = if region.contains((x, r), 0.0) {
        (x, r)
    } else {
        let mut cands = region.corner_candidates();
        for (c, rad) in region.circles() {
            let (dx, dy) = (x - c.0, r - c.1);
            let d = (dx * dx + dy * dy).sqrt();
            if d > 0.0 {
                cands.push((c.0 + rad * dx / d, c.1 + rad * dy / d));
                cands.push((c.0 - rad * dx / d, c.1 - rad * dy / d));
            }
        }
        cands
            .into_iter()
            .filter(|&p| region.contains(p, tol))
            .min_by(|a, b| {
                let da = (a.0 - x).powi(2) + (a.1 - r).powi(2);
                let db = (b.0 - x).powi(2) + (b.1 - r).powi(2);
                da.total_cmp(&db)
            })
            .expect("nonempty set")
    };
    let pr = pr.max(0.0);
    let (ny, nz) = if r > 0.0 { (y * pr / r, z * pr / r) } else { (0.0, pr) };
    let dir = if z > 0.0 {
        perp / C64::new(z, 0.0)
    } else {
        // any unit vector orthogonal to a_hat
        let mut v = CVector::zeros(q.len());
        let k = (0..q.len()).min_by(|&i, &j| e[i].norm().total_cmp(&e[j].norm())).unwrap();
        v[k] = C64::new(1.0, 0.0);
        let v = &v - &e * vdot(&e, &v);
        let nv = vnorm(&v);
        v / C64::new(nv, 0.0)
    };
    &e * C64::new(px, ny) + dir * C64::new(nz, 0.0)
}

/// Multistart projected gradient for `min |w^H a|^2` over the ball-and-shell set.
pub fn ball_inner_pg<R: Rng>(w: &CVector, spec: &UncertaintySpec, starts: usize, rng: &mut R) -> (f64, CVector) {
    let UncertaintySpec::Ball { a_hat, eps, .. } = spec else { panic!("ball set expected") };
    let (lo, hi) = spec.shell();
    let n = a_hat.len();
    let inits: Vec<CVector> = (0..starts)
        .map(|_| {
            let dir = gaussian_vector(n, rng);
            let rad = eps.sqrt() * rng.random_range(0.0f64..1.0).sqrt();
            ball_projection(&(a_hat + &dir * C64::new(rad / vnorm(&dir), 0.0)), a_hat, *eps, lo, hi)
        })
        .collect();
    multistart_pg(w, inits, |q| ball_projection(q, a_hat, *eps, lo, hi))
}

/// `min |w^H a|^2` over a quadratic-form set in dimension 3, by reduction to the squared moduli
/// of `a` in the eigenbasis of the form.
///
/// For fixed moduli `rho_k` the phases can cancel `sum conj(v_k) rho_k e^{i phi_k}` unless one
/// term dominates, leaving `max(0, 2 max_k b_k rho_k - sum_k b_k rho_k)` with `b = |U^H w|`.
/// Writing `rho_k^2 = t f_k` with `f` on the simplex, the value scales with `t`, so for each `f`
/// the smallest admissible `t` is optimal; the remaining two-dimensional search runs on a
/// grid followed by pattern search around the best cells.
pub fn quad_inner_oracle(w: &CVector, spec: &UncertaintySpec) -> f64 {
    let (m, delta) = spec.upper_form().expect("quadratic set");
    let (lo, hi) = spec.shell();
    assert_eq!(m.dim(), 3, "oracle is written for dimension 3");
    let e = m.eigh().unwrap();
    let mu = e.values.clone();
    let b: Vec<f64> = (0..3).map(|k| vdot(&e.vector(k), w).norm()).collect();
    let value = |f: [f64; 3]| -> f64 {
        if f.iter().any(|&v| v < 0.0) {
            return f64::INFINITY;
        }
        let q: f64 = (0..3).map(|k| mu[k] * f[k]).sum();
        let (mut tl, mut th) = (lo, hi);
        if q > 0.0 {
            th = th.min(delta / q);
        } else if q < 0.0 {
            tl = tl.max(delta / q);
        } else if delta < 0.0 {
            return f64::INFINITY;
        }
        if tl > th * (1.0 + 1e-14) {
            return f64::INFINITY;
        }
        let s: Vec<f64> = (0..3).map(|k| b[k] * f[k].sqrt()).collect();
        let total: f64 = s.iter().sum();
        let top = s.iter().cloned().fold(0.0, f64::max);
        let g = (2.0 * top - total).max(0.0);
        tl * g * g
    };
    let simplex = |f1: f64, f2: f64| [f1, f2, 1.0 - f1 - f2];
    let k = 400usize;
    let mut cells: Vec<(f64, f64, f64)> = Vec::new();
    for i in 0..=k {
        for j in 0..=(k - i) {
            let (f1, f2) = (i as f64 / k as f64, j as f64 / k as f64);
            let v = value(simplex(f1, f2));
            if v.is_finite() {
                cells.push((v, f1, f2));
            }
        }
    }
    assert!(!cells.is_empty(), "empty set");
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));
    // the admissible region is cut by level lines of mu . f, along which minimizers often sit
    let (lx, ly) = (mu[1] - mu[2], -(mu[0] - mu[2]));
    let ln = (lx * lx + ly * ly).sqrt().max(f64::MIN_POSITIVE);
    let mut dirs = vec![(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0), (-1.0, -1.0)];
    dirs.extend([(lx / ln, ly / ln), (-lx / ln, -ly / ln)]);
    let mut best = f64::INFINITY;
    for &(v0, f1, f2) in cells.iter().take(24) {
        let (mut v, mut x, mut y) = (v0, f1, f2);
        let mut h = 1.0 / k as f64;
        while h > 1e-13 {
            let mut improved = false;
            for &(dx, dy) in &dirs {
                let (nx, ny) = ((x + dx * h).max(0.0), (y + dy * h).max(0.0));
                let nv = value(simplex(nx, ny));
                if nv < v {
                    (v, x, y, improved) = (nv, nx, ny, true);
                }
            }
            if !improved {
                h *= 0.5;
            }
        }
        best = best.min(v);
    }
    best
}

/// Adaptive random search for `max_w f(w)` over directions: half the budget on isotropic
/// samples, the rest on shrinking perturbations of the incumbent.
pub fn outer_search<R: Rng>(n: usize, samples: usize, rng: &mut R, f: impl Fn(&CVector) -> f64) -> (f64, CVector) {
    let mut best = (f64::NEG_INFINITY, CVector::zeros(n));
    let global = samples / 2;
    for _ in 0..global {
        let w = gaussian_vector(n, rng);
        let v = f(&w);
        if v > best.0 {
            best = (v, w);
        }
    }
    let local = samples - global;
    let (r0, r1) = (0.3f64, 1e-6f64);
    for s in 0..local {
        let rad = r0 * (r1 / r0).powf(s as f64 / local as f64);
        let base = &best.1 / C64::new(vnorm(&best.1), 0.0);
        let w = &base + gaussian_vector(n, rng) * C64::new(rad, 0.0);
        let v = f(&w);
        if v > best.0 {
            best = (v, w);
        }
    }
    best
}

/// Random ball-and-shell set in dimension `n` around a ULA steering vector.
pub fn random_ball_spec<R: Rng>(n: usize, rng: &mut R) -> UncertaintySpec {
    let nf = n as f64;
    let a_hat = steering(&ArrayGeometry::ula(n), rng.random_range(-60.0..60.0));
    UncertaintySpec::ball(
        a_hat,
        rng.random_range(0.1..0.6) * nf,
        rng.random_range(0.05..0.4) * nf,
        rng.random_range(0.05..0.4) * nf,
    )
    .unwrap()
}

/// `w` near the set center, so that the worst-case gain stays positive.
pub fn positive_ball_w<R: Rng>(spec: &UncertaintySpec, rng: &mut R) -> CVector {
    let UncertaintySpec::Ball { a_hat, eps, .. } = spec else { panic!("ball set expected") };
    let (lo, hi) = spec.shell();
    loop {
        let w = a_hat + gaussian_vector(a_hat.len(), rng) * C64::new(0.25, 0.0);
        if ball_inner_exact(&w, a_hat, *eps, lo, hi) > 1e-2 * w.norm_squared() {
            return w;
        }
    }
}

/// Random quadratic-form set in dimension 3 together with a `w` whose worst-case gain is positive:
/// `w` leans on the direction the set favors and the threshold keeps `a ⊥ w` out of the set.
pub fn random_quad_instance<R: Rng>(sign: QuadSign, rng: &mut R) -> (UncertaintySpec, CVector) {
    let n = 3usize;
    let nf = n as f64;
    loop {
        let g = CVector::from_fn(n * n, |_, _| C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)));
        let b = rabf::hermlinalg::CMatrix::from_column_slice(n, n, g.as_slice());
        let c = HermitianMatrix::new(&b * b.adjoint()).unwrap();
        let c = &c.scale(1.0 / c.max_eig().unwrap()) + &HermitianMatrix::identity(n).scale(0.05);
        let (eta1, eta2) = (rng.random_range(0.05..0.4) * nf, rng.random_range(0.05..0.4) * nf);
        let lo = nf - eta1;
        // upper form (M, d); for the lower-bound set M = -C
        let m = match sign {
            QuadSign::Upper => c.clone(),
            QuadSign::Lower => c.scale(-1.0),
        };
        let e = m.eigh().unwrap();
        let (mu2, mu3) = (e.values[1], e.values[2]);
        let lower_end = if mu3 >= 0.0 { mu3 * lo } else { mu3 * (nf + eta2) };
        let excl = if mu2 >= 0.0 { mu2 * lo } else { mu2 * (nf + eta2) };
        if !(excl > lower_end) {
            continue;
        }
        let d = lower_end + rng.random_range(0.2..0.8) * (excl - lower_end);
        let spec = match sign {
            QuadSign::Upper => UncertaintySpec::quad(c, d, eta1, eta2, QuadSign::Upper),
            QuadSign::Lower => UncertaintySpec::quad(c, -d, eta1, eta2, QuadSign::Lower),
        };
        let Ok(spec) = spec else { continue };
        let w = e.vector(2) + gaussian_vector(n, rng) * C64::new(0.2, 0.0);
        if quad_inner_oracle(&w, &spec) > 1e-3 * w.norm_squared() {
            return (spec, w);
        }
    }
}

/// Largest root-bracketing bisection on a decreasing function over `[a, b]`.
fn bisect(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    while (b - a) > 1e-15 * a.abs().max(b.abs()).max(1e-300) {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if f(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Euclidean projection onto a quadratic-form set, in the eigenbasis `(mu, u)` of its upper
/// form `a^H M a <= delta`.
///
/// Phases are kept, and in the squared moduli `s_k` the set is the polytope
/// `mu . s <= delta, lo <= sum s <= hi, s >= 0` while `sum (sqrt(s_k) - p_k)^2` is convex,
/// so the projection is the nearest of the stationary points of the few active-set cases.
/// Dimension 3 only.
pub struct QuadProjector {
    mu: Vec<f64>,
    u: rabf::hermlinalg::CMatrix,
    delta: f64,
    lo: f64,
    hi: f64,
}

impl QuadProjector {
    pub fn new(spec: &UncertaintySpec) -> Self {
        let (m, delta) = spec.upper_form().expect("quadratic set");
        assert_eq!(m.dim(), 3, "projection oracle is written for dimension 3");
        let (lo, hi) = spec.shell();
        let e = m.eigh().unwrap();
        Self { mu: e.values, u: e.vectors, delta, lo, hi }
    }

    fn feasible(&self, s: &[f64]) -> bool {
        let tot: f64 = s.iter().sum();
        let q: f64 = s.iter().zip(&self.mu).map(|(a, b)| a * b).sum();
        let tol = 1e-12 * (1.0 + self.hi);
        q <= self.delta + tol * (1.0 + self.mu.iter().fold(0.0f64, |a, b| a.max(b.abs()))) && tot >= self.lo - tol && tot <= self.hi + tol
    }

    /// Squared moduli `(p_k / (1 + lambda mu_k + nu))^2`.
    fn moduli(&self, p: &[f64], lambda: f64, nu: f64) -> Vec<f64> {
        p.iter().zip(&self.mu).map(|(&pk, &m)| (pk / (1.0 + lambda * m + nu)).powi(2)).collect()
    }

    /// Minimizer of the distance over `{s >= 0, sum s = total, mu . s = delta}` (dimension 3).
    fn segment_minimizer(&self, p2: &[f64], total: f64) -> Option<Vec<f64>> {
        let m = &self.mu;
        let d = [m[1] - m[2], m[2] - m[0], m[0] - m[1]];
        let (s1, sm, smm) = (3.0, m.iter().sum::<f64>(), m.iter().map(|x| x * x).sum::<f64>());
        let det = s1 * smm - sm * sm;
        if det <= 1e-14 * smm.max(1.0) {
            return None;
        }
        // least-norm point of the two planes, then the admissible range of the line parameter
        let a = (smm * total - sm * self.delta) / det;
        let b = (s1 * self.delta - sm * total) / det;
        let s0: Vec<f64> = m.iter().map(|mk| a + b * mk).collect();
        let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
        for k in 0..3 {
            if d[k].abs() < 1e-300 {
                if s0[k] < 0.0 {
                    return None;
                }
            } else if d[k] > 0.0 {
                t0 = t0.max(-s0[k] / d[k]);
            } else {
                t1 = t1.min(-s0[k] / d[k]);
            }
        }
        if t0 > t1 {
            return None;
        }
        let at = |t: f64| -> Vec<f64> { (0..3).map(|k| (s0[k] + t * d[k]).max(0.0)).collect() };
        let dist = |t: f64| at(t).iter().zip(p2).map(|(x, q)| (x.sqrt() - q.sqrt()).powi(2)).sum::<f64>();
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let (mut lo, mut hi) = (t0, t1);
        let (mut x1, mut x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
        let (mut f1, mut f2) = (dist(x1), dist(x2));
        while hi - lo > 1e-15 * (1.0 + lo.abs().max(hi.abs())) {
            if f1 <= f2 {
                hi = x2;
                (x2, f2) = (x1, f1);
                x1 = hi - g * (hi - lo);
                f1 = dist(x1);
            } else {
                lo = x1;
                (x1, f1) = (x2, f2);
                x2 = lo + g * (hi - lo);
                f2 = dist(x2);
            }
            if x1 >= x2 {
                break;
            }
        }
        Some(at(0.5 * (lo + hi)))
    }

    /// Stationary points of the active-set cases. By convexity a feasible point with correctly
    /// signed multipliers is the projection, so the first such point ends the enumeration.
    fn candidates(&self, p: &[f64]) -> Vec<Vec<f64>> {
        let p2: Vec<f64> = p.iter().map(|x| x * x).collect();
        let norm2: f64 = p2.iter().sum();
        if self.feasible(&p2) {
            return vec![p2];
        }
        let mut out = Vec::new();
        let total = if norm2 > self.hi { self.hi } else { self.lo };
        if norm2 > 0.0 && (norm2 > self.hi || norm2 < self.lo) {
            let s: Vec<f64> = p2.iter().map(|x| x * total / norm2).collect();
            if self.feasible(&s) {
                return vec![s];
            }
            out.push(s);
        }
        let mu_min = self.mu.iter().cloned().fold(f64::INFINITY, f64::min);
        let lam_max = if mu_min < 0.0 { -1.0 / mu_min } else { 1e12 };
        let quad = |s: &[f64]| s.iter().zip(&self.mu).map(|(a, b)| a * b).sum::<f64>() - self.delta;
        // only the quadratic constraint active
        let f = |l: f64| quad(&self.moduli(p, l, 0.0));
        if f(0.0) > 0.0 {
            let top = lam_max * (1.0 - 1e-15);
            if f(top) < 0.0 {
                let s = self.moduli(p, bisect(&f, 0.0, top), 0.0);
                if self.feasible(&s) {
                    return vec![s];
                }
                out.push(s);
            }
        }
        // both active: the face is a segment of the plane pair, and the distance is convex on it
        for total in [self.lo, self.hi] {
            if let Some(seg) = self.segment_minimizer(&p2, total) {
                out.push(seg);
            }
        }
        out
    }

    pub fn project(&self, q: &CVector) -> CVector {
        let c = self.u.adjoint() * q;
        let p: Vec<f64> = c.iter().map(|z| z.norm()).collect();
        let best = self
            .candidates(&p)
            .into_iter()
            .filter(|s| self.feasible(s))
            .min_by(|a, b| {
                let d = |s: &Vec<f64>| s.iter().zip(&p).map(|(x, y)| (x.sqrt() - y).powi(2)).sum::<f64>();
                d(a).total_cmp(&d(b))
            })
            .expect("projection candidate");
        let coeff = CVector::from_fn(p.len(), |k, _| {
            let phase = if p[k] > 0.0 { c[k] / C64::new(p[k], 0.0) } else { C64::new(1.0, 0.0) };
            phase * C64::new(best[k].sqrt(), 0.0)
        });
        &self.u * coeff
    }
}

/// Multistart projected gradient for `min |w^H a|^2` over a quadratic-form set.
pub fn quad_inner_pg<R: Rng>(w: &CVector, spec: &UncertaintySpec, starts: usize, rng: &mut R) -> (f64, CVector) {
    let proj = QuadProjector::new(spec);
    let n = w.len();
    let (lo, hi) = spec.shell();
    let inits: Vec<CVector> = (0..starts)
        .map(|_| {
            let g = gaussian_vector(n, rng);
            let r = rng.random_range(lo..=hi).sqrt();
            proj.project(&(&g * C64::new(r / vnorm(&g), 0.0)))
        })
        .collect();
    multistart_pg(w, inits, |q| proj.project(q))
}

/// Projected gradient on `|w^H a|^2` with step `1/L`: every start runs a short budget, then
/// the best few continue until the iterates stop moving.
pub fn multistart_pg(w: &CVector, inits: Vec<CVector>, project: impl Fn(&CVector) -> CVector) -> (f64, CVector) {
    let step = C64::new(0.5 / w.norm_squared(), 0.0);
    let run = |mut a: CVector, iters: usize| {
        for _ in 0..iters {
            let next = project(&(&a - w * vdot(w, &a) * step));
            let moved = vnorm(&(&next - &a));
            a = next;
            if moved < 1e-13 {
                break;
            }
        }
        (vdot(w, &a).norm_sqr(), a)
    };
    let mut short: Vec<(f64, CVector)> = inits.into_iter().map(|a| run(a, 100)).collect();
    short.sort_by(|x, y| x.0.total_cmp(&y.0));
    short
        .into_iter()
        .take(5)
        .map(|(_, a)| run(a, 20_000))
        .min_by(|x, y| x.0.total_cmp(&y.0))
        .expect("at least one start")
}
