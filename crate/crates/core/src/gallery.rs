//! Test problems with known solutions.
//!
//! Affine instances cover the well-posed and ill-conditioned linear cases; the
//! autoconvolution and Feigenbaum-like entries are nonlinear. The latter two
//! are reconstructions of the problem types used in practice for this
//! method, not reproductions of any particular published discretization.
//!
//! Labels accepted by [`lookup`]: `identity-N`, `hilbert-N`, `rank-deficient-N`,
//! `autoconvolution-N`, `feigenbaum-N` (N in 4, 6, 8, 10), `compliant-affine-N`,
//! `compliant-nonlinear-N`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::flow::{initial_inverse, B0Mode};
use crate::hilbert::{op_norm, HOperator, HVector};
use crate::problem::{estimate_bounds, BallBounds, NonlinearProblem};
use crate::schedule::{Regularization, Schedule};
use crate::theory::{canonical_r, certify, lambda0_norm, solve_source, Certificate, SOURCE_TOL};

/// How a problem's data enters `F`; used to rebuild it with perturbed data.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// `F(x) = A (x - anchor)`.
    Affine { matrix: DMatrix<f64>, anchor: DVector<f64> },
    /// `F(x) = A (x - anchor) + kappa (x - anchor)^2` (componentwise square).
    QuadraticPerturbed { matrix: DMatrix<f64>, anchor: DVector<f64>, kappa: f64 },
    /// `F(x)_i = ds sum_{j<=i} x_j x_{i-j+1} - y_i`.
    Autoconvolution { data: DVector<f64> },
    FeigenbaumLike { n: usize },
}

#[derive(Debug, Clone)]
pub struct GalleryEntry {
    pub problem: NonlinearProblem,
    pub xhat: HVector,
    pub default_x0: HVector,
    pub notes: String,
    pub family: Family,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AffineKind {
    Identity,
    HilbertMatrix,
    /// `diag(1, ..., 1, 0)`.
    RankDeficient,
}

fn affine_problem(label: &str, matrix: DMatrix<f64>, anchor: DVector<f64>) -> Result<NonlinearProblem> {
    let n = matrix.nrows();
    let a = matrix.clone();
    Ok(NonlinearProblem::new(label, n, move |x| &a * (x - &anchor))?.with_jacobian(move |_| matrix.clone()))
}

fn quadratic_problem(label: &str, matrix: DMatrix<f64>, anchor: DVector<f64>, kappa: f64) -> Result<NonlinearProblem> {
    let n = matrix.nrows();
    let (a, c) = (matrix.clone(), anchor.clone());
    Ok(NonlinearProblem::new(label, n, move |x| {
        let d = x - &c;
        &a * &d + d.map(|v| kappa * v * v)
    })?
    .with_jacobian(move |x| {
        let d = x - &anchor;
        &matrix + DMatrix::from_diagonal(&d.map(|v| 2.0 * kappa * v))
    }))
}

pub fn hilbert_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| 1.0 / (i + j + 1) as f64)
}

fn smooth_profile(n: usize) -> DVector<f64> {
    DVector::from_fn(n, |i, _| (std::f64::consts::PI * (i + 1) as f64 / (n + 1) as f64).sin())
}

/// `F(x) = A (x - xhat)` with `A` chosen by `kind`. The default start is
/// `xhat - A*A w` with `w = 0.1 (1, ..., 1)`, so it satisfies the source
/// condition by construction.
pub fn make_affine(n: usize, kind: AffineKind, xhat: &HVector) -> Result<GalleryEntry> {
    if n == 0 {
        return Err(Error::Empty);
    }
    if xhat.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: xhat.dim() });
    }
    let (matrix, name, notes) = match kind {
        AffineKind::Identity => (DMatrix::identity(n, n), "identity", "F(x) = x - xhat; N1 = 1, N2 = 0".to_string()),
        AffineKind::HilbertMatrix => (
            hilbert_matrix(n),
            "hilbert",
            format!("F(x) = H (x - xhat), H the {n}x{n} Hilbert matrix; severely ill-conditioned for n >= 8"),
        ),
        AffineKind::RankDeficient => {
            let mut d = DVector::from_element(n, 1.0);
            d[n - 1] = 0.0;
            (
                DMatrix::from_diagonal(&d),
                "rank-deficient",
                "F(x) = diag(1,...,1,0)(x - xhat); xhat - x0 is in range(A*A) iff its last component is 0".to_string(),
            )
        }
    };
    let anchor = xhat.clone_owned();
    let w = DVector::from_element(n, 0.1);
    let default_x0 = HVector::from_dvector(&anchor - matrix.tr_mul(&matrix) * w)?;
    let problem = affine_problem(&format!("{name}-{n}"), matrix.clone(), anchor.clone())?
        .with_known_solution(xhat.clone())?;
    Ok(GalleryEntry { problem, xhat: xhat.clone(), default_x0, notes, family: Family::Affine { matrix, anchor } })
}

/// Discrete autoconvolution on the grid `s_i = i/n`, `i = 1..n`:
/// `(x * x)_i = ds sum_{j=1}^{i} x_j x_{i-j+1}`, `ds = 1/n`.
pub fn autoconvolve(x: &DVector<f64>) -> DVector<f64> {
    let n = x.len();
    let ds = 1.0 / n as f64;
    DVector::from_fn(n, |i, _| ds * (0..=i).map(|j| x[j] * x[i - j]).sum::<f64>())
}

fn autoconvolution_problem(label: &str, data: DVector<f64>) -> Result<NonlinearProblem> {
    let n = data.len();
    let ds = 1.0 / n as f64;
    Ok(NonlinearProblem::new(label, n, move |x| autoconvolve(x) - &data)?.with_jacobian(move |x| {
        DMatrix::from_fn(n, n, |i, k| if k <= i { 2.0 * ds * x[i - k] } else { 0.0 })
    }))
}

/// Autoconvolution equation with exact data from `xhat(s) = 1 + s`.
pub fn make_autoconvolution(n: usize) -> Result<GalleryEntry> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("autoconvolution needs n >= 2, got {n}")));
    }
    let grid = DVector::from_fn(n, |i, _| (i + 1) as f64 / n as f64);
    let xhat = grid.map(|s| 1.0 + s);
    let data = autoconvolve(&xhat);
    let label = format!("autoconvolution-{n}");
    let problem = autoconvolution_problem(&label, data.clone())?.with_known_solution(HVector::from_dvector(xhat.clone())?)?;
    Ok(GalleryEntry {
        problem,
        xhat: HVector::from_dvector(xhat)?,
        default_x0: HVector::from_dvector(DVector::from_element(n, 1.5))?,
        notes: "bilinear; the solution is determined up to sign, x0 = 1.5 selects the positive branch".into(),
        family: Family::Autoconvolution { data },
    })
}

const FEIGENBAUM_REFERENCE: [(usize, &str); 4] = [
    (4, include_str!("../data/feigenbaum_n4.txt")),
    (6, include_str!("../data/feigenbaum_n6.txt")),
    (8, include_str!("../data/feigenbaum_n8.txt")),
    (10, include_str!("../data/feigenbaum_n10.txt")),
];

/// Stored reference coefficients for the Feigenbaum-like collocation problem.
pub fn feigenbaum_reference(n: usize) -> Result<Vec<f64>> {
    let text = FEIGENBAUM_REFERENCE
        .iter()
        .find(|(m, _)| *m == n)
        .map(|(_, t)| *t)
        .ok_or_else(|| Error::InvalidArgument(format!("no stored Feigenbaum reference for n = {n}")))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| l.parse::<f64>().map_err(|e| Error::InvalidArgument(format!("bad reference value `{l}`: {e}"))))
        .collect()
}

/// Chebyshev points of the first kind mapped to `[0, 1]`.
pub fn chebyshev_nodes(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|i| 0.5 * (1.0 + ((2 * i - 1) as f64 * std::f64::consts::PI / (2 * n) as f64).cos()))
        .collect()
}

/// `g(z) = 1 + sum_j c_j z^{2j}` and `g'(z)`.
fn even_poly(c: &DVector<f64>, z: f64) -> (f64, f64) {
    let z2 = z * z;
    let mut value = 1.0;
    let mut deriv = 0.0;
    let mut pow = 1.0; // z^{2(j-1)}
    for (j, cj) in c.iter().enumerate() {
        let k = 2 * (j + 1);
        deriv += cj * k as f64 * pow * z;
        pow *= z2;
        value += cj * pow;
    }
    (value, deriv)
}

fn feigenbaum_residual(c: &DVector<f64>, nodes: &[f64]) -> DVector<f64> {
    let (lam, _) = even_poly(c, 1.0);
    DVector::from_iterator(
        nodes.len(),
        nodes.iter().map(|&s| {
            let (gs, _) = even_poly(c, s);
            let (q, _) = even_poly(c, lam * s);
            let (pv, _) = even_poly(c, q);
            gs - pv / lam
        }),
    )
}

fn feigenbaum_jacobian(c: &DVector<f64>, nodes: &[f64]) -> DMatrix<f64> {
    let n = c.len();
    let (lam, _) = even_poly(c, 1.0);
    let mut jac = DMatrix::zeros(nodes.len(), n);
    for (i, &s) in nodes.iter().enumerate() {
        let u = lam * s;
        let (q, gu) = even_poly(c, u);
        let (pv, gq) = even_poly(c, q);
        for j in 0..n {
            let k = 2 * (j + 1) as i32;
            // dlam/dc_j = 1
            let dq = u.powi(k) + gu * s;
            let dp = q.powi(k) + gq * dq;
            jac[(i, j)] = s.powi(k) - dp / lam + pv / (lam * lam);
        }
    }
    jac
}

/// Collocation form of the renormalization fixed-point equation
/// `g(s) = g(g(lam s)) / lam`, `lam = g(1)`, `g(0) = 1`, with even polynomial
/// `g(s) = 1 + sum_{j=1}^{n} c_j s^{2j}` collocated at `n` Chebyshev points of
/// `[0, 1]`. The unknowns are the coefficients `c`.
pub fn make_feigenbaum_like(n: usize) -> Result<GalleryEntry> {
    if n < 4 {
        return Err(Error::InvalidArgument(format!("Feigenbaum-like problem needs n >= 4, got {n}")));
    }
    let reference = DVector::from_vec(feigenbaum_reference(n)?);
    let nodes = chebyshev_nodes(n);
    let nodes_j = nodes.clone();
    let label = format!("feigenbaum-{n}");
    let problem = NonlinearProblem::new(&label, n, move |c| feigenbaum_residual(c, &nodes))?
        .with_jacobian(move |c| feigenbaum_jacobian(c, &nodes_j))
        .with_known_solution(HVector::from_dvector(reference.clone())?)?;
    let mut x0 = DVector::zeros(n);
    x0[0] = -1.5;
    Ok(GalleryEntry {
        problem,
        xhat: HVector::from_dvector(reference)?,
        default_x0: HVector::from_dvector(x0)?,
        notes: "reference coefficients from an offline damped-Newton bootstrap (data/bootstrap_feigenbaum.py); \
                x0 = quadratic map 1 - 1.5 s^2"
            .into(),
        family: Family::FeigenbaumLike { n },
    })
}

impl GalleryEntry {
    /// The same problem with its data term perturbed by `delta` times a fixed
    /// standard-normal vector drawn from `seed`. The known solution is *not*
    /// attached to the result (it no longer solves the noisy equation).
    pub fn noisy_problem(&self, delta: f64, seed: u64) -> Result<NonlinearProblem> {
        if delta < 0.0 || !delta.is_finite() {
            return Err(Error::InvalidArgument(format!("noise level must be nonnegative, got {delta}")));
        }
        let n = self.problem.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = DVector::from_fn(n, |_, _| delta * rng.sample::<f64, _>(StandardNormal));
        let label = format!("{}+noise({delta:e})", self.problem.label);
        match &self.family {
            Family::Affine { matrix, anchor } => affine_problem(&label, matrix.clone(), anchor + noise),
            Family::QuadraticPerturbed { matrix, anchor, kappa } => {
                quadratic_problem(&label, matrix.clone(), anchor + noise, *kappa)
            }
            Family::Autoconvolution { data } => autoconvolution_problem(&label, data + noise),
            Family::FeigenbaumLike { .. } => {
                Err(Error::InvalidArgument("Feigenbaum-like problem has no data term to perturb".into()))
            }
        }
    }
}

/// Parameters of the geometric search in [`compliant_search`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompliantSearch {
    pub start_eps0: f64,
    /// Initial `||w||` (source-direction offsets) or `||x0 - xhat||` (direct offsets).
    pub start_offset: f64,
    /// Target decay constant of the power-law schedule (`a = 1`, `b = 1/c0`).
    pub b: f64,
    pub max_halvings: usize,
    pub samples: usize,
    /// Lower floor for `N2`. Any positive number is a valid bound on a zero
    /// second derivative; without it affine problems admit no finite `R`.
    pub n2_floor: f64,
}

impl Default for CompliantSearch {
    fn default() -> Self {
        Self { start_eps0: 0.1, start_offset: 0.01, b: 0.02, max_halvings: 60, samples: 32, n2_floor: 0.5 }
    }
}

/// Direction along which the start point is moved away from `xhat`.
#[derive(Debug, Clone)]
pub enum Offset {
    /// `x0 = xhat - F'(xhat)* F'(xhat) (scale w)`, source condition by construction.
    Source(HVector),
    /// `x0 = xhat + scale d`.
    Direct(HVector),
}

#[derive(Debug, Clone)]
pub struct CompliantInstance {
    pub entry: GalleryEntry,
    pub schedule: Schedule,
    pub b0: HOperator,
    pub r: f64,
    pub bounds: BallBounds,
    pub certificate: Certificate,
    pub halvings: usize,
}

/// Sampled bounds on a ball around `xhat` large enough to contain
/// `U(xhat, R eps0)`, together with the canonical `R` they induce. `R`
/// depends on the bounds, so the sampling radius (initially `||x0 - xhat||`)
/// is grown until it covers `R eps0`. `N2` is floored at `n2_floor`.
#[allow(clippy::too_many_arguments)]
pub fn settle_bounds(
    p: &NonlinearProblem,
    xhat: &HVector,
    x0: &HVector,
    s: &dyn Regularization,
    b0: &HOperator,
    samples: usize,
    n2_floor: f64,
    seed: u64,
) -> Result<(BallBounds, f64)> {
    let eps0 = s.eps(0.0)?;
    let b0_norm = op_norm(b0)?;
    let lambda0 = lambda0_norm(b0, eps0, p, xhat)?;
    let mut radius = (&**x0 - &**xhat).norm().max(1e-6);
    for _ in 0..20 {
        let mut bounds = estimate_bounds(p, xhat, radius, samples, seed)?;
        bounds.n2 = bounds.n2.max(n2_floor);
        let r = canonical_r(bounds.n1, bounds.n2, s.b_constant(), eps0, b0_norm, lambda0)?;
        if r * eps0 <= radius {
            return Ok((bounds, r));
        }
        radius = r * eps0;
    }
    Err(Error::NoCompliantConfiguration("bound radius did not settle".into()))
}

/// Finds a start point and schedule for which every certificate check
/// passes, halving `eps(0)` (when `k + b eps0 < 1` fails or `R` cannot be
/// formed) or the start offset (otherwise) up to `max_halvings` times.
/// `B(0)` is the exact regularized inverse at `x0`; `R` is the canonical radius.
pub fn compliant_search(
    entry: &GalleryEntry,
    offset: &Offset,
    search: &CompliantSearch,
    seed: u64,
) -> Result<CompliantInstance> {
    let p = &entry.problem;
    let xhat = &entry.xhat;
    let (dir, through_gram) = match offset {
        Offset::Source(w) => (w, true),
        Offset::Direct(d) => (d, false),
    };
    if dir.dim() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), found: dir.dim() });
    }
    let dir_unit = if dir.norm() > 0.0 { &**dir / dir.norm() } else { (**dir).clone() };
    let j = p.jacobian_raw(xhat)?;
    let gram = j.tr_mul(&j);

    // range membership of x0 - xhat does not depend on eps0 or the offset scale
    let probe = if through_gram { -(&gram * &dir_unit) } else { dir_unit.clone() };
    let src = solve_source(p, xhat, &HVector::from_dvector(&**xhat + probe)?, SOURCE_TOL)?;
    if !src.passes {
        return Err(Error::NoCompliantConfiguration(format!(
            "{}: source condition fails (residual {:e}); shrinking cannot repair it",
            p.label, src.residual
        )));
    }

    let mut eps0 = search.start_eps0;
    let mut scale = search.start_offset;
    let mut last_reason = String::from("not attempted");
    for halvings in 0..=search.max_halvings {
        let shift = if through_gram { -(&gram * &dir_unit) * scale } else { &dir_unit * scale };
        let x0 = HVector::from_dvector(&**xhat + shift)?;
        let c0 = 1.0 / search.b;
        let schedule = Schedule::new(c0, c0 / eps0, 1.0)?;
        let b0 = match initial_inverse(p, &x0, eps0, B0Mode::ExactInverse) {
            Ok(b0) => b0,
            Err(Error::NotPositiveDefinite { .. }) => {
                return Err(Error::NoCompliantConfiguration(format!(
                    "{} after {halvings} halvings: J*J + eps0 I is numerically singular at eps0 = {eps0:e} ({last_reason})",
                    p.label
                )));
            }
            Err(e) => return Err(e),
        };

        let (bounds, r) = match settle_bounds(p, xhat, &x0, &schedule, &b0, search.samples, search.n2_floor, seed) {
            Ok(v) => v,
            Err(e) => {
                last_reason = e.to_string();
                eps0 *= 0.5;
                continue;
            }
        };
        let cert = certify(p, xhat, &x0, &schedule, &b0, &bounds, r)?;
        if cert.overall {
            let mut entry = entry.clone();
            entry.default_x0 = x0;
            entry.problem.label = format!("compliant-{}", entry.problem.label);
            return Ok(CompliantInstance { entry, schedule, b0, r, bounds, certificate: cert, halvings });
        }
        if !cert.checks.source_condition {
            return Err(Error::NoCompliantConfiguration(format!(
                "source condition fails (residual {:e}); shrinking cannot repair it",
                cert.source_residual
            )));
        }
        if !cert.checks.k_below_one {
            last_reason = "k + b eps0 >= 1".into();
            eps0 *= 0.5;
        } else {
            last_reason = format!("checks {:?}", cert.checks);
            scale *= 0.5;
        }
    }
    Err(Error::NoCompliantConfiguration(format!(
        "{} after {} halvings: {last_reason}",
        p.label, search.max_halvings
    )))
}

fn random_well_conditioned(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let scale = 0.25 / (n as f64).sqrt();
    DMatrix::identity(n, n) + DMatrix::from_fn(n, n, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

fn random_vector(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random::<f64>() * 2.0 - 1.0)
}

/// Random well-conditioned affine instance that passes the certificate
/// (label `compliant-affine-N`).
pub fn compliant_instance(n: usize, seed: u64) -> Result<CompliantInstance> {
    if n == 0 || n > 16 {
        return Err(Error::InvalidArgument(format!("compliant instances need 1 <= n <= 16, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let matrix = random_well_conditioned(n, &mut rng);
    let xhat = random_vector(n, &mut rng);
    let w = HVector::from_dvector(random_vector(n, &mut rng))?;
    let problem =
        affine_problem(&format!("affine-{n}"), matrix.clone(), xhat.clone())?.with_known_solution(HVector::from_dvector(xhat.clone())?)?;
    let entry = GalleryEntry {
        problem,
        xhat: HVector::from_dvector(xhat.clone())?,
        default_x0: HVector::from_dvector(xhat.clone())?,
        notes: format!("random well-conditioned affine instance, seed {seed}"),
        family: Family::Affine { matrix, anchor: xhat },
    };
    compliant_search(&entry, &Offset::Source(w), &CompliantSearch::default(), seed)
}

/// Mildly nonlinear variant `F(x) = A (x - xhat) + 0.5 (x - xhat)^2`
/// (label `compliant-nonlinear-N`).
pub fn compliant_nonlinear_instance(n: usize, seed: u64) -> Result<CompliantInstance> {
    if n == 0 || n > 16 {
        return Err(Error::InvalidArgument(format!("compliant instances need 1 <= n <= 16, got {n}")));
    }
    let kappa = 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let matrix = random_well_conditioned(n, &mut rng);
    let xhat = random_vector(n, &mut rng);
    let w = HVector::from_dvector(random_vector(n, &mut rng))?;
    let problem = quadratic_problem(&format!("nonlinear-{n}"), matrix.clone(), xhat.clone(), kappa)?
        .with_known_solution(HVector::from_dvector(xhat.clone())?)?;
    let entry = GalleryEntry {
        problem,
        xhat: HVector::from_dvector(xhat.clone())?,
        default_x0: HVector::from_dvector(xhat.clone())?,
        notes: format!("random affine plus {kappa} (x - xhat)^2, seed {seed}"),
        family: Family::QuadraticPerturbed { matrix, anchor: xhat, kappa },
    };
    compliant_search(&entry, &Offset::Source(w), &CompliantSearch::default(), seed)
}

/// Resolves a gallery label (see the module docs). `seed` only affects the
/// randomized `compliant-*` entries.
pub fn lookup(label: &str, seed: u64) -> Result<GalleryEntry> {
    let unknown = || Error::UnknownProblem(label.to_string());
    let (kind, n) = label.rsplit_once('-').ok_or_else(unknown)?;
    let n: usize = n.parse().map_err(|_| unknown())?;
    if n == 0 {
        return Err(unknown());
    }
    let xhat = || HVector::from_dvector(smooth_profile(n));
    match kind {
        "identity" => make_affine(n, AffineKind::Identity, &xhat()?),
        "hilbert" => make_affine(n, AffineKind::HilbertMatrix, &xhat()?),
        "rank-deficient" => make_affine(n, AffineKind::RankDeficient, &xhat()?),
        "autoconvolution" => make_autoconvolution(n),
        "feigenbaum" => make_feigenbaum_like(n),
        "compliant-affine" => Ok(compliant_instance(n, seed)?.entry),
        "compliant-nonlinear" => Ok(compliant_nonlinear_instance(n, seed)?.entry),
        _ => Err(unknown()),
    }
}

/// The full certified instance behind a `compliant-*` label, `None` for
/// other labels.
pub fn lookup_compliant(label: &str, seed: u64) -> Result<Option<CompliantInstance>> {
    let unknown = || Error::UnknownProblem(label.to_string());
    let Some((kind, n)) = label.rsplit_once('-') else {
        return Ok(None);
    };
    let build: fn(usize, u64) -> Result<CompliantInstance> = match kind {
        "compliant-affine" => compliant_instance,
        "compliant-nonlinear" => compliant_nonlinear_instance,
        _ => return Ok(None),
    };
    let n: usize = n.parse().map_err(|_| unknown())?;
    build(n, seed).map(Some)
}

/// 2-norm condition number `s_max / s_min` from the singular values of `a`
/// (not from `A* A`, whose small eigenvalues drown in rounding).
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.singular_values();
    sv.max() / sv.min()
}
