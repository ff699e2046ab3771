"""Lyapunov-Schmidt engine: projected linear solves, the contraction
iteration for the correction, coercivity estimates, and the multiplier.

Formulation
-----------
The correction phi in E_h (symmetric fields H^1-orthogonal to dW/dh,
equivalently L^2-orthogonal to the degenerate direction phi*) satisfies

    -Lap(phi) + V_eps phi - p W^{p-1} phi = -g(phi)   tested against E_h,

where g is the ansatz defect.  Testing against E_h means the strong residual
is allowed a component along phi*; the discrete solve therefore deflates
phi* on both sides of the symmetric stencil operator and runs MINRES with a
fast (-Lap+1)^{-1} preconditioner (DST-I diagonalization on the Dirichlet
interior).  Riesz representations of L^2 functionals use the same
(-Lap+1)^{-1} solve.

Note the sign: substituting W + phi into the equation gives
``apply_L(phi) = -g(phi)``.  The defect g is reported with its conventional
sign (see :func:`g_eps`); the iteration solves with ``-g``.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import fft
from scipy.sparse.linalg import LinearOperator, minres

from . import symmetry
from .field import (
    AnsatzConfig,
    Field,
    GeometryError,
    Grid,
    PotentialSpec,
    assemble_bumps,
    assemble_W,
    dW_dh,
    inner_H1,
    norm_H1,
    phi_star,
    potential_field,
    project_Eh,
    sum_bump_powers,
)
from .groundstate import RadialProfile, eval_U0


class SolverError(RuntimeError):
    """A linear or eigen iteration failed to reach its tolerance."""


def pow_signed(x: np.ndarray, q: float) -> np.ndarray:
    """Signed power |x|^(q-1) x, the odd extension of x^q."""
    return np.sign(x) * np.abs(x) ** q


class HelmholtzSolver:
    """(-Lap + 1) with homogeneous Dirichlet data, diagonalized by DST-I."""

    def __init__(self, grid: Grid):
        self.grid = grid
        m = grid.n - 2
        j = np.arange(1, m + 1)
        lam = (2.0 - 2.0 * np.cos(np.pi * j / (m + 1))) / grid.delta**2
        self._sym = 1.0 + lam[:, None, None] + lam[None, :, None] + lam[None, None, :]
        self._norm = (2.0 * (m + 1)) ** 3
        self.m = m

    def solve_interior(self, f: np.ndarray) -> np.ndarray:
        """u with (-Lap+1) u = f on the interior block."""
        coef = fft.dstn(f, type=1) / self._sym
        return fft.dstn(coef, type=1) / self._norm

    def apply_interior(self, u: np.ndarray) -> np.ndarray:
        """(-Lap+1) u on the interior block (zero extension outside)."""
        m = self.m
        out = (6.0 / self.grid.delta**2 + 1.0) * u
        s = 1.0 / self.grid.delta**2
        out[1:, :, :] -= s * u[:-1, :, :]
        out[:-1, :, :] -= s * u[1:, :, :]
        out[:, 1:, :] -= s * u[:, :-1, :]
        out[:, :-1, :] -= s * u[:, 1:, :]
        out[:, :, 1:] -= s * u[:, :, :-1]
        out[:, :, :-1] -= s * u[:, :, 1:]
        return out


def _interior(values: np.ndarray) -> np.ndarray:
    return values[1:-1, 1:-1, 1:-1]


def _embed(grid: Grid, interior: np.ndarray) -> np.ndarray:
    out = np.zeros((grid.n,) * 3)
    out[1:-1, 1:-1, 1:-1] = interior
    return out


@dataclass
class ReductionContext:
    """Assembled operators and ansatz fields for one (eps, h) pair."""

    profile: RadialProfile
    spec: PotentialSpec
    h: float
    grid: Grid
    bumps: list = dc_field(default_factory=list)

    def __post_init__(self):
        p = self.profile.p
        if not self.bumps:
            self.bumps = assemble_bumps(self.profile, self.h, self.grid)
        self.W = assemble_W(self.profile, self.h, self.grid, self.bumps)
        self.sum_Up = sum_bump_powers(self.bumps, p)
        self.dW = dW_dh(self.profile, self.h, self.grid)
        self.phistar = Field(self.grid, symmetry.symmetrize_values(phi_star(self.profile, self.h, self.grid).values))
        self.vminus1 = potential_field(self.spec, self.grid)
        # multiplier of u in the strong operator S u = -Lap u + coeff * u
        self.coeff = 1.0 + self.vminus1 - p * self.W.values ** (p - 1.0)
        self.helm = HelmholtzSolver(self.grid)
        z = _interior(self.phistar.values).copy()
        self._z = z / np.sqrt(np.dot(z.ravel(), z.ravel()))

    # -- interior-block operations ------------------------------------------

    def deflate(self, v: np.ndarray) -> np.ndarray:
        return v - np.dot(self._z.ravel(), v.ravel()) * self._z

    def apply_S(self, v: np.ndarray) -> np.ndarray:
        out = self.helm.apply_interior(v)
        out += (_interior(self.coeff) - 1.0) * v
        return out

    def riesz(self, strong: Field) -> Field:
        """H^1 representation of the L^2 pairing with ``strong``."""
        return Field(self.grid, _embed(self.grid, self.helm.solve_interior(_interior(strong.values))))

    def g_eps(self, phi: Field) -> Field:
        return g_eps(phi, self.W, self.bumps, self.spec, self.profile.p, self.vminus1, self.sum_Up)

    def strong_residual(self, u_values: np.ndarray) -> np.ndarray:
        """-Lap u + V_eps u - |u|^{p-1} u with the Dirichlet stencil."""
        ui = _interior(u_values)
        out = self.helm.apply_interior(ui)
        out += (_interior(self.vminus1)) * ui - pow_signed(ui, self.profile.p)
        return _embed(self.grid, out)


def g_eps(
    phi: Field,
    W: Field,
    bumps: list,
    spec: PotentialSpec,
    p: float,
    vminus1: np.ndarray | None = None,
    sum_Up: np.ndarray | None = None,
) -> Field:
    """Ansatz defect (V_eps - 1) W - {|W+phi|^{p-1}(W+phi) - sum U_i^p - p W^{p-1} phi}."""
    g = W.grid
    if vminus1 is None:
        vminus1 = potential_field(spec, g)
    if sum_Up is None:
        sum_Up = sum_bump_powers(bumps, p)
    Wv = W.values
    nonlin = pow_signed(Wv + phi.values, p) - sum_Up - p * Wv ** (p - 1.0) * phi.values
    return Field(g, vminus1 * Wv - nonlin)


def solve_projected(
    ctx: ReductionContext,
    rhs: Field,
    tol: float = 1e-9,
    maxiter: int = 2000,
    x0: np.ndarray | None = None,
) -> tuple[Field, dict]:
    """Solve the deflated symmetric system  P S P phi = P B rhs  by MINRES.

    ``rhs`` is the H^1 representation of the right-hand functional (an E_h
    member); internally it is pulled back to strong form with B = -Lap+1 so
    that the achieved residual can be measured coherently in the H^1 norm:
    the returned info contains ``rel_residual`` with
    ||riesz(P(S phi) - P B rhs)||_B / ||rhs||_B  <  tol.
    """
    grid = ctx.grid
    b_strong = ctx.helm.apply_interior(_interior(rhs.values))
    b = ctx.deflate(_interior(symmetry.symmetrize_values(_embed(grid, b_strong)))).ravel()
    m = ctx.helm.m
    nunk = m**3

    def matvec(x):
        v = ctx.deflate(x.reshape(m, m, m))
        w = ctx.deflate(ctx.apply_S(v))
        return w.ravel()

    def precond(x):
        return ctx.helm.solve_interior(x.reshape(m, m, m)).ravel()

    A = LinearOperator((nunk, nunk), matvec=matvec, dtype=float)
    M = LinearOperator((nunk, nunk), matvec=precond, dtype=float)

    def b_norm(v):
        # H^1 norm of the Riesz representation of an interior strong field
        v = v.reshape(m, m, m)
        return float(np.sqrt(max(np.dot(v.ravel(), ctx.helm.solve_interior(v).ravel()), 0.0) * grid.delta**3))

    rhs_scale = b_norm(b)
    if rhs_scale == 0.0:
        return Field(grid, np.zeros((grid.n,) * 3)), {"iterations": 0, "rel_residual": 0.0}

    iters = 0

    def count(_):
        nonlocal iters
        iters += 1

    x = np.zeros(nunk) if x0 is None else x0.ravel().copy()
    rel = np.inf
    rtol = max(tol * 0.1, 1e-13)
    for _attempt in range(3):
        x, info = minres(A, b, x0=x, rtol=rtol, maxiter=maxiter, M=M, callback=count)
        r = b - matvec(x)
        rel = b_norm(r) / rhs_scale
        if rel < tol:
            break
        rtol = max(rtol * 1e-3, 1e-14)
    else:
        raise SolverError(f"projected solve stalled at relative residual {rel:.3e} (tol {tol:.3e})")
    phi_int = ctx.deflate(x.reshape(m, m, m))
    return Field(grid, _embed(grid, phi_int)), {"iterations": iters, "rel_residual": rel}


@dataclass
class CorrectionReport:
    """Outcome of the contraction iteration at one (eps, h)."""

    h: float
    eps: float
    phi: Field
    norm_phi: float
    iterations: int
    contraction_estimates: list
    increments: list
    converged: bool
    in_ball: bool
    gamma: float
    lambda_h: float = np.nan
    rho_hat: float = np.nan
    c_hat: float = np.nan

    def to_dict(self, with_extras: bool = True) -> dict:
        out = {
            "h": self.h,
            "eps": self.eps,
            "norm_phi": self.norm_phi,
            "iterations": self.iterations,
            "contraction_estimates": list(self.contraction_estimates),
            "increments": list(self.increments),
            "converged": self.converged,
            "in_ball": self.in_ball,
            "gamma": self.gamma,
        }
        if with_extras:
            out["lambda"] = self.lambda_h
            out["rho_hat"] = self.rho_hat
            out["c_hat"] = self.c_hat
        return out


def fixed_point(
    ctx: ReductionContext,
    cfg: AnsatzConfig,
    tol: float = 1e-9,
    max_iter: int = 200,
    linear_tol: float = 1e-10,
    x0: Field | None = None,
    compute_lambda: bool = True,
) -> CorrectionReport:
    """Iterate phi <- solve_projected(repr(-g(phi))) from phi = 0.

    Each iterate is re-symmetrized and re-projected onto E_h, so membership
    holds to round-off at every step.  Divergence does not raise: the report
    carries ``converged`` / ``in_ball`` flags (escape from the contraction
    ball is the expected diagnostic when eps is too large).
    """
    grid = ctx.grid
    gamma = cfg.gamma
    ball = ctx.spec.eps**gamma
    phi = Field(grid, np.zeros((grid.n,) * 3)) if x0 is None else x0.copy()
    increments: list[float] = []
    ratios: list[float] = []
    in_ball = True
    converged = False
    warm = None
    for _k in range(max_iter):
        gfield = ctx.g_eps(phi)
        rhs = ctx.riesz(Field(grid, -gfield.values))
        rhs = project_Eh(Field(grid, symmetry.symmetrize_values(rhs.values)), ctx.dW)
        inc_prev = increments[-1] if increments else None
        nphi = norm_H1(phi)
        if inc_prev is None:
            eta = 3e-3
        else:
            eta = min(3e-3, 0.05 * inc_prev / max(nphi, ball))
        eta = max(eta, linear_tol)
        new, _info = solve_projected(ctx, rhs, tol=eta, x0=warm)
        warm = _interior(new.values)
        new = project_Eh(Field(grid, symmetry.symmetrize_values(new.values)), ctx.dW)
        inc = norm_H1(Field(grid, new.values - phi.values))
        increments.append(inc)
        if inc_prev is not None and inc_prev > 0:
            ratios.append(inc / inc_prev)
        phi = new
        if norm_H1(phi) > ball:
            in_ball = False
        if inc < tol:
            converged = True
            break
        if len(ratios) >= 3 and all(r > 1.25 for r in ratios[-3:]) and not in_ball:
            break  # clearly non-contractive; stop with diagnostics
    report = CorrectionReport(
        h=ctx.h,
        eps=ctx.spec.eps,
        phi=phi,
        norm_phi=norm_H1(phi),
        iterations=len(increments),
        contraction_estimates=ratios,
        increments=increments,
        converged=converged,
        in_ball=in_ball and norm_H1(phi) <= ball,
        gamma=gamma,
    )
    if compute_lambda and converged:
        report.lambda_h = lagrange_multiplier(ctx, phi)
    return report


def lagrange_multiplier(ctx: ReductionContext, phi: Field) -> float:
    """Component of the strong residual of W + phi along the degenerate direction."""
    u = ctx.W.values + phi.values
    res = ctx.strong_residual(u)
    ps = ctx.phistar.values
    w = ctx.grid.quad_weights
    num = float(np.sum(w * res * ps))
    den = float(np.sum(w * ps * ps))
    return num / den


def ansatz_stencil_defect(ctx: ReductionContext) -> np.ndarray:
    """Discrete defect -Lap_h W + W - sum_i U_i^p of the exact-in-continuum
    ansatz identity; pure stencil truncation plus tabulation error."""
    Wi = _interior(ctx.W.values)
    d = ctx.helm.apply_interior(Wi) - _interior(ctx.sum_Up)
    return _embed(ctx.grid, d)


def residual_Eh_component(ctx: ReductionContext, phi: Field) -> float:
    """H^1 norm of the E_h part of the correction-equation residual.

    The ansatz's own stencil defect (see :func:`ansatz_stencil_defect`) is
    background discretization error, not part of the correction equation, so
    it is subtracted before projecting; what remains is the solver-controlled
    residual minus its multiplier component.
    """
    u = ctx.W.values + phi.values
    res = ctx.strong_residual(u) - ansatz_stencil_defect(ctx)
    ps = ctx.phistar.values
    w = ctx.grid.quad_weights
    lam = float(np.sum(w * res * ps) / np.sum(w * ps * ps))
    rem = Field(ctx.grid, res - lam * ps)
    rep = ctx.riesz(rem)
    rep = project_Eh(Field(ctx.grid, symmetry.symmetrize_values(rep.values)), ctx.dW)
    return norm_H1(rep)


# --- coercivity / spectrum --------------------------------------------------


def estimate_coercivity(
    ctx: ReductionContext,
    symmetrized: bool = True,
    n_iter: int = 40,
    solve_tol: float = 1e-7,
    seed: int = 7,
    rtol: float = 5e-3,
) -> dict:
    """Smallest and largest singular values of the projected operator.

    The operator pencil is (S, B) with S the deflated linearized stencil and
    B = -Lap+1 carrying the H^1 geometry, restricted to the symmetric
    subspace when ``symmetrized``.  Inverse iteration (via the deflated
    MINRES solve) yields rho_hat = min |sigma|; power iteration on B^{-1}S
    yields the upper constant c_hat.
    """
    grid = ctx.grid
    m = ctx.helm.m
    rng = np.random.default_rng(seed)

    def prep(v):
        v = ctx.deflate(v)
        if symmetrized:
            v = _interior(symmetry.symmetrize_values(_embed(grid, v)))
            v = ctx.deflate(v)
        return v

    def rayleigh(v):
        num = np.dot(v.ravel(), ctx.apply_S(v).ravel())
        den = np.dot(v.ravel(), ctx.helm.apply_interior(v).ravel())
        return num / den

    v = prep(rng.standard_normal((m, m, m)))
    v /= np.linalg.norm(v.ravel())
    rho_prev = np.inf
    history = []
    rho = np.nan
    for _ in range(n_iter):
        rhs_field = ctx.riesz(Field(grid, _embed(grid, ctx.helm.apply_interior(v))))
        x, _ = solve_projected(ctx, Field(grid, symmetry.symmetrize_values(rhs_field.values)) if symmetrized else rhs_field, tol=solve_tol)
        w = prep(_interior(x.values))
        nw = np.linalg.norm(w.ravel())
        if nw == 0:
            raise SolverError("inverse iteration produced a zero vector")
        v = w / nw
        rho = rayleigh(v)
        history.append(rho)
        if abs(abs(rho) - abs(rho_prev)) < rtol * abs(rho):
            break
        rho_prev = rho
    rho_hat = abs(rho)

    # largest |generalized eigenvalue| by power iteration on B^{-1} S
    u = prep(rng.standard_normal((m, m, m)))
    u /= np.linalg.norm(u.ravel())
    chat_prev, chat = 0.0, 0.0
    for _ in range(n_iter):
        w = prep(ctx.helm.solve_interior(ctx.apply_S(u)))
        nw = np.linalg.norm(w.ravel())
        u = w / nw
        chat = abs(rayleigh(u))
        if abs(chat - chat_prev) < rtol * chat:
            break
        chat_prev = chat
    return {"rho_hat": float(rho_hat), "c_hat": float(chat), "history": history}


def single_bump_operator(profile: RadialProfile, grid: Grid):
    """Interior stencil of -Lap + 1 - p U0^{p-1} for a bump at the origin."""
    helm = HelmholtzSolver(grid)
    U = eval_U0(profile, grid.radius)
    pot = _interior(1.0 - profile.p * U ** (profile.p - 1.0))

    def apply_op(v):
        return helm.apply_interior(v) + (pot - 1.0) * v

    return helm, apply_op


def single_bump_spectrum(profile: RadialProfile, grid: Grid, k: int = 6, seed: int = 3, maxiter: int = 400) -> np.ndarray:
    """Lowest k eigenvalues of the full-space single-bump linearization.

    LOBPCG with the (-Lap+1)^{-1} preconditioner; the bottom of the spectrum
    consists of one strongly negative radial mode followed by the three
    translation quasi-kernel modes at O(delta^2).
    """
    from scipy.sparse.linalg import lobpcg

    helm, apply_op = single_bump_operator(profile, grid)
    m = helm.m
    n_unk = m**3

    def matvec_block(X):
        out = np.empty_like(X)
        for j in range(X.shape[1]):
            out[:, j] = apply_op(X[:, j].reshape(m, m, m)).ravel()
        return out

    def prec_block(X):
        out = np.empty_like(X)
        for j in range(X.shape[1]):
            out[:, j] = helm.solve_interior(X[:, j].reshape(m, m, m)).ravel()
        return out

    A = LinearOperator((n_unk, n_unk), matvec=lambda x: apply_op(x.reshape(m, m, m)).ravel(), matmat=matvec_block, dtype=float)
    M = LinearOperator((n_unk, n_unk), matvec=lambda x: helm.solve_interior(x.reshape(m, m, m)).ravel(), matmat=prec_block, dtype=float)

    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_unk, k))
    # seed the known structure: radial mode and the three translations
    X[:, 0] = _interior(eval_U0(profile, grid.radius)).ravel()
    Xc, Yc, Zc = grid.coords()
    from .groundstate import du0_over_r

    for j, comp in enumerate((Xc, Yc, Zc)):
        if 1 + j < k:
            dvals = du0_over_r(profile, grid.radius) * comp
            X[:, 1 + j] = _interior(np.broadcast_to(dvals, (grid.n,) * 3)).ravel()
    vals, _vecs = lobpcg(A, X, M=M, largest=False, tol=1e-7, maxiter=maxiter)
    return np.sort(vals)
