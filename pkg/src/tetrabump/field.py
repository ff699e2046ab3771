"""Grid fields on a truncated box: potential, four-bump ansatz, inner
products, and the linearized operator.

Conventions
-----------
Fields live on a uniform cubic grid centered at the origin with an odd
number of nodes per axis, so the origin is a node and the grid is invariant
under the tetrahedral group.  ``values[ix, iy, iz]`` holds the sample at
``(axis[ix], axis[iy], axis[iz])``.

Quadrature is the tensor trapezoidal rule (interior weight delta^3, boundary
faces halved), which is the composite midpoint sum for fields vanishing at
the boundary and reproduces closed forms for constants.  The discrete
Laplacian is the 7-point stencil with homogeneous Dirichlet data; H^1 inner
products use centered differences with one-sided stencils at the boundary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import symmetry
from .groundstate import ParameterError, RadialProfile, du0_over_r, eval_U0, f_weight


class GeometryError(ValueError):
    """Grids mismatch or the requested configuration does not fit the box."""


_INV_2SQRT2 = 1.0 / (2.0 * np.sqrt(2.0))


@dataclass(frozen=True)
class Grid:
    """Uniform cubic grid on [-r_box, r_box]^3 with n nodes per axis."""

    r_box: float
    n: int

    def __post_init__(self):
        if self.n % 2 == 0 or self.n < 17:
            raise GeometryError(f"n must be odd and >= 17, got {self.n}")
        if self.r_box <= 0:
            raise GeometryError("r_box must be positive")

    @property
    def delta(self) -> float:
        return 2.0 * self.r_box / (self.n - 1)

    @cached_property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.r_box, self.r_box, self.n)

    def coords(self):
        """Broadcastable (X, Y, Z) coordinate arrays."""
        a = self.axis
        return a[:, None, None], a[None, :, None], a[None, None, :]

    @cached_property
    def radius(self) -> np.ndarray:
        X, Y, Z = self.coords()
        return np.sqrt(X**2 + Y**2 + Z**2)

    @cached_property
    def quad_weights_1d(self) -> np.ndarray:
        w = np.ones(self.n)
        w[0] = w[-1] = 0.5
        return w

    @cached_property
    def quad_weights(self) -> np.ndarray:
        w = self.quad_weights_1d
        return w[:, None, None] * w[None, :, None] * w[None, None, :]

    @cached_property
    def cone_index(self) -> np.ndarray:
        X, Y, Z = self.coords()
        pts = np.stack(np.broadcast_arrays(X, Y, Z), axis=-1)
        return symmetry.cone_of(pts)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(self.quad_weights * values)) * self.delta**3


@dataclass
class Field:
    """Scalar samples on a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.grid.n,) * 3:
            raise GeometryError("value array shape does not match the grid")

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())


def _same_grid(*fields: Field) -> Grid:
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise GeometryError("fields live on different grids")
    return g


# --- potential ---------------------------------------------------------------

@dataclass(frozen=True)
class PotentialSpec:
    """Perturbation parameters: V_eps(r) = 1 + eps * V1(r).

    The default profile V1(r) = a / (1 + r^2)^(m/2) is bounded, smooth and
    radial, and matches a/r^m at infinity with remainder exponent theta = 2.
    """

    eps: float
    a: float = 1.0
    m: float = 2.0
    theta: float = 2.0
    profile: str = "smoothed_inverse_power"

    def __post_init__(self):
        if self.eps < 0:
            raise ParameterError("eps must be >= 0")
        if self.a <= 0 or self.m <= 0 or self.theta <= 0:
            raise ParameterError("potential parameters a, m, theta must be positive")
        if self.profile != "smoothed_inverse_power":
            raise ParameterError(f"unknown potential profile '{self.profile}'")

    def v1(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return self.a / (1.0 + r**2) ** (self.m / 2.0)


def eval_potential(spec: PotentialSpec, r) -> np.ndarray:
    """V_eps(r) - 1 = eps * V1(r)."""
    return spec.eps * spec.v1(r)


def potential_field(spec: PotentialSpec, grid: Grid) -> np.ndarray:
    return eval_potential(spec, grid.radius)


# --- bump distance window -----------------------------------------------------

@dataclass(frozen=True)
class AnsatzConfig:
    """Bump-distance window parameters: gamma = 1/2 - sqrt(2)*beta0."""

    beta0: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.beta0 < _INV_2SQRT2:
            raise ParameterError(f"beta0 must lie in (0, {_INV_2SQRT2:.6f})")

    @property
    def gamma(self) -> float:
        return 0.5 - np.sqrt(2.0) * self.beta0

    def s_interval(self, eps: float) -> tuple[float, float]:
        if not 0.0 < eps < 1.0:
            raise ParameterError("the distance window needs 0 < eps < 1")
        L = np.log(1.0 / eps)
        return ((_INV_2SQRT2 - self.beta0) * L, (_INV_2SQRT2 + self.beta0) * L)

    def s_mid(self, eps: float) -> float:
        lo, hi = self.s_interval(eps)
        return 0.5 * (lo + hi)


# --- ansatz fields ------------------------------------------------------------

def _check_fit(h: float, grid: Grid) -> None:
    if h < 0:
        raise GeometryError("h must be nonnegative")
    if h * np.sqrt(3.0) + 5.0 >= grid.r_box:
        raise GeometryError(
            f"bumps at distance sqrt(3)*{h:.3f} do not fit the box r_box={grid.r_box:.3f}"
        )


def bump_radii(grid: Grid, h: float, i: int) -> np.ndarray:
    """|y - h t_i| on the grid (i is 1-based)."""
    t = symmetry.VERTICES[i - 1]
    X, Y, Z = grid.coords()
    return np.sqrt((X - h * t[0]) ** 2 + (Y - h * t[1]) ** 2 + (Z - h * t[2]) ** 2)


def assemble_bumps(profile: RadialProfile, h: float, grid: Grid) -> list[np.ndarray]:
    """The four translated ground states U0(. - h t_i) as value arrays."""
    _check_fit(h, grid)
    return [eval_U0(profile, bump_radii(grid, h, i)) for i in range(1, 5)]


def assemble_W(profile: RadialProfile, h: float, grid: Grid, bumps=None) -> Field:
    """Four-bump ansatz: sum of the translated ground states."""
    if bumps is None:
        bumps = assemble_bumps(profile, h, grid)
    return Field(grid, bumps[0] + bumps[1] + bumps[2] + bumps[3])


def phi_star(profile: RadialProfile, h: float, grid: Grid) -> Field:
    """Degenerate direction sum_i U_i^{p-1} dU_i/dh = sum_i f(|y-ht_i|)(y-ht_i).t_i."""
    _check_fit(h, grid)
    X, Y, Z = grid.coords()
    acc = np.zeros((grid.n,) * 3)
    for i in range(1, 5):
        t = symmetry.VERTICES[i - 1]
        r = bump_radii(grid, h, i)
        dot = (X - h * t[0]) * t[0] + (Y - h * t[1]) * t[1] + (Z - h * t[2]) * t[2]
        acc += f_weight(profile, r) * dot
    return Field(grid, acc)


def dW_dh(profile: RadialProfile, h: float, grid: Grid) -> Field:
    """Exact h-derivative of the ansatz: -sum_i U0'(r_i) (y-ht_i).t_i / r_i."""
    _check_fit(h, grid)
    X, Y, Z = grid.coords()
    acc = np.zeros((grid.n,) * 3)
    for i in range(1, 5):
        t = symmetry.VERTICES[i - 1]
        r = bump_radii(grid, h, i)
        dot = (X - h * t[0]) * t[0] + (Y - h * t[1]) * t[1] + (Z - h * t[2]) * t[2]
        acc -= du0_over_r(profile, r) * dot
    return Field(grid, acc)


def sum_bump_powers(bumps: list[np.ndarray], q: float) -> np.ndarray:
    return bumps[0] ** q + bumps[1] ** q + bumps[2] ** q + bumps[3] ** q


# --- inner products and operators ----------------------------------------------

def inner_L2(u: Field, v: Field) -> float:
    g = _same_grid(u, v)
    return g.integrate(u.values * v.values)


def norm_L2(u: Field) -> float:
    return float(np.sqrt(max(inner_L2(u, u), 0.0)))


def gradient(grid: Grid, values: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Centered differences, second-order one-sided at the boundary."""
    return tuple(np.gradient(values, grid.delta, axis=d, edge_order=2) for d in range(3))


def inner_H1(u: Field, v: Field) -> float:
    g = _same_grid(u, v)
    gu = gradient(g, u.values)
    gv = gradient(g, v.values)
    dens = u.values * v.values + gu[0] * gv[0] + gu[1] * gv[1] + gu[2] * gv[2]
    return g.integrate(dens)


def norm_H1(u: Field) -> float:
    return float(np.sqrt(max(inner_H1(u, u), 0.0)))


def laplacian_dirichlet(grid: Grid, values: np.ndarray) -> np.ndarray:
    """7-point Laplacian with homogeneous Dirichlet data.

    Boundary samples of ``values`` are treated as zero and the output is zero
    on the boundary layer: the operator acts on the Dirichlet subspace.
    """
    inner = values.copy()
    inner[0, :, :] = inner[-1, :, :] = 0.0
    inner[:, 0, :] = inner[:, -1, :] = 0.0
    inner[:, :, 0] = inner[:, :, -1] = 0.0
    out = np.zeros_like(values)
    out[1:-1, 1:-1, 1:-1] = (
        inner[2:, 1:-1, 1:-1]
        + inner[:-2, 1:-1, 1:-1]
        + inner[1:-1, 2:, 1:-1]
        + inner[1:-1, :-2, 1:-1]
        + inner[1:-1, 1:-1, 2:]
        + inner[1:-1, 1:-1, :-2]
        - 6.0 * inner[1:-1, 1:-1, 1:-1]
    ) / grid.delta**2
    return out


def apply_L(u: Field, W: Field, spec: PotentialSpec, p: float) -> Field:
    """Strong-form linearized action -Lap(u) + V_eps u - p W^{p-1} u (Dirichlet)."""
    g = _same_grid(u, W)
    vals = u.values.copy()
    vals[0, :, :] = vals[-1, :, :] = 0.0
    vals[:, 0, :] = vals[:, -1, :] = 0.0
    vals[:, :, 0] = vals[:, :, -1] = 0.0
    out = -laplacian_dirichlet(g, vals)
    out[1:-1, 1:-1, 1:-1] += (
        (1.0 + potential_field(spec, g) - p * W.values ** (p - 1.0)) * vals
    )[1:-1, 1:-1, 1:-1]
    return Field(g, out)


def project_Eh(u: Field, dW: Field) -> Field:
    """Remove the dW/dh component in the H^1 inner product."""
    g = _same_grid(u, dW)
    denom = inner_H1(dW, dW)
    if denom <= 0.0 or not np.isfinite(denom):
        raise GeometryError("degenerate direction: ||dW/dh|| vanishes")
    coef = inner_H1(u, dW) / denom
    return Field(g, u.values - coef * dW.values)


def symmetrize(u: Field) -> Field:
    return Field(u.grid, symmetry.symmetrize_values(u.values))


def symmetry_residual(u: Field) -> float:
    return symmetry.symmetry_residual_values(u.values)


# --- structural checks ---------------------------------------------------------

def eq_ansatz_residual(profile: RadialProfile, h: float, grid: Grid) -> float:
    """Node-wise max of Lap(W) - W + sum_i U_i^p on the grid interior.

    Zero in the continuum; on the grid it is bounded by the stencil
    truncation error plus tabulation error.
    """
    bumps = assemble_bumps(profile, h, grid)
    W = assemble_W(profile, h, grid, bumps)
    lap = laplacian_dirichlet(grid, W.values)
    res = lap - W.values + sum_bump_powers(bumps, profile.p)
    return float(np.max(np.abs(res[1:-1, 1:-1, 1:-1])))


def ksum_margins(profile: RadialProfile, h: float, grid: Grid, eta: float, M: float):
    """Margins of the tail-sum envelope bounds on the first cone.

    Returns (worst margin of the three-bump bound, worst margin of the
    four-bump bound); both must be >= 0 node-wise for the bounds
    ``sum_{i>=2} U_i <= 3 M e^{-sqrt2 eta h} e^{-(1-eta) rho} env(rho)`` and
    ``W <= 4 M e^{-rho} env(rho)``, with rho = |y - h t_1| and
    env(rho) = min(rho^{-(N-1)/2}, 1).
    """
    if not 0.0 < eta <= 2.0:
        raise ParameterError("eta must lie in (0, 2]")
    bumps = assemble_bumps(profile, h, grid)
    mask = grid.cone_index == 1
    rho = bump_radii(grid, h, 1)[mask]
    env = np.minimum(rho ** (-(profile.N - 1) / 2.0), 1.0, where=rho > 0, out=np.ones_like(rho))
    tail = (bumps[1] + bumps[2] + bumps[3])[mask]
    whole = (bumps[0] + bumps[1] + bumps[2] + bumps[3])[mask]
    bound3 = 3.0 * M * np.exp(-np.sqrt(2.0) * eta * h) * np.exp(-(1.0 - eta) * rho) * env
    bound4 = 4.0 * M * np.exp(-rho) * env
    return float(np.min(bound3 - tail)), float(np.min(bound4 - whole))


# --- binary dump ----------------------------------------------------------------

def dump_field(u: Field, path: str, description: str = "") -> None:
    """One JSON header line, then little-endian float64 values, x fastest."""
    header = {"n": u.grid.n, "R_box": u.grid.r_box, "description": description}
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        fh.write(np.ascontiguousarray(u.values.transpose(2, 1, 0), dtype="<f8").tobytes())


def load_field(path: str) -> tuple[Field, str]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        n = int(header["n"])
        raw = np.frombuffer(fh.read(), dtype="<f8")
    if raw.size != n**3:
        raise GeometryError(f"dump holds {raw.size} values, expected {n ** 3}")
    values = raw.reshape(n, n, n).transpose(2, 1, 0).copy()
    return Field(Grid(header["R_box"], n), values), header.get("description", "")
