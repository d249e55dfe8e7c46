"""Forward map of the piecewise-constant radial conductivity problem.

The unit disk is split into ``n`` concentric annuli ``r_i < r < r_{i-1}``
with ``1 = r_0 > r_1 > ... > r_n = 0``.  Annulus ``i`` (counted from the
boundary inward) carries conductivity ``sigma_i``.  With cosine boundary
currents ``cos(j theta)`` the Neumann-to-Dirichlet map is diagonal and its
eigenvalues ``lambda_j(sigma)`` follow from a backward recurrence on the
transfer coefficients ``C_{i,j} = beta_{i,j} / alpha_{i,j}`` of the potential
``u_j = (alpha_{i,j} r^j + beta_{i,j} r^{-j}) cos(j theta)``.

Conductivities are plain float arrays of shape ``(..., n)``; leading axes are
treated as a batch.  :func:`eigenvalues` is the same recurrence written with
bare arithmetic on a sequence of per-annulus entries, so it runs on dual
numbers for automatic differentiation.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NumericalFailure
from .linalg import lu_solve

MAX_ORDER = 64  # r_i^(2j) underflows long before j reaches a few hundred


@dataclass(frozen=True)
class RadialGeometry:
    """Radii ``r_0 = 1 > r_1 > ... > r_n = 0`` of the annular partition."""

    radii: tuple

    def __post_init__(self):
        r = tuple(float(v) for v in self.radii)
        if len(r) < 2:
            raise InvalidInputError("a geometry needs at least one annulus (two radii)")
        if r[0] != 1.0 or r[-1] != 0.0:
            raise InvalidInputError(f"radii must start at 1 and end at 0, got {r[0]} .. {r[-1]}")
        if any(a <= b for a, b in zip(r, r[1:])):
            raise InvalidInputError("radii must be strictly decreasing")
        object.__setattr__(self, "radii", r)

    @classmethod
    def uniform(cls, n):
        """Equally spaced radii ``r_i = (n - i) / n``."""
        if int(n) != n or n < 1:
            raise InvalidInputError(f"annulus count must be a positive integer, got {n}")
        n = int(n)
        return cls(tuple((n - i) / n for i in range(n + 1)))

    @property
    def n(self):
        return len(self.radii) - 1

    @property
    def r(self):
        return np.array(self.radii)


@dataclass(frozen=True)
class TransferCoefficients:
    C: np.ndarray  # (..., n, m); row n-1 (innermost annulus) is zero
    rho: np.ndarray  # (..., n-1) reflection coefficients at the interfaces


@dataclass(frozen=True)
class PotentialCoefficients:
    alpha: np.ndarray  # (..., n, m)
    beta: np.ndarray  # (..., n, m)


def check_sigma(geom, sigma):
    """Validate a conductivity (or a batch of them) against ``geom``; returns a float array."""
    s = np.asarray(sigma, dtype=float)
    if s.ndim == 0 or s.shape[-1] != geom.n:
        raise InvalidInputError(f"conductivity has shape {s.shape}, geometry has {geom.n} annuli")
    if not np.all(np.isfinite(s)) or not np.all(s > 0):
        raise InvalidInputError("conductivities must be finite and strictly positive")
    return s


def orders(m, max_order=MAX_ORDER):
    """Measurement orders ``1..m`` as floats."""
    if int(m) != m or m < 1:
        raise InvalidInputError(f"measurement count must be a positive integer, got {m}")
    if m > max_order:
        raise InvalidInputError(f"measurement count {m} exceeds the supported maximum {max_order}")
    return np.arange(1, int(m) + 1, dtype=float)


def eigenvalues(geom, sigma, m, max_order=MAX_ORDER):
    """Recurrence for ``(lambda_j)_{j=1..m}`` on a sequence of per-annulus entries.

    Entries may be floats, arrays that broadcast against ``(m,)``, or dual
    numbers; no validation is performed.
    """
    j = orders(m, max_order)
    r = geom.radii
    n = geom.n
    c = 0.0
    for i in range(n - 1, 0, -1):
        rho = (sigma[i - 1] - sigma[i]) / (sigma[i - 1] + sigma[i])
        p = r[i] ** (2.0 * j)
        c = (rho * p + c) / (1.0 + rho * c / p)
    return (1.0 + c) / (j * sigma[0] * (1.0 - c))


def transfer_coefficients(geom, sigma, m, max_order=MAX_ORDER):
    """Transfer coefficients ``C_{i,j}`` by the backward recurrence ``i = n-1 .. 1``."""
    s = check_sigma(geom, sigma)
    j = orders(m, max_order)
    n = geom.n
    r = geom.r
    rho = (s[..., :-1] - s[..., 1:]) / (s[..., :-1] + s[..., 1:])
    C = np.zeros(s.shape[:-1] + (n, j.size))
    for i in range(n - 1, 0, -1):
        p = r[i] ** (2.0 * j)
        ri = rho[..., i - 1, None]
        C[..., i - 1, :] = (ri * p + C[..., i, :]) / (1.0 + ri * C[..., i, :] / p)
    return TransferCoefficients(C=C, rho=rho)


def forward_map(geom, sigma, m, max_order=MAX_ORDER):
    """Eigenvalues ``lambda_j(sigma) = (1 + C_1j) / (j sigma_1 (1 - C_1j))``, shape ``(..., m)``."""
    s = check_sigma(geom, sigma)
    j = orders(m, max_order)
    c1 = transfer_coefficients(geom, s, m, max_order).C[..., 0, :]
    return (1.0 + c1) / (j * s[..., 0, None] * (1.0 - c1))


def potential_coefficients(geom, sigma, m, max_order=MAX_ORDER):
    """Coefficients ``alpha, beta`` by back-substitution through the interfaces.

    Starts from the flux condition ``alpha_1 = 1 / (sigma_1 j (1 - C_1))``;
    continuity at ``r_i`` gives ``alpha_{i+1} = alpha_i (p + C_i) / (p + C_{i+1})``
    with ``p = r_i^(2j)``.
    """
    s = check_sigma(geom, sigma)
    j = orders(m, max_order)
    C = transfer_coefficients(geom, s, m, max_order).C
    r = geom.r
    alpha = np.empty_like(C)
    alpha[..., 0, :] = 1.0 / (s[..., 0, None] * j * (1.0 - C[..., 0, :]))
    for i in range(1, geom.n):
        p = r[i] ** (2.0 * j)
        alpha[..., i, :] = alpha[..., i - 1, :] * (p + C[..., i - 1, :]) / (p + C[..., i, :])
    return PotentialCoefficients(alpha=alpha, beta=C * alpha)


def analytic_jacobian(geom, sigma, m, max_order=MAX_ORDER):
    """Jacobian ``(..., m, n)`` with entry ``(j, i) = d lambda_j / d sigma_i``.

    Closed-form annulus integral of ``|grad u_j|^2``:
    ``-j [alpha^2 (r_{i-1}^{2j} - r_i^{2j}) + beta^2 (r_i^{-2j} - r_{i-1}^{-2j})]``.
    The second term is written as ``alpha^2 C (C / r_i^{2j}) (1 - (r_i / r_{i-1})^{2j})``
    to avoid forming huge negative powers, and is skipped for the innermost
    annulus where ``beta = 0`` and ``r_n = 0``.
    """
    s = check_sigma(geom, sigma)
    j = orders(m, max_order)
    C = transfer_coefficients(geom, s, m, max_order).C
    alpha = potential_coefficients(geom, s, m, max_order).alpha
    r = geom.r
    n = geom.n
    jac = np.empty(s.shape[:-1] + (j.size, n))
    for i in range(n):
        outer, inner = r[i], r[i + 1]
        a2 = alpha[..., i, :] ** 2
        term = a2 * (outer ** (2.0 * j) - inner ** (2.0 * j))
        if i < n - 1:
            ci = C[..., i, :]
            term = term + a2 * ci * (ci / inner ** (2.0 * j)) * (1.0 - (inner / outer) ** (2.0 * j))
        jac[..., :, i] = -j * term
    return jac


def solve_potential_system(geom, sigma, m, max_order=MAX_ORDER):
    """Coefficients ``alpha, beta`` from the full interface linear system, one dense solve per order.

    Independent of the recurrence; used as an oracle.  Inside annulus ``i``
    the potential is written ``a_i (r / r_{i-1})^j + b_i (r_i / r)^j`` so that
    every matrix entry lies in ``[0, 1]`` up to conductivity factors; the
    unknowns are ``a_1..a_n, b_1..b_{n-1}`` (``b_n = 0``).
    """
    s = check_sigma(geom, sigma)
    if s.ndim != 1:
        raise InvalidInputError("solve_potential_system takes a single conductivity")
    jj = orders(m, max_order)
    n = geom.n
    r = geom.r
    alpha = np.zeros((n, jj.size))
    beta = np.zeros((n, jj.size))
    nu = 2 * n - 1

    def bcol(i):  # column of b_i (0-based annulus index, i < n-1)
        return n + i

    for col, j in enumerate(jj):
        A = np.zeros((nu, nu))
        rhs = np.zeros(nu)
        # flux at r_0 = 1: sigma_1 j (alpha_1 - beta_1) = 1
        A[0, 0] = s[0] * j
        if n > 1:
            A[0, bcol(0)] = -s[0] * j * r[1] ** j
        rhs[0] = 1.0
        for i in range(n - 1):
            # interface r_{i+1} between annulus i (outside) and i+1 (inside)
            q_out = (r[i + 1] / r[i]) ** j
            q_in = (r[i + 2] / r[i + 1]) ** j
            row_c, row_f = 1 + 2 * i, 2 + 2 * i
            A[row_c, i] = q_out
            A[row_c, bcol(i)] = 1.0
            A[row_c, i + 1] = -1.0
            A[row_f, i] = s[i] * q_out
            A[row_f, bcol(i)] = -s[i]
            A[row_f, i + 1] = -s[i + 1]
            if i + 1 < n - 1:
                A[row_c, bcol(i + 1)] = -q_in
                A[row_f, bcol(i + 1)] = s[i + 1] * q_in
        x = lu_solve(A, rhs)
        for i in range(n):
            alpha[i, col] = x[i] * r[i] ** (-j)
            if i < n - 1:
                beta[i, col] = x[bcol(i)] * r[i + 1] ** j
    if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(beta))):
        raise NumericalFailure("non-finite potential coefficients")
    return PotentialCoefficients(alpha=alpha, beta=beta)


def dumps_vector(values):
    """JSON array of doubles; ``repr`` gives the shortest round-trip form."""
    return "[" + ", ".join(repr(float(v)) for v in np.ravel(values)) + "]"


def loads_vector(text):
    return np.array(json.loads(text), dtype=float)
