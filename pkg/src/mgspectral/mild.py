"""Duhamel (mild) form theta(t) = G(t) theta0 + B(theta, theta)(t) and its Picard iteration.

G(t) is the heat semigroup exp(eps_kappa t Laplacian) and

    B(phi, psi)(t) = -int_0^t G(t - tau) P div(u(phi) psi)(tau) dtau,

with u = M[phi] and P the same 2/3-rule projection used by the time stepper, so the
fixed point and ``evolve.run`` discretise the same semi-discrete equation.

Time quadrature: P panels with edges T (i/P)^2, so node density grows like tau^(-1/2)
near tau = 0, each carrying a q-point Gauss-Legendre rule. For an output time t inside
panel p the whole panels before it are accumulated with a running sum whose heat factors
all have nonpositive exponents; the partial panel [e_p, t] uses sub-panels graded toward
tau = t and the integrand is Lagrange-interpolated from panel p's Gauss nodes. Every step
is linear in the integrand, so B is exactly bilinear.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .multiplier import PhysicalParams, grid_symbols
from .spectral import Grid, SpectralScalar, discrete_lp, irfft3, rfft3


class MildDivergenceError(RuntimeError):
    pass


def heat_propagate(theta0: SpectralScalar, t: float, eps_kappa: float) -> SpectralScalar:
    """G(t) theta0: coefficient-wise multiplication by exp(-eps_kappa t |k|^2)."""
    if t < 0:
        raise ValueError("heat semigroup is defined for t >= 0 only")
    if eps_kappa < 0:
        raise ValueError("eps_kappa must be >= 0")
    if t == 0:
        return theta0
    g = np.exp(-eps_kappa * t * theta0.grid.ksq)
    return SpectralScalar(theta0.grid, theta0.coeffs * g, theta0.zero_mean)


@dataclass(frozen=True)
class TimeQuadrature:
    """Graded composite Gauss rule on (0, T)."""

    T: float
    panels: int = 16
    order: int = 8

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError("horizon T must be positive")
        if self.panels < 1 or self.order < 1:
            raise ValueError("empty quadrature")

    @property
    def edges(self) -> np.ndarray:
        return self.T * (np.arange(self.panels + 1) / self.panels) ** 2

    @property
    def gauss(self) -> tuple[np.ndarray, np.ndarray]:
        return np.polynomial.legendre.leggauss(self.order)

    @property
    def nodes(self) -> np.ndarray:
        """Integrand sample times, shape (panels * order,), all in (0, T)."""
        x, _ = self.gauss
        e = self.edges
        a, b = e[:-1, None], e[1:, None]
        return (0.5 * (a + b) + 0.5 * (b - a) * x[None, :]).ravel()

    @property
    def weights(self) -> np.ndarray:
        _, w = self.gauss
        h = np.diff(self.edges)
        return (0.5 * h[:, None] * w[None, :]).ravel()

    @property
    def times(self) -> np.ndarray:
        """Output times: the Gauss nodes followed by T."""
        return np.append(self.nodes, self.T)

    def refined(self) -> TimeQuadrature:
        return TimeQuadrature(self.T, 2 * self.panels, self.order)

    def panel_of(self, t: float) -> int:
        if not 0 < t <= self.T * (1 + 1e-14):
            raise ValueError("t must lie in (0, T]")
        p = int(np.searchsorted(self.edges, t, side="left")) - 1
        return min(max(p, 0), self.panels - 1)


def _lagrange_matrix(xnodes: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """L[j, l] = l_j(pts[l]) for the Lagrange basis on xnodes."""
    n = len(xnodes)
    L = np.ones((n, len(pts)))
    for j in range(n):
        for i in range(n):
            if i != j:
                L[j] *= (pts - xnodes[i]) / (xnodes[j] - xnodes[i])
    return L


def _graded_points(a: float, b: float, x: np.ndarray, w: np.ndarray, levels: int):
    """Composite Gauss points on [a, b] with sub-panels halving in width toward b."""
    h = b - a
    cuts = np.append(b - h * 0.5 ** np.arange(levels + 1), b)
    lo, hi = cuts[:-1, None], cuts[1:, None]
    return (0.5 * (lo + hi) + 0.5 * (hi - lo) * x[None, :]).ravel(), (0.5 * (hi - lo) * w[None, :]).ravel()


class DuhamelOperator:
    """Product-integration rule for int_0^t G(t - tau) F(tau) dtau.

    F is interpolated by the Lagrange polynomial through each panel's Gauss nodes and
    integrated exactly against exp(-lam (t - tau)) by a fine rule graded toward the
    kernel peak, so stiff modes (lam times panel width large) are handled as well as
    slow ones. Weights are tabulated per distinct lam = eps_kappa |k|^2.
    """

    levels = 24

    def __init__(self, grid: Grid, quad: TimeQuadrature, eps_kappa: float):
        if eps_kappa < 0:
            raise ValueError("eps_kappa must be >= 0")
        self.grid, self.quad, self.eps_kappa = grid, quad, float(eps_kappa)
        self.lam_unique, self.inverse = np.unique(self.eps_kappa * grid.ksq, return_inverse=True)
        self.inverse = self.inverse.reshape(grid.spectral_shape)
        self.nodes, self.weights = quad.nodes, quad.weights
        self.q = quad.order
        e = quad.edges
        self._panel_step = [self._expand(np.exp(-self.lam_unique * (e[p + 1] - e[p])))
                            for p in range(quad.panels)]
        self._node_to_edge = []
        for p in range(quad.panels):
            W = self._weights(p, e[p + 1])
            self._node_to_edge.extend(self._expand(W[j]) for j in range(self.q))
        self._cache: dict[float, tuple[int, np.ndarray, list[np.ndarray]]] = {}

    def _expand(self, vals: np.ndarray) -> np.ndarray:
        return vals[self.inverse]

    def _weights(self, p: int, t: float) -> np.ndarray:
        """W[j, u] = int_{e_p}^t exp(-lam_u (t - tau)) l_j(tau) dtau, l_j the panel's Lagrange basis."""
        a = self.quad.edges[p]
        if t <= a:
            return np.zeros((self.q, len(self.lam_unique)))
        x, w = self.quad.gauss
        pts, wts = _graded_points(a, t, x, w, self.levels)
        L = _lagrange_matrix(self.nodes[p * self.q:(p + 1) * self.q], pts)
        decay = np.exp(-np.outer(t - pts, self.lam_unique))
        return (L * wts[None, :]) @ decay

    def _target(self, t: float):
        key = float(t)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        p = self.quad.panel_of(t)
        W = self._weights(p, t)
        kern = [self._expand(W[j]) for j in range(self.q)]
        head = self._expand(np.exp(-self.lam_unique * (t - self.quad.edges[p])))
        out = (p, head, kern)
        self._cache[key] = out
        return out

    def integrate(self, F: np.ndarray, times=None) -> np.ndarray:
        """int_0^t G(t - tau) F(tau) dtau for each t; F has shape (n_nodes, *spectral_shape)."""
        times = self.quad.times if times is None else np.atleast_1d(np.asarray(times, float))
        if F.shape[0] != len(self.nodes):
            raise ValueError("integrand must be sampled at every quadrature node")
        acc = [np.zeros(self.grid.spectral_shape, complex)]
        for p in range(self.quad.panels):
            s = acc[-1] * self._panel_step[p]
            for l in range(self.q):
                j = p * self.q + l
                s = s + self._node_to_edge[j] * F[j]
            acc.append(s)
        out = np.empty((len(times),) + self.grid.spectral_shape, complex)
        for i, t in enumerate(times):
            p, head, kern = self._target(t)
            r = head * acc[p]
            for l in range(self.q):
                r = r + kern[l] * F[p * self.q + l]
            out[i] = r
        return out


def advection_terms(phi: np.ndarray, psi: np.ndarray, grid: Grid, params: PhysicalParams,
                    batch: int = 16) -> np.ndarray:
    """-P div(M[phi] psi) for stacks of coefficient arrays, shape (n, *spectral_shape)."""
    m1, m2, m3 = grid_symbols(grid, params)
    k1, k2, k3 = grid.wavenumbers
    mask = grid.dealias_mask
    out = np.empty(phi.shape, complex)
    for a in range(0, phi.shape[0], batch):
        ph, ps = phi[a:a + batch], psi[a:a + batch]
        phys = irfft3(np.stack((m1 * ph, m2 * ph, m3 * ph, ps), axis=1), grid.shape)
        flux = rfft3(phys[:, :3] * phys[:, 3:4])
        out[a:a + batch] = -1j * (k1 * flux[:, 0] + k2 * flux[:, 1] + k3 * flux[:, 2]) * mask
    return out


def _stack(fields, grid: Grid) -> np.ndarray:
    if isinstance(fields, np.ndarray):
        return fields
    return np.stack([f.coeffs for f in fields]) if len(fields) else np.zeros((0,) + grid.spectral_shape, complex)


def bilinear_B(phi, psi, quad: TimeQuadrature, params: PhysicalParams, t=None, grid: Grid | None = None,
               op: DuhamelOperator | None = None):
    """B(phi, psi) at time t (or at every output time of ``quad`` when t is None).

    phi and psi are sequences of SpectralScalar (or stacked coefficient arrays) sampled
    at ``quad.nodes``.
    """
    if len(phi) == 0 or len(psi) == 0:
        raise ValueError("empty quadrature")
    grid = grid or phi[0].grid
    if op is None:
        op = DuhamelOperator(grid, quad, params.eps_kappa)
    a, b = _stack(phi, grid), _stack(psi, grid)
    n = len(quad.nodes)
    if a.shape[0] != n or b.shape[0] != n:
        raise ValueError(f"fields must be sampled at the {n} quadrature nodes")
    out = op.integrate(advection_terms(a, b, grid, params), t)
    if t is not None and np.ndim(t) == 0:
        return SpectralScalar(grid, out[0])
    return [SpectralScalar(grid, c) for c in out]


def weighted_norm(stack: np.ndarray, times: np.ndarray, grid: Grid, p: float = 4.0) -> float:
    """sup_t t^(1/2 - 3/(2p)) ||theta(t)||_{L^p} over the sample times."""
    if not 3 < p < math.inf:
        raise ValueError("weight exponent needs 3 < p < inf")
    w = times ** (0.5 - 1.5 / p)
    best = 0.0
    for a in range(0, len(times), 16):
        phys = irfft3(stack[a:a + 16], grid.shape)
        for i, f in enumerate(phys):
            best = max(best, w[a + i] * discrete_lp(f, p, grid.cell_volume))
    return best


def _l2_sup(stack: np.ndarray, grid: Grid) -> float:
    w = np.full(stack.shape[-1], 2.0)
    w[0] = 1.0
    if grid.n3 % 2 == 0:
        w[-1] = 1.0
    vals = (w * (stack.real**2 + stack.imag**2)).reshape(len(stack), -1, len(w)).sum(axis=(1, 2))
    return float(math.sqrt((2 * math.pi) ** 3 * vals.max()))


@dataclass
class MildIterate:
    horizon_T: float
    time_nodes: np.ndarray
    fields: list[SpectralScalar]
    weighted_norm: float
    p: float = 4.0
    iterations: int = 0
    distances: list[float] = field(default_factory=list)
    halvings: int = 0
    theta1_norm: float = float("nan")
    quad: TimeQuadrature | None = None

    def __post_init__(self):
        self.time_nodes = np.asarray(self.time_nodes, float)
        if len(self.time_nodes) < 2:
            raise ValueError("a mild iterate needs at least two time nodes")
        if np.any(np.diff(self.time_nodes) <= 0) or self.time_nodes[0] <= 0 \
                or self.time_nodes[-1] > self.horizon_T * (1 + 1e-14):
            raise ValueError("time nodes must increase within (0, T]")
        if len(self.fields) != len(self.time_nodes):
            raise ValueError("one field per time node")
        if not math.isfinite(self.weighted_norm):
            raise ValueError("weighted norm must be finite")
        if any(f.coeffs[0, 0, 0] != 0 for f in self.fields):
            raise ValueError("mild iterates are mean-zero")

    @property
    def final(self) -> SpectralScalar:
        return self.fields[-1]


def _heat_stack(theta0: SpectralScalar, times: np.ndarray, eps_kappa: float) -> np.ndarray:
    ksq = theta0.grid.ksq
    return np.stack([theta0.coeffs * np.exp(-eps_kappa * t * ksq) for t in times])


def _picard_once(theta0: SpectralScalar, T: float, params: PhysicalParams, max_iter: int, tol: float,
                 p: float, panels: int, order: int):
    grid = theta0.grid
    quad = TimeQuadrature(T, panels, order)
    op = DuhamelOperator(grid, quad, params.eps_kappa)
    times = quad.times
    n = len(quad.nodes)
    th1 = _heat_stack(theta0, times, params.eps_kappa)
    th1_norm = weighted_norm(th1, times, grid, p)
    cur = th1
    dists: list[float] = []
    for it in range(1, max_iter + 1):
        nxt = th1 + op.integrate(advection_terms(cur[:n], cur[:n], grid, params))
        nxt[:, 0, 0, 0] = 0.0
        diff = nxt - cur
        d_e = weighted_norm(diff, times, grid, p)
        d_2 = _l2_sup(diff, grid)
        dists.append(d_e)
        if not (math.isfinite(d_e) and math.isfinite(d_2)) or d_e > 1e3 * max(th1_norm, 1e-300):
            return None, dists
        cur = nxt
        if d_e <= tol and d_2 <= tol:
            return (quad, cur, th1_norm, it), dists
        if it >= 4 and all(dists[-k] > dists[-k - 1] for k in (1, 2, 3)):
            return None, dists
    return None, dists


def picard_solve(theta0: SpectralScalar, T: float = 1.0, params: PhysicalParams = PhysicalParams(),
                 max_iter: int = 50, tol: float = 1e-10, p: float = 4.0, panels: int = 16,
                 order: int = 8) -> MildIterate:
    """theta_1 = G(t) theta0, theta_{n+1} = theta_1 + B(theta_n, theta_n) on (0, T].

    Stops when successive iterates differ by at most ``tol`` both in the weighted norm
    and in sup_t L^2. On divergence T is halved and the solve retried, up to 4 times.
    ``iterations`` counts the B corrections applied.
    """
    if not params.eps_kappa > 0:
        raise ValueError("the mild formulation needs eps_kappa > 0")
    if not 0 < T <= 1:
        raise ValueError("T must lie in (0, 1]")
    if theta0.coeffs[0, 0, 0] != 0:
        raise ValueError("theta0 must be mean-zero")
    history = []
    for halving in range(5):
        res, dists = _picard_once(theta0, T, params, max_iter, tol, p, panels, order)
        history.append((T, dists[-3:]))
        if res is not None:
            quad, stack, th1_norm, it = res
            fields = [SpectralScalar(theta0.grid, c) for c in stack]
            return MildIterate(T, quad.times, fields, weighted_norm(stack, quad.times, theta0.grid, p), p, it,
                               dists, halving, th1_norm, quad)
        T *= 0.5
    raise MildDivergenceError(f"Picard iteration diverged for every horizon tried: {history}")


def mild_residual(sol: MildIterate, theta0: SpectralScalar, params: PhysicalParams) -> float:
    """max over output times of ||theta(t) - G(t) theta0 - B(theta, theta)(t)||_{L^2}."""
    if sol.quad is None:
        raise ValueError("iterate carries no quadrature")
    grid = theta0.grid
    stack = np.stack([f.coeffs for f in sol.fields])
    n = len(sol.quad.nodes)
    op = DuhamelOperator(grid, sol.quad, params.eps_kappa)
    rhs = _heat_stack(theta0, sol.time_nodes, params.eps_kappa) \
        + op.integrate(advection_terms(stack[:n], stack[:n], grid, params))
    rhs[:, 0, 0, 0] = 0.0
    return _l2_sup(stack - rhs, grid)


def contraction_estimate(grid: Grid, quad: TimeQuadrature, params: PhysicalParams, samples: int = 20,
                         seed: int = 0, amplitude: float = 1.0, p: float = 4.0) -> float:
    """Empirical K = max ||B(phi, phi)||_E / ||phi||_E^2 over heat flows of random smooth fields."""
    from .spectral import random_smooth
    op = DuhamelOperator(grid, quad, params.eps_kappa)
    times = quad.times
    n = len(quad.nodes)
    best = 0.0
    for s in range(samples):
        phi = _heat_stack(random_smooth(grid, seed + s, amplitude), times, params.eps_kappa)
        b = op.integrate(advection_terms(phi[:n], phi[:n], grid, params))
        best = max(best, weighted_norm(b, times, grid, p) / weighted_norm(phi, times, grid, p) ** 2)
    return best
