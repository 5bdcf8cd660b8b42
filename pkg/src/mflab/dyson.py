"""Time-ordered (Dyson) expansion of mean-field observables in the interaction.

For a p-particle kernel ``a`` the Hartree expectation ``<psi_t^{(x)p}, a psi_t^{(x)p}>``
is expanded as ``sum_n T_n`` with

    T_n = int_{0<t_n<...<t_1<t} <psi^{(x)(p+n)}, g^(n)(t_1..t_n) psi^{(x)(p+n)}>
    g^(0) = U0(-t) a U0(t)
    g^(n) = (i/hbar) sum_{i<p+n} [w_{t_n}^{(i, p+n)}, g^(n-1) (x) 1]

where ``w_s = U0(-s) w U0(s)`` is the free-Heisenberg pair interaction and the
integrals run over the ordered simplex.  Two routes compute the terms:

``tree``    operator recursion applied matrix-free to product tensors, with a
            tensor-product Gauss-Legendre rule on the simplex.  Cost grows as
            ``M^(p+n)``; capped at ``p+n <= TREE_ORDER_CAP``.
``series``  ``T_n`` is the n-th Taylor coefficient of the Hartree expectation
            in a coupling ``lambda`` (``w -> lambda w``).  The Hartree flow is
            continued to complex ``lambda`` by evolving ``psi`` and an
            independent partner ``phi`` (equal to ``conj(psi)`` on the real
            axis); coefficients follow from a discrete Cauchy integral.

The nested-bracket representation is provided as an independent oracle with
the bracket ``{c_j, conj(c_k)} = i delta_jk`` on orthonormal coefficients.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from math import ceil, comb, factorial, sqrt

import numpy as np

from .errors import CapError
from .hartree import hartree_evolve
from .lattice import Field, Lattice, PairPotential, convolve_periodic, free_flow_axis
from .observables import PKernel, hartree_expect
from .phasespace import Symbol, sigma_norm, weyl_symbol

TREE_ORDER_CAP = 4
TREE_SITE_CAP = 8
CONTOUR_POINTS = 64


# --- bounds ----------------------------------------------------------------


def k_opt(epsilon: float) -> int:
    """Truncation order ``max(1, ceil(epsilon^-1/2))``."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    return max(1, ceil(1.0 / sqrt(epsilon) - 1e-12))


def fixed_hbar_bound(n: int, p: int, w_norm: float, a_norm: float, hbar: float) -> float:
    """Operator-norm bound ``(p+n)!/p! (2||w||/hbar)^n ||a||`` on ``g^(n)``."""
    return factorial(p + n) / factorial(p) * (2 * w_norm / hbar) ** n * a_norm


def uniform_norm_bound(n: int, p: int, w_sigma: float, a_sigma: float, delta: float | None = None) -> float:
    """hbar-independent bound ``2^n (e^2 delta^2)^-n (p+n)!/p! ||w||^n ||a||`` in sigma-norms.

    The default loss per bracket is ``delta = 1/(2n)``.
    """
    if n == 0:
        return a_sigma
    delta = 1.0 / (2 * n) if delta is None else delta
    return 2**n * (np.e**2 * delta**2) ** (-n) * factorial(p + n) / factorial(p) * w_sigma**n * a_sigma


def remainder_envelope(k: int, p: int, a_norm: float, epsilon: float, hbar: float, terms: int = 400) -> float:
    """``||a|| sum_{n>k} C(p+n, n) (2 epsilon / hbar)^n`` with ``epsilon = ||w|| t``."""
    r = 2 * epsilon / hbar
    if r >= 1:
        return float("inf")
    total = 0.0
    for n in range(k + 1, k + 1 + terms):
        term = comb(p + n, n) * r**n
        total += term
        if term < 1e-17 * total:
            break
    return a_norm * total


def uniform_envelope(k: int, p: int, a_sigma: float, epsilon: float) -> float:
    """``p 2^p ||a||_sigma sum_{n<=k} (n!)^2 (2 epsilon)^n``; grows factorially in k."""
    return p * 2**p * a_sigma * sum(factorial(n) ** 2 * (2 * epsilon) ** n for n in range(1, k + 1))


# --- simplex quadrature ----------------------------------------------------


@dataclass(frozen=True)
class SimplexQuadrature:
    """Iterated Gauss-Legendre rule on ``{0 < t_n < ... < t_1 < t}``."""

    q: int = 8

    def nodes(self, n: int, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(times[K, n], weights[K])`` with ``K = q^n``."""
        x, wq = np.polynomial.legendre.leggauss(self.q)
        u, wu = 0.5 * (x + 1), 0.5 * wq
        times = np.full((1, 0), 0.0)
        weights = np.array([1.0])
        upper = np.array([t])
        for _ in range(n):
            new = upper[:, None] * u[None, :]
            weights = (weights * upper)[:, None] * wu[None, :]
            times = np.concatenate([np.repeat(times, self.q, axis=0), new.reshape(-1, 1)], axis=1)
            weights = weights.ravel()
            upper = new.ravel()
        return times, weights


# --- tree route ------------------------------------------------------------


def _w_on_axes(lattice: Lattice, w: PairPotential, ndim: int, i: int, j: int) -> np.ndarray:
    shape = [1] * ndim
    shape[i] = shape[j] = lattice.M
    T = w.table()
    return (T if i < j else T.T).reshape(shape)


def apply_w_t(v: np.ndarray, i: int, j: int, t: float, hbar: float, w: PairPotential) -> np.ndarray:
    """``U0(-t) w(x_i - x_j) U0(t)`` acting on axes ``i, j`` of a site tensor."""
    if i == j or not (0 <= i < v.ndim and 0 <= j < v.ndim):
        raise ValueError(f"need two distinct particle axes below {v.ndim}, got ({i}, {j})")
    lat = w.lattice
    u = free_flow_axis(free_flow_axis(v, i, lat, t, hbar), j, lat, t, hbar)
    u = u * _w_on_axes(lat, w, v.ndim, i, j)
    return free_flow_axis(free_flow_axis(u, i, lat, -t, hbar), j, lat, -t, hbar)


def _apply_leading(mat: np.ndarray, v: np.ndarray, p: int) -> np.ndarray:
    M = v.shape[0]
    rest = v.shape[p:]
    return (mat @ v.reshape(M**p, -1)).reshape((M,) * p + rest)


def _apply_g(base: np.ndarray, p: int, times, hbar: float, w: PairPotential, v: np.ndarray) -> np.ndarray:
    # g^(n) acts on the leading p+n axes; trailing axes are spectators
    n = len(times)
    if n == 0:
        return _apply_leading(base, v, p)
    tn = times[n - 1]
    last = p + n - 1
    inner = _apply_g(base, p, times[:-1], hbar, w, v)
    left = sum(apply_w_t(inner, i, last, tn, hbar, w) for i in range(last))
    wv = sum(apply_w_t(v, i, last, tn, hbar, w) for i in range(last))
    right = _apply_g(base, p, times[:-1], hbar, w, wv)
    return (1j / hbar) * (left - right)


def tree_amplitude_apply(
    base: np.ndarray, p: int, times, hbar: float, w: PairPotential, v: np.ndarray
) -> np.ndarray:
    """Apply ``g^(n)(t_1..t_n)`` (built on ``base`` = ``g^(0)``) to a tensor of shape ``(M,)*(p+n)``."""
    if v.ndim != p + len(times):
        raise ValueError("tensor rank must equal p + n")
    return _apply_g(base, p, times, hbar, w, v)


def _product_tensor(c: np.ndarray, order: int) -> np.ndarray:
    out = c
    for _ in range(order - 1):
        out = np.multiply.outer(out, c)
    return out


def tree_term(
    a: PKernel, psi: Field, t: float, n: int, hbar: float, w: PairPotential, quad: SimplexQuadrature | None = None
) -> complex:
    """``T_n`` by quadrature of tree amplitudes."""
    lat = a.lattice
    p = a.p
    if p + n > TREE_ORDER_CAP or lat.M > TREE_SITE_CAP:
        raise CapError(
            f"tree route limited to p+n <= {TREE_ORDER_CAP} and M <= {TREE_SITE_CAP} (got p+n={p + n}, M={lat.M})"
        )
    base = a.heisenberg(t, hbar)
    c = psi.coefficients()
    if n == 0:
        v = c if p == 1 else np.kron(c, c)
        return complex(np.vdot(v, base @ v))
    quad = quad or SimplexQuadrature()
    times, weights = quad.nodes(n, t)
    Psi = _product_tensor(c, p + n)
    total = 0.0 + 0.0j
    for ts, wt in zip(times, weights):
        total += wt * np.vdot(Psi, _apply_g(base, p, ts, hbar, w, Psi))
    return complex(total)


# --- series route ----------------------------------------------------------


def coupling_series_terms(
    a: PKernel,
    psi: Field,
    t: float,
    order: int,
    hbar: float,
    w: PairPotential,
    dt: float,
    points: int = CONTOUR_POINTS,
    radius: float = 1.0,
) -> np.ndarray:
    """Taylor coefficients ``T_0..T_order`` of the Hartree expectation in the coupling.

    The complexified split-step flow uses the same Strang scheme and ``dt``
    as ``hartree_evolve``, so the sum of all coefficients reproduces the
    discrete Hartree value exactly.
    """
    if order >= points // 2:
        raise ValueError("too few contour points for the requested order")
    lat = psi.lattice
    theta = 2 * np.pi * np.arange(points) / points
    lam = radius * np.exp(1j * theta)
    nsteps = int(round(t / dt))
    eps = lat.dispersion(hbar)
    kin_psi = np.exp(-0.5j * eps * dt / hbar)
    kin_phi = kin_psi.conj()
    u = np.tile(psi.values, (points, 1))
    v = np.tile(psi.values.conj(), (points, 1))
    for _ in range(nsteps):
        u = np.fft.ifft(kin_psi * np.fft.fft(u, axis=1), axis=1)
        v = np.fft.ifft(kin_phi * np.fft.fft(v, axis=1), axis=1)
        V = lam[:, None] * convolve_periodic(w, u * v)
        u = u * np.exp(-1j * V * dt / hbar)
        v = v * np.exp(1j * V * dt / hbar)
        u = np.fft.ifft(kin_psi * np.fft.fft(u, axis=1), axis=1)
        v = np.fft.ifft(kin_phi * np.fft.fft(v, axis=1), axis=1)
    s = np.sqrt(lat.dx)
    cu, cv = u * s, v * s
    if a.p == 2:
        cu = np.einsum("ki,kj->kij", cu, cu).reshape(points, -1)
        cv = np.einsum("ki,kj->kij", cv, cv).reshape(points, -1)
    F = np.einsum("ki,ij,kj->k", cv, a.matrix, cu)
    coeffs = np.fft.fft(F) / points
    return coeffs[: order + 1] / radius ** np.arange(order + 1)


# --- expansion driver ------------------------------------------------------


@dataclass
class DysonResult:
    p: int
    k: int
    epsilon: float
    hbar: float
    t: float
    method: str
    terms: list
    sum: float
    hartree: float
    residual_vs_hartree: float
    bounds: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def _real(z: complex, hermitian: bool):
    return float(np.real(z)) if hermitian else complex(z)


def dyson_series_expectation(
    a: PKernel,
    psi: Field,
    t: float,
    k: int,
    hbar: float,
    w: PairPotential,
    dt: float = 1e-3,
    method: str = "auto",
    quad: SimplexQuadrature | None = None,
    sigma: float = 1.0,
) -> DysonResult:
    """Truncated expansion ``sum_{n<=k} T_n`` compared against Hartree dynamics.

    ``method`` is ``tree``, ``series`` or ``auto`` (tree when within caps).
    ``epsilon = ||w||_inf * t``.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    if not hbar > 0 or t < 0:
        raise ValueError("need hbar > 0 and t >= 0")
    if method not in ("auto", "tree", "series"):
        raise ValueError(f"unknown method {method!r}")
    lat = a.lattice
    if method == "auto":
        method = "tree" if (a.p + k <= TREE_ORDER_CAP and lat.M <= TREE_SITE_CAP) else "series"
    if method == "tree":
        terms = [tree_term(a, psi, t, n, hbar, w, quad) for n in range(k + 1)]
    else:
        terms = list(coupling_series_terms(a, psi, t, k, hbar, w, dt))
    traj = hartree_evolve(psi, t, dt, hbar, w)
    ref = hartree_expect(traj.final, a)
    total = sum(terms)
    epsilon = w.sup_norm * t
    a_norm = a.op_norm
    bounds = {
        "fixed_hbar": [t**n / factorial(n) * fixed_hbar_bound(n, a.p, w.sup_norm, a_norm, hbar) for n in range(k + 1)],
        "remainder": remainder_envelope(k, a.p, a_norm, epsilon, hbar),
    }
    if a.p == 1:
        w_sig = potential_sigma_norm(w, sigma)
        a_sig = sigma_norm(weyl_symbol(a, hbar), sigma)
        bounds["uniform"] = [t**n / factorial(n) * uniform_norm_bound(n, 1, w_sig, a_sig) for n in range(k + 1)]
    herm = a.hermitian
    terms_out = [_real(z, herm) for z in terms]
    if not herm:
        terms_out = [[z.real, z.imag] for z in terms_out]
    return DysonResult(
        p=a.p,
        k=k,
        epsilon=epsilon,
        hbar=hbar,
        t=t,
        method=method,
        terms=terms_out,
        sum=float(np.real(total)),
        hartree=float(np.real(ref)),
        residual_vs_hartree=float(abs(total - ref)),
        bounds=bounds,
    )


def potential_sigma_norm(w: PairPotential, sigma: float) -> float:
    """sigma-norm of a position-only symbol: ``sum |w_n| exp(sigma |2 pi n / L|)``."""
    lat = w.lattice
    S = np.abs(lat.k)
    return float(np.sum(np.abs(w.fourier_coefficients()) * np.exp(sigma * S)))


def potential_symbol(w: PairPotential, hbar: float) -> Symbol:
    """The pair potential as a phase-space symbol depending on x only."""
    lat = w.lattice
    c = np.zeros((lat.M, lat.M), dtype=complex)
    c[:, 0] = w.fourier_coefficients()
    return Symbol(c, 2 * np.pi / lat.L, lat.dx / hbar)


# --- nested-bracket oracle -------------------------------------------------


def _wirtinger_grad(F, c: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """``(dF/dc, dF/dconj(c))`` by central differences in real and imaginary parts."""
    M = len(c)
    dz = np.zeros(M, dtype=complex)
    dzb = np.zeros(M, dtype=complex)
    for j in range(M):
        e = np.zeros(M, dtype=complex)
        e[j] = h
        fx = (F(c + e) - F(c - e)) / (2 * h)
        fy = (F(c + 1j * e) - F(c - 1j * e)) / (2 * h)
        dz[j] = 0.5 * (fx - 1j * fy)
        dzb[j] = 0.5 * (fx + 1j * fy)
    return dz, dzb


def poisson_bracket_fd(F, G, h: float = 1e-4):
    """``{F, G} = i sum_j (dF/dc_j dG/dc*_j - dF/dc*_j dG/dc_j)`` as a new functional."""

    def bracket(c):
        fz, fzb = _wirtinger_grad(F, c, h)
        gz, gzb = _wirtinger_grad(G, c, h)
        return 1j * np.sum(fz * gzb - fzb * gz)

    return bracket


def nested_poisson_oracle(
    a: PKernel, psi: Field, times, hbar: float, w: PairPotential, t: float, h: float = 1e-4
) -> complex:
    """``hbar^-n {W_{t_n}, ... {W_{t_1}, A_t}}`` at ``psi``, by finite-difference brackets.

    ``A_t(c) = <c^{(x)p}, U0(-t) a U0(t) c^{(x)p}>`` and
    ``W_s(c) = (1/2) sum_ab |u_a|^2 |u_b|^2 w(x_a - x_b)`` with ``u = U0(s) c``.
    Functionals are evaluated on independent ``c`` and ``conj(c)`` via real
    and imaginary parts, so no holomorphic structure is assumed.
    """
    lat = a.lattice
    base = a.heisenberg(t, hbar)
    W = w.table()

    def A(c):
        v = c if a.p == 1 else np.kron(c, c)
        return np.vdot(v, base @ v)

    def W_at(s):
        def f(c):
            u = free_flow_axis(c, 0, lat, s, hbar)
            rho = np.abs(u) ** 2
            return 0.5 * rho @ W @ rho

        return f

    F = A
    for s in times:
        F = poisson_bracket_fd(W_at(s), F, h)
    return complex(F(psi.coefficients())) / hbar ** len(times)
