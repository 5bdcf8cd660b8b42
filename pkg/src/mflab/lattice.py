"""Periodic 1D lattice, spectral transforms and pair potentials.

Conventions
-----------
Sites ``x_j = j*dx`` for ``j = 0..M-1`` on the torus ``[0, L)``.
The forward transform carries ``dx`` and the inverse carries ``1/L``::

    psi_hat[k] = dx * sum_j psi[j] exp(-i k x_j)
    psi[j]     = (1/L) * sum_k psi_hat[k] exp(+i k x_j)

so that ``sum |psi|^2 dx == (1/L) sum |psi_hat|^2``.  Arrays in k-space are
kept in FFT order; ``Lattice.k`` is in that order as well.

Two kinetic discretisations are available through ``Lattice.kinetic``:
``"spectral"`` uses the exact dispersion ``hbar^2 k^2 / 2`` and ``"fd3"``
the 3-point Laplacian ``(2 hbar^2/dx^2) sin^2(k dx/2)``.  Every propagator
in the package reads the dispersion from the lattice, so exact, Hartree and
tree-expansion dynamics stay mutually consistent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

KINETIC_KINDS = ("spectral", "fd3")


@dataclass(frozen=True)
class Lattice:
    M: int
    L: float
    kinetic: str = "spectral"

    def __post_init__(self):
        if int(self.M) != self.M or self.M % 2 != 0:
            raise ValueError(f"M must be an even integer, got {self.M}")
        if self.M < 4:
            raise ValueError(f"M must be >= 4, got {self.M}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")
        if self.kinetic not in KINETIC_KINDS:
            raise ValueError(f"unknown kinetic discretisation {self.kinetic!r}")

    @property
    def dx(self) -> float:
        return self.L / self.M

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.M) * self.dx

    @property
    def k(self) -> np.ndarray:
        """Wavenumbers in FFT order; the Nyquist mode is ``-M/2 * 2pi/L``."""
        return 2 * np.pi * np.fft.fftfreq(self.M, d=self.dx)

    @property
    def k_sorted(self) -> np.ndarray:
        return 2 * np.pi / self.L * np.arange(-self.M // 2, self.M // 2)

    def dispersion(self, hbar: float) -> np.ndarray:
        """Single-particle kinetic energy per Fourier mode (FFT order)."""
        k = self.k
        if self.kinetic == "spectral":
            return 0.5 * hbar**2 * k**2
        return 2 * hbar**2 / self.dx**2 * np.sin(0.5 * k * self.dx) ** 2

    def kinetic_matrix(self, hbar: float) -> np.ndarray:
        """Kinetic operator as a real symmetric M x M matrix in the site basis."""
        eps = self.dispersion(hbar)
        # circulant: T[a, b] = (1/M) sum_k eps_k exp(i k (x_a - x_b))
        col = np.fft.ifft(eps).real
        idx = (np.arange(self.M)[:, None] - np.arange(self.M)[None, :]) % self.M
        return col[idx]

    def forward(self, values: np.ndarray, axis: int = -1) -> np.ndarray:
        return np.fft.fft(values, axis=axis) * self.dx

    def inverse(self, coeffs: np.ndarray, axis: int = -1) -> np.ndarray:
        return np.fft.ifft(coeffs, axis=axis) / self.dx


def build_lattice(M: int, L: float, kinetic: str = "spectral") -> Lattice:
    return Lattice(M=M, L=float(L), kinetic=kinetic)


@dataclass(frozen=True)
class Field:
    """Complex samples ``psi(x_j)`` of a single-particle wavefunction."""

    values: np.ndarray
    lattice: Lattice

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.lattice.M,):
            raise ValueError(f"field has shape {v.shape}, lattice needs ({self.lattice.M},)")
        object.__setattr__(self, "values", v)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.lattice.dx))

    def normalized(self) -> Field:
        return Field(self.values / self.norm(), self.lattice)

    def coefficients(self) -> np.ndarray:
        """Amplitudes in the orthonormal site basis, ``psi_j * sqrt(dx)``."""
        return self.values * np.sqrt(self.lattice.dx)

    @classmethod
    def from_coefficients(cls, c: np.ndarray, lattice: Lattice) -> Field:
        return cls(np.asarray(c) / np.sqrt(lattice.dx), lattice)

    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2


def free_propagate(psi: Field, t: float, hbar: float) -> Field:
    """Apply ``exp(-i H0 t / hbar)`` with ``H0`` the lattice kinetic operator."""
    if not hbar > 0:
        raise ValueError("hbar must be positive")
    lat = psi.lattice
    phase = np.exp(-1j * lat.dispersion(hbar) * t / hbar)
    return Field(np.fft.ifft(phase * np.fft.fft(psi.values)), lat)


def free_flow_axis(v: np.ndarray, axis: int, lattice: Lattice, t: float, hbar: float) -> np.ndarray:
    """Free propagation of a tensor along one particle axis."""
    phase = np.exp(-1j * lattice.dispersion(hbar) * t / hbar)
    shape = [1] * v.ndim
    shape[axis] = lattice.M
    return np.fft.ifft(np.fft.fft(v, axis=axis) * phase.reshape(shape), axis=axis)


@dataclass(frozen=True)
class PairPotential:
    """Even, real pair potential sampled on lattice displacements ``d*dx``."""

    samples: np.ndarray
    lattice: Lattice
    sup_norm: float = field(init=False)
    fourier: np.ndarray = field(init=False)

    def __post_init__(self):
        w = np.asarray(self.samples, dtype=float)
        if w.shape != (self.lattice.M,):
            raise ValueError("potential samples must match the lattice size")
        if not np.allclose(w, np.roll(w[::-1], 1), atol=1e-14, rtol=0):
            raise ValueError("pair potential must be even: w[d] == w[-d mod M]")
        object.__setattr__(self, "samples", w)
        object.__setattr__(self, "sup_norm", float(np.max(np.abs(w))))
        object.__setattr__(self, "fourier", np.fft.fft(w).real * self.lattice.dx)

    def table(self) -> np.ndarray:
        """``T[a, b] = w(x_a - x_b)`` on the lattice."""
        M = self.lattice.M
        idx = (np.arange(M)[:, None] - np.arange(M)[None, :]) % M
        return self.samples[idx]

    def derivative(self) -> np.ndarray:
        """Spectral derivative samples ``w'(d*dx)``; the Nyquist mode is dropped."""
        lat = self.lattice
        k = lat.k.copy()
        k[lat.M // 2] = 0.0
        return np.fft.ifft(1j * k * np.fft.fft(self.samples)).real

    def fourier_coefficients(self) -> np.ndarray:
        """Coefficients ``c_n`` with ``w(x_j) = sum_n c_n exp(i k_n x_j)`` (FFT order)."""
        return np.fft.fft(self.samples) / self.lattice.M

    def scaled(self, factor: float) -> PairPotential:
        return PairPotential(self.samples * factor, self.lattice)


def cosine_potential(lattice: Lattice, amplitude: float = 1.0) -> PairPotential:
    """``w(x) = a cos(2 pi x / L)``."""
    return PairPotential(amplitude * np.cos(2 * np.pi * lattice.x / lattice.L), lattice)


def gaussian_potential(lattice: Lattice, amplitude: float = 1.0, width: float = 0.5) -> PairPotential:
    """Periodised Gaussian bump centred at zero displacement."""
    d = lattice.x
    d = np.minimum(d, lattice.L - d)
    return PairPotential(amplitude * np.exp(-0.5 * (d / width) ** 2), lattice)


def constant_potential(lattice: Lattice, value: float = 1.0) -> PairPotential:
    return PairPotential(np.full(lattice.M, float(value)), lattice)


def zero_potential(lattice: Lattice) -> PairPotential:
    return constant_potential(lattice, 0.0)


def convolve_periodic(w: PairPotential, rho: np.ndarray, lattice: Lattice | None = None) -> np.ndarray:
    """``(w * rho)_j = sum_d w_d rho_{j-d} dx`` computed with FFTs."""
    rho = np.asarray(rho)
    if lattice is not None and lattice != w.lattice:
        raise ValueError("lattice mismatch between potential and density")
    if rho.shape[-1] != w.lattice.M:
        raise ValueError("lattice mismatch between potential and density")
    out = np.fft.ifft(np.fft.fft(w.samples) * np.fft.fft(rho, axis=-1), axis=-1) * w.lattice.dx
    if np.isrealobj(rho):
        return out.real
    return out


def gaussian_packet(lattice: Lattice, center: float, width: float, k0: float = 0.0) -> Field:
    """Normalised periodised Gaussian ``exp(-(x-x0)^2/(4 s^2) + i k0 x)``.

    ``k0`` should be a multiple of ``2 pi / L`` for a periodic phase.
    """
    x = lattice.x
    d = (x - center + lattice.L / 2) % lattice.L - lattice.L / 2
    psi = np.exp(-(d**2) / (4 * width**2) + 1j * k0 * x)
    return Field(psi, lattice).normalized()


def plane_wave(lattice: Lattice, mode: int) -> Field:
    """Normalised plane wave with wavenumber ``mode * 2 pi / L``."""
    k = 2 * np.pi * mode / lattice.L
    return Field(np.exp(1j * k * lattice.x), lattice).normalized()
