"""Complex Hermitian linear algebra and density-matrix primitives.

All matrices are plain numpy arrays of complex dtype.  A density matrix is
any square array passing :func:`validate_density`; no wrapper class is used.
Eigenproblems go through ``numpy.linalg.eigh`` exclusively, so unitaries
produced here are unitary up to round-off by construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ToleranceConfig",
    "DEFAULT_TOL",
    "DensityInvariantError",
    "DiagonalObservable",
    "HermitianPropagator",
    "basis_state",
    "commutator",
    "density_violations",
    "evolve",
    "expectation",
    "fidelity_to_basis",
    "hermitian_expm",
    "hermitize",
    "is_hermitian",
    "purity",
    "spectrum",
    "validate_density",
]


@dataclass(frozen=True)
class ToleranceConfig:
    """Single source of truth for the numerical tolerances used everywhere."""

    hermiticity: float = 1e-10
    trace: float = 1e-9
    psd: float = 1e-9          # smallest eigenvalue >= -psd
    unitarity: float = 1e-9
    spectrum_residual: float = 1e-8
    degeneracy_gap: float = 1e-8
    imag_part: float = 1e-9


DEFAULT_TOL = ToleranceConfig()


class DensityInvariantError(ValueError):
    """Raised when a candidate density matrix violates an invariant.

    ``violations`` is a list of ``(name, magnitude)`` pairs naming each
    violated invariant and by how much.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        msg = "; ".join(f"{name}: {mag:.3e}" for name, mag in self.violations)
        super().__init__(f"density matrix invariants violated: {msg}")


def _as_square_complex(m, name="matrix"):
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a.view(float))):
        raise ValueError(f"{name} contains NaN or Inf entries")
    return a


def is_hermitian(a, tol=DEFAULT_TOL.hermiticity):
    a = np.asarray(a)
    return float(np.max(np.abs(a - a.conj().T))) <= tol


def hermitize(a):
    """Hermitian part (A + A†)/2, used to absorb round-off drift."""
    a = np.asarray(a, dtype=complex)
    return (a + a.conj().T) / 2


def density_violations(m, tol=DEFAULT_TOL):
    """Check the three density-matrix invariants; return [(name, magnitude)].

    Empty list means the matrix is a valid density matrix at the given
    tolerances.
    """
    a = _as_square_complex(m, "density matrix")
    out = []
    herm = float(np.max(np.abs(a - a.conj().T)))
    if herm > tol.hermiticity:
        out.append(("hermiticity", herm))
    tr = abs(complex(np.trace(a)) - 1.0)
    if tr > tol.trace:
        out.append(("trace", tr))
    w = np.linalg.eigvalsh(hermitize(a))
    if w[0] < -tol.psd:
        out.append(("positivity", float(-w[0])))
    return out


def validate_density(m, tol=DEFAULT_TOL):
    """Return ``m`` as a complex array iff it is a valid density matrix.

    Raises :class:`DensityInvariantError` carrying the violation report
    otherwise.
    """
    a = _as_square_complex(m, "density matrix")
    bad = density_violations(a, tol)
    if bad:
        raise DensityInvariantError(bad)
    return a


def basis_state(n, dim):
    """Projector |n><n| as a density matrix."""
    if not 0 <= n < dim:
        raise IndexError(f"basis index {n} out of range for dimension {dim}")
    rho = np.zeros((dim, dim), dtype=complex)
    rho[n, n] = 1.0
    return rho


def commutator(a, b):
    """AB - BA; anti-Hermitian when both inputs are Hermitian."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a @ b - b @ a


def expectation(a, rho, tol=DEFAULT_TOL):
    """Re Tr(a rho) for Hermitian a; asserts the imaginary part is round-off."""
    a = np.asarray(a, dtype=complex)
    rho = np.asarray(rho, dtype=complex)
    if a.shape != rho.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {rho.shape}")
    val = complex(np.trace(a @ rho))
    if abs(val.imag) > tol.imag_part:
        raise ValueError(f"expectation has non-negligible imaginary part {val.imag:.3e}")
    return val.real


def hermitian_expm(h, s=1.0, tol=DEFAULT_TOL):
    """Unitary exp(-i*s*h) for Hermitian h, via eigendecomposition."""
    h = _as_square_complex(h, "hamiltonian")
    if not is_hermitian(h, tol.hermiticity):
        raise ValueError("hermitian_expm requires a Hermitian input")
    w, v = np.linalg.eigh(h)
    u = (v * np.exp(-1j * s * w)) @ v.conj().T
    return u


def evolve(rho, u_mat, tol=DEFAULT_TOL):
    """Unitary conjugation U rho U†."""
    rho = np.asarray(rho, dtype=complex)
    u = np.asarray(u_mat, dtype=complex)
    if rho.shape != u.shape:
        raise ValueError(f"dimension mismatch: {rho.shape} vs {u.shape}")
    defect = float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))
    if defect > tol.unitarity:
        raise ValueError(f"propagator is not unitary (defect {defect:.3e})")
    return u @ rho @ u.conj().T


def fidelity_to_basis(rho, n):
    """Population Tr(rho |n><n|) = rho_nn."""
    rho = np.asarray(rho)
    if not 0 <= n < rho.shape[0]:
        raise IndexError(f"basis index {n} out of range for dimension {rho.shape[0]}")
    return float(rho[n, n].real)


def purity(rho):
    """Tr(rho^2)."""
    rho = np.asarray(rho, dtype=complex)
    return float(np.trace(rho @ rho).real)


def spectrum(a, tol=DEFAULT_TOL):
    """Ascending eigenvalues of a Hermitian matrix, with reconstruction check."""
    a = _as_square_complex(a, "matrix")
    if not is_hermitian(a, tol.hermiticity):
        raise ValueError("spectrum requires a Hermitian input")
    w, v = np.linalg.eigh(a)
    resid = float(np.max(np.abs(a - (v * w) @ v.conj().T)))
    if resid > tol.spectrum_residual:
        raise ValueError(f"eigendecomposition residual {resid:.3e} too large")
    return w


@dataclass(frozen=True)
class DiagonalObservable:
    """Energy operator given by its diagonal and the index of the minimum.

    Internally 0-based; published figures for the 8-level example use
    1-based indices (their n=3 is our n_star=2).
    """

    sigma: np.ndarray
    n_star: int

    def __post_init__(self):
        sig = np.asarray(self.sigma, dtype=float)
        object.__setattr__(self, "sigma", sig)
        if sig.ndim != 1 or sig.size < 2:
            raise ValueError("sigma must be a vector of at least two energies")
        if not 0 <= self.n_star < sig.size:
            raise IndexError(f"n_star {self.n_star} out of range")
        if sig[self.n_star] > sig.min() + 1e-12:
            raise ValueError("sigma[n_star] is not the minimum energy")

    @property
    def dim(self):
        return int(self.sigma.size)

    def matrix(self):
        return np.diag(self.sigma.astype(complex))

    def min_gap(self):
        """Smallest pairwise |p_i - p_j| over i != j."""
        s = np.sort(self.sigma)
        return float(np.min(np.diff(s)))

    def assert_nondegenerate(self, tol=DEFAULT_TOL.degeneracy_gap):
        if self.min_gap() <= tol:
            raise ValueError(f"spectrum is degenerate (min gap {self.min_gap():.3e})")

    def to_json(self):
        return {"diag": self.sigma.tolist(), "n_star": int(self.n_star)}

    @classmethod
    def from_json(cls, obj):
        return cls(np.asarray(obj["diag"], dtype=float), int(obj["n_star"]))


class HermitianPropagator:
    """Caches the eigendecomposition of a Hamiltonian to build exp(-iHu) fast.

    Used in the inner loops of the controllers and simulators, where the same
    H1 is exponentiated at thousands of control values.
    """

    def __init__(self, h, tol=DEFAULT_TOL):
        h = _as_square_complex(h, "hamiltonian")
        if not is_hermitian(h, tol.hermiticity):
            raise ValueError("propagator requires a Hermitian Hamiltonian")
        self.h = h
        self._w, self._v = np.linalg.eigh(h)
        self._vh = self._v.conj().T

    @property
    def dim(self):
        return self.h.shape[0]

    def unitary(self, u):
        """exp(-i * H * u)."""
        return (self._v * np.exp(-1j * u * self._w)) @ self._vh

    def conjugate(self, rho, u):
        """exp(-iHu) rho exp(+iHu) without re-diagonalizing."""
        umat = self.unitary(u)
        return umat @ rho @ umat.conj().T


def matrix_to_json(a):
    """Serialize a complex matrix as {"n", "re", "im"} (row-major lists)."""
    a = _as_square_complex(a)
    return {"n": a.shape[0], "re": a.real.tolist(), "im": a.imag.tolist()}


def matrix_from_json(obj):
    n = int(obj["n"])
    re = np.asarray(obj["re"], dtype=float)
    im = np.asarray(obj["im"], dtype=float)
    if re.shape != (n, n) or im.shape != (n, n):
        raise ValueError(f"matrix file claims n={n} but arrays have shapes {re.shape}, {im.shape}")
    return re + 1j * im


def save_matrix(path, a, **extra):
    obj = matrix_to_json(a)
    obj.update(extra)
    obj.setdefault("index_convention", "0-based")
    with open(path, "w") as f:
        json.dump(obj, f, indent=2)


def load_matrix(path):
    with open(path) as f:
        return matrix_from_json(json.load(f))
