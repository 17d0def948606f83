"""Spin-1 defect Hamiltonians and their eigen-decomposition.

All energies are frequencies in GHz (Hamiltonian divided by Planck's
constant).  The electron basis is ordered ``|+1>, |0>, |-1>`` and nuclear
spins follow in declaration order, each with ``m_I`` descending, so that
state vectors are reproducible between runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionCap, NotHermitian, ValidationError

#: Bohr magneton over Planck constant, GHz per gauss.
MU_B_GHZ_PER_G = 1.3996245e-3

#: Default Lorentzian widths (MHz) per manifold; plumbing defaults.
DEFAULT_FWHM_MHZ = {"gs": 60.0, "es": 150.0}

DEFAULT_DIMENSION_CAP = 324

# electron basis indices
I_PLUS, I_ZERO, I_MINUS = 0, 1, 2

_HERMITIAN_TOL = 1e-12


@dataclass(frozen=True)
class NucleusSpec:
    """A set of ``count`` equivalent nuclei of spin ``I`` with isotropic
    hyperfine constant ``A`` (MHz)."""

    I: float
    A: float
    count: int = 1

    def __post_init__(self):
        two_i = 2 * self.I
        if two_i < 1 or abs(two_i - round(two_i)) > 1e-9:
            raise ValidationError(f"2I must be a positive integer, got I={self.I}")
        if int(self.count) != self.count or self.count < 1:
            raise ValidationError(f"count >= 1 required, got {self.count}")
        if not math.isfinite(self.A):
            raise ValidationError("A must be finite")

    @property
    def multiplicity(self) -> int:
        return int(round(2 * self.I)) + 1


@dataclass(frozen=True)
class SpinSystem:
    """Electron triplet (D, E in GHz; g dimensionless) plus coupled nuclei."""

    D: float
    E: float
    g: float
    nuclei: tuple[NucleusSpec, ...] = ()
    label: str = "es"

    def __post_init__(self):
        object.__setattr__(self, "nuclei", tuple(self.nuclei))
        if not self.D > 0:
            raise ValidationError("D > 0")
        if not self.E >= 0:
            raise ValidationError("E ≥ 0")
        if not self.g > 0:
            raise ValidationError("g > 0")
        if not self.E < self.D:
            raise ValidationError("E < D")
        if self.label not in ("gs", "es"):
            raise ValidationError(f"label must be 'gs' or 'es', got {self.label!r}")

    @property
    def nuclear_dims(self) -> tuple[int, ...]:
        return tuple(n.multiplicity for n in self.nuclei for _ in range(n.count))

    @property
    def dimension(self) -> int:
        return 3 * int(np.prod(self.nuclear_dims, dtype=int))

    def electron_only(self) -> "SpinSystem":
        return SpinSystem(self.D, self.E, self.g, (), self.label)

    @property
    def lac_field(self) -> float:
        """Field (G) at which the 0 and -1 levels cross for an axial field."""
        return math.sqrt(self.D**2 - self.E**2) / (self.g * MU_B_GHZ_PER_G)


@dataclass(frozen=True)
class FieldPoint:
    """Applied field: magnitude in gauss, polar angle from the c axis and
    azimuth, both in degrees."""

    B: float
    theta: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        if not self.B >= 0:
            raise ValidationError("B ≥ 0")
        if not 0 <= self.theta <= 180:
            raise ValidationError("0 ≤ theta ≤ 180")
        if not math.isfinite(self.phi):
            raise ValidationError("phi must be finite")

    @property
    def vector(self) -> np.ndarray:
        th, ph = math.radians(self.theta), math.radians(self.phi)
        return self.B * np.array(
            [math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)]
        )


@dataclass(frozen=True)
class Hamiltonian:
    """Hermitian operator in GHz over the electron ⊗ nuclear product basis."""

    matrix: np.ndarray
    nuclear_dims: tuple[int, ...] = ()
    label: str | None = None

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class EigenSolution:
    """Ascending energies (GHz), eigenvectors as columns, and per-level
    electron overlaps ``(|alpha|^2, |beta|^2, |gamma|^2)`` against
    ``|0>_Z, |-1>_Z, |+1>_Z``."""

    energies: np.ndarray
    states: np.ndarray
    overlaps: np.ndarray
    nuclear_dims: tuple[int, ...] = ()
    label: str | None = None

    @property
    def nuclear_dim(self) -> int:
        return self.states.shape[0] // 3

    def __len__(self):
        return len(self.energies)


@dataclass(frozen=True)
class TransitionLine:
    center: float
    weight: float
    fwhm: float
    branch: str = "other"
    levels: tuple[int, int] = field(default=(0, 0), compare=False)


def spin_matrices(s: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (Sx, Sy, Sz) for spin ``s`` with m ordered descending."""
    m = s - np.arange(int(round(2 * s)) + 1)
    sp = np.diag(np.sqrt(s * (s + 1) - m[1:] * (m[1:] + 1)), k=1).astype(complex)
    sx = 0.5 * (sp + sp.conj().T)
    sy = -0.5j * (sp - sp.conj().T)
    return sx, sy, np.diag(m).astype(complex)


SX, SY, SZ = spin_matrices(1)


def _embed(op: np.ndarray, position: int, dims: list[int]) -> np.ndarray:
    out = np.array([[1.0 + 0j]])
    for k, d in enumerate(dims):
        out = np.kron(out, op if k == position else np.eye(d))
    return out


def electron_operators(nuclear_dims=()) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Electron Sx, Sy, Sz acting as identity on the nuclei."""
    dims = [3, *nuclear_dims]
    return tuple(_embed(op, 0, dims) for op in (SX, SY, SZ))


def electron_matrix(D: float, E: float, g: float, field: FieldPoint) -> np.ndarray:
    """Raw 3x3 triplet Hamiltonian (GHz) without SpinSystem validation, so
    limiting cases such as D = 0 stay reachable."""
    bx, by, bz = g * MU_B_GHZ_PER_G * field.vector
    return (
        D * (SZ @ SZ - 2.0 / 3.0 * np.eye(3))
        + E * (SX @ SX - SY @ SY)
        + bx * SX
        + by * SY
        + bz * SZ
    )


def build_electron_hamiltonian(sys: SpinSystem, field: FieldPoint) -> Hamiltonian:
    return Hamiltonian(electron_matrix(sys.D, sys.E, sys.g, field), (), sys.label)


def build_coupled_hamiltonian(
    sys: SpinSystem, field: FieldPoint, cap: int = DEFAULT_DIMENSION_CAP
) -> Hamiltonian:
    """Electron Hamiltonian plus ``-A S.I`` for every listed nucleus.

    Nuclear Zeeman and quadrupole terms are omitted.
    """
    dims = [3, *sys.nuclear_dims]
    total = int(np.prod(dims))
    if total > cap:
        raise DimensionCap(f"product dimension {total} exceeds cap {cap}; prune nuclei")
    h = np.kron(build_electron_hamiltonian(sys, field).matrix, np.eye(total // 3))
    s_ops = [_embed(op, 0, dims) for op in (SX, SY, SZ)]
    pos = 1
    for nuc in sys.nuclei:
        i_ops = spin_matrices(nuc.I)
        for _ in range(nuc.count):
            a = nuc.A * 1e-3
            for s_op, i_op in zip(s_ops, i_ops):
                h = h - a * s_op @ _embed(i_op, pos, dims)
            pos += 1
    return Hamiltonian(h, tuple(dims[1:]), sys.label)


def _fix_phase(v: np.ndarray) -> np.ndarray:
    k = np.argmax(np.abs(v) > np.abs(v).max() - 1e-9)
    return v * (abs(v[k]) / v[k])


def diagonalize(H: Hamiltonian | np.ndarray, degeneracy_tol: float = 1e-9) -> EigenSolution:
    """Hermitian eigensolve with deterministic treatment of degenerate levels.

    Within a degenerate cluster the basis is rotated to diagonalize the
    electron ``Sz``, so pure ``|+1>``/``|-1>`` states come out whenever the
    cluster allows it.  Each vector's largest component is made real and
    positive.
    """
    if not isinstance(H, Hamiltonian):
        m = np.asarray(H, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] % 3:
            raise NotHermitian(f"expected a square matrix of dimension 3n, got {m.shape}")
        # a bare matrix is read as electron x one nuclear factor
        H = Hamiltonian(m, (m.shape[0] // 3,) if m.shape[0] > 3 else ())
    m = np.asarray(H.matrix, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] % 3:
        raise NotHermitian(f"expected a square matrix of dimension 3n, got {m.shape}")
    asym = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
    if asym > _HERMITIAN_TOL * max(1.0, np.max(np.abs(m))):
        raise NotHermitian(f"max|H - H^dagger| = {asym:.3g} GHz")
    m = 0.5 * (m + m.conj().T)
    energies, vecs = np.linalg.eigh(m)
    n = len(energies)
    sz = np.kron(SZ, np.eye(n // 3))
    tol = degeneracy_tol * max(1.0, np.max(np.abs(energies)))
    start = 0
    while start < n:
        stop = start + 1
        while stop < n and energies[stop] - energies[stop - 1] < tol:
            stop += 1
        if stop - start > 1:
            block = vecs[:, start:stop]
            proj = block.conj().T @ sz @ block
            w, u = np.linalg.eigh(0.5 * (proj + proj.conj().T))
            vecs[:, start:stop] = (block @ u)[:, ::-1]
            energies[start:stop] = np.mean(energies[start:stop])
        start = stop
    for k in range(n):
        vecs[:, k] = _fix_phase(vecs[:, k])
    probs = (np.abs(vecs) ** 2).reshape(3, n // 3, n).sum(axis=1)
    overlaps = np.stack([probs[I_ZERO], probs[I_MINUS], probs[I_PLUS]], axis=1)
    return EigenSolution(energies, vecs, overlaps, tuple(H.nuclear_dims), H.label)


def solve(sys: SpinSystem, field: FieldPoint, nuclei: bool = False, cap: int = DEFAULT_DIMENSION_CAP) -> EigenSolution:
    """Shortcut: build the (electron-only or coupled) Hamiltonian and diagonalize."""
    if nuclei and sys.nuclei:
        return diagonalize(build_coupled_hamiltonian(sys, field, cap))
    return diagonalize(build_electron_hamiltonian(sys, field))


def level_labels(sol: EigenSolution) -> list[str]:
    """Dominant Z character of each level: ``'0'``, ``'-1'`` or ``'+1'``.

    Levels whose -1 and +1 weights tie (e.g. the E-split pair at zero field)
    are labelled by energy: the upper half of the tied levels is ``'+1'``.
    """
    alpha, beta, gamma = sol.overlaps.T
    labels = []
    tied = []
    for k in range(len(sol)):
        if alpha[k] >= max(beta[k], gamma[k]):
            labels.append("0")
        elif abs(beta[k] - gamma[k]) > 1e-6:
            labels.append("-1" if beta[k] > gamma[k] else "+1")
        else:
            labels.append(None)
            tied.append(k)
    if tied:
        median = np.median(sol.energies[tied])
        for k in tied:
            labels[k] = "+1" if sol.energies[k] > median else "-1"
    return labels


def _branch(prefix: str | None, a: str, b: str) -> str:
    pair = {a, b}
    if pair == {"0", "-1"}:
        kind = "minus"
    elif pair == {"0", "+1"}:
        kind = "plus"
    else:
        return "other"
    return f"{prefix}_{kind}" if prefix else kind


def transition_weights(sol: EigenSolution) -> np.ndarray:
    """Matrix of ``|<i|Sx|j>|^2 + |<i|Sy|j>|^2`` between eigenstates."""
    sx, sy, _ = electron_operators(sol.nuclear_dims) if sol.nuclear_dims else (SX, SY, SZ)
    v = sol.states
    mx = v.conj().T @ sx @ v
    my = v.conj().T @ sy @ v
    return np.abs(mx) ** 2 + np.abs(my) ** 2


def transition_table(sol: EigenSolution, fwhm: float | None = None) -> list[TransitionLine]:
    """All level pairs i < j with frequency ``E_j - E_i`` and dipole weight."""
    if fwhm is None:
        fwhm = DEFAULT_FWHM_MHZ.get(sol.label or "gs", 60.0)
    w = transition_weights(sol)
    labels = level_labels(sol)
    lines = []
    n = len(sol)
    for i in range(n):
        for j in range(i + 1, n):
            lines.append(
                TransitionLine(
                    center=float(sol.energies[j] - sol.energies[i]),
                    weight=float(w[i, j]),
                    fwhm=fwhm,
                    branch=_branch(sol.label, labels[i], labels[j]),
                    levels=(i, j),
                )
            )
    return lines
