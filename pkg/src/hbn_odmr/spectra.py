"""Synthetic cw-ODMR spectra, hyperfine manifolds and field scans."""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import GridTooCoarse, StepTooLarge, ValidationError
from .spin_model import (
    DEFAULT_FWHM_MHZ,
    MU_B_GHZ_PER_G,
    EigenSolution,
    FieldPoint,
    SpinSystem,
    TransitionLine,
    build_electron_hamiltonian,
    diagonalize,
    transition_table,
)

BRANCHES = ("gs_minus", "gs_plus", "es_minus", "es_plus")


@dataclass(frozen=True)
class ManifoldLine:
    offset: float  # MHz
    multiplicity: int


@dataclass(frozen=True)
class Spectrum:
    freqs: np.ndarray  # GHz
    contrast: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=float)
        c = np.asarray(self.contrast, dtype=float)
        if f.shape != c.shape or f.ndim != 1:
            raise ValidationError("freqs and contrast must be 1-D arrays of equal length")
        if len(f) > 1 and np.any(np.diff(f) <= 0):
            raise ValidationError("frequency grid must be strictly ascending")
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "contrast", c)


@dataclass(frozen=True)
class LineshapeConfig:
    """Per-manifold widths (MHz) and per-branch peak contrasts.

    The numbers are placeholders for synthesis, not measured values; the ES
    amplitudes are deliberately smaller than the GS ones.
    """

    gs_fwhm: float = DEFAULT_FWHM_MHZ["gs"]
    es_fwhm: float = DEFAULT_FWHM_MHZ["es"]
    amplitudes: dict = field(
        default_factory=lambda: {
            "gs_minus": 0.05,
            "gs_plus": 0.05,
            "es_minus": 0.01,
            "es_plus": 0.004,
        }
    )

    def __post_init__(self):
        if not (self.gs_fwhm > 0 and self.es_fwhm > 0):
            raise ValidationError("fwhm > 0")
        unknown = set(self.amplitudes) - set(BRANCHES)
        if unknown:
            raise ValidationError(f"unknown branch amplitudes: {sorted(unknown)}")
        if any(v < 0 for v in self.amplitudes.values()):
            raise ValidationError("amplitudes ≥ 0")

    def fwhm(self, label: str) -> float:
        return self.gs_fwhm if label == "gs" else self.es_fwhm


def hyperfine_manifold(nuclei) -> list[ManifoldLine]:
    """First-order hyperfine pattern: offsets ``sum_k A_k m_k`` in MHz with
    the number of nuclear configurations producing each offset."""
    counts = Counter({0.0: 1})
    for nuc in nuclei:
        ms = nuc.I - np.arange(nuc.multiplicity)
        for _ in range(nuc.count):
            nxt = Counter()
            for off, mult in counts.items():
                for m in ms:
                    nxt[round(off + nuc.A * m, 9)] += mult
            counts = nxt
    return [ManifoldLine(float(off) + 0.0, int(m)) for off, m in sorted(counts.items())]


def eq2_frequencies(D, E, g, B):
    """Closed-form axial-field resonances ``D -/+ sqrt(E^2 + (g mu_B B / h)^2)``.

    Works elementwise on arrays of B (gauss); returns ``(nu_minus, nu_plus)``
    in GHz.  ``nu_minus`` turns negative beyond the level crossing.
    """
    r = np.sqrt(np.square(E) + np.square(g * MU_B_GHZ_PER_G * np.asarray(B, dtype=float)))
    return D - r, D + r


def lorentzian(freqs, center, fwhm_mhz):
    """Peak-normalized Lorentzian; frequencies in GHz, width in MHz."""
    hw = 0.5e-3 * fwhm_mhz
    return hw**2 / ((np.asarray(freqs) - center) ** 2 + hw**2)


def spectrum_lines(sys: SpinSystem, fld: FieldPoint, lineshape: LineshapeConfig | None = None) -> list[TransitionLine]:
    """Electronic lines of ``sys`` replicated over its hyperfine manifold.

    Each replica carries weight ``amplitude * dipole_weight * multiplicity /
    total``; lines on the forbidden ``other`` branch are dropped.
    """
    lineshape = lineshape or LineshapeConfig()
    fwhm = lineshape.fwhm(sys.label)
    sol = diagonalize(build_electron_hamiltonian(sys, fld))
    manifold = hyperfine_manifold(sys.nuclei)
    total = sum(m.multiplicity for m in manifold)
    out = []
    for line in transition_table(sol, fwhm):
        amp = lineshape.amplitudes.get(line.branch, 0.0)
        if line.branch == "other" or amp == 0 or line.weight == 0:
            continue
        for m in manifold:
            out.append(
                TransitionLine(
                    center=line.center + 1e-3 * m.offset,
                    weight=amp * line.weight * m.multiplicity / total,
                    fwhm=fwhm,
                    branch=line.branch,
                    levels=line.levels,
                )
            )
    return out


def spectrum_from_lines(lines, freqs) -> Spectrum:
    freqs = np.asarray(freqs, dtype=float)
    contrast = np.zeros_like(freqs)
    for line in lines:
        contrast += line.weight * lorentzian(freqs, abs(line.center), line.fwhm)
    return Spectrum(freqs, contrast)


def _check_grid(freqs, min_fwhm):
    if len(freqs) > 1:
        step = np.max(np.diff(freqs))
        if step > 1e-3 * min_fwhm / 4:
            warnings.warn(
                f"grid step {step * 1e3:.3g} MHz exceeds fwhm/4 = {min_fwhm / 4:.3g} MHz",
                GridTooCoarse,
                stacklevel=3,
            )


def cw_spectrum(gs: SpinSystem, es: SpinSystem, fld: FieldPoint, freqs, lineshape: LineshapeConfig | None = None) -> Spectrum:
    """Sum of Lorentzians at every GS and ES transition (with hyperfine
    replicas) on the grid ``freqs`` (GHz)."""
    lineshape = lineshape or LineshapeConfig()
    freqs = np.asarray(freqs, dtype=float)
    _check_grid(freqs, min(lineshape.gs_fwhm, lineshape.es_fwhm))
    lines = spectrum_lines(gs, fld, lineshape) + spectrum_lines(es, fld, lineshape)
    return spectrum_from_lines(lines, freqs)


BRANCH_ORDER = ("0", "-1", "+1")


def _initial_assignment(sol: EigenSolution) -> np.ndarray:
    # overlaps columns are (|0>, |-1>, |+1>) which matches BRANCH_ORDER
    score = sol.overlaps.copy()
    # break the exact ties of the zero-field E-split pair by energy
    score[:, 2] += 1e-7 * np.argsort(np.argsort(sol.energies))
    rows, cols = linear_sum_assignment(-score)
    order = np.empty(3, dtype=int)
    order[cols] = rows
    return order


def track_branches(sys: SpinSystem, B_list, theta: float = 0.0, phi: float = 0.0, min_overlap: float = 0.5):
    """Adiabatically continued electron levels along a field scan.

    Returns ``(solutions, order)`` where ``order[k]`` gives, for field point
    ``k``, the level indices of the branches ``('0', '-1', '+1')``.  Identity
    is carried by maximal eigenvector overlap with the previous point, so
    levels keep their labels through crossings.
    """
    B_list = np.asarray(B_list, dtype=float)
    if len(B_list) > 1 and np.any(np.diff(B_list) < 0):
        raise ValidationError("B_list must be ascending")
    sys = sys.electron_only()
    sols, orders = [], []
    prev = None
    for B in B_list:
        sol = diagonalize(build_electron_hamiltonian(sys, FieldPoint(B, theta, phi)))
        if prev is None:
            order = _initial_assignment(sol)
        else:
            prev_sol, prev_order = prev
            ov = np.abs(prev_sol.states[:, prev_order].conj().T @ sol.states) ** 2
            rows, cols = linear_sum_assignment(-ov)
            if ov[rows, cols].min() < min_overlap:
                raise StepTooLarge(
                    f"continuation overlap {ov[rows, cols].min():.3f} < {min_overlap} at B={B:g} G"
                )
            order = cols[np.argsort(rows)]
        sols.append(sol)
        orders.append(order)
        prev = (sol, order)
    return sols, np.array(orders)


def frequency_vs_field_scan(sys: SpinSystem, B_list, theta: float = 0.0, phi: float = 0.0):
    """Rows ``(B, branch, freq)`` for the 0-like level to each +/- branch.

    ``freq`` is the absolute level separation in GHz; branch names are
    ``'<label>_minus'`` and ``'<label>_plus'``.
    """
    sols, orders = track_branches(sys, B_list, theta, phi)
    rows = []
    for B, sol, order in zip(np.asarray(B_list, dtype=float), sols, orders):
        e0 = sol.energies[order[0]]
        rows.append((float(B), f"{sys.label}_minus", float(abs(sol.energies[order[1]] - e0))))
        rows.append((float(B), f"{sys.label}_plus", float(abs(sol.energies[order[2]] - e0))))
    return rows


def manifold_vs_full(sys: SpinSystem, fld: FieldPoint, branch: str = "minus", cluster_gap: float = 0.03):
    """Compare first-order manifold positions with the coupled eigenproblem.

    Allowed lines of the full coupled Hamiltonian on ``branch`` are grouped
    into clusters (gap > ``cluster_gap`` GHz) and each cluster's
    intensity-weighted center is returned next to the first-order positions.
    Returns ``(first_order_GHz, full_GHz, full_weights)``.
    """
    from .spin_model import build_coupled_hamiltonian

    electron = transition_table(diagonalize(build_electron_hamiltonian(sys, fld)))
    center = next(l.center for l in electron if l.branch.endswith(branch))
    first = np.array([center + 1e-3 * m.offset for m in hyperfine_manifold(sys.nuclei)])

    sol = diagonalize(build_coupled_hamiltonian(sys, fld))
    lines = [l for l in transition_table(sol) if l.weight > 1e-3 and l.branch.endswith(branch)]
    c = np.array([l.center for l in lines])
    w = np.array([l.weight for l in lines])
    idx = np.argsort(c)
    c, w = c[idx], w[idx]
    groups = np.split(np.arange(len(c)), np.nonzero(np.diff(c) > cluster_gap)[0] + 1)
    full = np.array([np.average(c[g], weights=w[g]) for g in groups])
    weights = np.array([w[g].sum() for g in groups])
    return first, full, weights

