"""Level anti-crossings and field/angle-dependent spin mixing."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import NoMinimum, ValidationError
from .photodynamics import MwDrive, RateModel, effective_rate_matrix, steady_state
from .spectra import BRANCH_ORDER, track_branches
from .spin_model import (
    DEFAULT_FWHM_MHZ,
    FieldPoint,
    SpinSystem,
    build_electron_hamiltonian,
    diagonalize,
    solve,
)


@dataclass(frozen=True)
class MixingCurve:
    """Overlaps ``(|alpha|^2, |beta|^2, |gamma|^2)`` per field point, indexed
    ``[field, branch, component]`` with branches ``('0', '-1', '+1')``."""

    B: np.ndarray
    theta: float
    overlaps: np.ndarray
    energies: np.ndarray
    levels: tuple = BRANCH_ORDER


@dataclass(frozen=True)
class LacResult:
    B_lac: float  # gauss
    gap: float  # MHz
    branch_pair: tuple


def overlap_scan(sys: SpinSystem, B_list, theta: float = 0.0, phi: float = 0.0) -> MixingCurve:
    sols, orders = track_branches(sys, B_list, theta, phi)
    ov = np.array([sol.overlaps[order] for sol, order in zip(sols, orders)])
    en = np.array([sol.energies[order] for sol, order in zip(sols, orders)])
    return MixingCurve(np.asarray(B_list, dtype=float), theta, ov, en)


def _pair_gap(sys, theta, phi, levels):
    def gap(B):
        e = diagonalize(build_electron_hamiltonian(sys, FieldPoint(B, theta, phi))).energies
        return abs(e[levels[1]] - e[levels[0]])

    return gap


def find_lac(sys: SpinSystem, theta: float = 0.0, branch_pair=("0", "-1"), phi: float = 0.0, window=None, n_coarse: int = 401, xtol: float = 0.1) -> LacResult:
    """Field of minimal separation between two adiabatic branches.

    A coarse tracked scan over ``window`` (default 0 to twice the axial
    crossing field) brackets the minimum, which is then refined by bounded
    golden-section search to ``xtol`` gauss.
    """
    if theta < 0:
        raise ValidationError("theta ≥ 0")
    try:
        ia, ib = (BRANCH_ORDER.index(b) for b in branch_pair)
    except ValueError:
        raise ValidationError(f"unknown branch pair {branch_pair}") from None
    sys = sys.electron_only()
    if window is None:
        window = (0.0, 2.0 * sys.D / (sys.g * 1.3996245e-3))
    grid = np.linspace(window[0], window[1], n_coarse)
    sols, orders = track_branches(sys, grid, theta, phi)
    gaps = np.array([abs(s.energies[o[ia]] - s.energies[o[ib]]) for s, o in zip(sols, orders)])
    k = int(np.argmin(gaps))
    if k == 0 or k == len(grid) - 1:
        raise NoMinimum(f"gap between {branch_pair} is monotonic over {window[0]:g}-{window[1]:g} G")
    # the pair occupies the same two energy-sorted slots throughout the
    # bracketing interval, so the refined gap is a smooth function of B
    pos = sorted((int(orders[k][ia]), int(orders[k][ib])))
    gap = _pair_gap(sys, theta, phi, pos)
    res = minimize_scalar(gap, bounds=(grid[k - 1], grid[k + 1]), method="bounded", options={"xatol": xtol})
    return LacResult(float(res.x), 1e3 * float(res.fun), tuple(branch_pair))


def _probe_frequencies(gs: SpinSystem, B_list, theta, phi, probe):
    # picked by dominant character, not by continuation: past the GS
    # anti-crossing the adiabatic '0' branch has become -1-like
    col = 1 if probe.endswith("minus") else 2
    out = []
    for B in B_list:
        sol = diagonalize(build_electron_hamiltonian(gs.electron_only(), FieldPoint(B, theta, phi)))
        k0 = int(np.argmax(sol.overlaps[:, 0]))
        kb = int(np.argmax(sol.overlaps[:, col]))
        out.append(abs(sol.energies[kb] - sol.energies[k0]))
    return out


def odmr_contrast(gs: SpinSystem, es: SpinSystem, fld: FieldPoint, freq: float, rates: RateModel, nuclei: bool = False, fwhm: float = DEFAULT_FWHM_MHZ["gs"]) -> tuple[float, float]:
    """Steady-state ``(contrast, PL_off)`` with a GS drive at ``freq``."""
    gs_sol, es_sol = solve(gs, fld, nuclei), solve(es, fld, nuclei)
    rates = replace(rates, target="gs")
    _, pl_off = steady_state(effective_rate_matrix(gs_sol, es_sol, rates), rates)
    _, pl_on = steady_state(effective_rate_matrix(gs_sol, es_sol, rates, MwDrive(freq, gs_fwhm=fwhm)), rates)
    return 1.0 - pl_on / pl_off, pl_off


def contrast_vs_field(gs: SpinSystem, es: SpinSystem, rates: RateModel, theta_list, B_list, probe: str = "gs_plus", reference=(100.0, 0.0), phi: float = 0.0, nuclei: bool = False, jobs: int = 1):
    """Rows ``(B, theta, contrast_norm)``: ODMR contrast of the probed GS
    line, normalized to its value at ``reference = (B, theta)``.

    The probe frequency joins the most 0-like and the most +/-1-like GS
    levels at each point, so the drive stays on the allowed line through
    the ground-state anti-crossing.  With ``nuclei`` the
    coupled Hamiltonians are used (both systems must share the nuclear
    structure).
    """
    if probe not in ("gs_minus", "gs_plus"):
        raise ValidationError(f"probe must be gs_minus or gs_plus, got {probe!r}")
    B_list = np.asarray(B_list, dtype=float)
    ref_f = _probe_frequencies(gs, [reference[0]], reference[1], phi, probe)[0]
    ref, _ = odmr_contrast(gs, es, FieldPoint(reference[0], reference[1], phi), ref_f, rates, nuclei)

    def line(theta):
        freqs = _probe_frequencies(gs, B_list, theta, phi, probe)
        return [
            (float(B), float(theta), odmr_contrast(gs, es, FieldPoint(B, theta, phi), f, rates, nuclei)[0] / ref)
            for B, f in zip(B_list, freqs)
        ]

    thetas = list(theta_list)
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(jobs) as pool:
            blocks = list(pool.map(line, thetas))
    else:
        blocks = [line(t) for t in thetas]
    return [row for block in blocks for row in block]


def pl_vs_field(gs: SpinSystem, es: SpinSystem, rates: RateModel, B_list, theta: float = 0.0, phi: float = 0.0, nuclei: bool = False) -> np.ndarray:
    """Steady-state PL (no microwaves) along a field scan."""
    out = []
    for B in np.asarray(B_list, dtype=float):
        fld = FieldPoint(B, theta, phi)
        gs_sol, es_sol = solve(gs, fld, nuclei), solve(es, fld, nuclei)
        out.append(steady_state(effective_rate_matrix(gs_sol, es_sol, rates), rates)[1])
    return np.array(out)
