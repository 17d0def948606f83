"""Damped least-squares fits: axial resonance model and multi-Lorentzian
decomposition."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks, peak_widths

from .errors import (
    DegenerateJacobian,
    MissingBranch,
    NoConvergence,
    PeakCollapse,
    Underdetermined,
    ValidationError,
)
from .spectra import Spectrum, eq2_frequencies
from .spin_model import MU_B_GHZ_PER_G

_GAMMA = MU_B_GHZ_PER_G
FIT_BOUNDS = (np.array([1e-9, 0.0, 1.0 + 1e-9]), np.array([10.0 - 1e-9, 1.0 - 1e-9, 3.0 - 1e-9]))
HYSTERESIS_GHZ = 0.020

_BRANCH_ALIASES = {
    "minus": -1, "-1": -1, "m": -1, "gs_minus": -1, "es_minus": -1, "-": -1,
    "plus": 1, "+1": 1, "1": 1, "p": 1, "gs_plus": 1, "es_plus": 1, "+": 1,
}


def parse_branch(tag) -> int | None:
    if tag is None or (isinstance(tag, float) and math.isnan(tag)) or str(tag).strip() == "":
        return None
    try:
        return _BRANCH_ALIASES[str(tag).strip().lower()]
    except KeyError:
        raise ValidationError(f"unrecognized branch tag {tag!r}") from None


@dataclass
class FreqFieldData:
    """Resonance positions versus field: B (G), freq (GHz), optional branch
    sign (-1/+1) and 1-sigma uncertainty (GHz)."""

    B: np.ndarray
    freq: np.ndarray
    branch: list = None
    sigma: np.ndarray = None

    def __post_init__(self):
        self.B = np.asarray(self.B, dtype=float)
        self.freq = np.asarray(self.freq, dtype=float)
        n = len(self.B)
        if self.freq.shape != self.B.shape:
            raise ValidationError("B and freq must have equal length")
        self.branch = [None] * n if self.branch is None else [parse_branch(b) for b in self.branch]
        self.sigma = np.ones(n) if self.sigma is None else np.asarray(self.sigma, dtype=float)
        if len(self.branch) != n or self.sigma.shape != (n,):
            raise ValidationError("branch and sigma must match the number of points")
        if np.any(self.B < 0):
            raise ValidationError("B ≥ 0")
        if np.any(self.freq <= 0):
            raise ValidationError("freq > 0")
        if np.any(~(self.sigma > 0)):
            raise ValidationError("sigma > 0")

    @classmethod
    def from_points(cls, points):
        """From ``(B, freq[, branch[, sigma]])`` tuples."""
        cols = list(zip(*[tuple(p) + (None,) * (4 - len(p)) for p in points]))
        sig = cols[3]
        return cls(cols[0], cols[1], list(cols[2]), None if all(s is None for s in sig) else [1.0 if s is None else s for s in sig])

    def __len__(self):
        return len(self.B)


@dataclass
class FitResult:
    params: dict
    stderr: dict
    residual_rms: float
    iterations: int
    converged: bool
    chi2: float = float("nan")
    gradient_norm: float = float("nan")
    branches: list = field(default_factory=list)


def levenberg_marquardt(fun, jac, x0, lower=None, upper=None, max_iter=200, gtol=1e-8, lam0=1e-3, before_step=None):
    """Minimize ``0.5*|fun(x)|^2`` with Marquardt-scaled damping.

    The damping factor is divided by 10 after an accepted step and multiplied
    by 10 after a rejected one.  Steps are projected onto ``[lower, upper]``.
    ``before_step(x)`` may mutate external state (e.g. data assignment) and
    returns True when it did, forcing residuals to be recomputed.
    Returns ``(x, info)``; raises NoConvergence after ``max_iter`` iterations.
    """
    x = np.array(x0, dtype=float)
    lower = np.full_like(x, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    upper = np.full_like(x, np.inf) if upper is None else np.asarray(upper, dtype=float)
    x = np.clip(x, lower, upper)
    r, J = fun(x), jac(x)
    cost = 0.5 * r @ r
    lam = lam0
    for it in range(1, max_iter + 1):
        if before_step is not None and before_step(x):
            r, J = fun(x), jac(x)
            cost = 0.5 * r @ r
        g = J.T @ r
        # active bounds do not count against convergence
        free = ~(((x <= lower) & (g > 0)) | ((x >= upper) & (g < 0)))
        gnorm = float(np.max(np.abs(g[free]))) if free.any() else 0.0
        if gnorm < gtol:
            return x, {"iterations": it - 1, "converged": True, "gradient_norm": gnorm, "J": J, "r": r}
        A = J.T @ J
        d = np.diag(A).copy()
        d[d <= 0] = 1.0
        while True:
            try:
                step = np.linalg.solve(A + lam * np.diag(d), -g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            x_new = np.clip(x + step, lower, upper)
            r_new = fun(x_new)
            cost_new = 0.5 * r_new @ r_new
            if cost_new <= cost:
                lam = max(lam / 10, 1e-15)
                break
            lam *= 10
            if lam > 1e20:
                break
        if lam > 1e20:
            # no descent direction left at machine precision
            return x, {"iterations": it, "converged": gnorm < gtol, "gradient_norm": gnorm, "J": J, "r": r}
        moved = np.any(x_new != x)
        x, r, cost = x_new, r_new, cost_new
        J = jac(x)
        if not moved:
            g = J.T @ r
            gnorm = float(np.max(np.abs(g[free]))) if free.any() else 0.0
            return x, {"iterations": it, "converged": gnorm < gtol, "gradient_norm": gnorm, "J": J, "r": r}
    g = J.T @ r
    raise NoConvergence(f"no convergence after {max_iter} iterations (|J^T r| = {np.max(np.abs(g)):.3g})")


def _covariance(J, r, n, p, absolute_sigma):
    A = J.T @ J
    if np.linalg.matrix_rank(A) < p:
        raise DegenerateJacobian("Jacobian is rank deficient at the solution")
    cov = np.linalg.inv(A)
    if not absolute_sigma:
        cov = cov * (r @ r / (n - p) if n > p else np.nan)
    return cov


# --- axial resonance model -------------------------------------------------

def resonance_model(params, B, sign):
    """Resonance of branch ``sign`` (-1/+1); the minus branch is reported as
    an absolute frequency so data past the level crossing stay positive."""
    D, E, g = params
    nu_m, nu_p = eq2_frequencies(D, E, g, B)
    return np.where(sign > 0, nu_p, np.abs(nu_m))


def resonance_jacobian(params, B, sign):
    """Analytic derivatives of :func:`resonance_model` w.r.t. (D, E, g)."""
    D, E, g = params
    b = g * _GAMMA * np.asarray(B, dtype=float)
    R = np.sqrt(E**2 + b**2)
    safe = np.where(R > 0, R, 1.0)
    dR_dE = np.where(R > 0, E / safe, 1.0)
    dR_dg = np.where(R > 0, b * _GAMMA * np.asarray(B, dtype=float) / safe, 0.0)
    # minus branch is |D - R|: its derivatives flip sign past the crossing
    sd = np.where(sign > 0, 1.0, np.where(D - R < 0, -1.0, 1.0))
    sr = np.where(sign > 0, 1.0, -sd)
    return np.column_stack([sd, sr * dR_dE, sr * dR_dg])


def _initial_resonance_guess(data: FreqFieldData):
    mids, gaps = [], []
    for B in np.unique(data.B):
        f = data.freq[data.B == B]
        if len(f) >= 2:
            mids.append(0.5 * (f.max() + f.min()))
            if B == 0:
                gaps.append(0.5 * (f.max() - f.min()))
    D = float(np.mean(mids)) if mids else float(np.mean(data.freq))
    E = float(np.mean(gaps)) if gaps else 0.0
    # E = 0 is a stationary point of the model when B > 0 everywhere
    return np.array([D, max(E, 1e-3), 2.0])


def fit_eq2(data: FreqFieldData, init=None, max_iter=200, gtol=1e-8, absolute_sigma=False) -> FitResult:
    """Fit (D, E, g) of the axial resonance model to frequency-vs-field data.

    Untagged points are assigned to the nearer model branch before every
    iteration; a point only switches branch when the other one is closer by
    more than 20 MHz.  Standard errors are 1-sigma from ``(J^T J)^-1``
    scaled by the reduced chi-square (unless ``absolute_sigma``).
    """
    n = len(data)
    if n < 4:
        raise Underdetermined(f"{n} points cannot constrain 3 parameters (need ≥ 4)")
    if len(np.unique(data.B)) < 2:
        raise DegenerateJacobian("all points share one field value; g and E are not separable")
    lo, hi = FIT_BOUNDS
    x0 = _initial_resonance_guess(data) if init is None else np.array([init["D"], init["E"], init["g"]], dtype=float)
    tags = np.array([0 if b is None else b for b in data.branch])
    free = tags == 0
    sign = tags.copy()
    if free.any():
        m, p = resonance_model(x0, data.B, -np.ones(n)), resonance_model(x0, data.B, np.ones(n))
        sign[free] = np.where(np.abs(data.freq - p) < np.abs(data.freq - m), 1, -1)[free]

    def reassign(x):
        if not free.any():
            return False
        m = resonance_model(x, data.B, -np.ones(n))
        p = resonance_model(x, data.B, np.ones(n))
        dm, dp = np.abs(data.freq - m), np.abs(data.freq - p)
        to_plus = free & (sign < 0) & (dp + HYSTERESIS_GHZ < dm)
        to_minus = free & (sign > 0) & (dm + HYSTERESIS_GHZ < dp)
        sign[to_plus] = 1
        sign[to_minus] = -1
        return bool(to_plus.any() or to_minus.any())

    def fun(x):
        return (resonance_model(x, data.B, sign) - data.freq) / data.sigma

    def jac(x):
        return resonance_jacobian(x, data.B, sign) / data.sigma[:, None]

    if np.linalg.matrix_rank(jac(x0)) < 3:
        raise DegenerateJacobian("Jacobian rank < 3 at the starting point")
    x, info = levenberg_marquardt(fun, jac, x0, lo, hi, max_iter=max_iter, gtol=gtol, before_step=reassign)
    r = fun(x)
    cov = _covariance(jac(x), r, n, 3, absolute_sigma)
    err = np.sqrt(np.abs(np.diag(cov)))
    resid = resonance_model(x, data.B, sign) - data.freq
    names = ("D", "E", "g")
    return FitResult(
        params=dict(zip(names, map(float, x))),
        stderr=dict(zip(names, map(float, err))),
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        iterations=info["iterations"],
        converged=info["converged"],
        chi2=float(r @ r),
        gradient_norm=info["gradient_norm"],
        branches=["plus" if s > 0 else "minus" for s in sign],
    )


# --- multi-Lorentzian ------------------------------------------------------

@dataclass(frozen=True)
class Peak:
    center: float  # GHz
    amplitude: float
    fwhm: float  # MHz


@dataclass(frozen=True)
class PeakModel:
    peaks: tuple
    baseline: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "peaks", tuple(self.peaks))
        if any(not p.fwhm > 0 for p in self.peaks):
            raise ValidationError("fwhm > 0")

    def evaluate(self, freqs) -> np.ndarray:
        return _lorentz_sum(self.to_vector(), np.asarray(freqs, dtype=float))

    def to_vector(self) -> np.ndarray:
        v = [self.baseline]
        for p in self.peaks:
            v += [p.center, p.amplitude, p.fwhm * 1e-3]
        return np.array(v)

    @classmethod
    def from_vector(cls, v):
        peaks = [Peak(float(v[k]), float(v[k + 1]), float(v[k + 2]) * 1e3) for k in range(1, len(v), 3)]
        return cls(tuple(sorted(peaks, key=lambda p: p.center)), float(v[0]))


def _lorentz_sum(v, f):
    y = np.full_like(f, v[0])
    for k in range(1, len(v), 3):
        c, a, w = v[k : k + 3]
        h = 0.5 * w
        y += a * h * h / ((f - c) ** 2 + h * h)
    return y


def _lorentz_jac(v, f):
    J = np.empty((len(f), len(v)))
    J[:, 0] = 1.0
    for k in range(1, len(v), 3):
        c, a, w = v[k : k + 3]
        h = 0.5 * w
        u = (f - c) ** 2
        den = u + h * h
        J[:, k] = a * h * h * 2 * (f - c) / den**2
        J[:, k + 1] = h * h / den
        J[:, k + 2] = a * h * u / den**2
    return J


def _initial_peaks(spec: Spectrum, n_peaks: int) -> PeakModel:
    f, y = spec.freqs, spec.contrast
    base = float(np.min(y))
    idx, _ = find_peaks(y)
    if len(idx) == 0:
        idx = np.array([int(np.argmax(y))])
    idx = idx[np.argsort(y[idx])[::-1]][:n_peaks]
    step = float(np.median(np.diff(f))) if len(f) > 1 else 1e-3
    widths = peak_widths(y, idx, rel_height=0.5)[0] * step
    peaks = [Peak(float(f[i]), float(y[i] - base), float(max(w, 2 * step)) * 1e3) for i, w in zip(idx, widths)]
    k = 0
    while len(peaks) < n_peaks:
        # split the strongest peaks symmetrically when maxima run out
        src = peaks[k % len(idx)]
        off = 0.25e-3 * src.fwhm * (1 + k // len(idx))
        peaks[k % len(idx)] = Peak(src.center - off, src.amplitude / 2, src.fwhm)
        peaks.append(Peak(src.center + off, src.amplitude / 2, src.fwhm))
        k += 1
    return PeakModel(tuple(peaks), base)


def fit_lorentzians(spec: Spectrum, n_peaks: int, init: PeakModel | None = None, max_iter=500, gtol=1e-8):
    """Least-squares fit of ``n_peaks`` Lorentzians plus a constant baseline.

    Returns ``(PeakModel, FitResult)``; raises PeakCollapse (with both
    attached) when two centers end closer than a tenth of their width.
    """
    if n_peaks < 1:
        raise ValidationError("n_peaks ≥ 1")
    init = init or _initial_peaks(spec, n_peaks)
    if len(init.peaks) != n_peaks:
        raise ValidationError("init must carry n_peaks peaks")
    f, y = spec.freqs, spec.contrast
    if any(not f[0] <= p.center <= f[-1] for p in init.peaks):
        raise ValidationError("initial centers must lie inside the frequency grid")
    if len(f) < 3 * n_peaks + 1:
        raise Underdetermined("fewer samples than parameters")
    x0 = init.to_vector()
    lo = np.full_like(x0, -np.inf)
    hi = np.full_like(x0, np.inf)
    lo[3::3] = 1e-7
    lo[1::3], hi[1::3] = f[0], f[-1]

    def fun(v):
        return _lorentz_sum(v, f) - y

    def jac(v):
        return _lorentz_jac(v, f)

    try:
        x, info = levenberg_marquardt(fun, jac, x0, lo, hi, max_iter=max_iter, gtol=gtol)
    except NoConvergence:
        x, info = None, None
    if x is None:
        raise NoConvergence(f"multi-Lorentzian fit did not converge in {max_iter} iterations")
    model = PeakModel.from_vector(x)
    r = fun(x)
    try:
        err = np.sqrt(np.abs(np.diag(_covariance(jac(x), r, len(f), len(x), False))))
    except DegenerateJacobian:
        err = np.full(len(x), np.nan)
    names = ["baseline"] + [f"{kind}{k}" for k in range(n_peaks) for kind in ("center", "amplitude", "fwhm")]
    result = FitResult(
        params=dict(zip(names, map(float, x))),
        stderr=dict(zip(names, map(float, err))),
        residual_rms=float(np.sqrt(np.mean(r**2))),
        iterations=info["iterations"],
        converged=info["converged"],
        chi2=float(r @ r),
        gradient_norm=info["gradient_norm"],
    )
    ps = model.peaks
    for a, b in zip(ps, ps[1:]):
        if b.center - a.center < 1e-3 * min(a.fwhm, b.fwhm) / 10:
            raise PeakCollapse(
                f"peaks at {a.center:.6g} and {b.center:.6g} GHz collapsed (< fwhm/10 apart)",
                model=model,
                result=result,
            )
    return model, result


def contrast_ratio_table(peaks_by_field, gs=None, es=None, theta=0.0, tol=0.15, manifolds=("es", "gs")):
    """Rows ``(B, ratio_es, ratio_gs)`` of +1-branch over -1-branch peak
    amplitudes.

    Peaks are identified by proximity (within ``tol`` GHz) to the axial-model
    positions of each branch at that field; ``gs``/``es`` default to the
    fitted ES and the 3.48 GHz GS parameters.
    """
    from .spin_model import SpinSystem

    es = es or SpinSystem(2.06, 0.0931, 2.04, label="es")
    gs = gs or SpinSystem(3.48, 0.0, 2.0, label="gs")
    rows = []
    for B, model in peaks_by_field:
        centers = np.array([p.center for p in model.peaks])
        ratios = {}
        for name, sys in (("es", es), ("gs", gs)):
            if name not in manifolds:
                ratios[name] = float("nan")
                continue
            m, p = eq2_frequencies(sys.D, sys.E, sys.g, B)
            amps = []
            for label, target in (("minus", abs(float(m))), ("plus", float(p))):
                if len(centers) == 0:
                    raise MissingBranch(f"no peaks at B={B:g} G")
                k = int(np.argmin(np.abs(centers - target)))
                if abs(centers[k] - target) > tol:
                    raise MissingBranch(f"{name}_{label} peak missing near {target:.4g} GHz at B={B:g} G")
                amps.append(model.peaks[k].amplitude)
            ratios[name] = amps[1] / amps[0]
        rows.append((float(B), ratios["es"], ratios["gs"]))
    return rows
