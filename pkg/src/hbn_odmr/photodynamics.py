"""Seven-level rate-equation model of the optical cycle.

Levels are the three ground-state eigenstates, the three excited-state
eigenstates and one spinless metastable level (with nuclei attached, each
electronic manifold carries the full nuclear product space).  Rates are in
1/us, times in ns at the public interface, frequencies in GHz.

Optical pumping and radiative decay conserve spin, so the rate between a GS
and an ES eigenstate is weighted by their squared overlap in the shared Z
basis.  Intersystem crossing and metastable decay are spin-selective via the
per-projection rates ``k_isc`` and ``k_meta`` (ordered ``0, -1, +1``).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import LinAlgWarning, expm, lu_factor, lu_solve

from .errors import BasisMismatch, Degenerate, NonlinearRegime, StiffnessWarning, ValidationError
from .spectra import Spectrum, lorentzian
from .spin_model import (
    DEFAULT_FWHM_MHZ,
    EigenSolution,
    FieldPoint,
    SpinSystem,
    solve,
    transition_weights,
)

ES_LIFETIME_NS = 1.2
QUANTUM_YIELD = 3e-4


def _default_rates():
    k_total = 1e3 / ES_LIFETIME_NS
    k_rad = QUANTUM_YIELD * k_total
    k0 = k_total - k_rad
    return k_rad, (k0, 2 * k0, 2 * k0)


_K_RAD, _K_ISC = _default_rates()


@dataclass(frozen=True)
class RateModel:
    """Rate constants of the optical cycle (all 1/us).

    Only the ES lifetime (1.2 ns) and the quantum yield (0.03 %) are tied to
    measurement; the ISC ratio, metastable branching, pump and microwave
    rates are placeholders.
    """

    pump: float = 10.0
    k_rad: float = _K_RAD
    k_isc: tuple = _K_ISC
    k_meta: tuple = (0.6, 0.2, 0.2)
    mw_rate: float = 40.0
    target: str = "both"

    def __post_init__(self):
        object.__setattr__(self, "k_isc", tuple(float(k) for k in self.k_isc))
        object.__setattr__(self, "k_meta", tuple(float(k) for k in self.k_meta))
        if len(self.k_isc) != 3 or len(self.k_meta) != 3:
            raise ValidationError("k_isc and k_meta need three entries (0, -1, +1)")
        rates = (self.pump, self.k_rad, self.mw_rate, *self.k_isc, *self.k_meta)
        if any(not (r >= 0 and math.isfinite(r)) for r in rates):
            raise ValidationError("all rates ≥ 0")
        if self.target not in ("gs", "es", "both"):
            raise ValidationError(f"target must be gs, es or both, got {self.target!r}")

    @classmethod
    def from_lifetimes(cls, tau0=ES_LIFETIME_NS, tau_minus=None, tau_plus=None, quantum_yield=QUANTUM_YIELD, **kw):
        """Build a model whose ES spin projections decay with the given
        lifetimes (ns); ``k_rad`` fixed by the m_S=0 quantum yield."""
        tau_minus = tau0 / 2 if tau_minus is None else tau_minus
        tau_plus = tau0 / 2 if tau_plus is None else tau_plus
        k_rad = quantum_yield * 1e3 / tau0
        k_isc = []
        for tau in (tau0, tau_minus, tau_plus):
            if not tau > 0:
                raise ValidationError("lifetimes > 0")
            k = 1e3 / tau - k_rad
            if k < 0:
                raise ValidationError(f"lifetime {tau} ns is longer than the radiative lifetime")
            k_isc.append(k)
        return cls(k_rad=k_rad, k_isc=tuple(k_isc), **kw)

    @property
    def es_lifetimes(self):
        """ES lifetimes (ns) of the 0, -1, +1 projections."""
        return tuple(1e3 / (self.k_rad + k) for k in self.k_isc)


@dataclass(frozen=True)
class MwDrive:
    """Incoherent microwave drive at ``freq`` GHz with Lorentzian response."""

    freq: float
    gs_fwhm: float = DEFAULT_FWHM_MHZ["gs"]
    es_fwhm: float = DEFAULT_FWHM_MHZ["es"]


@dataclass(frozen=True)
class PopulationState:
    p: np.ndarray

    @property
    def n(self) -> int:
        return (len(self.p) - 1) // 2

    @property
    def gs(self):
        return self.p[: self.n]

    @property
    def es(self):
        return self.p[self.n : 2 * self.n]

    @property
    def meta(self) -> float:
        return float(self.p[-1])

    @classmethod
    def thermal(cls, n: int = 3) -> "PopulationState":
        p = np.zeros(2 * n + 1)
        p[:n] = 1.0 / n
        return cls(p)


@dataclass(frozen=True)
class Segment:
    """One step of a pulse sequence: duration (ns), laser on/off and an
    optional microwave ``(freq_GHz, rabi_MHz)``."""

    duration: float
    laser: bool = False
    mw: tuple | None = None

    def __post_init__(self):
        if not self.duration > 0:
            raise ValidationError("segment duration > 0")


@dataclass(frozen=True)
class PulseSequence:
    segments: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))

    @property
    def duration(self) -> float:
        return sum(s.duration for s in self.segments)


def _check_pair(gs_sol: EigenSolution, es_sol: EigenSolution):
    if len(gs_sol) != len(es_sol) or gs_sol.nuclear_dims != es_sol.nuclear_dims:
        raise BasisMismatch(
            f"GS nuclear dims {gs_sol.nuclear_dims} differ from ES nuclear dims {es_sol.nuclear_dims}"
        )


def mw_rate_matrix(sol: EigenSolution, freq: float, rate: float, fwhm: float) -> np.ndarray:
    """Symmetric matrix of MW-induced transfer rates among one manifold."""
    w = transition_weights(sol)
    df = np.abs(sol.energies[:, None] - sol.energies[None, :])
    r = rate * w * lorentzian(df, freq, fwhm)
    np.fill_diagonal(r, 0.0)
    return r


def effective_rate_matrix(gs_sol: EigenSolution, es_sol: EigenSolution, rates: RateModel, drive: MwDrive | None = None) -> np.ndarray:
    """Generator ``G`` of ``dp/dt = G p`` (1/us) with ``G[j, i]`` the rate i→j.

    Order: GS levels, ES levels, metastable.  Columns sum to zero.
    """
    _check_pair(gs_sol, es_sol)
    n = len(gs_sol)
    nn = gs_sol.nuclear_dim
    ov = np.abs(es_sol.states.conj().T @ gs_sol.states) ** 2  # [es_j, gs_i]
    g = np.zeros((2 * n + 1, 2 * n + 1))
    g[n : 2 * n, :n] = rates.pump * ov
    g[:n, n : 2 * n] = rates.k_rad * ov.T
    g[2 * n, n : 2 * n] = es_sol.overlaps @ np.array(rates.k_isc)
    g[:n, 2 * n] = gs_sol.overlaps @ np.array(rates.k_meta) / nn
    if drive is not None and rates.mw_rate > 0:
        if rates.target in ("gs", "both"):
            g[:n, :n] += mw_rate_matrix(gs_sol, drive.freq, rates.mw_rate, drive.gs_fwhm)
        if rates.target in ("es", "both"):
            g[n : 2 * n, n : 2 * n] += mw_rate_matrix(es_sol, drive.freq, rates.mw_rate, drive.es_fwhm)
    np.fill_diagonal(g, 0.0)
    g[np.diag_indices_from(g)] = -g.sum(axis=0)
    return g


def photoluminescence(state: PopulationState, rates: RateModel) -> float:
    return float(rates.k_rad * state.es.sum())


def steady_state(generator: np.ndarray, rates: RateModel | None = None):
    """Stationary populations of ``generator`` and the PL rate
    ``k_rad * sum(ES)`` (arbitrary units; needs ``rates``)."""
    g = np.asarray(generator, dtype=float)
    a = g.copy()
    a[-1, :] = 1.0
    b = np.zeros(len(g))
    b[-1] = 1.0
    with warnings.catch_warnings():
        # a zero pivot is reported below as Degenerate
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(a, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.min() < 1e-12 * max(pivots.max(), 1.0):
        raise Degenerate("rate graph is disconnected: stationary state not unique")
    p = lu_solve((lu, piv), b)
    p = np.where(np.abs(p) < 1e-15, 0.0, p)
    state = PopulationState(p)
    pl = photoluminescence(state, rates) if rates is not None else None
    return state, pl


def _rotate(p: np.ndarray, gs_sol: EigenSolution, freq: float, rabi: float, t_us: float) -> np.ndarray:
    """Coherent two-level rotation on the GS pair closest to ``freq``."""
    w = transition_weights(gs_sol)
    n = len(gs_sol)
    best = None
    for a in range(n):
        for b in range(a + 1, n):
            if w[a, b] < 1e-6:
                continue
            det = abs(abs(gs_sol.energies[b] - gs_sol.energies[a]) - freq)
            if best is None or det < best[0]:
                best = (det, a, b)
    if best is None:
        return p
    det, a, b = best
    om2 = rabi**2 * w[a, b]
    gen2 = om2 + (det * 1e3) ** 2
    frac = om2 / gen2 * math.sin(math.pi * math.sqrt(gen2) * t_us) ** 2
    p = p.copy()
    pa, pb = p[a], p[b]
    p[a] = pa + frac * (pb - pa)
    p[b] = pb + frac * (pa - pb)
    return p


def evolve(seq: PulseSequence, initial: PopulationState, gs_sol: EigenSolution, es_sol: EigenSolution, rates: RateModel, dt: float = 0.05, sample: bool = True):
    """Propagate populations through ``seq``.

    Laser-on segments are sampled every ``dt`` ns; the PL trace holds
    ``(t_ns, pl)`` pairs only for those samples (none if ``sample`` is
    false, in which case each segment is a single matrix exponential).  Dark microwave segments
    apply a coherent rotation (split symmetrically around dark relaxation);
    microwaves during illumination act as an incoherent rate.
    """
    _check_pair(gs_sol, es_sol)
    dark = replace(rates, pump=0.0)
    p = np.array(initial.p, dtype=float)
    times, pls = [], []
    t0 = 0.0
    for seg in seq.segments:
        t_us = seg.duration * 1e-3
        if seg.laser and not sample:
            drive = MwDrive(seg.mw[0]) if seg.mw else None
            p = expm(effective_rate_matrix(gs_sol, es_sol, rates, drive) * t_us) @ p
        elif seg.laser:
            drive = MwDrive(seg.mw[0]) if seg.mw else None
            g = effective_rate_matrix(gs_sol, es_sol, rates, drive)
            if dt * 1e-3 * np.max(np.abs(np.diag(g))) > 0.1:
                warnings.warn(f"dt={dt} ns is coarse against the fastest rate", StiffnessWarning, stacklevel=2)
            nsteps = max(1, int(round(seg.duration / dt)))
            h = seg.duration / nsteps
            step = expm(g * h * 1e-3)
            for k in range(nsteps):
                times.append(t0 + k * h)
                pls.append(rates.k_rad * p[len(gs_sol) : 2 * len(gs_sol)].sum())
                p = step @ p
        else:
            g = effective_rate_matrix(gs_sol, es_sol, dark)
            if seg.mw:
                half = expm(g * t_us / 2)
                p = half @ _rotate(half @ p, gs_sol, seg.mw[0], seg.mw[1], t_us)
            else:
                p = expm(g * t_us) @ p
        t0 += seg.duration
    return np.array(times), np.array(pls), PopulationState(p)


def rabi_trace(rabi_rate: float, durations, decay: float | None = None) -> np.ndarray:
    """Population moved from m_S=0 to m_S=-1 by a resonant pulse.

    ``rabi_rate`` in MHz (pi time ``1/(2*rabi_rate)``), ``durations`` in ns,
    optional exponential damping time ``decay`` in ns.
    """
    if not rabi_rate > 0:
        raise ValidationError("rabi_rate > 0")
    t = np.asarray(durations, dtype=float)
    phase = 2 * np.pi * rabi_rate * t * 1e-3
    env = np.ones_like(t) if decay is None else np.exp(-t / decay)
    return 0.5 * (1.0 - env * np.cos(phase))


def cw_odmr(gs: SpinSystem, es: SpinSystem, fld: FieldPoint, freqs, rates: RateModel | None = None, gs_fwhm=DEFAULT_FWHM_MHZ["gs"], es_fwhm=DEFAULT_FWHM_MHZ["es"], nuclei=False) -> Spectrum:
    """Rate-model cw ODMR: fractional PL drop versus MW frequency under
    continuous illumination."""
    rates = rates or RateModel()
    gs_sol, es_sol = solve(gs, fld, nuclei), solve(es, fld, nuclei)
    _, pl0 = steady_state(effective_rate_matrix(gs_sol, es_sol, rates), rates)
    out = []
    for f in np.asarray(freqs, dtype=float):
        g = effective_rate_matrix(gs_sol, es_sol, rates, MwDrive(f, gs_fwhm, es_fwhm))
        out.append(1.0 - steady_state(g, rates)[1] / pl0)
    return Spectrum(np.asarray(freqs, dtype=float), np.array(out))


@dataclass(frozen=True)
class PulsedProtocol:
    """Init pulse, dark wait, MW pulse, readout pulse (all ns)."""

    init: float = 3000.0
    wait: float = 1000.0
    pi: float = 13.0
    rabi: float = 38.46
    readout: float = 1000.0
    window: float = 300.0
    dt: float = 0.05

    def sequence(self, freq: float | None) -> PulseSequence:
        mw = None if freq is None else (freq, self.rabi)
        return PulseSequence(
            (
                Segment(self.init, laser=True),
                Segment(self.wait),
                Segment(self.pi, mw=mw),
                Segment(self.readout, laser=True),
            )
        )


def _readout_signal(times, pls, start, window):
    mask = (times >= start) & (times < start + window)
    return float(np.mean(pls[mask]))


def pulsed_odmr(gs: SpinSystem, es: SpinSystem, fld: FieldPoint, freqs, rates: RateModel | None = None, protocol: PulsedProtocol | None = None) -> Spectrum:
    """Pulsed-ODMR contrast: ``1 - PL_readout(MW) / PL_readout(no MW)``.

    The MW pulse is applied in the dark, so only GS transitions respond.
    """
    rates = rates or RateModel()
    protocol = protocol or PulsedProtocol()
    gs_sol, es_sol = solve(gs, fld), solve(es, fld)
    prep = PulseSequence((Segment(protocol.init, laser=True), Segment(protocol.wait)))
    _, _, ready = evolve(prep, PopulationState.thermal(len(gs_sol)), gs_sol, es_sol, rates, sample=False)
    readout = PulseSequence((Segment(protocol.window, laser=True),))

    def signal(freq):
        seq = PulseSequence((Segment(protocol.pi, mw=None if freq is None else (freq, protocol.rabi)),))
        _, _, st = evolve(seq, ready, gs_sol, es_sol, rates)
        t, pl, _ = evolve(readout, st, gs_sol, es_sol, rates, dt=protocol.dt)
        return float(np.mean(pl))

    ref = signal(None)
    freqs = np.asarray(freqs, dtype=float)
    return Spectrum(freqs, np.array([1.0 - signal(f) / ref for f in freqs]))


def es_transfer(rates: RateModel, branch: str, es: SpinSystem | None = None, gs: SpinSystem | None = None, fld: FieldPoint | None = None, fwhm: float = 10.0):
    """Steady-state MW-induced ES transfer into one spin branch.

    Drives the ES ``0 -> branch`` line at resonance (incoherent rate) and
    returns ``(transfer, pl_contrast)``: the added population of the target
    ES level relative to the ES m_S=0 population, and the fractional PL drop.
    """
    es = es or SpinSystem(2.06, 0.0, 2.04, label="es")
    gs = gs or SpinSystem(3.48, 0.0, 2.0, label="gs")
    fld = fld or FieldPoint(300.0)
    gs_sol, es_sol = solve(gs, fld), solve(es, fld)
    k0 = int(np.argmax(es_sol.overlaps[:, 0]))
    col = 1 if branch == "minus" else 2
    kb = int(np.argmax(es_sol.overlaps[:, col]))
    freq = abs(es_sol.energies[kb] - es_sol.energies[k0])
    es_rates = replace(rates, target="es")
    off, pl_off = steady_state(effective_rate_matrix(gs_sol, es_sol, es_rates), es_rates)
    on, pl_on = steady_state(effective_rate_matrix(gs_sol, es_sol, es_rates, MwDrive(freq, es_fwhm=fwhm)), es_rates)
    transfer = (on.es[kb] - off.es[kb]) / on.es[k0]
    return float(transfer), float(1.0 - pl_on / pl_off)


def contrast_ratio(lifetime_minus: float, lifetime_plus: float, mw_rate: float = 1.0, tau0: float = ES_LIFETIME_NS, k_meta=(1.0, 0.0, 0.0), **kw) -> float:
    """ES contrast of the +1 branch over the -1 branch.

    Each branch's contrast is taken as the MW-induced population transfer
    from m_S=0 into that ES level, computed from the steady state of the
    full rate model with the given ES lifetimes (ns).  The metastable level
    repopulates m_S=0 only by default, so the drive starts from a polarized
    spin; with that, in the linear regime the ratio tends to
    ``lifetime_plus / lifetime_minus``.
    """
    if mw_rate * max(lifetime_minus, lifetime_plus, tau0) * 1e-3 > 0.1:
        raise NonlinearRegime(
            f"mw_rate*lifetime = {mw_rate * max(lifetime_minus, lifetime_plus, tau0) * 1e-3:.3g} > 0.1"
        )
    rates = RateModel.from_lifetimes(tau0, lifetime_minus, lifetime_plus, mw_rate=mw_rate, k_meta=k_meta)
    plus, _ = es_transfer(rates, "plus", **kw)
    minus, _ = es_transfer(rates, "minus", **kw)
    return plus / minus
