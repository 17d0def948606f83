"""Line-oriented run configuration with dotted keys.

Each non-blank line is ``key = value``; ``#`` starts a comment.  Every key is
declared in :data:`SCHEMA`; anything else is rejected.  Values not set in the
file fall back to their defaults, and :meth:`RunConfig.echo` lists every
effective value exactly once, marking defaults (and which of them are
placeholders rather than measured numbers).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .photodynamics import ES_LIFETIME_NS, QUANTUM_YIELD, PulsedProtocol, RateModel
from .spectra import LineshapeConfig
from .spin_model import NucleusSpec, SpinSystem

REQUIRED = object()


def parse_nuclei(text: str) -> tuple:
    """``"1:3:90, 1.5:1:18.8"`` -> NucleusSpec(I, A, count) entries written as
    ``I:count:A_MHz``."""
    out = []
    for item in filter(None, (s.strip() for s in text.split(","))):
        parts = item.split(":")
        if len(parts) != 3:
            raise ValueError(f"nucleus {item!r} is not I:count:A_MHz")
        I, count, A = float(parts[0]), int(parts[1]), float(parts[2])
        out.append(NucleusSpec(I, A, count))
    return tuple(out)


def format_nuclei(nuclei) -> str:
    return ", ".join(f"{n.I:g}:{n.count}:{n.A:g}" for n in nuclei)


def parse_range(text: str) -> np.ndarray:
    """``start:step:stop`` (inclusive stop) or a single value."""
    parts = [float(p) for p in str(text).split(":")]
    if len(parts) == 1:
        return np.array(parts)
    if len(parts) != 3:
        raise ValueError(f"range {text!r} is not start:step:stop")
    start, step, stop = parts
    if not step > 0 or stop < start:
        raise ValueError(f"range {text!r} needs step > 0 and stop ≥ start")
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(n)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _str(text: str) -> str:
    return text.strip()


# key -> (parser, default, note); note "placeholder" flags non-measured values
SCHEMA = {
    "gs.D_GHz": (float, REQUIRED, ""),
    "gs.E_GHz": (float, 0.05, "placeholder"),
    "gs.g": (float, 2.0, ""),
    "gs.nuclei": (parse_nuclei, (), ""),
    "es.D_GHz": (float, REQUIRED, ""),
    "es.E_GHz": (float, 0.0, ""),
    "es.g": (float, 2.0, ""),
    "es.nuclei": (parse_nuclei, (), ""),
    "rates.tau0_ns": (float, ES_LIFETIME_NS, ""),
    "rates.tau_minus_ns": (float, ES_LIFETIME_NS / 2, "placeholder"),
    "rates.tau_plus_ns": (float, ES_LIFETIME_NS / 2, "placeholder"),
    "rates.quantum_yield": (float, QUANTUM_YIELD, ""),
    "rates.k_meta_0_per_us": (float, 0.6, "placeholder"),
    "rates.k_meta_minus_per_us": (float, 0.2, "placeholder"),
    "rates.k_meta_plus_per_us": (float, 0.2, "placeholder"),
    "rates.pump_per_us": (float, 10.0, "placeholder"),
    "rates.mw_rate_per_us": (float, 40.0, "placeholder"),
    "rates.target": (_str, "both", ""),
    "lineshape.gs_fwhm_MHz": (float, 60.0, "placeholder"),
    "lineshape.es_fwhm_MHz": (float, 150.0, "placeholder"),
    "lineshape.gs_minus_amp": (float, 0.05, "placeholder"),
    "lineshape.gs_plus_amp": (float, 0.05, "placeholder"),
    "lineshape.es_minus_amp": (float, 0.01, "placeholder"),
    "lineshape.es_plus_amp": (float, 0.004, "placeholder"),
    "scan.b_gauss": (_str, "0:10:1500", ""),
    "scan.f_GHz": (_str, "1.0:0.005:5.0", ""),
    "scan.field_gauss": (float, 0.0, ""),
    "scan.theta_deg": (float, 0.0, ""),
    "scan.phi_deg": (float, 0.0, ""),
    "mixing.thetas_deg": (_str, "0, 1, 3, 5, 10", ""),
    "mixing.probe": (_str, "gs_plus", ""),
    "mixing.reference_gauss": (float, 100.0, ""),
    "mixing.reference_theta_deg": (float, 0.0, ""),
    "mixing.use_nuclei": (_bool, False, ""),
    "pulsed.init_ns": (float, 3000.0, "placeholder"),
    "pulsed.wait_ns": (float, 1000.0, "placeholder"),
    "pulsed.pi_ns": (float, 13.0, ""),
    "pulsed.rabi_MHz": (float, 38.46, ""),
    "pulsed.readout_ns": (float, 1000.0, "placeholder"),
    "pulsed.window_ns": (float, 300.0, "placeholder"),
    "pulsed.dt_ns": (float, 0.05, ""),
    "rabi.decay_ns": (float, 0.0, ""),
    "rabi.t_ns": (_str, "0:0.5:100", ""),
    "output.dir": (_str, ".", ""),
}


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.9g}"
    if isinstance(value, tuple):
        return format_nuclei(value)
    return str(value)


@dataclass
class RunConfig:
    values: dict
    defaulted: frozenset = frozenset()
    source: str | None = None
    gs: SpinSystem = field(init=False)
    es: SpinSystem = field(init=False)
    rates: RateModel = field(init=False)
    lineshape: LineshapeConfig = field(init=False)
    protocol: PulsedProtocol = field(init=False)

    def __post_init__(self):
        v = self.values
        self.gs = SpinSystem(v["gs.D_GHz"], v["gs.E_GHz"], v["gs.g"], v["gs.nuclei"], label="gs")
        self.es = SpinSystem(v["es.D_GHz"], v["es.E_GHz"], v["es.g"], v["es.nuclei"], label="es")
        self.rates = RateModel.from_lifetimes(
            tau0=v["rates.tau0_ns"],
            tau_minus=v["rates.tau_minus_ns"],
            tau_plus=v["rates.tau_plus_ns"],
            quantum_yield=v["rates.quantum_yield"],
            k_meta=(v["rates.k_meta_0_per_us"], v["rates.k_meta_minus_per_us"], v["rates.k_meta_plus_per_us"]),
            pump=v["rates.pump_per_us"],
            mw_rate=v["rates.mw_rate_per_us"],
            target=v["rates.target"],
        )
        self.lineshape = LineshapeConfig(
            v["lineshape.gs_fwhm_MHz"],
            v["lineshape.es_fwhm_MHz"],
            {b: v[f"lineshape.{b}_amp"] for b in ("gs_minus", "gs_plus", "es_minus", "es_plus")},
        )
        self.protocol = PulsedProtocol(
            v["pulsed.init_ns"], v["pulsed.wait_ns"], v["pulsed.pi_ns"], v["pulsed.rabi_MHz"],
            v["pulsed.readout_ns"], v["pulsed.window_ns"], v["pulsed.dt_ns"],
        )
        for key in ("scan.b_gauss", "scan.f_GHz", "rabi.t_ns"):
            try:
                parse_range(v[key])
            except ValueError as exc:
                raise ValidationError(f"{key}: {exc}") from None
        if v["mixing.probe"] not in ("gs_minus", "gs_plus"):
            raise ValidationError("mixing.probe must be gs_minus or gs_plus")
        if v["rabi.decay_ns"] < 0:
            raise ValidationError("rabi.decay_ns ≥ 0")

    def system(self, name: str) -> SpinSystem:
        if name not in ("gs", "es"):
            raise ValidationError(f"system must be gs or es, got {name!r}")
        return self.gs if name == "gs" else self.es

    @property
    def thetas(self) -> list[float]:
        return [float(t) for t in self.values["mixing.thetas_deg"].split(",") if t.strip()]

    def echo(self) -> list[str]:
        """``key = value`` for every effective parameter, in schema order."""
        lines = []
        for key in SCHEMA:
            tag = ""
            if key in self.defaulted:
                tag = "  # default" + (", placeholder" if SCHEMA[key][2] == "placeholder" else "")
            lines.append(f"{key} = {_format(self.values[key])}{tag}")
        return lines


def parse_config_text(text: str, source: str = "<string>") -> RunConfig:
    values, seen = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        if "=" not in line:
            col = len(raw) - len(raw.lstrip()) + 1
            raise ParseError(f"{source}:{lineno}:{col}: expected 'key = value'")
        key_part, val_part = line.split("=", 1)
        key = key_part.strip()
        val_col = len(key_part) + 2 + (len(val_part) - len(val_part.lstrip()))
        if key not in SCHEMA:
            raise ValidationError(f"{source}:{lineno}: unknown key {key!r}")
        if key in seen:
            raise ParseError(f"{source}:{lineno}:1: duplicate key {key!r} (first set on line {seen[key]})")
        parser = SCHEMA[key][0]
        try:
            values[key] = parser(val_part.strip())
        except ValidationError as exc:
            raise ValidationError(f"{source}:{lineno}: {key}: {exc}") from None
        except (TypeError, ValueError) as exc:
            raise ParseError(f"{source}:{lineno}:{val_col}: cannot parse {key}: {exc}") from None
        seen[key] = lineno
    defaulted = set()
    for key, (_, default, _) in SCHEMA.items():
        if key not in values:
            if default is REQUIRED:
                raise ValidationError(f"{source}: missing required key {key!r}")
            values[key] = default
            defaulted.add(key)
    return RunConfig(values, frozenset(defaulted), source)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not UTF-8 ({exc.reason} at byte {exc.start})") from None
    return parse_config_text(text, str(path))


def packaged_config(name: str = "replication") -> Path:
    return Path(__file__).parent / "configs" / f"{name}.cfg"
