"""Flat ``key = value`` study configuration.

Blank lines and ``#`` comments are ignored. Every key is optional and falls
back to the default listed in :data:`KEYS`; unknown keys are rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import InvalidArgumentError
from ..heat2d import Heat2DConfig, LinearMotion, SinusoidalMotion
from ..steppers import METHODS, StepperConfig, choose_embedded_count

__all__ = [
    "KEYS",
    "MethodSpec",
    "StudySpec",
    "parse_methods",
    "parse_config_text",
    "load_config",
    "build_spec",
    "keys_help",
]


def _floats(text):
    return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())


def _int(text):
    value = float(text)
    if value != int(value):
        raise ValueError(f"{text!r} is not an integer")
    return int(value)


def _str(text):
    return text.strip()


def _opt_float(text):
    return None if text.strip().lower() in ("", "none") else float(text)


# key -> (parser, default, help)
KEYS = {
    # plate
    "Lx": (float, 2.0, "plate length (m)"),
    "Ly": (float, 1.0, "plate height (m)"),
    "nx": (_int, 64, "elements along x"),
    "ny": (_int, 32, "elements along y"),
    "nu": (float, 1e-4, "conductivity"),
    "alpha": (float, 5e-4, "coupling coefficient of the stock flux"),
    "T0": (float, 1.0, "stock temperature"),
    "T_init": (float, 0.0, "uniform initial temperature"),
    "stock_width": (float, 0.25, "width of the heated strip (m)"),
    "motion": (_str, "linear", "stock motion: linear or sinusoidal"),
    "v": (float, -0.1, "linear motion: velocity (m/s)"),
    "x0": (float, 1.875, "linear motion: centre at t = 0 (m)"),
    "a": (float, 0.495, "sinusoidal motion: amplitude (m)"),
    "eps": (float, 24.0, "sinusoidal motion: period (s)"),
    "s0": (float, 0.505, "sinusoidal motion: mean position (m)"),
    # numerics
    "methods": (_str, "mrsdc:5:8, sdc:5", "method grid, e.g. 'mrsdc:5:8, sdc:5, implicit-euler'; P may be 'auto'"),
    "K": (_int, 3, "largest sweep count; studies cover k = 0..K"),
    "rtol": (float, 1e-10, "relative tolerance of the linear solves"),
    # study
    "t_end": (float, 20.0, "end time (s)"),
    "dt_list": (_floats, (4.0, 2.0, 1.0), "step sizes, strictly descending"),
    "dt": (_opt_float, None, "simulate: step size (defaults to the first dt_list entry)"),
    "steps_per_period": (_opt_float, None, "simulate with sinusoidal motion: steps per period, overrides dt"),
    "snapshot_times": (_floats, (), "simulate: snapshot instants, must be step boundaries"),
    "reference_factor": (_int, 64, "reference step is the smallest dt divided by this"),
    "reference": (_str, "mrsdc:5:8", "work-precision: method of the common reference solution"),
    "reference_K": (_int, 4, "work-precision: sweeps of the reference method"),
    "output_dir": (_str, "out", "directory for CSV, VTK and manifest files"),
    "cache_dir": (_str, "", "reference cache directory (default: <output_dir>/reference-cache)"),
    "workers": (_int, 1, "concurrent study points"),
}


@dataclass(frozen=True)
class MethodSpec:
    """One entry of the method grid; ``P = None`` means choose from the stock speed."""

    method: str
    M: int = 1
    P: int | None = 1

    @property
    def name(self):
        if self.method == "mrsdc":
            return f"mrsdc({self.M},{'auto' if self.P is None else self.P})"
        if self.method == "sdc":
            return f"sdc({self.M})"
        return self.method

    @property
    def iterative(self):
        return self.method in ("sdc", "mrsdc")

    def stepper(self, K, rtol, problem=None, dt=None):
        P = self.P
        if self.method == "mrsdc" and P is None:
            P = choose_embedded_count(problem.motion.speed(), problem.dx, dt / self.M)
        return StepperConfig(
            method=self.method, M=self.M, P=P if self.method == "mrsdc" else 1,
            K=K if self.iterative else 0, rtol=rtol,
        )


def parse_methods(text):
    """Parse ``'mrsdc:5:8, sdc:5, implicit-euler'`` into :class:`MethodSpec` entries."""
    out = []
    for item in (s.strip() for s in text.split(",")):
        if not item:
            continue
        parts = [p.strip() for p in item.split(":")]
        name = parts[0]
        if name not in METHODS:
            raise InvalidArgumentError(f"unknown method {name!r}")
        try:
            if name == "mrsdc":
                if len(parts) != 3:
                    raise InvalidArgumentError("mrsdc needs 'mrsdc:M:P'")
                P = None if parts[2] == "auto" else int(parts[2])
                spec = MethodSpec(name, int(parts[1]), P)
            elif name == "sdc":
                if len(parts) != 2:
                    raise InvalidArgumentError("sdc needs 'sdc:M'")
                spec = MethodSpec(name, int(parts[1]), 1)
            else:
                if len(parts) != 1:
                    raise InvalidArgumentError(f"{name} takes no parameters")
                spec = MethodSpec(name)
        except ValueError as exc:
            raise InvalidArgumentError(f"bad method entry {item!r}: {exc}") from None
        if spec.M < 1 or (spec.P is not None and spec.P < 1):
            raise InvalidArgumentError(f"bad method entry {item!r}")
        out.append(spec)
    if not out:
        raise InvalidArgumentError("empty method grid")
    return tuple(out)


def parse_config_text(text, source="<config>"):
    """Parse key-value text into a dict of typed values (only keys present)."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidArgumentError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = _convert(key, value, f"{source}:{lineno}")
    return values


def _convert(key, value, where):
    if key not in KEYS:
        raise InvalidArgumentError(f"{where}: unknown key {key!r}")
    try:
        return KEYS[key][0](value)
    except ValueError as exc:
        raise InvalidArgumentError(f"{where}: bad value for {key}: {exc}") from None


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InvalidArgumentError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text, str(path))


@dataclass(frozen=True)
class StudySpec:
    kind: str
    problem: Heat2DConfig
    methods: tuple
    K: int
    rtol: float
    t_end: float
    dt_list: tuple
    reference_factor: int = 64
    reference: MethodSpec = MethodSpec("mrsdc", 5, 8)
    reference_K: int = 4
    dt: float | None = None
    snapshot_times: tuple = ()
    output_dir: Path = Path("out")
    cache_dir: Path | None = None
    workers: int = 1
    values: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def reference_cache(self):
        return self.cache_dir if self.cache_dir is not None else self.output_dir / "reference-cache"


def build_spec(kind, values=None, overrides=None):
    """Merge defaults, config values and ``key=value`` overrides into a :class:`StudySpec`."""
    merged = {k: v[1] for k, v in KEYS.items()}
    merged.update(values or {})
    for key, value in (overrides or {}).items():
        merged[key] = _convert(key, value, "override") if isinstance(value, str) else value

    motion_kind = merged["motion"]
    if motion_kind == "linear":
        motion = LinearMotion(v=merged["v"], x0=merged["x0"])
    elif motion_kind == "sinusoidal":
        motion = SinusoidalMotion(a=merged["a"], eps=merged["eps"], s0=merged["s0"])
    else:
        raise InvalidArgumentError(f"motion must be 'linear' or 'sinusoidal', got {motion_kind!r}")
    problem = Heat2DConfig(
        Lx=merged["Lx"], Ly=merged["Ly"], nx=merged["nx"], ny=merged["ny"],
        nu=merged["nu"], alpha=merged["alpha"], T0=merged["T0"],
        stock_width=merged["stock_width"], motion=motion, T_init=merged["T_init"],
    )

    dt_list = tuple(merged["dt_list"])
    if not dt_list or any(not (d > 0 and math.isfinite(d)) for d in dt_list):
        raise InvalidArgumentError("dt_list must hold positive step sizes")
    if any(b >= a for a, b in zip(dt_list, dt_list[1:])):
        raise InvalidArgumentError("dt_list must be strictly descending")
    if kind == "order" and len(dt_list) < 3:
        raise InvalidArgumentError("an order study needs at least three step sizes")
    if merged["K"] < 0 or merged["workers"] < 1 or merged["reference_factor"] < 1:
        raise InvalidArgumentError("K must be >= 0; workers and reference_factor >= 1")
    if not merged["t_end"] > 0:
        raise InvalidArgumentError("t_end must be positive")

    methods = parse_methods(merged["methods"])
    if kind == "residual" and not all(m.iterative for m in methods):
        raise InvalidArgumentError("a residual study needs sdc or mrsdc methods only")
    reference = parse_methods(merged["reference"])
    if len(reference) != 1:
        raise InvalidArgumentError("reference must name exactly one method")

    dt = merged["dt"]
    if merged["steps_per_period"] is not None:
        if motion_kind != "sinusoidal":
            raise InvalidArgumentError("steps_per_period needs sinusoidal motion")
        dt = merged["eps"] / merged["steps_per_period"]

    return StudySpec(
        kind=kind, problem=problem, methods=methods, K=merged["K"], rtol=merged["rtol"],
        t_end=merged["t_end"], dt_list=dt_list, reference_factor=merged["reference_factor"],
        reference=reference[0], reference_K=merged["reference_K"], dt=dt,
        snapshot_times=tuple(merged["snapshot_times"]),
        output_dir=Path(merged["output_dir"]),
        cache_dir=Path(merged["cache_dir"]) if merged["cache_dir"] else None,
        workers=merged["workers"], values=merged,
    )


def keys_help():
    """Table of all configuration keys for ``--help``."""
    width = max(map(len, KEYS))
    lines = []
    for key, (_, default, text) in KEYS.items():
        if isinstance(default, tuple):
            default = ",".join(f"{d:g}" for d in default)
        lines.append(f"  {key:<{width}}  {text} [default: {default}]")
    return "\n".join(lines)
