"""Flat TOML-style run configuration: sections, scalar values, numeric lists.

Unknown keys are rejected with the offending key named; every value is
type-checked against the experiment schema before a run starts.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{k}: {msg}" for k, msg in self.errors))


def _parse_scalar(text: str):
    text = text.strip()
    if text.startswith("[") and text.endswith("]"):
        inner = text[1:-1].strip()
        if not inner:
            return []
        return [_parse_scalar(tok) for tok in inner.split(",")]
    if text.startswith('"') and text.endswith('"') and len(text) >= 2:
        return text[1:-1]
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    raise ValueError(f"cannot parse value {text!r}")


def parse_keyvalues(text: str) -> dict:
    """Parse sections of key = value lines into {section.key: value} ('' = top)."""
    out: dict = {}
    section = ""
    errors = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            errors.append((f"line {lineno}", f"expected key = value, got {raw.strip()!r}"))
            continue
        key, _, val = line.partition("=")
        key = key.strip()
        full = f"{section}.{key}" if section else key
        try:
            out[full] = _parse_scalar(val)
        except ValueError as exc:
            errors.append((full, str(exc)))
    if errors:
        raise ConfigError(errors)
    return out


# schema: key -> (type-check, description)
_TOP_KEYS = {
    "experiment": str,
    "seed": int,
    "samples": int,
    "workers": int,
    "out": str,
}

_BELL_KEYS = {
    "kappa": (int, float),
    "kappa_t": list,
    "theta": (int, float),
    "theta_prime": (int, float),
    "phi": (int, float),
    "phi_prime": (int, float),
}

_OPENSYS_KEYS = {
    "epsilon": (int, float),
    "omega": (int, float),
    "coupling": (int, float),
    "t_final": (int, float),
    "steps": int,
    "shift": bool,
    "mode": str,
    "nmax": int,
    "method": str,
    "b0_re": (int, float),
    "b0_im": (int, float),
}

_GREENS_KEYS = {
    "which": str,
    "omega": (int, float),
    "t_final": (int, float),
    "steps": int,
    "kappa": (int, float),
    "kappa_t": (int, float),
}

_SECTIONS = {"bell": _BELL_KEYS, "opensys": _OPENSYS_KEYS, "greens": _GREENS_KEYS}

EXPERIMENTS = ("bell", "opensys", "greens", "selftest")


@dataclass
class RunConfig:
    experiment: str
    seed: int = 0
    samples: int = 100_000
    workers: int = 0            # 0: resolve from environment
    out: str = ""
    params: dict = field(default_factory=dict)


def parse_config(text: str) -> RunConfig:
    """Validate raw config text into a RunConfig or raise ConfigError."""
    kv = parse_keyvalues(text)
    errors = []
    top: dict = {}
    params: dict = {}
    for full, value in kv.items():
        if "." in full:
            section, key = full.split(".", 1)
            schema = _SECTIONS.get(section)
            if schema is None:
                errors.append((full, f"unknown section [{section}]"))
                continue
            if key not in schema:
                errors.append((full, "unknown key"))
                continue
            want = schema[key]
            if not isinstance(value, want if isinstance(want, tuple) else (want,)):
                errors.append((full, f"expected {want}, got {type(value).__name__}"))
                continue
            params[f"{section}.{key}"] = value
        else:
            if full not in _TOP_KEYS:
                errors.append((full, "unknown key"))
                continue
            if not isinstance(value, _TOP_KEYS[full]):
                errors.append((full, f"expected {_TOP_KEYS[full].__name__},"
                                     f" got {type(value).__name__}"))
                continue
            top[full] = value
    experiment = top.get("experiment")
    if experiment is None:
        errors.append(("experiment", "required key missing"))
    elif experiment not in EXPERIMENTS:
        errors.append(("experiment", f"must be one of {EXPERIMENTS}"))
    samples = top.get("samples", 100_000)
    if isinstance(samples, int) and samples < 2:
        errors.append(("samples", "must be >= 2"))
    for key, val in params.items():
        if key == "opensys.steps" and val < 1:
            errors.append((key, "must be >= 1"))
        if key == "opensys.nmax" and val < 2:
            errors.append((key, "must be >= 2"))
        if key == "opensys.mode" and val not in ("coherent", "fock"):
            errors.append((key, "must be 'coherent' or 'fock'"))
        if key == "opensys.method" and val not in ("euler", "midpoint"):
            errors.append((key, "must be 'euler' or 'midpoint'"))
        if key == "bell.kappa_t" and any(not isinstance(x, (int, float)) or x < 0
                                         for x in val):
            errors.append((key, "must be a list of nonnegative numbers"))
    if errors:
        raise ConfigError(errors)
    return RunConfig(experiment=experiment, seed=top.get("seed", 0), samples=samples,
                     workers=top.get("workers", 0), out=top.get("out", ""), params=params)
