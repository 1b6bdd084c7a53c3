"""Line-oriented configuration: `[section]` headers and `key = value` pairs.

The parser keeps line numbers so every validation error can point at the
offending key and line; serialization emits a canonical text that reparses
to an equal configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import InitialBelief, scenario_preset

__all__ = ["ConfigError", "RunConfig", "parse_config", "serialize_config"]

RUN_KINDS = (
    "solve-thresholds", "solve-alpha", "alpha-curve", "simulate-onehop",
    "match-gamma", "simulate-e2e", "verify",
)

_POLICY_CHOICES = ("comdp", "inner", "outer", "a-comdp", "a-simpl", "ff", "mf")


class ConfigError(ValueError):
    pass


def _parse_bool(raw):
    if raw.lower() in ("true", "yes", "1", "on"):
        return True
    if raw.lower() in ("false", "no", "0", "off"):
        return False
    raise ValueError("expected a boolean")


def _parse_float_list(raw):
    return tuple(float(tok) for tok in raw.split(",") if tok.strip())


def _parse_str_list(raw):
    return tuple(tok.strip() for tok in raw.split(",") if tok.strip())


# section -> key -> (parser, default, validator or None)
SCHEMA = {
    "run": {
        "kind": (str, "simulate-onehop", lambda v: v in RUN_KINDS),
        "seed": (int, 20110915, lambda v: v >= 0),
        "out": (str, "", None),
        "threads": (int, 1, lambda v: v >= 1),
        "cache_dir": (str, "", None),
    },
    "model": {
        "preset": (str, "progress10", None),
        "T": (float, 1.0, lambda v: v > 0),
        "K": (int, 50, lambda v: v >= 1),
        "belief": (str, "", lambda v: v in (
            "", "truncated-poisson", "binomial-truncated", "uniform", "point-mass")),
        "belief_lambda": (float, 10.0, lambda v: v > 0),
        "belief_prob": (float, 0.5, lambda v: 0 < v < 1),
        "belief_point": (int, 1, lambda v: v >= 1),
    },
    "solver": {
        "w_points": (int, 100, lambda v: v >= 2),
        "b_points": (int, 100, lambda v: v >= 2),
        "eta": (float, 1.0, lambda v: v > 0),
    },
    "onehop": {
        "replications": (int, 100_000, lambda v: v >= 1),
        "eta_min": (float, 0.1, lambda v: v > 0),
        "eta_max": (float, 1000.0, lambda v: v > 0),
        "eta_points": (int, 40, lambda v: v >= 1),
        "policies": (_parse_str_list,
                     ("comdp", "inner", "outer", "a-comdp", "a-simpl"),
                     lambda v: all(p in _POLICY_CHOICES for p in v) and len(v) > 0),
        "gamma": (float, 0.8, lambda v: v >= 0),
        "refine": (_parse_bool, True, None),
        "nbar_strict": (_parse_bool, True, None),
        "table": (str, "", None),
    },
    "simplified": {
        "n_tilde": (int, 0, lambda v: v >= 0),  # 0: derive from the belief
        "eta": (float, 1.0, lambda v: v > 0),
        "gamma": (float, -1.0, None),           # <0: not requested
        "alpha_points": (int, 50, lambda v: v >= 2),
    },
    "e2e": {
        "L": (float, 10.0, lambda v: v > 0),
        "density": (float, 5.0, lambda v: v > 0),
        "r_c": (float, 1.0, lambda v: v > 0),
        "t_beacon_ms": (float, 5.0, lambda v: v > 0),
        "t_data_ms": (float, 30.0, lambda v: v > 0),
        "transfers": (int, 1000, lambda v: v >= 1),
        "gammas": (_parse_float_list,
                   (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9), None),
        "topology_seed": (int, 1, lambda v: v >= 0),
    },
}


@dataclass
class RunConfig:
    """Validated run description; `values[section][key]` holds every setting
    with defaults filled in."""

    kind: str
    values: dict = field(default_factory=dict)

    def __getitem__(self, section):
        return self.values[section]

    def __eq__(self, other):
        return isinstance(other, RunConfig) and (
            self.kind == other.kind and self.values == other.values
        )

    # -- resolved objects ------------------------------------------------

    def build_scenario(self):
        """(model, dist, belief) resolved from the model section."""
        from .model import WakeModel

        m = self.values["model"]
        dist, belief, _ = scenario_preset(m["preset"], K=m["K"])
        model = WakeModel(T=m["T"])
        if m["belief"]:
            K = m["K"]
            if m["belief"] == "truncated-poisson":
                belief = InitialBelief.truncated_poisson(m["belief_lambda"], K)
            elif m["belief"] == "binomial-truncated":
                belief = InitialBelief.truncated_binomial(m["belief_prob"], K)
            elif m["belief"] == "uniform":
                belief = InitialBelief.uniform_counts(K)
            else:
                belief = InitialBelief.point_mass(m["belief_point"], K)
        return model, dist, belief

    def etas(self) -> np.ndarray:
        oh = self.values["onehop"]
        if oh["eta_points"] == 1:
            return np.array([oh["eta_min"]])
        return np.geomspace(oh["eta_min"], oh["eta_max"], oh["eta_points"])


def parse_config(text: str) -> RunConfig:
    """Parse and validate; every complaint names the key and line."""
    values = {sec: {k: spec[1] for k, spec in keys.items()}
              for sec, keys in SCHEMA.items()}
    section = None
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(
                    f"line {lineno}: unknown section [{section}]; "
                    f"valid: {', '.join(sorted(SCHEMA))}"
                )
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        if section is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, _, raw_val = line.partition("=")
        key = key.strip()
        raw_val = raw_val.split("#", 1)[0].strip()
        if key not in SCHEMA[section]:
            raise ConfigError(
                f"line {lineno}: unknown key {key!r} in [{section}]; "
                f"valid: {', '.join(sorted(SCHEMA[section]))}"
            )
        if (section, key) in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} in [{section}]")
        seen.add((section, key))
        parser, _, validator = SCHEMA[section][key]
        try:
            val = parser(raw_val)
        except ValueError:
            raise ConfigError(
                f"line {lineno}: bad value {raw_val!r} for {key!r} in [{section}]"
            ) from None
        if validator is not None and not validator(val):
            raise ConfigError(
                f"line {lineno}: value {val!r} out of range for {key!r} in [{section}]"
            )
        values[section][key] = val
    kind = values["run"]["kind"]
    cfg = RunConfig(kind=kind, values=values)
    _cross_validate(cfg)
    return cfg


def _cross_validate(cfg: RunConfig) -> None:
    oh = cfg.values["onehop"]
    if oh["eta_min"] > oh["eta_max"]:
        raise ConfigError("onehop.eta_min must not exceed onehop.eta_max")
    try:
        scenario_preset(cfg.values["model"]["preset"])
    except ValueError as exc:
        raise ConfigError(f"model.preset: {exc}") from None


def serialize_config(cfg: RunConfig) -> str:
    """Canonical text form; parse_config(serialize_config(c)) == c."""
    lines = []
    for section in SCHEMA:
        lines.append(f"[{section}]")
        for key in SCHEMA[section]:
            val = cfg.values[section][key]
            if isinstance(val, tuple):
                rendered = ",".join(str(v) for v in val)
            elif isinstance(val, bool):
                rendered = "true" if val else "false"
            elif isinstance(val, float):
                rendered = repr(val)
            else:
                rendered = str(val)
            lines.append(f"{key} = {rendered}")
        lines.append("")
    return "\n".join(lines)
