# ============================================================
# ChaosBound — Scenario configuration
# Normalises a JSON scenario file into one ScenarioConfig.
# Every rejection names the file position it comes from.
# ============================================================

import json
import logging
import os
import re
from dataclasses import dataclass, field, fields, replace
from typing import Optional

from core.errors import ConfigError
from core.settings import DEFAULTS, Settings
from core.transport import SinkhornParams

logger = logging.getLogger(__name__)

TOP_LEVEL_KEYS = {"case_id", "dim", "density", "measure", "degree", "method", "sinkhorn",
                  "checks", "tolerances", "seed", "kernel", "output"}
METHODS = ("auto", "quantile", "gaussian", "entropic")

DENSITY_KEYS = {
    "uniform": {"scale"},
    "wick_shift": {"h", "scale"},
    "scaled_gaussian": {"sigma", "covariance", "mean", "scale"},
    "gaussian_mixture": {"weights", "means", "covariances", "scale"},
    "random_mixture": {"seed", "max_components", "mean_range", "variance_range", "scale"},
    "point_expression": {"of", "scale"},
}
MEASURE_KEYS = {"atoms", "discretized_gaussian"}
OUTPUT_KEYS = {"report", "export"}

DENSITY_CHECKS = ("identities", "theorem", "proposition", "monge_ampere", "discriminant", "chaos",
                  "entropy", "potential_convexity", "monotonicity", "wick_pushforward", "inverse", "oracle")
MEASURE_CHECKS = ("corollary2", "corollary1")
CHECK_ORDER = ("identities", "theorem", "proposition", "corollary2", "corollary1", "monge_ampere",
               "discriminant", "chaos", "convexity", "entropy", "potential_convexity", "monotonicity",
               "wick_pushforward", "inverse", "oracle")
TOLERANCE_KEYS = {"closed_form_tol", "entropic_tol", "identity_tol", "entropic_identity_tol",
                  "monge_ampere_tol", "entropic_monge_ampere_tol", "route_tol"}

# default per-axis degree of the entropic source grid
ENTROPIC_DEGREES = {1: 60, 2: 20, 3: 8}


@dataclass(frozen=True)
class CheckRequest:
    name: str
    args: tuple = ()

    def __str__(self):
        return self.name + (":" + ",".join(f"{a:g}" for a in self.args) if self.args else "")


@dataclass(frozen=True)
class ScenarioConfig:
    case_id: str
    dim: int
    density: Optional[dict] = None
    measure: Optional[dict] = None
    degree: object = "adaptive"
    method: str = "auto"
    sinkhorn: dict = field(default_factory=dict)
    checks: tuple = ()
    tolerances: dict = field(default_factory=dict)
    seed: int = DEFAULTS.seed
    kernel: Optional[list] = None
    output: dict = field(default_factory=dict)
    source_path: Optional[str] = None

    @property
    def check_names(self) -> tuple:
        return tuple(c.name for c in self.checks)

    def check(self, name: str) -> Optional[CheckRequest]:
        return next((c for c in self.checks if c.name == name), None)

    def settings(self) -> Settings:
        return replace(DEFAULTS, seed=self.seed, **self.tolerances)

    def sinkhorn_params(self) -> SinkhornParams:
        overrides = dict(self.sinkhorn)
        overrides.setdefault("seed", self.seed)
        overrides.setdefault("source_degree", ENTROPIC_DEGREES.get(self.dim))
        return SinkhornParams(**overrides)

    def with_overrides(self, tol: Optional[float] = None, seed: Optional[int] = None) -> "ScenarioConfig":
        """CLI-level overrides: --tol-override replaces both margin tolerances."""
        updated = self
        if tol is not None:
            updated = replace(updated, tolerances={**updated.tolerances,
                                                   "closed_form_tol": tol, "entropic_tol": tol})
        if seed is not None:
            updated = replace(updated, seed=seed)
        return updated

    def resolve_output(self, key: str, default: str) -> str:
        target = self.output.get(key, default)
        if os.path.isabs(target) or self.source_path is None or key not in self.output:
            return target
        return os.path.join(os.path.dirname(os.path.abspath(self.source_path)), target)


# ---------------------------------------------------------
# POSITION TRACKING
# ---------------------------------------------------------
class _Locator:
    def __init__(self, path: str, text: str):
        self.path = path
        self.text = text

    def position(self, key: Optional[str]) -> tuple:
        if key is not None:
            match = re.search(r'"' + re.escape(key) + r'"\s*:', self.text)
            if match:
                before = self.text[:match.start()]
                return before.count("\n") + 1, match.start() - before.rfind("\n")
        return 1, 1

    def error(self, message: str, key: Optional[str] = None) -> ConfigError:
        line, col = self.position(key)
        return ConfigError(f"{self.path}:{line}:{col}: {message}")


# ---------------------------------------------------------
# FIELD PARSERS
# ---------------------------------------------------------
def _reject_unknown(obj: dict, allowed: set, loc: _Locator, where: str):
    for key in obj:
        if key not in allowed:
            raise loc.error(f"unknown key {key!r} in {where}", key)


def _parse_density(entry, loc: _Locator) -> dict:
    if not isinstance(entry, dict) or "family" not in entry:
        raise loc.error("density must be an object with a 'family'", "density")
    family = entry["family"]
    if family not in DENSITY_KEYS:
        raise loc.error(f"unknown density family {family!r}", "family")
    _reject_unknown({k: v for k, v in entry.items() if k != "family"}, DENSITY_KEYS[family], loc,
                    f"{family} density")
    if family == "wick_shift" and "h" not in entry:
        raise loc.error("wick_shift needs 'h'", "density")
    if family == "scaled_gaussian" and ("sigma" in entry) == ("covariance" in entry):
        raise loc.error("scaled_gaussian needs exactly one of 'sigma' or 'covariance'", "density")
    if family == "gaussian_mixture" and not {"weights", "means", "covariances"} <= set(entry):
        raise loc.error("gaussian_mixture needs 'weights', 'means' and 'covariances'", "density")
    if family == "random_mixture" and "seed" not in entry:
        raise loc.error("random_mixture needs 'seed'", "density")
    if family == "point_expression":
        inner = entry.get("of")
        if not isinstance(inner, dict) or inner.get("family") == "point_expression":
            raise loc.error("point_expression needs of, a closed-form density entry", "density")
        return {**entry, "of": _parse_density(inner, loc)}
    return dict(entry)


def _parse_measure(entry, loc: _Locator) -> dict:
    if not isinstance(entry, dict):
        raise loc.error("measure must be an object", "measure")
    _reject_unknown(entry, MEASURE_KEYS, loc, "measure")
    if ("atoms" in entry) == ("discretized_gaussian" in entry):
        raise loc.error("measure needs exactly one of 'atoms' or 'discretized_gaussian'", "measure")
    if "atoms" in entry:
        atoms = entry["atoms"]
        if not isinstance(atoms, list) or not atoms:
            raise loc.error("'atoms' must be a non-empty list", "atoms")
        for atom in atoms:
            if not isinstance(atom, dict) or set(atom) != {"location", "weight"}:
                raise loc.error("each atom is an object with 'location' and 'weight'", "atoms")
    return dict(entry)


def _parse_check(raw, loc: _Locator) -> CheckRequest:
    if not isinstance(raw, str):
        raise loc.error(f"checks must be strings, got {raw!r}", "checks")
    name, _, rest = raw.partition(":")
    if name not in CHECK_ORDER:
        raise loc.error(f"unknown check {name!r}", "checks")
    try:
        args = tuple(float(a) for a in rest.split(",")) if rest else ()
    except ValueError:
        raise loc.error(f"check arguments must be numbers: {raw!r}", "checks") from None
    if name == "corollary1" and (not args or any(t <= 0 for t in args)):
        raise loc.error("corollary1 needs a list of positive times, e.g. 'corollary1:1,0.5'", "checks")
    if name == "chaos" and args and (len(args) != 1 or args[0] < 0 or args[0] != int(args[0])):
        raise loc.error("chaos takes one non-negative integer degree", "checks")
    return CheckRequest(name, args)


def _parse_degree(value, loc: _Locator):
    if value == "adaptive":
        return value
    if isinstance(value, int) and not isinstance(value, bool) and value >= 1:
        return value
    raise loc.error(f"degree must be a positive integer or 'adaptive', got {value!r}", "degree")


# ---------------------------------------------------------
# LOADER
# ---------------------------------------------------------
def parse_config(text: str, path: str = "<config>") -> ScenarioConfig:
    loc = _Locator(path, text)
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise loc.error("scenario must be a JSON object")
    _reject_unknown(raw, TOP_LEVEL_KEYS, loc, "scenario")

    for key in ("case_id", "dim"):
        if key not in raw:
            raise loc.error(f"missing required key {key!r}")
    dim = raw["dim"]
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
        raise loc.error(f"dim must be a positive integer, got {dim!r}", "dim")

    density = _parse_density(raw["density"], loc) if "density" in raw else None
    measure = _parse_measure(raw["measure"], loc) if "measure" in raw else None
    if density is not None and measure is not None:
        raise loc.error("give either a density or a measure, not both", "measure")
    if density is None and measure is None:
        raise loc.error("scenario needs a density or a measure")

    method = raw.get("method", "auto")
    if method not in METHODS:
        raise loc.error(f"method must be one of {METHODS}, got {method!r}", "method")
    if method == "quantile" and dim != 1:
        raise loc.error("method 'quantile' requires dim = 1", "method")

    checks = [_parse_check(c, loc) for c in raw.get("checks", ["theorem", "proposition"])]
    for check in checks:
        if check.name in DENSITY_CHECKS and density is None:
            raise loc.error(f"check {check.name!r} needs a density entry", "checks")
        if check.name in MEASURE_CHECKS and measure is None:
            raise loc.error(f"check {check.name!r} needs a measure entry", "checks")
        if check.name in ("discriminant", "wick_pushforward") and check.args and len(check.args) != dim:
            raise loc.error(f"check {check.name!r} needs a {dim}-vector direction", "checks")
        if check.name == "convexity" and len(check.args) > 1:
            raise loc.error("convexity takes a single r", "checks")
    checks.sort(key=lambda c: CHECK_ORDER.index(c.name))

    sinkhorn = raw.get("sinkhorn", {})
    allowed = {f.name for f in fields(SinkhornParams)} - {"seed"}
    if not isinstance(sinkhorn, dict):
        raise loc.error("sinkhorn must be an object", "sinkhorn")
    _reject_unknown(sinkhorn, allowed, loc, "sinkhorn")

    tolerances = raw.get("tolerances", {})
    if not isinstance(tolerances, dict):
        raise loc.error("tolerances must be an object", "tolerances")
    _reject_unknown(tolerances, TOLERANCE_KEYS, loc, "tolerances")

    output = raw.get("output", {})
    if not isinstance(output, dict):
        raise loc.error("output must be an object", "output")
    _reject_unknown(output, OUTPUT_KEYS, loc, "output")

    seed = raw.get("seed", DEFAULTS.seed)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise loc.error(f"seed must be an integer, got {seed!r}", "seed")

    config = ScenarioConfig(
        case_id=str(raw["case_id"]),
        dim=dim,
        density=density,
        measure=measure,
        degree=_parse_degree(raw.get("degree", "adaptive"), loc),
        method=method,
        sinkhorn=dict(sinkhorn),
        checks=tuple(checks),
        tolerances=dict(tolerances),
        seed=seed,
        kernel=raw.get("kernel"),
        output=dict(output),
        source_path=path,
    )
    try:
        config.sinkhorn_params()
    except (TypeError, ValueError) as exc:
        raise loc.error(f"invalid sinkhorn parameters: {exc}", "sinkhorn") from None
    logger.debug("loaded scenario %s with checks %s", config.case_id, [str(c) for c in checks])
    return config


def load_config(path: str) -> ScenarioConfig:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise ConfigError(f"{path}:1:1: cannot read config ({exc.strerror})") from None
    return parse_config(text, path)
