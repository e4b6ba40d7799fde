"""Polynomial potentials and run configuration.

The weight is exp(-N*V(x)) on the real line, so only even-degree
potentials with positive leading coefficient are accepted.  Everything
downstream (quadrature, equilibrium measure, asymptotics) consumes the
``Potential`` and ``RunConfig`` objects defined here.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace


class ConfigError(ValueError):
    """Malformed or non-integrable configuration, with a field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class Potential:
    """Real polynomial V(x) = sum_k g_k x^k, stored lowest degree first."""

    coeffs: tuple

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coeffs)
        object.__setattr__(self, "coeffs", coeffs)
        if len(coeffs) < 3:
            raise ConfigError("V", "degree must be at least 2")
        if coeffs[-1] == 0.0:
            raise ConfigError("V", "leading coefficient must be nonzero")
        d = len(coeffs) - 1
        if d % 2 != 0 or coeffs[-1] <= 0.0:
            raise ConfigError(
                "V",
                "non-integrable weight: need even degree and positive "
                f"leading coefficient (got degree {d}, leading {coeffs[-1]})",
            )

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def deriv_coeffs(self) -> tuple:
        return tuple(k * g for k, g in enumerate(self.coeffs))[1:]

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        """Horner evaluation of V; works for float, complex and mpf."""
        acc = 0 * x + self.coeffs[-1]
        for g in reversed(self.coeffs[:-1]):
            acc = acc * x + g
        return acc

    def deriv(self, x):
        """Evaluate V'(x) = sum_k k g_k x^(k-1)."""
        dc = self.deriv_coeffs
        acc = 0 * x + dc[-1]
        for g in reversed(dc[:-1]):
            acc = acc * x + g
        return acc


@dataclass(frozen=True)
class RunConfig:
    """Run parameters shared by the exact, equilibrium and asymptotic stages."""

    N: int
    n_values: tuple = ()
    T: float = 1.0
    grid: tuple = ()
    precision: int = 30
    edge_exclusion_delta: float | None = None
    cuts_hint: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.N < 1:
            raise ConfigError("N", f"must be >= 1 (got {self.N})")
        if self.T <= 0:
            raise ConfigError("T", f"must be positive (got {self.T})")
        if self.precision < 15:
            raise ConfigError("precision_digits", f"must be >= 15 (got {self.precision})")
        if self.edge_exclusion_delta is not None and self.edge_exclusion_delta <= 0:
            raise ConfigError("edge_exclusion_delta", "must be positive")
        if not self.grid:
            raise ConfigError("grid", "must be nonempty")
        if any(n < 0 for n in self.n_values):
            raise ConfigError("n_values", "indices must be nonnegative")
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        object.__setattr__(self, "grid", tuple(float(x) for x in self.grid))

    def with_defaults_for(self, pot: Potential) -> "RunConfig":
        return replace(self, n_values=self.n_values or (self.N - 1, self.N))


def _expect(doc: dict, key: str, kind, path: str):
    if key not in doc:
        raise ConfigError(f"{path}{key}", "missing required key")
    val = doc[key]
    if kind is float and isinstance(val, int):
        val = float(val)
    if not isinstance(val, kind):
        raise ConfigError(f"{path}{key}", f"expected {kind.__name__}, got {type(val).__name__}")
    return val


def _grid_from(doc, path: str) -> tuple:
    spec = doc["grid"]
    if isinstance(spec, list):
        if not spec:
            raise ConfigError(f"{path}grid", "explicit grid list is empty")
        return tuple(float(x) for x in spec)
    if isinstance(spec, dict):
        for k in ("min", "max", "count"):
            if k not in spec:
                raise ConfigError(f"{path}grid.{k}", "missing required key")
        lo, hi, count = float(spec["min"]), float(spec["max"]), int(spec["count"])
        if count < 1:
            raise ConfigError(f"{path}grid.count", "must be >= 1")
        if hi < lo:
            raise ConfigError(f"{path}grid", "max must be >= min")
        if count == 1:
            return (lo,)
        step = (hi - lo) / (count - 1)
        return tuple(lo + i * step for i in range(count))
    raise ConfigError(f"{path}grid", "expected list of abscissae or {min,max,count}")


def parse_config(text: str) -> tuple[Potential, RunConfig]:
    """Parse and validate a JSON config document.

    Schema (all other keys rejected)::

        {
          "V": [g0, g1, ...],          # required, lowest degree first
          "N": 20,                     # required
          "n_values": [19, 20],        # optional, defaults to [N-1, N]
          "T": 1.0,                    # optional
          "grid": {"min": -3, "max": 3, "count": 121} | [x0, x1, ...],
          "precision_digits": 30,      # optional
          "edge_exclusion_delta": 0.1, # optional, defaults to 2 N^(-2/3) (b-a)
          "cuts_hint": 2,              # optional
          "seed": 0                    # optional
        }
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<document>", f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("<document>", "top-level value must be an object")

    known = {"V", "N", "n_values", "T", "grid", "precision_digits",
             "edge_exclusion_delta", "cuts_hint", "seed"}
    for key in doc:
        if key not in known:
            raise ConfigError(key, "unknown key")

    vc = _expect(doc, "V", list, "")
    if not all(isinstance(c, (int, float)) for c in vc):
        raise ConfigError("V", "coefficients must be numbers")
    pot = Potential(tuple(float(c) for c in vc))

    n = _expect(doc, "N", int, "")
    if "grid" not in doc:
        raise ConfigError("grid", "missing required key")
    grid = _grid_from(doc, "")

    nv = doc.get("n_values", [n - 1, n])
    if not isinstance(nv, list) or not all(isinstance(k, int) for k in nv):
        raise ConfigError("n_values", "expected list of integers")

    cfg = RunConfig(
        N=n,
        n_values=tuple(nv),
        T=float(doc.get("T", 1.0)),
        grid=grid,
        precision=int(doc.get("precision_digits", 30)),
        edge_exclusion_delta=doc.get("edge_exclusion_delta"),
        cuts_hint=doc.get("cuts_hint"),
        seed=int(doc.get("seed", 0)),
    )
    return pot, cfg


def serialize_config(pot: Potential, cfg: RunConfig) -> str:
    """Inverse of parse_config; round-trips bit-exactly for finite inputs."""
    doc = {
        "V": list(pot.coeffs),
        "N": cfg.N,
        "n_values": list(cfg.n_values),
        "T": cfg.T,
        "grid": list(cfg.grid),
        "precision_digits": cfg.precision,
        "seed": cfg.seed,
    }
    if cfg.edge_exclusion_delta is not None:
        doc["edge_exclusion_delta"] = cfg.edge_exclusion_delta
    if cfg.cuts_hint is not None:
        doc["cuts_hint"] = cfg.cuts_hint
    return json.dumps(doc, sort_keys=True)


def config_hash(pot: Potential, cfg: RunConfig) -> str:
    return hashlib.sha256(serialize_config(pot, cfg).encode()).hexdigest()[:16]
