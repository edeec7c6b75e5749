"""Scenario description: velocity distributions, Poisson arrivals, densities.

Units are fixed as SI throughout: meters, seconds, bits. Speeds are signed;
negative speeds are traffic moving against the observer's direction (it
enters the segment at the far end). Probability inputs are validated, never
silently renormalized.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy import integrate

from .errors import InvalidParameterError, NumericalError, SchemaError

PROB_TOL = 1e-12
DENSITY_NORM_TOL = 1e-6
QUAD_ABS_TOL = 1e-9


@dataclass(frozen=True)
class VelocityClass:
    """One speed class: signed speed in m/s and its probability."""

    v: float
    p: float

    def __post_init__(self):
        if self.v == 0:
            raise InvalidParameterError("class speed must be nonzero")
        if not 0.0 <= self.p <= 1.0:
            raise InvalidParameterError("class probability must lie in [0, 1]")


@dataclass(frozen=True)
class DiscreteVelocityDist:
    classes: tuple[VelocityClass, ...]

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        if len(self.classes) < 1:
            raise InvalidParameterError("need at least one velocity class")
        total = math.fsum(c.p for c in self.classes)
        if abs(total - 1.0) > PROB_TOL:
            raise InvalidParameterError(
                f"class probabilities sum to {total!r}, not 1"
            )
        speeds = [c.v for c in self.classes]
        if len(set(speeds)) != len(speeds):
            raise InvalidParameterError("class speeds must be distinct")
        object.__setattr__(self, "_speeds", np.array(speeds, dtype=float))
        object.__setattr__(
            self, "_cum_p", np.cumsum([c.p for c in self.classes])
        )

    @property
    def m(self) -> int:
        return len(self.classes)

    @property
    def speeds(self) -> np.ndarray:
        return self._speeds

    @property
    def probs(self) -> np.ndarray:
        return np.array([c.p for c in self.classes])

    def sample(self, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Draw n (velocity, class index) pairs."""
        idx = np.searchsorted(self._cum_p, rng.random(n), side="right")
        idx = np.minimum(idx, self.m - 1)
        return self._speeds[idx], idx


@dataclass(frozen=True)
class ContinuousVelocityDist:
    """A one-directional continuous speed density on [a, b] with 0 outside.

    The support must not straddle zero; bidirectional traffic is expressed
    as a :class:`MixtureVelocityDist` of two of these with direction
    weights. Sampling is implemented for the uniform family; arbitrary
    densities support expectation queries only.
    """

    density: Callable[[float], float]
    support: tuple[float, float]
    is_uniform: bool = False

    def __post_init__(self):
        a, b = self.support
        if not a < b:
            raise InvalidParameterError("support must satisfy a < b")
        if a <= 0.0 <= b:
            raise InvalidParameterError("support must exclude zero speed")
        mass, _ = integrate.quad(self.density, a, b, epsabs=QUAD_ABS_TOL, limit=200)
        if abs(mass - 1.0) > DENSITY_NORM_TOL:
            raise InvalidParameterError(
                f"density integrates to {mass!r} over the support, not 1"
            )

    @classmethod
    def uniform(cls, a: float, b: float) -> "ContinuousVelocityDist":
        width = b - a
        return cls(
            density=lambda v: 1.0 / width if a <= v <= b else 0.0,
            support=(a, b),
            is_uniform=True,
        )

    def sample(self, rng: np.random.Generator, n: int) -> tuple[np.ndarray, None]:
        if not self.is_uniform:
            raise InvalidParameterError(
                "sampling is only implemented for the uniform family"
            )
        a, b = self.support
        return rng.uniform(a, b, n), None


@dataclass(frozen=True)
class MixtureVelocityDist:
    """Weighted mixture of one-directional continuous distributions."""

    components: tuple[ContinuousVelocityDist, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if len(self.components) < 1:
            raise InvalidParameterError("mixture needs at least one component")
        if len(self.components) != len(self.weights):
            raise InvalidParameterError("component/weight count mismatch")
        if any(w < 0 for w in self.weights):
            raise InvalidParameterError("mixture weights must be nonnegative")
        if abs(math.fsum(self.weights) - 1.0) > PROB_TOL:
            raise InvalidParameterError("mixture weights must sum to 1")

    def sample(self, rng: np.random.Generator, n: int) -> tuple[np.ndarray, None]:
        cum = np.cumsum(self.weights)
        comp = np.searchsorted(cum, rng.random(n), side="right")
        comp = np.minimum(comp, len(self.components) - 1)
        out = np.empty(n)
        for i, dist in enumerate(self.components):
            mask = comp == i
            out[mask] = dist.sample(rng, int(mask.sum()))[0]
        return out, None


VelocityDist = Union[DiscreteVelocityDist, ContinuousVelocityDist, MixtureVelocityDist]


@dataclass(frozen=True)
class Scenario:
    """One experiment: traffic process, segment geometry, radio parameters.

    lam        vehicle arrival rate (vehicles/second)
    d          segment length between consecutive roadside stations (meters)
    r          transmit range (meters)
    bit_rate   radio bit rate (bits/second)
    packet_bits  packet size (bits); packet rate = bit_rate / packet_bits
    """

    lam: float
    d: float
    r: float
    bit_rate: float
    packet_bits: float
    velocity: VelocityDist
    seed: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise InvalidParameterError("arrival rate must be >= 0")
        for name in ("d", "r", "bit_rate", "packet_bits"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be positive")
        if self.r > self.d / 10.0:
            warnings.warn(
                f"transmit range r={self.r} is not small against d={self.d}; "
                "encounter counting assumes r << d",
                stacklevel=2,
            )

    @property
    def packet_rate(self) -> float:
        return self.bit_rate / self.packet_bits

    @property
    def is_discrete(self) -> bool:
        return isinstance(self.velocity, DiscreteVelocityDist)

    def min_speed(self) -> float:
        """Smallest possible |v| among reachable velocities."""
        vel = self.velocity
        if isinstance(vel, DiscreteVelocityDist):
            reachable = [abs(c.v) for c in vel.classes if c.p > 0]
            return min(reachable)
        if isinstance(vel, ContinuousVelocityDist):
            a, b = vel.support
            return min(abs(a), abs(b))
        return min(
            min(abs(c.support[0]), abs(c.support[1]))
            for c, w in zip(vel.components, vel.weights)
            if w > 0
        )

    def max_travel_time(self) -> float:
        return self.d / self.min_speed()


@dataclass(frozen=True)
class DerivedClassQuantities:
    """Per-class travel time (signed) and highway density."""

    travel_time: float
    density: float


@dataclass(frozen=True)
class ArrivalRecord:
    """One vehicle entering the segment.

    Forward traffic (v > 0) enters at position 0, reverse traffic (v < 0)
    at position d. ``class_index`` is None for continuous distributions.
    """

    entry_time: float
    v: float
    class_index: int | None = None


def class_quantities(scenario: Scenario, m: int) -> DerivedClassQuantities:
    """Travel time d/v and density lam*p/|v| for class m."""
    if not scenario.is_discrete:
        raise InvalidParameterError("class quantities need a discrete distribution")
    cls = scenario.velocity.classes[m]
    return DerivedClassQuantities(
        travel_time=scenario.d / cls.v,
        density=scenario.lam * cls.p / abs(cls.v),
    )


def sample_velocities(
    dist: VelocityDist, n: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray | None]:
    """Draw n velocities; class indices come back for discrete distributions."""
    return dist.sample(rng, n)


def generate_arrivals(
    scenario: Scenario,
    window: tuple[float, float],
    rng: np.random.Generator,
) -> list[ArrivalRecord]:
    """Homogeneous Poisson arrivals on the window, sorted by entry time."""
    t0, t1 = window
    if t1 <= t0:
        return []
    n = rng.poisson(scenario.lam * (t1 - t0))
    times = np.sort(rng.uniform(t0, t1, n))
    speeds, idx = sample_velocities(scenario.velocity, n, rng)
    if idx is None:
        return [ArrivalRecord(float(t), float(v)) for t, v in zip(times, speeds)]
    return [
        ArrivalRecord(float(t), float(v), int(i))
        for t, v, i in zip(times, speeds, idx)
    ]


def mean_inverse_speed(dist: VelocityDist) -> float:
    """E[1/|V|] for a velocity distribution.

    Uniform components use the closed-form log integral; other densities go
    through adaptive quadrature with absolute tolerance 1e-9.
    """
    if isinstance(dist, DiscreteVelocityDist):
        return math.fsum(c.p / abs(c.v) for c in dist.classes)
    if isinstance(dist, MixtureVelocityDist):
        return math.fsum(
            w * mean_inverse_speed(c) for c, w in zip(dist.components, dist.weights)
        )
    a, b = dist.support
    if dist.is_uniform:
        lo, hi = sorted((abs(a), abs(b)))
        return math.log(hi / lo) / (hi - lo)
    value, err = integrate.quad(
        lambda v: dist.density(v) / abs(v), a, b, epsabs=QUAD_ABS_TOL, limit=200
    )
    if err > 10 * QUAD_ABS_TOL + 1e-12 * abs(value):
        raise NumericalError(
            f"quadrature for E[1/|V|] did not converge: value={value}, err={err}"
        )
    return value


# --- scenario JSON schema -------------------------------------------------

_TOP_KEYS = {"lambda", "d", "r", "bit_rate", "packet_bits", "seed", "velocity"}
_DISCRETE_KEYS = {"type", "classes"}
_CLASS_KEYS = {"v", "p"}
_CONTINUOUS_KEYS = {"type", "family", "a", "b", "direction_split"}


def _require_number(doc: dict, key: str, path: str) -> float:
    val = doc[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise SchemaError(f"{path}.{key}", "expected a number")
    if not math.isfinite(val):
        raise SchemaError(f"{path}.{key}", "must be finite")
    return float(val)


def _check_keys(doc: dict, allowed: set[str], required: set[str], path: str):
    if not isinstance(doc, dict):
        raise SchemaError(path, "expected an object")
    for key in doc:
        if key not in allowed:
            raise SchemaError(f"{path}.{key}", "unknown key")
    for key in required:
        if key not in doc:
            raise SchemaError(f"{path}.{key}", "missing required key")


def _velocity_from_dict(doc: dict, path: str) -> VelocityDist:
    if not isinstance(doc, dict) or "type" not in doc:
        raise SchemaError(f"{path}.type", "missing required key")
    kind = doc["type"]
    if kind == "discrete":
        _check_keys(doc, _DISCRETE_KEYS, _DISCRETE_KEYS, path)
        raw = doc["classes"]
        if not isinstance(raw, list) or not raw:
            raise SchemaError(f"{path}.classes", "expected a non-empty array")
        classes = []
        for i, entry in enumerate(raw):
            cpath = f"{path}.classes[{i}]"
            _check_keys(entry, _CLASS_KEYS, _CLASS_KEYS, cpath)
            v = _require_number(entry, "v", cpath)
            p = _require_number(entry, "p", cpath)
            try:
                classes.append(VelocityClass(v, p))
            except InvalidParameterError as exc:
                raise SchemaError(cpath, str(exc)) from exc
        try:
            return DiscreteVelocityDist(tuple(classes))
        except InvalidParameterError as exc:
            raise SchemaError(f"{path}.classes", str(exc)) from exc
    if kind == "continuous":
        _check_keys(doc, _CONTINUOUS_KEYS, _CONTINUOUS_KEYS, path)
        if doc["family"] != "uniform":
            raise SchemaError(f"{path}.family", "only the 'uniform' family is supported")
        a = _require_number(doc, "a", path)
        b = _require_number(doc, "b", path)
        w = _require_number(doc, "direction_split", path)
        if not 0.0 < a < b:
            raise SchemaError(f"{path}.a", "need 0 < a < b for the forward support")
        if not 0.0 <= w <= 1.0:
            raise SchemaError(f"{path}.direction_split", "must lie in [0, 1]")
        forward = ContinuousVelocityDist.uniform(a, b)
        if w == 1.0:
            return forward
        reverse = ContinuousVelocityDist.uniform(-b, -a)
        if w == 0.0:
            return reverse
        return MixtureVelocityDist((forward, reverse), (w, 1.0 - w))
    raise SchemaError(f"{path}.type", "must be 'discrete' or 'continuous'")


def scenario_from_dict(doc: dict) -> Scenario:
    """Validate a scenario document and build the Scenario.

    Raises :class:`SchemaError` with a dotted field path on any violation;
    unknown keys are rejected at every level.
    """
    _check_keys(doc, _TOP_KEYS, _TOP_KEYS, "$")
    lam = _require_number(doc, "lambda", "$")
    d = _require_number(doc, "d", "$")
    r = _require_number(doc, "r", "$")
    bit_rate = _require_number(doc, "bit_rate", "$")
    packet_bits = _require_number(doc, "packet_bits", "$")
    seed = doc["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise SchemaError("$.seed", "expected an integer")
    velocity = _velocity_from_dict(doc["velocity"], "$.velocity")
    try:
        return Scenario(
            lam=lam,
            d=d,
            r=r,
            bit_rate=bit_rate,
            packet_bits=packet_bits,
            velocity=velocity,
            seed=seed,
        )
    except InvalidParameterError as exc:
        raise SchemaError("$", str(exc)) from exc
