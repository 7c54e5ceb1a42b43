"""Parametric structural functions on [-1, 1] with certified Lipschitz bounds.

Model ingredients (the two outcome branches, the endogenous and exogenous
spillover coefficients, the noise scale) are restricted to closed families so
that Lipschitz constants are exact closed forms and configs round-trip without
loss. Everything is immutable after construction.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import ConfigError, DomainError

FAMILIES = ("constant", "polynomial", "sinusoid-sum")

# margin below 1 required of sup|delta|, so the fixed-point map has a
# certified contraction factor
DELTA_MARGIN = 1e-6

_VALIDATION_GRID_N = 10_001


@dataclass(frozen=True)
class FuncSpec:
    """One function on [-1, 1].

    family:
        "constant"      coefficients = [c]
        "polynomial"    coefficients = [a0, a1, ...] for sum a_k z^k
        "sinusoid-sum"  coefficients = [A1, w1, A2, w2, ...] for sum A_j sin(w_j z);
                        an odd-length list supplies a leading constant offset.
    """

    family: str
    coefficients: tuple[float, ...]

    def __init__(self, family: str, coefficients: Iterable[float]):
        if family not in FAMILIES:
            raise ConfigError(f"unknown function family {family!r}; expected one of {FAMILIES}")
        coeffs = tuple(float(c) for c in coefficients)
        if not coeffs:
            raise ConfigError("coefficients must be non-empty")
        if not all(np.isfinite(coeffs)):
            raise ConfigError("coefficients must be finite")
        if family == "constant" and len(coeffs) != 1:
            raise ConfigError("constant family takes exactly one coefficient")
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "coefficients", coeffs)

    def _sinusoid_parts(self) -> tuple[float, np.ndarray, np.ndarray]:
        coeffs = self.coefficients
        if len(coeffs) % 2 == 1:
            offset, rest = coeffs[0], coeffs[1:]
        else:
            offset, rest = 0.0, coeffs
        amps = np.asarray(rest[0::2])
        freqs = np.asarray(rest[1::2])
        return offset, amps, freqs

    def __call__(self, z):
        return eval_func(self, z)

    def to_config(self) -> dict:
        return {"family": self.family, "coefficients": list(self.coefficients)}

    @classmethod
    def from_config(cls, doc: dict) -> "FuncSpec":
        if not isinstance(doc, dict) or set(doc) != {"family", "coefficients"}:
            raise ConfigError(f"function spec must be {{family, coefficients}}, got {doc!r}")
        return cls(doc["family"], doc["coefficients"])


def constant(c: float) -> FuncSpec:
    return FuncSpec("constant", [c])


def polynomial(coefficients: Iterable[float]) -> FuncSpec:
    return FuncSpec("polynomial", coefficients)


def sinusoid_sum(coefficients: Iterable[float]) -> FuncSpec:
    return FuncSpec("sinusoid-sum", coefficients)


def eval_func(spec: FuncSpec, z):
    """Evaluate spec at z (scalar or array). Raises DomainError outside [-1, 1]."""
    arr = np.asarray(z, dtype=float)
    if arr.size and (np.min(arr) < -1.0 - 1e-12 or np.max(arr) > 1.0 + 1e-12):
        bad = arr[(arr < -1.0 - 1e-12) | (arr > 1.0 + 1e-12)].flat[0]
        raise DomainError(f"z={bad} outside the model domain [-1, 1]")
    if spec.family == "constant":
        out = np.full_like(arr, spec.coefficients[0], dtype=float)
    elif spec.family == "polynomial":
        # Horner, highest degree first
        out = np.zeros_like(arr, dtype=float)
        for c in reversed(spec.coefficients):
            out = out * arr + c
    else:
        offset, amps, freqs = spec._sinusoid_parts()
        out = offset + np.sin(np.multiply.outer(arr, freqs)) @ amps
    if np.isscalar(z) or np.ndim(z) == 0:
        return float(out)
    return out


def lipschitz_constant(spec: FuncSpec) -> float:
    """A certified (not necessarily tight) Lipschitz bound on [-1, 1].

    polynomial: sum_k k*|a_k| bounds |f'| on [-1, 1]; sinusoid-sum: sum |A_j w_j|.
    """
    if spec.family == "constant":
        return 0.0
    if spec.family == "polynomial":
        return float(sum(k * abs(a) for k, a in enumerate(spec.coefficients)))
    _, amps, freqs = spec._sinusoid_parts()
    return float(np.sum(np.abs(amps * freqs)))


@dataclass(frozen=True)
class LipschitzRecord:
    C: float        # max of the two outcome-branch constants
    C_delta: float
    C_gamma: float


@dataclass(frozen=True)
class ModelSpec:
    """Full structural model: outcome branches, spillover coefficients, noise.

    delta_bar (the fine-grid sup of |delta|) is computed at construction and
    doubles as the certified contraction factor; construction fails when it
    reaches 1 - 1e-6, or when delta's oscillation on the grid exceeds it.

    gamma_one_sided=True replaces gamma(z) by gamma(z)*1{z <= 0}: the exogenous
    spillover acts only through untreated neighbors. The donut-design study
    needs this discontinuous variant; no continuous family can express it.
    """

    m_plus: FuncSpec
    m_minus: FuncSpec
    delta: FuncSpec
    gamma: FuncSpec
    noise_sd: FuncSpec
    gamma_one_sided: bool = False
    delta_bar: float = field(init=False)
    lipschitz: LipschitzRecord = field(init=False)

    def __post_init__(self):
        grid = np.linspace(-1.0, 1.0, _VALIDATION_GRID_N)
        dvals = eval_func(self.delta, grid)
        sup_abs = float(np.max(np.abs(dvals)))
        if sup_abs > 1.0 - DELTA_MARGIN:
            raise ConfigError(
                f"sup|delta| = {sup_abs:.8f} exceeds {1 - DELTA_MARGIN}; "
                "the fixed-point map would not be a certified contraction"
            )
        oscillation = float(np.max(dvals) - np.min(dvals))
        if oscillation > sup_abs + 1e-12:
            raise ConfigError(
                f"delta oscillation {oscillation:.8f} exceeds sup|delta| = {sup_abs:.8f}"
            )
        svals = eval_func(self.noise_sd, grid)
        if np.min(svals) < 0.0:
            raise ConfigError("noise_sd must be nonnegative on [-1, 1]")
        object.__setattr__(self, "delta_bar", sup_abs)
        object.__setattr__(
            self,
            "lipschitz",
            LipschitzRecord(
                C=max(lipschitz_constant(self.m_plus), lipschitz_constant(self.m_minus)),
                C_delta=lipschitz_constant(self.delta),
                C_gamma=lipschitz_constant(self.gamma),
            ),
        )

    def gamma_at(self, z):
        """gamma as it enters outcomes: gamma(z), or gamma(z)*1{z<=0} when one-sided."""
        vals = eval_func(self.gamma, z)
        if not self.gamma_one_sided:
            return vals
        arr = np.asarray(z, dtype=float)
        mask = (arr <= 0.0).astype(float)
        out = np.asarray(vals) * mask
        if np.ndim(z) == 0:
            return float(out)
        return out

    def noise_sup(self) -> float:
        grid = np.linspace(-1.0, 1.0, _VALIDATION_GRID_N)
        return float(np.max(eval_func(self.noise_sd, grid)))

    def to_config(self) -> dict:
        doc = {
            "m_plus": self.m_plus.to_config(),
            "m_minus": self.m_minus.to_config(),
            "delta": self.delta.to_config(),
            "gamma": self.gamma.to_config(),
            "noise_sd": self.noise_sd.to_config(),
        }
        if self.gamma_one_sided:
            doc["gamma_one_sided"] = True
        return doc

    @classmethod
    def from_config(cls, doc: dict) -> "ModelSpec":
        required = {"m_plus", "m_minus", "delta", "gamma", "noise_sd"}
        if not isinstance(doc, dict):
            raise ConfigError("model config must be a mapping")
        unknown = set(doc) - required - {"gamma_one_sided"}
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        missing = required - set(doc)
        if missing:
            raise ConfigError(f"model config missing keys: {sorted(missing)}")
        one_sided = doc.get("gamma_one_sided", False)
        if not isinstance(one_sided, bool):
            raise ConfigError("gamma_one_sided must be a boolean")
        return cls(
            m_plus=FuncSpec.from_config(doc["m_plus"]),
            m_minus=FuncSpec.from_config(doc["m_minus"]),
            delta=FuncSpec.from_config(doc["delta"]),
            gamma=FuncSpec.from_config(doc["gamma"]),
            noise_sd=FuncSpec.from_config(doc["noise_sd"]),
            gamma_one_sided=one_sided,
        )

    def content_hash(self) -> str:
        blob = json.dumps(self.to_config(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]
