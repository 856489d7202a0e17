"""Prior distributions for calibration parameters."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import lognorm, norm

from .errors import ConfigError

_KINDS = ("uniform", "normal", "lognormal")


@dataclass(frozen=True)
class Prior1D:
    """One marginal prior: uniform(lower, upper), normal(mu, sigma) or
    lognormal(mu, sigma) with (mu, sigma) the log-space parameters."""

    kind: str
    p1: float
    p2: float

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"unknown prior kind {self.kind!r}; options: {_KINDS}")
        if self.kind == "uniform" and not self.p1 < self.p2:
            raise ConfigError(f"uniform prior needs lower < upper, got "
                              f"({self.p1}, {self.p2})")
        if self.kind in ("normal", "lognormal") and not self.p2 > 0:
            raise ConfigError(f"{self.kind} prior needs sigma > 0, got {self.p2}")

    @classmethod
    def uniform(cls, lower, upper):
        return cls("uniform", float(lower), float(upper))

    @classmethod
    def normal(cls, mu, sigma):
        return cls("normal", float(mu), float(sigma))

    @classmethod
    def lognormal(cls, mu, sigma):
        return cls("lognormal", float(mu), float(sigma))

    @property
    def support(self) -> tuple:
        if self.kind == "uniform":
            return (self.p1, self.p2)
        if self.kind == "lognormal":
            return (0.0, math.inf)
        return (-math.inf, math.inf)

    @property
    def mean(self) -> float:
        if self.kind == "uniform":
            return 0.5 * (self.p1 + self.p2)
        if self.kind == "normal":
            return self.p1
        return math.exp(self.p1 + 0.5 * self.p2 ** 2)

    @property
    def std(self) -> float:
        if self.kind == "uniform":
            return (self.p2 - self.p1) / math.sqrt(12.0)
        if self.kind == "normal":
            return self.p2
        return self.mean * math.sqrt(math.expm1(self.p2 ** 2))

    def logpdf(self, v: float) -> float:
        lo, hi = self.support
        if not lo <= v <= hi:
            return -math.inf
        if self.kind == "uniform":
            return -math.log(self.p2 - self.p1)
        if self.kind == "normal":
            return float(norm.logpdf(v, loc=self.p1, scale=self.p2))
        return float(lognorm.logpdf(v, s=self.p2, scale=math.exp(self.p1)))

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "uniform":
            return self.p1 + u * (self.p2 - self.p1)
        if self.kind == "normal":
            return norm.ppf(u, loc=self.p1, scale=self.p2)
        return lognorm.ppf(u, s=self.p2, scale=math.exp(self.p1))

    def to_dict(self) -> dict:
        return {"dist": self.kind, "p1": self.p1, "p2": self.p2}

    @classmethod
    def from_dict(cls, d) -> "Prior1D":
        kind = d.get("dist", d.get("kind"))
        if kind == "uniform":
            return cls.uniform(d.get("lower", d.get("p1")), d.get("upper", d.get("p2")))
        if kind == "normal":
            return cls.normal(d.get("mean", d.get("p1")), d.get("sd", d.get("p2")))
        if kind == "lognormal":
            return cls.lognormal(d.get("log_mean", d.get("p1")),
                                 d.get("log_sd", d.get("p2")))
        raise ConfigError(f"unknown prior dist {kind!r}")


class PriorSpec:
    """Independent marginal priors for each calibration component, plus the
    nominal point theta0 used as the current best parameter knowledge."""

    def __init__(self, components: Sequence[Prior1D], nominal=None):
        self.components = tuple(components)
        if not self.components:
            raise ConfigError("PriorSpec needs at least one component")
        if nominal is None:
            nominal = [c.mean for c in self.components]
        self.nominal = np.asarray(nominal, dtype=float)
        if self.nominal.size != len(self.components):
            raise ConfigError(
                f"nominal has {self.nominal.size} entries for "
                f"{len(self.components)} prior components")
        if not self.contains(self.nominal):
            raise ConfigError("nominal point lies outside the prior support")
        self.nominal.setflags(write=False)

    @property
    def dim(self) -> int:
        return len(self.components)

    @property
    def means(self) -> np.ndarray:
        return np.array([c.mean for c in self.components])

    @property
    def stds(self) -> np.ndarray:
        return np.array([c.std for c in self.components])

    def contains(self, theta) -> bool:
        theta = np.asarray(theta, dtype=float).reshape(-1)
        for v, c in zip(theta, self.components):
            lo, hi = c.support
            if not lo <= v <= hi:
                return False
        return True

    def log_prior(self, theta) -> float:
        theta = np.asarray(theta, dtype=float).reshape(-1)
        total = 0.0
        for v, c in zip(theta, self.components):
            lp = c.logpdf(v)
            if not math.isfinite(lp):
                return -math.inf
            total += lp
        return total

    def ppf(self, u: np.ndarray) -> np.ndarray:
        """Map unit-cube coordinates (q, dim) through the marginal inverse CDFs."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        out = np.empty_like(u)
        for k, c in enumerate(self.components):
            out[:, k] = c.ppf(u[:, k])
        return out

    def to_dict(self) -> dict:
        return {"components": [c.to_dict() for c in self.components],
                "nominal": self.nominal.tolist()}

    @classmethod
    def from_dict(cls, d) -> "PriorSpec":
        return cls([Prior1D.from_dict(c) for c in d["components"]],
                   d.get("nominal"))
