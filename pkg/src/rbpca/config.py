"""Run configuration shared by the experiment runner and the command line."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ParameterError

METHODS = ("static", "dynamic", "2d", "moving-window", "kpca-baseline", "rpca-fourier")
DEFAULT_LAG = {"dynamic": 2, "2d": 10}
WIDTH_RULES = ("scaled-dimension", "median-heuristic")


@dataclass
class RunConfig:
    """Everything needed to fit a monitor and run it on a stream.

    ``c`` is a positive number or one of ``"scaled-dimension"`` and
    ``"median-heuristic"``. ``l`` defaults per method (2 for dynamic, 10 for
    2d). Data comes from ``train_csv``/``test_csv`` when given, otherwise from
    the numerical-example generator.
    """

    method: str = "static"
    m: int = 150
    p: float = 0.05
    c: object = "scaled-dimension"
    alpha: float = 0.99
    l: int | None = None
    w: int = 500
    delta_level: float = 0.8
    screening: str = "successive"
    seed: int = 0
    n_components: int | None = None
    n_train: int = 1000
    n_test: int = 500
    fault: str | None = "fault1"
    fault_start: int = 201
    train_csv: str | None = None
    test_csv: str | None = None
    label_column: str | None = None
    kpca_cap: int = 3000
    output_dir: str | None = None

    @property
    def lag(self):
        if self.method in DEFAULT_LAG:
            return DEFAULT_LAG[self.method] if self.l is None else self.l
        return 0

    def validate(self):
        """Raise :class:`ParameterError` naming the first offending field."""
        def bad(name, why):
            raise ParameterError(f"invalid {name}={getattr(self, name)!r}: {why}")

        if self.method not in METHODS:
            bad("method", f"expected one of {', '.join(METHODS)}")
        for name in ("m", "w", "n_train", "n_test", "fault_start", "kpca_cap"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
                bad(name, "must be a positive integer")
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)) \
                or self.seed < 0:
            bad("seed", "must be a non-negative integer")
        if not _is_real(self.p) or not 0.0 < self.p < 1.0:
            bad("p", "must lie in (0, 1)")
        if not _is_real(self.alpha) or not 0.0 < self.alpha < 1.0:
            bad("alpha", "must lie in (0, 1)")
        if not _is_real(self.delta_level) or not 0.0 < self.delta_level < 1.0:
            bad("delta_level", "must lie in (0, 1)")
        if isinstance(self.c, str):
            if self.c not in WIDTH_RULES:
                bad("c", f"expected a positive number or one of {', '.join(WIDTH_RULES)}")
        elif not _is_real(self.c) or not self.c > 0:
            bad("c", "must be positive")
        if self.l is not None and (isinstance(self.l, bool) or not isinstance(self.l, int)
                                   or self.l < 0):
            bad("l", "must be a non-negative integer")
        if self.n_components is not None and (not isinstance(self.n_components, int)
                                              or self.n_components < 1):
            bad("n_components", "must be a positive integer")
        if self.screening not in ("successive", "greedy"):
            bad("screening", "expected successive or greedy")
        if self.fault not in (None, "fault1", "fault2"):
            bad("fault", "expected fault1, fault2 or null")
        if self.method == "moving-window" and self.train_csv is None and self.w > self.n_train:
            bad("w", f"window larger than n_train={self.n_train}")
        return self

    def replace(self, **changes):
        return dataclasses.replace(self, **changes).validate()

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ParameterError(f"unknown config field(s): {', '.join(unknown)}")
        return cls(**data).validate()

    @classmethod
    def from_json(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ParameterError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ParameterError(f"config {path} must hold a JSON object")
        return cls.from_dict(data)


def _is_real(v):
    return isinstance(v, (int, float, np.floating)) and not isinstance(v, bool) \
        and math.isfinite(v)


def derive_seed(seed, role):
    """Independent integer seed for one role (0 train, 1 test, 2 map) of a replicate."""
    return int(np.random.SeedSequence([int(seed), int(role)]).generate_state(1, np.uint32)[0])


TRAIN, TEST, MAP = 0, 1, 2
