"""Turning per-window feature series into normalized observation rows.

Each of the 14 transport features yields 7 statistics per decision window:
last value, mean, population standard deviation, min, max, EMA, and the
difference of the last value from the previous window's last value.  Rows
are normalized per dimension with exponentially weighted running moments.
"""

from __future__ import annotations

import numpy as np

from .transport import FEATURES

STATS_PER_FEATURE = 7
OBS_COLUMNS = len(FEATURES) * STATS_PER_FEATURE  # 98


def window_ema(series, alpha: float) -> float:
    """EMA of a window, seeded at the newest sample and folded toward older ones."""
    ema = series[-1]
    for x in series[-2::-1]:
        ema = alpha * x + (1.0 - alpha) * ema
    return ema


def feature_stats(series, prev_last: float, ema_alpha: float = 0.3) -> np.ndarray:
    """[last, mean, std, min, max, ema, last - prev_last] for one window.

    An empty series (idle window) carries prev_last forward as
    last/mean/min/max/ema with zero std and zero difference.
    """
    if len(series) == 0:
        return np.array(
            [prev_last, prev_last, 0.0, prev_last, prev_last, prev_last, 0.0]
        )
    arr = np.asarray(series, dtype=np.float64)
    last = float(arr[-1])
    return np.array([
        last,
        float(arr.mean()),
        float(arr.std()),
        float(arr.min()),
        float(arr.max()),
        float(window_ema(arr, ema_alpha)),
        last - prev_last,
    ])


class WindowFeaturizer:
    """Maps StatSnapshots to raw 98-column rows, tracking previous last values."""

    def __init__(self, ema_alpha: float = 0.3):
        self.ema_alpha = ema_alpha
        self.prev_last = {name: 0.0 for name in FEATURES}

    def reset(self):
        self.prev_last = {name: 0.0 for name in FEATURES}

    def row(self, snapshot) -> np.ndarray:
        out = np.empty(OBS_COLUMNS, dtype=np.float64)
        for i, name in enumerate(FEATURES):
            series = snapshot.series[name]
            stats = feature_stats(series, self.prev_last[name], self.ema_alpha)
            out[i * STATS_PER_FEATURE:(i + 1) * STATS_PER_FEATURE] = stats
            if len(series) > 0:
                self.prev_last[name] = float(series[-1])
        return out


class MovingNormalizer:
    """Per-dimension exponentially weighted mean/variance normalizer.

    Moments are debiased by the number of updates seen so early rows do not
    blow up; an epsilon in the denominator keeps every output finite.  The
    normalizer can be frozen for evaluation.
    """

    def __init__(self, dim: int, decay: float = 0.999, eps: float = 1e-8):
        self.dim = dim
        self.decay = decay
        self.eps = eps
        self.count = 0
        self._m1 = np.zeros(dim, dtype=np.float64)
        self._m2 = np.zeros(dim, dtype=np.float64)
        self.frozen = False

    def update(self, x: np.ndarray):
        if self.frozen:
            return
        x = np.asarray(x, dtype=np.float64)
        self.count += 1
        self._m1 = self.decay * self._m1 + (1.0 - self.decay) * x
        self._m2 = self.decay * self._m2 + (1.0 - self.decay) * x * x

    def mean_var(self) -> tuple[np.ndarray, np.ndarray]:
        if self.count == 0:
            return np.zeros(self.dim), np.ones(self.dim)
        debias = 1.0 - self.decay ** self.count
        mean = self._m1 / debias
        var = np.maximum(self._m2 / debias - mean * mean, 0.0)
        return mean, var

    def normalize(self, x: np.ndarray) -> np.ndarray:
        mean, var = self.mean_var()
        out = (np.asarray(x, dtype=np.float64) - mean) / np.sqrt(var + self.eps)
        return np.nan_to_num(out, nan=0.0, posinf=0.0, neginf=0.0)

    def freeze(self):
        self.frozen = True

    def state(self) -> dict:
        return {
            "dim": self.dim,
            "decay": self.decay,
            "eps": self.eps,
            "count": self.count,
            "m1": self._m1.copy(),
            "m2": self._m2.copy(),
        }

    @classmethod
    def from_state(cls, state: dict) -> "MovingNormalizer":
        norm = cls(int(state["dim"]), float(state["decay"]), float(state["eps"]))
        norm.count = int(state["count"])
        norm._m1 = np.asarray(state["m1"], dtype=np.float64).copy()
        norm._m2 = np.asarray(state["m2"], dtype=np.float64).copy()
        return norm
