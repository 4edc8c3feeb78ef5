"""Pearson correlation between features and the churn label."""

from __future__ import annotations

from typing import Mapping, Optional, Sequence

import numpy as np


class UndefinedCorrelationError(ValueError):
    pass


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pearson needs two 1-D columns of equal length")
    if len(x) < 2:
        raise UndefinedCorrelationError("need at least two observations")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = dx @ dx
    syy = dy @ dy
    if sxx == 0 or syy == 0:
        raise UndefinedCorrelationError("zero variance")
    r = (dx @ dy) / np.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


def correlation_report(columns: Mapping[str, Sequence[float]], target) -> list[tuple[str, Optional[float]]]:
    """Pearson r of each column against ``target``, sorted by |r| descending.

    Columns where r is undefined (constant) are kept, with ``None``, at the end.
    """
    defined, undefined = [], []
    for name, column in columns.items():
        try:
            defined.append((name, pearson(column, target)))
        except UndefinedCorrelationError:
            undefined.append((name, None))
    defined.sort(key=lambda item: (-abs(item[1]), item[0]))
    undefined.sort()
    return defined + undefined
