"""
Statistical Analysis Utilities.

Summary statistics for per-prompt report rows, and the Pearson correlation
plus least-squares line used to relate signature strength to prediction
error.
"""

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from src.errors import UndefinedCorrelationError

MIN_CORRELATION_PAIRS = 3


@dataclass
class StatisticalSummary:
    """Summary statistics for a dataset."""
    count: int
    mean: float
    median: float
    std: float
    min_val: float
    max_val: float
    q1: float  # 25th percentile
    q3: float  # 75th percentile
    iqr: float  # Interquartile range

    def to_dict(self) -> dict:
        return asdict(self)

    def __str__(self) -> str:
        return (
            f"n={self.count}, mean={self.mean:.4g}, median={self.median:.4g}, "
            f"std={self.std:.4g}, range=[{self.min_val:.4g}, {self.max_val:.4g}]"
        )


def summarize(values: Sequence[float]) -> StatisticalSummary:
    """
    Summary statistics for a list of values.

    The standard deviation uses population normalization so that a batch
    of one reports 0.
    """
    arr = np.asarray(values, dtype=np.float64)

    if arr.size == 0:
        return StatisticalSummary(
            count=0, mean=0.0, median=0.0, std=0.0,
            min_val=0.0, max_val=0.0, q1=0.0, q3=0.0, iqr=0.0
        )

    q1, q3 = np.percentile(arr, [25, 75])

    return StatisticalSummary(
        count=int(arr.size),
        mean=float(np.mean(arr)),
        median=float(np.median(arr)),
        std=float(np.std(arr)),
        min_val=float(np.min(arr)),
        max_val=float(np.max(arr)),
        q1=float(q1),
        q3=float(q3),
        iqr=float(q3 - q1),
    )


@dataclass
class CorrelationResult:
    """
    Pearson correlation with its line of best fit.

    Attributes:
        r: Pearson correlation coefficient
        p_value: Two-sided p-value for r
        n: Number of pairs
        slope: Least-squares slope of y on x
        intercept: Least-squares intercept
        std_error: Standard error of the slope
    """
    r: float
    p_value: float
    n: int
    slope: float
    intercept: float
    std_error: float

    @property
    def r_squared(self) -> float:
        return self.r ** 2

    @property
    def interpretation(self) -> str:
        if abs(self.r) < 0.3:
            strength = "weak"
        elif abs(self.r) < 0.7:
            strength = "moderate"
        else:
            strength = "strong"
        direction = "positive" if self.r > 0 else "negative"
        return (
            f"{strength.capitalize()} {direction} correlation (r={self.r:.3f}, "
            f"p={self.p_value:.3g}, n={self.n})"
        )

    def to_dict(self) -> dict:
        return {**asdict(self), "r_squared": self.r_squared}


def correlation(x: Sequence[float], y: Sequence[float]) -> CorrelationResult:
    """
    Pearson correlation and simple linear regression of y on x.

    Raises:
        UndefinedCorrelationError: Fewer than 3 pairs, or either side is
            constant
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"x and y must have the same length, got {x.shape} and {y.shape}")
    if x.size < MIN_CORRELATION_PAIRS:
        raise UndefinedCorrelationError(
            f"Need at least {MIN_CORRELATION_PAIRS} pairs for a correlation, got {x.size}"
        )
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise UndefinedCorrelationError("Correlation is undefined when either variable is constant")

    r, p_value = stats.pearsonr(x, y)
    fit = stats.linregress(x, y)
    return CorrelationResult(
        r=float(r),
        p_value=float(p_value),
        n=int(x.size),
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        std_error=float(fit.stderr),
    )
