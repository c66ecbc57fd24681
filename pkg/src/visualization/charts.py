"""
Chart Generation for In-Context Regression Experiments.

Creates SVG figures for error curves, singular-value spectra, signature
alignments and the signature/error scatter using Matplotlib and Seaborn.
"""

from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns

from src.analysis.spectra import SpectrumStats
from src.analysis.statistics import CorrelationResult


# Set style
sns.set_theme(style="whitegrid", palette="husl")
plt.rcParams['figure.figsize'] = (10, 6)
plt.rcParams['font.size'] = 11
plt.rcParams['svg.hashsalt'] = "icl-spectra"


class ChartGenerator:
    """
    Generator for experiment figures.

    Every ``plot_*`` method takes a tidy DataFrame (or report objects),
    writes one SVG into ``output_dir`` and returns its path.

    Example:
        >>> charts = ChartGenerator(Path("output/input_restriction"))
        >>> charts.plot_mse_curves(curves, "mse_curves.svg", "Input restriction")
    """

    # Colors for distributions / sources
    COLORS = {
        'training_subspace': '#2ecc71',   # Green - in distribution
        'input_subspace': '#2ecc71',
        'weight_subspace': '#2ecc71',
        'orthogonal': '#e74c3c',          # Red - shifted
        'input_orthogonal': '#e74c3c',
        'weight_orthogonal': '#e74c3c',
        'full': '#3498db',                # Blue
        'custom': '#9b59b6',
    }

    LINESTYLES = ['-', '--', ':', '-.']

    def __init__(self, output_dir: Optional[Path] = None):
        """
        Initialize chart generator.

        Args:
            output_dir: Directory to save charts
        """
        self.output_dir = Path(output_dir or 'output/charts')
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def get_color(self, name: str) -> str:
        """Get color for a distribution or source tag."""
        return self.COLORS.get(name, '#7f8c8d')

    def _save(self, fig: plt.Figure, filename: str) -> Path:
        path = self.output_dir / filename
        fig.tight_layout()
        fig.savefig(path, format='svg', metadata={'Date': None})
        plt.close(fig)
        return path

    def plot_mse_curves(
        self,
        curves: pd.DataFrame,
        filename: str = 'mse_curves.svg',
        title: str = 'Prediction error by context size',
        column: str = 'mse',
    ) -> Path:
        """
        Per-position error, one panel per distribution, one line per model.

        Args:
            curves: Columns model_id, distribution, position and ``column``
            filename: Output filename
            title: Figure title
            column: Error column to plot

        Returns:
            Path of the SVG
        """
        distributions = list(dict.fromkeys(curves['distribution']))
        fig, axes = plt.subplots(1, len(distributions), figsize=(6 * len(distributions), 5), squeeze=False)

        for ax, dist in zip(axes[0], distributions):
            subset = curves[curves['distribution'] == dist]
            for model_id, group in subset.groupby('model_id', sort=False):
                ax.plot(group['position'] - 1, group[column], label=model_id)
            ax.set_yscale('log')
            ax.set_xlabel('In-context examples', fontsize=12)
            ax.set_ylabel('Mean squared error', fontsize=12)
            ax.set_title(dist, fontsize=12)
            ax.legend(fontsize=9)

        fig.suptitle(title, fontsize=14, fontweight='bold')
        return self._save(fig, filename)

    def plot_spectrum(
        self,
        spectra: Sequence[SpectrumStats],
        filename: str = 'spectrum.svg',
        title: str = 'Singular-value spectra of representations',
        count: int = 10,
    ) -> Path:
        """
        Mean singular value per index with a ±1 std band, one line per source.
        """
        fig, ax = plt.subplots(figsize=(8, 5))

        for stats in spectra:
            n = min(count, len(stats.mean))
            index = np.arange(1, n + 1)
            color = self.get_color(stats.source.value)
            ax.plot(index, stats.mean[:n], marker='o', color=color, label=stats.source.value)
            ax.fill_between(
                index,
                stats.mean[:n] - stats.std[:n],
                stats.mean[:n] + stats.std[:n],
                color=color, alpha=0.2
            )

        ax.set_xlabel('Singular value index', fontsize=12)
        ax.set_ylabel('Singular value', fontsize=12)
        ax.set_title(title, fontsize=14, fontweight='bold')
        ax.legend()
        return self._save(fig, filename)

    def plot_signature_means(
        self,
        means: pd.DataFrame,
        filename: str = 'signature_means.svg',
        title: str = 'Alignment with canonical singular vectors',
    ) -> Path:
        """
        Mean ± std alignment per index.

        Args:
            means: Columns source, index, mean, std
        """
        fig, ax = plt.subplots(figsize=(8, 5))

        for source, group in means.groupby('source', sort=False):
            ax.errorbar(
                group['index'], group['mean'], yerr=group['std'],
                marker='o', capsize=3, color=self.get_color(source), label=source
            )

        ax.set_ylim(0, 1.05)
        ax.set_xlabel('Singular vector index', fontsize=12)
        ax.set_ylabel('|cosine| with canonical vector', fontsize=12)
        ax.set_title(title, fontsize=14, fontweight='bold')
        ax.legend()
        return self._save(fig, filename)

    def plot_sweep(
        self,
        sweep: pd.DataFrame,
        x: str,
        filename: str,
        title: str,
        xlabel: str,
        log_x: bool = False,
    ) -> Path:
        """
        Final-position error against a swept parameter, one line per model.

        Args:
            sweep: Columns model_id, ``x`` and mse
            x: Swept column (e.g. blend coefficient t or input scale s)
        """
        fig, ax = plt.subplots(figsize=(8, 5))

        for i, (model_id, group) in enumerate(sweep.groupby('model_id', sort=False)):
            ax.plot(
                group[x], group['mse'], marker='o',
                linestyle=self.LINESTYLES[i % len(self.LINESTYLES)], label=model_id
            )

        ax.set_yscale('log')
        if log_x:
            ax.set_xscale('log')
        ax.set_xlabel(xlabel, fontsize=12)
        ax.set_ylabel('Final-position MSE', fontsize=12)
        ax.set_title(title, fontsize=14, fontweight='bold')
        ax.legend(fontsize=9)
        return self._save(fig, filename)

    def plot_correlation(
        self,
        pairs: pd.DataFrame,
        result: CorrelationResult,
        filename: str = 'correlation.svg',
        title: str = 'Signature strength vs prediction error',
    ) -> Path:
        """
        Scatter of head_norm against mean_mse with the least-squares line.
        """
        fig, ax = plt.subplots(figsize=(8, 6))

        for source, group in pairs.groupby('source', sort=False):
            ax.scatter(
                group['head_norm'], group['mean_mse'],
                c=self.get_color(source), alpha=0.7,
                edgecolors='white', linewidth=1, label=source
            )

        x_line = np.linspace(pairs['head_norm'].min(), pairs['head_norm'].max(), 100)
        ax.plot(
            x_line, result.intercept + result.slope * x_line, '--', color='gray',
            label=f'r = {result.r:.3f}, p = {result.p_value:.2g}'
        )

        ax.set_xlabel('||C_p,:2||²', fontsize=12)
        ax.set_ylabel('Mean squared error', fontsize=12)
        ax.set_title(title, fontsize=14, fontweight='bold')
        ax.legend(loc='upper right')
        return self._save(fig, filename)
