"""Annotated matplotlib figures written next to the raw outputs."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import ListedColormap  # noqa: E402

from .render import ESCAPED_RGB, load_colormap  # noqa: E402

AXIS_LABELS = {"delta": r"$\delta$", "omega": r"$\omega$", "m1": r"$m_{1,0}$", "m2": r"$m_{2,0}$", "m": r"$m_0$",
               "theta1": r"$\theta_{1,0}$", "theta2": r"$\theta_{2,0}$"}


def _cmap(name):
    return ListedColormap(load_colormap(name) / 255.0, name=name)


def _extent(domain):
    a0, a1 = domain.axes
    return (a0.lo, a0.hi, a1.lo, a1.hi)


def _axis_label(domain, k, names):
    c = domain.axes[k].coordinate
    name = names[c] if names and c < len(names) else f"x{c}"
    return AXIS_LABELS.get(name, name)


def plot_field(field, path, colormap="viridis", coordinate_names=None, title=None):
    """Color plot of a time-average field with escaped cells in dark green."""
    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    img = ax.imshow(field.values.T, origin="lower", extent=_extent(field.domain), aspect="auto",
                    cmap=_cmap(colormap), interpolation="nearest")
    mask = np.where(field.escaped.T, 1.0, np.nan)
    ax.imshow(mask, origin="lower", extent=_extent(field.domain), aspect="auto", interpolation="nearest",
              cmap=ListedColormap([np.array(ESCAPED_RGB) / 255.0]))
    fig.colorbar(img, ax=ax, label=f"time average of {field.observable_id}")
    ax.set_xlabel(_axis_label(field.domain, 0, coordinate_names))
    ax.set_ylabel(_axis_label(field.domain, 1, coordinate_names))
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_phase_summary(comparison, labels, path):
    """Bounded and escaped fractions per initial phase."""
    x = np.arange(len(labels))
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.bar(x - 0.2, comparison.bounded_fraction, width=0.4, label="bounded-slice cells")
    ax.bar(x + 0.2, comparison.escaped_fraction, width=0.4, label="escaped cells",
           color=np.array(ESCAPED_RGB) / 255.0)
    ax.set_xticks(x)
    ax.set_xticklabels([str(v) for v in labels])
    ax.set_xlabel("k")
    ax.set_ylabel("fraction of grid")
    ax.set_ylim(0, 1)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
