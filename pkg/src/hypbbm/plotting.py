"""Matplotlib figures for experiment reports (rendered to PNG files)."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _col(table, name):
    i = table.header.index(name)
    return np.array([row[i] for row in table.rows], dtype=float)


def _population_law(ax, rec):
    tab = rec.tables["population"]
    x = np.arange(len(tab.rows))
    ax.bar(x, _col(tab, "observed"), color="0.7", label="observed")
    ax.plot(x, _col(tab, "expected"), "ko-", label="geometric law")
    ax.set_xticks(x, [row[0] for row in tab.rows])
    ax.set_xlabel("N(t)")
    ax.set_ylabel("replicas")


def _single_bm(ax, rec):
    tab = rec.tables["single_bm"]
    ax.hist(_col(tab, "dist"), bins=40, color="0.6", label="rho(B_t, B_0)")
    pm = _col(tab, "path_max")
    if np.isfinite(pm).all():
        ax.hist(pm, bins=40, histtype="step", color="k", label="path max")
    ax.set_xlabel("distance")


def _many_to_one(ax, rec):
    tab = rec.tables["many_to_one"]
    row = dict(zip(tab.header, tab.rows[0]))
    ax.errorbar([0, 1], [row["lhs"], row["rhs"]], yerr=[row["lhs_se"], row["rhs_se"]], fmt="o", capsize=4)
    ax.set_xticks([0, 1], ["population sum", "exp(lambda t) x single path"])
    ax.set_xlim(-0.5, 1.5)


def _rates(ax, rec):
    tab = rec.tables["rates"]
    t = _col(tab, "t")
    ax.plot(t, _col(tab, "max_over_t"), "o-", label="Max_t / t")
    ax.plot(t, _col(tab, "min") / t, "s-", label="Min_t / t")
    ax.axhline(_col(tab, "reference")[0], color="k", ls="--", label="r*")
    ax.set_xlabel("t")


def _log_correction(ax, rec):
    tab = rec.tables["log_correction"]
    t = _col(tab, "t")
    ax.plot(t, _col(tab, "max_correction"), "o-", label="max")
    ax.plot(t, _col(tab, "min_correction"), "s-", label="min")
    ax.axhline(_col(tab, "max_reference")[0], color="C0", ls="--")
    ax.axhline(_col(tab, "min_reference")[0], color="C1", ls="--")
    ax.set_xlabel("t")


def _clt(ax, rec):
    tab = rec.tables["clt"]
    ax.hist(_col(tab, "ks_distance"), bins=20, alpha=0.6, label="distance")
    ax.hist(_col(tab, "ks_vertical"), bins=20, alpha=0.6, label="vertical")
    ax.set_xlabel("KS distance to N(0, 1)")


def _escape(ax, rec):
    tab = rec.tables["escape"]
    t = _col(tab, "t")
    ax.plot(t, _col(tab, "mean_distance"), "o-", label="mean distance")
    ax.plot(t, t / 2, "k--", label="t/2")
    ax.set_xlabel("t")


def _boundary(ax, rec):
    tab = rec.tables["boundary"]
    lo, hi = _col(tab, "arc_lo"), _col(tab, "arc_hi")
    ax.bar(lo, _col(tab, "lambda_mean"), width=hi - lo, align="edge", color="0.7",
           yerr=_col(tab, "lambda_se"), label="replica mean of Lambda arcs")
    ax.step(np.append(lo, hi[-1]), np.append(_col(tab, "poisson"), _col(tab, "poisson")[-1]), "k",
            where="post", label="harmonic measure")
    ax.set_xlabel("angle")


def _dimension(ax, rec):
    tab = rec.tables["dimension"]
    if tab.rows:
        ax.loglog(1.0 / _col(tab, "scale"), _col(tab, "count"), "o-")
    ax.set_xlabel("1 / arc width")
    ax.set_ylabel("occupied arcs")


def _regime(ax, rec):
    tab = rec.tables["regime"]
    ax.plot(_col(tab, "t"), _col(tab, "occupation_fraction"), "o-")
    ax.set_ylim(0, 1)
    ax.set_xlabel("t")
    ax.set_ylabel("fraction of replicas in the ball")


_PANELS = {
    "population_law": _population_law,
    "single_bm": _single_bm,
    "many_to_one": _many_to_one,
    "rates": _rates,
    "log_correction": _log_correction,
    "clt": _clt,
    "escape": _escape,
    "boundary": _boundary,
    "dimension": _dimension,
    "regime_probe": _regime,
}


def render(record, out_dir: str) -> str:
    """Draw the kind's figure into ``out_dir/<kind>.png`` and return the path."""
    kind = record.spec.kind
    fig, ax = plt.subplots(figsize=(7, 4.5))
    _PANELS[kind](ax, record)
    if ax.get_legend_handles_labels()[0]:
        ax.legend()
    ax.set_title(f"{kind}, lambda={record.spec.lam:g}, t={record.spec.horizon:g}")
    fig.tight_layout()
    path = os.path.join(out_dir, f"{kind}.png")
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return path
