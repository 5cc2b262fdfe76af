"""Figures written next to the diagnostic CSVs."""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 10,
    "axes.labelsize": 10,
    "axes.titlesize": 11,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
}


def _figure(width=5.0, height=None):
    if height is None:
        height = width * (np.sqrt(5) - 1.0) / 2.0
    return plt.subplots(figsize=(width, height))


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def _by_iteration(rows, col):
    out = {}
    for row in rows:
        out.setdefault(int(row["iteration"]), []).append(row)
    return out


def entropy_vs_error(rows, path):
    """Error rate of the lowest-entropy fraction, one line per iteration."""
    with plt.rc_context(STYLE):
        fig, ax = _figure()
        groups = _by_iteration(rows, "iteration")
        cmap = plt.get_cmap("viridis", max(len(groups), 1))
        for k, (it, grp) in enumerate(sorted(groups.items())):
            ax.plot([float(r["selection_ratio"]) for r in grp], [float(r["error_rate"]) for r in grp],
                    marker="o", ms=3, color=cmap(k), label=f"iter {it}")
        ax.set_xlabel("selection ratio (lowest entropy first)")
        ax.set_ylabel("pseudo-label error rate")
        if groups:
            ax.legend(ncol=2, frameon=False)
        return _save(fig, path)


def expansion_loss(rows, path):
    with plt.rc_context(STYLE):
        fig, ax = _figure()
        its = np.array([int(r["iteration"]) for r in rows])
        before = np.array([float(r["loss_before"]) for r in rows])
        after = np.array([float(r["loss_after"]) for r in rows])
        ax.bar(its - 0.2, before, width=0.4, label="before adversarial pass")
        ax.bar(its + 0.2, after, width=0.4, label="after adversarial pass")
        ax.set_yscale("log")
        ax.set_xlabel("self-training iteration")
        ax.set_ylabel("mean loss on expansion set")
        ax.legend(frameon=False)
        return _save(fig, path)


def weight_distribution(rows, path):
    """Horizontal histograms of sigma(w) per confidence bucket, correct vs wrong."""
    buckets = sorted({r["confidence_bucket"] for r in rows})
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(len(buckets) or 1, 1, figsize=(4.5, 1.4 * max(len(buckets), 1)),
                                 sharex=True, squeeze=False)
        for ax, b in zip(axes[:, 0], buckets):
            for correct, color, ls in (("1", "tab:orange", "-"), ("0", "tab:blue", "--")):
                sel = [r for r in rows if r["confidence_bucket"] == b and r["correct"] == correct]
                if not sel:
                    continue
                centers = [(float(r["bin_lo"]) + float(r["bin_hi"])) / 2 for r in sel]
                ax.plot(centers, [float(r["density"]) for r in sel], color=color, ls=ls,
                        label="correct" if correct == "1" else "wrong")
            ax.set_ylabel(b, rotation=0, ha="right", va="center")
        axes[-1, 0].set_xlabel("activated weight sigma(w)")
        if buckets:
            axes[0, 0].legend(frameon=False)
        return _save(fig, path)


def bound_trace(rows, path):
    with plt.rc_context(STYLE):
        fig, ax = _figure()
        its = [int(r["iteration"]) for r in rows]
        for col, label in (("bound", "bound"), ("actual_target_error", "target error"),
                           ("eps_val", "error on D_M"), ("hdh_term", "H-delta-H term")):
            ax.plot(its, [float(r[col]) for r in rows], marker="o", ms=3, label=label)
        ax.set_xlabel("self-training iteration")
        ax.set_ylabel("value")
        ax.legend(frameon=False)
        return _save(fig, path)


def exposure(rows, path):
    """Macro-F1 against exposed fraction, one line per seed."""
    with plt.rc_context(STYLE):
        fig, ax = _figure()
        seeds = sorted({int(r[2]) for r in rows})
        for s in seeds:
            sel = sorted((r for r in rows if int(r[2]) == s), key=lambda r: r[0])
            ax.plot([r[0] for r in sel], [r[1] for r in sel], marker="o", ms=3, label=f"seed {s}")
        ax.set_xlabel("fraction of unlabeled target data exposed")
        ax.set_ylabel("target macro-F1")
        ax.legend(frameon=False)
        return _save(fig, path)
