"""Figure rendering for benchmark reports.

Renders the space-metrics time series, the per-class step histograms, and
per-class throughput to PNG files next to the delimited output.  Imported
lazily by the CLI so library users without a display stack pay nothing.
"""

import os


def render_report(report: dict, outdir: str) -> list[str]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    os.makedirs(outdir, exist_ok=True)
    written = []

    samples = report.get("samples", [])
    fig, ax = plt.subplots(figsize=(8, 4.5))
    if samples:
        xs = [row["ops_done"] for row in samples]
        for key, style in (("lr_reachable", "-o"), ("V", "-s"),
                           ("outstanding_deprecated", "-^")):
            ax.plot(xs, [row[key] for row in samples], style,
                    markersize=3, label=key)
    ax.set_xlabel("operations completed")
    ax.set_ylabel("objects")
    ax.set_title("space metrics over the run")
    ax.legend(loc="best", fontsize=8)
    path = os.path.join(outdir, "space_timeseries.png")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    hist = report.get("steps_hist", {})
    fig, axes = plt.subplots(1, max(len(hist), 1), figsize=(10, 3.2),
                             squeeze=False)
    for ax, (cls, buckets) in zip(axes[0], sorted(hist.items())):
        steps = sorted(int(k) for k in buckets)
        ax.bar(steps, [buckets[str(s)] for s in steps], width=1.0)
        ax.set_title(f"{cls}: steps per op")
        ax.set_xlabel("shared-memory steps")
        ax.set_yscale("log")
    path = os.path.join(outdir, "steps_histogram.png")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    throughput = report.get("timing", {}).get("throughput_ops_per_s", {})
    fig, ax = plt.subplots(figsize=(5, 3.2))
    if throughput:
        names = sorted(throughput)
        ax.bar(names, [throughput[n] for n in names])
    ax.set_ylabel("ops/s")
    ax.set_title("throughput by class")
    path = os.path.join(outdir, "throughput.png")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    return written
