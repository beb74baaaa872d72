"""Generate each synthetic anomaly benchmark and plot the injected dimension.

Run from the repository root:

    python3 demos/01_generate_and_plot.py

Writes one SVG per anomaly type into demos/output/.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from tsadiff import synthgen

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)


def main():
    for anomaly_type in synthgen.ANOMALY_TYPES + ("multi",):
        cfg = synthgen.SynthConfig(anomaly_type, length=5000, seed=0)
        splits, metadata = synthgen.generate_dataset(cfg)
        test = splits["test"]
        # the last dimension carries the injected anomalies for single-type
        # sets; for the multi set every dimension but the last is anomalous
        dim = 0 if anomaly_type == "multi" else test.dims - 1

        fig, ax = plt.subplots(figsize=(10, 3))
        ax.plot(test.values[dim], lw=0.6, label=f"dimension {dim}")
        for lo, hi in _label_spans(test.labels):
            ax.axvspan(lo, hi, color="tab:red", alpha=0.25, lw=0)
        ax.set_title(f"{anomaly_type} anomalies, test split "
                     f"(ratio {test.labels.mean():.1%})")
        ax.set_xlabel("t")
        ax.legend(loc="upper right")
        fig.tight_layout()
        path = OUT / f"{anomaly_type}.svg"
        fig.savefig(path)
        plt.close(fig)
        print(f"wrote {path}")


def _label_spans(labels):
    spans, start = [], None
    for t, flag in enumerate(labels):
        if flag and start is None:
            start = t
        elif not flag and start is not None:
            spans.append((start, t))
            start = None
    if start is not None:
        spans.append((start, len(labels)))
    return spans


if __name__ == "__main__":
    main()
