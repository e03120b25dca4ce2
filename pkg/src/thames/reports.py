"""Report emission: comparison tables, sampling stats, and plots.

Plot data is emitted as CSV first; the rendered PNG is a convenience.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

from thames.evaluation import ComparisonTable
from thames.ioutil import atomic_write_json, atomic_write_text
from thames.knowledge_base import KnowledgeBase, sampling_report


def write_comparison(table: ComparisonTable, out_dir: str | Path) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    markdown_path = out_dir / "comparison.md"
    csv_path = out_dir / "comparison.csv"
    atomic_write_text(markdown_path, table.to_markdown())
    atomic_write_text(csv_path, table.to_csv())
    return {"markdown": markdown_path, "csv": csv_path}


def sampling_counts_csv(kb: KnowledgeBase) -> str:
    report = sampling_report(kb)
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(["node_id", "retrieval_count"])
    for node_id, count in report["per_node"].items():
        writer.writerow([node_id, count])
    return buffer.getvalue()


def write_sampling_report(kb: KnowledgeBase, out_dir: str | Path, *, render_plot: bool = True) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = sampling_report(kb)

    stats = {k: v for k, v in report.items() if k != "per_node"}
    json_path = out_dir / "sampling_report.json"
    csv_path = out_dir / "sampling_counts.csv"
    atomic_write_json(json_path, stats)
    atomic_write_text(csv_path, sampling_counts_csv(kb))
    written = {"json": json_path, "csv": csv_path}

    if render_plot:
        written["plot"] = _render_counts_plot(report, out_dir / "sampling_counts.png")
    return written


def _render_counts_plot(report: dict, path: Path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    counts = list(report["per_node"].values())
    fig, ax = plt.subplots(figsize=(max(6, len(counts) * 0.05), 4))
    ax.bar(range(len(counts)), counts, width=1.0)
    ax.axhline(report["ideal_uniform_count"], color="red", linestyle="--", label="uniform ideal")
    ax.set_xlabel("node index")
    ax.set_ylabel("retrieval count")
    ax.set_title("Retrieval counts by node")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path
