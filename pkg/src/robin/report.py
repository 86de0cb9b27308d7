"""Render run results to delimited files plus matplotlib figures.

The report directory gets a CSV and a PNG per available result set:
candidate ranking strengths and consensus support fractions. Missing
inputs are skipped, so a report can be cut at any point in a run.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _write_ranking(run_dir: Path, out_dir: Path) -> list[Path]:
    source = run_dir / "ranking.json"
    if not source.exists():
        return []
    doc = json.loads(source.read_text("utf-8"))
    entries = doc["ranking"]["entries"]
    names = doc.get("names", {})
    csv_path = out_dir / "ranking.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["rank", "hypothesis_id", "name", "strength"])
        for pos, entry in enumerate(entries, start=1):
            hid = entry["hypothesis_id"]
            writer.writerow([pos, hid, names.get(str(hid), ""), entry["strength"]])

    fig, ax = plt.subplots(figsize=(10, 5))
    ids = [str(e["hypothesis_id"]) for e in entries]
    strengths = [e["strength"] for e in entries]
    ax.bar(range(len(ids)), strengths, color="#3b6ea5")
    ax.set_xticks(range(len(ids)))
    ax.set_xticklabels(ids, rotation=90, fontsize=7)
    ax.set_xlabel("hypothesis id (ranked)")
    ax.set_ylabel("BTL strength")
    ax.set_title("Candidate ranking")
    fig.tight_layout()
    png_path = out_dir / "ranking.png"
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return [csv_path, png_path]


def _write_consensus(run_dir: Path, out_dir: Path) -> list[Path]:
    source = run_dir / "consensus.json"
    if not source.exists():
        return []
    doc = json.loads(source.read_text("utf-8"))
    items = doc["items"]
    flagged = set(doc.get("flagged", []))
    csv_path = out_dir / "consensus.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["item", "direction", "support_fraction", "flagged"])
        for item in items:
            writer.writerow(
                [
                    item["item"],
                    item["direction"],
                    item["support_fraction"],
                    item["item"] in flagged,
                ]
            )

    fig, ax = plt.subplots(figsize=(10, max(3, 0.3 * len(items))))
    labels = [i["item"] for i in items][::-1]
    supports = [i["support_fraction"] for i in items][::-1]
    colors = [
        "#b3452e" if label in flagged else "#7a7a7a" for label in labels
    ]
    ax.barh(range(len(labels)), supports, color=colors)
    ax.set_yticks(range(len(labels)))
    ax.set_yticklabels(labels, fontsize=7)
    ax.axvline(doc["threshold"], linestyle="--", color="black", linewidth=1)
    ax.set_xlabel("max-direction support fraction")
    ax.set_title("Trajectory consensus (dashed line: flag threshold)")
    fig.tight_layout()
    png_path = out_dir / "consensus.png"
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return [csv_path, png_path]


def write_report(run_dir: str | Path, out_dir: str | Path) -> list[Path]:
    """Write every available CSV/figure pair; returns the paths written."""
    run_dir = Path(run_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    written += _write_ranking(run_dir, out_dir)
    written += _write_consensus(run_dir, out_dir)
    return written
