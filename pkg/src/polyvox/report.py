"""Report rendering: delimited tables plus boxplot figures on disk.

``write_report_files`` emits, into one directory:

    report.tsv         per-system mean / median / average rank
    pairwise.tsv       signed-rank p-values with Holm-Bonferroni decisions
    boxplot_data.tsv   per-system quartiles, mean, median, whiskers
    boxplot.png        rendered score distributions (median red, mean green)
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .mushra import AnalysisReport, ScoredRecord, boxplot_stats


def format_report(report: AnalysisReport) -> str:
    lines = ["system\tn\tmean\tmedian\taverage_rank"]
    for row in report.rows:
        lines.append(f"{row.system}\t{row.n}\t{row.mean:.2f}\t{row.median:.0f}\t{row.average_rank:.2f}")
    return "\n".join(lines)


def format_pairwise(report: AnalysisReport) -> str:
    lines = [f"# alpha={report.alpha}  discarded_records={report.discarded}",
             "system_a\tsystem_b\tn_pairs\tstatistic\tp_value\tp_adjusted\tsignificant\tdegenerate"]
    for t in report.pairwise:
        lines.append("\t".join([
            t.system_a, t.system_b, str(t.n_pairs), f"{t.statistic:.1f}",
            f"{t.p_value:.6g}", f"{t.p_adjusted:.6g}",
            "yes" if t.reject else "no", "yes" if t.degenerate else "no",
        ]))
    for flag in report.flags:
        lines.append(f"# flag: {flag}")
    return "\n".join(lines)


def format_boxplot_data(stats: list[dict]) -> str:
    lines = ["system\tn\tmean\tmedian\tq1\tq3\twhisker_low\twhisker_high"]
    for s in stats:
        lines.append("\t".join([
            s["system"], str(s["n"]), f"{s['mean']:.2f}", f"{s['median']:.1f}",
            f"{s['q1']:.1f}", f"{s['q3']:.1f}", f"{s['whisker_low']:.1f}",
            f"{s['whisker_high']:.1f}",
        ]))
    return "\n".join(lines)


def render_boxplot(records: list[ScoredRecord], systems: list[str], out_path: str | Path,
                   title: str = "Naturalness scores") -> None:
    data = []
    labels = []
    for s in systems:
        scores = [rec.scores[s] for rec in records if s in rec.scores]
        if scores:
            data.append(scores)
            labels.append(s)
    fig, ax = plt.subplots(figsize=(max(6.0, 1.1 * len(labels)), 4.2))
    ax.boxplot(data, tick_labels=labels, showmeans=True, meanline=True,
               medianprops={"color": "red"},
               meanprops={"color": "green", "linestyle": "-"})
    ax.set_ylabel("naturalness (0-100)")
    ax.set_ylim(0, 100)
    ax.set_title(title)
    ax.grid(axis="y", alpha=0.3)
    plt.setp(ax.get_xticklabels(), rotation=30, ha="right")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def write_report_files(out_dir: str | Path, report: AnalysisReport,
                       records: list[ScoredRecord], systems: list[str],
                       title: str = "Naturalness scores") -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "report": out_dir / "report.tsv",
        "pairwise": out_dir / "pairwise.tsv",
        "boxplot_data": out_dir / "boxplot_data.tsv",
        "boxplot": out_dir / "boxplot.png",
    }
    paths["report"].write_text(format_report(report) + "\n", encoding="utf-8")
    paths["pairwise"].write_text(format_pairwise(report) + "\n", encoding="utf-8")
    stats = boxplot_stats(records, systems)
    paths["boxplot_data"].write_text(format_boxplot_data(stats) + "\n", encoding="utf-8")
    render_boxplot(records, systems, paths["boxplot"], title=title)
    return paths
