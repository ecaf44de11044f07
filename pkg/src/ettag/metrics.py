"""Set-based precision/recall/F1 with micro and per-document macro aggregation.

Edge conventions: precision is 1 when nothing was predicted, recall is 1
when the gold set is empty, F1 is 0 when P+R is 0 (so two empty sets score
a perfect 1.0). Scores are fractions in [0, 1]; report formatting prints
percentages with one decimal.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import EmptyDataset


@dataclass(frozen=True)
class DocScore:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "DocScore":
        p = 1.0 if tp + fp == 0 else tp / (tp + fp)
        r = 1.0 if tp + fn == 0 else tp / (tp + fn)
        f1 = 0.0 if p + r == 0 else 2 * p * r / (p + r)
        return cls(tp=tp, fp=fp, fn=fn, precision=p, recall=r, f1=f1)


@dataclass(frozen=True)
class DatasetReport:
    per_doc: tuple[DocScore, ...]
    micro: DocScore
    macro_precision: float
    macro_recall: float
    macro_f1: float

    @property
    def n_docs(self) -> int:
        return len(self.per_doc)

    def as_dict(self) -> dict:
        return {
            "n_docs": self.n_docs,
            "micro": {
                "precision": self.micro.precision,
                "recall": self.micro.recall,
                "f1": self.micro.f1,
            },
            "macro": {
                "precision": self.macro_precision,
                "recall": self.macro_recall,
                "f1": self.macro_f1,
            },
        }


def prf1(pred: Iterable[int], gold: Iterable[int]) -> DocScore:
    """Precision/recall/F1 between two entity sets."""
    pred = set(pred)
    gold = set(gold)
    tp = len(pred & gold)
    return DocScore.from_counts(tp=tp, fp=len(pred) - tp, fn=len(gold) - tp)


def aggregate(scores: Sequence[DocScore]) -> DatasetReport:
    """Micro from summed counts, macro from per-document means."""
    if not scores:
        raise EmptyDataset("no documents to aggregate")
    micro = DocScore.from_counts(
        tp=sum(s.tp for s in scores),
        fp=sum(s.fp for s in scores),
        fn=sum(s.fn for s in scores),
    )
    n = len(scores)
    return DatasetReport(
        per_doc=tuple(scores),
        micro=micro,
        macro_precision=sum(s.precision for s in scores) / n,
        macro_recall=sum(s.recall for s in scores) / n,
        macro_f1=sum(s.f1 for s in scores) / n,
    )


def score_predictions(
    preds: Mapping[str, Iterable[int]], golds: Mapping[str, Iterable[int]]
) -> DatasetReport:
    """Join predictions and gold sets on document id and aggregate."""
    missing = sorted(set(golds) - set(preds))
    if missing:
        raise EmptyDataset(f"predictions missing for documents: {missing[:5]}")
    return aggregate([prf1(preds[doc], golds[doc]) for doc in sorted(golds)])


def _dataset_f1(report, which: str) -> float:
    if isinstance(report, (int, float)):
        return float(report)
    return report.micro.f1 if which == "micro" else report.macro_f1


def cross_dataset_average(
    reports: Mapping[str, "DatasetReport | float"], which: str = "micro"
) -> float:
    """Unweighted mean of per-dataset F1 (bare numbers pass through, so
    published scores can be averaged alongside computed reports)."""
    if not reports:
        raise EmptyDataset("no datasets to average")
    if which not in ("micro", "macro"):
        raise ValueError(f"unknown aggregation {which!r}")
    vals = [_dataset_f1(r, which) for r in reports.values()]
    return sum(vals) / len(vals)


def _fmt_row(cells: Sequence[str], widths: Sequence[int]) -> str:
    return "  ".join(c.rjust(w) for c, w in zip(cells, widths))


def format_report(reports: Mapping[str, DatasetReport], style: str = "table2") -> str:
    """Fixed-width text table, one decimal place, percent scale.

    style=table2: one F1 column per dataset plus the cross-dataset average.
    style=table4: P and R columns per dataset plus macro-averaged P and R.
    """
    if style not in ("table2", "table4"):
        raise ValueError(f"unknown report style {style!r}")
    if not reports:
        raise EmptyDataset("nothing to format")
    names = list(reports)

    def pct(x: float) -> str:
        return f"{100.0 * x:.1f}"

    rows: list[list[str]] = []
    if style == "table2":
        header = ["aggregation", *names, "Avg."]
        for which in ("micro", "macro"):
            vals = [_dataset_f1(reports[n], which) for n in names]
            avg = cross_dataset_average(reports, which)
            rows.append([f"{which}-F1", *[pct(v) for v in vals], pct(avg)])
    else:
        header = ["aggregation"]
        for n in names:
            header += [f"{n} P", f"{n} R"]
        header += ["Avg. P", "Avg. R"]
        for which in ("micro", "macro"):
            cells = [f"{which}-P/R"]
            ps, rs = [], []
            for n in names:
                rep = reports[n]
                p = rep.micro.precision if which == "micro" else rep.macro_precision
                r = rep.micro.recall if which == "micro" else rep.macro_recall
                ps.append(p)
                rs.append(r)
                cells += [pct(p), pct(r)]
            cells += [pct(sum(ps) / len(ps)), pct(sum(rs) / len(rs))]
            rows.append(cells)

    widths = [max(len(header[i]), *(len(r[i]) for r in rows)) for i in range(len(header))]
    lines = [_fmt_row(header, widths)]
    lines.append("  ".join("-" * w for w in widths))
    lines.extend(_fmt_row(r, widths) for r in rows)
    return "\n".join(lines)
