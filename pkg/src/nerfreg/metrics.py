"""Registration metrics, aggregation, and report files.

Error conventions: rotation error is the geodesic angle between estimated
and true rotation in degrees; translation error is the Euclidean distance
between camera centers, reported both in scene units and in millimeters via
the dataset scale constant.  An estimate is an outlier when its rotation
error strictly exceeds the threshold (default 20 deg; exactly 20.0 is an
inlier).  ATE/ART average translation/rotation error over inliers only;
outlier percentages count over all targets.

File formats: `results.csv` holds one row per registration with repr-exact
floats (bit-exact reproducibility); `summary.csv` and `curves.csv` use %.10g
so short decimals print the way tables quote them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .se3 import Pose, rotation_error_deg, translation_error

OUTLIER_DEG_DEFAULT = 20.0

RESULT_COLUMNS = ("method", "style_id", "target_id", "rotation_error_deg",
                  "translation_error_units", "translation_error_mm",
                  "final_loss", "is_outlier")
POOLED = "pooled"


@dataclass(frozen=True)
class RegistrationResult:
    method: str
    style_id: str
    target_id: str
    rotation_error_deg: float
    translation_error_units: float
    translation_error_mm: float
    final_loss: float
    is_outlier: bool

    def __post_init__(self):
        # plain floats so the repr written to results.csv stays parseable
        for name in ("rotation_error_deg", "translation_error_units",
                     "translation_error_mm", "final_loss"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.rotation_error_deg < 0 or self.translation_error_units < 0:
            raise ValueError("errors must be nonnegative")


def make_result(method: str, style_id: str, target_id: str, true_pose: Pose,
                est_pose: Pose, final_loss: float, scale_mm_per_unit: float,
                outlier_deg: float = OUTLIER_DEG_DEFAULT) -> RegistrationResult:
    rot = rotation_error_deg(est_pose, true_pose)
    trans = translation_error(est_pose, true_pose)
    return RegistrationResult(
        method=method, style_id=style_id, target_id=target_id,
        rotation_error_deg=rot, translation_error_units=trans,
        translation_error_mm=trans * scale_mm_per_unit,
        final_loss=float(final_loss), is_outlier=rot > outlier_deg)


def write_results(path, results) -> None:
    with open(path, "w") as f:
        f.write(",".join(RESULT_COLUMNS) + "\n")
        for r in results:
            f.write(f"{r.method},{r.style_id},{r.target_id},"
                    f"{r.rotation_error_deg!r},{r.translation_error_units!r},"
                    f"{r.translation_error_mm!r},{r.final_loss!r},"
                    f"{int(r.is_outlier)}\n")


def read_results(path) -> list[RegistrationResult]:
    with open(path) as f:
        header = f.readline().strip()
        if header != ",".join(RESULT_COLUMNS):
            raise ValueError(f"{path}: unexpected results header {header!r}")
        out = []
        for line in f:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(RESULT_COLUMNS):
                raise ValueError(f"{path}: malformed results row {line!r}")
            out.append(RegistrationResult(
                method=parts[0], style_id=parts[1], target_id=parts[2],
                rotation_error_deg=float(parts[3]),
                translation_error_units=float(parts[4]),
                translation_error_mm=float(parts[5]),
                final_loss=float(parts[6]),
                is_outlier=bool(int(parts[7]))))
        return out


# -- summaries -------------------------------------------------------------------


def _fmt(x) -> str:
    return "" if x is None else format(float(x), ".10g")


@dataclass(frozen=True)
class SummaryRow:
    style_id: str
    n: int
    ate_mm: float | None      # None when every target is an outlier
    art_deg: float | None
    outlier_pct: float


@dataclass(frozen=True)
class SummaryReport:
    method: str
    rows: tuple

    def row(self, style_id: str) -> SummaryRow:
        for r in self.rows:
            if r.style_id == style_id:
                return r
        raise KeyError(f"no summary row for {style_id!r}")

    @property
    def pooled(self) -> SummaryRow:
        return self.row(POOLED)


def summarize(results, outlier_deg: float = OUTLIER_DEG_DEFAULT,
              method: str | None = None) -> SummaryReport:
    """Per-style rows plus a pooled row (style_id "pooled", listed last).

    Outliers are reclassified here from the rotation errors with a strict
    ">" so the report is self-consistent whatever flags the rows carried.
    """
    results = list(results)
    if not results:
        raise ValueError("cannot summarize an empty result list")
    methods = {r.method for r in results}
    if method is None:
        if len(methods) > 1:
            raise ValueError("results mix methods; pass method= to select one")
        method = next(iter(methods))
        subset = results
    else:
        subset = [r for r in results if r.method == method]
        if not subset:
            raise ValueError(f"no results for method {method!r}")

    def make_row(style_id, rows):
        inliers = [r for r in rows if r.rotation_error_deg <= outlier_deg]
        n = len(rows)
        pct = 100.0 * (n - len(inliers)) / n
        if inliers:
            ate = float(np.mean([r.translation_error_mm for r in inliers]))
            art = float(np.mean([r.rotation_error_deg for r in inliers]))
        else:
            ate = art = None
        return SummaryRow(style_id, n, ate, art, pct)

    styles = sorted({r.style_id for r in subset})
    rows = [make_row(s, [r for r in subset if r.style_id == s])
            for s in styles]
    rows.append(make_row(POOLED, subset))
    return SummaryReport(method, tuple(rows))


SUMMARY_HEADER = "method,style_id,n,ate_mm,art_deg,outlier_pct"


def summary_to_csv(reports) -> str:
    if isinstance(reports, SummaryReport):
        reports = [reports]
    lines = [SUMMARY_HEADER]
    for rep in reports:
        for r in rep.rows:
            lines.append(f"{rep.method},{r.style_id},{r.n},"
                         f"{_fmt(r.ate_mm)},{_fmt(r.art_deg)},"
                         f"{_fmt(r.outlier_pct)}")
    return "\n".join(lines) + "\n"


def summary_from_csv(text: str) -> list[SummaryReport]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != SUMMARY_HEADER:
        raise ValueError("unexpected summary header")
    by_method: dict[str, list[SummaryRow]] = {}
    order = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 6:
            raise ValueError(f"malformed summary row {ln!r}")
        method = parts[0]
        row = SummaryRow(parts[1], int(parts[2]),
                         float(parts[3]) if parts[3] else None,
                         float(parts[4]) if parts[4] else None,
                         float(parts[5]))
        if method not in by_method:
            by_method[method] = []
            order.append(method)
        by_method[method].append(row)
    return [SummaryReport(m, tuple(by_method[m])) for m in order]


def write_summary(path, reports) -> None:
    with open(path, "w") as f:
        f.write(summary_to_csv(reports))


def read_summary(path) -> list[SummaryReport]:
    with open(path) as f:
        return summary_from_csv(f.read())


# -- accuracy-threshold curves ---------------------------------------------------


@dataclass(frozen=True)
class AccuracyCurve:
    thresholds: np.ndarray
    fractions: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.thresholds, dtype=np.float64)
        fr = np.asarray(self.fractions, dtype=np.float64)
        if t.ndim != 1 or t.shape != fr.shape or t.size == 0:
            raise ValueError("thresholds and fractions must be matching 1-d arrays")
        if np.any(np.diff(t) < 0):
            raise ValueError("thresholds must be ascending")
        if np.any(np.diff(fr) < 0) or fr.min() < 0 or fr.max() > 1:
            raise ValueError("fractions must be non-decreasing within [0, 1]")
        object.__setattr__(self, "thresholds", t)
        object.__setattr__(self, "fractions", fr)


def accuracy_curve(errors, thresholds) -> AccuracyCurve:
    """fraction(tau) = |{e <= tau}| / N over the given ascending thresholds."""
    errors = np.asarray(errors, dtype=np.float64)
    if errors.size == 0:
        raise ValueError("cannot build an accuracy curve from no errors")
    t = np.asarray(thresholds, dtype=np.float64)
    fractions = (errors[None, :] <= t[:, None]).mean(axis=1)
    return AccuracyCurve(t, fractions)


CURVES_HEADER = "metric,threshold,fraction"


def write_curves(path, curves: dict) -> None:
    """curves.csv: one row per (metric, threshold), columns pinned."""
    with open(path, "w") as f:
        f.write(CURVES_HEADER + "\n")
        for metric in curves:
            c = curves[metric]
            for t, fr in zip(c.thresholds, c.fractions):
                f.write(f"{metric},{_fmt(t)},{_fmt(fr)}\n")


def read_curves(path) -> dict:
    with open(path) as f:
        header = f.readline().strip()
        if header != CURVES_HEADER:
            raise ValueError(f"{path}: unexpected curves header {header!r}")
        data: dict[str, list] = {}
        for line in f:
            line = line.strip()
            if not line:
                continue
            metric, t, fr = line.split(",")
            data.setdefault(metric, []).append((float(t), float(fr)))
    return {m: AccuracyCurve(np.array([p[0] for p in pts]),
                             np.array([p[1] for p in pts]))
            for m, pts in data.items()}


# -- plain-text report -----------------------------------------------------------


def format_report(reports, outlier_deg: float = OUTLIER_DEG_DEFAULT) -> str:
    """Fixed-width comparison table over one or more methods."""
    if isinstance(reports, SummaryReport):
        reports = [reports]
    lines = [
        f"Pose registration summary (outliers: rotation error > "
        f"{_fmt(outlier_deg)} deg, excluded from ATE/ART)",
        "",
        f"{'method':<12} {'style':<10} {'n':>4} {'ATE(mm)':>10} "
        f"{'ART(deg)':>10} {'outliers(%)':>12}",
    ]
    for rep in reports:
        for r in rep.rows:
            ate = "-" if r.ate_mm is None else f"{r.ate_mm:.2f}"
            art = "-" if r.art_deg is None else f"{r.art_deg:.2f}"
            lines.append(f"{rep.method:<12} {r.style_id:<10} {r.n:>4} "
                         f"{ate:>10} {art:>10} {r.outlier_pct:>12.1f}")
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"


def write_report(path, reports, outlier_deg: float = OUTLIER_DEG_DEFAULT) -> None:
    with open(path, "w") as f:
        f.write(format_report(reports, outlier_deg))
