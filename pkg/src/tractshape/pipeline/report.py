"""Plain-text tables for evaluation reports and method comparisons."""

from .experiment import summarize


def format_score(values, metric):
    """``mean±std`` with two decimals for accuracy and MAE, three for correlations."""
    mean, std = summarize(values)
    digits = 3 if metric == "PearsonR" else 2
    return f"{mean:.{digits}f}±{std:.{digits}f}"


def _table(header, rows):
    widths = [max(len(str(r[i])) for r in [header, *rows]) for i in range(len(header))]
    line = lambda r: "  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip()
    rule = "  ".join("-" * w for w in widths)
    return "\n".join([line(header), rule, *(line(r) for r in rows)])


def render_report(report):
    """Per-measure, per-category and fused scores of one experiment."""
    metric = report.metric
    rows = []
    for name, measures in report.categories:
        for m in measures:
            if m in report.per_measure:
                rows.append(["measure", m, format_score(report.per_measure[m], metric)])
        if name in report.per_category:
            rows.append(["category", name, format_score(report.per_category[name], metric)])
    rows.append(["fused", report.label, format_score(report.fold_values, metric)])
    head = (
        f"task: {report.task}  metric: {metric}  model: {report.model}  "
        f"subjects: {report.n_subjects}  folds: {len(report.fold_values)}"
    )
    return head + "\n\n" + _table(["level", "name", metric], rows) + "\n"


def render_comparison(comparison):
    """Mean±std per method, the repeated-measures ANOVA and all pairwise paired t-tests."""
    metric = comparison.metric
    cols = list(zip(*comparison.table)) if comparison.table else []
    rows = [[label, format_score(list(col), metric)] for label, col in zip(comparison.labels, cols)]
    out = [f"task: {comparison.task}  metric: {metric}", "", _table(["method", metric], rows), ""]
    a = comparison.anova
    out.append(f"rmANOVA: F({a['df1']:g}, {a['df2']:g}) = {a['F']:.4f}, p = {a['p']:.4g} {a['marker']}")
    out.append("")
    pair_rows = [
        [p["a"], p["b"], f"{p['mean_difference']:+.4f}", f"{p['t']:.4f}", f"{p['p']:.4g}", p["marker"]]
        for p in comparison.pairwise
    ]
    out.append(_table(["method A", "method B", "mean diff", "t", "p", ""], pair_rows))
    return "\n".join(out) + "\n"
