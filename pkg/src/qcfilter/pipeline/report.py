"""Plain-text rendering of a run report."""

from __future__ import annotations


def _ordinal(k):
    return {1: "1st", 2: "2nd", 3: "3rd"}.get(k, f"{k}th")


def render_text(report, scn) -> str:
    rp = scn.report
    n_st = len(report.q_r) - 1
    vf = f".{rp.v_digits}f"
    out = []
    prov = report.provenance
    out.append("Conformity assessment and partial safety factors")
    out.append(f"seed {prov['seed']}  config {prov['config_hash'][:16]}  version {prov['version']}")
    out.append(f"CoV measure: {prov['cov_measure']}")
    out.append("")

    heads = ["Incoming"] + [f"{_ordinal(k)} Outgoing" for k in range(1, n_st + 1)]
    width = max(12, max(len(c["name"]) for c in report.channels))
    out.append(f"{'Component':<{width}}  {'n':>6}  " + "  ".join(f"{h:>12}" for h in heads))
    for c in report.channels:
        cells = [format(v, vf) for v in c["v"]] + ["No QC"] * (n_st + 1 - len(c["v"]))
        out.append(f"{c['name']:<{width}}  {c['n']:>6.3f}  " + "  ".join(f"{x:>12}" for x in cells))
    qf = f".{rp.q_digits}f"
    out.append(f"{'Q_R =':<{width}}  {'':>6}  " + "  ".join(f"{format(q, qf):>12}" for q in report.q_r))
    out.append("")

    out.append(f"{'':<{width}}  {'':>6}  {'':>12}  " + "  ".join(f"{f'{_ordinal(k)} QC':>12}" for k in range(1, n_st + 1)))
    rf, gf = f".{rp.r_digits}f", f".{rp.gamma_digits}f"
    for label, vals, f in (("dQ_R", report.delta_q_r, qf), ("r", report.r, rf), ("gamma_M", report.gamma, gf)):
        out.append(f"{label:<{width}}  {'':>6}  {'':>12}  " + "  ".join(f"{format(v, f):>12}" for v in vals))
    out.append("")

    summaries = [c for c in report.channels if c.get("summaries")]
    if summaries:
        out.append("75% credibility intervals of the per-sample CoV")
        for c in summaries:
            cells = [f"[{s['ci75'][0]:{vf}}, {s['ci75'][1]:{vf}}]" for s in c["summaries"]]
            out.append(f"{c['name']:<{width}}  " + "  ".join(f"{x:>16}" for x in cells))
        out.append("")

    if report.table:
        tw = max(len("Quality control task"), max(len(r["name"]) for r in report.table))
        out.append(f"{'Quality control task':<{tw}}  {'r (1)':>7}  {'gamma (1)':>9}  {'r (2)':>7}  {'gamma (2)':>9}")
        for row in report.table:
            out.append(f"{row['name']:<{tw}}  {row['r']:>7{rf}}  {row['gamma']:>9{gf}}"
                       f"  {row['r_upper']:>7{rf}}  {row['gamma_upper']:>9{gf}}")
        out.append("(1) expected CoV  (2) upper limit of the 75% credibility interval")
    return "\n".join(out) + "\n"
