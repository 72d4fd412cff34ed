# experiments/runner.py
"""
Suite execution: fan the runs out through the pipeline, then write the curve
CSV, the JSON summary with the directional statistics and the run manifest.
"""
import logging
from collections import defaultdict
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy.stats import kendalltau

from experiments.graph_spec import build_pipeline
from experiments.suite import RunSpec, SuiteConfig, build_instances, expand_runs
from messages import create_run_message
from tools.report_writer import build_manifest, instance_digest, write_curves_csv, write_json, write_manifest

logger = logging.getLogger(__name__)

SWEEP_TOLERANCE = 1.0       # points; allowed rise between consecutive sweep means
STABLE_SPREAD = 5.0         # points
GAP_AT_SPARSE = 10.0        # points
FULL_OBSERVATION_FLOOR = 95.0


def _safe_kendall(x: Sequence[float], y: Sequence[float]) -> float:
    """Kendall tau, 0 for fewer than two points or constant input"""
    if len(x) < 2 or np.ptp(y) == 0 or np.ptp(x) == 0:
        return 0.0
    return float(kendalltau(x, y)[0])


def sweep_trend(results: List[Dict[str, Any]], label: str) -> Optional[Dict[str, Any]]:
    """Final mode accuracy against eta_u for one method label"""
    per_instance: Dict[str, Dict[float, List[float]]] = defaultdict(lambda: defaultdict(list))
    for result in results:
        run = result["run"]
        if run.label == label:
            per_instance[run.instance_name][run.eta_u].append(result["report"].mode_curve[-1])

    etas = sorted({eta for by_eta in per_instance.values() for eta in by_eta})
    if len(etas) < 2:
        return None

    taus = []
    means = []
    for eta in etas:
        values = [float(np.mean(by_eta[eta])) for by_eta in per_instance.values() if eta in by_eta]
        means.append(float(np.mean(values)))
    for name in sorted(per_instance):
        by_eta = per_instance[name]
        xs = sorted(by_eta)
        taus.append(_safe_kendall(xs, [float(np.mean(by_eta[x])) for x in xs]))

    steps = np.diff(means)
    return {
        "label": label,
        "eta_u": etas,
        "mean_mode_accuracy": means,
        "mean_kendall_tau": float(np.mean(taus)),
        "spread": float(max(means) - min(means)),
        "non_increasing": bool(np.all(steps <= SWEEP_TOLERANCE)),
    }


def observed_gap(results: List[Dict[str, Any]], baseline: str, candidate: str) -> Optional[Dict[str, Any]]:
    """Suite-mean final oracle accuracy of candidate minus baseline, per observed fraction"""
    oracle: Dict[str, Dict[float, List[float]]] = {baseline: defaultdict(list), candidate: defaultdict(list)}
    for result in results:
        run = result["run"]
        if run.label in oracle and run.observed_fraction is not None:
            oracle[run.label][run.observed_fraction].append(result["report"].oracle_curve[-1])

    fractions = sorted(set(oracle[baseline]) & set(oracle[candidate]))
    if not fractions:
        return None

    rows = []
    for fraction in fractions:
        base = float(np.mean(oracle[baseline][fraction]))
        cand = float(np.mean(oracle[candidate][fraction]))
        rows.append({"observed_fraction": fraction, "baseline": base, "candidate": cand, "gap": cand - base})

    gaps = [row["gap"] for row in rows]
    full = [row for row in rows if row["observed_fraction"] == 1.0]
    return {
        "baseline": baseline,
        "candidate": candidate,
        "by_fraction": rows,
        "sparse_gap_exceeds": bool(gaps[0] > GAP_AT_SPARSE),
        "gap_monotone_decreasing": bool(np.all(np.diff(gaps) <= 0)),
        "full_observation_above_floor": bool(full and full[0]["baseline"] > FULL_OBSERVATION_FLOOR
                                             and full[0]["candidate"] > FULL_OBSERVATION_FLOOR),
    }


def _run_summary(result: Dict[str, Any]) -> Dict[str, Any]:
    run: RunSpec = result.get("run")
    entry: Dict[str, Any] = {"run_key": run.run_key if run else None, "status": result.get("status", "error")}
    if entry["status"] != "ok":
        entry["error"] = result.get("error")
        return entry
    report = result["report"]
    entry.update({
        "map_accuracy": report.map_accuracy,
        "oracle_accuracy": report.oracle_curve[-1],
        "mode_accuracy": report.mode_curve[-1],
        "per_class": {str(k): v for k, v in sorted(report.per_class.items())},
        "diversity": result["diversity"],
        "condition_rate": result["condition_rate"],
        "final_error": result["final_error"],
    })
    return entry


def curve_rows(results: List[Dict[str, Any]]):
    for result in results:
        if result.get("status") != "ok":
            continue
        base = result["run"].to_dict()
        report = result["report"]
        for m, (oracle, mode) in enumerate(zip(report.oracle_curve, report.mode_curve), start=1):
            yield {**base, "M": m, "oracle": oracle, "mode": mode}


def run_experiment(suite: SuiteConfig, out_dir: Path, threads: int = 1,
                   command: Sequence[str] = ()) -> Dict[str, Any]:
    """Execute every run of the suite and write curves.csv, summary.json and manifest.json"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    named = build_instances(suite)
    runs = expand_runs(suite, [name for name, _ in named])
    manifest = build_manifest(command, {
        "suite": suite.source,
        "inference": suite.inference.to_dict(),
        "instances": {name: instance_digest(instance) for name, instance in named},
    })

    messages = [
        create_run_message("system", "InstanceNode", {
            "run": run,
            "instance": named[run.instance_index][1],
            "m_max": suite.m_max,
            "inference": suite.inference,
            "metric": suite.metric,
            "mask_seed": suite.mask_seed,
            "similarity_threshold": suite.similarity_threshold,
        }, run.run_key)
        for run in runs
    ]
    logger.info("Running suite %s: %d runs on %d thread(s)", suite.name, len(runs), threads)
    results = build_pipeline(threads).run_all(messages)

    with open(out_dir / "curves.csv", "w", encoding="utf-8", newline="") as handle:
        write_curves_csv(curve_rows(results), handle)

    ok = [r for r in results if r.get("status") == "ok"]
    trends = {}
    for label in sorted({r["run"].label for r in ok}):
        trend = sweep_trend(ok, label)
        if trend is not None:
            trends[label] = trend

    summary: Dict[str, Any] = {
        "suite": suite.name,
        "metric": suite.metric.value,
        "m_max": suite.m_max,
        "counts": {"runs": len(runs), "ok": len(ok), "failed": len(runs) - len(ok)},
        "runs": [_run_summary(r) for r in results],
        "sweep_trends": trends,
    }

    baseline, candidate = suite.compare.get("baseline"), suite.compare.get("candidate")
    if baseline and candidate:
        gap = observed_gap(ok, baseline, candidate)
        if gap is not None:
            summary["observed_gap"] = gap
        if baseline in trends and candidate in trends:
            summary["sweep_flags"] = {
                "baseline_non_increasing": trends[baseline]["non_increasing"]
                and trends[baseline]["mean_kendall_tau"] <= 0,
                "candidate_stable": trends[candidate]["spread"] < STABLE_SPREAD,
            }

    write_json(out_dir / "summary.json", summary)
    write_manifest(manifest.finish(), out_dir / "manifest.json")
    return summary
