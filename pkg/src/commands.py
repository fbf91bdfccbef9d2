"""
Chaînes de traitement des sous-commandes : prepare, fit, regress, simulate.

Chaque commande lit un RunManifest, écrit ses tables dans `out_dir` et y
dépose son manifeste. Aucune table ne contient d'horodatage : relancer une
commande avec le même manifeste réécrit les mêmes octets.
"""
import json
import logging
import math
import time
from datetime import date
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from dateutil.relativedelta import relativedelta

from .errors import InputError, NoData
from .logbook import (
    AscentRecord,
    GameMode,
    PreparationReport,
    PreparedDataset,
    aggregate_sessions,
    cap_climbers,
    default_tick_policy,
    failure_statistics,
    filter_climbers,
    ingest,
    load_prepared,
    paginate,
    write_logbook,
    write_prepared,
)
from .manifest import RegressMode, RunManifest
from .regression import (
    MEAN_SLOPE_LABEL,
    climber_fits,
    fit_community_exponential,
    fit_community_power_law,
    mean_slope,
    read_histogram,
)
from .sampler import sample
from .simulate import SimSpec, simulate, write_ground_truth
from .trace import grade_paths, summaries_frame, summarize

logger = logging.getLogger(__name__)

PREPARED_FILE = "prepared_ascents.csv"
REPORT_FILE = "preparation_report.csv"


def _output_dir(manifest: RunManifest) -> Path:
    out = Path(manifest.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def resolve_window(manifest: RunManifest, records: List[AscentRecord]) -> Tuple[date, date]:
    """Fenêtre du manifeste, sinon les mois calendaires couverts par les ascensions"""
    if manifest.window_start and manifest.window_end:
        return manifest.window_start, manifest.window_end
    if not records:
        raise NoData("Aucune ascension pour déduire la fenêtre d'analyse")
    start = manifest.window_start or min(r.date for r in records).replace(day=1)
    end = manifest.window_end or (max(r.date for r in records).replace(day=1) + relativedelta(months=1))
    return start, end


def _dataset(manifest: RunManifest, records: List[AscentRecord]) -> PreparedDataset:
    start, end = resolve_window(manifest, records)
    return paginate(records, start, end, game_mode=manifest.game, system=manifest.system)


# --- prepare ---

def cmd_prepare(manifest: RunManifest) -> Tuple[PreparedDataset, PreparationReport]:
    """Lecture, agrégation, sélection et pagination ; écrit le jeu préparé et le rapport"""
    if not manifest.inputs:
        raise InputError("Aucun fichier d'entrée (--input)")
    out = _output_dir(manifest)
    policy = default_tick_policy(bouldering=manifest.bouldering)

    report = PreparationReport({
        "system": manifest.system.value,
        "game": manifest.game.value,
        "min_ascents": manifest.min_ascents,
        "min_failures": manifest.min_failures,
        "max_climbers": manifest.max_climbers if manifest.max_climbers is not None else "",
        "styles": ",".join(manifest.styles) if manifest.styles else "",
    })

    records: List[AscentRecord] = []
    rows_read = 0
    details = {"ignored": 0, "unknown": 0, "style_excluded": 0}
    for path in manifest.inputs:
        result = ingest(path, manifest.input_format, manifest.system, policy,
                        on_unknown=manifest.on_unknown, styles=manifest.styles)
        records.extend(result.records)
        rows_read += result.rows_read
        details["ignored"] += result.ignored
        details["unknown"] += sum(result.unknown.values())
        details["style_excluded"] += result.style_excluded
    report.add("ingest", rows_read, len(records),
               " ".join(f"{key}={value}" for key, value in details.items()))

    if manifest.game is GameMode.SESSION:
        aggregated = aggregate_sessions(records)
        report.add("aggregate", len(records), len(aggregated),
                   f"collapsed={len(records) - len(aggregated)}")
        records = aggregated
    else:
        report.add("aggregate", len(records), len(records), "skipped")

    if manifest.window_start or manifest.window_end:
        start, end = manifest.window_start or date.min, manifest.window_end or date.max
        inside = [r for r in records if start <= r.date < end]
        report.add("window", len(records), len(inside), f"{start.isoformat()}..{end.isoformat()}")
        records = inside

    filtered = filter_climbers(records, manifest.min_ascents, manifest.min_failures)
    report.add("filter", len(records), len(filtered),
               f"min_ascents={manifest.min_ascents} min_failures={manifest.min_failures}")
    records = filtered

    if manifest.max_climbers is not None:
        capped = cap_climbers(records, manifest.max_climbers)
        report.add("cap", len(records), len(capped), f"max_climbers={manifest.max_climbers}")
        records = capped

    if not records:
        raise NoData("Aucune ascension ne passe les seuils de sélection")

    dataset = _dataset(manifest, records)
    report.add("paginate", len(records), dataset.n_ascents,
               f"climbers={dataset.n_climbers} pages={dataset.n_pages}")

    report.header["window_start"] = dataset.window_start.isoformat()
    report.header["window_end"] = resolve_window(manifest, records)[1].isoformat()
    for key, value in failure_statistics(records).items():
        report.header[f"failures.{key}"] = round(value, 4) if isinstance(value, float) else value

    write_prepared(records, dataset.window_start, out / PREPARED_FILE)
    report.write(out / REPORT_FILE)
    manifest.save(out, "prepare")
    return dataset, report


# --- fit ---

def dataset_summary_row(manifest: RunManifest, dataset: PreparedDataset,
                        d_summary) -> pd.DataFrame:
    """Ligne de synthèse : pente = moyenne a posteriori de d, HPD sur d"""
    return pd.DataFrame([{
        "country": manifest.country,
        "style": manifest.style,
        "climbers": dataset.n_climbers,
        "ascents": dataset.n_ascents,
        "slope": round(d_summary.mean, 2),
        "hpd.lower": round(d_summary.hpd_lower, 2),
        "hpd.upper": round(d_summary.hpd_upper, 2),
        "min.ascents": manifest.min_ascents,
        "min.failures": manifest.min_failures,
        "grade.type": manifest.system.value,
        "game": manifest.game.value,
    }])


def cmd_fit(manifest: RunManifest) -> Dict[str, object]:
    """Échantillonne la loi a posteriori et écrit traces, résumés et trajectoires"""
    out = _output_dir(manifest)
    records = load_prepared(out / PREPARED_FILE, manifest.system)
    dataset = _dataset(manifest, records)

    started = time.perf_counter()
    trace = sample(dataset, manifest.model, manifest.sampler, threads=manifest.threads)
    logger.info(f"Échantillonnage en {time.perf_counter() - started:.1f} s")

    summaries = summarize(trace, manifest.hpd_mass)
    d_summary = next(s for s in summaries if s.name == "d")
    row = dataset_summary_row(manifest, dataset, d_summary)

    trace.write_csv(out / "trace.csv")
    summaries_frame(summaries).to_csv(out / "summary.csv", index=False)
    row.to_csv(out / "dataset_summary.csv", index=False, float_format="%.2f")
    grade_paths(trace, dataset, manifest.hpd_mass).to_csv(out / "grades_through_time.csv", index=False)

    finite_rhat = [s.rhat for s in summaries if not math.isnan(s.rhat)]
    finite_ess = [s.ess for s in summaries if not math.isnan(s.ess)]
    diagnostics = dict(trace.diagnostics)
    diagnostics["max_rhat"] = max(finite_rhat) if finite_rhat else None
    diagnostics["min_ess"] = min(finite_ess) if finite_ess else None
    with open(out / "diagnostics.json", "w", encoding="utf-8") as handle:
        json.dump(diagnostics, handle, indent=2)
        handle.write("\n")
    manifest.save(out, "fit")

    logger.info(f"d = {d_summary.mean:.2f} [{d_summary.hpd_lower:.2f}, {d_summary.hpd_upper:.2f}]",
                extra={"climbers": dataset.n_climbers, "ascents": dataset.n_ascents})
    return {"d": d_summary, "summary_row": row, "diagnostics": diagnostics}


# --- regress ---

def cmd_regress(manifest: RunManifest) -> Dict[str, object]:
    """Régressions log-linéaires par grimpeur ou ajustement communautaire"""
    out = _output_dir(manifest)
    if manifest.regress_mode is RegressMode.COMMUNITY:
        result = _regress_community(manifest, out)
    else:
        result = _regress_climbers(manifest, out)
    manifest.save(out, "regress")
    return result


def _regress_climbers(manifest: RunManifest, out: Path) -> Dict[str, object]:
    records = load_prepared(out / PREPARED_FILE, manifest.system)
    fits, points, skipped = climber_fits(records)
    slope = mean_slope(fits)
    fits.to_csv(out / "climber_fits.csv", index=False)
    points.to_csv(out / "odds_points.csv", index=False)
    summary = pd.DataFrame([{
        "estimator": MEAN_SLOPE_LABEL,
        "m": slope,
        "d": math.exp(slope) if slope is not None else None,
        "climbers": len(fits),
        "skipped": len(skipped),
    }])
    summary.to_csv(out / "regression_summary.csv", index=False)
    if slope is not None:
        logger.info(f"Pente moyenne par grimpeur (régression, pas MCMC) : m = {slope:.3f}")
    return {"mean_slope": slope, "fits": fits, "skipped": skipped}


def _regress_community(manifest: RunManifest, out: Path) -> Dict[str, object]:
    if manifest.histogram is not None:
        histogram = read_histogram(manifest.histogram)
    else:
        # Sans histogramme : réussites du jeu préparé
        histogram = grade_frequencies(load_prepared(out / PREPARED_FILE, manifest.system))
    exponential = fit_community_exponential(histogram, manifest.grade_range)
    rows = [{"model": "exponential", "decay": exponential.decay,
             "intercept": exponential.fit.intercept, "r_squared": exponential.fit.r_squared,
             "n_points": exponential.fit.n_points, "excluded": len(exponential.excluded)}]
    try:
        power = fit_community_power_law(histogram, manifest.grade_range)
        rows.append({"model": "power-law", "decay": power.decay,
                     "intercept": power.fit.intercept, "r_squared": power.fit.r_squared,
                     "n_points": power.fit.n_points, "excluded": len(power.excluded)})
    except InputError as e:
        logger.warning(f"Ajustement en loi de puissance impossible : {e}")
    pd.DataFrame(rows).to_csv(out / "community_fit.csv", index=False)

    low, high = manifest.grade_range
    points = pd.DataFrame(
        [{"grade": g, "count": c, "log_count": math.log(c) if c > 0 else None}
         for g, c in sorted(histogram.items()) if low <= g <= high],
        columns=["grade", "count", "log_count"])
    points.to_csv(out / "community_points.csv", index=False)
    logger.info(f"Décroissance communautaire r = {exponential.decay:.4f}")
    return {"r": exponential.decay, "exponential": exponential}


# --- simulate ---

def cmd_simulate(manifest: RunManifest, spec: Optional[SimSpec] = None) -> Dict[str, object]:
    """Carnet synthétique et vérité terrain dans out_dir"""
    out = _output_dir(manifest)
    if spec is None:
        spec = SimSpec.load(manifest.sim_spec) if manifest.sim_spec else SimSpec(seed=manifest.seed)
    records, truth = simulate(spec)
    write_logbook(records, out / "logbook.csv")
    write_ground_truth(spec, truth, out / "ground_truth.json")
    (out / "sim_spec.json").write_text(spec.model_dump_json(indent=2) + "\n", encoding="utf-8")
    manifest.model_copy(update={"sim_spec": out / "sim_spec.json"}).save(out, "simulate")
    return {"records": records, "truth": truth, "spec": spec}


def grade_frequencies(records: List[AscentRecord]) -> Dict[float, float]:
    """Histogramme des réussites par cotation (entrée du mode community)"""
    values = np.array([r.grade.value for r in records if r.success])
    grades, counts = np.unique(values, return_counts=True)
    return {float(g): float(c) for g, c in zip(grades, counts)}
