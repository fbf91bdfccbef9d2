#!/usr/bin/env python3
"""
Point d'entrée principal : python -m src.main <commande> [options]

Commandes : prepare, fit, regress, simulate, grades, serve.
Code de sortie : 0 si tout va bien, 2 pour une entrée invalide, 3 pour un
échec numérique, 1 pour toute autre erreur.
"""
import argparse
import asyncio
import json
import logging
import sys
from typing import Any, Dict, List, Optional

import pandas as pd

from .commands import cmd_fit, cmd_prepare, cmd_regress, cmd_simulate
from .config import Settings, load_settings
from .errors import ClimbingGradesError, InputError
from .grades import (
    ANALYSIS_SYSTEMS,
    GradeSystem,
    convert_for_report,
    format_grade,
    ladder_table,
    parse_grade,
)
from .logging_config import setup_logging
from .manifest import RunManifest, build_manifest, load_manifest

logger = logging.getLogger(__name__)

MANIFEST_COMMANDS = ("prepare", "fit", "regress", "simulate")


def _manifest_options() -> argparse.ArgumentParser:
    """Options partagées par les commandes pilotées par un manifeste"""
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--manifest", help="Manifeste JSON ; les options le surchargent")
    parent.add_argument("--input", action="append", dest="inputs", help="Carnet d'ascensions (répétable)")
    parent.add_argument("--format", dest="input_format", choices=["delimited-table", "json-records"])
    parent.add_argument("--system", choices=[s.value for s in ANALYSIS_SYSTEMS])
    parent.add_argument("--game", choices=["attempt", "session"])
    parent.add_argument("--window-start", help="AAAA-MM-JJ, inclus")
    parent.add_argument("--window-end", help="AAAA-MM-JJ, exclu")
    parent.add_argument("--min-ascents", type=int)
    parent.add_argument("--min-failures", type=int)
    parent.add_argument("--max-climbers", type=int)
    parent.add_argument("--styles", help="Styles retenus, séparés par des virgules")
    parent.add_argument("--on-unknown", choices=["warn", "fail"])
    parent.add_argument("--bouldering", action="store_true", default=None)
    parent.add_argument("--chains", type=int)
    parent.add_argument("--warmup", type=int)
    parent.add_argument("--samples", type=int)
    parent.add_argument("--seed", type=int)
    parent.add_argument("--fixed-m", type=float)
    parent.add_argument("--threads", type=int)
    parent.add_argument("--out", dest="out_dir")
    parent.add_argument("--country")
    parent.add_argument("--style")
    parent.add_argument("--mode", dest="regress_mode", choices=["climber", "community"])
    parent.add_argument("--histogram")
    parent.add_argument("--grade-min", type=float)
    parent.add_argument("--grade-max", type=float)
    parent.add_argument("--spec", dest="sim_spec", help="Spécification de simulation (JSON)")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="climbing-grades",
        description="Inférence de la pente des échelles de cotation à partir de carnets d'ascensions",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    shared = _manifest_options()
    commands.add_parser("prepare", parents=[shared], help="Lecture, agrégation et pagination")
    commands.add_parser("fit", parents=[shared], help="Échantillonnage HMC et résumés")
    commands.add_parser("regress", parents=[shared], help="Régressions log-linéaires")
    commands.add_parser("simulate", parents=[shared], help="Carnet synthétique")

    grades = commands.add_parser("grades", help="Échelles de cotation")
    grades.add_argument("--dump", action="store_true", help="Écrit la table des échelles (CSV)")
    grades.add_argument("--convert", metavar="TOKEN")
    grades.add_argument("--from", dest="source", default="ewbank",
                        choices=[s.value for s in ANALYSIS_SYSTEMS])
    grades.add_argument("--to", dest="target", choices=[s.value for s in GradeSystem])

    commands.add_parser("serve", help="Serveur MCP sur stdio")
    return parser


def manifest_from_args(args: argparse.Namespace, settings: Settings) -> RunManifest:
    """Manifeste de base (fichier ou défauts) surchargé par les options données"""
    base: Dict[str, Any] = load_manifest(args.manifest).model_dump(mode="json") if args.manifest else {
        "threads": settings.threads,
        "out_dir": str(settings.out_dir),
    }
    overrides = {
        key: getattr(args, key)
        for key in ("inputs", "input_format", "system", "game", "window_start", "window_end",
                    "min_ascents", "min_failures", "max_climbers", "on_unknown", "bouldering",
                    "seed", "threads", "out_dir", "country", "style", "regress_mode",
                    "histogram", "grade_min", "grade_max", "sim_spec")
        if getattr(args, key) is not None
    }
    if args.styles is not None:
        overrides["styles"] = [s.strip() for s in args.styles.split(",") if s.strip()]
    base.update(overrides)

    sampler = dict(base.get("sampler", {}))
    for flag, field in (("chains", "chains"), ("warmup", "warmup_iters"), ("samples", "sampling_iters")):
        if getattr(args, flag) is not None:
            sampler[field] = getattr(args, flag)
    base["sampler"] = sampler
    if args.fixed_m is not None:
        base["model"] = {**base.get("model", {}), "fixed_m": args.fixed_m}
    return build_manifest(base)


def run_grades(args: argparse.Namespace) -> None:
    if args.dump:
        pd.DataFrame(ladder_table()).to_csv(sys.stdout, index=False)
        return
    if not args.convert:
        raise InputError("grades : --dump ou --convert TOKEN attendu")
    grade = parse_grade(args.convert, GradeSystem(args.source))
    targets: List[GradeSystem] = [GradeSystem(args.target)] if args.target else list(GradeSystem)
    correspondences: Dict[str, Optional[str]] = {}
    for target in targets:
        converted = convert_for_report(grade, target)
        correspondences[target.value] = format_grade(converted) if converted else None
    print(json.dumps({
        "token": args.convert,
        "system": grade.system.value,
        "value": grade.value,
        "correspondences": correspondences,
    }, indent=2, ensure_ascii=False))


def run_command(args: argparse.Namespace, settings: Settings) -> None:
    if args.command == "grades":
        run_grades(args)
        return
    if args.command == "serve":
        from .server import run_stdio_server
        asyncio.run(run_stdio_server())
        return

    manifest = manifest_from_args(args, settings)
    if args.command == "prepare":
        dataset, _ = cmd_prepare(manifest)
        logger.info(f"Jeu préparé : {dataset.n_climbers} grimpeurs, {dataset.n_ascents} ascensions")
    elif args.command == "fit":
        result = cmd_fit(manifest)
        print(result["summary_row"].to_csv(index=False, float_format="%.2f"), end="")
    elif args.command == "regress":
        cmd_regress(manifest)
    elif args.command == "simulate":
        result = cmd_simulate(manifest)
        logger.info(f"Carnet synthétique : {len(result['records'])} ascensions")


def main(argv: Optional[List[str]] = None) -> int:
    """Fonction principale de la CLI ; renvoie le code de sortie"""
    args = build_parser().parse_args(argv)
    settings = load_settings()
    setup_logging(settings)

    try:
        run_command(args, settings)
    except ClimbingGradesError as e:
        logger.error(f"{type(e).__name__} : {e}")
        return e.exit_code
    except KeyboardInterrupt:
        logger.info("Arrêt demandé par l'utilisateur")
        return 1
    except Exception as e:
        logger.exception(f"Erreur inattendue : {e}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
