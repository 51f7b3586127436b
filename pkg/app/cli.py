# app/cli.py
"""
CLI del pipeline: decompose | summarize | categorize | normalize | evaluate | report

Ejemplos de uso:
  python -m app.cli decompose --root proyectos/quadcopter
  python -m app.cli decompose --root proyectos/quadcopter --weights 1,0,0
  python -m app.cli summarize --root proyectos/quadcopter --model codestral-22b --model deepseek-coder
  python -m app.cli summarize --root proyectos/quadcopter --source normalized
  python -m app.cli evaluate --root proyectos/quadcopter --mock-endpoint http://localhost:8000/v1
"""
import argparse
import asyncio
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import httpx

from app.core.config import get_settings, load_project_config
from app.core.errors import ConfigError, FirmwareAnalysisError
from app.services.pipeline import PipelineRunner

logger = logging.getLogger(__name__)

COMMANDS = ("decompose", "summarize", "categorize", "normalize", "evaluate", "report")


def parse_weights(value: str) -> Dict[str, float]:
    """"alpha,beta,gamma" -> dict para GraphWeightsConfig"""
    parts = [p.strip() for p in value.split(",")]
    if len(parts) != 3:
        raise ConfigError(f"--weights espera tres coeficientes alpha,beta,gamma (recibido {value!r})")
    try:
        alpha, beta, gamma = (float(p) for p in parts)
    except ValueError as e:
        raise ConfigError(f"--weights: coeficiente no numérico en {value!r}") from e
    return {"alpha": alpha, "beta": beta, "gamma": gamma}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="firmware-modules",
        description="Descomposición de firmware ARM en módulos, resúmenes y categorías con LLM",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__,
    )
    parser.add_argument("command", choices=COMMANDS, help="Etapa a ejecutar")
    parser.add_argument("--root", type=Path, default=Path("."),
                        help="Directorio raíz del proyecto (default: .)")
    parser.add_argument("--config", type=Path,
                        help="Archivo de proyecto (default: <root>/project.toml o project.json)")
    parser.add_argument("--device", type=str, help="Nombre del dispositivo")
    parser.add_argument("--weights", type=str, help="Coeficientes SG,DRG,CG (ej: 1,0,0)")
    parser.add_argument("--model", action="append", dest="models",
                        help="Modelo de chat (repetible; default: llm.chat_models)")
    parser.add_argument("--source", choices=("decompiled", "normalized"), default="decompiled",
                        help="Texto a resumir/categorizar (default: decompiled)")
    parser.add_argument("--mock-endpoint", type=str, help="URL base de un endpoint de prueba")
    parser.add_argument("--verbose", action="store_true",
                        help="Logs de debug, incluido el texto de los prompts")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides: Dict[str, Any] = {"device": args.device}
    if args.weights:
        overrides["weights"] = parse_weights(args.weights)
    llm: Dict[str, Any] = {}
    if args.mock_endpoint:
        llm["base_url"] = args.mock_endpoint
    if args.models:
        llm["chat_models"] = args.models
    if llm:
        overrides["llm"] = llm
    return overrides


def _configure_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else getattr(logging, get_settings().LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    logging.getLogger().setLevel(level)


def run(args: argparse.Namespace, transport: Optional[httpx.AsyncBaseTransport] = None) -> PipelineRunner:
    config = load_project_config(args.root, args.config, _overrides(args))
    runner = PipelineRunner(config, transport=transport, verbose=args.verbose)

    with runner.store.lock():
        runner.store.ensure_layout()
        if args.command == "decompose":
            runner.decompose()
        elif args.command == "normalize":
            runner.normalize()
        elif args.command == "summarize":
            asyncio.run(runner.summarize(args.models, args.source))
        elif args.command == "categorize":
            asyncio.run(runner.categorize(args.models, args.source))
        elif args.command == "evaluate":
            asyncio.run(runner.evaluate(args.models))
        elif args.command == "report":
            runner.report()
    return runner


def main(argv: Optional[List[str]] = None, transport: Optional[httpx.AsyncBaseTransport] = None) -> int:
    """Devuelve el código de salida: 0 ok, 1 entrada/interno, 2 config, 3 artefacto faltante, 4 endpoint"""
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    _configure_logging(args.verbose)
    logger.info(f"🚀 {args.command} en {args.root}")

    try:
        run(args, transport)
    except FirmwareAnalysisError as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.exception(f"❌ Error inesperado en {args.command}: {e}")
        return 1

    logger.info(f"✅ {args.command} completado")
    return 0


if __name__ == "__main__":
    sys.exit(main())
