"""
Точка входа CLI dynpath.

Содержит разбор аргументов, настройку логирования и диспетчеризацию
подкоманд simulate, fit, effects, bootstrap и oracle.
"""

from __future__ import annotations

import argparse
import logging
import sys

from pydantic import ValidationError

from dynpath import commands
from dynpath.errors import INVALID_INPUT, DynPathError
from dynpath.schemas import (
    BootstrapRequest,
    Contrast,
    EffectsRequest,
    FitRequest,
    OracleRequest,
    Regime,
    SimulateRequest,
)

logger = logging.getLogger("dynpath")

TABLES_HELP = """\
Формат таблиц (CSV с заголовком, одна строка на момент сетки или скачка):
  effects:   time, chde, chie, chte, sde, sie, ste, [chte_nomed,] mediator_coef, mediator_surv
             [+ chde_corr, chie_corr, chte_corr, sde_corr, sie_corr, ste_corr,
                mediator_coef_corr при --kappa]
  bootstrap: time, затем для каждой кривой <name>, <name>_lower, <name>_upper
             (chde, chie, chte, sde, sie, ste, mediator_coef [+ *_corr при --kappa])
  gamma:     visit, time, gamma, gamma_lower, gamma_upper (bootstrap --gamma-out)
  oracle:    time, chde, chie, chte, sde, sie, ste, mc_sde, mc_sde_se, mc_sie, mc_sie_se

chte_nomed: общий эффект из модели исхода без медиатора.
"""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dynpath",
        description="Анализ динамических путей: медиация в аддитивной модели рисков",
        epilog=TABLES_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="подробный лог")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    simulate = sub.add_parser("simulate", help="симулировать когорту")
    simulate.add_argument("--params", help="JSON с параметрами симуляции")
    simulate.add_argument("--preset", choices=["sprint"], help="встроенный набор параметров")
    simulate.add_argument("--n", type=int, required=True)
    simulate.add_argument("--seed", type=int, required=True)
    simulate.add_argument("--out", required=True, help="каталог для subjects.csv, mediators.csv, ingestion.json")
    simulate.add_argument("--regime", choices=["observational", "intervened"], default="observational")
    simulate.add_argument("--a-direct", type=float)
    simulate.add_argument("--a-mediator", type=float)
    simulate.add_argument("--workers", type=int, default=1)

    fit = sub.add_parser("fit", help="оценить аддитивную модель и регрессии медиатора")
    fit.add_argument("--data", required=True, help="каталог когорты")
    fit.add_argument("--out", required=True, help="JSON с оценками")
    fit.add_argument("--carry-forward", action="store_true", help="заполнять пропуски медиатора (LOCF)")

    effects = sub.add_parser("effects", help="таблица эффектов по файлу оценки")
    effects.add_argument("--fit", required=True)
    effects.add_argument("--contrast", default="1,0", help="a,a* (по умолчанию 1,0)")
    effects.add_argument("--kappa", type=float, help="надёжность медиатора для поправки на ошибку измерения")
    effects.add_argument("--out")

    bootstrap = sub.add_parser("bootstrap", help="бутстреп-интервалы эффектов")
    bootstrap.add_argument("--data", required=True)
    bootstrap.add_argument("--contrast", default="1,0")
    bootstrap.add_argument("--B", dest="replicates", type=int, default=200)
    bootstrap.add_argument("--seed", type=int, required=True)
    bootstrap.add_argument("--level", type=float, default=0.95)
    bootstrap.add_argument("--grid", help="времена через запятую; по умолчанию моменты событий")
    bootstrap.add_argument("--kappa", type=float)
    bootstrap.add_argument("--carry-forward", action="store_true")
    bootstrap.add_argument("--workers", type=int, default=1)
    bootstrap.add_argument("--out")
    bootstrap.add_argument("--gamma-out", help="CSV с интервалами γ̂ по визитам")

    oracle = sub.add_parser("oracle", help="точные и Монте-Карло эффекты по параметрам")
    oracle.add_argument("--params")
    oracle.add_argument("--preset", choices=["sprint"])
    oracle.add_argument("--seed", type=int, required=True)
    oracle.add_argument("--n-mc", type=int, default=100_000)
    oracle.add_argument("--grid")
    oracle.add_argument("--workers", type=int, default=1)
    oracle.add_argument("--out")
    return parser


def _request(args: argparse.Namespace):
    if args.subcommand == "simulate":
        regime = (
            Regime.intervened(args.a_direct, args.a_mediator)
            if args.regime == "intervened"
            else Regime.observational()
        )
        return SimulateRequest(
            params=args.params, preset=args.preset, n=args.n, seed=args.seed, out=args.out,
            regime=regime, workers=args.workers,
        )
    if args.subcommand == "fit":
        return FitRequest(data=args.data, out=args.out, carry_forward=args.carry_forward)
    if args.subcommand == "effects":
        return EffectsRequest(fit=args.fit, out=args.out, contrast=Contrast.parse(args.contrast), kappa=args.kappa)
    if args.subcommand == "bootstrap":
        return BootstrapRequest(
            data=args.data, out=args.out, contrast=Contrast.parse(args.contrast), replicates=args.replicates,
            seed=args.seed, level=args.level, grid=args.grid, kappa=args.kappa,
            carry_forward=args.carry_forward, workers=args.workers, gamma_out=args.gamma_out,
        )
    return OracleRequest(
        params=args.params, preset=args.preset, out=args.out, seed=args.seed, n_mc=args.n_mc,
        grid=args.grid, workers=args.workers,
    )


HANDLERS = {
    "simulate": commands.simulate,
    "fit": commands.fit,
    "effects": commands.effects,
    "bootstrap": commands.bootstrap,
    "oracle": commands.oracle,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        payload = _request(args)
        logger.debug("Подкоманда %s: %s", payload.subcommand, payload.model_dump(mode="json"))
        return HANDLERS[payload.subcommand](payload)
    except ValidationError as exc:
        first = exc.errors()[0]
        location = ".".join(str(part) for part in first.get("loc", ()))
        print(f"dynpath {args.subcommand}: некорректные аргументы: {location} {first['msg']}".rstrip(), file=sys.stderr)
        return INVALID_INPUT
    except ValueError as exc:
        print(f"dynpath {args.subcommand}: {exc}", file=sys.stderr)
        return INVALID_INPUT
    except DynPathError as exc:
        print(f"dynpath {args.subcommand}: {exc.detail}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
