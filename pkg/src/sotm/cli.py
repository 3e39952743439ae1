"""Command-line entry point: train, tune, metrics and render subcommands.

Runs are reproducible: every default is resolved into an effective-config
file written next to the outputs, all output files are written atomically,
and a failed run removes whatever it managed to write.

Exit codes: 0 success, 1 user or input error, 2 internal invariant violation.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

from .autotune import TuneGrid, auto_train, verify_tuning
from .core import ModelFormatError, SotmModel, TrainConfig, train_sotm
from .datacube import DataCube, DataError, load_csv, percentile_normalize
from .quality import QualityReport, aggregate
from .report import quality_curves_svg
from .viz import feature_plane, project_units, projection_csv, render_map_svg, render_plane_svg, unit_colors

SEED_ENV_VAR = "SOTM_SEED"

MODEL_FILE = "model.json"
TUNE_FILE = "tune.json"
METRICS_FILE = "metrics.csv"
CURVES_FILE = "metrics.svg"
CONFIG_FILE = "effective_config.txt"


@dataclass
class RunConfig:
    """Merged settings of one run: defaults, then config file, then flags."""

    input: str | None = None
    units: int = 7
    steps: int = 10
    sigma: float | None = None
    grid: str | None = None
    normalize: str = "none"
    out: str = "out"
    sigma_decay: str = "linear"
    sigma_floor: float = 0.05
    pca_span: float = 2.0
    seed: int = 0
    classical_distortion: bool = False
    weighted_metrics: bool = False

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                value = ""
            elif isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"


_FIELD_PARSERS = {
    "input": str,
    "units": int,
    "steps": int,
    "sigma": float,
    "grid": str,
    "normalize": str,
    "out": str,
    "sigma_decay": str,
    "sigma_floor": float,
    "pca_span": float,
    "seed": int,
    "classical_distortion": None,  # bool
    "weighted_metrics": None,
}


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def read_config_file(path: str | Path) -> dict:
    """Parse a flat ``key = value`` file; '#' starts a comment."""
    values: dict = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}: line {line_no}: expected 'key = value'")
        key, _, raw = stripped.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in _FIELD_PARSERS:
            raise ValueError(f"{path}: line {line_no}: unknown key {key!r}")
        if raw == "":
            continue  # empty value means unset, as to_text writes for None
        parser = _FIELD_PARSERS[key]
        try:
            values[key] = _parse_bool(raw) if parser is None else parser(raw)
        except ValueError as exc:
            raise ValueError(f"{path}: line {line_no}: {exc}") from None
    return values


def merge_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        for key, value in read_config_file(args.config).items():
            setattr(cfg, key, value)
    for f in fields(RunConfig):
        flag_value = getattr(args, f.name, None)
        if flag_value is not None:
            setattr(cfg, f.name, flag_value)
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            cfg.seed = int(env_seed)
        except ValueError:
            raise ValueError(f"{SEED_ENV_VAR} must be an integer, got {env_seed!r}")
    return cfg


# ---------------------------------------------------------------------------
# Output handling
# ---------------------------------------------------------------------------

def _write_atomic(path: Path, payload: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def _emit(out_dir: Path, outputs: dict[str, bytes]) -> None:
    """Write every output or none: on failure, remove what was written."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    try:
        for name, payload in outputs.items():
            path = out_dir / name
            _write_atomic(path, payload)
            written.append(path)
    except BaseException:
        for path in written:
            path.unlink(missing_ok=True)
        raise


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _load_cube(cfg: RunConfig) -> DataCube:
    if not cfg.input:
        raise ValueError("no input file given (use --input or the config file)")
    if not Path(cfg.input).is_file():
        raise ValueError(f"input file not found: {cfg.input}")
    cube = load_csv(cfg.input)
    if cfg.normalize != "none":
        cube = percentile_normalize(cube, cfg.normalize)
    return cube


def _train_config(cfg: RunConfig, sigma: float | None) -> TrainConfig:
    return TrainConfig(
        n_units=cfg.units,
        steps=cfg.steps,
        sigma=sigma,
        sigma_decay=cfg.sigma_decay,
        sigma_floor=cfg.sigma_floor,
        pca_span=cfg.pca_span,
        seed=cfg.seed,
    )


def _parse_grid(cfg: RunConfig) -> TuneGrid:
    if cfg.grid is None:
        return TuneGrid.default(cfg.units)
    try:
        candidates = [float(v) for v in cfg.grid.split(",") if v.strip()]
    except ValueError:
        raise ValueError(f"invalid grid {cfg.grid!r}: expected comma-separated numbers")
    return TuneGrid(candidates=candidates)


def _report_outputs(report: QualityReport) -> dict[str, bytes]:
    return {
        METRICS_FILE: report.to_csv().encode("utf-8"),
        CURVES_FILE: quality_curves_svg(report),
    }


def cmd_train(args: argparse.Namespace) -> int:
    cfg = merge_config(args)
    cube = _load_cube(cfg)
    if cfg.sigma is None:
        cfg.sigma = cfg.units / 4.0
    model = train_sotm(cube, _train_config(cfg, cfg.sigma))
    report = aggregate(model, cube, cfg.classical_distortion, cfg.weighted_metrics)
    outputs = {
        MODEL_FILE: model.dumps().encode("utf-8"),
        CONFIG_FILE: cfg.to_text().encode("utf-8"),
        **_report_outputs(report),
    }
    _emit(Path(cfg.out), outputs)
    return 0


def cmd_tune(args: argparse.Namespace) -> int:
    cfg = merge_config(args)
    cube = _load_cube(cfg)
    grid = _parse_grid(cfg)
    config = _train_config(cfg, None)
    model, tune_report, report = auto_train(cube, config, grid)
    outputs = {
        MODEL_FILE: model.dumps().encode("utf-8"),
        TUNE_FILE: tune_report.dumps().encode("utf-8"),
        CONFIG_FILE: cfg.to_text().encode("utf-8"),
        **_report_outputs(report),
    }
    _emit(Path(cfg.out), outputs)
    if args.verify:
        problems = verify_tuning(cube, config, grid, model, tune_report)
        if problems:
            for problem in problems:
                print(f"verify: {problem}", file=sys.stderr)
            return 2
        print("verify: chosen sigma attains the grid minimum on every slice")
    return 0


def cmd_metrics(args: argparse.Namespace) -> int:
    cfg = merge_config(args)
    model = SotmModel.load(args.model)
    cube = _load_cube(cfg)
    report = aggregate(model, cube, cfg.classical_distortion, cfg.weighted_metrics)
    outputs = {
        CONFIG_FILE: cfg.to_text().encode("utf-8"),
        **_report_outputs(report),
    }
    _emit(Path(cfg.out), outputs)
    return 0


def cmd_render(args: argparse.Namespace) -> int:
    model = SotmModel.load(args.model)
    if args.what == "map":
        payload = render_map_svg(model, unit_colors(model))
    elif args.what == "plane":
        if args.index is None:
            raise ValueError("render plane needs a 1-based feature index")
        if not 1 <= args.index <= model.dim:
            raise ValueError(
                f"plane index {args.index} out of range [1, {model.dim}]"
            )
        plane = feature_plane(model, args.index - 1)
        payload = render_plane_svg(model, plane)
    else:  # topology
        payload = projection_csv(model, project_units(model))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_atomic(out, payload.encode("utf-8"))
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_config_flags(parser: argparse.ArgumentParser, with_sigma: bool, with_grid: bool) -> None:
    parser.add_argument("--input", help="input CSV (entity,time[,weight],features...)")
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--units", type=int, help="units per slice (M)")
    parser.add_argument("--steps", type=int, help="batch steps per slice")
    if with_sigma:
        parser.add_argument("--sigma", type=float, help="fixed start radius per slice")
    if with_grid:
        parser.add_argument("--grid", help="comma-separated candidate radii")
    parser.add_argument(
        "--normalize", choices=("none", "expanding", "full"),
        help="per-entity percentile scaling mode",
    )
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--sigma-decay", dest="sigma_decay", choices=("linear", "constant"))
    parser.add_argument("--sigma-floor", dest="sigma_floor", type=float)
    parser.add_argument("--pca-span", dest="pca_span", type=float)
    parser.add_argument("--seed", type=int)
    parser.add_argument(
        "--classical-distortion", dest="classical_distortion",
        action="store_const", const=True, default=None,
        help="report the squared textbook distortion instead",
    )
    parser.add_argument(
        "--weighted-metrics", dest="weighted_metrics",
        action="store_const", const=True, default=None,
        help="weight per-slice quality averages by observation weight",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sotm",
        description="Visual dynamic clustering with time-chained 1-D batch SOMs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train with a fixed radius policy")
    _add_config_flags(p_train, with_sigma=True, with_grid=False)
    p_train.set_defaults(func=cmd_train)

    p_tune = sub.add_parser("tune", help="train with a tuned radius per slice")
    _add_config_flags(p_tune, with_sigma=False, with_grid=True)
    p_tune.add_argument(
        "--verify", action="store_true",
        help="exhaustively recheck that each chosen radius attains the grid minimum",
    )
    p_tune.set_defaults(func=cmd_tune)

    p_metrics = sub.add_parser("metrics", help="recompute quality measures for a model")
    p_metrics.add_argument("--model", required=True, help="model.json path")
    _add_config_flags(p_metrics, with_sigma=False, with_grid=False)
    p_metrics.set_defaults(func=cmd_metrics)

    p_render = sub.add_parser("render", help="render an artifact from a model")
    p_render.add_argument("--model", required=True, help="model.json path")
    p_render.add_argument("what", choices=("map", "plane", "topology"))
    p_render.add_argument("index", nargs="?", type=int,
                          help="1-based feature index (plane only)")
    p_render.add_argument("--out", required=True, help="output file path")
    p_render.set_defaults(func=cmd_render)

    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; that code is reserved for
        # internal invariant violations here, so remap to the user-error code
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except (DataError, ModelFormatError, ValueError, IndexError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
