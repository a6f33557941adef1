"""
Main entry point for cloudfill

コマンドラインエントリポイント（argparseサブコマンド）

実装機能:
- reconstruct: linear / damped / mc による雲欠損の再構成
- cloudsynth: 合成雲の重畳とホールドアウト（holdout.bin）生成（--min-component で小領域除去）
- evaluate: syn / all 指標・バンド別PSNR・雲量比ビン統計のCSV出力
- index: NDVI / NDWI / NBR 単バンド指数ラスタ（--series で日別平均のCSV）
- simulate: 埋め込み低ランク真値の合成シーン（truth / observed / mask）

全コマンドは出力先に manifest.json（RunManifest）を書き出す。
終了コード: 0 成功 / 2 設定・入力エラー / 3 ソルバー実行時エラー（Fail-Fast）
"""

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

from app.core.error_handler import EXIT_OK, handle_command_error
from app.core.logger import LogLevel, SolverMethod, SystemLog, close_logger, get_logger
from app.core.report import (
    EvalEntry,
    evaluate_entries,
    load_entry_specs,
    write_index_series_csv,
    write_report_csv,
)
from app.core.settings import DampedConfig, MaskConfig, MCConfig, get_settings
from app.evaluation.metrics import IndexType, bin_edges, compute_index, index_series
from app.masks.ops import cloud_ratio, filter_small_components_stack, synthesize_holdout
from app.solvers.completion import matrix_complete
from app.solvers.damped import count_empty_series, damped_interpolate, linear_interp_oracle
from app.solvers.temporal import make_diff_operator
from app.solvers.trace import SolverTrace
from app.stack.io import (
    read_holdout,
    read_stack,
    sample_library_mask,
    write_holdout,
    write_index,
    write_mask,
    write_stack,
)
from app.stack.model import Modality, matricize, reconstructed_scene
from app.synth.generator import SynthSpec, synth_cloud_blobs, synth_scene

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"


class RunManifest(BaseModel):
    """実行記録（出力と一緒に保存）"""
    command: str
    config: Dict[str, Any] = Field(default_factory=dict)
    inputs: Dict[str, str] = Field(default_factory=dict)
    outputs: Dict[str, str] = Field(default_factory=dict)
    seed: Optional[int] = None
    duration_ms: Optional[float] = None
    trace: Optional[Dict[str, Any]] = None


def write_manifest(manifest: RunManifest, directory: Path) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / MANIFEST_FILE
    text = json.dumps(manifest.model_dump(mode="json"), ensure_ascii=False, indent=2, sort_keys=True)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def _overrides(**values: Any) -> Dict[str, Any]:
    """指定されたフラグのみを設定の上書きとして残す"""
    return {key: value for key, value in values.items() if value is not None}


def _trace_summary(trace: SolverTrace) -> Dict[str, Any]:
    return {
        "method": trace.method.value,
        "iterations": trace.iterations,
        "final_objective": trace.final_objective,
        "converged": trace.converged,
        "degenerate": trace.degenerate,
        "empty_series": trace.empty_series,
    }


# ---- コマンド ----

def cmd_reconstruct(args: argparse.Namespace) -> Tuple[RunManifest, Path]:
    """雲欠損の再構成"""
    method = SolverMethod(args.method)
    config: Dict[str, Any] = {"method": method.value}
    if method is SolverMethod.DAMPED:
        damped_cfg = DampedConfig(**_overrides(
            alpha=args.alpha,
            max_iters=args.max_iters,
            rel_tol=args.rel_tol,
            optical_only=args.optical_only,
        ))
        config.update(damped_cfg.model_dump(mode="json"))
    elif method is SolverMethod.MC:
        mc_cfg = MCConfig(**_overrides(
            rank=args.rank,
            alpha=args.alpha,
            max_iters=args.max_iters,
            rel_tol=args.rel_tol,
        ))
        config.update(mc_cfg.model_dump(mode="json"))

    scene = read_stack(args.input)
    mat = matricize(scene)
    lower, upper = mat.row_bounds()
    filled = set(scene.clear_mask)

    started = time.perf_counter()
    if method is SolverMethod.LINEAR:
        X = linear_interp_oracle(mat.Y, mat.M, time_steps=mat.T)
        trace = SolverTrace(
            method=method,
            converged=True,
            empty_series=count_empty_series(mat.M, time_steps=mat.T),
            degenerate=not mat.M.any(),
        )
    elif method is SolverMethod.DAMPED:
        selector = mat.optical_rows if damped_cfg.optical_only else None
        X, trace = damped_interpolate(
            mat.Y, mat.M, damped_cfg, time_steps=mat.T, row_selector=selector
        )
        if damped_cfg.optical_only:
            filled = {Modality.OPTICAL}
    else:
        op = make_diff_operator(mat.T, mc_cfg.alpha)
        X, trace = matrix_complete(mat.Y, mat.M, mc_cfg, op, bounds=(lower, upper))
    duration_ms = (time.perf_counter() - started) * 1000
    get_logger().log_solver(trace.to_solver_log(duration_ms))

    X = np.clip(X, lower[:, None], upper[:, None])
    write_stack(reconstructed_scene(X, scene, filled), args.output)

    manifest = RunManifest(
        command="reconstruct",
        config=config,
        inputs={"input": str(args.input)},
        outputs={"output": str(args.output)},
        seed=mc_cfg.seed if method is SolverMethod.MC else None,
        trace=_trace_summary(trace),
    )
    return manifest, Path(args.output)


def cmd_cloudsynth(args: argparse.Namespace) -> Tuple[RunManifest, Path]:
    """合成雲の重畳とホールドアウト生成"""
    synth_cfg = get_settings().synth
    seed = synth_cfg.seed if args.seed is None else args.seed
    target = synth_cfg.target_ratio if args.target_ratio is None else args.target_ratio

    scene = read_stack(args.input)
    if args.blobs:
        sampled = synth_cloud_blobs(seed, scene.H, scene.W, scene.T, target)
        source = "blobs"
    else:
        sampled = sample_library_mask(args.masklib, scene.T, scene.H, scene.W, seed)
        source = str(args.masklib)
    if args.min_component is not None:
        mask_cfg = MaskConfig(min_component_size=args.min_component)
        sampled = filter_small_components_stack(sampled, cfg=mask_cfg)

    holdout = synthesize_holdout(scene.clear_mask[Modality.OPTICAL], sampled)
    output = Path(args.output)
    write_stack(scene.with_optical_mask(holdout.combined), output)
    write_holdout(holdout.holdout, output)

    manifest = RunManifest(
        command="cloudsynth",
        config={
            "source": source,
            "target_ratio": target if args.blobs else None,
            "min_component": args.min_component,
            "holdout_pixels": holdout.holdout_count,
            "cloud_ratio_original": cloud_ratio(holdout.original),
            "cloud_ratio_combined": cloud_ratio(holdout.combined),
        },
        inputs={"input": str(args.input)},
        outputs={"output": str(output), "holdout": str(output / "holdout.bin")},
        seed=seed,
    )
    return manifest, output


def _load_entries(args: argparse.Namespace) -> Tuple[List[EvalEntry], Dict[str, str]]:
    if args.entries:
        entries = []
        for spec in load_entry_specs(args.entries):
            truth = read_stack(spec.truth)
            entries.append(EvalEntry(
                pred=read_stack(spec.pred),
                truth=truth,
                holdout=read_holdout(spec.holdout, (truth.T, truth.H, truth.W)),
                cloud_ratio=spec.cloud_ratio,
            ))
        return entries, {"entries": str(args.entries)}

    truth = read_stack(args.truth)
    entry = EvalEntry(
        pred=read_stack(args.pred),
        truth=truth,
        holdout=read_holdout(args.holdout, (truth.T, truth.H, truth.W)),
    )
    inputs = {"pred": str(args.pred), "truth": str(args.truth), "holdout": str(args.holdout)}
    return [entry], inputs


def cmd_evaluate(args: argparse.Namespace) -> Tuple[RunManifest, Path]:
    """評価指標の計算とCSV出力"""
    entries, inputs = _load_entries(args)
    metrics_cfg = get_settings().metrics
    if args.bins is not None:
        metrics_cfg = metrics_cfg.model_validate({**metrics_cfg.model_dump(), "bin_count": args.bins})
    edges = bin_edges(metrics_cfg)

    report = evaluate_entries(entries, args.method, edges)
    written = write_report_csv(report, args.out_dir)

    manifest = RunManifest(
        command="evaluate",
        config={
            "method": args.method,
            "bin_edges": [float(e) for e in edges],
            "entries": len(entries),
        },
        inputs=inputs,
        outputs={name: str(path) for name, path in written.items()},
    )
    return manifest, Path(args.out_dir)


def cmd_index(args: argparse.Namespace) -> Tuple[RunManifest, Path]:
    """正規化差分指数ラスタ、または日別平均時系列の出力"""
    scene = read_stack(args.input)
    if args.series:
        index_type = IndexType(args.type)
        points = index_series(scene, index_type)
        path = write_index_series_csv(points, index_type.value, args.output)
        manifest = RunManifest(
            command="index",
            config={"type": index_type.value, "series": True},
            inputs={"input": str(args.input)},
            outputs={"series": str(path)},
        )
        return manifest, Path(args.output)

    raster = compute_index(scene, IndexType(args.type), args.day)
    write_index(raster, args.output)

    manifest = RunManifest(
        command="index",
        config={"type": raster.index_type, "day": raster.day},
        inputs={"input": str(args.input)},
        outputs={"output": str(args.output)},
    )
    return manifest, Path(args.output)


def cmd_simulate(args: argparse.Namespace) -> Tuple[RunManifest, Path]:
    """合成シーンの生成"""
    dims = {}
    if args.dims is not None:
        dims = dict(zip(("T", "C1", "C2", "H", "W"), args.dims))
    spec = SynthSpec.from_config(**_overrides(
        seed=args.seed,
        rank=args.rank,
        noise_sigma=args.noise,
        target_cloud_ratio=args.target_ratio,
    ), **dims)
    result = synth_scene(spec)

    out_dir = Path(args.out_dir)
    outputs = {name: out_dir / name for name in ("truth", "observed", "mask")}
    write_stack(result.truth, outputs["truth"])
    write_stack(result.observed, outputs["observed"])
    write_mask(result.cloud_mask, outputs["mask"])

    manifest = RunManifest(
        command="simulate",
        config=spec.model_dump(mode="json"),
        outputs={name: str(path) for name, path in outputs.items()},
        seed=spec.seed,
    )
    return manifest, out_dir


COMMANDS: Dict[str, Callable[[argparse.Namespace], Tuple[RunManifest, Path]]] = {
    "reconstruct": cmd_reconstruct,
    "cloudsynth": cmd_cloudsynth,
    "evaluate": cmd_evaluate,
    "index": cmd_index,
    "simulate": cmd_simulate,
}


# ---- 引数解析 ----

def _parse_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {value!r}")


def _parse_dims(value: str) -> List[int]:
    try:
        dims = [int(part) for part in value.split(",")]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"dims must be integers: {value!r}") from e
    if len(dims) != 5:
        raise argparse.ArgumentTypeError("dims must be T,C1,C2,H,W")
    return dims


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cloudfill",
        description="Cloud-gap reconstruction for optical + SAR image stacks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reconstruct", help="fill cloudy pixels of a stack")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--method", choices=[m.value for m in SolverMethod], default=SolverMethod.MC.value)
    p.add_argument("--alpha", type=float)
    p.add_argument("--rank", type=int)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--rel-tol", dest="rel_tol", type=float)
    p.add_argument("--optical-only", dest="optical_only", type=_parse_bool)

    p = sub.add_parser("cloudsynth", help="overlay synthetic clouds and write the holdout")
    p.add_argument("--input", type=Path, required=True)
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--masklib", type=Path)
    source.add_argument("--blobs", action="store_true")
    p.add_argument("--target-ratio", dest="target_ratio", type=float)
    p.add_argument("--min-component", dest="min_component", type=int,
                   help="drop sampled cloud and clear regions smaller than this many pixels")
    p.add_argument("--seed", type=int)
    p.add_argument("--output", type=Path, required=True)

    p = sub.add_parser("evaluate", help="score a reconstruction against the truth")
    p.add_argument("--pred", type=Path)
    p.add_argument("--truth", type=Path)
    p.add_argument("--holdout", type=Path)
    p.add_argument("--entries", type=Path, help="JSON list of {pred, truth, holdout[, cloud_ratio]}")
    p.add_argument("--method", default="reconstruction")
    p.add_argument("--bins", type=int)
    p.add_argument("--out-dir", dest="out_dir", type=Path, required=True)

    p = sub.add_parser("index", help="normalized-difference index of one day or of every day")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--type", choices=[t.value for t in IndexType], required=True)
    when = p.add_mutually_exclusive_group(required=True)
    when.add_argument("--day", type=int)
    when.add_argument("--series", action="store_true", help="write the clear-pixel mean per day as CSV")
    p.add_argument("--output", type=Path, required=True)

    p = sub.add_parser("simulate", help="generate a planted low-rank scene")
    p.add_argument("--seed", type=int)
    p.add_argument("--rank", type=int)
    p.add_argument("--dims", type=_parse_dims, help="T,C1,C2,H,W")
    p.add_argument("--noise", type=float)
    p.add_argument("--target-ratio", dest="target_ratio", type=float)
    p.add_argument("--out-dir", dest="out_dir", type=Path, required=True)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    CLIメイン

    エラー時は handle_command_error が終了コード付きで停止する（Fail-Fast）
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "evaluate" and not args.entries and not (args.pred and args.truth and args.holdout):
        parser.error("evaluate needs --entries or all of --pred, --truth and --holdout")

    try:
        settings = get_settings()
        logging.basicConfig(
            level=settings.console_level(),
            format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        )
        started = time.perf_counter()
        manifest, directory = COMMANDS[args.command](args)
        manifest.duration_ms = (time.perf_counter() - started) * 1000
        write_manifest(manifest, directory)

        get_logger().log_system(SystemLog(
            level=LogLevel.INFO,
            module="cli",
            action=args.command,
            data={"outputs": manifest.outputs},
            duration_ms=manifest.duration_ms,
        ))
        close_logger()
    except Exception as e:
        handle_command_error(e, args.command)

    return EXIT_OK


def run() -> None:
    """コンソールスクリプト用エントリポイント"""
    sys.exit(main())


if __name__ == "__main__":
    run()
