"""Command-line surface: search, bench, count, retrain.

Exit codes: 0 success, 1 runtime failure, 2 usage/config error. Every
command writing into an output directory refuses to clobber an earlier
run unless --force is given, and writes manifest.json last as the
completion marker.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from .configio import load_config
from .data import load_dataset
from .errors import ConfigurationError, DataError, LatencyTableError, PrunasError
from .latency import LatencyTable, build_analytic, build_measured, fmt9
from .search import (
    SampledArchitecture,
    SearchResult,
    config_fingerprint,
    grid_search,
    retrain,
    run_search,
)
from .supernet import count_search_space, per_layer_factors

PARETO_COLUMNS = ("alpha", "lambda", "phi", "loss", "layers", "lat_us", "top1")


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


def _write_manifest(out_dir: Path, command: str, config_path, seed: int,
                    fingerprint: str, started: str) -> None:
    doc = {
        "command": command,
        "config": str(config_path) if config_path else None,
        "seed": seed,
        "config_hash": fingerprint,
        "out_dir": str(out_dir),
        "started": started,
        "finished": _utcnow(),
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _prepare_out(out_dir: Path, force: bool, targets: list[str]) -> None:
    if out_dir.exists():
        collisions = [t for t in targets + ["manifest.json"] if (out_dir / t).exists()]
        if collisions and not force:
            raise ConfigurationError(
                f"{out_dir} already contains {', '.join(collisions)}; use --force to overwrite")
    out_dir.mkdir(parents=True, exist_ok=True)


def _format_cell(v) -> str:
    if v == "":
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def _write_search_outputs(out_dir: Path, res: SearchResult) -> None:
    with open(out_dir / "search.csv", "w") as fh:
        fh.write("epoch,phase,ce,lat_us,loss,live_candidates,threshold\n")
        for row in res.log_rows:
            fh.write(",".join(_format_cell(row[k]) for k in
                              ("epoch", "phase", "ce", "lat_us", "loss",
                               "live_candidates", "threshold")) + "\n")
    with open(out_dir / "prune_events.csv", "w") as fh:
        fh.write("epoch,threshold,event,layer,block\n")
        for ev in res.prune_events:
            fh.write(f"{ev['epoch']},{ev['threshold']:.6f},{ev['event']},"
                     f"{ev['layer']},{ev['block']}\n")
    masks_dir = out_dir / "masks"
    masks_dir.mkdir(exist_ok=True)
    for (layer_idx, variant_id), rows in sorted(res.mask_log.items()):
        path = masks_dir / f"layer{layer_idx:03d}_{variant_id}.csv"
        with open(path, "w") as fh:
            fh.write("iteration,s,l,small_mask,large_mask\n")
            for it, s, l, sm, lg in rows:
                fh.write(f"{it},{s!r},{l!r},{sm},{lg}\n")
    with open(out_dir / "arch.json", "w") as fh:
        fh.write(res.arch.to_json())
        fh.write("\n")


def _load_lut(args, loaded) -> LatencyTable:
    if getattr(args, "lut", None):
        path = Path(args.lut)
        if not path.exists():
            raise ConfigurationError(f"latency table not found: {path}")
        return LatencyTable.load(path)
    lat_cfg = loaded.latency or {}
    return build_analytic(
        loaded.supernet,
        unit_cost=float(lat_cfg.get("unit_cost", 0.001)),
        overhead=float(lat_cfg.get("overhead", 1.0)),
        kernel_costs={str(k): float(v)
                      for k, v in lat_cfg.get("kernel_costs", {}).items()},
    )


def _parse_grid(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise ConfigurationError(f"bad grid list {text!r}; expected comma-separated numbers")


def cmd_search(args) -> int:
    loaded = load_config(args.config)
    scfg = loaded.search
    if args.seed is not None:
        scfg = _replace(scfg, seed=args.seed)
    if args.alpha is not None:
        scfg = _replace(scfg, alpha=args.alpha)
    if args.lam is not None:
        scfg = _replace(scfg, lam=args.lam)
    if args.phi is not None:
        scfg = _replace(scfg, phi=args.phi)
    if loaded.dataset_spec is None:
        raise ConfigurationError(f"{args.config}: missing [dataset] section")
    dataset = load_dataset(_dataset_spec(loaded), seed=scfg.seed)
    lut = _load_lut(args, loaded)
    out_dir = Path(args.out)
    started = _utcnow()
    fingerprint = config_fingerprint(loaded.supernet)

    if args.grid_alpha or args.grid_lambda:
        alphas = _parse_grid(args.grid_alpha) if args.grid_alpha else [scfg.alpha]
        lams = _parse_grid(args.grid_lambda) if args.grid_lambda else [scfg.lam]
        _prepare_out(out_dir, args.force, ["pareto.csv"])
        workers = int(os.environ.get("PRUNAS_GRID_WORKERS", "1"))
        grid = grid_search(alphas, lams, scfg.phi, scfg, loaded.supernet, dataset,
                           lut, retrain_epochs=args.retrain_epochs, workers=workers)
        for (alpha, lam), res in grid.results.items():
            sub = out_dir / f"a{alpha:g}_l{lam:g}"
            sub.mkdir(parents=True, exist_ok=True)
            _write_search_outputs(sub, res)
        with open(out_dir / "pareto.csv", "w") as fh:
            fh.write(",".join(PARETO_COLUMNS) + "\n")
            for row in grid.rows:
                top1 = "" if row.top1 is None else f"{row.top1:.6f}"
                fh.write(f"{row.alpha:g},{row.lam:g},{row.phi:g},{row.loss:.6f},"
                         f"{row.layers},{row.lat_us:.6f},{top1}\n")
    else:
        _prepare_out(out_dir, args.force, ["arch.json", "search.csv"])
        res = run_search(scfg, loaded.supernet, dataset, lut)
        _write_search_outputs(out_dir, res)
    _write_manifest(out_dir, "search", args.config, scfg.seed, fingerprint, started)
    return 0


def _dataset_spec(loaded):
    spec = loaded.dataset_spec
    if isinstance(spec, dict) and "csv" in spec:
        return spec["csv"]
    return spec


def _replace(cfg, **kw):
    from dataclasses import replace as _r

    return _r(cfg, **kw)


def cmd_bench(args) -> int:
    loaded = load_config(args.config)
    if args.mode == "analytic":
        lut = build_analytic(loaded.supernet, unit_cost=args.unit_cost,
                             overhead=args.overhead,
                             kernel_costs={str(k): float(v) for k, v in
                                           (loaded.latency or {}).get("kernel_costs", {}).items()})
    else:
        lut = build_measured(loaded.supernet, repeats=args.repeats)
        for w in lut.metadata.get("warnings", []):
            print(f"warning: {w}", file=sys.stderr)
    out = Path(args.out)
    if out.exists() and not args.force:
        raise ConfigurationError(f"{out} exists; use --force to overwrite")
    out.parent.mkdir(parents=True, exist_ok=True)
    lut.save(out)
    print(f"wrote {len(lut.entries)} entries to {out}")
    return 0


def cmd_count(args) -> int:
    loaded = load_config(args.config)
    total = count_search_space(loaded.supernet)
    if args.per_layer:
        for stage, layer, factor in per_layer_factors(loaded.supernet):
            print(f"stage {stage} layer {layer}: {factor}")
    print(f"total: {total}")
    print(f"approx: {float(total):.2e}")
    return 0


def cmd_retrain(args) -> int:
    loaded = load_config(args.config)
    arch_path = Path(args.arch)
    if not arch_path.exists():
        raise ConfigurationError(f"architecture file not found: {arch_path}")
    arch = SampledArchitecture.from_json(arch_path.read_text(), loaded.supernet)
    expected = config_fingerprint(loaded.supernet)
    if arch.config_hash != expected:
        raise ConfigurationError(
            f"architecture fingerprint {arch.config_hash} does not match config {expected}")
    if loaded.dataset_spec is None:
        raise ConfigurationError(f"{args.config}: missing [dataset] section")
    seed = args.seed if args.seed is not None else loaded.search.seed
    dataset = load_dataset(_dataset_spec(loaded), seed=seed)
    started = _utcnow()
    result = retrain(arch, loaded.supernet, dataset, epochs=args.epochs, seed=seed)
    out_dir = Path(args.out)
    _prepare_out(out_dir, args.force, ["metrics.json"])
    with open(out_dir / "metrics.json", "w") as fh:
        json.dump({"top1": fmt9(result.top1), "epochs": result.epochs,
                   "seed": result.seed}, fh, indent=1, sort_keys=True)
        fh.write("\n")
    _write_manifest(out_dir, "retrain", args.config, seed, expected, started)
    print(f"top1: {result.top1:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prunas",
                                     description="Inference-aware DNAS with SuperNet pruning")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search", help="run a single search or an (alpha, lambda) grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--phi", type=float)
    p.add_argument("--grid-alpha", help="comma-separated alpha grid")
    p.add_argument("--grid-lambda", help="comma-separated lambda grid")
    p.add_argument("--retrain-epochs", type=int, default=0,
                   help="retrain each grid variant for the pareto top1 column")
    p.add_argument("--lut", help="latency table JSON (default: analytic from config)")
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_search)

    p = sub.add_parser("bench", help="build and persist a latency lookup table")
    p.add_argument("--config", required=True)
    p.add_argument("--mode", choices=("analytic", "measured"), default="analytic")
    p.add_argument("--unit-cost", type=float, default=0.001)
    p.add_argument("--overhead", type=float, default=1.0)
    p.add_argument("--repeats", type=int, default=9)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("count", help="count the search space exactly")
    p.add_argument("--config", required=True)
    p.add_argument("--per-layer", action="store_true")
    p.set_defaults(fn=cmd_count)

    p = sub.add_parser("retrain", help="retrain a sampled architecture from scratch")
    p.add_argument("--config", required=True)
    p.add_argument("--arch", required=True)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_retrain)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigurationError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (PrunasError, LatencyTableError, OSError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
