"""TOML config loading for the SuperNet, search and dataset sections."""

from __future__ import annotations

import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigurationError
from .search import SearchConfig
from .supernet import StageSpec, SuperNetConfig


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigurationError(f"config: missing key {key!r} in [{where}]")
    return table[key]


def parse_supernet(table: dict) -> SuperNetConfig:
    stages = []
    for i, st in enumerate(_require(table, "stages", "supernet")):
        where = f"supernet.stages[{i}]"
        stages.append(StageSpec(
            kind=str(_require(st, "kind", where)),
            filters=int(_require(st, "filters", where)),
            layers=int(_require(st, "layers", where)),
            activation=str(st.get("activation", "relu")),
            kernels=tuple(str(k) for k in st.get("kernels", ["k3", "k5"])),
            se_options=tuple(bool(v) for v in st.get("se_options", [False, True])),
            allow_skip=bool(st.get("allow_skip", True)),
        ))
    cfg = SuperNetConfig(
        input_width=int(_require(table, "input_width", "supernet")),
        classes=int(_require(table, "classes", "supernet")),
        stages=tuple(stages),
        granularity=int(table.get("granularity", 32)),
        expansion=float(table.get("expansion", 8.0)),
        tau=float(table.get("tau", 1.0)),
        stem_activation=str(table.get("stem_activation", "swish")),
        head_hidden=int(table.get("head_hidden", 0)),
    )
    cfg.validate()
    return cfg


def parse_search(table: dict) -> SearchConfig:
    cfg = SearchConfig(
        alpha=float(table.get("alpha", 1.0)),
        beta=float(table.get("beta", 0.6)),
        phi=float(table.get("phi", 1.1)),
        lam=float(table.get("lambda", 0.55)),
        loss_form=str(table.get("loss_form", "log-power")),
        threshold_kind=str(table.get("threshold_kind", "linear")),
        t_initial=float(table.get("t_initial", 0.15)),
        t_final=float(table.get("t_final", 0.55)),
        e_warmup=int(table.get("e_warmup", 70)),
        e_total=int(table.get("e_total", 200)),
        batch_size=int(table.get("batch_size", 256)),
        theta_split=float(table.get("theta_split", 0.2)),
        lr_theta=float(table.get("lr_theta", 0.01)),
        lr_psi=float(table.get("lr_psi", 0.002)),
        tau=float(table.get("tau", 1.0)),
        seed=int(table.get("seed", 0)),
    )
    cfg.validate()
    return cfg


class LoadedConfig:
    def __init__(self, path: Path, doc: dict):
        self.path = path
        self.doc = doc
        if "supernet" not in doc:
            raise ConfigurationError(f"{path}: missing [supernet] section")
        self.supernet = parse_supernet(doc["supernet"])
        self.search = parse_search(doc.get("search", {}))
        self.dataset_spec = doc.get("dataset")
        self.latency = doc.get("latency", {})


def load_config(path) -> LoadedConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    try:
        return LoadedConfig(path, doc)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"{path}: {exc}") from None
