"""On-disk formats: dataset directories, truth sidecars, flat configs, draws.

A dataset is a directory of three files. ``header.txt`` carries the counts
and format version as flat key = value text; ``responses.csv`` has columns
sample_id,y; ``edges.csv`` has sample_id,node_k,node_l,weight with k < l and
1-based node ids, listing nonzero edges only (anything unlisted is 0). Floats
are written with repr so parsing is lossless.
"""

from __future__ import annotations

import json
import math
import os
from pathlib import Path

import numpy as np

from .data import NetworkDataset, PosteriorDraws, n_edges
from .simulate import SimConfig, SimTruth

DATASET_FORMAT_VERSION = 1

HEADER_FILE = "header.txt"
RESPONSES_FILE = "responses.csv"
EDGES_FILE = "edges.csv"


def parse_config_text(text: str) -> dict[str, str]:
    """Flat key = value lines; blank lines and # comments are skipped."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno} is not 'key = value': {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def read_config_file(path) -> dict[str, str]:
    return parse_config_text(Path(path).read_text())


def format_config_text(entries: dict) -> str:
    return "".join(f"{k} = {v}\n" for k, v in entries.items())


def write_manifest(path, entries: dict) -> None:
    Path(path).write_text(format_config_text(entries))


def _coerce(cfg: dict[str, str], key: str, kind, default=None):
    if key not in cfg:
        if default is None:
            raise ValueError(f"missing required config field '{key}'")
        return default
    raw = cfg[key]
    try:
        if kind is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except (TypeError, ValueError):
        raise ValueError(f"config field '{key}' has invalid value {raw!r}") from None


def config_int(cfg, key, default=None) -> int:
    return _coerce(cfg, key, int, default)


def config_float(cfg, key, default=None) -> float:
    return _coerce(cfg, key, float, default)


def config_bool(cfg, key, default=None) -> bool:
    return _coerce(cfg, key, bool, default)


def config_str(cfg, key, default=None) -> str:
    return _coerce(cfg, key, str, default)


# ---------------------------------------------------------------------------
# dataset directories
# ---------------------------------------------------------------------------

def write_dataset(directory, data: NetworkDataset) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_manifest(directory / HEADER_FILE, {
        "format_version": DATASET_FORMAT_VERSION,
        "n": data.n, "V": data.V, "q": data.q,
    })
    with open(directory / RESPONSES_FILE, "w") as fh:
        fh.write("sample_id,y\n")
        for i, v in enumerate(data.y, start=1):
            fh.write(f"{i},{float(v)!r}\n")
    with open(directory / EDGES_FILE, "w") as fh:
        fh.write("sample_id,node_k,node_l,weight\n")
        for i in range(data.n):
            Ai = data.A[i]
            rows, cols = np.nonzero(np.triu(Ai, k=1))
            for k, l in zip(rows, cols):
                fh.write(f"{i + 1},{k + 1},{l + 1},{float(Ai[k, l])!r}\n")


def read_dataset(directory) -> NetworkDataset:
    directory = Path(directory)
    header = read_config_file(directory / HEADER_FILE)
    version = config_int(header, "format_version")
    if version != DATASET_FORMAT_VERSION:
        raise ValueError(f"unsupported dataset format version {version}")
    n = config_int(header, "n")
    V = config_int(header, "V")
    q = config_int(header, "q")
    if q != n_edges(V):
        raise ValueError(f"header q={q} inconsistent with V={V}")
    y = np.full(n, np.nan)
    with open(directory / RESPONSES_FILE) as fh:
        next(fh)  # header row
        for line in fh:
            sid, val = line.strip().split(",")
            idx = int(sid)
            if not 1 <= idx <= n:
                raise ValueError(f"sample_id {idx} out of range 1..{n}")
            y[idx - 1] = float(val)
    if np.any(np.isnan(y)):
        raise ValueError("responses.csv does not cover every sample")
    A = np.zeros((n, V, V))
    with open(directory / EDGES_FILE) as fh:
        next(fh)
        for line in fh:
            sid, k, l, w = line.strip().split(",")
            i, k, l = int(sid) - 1, int(k), int(l)
            if not (1 <= k < l <= V):
                raise ValueError(f"edge ({k}, {l}) violates 1 <= k < l <= V={V}")
            if not 0 <= i < n:
                raise ValueError(f"sample_id {sid} out of range 1..{n}")
            A[i, k - 1, l - 1] = A[i, l - 1, k - 1] = float(w)
    return NetworkDataset(y=y, A=A)


# ---------------------------------------------------------------------------
# truth sidecar
# ---------------------------------------------------------------------------

def write_truth(path, config: SimConfig, truth: SimTruth) -> None:
    payload = {
        "kind": config.kind,
        "config": {
            "kind": config.kind, "n": config.n, "d": config.d, "k": config.k,
            "pi": config.pi, "mu": config.mu, "coefficients": config.coefficients,
            "L": config.L, "count_pairs_once": config.count_pairs_once,
            "seed": config.seed,
        },
        "xi_true": truth.xi_true.astype(int).tolist(),
        "edge_influential": truth.edge_influential.astype(bool).tolist(),
        "gamma_true": truth.gamma_true.tolist(),
        "B_true": truth.B_true.tolist() if truth.B_true is not None else None,
        "b_main": truth.b_main.tolist() if truth.b_main is not None else None,
        "b_pair": truth.b_pair.tolist() if truth.b_pair is not None else None,
        "K_star": (truth.K_star + 1).tolist(),  # 1-based microbe ids on disk
        "noise": truth.noise.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)


def read_truth(path) -> dict:
    with open(path) as fh:
        payload = json.load(fh)
    payload["xi_true"] = np.asarray(payload["xi_true"], dtype=np.int8)
    payload["edge_influential"] = np.asarray(payload["edge_influential"], dtype=bool)
    payload["gamma_true"] = np.asarray(payload["gamma_true"], dtype=float)
    for key in ("B_true", "b_main", "b_pair"):
        if payload.get(key) is not None:
            payload[key] = np.asarray(payload[key], dtype=float)
    payload["K_star"] = np.asarray(payload["K_star"], dtype=np.intp) - 1
    payload["noise"] = np.asarray(payload["noise"], dtype=float)
    return payload


# ---------------------------------------------------------------------------
# draws and metrics
# ---------------------------------------------------------------------------

def save_draws(path, draws: PosteriorDraws) -> None:
    np.savez(
        path, gamma=draws.gamma, xi=draws.xi, mu=draws.mu, tau2=draws.tau2,
        log_joint=draws.log_joint,
    )


def load_draws(path) -> PosteriorDraws:
    with np.load(path) as archive:
        return PosteriorDraws(
            gamma=archive["gamma"], xi=archive["xi"], mu=archive["mu"],
            tau2=archive["tau2"], log_joint=archive["log_joint"],
        )


METRICS_COLUMNS = (
    "dataset", "kind", "n", "V", "k", "pi", "mu", "coefficients", "seed",
    "edge_fpr", "edge_fnr", "node_fpr", "node_fnr",
    "coefficient_mse", "response_mse",
)


def _format_cell(value) -> str:
    if isinstance(value, float):
        if math.isnan(value):
            return "NA"
        return repr(value)
    return str(value)


def write_metrics_csv(path, row: dict) -> None:
    missing = set(METRICS_COLUMNS) - set(row)
    if missing:
        raise ValueError(f"metrics row missing fields: {sorted(missing)}")
    with open(path, "w") as fh:
        fh.write(",".join(METRICS_COLUMNS) + "\n")
        fh.write(",".join(_format_cell(row[c]) for c in METRICS_COLUMNS) + "\n")


def read_metrics_csv(path) -> dict:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        values = fh.readline().strip().split(",")
    if header != list(METRICS_COLUMNS):
        raise ValueError(f"unexpected metrics columns: {header}")
    out = {}
    for key, raw in zip(header, values):
        if key in ("dataset", "kind", "coefficients"):
            out[key] = raw
        elif key in ("n", "V", "k", "seed"):
            out[key] = int(raw)
        else:
            out[key] = math.nan if raw == "NA" else float(raw)
    return out


def atomic_publish_dir(staging: Path, final: Path) -> None:
    """Rename a fully written staging directory into place."""
    final = Path(final)
    if final.exists():
        raise FileExistsError(f"output {final} already exists")
    os.replace(staging, final)
