"""File formats: field CSV with JSON side-car, series CSVs, JSON reports and the run manifest."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .spectral import NORMALIZATION, SpectralField

ARTIFACT_VERSION = "0.1.0"


def _num(x):
    if x is None:
        return ""
    return repr(float(x))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_json(path, obj):
    path = Path(path)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def write_rows(path, header, rows):
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([v if isinstance(v, (int, np.integer, str)) else _num(v) for v in row])
    return path


# ------------------------------------------------------------ fields


def sidecar(path) -> Path:
    return Path(path).with_suffix(".json")


def write_field_csv(path, f, alpha):
    """One row per mode plus a {K, alpha, normalization} descriptor next to it."""
    c = f.coeff if isinstance(f, SpectralField) else np.asarray(f)
    K = c.shape[0]
    rows = [(k, m, c[k - 1, m - 1]) for k in range(1, K + 1) for m in range(1, K + 1)]
    write_rows(path, ("k", "m", "coeff"), rows)
    write_json(sidecar(path), {"K": K, "alpha": float(alpha), "normalization": NORMALIZATION})
    return [Path(path), sidecar(path)]


def read_field_csv(path, K=None) -> SpectralField:
    path = Path(path)
    meta = {}
    if sidecar(path).exists():
        meta = json.loads(sidecar(path).read_text(encoding="utf-8"))
        if meta.get("normalization", NORMALIZATION) != NORMALIZATION:
            raise ConfigError(f"{path}: unsupported normalization {meta['normalization']!r}")
    with path.open(newline="", encoding="utf-8") as fh:
        rd = csv.DictReader(fh)
        if rd.fieldnames is None or [h.strip() for h in rd.fieldnames] != ["k", "m", "coeff"]:
            raise ConfigError(f"{path}: header must be k,m,coeff")
        rows = []
        for i, r in enumerate(rd, start=2):
            try:
                rows.append((int(r["k"]), int(r["m"]), float(r["coeff"])))
            except (TypeError, ValueError):
                raise ConfigError(f"{path}:{i}: malformed row") from None
    if K is None:
        K = int(meta.get("K", max([max(k, m) for k, m, _ in rows], default=1)))
    for k, m, _ in rows:
        if not (1 <= k <= K and 1 <= m <= K):
            raise ConfigError(f"{path}: mode ({k},{m}) lies outside K={K}")
    return SpectralField.from_modes(K, rows)


# ------------------------------------------------------------ series


def write_summary_csv(path, rows):
    return write_rows(path, ("t", "E", "Dnorm2", "curl_sigma_norm", "energy_residual"), rows)


def write_snapshots(path, traj, every=None):
    """Rows (t, k, m, coeff) every ``every`` steps; the final snapshot is always included."""
    N = traj.N
    every = N if not every else int(every)
    steps = list(range(0, N + 1, every))
    if steps[-1] != N:
        steps.append(N)
    K = traj.K

    def rows():
        for n in steps:
            c = traj.coeffs[n]
            t = traj.times[n]
            for k in range(1, K + 1):
                for m in range(1, K + 1):
                    yield (t, k, m, c[k - 1, m - 1])

    return write_rows(path, ("t", "k", "m", "coeff"), rows())


def write_gateaux_csv(path, rows):
    return write_rows(path, ("rho", "J_perturbed", "remainder", "remainder_over_rho"), rows)


def write_control(out_dir, u, alpha, stem="final_control"):
    """Each interval as a field CSV plus an index JSON naming them in order."""
    out_dir = Path(out_dir)
    files, written = [], []
    for i in range(u.n_intervals):
        name = f"{stem}_{i:03d}.csv"
        written += write_field_csv(out_dir / name, u.values[i], alpha)
        files.append(name)
    index = out_dir / f"{stem}.json"
    write_json(index, {"T": u.T, "n_intervals": u.n_intervals, "files": files})
    return index, written + [index]


# ------------------------------------------------------------ manifest


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class RunManifest:
    """manifest.json in the output directory: written on start, finalized with digests."""

    def __init__(self, out_dir, command, config_echo, seed):
        self.out_dir = Path(out_dir)
        self.path = self.out_dir / "manifest.json"
        self.data = {
            "command": command,
            "configEcho": config_echo,
            "seed": int(seed),
            "artifactVersion": ARTIFACT_VERSION,
            "status": "running",
            "startedAt": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "outputs": [],
        }
        self.outputs: list[Path] = []

    def begin(self):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        write_json(self.path, self.data)
        return self

    def add(self, *paths):
        for p in paths:
            if isinstance(p, (list, tuple)):
                self.add(*p)
            elif p is not None:
                self.outputs.append(Path(p))

    def finalize(self, status, exit_code):
        seen = {}
        for p in self.outputs:
            if p.exists():
                seen[p.resolve()] = p
        self.data["outputs"] = [
            {"file": str(p.relative_to(self.out_dir) if p.is_relative_to(self.out_dir) else p), "sha256": sha256(p)}
            for p in sorted(seen.values(), key=str)
        ]
        self.data.update(status=status, exitCode=int(exit_code), finishedAt=time.strftime("%Y-%m-%dT%H:%M:%S%z"))
        write_json(self.path, self.data)
