"""Benchmark sweeps over (profile, size, rate) cells and the reports built from them.

Output directory layout::

    manifest.json            seed, grid, versions, one entry per cell
    cells/<cell>.csv         latency records (see bench.CSV_HEADER)
    energy.csv               one energy-report row per finished cell
    report.csv               aggregate report (written by ``build_report``)
    plot_<profile>.csv       x = achieved rate, y = joules per message, one series per size
"""

from __future__ import annotations

import hashlib
import json
import logging
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import __version__, bench, energy, kernels
from .errors import EvStreamError, InvalidProfile, MissingInputs
from .protection import PRESETS, ProtectionProfile
from .protection import profile as make_profile

log = logging.getLogger(__name__)

DEFAULT_RATES = (1000, 2000, 5000, 10000, 20000, 50000, 100000)
DEFAULT_SIZES = (64, 128, 256, 512)
DEFAULT_SYNTHETIC = "50,150,20000"
SAMPLE_HZ = 10.0

# one panel per configuration: two vendors, each native and protected
PANEL_PROFILES = "intel_native:native,intel_enclave:enclave_like,amd_native:native,amd_encrypted_vm:encrypted_vm_like"


@dataclass(frozen=True)
class ProfileSpec:
    label: str
    profile: ProtectionProfile


def parse_profiles(text: str, **overrides) -> list[ProfileSpec]:
    """Parse ``name`` or ``label:name`` items; ``panels`` expands to the four-panel set."""
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if item == "panels":
            out.extend(parse_profiles(PANEL_PROFILES, **overrides))
            continue
        label, _, mode = item.partition(":")
        mode = mode or label
        if mode not in PRESETS:
            raise InvalidProfile(f"unknown profile {mode!r}; choose from {sorted(PRESETS)}")
        out.append(ProfileSpec(label, make_profile(mode, **overrides)))
    labels = [p.label for p in out]
    if len(set(labels)) != len(labels):
        raise InvalidProfile(f"duplicate profile labels in {labels}")
    return out


@dataclass
class RunConfig:
    profiles: list[ProfileSpec]
    rates: list[float] = field(default_factory=lambda: list(DEFAULT_RATES))
    sizes: list[int] = field(default_factory=lambda: list(DEFAULT_SIZES))
    duration_s: float = 10.0
    publishers: int = 1
    subscribers: int = 1
    seed: int = 0
    out: Path = Path("evstream-out")
    connect: Optional[tuple[str, int]] = None
    power_trace: Optional[Path] = None
    synthetic_power: str = DEFAULT_SYNTHETIC
    allow_any_size: bool = False

    def __post_init__(self):
        if not (self.profiles and self.rates and self.sizes):
            raise EvStreamError("benchmark grid must not be empty")
        # reject bad sizes/rates before any server is spawned
        for size in self.sizes:
            for rate in self.rates:
                bench.WorkloadSpec(rate, size, self.duration_s, self.publishers, self.subscribers,
                                   allow_any_size=self.allow_any_size)

    def cells(self):
        # profile-major so every cell of one configuration runs back to back
        for p in self.profiles:
            for size in self.sizes:
                for rate in self.rates:
                    yield p, size, rate


def cell_id(label: str, size: int, rate: float) -> str:
    return f"{label}_s{size}_r{_num(rate)}"


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def _payload_digest(spec: bench.WorkloadSpec) -> str:
    h = hashlib.sha256()
    for p in bench.payloads(spec):
        h.update(p)
    return h.hexdigest()


def _power_section(cfg: RunConfig) -> dict:
    if cfg.power_trace is not None:
        return {"kind": "trace", "path": str(cfg.power_trace)}
    model = energy.SyntheticPowerModel.parse(cfg.synthetic_power)
    return {
        "kind": "synthetic",
        "p_idle_w": model.p_idle_w,
        "p_max_w": model.p_max_w,
        "capacity_msgs_per_s": model.capacity_msgs_per_s,
        "sample_hz": SAMPLE_HZ,
    }


def run_sweep(cfg: RunConfig) -> dict:
    """Run every cell and write the output directory; returns the manifest.

    Cell failures are recorded and the sweep carries on.
    """
    out = Path(cfg.out)
    (out / "cells").mkdir(parents=True, exist_ok=True)
    manifest = {
        "seed": cfg.seed,
        "grid": {
            "profiles": [
                {"label": p.label, "mode": p.profile.mode.value, **_profile_params(p.profile)} for p in cfg.profiles
            ],
            "sizes": list(cfg.sizes),
            "rates": [float(r) for r in cfg.rates],
        },
        "duration_s": cfg.duration_s,
        "publishers": cfg.publishers,
        "subscribers": cfg.subscribers,
        "power": _power_section(cfg),
        "server": "external" if cfg.connect else "spawned",
        "versions": {"evstream": __version__, "python": platform.python_version(), "kernels": kernels.IMPLEMENTATION},
        "cells": [],
    }
    origin = time.monotonic_ns()
    by_profile: dict[str, list] = {}
    for p, size, rate in cfg.cells():
        by_profile.setdefault(p.label, []).append((p, size, rate))

    for label, cells in by_profile.items():
        server = None
        address = cfg.connect
        spawn_error = None
        if address is None:
            try:
                server = bench.ServerProcess(cells[0][0].profile).start()
                address = server.address
            except EvStreamError as exc:
                spawn_error = str(exc)
        try:
            for p, size, rate in cells:
                manifest["cells"].append(_run_cell(cfg, p, size, rate, address, spawn_error, origin, out))
        finally:
            if server is not None:
                server.stop()

    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    rows = [_cell_row(manifest, c, out) for c in manifest["cells"] if c["status"] == "ok"]
    energy.write_report(out / "energy.csv", rows)
    return manifest


def _profile_params(p: ProtectionProfile) -> dict:
    return {
        "per_call_ns": p.per_call_ns,
        "per_byte_ns": p.per_byte_ns,
        "epc_capacity_bytes": p.epc_capacity_bytes,
        "page_size_bytes": p.page_size_bytes,
        "page_fault_penalty_ns": p.page_fault_penalty_ns,
    }


def _run_cell(cfg: RunConfig, p: ProfileSpec, size: int, rate: float, address, spawn_error, origin: int, out: Path) -> dict:
    cid = cell_id(p.label, size, rate)
    spec = bench.WorkloadSpec(
        target_rate=rate,
        message_size_bytes=size,
        duration_s=cfg.duration_s,
        publishers=cfg.publishers,
        subscribers=cfg.subscribers,
        channel=f"bench.{p.label}",
        profile=p.profile,
        seed=cfg.seed,
        allow_any_size=cfg.allow_any_size,
    )
    cell = {
        "id": cid,
        "profile": p.label,
        "mode": p.profile.mode.value,
        "size_bytes": size,
        "rate": float(rate),
        "payload_sha256": _payload_digest(spec),
    }
    if spawn_error is not None:
        return {**cell, "status": "failed", "error": spawn_error}
    log.info("cell %s", cid)
    try:
        result = bench.run(spec, address)
    except (EvStreamError, OSError) as exc:
        log.warning("cell %s failed: %s", cid, exc)
        return {**cell, "status": "failed", "error": f"{type(exc).__name__}: {exc}"}
    path = out / "cells" / f"{cid}.csv"
    bench.write_csv(result, path)
    start_s = (result.start_ns - origin) / 1e9
    return {
        **cell,
        "status": "ok",
        "latency_csv": f"cells/{cid}.csv",
        "delivered": result.delivered,
        "achieved_rate": result.achieved_rate,
        "timing": {"start_s": start_s, "end_s": start_s + cfg.duration_s},
    }


def _cell_power(manifest: dict, cell: dict, out: Path) -> list[energy.PowerSample]:
    power = manifest["power"]
    duration = manifest["duration_s"]
    if power["kind"] == "synthetic":
        model = energy.SyntheticPowerModel(power["p_idle_w"], power["p_max_w"], power["capacity_msgs_per_s"])
        return energy.synthesize_trace(model, cell["achieved_rate"], duration, power["sample_hz"])
    trace_path = Path(power["path"])
    if not trace_path.is_absolute() and not trace_path.exists():
        trace_path = out / trace_path
    samples = energy.read_trace(trace_path)
    t = cell["timing"]
    return energy.slice_trace(samples, t["start_s"], t["end_s"])


def _cell_row(manifest: dict, cell: dict, out: Path) -> list[str]:
    samples = _cell_power(manifest, cell, out)
    rep = energy.energy_per_message(
        samples, cell["delivered"], rate=cell["rate"], size_bytes=cell["size_bytes"], profile=cell["profile"]
    )
    lat = [r["latency_ns"] for r in bench.read_csv(out / cell["latency_csv"]) if r["latency_ns"] is not None]
    p50 = p99 = None
    if lat:
        p50, p99 = bench.nearest_rank(lat, (0.5, 0.99))
    return energy.report_row(rep, cell["achieved_rate"], p50, p99)


def build_report(out) -> list[Path]:
    """Write ``report.csv`` and one ``plot_<profile>.csv`` per profile; returns the paths."""
    out = Path(out)
    manifest_path = out / "manifest.json"
    if not manifest_path.exists():
        raise MissingInputs(f"{manifest_path} not found; run the bench first")
    manifest = json.loads(manifest_path.read_text())
    cells = [c for c in manifest.get("cells", []) if c.get("status") == "ok"]
    missing = [c["latency_csv"] for c in cells if not (out / c["latency_csv"]).exists()]
    if not cells or missing:
        raise MissingInputs(f"no finished cells in {out}" if not cells else f"missing cell files: {missing}")

    rows = [_cell_row(manifest, c, out) for c in cells]
    written = [out / "report.csv"]
    energy.write_report(written[0], rows)

    labels = [p["label"] for p in manifest["grid"]["profiles"]]
    for label in labels:
        series = sorted(
            ((int(r[1]), float(r[3]), r[5]) for r in rows if r[2] == label),
            key=lambda x: (x[0], x[1]),
        )
        path = out / f"plot_{label}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write("size_bytes,achieved_rate,joules_per_message\n")
            for size, x, y in series:
                fh.write(f"{size},{x!r},{y}\n")
        written.append(path)
    return written
