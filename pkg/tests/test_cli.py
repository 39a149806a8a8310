import json
import subprocess
import sys

import pytest

from evstream import cli, energy
from evstream.bench import ServerProcess
from evstream.client import Client
from evstream.protection import ENCLAVE_LIKE, NATIVE


def bench(out, *extra):
    return cli.main(["bench", "--out", str(out), "--duration", "0.3", "--rates", "1000", "--sizes", "64", *extra])


def test_serve_round_trip_and_clean_shutdown():
    srv = ServerProcess(ENCLAVE_LIKE).start()
    with Client(srv.address) as c:
        c.set("k", "v")
        assert c.get("k") == b"v"
        c.subscribe("c")
    assert srv.stop() == 0


def test_second_serve_on_same_port_fails():
    with ServerProcess(NATIVE) as first:
        host, port = first.address
        proc = subprocess.run(
            [sys.executable, "-m", "evstream", "serve", "--listen", f"{host}:{port}"],
            capture_output=True, text=True, timeout=30,
        )
        assert proc.returncode == 2 and "cannot bind" in proc.stderr


def test_bench_grid_and_manifest(tmp_path):
    out = tmp_path / "o"
    rc = bench(out, "--profile", "native,enclave_like", "--sizes", "64,512")
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text())
    ids = [c["id"] for c in manifest["cells"]]
    assert ids == ["native_s64_r1000", "native_s512_r1000", "enclave_like_s64_r1000", "enclave_like_s512_r1000"]
    assert sorted(p.name for p in (out / "cells").iterdir()) == sorted(f"{i}.csv" for i in ids)
    assert manifest["seed"] == 0 and manifest["grid"]["sizes"] == [64, 512]
    assert {"evstream", "python", "kernels"} <= set(manifest["versions"])
    assert len(energy.read_report(out / "energy.csv")) == 4
    for cell in manifest["cells"]:
        assert cell["status"] == "ok" and (out / cell["latency_csv"]).exists()


def _strip_timing(manifest):
    for c in manifest["cells"]:
        c.pop("timing", None)
    return manifest


def test_bench_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert bench(a, "--seed", "7") == 0
    assert bench(b, "--seed", "7") == 0
    ma = _strip_timing(json.loads((a / "manifest.json").read_text()))
    mb = _strip_timing(json.loads((b / "manifest.json").read_text()))
    assert ma == mb
    assert ma["cells"][0]["payload_sha256"] != ""


def test_unreachable_server_marks_cells_failed(tmp_path):
    out = tmp_path / "o"
    assert bench(out, "--connect", "127.0.0.1:1", "--sizes", "64,128") == 1
    manifest = json.loads((out / "manifest.json").read_text())
    assert [c["status"] for c in manifest["cells"]] == ["failed", "failed"]
    assert all(c["error"] for c in manifest["cells"])


def test_report_four_panels_and_purity(tmp_path, capsys):
    out = tmp_path / "o"
    assert bench(out, "--profile", "panels") == 0
    assert cli.main(["report", "--out", str(out)]) == 0
    plots = sorted(p.name for p in out.glob("plot_*.csv"))
    assert plots == ["plot_amd_encrypted_vm.csv", "plot_amd_native.csv", "plot_intel_enclave.csv", "plot_intel_native.csv"]
    first = {p.name: p.read_bytes() for p in out.glob("*.csv")}
    assert cli.main(["report", "--out", str(out)]) == 0
    assert {p.name: p.read_bytes() for p in out.glob("*.csv")} == first
    rows = energy.read_report(out / "report.csv")
    assert [r["profile"] for r in rows] == ["intel_native", "intel_enclave", "amd_native", "amd_encrypted_vm"]
    assert all(float(r["joules_per_message"]) > 0 for r in rows)


def test_report_missing_inputs(tmp_path, capsys):
    assert cli.main(["report", "--out", str(tmp_path)]) == 2
    assert "not found" in capsys.readouterr().err


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("EVSTREAM_OUT", str(tmp_path / "env"))
    assert cli.main(["bench", "--duration", "0.2", "--rates", "500", "--sizes", "64"]) == 0
    assert (tmp_path / "env" / "manifest.json").exists()


def test_power_trace_source(tmp_path):
    trace = tmp_path / "power.csv"
    energy.write_trace(trace, [energy.PowerSample(float(t), 80.0) for t in range(0, 600)])
    out = tmp_path / "o"
    assert bench(out, "--power-trace", str(trace)) == 0
    assert cli.main(["report", "--out", str(out)]) == 0
    (row,) = energy.read_report(out / "report.csv")
    assert float(row["joules_total"]) == pytest.approx(80.0 * 0.3)


@pytest.mark.parametrize("args", [["--profile", "sgx"], ["--synthetic-power", "1,2"], ["--sizes", "8"]])
def test_bad_bench_arguments(tmp_path, args):
    assert bench(tmp_path, *args) == 2


def test_main_module_help():
    proc = subprocess.run([sys.executable, "-m", "evstream", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "serve" in proc.stdout
