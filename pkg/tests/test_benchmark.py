import runpy
from pathlib import Path

import pytest

from autoids import _backend

BENCH = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"


@pytest.mark.skipif(_backend.BACKEND != "compiled", reason="compiled extension not active")
def test_benchmark_runs_and_backends_agree(capsys, monkeypatch):
    monkeypatch.setattr("sys.argv", ["bench", "--rows", "300", "--features", "5", "--repeat", "1"])
    runpy.run_path(str(BENCH), run_name="__main__")
    lines = [ln for ln in capsys.readouterr().out.splitlines() if ln and not ln.startswith(("kernel", "model"))]
    assert len(lines) == 11
    assert all(ln.rstrip().endswith("True") for ln in lines)
