import os
import subprocess
import sys
from pathlib import Path

import pytest

from unitqa import kernels

BENCH = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"


def _active(flag):
    env = {k: v for k, v in os.environ.items() if k != "UNITQA_PURE_NUMPY"}
    if flag is not None:
        env["UNITQA_PURE_NUMPY"] = flag
    out = subprocess.run([sys.executable, "-c", "from unitqa import kernels; print(kernels.ACTIVE)"],
                         env=env, capture_output=True, text=True, check=True)
    return out.stdout.strip()


@pytest.mark.parametrize("flag,expected", [(None, "numba"), ("1", "numpy"), ("true", "numpy"),
                                           ("0", "numba")])
def test_env_flag_selects_implementation(flag, expected):
    assert _active(flag) == expected


def test_active_functions_come_from_the_selected_table():
    table = kernels.IMPLEMENTATIONS[kernels.ACTIVE]
    assert kernels.rle_runs is table["rle_runs"] and kernels.edit_distance is table["edit_distance"]
    assert set(kernels.IMPLEMENTATIONS["numba"]) == set(kernels.IMPLEMENTATIONS["numpy"])


def test_benchmark_runs_and_both_sides_agree(tmp_path):
    out = tmp_path / "bench.json"
    res = subprocess.run([sys.executable, str(BENCH), "--repeat", "1", "--json", str(out)],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert "speedup" in res.stdout and out.exists()
