import os
import subprocess
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]


@pytest.mark.parametrize("flag, expected", [("1", "numpy"), ("true", "numpy"), ("", "numba"), ("0", "numba")])
def test_env_flag_selects_backend(flag, expected):
    env = dict(os.environ, INVSTATS_DISABLE_NUMBA=flag)
    out = subprocess.run(
        [sys.executable, "-c", "from invstats import _accel; print(_accel.backend())"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == expected


def test_benchmark_runs_and_backends_agree():
    out = subprocess.run(
        [sys.executable, str(ROOT / "benchmarks" / "bench_kernels.py"), "--repeat", "1", "--n", "20000"],
        capture_output=True, text=True, check=True,
    )
    lines = out.stdout.strip().splitlines()
    assert len(lines) == 3 and all(line.endswith("agree=True") for line in lines)
