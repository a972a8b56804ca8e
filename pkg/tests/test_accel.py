import os
import subprocess
import sys

import pytest


@pytest.mark.parametrize("value, expected", [("0", "False"), ("off", "False"), ("1", None)])
def test_env_flag_selects_path(value, expected):
    env = {**os.environ, "ECG_IDENT_NUMBA": value}
    out = subprocess.run([sys.executable, "-c", "from ecg_ident import _accel as a; print(a.USE_NUMBA, a.HAVE_NUMBA)"],
                         env=env, capture_output=True, text=True, check=True).stdout.split()
    assert out[0] == (expected or out[1])
