"""Shared fixtures for the trainer test suite.

The trainer talks to the benchmark exclusively through its command-line
interface and file formats, so these fixtures shell out to ``iclbench``
rather than importing it.  A tiny "toy" scenario (M = 2, T = 6, five
replications) keeps the cross-package tests fast while exercising the real
stream and record files.
"""

from __future__ import annotations

import shutil
import subprocess
from types import SimpleNamespace

import pytest

TOY_TOML = """\
[[scenario]]
id = "toy"
M = 2
sigma_w_sq = 1.0
sigma_eps_sq = 0.1
T = 6
replications = 5
"""


@pytest.fixture(scope="session")
def bench():
    """Run the benchmark CLI and return the completed process."""
    exe = shutil.which("iclbench")
    if exe is None:
        pytest.fail("the 'iclbench' command must be installed to run these tests")

    def run(*args: object) -> subprocess.CompletedProcess:
        return subprocess.run(
            [exe, *map(str, args)], capture_output=True, text=True
        )

    return run


@pytest.fixture(scope="session")
def toy(bench, tmp_path_factory):
    """A generated toy workspace: scenario TOML plus its stream file."""
    root = tmp_path_factory.mktemp("toy")
    toml = root / "toy.toml"
    toml.write_text(TOY_TOML)
    proc = bench("gen", "--scenarios", toml, "--out", root)
    assert proc.returncode == 0, proc.stderr
    streams = root / "streams-toy.tsv"
    assert streams.exists()
    return SimpleNamespace(root=root, toml=toml, streams=streams)
