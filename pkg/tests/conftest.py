import numpy as np
import pytest

from scae.dataset import build_manifest, cache_spectrograms, load_split, make_toy_corpus
from scae.dsp import DspConfig


@pytest.fixture(scope="session")
def toy_wavs(tmp_path_factory):
    out = tmp_path_factory.mktemp("toy") / "wav"
    make_toy_corpus(out, n=10)
    return out


@pytest.fixture(scope="session")
def toy_cache(toy_wavs, tmp_path_factory):
    """Ten cached toy notes, split 8/1/1."""
    cache = tmp_path_factory.mktemp("toy_cache")
    manifest, _ = cache_spectrograms(build_manifest(toy_wavs), DspConfig(), cache)
    return cache, manifest


@pytest.fixture(scope="session")
def toy_train(toy_cache):
    cache, manifest = toy_cache
    ids, specs = load_split(cache, manifest, "train")
    return ids, specs, np.stack([s.values for s in specs])


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one ``criterion N: PASS|FAIL ...`` line; the lines are echoed in the terminal summary."""

    def record(number: int, ok: bool, detail: str, gating: bool = True) -> bool:
        status = "PASS" if ok else "FAIL"
        suffix = "" if gating else " (non-gating)"
        line = f"criterion {number:>2}: {status}{suffix}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
