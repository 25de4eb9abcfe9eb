import numpy as np
import pytest

from bayescp.hmc import HmcConfig, run_chains
from bayescp.model import derive_priors
from bayescp.synth import SynthSpec, generate

# Strong-signal recovery fixture shared by several test modules.
RECOVERY_SPEC = SynthSpec(w1=0.004, w2=-0.006, b1=0.5, b2=4.5, tau_true=0.75,
                          sigma_true=0.3, T=400, noise_kind="normal", seed=42)


@pytest.fixture(scope="session")
def recovery_series():
    return generate(RECOVERY_SPEC)


@pytest.fixture(scope="session")
def small_series():
    spec = SynthSpec(w1=0.01, w2=-0.02, b1=1.0, b2=3.0, tau_true=0.6,
                     sigma_true=0.25, T=60, noise_kind="normal", seed=3)
    return generate(spec)


@pytest.fixture(scope="session")
def small_fit(small_series):
    """A short run on a short series; enough draws for report/diagnostic plumbing."""
    priors = derive_priors(small_series)
    cfg = HmcConfig(num_samples=150, num_chains=2, warmup_steps=150, seed=11)
    return run_chains(small_series, priors, "normal", 20.0, cfg)


@pytest.fixture(scope="session")
def recovery_fit(recovery_series):
    """The default configuration (4 chains, 500 warmup, 800 draws) on the recovery fixture."""
    priors = derive_priors(recovery_series)
    return run_chains(recovery_series, priors, "normal", 20.0, HmcConfig(seed=0))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# -- acceptance verdicts ------------------------------------------------------

_VERDICTS = pytest.StashKey[dict]()
NUM_CRITERIA = 10


def pytest_configure(config):
    config.stash[_VERDICTS] = {}


@pytest.fixture
def verdict(request):
    """Record one acceptance criterion's outcome, print it, then assert it."""
    store = request.config.stash[_VERDICTS]

    def record(number: int, ok: bool, detail: str):
        store[number] = (bool(ok), detail)
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_VERDICTS, {})
    if not store:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in range(1, NUM_CRITERIA + 1):
        ok, detail = store.get(n, (False, "did not complete"))
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
