import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rulsmc.bayes import TemperedPosterior
from rulsmc.damage import GrowthLaw, ModelParams
from rulsmc.data import synth_data

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

TRUTH = ModelParams(log10_alpha=-4.0, beta=1.3, sigma=0.2)


@pytest.fixture
def law():
    return GrowthLaw(a0=1.0, a_fail=20.0)


@pytest.fixture
def truth():
    return TRUTH


@pytest.fixture
def crack_obs(law):
    return synth_data(TRUTH, law, n_points=20, cycle_span=(0, 15000), seed=1)


@pytest.fixture
def crack_target(crack_obs, law):
    return TemperedPosterior(crack_obs, law=law)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def crack_posterior():
    """Short MCMC run on the standard synthetic crack series, shared across modules."""
    from rulsmc.mcmc import McmcConfig, run_mcmc

    law = GrowthLaw(a0=1.0, a_fail=20.0)
    obs = synth_data(TRUTH, law, n_points=20, cycle_span=(0, 15000), seed=1)
    return run_mcmc(McmcConfig(n_samples=20_000, n_burn=5000, thin=5, seed=1), TemperedPosterior(obs, law=law))


_CRITERIA = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record an acceptance criterion outcome; printed again in the terminal summary."""
    results = request.config.stash.setdefault(_CRITERIA, {})

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        results[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_CRITERIA, {})
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
