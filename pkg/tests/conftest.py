import pytest

from mode2cap import ScenarioConfig, validate_config


@pytest.fixture
def scenario():
    """Reference scenario: the defaults (B=10, M=3, tau=0.5 ms, W=20,
    S=23 dBm, A=36, beta=3, T=2.3 dB, gamma=1.15) with phi=0.05/m and
    sigma=1e-13 W pinned for tests."""
    return validate_config(ScenarioConfig())


def make_scenario(**overrides) -> ScenarioConfig:
    return validate_config(ScenarioConfig(**overrides))
