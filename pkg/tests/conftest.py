import numpy as np
import pytest

from placeboiv import simulator
from placeboiv.data import TrialDataset
from placeboiv.simulator import ParameterPoint
from placeboiv.simulator import ScenarioConfig


def four_rows(**columns) -> TrialDataset:
    """The hand-computed example: psi-hat = 2, two-step beta-hat = -2."""
    values = dict(
        z=[0, 1, 0, 1],
        q=[0, 0, 1, 1],
        x=[0, 1, 0, 1],
        e=[0, 1, 0, 1],
        d=[0, 0, 1, 1],
        m=[0, 1, 1, 2],
        y=[1, 1, 3, 3],
    )
    values.update(columns)
    return TrialDataset.from_interaction(**values)


def simulated(
    blinded: bool = False,
    confounded: bool = True,
    psi_null: bool = False,
    beta_null: bool = False,
    n: int = 300,
    seed: int = 7,
    strength: float = 1.0,
) -> TrialDataset:
    """All-ones coefficients; ``strength`` sets the Z -> X, Q -> D and D -> M loadings."""
    config = ScenarioConfig(
        blinded=blinded, confounded=confounded, psi_null=psi_null, beta_null=beta_null
    )
    point = ParameterPoint.uniform(n)
    overrides = dict(theta_XZ=strength, theta_DQ=strength, theta_MD=strength)
    if blinded:
        overrides["theta_EX"] = 0.0
    if not confounded:
        overrides.update({name: 0.0 for name in simulator.CONFOUNDER_LOADINGS})
    if psi_null:
        overrides["psi"] = 0.0
    if beta_null:
        overrides["beta"] = 0.0
    return simulator.generate(config, point.copy(update=overrides), seed)


@pytest.fixture
def hand_dataset() -> TrialDataset:
    return four_rows()


@pytest.fixture
def dataset() -> TrialDataset:
    return simulated()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def strong_dataset() -> TrialDataset:
    return simulated(strength=3.0)
