import numpy as np
import pytest

from addle.backbone import BackboneConfig, ConvSpec, InjectionSpec, Model, init_params
from addle.latent import LatentCodebook


def random_model(seed: int = 0, R: int = 4, M: int = 3, conv: bool = False, spread: float = 1.0) -> Model:
    rng = np.random.default_rng(seed)
    if conv:
        cfg = BackboneConfig(input_dim=8, hidden=(6,), latent_dim=M, conv=ConvSpec(3, 3), injections=(InjectionSpec(0, "spatial"), InjectionSpec(2, "dense")))
    else:
        cfg = BackboneConfig(input_dim=5, hidden=(7, 6), latent_dim=M, injections=(InjectionSpec(1),))
    params = init_params(cfg, seed)
    params = {k: v + (rng.normal(0, 0.3, v.shape) if k.endswith(".b") else 0) for k, v in params.items()}
    cb = LatentCodebook(rng.normal(0, spread, (R, M)))
    return Model(cfg, params, "addle", cb)


@pytest.fixture
def model():
    return random_model(0)


# acceptance criteria report: one line per criterion, printed after the run
ACCEPTANCE: list[tuple[str, bool, str]] = []


def report(criterion: str, ok: bool, detail: str) -> bool:
    line = f"{criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE.append((criterion, ok, detail))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{criterion}: {'PASS' if ok else 'FAIL'}  {detail}")
