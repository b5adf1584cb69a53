import numpy as np
import pytest

from swiptsec.channel import ChannelSet, DelayProfile, Geometry, build_channel_set
from swiptsec.sysmodel import DesignPoint, SystemParams


def small_params(**over) -> SystemParams:
    """Desk-scale system used throughout the unit tests."""
    base = dict(n_sub=3, n_tx=3, n_rx=2, n_eve=2, n_elem=4,
                noise_irs=1e-7, noise_ant=1e-9, noise_sp=1e-7, noise_eve=1e-9,
                p_tx=0.5, p_reflect=0.05, eh_target=0.0)
    base.update(over)
    return SystemParams(**base)


def random_channels(params: SystemParams, seed: int = 0, gain: float = 1.0) -> ChannelSet:
    """Unit-variance flat Rayleigh channels; bypasses geometry for speed."""
    rng = np.random.default_rng(seed)

    def draw(rows, cols):
        return np.sqrt(gain / 2) * (rng.standard_normal((params.n_sub, rows, cols))
                                    + 1j * rng.standard_normal((params.n_sub, rows, cols)))

    return ChannelSet(alice_bob=draw(params.n_rx, params.n_tx),
                      alice_irs=draw(params.n_elem, params.n_tx),
                      irs_bob=draw(params.n_rx, params.n_elem),
                      alice_eve=draw(params.n_eve, params.n_tx),
                      irs_eve=draw(params.n_eve, params.n_elem),
                      seed=seed)


def random_point(params: SystemParams, seed: int = 0, tx_scale: float = 0.1,
                 reflect_scale: float = 1.0) -> DesignPoint:
    rng = np.random.default_rng(seed)

    def cplx(*shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)

    return DesignPoint(
        precoders=tx_scale * cplx(params.n_sub, params.n_tx, params.n_streams),
        an_precoders=tx_scale * cplx(params.n_sub, params.n_tx, params.n_tx),
        reflect=reflect_scale * cplx(params.n_elem),
        split=rng.uniform(0.2, 0.9, params.n_rx),
    )


@pytest.fixture
def params():
    return small_params()


@pytest.fixture
def channels(params):
    return random_channels(params, seed=11)
