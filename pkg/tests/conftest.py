import pytest

from sdp import SdpOptions, sampling_overhead
from states import (
    depolarize, ghz_w_mix, named_state, random_classical_markov, random_qmc, w_state,
)

SMALL_QMC_BLOCKS = [(1, 1, 0.5), (1, 1, 0.5)]


@pytest.fixture(scope="session")
def sdp_options():
    return SdpOptions()


@pytest.fixture(scope="session")
def w_overhead(sdp_options):
    """对称 W 态的最优分解，多个测试共用"""
    return sampling_overhead(w_state(), sdp_options)


@pytest.fixture(scope="session")
def small_qmc():
    """维度 (2, 2, 1) 的 QMC，便于构造小规模联合系统"""
    return random_qmc(SMALL_QMC_BLOCKS, d_A=2, d_C=1, seed=11)


@pytest.fixture(scope="session")
def vqmc_corpus():
    states = [w_state(), w_state(0.2, 0.5), depolarize(w_state(), 0.3),
              ghz_w_mix(0.5), named_state("s1"), named_state("s2"),
              random_qmc([(1, 2, 0.5), (2, 1, 0.5)], d_A=2, d_C=2, seed=3),
              random_classical_markov((2, 2, 2), seed=5)]
    return states
