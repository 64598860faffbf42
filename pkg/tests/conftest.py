import numpy as np
import pytest
import torch

from diagforge import (
    CorpusSpec,
    DenoisingDiffusion,
    DiagInpaintBackend,
    build_corpus,
    synthesize_defect_bank,
)


@pytest.fixture(scope="session")
def tiny_bundle():
    """Small but complete corpus: enough for split logic, not for quality."""
    spec = CorpusSpec(n_neg_train=12, n_pos_train=8, n_test_pos=6, n_test_neg=6, seed=11)
    return build_corpus(spec)


@pytest.fixture(scope="session")
def bank8():
    return synthesize_defect_bank(8, (64, 64), 777)


@pytest.fixture(scope="session")
def small_diffusion(bank8):
    """Barely-trained model; tests that need it care about plumbing, not quality."""
    est = DenoisingDiffusion(T=30, epochs=3, hidden=8, emb_dim=16, seed=0)
    est.fit([img for img, _, _ in bank8], [kind for _, _, kind in bank8])
    return est


@pytest.fixture(scope="session")
def small_backend(small_diffusion):
    return DiagInpaintBackend(small_diffusion)


@pytest.fixture()
def rng():
    return np.random.default_rng(42)


@pytest.fixture()
def torch_gen():
    return torch.Generator().manual_seed(42)
