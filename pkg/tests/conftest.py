# tests/conftest.py
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import pytest

from models import LearnerSpec
from services.gradcheck import numeric_gradient
from services.tensor_autodiff import GradTape, Parameter, Tensor, backward
from services.text_pipeline import EmbeddingTable, Vocabulary, random_embeddings

SAMPLES = Path(__file__).resolve().parents[1] / "data" / "samples"


@pytest.fixture
def samples() -> Path:
    return SAMPLES


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)


@pytest.fixture
def vocab() -> Vocabulary:
    return Vocabulary(["<pad>", "<unk>"] + [f"w{i}" for i in range(10)])


@pytest.fixture
def table(vocab: Vocabulary, rng: np.random.Generator) -> EmbeddingTable:
    return random_embeddings(vocab, 3, rng, scale=1.0)


@pytest.fixture
def small_spec() -> LearnerSpec:
    return LearnerSpec(kernel_size=2, filters=4, units=2)


def assert_gradients_match(loss_fn: Callable[[], Tensor], params: Sequence[Parameter], atol: float = 1e-6) -> None:
    """Tape gradients against central differences for every parameter."""
    with GradTape() as tape:
        loss = loss_fn()
    grads = backward(tape, loss, params)
    for p in params:
        numeric = numeric_gradient(lambda: loss_fn().item(), p)
        np.testing.assert_allclose(grads[p], numeric, atol=atol, rtol=1e-5, err_msg=p.name)
