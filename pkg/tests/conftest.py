import numpy as np
import pytest

from mixcomp import ingest, vi

# small, fast fit used by tests that need a converged-ish posterior but
# don't measure accuracy
FAST_FIT = vi.FitConfig(seed=0, max_iters=400, mc_samples=4, elbo_check_every=50,
                        elbo_eval_samples=10)


@pytest.fixture
def fast_fit():
    return FAST_FIT


@pytest.fixture
def grid_matrix():
    """Fully observed 3x3 matrix with deterministic values."""
    rng = np.random.default_rng(2024)
    records = [
        ingest.ObservationRecord(f"S{i}", f"W{j}", float(rng.normal()), True)
        for i in range(3)
        for j in range(3)
    ]
    return ingest.build_matrix(records)


@pytest.fixture
def corpus_csv(tmp_path):
    """A small CSV exercising quality flags, duplicates, and the system filter."""
    text = (
        "solute,solvent,ln_gamma,quality\n"
        "S1,W1,1.0,ok\n"
        "S1,W2,2.0,ok\n"
        "S2,W1,3.0,ok\n"
        "S2,W2,4.0,ok\n"
        "S1,W1,3.0,ok\n"          # duplicate of (S1, W1): mean 2.0
        "S3,W1,9.0,poor\n"        # dropped by quality
        "S3,W3,5.0,ok\n"          # S3 and W3 fall below two systems
        "\n"
        "S2,W1,5.0,poor\n"        # dropped by quality, not averaged in
    )
    path = tmp_path / "corpus.csv"
    path.write_text(text, encoding="utf-8")
    return path
