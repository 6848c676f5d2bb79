import sys
import time
from pathlib import Path
from types import SimpleNamespace

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make oracles importable

from kpex import JlsdConfig, gen_synthetic, split_dataset, train_supervised


@pytest.fixture(scope="session")
def standard_corpus():
    """500/100/100 split of the seed-fixed reference synthetic corpus."""
    ds = gen_synthetic(42, 700, vocab_size=120, keyword_fraction=0.25)
    return split_dataset(ds, [500, 100, 100], names=["train", "dev", "test"])


@pytest.fixture(scope="session")
def trained_standard(standard_corpus):
    """Supervised model trained once on the reference corpus, with timing."""
    train, dev, test = standard_corpus
    config = JlsdConfig(T=2000, eval_every=50, patience=6, seed=0)
    t0 = time.perf_counter()
    model, report = train_supervised(train, dev, config)
    elapsed = time.perf_counter() - t0
    return SimpleNamespace(
        model=model, report=report, elapsed=elapsed, config=config,
        train=train, dev=dev, test=test,
    )
