import numpy as np
import pytest

from platter import composer, synthgen


@pytest.fixture(scope="session")
def small_pool(tmp_path_factory):
    """40-word, 2-style pool with its atlas; shared across test modules."""
    pool_dir = tmp_path_factory.mktemp("pool_small")
    lexicon = synthgen.random_lexicon(40, seed=11)
    entries, atlas = synthgen.build_pool(lexicon, styles_per_word=2, seed=11, out_dir=pool_dir)
    return {"dir": pool_dir, "entries": entries, "atlas": atlas, "lexicon": lexicon}


@pytest.fixture(scope="session")
def small_dataset(small_pool, tmp_path_factory):
    """Small composed dataset (train/test) for pipeline and CLI tests."""
    out_dir = tmp_path_factory.mktemp("dataset_small")
    cfg = composer.ComposerConfig(seed=11)
    manifest = composer.compose_dataset(
        small_pool["dir"], cfg, {"train": 0.5, "test": 0.5}, out_dir=out_dir
    )
    return {"dir": out_dir, "manifest": manifest, "config": cfg}


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
