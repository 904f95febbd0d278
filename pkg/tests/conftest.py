import numpy as np
import pytest

from rvk import toydata, trainer


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    """10 s synthetic corpus shared across the suite."""
    root = tmp_path_factory.mktemp("toy_corpus")
    toydata.build_corpus(root, total_seconds=10.0, seed=0)
    return root


@pytest.fixture(scope="session")
def toy_run(tmp_path_factory, toy_corpus):
    """The full desk-scale training run: 200 pretrain + 300 adversarial.

    Returns (config, final checkpoint path, per-step LossReports).
    Session-scoped because it takes minutes; every test that needs a
    trained vocoder shares it.
    """
    out = tmp_path_factory.mktemp("toy_run")
    cfg = trainer.TrainConfig(data_dir=str(toy_corpus), out_dir=str(out),
                              segment_frames=16, batch_size=2,
                              pretrain_steps=200, total_steps=500,
                              checkpoint_interval=100, seed=0)
    reports = []
    ckpt = trainer.train(cfg, log=None, report_sink=reports)
    return cfg, ckpt, reports


@pytest.fixture(scope="session")
def uv_corpus(tmp_path_factory):
    """60 s corpus of harmonic tones and noise bursts for UV training."""
    root = tmp_path_factory.mktemp("uv_corpus")
    toydata.build_corpus(root, total_seconds=60.0, seed=3)
    return root


@pytest.fixture(scope="session")
def uv_trained(tmp_path_factory, uv_corpus):
    """Separately trained voicing predictor plus its held-out accuracy."""
    out = tmp_path_factory.mktemp("uv_out")
    index = trainer.index_dataset(uv_corpus, out / "cache")
    cfg = trainer.TrainConfig(data_dir=str(uv_corpus), out_dir=str(out))
    uvp, acc = trainer.train_uv_predictor(index, cfg)
    return index, uvp, acc


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
