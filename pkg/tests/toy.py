"""Small random sample sets for model and metric tests."""

import numpy as np

from pumpsnn.features import DatasetSplit, SampleSet

COINS = tuple(f"K{i:02d}" for i in range(30))
CHANNELS = ("a", "b", "c", "d")
SEQ_NAMES = ("cap", "reach")
TARGET_NAMES = ("r1", "r60", "vol")
CHANNEL_NAMES = ("n_prior",)


def samples(rng, n_lists=40, n_cand=12, N=6, t0=0):
    """Random SampleSet with one positive per list; positives have shifted target fields."""
    seq_len = rng.integers(0, N + 1, size=n_lists)
    mask = np.arange(N)[None, :] < seq_len[:, None]
    seq_coin = np.where(mask, rng.choice(COINS, size=(n_lists, N)), "")
    cand = np.stack([rng.choice(COINS, size=n_cand, replace=False) for _ in range(n_lists)])
    labels = np.zeros((n_lists, n_cand), dtype=np.int8)
    labels[np.arange(n_lists), rng.integers(0, n_cand, size=n_lists)] = 1
    S = n_lists * n_cand
    return SampleSet(
        list_refs=np.array([f"e{t0 + i}" for i in range(n_lists)]),
        list_channel=rng.choice(CHANNELS, size=n_lists),
        list_time=np.arange(t0, t0 + n_lists, dtype=np.int64) * 1000 + 10_000,
        channel_numeric=rng.normal(size=(n_lists, len(CHANNEL_NAMES))),
        seq_coin=seq_coin,
        seq_numeric=rng.normal(size=(n_lists, N, len(SEQ_NAMES))) * mask[..., None],
        seq_mask=mask,
        seq_time=np.where(mask, 1, 0).astype(np.int64),
        sample_list=np.repeat(np.arange(n_lists), n_cand),
        target_coin=cand.ravel(),
        target_numeric=rng.normal(size=(S, len(TARGET_NAMES))) + 1.5 * labels.reshape(-1, 1),
        labels=labels.ravel(),
        channel_names=CHANNEL_NAMES,
        target_names=TARGET_NAMES,
        seq_names=SEQ_NAMES,
    )


def split(seed=0, N=6):
    rng = np.random.default_rng(seed)
    return DatasetSplit(samples(rng, 60, N=N), samples(rng, 20, N=N, t0=60),
                        samples(rng, 20, N=N, t0=80), 60_000, 80_000)
