"""Petits jeux synthétiques partagés par les tests d'entraînement et de services."""
from abrsi.data import synth_pair
from abrsi.numerics import make_rng
from abrsi.trainer import TrainConfig


def tiny_domains(seed=0, k=3, d_s=6, d_t=4, n_s=45, n_t=36, separation=6.0):
    return synth_pair(make_rng(seed), k, d_s, d_t, n_s, n_t, separation)


def tiny_config(**overrides):
    values = dict(epochs=3, shared_dim=4, hidden_width=8, top_n=2, tr_clusters=4, lr=0.01, seed=0)
    values.update(overrides)
    return TrainConfig(**values)


def quick_experiment(**overrides):
    """Expérience synthétique minuscule, sérialisable telle quelle en JSON."""
    payload = {
        "name": "quick",
        "synthetic": {"k": 3, "d_s": 6, "d_t": 4, "n_s": 45, "n_t": 36},
        "seeds": [0],
        "train": {"epochs": 2, "shared_dim": 4, "hidden_width": 8, "top_n": 2, "tr_clusters": 4},
    }
    payload.update(overrides)
    return payload
