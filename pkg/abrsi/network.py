# abrsi/network.py
"""
Réseaux peu profonds du modèle : projecteurs par domaine (E_S, E_T),
classifieur partagé (C) et discriminateur d'erreur (D), avec passes avant,
rétropropagation analytique, optimiseur Adam et points de reprise.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
from scipy.special import expit, softmax

from .data import DomainTag
from .errors import DimensionMismatchError, NonFiniteGradientError, TapeError

logger = logging.getLogger(__name__)

LEAKY_SLOPE = 0.01
ACTIVATIONS = ("leaky_relu", "softmax", "sigmoid", "linear")
NETWORK_NAMES = ("e_s", "e_t", "c", "d")


@dataclass
class Layer:
    weight: np.ndarray  # in × out
    bias: np.ndarray
    activation: str

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"Activation inconnue '{self.activation}'")


@dataclass
class LayerGrad:
    weight: np.ndarray
    bias: np.ndarray


@dataclass
class GradTape:
    """Entrées et pré-activations d'une passe avant, consommées par un seul backward."""
    network: str
    inputs: List[np.ndarray]
    pre_activations: List[np.ndarray]
    outputs: List[np.ndarray]
    consumed: bool = False


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "leaky_relu":
        return np.where(z > 0, z, LEAKY_SLOPE * z)
    if activation == "softmax":
        return softmax(z, axis=1)
    if activation == "sigmoid":
        return expit(z)
    return z


def _activation_backward(z: np.ndarray, out: np.ndarray, upstream: np.ndarray, activation: str) -> np.ndarray:
    if activation == "leaky_relu":
        return upstream * np.where(z > 0, 1.0, LEAKY_SLOPE)
    if activation == "softmax":
        return out * (upstream - np.sum(upstream * out, axis=1, keepdims=True))
    if activation == "sigmoid":
        return upstream * out * (1.0 - out)
    return upstream


class Mlp:
    def __init__(self, name: str, layers: List[Layer]):
        for previous, current in zip(layers, layers[1:]):
            if previous.weight.shape[1] != current.weight.shape[0]:
                raise DimensionMismatchError(f"Mlp({name})", previous.weight.shape, current.weight.shape)
        self.name = name
        self.layers = layers

    @property
    def in_dim(self) -> int:
        return int(self.layers[0].weight.shape[0])

    @property
    def out_dim(self) -> int:
        return int(self.layers[-1].weight.shape[1])

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, GradTape]:
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise DimensionMismatchError(f"{self.name}.forward", x.shape, (None, self.in_dim))
        tape = GradTape(network=self.name, inputs=[], pre_activations=[], outputs=[])
        activation = x
        for layer in self.layers:
            tape.inputs.append(activation)
            z = activation @ layer.weight + layer.bias
            activation = _activate(z, layer.activation)
            tape.pre_activations.append(z)
            tape.outputs.append(activation)
        return activation, tape

    def backward(self, tape: GradTape, upstream: np.ndarray) -> Tuple[List[LayerGrad], np.ndarray]:
        """Gradients des poids et de l'entrée à partir de dL/d(sortie)."""
        if tape.network != self.name:
            raise TapeError(f"Bande du réseau '{tape.network}' passée à '{self.name}'")
        if tape.consumed:
            raise TapeError(f"Bande de '{self.name}' déjà consommée")
        if upstream.shape != tape.outputs[-1].shape:
            raise TapeError(f"{self.name}: gradient amont {upstream.shape}, sortie {tape.outputs[-1].shape}")
        tape.consumed = True

        grads: List[LayerGrad] = [None] * len(self.layers)
        delta = upstream
        for index in reversed(range(len(self.layers))):
            layer = self.layers[index]
            dz = _activation_backward(tape.pre_activations[index], tape.outputs[index], delta, layer.activation)
            grads[index] = LayerGrad(weight=tape.inputs[index].T @ dz, bias=dz.sum(axis=0))
            delta = dz @ layer.weight.T
        return grads, delta

    def parameters(self) -> Iterator[Tuple[str, np.ndarray]]:
        for index, layer in enumerate(self.layers):
            yield f"{self.name}.layers[{index}].weight", layer.weight
            yield f"{self.name}.layers[{index}].bias", layer.bias

    def copy(self) -> "Mlp":
        return Mlp(self.name, [Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers])


@dataclass
class NetworkParams:
    e_s: Mlp
    e_t: Mlp
    c: Mlp
    d: Mlp

    def __post_init__(self):
        if self.e_s.out_dim != self.e_t.out_dim:
            raise DimensionMismatchError("NetworkParams(e_s, e_t)", (self.e_s.out_dim,), (self.e_t.out_dim,))
        if self.c.in_dim != self.e_s.out_dim:
            raise DimensionMismatchError("NetworkParams(e, c)", (self.e_s.out_dim,), (self.c.in_dim,))

    @property
    def shared_dim(self) -> int:
        return self.e_s.out_dim

    @property
    def k_categories(self) -> int:
        return self.c.out_dim

    def networks(self) -> Dict[str, Mlp]:
        return {"e_s": self.e_s, "e_t": self.e_t, "c": self.c, "d": self.d}

    def parameters(self) -> Iterator[Tuple[str, np.ndarray]]:
        for network in self.networks().values():
            yield from network.parameters()

    def copy(self) -> "NetworkParams":
        return NetworkParams(e_s=self.e_s.copy(), e_t=self.e_t.copy(), c=self.c.copy(), d=self.d.copy())


def _init_layer(fan_in: int, fan_out: int, activation: str, rng: np.random.Generator) -> Layer:
    # Uniforme façon Kaiming, bornée par le fan-in.
    gain = np.sqrt(2.0 / (1.0 + LEAKY_SLOPE**2)) if activation == "leaky_relu" else 1.0
    bound = gain * np.sqrt(3.0 / fan_in)
    weight = rng.uniform(-bound, bound, size=(fan_in, fan_out))
    bias = rng.uniform(-1.0 / np.sqrt(fan_in), 1.0 / np.sqrt(fan_in), size=fan_out)
    return Layer(weight=weight, bias=bias, activation=activation)


def init_network(
    d_s: int,
    d_t: int,
    shared_dim: int,
    k: int,
    hidden_width: int,
    rng: np.random.Generator,
    discriminator_in_dim: Optional[int] = None,
) -> NetworkParams:
    """Projecteurs à deux couches LeakyReLU, classifieur et discriminateur à une couche."""
    def projector(name, in_dim):
        return Mlp(name, [
            _init_layer(in_dim, hidden_width, "leaky_relu", rng),
            _init_layer(hidden_width, shared_dim, "leaky_relu", rng),
        ])

    e_s = projector("e_s", d_s)
    e_t = projector("e_t", d_t)
    c = Mlp("c", [_init_layer(shared_dim, k, "softmax", rng)])
    d = Mlp("d", [_init_layer(discriminator_in_dim or k, 1, "sigmoid", rng)])
    return NetworkParams(e_s=e_s, e_t=e_t, c=c, d=d)


def project(params: NetworkParams, x: np.ndarray, domain: DomainTag) -> Tuple[np.ndarray, GradTape]:
    projector = params.e_s if DomainTag(domain) is DomainTag.SOURCE else params.e_t
    return projector.forward(x)


def classify(params: NetworkParams, features: np.ndarray) -> np.ndarray:
    probs, _ = params.c.forward(features)
    return probs


ParamGrads = Dict[str, List[LayerGrad]]


def zero_grads(params: NetworkParams) -> ParamGrads:
    return {
        name: [LayerGrad(np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in network.layers]
        for name, network in params.networks().items()
    }


def add_grads(left: ParamGrads, right: ParamGrads) -> ParamGrads:
    return {
        name: [LayerGrad(a.weight + b.weight, a.bias + b.bias) for a, b in zip(left[name], right[name])]
        for name in left
    }


def scale_grads(grads: ParamGrads, factor: float) -> ParamGrads:
    return {name: [LayerGrad(g.weight * factor, g.bias * factor) for g in layers] for name, layers in grads.items()}


def flatten_grads(grads: ParamGrads) -> Iterator[Tuple[str, np.ndarray]]:
    for name in NETWORK_NAMES:
        for index, grad in enumerate(grads[name]):
            yield f"{name}.layers[{index}].weight", grad.weight
            yield f"{name}.layers[{index}].bias", grad.bias


def grad_reverse(gradient: Optional[np.ndarray]) -> Optional[np.ndarray]:
    """Couche d'inversion de gradient : identité en avant, ×(−1) en arrière."""
    return None if gradient is None else -gradient


@dataclass
class ForwardTapes:
    source_features: GradTape
    target_features: GradTape
    source_probs: GradTape
    target_probs: GradTape


@dataclass
class Upstream:
    """
    Gradients amont d'une itération. Les champs `adversarial_*` sont les
    gradients de la perte du discriminateur ; ils traversent la couche
    d'inversion avant d'atteindre E et C. `discriminator` porte les
    gradients propres de D, non inversés.
    """
    probs_s: Optional[np.ndarray] = None
    probs_t: Optional[np.ndarray] = None
    feats_s: Optional[np.ndarray] = None
    feats_t: Optional[np.ndarray] = None
    adversarial_probs_s: Optional[np.ndarray] = None
    adversarial_probs_t: Optional[np.ndarray] = None
    adversarial_feats_s: Optional[np.ndarray] = None
    adversarial_feats_t: Optional[np.ndarray] = None
    discriminator: Optional[List[LayerGrad]] = None


def _sum_present(shape, *terms) -> np.ndarray:
    total = np.zeros(shape)
    for term in terms:
        if term is not None:
            if term.shape != shape:
                raise TapeError(f"Gradient amont {term.shape} incompatible avec {shape}")
            total = total + term
    return total


def backward(params: NetworkParams, tapes: ForwardTapes, upstream: Upstream) -> ParamGrads:
    """Rétropropagation complète C -> E pour les deux domaines, plus les gradients de D."""
    grads = zero_grads(params)
    for domain, feature_tape, probs_tape in (
        ("s", tapes.source_features, tapes.source_probs),
        ("t", tapes.target_features, tapes.target_probs),
    ):
        probs_upstream = _sum_present(
            probs_tape.outputs[-1].shape,
            getattr(upstream, f"probs_{domain}"),
            grad_reverse(getattr(upstream, f"adversarial_probs_{domain}")),
        )
        c_grads, d_features = params.c.backward(probs_tape, probs_upstream)
        grads["c"] = [LayerGrad(a.weight + b.weight, a.bias + b.bias) for a, b in zip(grads["c"], c_grads)]

        features_upstream = _sum_present(
            feature_tape.outputs[-1].shape,
            d_features,
            getattr(upstream, f"feats_{domain}"),
            grad_reverse(getattr(upstream, f"adversarial_feats_{domain}")),
        )
        projector = params.e_s if domain == "s" else params.e_t
        grads[projector.name], _ = projector.backward(feature_tape, features_upstream)

    if upstream.discriminator is not None:
        grads["d"] = upstream.discriminator
    return grads


@dataclass
class AdamState:
    step: int
    first: ParamGrads
    second: ParamGrads
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(params: NetworkParams) -> AdamState:
    return AdamState(step=0, first=zero_grads(params), second=zero_grads(params))


def optimizer_step(params: NetworkParams, grads: ParamGrads, state: AdamState, lr: float) -> NetworkParams:
    """Mise à jour Adam en place ; renvoie les paramètres mis à jour."""
    for tensor_name, tensor in flatten_grads(grads):
        if not np.all(np.isfinite(tensor)):
            raise NonFiniteGradientError(tensor_name)

    state.step += 1
    correction1 = 1.0 - state.beta1**state.step
    correction2 = 1.0 - state.beta2**state.step
    for name, network in params.networks().items():
        for layer, grad, m, v in zip(network.layers, grads[name], state.first[name], state.second[name]):
            for attribute in ("weight", "bias"):
                g = getattr(grad, attribute)
                m_value = state.beta1 * getattr(m, attribute) + (1.0 - state.beta1) * g
                v_value = state.beta2 * getattr(v, attribute) + (1.0 - state.beta2) * g * g
                setattr(m, attribute, m_value)
                setattr(v, attribute, v_value)
                update = lr * (m_value / correction1) / (np.sqrt(v_value / correction2) + state.eps)
                setattr(layer, attribute, getattr(layer, attribute) - update)
    return params


# --- Points de reprise ---

@dataclass
class Checkpoint:
    params: NetworkParams
    adam: AdamState
    epoch: int
    rng_state: dict
    ek_current: np.ndarray
    ek_previous: np.ndarray
    meta: dict = field(default_factory=dict)


def _grads_to_arrays(prefix: str, grads: ParamGrads) -> Dict[str, np.ndarray]:
    return {
        f"{prefix}/{name}/{index}/{attribute}": getattr(grad, attribute)
        for name in NETWORK_NAMES
        for index, grad in enumerate(grads[name])
        for attribute in ("weight", "bias")
    }


def save_checkpoint(path, checkpoint: Checkpoint) -> Path:
    """
    Format : archive .npz ; les tableaux sont rangés sous
    `params|adam_m|adam_v/<réseau>/<couche>/<weight|bias>` et `ek/<current|previous>`,
    les métadonnées (époque, état RNG, activations, pas Adam) dans `meta` en JSON.
    """
    params_as_grads = {
        name: [LayerGrad(l.weight, l.bias) for l in network.layers] for name, network in checkpoint.params.networks().items()
    }
    arrays = {
        **_grads_to_arrays("params", params_as_grads),
        **_grads_to_arrays("adam_m", checkpoint.adam.first),
        **_grads_to_arrays("adam_v", checkpoint.adam.second),
        "ek/current": checkpoint.ek_current,
        "ek/previous": checkpoint.ek_previous,
    }
    meta = {
        **checkpoint.meta,
        "epoch": checkpoint.epoch,
        "rng_state": checkpoint.rng_state,
        "adam_step": checkpoint.adam.step,
        "activations": {
            name: [l.activation for l in network.layers] for name, network in checkpoint.params.networks().items()
        },
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as handle:
        np.savez_compressed(handle, meta=np.array(json.dumps(meta)), **arrays)
    logger.info(f"Point de reprise écrit : {path} (époque {checkpoint.epoch})")
    return path


def load_checkpoint(path) -> Checkpoint:
    with np.load(path, allow_pickle=False) as archive:
        meta = json.loads(str(archive["meta"]))
        arrays = {key: archive[key] for key in archive.files if key != "meta"}

    def _rebuild(prefix):
        return {
            name: [
                LayerGrad(arrays[f"{prefix}/{name}/{index}/weight"], arrays[f"{prefix}/{name}/{index}/bias"])
                for index in range(len(meta["activations"][name]))
            ]
            for name in NETWORK_NAMES
        }

    raw = _rebuild("params")
    networks = {
        name: Mlp(name, [Layer(g.weight, g.bias, act) for g, act in zip(raw[name], meta["activations"][name])])
        for name in NETWORK_NAMES
    }
    adam = AdamState(step=int(meta["adam_step"]), first=_rebuild("adam_m"), second=_rebuild("adam_v"))
    return Checkpoint(
        params=NetworkParams(**networks),
        adam=adam,
        epoch=int(meta["epoch"]),
        rng_state=meta["rng_state"],
        ek_current=arrays["ek/current"],
        ek_previous=arrays["ek/previous"],
        meta={k: v for k, v in meta.items() if k not in ("epoch", "rng_state", "adam_step", "activations")},
    )
