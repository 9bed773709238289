"""
A small dense-network toolkit: forward and reverse passes over a trunk of
dense layers feeding one or more linear heads, the losses the three learners
train with, an Adam optimizer and versioned JSON weight files.

Everything is 64-bit numpy. Batches are row-major, ``x.shape == (n, 28)``.
"""

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .actions import ContractViolation, catalog_hash
from .cards import ChefsHatError
from .engine import OBSERVATION_SIZE
from .jsonutil import json_dumps, json_load

FORMAT_VERSION = 1


class DimensionMismatchError(ChefsHatError, ValueError):
    pass


class NonFiniteLossError(ChefsHatError, ArithmeticError):
    pass


class WeightFileError(ChefsHatError):
    pass


class CatalogMismatchError(WeightFileError):
    pass


def _relu(z):
    return np.maximum(z, 0.0)


def _relu_grad(z, a):
    return (z > 0.0).astype(np.float64)


def _tanh_grad(z, a):
    return 1.0 - a * a


def _linear_grad(z, a):
    return np.ones_like(z)


ACTIVATIONS = {
    "relu": (_relu, _relu_grad),
    "tanh": (np.tanh, _tanh_grad),
    "linear": (lambda z: z, _linear_grad),
}


@dataclass
class Dense:
    weight: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray  # (fan_out,)
    activation: str = "linear"

    @property
    def fan_in(self):
        return self.weight.shape[0]

    @property
    def fan_out(self):
        return self.weight.shape[1]

    @classmethod
    def init(cls, fan_in, fan_out, activation, rng, scale=1.0):
        if activation == "relu":
            limit = np.sqrt(6.0 / fan_in)
        else:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
        weight = rng.uniform(-limit, limit, size=(fan_in, fan_out)) * scale
        return cls(weight, np.zeros(fan_out), activation)


class Network:
    """
    A trunk of dense layers shared by named linear heads.

    A DQL network has one head ``q`` (200 wide), an A2C network the heads
    ``policy`` (200) and ``value`` (1), PPO uses two single-head networks.
    """

    def __init__(self, trunk: List[Dense], heads: Dict[str, Dense]):
        self.trunk = list(trunk)
        self.heads = dict(heads)
        self._check()

    @classmethod
    def build(
        cls,
        heads: Dict[str, int],
        hidden: Sequence[int] = (256, 256),
        activation="relu",
        input_width=OBSERVATION_SIZE,
        rng=None,
        head_scale=0.1,
    ):
        if activation not in ACTIVATIONS:
            raise DimensionMismatchError(f"unknown activation {activation}")
        if rng is None:
            rng = np.random.default_rng(0)
        trunk = []
        width = input_width
        for units in hidden:
            trunk.append(Dense.init(width, units, activation, rng))
            width = units
        built = {
            name: Dense.init(width, size, "linear", rng, scale=head_scale)
            for name, size in heads.items()
        }
        return cls(trunk, built)

    def _check(self):
        if not self.heads:
            raise DimensionMismatchError("a network needs at least one head")
        width = self.input_width
        for i, layer in enumerate(self.trunk):
            if layer.fan_in != width:
                raise DimensionMismatchError(
                    f"layer {i} takes {layer.fan_in} inputs, previous gives {width}"
                )
            width = layer.fan_out
        for name, head in self.heads.items():
            if head.fan_in != width:
                raise DimensionMismatchError(
                    f"head {name} takes {head.fan_in} inputs, trunk gives {width}"
                )
        for layer in self.layers():
            if layer.activation not in ACTIVATIONS:
                raise DimensionMismatchError(f"unknown activation {layer.activation}")
            if layer.bias.shape != (layer.fan_out,):
                raise DimensionMismatchError("bias does not match layer width")

    @property
    def input_width(self):
        if self.trunk:
            return self.trunk[0].fan_in
        return next(iter(self.heads.values())).fan_in

    def layers(self):
        return self.trunk + list(self.heads.values())

    def parameters(self) -> List[np.ndarray]:
        params = []
        for layer in self.layers():
            params.append(layer.weight)
            params.append(layer.bias)
        return params

    def copy(self):
        return Network(
            [Dense(l.weight.copy(), l.bias.copy(), l.activation) for l in self.trunk],
            {
                name: Dense(h.weight.copy(), h.bias.copy(), h.activation)
                for name, h in self.heads.items()
            },
        )

    def assign(self, other: "Network"):
        """copy other's parameters into this network"""
        for mine, theirs in zip(self.parameters(), other.parameters()):
            if mine.shape != theirs.shape:
                raise DimensionMismatchError("cannot assign networks of other shapes")
            mine[...] = theirs

    def is_finite(self):
        return all(np.all(np.isfinite(p)) for p in self.parameters())

    def __call__(self, x):
        return forward(self, x)


def _as_batch(net, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.input_width:
        raise DimensionMismatchError(
            f"input of shape {x.shape} for a network of width {net.input_width}"
        )
    return x, single


def _run(net, x):
    """forward pass keeping what the backward pass needs"""
    pre, acts = [], [x]
    h = x
    for layer in net.trunk:
        z = h @ layer.weight + layer.bias
        fn, _ = ACTIVATIONS[layer.activation]
        h = fn(z)
        pre.append(z)
        acts.append(h)
    outputs, head_pre = {}, {}
    for name, head in net.heads.items():
        z = h @ head.weight + head.bias
        fn, _ = ACTIVATIONS[head.activation]
        outputs[name] = fn(z)
        head_pre[name] = z
    return outputs, (pre, acts, head_pre)


def forward(net: Network, x) -> Dict[str, np.ndarray]:
    """head name -> output; a single state gives 1-d outputs"""
    x, single = _as_batch(net, x)
    outputs, _ = _run(net, x)
    if single:
        return {name: out[0] for name, out in outputs.items()}
    return outputs


def masked_log_softmax(logits, mask):
    logits = np.asarray(logits, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if not np.all(mask.any(axis=-1)):
        raise ContractViolation("softmax over a mask that allows nothing")
    z = np.where(mask, logits, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    with np.errstate(divide="ignore"):
        log_total = np.log(np.where(mask, np.exp(z), 0.0).sum(axis=-1, keepdims=True))
    return np.where(mask, z - log_total, -np.inf)


def masked_softmax(logits, mask):
    """
    probabilities over the allowed slots, exactly 0 elsewhere

    >>> mask = np.zeros(4, dtype=bool); mask[:2] = True
    >>> masked_softmax(np.zeros(4), mask).tolist()
    [0.5, 0.5, 0.0, 0.0]
    """
    logits = np.asarray(logits, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if not np.all(mask.any(axis=-1)):
        raise ContractViolation("softmax over a mask that allows nothing")
    z = np.where(mask, logits, -np.inf)
    e = np.where(mask, np.exp(z - z.max(axis=-1, keepdims=True)), 0.0)
    return e / e.sum(axis=-1, keepdims=True)


def _safe_log(p):
    with np.errstate(divide="ignore"):
        return np.where(p > 0.0, np.log(np.where(p > 0.0, p, 1.0)), 0.0)


def kl_divergence(p_old, p_new, mask):
    """
    KL(p_old || p_new) per row, over slots allowed and with p_old > 0

    >>> m = np.ones(2, dtype=bool)
    >>> round(float(kl_divergence(np.array([0.9, 0.1]), np.array([0.5, 0.5]), m)), 4)
    0.3681
    """
    p_old = np.asarray(p_old, dtype=np.float64)
    p_new = np.asarray(p_new, dtype=np.float64)
    joint = np.asarray(mask, dtype=bool) & (p_old > 0.0)
    terms = np.where(joint, p_old * (_safe_log(p_old) - _safe_log(p_new)), 0.0)
    return terms.sum(axis=-1)


def entropy(p):
    return -(p * _safe_log(p)).sum(axis=-1)


class Loss:
    """a loss over head outputs: evaluate returns (value, d value / d outputs)"""

    def evaluate(self, outputs: Dict[str, np.ndarray]):
        raise NotImplementedError


class QRegressionLoss(Loss):
    """mean squared error of the taken actions' values against fixed targets"""

    def __init__(self, actions, targets, head="q"):
        self.actions = np.asarray(actions, dtype=np.int64)
        self.targets = np.asarray(targets, dtype=np.float64)
        self.head = head

    def evaluate(self, outputs):
        q = outputs[self.head]
        n = q.shape[0]
        rows = np.arange(n)
        diff = q[rows, self.actions] - self.targets
        grad = np.zeros_like(q)
        grad[rows, self.actions] = 2.0 * diff / n
        return float(np.mean(diff * diff)), {self.head: grad}


class ValueLoss(Loss):
    def __init__(self, returns, head="value", coef=1.0):
        self.returns = np.asarray(returns, dtype=np.float64)
        self.head = head
        self.coef = coef

    def evaluate(self, outputs):
        v = outputs[self.head][:, 0]
        n = v.shape[0]
        diff = v - self.returns
        grad = np.zeros_like(outputs[self.head])
        grad[:, 0] = self.coef * 2.0 * diff / n
        return float(self.coef * np.mean(diff * diff)), {self.head: grad}


class ActorCriticLoss(Loss):
    """
    -mean(log pi(a|s) A) - c_e mean(H(pi)) + c_v mean((V - R)^2), the policy
    being the masked softmax of the policy head. Advantages are constants.
    """

    def __init__(
        self,
        actions,
        masks,
        returns,
        advantages,
        entropy_coef=0.01,
        value_coef=0.5,
        policy_head="policy",
        value_head="value",
    ):
        self.actions = np.asarray(actions, dtype=np.int64)
        self.masks = np.asarray(masks, dtype=bool)
        self.advantages = np.asarray(advantages, dtype=np.float64)
        self.entropy_coef = entropy_coef
        self.policy_head = policy_head
        self.value = ValueLoss(returns, value_head, value_coef)

    def evaluate(self, outputs):
        logits = outputs[self.policy_head]
        n = logits.shape[0]
        rows = np.arange(n)
        log_p = masked_log_softmax(logits, self.masks)
        p = np.exp(log_p)
        finite_log_p = np.where(self.masks, log_p, 0.0)
        h = entropy(p)

        actor = -np.mean(log_p[rows, self.actions] * self.advantages)
        onehot = np.zeros_like(p)
        onehot[rows, self.actions] = 1.0
        d_actor = -(self.advantages[:, None] / n) * (onehot - p)
        # d H / d z_k = -p_k (log p_k + H)
        d_entropy = -p * (finite_log_p + h[:, None])
        grad = d_actor - (self.entropy_coef / n) * d_entropy

        critic, critic_grads = self.value.evaluate(outputs)
        value = actor - self.entropy_coef * np.mean(h) + critic
        return float(value), {self.policy_head: grad, **critic_grads}


class PPOActorLoss(Loss):
    """
    -mean(ratio A) + beta mean(KL(pi_old || pi_new)), ratio = pi_new(a)/pi_old(a)
    """

    def __init__(self, actions, masks, advantages, old_probs, beta, head="policy"):
        self.actions = np.asarray(actions, dtype=np.int64)
        self.masks = np.asarray(masks, dtype=bool)
        self.advantages = np.asarray(advantages, dtype=np.float64)
        self.old_probs = np.asarray(old_probs, dtype=np.float64)
        self.beta = beta
        self.head = head

    def evaluate(self, outputs):
        logits = outputs[self.head]
        n = logits.shape[0]
        rows = np.arange(n)
        p = masked_softmax(logits, self.masks)
        ratio = p[rows, self.actions] / self.old_probs[rows, self.actions]
        kl = kl_divergence(self.old_probs, p, self.masks)
        value = -np.mean(ratio * self.advantages) + self.beta * np.mean(kl)

        onehot = np.zeros_like(p)
        onehot[rows, self.actions] = 1.0
        d_surrogate = -((self.advantages * ratio)[:, None] / n) * (onehot - p)
        joint = self.masks & (self.old_probs > 0.0)
        old = np.where(joint, self.old_probs, 0.0)
        d_kl = (p * old.sum(axis=1, keepdims=True) - old) / n
        grad = d_surrogate + self.beta * np.where(self.masks, d_kl, 0.0)
        return float(value), {self.head: grad}


@dataclass
class GradientReport:
    grads: List[np.ndarray]
    loss: float

    def global_norm(self):
        return float(np.sqrt(sum(float(np.sum(g * g)) for g in self.grads)))


def backward(net: Network, loss: Loss, x) -> GradientReport:
    """exact reverse-mode gradients of `loss` with respect to every parameter"""
    x, _ = _as_batch(net, x)
    if x.shape[0] == 0:
        raise DimensionMismatchError("backward needs a non-empty batch")
    outputs, (pre, acts, head_pre) = _run(net, x)
    value, head_grads = loss.evaluate(outputs)
    if not np.isfinite(value):
        raise NonFiniteLossError(
            f"{type(loss).__name__} is {value}; outputs finite: "
            + ", ".join(f"{k}={bool(np.all(np.isfinite(v)))}" for k, v in outputs.items())
        )

    h = acts[-1]
    dh = np.zeros_like(h)
    head_params = []
    for name, head in net.heads.items():
        g = head_grads.get(name)
        if g is None:
            head_params.extend([np.zeros_like(head.weight), np.zeros_like(head.bias)])
            continue
        _, dfn = ACTIVATIONS[head.activation]
        dz = g * dfn(head_pre[name], outputs[name])
        head_params.extend([h.T @ dz, dz.sum(axis=0)])
        dh = dh + dz @ head.weight.T

    trunk_params = []
    for i in reversed(range(len(net.trunk))):
        layer = net.trunk[i]
        _, dfn = ACTIVATIONS[layer.activation]
        dz = dh * dfn(pre[i], acts[i + 1])
        trunk_params = [acts[i].T @ dz, dz.sum(axis=0)] + trunk_params
        dh = dz @ layer.weight.T

    return GradientReport(trunk_params + head_params, value)


def loss_value(net: Network, loss: Loss, x) -> float:
    x, _ = _as_batch(net, x)
    outputs, _ = _run(net, x)
    return loss.evaluate(outputs)[0]


def numerical_gradient(net: Network, loss: Loss, x, h=1e-5) -> List[np.ndarray]:
    """central finite differences, one parameter entry at a time"""
    grads = []
    for param in net.parameters():
        grad = np.zeros_like(param)
        for idx in np.ndindex(param.shape):
            saved = param[idx]
            param[idx] = saved + h
            plus = loss_value(net, loss, x)
            param[idx] = saved - h
            minus = loss_value(net, loss, x)
            param[idx] = saved
            grad[idx] = (plus - minus) / (2.0 * h)
        grads.append(grad)
    return grads


@dataclass
class OptimizerState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: Optional[float] = None
    step: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_network(cls, net: Network, learning_rate=1e-3, **kwargs):
        params = net.parameters()
        return cls(
            learning_rate=learning_rate,
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            **kwargs,
        )


def adam_step(net: Network, state: OptimizerState, report: GradientReport) -> Network:
    params = net.parameters()
    if not (len(params) == len(report.grads) == len(state.m) == len(state.v)):
        raise DimensionMismatchError("optimizer state does not match the network")
    grads = report.grads
    if state.clip_norm:
        norm = report.global_norm()
        if norm > state.clip_norm:
            grads = [g * (state.clip_norm / norm) for g in grads]

    state.step += 1
    t = state.step
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise DimensionMismatchError("gradient shape differs from its parameter")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
    return net


def network_to_dict(net: Network):
    return {
        "layer_dims": [net.input_width] + [layer.fan_out for layer in net.trunk],
        "activations": [layer.activation for layer in net.trunk],
        "heads": [
            {"name": name, "width": head.fan_out, "activation": head.activation}
            for name, head in net.heads.items()
        ],
        "params": [p.ravel().tolist() for p in net.parameters()],
    }


def network_from_dict(d) -> Network:
    try:
        dims = [int(w) for w in d["layer_dims"]]
        activations = list(d["activations"])
        heads = list(d["heads"])
        params = list(d["params"])
    except (KeyError, TypeError, ValueError) as e:
        raise WeightFileError(f"malformed network entry: {e!r}")
    if len(activations) != len(dims) - 1:
        raise WeightFileError("layer_dims and activations disagree")
    shapes = []
    for fan_in, fan_out in zip(dims, dims[1:]):
        shapes.extend([(fan_in, fan_out), (fan_out,)])
    for head in heads:
        shapes.extend([(dims[-1], int(head["width"])), (int(head["width"]),)])
    if len(params) != len(shapes):
        raise WeightFileError(f"{len(params)} parameter arrays, expected {len(shapes)}")
    arrays = []
    for values, shape in zip(params, shapes):
        array = np.asarray(values, dtype=np.float64)
        if array.size != int(np.prod(shape)):
            raise WeightFileError(f"parameter array of {array.size} values for {shape}")
        arrays.append(array.reshape(shape))
    trunk = [
        Dense(arrays[2 * i], arrays[2 * i + 1], activations[i])
        for i in range(len(activations))
    ]
    offset = 2 * len(activations)
    built = {}
    for j, head in enumerate(heads):
        built[head["name"]] = Dense(
            arrays[offset + 2 * j], arrays[offset + 2 * j + 1], head["activation"]
        )
    try:
        return Network(trunk, built)
    except DimensionMismatchError as e:
        raise WeightFileError(str(e))


def write_weight_file(path, agent_kind, networks: Dict[str, Network], settings=None):
    doc = {
        "format_version": FORMAT_VERSION,
        "agent_kind": agent_kind,
        "action_catalog_hash": catalog_hash(),
        "networks": {name: network_to_dict(net) for name, net in networks.items()},
        "settings": settings or {},
    }
    with open(path, "w", encoding="utf-8") as f:
        f.write(json_dumps(doc))
        f.write("\n")


def read_weight_file(path):
    """returns (document without networks, name -> Network)"""
    try:
        doc = json_load(path)
    except json.JSONDecodeError as e:
        raise WeightFileError(f"{path}: not a complete weight file ({e})")
    if not isinstance(doc, dict) or doc.get("format_version") != FORMAT_VERSION:
        raise WeightFileError(
            f"{path}: unsupported format version "
            f"{doc.get('format_version') if isinstance(doc, dict) else None}"
        )
    if doc.get("action_catalog_hash") != catalog_hash():
        raise CatalogMismatchError(f"{path}: written for another action catalog")
    networks = {
        name: network_from_dict(entry) for name, entry in doc.get("networks", {}).items()
    }
    if not networks:
        raise WeightFileError(f"{path}: no networks")
    header = {k: v for k, v in doc.items() if k != "networks"}
    return header, networks


def save_weights(net: Network, path, agent_kind="network"):
    write_weight_file(path, agent_kind, {"main": net})


def load_weights(path, name=None) -> Network:
    _, networks = read_weight_file(path)
    if name is not None:
        if name not in networks:
            raise WeightFileError(f"{path}: no network named {name}")
        return networks[name]
    if len(networks) != 1:
        raise WeightFileError(f"{path}: holds {sorted(networks)}, pick one by name")
    return next(iter(networks.values()))


if __name__ == "__main__":
    import doctest

    doctest.testmod()
