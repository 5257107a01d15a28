"""Toy token-sequence VAE with hand-written reverse-mode gradients.

Encoder: position-specific token embedding, mean-pooled over positions, one
tanh layer, then linear heads for the posterior mean and log-variance.
Decoder: one tanh layer followed by a dense layer emitting ``max_len x vocab``
logits. Token 0 is the pad token.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import InputError, TrainingError

PAD = 0
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class VaeDims:
    vocab: int = 16
    max_len: int = 16
    latent: int = 8
    hidden: int = 64


_ENCODER_KEYS = ("emb", "enc_w1", "enc_b1", "mu_w", "mu_b", "lv_w", "lv_b")
_DECODER_KEYS = ("dec_w1", "dec_b1", "dec_w2", "dec_b2")
PARAM_KEYS = _ENCODER_KEYS + _DECODER_KEYS


@dataclass(frozen=True)
class VaeParams:
    dims: VaeDims
    weights: dict

    def copy(self) -> "VaeParams":
        return VaeParams(self.dims, {k: v.copy() for k, v in self.weights.items()})

    def __getitem__(self, key):
        return self.weights[key]


def _shapes(d: VaeDims) -> dict:
    return {
        "emb": (d.max_len, d.vocab, d.hidden),
        "enc_w1": (d.hidden, d.hidden),
        "enc_b1": (d.hidden,),
        "mu_w": (d.hidden, d.latent),
        "mu_b": (d.latent,),
        "lv_w": (d.hidden, d.latent),
        "lv_b": (d.latent,),
        "dec_w1": (d.latent, d.hidden),
        "dec_b1": (d.hidden,),
        "dec_w2": (d.hidden, d.max_len * d.vocab),
        "dec_b2": (d.max_len * d.vocab,),
    }


def init_params(dims: VaeDims, rng: np.random.Generator) -> VaeParams:
    weights = {}
    for key, shape in _shapes(dims).items():
        if len(shape) == 1:
            weights[key] = np.zeros(shape)
        else:
            fan_in = 1 if key == "emb" else shape[0]
            bound = 1.0 / np.sqrt(fan_in)
            weights[key] = rng.uniform(-bound, bound, size=shape)
    return VaeParams(dims, weights)


def zero_params(dims: VaeDims) -> VaeParams:
    return VaeParams(dims, {k: np.zeros(s) for k, s in _shapes(dims).items()})


def as_tokens(seqs, dims: VaeDims) -> np.ndarray:
    x = np.asarray(seqs, dtype=np.int64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != dims.max_len:
        raise InputError(f"sequences must be padded to length {dims.max_len}, got {x.shape[1]}")
    if x.size and (x.min() < 0 or x.max() >= dims.vocab):
        raise InputError(f"token ids must lie in [0, {dims.vocab})")
    return x


def pad_sequence(tokens, max_len: int) -> np.ndarray:
    tokens = list(tokens)
    if len(tokens) > max_len:
        raise InputError(f"sequence of length {len(tokens)} exceeds maximum {max_len}")
    return np.array(tokens + [PAD] * (max_len - len(tokens)), dtype=np.int64)


def unpadded(seq) -> tuple:
    """Tokens before the first pad."""
    out = []
    for t in np.asarray(seq).ravel():
        if t == PAD:
            break
        out.append(int(t))
    return tuple(out)


# --- forward passes ---------------------------------------------------------


def _onehot(x: np.ndarray, vocab: int) -> np.ndarray:
    """Batch x (max_len * vocab) indicator of (position, token) pairs."""
    b, m = x.shape
    out = np.zeros((b, m * vocab))
    out[np.arange(b)[:, None], np.arange(m)[None, :] * vocab + x] = 1.0
    return out


def _encode_forward(p: VaeParams, x: np.ndarray):
    m = p.dims.max_len
    pooled = _onehot(x, p.dims.vocab) @ p["emb"].reshape(m * p.dims.vocab, -1) / m
    h1 = np.tanh(pooled @ p["enc_w1"] + p["enc_b1"])
    mu = h1 @ p["mu_w"] + p["mu_b"]
    lv = h1 @ p["lv_w"] + p["lv_b"]
    return pooled, h1, mu, lv


def encode(params: VaeParams, x) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and log-variance; a single sequence gives 1-D outputs."""
    single = np.asarray(x).ndim == 1
    _, _, mu, lv = _encode_forward(params, as_tokens(x, params.dims))
    return (mu[0], lv[0]) if single else (mu, lv)


def _decode_forward(p: VaeParams, z: np.ndarray):
    hd = np.tanh(z @ p["dec_w1"] + p["dec_b1"])
    logits = (hd @ p["dec_w2"] + p["dec_b2"]).reshape(z.shape[0], p.dims.max_len, p.dims.vocab)
    return hd, logits


def _latents(params: VaeParams, z) -> tuple[np.ndarray, bool]:
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    z = np.atleast_2d(z)
    if z.shape[1] != params.dims.latent:
        raise InputError(f"latent vectors must have {params.dims.latent} entries, got {z.shape[1]}")
    return z, single


def decode_logits(params: VaeParams, z) -> np.ndarray:
    z, single = _latents(params, z)
    logits = _decode_forward(params, z)[1]
    return logits[0] if single else logits


def decode_argmax(params: VaeParams, z) -> np.ndarray:
    """Per-position argmax token (lowest id wins ties)."""
    return np.argmax(decode_logits(params, z), axis=-1)


def _softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True), shifted - np.log(e.sum(axis=-1, keepdims=True))


def token_cross_entropy(logits: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Mean per-token cross-entropy of each row in a batch."""
    _, logp = _softmax(logits)
    picked = np.take_along_axis(logp, x[..., None], axis=-1)[..., 0]
    return -picked.mean(axis=-1)


def kl_to_standard_normal(mu, logvar) -> np.ndarray:
    mu, logvar = np.asarray(mu, dtype=float), np.asarray(logvar, dtype=float)
    return 0.5 * (mu**2 + np.exp(logvar) - logvar - 1.0).sum(axis=-1)


# --- gradients ---------------------------------------------------------------


def _ce_backward(logits, x):
    """d(mean-token CE)/d(logits) for each row separately."""
    probs, _ = _softmax(logits)
    onehot = np.zeros_like(probs)
    np.put_along_axis(onehot, x[..., None], 1.0, axis=-1)
    return (probs - onehot) / logits.shape[1]


def grad_wrt_latent(params: VaeParams, z, target) -> np.ndarray:
    """Gradient of the per-sequence cross-entropy w.r.t. ``z`` with the decoder frozen.

    Rows of a batch are independent: row ``i`` gets the gradient of its own loss.
    """
    z, single = _latents(params, z)
    x = as_tokens(target, params.dims)
    if x.shape[0] != z.shape[0]:
        x = np.broadcast_to(x, (z.shape[0], x.shape[1]))
    hd, logits = _decode_forward(params, z)
    dlogits = _ce_backward(logits, x).reshape(z.shape[0], -1)
    dpre = (dlogits @ params["dec_w2"].T) * (1.0 - hd**2)
    dz = dpre @ params["dec_w1"].T
    return dz[0] if single else dz


def loss_and_grads(params: VaeParams, x, kl_weight: float, eps=None):
    """Batch-mean ELBO-style loss and gradients for every weight.

    ``eps`` is the reparameterization noise (batch x latent); ``None`` decodes
    the posterior mean. Returns ``(loss, recon, kl, grads)``.
    """
    p = params
    x = as_tokens(x, p.dims)
    b, m = x.shape
    pooled, h1, mu, lv = _encode_forward(p, x)
    if eps is None:
        std = np.zeros_like(lv)
        z = mu
        eps = np.zeros_like(mu)
    else:
        std = np.exp(0.5 * lv)
        z = mu + std * eps
    hd, logits = _decode_forward(p, z)
    recon = token_cross_entropy(logits, x)
    kl = kl_to_standard_normal(mu, lv)
    loss = float((recon + kl_weight * kl).mean())

    g = {}
    dlogits = _ce_backward(logits, x).reshape(b, -1) / b
    g["dec_w2"] = hd.T @ dlogits
    g["dec_b2"] = dlogits.sum(0)
    dpre = (dlogits @ p["dec_w2"].T) * (1.0 - hd**2)
    g["dec_w1"] = z.T @ dpre
    g["dec_b1"] = dpre.sum(0)
    dz = dpre @ p["dec_w1"].T
    dmu = dz + kl_weight * mu / b
    dlv = dz * eps * 0.5 * std + kl_weight * 0.5 * (np.exp(lv) - 1.0) / b
    g["mu_w"] = h1.T @ dmu
    g["mu_b"] = dmu.sum(0)
    g["lv_w"] = h1.T @ dlv
    g["lv_b"] = dlv.sum(0)
    dpre1 = (dmu @ p["mu_w"].T + dlv @ p["lv_w"].T) * (1.0 - h1**2)
    g["enc_w1"] = pooled.T @ dpre1
    g["enc_b1"] = dpre1.sum(0)
    dpooled = dpre1 @ p["enc_w1"].T / m
    g["emb"] = (_onehot(x, p.dims.vocab).T @ dpooled).reshape(p["emb"].shape)
    return loss, float(recon.mean()), float(kl.mean()), g


def evaluate_loss(params: VaeParams, corpus, kl_weight: float) -> float:
    """Deterministic loss (decoding the posterior mean) over a corpus."""
    return loss_and_grads(params, corpus, kl_weight)[0]


def reconstruction_rate(params: VaeParams, corpus) -> float:
    x = as_tokens(corpus, params.dims)
    mu, _ = encode(params, x)
    return float(np.mean(np.all(decode_argmax(params, mu) == x, axis=1)))


def train_vae(
    params: VaeParams,
    corpus,
    epochs: int,
    lr: float,
    kl_weight: float,
    rng: np.random.Generator,
    batch_size: int | None = None,
) -> VaeParams:
    """Plain gradient descent on reconstruction + ``kl_weight`` x KL.

    ``batch_size=None`` uses the full corpus every step; otherwise each epoch
    walks a fresh permutation in minibatches.
    """
    x = as_tokens(corpus, params.dims)
    if x.shape[0] == 0:
        raise InputError("cannot train on an empty corpus")
    out = params.copy()
    if epochs <= 0:
        return out
    n = x.shape[0]
    bs = n if batch_size is None else min(batch_size, n)
    step = 0
    for _ in range(epochs):
        order = np.arange(n) if bs == n else rng.permutation(n)
        for start in range(0, n, bs):
            batch = x[order[start : start + bs]]
            eps = rng.standard_normal((batch.shape[0], params.dims.latent))
            loss, _, _, grads = loss_and_grads(out, batch, kl_weight, eps)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite training loss at step {step}", step=step)
            for k in PARAM_KEYS:
                out.weights[k] -= lr * grads[k]
            step += 1
    return out


# --- checkpoints -------------------------------------------------------------


def checkpoint_bytes(params: VaeParams) -> bytes:
    """Serialized ``.npz`` archive whose ``header`` entry holds version and dims as JSON."""
    header = json.dumps({"format": "latentbo-vae", "version": CHECKPOINT_VERSION, "dims": asdict(params.dims)})
    arrays = {"header": np.array(header), **params.weights}
    buf = io.BytesIO()
    # fixed entry timestamps keep the archive byte-identical across reruns
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            with zf.open(info, "w") as fh:
                np.lib.format.write_array(fh, np.asarray(arr), allow_pickle=False)
    return buf.getvalue()


def save_checkpoint(params: VaeParams, path) -> None:
    from .io import write_files

    write_files({Path(path): checkpoint_bytes(params)})


def load_checkpoint(path) -> VaeParams:
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as data:
            header = json.loads(str(data["header"]))
            if header.get("format") != "latentbo-vae" or header.get("version") != CHECKPOINT_VERSION:
                raise InputError(f"{path}: unsupported checkpoint header {header}")
            dims = VaeDims(**header["dims"])
            weights = {k: np.array(data[k], dtype=float) for k in PARAM_KEYS}
    except (OSError, KeyError, ValueError) as exc:
        raise InputError(f"cannot load checkpoint {path}: {exc}") from exc
    for k, shape in _shapes(dims).items():
        if weights[k].shape != shape:
            raise InputError(f"{path}: weight {k} has shape {weights[k].shape}, expected {shape}")
    return VaeParams(dims, weights)
