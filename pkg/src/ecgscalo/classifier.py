"""From-scratch residual CNN over single-channel images.

Everything runs in float64 numpy: an initial 3x3 convolution, stages of
two-convolution residual blocks (stride-2 first block plus 1x1 projection
shortcut at each stage transition), global average pooling and a final
linear layer to the four rhythm classes. There are no normalization layers
in the default configuration, which keeps the network piecewise linear in
its parameters and lets the finite-difference gradient oracle match
backpropagation almost exactly.

Training is plain momentum SGD, serially deterministic: the shuffle order,
batch order and all reductions are fixed by the seed, so identical seeds
produce bit-identical models.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, asdict

import numpy as np

from ecgscalo.ingest import EcgClass

_CHECKPOINT_MAGIC = b"ECGSCALO-MODEL-1\n"
NUM_CLASSES = 4


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture description: stage widths, depths, input geometry."""

    stage_widths: tuple[int, ...] = (8, 16, 32)
    blocks_per_stage: tuple[int, ...] = (2, 2, 2)
    input_height: int = 64
    input_width: int = 256
    num_classes: int = NUM_CLASSES

    def __post_init__(self):
        object.__setattr__(self, "stage_widths", tuple(self.stage_widths))
        object.__setattr__(self, "blocks_per_stage",
                           tuple(self.blocks_per_stage))
        if self.num_classes != NUM_CLASSES:
            raise ValueError("classifier is fixed at four classes")
        if len(self.stage_widths) != len(self.blocks_per_stage):
            raise ValueError("one block count per stage is required")
        if not self.stage_widths or min(self.blocks_per_stage) < 1:
            raise ValueError("need at least one stage with depth >= 1")
        halvings = len(self.stage_widths) - 1
        if (self.input_height % (1 << halvings)
                or self.input_width % (1 << halvings)):
            raise ValueError(
                f"input {self.input_height}x{self.input_width} is not "
                f"divisible by 2^{halvings} stage halvings")


def resnet34_config(input_height: int = 64,
                    input_width: int = 256) -> NetworkConfig:
    """Deep preset with the classic 4-stage (3, 4, 6, 3) layout."""
    return NetworkConfig(stage_widths=(64, 128, 256, 512),
                         blocks_per_stage=(3, 4, 6, 3),
                         input_height=input_height, input_width=input_width)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    momentum: float = 0.9
    batch_size: int = 16
    epochs: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning rate must be >= 0")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch size >= 1 and epochs >= 0 required")


@dataclass
class Model:
    """Parameter tensors keyed by layer name, plus training metadata."""

    config: NetworkConfig
    params: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)


def _blocks(config: NetworkConfig):
    """Yield (name, c_in, c_out, stride, has_projection) per residual block."""
    c_in = config.stage_widths[0]
    for i, (width, depth) in enumerate(zip(config.stage_widths,
                                           config.blocks_per_stage)):
        for j in range(depth):
            stride = 2 if (i > 0 and j == 0) else 1
            projection = stride != 1 or c_in != width
            yield f"s{i}b{j}", c_in, width, stride, projection
            c_in = width


def init_model(config: NetworkConfig, seed: int) -> Model:
    """Fan-in-scaled uniform weights, zero biases, from the seeded generator."""
    rng = np.random.default_rng(seed)

    def weight(shape):
        fan_in = int(np.prod(shape[1:]))
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    params: dict[str, np.ndarray] = {}
    w0 = config.stage_widths[0]
    params["stem.w"] = weight((w0, 1, 3, 3))
    params["stem.b"] = np.zeros(w0)
    for name, c_in, c_out, stride, proj in _blocks(config):
        params[f"{name}.conv1.w"] = weight((c_out, c_in, 3, 3))
        params[f"{name}.conv1.b"] = np.zeros(c_out)
        params[f"{name}.conv2.w"] = weight((c_out, c_out, 3, 3))
        params[f"{name}.conv2.b"] = np.zeros(c_out)
        if proj:
            params[f"{name}.proj.w"] = weight((c_out, c_in, 1, 1))
            params[f"{name}.proj.b"] = np.zeros(c_out)
    params["head.w"] = weight((config.num_classes, config.stage_widths[-1]))
    params["head.b"] = np.zeros(config.num_classes)
    return Model(config=config, params=params, meta={"seed": seed})


# ---------------------------------------------------------------------------
# layer primitives (forward returns a cache consumed by the backward pass)

def _conv_forward(x, w, b, stride):
    kh, kw = w.shape[2], w.shape[3]
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]
    y = np.einsum("bchwij,ocij->bohw", win, w, optimize=True)
    y += b[None, :, None, None]
    return y, (x.shape, win, w, stride, ph, pw)


def _conv_backward(dy, cache):
    x_shape, win, w, stride, ph, pw = cache
    batch, chans, height, width = x_shape
    kh, kw = w.shape[2], w.shape[3]
    db = dy.sum(axis=(0, 2, 3))
    dw = np.einsum("bohw,bchwij->ocij", dy, win, optimize=True)
    dcols = np.einsum("bohw,ocij->bchwij", dy, w, optimize=True)
    dxp = np.zeros((batch, chans, height + 2 * ph, width + 2 * pw))
    h_out, w_out = dy.shape[2], dy.shape[3]
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + stride * h_out:stride,
                j:j + stride * w_out:stride] += dcols[..., i, j]
    dx = dxp[:, :, ph:height + ph, pw:width + pw] if (ph or pw) else dxp
    return dx, dw, db


def _relu_forward(x):
    return np.maximum(x, 0.0), x > 0


def _relu_backward(dy, mask):
    return dy * mask


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits."""
    labels = np.asarray(labels, dtype=np.int64)
    if np.any((labels < 0) | (labels >= logits.shape[1])):
        raise ValueError(f"labels must lie in [0, {logits.shape[1] - 1}]")
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = logits.shape[0]
    loss = -float(np.mean(logp[np.arange(n), labels]))
    dlogits = np.exp(logp)
    dlogits[np.arange(n), labels] -= 1.0
    return loss, dlogits / n


def _check_batch(config: NetworkConfig, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    expected = (1, config.input_height, config.input_width)
    if x.ndim != 4 or x.shape[1:] != expected:
        raise ValueError(
            f"batch shape {x.shape} does not match [B, 1, "
            f"{config.input_height}, {config.input_width}]")
    return x


def _run(model: Model, x: np.ndarray, keep_caches: bool):
    """Shared forward pass; returns (logits, caches or None)."""
    p = model.params
    caches = [] if keep_caches else None

    def conv(t, name, stride):
        y, c = _conv_forward(t, p[f"{name}.w"], p[f"{name}.b"], stride)
        if keep_caches:
            caches.append(("conv", name, c))
        return y

    def relu(t):
        y, mask = _relu_forward(t)
        if keep_caches:
            caches.append(("relu", None, mask))
        return y

    t = relu(conv(x, "stem", 1))
    assert np.all(np.isfinite(t)), "non-finite activation after stem"
    for name, _cin, _cout, stride, proj in _blocks(model.config):
        inner = relu(conv(t, f"{name}.conv1", stride))
        inner = conv(inner, f"{name}.conv2", 1)
        shortcut = conv(t, f"{name}.proj", stride) if proj else t
        if keep_caches:
            caches.append(("add", name if proj else None, None))
        t = relu(inner + shortcut)
        assert np.all(np.isfinite(t)), f"non-finite activation after {name}"

    pooled = t.mean(axis=(2, 3))
    if keep_caches:
        caches.append(("gap", None, t.shape))
    logits = pooled @ p["head.w"].T + p["head.b"]
    if keep_caches:
        caches.append(("head", None, pooled))
    return logits, caches


def forward(model: Model, batch) -> np.ndarray:
    """Logits [B, 4] for a batch [B, 1, H, W]; deterministic and stateless."""
    x = _check_batch(model.config, batch)
    logits, _ = _run(model, x, keep_caches=False)
    return logits


def loss_and_grad(model: Model, batch, labels) -> tuple[float, dict[str, np.ndarray]]:
    """Mean softmax cross-entropy plus gradients for every parameter."""
    x = _check_batch(model.config, batch)
    logits, caches = _run(model, x, keep_caches=True)
    loss, dlogits = softmax_cross_entropy(logits, labels)

    p = model.params
    grads = {k: np.zeros_like(v) for k, v in p.items()}

    kind, _, pooled = caches.pop()
    assert kind == "head"
    grads["head.w"] = dlogits.T @ pooled
    grads["head.b"] = dlogits.sum(axis=0)
    dpooled = dlogits @ p["head.w"]

    kind, _, t_shape = caches.pop()
    assert kind == "gap"
    scale = 1.0 / (t_shape[2] * t_shape[3])
    dt = np.broadcast_to(dpooled[:, :, None, None] * scale,
                         t_shape).copy()

    blocks = list(_blocks(model.config))
    for name, _cin, _cout, stride, proj in reversed(blocks):
        kind, _, mask = caches.pop()
        assert kind == "relu"
        dsum = _relu_backward(dt, mask)

        if proj:
            kind, _, _ = caches.pop()  # add marker
            kind, cname, c = caches.pop()
            assert kind == "conv" and cname == f"{name}.proj"
            dshort, dw, db = _conv_backward(dsum, c)
            grads[f"{name}.proj.w"] = dw
            grads[f"{name}.proj.b"] = db
        else:
            caches.pop()  # add marker
            dshort = dsum

        kind, cname, c = caches.pop()
        assert kind == "conv" and cname == f"{name}.conv2"
        dinner, dw, db = _conv_backward(dsum, c)
        grads[f"{name}.conv2.w"] = dw
        grads[f"{name}.conv2.b"] = db

        kind, _, mask = caches.pop()
        assert kind == "relu"
        dinner = _relu_backward(dinner, mask)
        kind, cname, c = caches.pop()
        assert kind == "conv" and cname == f"{name}.conv1"
        dfirst, dw, db = _conv_backward(dinner, c)
        grads[f"{name}.conv1.w"] = dw
        grads[f"{name}.conv1.b"] = db

        dt = dfirst + dshort

    kind, _, mask = caches.pop()
    assert kind == "relu"
    dt = _relu_backward(dt, mask)
    kind, cname, c = caches.pop()
    assert kind == "conv" and cname == "stem"
    _, dw, db = _conv_backward(dt, c)
    grads["stem.w"] = dw
    grads["stem.b"] = db
    assert not caches
    return loss, grads


def _loss_only(model: Model, x: np.ndarray, labels) -> float:
    logits, _ = _run(model, x, keep_caches=False)
    loss, _ = softmax_cross_entropy(logits, labels)
    return loss


def gradient_check(model: Model, batch, labels,
                   step: float = 1e-5) -> dict[str, float]:
    """Central finite differences over every parameter scalar.

    Returns the maximum relative error per parameter tensor; backprop and the
    difference quotient share nothing but the forward pass.
    """
    x = _check_batch(model.config, batch)
    _, grads = loss_and_grad(model, x, labels)
    report: dict[str, float] = {}
    for name, tensor in model.params.items():
        flat = tensor.ravel()
        worst = 0.0
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            up = _loss_only(model, x, labels)
            flat[i] = keep - step
            down = _loss_only(model, x, labels)
            flat[i] = keep
            fd = (up - down) / (2.0 * step)
            g = grads[name].ravel()[i]
            rel = abs(fd - g) / max(abs(fd), abs(g), 1e-12)
            worst = max(worst, rel)
        report[name] = worst
    return report


def train(dataset, net: NetworkConfig, tcfg: TrainConfig,
          on_epoch=None) -> Model:
    """Momentum-SGD training over (image, label) pairs.

    Images are 2-D uint8 (rescaled to [0, 1]) or float arrays already in
    real units. Given the same seed the result is bit-identical: shuffle
    order, batching and update order are all fixed.
    """
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    images, labels = zip(*dataset)
    x_all = np.stack([_to_real(img, net) for img in images])[:, None, :, :]
    y_all = np.asarray([int(l) for l in labels], dtype=np.int64)
    if np.any((y_all < 0) | (y_all >= net.num_classes)):
        raise ValueError("labels must lie in [0, 3]")

    model = init_model(net, tcfg.seed)
    velocity = {k: np.zeros_like(v) for k, v in model.params.items()}
    rng = np.random.default_rng(tcfg.seed)
    n = x_all.shape[0]
    final_loss = float("nan")

    for epoch in range(tcfg.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, tcfg.batch_size):
            sel = order[start:start + tcfg.batch_size]
            batch_no = start // tcfg.batch_size
            try:
                loss, grads = loss_and_grad(model, x_all[sel], y_all[sel])
            except AssertionError as exc:  # non-finite activation
                raise RuntimeError(
                    f"training diverged (epoch {epoch}, batch {batch_no}: "
                    f"{exc})") from exc
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"training diverged (epoch {epoch}, "
                    f"batch {batch_no}: loss={loss})")
            losses.append(loss)
            for k in model.params:
                velocity[k] = (tcfg.momentum * velocity[k]
                               - tcfg.learning_rate * grads[k])
                model.params[k] += velocity[k]
        final_loss = float(np.mean(losses))
        if on_epoch is not None:
            on_epoch(epoch, final_loss)

    model.meta = {"seed": tcfg.seed, "epochs": tcfg.epochs,
                  "final_loss": final_loss}
    return model


def _to_real(image, net: NetworkConfig) -> np.ndarray:
    img = np.asarray(image)
    if img.shape != (net.input_height, net.input_width):
        raise ValueError(
            f"image shape {img.shape} does not match network input "
            f"({net.input_height}, {net.input_width})")
    if img.dtype == np.uint8:
        return img.astype(np.float64) / 255.0
    return img.astype(np.float64)


def predict(model: Model, image) -> EcgClass:
    """Class of a single image; ties break toward the lower class index."""
    x = _to_real(image, model.config)[None, None, :, :]
    logits, _ = _run(model, x, keep_caches=False)
    return EcgClass(int(np.argmax(logits[0])))


def accuracy(model: Model, dataset) -> float:
    hits = sum(1 for img, label in dataset
               if predict(model, img) == int(label))
    return hits / len(dataset)


def area_downsample(image, out_height: int, out_width: int) -> np.ndarray:
    """Block-mean downsampling; input dims must be integer multiples."""
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape
    if h % out_height or w % out_width:
        raise ValueError(
            f"cannot area-average {h}x{w} onto {out_height}x{out_width}")
    return img.reshape(out_height, h // out_height,
                       out_width, w // out_width).mean(axis=(1, 3))


def save_model(model: Model, path) -> None:
    """Versioned checkpoint: JSON header + float64 LE payloads in order."""
    manifest = [[name, list(t.shape)] for name, t in model.params.items()]
    header = json.dumps({"config": asdict(model.config),
                         "meta": model.meta,
                         "params": manifest}).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for tensor in model.params.values():
            fh.write(tensor.astype("<f8").tobytes())


def load_model(path) -> Model:
    with open(path, "rb") as fh:
        magic = fh.read(len(_CHECKPOINT_MAGIC))
        if magic != _CHECKPOINT_MAGIC:
            raise ValueError("not a model checkpoint (bad magic)")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        cfg = header["config"]
        config = NetworkConfig(
            stage_widths=tuple(cfg["stage_widths"]),
            blocks_per_stage=tuple(cfg["blocks_per_stage"]),
            input_height=cfg["input_height"],
            input_width=cfg["input_width"],
            num_classes=cfg["num_classes"])
        params: dict[str, np.ndarray] = {}
        for name, shape in header["params"]:
            count = int(np.prod(shape))
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise ValueError(f"checkpoint truncated at parameter {name}")
            params[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    return Model(config=config, params=params, meta=header["meta"])
