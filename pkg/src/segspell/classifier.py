"""Multilayer-perceptron frame classifiers, signer adaptation, and tandem
observation construction.

Networks are fully-connected ReLU stacks with a softmax output, trained by
minibatch SGD with momentum on an L2-regularized cross-entropy loss, in
float64 and bit-reproducible for a fixed seed.  The adaptation modes graft a
per-frame affine input transform and/or a replacement softmax layer onto a
frozen signer-independent network; at their documented initializations they
reproduce the unadapted outputs exactly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

LOG_FLOOR = 1e-10


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.95
    batch_size: int = 100
    max_epochs: int = 30
    weight_decay: float = 1e-5
    dropout: float = 0.0
    validation_fraction: float = 0.1
    plateau_patience: int = 2   # epochs without val improvement before halving
    seed: int = 0

    def __post_init__(self):
        if min(self.learning_rate, self.momentum, self.weight_decay,
               self.dropout) < 0:
            raise ValueError("rates must be non-negative")
        if self.batch_size < 1:
            raise ValueError("minibatch size must be at least 1")


class MlpModel:
    """Weights plus class names; layers[i] = (W, b) with W shaped (out, in)."""

    SCHEMA = "segspell-mlp-1"

    def __init__(self, layers, class_names):
        self.layers = [(np.asarray(w, dtype=np.float64), np.asarray(b, dtype=np.float64))
                       for w, b in layers]
        self.class_names = list(class_names)
        if self.layers[-1][0].shape[0] != len(self.class_names):
            raise ValueError("output layer size does not match class count")

    @property
    def input_dim(self):
        return self.layers[0][0].shape[1]

    @property
    def num_classes(self):
        return len(self.class_names)

    def copy(self):
        return MlpModel([(w.copy(), b.copy()) for w, b in self.layers],
                        self.class_names)

    def forward(self, x, keep_hidden=False, dropout_masks=None):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.input_dim:
            raise ValueError("input dim %d does not match model dim %d"
                             % (x.shape[1], self.input_dim))
        hidden = [x]
        h = x
        for i, (w, b) in enumerate(self.layers[:-1]):
            h = np.maximum(h @ w.T + b, 0.0)
            if dropout_masks is not None:
                h = h * dropout_masks[i]
            hidden.append(h)
        w, b = self.layers[-1]
        logits = h @ w.T + b
        return (logits, hidden) if keep_hidden else logits

    def predict_proba(self, x):
        return softmax(self.forward(x))

    def predict(self, x):
        return np.argmax(self.predict_proba(x), axis=1)

    def to_jsonable(self):
        return {
            "schema": self.SCHEMA,
            "arch": [w.shape[1] for w, _ in self.layers] + [self.layers[-1][0].shape[0]],
            "class_names": self.class_names,
            "layers": [{"W": w.tolist(), "b": b.tolist()} for w, b in self.layers],
        }

    @classmethod
    def from_jsonable(cls, obj):
        if obj.get("schema") != cls.SCHEMA:
            raise ValueError("unsupported model schema: %r" % obj.get("schema"))
        layers = [(np.array(l["W"]), np.array(l["b"])) for l in obj["layers"]]
        return cls(layers, obj["class_names"])

    def save(self, path):
        from .fileio import write_json
        write_json(path, self.to_jsonable())

    @classmethod
    def load(cls, path):
        from .fileio import read_json
        return cls.from_jsonable(read_json(path))


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def init_mlp(input_dim, hidden, num_classes, class_names, seed=0):
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    dims = [input_dim] + list(hidden) + [num_classes]
    layers = []
    for i in range(len(dims) - 1):
        scale = np.sqrt(2.0 / dims[i])
        layers.append((rng.normal(0.0, scale, size=(dims[i + 1], dims[i])),
                       np.zeros(dims[i + 1])))
    return MlpModel(layers, class_names)


def cross_entropy(probs, labels):
    return float(-np.mean(np.log(np.maximum(probs[np.arange(len(labels)), labels],
                                            LOG_FLOOR))))


def loss_and_gradients(model, x, labels, weight_decay=0.0, dropout_masks=None):
    """Regularized cross-entropy and its gradient for every layer.

    loss = mean CE + 0.5 * weight_decay * sum ||W||^2   (biases unpenalized)
    """
    logits, hidden = model.forward(x, keep_hidden=True, dropout_masks=dropout_masks)
    probs = softmax(logits)
    n = len(labels)
    loss = cross_entropy(probs, labels)
    if weight_decay:
        loss += 0.5 * weight_decay * sum(float(np.sum(w * w)) for w, _ in model.layers)
    delta = probs.copy()
    delta[np.arange(n), labels] -= 1.0
    delta /= n
    grads = [None] * len(model.layers)
    for i in range(len(model.layers) - 1, -1, -1):
        w, _ = model.layers[i]
        gw = delta.T @ hidden[i] + weight_decay * w
        gb = delta.sum(axis=0)
        grads[i] = (gw, gb)
        if i > 0:
            delta = delta @ w
            if dropout_masks is not None:
                delta = delta * dropout_masks[i - 1]
            delta = delta * (hidden[i] > 0)
    return loss, grads


def train_mlp(dataset, cfg, arch, class_names):
    """Train a classifier on (windows, labels); returns (model, history).

    The validation split comes off the end of a seeded permutation; the
    learning rate halves after ``plateau_patience`` epochs without
    improvement in validation error, and the weights of the best validation
    epoch are returned.  history is a list of per-epoch records suitable for
    the CSV learning-curve log.
    """
    x, y = dataset
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=int)
    if len(x) == 0:
        raise ValueError("empty training set")
    present = np.unique(y)
    if len(present) < len(class_names):
        missing = [class_names[i] for i in range(len(class_names)) if i not in set(present)]
        warnings.warn("classes absent from training data: %s" % ", ".join(map(str, missing)))

    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0x5eed)))
    model = init_mlp(x.shape[1], arch, len(class_names), class_names, seed=cfg.seed)

    perm = rng.permutation(len(x))
    n_val = int(round(cfg.validation_fraction * len(x)))
    n_val = min(max(n_val, 0), len(x) - 1)
    val_idx, train_idx = perm[len(x) - n_val:], perm[:len(x) - n_val]
    xt, yt = x[train_idx], y[train_idx]
    xv, yv = (x[val_idx], y[val_idx]) if n_val else (xt, yt)

    velocity = [(np.zeros_like(w), np.zeros_like(b)) for w, b in model.layers]
    lr = cfg.learning_rate
    best = (np.inf, np.inf)
    best_layers = [(w.copy(), b.copy()) for w, b in model.layers]
    since_improve = 0
    history = []
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(xt))
        epoch_loss = 0.0
        nb = 0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            masks = None
            if cfg.dropout > 0:
                masks = [(rng.random((len(idx), w.shape[0])) >= cfg.dropout)
                         / (1.0 - cfg.dropout)
                         for w, _ in model.layers[:-1]]
            loss, grads = loss_and_gradients(model, xt[idx], yt[idx],
                                             cfg.weight_decay, masks)
            epoch_loss += loss
            nb += 1
            for i, ((gw, gb), (vw, vb)) in enumerate(zip(grads, velocity)):
                vw *= cfg.momentum
                vw -= lr * gw
                vb *= cfg.momentum
                vb -= lr * gb
                w, b = model.layers[i]
                model.layers[i] = (w + vw, b + vb)
        val_probs = model.predict_proba(xv)
        val_err = float(np.mean(np.argmax(val_probs, axis=1) != yv))
        val_loss = cross_entropy(val_probs, yv)
        history.append({"epoch": epoch + 1, "train_loss": epoch_loss / max(nb, 1),
                        "val_error": val_err, "val_loss": val_loss, "lr": lr})
        if (val_err, val_loss) < best:
            best = (val_err, val_loss)
            best_layers = [(w.copy(), b.copy()) for w, b in model.layers]
            since_improve = 0
        else:
            since_improve += 1
            if since_improve >= cfg.plateau_patience:
                lr *= 0.5
                since_improve = 0
    if cfg.max_epochs > 0:
        model.layers = best_layers
    return model, history


def history_csv(history):
    lines = ["epoch,train_loss,val_error,val_loss,lr"]
    for h in history:
        lines.append("%d,%r,%r,%r,%r" % (h["epoch"], h["train_loss"],
                                         h["val_error"], h["val_loss"], h["lr"]))
    return "\n".join(lines) + "\n"


def frame_error_rate(model, windows, labels):
    """100 * (1 - accuracy) of argmax predictions."""
    labels = np.asarray(labels, dtype=int)
    if len(labels) == 0:
        raise ValueError("empty evaluation set")
    pred = model.predict(np.asarray(windows, dtype=np.float64))
    return 100.0 * float(np.mean(pred != labels))


# ---------------------------------------------------------------------------
# Signer adaptation

MODES = ("LIN+UP", "LIN+LON", "fine-tune")


class AdaptationModel:
    """Adapted classifier; behaves like MlpModel for prediction.

    LIN modes apply an affine transform to each static per-frame descriptor
    of the input window (shared across the window) before the frozen base
    network; LIN+UP updates the existing softmax layer in place (warm start)
    while LIN+LON swaps in a replacement softmax layer initialized to the
    original one.  fine-tune carries a fully retrained copy of the base.
    """

    def __init__(self, mode, base, window, static_dim,
                 w_lin=None, b_lin=None, out_w=None, out_b=None, tuned=None):
        if mode not in MODES:
            raise ValueError("unknown adaptation mode %r" % (mode,))
        self.mode = mode
        self.base = base
        self.window = window
        self.static_dim = static_dim
        if mode == "fine-tune":
            self.tuned = tuned if tuned is not None else base.copy()
        else:
            self.w_lin = np.eye(static_dim) if w_lin is None else np.asarray(w_lin, float)
            self.b_lin = np.zeros(static_dim) if b_lin is None else np.asarray(b_lin, float)
            if self.w_lin.shape != (static_dim, static_dim):
                raise ValueError("W_LIN must be square over the static descriptor")
            w0, b0 = base.layers[-1]
            self.out_w = w0.copy() if out_w is None else np.asarray(out_w, float)
            self.out_b = b0.copy() if out_b is None else np.asarray(out_b, float)

    @property
    def class_names(self):
        return self.base.class_names

    def _transform(self, x):
        n = x.shape[0]
        frames = x.reshape(n, self.window, self.static_dim)
        return (frames @ self.w_lin.T + self.b_lin).reshape(n, -1)

    def logits(self, x, keep_hidden=False):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if self.mode == "fine-tune":
            return self.tuned.forward(x, keep_hidden=keep_hidden)
        xt = self._transform(x)
        hidden = [xt]
        h = xt
        for w, b in self.base.layers[:-1]:
            h = np.maximum(h @ w.T + b, 0.0)
            hidden.append(h)
        logits = h @ self.out_w.T + self.out_b
        return (logits, hidden) if keep_hidden else logits

    forward = logits

    def predict_proba(self, x):
        return softmax(self.logits(x))

    def predict(self, x):
        return np.argmax(self.predict_proba(x), axis=1)

    SCHEMA = "segspell-adapted-mlp-1"

    def to_jsonable(self):
        obj = {"schema": self.SCHEMA, "mode": self.mode, "window": self.window,
               "static_dim": self.static_dim, "base": self.base.to_jsonable()}
        if self.mode == "fine-tune":
            obj["tuned"] = self.tuned.to_jsonable()
        else:
            obj.update({"w_lin": self.w_lin.tolist(), "b_lin": self.b_lin.tolist(),
                        "out_w": self.out_w.tolist(), "out_b": self.out_b.tolist()})
        return obj

    @classmethod
    def from_jsonable(cls, obj):
        if obj.get("schema") != cls.SCHEMA:
            raise ValueError("unsupported model schema: %r" % obj.get("schema"))
        base = MlpModel.from_jsonable(obj["base"])
        if obj["mode"] == "fine-tune":
            return cls("fine-tune", base, obj["window"], obj["static_dim"],
                       tuned=MlpModel.from_jsonable(obj["tuned"]))
        return cls(obj["mode"], base, obj["window"], obj["static_dim"],
                   w_lin=np.array(obj["w_lin"]), b_lin=np.array(obj["b_lin"]),
                   out_w=np.array(obj["out_w"]), out_b=np.array(obj["out_b"]))

    def save(self, path):
        from .fileio import write_json
        write_json(path, self.to_jsonable())


def load_classifier(path):
    """Load either a plain or an adapted classifier from JSON."""
    from .fileio import read_json
    obj = read_json(path)
    if obj.get("schema") == AdaptationModel.SCHEMA:
        return AdaptationModel.from_jsonable(obj)
    return MlpModel.from_jsonable(obj)


def adapt(model, adaptation_set, mode, cfg, window, static_dim):
    """Adapt a trained classifier to a new signer.

    ``adaptation_set`` is (windows, labels) with frame classes from
    ground-truth peaks or forced alignment.  Returns (AdaptationModel,
    history); history[0] records the epoch-0 (unadapted) loss and the model
    of the best epoch by adaptation-set cross-entropy is returned.
    """
    x, y = adaptation_set
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=int)
    if len(x) == 0:
        raise ValueError("empty adaptation set")
    if mode not in MODES:
        raise ValueError("unknown adaptation mode %r" % (mode,))
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0xADA9)))

    if mode == "fine-tune":
        return _finetune(model, x, y, cfg, rng, window, static_dim)

    adapted = AdaptationModel(mode, model, window, static_dim)
    params = {"w_lin": adapted.w_lin, "b_lin": adapted.b_lin,
              "out_w": adapted.out_w, "out_b": adapted.out_b}
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    lr = cfg.learning_rate
    history = [{"epoch": 0, "loss": _adapted_loss(adapted, x, y)}]
    best = history[0]["loss"]
    best_state = {k: v.copy() for k, v in params.items()}
    since_improve = 0
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(x))
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            grads = _lin_gradients(adapted, x[idx], y[idx], cfg.weight_decay)
            for k in params:
                velocity[k] *= cfg.momentum
                velocity[k] -= lr * grads[k]
                params[k] += velocity[k]
        loss = _adapted_loss(adapted, x, y)
        history.append({"epoch": epoch + 1, "loss": loss, "lr": lr})
        if loss < best:
            best = loss
            best_state = {k: v.copy() for k, v in params.items()}
            since_improve = 0
        else:
            since_improve += 1
            if since_improve >= cfg.plateau_patience:
                lr *= 0.5
                since_improve = 0
    for k, v in best_state.items():
        params[k][...] = v
    return adapted, history


def _adapted_loss(adapted, x, y):
    return cross_entropy(softmax(adapted.logits(x)), y)


def _lin_gradients(adapted, x, y, weight_decay):
    logits, hidden = adapted.logits(x, keep_hidden=True)
    probs = softmax(logits)
    n = len(y)
    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    g_out_w = delta.T @ hidden[-1] + weight_decay * adapted.out_w
    g_out_b = delta.sum(axis=0)
    delta = delta @ adapted.out_w
    for i in range(len(adapted.base.layers) - 2, -1, -1):
        delta = delta * (hidden[i + 1] > 0)
        delta = delta @ adapted.base.layers[i][0]
    frames = x.reshape(n, adapted.window, adapted.static_dim)
    dflat = delta.reshape(n, adapted.window, adapted.static_dim)
    g_w_lin = np.einsum("nwo,nwi->oi", dflat, frames) + weight_decay * adapted.w_lin
    g_b_lin = dflat.sum(axis=(0, 1))
    return {"w_lin": g_w_lin, "b_lin": g_b_lin, "out_w": g_out_w, "out_b": g_out_b}


def _finetune(model, x, y, cfg, rng, window, static_dim):
    tuned = model.copy()
    velocity = [(np.zeros_like(w), np.zeros_like(b)) for w, b in tuned.layers]
    lr = cfg.learning_rate
    history = [{"epoch": 0, "loss": cross_entropy(tuned.predict_proba(x), y)}]
    best = history[0]["loss"]
    best_layers = [(w.copy(), b.copy()) for w, b in tuned.layers]
    since_improve = 0
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(x))
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            _, grads = loss_and_gradients(tuned, x[idx], y[idx], cfg.weight_decay)
            for i, ((gw, gb), (vw, vb)) in enumerate(zip(grads, velocity)):
                vw *= cfg.momentum
                vw -= lr * gw
                vb *= cfg.momentum
                vb -= lr * gb
                w, b = tuned.layers[i]
                tuned.layers[i] = (w + vw, b + vb)
        loss = cross_entropy(tuned.predict_proba(x), y)
        history.append({"epoch": epoch + 1, "loss": loss, "lr": lr})
        if loss < best:
            best = loss
            best_layers = [(w.copy(), b.copy()) for w, b in tuned.layers]
            since_improve = 0
        else:
            since_improve += 1
            if since_improve >= cfg.plateau_patience:
                lr *= 0.5
                since_improve = 0
    tuned.layers = best_layers
    return AdaptationModel("fine-tune", model, window, static_dim, tuned=tuned), history


# ---------------------------------------------------------------------------
# Tandem observations

@dataclass
class FramePosteriors:
    """Per-frame classifier outputs: letter distribution and/or the six
    phonological feature distributions (feature name -> vector)."""
    letters: np.ndarray = None
    features: dict = field(default_factory=dict)


def classifier_block(post, mode, feature_order=None):
    """Concatenated classifier outputs for one frame: 28 values in letter
    mode, 26 (= 4+7+5+3+4+3) in feature mode."""
    if mode == "letter":
        if post.letters is None:
            raise ValueError("letter posteriors missing")
        return np.asarray(post.letters, dtype=np.float64)
    if mode == "feature":
        order = feature_order or sorted(post.features)
        missing = [f for f in order if f not in post.features]
        if missing:
            raise ValueError("feature posteriors missing: %s" % ", ".join(missing))
        return np.concatenate([np.asarray(post.features[f], dtype=np.float64)
                               for f in order])
    raise ValueError("mode must be 'letter' or 'feature'")


def build_tandem_observation(post, image_feature, mode, pca_classifier=None,
                             pca_image=None, transform="linear",
                             feature_order=None):
    """One tandem observation: (optionally log) classifier outputs, PCA
    reduced, concatenated with the PCA-reduced image feature."""
    from .vision import apply_pca
    block = classifier_block(post, mode, feature_order)
    if transform == "log":
        block = np.log(np.maximum(block, LOG_FLOOR))
    elif transform != "linear":
        raise ValueError("transform must be 'linear' or 'log'")
    if pca_classifier is not None:
        block = apply_pca(pca_classifier, block)
    img = np.asarray(image_feature, dtype=np.float64)
    if pca_image is not None:
        img = apply_pca(pca_image, img)
    return np.concatenate([block, img])
