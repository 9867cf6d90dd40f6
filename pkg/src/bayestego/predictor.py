"""Dual-headed dropout network predicting a pixel intensity and its noise variance.

The network maps a context-window feature vector through ReLU hidden layers
to two affine heads: the predicted intensity (normalised to [0, 1]) and the
log of the observation-noise variance. Training minimises

    L = D + lam * R
    D = (1/N) sum_n (y_n - yhat_n)^2 * (sigma2_n / sum(sigma2))^-1
    R = (1/N) sum_n ln sigma2_n

with plain mini-batch gradient descent and fresh dropout masks per example.
"""

from dataclasses import dataclass, field
import hashlib
import math
import struct

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import ConfigError, DomainError, FormatError, ShapeError
from .prng import Xoshiro256
from .validation import check_features, check_seed, check_targets

DEFAULT_LAYER_SIZES = (12, 64, 64)
DEFAULT_DROPOUT = 0.3
INITIAL_VARIANCE = 0.01

MODEL_MAGIC = b"BNNR"
MODEL_VERSION = 1


def _f32(a):
    """Round to the nearest binary32 value, kept as float64."""
    return np.asarray(a, dtype=np.float32).astype(np.float64)


class DualHeadedModel:
    """Parameters of the dual-headed network.

    ``weights[l]`` has shape ``(layer_sizes[l], layer_sizes[l + 1])``; the two
    heads read the last hidden layer. All arrays are float64.
    """

    def __init__(self, layer_sizes, dropout_rate, weights, biases,
                 mean_w, mean_b, logvar_w, logvar_b):
        self.layer_sizes = tuple(int(s) for s in layer_sizes)
        self.dropout_rate = float(dropout_rate)
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.mean_w = np.asarray(mean_w, dtype=np.float64)
        self.mean_b = np.asarray(mean_b, dtype=np.float64).reshape(())
        self.logvar_w = np.asarray(logvar_w, dtype=np.float64)
        self.logvar_b = np.asarray(logvar_b, dtype=np.float64).reshape(())
        self._check()

    def _check(self):
        sizes = self.layer_sizes
        if len(sizes) < 2:
            raise ShapeError("layer_sizes needs an input size and at least one hidden layer")
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ShapeError("one weight matrix and bias vector per hidden layer expected")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[l], sizes[l + 1]) or b.shape != (sizes[l + 1],):
                raise ShapeError(f"layer {l} parameters have shapes {w.shape}, {b.shape}")
        h = sizes[-1]
        if self.mean_w.shape != (h,) or self.logvar_w.shape != (h,):
            raise ShapeError("head weights must match the last hidden layer")

    @property
    def n_inputs(self):
        return self.layer_sizes[0]

    @property
    def hidden_sizes(self):
        return self.layer_sizes[1:]

    def parameters(self):
        """Parameter arrays in serialisation order."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out + [self.mean_w, self.mean_b, self.logvar_w, self.logvar_b]

    @classmethod
    def from_parameters(cls, layer_sizes, dropout_rate, params):
        n = len(layer_sizes) - 1
        params = list(params)
        return cls(layer_sizes, dropout_rate,
                   params[0:2 * n:2], params[1:2 * n:2], *params[2 * n:])

    def replace(self, params):
        return DualHeadedModel.from_parameters(self.layer_sizes, self.dropout_rate, params)

    def copy(self):
        return self.replace([p.copy() for p in self.parameters()])

    def __eq__(self, other):
        if not isinstance(other, DualHeadedModel):
            return NotImplemented
        if self.layer_sizes != other.layer_sizes or self.dropout_rate != other.dropout_rate:
            return False
        return all(a.tobytes() == b.tobytes()
                   for a, b in zip(self.parameters(), other.parameters()))

    __hash__ = None

    def __repr__(self):
        return f"DualHeadedModel(layer_sizes={self.layer_sizes}, dropout_rate={self.dropout_rate})"


@dataclass
class TrainConfig:
    """Plain mini-batch gradient descent settings.

    The first ``warmup_epochs`` (default: two thirds of ``epochs``) hold the
    predicted variances constant and fit the mean path only; the remaining
    epochs follow the full gradient at ``joint_learning_rate``
    (``learning_rate`` when None).
    """

    lam: float = 1.0
    learning_rate: float = 1e-3
    batch_size: int = 128
    epochs: int = 30
    weight_decay: float = 1e-5
    seed: int = 0
    warmup_epochs: int = None
    joint_learning_rate: float = 1e-4

    def __post_init__(self):
        if not self.lam >= 0:
            raise ConfigError("lam must be >= 0")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ConfigError("batch_size must be a positive integer")
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ConfigError("epochs must be a positive integer")
        if not self.weight_decay >= 0:
            raise ConfigError("weight_decay must be >= 0")
        if self.warmup_epochs is None:
            self.warmup_epochs = 2 * int(self.epochs) // 3
        if int(self.warmup_epochs) != self.warmup_epochs or not 0 <= self.warmup_epochs <= self.epochs:
            raise ConfigError("warmup_epochs must be an integer in [0, epochs]")
        if self.joint_learning_rate is not None and not self.joint_learning_rate > 0:
            raise ConfigError("joint_learning_rate must be > 0")
        try:
            self.seed = check_seed(self.seed)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


@dataclass(frozen=True)
class DropoutMask:
    """Keep/drop indicators for each hidden layer.

    ``keep[l]`` is a boolean array of shape ``(units,)`` for one network
    realisation, or ``(batch, units)`` for one realisation per example.
    """

    keep: tuple
    rate: float = field(default=0.0)

    def scales(self):
        s = 1.0 / (1.0 - self.rate)
        return [np.where(k, s, 0.0) for k in self.keep]

    @classmethod
    def draw(cls, model, rng):
        """Draw one mask from a :class:`~bayestego.prng.Xoshiro256`, layer by layer, unit by unit."""
        p_keep = 1.0 - model.dropout_rate
        keep = tuple(np.array(rng.bernoulli(n, p_keep), dtype=bool) for n in model.hidden_sizes)
        return cls(keep, model.dropout_rate)

    @classmethod
    def draw_batch(cls, model, generator, batch):
        """Independent masks for ``batch`` examples from a numpy Generator."""
        p_keep = 1.0 - model.dropout_rate
        keep = tuple(generator.random((batch, n)) < p_keep for n in model.hidden_sizes)
        return cls(keep, model.dropout_rate)

    @classmethod
    def full(cls, model):
        return cls(tuple(np.ones(n, dtype=bool) for n in model.hidden_sizes), model.dropout_rate)


def init_model(layer_sizes=DEFAULT_LAYER_SIZES, dropout_rate=DEFAULT_DROPOUT, seed=0):
    """Fresh network with U(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and zero biases."""
    layer_sizes = tuple(int(s) for s in layer_sizes)
    if len(layer_sizes) < 2 or min(layer_sizes) < 1:
        raise ConfigError("layer_sizes needs an input size and at least one positive hidden size")
    if not (0.0 <= dropout_rate < 1.0):
        raise ConfigError(f"dropout_rate must lie in [0, 1), got {dropout_rate}")
    rng = np.random.Generator(np.random.PCG64(check_seed(seed)))
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(_f32(rng.uniform(-bound, bound, size=(fan_in, fan_out))))
        biases.append(np.zeros(fan_out))
    h = layer_sizes[-1]
    bound = 1.0 / math.sqrt(h)
    mean_w = _f32(rng.uniform(-bound, bound, size=h))
    logvar_w = _f32(rng.uniform(-bound, bound, size=h))
    return DualHeadedModel(layer_sizes, dropout_rate, weights, biases,
                           mean_w, 0.0, logvar_w, _f32(math.log(INITIAL_VARIANCE)))


def _forward(model, x, mask):
    """Batch forward pass keeping the activations needed for backprop."""
    scales = mask.scales() if mask is not None else [None] * len(model.weights)
    acts = [x]
    pre = []
    h = x
    for w, b, s in zip(model.weights, model.biases, scales):
        z = h @ w + b
        pre.append(z)
        h = np.maximum(z, 0.0)
        if s is not None:
            h = h * s
        acts.append(h)
    mean = h @ model.mean_w + model.mean_b
    logvar = h @ model.logvar_w + model.logvar_b
    return mean, logvar, acts, pre, scales


def forward(model, features, mask=None):
    """Predicted intensity and variance.

    ``features`` is one feature vector (returns two floats) or a 2-D batch
    (returns two arrays). ``mask=None`` runs the deterministic network.
    """
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.n_inputs:
        raise ShapeError(f"expected {model.n_inputs} features, got shape {np.shape(features)}")
    if mask is not None and len(mask.keep) != len(model.weights):
        raise ShapeError("dropout mask does not match the hidden layers")
    mean, logvar, *_ = _forward(model, x, mask)
    var = np.exp(logvar)
    if single:
        return float(mean[0]), float(var[0])
    return mean, var


def loss(y, y_hat, var, lam=1.0):
    """Uncertainty-weighted distance plus ``lam`` times the mean log-variance."""
    y = np.asarray(y, dtype=np.float64).ravel()
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    var = np.asarray(var, dtype=np.float64).ravel()
    if not (len(y) == len(y_hat) == len(var)) or len(y) == 0:
        raise ShapeError("y, y_hat and var must be equal, non-empty lengths")
    if np.any(~(var > 0)):
        raise DomainError("variances must be strictly positive")
    n = len(y)
    total = var.sum()
    distance = np.sum((y - y_hat) ** 2 * (total / var)) / n
    reg = np.sum(np.log(var)) / n
    return float(distance + lam * reg)


def loss_gradients(model, features, targets, mask=None, lam=1.0, variance_grad=True):
    """Loss and its exact gradient with respect to every parameter.

    Returns ``(value, grads)`` where ``grads`` follows ``model.parameters()``.
    ``mask`` may hold per-example indicators of shape ``(batch, units)``.
    With ``variance_grad=False`` the variances are held constant, giving the
    partial gradient along the mean path only (the variance head gets zeros).
    """
    x = check_features(features, model.n_inputs)
    y = np.asarray(targets, dtype=np.float64).ravel()
    if len(y) != len(x):
        raise ShapeError(f"{len(x)} feature rows but {len(y)} targets")
    mean, logvar, acts, pre, scales = _forward(model, x, mask)
    var = np.exp(logvar)
    value = loss(y, mean, var, lam)

    n = len(y)
    total = var.sum()
    r = y - mean
    r2_over_var = r * r / var
    # the normaliser sum(var) couples every example's weight to every variance
    d_mean = -2.0 * total * r / var / n
    if variance_grad:
        d_logvar = (var * r2_over_var.sum() - total * r2_over_var) / n + lam / n
    else:
        d_logvar = np.zeros_like(d_mean)

    h = acts[-1]
    g_mean_w = h.T @ d_mean
    g_mean_b = d_mean.sum()
    g_logvar_w = h.T @ d_logvar
    g_logvar_b = d_logvar.sum()
    dh = np.outer(d_mean, model.mean_w) + np.outer(d_logvar, model.logvar_w)

    g_w = [None] * len(model.weights)
    g_b = [None] * len(model.weights)
    for l in range(len(model.weights) - 1, -1, -1):
        if scales[l] is not None:
            dh = dh * scales[l]
        dz = dh * (pre[l] > 0)
        g_w[l] = acts[l].T @ dz
        g_b[l] = dz.sum(axis=0)
        if l:
            dh = dz @ model.weights[l].T

    grads = []
    for gw, gb in zip(g_w, g_b):
        grads += [gw, gb]
    grads += [g_mean_w, np.asarray(g_mean_b), g_logvar_w, np.asarray(g_logvar_b)]
    return value, grads


def _as_dataset(dataset):
    if isinstance(dataset, tuple) and len(dataset) == 2 and np.ndim(dataset[0]) == 2:
        x, y = dataset
    else:
        pairs = list(dataset)
        if not pairs:
            raise ConfigError("empty training dataset")
        x = np.array([p[0] for p in pairs], dtype=np.float64)
        y = np.array([p[1] for p in pairs], dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if len(x) == 0:
        raise ConfigError("empty training dataset")
    return x, y


def train(dataset, config=None, model=None, verbose=False):
    """Mini-batch gradient descent on the uncertainty-weighted loss.

    ``dataset`` is ``(features, targets)`` arrays or a sequence of
    ``(features, target)`` pairs with targets in [0, 1]. Returns the trained
    model (parameters rounded to binary32) and the mean loss of each epoch.
    """
    config = config or TrainConfig()
    x, y = _as_dataset(dataset)
    check_targets(y)
    if model is None:
        model = init_model((x.shape[1],) + DEFAULT_LAYER_SIZES[1:], DEFAULT_DROPOUT, config.seed)
    x = check_features(x, model.n_inputs)

    rng = np.random.Generator(np.random.PCG64(config.seed))
    params = [p.copy() for p in model.parameters()]
    n_hidden = len(model.weights)
    decayed = set(range(0, 2 * n_hidden, 2)) | {2 * n_hidden, 2 * n_hidden + 2}
    current = model.replace(params)
    trace = []
    n = len(y)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        joint = epoch >= config.warmup_epochs
        lr = config.learning_rate
        if joint and config.joint_learning_rate is not None:
            lr = config.joint_learning_rate
        batch_losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            mask = DropoutMask.draw_batch(current, rng, len(idx))
            value, grads = loss_gradients(current, x[idx], y[idx], mask, config.lam,
                                          variance_grad=joint)
            if not np.isfinite(value):
                raise DomainError(f"training diverged at epoch {epoch} (loss {value})")
            for i, (p, g) in enumerate(zip(params, grads)):
                if config.weight_decay and i in decayed:
                    g = g + config.weight_decay * p
                p -= lr * g
            batch_losses.append(value)
        trace.append(float(np.mean(batch_losses)))
        if verbose:
            print(f"epoch {epoch + 1}/{config.epochs} loss {trace[-1]:.6g}")
    trained = model.replace([_f32(p) for p in params])
    return trained, trace


# --- serialisation --------------------------------------------------------

def save_model(model):
    """Canonical bytes: magic, version, layer sizes, dropout rate, binary32 parameters."""
    sizes = model.layer_sizes
    flat = np.concatenate([p.ravel() for p in model.parameters()]).astype("<f4")
    head = struct.pack("<4sHH", MODEL_MAGIC, MODEL_VERSION, len(sizes))
    head += struct.pack(f"<{len(sizes)}I", *sizes)
    head += struct.pack("<dI", model.dropout_rate, flat.size)
    return head + flat.tobytes()


def _n_params(sizes):
    n = sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))
    return n + 2 * sizes[-1] + 2


def load_model(data):
    data = bytes(data)
    if len(data) < 8:
        raise FormatError("model file truncated")
    magic, version, n_sizes = struct.unpack_from("<4sHH", data, 0)
    if magic != MODEL_MAGIC:
        raise FormatError("bad model magic")
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported model version {version}")
    off = 8
    if len(data) < off + 4 * n_sizes + 12:
        raise FormatError("model file truncated")
    sizes = struct.unpack_from(f"<{n_sizes}I", data, off)
    off += 4 * n_sizes
    rate, count = struct.unpack_from("<dI", data, off)
    off += 12
    if n_sizes < 2 or min(sizes) < 1 or count != _n_params(sizes):
        raise FormatError("inconsistent layer sizes in model file")
    if len(data) != off + 4 * count:
        raise FormatError(f"model payload has {len(data) - off} bytes, expected {4 * count}")
    if not (0.0 <= rate < 1.0):
        raise FormatError(f"invalid dropout rate {rate}")
    flat = np.frombuffer(data, dtype="<f4", offset=off, count=count).astype(np.float64)
    shapes = []
    for a, b in zip(sizes[:-1], sizes[1:]):
        shapes += [(a, b), (b,)]
    shapes += [(sizes[-1],), (), (sizes[-1],), ()]
    params = []
    pos = 0
    for shape in shapes:
        k = int(np.prod(shape))
        params.append(flat[pos:pos + k].reshape(shape))
        pos += k
    return DualHeadedModel.from_parameters(sizes, rate, params)


def model_hash(model_or_bytes):
    data = model_or_bytes if isinstance(model_or_bytes, (bytes, bytearray)) else save_model(model_or_bytes)
    return hashlib.sha256(data).hexdigest()


def read_model(path):
    with open(path, "rb") as fh:
        return load_model(fh.read())


def write_model(path, model):
    with open(path, "wb") as fh:
        fh.write(save_model(model))


# --- estimator ------------------------------------------------------------

class DualHeadRegressor(RegressorMixin, BaseEstimator):
    """scikit-learn regressor wrapping the dual-headed dropout network.

    ``fit`` expects targets already scaled to [0, 1]. ``predict`` runs the
    deterministic network; ``sample`` runs Monte Carlo dropout.

    Parameters
    ----------
    hidden_layer_sizes : tuple of int
    dropout : float
        Drop probability of each hidden unit, in [0, 1).
    reg_lambda : float
        Weight of the mean log-variance regulariser.
    learning_rate, batch_size, epochs, weight_decay, warmup_epochs, joint_learning_rate :
        Plain SGD settings; see :class:`TrainConfig`.
    random_state : int
        Seed for initialisation, shuffling and training masks.
    """

    def __init__(self, hidden_layer_sizes=(64, 64), dropout=DEFAULT_DROPOUT, reg_lambda=1.0,
                 learning_rate=1e-3, batch_size=128, epochs=30, weight_decay=1e-5,
                 warmup_epochs=None, joint_learning_rate=1e-4, random_state=0, verbose=False):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.dropout = dropout
        self.reg_lambda = reg_lambda
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.weight_decay = weight_decay
        self.warmup_epochs = warmup_epochs
        self.joint_learning_rate = joint_learning_rate
        self.random_state = random_state
        self.verbose = verbose

    def _config(self):
        return TrainConfig(lam=self.reg_lambda, learning_rate=self.learning_rate,
                           batch_size=self.batch_size, epochs=self.epochs,
                           weight_decay=self.weight_decay, seed=self.random_state,
                           warmup_epochs=self.warmup_epochs,
                           joint_learning_rate=self.joint_learning_rate)

    def fit(self, X, y):
        X = check_features(X)
        y = check_targets(y, len(X))
        config = self._config()
        sizes = (X.shape[1],) + tuple(self.hidden_layer_sizes)
        model = init_model(sizes, self.dropout, config.seed)
        self.model_, self.loss_curve_ = train((X, y), config, model, verbose=self.verbose)
        self.n_features_in_ = X.shape[1]
        return self

    @classmethod
    def from_model(cls, model, **params):
        """Wrap an already-trained :class:`DualHeadedModel`."""
        est = cls(hidden_layer_sizes=model.hidden_sizes, dropout=model.dropout_rate, **params)
        est.model_ = model
        est.loss_curve_ = []
        est.n_features_in_ = model.n_inputs
        return est

    def predict(self, X, return_var=False):
        check_is_fitted(self, "model_")
        X = check_features(X, self.n_features_in_)
        mean, var = forward(self.model_, X)
        return (mean, var) if return_var else mean

    def sample(self, X, n_samples=64, seed=0):
        """Monte Carlo dropout: ``(means, variances)`` arrays of shape ``(n_samples, n)``.

        One mask per pass, shared by every row of ``X``.
        """
        check_is_fitted(self, "model_")
        X = check_features(X, self.n_features_in_)
        rng = Xoshiro256(check_seed(seed))
        means = np.empty((n_samples, len(X)))
        variances = np.empty((n_samples, len(X)))
        for t in range(n_samples):
            mask = DropoutMask.draw(self.model_, rng)
            means[t], variances[t] = forward(self.model_, X, mask)
        return means, variances
