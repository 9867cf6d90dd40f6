"""Embedding and extraction under a shared stego key."""

from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, clone
from sklearn.utils.validation import check_is_fitted

from .bayes import embedding_order, mc_sample, predicted_intensity, random_order, uncertainty_map
from .codec import (
    HEADER_BITS,
    BitReader,
    build_frame,
    demodulate_residual,
    modulate_residual,
    parse_header,
    postprocess_range,
    preprocess_range,
)
from .exceptions import CapacityExceeded, ConfigError, FormatError, FramingError, KeyMismatch
from .grid import DEFAULT_MARGIN, DEFAULT_RADIUS, EVEN, POLARITIES, chequerboard_partition
from .metrics import psnr
from .predictor import DualHeadRegressor, model_hash
from .validation import check_bits, check_grid, check_positive_int, check_score, check_seed

FORMAT_TAG = "bayestego-1"
ORDERINGS = ("hybrid", "aleatoric", "epistemic", "random", "oracle")


@dataclass(frozen=True)
class StegoKey:
    """Everything the decoder needs to reproduce the encoder's predictions."""

    model_hash: str
    seed: int = 0
    T: int = 64
    polarity: str = EVEN
    window_radius: int = DEFAULT_RADIUS
    border_margin: int = DEFAULT_MARGIN
    score: str = "hybrid"

    def __post_init__(self):
        if not self.model_hash:
            raise ConfigError("model_hash must be set")
        try:
            check_seed(self.seed)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        check_positive_int(self.T, "T", minimum=2)
        if self.polarity not in POLARITIES:
            raise ConfigError(f"polarity must be one of {POLARITIES}")
        check_positive_int(self.window_radius, "window_radius", minimum=1)
        check_positive_int(self.border_margin, "border_margin", minimum=0)
        if self.border_margin < self.window_radius:
            raise ConfigError("border_margin must be >= window_radius")
        check_score(self.score)

    def to_text(self):
        lines = [f"format={FORMAT_TAG}"] + [f"{k}={v}" for k, v in asdict(self).items()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        fields = {}
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError(f"key line {n} is not key=value: {raw!r}")
            k, v = (s.strip() for s in line.split("=", 1))
            fields[k] = v
        fmt = fields.pop("format", FORMAT_TAG)
        if fmt != FORMAT_TAG:
            raise FormatError(f"unsupported key format {fmt!r}")
        unknown = set(fields) - set(cls.__dataclass_fields__)
        if unknown:
            raise FormatError(f"unknown key fields {sorted(unknown)}")
        try:
            for name in ("seed", "T", "window_radius", "border_margin"):
                if name in fields:
                    fields[name] = int(fields[name])
            return cls(**fields)
        except (TypeError, ValueError) as exc:
            raise FormatError(f"invalid key file: {exc}") from None


def read_key(path):
    with open(path, encoding="utf-8") as fh:
        return StegoKey.from_text(fh.read())


def write_key(path, key):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(key.to_text())


@dataclass
class Analysis:
    """Partition, preprocessed grid, shared predictions and uncertainty of one image."""

    partition: object
    preprocessed: object
    location_map: np.ndarray
    n_ambiguous: int
    prediction: np.ndarray
    uncertainty: object
    samples: object = field(repr=False, default=None)

    @property
    def query_values(self):
        p = self.partition
        return self.preprocessed.pixels[p.rows, p.cols].astype(np.int64)

    @property
    def residuals(self):
        return self.query_values - self.prediction


@dataclass
class EmbedReport:
    n_modulated: int
    frame_bits: int
    message_bits: int
    bpp: float
    psnr: float
    format: str = FORMAT_TAG


def _check_model(key, model):
    digest = model_hash(model)
    if digest != key.model_hash:
        raise KeyMismatch(f"model hash {digest[:12]}... does not match key {key.model_hash[:12]}...")


def analyze(grid, key, model, check_model=True):
    """Partition, range-preprocess and MC-sample ``grid``."""
    grid = check_grid(grid)
    if check_model:
        _check_model(key, model)
    partition = chequerboard_partition(grid, key.polarity, key.border_margin)
    pre, location_map, n_amb = preprocess_range(grid, partition)
    samples = mc_sample(model, pre, partition, key.T, key.seed, key.window_radius)
    return Analysis(partition, pre, location_map, n_amb,
                    predicted_intensity(samples), uncertainty_map(samples), samples)


def resolve_order(analysis, ordering, seed=0):
    """Embedding pathway for a named ordering.

    ``random`` is reproducible from ``seed``; ``oracle`` sorts by the true
    residual magnitude and is only meaningful for benchmarking since a
    decoder cannot know it.
    """
    if not isinstance(ordering, str):
        order = np.asarray(ordering, dtype=np.intp)
        if sorted(order.tolist()) != list(range(analysis.partition.size)):
            raise ValueError("ordering must be a permutation of the query indices")
        return order
    if ordering == "random":
        return random_order(analysis.partition.size, seed)
    if ordering == "oracle":
        return np.argsort(np.abs(analysis.residuals), kind="stable")
    return embedding_order(analysis.uncertainty, ordering)


def embed_analyzed(cover, analysis, message, order):
    """Modulate ``message`` along ``order`` given a precomputed analysis."""
    message = check_bits(message)
    frame = build_frame(message, analysis.location_map, analysis.n_ambiguous)
    reader = BitReader(frame)
    y = analysis.query_values
    pred = analysis.prediction
    out = y.copy()
    n_mod = 0
    n_frame = len(frame)
    for k in order:
        if reader.pos >= n_frame:
            break
        e_mod, _ = modulate_residual(y[k] - pred[k], reader)
        out[k] = pred[k] + e_mod
        n_mod += 1
    if reader.pos < n_frame:
        raise CapacityExceeded(
            f"frame needs {n_frame} bits but the image carries only {reader.pos}")
    p = analysis.partition
    px = analysis.preprocessed.pixels.astype(np.int64)
    px[p.rows, p.cols] = out
    stego = cover.with_pixels(px)
    report = EmbedReport(
        n_modulated=n_mod,
        frame_bits=n_frame,
        message_bits=len(message),
        bpp=len(message) / (cover.width * cover.height),
        psnr=psnr(cover, stego),
    )
    return stego, report


def embed(cover, message, key, model, ordering=None, order_seed=0):
    """Hide ``message`` bits in ``cover``; returns ``(stego, report)``.

    Raises :class:`CapacityExceeded` rather than truncating.
    """
    cover = check_grid(cover)
    analysis = analyze(cover, key, model)
    order = resolve_order(analysis, ordering or key.score, order_seed)
    return embed_analyzed(cover, analysis, message, order)


def extract(stego, key, model, ordering=None, order_seed=0):
    """Recover ``(cover, message_bits)`` from ``stego``."""
    stego = check_grid(stego)
    analysis = analyze(stego, key, model)
    if ordering == "oracle":
        raise ConfigError("the oracle ordering cannot be reproduced by a decoder")
    order = resolve_order(analysis, ordering or key.score, order_seed)
    p = analysis.partition
    y_mod = stego.pixels[p.rows, p.cols].astype(np.int64)
    pred = analysis.prediction
    restored = y_mod.copy()
    bits = []
    total = None
    for k in order:
        e, b = demodulate_residual(y_mod[k] - pred[k])
        restored[k] = pred[k] + e
        bits.extend(b)
        if total is None and len(bits) >= HEADER_BITS:
            length, n_amb = parse_header(bits[:HEADER_BITS])
            total = HEADER_BITS + n_amb + length
        if total is not None and len(bits) >= total:
            break
    else:
        raise FramingError("ran out of query pixels before the frame ended")
    if restored.min() < 0 or restored.max() > 255:
        raise FramingError("restored intensities fall outside [0, 255]")
    bits = np.array(bits[:total], dtype=np.uint8)
    location_map = bits[HEADER_BITS:HEADER_BITS + n_amb]
    message = bits[HEADER_BITS + n_amb:total]
    px = stego.pixels.astype(np.int64)
    px[p.rows, p.cols] = restored
    cover = postprocess_range(stego.with_pixels(px), p, location_map)
    return cover, message


def capacity_from_residuals(residuals):
    r = np.abs(np.asarray(residuals))
    zeros = int(np.sum(r == 0))
    ones_twos = int(np.sum((r == 1) | (r == 2)))
    return zeros + ones_twos, 1.5 * zeros + ones_twos


def capacity_estimate(cover, key, model):
    """``(guaranteed_bits, expected_bits)`` over all carriers of the preprocessed cover.

    Both count raw carrier bits; the 56-bit header and location map still
    have to fit in them.
    """
    analysis = analyze(check_grid(cover), key, model)
    return capacity_from_residuals(analysis.residuals)


def payload_capacity(analysis):
    """Message bits that always fit: guaranteed carrier bits minus framing overhead."""
    guaranteed, _ = capacity_from_residuals(analysis.residuals)
    return max(0, guaranteed - HEADER_BITS - analysis.n_ambiguous)


# --- estimator ------------------------------------------------------------

class BayesianStego(BaseEstimator):
    """Reversible steganography with a Monte Carlo dropout predictor.

    ``fit`` trains the pixel predictor on context-window patches of a list
    of cover images; ``embed`` / ``extract`` then run the stego pipeline
    with the key derived from the fitted model.

    Parameters
    ----------
    regressor : DualHeadRegressor, optional
        Unfitted predictor to clone and train. Defaults to
        ``DualHeadRegressor()``.
    n_samples : int
        Monte Carlo dropout passes (T).
    score : {"hybrid", "aleatoric", "epistemic"}
    n_patches : int or None
        Training patches drawn from the images; ``None`` keeps all.
    random_state : int
        Seeds patch sampling and is stored as the key's dropout seed.
    """

    def __init__(self, regressor=None, n_samples=64, score="hybrid", polarity=EVEN,
                 window_radius=DEFAULT_RADIUS, border_margin=DEFAULT_MARGIN,
                 n_patches=50_000, random_state=0):
        self.regressor = regressor
        self.n_samples = n_samples
        self.score = score
        self.polarity = polarity
        self.window_radius = window_radius
        self.border_margin = border_margin
        self.n_patches = n_patches
        self.random_state = random_state

    def fit(self, images, y=None):
        from .patches import ContextPatches

        patches = ContextPatches(polarity=self.polarity, window_radius=self.window_radius,
                                 border_margin=self.border_margin, n_patches=self.n_patches,
                                 random_state=self.random_state)
        X, targets = patches.fit_transform(images)
        reg = clone(self.regressor) if self.regressor is not None else DualHeadRegressor()
        self.regressor_ = reg.fit(X, targets)
        self._set_key()
        return self

    def _set_key(self):
        model = self.regressor_.model_
        self.model_ = model
        self.key_ = StegoKey(model_hash(model), seed=self.random_state, T=self.n_samples,
                             polarity=self.polarity, window_radius=self.window_radius,
                             border_margin=self.border_margin, score=self.score)

    @classmethod
    def from_model(cls, model, **params):
        est = cls(**params)
        est.regressor_ = DualHeadRegressor.from_model(model)
        est._set_key()
        return est

    def analyze(self, image):
        check_is_fitted(self, "key_")
        return analyze(image, self.key_, self.model_)

    def embed(self, cover, message):
        check_is_fitted(self, "key_")
        return embed(cover, message, self.key_, self.model_)

    def extract(self, stego):
        check_is_fitted(self, "key_")
        return extract(stego, self.key_, self.model_)

    def capacity(self, cover):
        check_is_fitted(self, "key_")
        return capacity_estimate(cover, self.key_, self.model_)
