"""Trainable per-pixel radial rectification.

A small deterministic regressor predicts one signed radial magnitude per
pixel from local depth features; moving each back-projected point along
its ray by that magnitude leaves projection pixels fixed, so training
reduces to a masked depth regression. Both a linear model and a
one-hidden-layer tanh network are provided, trainable under the robust
penalty or plain MSE with full-batch gradient descent.
"""

import struct
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .features import FeatureGrid, extract_features, feature_count
from .geometry import (EPS_DEPTH, PointCloud, RangeImage, apply_offsets,
                       radial_project, rrvp)
from .losses import WelschParams, welsch, welsch_grad
from .validation import check_range_image

MODEL_MAGIC = b"RRNM1"
_KIND_CODES = {"linear": 0, "mlp": 1}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}


class TrainingDiverged(RuntimeError):
    """Raised when the training loss stops being finite."""

    def __init__(self, epoch: int):
        super().__init__(f"training loss became non-finite at epoch {epoch}")
        self.epoch = epoch


@dataclass
class TrainConfig:
    """Deterministic full-batch training hyperparameters.

    ``step=None`` resolves per loss: the robust penalty's per-pixel pull is
    bounded by ``exp(-1/2)/nu`` so it tolerates (and needs) a much larger
    step than MSE, whose pull grows with the residual and diverges at the
    robust-friendly step. ``max_pixels_per_pair`` caps the training set by
    a seeded draw per pair; ``None`` uses every valid pixel.
    """

    radius: int = 6
    hidden: int = 16
    epochs: int = 6000
    step: float | None = None
    step_decay: float = 0.9997
    seed: int = 0
    max_pixels_per_pair: int | None = 12000

    def resolved_step(self, loss_kind: str) -> float:
        if self.step is not None and self.step > 0:
            return self.step
        return 0.5 if loss_kind == "welsch" else 0.05


@dataclass
class TrainReport:
    """Per-epoch traces and the final per-label accuracy summary."""

    loss: np.ndarray
    grad_norm: np.ndarray
    rmse_by_label: dict[str, float] | None = None


class Regressor:
    """Base for per-pixel magnitude models; owns feature standardization."""

    kind = ""

    def __init__(self, radius: int, feature_mean: np.ndarray,
                 feature_std: np.ndarray):
        self.radius = radius
        self.feature_mean = np.asarray(feature_mean, dtype=np.float64)
        self.feature_std = np.asarray(feature_std, dtype=np.float64)

    def standardize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.feature_mean) / self.feature_std

    def forward(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, z: np.ndarray, grad_s: np.ndarray) -> list[np.ndarray]:
        raise NotImplementedError

    def params(self) -> list[np.ndarray]:
        raise NotImplementedError

    def predict_features(self, x: np.ndarray) -> np.ndarray:
        """Magnitudes for raw (unstandardized) feature rows."""
        return self.forward(self.standardize(x))

    def predict_grid(self, grid: FeatureGrid) -> np.ndarray:
        """Per-pixel magnitudes; zero where the feature window is invalid."""
        if grid.n_features != self.feature_mean.size:
            raise ValueError("feature schema does not match the model")
        s = np.zeros(grid.valid.shape, dtype=np.float64)
        if np.any(grid.valid):
            s[grid.valid] = self.predict_features(grid.values[grid.valid])
        return s


class LinearModel(Regressor):
    kind = "linear"

    def __init__(self, radius, feature_mean, feature_std, weights=None, bias=0.0):
        super().__init__(radius, feature_mean, feature_std)
        n = self.feature_mean.size
        self.weights = (np.zeros(n) if weights is None
                        else np.asarray(weights, dtype=np.float64))
        self.bias = float(bias)

    def forward(self, z):
        return z @ self.weights + self.bias

    def backward(self, z, grad_s):
        return [z.T @ grad_s, np.asarray(grad_s.sum())]

    def params(self):
        return [self.weights, np.atleast_1d(np.float64(self.bias))]

    def set_params_flat(self, updated):
        self.weights = updated[0]
        self.bias = updated[1].item()


class Mlp1(Regressor):
    """One hidden tanh layer; the output layer starts at zero so an
    already-perfect pair is a fixed point of training."""

    kind = "mlp"

    def __init__(self, radius, feature_mean, feature_std, hidden=16, seed=0,
                 weights=None):
        super().__init__(radius, feature_mean, feature_std)
        n = self.feature_mean.size
        self.hidden = hidden
        if weights is not None:
            self.w1, self.b1, self.w2, self.b2 = weights
        else:
            rng = np.random.default_rng(seed)
            bound = 1.0 / np.sqrt(n)
            self.w1 = rng.uniform(-bound, bound, size=(n, hidden))
            self.b1 = rng.uniform(-bound, bound, size=hidden)
            self.w2 = np.zeros(hidden)
            self.b2 = 0.0
        self._activ = None

    def forward(self, z):
        self._activ = np.tanh(z @ self.w1 + self.b1)
        return self._activ @ self.w2 + self.b2

    def backward(self, z, grad_s):
        a = self._activ
        grad_w2 = a.T @ grad_s
        grad_b2 = np.asarray(grad_s.sum())
        da = (grad_s[:, None] * self.w2[None, :]) * (1.0 - a * a)
        grad_w1 = z.T @ da
        grad_b1 = da.sum(axis=0)
        return [grad_w1, grad_b1, grad_w2, grad_b2]

    def params(self):
        return [self.w1, self.b1, self.w2, np.atleast_1d(np.float64(self.b2))]

    def set_params_flat(self, updated):
        self.w1, self.b1, self.w2 = updated[0], updated[1], updated[2]
        self.b2 = updated[3].item()


def _gather_training_data(pairs, radius, max_pixels, seed):
    rows, gen_d, gt_d = [], [], []
    for k, (x_gen, x_gt) in enumerate(pairs):
        check_range_image(x_gen)
        check_range_image(x_gt)
        grid = extract_features(x_gen, radius)
        use = grid.valid & x_gen.mask & x_gt.mask
        x = grid.values[use]
        g = x_gen.depth[use]
        t = x_gt.depth[use]
        if max_pixels is not None and x.shape[0] > max_pixels:
            rng = np.random.default_rng([seed, 17, k])
            idx = rng.choice(x.shape[0], size=max_pixels, replace=False)
            x, g, t = x[idx], g[idx], t[idx]
        rows.append(x)
        gen_d.append(g)
        gt_d.append(t)
    x = np.concatenate(rows, axis=0)
    if x.shape[0] == 0:
        raise ValueError("no jointly valid pixels to train on")
    return x, np.concatenate(gen_d), np.concatenate(gt_d)


def train_regressor(pairs, model_kind: str = "mlp", loss_kind: str = "welsch",
                    params: WelschParams = WelschParams(),
                    hyper: TrainConfig = TrainConfig(),
                    reports=None) -> tuple[Regressor, TrainReport]:
    """Fit a magnitude model on (generated, ground-truth) image pairs.

    Full-batch gradient descent with a geometrically decaying step; the
    loss is the pooled mean over all jointly masked, feature-valid pixels
    of every pair, so identical inputs and seed give identical parameters.
    ``reports`` may pass per-pair corruption label grids to obtain the
    final RMSE split by label.
    """
    if model_kind not in _KIND_CODES:
        raise ValueError(f"unknown model kind {model_kind!r}")
    if loss_kind not in ("welsch", "mse"):
        raise ValueError(f"unknown loss kind {loss_kind!r}")
    if not pairs:
        raise ValueError("at least one training pair is required")

    x, gen_d, gt_d = _gather_training_data(
        pairs, hyper.radius, hyper.max_pixels_per_pair, hyper.seed)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std[std < 1e-12] = 1.0

    if model_kind == "linear":
        model: Regressor = LinearModel(hyper.radius, mean, std)
    else:
        model = Mlp1(hyper.radius, mean, std, hidden=hyper.hidden,
                     seed=hyper.seed)

    z = model.standardize(x)
    m = z.shape[0]
    step = hyper.resolved_step(loss_kind)
    losses = np.empty(hyper.epochs)
    grad_norms = np.empty(hyper.epochs)

    # Overflow on the way to a non-finite loss is reported as
    # TrainingDiverged, not as numpy warnings.
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(hyper.epochs):
            s = model.forward(z)
            residual = gen_d + s - gt_d
            if loss_kind == "welsch":
                loss = float(np.mean(welsch(residual, params)))
                grad_s = welsch_grad(residual, params) / m
            else:
                loss = float(np.mean(residual * residual))
                grad_s = 2.0 * residual / m
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch)
            grads = model.backward(z, grad_s)
            grad_norms[epoch] = np.sqrt(
                sum(float(np.sum(g * g)) for g in grads))
            updated = [p - step * g for p, g in zip(model.params(), grads)]
            model.set_params_flat(updated)
            losses[epoch] = loss
            step *= hyper.step_decay

    rmse_by_label = None
    if reports is not None:
        rmse_by_label = evaluate_rmse_by_label(pairs, reports, model)
    return model, TrainReport(losses, grad_norms, rmse_by_label)


def evaluate_rmse_by_label(pairs, reports, model):
    """RMSE of the model's corrected residual, pooled per corruption label."""
    pooled: dict[str, list[np.ndarray]] = {}
    for (x_gen, x_gt), report in zip(pairs, reports):
        grid = extract_features(x_gen, model.radius)
        s = model.predict_grid(grid)
        residual = x_gen.depth + s - x_gt.depth
        joint = x_gen.mask & x_gt.mask
        for name, label_mask in report.label_masks().items():
            pooled.setdefault(name, []).append(residual[label_mask & joint])
    return {
        name: float(np.sqrt(np.mean(np.concatenate(vals) ** 2)))
        for name, vals in pooled.items() if sum(v.size for v in vals)
    }


def rectify(image: RangeImage, model: Regressor
            ) -> tuple[RangeImage, PointCloud]:
    """Apply a trained model to one image.

    Returns the rectified image (depth + predicted magnitude on masked
    pixels, floored at ``EPS_DEPTH``) and the matching rectified point
    cloud obtained by moving the back-projected points radially. The
    returned image equals the re-projection of the returned cloud.
    """
    check_range_image(image)
    grid = extract_features(image, model.radius)
    s = model.predict_grid(grid)
    s[~image.mask] = 0.0

    new_depth = np.where(image.mask,
                         np.maximum(image.depth + s, EPS_DEPTH), 0.0)
    rectified = RangeImage(new_depth, image.mask.copy(), image.config)

    cloud, _ = rrvp(image)
    s_points = s[image.mask]  # row-major, matching rrvp's point order
    units = cloud.points / np.linalg.norm(cloud.points, axis=1, keepdims=True)
    offsets = radial_project(cloud, s_points[:, None] * units)
    moved, _ = apply_offsets(cloud, offsets)
    return rectified, moved


def save_regressor(model: Regressor, path) -> None:
    """Serialize a model: magic, kind byte, feature schema, scaler, params.

    All numeric payloads are little-endian float64; parameter order is
    weights-then-bias for the linear model and hidden weights, hidden
    biases, output weights, output bias for the one-layer network.
    """
    n = model.feature_mean.size
    hidden = getattr(model, "hidden", 0)
    blob = bytearray()
    blob += MODEL_MAGIC
    blob += struct.pack("<B", _KIND_CODES[model.kind])
    blob += struct.pack("<III", model.radius, n, hidden)
    blob += model.feature_mean.astype("<f8").tobytes()
    blob += model.feature_std.astype("<f8").tobytes()
    if model.kind == "linear":
        blob += model.weights.astype("<f8").tobytes()
        blob += struct.pack("<d", model.bias)
    else:
        blob += model.w1.astype("<f8").tobytes()
        blob += model.b1.astype("<f8").tobytes()
        blob += model.w2.astype("<f8").tobytes()
        blob += struct.pack("<d", model.b2)
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def load_regressor(path) -> Regressor:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:5] != MODEL_MAGIC:
        raise ValueError(
            f"bad model magic: expected {MODEL_MAGIC!r}, got {blob[:5]!r}")
    kind_code = blob[5]
    if kind_code not in _KIND_NAMES:
        raise ValueError(f"unknown model kind byte {kind_code}")
    radius, n, hidden = struct.unpack_from("<III", blob, 6)
    if n != feature_count(radius):
        raise ValueError("feature count inconsistent with radius")
    off = 6 + 12

    def take(count):
        nonlocal off
        end = off + 8 * count
        if end > len(blob):
            raise ValueError("model file truncated")
        arr = np.frombuffer(blob[off:end], dtype="<f8").astype(np.float64)
        off = end
        return arr

    mean = take(n)
    std = take(n)
    if kind_code == _KIND_CODES["linear"]:
        weights = take(n)
        bias = take(1)[0]
        model: Regressor = LinearModel(radius, mean, std, weights, bias)
    else:
        w1 = take(n * hidden).reshape(n, hidden)
        b1 = take(hidden)
        w2 = take(hidden)
        b2 = take(1)[0]
        model = Mlp1(radius, mean, std, hidden=hidden,
                     weights=(w1, b1, w2, float(b2)))
    if off != len(blob):
        raise ValueError("trailing bytes after model parameters")
    return model


class RangeRectifier(BaseEstimator):
    """sklearn-style estimator over range images.

    ``fit(X, y)`` takes aligned sequences of generated and ground-truth
    :class:`RangeImage` objects, ``predict`` returns the per-pixel radial
    magnitude grid for one image, and ``transform`` rectifies an image or
    a sequence of images.
    """

    def __init__(self, model: str = "mlp", loss: str = "welsch",
                 nu: float = 0.5, radius: int = 6, hidden: int = 16,
                 epochs: int = 6000, step: float | None = None,
                 step_decay: float = 0.9997, seed: int = 0,
                 max_pixels: int | None = 12000):
        self.model = model
        self.loss = loss
        self.nu = nu
        self.radius = radius
        self.hidden = hidden
        self.epochs = epochs
        self.step = step
        self.step_decay = step_decay
        self.seed = seed
        self.max_pixels = max_pixels

    def fit(self, X, y, reports=None):
        pairs = list(zip(X, y, strict=True))
        hyper = TrainConfig(radius=self.radius, hidden=self.hidden,
                            epochs=self.epochs, step=self.step,
                            step_decay=self.step_decay, seed=self.seed,
                            max_pixels_per_pair=self.max_pixels)
        self.regressor_, self.report_ = train_regressor(
            pairs, self.model, self.loss, WelschParams(self.nu), hyper,
            reports=reports)
        return self

    def _check_fitted(self):
        if not hasattr(self, "regressor_"):
            raise NotFittedError("fit must be called before prediction")

    def predict(self, image: RangeImage) -> np.ndarray:
        self._check_fitted()
        grid = extract_features(image, self.regressor_.radius)
        return self.regressor_.predict_grid(grid)

    def transform(self, X):
        self._check_fitted()
        if isinstance(X, RangeImage):
            return rectify(X, self.regressor_)[0]
        return [rectify(image, self.regressor_)[0] for image in X]

    def fit_transform(self, X, y, reports=None):
        return self.fit(X, y, reports=reports).transform(X)
