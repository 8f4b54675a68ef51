import numpy as np
import torch

from commons.exceptions import DegenerateInputError, ShapeError


def paired_sequences(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape or x.shape[0] < 2:
        raise ShapeError(
            f"Expected two equal-length sequences of at least 2 values, got {x.shape} and {y.shape}."
        )
    return x, y


def ccc(x, y):
    """Concordance correlation coefficient with population (1/n) moments."""
    x, y = paired_sequences(x, y)
    var_x, var_y = x.var(), y.var()
    if var_x == 0 or var_y == 0:
        raise DegenerateInputError("CCC is undefined for a constant sequence.")
    covariance = np.mean((x - x.mean()) * (y - y.mean()))
    return float(2.0 * covariance / (var_x + var_y + (x.mean() - y.mean()) ** 2))


def ccc_per_axis(pred, target):
    """Differentiable CCC of each column of (B, k) predictions against targets."""
    pred_mean = pred.mean(dim=0)
    target_mean = target.mean(dim=0)
    pred_var = pred.var(dim=0, correction=0)
    target_var = target.var(dim=0, correction=0)
    covariance = ((pred - pred_mean) * (target - target_mean)).mean(dim=0)
    return 2.0 * covariance / (pred_var + target_var + (pred_mean - target_mean) ** 2)


def ccc_loss(pred, target):
    """1 - mean CCC over the valence and arousal columns."""
    if torch.any(target.var(dim=0, correction=0) == 0):
        raise DegenerateInputError("CCC loss needs targets that vary on every axis.")
    return 1.0 - ccc_per_axis(pred, target).mean()
