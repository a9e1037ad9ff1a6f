"""Linear soft-margin SVM, precision/recall and k-fold cross-validation.

The primal problem is

    minimize   1/2 |pi|^2 + (C/s) sum_i a_i
    subject to h_i (pi . q_i - pi0) >= 1 - a_i,  a_i >= 0

and is solved with a Mehrotra predictor-corrector interior-point method. Each
Newton step reduces to a (d+1) x (d+1) system, so a fit costs O(s d^2) per
iteration. There is no randomness; the best primal iterate is returned and its
intercept is refined exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

IPM_GAP_TOL = 1e-10  # relative complementarity gap
IPM_MAX_ITER = 100


@dataclass(frozen=True, eq=False)
class SvmModel:
    """Hyperplane in standardized feature space; ``classify`` handles the scaling."""

    weights: np.ndarray
    intercept: float
    mean: np.ndarray
    scale: np.ndarray
    constant: int | None = None  # set for the majority-label fallback classifier

    def __post_init__(self):
        for name in ("weights", "mean", "scale"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "intercept", float(self.intercept))
        if not (np.all(np.isfinite(self.weights)) and np.isfinite(self.intercept)):
            raise ValueError("SVM weights must be finite")

    def transform(self, features) -> np.ndarray:
        return (np.asarray(features, dtype=float) - self.mean) / self.scale

    def decision(self, features) -> np.ndarray:
        return self.transform(features) @ self.weights - self.intercept

    def classify(self, features) -> np.ndarray:
        """Labels in {-1, 1} (an int for a single vector); the hyperplane itself counts as 1."""
        q = np.atleast_2d(np.asarray(features, dtype=float))
        if self.constant is not None:
            out = np.full(q.shape[0], self.constant)
        else:
            out = np.where(self.decision(q) >= 0.0, 1, -1)
        return out if np.ndim(features) > 1 else int(out[0])

    @classmethod
    def majority(cls, labels, n_features: int) -> "SvmModel":
        labels = np.asarray(labels)
        label = 1 if np.sum(labels == 1) > np.sum(labels == -1) else -1
        return cls(np.zeros(n_features), 0.0, np.zeros(n_features), np.ones(n_features), constant=label)

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "intercept": self.intercept, "mean": self.mean.tolist(),
                "scale": self.scale.tolist(), "constant": self.constant}

    @classmethod
    def from_dict(cls, d) -> "SvmModel":
        return cls(d["weights"], d["intercept"], d["mean"], d["scale"], d.get("constant"))


def _check_labels(labels) -> np.ndarray:
    h = np.asarray(labels)
    if h.ndim != 1 or not np.all(np.isin(h, (-1, 1))):
        raise ValueError("labels must be a vector over {-1, 1}")
    return h.astype(float)


def svm_objective(weights, intercept: float, features, labels, C: float) -> float:
    """Primal soft-margin objective with slacks at their optimal values."""
    X = np.asarray(features, dtype=float)
    h = _check_labels(labels)
    w = np.asarray(weights, dtype=float)
    slack = np.maximum(0.0, 1.0 - h * (X @ w - intercept))
    return 0.5 * float(w @ w) + C / len(h) * float(slack.sum())


def model_objective(model: SvmModel, features, labels, C: float) -> float:
    """Objective of a fitted model, evaluated in its own (standardized) space."""
    return svm_objective(model.weights, model.intercept, model.transform(features), labels, C)


def _best_intercept(margins: np.ndarray, h: np.ndarray, current: float) -> float:
    """Exact minimizer of the hinge sum over the intercept, for fixed weights."""
    candidates = np.concatenate([[current], margins - h])
    losses = np.maximum(0.0, 1.0 - h[None, :] * (margins[None, :] - candidates[:, None])).sum(axis=1)
    return float(candidates[int(np.argmin(losses))])


def _ipm(Z: np.ndarray, h: np.ndarray, C: float, gap_tol: float = IPM_GAP_TOL,
         max_iter: int = IPM_MAX_ITER) -> tuple[np.ndarray, float]:
    """Primal-dual interior point on the primal QP; returns ``(pi, pi0)``.

    Rows ``A u + a - 1 = r`` with ``u = (pi, pi0)``, slacks ``r, a >= 0`` and
    multipliers ``lam, mu``. The iterate with the lowest primal objective (slacks
    at their optimal values) is kept, which guards against late round-off drift.
    """
    n, d = Z.shape
    c = C / n
    A = h[:, None] * np.hstack([Z, -np.ones((n, 1))])
    P = np.r_[np.ones(d), 0.0]
    u = np.zeros(d + 1)
    a, r = np.full(n, 2.0), np.ones(n)
    lam, mu = np.full(n, c / 2), np.full(n, c / 2)

    def objective(v):
        return 0.5 * float(v[:d] @ v[:d]) + c * float(np.maximum(0.0, 1.0 - A @ v).sum())

    def room(v, dv):
        neg = dv < 0
        return float(np.min(-v[neg] / dv[neg])) if neg.any() else np.inf

    best_u, best = u.copy(), objective(u)
    with np.errstate(all="ignore"):
        for _ in range(max_iter):
            r1 = P * u - A.T @ lam
            r2 = c - lam - mu
            r3 = A @ u + a - 1.0 - r
            tau = (r @ lam + a @ mu) / (2 * n)

            def direction(r4, r5):
                D = 1.0 + r * mu / (lam * a)
                q = -r3 - r4 / lam - (r / lam) * (r2 + r5 / a)
                E = mu / (a * D)
                g = r2 + r5 / a + mu * q / (a * D)
                du = np.linalg.solve(np.diag(P) + A.T @ (E[:, None] * A), -r1 + A.T @ g)
                Adu = A @ du
                da = (q - Adu) / D
                dl = g - E * Adu
                return du, da, (-r4 - r * dl) / lam, dl, (-r5 - mu * da) / a

            try:
                p_du, p_da, p_dr, p_dl, p_dm = direction(r * lam, a * mu)
                t = min(1.0, room(r, p_dr), room(a, p_da), room(lam, p_dl), room(mu, p_dm))
                tau_aff = ((r + t * p_dr) @ (lam + t * p_dl) + (a + t * p_da) @ (mu + t * p_dm)) / (2 * n)
                sigma = (tau_aff / tau) ** 3
                du, da, dr, dl, dm = direction(r * lam + p_dr * p_dl - sigma * tau, a * mu + p_da * p_dm - sigma * tau)
            except np.linalg.LinAlgError:
                break
            t = min(1.0, 0.99 * min(room(r, dr), room(a, da), room(lam, dl), room(mu, dm)))
            u, a, r, lam, mu = u + t * du, a + t * da, r + t * dr, lam + t * dl, mu + t * dm
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(lam))):
                break
            f = objective(u)
            if f < best:
                best_u, best = u.copy(), f
            if r @ lam + a @ mu <= gap_tol * max(best, 1e-300) and np.abs(r2).max() <= 1e-9 * c:
                break
    return best_u[:d], float(best_u[d])


def svm_train(features, labels, C: float = 1.0, standardize: bool = True) -> SvmModel:
    """Fit a linear soft-margin SVM; needs at least one example of each label."""
    X = np.asarray(features, dtype=float)
    h = _check_labels(labels)
    if X.ndim != 2 or X.shape[0] != len(h):
        raise ValueError("features must be an (s, d) matrix matching the labels")
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    if not (h > 0).any() or not (h < 0).any():
        raise ValueError("degenerate single-class input")
    if not C > 0:
        raise ValueError("C must be positive")
    if standardize:
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale = np.where(scale > 1e-12, scale, 1.0)
    else:
        mean = np.zeros(X.shape[1])
        scale = np.ones(X.shape[1])
    Z = (X - mean) / scale
    w, pi0 = _ipm(Z, h, C)
    pi0 = _best_intercept(Z @ w, h, pi0)
    return SvmModel(w, pi0, mean, scale)


def precision_recall(predicted, actual) -> tuple[float, float]:
    """Precision and recall of the positive label.

    An empty denominator gives 1 when the other positive set is empty too, else 0.
    """
    p = np.asarray(predicted)
    a = np.asarray(actual)
    if p.shape != a.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {a.shape}")
    pred_pos = p == 1
    act_pos = a == 1
    hits = int(np.sum(pred_pos & act_pos))
    n_pred, n_act = int(pred_pos.sum()), int(act_pos.sum())
    precision = hits / n_pred if n_pred else (1.0 if n_act == 0 else 0.0)
    recall = hits / n_act if n_act else (1.0 if n_pred == 0 else 0.0)
    return precision, recall


def fit_or_majority(features, labels, C: float = 1.0, standardize: bool = True) -> SvmModel:
    X = np.asarray(features, dtype=float)
    h = np.asarray(labels)
    if np.all(h == h[0]):
        return SvmModel.majority(h, X.shape[1])
    return svm_train(X, h, C, standardize)


def kfold_predictions(features, labels, k_cv: int, C: float = 1.0, standardize: bool = True) -> np.ndarray:
    """Out-of-fold predictions over contiguous folds; the remainder rows are dropped."""
    X = np.asarray(features, dtype=float)
    h = np.asarray(labels)
    if not 1 < k_cv <= len(h):
        raise ValueError(f"need 2 <= k_cv <= {len(h)}, got {k_cv}")
    size = len(h) // k_cv
    used = size * k_cv
    out = np.empty(used, dtype=int)
    for f in range(k_cv):
        test = np.arange(f * size, (f + 1) * size)
        train = np.setdiff1d(np.arange(used), test)
        model = fit_or_majority(X[train], h[train], C, standardize)
        out[test] = model.classify(X[test])
    return out


def kfold_evaluate(features, labels, k_cv: int = 5, C: float = 1.0, standardize: bool = True) -> tuple[float, float]:
    """Pooled cross-validated (precision, recall) over ``k_cv`` contiguous folds."""
    pred = kfold_predictions(features, labels, k_cv, C, standardize)
    return precision_recall(pred, np.asarray(labels)[: len(pred)])
