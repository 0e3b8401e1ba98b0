"""Bias-free linear-logistic trainers in scikit-learn estimator form.

Three estimators share the same hypothesis class (a weight vector over the
feature space, no intercept, labels in {-1, +1}):

* :class:`LinearLogisticClassifier` -- plain full-batch quasi-Newton fit.
* :class:`TwoStageProxyClassifier` -- fit clean, perturb once with the clean
  model's input gradients, refit on the perturbed data.
* :class:`AdversarialTrainingClassifier` -- regenerate the perturbation from
  the current weights every epoch and take a single optimizer step.

All fits start from zero weights and are deterministic given their inputs.
The generative model is antisymmetric in the label, so the optimal boundary
passes through the origin and an intercept would only add noise.
"""

from collections import deque

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .perturbation import ThreatModel, fgsm_features, sign_pm1
from .population import SampleBatch

__all__ = [
    "LinearLogisticClassifier",
    "TwoStageProxyClassifier",
    "AdversarialTrainingClassifier",
    "logistic_loss_grad",
    "fit_logistic",
    "two_stage_proxy",
    "adversarial_train",
    "evaluate",
]


def logistic_loss_grad(w, X, y):
    """Mean logistic loss and its gradient for a bias-free linear model."""
    margins = y * (X @ w)
    loss = np.mean(np.logaddexp(0.0, -margins))
    grad = -(X.T @ (y * expit(-margins))) / len(y)
    return loss, grad


def _validate_pm1_labels(y):
    labels = np.unique(y)
    if not np.all(np.isin(labels, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    if labels.size < 2:
        raise ValueError("training data must contain both classes")


def _lbfgs_fit(X, y, epochs, grad_tolerance):
    result = minimize(
        logistic_loss_grad,
        np.zeros(X.shape[1]),
        args=(X, y),
        jac=True,
        method="L-BFGS-B",
        options={
            "maxiter": int(epochs),
            "gtol": float(grad_tolerance),
            "ftol": 1e-16,
            "maxcor": 10,
            "maxls": 50,
        },
    )
    return result.x, int(result.nit)


class _LbfgsStepper:
    """One quasi-Newton step at a time, keeping curvature history across
    steps so the per-epoch adversarial loop still converges quickly."""

    def __init__(self, memory: int = 10, c1: float = 1e-4, max_backtracks: int = 30):
        self.memory = memory
        self.c1 = c1
        self.max_backtracks = max_backtracks
        self._pairs: deque = deque(maxlen=memory)

    def _direction(self, grad):
        q = grad.copy()
        alphas = []
        for s, y_vec, rho in reversed(self._pairs):
            a = rho * (s @ q)
            alphas.append(a)
            q -= a * y_vec
        if self._pairs:
            s, y_vec, _ = self._pairs[-1]
            q *= (s @ y_vec) / (y_vec @ y_vec)
        for (s, y_vec, rho), a in zip(self._pairs, reversed(alphas)):
            b = rho * (y_vec @ q)
            q += (a - b) * s
        return -q

    def step(self, loss_grad, w):
        f0, g0 = loss_grad(w)
        direction = self._direction(g0)
        slope = direction @ g0
        if slope >= 0.0:
            direction = -g0
            slope = direction @ g0
        alpha = 1.0
        for _ in range(self.max_backtracks):
            w_new = w + alpha * direction
            f_new, g_new = loss_grad(w_new)
            if f_new <= f0 + self.c1 * alpha * slope:
                break
            alpha *= 0.5
        step = w_new - w
        y_vec = g_new - g0
        curvature = step @ y_vec
        if curvature > 1e-10 * np.linalg.norm(step) * np.linalg.norm(y_vec):
            self._pairs.append((step, y_vec, 1.0 / curvature))
        return w_new, float(np.max(np.abs(g_new)))


class LinearLogisticClassifier(ClassifierMixin, BaseEstimator):
    """Full-batch L-BFGS logistic regression without an intercept.

    Parameters
    ----------
    epochs : optimizer iteration budget (one iteration per epoch).
    grad_tolerance : stop early once max|grad| falls below this.
    """

    def __init__(self, epochs: int = 10, grad_tolerance: float = 1e-8):
        self.epochs = epochs
        self.grad_tolerance = grad_tolerance

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        y = y.astype(np.float64)
        _validate_pm1_labels(y)
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        self.coef_, self.n_iter_ = _lbfgs_fit(X, y, self.epochs, self.grad_tolerance)
        self.classes_ = np.array([-1.0, 1.0])
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        return X @ self.coef_

    def predict(self, X):
        return sign_pm1(self.decision_function(X))


class TwoStageProxyClassifier(ClassifierMixin, BaseEstimator):
    """Two-stage surrogate for adversarial training: fit on clean data,
    perturb the training set once with that model, fit again.

    The clean-stage model is kept on ``clean_model_``; ``coef_`` belongs to
    the second-stage (proxy) model.
    """

    def __init__(self, eps: float = 0.01, threat: str = "linf",
                 epochs: int = 10, grad_tolerance: float = 1e-8):
        self.eps = eps
        self.threat = threat
        self.epochs = epochs
        self.grad_tolerance = grad_tolerance

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        y = y.astype(np.float64)
        threat = ThreatModel.coerce(self.threat)
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")
        stage = LinearLogisticClassifier(self.epochs, self.grad_tolerance)
        self.clean_model_ = stage.fit(X, y)
        X_adv = fgsm_features(self.clean_model_.coef_, X, y, self.eps, threat)
        proxy = LinearLogisticClassifier(self.epochs, self.grad_tolerance)
        self.proxy_model_ = proxy.fit(X_adv, y)
        self.coef_ = self.proxy_model_.coef_
        self.clean_coef_ = self.clean_model_.coef_
        self.classes_ = np.array([-1.0, 1.0])
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        return X @ self.coef_

    def predict(self, X):
        return sign_pm1(self.decision_function(X))


class AdversarialTrainingClassifier(ClassifierMixin, BaseEstimator):
    """Single-step adversarial training: every epoch rebuilds the perturbed
    batch from the current weights and takes one quasi-Newton step on it."""

    def __init__(self, eps: float = 0.01, threat: str = "linf",
                 epochs: int = 100, grad_tolerance: float = 1e-8):
        self.eps = eps
        self.threat = threat
        self.epochs = epochs
        self.grad_tolerance = grad_tolerance

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        y = y.astype(np.float64)
        _validate_pm1_labels(y)
        threat = ThreatModel.coerce(self.threat)
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        w = np.zeros(X.shape[1])
        stepper = _LbfgsStepper()
        epochs_run = 0
        for _ in range(int(self.epochs)):
            X_adv = fgsm_features(w, X, y, self.eps, threat)
            w, grad_norm = stepper.step(
                lambda v: logistic_loss_grad(v, X_adv, y), w
            )
            epochs_run += 1
            if grad_norm <= self.grad_tolerance:
                break
        self.coef_ = w
        self.n_iter_ = epochs_run
        self.classes_ = np.array([-1.0, 1.0])
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        return X @ self.coef_

    def predict(self, X):
        return sign_pm1(self.decision_function(X))


def fit_logistic(data: SampleBatch, epochs: int = 10,
                 grad_tolerance: float = 1e-8) -> LinearLogisticClassifier:
    """Fit the plain classifier on a sample batch."""
    return LinearLogisticClassifier(epochs, grad_tolerance).fit(data.z, data.y)


def two_stage_proxy(data: SampleBatch, eps: float, threat,
                    epochs: int = 10, grad_tolerance: float = 1e-8
                    ) -> tuple[LinearLogisticClassifier, LinearLogisticClassifier]:
    """Run the two-stage scheme on a batch; returns (clean, proxy) models."""
    est = TwoStageProxyClassifier(eps, threat, epochs, grad_tolerance)
    est.fit(data.z, data.y)
    return est.clean_model_, est.proxy_model_


def adversarial_train(data: SampleBatch, eps: float, threat,
                      epochs: int = 100, grad_tolerance: float = 1e-8
                      ) -> AdversarialTrainingClassifier:
    """Run per-epoch adversarial training on a batch."""
    est = AdversarialTrainingClassifier(eps, threat, epochs, grad_tolerance)
    return est.fit(data.z, data.y)


def evaluate(model, testset: SampleBatch) -> tuple[float, dict]:
    """Overall and per-group accuracy of a linear model on a batch.

    ``model`` may be an estimator exposing ``coef_`` or a raw weight vector.
    Zero scores count as +1 predictions.
    """
    if len(testset) == 0:
        raise ValueError("testset must be nonempty")
    w = np.asarray(getattr(model, "coef_", model), dtype=float).ravel()
    pred = sign_pm1(testset.z @ w)
    correct = pred == testset.y
    per_group = {
        group: float(np.mean(correct[mask])) for group, mask in testset.iter_groups()
    }
    return float(np.mean(correct)), per_group
