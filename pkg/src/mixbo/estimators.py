"""scikit-learn style front ends.

:class:`GPRegressor` is a regular regressor (``fit`` / ``predict``).
:class:`BayesianOptimizer` follows the estimator conventions for its
parameters but, being an optimiser rather than a model, exposes
``ask`` / ``tell`` / ``maximize`` instead of ``fit`` / ``predict``.
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from .gp import fit as gp_fit
from .hyper import hyperparameter_bounds, maximize_mll
from .kernels import KernelSpec, ParamLayout, default_hyperparams
from .orchestrator import EvalResult, RunOptions, SimulatedWorkers, init_run, next_query, receive_result, run


class GPRegressor(RegressorMixin, BaseEstimator):
    """Exact GP regression with an ARD SE or Matern-2.5 kernel.

    Inputs are rescaled to the unit box seen during ``fit``.  With
    ``optimize=True`` the hyperparameters maximise the marginal likelihood.

    Parameters
    ----------
    kernel : {"matern25", "se"}
    noise : float or None
        Fixed noise variance; None lets ``optimize`` choose it.
    optimize : bool
    n_restarts : int
        Extra random starts of the likelihood optimiser.
    random_state : int or None
    """

    def __init__(self, kernel="matern25", noise=None, optimize=True, n_restarts=2, random_state=None):
        self.kernel = kernel
        self.noise = noise
        self.optimize = optimize
        self.n_restarts = n_restarts
        self.random_state = random_state

    def _scale(self, X):
        return (X - self.x_min_) / self.x_span_

    def fit(self, X, y):
        X, y = validate_data(self, X, y, y_numeric=True)
        self.x_min_ = X.min(0)
        span = X.max(0) - self.x_min_
        self.x_span_ = np.where(span > 0, span, 1.0)
        U = self._scale(X)
        spec = KernelSpec(continuous=tuple(range(X.shape[1])), base=self.kernel)
        if self.optimize:
            rng = np.random.default_rng(self.random_state)
            bounds = None
            if self.noise is not None:
                lo, hi = hyperparameter_bounds(spec, y)
                lo[1] = hi[1] = np.log(max(self.noise, 1e-300))
                bounds = (lo, hi)
            res = maximize_mll(spec, U, y, bounds=bounds, rng=rng, n_starts=self.n_restarts)
            hp = res.hp
        else:
            hp = default_hyperparams(spec, noise=1e-6 if self.noise is None else self.noise)
            v = float(np.var(y)) if len(y) > 1 else 1.0
            layout = ParamLayout(spec)
            theta = layout.to_vector(hp)
            theta[0] = np.log(max(v, 1e-12))
            hp = layout.from_vector(theta)
        self.spec_ = spec
        self.hyperparams_ = hp
        self.model_ = gp_fit(spec, hp, U, y, mean="empirical")
        self.log_marginal_likelihood_ = self.model_.log_marginal_likelihood()
        return self

    def predict(self, X, return_std=False):
        check_is_fitted(self, "model_")
        X = validate_data(self, X, reset=False)
        mu, sd = self.model_.predict(self._scale(X))
        return (mu, sd) if return_std else mu


class BayesianOptimizer(BaseEstimator):
    """Ask/tell interface around the asynchronous optimisation loop.

    Parameters
    ----------
    domain : Domain
    budget : float
        Evaluations (or cost units when ``fidelity`` is given).
    fidelity : FidelitySpace or None
    workers : int
    acquisitions : tuple of str or None
    random_state : int or None
    """

    def __init__(self, domain=None, budget=100, fidelity=None, workers=1, acquisitions=None,
                 random_state=None):
        self.domain = domain
        self.budget = budget
        self.fidelity = fidelity
        self.workers = workers
        self.acquisitions = acquisitions
        self.random_state = random_state

    def _options(self):
        return RunOptions(budget=self.budget, workers=self.workers, acquisitions=self.acquisitions)

    def _ensure_state(self):
        if getattr(self, "state_", None) is None:
            if self.domain is None:
                raise ValueError("a domain is required")
            self.state_ = init_run(self.domain, self.fidelity, self._options(), seed=self.random_state)
        return self.state_

    def ask(self):
        """Next :class:`Query` to evaluate."""
        return next_query(self._ensure_state())

    def tell(self, query, y, wall_time=0.0):
        """Report the value observed for ``query``."""
        receive_result(self._ensure_state(), EvalResult(query, float(y), wall_time))
        return self

    def maximize(self, objective):
        """Run the full loop on ``objective`` with simulated workers and return the report."""
        state = self._ensure_state()
        report = run(state, SimulatedWorkers(objective, self.workers))
        self.best_x_ = report.best_x
        self.best_y_ = report.best_y
        self.report_ = report
        return report
