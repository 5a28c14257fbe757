"""Synthetic multivariate-Gaussian engine for verifying the method's math.

Under a joint Gaussian over (features, sensitive, target), every conditional
mean is linear, so the population regression coefficients follow from moment
algebra alone. That gives machine-precision targets for the coefficient
identity linking the sensitive-aware and sensitive-blind predictors, a closed
form for how much debiasing reduces the prediction/sensitive correlation, and
seeded Monte Carlo checks for the total-expectation and correlation-reduction
claims, with tolerances that shrink as 1/sqrt(n).

Coordinate convention: a spec's mean/covariance are ordered
(feature_1 .. feature_p, sensitive, target).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._validation import as_float_matrix
from .data import Dataset, Role
from .debias import TowerDebias
from .exceptions import DegenerateSpecError, NumericalError
from .metrics import pearson
from .models import LinearModel

__all__ = [
    "GaussianSpec", "PopulationCoefficients", "CorrelationReduction",
    "population_coefficients", "correlation_reduction_closed_form",
    "sample_matrix", "sample_dataset", "random_spec", "build_spec", "preset_spec",
    "verify_tower", "residualize", "residualize_dataset",
    "verify_correlation_inequality", "run_inequality_trials",
]


@dataclass(frozen=True, eq=False)
class GaussianSpec:
    """Mean and covariance of (features..., sensitive, target).

    The covariance must be symmetric to 1e-12 and positive definite (checked
    by Cholesky at construction).
    """

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.covariance, dtype=np.float64)
        if mean.ndim != 1 or cov.shape != (len(mean), len(mean)):
            raise ValueError("mean must be length m and covariance m x m")
        if len(mean) < 2:
            raise ValueError("spec needs at least (sensitive, target) coordinates")
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12):
            raise ValueError("covariance must be symmetric within 1e-12")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise NumericalError("covariance is not positive definite") from None
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "_cholesky", chol)

    @property
    def p(self) -> int:
        """Number of feature coordinates."""
        return len(self.mean) - 2

    # index helpers
    @property
    def _f(self) -> slice:
        return slice(0, self.p)

    @property
    def _s(self) -> int:
        return self.p

    @property
    def _y(self) -> int:
        return self.p + 1

    @property
    def sensitive_variance(self) -> float:
        return float(self.covariance[self._s, self._s])

    @property
    def feature_covariance(self) -> np.ndarray:
        return self.covariance[self._f, self._f]

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "covariance": self.covariance.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "GaussianSpec":
        return cls(mean=np.asarray(doc["mean"], dtype=np.float64),
                   covariance=np.asarray(doc["covariance"], dtype=np.float64))


def random_spec(p: int, seed) -> GaussianSpec:
    """Seeded random spec with covariance A.T @ A + 0.1 I (A standard normal), mean 0."""
    rng = np.random.default_rng(seed)
    m = p + 2
    a = rng.standard_normal((m, m))
    return GaussianSpec(mean=np.zeros(m), covariance=a.T @ a + 0.1 * np.eye(m))


def build_spec(feature_cov, target_slopes, sensitive_effect: float,
               confound_slopes, sensitive_noise_var: float,
               target_noise_var: float) -> GaussianSpec:
    """Spec from a structural model, all means zero.

    features ~ N(0, feature_cov); sensitive = features @ confound_slopes + eps;
    target = features @ target_slopes + sensitive_effect * sensitive + noise.
    """
    fc = as_float_matrix(feature_cov, "feature_cov")
    b = np.asarray(target_slopes, dtype=np.float64)
    g = np.asarray(confound_slopes, dtype=np.float64)
    p = fc.shape[0]
    if b.shape != (p,) or g.shape != (p,):
        raise ValueError("slope vectors must match the feature dimension")
    cov = np.zeros((p + 2, p + 2))
    cov[:p, :p] = fc
    cov_fs = fc @ g
    var_s = float(g @ fc @ g) + sensitive_noise_var
    total = b + sensitive_effect * g  # slopes of target on features after substitution
    cov_fy = fc @ total
    cov_sy = float(g @ fc @ total) + sensitive_effect * sensitive_noise_var
    var_y = float(total @ fc @ total) + sensitive_effect**2 * sensitive_noise_var + target_noise_var
    cov[:p, p] = cov_fs
    cov[p, :p] = cov_fs
    cov[:p, p + 1] = cov_fy
    cov[p + 1, :p] = cov_fy
    cov[p, p] = var_s
    cov[p, p + 1] = cov_sy
    cov[p + 1, p] = cov_sy
    cov[p + 1, p + 1] = var_y
    return GaussianSpec(mean=np.zeros(p + 2), covariance=cov)


_PRESETS = {
    # Strong sensitive effect with a mild feature confound: debiasing should
    # cut the prediction/sensitive correlation by well over half while the
    # target noise keeps the accuracy cost small.
    "strong": lambda: build_spec(
        feature_cov=np.eye(2),
        target_slopes=np.array([1.0, 1.0]),
        sensitive_effect=1.0,
        confound_slopes=np.array([0.3, 0.0]),
        sensitive_noise_var=0.91,
        target_noise_var=8.0,
    ),
    # Sensitive attribute unrelated to features and target.
    "independent": lambda: build_spec(
        feature_cov=np.eye(2),
        target_slopes=np.array([1.0, 0.5]),
        sensitive_effect=0.0,
        confound_slopes=np.array([0.0, 0.0]),
        sensitive_noise_var=1.0,
        target_noise_var=1.0,
    ),
}


def preset_spec(name: str) -> GaussianSpec:
    """Named shipped spec; see :data:`PRESET_NAMES`."""
    try:
        return _PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; available: {sorted(_PRESETS)}") from None


PRESET_NAMES = tuple(sorted(_PRESETS))


@dataclass(frozen=True, eq=False)
class PopulationCoefficients:
    """Population regression coefficients implied by a Gaussian spec.

    All coefficient vectors carry the intercept first. ``joint_*`` comes from
    regressing the target on (features, sensitive); ``marginal_coefs`` from
    the target on features alone; ``sensitive_coefs`` from the sensitive
    variable on features. The tower identity
    ``marginal = joint_feature + joint_sensitive * sensitive_coefs`` holds at
    population level.
    """

    joint_feature_coefs: np.ndarray   # length p + 1
    joint_sensitive_coef: float
    marginal_coefs: np.ndarray        # length p + 1
    sensitive_coefs: np.ndarray       # length p + 1
    sensitive_residual_var: float

    def identity_gap(self) -> float:
        """Max absolute violation of marginal = joint + a * sensitive_coefs."""
        implied = self.joint_feature_coefs + self.joint_sensitive_coef * self.sensitive_coefs
        return float(np.max(np.abs(self.marginal_coefs - implied)))

    def to_dict(self) -> dict:
        return {
            "joint_feature_coefs": self.joint_feature_coefs.tolist(),
            "joint_sensitive_coef": self.joint_sensitive_coef,
            "marginal_coefs": self.marginal_coefs.tolist(),
            "sensitive_coefs": self.sensitive_coefs.tolist(),
            "sensitive_residual_var": self.sensitive_residual_var,
        }


def _regress(cov: np.ndarray, mean: np.ndarray, on: list[int], target: int) -> np.ndarray:
    """Population regression of coordinate ``target`` on coordinates ``on``.

    Returns (intercept, slopes...). Empty ``on`` gives just the mean.
    """
    if not on:
        return np.array([mean[target]])
    sub = cov[np.ix_(on, on)]
    rhs = cov[on, target]
    try:
        slopes = np.linalg.solve(sub, rhs)
    except np.linalg.LinAlgError:
        raise NumericalError("singular sub-covariance in population regression") from None
    intercept = mean[target] - slopes @ mean[on]
    return np.concatenate([[intercept], slopes])


def population_coefficients(spec: GaussianSpec) -> PopulationCoefficients:
    """Exact population coefficients from the spec's moments (no sampling)."""
    p = spec.p
    f = list(range(p))
    s, y = spec._s, spec._y
    joint = _regress(spec.covariance, spec.mean, f + [s], y)
    marginal = _regress(spec.covariance, spec.mean, f, y)
    sens = _regress(spec.covariance, spec.mean, f, s)
    if p:
        explained = spec.covariance[f, s] @ np.linalg.solve(spec.feature_covariance,
                                                            spec.covariance[f, s])
    else:
        explained = 0.0
    return PopulationCoefficients(
        joint_feature_coefs=np.concatenate([[joint[0]], joint[1:p + 1]]),
        joint_sensitive_coef=float(joint[p + 1]),
        marginal_coefs=marginal,
        sensitive_coefs=sens,
        sensitive_residual_var=float(spec.sensitive_variance - explained),
    )


@dataclass(frozen=True)
class CorrelationReduction:
    """Population correlations of each predictor with the sensitive variable."""

    baseline: float   # corr(sensitive-aware predictor, sensitive)
    debiased: float   # corr(sensitive-blind predictor, sensitive)

    @property
    def reduction(self) -> float:
        return self.baseline - self.debiased

    def to_dict(self) -> dict:
        return {"baseline": self.baseline, "debiased": self.debiased,
                "reduction": self.reduction}


def correlation_reduction_closed_form(coeffs: PopulationCoefficients,
                                      spec: GaussianSpec) -> CorrelationReduction:
    """Closed-form corr(predictor, sensitive) for both predictors.

    With b, a the joint coefficients, d the marginal ones, g the
    sensitive-on-features slopes, C the feature covariance and v the sensitive
    variance (intercepts drop out of all covariances):

        baseline = (b'Cg + a v) / (sqrt(b'Cb + a^2 v + 2a b'Cg) sqrt(v))
        debiased = d'Cg / (sqrt(d'Cd) sqrt(v))
    """
    C = spec.feature_covariance
    v = spec.sensitive_variance
    b = coeffs.joint_feature_coefs[1:]
    a = coeffs.joint_sensitive_coef
    d = coeffs.marginal_coefs[1:]
    g = coeffs.sensitive_coefs[1:]

    bCg = float(b @ C @ g) if spec.p else 0.0
    var_baseline = (float(b @ C @ b) if spec.p else 0.0) + a * a * v + 2.0 * a * bCg
    var_debiased = float(d @ C @ d) if spec.p else 0.0
    if v <= 0 or var_baseline <= 0 or var_debiased <= 0:
        raise DegenerateSpecError(
            "zero-variance denominator: both predictors and the sensitive "
            "variable must have positive variance"
        )
    rho_baseline = (bCg + a * v) / (np.sqrt(var_baseline) * np.sqrt(v))
    rho_debiased = float(d @ C @ g) / (np.sqrt(var_debiased) * np.sqrt(v))
    return CorrelationReduction(
        baseline=float(np.clip(rho_baseline, -1.0, 1.0)),
        debiased=float(np.clip(rho_debiased, -1.0, 1.0)),
    )


def sample_matrix(spec: GaussianSpec, n: int, seed) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """n iid draws via the spec's Cholesky factor: (features, sensitive, target)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, len(spec.mean)))
    draws = spec.mean + z @ spec._cholesky.T
    return draws[:, spec._f], draws[:, spec._s], draws[:, spec._y]


def sample_dataset(spec: GaussianSpec, n: int, seed) -> Dataset:
    """Sampled rows as a Dataset: features x1..xp, sensitive s, target y."""
    if spec.p < 1:
        raise ValueError("sample_dataset needs at least one feature coordinate")
    features, sensitive, target = sample_matrix(spec, n, seed)
    names = tuple(f"x{j + 1}" for j in range(spec.p)) + ("s", "y")
    roles = (Role.FEATURE,) * spec.p + (Role.SENSITIVE, Role.TARGET)
    values = np.column_stack([features, sensitive, target])
    return Dataset(names=names, roles=roles, values=values,
                   row_ids=np.arange(n, dtype=np.int64))


@dataclass(frozen=True)
class TowerCheckReport:
    """Sampled evidence that averaging the finer predictor recovers the coarser one."""

    n: int
    mean_target: float
    mean_baseline_fit: float
    mean_debiased_fit: float
    mean_gap: float                 # largest pairwise gap among the three means
    mean_tolerance: float           # 15 sd(target) / sqrt(n)
    projection_gap: float           # coefs of (baseline fit ~ features) vs marginal fit
    projection_tolerance: float
    coef_gap: float                 # sampled marginal coefs vs population values
    coef_tolerance: float
    passed: bool

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "n", "mean_target", "mean_baseline_fit", "mean_debiased_fit",
            "mean_gap", "mean_tolerance", "projection_gap",
            "projection_tolerance", "coef_gap", "coef_tolerance", "passed")}


def verify_tower(spec: GaussianSpec, n: int, seed) -> TowerCheckReport:
    """Fit both predictors on a sample and check the averaging relationships.

    Three checks: (i) the sample means of target, sensitive-aware fits and
    sensitive-blind fits agree (total expectation; exact for intercept models,
    tolerance is CLT-scaled anyway); (ii) regressing the sensitive-aware
    fitted values on the features reproduces the sensitive-blind coefficients
    (exact linear algebra, small absolute tolerance); (iii) the sampled
    sensitive-blind coefficients approach their population values at 6
    standard errors.
    """
    features, sensitive, target = sample_matrix(spec, n, seed)
    joint_design = np.column_stack([features, sensitive])
    baseline_model = LinearModel(ridge_epsilon=0.0).fit(joint_design, target)
    debiased_model = LinearModel(ridge_epsilon=0.0).fit(features, target)
    baseline_fit = baseline_model.predict(joint_design)
    debiased_fit = debiased_model.predict(features)

    means = np.array([target.mean(), baseline_fit.mean(), debiased_fit.mean()])
    mean_gap = float(means.max() - means.min())
    mean_tol = 15.0 * float(target.std(ddof=1)) / np.sqrt(n)

    projected = LinearModel(ridge_epsilon=0.0).fit(features, baseline_fit)
    sampled_marginal = np.concatenate([[debiased_model.intercept_], debiased_model.coef_])
    projected_coefs = np.concatenate([[projected.intercept_], projected.coef_])
    projection_gap = float(np.max(np.abs(projected_coefs - sampled_marginal)))
    scale = max(1.0, float(np.max(np.abs(sampled_marginal))))
    projection_tol = 1e-8 * scale

    pop = population_coefficients(spec)
    coef_gap = float(np.max(np.abs(sampled_marginal - pop.marginal_coefs)))
    design = np.hstack([np.ones((n, 1)), features])
    resid = target - debiased_fit
    resid_var = float(resid @ resid) / max(n - design.shape[1], 1)
    gram_inv = np.linalg.inv(design.T @ design)
    ses = np.sqrt(resid_var * np.diag(gram_inv))
    coef_tol = float(6.0 * np.max(ses)) if ses.size else 0.0

    passed = (mean_gap <= mean_tol and projection_gap <= projection_tol
              and coef_gap <= coef_tol)
    return TowerCheckReport(
        n=n, mean_target=float(means[0]), mean_baseline_fit=float(means[1]),
        mean_debiased_fit=float(means[2]), mean_gap=mean_gap, mean_tolerance=mean_tol,
        projection_gap=projection_gap, projection_tolerance=projection_tol,
        coef_gap=coef_gap, coef_tolerance=coef_tol, passed=passed,
    )


def residualize(features, sensitive) -> tuple[np.ndarray, np.ndarray]:
    """Replace features by their OLS residuals on the sensitive columns.

    Both sides are centered (the regression includes an intercept), so the
    returned residuals have zero mean and are exactly uncorrelated with every
    sensitive column. Returns (residuals, slope matrix of shape
    (n_sensitive, n_features)).
    """
    X = as_float_matrix(features, "features")
    S = as_float_matrix(sensitive, "sensitive")
    if X.shape[0] != S.shape[0]:
        raise ValueError("features and sensitive must have equal row counts")
    if X.shape[0] < 2:
        raise ValueError("residualize needs at least 2 rows")
    Sc = S - S.mean(axis=0)
    if not Sc.any():
        raise NumericalError("sensitive columns are all constant; nothing to regress on")
    Xc = X - X.mean(axis=0)
    slopes, *_ = np.linalg.lstsq(Sc, Xc, rcond=None)
    return Xc - Sc @ slopes, slopes


def residualize_dataset(ds: Dataset) -> Dataset:
    """Dataset with every feature column replaced by its residual on the sensitive columns."""
    resid, _ = residualize(ds.features(), ds.sensitive())
    values = ds.values.copy()
    for j, name in enumerate(ds.feature_names):
        values[:, ds.names.index(name)] = resid[:, j]
    return Dataset(names=ds.names, roles=ds.roles, values=values,
                   row_ids=ds.row_ids.copy(), encoding_map=ds.encoding_map,
                   target_levels=ds.target_levels)


@dataclass(frozen=True)
class InequalityReport:
    """One sampled check that debiasing does not raise |corr(prediction, sensitive)|."""

    n: int
    k: int
    baseline_abs_corr: float
    debiased_abs_corr: float
    slack: float                      # 3 / sqrt(n)
    holds: bool
    baseline_fit_variance: float
    debiased_variance: float
    debiased_variance_le_baseline: bool

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in (
            "n", "k", "baseline_abs_corr", "debiased_abs_corr", "slack", "holds",
            "baseline_fit_variance", "debiased_variance",
            "debiased_variance_le_baseline")}


def verify_correlation_inequality(spec: GaussianSpec, n: int, k: int, seed) -> InequalityReport:
    """Sample, fit the sensitive-aware linear predictor, debias it, compare correlations.

    Asserts |corr(debiased, sensitive)| <= |corr(baseline, sensitive)| + 3/sqrt(n).
    The variance ordering of the two prediction sets is reported, not asserted:
    projection arguments fix its population direction, but sampled fits only
    approach it.
    """
    features, sensitive, target = sample_matrix(spec, n, seed)
    joint_design = np.column_stack([features, sensitive])
    baseline_model = LinearModel(ridge_epsilon=0.0).fit(joint_design, target)
    baseline_fit = baseline_model.predict(joint_design)
    debiased = TowerDebias(k=k).fit(features, baseline_fit).predict(features)

    rho_base = pearson(baseline_fit, sensitive)
    rho_deb = pearson(debiased, sensitive)
    abs_base = abs(rho_base) if rho_base is not None else 0.0
    abs_deb = abs(rho_deb) if rho_deb is not None else 0.0
    slack = 3.0 / np.sqrt(n)
    var_base = float(baseline_fit.var(ddof=1))
    var_deb = float(debiased.var(ddof=1))
    return InequalityReport(
        n=n, k=k, baseline_abs_corr=abs_base, debiased_abs_corr=abs_deb,
        slack=float(slack), holds=bool(abs_deb <= abs_base + slack),
        baseline_fit_variance=var_base, debiased_variance=var_deb,
        debiased_variance_le_baseline=bool(var_deb <= var_base),
    )


def run_inequality_trials(trials: int, n: int, k: int, base_seed: int,
                          p_values=(1, 2, 5), threads: int | None = None) -> list[InequalityReport]:
    """Independent seeded trials of the correlation inequality, one spec each.

    Trial t uses the random spec seeded ``base_seed + t`` with feature
    dimension cycling through ``p_values``, and samples with the same derived
    seed. Trials run concurrently; results are in trial order.
    """
    def one(t: int) -> InequalityReport:
        seed = base_seed + t
        spec = random_spec(p_values[t % len(p_values)], seed)
        return verify_correlation_inequality(spec, n=n, k=k, seed=seed)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, range(trials)))
