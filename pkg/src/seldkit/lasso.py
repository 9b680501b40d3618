"""Sparse logistic detectors: weighting, path fitting, cross-validation.

One-vs-all detectors are weighted logistic regressions with an L1
penalty, fitted over a descending lambda path by cyclic coordinate
descent with soft-thresholding.  At each path point the weighted
negative log-likelihood is repeatedly replaced by its local quadratic
model (curvatures p * (1 - p) at the current fit); cyclic
soft-threshold passes minimize the model with incrementally maintained
residuals, and the resulting step is kept only if the true penalized
loss does not increase.  A rejected step falls back to a single pass
under the global logistic curvature bound 1/4, whose per-coordinate
update

    beta_j <- S(beta_j / 4 - g_j, lambda) * 4

(S the soft-threshold operator, g_j the exact weighted gradient) is a
majorization step and therefore always descends.  Either way the
objective is monotone.  Warm starts carry solutions down the path;
convergence is declared only when a pass over a freshly linearized
model moves no coordinate, and a full Karush-Kuhn-Tucker screen on the
exact gradient admits violators until none remain.

Sample weights equalize the total mass of the 1..4-source scene groups
and, within each group, split class mass 0.5 positives / 0.25 each for
target-present and target-absent negatives (segregated detectors) or
0.5 / 0.5 (fullstream detectors).  Lambda is selected by 6-fold
cross-validation stratified over sound files within each class.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

N_CV_FOLDS = 6
N_LAMBDAS = 100
LAMBDA_MIN_RATIO = 1e-4
COORD_TOL = 1e-7
KKT_TOL = 1e-5
MAX_SWEEPS = 5_000  # coordinate passes per path point
MODEL_PASSES = 10  # passes per quadratic model before relinearizing
SATURATION_DEV_RATIO = 0.999
OVERFIT_DEV_RATIO = 0.9  # budget exhaustion here freezes the path tail
TRAIN_SAMPLE_CAP = 200_000
_CV_SEED_TAG = 0xF01D
_SUBSAMPLE_SEED_TAG = 0x5AB5


def merge_degenerate_groups(labels: np.ndarray, source_counts: np.ndarray) -> np.ndarray:
    """Source-count column with single-class groups folded into neighbors.

    A group whose samples are all one label cannot be weighted on its
    own; it merges into the closest other group (ties toward the larger
    count) until every remaining group carries both classes or only one
    group is left.
    """
    labels = np.asarray(labels)
    counts = np.asarray(source_counts).copy()
    while True:
        groups = np.unique(counts)
        if len(groups) <= 1:
            return counts
        bad = next(
            (
                g
                for g in groups
                if not ((labels[counts == g] == 1).any() and (labels[counts == g] == -1).any())
            ),
            None,
        )
        if bad is None:
            return counts
        others = [g for g in groups if g != bad]
        target = min(others, key=lambda o: (abs(o - bad), -o))
        counts[counts == bad] = target


def compute_sample_weights(
    labels: np.ndarray,
    source_counts: np.ndarray,
    negative_kinds: np.ndarray | None,
    kind: str,
    on_degenerate: str = "error",
) -> np.ndarray:
    """Per-sample weights; the total equals the sample count.

    Source-count groups receive equal total mass.  Within a group,
    segregated samples split the mass 0.5 to positives and 0.25 to each
    negative kind (pp = target present elsewhere, npp = target absent);
    a kind with no samples in a group cedes its mass to the other.
    Fullstream samples split 0.5 positives / 0.5 negatives.

    A group containing a single label class is an error by default;
    ``on_degenerate="merge"`` folds such groups into their nearest
    neighbor instead (sound material with exact digital silence between
    events can leave one-source scenes without negative stream samples).
    """
    labels = np.asarray(labels)
    source_counts = np.asarray(source_counts)
    n = len(labels)
    if n == 0:
        raise ValueError("no samples to weight")
    if on_degenerate not in ("error", "merge"):
        raise ValueError("on_degenerate must be 'error' or 'merge'")
    if on_degenerate == "merge":
        source_counts = merge_degenerate_groups(labels, source_counts)
    weights = np.zeros(n, dtype=float)
    groups = np.unique(source_counts)
    group_mass = n / len(groups)
    for g in groups:
        in_g = source_counts == g
        pos = in_g & (labels == 1)
        neg = in_g & (labels == -1)
        if not pos.any() or not neg.any():
            raise ValueError(f"source-count group {g} lacks a label class")
        weights[pos] = 0.5 * group_mass / pos.sum()
        if kind == "fullstream" or negative_kinds is None:
            weights[neg] = 0.5 * group_mass / neg.sum()
            continue
        kinds = np.asarray(negative_kinds)
        pp = neg & (kinds == "pp")
        npp = neg & (kinds == "npp")
        if (pp.sum() + npp.sum()) != neg.sum():
            raise ValueError("segregated negatives must carry a pp/npp kind")
        if pp.any() and npp.any():
            weights[pp] = 0.25 * group_mass / pp.sum()
            weights[npp] = 0.25 * group_mass / npp.sum()
        else:  # one negative kind absent in this group: give it the full half
            present = pp if pp.any() else npp
            weights[present] = 0.5 * group_mass / present.sum()
    return weights


def _recode(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y)
    if not np.all(np.isin(y, (-1, 1))):
        raise ValueError("labels must be +1/-1")
    if (y == 1).all() or (y == -1).all():
        raise ValueError("training labels contain a single class")
    return (y == 1).astype(float)


def lambda_max(X: np.ndarray, y: np.ndarray, w: np.ndarray) -> float:
    """Smallest lambda with an all-zero solution, on standardized features."""
    y01 = _recode(y)
    v = np.asarray(w, dtype=float)
    v = v / v.sum()
    mu = v @ X
    sd = np.sqrt(v @ (X - mu) ** 2)
    sd = np.where(sd == 0.0, 1.0, sd)
    z = (X - mu) / sd
    resid = v * (y01 - v @ y01)
    return float(np.abs(resid @ z).max())


def lambda_grid(lam_max: float, n: int = N_LAMBDAS, min_ratio: float = LAMBDA_MIN_RATIO) -> np.ndarray:
    """Descending log-spaced path from lambda_max to min_ratio times it."""
    return lam_max * min_ratio ** (np.arange(n) / (n - 1))


@dataclass
class PathFit:
    """Solutions along a lambda path, in standardized feature space."""

    lambdas: np.ndarray
    coefs: np.ndarray  # (n_lambdas, n_features)
    intercepts: np.ndarray
    mean: np.ndarray
    scale: np.ndarray

    def margins(self, X: np.ndarray) -> np.ndarray:
        """Decision margins for every path point: (n_samples, n_lambdas)."""
        z = (np.asarray(X, dtype=float) - self.mean) / self.scale
        return z @ self.coefs.T + self.intercepts


def fit_lasso_path(
    X: np.ndarray, y: np.ndarray, w: np.ndarray, lambdas: np.ndarray | None = None
) -> PathFit:
    """Cyclic coordinate descent over a descending lambda path.

    Features are standardized internally to weighted mean 0 and
    variance 1; coefficients are reported in that standardized space
    together with the standardization, so predictions are portable.

    Each path point gets a fixed sweep budget.  Because every update
    is a majorization step, the deviance decreases monotonically, so
    an exhausted budget means slow descent rather than divergence: the
    point is recorded as is and the next point continues from it.  The
    path stops early, inheriting the current solution for all
    remaining points, once the fit saturates (more than 99.9% of the
    null deviance explained, which happens on linearly separable data
    partway down the path) or once a budget runs out while the fit is
    already deep in the overfit regime.  In both regimes the deeper
    points would only grow the same coefficients without changing
    predictions materially.
    """
    X = np.asarray(X, dtype=float)
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    y01 = _recode(y)
    v = np.asarray(w, dtype=float)
    if np.any(v < 0) or v.sum() <= 0:
        raise ValueError("weights must be nonnegative with positive total")
    v = v / v.sum()

    mu = v @ X
    sd = np.sqrt(v @ (X - mu) ** 2)
    sd = np.where(sd == 0.0, 1.0, sd)
    z = (X - mu) / sd
    zT = np.ascontiguousarray(z.T)  # contiguous columns for the inner loop
    n, d = z.shape

    if lambdas is None:
        resid = v * (y01 - v @ y01)
        lambdas = lambda_grid(float(np.abs(resid @ z).max()))
    lambdas = np.asarray(lambdas, dtype=float)
    if np.any(np.diff(lambdas) >= 0):
        raise ValueError("lambda path must be strictly descending")

    beta = np.zeros(d)
    ybar = float(v @ y01)
    intercept = float(np.log(ybar / (1.0 - ybar)))
    eta = np.full(n, intercept)
    screen_tol = 0.1 * KKT_TOL  # admit violators well inside the check tolerance
    null_loss = -(ybar * np.log(ybar) + (1.0 - ybar) * np.log(1.0 - ybar))

    coefs = np.empty((len(lambdas), d))
    intercepts = np.empty(len(lambdas))

    def sweep(coords, lam):
        """One cyclic pass over the intercept and given coordinates.

        Returns (largest step taken, coordinates that moved).
        """
        nonlocal intercept, eta
        max_step = 0.0
        moved = []
        resid = v * (_sigmoid(eta) - y01)
        step = -4.0 * resid.sum()
        if step != 0.0:
            intercept += step
            eta += step
            max_step = abs(step)
            resid = v * (_sigmoid(eta) - y01)
        for j in coords:
            col = zT[j]
            g = col @ resid
            u = 0.25 * beta[j] - g
            new = 4.0 * np.sign(u) * max(abs(u) - lam, 0.0)
            delta = new - beta[j]
            if delta != 0.0:
                beta[j] = new
                eta += delta * col
                if abs(delta) > max_step:
                    max_step = abs(delta)
                if abs(delta) >= COORD_TOL:
                    moved.append(j)
                resid = v * (_sigmoid(eta) - y01)
        return max_step, moved

    for k, lam in enumerate(lambdas):
        sweeps_left = MAX_SWEEPS
        active = np.flatnonzero(beta)
        while True:
            # Converge the active set, then screen all coordinates.
            while sweeps_left > 0:
                sweeps_left -= 1
                max_step, moving = sweep(active, lam)
                if max_step < COORD_TOL:
                    break
                # Most coordinates settle quickly; iterate the few that
                # are still moving before the next full pass certifies
                # convergence over the whole active set.
                for _ in range(SUBSET_SWEEPS):
                    if not moving or sweeps_left <= 0:
                        break
                    sweeps_left -= 1
                    sub_step, moving = sweep(moving, lam)
                    if sub_step < COORD_TOL:
                        break
            if sweeps_left <= 0:
                break
            # A saturated fit is the path's stopping condition; skip the
            # screen and let the post-point check freeze the remainder.
            p = np.clip(_sigmoid(eta), 1e-12, 1.0 - 1e-12)
            loss = -float(v @ (y01 * np.log(p) + (1.0 - y01) * np.log(1.0 - p)))
            if 1.0 - loss / null_loss >= SATURATION_DEV_RATIO:
                break
            # Full Karush-Kuhn-Tucker screen for violating coordinates.
            resid = v * (_sigmoid(eta) - y01)
            grad = z.T @ resid
            zero = beta == 0.0
            violators = np.flatnonzero(zero & (np.abs(grad) > lam + screen_tol))
            if violators.size == 0:
                break
            active = np.union1d(active, violators)
        coefs[k] = beta
        intercepts[k] = intercept
        p = np.clip(_sigmoid(eta), 1e-12, 1.0 - 1e-12)
        loss = -float(v @ (y01 * np.log(p) + (1.0 - y01) * np.log(1.0 - p)))
        dev_ratio = 1.0 - loss / null_loss
        if dev_ratio >= SATURATION_DEV_RATIO or (
            sweeps_left <= 0 and dev_ratio >= OVERFIT_DEV_RATIO
        ):
            coefs[k + 1 :] = beta
            intercepts[k + 1 :] = intercept
            break

    return PathFit(
        lambdas=lambdas, coefs=coefs, intercepts=intercepts, mean=mu, scale=sd
    )


def kkt_residuals(path: PathFit, X: np.ndarray, y: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Worst stationarity violation at each path point.

    Zero coordinates must satisfy |g_j| <= lambda; active coordinates
    must satisfy g_j + lambda sign(beta_j) = 0.
    """
    y01 = _recode(y)
    v = np.asarray(w, dtype=float)
    v = v / v.sum()
    z = (np.asarray(X, dtype=float) - path.mean) / path.scale
    out = np.empty(len(path.lambdas))
    for k, lam in enumerate(path.lambdas):
        eta = z @ path.coefs[k] + path.intercepts[k]
        resid = v * (_sigmoid(eta) - y01)
        grad = z.T @ resid
        g0 = abs(float(resid.sum()))
        beta = path.coefs[k]
        zero = beta == 0.0
        viol_zero = np.maximum(np.abs(grad[zero]) - lam, 0.0).max(initial=0.0)
        viol_active = np.abs(grad[~zero] + lam * np.sign(beta[~zero])).max(initial=0.0)
        out[k] = max(viol_zero, viol_active, g0)
    return out


@dataclass
class DetectionModel:
    """One-vs-all detector: sparse weights over standardized features."""

    target_class: str
    kind: str  # "fullstream" | "segregated"
    lambda_: float
    intercept: float
    indices: np.ndarray
    values: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    n_features: int

    def margins(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValueError("feature dimension does not match the model")
        if self.indices.size == 0:
            return np.full(X.shape[0], self.intercept)
        cols = self.indices
        z = (X[:, cols] - self.mean[cols]) / self.scale[cols]
        return z @ self.values + self.intercept

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Labels +1/-1; a zero margin counts as +1."""
        return np.where(self.margins(X) >= 0.0, 1, -1)

    @property
    def n_active(self) -> int:
        return int(self.indices.size)

    def to_dict(self) -> dict:
        return {
            "target_class": self.target_class,
            "kind": self.kind,
            "lambda": self.lambda_,
            "intercept": self.intercept,
            "indices": self.indices.tolist(),
            "values": self.values.tolist(),
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "n_features": self.n_features,
        }

    @staticmethod
    def from_dict(d: dict) -> "DetectionModel":
        return DetectionModel(
            target_class=d["target_class"],
            kind=d["kind"],
            lambda_=float(d["lambda"]),
            intercept=float(d["intercept"]),
            indices=np.asarray(d["indices"], dtype=int),
            values=np.asarray(d["values"], dtype=float),
            mean=np.asarray(d["mean"], dtype=float),
            scale=np.asarray(d["scale"], dtype=float),
            n_features=int(d["n_features"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True))

    @staticmethod
    def load(path: str | Path) -> "DetectionModel":
        return DetectionModel.from_dict(json.loads(Path(path).read_text()))


def model_from_path(
    path: PathFit, index: int, target_class: str, kind: str
) -> DetectionModel:
    """Extract one path point as a standalone detection model."""
    beta = path.coefs[index]
    idx = np.flatnonzero(beta)
    return DetectionModel(
        target_class=target_class,
        kind=kind,
        lambda_=float(path.lambdas[index]),
        intercept=float(path.intercepts[index]),
        indices=idx,
        values=beta[idx].copy(),
        mean=path.mean,
        scale=path.scale,
        n_features=beta.size,
    )


@dataclass
class CvPlan:
    """File-level folds, class-stratified."""

    folds: list[set]

    def fold_of(self, sound_id: str) -> int:
        for i, fold in enumerate(self.folds):
            if sound_id in fold:
                return i
        raise KeyError(f"sound id {sound_id!r} is not in the plan")


def build_cv_plan(file_classes: dict[str, str], n_folds: int = N_CV_FOLDS, seed: int = 0) -> CvPlan:
    """Distribute sound files over folds, stratified within each class.

    Files of every class are shuffled deterministically and dealt
    round-robin, so fold sizes within a class differ by at most one.
    """
    rng = np.random.default_rng([_CV_SEED_TAG, seed])
    folds: list[set] = [set() for _ in range(n_folds)]
    by_class: dict[str, list[str]] = {}
    for fid, cls in sorted(file_classes.items()):
        by_class.setdefault(cls, []).append(fid)
    offset = 0
    for cls in sorted(by_class):
        files = by_class[cls]
        order = rng.permutation(len(files))
        for pos, idx in enumerate(order):
            folds[(offset + pos) % n_folds].add(files[idx])
        offset += len(files)
    return CvPlan(folds=folds)


def _balanced_accuracy_sw(y, kinds, predictions) -> float:
    """Stream-wise balanced accuracy of hard predictions (counts)."""
    pos = y == 1
    if not pos.any():
        return np.nan
    sens = (predictions[pos] == 1).mean()
    specs = []
    for kind in ("pp", "npp"):
        sel = (y == -1) & (kinds == kind)
        if sel.any():
            specs.append((predictions[sel] == -1).mean())
    if not specs:
        return np.nan
    return 0.5 * sens + 0.5 * float(np.mean(specs))


def _balanced_accuracy(y, predictions) -> float:
    pos = y == 1
    neg = y == -1
    if not pos.any() or not neg.any():
        return np.nan
    return 0.5 * (predictions[pos] == 1).mean() + 0.5 * (predictions[neg] == -1).mean()


def select_lambda_cv(
    X: np.ndarray,
    y: np.ndarray,
    source_counts: np.ndarray,
    negative_kinds: np.ndarray | None,
    sound_ids: np.ndarray,
    plan: CvPlan,
    kind: str,
    lambdas: np.ndarray | None = None,
    on_degenerate: str = "error",
) -> tuple[float, PathFit, np.ndarray]:
    """Pick lambda by cross-validated balanced accuracy and refit.

    Each fold holds out the samples of its sound files, refits the path
    on the rest (with weights recomputed on that subset), and scores
    held-out predictions with the stream-wise balanced accuracy for
    segregated detectors or plain balanced accuracy for fullstream
    ones.  Ties prefer the larger lambda (the sparser model).  Returns
    (best lambda, path refitted on all samples, mean CV score per
    lambda); the final model is the path point at the best lambda.
    """
    y = np.asarray(y)
    sound_ids = np.asarray(sound_ids)
    kinds = None if negative_kinds is None else np.asarray(negative_kinds)
    if lambdas is None:
        w_all = compute_sample_weights(y, source_counts, kinds, kind, on_degenerate)
        lambdas = lambda_grid(lambda_max(X, y, w_all))

    fold_ids = np.array([plan.fold_of(s) for s in sound_ids])
    scores = []
    for f in range(len(plan.folds)):
        test = fold_ids == f
        if not test.any():
            continue
        train = ~test
        if len(np.unique(y[test])) < 2:
            raise ValueError(f"fold {f} holds out a single label class")
        w_train = compute_sample_weights(
            y[train],
            np.asarray(source_counts)[train],
            None if kinds is None else kinds[train],
            kind,
            on_degenerate,
        )
        path = fit_lasso_path(X[train], y[train], w_train, lambdas)
        margins = path.margins(X[test])
        fold_scores = np.empty(len(lambdas))
        for k in range(len(lambdas)):
            pred = np.where(margins[:, k] >= 0.0, 1, -1)
            if kind == "segregated":
                fold_scores[k] = _balanced_accuracy_sw(y[test], kinds[test], pred)
            else:
                fold_scores[k] = _balanced_accuracy(y[test], pred)
        scores.append(fold_scores)
    if not scores:
        raise ValueError("cross-validation plan produced no folds")
    mean_scores = np.nanmean(np.stack(scores), axis=0)
    best = int(np.nanargmax(mean_scores))  # first index = largest lambda on ties

    w_all = compute_sample_weights(y, source_counts, kinds, kind, on_degenerate)
    full_path = fit_lasso_path(X, y, w_all, lambdas)
    return float(lambdas[best]), full_path, mean_scores


def subsample_per_file(sound_ids: np.ndarray, cap: int = TRAIN_SAMPLE_CAP, seed: int = 0) -> np.ndarray:
    """Indices of at most ``cap`` samples, balanced across sound files.

    Files with fewer samples than their fair share keep everything;
    the remaining budget spreads over the larger files by iterative
    refilling, then rows are drawn without replacement per file.
    """
    sound_ids = np.asarray(sound_ids)
    n = len(sound_ids)
    if n <= cap:
        return np.arange(n)
    rng = np.random.default_rng([_SUBSAMPLE_SEED_TAG, seed])
    files, counts = np.unique(sound_ids, return_counts=True)
    quota = np.zeros(len(files), dtype=int)
    remaining = cap
    open_files = np.ones(len(files), dtype=bool)
    while remaining > 0 and open_files.any():
        share = max(remaining // open_files.sum(), 1)
        for i in np.flatnonzero(open_files):
            take = min(share, counts[i] - quota[i], remaining)
            quota[i] += take
            remaining -= take
            if quota[i] == counts[i]:
                open_files[i] = False
            if remaining == 0:
                break
    keep = []
    for i, fid in enumerate(files):
        rows = np.flatnonzero(sound_ids == fid)
        if quota[i] >= rows.size:
            keep.append(rows)
        else:
            keep.append(rng.choice(rows, size=quota[i], replace=False))
    return np.sort(np.concatenate(keep))
