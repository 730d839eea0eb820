"""Closed-form and enumeration checks for the representation and replay theory.

Every check returns a JSON-serialisable report with ``passed`` plus the
measured values and tolerances it used.
"""

from __future__ import annotations

import math

import numpy as np
import torch

from .errors import ConfigError

LN = math.log


# --- Gaussian pairs: MSE vs mutual information ---------------------------------


def additive_mse(d: int, sigma2: float) -> float:
    """E||X - (X + noise)||^2 for X ~ N(0, I_d), noise ~ N(0, sigma2 I_d)."""
    if sigma2 < 0:
        raise ConfigError("sigma2 must be >= 0")
    return sigma2 * d


def additive_mi(d: int, sigma2: float) -> float:
    """I(X; X + noise) in nats."""
    if sigma2 <= 0:
        raise ConfigError("sigma2 must be positive")
    return d / 2 * math.log1p(1.0 / sigma2)


def scaling_pair(d: int, k: float) -> tuple[float, float]:
    """(MSE, MI) for Y = kX using the differential-entropy convention H(kX | X) = 0."""
    if k <= 1:
        raise ConfigError("scaling factor must exceed 1")
    return (1 - k) ** 2 * d, d / 2 * LN(2 * math.pi * math.e * k * k)


def mc_additive_mse(d: int, sigma2: float, n: int, rng: np.random.Generator, chunk: int = 200_000) -> float:
    total, done = 0.0, 0
    while done < n:
        m = min(chunk, n - done)
        x = rng.standard_normal((m, d))
        y = x + math.sqrt(sigma2) * rng.standard_normal((m, d))
        total += float(((x - y) ** 2).sum())
        done += m
    return total / n


def _strictly_increasing(xs) -> bool:
    return all(b > a for a, b in zip(xs, xs[1:]))


def theorem1_check(d: int = 4, sigma2s=(0.1, 1.0, 10.0), ks=(1.5, 2.0, 4.0), scaling_d: int = 1,
                   mc_samples: int = 1_000_000, seed: int = 0, mc_rtol: float = 0.02) -> dict:
    """Additive family: MSE up, MI down. Scaling family: both up. Together no fixed sign."""
    rng = np.random.default_rng(seed)
    add_mse = [additive_mse(d, s) for s in sigma2s]
    add_mi = [additive_mi(d, s) for s in sigma2s]
    scale = [scaling_pair(scaling_d, k) for k in ks]
    mc = [mc_additive_mse(d, s, mc_samples, rng) for s in sigma2s]
    mc_err = [abs(m - e) / e for m, e in zip(mc, add_mse)]
    anti = _strictly_increasing(add_mse) and _strictly_increasing(add_mi[::-1])
    co = _strictly_increasing([m for m, _ in scale]) and _strictly_increasing([i for _, i in scale])
    return {
        "suite": "theorem1",
        "passed": bool(anti and co and max(mc_err) <= mc_rtol),
        "additive": {"sigma2": list(sigma2s), "mse": add_mse, "mi": add_mi, "mc_mse": mc,
                     "mc_rel_err": mc_err, "anti_correlated": anti},
        "scaling": {"k": list(ks), "mse": [m for m, _ in scale], "mi": [i for _, i in scale],
                    "co_moving": co},
        "tolerance": {"mc_rel": mc_rtol},
    }


# --- discrete entropies ----------------------------------------------------------


def entropy(p) -> float:
    p = np.asarray(p, dtype=np.float64).ravel()
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def mutual_information(joint) -> float:
    """KL(joint || product of marginals), nats. Rows index Z, columns the conditioning variable."""
    j = np.asarray(joint, dtype=np.float64)
    pz = j.sum(1, keepdims=True)
    py = j.sum(0, keepdims=True)
    nz = j > 0
    return float((j[nz] * np.log(j[nz] / (pz @ py)[nz])).sum())


def conditional_entropy(joint) -> float:
    """H(Z | Y) = -sum p(z, y) log p(z | y)."""
    j = np.asarray(joint, dtype=np.float64)
    py = j.sum(0, keepdims=True)
    cond = np.divide(j, py, out=np.zeros_like(j), where=py > 0)
    nz = j > 0
    return float(-(j[nz] * np.log(cond[nz])).sum())


def lemma2_check(trials: int = 1000, size: int = 4, seed: int = 0, tol: float = 1e-12) -> dict:
    """H(Z) - I(Z;Y) - H(Z|Y) = 0 on random joints, and shifts in I move H(Z|Y) one-for-one
    when the Z marginal is held fixed."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    worst_shift = 0.0
    for _ in range(trials):
        joint = rng.dirichlet(np.ones(size * size)).reshape(size, size)
        pz = joint.sum(1)
        worst = max(worst, abs(entropy(pz) - mutual_information(joint) - conditional_entropy(joint)))
        # blend toward the deterministic coupling with the same Z marginal
        lam = rng.uniform(0.05, 0.95)
        other = (1 - lam) * joint + lam * np.diag(pz)
        d_i = mutual_information(other) - mutual_information(joint)
        d_h = conditional_entropy(other) - conditional_entropy(joint)
        worst_shift = max(worst_shift, abs(d_i + d_h))
    uniform = np.full((size, size), 1.0 / size**2)
    identity = np.eye(size) / size
    examples = {
        "independent": {"mi": mutual_information(uniform), "cond_entropy": conditional_entropy(uniform)},
        "identity": {"mi": mutual_information(identity), "cond_entropy": conditional_entropy(identity)},
    }
    return {
        "suite": "lemma2",
        "passed": bool(worst <= tol and worst_shift <= tol),
        "max_identity_residual": worst,
        "max_shift_residual": worst_shift,
        "examples": examples,
        "tolerance": tol,
        "trials": trials,
    }


# --- faded replay theory --------------------------------------------------------


def faded_probabilities(ages, priorities, eps: float, eps_low: float = 0.0) -> list[float]:
    """Plain-loop evaluation of the faded sampling law (independent of the replay module)."""
    keep = 1.0 - eps
    weights = []
    for age, prio in zip(ages, priorities):
        decay = keep ** int(age)
        weights.append(float(prio) * (decay if decay > eps_low else eps_low))
    total = math.fsum(weights)
    return [w / total for w in weights]


def lap_priority(td_error: float, alpha: float) -> float:
    return max(abs(td_error) ** alpha, 1.0)


def theorem3_check(buffer_sizes=(10, 100, 1000), trials: int = 100, eps_values=(1e-4, 0.01, 0.5),
                   batch_size: int = 256, alpha: float = 0.4, seed: int = 0,
                   cross_check: bool = True) -> dict:
    """Exhaustive check of the three claims on random buffers (no floor).

    (i) equal priority, younger -> strictly more likely; (ii) P(i) >= P_hat(i) (1-eps)^i;
    (iii) 0 < N P(i) < N. Priorities come from a small discrete TD-error set so
    duplicates are common.
    """
    from .replay import FadedBuffer

    rng = np.random.default_rng(seed)
    td_levels = np.array([0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 40.0])
    violations = {"i": 0, "ii": 0, "iii": 0, "cross_check": 0}
    counterexample = None
    checked = 0
    for eps in eps_values:
        for trial in range(trials):
            n = int(rng.integers(2, max(buffer_sizes) + 1)) if trial else int(max(buffer_sizes))
            td = rng.choice(td_levels, size=n)
            prios = [lap_priority(x, alpha) for x in td]
            ages = list(range(n))  # age 0 = newest
            p = faded_probabilities(ages, prios, eps, 0.0)
            total_prio = math.fsum(prios)
            p_hat = [q / total_prio for q in prios]
            keep = 1.0 - eps
            by_prio: dict[float, list[int]] = {}
            for age, q in zip(ages, prios):
                by_prio.setdefault(q, []).append(age)
            bad_i = sum(
                1 for group in by_prio.values() for a, b in zip(group, group[1:]) if not p[a] > p[b]
            )
            # slack of a few ulps for the product on the left
            bad_ii = sum(1 for i in ages if p_hat[i] * keep**i > p[i] * (1 + 1e-12))
            bad_iii = sum(1 for i in ages if not (0 < batch_size * p[i] < batch_size))
            bad_x = 0
            if cross_check:
                buf = FadedBuffer(n, 1, 1, eps=eps, eps_low=0.0)
                for k in range(n):
                    buf.push([0.0], [0.0], 0.0, [0.0], False)
                # ages count from the newest, buffer ids from the oldest
                buf.update_priorities(np.arange(n), td[::-1].copy(), alpha)
                _, probs = buf.exact_distribution()
                bad_x = int((probs[::-1] != np.array(p)).sum())
            violations["i"] += bad_i
            violations["ii"] += bad_ii
            violations["iii"] += bad_iii
            violations["cross_check"] += bad_x
            if (bad_i or bad_ii or bad_iii or bad_x) and counterexample is None:
                counterexample = {"eps": eps, "td_errors": td.tolist()}
            checked += 1
    keep_ratio = (1 - 0.1) ** -5
    pair = faded_probabilities([0, 5], [1.0, 1.0], 0.1, 0.0)
    return {
        "suite": "theorem3",
        "passed": all(v == 0 for v in violations.values()),
        "violations": violations,
        "buffers_checked": checked,
        "eps_values": list(eps_values),
        "pair_ratio_age0_age5_eps0.1": pair[0] / pair[1],
        "expected_pair_ratio": keep_ratio,
        "counterexample": counterexample,
    }


# --- InfoNCE as a mutual-information bound ---------------------------------------


def infonce_bound_check(n: int, d: int, sigma2: float, reps: int = 200, tau: float = 0.1,
                        shuffled: bool = False, seed: int = 0, slack: float = 0.05) -> dict:
    """log(N) - mean InfoNCE loss must not exceed the true MI (plus ``slack``)."""
    from .encoder import infonce_loss

    rng = np.random.default_rng(seed)
    losses = []
    for _ in range(reps):
        x = rng.standard_normal((n, d))
        y = x + math.sqrt(sigma2) * rng.standard_normal((n, d))
        if shuffled:
            y = y[rng.permutation(n)]
        losses.append(float(infonce_loss(torch.from_numpy(x), torch.from_numpy(y), tau)))
    mean_loss = float(np.mean(losses))
    bound = math.log(n) - mean_loss
    mi = 0.0 if shuffled else additive_mi(d, sigma2)
    return {
        "suite": "infonce",
        "passed": bool(bound <= mi + slack),
        "N": n, "d": d, "sigma2": sigma2, "shuffled": shuffled, "tau": tau, "reps": reps,
        "mean_loss": mean_loss, "lower_bound": bound, "true_mi": mi, "gap": mi - bound,
        "tolerance": slack,
    }


def infonce_suite(seed: int = 0) -> dict:
    reports = []
    for n in (16, 256):
        for d, s2 in ((4, 0.1), (4, 1.0), (4, 10.0), (8, 0.01)):
            reports.append(infonce_bound_check(n, d, s2, seed=seed))
        reports.append(infonce_bound_check(n, 4, 1.0, shuffled=True, seed=seed))
    return {"suite": "infonce", "passed": all(r["passed"] for r in reports), "checks": reports}


# --- gradient checks over every loss --------------------------------------------


def gradcheck_suite(points: int = 100, seed: int = 0, tol: float = 1e-4, h: float = 1e-5) -> dict:
    from .diffcore import check_gradients
    from .gradchecks import LOSS_CHECKS

    rng = np.random.default_rng(seed)
    results = {}
    for name, make in LOSS_CHECKS.items():
        worst = 0.0
        for _ in range(points):
            loss_fn, store = make(rng)
            worst = max(worst, check_gradients(loss_fn, store, rng, h=h))
        results[name] = {"max_rel_err": worst, "passed": worst <= tol}
    return {"suite": "gradcheck", "passed": all(r["passed"] for r in results.values()),
            "losses": results, "points": points, "tolerance": tol, "h": h}


def replay_suite(seed: int = 0) -> dict:
    return theorem3_check(seed=seed)


SUITES = {
    "replay": replay_suite,
    "gaussian": lambda seed=0: theorem1_check(seed=seed),
    "lemma2": lambda seed=0: lemma2_check(seed=seed),
    "infonce": infonce_suite,
    "gradcheck": lambda seed=0: gradcheck_suite(seed=seed),
}


def run_suite(name: str, seed: int = 0) -> dict:
    try:
        fn = SUITES[name]
    except KeyError:
        raise ConfigError(f"unknown oracle suite {name!r}; choose from {sorted(SUITES)}") from None
    return fn(seed=seed)
