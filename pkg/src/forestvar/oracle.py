"""Exact combinatorics and brute-force references for the variance theory.

Everything here is computed in exact rational arithmetic (``fractions``
over Python big integers) and converted to float only at the caller's
request: the overlap coefficients sum to one, the pairing weights sum to
zero, and the two variance-decomposition routes agree exactly, so these
functions serve as machine-checkable oracles for the sampled estimators.

Key quantities, for subsample size k out of n rows:

* ``gamma_coeff(n, k, d)``: probability that two independent uniform size-k
  subsets overlap in exactly d rows (a hypergeometric mass); the weight of
  the overlap-d covariance in the ensemble variance.
* ``XiProfile``: the covariance ladder ``xi[d] = Cov(h(S1), h(S2))`` for
  ``|S1 ∩ S2| = d`` together with its conditional-variance complement
  ``xi_tilde[d] = v_h - xi[d]``.
* ``hoeffding_variance``: Var of the complete subset average via the
  overlap decomposition; ``vh_minus_vs_identity`` computes the same value
  through the tree-variance-minus-vs route and must agree identically.
* ``double_u_weights``: the exact weights expressing the quadratic variance
  kernel as a combination of fixed-overlap product averages (w_0 < 0,
  w_d > 0 for d >= 1, sum zero).
* brute-force estimators that exhaustively enumerate all C(n, k) subsets,
  capped to keep runtimes sane.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from math import comb
from typing import Optional, Sequence

import numpy as np

from .data import Dataset
from .errors import (
    CombinatorialBlowup,
    IndexOutOfRange,
    KOutOfRange,
    KTooLarge,
    KTooLargeForVh,
)

SUBSET_CAP = 100_000
PAIR_CAP = 20_000_000


def gamma_coeff(n: int, k: int, d: int) -> Fraction:
    """Hypergeometric overlap mass C(k,d) C(n-k,k-d) / C(n,k).

    Zero whenever an overlap of exactly d rows is impossible, in particular
    for d < 2k - n.
    """
    if not (0 <= d <= k <= n):
        raise IndexOutOfRange(f"need 0 <= d <= k <= n, got n={n}, k={k}, d={d}")
    return Fraction(comb(k, d) * comb(n - k, k - d), comb(n, k))


def gamma_coeffs(n: int, k: int) -> list:
    """All overlap masses for d = 0..k (an exact probability vector)."""
    return [gamma_coeff(n, k, d) for d in range(k + 1)]


@dataclass(frozen=True)
class XiProfile:
    """Covariance ladder of a size-k kernel by number of shared rows.

    ``xi[d]`` is the covariance of two kernel evaluations sharing d rows
    (``xi[0] = 0``); ``v_h = xi[k]`` is the single-kernel variance, and
    ``xi_tilde[d] = v_h - xi[d] >= 0`` is the expected conditional variance
    with d rows held fixed.  Entries may be floats or Fractions; Fractions
    keep every identity exact.
    """

    xi: tuple
    xi_tilde: tuple
    v_h: object

    def __post_init__(self):
        if len(self.xi) != len(self.xi_tilde):
            raise ValueError("xi and xi_tilde must have equal length k+1")
        if len(self.xi) < 2:
            raise ValueError("profile needs at least k = 1 (length 2)")
        if self.xi[0] != 0:
            raise ValueError("xi[0] must be 0 (disjoint subsets are independent)")
        if self.xi[-1] != self.v_h:
            raise ValueError("v_h must equal xi[k]")
        for d, (a, b) in enumerate(zip(self.xi, self.xi_tilde)):
            if b != self.v_h - a:
                raise ValueError(f"xi_tilde[{d}] != v_h - xi[{d}]")
            if b < 0:
                raise ValueError(f"xi_tilde[{d}] = {b} < 0")

    @property
    def k(self) -> int:
        return len(self.xi) - 1

    @classmethod
    def from_xi(cls, xi: Sequence) -> "XiProfile":
        xi = tuple(xi)
        v_h = xi[-1]
        return cls(xi=xi, xi_tilde=tuple(v_h - x for x in xi), v_h=v_h)


def hoeffding_variance(n: int, k: int, profile: XiProfile):
    """Variance of the complete size-k subset average: sum_d gamma_d xi_d."""
    if profile.k != k:
        raise ValueError(f"profile is for k={profile.k}, asked for k={k}")
    g = gamma_coeffs(n, k)
    total = 0
    for d in range(1, k + 1):
        total += g[d] * profile.xi[d]
    return total


def vh_minus_vs_identity(n: int, k: int, profile: XiProfile):
    """Same variance through v_h - sum_d gamma_d xi_tilde_d.

    Algebraically identical to :func:`hoeffding_variance` because the
    gamma_d sum to one; the pair is kept as a cross-check for estimators
    built on either route.
    """
    if profile.k != k:
        raise ValueError(f"profile is for k={profile.k}, asked for k={k}")
    g = gamma_coeffs(n, k)
    vs = 0
    for d in range(k + 1):
        vs += g[d] * profile.xi_tilde[d]
    return profile.v_h - vs


def mean_kernel_profile(n: int, k: int, sigma2=Fraction(1)) -> XiProfile:
    """Exact profile of the subsample-mean kernel: xi_d = d sigma^2 / k^2."""
    if not (1 <= k <= n):
        raise KOutOfRange(f"need 1 <= k <= n, got k={k}, n={n}")
    if isinstance(sigma2, (int, Fraction)):
        sigma2 = Fraction(sigma2)
    xi = tuple(d * sigma2 / (k * k) for d in range(k + 1))
    return XiProfile.from_xi(xi)


def one_nn_weights(n: int, k: int) -> tuple:
    """Exact weights a_i = C(n-i, k-1)/C(n, k) of the 1-NN subset average.

    Ordering rows by distance to the target, the complete average of the
    1-NN kernel equals sum_i a_i y_i over i = 1..n-k+1; the weights sum to
    one exactly.
    """
    if not (1 <= k <= n):
        raise KOutOfRange(f"need 1 <= k <= n, got k={k}, n={n}")
    denom = comb(n, k)
    return tuple(Fraction(comb(n - i, k - 1), denom) for i in range(1, n - k + 2))


def double_u_weights(n: int, k: int) -> tuple:
    """Exact pairing weights (w_0, ..., w_k) of the quadratic variance kernel.

    For d >= 1:
        w_d = C(n,2k) C(n,k)^-2 C(2k,d) C(2k-d,d) C(2k-2d,k-d) / C(n-2k+d,d)
    and
        w_0 = (C(n,k)^-1 - C(n-k,k)^-1) C(n,k)^-1 C(n,2k) C(2k,k).

    They satisfy sum_d w_d = 0 with w_0 < 0 < w_d for d >= 1.
    """
    if not (1 <= k and 2 * k <= n):
        raise KTooLarge(f"need 2k <= n, got k={k}, n={n}")
    a1 = Fraction(comb(n, 2 * k), comb(n, k) ** 2)
    w = [None] * (k + 1)
    w[0] = (
        (Fraction(1, comb(n, k)) - Fraction(1, comb(n - k, k)))
        * Fraction(comb(n, 2 * k), comb(n, k))
        * comb(2 * k, k)
    )
    for d in range(1, k + 1):
        m_dk = comb(2 * k, d) * comb(2 * k - d, d) * comb(2 * k - 2 * d, k - d)
        w[d] = a1 * Fraction(m_dk, comb(n - 2 * k + d, d))
    return tuple(w)


def delta_bm(M: int, B: int) -> Fraction:
    """Bias weight (M-1)/(MB-1) of the tree variance inside the all-tree variance."""
    if M * B < 2:
        raise ValueError(f"need M*B >= 2, got M={M}, B={B}")
    return Fraction(M - 1, M * B - 1)


def matched_variance_closed_form(n: int, k: int, M: int, B: int, profile: XiProfile):
    """Variance of the matched-group ensemble mean:
    (1 - 1/B) Var(U_n) + v_h / (M B)."""
    var_u = hoeffding_variance(n, k, profile)
    return Fraction(B - 1, B) * var_u + Fraction(1, M * B) * profile.v_h


def subset_variance_closed_form(n: int, k: int, B: int, profile: XiProfile):
    """Variance of the independent-subsets (M = 1) ensemble mean:
    (1 - 1/B) Var(U_n) + xi_k / B."""
    var_u = hoeffding_variance(n, k, profile)
    return Fraction(B - 1, B) * var_u + Fraction(1, B) * profile.xi[-1]


# ---------------------------------------------------------------------------
# exhaustive enumeration


def _enumerate_kernel(data: Dataset, kernel, k: int, x, rs):
    n = data.n
    if not (1 <= k <= n):
        raise KOutOfRange(f"need 1 <= k <= n, got k={k}, n={n}")
    n_subsets = comb(n, k)
    if n_subsets > SUBSET_CAP:
        raise CombinatorialBlowup(
            f"C({n},{k}) = {n_subsets} exceeds the enumeration cap {SUBSET_CAP}"
        )
    masks = []
    h = np.empty(n_subsets, dtype=np.float64)
    for i, subset in enumerate(combinations(range(n), k)):
        stream = rs.split([i]) if rs is not None else None
        h[i] = kernel.evaluate(data, subset, x, stream)
        m = 0
        for j in subset:
            m |= 1 << j
        masks.append(m)
    return masks, h


def complete_u_bruteforce(data, kernel, k, x=None, rs=None) -> float:
    """The complete subset average over all C(n, k) subsets."""
    _, h = _enumerate_kernel(data, kernel, k, x, rs)
    return float(h.mean())


def complete_vs_bruteforce(data, kernel, k, x=None, rs=None) -> float:
    """Population variance (divisor C(n,k)) of all subset kernel values."""
    _, h = _enumerate_kernel(data, kernel, k, x, rs)
    dev = h - h.mean()
    return float((dev * dev).mean())


def complete_vh_bruteforce(data, kernel, k, x=None, rs=None) -> float:
    """Average of [h(S_i) - h(S_j)]^2 / 2 over all ordered disjoint pairs."""
    n = data.n
    if 2 * k > n:
        raise KTooLargeForVh(f"disjoint pairs need 2k <= n, got k={k}, n={n}")
    n_pairs = comb(n, k) * comb(n - k, k)
    if n_pairs > PAIR_CAP:
        raise CombinatorialBlowup(
            f"{n_pairs} disjoint ordered pairs exceed the cap {PAIR_CAP}"
        )
    masks, h = _enumerate_kernel(data, kernel, k, x, rs)
    total = 0.0
    count = 0
    for i in range(len(h)):
        for j in range(i + 1, len(h)):
            if masks[i] & masks[j] == 0:
                diff = h[i] - h[j]
                total += diff * diff  # both ordered pairs at once: 2 * diff^2 / 2
                count += 2
    assert count == n_pairs
    return total / count


def complete_variance_bruteforce(data, kernel, k, x=None, rs=None) -> float:
    """Unbiased complete-enumeration variance estimate: vh - vs."""
    return complete_vh_bruteforce(data, kernel, k, x, rs) - complete_vs_bruteforce(
        data, kernel, k, x, rs
    )


def complete_xi_tilde_bruteforce(data, kernel, k, x=None, rs=None) -> list:
    """Per-overlap averages of [h(S_i) - h(S_j)]^2 / 2 over ordered pairs.

    Entry d averages over all ordered pairs with |S_i ∩ S_j| = d (the d = k
    entry pairs every subset with itself and is exactly zero).  Feeding
    these into the gamma-weighted sum reproduces ``complete_vs_bruteforce``
    identically, which the tests assert.
    """
    n = data.n
    n_subsets = comb(n, k)
    if n_subsets * n_subsets > PAIR_CAP:
        raise CombinatorialBlowup(
            f"{n_subsets}^2 ordered pairs exceed the cap {PAIR_CAP}"
        )
    masks, h = _enumerate_kernel(data, kernel, k, x, rs)
    sums = [0.0] * (k + 1)
    counts = [0] * (k + 1)
    for i in range(len(h)):
        counts[k] += 1  # the i = j pair contributes 0 at overlap k
        for j in range(i + 1, len(h)):
            d = (masks[i] & masks[j]).bit_count()
            diff = h[i] - h[j]
            sums[d] += diff * diff  # two ordered pairs, each diff^2 / 2
            counts[d] += 2
    out = []
    for d in range(k + 1):
        out.append(sums[d] / counts[d] if counts[d] else 0.0)
    return out


# ---------------------------------------------------------------------------
# self-checks (exposed through the `oracle-check` CLI subcommand)


def identity_checks(max_n: int = 24) -> list:
    """Run every exact identity up to ``max_n``; returns (name, ok, detail)."""
    from .data import Dataset as _Dataset
    from .kernels import MeanKernel

    results = []

    def check(name, fn):
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failure, not an abort
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append((name, bool(ok), detail))

    def gamma_normalization():
        for n in range(1, max_n + 1):
            for k in range(1, n + 1):
                g = gamma_coeffs(n, k)
                if sum(g) != 1 or any(x < 0 for x in g):
                    return False, f"failed at n={n}, k={k}"
        return True, f"sum_d gamma = 1 exactly for all k <= n <= {max_n}"

    check("gamma coefficients form an exact probability vector", gamma_normalization)

    def gamma_support():
        for n in range(2, max_n + 1):
            for k in range(1, n + 1):
                for d in range(k + 1):
                    expect_zero = (k - d) > (n - k)
                    if (gamma_coeff(n, k, d) == 0) != expect_zero:
                        return False, f"failed at n={n}, k={k}, d={d}"
        return True, "gamma vanishes exactly when overlap d < 2k - n"

    check("gamma support matches the feasibility constraint", gamma_support)

    def golden_case():
        data = _Dataset(features=[[0.0], [1.0], [2.0], [3.0]], response=[1, 2, 3, 4])
        vs = complete_vs_bruteforce(data, MeanKernel(), 2)
        vh = complete_vh_bruteforce(data, MeanKernel(), 2)
        est = complete_variance_bruteforce(data, MeanKernel(), 2)
        ok = (
            abs(vs - 5 / 12) <= 1e-12
            and abs(vh - 5 / 6) <= 1e-12
            and abs(est - 5 / 12) <= 1e-12
        )
        return ok, f"vs={vs:.15f}, vh={vh:.15f}, estimate={est:.15f} (want 5/12, 5/6, 5/12)"

    check("four-point golden case (mean kernel, k=2)", golden_case)

    def route_equality():
        for n in range(2, max_n + 1):
            for k in range(1, n + 1):
                prof = mean_kernel_profile(n, k)
                a = hoeffding_variance(n, k, prof)
                b = vh_minus_vs_identity(n, k, prof)
                if a != b or a != Fraction(1, n):
                    return False, f"failed at n={n}, k={k}: {a} vs {b}"
        return True, "both decompositions equal sigma^2/n exactly (mean kernel)"

    check("variance decomposition routes agree exactly", route_equality)

    def weight_identities():
        for n in range(2, max_n + 1):
            for k in range(1, n // 2 + 1):
                w = double_u_weights(n, k)
                if sum(w) != 0 or w[0] >= 0 or any(x <= 0 for x in w[1:]):
                    return False, f"failed at n={n}, k={k}"
        want = (Fraction(-9, 15), Fraction(8, 15), Fraction(1, 15))
        if double_u_weights(6, 2) != want:
            return False, f"(6,2) weights {double_u_weights(6, 2)} != {want}"
        return True, f"sum w_d = 0, w_0 < 0 < w_d for all 2 <= 2k <= n <= {max_n}"

    check("pairing weights: zero sum and signs", weight_identities)

    def nn_weights():
        for n in range(1, max_n + 1):
            for k in range(1, n + 1):
                a = one_nn_weights(n, k)
                if sum(a) != 1 or a[0] != Fraction(k, n):
                    return False, f"failed at n={n}, k={k}"
        return True, "sum a_i = 1 and a_1 = k/n exactly"

    check("nearest-neighbor kernel weights normalize", nn_weights)

    def closed_forms():
        if delta_bm(2, 5) != Fraction(1, 9):
            return False, f"delta(2,5) = {delta_bm(2, 5)} != 1/9"
        prof = mean_kernel_profile(10, 5)
        v = matched_variance_closed_form(10, 5, 2, 4, prof)
        if v != Fraction(1, 10):
            return False, f"matched closed form {v} != 1/10"
        big_b = matched_variance_closed_form(10, 5, 2, 10**9, prof)
        if abs(big_b - hoeffding_variance(10, 5, prof)) > Fraction(1, 10**9):
            return False, "B -> infinity limit does not approach Var(U_n)"
        return True, "delta and matched-variance closed forms match hand values"

    check("closed-form spot checks", closed_forms)

    def regrouping():
        gen = np.random.default_rng(20240)
        n, k = 8, 3
        data = _Dataset(
            features=gen.random((n, 2)), response=gen.standard_normal(n)
        )
        xt = complete_xi_tilde_bruteforce(data, MeanKernel(), k)
        g = gamma_coeffs(n, k)
        regrouped = float(sum(float(g[d]) * xt[d] for d in range(k + 1)))
        direct = complete_vs_bruteforce(data, MeanKernel(), k)
        ok = abs(regrouped - direct) <= 1e-12 * max(1.0, abs(direct))
        return ok, f"regrouped={regrouped:.15g}, direct={direct:.15g}"

    check("pairwise regrouping reproduces the all-subset variance", regrouping)

    return results

