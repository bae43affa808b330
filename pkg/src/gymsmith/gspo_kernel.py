"""Group-sequence policy-optimization objective at desk scale.

The kernel consumes per-rollout summed sequence log-probabilities plus
lengths (never token arrays): the sequence-level importance ratio is
exp((logprob_new - logprob_old) / length), advantages are group
mean-centered rewards (std division optional and off by default), and
the objective is the clipped surrogate

    value = mean_i min(ratio_i * adv_i, clip(ratio_i, 1-eps, 1+eps) * adv_i)
            - beta * mean_i kl_i

with the KL term dropped entirely at beta = 0. An analytic gradient of
the value with respect to each logprob_new is provided and cross-checked
against central finite differences; rollouts sitting exactly on a clip
kink are nudged off the non-differentiable point before comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace


class GspoError(ValueError):
    pass


@dataclass(frozen=True)
class RolloutStat:
    reward: float
    length: int
    logprob_new: float
    logprob_old: float
    kl_estimate: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.reward <= 1.0:
            raise GspoError(f"reward {self.reward} outside [0, 1]")
        if self.length < 1:
            raise GspoError("length must be a positive integer")
        if not (math.isfinite(self.logprob_new) and math.isfinite(self.logprob_old)):
            raise GspoError("log-probabilities must be finite")
        if self.kl_estimate is not None and (
            not math.isfinite(self.kl_estimate) or self.kl_estimate < 0
        ):
            raise GspoError("kl_estimate must be finite and non-negative")


@dataclass(frozen=True)
class GroupConfig:
    group_size: int = 16
    clip: float = 0.2
    kl_coefficient: float = 0.0
    divide_by_std: bool = False

    def __post_init__(self) -> None:
        if self.group_size < 2:
            raise GspoError("group size must be at least 2")
        if not 0.0 < self.clip < 1.0:
            raise GspoError("clip range must lie strictly between 0 and 1")
        if self.kl_coefficient < 0:
            raise GspoError("kl coefficient must be non-negative")


@dataclass(frozen=True)
class RolloutDiagnostics:
    advantage: float
    ratio: float
    clipped: bool


@dataclass(frozen=True)
class GspoResult:
    value: float
    per_rollout: tuple[RolloutDiagnostics, ...]


def group_advantages(rewards: list[float], divide_by_std: bool = False) -> list[float]:
    """Mean-centered rewards; optionally scaled by the population std.

    A zero-variance group keeps the mean-centered (all-zero) advantages
    under either flag, so it contributes no gradient.
    """
    if len(rewards) < 2:
        raise GspoError("advantage group needs at least two rewards")
    if all(r == rewards[0] for r in rewards):
        # Zero variance: exactly zero advantages, no float-mean residue.
        return [0.0] * len(rewards)
    mean = math.fsum(rewards) / len(rewards)
    centered = [r - mean for r in rewards]
    if divide_by_std:
        variance = math.fsum(a * a for a in centered) / len(centered)
        std = math.sqrt(variance)
        if std > 0.0:
            return [a / std for a in centered]
    return centered


def importance_ratio(stat: RolloutStat) -> float:
    """Length-normalized sequence probability ratio, strictly positive."""
    try:
        ratio = math.exp((stat.logprob_new - stat.logprob_old) / stat.length)
    except OverflowError as exc:
        raise GspoError("importance ratio overflowed") from exc
    if not math.isfinite(ratio) or ratio <= 0.0:
        raise GspoError(f"non-finite importance ratio {ratio}")
    return ratio


def _check_group(group: list[RolloutStat], cfg: GroupConfig) -> None:
    if len(group) != cfg.group_size:
        raise GspoError(
            f"group has {len(group)} rollouts but config expects {cfg.group_size}"
        )
    if cfg.kl_coefficient > 0 and any(s.kl_estimate is None for s in group):
        raise GspoError("kl_estimate required on every rollout when beta > 0")


def gspo_objective(group: list[RolloutStat], cfg: GroupConfig) -> GspoResult:
    _check_group(group, cfg)
    advantages = group_advantages([s.reward for s in group], cfg.divide_by_std)
    low, high = 1.0 - cfg.clip, 1.0 + cfg.clip

    contributions = []
    diagnostics = []
    for stat, adv in zip(group, advantages):
        ratio = importance_ratio(stat)
        unclipped = ratio * adv
        clip_val = min(max(ratio, low), high) * adv
        contribution = min(unclipped, clip_val)
        clipped = clip_val < unclipped
        contributions.append(contribution)
        diagnostics.append(RolloutDiagnostics(adv, ratio, clipped))

    value = math.fsum(contributions) / len(group)
    if cfg.kl_coefficient > 0:
        kl_mean = math.fsum(s.kl_estimate for s in group) / len(group)
        value -= cfg.kl_coefficient * kl_mean
    return GspoResult(value, tuple(diagnostics))


def analytic_gradients(group: list[RolloutStat], cfg: GroupConfig) -> list[float]:
    """d value / d logprob_new_i for every rollout.

    Where the clip branch is strictly active the gradient is exactly
    zero; on the kink itself the unclipped-branch subgradient is
    reported.
    """
    _check_group(group, cfg)
    advantages = group_advantages([s.reward for s in group], cfg.divide_by_std)
    low, high = 1.0 - cfg.clip, 1.0 + cfg.clip
    grads = []
    for stat, adv in zip(group, advantages):
        ratio = importance_ratio(stat)
        unclipped = ratio * adv
        clip_val = min(max(ratio, low), high) * adv
        if adv == 0.0 or clip_val < unclipped:
            grads.append(0.0)
        else:
            grads.append(adv * ratio / stat.length / len(group))
    return grads


def _nudge_off_kink(stat: RolloutStat, cfg: GroupConfig, margin: float) -> RolloutStat:
    for bound in (1.0 - cfg.clip, 1.0 + cfg.clip):
        kink_lp = stat.logprob_old + stat.length * math.log(bound)
        offset = stat.logprob_new - kink_lp
        if abs(offset) < margin:
            direction = 1.0 if offset >= 0 else -1.0
            return replace(stat, logprob_new=kink_lp + direction * margin)
    return stat


def gradient_check(
    group: list[RolloutStat], cfg: GroupConfig, delta: float = 1e-5
) -> float:
    """Max relative error between analytic and central-difference grads."""
    if delta <= 0:
        raise GspoError("perturbation must be positive")
    margin = 8.0 * delta
    safe_group = [_nudge_off_kink(s, cfg, margin) for s in group]
    analytic = analytic_gradients(safe_group, cfg)

    worst = 0.0
    for i, stat in enumerate(safe_group):
        plus = list(safe_group)
        minus = list(safe_group)
        plus[i] = replace(stat, logprob_new=stat.logprob_new + delta)
        minus[i] = replace(stat, logprob_new=stat.logprob_new - delta)
        fd = (gspo_objective(plus, cfg).value - gspo_objective(minus, cfg).value) / (
            2.0 * delta
        )
        scale = max(abs(analytic[i]), abs(fd), 1e-8)
        worst = max(worst, abs(fd - analytic[i]) / scale)
    return worst


def gradient_sweep(
    group: list[RolloutStat], cfg: GroupConfig, deltas: list[float]
) -> list[tuple[float, float]]:
    """(delta, max relative error) pairs for a convergence study."""
    return [(delta, gradient_check(group, cfg, delta)) for delta in deltas]
