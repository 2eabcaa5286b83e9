"""
State evolution of GAMP detectors on mixed-resolution ADC banks.

The recursion tracks (A, D, E) of the effective scalar channel

    s = (D/E) x + (√A/E) z,    z ~ CN(0, 1),

and the estimate moments (v_x, c_x̂, v_x̂, v_xx̂). Output-side sums run per real
dimension in a frame scaled by √2, so quantization thresholds appear as √2·r
and every variance is in complex units:

    A = Σ_κ λ_κ Σ_r ∫Du Ψ·Θ²
    D = Σ_κ λ_κ Σ_r ∫Du Ψ'·Θ
    E = Σ_κ λ_κ Σ_r ∫Du Ψ·Θ'

Ψ is the probability of the cell of r given ϑ = (|v_xx̂|/√v_x̂)·u and Θ
the score the detector assigns to r given ϑ = √v_x̂·u. Full-precision
antennas use the closed forms of the Gaussian limit. The PQN score is linear
in u, so its sums reduce to Φ and φ at the cell edges; DQ sums and the QPSK
tanh moments run on a trapezoid rule sized to the sharpest feature in u.
"""

import math
from typing import List, Optional, Tuple

import numpy as np
import structlog

from ..models import (
    AdcSpec,
    Constellation,
    ConstellationKind,
    DenoiserKind,
    DetectorKind,
    InputDenoiser,
    MixedProfile,
    OutputChannel,
    OutputKind,
    SeConfig,
    SeIterate,
    SeMoments,
    SeParams,
    SeSolution,
)
from ..utils.exceptions import ConfigError, NumericalError
from ..utils.numerics import (
    NormalRule,
    gauss_hermite_rule,
    log_interval_mass,
    log_normal_pdf,
    q_function,
    trapezoid_normal_rule,
    truncated_normal_moments,
)
from .detectors import detector_components, make_input
from .quantizer import alphabet, cell_edges

logger = structlog.get_logger(__name__)

SQRT2 = math.sqrt(2.0)
MOMENT_SLACK = 1e-12
RESIDUAL_FLOOR = 1e-12
STALL_WINDOW = 10


def _scaled_cells(spec: AdcSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Levels and cell edges of ``spec`` in the √2-scaled frame, shape (L, 1)."""
    levels = alphabet(spec)
    low, high = cell_edges(levels, np.asarray(spec.delta), np.asarray(spec.half_levels))
    return (
        SQRT2 * levels[:, None],
        SQRT2 * low[:, None],
        SQRT2 * high[:, None],
    )


def _psi_geometry(moments: SeMoments, noise_variance: float) -> Tuple[float, float]:
    """Slope of ϑ in u and the conditional variance used by Ψ."""
    corr = abs(moments.v_xxhat)
    if moments.v_xhat > 0.0:
        slope = corr / math.sqrt(moments.v_xhat)
        variance = noise_variance + moments.v_x - corr**2 / moments.v_xhat
    else:
        slope = 0.0
        variance = noise_variance + moments.v_x
    if variance <= 0.0:
        raise NumericalError(
            "nonpositive effective variance in Ψ",
            variance=variance,
            v_xhat=moments.v_xhat,
            v_xxhat=corr,
        )
    return slope, variance


def _spread(moments: SeMoments) -> float:
    spread = moments.c_xhat - moments.v_xhat
    if spread < -MOMENT_SLACK:
        raise NumericalError(
            "c_xhat < v_xhat", c_xhat=moments.c_xhat, v_xhat=moments.v_xhat
        )
    return max(spread, 0.0)


def _psi_table(
    low: np.ndarray, high: np.ndarray, theta: np.ndarray, variance: float
) -> Tuple[np.ndarray, np.ndarray]:
    """Ψ(r|ϑ) and Ψ'(r|ϑ) = ∂Ψ/∂ϑ on a (levels × nodes) grid."""
    std = math.sqrt(variance)
    alpha = (low - theta) / std
    beta = (high - theta) / std
    psi = np.exp(log_interval_mass(alpha, beta))
    psi_prime = (np.exp(log_normal_pdf(alpha)) - np.exp(log_normal_pdf(beta))) / std
    return psi, psi_prime


def _pqn_denominator(output: OutputChannel, spec: AdcSpec, spread: float) -> float:
    den = output.gamma(spec) + spread
    if den <= 0.0:
        raise NumericalError("degenerate PQN denominator", denominator=den)
    return den


def _pqn_sums(
    levels: np.ndarray,
    low: np.ndarray,
    high: np.ndarray,
    slope: float,
    psi_var: float,
    v_xhat: float,
) -> Tuple[float, float]:
    """
    Σ_r ∫Du Ψ·(ℓ − √v_x̂ u)² and Σ_r ∫Du Ψ'·ℓ without quadrature.

    Ψ(r|c·u) is the chance that c·u plus N(0, psi_var) noise lands in the
    cell, and that sum is N(0, psi_var + c²). Conditioning u on it turns both
    integrals into Φ and φ at the cell edges divided by √(psi_var + c²).
    """
    scale = math.sqrt(psi_var + slope**2)
    rho = slope / scale
    levels, low, high = levels.ravel(), low.ravel(), high.ravel()
    tau_low, tau_high = low / scale, high / scale
    mass = np.exp(log_interval_mass(tau_low, tau_high))
    edge = np.exp(log_normal_pdf(tau_high)) - np.exp(log_normal_pdf(tau_low))
    cross = float(np.sum(levels * edge))
    square = float(np.sum(levels**2 * mass))
    square += 2.0 * math.sqrt(v_xhat) * rho * cross + v_xhat
    return max(square, 0.0), -cross / scale


def _dq_rule(
    slope: float, psi_var: float, v_xhat: float, variance: float
) -> NormalRule:
    """Trapezoid rule resolving both Ψ(r|c·u) and the DQ score in u."""
    widths = [math.inf]
    if slope > 0.0:
        widths.append(math.sqrt(psi_var) / slope)
    if v_xhat > 0.0:
        widths.append(math.sqrt(variance / v_xhat))
    return trapezoid_normal_rule(min(widths))


def _theta_table(
    spec: AdcSpec,
    levels: np.ndarray,
    low: np.ndarray,
    high: np.ndarray,
    theta: np.ndarray,
    output: OutputChannel,
    spread: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """Θ(r|ϑ) and Θ'(r|ϑ) = −∂Θ/∂ϑ on a (levels × nodes) grid."""
    if output.kind is OutputKind.PDQ or spec.is_infinite:
        den = _pqn_denominator(output, spec, spread)
        score = (levels - theta) / den
        return score, np.full_like(score, 1.0 / den)
    variance = output.noise_variance + spread
    if variance <= 0.0:
        raise NumericalError("degenerate DQ predictive variance", variance=variance)
    _, mean, t_var = truncated_normal_moments(theta, variance, low, high)
    return (mean - theta) / variance, (1.0 - t_var / variance) / variance


def _select_levels(
    spec: AdcSpec, psi: np.ndarray, cfg: SeConfig
) -> Optional[np.ndarray]:
    """Mask of levels kept for high-resolution quantizers; None keeps all."""
    if int(spec.bits) <= cfg.exact_level_bits:
        return None
    return np.any(psi >= cfg.level_mass_cutoff, axis=1)


def psi_eval(
    r: float,
    theta: np.ndarray,
    spec: AdcSpec,
    noise_variance: float,
    moments: SeMoments,
) -> np.ndarray:
    """Ψ(r|ϑ): probability of the cell of level ``r`` given ϑ."""
    if spec.is_infinite:
        raise ValueError("full-precision ADC has no cell probabilities")
    _, variance = _psi_geometry(moments, noise_variance)
    low, high = cell_edges(
        np.asarray(float(r)), np.asarray(spec.delta), np.asarray(spec.half_levels)
    )
    psi, _ = _psi_table(
        SQRT2 * low, SQRT2 * high, np.asarray(theta, dtype=float), variance
    )
    return psi


def theta_eval(
    r: float,
    theta: np.ndarray,
    spec: AdcSpec,
    output: OutputChannel,
    moments: SeMoments,
) -> Tuple[np.ndarray, np.ndarray]:
    """Θ(r|ϑ) and Θ'(r|ϑ) of the detector described by ``output``."""
    spread = _spread(moments)
    theta = np.asarray(theta, dtype=float)
    if spec.is_infinite:
        level = np.asarray(SQRT2 * r)
        low, high = np.asarray(-np.inf), np.asarray(np.inf)
    else:
        low, high = cell_edges(
            np.asarray(float(r)), np.asarray(spec.delta), np.asarray(spec.half_levels)
        )
        level, low, high = SQRT2 * np.asarray(float(r)), SQRT2 * low, SQRT2 * high
    return _theta_table(spec, level, low, high, theta, output, spread)


def output_parameters(
    moments: SeMoments,
    profile: MixedProfile,
    output: OutputChannel,
    cfg: SeConfig,
) -> SeParams:
    """(A, D, E) from the current moments; the output half of one SE step."""
    sigma2 = output.noise_variance
    slope, psi_var = _psi_geometry(moments, sigma2)
    spread = _spread(moments)
    v_xhat = max(moments.v_xhat, 0.0)

    A = D = E = 0.0
    for entry in profile.entries:
        if entry.load == 0.0:
            continue
        spec = entry.spec
        if spec.is_infinite:
            den = sigma2 + spread
            if den <= 0.0:
                raise NumericalError("degenerate full-precision denominator")
            error = sigma2 + moments.v_x - 2.0 * abs(moments.v_xxhat) + moments.v_xhat
            A += entry.load * error / den**2
            D += entry.load / den
            E += entry.load / den
            continue
        levels, low, high = _scaled_cells(spec)
        if output.kind is OutputKind.PDQ:
            den = _pqn_denominator(output, spec, spread)
            square, level_slope = _pqn_sums(levels, low, high, slope, psi_var, v_xhat)
            A += entry.load * square / den**2
            D += entry.load * level_slope / den
            E += entry.load / den
            continue
        rule = _dq_rule(slope, psi_var, v_xhat, sigma2 + spread)
        u = rule.nodes[None, :]
        psi, psi_prime = _psi_table(low, high, slope * u, psi_var)
        keep = _select_levels(spec, psi, cfg)
        if keep is not None:
            levels, low, high = levels[keep], low[keep], high[keep]
            psi, psi_prime = psi[keep], psi_prime[keep]
        score, score_prime = _theta_table(
            spec, levels, low, high, math.sqrt(v_xhat) * u, output, spread
        )
        A += entry.load * float(rule.expect(np.sum(psi * score**2, axis=0)))
        D += entry.load * float(rule.expect(np.sum(psi_prime * score, axis=0)))
        E += entry.load * float(rule.expect(np.sum(psi * score_prime, axis=0)))

    if not all(map(math.isfinite, (A, D, E))):
        raise NumericalError("non-finite SE parameters", A=A, D=D, E=E)
    return SeParams(A=max(A, 0.0), D=D, E=E)


def input_moments(
    params: SeParams,
    denoiser: InputDenoiser,
    prior: Constellation,
    cfg: SeConfig,
) -> SeMoments:
    """Estimate moments for the scalar channel; the input half of one SE step."""
    A, D, E = params.as_tuple()
    if E <= 0.0:
        raise NumericalError("SE parameter E must be positive", E=E)
    v_x = 1.0

    if denoiser.kind is DenoiserKind.GAUSSIAN:
        v_xxhat = D * v_x / (1.0 + E)
        v_xhat = (D**2 * v_x + A) / (1.0 + E) ** 2
        return SeMoments(
            v_x=v_x,
            c_xhat=v_xhat + 1.0 / (1.0 + E),
            v_xhat=v_xhat,
            v_xxhat=complex(v_xxhat),
        )

    if not prior.is_discrete:
        raise ConfigError("a discrete denoiser needs a discrete true input")
    if _separable_qpsk(denoiser, prior):
        return _tanh_moments(params)
    rule = gauss_hermite_rule(cfg.gauss_hermite_nodes)
    u1, u2 = np.meshgrid(rule.nodes, rule.nodes, indexing="ij")
    z = ((u1 + 1j * u2) / SQRT2).ravel()
    weights = np.outer(rule.weights, rule.weights).ravel()

    points = prior.symbols
    probs = prior.priors
    s = (D / E) * points[:, None] + (math.sqrt(A) / E) * z[None, :]
    mean, var = make_input(denoiser).posterior(s.ravel(), np.full(s.size, 1.0 / E))
    mean = mean.reshape(s.shape)
    var = var.reshape(s.shape)

    v_xxhat = complex(np.sum(probs * ((np.conj(points)[:, None] * mean) @ weights)))
    v_xhat = float(np.sum(probs * ((np.abs(mean) ** 2) @ weights)))
    c_xhat = v_xhat + float(np.sum(probs * (var @ weights)))
    if not all(map(math.isfinite, (v_xhat, c_xhat, v_xxhat.real, v_xxhat.imag))):
        raise NumericalError("non-finite SE moments", A=A, D=D, E=E)
    return SeMoments(v_x=v_x, c_xhat=c_xhat, v_xhat=v_xhat, v_xxhat=v_xxhat)


def _separable_qpsk(denoiser: InputDenoiser, prior: Constellation) -> bool:
    """QPSK on both sides splits into two antipodal real channels."""
    return (
        prior.kind is ConstellationKind.QPSK
        and denoiser.constellation is not None
        and denoiser.constellation.kind is ConstellationKind.QPSK
    )


def se_step_generic(
    moments: SeMoments,
    profile: MixedProfile,
    output: OutputChannel,
    denoiser: InputDenoiser,
    prior: Constellation,
    cfg: SeConfig,
) -> Tuple[SeParams, SeMoments]:
    """One SE iteration for any detector on any mixed profile."""
    params = output_parameters(moments, profile, output, cfg)
    return params, input_moments(params, denoiser, prior, cfg)


def _tanh_moments(params: SeParams) -> SeMoments:
    """∫Du tanh(√A u + D) and its square; the tanh step has width 1/√A in u."""
    gain = math.sqrt(params.A)
    rule = trapezoid_normal_rule(1.0 / gain if gain > 0.0 else math.inf)
    t = np.tanh(gain * rule.nodes + params.D)
    return SeMoments(
        v_x=1.0,
        c_xhat=1.0,
        v_xhat=float(rule.expect(t**2)),
        v_xxhat=complex(float(rule.expect(t))),
    )


def qpsk_closed_form_step(
    moments: SeMoments,
    profile: MixedProfile,
    noise_variance: float,
    detector: DetectorKind,
    cfg: SeConfig,
    pqn_variance: Optional[float] = None,
) -> Tuple[SeParams, SeMoments]:
    """
    Closed-form SE step for QPSK inputs.

    DQ:     A = Σλ ∫Du Σ_r (Ψ')²/Ψ,  D = E = A,
            v_x̂ = v_xx̂ = ∫Du tanh(√A u + D)
    PDQ:    PQN sums for (A, D, E),  v_xx̂ = ∫ tanh(√A u + D),  v_x̂ = ∫ tanh²
    Linear: PQN sums for (A, D, E),  rational Gaussian-prior moments
    """
    v_xhat = max(moments.v_xhat, 0.0)
    den_inf = noise_variance + 1.0 - moments.v_xhat

    if detector is DetectorKind.DQ:
        rule = _dq_rule(math.sqrt(v_xhat), den_inf, v_xhat, den_inf)
        theta = math.sqrt(v_xhat) * rule.nodes[None, :]
        A = 0.0
        for entry in profile.entries:
            if entry.spec.is_infinite:
                A += entry.load / den_inf
                continue
            _, low, high = _scaled_cells(entry.spec)
            psi, psi_prime = _psi_table(low, high, theta, den_inf)
            ratio = np.divide(
                psi_prime**2, psi, out=np.zeros_like(psi), where=psi > 0.0
            )
            A += entry.load * float(rule.expect(np.sum(ratio, axis=0)))
        params = SeParams(A=A, D=A, E=A)
        return params, _tanh_moments(params)

    A = D = E = 0.0
    slope, psi_var = _psi_geometry(moments, noise_variance)
    output = OutputChannel(
        kind=OutputKind.PDQ, noise_variance=noise_variance, pqn_variance=pqn_variance
    )
    for entry in profile.entries:
        den = output.gamma(entry.spec) + (moments.c_xhat - moments.v_xhat)
        E += entry.load / den
        if entry.spec.is_infinite:
            error = (
                noise_variance
                + moments.v_x
                - 2.0 * abs(moments.v_xxhat)
                + moments.v_xhat
            )
            A += entry.load * error / den**2
            D += entry.load / den
            continue
        square, level_slope = _pqn_sums(
            *_scaled_cells(entry.spec), slope, psi_var, v_xhat
        )
        A += entry.load * square / den**2
        D += entry.load * level_slope / den
    params = SeParams(A=A, D=D, E=E)
    if detector is DetectorKind.PDQ:
        return params, _tanh_moments(params)
    v_xhat = (D**2 + A) / (1.0 + E) ** 2
    return params, SeMoments(
        v_x=1.0,
        c_xhat=v_xhat + 1.0 / (1.0 + E),
        v_xhat=v_xhat,
        v_xxhat=complex(D / (1.0 + E)),
    )


def ber_qpsk(params: SeParams) -> float:
    """Q(D/√A) for Gray-mapped QPSK."""
    if params.A == 0.0:
        if params.D > 0.0:
            return 0.0
        raise NumericalError("BER undefined for A = 0 and D <= 0", D=params.D)
    if params.A < 0.0:
        raise NumericalError("negative A", A=params.A)
    return float(q_function(params.D / math.sqrt(params.A)))


def mse_from_se(moments: SeMoments) -> float:
    """v_x − 2Re v_xx̂ + v_x̂, with roundoff negatives clamped to 0."""
    mse = moments.v_x - 2.0 * moments.v_xxhat.real + moments.v_xhat
    if mse < -MOMENT_SLACK:
        raise NumericalError("inconsistent SE moments give negative MSE", mse=mse)
    return max(mse, 0.0)


def se_fixed_point(
    profile: MixedProfile,
    output: OutputChannel,
    denoiser: InputDenoiser,
    prior: Constellation,
    cfg: SeConfig,
) -> SeSolution:
    """
    Iterate p ← G(p) on (A, D, E) from the all-zero estimate until it settles.

    The start mirrors GAMP's x⁰ = 0, so the trajectory is comparable with the
    algorithm iteration by iteration. Convergence is judged on the undamped
    residual |G(p) − p| relative to |G(p)|. Damping steps up whenever the
    residual reverses direction on two successive iterations or fails to
    improve for ``STALL_WINDOW`` iterations: first to ``oscillation_damping``,
    then halving the undamped share each time, capped at ``max_damping``.
    Without convergence the iterate with the smallest residual is returned.
    """
    moments = SeMoments.initial()
    trajectory: List[SeIterate] = []
    previous: Optional[np.ndarray] = None
    steps: List[np.ndarray] = []
    damping = 0.0
    best: Optional[Tuple[float, SeIterate]] = None
    stalled = 0
    converged = False

    for iteration in range(1, cfg.max_iterations + 1):
        target = np.array(output_parameters(moments, profile, output, cfg).as_tuple())
        current = target
        if previous is not None:
            step = (target - previous) / np.maximum(np.abs(target), RESIDUAL_FLOOR)
            residual = float(np.max(np.abs(step)))
            if best is None or residual < best[0]:
                best = (residual, trajectory[-1])
                stalled = 0
            else:
                stalled += 1
            if residual < cfg.fixed_point_tol:
                converged = True
            else:
                steps = (steps + [step])[-3:]
                reversals = sum(
                    float(np.dot(a, b)) < 0.0 for a, b in zip(steps, steps[1:])
                )
                if reversals == 2 or stalled >= STALL_WINDOW:
                    damping = _escalate(damping, cfg)
                    steps, stalled = [], 0
                    logger.debug(
                        "se_damping_escalated", iteration=iteration, damping=damping
                    )
                current = previous + (1.0 - damping) * (target - previous)

        params = SeParams(*map(float, current))
        moments = input_moments(params, denoiser, prior, cfg)
        trajectory.append(
            SeIterate(
                iteration=iteration,
                params=params,
                moments=moments,
                mse=mse_from_se(moments),
            )
        )
        if converged:
            break
        previous = current

    final = trajectory[-1]
    if not converged:
        if best is not None:
            final = best[1]
        logger.warning(
            "se_not_converged",
            iterations=len(trajectory),
            residual=best[0] if best else None,
            damping=damping,
        )
    return SeSolution(
        params=final.params,
        moments=final.moments,
        iterations=len(trajectory),
        converged=converged,
        trajectory=tuple(trajectory),
    )


def _escalate(damping: float, cfg: SeConfig) -> float:
    if damping < cfg.oscillation_damping:
        return cfg.oscillation_damping
    return min(cfg.max_damping, 1.0 - 0.5 * (1.0 - damping))


def predict(
    detector: DetectorKind,
    constellation: Constellation,
    profile: MixedProfile,
    noise_variance: float,
    cfg: SeConfig,
    pqn_variance: Optional[float] = None,
) -> SeSolution:
    """SE fixed point of ``detector`` for the given input and profile."""
    kind, denoiser = detector_components(detector, constellation)
    output = OutputChannel(
        kind=kind, noise_variance=noise_variance, pqn_variance=pqn_variance
    )
    return se_fixed_point(profile, output, denoiser, constellation, cfg)
