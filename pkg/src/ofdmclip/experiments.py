"""Per-frame work for every experiment type.

Each factory returns a function of a frame generator producing
``{algorithm: (bit errors, data bits)}``, or ``{estimator: normalized
squared error}`` for the channel estimation curves.  Every algorithm of a
frame sees the same draws.
"""
from __future__ import annotations

from .chanest import ESTIMATORS, estimate_all, make_chanest_frame, perturbed_response, pilot_plan
from .engine import SearchParams
from .errors import ConfigError
from .link import OfdmConfig
from .ofdma import data_bits_per_user, make_ofdma_frame, multiuser_errors
from .pipeline import ALGORITHMS, make_frame, single_user_errors
from .simo import make_simo_frame, simo_errors

# algorithm names accepted per experiment, first entries are the defaults
CHOICES = {
    "ber_vs_ebn0": (("none", "oracle", "wpa", "plain"), ALGORITHMS),
    "ber_vs_p": (("wpa", "plain"), ALGORITHMS),
    "ber_vs_cr": (("none", "oracle", "wpa", "plain"), ALGORITHMS),
    "bootstrap": (("wpa", "wpa_ref", "wpa_est"), ALGORITHMS),
    "simo_cr": (("individual", "joint", "none"), ("individual", "joint", "none")),
    "multiuser_ebn0": (("none", "joint", "two_stage", "no_clipping"), ("none", "joint", "two_stage", "no_clipping")),
    "chanest_mse": (ESTIMATORS, ESTIMATORS),
    "chanest_error": (("wpa",), ALGORITHMS),
}

EXTRA_KEYS = {
    "simo_cr": {"L": 2, "engine": "wpa"},
    "multiuser_ebn0": {"P_u": 75, "stage2_mode": "plain"},
    "chanest_mse": {"Q": 16, "R": 16, "cpa_iterations": 1},
    "bootstrap": {"e_max": 5},
}


def default_algorithms(experiment: str) -> tuple:
    return CHOICES[experiment][0]


def check_algorithms(experiment: str, algorithms) -> tuple:
    allowed = CHOICES[experiment][1]
    bad = [a for a in algorithms if a not in allowed]
    if bad:
        raise ConfigError(f"unknown algorithm(s) {bad} for {experiment}; choose from {list(allowed)}")
    return tuple(algorithms)


def frame_function(setup, config: OfdmConfig, value):
    exp = setup.experiment
    extras = {**EXTRA_KEYS.get(exp, {}), **setup.extras}
    algs = setup.algorithms
    params = SearchParams()
    bits = config.bits_per_frame

    if exp in ("ber_vs_ebn0", "ber_vs_p", "ber_vs_cr", "bootstrap"):
        e_max = int(extras.get("e_max", 5))

        def fn(rng):
            errs = single_user_errors(make_frame(config, rng), config, algs, params, e_max=e_max)
            return {a: (e, bits) for a, e in errs.items()}
        return fn

    if exp == "chanest_error":
        var = float(value)
        if var < 0:
            raise ConfigError(f"error variance must be non-negative, got {var}")

        def fn(rng):
            fr = make_frame(config, rng)
            D_rx = perturbed_response(fr.chan.h, var, config.N, rng)
            errs = single_user_errors(fr, config, algs, params, D_rx=D_rx)
            return {a: (e, bits) for a, e in errs.items()}
        return fn

    if exp == "simo_cr":
        L = int(extras["L"])
        engine_alg = str(extras["engine"])
        if L < 1:
            raise ConfigError(f"antenna count must be positive, got {L}")

        def fn(rng):
            errs = simo_errors(make_simo_frame(config, L, rng), config, engine_alg, params)
            return {a: (errs[a], bits) for a in algs}
        return fn

    if exp == "multiuser_ebn0":
        P_u = int(extras["P_u"])
        mode = str(extras["stage2_mode"])
        nb = 2 * data_bits_per_user(config, 2, P_u)

        def fn(rng):
            errs = multiuser_errors(make_ofdma_frame(config, rng, P_u), params, mode)
            return {a: (errs[a], nb) for a in algs}
        return fn

    if exp == "chanest_mse":
        Q, R = int(extras["Q"]), int(extras["R"])
        plan = pilot_plan(config.N, Q, config.const, setup.seed)
        its = int(extras["cpa_iterations"])

        def fn(rng):
            est = estimate_all(make_chanest_frame(config, plan, rng), plan, config, R, its)
            return {a: 10 ** (est[a].mse_db / 10) for a in algs}
        return fn

    raise ConfigError(f"unknown experiment {exp!r}")
