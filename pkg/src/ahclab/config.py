"""Plain-text (INI) run configuration with schema validation and defaults."""

from __future__ import annotations

import configparser
from pathlib import Path

from .errors import ConfigError


def _bool(raw: str) -> bool:
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _choice(*options):
    def parse(raw: str) -> str:
        v = raw.strip()
        if v not in options:
            raise ValueError(f"must be one of {options}, got {raw!r}")
        return v
    return parse


def _float_list(raw: str) -> list:
    return [float(tok) for tok in raw.split(",") if tok.strip()]


# section -> key -> (parser, default)
SCHEMA = {
    "paths": {
        "workers": (str, ""),
        "tasks": (str, ""),
        "scores": (str, ""),
        "scores_b": (str, ""),
        "cells": (str, ""),
        "indices": (str, ""),
        "crosswalk_ab": (str, ""),
        "crosswalk_bc": (str, ""),
        "employment": (str, ""),
        "external_dir": (str, ""),
        "cache": (str, ""),
        "instrument": (str, ""),
    },
    "index": {
        "variant": (_choice("importance_weighted", "raw_unweighted", "binary_median",
                            "substitution_displacement"), "importance_weighted"),
        "standardize": (_bool, True),
        "d_transform": (_choice("std", "log"), "std"),
        "occgroup_digits": (int, 1),
    },
    "d_proxy": {
        "w_formality": (float, 0.30),
        "w_education": (float, 0.25),
        "w_income": (float, 0.20),
        "w_largefirm": (float, 0.25),
    },
    "scoring": {
        "backend": (_choice("mock", "http"), "mock"),
        "seed": (int, 42),
        "target_mean": (float, 48.8),
        "target_sd": (float, 12.1),
        "endpoint": (str, ""),
        "auth_env": (str, "SCORER_API_KEY"),
        "model": (str, ""),
        "template_path": (str, ""),
        "parallelism": (int, 4),
        "max_retries": (int, 3),
    },
    "models": {
        "covariance": (_choice("HC1", "classical"), "HC1"),
        "weights_field": (str, ""),
        "quantile_taus": (_float_list, [0.10, 0.25, 0.50, 0.75, 0.90]),
        "instrument": (str, "capital_intensity"),
        "oaxaca_reference": (_choice("A", "B", "pooled"), "A"),
    },
    "simulation": {
        "n_workers": (int, 50_000),
        "n_occupations": (int, 60),
        "n_sectors": (int, 20),
        "formal_share": (float, 0.5),
        "phi_bar": (float, 3.0),
        "lambda": (float, 0.5),
        "sigma_f": (float, 0.5),
        "noise_sd": (float, 0.4),
        "heteroskedastic": (_bool, False),
        "missing_education_rate": (float, 0.0),
        "alpha": (float, 12.0),
        "beta1": (float, 0.09),
        "beta2_formal": (float, 0.05),
        "beta2_informal": (float, 0.0),
        "beta3": (float, -0.03),
        "gamma_educ": (float, 0.08),
        "gamma_exper": (float, 0.03),
        "gamma_exper2": (float, -0.0004),
        "gamma_female": (float, -0.15),
        "gamma_urban": (float, 0.05),
        "gamma_formal": (float, 0.35),
    },
}


def default_config() -> dict:
    return {section: {key: default for key, (_, default) in keys.items()}
            for section, keys in SCHEMA.items()}


def load_config(path=None) -> dict:
    """Load and validate a config file against the schema.

    Absent sections/keys take defaults; unknown sections, unknown keys, type
    mismatches, and constraint violations are all collected and reported in
    one ConfigError.
    """
    config = default_config()
    problems = []
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError([f"config file not found: {path}"])
        parser = configparser.ConfigParser()
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError([f"config parse error: {exc}"])
        for section in parser.sections():
            if section not in SCHEMA:
                problems.append(f"unknown section [{section}]")
                continue
            for key, raw in parser[section].items():
                if key not in SCHEMA[section]:
                    problems.append(f"unknown key {key!r} in [{section}]")
                    continue
                parse, _ = SCHEMA[section][key]
                try:
                    config[section][key] = parse(raw)
                except ValueError as exc:
                    problems.append(f"[{section}] {key}: {exc}")

    problems.extend(_validate(config))
    if problems:
        raise ConfigError(problems)
    return config


def _validate(config: dict) -> list:
    problems = []
    d = config["d_proxy"]
    total = d["w_formality"] + d["w_education"] + d["w_income"] + d["w_largefirm"]
    if abs(total - 1.0) > 1e-9:
        problems.append(f"[d_proxy] weights must sum to 1, got {total}")
    if any(v < 0 for v in (d["w_formality"], d["w_education"], d["w_income"], d["w_largefirm"])):
        problems.append("[d_proxy] weights must be >= 0")
    for tau in config["models"]["quantile_taus"]:
        if not 0 < tau < 1:
            problems.append(f"[models] quantile_taus: tau {tau} outside (0, 1)")
    sim = config["simulation"]
    if sim["phi_bar"] <= 1:
        problems.append("[simulation] phi_bar must be > 1")
    if not 0 < sim["sigma_f"] < 1:
        problems.append("[simulation] sigma_f must lie in (0, 1)")
    if not 0 < sim["formal_share"] < 1:
        problems.append("[simulation] formal_share must lie in (0, 1)")
    return problems


def d_proxy_weights(config: dict) -> tuple:
    d = config["d_proxy"]
    return (d["w_formality"], d["w_education"], d["w_income"], d["w_largefirm"])


def economy_params(config: dict, seed: int):
    """Build EconomyParams from the [simulation] section."""
    from .economy import EconomyParams

    sim = config["simulation"]
    true_beta = {
        "alpha": sim["alpha"],
        "beta1": sim["beta1"],
        "beta2_formal": sim["beta2_formal"],
        "beta2_informal": sim["beta2_informal"],
        "beta3": sim["beta3"],
        "educ": sim["gamma_educ"],
        "exper": sim["gamma_exper"],
        "exper2": sim["gamma_exper2"],
        "female": sim["gamma_female"],
        "urban": sim["gamma_urban"],
        "formal": sim["gamma_formal"],
    }
    return EconomyParams(
        phi_bar=sim["phi_bar"], lam=sim["lambda"], sigma_f=sim["sigma_f"],
        n_workers=sim["n_workers"], n_occupations=sim["n_occupations"],
        n_sectors=sim["n_sectors"], formal_share=sim["formal_share"],
        true_beta=true_beta, noise_sd=sim["noise_sd"],
        heteroskedastic=sim["heteroskedastic"],
        d_transform=config["index"]["d_transform"],
        missing_education_rate=sim["missing_education_rate"], seed=seed,
    )
