"""Experiment configuration: JSON with a published schema.

A config document fully determines an experiment up to execution details
(thread count, output location). parse/serialize round-trip through a
canonical form with every default materialized, and the canonical form
minus the output section is hashed into the id stamped on every artifact.

Family-dependent defaults (prior widths, observation noise, datasets)
cannot be expressed as JSON-schema defaults; they are applied in code and
documented in the schema's description strings. A chemical dataset left
null resolves to the noiseless trajectory observations of the default true
rates, so configs stay small and exactly reproducible.
"""

import copy
import hashlib
import json
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np
from jsonschema import Draft202012Validator
from jsonschema.exceptions import best_match

from .engine import AdaptationConfig, RunConfig, ScoutConfig
from .errors import ConfigError
from .kernels import make_kernel
from .targets import (
    ChemicalModel,
    generate_data,
    make_bimodal_target,
    make_chemical_target,
    make_gaussian_target,
)

__all__ = [
    "SCHEMA_VERSION",
    "CONFIG_SCHEMA",
    "ExperimentSpec",
    "SweepSpec",
    "BenchSpec",
    "GenerationSpec",
    "parse_config",
    "build_spec",
    "serialize_config",
    "config_hash",
]

SCHEMA_VERSION = 1

_POSITIVE = {"type": "number", "exclusiveMinimum": 0}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["target", "sampler", "kernel", "ensemble"],
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "target": {
            "type": "object",
            "additionalProperties": False,
            "required": ["family"],
            "properties": {
                "family": {"enum": ["gaussian", "bimodal", "chemical"]},
                "tau2": {
                    **_POSITIVE,
                    "description": "prior variance; defaults 0.01 (gaussian) "
                    "or 0.25 (bimodal); not a chemical parameter",
                },
                "sigma2": {
                    **_POSITIVE,
                    "description": "observation noise variance; defaults "
                    "0.01 (gaussian), 0.1 (bimodal), 225 (chemical)",
                },
                "data": {
                    "description": "scalar observation (gaussian: default "
                    "4.0; bimodal: default 2.0) or the chemical observation "
                    "vector (default null = noiseless default trajectory)",
                    "oneOf": [
                        {"type": "number"},
                        {"type": "array", "items": {"type": "number"}, "minItems": 1},
                        {"type": "null"},
                    ],
                },
                "k1": {**_POSITIVE, "description": "chemical only; default 100"},
                "k4": {**_POSITIVE, "description": "chemical only; default 1"},
                "obs_times": {
                    "type": "array",
                    "items": _POSITIVE,
                    "minItems": 1,
                    "description": "chemical only; default [2, 4, ..., 20]",
                },
                "prior_shape": {
                    **_POSITIVE,
                    "description": "chemical only; default 56.25",
                },
                "prior_rate": {
                    **_POSITIVE,
                    "description": "chemical only; default 0.75",
                },
            },
        },
        "sampler": {"enum": ["pais", "mh"]},
        "kernel": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind", "beta"],
            "properties": {
                "kind": {
                    "enum": [
                        "rw_gaussian",
                        "gamma_mean_centered",
                        "gamma_langevin",
                    ]
                },
                "beta": _POSITIVE,
                "covariance": {
                    "description": "rw_gaussian only; SPD matrix, default identity",
                    "oneOf": [
                        {
                            "type": "array",
                            "items": {
                                "type": "array",
                                "items": {"type": "number"},
                                "minItems": 1,
                            },
                            "minItems": 1,
                        },
                        {"type": "null"},
                    ],
                    "default": None,
                },
                "scouts": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "count": {"type": "integer", "minimum": 0, "default": 0},
                        "multiplier": {**_POSITIVE, "default": 10.0},
                    },
                    "default": {},
                },
            },
        },
        "ensemble": {
            "type": "object",
            "additionalProperties": False,
            "required": ["size", "iterations"],
            "properties": {
                "size": {"type": "integer", "minimum": 1},
                "iterations": {"type": "integer", "minimum": 0},
                "init": {
                    "description": "explicit initial states, (size x dim); "
                    "default null = draw from the prior",
                    "oneOf": [
                        {
                            "type": "array",
                            "items": {
                                "type": "array",
                                "items": {"type": "number"},
                                "minItems": 1,
                            },
                            "minItems": 1,
                        },
                        {"type": "null"},
                    ],
                    "default": None,
                },
            },
        },
        "resampler": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "scheme": {
                    "enum": ["etpf", "amr", "bootstrap"],
                    "default": "etpf",
                },
                "mode": {
                    "enum": ["deterministic", "stochastic"],
                    "default": "deterministic",
                },
                "pricing": {
                    "enum": ["block", "dantzig"],
                    "default": "block",
                    "description": "transport pivot pricing used inside runs",
                },
            },
            "default": {},
        },
        "adaptation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "enabled": {"type": "boolean", "default": False},
                "n0": {"type": "integer", "minimum": 1, "default": 50},
                "growth": {
                    "type": "number",
                    "exclusiveMinimum": 1,
                    "default": 1.5,
                },
                "beta_lo": {**_POSITIVE, "default": 1e-5},
                "beta_hi": {**_POSITIVE, "default": 2.0},
                "resolution": {**_POSITIVE, "default": 0.05},
                "overdispersion": {**_POSITIVE, "default": 1.1},
                "target_acceptance": {
                    "type": "number",
                    "exclusiveMinimum": 0,
                    "exclusiveMaximum": 1,
                    "default": 0.5,
                },
            },
            "default": {},
        },
        "sweep": {
            "description": "beta grid for the tune subcommand; null disables",
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "count": {"type": "integer", "minimum": 2, "default": 32},
                        "beta_lo": {**_POSITIVE, "default": 1e-5},
                        "beta_hi": {**_POSITIVE, "default": 2.0},
                        "iterations": {
                            "type": "integer",
                            "minimum": 1,
                            "default": 2500,
                        },
                        "repeats": {"type": "integer", "minimum": 1, "default": 4},
                    },
                },
                {"type": "null"},
            ],
            "default": None,
        },
        "bench": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "sizes": {
                    "type": "array",
                    "items": {"type": "integer", "minimum": 2},
                    "minItems": 1,
                    "default": [16, 64, 256],
                },
                "repeats": {"type": "integer", "minimum": 1, "default": 50},
            },
            "default": {},
        },
        "data_generation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "noise": {"type": "boolean", "default": True},
                "x_ref": {
                    "description": "true parameter for gaussian/bimodal data",
                    "oneOf": [{"type": "number"}, {"type": "null"}],
                    "default": None,
                },
                "true_k": {
                    "type": "array",
                    "items": _POSITIVE,
                    "minItems": 2,
                    "maxItems": 2,
                    "default": [50.0, 100.0],
                },
            },
            "default": {},
        },
        "repeats": {"type": "integer", "minimum": 1, "default": 1},
        "seed": {"type": "integer"},
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string", "minLength": 1, "default": "out"},
                "write_samples": {"type": "boolean", "default": True},
            },
            "default": {},
        },
    },
}

_FAMILY_DEFAULTS = {
    "gaussian": {"tau2": 0.01, "sigma2": 0.01, "data": 4.0},
    "bimodal": {"tau2": 0.25, "sigma2": 0.1, "data": 2.0},
    "chemical": {
        "sigma2": 225.0,
        "k1": 100.0,
        "k4": 1.0,
        "obs_times": [float(t) for t in range(2, 21, 2)],
        "prior_shape": 56.25,
        "prior_rate": 0.75,
        "data": None,
    },
}

_CHEMICAL_ONLY = ("k1", "k4", "obs_times", "prior_shape", "prior_rate")


@dataclass(frozen=True)
class SweepSpec:
    count: int
    beta_lo: float
    beta_hi: float
    iterations: int
    repeats: int

    def grid(self):
        return np.exp(
            np.linspace(np.log(self.beta_lo), np.log(self.beta_hi), self.count)
        )


@dataclass(frozen=True)
class BenchSpec:
    sizes: tuple
    repeats: int


@dataclass(frozen=True)
class GenerationSpec:
    noise: bool
    x_ref: Optional[float]
    true_k: tuple


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    sampler: str
    run_config: RunConfig
    repeats: int
    sweep: Optional[SweepSpec]
    bench: BenchSpec
    generation: GenerationSpec
    output_dir: str
    write_samples: bool
    seed: int
    canonical: dict
    config_hash: str


def _fill_defaults(node, schema):
    if not isinstance(schema, dict):
        return
    if "oneOf" in schema and isinstance(node, dict):
        for sub in schema["oneOf"]:
            if sub.get("type") == "object":
                _fill_defaults(node, sub)
        return
    if schema.get("type") != "object" or not isinstance(node, dict):
        return
    for key, sub in schema.get("properties", {}).items():
        if key not in node and "default" in sub:
            node[key] = copy.deepcopy(sub["default"])
        if key in node:
            _fill_defaults(node[key], sub)


def _schema_error(err):
    path = ".".join(str(p) for p in err.absolute_path)
    where = path if path else "<config root>"
    return ConfigError(f"{where}: {err.message}")


def _fail(path, message):
    raise ConfigError(f"{path}: {message}")


def _resolve_seed(raw, cli_seed, environ):
    if "seed" in raw:
        return int(raw["seed"])
    if cli_seed is not None:
        return int(cli_seed)
    value = environ.get("PAIS_SEED")
    if value is not None:
        try:
            return int(value)
        except ValueError:
            raise ConfigError(f"PAIS_SEED: not an integer: {value!r}")
    return 1


def _apply_family_defaults(target):
    family = target["family"]
    merged = dict(target)
    for key, value in _FAMILY_DEFAULTS[family].items():
        merged.setdefault(key, copy.deepcopy(value))
    if family != "chemical":
        for key in _CHEMICAL_ONLY:
            if key in target:
                _fail(f"target.{key}", "only valid for the chemical family")
        if merged["data"] is None or isinstance(merged["data"], list):
            _fail("target.data", f"the {family} family takes one scalar observation")
    else:
        if "tau2" in target:
            _fail("target.tau2", "not a chemical parameter")
        if isinstance(merged["data"], (int, float)):
            _fail("target.data", "the chemical family takes an observation array")
    return merged


def _build_target(tcfg):
    family = tcfg["family"]
    if family == "gaussian":
        return make_gaussian_target(tcfg["tau2"], tcfg["sigma2"], tcfg["data"])
    if family == "bimodal":
        return make_bimodal_target(tcfg["tau2"], tcfg["sigma2"], tcfg["data"])
    times = tuple(float(t) for t in tcfg["obs_times"])
    if any(b <= a for a, b in zip(times, times[1:])):
        _fail("target.obs_times", "must be strictly increasing")
    data = tcfg["data"]
    if data is None:
        data = generate_data(
            "chemical",
            true_k=(50.0, 100.0),
            k1=tcfg["k1"],
            k4=tcfg["k4"],
            sigma2=tcfg["sigma2"],
            obs_times=times,
            noise=False,
        )
    data = tuple(float(v) for v in np.asarray(data).ravel())
    if len(data) != len(times):
        _fail("target.data", f"{len(data)} observations for {len(times)} times")
    model = ChemicalModel(
        k1=tcfg["k1"],
        k4=tcfg["k4"],
        sigma2=tcfg["sigma2"],
        obs_times=times,
        data=data,
        alpha0=tcfg["prior_shape"],
        beta0=tcfg["prior_rate"],
    )
    return make_chemical_target(model)


def build_spec(raw, *, cli_seed=None, out_override=None, threads=1,
               environ=None):
    """Validate a raw config dict and assemble the runnable experiment."""
    if not isinstance(raw, dict):
        raise ConfigError("<config root>: expected a JSON object")
    doc = copy.deepcopy(raw)
    _fill_defaults(doc, CONFIG_SCHEMA)
    err = best_match(Draft202012Validator(CONFIG_SCHEMA).iter_errors(doc))
    if err is not None:
        raise _schema_error(err)
    doc["seed"] = _resolve_seed(
        doc, cli_seed, environ if environ is not None else os.environ
    )
    if out_override is not None:
        doc["output"]["directory"] = out_override

    tcfg = _apply_family_defaults(doc["target"])
    doc["target"] = tcfg
    sampler = doc["sampler"]
    kcfg = doc["kernel"]
    if kcfg["kind"] != "rw_gaussian":
        if kcfg["covariance"] is not None:
            _fail("kernel.covariance", "only the rw_gaussian kind takes one")
        if tcfg["family"] != "chemical":
            _fail(
                "kernel.kind",
                "gamma kernels need a positive-support target (chemical)",
            )
    if sampler == "mh" and kcfg["scouts"]["count"] > 0:
        _fail("kernel.scouts.count", "MH baselines do not take scout slots")

    doc.setdefault("name", f"{tcfg['family']}-{sampler}")

    target = _build_target(tcfg)
    covariance = kcfg["covariance"]
    if covariance is not None:
        covariance = np.asarray(covariance, dtype=float)
        if covariance.shape != (target.dim, target.dim):
            _fail(
                "kernel.covariance",
                f"expected {target.dim}x{target.dim} for this target",
            )
    try:
        kernel = make_kernel(kcfg["kind"], kcfg["beta"], covariance=covariance)
    except Exception as exc:
        _fail("kernel", str(exc))

    ecfg = doc["ensemble"]
    init = ecfg["init"]
    if init is not None:
        init = np.asarray(init, dtype=float)
        if init.shape != (ecfg["size"], target.dim):
            _fail(
                "ensemble.init",
                f"expected shape ({ecfg['size']}, {target.dim}), got {init.shape}",
            )
    acfg = doc["adaptation"]
    if not acfg["beta_lo"] < acfg["beta_hi"]:
        _fail("adaptation.beta_lo", "must be below adaptation.beta_hi")
    scfg = doc["sweep"]
    if scfg is not None and not scfg["beta_lo"] <= scfg["beta_hi"]:
        _fail("sweep.beta_lo", "must not exceed sweep.beta_hi")

    try:
        run_config = RunConfig(
            target=target,
            kernel=kernel,
            ensemble_size=ecfg["size"],
            iterations=ecfg["iterations"],
            resampler=doc["resampler"]["scheme"],
            resampler_mode=doc["resampler"]["mode"],
            pricing=doc["resampler"]["pricing"],
            scouts=ScoutConfig(
                count=kcfg["scouts"]["count"],
                multiplier=kcfg["scouts"]["multiplier"],
            ),
            adaptation=AdaptationConfig(
                enabled=acfg["enabled"],
                n0=acfg["n0"],
                growth=acfg["growth"],
                beta_lo=acfg["beta_lo"],
                beta_hi=acfg["beta_hi"],
                resolution=acfg["resolution"],
                overdispersion=acfg["overdispersion"],
                target_acceptance=acfg["target_acceptance"],
            ),
            seed=doc["seed"],
            init_states=init,
            threads=threads,
        )
    except Exception as exc:
        raise ConfigError(str(exc))

    sweep = None
    if scfg is not None:
        sweep = SweepSpec(
            count=scfg["count"],
            beta_lo=scfg["beta_lo"],
            beta_hi=scfg["beta_hi"],
            iterations=scfg["iterations"],
            repeats=scfg["repeats"],
        )
    bcfg = doc["bench"]
    gcfg = doc["data_generation"]
    canonical = _canonical_dict(doc)
    return ExperimentSpec(
        name=doc["name"],
        sampler=sampler,
        run_config=run_config,
        repeats=doc["repeats"],
        sweep=sweep,
        bench=BenchSpec(sizes=tuple(bcfg["sizes"]), repeats=bcfg["repeats"]),
        generation=GenerationSpec(
            noise=gcfg["noise"],
            x_ref=gcfg["x_ref"],
            true_k=tuple(gcfg["true_k"]),
        ),
        output_dir=doc["output"]["directory"],
        write_samples=doc["output"]["write_samples"],
        seed=doc["seed"],
        canonical=canonical,
        config_hash=config_hash(canonical),
    )


def _canonical_dict(doc):
    # json round-trip turns tuples/numpy scalars into plain json types
    return json.loads(json.dumps(doc, sort_keys=True))


def config_hash(canonical):
    """Hash of the science-relevant config: output location excluded so a
    rerun into another directory produces byte-identical artifacts."""
    hashed = {k: v for k, v in canonical.items() if k != "output"}
    text = json.dumps(hashed, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def serialize_config(spec):
    """Canonical JSON text; parsing it again yields an identical spec."""
    return json.dumps(spec.canonical, indent=2, sort_keys=True) + "\n"


def parse_config(path, *, cli_seed=None, out_override=None, threads=1,
                 environ=None):
    """Load, validate and resolve a config file into an ExperimentSpec."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}")
    return build_spec(
        raw,
        cli_seed=cli_seed,
        out_override=out_override,
        threads=threads,
        environ=environ,
    )
