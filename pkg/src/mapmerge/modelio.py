"""Serialization of learned models: alphabet, extraction parameters, the
prior pseudo-count matrix, observation model, and marginal view frequencies
travel together so they can never be mixed across alphabets."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .views import ExtractionParams, ViewAlphabet


@dataclass(frozen=True)
class PriorBundle:
    alphabet: ViewAlphabet
    alpha: np.ndarray
    obs_model: np.ndarray
    marginals: np.ndarray
    extraction: ExtractionParams
    counts: np.ndarray | None = None

    def __post_init__(self):
        nu = self.alphabet.nu
        for name in ("alpha", "obs_model"):
            arr = getattr(self, name)
            if arr.shape != (nu, nu):
                raise ValueError(f"{name} must be {nu}x{nu}")
        if self.marginals.shape != (nu,):
            raise ValueError("marginals must have length nu")


def dump_prior(bundle: PriorBundle) -> str:
    ex = bundle.extraction
    doc = {
        "nu": bundle.alphabet.nu,
        "alphabet": list(bundle.alphabet.entries),
        "alphabet_hash": bundle.alphabet.content_hash(),
        "alpha": bundle.alpha.tolist(),
        "observation_model": bundle.obs_model.tolist(),
        "marginals": bundle.marginals.tolist(),
        "extraction_params": {
            "gap_threshold": ex.gap_threshold,
            "max_range_margin": ex.max_range_margin,
            "corner_angle_threshold": ex.corner_angle_threshold,
            "line_fit_tolerance": ex.line_fit_tolerance,
            "min_group_beams": ex.min_group_beams,
        },
    }
    if bundle.counts is not None:
        doc["counts"] = np.asarray(bundle.counts).tolist()
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def load_prior(text: str) -> PriorBundle:
    doc = json.loads(text)
    alphabet = ViewAlphabet(tuple(doc["alphabet"]))
    if doc["alphabet_hash"] != alphabet.content_hash():
        raise ValueError("alphabet hash mismatch: corrupt or mixed model file")
    if doc["nu"] != alphabet.nu:
        raise ValueError("declared nu disagrees with the alphabet")
    counts = np.asarray(doc["counts"], dtype=np.int64) if "counts" in doc else None
    return PriorBundle(
        alphabet=alphabet,
        alpha=np.asarray(doc["alpha"], dtype=float),
        obs_model=np.asarray(doc["observation_model"], dtype=float),
        marginals=np.asarray(doc["marginals"], dtype=float),
        extraction=ExtractionParams(**doc["extraction_params"]),
        counts=counts,
    )
