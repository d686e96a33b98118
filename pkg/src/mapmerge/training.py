"""End-to-end prior training: simulate exploration of training maps, build
the view alphabet, fit the structural prior and the observation model, and
package everything into a PriorBundle."""

from __future__ import annotations

from . import dirichlet
from .modelio import PriorBundle
from .sim import WorldConfig, make_training_data
from .views import ExtractionParams, ViewAlphabet, learn_observation_model


def train_prior_bundle(maps, cfg: WorldConfig, params: ExtractionParams,
                       trajectories_per_map: int = 3, max_views: int = 16,
                       trajectory_length: float = 60.0,
                       alphabet: ViewAlphabet | None = None,
                       split_trajectories: bool = False,
                       obs_floor: float = 0.01) -> PriorBundle:
    td = make_training_data(maps, trajectories_per_map, cfg, params,
                            max_views=max_views,
                            trajectory_length=trajectory_length,
                            alphabet=alphabet,
                            split_trajectories=split_trajectories)
    alpha = dirichlet.map_estimate(td.counts)
    obs_model = learn_observation_model(td.confusion_pairs, td.alphabet.nu,
                                        floor=obs_floor)
    return PriorBundle(alphabet=td.alphabet, alpha=alpha, obs_model=obs_model,
                       marginals=td.marginals, extraction=params)
