from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import Optional

from contagion_lab.balance_sheets import BankPopulation, load_population, write_population
from contagion_lab.common import parallel_map, read_json, safe_mkdir, write_json
from contagion_lab.errors import SchemaError
from contagion_lab.topology import (
    DEFAULT_ENSEMBLE_SIZE,
    DensityStats,
    FitnessCalibration,
    calibrate_z,
    density_stats,
    sample_ensemble,
)
from contagion_lab.weights import (
    DEFAULT_INCREMENT,
    DEFAULT_MAX_SWEEPS,
    WeightedNetwork,
    assign_weights,
    read_weighted_network,
    write_weighted_network,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
MANIFEST_NAME = "manifest.json"
POPULATION_NAME = "population.csv"


def member_filename(index: int) -> str:
    return f"member_{index:03d}.csv"


@dataclass(frozen=True)
class EnsembleBundle:
    """A calibrated, weighted ensemble together with the balance sheets it was built from."""

    population: BankPopulation
    calibration: FitnessCalibration
    networks: tuple[WeightedNetwork, ...]
    master_seed: int
    increment: float = DEFAULT_INCREMENT
    max_sweeps: int = DEFAULT_MAX_SWEEPS

    def __len__(self) -> int:
        return len(self.networks)

    @property
    def density(self) -> DensityStats:
        return density_stats([net.topology.edge_count for net in self.networks])


def estimate_ensemble(
    population: BankPopulation,
    target_edges: float,
    size: int = DEFAULT_ENSEMBLE_SIZE,
    master_seed: int = 0,
    increment: float = DEFAULT_INCREMENT,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
    jobs: Optional[int] = None,
) -> EnsembleBundle:
    "Calibrate z, sample `size` topologies and weight each one."
    calibration = calibrate_z(population, target_edges)
    topologies = sample_ensemble(calibration, size=size, master_seed=master_seed, jobs=jobs)
    weigh = partial(
        assign_weights, population=population, increment=increment, max_sweeps=max_sweeps
    )
    networks = parallel_map(weigh, topologies.members, jobs)
    return EnsembleBundle(
        population=population,
        calibration=calibration,
        networks=tuple(networks),
        master_seed=master_seed,
        increment=increment,
        max_sweeps=max_sweeps,
    )


def write_ensemble(bundle: EnsembleBundle, directory: str | os.PathLike[str]) -> Path:
    """
    Lay out an ensemble directory: the population, one weighted edge list
    per member and `manifest.json`. Returns the manifest path.
    """
    directory = safe_mkdir(directory)
    write_population(bundle.population, directory / POPULATION_NAME)

    members = []
    for index, network in enumerate(bundle.networks):
        name = member_filename(index)
        write_weighted_network(network, directory / name)
        members.append(
            {
                "index": index,
                "seed": network.topology.seed,
                "edges": network.topology.edge_count,
                "sweeps": network.sweeps,
                "file": name,
            }
        )

    # "K" and "target_edges" both hold the target edge count
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "z": bundle.calibration.z,
        "K": bundle.calibration.target_edges,
        "target_edges": bundle.calibration.target_edges,
        "achieved_expected_edges": bundle.calibration.achieved_expected_edges,
        "size": len(bundle.networks),
        "master_seed": bundle.master_seed,
        "increment": bundle.increment,
        "max_sweeps": bundle.max_sweeps,
        "population": POPULATION_NAME,
        "density_stats": bundle.density.as_dict(),
        "members": members,
    }
    path = directory / MANIFEST_NAME
    write_json(path, manifest)
    logger.info("wrote %d members to %s", len(members), directory)
    return path


def read_ensemble(directory: str | os.PathLike[str]) -> EnsembleBundle:
    directory = Path(directory)
    if not directory.is_dir():
        msg = f"ensemble directory not found: {directory}"
        raise FileNotFoundError(msg)
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.is_file():
        msg = f"ensemble manifest not found: {manifest_path}"
        raise FileNotFoundError(msg)

    manifest = read_json(manifest_path)
    version = manifest.get("schema_version")
    if version != SCHEMA_VERSION:
        msg = f"unsupported manifest schema_version {version!r}, expected {SCHEMA_VERSION}"
        raise SchemaError(msg)

    try:
        population = load_population(directory / manifest["population"])
        increment = float(manifest["increment"])
        networks = tuple(
            read_weighted_network(
                directory / member["file"],
                population,
                increment=increment,
                seed=int(member["seed"]),
                sweeps=int(member.get("sweeps", 0)),
            )
            for member in manifest["members"]
        )
        calibration = FitnessCalibration(
            z=float(manifest["z"]),
            fitness_proxy=tuple(float(y) for y in population.total_assets),
            target_edges=float(manifest["target_edges"]),
            achieved_expected_edges=float(manifest["achieved_expected_edges"]),
        )
        bundle = EnsembleBundle(
            population=population,
            calibration=calibration,
            networks=networks,
            master_seed=int(manifest["master_seed"]),
            increment=increment,
            max_sweeps=int(manifest["max_sweeps"]),
        )
        size = int(manifest["size"])
    except KeyError as e:
        msg = f"{manifest_path}: missing key {e.args[0]!r}"
        raise SchemaError(msg) from None
    except (TypeError, ValueError) as e:
        msg = f"{manifest_path}: malformed manifest ({e})"
        raise SchemaError(msg) from None

    if len(bundle) != size:
        msg = f"manifest lists size {size} but {len(bundle)} members"
        raise SchemaError(msg)
    return bundle