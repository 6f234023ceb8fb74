"""The federated round loop."""

from __future__ import annotations

import logging
import math
import time
from collections.abc import Callable, Sequence
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from config.experiment import ExperimentConfig
from core import nn
from core.errors import ConfigError, DivergenceError, ShapeMismatchError
from core.models import (
    ClientPartition,
    ClientUpdate,
    Dataset,
    MlpShape,
    ParamVector,
    PcaTransform,
    RoundMetrics,
    ServerState,
)
from core.seeding import (
    children,
    client_seed,
    data_seed,
    int_seed,
    model_seed,
    sampling_seed,
    server_seed,
)
from data.datasets import IRIS_CSV, load_csv, make_blobs, sample_memory, split_public
from data.partition import dirichlet_partition, pilot_partition
from data.pca import pca_fit_transform
from federated.client import local_update
from federated.server import distill, distill_gap, ensemble_logits, fedavg_aggregate, refresh_memory

log = logging.getLogger(__name__)

RoundCallback = Callable[[ServerState, RoundMetrics], None]


@dataclass(frozen=True, eq=False)
class FederatedData:
    """Everything a run needs besides the model: splits and client ownership."""

    train: Dataset
    test: Dataset
    public: Dataset
    partition: ClientPartition
    shape: MlpShape
    pca: PcaTransform | None = None

    def client_data(self, client_id: int) -> Dataset:
        return self.train.subset(self.partition.assignments[client_id])


@dataclass
class ExperimentResult:
    metrics: list[RoundMetrics]
    final_state: ServerState
    initial_params: ParamVector
    data: FederatedData
    config: ExperimentConfig = field(repr=False)


# ── setup ────────────────────────────────────────────────────────────


def prepare_data(config: ExperimentConfig) -> FederatedData:
    """Load, reduce, split and partition the dataset described by ``config``."""
    cfg = config.data
    blob_seed, test_seed, public_seed, partition_seed = children(data_seed(config.master_seed), 4)

    if cfg.source == "csv":
        dataset = load_csv(cfg.csv_path or IRIS_CSV, has_header=cfg.has_header)
    else:
        b = cfg.blobs
        dataset = make_blobs(b.class_count, b.per_class_n, b.centers, b.std, blob_seed)

    pca: PcaTransform | None = None
    if cfg.pca and dataset.dim > 2:
        dataset, pca = pca_fit_transform(dataset)

    pool, test = split_public(dataset, cfg.test_fraction, test_seed)
    if cfg.public_csv is not None:
        public = load_csv(cfg.public_csv, has_header=cfg.has_header)
        if pca is not None:
            public = Dataset(
                features=pca.transform(public.features),
                labels=public.labels,
                class_count=public.class_count,
                class_names=public.class_names,
            )
        if public.dim != pool.dim:
            raise ShapeMismatchError(
                f"public set has {public.dim} features, training data has {pool.dim}"
            )
        train = pool
    else:
        train, public = split_public(pool, cfg.public_fraction, public_seed)

    if cfg.memory_size > public.n:
        raise ConfigError(
            f"data.memory_size: {cfg.memory_size} exceeds the public set size {public.n}"
        )

    if config.partition.kind == "pilot":
        if config.n_clients != train.class_count:
            raise ConfigError(
                f"n_clients: the pilot partition needs one client per class "
                f"({train.class_count}), got {config.n_clients}"
            )
        partition = pilot_partition(
            train.labels, train.class_count, config.partition.dominant_share
        )
    else:
        partition = dirichlet_partition(
            train, config.n_clients, config.partition.beta, partition_seed
        )

    shape = config.model.shape_for(train.dim, train.class_count)
    log.info(
        "Prepared data: %d train / %d public / %d test rows, %d clients, model %s",
        train.n,
        public.n,
        test.n,
        partition.n_clients,
        shape,
    )
    return FederatedData(
        train=train, test=test, public=public, partition=partition, shape=shape, pca=pca
    )


def initial_params(config: ExperimentConfig, shape: MlpShape) -> ParamVector:
    return nn.flatten(nn.mlp_init(shape, int_seed(model_seed(config.master_seed))))


# ── per-round building blocks ────────────────────────────────────────


def sample_clients(n_clients: int, sample_rate: float, round: int, master_seed: int) -> list[int]:
    """max(ceil(C * N), 1) distinct client ids, ascending."""
    if n_clients < 1:
        raise ValueError(f"n_clients must be >= 1, got {n_clients}")
    if not 0.0 < sample_rate <= 1.0:
        raise ValueError(f"sample_rate must be in (0, 1], got {sample_rate}")
    # the small slack keeps C*N products like 0.1*100 from rounding up
    m = max(math.ceil(sample_rate * n_clients - 1e-9), 1)
    if m >= n_clients:
        return list(range(n_clients))
    rng = np.random.default_rng(sampling_seed(master_seed, round))
    return sorted(int(i) for i in rng.choice(n_clients, size=m, replace=False))


def predict(params: ParamVector, shape: MlpShape, inputs: npt.ArrayLike) -> npt.NDArray[np.int64]:
    """Arg-max class; ties go to the lowest class id."""
    return np.argmax(nn.forward(nn.unflatten(shape, params), inputs), axis=1)


def evaluate(params: ParamVector, shape: MlpShape, test: Dataset) -> tuple[float, float]:
    """(accuracy, mean cross-entropy) on ``test``."""
    if test.n == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    model = nn.unflatten(shape, params)
    logits = nn.forward(model, test.features)
    accuracy = float(np.mean(np.argmax(logits, axis=1) == test.labels))
    logp = nn.log_softmax(logits)
    loss = float(-logp[np.arange(test.n), test.labels].mean())
    return accuracy, loss


def export_boundary_grid(
    params: ParamVector,
    shape: MlpShape,
    bounds: tuple[float, float, float, float],
    resolution: int,
) -> npt.NDArray[np.float64]:
    """``resolution**2`` rows of (x, y, predicted class), y-major."""
    if shape.input_dim != 2:
        raise ShapeMismatchError(
            f"boundary grids need a 2-D input model, got input dim {shape.input_dim}"
        )
    if resolution < 2:
        raise ValueError(f"resolution must be >= 2, got {resolution}")
    xmin, xmax, ymin, ymax = bounds
    xs = np.linspace(xmin, xmax, resolution)
    ys = np.linspace(ymin, ymax, resolution)
    gx, gy = np.meshgrid(xs, ys)
    points = np.column_stack([gx.ravel(), gy.ravel()])
    classes = predict(params, shape, points)
    return np.column_stack([points, classes.astype(np.float64)])


def data_bounds(data: Dataset, margin: float = 0.5) -> tuple[float, float, float, float]:
    lo = data.features.min(axis=0)
    hi = data.features.max(axis=0)
    return (
        float(lo[0] - margin),
        float(hi[0] + margin),
        float(lo[1] - margin),
        float(hi[1] + margin),
    )


def _mean_or_none(values: Sequence[float | None]) -> float | None:
    present = [v for v in values if v is not None]
    return float(np.mean(present)) if present else None


def _should_evaluate(config: ExperimentConfig, round_index: int) -> bool:
    finished = round_index + 1
    return finished % config.eval_every == 0 or finished == config.rounds


# ── the loop ─────────────────────────────────────────────────────────


def run_round(
    state: ServerState,
    config: ExperimentConfig,
    data: FederatedData,
    *,
    executor: Executor | None = None,
) -> tuple[ServerState, RoundMetrics]:
    """One round: local training, FedAvg, distillation, memory refresh."""
    t0 = time.monotonic()
    t = state.round
    shape = data.shape
    clients = sample_clients(config.n_clients, config.sample_rate, t, config.master_seed)
    log.debug("Round %d: clients %s", t, clients)
    evaluate_now = _should_evaluate(config, t)
    start_acc = evaluate(state.global_params, shape, data.test)[0] if evaluate_now else None

    def train_client(client_id: int) -> ClientUpdate:
        try:
            return local_update(
                state.global_params,
                shape,
                data.client_data(client_id),
                state.memory,
                config.local,
                client_seed(config.master_seed, t, client_id),
                client_id=client_id,
            )
        except DivergenceError as exc:
            raise exc.with_context(round=t, client_id=client_id) from exc

    if executor is None:
        updates = [train_client(cid) for cid in clients]
    else:
        updates = list(executor.map(train_client, clients))

    averaged = fedavg_aggregate([(u.params, u.sample_count) for u in updates])
    client_models = [nn.unflatten(shape, u.params) for u in updates]
    memory_seed, distill_seed = children(server_seed(config.master_seed, t), 2)

    global_params = averaged
    kd_pre: float | None = None
    kd_post: float | None = None
    if config.distill.enabled and config.distill.epochs > 0:
        teacher = ensemble_logits(client_models, data.public.features, executor=executor)
        temperature = config.distill.temperature
        kd_pre = distill_gap(averaged, shape, data.public, teacher, temperature)
        try:
            global_params = distill(
                averaged,
                client_models,
                data.public,
                config.distill,
                distill_seed,
                teacher_logits=teacher,
            )
        except DivergenceError as exc:
            raise exc.with_context(round=t) from exc
        kd_post = distill_gap(global_params, shape, data.public, teacher, temperature)

    memory = refresh_memory(
        client_models,
        data.public,
        sample_memory(data.public, config.data.memory_size, memory_seed),
        with_labels=config.local.labeled_public_gradient,
        executor=executor,
    )

    acc = loss = client_acc = None
    if evaluate_now:
        acc, loss = evaluate(global_params, shape, data.test)
        client_acc = float(np.mean([evaluate(u.params, shape, data.test)[0] for u in updates]))

    diagnostics = [u.diagnostics for u in updates]
    total_steps = sum(d.total_steps for d in diagnostics)
    metrics = RoundMetrics(
        round=t,
        acc=acc,
        loss=loss,
        start_acc=start_acc,
        client_acc=client_acc,
        local_loss=_mean_or_none([d.epoch_losses[-1] if d.epoch_losses else None for d in diagnostics]),
        l_mem_pre=_mean_or_none([d.l_mem_pre for d in diagnostics]),
        l_mem_post=_mean_or_none([d.l_mem_post for d in diagnostics]),
        proj_active_frac=(
            sum(d.active_steps for d in diagnostics) / total_steps if total_steps else 0.0
        ),
        kd_pre=kd_pre,
        kd_post=kd_post,
        clients=clients,
        seconds=time.monotonic() - t0,
    )
    new_state = ServerState(
        global_params=global_params,
        round=t + 1,
        memory=memory,
        averaged_params=averaged,
        client_params=tuple((u.client_id, u.params) for u in updates),
    )
    log.info(
        "Finished round %d | acc %s | clients %d | projected %.1f%% | %.2fs",
        t,
        f"{acc:.4f}" if acc is not None else "-",
        len(clients),
        100.0 * metrics.proj_active_frac,
        metrics.seconds,
    )
    return new_state, metrics


def run_experiment(
    config: ExperimentConfig,
    *,
    workers: int = 1,
    on_round: RoundCallback | None = None,
    data: FederatedData | None = None,
) -> ExperimentResult:
    """Run ``config.rounds`` rounds from a seeded initial model.

    Output depends only on ``config`` (including ``master_seed``), never on
    ``workers``.
    """
    data = data if data is not None else prepare_data(config)
    theta0 = initial_params(config, data.shape)
    state = ServerState(global_params=theta0)
    metrics: list[RoundMetrics] = []
    log.info(
        "Starting %s: %d rounds, %d clients, seed %d",
        config.method.value,
        config.rounds,
        config.n_clients,
        config.master_seed,
    )

    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for _ in range(config.rounds):
            state, round_metrics = run_round(state, config, data, executor=executor)
            metrics.append(round_metrics)
            if on_round is not None:
                on_round(state, round_metrics)
    finally:
        if executor is not None:
            executor.shutdown(wait=True)

    return ExperimentResult(
        metrics=metrics,
        final_state=state,
        initial_params=theta0,
        data=data,
        config=config,
    )
