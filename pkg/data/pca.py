from __future__ import annotations

import numpy as np

from core.errors import DataError
from core.models import Dataset, PcaTransform

N_COMPONENTS = 2


def pca_fit(data: Dataset, n_components: int = N_COMPONENTS) -> PcaTransform:
    """Top principal directions of the sample covariance.

    Each component's sign is chosen so that its largest-magnitude entry is
    positive, which makes the transform deterministic.
    """
    if data.n < 2 or data.dim < n_components:
        raise DataError(
            f"PCA to {n_components}-D needs n >= 2 and d >= {n_components}, got n={data.n}, d={data.dim}"
        )
    mean = data.features.mean(axis=0)
    cov = np.cov(data.features - mean, rowvar=False, ddof=1)
    eigvals, eigvecs = np.linalg.eigh(np.atleast_2d(cov))
    order = np.argsort(eigvals)[::-1][:n_components]
    top_vals = np.clip(eigvals[order], 0.0, None)
    if top_vals[0] <= 1e-12 * max(1.0, float(np.abs(data.features).max())):
        raise DataError("degenerate data: zero variance in every direction")

    components = eigvecs[:, order].T.copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return PcaTransform(mean=mean, components=components, explained_variance=top_vals)


def pca_fit_transform(data: Dataset) -> tuple[Dataset, PcaTransform]:
    transform = pca_fit(data)
    reduced = Dataset(
        features=transform.transform(data.features),
        labels=data.labels,
        class_count=data.class_count,
        class_names=data.class_names,
    )
    return reduced, transform
