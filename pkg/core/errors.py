from __future__ import annotations


class FedProjError(Exception):
    """Base class for every error raised by the simulator."""


class ShapeMismatchError(FedProjError, ValueError):
    """Array dimensions disagree with a model shape or with each other."""


class DataError(FedProjError, ValueError):
    """A dataset could not be read, split or sampled."""

    def __init__(self, message: str, *, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class PartitionError(DataError):
    """No valid client partition could be drawn."""


class ConfigError(FedProjError, ValueError):
    """An experiment configuration failed to parse or validate."""


class DivergenceError(FedProjError, FloatingPointError):
    """Training produced a non-finite loss or parameter vector."""

    def __init__(
        self,
        message: str,
        *,
        round: int | None = None,
        client_id: int | None = None,
    ) -> None:
        self.round = round
        self.client_id = client_id
        self.detail = message
        super().__init__(self._render())

    def _render(self) -> str:
        where = []
        if self.round is not None:
            where.append(f"round {self.round}")
        if self.client_id is not None:
            where.append(f"client {self.client_id}")
        if not where:
            return self.detail
        return f"{', '.join(where)}: {self.detail}"

    def with_context(
        self, *, round: int | None = None, client_id: int | None = None
    ) -> DivergenceError:
        return DivergenceError(
            self.detail,
            round=self.round if round is None else round,
            client_id=self.client_id if client_id is None else client_id,
        )
