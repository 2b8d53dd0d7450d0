import math
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Iterable, List, Optional, Sequence
import numpy as np
from app.schemas.CommandResponse import CommandResponse


class Utils:
    @classmethod
    def derive_seed(cls, seed: int, *keys: int) -> np.random.Generator:
        """
        Generator for a sub-task, independent of how many workers run the tasks.

        :param seed: Root seed of the run.
        :param keys: Path of the sub-task (row index, start index, attempt...).
        :return: A numpy Generator seeded from (seed, *keys).
        """
        return np.random.default_rng(np.random.SeedSequence([int(seed), *[int(k) for k in keys]]))

    @classmethod
    def _serialize_data(cls, data: Any) -> Any:
        """
        Recursively convert numpy and model values into JSON-safe Python values.

        :param data: The data to serialize.
        :return: Serialized data.
        """
        if hasattr(data, "to_payload"):
            return cls._serialize_data(data.to_payload())
        if hasattr(data, "model_dump"):
            return cls._serialize_data(data.model_dump(by_alias=True))
        if isinstance(data, np.ndarray):
            if np.iscomplexobj(data):
                return {"re": data.real.tolist(), "im": data.imag.tolist()}
            return data.tolist()
        if isinstance(data, (np.floating, float)):
            value = float(data)
            return value if math.isfinite(value) else None
        if isinstance(data, np.integer):
            return int(data)
        if isinstance(data, np.bool_):
            return bool(data)
        if isinstance(data, dict):
            return {str(key): cls._serialize_data(value) for key, value in data.items()}
        if isinstance(data, (list, tuple)):
            return [cls._serialize_data(item) for item in data]
        return data

    @classmethod
    def create_response(cls, data: Any, success: bool, error: Optional[str] = None) -> CommandResponse:
        """
        Create a CommandResponse with serialized data.

        :param data: Data to include in the response.
        :param success: Indicates whether the command's checks passed.
        :param error: Error message when the command failed.
        :return: An instance of CommandResponse.
        """
        return CommandResponse(
            data=cls._serialize_data(data),
            success=success,
            error=error or None,
        )

    @classmethod
    def format_float(cls, value: Optional[float]) -> str:
        """Shortest round-trip repr, empty for missing values."""
        if value is None:
            return ""
        return repr(float(value))

    @classmethod
    def chunks(cls, n: int, size: int) -> Iterable[slice]:
        for start in range(0, n, size):
            yield slice(start, min(n, start + size))

    @classmethod
    def map_ordered(cls, fn: Callable[[Any], Any], items: Sequence[Any], workers: int = 1) -> List[Any]:
        """
        Apply fn to every item, fanning out over threads when workers > 1.

        :param fn: Function of one item.
        :param items: Inputs; results come back in this order whatever the worker count.
        :param workers: Thread count.
        :return: List of results.
        """
        if workers <= 1 or len(items) <= 1:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=min(workers, len(items))) as executor:
            return list(executor.map(fn, items))

    @classmethod
    def sign_vertices(cls, n: int) -> np.ndarray:
        """Vertices of [-1, 1]^n modulo the global sign (first coordinate +1), as rows."""
        count = 1 << (n - 1)
        bits = (np.arange(count)[:, None] >> np.arange(n - 1)[None, :]) & 1
        return np.hstack([np.ones((count, 1)), 1.0 - 2.0 * bits])
