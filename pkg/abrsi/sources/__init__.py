from .fetch import ensure_dataset, fetch_dataset

__all__ = ["ensure_dataset", "fetch_dataset"]
