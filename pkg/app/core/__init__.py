"""
Core application infrastructure.

Contents:
- `events.py`: startup/shutdown handlers that load and release the knowledge store.
- `logging.py`: rich logging configuration shared by the CLI and the KG service.
- `exceptions.py`: the `HopSearchError` hierarchy raised by the services.
"""
