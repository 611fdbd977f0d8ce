"""
Version 1 (v1) of the API.

What to include:
- `routes/`: HTTP route handlers (`kg.py`).
- `dependencies.py`: shared FastAPI dependencies (the loaded `KgEngine`).
"""
