"""Small shared helpers (keep stable, keep tested)."""
