"""Model, training and I/O services behind the ecga commands."""
