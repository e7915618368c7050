"""Signal processing, training, tuning and evaluation services."""
