"""QP assembly for the DD-PC variants."""
